//! Poses, headings and the discrete action set.
//!
//! World frame: `x` runs along grid columns and `y` along grid rows, so `y`
//! grows "downward" when the grid is drawn row by row. Headings are degrees
//! measured from +x toward +y, which makes them clockwise on screen: a right
//! turn adds 30°, a left turn subtracts it.
//!
//! Relative bearings returned by [`Pose::bearing_to`] use the same sense:
//! positive means the target is to the agent's right, negative to its left.

use serde::{Deserialize, Serialize};

/// Distance covered by one `Forward` action, in meters.
pub const FORWARD_STEP_M: f64 = 0.25;
/// Rotation applied by one turn action, in degrees.
pub const TURN_STEP_DEG: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Pose {
            x,
            y,
            heading: normalize_heading(heading),
        }
    }

    pub fn distance_to(&self, x: f64, y: f64) -> f64 {
        (self.x - x).hypot(self.y - y)
    }

    pub fn distance(&self, other: &Pose) -> f64 {
        self.distance_to(other.x, other.y)
    }

    /// Signed angle from the current heading to the point, in `(-180, 180]`.
    /// Positive is clockwise (to the right).
    pub fn bearing_to(&self, x: f64, y: f64) -> f64 {
        let target = (y - self.y).atan2(x - self.x).to_degrees();
        wrap_signed(target - self.heading)
    }

    /// Absolute heading pointing from this pose to the point.
    pub fn heading_towards(&self, x: f64, y: f64) -> f64 {
        normalize_heading((y - self.y).atan2(x - self.x).to_degrees())
    }

    pub fn forward_target(&self) -> (f64, f64) {
        let rad = self.heading.to_radians();
        (
            self.x + FORWARD_STEP_M * rad.cos(),
            self.y + FORWARD_STEP_M * rad.sin(),
        )
    }
}

/// Normalizes degrees into `[0, 360)`.
pub fn normalize_heading(deg: f64) -> f64 {
    let h = deg.rem_euclid(360.0);
    // rem_euclid can return 360.0 for tiny negative inputs
    if h >= 360.0 {
        0.0
    } else {
        h
    }
}

/// Wraps degrees into `(-180, 180]`.
pub fn wrap_signed(deg: f64) -> f64 {
    let h = normalize_heading(deg);
    if h > 180.0 {
        h - 360.0
    } else {
        h
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MoveAction {
    Forward,
    TurnLeft,
    TurnRight,
    Stop,
}

impl MoveAction {
    pub const ALL: [MoveAction; 4] = [
        MoveAction::Forward,
        MoveAction::TurnLeft,
        MoveAction::TurnRight,
        MoveAction::Stop,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            MoveAction::Forward => "forward",
            MoveAction::TurnLeft => "turn_left",
            MoveAction::TurnRight => "turn_right",
            MoveAction::Stop => "stop",
        }
    }

    /// Lenient parse used by the response grammar: accepts `forward`,
    /// `move forward`, `turn_left`, `left`, `stop`, etc.
    pub fn parse_loose(text: &str) -> Option<MoveAction> {
        let norm: String = text
            .trim()
            .to_ascii_lowercase()
            .chars()
            .map(|c| if c == '_' || c == '-' { ' ' } else { c })
            .filter(|c| c.is_ascii_alphanumeric() || *c == ' ')
            .collect();
        let words: Vec<&str> = norm.split_whitespace().collect();
        match words.as_slice() {
            ["forward", ..] | ["move", "forward", ..] | ["go", "forward", ..] => {
                Some(MoveAction::Forward)
            }
            ["turn", "left", ..] | ["left", ..] | ["turnleft", ..] => Some(MoveAction::TurnLeft),
            ["turn", "right", ..] | ["right", ..] | ["turnright", ..] => {
                Some(MoveAction::TurnRight)
            }
            ["stop", ..] => Some(MoveAction::Stop),
            _ => None,
        }
    }
}

impl std::fmt::Display for MoveAction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn heading_normalization() {
        assert_eq!(normalize_heading(-30.0), 330.0);
        assert_eq!(normalize_heading(360.0), 0.0);
        assert_eq!(normalize_heading(725.0), 5.0);
        assert_eq!(wrap_signed(190.0), -170.0);
        assert_eq!(wrap_signed(180.0), 180.0);
        assert_eq!(wrap_signed(-180.0), 180.0);
    }

    #[test]
    fn bearing_sign_convention() {
        let p = Pose::new(0.0, 0.0, 0.0);
        assert!(p.bearing_to(1.0, 0.0).abs() < 1e-12);
        // +y is clockwise from +x, i.e. to the right
        assert!((p.bearing_to(0.0, 1.0) - 90.0).abs() < 1e-12);
        assert!((p.bearing_to(0.0, -1.0) + 90.0).abs() < 1e-12);
        assert!((p.bearing_to(-1.0, 0.0) - 180.0).abs() < 1e-12);
    }

    #[test]
    fn loose_action_parse() {
        assert_eq!(MoveAction::parse_loose("Forward"), Some(MoveAction::Forward));
        assert_eq!(MoveAction::parse_loose(" move_forward."), Some(MoveAction::Forward));
        assert_eq!(MoveAction::parse_loose("TURN-LEFT"), Some(MoveAction::TurnLeft));
        assert_eq!(MoveAction::parse_loose("right"), Some(MoveAction::TurnRight));
        assert_eq!(MoveAction::parse_loose("stop"), Some(MoveAction::Stop));
        assert_eq!(MoveAction::parse_loose("jump"), None);
        assert_eq!(MoveAction::parse_loose(""), None);
    }
}
