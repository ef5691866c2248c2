//! Newline-delimited JSON messages exchanged with external policies.

use serde::{Deserialize, Serialize};

use crate::geometry::{MoveAction, Pose};
use crate::reward::{parse_response, AgentResponse, ToolCall};
use crate::retrieval::{Channel, RetrievalResult};
use crate::sim::View;
use crate::task::{AnswerFormat, QuestionType};

use super::PolicyError;

pub const WIRE_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RequestKind {
    Step,
    Qa,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubtaskInfo {
    pub index: usize,
    pub goal_tag: String,
    pub descriptor: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontierInfo {
    pub id: u32,
    /// Relative bearing from the agent, degrees, positive to the right.
    pub bearing: f64,
    pub distance: f64,
    pub nav_point: Pose,
    pub cell_count: usize,
    pub snapshot: View,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionInfo {
    pub index: usize,
    pub question: String,
    pub qtype: QuestionType,
    pub format: AnswerFormat,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub choices: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryInfo {
    pub index: usize,
    pub caption: String,
    pub pose: Pose,
    pub score: f64,
    pub channel: Channel,
    pub tags: Vec<crate::sim::VisibleObject>,
}

impl MemoryInfo {
    pub fn from_result(r: &RetrievalResult) -> Vec<MemoryInfo> {
        r.entries
            .iter()
            .map(|m| MemoryInfo {
                index: m.entry.index,
                caption: m.entry.caption.clone(),
                pose: m.entry.pose,
                score: m.score,
                channel: m.channel,
                tags: m.entry.tags.clone(),
            })
            .collect()
    }
}

/// Everything a policy sees for one decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRequest {
    pub v: u32,
    #[serde(rename = "type")]
    pub kind: RequestKind,
    pub instruction: String,
    pub step: usize,
    pub pose: Pose,
    pub subtask: SubtaskInfo,
    pub views: Vec<View>,
    pub frontiers: Vec<FrontierInfo>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub question: Option<QuestionInfo>,
    /// Only present in the round that follows a tool call.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub memories: Option<Vec<MemoryInfo>>,
    /// Failure reason when the preceding tool call could not be served.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_error: Option<String>,
    pub budget: usize,
}

impl StepRequest {
    pub fn is_second_round(&self) -> bool {
        self.memories.is_some() || self.tool_error.is_some()
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("request serializes")
    }
}

/// A response line from an external policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum WireResponse {
    Act {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        action: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        frontier: Option<u32>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        answer: Option<String>,
        /// Free-form model output; parsed with the response grammar when set.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        raw: Option<String>,
    },
    ToolCall {
        query: String,
    },
    Error {
        message: String,
    },
}

impl WireResponse {
    pub fn parse_line(line: &str) -> Result<WireResponse, PolicyError> {
        let value: serde_json::Value =
            serde_json::from_str(line).map_err(|e| PolicyError::Malformed(e.to_string()))?;
        if let Some(v) = value.get("v") {
            if v.as_u64() != Some(WIRE_VERSION as u64) {
                return Err(PolicyError::Malformed(format!("unsupported version {v}")));
            }
        }
        serde_json::from_value(value).map_err(|e| PolicyError::Malformed(e.to_string()))
    }

    pub fn into_agent_response(self) -> Result<AgentResponse, PolicyError> {
        match self {
            WireResponse::Act { raw: Some(raw), .. } => Ok(parse_response(&raw)),
            WireResponse::Act {
                action,
                frontier,
                answer,
                raw: None,
            } => {
                let parsed = match &action {
                    Some(a) => Some(
                        MoveAction::parse_loose(a)
                            .ok_or_else(|| PolicyError::Malformed(format!("unknown action `{a}`")))?,
                    ),
                    None => None,
                };
                let text = AgentResponse::render(parsed, frontier, answer.as_deref());
                Ok(parse_response(&text))
            }
            WireResponse::ToolCall { query } => Ok(AgentResponse {
                raw: AgentResponse::tool_call_text(&query),
                tool_call: Some(ToolCall { query }),
                ..Default::default()
            }),
            WireResponse::Error { message } => Err(PolicyError::Client(message)),
        }
    }

    pub fn from_agent_response(resp: &AgentResponse) -> WireResponse {
        match &resp.tool_call {
            Some(call) => WireResponse::ToolCall {
                query: call.query.clone(),
            },
            None => WireResponse::Act {
                action: resp.action.map(|a| a.as_str().to_string()),
                frontier: resp.frontier_id,
                answer: resp.answer.clone(),
                raw: None,
            },
        }
    }
}


#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::sim::VisibleObject;

    pub(crate) fn sample_request() -> StepRequest {
        let obj = VisibleObject {
            tag: "sofa".into(),
            distance: 2.123456789012345,
            bearing: -17.25,
            region: "living room".into(),
            color: Some("red".into()),
            state: None,
        };
        StepRequest {
            v: WIRE_VERSION,
            kind: RequestKind::Step,
            instruction: "find the sofa, then the fridge".into(),
            step: 7,
            pose: Pose::new(1.1, 2.2, 330.0),
            subtask: SubtaskInfo {
                index: 0,
                goal_tag: "sofa".into(),
                descriptor: "the red sofa".into(),
            },
            views: vec![
                View { relative_heading: -60.0, visible: vec![] },
                View { relative_heading: 0.0, visible: vec![obj.clone()] },
                View { relative_heading: 60.0, visible: vec![] },
            ],
            frontiers: vec![FrontierInfo {
                id: 3,
                bearing: 0.1 + 0.2,
                distance: 1.0 / 3.0,
                nav_point: Pose::new(0.35, 0.45, 12.5),
                cell_count: 31,
                snapshot: View { relative_heading: 12.5, visible: vec![obj] },
            }],
            question: Some(QuestionInfo {
                index: 0,
                question: "What color is the sofa?".into(),
                qtype: QuestionType::Attribute,
                format: AnswerFormat::Choice,
                choices: Some(vec!["red".into(), "blue".into()]),
            }),
            memories: None,
            tool_error: None,
            budget: 43,
        }
    }

    #[test]
    fn request_round_trip_is_byte_identical() {
        let a = sample_request().to_line();
        let parsed: StepRequest = serde_json::from_str(&a).unwrap();
        assert_eq!(parsed.to_line(), a);
        assert!(a.starts_with("{\"v\":1,\"type\":\"step\""));
        assert!(!a.contains("memories"));
    }

    #[test]
    fn responses_parse() {
        let r = WireResponse::parse_line(r#"{"type":"act","action":"forward","frontier":2,"answer":"B"}"#)
            .unwrap()
            .into_agent_response()
            .unwrap();
        assert_eq!(r.action, Some(MoveAction::Forward));
        assert_eq!(r.frontier_id, Some(2));
        let t = WireResponse::parse_line(r#"{"v":1,"type":"tool_call","query":"sofa"}"#).unwrap();
        assert_eq!(t.into_agent_response().unwrap().tool_call.unwrap().query, "sofa");
        let raw = WireResponse::parse_line(r#"{"type":"act","raw":"ACTION: turn left ANSWER: C"}"#)
            .unwrap()
            .into_agent_response()
            .unwrap();
        assert_eq!(raw.action, Some(MoveAction::TurnLeft));
        assert!(WireResponse::parse_line("not json").is_err());
        assert!(WireResponse::parse_line(r#"{"v":2,"type":"act"}"#).is_err());
        assert!(matches!(
            WireResponse::parse_line(r#"{"type":"error","message":"boom"}"#).unwrap().into_agent_response(),
            Err(PolicyError::Client(_))
        ));
        assert!(WireResponse::parse_line(r#"{"type":"act","action":"fly"}"#).unwrap().into_agent_response().is_err());
    }
}
