//! Grammar for agent responses: `ACTION:` / `FRONTIER:` / `ANSWER:` segments
//! in any order and case, or a JSON tool call `{"tool_call": {"query": ...}}`.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::geometry::MoveAction;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolCall {
    pub query: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SegmentPresence {
    pub action: bool,
    pub frontier: bool,
    pub answer: bool,
}

impl SegmentPresence {
    pub fn count(&self) -> usize {
        self.action as usize + self.frontier as usize + self.answer as usize
    }

    pub fn fraction(&self) -> f64 {
        self.count() as f64 / 3.0
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AgentResponse {
    pub raw: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_call: Option<ToolCall>,
    /// A `tool_call` key was present but did not carry a string query.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub tool_call_malformed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub action: Option<MoveAction>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frontier_id: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<String>,
    #[serde(default)]
    pub segments: SegmentPresence,
}

impl AgentResponse {
    pub fn is_tool_call(&self) -> bool {
        self.tool_call.is_some() || self.tool_call_malformed
    }

    /// Canonical text form of a structured answer.
    pub fn render(action: Option<MoveAction>, frontier: Option<u32>, answer: Option<&str>) -> String {
        let mut parts = Vec::new();
        if let Some(a) = action {
            parts.push(format!("ACTION: {a}"));
        }
        if let Some(f) = frontier {
            parts.push(format!("FRONTIER: {f}"));
        }
        if let Some(a) = answer {
            parts.push(format!("ANSWER: {a}"));
        }
        parts.join(" ")
    }

    pub fn tool_call_text(query: &str) -> String {
        serde_json::json!({ "tool_call": { "query": query } }).to_string()
    }
}

fn segment_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)\b(action|frontier|answer)\s*:").expect("valid regex"))
}

fn digits_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\d+").expect("valid regex"))
}

enum ToolScan {
    None,
    Call(ToolCall),
    Malformed,
}

fn tool_from_object(obj: &serde_json::Map<String, Value>) -> Option<ToolScan> {
    if let Some(tc) = obj.get("tool_call") {
        return Some(match tc.get("query").and_then(Value::as_str) {
            Some(q) => ToolScan::Call(ToolCall { query: q.to_string() }),
            None => ToolScan::Malformed,
        });
    }
    if obj.get("type").and_then(Value::as_str) == Some("tool_call") {
        return Some(match obj.get("query").and_then(Value::as_str) {
            Some(q) => ToolScan::Call(ToolCall { query: q.to_string() }),
            None => ToolScan::Malformed,
        });
    }
    None
}

fn scan_tool_call(raw: &str) -> ToolScan {
    for (pos, _) in raw.match_indices('{') {
        let mut stream = serde_json::Deserializer::from_str(&raw[pos..]).into_iter::<Value>();
        if let Some(Ok(Value::Object(obj))) = stream.next() {
            if let Some(scan) = tool_from_object(&obj) {
                return scan;
            }
        }
    }
    ToolScan::None
}

/// Parses a raw model response. Never fails; anything that cannot be
/// recovered is left unset.
pub fn parse_response(raw: &str) -> AgentResponse {
    let mut resp = AgentResponse {
        raw: raw.to_string(),
        ..Default::default()
    };
    match scan_tool_call(raw) {
        ToolScan::Call(call) => {
            resp.tool_call = Some(call);
            return resp;
        }
        ToolScan::Malformed => {
            resp.tool_call_malformed = true;
            return resp;
        }
        ToolScan::None => {}
    }

    let tags: Vec<(usize, usize, String)> = segment_regex()
        .captures_iter(raw)
        .map(|c| {
            let m = c.get(0).expect("whole match");
            (m.start(), m.end(), c[1].to_ascii_lowercase())
        })
        .collect();
    for (i, (_, body_start, tag)) in tags.iter().enumerate() {
        let body_end = tags.get(i + 1).map_or(raw.len(), |t| t.0);
        let body = raw[*body_start..body_end].trim();
        if body.is_empty() {
            continue;
        }
        match tag.as_str() {
            "action" if !resp.segments.action => {
                resp.segments.action = true;
                resp.action = MoveAction::parse_loose(body);
            }
            "frontier" if !resp.segments.frontier => {
                resp.segments.frontier = true;
                resp.frontier_id = digits_regex()
                    .find(body)
                    .and_then(|m| m.as_str().parse().ok());
            }
            "answer" if !resp.segments.answer => {
                resp.segments.answer = true;
                resp.answer = Some(body.trim_matches(|c| c == '"' || c == '\'').trim().to_string());
            }
            _ => {}
        }
    }
    resp
}
