//! Pull-request lifecycle events and their wire-format validation.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, SubsecRound, Utc};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

pub type Timestamp = DateTime<Utc>;
pub type PrId = u64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventType {
    Created,
    Updated,
    Closed,
}

impl FromStr for EventType {
    type Err = EventError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "created" => Ok(EventType::Created),
            "updated" => Ok(EventType::Updated),
            "closed" => Ok(EventType::Closed),
            other => Err(EventError::UnknownEventType(other.to_string())),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CloseReason {
    Merged,
    Abandoned,
}

/// One lifecycle event for a pull request. `files` is the cumulative file
/// set of the PR as of this event, not a delta.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PullRequestEvent {
    pub repo_id: String,
    pub pr_id: PrId,
    pub event_type: EventType,
    pub timestamp: Timestamp,
    pub author: String,
    pub files: BTreeSet<String>,
    #[serde(default)]
    pub title: String,
    #[serde(default)]
    pub commit_messages: Vec<String>,
    #[serde(default)]
    pub interacting_users: BTreeSet<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub close_reason: Option<CloseReason>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EventError {
    #[error("missing required field `{0}`")]
    MissingField(&'static str),
    #[error("field `{field}` has the wrong type: expected {expected}")]
    WrongType {
        field: &'static str,
        expected: &'static str,
    },
    #[error("unknown event_type `{0}`")]
    UnknownEventType(String),
    #[error("closed event requires `close_reason`")]
    MissingCloseReason,
    #[error("`close_reason` is only allowed on closed events")]
    UnexpectedCloseReason,
    #[error("unknown close_reason `{0}`")]
    UnknownCloseReason(String),
    #[error("timestamp `{0}` is not an RFC 3339 instant")]
    BadTimestamp(String),
    #[error("pr_id must be a positive integer")]
    BadPrId,
    #[error("{0} event must carry a non-empty file set")]
    EmptyFiles(EventType),
    #[error("event is not a JSON object")]
    NotAnObject,
    #[error("invalid JSON: {0}")]
    Json(String),
}

impl fmt::Display for EventType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EventType::Created => "created",
            EventType::Updated => "updated",
            EventType::Closed => "closed",
        })
    }
}

/// Parses and validates one event from its JSON text.
pub fn parse_event(text: &str) -> Result<PullRequestEvent, EventError> {
    let raw: Value = serde_json::from_str(text).map_err(|e| EventError::Json(e.to_string()))?;
    validate_event(&raw)
}

/// Turns a decoded record into a typed event. Unknown top-level fields are
/// ignored; timestamps are truncated to whole seconds.
pub fn validate_event(raw: &Value) -> Result<PullRequestEvent, EventError> {
    let obj = raw.as_object().ok_or(EventError::NotAnObject)?;

    let repo_id = required_str(obj, "repo_id")?.to_string();
    let pr_id = match obj.get("pr_id") {
        None | Some(Value::Null) => return Err(EventError::MissingField("pr_id")),
        Some(v) => v.as_u64().filter(|&id| id > 0).ok_or(EventError::BadPrId)?,
    };
    let event_type: EventType = required_str(obj, "event_type")?.parse()?;
    let ts_text = required_str(obj, "timestamp")?;
    let timestamp = parse_timestamp(ts_text)?;
    let author = required_str(obj, "author")?.to_string();

    let files = match obj.get("files") {
        None | Some(Value::Null) if event_type == EventType::Closed => BTreeSet::new(),
        None | Some(Value::Null) => return Err(EventError::MissingField("files")),
        Some(v) => string_set(v, "files")?,
    };
    if files.is_empty() && event_type != EventType::Closed {
        return Err(EventError::EmptyFiles(event_type));
    }

    let title = match obj.get("title") {
        None | Some(Value::Null) => String::new(),
        Some(Value::String(s)) => s.clone(),
        Some(_) => {
            return Err(EventError::WrongType {
                field: "title",
                expected: "string",
            })
        }
    };
    let commit_messages = match obj.get("commit_messages") {
        None | Some(Value::Null) => Vec::new(),
        Some(Value::Array(items)) => items
            .iter()
            .map(|m| {
                m.as_str().map(str::to_string).ok_or(EventError::WrongType {
                    field: "commit_messages",
                    expected: "array of strings",
                })
            })
            .collect::<Result<_, _>>()?,
        Some(_) => {
            return Err(EventError::WrongType {
                field: "commit_messages",
                expected: "array of strings",
            })
        }
    };
    let interacting_users = match obj.get("interacting_users") {
        None | Some(Value::Null) => BTreeSet::new(),
        Some(v) => string_set(v, "interacting_users")?,
    };

    let close_reason = match (event_type, obj.get("close_reason")) {
        (EventType::Closed, None | Some(Value::Null)) => return Err(EventError::MissingCloseReason),
        (EventType::Closed, Some(v)) => Some(match v.as_str() {
            Some("merged") => CloseReason::Merged,
            Some("abandoned") => CloseReason::Abandoned,
            Some(other) => return Err(EventError::UnknownCloseReason(other.to_string())),
            None => {
                return Err(EventError::WrongType {
                    field: "close_reason",
                    expected: "string",
                })
            }
        }),
        (_, None | Some(Value::Null)) => None,
        (_, Some(_)) => return Err(EventError::UnexpectedCloseReason),
    };

    Ok(PullRequestEvent {
        repo_id,
        pr_id,
        event_type,
        timestamp,
        author,
        files,
        title,
        commit_messages,
        interacting_users,
        close_reason,
    })
}

pub fn parse_timestamp(text: &str) -> Result<Timestamp, EventError> {
    DateTime::parse_from_rfc3339(text)
        .map(|t| t.with_timezone(&Utc).trunc_subsecs(0))
        .map_err(|_| EventError::BadTimestamp(text.to_string()))
}

fn required_str<'a>(obj: &'a Map<String, Value>, field: &'static str) -> Result<&'a str, EventError> {
    match obj.get(field) {
        None | Some(Value::Null) => Err(EventError::MissingField(field)),
        Some(Value::String(s)) => Ok(s),
        Some(_) => Err(EventError::WrongType {
            field,
            expected: "string",
        }),
    }
}

fn string_set(value: &Value, field: &'static str) -> Result<BTreeSet<String>, EventError> {
    let wrong = EventError::WrongType {
        field,
        expected: "array of strings",
    };
    let items = value.as_array().ok_or_else(|| wrong.clone())?;
    items
        .iter()
        .map(|v| v.as_str().map(str::to_string).ok_or_else(|| wrong.clone()))
        .collect()
}
