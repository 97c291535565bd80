//! Newline-delimited text records for messages.
//!
//! A record is a flat JSON object with the fields in a fixed order:
//!
//! ```text
//! {"performative":"IS_THIS_YOURS","sender":"text-input","recipients":["input-regulator"],"user":"u1","request":"text-input#1","seq":1,"content":"move it closer"}
//! ```
//!
//! `content` is always a string. Its layout depends on the performative:
//!
//! | performative                  | content                                          |
//! |-------------------------------|--------------------------------------------------|
//! | REGISTER                      | `address=<n> priority=<n>`                       |
//! | ADVERTISE, UNADVERTISE        | `<community>`                                    |
//! | IS_THIS_YOURS, THIS_IS_YOURS  | `<text>[ @<x>,<y>][ ~<confidence>]`              |
//! | IT_IS_MINE, MAYBE_MINE        | `confidence=<c> priority=<n>`                    |
//! | NOT_MINE, RESOLVE             | empty                                            |
//! | REWARD                        | `value=<v> request=<origin>#<n>`                 |
//! | USER_QUERY                    | `options=<a>,<b>,... question=<rest of line>`    |
//! | USER_ANSWER                   | `<literal answer>`                               |
//! | OUTPUT                        | `confidence=<c> payload=<rest of line>`          |
//!
//! Request text is normalized, so it can never contain `@` or `~`. Numbers use
//! Rust's shortest round-trip float formatting, which makes decoding exact.

use serde::Serialize;
use serde_json::{Map, Value};
use thiserror::Error;

use crate::types::{
    Address, AgentName, CommunityName, Confidence, Content, Message, Performative, Point,
    RequestId, RequestText, TypeError, UserId,
};

#[derive(Debug, Error, PartialEq)]
pub enum WireError {
    #[error("malformed record: {0}")]
    Syntax(String),
    #[error("field `{field}`: {reason}")]
    Field { field: &'static str, reason: String },
    #[error("unknown performative {0:?} (protocol version mismatch)")]
    ProtocolVersion(String),
    #[error("invalid message: {0}")]
    Invalid(#[from] TypeError),
}

fn field_err(field: &'static str, reason: impl Into<String>) -> WireError {
    WireError::Field {
        field,
        reason: reason.into(),
    }
}

#[derive(Serialize)]
struct Record<'a> {
    performative: &'static str,
    sender: &'a str,
    recipients: Vec<&'a str>,
    user: &'a str,
    request: String,
    seq: u64,
    content: String,
}

const FIELDS: [&str; 7] = [
    "performative",
    "sender",
    "recipients",
    "user",
    "request",
    "seq",
    "content",
];

pub fn encode_content(content: &Content) -> String {
    match content {
        Content::Empty => String::new(),
        Content::Register { address, priority } => {
            format!("address={address} priority={priority}")
        }
        Content::Community(c) => c.to_string(),
        Content::Request(r) => {
            let mut out = r.text.clone();
            let mut push = |s: String| {
                if !out.is_empty() {
                    out.push(' ');
                }
                out.push_str(&s);
            };
            if let Some(p) = r.pointer {
                push(format!("@{p}"));
            }
            if r.confidence != Confidence::CERTAIN {
                push(format!("~{}", r.confidence.value()));
            }
            out
        }
        Content::Claim {
            confidence,
            priority,
        } => format!("confidence={} priority={priority}", confidence.value()),
        Content::Reward { value, request } => format!("value={value} request={request}"),
        Content::Query { question, options } => {
            format!("options={} question={question}", options.join(","))
        }
        Content::Answer(a) => a.clone(),
        Content::Output {
            payload,
            confidence,
        } => format!("confidence={} payload={payload}", confidence.value()),
    }
}

/// Encodes `m` as one newline-terminated record. Rejects messages that
/// violate the [`Message`] invariants.
pub fn encode_message(m: &Message) -> Result<String, WireError> {
    m.validate()?;
    let rec = Record {
        performative: m.performative.as_str(),
        sender: m.sender.as_str(),
        recipients: m.recipients.iter().map(AgentName::as_str).collect(),
        user: m.user.as_str(),
        request: m.request.to_string(),
        seq: m.seq,
        content: encode_content(&m.content),
    };
    let mut s = serde_json::to_string(&rec).map_err(|e| WireError::Syntax(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

fn take_str<'a>(obj: &'a Map<String, Value>, field: &'static str) -> Result<&'a str, WireError> {
    match obj.get(field) {
        None => Err(field_err(field, "missing")),
        Some(Value::String(s)) => Ok(s),
        Some(_) => Err(field_err(field, "expected a string")),
    }
}

fn kv<'a>(s: &'a str, key: &'static str, field: &'static str) -> Result<&'a str, WireError> {
    s.strip_prefix(key)
        .and_then(|r| r.strip_prefix('='))
        .ok_or_else(|| field_err(field, format!("expected `{key}=`")))
}

fn parse_conf(s: &str) -> Result<Confidence, WireError> {
    let v: f64 = s
        .parse()
        .map_err(|_| field_err("content", format!("bad confidence {s:?}")))?;
    Confidence::new(v).map_err(|e| field_err("content", e.to_string()))
}

fn parse_u<T: std::str::FromStr>(s: &str, what: &str) -> Result<T, WireError> {
    s.parse()
        .map_err(|_| field_err("content", format!("bad {what} {s:?}")))
}

fn split_pair<'a>(s: &'a str) -> Result<(&'a str, &'a str), WireError> {
    s.split_once(' ')
        .ok_or_else(|| field_err("content", "expected two space-separated fields"))
}

pub fn decode_content(p: Performative, s: &str) -> Result<Content, WireError> {
    use Performative as P;
    let content = match p {
        P::Register => {
            let (a, pr) = split_pair(s)?;
            Content::Register {
                address: Address(parse_u(kv(a, "address", "content")?, "address")?),
                priority: parse_u(kv(pr, "priority", "content")?, "priority")?,
            }
        }
        P::Advertise | P::Unadvertise => Content::Community(
            CommunityName::new(s).map_err(|e| field_err("content", e.to_string()))?,
        ),
        P::IsThisYours | P::ThisIsYours => {
            let mut words: Vec<&str> = s.split(' ').filter(|w| !w.is_empty()).collect();
            let mut req = RequestText::new("");
            if let Some(c) = words.last().and_then(|w| w.strip_prefix('~')) {
                req.confidence = parse_conf(c)?;
                words.pop();
            }
            if let Some(pt) = words.last().and_then(|w| w.strip_prefix('@')) {
                req.pointer = Some(
                    pt.parse::<Point>()
                        .map_err(|e| field_err("content", e.to_string()))?,
                );
                words.pop();
            }
            req.text = words.join(" ");
            Content::Request(req)
        }
        P::ItIsMine | P::MaybeMine => {
            let (c, pr) = split_pair(s)?;
            Content::Claim {
                confidence: parse_conf(kv(c, "confidence", "content")?)?,
                priority: parse_u(kv(pr, "priority", "content")?, "priority")?,
            }
        }
        P::NotMine | P::Resolve => {
            if !s.is_empty() {
                return Err(field_err("content", "expected empty content"));
            }
            Content::Empty
        }
        P::Reward => {
            let (v, r) = split_pair(s)?;
            Content::Reward {
                value: parse_u(kv(v, "value", "content")?, "reward value")?,
                request: kv(r, "request", "content")?
                    .parse()
                    .map_err(|e: TypeError| field_err("content", e.to_string()))?,
            }
        }
        P::UserQuery => {
            let (o, q) = split_pair(s)?;
            Content::Query {
                options: kv(o, "options", "content")?
                    .split(',')
                    .map(str::to_string)
                    .collect(),
                question: kv(q, "question", "content")?.to_string(),
            }
        }
        P::UserAnswer => Content::Answer(s.to_string()),
        P::Output => {
            let (c, rest) = split_pair(s)?;
            Content::Output {
                confidence: parse_conf(kv(c, "confidence", "content")?)?,
                payload: kv(rest, "payload", "content")?.to_string(),
            }
        }
    };
    Ok(content)
}

/// Inverse of [`encode_message`]. Accepts the record with or without its
/// trailing newline.
pub fn decode_message(bytes: &[u8]) -> Result<Message, WireError> {
    let text = std::str::from_utf8(bytes).map_err(|e| WireError::Syntax(e.to_string()))?;
    let line = text.strip_suffix('\n').unwrap_or(text);
    if line.contains('\n') {
        return Err(WireError::Syntax("record spans more than one line".into()));
    }
    let value: Value =
        serde_json::from_str(line).map_err(|e| WireError::Syntax(e.to_string()))?;
    let Value::Object(obj) = value else {
        return Err(WireError::Syntax("record is not an object".into()));
    };
    if let Some(extra) = obj.keys().find(|k| !FIELDS.contains(&k.as_str())) {
        return Err(WireError::Syntax(format!("unexpected field `{extra}`")));
    }

    let perf_s = take_str(&obj, "performative")?;
    let performative = Performative::parse(perf_s)
        .ok_or_else(|| WireError::ProtocolVersion(perf_s.to_string()))?;
    let sender = AgentName::new(take_str(&obj, "sender")?)
        .map_err(|e| field_err("sender", e.to_string()))?;
    let recipients = match obj.get("recipients") {
        None => return Err(field_err("recipients", "missing")),
        Some(Value::Array(items)) => items
            .iter()
            .map(|v| {
                v.as_str()
                    .ok_or_else(|| field_err("recipients", "expected strings"))
                    .and_then(|s| {
                        AgentName::new(s).map_err(|e| field_err("recipients", e.to_string()))
                    })
            })
            .collect::<Result<Vec<_>, _>>()?,
        Some(_) => return Err(field_err("recipients", "expected an array")),
    };
    let user =
        UserId::new(take_str(&obj, "user")?).map_err(|e| field_err("user", e.to_string()))?;
    let request: RequestId = take_str(&obj, "request")?
        .parse()
        .map_err(|e: TypeError| field_err("request", e.to_string()))?;
    let seq = match obj.get("seq") {
        None => return Err(field_err("seq", "missing")),
        Some(v) => v
            .as_u64()
            .ok_or_else(|| field_err("seq", "expected a non-negative integer"))?,
    };
    let content = decode_content(performative, take_str(&obj, "content")?)?;
    Ok(Message::new(
        performative,
        sender,
        recipients,
        user,
        request,
        seq,
        content,
    )?)
}
