//! Domain vocabulary shared by every agent: names, ids, performatives and
//! messages.
//!
//! Everything here is a plain value type. Constructors validate the
//! invariants so the rest of the crate can assume well-formed data.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TypeError {
    #[error("invalid {kind} token {value:?}: {reason}")]
    InvalidToken {
        kind: &'static str,
        value: String,
        reason: &'static str,
    },
    #[error("confidence {0} outside [0, 1]")]
    Confidence(f64),
    #[error("message has no recipients")]
    NoRecipients,
    #[error("{performative} cannot carry {content} content")]
    ContentMismatch {
        performative: Performative,
        content: &'static str,
    },
    #[error("reward value {0} must be finite and within [-1, 1]")]
    RewardValue(f64),
    #[error("reward content names request {content}, message carries {message}")]
    RewardRequest { content: String, message: String },
    #[error("request text {0:?} is not normalized")]
    UnnormalizedText(String),
    #[error("{0}")]
    Malformed(String),
}

fn check_name(kind: &'static str, s: &str) -> Result<(), TypeError> {
    let bad = |reason| {
        Err(TypeError::InvalidToken {
            kind,
            value: s.to_string(),
            reason,
        })
    };
    if s.is_empty() {
        return bad("empty");
    }
    if !s
        .chars()
        .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '-')
    {
        return bad("only lowercase alphanumerics and hyphens are allowed");
    }
    if s.starts_with('-') || s.ends_with('-') {
        return bad("must not start or end with a hyphen");
    }
    Ok(())
}

macro_rules! name_type {
    ($(#[$doc:meta])* $name:ident, $kind:literal) => {
        $(#[$doc])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(try_from = "String", into = "String")]
        pub struct $name(String);

        impl $name {
            pub fn new(s: impl Into<String>) -> Result<Self, TypeError> {
                let s = s.into();
                check_name($kind, &s)?;
                Ok(Self(s))
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl FromStr for $name {
            type Err = TypeError;
            fn from_str(s: &str) -> Result<Self, TypeError> {
                Self::new(s)
            }
        }

        impl TryFrom<String> for $name {
            type Error = TypeError;
            fn try_from(s: String) -> Result<Self, TypeError> {
                Self::new(s)
            }
        }

        impl From<$name> for String {
            fn from(n: $name) -> String {
                n.0
            }
        }

        impl AsRef<str> for $name {
            fn as_ref(&self) -> &str {
                &self.0
            }
        }
    };
}

name_type!(
    /// Stable agent name: lowercase alphanumerics and hyphens.
    AgentName,
    "agent name"
);
name_type!(
    /// Name of an interpretation community held in some agent's address book.
    CommunityName,
    "community name"
);

impl From<&AgentName> for CommunityName {
    fn from(a: &AgentName) -> Self {
        CommunityName(a.0.clone())
    }
}

impl From<&CommunityName> for AgentName {
    fn from(c: &CommunityName) -> Self {
        AgentName(c.0.clone())
    }
}

/// Opaque handle issued by the name server. Never reused within a runtime.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Address(pub u64);

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct AgentId {
    pub name: AgentName,
    pub address: Address,
}

/// The user a request was issued by. Interpretation is per user.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct UserId(String);

impl UserId {
    pub fn new(s: impl Into<String>) -> Result<Self, TypeError> {
        let s = s.into();
        let ok = !s.is_empty()
            && s
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'));
        if !ok {
            return Err(TypeError::InvalidToken {
                kind: "user id",
                value: s,
                reason: "must be a non-empty token of [A-Za-z0-9._-]",
            });
        }
        Ok(Self(s))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// User tag for runtime housekeeping traffic (registration, adverts).
    pub fn system() -> Self {
        Self("system".into())
    }
}

impl fmt::Display for UserId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for UserId {
    type Err = TypeError;
    fn from_str(s: &str) -> Result<Self, TypeError> {
        Self::new(s)
    }
}

impl TryFrom<String> for UserId {
    type Error = TypeError;
    fn try_from(s: String) -> Result<Self, TypeError> {
        Self::new(s)
    }
}

impl From<UserId> for String {
    fn from(u: UserId) -> String {
        u.0
    }
}

/// `(origin, counter)`; unique per session because each origin owns its
/// counter. Rendered as `origin#counter`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RequestId {
    pub origin: AgentName,
    pub counter: u64,
}

impl RequestId {
    pub fn new(origin: AgentName, counter: u64) -> Self {
        Self { origin, counter }
    }

    /// The id stamped on housekeeping messages: `system#0`.
    pub fn system() -> Self {
        Self {
            origin: AgentName("system".into()),
            counter: 0,
        }
    }
}

impl fmt::Display for RequestId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.origin, self.counter)
    }
}

impl FromStr for RequestId {
    type Err = TypeError;
    fn from_str(s: &str) -> Result<Self, TypeError> {
        let (origin, n) = s
            .rsplit_once('#')
            .ok_or_else(|| TypeError::Malformed(format!("request id {s:?} lacks '#'")))?;
        let counter = n
            .parse()
            .map_err(|_| TypeError::Malformed(format!("request counter {n:?} is not an integer")))?;
        Ok(Self {
            origin: AgentName::new(origin)?,
            counter,
        })
    }
}

/// Per-origin request counter. Owned by exactly one input agent.
#[derive(Debug, Clone)]
pub struct RequestCounter {
    origin: AgentName,
    last: u64,
}

impl RequestCounter {
    pub fn new(origin: AgentName) -> Self {
        Self { origin, last: 0 }
    }

    pub fn next_request_id(&mut self) -> RequestId {
        self.last += 1;
        RequestId::new(self.origin.clone(), self.last)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Performative {
    Register,
    Advertise,
    Unadvertise,
    IsThisYours,
    ItIsMine,
    NotMine,
    MaybeMine,
    ThisIsYours,
    Resolve,
    Reward,
    UserQuery,
    UserAnswer,
    Output,
}

impl Performative {
    pub const ALL: [Performative; 13] = [
        Performative::Register,
        Performative::Advertise,
        Performative::Unadvertise,
        Performative::IsThisYours,
        Performative::ItIsMine,
        Performative::NotMine,
        Performative::MaybeMine,
        Performative::ThisIsYours,
        Performative::Resolve,
        Performative::Reward,
        Performative::UserQuery,
        Performative::UserAnswer,
        Performative::Output,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Performative::Register => "REGISTER",
            Performative::Advertise => "ADVERTISE",
            Performative::Unadvertise => "UNADVERTISE",
            Performative::IsThisYours => "IS_THIS_YOURS",
            Performative::ItIsMine => "IT_IS_MINE",
            Performative::NotMine => "NOT_MINE",
            Performative::MaybeMine => "MAYBE_MINE",
            Performative::ThisIsYours => "THIS_IS_YOURS",
            Performative::Resolve => "RESOLVE",
            Performative::Reward => "REWARD",
            Performative::UserQuery => "USER_QUERY",
            Performative::UserAnswer => "USER_ANSWER",
            Performative::Output => "OUTPUT",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.as_str() == s)
    }

    /// Replies to an IS_THIS_YOURS query.
    pub fn is_claim_reply(self) -> bool {
        matches!(
            self,
            Performative::ItIsMine | Performative::NotMine | Performative::MaybeMine
        )
    }
}

impl fmt::Display for Performative {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A real in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Confidence(f64);

impl Confidence {
    pub const CERTAIN: Confidence = Confidence(1.0);

    pub fn new(v: f64) -> Result<Self, TypeError> {
        if (0.0..=1.0).contains(&v) {
            Ok(Self(v))
        } else {
            Err(TypeError::Confidence(v))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// Product of two confidences; stays in range.
    pub fn and(self, other: Confidence) -> Confidence {
        Confidence(self.0 * other.0)
    }
}

impl Default for Confidence {
    fn default() -> Self {
        Self::CERTAIN
    }
}

impl TryFrom<f64> for Confidence {
    type Error = TypeError;
    fn try_from(v: f64) -> Result<Self, TypeError> {
        Self::new(v)
    }
}

impl From<Confidence> for f64 {
    fn from(c: Confidence) -> f64 {
        c.0
    }
}

/// Integer grid coordinate from the pointer device.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Point {
    pub x: i32,
    pub y: i32,
}

impl Point {
    pub fn new(x: i32, y: i32) -> Self {
        Self { x, y }
    }
}

impl fmt::Display for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{}", self.x, self.y)
    }
}

impl FromStr for Point {
    type Err = TypeError;
    fn from_str(s: &str) -> Result<Self, TypeError> {
        let (x, y) = s
            .split_once(',')
            .ok_or_else(|| TypeError::Malformed(format!("point {s:?} is not x,y")))?;
        let p = |v: &str| {
            v.trim()
                .parse::<i32>()
                .map_err(|_| TypeError::Malformed(format!("point coordinate {v:?}")))
        };
        Ok(Point::new(p(x)?, p(y)?))
    }
}

/// Lowercase, strip punctuation other than apostrophes and hyphens, collapse
/// whitespace.
pub fn normalize_text(raw: &str) -> String {
    let mapped: String = raw
        .chars()
        .map(|c| match c {
            '\u{2019}' | '\u{2018}' => '\'',
            c if c.is_alphanumeric() || c == '\'' || c == '-' => c,
            _ => ' ',
        })
        .flat_map(char::to_lowercase)
        .collect();
    mapped.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub fn is_normalized(text: &str) -> bool {
    normalize_text(text) == text
}

pub fn tokens(text: &str) -> impl Iterator<Item = &str> {
    text.split_whitespace()
}

/// The request payload carried by IS_THIS_YOURS and THIS_IS_YOURS.
#[derive(Debug, Clone, PartialEq)]
pub struct RequestText {
    /// Normalized request text; may be empty for a pointer-only request.
    pub text: String,
    pub pointer: Option<Point>,
    /// Routing confidence accumulated along the dispatch path so far.
    pub confidence: Confidence,
}

impl RequestText {
    pub fn new(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            pointer: None,
            confidence: Confidence::CERTAIN,
        }
    }

    pub fn with_pointer(mut self, p: Option<Point>) -> Self {
        self.pointer = p;
        self
    }

    pub fn with_confidence(mut self, c: Confidence) -> Self {
        self.confidence = c;
        self
    }
}

/// Structured payload; which variant is legal depends on the performative.
#[derive(Debug, Clone, PartialEq)]
pub enum Content {
    Empty,
    Register { address: Address, priority: u32 },
    Community(CommunityName),
    Request(RequestText),
    Claim { confidence: Confidence, priority: u32 },
    Reward { value: f64, request: RequestId },
    Query { question: String, options: Vec<String> },
    Answer(String),
    Output { payload: String, confidence: Confidence },
}

impl Content {
    pub fn kind(&self) -> &'static str {
        match self {
            Content::Empty => "empty",
            Content::Register { .. } => "register",
            Content::Community(_) => "community",
            Content::Request(_) => "request",
            Content::Claim { .. } => "claim",
            Content::Reward { .. } => "reward",
            Content::Query { .. } => "query",
            Content::Answer(_) => "answer",
            Content::Output { .. } => "output",
        }
    }

    fn fits(&self, p: Performative) -> bool {
        use Performative as P;
        matches!(
            (p, self),
            (P::Register, Content::Register { .. })
                | (P::Advertise | P::Unadvertise, Content::Community(_))
                | (P::IsThisYours | P::ThisIsYours, Content::Request(_))
                | (P::ItIsMine | P::MaybeMine, Content::Claim { .. })
                | (P::NotMine | P::Resolve, Content::Empty)
                | (P::Reward, Content::Reward { .. })
                | (P::UserQuery, Content::Query { .. })
                | (P::UserAnswer, Content::Answer(_))
                | (P::Output, Content::Output { .. })
        )
    }
}

/// One performative-tagged communication item.
#[derive(Debug, Clone, PartialEq)]
pub struct Message {
    pub performative: Performative,
    pub sender: AgentName,
    pub recipients: Vec<AgentName>,
    pub user: UserId,
    pub request: RequestId,
    /// Per-sender counter stamped by the runtime at send time.
    pub seq: u64,
    pub content: Content,
}

impl Message {
    pub fn new(
        performative: Performative,
        sender: AgentName,
        recipients: Vec<AgentName>,
        user: UserId,
        request: RequestId,
        seq: u64,
        content: Content,
    ) -> Result<Self, TypeError> {
        let m = Self {
            performative,
            sender,
            recipients,
            user,
            request,
            seq,
            content,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), TypeError> {
        if self.recipients.is_empty() {
            return Err(TypeError::NoRecipients);
        }
        if !self.content.fits(self.performative) {
            return Err(TypeError::ContentMismatch {
                performative: self.performative,
                content: self.content.kind(),
            });
        }
        match &self.content {
            Content::Reward { value, request } => {
                if !value.is_finite() || !(-1.0..=1.0).contains(value) {
                    return Err(TypeError::RewardValue(*value));
                }
                if *request != self.request {
                    return Err(TypeError::RewardRequest {
                        content: request.to_string(),
                        message: self.request.to_string(),
                    });
                }
            }
            Content::Request(r) if !is_normalized(&r.text) => {
                return Err(TypeError::UnnormalizedText(r.text.clone()));
            }
            Content::Query { question, options } => {
                if options.is_empty()
                    || options
                        .iter()
                        .any(|o| o.is_empty() || o.contains([' ', ',']))
                {
                    return Err(TypeError::Malformed(
                        "query options must be non-empty words without commas".into(),
                    ));
                }
                if question.contains('\n') {
                    return Err(TypeError::Malformed("query question spans lines".into()));
                }
            }
            _ => {}
        }
        Ok(())
    }

    pub fn request_text(&self) -> Option<&RequestText> {
        match &self.content {
            Content::Request(r) => Some(r),
            _ => None,
        }
    }
}
