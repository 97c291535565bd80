//! Adaptive agent-oriented runtime for multimodal interpretation, with a
//! map-browsing demo community built on it.

pub mod harness;
pub mod learning;
pub mod mapdemo;
pub mod rewards;
pub mod runtime;
pub mod types;
pub mod whitebox;
pub mod wire;

pub use learning::{PolicyEntry, PolicyStore, ResetScope, Target};
pub use runtime::{AgentSpec, ExternalEvent, Job, Outgoing, ProcessUnit, Runtime, RuntimeConfig, TraceEvent};
pub use types::{
    AgentName, CommunityName, Confidence, Content, Message, Performative, Point, RequestId, UserId,
};
pub use whitebox::{AgentRole, WhiteBox};
