//! Rewards unit: splitting incoming credit between an agent and whoever
//! asked it, interpreting user behaviour as rewards, and the address-book
//! confidence accumulator.

use std::any::Any;
use std::collections::BTreeMap;

use crate::runtime::{ExternalEvent, Io, ProcessUnit};
use crate::types::{
    normalize_text, AgentName, Content, Message, Performative, RequestId, UserId,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RewardOrigin {
    ExplicitUser,
    FeedbackAgent,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reward {
    pub value: f64,
    pub request: RequestId,
    pub user: UserId,
    pub origin: RewardOrigin,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RewardConfig {
    /// Share of an incoming reward an agent keeps; the rest goes to its
    /// requester.
    pub keep_share: f64,
    pub repeat: f64,
    pub praise: f64,
    pub complaint: f64,
    pub pause: f64,
    /// Seconds of silence after an output that count as tacit acceptance.
    pub pause_threshold: f64,
    pub positive_phrases: Vec<String>,
    pub negative_phrases: Vec<String>,
}

impl Default for RewardConfig {
    fn default() -> Self {
        let words = |v: &[&str]| v.iter().map(|s| s.to_string()).collect();
        Self {
            keep_share: 0.5,
            repeat: -0.5,
            praise: 1.0,
            complaint: -1.0,
            pause: 0.25,
            pause_threshold: 5.0,
            positive_phrases: words(&["thanks", "great", "good"]),
            negative_phrases: words(&["no", "wrong", "that's wrong", "bad"]),
        }
    }
}

/// `(kept, forwarded)` for an incoming reward.
pub fn split_reward(value: f64, keep_share: f64) -> (f64, f64) {
    (value * keep_share, value * (1.0 - keep_share))
}

#[derive(Debug, Clone, PartialEq)]
pub struct AppliedReward {
    pub request: RequestId,
    pub received: f64,
    pub kept: f64,
}

/// Per-agent reward bookkeeping.
#[derive(Debug, Clone)]
pub struct RewardsUnit {
    keep_share: f64,
    applied: Vec<AppliedReward>,
}

impl RewardsUnit {
    pub fn new(keep_share: f64) -> Self {
        Self {
            keep_share,
            applied: Vec::new(),
        }
    }

    /// Books an incoming reward and returns `(kept, forwarded)`.
    pub fn receive(&mut self, request: &RequestId, value: f64) -> (f64, f64) {
        let (kept, forwarded) = split_reward(value, self.keep_share);
        self.applied.push(AppliedReward {
            request: request.clone(),
            received: value,
            kept,
        });
        (kept, forwarded)
    }

    pub fn applied(&self) -> &[AppliedReward] {
        &self.applied
    }

    /// Sum of kept shares for one request.
    pub fn kept_for(&self, request: &RequestId) -> f64 {
        self.applied
            .iter()
            .filter(|a| &a.request == request)
            .map(|a| a.kept)
            .sum()
    }
}

/// Moves an accumulator by `delta`, clamped to `[0, 1]`.
pub fn nudge_confidence(current: f64, delta: f64) -> f64 {
    (current + delta).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub enum UserEvent {
    RepeatOfCommand,
    PraiseRemark,
    ComplaintRemark,
    Pause(f64),
    Other,
}

/// Recognizes a whole utterance as a satisfaction remark.
pub fn classify_remark(text: &str, cfg: &RewardConfig) -> Option<UserEvent> {
    let t = normalize_text(text);
    if cfg.positive_phrases.iter().any(|p| *p == t) {
        Some(UserEvent::PraiseRemark)
    } else if cfg.negative_phrases.iter().any(|p| *p == t) {
        Some(UserEvent::ComplaintRemark)
    } else {
        None
    }
}

/// Turns a user event into a reward on `target`, the request the event
/// comments on.
pub fn interpret_feedback(
    event: &UserEvent,
    target: &RequestId,
    user: &UserId,
    cfg: &RewardConfig,
) -> Option<Reward> {
    let value = match event {
        UserEvent::RepeatOfCommand => cfg.repeat,
        UserEvent::PraiseRemark => cfg.praise,
        UserEvent::ComplaintRemark => cfg.complaint,
        UserEvent::Pause(s) if *s >= cfg.pause_threshold => cfg.pause,
        UserEvent::Pause(_) | UserEvent::Other => return None,
    };
    Some(Reward {
        value,
        request: target.clone(),
        user: user.clone(),
        origin: RewardOrigin::FeedbackAgent,
    })
}

#[derive(Debug, Clone)]
struct SeenOutput {
    request: RequestId,
    producer: AgentName,
    at: f64,
    /// Already rewarded or penalized; silence no longer counts.
    judged: bool,
}

/// Black box of the feedback agent. It watches OUTPUT messages to learn
/// which agent produced the response to each request, and turns user
/// behaviour into REWARD messages addressed to that agent.
#[derive(Debug, Clone, Default)]
pub struct FeedbackUnit {
    cfg: RewardConfig,
    last_output: BTreeMap<UserId, SeenOutput>,
    last_command: BTreeMap<UserId, String>,
    issued: Vec<Reward>,
}

impl FeedbackUnit {
    pub fn new(cfg: RewardConfig) -> Self {
        Self {
            cfg,
            ..Default::default()
        }
    }

    pub fn issued(&self) -> &[Reward] {
        &self.issued
    }

    fn emit(&mut self, io: &mut Io<'_>, event: UserEvent, user: &UserId) {
        let Some(seen) = self.last_output.get(user) else {
            return;
        };
        let Some(reward) = interpret_feedback(&event, &seen.request, user, &self.cfg) else {
            return;
        };
        let producer = seen.producer.clone();
        if let Some(o) = self.last_output.get_mut(user) {
            o.judged = true;
        }
        io.send(
            Performative::Reward,
            vec![producer],
            user.clone(),
            reward.request.clone(),
            Content::Reward {
                value: reward.value,
                request: reward.request.clone(),
            },
        );
        self.issued.push(reward);
    }
}

impl ProcessUnit for FeedbackUnit {
    fn external(&mut self, event: &ExternalEvent, io: &mut Io<'_>) {
        match event {
            ExternalEvent::Said { user, text, at } => {
                let t = normalize_text(text);
                let repeat = self.last_command.get(user) == Some(&t)
                    && self
                        .last_output
                        .get(user)
                        .is_some_and(|o| at - o.at < self.cfg.pause_threshold);
                if repeat {
                    self.emit(io, UserEvent::RepeatOfCommand, user);
                }
                self.last_command.insert(user.clone(), t);
            }
            ExternalEvent::Remark { user, text, .. } => {
                let ev = classify_remark(text, &self.cfg).unwrap_or(UserEvent::Other);
                self.emit(io, ev, user);
            }
            ExternalEvent::Paused { user, seconds, .. } => {
                let fresh = self
                    .last_output
                    .get(user)
                    .is_some_and(|o| !o.judged);
                if fresh && *seconds >= self.cfg.pause_threshold {
                    self.emit(io, UserEvent::Pause(*seconds), user);
                }
            }
            ExternalEvent::Reward {
                user,
                request,
                value,
                to,
            } => {
                io.send(
                    Performative::Reward,
                    vec![to.clone()],
                    user.clone(),
                    request.clone(),
                    Content::Reward {
                        value: *value,
                        request: request.clone(),
                    },
                );
                self.issued.push(Reward {
                    value: *value,
                    request: request.clone(),
                    user: user.clone(),
                    origin: RewardOrigin::ExplicitUser,
                });
            }
            _ => {}
        }
    }

    fn message(&mut self, msg: &Message, io: &mut Io<'_>) {
        if msg.performative == Performative::Output {
            self.last_output.insert(
                msg.user.clone(),
                SeenOutput {
                    request: msg.request.clone(),
                    producer: msg.sender.clone(),
                    at: io.now(),
                    judged: false,
                },
            );
        }
    }

    fn as_any(&self) -> &dyn Any {
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rid() -> RequestId {
        RequestId::new(AgentName::new("text-input").unwrap(), 1)
    }

    #[test]
    fn split_at_default_keep_share() {
        assert_eq!(split_reward(1.0, 0.5), (0.5, 0.5));
        assert_eq!(split_reward(0.0, 0.5), (0.0, 0.0));
        assert_eq!(split_reward(-1.0, 0.25), (-0.25, -0.75));
    }

    #[test]
    fn rewards_unit_books_shares() {
        let mut u = RewardsUnit::new(0.5);
        assert_eq!(u.receive(&rid(), 0.5), (0.25, 0.25));
        assert_eq!(u.kept_for(&rid()), 0.25);
        assert_eq!(u.applied().len(), 1);
    }

    #[test]
    fn feedback_magnitudes() {
        let cfg = RewardConfig::default();
        let u = UserId::new("u1").unwrap();
        let v = |e| interpret_feedback(&e, &rid(), &u, &cfg).map(|r| r.value);
        assert_eq!(v(UserEvent::RepeatOfCommand), Some(-0.5));
        assert_eq!(v(UserEvent::PraiseRemark), Some(1.0));
        assert_eq!(v(UserEvent::ComplaintRemark), Some(-1.0));
        assert_eq!(v(UserEvent::Pause(10.0)), Some(0.25));
        assert_eq!(v(UserEvent::Pause(5.0)), Some(0.25));
        assert_eq!(v(UserEvent::Pause(4.9)), None);
        assert_eq!(v(UserEvent::Other), None);
    }

    #[test]
    fn remark_phrases() {
        let cfg = RewardConfig::default();
        assert_eq!(classify_remark("That's wrong!", &cfg), Some(UserEvent::ComplaintRemark));
        assert_eq!(classify_remark("Thanks", &cfg), Some(UserEvent::PraiseRemark));
        assert_eq!(classify_remark("no", &cfg), Some(UserEvent::ComplaintRemark));
        assert_eq!(classify_remark("no information here", &cfg), None);
        assert_eq!(classify_remark("move it closer", &cfg), None);
    }

    #[test]
    fn confidence_clamps() {
        assert_eq!(nudge_confidence(0.9, 0.5), 1.0);
        assert_eq!(nudge_confidence(0.1, -0.5), 0.0);
        assert_eq!(nudge_confidence(0.4, 0.0), 0.4);
    }
}
