//! Interpretation policy store: a preset knowledge base per agent plus
//! learned knowledge bases per user, memorization of user answers,
//! contradiction resolution and feedback-driven conflict resolution.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::types::{normalize_text, tokens, AgentName, CommunityName, UserId};

#[derive(Debug, Error)]
pub enum LearningError {
    #[error("agent {agent} does not know community {community}")]
    UnknownCommunity {
        agent: AgentName,
        community: CommunityName,
    },
    #[error("preset entries must be global, got user {0}")]
    ScopedPreset(UserId),
    #[error("weight {0} outside [0, 1]")]
    Weight(f64),
    #[error("kb line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("kb io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Target {
    /// The agent's own process unit.
    Own,
    Community(CommunityName),
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Target::Own => f.write_str("SELF"),
            Target::Community(c) => write!(f, "{c}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Preset,
    Learned,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Preset => "preset",
            Provenance::Learned => "learned",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Scope {
    Global,
    User(UserId),
}

/// One interpretation-policy rule.
///
/// Preset patterns match when their tokens occur contiguously in the request
/// (keyword presence). Learned patterns are memorized whole phrases and match
/// only the identical normalized request.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyEntry {
    pub pattern: Vec<String>,
    pub target: Target,
    pub provenance: Provenance,
    pub weight: f64,
    pub scope: Scope,
    pub created_step: u64,
}

impl PolicyEntry {
    pub fn preset(pattern: &str, target: Target) -> Self {
        Self {
            pattern: tokens(&normalize_text(pattern)).map(str::to_string).collect(),
            target,
            provenance: Provenance::Preset,
            weight: 1.0,
            scope: Scope::Global,
            created_step: 0,
        }
    }

    pub fn pattern_text(&self) -> String {
        self.pattern.join(" ")
    }

    pub fn matches(&self, text: &str) -> bool {
        let words: Vec<&str> = tokens(text).collect();
        if self.pattern.is_empty() {
            return false;
        }
        match self.provenance {
            Provenance::Learned => words.len() == self.pattern.len()
                && words.iter().zip(&self.pattern).all(|(w, p)| w == p),
            Provenance::Preset => words
                .windows(self.pattern.len())
                .any(|win| win.iter().zip(&self.pattern).all(|(w, p)| w == p)),
        }
    }

    fn view_order(a: &PolicyEntry, b: &PolicyEntry) -> std::cmp::Ordering {
        b.pattern
            .len()
            .cmp(&a.pattern.len())
            .then(b.weight.total_cmp(&a.weight))
            .then(a.created_step.cmp(&b.created_step))
    }
}

/// Ordered snapshot of the entries an agent consults for one user: learned
/// for that user first, then presets.
#[derive(Debug, Clone, Default)]
pub struct PolicyView {
    pub entries: Vec<PolicyEntry>,
}

impl PolicyView {
    /// Matching entries in view order. If any learned entry matches, the
    /// preset tier is not consulted.
    pub fn matching(&self, text: &str) -> Vec<&PolicyEntry> {
        let hits: Vec<&PolicyEntry> = self.entries.iter().filter(|e| e.matches(text)).collect();
        if hits.iter().any(|e| e.provenance == Provenance::Learned) {
            hits.into_iter()
                .filter(|e| e.provenance == Provenance::Learned)
                .collect()
        } else {
            hits
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LearningConfig {
    /// Multiplier applied to a learned weight on negative feedback.
    pub decay: f64,
    /// Learned entries at or below this weight are dropped.
    pub removal_threshold: f64,
    /// Fraction of the remaining gap to 1 closed on positive feedback.
    pub reinforcement: f64,
}

impl Default for LearningConfig {
    fn default() -> Self {
        Self {
            decay: 0.5,
            removal_threshold: 0.25,
            reinforcement: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ResetScope {
    System,
    User(UserId),
}

#[derive(Debug, Clone, Default)]
struct AgentPolicy {
    preset: Vec<PolicyEntry>,
    learned: BTreeMap<UserId, Vec<PolicyEntry>>,
}

/// Every agent's interpretation policy, keyed by agent name. Learned entries
/// survive agent retirement so a replacement with the same name inherits
/// them.
#[derive(Debug, Clone, Default)]
pub struct PolicyStore {
    agents: BTreeMap<AgentName, AgentPolicy>,
    config: LearningConfig,
    clock: u64,
}

impl PolicyStore {
    pub fn new(config: LearningConfig) -> Self {
        Self {
            config,
            ..Default::default()
        }
    }

    pub fn config(&self) -> LearningConfig {
        self.config
    }

    /// Installs the hard-coded startup policy for `agent`, replacing any
    /// previous presets. Learned entries are kept.
    pub fn set_presets(
        &mut self,
        agent: &AgentName,
        entries: Vec<PolicyEntry>,
    ) -> Result<(), LearningError> {
        for e in &entries {
            if let Scope::User(u) = &e.scope {
                return Err(LearningError::ScopedPreset(u.clone()));
            }
            if !(0.0..=1.0).contains(&e.weight) {
                return Err(LearningError::Weight(e.weight));
            }
        }
        let presets = entries
            .into_iter()
            .map(|mut e| {
                e.provenance = Provenance::Preset;
                e
            })
            .collect();
        self.agents.entry(agent.clone()).or_default().preset = presets;
        Ok(())
    }

    /// Adds one preset unless an entry with the same pattern exists.
    pub fn add_preset(&mut self, agent: &AgentName, entry: PolicyEntry) {
        let p = self.agents.entry(agent.clone()).or_default();
        if !p.preset.iter().any(|e| e.pattern == entry.pattern) {
            p.preset.push(PolicyEntry {
                provenance: Provenance::Preset,
                scope: Scope::Global,
                ..entry
            });
        }
    }

    pub fn view(&self, agent: &AgentName, user: &UserId) -> PolicyView {
        let Some(p) = self.agents.get(agent) else {
            return PolicyView::default();
        };
        let mut learned: Vec<PolicyEntry> = p.learned.get(user).cloned().unwrap_or_default();
        learned.sort_by(PolicyEntry::view_order);
        let mut preset = p.preset.clone();
        preset.sort_by(PolicyEntry::view_order);
        learned.extend(preset);
        PolicyView { entries: learned }
    }

    /// All entries matching `text` for `(agent, user)`, in view order.
    pub fn lookup(&self, agent: &AgentName, user: &UserId, text: &str) -> Vec<PolicyEntry> {
        let text = normalize_text(text);
        self.view(agent, user)
            .entries
            .into_iter()
            .filter(|e| e.matches(&text))
            .collect()
    }

    /// Memorizes `text -> community` for this user. A second identical
    /// lesson is a no-op; a lesson with a new target replaces the old one.
    pub fn learn_mapping(
        &mut self,
        agent: &AgentName,
        user: &UserId,
        text: &str,
        community: &CommunityName,
        known: impl Fn(&CommunityName) -> bool,
    ) -> Result<(), LearningError> {
        if !known(community) {
            return Err(LearningError::UnknownCommunity {
                agent: agent.clone(),
                community: community.clone(),
            });
        }
        let pattern: Vec<String> = tokens(&normalize_text(text)).map(str::to_string).collect();
        let target = Target::Community(community.clone());
        self.clock += 1;
        let created_step = self.clock;
        let entries = self
            .agents
            .entry(agent.clone())
            .or_default()
            .learned
            .entry(user.clone())
            .or_default();
        if let Some(e) = entries.iter_mut().find(|e| e.pattern == pattern) {
            if e.target != target {
                e.target = target;
                e.weight = 1.0;
                e.created_step = created_step;
            }
            return Ok(());
        }
        entries.push(PolicyEntry {
            pattern,
            target,
            provenance: Provenance::Learned,
            weight: 1.0,
            scope: Scope::User(user.clone()),
            created_step,
        });
        Ok(())
    }

    /// Adjusts the learned entry for `(user, text)` from a reward share.
    /// Negative rewards decay the weight and drop the entry once it reaches
    /// the removal threshold; positive rewards close part of the gap to 1.
    /// Returns the new weight, or `None` if no entry matched or it was
    /// removed.
    pub fn apply_feedback_conflict(
        &mut self,
        agent: &AgentName,
        user: &UserId,
        text: &str,
        reward: f64,
    ) -> Option<f64> {
        let text = normalize_text(text);
        let cfg = self.config;
        let entries = self.agents.get_mut(agent)?.learned.get_mut(user)?;
        let idx = entries.iter().position(|e| e.matches(&text))?;
        let e = &mut entries[idx];
        if reward < 0.0 {
            e.weight *= cfg.decay;
            if e.weight <= cfg.removal_threshold {
                entries.remove(idx);
                return None;
            }
        } else if reward > 0.0 {
            e.weight += (1.0 - e.weight) * cfg.reinforcement;
        }
        Some(e.weight)
    }

    /// Drops learned entries that route to a community that no longer exists.
    pub fn forget_community(&mut self, agent: &AgentName, community: &CommunityName) {
        if let Some(p) = self.agents.get_mut(agent) {
            let target = Target::Community(community.clone());
            for entries in p.learned.values_mut() {
                entries.retain(|e| e.target != target);
            }
        }
    }

    pub fn reset(&mut self, scope: &ResetScope) {
        for p in self.agents.values_mut() {
            match scope {
                ResetScope::System => p.learned.clear(),
                ResetScope::User(u) => {
                    p.learned.remove(u);
                }
            }
        }
    }

    /// Every learned entry as `(agent, entry)`, in a stable order.
    pub fn learned_entries(&self) -> Vec<(AgentName, PolicyEntry)> {
        let mut out = Vec::new();
        for (agent, p) in &self.agents {
            for entries in p.learned.values() {
                let mut sorted = entries.clone();
                sorted.sort_by(|a, b| a.pattern.cmp(&b.pattern));
                out.extend(sorted.into_iter().map(|e| (agent.clone(), e)));
            }
        }
        out
    }

    pub fn to_kb_string(&self) -> String {
        let mut out = String::new();
        for (agent, e) in self.learned_entries() {
            let Scope::User(user) = &e.scope else {
                continue;
            };
            out.push_str(&format!(
                "{agent}\t{user}\t{}\t{}\t{}\t{}\n",
                e.pattern_text(),
                e.target,
                e.weight,
                e.provenance.as_str()
            ));
        }
        out
    }

    /// Replaces all learned entries with the contents of `kb`. On error the
    /// store is left untouched.
    pub fn load_kb_str(&mut self, kb: &str) -> Result<(), LearningError> {
        let mut parsed: Vec<(AgentName, UserId, PolicyEntry)> = Vec::new();
        for (i, line) in kb.lines().enumerate() {
            let line_no = i + 1;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |reason: String| LearningError::Malformed {
                line: line_no,
                reason,
            };
            let fields: Vec<&str> = line.split('\t').collect();
            let [agent, user, pattern, target, weight, provenance] = fields[..] else {
                return Err(bad(format!("expected 6 tab-separated fields, got {}", fields.len())));
            };
            let agent = AgentName::new(agent).map_err(|e| bad(e.to_string()))?;
            let user = UserId::new(user).map_err(|e| bad(e.to_string()))?;
            if normalize_text(pattern) != pattern || pattern.is_empty() {
                return Err(bad(format!("pattern {pattern:?} is not normalized")));
            }
            let target = match target {
                "SELF" => Target::Own,
                c => Target::Community(CommunityName::new(c).map_err(|e| bad(e.to_string()))?),
            };
            let weight: f64 = weight
                .parse()
                .map_err(|_| bad(format!("weight {weight:?} is not a number")))?;
            if !(0.0..=1.0).contains(&weight) {
                return Err(bad(format!("weight {weight} outside [0, 1]")));
            }
            if provenance != "learned" {
                return Err(bad(format!("provenance {provenance:?}: only learned entries are stored")));
            }
            parsed.push((
                agent,
                user.clone(),
                PolicyEntry {
                    pattern: pattern.split(' ').map(str::to_string).collect(),
                    target,
                    provenance: Provenance::Learned,
                    weight,
                    scope: Scope::User(user),
                    created_step: line_no as u64,
                },
            ));
        }
        self.reset(&ResetScope::System);
        for (agent, user, entry) in parsed {
            self.clock = self.clock.max(entry.created_step);
            let entries = self
                .agents
                .entry(agent)
                .or_default()
                .learned
                .entry(user)
                .or_default();
            entries.retain(|e| e.pattern != entry.pattern);
            entries.push(entry);
        }
        Ok(())
    }

    pub fn save_kb(&self, path: impl AsRef<Path>) -> Result<(), LearningError> {
        fs::write(path, self.to_kb_string())?;
        Ok(())
    }

    pub fn load_kb(&mut self, path: impl AsRef<Path>) -> Result<(), LearningError> {
        let text = fs::read_to_string(path)?;
        self.load_kb_str(&text)
    }
}

/// A claim under consideration at a contradiction point.
#[derive(Debug, Clone, PartialEq)]
pub struct Contender {
    pub claimant: AgentName,
    pub priority: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Resolution {
    Dispatch(AgentName),
    AskUser {
        question: String,
        options: Vec<String>,
    },
}

/// A unique claim with strictly maximal priority wins outright; any tie at
/// the top is put to the user.
pub fn resolve_contradiction(claims: &[Contender]) -> Resolution {
    let top = claims.iter().map(|c| c.priority).max();
    let leaders: Vec<&Contender> = claims
        .iter()
        .filter(|c| Some(c.priority) == top)
        .collect();
    if let [only] = leaders[..] {
        return Resolution::Dispatch(only.claimant.clone());
    }
    let mut options: Vec<String> = leaders.iter().map(|c| c.claimant.to_string()).collect();
    options.sort();
    options.dedup();
    Resolution::AskUser {
        question: question_text(&options),
        options,
    }
}

/// `Do you mean a or b?`, or `Do you mean a, b or c?` for longer lists.
pub fn question_text(options: &[String]) -> String {
    let body = match options {
        [] => String::new(),
        [one] => one.clone(),
        [init @ .., last] => format!("{} or {last}", init.join(", ")),
    };
    format!("Do you mean {body}?")
}

/// Index of the option the user's answer names, ignoring case, punctuation
/// and the hyphen/space distinction.
pub fn match_answer(answer: &str, options: &[String]) -> Option<usize> {
    let canon = |s: &str| normalize_text(&s.replace('-', " "));
    let a = canon(answer);
    options.iter().position(|o| canon(o) == a)
}
