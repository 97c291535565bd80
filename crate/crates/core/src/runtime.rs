//! Agent runtime: spawning and retiring agents, the name server, mailboxes,
//! the scheduler and the message trace.

use std::any::Any;
use std::collections::{BTreeMap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::learning::{LearningConfig, LearningError, PolicyEntry, PolicyStore};
use crate::types::{
    Address, AgentId, AgentName, CommunityName, Confidence, Content, Message, Performative, Point,
    RequestCounter, RequestId, TypeError, UserId,
};
use crate::whitebox::{AddressBook, AgentRole, Ctx, WhiteBox};
use crate::wire::{encode_message, WireError};

pub const DEFAULT_MAX_STEPS: usize = 10_000;

#[derive(Debug, Error)]
pub enum RuntimeError {
    #[error("agent name {0} is already taken")]
    DuplicateName(AgentName),
    #[error("no live agent named {0}")]
    UnknownAgent(AgentName),
    #[error("no quiescence after {steps} deliveries")]
    Livelock { steps: usize, trace: Vec<TraceEvent> },
    #[error(transparent)]
    Type(#[from] TypeError),
    #[error(transparent)]
    Learning(#[from] LearningError),
}

/// A request handed to a process unit for execution.
#[derive(Debug, Clone, PartialEq)]
pub struct Job {
    pub request: RequestId,
    pub user: UserId,
    pub text: String,
    pub pointer: Option<Point>,
    pub confidence: Confidence,
}

/// A message before the runtime stamps sender and sequence number.
#[derive(Debug, Clone, PartialEq)]
pub struct Outgoing {
    pub performative: Performative,
    pub recipients: Vec<AgentName>,
    pub user: UserId,
    pub request: RequestId,
    pub content: Content,
}

/// Something that happened outside the agent community. `at` is session
/// time in seconds.
#[derive(Debug, Clone, PartialEq)]
pub enum ExternalEvent {
    Said { user: UserId, text: String, at: f64 },
    Pointed { user: UserId, point: Point, at: f64 },
    Answered { user: UserId, text: String, at: f64 },
    Remark { user: UserId, text: String, at: f64 },
    Paused { user: UserId, seconds: f64, at: f64 },
    Tick { at: f64 },
    Reward {
        user: UserId,
        request: RequestId,
        value: f64,
        to: AgentName,
    },
}

/// What a process unit may do to the outside: mint request ids and send.
pub struct Io<'a> {
    me: &'a AgentName,
    counter: &'a mut RequestCounter,
    now: f64,
    sends: Vec<Outgoing>,
}

impl<'a> Io<'a> {
    pub fn new(me: &'a AgentName, counter: &'a mut RequestCounter, now: f64) -> Self {
        Self {
            me,
            counter,
            now,
            sends: Vec::new(),
        }
    }

    pub fn me(&self) -> &AgentName {
        self.me
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn next_request_id(&mut self) -> RequestId {
        self.counter.next_request_id()
    }

    pub fn send(
        &mut self,
        performative: Performative,
        recipients: Vec<AgentName>,
        user: UserId,
        request: RequestId,
        content: Content,
    ) {
        self.sends.push(Outgoing {
            performative,
            recipients,
            user,
            request,
            content,
        });
    }

    pub fn into_sends(self) -> Vec<Outgoing> {
        self.sends
    }
}

/// The domain-specific core of an agent.
pub trait ProcessUnit: Send {
    /// Carries out a request this agent won; returns output payloads.
    fn process(&mut self, _job: &Job, _io: &mut Io<'_>) -> Vec<String> {
        Vec::new()
    }
    fn external(&mut self, _event: &ExternalEvent, _io: &mut Io<'_>) {}
    /// Messages outside the interpretation protocol.
    fn message(&mut self, _msg: &Message, _io: &mut Io<'_>) {}
    /// Runs once the community has gone quiet.
    fn settle(&mut self, _io: &mut Io<'_>) {}
    fn reward(&mut self, _request: &RequestId, _share: f64) {}
    fn as_any(&self) -> &dyn Any;
}

pub struct AgentSpec {
    pub name: AgentName,
    pub priority: u32,
    pub role: AgentRole,
    pub root: bool,
    pub process: Option<Box<dyn ProcessUnit>>,
    pub initial_policy: Vec<PolicyEntry>,
    pub initial_address_book: Vec<(CommunityName, Vec<AgentName>)>,
    pub output_to: Option<AgentName>,
    /// Extra recipients of every OUTPUT this agent emits.
    pub notify_outputs: Vec<AgentName>,
}

impl AgentSpec {
    pub fn new(name: AgentName, role: AgentRole) -> Self {
        Self {
            name,
            priority: 0,
            role,
            root: false,
            process: None,
            initial_policy: Vec::new(),
            initial_address_book: Vec::new(),
            output_to: None,
            notify_outputs: Vec::new(),
        }
    }

    pub fn interpreter(name: AgentName) -> Self {
        Self::new(name, AgentRole::Interpreter)
    }

    pub fn priority(mut self, p: u32) -> Self {
        self.priority = p;
        self
    }

    pub fn root(mut self) -> Self {
        self.root = true;
        self
    }

    pub fn process(mut self, unit: impl ProcessUnit + 'static) -> Self {
        self.process = Some(Box::new(unit));
        self
    }

    pub fn policy(mut self, entries: Vec<PolicyEntry>) -> Self {
        self.initial_policy = entries;
        self
    }

    pub fn community(mut self, community: CommunityName, members: Vec<AgentName>) -> Self {
        self.initial_address_book.push((community, members));
        self
    }

    pub fn output_to(mut self, agent: AgentName) -> Self {
        self.output_to = Some(agent);
        self
    }

    pub fn notify(mut self, agent: AgentName) -> Self {
        self.notify_outputs.push(agent);
        self
    }
}

/// One delivered copy, narrowed to its single recipient.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceEvent {
    pub step: u64,
    pub message: Message,
}

impl TraceEvent {
    /// `step<TAB>record`, without a trailing newline.
    pub fn to_line(&self) -> Result<String, WireError> {
        let rec = encode_message(&self.message)?;
        Ok(format!("{}\t{}", self.step, rec.trim_end_matches('\n')))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeadLetter {
    pub step: u64,
    pub message: Message,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostic {
    pub step: u64,
    pub text: String,
}

#[derive(Debug, Clone)]
pub struct RuntimeConfig {
    /// `None` delivers in global FIFO order; `Some(seed)` picks a random
    /// non-empty mailbox at each step.
    pub seed: Option<u64>,
    pub max_steps: usize,
    pub keep_share: f64,
    pub learning: LearningConfig,
}

impl Default for RuntimeConfig {
    fn default() -> Self {
        Self {
            seed: None,
            max_steps: DEFAULT_MAX_STEPS,
            keep_share: 0.5,
            learning: LearningConfig::default(),
        }
    }
}

pub struct Runtime {
    config: RuntimeConfig,
    agents: BTreeMap<AgentName, WhiteBox>,
    addresses: BTreeMap<AgentName, Address>,
    next_address: u64,
    seqs: BTreeMap<AgentName, u64>,
    mailboxes: BTreeMap<AgentName, VecDeque<(u64, Message)>>,
    enqueued: u64,
    step: u64,
    now: f64,
    trace: Vec<TraceEvent>,
    dead: Vec<DeadLetter>,
    diagnostics: Vec<Diagnostic>,
    store: PolicyStore,
    rng: Option<ChaCha8Rng>,
}

impl Runtime {
    pub fn new(config: RuntimeConfig) -> Self {
        Self {
            rng: config.seed.map(ChaCha8Rng::seed_from_u64),
            store: PolicyStore::new(config.learning),
            config,
            agents: BTreeMap::new(),
            addresses: BTreeMap::new(),
            next_address: 1,
            seqs: BTreeMap::new(),
            mailboxes: BTreeMap::new(),
            enqueued: 0,
            step: 0,
            now: 0.0,
            trace: Vec::new(),
            dead: Vec::new(),
            diagnostics: Vec::new(),
        }
    }

    pub fn spawn(&mut self, spec: AgentSpec) -> Result<AgentId, RuntimeError> {
        if self.agents.contains_key(&spec.name) {
            return Err(RuntimeError::DuplicateName(spec.name));
        }
        self.store.set_presets(&spec.name, spec.initial_policy)?;
        let address = Address(self.next_address);
        self.next_address += 1;
        let mut book = AddressBook::default();
        for (community, members) in spec.initial_address_book {
            for m in members {
                if let (Some(w), Some(a)) = (self.agents.get(&m), self.addresses.get(&m)) {
                    book.register(m.clone(), *a, w.priority());
                }
                book.advertise(community.clone(), m);
            }
        }
        for w in self.agents.values_mut() {
            let listed = w
                .address_book()
                .communities()
                .any(|(_, e)| e.members.contains(&spec.name));
            if listed {
                w.address_book_mut()
                    .register(spec.name.clone(), address, spec.priority);
            }
        }
        let wb = WhiteBox::new(
            spec.name.clone(),
            spec.priority,
            spec.role,
            spec.root,
            spec.output_to,
            spec.notify_outputs,
            book,
            self.config.keep_share,
            spec.process,
        );
        self.addresses.insert(spec.name.clone(), address);
        self.mailboxes.entry(spec.name.clone()).or_default();
        self.agents.insert(spec.name.clone(), wb);
        Ok(AgentId {
            name: spec.name,
            address,
        })
    }

    /// Joins `member` to `community` in `parent`'s address book by message:
    /// REGISTER then ADVERTISE.
    pub fn join(
        &mut self,
        member: &AgentName,
        parent: &AgentName,
        community: &CommunityName,
    ) -> Result<(), RuntimeError> {
        let w = self
            .agents
            .get(member)
            .ok_or_else(|| RuntimeError::UnknownAgent(member.clone()))?;
        let priority = w.priority();
        let address = self.addresses[member];
        let user = UserId::system();
        let request = RequestId::system();
        self.send(
            member,
            Outgoing {
                performative: Performative::Register,
                recipients: vec![parent.clone()],
                user: user.clone(),
                request: request.clone(),
                content: Content::Register { address, priority },
            },
        )?;
        self.send(
            member,
            Outgoing {
                performative: Performative::Advertise,
                recipients: vec![parent.clone()],
                user,
                request,
                content: Content::Community(community.clone()),
            },
        )
    }

    /// Removes an agent. Undelivered mail to it becomes dead letters and
    /// every agent waiting on it receives NOT_MINE in its name.
    pub fn retire(&mut self, name: &AgentName) -> Result<(), RuntimeError> {
        if self.agents.remove(name).is_none() {
            return Err(RuntimeError::UnknownAgent(name.clone()));
        }
        self.addresses.remove(name);
        let queued = self.mailboxes.remove(name).unwrap_or_default();
        let mut owed: Vec<(AgentName, UserId, RequestId)> = Vec::new();
        for (_, m) in queued {
            if m.performative == Performative::ThisIsYours {
                owed.push((m.sender.clone(), m.user.clone(), m.request.clone()));
            }
            self.dead.push(DeadLetter {
                step: self.step,
                message: m,
                reason: format!("{name} retired"),
            });
        }
        for (agent, w) in &self.agents {
            for (req, user) in w.awaiting_with_user(name) {
                owed.push((agent.clone(), user, req));
            }
        }
        for (to, user, request) in owed {
            self.enqueue_not_mine(name, to, user, request)?;
        }
        let names: Vec<AgentName> = self.agents.keys().cloned().collect();
        for n in names {
            let w = self.agents.get_mut(&n).expect("listed");
            for gone in w.address_book_mut().forget_agent(name) {
                self.store.forget_community(&n, &gone);
            }
        }
        Ok(())
    }

    fn enqueue_not_mine(
        &mut self,
        from: &AgentName,
        to: AgentName,
        user: UserId,
        request: RequestId,
    ) -> Result<(), RuntimeError> {
        self.send(
            from,
            Outgoing {
                performative: Performative::NotMine,
                recipients: vec![to],
                user,
                request,
                content: Content::Empty,
            },
        )
    }

    /// Stamps and enqueues a message from `sender`, one copy per recipient
    /// in name order.
    pub fn send(&mut self, sender: &AgentName, out: Outgoing) -> Result<(), RuntimeError> {
        let seq = self.seqs.entry(sender.clone()).or_insert(0);
        *seq += 1;
        let mut recipients = out.recipients;
        recipients.sort();
        recipients.dedup();
        let msg = Message::new(
            out.performative,
            sender.clone(),
            recipients.clone(),
            out.user,
            out.request,
            *seq,
            out.content,
        )?;
        for r in recipients {
            let mut copy = msg.clone();
            copy.recipients = vec![r.clone()];
            match self.mailboxes.get_mut(&r) {
                Some(q) if self.agents.contains_key(&r) => {
                    self.enqueued += 1;
                    q.push_back((self.enqueued, copy));
                }
                _ => {
                    let owes = matches!(
                        copy.performative,
                        Performative::IsThisYours | Performative::ThisIsYours
                    );
                    let (user, request) = (copy.user.clone(), copy.request.clone());
                    self.dead.push(DeadLetter {
                        step: self.step,
                        message: copy,
                        reason: format!("no agent named {r}"),
                    });
                    if owes && self.agents.contains_key(sender) {
                        self.enqueue_not_mine(&r, sender.clone(), user, request)?;
                    }
                }
            }
        }
        Ok(())
    }

    pub fn set_now(&mut self, at: f64) {
        self.now = at;
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    /// Delivers an outside event to an agent's process unit.
    pub fn external(&mut self, agent: &AgentName, event: &ExternalEvent) -> Result<(), RuntimeError> {
        let w = self
            .agents
            .get_mut(agent)
            .ok_or_else(|| RuntimeError::UnknownAgent(agent.clone()))?;
        let mut ctx = Ctx::new(&mut self.store, self.now);
        w.external(event, &mut ctx);
        let (out, diags) = (ctx.out, ctx.diagnostics);
        self.absorb(agent, out, diags)
    }

    fn absorb(
        &mut self,
        agent: &AgentName,
        out: Vec<Outgoing>,
        diags: Vec<String>,
    ) -> Result<(), RuntimeError> {
        for text in diags {
            tracing::debug!(step = self.step, "{text}");
            self.diagnostics.push(Diagnostic {
                step: self.step,
                text,
            });
        }
        for o in out {
            self.send(agent, o)?;
        }
        Ok(())
    }

    fn next_mailbox(&mut self) -> Option<AgentName> {
        let live = self.mailboxes.iter().filter(|(_, q)| !q.is_empty());
        match &mut self.rng {
            None => live
                .min_by_key(|(_, q)| q.front().map(|(n, _)| *n))
                .map(|(a, _)| a.clone()),
            Some(rng) => {
                let names: Vec<&AgentName> = live.map(|(a, _)| a).collect();
                if names.is_empty() {
                    return None;
                }
                Some(names[rng.random_range(0..names.len())].clone())
            }
        }
    }

    /// Delivers one message. Returns `false` when every mailbox is empty.
    pub fn step(&mut self) -> Result<bool, RuntimeError> {
        let Some(to) = self.next_mailbox() else {
            return Ok(false);
        };
        let (_, msg) = self
            .mailboxes
            .get_mut(&to)
            .and_then(VecDeque::pop_front)
            .expect("chosen mailbox is non-empty");
        self.step += 1;
        self.trace.push(TraceEvent {
            step: self.step,
            message: msg.clone(),
        });
        let w = self.agents.get_mut(&to).expect("mailboxes exist only for live agents");
        let mut ctx = Ctx::new(&mut self.store, self.now);
        w.handle(&msg, &mut ctx);
        let (out, diags) = (ctx.out, ctx.diagnostics);
        self.absorb(&to, out, diags)?;
        Ok(true)
    }

    /// Delivers until no mail is left and no agent has anything to say when
    /// asked to settle. Returns the number of deliveries.
    pub fn run_until_quiescent(&mut self) -> Result<usize, RuntimeError> {
        let mut steps = 0;
        loop {
            while self.step()? {
                steps += 1;
                if steps > self.config.max_steps {
                    return Err(RuntimeError::Livelock {
                        steps,
                        trace: self.trace.clone(),
                    });
                }
            }
            let names: Vec<AgentName> = self.agents.keys().cloned().collect();
            for n in &names {
                let w = self.agents.get_mut(n).expect("listed");
                let mut ctx = Ctx::new(&mut self.store, self.now);
                w.settle(&mut ctx);
                let (out, diags) = (ctx.out, ctx.diagnostics);
                self.absorb(n, out, diags)?;
            }
            if self.mailboxes.values().all(VecDeque::is_empty) {
                return Ok(steps);
            }
        }
    }

    pub fn trace(&self) -> &[TraceEvent] {
        &self.trace
    }

    pub fn dead_letters(&self) -> &[DeadLetter] {
        &self.dead
    }

    pub fn diagnostics(&self) -> &[Diagnostic] {
        &self.diagnostics
    }

    pub fn agent(&self, name: &AgentName) -> Option<&WhiteBox> {
        self.agents.get(name)
    }

    pub fn agent_names(&self) -> impl Iterator<Item = &AgentName> {
        self.agents.keys()
    }

    pub fn address_of(&self, name: &AgentName) -> Option<Address> {
        self.addresses.get(name).copied()
    }

    /// The process unit of `name`, if it has one of type `T`.
    pub fn unit<T: 'static>(&self, name: &AgentName) -> Option<&T> {
        self.agents
            .get(name)?
            .process_unit()?
            .as_any()
            .downcast_ref::<T>()
    }

    pub fn store(&self) -> &PolicyStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut PolicyStore {
        &mut self.store
    }

    pub fn pending_messages(&self) -> usize {
        self.mailboxes.values().map(VecDeque::len).sum()
    }
}
