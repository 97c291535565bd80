//! The communications unit every agent wraps around its process unit:
//! address book, request records, and the interpretation protocol.

use std::collections::{BTreeMap, BTreeSet};

use crate::learning::{
    match_answer, resolve_contradiction, Contender, PolicyEntry, PolicyStore, PolicyView, Resolution, Target,
};
use crate::rewards::{nudge_confidence, RewardsUnit};
use crate::runtime::{ExternalEvent, Io, Job, Outgoing, ProcessUnit};
use crate::types::{
    Address, AgentName, CommunityName, Confidence, Content, Message, Performative, RequestCounter,
    RequestId, RequestText, UserId,
};

/// Starting value of every community's confidence accumulator.
pub const INITIAL_COMMUNITY_CONFIDENCE: f64 = 0.5;

pub const CANNOT_INTERPRET: &str = "I cannot interpret this";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AgentRole {
    Interpreter,
    Input,
    Output,
    Feedback,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KnownAgent {
    pub address: Address,
    pub priority: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CommunityEntry {
    pub members: BTreeSet<AgentName>,
    pub confidence: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Unadvertised {
    NotMember,
    Removed,
    /// The last member left; the community no longer exists.
    CommunityGone,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AddressBook {
    agents: BTreeMap<AgentName, KnownAgent>,
    communities: BTreeMap<CommunityName, CommunityEntry>,
}

impl AddressBook {
    pub fn register(&mut self, name: AgentName, address: Address, priority: u32) {
        self.agents.insert(name, KnownAgent { address, priority });
    }

    pub fn agent(&self, name: &AgentName) -> Option<&KnownAgent> {
        self.agents.get(name)
    }

    pub fn priority_of(&self, name: &AgentName) -> u32 {
        self.agents.get(name).map_or(0, |a| a.priority)
    }

    pub fn advertise(&mut self, community: CommunityName, member: AgentName) {
        self.communities
            .entry(community)
            .or_insert_with(|| CommunityEntry {
                members: BTreeSet::new(),
                confidence: INITIAL_COMMUNITY_CONFIDENCE,
            })
            .members
            .insert(member);
    }

    pub fn unadvertise(&mut self, community: &CommunityName, member: &AgentName) -> Unadvertised {
        let Some(entry) = self.communities.get_mut(community) else {
            return Unadvertised::NotMember;
        };
        if !entry.members.remove(member) {
            return Unadvertised::NotMember;
        }
        if entry.members.is_empty() {
            self.communities.remove(community);
            Unadvertised::CommunityGone
        } else {
            Unadvertised::Removed
        }
    }

    /// Removes `name` everywhere; returns the communities that vanished.
    pub fn forget_agent(&mut self, name: &AgentName) -> Vec<CommunityName> {
        self.agents.remove(name);
        let held: Vec<CommunityName> = self
            .communities
            .iter()
            .filter(|(_, e)| e.members.contains(name))
            .map(|(c, _)| c.clone())
            .collect();
        held.into_iter()
            .filter(|c| self.unadvertise(c, name) == Unadvertised::CommunityGone)
            .collect()
    }

    pub fn communities(&self) -> impl Iterator<Item = (&CommunityName, &CommunityEntry)> {
        self.communities.iter()
    }

    pub fn members(&self, community: &CommunityName) -> Vec<AgentName> {
        self.communities
            .get(community)
            .map(|e| e.members.iter().cloned().collect())
            .unwrap_or_default()
    }

    pub fn knows(&self, community: &CommunityName) -> bool {
        self.communities
            .get(community)
            .is_some_and(|e| !e.members.is_empty())
    }

    pub fn confidence(&self, community: &CommunityName) -> f64 {
        self.communities
            .get(community)
            .map_or(INITIAL_COMMUNITY_CONFIDENCE, |e| e.confidence)
    }

    pub fn update_address_confidence(&mut self, community: &CommunityName, delta: f64) {
        if let Some(e) = self.communities.get_mut(community) {
            e.confidence = nudge_confidence(e.confidence, delta);
        }
    }

    /// Member to hand a request to when a community is chosen without
    /// asking: highest priority, then highest confidence of the community
    /// named after the member, then name.
    pub fn choose_member(
        &self,
        community: &CommunityName,
        exclude: &[&AgentName],
    ) -> Option<AgentName> {
        let entry = self.communities.get(community)?;
        entry
            .members
            .iter()
            .filter(|m| !exclude.contains(m))
            .max_by(|a, b| {
                let key = |m: &AgentName| (self.priority_of(m), self.confidence(&m.into()));
                let (pa, ca) = key(a);
                let (pb, cb) = key(b);
                pa.cmp(&pb)
                    .then(ca.total_cmp(&cb))
                    .then(b.cmp(a))
            })
            .cloned()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Interpretation {
    Mine(Confidence),
    Route(Vec<(CommunityName, Confidence)>),
    Unknown,
}

/// Consults the policy view. A matching self-rule wins if the agent can
/// process requests; otherwise every matched community this agent can
/// reach is a route.
pub fn interpret(
    view: &PolicyView,
    book: &AddressBook,
    text: &str,
    can_process: bool,
) -> Interpretation {
    let hits = view.matching(text);
    let own = hits
        .iter()
        .filter(|e| e.target == Target::Own)
        .map(|e| e.weight)
        .reduce(f64::max);
    if let (Some(w), true) = (own, can_process) {
        return Interpretation::Mine(Confidence::new(w).unwrap_or_default());
    }
    let mut routes: BTreeMap<CommunityName, f64> = BTreeMap::new();
    for e in &hits {
        if let Target::Community(c) = &e.target {
            if book.knows(c) {
                let w = routes.entry(c.clone()).or_insert(0.0);
                *w = w.max(e.weight);
            }
        }
    }
    if routes.is_empty() {
        return Interpretation::Unknown;
    }
    Interpretation::Route(
        routes
            .into_iter()
            .map(|(c, w)| (c, Confidence::new(w).unwrap_or_default()))
            .collect(),
    )
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Requester {
    Agent(AgentName),
    /// Requests arriving at a root agent; nobody is owed a reply.
    External,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Interpreting,
    Querying,
    /// Sent IT_IS_MINE upward and waits for THIS_IS_YOURS.
    Claimed,
    AwaitingResolution,
    AwaitingUser,
    Dispatched,
    Closed,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Chosen {
    Own,
    Member {
        community: CommunityName,
        agent: AgentName,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Claim {
    pub community: CommunityName,
    pub claimant: AgentName,
    pub confidence: Confidence,
    pub priority: u32,
    pub tentative: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Reply {
    Claim {
        confidence: Confidence,
        priority: u32,
        tentative: bool,
    },
    Denial,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RequestRecord {
    pub request: RequestId,
    pub user: UserId,
    pub text: RequestText,
    pub requester: Requester,
    pub arrived_as: Performative,
    pub phase: Phase,
    /// Communities queried that have not fully answered.
    pub outstanding: BTreeSet<CommunityName>,
    /// Members that owe a reply.
    pub pending: BTreeSet<AgentName>,
    asked: BTreeMap<CommunityName, BTreeSet<AgentName>>,
    replies: BTreeMap<AgentName, Reply>,
    route_confidence: BTreeMap<CommunityName, Confidence>,
    pub claims: Vec<Claim>,
    pub denials: BTreeSet<CommunityName>,
    pub chosen: Option<Chosen>,
    mine: Option<Confidence>,
    question: Option<(String, Vec<String>)>,
    reasked: bool,
}

impl RequestRecord {
    fn new(msg: &Message, requester: Requester, text: RequestText) -> Self {
        Self {
            request: msg.request.clone(),
            user: msg.user.clone(),
            text,
            requester,
            arrived_as: msg.performative,
            phase: Phase::Interpreting,
            outstanding: BTreeSet::new(),
            pending: BTreeSet::new(),
            asked: BTreeMap::new(),
            replies: BTreeMap::new(),
            route_confidence: BTreeMap::new(),
            claims: Vec::new(),
            denials: BTreeSet::new(),
            chosen: None,
            mine: None,
            question: None,
            reasked: false,
        }
    }

    fn is_active(&self) -> bool {
        !matches!(self.phase, Phase::Dispatched | Phase::Closed)
    }

    fn route(&self, c: &CommunityName) -> Confidence {
        self.route_confidence
            .get(c)
            .copied()
            .unwrap_or(Confidence::CERTAIN)
    }

    /// One contender per distinct claimant, keeping its strongest claim.
    fn contenders(&self) -> Vec<&Claim> {
        let mut best: BTreeMap<&AgentName, &Claim> = BTreeMap::new();
        for c in &self.claims {
            let slot = best.entry(&c.claimant).or_insert(c);
            if c.priority > slot.priority {
                *slot = c;
            }
        }
        best.into_values().collect()
    }
}

/// Side channel through which a white box reports what it did.
pub struct Ctx<'a> {
    pub store: &'a mut PolicyStore,
    pub now: f64,
    pub out: Vec<Outgoing>,
    pub diagnostics: Vec<String>,
}

impl<'a> Ctx<'a> {
    pub fn new(store: &'a mut PolicyStore, now: f64) -> Self {
        Self {
            store,
            now,
            out: Vec::new(),
            diagnostics: Vec::new(),
        }
    }
}

pub struct WhiteBox {
    name: AgentName,
    priority: u32,
    role: AgentRole,
    root: bool,
    output_to: Option<AgentName>,
    notify: Vec<AgentName>,
    book: AddressBook,
    records: Vec<RequestRecord>,
    rewards: RewardsUnit,
    counter: RequestCounter,
    process: Option<Box<dyn ProcessUnit>>,
}

impl WhiteBox {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: AgentName,
        priority: u32,
        role: AgentRole,
        root: bool,
        output_to: Option<AgentName>,
        notify: Vec<AgentName>,
        book: AddressBook,
        keep_share: f64,
        process: Option<Box<dyn ProcessUnit>>,
    ) -> Self {
        Self {
            counter: RequestCounter::new(name.clone()),
            name,
            priority,
            role,
            root,
            output_to,
            notify,
            book,
            records: Vec::new(),
            rewards: RewardsUnit::new(keep_share),
            process,
        }
    }

    pub fn name(&self) -> &AgentName {
        &self.name
    }
    pub fn priority(&self) -> u32 {
        self.priority
    }
    pub fn role(&self) -> AgentRole {
        self.role
    }
    pub fn address_book(&self) -> &AddressBook {
        &self.book
    }
    pub fn address_book_mut(&mut self) -> &mut AddressBook {
        &mut self.book
    }
    pub fn records(&self) -> &[RequestRecord] {
        &self.records
    }
    pub fn rewards(&self) -> &RewardsUnit {
        &self.rewards
    }
    pub fn process_unit(&self) -> Option<&dyn ProcessUnit> {
        self.process.as_deref()
    }

    /// Requests for which this agent still waits on `agent`.
    pub fn awaiting_with_user(&self, agent: &AgentName) -> Vec<(RequestId, UserId)> {
        self.records
            .iter()
            .filter(|r| r.phase == Phase::Querying && r.pending.contains(agent))
            .map(|r| (r.request.clone(), r.user.clone()))
            .collect()
    }

    pub fn handle(&mut self, msg: &Message, ctx: &mut Ctx<'_>) {
        use Performative as P;
        match (msg.performative, &msg.content) {
            (P::Register, Content::Register { address, priority }) => {
                self.book.register(msg.sender.clone(), *address, *priority);
                return;
            }
            (P::Advertise, Content::Community(c)) => {
                self.book.advertise(c.clone(), msg.sender.clone());
                let pattern = c.as_str().replace('-', " ");
                ctx.store.add_preset(
                    &self.name,
                    PolicyEntry::preset(&pattern, Target::Community(c.clone())),
                );
                return;
            }
            (P::Unadvertise, Content::Community(c)) => {
                if self.book.unadvertise(c, &msg.sender) == Unadvertised::CommunityGone {
                    ctx.store.forget_community(&self.name, c);
                }
                return;
            }
            _ => {}
        }
        if self.role != AgentRole::Interpreter
            || matches!(msg.performative, P::Output | P::UserQuery)
        {
            self.pass_to_process(msg, ctx);
            return;
        }
        match msg.performative {
            P::IsThisYours | P::ThisIsYours => self.on_request(msg, ctx),
            P::ItIsMine | P::MaybeMine | P::NotMine => self.on_reply(msg, ctx),
            P::Resolve => self.on_resolve(msg, ctx),
            P::Reward => self.on_reward(msg, ctx),
            P::UserAnswer => self.on_answer(msg, ctx),
            _ => ctx.diagnostics.push(format!(
                "{}: unexpected {} from {}",
                self.name, msg.performative, msg.sender
            )),
        }
    }

    pub fn external(&mut self, event: &ExternalEvent, ctx: &mut Ctx<'_>) {
        let Some(unit) = self.process.as_mut() else {
            ctx.diagnostics
                .push(format!("{}: external event with no process unit", self.name));
            return;
        };
        let mut io = Io::new(&self.name, &mut self.counter, ctx.now);
        unit.external(event, &mut io);
        ctx.out.extend(io.into_sends());
    }

    pub fn settle(&mut self, ctx: &mut Ctx<'_>) {
        if let Some(unit) = self.process.as_mut() {
            let mut io = Io::new(&self.name, &mut self.counter, ctx.now);
            unit.settle(&mut io);
            ctx.out.extend(io.into_sends());
        }
    }

    fn pass_to_process(&mut self, msg: &Message, ctx: &mut Ctx<'_>) {
        let Some(unit) = self.process.as_mut() else {
            ctx.diagnostics.push(format!(
                "{}: no process unit for {} from {}",
                self.name, msg.performative, msg.sender
            ));
            return;
        };
        let mut io = Io::new(&self.name, &mut self.counter, ctx.now);
        unit.message(msg, &mut io);
        ctx.out.extend(io.into_sends());
    }

    fn find(&self, request: &RequestId, requester: &Requester) -> Option<usize> {
        self.records
            .iter()
            .rposition(|r| &r.request == request && &r.requester == requester)
    }

    fn requester_of(&self, msg: &Message) -> Requester {
        if self.root {
            Requester::External
        } else {
            Requester::Agent(msg.sender.clone())
        }
    }

    fn send(&self, ctx: &mut Ctx<'_>, i: usize, performative: Performative, to: Vec<AgentName>, content: Content) {
        let r = &self.records[i];
        ctx.out.push(Outgoing {
            performative,
            recipients: to,
            user: r.user.clone(),
            request: r.request.clone(),
            content,
        });
    }

    /// Sends `performative` to whoever asked, if anyone did.
    fn reply(&self, ctx: &mut Ctx<'_>, i: usize, performative: Performative, content: Content) {
        if let Requester::Agent(p) = &self.records[i].requester {
            self.send(ctx, i, performative, vec![p.clone()], content);
        }
    }

    fn on_request(&mut self, msg: &Message, ctx: &mut Ctx<'_>) {
        let Some(text) = msg.request_text().cloned() else {
            return;
        };
        let requester = self.requester_of(msg);
        let this = msg.performative == Performative::ThisIsYours;
        // A repeated query starts a fresh record; only THIS_IS_YOURS
        // continues an earlier one.
        if let Some(i) = self.find(&msg.request, &requester).filter(|_| this) {
            let phase = self.records[i].phase;
            match phase {
                Phase::Claimed => {
                    self.records[i].text.confidence = text.confidence;
                    match self.records[i].chosen.clone() {
                        Some(Chosen::Member { community, agent }) => {
                            self.dispatch(ctx, i, &community, &agent, false)
                        }
                        _ => self.run_process(ctx, i),
                    }
                }
                Phase::AwaitingResolution => self.decide(ctx, i),
                _ => ctx.diagnostics.push(format!(
                    "{}: {} for {} in phase {:?}",
                    self.name, msg.performative, msg.request, phase
                )),
            }
            return;
        }
        if !this
            && !self.root
            && self
                .records
                .iter()
                .any(|r| r.request == msg.request && r.is_active())
        {
            // Already working on this request for someone else: a cycle.
            ctx.out.push(Outgoing {
                performative: Performative::NotMine,
                recipients: vec![msg.sender.clone()],
                user: msg.user.clone(),
                request: msg.request.clone(),
                content: Content::Empty,
            });
            return;
        }
        self.records.push(RequestRecord::new(msg, requester, text));
        let i = self.records.len() - 1;
        self.begin(ctx, i);
    }

    fn begin(&mut self, ctx: &mut Ctx<'_>, i: usize) {
        let r = &self.records[i];
        let decision_point = self.root || r.arrived_as == Performative::ThisIsYours;
        let view = ctx.store.view(&self.name, &r.user);
        match interpret(&view, &self.book, &r.text.text, self.process.is_some()) {
            Interpretation::Mine(c) => {
                self.records[i].mine = Some(c);
                if decision_point {
                    self.run_process(ctx, i);
                } else {
                    self.records[i].phase = Phase::Claimed;
                    self.records[i].chosen = Some(Chosen::Own);
                    self.reply(
                        ctx,
                        i,
                        Performative::ItIsMine,
                        Content::Claim {
                            confidence: c,
                            priority: self.priority,
                        },
                    );
                }
            }
            Interpretation::Route(routes) => {
                if r.arrived_as == Performative::ThisIsYours && routes.len() == 1 {
                    let (c, conf) = routes[0].clone();
                    let exclude = self.exclusions(i);
                    let ex: Vec<&AgentName> = exclude.iter().collect();
                    if let Some(m) = self.book.choose_member(&c, &ex) {
                        self.records[i].route_confidence.insert(c.clone(), conf);
                        self.dispatch(ctx, i, &c, &m, false);
                        return;
                    }
                }
                self.query(ctx, i, routes);
            }
            Interpretation::Unknown => {
                let all = self
                    .book
                    .communities()
                    .map(|(c, _)| (c.clone(), Confidence::CERTAIN))
                    .collect();
                self.query(ctx, i, all);
            }
        }
    }

    fn exclusions(&self, i: usize) -> Vec<AgentName> {
        let mut ex = vec![self.name.clone()];
        if let Requester::Agent(p) = &self.records[i].requester {
            ex.push(p.clone());
        }
        ex
    }

    fn query(&mut self, ctx: &mut Ctx<'_>, i: usize, routes: Vec<(CommunityName, Confidence)>) {
        let exclude = self.exclusions(i);
        let mut asked = BTreeMap::new();
        let mut conf = BTreeMap::new();
        for (c, w) in routes {
            let members: BTreeSet<AgentName> = self
                .book
                .members(&c)
                .into_iter()
                .filter(|m| !exclude.contains(m))
                .collect();
            if !members.is_empty() {
                asked.insert(c.clone(), members);
                conf.insert(c, w);
            }
        }
        if asked.is_empty() {
            self.no_claims(ctx, i);
            return;
        }
        let recipients: BTreeSet<AgentName> = asked.values().flatten().cloned().collect();
        let r = &mut self.records[i];
        r.outstanding = asked.keys().cloned().collect();
        r.pending = recipients.clone();
        r.asked = asked;
        r.route_confidence = conf;
        r.phase = Phase::Querying;
        let content = Content::Request(r.text.clone());
        self.send(
            ctx,
            i,
            Performative::IsThisYours,
            recipients.into_iter().collect(),
            content,
        );
    }

    fn on_reply(&mut self, msg: &Message, ctx: &mut Ctx<'_>) {
        let Some(i) = self.records.iter().rposition(|r| {
            r.request == msg.request && r.phase == Phase::Querying && r.pending.contains(&msg.sender)
        }) else {
            if msg.performative == Performative::NotMine {
                // The agent we dispatched to gave up on it.
                let failed = self.records.iter().rposition(|r| {
                    r.request == msg.request
                        && r.phase == Phase::Dispatched
                        && matches!(&r.chosen, Some(Chosen::Member { agent, .. }) if *agent == msg.sender)
                });
                if let Some(i) = failed {
                    self.no_claims(ctx, i);
                    return;
                }
            }
            ctx.diagnostics.push(format!(
                "{}: stale {} from {} for {}",
                self.name, msg.performative, msg.sender, msg.request
            ));
            return;
        };
        let reply = match (msg.performative, &msg.content) {
            (Performative::NotMine, _) => Reply::Denial,
            (p, Content::Claim { confidence, priority }) => Reply::Claim {
                confidence: *confidence,
                priority: *priority,
                tentative: p == Performative::MaybeMine,
            },
            _ => Reply::Denial,
        };
        let r = &mut self.records[i];
        r.pending.remove(&msg.sender);
        r.replies.insert(msg.sender.clone(), reply);
        let complete: Vec<CommunityName> = r
            .outstanding
            .iter()
            .filter(|c| r.asked[*c].iter().all(|m| r.replies.contains_key(m)))
            .cloned()
            .collect();
        for c in complete {
            r.outstanding.remove(&c);
            let mut claimed = false;
            for m in &r.asked[&c] {
                if let Some(Reply::Claim {
                    confidence,
                    priority,
                    tentative,
                }) = r.replies.get(m)
                {
                    claimed = true;
                    r.claims.push(Claim {
                        community: c.clone(),
                        claimant: m.clone(),
                        confidence: *confidence,
                        priority: *priority,
                        tentative: *tentative,
                    });
                }
            }
            if !claimed {
                r.denials.insert(c);
            }
        }
        if r.outstanding.is_empty() {
            self.aggregate(ctx, i);
        }
    }

    fn aggregate(&mut self, ctx: &mut Ctx<'_>, i: usize) {
        let r = &self.records[i];
        let decision_point = self.root || r.arrived_as == Performative::ThisIsYours;
        let contenders = r.contenders();
        if contenders.is_empty() {
            self.no_claims(ctx, i);
            return;
        }
        if decision_point {
            self.decide(ctx, i);
            return;
        }
        let strength = |c: &Claim| r.route(&c.community).and(c.confidence);
        let priority = contenders
            .iter()
            .map(|c| c.priority)
            .max()
            .unwrap_or(0)
            .max(self.priority);
        if let [only] = contenders[..] {
            if !only.tentative {
                let confidence = strength(only);
                let chosen = Chosen::Member {
                    community: only.community.clone(),
                    agent: only.claimant.clone(),
                };
                self.records[i].phase = Phase::Claimed;
                self.records[i].chosen = Some(chosen);
                self.reply(ctx, i, Performative::ItIsMine, Content::Claim { confidence, priority });
                return;
            }
        }
        let confidence = contenders
            .iter()
            .map(|c| strength(c))
            .max_by(|a, b| a.value().total_cmp(&b.value()))
            .unwrap_or_default();
        self.records[i].phase = Phase::AwaitingResolution;
        self.reply(ctx, i, Performative::MaybeMine, Content::Claim { confidence, priority });
    }

    /// This agent is the contradiction point for record `i`.
    fn decide(&mut self, ctx: &mut Ctx<'_>, i: usize) {
        let r = &self.records[i];
        let contenders: Vec<Contender> = r
            .contenders()
            .into_iter()
            .map(|c| Contender {
                claimant: c.claimant.clone(),
                priority: c.priority,
            })
            .collect();
        if contenders.is_empty() {
            self.no_claims(ctx, i);
            return;
        }
        match resolve_contradiction(&contenders) {
            Resolution::Dispatch(agent) => self.dispatch_to_claimant(ctx, i, &agent),
            Resolution::AskUser { question, options } => {
                self.records[i].question = Some((question, options));
                self.ask(ctx, i);
            }
        }
    }

    fn ask(&mut self, ctx: &mut Ctx<'_>, i: usize) {
        let r = &mut self.records[i];
        r.phase = Phase::AwaitingUser;
        let (question, options) = r.question.clone().unwrap_or_default();
        let origin = r.request.origin.clone();
        self.send(
            ctx,
            i,
            Performative::UserQuery,
            vec![origin],
            Content::Query { question, options },
        );
    }

    fn dispatch_to_claimant(&mut self, ctx: &mut Ctx<'_>, i: usize, agent: &AgentName) {
        let r = &self.records[i];
        let Some(claim) = r.contenders().into_iter().find(|c| &c.claimant == agent).cloned() else {
            return;
        };
        self.dispatch(ctx, i, &claim.community, &claim.claimant, claim.tentative);
    }

    /// Hands the request to `agent`: RESOLVE for a tentative claimant,
    /// THIS_IS_YOURS otherwise.
    fn dispatch(
        &mut self,
        ctx: &mut Ctx<'_>,
        i: usize,
        community: &CommunityName,
        agent: &AgentName,
        tentative: bool,
    ) {
        let r = &mut self.records[i];
        r.phase = Phase::Dispatched;
        r.chosen = Some(Chosen::Member {
            community: community.clone(),
            agent: agent.clone(),
        });
        if tentative {
            self.send(ctx, i, Performative::Resolve, vec![agent.clone()], Content::Empty);
        } else {
            let text = r
                .text
                .clone()
                .with_confidence(r.text.confidence.and(r.route(community)));
            self.send(
                ctx,
                i,
                Performative::ThisIsYours,
                vec![agent.clone()],
                Content::Request(text),
            );
        }
    }

    fn run_process(&mut self, ctx: &mut Ctx<'_>, i: usize) {
        let r = &mut self.records[i];
        r.phase = Phase::Dispatched;
        r.chosen = Some(Chosen::Own);
        let confidence = r.text.confidence.and(r.mine.unwrap_or(Confidence::CERTAIN));
        let job = Job {
            request: r.request.clone(),
            user: r.user.clone(),
            text: r.text.text.clone(),
            pointer: r.text.pointer,
            confidence,
        };
        let Some(unit) = self.process.as_mut() else {
            ctx.diagnostics
                .push(format!("{}: claimed {} without a process unit", self.name, job.request));
            return;
        };
        let mut io = Io::new(&self.name, &mut self.counter, ctx.now);
        let payloads = unit.process(&job, &mut io);
        ctx.out.extend(io.into_sends());
        for payload in payloads {
            self.emit_output(ctx, &job, payload);
        }
    }

    fn emit_output(&self, ctx: &mut Ctx<'_>, job: &Job, payload: String) {
        let mut to: Vec<AgentName> = self.output_to.iter().chain(&self.notify).cloned().collect();
        to.sort();
        to.dedup();
        if to.is_empty() {
            ctx.diagnostics
                .push(format!("{}: output with nowhere to go: {payload}", self.name));
            return;
        }
        ctx.out.push(Outgoing {
            performative: Performative::Output,
            recipients: to,
            user: job.user.clone(),
            request: job.request.clone(),
            content: Content::Output {
                payload,
                confidence: job.confidence,
            },
        });
    }

    /// Nobody below claimed the request.
    fn no_claims(&mut self, ctx: &mut Ctx<'_>, i: usize) {
        self.records[i].phase = Phase::Closed;
        if self.root {
            match &self.output_to {
                Some(out) => self.send(
                    ctx,
                    i,
                    Performative::Output,
                    vec![out.clone()],
                    Content::Output {
                        payload: CANNOT_INTERPRET.to_string(),
                        confidence: Confidence::CERTAIN,
                    },
                ),
                None => ctx.diagnostics.push(format!(
                    "{}: cannot interpret {}",
                    self.name, self.records[i].request
                )),
            }
        } else {
            self.reply(ctx, i, Performative::NotMine, Content::Empty);
        }
    }

    fn on_resolve(&mut self, msg: &Message, ctx: &mut Ctx<'_>) {
        let requester = self.requester_of(msg);
        match self.find(&msg.request, &requester) {
            Some(i) if self.records[i].phase == Phase::AwaitingResolution => self.decide(ctx, i),
            found => ctx.diagnostics.push(format!(
                "{}: RESOLVE for {} in phase {:?}",
                self.name,
                msg.request,
                found.map(|i| self.records[i].phase)
            )),
        }
    }

    fn on_answer(&mut self, msg: &Message, ctx: &mut Ctx<'_>) {
        let Content::Answer(answer) = &msg.content else {
            return;
        };
        let Some(i) = self
            .records
            .iter()
            .rposition(|r| r.request == msg.request && r.phase == Phase::AwaitingUser)
        else {
            ctx.diagnostics.push(format!(
                "{}: answer for {} with no open question",
                self.name, msg.request
            ));
            return;
        };
        let options = self.records[i]
            .question
            .as_ref()
            .map(|(_, o)| o.clone())
            .unwrap_or_default();
        match match_answer(answer, &options) {
            Some(k) => {
                let agent = AgentName::new(options[k].clone()).expect("options are agent names");
                let r = &self.records[i];
                if let Some(claim) = r.contenders().into_iter().find(|c| c.claimant == agent) {
                    let community = claim.community.clone();
                    let book = &self.book;
                    if let Err(e) = ctx.store.learn_mapping(
                        &self.name,
                        &r.user,
                        &r.text.text,
                        &community,
                        |c| book.knows(c),
                    ) {
                        ctx.diagnostics.push(format!("{}: {e}", self.name));
                    }
                }
                self.dispatch_to_claimant(ctx, i, &agent);
            }
            None if !self.records[i].reasked => {
                self.records[i].reasked = true;
                self.ask(ctx, i);
            }
            None => self.no_claims(ctx, i),
        }
    }

    fn on_reward(&mut self, msg: &Message, ctx: &mut Ctx<'_>) {
        let Content::Reward { value, .. } = &msg.content else {
            return;
        };
        let dispatched = |r: &RequestRecord| r.request == msg.request && r.phase == Phase::Dispatched;
        let via_member = self.records.iter().rposition(|r| {
            dispatched(r)
                && matches!(&r.chosen, Some(Chosen::Member { agent, .. }) if *agent == msg.sender)
        });
        let i = via_member.or_else(|| {
            self.records
                .iter()
                .rposition(|r| dispatched(r) && r.chosen == Some(Chosen::Own))
        });
        let Some(i) = i else {
            ctx.diagnostics.push(format!(
                "{}: reward for {} matches no dispatched request",
                self.name, msg.request
            ));
            return;
        };
        let (kept, forwarded) = self.rewards.receive(&msg.request, *value);
        let r = &self.records[i];
        ctx.store
            .apply_feedback_conflict(&self.name, &r.user, &r.text.text, kept);
        match r.chosen.clone() {
            Some(Chosen::Member { community, .. }) => {
                self.book.update_address_confidence(&community, kept)
            }
            _ => {
                if let Some(unit) = self.process.as_mut() {
                    unit.reward(&msg.request, kept);
                }
            }
        }
        if let Requester::Agent(_) = &self.records[i].requester {
            self.reply(
                ctx,
                i,
                Performative::Reward,
                Content::Reward {
                    value: forwarded,
                    request: msg.request.clone(),
                },
            );
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn a(s: &str) -> AgentName {
        AgentName::new(s).unwrap()
    }
    fn c(s: &str) -> CommunityName {
        CommunityName::new(s).unwrap()
    }

    #[test]
    fn address_book_lifecycle() {
        let mut b = AddressBook::default();
        b.advertise(c("maps"), a("x"));
        b.advertise(c("maps"), a("y"));
        assert!(b.knows(&c("maps")));
        assert_eq!(b.unadvertise(&c("maps"), &a("x")), Unadvertised::Removed);
        assert_eq!(b.unadvertise(&c("maps"), &a("x")), Unadvertised::NotMember);
        assert_eq!(b.unadvertise(&c("maps"), &a("y")), Unadvertised::CommunityGone);
        assert!(!b.knows(&c("maps")));
    }

    #[test]
    fn member_choice_prefers_priority_then_confidence_then_name() {
        let mut b = AddressBook::default();
        for m in ["p", "q", "r"] {
            b.advertise(c("g"), a(m));
            b.advertise(c(m), a(m));
        }
        assert_eq!(b.choose_member(&c("g"), &[]), Some(a("p")));
        b.update_address_confidence(&c("q"), 0.2);
        assert_eq!(b.choose_member(&c("g"), &[]), Some(a("q")));
        b.register(a("r"), Address(3), 2);
        assert_eq!(b.choose_member(&c("g"), &[]), Some(a("r")));
        assert_eq!(b.choose_member(&c("g"), &[&a("r")]), Some(a("q")));
    }

    #[test]
    fn address_confidence_stays_in_unit_interval() {
        let mut b = AddressBook::default();
        b.advertise(c("g"), a("x"));
        b.update_address_confidence(&c("g"), 0.9);
        assert_eq!(b.confidence(&c("g")), 1.0);
        b.update_address_confidence(&c("g"), -3.0);
        assert_eq!(b.confidence(&c("g")), 0.0);
    }

    #[test]
    fn interpretation_outcomes() {
        let mut b = AddressBook::default();
        b.advertise(c("zoom"), a("zoom"));
        let view = PolicyView {
            entries: vec![
                PolicyEntry::preset("zoom", Target::Community(c("zoom"))),
                PolicyEntry::preset("hello", Target::Own),
                PolicyEntry::preset("ghost", Target::Community(c("ghost"))),
            ],
        };
        assert_eq!(
            interpret(&view, &b, "zoom in", true),
            Interpretation::Route(vec![(c("zoom"), Confidence::CERTAIN)])
        );
        assert_eq!(
            interpret(&view, &b, "hello there", true),
            Interpretation::Mine(Confidence::CERTAIN)
        );
        assert_eq!(
            interpret(&view, &b, "zoom hello", true),
            Interpretation::Mine(Confidence::CERTAIN)
        );
        assert_eq!(
            interpret(&view, &b, "zoom hello", false),
            Interpretation::Route(vec![(c("zoom"), Confidence::CERTAIN)])
        );
        assert_eq!(interpret(&view, &b, "hello", false), Interpretation::Unknown);
        assert_eq!(interpret(&view, &b, "ghost", true), Interpretation::Unknown);
        assert_eq!(interpret(&view, &b, "", true), Interpretation::Unknown);
    }
}
