//! Small synthetic communities for the integration suites.
#![allow(dead_code)]

use std::any::Any;

use aaosa_core::runtime::{Io, Outgoing};
use aaosa_core::types::RequestText;
use aaosa_core::{
    AgentName, AgentRole, AgentSpec, CommunityName, Content, Job, Message, Performative,
    PolicyEntry, ProcessUnit, RequestId, Runtime, RuntimeConfig, Target, UserId,
};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const SINK: &str = "out";
pub const INPUT: &str = "input";

pub fn a(s: &str) -> AgentName {
    AgentName::new(s).unwrap()
}

pub fn c(s: &str) -> CommunityName {
    CommunityName::new(s).unwrap()
}

pub fn u(s: &str) -> UserId {
    UserId::new(s).unwrap()
}

pub struct Echo;

impl ProcessUnit for Echo {
    fn process(&mut self, job: &Job, io: &mut Io<'_>) -> Vec<String> {
        vec![format!("{} did {}", io.me(), job.text)]
    }
    fn as_any(&self) -> &dyn Any {
        self
    }
}

#[derive(Default)]
pub struct Sink(pub Vec<(AgentName, String)>);

impl ProcessUnit for Sink {
    fn message(&mut self, msg: &Message, _io: &mut Io<'_>) {
        if let Content::Output { payload, .. } = &msg.content {
            self.0.push((msg.sender.clone(), payload.clone()));
        }
    }
    fn as_any(&self) -> &dyn Any {
        self
    }
}

pub fn runtime(seed: Option<u64>) -> Runtime {
    let mut rt = Runtime::new(RuntimeConfig {
        seed,
        ..Default::default()
    });
    rt.spawn(AgentSpec::new(a(SINK), AgentRole::Output).process(Sink::default()))
        .unwrap();
    rt
}

pub fn spawn_worker(rt: &mut Runtime, name: &str, priority: u32, root: bool) {
    let mut spec = AgentSpec::interpreter(a(name))
        .priority(priority)
        .process(Echo)
        .output_to(a(SINK));
    if root {
        spec = spec.root();
    }
    rt.spawn(spec).unwrap();
}

pub fn ask(rt: &mut Runtime, root: &str, n: u64, user: &str, text: &str) -> RequestId {
    let request = RequestId::new(a(INPUT), n);
    rt.send(
        &a(INPUT),
        Outgoing {
            performative: Performative::IsThisYours,
            recipients: vec![a(root)],
            user: u(user),
            request: request.clone(),
            content: Content::Request(RequestText::new(text)),
        },
    )
    .unwrap();
    request
}

pub fn outputs(rt: &Runtime) -> Vec<(AgentName, String)> {
    rt.unit::<Sink>(&a(SINK)).unwrap().0.clone()
}

/// Root `n0` down to leaf `n{len-1}`; every hop routes "ping" to the next
/// and only the leaf claims it.
pub fn chain(len: usize) -> Runtime {
    let mut rt = runtime(None);
    for i in 0..len {
        spawn_worker(&mut rt, &format!("n{i}"), 1, i == 0);
    }
    for i in 1..len {
        rt.join(&a(&format!("n{i}")), &a(&format!("n{}", i - 1)), &c(&format!("n{i}")))
            .unwrap();
    }
    rt.run_until_quiescent().unwrap();
    for i in 0..len {
        let target = if i + 1 == len {
            Target::Own
        } else {
            Target::Community(c(&format!("n{}", i + 1)))
        };
        rt.store_mut()
            .add_preset(&a(&format!("n{i}")), PolicyEntry::preset("ping", target));
    }
    rt
}

pub const VOCAB: [&str; 5] = ["alpha", "beta", "gamma", "delta", "omega"];

/// A random layered community of `g0..g{n-1}` with `g0` as root. Every
/// non-root agent joins one or two earlier agents, so the graph is a DAG
/// in which some agents are reachable along several paths.
pub fn random_community(rng: &mut ChaCha8Rng, seed: Option<u64>) -> (Runtime, usize) {
    let n = rng.random_range(2..=10usize);
    let mut rt = runtime(seed);
    for i in 0..n {
        spawn_worker(&mut rt, &format!("g{i}"), rng.random_range(0..3), i == 0);
    }
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 1..n {
        let first = rng.random_range(0..i);
        let mut parents = vec![first];
        if i > 1 && rng.random_bool(0.3) {
            let second = rng.random_range(0..i);
            if second != first {
                parents.push(second);
            }
        }
        for p in parents {
            rt.join(&a(&format!("g{i}")), &a(&format!("g{p}")), &c(&format!("g{i}")))
                .unwrap();
            children[p].push(i);
        }
    }
    rt.run_until_quiescent().unwrap();
    for (i, kids) in children.iter().enumerate() {
        for w in VOCAB {
            let roll: f64 = rng.random();
            let target = if roll < 0.25 {
                Target::Own
            } else if roll < 0.6 && !kids.is_empty() {
                let k = kids[rng.random_range(0..kids.len())];
                Target::Community(c(&format!("g{k}")))
            } else {
                continue;
            };
            rt.store_mut()
                .add_preset(&a(&format!("g{i}")), PolicyEntry::preset(w, target));
        }
    }
    (rt, n)
}

pub fn random_text(rng: &mut ChaCha8Rng) -> String {
    let len = rng.random_range(1..=3);
    (0..len)
        .map(|_| VOCAB[rng.random_range(0..VOCAB.len())])
        .collect::<Vec<_>>()
        .join(" ")
}

/// Every IS_THIS_YOURS between agents must be answered exactly once by
/// its recipient. Returns the first violation.
pub fn reply_exactness(rt: &Runtime) -> Result<(), String> {
    use std::collections::BTreeMap;
    let mut asked: BTreeMap<(RequestId, AgentName, AgentName), i64> = BTreeMap::new();
    for e in rt.trace() {
        let m = &e.message;
        let to = m.recipients[0].clone();
        match m.performative {
            Performative::IsThisYours if m.sender.as_str() != INPUT => {
                *asked.entry((m.request.clone(), m.sender.clone(), to)).or_default() += 1;
            }
            Performative::ItIsMine | Performative::NotMine | Performative::MaybeMine => {
                *asked.entry((m.request.clone(), to, m.sender.clone())).or_default() -= 1;
            }
            _ => {}
        }
    }
    match asked.into_iter().find(|(_, n)| *n != 0) {
        None => Ok(()),
        Some(((req, from, to), n)) => Err(format!(
            "{req}: {from} asked {to}, replies off by {}",
            -n
        )),
    }
}

/// Records still waiting on replies once the community is quiet.
pub fn stuck_records(rt: &Runtime) -> Vec<String> {
    use aaosa_core::whitebox::Phase;
    let mut out = Vec::new();
    for name in rt.agent_names() {
        for r in rt.agent(name).unwrap().records() {
            if matches!(r.phase, Phase::Interpreting | Phase::Querying) {
                out.push(format!("{name} {} {:?}", r.request, r.phase));
            }
        }
    }
    out
}
