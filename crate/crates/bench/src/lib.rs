//! Workloads shared by the benchmarks.

use std::any::Any;

use aaosa_core::runtime::{Io, Outgoing};
use aaosa_core::types::RequestText;
use aaosa_core::{
    AgentName, AgentSpec, CommunityName, Content, Job, Performative, PolicyEntry, ProcessUnit,
    RequestId, Runtime, RuntimeConfig, Target, UserId,
};

struct Echo;

impl ProcessUnit for Echo {
    fn process(&mut self, job: &Job, _io: &mut Io<'_>) -> Vec<String> {
        vec![job.text.clone()]
    }
    fn as_any(&self) -> &dyn Any {
        self
    }
}

fn name(s: String) -> AgentName {
    AgentName::new(s).expect("generated names are valid")
}

/// A root with `width` children, each heading a chain `depth` deep. Every
/// chain routes "ping"; only the one whose leaf has the highest priority
/// wins without asking.
pub fn fan_of_chains(width: usize, depth: usize) -> Runtime {
    let mut rt = Runtime::new(RuntimeConfig::default());
    rt.spawn(AgentSpec::interpreter(name("top".into())).root().priority(0))
        .expect("fresh name");
    for w in 0..width {
        for d in 0..depth {
            let me = name(format!("c{w}-{d}"));
            let leaf = d + 1 == depth;
            let mut spec = AgentSpec::interpreter(me).priority(if leaf { w as u32 } else { 0 });
            if leaf {
                spec = spec.process(Echo);
            }
            rt.spawn(spec).expect("fresh name");
        }
    }
    for w in 0..width {
        for d in 0..depth {
            let me = name(format!("c{w}-{d}"));
            let parent = if d == 0 {
                name("top".into())
            } else {
                name(format!("c{w}-{}", d - 1))
            };
            let community = CommunityName::new(me.as_str()).expect("valid");
            rt.join(&me, &parent, &community).expect("both live");
            let target = if d + 1 == depth {
                Target::Own
            } else {
                Target::Community(CommunityName::new(format!("c{w}-{}", d + 1)).expect("valid"))
            };
            rt.store_mut().add_preset(&me, PolicyEntry::preset("ping", target));
        }
    }
    rt.run_until_quiescent().expect("setup terminates");
    rt
}

pub fn ask(rt: &mut Runtime, n: u64) {
    let input = name("input".into());
    rt.send(
        &input,
        Outgoing {
            performative: Performative::IsThisYours,
            recipients: vec![name("top".into())],
            user: UserId::new("u1").expect("valid"),
            request: RequestId::new(input.clone(), n),
            content: Content::Request(RequestText::new("ping")),
        },
    )
    .expect("valid message");
}
