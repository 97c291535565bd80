mod common;

use aaosa_core::harness::{Session, SessionConfig, SessionEvent};
use aaosa_core::mapdemo::{agent, names};
use aaosa_core::runtime::{ExternalEvent, Outgoing};
use aaosa_core::{Content, Performative, PolicyEntry, RequestId, Target};
use common::*;

fn teach(s: &mut Session, answer: &str) -> RequestId {
    s.say("move it closer").unwrap();
    let ev = s.answer(answer).unwrap();
    ev.iter()
        .find_map(|e| match e {
            SessionEvent::Output { request, .. } => Some(request.clone()),
            _ => None,
        })
        .expect("the answer is acted on")
}

fn reward(s: &mut Session, request: &RequestId, value: f64, to: &str) {
    s.runtime_mut()
        .external(
            &agent(names::FEEDBACK),
            &ExternalEvent::Reward {
                user: u("u1"),
                request: request.clone(),
                value,
                to: agent(to),
            },
        )
        .unwrap();
    s.runtime_mut().run_until_quiescent().unwrap();
}

#[test]
fn zero_reward_travels_but_changes_nothing() {
    let mut s = Session::new(SessionConfig::default()).unwrap();
    let req = teach(&mut s, "magnification");
    let kb = s.kb_string();
    let conf = |s: &Session| {
        s.runtime()
            .agent(&agent(names::MAP_VIEW_PORT))
            .unwrap()
            .address_book()
            .confidence(&c(names::MAGNIFICATION))
    };
    let before = (s.runtime().trace().len(), conf(&s));
    reward(&mut s, &req, 0.0, names::MAGNIFICATION);
    let hops: Vec<(String, String)> = s.runtime().trace()[before.0..]
        .iter()
        .map(|e| &e.message)
        .filter(|m| m.performative == Performative::Reward)
        .map(|m| (m.sender.to_string(), m.recipients[0].to_string()))
        .collect();
    assert_eq!(
        hops,
        [
            (names::FEEDBACK, names::MAGNIFICATION),
            (names::MAGNIFICATION, names::MAP_VIEW_PORT),
            (names::MAP_VIEW_PORT, names::REGULATOR),
        ]
        .map(|(a, b)| (a.to_string(), b.to_string()))
    );
    assert_eq!(s.kb_string(), kb);
    assert_eq!(conf(&s), before.1);
}

#[test]
fn stale_reward_is_dropped_and_noted() {
    let mut s = Session::new(SessionConfig::default()).unwrap();
    let stale = RequestId::new(agent(names::TEXT_INPUT), 99);
    let before = s.runtime().trace().len();
    reward(&mut s, &stale, 1.0, names::MAGNIFICATION);
    let forwarded = s.runtime().trace()[before..]
        .iter()
        .filter(|e| e.message.sender.as_str() == names::MAGNIFICATION)
        .count();
    assert_eq!(forwarded, 0);
    assert!(s
        .runtime()
        .diagnostics()
        .iter()
        .any(|d| d.text.contains("matches no dispatched request")));
}

#[test]
fn praise_through_shifting_raises_its_address_confidence() {
    let mut s = Session::new(SessionConfig::default()).unwrap();
    teach(&mut s, "shifting");
    let conf = |s: &Session| {
        s.runtime()
            .agent(&agent(names::MAP_VIEW_PORT))
            .unwrap()
            .address_book()
            .confidence(&c(names::SHIFTING))
    };
    let mut last = conf(&s);
    for _ in 0..6 {
        s.pause(6.0).unwrap();
        let ev = s.say("move it closer").unwrap();
        let req = ev
            .iter()
            .find_map(|e| match e {
                SessionEvent::Output { request, from, .. } if from.as_str() == names::SHIFTING => {
                    Some(request.clone())
                }
                _ => None,
            })
            .expect("routed to shifting");
        reward(&mut s, &req, 1.0, names::SHIFTING);
        let now = conf(&s);
        assert!(now >= last && now <= 1.0, "{last} -> {now}");
        last = now;
    }
    assert!(last > 0.5);
}

#[test]
fn learned_route_confidence_is_the_entry_weight() {
    let mut s = Session::new(SessionConfig::default()).unwrap();
    teach(&mut s, "magnification");
    s.say("that's wrong").unwrap();
    s.pause(6.0).unwrap();
    let weight = s.runtime().store().lookup(&agent(names::MAP_VIEW_PORT), &u("u1"), "move it closer")[0].weight;
    assert!(weight < 1.0);
    let ev = s.say("move it closer").unwrap();
    let conf = ev
        .iter()
        .find_map(|e| match e {
            SessionEvent::Output { confidence, .. } => Some(*confidence),
            _ => None,
        })
        .unwrap();
    assert_eq!(conf, weight);
}

#[test]
fn resolve_out_of_turn_is_a_protocol_error() {
    let mut rt = chain(2);
    let req = ask(&mut rt, "n0", 1, "u1", "ping");
    rt.run_until_quiescent().unwrap();
    let before = rt.trace().len();
    rt.send(
        &a("n0"),
        Outgoing {
            performative: Performative::Resolve,
            recipients: vec![a("n1")],
            user: u("u1"),
            request: req,
            content: Content::Empty,
        },
    )
    .unwrap();
    rt.run_until_quiescent().unwrap();
    assert_eq!(rt.trace().len(), before + 1);
    assert!(rt.diagnostics().iter().any(|d| d.text.contains("RESOLVE")));
}

#[test]
fn a_claimed_request_runs_the_process_once() {
    let mut rt = chain(3);
    let req = ask(&mut rt, "n0", 1, "u1", "ping");
    rt.run_until_quiescent().unwrap();
    assert_eq!(outputs(&rt), vec![(a("n2"), "n2 did ping".to_string())]);
    let leaf: Vec<Performative> = rt
        .trace()
        .iter()
        .filter(|e| e.message.sender.as_str() == "n2" && e.message.request == req)
        .map(|e| e.message.performative)
        .collect();
    assert_eq!(leaf, [Performative::ItIsMine, Performative::Output]);
}

#[test]
fn withdrawing_the_last_member_removes_the_community() {
    let mut rt = chain(2);
    rt.store_mut()
        .learn_mapping(&a("n0"), &u("u1"), "pong", &c("n1"), |_| true)
        .unwrap();
    rt.send(
        &a("n1"),
        Outgoing {
            performative: Performative::Unadvertise,
            recipients: vec![a("n0")],
            user: aaosa_core::UserId::system(),
            request: RequestId::system(),
            content: Content::Community(c("n1")),
        },
    )
    .unwrap();
    rt.run_until_quiescent().unwrap();
    assert!(!rt.agent(&a("n0")).unwrap().address_book().knows(&c("n1")));
    assert!(rt.store().learned_entries().is_empty());
    ask(&mut rt, "n0", 1, "u1", "ping");
    rt.run_until_quiescent().unwrap();
    assert_eq!(outputs(&rt), vec![(a("n0"), "I cannot interpret this".to_string())]);
    assert!(!rt.trace().iter().any(|e| e.message.performative == Performative::IsThisYours
        && e.message.recipients[0].as_str() == "n1"));

    // A second withdrawal is a harmless no-op.
    rt.send(
        &a("n1"),
        Outgoing {
            performative: Performative::Unadvertise,
            recipients: vec![a("n0")],
            user: aaosa_core::UserId::system(),
            request: RequestId::system(),
            content: Content::Community(c("n1")),
        },
    )
    .unwrap();
    rt.run_until_quiescent().unwrap();
}

#[test]
fn a_retired_member_is_replaced_without_restart() {
    let mut rt = chain(2);
    rt.retire(&a("n1")).unwrap();
    ask(&mut rt, "n0", 1, "u1", "ping");
    rt.run_until_quiescent().unwrap();
    assert_eq!(outputs(&rt), vec![(a("n0"), "I cannot interpret this".to_string())]);

    spawn_worker(&mut rt, "n1", 1, false);
    rt.store_mut().add_preset(&a("n1"), PolicyEntry::preset("ping", Target::Own));
    rt.join(&a("n1"), &a("n0"), &c("n1")).unwrap();
    rt.run_until_quiescent().unwrap();
    ask(&mut rt, "n0", 2, "u1", "ping");
    rt.run_until_quiescent().unwrap();
    assert_eq!(outputs(&rt)[1], (a("n1"), "n1 did ping".to_string()));
}
