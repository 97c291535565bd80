use aaosa_core::harness::{Session, SessionConfig, SessionEvent};
use aaosa_core::mapdemo::{
    agent, build_demo_topology, distance, fixture_places, names, shared_map, MapState, GRID,
    INFO_RADIUS, NO_INFORMATION,
};
use aaosa_core::types::RequestText;
use aaosa_core::{Content, Performative, Point, Runtime, RuntimeConfig, Target, UserId};
use proptest::prelude::*;

fn requests_to_regulator(s: &Session, from: usize) -> Vec<RequestText> {
    s.runtime().trace()[from..]
        .iter()
        .map(|e| &e.message)
        .filter(|m| {
            m.performative == Performative::IsThisYours && m.sender.as_str() == names::TEXT_INPUT
        })
        .filter_map(|m| m.request_text().cloned())
        .collect()
}

#[test]
fn text_and_a_prompt_click_are_one_request() {
    let mut s = Session::new(SessionConfig::default()).unwrap();
    let from = s.runtime().trace().len();
    s.say("information on this").unwrap();
    s.click(Point::new(10, 12)).unwrap();
    s.flush().unwrap();
    let reqs = requests_to_regulator(&s, from);
    assert_eq!(reqs.len(), 1);
    assert_eq!(reqs[0].text, "information on this");
    assert_eq!(reqs[0].pointer, Some(Point::new(10, 12)));
}

#[test]
fn plain_text_goes_out_without_a_pointer() {
    let mut s = Session::new(SessionConfig::default()).unwrap();
    let from = s.runtime().trace().len();
    s.say("zoom in").unwrap();
    let reqs = requests_to_regulator(&s, from);
    assert_eq!(reqs.len(), 1);
    assert_eq!(reqs[0].pointer, None);
}

#[test]
fn a_late_click_is_a_request_of_its_own() {
    let mut s = Session::new(SessionConfig::default()).unwrap();
    let from = s.runtime().trace().len();
    s.say("information on this").unwrap();
    s.pause(9.0).unwrap();
    s.click(Point::new(10, 12)).unwrap();
    s.flush().unwrap();
    let reqs = requests_to_regulator(&s, from);
    assert_eq!(reqs.len(), 2, "{reqs:?}");
    assert_eq!((reqs[0].text.as_str(), reqs[0].pointer), ("information on this", None));
    assert_eq!((reqs[1].text.as_str(), reqs[1].pointer), ("", Some(Point::new(10, 12))));
}

#[test]
fn sentinel_punctuation_closes_a_deictic_utterance() {
    let mut s = Session::new(SessionConfig::default()).unwrap();
    let from = s.runtime().trace().len();
    let ev = s.say("what's here.").unwrap();
    assert_eq!(requests_to_regulator(&s, from).len(), 1);
    assert!(ev.iter().any(|e| matches!(e, SessionEvent::Output { payload, .. } if payload == NO_INFORMATION)));
}

#[test]
fn topology_handshakes_follow_the_tree() {
    let mut rt = Runtime::new(RuntimeConfig::default());
    build_demo_topology(&mut rt, &shared_map()).unwrap();
    let mut edges: Vec<(String, String)> = rt
        .trace()
        .iter()
        .map(|e| &e.message)
        .filter(|m| m.performative == Performative::Advertise)
        .map(|m| match &m.content {
            Content::Community(c) => (m.recipients[0].to_string(), c.to_string()),
            _ => unreachable!(),
        })
        .collect();
    edges.sort();
    let mut expected: Vec<(String, String)> = [
        ("input-regulator", "information"),
        ("input-regulator", "map-view-port"),
        ("information", "general-information"),
        ("information", "locations"),
        ("locations", "hotels"),
        ("locations", "restaurants"),
        ("map-view-port", "magnification"),
        ("map-view-port", "shifting"),
    ]
    .iter()
    .map(|(a, b)| (a.to_string(), b.to_string()))
    .collect();
    expected.sort();
    assert_eq!(edges, expected);

    let book = rt.agent(&agent(names::REGULATOR)).unwrap().address_book();
    let comms: Vec<String> = book.communities().map(|(c, _)| c.to_string()).collect();
    assert_eq!(comms, vec!["information", "map-view-port"]);
    let loc = rt.agent(&agent(names::LOCATIONS)).unwrap();
    assert_eq!(loc.priority(), 2);
    for leaf in [names::MAGNIFICATION, names::SHIFTING, names::HOTELS, names::RESTAURANTS] {
        assert_eq!(rt.agent(&agent(leaf)).unwrap().priority(), 1, "{leaf}");
    }
    let live: Vec<&str> = rt.agent_names().map(|n| n.as_str()).collect();
    assert_eq!(live.len(), 14);
}

#[test]
fn regulator_keywords_pick_a_subtree() {
    let mut rt = Runtime::new(RuntimeConfig::default());
    build_demo_topology(&mut rt, &shared_map()).unwrap();
    let u1 = UserId::new("u1").unwrap();
    let routes = |agent_name: &str, text: &str| -> Vec<String> {
        rt.store()
            .lookup(&agent(agent_name), &u1, text)
            .into_iter()
            .map(|e| e.target.to_string())
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .collect()
    };
    assert_eq!(routes(names::REGULATOR, "map to the right"), vec!["map-view-port"]);
    assert_eq!(routes(names::REGULATOR, "tell me about this hotel"), vec!["information"]);
    assert_eq!(routes(names::MAGNIFICATION, "move it closer"), vec![Target::Own.to_string()]);
    assert_eq!(routes(names::SHIFTING, "move it closer"), vec![Target::Own.to_string()]);
    assert!(routes(names::MAP_VIEW_PORT, "move it closer").is_empty());
}

#[test]
fn asking_about_a_hotel_by_pointing() {
    let mut s = Session::new(SessionConfig::default()).unwrap();
    s.say("tell me about this hotel").unwrap();
    let ev = s.click(Point::new(12, 7)).unwrap();
    let outs: Vec<&str> = ev
        .iter()
        .filter_map(|e| match e {
            SessionEvent::Output { payload, .. } => Some(payload.as_str()),
            _ => None,
        })
        .collect();
    assert_eq!(outs, vec!["Hotel Alpha: Four-storey hotel by the old harbour"]);
}

proptest! {
    #[test]
    fn pointer_answers_name_the_nearest_place(x in 0..GRID, y in 0..GRID) {
        let m = MapState::default();
        let p = Point::new(x, y);
        let mut best: Option<(f64, String, String)> = None;
        for place in fixture_places() {
            let d = distance(place.at, p);
            if d > INFO_RADIUS {
                continue;
            }
            let better = match &best {
                None => true,
                Some((bd, bn, _)) => d < *bd || (d == *bd && place.name < *bn),
            };
            if better {
                best = Some((d, place.name.clone(), format!("{}: {}", place.name, place.description)));
            }
        }
        let expected = best.map(|b| b.2).unwrap_or_else(|| NO_INFORMATION.to_string());
        prop_assert_eq!(m.info_query("what's this", Some(p), None), expected);
    }
}
