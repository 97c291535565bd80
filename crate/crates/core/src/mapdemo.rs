//! Multimodal map demo: map state, the demo agents' process units and the
//! topology that wires them together.

use std::any::Any;
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, Mutex, MutexGuard};

use crate::learning::{PolicyEntry, Target};
use crate::rewards::{FeedbackUnit, RewardConfig};
use crate::runtime::{AgentSpec, ExternalEvent, Io, Job, ProcessUnit, Runtime, RuntimeError};
use crate::types::{
    normalize_text, tokens, AgentName, CommunityName, Confidence, Content, Message, Performative,
    Point, RequestId, RequestText, UserId,
};
use crate::whitebox::AgentRole;

pub const GRID: i32 = 32;
pub const MIN_ZOOM: u32 = 1;
pub const MAX_ZOOM: u32 = 8;
/// Distance, in grid cells, within which a place counts as "here".
pub const INFO_RADIUS: f64 = 2.0;
/// Seconds a deictic utterance waits for a pointer, and vice versa.
pub const POINTER_WINDOW: f64 = 3.0;

const PLACES: &str = include_str!("../data/places.tsv");
const KEYWORDS: &str = include_str!("../data/keywords.tsv");

pub mod names {
    pub const TEXT_INPUT: &str = "text-input";
    pub const POINTER_INPUT: &str = "pointer-input";
    pub const REGULATOR: &str = "input-regulator";
    pub const MAP_VIEW_PORT: &str = "map-view-port";
    pub const INFORMATION: &str = "information";
    pub const MAGNIFICATION: &str = "magnification";
    pub const SHIFTING: &str = "shifting";
    pub const LOCATIONS: &str = "locations";
    pub const GENERAL_INFORMATION: &str = "general-information";
    pub const HOTELS: &str = "hotels";
    pub const RESTAURANTS: &str = "restaurants";
    pub const VIEW_PORT_OUTPUT: &str = "view-port-output";
    pub const INFORMATION_OUTPUT: &str = "information-output";
    pub const FEEDBACK: &str = "feedback";
}

pub fn agent(name: &str) -> AgentName {
    AgentName::new(name).expect("demo agent names are valid")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum PlaceKind {
    Hotel,
    Restaurant,
    Generic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Place {
    pub name: String,
    pub kind: PlaceKind,
    pub at: Point,
    pub description: String,
}

pub fn fixture_places() -> Vec<Place> {
    PLACES
        .lines()
        .filter(|l| !l.trim().is_empty() && !l.starts_with('#'))
        .map(|l| {
            let f: Vec<&str> = l.split('\t').collect();
            let kind = match f[1] {
                "hotel" => PlaceKind::Hotel,
                "restaurant" => PlaceKind::Restaurant,
                _ => PlaceKind::Generic,
            };
            Place {
                name: f[0].to_string(),
                kind,
                at: f[2].parse().expect("fixture coordinates parse"),
                description: f[3].to_string(),
            }
        })
        .collect()
}

/// Startup policies of the demo agents, keyed by agent.
pub fn keyword_tables() -> BTreeMap<AgentName, Vec<PolicyEntry>> {
    let mut out: BTreeMap<AgentName, Vec<PolicyEntry>> = BTreeMap::new();
    for l in KEYWORDS.lines() {
        if l.trim().is_empty() || l.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = l.split('\t').collect();
        let target = match f[2] {
            "SELF" => Target::Own,
            c => Target::Community(CommunityName::new(c).expect("fixture community")),
        };
        out.entry(agent(f[0]))
            .or_default()
            .push(PolicyEntry::preset(f[1], target));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Up,
    Down,
    Left,
    Right,
}

impl Direction {
    fn word(self) -> &'static str {
        match self {
            Direction::Up => "up",
            Direction::Down => "down",
            Direction::Left => "left",
            Direction::Right => "right",
        }
    }

    fn from_word(w: &str) -> Option<Self> {
        Some(match w {
            "up" | "north" => Direction::Up,
            "down" | "south" => Direction::Down,
            "left" | "west" => Direction::Left,
            "right" | "east" => Direction::Right,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViewportCommand {
    ZoomIn,
    ZoomOut,
    Shift(Direction),
    CenterOn(Point),
}

impl fmt::Display for ViewportCommand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ViewportCommand::ZoomIn => f.write_str("zoom in"),
            ViewportCommand::ZoomOut => f.write_str("zoom out"),
            ViewportCommand::Shift(d) => write!(f, "shift {}", d.word()),
            ViewportCommand::CenterOn(p) => write!(f, "center {p}"),
        }
    }
}

impl FromStr for ViewportCommand {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let mut it = s.split_whitespace();
        let cmd = match (it.next(), it.next()) {
            (Some("zoom"), Some("in")) => ViewportCommand::ZoomIn,
            (Some("zoom"), Some("out")) => ViewportCommand::ZoomOut,
            (Some("shift"), Some(d)) => {
                ViewportCommand::Shift(Direction::from_word(d).ok_or(format!("bad direction {d}"))?)
            }
            (Some("center"), Some(p)) => ViewportCommand::CenterOn(p.parse().map_err(|_| format!("bad point {p}"))?),
            _ => return Err(format!("not a viewport command: {s}")),
        };
        if it.next().is_some() {
            return Err(format!("trailing words in {s}"));
        }
        Ok(cmd)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapState {
    pub center: Point,
    pub zoom: u32,
    pub places: Vec<Place>,
}

impl Default for MapState {
    fn default() -> Self {
        Self {
            center: Point::new(GRID / 2, GRID / 2),
            zoom: MIN_ZOOM,
            places: fixture_places(),
        }
    }
}

/// Cells between the view centre and its edge.
pub fn view_radius(zoom: u32) -> i32 {
    (GRID / 2) / zoom as i32
}

impl MapState {
    pub fn apply_viewport_command(&mut self, cmd: ViewportCommand) {
        match cmd {
            ViewportCommand::ZoomIn => self.zoom = (self.zoom + 1).min(MAX_ZOOM),
            ViewportCommand::ZoomOut => self.zoom = self.zoom.saturating_sub(1).max(MIN_ZOOM),
            ViewportCommand::Shift(d) => {
                let (dx, dy) = match d {
                    Direction::Up => (0, -1),
                    Direction::Down => (0, 1),
                    Direction::Left => (-1, 0),
                    Direction::Right => (1, 0),
                };
                self.center = clamp_point(Point::new(self.center.x + dx, self.center.y + dy));
            }
            ViewportCommand::CenterOn(p) => self.center = clamp_point(p),
        }
    }

    /// Places of `kind` (or any kind) within `radius` of `focus`, nearest
    /// first, ties by name.
    pub fn nearby(&self, kind: Option<PlaceKind>, focus: Point, radius: f64) -> Vec<&Place> {
        let mut hits: Vec<(f64, &Place)> = self
            .places
            .iter()
            .filter(|p| kind.is_none_or(|k| p.kind == k))
            .map(|p| (distance(p.at, focus), p))
            .filter(|(d, _)| *d <= radius)
            .collect();
        hits.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.name.cmp(&b.1.name)));
        hits.into_iter().map(|(_, p)| p).collect()
    }

    pub fn find_place(&self, text: &str) -> Option<&Place> {
        let t = format!(" {} ", normalize_text(text));
        self.places
            .iter()
            .find(|p| t.contains(&format!(" {} ", normalize_text(&p.name))))
    }

    /// Answer to an information request: the nearest place of `kind`
    /// within `INFO_RADIUS` of the pointer, else a place named in the
    /// text.
    pub fn info_query(&self, text: &str, pointer: Option<Point>, kind: Option<PlaceKind>) -> String {
        let hit = match pointer {
            Some(p) => self.nearby(kind, p, INFO_RADIUS).into_iter().next(),
            None => self
                .find_place(text)
                .filter(|p| kind.is_none_or(|k| p.kind == k)),
        };
        match hit {
            Some(p) => format!("{}: {}", p.name, p.description),
            None => NO_INFORMATION.to_string(),
        }
    }
}

pub const NO_INFORMATION: &str = "no information found";

fn clamp_point(p: Point) -> Point {
    Point::new(p.x.clamp(0, GRID - 1), p.y.clamp(0, GRID - 1))
}

pub fn distance(a: Point, b: Point) -> f64 {
    let (dx, dy) = (f64::from(a.x - b.x), f64::from(a.y - b.y));
    (dx * dx + dy * dy).sqrt()
}

pub type SharedMap = Arc<Mutex<MapState>>;

pub fn shared_map() -> SharedMap {
    Arc::new(Mutex::new(MapState::default()))
}

fn lock(map: &SharedMap) -> MutexGuard<'_, MapState> {
    map.lock().unwrap_or_else(|e| e.into_inner())
}

const DEICTIC: [&str; 4] = ["this", "that", "here", "there"];

/// Whether an utterance refers to something the user should point at.
pub fn is_deictic(text: &str) -> bool {
    tokens(text).any(|t| DEICTIC.contains(&t))
}

/// A pointer event belongs with an utterance if they are at most
/// `POINTER_WINDOW` seconds apart.
pub fn pointer_applies(text_at: f64, pointer_at: f64) -> bool {
    (text_at - pointer_at).abs() <= POINTER_WINDOW
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnifiedRequest {
    pub user: UserId,
    pub text: String,
    pub pointer: Option<Point>,
}

/// Pairs an utterance with the pointer event that accompanies it, if any.
pub fn unify_inputs(
    user: &UserId,
    text: &str,
    text_at: f64,
    pointer: Option<(Point, f64)>,
) -> UnifiedRequest {
    let text = normalize_text(text);
    let pointer = pointer
        .filter(|(_, at)| pointer_applies(text_at, *at))
        .map(|(p, _)| p);
    UnifiedRequest {
        user: user.clone(),
        text,
        pointer,
    }
}

#[derive(Debug, Clone)]
struct Held {
    user: UserId,
    text: String,
    at: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OpenQuestion {
    pub request: RequestId,
    pub user: UserId,
    pub asker: AgentName,
    pub question: String,
    pub options: Vec<String>,
}

/// Text input: turns utterances into requests for the regulator, pairs
/// them with pointer events, and carries questions and answers between
/// the user and the agent that asked.
#[derive(Debug, Clone)]
pub struct TextInputUnit {
    regulator: AgentName,
    held: Option<Held>,
    pointer: Option<(UserId, Point, f64)>,
    questions: Vec<OpenQuestion>,
    sent: Vec<UnifiedRequest>,
}

impl TextInputUnit {
    pub fn new(regulator: AgentName) -> Self {
        Self {
            regulator,
            held: None,
            pointer: None,
            questions: Vec::new(),
            sent: Vec::new(),
        }
    }

    pub fn open_questions(&self) -> &[OpenQuestion] {
        &self.questions
    }

    pub fn sent(&self) -> &[UnifiedRequest] {
        &self.sent
    }

    fn emit(&mut self, io: &mut Io<'_>, req: UnifiedRequest) {
        let id = io.next_request_id();
        io.send(
            Performative::IsThisYours,
            vec![self.regulator.clone()],
            req.user.clone(),
            id,
            Content::Request(RequestText::new(req.text.clone()).with_pointer(req.pointer)),
        );
        self.sent.push(req);
    }

    fn flush(&mut self, io: &mut Io<'_>) {
        if let Some(h) = self.held.take() {
            let req = unify_inputs(&h.user, &h.text, h.at, None);
            self.emit(io, req);
        }
    }

    /// A click nobody spoke about becomes a request of its own.
    fn flush_pointer(&mut self, io: &mut Io<'_>) {
        if let Some((user, p, _)) = self.pointer.take() {
            self.emit(
                io,
                UnifiedRequest {
                    user,
                    text: String::new(),
                    pointer: Some(p),
                },
            );
        }
    }

    fn take_pointer(&mut self, user: &UserId, at: f64) -> Option<(Point, f64)> {
        match &self.pointer {
            Some((u, p, t)) if u == user && pointer_applies(at, *t) => {
                let out = (*p, *t);
                self.pointer = None;
                Some(out)
            }
            _ => None,
        }
    }

    fn on_pointer(&mut self, io: &mut Io<'_>, user: UserId, point: Point, at: f64) {
        match self.held.take() {
            Some(h) if h.user == user && pointer_applies(h.at, at) => {
                let req = unify_inputs(&h.user, &h.text, h.at, Some((point, at)));
                self.emit(io, req);
            }
            other => {
                self.held = other;
                self.flush(io);
                self.flush_pointer(io);
                self.pointer = Some((user, point, at));
            }
        }
    }
}

impl ProcessUnit for TextInputUnit {
    fn external(&mut self, event: &ExternalEvent, io: &mut Io<'_>) {
        match event {
            ExternalEvent::Said { user, text, at } => {
                self.flush(io);
                let closed = text.trim_end().ends_with(['.', '!']);
                let norm = normalize_text(text);
                let pointer = self.take_pointer(user, *at);
                self.flush_pointer(io);
                if let Some(p) = pointer {
                    let req = unify_inputs(user, &norm, *at, Some(p));
                    self.emit(io, req);
                } else if is_deictic(&norm) && !closed {
                    self.held = Some(Held {
                        user: user.clone(),
                        text: norm,
                        at: *at,
                    });
                } else {
                    let req = unify_inputs(user, &norm, *at, None);
                    self.emit(io, req);
                }
            }
            ExternalEvent::Pointed { user, point, at } => {
                self.on_pointer(io, user.clone(), *point, *at);
            }
            ExternalEvent::Tick { at } => {
                if self.held.as_ref().is_some_and(|h| at - h.at > POINTER_WINDOW) {
                    self.flush(io);
                }
                if self.pointer.as_ref().is_some_and(|(_, _, t)| at - t > POINTER_WINDOW) {
                    self.flush_pointer(io);
                }
            }
            ExternalEvent::Answered { user, text, .. } => {
                let Some(k) = self.questions.iter().rposition(|q| &q.user == user) else {
                    return;
                };
                let q = self.questions.remove(k);
                io.send(
                    Performative::UserAnswer,
                    vec![q.asker],
                    q.user,
                    q.request,
                    Content::Answer(text.trim().to_string()),
                );
            }
            _ => {}
        }
    }

    fn message(&mut self, msg: &Message, io: &mut Io<'_>) {
        match (&msg.performative, &msg.content) {
            (Performative::UserQuery, Content::Query { question, options }) => {
                self.questions.retain(|q| q.request != msg.request);
                self.questions.push(OpenQuestion {
                    request: msg.request.clone(),
                    user: msg.user.clone(),
                    asker: msg.sender.clone(),
                    question: question.clone(),
                    options: options.clone(),
                });
            }
            (Performative::ThisIsYours, Content::Request(r)) => {
                if let Some(p) = r.pointer {
                    let now = io.now();
                    self.on_pointer(io, msg.user.clone(), p, now);
                }
            }
            _ => {}
        }
    }

    fn as_any(&self) -> &dyn Any {
        self
    }
}

/// Pointer input: forwards each click to text input for unification.
#[derive(Debug, Clone)]
pub struct PointerInputUnit {
    text_input: AgentName,
}

impl PointerInputUnit {
    pub fn new(text_input: AgentName) -> Self {
        Self { text_input }
    }
}

impl ProcessUnit for PointerInputUnit {
    fn external(&mut self, event: &ExternalEvent, io: &mut Io<'_>) {
        if let ExternalEvent::Pointed { user, point, .. } = event {
            let id = io.next_request_id();
            io.send(
                Performative::ThisIsYours,
                vec![self.text_input.clone()],
                user.clone(),
                id,
                Content::Request(RequestText::new("").with_pointer(Some(*point))),
            );
        }
    }

    fn as_any(&self) -> &dyn Any {
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Leaf {
    Magnification,
    Shifting,
    Locations,
    GeneralInformation,
    Hotels,
    Restaurants,
}

/// Process unit of the agents that actually carry out requests.
#[derive(Debug, Clone)]
pub struct LeafUnit {
    kind: Leaf,
    map: SharedMap,
}

impl LeafUnit {
    pub fn new(kind: Leaf, map: SharedMap) -> Self {
        Self { kind, map }
    }
}

fn list_places(label: &str, places: &[&Place]) -> String {
    if places.is_empty() {
        return format!("No {label} in view");
    }
    let items: Vec<String> = places.iter().map(|p| format!("{} ({})", p.name, p.at)).collect();
    format!("{}: {}", capitalize(label), items.join(", "))
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    c.next()
        .map(|f| f.to_uppercase().collect::<String>() + c.as_str())
        .unwrap_or_default()
}

/// What a leaf does with a request, given the current map.
pub fn leaf_payload(kind: Leaf, map: &MapState, text: &str, pointer: Option<Point>) -> String {
    let words: Vec<&str> = tokens(text).collect();
    let in_view = f64::from(view_radius(map.zoom));
    match kind {
        Leaf::Magnification => {
            let out = words
                .iter()
                .any(|w| matches!(*w, "out" | "smaller" | "further" | "away"));
            let cmd = if out {
                ViewportCommand::ZoomOut
            } else {
                ViewportCommand::ZoomIn
            };
            cmd.to_string()
        }
        Leaf::Shifting => {
            let dir = words.iter().find_map(|w| Direction::from_word(w));
            let cmd = match (dir, pointer) {
                (Some(d), _) => ViewportCommand::Shift(d),
                (None, Some(p)) => ViewportCommand::CenterOn(p),
                (None, None) => ViewportCommand::Shift(Direction::Up),
            };
            cmd.to_string()
        }
        Leaf::Locations => match map.find_place(text) {
            Some(p) => format!("{} is at {}", p.name, p.at),
            None => "I do not know that place".to_string(),
        },
        Leaf::GeneralInformation => map.info_query(text, pointer, None),
        Leaf::Hotels | Leaf::Restaurants => {
            let (label, k) = if kind == Leaf::Hotels {
                ("hotels", PlaceKind::Hotel)
            } else {
                ("restaurants", PlaceKind::Restaurant)
            };
            if pointer.is_some() || map.find_place(text).is_some() {
                map.info_query(text, pointer, Some(k))
            } else {
                list_places(label, &map.nearby(Some(k), map.center, in_view))
            }
        }
    }
}

impl ProcessUnit for LeafUnit {
    fn process(&mut self, job: &Job, _io: &mut Io<'_>) -> Vec<String> {
        let map = lock(&self.map);
        vec![leaf_payload(self.kind, &map, &job.text, job.pointer)]
    }

    fn as_any(&self) -> &dyn Any {
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AppliedCommand {
    pub request: RequestId,
    pub command: ViewportCommand,
    pub from: AgentName,
    pub confidence: Confidence,
}

/// View-port output: applies, once the community is quiet, the most
/// confident viewport command received for each request.
#[derive(Debug, Clone)]
pub struct ViewportOutputUnit {
    map: SharedMap,
    pending: BTreeMap<RequestId, (ViewportCommand, AgentName, Confidence)>,
    applied: Vec<AppliedCommand>,
    rejected: Vec<String>,
}

impl ViewportOutputUnit {
    pub fn new(map: SharedMap) -> Self {
        Self {
            map,
            pending: BTreeMap::new(),
            applied: Vec::new(),
            rejected: Vec::new(),
        }
    }

    pub fn applied(&self) -> &[AppliedCommand] {
        &self.applied
    }

    pub fn rejected(&self) -> &[String] {
        &self.rejected
    }
}

impl ProcessUnit for ViewportOutputUnit {
    fn message(&mut self, msg: &Message, _io: &mut Io<'_>) {
        let Content::Output { payload, confidence } = &msg.content else {
            return;
        };
        let Ok(cmd) = payload.parse::<ViewportCommand>() else {
            self.rejected.push(payload.clone());
            return;
        };
        let better = self
            .pending
            .get(&msg.request)
            .is_none_or(|(_, _, c)| confidence.value() > c.value());
        if better {
            self.pending
                .insert(msg.request.clone(), (cmd, msg.sender.clone(), *confidence));
        }
    }

    fn settle(&mut self, _io: &mut Io<'_>) {
        let mut map = lock(&self.map);
        for (request, (command, from, confidence)) in std::mem::take(&mut self.pending) {
            map.apply_viewport_command(command);
            self.applied.push(AppliedCommand {
                request,
                command,
                from,
                confidence,
            });
        }
    }

    fn as_any(&self) -> &dyn Any {
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TextLine {
    pub request: RequestId,
    pub from: AgentName,
    pub text: String,
}

/// Information output: the text shown to the user.
#[derive(Debug, Clone, Default)]
pub struct TextOutputUnit {
    lines: Vec<TextLine>,
}

impl TextOutputUnit {
    pub fn lines(&self) -> &[TextLine] {
        &self.lines
    }
}

impl ProcessUnit for TextOutputUnit {
    fn message(&mut self, msg: &Message, _io: &mut Io<'_>) {
        if let Content::Output { payload, .. } = &msg.content {
            self.lines.push(TextLine {
                request: msg.request.clone(),
                from: msg.sender.clone(),
                text: payload.clone(),
            });
        }
    }

    fn as_any(&self) -> &dyn Any {
        self
    }
}

fn community(name: &str) -> CommunityName {
    CommunityName::new(name).expect("demo community names are valid")
}

/// Spawns the demo agents into `rt`, bottom-up, with their startup
/// policies and address books.
pub fn build_demo_topology(rt: &mut Runtime, map: &SharedMap) -> Result<(), RuntimeError> {
    use names::*;
    let mut tables = keyword_tables();
    let mut policy = |n: &str| tables.remove(&agent(n)).unwrap_or_default();

    rt.spawn(
        AgentSpec::new(agent(FEEDBACK), AgentRole::Feedback)
            .process(FeedbackUnit::new(RewardConfig::default())),
    )?;
    rt.spawn(
        AgentSpec::new(agent(VIEW_PORT_OUTPUT), AgentRole::Output)
            .process(ViewportOutputUnit::new(map.clone())),
    )?;
    rt.spawn(
        AgentSpec::new(agent(INFORMATION_OUTPUT), AgentRole::Output)
            .process(TextOutputUnit::default()),
    )?;

    let leaves = [
        (MAGNIFICATION, Leaf::Magnification, 1, VIEW_PORT_OUTPUT),
        (SHIFTING, Leaf::Shifting, 1, VIEW_PORT_OUTPUT),
        (GENERAL_INFORMATION, Leaf::GeneralInformation, 1, INFORMATION_OUTPUT),
        (HOTELS, Leaf::Hotels, 1, INFORMATION_OUTPUT),
        (RESTAURANTS, Leaf::Restaurants, 1, INFORMATION_OUTPUT),
    ];
    for (name, kind, priority, out) in leaves {
        rt.spawn(
            AgentSpec::interpreter(agent(name))
                .priority(priority)
                .policy(policy(name))
                .process(LeafUnit::new(kind, map.clone()))
                .output_to(agent(out))
                .notify(agent(FEEDBACK)),
        )?;
    }
    rt.spawn(
        AgentSpec::interpreter(agent(LOCATIONS))
            .priority(2)
            .policy(policy(LOCATIONS))
            .process(LeafUnit::new(Leaf::Locations, map.clone()))
            .output_to(agent(INFORMATION_OUTPUT))
            .notify(agent(FEEDBACK)),
    )?;
    rt.spawn(
        AgentSpec::interpreter(agent(MAP_VIEW_PORT))
            .policy(policy(MAP_VIEW_PORT)),
    )?;
    rt.spawn(
        AgentSpec::interpreter(agent(INFORMATION))
            .policy(policy(INFORMATION)),
    )?;
    rt.spawn(
        AgentSpec::interpreter(agent(REGULATOR))
            .root()
            .policy(policy(REGULATOR))
            .output_to(agent(INFORMATION_OUTPUT)),
    )?;
    rt.spawn(
        AgentSpec::new(agent(TEXT_INPUT), AgentRole::Input)
            .process(TextInputUnit::new(agent(REGULATOR))),
    )?;
    rt.spawn(
        AgentSpec::new(agent(POINTER_INPUT), AgentRole::Input)
            .process(PointerInputUnit::new(agent(TEXT_INPUT))),
    )?;

    // Each member introduces itself to its parent; the parent learns the
    // community from the advertisement.
    let edges = [
        (MAP_VIEW_PORT, REGULATOR),
        (INFORMATION, REGULATOR),
        (MAGNIFICATION, MAP_VIEW_PORT),
        (SHIFTING, MAP_VIEW_PORT),
        (LOCATIONS, INFORMATION),
        (GENERAL_INFORMATION, INFORMATION),
        (HOTELS, LOCATIONS),
        (RESTAURANTS, LOCATIONS),
    ];
    for (member, parent) in edges {
        rt.join(&agent(member), &agent(parent), &community(member))?;
    }
    rt.run_until_quiescent()?;
    Ok(())
}
