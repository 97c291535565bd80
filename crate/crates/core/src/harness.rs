//! Scripted sessions against the demo community: the script format, a
//! `Session` driver shared with the network gateway, and golden replay.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::learning::{LearningError, ResetScope};
use crate::mapdemo::{self, names, MapState, SharedMap, POINTER_WINDOW};
use crate::rewards::{classify_remark, RewardConfig};
use crate::runtime::{ExternalEvent, Runtime, RuntimeConfig, RuntimeError};
use crate::types::{normalize_text, AgentName, Content, Performative, Point, RequestId, UserId};

#[derive(Debug, Error)]
pub enum ScriptError {
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Step {
    Say(String),
    Click(Point),
    Answer(String),
    Pause(f64),
    ExpectQuery(String),
    ExpectOutput(String),
    Reset(ResetScope),
    User(UserId),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Script {
    /// `(line number, step)`, in file order.
    pub steps: Vec<(usize, Step)>,
}

fn unquote(s: &str) -> &str {
    let s = s.trim();
    s.strip_prefix('"')
        .and_then(|r| r.strip_suffix('"'))
        .unwrap_or(s)
}

impl Script {
    /// One step per line: a verb, whitespace, then its argument. Blank
    /// lines and `#` comments are skipped.
    pub fn parse(src: &str) -> Result<Self, ScriptError> {
        let mut steps = Vec::new();
        for (i, raw) in src.lines().enumerate() {
            let line = i + 1;
            let l = raw.trim();
            if l.is_empty() || l.starts_with('#') {
                continue;
            }
            let (verb, arg) = l.split_once(char::is_whitespace).unwrap_or((l, ""));
            let arg = unquote(arg);
            let err = |reason: String| ScriptError::Parse { line, reason };
            let need = |what: &str| {
                if arg.is_empty() {
                    Err(err(format!("{verb} needs {what}")))
                } else {
                    Ok(arg.to_string())
                }
            };
            let step = match verb {
                "say" => Step::Say(need("text")?),
                "answer" => Step::Answer(need("text")?),
                "expect-query" => Step::ExpectQuery(need("question text")?),
                "expect-output" => Step::ExpectOutput(need("payload")?),
                "click" => Step::Click(
                    arg.parse()
                        .map_err(|_| err(format!("click needs x,y, got {arg:?}")))?,
                ),
                "pause" => {
                    let s: f64 = arg
                        .parse()
                        .map_err(|_| err(format!("pause needs seconds, got {arg:?}")))?;
                    if !s.is_finite() || s < 0.0 {
                        return Err(err(format!("pause must be non-negative, got {arg}")));
                    }
                    Step::Pause(s)
                }
                "user" => Step::User(
                    UserId::new(arg).map_err(|e| err(e.to_string()))?,
                ),
                "reset" => {
                    let mut w = arg.split_whitespace();
                    match (w.next(), w.next(), w.next()) {
                        (Some("system"), None, _) => Step::Reset(ResetScope::System),
                        (Some("user"), Some(u), None) => Step::Reset(ResetScope::User(
                            UserId::new(u).map_err(|e| err(e.to_string()))?,
                        )),
                        _ => return Err(err(format!("reset needs system or user <id>, got {arg:?}"))),
                    }
                }
                other => return Err(err(format!("unknown verb {other:?}"))),
            };
            if matches!(step, Step::Answer(_))
                && !matches!(steps.last(), Some((_, Step::ExpectQuery(_))))
            {
                return Err(err("answer must follow expect-query".to_string()));
            }
            steps.push((line, step));
        }
        Ok(Self { steps })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SessionEvent {
    Query {
        request: RequestId,
        question: String,
        options: Vec<String>,
    },
    Output {
        request: RequestId,
        from: AgentName,
        to: AgentName,
        payload: String,
        confidence: f64,
    },
    Map {
        center: Point,
        zoom: u32,
    },
}

impl fmt::Display for SessionEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SessionEvent::Query { question, .. } => write!(f, "query: {question}"),
            SessionEvent::Output { from, payload, .. } => write!(f, "output from {from}: {payload}"),
            SessionEvent::Map { center, zoom } => write!(f, "map: center {center} zoom {zoom}"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SessionConfig {
    pub seed: Option<u64>,
    pub user: UserId,
    pub max_steps: usize,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            seed: None,
            user: UserId::new("u1").expect("valid"),
            max_steps: crate::runtime::DEFAULT_MAX_STEPS,
        }
    }
}

/// A running demo community plus a session clock. Each user action takes
/// one second of session time; `pause` advances it further.
pub struct Session {
    rt: Runtime,
    map: SharedMap,
    user: UserId,
    clock: f64,
    seen: usize,
    remarks: RewardConfig,
}

impl Session {
    pub fn new(cfg: SessionConfig) -> Result<Self, RuntimeError> {
        let mut rt = Runtime::new(RuntimeConfig {
            seed: cfg.seed,
            max_steps: cfg.max_steps,
            ..Default::default()
        });
        let map = mapdemo::shared_map();
        mapdemo::build_demo_topology(&mut rt, &map)?;
        Ok(Self {
            rt,
            map,
            user: cfg.user,
            clock: 0.0,
            seen: 0,
            remarks: RewardConfig::default(),
        })
    }

    pub fn user(&self) -> &UserId {
        &self.user
    }

    pub fn set_user(&mut self, user: UserId) {
        self.user = user;
    }

    pub fn clock(&self) -> f64 {
        self.clock
    }

    pub fn runtime(&self) -> &Runtime {
        &self.rt
    }

    pub fn runtime_mut(&mut self) -> &mut Runtime {
        &mut self.rt
    }

    pub fn map(&self) -> MapState {
        self.map.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }

    fn deliver(&mut self, to: &str, event: ExternalEvent) -> Result<(), RuntimeError> {
        self.rt.set_now(self.clock);
        self.rt.external(&mapdemo::agent(to), &event)
    }

    fn settle(&mut self) -> Result<Vec<SessionEvent>, RuntimeError> {
        let before = self.map();
        self.rt.run_until_quiescent()?;
        let mut events = Vec::new();
        for e in &self.rt.trace()[self.seen..] {
            let m = &e.message;
            let to = &m.recipients[0];
            match (&m.performative, &m.content) {
                (Performative::UserQuery, Content::Query { question, options })
                    if to.as_str() == names::TEXT_INPUT =>
                {
                    events.push(SessionEvent::Query {
                        request: m.request.clone(),
                        question: question.clone(),
                        options: options.clone(),
                    })
                }
                (Performative::Output, Content::Output { payload, confidence })
                    if to.as_str() != names::FEEDBACK =>
                {
                    events.push(SessionEvent::Output {
                        request: m.request.clone(),
                        from: m.sender.clone(),
                        to: to.clone(),
                        payload: payload.clone(),
                        confidence: confidence.value(),
                    })
                }
                _ => {}
            }
        }
        self.seen = self.rt.trace().len();
        let after = self.map();
        if after.center != before.center || after.zoom != before.zoom {
            events.push(SessionEvent::Map {
                center: after.center,
                zoom: after.zoom,
            });
        }
        Ok(events)
    }

    fn act(&mut self, f: impl FnOnce(&mut Self) -> Result<(), RuntimeError>) -> Result<Vec<SessionEvent>, RuntimeError> {
        f(self)?;
        let events = self.settle();
        self.clock += 1.0;
        events
    }

    /// An utterance. Whole-utterance satisfaction remarks go to the
    /// feedback agent only; anything else is also a command.
    pub fn say(&mut self, text: &str) -> Result<Vec<SessionEvent>, RuntimeError> {
        let user = self.user.clone();
        let at = self.clock;
        if classify_remark(text, &self.remarks).is_some() {
            return self.act(|s| {
                s.deliver(names::FEEDBACK, ExternalEvent::Remark { user, text: text.to_string(), at })
            });
        }
        self.act(|s| {
            s.deliver(
                names::FEEDBACK,
                ExternalEvent::Said { user: user.clone(), text: text.to_string(), at },
            )?;
            s.deliver(names::TEXT_INPUT, ExternalEvent::Said { user, text: text.to_string(), at })
        })
    }

    /// A satisfaction remark, whatever its wording.
    pub fn remark(&mut self, text: &str) -> Result<Vec<SessionEvent>, RuntimeError> {
        let user = self.user.clone();
        let at = self.clock;
        self.act(|s| {
            s.deliver(names::FEEDBACK, ExternalEvent::Remark { user, text: text.to_string(), at })
        })
    }

    pub fn click(&mut self, point: Point) -> Result<Vec<SessionEvent>, RuntimeError> {
        let user = self.user.clone();
        let at = self.clock;
        self.act(|s| s.deliver(names::POINTER_INPUT, ExternalEvent::Pointed { user, point, at }))
    }

    pub fn answer(&mut self, text: &str) -> Result<Vec<SessionEvent>, RuntimeError> {
        let user = self.user.clone();
        let at = self.clock;
        self.act(|s| {
            s.deliver(
                names::TEXT_INPUT,
                ExternalEvent::Answered { user, text: text.to_string(), at },
            )
        })
    }

    pub fn pause(&mut self, seconds: f64) -> Result<Vec<SessionEvent>, RuntimeError> {
        let user = self.user.clone();
        self.clock += seconds;
        let at = self.clock;
        self.deliver(names::FEEDBACK, ExternalEvent::Paused { user, seconds, at })?;
        self.deliver(names::TEXT_INPUT, ExternalEvent::Tick { at })?;
        self.settle()
    }

    /// Closes any pointer window still open.
    pub fn flush(&mut self) -> Result<Vec<SessionEvent>, RuntimeError> {
        let at = self.clock + POINTER_WINDOW + 1.0;
        self.deliver(names::TEXT_INPUT, ExternalEvent::Tick { at })?;
        self.settle()
    }

    pub fn reset(&mut self, scope: &ResetScope) {
        self.rt.store_mut().reset(scope);
    }

    pub fn kb_string(&self) -> String {
        self.rt.store().to_kb_string()
    }

    pub fn load_kb_str(&mut self, kb: &str) -> Result<(), LearningError> {
        self.rt.store_mut().load_kb_str(kb)
    }

    /// Every delivery so far, one trace line each.
    pub fn trace_lines(&self) -> Vec<String> {
        self.rt
            .trace()
            .iter()
            .map(|e| e.to_line().expect("delivered messages were validated at send"))
            .collect()
    }

    /// Newline-terminated trace log.
    pub fn trace_log(&self) -> String {
        let mut s = self.trace_lines().join("\n");
        if !s.is_empty() {
            s.push('\n');
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub line: usize,
    pub expected: String,
    pub passed: bool,
    /// What actually happened since the last user action.
    pub observed: Vec<String>,
}

#[derive(Debug, Clone, Default)]
pub struct ScriptReport {
    pub checks: Vec<Check>,
    pub events: Vec<(usize, SessionEvent)>,
}

impl ScriptReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

fn canon(s: &str) -> String {
    normalize_text(&s.replace('-', " "))
}

/// Plays `script` against `session`. Expectations look at what happened
/// since the most recent user action.
pub fn run_script(script: &Script, session: &mut Session) -> Result<ScriptReport, RuntimeError> {
    let mut report = ScriptReport::default();
    let mut recent: Vec<SessionEvent> = Vec::new();
    for (line, step) in &script.steps {
        let produced = match step {
            Step::Say(t) => Some(session.say(t)?),
            Step::Click(p) => Some(session.click(*p)?),
            Step::Answer(t) => Some(session.answer(t)?),
            Step::Pause(s) => Some(session.pause(*s)?),
            Step::Reset(scope) => {
                session.reset(scope);
                None
            }
            Step::User(u) => {
                session.set_user(u.clone());
                None
            }
            Step::ExpectQuery(q) | Step::ExpectOutput(q) => {
                let late = session.flush()?;
                report.events.extend(late.iter().cloned().map(|e| (*line, e)));
                recent.extend(late);
                let passed = recent.iter().any(|e| match (step, e) {
                    (Step::ExpectQuery(_), SessionEvent::Query { question, .. }) => {
                        question.trim() == q.trim()
                    }
                    (Step::ExpectOutput(_), SessionEvent::Output { payload, .. }) => {
                        canon(payload) == canon(q)
                    }
                    _ => false,
                });
                report.checks.push(Check {
                    line: *line,
                    expected: format!(
                        "{} {q}",
                        if matches!(step, Step::ExpectQuery(_)) { "query" } else { "output" }
                    ),
                    passed,
                    observed: recent.iter().map(ToString::to_string).collect(),
                });
                None
            }
        };
        if let Some(events) = produced {
            report.events.extend(events.iter().cloned().map(|e| (*line, e)));
            recent = events;
        }
    }
    session.flush()?;
    Ok(report)
}

#[derive(Debug, Error)]
pub enum GoldenError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Script { path: PathBuf, source: ScriptError },
    #[error("{path}: {source}")]
    Runtime { path: PathBuf, source: RuntimeError },
}

#[derive(Debug, Clone, PartialEq)]
pub enum GoldenOutcome {
    Match,
    Blessed,
    Missing,
    /// First differing line (1-based) with expected and actual text.
    Differs {
        line: usize,
        expected: Option<String>,
        actual: Option<String>,
    },
}

#[derive(Debug, Clone)]
pub struct GoldenCase {
    pub name: String,
    pub outcome: GoldenOutcome,
    pub failed_checks: Vec<Check>,
    pub trace: String,
}

impl GoldenCase {
    pub fn passed(&self) -> bool {
        matches!(self.outcome, GoldenOutcome::Match | GoldenOutcome::Blessed)
            && self.failed_checks.is_empty()
    }
}

/// Runs one script in a fresh deterministic session and returns its
/// report and trace log.
pub fn run_script_file(path: &Path) -> Result<(ScriptReport, String), GoldenError> {
    let src = fs::read_to_string(path).map_err(|source| GoldenError::Io {
        path: path.to_owned(),
        source,
    })?;
    let script = Script::parse(&src).map_err(|source| GoldenError::Script {
        path: path.to_owned(),
        source,
    })?;
    let rt_err = |source| GoldenError::Runtime {
        path: path.to_owned(),
        source,
    };
    let mut session = Session::new(SessionConfig::default()).map_err(rt_err)?;
    let report = run_script(&script, &mut session).map_err(rt_err)?;
    Ok((report, session.trace_log()))
}

/// Replays every `X.script` in `dir` against `X.trace`. With `bless`, the
/// trace files are (re)written instead of compared.
pub fn replay_golden(dir: &Path, bless: bool) -> Result<Vec<GoldenCase>, GoldenError> {
    let io = |path: &Path| {
        let path = path.to_owned();
        move |source| GoldenError::Io { path, source }
    };
    let mut scripts: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "script"))
        .collect();
    scripts.sort();
    let mut cases = Vec::new();
    for script in scripts {
        let (report, trace) = run_script_file(&script)?;
        let golden = script.with_extension("trace");
        let outcome = if bless {
            fs::write(&golden, &trace).map_err(io(&golden))?;
            GoldenOutcome::Blessed
        } else {
            match fs::read_to_string(&golden) {
                Ok(expected) => compare_traces(&expected, &trace),
                Err(e) if e.kind() == std::io::ErrorKind::NotFound => GoldenOutcome::Missing,
                Err(e) => return Err(io(&golden)(e)),
            }
        };
        cases.push(GoldenCase {
            name: script
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default(),
            outcome,
            failed_checks: report.failures().cloned().collect(),
            trace,
        });
    }
    Ok(cases)
}

pub fn compare_traces(expected: &str, actual: &str) -> GoldenOutcome {
    if expected == actual {
        return GoldenOutcome::Match;
    }
    let (mut e, mut a) = (expected.lines(), actual.lines());
    let mut line = 0;
    loop {
        line += 1;
        match (e.next(), a.next()) {
            (Some(x), Some(y)) if x == y => continue,
            (None, None) => {
                // Same lines, different trailing newline.
                return GoldenOutcome::Differs {
                    line,
                    expected: None,
                    actual: None,
                };
            }
            (x, y) => {
                return GoldenOutcome::Differs {
                    line,
                    expected: x.map(str::to_string),
                    actual: y.map(str::to_string),
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn script_grammar() {
        let s = Script::parse(
            "# comment\n\nsay \"move it closer\"\nexpect-query Do you mean magnification or shifting?\nanswer Magnification\nexpect-output zoom-in\nclick 3,4\npause 6\nreset user u2\nreset system\nuser u2\n",
        )
        .unwrap();
        assert_eq!(s.steps.len(), 9);
        assert_eq!(s.steps[0], (3, Step::Say("move it closer".into())));
        assert_eq!(s.steps[4].1, Step::Click(Point::new(3, 4)));
        assert_eq!(s.steps[5].1, Step::Pause(6.0));
        assert_eq!(
            s.steps[6].1,
            Step::Reset(ResetScope::User(UserId::new("u2").unwrap()))
        );
    }

    #[test]
    fn script_errors_name_the_line() {
        for (src, line) in [
            ("say hi\nfly away\n", 2),
            ("click here\n", 1),
            ("pause -3\n", 1),
            ("reset everything\n", 1),
            ("say\n", 1),
            ("user bad id\n", 1),
            ("say hi\nanswer yes\n", 2),
        ] {
            match Script::parse(src) {
                Err(ScriptError::Parse { line: l, .. }) => assert_eq!(l, line, "{src:?}"),
                Ok(s) => panic!("{src:?} parsed as {s:?}"),
            }
        }
    }

    #[test]
    fn trace_comparison_reports_first_difference() {
        assert_eq!(compare_traces("a\nb\n", "a\nb\n"), GoldenOutcome::Match);
        assert_eq!(
            compare_traces("a\nb\n", "a\nc\n"),
            GoldenOutcome::Differs {
                line: 2,
                expected: Some("b".into()),
                actual: Some("c".into())
            }
        );
        assert_eq!(
            compare_traces("a\n", "a\nb\n"),
            GoldenOutcome::Differs {
                line: 2,
                expected: None,
                actual: Some("b".into())
            }
        );
    }

    #[test]
    fn fig_four_dialogue() {
        let mut s = Session::new(SessionConfig::default()).unwrap();
        let ev = s.say("move it closer").unwrap();
        assert!(ev.iter().any(|e| matches!(e, SessionEvent::Query { question, .. }
            if question == "Do you mean magnification or shifting?")));
        let ev = s.answer("Magnification").unwrap();
        assert!(ev.iter().any(|e| matches!(e, SessionEvent::Output { payload, .. } if payload == "zoom in")));
        assert_eq!(s.map().zoom, 2);
    }

    #[test]
    fn deictic_text_waits_for_a_click() {
        let mut s = Session::new(SessionConfig::default()).unwrap();
        assert!(s.say("what's this").unwrap().is_empty());
        let ev = s.click(Point::new(12, 8)).unwrap();
        assert!(ev.iter().any(|e| matches!(e, SessionEvent::Output { payload, .. }
            if payload.starts_with("Hotel Alpha"))), "{ev:?}");
    }
}
