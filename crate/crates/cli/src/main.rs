use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use aaosa_core::harness::{
    replay_golden, run_script, GoldenOutcome, Script, Session, SessionConfig,
};
use aaosa_core::{PolicyStore, ResetScope, UserId};
use anyhow::{Context, Result};
use clap::{ArgGroup, Parser, Subcommand};

/// Drive the map demo agent community from scripts.
#[derive(Parser)]
#[command(name = "aaosa", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Play a script and check its expectations.
    Run {
        script: PathBuf,
        /// Write the message trace log here.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Load learned knowledge before running.
        #[arg(long)]
        kb_in: Option<PathBuf>,
        /// Save learned knowledge after running.
        #[arg(long)]
        kb_out: Option<PathBuf>,
        /// Seeded random delivery order instead of FIFO.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "u1")]
        user: String,
    },
    /// Compare each X.script in a directory against X.trace.
    ReplayGolden {
        dir: PathBuf,
        /// Overwrite the trace files with fresh runs.
        #[arg(long)]
        bless: bool,
    },
    /// Forget learned knowledge in a knowledge-base file.
    #[command(group(ArgGroup::new("scope").required(true).args(["system", "user"])))]
    Reset {
        #[arg(long)]
        system: bool,
        #[arg(long)]
        user: Option<String>,
        #[arg(long, default_value = "aaosa.kb")]
        kb: PathBuf,
    },
}

enum Outcome {
    Pass,
    Fail,
}

fn run(cmd: Command) -> Result<Outcome> {
    match cmd {
        Command::Run {
            script,
            trace,
            kb_in,
            kb_out,
            seed,
            user,
        } => {
            let src = fs::read_to_string(&script)
                .with_context(|| format!("reading {}", script.display()))?;
            let parsed = Script::parse(&src).with_context(|| script.display().to_string())?;
            let user = UserId::new(user).context("--user")?;
            let mut session = Session::new(SessionConfig {
                seed,
                user,
                ..Default::default()
            })?;
            if let Some(kb) = &kb_in {
                let text = fs::read_to_string(kb)
                    .with_context(|| format!("reading {}", kb.display()))?;
                session
                    .load_kb_str(&text)
                    .with_context(|| kb.display().to_string())?;
            }
            let report = run_script(&parsed, &mut session)?;
            for (line, event) in &report.events {
                println!("{line}: {event}");
            }
            for c in &report.checks {
                let mark = if c.passed { "ok" } else { "FAIL" };
                println!("{mark} line {}: expect {}", c.line, c.expected);
                if !c.passed {
                    for o in &c.observed {
                        println!("    saw {o}");
                    }
                }
            }
            if let Some(t) = &trace {
                fs::write(t, session.trace_log())
                    .with_context(|| format!("writing {}", t.display()))?;
            }
            if let Some(kb) = &kb_out {
                fs::write(kb, session.kb_string())
                    .with_context(|| format!("writing {}", kb.display()))?;
            }
            Ok(if report.passed() { Outcome::Pass } else { Outcome::Fail })
        }
        Command::ReplayGolden { dir, bless } => {
            let cases = replay_golden(&dir, bless)?;
            let mut ok = true;
            for case in &cases {
                let verdict = match &case.outcome {
                    GoldenOutcome::Match => "match".to_string(),
                    GoldenOutcome::Blessed => "blessed".to_string(),
                    GoldenOutcome::Missing => "missing trace file".to_string(),
                    GoldenOutcome::Differs {
                        line,
                        expected,
                        actual,
                    } => format!(
                        "differs at line {line}\n    expected {}\n    actual   {}",
                        expected.as_deref().unwrap_or("<end>"),
                        actual.as_deref().unwrap_or("<end>")
                    ),
                };
                println!("{}: {verdict}", case.name);
                for c in &case.failed_checks {
                    println!("    failed expectation at line {}: {}", c.line, c.expected);
                }
                ok &= case.passed();
            }
            if cases.is_empty() {
                println!("no scripts in {}", dir.display());
            }
            Ok(if ok { Outcome::Pass } else { Outcome::Fail })
        }
        Command::Reset { system, user, kb } => {
            let scope = if system {
                ResetScope::System
            } else {
                ResetScope::User(UserId::new(user.unwrap_or_default()).context("--user")?)
            };
            let mut store = PolicyStore::default();
            if kb.exists() {
                store
                    .load_kb(&kb)
                    .with_context(|| kb.display().to_string())?;
            }
            store.reset(&scope);
            store
                .save_kb(&kb)
                .with_context(|| format!("writing {}", kb.display()))?;
            Ok(Outcome::Pass)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(Outcome::Pass) => ExitCode::SUCCESS,
        Ok(Outcome::Fail) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
