use std::io::Write;
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use cobot_intent::metrics::compute_metrics;
use cobot_intent::protocol::{encode, replay, DEFAULT_PORT};
use cobot_intent::scenario::{check_reachable, prepare, run_scenario, Overrides, ScenarioError};
use cobot_intent::session::FeedbackChannels;
use cobot_intent::Scheme;

mod live;

#[derive(Parser)]
#[command(name = "cobot-sim", version, about = "Cobot pick-and-place simulator with motion-intent feedback")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Serve live sessions to UI clients over TCP or WebSocket.
    Run {
        #[command(flatten)]
        session: SessionArgs,
        #[arg(long, default_value_t = DEFAULT_PORT)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        bind: String,
        /// Wall-clock seconds per simulated second; 0 runs unpaced.
        #[arg(long, default_value_t = 1.0)]
        speed: f64,
        /// Exit after the first session.
        #[arg(long)]
        once: bool,
        /// Directory for session logs.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a headless session with the scripted user (or autonomy).
    Script {
        #[command(flatten)]
        session: SessionArgs,
        /// Directory for the log and report.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-emit a recorded log, to stdout or to one client.
    Replay {
        log: PathBuf,
        /// Wall-clock seconds per simulated second; 0 is as fast as possible.
        #[arg(long, default_value_t = 1.0)]
        speed: f64,
        #[arg(long)]
        port: Option<u16>,
        #[arg(long, default_value = "127.0.0.1")]
        bind: String,
    },
    /// Recompute the report from a log.
    Metrics { log: PathBuf },
    /// Validate a config and check that its task is reachable.
    Check {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Args, Clone)]
struct SessionArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    scheme: Option<Scheme>,
    #[arg(long)]
    autonomy: bool,
    /// both, visual, haptic or none
    #[arg(long)]
    feedback: Option<FeedbackChannels>,
    #[arg(long)]
    seed: Option<u64>,
}

impl SessionArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            scheme: self.scheme,
            autonomy: self.autonomy.then_some(true),
            channels: self.feedback,
            seed: self.seed,
        }
    }
}

fn fail(e: &ScenarioError) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(e.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Check { config } => match check(&config) {
            Ok(()) => {
                println!("{}: ok", config.display());
                ExitCode::SUCCESS
            }
            Err(e) => fail(&e),
        },
        Command::Script { session, out } => {
            match run_scenario(&session.config, &session.overrides(), out.as_deref()) {
                Ok(run) => {
                    println!(
                        "{}",
                        serde_json::to_string_pretty(&run.report).expect("report serializes")
                    );
                    if let Some(p) = &run.log_path {
                        eprintln!("log written to {}", p.display());
                    }
                    if run.report.success {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::FAILURE
                    }
                }
                Err(e) => fail(&e),
            }
        }
        Command::Run {
            session,
            port,
            bind,
            speed,
            once,
            out,
        } => {
            let prepared = match prepare(&session.config, &session.overrides()) {
                Ok(p) => p,
                Err(e) => return fail(&e),
            };
            if let Err(e) = check_reachable(&prepared.0, &prepared.0.scene_for_seed(prepared.1.seed)) {
                return fail(&e);
            }
            report(live::serve(
                &prepared,
                &format!("{bind}:{port}"),
                speed,
                once,
                out.as_deref(),
            ))
        }
        Command::Replay {
            log,
            speed,
            port,
            bind,
        } => report(match port {
            Some(port) => live::serve_replay(&log, speed, &format!("{bind}:{port}")),
            None => replay_stdout(&log, speed),
        }),
        Command::Metrics { log } => report(
            compute_metrics(&log)
                .with_context(|| format!("reading {}", log.display()))
                .map(|r| println!("{}", serde_json::to_string_pretty(&r).expect("report serializes"))),
        ),
    }
}

fn report(r: anyhow::Result<()>) -> ExitCode {
    match r {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn check(config: &Path) -> Result<(), ScenarioError> {
    let (scenario, cfg) = prepare(config, &Overrides::default())?;
    check_reachable(&scenario, &scenario.scene_for_seed(cfg.seed))
}

fn replay_stdout(log: &Path, speed: f64) -> anyhow::Result<()> {
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    for frame in replay(log, speed)? {
        writeln!(out, "{}", encode(&frame?))?;
    }
    Ok(())
}

pub(crate) fn bind(addr: &str) -> anyhow::Result<TcpListener> {
    let listener = TcpListener::bind(addr).with_context(|| format!("binding {addr}"))?;
    println!("listening on {}", listener.local_addr()?);
    std::io::stdout().flush()?;
    Ok(listener)
}
