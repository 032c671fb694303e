use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use tipsprof_core::pipeline::{Context, Overrides};
use tipsprof_core::render;
use tipsprof_core::{Error, Execution, ScheduleMode};

const EXIT_IO: u8 = 1;
const EXIT_PARSE: u8 = 2;
const EXIT_VALIDATION: u8 = 3;
const EXIT_EXPLOSION: u8 = 4;
const EXIT_NON_CONVERGENCE: u8 = 5;
const EXIT_VERIFICATION: u8 = 6;
const EXIT_BUDGET_OVERRUN: u8 = 7;

/// Timed memory-access profiles for real-time tasks.
#[derive(Parser)]
#[command(name = "tipsprof", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the TIPsGraph of every task.
    Tipsgraph(Opts),
    /// Enumerate worst-case timed traces.
    Traces(Opts),
    /// Compute segment profiles.
    Segments(Opts),
    /// Schedule the profiles on their cores.
    Schedule(Opts),
    /// Human-readable summary of every stage.
    Report(Opts),
    /// Run every checker; exits nonzero on any violation.
    Verify(Opts),
}

#[derive(Args)]
struct Opts {
    /// Task system document or a stage artifact.
    input: PathBuf,
    /// Output file (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for per-task analysis.
    #[arg(long)]
    jobs: Option<usize>,
    /// Override the minimum fused segment length.
    #[arg(long)]
    delta: Option<u64>,
    /// Override the trace enumeration limit.
    #[arg(long)]
    max_traces: Option<u64>,
    #[arg(long, value_enum, default_value_t = Mode::Inflate)]
    mode: Mode,
    /// Per-task interference budget in cycles (budget mode).
    #[arg(long)]
    budget: Option<u64>,
    /// Emit a rendering instead of the JSON artifact.
    #[arg(long, value_enum)]
    render: Option<Render>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Inflate,
    Budget,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Render {
    Text,
    Svg,
}

enum Failure {
    Core(Error),
    Usage(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Core(Error::Io(e))
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io(_) => EXIT_IO,
        Error::Parse(_) => EXIT_PARSE,
        Error::Validation { .. }
        | Error::UnreachableTip(_)
        | Error::NegativeGap { .. }
        | Error::HorizonMismatch(..) => EXIT_VALIDATION,
        Error::Explosion { .. } => EXIT_EXPLOSION,
        Error::NonConvergence(_) => EXIT_NON_CONVERGENCE,
    }
}

fn json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("artifacts serialize");
    s.push('\n');
    s
}

fn emit(opts: &Opts, text: &str) -> Result<(), Failure> {
    match &opts.out {
        Some(path) => fs::write(path, text)?,
        None => std::io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn execution(jobs: Option<usize>) -> Result<Execution, Failure> {
    match jobs {
        Some(0) => Err(Failure::Usage("--jobs must be at least 1".into())),
        Some(1) => Ok(Execution::Sequential),
        Some(n) => {
            #[cfg(feature = "parallel")]
            if let Err(e) = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
            {
                log::warn!("could not size the worker pool: {e}");
            }
            #[cfg(not(feature = "parallel"))]
            log::warn!("built without parallel support; ignoring --jobs {n}");
            Ok(Execution::Parallel)
        }
        None => Ok(Execution::Parallel),
    }
}

fn schedule_mode(opts: &Opts) -> Result<ScheduleMode, Failure> {
    match (opts.mode, opts.budget) {
        (Mode::Inflate, None) => Ok(ScheduleMode::Inflate),
        (Mode::Inflate, Some(_)) => Err(Failure::Usage("--budget requires --mode budget".into())),
        (Mode::Budget, Some(budget)) => Ok(ScheduleMode::Budget { budget }),
        (Mode::Budget, None) => Err(Failure::Usage("--mode budget requires --budget".into())),
    }
}

fn no_svg(opts: &Opts, what: &str) -> Result<(), Failure> {
    if opts.render == Some(Render::Svg) {
        return Err(Failure::Usage(format!("no SVG rendering for {what}")));
    }
    Ok(())
}

fn run(command: &Command) -> Result<u8, Failure> {
    let opts = match command {
        Command::Tipsgraph(o)
        | Command::Traces(o)
        | Command::Segments(o)
        | Command::Schedule(o)
        | Command::Report(o)
        | Command::Verify(o) => o,
    };
    let mode = schedule_mode(opts)?;
    let exec = execution(opts.jobs)?;
    let bytes = fs::read(&opts.input)?;
    let overrides = Overrides {
        delta: opts.delta,
        max_traces: opts.max_traces,
    };
    let ctx = Context::from_bytes(&bytes, &overrides, exec)?;
    log::info!(
        "{} task(s) from {}",
        ctx.system.tasks.len(),
        opts.input.display()
    );

    match command {
        Command::Tipsgraph(_) => {
            no_svg(opts, "TIPsGraphs")?;
            let art = ctx.tipsgraphs()?;
            let out = match opts.render {
                Some(_) => art
                    .content
                    .iter()
                    .map(|(name, tg)| format!("task {name}\n{}", tg.to_text()))
                    .collect(),
                None => json(&art),
            };
            emit(opts, &out)?;
        }
        Command::Traces(_) => {
            no_svg(opts, "traces")?;
            let art = ctx.traces()?;
            let out = match opts.render {
                Some(_) => art
                    .content
                    .iter()
                    .map(|(name, ts)| format!("task {name} d_max {}\n{}", ts.d_max, ts.to_text()))
                    .collect(),
                None => json(&art),
            };
            emit(opts, &out)?;
        }
        Command::Segments(_) => {
            let art = ctx.segments()?;
            let seqs: Vec<(&str, _)> = art
                .content
                .iter()
                .map(|(n, p)| (n.as_str(), p.sequence()))
                .collect();
            let out = match opts.render {
                Some(Render::Text) => seqs
                    .iter()
                    .map(|(n, s)| render::segments_text(n, s))
                    .collect(),
                Some(Render::Svg) => {
                    let refs: Vec<(&str, &_)> = seqs.iter().map(|(n, s)| (*n, s)).collect();
                    render::segments_svg(&refs)
                }
                None => json(&art),
            };
            emit(opts, &out)?;
        }
        Command::Schedule(_) => {
            let art = ctx.schedule(mode)?;
            let out = match opts.render {
                Some(Render::Text) => format!(
                    "{}{}",
                    art.content.to_text(),
                    render::schedule_text(&art.content)
                ),
                Some(Render::Svg) => render::schedule_svg(&art.content),
                None => json(&art),
            };
            emit(opts, &out)?;
            if !art.content.overruns.is_empty() {
                return Ok(EXIT_BUDGET_OVERRUN);
            }
        }
        Command::Report(_) => {
            let art = ctx.analyze(mode)?;
            let out = match opts.render {
                Some(Render::Svg) => render::schedule_svg(&art.schedule),
                _ => report_text(&art),
            };
            emit(opts, &out)?;
            if !art.schedule.overruns.is_empty() {
                return Ok(EXIT_BUDGET_OVERRUN);
            }
        }
        Command::Verify(_) => {
            no_svg(opts, "verification reports")?;
            let report = ctx.verify(mode, u64::MAX)?;
            let out = match &opts.out {
                Some(_) if opts.render.is_none() => json(&report),
                _ => report.to_text(),
            };
            emit(opts, &out)?;
            if !report.ok() {
                return Ok(EXIT_VERIFICATION);
            }
        }
    }
    Ok(0)
}

fn report_text(art: &tipsprof_core::pipeline::PipelineArtifacts) -> String {
    let mut out = format!("source sha256 {}\n", art.source_digest);
    for (name, t) in &art.tasks {
        out.push_str(&format!(
            "\ntask {name}: {} tips, {} edges, {} traces, d_max {}\n",
            t.tipsgraph.tips().len(),
            t.tipsgraph.edges().len(),
            t.traces.len(),
            t.traces.d_max
        ));
        out.push_str(&render::segments_text(name, &t.profile.sequence()));
        let bounds: Vec<String> = t
            .profile
            .window_bounds
            .iter()
            .map(|b| format!("{}:{}", b.window, b.accesses))
            .collect();
        out.push_str(&format!("  window bounds {}\n", bounds.join(" ")));
    }
    out.push_str("\nschedule\n");
    out.push_str(&art.schedule.to_text());
    out.push_str(&render::schedule_text(&art.schedule));
    out
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("TIPSPROF_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(&cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_PARSE)
        }
        Err(Failure::Core(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
