use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use eyecontact_core::analytics::{
    contact_distribution, export_events, export_signal, export_summary, extract_events, summarize,
    ContactDistribution, Event, ExportFormat, SignalSummary,
};
use eyecontact_core::filters::{parse_filter_expr, FilterExpr, FilterSignal};
use eyecontact_core::sync::GazeReduction;
use eyecontact_core::synth::{generate, SessionScript};
use eyecontact_core::Execution;
use serde::Serialize;

use crate::error::{exit, CliError};
use crate::server::{self, AppState};
use crate::session::{self, LoadedSession, SessionOptions};

pub const BIND_ENV: &str = "EYECONTACT_BIND";

#[derive(Debug, Parser)]
#[command(name = "eyecontact", version, about = "Eye-contact analysis for two-person eye-tracking sessions")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate an expression and write its events plus a summary.
    Analyze(ExprArgs),
    /// Five-way eye/face contact breakdown.
    Distribution(DistributionArgs),
    /// Evaluate an expression and write its events only.
    Events(ExprArgs),
    /// Evaluate an expression and write the per-frame signal.
    Export(ExprArgs),
    /// Render a session script into the seven session files.
    Generate(GenerateArgs),
    /// Serve the session over HTTP.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

impl From<Format> for ExportFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Csv => ExportFormat::Csv,
            Format::Json => ExportFormat::Json,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Reduction {
    Mean,
    NearestMidpoint,
}

#[derive(Debug, Args)]
pub struct SessionArgs {
    /// Session manifest (TOML).
    #[arg(short, long)]
    pub manifest: PathBuf,
    /// Geometry and threshold overrides (TOML).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Extra emotion definitions (TOML, name = [AU ids]).
    #[arg(long)]
    pub emotions: Option<PathBuf>,
    /// How the gaze samples inside one frame are combined.
    #[arg(long, value_enum, default_value = "mean")]
    pub reduction: Reduction,
    /// Run on a single thread.
    #[arg(long)]
    pub sequential: bool,
}

impl SessionArgs {
    pub fn options(&self) -> SessionOptions {
        SessionOptions {
            manifest: self.manifest.clone(),
            config: self.config.clone(),
            emotions: self.emotions.clone(),
            reduction: match self.reduction {
                Reduction::Mean => GazeReduction::Mean,
                Reduction::NearestMidpoint => GazeReduction::NearestMidpoint,
            },
            execution: if self.sequential {
                Execution::Sequential
            } else {
                Execution::Parallel
            },
        }
    }
}

#[derive(Debug, Args)]
pub struct ExprArgs {
    #[command(flatten)]
    pub session: SessionArgs,
    /// Filter expression, e.g. "mutual(eye(A), eye(B))".
    #[arg(short, long)]
    pub expr: String,
    /// Output file; stdout when omitted.
    #[arg(short, long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct DistributionArgs {
    #[command(flatten)]
    pub session: SessionArgs,
    #[arg(long, default_value = "eye(A)")]
    pub eye_a: String,
    #[arg(long, default_value = "eye(B)")]
    pub eye_b: String,
    #[arg(long, default_value = "face(A)")]
    pub face_a: String,
    #[arg(long, default_value = "face(B)")]
    pub face_b: String,
    /// Output file; stdout when omitted.
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Session script (TOML).
    #[arg(short, long)]
    pub script: PathBuf,
    /// Directory to write into; created if missing.
    #[arg(short, long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[command(flatten)]
    pub session: SessionArgs,
    #[arg(long, env = BIND_ENV, default_value = "127.0.0.1:8080")]
    pub bind: SocketAddr,
}

pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::from(exit::OK),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Analyze(a) => analyze(&a),
        Command::Events(a) => events(&a),
        Command::Export(a) => export(&a),
        Command::Distribution(a) => distribution(&a),
        Command::Generate(a) => generate_files(&a),
        Command::Serve(a) => serve(&a),
    }
}

fn parse_expr(text: &str) -> Result<FilterExpr, CliError> {
    parse_filter_expr(text).map_err(|e| {
        let col = text.get(..e.pos()).map_or(e.pos(), |s| s.chars().count());
        eprintln!("  {text}\n  {}^", " ".repeat(col));
        CliError::Expr(e)
    })
}

fn open(args: &SessionArgs) -> Result<LoadedSession, CliError> {
    let loaded = session::load(&args.options())?;
    for w in &loaded.warnings {
        eprintln!("warning: {w}");
    }
    Ok(loaded)
}

fn write_out(out: Option<&Path>, data: &[u8]) -> Result<(), CliError> {
    match out {
        Some(path) => std::fs::write(path, data)?,
        None => std::io::stdout().lock().write_all(data)?,
    }
    Ok(())
}

/// Where `analyze` puts the summary next to a CSV events file.
pub fn summary_path(out: &Path) -> PathBuf {
    out.with_extension("summary.json")
}

#[derive(Serialize)]
struct AnalyzeDoc<'a> {
    expression: String,
    frame_duration_us: i64,
    events: &'a [Event],
    summary: SignalSummary,
}

fn evaluate(args: &ExprArgs) -> Result<(LoadedSession, FilterExpr, Arc<FilterSignal>), CliError> {
    let expr = parse_expr(&args.expr)?;
    let loaded = open(&args.session)?;
    let signal = loaded.engine.eval(&expr)?;
    Ok((loaded, expr, signal))
}

fn analyze(args: &ExprArgs) -> Result<(), CliError> {
    let (loaded, expr, signal) = evaluate(args)?;
    let f_dur = loaded.engine.session().frame_duration_us;
    let events = extract_events(&signal, f_dur)?;
    let summary = summarize(&signal, f_dur)?;
    match args.format {
        Format::Csv => {
            write_out(args.out.as_deref(), &export_events(&events, ExportFormat::Csv))?;
            let summary_bytes = export_summary(&summary);
            match &args.out {
                Some(out) => std::fs::write(summary_path(out), summary_bytes)?,
                None => std::io::stderr().lock().write_all(&summary_bytes)?,
            }
        }
        Format::Json => {
            let doc = AnalyzeDoc {
                expression: expr.normalized(),
                frame_duration_us: f_dur,
                events: &events,
                summary,
            };
            let mut bytes = serde_json::to_vec_pretty(&doc).expect("plain data always serializes");
            bytes.push(b'\n');
            write_out(args.out.as_deref(), &bytes)?;
        }
    }
    Ok(())
}

fn events(args: &ExprArgs) -> Result<(), CliError> {
    let (loaded, _, signal) = evaluate(args)?;
    let events = extract_events(&signal, loaded.engine.session().frame_duration_us)?;
    write_out(args.out.as_deref(), &export_events(&events, args.format.into()))
}

fn export(args: &ExprArgs) -> Result<(), CliError> {
    let (_, _, signal) = evaluate(args)?;
    write_out(args.out.as_deref(), &export_signal(&signal, args.format.into()))
}

#[derive(Serialize)]
struct Expressions {
    eye_a: String,
    eye_b: String,
    face_a: String,
    face_b: String,
}

#[derive(Serialize)]
struct Runtime {
    load_s: f64,
    eval_s: f64,
    frames: usize,
    execution: Execution,
}

#[derive(Serialize)]
struct DistributionDoc {
    #[serde(flatten)]
    distribution: ContactDistribution,
    expressions: Expressions,
    runtime: Runtime,
}

fn distribution(args: &DistributionArgs) -> Result<(), CliError> {
    let exprs = [&args.eye_a, &args.eye_b, &args.face_a, &args.face_b]
        .map(|t| parse_expr(t))
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    let started = Instant::now();
    let loaded = open(&args.session)?;
    let load_s = started.elapsed().as_secs_f64();
    let started = Instant::now();
    let signals = loaded
        .engine
        .eval_many(&exprs)
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    let dist = contact_distribution(&signals[0], &signals[1], &signals[2], &signals[3])?;
    let eval_s = started.elapsed().as_secs_f64();
    let doc = DistributionDoc {
        distribution: dist,
        expressions: Expressions {
            eye_a: exprs[0].normalized(),
            eye_b: exprs[1].normalized(),
            face_a: exprs[2].normalized(),
            face_b: exprs[3].normalized(),
        },
        runtime: Runtime {
            load_s,
            eval_s,
            frames: loaded.engine.session().len(),
            execution: loaded.engine.config().execution,
        },
    };
    let mut bytes = serde_json::to_vec_pretty(&doc).expect("plain data always serializes");
    bytes.push(b'\n');
    write_out(args.out.as_deref(), &bytes)
}

fn generate_files(args: &GenerateArgs) -> Result<(), CliError> {
    let script = SessionScript::from_toml(&std::fs::read_to_string(&args.script)?)?;
    let session = generate(&script)?;
    let manifest = session.write_files(&args.out)?;
    for (name, _) in session.files() {
        println!("{}", args.out.join(name).display());
    }
    eprintln!("manifest: {}", manifest.display());
    Ok(())
}

fn serve(args: &ServeArgs) -> Result<(), CliError> {
    let loaded = open(&args.session)?;
    let state = AppState::new(loaded.engine, loaded.warnings);
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(server::serve(state, args.bind))?;
    Ok(())
}
