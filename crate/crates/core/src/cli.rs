//! The `fieldrefine` command line.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::{Error, Result};
use crate::eval;
use crate::model::{segments_of, AnalysisParams, Message, Segmentation};
use crate::refiners::{self, Base, Pass, Pipeline};
use crate::synth::{self, ProtocolSpec};
use crate::trace_io::{self, json, Format, Layer, TraceSpec};

/// Traces above this size need `--force`.
pub const MAX_MESSAGES_UNFORCED: usize = 2000;
pub const OUT_ENV: &str = "FIELDREFINE_OUT";

#[derive(Debug, Parser)]
#[command(name = "fieldrefine", version, about = "Field boundary inference for binary protocol traces")]
pub struct Cli {
    /// More log output (repeatable).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Segment a trace and refine the boundaries.
    Segment(SegmentArgs),
    /// Score segmentations against ground truth.
    Evaluate(EvaluateArgs),
    /// Generate a synthetic trace with ground truth.
    Synth(SynthArgs),
    /// Print messages as hex with segment boundaries marked.
    Inspect(InspectArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FormatArg {
    Pcap,
    Hexlines,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum LayerArg {
    Udp,
    Tcp,
    Raw,
}

#[derive(Debug, Args)]
pub struct TraceArgs {
    /// Trace file: pcap or one hex payload per line.
    #[arg(long)]
    pub trace: PathBuf,
    /// Overrides detection by file extension.
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    #[arg(long, value_enum, default_value = "udp")]
    pub layer: LayerArg,
    #[arg(long)]
    pub port: Option<u16>,
    #[arg(long)]
    pub max_messages: Option<usize>,
    /// Keep duplicate payloads.
    #[arg(long)]
    pub no_dedupe: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Preset {
    Nullpca,
    Nemepca,
    /// The null-byte segmenter alone.
    Null,
    /// The bit-congruence segmenter alone.
    Bitcong,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum BaseArg {
    Null,
    Bitcong,
    External,
}

#[derive(Debug, Args)]
pub struct SegmentArgs {
    #[command(flatten)]
    pub trace: TraceArgs,
    #[arg(long, value_enum, default_value = "nullpca")]
    pub preset: Preset,
    /// Comma-separated pass list replacing the preset's passes.
    #[arg(long, value_delimiter = ',')]
    pub passes: Option<Vec<String>>,
    #[arg(long, value_enum)]
    pub base: Option<BaseArg>,
    /// Segmentation JSON used as the external base.
    #[arg(long)]
    pub segments_in: Option<PathBuf>,
    /// Parameter override, e.g. `p_d=0.9` (repeatable).
    #[arg(long = "param", value_name = "NAME=VALUE")]
    pub params: Vec<String>,
    /// JSON object of parameter overrides.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub max_depth: Option<usize>,
    #[arg(long, env = OUT_ENV)]
    pub out: PathBuf,
    /// Allow traces larger than the memory guard.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub trace: TraceArgs,
    #[arg(long)]
    pub truth: PathBuf,
    /// One or more segmentation files; each becomes a column.
    #[arg(long, num_args = 1.., required = true)]
    pub segments: Vec<PathBuf>,
    #[arg(long, env = OUT_ENV)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Protocol spec JSON, or the name of a bundled spec.
    #[arg(long)]
    pub spec: String,
    /// Overrides the spec's message count.
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long, env = OUT_ENV)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    #[command(flatten)]
    pub trace: TraceArgs,
    /// Segmentation to show; the null-byte segmenter is used otherwise.
    #[arg(long)]
    pub segments: Option<PathBuf>,
}

fn require_file(p: &Path) -> Result<()> {
    if p.is_file() {
        Ok(())
    } else {
        Err(Error::usage(format!("no such file: {}", p.display())))
    }
}

fn load(t: &TraceArgs) -> Result<Vec<Message>> {
    require_file(&t.trace)?;
    let mut spec = TraceSpec::new(&t.trace);
    spec.format = match t.format {
        Some(FormatArg::Pcap) => Format::Pcap,
        Some(FormatArg::Hexlines) => Format::Hexlines,
        None => Format::from_path(&t.trace),
    };
    spec.layer = match t.layer {
        LayerArg::Udp => Layer::UdpPayload,
        LayerArg::Tcp => Layer::TcpPayload,
        LayerArg::Raw => Layer::RawFrame,
    };
    spec.port = t.port;
    spec.max_messages = t.max_messages;
    spec.dedupe = !t.no_dedupe;
    let msgs = trace_io::load_trace(&spec)?;
    log::info!("{}: {} messages", t.trace.display(), msgs.len());
    Ok(msgs)
}

fn ensure_dir(p: &Path) -> Result<()> {
    std::fs::create_dir_all(p)?;
    Ok(())
}

fn params_from(args: &SegmentArgs) -> Result<AnalysisParams> {
    let mut params = AnalysisParams::default();
    if let Some(path) = &args.config {
        require_file(path)?;
        let text = std::fs::read_to_string(path)?;
        let map: BTreeMap<String, serde_json::Value> =
            serde_json::from_str(&text).map_err(|e| Error::usage(format!("{}: {e}", path.display())))?;
        for (k, v) in map {
            params.set(&k, &v.to_string())?;
        }
    }
    for kv in &args.params {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::usage(format!("--param expects NAME=VALUE, got {kv}")))?;
        params.set(k.trim(), v.trim())?;
    }
    params.validate()?;
    Ok(params)
}

fn pipeline_from(args: &SegmentArgs, msgs: &[Message]) -> Result<Pipeline> {
    let external = match &args.segments_in {
        Some(p) => {
            require_file(p)?;
            Some(Base::External(trace_io::load_segmentation(p, msgs)?))
        }
        None => None,
    };
    let base = match (args.base, external) {
        (Some(BaseArg::External) | None, Some(b)) => Some(b),
        (Some(BaseArg::External), None) => return Err(Error::usage("--base external needs --segments-in")),
        (Some(_), Some(_)) => return Err(Error::usage("--segments-in only applies to --base external")),
        (Some(BaseArg::Null), None) => Some(Base::NullBytes),
        (Some(BaseArg::Bitcong), None) => Some(Base::BitCongruence),
        (None, None) => None,
    };
    let mut p = match args.preset {
        Preset::Nullpca => Pipeline::nullpca(),
        Preset::Nemepca => Pipeline::nemepca(Base::BitCongruence),
        Preset::Null => Pipeline::new(Base::NullBytes, vec![]),
        Preset::Bitcong => Pipeline::new(Base::BitCongruence, vec![]),
    };
    if let Some(b) = base {
        p.base = b;
    }
    if let Some(names) = &args.passes {
        p.passes = names
            .iter()
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<Pass>())
            .collect::<Result<_>>()?;
    }
    p.params = params_from(args)?;
    if let Some(d) = args.max_depth {
        p.max_depth = d;
    }
    p.validate()?;
    Ok(p)
}

fn segment(args: &SegmentArgs, out: &mut dyn Write) -> Result<()> {
    let msgs = load(&args.trace)?;
    if msgs.len() > MAX_MESSAGES_UNFORCED && !args.force {
        return Err(Error::usage(format!(
            "{} messages exceed the limit of {MAX_MESSAGES_UNFORCED}; pass --force to run anyway",
            msgs.len()
        )));
    }
    let pipeline = pipeline_from(args, &msgs)?;
    let result = refiners::run_pipeline(&msgs, &pipeline)?;
    ensure_dir(&args.out)?;
    trace_io::save_segmentation(&args.out.join("segments.json"), &result.segmentations)?;
    let mut edits = serde_json::to_string_pretty(&result.edits).map_err(|e| Error::usage(e.to_string()))?;
    edits.push('\n');
    trace_io::write_atomic(&args.out.join("edits.json"), edits.as_bytes())?;
    trace_io::write_atomic(
        &args.out.join("clusters.json"),
        crate::cluster::tree_json(&result.clusters).as_bytes(),
    )?;
    writeln!(
        out,
        "{} messages, {} edits, written to {}",
        msgs.len(),
        result.edits.len(),
        args.out.display()
    )?;
    Ok(())
}

fn report_names(paths: &[PathBuf]) -> Vec<String> {
    let mut names: Vec<String> = Vec::new();
    for p in paths {
        let stem = p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let mut name = stem.replace(',', "_");
        let mut i = 2;
        while names.contains(&name) {
            name = format!("{stem}_{i}");
            i += 1;
        }
        names.push(name);
    }
    names
}

fn evaluate(args: &EvaluateArgs, out: &mut dyn Write) -> Result<()> {
    let msgs = load(&args.trace)?;
    require_file(&args.truth)?;
    for p in &args.segments {
        require_file(p)?;
    }
    let truth = trace_io::load_ground_truth(&args.truth, &msgs)?;
    let names = report_names(&args.segments);
    let mut reports = Vec::new();
    for (p, name) in args.segments.iter().zip(&names) {
        let segs = trace_io::load_segmentation(p, &msgs)?;
        reports.push(eval::score_trace(name, &segs, &truth, &msgs));
    }
    ensure_dir(&args.out)?;
    for r in &reports {
        let mut s = serde_json::to_string_pretty(r).map_err(|e| Error::usage(e.to_string()))?;
        s.push('\n');
        trace_io::write_atomic(&args.out.join(format!("report_{}.json", r.name)), s.as_bytes())?;
    }
    let csv = eval::compare_csv(&reports);
    trace_io::write_atomic(&args.out.join("comparison.csv"), csv.as_bytes())?;
    trace_io::write_atomic(&args.out.join("comparison.json"), eval::compare_json(&reports).as_bytes())?;
    for r in &reports {
        writeln!(
            out,
            "{}: median fms_like {:.4}, exact F1 {:.4}, near F1 {:.4} over {} messages ({} excluded)",
            r.name,
            r.medians.fms_like,
            r.medians.exact_f1,
            r.medians.near_f1,
            r.scored_messages,
            r.excluded_messages
        )?;
    }
    Ok(())
}

fn synth_cmd(args: &SynthArgs, out: &mut dyn Write) -> Result<()> {
    let mut spec = if synth::BUNDLED.contains(&args.spec.as_str()) {
        synth::bundled(&args.spec)?
    } else {
        let p = Path::new(&args.spec);
        require_file(p)?;
        ProtocolSpec::from_json(&std::fs::read_to_string(p)?)?
    };
    if let Some(n) = args.count {
        spec.message_count = n;
    }
    let (msgs, truth) = synth::generate(&spec)?;
    ensure_dir(&args.out)?;
    let hex = trace_io::hexlines::render(msgs.iter().map(|m| m.payload.as_slice()));
    trace_io::write_atomic(&args.out.join("trace.hex"), hex.as_bytes())?;
    trace_io::write_atomic(&args.out.join("truth.json"), json::render_ground_truth(&truth).as_bytes())?;
    writeln!(out, "{} messages of {} written to {}", msgs.len(), spec.name, args.out.display())?;
    Ok(())
}

/// One line per message: id, then the payload in hex with `|` between
/// segments.
pub fn render_inspection(msgs: &[Message], segs: &[Segmentation]) -> Result<String> {
    let by_id: BTreeMap<u64, &Segmentation> = segs.iter().map(|s| (s.message_id, s)).collect();
    let mut s = String::new();
    for m in msgs {
        let empty = Segmentation::unsegmented(m.id);
        let seg = by_id.get(&m.id).copied().unwrap_or(&empty);
        let parts: Vec<String> = segments_of(seg, m)?
            .iter()
            .map(|r| r.values.iter().map(|b| format!("{b:02x}")).collect::<Vec<_>>().join(" "))
            .collect();
        s.push_str(&format!("{:>6}  {}\n", m.id, parts.join(" | ")));
    }
    Ok(s)
}

fn inspect(args: &InspectArgs, out: &mut dyn Write) -> Result<()> {
    let msgs = load(&args.trace)?;
    let segs = match &args.segments {
        Some(p) => {
            require_file(p)?;
            trace_io::load_segmentation(p, &msgs)?
        }
        None => msgs.iter().map(refiners::null_segmenter).collect(),
    };
    out.write_all(render_inspection(&msgs, &segs)?.as_bytes())?;
    Ok(())
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Usage(_) => 1,
        _ => 2,
    }
}

/// Parses `argv` and runs the command, returning the process exit code.
pub fn run<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = if e.use_stderr() {
                write!(err, "{}", e.render())
            } else {
                write!(out, "{}", e.render())
            };
            return code;
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        2 => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    let _ = env_logger::Builder::from_default_env().filter_level(level).try_init();
    let r = match &cli.command {
        Command::Segment(a) => segment(a, out),
        Command::Evaluate(a) => evaluate(a, out),
        Command::Synth(a) => synth_cmd(a, out),
        Command::Inspect(a) => inspect(a, out),
    };
    match r {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "fieldrefine: {e}");
            if let Error::Usage(_) = e {
                let _ = writeln!(err, "Run with --help for usage.");
            }
            exit_code(&e)
        }
    }
}
