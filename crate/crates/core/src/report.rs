//! Command-line grammar, report assembly and rendering.
//!
//! Every command builds one [`Report`]; `--format` picks how it is printed.
//! Exit status is 0 on success, 1 for bad input and 2 for bad usage.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::graph::{parse_graph, parse_hardware, topological_order, Graph, HardwareSpec, ThreadConfig};
use crate::oplab::{self, BenchRow, BenchSettings};
use crate::sim::{
    critical_path_bound, fmt_ticks, serial_sum, simulate, sweep, ticks_to_units, Mode, Placement, SchedulePolicy,
    SimError, SimResult, Ticks,
};
use crate::threadpool::{self, BenchResult};
use crate::tuner::{preset, recommend, PresetKind, Recommendation};
use crate::width::width_report;

pub const TOOL_VERSION: &str = concat!("partune ", env!("CARGO_PKG_VERSION"));

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "partune", version, about = "Parallelism tuning for operator graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, ValueEnum)]
enum Format {
    #[default]
    Text,
    Json,
    Csv,
}

#[derive(Debug, Args)]
struct Output {
    #[arg(long, value_enum, default_value_t = Format::Text)]
    format: Format,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PresetArg {
    #[value(alias = "tensorflow")]
    Tf,
    Intel,
    Default,
}

impl From<PresetArg> for PresetKind {
    fn from(p: PresetArg) -> Self {
        match p {
            PresetArg::Tf => PresetKind::Tensorflow,
            PresetArg::Intel => PresetKind::Intel,
            PresetArg::Default => PresetKind::Default,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PlacementArg {
    Single,
    Data,
    Model,
}

impl From<PlacementArg> for Placement {
    fn from(p: PlacementArg) -> Self {
        match p {
            PlacementArg::Single => Placement::SingleSocket,
            PlacementArg::Data => Placement::DataParallel,
            PlacementArg::Model => Placement::ModelParallel,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Sync,
    Async,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Heavy-operator width metrics of a graph.
    Analyze {
        graph: PathBuf,
        #[command(flatten)]
        out: Output,
    },
    /// Guideline thread configuration, or a framework preset.
    Recommend {
        graph: PathBuf,
        #[arg(long)]
        hw: PathBuf,
        #[arg(long, value_enum)]
        preset: Option<PresetArg>,
        #[command(flatten)]
        out: Output,
    },
    /// Simulate one configuration.
    Simulate {
        graph: PathBuf,
        #[arg(long)]
        hw: PathBuf,
        #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
        pools: u32,
        /// Intra-op and kernel threads per pool.
        #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
        threads: u32,
        #[arg(long, value_enum, default_value = "single")]
        placement: PlacementArg,
        #[arg(long, value_enum, default_value = "async")]
        mode: ModeArg,
        /// Write the per-operator trace as CSV.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[command(flatten)]
        out: Output,
    },
    /// Simulate every pools x threads split of the physical cores.
    Sweep {
        graph: PathBuf,
        #[arg(long)]
        hw: PathBuf,
        #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
        max_pools: Option<u32>,
        /// Also score the guideline and the framework presets.
        #[arg(long)]
        compare_presets: bool,
        #[command(flatten)]
        out: Output,
    },
    /// Wall-clock measurements on this machine.
    Bench {
        #[command(subcommand)]
        which: BenchCommand,
    },
}

#[derive(Debug, Subcommand)]
enum BenchCommand {
    /// Shared-counter tasks through pools of several sizes.
    Threadpool {
        #[arg(long, default_value_t = threadpool::DEFAULT_TASKS)]
        tasks: usize,
        /// Pool sizes; defaults to 1, cores and 16 x cores.
        #[arg(long, value_delimiter = ',', value_parser = clap::value_parser!(u64).range(1..))]
        sizes: Vec<u64>,
        /// Also time fresh threads per batch instead of a pool.
        #[arg(long)]
        naive: bool,
        #[command(flatten)]
        out: Output,
    },
    /// Both MatMul designs over square sizes.
    Matmul {
        #[arg(long, value_delimiter = ',', default_values_t = [256usize, 512, 1024])]
        sizes: Vec<usize>,
        /// Kernel threads for design 1 and pool size for design 2; defaults to the core count.
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        threads: Option<u64>,
        #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u64).range(1..))]
        trials: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        prep_passes: usize,
        #[command(flatten)]
        out: Output,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub command: String,
    pub inputs: BTreeMap<String, InputDigest>,
    pub results: Value,
    pub tool_version: String,
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    pub measured: bool,
}

impl Report {
    fn new(command: &str) -> Self {
        Report {
            command: command.to_string(),
            inputs: BTreeMap::new(),
            results: Value::Null,
            tool_version: TOOL_VERSION.to_string(),
            measured: false,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("reports always serialize");
        s.push('\n');
        s
    }
}

struct Rendered {
    report: Report,
    text: String,
    csv: String,
}

impl Rendered {
    fn emit(&self, format: Format) -> String {
        match format {
            Format::Text => self.text.clone(),
            Format::Json => self.report.to_json(),
            Format::Csv => self.csv.clone(),
        }
    }
}

/// Writes through a sibling temp file and a rename, so readers never see a
/// half-written file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> io::Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "output path has no file name"))?;
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let tmp = dir.join(format!(".{}.{}.tmp", name.to_string_lossy(), std::process::id()));
    let written = fs::File::create(&tmp).and_then(|mut f| {
        f.write_all(contents)?;
        f.sync_all()
    });
    written
        .and_then(|()| fs::rename(&tmp, path))
        .inspect_err(|_| {
            let _ = fs::remove_file(&tmp);
        })
}

fn read_input(path: &Path) -> Result<(String, InputDigest), String> {
    let bytes = fs::read(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let digest = InputDigest {
        path: path.display().to_string(),
        sha256: hex::encode(Sha256::digest(&bytes)),
    };
    let text = String::from_utf8(bytes).map_err(|_| format!("{} is not UTF-8", path.display()))?;
    Ok((text, digest))
}

fn load_graph(path: &Path, report: &mut Report) -> Result<Graph, String> {
    let (text, digest) = read_input(path)?;
    let g = parse_graph(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    report.inputs.insert("graph".into(), digest);
    Ok(g)
}

fn load_hw(path: &Path, report: &mut Report) -> Result<HardwareSpec, String> {
    let (text, digest) = read_input(path)?;
    let hw = parse_hardware(&text).map_err(|e| format!("{}: {e}", path.display()))?;
    report.inputs.insert("hw".into(), digest);
    Ok(hw)
}

fn units(t: Ticks) -> f64 {
    ticks_to_units(t)
}

fn config_json(c: &ThreadConfig) -> Value {
    json!({
        "pools": c.pools,
        "intra_threads": c.intra_threads,
        "kernel_threads": c.kernel_threads,
    })
}

fn analyze(path: &Path) -> Result<Rendered, String> {
    let mut report = Report::new("analyze");
    let g = load_graph(path, &mut report)?;
    let w = width_report(&g);
    report.results = json!({
        "graph": g.name(),
        "nodes": g.len(),
        "edges": g.edges().len(),
        "heavy_count": w.heavy_count,
        "heavy_depth": w.heavy_depth,
        "max_width": w.max_width,
        "avg_width": w.avg_width,
        "topological_order": topological_order(&g),
    });
    let text = format!(
        "graph        {}\nnodes        {}\nedges        {}\nheavy ops    {}\nheavy depth  {}\nmax width    {}\navg width    {}\n",
        g.name(),
        g.len(),
        g.edges().len(),
        w.heavy_count,
        w.heavy_depth,
        w.max_width,
        w.avg_width
    );
    let csv = format!(
        "graph,nodes,edges,heavy_count,heavy_depth,max_width,avg_width\n{},{},{},{},{},{},{}\n",
        g.name(),
        g.len(),
        g.edges().len(),
        w.heavy_count,
        w.heavy_depth,
        w.max_width,
        w.avg_width
    );
    Ok(Rendered { report, text, csv })
}

fn recommend_cmd(path: &Path, hw_path: &Path, kind: Option<PresetKind>) -> Result<Rendered, String> {
    let mut report = Report::new("recommend");
    let g = load_graph(path, &mut report)?;
    let hw = load_hw(hw_path, &mut report)?;
    let rec: Recommendation = match kind {
        Some(k) => preset(k, &hw),
        None => recommend(&width_report(&g), &hw),
    };
    let c = rec.config;
    report.results = json!({
        "graph": g.name(),
        "config": config_json(&c),
        "basis": rec.basis,
        "rationale": rec.rationale,
    });
    let basis = serde_json::to_value(rec.basis).expect("basis serializes");
    let basis = basis.as_str().unwrap_or_default().to_string();
    let text = format!(
        "{} inter-op pool(s), {} intra-op thread(s), {} kernel thread(s) [{basis}]\n{}\n",
        c.pools, c.intra_threads, c.kernel_threads, rec.rationale
    );
    let csv = format!(
        "pools,intra_threads,kernel_threads,basis\n{},{},{},{basis}\n",
        c.pools, c.intra_threads, c.kernel_threads
    );
    Ok(Rendered { report, text, csv })
}

fn sim_error(e: SimError) -> String {
    format!("cannot simulate: {e}")
}

fn simulate_cmd(
    path: &Path,
    hw_path: &Path,
    config: ThreadConfig,
    policy: SchedulePolicy,
    trace: Option<&Path>,
) -> Result<Rendered, String> {
    let mut report = Report::new("simulate");
    let g = load_graph(path, &mut report)?;
    let hw = load_hw(hw_path, &mut report)?;
    let r: SimResult = simulate(&g, &config, &hw, policy).map_err(sim_error)?;
    let bound = critical_path_bound(&g, &hw);
    let serial = serial_sum(&g, &config, &hw, policy).map_err(sim_error)?;
    if let Some(p) = trace {
        write_atomic(p, r.trace_csv().as_bytes()).map_err(|e| format!("cannot write {}: {e}", p.display()))?;
    }
    let per_core: Vec<Value> = r
        .per_core
        .iter()
        .map(|c| {
            json!({
                "core_id": c.core_id,
                "socket_id": c.socket_id,
                "busy": units(c.busy),
                "sync": units(c.sync),
                "idle": units(c.idle),
            })
        })
        .collect();
    report.results = json!({
        "graph": g.name(),
        "config": config_json(&r.config),
        "policy": r.policy,
        "makespan": units(r.makespan),
        "critical_path_bound": units(bound),
        "serial_sum": units(serial),
        "socket_busy": r.socket_busy().into_iter().map(units).collect::<Vec<_>>(),
        "per_core": per_core,
        "trace": trace.map(|p| p.display().to_string()),
    });
    let busy: Ticks = r.per_core.iter().map(|c| c.busy).sum();
    let sync: Ticks = r.per_core.iter().map(|c| c.sync).sum();
    let idle: Ticks = r.per_core.iter().map(|c| c.idle).sum();
    let mode = match policy.mode {
        Mode::Synchronous => "synchronous",
        Mode::Asynchronous => "asynchronous",
    };
    let mut text = String::new();
    let _ = writeln!(text, "graph        {}", g.name());
    let _ = writeln!(text, "config       {}", r.config);
    let _ = writeln!(text, "policy       {mode}, {}", policy.placement);
    let _ = writeln!(text, "makespan     {}", fmt_ticks(r.makespan));
    let _ = writeln!(text, "lower bound  {}", fmt_ticks(bound));
    let _ = writeln!(text, "serial sum   {}", fmt_ticks(serial));
    let _ = writeln!(
        text,
        "core time    busy {} / sync {} / idle {} over {} cores",
        fmt_ticks(busy),
        fmt_ticks(sync),
        fmt_ticks(idle),
        r.per_core.len()
    );
    Ok(Rendered {
        report,
        text,
        csv: r.cores_csv(),
    })
}

fn sweep_cmd(path: &Path, hw_path: &Path, max_pools: Option<u32>, compare: bool) -> Result<Rendered, String> {
    let mut report = Report::new("sweep");
    let g = load_graph(path, &mut report)?;
    let hw = load_hw(hw_path, &mut report)?;
    hw.validate().map_err(|e| format!("{}: {e}", hw_path.display()))?;
    let max_pools = max_pools.unwrap_or(hw.physical_cores());
    let result = sweep(&g, &hw, max_pools).map_err(sim_error)?;
    let best = *result.argmin();
    let rows: Vec<Value> = result
        .rows
        .iter()
        .map(|r| json!({"pools": r.config.pools, "threads": r.config.intra_threads, "makespan": units(r.makespan)}))
        .collect();

    let mut text = String::new();
    let mut csv = String::new();
    let mut results = json!({
        "graph": g.name(),
        "max_pools": max_pools,
        "configs": rows.len(),
        "argmin": {"config": config_json(&best.config), "makespan": units(best.makespan)},
        "rows": rows,
    });

    if compare {
        let mut entries: Vec<(String, ThreadConfig, Option<Ticks>)> = Vec::new();
        let guideline = recommend(&width_report(&g), &hw).config;
        let kinds = [PresetKind::Tensorflow, PresetKind::Intel, PresetKind::Default];
        let candidates = std::iter::once(("guideline".to_string(), guideline))
            .chain(kinds.iter().map(|k| (k.label().to_string(), preset(*k, &hw).config)));
        for (label, cfg) in candidates {
            let makespan = match simulate(&g, &cfg, &hw, SchedulePolicy::ASYNC) {
                Ok(r) => Some(r.makespan),
                Err(SimError::Oversubscribed { .. }) => None,
                Err(e) => return Err(sim_error(e)),
            };
            entries.push((label, cfg, makespan));
        }
        entries.push(("argmin".to_string(), best.config, Some(best.makespan)));
        let ratio = |m: Ticks| if best.makespan == 0 { 1.0 } else { m as f64 / best.makespan as f64 };
        let presets: Vec<Value> = entries
            .iter()
            .map(|(label, cfg, m)| {
                json!({
                    "label": label,
                    "config": config_json(cfg),
                    "status": if m.is_some() { "ok" } else { "oversubscribed" },
                    "makespan": m.map(units),
                    "ratio_to_argmin": m.map(ratio),
                })
            })
            .collect();
        results["presets"] = Value::Array(presets);

        let _ = writeln!(text, "{:<11}{:>7}{:>7}{:>8}{:>16}{:>11}", "label", "pools", "intra", "kernel", "makespan", "vs argmin");
        csv.push_str("label,pools,intra_threads,kernel_threads,makespan,ratio_to_argmin\n");
        for (label, cfg, m) in &entries {
            let (ms, r) = match m {
                Some(m) => (fmt_ticks(*m), format!("{:.4}", ratio(*m))),
                None => ("oversubscribed".to_string(), "-".to_string()),
            };
            let _ = writeln!(
                text,
                "{label:<11}{:>7}{:>7}{:>8}{ms:>16}{r:>11}",
                cfg.pools, cfg.intra_threads, cfg.kernel_threads
            );
            let _ = writeln!(
                csv,
                "{label},{},{},{},{},{}",
                cfg.pools,
                cfg.intra_threads,
                cfg.kernel_threads,
                m.map(fmt_ticks).unwrap_or_default(),
                m.map(|m| format!("{:.6}", ratio(m))).unwrap_or_default()
            );
        }
    } else {
        let shown = result.rows.len().min(10);
        let _ = writeln!(text, "{} configurations, best {shown}:", result.rows.len());
        let _ = writeln!(text, "{:>6}{:>9}{:>16}", "pools", "threads", "makespan");
        for r in &result.rows[..shown] {
            let _ = writeln!(text, "{:>6}{:>9}{:>16}", r.config.pools, r.config.intra_threads, fmt_ticks(r.makespan));
        }
        csv.push_str("pools,threads,makespan\n");
        for r in &result.rows {
            let _ = writeln!(csv, "{},{},{}", r.config.pools, r.config.intra_threads, fmt_ticks(r.makespan));
        }
    }
    report.results = results;
    Ok(Rendered { report, text, csv })
}

fn cores() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

fn bench_threadpool_cmd(tasks: usize, sizes: &[u64], naive: bool) -> Result<Rendered, String> {
    let mut report = Report::new("bench threadpool");
    report.measured = true;
    let c = cores();
    let sizes: Vec<usize> = if sizes.is_empty() {
        vec![1, c, 16 * c]
    } else {
        sizes.iter().map(|&s| s as usize).collect()
    };
    let err = |e: threadpool::PoolError| format!("thread pool: {e}");
    let runs: Vec<BenchResult> = sizes
        .iter()
        .map(|&s| threadpool::microbench(s, tasks))
        .collect::<Result<_, _>>()
        .map_err(err)?;
    let naive_runs: Vec<BenchResult> = if naive {
        sizes
            .iter()
            .map(|&s| threadpool::naive_microbench(s, tasks))
            .collect::<Result<_, _>>()
            .map_err(err)?
    } else {
        Vec::new()
    };
    report.results = json!({"cores": c, "tasks": tasks, "runs": runs, "naive_runs": naive_runs});

    let mut text = String::new();
    let mut csv = String::from("variant,pool_size,tasks,total_latency_us,final_counter\n");
    let _ = writeln!(text, "{:<7}{:>10}{:>8}{:>14}{:>10}", "variant", "pool_size", "tasks", "latency_us", "counter");
    for (variant, list) in [("pool", &runs), ("naive", &naive_runs)] {
        for r in list {
            let _ = writeln!(
                text,
                "{variant:<7}{:>10}{:>8}{:>14}{:>10}",
                r.pool_size, r.tasks, r.total_latency_us, r.final_counter
            );
            let _ = writeln!(csv, "{variant},{},{},{},{}", r.pool_size, r.tasks, r.total_latency_us, r.final_counter);
        }
    }
    Ok(Rendered { report, text, csv })
}

fn bench_matmul_cmd(sizes: &[usize], threads: usize, settings: BenchSettings) -> Result<Rendered, String> {
    let mut report = Report::new("bench matmul");
    report.measured = true;
    let mut rows: Vec<BenchRow> = Vec::new();
    for &n in sizes {
        rows.extend(oplab::design_bench(n, threads, settings).map_err(|e| format!("matmul: {e}"))?);
    }
    // Serial fraction implied by the largest size's threaded design-1 run.
    let fitted = rows
        .iter()
        .rev()
        .find(|r| r.design == oplab::Design::One && r.threads > 1)
        .and_then(|r| oplab::fit_amdahl(r.speedup, r.threads as u32).ok());
    report.results = json!({
        "threads": threads,
        "trials": settings.trials,
        "seed": settings.seed,
        "prep_passes": settings.prep_passes,
        "rows": rows,
        "serial_fraction": fitted,
    });
    let mut text = String::new();
    let _ = writeln!(text, "{:>6}{:>9}{:>9}{:>14}{:>9}", "size", "threads", "design", "latency_us", "speedup");
    for r in &rows {
        let _ = writeln!(
            text,
            "{:>6}{:>9}{:>9}{:>14.1}{:>9.3}",
            r.size,
            r.threads,
            r.design.as_str(),
            r.latency_us,
            r.speedup
        );
    }
    match fitted {
        Some(s) => {
            let _ = writeln!(text, "fitted serial fraction {s:.4}");
        }
        None => {
            let _ = writeln!(text, "fitted serial fraction n/a");
        }
    }
    Ok(Rendered {
        report,
        text,
        csv: oplab::bench_csv(&rows),
    })
}

fn dispatch(command: Command) -> Result<(Rendered, Format), String> {
    Ok(match command {
        Command::Analyze { graph, out } => (analyze(&graph)?, out.format),
        Command::Recommend {
            graph,
            hw,
            preset,
            out,
        } => (recommend_cmd(&graph, &hw, preset.map(Into::into))?, out.format),
        Command::Simulate {
            graph,
            hw,
            pools,
            threads,
            placement,
            mode,
            trace,
            out,
        } => {
            let config = ThreadConfig::uniform(pools, threads).map_err(|e| e.to_string())?;
            let policy = SchedulePolicy {
                mode: match mode {
                    ModeArg::Sync => Mode::Synchronous,
                    ModeArg::Async => Mode::Asynchronous,
                },
                placement: placement.into(),
            };
            (simulate_cmd(&graph, &hw, config, policy, trace.as_deref())?, out.format)
        }
        Command::Sweep {
            graph,
            hw,
            max_pools,
            compare_presets,
            out,
        } => (sweep_cmd(&graph, &hw, max_pools, compare_presets)?, out.format),
        Command::Bench {
            which: BenchCommand::Threadpool {
                tasks,
                sizes,
                naive,
                out,
            },
        } => (bench_threadpool_cmd(tasks, &sizes, naive)?, out.format),
        Command::Bench {
            which:
                BenchCommand::Matmul {
                    sizes,
                    threads,
                    trials,
                    seed,
                    prep_passes,
                    out,
                },
        } => {
            let threads = threads.map(|t| t as usize).unwrap_or_else(cores);
            let settings = BenchSettings {
                trials: trials as usize,
                seed,
                prep_passes,
            };
            (bench_matmul_cmd(&sizes, threads, settings)?, out.format)
        }
    })
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit status.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let msg = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = stdout.write_all(msg.as_bytes());
                    EXIT_OK
                }
                _ => {
                    let _ = stderr.write_all(msg.as_bytes());
                    EXIT_USAGE
                }
            };
        }
    };
    match dispatch(cli.command) {
        Ok((rendered, format)) => match stdout.write_all(rendered.emit(format).as_bytes()) {
            Ok(()) => EXIT_OK,
            Err(e) => {
                let _ = writeln!(stderr, "error: cannot write output: {e}");
                EXIT_INPUT
            }
        },
        Err(msg) => {
            let _ = writeln!(stderr, "error: {msg}");
            EXIT_INPUT
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_str(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = run(std::iter::once("partune").chain(args.iter().copied()), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(run_str(&["frobnicate"]).0, EXIT_USAGE);
        assert_eq!(run_str(&["analyze"]).0, EXIT_USAGE);
        assert_eq!(run_str(&["simulate", "g.json", "--hw", "h.json", "--pools", "0", "--threads", "1"]).0, EXIT_USAGE);
        assert_eq!(run_str(&["analyze", "g.json", "--format", "xml"]).0, EXIT_USAGE);
    }

    #[test]
    fn help_exits_0() {
        let (code, out, _) = run_str(&["--help"]);
        assert_eq!(code, EXIT_OK);
        assert!(out.contains("simulate"));
    }

    #[test]
    fn missing_file_exits_1() {
        let (code, _, err) = run_str(&["analyze", "/nonexistent/graph.json"]);
        assert_eq!(code, EXIT_INPUT);
        assert!(err.contains("cannot read"));
    }

    #[test]
    fn atomic_write_replaces_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("out.csv");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "two");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn measured_flag_only_on_benches() {
        let mut r = Report::new("analyze");
        assert!(!r.to_json().contains("measured"));
        r.measured = true;
        assert!(r.to_json().contains("\"measured\": true"));
    }
}
