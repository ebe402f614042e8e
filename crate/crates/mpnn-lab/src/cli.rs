//! Command line front end: config ingestion, experiment dispatch and
//! artifact emission.
//!
//! Configs are JSON files checked against a per-command key schema before
//! the typed parse: missing keys are errors, unknown keys are warnings.
//! Every run writes a manifest holding the fully resolved config, and a
//! manifest is itself accepted as a config, so any run can be reproduced
//! from its own output directory.
//!
//! Exit codes: 0 on success, 2 on config or file errors, 3 on violated
//! preconditions (sizes below the concentration floor, non-Lipschitz
//! kernels where a bound is required, and similar).

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{Value, json};

use crate::bounds;
use crate::experiments::{
    ConvergenceConfig, GapConfig, StabilityConfig, run_convergence, run_generalization,
    run_stability_pair, write_convergence_csv, write_gap_csv, write_slopes_csv,
    write_stability_csv,
};
use crate::graph::{sample_graph, write_json};
use crate::kernel::{DMIN_GRID, Kernel, regularity_profile};
use crate::mpnn::graphsage_random;
use crate::plot::plot_convergence_svg;
use crate::signal::SignalSpec;
use crate::space::Space;
use crate::{Error, Result};

/// Environment variable read for the default worker thread count; the
/// `--threads` flag wins over it.
pub const THREADS_ENV: &str = "MPNN_LAB_THREADS";

#[derive(Debug, Parser)]
#[command(name = "mpnn-lab", version, about = "MPNN stability laboratory")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample one graph from a kernel model and write it as JSON.
    SampleGraph(RunArgs),
    /// Error-vs-size curves against a large reference graph.
    Convergence(RunArgs),
    /// Pooled-output distance between two independent graphs.
    Stability(RunArgs),
    /// Constant chain and distance-bound report for a Lipschitz kernel.
    Bounds(RunArgs),
    /// Empirical vs statistical risk gap over training-set redraws.
    Generalization(RunArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// JSON config file, or a manifest written by an earlier run.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory, created if absent.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Overrides the config's master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker thread count; defaults to the MPNN_LAB_THREADS variable,
    /// then to the machine's core count.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Print a machine-readable JSON summary on standard output.
    #[arg(long)]
    pub json: bool,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::SampleGraph(_) => "sample-graph",
            Command::Convergence(_) => "convergence",
            Command::Stability(_) => "stability",
            Command::Bounds(_) => "bounds",
            Command::Generalization(_) => "generalization",
        }
    }

    fn args(&self) -> &RunArgs {
        match self {
            Command::SampleGraph(a)
            | Command::Convergence(a)
            | Command::Stability(a)
            | Command::Bounds(a)
            | Command::Generalization(a) => a,
        }
    }
}

/// Config for the `sample-graph` command.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SampleGraphConfig {
    pub kernel: Kernel,
    pub signal: SignalSpec,
    pub n: usize,
    pub seed: u64,
}

/// Config for the `bounds` command: the network is described by its
/// widths and weight seed, the model by kernel and signal. `n` optionally
/// evaluates the node and pooled bounds at a concrete graph size.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundsConfig {
    pub kernel: Kernel,
    pub signal: SignalSpec,
    pub widths: Vec<usize>,
    pub init_scale: f64,
    pub net_seed: u64,
    pub p: f64,
    pub dudley_c: f64,
    pub n: Option<u64>,
}

struct Schema {
    required: &'static [&'static str],
    optional: &'static [&'static str],
}

fn schema_for(command: &str) -> Result<&'static Schema> {
    const SAMPLE: Schema = Schema { required: &["kernel", "signal", "n", "seed"], optional: &[] };
    const CONVERGENCE: Schema = Schema {
        required: &[
            "kernel_family",
            "radii",
            "signals",
            "reference_n",
            "sizes",
            "trials",
            "widths",
            "init_scale",
            "net_seed",
            "master_seed",
            "fit_min_size",
        ],
        optional: &[],
    };
    const STABILITY: Schema = Schema {
        required: &[
            "kernel",
            "signal",
            "widths",
            "init_scale",
            "net_seed",
            "n",
            "n_prime",
            "trials",
            "dudley_c",
            "master_seed",
        ],
        optional: &["bound_p"],
    };
    const BOUNDS: Schema = Schema {
        required: &["kernel", "signal", "widths", "init_scale", "net_seed", "p", "dudley_c"],
        optional: &["n"],
    };
    const GAP: Schema = Schema {
        required: &[
            "dist",
            "m",
            "trials",
            "mc_size",
            "l_v",
            "widths",
            "init_scale",
            "net_seed",
            "master_seed",
            "dudley_c",
            "compute_bound",
        ],
        optional: &[],
    };
    match command {
        "sample-graph" => Ok(&SAMPLE),
        "convergence" => Ok(&CONVERGENCE),
        "stability" => Ok(&STABILITY),
        "bounds" => Ok(&BOUNDS),
        "generalization" => Ok(&GAP),
        other => Err(Error::Config(format!("unknown command {other}"))),
    }
}

/// Outcome of the schema check: required keys that are absent and present
/// keys the schema does not know. Unknown keys are warnings, not errors.
#[derive(Debug, Clone, Serialize, Default)]
pub struct ConfigReport {
    pub missing: Vec<String>,
    pub unknown: Vec<String>,
}

impl ConfigReport {
    pub fn is_clean(&self) -> bool {
        self.missing.is_empty() && self.unknown.is_empty()
    }
}

/// Unwraps a manifest into its embedded config; a plain config passes
/// through. A manifest written for a different command is rejected.
fn unwrap_manifest(value: Value, command: &str) -> Result<Value> {
    match value {
        Value::Object(ref map) if map.contains_key("command") && map.contains_key("config") => {
            let found = map["command"].as_str().unwrap_or_default().to_string();
            if found != command {
                return Err(Error::Config(format!(
                    "manifest was written by `{found}`, not `{command}`"
                )));
            }
            Ok(map["config"].clone())
        }
        v => Ok(v),
    }
}

fn schema_check(value: &Value, command: &str) -> Result<ConfigReport> {
    let schema = schema_for(command)?;
    let obj = value
        .as_object()
        .ok_or_else(|| Error::Config("config must be a JSON object".into()))?;
    let mut report = ConfigReport::default();
    for &key in schema.required {
        if !obj.contains_key(key) {
            report.missing.push(key.to_string());
        }
    }
    for key in obj.keys() {
        if !schema.required.contains(&key.as_str()) && !schema.optional.contains(&key.as_str()) {
            report.unknown.push(key.clone());
        }
    }
    Ok(report)
}

/// Schema check without execution: reads the file, unwraps a manifest if
/// given one, and reports missing and unknown top-level keys.
pub fn validate_config(path: &Path, command: &str) -> Result<ConfigReport> {
    let raw = std::fs::read_to_string(path)?;
    let value: Value = serde_json::from_str(&raw)?;
    let value = unwrap_manifest(value, command)?;
    schema_check(&value, command)
}

fn load_config(path: &Path, command: &str) -> Result<Value> {
    let raw = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let value: Value = serde_json::from_str(&raw)?;
    let value = unwrap_manifest(value, command)?;
    let report = schema_check(&value, command)?;
    for key in &report.unknown {
        eprintln!("warning: unknown config key `{key}` is ignored");
    }
    if !report.missing.is_empty() {
        return Err(Error::Config(format!(
            "config is missing required keys: {}",
            report.missing.join(", ")
        )));
    }
    Ok(value)
}

/// Run manifest: enough to reproduce the run byte for byte. The embedded
/// config has every override already applied.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub command: String,
    pub master_seed: u64,
    pub config: Value,
}

fn manifest_bytes(command: &str, master_seed: u64, config: &impl Serialize) -> Result<Vec<u8>> {
    let m = Manifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        command: command.to_string(),
        master_seed,
        config: serde_json::to_value(config)?,
    };
    let mut bytes = serde_json::to_vec_pretty(&m)?;
    bytes.push(b'\n');
    Ok(bytes)
}

/// Writes each artifact to a dot-prefixed temp file in the target
/// directory and renames into place, so failures never leave a partial
/// artifact under its final name.
fn write_artifacts(dir: &Path, files: &[(&str, Vec<u8>)]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for (name, bytes) in files {
        let tmp = dir.join(format!(".{name}.tmp"));
        std::fs::write(&tmp, bytes)?;
        std::fs::rename(&tmp, dir.join(name))?;
    }
    Ok(())
}

fn init_threads(flag: Option<usize>) {
    let n = flag.or_else(|| {
        std::env::var(THREADS_ENV).ok().and_then(|v| match v.parse::<usize>() {
            Ok(n) if n > 0 => Some(n),
            _ => {
                eprintln!("warning: ignoring unparsable {THREADS_ENV}={v}");
                None
            }
        })
    });
    if let Some(n) = n.filter(|&n| n > 0) {
        // Errors only if a global pool already exists, which is fine.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

fn emit(args: &RunArgs, human: &str, summary: Value) {
    if args.json {
        println!("{summary}");
    } else {
        println!("{human}");
    }
}

fn artifact_names(files: &[(&str, Vec<u8>)]) -> Vec<String> {
    files.iter().map(|(n, _)| n.to_string()).collect()
}

fn run_sample_graph_cmd(args: &RunArgs) -> Result<()> {
    let mut cfg: SampleGraphConfig = serde_json::from_value(load_config(&args.config, "sample-graph")?)?;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    let signal = cfg.signal.build();
    let g = sample_graph(&cfg.kernel, Space::UnitSquareUniform, cfg.n, &signal, cfg.seed)?;
    let mut graph_bytes = Vec::new();
    write_json(&g, &mut graph_bytes)?;
    graph_bytes.push(b'\n');
    let files = [
        ("graph.json", graph_bytes),
        ("manifest.json", manifest_bytes("sample-graph", cfg.seed, &cfg)?),
    ];
    write_artifacts(&args.out, &files)?;
    let (dmin, dmax) = g
        .degrees
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &d| (lo.min(d), hi.max(d)));
    emit(
        args,
        &format!(
            "sampled {} nodes, degree range [{dmin:.6}, {dmax:.6}]; wrote {}",
            g.n(),
            args.out.join("graph.json").display()
        ),
        json!({
            "command": "sample-graph",
            "out": args.out,
            "artifacts": artifact_names(&files),
            "summary": { "n": g.n(), "min_degree": dmin, "max_degree": dmax },
        }),
    );
    Ok(())
}

fn run_convergence_cmd(args: &RunArgs) -> Result<()> {
    let mut cfg: ConvergenceConfig =
        serde_json::from_value(load_config(&args.config, "convergence")?)?;
    if let Some(s) = args.seed {
        cfg.master_seed = s;
    }
    let res = run_convergence(&cfg)?;
    for d in &res.diagnostics {
        eprintln!("note: {d}");
    }
    let mut conv = Vec::new();
    write_convergence_csv(&res.rows, &mut conv)?;
    let mut slopes = Vec::new();
    write_slopes_csv(&res.curves, false, &mut slopes)?;
    let mut slopes_pooled = Vec::new();
    write_slopes_csv(&res.curves, true, &mut slopes_pooled)?;
    let mut svg = Vec::new();
    plot_convergence_svg(&res.curves, false, &mut svg)?;
    let mut svg_pooled = Vec::new();
    plot_convergence_svg(&res.curves, true, &mut svg_pooled)?;
    let files = [
        ("convergence.csv", conv),
        ("slopes.csv", slopes),
        ("slopes_pooled.csv", slopes_pooled),
        ("plot.svg", svg),
        ("plot_pooled.svg", svg_pooled),
        ("manifest.json", manifest_bytes("convergence", cfg.master_seed, &cfg)?),
    ];
    write_artifacts(&args.out, &files)?;
    let curve_summaries: Vec<Value> = res
        .curves
        .iter()
        .map(|c| {
            json!({
                "r": c.r,
                "signal": c.signal,
                "node_slope": c.node_fit.as_ref().map(|f| f.slope),
                "pooled_slope": c.pooled_fit.as_ref().map(|f| f.slope),
            })
        })
        .collect();
    let human: Vec<String> = res
        .curves
        .iter()
        .map(|c| {
            format!(
                "r={} {}: node slope {}",
                c.r,
                c.signal,
                c.node_fit.as_ref().map(|f| format!("{:.3}", f.slope)).unwrap_or("n/a".into())
            )
        })
        .collect();
    emit(
        args,
        &format!("{}\nwrote {}", human.join("\n"), args.out.display()),
        json!({
            "command": "convergence",
            "out": args.out,
            "artifacts": artifact_names(&files),
            "summary": { "curves": curve_summaries, "diagnostics": res.diagnostics },
        }),
    );
    Ok(())
}

fn run_stability_cmd(args: &RunArgs) -> Result<()> {
    let mut cfg: StabilityConfig = serde_json::from_value(load_config(&args.config, "stability")?)?;
    if let Some(s) = args.seed {
        cfg.master_seed = s;
    }
    let res = run_stability_pair(&cfg)?;
    if let Some(note) = &res.bound_note {
        eprintln!("note: {note}");
    }
    let mut csv = Vec::new();
    write_stability_csv(&res, &mut csv)?;
    let files = [
        ("stability.csv", csv),
        ("manifest.json", manifest_bytes("stability", cfg.master_seed, &cfg)?),
    ];
    write_artifacts(&args.out, &files)?;
    emit(
        args,
        &format!(
            "mean pooled distance {:.6}, max {:.6}{}",
            res.mean,
            res.max,
            res.bound.map(|b| format!(", bound {b:.6}")).unwrap_or_default()
        ),
        json!({
            "command": "stability",
            "out": args.out,
            "artifacts": artifact_names(&files),
            "summary": {
                "mean": res.mean,
                "max": res.max,
                "bound": res.bound,
                "confidence": res.confidence,
                "bound_note": res.bound_note,
            },
        }),
    );
    Ok(())
}

fn run_bounds_cmd(args: &RunArgs) -> Result<()> {
    let mut cfg: BoundsConfig = serde_json::from_value(load_config(&args.config, "bounds")?)?;
    if let Some(s) = args.seed {
        cfg.net_seed = s;
    }
    let net = graphsage_random(&cfg.widths, cfg.net_seed, cfg.init_scale)?;
    let profile = regularity_profile(&cfg.kernel, Space::UnitSquareUniform, cfg.dudley_c, DMIN_GRID)?;
    let sig = cfg.signal.build().regularity(Space::UnitSquareUniform);
    let report = bounds::bound_report(&net.constants(), &profile, &sig, cfg.p)?;
    let evaluated = match cfg.n {
        Some(n) => {
            let (node, node_conf) =
                bounds::node_level_bound(n, cfg.p, &net.constants(), &profile, &sig)?;
            let (pooled, pooled_conf) =
                bounds::pooled_bound(n, cfg.p, &net.constants(), &profile, &sig)?;
            json!({
                "n": n,
                "node_bound": node,
                "node_confidence": node_conf,
                "pooled_bound": pooled,
                "pooled_confidence": pooled_conf,
            })
        }
        None => Value::Null,
    };
    let mut report_bytes = serde_json::to_vec_pretty(&json!({
        "report": report,
        "evaluated": evaluated,
    }))?;
    report_bytes.push(b'\n');
    let files = [
        ("bounds.json", report_bytes),
        ("manifest.json", manifest_bytes("bounds", cfg.net_seed, &cfg)?),
    ];
    write_artifacts(&args.out, &files)?;
    emit(
        args,
        &format!(
            "min_n {} at p={}, node coefficient {:.6e}; wrote {}",
            report.min_n,
            cfg.p,
            report.node_coefficient,
            args.out.join("bounds.json").display()
        ),
        json!({
            "command": "bounds",
            "out": args.out,
            "artifacts": artifact_names(&files),
            "summary": {
                "min_n": report.min_n,
                "node_coefficient": report.node_coefficient,
                "pooled_coefficient": report.pooled_coefficient,
                "evaluated": evaluated,
            },
        }),
    );
    Ok(())
}

fn run_generalization_cmd(args: &RunArgs) -> Result<()> {
    let mut cfg: GapConfig = serde_json::from_value(load_config(&args.config, "generalization")?)?;
    if let Some(s) = args.seed {
        cfg.master_seed = s;
    }
    let res = run_generalization(&cfg)?;
    let mut csv = Vec::new();
    write_gap_csv(&res, &mut csv)?;
    let files = [
        ("gap.csv", csv),
        ("manifest.json", manifest_bytes("generalization", cfg.master_seed, &cfg)?),
    ];
    write_artifacts(&args.out, &files)?;
    emit(
        args,
        &format!(
            "mean squared gap {:.6e} over {} trials, population risk {:.6}{}",
            res.mean_sq_gap,
            res.rows.len(),
            res.r_exp,
            res.bound.map(|b| format!(", bound {b:.6e}")).unwrap_or_default()
        ),
        json!({
            "command": "generalization",
            "out": args.out,
            "artifacts": artifact_names(&files),
            "summary": {
                "mean_sq_gap": res.mean_sq_gap,
                "r_exp": res.r_exp,
                "bound": res.bound,
            },
        }),
    );
    Ok(())
}

fn execute(cli: &Cli) -> Result<()> {
    let args = cli.command.args();
    init_threads(args.threads);
    match &cli.command {
        Command::SampleGraph(a) => run_sample_graph_cmd(a),
        Command::Convergence(a) => run_convergence_cmd(a),
        Command::Stability(a) => run_stability_cmd(a),
        Command::Bounds(a) => run_bounds_cmd(a),
        Command::Generalization(a) => run_generalization_cmd(a),
    }
}

/// Maps an error onto the exit-code contract: config and file problems
/// are 2, violated mathematical preconditions are 3.
pub fn exit_code_for(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Io(_) | Error::Json(_) => 2,
        _ => 3,
    }
}

/// Parses the process arguments, runs the selected command and returns
/// the process exit code. Unknown commands and malformed flags exit with
/// code 2 via the argument parser itself.
pub fn main_entry() -> i32 {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    }
}
