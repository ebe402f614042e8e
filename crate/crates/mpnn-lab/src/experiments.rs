//! Experiment harness: sampling-convergence curves, two-graph stability
//! statistics, and the train/population risk gap, plus the CSV emitters
//! for all three.
//!
//! Every run is a pure function of its config. Trials are independent and
//! run in parallel, but each draws from a seed derived from `(master_seed,
//! trial path)` and results are reduced in trial order, so re-running a
//! config reproduces every artifact byte for byte regardless of thread
//! scheduling.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::{self, ClassDistribution, TwoGraphConfidence};
use crate::cmpnn::{LargeGraphReference, restrict_rows};
use crate::graph::{SampledGraph, sample_graph, subsample_graph};
use crate::kernel::{DMIN_GRID, Kernel, regularity_profile};
use crate::metrics::{LoglogFit, dist_pooled, dist_x, fit_loglog_slope};
use crate::mpnn::{MpnnSpec, global_pool, gmpnn_forward, graphsage_random};
use crate::rng::{self, stream};
use crate::signal::{Signal, SignalSpec};
use crate::space::Space;
use crate::{Error, Result};

/// Builds a signal from its descriptor.
pub fn make_signal(spec: &SignalSpec) -> Signal {
    spec.build()
}

/// Kernel family swept over the radius list of a convergence run.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelFamily {
    /// Hard ball indicator; the random geometric graph model.
    BallIndicator,
    /// Lipschitz taper over the outer `ramp_fraction` of the radius.
    SmoothedBall { ramp_fraction: f64 },
}

impl KernelFamily {
    pub fn kernel(&self, r: f64) -> Kernel {
        match *self {
            KernelFamily::BallIndicator => Kernel::BallIndicator { r },
            KernelFamily::SmoothedBall { ramp_fraction } => {
                Kernel::SmoothedBall { r, ramp: ramp_fraction * r }
            }
        }
    }
}

/// Convergence experiment: subsample ever smaller graphs from one large
/// reference graph and watch the forward outputs drift from the reference
/// rows. One curve per (radius, signal) pair.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvergenceConfig {
    pub kernel_family: KernelFamily,
    pub radii: Vec<f64>,
    pub signals: Vec<SignalSpec>,
    pub reference_n: usize,
    /// Subsample sizes, strictly increasing, none above `reference_n`.
    pub sizes: Vec<usize>,
    pub trials: usize,
    /// Network widths, input first. The input width must match the signal
    /// (all shipped signals are scalar).
    pub widths: Vec<usize>,
    pub init_scale: f64,
    pub net_seed: u64,
    pub master_seed: u64,
    /// Sizes below this are still measured but excluded from slope fits;
    /// the smallest graphs sit far below the concentration regime.
    pub fit_min_size: usize,
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        ConvergenceConfig {
            kernel_family: KernelFamily::BallIndicator,
            radii: vec![0.1, 0.5, 0.9],
            signals: vec![SignalSpec::Product],
            reference_n: 1 << 14,
            sizes: (1..=13).map(|k| 1usize << k).collect(),
            trials: 10,
            widths: vec![1, 16, 16],
            init_scale: 1.0,
            net_seed: 7,
            master_seed: 42,
            fit_min_size: 32,
        }
    }
}

impl ConvergenceConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.radii.is_empty() || self.radii.iter().any(|&r| !(r > 0.0 && r.is_finite())) {
            return bad(format!("radii must be positive, got {:?}", self.radii));
        }
        if self.signals.is_empty() {
            return bad("at least one signal is required".into());
        }
        if !self.sizes.windows(2).all(|w| w[0] < w[1]) || self.sizes.is_empty() {
            return bad(format!("sizes must be strictly increasing, got {:?}", self.sizes));
        }
        if *self.sizes.last().unwrap() > self.reference_n {
            return bad(format!(
                "largest size {} exceeds reference_n {}",
                self.sizes.last().unwrap(),
                self.reference_n
            ));
        }
        if self.sizes[0] == 0 {
            return bad("sizes must be positive".into());
        }
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.widths.first() != Some(&1) {
            return bad(format!("input width must be 1 for scalar signals, got {:?}", self.widths));
        }
        if self.widths.len() < 2 {
            return bad("widths must list input and at least one layer".into());
        }
        Ok(())
    }
}

/// One measured cell of a convergence run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub r: f64,
    pub signal: String,
    pub trial: usize,
    pub n: usize,
    pub dist_node: f64,
    pub dist_pooled: f64,
}

/// Trial-averaged curve for one (radius, signal) pair with its slope fits.
/// Sizes whose every trial aborted are absent; fits are `None` when fewer
/// than two positive means survive the `fit_min_size` cut.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CurveSummary {
    pub r: f64,
    pub signal: String,
    pub sizes: Vec<usize>,
    pub mean_node: Vec<f64>,
    pub mean_pooled: Vec<f64>,
    pub node_fit: Option<LoglogFit>,
    pub pooled_fit: Option<LoglogFit>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConvergenceResult {
    pub rows: Vec<ConvergenceRow>,
    pub curves: Vec<CurveSummary>,
    /// One line per dropped trial or cell, in deterministic job order.
    pub diagnostics: Vec<String>,
}

struct TrialCells {
    r: f64,
    signal: String,
    trial: usize,
    cells: Vec<(usize, f64, f64)>,
    diagnostics: Vec<String>,
}

fn convergence_trial(
    cfg: &ConvergenceConfig,
    net: &MpnnSpec,
    space: Space,
    ri: usize,
    si: usize,
    trial: usize,
) -> Result<TrialCells> {
    let r = cfg.radii[ri];
    let kernel = cfg.kernel_family.kernel(r);
    let signal = cfg.signals[si].build();
    let label = cfg.signals[si].label();
    let mut out = TrialCells {
        r,
        signal: label.clone(),
        trial,
        cells: Vec::with_capacity(cfg.sizes.len()),
        diagnostics: Vec::new(),
    };

    let graph_seed = rng::derive_seed(
        cfg.master_seed,
        &[stream::TRIAL, ri as u64, si as u64, trial as u64],
    );
    let parent = sample_graph(&kernel, space, cfg.reference_n, &signal, graph_seed)?;
    let reference = LargeGraphReference::new(net, &parent);
    let ref_out = match reference.outputs() {
        Ok(o) => o,
        Err(Error::IsolatedNode { node }) => {
            out.diagnostics.push(format!(
                "r={r} signal={label} trial={trial}: reference node {node} isolated, trial dropped"
            ));
            return Ok(out);
        }
        Err(e) => return Err(e),
    };
    let ref_pool = global_pool(ref_out)?;

    for &n in &cfg.sizes {
        let sub_seed = rng::derive_seed(
            cfg.master_seed,
            &[stream::SUBSAMPLE, ri as u64, si as u64, trial as u64, n as u64],
        );
        let (sub, index_map) = subsample_graph(&parent, n, sub_seed)?;
        match gmpnn_forward(net, &sub) {
            Ok(sub_out) => {
                let ref_rows = restrict_rows(ref_out, &index_map);
                let dn = dist_x(&sub_out, &ref_rows)?;
                let dp = dist_pooled(&global_pool(&sub_out)?, &ref_pool)?;
                out.cells.push((n, dn, dp));
            }
            Err(Error::IsolatedNode { node }) => out.diagnostics.push(format!(
                "r={r} signal={label} trial={trial} n={n}: node {node} isolated, cell dropped"
            )),
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// Runs the convergence experiment. Per trial: sample a reference graph,
/// compute its forward outputs once, then for each size subsample nodes,
/// rerun the network on the subgraph and measure the node-level distance
/// to the reference rows selected by the subsample (pooled outputs are
/// compared against the full reference pool). Means are taken over trials
/// and slopes fitted in log2-log2 coordinates.
pub fn run_convergence(cfg: &ConvergenceConfig) -> Result<ConvergenceResult> {
    cfg.validate()?;
    let space = Space::UnitSquareUniform;
    let net = graphsage_random(&cfg.widths, cfg.net_seed, cfg.init_scale)?;

    let mut jobs = Vec::new();
    for ri in 0..cfg.radii.len() {
        for si in 0..cfg.signals.len() {
            for t in 0..cfg.trials {
                jobs.push((ri, si, t));
            }
        }
    }
    let trials: Vec<TrialCells> = jobs
        .par_iter()
        .map(|&(ri, si, t)| convergence_trial(cfg, &net, space, ri, si, t))
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    let mut diagnostics = Vec::new();
    for t in &trials {
        for &(n, dn, dp) in &t.cells {
            rows.push(ConvergenceRow {
                r: t.r,
                signal: t.signal.clone(),
                trial: t.trial,
                n,
                dist_node: dn,
                dist_pooled: dp,
            });
        }
        diagnostics.extend(t.diagnostics.iter().cloned());
    }

    let mut curves = Vec::new();
    for (ri, &r) in cfg.radii.iter().enumerate() {
        for (si, spec) in cfg.signals.iter().enumerate() {
            let label = spec.label();
            let base = (ri * cfg.signals.len() + si) * cfg.trials;
            let mine = &trials[base..base + cfg.trials];
            let mut sizes = Vec::new();
            let mut mean_node = Vec::new();
            let mut mean_pooled = Vec::new();
            for &n in &cfg.sizes {
                let cells: Vec<(f64, f64)> = mine
                    .iter()
                    .flat_map(|t| t.cells.iter().filter(|c| c.0 == n).map(|c| (c.1, c.2)))
                    .collect();
                if cells.is_empty() {
                    continue;
                }
                let k = cells.len() as f64;
                sizes.push(n);
                mean_node.push(cells.iter().map(|c| c.0).sum::<f64>() / k);
                mean_pooled.push(cells.iter().map(|c| c.1).sum::<f64>() / k);
            }
            let fit = |means: &[f64]| {
                let pts: Vec<(u64, f64)> = sizes
                    .iter()
                    .zip(means)
                    .filter(|&(&n, &e)| n >= cfg.fit_min_size && e > 0.0)
                    .map(|(&n, &e)| (n as u64, e))
                    .collect();
                let (ns, es): (Vec<u64>, Vec<f64>) = pts.into_iter().unzip();
                fit_loglog_slope(&ns, &es).ok()
            };
            let node_fit = fit(&mean_node);
            let pooled_fit = fit(&mean_pooled);
            if node_fit.is_none() {
                diagnostics
                    .push(format!("r={r} signal={label}: too few points for a slope fit"));
            }
            curves.push(CurveSummary {
                r,
                signal: label,
                sizes,
                mean_node,
                mean_pooled,
                node_fit,
                pooled_fit,
            });
        }
    }
    Ok(ConvergenceResult { rows, curves, diagnostics })
}

/// Writes convergence rows as CSV.
pub fn write_convergence_csv<W: Write>(rows: &[ConvergenceRow], mut w: W) -> Result<()> {
    writeln!(w, "r,signal,trial,n,dist_node,dist_pooled")?;
    for row in rows {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            row.r, row.signal, row.trial, row.n, row.dist_node, row.dist_pooled
        )?;
    }
    Ok(())
}

/// Writes one slope row per curve; `pooled` selects which fit. Curves
/// without a fit are skipped.
pub fn write_slopes_csv<W: Write>(curves: &[CurveSummary], pooled: bool, mut w: W) -> Result<()> {
    writeln!(w, "r,signal,slope,intercept,residual")?;
    for c in curves {
        let fit = if pooled { &c.pooled_fit } else { &c.node_fit };
        if let Some(f) = fit {
            writeln!(w, "{},{},{},{},{}", c.r, c.signal, f.slope, f.intercept, f.residual)?;
        }
    }
    Ok(())
}

/// Two-graph stability experiment: pooled outputs of two independent
/// graphs from the same model, compared across trials against the
/// distribution-level distance bound when one is requested.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StabilityConfig {
    pub kernel: Kernel,
    pub signal: SignalSpec,
    pub widths: Vec<usize>,
    pub init_scale: f64,
    pub net_seed: u64,
    pub n: usize,
    pub n_prime: usize,
    pub trials: usize,
    /// Per-event failure probability of the requested bound; `None` runs
    /// the empirical part only. Requesting a bound enforces the minimum
    /// node count on both sizes.
    pub bound_p: Option<f64>,
    pub dudley_c: f64,
    pub master_seed: u64,
}

impl Default for StabilityConfig {
    fn default() -> Self {
        StabilityConfig {
            kernel: Kernel::BallIndicator { r: 0.5 },
            signal: SignalSpec::Product,
            widths: vec![1, 16, 16],
            init_scale: 1.0,
            net_seed: 7,
            n: 1 << 10,
            n_prime: 1 << 12,
            trials: 20,
            bound_p: None,
            dudley_c: 1.0,
            master_seed: 42,
        }
    }
}

impl StabilityConfig {
    pub fn validate(&self) -> Result<()> {
        self.kernel.validate()?;
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.n == 0 || self.n_prime == 0 {
            return bad("both graph sizes must be positive".into());
        }
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.widths.first() != Some(&1) || self.widths.len() < 2 {
            return bad(format!("widths must start at 1, got {:?}", self.widths));
        }
        if let Some(p) = self.bound_p {
            if !(p > 0.0 && p < 1.0) {
                return bad(format!("bound_p must lie in (0,1), got {p}"));
            }
        }
        if !(self.dudley_c > 0.0 && self.dudley_c.is_finite()) {
            return bad(format!("dudley_c must be positive, got {}", self.dudley_c));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StabilityRow {
    pub trial: usize,
    pub n: usize,
    pub n_prime: usize,
    pub dist_pooled: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StabilityResult {
    pub rows: Vec<StabilityRow>,
    pub mean: f64,
    pub max: f64,
    pub bound: Option<f64>,
    pub confidence: Option<TwoGraphConfidence>,
    /// Why the bound is absent, when it was requested but unavailable.
    pub bound_note: Option<String>,
}

/// One stability comparison: sample a graph per seed, run the network on
/// both, pool, and take the sup-norm distance. Equal seeds and equal sizes
/// give identical graphs, hence distance exactly 0.
pub fn stability_trial(
    net: &MpnnSpec,
    kernel: &Kernel,
    signal: &Signal,
    space: Space,
    n: usize,
    n_prime: usize,
    seed_a: u64,
    seed_b: u64,
) -> Result<f64> {
    let ga = sample_graph(kernel, space, n, signal, seed_a)?;
    let gb = sample_graph(kernel, space, n_prime, signal, seed_b)?;
    let pa = global_pool(&gmpnn_forward(net, &ga)?)?;
    let pb = global_pool(&gmpnn_forward(net, &gb)?)?;
    dist_pooled(&pa, &pb)
}

/// Runs the stability experiment. The bound, when requested, is evaluated
/// before any sampling so precondition violations (sizes below the
/// concentration threshold) fail fast; a non-Lipschitz kernel or an
/// unbounded signal downgrade the bound to a note while the empirical
/// part still runs.
pub fn run_stability_pair(cfg: &StabilityConfig) -> Result<StabilityResult> {
    cfg.validate()?;
    let space = Space::UnitSquareUniform;
    let net = graphsage_random(&cfg.widths, cfg.net_seed, cfg.init_scale)?;
    let signal = cfg.signal.build();

    let mut bound = None;
    let mut confidence = None;
    let mut bound_note = None;
    if let Some(p) = cfg.bound_p {
        if !cfg.kernel.lip().is_finite() {
            bound_note = Some("kernel is not Lipschitz, bound unavailable".into());
        } else {
            let profile = regularity_profile(&cfg.kernel, space, cfg.dudley_c, DMIN_GRID)?;
            let sig = signal.regularity(space);
            let (b, conf) = bounds::two_graph_bound(
                cfg.n as u64,
                cfg.n_prime as u64,
                p,
                &net.constants(),
                &profile,
                &sig,
            )?;
            if b.is_finite() {
                bound = Some(b);
                confidence = Some(conf);
            } else {
                bound_note = Some("signal regularity is unbounded, bound unavailable".into());
            }
        }
    }

    let dists: Vec<f64> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| {
            let sa = rng::derive_seed(cfg.master_seed, &[stream::TRIAL, t as u64, 0]);
            let sb = rng::derive_seed(cfg.master_seed, &[stream::TRIAL, t as u64, 1]);
            stability_trial(&net, &cfg.kernel, &signal, space, cfg.n, cfg.n_prime, sa, sb)
        })
        .collect::<Result<_>>()?;
    let rows: Vec<StabilityRow> = dists
        .iter()
        .enumerate()
        .map(|(t, &d)| StabilityRow { trial: t, n: cfg.n, n_prime: cfg.n_prime, dist_pooled: d })
        .collect();
    let mean = dists.iter().sum::<f64>() / dists.len() as f64;
    let max = dists.iter().fold(0.0f64, |m, &d| m.max(d));
    Ok(StabilityResult { rows, mean, max, bound, confidence, bound_note })
}

/// Writes stability rows as CSV; the bound column repeats the run-level
/// bound and stays empty when no bound is available.
pub fn write_stability_csv<W: Write>(res: &StabilityResult, mut w: W) -> Result<()> {
    writeln!(w, "trial,n,n_prime,dist_pooled,bound")?;
    for row in &res.rows {
        let b = res.bound.map(|b| b.to_string()).unwrap_or_default();
        writeln!(w, "{},{},{},{},{}", row.trial, row.n, row.n_prime, row.dist_pooled, b)?;
    }
    Ok(())
}

/// Cross-entropy of a softmax over the first `classes` output coordinates.
/// `l_v` is the Lipschitz constant recorded for bound evaluation, not used
/// in the loss value itself.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SoftmaxCrossEntropy {
    pub classes: usize,
    pub l_v: f64,
}

impl SoftmaxCrossEntropy {
    pub fn loss(&self, logits: &[f64], label: usize) -> Result<f64> {
        if logits.len() < self.classes {
            return Err(Error::DimensionMismatch(format!(
                "{} logits for {} classes",
                logits.len(),
                self.classes
            )));
        }
        if label >= self.classes {
            return Err(Error::InvalidArgument(format!(
                "label {label} outside {} classes",
                self.classes
            )));
        }
        let z = &logits[..self.classes];
        let mx = z.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let lse = mx + z.iter().map(|&v| (v - mx).exp()).sum::<f64>().ln();
        Ok(lse - z[label])
    }
}

/// Generalization-gap experiment: a fixed random net, repeated stratified
/// training-set draws, and the squared difference between training risk
/// and a Monte-Carlo estimate of the population risk.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GapConfig {
    pub dist: ClassDistribution,
    /// Training-set size; each class gets exactly its gamma share.
    pub m: usize,
    pub trials: usize,
    /// Monte-Carlo sample count for the population risk, at least 10 m.
    pub mc_size: usize,
    pub l_v: f64,
    pub widths: Vec<usize>,
    pub init_scale: f64,
    pub net_seed: u64,
    pub master_seed: u64,
    pub dudley_c: f64,
    /// Evaluate the distribution-level gap bound alongside; requires every
    /// class kernel to be Lipschitz.
    pub compute_bound: bool,
}

impl GapConfig {
    pub fn validate(&self) -> Result<()> {
        self.dist.validate()?;
        self.dist.stratified_counts(self.m)?;
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.mc_size < 10 * self.m {
            return bad(format!(
                "mc_size {} is below 10x the training size {}",
                self.mc_size, self.m
            ));
        }
        if !(self.l_v > 0.0 && self.l_v.is_finite()) {
            return bad(format!("l_v must be positive, got {}", self.l_v));
        }
        if self.widths.first() != Some(&1) || self.widths.len() < 2 {
            return bad(format!("widths must start at 1, got {:?}", self.widths));
        }
        if *self.widths.last().unwrap() < self.dist.classes.len() {
            return bad(format!(
                "output width {} is below the class count {}",
                self.widths.last().unwrap(),
                self.dist.classes.len()
            ));
        }
        if !(self.dudley_c > 0.0 && self.dudley_c.is_finite()) {
            return bad(format!("dudley_c must be positive, got {}", self.dudley_c));
        }
        Ok(())
    }
}

/// Samples the graph of class `j` with per-class ordinal `i`: the node
/// count comes from the node law's stream, graph content from a sibling
/// stream, so a fixed node law keeps graph draws aligned across size
/// regimes. The statistical-risk sampler uses the same layout, which
/// makes a point-mass distribution reproduce the training graphs exactly
/// when given the same base seed.
fn sample_class_graph(
    dist: &ClassDistribution,
    j: usize,
    i: u64,
    signal: &Signal,
    base_seed: u64,
    space: Space,
) -> Result<SampledGraph> {
    let mut law_rng = rng::chacha(base_seed, &[stream::TRAINING, j as u64, i, 0]);
    let n = dist.node_law.draw(&mut law_rng) as usize;
    let gseed = rng::derive_seed(base_seed, &[stream::TRAINING, j as u64, i, 1]);
    sample_graph(&dist.classes[j].kernel, space, n, signal, gseed)
}

/// Draws a stratified training set: exactly `gamma_j * m` graphs per class
/// (which must be integral), labels equal to class indices, class-major
/// order. Node counts are i.i.d. from the node law.
pub fn sample_training_set(
    dist: &ClassDistribution,
    m: usize,
    seed: u64,
) -> Result<Vec<(SampledGraph, usize)>> {
    dist.validate()?;
    let counts = dist.stratified_counts(m)?;
    let space = Space::UnitSquareUniform;
    let mut set = Vec::with_capacity(m);
    for (j, &count) in counts.iter().enumerate() {
        let signal = dist.classes[j].signal.build();
        for i in 0..count {
            set.push((sample_class_graph(dist, j, i as u64, &signal, seed, space)?, j));
        }
    }
    Ok(set)
}

fn mean_in_order(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Mean loss of the net's pooled outputs over a labeled set.
pub fn empirical_risk(
    net: &MpnnSpec,
    set: &[(SampledGraph, usize)],
    loss: &SoftmaxCrossEntropy,
) -> Result<f64> {
    if set.is_empty() {
        return Err(Error::InvalidArgument("empty training set".into()));
    }
    let losses: Vec<f64> = set
        .par_iter()
        .map(|(g, y)| loss.loss(&global_pool(&gmpnn_forward(net, g)?)?, *y))
        .collect::<Result<_>>()?;
    Ok(mean_in_order(&losses))
}

/// Monte-Carlo estimate of the population risk, stratified by class:
/// roughly `gamma_j * mc_size` fresh graphs per class, combined as the
/// gamma-weighted average of per-class means. Weighting by the exact
/// gammas keeps the estimator unbiased whatever the rounding does, and
/// removes the class-composition noise an i.i.d. class sampler would
/// carry, which does not shrink with graph size and would otherwise put
/// a floor under every measured gap.
pub fn statistical_risk(
    net: &MpnnSpec,
    dist: &ClassDistribution,
    loss: &SoftmaxCrossEntropy,
    mc_size: usize,
    seed: u64,
) -> Result<f64> {
    dist.validate()?;
    if mc_size == 0 {
        return Err(Error::InvalidArgument("mc_size must be positive".into()));
    }
    let space = Space::UnitSquareUniform;
    let mut total = 0.0;
    for (j, class) in dist.classes.iter().enumerate() {
        let k = ((class.gamma * mc_size as f64).round() as usize).max(1);
        let signal = class.signal.build();
        let losses: Vec<f64> = (0..k)
            .into_par_iter()
            .map(|i| {
                let g = sample_class_graph(dist, j, i as u64, &signal, seed, space)?;
                loss.loss(&global_pool(&gmpnn_forward(net, &g)?)?, j)
            })
            .collect::<Result<_>>()?;
        total += class.gamma * mean_in_order(&losses);
    }
    Ok(total)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GapRow {
    pub trial: usize,
    pub m: usize,
    pub r_emp: f64,
    pub r_exp: f64,
    pub sq_gap: f64,
    pub bound: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GapResult {
    pub rows: Vec<GapRow>,
    pub mean_sq_gap: f64,
    /// Shared Monte-Carlo population risk all trials are compared against.
    pub r_exp: f64,
    pub bound: Option<f64>,
}

/// Runs the gap experiment: estimates the population risk once, then
/// redraws the training set per trial and records the squared risk gap.
/// The distribution-level bound is evaluated once and repeated per row.
pub fn run_generalization(cfg: &GapConfig) -> Result<GapResult> {
    cfg.validate()?;
    let space = Space::UnitSquareUniform;
    let net = graphsage_random(&cfg.widths, cfg.net_seed, cfg.init_scale)?;
    let loss = SoftmaxCrossEntropy { classes: cfg.dist.classes.len(), l_v: cfg.l_v };

    let bound = if cfg.compute_bound {
        let mut profiles = Vec::with_capacity(cfg.dist.classes.len());
        let mut sigs = Vec::with_capacity(cfg.dist.classes.len());
        for class in &cfg.dist.classes {
            profiles.push(regularity_profile(&class.kernel, space, cfg.dudley_c, DMIN_GRID)?);
            sigs.push(class.signal.build().regularity(space));
        }
        Some(bounds::generalization_bound(
            &cfg.dist,
            &net.constants(),
            &profiles,
            &sigs,
            cfg.m,
            cfg.l_v,
        )?)
    } else {
        None
    };

    let r_exp = statistical_risk(
        &net,
        &cfg.dist,
        &loss,
        cfg.mc_size,
        rng::derive_seed(cfg.master_seed, &[stream::RISK]),
    )?;
    let r_emps: Vec<f64> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| {
            let seed = rng::derive_seed(cfg.master_seed, &[stream::TRIAL, t as u64]);
            empirical_risk(&net, &sample_training_set(&cfg.dist, cfg.m, seed)?, &loss)
        })
        .collect::<Result<_>>()?;

    let rows: Vec<GapRow> = r_emps
        .iter()
        .enumerate()
        .map(|(t, &r_emp)| {
            let gap = r_emp - r_exp;
            GapRow { trial: t, m: cfg.m, r_emp, r_exp, sq_gap: gap * gap, bound }
        })
        .collect();
    let mean_sq_gap = mean_in_order(&rows.iter().map(|r| r.sq_gap).collect::<Vec<_>>());
    Ok(GapResult { rows, mean_sq_gap, r_exp, bound })
}

/// Writes gap rows as CSV; the bound column stays empty when no bound was
/// computed.
pub fn write_gap_csv<W: Write>(res: &GapResult, mut w: W) -> Result<()> {
    writeln!(w, "trial,m,r_emp,r_exp,sq_gap,bound")?;
    for row in &res.rows {
        let b = row.bound.map(|b| b.to_string()).unwrap_or_default();
        writeln!(w, "{},{},{},{},{},{}", row.trial, row.m, row.r_emp, row.r_exp, row.sq_gap, b)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::{ClassSpec, NodeLaw};

    fn tiny_convergence() -> ConvergenceConfig {
        ConvergenceConfig {
            radii: vec![0.9],
            reference_n: 64,
            sizes: vec![8, 16, 64],
            trials: 2,
            widths: vec![1, 4, 4],
            fit_min_size: 8,
            ..ConvergenceConfig::default()
        }
    }

    #[test]
    fn subsample_at_reference_size_has_zero_error() {
        let res = run_convergence(&tiny_convergence()).unwrap();
        let full: Vec<_> = res.rows.iter().filter(|r| r.n == 64).collect();
        assert_eq!(full.len(), 2);
        for row in full {
            assert_eq!(row.dist_node, 0.0);
            assert_eq!(row.dist_pooled, 0.0);
        }
    }

    #[test]
    fn convergence_rerun_reproduces_csv_bytes() {
        let cfg = tiny_convergence();
        let render = || {
            let res = run_convergence(&cfg).unwrap();
            let mut conv = Vec::new();
            let mut slopes = Vec::new();
            write_convergence_csv(&res.rows, &mut conv).unwrap();
            write_slopes_csv(&res.curves, false, &mut slopes).unwrap();
            (conv, slopes)
        };
        assert_eq!(render(), render());
    }

    #[test]
    fn convergence_error_decays_with_size() {
        let cfg = ConvergenceConfig {
            radii: vec![0.9],
            reference_n: 512,
            sizes: vec![8, 32, 128],
            trials: 3,
            widths: vec![1, 4, 4],
            fit_min_size: 8,
            ..ConvergenceConfig::default()
        };
        let res = run_convergence(&cfg).unwrap();
        let curve = &res.curves[0];
        assert_eq!(curve.sizes, vec![8, 32, 128]);
        assert!(curve.mean_node[2] < curve.mean_node[0]);
        let fit = curve.node_fit.as_ref().unwrap();
        assert!(fit.slope < 0.0, "slope {}", fit.slope);
    }

    #[test]
    fn self_loop_keeps_sparse_subsamples_viable() {
        // W(x,x) = 1 for ball kernels, so even a 2-node subsample of a
        // very sparse model has positive degrees and the isolated-node
        // diagnostic path stays empty.
        let cfg = ConvergenceConfig {
            radii: vec![0.05],
            reference_n: 64,
            sizes: vec![2, 4],
            trials: 3,
            widths: vec![1, 4, 4],
            fit_min_size: 2,
            ..ConvergenceConfig::default()
        };
        let res = run_convergence(&cfg).unwrap();
        assert!(res.diagnostics.iter().all(|d| !d.contains("isolated")));
        assert_eq!(res.rows.len(), 6);
    }

    #[test]
    fn config_rejections_name_the_field() {
        let mut cfg = tiny_convergence();
        cfg.sizes = vec![16, 8];
        assert!(matches!(cfg.validate(), Err(Error::InvalidArgument(m)) if m.contains("increasing")));
        let mut cfg = tiny_convergence();
        cfg.sizes = vec![8, 128];
        assert!(cfg.validate().is_err());
        let mut cfg = tiny_convergence();
        cfg.widths = vec![2, 4];
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn equal_seeds_and_sizes_give_zero_stability_distance() {
        let net = graphsage_random(&[1, 4, 4], 3, 1.0).unwrap();
        let signal = SignalSpec::Product.build();
        let d = stability_trial(
            &net,
            &Kernel::Constant { c: 1.0 },
            &signal,
            Space::UnitSquareUniform,
            32,
            32,
            99,
            99,
        )
        .unwrap();
        assert_eq!(d, 0.0);
    }

    #[test]
    fn stability_distance_shrinks_when_sizes_quadruple() {
        let base = StabilityConfig {
            kernel: Kernel::Constant { c: 1.0 },
            widths: vec![1, 4, 4],
            n: 64,
            n_prime: 64,
            trials: 20,
            ..StabilityConfig::default()
        };
        let small = run_stability_pair(&base).unwrap();
        let big = run_stability_pair(&StabilityConfig { n: 256, n_prime: 256, ..base }).unwrap();
        assert!(
            big.mean <= 0.7 * small.mean,
            "mean {} at 4x size vs {}",
            big.mean,
            small.mean
        );
        assert!(small.bound.is_none() && small.bound_note.is_none());
    }

    #[test]
    fn bound_request_below_size_floor_is_rejected() {
        // Constant kernels have no covering term, so the floor at p=0.05
        // is ceil((2 sqrt(2 ln 40))^2) = 30 and n=16 sits below it.
        let cfg = StabilityConfig {
            kernel: Kernel::Constant { c: 1.0 },
            widths: vec![1, 4, 4],
            n: 16,
            n_prime: 16,
            trials: 1,
            bound_p: Some(0.05),
            ..StabilityConfig::default()
        };
        match run_stability_pair(&cfg) {
            Err(Error::BelowMinNodes { n, min_n }) => {
                assert_eq!(n, 16);
                assert_eq!(min_n, 30);
            }
            other => panic!("expected a size-floor rejection, got {other:?}"),
        }
    }

    #[test]
    fn two_graph_bound_dominates_every_observed_distance() {
        let cfg = StabilityConfig {
            kernel: Kernel::Constant { c: 1.0 },
            widths: vec![1, 4, 4],
            n: 64,
            n_prime: 64,
            trials: 20,
            bound_p: Some(0.05),
            ..StabilityConfig::default()
        };
        let res = run_stability_pair(&cfg).unwrap();
        let bound = res.bound.unwrap();
        assert!(bound > res.max, "bound {bound} vs max {}", res.max);
        let conf = res.confidence.unwrap();
        assert!((conf.corrected - 0.3).abs() < 1e-12);
        assert!((conf.as_printed - (-1.6)).abs() < 1e-12);
    }

    #[test]
    fn bound_request_on_indicator_kernel_degrades_to_note() {
        let cfg = StabilityConfig {
            kernel: Kernel::BallIndicator { r: 0.5 },
            widths: vec![1, 4, 4],
            n: 32,
            n_prime: 32,
            trials: 2,
            bound_p: Some(0.05),
            ..StabilityConfig::default()
        };
        let res = run_stability_pair(&cfg).unwrap();
        assert!(res.bound.is_none());
        assert!(res.bound_note.unwrap().contains("Lipschitz"));
        assert_eq!(res.rows.len(), 2);
    }

    fn two_class_dist() -> ClassDistribution {
        ClassDistribution {
            classes: vec![
                ClassSpec {
                    kernel: Kernel::Constant { c: 1.0 },
                    signal: SignalSpec::Product,
                    gamma: 0.5,
                },
                ClassSpec {
                    kernel: Kernel::Constant { c: 0.5 },
                    signal: SignalSpec::Sum,
                    gamma: 0.5,
                },
            ],
            node_law: NodeLaw::Fixed { n: 16 },
        }
    }

    #[test]
    fn training_set_is_stratified_and_deterministic() {
        let dist = two_class_dist();
        let set = sample_training_set(&dist, 10, 5).unwrap();
        assert_eq!(set.len(), 10);
        assert_eq!(set.iter().filter(|(_, y)| *y == 0).count(), 5);
        assert_eq!(set.iter().filter(|(_, y)| *y == 1).count(), 5);
        assert!(set.iter().all(|(g, _)| g.n() == 16));
        let again = sample_training_set(&dist, 10, 5).unwrap();
        assert_eq!(set[0].0.nodes, again[0].0.nodes);
        assert_eq!(set[9].0.features, again[9].0.features);
    }

    #[test]
    fn non_integral_class_shares_are_rejected() {
        match sample_training_set(&two_class_dist(), 7, 5) {
            Err(Error::Representativeness { class: 0, expected }) => {
                assert!((expected - 3.5).abs() < 1e-12);
            }
            other => panic!("expected a representativeness error, got {other:?}"),
        }
    }

    #[test]
    fn equal_logits_cost_log_class_count() {
        let loss = SoftmaxCrossEntropy { classes: 4, l_v: 2.0 };
        let v = loss.loss(&[0.3, 0.3, 0.3, 0.3, 9.0], 2).unwrap();
        assert!((v - 4.0f64.ln()).abs() < 1e-15);
        assert!(loss.loss(&[0.0, 0.0], 0).is_err());
        assert!(loss.loss(&[0.0; 4], 7).is_err());
    }

    #[test]
    fn point_mass_mc_with_training_seed_equals_empirical_risk() {
        let dist = ClassDistribution {
            classes: vec![ClassSpec {
                kernel: Kernel::Constant { c: 1.0 },
                signal: SignalSpec::Product,
                gamma: 1.0,
            }],
            node_law: NodeLaw::Fixed { n: 16 },
        };
        let net = graphsage_random(&[1, 4, 4], 3, 1.0).unwrap();
        let loss = SoftmaxCrossEntropy { classes: 1, l_v: 2.0 };
        let set = sample_training_set(&dist, 8, 123).unwrap();
        let r_emp = empirical_risk(&net, &set, &loss).unwrap();
        let r_exp = statistical_risk(&net, &dist, &loss, 8, 123).unwrap();
        assert_eq!(r_emp, r_exp);
    }

    fn tiny_gap_config() -> GapConfig {
        GapConfig {
            dist: two_class_dist(),
            m: 4,
            trials: 3,
            mc_size: 40,
            l_v: 2.0,
            widths: vec![1, 4, 4],
            init_scale: 1.0,
            net_seed: 3,
            master_seed: 11,
            dudley_c: 1.0,
            compute_bound: true,
        }
    }

    #[test]
    fn gap_run_reports_dominating_bound_and_stable_csv() {
        let cfg = tiny_gap_config();
        let res = run_generalization(&cfg).unwrap();
        assert_eq!(res.rows.len(), 3);
        let bound = res.bound.unwrap();
        for row in &res.rows {
            assert!(row.sq_gap >= 0.0);
            assert!(bound > row.sq_gap, "bound {bound} vs gap {}", row.sq_gap);
        }
        let render = || {
            let mut out = Vec::new();
            write_gap_csv(&run_generalization(&cfg).unwrap(), &mut out).unwrap();
            out
        };
        assert_eq!(render(), render());
    }

    #[test]
    fn constant_output_net_has_exactly_zero_gap() {
        let cfg = GapConfig {
            dist: ClassDistribution {
                classes: vec![ClassSpec {
                    kernel: Kernel::Constant { c: 1.0 },
                    signal: SignalSpec::Product,
                    gamma: 1.0,
                }],
                node_law: NodeLaw::Fixed { n: 8 },
            },
            init_scale: 0.0,
            ..tiny_gap_config()
        };
        let res = run_generalization(&cfg).unwrap();
        for row in &res.rows {
            assert_eq!(row.sq_gap, 0.0);
        }
    }

    #[test]
    fn undersized_mc_budget_is_rejected() {
        let cfg = GapConfig { mc_size: 39, ..tiny_gap_config() };
        assert!(matches!(cfg.validate(), Err(Error::InvalidArgument(m)) if m.contains("mc_size")));
    }
}
