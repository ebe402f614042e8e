//! Numerical evaluation of the stability and generalization bounds.
//!
//! Everything here is plain arithmetic over a handful of regularity
//! numbers: the kernel profile (sup, Lipschitz constant, minimal degree,
//! dimension, concentration constant zeta), the per-layer network
//! constants, and the signal's sup/Lipschitz bounds. Bound coefficients
//! are reported sqrt(N)-scaled so one report serves every graph size.
//!
//! Layer indexing convention: chains indexed 0..=T hold quantities after
//! that many layers (index 0 is the input signal); per-layer constants
//! for layer l (1-based) consume the chain entry l-1.

use crate::kernel::RegularityProfile;
use crate::mpnn::LayerConstants;
use crate::signal::SignalRegularity;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

fn require_lipschitz(profile: &RegularityProfile) -> Result<()> {
    if !profile.lip_w.is_finite() {
        return Err(Error::NonLipschitzKernel);
    }
    Ok(())
}

/// Smallest N whose sqrt clears the concentration threshold
/// 2(zeta (L_W/d_min) sqrt(dim) + ((sqrt(2)||W|| + L_W)/d_min) sqrt(log(2/p))).
pub fn min_nodes(profile: &RegularityProfile, p: f64) -> Result<u64> {
    require_lipschitz(profile)?;
    check_probability(p)?;
    let rhs = 2.0
        * (profile.zeta * (profile.lip_w / profile.d_min) * profile.dim.sqrt()
            + (std::f64::consts::SQRT_2 * profile.sup_w + profile.lip_w) / profile.d_min
                * (2.0 / p).ln().sqrt());
    if !rhs.is_finite() {
        return Err(Error::InvalidArgument(format!("degenerate threshold {rhs}")));
    }
    if rhs <= 1.0 {
        return Ok(1);
    }
    // sqrt(n) >= rhs is decided in f64, so scan a few candidates around
    // rhs^2 instead of trusting one rounded ceil
    let mut n = (rhs * rhs).floor() as u64;
    n = n.saturating_sub(2).max(1);
    while (n as f64).sqrt() < rhs {
        n += 1;
    }
    Ok(n)
}

fn check_probability(p: f64) -> Result<()> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidArgument(format!("probability {p} outside (0, 1)")));
    }
    Ok(())
}

/// Degree concentration radius: with probability 1-p all empirical degrees
/// at sampled nodes are within eps_d/sqrt(N) of the kernel degree.
pub fn epsilon_d(profile: &RegularityProfile, p: f64) -> Result<f64> {
    require_lipschitz(profile)?;
    check_probability(p)?;
    Ok(profile.zeta
        * (profile.lip_w * profile.dim.sqrt()
            + (std::f64::consts::SQRT_2 * profile.sup_w + profile.lip_w)
                * (2.0 / p).ln().sqrt()))
}

fn w_tilde_sup(profile: &RegularityProfile) -> f64 {
    profile.sup_w / profile.d_min
}

fn lip_w_tilde(profile: &RegularityProfile) -> f64 {
    profile.lip_w / profile.d_min + profile.lip_w * profile.sup_w / (profile.d_min * profile.d_min)
}

/// Lipschitz modulus of the degree-normalized message integrand
/// y -> (W(x,y)/d_W(x)) phi(f(x), f(y)).
pub fn lambda_tilde(
    layer: &LayerConstants,
    sig: &SignalRegularity,
    profile: &RegularityProfile,
) -> Result<f64> {
    require_lipschitz(profile)?;
    let a = w_tilde_sup(profile) * sig.lip_f * layer.lip_phi;
    let b = lip_w_tilde(profile) * (layer.bias_phi + 2.0 * layer.lip_phi * sig.sup_f);
    Ok((a * a + b * b).sqrt())
}

/// Message-aggregation concentration radius for one layer (sqrt(N)-scaled).
pub fn epsilon_w(
    layer: &LayerConstants,
    sig: &SignalRegularity,
    profile: &RegularityProfile,
    p: f64,
) -> Result<f64> {
    check_probability(p)?;
    let lam = lambda_tilde(layer, sig, profile)?;
    Ok(profile.zeta * lam * profile.dim.sqrt()
        + (std::f64::consts::SQRT_2
            * profile.sup_w
            * (2.0 * layer.lip_phi * sig.sup_f + layer.bias_phi)
            + profile.zeta * lam)
            * (2.0 / p).ln().sqrt())
}

/// Per-layer error injection D (sqrt(N)-scaled): the probabilistic
/// single-layer deviation is D/sqrt(N).
pub fn layer_error_d(
    layer: &LayerConstants,
    sig_at_layer: &SignalRegularity,
    profile: &RegularityProfile,
    p: f64,
) -> Result<f64> {
    let ed = epsilon_d(profile, p)?;
    let ew = epsilon_w(layer, sig_at_layer, profile, p)?;
    Ok(layer.lip_psi
        * (4.0 * ed * profile.sup_w
            * (2.0 * layer.lip_phi * sig_at_layer.sup_f + layer.bias_phi)
            / (profile.d_min * profile.d_min)
            + ew))
}

/// Per-layer error amplification K in the recurrence err_{l} <= K err_{l-1} + D.
pub fn layer_factor_k(layer: &LayerConstants, profile: &RegularityProfile) -> f64 {
    let ratio = profile.sup_w * layer.lip_phi * layer.lip_psi / profile.d_min;
    (layer.lip_psi * layer.lip_psi + 8.0 * ratio * ratio).sqrt()
}

/// Iterates eta_{l+1} = a_l eta_l + b_l, which equals
/// sum_l b_l prod_{l'>l} a_{l'} + eta_0 prod_l a_l.
pub fn solve_recurrence(a: &[f64], b: &[f64], eta0: f64) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::InvalidArgument(format!(
            "recurrence lengths differ: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let mut eta = eta0;
    for (al, bl) in a.iter().zip(b) {
        eta = al * eta + bl;
    }
    Ok(eta)
}

/// Layer-by-layer regularity of the continuum forward pass.
///
/// All vectors have length T+1; entry l describes the signal after l
/// layers. `sup`/`lip` are evaluated bounds; (`d1`, `d2`) and
/// (`z1`, `z2`, `z3`) are the same bounds kept as coefficients in the
/// input regularity, sup[l] = d1[l] + d2[l] sup_f and
/// lip[l] = z1[l] + z2[l] sup_f + z3[l] lip_f. `b_prime`/`b_dprime` are
/// the closed-form partial sums/products that resolve the sup recursion.
#[derive(Debug, Clone)]
pub struct SignalChain {
    pub sup: Vec<f64>,
    pub lip: Vec<f64>,
    pub d1: Vec<f64>,
    pub d2: Vec<f64>,
    pub z1: Vec<f64>,
    pub z2: Vec<f64>,
    pub z3: Vec<f64>,
    pub b_prime: Vec<f64>,
    pub b_dprime: Vec<f64>,
}

impl SignalChain {
    pub fn depth(&self) -> usize {
        self.sup.len() - 1
    }

    /// Regularity of the signal entering layer l (1-based).
    pub fn input_to_layer(&self, l: usize) -> SignalRegularity {
        SignalRegularity { sup_f: self.sup[l - 1], lip_f: self.lip[l - 1] }
    }
}

pub fn signal_regularity_recursions(
    layers: &[LayerConstants],
    profile: &RegularityProfile,
    sig: &SignalRegularity,
) -> Result<SignalChain> {
    require_lipschitz(profile)?;
    let t = layers.len();
    let mut chain = SignalChain {
        sup: vec![sig.sup_f],
        lip: vec![sig.lip_f],
        d1: vec![0.0],
        d2: vec![1.0],
        z1: vec![0.0],
        z2: vec![0.0],
        z3: vec![1.0],
        b_prime: vec![0.0],
        b_dprime: vec![1.0],
    };
    let decay_sup: Vec<f64> = layers
        .iter()
        .map(|l| l.lip_psi + 2.0 * profile.sup_w * l.lip_phi / profile.d_min)
        .collect();
    let grow_sup: Vec<f64> = layers
        .iter()
        .map(|l| l.lip_psi * profile.sup_w * l.bias_phi / profile.d_min + l.bias_psi)
        .collect();
    for (l, layer) in layers.iter().enumerate() {
        let (s_in, d1_in, d2_in) = (chain.sup[l], chain.d1[l], chain.d2[l]);
        chain.sup.push(decay_sup[l] * s_in + grow_sup[l]);
        chain.d1.push(decay_sup[l] * d1_in + grow_sup[l]);
        chain.d2.push(decay_sup[l] * d2_in);

        // Lipschitz step: the self term decays by L_psi (1 + Wsup L_phi / d_min)
        // while degree variation injects L_psi L_Wtilde (bias_phi + 2 L_phi s);
        // the injection is affine in s, so its d1/d2 parts split across z1/z2
        let decay_lip = layer.lip_psi * (1.0 + w_tilde_sup(profile) * layer.lip_phi);
        let base = layer.lip_psi * lip_w_tilde(profile);
        chain.lip.push(decay_lip * chain.lip[l] + base * (layer.bias_phi + 2.0 * layer.lip_phi * s_in));
        chain.z1.push(decay_lip * chain.z1[l] + base * (layer.bias_phi + 2.0 * layer.lip_phi * d1_in));
        chain.z2.push(decay_lip * chain.z2[l] + base * 2.0 * layer.lip_phi * d2_in);
        chain.z3.push(decay_lip * chain.z3[l]);
    }
    // closed forms for the sup recursion
    for l in 1..=t {
        let mut bp = 0.0;
        for k in 0..l {
            bp += grow_sup[k] * decay_sup[k + 1..l].iter().product::<f64>();
        }
        chain.b_prime.push(bp);
        chain.b_dprime.push(decay_sup[..l].iter().product());
    }
    Ok(chain)
}

/// The six concentration coefficients of one layer's epsilon_W expansion,
/// multiplying (L_in, s_in, L_in sqrt(log), s_in sqrt(log), sqrt(log), 1).
fn e_terms(layer: &LayerConstants, profile: &RegularityProfile) -> [f64; 6] {
    let z = profile.zeta;
    let sd = profile.dim.sqrt();
    let wt = w_tilde_sup(profile);
    let lwt = lip_w_tilde(profile);
    let sq2 = std::f64::consts::SQRT_2;
    [
        z * wt * layer.lip_phi * sd,
        2.0 * z * lwt * layer.lip_phi * sd,
        z * wt * layer.lip_phi,
        2.0 * z * lwt * layer.lip_phi + 2.0 * sq2 * profile.sup_w * layer.lip_phi,
        (sq2 * profile.sup_w + z * lwt) * layer.bias_phi,
        z * lwt * layer.bias_phi * sd,
    ]
}

/// Node-level constants: the raw six-way split (primed values multiply
/// (1, sup_f, lip_f), double-primed the same against sqrt(log(2/p))) and
/// the grouped (C1, C2, C3) presentation.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct NodeConstants {
    pub c1_prime: f64,
    pub c2_prime: f64,
    pub c3_prime: f64,
    pub c1_dprime: f64,
    pub c2_dprime: f64,
    pub c3_dprime: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
}

impl NodeConstants {
    /// sqrt(N)-scaled node-level coefficient at a concrete signal and p.
    pub fn coefficient(&self, sig: &SignalRegularity, p: f64) -> f64 {
        let root_log = (2.0 / p).ln().sqrt();
        self.c1_prime + self.c2_prime * sig.sup_f + self.c3_prime * sig.lip_f
            + root_log * (self.c1_dprime + self.c2_dprime * sig.sup_f + self.c3_dprime * sig.lip_f)
    }
}

pub fn node_bound_constants(
    layers: &[LayerConstants],
    profile: &RegularityProfile,
) -> Result<NodeConstants> {
    require_lipschitz(profile)?;
    // the chains are signal-free coefficient recursions, seeded neutrally
    let chain =
        signal_regularity_recursions(layers, profile, &SignalRegularity { sup_f: 0.0, lip_f: 0.0 })?;
    let ks: Vec<f64> = layers.iter().map(|l| layer_factor_k(l, profile)).collect();
    let z = profile.zeta;
    let sd = profile.dim.sqrt();
    let sq2 = std::f64::consts::SQRT_2;
    let dmin2 = profile.d_min * profile.d_min;
    // degree-concentration carriers split by their sqrt(dim) / sqrt(log) parts
    let ed_coef_dim = 4.0 * z * profile.lip_w * sd * profile.sup_w / dmin2;
    let ed_coef_log = 4.0 * z * (sq2 * profile.sup_w + profile.lip_w) * profile.sup_w / dmin2;

    let mut c = NodeConstants {
        c1_prime: 0.0,
        c2_prime: 0.0,
        c3_prime: 0.0,
        c1_dprime: 0.0,
        c2_dprime: 0.0,
        c3_dprime: 0.0,
        c1: 0.0,
        c2: 0.0,
        c3: 0.0,
    };
    for (idx, layer) in layers.iter().enumerate() {
        let l = idx + 1;
        let tail: f64 = ks[l..].iter().product();
        let e = e_terms(layer, profile);
        let (d1, d2) = (chain.d1[l - 1], chain.d2[l - 1]);
        let (z1, z2, z3) = (chain.z1[l - 1], chain.z2[l - 1], chain.z3[l - 1]);
        let lp = layer.lip_psi;

        c.c1_prime += lp
            * (ed_coef_dim * (2.0 * layer.lip_phi * d1 + layer.bias_phi) + e[0] * z1 + e[5])
            * tail;
        c.c2_prime += lp * (e[0] * z2 + e[2] * z2 + e[1] * d2) * tail;
        c.c3_prime += lp * e[0] * z3 * tail;
        c.c1_dprime += lp
            * (ed_coef_log * (2.0 * layer.lip_phi * d1 + layer.bias_phi)
                + e[2] * z1
                + e[3] * d1
                + e[4])
            * tail;
        c.c2_dprime += lp * (ed_coef_log * 2.0 * layer.lip_phi * d2 + e[3] * d2) * tail;
        c.c3_dprime += lp * e[2] * z3 * tail;
    }
    c.c1 = c.c1_prime;
    c.c2 = c.c2_prime.max(c.c3_prime);
    c.c3 = c.c1_dprime.max(c.c2_dprime).max(c.c3_dprime);
    Ok(c)
}

/// Pooled presentation: same node constants with the pooling correction
/// 2 sqrt(2) (B' + B'') folded into the sqrt(log) coefficient.
pub fn pooled_bound_constants(
    layers: &[LayerConstants],
    profile: &RegularityProfile,
    sig: &SignalRegularity,
) -> Result<(f64, f64, f64)> {
    let c = node_bound_constants(layers, profile)?;
    let chain = signal_regularity_recursions(layers, profile, sig)?;
    let t = layers.len();
    let pool = 2.0 * std::f64::consts::SQRT_2 * (chain.b_prime[t] + chain.b_dprime[t]);
    Ok((c.c1, c.c2, c.c3 + pool))
}

fn pooled_log_coefficient(
    c: &NodeConstants,
    chain: &SignalChain,
    sig: &SignalRegularity,
) -> f64 {
    let t = chain.depth();
    c.c1_dprime + c.c2_dprime * sig.sup_f + c.c3_dprime * sig.lip_f
        + 2.0 * std::f64::consts::SQRT_2 * (chain.b_prime[t] + sig.sup_f * chain.b_dprime[t])
}

fn check_min_n(n: u64, profile: &RegularityProfile, p: f64) -> Result<()> {
    let min_n = min_nodes(profile, p)?;
    if n < min_n {
        return Err(Error::BelowMinNodes { n, min_n });
    }
    Ok(())
}

/// Node-level deviation bound and its confidence 1 - 3Tp. Fails when N is
/// below the concentration threshold; see the _unchecked variant.
pub fn node_level_bound(
    n: u64,
    p: f64,
    layers: &[LayerConstants],
    profile: &RegularityProfile,
    sig: &SignalRegularity,
) -> Result<(f64, f64)> {
    check_min_n(n, profile, p)?;
    node_level_bound_unchecked(n, p, layers, profile, sig)
}

/// Evaluates the node-level formula without the minimum-N gate. The value
/// is only a guaranteed bound when n >= min_nodes; callers that evaluate
/// below threshold own that caveat.
pub fn node_level_bound_unchecked(
    n: u64,
    p: f64,
    layers: &[LayerConstants],
    profile: &RegularityProfile,
    sig: &SignalRegularity,
) -> Result<(f64, f64)> {
    check_probability(p)?;
    let c = node_bound_constants(layers, profile)?;
    let t = layers.len() as f64;
    Ok((c.coefficient(sig, p) / (n as f64).sqrt(), 1.0 - 3.0 * t * p))
}

/// Pooled-output bound and its confidence 1 - (3T+1)p.
pub fn pooled_bound(
    n: u64,
    p: f64,
    layers: &[LayerConstants],
    profile: &RegularityProfile,
    sig: &SignalRegularity,
) -> Result<(f64, f64)> {
    check_min_n(n, profile, p)?;
    pooled_bound_unchecked(n, p, layers, profile, sig)
}

pub fn pooled_bound_unchecked(
    n: u64,
    p: f64,
    layers: &[LayerConstants],
    profile: &RegularityProfile,
    sig: &SignalRegularity,
) -> Result<(f64, f64)> {
    check_probability(p)?;
    let c = node_bound_constants(layers, profile)?;
    let chain = signal_regularity_recursions(layers, profile, sig)?;
    let root_log = (2.0 / p).ln().sqrt();
    let value = (c.c1_prime + c.c2_prime * sig.sup_f + c.c3_prime * sig.lip_f
        + root_log * pooled_log_coefficient(&c, &chain, sig))
        / (n as f64).sqrt();
    let t = layers.len() as f64;
    Ok((value, 1.0 - (3.0 * t + 1.0) * p))
}

/// Confidence attached to the two-graph bound. The source inequality
/// prints 1 - 2(3Tp + 1), which is negative for every p; the corrected
/// reading 1 - 2(3T+1)p is reported alongside. Both are surfaced, neither
/// silently replaces the other.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TwoGraphConfidence {
    pub as_printed: f64,
    pub corrected: f64,
}

/// Distance bound between pooled outputs on two independent graphs from
/// the same model: pooled coefficient times (1/sqrt(N) + 1/sqrt(N')).
pub fn two_graph_bound(
    n: u64,
    n2: u64,
    p: f64,
    layers: &[LayerConstants],
    profile: &RegularityProfile,
    sig: &SignalRegularity,
) -> Result<(f64, TwoGraphConfidence)> {
    check_min_n(n, profile, p)?;
    check_min_n(n2, profile, p)?;
    two_graph_bound_unchecked(n, n2, p, layers, profile, sig)
}

pub fn two_graph_bound_unchecked(
    n: u64,
    n2: u64,
    p: f64,
    layers: &[LayerConstants],
    profile: &RegularityProfile,
    sig: &SignalRegularity,
) -> Result<(f64, TwoGraphConfidence)> {
    let (per_root_n, _) = pooled_bound_unchecked(1, p, layers, profile, sig)?;
    let t = layers.len() as f64;
    let value = per_root_n * (1.0 / (n as f64).sqrt() + 1.0 / (n2 as f64).sqrt());
    Ok((
        value,
        TwoGraphConfidence {
            as_printed: 1.0 - 2.0 * (3.0 * t * p + 1.0),
            corrected: 1.0 - 2.0 * (3.0 * t + 1.0) * p,
        },
    ))
}

/// Deterministic (probability-free) output energy bound
/// ||f^(T)||^2_{2;inf} <= (A' + A'' sup_f^2) N^{2T}, reported with the
/// N-free A', A'' and the sharper evaluated value that keeps N inside the
/// per-layer factors.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DeterministicBound {
    #[serde(rename = "A_prime")]
    pub a_prime: f64,
    #[serde(rename = "A_dprime")]
    pub a_dprime: f64,
    pub value: f64,
}

pub fn deterministic_output_bound(
    layers: &[LayerConstants],
    profile: &RegularityProfile,
    n: u64,
    sup_f: f64,
) -> DeterministicBound {
    let ratio2 = (profile.sup_w / profile.d_min) * (profile.sup_w / profile.d_min);
    let nn = (n as f64) * (n as f64);
    let mut a_prime = 0.0;
    let mut a_dprime = 1.0;
    let mut value = sup_f * sup_f;
    for l in layers {
        let lp2 = 16.0 * l.lip_psi * l.lip_psi;
        let b = lp2 * l.bias_phi * l.bias_phi + 16.0 * l.bias_psi * l.bias_psi;
        let a_free = lp2 * (1.0 + ratio2 * l.lip_phi * l.lip_phi);
        let a_n = lp2 * (1.0 + nn * ratio2 * l.lip_phi * l.lip_phi);
        a_prime = a_free * a_prime + b;
        a_dprime *= a_free;
        value = a_n * value + b;
    }
    DeterministicBound { a_prime, a_dprime, value }
}

/// Expected squared pooled deviation: a sqrt(pi)(3T+1)(H' + H'')^2 / N
/// leading term plus an exp(-N0^2)-suppressed remainder from the
/// deterministic bound, N0 = D1 + D2 sqrt(N) being the concentration
/// threshold solved for the log-term.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ExpectedBound {
    pub leading: f64,
    pub remainder: f64,
    pub total: f64,
    pub n0: f64,
}

pub fn expected_sq_bound(
    n: u64,
    layers: &[LayerConstants],
    profile: &RegularityProfile,
    sig: &SignalRegularity,
    statement_exponent: bool,
) -> Result<ExpectedBound> {
    require_lipschitz(profile)?;
    let c = node_bound_constants(layers, profile)?;
    let chain = signal_regularity_recursions(layers, profile, sig)?;
    let t = layers.len();
    let h_prime = c.c1_prime + c.c2_prime * sig.sup_f + c.c3_prime * sig.lip_f;
    let h_dprime = pooled_log_coefficient(&c, &chain, sig);
    let sum = h_prime + h_dprime;
    let leading =
        std::f64::consts::PI.sqrt() * (3.0 * t as f64 + 1.0) * sum * sum / n as f64;

    let sq2 = std::f64::consts::SQRT_2;
    let d2 = profile.d_min / (2.0 * (sq2 * profile.sup_w + profile.lip_w));
    let d1 = -profile.zeta * profile.lip_w * profile.dim.sqrt()
        / (sq2 * profile.sup_w + profile.lip_w);
    let n0 = d1 + d2 * (n as f64).sqrt();
    let det = deterministic_output_bound(layers, profile, 1, 0.0);
    let pooled_norm = chain.b_prime[t] + sig.sup_f * chain.b_dprime[t];
    let q_base = det.a_prime + det.a_dprime * sig.sup_f * sig.sup_f + pooled_norm;
    let exponent = if statement_exponent { 2 * t as i32 } else { 2 * t as i32 - 1 };
    let q = (n as f64).powi(exponent) * q_base * q_base;
    // the Gaussian tail integral collapses only past 1; below that use the
    // whole-line bound, which keeps the result a true upper bound
    let tail = if n0 >= 1.0 { (-n0 * n0).exp() } else { std::f64::consts::PI.sqrt() };
    let remainder = tail * q;
    Ok(ExpectedBound { leading, remainder, total: leading + remainder, n0 })
}

/// How a random graph draws its size.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NodeLaw {
    Fixed { n: u64 },
    UniformRange { lo: u64, hi: u64 },
    Categorical { values: Vec<u64>, probs: Vec<f64> },
}

impl NodeLaw {
    pub fn validate(&self) -> Result<()> {
        match self {
            NodeLaw::Fixed { n } if *n >= 1 => Ok(()),
            NodeLaw::Fixed { n } => {
                Err(Error::InvalidArgument(format!("node law needs n >= 1, got {n}")))
            }
            NodeLaw::UniformRange { lo, hi } if 1 <= *lo && lo <= hi => Ok(()),
            NodeLaw::UniformRange { lo, hi } => {
                Err(Error::InvalidArgument(format!("bad node range [{lo}, {hi}]")))
            }
            NodeLaw::Categorical { values, probs } => {
                if values.is_empty() || values.len() != probs.len() {
                    return Err(Error::InvalidArgument("mismatched categorical node law".into()));
                }
                if values.iter().any(|&v| v < 1) || probs.iter().any(|&q| !(q >= 0.0)) {
                    return Err(Error::InvalidArgument("bad categorical node law entries".into()));
                }
                let total: f64 = probs.iter().sum();
                if (total - 1.0).abs() > 1e-9 {
                    return Err(Error::InvalidArgument(format!(
                        "categorical probabilities sum to {total}"
                    )));
                }
                Ok(())
            }
        }
    }

    /// Finite support with probabilities.
    pub fn support(&self) -> Vec<(u64, f64)> {
        match self {
            NodeLaw::Fixed { n } => vec![(*n, 1.0)],
            NodeLaw::UniformRange { lo, hi } => {
                let q = 1.0 / (hi - lo + 1) as f64;
                (*lo..=*hi).map(|n| (n, q)).collect()
            }
            NodeLaw::Categorical { values, probs } => {
                values.iter().copied().zip(probs.iter().copied()).collect()
            }
        }
    }

    /// Exact expectation of g over the support.
    pub fn expect(&self, g: impl Fn(u64) -> f64) -> f64 {
        self.support().iter().map(|&(n, q)| q * g(n)).sum()
    }

    /// Draws one node count. `Fixed` consumes no randomness, so runs that
    /// differ only in the fixed size keep every other stream aligned.
    pub fn draw(&self, rng: &mut impl rand::RngExt) -> u64 {
        match self {
            NodeLaw::Fixed { n } => *n,
            NodeLaw::UniformRange { lo, hi } => rng.random_range(*lo..=*hi),
            NodeLaw::Categorical { values, probs } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (v, q) in values.iter().zip(probs) {
                    acc += q;
                    if u < acc {
                        return *v;
                    }
                }
                *values.last().expect("validated law is nonempty")
            }
        }
    }
}

/// A mixture of graph classes: per class a kernel, a signal, and a draw
/// probability; node counts follow one shared law.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassDistribution {
    pub classes: Vec<ClassSpec>,
    pub node_law: NodeLaw,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassSpec {
    pub kernel: crate::kernel::Kernel,
    pub signal: crate::signal::SignalSpec,
    pub gamma: f64,
}

impl ClassDistribution {
    pub fn validate(&self) -> Result<()> {
        if self.classes.is_empty() {
            return Err(Error::InvalidArgument("class distribution needs classes".into()));
        }
        for c in &self.classes {
            c.kernel.validate()?;
            if !(c.gamma > 0.0) {
                return Err(Error::InvalidArgument(format!("class weight {}", c.gamma)));
            }
        }
        let total: f64 = self.classes.iter().map(|c| c.gamma).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!("class weights sum to {total}")));
        }
        self.node_law.validate()
    }

    /// Per-class training-set counts for a stratified draw of size m.
    /// Every gamma_j m must be an integer (representativeness).
    pub fn stratified_counts(&self, m: usize) -> Result<Vec<usize>> {
        let mut counts = Vec::with_capacity(self.classes.len());
        for (j, c) in self.classes.iter().enumerate() {
            let exact = c.gamma * m as f64;
            let rounded = exact.round();
            if (exact - rounded).abs() > 1e-9 {
                return Err(Error::Representativeness { class: j, expected: exact });
            }
            counts.push(rounded as usize);
        }
        Ok(counts)
    }
}

/// Expected squared generalization gap bound for a stratified training set
/// of size m: Gamma sqrt(pi) L_V^2 (3T+1) C (1 + max sup + max lip)^2
/// E_nu[1/N + remainder(N)], with C = 8 max_j (C1+C2+C3+B'+B'')^2 over the
/// classes and the remainder evaluated with the worst class's constants.
pub fn generalization_bound(
    dist: &ClassDistribution,
    layers: &[LayerConstants],
    profiles: &[RegularityProfile],
    sigs: &[SignalRegularity],
    m: usize,
    l_v: f64,
) -> Result<f64> {
    dist.validate()?;
    if profiles.len() != dist.classes.len() || sigs.len() != dist.classes.len() {
        return Err(Error::InvalidArgument(
            "one regularity profile and signal regularity per class".into(),
        ));
    }
    dist.stratified_counts(m)?;
    let t = layers.len();
    let gamma_count = dist.classes.len() as f64;

    let mut c_max: f64 = 0.0;
    let mut sup_max: f64 = 0.0;
    let mut lip_max: f64 = 0.0;
    for (profile, sig) in profiles.iter().zip(sigs) {
        let c = node_bound_constants(layers, profile)?;
        let chain = signal_regularity_recursions(layers, profile, sig)?;
        c_max = c_max.max(c.c1 + c.c2 + c.c3 + chain.b_prime[t] + chain.b_dprime[t]);
        sup_max = sup_max.max(sig.sup_f);
        lip_max = lip_max.max(sig.lip_f);
    }
    let c_const = 8.0 * c_max * c_max;
    let prefactor = gamma_count
        * std::f64::consts::PI.sqrt()
        * l_v
        * l_v
        * (3.0 * t as f64 + 1.0)
        * c_const
        * (1.0 + sup_max + lip_max)
        * (1.0 + sup_max + lip_max);

    let expectation = dist.node_law.expect(|n| {
        let mut worst = 0.0f64;
        for (profile, sig) in profiles.iter().zip(sigs) {
            if let Ok(eb) = expected_sq_bound(n, layers, profile, sig, false) {
                worst = worst.max(eb.remainder);
            }
        }
        1.0 / n as f64 + worst
    });
    Ok(prefactor * expectation)
}

/// Per-layer slice of a [`BoundReport`].
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LayerBounds {
    pub eps_w: f64,
    pub lambda_tilde: f64,
    #[serde(rename = "D")]
    pub d: f64,
    #[serde(rename = "K")]
    pub k: f64,
    #[serde(rename = "D1")]
    pub d1: f64,
    #[serde(rename = "D2")]
    pub d2: f64,
    #[serde(rename = "B_prime")]
    pub b_prime: f64,
    #[serde(rename = "B_dprime")]
    pub b_dprime: f64,
    #[serde(rename = "Z1")]
    pub z1: f64,
    #[serde(rename = "Z2")]
    pub z2: f64,
    #[serde(rename = "Z3")]
    pub z3: f64,
    pub sup_ft: f64,
    pub lip_ft: f64,
}

/// Failure-probability multipliers: the bound at per-event probability p
/// holds with confidence 1 - multiplier * p.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FailureProbMultiplier {
    pub node: u64,
    pub pooled: u64,
    pub two_graph: u64,
}

/// Every constant the theorems consume, sqrt(N)-scaled where applicable,
/// so one report serves all graph sizes at the recorded p.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundReport {
    pub p: f64,
    pub dudley_c: f64,
    pub eps_d: f64,
    pub layers: Vec<LayerBounds>,
    #[serde(rename = "C1_prime")]
    pub c1_prime: f64,
    #[serde(rename = "C2_prime")]
    pub c2_prime: f64,
    #[serde(rename = "C3_prime")]
    pub c3_prime: f64,
    #[serde(rename = "C1_dprime")]
    pub c1_dprime: f64,
    #[serde(rename = "C2_dprime")]
    pub c2_dprime: f64,
    #[serde(rename = "C3_dprime")]
    pub c3_dprime: f64,
    #[serde(rename = "C1")]
    pub c1: f64,
    #[serde(rename = "C2")]
    pub c2: f64,
    #[serde(rename = "C3")]
    pub c3: f64,
    #[serde(rename = "B1")]
    pub b1: f64,
    #[serde(rename = "B2")]
    pub b2: f64,
    #[serde(rename = "B3")]
    pub b3: f64,
    #[serde(rename = "B_prime")]
    pub b_prime: f64,
    #[serde(rename = "B_dprime")]
    pub b_dprime: f64,
    #[serde(rename = "A_prime")]
    pub a_prime: f64,
    #[serde(rename = "A_dprime")]
    pub a_dprime: f64,
    pub min_n: u64,
    pub failure_prob_multiplier: FailureProbMultiplier,
    pub node_coefficient: f64,
    pub pooled_coefficient: f64,
}

pub fn bound_report(
    layers: &[LayerConstants],
    profile: &RegularityProfile,
    sig: &SignalRegularity,
    p: f64,
) -> Result<BoundReport> {
    let chain = signal_regularity_recursions(layers, profile, sig)?;
    let c = node_bound_constants(layers, profile)?;
    let (b1, b2, b3) = pooled_bound_constants(layers, profile, sig)?;
    let det = deterministic_output_bound(layers, profile, 1, 0.0);
    let t = layers.len();
    let mut per_layer = Vec::with_capacity(t);
    for (idx, layer) in layers.iter().enumerate() {
        let l = idx + 1;
        let at_input = chain.input_to_layer(l);
        per_layer.push(LayerBounds {
            eps_w: epsilon_w(layer, &at_input, profile, p)?,
            lambda_tilde: lambda_tilde(layer, &at_input, profile)?,
            d: layer_error_d(layer, &at_input, profile, p)?,
            k: layer_factor_k(layer, profile),
            d1: chain.d1[l],
            d2: chain.d2[l],
            b_prime: chain.b_prime[l],
            b_dprime: chain.b_dprime[l],
            z1: chain.z1[l],
            z2: chain.z2[l],
            z3: chain.z3[l],
            sup_ft: chain.sup[l],
            lip_ft: chain.lip[l],
        });
    }
    let root_log = (2.0 / p).ln().sqrt();
    Ok(BoundReport {
        p,
        dudley_c: profile.dudley_c,
        eps_d: epsilon_d(profile, p)?,
        layers: per_layer,
        c1_prime: c.c1_prime,
        c2_prime: c.c2_prime,
        c3_prime: c.c3_prime,
        c1_dprime: c.c1_dprime,
        c2_dprime: c.c2_dprime,
        c3_dprime: c.c3_dprime,
        c1: c.c1,
        c2: c.c2,
        c3: c.c3,
        b1,
        b2,
        b3,
        b_prime: chain.b_prime[t],
        b_dprime: chain.b_dprime[t],
        a_prime: det.a_prime,
        a_dprime: det.a_dprime,
        min_n: min_nodes(profile, p)?,
        failure_prob_multiplier: FailureProbMultiplier {
            node: 3 * t as u64,
            pooled: 3 * t as u64 + 1,
            two_graph: 2 * (3 * t as u64 + 1),
        },
        node_coefficient: c.coefficient(sig, p),
        pooled_coefficient: c.c1_prime + c.c2_prime * sig.sup_f + c.c3_prime * sig.lip_f
            + root_log * pooled_log_coefficient(&c, &chain, sig),
    })
}
