//! Graph kernels, kernel degrees and regularity profiles.
//!
//! A kernel `W` together with a [`Space`] defines the random graph model:
//! `n` node positions are drawn from the measure and every pair is weighted
//! by `W` exactly. The kernel degree `d_W(x) = E[W(x, Y)]` has a closed-form
//! path for all built-ins on both built-in spaces, plus Monte-Carlo and grid
//! quadrature estimators for cross-checks.

use crate::rng::{self, stream};
use crate::space::{point_cmp, Point, Space};
use crate::{Error, Result};
use rand::RngExt;
use serde::{Deserialize, Serialize};

/// Built-in kernels. All are symmetric, bounded by `sup()` and supported on
/// the whole space (`Constant`) or on a metric ball.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Kernel {
    /// `W = c` everywhere; the Erdos-Renyi-style flat model.
    Constant { c: f64 },
    /// `W(x,y) = 1` iff `d(x,y) < r`; the random geometric graph. Not
    /// Lipschitz, so bound computations reject it.
    BallIndicator { r: f64 },
    /// 1 on `d <= r - ramp`, 0 on `d >= r`, linear in between. Lipschitz
    /// surrogate of the ball with constant `1/ramp`.
    SmoothedBall { r: f64, ramp: f64 },
}

impl Kernel {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        match *self {
            Kernel::Constant { c } => {
                if !(c > 0.0 && c.is_finite()) {
                    return bad(format!("Constant kernel needs c > 0, got {c}"));
                }
            }
            Kernel::BallIndicator { r } => {
                if !(r > 0.0 && r.is_finite()) {
                    return bad(format!("BallIndicator needs r > 0, got {r}"));
                }
            }
            Kernel::SmoothedBall { r, ramp } => {
                if !(r > 0.0 && r.is_finite()) {
                    return bad(format!("SmoothedBall needs r > 0, got {r}"));
                }
                if !(ramp > 0.0 && ramp <= r) {
                    return bad(format!("SmoothedBall needs 0 < ramp <= r, got ramp {ramp}"));
                }
            }
        }
        Ok(())
    }

    /// Kernel value for a pair of points.
    pub fn eval(&self, space: Space, a: Point, b: Point) -> f64 {
        match *self {
            Kernel::Constant { c } => c,
            Kernel::BallIndicator { r } => {
                if space.distance(a, b) < r {
                    1.0
                } else {
                    0.0
                }
            }
            Kernel::SmoothedBall { r, ramp } => {
                let d = space.distance(a, b);
                if d <= r - ramp {
                    1.0
                } else if d >= r {
                    0.0
                } else {
                    (r - d) / ramp
                }
            }
        }
    }

    /// Essential supremum of the kernel.
    pub fn sup(&self) -> f64 {
        match *self {
            Kernel::Constant { c } => c,
            Kernel::BallIndicator { .. } | Kernel::SmoothedBall { .. } => 1.0,
        }
    }

    /// Lipschitz constant with respect to either argument; `+inf` for the
    /// discontinuous ball indicator.
    pub fn lip(&self) -> f64 {
        match *self {
            Kernel::Constant { .. } => 0.0,
            Kernel::BallIndicator { .. } => f64::INFINITY,
            Kernel::SmoothedBall { ramp, .. } => 1.0 / ramp,
        }
    }

    /// True when the kernel takes only the values 0 and 1; sparse storage
    /// then keeps no per-edge values.
    pub fn is_zero_one(&self) -> bool {
        matches!(self, Kernel::BallIndicator { .. })
    }

    /// Radius beyond which the kernel vanishes, if it has compact support.
    pub fn support_radius(&self) -> Option<f64> {
        match *self {
            Kernel::Constant { .. } => None,
            Kernel::BallIndicator { r } | Kernel::SmoothedBall { r, .. } => Some(r),
        }
    }
}

/// Measure of the metric ball of radius `rho` around `x` (closed form).
pub fn ball_measure(space: Space, x: Point, rho: f64) -> f64 {
    match space {
        Space::UnitSquareUniform => disc_square_area(x, rho),
        Space::UnitIntervalUniform => ((x[0] + rho).min(1.0) - (x[0] - rho).max(0.0)).max(0.0),
    }
}

/// Area of the disc of radius `rho` around `c` intersected with the unit
/// square, for a center inside the square. Exact up to rounding: the chord
/// length is integrated analytically on each interval between clipping
/// breakpoints.
pub fn disc_square_area(c: Point, rho: f64) -> f64 {
    assert!(
        (0.0..=1.0).contains(&c[0]) && (0.0..=1.0).contains(&c[1]),
        "center must lie in the unit square"
    );
    if rho <= 0.0 {
        return 0.0;
    }
    let (cx, cy) = (c[0], c[1]);
    // Work in the offset u = t - cx so the endpoints +-rho stay exact;
    // forming u by subtraction would lose half the mantissa right where
    // sqrt(rho^2 - u^2) is most sensitive.
    let u_lo = if cx - rho >= 0.0 { -rho } else { -cx };
    let u_hi = if cx + rho <= 1.0 { rho } else { 1.0 - cx };
    if u_lo >= u_hi {
        return 0.0;
    }
    // Antiderivative of the half-chord sqrt(rho^2 - u^2).
    let cap_h = |u: f64| {
        let s = (rho * rho - u * u).max(0.0).sqrt();
        0.5 * (u * s + rho * rho * (u / rho).clamp(-1.0, 1.0).asin())
    };
    // Breakpoints where the chord starts/stops being clipped by y = 1 or y = 0.
    let mut cuts = vec![u_lo, u_hi];
    for bound in [1.0 - cy, cy] {
        if rho > bound {
            let du = (rho * rho - bound * bound).sqrt();
            for u in [-du, du] {
                if u > u_lo && u < u_hi {
                    cuts.push(u);
                }
            }
        }
    }
    cuts.sort_by(f64::total_cmp);
    let mut area = 0.0;
    for w in cuts.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b <= a {
            continue;
        }
        let um = 0.5 * (a + b);
        let hm = (rho * rho - um * um).max(0.0).sqrt();
        let top_clipped = cy + hm > 1.0;
        let bottom_clipped = cy - hm < 0.0;
        area += match (top_clipped, bottom_clipped) {
            (false, false) => 2.0 * (cap_h(b) - cap_h(a)),
            (true, false) => (1.0 - cy) * (b - a) + (cap_h(b) - cap_h(a)),
            (false, true) => cy * (b - a) + (cap_h(b) - cap_h(a)),
            (true, true) => b - a,
        };
    }
    area
}

/// Panels of the Simpson rule resolving the smoothed-ball ramp; the
/// integrand is piecewise smooth, so this is accurate to ~1e-10.
const RAMP_PANELS: usize = 2048;

/// Kernel degree `d_W(x) = E[W(x, Y)]` through the closed-form path.
///
/// For the smoothed ball the layer-cake identity reduces the degree to a 1-D
/// integral of exact ball measures over the ramp, evaluated by a fine
/// Simpson rule.
pub fn kernel_degree_exact(k: &Kernel, space: Space, x: Point) -> Result<f64> {
    k.validate()?;
    space.require_contains(x)?;
    Ok(match *k {
        Kernel::Constant { c } => c,
        Kernel::BallIndicator { r } => ball_measure(space, x, r),
        Kernel::SmoothedBall { r, ramp } => {
            let f = |rho: f64| ball_measure(space, x, rho);
            let (lo, hi) = (r - ramp, r);
            let h = (hi - lo) / RAMP_PANELS as f64;
            let mut acc = f(lo) + f(hi);
            for i in 1..RAMP_PANELS {
                let w = if i % 2 == 1 { 4.0 } else { 2.0 };
                acc += w * f(lo + i as f64 * h);
            }
            acc * h / 3.0 / ramp
        }
    })
}

/// Quadrature rules shared by degree estimation and the continuum network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum Quadrature {
    /// I.i.d. nodes from the measure, seeded independently of everything else.
    MonteCarlo { samples: usize, seed: u64 },
    /// Midpoint grid; `resolution` cells per axis.
    Grid { resolution: usize },
}

impl Quadrature {
    pub fn validate(&self) -> Result<()> {
        let n = match *self {
            Quadrature::MonteCarlo { samples, .. } => samples,
            Quadrature::Grid { resolution } => resolution,
        };
        if n == 0 {
            return Err(Error::InvalidArgument("quadrature needs at least one node".into()));
        }
        Ok(())
    }

    /// The quadrature node set; every node carries equal weight `1/len`.
    pub fn points(&self, space: Space) -> Vec<Point> {
        match *self {
            Quadrature::MonteCarlo { samples, seed } => {
                let mut rng = rng::chacha(seed, &[stream::QUAD]);
                (0..samples)
                    .map(|_| match space {
                        Space::UnitSquareUniform => [rng.random::<f64>(), rng.random::<f64>()],
                        Space::UnitIntervalUniform => [rng.random::<f64>(), 0.0],
                    })
                    .collect()
            }
            Quadrature::Grid { resolution } => {
                let mid = |i: usize| (i as f64 + 0.5) / resolution as f64;
                match space {
                    Space::UnitSquareUniform => (0..resolution)
                        .flat_map(|j| (0..resolution).map(move |i| [mid(i), mid(j)]))
                        .collect(),
                    Space::UnitIntervalUniform => (0..resolution).map(|i| [mid(i), 0.0]).collect(),
                }
            }
        }
    }
}

/// Kernel degree estimated by quadrature; cross-check for the exact path.
pub fn kernel_degree(k: &Kernel, space: Space, x: Point, quad: &Quadrature) -> Result<f64> {
    k.validate()?;
    quad.validate()?;
    space.require_contains(x)?;
    let pts = quad.points(space);
    let sum: f64 = pts.iter().map(|&y| k.eval(space, x, y)).sum();
    Ok(sum / pts.len() as f64)
}

/// Graph-kernel degree `(1/N) sum_i W(x, X_i)` at the sampled node set.
///
/// Terms are summed in the canonical position order so the value matches the
/// degrees stored on a sampled graph bit-exactly.
pub fn empirical_degree(k: &Kernel, space: Space, x: Point, nodes: &[Point]) -> Result<f64> {
    k.validate()?;
    if nodes.is_empty() {
        return Err(Error::InvalidArgument("empirical degree of an empty node set".into()));
    }
    let mut order: Vec<usize> = (0..nodes.len()).collect();
    order.sort_by(|&a, &b| point_cmp(&nodes[a], &nodes[b]));
    let sum: f64 = order.iter().map(|&i| k.eval(space, x, nodes[i])).sum();
    Ok(sum / nodes.len() as f64)
}

/// Lower estimate of the essential infimum of the kernel degree: minimum of
/// the exact degree over a `grid_res`-per-axis point grid that includes the
/// boundary. For the ball-type kernels the infimum sits at a corner, which
/// the grid hits exactly.
pub fn estimate_dmin(k: &Kernel, space: Space, grid_res: usize) -> Result<f64> {
    if grid_res < 2 {
        return Err(Error::InvalidArgument("d_min grid needs at least 2 points per axis".into()));
    }
    let coord = |i: usize| i as f64 / (grid_res - 1) as f64;
    let mut min = f64::INFINITY;
    match space {
        Space::UnitSquareUniform => {
            for j in 0..grid_res {
                for i in 0..grid_res {
                    min = min.min(kernel_degree_exact(k, space, [coord(i), coord(j)])?);
                }
            }
        }
        Space::UnitIntervalUniform => {
            for i in 0..grid_res {
                min = min.min(kernel_degree_exact(k, space, [coord(i), 0.0])?);
            }
        }
    }
    Ok(min)
}

/// Dudley entropy constant aggregate: the fixed numeric prefactor of the
/// covering-style deviation bounds, scaled by the configurable universal
/// constant `dudley_c`.
pub fn zeta(dudley_c: f64) -> f64 {
    (2.0 / 2.0_f64.sqrt())
        * std::f64::consts::E
        * (2.0 / 2.0_f64.ln() + 1.0)
        * (1.0 / 2.0_f64.ln().sqrt())
        * dudley_c
}

/// Everything the bound machinery needs to know about a kernel on a space.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RegularityProfile {
    pub sup_w: f64,
    /// `+inf` for non-Lipschitz kernels; bound operations reject that.
    pub lip_w: f64,
    pub d_min: f64,
    /// Minkowski dimension of the space.
    pub dim: f64,
    pub zeta: f64,
    /// The universal covering constant the profile was built with; recorded
    /// so every report is self-describing.
    pub dudley_c: f64,
}

/// Default grid resolution for `d_min` estimation.
pub const DMIN_GRID: usize = 33;

/// Builds the regularity profile of a kernel on a space.
pub fn regularity_profile(
    k: &Kernel,
    space: Space,
    dudley_c: f64,
    grid_res: usize,
) -> Result<RegularityProfile> {
    if !(dudley_c > 0.0 && dudley_c.is_finite()) {
        return Err(Error::InvalidArgument(format!("dudley_c must be positive, got {dudley_c}")));
    }
    let d_min = estimate_dmin(k, space, grid_res)?;
    Ok(RegularityProfile {
        sup_w: k.sup(),
        lip_w: k.lip(),
        d_min,
        dim: space.minkowski_dim(),
        zeta: zeta(dudley_c),
        dudley_c,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const SQ: Space = Space::UnitSquareUniform;

    #[test]
    fn disc_area_matches_frozen_values() {
        // interior disc, quarter disc at a corner, half disc at an edge
        assert_relative_eq!(
            disc_square_area([0.5, 0.5], 0.1),
            0.031415926535897934,
            max_relative = 1e-14
        );
        assert_relative_eq!(
            disc_square_area([0.0, 0.0], 0.1),
            0.007853981633974483,
            max_relative = 1e-14
        );
        assert_relative_eq!(
            disc_square_area([0.5, 0.0], 0.1),
            0.015707963267948967,
            max_relative = 1e-14
        );
        // radius covering the whole square
        assert_relative_eq!(disc_square_area([0.3, 0.8], 2.0), 1.0, max_relative = 1e-14);
        assert_eq!(disc_square_area([0.5, 0.5], 0.0), 0.0);
    }

    #[test]
    fn disc_area_matches_monte_carlo() {
        let mut rng = rng::chacha(99, &[0xA]);
        for case in 0..6 {
            let c = [rng.random::<f64>(), rng.random::<f64>()];
            let rho = 0.05 + 0.9 * rng.random::<f64>();
            let n = 2_000_000;
            let mut hits = 0u64;
            for _ in 0..n {
                let p: Point = [rng.random::<f64>(), rng.random::<f64>()];
                if SQ.distance(c, p) < rho {
                    hits += 1;
                }
            }
            let mc = hits as f64 / n as f64;
            let exact = disc_square_area(c, rho);
            assert!(
                (mc - exact).abs() < 2e-3,
                "case {case}: exact {exact} vs mc {mc} at c=({},{}) rho={rho}",
                c[0],
                c[1]
            );
        }
    }

    #[test]
    fn disc_area_symmetry() {
        for (a, b) in [([0.2, 0.7], [0.7, 0.2]), ([0.1, 0.4], [0.9, 0.6])] {
            assert_relative_eq!(
                disc_square_area(a, 0.35),
                disc_square_area(b, 0.35),
                max_relative = 1e-13
            );
        }
    }

    #[test]
    fn exact_degrees_of_builtins() {
        let ball = Kernel::BallIndicator { r: 0.1 };
        assert_relative_eq!(
            kernel_degree_exact(&ball, SQ, [0.5, 0.5]).unwrap(),
            0.031415926535897934,
            max_relative = 1e-14
        );
        assert_relative_eq!(
            kernel_degree_exact(&ball, SQ, [0.0, 0.0]).unwrap(),
            0.007853981633974483,
            max_relative = 1e-14
        );
        let c = Kernel::Constant { c: 0.37 };
        assert_eq!(kernel_degree_exact(&c, SQ, [0.1, 0.9]).unwrap(), 0.37);

        // smoothed ball at a corner: quarter-disc ramp integral, frozen from
        // (1/ramp) * (pi/4) * (r^3 - (r-ramp)^3) / 3
        let sb = Kernel::SmoothedBall { r: 0.3, ramp: 0.05 };
        assert_relative_eq!(
            kernel_degree_exact(&sb, SQ, [0.0, 0.0]).unwrap(),
            0.059559360724306475,
            max_relative = 1e-9
        );
        // sandwiched between the two indicators
        let inner = kernel_degree_exact(&Kernel::BallIndicator { r: 0.25 }, SQ, [0.3, 0.3]).unwrap();
        let outer = kernel_degree_exact(&Kernel::BallIndicator { r: 0.3 }, SQ, [0.3, 0.3]).unwrap();
        let mid = kernel_degree_exact(&sb, SQ, [0.3, 0.3]).unwrap();
        assert!(inner <= mid && mid <= outer, "{inner} <= {mid} <= {outer}");
    }

    #[test]
    fn interval_degrees() {
        let iv = Space::UnitIntervalUniform;
        let ball = Kernel::BallIndicator { r: 0.2 };
        assert_relative_eq!(kernel_degree_exact(&ball, iv, [0.5, 0.0]).unwrap(), 0.4);
        assert_relative_eq!(kernel_degree_exact(&ball, iv, [0.0, 0.0]).unwrap(), 0.2);
        assert_relative_eq!(
            estimate_dmin(&ball, iv, 17).unwrap(),
            0.2,
            max_relative = 1e-14
        );
    }

    #[test]
    fn quadrature_degree_agrees_with_exact() {
        let k = Kernel::BallIndicator { r: 0.3 };
        let exact = kernel_degree_exact(&k, SQ, [0.4, 0.6]).unwrap();
        let mc = kernel_degree(&k, SQ, [0.4, 0.6], &Quadrature::MonteCarlo { samples: 400_000, seed: 5 })
            .unwrap();
        let grid = kernel_degree(&k, SQ, [0.4, 0.6], &Quadrature::Grid { resolution: 512 }).unwrap();
        assert!((mc - exact).abs() < 3e-3, "mc {mc} vs exact {exact}");
        assert!((grid - exact).abs() < 3e-3, "grid {grid} vs exact {exact}");
    }

    #[test]
    fn monte_carlo_error_shrinks_at_root_rate() {
        // quadrupling samples should roughly halve the error; averaged over
        // seeds to tame noise
        let k = Kernel::BallIndicator { r: 0.25 };
        let x = [0.3, 0.7];
        let exact = kernel_degree_exact(&k, SQ, x).unwrap();
        let mean_err = |samples: usize| {
            (0..24)
                .map(|s| {
                    let est =
                        kernel_degree(&k, SQ, x, &Quadrature::MonteCarlo { samples, seed: 1000 + s })
                            .unwrap();
                    (est - exact).abs()
                })
                .sum::<f64>()
                / 24.0
        };
        let (e1, e4) = (mean_err(4_000), mean_err(16_000));
        let ratio = e4 / e1;
        assert!((0.3..0.8).contains(&ratio), "error ratio {ratio} not near 0.5 ({e1} -> {e4})");
    }

    #[test]
    fn dmin_sits_at_the_corner_for_ball_kernels() {
        let k = Kernel::BallIndicator { r: 0.1 };
        let dmin = estimate_dmin(&k, SQ, 9).unwrap();
        assert_relative_eq!(dmin, 0.007853981633974483, max_relative = 1e-14);
        let c = Kernel::Constant { c: 0.5 };
        assert_eq!(estimate_dmin(&c, SQ, 5).unwrap(), 0.5);
    }

    #[test]
    fn zeta_frozen_value() {
        assert_relative_eq!(zeta(1.0), 17.940369206655244, max_relative = 1e-15);
        assert_relative_eq!(zeta(0.5), 0.5 * 17.940369206655244, max_relative = 1e-15);
    }

    #[test]
    fn profile_fields() {
        let p = regularity_profile(&Kernel::SmoothedBall { r: 0.1, ramp: 0.02 }, SQ, 1.0, 17).unwrap();
        assert_eq!(p.sup_w, 1.0);
        assert_eq!(p.lip_w, 50.0);
        assert_eq!(p.dim, 2.0);
        assert_eq!(p.dudley_c, 1.0);
        assert!(p.d_min > 0.0 && p.d_min < 0.01);
        let ind = regularity_profile(&Kernel::BallIndicator { r: 0.1 }, SQ, 1.0, 9).unwrap();
        assert!(ind.lip_w.is_infinite());
    }

    #[test]
    fn invalid_kernels_are_rejected() {
        assert!(Kernel::Constant { c: 0.0 }.validate().is_err());
        assert!(Kernel::BallIndicator { r: -1.0 }.validate().is_err());
        assert!(Kernel::SmoothedBall { r: 0.1, ramp: 0.2 }.validate().is_err());
        assert!(Kernel::SmoothedBall { r: 0.1, ramp: 0.0 }.validate().is_err());
        assert!(Kernel::SmoothedBall { r: 0.1, ramp: 0.1 }.validate().is_ok());
    }

    #[test]
    fn empirical_degree_rejects_empty_and_handles_order() {
        let k = Kernel::Constant { c: 1.0 };
        assert!(empirical_degree(&k, SQ, [0.5, 0.5], &[]).is_err());
        let nodes = [[0.9, 0.1], [0.2, 0.3], [0.5, 0.5]];
        let d = empirical_degree(&k, SQ, [0.5, 0.5], &nodes).unwrap();
        assert_eq!(d, 1.0);
    }
}
