//! Node signals: pointwise-evaluable functions of position, plus pure
//! per-node noise that only exists as sampled features.

use crate::rng::{self, stream};
use crate::space::{Point, Space};
use crate::{Error, Result};
use ndarray::Array2;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// Closed-form scalar signals on the unit square / interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClosedForm {
    /// `f(x) = x_1 * x_2`; sup 1, Lipschitz sqrt(2) on the unit square.
    Product,
    /// `f(x) = x_1 + x_2`; sup 2, Lipschitz sqrt(2).
    Sum,
    /// `f(x) = x_axis`.
    Coordinate { axis: usize },
    /// `f(x) = c`.
    Constant { c: f64 },
}

/// Sup / Lipschitz metadata a signal feeds into the bound machinery.
/// Infinite entries mean "no finite bound available".
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SignalRegularity {
    pub sup_f: f64,
    pub lip_f: f64,
}

/// Buildable description of a signal: the form that appears in config
/// files and class distributions. Building is cheap except for
/// `Bandlimited`, which synthesizes its lookup table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SignalSpec {
    Product,
    Sum,
    Coordinate { axis: usize },
    Constant { c: f64 },
    Bandlimited { seed: u64 },
    Noise { sigma: f64 },
}

impl SignalSpec {
    pub fn build(&self) -> Signal {
        match *self {
            SignalSpec::Product => Signal::ClosedForm(ClosedForm::Product),
            SignalSpec::Sum => Signal::ClosedForm(ClosedForm::Sum),
            SignalSpec::Coordinate { axis } => Signal::ClosedForm(ClosedForm::Coordinate { axis }),
            SignalSpec::Constant { c } => Signal::ClosedForm(ClosedForm::Constant { c }),
            SignalSpec::Bandlimited { seed } => Signal::bandlimited(seed),
            SignalSpec::Noise { sigma } => Signal::PerNodeNoise { sigma },
        }
    }

    /// Short label for CSV rows and plot legends.
    pub fn label(&self) -> String {
        match self {
            SignalSpec::Product => "product".into(),
            SignalSpec::Sum => "sum".into(),
            SignalSpec::Coordinate { axis } => format!("coord{axis}"),
            SignalSpec::Constant { c } => format!("const{c}"),
            SignalSpec::Bandlimited { seed } => format!("bandlimited{seed}"),
            SignalSpec::Noise { sigma } => format!("noise{sigma}"),
        }
    }
}

/// A node signal. Features of a sampled graph are `f(X_i)` rows for the
/// evaluable variants and i.i.d. draws for [`Signal::PerNodeNoise`].
#[derive(Debug, Clone)]
pub enum Signal {
    ClosedForm(ClosedForm),
    /// Piecewise-constant lookup into a band-limited table on a square grid;
    /// see [`Signal::bandlimited`].
    GridBandlimited(BandlimitedTable),
    /// I.i.d. Gaussian features, not evaluable at a point.
    PerNodeNoise { sigma: f64 },
}

/// Grid side length of the band-limited table.
pub const BANDLIMITED_GRID: usize = 256;
/// Low-frequency block edge carrying the random coefficients.
pub const BANDLIMITED_BAND: usize = 20;

#[derive(Debug, Clone)]
pub struct BandlimitedTable {
    grid: usize,
    /// Row-major cell values, rescaled to sup-norm 1.
    values: Vec<f64>,
    /// Max adjacent-cell difference times grid resolution; the Lipschitz
    /// estimate of the underlying band-limited function.
    lip_estimate: f64,
}

impl Signal {
    /// Builds the band-limited table signal: the real part of the inverse
    /// DFT of standard-normal complex coefficients supported on the low
    /// `BANDLIMITED_BAND`-squared frequency block of a `BANDLIMITED_GRID`-
    /// squared grid, rescaled to sup-norm 1. Lookup is nearest-cell.
    pub fn bandlimited(seed: u64) -> Signal {
        let n = BANDLIMITED_GRID;
        let band = BANDLIMITED_BAND;
        let mut rng = rng::chacha(seed, &[stream::SIGNAL]);
        let mut coef = vec![(0.0f64, 0.0f64); band * band];
        for c in coef.iter_mut() {
            c.0 = StandardNormal.sample(&mut rng);
            c.1 = StandardNormal.sample(&mut rng);
        }
        // separable evaluation: g[k][col] = sum_l v[k][l] e(l * col), then
        // f[row][col] = Re sum_k g[k][col] e(k * row)
        let tau = std::f64::consts::TAU / n as f64;
        let mut g = vec![(0.0f64, 0.0f64); band * n];
        for k in 0..band {
            for col in 0..n {
                let mut acc = (0.0, 0.0);
                for l in 0..band {
                    let (re, im) = coef[k * band + l];
                    let (s, c) = (tau * (l * col) as f64).sin_cos();
                    acc.0 += re * c - im * s;
                    acc.1 += re * s + im * c;
                }
                g[k * n + col] = acc;
            }
        }
        let mut values = vec![0.0f64; n * n];
        for row in 0..n {
            for col in 0..n {
                let mut acc = 0.0;
                for k in 0..band {
                    let (re, im) = g[k * n + col];
                    let (s, c) = (tau * (k * row) as f64).sin_cos();
                    acc += re * c - im * s;
                }
                values[row * n + col] = acc;
            }
        }
        let sup = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for v in values.iter_mut() {
            *v /= sup;
        }
        let mut max_diff = 0.0f64;
        for row in 0..n {
            for col in 0..n {
                let v = values[row * n + col];
                if col + 1 < n {
                    max_diff = max_diff.max((v - values[row * n + col + 1]).abs());
                }
                if row + 1 < n {
                    max_diff = max_diff.max((v - values[(row + 1) * n + col]).abs());
                }
            }
        }
        Signal::GridBandlimited(BandlimitedTable {
            grid: n,
            values,
            lip_estimate: max_diff * n as f64,
        })
    }

    /// Feature dimension; all built-ins are scalar.
    pub fn output_dim(&self) -> usize {
        1
    }

    pub fn is_pointwise(&self) -> bool {
        !matches!(self, Signal::PerNodeNoise { .. })
    }

    /// Pointwise evaluation; fails for per-node noise.
    pub fn eval(&self, p: Point) -> Result<f64> {
        match self {
            Signal::ClosedForm(cf) => Ok(match *cf {
                ClosedForm::Product => p[0] * p[1],
                ClosedForm::Sum => p[0] + p[1],
                ClosedForm::Coordinate { axis } => {
                    if axis > 1 {
                        return Err(Error::InvalidArgument(format!("coordinate axis {axis}")));
                    }
                    p[axis]
                }
                ClosedForm::Constant { c } => c,
            }),
            Signal::GridBandlimited(t) => {
                let cell = |v: f64| (((v * t.grid as f64) as usize).min(t.grid - 1)).max(0);
                Ok(t.values[cell(p[1]) * t.grid + cell(p[0])])
            }
            Signal::PerNodeNoise { .. } => Err(Error::UnsupportedSignal(
                "per-node noise has no pointwise values".into(),
            )),
        }
    }

    /// Sup / Lipschitz metadata for the bound machinery, on the given space.
    pub fn regularity(&self, space: Space) -> SignalRegularity {
        match self {
            Signal::ClosedForm(cf) => match *cf {
                ClosedForm::Product => SignalRegularity {
                    sup_f: 1.0,
                    lip_f: match space {
                        Space::UnitSquareUniform => std::f64::consts::SQRT_2,
                        Space::UnitIntervalUniform => 0.0,
                    },
                },
                ClosedForm::Sum => SignalRegularity {
                    sup_f: space.minkowski_dim(),
                    lip_f: space.minkowski_dim().sqrt(),
                },
                ClosedForm::Coordinate { .. } => SignalRegularity { sup_f: 1.0, lip_f: 1.0 },
                ClosedForm::Constant { c } => SignalRegularity { sup_f: c.abs(), lip_f: 0.0 },
            },
            Signal::GridBandlimited(t) => SignalRegularity { sup_f: 1.0, lip_f: t.lip_estimate },
            Signal::PerNodeNoise { .. } => {
                SignalRegularity { sup_f: f64::INFINITY, lip_f: f64::INFINITY }
            }
        }
    }

    /// Feature matrix at a node list. Pointwise signals are evaluated at the
    /// positions; per-node noise is drawn i.i.d. from the `FEATURES` stream
    /// of `feature_seed`, one row per node in node order.
    pub fn features(&self, points: &[Point], feature_seed: u64) -> Result<Array2<f64>> {
        let n = points.len();
        match self {
            Signal::PerNodeNoise { sigma } => {
                let mut rng = rng::chacha(feature_seed, &[stream::FEATURES]);
                let mut out = Array2::zeros((n, 1));
                for i in 0..n {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    out[(i, 0)] = sigma * z;
                }
                Ok(out)
            }
            _ => {
                let mut out = Array2::zeros((n, 1));
                for (i, &p) in points.iter().enumerate() {
                    out[(i, 0)] = self.eval(p)?;
                }
                Ok(out)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_forms_evaluate() {
        let s = Signal::ClosedForm(ClosedForm::Product);
        assert_eq!(s.eval([0.5, 0.4]).unwrap(), 0.2);
        assert_eq!(Signal::ClosedForm(ClosedForm::Sum).eval([0.5, 0.4]).unwrap(), 0.9);
        assert_eq!(
            Signal::ClosedForm(ClosedForm::Constant { c: 3.0 }).eval([0.1, 0.1]).unwrap(),
            3.0
        );
        let r = s.regularity(Space::UnitSquareUniform);
        assert_eq!(r.sup_f, 1.0);
        assert!((r.lip_f - std::f64::consts::SQRT_2).abs() < 1e-15);
    }

    #[test]
    fn bandlimited_table_is_normalized_and_deterministic() {
        let s = Signal::bandlimited(7);
        let Signal::GridBandlimited(t) = &s else { panic!() };
        let sup = t.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert_eq!(sup, 1.0);
        assert!(t.lip_estimate.is_finite() && t.lip_estimate > 0.0);
        let s2 = Signal::bandlimited(7);
        let Signal::GridBandlimited(t2) = &s2 else { panic!() };
        assert_eq!(t.values, t2.values);
        let s3 = Signal::bandlimited(8);
        let Signal::GridBandlimited(t3) = &s3 else { panic!() };
        assert_ne!(t.values, t3.values);
        // lookup picks the right cell
        assert_eq!(s.eval([0.0, 0.0]).unwrap(), t.values[0]);
        assert_eq!(s.eval([0.9999, 0.0]).unwrap(), t.values[255]);
    }

    #[test]
    fn bandlimited_lip_estimate_is_plausible() {
        // a 20-band function on a 256 grid changes slowly cell to cell; the
        // estimate should be well below the worst case 2 * 256
        let Signal::GridBandlimited(t) = Signal::bandlimited(3) else { panic!() };
        assert!(t.lip_estimate < 256.0, "lip estimate {}", t.lip_estimate);
        assert!(t.lip_estimate > 1.0, "lip estimate {}", t.lip_estimate);
    }

    #[test]
    fn noise_features_are_seeded_and_not_pointwise() {
        let s = Signal::PerNodeNoise { sigma: 1.0 };
        assert!(s.eval([0.5, 0.5]).is_err());
        assert!(!s.is_pointwise());
        let pts = Space::UnitSquareUniform.sample_points(64, 1);
        let a = s.features(&pts, 9).unwrap();
        let b = s.features(&pts, 9).unwrap();
        assert_eq!(a, b);
        let c = s.features(&pts, 10).unwrap();
        assert_ne!(a, c);
        let m = a.iter().sum::<f64>() / 64.0;
        assert!(m.abs() < 0.6);
        let reg = s.regularity(Space::UnitSquareUniform);
        assert!(reg.sup_f.is_infinite() && reg.lip_f.is_infinite());
    }

    #[test]
    fn product_features_match_pointwise_eval() {
        let pts = Space::UnitSquareUniform.sample_points(32, 4);
        let f = Signal::ClosedForm(ClosedForm::Product).features(&pts, 0).unwrap();
        for (i, &p) in pts.iter().enumerate() {
            assert_eq!(f[(i, 0)], p[0] * p[1]);
        }
    }
}
