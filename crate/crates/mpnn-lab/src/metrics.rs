//! Distances between node feature matrices and pooled outputs.
//!
//! Feature matrices are compared in the 2;inf norm, the root mean square
//! over nodes of per-node sup norms: the natural norm for "most nodes are
//! close, uniformly over channels". Pooled vectors are compared in plain
//! sup norm.

use crate::signal::Signal;
use crate::space::Point;
use crate::{Error, Result};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

/// Largest absolute entry; 0 for an empty slice.
pub fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Largest absolute entry of a matrix.
pub fn sup_norm_matrix(m: &Array2<f64>) -> f64 {
    m.iter().fold(0.0f64, |acc, x| acc.max(x.abs()))
}

/// `sqrt((1/N) sum_i max_c |f_ic|^2)`. The per-row values are summed in
/// sorted order so the result is bitwise invariant under row permutation.
/// An empty matrix has norm 0.
pub fn norm_2inf(f: &Array2<f64>) -> f64 {
    let n = f.nrows();
    if n == 0 {
        return 0.0;
    }
    let mut row_sups: Vec<f64> = f
        .rows()
        .into_iter()
        .map(|row| {
            let s = row.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            s * s
        })
        .collect();
    row_sups.sort_by(f64::total_cmp);
    (row_sups.iter().sum::<f64>() / n as f64).sqrt()
}

/// Evaluates a pointwise signal at a list of positions, one row per point.
/// An empty point list yields the 0 x output_dim matrix.
pub fn sample_signal(signal: &Signal, points: &[Point]) -> Result<Array2<f64>> {
    let mut out = Array2::zeros((points.len(), signal.output_dim()));
    for (i, &p) in points.iter().enumerate() {
        out[(i, 0)] = signal.eval(p)?;
    }
    Ok(out)
}

/// 2;inf distance between equal-shape feature matrices.
pub fn dist_x(f: &Array2<f64>, g: &Array2<f64>) -> Result<f64> {
    if f.dim() != g.dim() {
        return Err(Error::DimensionMismatch(format!(
            "feature matrices {:?} vs {:?}",
            f.dim(),
            g.dim()
        )));
    }
    Ok(norm_2inf(&(f - g)))
}

/// Sup-norm distance between pooled output vectors.
pub fn dist_pooled(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch(format!(
            "pooled vectors {} vs {}",
            u.len(),
            v.len()
        )));
    }
    Ok(u.iter().zip(v).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())))
}

/// Least-squares fit of log2(err) against log2(n).
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LoglogFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root mean square residual in log2 space.
    pub residual: f64,
}

/// Fits `log2 err = slope * log2 n + intercept` by ordinary least squares.
/// Needs at least two distinct sizes and strictly positive errors.
pub fn fit_loglog_slope(ns: &[u64], errs: &[f64]) -> Result<LoglogFit> {
    if ns.len() != errs.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} sizes vs {} errors",
            ns.len(),
            errs.len()
        )));
    }
    if ns.len() < 2 {
        return Err(Error::InvalidArgument("log-log fit needs at least two points".into()));
    }
    if ns.iter().any(|&n| n == 0) {
        return Err(Error::InvalidArgument("log-log fit needs positive sizes".into()));
    }
    if errs.iter().any(|&e| !(e > 0.0)) {
        return Err(Error::InvalidArgument(
            "log-log fit needs strictly positive errors".into(),
        ));
    }
    let xs: Vec<f64> = ns.iter().map(|&n| (n as f64).log2()).collect();
    let ys: Vec<f64> = errs.iter().map(|&e| e.log2()).collect();
    let k = xs.len() as f64;
    let mean_x = xs.iter().sum::<f64>() / k;
    let mean_y = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mean_x) * (x - mean_x)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidArgument("log-log fit needs at least two distinct sizes".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mean_x) * (y - mean_y)).sum();
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| {
            let r = y - (slope * x + intercept);
            r * r
        })
        .sum();
    Ok(LoglogFit { slope, intercept, residual: (ss_res / k).sqrt() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::ClosedForm;
    use ndarray::array;

    #[test]
    fn sup_norm_oracle() {
        assert_eq!(sup_norm(&[1.0, -3.0, 2.0]), 3.0);
        assert_eq!(sup_norm(&[]), 0.0);
        assert_eq!(sup_norm_matrix(&array![[1.0, -3.0], [2.0, 0.0]]), 3.0);
    }

    #[test]
    fn norm_2inf_oracle() {
        let f = array![[0.0], [2.0]];
        assert!((norm_2inf(&f) - std::f64::consts::SQRT_2).abs() < 1e-15);
        assert_eq!(norm_2inf(&Array2::<f64>::zeros((0, 3))), 0.0);
    }

    #[test]
    fn norm_2inf_never_exceeds_worst_row() {
        let f = array![[0.5, -0.1], [0.2, 0.9], [0.0, 0.0]];
        let worst = 0.9;
        assert!(norm_2inf(&f) <= worst + 1e-15);
        assert!(norm_2inf(&f) >= worst / (3.0f64).sqrt() - 1e-15);
    }

    #[test]
    fn norm_2inf_is_bitwise_permutation_invariant() {
        let f = array![[0.1, 0.7], [-0.3, 0.2], [0.9, -0.4], [0.05, 0.0]];
        let g = array![[0.9, -0.4], [0.05, 0.0], [0.1, 0.7], [-0.3, 0.2]];
        assert_eq!(norm_2inf(&f), norm_2inf(&g));
    }

    #[test]
    fn sample_signal_oracle_and_empty() {
        let s = Signal::ClosedForm(ClosedForm::Product);
        let pts = [[0.0, 0.0], [1.0, 1.0]];
        let f = sample_signal(&s, &pts).unwrap();
        assert_eq!(f, array![[0.0], [1.0]]);
        let empty = sample_signal(&s, &[]).unwrap();
        assert_eq!(empty.dim(), (0, 1));
    }

    #[test]
    fn dist_x_shift_and_partial_rows() {
        let f = array![[0.2], [0.4]];
        let delta = -0.35;
        let g = &f + delta;
        assert!((dist_x(&f, &g).unwrap() - delta.abs()) < 1e-15);
        // one row off by 1, one equal: sqrt(1/2)
        let h = array![[1.2], [0.4]];
        assert!((dist_x(&f, &h).unwrap() - 0.5f64.sqrt()).abs() < 1e-15);
        assert!(dist_x(&f, &Array2::zeros((3, 1))).is_err());
    }

    #[test]
    fn dist_x_metric_properties() {
        use rand::RngExt;
        let mut rng = crate::rng::chacha(99, &[0x11]);
        for _ in 0..50 {
            let mk = |rng: &mut rand_chacha::ChaCha8Rng| {
                Array2::from_shape_fn((5, 3), |_| rng.random::<f64>() * 2.0 - 1.0)
            };
            let (a, b, c) = (mk(&mut rng), mk(&mut rng), mk(&mut rng));
            let dab = dist_x(&a, &b).unwrap();
            let dba = dist_x(&b, &a).unwrap();
            let dac = dist_x(&a, &c).unwrap();
            let dcb = dist_x(&c, &b).unwrap();
            assert_eq!(dab, dba);
            assert!(dab <= dac + dcb + 1e-12);
            assert_eq!(dist_x(&a, &a).unwrap(), 0.0);
        }
    }

    #[test]
    fn dist_pooled_oracle() {
        assert_eq!(dist_pooled(&[1.0, 2.0], &[0.5, 4.0]).unwrap(), 2.0);
        assert!(dist_pooled(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn loglog_fit_exact_power_law() {
        let ns: Vec<u64> = (5..=11).map(|k| 1u64 << k).collect();
        let errs: Vec<f64> = ns.iter().map(|&n| 3.0 / (n as f64).sqrt()).collect();
        let fit = fit_loglog_slope(&ns, &errs).unwrap();
        assert!((fit.slope + 0.5).abs() < 1e-12, "slope {}", fit.slope);
        assert!((fit.intercept - 3.0f64.log2()).abs() < 1e-10);
        assert!(fit.residual < 1e-12);
    }

    #[test]
    fn loglog_fit_recovers_affine_relation() {
        let ns: Vec<u64> = vec![16, 64, 256, 1024, 4096];
        let slope = -0.83;
        let intercept = 1.7;
        let errs: Vec<f64> =
            ns.iter().map(|&n| (slope * (n as f64).log2() + intercept).exp2()).collect();
        let fit = fit_loglog_slope(&ns, &errs).unwrap();
        assert!((fit.slope - slope).abs() < 1e-10);
        assert!((fit.intercept - intercept).abs() < 1e-10);
        assert!(fit.residual < 1e-10);
    }

    #[test]
    fn loglog_fit_rejects_degenerate_inputs() {
        assert!(fit_loglog_slope(&[8], &[0.5]).is_err());
        assert!(fit_loglog_slope(&[8, 8], &[0.5, 0.25]).is_err());
        assert!(fit_loglog_slope(&[8, 16], &[0.5, 0.0]).is_err());
        assert!(fit_loglog_slope(&[8, 16], &[0.5]).is_err());
        assert!(fit_loglog_slope(&[0, 16], &[0.5, 0.2]).is_err());
    }
}
