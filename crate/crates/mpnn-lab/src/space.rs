//! Metric measure spaces that nodes are drawn from.
//!
//! Points are stored as `[f64; 2]`; the unit interval uses the first
//! coordinate and keeps the second at zero, so one point type serves both
//! built-ins without heap allocation.

use crate::rng::{self, stream};
use crate::{Error, Result};
use rand::RngExt;
use serde::{Deserialize, Serialize};

/// A point of the space, as a fixed-size coordinate vector.
pub type Point = [f64; 2];

/// Built-in metric measure spaces with uniform probability measure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Space {
    UnitSquareUniform,
    UnitIntervalUniform,
}

impl Space {
    /// Number of meaningful coordinates of a [`Point`].
    pub fn coord_dim(self) -> usize {
        match self {
            Space::UnitSquareUniform => 2,
            Space::UnitIntervalUniform => 1,
        }
    }

    /// Minkowski dimension; drives the `sqrt(dim)` factors of the covering
    /// bounds.
    pub fn minkowski_dim(self) -> f64 {
        self.coord_dim() as f64
    }

    /// Diameter under the normalization used by the covering-number
    /// estimates: each axis has unit length, so both built-ins report 1.
    pub fn diameter(self) -> f64 {
        1.0
    }

    /// Euclidean distance.
    pub fn distance(self, a: Point, b: Point) -> f64 {
        match self {
            Space::UnitSquareUniform => {
                let dx = a[0] - b[0];
                let dy = a[1] - b[1];
                (dx * dx + dy * dy).sqrt()
            }
            Space::UnitIntervalUniform => (a[0] - b[0]).abs(),
        }
    }

    /// Draws `n` i.i.d. points from the uniform measure.
    ///
    /// Identical `(space, n, seed)` yields the bit-identical point list, and
    /// the list for a smaller `n` is a prefix of the list for a larger one,
    /// so graphs of different sizes built from the same seed share their
    /// leading nodes.
    pub fn sample_points(self, n: usize, seed: u64) -> Vec<Point> {
        let mut rng = rng::chacha(seed, &[stream::NODES]);
        (0..n)
            .map(|_| match self {
                Space::UnitSquareUniform => [rng.random::<f64>(), rng.random::<f64>()],
                Space::UnitIntervalUniform => [rng.random::<f64>(), 0.0],
            })
            .collect()
    }

    /// Validates that a point lies in the support of the measure.
    pub fn contains(self, p: Point) -> bool {
        let in_unit = |v: f64| (0.0..=1.0).contains(&v);
        match self {
            Space::UnitSquareUniform => in_unit(p[0]) && in_unit(p[1]),
            Space::UnitIntervalUniform => in_unit(p[0]) && p[1] == 0.0,
        }
    }

    pub fn require_contains(self, p: Point) -> Result<()> {
        if self.contains(p) {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "point ({}, {}) lies outside {self:?}",
                p[0], p[1]
            )))
        }
    }
}

/// Total order on points by coordinate bit patterns. Sampled coordinates are
/// finite and nonnegative, so this agrees with the numeric order; it is the
/// canonical node order used to fix floating-point summation order in
/// aggregation (see [`crate::graph`]).
pub fn point_cmp(a: &Point, b: &Point) -> std::cmp::Ordering {
    a[0].total_cmp(&b[0]).then_with(|| a[1].total_cmp(&b[1]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sampling_is_deterministic_and_prefix_stable() {
        let a = Space::UnitSquareUniform.sample_points(100, 11);
        let b = Space::UnitSquareUniform.sample_points(100, 11);
        assert_eq!(a, b);
        let prefix = Space::UnitSquareUniform.sample_points(40, 11);
        assert_eq!(&a[..40], &prefix[..]);
        assert!(a.iter().all(|&p| Space::UnitSquareUniform.contains(p)));
        let c = Space::UnitSquareUniform.sample_points(100, 12);
        assert_ne!(a, c);
        assert!(Space::UnitSquareUniform.sample_points(0, 1).is_empty());
    }

    #[test]
    fn interval_points_use_one_coordinate() {
        let pts = Space::UnitIntervalUniform.sample_points(50, 3);
        assert!(pts.iter().all(|p| p[1] == 0.0 && (0.0..=1.0).contains(&p[0])));
    }

    #[test]
    fn coordinate_means_match_uniform_law() {
        // law of large numbers probe at n = 1e5
        let pts = Space::UnitSquareUniform.sample_points(100_000, 5);
        let mx = pts.iter().map(|p| p[0]).sum::<f64>() / pts.len() as f64;
        let my = pts.iter().map(|p| p[1]).sum::<f64>() / pts.len() as f64;
        assert!((mx - 0.5).abs() < 0.01, "mean x = {mx}");
        assert!((my - 0.5).abs() < 0.01, "mean y = {my}");
    }

    #[test]
    fn empirical_measure_passes_chi_square_on_grid() {
        // 4x4 cells, 15 degrees of freedom; critical value at p = 0.001.
        let n = 100_000;
        let pts = Space::UnitSquareUniform.sample_points(n, 17);
        let mut counts = [0u64; 16];
        for p in pts {
            let cx = ((p[0] * 4.0) as usize).min(3);
            let cy = ((p[1] * 4.0) as usize).min(3);
            counts[4 * cy + cx] += 1;
        }
        let expected = n as f64 / 16.0;
        let stat: f64 = counts
            .iter()
            .map(|&c| {
                let d = c as f64 - expected;
                d * d / expected
            })
            .sum();
        assert!(stat < 37.6973, "chi-square statistic {stat} too large");
    }

    #[test]
    fn distances_are_euclidean() {
        let d = Space::UnitSquareUniform.distance([0.0, 0.0], [3.0 / 5.0, 4.0 / 5.0]);
        assert!((d - 1.0).abs() < 1e-15);
        assert_eq!(Space::UnitIntervalUniform.distance([0.2, 0.0], [0.9, 0.0]), 0.7);
        assert_eq!(Space::UnitSquareUniform.diameter(), 1.0);
        assert_eq!(Space::UnitSquareUniform.minkowski_dim(), 2.0);
    }

    #[test]
    fn triangle_inequality_on_random_triples() {
        let pts = Space::UnitSquareUniform.sample_points(300, 23);
        for w in pts.chunks_exact(3) {
            let (a, b, c) = (w[0], w[1], w[2]);
            let s = Space::UnitSquareUniform;
            assert!(s.distance(a, c) <= s.distance(a, b) + s.distance(b, c) + 1e-12);
        }
    }
}
