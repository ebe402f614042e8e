//! Sampled kernel graphs.
//!
//! `sample_graph` draws node positions i.i.d. from the space, attaches
//! features from a signal, and fills the weight matrix with exact kernel
//! evaluations `w_ij = W(X_i, X_j)` (in particular `w_ii = W(x,x)`, so ball
//! kernels carry self-loops).
//!
//! Aggregation order: every weighted sum over neighbors runs in the
//! canonical node order (positions sorted by [`point_cmp`]), which depends
//! only on where nodes sit, not on how they are labeled. That makes message
//! passing exactly permutation-equivariant and makes a full-size subsample
//! (a relabeling) reproduce outputs bit for bit.

use crate::kernel::Kernel;
use crate::signal::Signal;
use crate::space::{point_cmp, Point, Space};
use crate::rng::{self, stream};
use crate::{Error, Result};
use ndarray::Array2;
use rayon::prelude::*;
use serde::Deserialize;
use std::io::{BufRead, Write};

/// Node count up to which ball-kernel weights are stored densely.
pub const DENSE_LIMIT: usize = 4096;

/// Weight storage. Compactly supported kernels switch to compressed sparse
/// rows above [`DENSE_LIMIT`] nodes; a dense matrix at the full experiment
/// scale would need gigabytes.
#[derive(Debug, Clone)]
pub enum Weights {
    Dense(Array2<f64>),
    Csr { row_ptr: Vec<usize>, cols: Vec<u32>, vals: CsrVals },
    /// All pairs share one value (the constant kernel).
    Const { c: f64 },
}

/// Edge values of a sparse row block; 0/1 kernels store no per-edge data.
#[derive(Debug, Clone)]
pub enum CsrVals {
    Uniform(f64),
    PerEdge(Vec<f64>),
}

#[derive(Debug, Clone)]
pub struct SampledGraph {
    pub space: Space,
    pub nodes: Vec<Point>,
    /// N x F node features.
    pub features: Array2<f64>,
    pub weights: Weights,
    /// Normalized degrees `(1/N) sum_j w_ij`, summed in canonical order.
    pub degrees: Vec<f64>,
    /// Raw row sums `sum_j w_ij` (the aggregation denominators).
    agg_deg: Vec<f64>,
    /// Node indices sorted by position; the canonical aggregation order.
    canon: Vec<u32>,
}

fn canonical_order(nodes: &[Point]) -> Vec<u32> {
    let mut order: Vec<u32> = (0..nodes.len() as u32).collect();
    order.sort_by(|&a, &b| point_cmp(&nodes[a as usize], &nodes[b as usize]));
    order
}

impl SampledGraph {
    pub fn n(&self) -> usize {
        self.nodes.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.ncols()
    }

    /// Single-entry access; O(log deg) for sparse storage. Test/oracle path.
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        match &self.weights {
            Weights::Dense(w) => w[(i, j)],
            Weights::Const { c } => *c,
            Weights::Csr { row_ptr, cols, vals } => {
                let lo = row_ptr[i];
                let hi = row_ptr[i + 1];
                // columns are sorted by node position, not index
                for k in lo..hi {
                    if cols[k] as usize == j {
                        return match vals {
                            CsrVals::Uniform(v) => *v,
                            CsrVals::PerEdge(v) => v[k],
                        };
                    }
                }
                0.0
            }
        }
    }

    /// Visits row `i` in canonical order, yielding `(j, w_ij)`. Sparse rows
    /// skip zero weights; dense rows include them (adding zero terms leaves
    /// nonnegative-weight sums bit-identical).
    #[inline]
    pub fn for_each_in_row<F: FnMut(usize, f64)>(&self, i: usize, mut f: F) {
        match &self.weights {
            Weights::Dense(w) => {
                for &j in &self.canon {
                    f(j as usize, w[(i, j as usize)]);
                }
            }
            Weights::Const { c } => {
                for &j in &self.canon {
                    f(j as usize, *c);
                }
            }
            Weights::Csr { row_ptr, cols, vals } => {
                for k in row_ptr[i]..row_ptr[i + 1] {
                    let v = match vals {
                        CsrVals::Uniform(v) => *v,
                        CsrVals::PerEdge(v) => v[k],
                    };
                    f(cols[k] as usize, v);
                }
            }
        }
    }

    /// Aggregation denominator `sum_j w_ij` of node `i`.
    pub fn agg_degree(&self, i: usize) -> f64 {
        self.agg_deg[i]
    }

    pub fn min_degree(&self) -> f64 {
        self.degrees.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn edge_count(&self) -> usize {
        match &self.weights {
            Weights::Dense(w) => w.iter().filter(|&&v| v != 0.0).count(),
            Weights::Const { .. } => self.n() * self.n(),
            Weights::Csr { cols, .. } => cols.len(),
        }
    }
}

fn degrees_from_rows(g: &mut SampledGraph) {
    let n = g.n();
    let mut agg = vec![0.0f64; n];
    for (i, a) in agg.iter_mut().enumerate() {
        let mut s = 0.0;
        g.for_each_in_row(i, |_, w| s += w);
        *a = s;
    }
    g.degrees = agg.iter().map(|&d| d / n as f64).collect();
    g.agg_deg = agg;
}

/// Samples an `n`-node graph from the kernel model. Positions come from the
/// `NODES` stream of `seed`, noise features from the independent `FEATURES`
/// stream, so the same layout can carry different signals.
pub fn sample_graph(
    kernel: &Kernel,
    space: Space,
    n: usize,
    signal: &Signal,
    seed: u64,
) -> Result<SampledGraph> {
    kernel.validate()?;
    if n == 0 {
        return Err(Error::InvalidArgument("cannot sample an empty graph".into()));
    }
    let nodes = space.sample_points(n, seed);
    let features = signal.features(&nodes, seed)?;
    let canon = canonical_order(&nodes);

    let weights = if matches!(kernel, Kernel::Constant { .. }) {
        Weights::Const { c: kernel.sup() }
    } else if n <= DENSE_LIMIT {
        let mut w = Array2::zeros((n, n));
        let rows: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| (0..n).map(|j| kernel.eval(space, nodes[i], nodes[j])).collect())
            .collect();
        for (i, row) in rows.into_iter().enumerate() {
            for (j, v) in row.into_iter().enumerate() {
                w[(i, j)] = v;
            }
        }
        Weights::Dense(w)
    } else {
        // sparse rows with columns in canonical order
        let rows: Vec<(Vec<u32>, Vec<f64>)> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut cols = Vec::new();
                let mut vals = Vec::new();
                for &j in &canon {
                    let w = kernel.eval(space, nodes[i], nodes[j as usize]);
                    if w != 0.0 {
                        cols.push(j);
                        vals.push(w);
                    }
                }
                (cols, vals)
            })
            .collect();
        let mut row_ptr = Vec::with_capacity(n + 1);
        row_ptr.push(0usize);
        let nnz: usize = rows.iter().map(|(c, _)| c.len()).sum();
        let mut cols = Vec::with_capacity(nnz);
        let mut vals = Vec::with_capacity(if kernel.is_zero_one() { 0 } else { nnz });
        for (c, v) in rows {
            cols.extend_from_slice(&c);
            if !kernel.is_zero_one() {
                vals.extend_from_slice(&v);
            }
            row_ptr.push(cols.len());
        }
        let vals = if kernel.is_zero_one() { CsrVals::Uniform(1.0) } else { CsrVals::PerEdge(vals) };
        Weights::Csr { row_ptr, cols, vals }
    };

    let mut g = SampledGraph {
        space,
        nodes,
        features,
        weights,
        degrees: Vec::new(),
        agg_deg: Vec::new(),
        canon,
    };
    degrees_from_rows(&mut g);
    Ok(g)
}

/// Builds a graph from explicit parts; the oracle/test constructor.
pub fn from_parts(
    space: Space,
    nodes: Vec<Point>,
    weights: Array2<f64>,
    features: Array2<f64>,
) -> Result<SampledGraph> {
    let n = nodes.len();
    if n == 0 {
        return Err(Error::InvalidArgument("empty node list".into()));
    }
    if weights.nrows() != n || weights.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "weights are {}x{}, expected {n}x{n}",
            weights.nrows(),
            weights.ncols()
        )));
    }
    if features.nrows() != n {
        return Err(Error::DimensionMismatch(format!(
            "features have {} rows, expected {n}",
            features.nrows()
        )));
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::InvalidArgument("weights must be finite and nonnegative".into()));
    }
    let canon = canonical_order(&nodes);
    let mut g = SampledGraph {
        space,
        nodes,
        features,
        weights: Weights::Dense(weights),
        degrees: Vec::new(),
        agg_deg: Vec::new(),
        canon,
    };
    degrees_from_rows(&mut g);
    Ok(g)
}

/// Draws a uniformly random `m`-subset of the nodes (in random order; `m`
/// equal to the parent size yields a random relabeling). Weights are the
/// exact pairwise values, so extraction re-derives them; positions and
/// feature rows are inherited bit-exactly. Returns the subgraph and the map
/// from subgraph index to parent index.
pub fn subsample_graph(
    parent: &SampledGraph,
    m: usize,
    seed: u64,
) -> Result<(SampledGraph, Vec<u32>)> {
    let n = parent.n();
    if m == 0 || m > n {
        return Err(Error::InvalidArgument(format!(
            "subsample size {m} must be in 1..={n}"
        )));
    }
    let mut rng = rng::chacha(seed, &[stream::SUBSAMPLE]);
    let index_map: Vec<u32> =
        rand::seq::index::sample(&mut rng, n, m).into_iter().map(|i| i as u32).collect();

    let nodes: Vec<Point> = index_map.iter().map(|&p| parent.nodes[p as usize]).collect();
    let mut features = Array2::zeros((m, parent.feature_dim()));
    for (si, &p) in index_map.iter().enumerate() {
        features.row_mut(si).assign(&parent.features.row(p as usize));
    }
    let canon = canonical_order(&nodes);

    // parent index -> sub index lookup
    let mut back = vec![u32::MAX; n];
    for (si, &p) in index_map.iter().enumerate() {
        back[p as usize] = si as u32;
    }

    let weights = match &parent.weights {
        Weights::Const { c } => Weights::Const { c: *c },
        Weights::Dense(w) => {
            let mut sub = Array2::zeros((m, m));
            for (si, &pi) in index_map.iter().enumerate() {
                for (sj, &pj) in index_map.iter().enumerate() {
                    sub[(si, sj)] = w[(pi as usize, pj as usize)];
                }
            }
            Weights::Dense(sub)
        }
        Weights::Csr { .. } => {
            // filtering a position-sorted row keeps it position-sorted
            let mut row_ptr = Vec::with_capacity(m + 1);
            row_ptr.push(0usize);
            let mut cols = Vec::new();
            let mut vals = Vec::new();
            let mut uniform = true;
            for &pi in &index_map {
                parent.for_each_in_row(pi as usize, |pj, w| {
                    let sj = back[pj];
                    if sj != u32::MAX {
                        cols.push(sj);
                        vals.push(w);
                        if w != 1.0 {
                            uniform = false;
                        }
                    }
                });
                row_ptr.push(cols.len());
            }
            let vals =
                if uniform { CsrVals::Uniform(1.0) } else { CsrVals::PerEdge(vals) };
            if m <= DENSE_LIMIT {
                let mut sub = Array2::zeros((m, m));
                for si in 0..m {
                    for k in row_ptr[si]..row_ptr[si + 1] {
                        let v = match &vals {
                            CsrVals::Uniform(v) => *v,
                            CsrVals::PerEdge(v) => v[k],
                        };
                        sub[(si, cols[k] as usize)] = v;
                    }
                }
                Weights::Dense(sub)
            } else {
                Weights::Csr { row_ptr, cols, vals }
            }
        }
    };

    let mut g = SampledGraph {
        space: parent.space,
        nodes,
        features,
        weights,
        degrees: Vec::new(),
        agg_deg: Vec::new(),
        canon,
    };
    degrees_from_rows(&mut g);
    Ok((g, index_map))
}

/// Writes the graph as JSON: `{"nodes": [[x, y], ...], "edges_coo":
/// [[i, j, w], ...], "features": [[...], ...]}` with 0-based indices.
/// Streamed, so large sparse graphs do not build an in-memory tree.
pub fn write_json<W: Write>(g: &SampledGraph, mut w: W) -> Result<()> {
    let dim = g.space.coord_dim();
    w.write_all(b"{\"nodes\":[")?;
    for (i, p) in g.nodes.iter().enumerate() {
        if i > 0 {
            w.write_all(b",")?;
        }
        if dim == 1 {
            serde_json::to_writer(&mut w, &[p[0]])?;
        } else {
            serde_json::to_writer(&mut w, &[p[0], p[1]])?;
        }
    }
    w.write_all(b"],\"edges_coo\":[")?;
    let mut first = true;
    for i in 0..g.n() {
        let mut err = None;
        g.for_each_in_row(i, |j, v| {
            if err.is_some() {
                return;
            }
            let sep = if first { "" } else { "," };
            first = false;
            if let Err(e) = write!(w, "{sep}[{i},{j},") {
                err = Some(e);
                return;
            }
            if let Err(e) =
                serde_json::to_writer(&mut w, &v).map_err(std::io::Error::other)
            {
                err = Some(e);
                return;
            }
            if let Err(e) = w.write_all(b"]") {
                err = Some(e);
            }
        });
        if let Some(e) = err {
            return Err(e.into());
        }
    }
    w.write_all(b"],\"features\":[")?;
    for i in 0..g.n() {
        if i > 0 {
            w.write_all(b",")?;
        }
        let row: Vec<f64> = g.features.row(i).to_vec();
        serde_json::to_writer(&mut w, &row)?;
    }
    w.write_all(b"]}")?;
    Ok(())
}

#[derive(Deserialize)]
struct RawGraph {
    nodes: Vec<Vec<f64>>,
    edges_coo: Vec<(u64, u64, f64)>,
    features: Vec<Vec<f64>>,
}

/// Reads a graph written by [`write_json`]. The space is inferred from the
/// node coordinate arity. Weights round-trip bit-exactly.
pub fn read_json<R: BufRead>(r: R) -> Result<SampledGraph> {
    let raw: RawGraph = serde_json::from_reader(r)?;
    let n = raw.nodes.len();
    if n == 0 {
        return Err(Error::InvalidArgument("graph JSON has no nodes".into()));
    }
    let dim = raw.nodes[0].len();
    let space = match dim {
        1 => Space::UnitIntervalUniform,
        2 => Space::UnitSquareUniform,
        d => return Err(Error::InvalidArgument(format!("unsupported node arity {d}"))),
    };
    let mut nodes = Vec::with_capacity(n);
    for c in &raw.nodes {
        if c.len() != dim {
            return Err(Error::InvalidArgument("mixed node coordinate arity".into()));
        }
        nodes.push(if dim == 1 { [c[0], 0.0] } else { [c[0], c[1]] });
    }
    let fdim = raw.features.first().map(|r| r.len()).unwrap_or(0);
    if raw.features.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} feature rows for {n} nodes",
            raw.features.len()
        )));
    }
    let mut features = Array2::zeros((n, fdim));
    for (i, row) in raw.features.iter().enumerate() {
        if row.len() != fdim {
            return Err(Error::InvalidArgument("ragged feature rows".into()));
        }
        for (j, &v) in row.iter().enumerate() {
            features[(i, j)] = v;
        }
    }
    let canon = canonical_order(&nodes);
    let weights = if n <= DENSE_LIMIT {
        let mut w = Array2::zeros((n, n));
        for &(i, j, v) in &raw.edges_coo {
            let (i, j) = (i as usize, j as usize);
            if i >= n || j >= n {
                return Err(Error::InvalidArgument(format!("edge ({i},{j}) out of range")));
            }
            w[(i, j)] = v;
        }
        Weights::Dense(w)
    } else {
        let mut rows: Vec<Vec<(u32, f64)>> = vec![Vec::new(); n];
        for &(i, j, v) in &raw.edges_coo {
            let (i, j) = (i as usize, j as usize);
            if i >= n || j >= n {
                return Err(Error::InvalidArgument(format!("edge ({i},{j}) out of range")));
            }
            if v != 0.0 {
                rows[i].push((j as u32, v));
            }
        }
        let mut rank = vec![0u32; n];
        for (r, &j) in canon.iter().enumerate() {
            rank[j as usize] = r as u32;
        }
        let mut row_ptr = vec![0usize];
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        let mut uniform = true;
        for row in rows.iter_mut() {
            row.sort_by_key(|&(j, _)| rank[j as usize]);
            for &(j, v) in row.iter() {
                cols.push(j);
                vals.push(v);
                if v != 1.0 {
                    uniform = false;
                }
            }
            row_ptr.push(cols.len());
        }
        let vals = if uniform { CsrVals::Uniform(1.0) } else { CsrVals::PerEdge(vals) };
        Weights::Csr { row_ptr, cols, vals }
    };
    let mut g = SampledGraph {
        space,
        nodes,
        features,
        weights,
        degrees: Vec::new(),
        agg_deg: Vec::new(),
        canon,
    };
    degrees_from_rows(&mut g);
    Ok(g)
}
