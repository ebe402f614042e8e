//! The continuum limit of the mean-aggregation network, evaluated by
//! quadrature, plus the large-graph proxy used by the experiments.
//!
//! A continuum layer maps a signal f to psi(f(x), m(x)) with
//! `m(x) = (1/d_W(x)) int W(x, y) phi(f(x), f(y)) dP(y)`. Intermediate
//! signals are represented by their values on the quadrature node set;
//! the degree is estimated from the same node set, so constant messages
//! aggregate to themselves exactly (the 1/Q quadrature weights cancel
//! between numerator and degree).

use crate::graph::SampledGraph;
use crate::kernel::{Kernel, Quadrature};
use crate::metrics::sample_signal;
use crate::mlp::MlpSpec;
use crate::mpnn::{gmpnn_forward, global_pool, MessageEngine, MpnnSpec};
use crate::signal::Signal;
use crate::space::{Point, Space};
use crate::{Error, Result};
use ndarray::Array2;
use rayon::prelude::*;
use std::sync::OnceLock;

fn aggregate_at(
    engine: &MessageEngine,
    kernel: &Kernel,
    space: Space,
    x: Point,
    f_self: &[f64],
    quad_points: &[Point],
    f_quad: &Array2<f64>,
    table: Option<&Array2<f64>>,
) -> Result<Vec<f64>> {
    let w_row: Vec<f64> = quad_points.iter().map(|&y| kernel.eval(space, x, y)).collect();
    let degree: f64 = w_row.iter().sum();
    if degree == 0.0 {
        return Err(Error::DegenerateDegree(x[0], x[1]));
    }
    engine.aggregate(
        f_self,
        f_quad,
        table,
        |sink| {
            for (j, &w) in w_row.iter().enumerate() {
                if w != 0.0 {
                    sink(j, w);
                }
            }
        },
        degree,
    )
}

/// Quadrature estimate of `(1/d_W(x)) int W(x, y) phi(f(x), f(y)) dP(y)`,
/// with the degree estimated from the same quadrature nodes.
pub fn continuous_aggregate(
    kernel: &Kernel,
    space: Space,
    signal: &Signal,
    phi: &MlpSpec,
    x: Point,
    quad: &Quadrature,
) -> Result<Vec<f64>> {
    kernel.validate()?;
    quad.validate()?;
    phi.validate()?;
    space.require_contains(x)?;
    let width = signal.output_dim();
    if phi.input_dim() != 2 * width {
        return Err(Error::DimensionMismatch(format!(
            "message map takes {} inputs, signal pairs have 2F = {}",
            phi.input_dim(),
            2 * width
        )));
    }
    let pts = quad.points(space);
    let f_quad = sample_signal(signal, &pts)?;
    let f_x = vec![signal.eval(x)?];
    let engine = MessageEngine::new(phi, width);
    let table = engine.source_table(&f_quad);
    aggregate_at(&engine, kernel, space, x, &f_x, &pts, &f_quad, table.as_ref())
}

/// Full continuum forward pass, returning final-layer values at
/// `eval_points` (one row each).
///
/// Intermediate signals live on the quadrature node set; each layer costs
/// one kernel evaluation per (destination, quadrature node) pair. Layers
/// before the last also refresh the quadrature set itself, so deep nets
/// pay Q^2 per inner layer.
pub fn cmpnn_forward(
    net: &MpnnSpec,
    kernel: &Kernel,
    space: Space,
    signal: &Signal,
    eval_points: &[Point],
    quad: &Quadrature,
) -> Result<Array2<f64>> {
    net.validate()?;
    kernel.validate()?;
    quad.validate()?;
    if net.input_dim() != signal.output_dim() {
        return Err(Error::DimensionMismatch(format!(
            "network takes width {}, signal produces {}",
            net.input_dim(),
            signal.output_dim()
        )));
    }
    for &x in eval_points {
        space.require_contains(x)?;
    }
    let pts = quad.points(space);
    let mut f_quad = sample_signal(signal, &pts)?;
    let mut f_eval = sample_signal(signal, eval_points)?;

    let depth = net.layers.len();
    for (l, layer) in net.layers.iter().enumerate() {
        let width = f_quad.ncols();
        let engine = MessageEngine::new(&layer.message, width);
        let table = engine.source_table(&f_quad);
        let step = |dst: &[Point], f_dst: &Array2<f64>| -> Result<Array2<f64>> {
            let rows: Vec<Vec<f64>> = dst
                .par_iter()
                .enumerate()
                .map(|(i, &x)| {
                    let f_self = f_dst.row(i);
                    let f_self = f_self.as_slice().expect("standard layout");
                    let m = aggregate_at(
                        &engine, kernel, space, x, f_self, &pts, &f_quad, table.as_ref(),
                    )?;
                    let mut pair = Vec::with_capacity(width + m.len());
                    pair.extend_from_slice(f_self);
                    pair.extend_from_slice(&m);
                    layer.update.forward(&pair)
                })
                .collect::<Result<Vec<_>>>()?;
            let mut out = Array2::zeros((dst.len(), layer.update.output_dim()));
            for (i, row) in rows.into_iter().enumerate() {
                for (c, v) in row.into_iter().enumerate() {
                    out[(i, c)] = v;
                }
            }
            Ok(out)
        };
        let next_eval = step(eval_points, &f_eval)?;
        // the last layer's quadrature values are never read again
        if l + 1 < depth {
            f_quad = step(&pts, &f_quad)?;
        }
        f_eval = next_eval;
    }
    Ok(f_eval)
}

/// Pooled continuum output: the quadrature mean of the forward values on
/// the quadrature node set itself.
pub fn cmpnn_pool(
    net: &MpnnSpec,
    kernel: &Kernel,
    space: Space,
    signal: &Signal,
    quad: &Quadrature,
) -> Result<Vec<f64>> {
    let pts = quad.points(space);
    let f = cmpnn_forward(net, kernel, space, signal, &pts, quad)?;
    global_pool(&f)
}

/// Rows of `m` selected by a subsample index map.
pub fn restrict_rows(m: &Array2<f64>, index_map: &[u32]) -> Array2<f64> {
    let mut out = Array2::zeros((index_map.len(), m.ncols()));
    for (r, &p) in index_map.iter().enumerate() {
        out.row_mut(r).assign(&m.row(p as usize));
    }
    out
}

/// The "largest graph as continuum proxy": forward outputs on a large
/// parent graph, computed once and shared. Convergence experiments compare
/// subsampled graphs against these rows instead of quadrature integrals.
pub struct LargeGraphReference<'a> {
    pub net: &'a MpnnSpec,
    pub parent: &'a SampledGraph,
    cell: OnceLock<Array2<f64>>,
}

impl<'a> LargeGraphReference<'a> {
    pub fn new(net: &'a MpnnSpec, parent: &'a SampledGraph) -> LargeGraphReference<'a> {
        LargeGraphReference { net, parent, cell: OnceLock::new() }
    }

    /// Cached per-node outputs on the parent graph.
    pub fn outputs(&self) -> Result<&Array2<f64>> {
        if let Some(v) = self.cell.get() {
            return Ok(v);
        }
        let v = gmpnn_forward(self.net, self.parent)?;
        Ok(self.cell.get_or_init(|| v))
    }

    /// Reference rows at a subsample's nodes, in subsample order.
    pub fn restricted(&self, index_map: &[u32]) -> Result<Array2<f64>> {
        Ok(restrict_rows(self.outputs()?, index_map))
    }
}
