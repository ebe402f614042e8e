//! Message passing with degree-normalized mean aggregation on sampled
//! graphs.
//!
//! One layer maps node features `f` to `psi(f_i, m_i)` where `m_i =
//! (1/d_i) sum_j w_ij phi(f_i, f_j)` and `d_i = sum_j w_ij`. All neighbor
//! sums run in the graph's canonical node order, so outputs are exactly
//! permutation-equivariant (see [`crate::graph`]).

use crate::graph::SampledGraph;
use crate::mlp::{Activation, MlpJson, MlpLayer, MlpSpec};
use crate::rng::{self, stream};
use crate::{Error, Result};
use ndarray::Array2;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// One MPNN layer: a message map on feature pairs and an update map on
/// (feature, aggregated message) pairs.
#[derive(Debug, Clone)]
pub struct MpnnLayer {
    /// `phi`: takes the concatenation `(f_i, f_j)` of length `2F`.
    pub message: MlpSpec,
    /// `psi`: takes the concatenation `(f_i, m_i)` of length `F + H`.
    pub update: MlpSpec,
}

#[derive(Debug, Clone)]
pub struct MpnnSpec {
    pub layers: Vec<MpnnLayer>,
}

/// Per-layer constants consumed by the bound machinery.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LayerConstants {
    pub lip_phi: f64,
    pub lip_psi: f64,
    pub bias_phi: f64,
    pub bias_psi: f64,
}

impl MpnnLayer {
    pub fn constants(&self) -> LayerConstants {
        LayerConstants {
            lip_phi: self.message.lipschitz_upper(),
            lip_psi: self.update.lipschitz_upper(),
            bias_phi: self.message.formal_bias(),
            bias_psi: self.update.formal_bias(),
        }
    }
}

impl MpnnSpec {
    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::InvalidArgument("MPNN needs at least one layer".into()));
        }
        let mut f = self.input_dim();
        for (t, l) in self.layers.iter().enumerate() {
            l.message.validate()?;
            l.update.validate()?;
            if l.message.input_dim() != 2 * f {
                return Err(Error::DimensionMismatch(format!(
                    "layer {t}: message input {} vs 2F = {}",
                    l.message.input_dim(),
                    2 * f
                )));
            }
            let h = l.message.output_dim();
            if l.update.input_dim() != f + h {
                return Err(Error::DimensionMismatch(format!(
                    "layer {t}: update input {} vs F + H = {}",
                    l.update.input_dim(),
                    f + h
                )));
            }
            f = l.update.output_dim();
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map(|l| l.message.input_dim() / 2).unwrap_or(0)
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map(|l| l.update.output_dim()).unwrap_or(0)
    }

    /// Feature widths `[F_0, ..., F_T]` along the layer stack.
    pub fn feature_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.input_dim()];
        dims.extend(self.layers.iter().map(|l| l.update.output_dim()));
        dims
    }

    pub fn constants(&self) -> Vec<LayerConstants> {
        self.layers.iter().map(MpnnLayer::constants).collect()
    }
}

/// Shared mean-aggregation core, used on sampled graphs here and on
/// quadrature node sets in [`crate::cmpnn`]; sharing the arithmetic makes
/// the two forward passes bitwise comparable on identical inputs.
///
/// Messages accumulate relative to the self-message phi(f_i, f_i):
/// m_i = phi(f_i, f_i) + (1/d_i) sum_j w_ij (phi(f_i, f_j) - phi(f_i, f_i)).
/// Algebraically identical to the plain weighted mean, but the degree
/// cancels exactly in floating point when the integrand is constant, so
/// aggregating a constant returns that constant bit for bit.
pub(crate) struct MessageEngine<'a> {
    spec: &'a MlpSpec,
    width: usize,
    h: usize,
    // affine messages pull out of the neighbor sum: phi(f_i, f_j) =
    // A f_i + B f_j + c, so only B f_j varies with j
    affine: Option<(ndarray::ArrayView2<'a, f64>, ndarray::ArrayView2<'a, f64>, &'a [f64])>,
}

impl<'a> MessageEngine<'a> {
    pub(crate) fn new(message: &'a MlpSpec, width: usize) -> MessageEngine<'a> {
        let affine = message.affine_parts().map(|(wm, bm)| {
            (wm.slice(ndarray::s![.., ..width]), wm.slice(ndarray::s![.., width..]), bm)
        });
        MessageEngine { spec: message, width, h: message.output_dim(), affine }
    }

    fn half_matvec(&self, m: &ndarray::ArrayView2<f64>, x: &[f64], r: usize) -> f64 {
        let mut acc = 0.0;
        for c in 0..self.width {
            acc += m[(r, c)] * x[c];
        }
        acc
    }

    /// Per-source message parts that do not depend on the receiving point
    /// (affine messages only).
    pub(crate) fn source_table(&self, sources: &Array2<f64>) -> Option<Array2<f64>> {
        self.affine.as_ref().map(|(_, b, _)| {
            let mut t = Array2::zeros((sources.nrows(), self.h));
            for j in 0..sources.nrows() {
                let row = sources.row(j);
                let row = row.as_slice().expect("standard layout");
                for r in 0..self.h {
                    t[(j, r)] = self.half_matvec(b, row, r);
                }
            }
            t
        })
    }

    /// Aggregates over `edges`, which must yield (source row, weight) pairs
    /// whose weights sum to `degree`.
    pub(crate) fn aggregate(
        &self,
        f_self: &[f64],
        sources: &Array2<f64>,
        table: Option<&Array2<f64>>,
        edges: impl FnOnce(&mut dyn FnMut(usize, f64)),
        degree: f64,
    ) -> Result<Vec<f64>> {
        let mut m = vec![0.0f64; self.h];
        if let (Some((a, b, bias)), Some(t)) = (self.affine.as_ref(), table) {
            let own_b: Vec<f64> = (0..self.h).map(|r| self.half_matvec(b, f_self, r)).collect();
            edges(&mut |j, w| {
                for (r, acc) in m.iter_mut().enumerate() {
                    *acc += w * (t[(j, r)] - own_b[r]);
                }
            });
            for (r, acc) in m.iter_mut().enumerate() {
                let pivot = bias[r] + self.half_matvec(a, f_self, r) + own_b[r];
                *acc = pivot + *acc / degree;
            }
        } else {
            let mut pair = vec![0.0f64; 2 * self.width];
            pair[..self.width].copy_from_slice(f_self);
            pair[self.width..].copy_from_slice(f_self);
            let pivot = self.spec.forward(&pair)?;
            let mut err = None;
            edges(&mut |j, w| {
                if err.is_some() {
                    return;
                }
                for c in 0..self.width {
                    pair[self.width + c] = sources[(j, c)];
                }
                match self.spec.forward(&pair) {
                    Ok(msg) => {
                        for (r, acc) in m.iter_mut().enumerate() {
                            *acc += w * (msg[r] - pivot[r]);
                        }
                    }
                    Err(e) => err = Some(e),
                }
            });
            if let Some(e) = err {
                return Err(e);
            }
            for (r, acc) in m.iter_mut().enumerate() {
                *acc = pivot[r] + *acc / degree;
            }
        }
        Ok(m)
    }
}

fn layer_step(graph: &SampledGraph, layer: &MpnnLayer, f: &Array2<f64>) -> Result<Array2<f64>> {
    let n = graph.n();
    let width = f.ncols();
    let h = layer.message.output_dim();

    for i in 0..n {
        if graph.agg_degree(i) == 0.0 {
            return Err(Error::IsolatedNode { node: i });
        }
    }

    let engine = MessageEngine::new(&layer.message, width);
    let table = engine.source_table(f);
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let f_self = f.row(i);
            let f_self = f_self.as_slice().expect("standard layout");
            engine.aggregate(
                f_self,
                f,
                table.as_ref(),
                |sink| graph.for_each_in_row(i, |j, w| sink(j, w)),
                graph.agg_degree(i),
            )
        })
        .collect::<Result<Vec<_>>>()?;
    debug_assert!(rows.iter().all(|r| r.len() == h));

    let mut out = Array2::zeros((n, layer.update.output_dim()));
    let updated: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut pair = Vec::with_capacity(width + h);
            pair.extend(f.row(i).iter());
            pair.extend_from_slice(&rows[i]);
            layer.update.forward(&pair)
        })
        .collect::<Result<Vec<_>>>()?;
    for (i, row) in updated.into_iter().enumerate() {
        for (c, v) in row.into_iter().enumerate() {
            out[(i, c)] = v;
        }
    }
    Ok(out)
}

/// Runs the full layer stack, returning features after every layer
/// (`result[0]` is the input, `result[T]` the output).
pub fn gmpnn_forward_layers(net: &MpnnSpec, graph: &SampledGraph) -> Result<Vec<Array2<f64>>> {
    net.validate()?;
    if graph.feature_dim() != net.input_dim() {
        return Err(Error::DimensionMismatch(format!(
            "graph features have width {}, network expects {}",
            graph.feature_dim(),
            net.input_dim()
        )));
    }
    let mut acc = vec![graph.features.clone()];
    for layer in &net.layers {
        let next = layer_step(graph, layer, acc.last().unwrap())?;
        acc.push(next);
    }
    Ok(acc)
}

/// Final-layer node outputs.
pub fn gmpnn_forward(net: &MpnnSpec, graph: &SampledGraph) -> Result<Array2<f64>> {
    Ok(gmpnn_forward_layers(net, graph)?.pop().unwrap())
}

/// Mean over rows. Rows are accumulated in their value order (bit-pattern
/// lexicographic), which makes pooling exactly invariant under row
/// permutations.
pub fn global_pool(x: &Array2<f64>) -> Result<Vec<f64>> {
    let n = x.nrows();
    if n == 0 {
        return Err(Error::InvalidArgument("pooling an empty matrix".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        for c in 0..x.ncols() {
            let cmp = x[(a, c)].total_cmp(&x[(b, c)]);
            if cmp != std::cmp::Ordering::Equal {
                return cmp;
            }
        }
        std::cmp::Ordering::Equal
    });
    let mut out = vec![0.0f64; x.ncols()];
    for &i in &order {
        for (c, acc) in out.iter_mut().enumerate() {
            *acc += x[(i, c)];
        }
    }
    for acc in out.iter_mut() {
        *acc /= n as f64;
    }
    Ok(out)
}

/// Random GraphSAGE-style network: per layer the message is the fixed
/// identity map onto the neighbor feature and the update is a single layer
/// `act(W1 f_i + W2 m_i)` with Gaussian `init_scale / sqrt(fan_in)` weights,
/// ReLU on hidden layers and identity on the last.
pub fn graphsage_random(dims: &[usize], seed: u64, init_scale: f64) -> Result<MpnnSpec> {
    if dims.len() < 2 || dims.iter().any(|&d| d == 0) {
        return Err(Error::InvalidArgument(format!("bad GraphSAGE widths {dims:?}")));
    }
    let mut rng = rng::chacha(seed, &[stream::NET]);
    let mut layers = Vec::with_capacity(dims.len() - 1);
    for t in 0..dims.len() - 1 {
        let (fin, fout) = (dims[t], dims[t + 1]);
        let mut phi_w = Array2::zeros((fin, 2 * fin));
        for r in 0..fin {
            phi_w[(r, fin + r)] = 1.0;
        }
        let message = MlpSpec::affine(phi_w, vec![0.0; fin]);

        let std = init_scale / (fin as f64).sqrt();
        let mut psi_w = Array2::zeros((fout, 2 * fin));
        // W1 block then W2 block, each row-major
        for block in 0..2 {
            for r in 0..fout {
                for c in 0..fin {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    psi_w[(r, block * fin + c)] = std * z;
                }
            }
        }
        let activation =
            if t + 1 < dims.len() - 1 { Activation::Relu } else { Activation::Identity };
        let update =
            MlpSpec { layers: vec![MlpLayer { weight: psi_w, bias: vec![0.0; fout], activation }] };
        layers.push(MpnnLayer { message, update });
    }
    let net = MpnnSpec { layers };
    net.validate()?;
    Ok(net)
}

/// Serialized form: `{"layers": [{"phi": ..., "psi": ...}, ...]}`.
#[derive(Serialize, Deserialize)]
pub struct MpnnJson {
    pub layers: Vec<MpnnLayerJson>,
}

#[derive(Serialize, Deserialize)]
pub struct MpnnLayerJson {
    pub phi: MlpJson,
    pub psi: MlpJson,
}

impl From<&MpnnSpec> for MpnnJson {
    fn from(net: &MpnnSpec) -> MpnnJson {
        MpnnJson {
            layers: net
                .layers
                .iter()
                .map(|l| MpnnLayerJson { phi: (&l.message).into(), psi: (&l.update).into() })
                .collect(),
        }
    }
}

impl TryFrom<MpnnJson> for MpnnSpec {
    type Error = Error;

    fn try_from(j: MpnnJson) -> Result<MpnnSpec> {
        let mut layers = Vec::with_capacity(j.layers.len());
        for l in j.layers {
            layers.push(MpnnLayer { message: l.phi.try_into()?, update: l.psi.try_into()? });
        }
        let net = MpnnSpec { layers };
        net.validate()?;
        Ok(net)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::from_parts;
    use crate::space::Space;
    use ndarray::arr2;
    use rand::RngExt;

    const SQ: Space = Space::UnitSquareUniform;

    /// phi(a, b) = b, psi(a, m) = m for scalar features.
    fn pass_through() -> MpnnSpec {
        MpnnSpec {
            layers: vec![MpnnLayer {
                message: MlpSpec::affine(arr2(&[[0.0, 1.0]]), vec![0.0]),
                update: MlpSpec::affine(arr2(&[[0.0, 1.0]]), vec![0.0]),
            }],
        }
    }

    fn random_positions(n: usize, seed: u64) -> Vec<[f64; 2]> {
        SQ.sample_points(n, seed)
    }

    #[test]
    fn weighted_path_message_oracle() {
        // 3-node path, w12 = 1, w23 = 2, self-loops 1, f = (1, 2, 3):
        // node 2 aggregates (1*1 + 1*2 + 2*3) / 4 = 2.25
        let w = arr2(&[[1.0, 1.0, 0.0], [1.0, 1.0, 2.0], [0.0, 2.0, 1.0]]);
        let f = arr2(&[[1.0], [2.0], [3.0]]);
        let g = from_parts(SQ, random_positions(3, 1), w, f).unwrap();
        let out = gmpnn_forward(&pass_through(), &g).unwrap();
        assert_eq!(out[(1, 0)], 2.25);
        assert_eq!(out[(0, 0)], 1.5);
        assert_eq!(out[(2, 0)], (2.0 * 2.0 + 3.0) / 3.0);
    }

    #[test]
    fn two_node_mean() {
        let w = arr2(&[[1.0, 1.0], [1.0, 1.0]]);
        let f = arr2(&[[4.0], [10.0]]);
        let g = from_parts(SQ, random_positions(2, 2), w, f).unwrap();
        let out = gmpnn_forward(&pass_through(), &g).unwrap();
        assert_eq!(out[(0, 0)], 7.0);
        assert_eq!(out[(1, 0)], 7.0);
    }

    #[test]
    fn constant_signal_through_identity_sage_doubles() {
        let mut net = graphsage_random(&[2, 2], 3, 1.0).unwrap();
        // overwrite psi with [I | I], no activation
        net.layers[0].update = MlpSpec::affine(
            arr2(&[[1.0, 0.0, 1.0, 0.0], [0.0, 1.0, 0.0, 1.0]]),
            vec![0.0, 0.0],
        );
        let n = 17;
        let w = Array2::from_elem((n, n), 0.7);
        let c = [0.3, -1.25];
        let f = Array2::from_shape_fn((n, 2), |(_, j)| c[j]);
        let g = from_parts(SQ, random_positions(n, 5), w, f).unwrap();
        let out = gmpnn_forward(&net, &g).unwrap();
        for i in 0..n {
            for j in 0..2 {
                // aggregating a constant is exact, so the doubling is too
                assert_eq!(out[(i, j)], 2.0 * c[j]);
            }
        }
    }

    #[test]
    fn isolated_node_is_a_hard_error() {
        let w = arr2(&[[1.0, 0.0], [0.0, 0.0]]);
        let f = arr2(&[[1.0], [2.0]]);
        let g = from_parts(SQ, random_positions(2, 3), w, f).unwrap();
        match gmpnn_forward(&pass_through(), &g) {
            Err(Error::IsolatedNode { node }) => assert_eq!(node, 1),
            other => panic!("expected isolated-node error, got {other:?}"),
        }
    }

    fn random_mlp(rng: &mut impl RngExt, dims: &[usize], last: Activation) -> MlpSpec {
        let mut layers = Vec::new();
        for t in 0..dims.len() - 1 {
            layers.push(MlpLayer {
                weight: Array2::from_shape_fn((dims[t + 1], dims[t]), |_| {
                    rng.random::<f64>() * 2.0 - 1.0
                }),
                bias: (0..dims[t + 1]).map(|_| rng.random::<f64>() - 0.5).collect(),
                activation: if t + 2 < dims.len() { Activation::Relu } else { last },
            });
        }
        MlpSpec { layers }
    }

    fn random_graph(rng: &mut impl RngExt, n: usize, fdim: usize, seed: u64) -> super::SampledGraph {
        let mut w = Array2::zeros((n, n));
        for i in 0..n {
            for j in 0..=i {
                let v = if rng.random::<f64>() < 0.4 { rng.random::<f64>() } else { 0.0 };
                w[(i, j)] = v;
                w[(j, i)] = v;
            }
            w[(i, i)] = 0.5 + rng.random::<f64>();
        }
        let f = Array2::from_shape_fn((n, fdim), |_| rng.random::<f64>() * 2.0 - 1.0);
        from_parts(SQ, random_positions(n, seed), w, f).unwrap()
    }

    #[test]
    fn permutation_equivariance_is_exact() {
        let mut rng = crate::rng::chacha(9, &[0x21]);
        for case in 0..8 {
            let n = 8;
            let g = random_graph(&mut rng, n, 2, 100 + case);
            // general (non-affine) message path
            let net = MpnnSpec {
                layers: vec![MpnnLayer {
                    message: random_mlp(&mut rng, &[4, 5, 3], Activation::Identity),
                    update: random_mlp(&mut rng, &[5, 4, 2], Activation::Identity),
                }],
            };
            let out = gmpnn_forward(&net, &g).unwrap();

            // relabel nodes by a random permutation
            let mut perm: Vec<usize> = (0..n).collect();
            for i in (1..n).rev() {
                let j = rng.random_range(0..=i);
                perm.swap(i, j);
            }
            let nodes_p: Vec<_> = perm.iter().map(|&p| g.nodes[p]).collect();
            let mut w_p = Array2::zeros((n, n));
            let mut f_p = Array2::zeros((n, 2));
            for i in 0..n {
                f_p.row_mut(i).assign(&g.features.row(perm[i]));
                for j in 0..n {
                    w_p[(i, j)] = g.weight(perm[i], perm[j]);
                }
            }
            let gp = from_parts(SQ, nodes_p, w_p, f_p).unwrap();
            let out_p = gmpnn_forward(&net, &gp).unwrap();
            for i in 0..n {
                for c in 0..2 {
                    assert_eq!(out_p[(i, c)], out[(perm[i], c)], "case {case} node {i}");
                }
            }
            // pooling is invariant bit for bit
            assert_eq!(global_pool(&out).unwrap(), global_pool(&out_p).unwrap());
        }
    }

    #[test]
    fn intermediate_layers_are_retrievable() {
        let net = graphsage_random(&[1, 4, 2], 8, 1.0).unwrap();
        let w = Array2::from_elem((5, 5), 1.0);
        let f = Array2::from_shape_fn((5, 1), |(i, _)| i as f64);
        let g = from_parts(SQ, random_positions(5, 4), w, f).unwrap();
        let states = gmpnn_forward_layers(&net, &g).unwrap();
        assert_eq!(states.len(), 3);
        assert_eq!(states[0], g.features);
        assert_eq!(states[1].ncols(), 4);
        assert_eq!(states[2].ncols(), 2);
        assert_eq!(states[2], gmpnn_forward(&net, &g).unwrap());
    }

    #[test]
    fn global_pool_oracle_and_empty() {
        let x = arr2(&[[0.0, 2.0], [2.0, 0.0]]);
        assert_eq!(global_pool(&x).unwrap(), vec![1.0, 1.0]);
        let empty = Array2::<f64>::zeros((0, 2));
        assert!(global_pool(&empty).is_err());
    }

    #[test]
    fn graphsage_shape_and_constants() {
        let net = graphsage_random(&[1, 16, 16], 42, 1.0).unwrap();
        assert_eq!(net.feature_dims(), vec![1, 16, 16]);
        let consts = net.constants();
        assert_eq!(consts.len(), 2);
        for c in &consts {
            assert_eq!(c.lip_phi, 1.0, "identity message");
            assert_eq!(c.bias_phi, 0.0);
            assert_eq!(c.bias_psi, 0.0);
            assert!(c.lip_psi > 0.0);
        }
        // deterministic in the seed
        let again = graphsage_random(&[1, 16, 16], 42, 1.0).unwrap();
        assert_eq!(net.layers[0].update.layers[0].weight, again.layers[0].update.layers[0].weight);
        let other = graphsage_random(&[1, 16, 16], 43, 1.0).unwrap();
        assert_ne!(net.layers[0].update.layers[0].weight, other.layers[0].update.layers[0].weight);
    }

    #[test]
    fn spec_json_round_trip() {
        let net = graphsage_random(&[2, 3, 1], 5, 0.5).unwrap();
        let s = serde_json::to_string(&MpnnJson::from(&net)).unwrap();
        let back: MpnnSpec = serde_json::from_str::<MpnnJson>(&s).unwrap().try_into().unwrap();
        assert_eq!(back.feature_dims(), net.feature_dims());
        assert_eq!(
            back.layers[1].update.layers[0].weight,
            net.layers[1].update.layers[0].weight
        );
    }

    #[test]
    fn dimension_mismatches_are_rejected() {
        let bad = MpnnSpec {
            layers: vec![MpnnLayer {
                message: MlpSpec::affine(arr2(&[[0.0, 1.0, 0.0]]), vec![0.0]),
                update: MlpSpec::affine(arr2(&[[0.0, 1.0]]), vec![0.0]),
            }],
        };
        assert!(bad.validate().is_err());
        let g = from_parts(
            SQ,
            random_positions(2, 7),
            arr2(&[[1.0, 0.0], [0.0, 1.0]]),
            arr2(&[[1.0, 2.0], [3.0, 4.0]]),
        )
        .unwrap();
        assert!(gmpnn_forward(&pass_through(), &g).is_err());
    }
}
