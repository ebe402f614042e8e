//! Multilayer perceptrons used as message and update maps.
//!
//! Forward passes are hand-rolled row loops with a fixed accumulation order,
//! so a network applied to permuted input rows produces exactly permuted
//! output rows.

use crate::{Error, Result};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Relu,
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Relu => x.max(0.0),
        }
    }
}

/// One affine-then-activation layer; `weight` is `out x in`, row-major.
#[derive(Debug, Clone)]
pub struct MlpLayer {
    pub weight: Array2<f64>,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

/// A stack of layers. Activations are per layer; single-layer specs may use
/// any activation (an identity single layer is exactly an affine map).
#[derive(Debug, Clone)]
pub struct MlpSpec {
    pub layers: Vec<MlpLayer>,
}

impl MlpSpec {
    /// Affine map `x -> W x + b` with identity activation.
    pub fn affine(weight: Array2<f64>, bias: Vec<f64>) -> MlpSpec {
        MlpSpec { layers: vec![MlpLayer { weight, bias, activation: Activation::Identity }] }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::InvalidArgument("MLP needs at least one layer".into()));
        }
        for (t, l) in self.layers.iter().enumerate() {
            if l.bias.len() != l.weight.nrows() {
                return Err(Error::DimensionMismatch(format!(
                    "layer {t}: bias length {} vs {} rows",
                    l.bias.len(),
                    l.weight.nrows()
                )));
            }
            if t > 0 && l.weight.ncols() != self.layers[t - 1].weight.nrows() {
                return Err(Error::DimensionMismatch(format!(
                    "layer {t}: input width {} vs previous output {}",
                    l.weight.ncols(),
                    self.layers[t - 1].weight.nrows()
                )));
            }
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map(|l| l.weight.ncols()).unwrap_or(0)
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map(|l| l.weight.nrows()).unwrap_or(0)
    }

    /// The `(weight, bias)` of a purely affine spec (one identity layer);
    /// aggregation uses this to pull the map out of the neighbor sum.
    pub fn affine_parts(&self) -> Option<(&Array2<f64>, &[f64])> {
        match &self.layers[..] {
            [l] if l.activation == Activation::Identity => Some((&l.weight, &l.bias)),
            _ => None,
        }
    }

    /// Evaluates the network on one input vector.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch(format!(
                "input length {} vs expected {}",
                x.len(),
                self.input_dim()
            )));
        }
        let mut cur = x.to_vec();
        let mut next = Vec::new();
        for l in &self.layers {
            next.clear();
            next.reserve(l.weight.nrows());
            for r in 0..l.weight.nrows() {
                let mut acc = l.bias[r];
                let row = l.weight.row(r);
                for (c, &w) in row.iter().enumerate() {
                    acc += w * cur[c];
                }
                next.push(l.activation.apply(acc));
            }
            std::mem::swap(&mut cur, &mut next);
        }
        Ok(cur)
    }

    /// Row-wise batch forward: each output row is the network applied to the
    /// corresponding input row.
    pub fn forward_batch(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.input_dim() {
            return Err(Error::DimensionMismatch(format!(
                "batch width {} vs expected {}",
                x.ncols(),
                self.input_dim()
            )));
        }
        let n = x.nrows();
        let mut out = Array2::zeros((n, self.output_dim()));
        let mut buf: Vec<f64> = Vec::with_capacity(self.input_dim());
        for i in 0..n {
            buf.clear();
            buf.extend(x.row(i).iter());
            let y = self.forward(&buf)?;
            for (j, v) in y.into_iter().enumerate() {
                out[(i, j)] = v;
            }
        }
        Ok(out)
    }

    /// Upper bound on the Lipschitz constant in the sup norm: the product of
    /// induced infinity-norms (max absolute row sums) over layers. Both
    /// activations are 1-Lipschitz componentwise.
    pub fn lipschitz_upper(&self) -> f64 {
        self.layers
            .iter()
            .map(|l| {
                (0..l.weight.nrows())
                    .map(|r| l.weight.row(r).iter().map(|w| w.abs()).sum::<f64>())
                    .fold(0.0f64, f64::max)
            })
            .product()
    }

    /// Formal bias `||m(0)||_inf`: sup norm of the network at zero input.
    pub fn formal_bias(&self) -> f64 {
        let zero = vec![0.0; self.input_dim()];
        self.forward(&zero)
            .map(|y| y.iter().fold(0.0f64, |m, v| m.max(v.abs())))
            .unwrap_or(0.0)
    }
}

/// Serialized form: `{"layers": [{"weights": [[...], ...], "bias": [...],
/// "activation": "relu"}, ...]}` with row-major weight rows.
#[derive(Serialize, Deserialize)]
pub struct MlpJson {
    pub layers: Vec<MlpLayerJson>,
}

#[derive(Serialize, Deserialize)]
pub struct MlpLayerJson {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl From<&MlpSpec> for MlpJson {
    fn from(m: &MlpSpec) -> MlpJson {
        MlpJson {
            layers: m
                .layers
                .iter()
                .map(|l| MlpLayerJson {
                    weights: (0..l.weight.nrows()).map(|r| l.weight.row(r).to_vec()).collect(),
                    bias: l.bias.clone(),
                    activation: l.activation,
                })
                .collect(),
        }
    }
}

impl TryFrom<MlpJson> for MlpSpec {
    type Error = Error;

    fn try_from(j: MlpJson) -> Result<MlpSpec> {
        let mut layers = Vec::with_capacity(j.layers.len());
        for (t, l) in j.layers.into_iter().enumerate() {
            let rows = l.weights.len();
            let cols = l.weights.first().map(|r| r.len()).unwrap_or(0);
            if rows == 0 || cols == 0 {
                return Err(Error::InvalidArgument(format!("layer {t}: empty weight matrix")));
            }
            let mut weight = Array2::zeros((rows, cols));
            for (r, row) in l.weights.iter().enumerate() {
                if row.len() != cols {
                    return Err(Error::InvalidArgument(format!("layer {t}: ragged weight rows")));
                }
                for (c, &v) in row.iter().enumerate() {
                    weight[(r, c)] = v;
                }
            }
            layers.push(MlpLayer { weight, bias: l.bias, activation: l.activation });
        }
        let spec = MlpSpec { layers };
        spec.validate()?;
        Ok(spec)
    }
}
