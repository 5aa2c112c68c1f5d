//! Layer specifications and the forward building blocks shared by all networks.

use rand::Rng;

use crate::autodiff::{Bound, ParamId, ParamStore, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::hyperinit::{uniform_with_variance, xavier_variance};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerKind {
    /// 3×3 same-size convolution.
    Conv {
        c_in: usize,
        c_out: usize,
    },
    Dense {
        d_in: usize,
        d_out: usize,
    },
}

/// Shape of one weight-plus-bias layer.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LayerSpec {
    pub name: String,
    pub kind: LayerKind,
}

impl LayerSpec {
    pub fn conv(name: impl Into<String>, c_in: usize, c_out: usize) -> Self {
        Self {
            name: name.into(),
            kind: LayerKind::Conv { c_in, c_out },
        }
    }

    pub fn dense(name: impl Into<String>, d_in: usize, d_out: usize) -> Self {
        Self {
            name: name.into(),
            kind: LayerKind::Dense { d_in, d_out },
        }
    }

    pub fn weight_shape(&self) -> Vec<usize> {
        match self.kind {
            LayerKind::Conv { c_in, c_out } => vec![c_out, c_in, 3, 3],
            LayerKind::Dense { d_in, d_out } => vec![d_in, d_out],
        }
    }

    pub fn weight_len(&self) -> usize {
        self.weight_shape().iter().product()
    }

    pub fn bias_len(&self) -> usize {
        match self.kind {
            LayerKind::Conv { c_out, .. } => c_out,
            LayerKind::Dense { d_out, .. } => d_out,
        }
    }

    /// Weights plus biases.
    pub fn size(&self) -> usize {
        self.weight_len() + self.bias_len()
    }

    pub fn fan_in(&self) -> usize {
        match self.kind {
            LayerKind::Conv { c_in, .. } => 9 * c_in,
            LayerKind::Dense { d_in, .. } => d_in,
        }
    }
}

/// Tape handles of one layer's weight and bias.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LayerVars {
    pub weight: Var,
    pub bias: Var,
}

/// Parameter ids of one layer inside a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LayerIds {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl LayerIds {
    pub fn vars(&self, bound: &Bound) -> LayerVars {
        LayerVars {
            weight: bound.var(self.weight),
            bias: bound.var(self.bias),
        }
    }
}

/// Adds `prefix.name.w` / `prefix.name.b` with Xavier weights and zero biases.
pub fn add_layers(
    store: &mut ParamStore,
    prefix: &str,
    specs: &[LayerSpec],
    rng: &mut impl Rng,
) -> Vec<LayerIds> {
    specs
        .iter()
        .map(|s| {
            let w = uniform_with_variance(rng, s.weight_len(), xavier_variance(s.fan_in()));
            LayerIds {
                weight: store.add(
                    format!("{prefix}.{}.w", s.name),
                    Tensor::new(s.weight_shape(), w).expect("layer shape"),
                ),
                bias: store.add(
                    format!("{prefix}.{}.b", s.name),
                    Tensor::zeros(&[s.bias_len()]),
                ),
            }
        })
        .collect()
}

pub fn bind_layers(ids: &[LayerIds], bound: &Bound) -> Vec<LayerVars> {
    ids.iter().map(|l| l.vars(bound)).collect()
}

/// Convolution plus per-channel bias, optionally followed by ELU.
pub fn conv(tape: &mut Tape, x: Var, l: LayerVars, elu: bool) -> Result<Var> {
    let y = tape.conv2d(x, l.weight)?;
    let y = tape.add_channel(y, l.bias)?;
    Ok(if elu { tape.elu(y) } else { y })
}

/// `ELU(x + conv(ELU(conv(x))))`
pub fn res_block(tape: &mut Tape, x: Var, a: LayerVars, b: LayerVars) -> Result<Var> {
    let h = conv(tape, x, a, true)?;
    let h = conv(tape, h, b, false)?;
    let s = tape.add(x, h)?;
    Ok(tape.elu(s))
}

/// Fully connected layer applied to a flat vector; returns a flat vector.
pub fn dense_vec(tape: &mut Tape, x: Var, l: LayerVars, elu: bool) -> Result<Var> {
    let n = tape.value(x).numel();
    let row = tape.reshape(x, &[1, n])?;
    let y = tape.matmul(row, l.weight)?;
    let y = tape.add_row(y, l.bias)?;
    let out = tape.shape(y)[1];
    let y = tape.reshape(y, &[out])?;
    Ok(if elu { tape.elu(y) } else { y })
}

/// Flattens `x` and appends the three box extents.
pub fn flatten_with_scale(tape: &mut Tape, x: Var, scale: [f64; 3]) -> Result<Var> {
    let n = tape.value(x).numel();
    let flat = tape.reshape(x, &[n])?;
    let s = tape.constant(Tensor::vector(scale.to_vec()));
    tape.concat(&[flat, s])
}

/// Layer weight and bias as tape values taken from a flat generated vector
/// at `offset` (weights first, then bias).
pub fn layer_from_flat(
    tape: &mut Tape,
    flat: Var,
    offset: usize,
    spec: &LayerSpec,
) -> Result<LayerVars> {
    let w = tape.slice(flat, offset, spec.weight_len())?;
    let weight = tape.reshape(w, &spec.weight_shape())?;
    let bias = tape.slice(flat, offset + spec.weight_len(), spec.bias_len())?;
    Ok(LayerVars { weight, bias })
}

pub fn check_shape(what: &str, got: &[usize], want: &[usize]) -> Result<()> {
    if got != want {
        return Err(Error::Dimension(format!(
            "{what}: expected {want:?}, got {got:?}"
        )));
    }
    Ok(())
}
