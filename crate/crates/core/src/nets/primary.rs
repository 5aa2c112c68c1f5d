//! Primary network g: a coordinate MLP whose parameters are supplied as one
//! flat vector, so they can be produced by another network.

use crate::autodiff::{Tape, Tensor, Var};
use crate::em::VoxelDims;
use crate::error::{Error, Result};

/// Output heads of g.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Head {
    /// Metal probability only.
    Single,
    /// Metal probability and valid-antenna probability.
    Array,
}

impl Head {
    pub fn outputs(self) -> usize {
        match self {
            Head::Single => 1,
            Head::Array => 2,
        }
    }
}

/// Which part of a primary layer a flat parameter belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PrimaryPart {
    Weight,
    Scale,
    Bias,
}

/// Flat parameter layout of g: layer-major, and within each layer the
/// `d_in × d_out` weights (row-major), then `d_out` scales, then `d_out` biases.
/// A layer computes `(x·W) ⊙ s + b`.
#[derive(Clone, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct PrimaryLayout {
    pub dims: Vec<(usize, usize)>,
}

impl PrimaryLayout {
    pub fn new(hidden: usize, layers: usize, head: Head) -> Result<Self> {
        if hidden == 0 || layers < 2 {
            return Err(Error::Config(format!(
                "primary network needs >= 2 layers and a hidden width, got {layers} x {hidden}"
            )));
        }
        let dims = (0..layers)
            .map(|j| {
                let d_in = if j == 0 { 3 } else { hidden };
                let d_out = if j + 1 == layers {
                    head.outputs()
                } else {
                    hidden
                };
                (d_in, d_out)
            })
            .collect();
        Ok(Self { dims })
    }

    pub fn layer_len(&self, j: usize) -> usize {
        let (a, b) = self.dims[j];
        a * b + 2 * b
    }

    pub fn layer_offset(&self, j: usize) -> usize {
        (0..j).map(|i| self.layer_len(i)).sum()
    }

    pub fn len(&self) -> usize {
        self.layer_offset(self.dims.len())
    }

    pub fn is_empty(&self) -> bool {
        self.dims.is_empty()
    }

    pub fn outputs(&self) -> usize {
        self.dims.last().map_or(0, |d| d.1)
    }

    /// `(layer, part)` of every flat index, in order.
    pub fn parts(&self) -> Vec<(usize, PrimaryPart)> {
        let mut out = Vec::with_capacity(self.len());
        for (j, &(a, b)) in self.dims.iter().enumerate() {
            out.extend(std::iter::repeat_n((j, PrimaryPart::Weight), a * b));
            out.extend(std::iter::repeat_n((j, PrimaryPart::Scale), b));
            out.extend(std::iter::repeat_n((j, PrimaryPart::Bias), b));
        }
        out
    }
}

/// Box-normalized centers of every voxel, `[P, 3]`, in voxel index order.
pub fn unit_points(dims: VoxelDims) -> Tensor {
    let data = (0..dims.len()).flat_map(|i| dims.unit_center(i)).collect();
    Tensor::new(vec![dims.len(), 3], data).expect("non-empty voxel grid")
}

/// Rows `indices` of a `[P, 3]` point tensor.
pub fn select_points(points: &Tensor, indices: &[usize]) -> Tensor {
    let data = indices
        .iter()
        .flat_map(|&i| points.data()[3 * i..3 * i + 3].iter().copied())
        .collect();
    Tensor::new(vec![indices.len(), 3], data).expect("non-empty selection")
}

/// Pre-sigmoid outputs of g at `points` (`[P, 3]`) with flat parameters
/// `theta`, as `[P, outputs]`.
pub fn primary_logits(
    tape: &mut Tape,
    theta: Var,
    points: Var,
    layout: &PrimaryLayout,
) -> Result<Var> {
    if tape.value(theta).numel() != layout.len() {
        return Err(Error::Assembly(format!(
            "primary network needs {} parameters, got {}",
            layout.len(),
            tape.value(theta).numel()
        )));
    }
    let ps = tape.shape(points);
    if ps.len() != 2 || ps[1] != 3 {
        return Err(Error::Dimension(format!(
            "points must be [P, 3], got {ps:?}"
        )));
    }
    let mut x = points;
    let last = layout.dims.len() - 1;
    for (j, &(a, b)) in layout.dims.iter().enumerate() {
        let off = layout.layer_offset(j);
        let w = tape.slice(theta, off, a * b)?;
        let w = tape.reshape(w, &[a, b])?;
        let s = tape.slice(theta, off + a * b, b)?;
        let bias = tape.slice(theta, off + a * b + b, b)?;
        let z = tape.matmul(x, w)?;
        let z = tape.mul_row(z, s)?;
        let z = tape.add_row(z, bias)?;
        x = if j == last { z } else { tape.elu(z) };
    }
    Ok(x)
}

/// Evaluates g at `points` (`[P, 3]`); returns `[P, outputs]` probabilities.
pub fn g_forward(tape: &mut Tape, theta: Var, points: Var, layout: &PrimaryLayout) -> Result<Var> {
    let z = primary_logits(tape, theta, points, layout)?;
    Ok(tape.sigmoid(z))
}

/// Column `k` of a `[P, n]` value as a flat `[P]` vector.
pub fn column(tape: &mut Tape, x: Var, k: usize) -> Result<Var> {
    let s = tape.shape(x).to_vec();
    if s.len() != 2 || k >= s[1] {
        return Err(Error::Dimension(format!("column {k} of {s:?}")));
    }
    if s[1] == 1 {
        return tape.reshape(x, &[s[0]]);
    }
    let mut sel = vec![0.0; s[1]];
    sel[k] = 1.0;
    let sel = tape.constant(Tensor::new(vec![s[1], 1], sel)?);
    let c = tape.matmul(x, sel)?;
    tape.reshape(c, &[s[0]])
}
