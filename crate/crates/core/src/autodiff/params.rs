use super::tape::{Gradients, Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Index of a tensor inside a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub usize);

/// Ordered collection of named trainable tensors.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        self.names.push(name.into());
        self.tensors.push(value);
        ParamId(self.tensors.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.tensors.iter().map(Tensor::numel).collect()
    }

    pub fn total_len(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    /// Records every tensor as a leaf on `tape`.
    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> Bound {
        Bound(
            self.tensors
                .iter()
                .map(|t| tape.leaf(t.clone(), trainable))
                .collect(),
        )
    }

    /// Replaces values by name; every name must already exist with the same shape.
    pub fn load_from(&mut self, other: &ParamStore) -> Result<()> {
        for (name, t) in other.iter() {
            let id = self
                .find(name)
                .ok_or_else(|| Error::Format(format!("unknown parameter {name}")))?;
            if self.get(id).shape() != t.shape() {
                return Err(Error::Format(format!(
                    "parameter {name}: shape {:?} vs stored {:?}",
                    self.get(id).shape(),
                    t.shape()
                )));
            }
            *self.get_mut(id) = t.clone();
        }
        Ok(())
    }
}

/// Tape handles of a bound [`ParamStore`], indexed by [`ParamId`].
#[derive(Clone, Debug)]
pub struct Bound(Vec<Var>);

impl Bound {
    pub fn var(&self, id: ParamId) -> Var {
        self.0[id.0]
    }

    pub fn vars(&self) -> &[Var] {
        &self.0
    }

    /// Pulls the gradient of every bound tensor out of `grads`.
    pub fn collect(&self, grads: &mut Gradients) -> Vec<Vec<f64>> {
        self.0.iter().map(|&v| grads.take(v)).collect()
    }
}

/// Running sum of per-parameter gradients over a mini-batch.
#[derive(Clone, Debug)]
pub struct GradAccum {
    sums: Vec<Vec<f64>>,
    count: usize,
}

impl GradAccum {
    pub fn new(store: &ParamStore) -> Self {
        Self {
            sums: store.sizes().into_iter().map(|n| vec![0.0; n]).collect(),
            count: 0,
        }
    }

    pub fn add(&mut self, grads: &[Vec<f64>]) {
        for (s, g) in self.sums.iter_mut().zip(grads) {
            s.iter_mut().zip(g).for_each(|(a, &b)| *a += b);
        }
        self.count += 1;
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// Mean gradient over the accumulated samples; resets the accumulator.
    pub fn drain_mean(&mut self) -> Vec<Vec<f64>> {
        let inv = 1.0 / self.count.max(1) as f64;
        let out = self
            .sums
            .iter_mut()
            .map(|s| {
                let m = s.iter().map(|v| v * inv).collect();
                s.iter_mut().for_each(|v| *v = 0.0);
                m
            })
            .collect();
        self.count = 0;
        out
    }
}
