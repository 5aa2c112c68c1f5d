//! Choosing which layers of f the hyperhypernetwork generates.
//!
//! Each layer gets an entropy score: every other layer is fixed at one random
//! initialization, the layer itself is redrawn many times, and the entropy of
//! the histogram of resulting probe losses is recorded. A 0/1 knapsack over
//! layer sizes then picks the highest-scoring subset within the parameter
//! budget.

use std::cmp::Ordering;
use std::fmt::Write as _;

use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{ParamStore, Tape, Tensor};
use crate::datagen::{sample_rng, ArraySample};
use crate::error::{Error, Result};
use crate::hyperinit::{uniform_draw, xavier_variance};
use crate::nets::{array_terms, ArrayModel, Model, ModelKind, ModelSpec};

const INIT_STREAM: u64 = 1 << 45;
const TRIAL_STREAM: u64 = 1 << 46;
const PROBE_STREAM: u64 = 1 << 47;
const POINT_STREAM: u64 = 1 << 48;

/// A network whose parameters split into independently drawable layers,
/// evaluated on a fixed set of samples.
pub trait LayeredModel {
    fn n_layers(&self) -> usize;
    /// Parameter count of layer `j`.
    fn layer_size(&self, j: usize) -> usize;
    fn n_samples(&self) -> usize;
    /// Draws every layer from its initialization distribution.
    fn init(&mut self, rng: &mut ChaCha8Rng);
    fn redraw(&mut self, j: usize, rng: &mut ChaCha8Rng);
    /// Loss of sample `i` under the current parameters.
    fn sample_loss(&self, i: usize) -> Result<f64>;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectionBudget {
    /// Parameter budget Q; `None` generates every layer.
    pub max_params: Option<usize>,
    pub trials: usize,
    pub bins: usize,
    /// Train samples in the fixed probe subset.
    pub probe_samples: usize,
    /// Redraw the other layers on every trial instead of once per layer.
    pub redraw_others: bool,
}

impl Default for SelectionBudget {
    fn default() -> Self {
        Self {
            max_params: Some(10_000),
            trials: 10_000,
            bins: 1_000,
            probe_samples: 64,
            redraw_others: false,
        }
    }
}

impl SelectionBudget {
    pub fn validate(&self) -> Result<()> {
        if self.max_params == Some(0) {
            return Err(Error::Config("parameter budget must be positive".into()));
        }
        if self.trials == 0 || self.bins == 0 || self.probe_samples == 0 {
            return Err(Error::Config(
                "trials, bins and probe samples must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerScore {
    pub layer: usize,
    /// Histogram entropy in nats.
    pub entropy: f64,
    pub size: usize,
    /// Range of the observed losses, which is also the histogram range.
    pub loss_min: f64,
    pub loss_max: f64,
}

/// Entropy of the histogram of `values` over `bins` equal bins spanning
/// `[min, max]`. A constant sample lands in one bin and scores zero.
pub fn histogram_entropy(values: &[f64], bins: usize) -> Result<f64> {
    if values.is_empty() || bins == 0 {
        return Err(Error::Contract("histogram needs values and bins".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("non-finite loss in histogram".into()));
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi == lo {
        return Ok(0.0);
    }
    let mut counts = vec![0usize; bins];
    for &v in values {
        let b = ((v - lo) / (hi - lo) * bins as f64) as usize;
        counts[b.min(bins - 1)] += 1;
    }
    let n = values.len() as f64;
    Ok(counts
        .into_iter()
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum::<f64>()
        .max(0.0))
}

pub fn init_rng(seed: u64, layer: usize) -> ChaCha8Rng {
    sample_rng(seed, INIT_STREAM + layer as u64)
}

pub fn trial_rng(seed: u64, layer: usize, trial: usize) -> ChaCha8Rng {
    sample_rng(seed, TRIAL_STREAM + ((layer as u64) << 32) + trial as u64)
}

/// Fixed probe subset of `n` samples, sorted.
pub fn probe_subset(n: usize, size: usize, seed: u64) -> Vec<usize> {
    if size >= n {
        return (0..n).collect();
    }
    let mut idx = sample(&mut sample_rng(seed, PROBE_STREAM), n, size).into_vec();
    idx.sort_unstable();
    idx
}

/// Mean loss over `probe`, summed in ascending sample order.
pub fn probe_loss<M: LayeredModel + ?Sized>(model: &M, probe: &[usize]) -> Result<f64> {
    let mut idx = probe.to_vec();
    idx.sort_unstable();
    let mut sum = 0.0;
    for &i in &idx {
        sum += model.sample_loss(i)?;
    }
    Ok(sum / idx.len() as f64)
}

/// Losses of every trial for layer `j`.
pub fn trial_losses<M: LayeredModel + ?Sized>(
    model: &mut M,
    j: usize,
    probe: &[usize],
    budget: &SelectionBudget,
    seed: u64,
) -> Result<Vec<f64>> {
    if j >= model.n_layers() {
        return Err(Error::Contract(format!(
            "layer {j} of {}",
            model.n_layers()
        )));
    }
    if probe.is_empty() || probe.iter().any(|&i| i >= model.n_samples()) {
        return Err(Error::Contract("probe subset empty or out of range".into()));
    }
    model.init(&mut init_rng(seed, j));
    (0..budget.trials)
        .map(|t| {
            let mut rng = trial_rng(seed, j, t);
            if budget.redraw_others {
                model.init(&mut rng);
            } else {
                model.redraw(j, &mut rng);
            }
            probe_loss(model, probe)
        })
        .collect()
}

pub fn entropy_score<M: LayeredModel + ?Sized>(
    model: &mut M,
    j: usize,
    probe: &[usize],
    budget: &SelectionBudget,
    seed: u64,
) -> Result<LayerScore> {
    let losses = trial_losses(model, j, probe, budget, seed)?;
    Ok(LayerScore {
        layer: j,
        entropy: histogram_entropy(&losses, budget.bins)?,
        size: model.layer_size(j),
        loss_min: losses.iter().copied().fold(f64::INFINITY, f64::min),
        loss_max: losses.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    })
}

pub fn score_layers<M: LayeredModel + ?Sized>(
    model: &mut M,
    budget: &SelectionBudget,
    seed: u64,
) -> Result<Vec<LayerScore>> {
    budget.validate()?;
    if model.n_samples() == 0 {
        return Err(Error::Contract(
            "block selection needs training samples".into(),
        ));
    }
    let probe = probe_subset(model.n_samples(), budget.probe_samples, seed);
    (0..model.n_layers())
        .map(|j| entropy_score(model, j, &probe, budget, seed))
        .collect()
}

/// Exact 0/1 knapsack: the layers maximizing total entropy with total size
/// at most `max_params`. Ties go to the smaller total size, then to the
/// lexicographically first layer list. `None` selects every layer.
pub fn knapsack_select(scores: &[LayerScore], max_params: Option<usize>) -> Vec<usize> {
    let Some(cap) = max_params else {
        return scores.iter().map(|s| s.layer).collect();
    };
    let total: usize = scores.iter().map(|s| s.size).sum();
    let cap = cap.min(total);
    // best[s]: (value, ascending positions) over subsets of exact size s
    let mut best: Vec<Option<(f64, Vec<usize>)>> = vec![None; cap + 1];
    best[0] = Some((0.0, Vec::new()));
    for (k, item) in scores.iter().enumerate() {
        if item.size > cap {
            continue;
        }
        for s in (item.size..=cap).rev() {
            let Some((v, set)) = &best[s - item.size] else {
                continue;
            };
            let cand_v = v + item.entropy;
            let better = match &best[s] {
                None => true,
                Some((bv, bset)) => match cand_v.partial_cmp(bv).unwrap_or(Ordering::Equal) {
                    Ordering::Greater => true,
                    Ordering::Less => false,
                    Ordering::Equal => {
                        let mut cand = set.clone();
                        cand.push(k);
                        cand < *bset
                    }
                },
            };
            if better {
                let mut cand = set.clone();
                cand.push(k);
                best[s] = Some((cand_v, cand));
            }
        }
    }
    let mut pick: Option<(f64, &Vec<usize>)> = None;
    // ascending sizes, so only a strictly larger value displaces
    for (v, set) in best.iter().flatten() {
        let replace = match pick {
            None => true,
            Some((pv, _)) => *v > pv,
        };
        if replace {
            pick = Some((*v, set));
        }
    }
    pick.map(|(_, set)| set.iter().map(|&k| scores[k].layer).collect())
        .unwrap_or_default()
}

/// CSV of the scores with entropies normalized by their maximum.
pub fn scores_csv(scores: &[LayerScore], selected: &[usize], header: &[String]) -> String {
    let max = scores.iter().map(|s| s.entropy).fold(0.0, f64::max);
    let mut out = String::new();
    for h in header {
        let _ = writeln!(out, "# {h}");
    }
    out.push_str("layer,size,entropy,entropy_normalized,selected,loss_min,loss_max\n");
    for s in scores {
        let norm = if max > 0.0 { s.entropy / max } else { 0.0 };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            s.layer,
            s.size,
            s.entropy,
            norm,
            selected.contains(&s.layer) as u8,
            s.loss_min,
            s.loss_max
        );
    }
    out
}

/// A bias-free tanh MLP `in → hidden → out` fit by squared error.
#[derive(Clone, Debug)]
pub struct MicroMlp {
    pub dims: [usize; 3],
    /// Row-major `[out, in]` weights per layer.
    pub weights: [Vec<f64>; 2],
    pub inputs: Vec<Vec<f64>>,
    pub targets: Vec<Vec<f64>>,
}

impl MicroMlp {
    /// Random regression data of `n` samples.
    pub fn new(dims: [usize; 3], n: usize, seed: u64) -> Self {
        let mut rng = sample_rng(seed, 0);
        let inputs: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..dims[0]).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let targets = (0..n)
            .map(|_| (0..dims[2]).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        Self {
            dims,
            weights: [vec![0.0; dims[0] * dims[1]], vec![0.0; dims[1] * dims[2]]],
            inputs,
            targets,
        }
    }

    pub fn predict(&self, x: &[f64]) -> Vec<f64> {
        let [d0, d1, d2] = self.dims;
        let h: Vec<f64> = (0..d1)
            .map(|o| {
                (0..d0)
                    .map(|i| self.weights[0][o * d0 + i] * x[i])
                    .sum::<f64>()
                    .tanh()
            })
            .collect();
        (0..d2)
            .map(|o| (0..d1).map(|i| self.weights[1][o * d1 + i] * h[i]).sum())
            .collect()
    }
}

impl LayeredModel for MicroMlp {
    fn n_layers(&self) -> usize {
        2
    }

    fn layer_size(&self, j: usize) -> usize {
        self.weights[j].len()
    }

    fn n_samples(&self) -> usize {
        self.inputs.len()
    }

    fn init(&mut self, rng: &mut ChaCha8Rng) {
        for j in 0..2 {
            self.redraw(j, rng);
        }
    }

    fn redraw(&mut self, j: usize, rng: &mut ChaCha8Rng) {
        let var = xavier_variance(self.dims[j]);
        for w in &mut self.weights[j] {
            *w = uniform_draw(rng, var);
        }
    }

    fn sample_loss(&self, i: usize) -> Result<f64> {
        let p = self.predict(&self.inputs[i]);
        Ok(p.iter()
            .zip(&self.targets[i])
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / p.len() as f64)
    }
}

/// The array designer's f with every layer conventional, scored by the
/// unweighted structure plus constraint loss on a fixed point subset.
pub struct ArrayLayerProbe<'a> {
    model: ArrayModel,
    store: ParamStore,
    data: &'a [ArraySample],
    points: Vec<usize>,
}

impl<'a> ArrayLayerProbe<'a> {
    /// `points` caps the grid points per loss evaluation.
    pub fn new(
        spec: &ModelSpec,
        data: &'a [ArraySample],
        points: Option<usize>,
        seed: u64,
    ) -> Result<Self> {
        if spec.kind != ModelKind::Array {
            return Err(Error::Contract(
                "block selection runs on array models".into(),
            ));
        }
        let mut spec = spec.clone();
        spec.selected.clear();
        let (model, store) = spec.build()?;
        let Model::Array(model) = model else {
            unreachable!()
        };
        let total = model.points.shape()[0];
        let points = match points {
            Some(m) if m < total => {
                let mut idx = sample(&mut sample_rng(seed, POINT_STREAM), total, m).into_vec();
                idx.sort_unstable();
                idx
            }
            _ => (0..total).collect(),
        };
        Ok(Self {
            model,
            store,
            data,
            points,
        })
    }
}

impl LayeredModel for ArrayLayerProbe<'_> {
    fn n_layers(&self) -> usize {
        self.model.hyper.n_layers()
    }

    fn layer_size(&self, j: usize) -> usize {
        self.model.hyper.specs[j].size()
    }

    fn n_samples(&self) -> usize {
        self.data.len()
    }

    fn init(&mut self, rng: &mut ChaCha8Rng) {
        for j in 0..self.n_layers() {
            self.redraw(j, rng);
        }
    }

    fn redraw(&mut self, j: usize, rng: &mut ChaCha8Rng) {
        let ids = self.model.hyper_layers[j];
        *self.store.get_mut(ids.weight) = self.model.hyper.draw_weights(j, rng);
        *self.store.get_mut(ids.bias) = Tensor::vector(self.model.hyper.bias_init(j));
    }

    fn sample_loss(&self, i: usize) -> Result<f64> {
        let mut tape = Tape::new();
        let bound = self.store.bind(&mut tape, false);
        let (loss_structure, loss_constraint) =
            array_terms(&self.model, &mut tape, &bound, &self.data[i], &self.points)?;
        Ok(tape.value(loss_structure).item() + tape.value(loss_constraint).item())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn score(layer: usize, entropy: f64, size: usize) -> LayerScore {
        LayerScore {
            layer,
            entropy,
            size,
            loss_min: 0.0,
            loss_max: 0.0,
        }
    }

    #[test]
    fn knapsack_small_instance() {
        let s = [score(0, 10.0, 5), score(1, 40.0, 4), score(2, 30.0, 3)];
        assert_eq!(knapsack_select(&s, Some(7)), vec![1, 2]);
        assert_eq!(knapsack_select(&s, Some(2)), Vec::<usize>::new());
        assert_eq!(knapsack_select(&s, Some(100)), vec![0, 1, 2]);
        assert_eq!(knapsack_select(&s, None), vec![0, 1, 2]);
        assert_eq!(knapsack_select(&s, Some(0)), Vec::<usize>::new());
    }

    #[test]
    fn knapsack_ties() {
        // same value: the smaller total size wins
        let s = [score(0, 1.0, 3), score(1, 1.0, 2)];
        assert_eq!(knapsack_select(&s, Some(3)), vec![1]);
        // same value and size: the lexicographically first list wins
        let s = [score(0, 1.0, 2), score(1, 1.0, 2)];
        assert_eq!(knapsack_select(&s, Some(3)), vec![0]);
        // zero-entropy layers are dropped under a finite budget
        let s = [score(0, 0.0, 1), score(1, 2.0, 1)];
        assert_eq!(knapsack_select(&s, Some(5)), vec![1]);
    }

    #[test]
    fn entropy_edges() {
        assert_eq!(histogram_entropy(&[3.0; 50], 10).unwrap(), 0.0);
        let spread: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        assert!((histogram_entropy(&spread, 1000).unwrap() - 1000f64.ln()).abs() < 1e-12);
        assert!(histogram_entropy(&[], 3).is_err());
        assert!(matches!(
            histogram_entropy(&[f64::NAN], 3),
            Err(Error::Domain(_))
        ));
    }

    /// A layer zeroed out downstream cannot move the loss.
    struct Dead(MicroMlp);

    impl LayeredModel for Dead {
        fn n_layers(&self) -> usize {
            2
        }
        fn layer_size(&self, j: usize) -> usize {
            self.0.layer_size(j)
        }
        fn n_samples(&self) -> usize {
            self.0.n_samples()
        }
        fn init(&mut self, rng: &mut ChaCha8Rng) {
            self.0.init(rng);
            self.0.weights[1].iter_mut().for_each(|w| *w = 0.0);
        }
        fn redraw(&mut self, j: usize, rng: &mut ChaCha8Rng) {
            if j == 0 {
                self.0.redraw(0, rng);
            }
        }
        fn sample_loss(&self, i: usize) -> Result<f64> {
            self.0.sample_loss(i)
        }
    }

    #[test]
    fn uninfluential_layer_scores_zero() {
        let mut m = Dead(MicroMlp::new([4, 2, 4], 10, 3));
        let budget = SelectionBudget {
            trials: 40,
            bins: 10,
            ..SelectionBudget::default()
        };
        let s = entropy_score(&mut m, 0, &[0, 1, 2], &budget, 1).unwrap();
        assert_eq!(s.entropy, 0.0);
        assert_eq!(s.size, 8);
    }

    #[test]
    fn budget_validation() {
        assert!(SelectionBudget::default().validate().is_ok());
        let b = SelectionBudget {
            max_params: Some(0),
            ..SelectionBudget::default()
        };
        assert!(b.validate().is_err());
    }
}
