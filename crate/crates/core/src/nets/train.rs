//! Training loops for the simulator, the single-antenna designer and the
//! array designer, with per-epoch loss history and resumable state.

use std::fmt::Write as _;

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::hyper::HyperNet;
use super::layers::bind_layers;
use super::models::{map_tensor, ArrayModel, Model, ModelKind, ModelSpec};
use super::primary::select_points;
use crate::autodiff::{AdamConfig, AdamState, Bound, GradAccum, ParamStore, Tape, Tensor, Var};
use crate::datagen::{sample_rng, AntennaSample, ArraySample};
use crate::error::{Error, Result};
use crate::hyperinit::{estimate_second_moment, InputStats};
use crate::losses::{constraint_loss_logits, ms_ssim, multiloss, obce, occupancy_ce_logits};

const ORDER_STREAM: u64 = 1 << 42;
const POINT_STREAM: u64 = 1 << 44;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Epochs per stage; the designer runs two stages.
    pub epochs: usize,
    pub seed: u64,
    pub adam: AdamConfig,
    /// Samples per Adam step.
    pub batch: usize,
    /// Base learning rate of the multiloss weights.
    pub alpha_lr: f64,
    /// Base learning rate of the designer's second stage.
    pub refine_lr: f64,
    /// Voxel points drawn per step for the occupancy losses; `None` uses
    /// the whole grid.
    pub points: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            seed: 0,
            adam: AdamConfig {
                base_lr: 1e-3,
                ..AdamConfig::default()
            },
            batch: 1,
            alpha_lr: 1e-2,
            refine_lr: 1e-4,
            points: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch == 0 {
            return Err(Error::Config("epochs and batch must be positive".into()));
        }
        if !(self.adam.base_lr > 0.0) || !(self.alpha_lr > 0.0) || !(self.refine_lr > 0.0) {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        if self.points == Some(0) {
            return Err(Error::Config("point subsample must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossRow {
    pub epoch: usize,
    pub term: String,
    pub value: f64,
    pub alphas: Vec<f64>,
}

/// Per-epoch mean of every loss term, with the multiloss weights at the
/// end of the epoch.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossHistory {
    pub alpha_names: Vec<String>,
    pub rows: Vec<LossRow>,
}

impl LossHistory {
    pub fn new(alpha_names: &[&str]) -> Self {
        Self {
            alpha_names: alpha_names.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push_epoch(&mut self, epoch: usize, terms: &[(&str, f64)], alphas: &[f64]) {
        for (term, value) in terms {
            self.rows.push(LossRow {
                epoch,
                term: term.to_string(),
                value: *value,
                alphas: alphas.to_vec(),
            });
        }
    }

    /// `(epoch, value)` of one term in epoch order.
    pub fn series(&self, term: &str) -> Vec<(usize, f64)> {
        self.rows
            .iter()
            .filter(|r| r.term == term)
            .map(|r| (r.epoch, r.value))
            .collect()
    }

    pub fn first(&self, term: &str) -> Option<f64> {
        self.series(term).first().map(|p| p.1)
    }

    pub fn last(&self, term: &str) -> Option<f64> {
        self.series(term).last().map(|p| p.1)
    }

    pub fn final_alphas(&self) -> Option<&[f64]> {
        self.rows.last().map(|r| r.alphas.as_slice())
    }

    /// CSV with `# `-prefixed header lines.
    pub fn to_csv(&self, header: &[String]) -> String {
        let mut out = String::new();
        for h in header {
            let _ = writeln!(out, "# {h}");
        }
        out.push_str("epoch,term,value");
        for n in &self.alpha_names {
            let _ = write!(out, ",{n}");
        }
        out.push('\n');
        for r in &self.rows {
            let _ = write!(out, "{},{},{}", r.epoch, r.term, r.value);
            for a in &r.alphas {
                let _ = write!(out, ",{a}");
            }
            out.push('\n');
        }
        out
    }
}

/// Everything a run needs to continue where it stopped.
#[derive(Clone, Debug)]
pub struct TrainState {
    pub spec: ModelSpec,
    pub config: TrainConfig,
    pub store: ParamStore,
    pub adam: AdamState,
    /// Completed epochs, counted across stages.
    pub epoch: usize,
    pub history: LossHistory,
}

impl TrainState {
    pub fn new(spec: ModelSpec, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let (model, store) = spec.build()?;
        let adam = fresh_adam(&config, &store, &model);
        let history = match spec.kind {
            ModelKind::Simulator => LossHistory::new(&[]),
            ModelKind::Designer => LossHistory::new(&["alpha_obce", "alpha_ms_ssim"]),
            ModelKind::Array => LossHistory::new(&["alpha_structure", "alpha_constraint"]),
        };
        Ok(Self {
            spec,
            config,
            store,
            adam,
            epoch: 0,
            history,
        })
    }

    pub fn model(&self) -> Result<Model> {
        self.spec.rebuild(&self.store)
    }

    /// Epochs of a complete run.
    pub fn total_epochs(&self) -> usize {
        match self.spec.kind {
            ModelKind::Designer => 2 * self.config.epochs,
            _ => self.config.epochs,
        }
    }

    pub fn alphas(&self, model: &Model) -> Vec<f64> {
        model
            .alpha()
            .map(|id| self.store.get(id).data().to_vec())
            .unwrap_or_default()
    }
}

fn fresh_adam(config: &TrainConfig, store: &ParamStore, model: &Model) -> AdamState {
    let mut adam = AdamState::new(config.adam, store);
    if let Some(id) = model.alpha() {
        adam.lr_scale[id.0] = config.alpha_lr / config.adam.base_lr;
    }
    adam
}

/// Samples used to measure layer-input statistics at initialization.
const CALIBRATION_SAMPLES: usize = 32;

fn second_moment_of(values: &[Vec<f64>]) -> Result<f64> {
    let m = estimate_second_moment(values.iter().map(Vec::as_slice))?;
    if !(m > 0.0) || !m.is_finite() {
        return Err(Error::Degenerate(format!("layer input second moment {m}")));
    }
    Ok(m)
}

/// Sets the designer's input statistics to the mean square of the input of
/// f's last layer at initialization, measured on the first training samples.
pub fn calibrate_designer(spec: &mut ModelSpec, data: &[AntennaSample]) -> Result<()> {
    check_spec(spec, ModelKind::Designer)?;
    spec.stats = InputStats::default();
    let (model, store) = spec.build()?;
    let Model::Designer(des) = &model else {
        unreachable!()
    };
    let hidden = data
        .iter()
        .take(CALIBRATION_SAMPLES)
        .map(|s| {
            let mut tape = Tape::new();
            let bound = store.bind(&mut tape, false);
            let input = tape.constant(HyperNet::input_tensor(&s.directivity)?);
            let layers = bind_layers(&des.hyper_layers, &bound);
            let h = des.hyper.hidden(&mut tape, &layers, input, s.scale)?;
            Ok(tape.value(h).data().to_vec())
        })
        .collect::<Result<Vec<_>>>()?;
    spec.stats = InputStats::new(second_moment_of(&hidden)?, 1.0)?;
    Ok(())
}

/// Sets the array model's statistics: the mean square of q's last-layer
/// input, then, with q scaled by it, the mean square of f's last-layer input.
pub fn calibrate_array(spec: &mut ModelSpec, data: &[ArraySample]) -> Result<()> {
    check_spec(spec, ModelKind::Array)?;
    spec.stats = InputStats::default();
    let subset: Vec<&ArraySample> = data.iter().take(CALIBRATION_SAMPLES).collect();
    let (model, store) = spec.build()?;
    let Model::Array(arr) = &model else {
        unreachable!()
    };
    if let Some(hh) = &arr.hyperhyper {
        let feats = subset
            .iter()
            .map(|s| {
                let mut tape = Tape::new();
                let bound = store.bind(&mut tape, false);
                let c = tape.constant(s.constraint.to_tensor());
                let u = hh
                    .net
                    .features(&mut tape, &bind_layers(&hh.trunk, &bound), c)?;
                Ok(tape.value(u).data().to_vec())
            })
            .collect::<Result<Vec<_>>>()?;
        spec.stats.var_c = second_moment_of(&feats)?;
    }
    let (model, store) = spec.build()?;
    let Model::Array(arr) = &model else {
        unreachable!()
    };
    let hidden = subset
        .iter()
        .map(|s| {
            let mut tape = Tape::new();
            let bound = store.bind(&mut tape, false);
            let layers = arr.hyper_layers(&mut tape, &bound, &s.constraint)?;
            let input = tape.constant(HyperNet::input_tensor(&s.gain)?);
            let h = arr.hyper.hidden(&mut tape, &layers, input, s.scale)?;
            Ok(tape.value(h).data().to_vec())
        })
        .collect::<Result<Vec<_>>>()?;
    spec.stats.var_e = second_moment_of(&hidden)?;
    Ok(())
}

/// One pass over `n` samples in a seed-and-epoch-determined order. `step`
/// gets the sample index and a per-step random stream, and returns the loss
/// terms of that sample, the last being the minimized total.
fn run_epoch(
    state: &mut TrainState,
    sched_epoch: usize,
    n: usize,
    mut step: impl FnMut(&mut Tape, &Bound, usize, u64) -> Result<Vec<Var>>,
) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::Contract("training on an empty split".into()));
    }
    let epoch = state.epoch;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut sample_rng(
        state.config.seed,
        ORDER_STREAM + epoch as u64,
    ));
    let mut accum = GradAccum::new(&state.store);
    let mut sums: Vec<f64> = Vec::new();
    for (k, &i) in order.iter().enumerate() {
        let mut tape = Tape::new();
        let bound = state.store.bind(&mut tape, true);
        let stream = POINT_STREAM + ((epoch as u64) << 24) + k as u64;
        let terms = match step(&mut tape, &bound, i, stream) {
            // inputs are checked before training, so a domain error here means divergence
            Err(Error::Domain(reason)) => {
                return Err(Error::Training { epoch, reason });
            }
            other => other?,
        };
        let values: Vec<f64> = terms.iter().map(|&v| tape.value(v).item()).collect();
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Training {
                epoch,
                reason: format!("loss {bad} on sample {i}"),
            });
        }
        if sums.is_empty() {
            sums = vec![0.0; values.len()];
        }
        sums.iter_mut().zip(&values).for_each(|(s, v)| *s += v);
        let total = *terms
            .last()
            .ok_or_else(|| Error::Contract("step returned no loss".into()))?;
        let mut grads = tape.backward(total)?;
        accum.add(&bound.collect(&mut grads));
        if accum.count() == state.config.batch || k + 1 == n {
            let g = accum.drain_mean();
            state.adam.step(&mut state.store, &g, sched_epoch)?;
        }
    }
    Ok(sums.into_iter().map(|s| s / n as f64).collect())
}

/// Sorted point indices for one step, or every point.
pub(crate) fn point_subset(
    seed: u64,
    stream: u64,
    total: usize,
    points: Option<usize>,
) -> Vec<usize> {
    match points {
        Some(m) if m < total => {
            let mut idx = sample(&mut sample_rng(seed, stream), total, m).into_vec();
            idx.sort_unstable();
            idx
        }
        _ => (0..total).collect(),
    }
}

fn gather(values: &[f64], idx: &[usize]) -> Vec<f64> {
    idx.iter().map(|&i| values[i]).collect()
}

fn finish_epoch(state: &mut TrainState, model: &Model, names: &[&str], means: &[f64]) {
    let alphas = state.alphas(model);
    let terms: Vec<(&str, f64)> = names.iter().copied().zip(means.iter().copied()).collect();
    state.history.push_epoch(state.epoch, &terms, &alphas);
    state.epoch += 1;
}

fn check_spec(spec: &ModelSpec, kind: ModelKind) -> Result<()> {
    if spec.kind != kind {
        return Err(Error::Contract(format!(
            "expected a {kind:?} model, got {:?}",
            spec.kind
        )));
    }
    Ok(())
}

fn check_kind(state: &TrainState, kind: ModelKind) -> Result<()> {
    if state.spec.kind != kind {
        return Err(Error::Contract(format!(
            "expected a {kind:?} run, got {:?}",
            state.spec.kind
        )));
    }
    Ok(())
}

/// Trains h to reproduce peak-normalized patterns; the loss is
/// `−msSSIM(h(S, V), Û)`. Stops after epoch `until` (capped at the run length).
pub fn train_simulator(state: &mut TrainState, data: &[AntennaSample], until: usize) -> Result<()> {
    check_kind(state, ModelKind::Simulator)?;
    let model = state.model()?;
    let Model::Simulator(sim) = &model else {
        unreachable!()
    };
    let targets = data
        .iter()
        .map(|s| map_tensor(&s.pattern))
        .collect::<Result<Vec<_>>>()?;
    let until = until.min(state.total_epochs());
    while state.epoch < until {
        let sched = state.epoch;
        let means = run_epoch(state, sched, data.len(), |tape, bound, i, _| {
            let s = &data[i];
            let v = tape.constant(s.structure.to_tensor());
            let u = sim.forward(tape, bound, v, s.scale)?;
            let target = tape.constant(targets[i].clone());
            let score = ms_ssim(tape, u, target)?;
            Ok(vec![tape.neg(score)])
        })?;
        finish_epoch(state, &model, &["total"], &means);
    }
    Ok(())
}

/// Mean validation MS-SSIM of h against the peak-normalized patterns.
pub fn simulator_score(state: &TrainState, data: &[AntennaSample]) -> Result<f64> {
    check_kind(state, ModelKind::Simulator)?;
    let model = state.model()?;
    let Model::Simulator(sim) = &model else {
        unreachable!()
    };
    let mut total = 0.0;
    for s in data {
        let mut tape = Tape::new();
        let bound = state.store.bind(&mut tape, false);
        let v = tape.constant(s.structure.to_tensor());
        let u = sim.forward(&mut tape, &bound, v, s.scale)?;
        let target = tape.constant(map_tensor(&s.pattern)?);
        let score = ms_ssim(&mut tape, u, target)?;
        total += tape.value(score).item();
    }
    Ok(total / data.len().max(1) as f64)
}

/// Two stages. The first `epochs` train f on the occupancy cross-entropy of
/// `g(f(D, S))` against V. The next `epochs` freeze f, sample O once per
/// sample, and train t and the multiloss weights on OBCE plus
/// `1 − msSSIM(h(S, V̄), Û)` through the frozen simulator.
pub fn train_designer(
    state: &mut TrainState,
    data: &[AntennaSample],
    sim: &TrainState,
    until: usize,
) -> Result<()> {
    check_kind(state, ModelKind::Designer)?;
    check_kind(sim, ModelKind::Simulator)?;
    if sim.spec.arch.voxels != state.spec.arch.voxels
        || sim.spec.arch.sphere != state.spec.arch.sphere
    {
        return Err(Error::Config("simulator and designer grids differ".into()));
    }
    let model = state.model()?;
    let Model::Designer(des) = &model else {
        unreachable!()
    };
    let (seed, points) = (state.config.seed, state.config.points);
    let sim_model = sim.model()?;
    let Model::Simulator(h) = &sim_model else {
        unreachable!()
    };
    let stage_len = state.config.epochs;
    let until = until.min(state.total_epochs());

    while state.epoch < until.min(stage_len) {
        let sched = state.epoch;
        let means = run_epoch(state, sched, data.len(), |tape, bound, i, stream| {
            let s = &data[i];
            let idx = point_subset(seed, stream, des.points.shape()[0], points);
            let pts = select_points(&des.points, &idx);
            let z = des.logits_at(tape, bound, &s.directivity, s.scale, &pts)?;
            let ce = occupancy_ce_logits(tape, z, &gather(s.structure.data(), &idx))?;
            Ok(vec![ce])
        })?;
        finish_epoch(state, &model, &["total"], &means);
    }
    if state.epoch >= until {
        return Ok(());
    }

    if state.epoch == stage_len {
        let config = TrainConfig {
            adam: AdamConfig {
                base_lr: state.config.refine_lr,
                ..state.config.adam
            },
            ..state.config.clone()
        };
        state.adam = fresh_adam(&config, &state.store, &model);
    }
    let cache = data
        .iter()
        .map(|s| {
            let mut tape = Tape::new();
            let bound = state.store.bind(&mut tape, false);
            let o = des.occupancy(&mut tape, &bound, &s.directivity, s.scale)?;
            Ok(tape.value(o).clone())
        })
        .collect::<Result<Vec<Tensor>>>()?;
    let targets = data
        .iter()
        .map(|s| map_tensor(&s.pattern))
        .collect::<Result<Vec<_>>>()?;
    while state.epoch < until {
        let sched = state.epoch - stage_len;
        let means = run_epoch(state, sched, data.len(), |tape, bound, i, _| {
            let s = &data[i];
            let h_bound = sim.store.bind(tape, false);
            let mask = tape.constant(s.mask.to_tensor());
            let occ = tape.constant(cache[i].clone());
            let refined = des.refine(tape, bound, mask, occ)?;
            let loss_obce = obce(tape, refined, s.mask.data())?;
            let u = h.forward(tape, &h_bound, refined, s.scale)?;
            let target = tape.constant(targets[i].clone());
            let score = ms_ssim(tape, u, target)?;
            let neg = tape.neg(score);
            let loss_ms = tape.add_scalar(neg, 1.0);
            let alpha = bound.var(des.alpha);
            let total = multiloss(tape, &[loss_obce, loss_ms], alpha)?;
            Ok(vec![loss_obce, loss_ms, total])
        })?;
        finish_epoch(state, &model, &["obce", "ms_ssim_loss", "total"], &means);
    }
    Ok(())
}

/// Trains q, f's conventional layers and the multiloss weights on the
/// structural cross-entropy of O₁ plus the constraint loss of O₂.
/// Structure and constraint losses of one array sample at the grid points
/// `idx` (sorted indices into the composite grid).
pub fn array_terms(
    arr: &ArrayModel,
    tape: &mut Tape,
    bound: &Bound,
    s: &ArraySample,
    idx: &[usize],
) -> Result<(Var, Var)> {
    let pts = select_points(&arr.points, idx);
    let out = arr.logits_at(tape, bound, &s.gain, s.scale, &s.constraint, &pts)?;
    let loss_structure = occupancy_ce_logits(tape, out.metal, &gather(s.structure.data(), idx))?;
    // each point is its own cell of a 1×P plane
    let n = idx.len();
    let valid = tape.reshape(out.valid, &[1, 1, n])?;
    let over = idx
        .iter()
        .map(|&p| {
            let (x, y, _) = arr.dims.coords(p);
            if s.constraint.is_forbidden(x, y) {
                1.0
            } else {
                0.0
            }
        })
        .collect::<Vec<_>>();
    let loss_constraint = constraint_loss_logits(tape, valid, &over)?;
    Ok((loss_structure, loss_constraint))
}

pub fn train_array(state: &mut TrainState, data: &[ArraySample], until: usize) -> Result<()> {
    check_kind(state, ModelKind::Array)?;
    let model = state.model()?;
    let Model::Array(arr) = &model else {
        unreachable!()
    };
    let (seed, points) = (state.config.seed, state.config.points);
    let until = until.min(state.total_epochs());
    while state.epoch < until {
        let sched = state.epoch;
        let means = run_epoch(state, sched, data.len(), |tape, bound, i, stream| {
            let s = &data[i];
            let idx = point_subset(seed, stream, arr.points.shape()[0], points);
            let (loss_structure, loss_constraint) = array_terms(arr, tape, bound, s, &idx)?;
            let alpha = bound.var(arr.alpha);
            let total = multiloss(tape, &[loss_structure, loss_constraint], alpha)?;
            Ok(vec![loss_structure, loss_constraint, total])
        })?;
        finish_epoch(state, &model, &["structure", "constraint", "total"], &means);
    }
    Ok(())
}
