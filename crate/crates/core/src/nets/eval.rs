//! Evaluation of designs against held-out samples: model predictions, the
//! ground truth itself, or the nearest training sample in radiation space.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::models::{Model, ModelKind};
use super::train::TrainState;
use crate::autodiff::Tape;
use crate::datagen::{surrogate_radiation, AntennaSample, ArrayConfig, ArraySample};
use crate::em::{
    array_gain, c_ratio, directivity, iou, m_recall, pattern_snr_db, Placement, SphericalMap,
    VoxelGrid,
};
use crate::error::{Error, Result};
use crate::losses::ms_ssim_maps;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalMode {
    /// Designs produced by a trained model.
    Model,
    /// The ground-truth structure of each sample.
    Gt,
    /// The structure of the training sample whose target map is closest.
    Nn,
}

impl std::str::FromStr for EvalMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "model" => Ok(EvalMode::Model),
            "gt" => Ok(EvalMode::Gt),
            "nn" => Ok(EvalMode::Nn),
            other => Err(Error::Config(format!("unknown eval mode {other:?}"))),
        }
    }
}

pub const METRICS: [&str; 5] = ["ms_ssim", "snr_db", "iou", "m_recall", "c_ratio"];

/// Metrics of one sample; `None` where a metric is undefined or does not apply.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalRow {
    pub sample: usize,
    pub values: [Option<f64>; 5],
    pub neighbor: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricSummary {
    pub metric: &'static str,
    pub mean: Option<f64>,
    /// Population standard deviation.
    pub std: Option<f64>,
    pub count: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl EvalReport {
    pub fn column(&self, metric: usize) -> Vec<f64> {
        self.rows.iter().filter_map(|r| r.values[metric]).collect()
    }

    pub fn summary(&self) -> Vec<MetricSummary> {
        METRICS
            .iter()
            .enumerate()
            .map(|(k, &metric)| {
                let v = self.column(k);
                if v.is_empty() {
                    return MetricSummary {
                        metric,
                        mean: None,
                        std: None,
                        count: 0,
                    };
                }
                let n = v.len() as f64;
                let mean = v.iter().sum::<f64>() / n;
                let std = if mean.is_finite() {
                    (v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n).sqrt()
                } else if v.iter().all(|&x| x == mean) {
                    // a perfect reconstruction has infinite SNR on every row
                    0.0
                } else {
                    f64::NAN
                };
                MetricSummary {
                    metric,
                    mean: Some(mean),
                    std: Some(std),
                    count: v.len(),
                }
            })
            .collect()
    }

    pub fn samples_csv(&self, header: &[String]) -> String {
        let mut out = String::new();
        for h in header {
            let _ = writeln!(out, "# {h}");
        }
        let _ = writeln!(out, "sample,{},neighbor", METRICS.join(","));
        for r in &self.rows {
            let cols: Vec<String> = r.values.iter().map(|&v| fmt_opt(v)).collect();
            let nb = r.neighbor.map(|n| n.to_string()).unwrap_or_default();
            let _ = writeln!(out, "{},{},{nb}", r.sample, cols.join(","));
        }
        out
    }

    pub fn summary_csv(&self, header: &[String]) -> String {
        let mut out = String::new();
        for h in header {
            let _ = writeln!(out, "# {h}");
        }
        out.push_str("metric,mean,std,count\n");
        for s in self.summary() {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                s.metric,
                fmt_opt(s.mean),
                fmt_opt(s.std),
                s.count
            );
        }
        out
    }
}

/// Keeps undefined metrics as gaps; every other error propagates.
fn defined(r: Result<f64>) -> Result<Option<f64>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::UndefinedMetric(_) | Error::Degenerate(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Index of the candidate with the highest MS-SSIM against `query`; the
/// first one wins ties.
pub fn nearest_neighbor(query: &SphericalMap, candidates: &[&SphericalMap]) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, c) in candidates.iter().enumerate() {
        let s = ms_ssim_maps(query, c)?;
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((i, s));
        }
    }
    best.map(|b| b.0)
        .ok_or_else(|| Error::Contract("nearest neighbor among no candidates".into()))
}

/// Single-antenna metrics of a (probability) structure against a sample.
pub fn single_metrics(pred: &VoxelGrid, sample: &AntennaSample) -> Result<[Option<f64>; 5]> {
    let bin = pred.binarized();
    let grid = sample.directivity.grid();
    let d = surrogate_radiation(&bin, sample.scale, grid).and_then(|u| directivity(&u));
    let (ms, snr) = match d {
        Ok(d) => (
            defined(ms_ssim_maps(&d, &sample.directivity))?,
            defined(pattern_snr_db(&d, &sample.directivity))?,
        ),
        Err(Error::Degenerate(_)) => (None, None),
        Err(e) => return Err(e),
    };
    Ok([
        ms,
        snr,
        defined(iou(&bin, &sample.structure))?,
        defined(m_recall(&bin, &sample.mask))?,
        None,
    ])
}

/// Array gain of a composite structure: each of the sample's element slots
/// is cut from `structure` and radiated with that element's stored scale.
pub fn recomputed_gain(
    structure: &VoxelGrid,
    sample: &ArraySample,
    layout: &ArrayConfig,
) -> Result<SphericalMap> {
    let grid = sample.gain.grid();
    let element = sample
        .elements
        .first()
        .ok_or_else(|| Error::Contract("array sample without elements".into()))?
        .structure
        .dims();
    if layout.composite_dims(element) != structure.dims() {
        return Err(Error::Dimension(
            "structure does not match the slot layout".into(),
        ));
    }
    let mut patterns = Vec::with_capacity(sample.elements.len());
    let mut places = Vec::with_capacity(sample.elements.len());
    for e in &sample.elements {
        let (x0, y0) = layout.slot_origin(e.slot, element);
        let mut cell = VoxelGrid::zeros(element);
        for z in 0..element.nz {
            for y in 0..element.ny {
                for x in 0..element.nx {
                    cell.set(x, y, z, structure.get(x0 + x, y0 + y, z));
                }
            }
        }
        // an emptied slot radiates nothing
        patterns.push(match surrogate_radiation(&cell, e.scale, grid) {
            Err(Error::Degenerate(_)) => SphericalMap::filled(grid, 0.0),
            other => other?,
        });
        places.push(Placement::at(layout.slot_center(e.slot)));
    }
    array_gain(&patterns, &places)
}

pub fn array_metrics(
    pred: &VoxelGrid,
    sample: &ArraySample,
    layout: &ArrayConfig,
) -> Result<[Option<f64>; 5]> {
    let bin = pred.binarized();
    let ag = recomputed_gain(&bin, sample, layout)?;
    Ok([
        defined(ms_ssim_maps(&ag, &sample.gain))?,
        defined(pattern_snr_db(&ag, &sample.gain))?,
        defined(iou(&bin, &sample.structure))?,
        None,
        defined(c_ratio(&bin, &sample.constraint))?,
    ])
}

/// `V̄` of a trained designer for one sample, as probabilities.
pub fn design_single(state: &TrainState, sample: &AntennaSample) -> Result<VoxelGrid> {
    let Model::Designer(des) = state.model()? else {
        return Err(Error::Contract("not a designer checkpoint".into()));
    };
    let mut tape = Tape::new();
    let bound = state.store.bind(&mut tape, false);
    let occ = des.occupancy(&mut tape, &bound, &sample.directivity, sample.scale)?;
    let mask = tape.constant(sample.mask.to_tensor());
    let v = des.refine(&mut tape, &bound, mask, occ)?;
    VoxelGrid::from_tensor(sample.structure.dims(), tape.value(v))
}

/// Metal probability `O₁` of a trained array model for one sample.
pub fn design_array(state: &TrainState, sample: &ArraySample) -> Result<VoxelGrid> {
    let Model::Array(arr) = state.model()? else {
        return Err(Error::Contract("not an array checkpoint".into()));
    };
    let mut tape = Tape::new();
    let bound = state.store.bind(&mut tape, false);
    let out = arr.forward(
        &mut tape,
        &bound,
        &sample.gain,
        sample.scale,
        &sample.constraint,
    )?;
    VoxelGrid::from_tensor(sample.structure.dims(), tape.value(out.metal))
}

fn require_model(
    mode: EvalMode,
    model: Option<&TrainState>,
    kind: ModelKind,
) -> Result<Option<&TrainState>> {
    match (mode, model) {
        (EvalMode::Model, None) => Err(Error::Config("model evaluation needs a checkpoint".into())),
        (EvalMode::Model, Some(m)) if m.spec.kind != kind => Err(Error::Config(format!(
            "checkpoint holds a {:?} model, evaluation needs {kind:?}",
            m.spec.kind
        ))),
        (_, m) => Ok(m),
    }
}

pub fn eval_single(
    mode: EvalMode,
    test: &[AntennaSample],
    train: &[AntennaSample],
    model: Option<&TrainState>,
) -> Result<EvalReport> {
    let model = require_model(mode, model, ModelKind::Designer)?;
    let train_maps: Vec<&SphericalMap> = train.iter().map(|s| &s.directivity).collect();
    let mut rows = Vec::with_capacity(test.len());
    for (i, s) in test.iter().enumerate() {
        let (pred, neighbor) = match mode {
            EvalMode::Gt => (s.structure.clone(), None),
            EvalMode::Nn => {
                let k = nearest_neighbor(&s.directivity, &train_maps)?;
                (train[k].structure.clone(), Some(k))
            }
            EvalMode::Model => (design_single(model.expect("checked"), s)?, None),
        };
        rows.push(EvalRow {
            sample: i,
            values: single_metrics(&pred, s)?,
            neighbor,
        });
    }
    Ok(EvalReport { rows })
}

pub fn eval_array(
    mode: EvalMode,
    test: &[ArraySample],
    train: &[ArraySample],
    layout: &ArrayConfig,
    model: Option<&TrainState>,
) -> Result<EvalReport> {
    let model = require_model(mode, model, ModelKind::Array)?;
    let train_maps: Vec<&SphericalMap> = train.iter().map(|s| &s.gain).collect();
    let mut rows = Vec::with_capacity(test.len());
    for (i, s) in test.iter().enumerate() {
        let (pred, neighbor) = match mode {
            EvalMode::Gt => (s.structure.clone(), None),
            EvalMode::Nn => {
                let k = nearest_neighbor(&s.gain, &train_maps)?;
                (train[k].structure.clone(), Some(k))
            }
            EvalMode::Model => (design_array(model.expect("checked"), s)?, None),
        };
        rows.push(EvalRow {
            sample: i,
            values: array_metrics(&pred, s, layout)?,
            neighbor,
        });
    }
    Ok(EvalReport { rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{generate_array, generate_single, SingleConfig};

    #[test]
    fn ground_truth_scores_perfectly() {
        let data = generate_single(4, 9, &SingleConfig::default()).unwrap();
        let r = eval_single(EvalMode::Gt, &data, &data, None).unwrap();
        for row in &r.rows {
            assert_eq!(row.values[0], Some(1.0));
            assert_eq!(row.values[1], Some(f64::INFINITY));
            assert_eq!(row.values[2], Some(1.0));
            assert_eq!(row.values[3], Some(1.0));
            assert_eq!(row.values[4], None);
        }
        let layout = ArrayConfig::default();
        let arrays = generate_array(3, 9, &SingleConfig::default(), &layout).unwrap();
        let r = eval_array(EvalMode::Gt, &arrays, &arrays, &layout, None).unwrap();
        for row in &r.rows {
            assert_eq!(row.values[0], Some(1.0));
            assert_eq!(row.values[2], Some(1.0));
            assert_eq!(row.values[4], Some(1.0));
        }
    }

    #[test]
    fn summary_matches_column() {
        let report = EvalReport {
            rows: (0..4)
                .map(|i| EvalRow {
                    sample: i,
                    values: [Some(i as f64), None, Some(1.0), None, None],
                    neighbor: None,
                })
                .collect(),
        };
        let s = report.summary();
        assert_eq!(s[0].mean, Some(1.5));
        assert!((s[0].std.unwrap() - 1.25f64.sqrt()).abs() < 1e-12);
        assert_eq!(s[1].count, 0);
        assert_eq!(s[2].std, Some(0.0));
    }
}
