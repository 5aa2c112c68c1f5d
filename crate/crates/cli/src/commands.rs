use std::fs;
use std::path::Path;

use hhn_core::blocksel::{knapsack_select, score_layers, scores_csv, ArrayLayerProbe};
use hhn_core::datagen::{
    generate_array, generate_single, read_dataset, split, write_dataset, AntennaSample,
    ArraySample, Dataset, DatasetKind, Manifest, Samples, FORMAT_VERSION,
};
use hhn_core::hyperinit::{variance_probe, InitScheme, InputStats};
use hhn_core::link::ber_sweep;
use hhn_core::nets::train::{calibrate_array, calibrate_designer};
use hhn_core::nets::{
    eval_array, eval_single, load_checkpoint, save_checkpoint, train_array as fit_array,
    train_designer as fit_designer, train_simulator, EvalMode, ModelKind, ModelSpec, TrainState,
};
use hhn_core::{Error, Result};

use crate::config::RunConfig;

const TRAIN_SHARE: f64 = 0.9;
/// Below this many iterations the BER confidence intervals are flagged as wide.
const FEW_ITERATIONS: u64 = 1_000;

fn write_run_config(cfg: &RunConfig, out: &Path) -> Result<()> {
    fs::create_dir_all(out)?;
    let mut json = serde_json::to_string_pretty(cfg)?;
    json.push('\n');
    fs::write(out.join("run_config.json"), json)?;
    Ok(())
}

fn load_data(cfg: &mut RunConfig) -> Result<Dataset> {
    let path = cfg
        .paths
        .data
        .clone()
        .ok_or_else(|| Error::Config("--data is required".into()))?;
    if !path.join("manifest.json").is_file() {
        return Err(Error::Config(format!("no dataset at {}", path.display())));
    }
    let ds = read_dataset(&path)?;
    // the networks take their grids from the data they train on
    cfg.arch.voxels = ds.manifest.single.voxels;
    cfg.arch.sphere = ds.manifest.single.sphere;
    if let Some(layout) = &ds.manifest.array {
        cfg.arch.array = layout.clone();
    }
    cfg.single = ds.manifest.single.clone();
    Ok(ds)
}

fn pick<T: Clone>(samples: &[T], idx: &[usize]) -> Vec<T> {
    idx.iter().map(|&i| samples[i].clone()).collect()
}

fn singles(ds: &Dataset) -> Result<(Vec<AntennaSample>, Vec<AntennaSample>)> {
    let s = ds.singles()?;
    Ok((pick(s, &ds.manifest.train), pick(s, &ds.manifest.test)))
}

fn arrays(ds: &Dataset) -> Result<(Vec<ArraySample>, Vec<ArraySample>)> {
    let s = ds.arrays()?;
    Ok((pick(s, &ds.manifest.train), pick(s, &ds.manifest.test)))
}

pub fn gen_data(cfg: &RunConfig, out: &Path) -> Result<()> {
    let single = cfg.single_config();
    let layout = cfg.array_layout();
    let (train, test) = split(cfg.count, TRAIN_SHARE, cfg.seed)?;
    let (samples, array) = match cfg.kind {
        DatasetKind::Single => (
            Samples::Single(generate_single(cfg.count, cfg.seed, &single)?),
            None,
        ),
        DatasetKind::Array => (
            Samples::Array(generate_array(cfg.count, cfg.seed, &single, &layout)?),
            Some(layout),
        ),
    };
    let ds = Dataset {
        manifest: Manifest {
            format_version: FORMAT_VERSION,
            kind: cfg.kind,
            seed: cfg.seed,
            single,
            array,
            count: cfg.count,
            train,
            test,
        },
        samples,
    };
    write_dataset(out, &ds)?;
    write_run_config(cfg, out)?;
    println!(
        "wrote {} {:?} samples to {}",
        cfg.count,
        cfg.kind,
        out.display()
    );
    Ok(())
}

/// A resumed checkpoint, or a fresh state from `spec`.
fn start(
    cfg: &RunConfig,
    kind: ModelKind,
    spec: impl FnOnce() -> Result<ModelSpec>,
) -> Result<TrainState> {
    match &cfg.paths.resume {
        Some(path) => {
            let state = load_checkpoint(path)?;
            if state.spec.kind != kind {
                return Err(Error::Config(format!(
                    "{} holds a {:?} model",
                    path.display(),
                    state.spec.kind
                )));
            }
            Ok(state)
        }
        None => TrainState::new(spec()?, cfg.train.clone()),
    }
}

fn target_epoch(cfg: &RunConfig, state: &TrainState) -> usize {
    let total = state.total_epochs();
    cfg.stop_after.map_or(total, |s| s.min(total))
}

fn finish(cfg: &RunConfig, out: &Path, state: &TrainState) -> Result<()> {
    write_run_config(cfg, out)?;
    save_checkpoint(&out.join("model.ckpt"), state)?;
    fs::write(out.join("loss.csv"), state.history.to_csv(&cfg.header()?))?;
    let last = state.history.last("total").unwrap_or(f64::NAN);
    println!(
        "epoch {}: total loss {last:.6}; wrote {}",
        state.epoch,
        out.display()
    );
    Ok(())
}

pub fn train_sim(cfg: &RunConfig, out: &Path) -> Result<()> {
    let mut cfg = cfg.clone();
    let ds = load_data(&mut cfg)?;
    let (train, _) = singles(&ds)?;
    let mut state = start(&cfg, ModelKind::Simulator, || {
        Ok(ModelSpec::simulator(cfg.arch.clone(), cfg.seed))
    })?;
    let until = target_epoch(&cfg, &state);
    train_simulator(&mut state, &train, until)?;
    finish(&cfg, out, &state)
}

pub fn train_designer(cfg: &RunConfig, out: &Path) -> Result<()> {
    let mut cfg = cfg.clone();
    let ds = load_data(&mut cfg)?;
    let (train, _) = singles(&ds)?;
    let sim_path = cfg
        .paths
        .simulator
        .clone()
        .ok_or_else(|| Error::Config("--sim is required".into()))?;
    let sim = load_checkpoint(&sim_path)?;
    let mut state = start(&cfg, ModelKind::Designer, || {
        let mut spec =
            ModelSpec::designer(cfg.arch.clone(), cfg.init, InputStats::default(), cfg.seed);
        calibrate_designer(&mut spec, &train)?;
        Ok(spec)
    })?;
    let until = target_epoch(&cfg, &state);
    fit_designer(&mut state, &train, &sim, until)?;
    finish(&cfg, out, &state)
}

/// Entropy scores of every layer of f and the knapsack pick under the budget.
fn select_layers(
    cfg: &RunConfig,
    spec: &ModelSpec,
    train: &[ArraySample],
    out: &Path,
) -> Result<Vec<usize>> {
    let mut probe = ArrayLayerProbe::new(spec, train, cfg.selection_points, cfg.seed)?;
    let scores = score_layers(&mut probe, &cfg.selection, cfg.seed)?;
    let selected = knapsack_select(&scores, cfg.selection.max_params);
    fs::create_dir_all(out)?;
    fs::write(
        out.join("layer_scores.csv"),
        scores_csv(&scores, &selected, &cfg.header()?),
    )?;
    fs::write(
        out.join("selected.json"),
        serde_json::to_string(&selected)? + "\n",
    )?;
    Ok(selected)
}

fn array_spec(cfg: &RunConfig, train: &[ArraySample], out: &Path) -> Result<ModelSpec> {
    let mut spec = ModelSpec::array(
        cfg.arch.clone(),
        cfg.init,
        InputStats::default(),
        Vec::new(),
        cfg.seed,
    );
    let selected = match &cfg.layers {
        Some(layers) => layers.clone(),
        None => {
            calibrate_array(&mut spec, train)?;
            select_layers(cfg, &spec, train, out)?
        }
    };
    spec.selected = selected;
    calibrate_array(&mut spec, train)?;
    Ok(spec)
}

pub fn train_array(cfg: &RunConfig, out: &Path) -> Result<()> {
    let mut cfg = cfg.clone();
    let ds = load_data(&mut cfg)?;
    let (train, _) = arrays(&ds)?;
    let mut state = start(&cfg, ModelKind::Array, || array_spec(&cfg, &train, out))?;
    let until = target_epoch(&cfg, &state);
    fit_array(&mut state, &train, until)?;
    finish(&cfg, out, &state)
}

pub fn blocksel(cfg: &RunConfig, out: &Path) -> Result<()> {
    let mut cfg = cfg.clone();
    let ds = load_data(&mut cfg)?;
    let (train, _) = arrays(&ds)?;
    let mut spec = ModelSpec::array(
        cfg.arch.clone(),
        cfg.init,
        InputStats::default(),
        Vec::new(),
        cfg.seed,
    );
    calibrate_array(&mut spec, &train)?;
    let selected = select_layers(&cfg, &spec, &train, out)?;
    write_run_config(&cfg, out)?;
    println!("selected layers {selected:?}");
    Ok(())
}

pub fn ber(cfg: &RunConfig, out: &Path) -> Result<()> {
    let b = &cfg.ber;
    let rows = ber_sweep(b.max_antennas, b.snr_db, b.k, b.iterations, cfg.seed)?;
    let mut csv = String::new();
    for h in cfg.header()? {
        csv.push_str(&format!("# {h}\n"));
    }
    if b.iterations < FEW_ITERATIONS {
        csv.push_str(&format!(
            "# only {} iterations: confidence intervals are wide\n",
            b.iterations
        ));
    }
    csv.push_str("n_antennas,snr_db,k,iterations,bit_errors,ber,std_err,ci95_low,ci95_high\n");
    for r in &rows {
        let (lo, hi) = r.wilson_95();
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.n_antennas,
            r.snr_db,
            r.k,
            r.iterations,
            r.bit_errors,
            r.ber,
            r.std_err(),
            lo,
            hi
        ));
    }
    write_run_config(cfg, out)?;
    fs::write(out.join("ber.csv"), csv)?;
    for r in &rows {
        println!("n={} ber={:.3e}", r.n_antennas, r.ber);
    }
    Ok(())
}

pub fn init_probe(cfg: &RunConfig, out: &Path) -> Result<()> {
    let p = &cfg.probe;
    let schemes: Vec<InitScheme> = match p.scheme {
        Some(s) => vec![s],
        None => InitScheme::ALL.to_vec(),
    };
    let mut csv = String::new();
    for h in cfg.header()? {
        csv.push_str(&format!("# {h}\n"));
    }
    csv.push_str("scheme,stage,layer,variance_ratio\n");
    for s in schemes {
        let r = variance_probe(&p.stack, s, p.trials, cfg.seed, p.elu)?;
        for row in r.rows() {
            csv.push_str(&format!(
                "{},{},{},{}\n",
                row.scheme, row.stage, row.layer, row.variance_ratio
            ));
        }
        println!(
            "{}: output ratio {:.4} (predicted {:.4})",
            s.name(),
            r.output_ratio,
            r.predicted_ratio
        );
    }
    write_run_config(cfg, out)?;
    fs::write(out.join("variance.csv"), csv)?;
    Ok(())
}

pub fn eval(cfg: &RunConfig, out: &Path) -> Result<()> {
    let mut cfg = cfg.clone();
    let ds = load_data(&mut cfg)?;
    let model = match (&cfg.paths.checkpoint, cfg.eval_mode) {
        (Some(path), _) => Some(load_checkpoint(path)?),
        (None, EvalMode::Model) => {
            return Err(Error::Config(
                "--checkpoint is required in model mode".into(),
            ))
        }
        (None, _) => None,
    };
    let report = match ds.manifest.kind {
        DatasetKind::Single => {
            let (train, test) = singles(&ds)?;
            eval_single(cfg.eval_mode, &test, &train, model.as_ref())?
        }
        DatasetKind::Array => {
            let (train, test) = arrays(&ds)?;
            eval_array(
                cfg.eval_mode,
                &test,
                &train,
                &cfg.arch.array,
                model.as_ref(),
            )?
        }
    };
    let header = cfg.header()?;
    write_run_config(&cfg, out)?;
    fs::write(out.join("samples.csv"), report.samples_csv(&header))?;
    fs::write(out.join("summary.csv"), report.summary_csv(&header))?;
    for s in report.summary() {
        println!("{}: {:?} ± {:?} over {}", s.metric, s.mean, s.std, s.count);
    }
    Ok(())
}
