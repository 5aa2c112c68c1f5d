mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hhn_core::datagen::DatasetKind;
use hhn_core::hyperinit::InitScheme;
use hhn_core::nets::EvalMode;
use hhn_core::Error;

use crate::config::{output_dir, RunConfig};

#[derive(Parser)]
#[command(
    name = "hhn",
    version,
    about = "Antenna design with hyper- and hyperhypernetworks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON run configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory [default: $HHN_OUT_ROOT/<command>].
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    epochs: Option<usize>,
    /// Stop after this many epochs; continue later with --resume.
    #[arg(long)]
    stop_after: Option<usize>,
    /// Checkpoint of an interrupted run to continue.
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Voxel points per step; omit for the config value.
    #[arg(long)]
    points: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic single-antenna or array dataset.
    GenData {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        n: Option<u64>,
        #[arg(long, value_parser = parse_kind)]
        kind: Option<DatasetKind>,
    },
    /// Train the simulation network on a single-antenna dataset.
    TrainSim {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Train the single-antenna designer against a trained simulator.
    TrainDesigner {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        train: TrainArgs,
        /// Simulator checkpoint from train-sim.
        #[arg(long)]
        sim: PathBuf,
        #[arg(long)]
        init: Option<InitScheme>,
    },
    /// Train the array designer; runs block selection first unless --layers is given.
    TrainArray {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        train: TrainArgs,
        #[arg(long)]
        init: Option<InitScheme>,
        /// Parameter budget for generated layers, or `inf` for all of them.
        #[arg(long, value_parser = parse_budget)]
        q_budget: Option<Budget>,
        /// Comma-separated layers of f generated by q.
        #[arg(long, value_delimiter = ',')]
        layers: Option<Vec<usize>>,
    },
    /// Score the hypernetwork's layers and pick the generated subset.
    Blocksel {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        /// Alias of --config, holding the architecture.
        #[arg(long)]
        model_config: Option<PathBuf>,
        #[arg(long)]
        init: Option<InitScheme>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        bins: Option<usize>,
        #[arg(long = "q", value_parser = parse_budget)]
        budget: Option<Budget>,
        /// Train samples in the probe subset.
        #[arg(long)]
        probe: Option<usize>,
    },
    /// Monte-Carlo BER of MRC over Rician fading versus antenna count.
    Ber {
        #[command(flatten)]
        common: Common,
        #[arg(long, allow_negative_numbers = true)]
        snr_db: Option<f64>,
        #[arg(long)]
        k: Option<f64>,
        #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
        iters: Option<u64>,
        #[arg(long)]
        max_ant: Option<usize>,
    },
    /// Variance propagation through a linear q→f→g micro-stack.
    InitProbe {
        #[command(flatten)]
        common: Common,
        /// One scheme; all three when omitted.
        #[arg(long)]
        scheme: Option<InitScheme>,
        #[arg(long)]
        depth: Option<usize>,
        #[arg(long)]
        trials: Option<usize>,
        /// Apply ELU in the hyperhypernetwork trunk.
        #[arg(long)]
        elu: bool,
    },
    /// Score a checkpoint, the ground truth, or the nearest-neighbor baseline.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        mode: Option<EvalMode>,
    },
}

#[derive(Clone, Copy, Debug)]
enum Budget {
    Finite(usize),
    Unbounded,
}

impl Budget {
    fn limit(self) -> Option<usize> {
        match self {
            Budget::Finite(budget) => Some(budget),
            Budget::Unbounded => None,
        }
    }
}

fn parse_budget(s: &str) -> Result<Budget, String> {
    match s {
        "inf" | "none" => Ok(Budget::Unbounded),
        _ => match s.parse::<usize>() {
            Ok(0) => Err("budget must be positive".into()),
            Ok(budget) => Ok(Budget::Finite(budget)),
            Err(e) => Err(format!("{e}; expected a count or `inf`")),
        },
    }
}

fn parse_kind(s: &str) -> Result<DatasetKind, String> {
    match s {
        "single" => Ok(DatasetKind::Single),
        "array" => Ok(DatasetKind::Array),
        _ => Err(format!("unknown kind {s:?}; expected single or array")),
    }
}

fn base_config(command: &str, common: &Common) -> hhn_core::Result<RunConfig> {
    let mut cfg = RunConfig::load(common.config.as_deref())?;
    cfg.command = command.to_string();
    if let Some(seed) = common.seed {
        cfg.seed = seed;
        cfg.train.seed = seed;
    }
    Ok(cfg)
}

fn apply_train(cfg: &mut RunConfig, t: &TrainArgs) {
    cfg.paths.data = Some(t.data.clone());
    cfg.paths.resume = t.resume.clone();
    if let Some(e) = t.epochs {
        cfg.train.epochs = e;
    }
    if t.points.is_some() {
        cfg.train.points = t.points;
    }
    cfg.stop_after = t.stop_after.or(cfg.stop_after);
}

fn run(cli: Cli) -> hhn_core::Result<()> {
    match cli.command {
        Command::GenData { common, n, kind } => {
            let mut cfg = base_config("gen-data", &common)?;
            if let Some(n) = n {
                cfg.count = n as usize;
            }
            if let Some(k) = kind {
                cfg.kind = k;
            }
            commands::gen_data(&cfg, &output_dir(common.out, "gen-data"))
        }
        Command::TrainSim { common, train } => {
            let mut cfg = base_config("train-sim", &common)?;
            apply_train(&mut cfg, &train);
            commands::train_sim(&cfg, &output_dir(common.out, "train-sim"))
        }
        Command::TrainDesigner {
            common,
            train,
            sim,
            init,
        } => {
            let mut cfg = base_config("train-designer", &common)?;
            apply_train(&mut cfg, &train);
            cfg.paths.simulator = Some(sim);
            cfg.init = init.unwrap_or(cfg.init);
            commands::train_designer(&cfg, &output_dir(common.out, "train-designer"))
        }
        Command::TrainArray {
            common,
            train,
            init,
            q_budget,
            layers,
        } => {
            let mut cfg = base_config("train-array", &common)?;
            apply_train(&mut cfg, &train);
            cfg.init = init.unwrap_or(cfg.init);
            if let Some(budget) = q_budget {
                cfg.selection.max_params = budget.limit();
            }
            cfg.layers = layers.or(cfg.layers);
            commands::train_array(&cfg, &output_dir(common.out, "train-array"))
        }
        Command::Blocksel {
            common,
            data,
            model_config,
            init,
            trials,
            bins,
            budget,
            probe,
        } => {
            let common = Common {
                config: model_config.or(common.config),
                ..common
            };
            let mut cfg = base_config("blocksel", &common)?;
            cfg.paths.data = Some(data);
            cfg.init = init.unwrap_or(cfg.init);
            let s = &mut cfg.selection;
            s.trials = trials.unwrap_or(s.trials);
            s.bins = bins.unwrap_or(s.bins);
            s.probe_samples = probe.unwrap_or(s.probe_samples);
            if let Some(budget) = budget {
                s.max_params = budget.limit();
            }
            commands::blocksel(&cfg, &output_dir(common.out, "blocksel"))
        }
        Command::Ber {
            common,
            snr_db,
            k,
            iters,
            max_ant,
        } => {
            let mut cfg = base_config("ber", &common)?;
            let b = &mut cfg.ber;
            b.snr_db = snr_db.unwrap_or(b.snr_db);
            b.k = k.unwrap_or(b.k);
            b.iterations = iters.unwrap_or(b.iterations);
            b.max_antennas = max_ant.unwrap_or(b.max_antennas);
            commands::ber(&cfg, &output_dir(common.out, "ber"))
        }
        Command::InitProbe {
            common,
            scheme,
            depth,
            trials,
            elu,
        } => {
            let mut cfg = base_config("init-probe", &common)?;
            let p = &mut cfg.probe;
            p.scheme = scheme.or(p.scheme);
            p.stack.primary_depth = depth.unwrap_or(p.stack.primary_depth);
            p.trials = trials.unwrap_or(p.trials);
            p.elu |= elu;
            commands::init_probe(&cfg, &output_dir(common.out, "init-probe"))
        }
        Command::Eval {
            common,
            data,
            checkpoint,
            mode,
        } => {
            let mut cfg = base_config("eval", &common)?;
            cfg.paths.data = Some(data);
            cfg.paths.checkpoint = checkpoint;
            cfg.eval_mode = mode.unwrap_or(cfg.eval_mode);
            commands::eval(&cfg, &output_dir(common.out, "eval"))
        }
    }
}

/// 2 for usage and configuration problems, 3 for numerical failures.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Training { .. } => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("hhn: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
