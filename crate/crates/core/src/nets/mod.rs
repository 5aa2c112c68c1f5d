//! The five networks: primary g, hypernetwork f, hyperhypernetwork q,
//! refinement t and simulator h, plus parameter assembly, training,
//! checkpoints and evaluation.

pub mod checkpoint;
pub mod config;
pub mod eval;
pub mod hyper;
pub mod hyperhyper;
pub mod layers;
pub mod models;
pub mod primary;
pub mod refine;
pub mod simulator;
pub mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use config::ArchConfig;
pub use eval::{eval_array, eval_single, nearest_neighbor, EvalMode, EvalReport};
pub use hyper::HyperNet;
pub use hyperhyper::{assemble_hyper, HyperHyperNet, Partition};
pub use layers::{LayerIds, LayerKind, LayerSpec, LayerVars};
pub use models::{ArrayModel, DesignerModel, Model, ModelKind, ModelSpec, SimulatorModel};
pub use primary::{g_forward, primary_logits, unit_points, Head, PrimaryLayout, PrimaryPart};
pub use refine::{RefineIds, RefineNet, RefineVars};
pub use simulator::SimulatorNet;
pub use train::{
    array_terms, train_array, train_designer, train_simulator, LossHistory, TrainConfig, TrainState,
};
