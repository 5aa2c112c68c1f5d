//! Trainable model bundles: network architectures together with the ids of
//! their parameters inside one [`ParamStore`].

use serde::{Deserialize, Serialize};

use super::config::ArchConfig;
use super::hyper::HyperNet;
use super::hyperhyper::{assemble_hyper, HyperHyperNet, Partition};
use super::layers::{bind_layers, LayerIds, LayerVars};
use super::primary::{column, primary_logits, unit_points, Head};
use super::refine::{RefineIds, RefineNet};
use super::simulator::SimulatorNet;
use crate::autodiff::{Bound, ParamId, ParamStore, Tape, Tensor, Var};
use crate::datagen::sample_rng;
use crate::em::{ConstraintPlane, SphericalMap, VoxelDims};
use crate::error::{Error, Result};
use crate::hyperinit::{InitScheme, InputStats};

const INIT_STREAM: u64 = 1 << 43;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Simulator,
    Designer,
    Array,
}

/// Everything needed to rebuild a model's parameter layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub arch: ArchConfig,
    pub scheme: InitScheme,
    pub stats: InputStats,
    /// Layers of f generated by q; array models only.
    pub selected: Vec<usize>,
    pub seed: u64,
}

impl ModelSpec {
    pub fn simulator(arch: ArchConfig, seed: u64) -> Self {
        Self {
            kind: ModelKind::Simulator,
            arch,
            scheme: InitScheme::Xavier,
            stats: InputStats::default(),
            selected: Vec::new(),
            seed,
        }
    }

    pub fn designer(arch: ArchConfig, scheme: InitScheme, stats: InputStats, seed: u64) -> Self {
        Self {
            kind: ModelKind::Designer,
            arch,
            scheme,
            stats,
            selected: Vec::new(),
            seed,
        }
    }

    pub fn array(
        arch: ArchConfig,
        scheme: InitScheme,
        stats: InputStats,
        selected: Vec<usize>,
        seed: u64,
    ) -> Self {
        Self {
            kind: ModelKind::Array,
            arch,
            scheme,
            stats,
            selected,
            seed,
        }
    }

    /// Builds the model and a freshly initialized store for it.
    pub fn build(&self) -> Result<(Model, ParamStore)> {
        let mut store = ParamStore::new();
        let mut rng = sample_rng(self.seed, INIT_STREAM);
        let model = match self.kind {
            ModelKind::Simulator => {
                let net = SimulatorNet::new(&self.arch)?;
                let layers = net.add_params(&mut store, "sim", &mut rng);
                Model::Simulator(SimulatorModel { net, layers })
            }
            ModelKind::Designer => {
                let hyper = HyperNet::new(&self.arch, Head::Single, self.scheme, self.stats)?;
                let hyper_layers = hyper.add_params(&mut store, "hyper", &mut rng);
                let refiner = RefineNet::new(&self.arch)?;
                let refiner_ids = refiner.add_params(&mut store, "refine", &mut rng);
                let alpha = store.add("alpha", Tensor::zeros(&[2]));
                Model::Designer(DesignerModel {
                    points: unit_points(self.arch.voxels),
                    hyper,
                    hyper_layers,
                    refiner,
                    refiner_ids,
                    alpha,
                })
            }
            ModelKind::Array => {
                let hyper = HyperNet::new(&self.arch, Head::Array, self.scheme, self.stats)?;
                let hyper_layers = hyper.add_params(&mut store, "hyper", &mut rng);
                let partition = Partition::new(hyper.n_layers(), &self.selected)?;
                let hyperhyper = if partition.selected().is_empty() {
                    None
                } else {
                    let hyperhyper = HyperHyperNet::new(&self.arch, &hyper, partition.clone())?;
                    let (trunk, last) =
                        hyperhyper.add_params(&hyper, &mut store, "hyperhyper", &mut rng);
                    Some(HyperHyperParts {
                        net: hyperhyper,
                        trunk,
                        last,
                    })
                };
                let alpha = store.add("alpha", Tensor::zeros(&[2]));
                Model::Array(ArrayModel {
                    dims: self.arch.array_voxels(),
                    points: unit_points(self.arch.array_voxels()),
                    hyper,
                    hyper_layers,
                    partition,
                    hyperhyper,
                    alpha,
                })
            }
        };
        Ok((model, store))
    }

    /// Rebuilds the model for an existing store, checking that every
    /// parameter name and shape matches the layout.
    pub fn rebuild(&self, store: &ParamStore) -> Result<Model> {
        let (model, fresh) = self.build()?;
        if fresh.len() != store.len() {
            return Err(Error::Format(format!(
                "stored model has {} tensors, layout needs {}",
                store.len(),
                fresh.len()
            )));
        }
        for ((n1, t1), (n2, t2)) in fresh.iter().zip(store.iter()) {
            if n1 != n2 || t1.shape() != t2.shape() {
                return Err(Error::Format(format!(
                    "stored parameter {n2} {:?} does not match layout {n1} {:?}",
                    t2.shape(),
                    t1.shape()
                )));
            }
        }
        Ok(model)
    }
}

#[derive(Clone, Debug)]
pub enum Model {
    Simulator(SimulatorModel),
    Designer(DesignerModel),
    Array(ArrayModel),
}

impl Model {
    pub fn alpha(&self) -> Option<ParamId> {
        match self {
            Model::Simulator(_) => None,
            Model::Designer(m) => Some(m.alpha),
            Model::Array(m) => Some(m.alpha),
        }
    }
}

/// Peak-normalized map as an `[n_θ, n_φ]` tensor.
pub fn map_tensor(map: &SphericalMap) -> Result<Tensor> {
    let g = map.grid();
    Tensor::new(
        vec![g.n_theta, g.n_phi],
        map.peak_normalized()?.into_values(),
    )
}

#[derive(Clone, Debug)]
pub struct SimulatorModel {
    pub net: SimulatorNet,
    pub layers: Vec<LayerIds>,
}

impl SimulatorModel {
    /// `[n_θ, n_φ]` intensity for a `[nz, ny, nx]` structure.
    pub fn forward(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        structure: Var,
        scale: [f64; 3],
    ) -> Result<Var> {
        self.net
            .forward(tape, &bind_layers(&self.layers, bound), structure, scale)
    }
}

#[derive(Clone, Debug)]
pub struct DesignerModel {
    pub hyper: HyperNet,
    pub hyper_layers: Vec<LayerIds>,
    pub refiner: RefineNet,
    pub refiner_ids: RefineIds,
    /// Multiloss weights for (OBCE, MS-SSIM).
    pub alpha: ParamId,
    pub points: Tensor,
}

impl DesignerModel {
    pub fn primary_weights(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        target: &SphericalMap,
        scale: [f64; 3],
    ) -> Result<Var> {
        let input = tape.constant(HyperNet::input_tensor(target)?);
        self.hyper
            .forward(tape, &bind_layers(&self.hyper_layers, bound), input, scale)
    }

    /// g sampled on the whole voxel grid as a `[nz, ny, nx]` field.
    pub fn occupancy(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        target: &SphericalMap,
        scale: [f64; 3],
    ) -> Result<Var> {
        let z = self.logits_at(tape, bound, target, scale, &self.points)?;
        let o = tape.sigmoid(z);
        let d = self.refiner.dims;
        tape.reshape(o, &[d.nz, d.ny, d.nx])
    }

    /// Pre-sigmoid output of g at `[P, 3]` points as a flat `[P]` vector.
    pub fn logits_at(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        target: &SphericalMap,
        scale: [f64; 3],
        points: &Tensor,
    ) -> Result<Var> {
        let theta = self.primary_weights(tape, bound, target, scale)?;
        let pts = tape.constant(points.clone());
        let z = primary_logits(tape, theta, pts, &self.hyper.primary)?;
        column(tape, z, 0)
    }

    /// `V̄ = t(M, O)`.
    pub fn refine(&self, tape: &mut Tape, bound: &Bound, mask: Var, occupancy: Var) -> Result<Var> {
        self.refiner
            .forward(tape, &self.refiner_ids.vars(bound), mask, occupancy)
    }
}

#[derive(Clone, Debug)]
pub struct HyperHyperParts {
    pub net: HyperHyperNet,
    pub trunk: Vec<LayerIds>,
    pub last: LayerIds,
}

#[derive(Clone, Debug)]
pub struct ArrayModel {
    pub dims: VoxelDims,
    pub hyper: HyperNet,
    /// Conventional parameters for every layer of f; the selected ones are
    /// shadowed by q's output.
    pub hyper_layers: Vec<LayerIds>,
    pub partition: Partition,
    pub hyperhyper: Option<HyperHyperParts>,
    /// Multiloss weights for (structure, constraint).
    pub alpha: ParamId,
    pub points: Tensor,
}

/// Both heads of g.
#[derive(Clone, Copy, Debug)]
pub struct ArrayOutput {
    pub metal: Var,
    pub valid: Var,
}

impl ArrayModel {
    /// Layers of f for one constraint plane: q's output for the selected
    /// layers, conventional parameters for the rest.
    pub fn hyper_layers(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        plane: &ConstraintPlane,
    ) -> Result<Vec<LayerVars>> {
        if plane.nx() != self.dims.nx || plane.ny() != self.dims.ny {
            return Err(Error::Dimension(format!(
                "constraint plane {}x{} on a {}x{} grid",
                plane.nx(),
                plane.ny(),
                self.dims.nx,
                self.dims.ny
            )));
        }
        let generated = match &self.hyperhyper {
            Some(hyperhyper) => {
                let c = tape.constant(plane.to_tensor());
                let trunk = bind_layers(&hyperhyper.trunk, bound);
                Some(
                    hyperhyper
                        .net
                        .forward(tape, &trunk, hyperhyper.last.vars(bound), c)?,
                )
            }
            None => None,
        };
        let conventional = bind_layers(&self.hyper_layers, bound);
        assemble_hyper(tape, &self.hyper, &self.partition, generated, &conventional)
    }

    pub fn primary_weights(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        gain: &SphericalMap,
        scale: [f64; 3],
        plane: &ConstraintPlane,
    ) -> Result<Var> {
        let layers = self.hyper_layers(tape, bound, plane)?;
        let input = tape.constant(HyperNet::input_tensor(gain)?);
        self.hyper.forward(tape, &layers, input, scale)
    }

    /// Both heads over the whole composite grid.
    pub fn forward(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        gain: &SphericalMap,
        scale: [f64; 3],
        plane: &ConstraintPlane,
    ) -> Result<ArrayOutput> {
        let z = self.logits_at(tape, bound, gain, scale, plane, &self.points)?;
        let d = self.dims;
        let metal = tape.sigmoid(z.metal);
        let valid = tape.sigmoid(z.valid);
        Ok(ArrayOutput {
            metal: tape.reshape(metal, &[d.nz, d.ny, d.nx])?,
            valid: tape.reshape(valid, &[d.nz, d.ny, d.nx])?,
        })
    }

    /// Pre-sigmoid outputs of both heads at `[P, 3]` points, as flat `[P]` vectors.
    pub fn logits_at(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        gain: &SphericalMap,
        scale: [f64; 3],
        plane: &ConstraintPlane,
        points: &Tensor,
    ) -> Result<ArrayOutput> {
        let theta = self.primary_weights(tape, bound, gain, scale, plane)?;
        let pts = tape.constant(points.clone());
        let o = primary_logits(tape, theta, pts, &self.hyper.primary)?;
        Ok(ArrayOutput {
            metal: column(tape, o, 0)?,
            valid: column(tape, o, 1)?,
        })
    }
}
