//! Refinement network t: mixes g's sampled occupancy O with the fixed-metal
//! mask M. Depth is folded into channels, so the 3-D grids are processed by
//! 2-D convolutions over (y, x).

use rand::Rng;

use super::config::ArchConfig;
use super::layers::{
    add_layers, bind_layers, check_shape, conv, res_block, LayerIds, LayerSpec, LayerVars,
};
use crate::autodiff::{Bound, ParamId, ParamStore, Tape, Tensor, Var};
use crate::em::VoxelDims;
use crate::error::{Error, Result};

/// Initial mixing weights `(w₁, w₂)`.
pub const MIX_INIT: [f64; 2] = [1.0, 0.1];

#[derive(Clone, Debug, PartialEq)]
pub struct RefineNet {
    pub dims: VoxelDims,
    pub mask_branch: Vec<LayerSpec>,
    pub occupancy_branch: Vec<LayerSpec>,
    pub mixer: Vec<LayerSpec>,
}

/// Parameter ids of t inside a store.
#[derive(Clone, Debug)]
pub struct RefineIds {
    pub mask_branch: Vec<LayerIds>,
    pub occupancy_branch: Vec<LayerIds>,
    pub mixer: Vec<LayerIds>,
    pub mix: ParamId,
}

/// Tape handles of t's parameters.
#[derive(Clone, Debug)]
pub struct RefineVars {
    pub mask_branch: Vec<LayerVars>,
    pub occupancy_branch: Vec<LayerVars>,
    pub mixer: Vec<LayerVars>,
    pub mix: Var,
}

impl RefineIds {
    pub fn vars(&self, bound: &Bound) -> RefineVars {
        RefineVars {
            mask_branch: bind_layers(&self.mask_branch, bound),
            occupancy_branch: bind_layers(&self.occupancy_branch, bound),
            mixer: bind_layers(&self.mixer, bound),
            mix: bound.var(self.mix),
        }
    }
}

fn branch(prefix: &str, c_in: usize, c: usize, blocks: usize) -> Vec<LayerSpec> {
    let mut specs = vec![LayerSpec::conv(format!("{prefix}.stem"), c_in, c)];
    for b in 0..blocks {
        specs.push(LayerSpec::conv(format!("{prefix}.block{b}a"), c, c));
        specs.push(LayerSpec::conv(format!("{prefix}.block{b}b"), c, c));
    }
    specs
}

fn run_branch(tape: &mut Tape, x: Var, layers: &[LayerVars]) -> Result<Var> {
    let mut h = conv(tape, x, layers[0], true)?;
    for pair in layers[1..].chunks(2) {
        h = match pair {
            [a, b] => res_block(tape, h, *a, *b)?,
            _ => return Err(Error::Assembly("residual block needs two layers".into())),
        };
    }
    Ok(h)
}

impl RefineNet {
    /// Refinement over the single-antenna voxel grid.
    pub fn new(arch: &ArchConfig) -> Result<Self> {
        arch.validate()?;
        let nz = arch.voxels.nz;
        let c = arch.refine_channels;
        let mix = arch.refine_mix_channels;
        if mix != 2 * c {
            return Err(Error::Config(format!(
                "refinement mixer width {mix} must equal twice the branch width {c}"
            )));
        }
        let mut mixer = branch("m3", mix, mix, 1);
        mixer.push(LayerSpec::conv("m3.out", mix, nz));
        Ok(Self {
            dims: arch.voxels,
            mask_branch: branch("m1", nz, c, arch.refine_blocks),
            occupancy_branch: branch("m2", nz, c, arch.refine_blocks),
            mixer,
        })
    }

    pub fn add_params(
        &self,
        store: &mut ParamStore,
        prefix: &str,
        rng: &mut impl Rng,
    ) -> RefineIds {
        RefineIds {
            mask_branch: add_layers(store, prefix, &self.mask_branch, rng),
            occupancy_branch: add_layers(store, prefix, &self.occupancy_branch, rng),
            mixer: add_layers(store, prefix, &self.mixer, rng),
            mix: store.add(format!("{prefix}.mix"), Tensor::vector(MIX_INIT.to_vec())),
        }
    }

    fn grid_shape(&self) -> [usize; 3] {
        [self.dims.nz, self.dims.ny, self.dims.nx]
    }

    /// `V̄ = clamp(w₁·O + w₂·m₃([m₁(M), m₂(O)]), 0, 1)` on `[nz, ny, nx]` fields.
    pub fn forward(
        &self,
        tape: &mut Tape,
        p: &RefineVars,
        mask: Var,
        occupancy: Var,
    ) -> Result<Var> {
        check_shape("refinement mask", tape.shape(mask), &self.grid_shape())?;
        check_shape(
            "refinement occupancy",
            tape.shape(occupancy),
            &self.grid_shape(),
        )?;
        let t1 = run_branch(tape, mask, &p.mask_branch)?;
        let t2 = run_branch(tape, occupancy, &p.occupancy_branch)?;
        let both = tape.concat(&[t1, t2])?;
        let n = p.mixer.len();
        let t3 = run_branch(tape, both, &p.mixer[..n - 1])?;
        let t3 = conv(tape, t3, p.mixer[n - 1], false)?;
        let w1 = tape.slice(p.mix, 0, 1)?;
        let w2 = tape.slice(p.mix, 1, 1)?;
        let a = tape.mul_scalar_var(occupancy, w1)?;
        let b = tape.mul_scalar_var(t3, w2)?;
        let s = tape.add(a, b)?;
        Ok(tape.clamp(s, 0.0, 1.0))
    }
}
