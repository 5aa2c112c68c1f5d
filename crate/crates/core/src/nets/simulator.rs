//! Simulation network h: voxel structure and box extents to a non-negative
//! radiation intensity on the spherical grid.

use rand::Rng;

use super::config::ArchConfig;
use super::layers::{
    add_layers, check_shape, conv, dense_vec, flatten_with_scale, res_block, LayerIds, LayerSpec,
    LayerVars,
};
use crate::autodiff::{ParamStore, Tape, Var};
use crate::em::{GridSpec, VoxelDims};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct SimulatorNet {
    pub dims: VoxelDims,
    pub sphere: GridSpec,
    pub specs: Vec<LayerSpec>,
    blocks: usize,
}

impl SimulatorNet {
    pub fn new(arch: &ArchConfig) -> Result<Self> {
        arch.validate()?;
        let v = arch.voxels;
        let c = arch.sim_channels;
        let mut specs = vec![LayerSpec::conv("stem", v.nz, c)];
        for b in 0..arch.sim_blocks {
            specs.push(LayerSpec::conv(format!("block{b}a"), c, c));
            specs.push(LayerSpec::conv(format!("block{b}b"), c, c));
        }
        let flat = c * (v.ny / 2) * (v.nx / 2) + 3;
        specs.push(LayerSpec::dense("fc", flat, arch.sphere.len()));
        Ok(Self {
            dims: v,
            sphere: arch.sphere,
            specs,
            blocks: arch.sim_blocks,
        })
    }

    pub fn add_params(
        &self,
        store: &mut ParamStore,
        prefix: &str,
        rng: &mut impl Rng,
    ) -> Vec<LayerIds> {
        add_layers(store, prefix, &self.specs, rng)
    }

    /// `U = softplus(FC([pool(blocks(stem(V))), S]))` as an `[n_θ, n_φ]` map.
    pub fn forward(
        &self,
        tape: &mut Tape,
        layers: &[LayerVars],
        structure: Var,
        scale: [f64; 3],
    ) -> Result<Var> {
        if layers.len() != self.specs.len() {
            return Err(Error::Assembly(format!(
                "simulator has {} layers, got {}",
                self.specs.len(),
                layers.len()
            )));
        }
        check_shape(
            "simulator input",
            tape.shape(structure),
            &[self.dims.nz, self.dims.ny, self.dims.nx],
        )?;
        let mut x = conv(tape, structure, layers[0], true)?;
        for b in 0..self.blocks {
            x = res_block(tape, x, layers[1 + 2 * b], layers[2 + 2 * b])?;
        }
        let x = tape.avg_pool(x, 2, 2)?;
        let flat = flatten_with_scale(tape, x, scale)?;
        let out = dense_vec(tape, flat, layers[layers.len() - 1], false)?;
        let out = tape.softplus(out);
        tape.reshape(out, &[self.sphere.n_theta, self.sphere.n_phi])
    }
}
