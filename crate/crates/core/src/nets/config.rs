use serde::{Deserialize, Serialize};

use crate::datagen::ArrayConfig;
use crate::em::{GridSpec, VoxelDims};
use crate::error::{Error, Result};

/// Architecture dials shared by every network. Defaults are desk scale;
/// [`ArchConfig::full_size`] gives the full-size grids.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchConfig {
    /// Voxel grid of one antenna.
    pub voxels: VoxelDims,
    pub sphere: GridSpec,
    /// Slot arrangement; the array voxel grid and constraint plane follow from it.
    pub array: ArrayConfig,
    pub primary_hidden: usize,
    pub primary_layers: usize,
    pub hyper_channels: usize,
    /// ResNet blocks in f; a 2× average pool follows every second block.
    pub hyper_blocks: usize,
    pub hyper_hidden: usize,
    pub hyperhyper_channels: usize,
    /// Conv layers in q, each followed by a 2× average pool.
    pub hyperhyper_layers: usize,
    pub refine_channels: usize,
    pub refine_mix_channels: usize,
    pub refine_blocks: usize,
    pub sim_channels: usize,
    pub sim_blocks: usize,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self {
            voxels: VoxelDims::new(16, 16, 4),
            sphere: GridSpec::new(32, 32),
            array: ArrayConfig::default(),
            primary_hidden: 16,
            primary_layers: 4,
            hyper_channels: 4,
            hyper_blocks: 4,
            hyper_hidden: 32,
            hyperhyper_channels: 4,
            hyperhyper_layers: 4,
            refine_channels: 16,
            refine_mix_channels: 32,
            refine_blocks: 3,
            sim_channels: 8,
            sim_blocks: 3,
        }
    }
}

impl ArchConfig {
    /// Full-size grids (64×64×16 voxels, 64×64 sphere, 192×128 plane).
    pub fn full_size() -> Self {
        Self {
            voxels: VoxelDims::new(64, 64, 16),
            sphere: GridSpec::new(64, 64),
            primary_hidden: 64,
            hyper_channels: 16,
            hyper_hidden: 64,
            hyperhyper_channels: 16,
            ..Self::default()
        }
    }

    pub fn array_voxels(&self) -> VoxelDims {
        self.array.composite_dims(self.voxels)
    }

    pub fn validate(&self) -> Result<()> {
        let pools = self.hyper_blocks / 2;
        let f_div = 1usize << pools;
        if self.sphere.n_theta % f_div != 0 || self.sphere.n_phi % f_div != 0 {
            return Err(Error::Config(format!(
                "sphere {}x{} not divisible by {f_div} for the hypernetwork's pooling",
                self.sphere.n_theta, self.sphere.n_phi
            )));
        }
        let a = self.array_voxels();
        let q_div = 1usize << self.hyperhyper_layers;
        if a.nx % q_div != 0 || a.ny % q_div != 0 {
            return Err(Error::Config(format!(
                "plane {}x{} not divisible by {q_div} for the hyperhypernetwork's pooling",
                a.nx, a.ny
            )));
        }
        if self.voxels.nx % 2 != 0 || self.voxels.ny % 2 != 0 {
            return Err(Error::Config(
                "voxel grid sides must be even for h's pooling".into(),
            ));
        }
        let zero = [
            self.primary_hidden,
            self.hyper_channels,
            self.hyper_hidden,
            self.hyperhyper_channels,
            self.hyperhyper_layers,
            self.refine_channels,
            self.refine_mix_channels,
            self.sim_channels,
        ];
        if zero.contains(&0) || self.primary_layers < 2 {
            return Err(Error::Config(
                "network widths and depths must be positive".into(),
            ));
        }
        self.array.validate()
    }
}
