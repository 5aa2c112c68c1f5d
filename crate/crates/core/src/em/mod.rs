//! Radiation-pattern mathematics on a spherical grid, voxel containers and
//! the geometric evaluation metrics.
//!
//! Lengths are expressed in wavelengths unless a [`Placement`] carries an
//! explicit wavelength.

mod array;
mod metrics;
mod sphere;
mod voxel;

pub use array::{array_gain, array_gain_weighted, beamforming_weights, wave_vector, Placement};
pub use metrics::{c_ratio, iou, m_recall, pattern_snr_db};
pub use sphere::{directivity, GridSpec, SphericalMap};
pub use voxel::{ConstraintPlane, VoxelDims, VoxelGrid};
