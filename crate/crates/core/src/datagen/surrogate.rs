use num_complex::Complex64;

use crate::em::{wave_vector, GridSpec, SphericalMap, VoxelGrid};
use crate::error::{Error, Result};

/// Physical centers (in wavelengths) of the on voxels, with the box centered
/// on the origin and extents `scale`.
pub fn metal_positions(v: &VoxelGrid, scale: [f64; 3]) -> Vec<[f64; 3]> {
    let d = v.dims();
    v.data()
        .iter()
        .enumerate()
        .filter(|(_, &m)| m >= 0.5)
        .map(|(i, _)| {
            let u = d.unit_center(i);
            [
                (u[0] - 0.5) * scale[0],
                (u[1] - 0.5) * scale[1],
                (u[2] - 0.5) * scale[2],
            ]
        })
        .collect()
}

/// Point-source surrogate for a full-wave solver:
/// `U(θ,φ) = sin²θ · |Σ_voxels exp(−j k(θ,φ)·r)|²`, wavelength 1.
///
/// The phase of each voxel factorizes over axes, so per-axis phasors are
/// tabulated once per direction and multiplied per voxel.
pub fn surrogate_radiation(v: &VoxelGrid, scale: [f64; 3], grid: GridSpec) -> Result<SphericalMap> {
    let d = v.dims();
    let on: Vec<(usize, usize, usize)> = v
        .data()
        .iter()
        .enumerate()
        .filter(|(_, &m)| m >= 0.5)
        .map(|(i, _)| d.coords(i))
        .collect();
    if on.is_empty() {
        return Err(Error::Degenerate("no metal voxels to radiate".into()));
    }
    let axis = |n: usize, s: f64| -> Vec<f64> {
        (0..n)
            .map(|i| ((i as f64 + 0.5) / n as f64 - 0.5) * s)
            .collect()
    };
    let (xs, ys, zs) = (
        axis(d.nx, scale[0]),
        axis(d.ny, scale[1]),
        axis(d.nz, scale[2]),
    );
    let phasors = |k: f64, coords: &[f64]| -> Vec<Complex64> {
        coords
            .iter()
            .map(|&r| Complex64::from_polar(1.0, -k * r))
            .collect()
    };

    let values = grid
        .angles()
        .map(|(theta, phi)| {
            let k = wave_vector(theta, phi, 1.0);
            let (px, py, pz) = (phasors(k[0], &xs), phasors(k[1], &ys), phasors(k[2], &zs));
            let sum: Complex64 = on.iter().map(|&(x, y, z)| px[x] * py[y] * pz[z]).sum();
            theta.sin().powi(2) * sum.norm_sqr()
        })
        .collect();
    SphericalMap::new(grid, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::em::VoxelDims;

    #[test]
    fn single_centered_voxel_is_dipole() {
        let dims = VoxelDims::new(3, 3, 1);
        let mut v = VoxelGrid::zeros(dims);
        v.set(1, 1, 0, 1.0);
        let g = GridSpec::new(8, 8);
        let u = surrogate_radiation(&v, [0.2, 0.2, 0.1], g).unwrap();
        for ((t, _), &val) in g.angles().zip(u.values()) {
            assert!((val - t.sin().powi(2)).abs() < 1e-14);
        }
    }

    #[test]
    fn empty_grid_is_degenerate() {
        let v = VoxelGrid::zeros(VoxelDims::new(2, 2, 2));
        assert!(surrogate_radiation(&v, [0.1; 3], GridSpec::new(4, 4)).is_err());
    }
}
