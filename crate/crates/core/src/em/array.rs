use std::f64::consts::PI;

use num_complex::Complex64;

use super::sphere::SphericalMap;
use crate::error::{Error, Result};

/// Phase-center position of one array element, in the same length unit as
/// `wavelength`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Placement {
    pub position: [f64; 3],
    pub wavelength: f64,
}

impl Placement {
    pub fn new(position: [f64; 3], wavelength: f64) -> Result<Self> {
        if !(wavelength > 0.0) {
            return Err(Error::Domain(format!(
                "wavelength {wavelength} must be positive"
            )));
        }
        Ok(Self {
            position,
            wavelength,
        })
    }

    /// Placement with the wavelength normalized to one.
    pub fn at(position: [f64; 3]) -> Self {
        Self {
            position,
            wavelength: 1.0,
        }
    }
}

/// `(2π/λ)·[sinθ cosφ, sinθ sinφ, cosθ]`
pub fn wave_vector(theta: f64, phi: f64, wavelength: f64) -> [f64; 3] {
    let k = 2.0 * PI / wavelength;
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    [k * st * cp, k * st * sp, k * ct]
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Unit-modulus weights steering the array towards `(θ_d, φ_d)`.
pub fn beamforming_weights(theta_d: f64, phi_d: f64, placements: &[Placement]) -> Vec<Complex64> {
    let st = theta_d.sin();
    placements
        .iter()
        .map(|p| {
            let k = 2.0 * PI / p.wavelength;
            let phase = k * st * (phi_d.cos() * p.position[0] + phi_d.sin() * p.position[1]);
            Complex64::from_polar(1.0, phase)
        })
        .collect()
}

/// `|Σ U_ant(θ,φ)·exp(−j k·r_ant)|` per cell: the unsteered array gain.
pub fn array_gain(patterns: &[SphericalMap], placements: &[Placement]) -> Result<SphericalMap> {
    array_gain_weighted(patterns, placements, None)
}

/// Array gain with optional per-element complex weights multiplying each phasor.
pub fn array_gain_weighted(
    patterns: &[SphericalMap],
    placements: &[Placement],
    weights: Option<&[Complex64]>,
) -> Result<SphericalMap> {
    let first = patterns
        .first()
        .ok_or_else(|| Error::Contract("array gain of an empty element list".into()))?;
    if patterns.len() != placements.len() {
        return Err(Error::Contract(format!(
            "{} patterns but {} placements",
            patterns.len(),
            placements.len()
        )));
    }
    if let Some(w) = weights {
        if w.len() != patterns.len() {
            return Err(Error::Contract(format!(
                "{} weights for {} elements",
                w.len(),
                patterns.len()
            )));
        }
    }
    let grid = first.grid();
    if patterns.iter().any(|p| p.grid() != grid) {
        return Err(Error::Dimension(
            "element patterns on different grids".into(),
        ));
    }

    let mut acc = vec![Complex64::new(0.0, 0.0); grid.len()];
    for (e, (pattern, place)) in patterns.iter().zip(placements).enumerate() {
        let w = weights.map_or(Complex64::new(1.0, 0.0), |w| w[e]);
        for ((cell, (theta, phi)), &u) in acc.iter_mut().zip(grid.angles()).zip(pattern.values()) {
            let phase = -dot(wave_vector(theta, phi, place.wavelength), place.position);
            *cell += w * u * Complex64::from_polar(1.0, phase);
        }
    }
    SphericalMap::new(grid, acc.into_iter().map(|c| c.norm()).collect())
}
