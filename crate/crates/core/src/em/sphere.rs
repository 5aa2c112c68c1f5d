use std::f64::consts::PI;
use std::io::{Read, Write};

use crate::error::{Error, Result};

/// Sampling of the sphere: θ at cell centers in (0, π), φ at cell starts in [0, 2π).
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct GridSpec {
    pub n_theta: usize,
    pub n_phi: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self::new(64, 64)
    }
}

impl GridSpec {
    pub const fn new(n_theta: usize, n_phi: usize) -> Self {
        Self { n_theta, n_phi }
    }

    pub fn len(&self) -> usize {
        self.n_theta * self.n_phi
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn d_theta(&self) -> f64 {
        PI / self.n_theta as f64
    }

    pub fn d_phi(&self) -> f64 {
        2.0 * PI / self.n_phi as f64
    }

    pub fn theta(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.d_theta()
    }

    pub fn phi(&self, j: usize) -> f64 {
        j as f64 * self.d_phi()
    }

    /// `(θ, φ)` of every cell in row-major order.
    pub fn angles(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        (0..self.n_theta)
            .flat_map(move |i| (0..self.n_phi).map(move |j| (self.theta(i), self.phi(j))))
    }

    /// Quadrature weight `sinθ·Δθ·Δφ` of row `i`.
    pub fn cell_weight(&self, i: usize) -> f64 {
        self.theta(i).sin() * self.d_theta() * self.d_phi()
    }
}

/// Real field over a [`GridSpec`], stored θ-major.
#[derive(Clone, Debug, PartialEq)]
pub struct SphericalMap {
    grid: GridSpec,
    values: Vec<f64>,
}

const MAGIC: &[u8; 8] = b"SPHMAP01";

impl SphericalMap {
    pub fn new(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if grid.is_empty() {
            return Err(Error::Dimension("spherical grid with zero extent".into()));
        }
        if values.len() != grid.len() {
            return Err(Error::Dimension(format!(
                "{}x{} grid needs {} values, got {}",
                grid.n_theta,
                grid.n_phi,
                grid.len(),
                values.len()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn filled(grid: GridSpec, value: f64) -> Self {
        Self {
            grid,
            values: vec![value; grid.len()],
        }
    }

    /// Samples `f(θ, φ)` on every cell.
    pub fn from_fn(grid: GridSpec, f: impl Fn(f64, f64) -> f64) -> Self {
        let values = grid.angles().map(|(t, p)| f(t, p)).collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.grid.n_phi + j]
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Discrete `Σ v·sinθ·Δθ·Δφ`.
    pub fn integral(&self) -> f64 {
        self.values
            .chunks(self.grid.n_phi)
            .enumerate()
            .map(|(i, row)| self.grid.cell_weight(i) * row.iter().sum::<f64>())
            .sum()
    }

    /// Copy divided by its maximum; all-zero maps are rejected.
    pub fn peak_normalized(&self) -> Result<Self> {
        let m = self.max();
        if !(m > 0.0) {
            return Err(Error::Degenerate("map has no positive value".into()));
        }
        Ok(Self {
            grid: self.grid,
            values: self.values.iter().map(|v| v / m).collect(),
        })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for row in self.values.chunks(self.grid.n_phi) {
            let line: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut values = Vec::new();
        let mut n_phi = None;
        let mut n_theta = 0;
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let row: Vec<f64> = line
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse::<f64>()
                        .map_err(|e| Error::Format(format!("csv value {s:?}: {e}")))
                })
                .collect::<Result<_>>()?;
            match n_phi {
                None => n_phi = Some(row.len()),
                Some(n) if n != row.len() => {
                    return Err(Error::Format(format!(
                        "ragged csv: row {n_theta} has {} columns, expected {n}",
                        row.len()
                    )))
                }
                _ => {}
            }
            values.extend(row);
            n_theta += 1;
        }
        Self::new(GridSpec::new(n_theta, n_phi.unwrap_or(0)), values)
    }

    pub fn write_binary(&self, mut w: impl Write) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&(self.grid.n_theta as u32).to_le_bytes())?;
        w.write_all(&(self.grid.n_phi as u32).to_le_bytes())?;
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary(mut r: impl Read) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format("not a spherical map record".into()));
        }
        let mut word = [0u8; 4];
        r.read_exact(&mut word)?;
        let n_theta = u32::from_le_bytes(word) as usize;
        r.read_exact(&mut word)?;
        let n_phi = u32::from_le_bytes(word) as usize;
        let grid = GridSpec::new(n_theta, n_phi);
        let mut values = vec![0.0; grid.len()];
        let mut buf = [0u8; 8];
        for v in &mut values {
            r.read_exact(&mut buf)?;
            *v = f64::from_le_bytes(buf);
        }
        Self::new(grid, values)
    }
}

/// Normalizes a radiation pattern so its discrete sphere integral is one.
pub fn directivity(u: &SphericalMap) -> Result<SphericalMap> {
    if u.values.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::Domain(
            "radiation pattern must be finite and non-negative".into(),
        ));
    }
    let total = u.integral();
    if !(total > 0.0) {
        return Err(Error::Degenerate(
            "radiation pattern integrates to zero".into(),
        ));
    }
    Ok(SphericalMap {
        grid: u.grid,
        values: u.values.iter().map(|v| v / total).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn isotropic_directivity() {
        let grid = GridSpec::default();
        let d = directivity(&SphericalMap::filled(grid, 1.0)).unwrap();
        for &v in d.values() {
            assert!((v - 1.0 / (4.0 * PI)).abs() < 1e-3);
        }
        assert!((d.integral() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn directivity_ignores_scale() {
        let grid = GridSpec::new(16, 12);
        let u = SphericalMap::from_fn(grid, |t, p| t.sin().powi(2) * (1.0 + p.cos().powi(2)));
        let scaled =
            SphericalMap::new(grid, u.values().iter().map(|v| v * 10.0).collect()).unwrap();
        let (a, b) = (directivity(&u).unwrap(), directivity(&scaled).unwrap());
        for (x, y) in a.values().iter().zip(b.values()) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_pattern_is_degenerate() {
        let u = SphericalMap::filled(GridSpec::new(4, 4), 0.0);
        assert!(matches!(directivity(&u), Err(Error::Degenerate(_))));
    }

    #[test]
    fn theta_excludes_poles() {
        let g = GridSpec::new(8, 8);
        assert!(g.theta(0) > 0.0 && g.theta(7) < PI);
        assert_eq!(g.phi(0), 0.0);
    }

    #[test]
    fn csv_and_binary_round_trip() {
        let grid = GridSpec::new(3, 5);
        let u = SphericalMap::from_fn(grid, |t, p| t * 1.37 + p.sin() * 1e-7 + 1.0 / 3.0);
        assert_eq!(SphericalMap::from_csv(&u.to_csv()).unwrap(), u);
        let mut buf = Vec::new();
        u.write_binary(&mut buf).unwrap();
        assert_eq!(&buf[..8], b"SPHMAP01");
        assert_eq!(buf.len(), 8 + 8 + 15 * 8);
        assert_eq!(SphericalMap::read_binary(&buf[..]).unwrap(), u);
    }
}
