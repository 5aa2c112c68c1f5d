//! QPSK over flat Rician fading with maximal-ratio combining, and the
//! bit-error-rate Monte Carlo built from those pieces.
//!
//! Received branch `i` is `s_i = h_i·s + n_i`. Each branch is co-phased by
//! `h_i* / |h_i|` and the branches are averaged with weights equal to their
//! instantaneous SNR `|h_i|² / σ²`. Noise variance follows the average SNR:
//! `σ² = Ω / 10^(snr_db/10)`.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::error::{Error, Result};

/// Largest array size considered by the link study.
pub const N_ARRAY: usize = 6;

/// Iterations simulated per independently seeded chunk.
const CHUNK: u64 = 4096;

/// Two Gray-coded bits: `bit0` selects the sign of the real part and `bit1`
/// the sign of the imaginary part, with 0 meaning positive.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct QpskLabel(pub u8);

impl QpskLabel {
    pub const ALL: [QpskLabel; 4] = [QpskLabel(0), QpskLabel(1), QpskLabel(2), QpskLabel(3)];

    pub fn bit0(self) -> u8 {
        self.0 & 1
    }

    pub fn bit1(self) -> u8 {
        (self.0 >> 1) & 1
    }

    pub fn bit_errors(self, other: QpskLabel) -> u32 {
        (self.0 ^ other.0).count_ones()
    }
}

/// Unit-energy constellation point for `label`.
pub fn modulate(label: QpskLabel) -> Complex64 {
    let a = std::f64::consts::FRAC_1_SQRT_2;
    let re = if label.bit0() == 0 { a } else { -a };
    let im = if label.bit1() == 0 { a } else { -a };
    Complex64::new(re, im)
}

/// Nearest constellation point; exact zeros resolve to the positive side.
pub fn detect_qpsk(s: Complex64) -> QpskLabel {
    let b0 = (s.re < 0.0) as u8;
    let b1 = (s.im < 0.0) as u8;
    QpskLabel(b0 | (b1 << 1))
}

/// Rician channel: line-of-sight to scattered power ratio `k` and total power `omega`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RicianParams {
    pub k: f64,
    pub omega: f64,
}

impl RicianParams {
    pub fn new(k: f64, omega: f64) -> Result<Self> {
        if !(k >= 0.0) {
            return Err(Error::Domain(format!("Rician K {k} must be non-negative")));
        }
        if !(omega > 0.0) {
            return Err(Error::Domain(format!(
                "channel power {omega} must be positive"
            )));
        }
        Ok(Self { k, omega })
    }
}

/// Circularly-symmetric complex normal with total variance `var`.
pub fn complex_normal(rng: &mut impl Rng, var: f64) -> Complex64 {
    let s = (var / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(s * re, s * im)
}

/// `h = √(KΩ/(K+1)) + CN(0, Ω/(K+1))`
pub fn sample_rician(p: RicianParams, rng: &mut impl Rng) -> Complex64 {
    let los = (p.k * p.omega / (p.k + 1.0)).sqrt();
    let scatter = p.omega / (p.k + 1.0);
    Complex64::new(los, 0.0) + complex_normal(rng, scatter)
}

/// Instantaneous linear SNR `|h|² / σ²`.
pub fn snr_of(h: Complex64, noise_var: f64) -> f64 {
    h.norm_sqr() / noise_var
}

/// SNR-weighted average of co-phased branches.
pub fn mrc_combine(branches: &[(Complex64, f64)]) -> Result<Complex64> {
    if branches.is_empty() {
        return Err(Error::Contract("no branches to combine".into()));
    }
    if branches.iter().any(|&(_, w)| !(w >= 0.0)) {
        return Err(Error::Contract("branch SNR must be non-negative".into()));
    }
    let total: f64 = branches.iter().map(|&(_, w)| w).sum();
    if total == 0.0 {
        return Err(Error::Contract("all branch SNRs are zero".into()));
    }
    let num: Complex64 = branches.iter().map(|&(s, w)| s * w).sum();
    Ok(num / total)
}

/// Outcome of one BER Monte-Carlo run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BerResult {
    pub n_antennas: usize,
    pub snr_db: f64,
    pub k: f64,
    pub iterations: u64,
    pub bit_errors: u64,
    pub ber: f64,
}

impl BerResult {
    pub fn bits(&self) -> u64 {
        2 * self.iterations
    }

    /// Binomial standard error of the estimate; uses `max(ber, 1/bits)` so
    /// a zero count still reports its resolution.
    pub fn std_err(&self) -> f64 {
        let n = self.bits() as f64;
        let p = self.ber.max(1.0 / n);
        (p * (1.0 - p) / n).sqrt()
    }

    /// Wilson score interval at ~95% confidence.
    pub fn wilson_95(&self) -> (f64, f64) {
        let n = self.bits() as f64;
        let z = 1.959_963_984_540_054;
        let p = self.ber;
        let denom = 1.0 + z * z / n;
        let center = (p + z * z / (2.0 * n)) / denom;
        let half = z * ((p * (1.0 - p) / n + z * z / (4.0 * n * n)).sqrt()) / denom;
        ((center - half).max(0.0), (center + half).min(1.0))
    }
}

/// Seeded generator for chunk `chunk` of a run: the run seed selects the key,
/// the chunk index selects the ChaCha stream.
fn chunk_rng(seed: u64, chunk: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chunk);
    rng
}

/// Bit errors of `count` iterations drawn from one generator.
fn run_chunk(
    rng: &mut ChaCha8Rng,
    n_ant: usize,
    channel: RicianParams,
    noise_var: f64,
    count: u64,
) -> u64 {
    let mut errors = 0u64;
    let mut branches = Vec::with_capacity(n_ant);
    for _ in 0..count {
        let label = QpskLabel(rng.random_range(0..4u8));
        let s = modulate(label);
        branches.clear();
        for _ in 0..n_ant {
            let h = sample_rician(channel, rng);
            let n = complex_normal(rng, noise_var);
            let r = h * s + n;
            let mag = h.norm();
            let equalized = if mag > 0.0 { h.conj() / mag * r } else { r };
            branches.push((equalized, snr_of(h, noise_var)));
        }
        let combined = mrc_combine(&branches).unwrap_or(branches[0].0);
        errors += detect_qpsk(combined).bit_errors(label) as u64;
    }
    errors
}

/// Monte-Carlo BER of `n_ant`-branch MRC at average SNR `snr_db` and Rician
/// factor `k` (Ω = 1). The result depends only on the arguments: iterations
/// are split into fixed-size chunks with independently derived streams, so
/// any chunk-parallel evaluation reproduces the sequential count.
pub fn ber_monte_carlo(
    n_ant: usize,
    snr_db: f64,
    k: f64,
    iterations: u64,
    seed: u64,
) -> Result<BerResult> {
    if !(1..=N_ARRAY).contains(&n_ant) {
        return Err(Error::Contract(format!(
            "antenna count {n_ant} outside 1..={N_ARRAY}"
        )));
    }
    if iterations == 0 {
        return Err(Error::Contract("at least one iteration is required".into()));
    }
    let channel = RicianParams::new(k, 1.0)?;
    let noise_var = channel.omega / 10f64.powf(snr_db / 10.0);
    let mut bit_errors = 0;
    let mut done = 0;
    let mut chunk = 0;
    while done < iterations {
        let count = CHUNK.min(iterations - done);
        let mut rng = chunk_rng(seed, chunk);
        bit_errors += run_chunk(&mut rng, n_ant, channel, noise_var, count);
        done += count;
        chunk += 1;
    }
    Ok(BerResult {
        n_antennas: n_ant,
        snr_db,
        k,
        iterations,
        bit_errors,
        ber: bit_errors as f64 / (2 * iterations) as f64,
    })
}

/// BER for every antenna count `1..=max_ant`, each with the same seed.
pub fn ber_sweep(
    max_ant: usize,
    snr_db: f64,
    k: f64,
    iterations: u64,
    seed: u64,
) -> Result<Vec<BerResult>> {
    (1..=max_ant)
        .map(|n| ber_monte_carlo(n, snr_db, k, iterations, seed))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_all_labels() {
        for l in QpskLabel::ALL {
            assert!((modulate(l).norm() - 1.0).abs() < 1e-15);
            assert_eq!(detect_qpsk(modulate(l)), l);
            assert_eq!(detect_qpsk(Complex64::new(1.0, 0.0) * modulate(l)), l);
        }
    }

    #[test]
    fn quadrant_rule_and_ties() {
        assert_eq!(detect_qpsk(Complex64::new(0.9, 0.1)), QpskLabel(0));
        assert_eq!(detect_qpsk(Complex64::new(0.0, 0.0)), QpskLabel(0));
        assert_eq!(detect_qpsk(Complex64::new(-0.2, -3.0)), QpskLabel(3));
    }

    #[test]
    fn snr_examples() {
        assert_eq!(snr_of(Complex64::new(1.0, 0.0), 1.0), 1.0);
        assert_eq!(snr_of(Complex64::new(2.0, 0.0), 1.0), 4.0);
        assert!((10.0 * 4f64.log10() - 6.0206).abs() < 1e-4);
    }

    #[test]
    fn combine_examples() {
        let a = Complex64::new(0.3, -0.7);
        let b = Complex64::new(-1.0, 0.5);
        assert_eq!(mrc_combine(&[(a, 2.0)]).unwrap(), a);
        let m = mrc_combine(&[(a, 3.0), (b, 3.0)]).unwrap();
        assert!((m - (a + b) / 2.0).norm() < 1e-15);
        let d = mrc_combine(&[(a, 1e9), (b, 1.0)]).unwrap();
        assert!((d - a).norm() < 1e-8);
        assert!(matches!(mrc_combine(&[(a, 0.0)]), Err(Error::Contract(_))));
    }

    #[test]
    fn pure_line_of_sight() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let h = sample_rician(RicianParams::new(1e12, 1.0).unwrap(), &mut rng);
        assert!((h - Complex64::new(1.0, 0.0)).norm() < 1e-5);
    }

    #[test]
    fn high_snr_is_error_free() {
        let r = ber_monte_carlo(1, 60.0, 2.8, 10_000, 3).unwrap();
        assert_eq!(r.bit_errors, 0);
    }

    #[test]
    fn antenna_count_checked() {
        assert!(matches!(
            ber_monte_carlo(0, 4.0, 2.8, 10, 0),
            Err(Error::Contract(_))
        ));
        assert!(matches!(
            ber_monte_carlo(7, 4.0, 2.8, 10, 0),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn chunked_run_is_seed_deterministic() {
        let a = ber_monte_carlo(3, 2.0, 1.0, 9000, 11).unwrap();
        let b = ber_monte_carlo(3, 2.0, 1.0, 9000, 11).unwrap();
        assert_eq!(a, b);
    }
}
