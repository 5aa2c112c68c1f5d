//! Training objectives. Every loss is recorded on a [`Tape`] so gradients
//! reach both network parameters and the learned multiloss weights.

use crate::autodiff::{Tape, Tensor, Var};
use crate::em::SphericalMap;
use crate::error::{Error, Result};

/// Probabilities are clamped into `[PROB_EPS, 1 − PROB_EPS]` before any log.
pub const PROB_EPS: f64 = 1e-7;

/// Number of dyadic scales in [`ms_ssim`].
pub const SSIM_SCALES: usize = 3;

const SSIM_WINDOW: usize = 3;
const SSIM_FLOOR: f64 = 1e-6;

/// Dynamic range shared by both maps, so the score is symmetric; flat pairs use 1.
fn joint_range(a: &[f64], b: &[f64]) -> f64 {
    let (lo, hi) = a
        .iter()
        .chain(b)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let r = hi - lo;
    if r > 0.0 && r.is_finite() {
        r
    } else {
        1.0
    }
}

/// Mean SSIM at one scale with a 3×3 box window (valid positions only).
fn ssim_mean(tape: &mut Tape, a: Var, b: Var, c1: f64, c2: f64) -> Result<Var> {
    let pool = |tape: &mut Tape, v: Var| tape.avg_pool(v, SSIM_WINDOW, 1);
    let mu_a = pool(tape, a)?;
    let mu_b = pool(tape, b)?;
    let aa = tape.mul(a, a)?;
    let bb = tape.mul(b, b)?;
    let ab = tape.mul(a, b)?;
    let e_aa = pool(tape, aa)?;
    let e_bb = pool(tape, bb)?;
    let e_ab = pool(tape, ab)?;
    let mu_aa = tape.mul(mu_a, mu_a)?;
    let mu_bb = tape.mul(mu_b, mu_b)?;
    let mu_ab = tape.mul(mu_a, mu_b)?;
    let var_a = tape.sub(e_aa, mu_aa)?;
    let var_b = tape.sub(e_bb, mu_bb)?;
    let cov = tape.sub(e_ab, mu_ab)?;

    let lum_num = tape.scale(mu_ab, 2.0);
    let lum_num = tape.add_scalar(lum_num, c1);
    let cs_num = tape.scale(cov, 2.0);
    let cs_num = tape.add_scalar(cs_num, c2);
    let lum_den = tape.add(mu_aa, mu_bb)?;
    let lum_den = tape.add_scalar(lum_den, c1);
    let cs_den = tape.add(var_a, var_b)?;
    let cs_den = tape.add_scalar(cs_den, c2);

    let num = tape.mul(lum_num, cs_num)?;
    let den = tape.mul(lum_den, cs_den)?;
    let map = tape.div(num, den)?;
    Ok(tape.mean(map))
}

/// Multi-scale SSIM of two `[h, w]` maps: geometric mean over
/// [`SSIM_SCALES`] scales of the per-scale mean SSIM, each scale floored at
/// 1e-6. Constants follow `C1 = (0.01 L)²`, `C2 = (0.03 L)²`.
pub fn ms_ssim(tape: &mut Tape, a: Var, b: Var) -> Result<Var> {
    let (sa, sb) = (tape.shape(a).to_vec(), tape.shape(b).to_vec());
    if sa != sb || sa.len() != 2 {
        return Err(Error::Dimension(format!(
            "ms_ssim: shapes {sa:?} and {sb:?}"
        )));
    }
    let min_side = SSIM_WINDOW << (SSIM_SCALES - 1);
    if sa[0] < min_side || sa[1] < min_side {
        return Err(Error::Dimension(format!(
            "ms_ssim needs sides of at least {min_side}, got {sa:?}"
        )));
    }
    let l = joint_range(tape.value(a).data(), tape.value(b).data());
    let (c1, c2) = ((0.01 * l).powi(2), (0.03 * l).powi(2));

    let (mut x, mut y) = (a, b);
    let mut logs = Vec::with_capacity(SSIM_SCALES);
    for scale in 0..SSIM_SCALES {
        if scale > 0 {
            x = tape.avg_pool(x, 2, 2)?;
            y = tape.avg_pool(y, 2, 2)?;
        }
        let s = ssim_mean(tape, x, y, c1, c2)?;
        let s = tape.clamp(s, SSIM_FLOOR, f64::INFINITY);
        logs.push(tape.log(s)?);
    }
    let joined = tape.concat(&logs)?;
    let total = tape.mean(joined);
    Ok(tape.exp(total))
}

/// [`ms_ssim`] of two spherical maps as a plain number.
pub fn ms_ssim_maps(a: &SphericalMap, b: &SphericalMap) -> Result<f64> {
    if a.grid() != b.grid() {
        return Err(Error::Dimension("ms_ssim: maps on different grids".into()));
    }
    let g = a.grid();
    let mut tape = Tape::new();
    let va = tape.constant(Tensor::new(vec![g.n_theta, g.n_phi], a.values().to_vec())?);
    let vb = tape.constant(Tensor::new(vec![g.n_theta, g.n_phi], b.values().to_vec())?);
    let s = ms_ssim(&mut tape, va, vb)?;
    Ok(tape.value(s).item())
}

/// `Σ exp(−αᵢ)·lᵢ + αᵢ` for scalar losses `l` and an `alpha` vector of the same length.
pub fn multiloss(tape: &mut Tape, losses: &[Var], alpha: Var) -> Result<Var> {
    if losses.is_empty() {
        return Err(Error::Contract("multiloss of no terms".into()));
    }
    if tape.value(alpha).numel() != losses.len() {
        return Err(Error::Dimension(format!(
            "{} loss terms but {} weights",
            losses.len(),
            tape.value(alpha).numel()
        )));
    }
    let mut total: Option<Var> = None;
    for (i, &l) in losses.iter().enumerate() {
        if tape.value(l).numel() != 1 {
            return Err(Error::Dimension(format!("loss term {i} is not a scalar")));
        }
        let a = tape.slice(alpha, i, 1)?;
        let na = tape.neg(a);
        let w = tape.exp(na);
        let weighted = tape.mul(w, l)?;
        let term = tape.add(weighted, a)?;
        total = Some(match total {
            None => term,
            Some(t) => tape.add(t, term)?,
        });
    }
    Ok(total.expect("non-empty"))
}

fn clamped(tape: &mut Tape, p: Var) -> Var {
    tape.clamp(p, PROB_EPS, 1.0 - PROB_EPS)
}

/// Mean binary cross-entropy between predicted probabilities and a binary target.
pub fn occupancy_ce(tape: &mut Tape, pred: Var, target: &[f64]) -> Result<Var> {
    let n = tape.value(pred).numel();
    if target.len() != n {
        return Err(Error::Dimension(format!(
            "cross-entropy: {n} predictions, {} targets",
            target.len()
        )));
    }
    let shape = tape.shape(pred).to_vec();
    let pc = clamped(tape, pred);
    let lp = tape.log(pc)?;
    let neg = tape.neg(pc);
    let one_minus = tape.add_scalar(neg, 1.0);
    let lq = tape.log(one_minus)?;
    let y = tape.constant(Tensor::new(shape.clone(), target.to_vec())?);
    let y_neg = tape.constant(Tensor::new(
        shape,
        target.iter().map(|t| 1.0 - t).collect(),
    )?);
    let pos = tape.mul(y, lp)?;
    let negv = tape.mul(y_neg, lq)?;
    let both = tape.add(pos, negv)?;
    let m = tape.mean(both);
    Ok(tape.neg(m))
}

/// `−(1/|M|)·Σ_{p∈M} log V̄_p` over the voxels where `mask` is set.
pub fn obce(tape: &mut Tape, pred: Var, mask: &[f64]) -> Result<Var> {
    let n = tape.value(pred).numel();
    if mask.len() != n {
        return Err(Error::Dimension(format!(
            "obce: {n} predictions, {} mask values",
            mask.len()
        )));
    }
    let count = mask.iter().filter(|&&m| m >= 0.5).count();
    if count == 0 {
        return Err(Error::Contract("obce with an empty mask".into()));
    }
    let shape = tape.shape(pred).to_vec();
    let pc = clamped(tape, pred);
    let lp = tape.log(pc)?;
    let m = tape.constant(Tensor::new(
        shape,
        mask.iter().map(|&v| (v >= 0.5) as u8 as f64).collect(),
    )?);
    let masked = tape.mul(m, lp)?;
    let s = tape.sum(masked);
    Ok(tape.scale(s, -1.0 / count as f64))
}

/// Mean binary cross-entropy from logits `z`:
/// `y·softplus(−z) + (1 − y)·softplus(z)`. Equal to [`occupancy_ce`] of
/// `sigmoid(z)` without the probability clamp, so saturated outputs keep a gradient.
pub fn occupancy_ce_logits(tape: &mut Tape, logits: Var, target: &[f64]) -> Result<Var> {
    let n = tape.value(logits).numel();
    if target.len() != n {
        return Err(Error::Dimension(format!(
            "cross-entropy: {n} logits, {} targets",
            target.len()
        )));
    }
    let shape = tape.shape(logits).to_vec();
    let sp_pos = tape.softplus(logits);
    let neg = tape.neg(logits);
    let sp_neg = tape.softplus(neg);
    let y = tape.constant(Tensor::new(shape.clone(), target.to_vec())?);
    let y_neg = tape.constant(Tensor::new(
        shape,
        target.iter().map(|t| 1.0 - t).collect(),
    )?);
    let a = tape.mul(y, sp_neg)?;
    let b = tape.mul(y_neg, sp_pos)?;
    let both = tape.add(a, b)?;
    Ok(tape.mean(both))
}

/// Indicator of the voxels of a `[nz, ny, nx]` field over forbidden cells,
/// and their count; `None` when nothing is forbidden.
fn forbidden_voxels(shape: &[usize], forbidden: &[f64]) -> Result<Option<(Tensor, usize)>> {
    if shape.len() != 3 || forbidden.len() != shape[1] * shape[2] {
        return Err(Error::Dimension(format!(
            "constraint loss: field {shape:?} against plane of {} cells",
            forbidden.len()
        )));
    }
    let cells = forbidden.iter().filter(|&&c| c == 1.0).count();
    if cells == 0 {
        return Ok(None);
    }
    let mask: Vec<f64> = (0..shape[0])
        .flat_map(|_| forbidden.iter().map(|&c| (c == 1.0) as u8 as f64))
        .collect();
    Ok(Some((Tensor::new(shape.to_vec(), mask)?, cells * shape[0])))
}

/// `−(1/|F|)·Σ_{p∈F} log(1 − O₂[p])` where `F` holds the voxels of a
/// `[nz, ny, nx]` field lying over forbidden cells of `forbidden` (`[ny, nx]`).
/// A plane without forbidden cells yields 0.
pub fn constraint_loss(tape: &mut Tape, valid: Var, forbidden: &[f64]) -> Result<Var> {
    let shape = tape.shape(valid).to_vec();
    let Some((mask, count)) = forbidden_voxels(&shape, forbidden)? else {
        return Ok(tape.constant(Tensor::scalar(0.0)));
    };
    let pc = clamped(tape, valid);
    let neg = tape.neg(pc);
    let one_minus = tape.add_scalar(neg, 1.0);
    let lq = tape.log(one_minus)?;
    let m = tape.constant(mask);
    let masked = tape.mul(m, lq)?;
    let s = tape.sum(masked);
    Ok(tape.scale(s, -1.0 / count as f64))
}

/// [`constraint_loss`] from logits, using `−log(1 − sigmoid(z)) = softplus(z)`.
pub fn constraint_loss_logits(tape: &mut Tape, logits: Var, forbidden: &[f64]) -> Result<Var> {
    let shape = tape.shape(logits).to_vec();
    let Some((mask, count)) = forbidden_voxels(&shape, forbidden)? else {
        return Ok(tape.constant(Tensor::scalar(0.0)));
    };
    let sp = tape.softplus(logits);
    let m = tape.constant(mask);
    let masked = tape.mul(m, sp)?;
    let s = tape.sum(masked);
    Ok(tape.scale(s, 1.0 / count as f64))
}
