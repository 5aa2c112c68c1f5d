use super::sphere::SphericalMap;
use super::voxel::{ConstraintPlane, VoxelGrid};
use crate::error::{Error, Result};

fn check_dims(a: &VoxelGrid, b: &VoxelGrid) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(Error::Dimension(format!(
            "voxel grids {:?} and {:?}",
            a.dims(),
            b.dims()
        )));
    }
    Ok(())
}

fn on(v: f64) -> bool {
    v >= 0.5
}

/// Intersection over union of the thresholded grids.
pub fn iou(pred: &VoxelGrid, truth: &VoxelGrid) -> Result<f64> {
    check_dims(pred, truth)?;
    let (mut inter, mut union) = (0usize, 0usize);
    for (&p, &t) in pred.data().iter().zip(truth.data()) {
        inter += (on(p) && on(t)) as usize;
        union += (on(p) || on(t)) as usize;
    }
    if union == 0 {
        return Err(Error::UndefinedMetric("IOU of two empty grids".into()));
    }
    Ok(inter as f64 / union as f64)
}

/// Fraction of the fixed-metal mask reproduced by the prediction.
pub fn m_recall(pred: &VoxelGrid, mask: &VoxelGrid) -> Result<f64> {
    check_dims(pred, mask)?;
    let (mut hit, mut total) = (0usize, 0usize);
    for (&p, &m) in pred.data().iter().zip(mask.data()) {
        if on(m) {
            total += 1;
            hit += on(p) as usize;
        }
    }
    if total == 0 {
        return Err(Error::UndefinedMetric("M-Recall with an empty mask".into()));
    }
    Ok(hit as f64 / total as f64)
}

/// Fraction of predicted metal voxels lying over permitted plane cells.
pub fn c_ratio(pred: &VoxelGrid, plane: &ConstraintPlane) -> Result<f64> {
    let d = pred.dims();
    if d.nx != plane.nx() || d.ny != plane.ny() {
        return Err(Error::Dimension(format!(
            "voxel grid {}x{} against plane {}x{}",
            d.nx,
            d.ny,
            plane.nx(),
            plane.ny()
        )));
    }
    let (mut ok, mut total) = (0usize, 0usize);
    for (idx, &p) in pred.data().iter().enumerate() {
        if on(p) {
            let (x, y, _) = d.coords(idx);
            total += 1;
            ok += (!plane.is_forbidden(x, y)) as usize;
        }
    }
    if total == 0 {
        return Err(Error::UndefinedMetric(
            "C-ratio without predicted metal".into(),
        ));
    }
    Ok(ok as f64 / total as f64)
}

/// `10·log₁₀(Σ B² / Σ (A − B)²)` with `B` the reference; identical maps give `+∞`.
pub fn pattern_snr_db(pred: &SphericalMap, reference: &SphericalMap) -> Result<f64> {
    if pred.grid() != reference.grid() {
        return Err(Error::Dimension("patterns on different grids".into()));
    }
    let signal: f64 = reference.values().iter().map(|b| b * b).sum();
    let noise: f64 = pred
        .values()
        .iter()
        .zip(reference.values())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    if signal == 0.0 {
        return Err(Error::UndefinedMetric(
            "SNR against an all-zero reference".into(),
        ));
    }
    Ok(10.0 * (signal / noise).log10())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::em::{GridSpec, VoxelDims};

    fn grid(bits: &[u8]) -> VoxelGrid {
        VoxelGrid::new(
            VoxelDims::new(bits.len(), 1, 1),
            bits.iter().map(|&b| b as f64).collect(),
        )
        .unwrap()
    }

    #[test]
    fn identical_grids() {
        let v = grid(&[1, 0, 1, 1]);
        let m = grid(&[1, 0, 0, 0]);
        assert_eq!(iou(&v, &v).unwrap(), 1.0);
        assert_eq!(m_recall(&v, &m).unwrap(), 1.0);
    }

    #[test]
    fn disjoint_grids() {
        assert_eq!(iou(&grid(&[1, 0]), &grid(&[0, 1])).unwrap(), 0.0);
    }

    #[test]
    fn partial_overlap_and_threshold() {
        let p = VoxelGrid::new(VoxelDims::new(4, 1, 1), vec![0.9, 0.5, 0.49, 0.0]).unwrap();
        let t = grid(&[1, 0, 1, 0]);
        assert!((iou(&p, &t).unwrap() - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn empty_denominators() {
        assert!(matches!(
            iou(&grid(&[0, 0]), &grid(&[0, 0])),
            Err(Error::UndefinedMetric(_))
        ));
        assert!(matches!(
            m_recall(&grid(&[1, 0]), &grid(&[0, 0])),
            Err(Error::UndefinedMetric(_))
        ));
    }

    #[test]
    fn c_ratio_cases() {
        let pred = VoxelGrid::new(VoxelDims::new(2, 1, 2), vec![1.0, 0.0, 1.0, 1.0]).unwrap();
        let forbid_left = ConstraintPlane::new(2, 1, vec![1.0, 0.0]).unwrap();
        assert!((c_ratio(&pred, &forbid_left).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        let all = ConstraintPlane::new(2, 1, vec![1.0, 1.0]).unwrap();
        assert_eq!(c_ratio(&pred, &all).unwrap(), 0.0);
        assert_eq!(
            c_ratio(&pred, &ConstraintPlane::permitted(2, 1)).unwrap(),
            1.0
        );
    }

    #[test]
    fn snr_of_scaled_error() {
        let g = GridSpec::new(2, 2);
        let b = SphericalMap::filled(g, 1.0);
        let a = SphericalMap::filled(g, 1.1);
        assert!((pattern_snr_db(&a, &b).unwrap() - 20.0).abs() < 1e-9);
        assert_eq!(pattern_snr_db(&b, &b).unwrap(), f64::INFINITY);
    }
}
