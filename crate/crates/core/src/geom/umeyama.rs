use nalgebra::SVD;

use super::{Mat3, SimTransform, Vec3};
use crate::error::{Error, Result};

/// Ratio below which the middle singular value of the cross-covariance
/// counts as zero (rank < 2 leaves the rotation unidentifiable).
const RANK_TOL: f64 = 1e-12;

/// Closed-form weighted similarity fit minimizing
/// `Σᵢ wᵢ‖s·R·sourceᵢ + t − targetᵢ‖²`.
///
/// The rotation comes from the SVD of the weighted cross-covariance with the
/// usual `diag(1, 1, ±1)` reflection fix; the scale is
/// `Σw⟨t̄ᵢ, R·s̄ᵢ⟩ / Σw‖s̄ᵢ‖²` over centered points.
pub fn weighted_umeyama(source: &[Vec3], target: &[Vec3], weights: &[f64]) -> Result<SimTransform> {
    fit(source, target, weights, true)
}

/// Same fit with the scale pinned to 1 (a rigid motion).
pub fn weighted_rigid(source: &[Vec3], target: &[Vec3], weights: &[f64]) -> Result<SimTransform> {
    fit(source, target, weights, false)
}

fn fit(
    source: &[Vec3],
    target: &[Vec3],
    weights: &[f64],
    with_scale: bool,
) -> Result<SimTransform> {
    if source.len() != target.len() || source.len() != weights.len() {
        return Err(Error::dims(
            format!("{} correspondences and weights", source.len()),
            format!("{} targets, {} weights", target.len(), weights.len()),
        ));
    }
    if source.len() < 3 {
        return Err(Error::Degenerate(format!(
            "need at least 3 correspondences, got {}",
            source.len()
        )));
    }
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::InvalidParameter(
            "weights must be finite and non-negative".into(),
        ));
    }
    let mass: f64 = weights.iter().sum();
    if !(mass > 0.0) {
        return Err(Error::Degenerate("zero total weight".into()));
    }

    let mut mu_s = Vec3::zeros();
    let mut mu_t = Vec3::zeros();
    for ((s, t), w) in source.iter().zip(target).zip(weights) {
        mu_s += *w * s;
        mu_t += *w * t;
    }
    mu_s /= mass;
    mu_t /= mass;

    let mut cov = Mat3::zeros();
    let mut var_s = 0.0;
    for ((s, t), w) in source.iter().zip(target).zip(weights) {
        if *w == 0.0 {
            continue;
        }
        let sc = s - mu_s;
        let tc = t - mu_t;
        cov += *w * tc * sc.transpose();
        var_s += *w * sc.norm_squared();
    }

    let svd = SVD::new(cov, true, true);
    let mut sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    if !(sv[0] > 0.0) || sv[1] <= RANK_TOL * sv[0] || !(var_s > 0.0) {
        return Err(Error::Degenerate(format!(
            "weighted cross-covariance rank < 2 (singular values {sv:?})"
        )));
    }
    let u = svd.u.expect("SVD computed with U");
    let v_t = svd.v_t.expect("SVD computed with Vᵀ");
    let mut fix = Mat3::identity();
    if (u * v_t).determinant() < 0.0 {
        fix[(2, 2)] = -1.0;
    }
    let rotation = u * fix * v_t;

    let mut num = 0.0;
    for ((s, t), w) in source.iter().zip(target).zip(weights) {
        if *w == 0.0 {
            continue;
        }
        num += *w * (t - mu_t).dot(&(rotation * (s - mu_s)));
    }
    let scale = if with_scale { num / var_s } else { 1.0 };
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::Degenerate(format!(
            "non-positive scale estimate {scale}"
        )));
    }
    let translation = mu_t - scale * (rotation * mu_s);
    Ok(SimTransform {
        scale,
        rotation,
        translation,
    })
}

/// Weighted RMS of `‖T(sourceᵢ) − targetᵢ‖`.
pub(crate) fn weighted_rms(
    t: &SimTransform,
    source: &[Vec3],
    target: &[Vec3],
    weights: &[f64],
) -> f64 {
    let mass: f64 = weights.iter().sum();
    if !(mass > 0.0) {
        return 0.0;
    }
    let sse: f64 = source
        .iter()
        .zip(target)
        .zip(weights)
        .map(|((s, q), w)| w * (t.apply(s) - q).norm_squared())
        .sum();
    (sse / mass).sqrt()
}
