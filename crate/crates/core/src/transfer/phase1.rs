//! Dictionary construction and the head fit on a frozen dictionary.

use super::TransferError;
use crate::matrixkit::{least_squares, orthonormalize, Matrix, OrthonormalBasis, Vector, DEFAULT_RCOND};
use crate::source_models::SourceModel;
use crate::synth::Dataset;

/// Orthonormal basis of the concatenated columns of every `B̂ᵢ`.
pub fn build_dictionary(models: &[SourceModel], drop_tol: f64) -> Result<OrthonormalBasis, TransferError> {
    let first = models
        .first()
        .ok_or_else(|| TransferError::InvalidArgument("no source models".into()))?;
    let d = first.d();
    if let Some(bad) = models.iter().find(|m| m.d() != d) {
        return Err(TransferError::InvalidArgument(format!(
            "source models disagree on dimension ({d} vs {})",
            bad.d()
        )));
    }
    let blocks: Vec<&Matrix> = models.iter().map(|m| &m.bhat).collect();
    Ok(orthonormalize(&Matrix::hstack(&blocks)?, drop_tol)?)
}

/// Least-squares head `ŵ = argmin ‖X₁V̂w − y₁‖` and `θ = V̂ŵ`.
pub fn phase1_fit(vhat: &OrthonormalBasis, data1: &Dataset) -> Result<(Vector, Vector), TransferError> {
    if data1.d() != vhat.ambient_dim() {
        return Err(TransferError::InvalidArgument(format!(
            "data has {} features, dictionary lives in dimension {}",
            data1.d(),
            vhat.ambient_dim()
        )));
    }
    let features = data1.x().matmul(vhat.columns())?;
    let what = least_squares(&features, data1.y(), DEFAULT_RCOND)?;
    let theta = vhat.combine(&what)?;
    Ok((what, theta))
}

/// `min_u ‖X V̂ u − X V* b‖`: how much of the true representation the
/// learned dictionary cannot express on the sample `x`.
pub fn representation_gap(
    x: &Matrix,
    vhat: &OrthonormalBasis,
    vstar: &OrthonormalBasis,
    b: &[f64],
) -> Result<f64, TransferError> {
    let target = x.matvec(&vstar.combine(b)?)?;
    let features = x.matmul(vhat.columns())?;
    let u = least_squares(&features, &target, DEFAULT_RCOND)?;
    let fit = features.matvec(&u)?;
    Ok(target.sub(&fit)?.norm())
}
