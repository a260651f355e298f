use nalgebra::{DMatrix, DVector};

use super::{CompressError, Result};

/// Per-coordinate truncated principal components of trajectory rows.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    /// Mean trajectory (length N) per coordinate.
    pub mean: [DVector<f64>; 3],
    /// `N x r` orthonormal basis per coordinate.
    pub basis: [DMatrix<f64>; 3],
    /// `V x r` coefficients per coordinate.
    pub coeffs: [DMatrix<f64>; 3],
}

impl PcaModel {
    pub fn rank(&self) -> usize {
        self.basis[0].ncols()
    }
}

fn centered(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let v = m.nrows() as f64;
    let mean = DVector::from_fn(m.ncols(), |j, _| m.column(j).sum() / v);
    let mut c = m.clone();
    for (j, mut col) in c.column_iter_mut().enumerate() {
        col.add_scalar_mut(-mean[j]);
    }
    (mean, c)
}

/// Rank-`rank` principal-component model of each `V x N` coordinate matrix.
/// Rank 0 keeps only the mean trajectory.
pub fn pca_encode(parts: &[DMatrix<f64>; 3], rank: usize) -> Result<PcaModel> {
    let (v, n) = parts[0].shape();
    if parts.iter().any(|p| p.shape() != (v, n)) {
        return Err(CompressError::Shape("coordinate matrices differ in shape".into()));
    }
    if v == 0 || n == 0 {
        return Err(CompressError::Shape("empty trajectory matrix".into()));
    }
    if rank > v.min(n) {
        return Err(CompressError::Config(format!("rank {rank} exceeds min(V, N) = {}", v.min(n))));
    }
    if parts.iter().any(|p| p.iter().any(|x| !x.is_finite())) {
        return Err(CompressError::Unmatched);
    }
    let mut mean: [DVector<f64>; 3] = Default::default();
    let mut basis: [DMatrix<f64>; 3] = Default::default();
    let mut coeffs: [DMatrix<f64>; 3] = Default::default();
    for k in 0..3 {
        let (mu, c) = centered(&parts[k]);
        let svd = c.clone().svd(false, true);
        let vt = svd.v_t.expect("right singular vectors requested");
        let b = vt.rows(0, rank).transpose();
        coeffs[k] = &c * &b;
        basis[k] = b;
        mean[k] = mu;
    }
    Ok(PcaModel { mean, basis, coeffs })
}

pub fn pca_decode(model: &PcaModel) -> [DMatrix<f64>; 3] {
    std::array::from_fn(|k| {
        let mut r = &model.coeffs[k] * model.basis[k].transpose();
        for (j, mut col) in r.column_iter_mut().enumerate() {
            col.add_scalar_mut(model.mean[k][j]);
        }
        r
    })
}
