//! Small dense helpers shared by the geometries: symmetric matrix functions via
//! eigendecomposition, QR with a sign convention, sorted thin SVD and
//! principal angles.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, RngCore};
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// `(m + mᵀ) / 2`
pub fn sym(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Frobenius inner product `tr(aᵀb)`.
pub fn frob_inner(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.dot(b)
}

pub fn gaussian_matrix(rows: usize, cols: usize, rng: &mut dyn RngCore) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

pub fn is_finite(m: &DMatrix<f64>) -> bool {
    m.iter().all(|v| v.is_finite())
}

/// Eigendecomposition of the symmetric part of `m`, eigenvalues ascending.
pub fn sym_eigen(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(sym(m));
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (k, &i) in order.iter().enumerate() {
        vectors.set_column(k, &eig.eigenvectors.column(i));
    }
    (values, vectors)
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let (values, _) = sym_eigen(m);
    values.iter().copied().fold(f64::INFINITY, f64::min)
}

/// `Q f(Λ) Qᵀ` for the symmetric part of `m`, re-symmetrized.
pub fn sym_apply(m: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let (values, vectors) = sym_eigen(m);
    let scaled = DMatrix::from_fn(vectors.nrows(), vectors.ncols(), |i, j| {
        vectors[(i, j)] * f(values[j])
    });
    sym(&(scaled * vectors.transpose()))
}

fn require_spd(values: &DVector<f64>) -> Result<()> {
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    if min > 0.0 && min.is_finite() {
        Ok(())
    } else {
        Err(Error::NotSpd { min_eigenvalue: min })
    }
}

fn apply_spd(m: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> Result<DMatrix<f64>> {
    let (values, vectors) = sym_eigen(m);
    require_spd(&values)?;
    let scaled = DMatrix::from_fn(vectors.nrows(), vectors.ncols(), |i, j| {
        vectors[(i, j)] * f(values[j])
    });
    Ok(sym(&(scaled * vectors.transpose())))
}

pub fn sqrtm_spd(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    apply_spd(m, f64::sqrt)
}

pub fn inv_sqrtm_spd(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    apply_spd(m, |v| 1.0 / v.sqrt())
}

/// Square root and inverse square root from one eigendecomposition.
pub fn sqrt_pair_spd(m: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let (values, vectors) = sym_eigen(m);
    require_spd(&values)?;
    let build = |f: &dyn Fn(f64) -> f64| {
        let scaled = DMatrix::from_fn(vectors.nrows(), vectors.ncols(), |i, j| {
            vectors[(i, j)] * f(values[j])
        });
        sym(&(scaled * vectors.transpose()))
    };
    Ok((build(&f64::sqrt), build(&|v| 1.0 / v.sqrt())))
}

pub fn inv_spd(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    apply_spd(m, |v| 1.0 / v)
}

pub fn logm_spd(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    apply_spd(m, f64::ln)
}

pub fn expm_sym(m: &DMatrix<f64>) -> DMatrix<f64> {
    sym_apply(m, f64::exp)
}

/// Projection onto the PSD cone: negative eigenvalues are set to zero.
pub fn clip_psd(m: &DMatrix<f64>) -> DMatrix<f64> {
    sym_apply(m, |v| v.max(0.0))
}

/// Thin SVD `m = U diag(s) Vᵀ` with singular values sorted in decreasing order.
pub fn thin_svd(m: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>, DMatrix<f64>) {
    let svd = m.clone().svd(true, true);
    let u = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v_t requested");
    let k = svd.singular_values.len();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let s = DVector::from_iterator(k, order.iter().map(|&i| svd.singular_values[i]));
    let mut u_sorted = DMatrix::zeros(u.nrows(), k);
    let mut vt_sorted = DMatrix::zeros(k, v_t.ncols());
    for (dst, &src) in order.iter().enumerate() {
        u_sorted.set_column(dst, &u.column(src));
        vt_sorted.set_row(dst, &v_t.row(src));
    }
    (u_sorted, s, vt_sorted)
}

pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    let mut s: Vec<f64> = m.singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    singular_values(m).first().copied().unwrap_or(0.0)
}

/// Orthonormal factor of the thin QR decomposition, normalized so that the
/// triangular factor has a positive diagonal.
pub fn qf(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (rows, cols) = m.shape();
    if cols > rows {
        return Err(Error::InvalidArgument(format!(
            "qf needs a tall matrix, got {rows}x{cols}"
        )));
    }
    let qr = m.clone().qr();
    let mut q = qr.q();
    let r = qr.r();
    let scale = m.norm().max(1.0);
    let mut sigma_min = f64::INFINITY;
    for j in 0..cols {
        let d = r[(j, j)];
        sigma_min = sigma_min.min(d.abs());
        if d < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    if sigma_min <= 1e-12 * scale {
        return Err(Error::RankDeficient { sigma_min });
    }
    Ok(q)
}

/// Principal angles between the column spans of two matrices with
/// orthonormal columns, in increasing order. Cosines and sines are paired so
/// that both small and near-right angles are resolved accurately.
pub fn principal_angles(w: &DMatrix<f64>, y: &DMatrix<f64>) -> Vec<f64> {
    let cosines = singular_values(&(w.transpose() * y));
    let residual = y - w * (w.transpose() * y);
    let mut sines = singular_values(&residual);
    sines.resize(cosines.len(), 0.0);
    sines.sort_by(|a, b| a.total_cmp(b));
    cosines
        .iter()
        .zip(&sines)
        .map(|(&c, &s)| s.atan2(c))
        .collect()
}

/// Orthogonal polar factor `U Vᵀ` of a square matrix.
pub fn polar_factor(m: &DMatrix<f64>) -> DMatrix<f64> {
    let (u, _, v_t) = thin_svd(m);
    u * v_t
}

pub fn diag(values: &[f64]) -> DMatrix<f64> {
    DMatrix::from_diagonal(&DVector::from_column_slice(values))
}

/// Uniformly random orthogonal matrix (QR of a Gaussian matrix).
pub fn random_orthogonal(n: usize, rng: &mut dyn RngCore) -> DMatrix<f64> {
    loop {
        if let Ok(q) = qf(&gaussian_matrix(n, n, rng)) {
            return q;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn qf_positive_diagonal_and_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let m = gaussian_matrix(6, 3, &mut rng);
        let q = qf(&m).unwrap();
        let gram = q.transpose() * &q;
        assert_relative_eq!(gram, DMatrix::identity(3, 3), epsilon = 1e-12);
        let r = q.transpose() * &m;
        for j in 0..3 {
            assert!(r[(j, j)] > 0.0);
        }
    }

    #[test]
    fn qf_rejects_rank_deficient() {
        let m = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 2.0, 4.0, 3.0, 6.0]);
        assert!(matches!(qf(&m), Err(Error::RankDeficient { .. })));
    }

    #[test]
    fn matrix_functions_invert_each_other() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let b = gaussian_matrix(4, 4, &mut rng);
        let p = &b * b.transpose() + DMatrix::identity(4, 4);
        let root = sqrtm_spd(&p).unwrap();
        assert_relative_eq!(&root * &root, p.clone(), epsilon = 1e-10);
        assert_relative_eq!(expm_sym(&logm_spd(&p).unwrap()), p, epsilon = 1e-10);
    }

    #[test]
    fn clip_zeroes_negative_eigenvalues() {
        let clipped = clip_psd(&diag(&[1.0, -2.0]));
        assert_relative_eq!(clipped, diag(&[1.0, 0.0]), epsilon = 1e-15);
    }

    #[test]
    fn principal_angle_of_rotated_line() {
        let theta: f64 = 0.3;
        let w = DMatrix::from_column_slice(2, 1, &[1.0, 0.0]);
        let y = DMatrix::from_column_slice(2, 1, &[theta.cos(), theta.sin()]);
        assert_relative_eq!(principal_angles(&w, &y)[0], theta, epsilon = 1e-15);
    }

    #[test]
    fn logm_rejects_indefinite() {
        assert!(matches!(
            logm_spd(&diag(&[1.0, -1.0])),
            Err(Error::NotSpd { .. })
        ));
    }
}
