//! Dense complex linear algebra shared by every construction.
//!
//! Matrices are stored as nalgebra `DMatrix<Complex64>`; the heavy
//! decompositions (Hermitian eigen, SVD, QR) are delegated to faer.

use faer::{Mat, MatRef, Side};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

/// Relative cutoff for every rank and null-space decision.
pub const RANK_TOL: f64 = 1e-9;

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn real(re: f64) -> C64 {
    C64::new(re, 0.0)
}

fn to_faer(a: &CMat) -> Mat<C64> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)])
}

fn from_faer(a: MatRef<'_, C64>) -> CMat {
    CMat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)])
}

/// `a · b` through the faster kernel; worthwhile for large products.
pub fn matmul(a: &CMat, b: &CMat) -> CMat {
    assert_eq!(a.ncols(), b.nrows(), "matmul shape mismatch");
    let c = to_faer(a) * to_faer(b);
    from_faer(c.as_ref())
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

/// Eigenvalues (nondecreasing) and orthonormal eigenvectors of the Hermitian part of `h`.
pub fn hermitian_eigen(h: &CMat) -> Result<(Vec<f64>, CMat)> {
    let n = h.nrows();
    if n == 0 {
        return Ok((Vec::new(), CMat::zeros(0, 0)));
    }
    let sym = Mat::from_fn(n, n, |i, j| (h[(i, j)] + h[(j, i)].conj()) * 0.5);
    let evd = sym
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Numerical(format!("eigendecomposition failed: {e:?}")))?;
    let s = evd.S().column_vector();
    let values = (0..n).map(|i| s[i].re).collect();
    Ok((values, from_faer(evd.U())))
}

pub fn hermitian_eigenvalues(h: &CMat) -> Result<Vec<f64>> {
    let n = h.nrows();
    if n == 0 {
        return Ok(Vec::new());
    }
    let sym = Mat::from_fn(n, n, |i, j| (h[(i, j)] + h[(j, i)].conj()) * 0.5);
    sym.self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::Numerical(format!("eigendecomposition failed: {e:?}")))
}

/// Thin SVD `a = U diag(s) V*` with singular values nonincreasing.
pub fn thin_svd(a: &CMat) -> Result<(CMat, Vec<f64>, CMat)> {
    if a.nrows() == 0 || a.ncols() == 0 {
        let k = 0;
        return Ok((
            CMat::zeros(a.nrows(), k),
            Vec::new(),
            CMat::zeros(a.ncols(), k),
        ));
    }
    let svd = to_faer(a)
        .thin_svd()
        .map_err(|e| Error::Numerical(format!("svd failed: {e:?}")))?;
    let s = svd.S().column_vector();
    let values = (0..s.nrows()).map(|i| s[i].re).collect();
    Ok((from_faer(svd.U()), values, from_faer(svd.V())))
}

pub fn singular_values(a: &CMat) -> Result<Vec<f64>> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Ok(Vec::new());
    }
    to_faer(a)
        .singular_values()
        .map_err(|e| Error::Numerical(format!("svd failed: {e:?}")))
}

/// Spectral norm.
pub fn op_norm(a: &CMat) -> f64 {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0.0;
    }
    match singular_values(a) {
        Ok(s) => s.first().copied().unwrap_or(0.0),
        Err(_) => a.norm(),
    }
}

/// Orthonormal basis of the null space of `a`, keeping directions whose
/// singular value is at most `cutoff` (absolute).
pub fn null_space_abs(a: &CMat, cutoff: f64) -> Result<CMat> {
    let (m, n) = (a.nrows(), a.ncols());
    if n == 0 {
        return Ok(CMat::zeros(0, 0));
    }
    if m == 0 {
        return Ok(identity(n));
    }
    let square = if m > n {
        let r = to_faer(a).qr();
        let r = r.thin_R();
        Mat::from_fn(n, n, |i, j| r[(i, j)])
    } else if m < n {
        Mat::from_fn(n, n, |i, j| if i < m { a[(i, j)] } else { C64::new(0.0, 0.0) })
    } else {
        to_faer(a)
    };
    let svd = square
        .svd()
        .map_err(|e| Error::Numerical(format!("svd failed: {e:?}")))?;
    let s = svd.S().column_vector();
    let v = svd.V();
    let keep: Vec<usize> = (0..n).filter(|&i| s[i].re <= cutoff).collect();
    Ok(CMat::from_fn(n, keep.len(), |i, j| v[(i, keep[j])]))
}

/// Null space with the standard relative cutoff `rel · σ_max`.
pub fn null_space(a: &CMat, rel: f64) -> Result<CMat> {
    let scale = op_norm(a);
    null_space_abs(a, rel * scale)
}

/// Null space of a Hermitian matrix: eigenvectors with |λ| ≤ cutoff.
pub fn hermitian_null_space_abs(h: &CMat, cutoff: f64) -> Result<CMat> {
    let (vals, vecs) = hermitian_eigen(h)?;
    let keep: Vec<usize> = (0..vals.len()).filter(|&i| vals[i].abs() <= cutoff).collect();
    Ok(CMat::from_fn(h.nrows(), keep.len(), |i, j| vecs[(i, keep[j])]))
}

/// A square-or-tall matrix with the column space and singular values of `a`.
fn compress_wide(a: &CMat) -> CMat {
    if a.ncols() <= 2 * a.nrows() {
        return a.clone();
    }
    // a = (QR)* = R* Q*
    let qr = to_faer(&a.adjoint()).qr();
    let r = qr.thin_R();
    CMat::from_fn(a.nrows(), a.nrows(), |i, j| r[(j, i)].conj())
}

/// Orthonormal basis of the column space of `a` (relative cutoff).
pub fn range_basis(a: &CMat, rel: f64) -> Result<CMat> {
    let (u, s, _) = thin_svd(&compress_wide(a))?;
    let smax = s.first().copied().unwrap_or(0.0);
    if smax == 0.0 {
        return Ok(CMat::zeros(a.nrows(), 0));
    }
    let r = s.iter().filter(|&&x| x > rel * smax).count();
    Ok(u.columns(0, r).into_owned())
}

pub fn rank(a: &CMat, rel: f64) -> Result<usize> {
    let s = singular_values(&compress_wide(a))?;
    let smax = s.first().copied().unwrap_or(0.0);
    if smax == 0.0 {
        return Ok(0);
    }
    Ok(s.iter().filter(|&&x| x > rel * smax).count())
}

/// Moore-Penrose pseudo-inverse with relative cutoff.
pub fn pinv(a: &CMat, rel: f64) -> Result<CMat> {
    let (u, s, v) = thin_svd(a)?;
    let smax = s.first().copied().unwrap_or(0.0);
    let mut out = CMat::zeros(a.ncols(), a.nrows());
    if smax == 0.0 {
        return Ok(out);
    }
    for (k, &sk) in s.iter().enumerate() {
        if sk > rel * smax {
            out += v.column(k) * u.column(k).adjoint() * real(1.0 / sk);
        }
    }
    Ok(out)
}

/// Range projection of `a`.
pub fn range_projection(a: &CMat, rel: f64) -> Result<CMat> {
    let q = range_basis(a, rel)?;
    Ok(&q * q.adjoint())
}

/// `A ⊗ B` with index `(i·rows(B) + k, j·cols(B) + l)`.
pub fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

pub fn kron_vec(a: &CVec, b: &CVec) -> CVec {
    a.kronecker(b)
}

/// Column-major vectorization.
pub fn vectorize(a: &CMat) -> CVec {
    CVec::from_column_slice(a.as_slice())
}

pub fn unvectorize(v: &[C64], rows: usize, cols: usize) -> CMat {
    CMat::from_column_slice(rows, cols, v)
}

/// `[a₁ | a₂ | …]`; every block must have `rows` rows.
pub fn hcat(blocks: &[CMat], rows: usize) -> CMat {
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = CMat::zeros(rows, cols);
    let mut off = 0;
    for b in blocks {
        out.view_mut((0, off), (rows, b.ncols())).copy_from(b);
        off += b.ncols();
    }
    out
}

/// Vertical concatenation of blocks with `cols` columns.
pub fn vcat(blocks: &[CMat], cols: usize) -> CMat {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = CMat::zeros(rows, cols);
    let mut off = 0;
    for b in blocks {
        out.view_mut((off, 0), (b.nrows(), cols)).copy_from(b);
        off += b.nrows();
    }
    out
}

/// `[a·b_i]` and `[b_i·a]` for every square `b_i`, each as one large product.
pub fn multiply_all(a: &CMat, bs: &[CMat]) -> (Vec<CMat>, Vec<CMat>) {
    let d = a.nrows();
    if bs.is_empty() {
        return (Vec::new(), Vec::new());
    }
    let left = matmul(a, &hcat(bs, d));
    let right = matmul(&vcat(bs, d), a);
    let k = bs.len();
    (
        (0..k).map(|i| left.columns(i * d, d).into_owned()).collect(),
        (0..k).map(|i| right.rows(i * d, d).into_owned()).collect(),
    )
}

/// `max_i ‖a·b_i − b_i·a‖`.
pub fn max_commutator(a: &CMat, bs: &[CMat]) -> f64 {
    let (l, r) = multiply_all(a, bs);
    l.iter().zip(&r).fold(0.0, |m, (x, y)| m.max((x - y).norm()))
}

/// Block-diagonal sum.
pub fn block_diag(a: &CMat, b: &CMat) -> CMat {
    let mut out = CMat::zeros(a.nrows() + b.nrows(), a.ncols() + b.ncols());
    out.view_mut((0, 0), a.shape()).copy_from(a);
    out.view_mut(a.shape(), b.shape()).copy_from(b);
    out
}

/// Hilbert-Schmidt inner product `Tr(a* b)`.
pub fn hs_inner(a: &CMat, b: &CMat) -> C64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

pub fn basis_vector(n: usize, i: usize) -> CVec {
    let mut v = CVec::zeros(n);
    v[i] = real(1.0);
    v
}

pub fn trace(a: &CMat) -> C64 {
    a.diagonal().sum()
}

/// Restricts an existing null-space basis (columns of `prev`, or the full
/// space when `None`) by one more linear constraint `apply`, which maps a
/// stack of column vectors to a stack of residual vectors.
pub fn restrict_null_space<F>(prev: Option<&CMat>, n: usize, apply: F, cutoff: f64) -> Result<CMat>
where
    F: Fn(&CMat) -> CMat,
{
    let start = match prev {
        Some(p) => p.clone(),
        None => identity(n),
    };
    if start.ncols() == 0 {
        return Ok(start);
    }
    let image = apply(&start);
    let kernel = null_space_abs(&image, cutoff)?;
    Ok(&start * kernel)
}

/// `x^{-1/2}` for a positive definite Hermitian matrix.
pub fn inv_sqrt_psd(h: &CMat) -> Result<CMat> {
    let (vals, vecs) = hermitian_eigen(h)?;
    let lmax = vals.iter().cloned().fold(0.0, f64::max);
    if vals.iter().any(|&v| v <= RANK_TOL * lmax.max(f64::MIN_POSITIVE)) {
        return Err(Error::Numerical("matrix is singular".into()));
    }
    let d = CMat::from_diagonal(&CVec::from_iterator(
        vals.len(),
        vals.iter().map(|&v| real(1.0 / v.sqrt())),
    ));
    Ok(&vecs * d * vecs.adjoint())
}

/// Relative Frobenius residual `‖a − b‖ / max(1, ‖b‖)`.
pub fn rel_diff(a: &CMat, b: &CMat) -> f64 {
    (a - b).norm() / b.norm().max(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn null_space_of_rank_one() {
        let a = CMat::from_element(3, 3, real(1.0));
        let n = null_space(&a, RANK_TOL).unwrap();
        assert_eq!(n.ncols(), 2);
        assert!((&a * &n).norm() < 1e-12);
    }

    #[test]
    fn null_space_tall_and_wide() {
        let a = CMat::from_fn(6, 3, |i, j| real((i + 2 * j) as f64 % 3.0));
        let n = null_space(&a, RANK_TOL).unwrap();
        assert!((&a * &n).norm() < 1e-10);
        assert_eq!(n.ncols() + rank(&a, RANK_TOL).unwrap(), 3);
        let w = a.adjoint();
        let nw = null_space(&w, RANK_TOL).unwrap();
        assert_eq!(nw.ncols() + rank(&w, RANK_TOL).unwrap(), 6);
        assert!((&w * &nw).norm() < 1e-10);
    }

    #[test]
    fn pinv_inverts_on_range() {
        let a = CMat::from_fn(3, 2, |i, j| c(i as f64, j as f64 + 1.0));
        let p = pinv(&a, RANK_TOL).unwrap();
        assert!((&a * &p * &a - &a).norm() < 1e-12);
    }

    #[test]
    fn kron_index_convention() {
        let a = CMat::from_fn(2, 2, |i, j| real((2 * i + j) as f64));
        let b = CMat::from_fn(2, 2, |i, j| real((10 * i + j) as f64));
        let k = kron(&a, &b);
        assert_eq!(k[(2 + 1, 0 + 1)], a[(1, 0)] * b[(1, 1)]);
    }
}
