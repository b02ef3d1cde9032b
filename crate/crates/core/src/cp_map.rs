//! Normal unital completely positive maps in Kraus form `T(x) = Σ k_i* x k_i`.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::algebra::{AlgebraElement, MultiMatrixAlgebra};
use crate::error::{Error, Result};
use crate::linalg::{self, c, identity, real, CMat, C64, RANK_TOL};

/// Validation tolerance applied when a channel is constructed.
pub const CHANNEL_TOL: f64 = 1e-9;

#[derive(Clone, Debug)]
pub struct UcpMap {
    algebra: Arc<MultiMatrixAlgebra>,
    kraus: Vec<CMat>,
}

impl UcpMap {
    /// Checks shapes, `Σ k_i* k_i = 1` and that the map preserves the algebra.
    pub fn new(algebra: &Arc<MultiMatrixAlgebra>, kraus: Vec<CMat>) -> Result<Self> {
        let d = algebra.ambient_dim();
        if kraus.is_empty() {
            return Err(Error::Validation("empty Kraus family".into()));
        }
        if let Some(k) = kraus.iter().find(|k| k.shape() != (d, d)) {
            return Err(Error::Validation(format!(
                "Kraus operator of shape {:?} for ambient dimension {d}",
                k.shape()
            )));
        }
        let t = UcpMap {
            algebra: algebra.clone(),
            kraus,
        };
        let unital = t.unitality_residual();
        if unital > CHANNEL_TOL {
            return Err(Error::Validation(format!(
                "Kraus family is not unital (residual {unital:.3e})"
            )));
        }
        let closure = t.closure_residual();
        if closure > CHANNEL_TOL {
            return Err(Error::ClosureViolation(closure));
        }
        Ok(t)
    }

    pub fn identity(algebra: &Arc<MultiMatrixAlgebra>) -> Self {
        UcpMap {
            algebra: algebra.clone(),
            kraus: vec![identity(algebra.ambient_dim())],
        }
    }

    /// `T(x)_i = Σ_j P_ij x_j` on a commutative algebra, with Kraus
    /// operators `√P_ij |j⟩⟨i|`.
    pub fn from_stochastic(algebra: &Arc<MultiMatrixAlgebra>, p: &[Vec<f64>]) -> Result<Self> {
        if !algebra.is_commutative() {
            return Err(Error::Validation(
                "stochastic channels need a commutative algebra".into(),
            ));
        }
        let n = algebra.ambient_dim();
        if p.len() != n || p.iter().any(|row| row.len() != n) {
            return Err(Error::Validation(format!("stochastic matrix must be {n}x{n}")));
        }
        for row in p {
            if row.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
                return Err(Error::Validation("stochastic entries must be nonnegative".into()));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > CHANNEL_TOL {
                return Err(Error::Validation(format!("row sums to {s}, not 1")));
            }
        }
        let mut kraus = Vec::new();
        for (i, row) in p.iter().enumerate() {
            for (j, &pij) in row.iter().enumerate() {
                if pij > 0.0 {
                    let mut k = CMat::zeros(n, n);
                    k[(j, i)] = real(pij.sqrt());
                    kraus.push(k);
                }
            }
        }
        UcpMap::new(algebra, kraus)
    }

    /// Kraus form of a map given on block coordinates, read off the
    /// eigenvectors of its blockwise Choi matrices. Fails unless the map is
    /// unital and completely positive to within `tol`.
    pub fn from_linear_map(map: &LinearMap, tol: f64) -> Result<Self> {
        let report = choi_validate_map(map, tol)?;
        if !report.is_cp {
            return Err(Error::Validation(format!(
                "map is not completely positive (Choi eigenvalue {:.3e}, closure residual {:.3e})",
                report.min_eigenvalue, report.closure_residual
            )));
        }
        if !report.is_unital {
            return Err(Error::Validation(format!(
                "map is not unital (residual {:.3e})",
                report.unitality_residual
            )));
        }
        let algebra = map.algebra();
        let d = algebra.ambient_dim();
        let mut kraus = Vec::new();
        for (k, choi) in choi_blocks(algebra, |x| map.apply_matrix(x)).into_iter().enumerate() {
            let n = algebra.blocks()[k];
            let off = algebra.offsets()[k];
            let herm = (&choi + choi.adjoint()) * real(0.5);
            let (vals, vecs) = linalg::hermitian_eigen(&herm)?;
            let top = vals.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            for (idx, &lam) in vals.iter().enumerate() {
                if lam <= RANK_TOL * top.max(1.0) {
                    continue;
                }
                let s = lam.sqrt();
                let mut op = CMat::zeros(d, d);
                for i in 0..n {
                    for r in 0..d {
                        op[(off + i, r)] = vecs[(i * d + r, idx)].conj() * s;
                    }
                }
                kraus.push(op);
            }
        }
        UcpMap::new(algebra, kraus)
    }

    pub fn algebra(&self) -> &Arc<MultiMatrixAlgebra> {
        &self.algebra
    }

    pub fn kraus(&self) -> &[CMat] {
        &self.kraus
    }

    /// `Σ k_i* x k_i` on ambient matrices, without closure checks.
    pub fn apply_matrix(&self, x: &CMat) -> CMat {
        let d = self.algebra.ambient_dim();
        let mut out = CMat::zeros(d, d);
        for k in &self.kraus {
            out += k.adjoint() * x * k;
        }
        out
    }

    pub fn apply(&self, x: &AlgebraElement) -> Result<AlgebraElement> {
        let y = self.apply_matrix(x.data());
        let residual = self.algebra.off_block_residual(&y) / y.norm().max(1.0);
        if residual > CHANNEL_TOL {
            return Err(Error::ClosureViolation(residual));
        }
        AlgebraElement::new(&self.algebra, y)
    }

    pub fn unitality_residual(&self) -> f64 {
        let d = self.algebra.ambient_dim();
        let mut s = CMat::zeros(d, d);
        for k in &self.kraus {
            s += k.adjoint() * k;
        }
        (s - identity(d)).norm()
    }

    /// Largest off-block mass of `T(e)` over the matrix-unit basis.
    pub fn closure_residual(&self) -> f64 {
        self.algebra
            .basis()
            .iter()
            .map(|e| self.algebra.off_block_residual(&self.apply_matrix(e)))
            .fold(0.0, f64::max)
    }

    /// The induced linear map on block coordinates.
    pub fn superoperator(&self) -> LinearMap {
        let ops = self.algebra.operator_basis();
        let l = self.algebra.lin_dim();
        let mut m = CMat::zeros(l, l);
        for (j, e) in self.algebra.basis().iter().enumerate() {
            let col = ops.coords(&self.apply_matrix(e));
            for (i, x) in col.into_iter().enumerate() {
                m[(i, j)] = x;
            }
        }
        LinearMap {
            algebra: self.algebra.clone(),
            matrix: m,
        }
    }
}

/// A linear map on `M` stored on block coordinates; used for inputs that
/// have no Kraus form.
#[derive(Clone, Debug)]
pub struct LinearMap {
    algebra: Arc<MultiMatrixAlgebra>,
    matrix: CMat,
}

impl LinearMap {
    pub fn new(algebra: &Arc<MultiMatrixAlgebra>, matrix: CMat) -> Result<Self> {
        let l = algebra.lin_dim();
        if matrix.shape() != (l, l) {
            return Err(Error::Validation(format!(
                "superoperator must be {l}x{l}, got {:?}",
                matrix.shape()
            )));
        }
        Ok(LinearMap {
            algebra: algebra.clone(),
            matrix,
        })
    }

    /// `x ↦ xᵀ` blockwise.
    pub fn transpose(algebra: &Arc<MultiMatrixAlgebra>) -> Self {
        let units = algebra.units();
        let l = units.len();
        let mut m = CMat::zeros(l, l);
        for (j, &(k, a, b)) in units.iter().enumerate() {
            let i = units
                .iter()
                .position(|&u| u == (k, b, a))
                .expect("transposed unit exists");
            m[(i, j)] = real(1.0);
        }
        LinearMap {
            algebra: algebra.clone(),
            matrix: m,
        }
    }

    pub fn algebra(&self) -> &Arc<MultiMatrixAlgebra> {
        &self.algebra
    }

    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    pub fn apply_matrix(&self, x: &CMat) -> CMat {
        let ops = self.algebra.operator_basis();
        let coords = crate::CVec::from_vec(ops.coords(x));
        let out = &self.matrix * coords;
        ops.element(out.as_slice())
    }
}

/// Outcome of [`choi_validate`].
#[derive(Clone, Copy, Debug)]
pub struct ChoiReport {
    pub is_unital: bool,
    pub is_cp: bool,
    pub unitality_residual: f64,
    pub closure_residual: f64,
    /// `max(0, −λ_min)` over the blockwise Choi matrices.
    pub psd_residual: f64,
    pub min_eigenvalue: f64,
    pub choi_rank: usize,
}

impl ChoiReport {
    pub fn passes(&self) -> bool {
        self.is_unital && self.is_cp
    }
}

/// `⊕_k Σ_{ij} E^{(k)}_{ij} ⊗ F(e^{(k)}_{ij})` for a map `F` given on ambient matrices.
pub fn choi_blocks<F: Fn(&CMat) -> CMat>(algebra: &MultiMatrixAlgebra, f: F) -> Vec<CMat> {
    let d = algebra.ambient_dim();
    let mut out = Vec::new();
    for (k, &n) in algebra.blocks().iter().enumerate() {
        let off = algebra.offsets()[k];
        let mut choi = CMat::zeros(n * d, n * d);
        for i in 0..n {
            for j in 0..n {
                let mut e = CMat::zeros(d, d);
                e[(off + i, off + j)] = real(1.0);
                choi.view_mut((i * d, j * d), (d, d)).copy_from(&f(&e));
            }
        }
        out.push(choi);
    }
    out
}

fn choi_report<F: Fn(&CMat) -> CMat>(algebra: &MultiMatrixAlgebra, f: F, tol: f64) -> Result<ChoiReport> {
    let d = algebra.ambient_dim();
    let unitality_residual = (f(&identity(d)) - identity(d)).norm();
    let closure_residual = algebra
        .basis()
        .iter()
        .map(|e| algebra.off_block_residual(&f(e)))
        .fold(0.0, f64::max);
    let mut min_eigenvalue = f64::INFINITY;
    let mut choi_rank = 0;
    for block in choi_blocks(algebra, &f) {
        let herm = (block.adjoint() - &block).norm();
        let vals = linalg::hermitian_eigenvalues(&block)?;
        let top = vals.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        choi_rank += vals.iter().filter(|&&v| v > RANK_TOL * top).count();
        let lo = vals.first().copied().unwrap_or(0.0);
        // A non-Hermitian Choi matrix is never PSD.
        min_eigenvalue = min_eigenvalue.min(if herm > tol { -herm } else { lo });
    }
    let psd_residual = (-min_eigenvalue).max(0.0);
    Ok(ChoiReport {
        is_unital: unitality_residual <= tol,
        is_cp: psd_residual <= tol && closure_residual <= tol,
        unitality_residual,
        closure_residual,
        psd_residual,
        min_eigenvalue,
        choi_rank,
    })
}

pub fn choi_validate(t: &UcpMap, tol: f64) -> Result<ChoiReport> {
    choi_report(&t.algebra, |x| t.apply_matrix(x), tol)
}

pub fn choi_validate_map(map: &LinearMap, tol: f64) -> Result<ChoiReport> {
    choi_report(&map.algebra, |x| map.apply_matrix(x), tol)
}

/// `T^n`: Kraus family of all length-`n` products.
pub fn power(t: &UcpMap, n: usize) -> UcpMap {
    let mut kraus = vec![identity(t.algebra.ambient_dim())];
    for _ in 0..n {
        let mut next = Vec::with_capacity(kraus.len() * t.kraus.len());
        for a in &kraus {
            for k in &t.kraus {
                next.push(a * k);
            }
        }
        kraus = next;
    }
    UcpMap {
        algebra: t.algebra.clone(),
        kraus,
    }
}

/// A random channel, deterministic in `seed`.
///
/// On a factor: `r` complex Gaussian matrices normalized by `S^{-1/2}`,
/// `S = Σ g_i* g_i`. On a commutative algebra `r` is ignored and a random
/// strictly positive row-stochastic matrix is drawn.
pub fn random_ucp(algebra: &Arc<MultiMatrixAlgebra>, r: usize, seed: u64) -> Result<UcpMap> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if algebra.is_commutative() {
        let n = algebra.ambient_dim();
        let p: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                let row: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
                let s: f64 = row.iter().sum();
                row.into_iter().map(|x| x / s).collect()
            })
            .collect();
        return UcpMap::from_stochastic(algebra, &p);
    }
    if !algebra.is_factor() {
        return Err(Error::Validation(
            "random channels are only generated on factors and commutative algebras".into(),
        ));
    }
    if r == 0 {
        return Err(Error::Validation("Kraus count must be at least 1".into()));
    }
    let d = algebra.ambient_dim();
    for _ in 0..5 {
        let g: Vec<CMat> = (0..r)
            .map(|_| CMat::from_fn(d, d, |_, _| gaussian(&mut rng)))
            .collect();
        let mut s = CMat::zeros(d, d);
        for gi in &g {
            s += gi.adjoint() * gi;
        }
        if let Ok(inv) = linalg::inv_sqrt_psd(&s) {
            return UcpMap::new(algebra, g.iter().map(|gi| gi * &inv).collect());
        }
    }
    Err(Error::Numerical("random Kraus normalization stayed singular".into()))
}

fn gaussian<R: Rng>(rng: &mut R) -> C64 {
    c(rng.sample(StandardNormal), rng.sample(StandardNormal))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::make_algebra;

    fn half_half(m: &Arc<MultiMatrixAlgebra>) -> UcpMap {
        UcpMap::from_stochastic(m, &[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap()
    }

    #[test]
    fn apply_examples() {
        let m2 = make_algebra(&[2]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = AlgebraElement::random(&m2, &mut rng);
        let id = UcpMap::identity(&m2);
        assert!(id.apply(&x).unwrap().distance(&x) < 1e-14);
        let u = random_ucp(&m2, 1, 3).unwrap();
        let one = AlgebraElement::identity(&m2);
        assert!(u.apply(&one).unwrap().distance(&one) < 1e-12);
        let c2 = make_algebra(&[1, 1]).unwrap();
        let e0 = AlgebraElement::basis_element(&c2, 0);
        let y = half_half(&c2).apply(&e0).unwrap();
        assert!((y.data()[(0, 0)] - real(0.5)).norm() < 1e-14);
        assert!((y.data()[(1, 1)] - real(0.5)).norm() < 1e-14);
    }

    #[test]
    fn closure_violation_detected() {
        let cm = make_algebra(&[1, 2]).unwrap();
        // A unitary mixing the ℂ summand into M₂ does not preserve the algebra.
        let mut u = CMat::zeros(3, 3);
        u[(1, 0)] = real(1.0);
        u[(0, 1)] = real(1.0);
        u[(2, 2)] = real(1.0);
        assert!(matches!(UcpMap::new(&cm, vec![u]), Err(Error::ClosureViolation(_))));
    }

    #[test]
    fn choi_examples() {
        let m2 = make_algebra(&[2]).unwrap();
        let id = choi_validate(&UcpMap::identity(&m2), 1e-12).unwrap();
        assert!(id.passes());
        assert_eq!(id.choi_rank, 1);
        let units: Vec<CMat> = m2.basis().iter().map(|e| e * real(1.0 / 2f64.sqrt())).collect();
        let depol = UcpMap::new(&m2, units).unwrap();
        let rep = choi_validate(&depol, 1e-12).unwrap();
        assert!(rep.passes());
        let block = &choi_blocks(&m2, |x| depol.apply_matrix(x))[0];
        assert!((block - identity(4) * real(0.5)).norm() < 1e-12);
        let tr = choi_validate_map(&LinearMap::transpose(&m2), 1e-12).unwrap();
        assert!(tr.is_unital);
        assert!(!tr.is_cp);
    }

    #[test]
    fn power_examples() {
        let c2 = make_algebra(&[1, 1]).unwrap();
        let t = half_half(&c2);
        assert_eq!(power(&t, 0).kraus().len(), 1);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = AlgebraElement::random(&c2, &mut rng);
        let once = t.apply(&x).unwrap();
        assert!(power(&t, 1).apply(&x).unwrap().distance(&once) < 1e-14);
        assert!(power(&t, 2).apply(&x).unwrap().distance(&once) < 1e-14);
    }

    #[test]
    fn random_examples() {
        let m2 = make_algebra(&[2]).unwrap();
        let u = random_ucp(&m2, 1, 11).unwrap();
        let k = &u.kraus()[0];
        assert!((k.adjoint() * k - identity(2)).norm() < 1e-12);
        let t = random_ucp(&m2, 2, 42).unwrap();
        assert!(choi_validate(&t, 1e-12).unwrap().passes());
        let c3 = make_algebra(&[1, 1, 1]).unwrap();
        let s = random_ucp(&c3, 3, 7).unwrap();
        let one = AlgebraElement::identity(&c3);
        assert!(s.apply(&one).unwrap().distance(&one) < 1e-12);
        let bad = make_algebra(&[2, 2]).unwrap();
        assert!(random_ucp(&bad, 2, 1).is_err());
        let again = random_ucp(&m2, 2, 42).unwrap();
        assert_eq!(t.kraus(), again.kraus());
    }

    #[test]
    fn superoperator_round_trip() {
        let m = MultiMatrixAlgebra::new(&[1, 2]).map(Arc::new).unwrap();
        let m2 = MultiMatrixAlgebra::new(&[2]).map(Arc::new).unwrap();
        let t = random_ucp(&m2, 3, 5).unwrap();
        let back = UcpMap::from_linear_map(&t.superoperator(), 1e-9).unwrap();
        assert!((back.superoperator().matrix() - t.superoperator().matrix()).norm() < 1e-10);
        let id = UcpMap::identity(&m);
        let back = UcpMap::from_linear_map(&id.superoperator(), 1e-9).unwrap();
        assert!((back.superoperator().matrix() - id.superoperator().matrix()).norm() < 1e-10);
        assert!(UcpMap::from_linear_map(&LinearMap::transpose(&m2), 1e-9).is_err());
    }
}
