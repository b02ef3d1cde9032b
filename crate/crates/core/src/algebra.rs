//! Finite-dimensional von Neumann algebras: multi-matrix algebras, operator
//! algebras given by spanning bases, commutants, central supports and the
//! standard form.

use std::fmt;
use std::ops::{Add, Mul, Sub};
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{
    self, c, hcat, hs_inner, real, unvectorize, CMat, C64, RANK_TOL,
};
use crate::wstar::{sylvester_kernel, Action, WStarBimodule};

/// A `*`-closed unital algebra of operators on `ℂ^carrier_dim`, stored through a
/// Hilbert-Schmidt orthonormal basis.
#[derive(Clone)]
pub struct OperatorAlgebraBasis {
    carrier_dim: usize,
    basis: Vec<CMat>,
}

impl fmt::Debug for OperatorAlgebraBasis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OperatorAlgebraBasis")
            .field("carrier_dim", &self.carrier_dim)
            .field("dim", &self.basis.len())
            .finish()
    }
}

/// Residuals of the algebra axioms on a spanning basis.
#[derive(Clone, Copy, Debug)]
pub struct ClosureReport {
    pub adjoint: f64,
    pub product: f64,
    pub unit: f64,
}

impl ClosureReport {
    pub fn max(&self) -> f64 {
        self.adjoint.max(self.product).max(self.unit)
    }
}

impl OperatorAlgebraBasis {
    /// Wraps a basis that is already Hilbert-Schmidt orthonormal.
    pub fn from_orthonormal(carrier_dim: usize, basis: Vec<CMat>) -> Self {
        OperatorAlgebraBasis { carrier_dim, basis }
    }

    /// Orthonormalizes the span of `mats`.
    pub fn from_spanning(carrier_dim: usize, mats: &[CMat]) -> Result<Self> {
        let d2 = carrier_dim * carrier_dim;
        let mut stack = CMat::zeros(d2, mats.len());
        for (k, m) in mats.iter().enumerate() {
            if m.shape() != (carrier_dim, carrier_dim) {
                return Err(Error::Validation(format!(
                    "matrix of shape {:?} on a carrier of dimension {carrier_dim}",
                    m.shape()
                )));
            }
            stack.column_mut(k).copy_from_slice(m.as_slice());
        }
        let q = linalg::range_basis(&stack, RANK_TOL)?;
        let basis = (0..q.ncols())
            .map(|k| unvectorize(q.column(k).as_slice(), carrier_dim, carrier_dim))
            .collect();
        Ok(Self::from_orthonormal(carrier_dim, basis))
    }

    /// All of `B(ℂ^d)`, with matrix units as basis.
    pub fn full(d: usize) -> Self {
        let mut basis = Vec::with_capacity(d * d);
        for i in 0..d {
            for j in 0..d {
                let mut e = CMat::zeros(d, d);
                e[(i, j)] = real(1.0);
                basis.push(e);
            }
        }
        Self::from_orthonormal(d, basis)
    }

    pub fn carrier_dim(&self) -> usize {
        self.carrier_dim
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn basis(&self) -> &[CMat] {
        &self.basis
    }

    pub fn element(&self, coords: &[C64]) -> CMat {
        let mut out = CMat::zeros(self.carrier_dim, self.carrier_dim);
        for (b, &x) in self.basis.iter().zip(coords) {
            out += b * x;
        }
        out
    }

    /// Coefficients of the orthogonal projection of `x` onto the span.
    pub fn coords(&self, x: &CMat) -> Vec<C64> {
        self.basis.iter().map(|b| hs_inner(b, x)).collect()
    }

    /// `‖x − P(x)‖ / ‖x‖` for the orthogonal projection `P` onto the span (0 for `x = 0`).
    pub fn projection_residual(&self, x: &CMat) -> f64 {
        let n = x.norm();
        if n == 0.0 {
            return 0.0;
        }
        let p = self.element(&self.coords(x));
        (x - p).norm() / n
    }

    pub fn contains(&self, x: &CMat, tol: f64) -> bool {
        self.projection_residual(x) <= tol
    }

    pub fn normalized_trace(&self, x: &CMat) -> C64 {
        linalg::trace(x) / real(self.carrier_dim as f64)
    }

    pub fn same_basis(&self, other: &OperatorAlgebraBasis) -> bool {
        self.carrier_dim == other.carrier_dim
            && self.basis.len() == other.basis.len()
            && self
                .basis
                .iter()
                .zip(&other.basis)
                .all(|(a, b)| (a - b).norm() <= 1e-12)
    }

    /// Residuals are `‖x − P(x)‖ / max(1, ‖x‖)`, so vanishing products do not
    /// amplify rounding noise.
    pub fn closure_report(&self) -> ClosureReport {
        let defect = |x: &CMat| (x - self.element(&self.coords(x))).norm() / x.norm().max(1.0);
        let mut adjoint: f64 = 0.0;
        let mut product: f64 = 0.0;
        for a in &self.basis {
            adjoint = adjoint.max(defect(&a.adjoint()));
            for b in &self.basis {
                product = product.max(defect(&(a * b)));
            }
        }
        let unit = defect(&linalg::identity(self.carrier_dim));
        ClosureReport {
            adjoint,
            product,
            unit,
        }
    }

    /// The center `N ∩ N′`.
    pub fn center(&self) -> Result<OperatorAlgebraBasis> {
        let k = self.dim();
        let d2 = self.carrier_dim * self.carrier_dim;
        let mut system = CMat::zeros(k * d2, k);
        for (j, bj) in self.basis.iter().enumerate() {
            for (i, bi) in self.basis.iter().enumerate() {
                let comm = bj * bi - bi * bj;
                system
                    .view_mut((i * d2, j), (d2, 1))
                    .copy_from_slice(comm.as_slice());
            }
        }
        let kernel = linalg::null_space(&system, RANK_TOL)?;
        let mats: Vec<CMat> = (0..kernel.ncols())
            .map(|col| {
                let coeffs: Vec<C64> = kernel.column(col).iter().copied().collect();
                self.element(&coeffs)
            })
            .collect();
        OperatorAlgebraBasis::from_spanning(self.carrier_dim, &mats)
    }
}

/// Basis of `{x : xs = sx, xs* = s*x for all s ∈ S}`.
pub fn commutant(s: &[CMat], carrier_dim: usize) -> Result<OperatorAlgebraBasis> {
    let d = carrier_dim;
    let mut gens = Vec::with_capacity(2 * s.len());
    for m in s {
        if m.shape() != (d, d) {
            return Err(Error::Validation(format!(
                "generator of shape {:?} on a carrier of dimension {d}",
                m.shape()
            )));
        }
        gens.push(m.clone());
        let adj = m.adjoint();
        if (&adj - m).norm() > 1e-14 * m.norm() {
            gens.push(adj);
        }
    }
    if let Some(basis) = structured_commutant(&gens, d)? {
        return Ok(basis);
    }
    linear_commutant(&gens, d)
}

fn linear_commutant(gens: &[CMat], d: usize) -> Result<OperatorAlgebraBasis> {
    let pairs: Vec<(CMat, CMat)> = gens.iter().map(|m| (m.clone(), m.clone())).collect();
    let kernel = sylvester_kernel(&pairs, d, d)?;
    let basis = (0..kernel.ncols())
        .map(|k| unvectorize(kernel.column(k).as_slice(), d, d))
        .collect();
    Ok(OperatorAlgebraBasis::from_orthonormal(d, basis))
}

/// Commutant of a `*`-closed generating set assembled from its block structure.
///
/// Anything commuting with the set preserves the eigenspaces `V_λ` of a
/// generic Hermitian combination `h`, and for a generic combination `x` each
/// nonzero block `Q_μ* x Q_λ` must be a multiple of a unitary `W` with
/// `X_μ = W X_λ W*`. The commutant is then `⊕_components M_r`. Every
/// generator block is checked against that shape; `None` means the shape did
/// not hold and the caller must solve the linear system instead.
fn structured_commutant(gens: &[CMat], d: usize) -> Result<Option<OperatorAlgebraBasis>> {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::Distribution;

    let scale = gens.iter().fold(0.0_f64, |m, g| m.max(linalg::op_norm(g)));
    if gens.is_empty() || scale == 0.0 {
        return Ok(None);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0xc0de);
    let mut h = CMat::zeros(d, d);
    let mut x = CMat::zeros(d, d);
    for g in gens {
        let a: f64 = StandardNormal.sample(&mut rng);
        let b: f64 = StandardNormal.sample(&mut rng);
        let herm = (g + g.adjoint()) * real(0.5);
        h += herm * real(a / scale);
        x += g * c(a / scale, b / scale);
    }
    let (vals, vecs) = linalg::hermitian_eigen(&h)?;
    let hn = vals.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    for (i, &v) in vals.iter().enumerate() {
        match clusters.last_mut() {
            Some(cl) if (v - vals[*cl.last().unwrap()]).abs() <= RANK_TOL * 10.0 * hn => cl.push(i),
            _ => clusters.push(vec![i]),
        }
    }
    let q: Vec<CMat> = clusters
        .iter()
        .map(|cl| {
            let mut m = CMat::zeros(d, cl.len());
            for (k, &i) in cl.iter().enumerate() {
                m.column_mut(k).copy_from(&vecs.column(i));
            }
            m
        })
        .collect();
    let nc = q.len();
    let xn = linalg::op_norm(&x).max(f64::MIN_POSITIVE);
    // Spanning forest of the clusters linked by x, with W_μ relative to the root.
    let mut comp = vec![usize::MAX; nc];
    let mut w: Vec<CMat> = vec![CMat::zeros(0, 0); nc];
    let mut roots = Vec::new();
    for root in 0..nc {
        if comp[root] != usize::MAX {
            continue;
        }
        let id = roots.len();
        roots.push(root);
        comp[root] = id;
        w[root] = linalg::identity(q[root].ncols());
        let mut queue = std::collections::VecDeque::from([root]);
        while let Some(lam) = queue.pop_front() {
            let xq = &x * &q[lam];
            for mu in 0..nc {
                if comp[mu] != usize::MAX {
                    continue;
                }
                let b = q[mu].adjoint() * &xq;
                let bn = b.norm();
                if bn <= 1e-6 * xn {
                    continue;
                }
                if q[mu].ncols() != q[lam].ncols() {
                    return Ok(None);
                }
                let r = q[lam].ncols() as f64;
                let c2 = (b.adjoint() * &b).trace().re / r;
                if ((b.adjoint() * &b) - linalg::identity(b.ncols()) * real(c2)).norm() > 1e-8 * bn * bn {
                    return Ok(None);
                }
                w[mu] = (&b * &w[lam]) * real(1.0 / c2.sqrt());
                comp[mu] = id;
                queue.push_back(mu);
            }
        }
    }
    for g in gens {
        let gn = linalg::op_norm(g).max(f64::MIN_POSITIVE);
        let tol = 1e-8 * gn;
        for lam in 0..nc {
            let gq = g * &q[lam];
            for mu in 0..nc {
                let b = q[mu].adjoint() * &gq;
                if comp[mu] != comp[lam] {
                    if b.norm() > tol {
                        return Ok(None);
                    }
                    continue;
                }
                let y = w[mu].adjoint() * b * &w[lam];
                let r = y.nrows();
                let mean = y.trace() / real(r as f64);
                if (y - linalg::identity(r) * mean).norm() > tol {
                    return Ok(None);
                }
            }
        }
    }
    let mut basis = Vec::new();
    for (id, &root) in roots.iter().enumerate() {
        let members: Vec<usize> = (0..nc).filter(|&c| comp[c] == id).collect();
        let norm = real(1.0 / (members.len() as f64).sqrt());
        let frames: Vec<CMat> = members.iter().map(|&c| &q[c] * &w[c]).collect();
        let r = q[root].ncols();
        for a in 0..r {
            for b in 0..r {
                let mut m = CMat::zeros(d, d);
                for f in &frames {
                    m += f.column(a) * f.column(b).adjoint();
                }
                basis.push(m * norm);
            }
        }
    }
    Ok(Some(OperatorAlgebraBasis::from_orthonormal(d, basis)))
}

/// The unital `*`-algebra generated by `s`, as the bicommutant.
pub fn generated_algebra(s: &[CMat], carrier_dim: usize) -> Result<OperatorAlgebraBasis> {
    let first = commutant(s, carrier_dim)?;
    commutant(first.basis(), carrier_dim)
}

/// Smallest central projection of `n` dominating `p`.
pub fn central_support(p: &CMat, n: &OperatorAlgebraBasis) -> Result<CMat> {
    let residual = n.projection_residual(p);
    if residual > 1e-8 {
        return Err(Error::Domain {
            what: "projection".into(),
            residual,
        });
    }
    let d = n.carrier_dim();
    let (_, blocks) = linalg::multiply_all(p, n.basis());
    let stacked = hcat(&blocks, d);
    if stacked.norm() <= 1e-14 {
        return Ok(CMat::zeros(d, d));
    }
    linalg::range_projection(&stacked, RANK_TOL)
}

/// Whether two operator spans coincide within `tol`.
pub fn span_equal(a: &OperatorAlgebraBasis, b: &OperatorAlgebraBasis, tol: f64) -> bool {
    a.carrier_dim() == b.carrier_dim()
        && a.dim() == b.dim()
        && a.basis().iter().all(|x| b.contains(x, tol))
        && b.basis().iter().all(|x| a.contains(x, tol))
}

/// `⊕_k Mat(n_k)` acting block-diagonally on `ℂ^d`, `d = Σ n_k`.
pub struct MultiMatrixAlgebra {
    blocks: Vec<usize>,
    offsets: Vec<usize>,
    ambient_dim: usize,
    units: Vec<(usize, usize, usize)>,
    ops: Arc<OperatorAlgebraBasis>,
}

impl fmt::Debug for MultiMatrixAlgebra {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "MultiMatrixAlgebra{:?}", self.blocks)
    }
}

pub fn make_algebra(blocks: &[usize]) -> Result<Arc<MultiMatrixAlgebra>> {
    MultiMatrixAlgebra::new(blocks).map(Arc::new)
}

impl MultiMatrixAlgebra {
    pub fn new(blocks: &[usize]) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::Validation("algebra needs at least one block".into()));
        }
        if blocks.contains(&0) {
            return Err(Error::Validation("block sizes must be positive".into()));
        }
        let mut offsets = Vec::with_capacity(blocks.len());
        let mut off = 0;
        for &n in blocks {
            offsets.push(off);
            off += n;
        }
        let d = off;
        let mut units = Vec::new();
        let mut basis = Vec::new();
        for (k, &n) in blocks.iter().enumerate() {
            for i in 0..n {
                for j in 0..n {
                    units.push((k, i, j));
                    let mut e = CMat::zeros(d, d);
                    e[(offsets[k] + i, offsets[k] + j)] = real(1.0);
                    basis.push(e);
                }
            }
        }
        Ok(MultiMatrixAlgebra {
            blocks: blocks.to_vec(),
            offsets,
            ambient_dim: d,
            units,
            ops: Arc::new(OperatorAlgebraBasis::from_orthonormal(d, basis)),
        })
    }

    pub fn blocks(&self) -> &[usize] {
        &self.blocks
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    pub fn lin_dim(&self) -> usize {
        self.units.len()
    }

    /// `(block, row, column)` of each basis element.
    pub fn units(&self) -> &[(usize, usize, usize)] {
        &self.units
    }

    pub fn basis(&self) -> &[CMat] {
        self.ops.basis()
    }

    pub fn operator_basis(&self) -> &Arc<OperatorAlgebraBasis> {
        &self.ops
    }

    pub fn is_commutative(&self) -> bool {
        self.blocks.iter().all(|&n| n == 1)
    }

    pub fn is_factor(&self) -> bool {
        self.blocks.len() == 1
    }

    /// Largest off-block entry of `x`.
    pub fn off_block_residual(&self, x: &CMat) -> f64 {
        let mut block_of = vec![0; self.ambient_dim];
        for (k, (&off, &n)) in self.offsets.iter().zip(&self.blocks).enumerate() {
            for b in block_of.iter_mut().skip(off).take(n) {
                *b = k;
            }
        }
        let mut worst: f64 = 0.0;
        for i in 0..self.ambient_dim {
            for j in 0..self.ambient_dim {
                if block_of[i] != block_of[j] {
                    worst = worst.max(x[(i, j)].norm());
                }
            }
        }
        worst
    }
}

/// An element of a [`MultiMatrixAlgebra`], stored as its ambient block-diagonal matrix.
#[derive(Clone, Debug)]
pub struct AlgebraElement {
    algebra: Arc<MultiMatrixAlgebra>,
    data: CMat,
}

impl AlgebraElement {
    /// Accepts a matrix whose off-block part is below `1e-9·max(1,‖x‖)` and zeros it.
    pub fn new(algebra: &Arc<MultiMatrixAlgebra>, data: CMat) -> Result<Self> {
        let d = algebra.ambient_dim();
        if data.shape() != (d, d) {
            return Err(Error::Validation(format!(
                "element of shape {:?} for ambient dimension {d}",
                data.shape()
            )));
        }
        let residual = algebra.off_block_residual(&data);
        if residual > 1e-9 * data.norm().max(1.0) {
            return Err(Error::Domain {
                what: "matrix".into(),
                residual,
            });
        }
        Ok(Self::from_coords(algebra, &algebra.ops.coords(&data)))
    }

    pub fn from_coords(algebra: &Arc<MultiMatrixAlgebra>, coords: &[C64]) -> Self {
        AlgebraElement {
            algebra: algebra.clone(),
            data: algebra.ops.element(coords),
        }
    }

    pub fn identity(algebra: &Arc<MultiMatrixAlgebra>) -> Self {
        AlgebraElement {
            algebra: algebra.clone(),
            data: linalg::identity(algebra.ambient_dim()),
        }
    }

    pub fn basis_element(algebra: &Arc<MultiMatrixAlgebra>, index: usize) -> Self {
        AlgebraElement {
            algebra: algebra.clone(),
            data: algebra.basis()[index].clone(),
        }
    }

    /// Complex Gaussian entries in every block.
    pub fn random<R: Rng + ?Sized>(algebra: &Arc<MultiMatrixAlgebra>, rng: &mut R) -> Self {
        let coords: Vec<C64> = (0..algebra.lin_dim())
            .map(|_| c(rng.sample(StandardNormal), rng.sample(StandardNormal)))
            .collect();
        Self::from_coords(algebra, &coords)
    }

    pub fn algebra(&self) -> &Arc<MultiMatrixAlgebra> {
        &self.algebra
    }

    pub fn data(&self) -> &CMat {
        &self.data
    }

    pub fn into_data(self) -> CMat {
        self.data
    }

    pub fn coords(&self) -> Vec<C64> {
        self.algebra.ops.coords(&self.data)
    }

    pub fn adjoint(&self) -> Self {
        AlgebraElement {
            algebra: self.algebra.clone(),
            data: self.data.adjoint(),
        }
    }

    pub fn scale(&self, s: C64) -> Self {
        AlgebraElement {
            algebra: self.algebra.clone(),
            data: &self.data * s,
        }
    }

    pub fn normalized_trace(&self) -> C64 {
        normalized_trace(self)
    }

    /// Frobenius distance to another element.
    pub fn distance(&self, other: &AlgebraElement) -> f64 {
        (&self.data - &other.data).norm()
    }
}

/// `Tr(a)/d`: the faithful tracial state used everywhere.
pub fn normalized_trace(a: &AlgebraElement) -> C64 {
    linalg::trace(&a.data) / real(a.algebra.ambient_dim() as f64)
}

impl<'a> Mul<&'a AlgebraElement> for &'a AlgebraElement {
    type Output = AlgebraElement;
    fn mul(self, rhs: &'a AlgebraElement) -> AlgebraElement {
        debug_assert_eq!(self.algebra.blocks(), rhs.algebra.blocks());
        AlgebraElement {
            algebra: self.algebra.clone(),
            data: &self.data * &rhs.data,
        }
    }
}

impl<'a> Add<&'a AlgebraElement> for &'a AlgebraElement {
    type Output = AlgebraElement;
    fn add(self, rhs: &'a AlgebraElement) -> AlgebraElement {
        debug_assert_eq!(self.algebra.blocks(), rhs.algebra.blocks());
        AlgebraElement {
            algebra: self.algebra.clone(),
            data: &self.data + &rhs.data,
        }
    }
}

impl<'a> Sub<&'a AlgebraElement> for &'a AlgebraElement {
    type Output = AlgebraElement;
    fn sub(self, rhs: &'a AlgebraElement) -> AlgebraElement {
        debug_assert_eq!(self.algebra.blocks(), rhs.algebra.blocks());
        AlgebraElement {
            algebra: self.algebra.clone(),
            data: &self.data - &rhs.data,
        }
    }
}

/// Multiplication operators on `L²(B)` in the orthonormal basis `√d·b_i`.
pub(crate) fn multiplication_matrices(b: &OperatorAlgebraBasis) -> (Vec<CMat>, Vec<CMat>) {
    let k = b.dim();
    let mut left = Vec::with_capacity(k);
    let mut right = Vec::with_capacity(k);
    for a in b.basis() {
        let mut l = CMat::zeros(k, k);
        let mut r = CMat::zeros(k, k);
        for (j, bj) in b.basis().iter().enumerate() {
            let lc = b.coords(&(a * bj));
            let rc = b.coords(&(bj * a));
            for i in 0..k {
                l[(i, j)] = lc[i];
                r[(i, j)] = rc[i];
            }
        }
        left.push(l);
        right.push(r);
    }
    (left, right)
}

/// `L²(B)` for the normalized trace: left and right multiplication.
pub fn standard_form(b: &Arc<OperatorAlgebraBasis>) -> WStarBimodule {
    let (left, right) = multiplication_matrices(b);
    WStarBimodule::from_parts(
        b.dim(),
        Some(Action::new(b.clone(), left, false)),
        Some(Action::new(b.clone(), right, true)),
        "L2",
    )
}

/// Coordinates of `a ∈ B` as a vector of `L²(B)`.
pub fn to_l2(b: &OperatorAlgebraBasis, a: &CMat) -> crate::CVec {
    let s = real(1.0 / (b.carrier_dim() as f64).sqrt());
    crate::CVec::from_iterator(b.dim(), b.coords(a).into_iter().map(|x| x * s))
}

/// Inverse of [`to_l2`].
pub fn from_l2(b: &OperatorAlgebraBasis, v: &crate::CVec) -> CMat {
    let s = real((b.carrier_dim() as f64).sqrt());
    let coords: Vec<C64> = v.iter().map(|&x| x * s).collect();
    b.element(&coords)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn algebra_dimensions() {
        let m2 = make_algebra(&[2]).unwrap();
        assert_eq!((m2.lin_dim(), m2.ambient_dim()), (4, 2));
        let c2 = make_algebra(&[1, 1]).unwrap();
        assert_eq!(c2.lin_dim(), 2);
        let cm = make_algebra(&[1, 2]).unwrap();
        assert_eq!((cm.lin_dim(), cm.ambient_dim()), (5, 3));
        assert!(make_algebra(&[]).is_err());
        assert!(make_algebra(&[2, 0]).is_err());
    }

    #[test]
    fn traces() {
        let m2 = make_algebra(&[2]).unwrap();
        assert!((normalized_trace(&AlgebraElement::identity(&m2)) - real(1.0)).norm() < 1e-15);
        let e11 = AlgebraElement::basis_element(&m2, 0);
        assert!((normalized_trace(&e11) - real(0.5)).norm() < 1e-15);
        let cm = make_algebra(&[1, 2]).unwrap();
        let e1 = AlgebraElement::basis_element(&cm, 0);
        assert!((normalized_trace(&e1) - real(1.0 / 3.0)).norm() < 1e-15);
    }

    #[test]
    fn off_block_entries_rejected() {
        let cm = make_algebra(&[1, 2]).unwrap();
        let mut x = CMat::zeros(3, 3);
        x[(0, 1)] = real(1.0);
        assert!(AlgebraElement::new(&cm, x).is_err());
    }

    #[test]
    fn commutant_examples() {
        let m2 = make_algebra(&[2]).unwrap();
        assert_eq!(commutant(m2.basis(), 2).unwrap().dim(), 1);
        let l2 = standard_form(m2.operator_basis());
        let left = l2.left().unwrap().images().to_vec();
        let comm = commutant(&left, 4).unwrap();
        assert_eq!(comm.dim(), 4);
        let right = OperatorAlgebraBasis::from_spanning(4, l2.right().unwrap().images()).unwrap();
        assert!(span_equal(&comm, &right, 1e-9));
        let mut d = CMat::zeros(2, 2);
        d[(0, 0)] = real(1.0);
        d[(1, 1)] = real(2.0);
        assert_eq!(commutant(&[d], 2).unwrap().dim(), 2);
        assert_eq!(commutant(&[], 3).unwrap().dim(), 9);
    }

    #[test]
    fn structured_commutant_matches_linear_solve() {
        let a = make_algebra(&[1, 2]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let g = CMat::from_fn(6, 6, |_, _| {
            let re: f64 = rand_distr::Distribution::sample(&StandardNormal, &mut rng);
            let im: f64 = rand_distr::Distribution::sample(&StandardNormal, &mut rng);
            c(re, im)
        });
        let (u, _, _) = linalg::thin_svd(&g).unwrap();
        let gens: Vec<CMat> = a
            .basis()
            .iter()
            .map(|x| &u * linalg::kron(x, &linalg::identity(2)) * u.adjoint())
            .collect();
        let fast = structured_commutant(&gens, 6).unwrap().expect("block structure");
        let slow = linear_commutant(&gens, 6).unwrap();
        assert_eq!(fast.dim(), 8);
        assert!(span_equal(&fast, &slow, 1e-9));
        assert!(fast.closure_report().max() < 1e-9);

        let s = CMat::from_fn(4, 4, |_, _| {
            let re: f64 = rand_distr::Distribution::sample(&StandardNormal, &mut rng);
            let im: f64 = rand_distr::Distribution::sample(&StandardNormal, &mut rng);
            c(re, im)
        });
        let comm = commutant(&[s.clone()], 4).unwrap();
        assert_eq!(comm.dim(), 1);
        assert!(span_equal(&comm, &linear_commutant(&[s.clone(), s.adjoint()], 4).unwrap(), 1e-9));
    }

    #[test]
    fn central_support_examples() {
        let m2 = make_algebra(&[2]).unwrap();
        let p = m2.basis()[0].clone();
        let cp = central_support(&p, m2.operator_basis()).unwrap();
        assert!((cp - linalg::identity(2)).norm() < 1e-10);
        let c2 = make_algebra(&[1, 1]).unwrap();
        let e1 = c2.basis()[0].clone();
        let cp = central_support(&e1, c2.operator_basis()).unwrap();
        assert!((&cp - &e1).norm() < 1e-10);
        let zero = CMat::zeros(2, 2);
        assert!(central_support(&zero, c2.operator_basis()).unwrap().norm() < 1e-14);
        let mut off = CMat::zeros(2, 2);
        off[(0, 1)] = real(1.0);
        assert!(central_support(&off, c2.operator_basis()).is_err());
    }

    #[test]
    fn span_equal_examples() {
        let m2 = make_algebra(&[2]).unwrap();
        let diag = make_algebra(&[1, 1]).unwrap();
        assert!(span_equal(m2.operator_basis(), m2.operator_basis(), 1e-9));
        assert!(!span_equal(m2.operator_basis(), diag.operator_basis(), 1e-9));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mixed: Vec<CMat> = (0..4)
            .map(|_| AlgebraElement::random(&m2, &mut rng).into_data())
            .collect();
        let other = OperatorAlgebraBasis::from_spanning(2, &mixed).unwrap();
        assert!(span_equal(&other, m2.operator_basis(), 1e-9));
    }

    #[test]
    fn standard_form_sizes() {
        for (blocks, dim) in [(vec![2], 4), (vec![1, 1], 2), (vec![1, 2], 5)] {
            let a = make_algebra(&blocks).unwrap();
            let l2 = standard_form(a.operator_basis());
            assert_eq!(l2.dim(), dim);
            assert!(l2.commutation_residual() < 1e-12);
            assert!(l2.homomorphism_residual() < 1e-12);
        }
        let c2 = make_algebra(&[1, 1]).unwrap();
        let l2 = standard_form(c2.operator_basis());
        for (l, r) in l2.left().unwrap().images().iter().zip(l2.right().unwrap().images()) {
            assert!((l - r).norm() < 1e-14);
        }
    }

    #[test]
    fn l2_round_trip() {
        let cm = make_algebra(&[1, 2]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = AlgebraElement::random(&cm, &mut rng);
        let v = to_l2(cm.operator_basis(), a.data());
        assert!((from_l2(cm.operator_basis(), &v) - a.data()).norm() < 1e-12);
        // ‖â‖² = τ(a*a)
        let tau = normalized_trace(&(&a.adjoint() * &a)).re;
        assert!((v.norm_squared() - tau).abs() < 1e-12);
    }
}
