//! W*-bimodules as concrete Hilbert spaces with commuting actions.
//!
//! Every space in the constructions is built from generators and a
//! semi-inner product ([`quotient_completion`]); operators on generators
//! are pushed down to the quotient with [`descend_operator`] /
//! [`descend_between`], which refuse operators that do not preserve the
//! null space.

use std::fmt;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::algebra::{MultiMatrixAlgebra, OperatorAlgebraBasis};
use crate::cp_map::UcpMap;
use crate::error::{Error, Result};
use crate::linalg::{self, c, hermitian_eigen, identity, kron, op_norm, real, CMat, CVec, C64, RANK_TOL};

/// Tolerance on the relative residual of well-definedness checks.
pub const DESCENT_TOL: f64 = 1e-8;

/// A normal representation of an algebra basis on a carrier.
///
/// `images[i]` represents the basis element `b_i`. With `anti` the images
/// are anti-multiplicative in the product of the basis algebra, i.e. they
/// form a representation of its opposite algebra.
#[derive(Clone)]
pub struct Action {
    algebra: Arc<OperatorAlgebraBasis>,
    images: Vec<CMat>,
    anti: bool,
}

impl fmt::Debug for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Action")
            .field("algebra_dim", &self.algebra.dim())
            .field("anti", &self.anti)
            .finish()
    }
}

impl Action {
    pub fn new(algebra: Arc<OperatorAlgebraBasis>, images: Vec<CMat>, anti: bool) -> Self {
        debug_assert_eq!(algebra.dim(), images.len());
        Action {
            algebra,
            images,
            anti,
        }
    }

    pub fn algebra(&self) -> &Arc<OperatorAlgebraBasis> {
        &self.algebra
    }

    pub fn images(&self) -> &[CMat] {
        &self.images
    }

    pub fn is_anti(&self) -> bool {
        self.anti
    }

    pub fn carrier_dim(&self) -> usize {
        self.images.first().map_or(0, |m| m.nrows())
    }

    pub fn image_of_coords(&self, coords: &[C64]) -> CMat {
        let d = self.carrier_dim();
        let mut out = CMat::zeros(d, d);
        for (m, &x) in self.images.iter().zip(coords) {
            out += m * x;
        }
        out
    }

    /// Image of an algebra element given as a matrix on the algebra's own carrier.
    pub fn image(&self, x: &CMat) -> Result<CMat> {
        let residual = self.algebra.projection_residual(x);
        if residual > DESCENT_TOL {
            return Err(Error::Domain {
                what: "operator".into(),
                residual,
            });
        }
        Ok(self.image_of_coords(&self.algebra.coords(x)))
    }

    /// Least-squares preimage of `op`: algebra coordinates and the relative residual.
    pub fn preimage(&self, op: &CMat) -> Result<(Vec<C64>, f64)> {
        let k = self.images.len();
        let mut gram = CMat::zeros(k, k);
        let mut rhs = CVec::zeros(k);
        for i in 0..k {
            for j in 0..k {
                gram[(i, j)] = linalg::hs_inner(&self.images[i], &self.images[j]);
            }
            rhs[i] = linalg::hs_inner(&self.images[i], op);
        }
        let coeffs: Vec<C64> = (linalg::pinv(&gram, RANK_TOL)? * rhs).iter().copied().collect();
        let residual = (self.image_of_coords(&coeffs) - op).norm() / op.norm().max(1.0);
        Ok((coeffs, residual))
    }

    pub fn same_algebra(&self, other: &Action) -> bool {
        Arc::ptr_eq(&self.algebra, &other.algebra) || self.algebra.same_basis(&other.algebra)
    }

    /// Worst violation of multiplicativity, `*`-preservation and unitality.
    pub fn homomorphism_residual(&self) -> f64 {
        let alg = &self.algebra;
        let mut worst: f64 = 0.0;
        for (i, a) in alg.basis().iter().enumerate() {
            let star = self.image_of_coords(&alg.coords(&a.adjoint()));
            worst = worst.max(linalg::rel_diff(&star, &self.images[i].adjoint()));
            for (j, b) in alg.basis().iter().enumerate() {
                let prod = self.image_of_coords(&alg.coords(&(a * b)));
                let expected = if self.anti {
                    &self.images[j] * &self.images[i]
                } else {
                    &self.images[i] * &self.images[j]
                };
                worst = worst.max(linalg::rel_diff(&prod, &expected));
            }
        }
        let one = self.image_of_coords(&alg.coords(&identity(alg.carrier_dim())));
        worst.max(linalg::rel_diff(&one, &identity(self.carrier_dim())))
    }

    /// Images `u·A·u*`, for an isometry `u` onto the new carrier.
    pub fn conjugated(&self, u: &CMat) -> Action {
        Action {
            algebra: self.algebra.clone(),
            images: self.images.iter().map(|m| u * m * u.adjoint()).collect(),
            anti: self.anti,
        }
    }

    /// The action on the conjugate space: transposed images, opposite multiplicativity.
    pub fn transposed(&self) -> Action {
        Action {
            algebra: self.algebra.clone(),
            images: self.images.iter().map(|m| m.transpose()).collect(),
            anti: !self.anti,
        }
    }

    pub fn map_images<F: Fn(&CMat) -> CMat>(&self, f: F) -> Action {
        Action {
            algebra: self.algebra.clone(),
            images: self.images.iter().map(f).collect(),
            anti: self.anti,
        }
    }

    fn try_map_images<F: Fn(&CMat) -> Result<CMat>>(&self, f: F) -> Result<Action> {
        Ok(Action {
            algebra: self.algebra.clone(),
            images: self.images.iter().map(f).collect::<Result<_>>()?,
            anti: self.anti,
        })
    }
}

/// A finite-dimensional Hilbert space with commuting normal left and right actions.
#[derive(Clone)]
pub struct WStarBimodule {
    dim: usize,
    left: Option<Action>,
    right: Option<Action>,
    label: String,
}

impl fmt::Debug for WStarBimodule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("WStarBimodule")
            .field("label", &self.label)
            .field("dim", &self.dim)
            .field("left", &self.left)
            .field("right", &self.right)
            .finish()
    }
}

impl WStarBimodule {
    /// Validates shapes and that the two actions commute.
    pub fn new(
        dim: usize,
        left: Option<Action>,
        right: Option<Action>,
        label: impl Into<String>,
    ) -> Result<Self> {
        for act in left.iter().chain(right.iter()) {
            if act.images.iter().any(|m| m.shape() != (dim, dim)) {
                return Err(Error::Validation(format!(
                    "action image does not act on a carrier of dimension {dim}"
                )));
            }
        }
        let module = Self::from_parts(dim, left, right, label);
        let residual = module.commutation_residual();
        if residual > DESCENT_TOL {
            return Err(Error::Incompatible(format!(
                "left and right actions do not commute (residual {residual:.3e})"
            )));
        }
        Ok(module)
    }

    pub(crate) fn from_parts(
        dim: usize,
        left: Option<Action>,
        right: Option<Action>,
        label: impl Into<String>,
    ) -> Self {
        WStarBimodule {
            dim,
            left,
            right,
            label: label.into(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn left(&self) -> Option<&Action> {
        self.left.as_ref()
    }

    pub fn right(&self) -> Option<&Action> {
        self.right.as_ref()
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    fn require_left(&self) -> Result<&Action> {
        self.left
            .as_ref()
            .ok_or_else(|| Error::Incompatible(format!("{} has no left action", self.label)))
    }

    fn require_right(&self) -> Result<&Action> {
        self.right
            .as_ref()
            .ok_or_else(|| Error::Incompatible(format!("{} has no right action", self.label)))
    }

    pub fn left_image(&self, x: &CMat) -> Result<CMat> {
        self.require_left()?.image(x)
    }

    pub fn right_image(&self, x: &CMat) -> Result<CMat> {
        self.require_right()?.image(x)
    }

    pub fn commutation_residual(&self) -> f64 {
        let (Some(l), Some(r)) = (&self.left, &self.right) else {
            return 0.0;
        };
        let mut worst: f64 = 0.0;
        for a in &l.images {
            for b in &r.images {
                let scale = (a.norm() * b.norm()).max(1.0);
                worst = worst.max((a * b - b * a).norm() / scale);
            }
        }
        worst
    }

    pub fn homomorphism_residual(&self) -> f64 {
        let l = self.left.as_ref().map_or(0.0, |a| a.homomorphism_residual());
        let r = self.right.as_ref().map_or(0.0, |a| a.homomorphism_residual());
        l.max(r)
    }

    /// Replaces the right action by the full commutant of the left action,
    /// acting as its opposite algebra.
    pub fn with_commutant_right(&self) -> Result<Self> {
        let left = self.require_left()?;
        let comm = Arc::new(crate::algebra::commutant(&left.images, self.dim)?);
        let images = comm.basis().to_vec();
        Ok(WStarBimodule {
            dim: self.dim,
            left: self.left.clone(),
            right: Some(Action::new(comm, images, false)),
            label: format!("{}|comm", self.label),
        })
    }

    pub fn with_right(&self, right: Option<Action>) -> Result<Self> {
        WStarBimodule::new(self.dim, self.left.clone(), right, self.label.clone())
    }

    /// Exchanges the roles of the two actions.
    pub fn flipped(&self) -> Self {
        WStarBimodule {
            dim: self.dim,
            left: self.right.clone(),
            right: self.left.clone(),
            label: format!("{}^flip", self.label),
        }
    }

    /// The same bimodule transported along a unitary `u`.
    pub fn conjugated(&self, u: &CMat, label: impl Into<String>) -> Self {
        WStarBimodule {
            dim: u.nrows(),
            left: self.left.as_ref().map(|a| a.conjugated(u)),
            right: self.right.as_ref().map(|a| a.conjugated(u)),
            label: label.into(),
        }
    }

    /// Orthogonal direct sum; both summands must carry the same algebras.
    pub fn direct_sum(&self, other: &WStarBimodule) -> Result<Self> {
        fn sum(a: &Option<Action>, b: &Option<Action>) -> Result<Option<Action>> {
            match (a, b) {
                (None, None) => Ok(None),
                (Some(x), Some(y)) if x.same_algebra(y) && x.anti == y.anti => Ok(Some(Action {
                    algebra: x.algebra.clone(),
                    images: x
                        .images
                        .iter()
                        .zip(&y.images)
                        .map(|(p, q)| linalg::block_diag(p, q))
                        .collect(),
                    anti: x.anti,
                })),
                _ => Err(Error::Incompatible("summands carry different actions".into())),
            }
        }
        WStarBimodule::new(
            self.dim + other.dim,
            sum(&self.left, &other.left)?,
            sum(&self.right, &other.right)?,
            format!("{}+{}", self.label, other.label),
        )
    }
}

/// The conjugate bimodule `H*`: sides exchanged, `y·ξ*·x = (x*·ξ·y*)*`.
pub fn dual_module(h: &WStarBimodule) -> WStarBimodule {
    WStarBimodule {
        dim: h.dim,
        left: h.right.as_ref().map(Action::transposed),
        right: h.left.as_ref().map(Action::transposed),
        label: format!("{}*", h.label),
    }
}

/// Orthonormal coordinates of a quotient of generators by the null vectors of a Gram matrix.
#[derive(Clone, Debug)]
pub struct QuotientMap {
    coords: CMat,
    lift: CMat,
}

impl QuotientMap {
    pub fn rank(&self) -> usize {
        self.coords.nrows()
    }

    pub fn generators(&self) -> usize {
        self.coords.ncols()
    }

    /// `rank × generators`: generator `g` maps to column `g`.
    pub fn coords(&self) -> &CMat {
        &self.coords
    }

    /// `generators × rank` right inverse of `coords`.
    pub fn lift(&self) -> &CMat {
        &self.lift
    }

    pub fn gram(&self) -> CMat {
        self.coords.adjoint() * &self.coords
    }

    pub fn identity(n: usize) -> Self {
        QuotientMap {
            coords: identity(n),
            lift: identity(n),
        }
    }
}

/// Quotient of formal generators by the null space of `gram`.
pub fn quotient_completion(gram: &CMat) -> Result<QuotientMap> {
    let n = gram.nrows();
    if gram.ncols() != n {
        return Err(Error::Validation("Gram matrix must be square".into()));
    }
    let (vals, vecs) = hermitian_eigen(gram)?;
    let scale = vals.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if let Some(&lo) = vals.first() {
        if lo < -RANK_TOL * scale {
            return Err(Error::NotPsd {
                eigenvalue: lo,
                scale,
            });
        }
    }
    let keep: Vec<usize> = (0..n).filter(|&i| vals[i] > RANK_TOL * scale).collect();
    let r = keep.len();
    let mut coords = CMat::zeros(r, n);
    let mut lift = CMat::zeros(n, r);
    for (row, &i) in keep.iter().enumerate() {
        let s = vals[i].sqrt();
        for g in 0..n {
            coords[(row, g)] = vecs[(g, i)].conj() * s;
            lift[(g, row)] = vecs[(g, i)] / s;
        }
    }
    Ok(QuotientMap { coords, lift })
}

/// The operator induced on the quotient by `a` acting on generators.
pub fn descend_operator(a: &CMat, q: &QuotientMap) -> Result<CMat> {
    descend_between(a, q, q)
}

/// The map `src → dst` induced by `a` from `src`'s generators to `dst`'s generators.
pub fn descend_between(a: &CMat, src: &QuotientMap, dst: &QuotientMap) -> Result<CMat> {
    if a.shape() != (dst.generators(), src.generators()) {
        return Err(Error::Validation(format!(
            "operator of shape {:?} between {} and {} generators",
            a.shape(),
            src.generators(),
            dst.generators()
        )));
    }
    let pushed = &dst.coords * a;
    let induced = &pushed * &src.lift;
    let defect = &pushed - &induced * &src.coords;
    let scale = dst.coords.norm() * a.norm();
    let residual = if scale == 0.0 { 0.0 } else { defect.norm() / scale };
    if residual > DESCENT_TOL {
        return Err(Error::Descent(residual));
    }
    Ok(induced)
}

/// A quotient of `ℂ^first ⊗ ℂ^second` realized as a bimodule, remembering the
/// coordinates of its elementary tensors.
#[derive(Clone, Debug)]
pub struct TensorSpace {
    module: WStarBimodule,
    quotient: QuotientMap,
    first_dim: usize,
    second_dim: usize,
}

impl TensorSpace {
    pub fn module(&self) -> &WStarBimodule {
        &self.module
    }

    pub fn into_module(self) -> WStarBimodule {
        self.module
    }

    pub fn quotient(&self) -> &QuotientMap {
        &self.quotient
    }

    pub fn dim(&self) -> usize {
        self.module.dim
    }

    pub fn first_dim(&self) -> usize {
        self.first_dim
    }

    pub fn second_dim(&self) -> usize {
        self.second_dim
    }

    /// The class of `u ⊗ v`.
    pub fn vector(&self, u: &CVec, v: &CVec) -> CVec {
        &self.quotient.coords * linalg::kron_vec(u, v)
    }

    /// `v ↦ [u ⊗ v]` as a matrix.
    pub fn left_slot(&self, u: &CVec) -> CMat {
        let ucol = CMat::from_column_slice(u.len(), 1, u.as_slice());
        &self.quotient.coords * kron(&ucol, &identity(self.second_dim))
    }

    /// `u ↦ [u ⊗ v]` as a matrix.
    pub fn right_slot(&self, v: &CVec) -> CMat {
        let vcol = CMat::from_column_slice(v.len(), 1, v.as_slice());
        &self.quotient.coords * kron(&identity(self.first_dim), &vcol)
    }

    /// `a ⊗ b` pushed to this space.
    pub fn lift(&self, a: &CMat, b: &CMat) -> Result<CMat> {
        descend_operator(&kron(a, b), &self.quotient)
    }

    /// `a ⊗ b` as a map from this space to `target`.
    pub fn lift_to(&self, a: &CMat, b: &CMat, target: &TensorSpace) -> Result<CMat> {
        descend_between(&kron(a, b), &self.quotient, &target.quotient)
    }
}

/// `M ⊗_T H`: generators `e_α ⊗ h_j`, inner product `(x⊗ξ, y⊗η) = (ξ, T(x*y)η)`.
///
/// The left action is `π_T(y)(x⊗ξ) = yx⊗ξ`; a right action of `H` is inherited.
pub fn tensor_t(m: &Arc<MultiMatrixAlgebra>, t: &UcpMap, h: &WStarBimodule) -> Result<TensorSpace> {
    let left = h.require_left()?;
    if !left.algebra.same_basis(m.operator_basis()) {
        return Err(Error::Incompatible(format!(
            "{} is not a left module over the channel's algebra",
            h.label
        )));
    }
    let basis = m.basis();
    let l = basis.len();
    let dh = h.dim;
    let mut gram = CMat::zeros(l * dh, l * dh);
    for (a, ea) in basis.iter().enumerate() {
        for (b, eb) in basis.iter().enumerate() {
            let block = left.image_of_coords(&m.operator_basis().coords(&t.apply_matrix(&(ea.adjoint() * eb))));
            gram.view_mut((a * dh, b * dh), (dh, dh)).copy_from(&block);
        }
    }
    let quotient = quotient_completion(&gram)?;
    let mut space = TensorSpace {
        module: WStarBimodule::from_parts(0, None, None, ""),
        quotient,
        first_dim: l,
        second_dim: dh,
    };
    let eye_h = identity(dh);
    let mut left_images = Vec::with_capacity(l);
    for y in basis {
        let mut ym = CMat::zeros(l, l);
        for (a, ea) in basis.iter().enumerate() {
            let col = m.operator_basis().coords(&(y * ea));
            for (b, x) in col.into_iter().enumerate() {
                ym[(b, a)] = x;
            }
        }
        left_images.push(space.lift(&ym, &eye_h)?);
    }
    let eye_m = identity(l);
    let right = match &h.right {
        Some(r) => Some(r.try_map_images(|img| space.lift(&eye_m, img))?),
        None => None,
    };
    space.module = WStarBimodule::from_parts(
        space.quotient.rank(),
        Some(Action::new(m.operator_basis().clone(), left_images, false)),
        right,
        format!("M(x)T[{}]", h.label),
    );
    Ok(space)
}

/// The isometry `ξ ↦ 1 ⊗ ξ` from `H` into `M ⊗_T H`.
pub fn unit_embedding(m: &MultiMatrixAlgebra, space: &TensorSpace) -> CMat {
    let one = crate::CVec::from_vec(m.operator_basis().coords(&identity(m.ambient_dim())));
    space.left_slot(&one)
}

/// The relative tensor product `H ⊗^B K` for the normalized trace on `B`.
pub fn relative_tensor(h: &WStarBimodule, k: &WStarBimodule) -> Result<TensorSpace> {
    let hr = h.require_right()?;
    let kl = k.require_left()?;
    if !hr.same_algebra(kl) {
        return Err(Error::Incompatible(format!(
            "right algebra of {} differs from left algebra of {}",
            h.label, k.label
        )));
    }
    if hr.anti == kl.anti {
        return Err(Error::Incompatible(format!(
            "{} and {} do not act by the same algebra from opposite sides",
            h.label, k.label
        )));
    }
    let b = &hr.algebra;
    let nb = b.dim();
    let mut pairing = CMat::zeros(nb, nb);
    for i in 0..nb {
        for j in 0..nb {
            pairing[(i, j)] = b.normalized_trace(&(&b.basis()[j] * &b.basis()[i]));
        }
    }
    if linalg::rank(&pairing, RANK_TOL)? < nb {
        return Err(Error::Validation("trace pairing is degenerate".into()));
    }
    let inv = pairing
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Numerical("trace pairing is singular".into()))?;
    let (dh, dk) = (h.dim, k.dim);
    let mut gram = CMat::zeros(dh * dk, dh * dk);
    for j in 0..nb {
        let mut q = CMat::zeros(dh, dh);
        for i in 0..nb {
            q += &hr.images[i] * inv[(j, i)];
        }
        gram += kron(&q, &kl.images[j]);
    }
    let quotient = quotient_completion(&gram)?;
    let mut space = TensorSpace {
        module: WStarBimodule::from_parts(0, None, None, ""),
        quotient,
        first_dim: dh,
        second_dim: dk,
    };
    let (eye_h, eye_k) = (identity(dh), identity(dk));
    let left = match &h.left {
        Some(a) => Some(a.try_map_images(|img| space.lift(img, &eye_k))?),
        None => None,
    };
    let right = match &k.right {
        Some(a) => Some(a.try_map_images(|img| space.lift(&eye_h, img))?),
        None => None,
    };
    space.module = WStarBimodule::from_parts(
        space.quotient.rank(),
        left,
        right,
        format!("{}(x){}", h.label, k.label),
    );
    Ok(space)
}

/// `⟨ξ, η⟩_B` for `ξ, η` in a right `B`-module: the element with
/// `τ(⟨ξ,η⟩ a) = (ξ, η·a)` for all `a ∈ B`, as a matrix on `B`'s carrier.
pub fn algebra_inner(h: &WStarBimodule, xi: &CVec, eta: &CVec) -> Result<CMat> {
    let hr = h.require_right()?;
    let b = &hr.algebra;
    let nb = b.dim();
    let mut pairing = CMat::zeros(nb, nb);
    let mut rhs = CVec::zeros(nb);
    for i in 0..nb {
        for j in 0..nb {
            pairing[(i, j)] = b.normalized_trace(&(&b.basis()[j] * &b.basis()[i]));
        }
        rhs[i] = xi.dotc(&(&hr.images[i] * eta));
    }
    let sol = pairing
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Numerical("trace pairing is singular".into()))?;
    Ok(b.element(sol.as_slice()))
}

/// Which action an intertwiner must commute with.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

fn hermitian_parts(a: &CMat) -> [CMat; 2] {
    [
        (a + a.adjoint()) * real(0.5),
        (a - a.adjoint()) * c(0.0, -0.5),
    ]
}

/// Basis (as columns `vec(X)`) of `{X : X·p = q·X for every pair (p, q)}`,
/// assuming the pairs span a `*`-closed set of pairs.
///
/// A generic Hermitian combination is diagonalized first; its Sylvester
/// kernel is explicit in the eigenbases. The remaining constraints only
/// restrict that kernel.
pub fn sylvester_kernel(pairs: &[(CMat, CMat)], dh: usize, dk: usize) -> Result<CMat> {
    let n = dh * dk;
    let mut scale: f64 = 0.0;
    for (p, q) in pairs {
        scale = scale.max(op_norm(p) + op_norm(q));
    }
    if pairs.is_empty() || scale == 0.0 {
        return Ok(identity(n));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut hp = CMat::zeros(dh, dh);
    let mut hq = CMat::zeros(dk, dk);
    for (p, q) in pairs {
        let [pr, pi] = hermitian_parts(p);
        let [qr, qi] = hermitian_parts(q);
        let a: f64 = StandardNormal.sample(&mut rng);
        let b: f64 = StandardNormal.sample(&mut rng);
        hp += pr * real(a) + pi * real(b);
        hq += qr * real(a) + qi * real(b);
    }
    let (pv, pu) = hermitian_eigen(&hp)?;
    let (qv, qu) = hermitian_eigen(&hq)?;
    let first_cut = RANK_TOL * (op_norm(&hp) + op_norm(&hq)).max(scale);
    let mut cols: Vec<CVec> = Vec::new();
    for (j, &pj) in pv.iter().enumerate() {
        for (i, &qi) in qv.iter().enumerate() {
            if (pj - qi).abs() <= first_cut {
                // vec(w_i u_j*) = conj(u_j) ⊗ w_i
                let u = pu.column(j).map(|x| x.conj());
                cols.push(u.kronecker(&qu.column(i)));
            }
        }
    }
    let mut kernel = CMat::zeros(n, cols.len());
    for (k, v) in cols.iter().enumerate() {
        kernel.column_mut(k).copy_from(v);
    }
    // One generic complex combination usually cuts the kernel down to the
    // answer; each pair then only costs a residual evaluation.
    let mut gp = CMat::zeros(dh, dh);
    let mut gq = CMat::zeros(dk, dk);
    for (p, q) in pairs {
        let a = c(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng));
        gp += p * a;
        gq += q * a;
    }
    let combined = [(gp, gq)];
    for (p, q) in combined.iter().chain(pairs) {
        if kernel.ncols() == 0 {
            break;
        }
        let cut = RANK_TOL * (op_norm(p) + op_norm(q));
        let image = pair_residuals(&kernel, p, q, dh, dk);
        // The Frobenius norm bounds every singular value.
        if image.norm() <= cut {
            continue;
        }
        kernel = &kernel * linalg::null_space_abs(&image, cut)?;
    }
    Ok(kernel)
}

/// Columns `vec(X p − q X)` for the columns `vec(X)` of `stack`.
fn pair_residuals(stack: &CMat, p: &CMat, q: &CMat, dh: usize, dk: usize) -> CMat {
    let n = dh * dk;
    let cols = stack.ncols();
    let mut out = CMat::zeros(n, cols);
    for col in 0..cols {
        let x = linalg::unvectorize(stack.column(col).as_slice(), dk, dh);
        let r = &x * p - q * &x;
        out.column_mut(col).copy_from_slice(r.as_slice());
    }
    out
}

fn kernel_matrices(kernel: &CMat, dk: usize, dh: usize) -> Vec<CMat> {
    (0..kernel.ncols())
        .map(|col| linalg::unvectorize(kernel.column(col).as_slice(), dk, dh))
        .collect()
}

/// Hilbert-Schmidt orthonormal basis of the maps `H → K` intertwining the chosen actions.
pub fn intertwiners(h: &WStarBimodule, k: &WStarBimodule, side: Side) -> Result<Vec<CMat>> {
    let (a, b) = match side {
        Side::Left => (h.require_left()?, k.require_left()?),
        Side::Right => (h.require_right()?, k.require_right()?),
    };
    if !a.same_algebra(b) || a.anti != b.anti {
        return Err(Error::Incompatible(format!(
            "{} and {} carry different {:?} actions",
            h.label, k.label, side
        )));
    }
    let pairs: Vec<(CMat, CMat)> = a.images.iter().cloned().zip(b.images.iter().cloned()).collect();
    let kernel = sylvester_kernel(&pairs, h.dim, k.dim)?;
    Ok(kernel_matrices(&kernel, k.dim, h.dim))
}

/// Residuals of a candidate unitary bimodule map.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct WitnessResiduals {
    pub isometry: f64,
    pub surjectivity: f64,
    pub left_intertwining: f64,
    pub right_intertwining: f64,
}

impl WitnessResiduals {
    pub fn max(&self) -> f64 {
        self.isometry
            .max(self.surjectivity)
            .max(self.left_intertwining)
            .max(self.right_intertwining)
    }
}

/// A linear map `H → K` together with its unitarity and intertwining residuals.
#[derive(Clone, Debug)]
pub struct IsomorphismWitness {
    pub matrix: CMat,
    pub residuals: WitnessResiduals,
    pub source_dim: usize,
    pub target_dim: usize,
}

impl IsomorphismWitness {
    pub fn verifies(&self, tol: f64) -> bool {
        self.source_dim == self.target_dim && self.residuals.max() < tol
    }
}

fn intertwining_residual(w: &CMat, a: Option<&Action>, b: Option<&Action>) -> Result<f64> {
    match (a, b) {
        (Some(a), Some(b)) => {
            if !a.same_algebra(b) || a.anti != b.anti {
                return Err(Error::Incompatible("actions over different algebras".into()));
            }
            let mut worst: f64 = 0.0;
            for (p, q) in a.images.iter().zip(&b.images) {
                worst = worst.max(op_norm(&(w * p - q * w)));
            }
            Ok(worst)
        }
        (None, None) => Ok(0.0),
        _ => Err(Error::Incompatible("only one side carries an action".into())),
    }
}

/// Computes all residuals of `w : H → K`.
pub fn witness_from_matrix(w: CMat, h: &WStarBimodule, k: &WStarBimodule) -> Result<IsomorphismWitness> {
    if w.shape() != (k.dim, h.dim) {
        return Err(Error::Validation(format!(
            "map of shape {:?} between spaces of dimension {} and {}",
            w.shape(),
            h.dim,
            k.dim
        )));
    }
    let isometry = op_norm(&(w.adjoint() * &w - identity(h.dim)));
    let surjectivity = op_norm(&(&w * w.adjoint() - identity(k.dim)));
    let left_intertwining = intertwining_residual(&w, h.left(), k.left())?;
    let right_intertwining = intertwining_residual(&w, h.right(), k.right())?;
    Ok(IsomorphismWitness {
        matrix: w,
        residuals: WitnessResiduals {
            isometry,
            surjectivity,
            left_intertwining,
            right_intertwining,
        },
        source_dim: h.dim,
        target_dim: k.dim,
    })
}

/// Builds the map determined by `sources[:, g] ↦ images[:, g]` and reports its residuals.
///
/// The map must respect every linear relation among the sources; a
/// violation is a [`Error::NotWellDefined`]. Failure to preserve the inner
/// product shows up in the isometry residual.
pub fn verify_isomorphism(
    sources: &CMat,
    images: &CMat,
    h: &WStarBimodule,
    k: &WStarBimodule,
) -> Result<IsomorphismWitness> {
    if sources.nrows() != h.dim || images.nrows() != k.dim || sources.ncols() != images.ncols() {
        return Err(Error::Validation("spanning data has inconsistent shapes".into()));
    }
    let w = images * linalg::pinv(sources, RANK_TOL)?;
    let defect = (images - &w * sources).norm() / images.norm().max(1.0);
    if defect > DESCENT_TOL {
        return Err(Error::NotWellDefined(defect));
    }
    witness_from_matrix(w, h, k)
}

/// Looks for a unitary intertwining both actions via the polar part of a
/// generic simultaneous intertwiner.
///
/// For a trace-orthonormal basis `b_i` of a `*`-algebra,
/// `X ↦ Σ_i q(b_i) X p(b_i)*` maps onto the intertwiners of `p` and `q`, so
/// averaging a Gaussian matrix over both actions gives a generic one.
pub fn find_bimodule_isomorphism(
    h: &WStarBimodule,
    k: &WStarBimodule,
    tol: f64,
) -> Result<Option<IsomorphismWitness>> {
    if h.dim != k.dim {
        return Ok(None);
    }
    let mut sides = Vec::new();
    for (a, b) in [(h.left(), k.left()), (h.right(), k.right())] {
        match (a, b) {
            (Some(a), Some(b)) => {
                if !a.same_algebra(b) || a.anti != b.anti {
                    return Err(Error::Incompatible(format!(
                        "{} and {} carry different actions",
                        h.label, k.label
                    )));
                }
                sides.push((a, b));
            }
            (None, None) => {}
            _ => return Err(Error::Incompatible("only one side carries an action".into())),
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x1505);
    let mut x = CMat::from_fn(k.dim, h.dim, |_, _| {
        c(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng))
    });
    for (a, b) in sides {
        let mut avg = CMat::zeros(k.dim, h.dim);
        for (p, q) in a.images.iter().zip(&b.images) {
            avg += linalg::matmul(&linalg::matmul(q, &x), &p.adjoint());
        }
        x = avg;
    }
    let gram = x.adjoint() * &x;
    let (vals, _) = hermitian_eigen(&gram)?;
    let top = vals.last().copied().unwrap_or(0.0);
    if vals.first().is_none_or(|&lo| lo <= RANK_TOL * top) {
        return Ok(None);
    }
    let polar = &x * linalg::inv_sqrt_psd(&gram)?;
    let witness = witness_from_matrix(polar, h, k)?;
    Ok(if witness.verifies(tol) { Some(witness) } else { None })
}
