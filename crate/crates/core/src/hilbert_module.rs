//! Hilbert modules over `M` through their carrier W*-bimodules.
//!
//! A right Hilbert `B`-module `X` is stored as the Hilbert space
//! `H(X) = X ⊗_B L²(B)` together with the intertwiners
//! `X(H) = Hom(L²(B)_B, H_B)`. A carrier vector `η` stands for the module
//! element `x_η : â ↦ η·a`, and the `B`-valued inner product is the unique
//! element with `τ(⟨η,ζ⟩ a) = (η, ζ·a)`.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::algebra::{from_l2, standard_form, to_l2, MultiMatrixAlgebra, OperatorAlgebraBasis};
use crate::cp_map::UcpMap;
use crate::error::{Error, Result};
use crate::linalg::{self, c, identity, real, CMat, CVec, C64};
use crate::wstar::{
    algebra_inner, intertwiners, quotient_completion, relative_tensor, tensor_t, Action, Side,
    TensorSpace, WStarBimodule,
};

#[derive(Clone, Debug)]
pub struct HilbertBimodule {
    carrier: WStarBimodule,
    module_basis: Vec<CMat>,
}

/// Worst residual of each Hilbert-module axiom over sampled elements.
#[derive(Clone, Copy, Debug, Default)]
pub struct ModuleAxioms {
    pub linearity: f64,
    pub right_linearity: f64,
    pub hermitian: f64,
    /// `max(0, −λ_min((x,x)))`.
    pub positivity: f64,
    /// `|τ((x,x)) − ‖x‖²|`: `(x,x) = 0` forces `x = 0`.
    pub definiteness: f64,
    /// Finite-dimensional modules are complete; kept for the full axiom list.
    pub completeness: f64,
    /// `(x, a y) − (a* x, y)`; zero when there is no left action.
    pub compatibility: f64,
    /// `x_η* x_ζ − L(⟨η,ζ⟩)` on `L²(B)`.
    pub realization: f64,
}

impl ModuleAxioms {
    pub fn max(&self) -> f64 {
        [
            self.linearity,
            self.right_linearity,
            self.hermitian,
            self.positivity,
            self.definiteness,
            self.completeness,
            self.compatibility,
            self.realization,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

impl HilbertBimodule {
    /// Wraps a carrier with a right action; module elements are carrier vectors.
    pub fn from_carrier(carrier: WStarBimodule) -> Result<Self> {
        let right = carrier
            .right()
            .ok_or_else(|| Error::Incompatible("a Hilbert module needs a right action".into()))?;
        let b = right.algebra().clone();
        let module_basis = (0..carrier.dim())
            .map(|k| realization_of(right, &b, &linalg::basis_vector(carrier.dim(), k)))
            .collect();
        Ok(HilbertBimodule {
            carrier,
            module_basis,
        })
    }

    pub fn carrier(&self) -> &WStarBimodule {
        &self.carrier
    }

    pub fn dim(&self) -> usize {
        self.carrier.dim()
    }

    pub fn right_algebra(&self) -> &Arc<OperatorAlgebraBasis> {
        self.carrier.right().expect("checked at construction").algebra()
    }

    /// The intertwiners `L²(B) → H(X)` realizing the module.
    pub fn module_basis(&self) -> &[CMat] {
        &self.module_basis
    }

    pub fn inner(&self, x: &CVec, y: &CVec) -> Result<CMat> {
        algebra_inner(&self.carrier, x, y)
    }

    /// `B`-valued Gram of the carrier basis, row-major.
    pub fn gram_m(&self) -> Result<Vec<CMat>> {
        let n = self.dim();
        let mut out = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                out.push(self.inner(&linalg::basis_vector(n, i), &linalg::basis_vector(n, j))?);
            }
        }
        Ok(out)
    }

    pub fn right_apply(&self, x: &CVec, a: &CMat) -> Result<CVec> {
        Ok(self.carrier.right_image(a)? * x)
    }

    pub fn left_apply(&self, a: &CMat, x: &CVec) -> Result<CVec> {
        Ok(self.carrier.left_image(a)? * x)
    }

    /// The intertwiner `x_η : L²(B) → H(X)`.
    pub fn realization(&self, x: &CVec) -> CMat {
        let right = self.carrier.right().expect("checked at construction");
        realization_of(right, right.algebra(), x)
    }

    /// Samples the Hilbert-module and bimodule axioms on basis vectors and
    /// seeded random elements.
    pub fn axiom_report(&self, samples: usize, seed: u64) -> Result<ModuleAxioms> {
        let n = self.dim();
        let b = self.right_algebra().clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut gauss = move || c(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng));
        let mut vectors: Vec<CVec> = (0..n).map(|k| linalg::basis_vector(n, k)).collect();
        for _ in 0..samples {
            vectors.push(CVec::from_fn(n, |_, _| gauss()));
        }
        let coords: Vec<C64> = (0..b.dim()).map(|_| gauss()).collect();
        let a = b.element(&coords);
        let alpha = gauss();
        let left_elem = self.carrier.left().map(|l| {
            let lc: Vec<C64> = (0..l.algebra().dim()).map(|_| gauss()).collect();
            l.algebra().element(&lc)
        });
        let l2 = standard_form(&b);
        let l2_left = l2.left().expect("standard form has both actions");
        let mut rep = ModuleAxioms::default();
        for (i, x) in vectors.iter().enumerate() {
            let xx = self.inner(x, x)?;
            let lo = linalg::hermitian_eigenvalues(&xx)?.first().copied().unwrap_or(0.0);
            rep.positivity = rep.positivity.max((-lo).max(0.0));
            rep.hermitian = rep.hermitian.max((&xx - xx.adjoint()).norm());
            let tau = b.normalized_trace(&xx).re;
            rep.definiteness = rep.definiteness.max((tau - x.norm_squared()).abs());
            for y in vectors.iter().skip(i).take(3) {
                let xy = self.inner(x, y)?;
                let yx = self.inner(y, x)?;
                rep.hermitian = rep.hermitian.max((xy.adjoint() - &yx).norm());
                let ya = self.right_apply(y, &a)?;
                rep.right_linearity = rep.right_linearity.max((self.inner(x, &ya)? - &xy * &a).norm());
                let z = &vectors[(i + 1) % vectors.len()];
                let comb = y * alpha + z;
                let lin = self.inner(x, &comb)? - (&xy * alpha + self.inner(x, z)?);
                rep.linearity = rep.linearity.max(lin.norm());
                if let Some(s) = &left_elem {
                    let lhs = self.inner(x, &self.left_apply(s, y)?)?;
                    let rhs = self.inner(&self.left_apply(&s.adjoint(), x)?, y)?;
                    rep.compatibility = rep.compatibility.max((lhs - rhs).norm());
                }
                let real_prod = self.realization(x).adjoint() * self.realization(y);
                let expected = l2_left.image(&xy)?;
                rep.realization = rep.realization.max((real_prod - expected).norm());
            }
        }
        Ok(rep)
    }
}

fn realization_of(right: &Action, b: &OperatorAlgebraBasis, x: &CVec) -> CMat {
    let s = real((b.carrier_dim() as f64).sqrt());
    let cols: Vec<CMat> = right
        .images()
        .iter()
        .map(|r| {
            let v = r * x * s;
            CMat::from_column_slice(v.len(), 1, v.as_slice())
        })
        .collect();
    linalg::hcat(&cols, x.len())
}

/// `X(H) = Hom(L²(B)_B, H_B)` computed as an intertwiner space.
pub fn from_wstar(h: &WStarBimodule) -> Result<HilbertBimodule> {
    let right = h
        .right()
        .ok_or_else(|| Error::Incompatible(format!("{} has no right action", h.label())))?;
    let l2 = standard_form(right.algebra());
    let basis = intertwiners(&l2, h, Side::Right)?;
    Ok(HilbertBimodule {
        carrier: h.clone(),
        module_basis: basis,
    })
}

/// `H(X) = X ⊗_B L²(B)` built from the module basis, with the canonical map
/// `x ⊗ â ↦ x(â)` into the stored carrier.
pub fn to_wstar(x: &HilbertBimodule) -> Result<(WStarBimodule, CMat)> {
    let b = x.right_algebra().clone();
    let nb = b.dim();
    let basis = x.module_basis();
    let k = basis.len();
    let mut gram = CMat::zeros(k * nb, k * nb);
    for (i, xi) in basis.iter().enumerate() {
        for (j, xj) in basis.iter().enumerate() {
            gram.view_mut((i * nb, j * nb), (nb, nb))
                .copy_from(&(xi.adjoint() * xj));
        }
    }
    let q = quotient_completion(&gram)?;
    let l2 = standard_form(&b);
    let eye_k = identity(k);
    let right = l2
        .right()
        .expect("standard form has a right action")
        .images()
        .iter()
        .map(|r| crate::wstar::descend_operator(&linalg::kron(&eye_k, r), &q))
        .collect::<Result<Vec<_>>>()?;
    let right = Action::new(b.clone(), right, true);
    let left = match x.carrier.left() {
        Some(act) => {
            let mut images = Vec::with_capacity(act.images().len());
            for img in act.images() {
                let mut coeff = CMat::zeros(k, k);
                for (col, xc) in basis.iter().enumerate() {
                    let moved = img * xc;
                    for (row, xr) in basis.iter().enumerate() {
                        coeff[(row, col)] = linalg::hs_inner(xr, &moved);
                    }
                }
                images.push(crate::wstar::descend_operator(&linalg::kron(&coeff, &identity(nb)), &q)?);
            }
            Some(Action::new(act.algebra().clone(), images, act.is_anti()))
        }
        None => None,
    };
    let module = WStarBimodule::new(q.rank(), left, Some(right), format!("H({})", x.carrier.label()))?;
    let mut images = CMat::zeros(x.dim(), k * nb);
    for (i, xi) in basis.iter().enumerate() {
        images.view_mut((0, i * nb), (x.dim(), nb)).copy_from(xi);
    }
    let canonical = images * q.lift();
    Ok((module, canonical))
}

/// The GNS bimodule `E(M,T)` realized on `M ⊗_T L²(M)` with cyclic vector `1 ⊗ 1̂`.
#[derive(Clone, Debug)]
pub struct GnsPair {
    pub module: HilbertBimodule,
    pub space: TensorSpace,
    pub cyclic: CVec,
    algebra: Arc<MultiMatrixAlgebra>,
}

impl GnsPair {
    /// The class of `a ⊗ b`, i.e. the module element `a·ξ·b`.
    pub fn element(&self, a: &CMat, b: &CMat) -> CVec {
        let ops = self.algebra.operator_basis();
        let ac = CVec::from_vec(ops.coords(a));
        self.space.vector(&ac, &to_l2(ops, b))
    }

    /// `(ξ, aξ)`.
    pub fn reproduce(&self, a: &CMat) -> Result<CMat> {
        let moved = self.module.left_apply(a, &self.cyclic)?;
        self.module.inner(&self.cyclic, &moved)
    }

    /// Dimension of `span(MξM)`.
    pub fn cyclic_span_rank(&self) -> Result<usize> {
        let basis = self.algebra.basis();
        let mut cols = Vec::new();
        for a in basis {
            for b in basis {
                let v = self.element(a, b);
                cols.push(CMat::from_column_slice(v.len(), 1, v.as_slice()));
            }
        }
        linalg::rank(&linalg::hcat(&cols, self.module.dim()), linalg::RANK_TOL)
    }
}

pub fn gns_bimodule(m: &Arc<MultiMatrixAlgebra>, t: &UcpMap) -> Result<GnsPair> {
    let l2 = standard_form(m.operator_basis());
    let space = tensor_t(m, t, &l2)?;
    let module = HilbertBimodule::from_carrier(space.module().clone().with_label("E(M,T)"))?;
    let ops = m.operator_basis();
    let one = identity(m.ambient_dim());
    let cyclic = space.vector(&CVec::from_vec(ops.coords(&one)), &to_l2(ops, &one));
    Ok(GnsPair {
        module,
        space,
        cyclic,
        algebra: m.clone(),
    })
}

/// `E ⊗_M F` with the quotient data for forming `x ⊗ y`.
#[derive(Clone, Debug)]
pub struct ModuleTensor {
    pub module: HilbertBimodule,
    pub space: TensorSpace,
}

impl ModuleTensor {
    pub fn vector(&self, x: &CVec, y: &CVec) -> CVec {
        self.space.vector(x, y)
    }
}

pub fn module_tensor(e: &HilbertBimodule, f: &HilbertBimodule) -> Result<ModuleTensor> {
    let space = relative_tensor(&e.carrier, &f.carrier)?;
    let module = HilbertBimodule::from_carrier(space.module().clone())?;
    Ok(ModuleTensor { module, space })
}

/// The trivial bimodule `M` (carrier `L²(M)`, unit vector `1̂`).
pub fn trivial_module(m: &Arc<MultiMatrixAlgebra>) -> Result<(HilbertBimodule, CVec)> {
    let ops = m.operator_basis();
    let module = HilbertBimodule::from_carrier(standard_form(ops).with_label("M"))?;
    Ok((module, to_l2(ops, &identity(m.ambient_dim()))))
}

/// `E ⊗_M H` with the operators `L_ξ` and the representation `ρ`.
#[derive(Clone, Debug)]
pub struct VnEmbedding {
    pub space: TensorSpace,
}

impl VnEmbedding {
    /// `L_ξ : h ↦ ξ ⊗ h`.
    pub fn l_op(&self, xi: &CVec) -> CMat {
        self.space.left_slot(xi)
    }

    /// `ρ(x)(ξ ⊗ h) = xξ ⊗ h`.
    pub fn rho(&self, x: &CMat) -> Result<CMat> {
        self.space.module().left_image(x)
    }
}

pub fn vn_module_embedding(e: &HilbertBimodule, h: &WStarBimodule) -> Result<VnEmbedding> {
    Ok(VnEmbedding {
        space: relative_tensor(&e.carrier, h)?,
    })
}

/// An element of `B` recovered from an operator in `L(B) ⊂ End(L²(B)_B)`.
pub fn element_from_left_multiplication(b: &OperatorAlgebraBasis, op: &CMat) -> CMat {
    let one = to_l2(b, &identity(b.carrier_dim()));
    from_l2(b, &(op * one))
}
