//! Level-`N` truncation of the dilation built from tensor powers of the GNS
//! bimodule.
//!
//! `E_n = E_1 ⊗_M E_{n−1}` with `ξ_n = ξ ⊗ ξ_{n−1}`, `K_n = E_n ⊗_M H`, and
//! `w_{n,m} : K_m → K_n` prepends `ξ_{n−m}`. Everything is materialized on
//! `K_N`; `j_n(a) = w_{N,n} ρ_n(a) w_{N,n}*` acts as
//! `[η ↦ ξ_{N−n}·a·⟨ξ_{N−n}, η⟩] ⊗ id_{E_n ⊗ H}`.

use std::sync::Arc;

use crate::algebra::{
    central_support, generated_algebra, span_equal, AlgebraElement, MultiMatrixAlgebra,
    OperatorAlgebraBasis,
};
use crate::cp_map::UcpMap;
use crate::error::{Error, Result};
use crate::hilbert_module::{gns_bimodule, module_tensor, GnsPair, HilbertBimodule};
use crate::linalg::{identity, CMat, CVec, RANK_TOL};
use crate::wstar::{relative_tensor, TensorSpace, WStarBimodule};

/// Limits applied while building truncations.
#[derive(Clone, Copy, Debug)]
pub struct DilationConfig {
    pub dim_cap: usize,
}

impl Default for DilationConfig {
    fn default() -> Self {
        DilationConfig { dim_cap: 4096 }
    }
}

pub(crate) fn check_cap(what: impl Into<String>, dim: usize, cfg: &DilationConfig) -> Result<()> {
    if dim > cfg.dim_cap {
        return Err(Error::SizeCap {
            what: what.into(),
            dim,
            cap: cfg.dim_cap,
        });
    }
    Ok(())
}

pub struct BsDilation {
    level: usize,
    algebra: Arc<MultiMatrixAlgebra>,
    channel: UcpMap,
    h: WStarBimodule,
    gns: GnsPair,
    modules: Vec<HilbertBimodule>,
    cyclic: Vec<CVec>,
    prepend: Vec<CMat>,
    k_spaces: Vec<Option<TensorSpace>>,
    to_top: Vec<CMat>,
    steps: Vec<CMat>,
}

/// Observed generation and minimality data; never asserted.
#[derive(Clone, Debug)]
pub struct BsDiagnostics {
    pub carrier_dim: usize,
    pub generated_dim: usize,
    pub contains_all_j: bool,
    pub corner_equals_j0: bool,
    pub central_support_rank: usize,
    pub central_support_is_projection: bool,
    pub central_support_is_identity: bool,
}

pub fn bs_build(
    m: &Arc<MultiMatrixAlgebra>,
    t: &UcpMap,
    h: &WStarBimodule,
    level: usize,
    cfg: &DilationConfig,
) -> Result<BsDilation> {
    if level == 0 {
        return Err(Error::Validation("truncation level must be at least 1".into()));
    }
    let gns = gns_bimodule(m, t)?;
    check_cap("E_1", gns.module.dim(), cfg)?;
    let (unit, unit_vec) = crate::hilbert_module::trivial_module(m)?;
    let mut modules = vec![unit, gns.module.clone()];
    let mut cyclic = vec![unit_vec, gns.cyclic.clone()];
    let mut prepend = vec![identity(m.lin_dim()), gns.module.realization(&gns.cyclic)];
    for n in 2..=level {
        let prod = module_tensor(&gns.module, &modules[n - 1])?;
        check_cap(format!("E_{n}"), prod.module.dim(), cfg)?;
        cyclic.push(prod.vector(&gns.cyclic, &cyclic[n - 1]));
        prepend.push(prod.space.left_slot(&gns.cyclic));
        modules.push(prod.module);
    }
    let mut k_spaces: Vec<Option<TensorSpace>> = vec![None];
    let mut steps = vec![identity(h.dim())];
    for n in 1..=level {
        let k = relative_tensor(modules[n].carrier(), h)?;
        check_cap(format!("K_{n}"), k.dim(), cfg)?;
        let step = if n == 1 {
            k.left_slot(&cyclic[1])
        } else {
            let prev = k_spaces[n - 1].as_ref().expect("K_n for n ≥ 1");
            prev.lift_to(&prepend[n], &identity(h.dim()), &k)?
        };
        steps.push(step);
        k_spaces.push(Some(k));
    }
    let mut to_top = vec![CMat::zeros(0, 0); level + 1];
    let top_dim = k_spaces[level].as_ref().map_or(h.dim(), |k| k.dim());
    to_top[level] = identity(top_dim);
    for n in (0..level).rev() {
        to_top[n] = &to_top[n + 1] * &steps[n + 1];
    }
    Ok(BsDilation {
        level,
        algebra: m.clone(),
        channel: t.clone(),
        h: h.clone(),
        gns,
        modules,
        cyclic,
        prepend,
        k_spaces,
        to_top,
        steps,
    })
}

impl BsDilation {
    pub fn level(&self) -> usize {
        self.level
    }

    pub fn algebra(&self) -> &Arc<MultiMatrixAlgebra> {
        &self.algebra
    }

    pub fn channel(&self) -> &UcpMap {
        &self.channel
    }

    pub fn gns(&self) -> &GnsPair {
        &self.gns
    }

    /// `E_0 = M, E_1, …, E_N`.
    pub fn modules(&self) -> &[HilbertBimodule] {
        &self.modules
    }

    pub fn cyclic(&self, n: usize) -> &CVec {
        &self.cyclic[n]
    }

    /// `η ↦ ξ ⊗ η` from `E_{n−1}` to `E_n`.
    pub fn prepend(&self, n: usize) -> &CMat {
        &self.prepend[n]
    }

    /// `K_n` for `n ≥ 1`; `K_0` is `H` itself.
    pub fn k_space(&self, n: usize) -> Option<&TensorSpace> {
        self.k_spaces.get(n).and_then(|k| k.as_ref())
    }

    pub fn k_dim(&self, n: usize) -> usize {
        self.k_space(n).map_or(self.h.dim(), |k| k.dim())
    }

    pub fn carrier_dim(&self) -> usize {
        self.k_dim(self.level)
    }

    fn check_index(&self, n: usize) -> Result<()> {
        if n > self.level {
            return Err(Error::Truncation {
                index: n,
                level: self.level,
            });
        }
        Ok(())
    }

    /// `w_{n,m} : K_m → K_n`.
    pub fn embedding(&self, n: usize, m: usize) -> Result<CMat> {
        self.check_index(n)?;
        if m > n {
            return Err(Error::Truncation { index: m, level: n });
        }
        let mut w = identity(self.k_dim(m));
        for step in &self.steps[m + 1..=n] {
            w = step * w;
        }
        Ok(w)
    }

    /// `ι : H → K_N`, `h ↦ ξ_N ⊗ h`.
    pub fn iota(&self) -> &CMat {
        &self.to_top[0]
    }

    /// Left action of `M` on `K_n`.
    pub fn rho(&self, n: usize, a: &CMat) -> Result<CMat> {
        match self.k_space(n) {
            Some(k) => k.module().left_image(a),
            None => self.h.left_image(a),
        }
    }

    /// `j_n(a)` on `K_N`, for `a` given as an ambient matrix.
    pub fn j_matrix(&self, n: usize, a: &CMat) -> Result<CMat> {
        self.check_index(n)?;
        let w = &self.to_top[n];
        Ok(w * self.rho(n, a)? * w.adjoint())
    }

    pub fn p(&self) -> Result<CMat> {
        self.j_matrix(0, &identity(self.algebra.ambient_dim()))
    }

    /// Largest deviation of the `w_{n,m}` from being isometric and composable.
    pub fn embedding_residual(&self) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for n in 0..=self.level {
            for m in 0..=n {
                let w = self.embedding(n, m)?;
                worst = worst.max((w.adjoint() * &w - identity(w.ncols())).norm());
                for l in 0..=m {
                    let lhs = &w * self.embedding(m, l)?;
                    worst = worst.max((lhs - self.embedding(n, l)?).norm());
                }
            }
        }
        Ok(worst)
    }
}

pub fn bs_j(d: &BsDilation, n: usize, a: &AlgebraElement) -> Result<CMat> {
    d.j_matrix(n, a.data())
}

/// An operator on `H` in the image of the left action, recovered as an element of `M`.
pub(crate) fn decode_on_h(
    m: &Arc<MultiMatrixAlgebra>,
    h: &WStarBimodule,
    op: &CMat,
) -> Result<AlgebraElement> {
    let left = h
        .left()
        .ok_or_else(|| Error::Incompatible("H has no left action".into()))?;
    let (coords, residual) = left.preimage(op)?;
    if residual > 1e-8 {
        return Err(Error::Consistency(residual));
    }
    Ok(AlgebraElement::from_coords(m, &coords))
}

/// `ι* · Π j_{n_i}(a_i) · ι`, as an element of `M`.
pub fn bs_moment(d: &BsDilation, word: &[(usize, AlgebraElement)]) -> Result<AlgebraElement> {
    let dim = d.carrier_dim();
    let mut prod = identity(dim);
    for (n, a) in word {
        prod *= d.j_matrix(*n, a.data())?;
    }
    let op = d.iota().adjoint() * prod * d.iota();
    decode_on_h(&d.algebra, &d.h, &op)
}

pub fn bs_diagnostics(d: &BsDilation) -> Result<BsDiagnostics> {
    let dim = d.carrier_dim();
    let mut gens = Vec::new();
    for n in 0..=d.level {
        for e in d.algebra.basis() {
            gens.push(d.j_matrix(n, e)?);
        }
    }
    let n_alg = generated_algebra(&gens, dim)?;
    let contains_all_j = gens.iter().all(|g| n_alg.contains(g, 1e-8));
    let p = d.p()?;
    // p·N·p = ι (ι*Nι) ι* and X ↦ ιXι* is isometric, so compare on H.
    let iota = d.iota();
    let hd = d.h.dim();
    let rows = crate::linalg::matmul(&iota.adjoint(), &crate::linalg::hcat(n_alg.basis(), dim));
    let corner: Vec<CMat> = (0..n_alg.dim())
        .map(|i| rows.columns(i * dim, dim) * iota)
        .collect();
    let corner = OperatorAlgebraBasis::from_spanning(hd, &corner)?;
    let j0: Vec<CMat> = d
        .algebra
        .basis()
        .iter()
        .map(|e| d.rho(0, e))
        .collect::<Result<_>>()?;
    let j0 = OperatorAlgebraBasis::from_spanning(hd, &j0)?;
    let cp = central_support(&p, &n_alg)?;
    let central_support_rank = crate::linalg::rank(&cp, RANK_TOL)?;
    Ok(BsDiagnostics {
        carrier_dim: dim,
        generated_dim: n_alg.dim(),
        contains_all_j,
        corner_equals_j0: span_equal(&corner, &j0, 1e-8),
        central_support_rank,
        central_support_is_projection: (&cp * &cp - &cp).norm() < 1e-8 && (cp.adjoint() - &cp).norm() < 1e-8,
        central_support_is_identity: (&cp - identity(dim)).norm() < 1e-8,
    })
}
