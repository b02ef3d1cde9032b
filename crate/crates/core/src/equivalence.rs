//! Explicit identifications between the tensor-product spaces of the two
//! constructions, each checked through an [`IsomorphismWitness`], and the
//! cross-check of their moments.
//!
//! `H(M,T) = M ⊗_T L²(M)`; its generators are `e_α ⊗ ê_β` with `ê_β` the
//! `L²` coordinate vector, i.e. the element `√d·b_β`. For the trace all maps
//! below are defined on elementary tensors and extended linearly; well
//! definedness is part of the verification.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::algebra::{standard_form, AlgebraElement, MultiMatrixAlgebra, OperatorAlgebraBasis};
use crate::bhat_skeide::{bs_build, decode_on_h, BsDilation, DilationConfig};
use crate::cp_map::UcpMap;
use crate::error::{Error, Result};
use crate::hilbert_module::{gns_bimodule, module_tensor};
use crate::linalg::{self, hcat, identity, kron, real, CMat, CVec, C64};
use crate::muhly_solel::{ms_build, MsDilation, MsTower};
use crate::wstar::{
    dual_module, find_bimodule_isomorphism, relative_tensor, tensor_t, verify_isomorphism,
    witness_from_matrix, Action, IsomorphismWitness, TensorSpace, WStarBimodule,
};

/// Outcome of one named check.
#[derive(Clone, Debug)]
pub struct CheckResult {
    pub name: String,
    pub source_dim: usize,
    pub target_dim: usize,
    pub residuals: Vec<(String, f64)>,
    pub passed: bool,
    pub detail: Option<String>,
}

impl CheckResult {
    pub fn from_witness(name: impl Into<String>, w: Result<IsomorphismWitness>, tol: f64) -> Self {
        match w {
            Ok(w) => CheckResult {
                name: name.into(),
                source_dim: w.source_dim,
                target_dim: w.target_dim,
                residuals: vec![
                    ("isometry".into(), w.residuals.isometry),
                    ("surjectivity".into(), w.residuals.surjectivity),
                    ("left_intertwining".into(), w.residuals.left_intertwining),
                    ("right_intertwining".into(), w.residuals.right_intertwining),
                ],
                passed: w.verifies(tol),
                detail: None,
            },
            Err(e) => CheckResult::failed(name, &e),
        }
    }

    pub fn failed(name: impl Into<String>, err: &Error) -> Self {
        CheckResult {
            name: name.into(),
            source_dim: 0,
            target_dim: 0,
            residuals: Vec::new(),
            passed: false,
            detail: Some(err.to_string()),
        }
    }

    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().fold(0.0, |m, (_, r)| m.max(*r))
    }
}

fn sqrt_dim(b: &OperatorAlgebraBasis) -> C64 {
    real((b.carrier_dim() as f64).sqrt())
}

/// `H(M,T) = M ⊗_T L²(M)`.
pub fn gns_space(m: &Arc<MultiMatrixAlgebra>, t: &UcpMap) -> Result<TensorSpace> {
    tensor_t(m, t, &standard_form(m.operator_basis()))
}

/// `H(M,T) ⊗^M H(M,T) → M ⊗_T H(M,T)`, `(x⊗ŷ)⊗(z⊗ŵ) ↦ x⊗((yz)⊗ŵ)`.
pub fn verify_gns_square(m: &Arc<MultiMatrixAlgebra>, t: &UcpMap) -> Result<IsomorphismWitness> {
    let h1 = gns_space(m, t)?;
    let e = h1.module();
    let lhs = relative_tensor(e, e)?;
    let rhs = tensor_t(m, t, e)?;
    let ops = m.operator_basis();
    let l = m.lin_dim();
    let q1 = h1.quotient().coords();
    let sources = lhs.quotient().coords() * kron(q1, q1);
    let sd = sqrt_dim(ops);
    let mut mult = CMat::zeros(l, l * l);
    for (b, y) in ops.basis().iter().enumerate() {
        for (g, z) in ops.basis().iter().enumerate() {
            for (i, v) in ops.coords(&(y * z)).into_iter().enumerate() {
                mult[(i, b * l + g)] = v * sd;
            }
        }
    }
    let inner = q1 * kron(&mult, &identity(l));
    let images = rhs.quotient().coords() * kron(&identity(l), &inner);
    verify_isomorphism(&sources, &images, lhs.module(), rhs.module())
}

/// `H(M,T) ⊗^M H → M ⊗_T H` with both spaces.
pub struct Absorption {
    pub source: TensorSpace,
    pub target: TensorSpace,
    pub witness: IsomorphismWitness,
}

fn absorption_parts(
    m: &Arc<MultiMatrixAlgebra>,
    t: &UcpMap,
    h1: &TensorSpace,
    h: &WStarBimodule,
) -> Result<Absorption> {
    let source = relative_tensor(h1.module(), h)?;
    let target = tensor_t(m, t, h)?;
    let ops = m.operator_basis();
    let sd = sqrt_dim(ops);
    let dh = h.dim();
    let sources = source.quotient().coords() * kron(h1.quotient().coords(), &identity(dh));
    let acts: Vec<CMat> = ops
        .basis()
        .iter()
        .map(|b| h.left_image(b).map(|x| x * sd))
        .collect::<Result<_>>()?;
    let lmat = hcat(&acts, dh);
    let images = target.quotient().coords() * kron(&identity(m.lin_dim()), &lmat);
    let witness = verify_isomorphism(&sources, &images, source.module(), target.module())?;
    Ok(Absorption {
        source,
        target,
        witness,
    })
}

/// `H(M,T) ⊗^M H → M ⊗_T H`, `(x⊗m̂)⊗ξ ↦ x⊗(mξ)`.
pub fn verify_gns_absorption(
    m: &Arc<MultiMatrixAlgebra>,
    t: &UcpMap,
    h: &WStarBimodule,
) -> Result<IsomorphismWitness> {
    Ok(absorption_parts(m, t, &gns_space(m, t)?, h)?.witness)
}

/// `H_1(M,T), …, H_n(M,T)` over `L²(M)`.
fn gns_tower(m: &Arc<MultiMatrixAlgebra>, t: &UcpMap, n: usize) -> Result<Vec<TensorSpace>> {
    let mut out: Vec<TensorSpace> = Vec::with_capacity(n);
    for k in 0..n {
        let next = match k {
            0 => gns_space(m, t)?,
            _ => tensor_t(m, t, out[k - 1].module())?,
        };
        out.push(next);
    }
    Ok(out)
}

/// `H` with the right action of `(M′)°` given by `M′` itself.
fn with_commutant(h: &WStarBimodule, comm: Arc<OperatorAlgebraBasis>) -> Result<WStarBimodule> {
    let images = comm.basis().to_vec();
    h.with_right(Some(Action::new(comm, images, false)))
}

/// `H* ⊗^M X ⊗^M H` for `H` carrying its commutant on the right.
fn sandwich(hc: &WStarBimodule, x: &WStarBimodule) -> Result<WStarBimodule> {
    let first = relative_tensor(&dual_module(hc), x)?;
    Ok(relative_tensor(first.module(), hc)?.into_module())
}

fn require_level(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::Validation("level must be at least 1".into()));
    }
    Ok(())
}

/// `H′_1 ⊗^{(M′)°} ⋯ ⊗^{(M′)°} H′_1 ≅ H′_n` with `H′_n = H* ⊗^M H_n(M,T) ⊗^M H`.
pub fn verify_commutant_power(
    m: &Arc<MultiMatrixAlgebra>,
    t: &UcpMap,
    h: &WStarBimodule,
    n: usize,
    tol: f64,
) -> Result<IsomorphismWitness> {
    require_level(n)?;
    let hc = h.with_commutant_right()?;
    let tower = gns_tower(m, t, n)?;
    let p1 = sandwich(&hc, tower[0].module())?;
    if n == 1 {
        return witness_from_matrix(identity(p1.dim()), &p1, &p1);
    }
    let pn = sandwich(&hc, tower[n - 1].module())?;
    let mut power = p1.clone();
    for _ in 1..n {
        power = relative_tensor(&power, &p1)?.into_module();
    }
    if power.dim() != pn.dim() {
        return Err(Error::NoIsomorphism(format!(
            "dimensions {} and {} differ",
            power.dim(),
            pn.dim()
        )));
    }
    find_bimodule_isomorphism(&power, &pn, tol)?
        .ok_or_else(|| Error::NoIsomorphism(format!("H'_1 power vs H'_{n}")))
}

/// The composed witness `H(M,T)^{⊗n} ⊗^M H → H_n` and its agreement with
/// the direct map on sampled elementary tensors.
pub struct IteratedWitness {
    pub witness: IsomorphismWitness,
    pub coherence: f64,
}

/// Associator `(A ⊗ B) ⊗ C → A ⊗ (B ⊗ C)` between the given spaces.
fn associator(
    ab: &TensorSpace,
    ab_c: &TensorSpace,
    bc: &TensorSpace,
    a_bc: &TensorSpace,
) -> Result<IsomorphismWitness> {
    let sources = ab_c.quotient().coords() * kron(ab.quotient().coords(), &identity(bc.second_dim()));
    let images = a_bc.quotient().coords() * kron(&identity(ab.first_dim()), bc.quotient().coords());
    verify_isomorphism(&sources, &images, ab_c.module(), a_bc.module())
}

pub fn associativity_witness(
    a: &WStarBimodule,
    b: &WStarBimodule,
    c: &WStarBimodule,
) -> Result<IsomorphismWitness> {
    let ab = relative_tensor(a, b)?;
    let ab_c = relative_tensor(ab.module(), c)?;
    let bc = relative_tensor(b, c)?;
    let a_bc = relative_tensor(a, bc.module())?;
    associator(&ab, &ab_c, &bc, &a_bc)
}

pub fn verify_iterated_absorption(
    m: &Arc<MultiMatrixAlgebra>,
    t: &UcpMap,
    h: &WStarBimodule,
    n: usize,
    samples: usize,
    seed: u64,
) -> Result<IteratedWitness> {
    require_level(n)?;
    let h1 = gns_space(m, t)?;
    // powers[k] = H(M,T)^{⊗(k+1)}, nested to the right.
    let mut powers: Vec<TensorSpace> = Vec::new();
    let mut lhs: Vec<TensorSpace> = Vec::new();
    let mut targets: Vec<TensorSpace> = Vec::new();
    let first = absorption_parts(m, t, &h1, h)?;
    let mut psi = first.witness.matrix.clone();
    lhs.push(first.source);
    targets.push(first.target);
    powers.push(h1.clone());
    for k in 1..n {
        let pk = relative_tensor(h1.module(), powers[k - 1].module())?;
        let src = relative_tensor(pk.module(), h)?;
        let mid = relative_tensor(h1.module(), lhs[k - 1].module())?;
        let assoc = associator(&pk, &src, &lhs[k - 1], &mid)?;
        let step = absorption_parts(m, t, &h1, targets[k - 1].module())?;
        let inner = mid.lift_to(&identity(h1.dim()), &psi, &step.source)?;
        psi = &step.witness.matrix * inner * &assoc.matrix;
        powers.push(pk);
        lhs.push(src);
        targets.push(step.target);
    }
    let source = &lhs[n - 1];
    let target = &targets[n - 1];
    let witness = witness_from_matrix(psi, source.module(), target.module())?;

    let ops = m.operator_basis();
    let l = m.lin_dim();
    let sd = sqrt_dim(ops);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut coherence: f64 = 0.0;
    for _ in 0..samples {
        let tuple: Vec<(usize, usize)> = (0..n).map(|_| (rng.random_range(0..l), rng.random_range(0..l))).collect();
        let hidx = rng.random_range(0..h.dim());
        let unit = |dim: usize, i: usize| linalg::basis_vector(dim, i);
        let mut pv = h1.vector(&unit(l, tuple[n - 1].0), &unit(l, tuple[n - 1].1));
        for k in (0..n - 1).rev() {
            let head = h1.vector(&unit(l, tuple[k].0), &unit(l, tuple[k].1));
            pv = powers[n - 1 - k].vector(&head, &pv);
        }
        let src = source.vector(&pv, &unit(h.dim(), hidx));
        // x_1 ⊗ (y_1 x_2 ⊗ (⋯ ⊗ y_n ξ))
        let mut tail = h.left_image(&ops.basis()[tuple[n - 1].1])? * unit(h.dim(), hidx) * sd;
        for k in (0..n).rev() {
            let z = if k == 0 {
                ops.basis()[tuple[0].0].clone()
            } else {
                &ops.basis()[tuple[k - 1].1] * &ops.basis()[tuple[k].0] * sd
            };
            tail = targets[n - 1 - k].vector(&CVec::from_vec(ops.coords(&z)), &tail);
        }
        let d = (&witness.matrix * src - &tail).norm();
        coherence = coherence.max(d);
    }
    Ok(IteratedWitness { witness, coherence })
}

/// `H ⊗^M L²(M) → H`, `ξ ⊗ b̂ ↦ ξ·b`.
pub fn right_unit_witness(h: &WStarBimodule) -> Result<IsomorphismWitness> {
    let r = h
        .right()
        .ok_or_else(|| Error::Incompatible("module has no right action".into()))?;
    let b = r.algebra().clone();
    let space = relative_tensor(h, &standard_form(&b))?;
    let sd = sqrt_dim(&b);
    let dh = h.dim();
    let mut images = CMat::zeros(dh, dh * b.dim());
    for i in 0..dh {
        for (beta, img) in r.images().iter().enumerate() {
            images.column_mut(i * b.dim() + beta).copy_from(&(img.column(i) * sd));
        }
    }
    verify_isomorphism(space.quotient().coords(), &images, space.module(), h)
}

/// `L²(M) ⊗^M K → K`, `â ⊗ k ↦ a·k`.
pub fn left_unit_witness(k: &WStarBimodule) -> Result<IsomorphismWitness> {
    let left = k
        .left()
        .ok_or_else(|| Error::Incompatible("module has no left action".into()))?;
    let b = left.algebra().clone();
    let space = relative_tensor(&standard_form(&b), k)?;
    let sd = sqrt_dim(&b);
    let acts: Vec<CMat> = left.images().iter().map(|x| x * sd).collect();
    let images = hcat(&acts, k.dim());
    verify_isomorphism(space.quotient().coords(), &images, space.module(), k)
}

/// `K* ⊗^M K ≅ L²(M′)` and `K ⊗^{(M′)°} K* ≅ L²(M)` for `K` with its commutant on the right.
pub fn dual_pairing_witnesses(
    k: &WStarBimodule,
    tol: f64,
) -> Result<(IsomorphismWitness, IsomorphismWitness)> {
    let kc = k.with_commutant_right()?;
    let comm = kc.right().expect("set above").algebra().clone();
    let m_basis = kc.left().expect("checked").algebra().clone();
    let kd = dual_module(&kc);
    let inner = relative_tensor(&kd, &kc)?.into_module();
    let outer = relative_tensor(&kc, &kd)?.into_module();
    let find = |a: &WStarBimodule, b: &WStarBimodule, what: &str| -> Result<IsomorphismWitness> {
        if a.dim() != b.dim() {
            return Err(Error::NoIsomorphism(format!(
                "{what}: dimensions {} and {} differ",
                a.dim(),
                b.dim()
            )));
        }
        find_bimodule_isomorphism(a, b, tol)?.ok_or_else(|| Error::NoIsomorphism(what.into()))
    };
    let first = find(&inner, &standard_form(&comm).flipped(), "K* (x) K vs L2(M')")?;
    let second = find(&outer, &standard_form(&m_basis), "K (x) K* vs L2(M)")?;
    Ok((first, second))
}

/// All relative-tensor identities for one instance, with `K = L²(M) ⊕ L²(M)`.
pub fn fact_identities(m: &Arc<MultiMatrixAlgebra>, t: &UcpMap, tol: f64) -> Vec<CheckResult> {
    let mut out = Vec::new();
    let l2 = standard_form(m.operator_basis());
    let h1 = match gns_space(m, t) {
        Ok(s) => s.into_module(),
        Err(e) => return vec![CheckResult::failed("gns_space", &e)],
    };
    let k = match l2.direct_sum(&l2) {
        Ok(k) => k,
        Err(e) => return vec![CheckResult::failed("doubled module", &e)],
    };
    out.push(CheckResult::from_witness("H (x) L2 = H", right_unit_witness(&h1), tol));
    out.push(CheckResult::from_witness("L2 (x) K = K", left_unit_witness(&k), tol));
    match dual_pairing_witnesses(&k, tol) {
        Ok((a, b)) => {
            out.push(CheckResult::from_witness("K* (x) K = L2(M')", Ok(a), tol));
            out.push(CheckResult::from_witness("K (x) K* = L2(M)", Ok(b), tol));
        }
        Err(e) => out.push(CheckResult::failed("dual pairings", &e)),
    }
    out.push(CheckResult::from_witness(
        "associativity (H,H,L2)",
        associativity_witness(&h1, &h1, &l2),
        tol,
    ));
    out.push(CheckResult::from_witness(
        "associativity (H,L2,K)",
        associativity_witness(&h1, &l2, &k),
        tol,
    ));
    out
}

/// `Ω_n : carrier(E_n) → H_n(M,T)`, built as `(absorption map) ∘ (id ⊗ Ω_{n−1})`.
pub fn carrier_witnesses(
    m: &Arc<MultiMatrixAlgebra>,
    t: &UcpMap,
    level: usize,
) -> Result<Vec<IsomorphismWitness>> {
    require_level(level)?;
    let gns = gns_bimodule(m, t)?;
    let h1 = gns.space.clone();
    let mut target = gns_space(m, t)?;
    let mut omega = identity(h1.dim());
    let mut module = gns.module.clone();
    let mut out = vec![witness_from_matrix(omega.clone(), gns.module.carrier(), target.module())?];
    for _ in 2..=level {
        let prod = module_tensor(&gns.module, &module)?;
        let step = absorption_parts(m, t, &h1, target.module())?;
        let lifted = prod.space.lift_to(&identity(h1.dim()), &omega, &step.source)?;
        omega = &step.witness.matrix * lifted;
        out.push(witness_from_matrix(omega.clone(), prod.module.carrier(), step.target.module())?);
        module = prod.module;
        target = step.target;
    }
    Ok(out)
}

/// `E(n)` as an `M′`-bimodule: `x·X = Λ_n(x)X`, `X·x = Xx`, inner product `τ(X*Y)`.
pub fn intertwiner_bimodule(tower: &MsTower, n: usize) -> Result<WStarBimodule> {
    let comm = Arc::new(tower.commutant().clone());
    let basis = tower.intertwiner_space(n)?;
    let mut left = Vec::new();
    let mut right = Vec::new();
    for x in comm.basis() {
        let lam = tower.lambda(n, x)?;
        let l: Vec<CMat> = basis.iter().map(|y| &lam * y).collect();
        let r: Vec<CMat> = basis.iter().map(|y| y * x).collect();
        left.push(tower.e_coords_checked(n, &l)?);
        right.push(tower.e_coords_checked(n, &r)?);
    }
    WStarBimodule::new(
        basis.len(),
        Some(Action::new(comm.clone(), left, false)),
        Some(Action::new(comm, right, true)),
        format!("E({n})"),
    )
}

/// `E(n) ≅ (H* ⊗^M H_n(M,T) ⊗^M H)` with the two `M′`-actions exchanged.
pub fn hom_correspondence(tower: &MsTower, n: usize, tol: f64) -> Result<IsomorphismWitness> {
    require_level(n)?;
    let m = tower.algebra();
    let e = intertwiner_bimodule(tower, n)?;
    let comm = e.left().expect("built above").algebra().clone();
    let hc = with_commutant(tower.h(), comm)?;
    let gns = gns_tower(m, tower.channel(), n)?;
    let primed = sandwich(&hc, gns[n - 1].module())?.flipped();
    if primed.dim() != e.dim() {
        return Err(Error::NoIsomorphism(format!(
            "dim E({n}) = {} but the sandwich has dimension {}",
            e.dim(),
            primed.dim()
        )));
    }
    find_bimodule_isomorphism(&e, &primed, tol)?
        .ok_or_else(|| Error::NoIsomorphism(format!("E({n}) vs sandwich")))
}

/// A word `[(n_1, γ_1), …]` standing for `α^{n_1}(b_{γ_1}) ⋯`.
pub type Word = Vec<(usize, usize)>;

/// Every word of length `≤ max_len` in basis letters with levels `≤ level`, the empty word first.
pub fn all_basis_words(lin_dim: usize, level: usize, max_len: usize) -> Vec<Word> {
    let letters: Vec<(usize, usize)> = (0..=level)
        .flat_map(|n| (0..lin_dim).map(move |g| (n, g)))
        .collect();
    let mut out = vec![Vec::new()];
    let mut frontier: Vec<Word> = vec![Vec::new()];
    for _ in 0..max_len {
        let mut next = Vec::with_capacity(frontier.len() * letters.len());
        for w in &frontier {
            for &l in &letters {
                let mut v = w.clone();
                v.push(l);
                next.push(v);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}

/// Compressed moments `ι* A_1 ⋯ A_k ι` from cached letter operators.
pub struct MomentEvaluator {
    algebra: Arc<MultiMatrixAlgebra>,
    h: WStarBimodule,
    iota: CMat,
    head: Vec<Vec<CMat>>,
    ops: Vec<Vec<CMat>>,
}

impl MomentEvaluator {
    fn new(
        algebra: &Arc<MultiMatrixAlgebra>,
        h: &WStarBimodule,
        iota: CMat,
        ops: Vec<Vec<CMat>>,
    ) -> Self {
        let head = ops
            .iter()
            .map(|row| row.iter().map(|a| iota.adjoint() * a).collect())
            .collect();
        MomentEvaluator {
            algebra: algebra.clone(),
            h: h.clone(),
            iota,
            head,
            ops,
        }
    }

    pub fn from_bs(d: &BsDilation, h: &WStarBimodule) -> Result<Self> {
        let m = d.algebra();
        let ops = (0..=d.level())
            .map(|n| m.basis().iter().map(|e| d.j_matrix(n, e)).collect::<Result<Vec<_>>>())
            .collect::<Result<_>>()?;
        Ok(Self::new(m, h, d.iota().clone(), ops))
    }

    pub fn from_ms(d: &MsDilation) -> Result<Self> {
        let tw = d.tower();
        let m = tw.algebra();
        let ops = (0..=d.level())
            .map(|n| {
                m.basis()
                    .iter()
                    .map(|e| d.alpha_power_on_m(n, e))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<_>>()?;
        Ok(Self::new(m, tw.h(), d.iota().clone(), ops))
    }

    pub fn level(&self) -> usize {
        self.ops.len() - 1
    }

    pub fn evaluate(&self, word: &[(usize, usize)]) -> Result<AlgebraElement> {
        let level = self.level();
        for &(n, g) in word {
            if n > level {
                return Err(Error::Truncation { index: n, level });
            }
            if g >= self.algebra.lin_dim() {
                return Err(Error::Validation(format!("basis index {g} out of range")));
            }
        }
        let op = match word.split_first() {
            None => self.iota.adjoint() * &self.iota,
            Some((&(n, g), rest)) => {
                let mut acc = self.head[n][g].clone();
                for &(n, g) in rest {
                    acc = &acc * &self.ops[n][g];
                }
                acc * &self.iota
            }
        };
        decode_on_h(&self.algebra, &self.h, &op)
    }
}

#[derive(Clone, Debug)]
pub struct MomentEntry {
    pub word: Word,
    pub bs: Vec<C64>,
    pub ms: Vec<C64>,
    pub difference: f64,
}

#[derive(Clone, Debug, Default)]
pub struct MomentTable {
    pub entries: Vec<MomentEntry>,
    pub max_difference: f64,
}

pub fn moment_table(bs: &MomentEvaluator, ms: &MomentEvaluator, words: &[Word]) -> Result<MomentTable> {
    let mut table = MomentTable::default();
    for w in words {
        let a = bs.evaluate(w)?;
        let b = ms.evaluate(w)?;
        let difference = a.distance(&b);
        table.max_difference = table.max_difference.max(difference);
        table.entries.push(MomentEntry {
            word: w.clone(),
            bs: a.coords(),
            ms: b.coords(),
            difference,
        });
    }
    Ok(table)
}

/// Largest change of a word's moment, over `words`, when the truncation level is raised by one.
pub fn truncation_stability(
    m: &Arc<MultiMatrixAlgebra>,
    t: &UcpMap,
    h: &WStarBimodule,
    level: usize,
    words: &[Word],
    cfg: &DilationConfig,
) -> Result<f64> {
    let low = MomentEvaluator::from_bs(&bs_build(m, t, h, level, cfg)?, h)?;
    let high = MomentEvaluator::from_bs(&bs_build(m, t, h, level + 1, cfg)?, h)?;
    let low_ms = MomentEvaluator::from_ms(&ms_build(m, t, h, level, cfg)?)?;
    let high_ms = MomentEvaluator::from_ms(&ms_build(m, t, h, level + 1, cfg)?)?;
    let mut worst: f64 = 0.0;
    for w in words {
        worst = worst.max(low.evaluate(w)?.distance(&high.evaluate(w)?));
        worst = worst.max(low_ms.evaluate(w)?.distance(&high_ms.evaluate(w)?));
    }
    Ok(worst)
}

#[derive(Clone, Debug, Default)]
pub struct EquivalenceReport {
    pub checks: Vec<CheckResult>,
    pub moment_table: Option<MomentTable>,
    pub moment_tol: f64,
}

impl EquivalenceReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
            && self
                .moment_table
                .as_ref()
                .is_none_or(|t| t.max_difference < self.moment_tol)
    }
}

/// Module chain, intertwiner correspondence and the moment table at `level`.
#[allow(clippy::too_many_arguments)]
pub fn verify_construction_equivalence(
    m: &Arc<MultiMatrixAlgebra>,
    t: &UcpMap,
    h: &WStarBimodule,
    level: usize,
    max_len: usize,
    tol: f64,
    moment_tol: f64,
    cfg: &DilationConfig,
) -> Result<EquivalenceReport> {
    let mut report = EquivalenceReport {
        moment_tol,
        ..Default::default()
    };
    match carrier_witnesses(m, t, level) {
        Ok(ws) => {
            for (i, w) in ws.into_iter().enumerate() {
                report.checks.push(CheckResult::from_witness(
                    format!("carrier(E_{}) = H_{}(M,T)", i + 1, i + 1),
                    Ok(w),
                    tol,
                ));
            }
        }
        Err(e) => report.checks.push(CheckResult::failed("carrier(E_n) = H_n(M,T)", &e)),
    }
    let bs = bs_build(m, t, h, level, cfg)?;
    let ms = ms_build(m, t, h, level, cfg)?;
    for n in 1..=level {
        report.checks.push(CheckResult::from_witness(
            format!("E({n}) = H* (x) H_{n}(M,T) (x) H"),
            hom_correspondence(ms.tower(), n, tol),
            tol,
        ));
    }
    let words = all_basis_words(m.lin_dim(), level, max_len);
    let table = moment_table(&MomentEvaluator::from_bs(&bs, h)?, &MomentEvaluator::from_ms(&ms)?, &words)?;
    report.moment_table = Some(table);
    Ok(report)
}
