//! Level-`N` truncation of the dilation built from intertwiner spaces, and
//! its realization directly on the tower `H_n = M ⊗_T H_{n−1}`.
//!
//! `E(n) = Hom_M(H, H_n)` with `M′`-valued inner product `X*Y`;
//! `L_n = E(n) ⊗ H` is realized as a quotient of the generators
//! `X_a ⊗ e_k` by the Gram matrix `(X_a e_k, X_b e_l)`, so `L_0 = H`.
//! Operators on `L_n` are stored in the orthonormal coordinates of the
//! quotient. `Φ_k(X) = 1^{⊗k} ⊗ X : H_k → H_{k+n}` for `X ∈ E(n)`.

use std::sync::{Arc, OnceLock};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::algebra::{commutant, span_equal, AlgebraElement, MultiMatrixAlgebra, OperatorAlgebraBasis};
use crate::bhat_skeide::{check_cap, decode_on_h, DilationConfig};
use crate::cp_map::{power, UcpMap};
use crate::error::{Error, Result};
use crate::linalg::{self, hcat, identity, kron, pinv, CMat, RANK_TOL};
use crate::wstar::{
    descend_between, descend_operator, intertwiners, quotient_completion, tensor_t, unit_embedding,
    QuotientMap, Side, TensorSpace, WStarBimodule,
};

/// The tower `H_0 = H, …, H_N` with `M′`, its ampliations and the spaces `E(n)`.
pub struct MsTower {
    level: usize,
    algebra: Arc<MultiMatrixAlgebra>,
    channel: UcpMap,
    h: WStarBimodule,
    spaces: Vec<Option<TensorSpace>>,
    commutant: OperatorAlgebraBasis,
    units: Vec<CMat>,
    i_maps: Vec<CMat>,
    e_bases: Vec<Vec<CMat>>,
    e_stacks: Vec<CMat>,
}

impl MsTower {
    pub fn build(
        m: &Arc<MultiMatrixAlgebra>,
        t: &UcpMap,
        h: &WStarBimodule,
        level: usize,
        cfg: &DilationConfig,
    ) -> Result<Self> {
        if level == 0 {
            return Err(Error::Validation("truncation level must be at least 1".into()));
        }
        let left = h
            .left()
            .ok_or_else(|| Error::Incompatible("H has no left action".into()))?;
        let comm = commutant(left.images(), h.dim())?;
        let mut spaces: Vec<Option<TensorSpace>> = vec![None];
        let mut modules = vec![h.clone()];
        let mut units = vec![identity(h.dim())];
        let mut i_maps = vec![identity(h.dim())];
        for n in 1..=level {
            let space = tensor_t(m, t, &modules[n - 1])?;
            check_cap(format!("H_{n}"), space.dim(), cfg)?;
            let j = unit_embedding(m, &space);
            i_maps.push(&j * &i_maps[n - 1]);
            units.push(j);
            modules.push(space.module().clone());
            spaces.push(Some(space));
        }
        let mut e_bases = vec![comm.basis().to_vec()];
        for hn in modules.iter().skip(1) {
            let basis = intertwiners(h, hn, Side::Left)?;
            check_cap("E(n) ⊗ H generators", basis.len() * h.dim(), cfg)?;
            e_bases.push(basis);
        }
        let e_stacks = e_bases
            .iter()
            .enumerate()
            .map(|(n, basis)| {
                let rows = modules[n].dim() * h.dim();
                let cols: Vec<CMat> = basis
                    .iter()
                    .map(|x| CMat::from_column_slice(rows, 1, x.as_slice()))
                    .collect();
                hcat(&cols, rows)
            })
            .collect();
        Ok(MsTower {
            level,
            algebra: m.clone(),
            channel: t.clone(),
            h: h.clone(),
            spaces,
            commutant: comm,
            units,
            i_maps,
            e_bases,
            e_stacks,
        })
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn algebra(&self) -> &Arc<MultiMatrixAlgebra> {
        &self.algebra
    }

    pub fn channel(&self) -> &UcpMap {
        &self.channel
    }

    pub fn h(&self) -> &WStarBimodule {
        &self.h
    }

    /// `M′` on `H`.
    pub fn commutant(&self) -> &OperatorAlgebraBasis {
        &self.commutant
    }

    pub fn h_dim(&self, n: usize) -> usize {
        self.spaces[n].as_ref().map_or(self.h.dim(), |s| s.dim())
    }

    pub fn space(&self, n: usize) -> Option<&TensorSpace> {
        self.spaces.get(n).and_then(|s| s.as_ref())
    }

    /// `J_n : H_{n−1} → H_n`, `η ↦ 1 ⊗ η`.
    pub fn unit_step(&self, n: usize) -> &CMat {
        &self.units[n]
    }

    /// The unital isometry `i_n : H → H_n`.
    pub fn i_map(&self, n: usize) -> &CMat {
        &self.i_maps[n]
    }

    /// HS-orthonormal basis of `E(n)`; `E(0) = M′`.
    pub fn intertwiner_space(&self, n: usize) -> Result<&[CMat]> {
        self.check_index(n)?;
        Ok(&self.e_bases[n])
    }

    pub fn e_dim(&self, n: usize) -> usize {
        self.e_bases[n].len()
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

    /// `Φ_k(X) = 1^{⊗k} ⊗ X : H_k → H_{k+n}` for `X : H → H_n`.
    pub fn phi(&self, k: usize, n: usize, x: &CMat) -> Result<CMat> {
        self.check_index(k + n)?;
        let mut out = x.clone();
        let l = identity(self.algebra.lin_dim());
        for s in 1..=k {
            let src = self.space(s).expect("H_s for s ≥ 1");
            let dst = self.space(s + n).expect("H_{s+n} for s ≥ 1");
            out = src.lift_to(&l, &out, dst)?;
        }
        Ok(out)
    }

    /// `Λ_n(x) = 1^{⊗n} ⊗ x` on `H_n` for `x ∈ M′`.
    pub fn lambda(&self, n: usize, x: &CMat) -> Result<CMat> {
        self.phi(n, 0, x)
    }

    /// Coordinates in `E(n)` of each column-stacked operator `H → H_n`, with
    /// the largest relative distance from `E(n)`.
    pub(crate) fn e_coords(&self, n: usize, ops: &[CMat]) -> (CMat, f64) {
        let rows = self.h_dim(n) * self.h.dim();
        let cols: Vec<CMat> = ops
            .iter()
            .map(|x| CMat::from_column_slice(rows, 1, x.as_slice()))
            .collect();
        let stack = hcat(&cols, rows);
        let basis = &self.e_stacks[n];
        let coords = basis.adjoint() * &stack;
        let mut worst: f64 = 0.0;
        let back = basis * &coords;
        for j in 0..stack.ncols() {
            let d = (back.column(j) - stack.column(j)).norm();
            worst = worst.max(d / stack.column(j).norm().max(1.0));
        }
        (coords, worst)
    }

    pub(crate) fn e_coords_checked(&self, n: usize, ops: &[CMat]) -> Result<CMat> {
        let (coords, residual) = self.e_coords(n, ops);
        if residual > 1e-8 {
            return Err(Error::Domain {
                what: format!("E({n})"),
                residual,
            });
        }
        Ok(coords)
    }

    /// `U_{n,m}(X_n ⊗ X_m) = Φ_m(X_n) X_m ∈ E(n+m)`.
    pub fn identify(&self, n: usize, m: usize, xn: &CMat, xm: &CMat) -> Result<CMat> {
        self.check_index(n + m)?;
        Ok(self.phi(m, n, xn)? * xm)
    }

    /// `P_n(X) = i_n* X`.
    pub fn p_map(&self, n: usize, x: &CMat) -> Result<CMat> {
        self.check_index(n)?;
        Ok(self.i_maps[n].adjoint() * x)
    }

    /// `G_n = [X_1 | X_2 | …] : E(n) ⊗ H → H_n` on generators.
    fn generator_map(&self, n: usize) -> CMat {
        hcat(&self.e_bases[n], self.h_dim(n))
    }

    /// Block `a` is `K^a ⊗ 1_H`, `K^a_{cb}` the `E(n+m)`-coordinates of `Φ_m(X_a) Y_b`
    /// for `X_a ∈ E(n)`, `Y_b ∈ E(m)`.
    fn identification_blocks(&self, n: usize, m: usize) -> Result<Vec<CMat>> {
        let ih = identity(self.h.dim());
        let mut out = Vec::with_capacity(self.e_dim(n));
        for xa in &self.e_bases[n] {
            let lifted = self.phi(m, n, xa)?;
            let prods: Vec<CMat> = self.e_bases[m].iter().map(|y| &lifted * y).collect();
            let k = self.e_coords_checked(n + m, &prods)?;
            out.push(kron(&k, &ih));
        }
        Ok(out)
    }

    /// Gram defect and rank deficit of `U_{n,m}`.
    pub fn identification_report(&self, n: usize, m: usize) -> Result<IdentificationReport> {
        self.check_index(n + m)?;
        let bm = hcat(&self.e_bases[m], self.h_dim(m));
        let lifted: Vec<CMat> = self.e_bases[n]
            .iter()
            .map(|x| self.phi(m, n, x))
            .collect::<Result<_>>()?;
        let mut gram_defect: f64 = 0.0;
        for (a, xa) in self.e_bases[n].iter().enumerate() {
            let qa = &lifted[a] * &bm;
            for (a2, xa2) in self.e_bases[n].iter().enumerate() {
                let z = xa.adjoint() * xa2;
                let zc = self.commutant.coords(&z);
                let lam = self.lambda(m, &self.commutant.element(&zc))?;
                let expected = bm.adjoint() * lam * &bm;
                let got = qa.adjoint() * (&lifted[a2] * &bm);
                gram_defect = gram_defect.max((got - expected).norm());
            }
        }
        let mut images = Vec::new();
        for l in &lifted {
            for y in &self.e_bases[m] {
                images.push(l * y);
            }
        }
        let (coords, outside) = self.e_coords(n + m, &images);
        let rank = linalg::rank(&coords, RANK_TOL)?;
        Ok(IdentificationReport {
            n,
            m,
            gram_defect,
            outside_residual: outside,
            rank,
            target_dim: self.e_dim(n + m),
        })
    }
}

/// Unitarity data for `U_{n,m} : E(n) ⊗_{M′} E(m) → E(n+m)`.
#[derive(Clone, Debug)]
pub struct IdentificationReport {
    pub n: usize,
    pub m: usize,
    pub gram_defect: f64,
    pub outside_residual: f64,
    pub rank: usize,
    pub target_dim: usize,
}

impl IdentificationReport {
    pub fn is_unitary(&self, tol: f64) -> bool {
        self.gram_defect < tol && self.outside_residual < tol && self.rank == self.target_dim
    }
}

/// The intertwiner-space dilation on `L_N`.
pub struct MsDilation {
    tower: MsTower,
    quotients: Vec<QuotientMap>,
    p_tilde: Vec<CMat>,
    to_top: Vec<CMat>,
    alpha_gens: Vec<CMat>,
    alpha_pinvs: Vec<CMat>,
    n_alg: OnceLock<OperatorAlgebraBasis>,
}

pub fn ms_build(
    m: &Arc<MultiMatrixAlgebra>,
    t: &UcpMap,
    h: &WStarBimodule,
    level: usize,
    cfg: &DilationConfig,
) -> Result<MsDilation> {
    MsDilation::from_tower(MsTower::build(m, t, h, level, cfg)?, cfg)
}

impl MsDilation {
    pub fn from_tower(tower: MsTower, cfg: &DilationConfig) -> Result<Self> {
        let level = tower.level;
        let hd = tower.h.dim();
        let mut quotients = vec![QuotientMap::identity(hd)];
        let mut p_tilde = vec![identity(hd)];
        for n in 1..=level {
            let g = tower.generator_map(n);
            let q = quotient_completion(&(g.adjoint() * &g))?;
            check_cap(format!("L_{n}"), q.rank(), cfg)?;
            p_tilde.push(tower.i_maps[n].adjoint() * &g * q.lift());
            quotients.push(q);
        }
        let mut d = MsDilation {
            tower,
            quotients,
            p_tilde,
            to_top: Vec::new(),
            alpha_gens: Vec::new(),
            alpha_pinvs: Vec::new(),
            n_alg: OnceLock::new(),
        };
        d.to_top = (0..=level).map(|m| d.embedding(level, m)).collect::<Result<_>>()?;
        for m in 0..level {
            let g = d.alpha_generator(m)?;
            d.alpha_pinvs.push(pinv(&g, RANK_TOL)?);
            d.alpha_gens.push(g);
        }
        Ok(d)
    }

    pub fn tower(&self) -> &MsTower {
        &self.tower
    }

    pub fn level(&self) -> usize {
        self.tower.level
    }

    pub fn l_dim(&self, n: usize) -> usize {
        self.quotients[n].rank()
    }

    pub fn carrier_dim(&self) -> usize {
        self.l_dim(self.tower.level)
    }

    /// `P̃_n : L_n → H`, `X ⊗ ξ ↦ P_n(X) ξ`.
    pub fn p_tilde(&self, n: usize) -> &CMat {
        &self.p_tilde[n]
    }

    /// `U_n : L_n → H_n`, `X ⊗ ξ ↦ Xξ`.
    pub fn realization(&self, n: usize) -> CMat {
        if n == 0 {
            return identity(self.tower.h.dim());
        }
        self.tower.generator_map(n) * self.quotients[n].lift()
    }

    /// `u_{n,m} : L_m → L_n`.
    pub fn embedding(&self, n: usize, m: usize) -> Result<CMat> {
        self.tower.check_index(n)?;
        if m > n {
            return Err(Error::Truncation { index: m, level: n });
        }
        if m == n {
            return Ok(identity(self.l_dim(n)));
        }
        let back = self.p_tilde[n - m].adjoint();
        if m == 0 {
            return Ok(back);
        }
        let lifted_back = self.quotients[n - m].lift() * back;
        let blocks: Vec<CMat> = self
            .tower
            .identification_blocks(m, n - m)?
            .iter()
            .map(|k| k * &lifted_back)
            .collect();
        let a = hcat(&blocks, self.quotients[n].generators());
        descend_between(&a, &self.quotients[m], &self.quotients[n])
    }

    /// `ι_m = u_{N,m}`.
    pub fn iota_m(&self, m: usize) -> &CMat {
        &self.to_top[m]
    }

    pub fn iota(&self) -> &CMat {
        &self.to_top[0]
    }

    pub fn p(&self) -> CMat {
        self.iota() * self.iota().adjoint()
    }

    /// `V₀(x)` on `L_N` for `x ∈ M′`: `X ⊗ ξ ↦ Λ_N(x)X ⊗ ξ`.
    pub fn v0(&self, x: &CMat) -> Result<CMat> {
        let n = self.tower.level;
        let lam = self.tower.lambda(n, x)?;
        let prods: Vec<CMat> = self.tower.e_bases[n].iter().map(|y| &lam * y).collect();
        let k = self.tower.e_coords_checked(n, &prods)?;
        descend_operator(&kron(&k, &identity(self.tower.h.dim())), &self.quotients[n])
    }

    /// `V_n(X)` restricted to `ι_m(L_m)`, as a map `L_m → L_{n+m}`.
    pub fn v_n(&self, n: usize, m: usize, x: &CMat) -> Result<CMat> {
        self.tower.check_index(n + m)?;
        if n == 0 {
            let lam = self.tower.lambda(m, x)?;
            if m == 0 {
                return Ok(lam);
            }
            let prods: Vec<CMat> = self.tower.e_bases[m].iter().map(|y| &lam * y).collect();
            let k = self.tower.e_coords_checked(m, &prods)?;
            return descend_operator(&kron(&k, &identity(self.tower.h.dim())), &self.quotients[m]);
        }
        let col = self.tower.e_coords_checked(n, std::slice::from_ref(x))?;
        let ih = identity(self.tower.h.dim());
        if m == 0 {
            return Ok(self.quotients[n].coords() * kron(&col, &ih));
        }
        let lifted = self.tower.phi(m, n, x)?;
        let prods: Vec<CMat> = self.tower.e_bases[m].iter().map(|y| &lifted * y).collect();
        let k = self.tower.e_coords_checked(n + m, &prods)?;
        descend_between(&kron(&k, &ih), &self.quotients[m], &self.quotients[n + m])
    }

    /// `Ṽ₁ : E(1) ⊗ L_m → L_{m+1}` with columns `(a, k)` at `a·dim L_m + k`.
    fn alpha_generator(&self, m: usize) -> Result<CMat> {
        let q1 = &self.quotients[m + 1];
        if m == 0 {
            return Ok(q1.coords().clone());
        }
        let lift = self.quotients[m].lift();
        let blocks: Vec<CMat> = self
            .tower
            .identification_blocks(1, m)?
            .iter()
            .map(|k| q1.coords() * k * lift)
            .collect();
        Ok(hcat(&blocks, q1.rank()))
    }

    /// `α_{m+1}(x) = Ṽ₁ (1 ⊗ x) Ṽ₁*` for `x` on `L_m`, landing on `L_{m+1}`.
    pub fn alpha_step(&self, m: usize, x: &CMat) -> Result<CMat> {
        self.tower.check_index(m + 1)?;
        if x.shape() != (self.l_dim(m), self.l_dim(m)) {
            return Err(Error::Validation(format!(
                "operator of shape {:?} on L_{m} of dimension {}",
                x.shape(),
                self.l_dim(m)
            )));
        }
        let g = &self.alpha_gens[m];
        let amp = kron(&identity(self.tower.e_dim(1)), x);
        Ok(g * amp * &self.alpha_pinvs[m])
    }

    /// `α(x)` for `x` on `L_N`, compressed to `ι_{N−1}(L_{N−1})` first.
    pub fn alpha(&self, x: &CMat) -> Result<CMat> {
        let n = self.tower.level;
        let w = self.embedding(n, n - 1)?;
        self.alpha_step(n - 1, &(w.adjoint() * x * &w))
    }

    /// `α^n(ι₀ y ι₀*) = ι_n α_n ⋯ α_1(y) ι_n*` for `y ∈ M` acting on `H`.
    pub fn alpha_power_on_m(&self, n: usize, y: &CMat) -> Result<CMat> {
        self.tower.check_index(n)?;
        let mut x = self.tower.h.left_image(y)?;
        for m in 0..n {
            x = self.alpha_step(m, &x)?;
        }
        let w = &self.to_top[n];
        Ok(w * x * w.adjoint())
    }

    /// `N = V₀(M′)′` on `L_N`, computed on first use.
    pub fn n_alg(&self) -> Result<&OperatorAlgebraBasis> {
        if let Some(n) = self.n_alg.get() {
            return Ok(n);
        }
        let gens: Vec<CMat> = self
            .tower
            .commutant
            .basis()
            .iter()
            .map(|x| self.v0(x))
            .collect::<Result<_>>()?;
        let n = commutant(&gens, self.carrier_dim())?;
        Ok(self.n_alg.get_or_init(|| n))
    }
}

pub fn ms_moment(d: &MsDilation, word: &[(usize, AlgebraElement)]) -> Result<AlgebraElement> {
    let mut prod = identity(d.carrier_dim());
    for (n, a) in word {
        prod *= d.alpha_power_on_m(*n, a.data())?;
    }
    let op = d.iota().adjoint() * prod * d.iota();
    decode_on_h(&d.tower.algebra, &d.tower.h, &op)
}

/// Residuals of the structural identities of an [`MsDilation`].
#[derive(Clone, Debug)]
pub struct MsChecks {
    pub embedding_isometry: f64,
    pub embedding_cocycle: f64,
    pub identifications: Vec<IdentificationReport>,
    pub v0_commutation: f64,
    pub p_in_n: f64,
    pub corner_spans_m: bool,
    pub alpha_unital: f64,
    pub alpha_multiplicative: f64,
    pub alpha_adjoint: f64,
    pub compression: f64,
}

impl MsChecks {
    pub fn passes(&self, tol: f64) -> bool {
        self.embedding_isometry < tol
            && self.embedding_cocycle < tol
            && self.identifications.iter().all(|r| r.is_unitary(tol))
            && self.v0_commutation < tol
            && self.p_in_n < tol
            && self.corner_spans_m
            && self.alpha_unital < tol
            && self.alpha_multiplicative < tol
            && self.alpha_adjoint < tol
            && self.compression < tol
    }
}

fn random_in(basis: &OperatorAlgebraBasis, rng: &mut ChaCha8Rng) -> CMat {
    use rand_distr::{Distribution, StandardNormal};
    let coords: Vec<_> = (0..basis.dim())
        .map(|_| {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            linalg::c(re, im)
        })
        .collect();
    basis.element(&coords)
}

pub fn ms_checks(d: &MsDilation, samples: usize, seed: u64) -> Result<MsChecks> {
    let level = d.level();
    let mut iso: f64 = 0.0;
    let mut cocycle: f64 = 0.0;
    let mut emb = vec![vec![CMat::zeros(0, 0); level + 1]; level + 1];
    for n in 0..=level {
        for m in 0..=n {
            let w = d.embedding(n, m)?;
            iso = iso.max((w.adjoint() * &w - identity(w.ncols())).norm());
            emb[n][m] = w;
        }
    }
    for n in 0..=level {
        for m in 0..=n {
            for l in 0..=m {
                cocycle = cocycle.max((&emb[n][m] * &emb[m][l] - &emb[n][l]).norm());
            }
        }
    }
    let mut identifications = Vec::new();
    for total in 1..=level {
        for n in 0..=total {
            identifications.push(d.tower.identification_report(n, total - n)?);
        }
    }
    let n_alg = d.n_alg()?;
    let mut v0_commutation: f64 = 0.0;
    for x in d.tower.commutant.basis() {
        let v = d.v0(x)?;
        v0_commutation = v0_commutation.max(linalg::max_commutator(&v, n_alg.basis()));
    }
    let p = d.p();
    let p_in_n = n_alg.projection_residual(&p);
    let iota = d.iota();
    let rows = linalg::matmul(&iota.adjoint(), &hcat(n_alg.basis(), d.carrier_dim()));
    let corner: Vec<CMat> = (0..n_alg.dim())
        .map(|i| rows.columns(i * d.carrier_dim(), d.carrier_dim()) * iota)
        .collect();
    let corner = OperatorAlgebraBasis::from_spanning(d.tower.h.dim(), &corner)?;
    let left = d.tower.h.left().expect("checked at build");
    let m_on_h = OperatorAlgebraBasis::from_spanning(d.tower.h.dim(), left.images())?;
    let corner_spans_m = span_equal(&corner, &m_on_h, 1e-8);

    let prev = level - 1;
    let w = d.embedding(level, prev)?;
    let one = identity(d.l_dim(prev));
    let alpha_unital = (d.alpha_step(prev, &one)? - identity(d.carrier_dim())).norm();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mult: f64 = 0.0;
    let mut adj: f64 = 0.0;
    for _ in 0..samples {
        let x = w.adjoint() * random_in(n_alg, &mut rng) * &w;
        let y = w.adjoint() * random_in(n_alg, &mut rng) * &w;
        let ax = d.alpha_step(prev, &x)?;
        let ay = d.alpha_step(prev, &y)?;
        let scale = x.norm() * y.norm();
        mult = mult.max((d.alpha_step(prev, &(&x * &y))? - &ax * &ay).norm() / scale.max(1.0));
        adj = adj.max((d.alpha_step(prev, &x.adjoint())? - ax.adjoint()).norm() / x.norm().max(1.0));
    }
    let mut compression: f64 = 0.0;
    for _ in 0..samples {
        let y = AlgebraElement::random(&d.tower.algebra, &mut rng);
        for n in 0..=level {
            let got = ms_moment(d, &[(n, y.clone())])?;
            let want = power(&d.tower.channel, n).apply(&y)?;
            compression = compression.max(got.distance(&want));
        }
    }
    Ok(MsChecks {
        embedding_isometry: iso,
        embedding_cocycle: cocycle,
        identifications,
        v0_commutation,
        p_in_n,
        corner_spans_m,
        alpha_unital,
        alpha_multiplicative: mult,
        alpha_adjoint: adj,
        compression,
    })
}

/// The same dilation realized on `H_N` through the unitaries `U_n : L_n → H_n`.
pub struct MsStandard {
    level: usize,
    v_top: Vec<CMat>,
    lambda_top: Vec<CMat>,
    beta_gens: Vec<CMat>,
    beta_pinvs: Vec<CMat>,
    h_dims: Vec<usize>,
    e1_dim: usize,
    algebra: Arc<MultiMatrixAlgebra>,
    h: WStarBimodule,
    r_alg: OnceLock<OperatorAlgebraBasis>,
}

impl MsStandard {
    /// Builds over `H = L²(M)` from scratch.
    pub fn build(
        m: &Arc<MultiMatrixAlgebra>,
        t: &UcpMap,
        level: usize,
        cfg: &DilationConfig,
    ) -> Result<Self> {
        let h = crate::algebra::standard_form(m.operator_basis());
        Self::from_tower(&MsTower::build(m, t, &h, level, cfg)?)
    }

    pub fn from_dilation(d: &MsDilation) -> Result<Self> {
        Self::from_tower(&d.tower)
    }

    fn from_tower(tower: &MsTower) -> Result<Self> {
        let level = tower.level;
        let mut v_top = vec![CMat::zeros(0, 0); level + 1];
        v_top[level] = identity(tower.h_dim(level));
        for m in (0..level).rev() {
            v_top[m] = &v_top[m + 1] * &tower.units[m + 1];
        }
        let lambda_top = tower
            .commutant
            .basis()
            .iter()
            .map(|x| tower.lambda(level, x))
            .collect::<Result<_>>()?;
        let mut beta_gens = Vec::new();
        let mut beta_pinvs = Vec::new();
        for m in 0..level {
            let blocks: Vec<CMat> = tower.e_bases[1]
                .iter()
                .map(|x| tower.phi(m, 1, x))
                .collect::<Result<_>>()?;
            let g = hcat(&blocks, tower.h_dim(m + 1));
            beta_pinvs.push(pinv(&g, RANK_TOL)?);
            beta_gens.push(g);
        }
        Ok(MsStandard {
            level,
            v_top,
            lambda_top,
            beta_gens,
            beta_pinvs,
            h_dims: (0..=level).map(|n| tower.h_dim(n)).collect(),
            e1_dim: tower.e_dim(1),
            algebra: tower.algebra.clone(),
            h: tower.h.clone(),
            r_alg: OnceLock::new(),
        })
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn carrier_dim(&self) -> usize {
        self.h_dims[self.level]
    }

    /// `v_{N,m} : H_m → H_N`, prepending units.
    pub fn embedding_to_top(&self, m: usize) -> Result<&CMat> {
        self.v_top.get(m).ok_or(Error::Truncation {
            index: m,
            level: self.level,
        })
    }

    /// `κ₀ = v_{N,0} = i_N`.
    pub fn kappa(&self) -> &CMat {
        &self.v_top[0]
    }

    pub fn p(&self) -> CMat {
        self.kappa() * self.kappa().adjoint()
    }

    /// `V′₀` on the basis of `M′`.
    pub fn v0_images(&self) -> &[CMat] {
        &self.lambda_top
    }

    /// `β_{m+1}(x)` for `x` on `H_m`.
    pub fn beta_step(&self, m: usize, x: &CMat) -> Result<CMat> {
        if m >= self.level {
            return Err(Error::Truncation {
                index: m + 1,
                level: self.level,
            });
        }
        if x.shape() != (self.h_dims[m], self.h_dims[m]) {
            return Err(Error::Validation(format!(
                "operator of shape {:?} on H_{m} of dimension {}",
                x.shape(),
                self.h_dims[m]
            )));
        }
        let amp = kron(&identity(self.e1_dim), x);
        Ok(&self.beta_gens[m] * amp * &self.beta_pinvs[m])
    }

    pub fn beta_power_on_m(&self, n: usize, y: &CMat) -> Result<CMat> {
        if n > self.level {
            return Err(Error::Truncation {
                index: n,
                level: self.level,
            });
        }
        let mut x = self.h.left_image(y)?;
        for m in 0..n {
            x = self.beta_step(m, &x)?;
        }
        let w = &self.v_top[n];
        Ok(w * x * w.adjoint())
    }

    /// `R = V′₀(M′)′` on `H_N`.
    pub fn r_alg(&self) -> Result<&OperatorAlgebraBasis> {
        if let Some(r) = self.r_alg.get() {
            return Ok(r);
        }
        let r = commutant(&self.lambda_top, self.carrier_dim())?;
        Ok(self.r_alg.get_or_init(|| r))
    }

    pub fn moment(&self, word: &[(usize, AlgebraElement)]) -> Result<AlgebraElement> {
        let mut prod = identity(self.carrier_dim());
        for (n, a) in word {
            prod *= self.beta_power_on_m(*n, a.data())?;
        }
        let op = self.kappa().adjoint() * prod * self.kappa();
        decode_on_h(&self.algebra, &self.h, &op)
    }
}

/// Residuals of `U_N (·) U_N*` carrying one realization to the other.
#[derive(Clone, Debug)]
pub struct StandardComparison {
    pub realization_unitarity: f64,
    pub embeddings: f64,
    pub v0: f64,
    pub projection: f64,
    pub endomorphism: f64,
    pub compression: f64,
}

impl StandardComparison {
    pub fn max(&self) -> f64 {
        [
            self.realization_unitarity,
            self.embeddings,
            self.v0,
            self.projection,
            self.endomorphism,
            self.compression,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

pub fn compare_standard(
    d: &MsDilation,
    s: &MsStandard,
    samples: usize,
    seed: u64,
) -> Result<StandardComparison> {
    let level = d.level();
    let mut unitarity: f64 = 0.0;
    let us: Vec<CMat> = (0..=level).map(|n| d.realization(n)).collect();
    for u in &us {
        unitarity = unitarity.max((u.adjoint() * u - identity(u.ncols())).norm());
        unitarity = unitarity.max((u * u.adjoint() - identity(u.nrows())).norm());
    }
    let top = &us[level];
    let mut embeddings: f64 = 0.0;
    for m in 0..=level {
        let lhs = top * d.iota_m(m) * us[m].adjoint();
        embeddings = embeddings.max((lhs - s.embedding_to_top(m)?).norm());
    }
    let mut v0: f64 = 0.0;
    for (x, target) in d.tower.commutant.basis().iter().zip(s.v0_images()) {
        v0 = v0.max((top * d.v0(x)? * top.adjoint() - target).norm());
    }
    let projection = (top * d.p() * top.adjoint() - s.p()).norm();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut endo: f64 = 0.0;
    let mut compression: f64 = 0.0;
    for _ in 0..samples {
        let y = AlgebraElement::random(&d.tower.algebra, &mut rng);
        for n in 0..=level {
            let a = top * d.alpha_power_on_m(n, y.data())? * top.adjoint();
            endo = endo.max((a - s.beta_power_on_m(n, y.data())?).norm());
            let got = s.moment(&[(n, y.clone())])?;
            compression = compression.max(got.distance(&power(&d.tower.channel, n).apply(&y)?));
        }
    }
    Ok(StandardComparison {
        realization_unitarity: unitarity,
        embeddings,
        v0,
        projection,
        endomorphism: endo,
        compression,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{make_algebra, standard_form};
    use crate::bhat_skeide::{bs_build, bs_moment};
    use crate::cp_map::random_ucp;

    fn m2(level: usize) -> MsDilation {
        let m = make_algebra(&[2]).unwrap();
        let t = random_ucp(&m, 2, 42).unwrap();
        let h = standard_form(m.operator_basis());
        ms_build(&m, &t, &h, level, &DilationConfig::default()).unwrap()
    }

    #[test]
    fn intertwiner_space_dimensions() {
        let m = make_algebra(&[2]).unwrap();
        let h = standard_form(m.operator_basis());
        let id = UcpMap::identity(&m);
        let tw = MsTower::build(&m, &id, &h, 1, &DilationConfig::default()).unwrap();
        assert_eq!(tw.e_dim(0), 4);
        assert_eq!(tw.e_dim(1), m.lin_dim());
        for x in tw.intertwiner_space(1).unwrap() {
            for y in tw.intertwiner_space(1).unwrap() {
                assert!(tw.commutant().contains(&(x.adjoint() * y), 1e-9));
            }
        }
        let x = &tw.intertwiner_space(0).unwrap()[1];
        assert!((tw.p_map(0, x).unwrap() - x).norm() < 1e-12);
    }

    #[test]
    fn identification_is_unitary_and_degenerate_cases() {
        let d = m2(2);
        let tw = d.tower();
        for (n, m) in [(0, 1), (1, 0), (1, 1), (0, 2), (2, 0)] {
            let r = tw.identification_report(n, m).unwrap();
            assert!(r.is_unitary(1e-9), "{r:?}");
        }
        let x = tw.intertwiner_space(1).unwrap()[0].clone();
        let c = tw.commutant().basis()[2].clone();
        let right = tw.identify(1, 0, &x, &c).unwrap();
        assert!((right - &x * &c).norm() < 1e-12);
        let left = tw.identify(0, 1, &c, &x).unwrap();
        assert!((left - tw.lambda(1, &c).unwrap() * &x).norm() < 1e-12);
        assert!(matches!(tw.identify(2, 1, &x, &x), Err(Error::Truncation { .. })));
    }

    #[test]
    fn structural_checks_pass_for_m2() {
        let d = m2(2);
        let checks = ms_checks(&d, 3, 7).unwrap();
        assert!(checks.passes(1e-8), "{checks:?}");
    }

    #[test]
    fn moments_agree_with_other_construction() {
        let m = make_algebra(&[2]).unwrap();
        let t = random_ucp(&m, 2, 42).unwrap();
        let h = standard_form(m.operator_basis());
        let d = ms_build(&m, &t, &h, 2, &DilationConfig::default()).unwrap();
        let b = bs_build(&m, &t, &h, 2, &DilationConfig::default()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = AlgebraElement::random(&m, &mut rng);
        let c = AlgebraElement::random(&m, &mut rng);
        let word = vec![(0, a.clone()), (1, c.clone()), (2, a.clone())];
        let lhs = ms_moment(&d, &word).unwrap();
        let rhs = bs_moment(&b, &word).unwrap();
        assert!(lhs.distance(&rhs) < 1e-8);
        let two = ms_moment(&d, &[(0, a.clone()), (1, c.clone())]).unwrap();
        assert!(two.distance(&(&a * &t.apply(&c).unwrap())) < 1e-9);
        assert!(ms_moment(&d, &[]).unwrap().distance(&AlgebraElement::identity(&m)) < 1e-10);
    }

    #[test]
    fn standard_variant_matches() {
        let d = m2(2);
        let s = MsStandard::from_dilation(&d).unwrap();
        let cmp = compare_standard(&d, &s, 2, 11).unwrap();
        assert!(cmp.max() < 1e-8, "{cmp:?}");
        let r = s.r_alg().unwrap();
        assert!(r.contains(&s.p(), 1e-8));
    }

    #[test]
    fn commutative_instance() {
        let m = make_algebra(&[1, 1]).unwrap();
        let t = UcpMap::from_stochastic(&m, &[vec![0.3, 0.7], vec![0.6, 0.4]]).unwrap();
        let h = standard_form(m.operator_basis());
        let d = ms_build(&m, &t, &h, 2, &DilationConfig::default()).unwrap();
        let checks = ms_checks(&d, 2, 5).unwrap();
        assert!(checks.passes(1e-8), "{checks:?}");
    }
}
