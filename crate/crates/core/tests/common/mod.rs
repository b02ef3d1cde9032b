//! Shared instances and test-side oracles.
//!
//! The oracles recompute quantities from the Kraus family alone with plain
//! nalgebra, so they do not share code paths with the library.

#![allow(dead_code)]

use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use ucp_dilation::algebra::{make_algebra, standard_form, MultiMatrixAlgebra};
use ucp_dilation::cp_map::{random_ucp, UcpMap};
use ucp_dilation::wstar::WStarBimodule;

pub type Mat = DMatrix<Complex64>;

pub struct Instance {
    pub name: &'static str,
    pub m: Arc<MultiMatrixAlgebra>,
    pub t: UcpMap,
    pub h: WStarBimodule,
}

fn with_l2(name: &'static str, m: Arc<MultiMatrixAlgebra>, t: UcpMap) -> Instance {
    let h = standard_form(m.operator_basis());
    Instance { name, m, t, h }
}

pub fn c2_uniform() -> Instance {
    let m = make_algebra(&[1, 1]).unwrap();
    let t = UcpMap::from_stochastic(&m, &[vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
    with_l2("C^2 uniform", m, t)
}

pub fn m2_random(seed: u64) -> Instance {
    let m = make_algebra(&[2]).unwrap();
    let t = random_ucp(&m, 2, seed).unwrap();
    with_l2("M_2 random", m, t)
}

/// Kraus family on `ℂ ⊕ M₂ ⊂ M₃` that mixes the two blocks.
pub fn c_plus_m2() -> Instance {
    let m = make_algebra(&[1, 2]).unwrap();
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let unit = |i: usize, j: usize| {
        let mut k = Mat::zeros(3, 3);
        k[(i, j)] = Complex64::new(s, 0.0);
        k
    };
    let mut k0 = Mat::zeros(3, 3);
    k0[(0, 0)] = Complex64::new(s, 0.0);
    k0[(1, 2)] = Complex64::new(s, 0.0);
    k0[(2, 1)] = Complex64::new(s, 0.0);
    let t = UcpMap::new(&m, vec![k0, unit(1, 0), unit(0, 1), unit(0, 2)]).unwrap();
    with_l2("C+M_2", m, t)
}

pub fn acceptance_instances() -> Vec<Instance> {
    vec![c2_uniform(), m2_random(42), c_plus_m2()]
}

/// `Σ k* x k`.
pub fn apply(kraus: &[Mat], x: &Mat) -> Mat {
    kraus
        .iter()
        .fold(Mat::zeros(x.nrows(), x.ncols()), |acc, k| acc + k.adjoint() * x * k)
}

/// `Tⁿ(x)` by repeated application.
pub fn apply_power(kraus: &[Mat], n: usize, x: &Mat) -> Mat {
    (0..n).fold(x.clone(), |y, _| apply(kraus, &y))
}

/// Matrix units of each block, embedded in the ambient matrix algebra.
pub fn matrix_units(blocks: &[usize]) -> Vec<Mat> {
    let d: usize = blocks.iter().sum();
    let mut out = Vec::new();
    let mut off = 0;
    for &n in blocks {
        for i in 0..n {
            for j in 0..n {
                let mut e = Mat::zeros(d, d);
                e[(off + i, off + j)] = Complex64::new(1.0, 0.0);
                out.push(e);
            }
        }
        off += n;
    }
    out
}

/// `⊕_k Σ_{ij} E_ij ⊗ T(e_ij)`, each block compressed to its own corner.
pub fn choi_blocks(blocks: &[usize], kraus: &[Mat]) -> Vec<Mat> {
    let d: usize = blocks.iter().sum();
    let mut out = Vec::new();
    let mut off = 0;
    for &n in blocks {
        let mut c = Mat::zeros(n * d, n * d);
        for i in 0..n {
            for j in 0..n {
                let mut e = Mat::zeros(d, d);
                e[(off + i, off + j)] = Complex64::new(1.0, 0.0);
                let img = apply(kraus, &e);
                c.view_mut((i * d, j * d), (d, d)).copy_from(&img);
            }
        }
        out.push(c);
        off += n;
    }
    out
}

pub fn min_eigenvalue(h: &Mat) -> f64 {
    let sym = (h + h.adjoint()) * Complex64::new(0.5, 0.0);
    SymmetricEigen::new(sym).eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
}

pub fn numerical_rank(g: &Mat) -> usize {
    let sv = g.clone().svd(false, false).singular_values;
    let top = sv.iter().cloned().fold(0.0, f64::max);
    sv.iter().filter(|&&s| s > 1e-9 * top.max(1.0)).count()
}

/// `dim Hₙ` for `H = L²(M)`: the rank of the Gram matrix of
/// `x₁ ⊗ … ⊗ xₙ ⊗ b` over matrix units, with
/// `(x⊗ξ, y⊗η) = (ξ, T(x*y)η)` unfolded from the left.
pub fn tower_dim(blocks: &[usize], kraus: &[Mat], n: usize) -> usize {
    let units = matrix_units(blocks);
    let mut words: Vec<Vec<usize>> = vec![vec![]];
    for _ in 0..n {
        words = words
            .into_iter()
            .flat_map(|w| {
                (0..units.len()).map(move |a| {
                    let mut v = w.clone();
                    v.push(a);
                    v
                })
            })
            .collect();
    }
    let gens: Vec<(usize, usize)> = (0..words.len())
        .flat_map(|w| (0..units.len()).map(move |b| (w, b)))
        .collect();
    let mut g = Mat::zeros(gens.len(), gens.len());
    for (r, &(wx, bx)) in gens.iter().enumerate() {
        for (s, &(wy, by)) in gens.iter().enumerate() {
            let mut z = Mat::identity(units[0].nrows(), units[0].nrows());
            for (&x, &y) in words[wx].iter().zip(&words[wy]) {
                z = apply(kraus, &(units[x].adjoint() * z * &units[y]));
            }
            g[(r, s)] = (units[bx].adjoint() * z * &units[by]).trace();
        }
    }
    numerical_rank(&g)
}

/// `‖a − b‖_F / max(1, ‖b‖_F)`.
pub fn rel(a: &Mat, b: &Mat) -> f64 {
    (a - b).norm() / b.norm().max(1.0)
}
