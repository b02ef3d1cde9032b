mod common;

use std::sync::OnceLock;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{apply, apply_power, rel, Instance, Mat};
use ucp_dilation::algebra::AlgebraElement;
use ucp_dilation::bhat_skeide::{bs_build, bs_moment, BsDilation, DilationConfig};
use ucp_dilation::hilbert_module::{gns_bimodule, module_tensor};
use ucp_dilation::muhly_solel::{compare_standard, ms_build, ms_checks, ms_moment, MsDilation, MsStandard};

const LEVEL: usize = 3;

struct Built {
    inst: Instance,
    bs: BsDilation,
    ms: MsDilation,
}

fn built() -> &'static [Built] {
    static CELL: OnceLock<Vec<Built>> = OnceLock::new();
    CELL.get_or_init(|| {
        common::acceptance_instances()
            .into_iter()
            .map(|inst| {
                let cfg = DilationConfig::default();
                let bs = bs_build(&inst.m, &inst.t, &inst.h, LEVEL, &cfg).unwrap();
                let ms = ms_build(&inst.m, &inst.t, &inst.h, LEVEL, &cfg).unwrap();
                Built { inst, bs, ms }
            })
            .collect()
    })
}

fn config(cases: u32) -> ProptestConfig {
    ProptestConfig {
        cases,
        failure_persistence: None,
        ..ProptestConfig::default()
    }
}

fn element(b: &Built, seed: u64) -> AlgebraElement {
    AlgebraElement::random(&b.inst.m, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Expected bracket of a word whose levels increase: `T^{n₁}(a₁ T^{n₂−n₁}(a₂ ⋯))`.
fn increasing_oracle(kraus: &[Mat], word: &[(usize, Mat)]) -> Mat {
    let mut acc: Option<Mat> = None;
    for i in (0..word.len()).rev() {
        let (n, a) = &word[i];
        let inner = match acc {
            None => a.clone(),
            Some(rest) => {
                let gap = word[i + 1].0 - n;
                a * apply_power(kraus, gap, &rest)
            }
        };
        acc = Some(inner);
    }
    apply_power(kraus, word[0].0, &acc.unwrap())
}

proptest! {
    #![proptest_config(config(16))]

    #[test]
    fn gns_reproduces_powers(i in 0usize..3, seed in any::<u64>()) {
        let b = &built()[i];
        let a = element(b, seed);
        let scale = a.data().norm().max(1.0);
        let gns = gns_bimodule(&b.inst.m, &b.inst.t).unwrap();
        let got = gns.reproduce(a.data()).unwrap();
        prop_assert!(rel(&got, &apply(b.inst.t.kraus(), a.data())) < 1e-10 * scale);
        for n in 0..=LEVEL {
            let e = &b.bs.modules()[n];
            let xi = b.bs.cyclic(n);
            let got = e.inner(xi, &e.left_apply(a.data(), xi).unwrap()).unwrap();
            prop_assert!(rel(&got, &apply_power(b.inst.t.kraus(), n, a.data())) < 1e-10 * scale, "n = {}", n);
        }
    }

    #[test]
    fn cyclic_vectors_compose(i in 0usize..3, m in 0usize..=2, n in 1usize..=2, seed in any::<u64>()) {
        let b = &built()[i];
        let a = element(b, seed);
        let mods = b.bs.modules();
        let t = module_tensor(&mods[m], &mods[n]).unwrap();
        let v = t.vector(b.bs.cyclic(m), b.bs.cyclic(n));
        let got = t.module.inner(&v, &t.module.left_apply(a.data(), &v).unwrap()).unwrap();
        let want = apply_power(b.inst.t.kraus(), m + n, a.data());
        prop_assert!(rel(&got, &want) < 1e-10 * a.data().norm().max(1.0));
    }

    #[test]
    fn modules_satisfy_axioms(i in 0usize..3, n in 0usize..=LEVEL, seed in any::<u64>()) {
        let b = &built()[i];
        let ax = b.bs.modules()[n].axiom_report(4, seed).unwrap();
        prop_assert!(ax.max() < 1e-9, "{:?}", ax);
        prop_assert!(ax.compatibility < 1e-10);
    }

    #[test]
    fn corner_identity_and_compression(i in 0usize..3, seed in any::<u64>()) {
        let b = &built()[i];
        let a = element(b, seed);
        let scale = a.data().norm().max(1.0);
        let one = Mat::identity(b.inst.m.ambient_dim(), b.inst.m.ambient_dim());
        for n in 0..=LEVEL {
            let jn = b.bs.j_matrix(n, a.data()).unwrap();
            for m in 0..=n {
                let jm1 = b.bs.j_matrix(m, &one).unwrap();
                let lhs = &jm1 * &jn * &jm1;
                let rhs = b.bs.j_matrix(m, &apply_power(b.inst.t.kraus(), n - m, a.data())).unwrap();
                prop_assert!((lhs - rhs).norm() < 1e-9 * scale, "m = {}, n = {}", m, n);
            }
            let iota = b.bs.iota();
            let compressed = iota.adjoint() * &jn * iota;
            let want = b.inst.h.left_image(&apply_power(b.inst.t.kraus(), n, a.data())).unwrap();
            prop_assert!((compressed - want).norm() < 1e-9 * scale);
        }
    }

    #[test]
    fn j_is_a_homomorphism(i in 0usize..3, n in 0usize..=LEVEL, s1 in any::<u64>(), s2 in any::<u64>()) {
        let b = &built()[i];
        let (x, y) = (element(b, s1), element(b, s2));
        let jx = b.bs.j_matrix(n, x.data()).unwrap();
        let jy = b.bs.j_matrix(n, y.data()).unwrap();
        let jxy = b.bs.j_matrix(n, &(x.data() * y.data())).unwrap();
        let scale = (x.data().norm() * y.data().norm()).max(1.0);
        prop_assert!((&jx * &jy - jxy).norm() < 1e-9 * scale);
        let jadj = b.bs.j_matrix(n, &x.data().adjoint()).unwrap();
        prop_assert!((jx.adjoint() - jadj).norm() < 1e-9 * x.data().norm().max(1.0));
    }

    #[test]
    fn alpha_powers_compress_to_channel_powers(i in 0usize..3, seed in any::<u64>()) {
        let b = &built()[i];
        let y = element(b, seed);
        let iota = b.ms.iota();
        for n in 0..=LEVEL {
            let an = b.ms.alpha_power_on_m(n, y.data()).unwrap();
            let got = iota.adjoint() * an * iota;
            let want = b.inst.h.left_image(&apply_power(b.inst.t.kraus(), n, y.data())).unwrap();
            prop_assert!((got - want).norm() < 1e-9 * y.data().norm().max(1.0), "n = {}", n);
        }
    }

    #[test]
    fn monotone_moments_match_oracle(i in 0usize..3, len in 1usize..=3, seed in any::<u64>()) {
        let b = &built()[i];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut levels: Vec<usize> = (0..len).map(|_| rng.random_range(0..=LEVEL)).collect();
        levels.sort_unstable();
        let word: Vec<(usize, AlgebraElement)> = levels
            .iter()
            .map(|&n| (n, AlgebraElement::random(&b.inst.m, &mut rng)))
            .collect();
        let plain: Vec<(usize, Mat)> = word.iter().map(|(n, a)| (*n, a.data().clone())).collect();
        let want = increasing_oracle(b.inst.t.kraus(), &plain);
        let scale = word.iter().map(|(_, a)| a.data().norm()).product::<f64>().max(1.0);
        let bs = bs_moment(&b.bs, &word).unwrap();
        prop_assert!(rel(bs.data(), &want) < 1e-9 * scale);
        // The adjoint word has decreasing levels.
        let reversed: Vec<(usize, AlgebraElement)> = word.iter().rev().map(|(n, a)| (*n, a.adjoint())).collect();
        let ms = ms_moment(&b.ms, &reversed).unwrap();
        prop_assert!(rel(ms.data(), &want.adjoint()) < 1e-9 * scale);
    }

    #[test]
    fn moments_agree_between_constructions(i in 0usize..3, len in 1usize..=3, seed in any::<u64>()) {
        let b = &built()[i];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let word: Vec<(usize, AlgebraElement)> = (0..len)
            .map(|_| (rng.random_range(0..=LEVEL), AlgebraElement::random(&b.inst.m, &mut rng)))
            .collect();
        let scale = word.iter().map(|(_, a)| a.data().norm()).product::<f64>().max(1.0);
        let bs = bs_moment(&b.bs, &word).unwrap();
        let ms = ms_moment(&b.ms, &word).unwrap();
        prop_assert!(bs.distance(&ms) < 1e-8 * scale);
    }
}

#[test]
fn embeddings_form_a_cocycle() {
    for b in built() {
        assert!(b.bs.embedding_residual().unwrap() < 1e-10, "{}", b.inst.name);
        let c = ms_checks(&b.ms, 6, 11).unwrap();
        assert!(c.embedding_isometry < 1e-10, "{}: {c:?}", b.inst.name);
        assert!(c.embedding_cocycle < 1e-10, "{}: {c:?}", b.inst.name);
        assert!(c.v0_commutation < 1e-10, "{}: {c:?}", b.inst.name);
        assert!(c.corner_spans_m, "{}", b.inst.name);
        assert!(c.passes(1e-9), "{}: {c:?}", b.inst.name);
        let pairs: Vec<(usize, usize)> = c.identifications.iter().map(|r| (r.n, r.m)).collect();
        for n in 0..=LEVEL {
            for m in 0..=LEVEL - n {
                assert!(pairs.contains(&(n, m)) || n == 0 || m == 0, "missing U_{{{n},{m}}}");
            }
        }
        assert!(c.identifications.iter().all(|r| r.is_unitary(1e-9)));
    }
}

#[test]
fn standard_variant_matches() {
    for b in built() {
        let s = MsStandard::from_dilation(&b.ms).unwrap();
        let c = compare_standard(&b.ms, &s, 6, 5).unwrap();
        assert!(c.max() < 1e-9, "{}: {c:?}", b.inst.name);
    }
}

#[test]
fn carrier_dims_follow_the_tower() {
    for b in built() {
        let blocks = b.inst.m.blocks();
        for n in 0..=2 {
            assert_eq!(b.ms.tower().h_dim(n), common::tower_dim(blocks, b.inst.t.kraus(), n), "{} n = {n}", b.inst.name);
        }
    }
    // ℂ² with a strictly positive transition matrix: dim Hₙ = 2ⁿ⁺¹.
    let b = &built()[0];
    for n in 0..=LEVEL {
        assert_eq!(b.ms.tower().h_dim(n), 1 << (n + 1));
    }
}
