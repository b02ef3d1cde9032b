mod common;

use std::sync::Arc;

use num_complex::Complex64;
use proptest::prelude::*;

use common::{tower_dim, Mat};
use ucp_dilation::algebra::{make_algebra, standard_form, OperatorAlgebraBasis};
use ucp_dilation::bhat_skeide::DilationConfig;
use ucp_dilation::cp_map::{random_ucp, UcpMap};
use ucp_dilation::equivalence::{
    all_basis_words, carrier_witnesses, fact_identities, hom_correspondence, intertwiner_bimodule,
    truncation_stability, verify_commutant_power, verify_gns_absorption, verify_gns_square,
    verify_iterated_absorption,
};
use ucp_dilation::muhly_solel::MsTower;
use ucp_dilation::wstar::{find_bimodule_isomorphism, verify_isomorphism, Action, IsomorphismWitness, WStarBimodule};

fn assert_passes(w: &IsomorphismWitness, what: &str) {
    assert_eq!(w.source_dim, w.target_dim, "{what}");
    assert!(w.verifies(1e-9), "{what}: {:?}", w.residuals);
    let r = &w.residuals;
    for v in [r.isometry, r.surjectivity, r.left_intertwining, r.right_intertwining] {
        assert!(v < 1e-9, "{what}: {r:?}");
    }
}

#[test]
fn relative_tensor_identities() {
    for inst in common::acceptance_instances() {
        let checks = fact_identities(&inst.m, &inst.t, 1e-9);
        assert!(checks.len() >= 5);
        for c in &checks {
            assert!(c.passed, "{} / {}: {:?} {:?}", inst.name, c.name, c.residuals, c.detail);
            assert!(c.max_residual() < 1e-9);
        }
    }
}

#[test]
fn gns_isomorphisms_on_acceptance_instances() {
    for inst in common::acceptance_instances() {
        let (blocks, kraus) = (inst.m.blocks(), inst.t.kraus());
        let w = verify_gns_square(&inst.m, &inst.t).unwrap();
        assert_passes(&w, inst.name);
        assert_eq!(w.source_dim, tower_dim(blocks, kraus, 2), "{}", inst.name);

        let w = verify_gns_absorption(&inst.m, &inst.t, &inst.h).unwrap();
        assert_passes(&w, inst.name);
        assert_eq!(w.source_dim, tower_dim(blocks, kraus, 1), "{}", inst.name);

        assert_passes(&verify_commutant_power(&inst.m, &inst.t, &inst.h, 2, 1e-9).unwrap(), inst.name);

        for n in 1..=3 {
            let it = verify_iterated_absorption(&inst.m, &inst.t, &inst.h, n, 12, 3).unwrap();
            assert_passes(&it.witness, inst.name);
            assert_eq!(it.witness.target_dim, tower_dim(blocks, kraus, n), "{} n = {n}", inst.name);
            assert!(it.coherence < 1e-8, "{} n = {n}: {}", inst.name, it.coherence);
        }
    }
}

#[test]
fn module_chain_and_intertwiners() {
    let cfg = DilationConfig::default();
    for inst in common::acceptance_instances() {
        let ws = carrier_witnesses(&inst.m, &inst.t, 3).unwrap();
        assert_eq!(ws.len(), 3);
        for (i, w) in ws.iter().enumerate() {
            assert_passes(w, inst.name);
            assert_eq!(w.target_dim, tower_dim(inst.m.blocks(), inst.t.kraus(), i + 1));
        }
        let tower = MsTower::build(&inst.m, &inst.t, &inst.h, 3, &cfg).unwrap();
        for n in 1..=3 {
            // Over L²(M), Hom_{M′}(H, Hₙ) has the dimension of Hₙ itself.
            let e = intertwiner_bimodule(&tower, n).unwrap();
            assert_eq!(e.dim(), tower_dim(inst.m.blocks(), inst.t.kraus(), n), "{} n = {n}", inst.name);
            assert_passes(&hom_correspondence(&tower, n, 1e-9).unwrap(), inst.name);
        }
    }
}

#[test]
fn truncation_is_stable_on_commutative_instances() {
    let cfg = DilationConfig::default();
    let base = common::c2_uniform();
    let m = base.m.clone();
    let skewed = UcpMap::from_stochastic(&m, &[vec![0.9, 0.1], vec![0.3, 0.7]]).unwrap();
    let words = all_basis_words(m.lin_dim(), 3, 3);
    for t in [base.t, skewed] {
        let worst = truncation_stability(&m, &t, &base.h, 3, &words, &cfg).unwrap();
        assert!(worst < 1e-8, "{worst}");
    }
}

#[test]
fn scaled_map_fails_isometry() {
    let m = make_algebra(&[2]).unwrap();
    let l2 = standard_form(m.operator_basis());
    let id = Mat::identity(4, 4);
    let w = verify_isomorphism(&id, &(&id * Complex64::new(2.0, 0.0)), &l2, &l2).unwrap();
    assert!((w.residuals.isometry - 3.0).abs() < 1e-12);
    assert!(!w.verifies(1e-9));
}

#[test]
fn non_isomorphic_bimodules_are_not_matched() {
    let c2 = make_algebra(&[1, 1]).unwrap();
    let l2 = standard_form(c2.operator_basis());
    assert!(find_bimodule_isomorphism(&l2, &l2.direct_sum(&l2).unwrap(), 1e-9).unwrap().is_none());
    // Same carrier and left action, right action twisted by the flip of ℂ².
    let ops: Arc<OperatorAlgebraBasis> = c2.operator_basis().clone();
    let right = l2.right().unwrap();
    let swapped = vec![right.images()[1].clone(), right.images()[0].clone()];
    let twisted = WStarBimodule::new(
        2,
        l2.left().cloned(),
        Some(Action::new(ops, swapped, true)),
        "twisted",
    )
    .unwrap();
    assert!(find_bimodule_isomorphism(&l2, &twisted, 1e-9).unwrap().is_none());
    assert!(find_bimodule_isomorphism(&l2, &l2, 1e-9).unwrap().is_some());
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn passing_witnesses_have_small_residuals(r in 1usize..=3, doubled in any::<bool>(), seed in any::<u64>()) {
        let m = make_algebra(&[2]).unwrap();
        let t = random_ucp(&m, r, seed).unwrap();
        let l2 = standard_form(m.operator_basis());
        let h = if doubled { l2.direct_sum(&l2).unwrap() } else { l2 };
        let ws = [
            verify_gns_square(&m, &t).unwrap(),
            verify_gns_absorption(&m, &t, &h).unwrap(),
            verify_iterated_absorption(&m, &t, &h, 2, 4, seed).unwrap().witness,
        ];
        for w in &ws {
            prop_assert!(w.verifies(1e-9));
            prop_assert!(w.residuals.max() < 1e-9);
            prop_assert_eq!(w.source_dim, w.target_dim);
        }
        prop_assert_eq!(ws[0].source_dim, tower_dim(&[2], t.kraus(), 2));
    }
}
