//! Orchestration of the checks on one instance.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use ucp_dilation::algebra::{make_algebra, AlgebraElement};
use ucp_dilation::bhat_skeide::{bs_build, bs_diagnostics, bs_moment, BsDilation};
use ucp_dilation::cp_map::{choi_validate, power, random_ucp};
use ucp_dilation::equivalence::{
    carrier_witnesses, fact_identities, hom_correspondence, moment_table, truncation_stability,
    verify_commutant_power, verify_gns_absorption, verify_gns_square, verify_iterated_absorption,
    CheckResult, MomentEvaluator,
};
use ucp_dilation::hilbert_module::gns_bimodule;
use ucp_dilation::linalg::{identity, op_norm};
use ucp_dilation::muhly_solel::{compare_standard, ms_build, ms_checks, MsDilation, MsStandard};
use ucp_dilation::{Error, Result};

use crate::report::{CheckEntry, Diagnostics, DimsTable, MomentReport, RunReport};
use crate::spec::{AlgebraSpec, ChannelSpec, ComplexMatrix, Instance, InstanceSpec};
use crate::CliError;

const SAMPLE_SEED: u64 = 0x5eed;
const RANDOM_ELEMENTS: usize = 20;
const DILATION_SAMPLES: usize = 10;

/// Both truncations of one instance, built once and shared by all checks.
pub struct Dilations {
    pub bs: BsDilation,
    pub ms: MsDilation,
}

impl Dilations {
    pub fn build(inst: &Instance) -> Result<Self> {
        let bs = bs_build(&inst.algebra, &inst.channel, &inst.h, inst.spec.level, &inst.cfg)?;
        let ms = ms_build(&inst.algebra, &inst.channel, &inst.h, inst.spec.level, &inst.cfg)?;
        Ok(Dilations { bs, ms })
    }

    pub fn dims(&self) -> DimsTable {
        let level = self.bs.level();
        let tower = self.ms.tower();
        DimsTable {
            level,
            gns_module: self.bs.gns().module.dim(),
            e_carriers: self.bs.modules().iter().map(|e| e.dim()).collect(),
            h_n: (0..=level).map(|n| tower.h_dim(n)).collect(),
            intertwiners: (0..=level).map(|n| tower.e_dim(n)).collect(),
            l_n: (0..=level).map(|n| self.ms.l_dim(n)).collect(),
            k_top: self.bs.carrier_dim(),
        }
    }
}

fn needs_dilations(checks: &[String]) -> bool {
    checks.iter().any(|c| !matches!(c.as_str(), "ucp" | "relative_tensor"))
}

/// Runs every requested check; failures are recorded, never propagated.
///
/// Only input problems are errors: an invalid spec, a channel that is not
/// UCP, or a truncation that exceeds the dimension cap.
pub fn run_verify(spec: &InstanceSpec) -> std::result::Result<RunReport, CliError> {
    let inst = spec.instantiate()?;
    let mut timing = BTreeMap::new();
    let start = Instant::now();
    let dil = if needs_dilations(&inst.checks) {
        Some(Dilations::build(&inst)?)
    } else {
        None
    };
    timing.insert("build".to_string(), start.elapsed().as_secs_f64());
    let mut report = RunReport {
        instance: inst.spec.clone(),
        checks: Vec::new(),
        moments: None,
        diagnostics: None,
        dims: dil.as_ref().map(Dilations::dims),
        passed: true,
        timing,
    };
    for check in &inst.checks {
        let start = Instant::now();
        let outcome = run_check(check, &inst, dil.as_ref(), &mut report);
        if let Err(e) = outcome {
            report.checks.push(CheckEntry::failed(check, check.as_str(), e.to_string()));
        }
        report.timing.insert(check.clone(), start.elapsed().as_secs_f64());
    }
    report.passed = report.checks.iter().all(|c| c.passed)
        && report.moments.as_ref().is_none_or(|m| m.passed);
    Ok(report)
}

fn run_check(check: &str, inst: &Instance, dil: Option<&Dilations>, report: &mut RunReport) -> Result<()> {
    let tol = inst.spec.tol;
    let dil = || dil.expect("built for every check beyond ucp and relative_tensor");
    let out = &mut report.checks;
    match check {
        "ucp" => out.push(ucp_entry(inst)?),
        "relative_tensor" => out.extend(
            fact_identities(&inst.algebra, &inst.channel, tol)
                .into_iter()
                .map(|r| CheckEntry::from_result(check, r)),
        ),
        "gns" => {
            let (entries, span) = gns_entries(inst, &dil().bs)?;
            out.extend(entries);
            report.diagnostics.get_or_insert_with(Diagnostics::default).gns_cyclic_span = Some(span);
        }
        "bhat_skeide" => {
            let d = &dil().bs;
            out.push(bs_entry(inst, d)?);
            let diag = bs_diagnostics(d)?;
            let span = report.diagnostics.as_ref().and_then(|x| x.gns_cyclic_span);
            let ms_dim = report.diagnostics.as_ref().and_then(|x| x.ms_generated_dim);
            report.diagnostics = Some(Diagnostics {
                gns_cyclic_span: span,
                ms_generated_dim: ms_dim,
                ..Diagnostics::from_bs(&diag)
            });
        }
        "muhly_solel" => {
            let d = &dil().ms;
            let c = ms_checks(d, DILATION_SAMPLES, SAMPLE_SEED)?;
            let mut e = CheckEntry::new(check, "structure")
                .bound("embedding_isometry", c.embedding_isometry, tol)
                .bound("embedding_cocycle", c.embedding_cocycle, tol)
                .bound("v0_commutation", c.v0_commutation, tol)
                .bound("p_in_n", c.p_in_n, tol)
                .flag("corner_spans_m", c.corner_spans_m)
                .bound("alpha_unital", c.alpha_unital, tol)
                .bound("alpha_multiplicative", c.alpha_multiplicative, tol)
                .bound("alpha_adjoint", c.alpha_adjoint, tol)
                .bound("compression", c.compression, tol);
            e.target_dim = Some(d.carrier_dim());
            out.push(e);
            for r in &c.identifications {
                let mut e = CheckEntry::new(check, format!("U_{{{},{}}} unitary", r.n, r.m))
                    .flag("unitary", r.is_unitary(tol));
                e.residuals.insert("gram_defect".into(), r.gram_defect);
                e.residuals.insert("outside_residual".into(), r.outside_residual);
                e.target_dim = Some(r.target_dim);
                out.push(e);
            }
            report.diagnostics.get_or_insert_with(Diagnostics::default).ms_generated_dim =
                Some(d.n_alg()?.dim());
        }
        "standard_variant" => {
            let d = &dil().ms;
            let s = MsStandard::from_dilation(d)?;
            let c = compare_standard(d, &s, DILATION_SAMPLES, SAMPLE_SEED)?;
            let mut e = CheckEntry::new(check, "U_n conjugation")
                .bound("realization_unitarity", c.realization_unitarity, tol)
                .bound("embeddings", c.embeddings, tol)
                .bound("v0", c.v0, tol)
                .bound("projection", c.projection, tol)
                .bound("endomorphism", c.endomorphism, tol)
                .bound("compression", c.compression, tol);
            e.target_dim = Some(s.carrier_dim());
            out.push(e);
        }
        "isomorphisms" => out.extend(isomorphism_entries(inst)),
        "equivalence" => {
            let d = dil();
            match carrier_witnesses(&inst.algebra, &inst.channel, inst.spec.level) {
                Ok(ws) => {
                    for (i, w) in ws.into_iter().enumerate() {
                        let name = format!("carrier(E_{0}) = H_{0}(M,T)", i + 1);
                        out.push(CheckEntry::from_result(check, CheckResult::from_witness(name, Ok(w), tol)));
                    }
                }
                Err(e) => out.push(CheckEntry::failed(check, "carrier(E_n) = H_n(M,T)", e.to_string())),
            }
            for n in 1..=inst.spec.level {
                let name = format!("E({n}) = H* (x) H_{n}(M,T) (x) H");
                let w = hom_correspondence(d.ms.tower(), n, tol);
                out.push(CheckEntry::from_result(check, CheckResult::from_witness(name, w, tol)));
            }
            let table = moment_table(
                &MomentEvaluator::from_bs(&d.bs, &inst.h)?,
                &MomentEvaluator::from_ms(&d.ms)?,
                &inst.words,
            )?;
            report.moments = Some(MomentReport::new(table, moment_threshold(tol)));
        }
        "truncation_stability" => {
            let worst = truncation_stability(
                &inst.algebra,
                &inst.channel,
                &inst.h,
                inst.spec.level,
                &inst.words,
                &inst.cfg,
            )?;
            out.push(
                CheckEntry::new(check, format!("levels {} and {}", inst.spec.level, inst.spec.level + 1))
                    .bound("max_change", worst, moment_threshold(tol)),
            );
        }
        other => return Err(Error::Validation(format!("unknown check {other}"))),
    }
    Ok(())
}

/// Moments are products of several truncated operators; their agreement
/// is tested one decade looser than the per-identity tolerance.
pub fn moment_threshold(tol: f64) -> f64 {
    10.0 * tol
}

fn ucp_entry(inst: &Instance) -> Result<CheckEntry> {
    let r = choi_validate(&inst.channel, inst.spec.tol)?;
    let tol = inst.spec.tol;
    let mut e = CheckEntry::new("ucp", "unital and completely positive")
        .bound("unitality", r.unitality_residual, tol)
        .bound("closure", r.closure_residual, tol)
        .bound("choi_psd", r.psd_residual, tol);
    e.detail = Some(format!("Choi rank {}, smallest Choi eigenvalue {:.3e}", r.choi_rank, r.min_eigenvalue));
    Ok(e)
}

fn gns_entries(inst: &Instance, bs: &BsDilation) -> Result<(Vec<CheckEntry>, usize)> {
    let m = &inst.algebra;
    let t = &inst.channel;
    let tol = inst.spec.tol;
    let mut rng = ChaCha8Rng::seed_from_u64(SAMPLE_SEED);
    let samples: Vec<AlgebraElement> = (0..RANDOM_ELEMENTS).map(|_| AlgebraElement::random(m, &mut rng)).collect();
    let gns = gns_bimodule(m, t)?;
    let mut worst: f64 = 0.0;
    for a in &samples {
        let got = gns.reproduce(a.data())?;
        worst = worst.max(op_norm(&(got - t.apply_matrix(a.data()))) / op_norm(a.data()).max(1.0));
    }
    let span = gns.cyclic_span_rank()?;
    let mut first = CheckEntry::new("gns", "(xi, a xi) = T(a)").bound("reproduction", worst, tol);
    first.target_dim = Some(gns.module.dim());
    let mut out = vec![first];
    // (E_n, ξ_n) against the T^n oracle.
    for n in 0..=bs.level() {
        let tn = power(t, n);
        let e = &bs.modules()[n];
        let xi = bs.cyclic(n);
        let mut worst: f64 = 0.0;
        for a in &samples {
            let got = e.inner(xi, &e.left_apply(a.data(), xi)?)?;
            worst = worst.max(op_norm(&(got - tn.apply_matrix(a.data()))) / op_norm(a.data()).max(1.0));
        }
        let mut entry = CheckEntry::new("gns", format!("(E_{n}, xi_{n}) reproduces T^{n}")).bound("reproduction", worst, tol);
        entry.target_dim = Some(e.dim());
        out.push(entry);
    }
    Ok((out, span))
}

fn bs_entry(inst: &Instance, d: &BsDilation) -> Result<CheckEntry> {
    let tol = inst.spec.tol;
    let m = &inst.algebra;
    let level = d.level();
    let mut rng = ChaCha8Rng::seed_from_u64(SAMPLE_SEED ^ 1);
    let one = identity(m.ambient_dim());
    let j1: Vec<_> = (0..=level).map(|n| d.j_matrix(n, &one)).collect::<Result<_>>()?;
    let mut corner: f64 = 0.0;
    let mut compression: f64 = 0.0;
    for _ in 0..DILATION_SAMPLES {
        let a = AlgebraElement::random(m, &mut rng);
        let scale = op_norm(a.data()).max(1.0);
        for n in 0..=level {
            let jn = d.j_matrix(n, a.data())?;
            for mm in 0..=n {
                let lhs = &j1[mm] * &jn * &j1[mm];
                let ta = power(&inst.channel, n - mm).apply(&a)?;
                let rhs = d.j_matrix(mm, ta.data())?;
                corner = corner.max(op_norm(&(lhs - rhs)) / scale);
            }
            let got = bs_moment(d, &[(n, a.clone())])?;
            let want = power(&inst.channel, n).apply(&a)?;
            compression = compression.max(got.distance(&want) / scale);
        }
    }
    let p = d.p()?;
    let p_proj = op_norm(&(&p * &p - &p));
    let iota = d.iota();
    let iso = op_norm(&(iota.adjoint() * iota - identity(iota.ncols())));
    let mut e = CheckEntry::new("bhat_skeide", "dilation identities")
        .bound("corner_identity", corner, tol)
        .bound("compression", compression, tol)
        .bound("embeddings", d.embedding_residual()?, tol)
        .bound("p_projection", p_proj, tol)
        .bound("iota_isometry", iso, tol);
    e.target_dim = Some(d.carrier_dim());
    Ok(e)
}

fn isomorphism_entries(inst: &Instance) -> Vec<CheckEntry> {
    let (m, t, h, tol) = (&inst.algebra, &inst.channel, &inst.h, inst.spec.tol);
    let g = "isomorphisms";
    let mut out = vec![
        CheckEntry::from_result(g, CheckResult::from_witness("H(M,T) (x) H(M,T) = M (x)_T H(M,T)", verify_gns_square(m, t), tol)),
        CheckEntry::from_result(g, CheckResult::from_witness("H(M,T) (x) H = M (x)_T H", verify_gns_absorption(m, t, h), tol)),
    ];
    let n = inst.spec.level.min(2);
    out.push(CheckEntry::from_result(
        g,
        CheckResult::from_witness(format!("H'_1 power {n} = H'_{n}"), verify_commutant_power(m, t, h, n, tol), tol),
    ));
    for n in 1..=inst.spec.level {
        let name = format!("H(M,T)^{n} (x) H = H_{n}");
        match verify_iterated_absorption(m, t, h, n, 32, SAMPLE_SEED) {
            Ok(c) => {
                let mut e = CheckEntry::from_result(g, CheckResult::from_witness(name, Ok(c.witness), tol));
                e = e.bound("coherence", c.coherence, moment_threshold(tol));
                out.push(e);
            }
            Err(e) => out.push(CheckEntry::failed(g, name, e.to_string())),
        }
    }
    out
}

/// A random instance per `random_ucp`, verified with every default check.
pub fn random_spec(blocks: &[usize], kraus: usize, seed: u64, level: usize) -> std::result::Result<InstanceSpec, CliError> {
    let m = make_algebra(blocks)?;
    if !m.is_factor() && !m.is_commutative() {
        return Err(CliError::Schema(format!(
            "random channels need a single block or all blocks of size 1, got {blocks:?}"
        )));
    }
    let t = random_ucp(&m, kraus, seed)?;
    Ok(InstanceSpec {
        algebra: AlgebraSpec { blocks: blocks.to_vec() },
        channel: ChannelSpec::Kraus(t.kraus().iter().map(ComplexMatrix::from_matrix).collect()),
        module: crate::spec::ModuleChoice::Standard,
        level,
        tol: crate::spec::DEFAULT_TOL,
        checks: None,
        moments: None,
        dim_cap: crate::spec::DEFAULT_DIM_CAP,
    })
}

pub fn run_random(blocks: &[usize], kraus: usize, seed: u64, level: usize) -> std::result::Result<RunReport, CliError> {
    run_verify(&random_spec(blocks, kraus, seed, level)?)
}

/// Dimensions of all spaces up to the truncation level, no checks.
pub fn run_dims(spec: &InstanceSpec) -> std::result::Result<DimsTable, CliError> {
    let inst = spec.instantiate()?;
    Ok(Dilations::build(&inst)?.dims())
}

