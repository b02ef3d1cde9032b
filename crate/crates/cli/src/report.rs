//! Serializable run reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use ucp_dilation::bhat_skeide::BsDiagnostics;
use ucp_dilation::equivalence::{CheckResult, MomentTable};

use crate::spec::InstanceSpec;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckEntry {
    /// The requested check this entry belongs to.
    pub group: String,
    pub name: String,
    pub passed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub source_dim: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target_dim: Option<usize>,
    pub residuals: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl CheckEntry {
    pub fn new(group: &str, name: impl Into<String>) -> Self {
        CheckEntry {
            group: group.into(),
            name: name.into(),
            passed: true,
            source_dim: None,
            target_dim: None,
            residuals: BTreeMap::new(),
            detail: None,
        }
    }

    /// Records `value` and fails the entry unless `value < threshold`.
    pub fn bound(mut self, key: &str, value: f64, threshold: f64) -> Self {
        self.passed &= value < threshold;
        self.residuals.insert(key.into(), value);
        self
    }

    pub fn flag(mut self, key: &str, ok: bool) -> Self {
        self.passed &= ok;
        self.residuals.insert(key.into(), if ok { 0.0 } else { 1.0 });
        self
    }

    pub fn failed(group: &str, name: impl Into<String>, detail: impl Into<String>) -> Self {
        CheckEntry {
            passed: false,
            detail: Some(detail.into()),
            ..CheckEntry::new(group, name)
        }
    }

    pub fn from_result(group: &str, r: CheckResult) -> Self {
        CheckEntry {
            group: group.into(),
            name: r.name,
            passed: r.passed,
            source_dim: (r.source_dim > 0).then_some(r.source_dim),
            target_dim: (r.target_dim > 0).then_some(r.target_dim),
            residuals: r.residuals.into_iter().collect(),
            detail: r.detail,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MomentRow {
    pub word: Vec<(usize, usize)>,
    /// `[re, im]` coordinates on the matrix-unit basis.
    pub bs: Vec<[f64; 2]>,
    pub ms: Vec<[f64; 2]>,
    pub difference: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MomentReport {
    pub threshold: f64,
    pub max_difference: f64,
    pub passed: bool,
    pub rows: Vec<MomentRow>,
}

impl MomentReport {
    pub fn new(table: MomentTable, threshold: f64) -> Self {
        let pairs = |v: &[ucp_dilation::C64]| v.iter().map(|z| [z.re, z.im]).collect();
        MomentReport {
            threshold,
            max_difference: table.max_difference,
            passed: table.max_difference < threshold,
            rows: table
                .entries
                .iter()
                .map(|e| MomentRow {
                    word: e.word.clone(),
                    bs: pairs(&e.bs),
                    ms: pairs(&e.ms),
                    difference: e.difference,
                })
                .collect(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Diagnostics {
    pub bs_carrier_dim: usize,
    pub bs_generated_dim: usize,
    pub bs_contains_all_j: bool,
    pub bs_corner_equals_j0: bool,
    pub central_support_rank: usize,
    pub central_support_is_projection: bool,
    /// `c(p) = 1` as observed; reported, never asserted.
    pub central_support_is_identity: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ms_generated_dim: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gns_cyclic_span: Option<usize>,
}

impl Diagnostics {
    pub fn from_bs(d: &BsDiagnostics) -> Self {
        Diagnostics {
            bs_carrier_dim: d.carrier_dim,
            bs_generated_dim: d.generated_dim,
            bs_contains_all_j: d.contains_all_j,
            bs_corner_equals_j0: d.corner_equals_j0,
            central_support_rank: d.central_support_rank,
            central_support_is_projection: d.central_support_is_projection,
            central_support_is_identity: d.central_support_is_identity,
            ms_generated_dim: None,
            gns_cyclic_span: None,
        }
    }
}

/// Dimensions of every space in both truncations, indexed by level.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct DimsTable {
    pub level: usize,
    pub gns_module: usize,
    /// `carrier(E_n)`, `n = 0..=N`.
    pub e_carriers: Vec<usize>,
    /// `H_n`, `n = 0..=N` (`H_0 = H`).
    pub h_n: Vec<usize>,
    /// `E(n)`, `n = 0..=N` (`E(0) = M′`).
    pub intertwiners: Vec<usize>,
    /// `L_n`, `n = 0..=N`.
    pub l_n: Vec<usize>,
    /// `K_N`.
    pub k_top: usize,
}

impl DimsTable {
    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "E(M,T)          {}", self.gns_module);
        let _ = writeln!(s, "{:<4}{:>12}{:>8}{:>8}{:>8}", "n", "carrier E_n", "H_n", "E(n)", "L_n");
        for n in 0..=self.level {
            let _ = writeln!(
                s,
                "{:<4}{:>12}{:>8}{:>8}{:>8}",
                n, self.e_carriers[n], self.h_n[n], self.intertwiners[n], self.l_n[n]
            );
        }
        let _ = writeln!(s, "K_{}             {}", self.level, self.k_top);
        s
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunReport {
    pub instance: InstanceSpec,
    pub checks: Vec<CheckEntry>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub moments: Option<MomentReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<Diagnostics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dims: Option<DimsTable>,
    pub passed: bool,
    /// Seconds per check group; excluded from [`RunReport::numerical_json`].
    pub timing: BTreeMap<String, f64>,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// The report without timing, for reproducibility comparisons.
    pub fn numerical_json(&self) -> String {
        let mut v = serde_json::to_value(self).expect("report serializes");
        if let Some(obj) = v.as_object_mut() {
            obj.remove("timing");
        }
        serde_json::to_string(&v).expect("value serializes")
    }

    pub fn group_passed(&self, group: &str) -> bool {
        self.checks.iter().filter(|c| c.group == group).all(|c| c.passed)
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let mut groups: Vec<&str> = Vec::new();
        for c in &self.checks {
            if !groups.contains(&c.group.as_str()) {
                groups.push(&c.group);
            }
        }
        for g in groups {
            let entries: Vec<&CheckEntry> = self.checks.iter().filter(|c| c.group == g).collect();
            let failed = entries.iter().filter(|c| !c.passed).count();
            let worst = entries
                .iter()
                .flat_map(|c| c.residuals.values())
                .fold(0.0_f64, |m, v| m.max(*v));
            let t = self.timing.get(g).copied().unwrap_or(0.0);
            let _ = writeln!(
                s,
                "{} {g:<22} {:>3} entries, max residual {worst:.2e} ({t:.2}s)",
                if failed == 0 { "PASS" } else { "FAIL" },
                entries.len()
            );
            for c in entries.iter().filter(|c| !c.passed) {
                let _ = writeln!(s, "       failed: {} {}", c.name, c.detail.as_deref().unwrap_or(""));
            }
        }
        if let Some(m) = &self.moments {
            let _ = writeln!(
                s,
                "{} moments {:>18} words, max difference {:.2e} (threshold {:.0e})",
                if m.passed { "PASS" } else { "FAIL" },
                m.rows.len(),
                m.max_difference,
                m.threshold
            );
        }
        if let Some(d) = &self.diagnostics {
            let _ = writeln!(
                s,
                "diagnostics: dim N = {} on K_N of dim {}, c(p) = 1: {}",
                d.bs_generated_dim, d.bs_carrier_dim, d.central_support_is_identity
            );
        }
        let _ = writeln!(s, "overall: {}", if self.passed { "PASS" } else { "FAIL" });
        s
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ErrorReport {
    pub error: String,
    pub message: String,
}
