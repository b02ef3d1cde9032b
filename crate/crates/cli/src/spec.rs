//! The JSON instance format and its translation into core objects.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use ucp_dilation::algebra::{standard_form, MultiMatrixAlgebra};
use ucp_dilation::bhat_skeide::DilationConfig;
use ucp_dilation::cp_map::{LinearMap, UcpMap};
use ucp_dilation::equivalence::{all_basis_words, Word};
use ucp_dilation::wstar::WStarBimodule;
use ucp_dilation::{CMat, C64};

use crate::CliError;

pub const DEFAULT_TOL: f64 = 1e-9;
pub const DEFAULT_DIM_CAP: usize = 4096;
pub const DEFAULT_MAX_LEN: usize = 2;

/// Every check `run_verify` knows, in execution order.
pub const ALL_CHECKS: &[&str] = &[
    "ucp",
    "relative_tensor",
    "gns",
    "bhat_skeide",
    "muhly_solel",
    "standard_variant",
    "isomorphisms",
    "equivalence",
    "truncation_stability",
];

/// Run when the spec does not list checks; `truncation_stability` builds a
/// second, larger truncation and is opt-in.
pub const DEFAULT_CHECKS: &[&str] = &[
    "ucp",
    "relative_tensor",
    "gns",
    "bhat_skeide",
    "muhly_solel",
    "standard_variant",
    "isomorphisms",
    "equivalence",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgebraSpec {
    pub blocks: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComplexMatrix {
    pub re: Vec<Vec<f64>>,
    pub im: Vec<Vec<f64>>,
}

impl ComplexMatrix {
    pub fn from_matrix(m: &CMat) -> Self {
        let rows = |f: fn(&C64) -> f64| -> Vec<Vec<f64>> {
            (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| f(&m[(i, j)])).collect()).collect()
        };
        ComplexMatrix {
            re: rows(|z| z.re),
            im: rows(|z| z.im),
        }
    }

    pub fn to_matrix(&self) -> Result<CMat, CliError> {
        let n = self.re.len();
        let cols = self.re.first().map_or(0, Vec::len);
        let ragged = |a: &[Vec<f64>]| a.len() != n || a.iter().any(|r| r.len() != cols);
        if ragged(&self.re) || ragged(&self.im) {
            return Err(CliError::Schema("re/im arrays must be rectangular and of equal shape".into()));
        }
        Ok(CMat::from_fn(n, cols, |i, j| C64::new(self.re[i][j], self.im[i][j])))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelSpec {
    Kraus(Vec<ComplexMatrix>),
    Stochastic(Vec<Vec<f64>>),
    /// Matrix of the map on matrix-unit coordinates, for inputs without a Kraus form.
    Superoperator(ComplexMatrix),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModuleChoice {
    Standard,
    StandardDoubled,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomWords {
    pub count: usize,
    pub max_len: usize,
    pub seed: u64,
}

/// A word is `[[n_1, …, n_k], [γ_1, …, γ_k]]`: levels and basis indices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentSpec {
    Words(Vec<(Vec<usize>, Vec<usize>)>),
    Random(RandomWords),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceSpec {
    pub algebra: AlgebraSpec,
    pub channel: ChannelSpec,
    #[serde(default = "default_module")]
    pub module: ModuleChoice,
    pub level: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checks: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub moments: Option<MomentSpec>,
    #[serde(default = "default_dim_cap")]
    pub dim_cap: usize,
}

fn default_module() -> ModuleChoice {
    ModuleChoice::Standard
}

fn default_tol() -> f64 {
    DEFAULT_TOL
}

fn default_dim_cap() -> usize {
    DEFAULT_DIM_CAP
}

/// A validated spec together with the objects it describes.
pub struct Instance {
    pub spec: InstanceSpec,
    pub algebra: Arc<MultiMatrixAlgebra>,
    pub channel: UcpMap,
    pub h: WStarBimodule,
    pub checks: Vec<String>,
    pub words: Vec<Word>,
    pub cfg: DilationConfig,
}

impl InstanceSpec {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Schema(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serializes")
    }

    /// Schema-level checks that need no numerics.
    pub fn validate(&self) -> Result<(), CliError> {
        if self.algebra.blocks.is_empty() || self.algebra.blocks.contains(&0) {
            return Err(CliError::Schema("blocks must be a nonempty list of positive sizes".into()));
        }
        if self.level == 0 {
            return Err(CliError::Schema("level must be at least 1".into()));
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(CliError::Schema("tol must be positive".into()));
        }
        if self.dim_cap == 0 {
            return Err(CliError::Schema("dim_cap must be positive".into()));
        }
        if let Some(checks) = &self.checks {
            if let Some(bad) = checks.iter().find(|c| !ALL_CHECKS.contains(&c.as_str())) {
                return Err(CliError::Schema(format!(
                    "unknown check {bad:?}; expected one of {}",
                    ALL_CHECKS.join(", ")
                )));
            }
        }
        match &self.moments {
            Some(MomentSpec::Words(ws)) => {
                for (levels, letters) in ws {
                    if levels.len() != letters.len() {
                        return Err(CliError::Schema(
                            "moment word needs as many levels as basis indices".into(),
                        ));
                    }
                    if let Some(&n) = levels.iter().find(|&&n| n > self.level) {
                        return Err(CliError::Schema(format!(
                            "moment word uses level {n} above the truncation level {}",
                            self.level
                        )));
                    }
                }
            }
            Some(MomentSpec::Random(r)) if r.max_len == 0 => {
                return Err(CliError::Schema("random words need max_len ≥ 1".into()));
            }
            _ => {}
        }
        Ok(())
    }

    /// Validates and builds the algebra, the channel and `H`.
    pub fn instantiate(&self) -> Result<Instance, CliError> {
        self.validate()?;
        let algebra = Arc::new(MultiMatrixAlgebra::new(&self.algebra.blocks)?);
        let channel = match &self.channel {
            ChannelSpec::Kraus(ks) => {
                let kraus = ks.iter().map(ComplexMatrix::to_matrix).collect::<Result<_, _>>()?;
                UcpMap::new(&algebra, kraus)?
            }
            ChannelSpec::Stochastic(p) => UcpMap::from_stochastic(&algebra, p)?,
            ChannelSpec::Superoperator(m) => {
                let map = LinearMap::new(&algebra, m.to_matrix()?)?;
                UcpMap::from_linear_map(&map, self.tol.max(1e-9))?
            }
        };
        let l2 = standard_form(algebra.operator_basis());
        let h = match self.module {
            ModuleChoice::Standard => l2,
            ModuleChoice::StandardDoubled => l2.direct_sum(&l2)?,
        };
        let lin = algebra.lin_dim();
        if let Some(MomentSpec::Words(ws)) = &self.moments {
            if ws.iter().any(|(_, g)| g.iter().any(|&g| g >= lin)) {
                return Err(CliError::Schema(format!("basis index out of range (lin_dim {lin})")));
            }
        }
        let words = match &self.moments {
            None => all_basis_words(lin, self.level, DEFAULT_MAX_LEN),
            Some(MomentSpec::Words(ws)) => ws
                .iter()
                .map(|(levels, letters)| levels.iter().copied().zip(letters.iter().copied()).collect())
                .collect(),
            Some(MomentSpec::Random(r)) => random_words(lin, self.level, r),
        };
        let checks = match &self.checks {
            Some(c) => ALL_CHECKS.iter().filter(|k| c.iter().any(|x| x == *k)).map(|s| s.to_string()).collect(),
            None => DEFAULT_CHECKS.iter().map(|s| s.to_string()).collect(),
        };
        Ok(Instance {
            spec: self.clone(),
            algebra,
            channel,
            h,
            checks,
            words,
            cfg: DilationConfig { dim_cap: self.dim_cap },
        })
    }
}

/// `count` seeded words of length `1..=max_len`.
pub fn random_words(lin_dim: usize, level: usize, r: &RandomWords) -> Vec<Word> {
    let mut rng = ChaCha8Rng::seed_from_u64(r.seed);
    (0..r.count)
        .map(|_| {
            let len = rng.random_range(1..=r.max_len);
            (0..len)
                .map(|_| (rng.random_range(0..=level), rng.random_range(0..lin_dim)))
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_minimal_spec_with_defaults() {
        let s = InstanceSpec::from_json(
            r#"{"algebra":{"blocks":[1,1]},"channel":{"stochastic":[[0.5,0.5],[0.5,0.5]]},"level":3}"#,
        )
        .unwrap();
        assert_eq!(s.tol, 1e-9);
        assert_eq!(s.dim_cap, 4096);
        assert_eq!(s.module, ModuleChoice::Standard);
        let inst = s.instantiate().unwrap();
        assert_eq!(inst.checks.len(), DEFAULT_CHECKS.len());
        assert_eq!(inst.words.len(), 1 + 8 + 64);
    }

    #[test]
    fn kraus_round_trip_and_word_list() {
        let s = InstanceSpec::from_json(
            r#"{"algebra":{"blocks":[2]},
                "channel":{"kraus":[{"re":[[1,0],[0,1]],"im":[[0,0],[0,0]]}]},
                "module":"standard_doubled","level":2,"tol":1e-9,
                "checks":["ucp","gns"],
                "moments":{"words":[[[0,2],[1,3]]]},"dim_cap":100}"#,
        )
        .unwrap();
        let inst = s.instantiate().unwrap();
        assert_eq!(inst.h.dim(), 8);
        assert_eq!(inst.words, vec![vec![(0, 1), (2, 3)]]);
        let again = InstanceSpec::from_json(&s.to_json()).unwrap();
        assert_eq!(again, s);
    }

    #[test]
    fn schema_violations() {
        for bad in [
            r#"{"algebra":{"blocks":[2]},"channel":{"stochastic":[[1]]},"level":1,"extra":1}"#,
            r#"{"algebra":{"blocks":[2]},"level":1}"#,
            r#"{"algebra":{"blocks":[2]},"channel":{"kraus":[]},"level":0}"#,
            r#"{"algebra":{"blocks":[2]},"channel":{"kraus":[]},"level":1,"checks":["nope"]}"#,
            r#"{"algebra":{"blocks":[2]},"channel":{"kraus":[{"re":[[1,0]],"im":[[0]]}]},"level":1}"#,
        ] {
            let r = InstanceSpec::from_json(bad).and_then(|s| s.instantiate().map(|_| ()));
            assert!(r.is_err(), "{bad}");
        }
    }

    #[test]
    fn random_words_are_seeded() {
        let r = RandomWords {
            count: 10,
            max_len: 3,
            seed: 4,
        };
        assert_eq!(random_words(4, 2, &r), random_words(4, 2, &r));
        assert!(random_words(4, 2, &r).iter().all(|w| (1..=3).contains(&w.len())));
    }
}
