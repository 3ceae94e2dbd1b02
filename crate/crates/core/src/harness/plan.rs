use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::classifier::DEFAULT_SELECTION_FRACTION;
use crate::corpus::CategorySpec;
use crate::sampling::{SamplingConfig, Strategy, DEFAULT_BATCH_SIZE, DEFAULT_ITERATIONS};

use super::HarnessError;

pub const DEFAULT_STARTS: usize = 10;
pub const DEFAULT_RANDOM_RUNS_PER_START: usize = 2;
pub const DEFAULT_TEST_FRACTION: f64 = 0.14;

/// Everything that determines an experiment's results, read from TOML:
///
/// ```toml
/// master_seed = 7
/// strategies = ["uncertainty", "random"]
/// iterations = 100
///
/// [[categories]]
/// name = "bonds"
/// substrings = ["bond"]
/// ```
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentPlan {
    pub categories: Vec<CategorySpec>,
    pub strategies: Vec<Strategy>,
    /// Number of starting subsamples; one uncertainty or relevance run each.
    pub starts: usize,
    pub random_runs_per_start: usize,
    pub batch_size: usize,
    pub iterations: usize,
    pub selection_fraction: f64,
    pub master_seed: u64,
    pub test_fraction: f64,
    /// Caps the random-sample schedule; the whole pool when absent.
    pub random_max_size: Option<usize>,
}

impl Default for ExperimentPlan {
    fn default() -> Self {
        Self {
            categories: Vec::new(),
            strategies: Strategy::ALL.to_vec(),
            starts: DEFAULT_STARTS,
            random_runs_per_start: DEFAULT_RANDOM_RUNS_PER_START,
            batch_size: DEFAULT_BATCH_SIZE,
            iterations: DEFAULT_ITERATIONS,
            selection_fraction: DEFAULT_SELECTION_FRACTION,
            master_seed: 0,
            test_fraction: DEFAULT_TEST_FRACTION,
            random_max_size: None,
        }
    }
}

impl ExperimentPlan {
    pub fn from_toml_str(text: &str) -> Result<Self, HarnessError> {
        let plan: Self = toml::from_str(text)?;
        Ok(plan)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("plan serializes")
    }

    /// Runs per (category, strategy): one per start for the sampling
    /// strategies, `random_runs_per_start` per start for random.
    pub fn runs_for(&self, strategy: Strategy) -> usize {
        match strategy {
            Strategy::Random => self.starts * self.random_runs_per_start,
            _ => self.starts,
        }
    }

    /// Index of the starting subsample a run uses.
    pub fn start_of(&self, strategy: Strategy, run: usize) -> usize {
        match strategy {
            Strategy::Random => run / self.random_runs_per_start,
            _ => run,
        }
    }

    pub fn sampling_config(&self, strategy: Strategy, seed: u64) -> SamplingConfig {
        SamplingConfig {
            batch_size: self.batch_size,
            iterations: self.iterations,
            strategy,
            seed,
            selection_fraction: self.selection_fraction,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Plan(m));
        if self.categories.is_empty() {
            return bad("plan has no categories".into());
        }
        let mut names = HashSet::new();
        for c in &self.categories {
            CategorySpec::new(c.name.clone(), c.substrings.clone())?;
            if !names.insert(c.name.as_str()) {
                return bad(format!("category {:?} listed twice", c.name));
            }
        }
        if self.strategies.is_empty() {
            return bad("plan has no strategies".into());
        }
        let mut seen = HashSet::new();
        if let Some(s) = self.strategies.iter().find(|s| !seen.insert(**s)) {
            return bad(format!("strategy {s} listed twice"));
        }
        if self.starts == 0 || self.random_runs_per_start == 0 {
            return bad("starts and random_runs_per_start must be positive".into());
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return bad(format!("test_fraction {} must be in (0, 1)", self.test_fraction));
        }
        for &s in &self.strategies {
            self.sampling_config(s, 0).validate()?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_defaults_and_round_trip() {
        let plan = ExperimentPlan::from_toml_str(
            r#"
            master_seed = 7
            strategies = ["uncertainty", "random"]
            iterations = 100

            [[categories]]
            name = "bonds"
            substrings = ["bond"]
            "#,
        )
        .unwrap();
        assert_eq!(plan.starts, 10);
        assert_eq!(plan.batch_size, 4);
        assert_eq!(plan.iterations, 100);
        assert_eq!(plan.runs_for(Strategy::Random), 20);
        assert_eq!(plan.start_of(Strategy::Random, 19), 9);
        plan.validate().unwrap();
        let back = ExperimentPlan::from_toml_str(&plan.to_toml_string()).unwrap();
        assert_eq!(back, plan);
    }

    #[test]
    fn invalid_plans() {
        assert!(ExperimentPlan::from_toml_str("bogus = 1").is_err());
        assert!(ExperimentPlan::default().validate().is_err());
        let bonds = CategorySpec::new("bonds", vec!["bond".into()]).unwrap();
        let ok = ExperimentPlan {
            categories: vec![bonds.clone()],
            ..Default::default()
        };
        ok.validate().unwrap();
        for plan in [
            ExperimentPlan { categories: vec![bonds.clone(), bonds.clone()], ..ok.clone() },
            ExperimentPlan { batch_size: 3, ..ok.clone() },
            ExperimentPlan { starts: 0, ..ok.clone() },
            ExperimentPlan { test_fraction: 1.0, ..ok.clone() },
            ExperimentPlan { strategies: vec![Strategy::Random, Strategy::Random], ..ok.clone() },
        ] {
            assert!(plan.validate().is_err(), "{plan:?}");
        }
    }
}
