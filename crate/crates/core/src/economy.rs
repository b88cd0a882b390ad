//! Economy parameters, group definitions, qualification state and the
//! societal metrics used to compare equilibria.

use serde::{Deserialize, Serialize};

use crate::costs::CostModel;
use crate::error::{Error, Result};

/// Default tolerance for rate comparisons.
pub const DEFAULT_TOL: f64 = 1e-9;

/// Wage paid to positively assessed individuals and the institution's
/// payoffs for true and false positives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawEconomy", into = "RawEconomy")]
pub struct EconomyConfig {
    wage: f64,
    payoff_tp: f64,
    cost_fp: f64,
    ratio: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEconomy {
    wage: f64,
    payoff_tp: f64,
    cost_fp: f64,
}

impl TryFrom<RawEconomy> for EconomyConfig {
    type Error = Error;

    fn try_from(raw: RawEconomy) -> Result<Self> {
        EconomyConfig::new(raw.wage, raw.payoff_tp, raw.cost_fp)
    }
}

impl From<EconomyConfig> for RawEconomy {
    fn from(e: EconomyConfig) -> Self {
        RawEconomy {
            wage: e.wage,
            payoff_tp: e.payoff_tp,
            cost_fp: e.cost_fp,
        }
    }
}

impl EconomyConfig {
    pub fn new(wage: f64, payoff_tp: f64, cost_fp: f64) -> Result<Self> {
        for (name, v) in [
            ("wage", wage),
            ("payoff_tp", payoff_tp),
            ("cost_fp", cost_fp),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Parameter(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        Ok(EconomyConfig {
            wage,
            payoff_tp,
            cost_fp,
            ratio: payoff_tp / cost_fp,
        })
    }

    pub fn wage(&self) -> f64 {
        self.wage
    }

    pub fn payoff_tp(&self) -> f64 {
        self.payoff_tp
    }

    pub fn cost_fp(&self) -> f64 {
        self.cost_fp
    }

    /// `payoff_tp / cost_fp`.
    pub fn ratio(&self) -> f64 {
        self.ratio
    }

    pub fn with_wage(&self, wage: f64) -> Result<Self> {
        Self::new(wage, self.payoff_tp, self.cost_fp)
    }
}

/// One population group: its label, share of the population and the CDF of
/// its investment cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupSpec {
    pub id: String,
    pub proportion: f64,
    pub cost: CostModel,
}

impl GroupSpec {
    pub fn new(id: impl Into<String>, proportion: f64, cost: CostModel) -> Self {
        GroupSpec {
            id: id.into(),
            proportion,
            cost,
        }
    }
}

/// Validated, canonically ordered (lexicographic by id) set of groups.
#[derive(Debug, Clone, PartialEq)]
pub struct Groups {
    specs: Vec<GroupSpec>,
}

impl Groups {
    pub fn new(mut specs: Vec<GroupSpec>) -> Result<Self> {
        if specs.is_empty() {
            return Err(Error::Config("at least one group is required".into()));
        }
        specs.sort_by(|a, b| a.id.cmp(&b.id));
        for pair in specs.windows(2) {
            if pair[0].id == pair[1].id {
                return Err(Error::Config(format!(
                    "duplicate group id `{}`",
                    pair[0].id
                )));
            }
        }
        for g in &specs {
            if !(g.proportion > 0.0 && g.proportion <= 1.0) {
                return Err(Error::Config(format!(
                    "group `{}` proportion must lie in (0, 1], got {}",
                    g.id, g.proportion
                )));
            }
        }
        let total: f64 = specs.iter().map(|g| g.proportion).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Config(format!(
                "group proportions sum to {total}, expected 1"
            )));
        }
        Ok(Groups { specs })
    }

    pub fn len(&self) -> usize {
        self.specs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.specs.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, GroupSpec> {
        self.specs.iter()
    }

    pub fn get(&self, index: usize) -> &GroupSpec {
        &self.specs[index]
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.specs.binary_search_by(|g| g.id.as_str().cmp(id)).ok()
    }

    pub fn ids(&self) -> Vec<&str> {
        self.specs.iter().map(|g| g.id.as_str()).collect()
    }

    pub fn proportions(&self) -> Vec<f64> {
        self.specs.iter().map(|g| g.proportion).collect()
    }

    /// Replaces the cost model of one group.
    pub fn with_cost(&self, index: usize, cost: CostModel) -> Self {
        let mut specs = self.specs.clone();
        specs[index].cost = cost;
        Groups { specs }
    }

    pub fn specs(&self) -> &[GroupSpec] {
        &self.specs
    }
}

/// Per-group qualification rates, aligned with the canonical group order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualificationState(Vec<f64>);

impl QualificationState {
    pub fn new(rates: Vec<f64>) -> Result<Self> {
        if rates.is_empty() {
            return Err(Error::Config("qualification state is empty".into()));
        }
        for (i, &r) in rates.iter().enumerate() {
            if !(0.0..=1.0).contains(&r) {
                return Err(Error::Domain(format!("rate {i} = {r} lies outside [0, 1]")));
            }
        }
        Ok(QualificationState(rates))
    }

    /// Same rate for every group.
    pub fn uniform(groups: usize, rate: f64) -> Result<Self> {
        Self::new(vec![rate; groups])
    }

    pub(crate) fn from_clamped(rates: Vec<f64>) -> Self {
        QualificationState(rates.into_iter().map(|r| r.clamp(0.0, 1.0)).collect())
    }

    pub fn rates(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, index: usize) -> f64 {
        self.0[index]
    }

    /// Sup-norm distance.
    pub fn distance(&self, other: &QualificationState) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn check_groups(&self, groups: &Groups) -> Result<()> {
        if self.len() != groups.len() {
            return Err(Error::Config(format!(
                "state has {} entries but the economy has {} groups",
                self.len(),
                groups.len()
            )));
        }
        Ok(())
    }
}

/// Largest pairwise gap between group qualification rates.
pub fn balance(state: &QualificationState) -> Result<f64> {
    let rates = state.rates();
    if rates.is_empty() {
        return Err(Error::Config("balance of an empty state".into()));
    }
    let max = rates.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = rates.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(max - min)
}

/// Societal metrics of a state under a given assessment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub qualification_rates: Vec<f64>,
    pub balance: f64,
    pub institutional_utility: f64,
}
