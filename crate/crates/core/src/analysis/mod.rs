//! Closed-form equilibria, equilibrium enumeration and the reports built on
//! top of them.

mod compare;
mod gaussian;
mod multi;
mod near;
mod report;
mod scan;
mod subsidy;
mod sweep;
mod uniform;

use serde::Serialize;

use crate::dynamics::Stability;
use crate::features::Theta;

pub use compare::{
    compare_equilibria, uniform_ranking_violations, Comparison, EquilibriumPoint, Ranking,
};
pub use gaussian::{
    gaussian_closed_forms, gaussian_closed_forms_for, GaussianClosedForms, GaussianRegime,
};
pub use multi::{beta_of_pi, multi_equilibrium_witness, BetaOfPi};
pub use near::{near_realizability_bound, NearBound};
pub use report::{equilibria_csv, to_json_line};
pub use scan::{find_equilibria_scan, sign_changes, Equilibrium, EquilibriumKind, ScanConfig};
pub use subsidy::{
    subsidy_equilibrium_shift, unequal_cost_report, Shift, SubsidyReport, UnequalCostReport,
};
pub use sweep::{initial_rate_sweep, sweep_csv, SweepRow};
pub use uniform::{uniform_closed_forms, uniform_closed_forms_for, UniformClosedForms};

/// One row of a closed-form equilibrium table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClosedFormEquilibrium {
    pub label: String,
    pub theta: Theta,
    pub pi: Vec<f64>,
    pub stability: Stability,
}
