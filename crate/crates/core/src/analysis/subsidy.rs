use serde::Serialize;

use super::scan::{find_equilibria_scan, Equilibrium, ScanConfig};
use crate::costs::CostModel;
use crate::dynamics::{DynamicsConfig, Stability};
use crate::economy::QualificationState;
use crate::error::{Error, Result};
use crate::features::FeatureModel;
use crate::model::Model;

const SHIFT_TOL: f64 = 1e-6;
const DOMINANCE_PROBES: usize = 1001;

/// Where a non-zero equilibrium moves under the subsidized costs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Shift {
    pub before: QualificationState,
    /// Highest subsidized equilibrium that is at least as good for every
    /// group, if any.
    pub after: Option<QualificationState>,
    /// Closest subsidized equilibrium.
    pub nearest: Option<QualificationState>,
    /// The subsidized group's rate rises strictly.
    pub improved: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubsidyReport {
    pub group: usize,
    pub before: Vec<Equilibrium>,
    pub after: Vec<Equilibrium>,
    pub shifts: Vec<Shift>,
}

impl SubsidyReport {
    pub fn all_improved(&self) -> bool {
        self.shifts.iter().all(|s| s.improved)
    }
}

fn nonzero_fixed_points(eqs: &[Equilibrium]) -> Vec<&Equilibrium> {
    eqs.iter()
        .filter(|e| e.is_fixed_point() && !e.trivial)
        .collect()
}

/// Equilibria before and after replacing `group`'s cost CDF by `g_bar`.
pub fn subsidy_equilibrium_shift(
    model: &Model,
    group: usize,
    g_bar: &CostModel,
    dynamics: &DynamicsConfig,
    scan: &ScanConfig,
) -> Result<SubsidyReport> {
    if group >= model.group_count() {
        return Err(Error::Config(format!("no group with index {group}")));
    }
    let g = &model.groups().get(group).cost;
    if !g.dominated_by(g_bar, DOMINANCE_PROBES, 1e-12) {
        return Err(Error::Precondition(
            "subsidized cost does not dominate the original".into(),
        ));
    }
    let subsidized = model.with_cost(group, g_bar.clone());
    let before = find_equilibria_scan(model, dynamics, scan)?;
    let after = find_equilibria_scan(&subsidized, dynamics, scan)?;
    let candidates = nonzero_fixed_points(&after);
    let shifts = nonzero_fixed_points(&before)
        .into_iter()
        .map(|e| {
            let pi = e.state.rates();
            let best = candidates
                .iter()
                .filter(|c| {
                    c.state
                        .rates()
                        .iter()
                        .zip(pi)
                        .all(|(a, b)| *a >= b - SHIFT_TOL)
                })
                .max_by(|a, b| a.state.get(group).total_cmp(&b.state.get(group)));
            let nearest = candidates.iter().min_by(|a, b| {
                a.state
                    .distance(&e.state)
                    .total_cmp(&b.state.distance(&e.state))
            });
            Shift {
                before: e.state.clone(),
                after: best.map(|c| c.state.clone()),
                nearest: nearest.map(|c| c.state.clone()),
                improved: best.is_some_and(|c| c.state.get(group) > e.state.get(group) + SHIFT_TOL),
            }
        })
        .collect();
    Ok(SubsidyReport {
        group,
        before,
        after,
        shifts,
    })
}

/// Two-group halfspace model where the first group faces higher costs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UnequalCostReport {
    /// `G1(w) < G2(w (1 - 2 angle))`.
    pub precondition: bool,
    pub nontrivial: Vec<Equilibrium>,
    /// Exactly one non-trivial equilibrium, at the second normal, stable.
    pub unique_second: bool,
    /// `(G1(w (1 - 2 angle)), G2(w))`.
    pub expected: Vec<f64>,
    pub discrepancy: Option<f64>,
    /// `G1_bar(w) > G2(w (1 - 2 angle))`.
    pub subsidized_condition: bool,
    /// An equilibrium at the first normal exists after subsidizing.
    pub first_reappears: bool,
}

pub fn unequal_cost_report(
    model: &Model,
    g1_bar: &CostModel,
    dynamics: &DynamicsConfig,
    scan: &ScanConfig,
) -> Result<UnequalCostReport> {
    let FeatureModel::GaussianHalfspace { .. } = model.features() else {
        return Err(Error::Unsupported(
            "unequal-cost report needs a halfspace model".into(),
        ));
    };
    let angle = model
        .halfspace_angle()
        .ok_or_else(|| Error::Unsupported("unequal-cost report needs two groups".into()))?;
    let w = model.economy().wage();
    let g1 = &model.groups().get(0).cost;
    let g2 = &model.groups().get(1).cost;
    let reduced = (w * (1.0 - 2.0 * angle)).max(0.0);
    let precondition = g1.cdf(w) < g2.cdf(reduced);
    let expected = vec![g1.cdf(reduced), g2.cdf(w)];

    let report = subsidy_equilibrium_shift(model, 0, g1_bar, dynamics, scan)?;
    let nontrivial: Vec<Equilibrium> = nonzero_fixed_points(&report.before)
        .into_iter()
        .cloned()
        .collect();
    let unique_second = nontrivial.len() == 1
        && nontrivial[0].theta_coordinate() == Some(1.0)
        && nontrivial[0].stability == Stability::Stable;
    let discrepancy = (nontrivial.len() == 1).then(|| {
        nontrivial[0]
            .state
            .rates()
            .iter()
            .zip(&expected)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    });
    let subsidized_condition = g1_bar.cdf(w) > g2.cdf(reduced);
    let first_reappears = nonzero_fixed_points(&report.after)
        .iter()
        .any(|e| e.theta_coordinate() == Some(0.0));
    Ok(UnequalCostReport {
        precondition,
        nontrivial,
        unique_second,
        expected,
        discrepancy,
        subsidized_condition,
        first_reappears,
    })
}
