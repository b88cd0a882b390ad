//! The assembled economy: parameters, groups, features and solver settings,
//! plus the individual response and the institution's objective.

use serde::{Deserialize, Serialize};

use crate::economy::{balance, EconomyConfig, Groups, Metrics, QualificationState, DEFAULT_TOL};
use crate::error::{Error, Result};
use crate::features::{midpoint, normalized_angle, FeatureModel, Theta};

/// Discretization and tolerance of the institution's solver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    /// Number of grid points over the parameter space.
    pub theta_grid: usize,
    /// Tolerance for utility ties and rate equality.
    pub tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            theta_grid: 2001,
            tol: DEFAULT_TOL,
        }
    }
}

impl SolverConfig {
    fn validate(&self) -> Result<()> {
        if self.theta_grid < 3 {
            return Err(Error::Config("theta_grid must be at least 3".into()));
        }
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(Error::Config("solver tol must be positive".into()));
        }
        Ok(())
    }
}

/// The institution's decision: one parameter for everyone, or one per group.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Assessment {
    Joint(Theta),
    PerGroup(Vec<Theta>),
}

impl Assessment {
    pub fn for_group(&self, group: usize) -> &Theta {
        match self {
            Assessment::Joint(t) => t,
            Assessment::PerGroup(ts) => &ts[group],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Arc {
    pub h1: Vec<f64>,
    pub h2: Vec<f64>,
    pub angle: f64,
    pub mid: Vec<f64>,
}

/// Economy, groups, feature model and solver settings, validated together.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    economy: EconomyConfig,
    groups: Groups,
    features: FeatureModel,
    solver: SolverConfig,
    pub(crate) grid: Vec<f64>,
    /// `table[i][a]` holds `(TPR, FPR)` of group `a` at grid point `i`.
    pub(crate) table: Vec<Vec<(f64, f64)>>,
    pub(crate) arc: Option<Arc>,
}

impl Model {
    pub fn new(economy: EconomyConfig, groups: Groups, features: FeatureModel) -> Result<Self> {
        Self::with_solver(economy, groups, features, SolverConfig::default())
    }

    pub fn with_solver(
        economy: EconomyConfig,
        groups: Groups,
        features: FeatureModel,
        solver: SolverConfig,
    ) -> Result<Self> {
        solver.validate()?;
        let features = features.validate(groups.len())?;
        let n = solver.theta_grid;
        let grid: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
        let mut arc = None;
        let table = match &features {
            FeatureModel::GaussianHalfspace { normals } => {
                if normals.len() == 2 {
                    let angle = normalized_angle(&normals[0], &normals[1]);
                    arc = Some(Arc {
                        h1: normals[0].clone(),
                        h2: normals[1].clone(),
                        angle,
                        mid: midpoint(&normals[0], &normals[1]),
                    });
                    grid.iter()
                        .map(|&u| vec![arc_rates(angle, 0, u), arc_rates(angle, 1, u)])
                        .collect()
                } else {
                    Vec::new()
                }
            }
            _ => grid
                .iter()
                .map(|&u| {
                    (0..groups.len())
                        .map(|a| features.tpr_fpr(a, &Theta::Threshold(u)))
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<Vec<_>>>()?,
        };
        Ok(Model {
            economy,
            groups,
            features,
            solver,
            grid,
            table,
            arc,
        })
    }

    pub fn economy(&self) -> &EconomyConfig {
        &self.economy
    }

    pub fn groups(&self) -> &Groups {
        &self.groups
    }

    pub fn features(&self) -> &FeatureModel {
        &self.features
    }

    pub fn solver(&self) -> &SolverConfig {
        &self.solver
    }

    pub fn tol(&self) -> f64 {
        self.solver.tol
    }

    pub fn group_count(&self) -> usize {
        self.groups.len()
    }

    /// Same model with a different economy.
    pub fn with_economy(&self, economy: EconomyConfig) -> Self {
        Model {
            economy,
            ..self.clone()
        }
    }

    /// Same model with one group's cost replaced.
    pub fn with_cost(&self, group: usize, cost: crate::costs::CostModel) -> Self {
        Model {
            groups: self.groups.with_cost(group, cost),
            ..self.clone()
        }
    }

    /// Normalized angle between the two group normals of a halfspace model.
    pub fn halfspace_angle(&self) -> Option<f64> {
        self.arc.as_ref().map(|a| a.angle)
    }

    /// `(TPR, FPR)` of `group` under `theta`.
    pub fn rates(&self, group: usize, theta: &Theta) -> Result<(f64, f64)> {
        if let (Some(arc), Theta::Hyperplane { arc: Some(u), .. }) = (&self.arc, theta) {
            return Ok(arc_rates(arc.angle, group, *u));
        }
        self.features.tpr_fpr(group, theta)
    }

    /// `G_a(w (TPR - FPR))`, with a negative net benefit treated as zero.
    pub fn response_rate(&self, group: usize, tpr: f64, fpr: f64) -> f64 {
        let gain = self.economy.wage() * (tpr - fpr).max(0.0);
        self.groups.get(group).cost.cdf(gain)
    }

    /// Qualification rates induced by an assessment.
    pub fn individual_best_response(&self, assessment: &Assessment) -> Result<QualificationState> {
        if let Assessment::PerGroup(ts) = assessment {
            if ts.len() != self.group_count() {
                return Err(Error::Config(
                    "per-group assessment has the wrong length".into(),
                ));
            }
        }
        let rates = (0..self.group_count())
            .map(|a| {
                let (tpr, fpr) = self.rates(a, assessment.for_group(a))?;
                Ok(self.response_rate(a, tpr, fpr))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(QualificationState::from_clamped(rates))
    }

    /// `p_TP sum_a n_a TPR_a pi_a - c_FP sum_a n_a FPR_a (1 - pi_a)`.
    pub fn institutional_utility(
        &self,
        assessment: &Assessment,
        state: &QualificationState,
    ) -> Result<f64> {
        state.check_groups(&self.groups)?;
        let (p, c) = (self.economy.payoff_tp(), self.economy.cost_fp());
        let mut total = 0.0;
        for (a, g) in self.groups.iter().enumerate() {
            let (tpr, fpr) = self.rates(a, assessment.for_group(a))?;
            let pi = state.get(a);
            total += g.proportion * (p * tpr * pi - c * fpr * (1.0 - pi));
        }
        Ok(total)
    }

    pub fn metrics(&self, assessment: &Assessment, state: &QualificationState) -> Result<Metrics> {
        Ok(Metrics {
            qualification_rates: state.rates().to_vec(),
            balance: balance(state)?,
            institutional_utility: self.institutional_utility(assessment, state)?,
        })
    }

    pub(crate) fn arc_theta(&self, u: f64) -> Theta {
        let arc = self.arc.as_ref().expect("two-group halfspace model");
        let normal = if u == 0.5 {
            arc.mid.clone()
        } else {
            crate::features::slerp(&arc.h1, &arc.h2, u)
        };
        Theta::Hyperplane {
            normal,
            arc: Some(u),
        }
    }
}

/// Exact rates along the geodesic between the two group normals.
fn arc_rates(angle: f64, group: usize, u: f64) -> (f64, f64) {
    let x = if group == 0 {
        u * angle
    } else {
        (1.0 - u) * angle
    };
    (1.0 - x, x)
}

/// Single-argument form of [`Model::institutional_utility`] for a shared parameter.
pub fn institutional_utility(
    model: &Model,
    theta: &Theta,
    state: &QualificationState,
) -> Result<f64> {
    model.institutional_utility(&Assessment::Joint(theta.clone()), state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::costs::CostModel;
    use crate::economy::GroupSpec;

    fn single_group(features: FeatureModel, p: f64, c: f64) -> Model {
        let groups = Groups::new(vec![GroupSpec::new("g", 1.0, CostModel::uniform())]).unwrap();
        Model::new(EconomyConfig::new(0.8, p, c).unwrap(), groups, features).unwrap()
    }

    #[test]
    fn perfect_classifier_utility_equals_rate() {
        let m = single_group(
            FeatureModel::UniformThreshold {
                thresholds: vec![0.5],
            },
            1.0,
            1.0,
        );
        let s = QualificationState::new(vec![0.5]).unwrap();
        let u = institutional_utility(&m, &Theta::Threshold(0.5), &s).unwrap();
        assert!((u - 0.5).abs() < 1e-15);
        let none = institutional_utility(&m, &Theta::Threshold(1.0), &s).unwrap();
        assert_eq!(none, 0.0);
    }

    #[test]
    fn mismatched_state_is_config_error() {
        let m = single_group(
            FeatureModel::UniformThreshold {
                thresholds: vec![0.5],
            },
            1.0,
            1.0,
        );
        let s = QualificationState::new(vec![0.5, 0.5]).unwrap();
        assert!(matches!(
            institutional_utility(&m, &Theta::Threshold(0.5), &s),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn perfect_classifier_response_is_g_of_w() {
        let m = single_group(
            FeatureModel::UniformThreshold {
                thresholds: vec![0.5],
            },
            1.0,
            1.0,
        );
        let s = m
            .individual_best_response(&Assessment::Joint(Theta::Threshold(0.5)))
            .unwrap();
        assert!((s.get(0) - 0.8).abs() < 1e-15);
    }
}
