use serde::Serialize;

use super::ClosedFormEquilibrium;
use crate::costs::CostModel;
use crate::dynamics::Stability;
use crate::economy::EconomyConfig;
use crate::error::{Error, Result};
use crate::features::{midpoint, normalized_angle, FeatureModel, Theta};
use crate::model::Model;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GaussianRegime {
    /// Two stable equilibria at the group normals.
    StableEquilibria,
    /// A period-two cycle between the group normals.
    LimitCycle,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GaussianClosedForms {
    pub angle: f64,
    pub regime: GaussianRegime,
    pub equilibria: Vec<ClosedFormEquilibrium>,
    pub cycle: Option<Vec<Vec<f64>>>,
}

impl GaussianClosedForms {
    pub fn equilibrium(&self, label: &str) -> Option<&ClosedFormEquilibrium> {
        self.equilibria.iter().find(|e| e.label == label)
    }
}

fn unit(v: &[f64]) -> Vec<f64> {
    let n = crate::features::norm(v);
    v.iter().map(|x| x / n).collect()
}

/// Equilibria of the two-group halfspace model with equal group sizes and a
/// shared cost distribution.
pub fn gaussian_closed_forms(
    h1: &[f64],
    h2: &[f64],
    w: f64,
    cost: &CostModel,
    economy: &EconomyConfig,
) -> Result<GaussianClosedForms> {
    if h1.len() != h2.len() || crate::features::norm(h1) == 0.0 || crate::features::norm(h2) == 0.0
    {
        return Err(Error::Precondition(
            "normals must be non-zero vectors of equal dimension".into(),
        ));
    }
    let (h1, h2) = (unit(h1), unit(h2));
    let angle = normalized_angle(&h1, &h2);
    if !(angle > 0.0 && angle < 1.0) {
        return Err(Error::Precondition(format!(
            "normalized angle {angle} outside (0, 1)"
        )));
    }
    let (p, c) = (economy.payoff_tp(), economy.cost_fp());
    if p == c {
        return Err(Error::Degenerate("p_TP = c_FP is not characterized".into()));
    }
    let g = |x: f64| cost.cdf(x.max(0.0));
    let top = g(w);
    let low = g(w * (1.0 - 2.0 * angle));
    let mid = g(w * (1.0 - angle));
    let at = |normal: &[f64], arc: f64| Theta::Hyperplane {
        normal: normal.to_vec(),
        arc: Some(arc),
    };
    let balanced = ClosedFormEquilibrium {
        label: "h_mid".into(),
        theta: at(&midpoint(&h1, &h2), 0.5),
        pi: vec![mid, mid],
        stability: Stability::Unstable,
    };
    if p > c {
        Ok(GaussianClosedForms {
            angle,
            regime: GaussianRegime::StableEquilibria,
            equilibria: vec![
                ClosedFormEquilibrium {
                    label: "h1".into(),
                    theta: at(&h1, 0.0),
                    pi: vec![top, low],
                    stability: Stability::Stable,
                },
                balanced,
                ClosedFormEquilibrium {
                    label: "h2".into(),
                    theta: at(&h2, 1.0),
                    pi: vec![low, top],
                    stability: Stability::Stable,
                },
            ],
            cycle: None,
        })
    } else {
        Ok(GaussianClosedForms {
            angle,
            regime: GaussianRegime::LimitCycle,
            equilibria: vec![balanced],
            cycle: Some(vec![vec![top, low], vec![low, top]]),
        })
    }
}

/// Checks the model matches the closed-form assumptions, then evaluates them.
pub fn gaussian_closed_forms_for(model: &Model) -> Result<GaussianClosedForms> {
    let FeatureModel::GaussianHalfspace { normals } = model.features() else {
        return Err(Error::Assumption("not a halfspace model".into()));
    };
    if normals.len() != 2 {
        return Err(Error::Assumption(
            "closed forms need exactly two groups".into(),
        ));
    }
    let n = model.groups().proportions();
    if (n[0] - n[1]).abs() > 1e-12 {
        return Err(Error::Assumption(
            "closed forms need equal group sizes".into(),
        ));
    }
    let cost = &model.groups().get(0).cost;
    if *cost != model.groups().get(1).cost {
        return Err(Error::Assumption(
            "closed forms need a shared cost distribution".into(),
        ));
    }
    gaussian_closed_forms(
        &normals[0],
        &normals[1],
        model.economy().wage(),
        cost,
        model.economy(),
    )
}
