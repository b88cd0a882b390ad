#![allow(dead_code)]

use qualdyn::{
    CostModel, EconomyConfig, FeatureModel, GroupSpec, Groups, Model, QualificationState,
    ScoreDist, ScoreGroup,
};

pub fn state(rates: &[f64]) -> QualificationState {
    QualificationState::new(rates.to_vec()).unwrap()
}

pub fn two_groups(g1: CostModel, g2: CostModel) -> Groups {
    Groups::new(vec![
        GroupSpec::new("a1", 0.5, g1),
        GroupSpec::new("a2", 0.5, g2),
    ])
    .unwrap()
}

pub fn one_group(cost: CostModel) -> Groups {
    Groups::new(vec![GroupSpec::new("g", 1.0, cost)]).unwrap()
}

/// Thresholds (0.4, 0.8), w = 0.6, uniform costs, equal sizes and p = c.
pub fn uniform_example() -> Model {
    uniform_model(0.4, 0.8, 0.6)
}

pub fn uniform_model(h1: f64, h2: f64, w: f64) -> Model {
    Model::new(
        EconomyConfig::new(w, 1.0, 1.0).unwrap(),
        two_groups(CostModel::uniform(), CostModel::uniform()),
        FeatureModel::UniformThreshold {
            thresholds: vec![h1, h2],
        },
    )
    .unwrap()
}

/// Normals separated by the given normalized angle in the plane.
pub fn normals(angle: f64) -> Vec<Vec<f64>> {
    let phi = angle * std::f64::consts::PI;
    vec![vec![1.0, 0.0], vec![phi.cos(), phi.sin()]]
}

pub fn gaussian_model(angle: f64, w: f64, p: f64, c: f64, g1: CostModel, g2: CostModel) -> Model {
    Model::new(
        EconomyConfig::new(w, p, c).unwrap(),
        two_groups(g1, g2),
        FeatureModel::GaussianHalfspace {
            normals: normals(angle),
        },
    )
    .unwrap()
}

pub fn beta_group(y1: (f64, f64), y0: (f64, f64)) -> ScoreGroup {
    ScoreGroup {
        y1: ScoreDist::beta(y1.0, y1.1).unwrap(),
        y0: ScoreDist::beta(y0.0, y0.1).unwrap(),
    }
}

pub fn score_model(group: ScoreGroup, w: f64, p: f64, c: f64, cost: CostModel) -> Model {
    Model::new(
        EconomyConfig::new(w, p, c).unwrap(),
        one_group(cost),
        FeatureModel::Score {
            groups: vec![group],
        },
    )
    .unwrap()
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

/// Scores where threshold 0.5 achieves `TPR = 1 - eps` and `FPR = eps`.
pub fn near_realizable_group(eps: f64) -> ScoreGroup {
    ScoreGroup {
        y1: ScoreDist::empirical(vec![[0.0, 0.0], [0.5, eps], [1.0, 1.0]]).unwrap(),
        y0: ScoreDist::empirical(vec![[0.0, 0.0], [0.5, 1.0 - eps], [1.0, 1.0]]).unwrap(),
    }
}

/// Beta(5, 2) qualified and Beta(2, 5) unqualified scores, `w = 0.8`,
/// `p = c = 1` and truncated normal costs centred at 0.6.
pub fn multi_equilibrium_model() -> Model {
    score_model(
        beta_group((5.0, 2.0), (2.0, 5.0)),
        0.8,
        1.0,
        1.0,
        CostModel::truncated_normal(0.6, 0.1).unwrap(),
    )
}
