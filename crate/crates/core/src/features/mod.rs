//! Feature models: per-group true/false positive rates as functions of the
//! assessment parameter, and the declarative form used in scenario files.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::function::beta::{beta_reg, ln_beta};

use crate::economy::Groups;
use crate::error::{Error, Result};

mod best_response;

pub use best_response::{gaussian_tiebreak, ThresholdChoice};

/// Step used for central-difference densities of empirical score CDFs.
pub const EMPIRICAL_DENSITY_STEP: f64 = 1e-4;

/// An assessment parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Theta {
    /// Accept scores strictly above the threshold.
    Threshold(f64),
    /// Accept `x` with `x . normal >= 0`. `arc` is the position along the
    /// geodesic from the first to the second group's normal, when known.
    Hyperplane {
        normal: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        arc: Option<f64>,
    },
}

impl Theta {
    pub fn threshold(&self) -> Option<f64> {
        match self {
            Theta::Threshold(t) => Some(*t),
            Theta::Hyperplane { .. } => None,
        }
    }

    /// Scalar coordinate of the parameter: the threshold, or the arc fraction.
    pub fn coordinate(&self) -> Option<f64> {
        match self {
            Theta::Threshold(t) => Some(*t),
            Theta::Hyperplane { arc, .. } => *arc,
        }
    }
}

/// Beta distribution parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BetaParams {
    pub alpha: f64,
    pub beta: f64,
}

impl BetaParams {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0 && beta.is_finite() && beta > 0.0) {
            return Err(Error::Parameter(format!(
                "beta parameters must be positive, got ({alpha}, {beta})"
            )));
        }
        Ok(BetaParams { alpha, beta })
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            0.0
        } else if x >= 1.0 {
            1.0
        } else {
            beta_reg(self.alpha, self.beta, x)
        }
    }

    /// `1 - F(x)` without cancellation in the upper tail.
    pub fn sf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            1.0
        } else if x >= 1.0 {
            0.0
        } else {
            beta_reg(self.beta, self.alpha, 1.0 - x)
        }
    }

    pub fn density(&self, x: f64) -> f64 {
        if !(0.0..=1.0).contains(&x) {
            return 0.0;
        }
        let ln = (self.alpha - 1.0) * x.ln() + (self.beta - 1.0) * (1.0 - x).ln()
            - ln_beta(self.alpha, self.beta);
        let d = ln.exp();
        if d.is_nan() {
            // 0 * ln(0) at an endpoint with unit exponent
            if (x == 0.0 && self.alpha == 1.0) || (x == 1.0 && self.beta == 1.0) {
                (-ln_beta(self.alpha, self.beta)).exp()
            } else {
                0.0
            }
        } else {
            d
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EmpiricalKnots {
    knots: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum ScoreDistSpec {
    Beta(BetaParams),
    Empirical(EmpiricalKnots),
}

/// Conditional score distribution on `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ScoreDistSpec", into = "ScoreDistSpec")]
pub enum ScoreDist {
    Beta(BetaParams),
    /// Piecewise-linear CDF through `(x, F(x))` knots spanning `[0, 1]`.
    Empirical(Vec<[f64; 2]>),
}

impl TryFrom<ScoreDistSpec> for ScoreDist {
    type Error = Error;

    fn try_from(spec: ScoreDistSpec) -> Result<Self> {
        match spec {
            ScoreDistSpec::Beta(p) => ScoreDist::beta(p.alpha, p.beta),
            ScoreDistSpec::Empirical(k) => ScoreDist::empirical(k.knots),
        }
    }
}

impl From<ScoreDist> for ScoreDistSpec {
    fn from(d: ScoreDist) -> Self {
        match d {
            ScoreDist::Beta(p) => ScoreDistSpec::Beta(p),
            ScoreDist::Empirical(knots) => ScoreDistSpec::Empirical(EmpiricalKnots { knots }),
        }
    }
}

impl ScoreDist {
    pub fn beta(alpha: f64, beta: f64) -> Result<Self> {
        Ok(ScoreDist::Beta(BetaParams::new(alpha, beta)?))
    }

    pub fn empirical(knots: Vec<[f64; 2]>) -> Result<Self> {
        if knots.len() < 2 {
            return Err(Error::Parameter(
                "score CDF needs at least two knots".into(),
            ));
        }
        let first = knots[0];
        let last = knots[knots.len() - 1];
        if first != [0.0, 0.0] || last != [1.0, 1.0] {
            return Err(Error::Parameter(
                "score CDF knots must start at (0, 0) and end at (1, 1)".into(),
            ));
        }
        for w in knots.windows(2) {
            if w[1][0] <= w[0][0] || w[1][1] < w[0][1] {
                return Err(Error::Parameter(
                    "score CDF knots must be increasing in x and non-decreasing in F".into(),
                ));
            }
        }
        Ok(ScoreDist::Empirical(knots))
    }

    /// `F(x) = Pr(X < x)`.
    pub fn cdf(&self, x: f64) -> f64 {
        match self {
            ScoreDist::Beta(p) => p.cdf(x),
            ScoreDist::Empirical(knots) => {
                if x <= 0.0 {
                    return 0.0;
                }
                if x >= 1.0 {
                    return 1.0;
                }
                let i = knots.partition_point(|k| k[0] <= x);
                let (a, b) = (knots[i - 1], knots[i]);
                a[1] + (x - a[0]) / (b[0] - a[0]) * (b[1] - a[1])
            }
        }
    }

    /// `Pr(X >= x)`.
    pub fn sf(&self, x: f64) -> f64 {
        match self {
            ScoreDist::Beta(p) => p.sf(x),
            ScoreDist::Empirical(_) => 1.0 - self.cdf(x),
        }
    }

    /// Density: analytic for Beta, central differences for empirical CDFs.
    pub fn density(&self, x: f64) -> f64 {
        match self {
            ScoreDist::Beta(p) => p.density(x),
            ScoreDist::Empirical(_) => {
                let h = EMPIRICAL_DENSITY_STEP;
                let lo = (x - h).max(0.0);
                let hi = (x + h).min(1.0);
                (self.cdf(hi) - self.cdf(lo)) / (hi - lo)
            }
        }
    }
}

impl ScoreDist {
    /// Exact right-continuous density, used for utility slopes.
    pub(crate) fn slope(&self, x: f64) -> f64 {
        match self {
            ScoreDist::Beta(p) => p.density(x),
            ScoreDist::Empirical(knots) => {
                let x = x.clamp(0.0, 1.0);
                let i = knots
                    .partition_point(|k| k[0] <= x)
                    .clamp(1, knots.len() - 1);
                let (a, b) = (knots[i - 1], knots[i]);
                (b[1] - a[1]) / (b[0] - a[0])
            }
        }
    }
}

/// Conditional score distributions of one group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreGroup {
    /// Scores of qualified individuals (`Y = 1`).
    pub y1: ScoreDist,
    /// Scores of unqualified individuals (`Y = 0`).
    pub y0: ScoreDist,
}

impl ScoreGroup {
    /// Likelihood ratio `f0(x) / f1(x)`.
    pub fn likelihood_ratio(&self, x: f64) -> f64 {
        let f1 = self.y1.density(x);
        let f0 = self.y0.density(x);
        if f1 == 0.0 {
            if f0 == 0.0 {
                f64::NAN
            } else {
                f64::INFINITY
            }
        } else {
            f0 / f1
        }
    }
}

/// Per-group feature description, aligned with the canonical group order.
#[derive(Debug, Clone, PartialEq)]
pub enum FeatureModel {
    /// Uniform scores; group `i` is qualified above `thresholds[i]`.
    UniformThreshold { thresholds: Vec<f64> },
    /// Spherical Gaussian features split by the group's unit normal.
    GaussianHalfspace { normals: Vec<Vec<f64>> },
    /// Arbitrary conditional score distributions with threshold decisions.
    Score { groups: Vec<ScoreGroup> },
}

/// Declarative, group-keyed form of a [`FeatureModel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case", deny_unknown_fields)]
pub enum FeatureSpec {
    UniformThreshold {
        thresholds: BTreeMap<String, f64>,
    },
    GaussianHalfspace {
        normals: BTreeMap<String, Vec<f64>>,
    },
    Score {
        groups: BTreeMap<String, ScoreGroup>,
    },
}

fn resolve_map<T: Clone>(map: &BTreeMap<String, T>, groups: &Groups, what: &str) -> Result<Vec<T>> {
    for key in map.keys() {
        if groups.index_of(key).is_none() {
            return Err(Error::Config(format!(
                "{what} declared for unknown group `{key}`"
            )));
        }
    }
    groups
        .iter()
        .map(|g| {
            map.get(&g.id)
                .cloned()
                .ok_or_else(|| Error::Config(format!("no {what} declared for group `{}`", g.id)))
        })
        .collect()
}

impl FeatureSpec {
    /// Aligns the declaration with the group order.
    pub fn resolve(&self, groups: &Groups) -> Result<FeatureModel> {
        let model = match self {
            FeatureSpec::UniformThreshold { thresholds } => FeatureModel::UniformThreshold {
                thresholds: resolve_map(thresholds, groups, "threshold")?,
            },
            FeatureSpec::GaussianHalfspace { normals } => FeatureModel::GaussianHalfspace {
                normals: resolve_map(normals, groups, "normal")?,
            },
            FeatureSpec::Score { groups: g } => FeatureModel::Score {
                groups: resolve_map(g, groups, "score distribution")?,
            },
        };
        model.validate(groups.len())?;
        Ok(model)
    }
}

impl FeatureModel {
    pub fn to_spec(&self, groups: &Groups) -> FeatureSpec {
        let ids = groups.ids();
        let keyed = |i: usize| ids[i].to_string();
        match self {
            FeatureModel::UniformThreshold { thresholds } => FeatureSpec::UniformThreshold {
                thresholds: thresholds
                    .iter()
                    .enumerate()
                    .map(|(i, h)| (keyed(i), *h))
                    .collect(),
            },
            FeatureModel::GaussianHalfspace { normals } => FeatureSpec::GaussianHalfspace {
                normals: normals
                    .iter()
                    .enumerate()
                    .map(|(i, h)| (keyed(i), h.clone()))
                    .collect(),
            },
            FeatureModel::Score { groups: g } => FeatureSpec::Score {
                groups: g
                    .iter()
                    .enumerate()
                    .map(|(i, s)| (keyed(i), s.clone()))
                    .collect(),
            },
        }
    }

    pub fn group_count(&self) -> usize {
        match self {
            FeatureModel::UniformThreshold { thresholds } => thresholds.len(),
            FeatureModel::GaussianHalfspace { normals } => normals.len(),
            FeatureModel::Score { groups } => groups.len(),
        }
    }

    pub fn variant_name(&self) -> &'static str {
        match self {
            FeatureModel::UniformThreshold { .. } => "uniform_threshold",
            FeatureModel::GaussianHalfspace { .. } => "gaussian_halfspace",
            FeatureModel::Score { .. } => "score",
        }
    }

    pub fn is_scalar(&self) -> bool {
        !matches!(self, FeatureModel::GaussianHalfspace { .. })
    }

    /// Checks parameters and normalizes halfspace normals.
    pub fn validate(&self, groups: usize) -> Result<FeatureModel> {
        if self.group_count() != groups {
            return Err(Error::Config(format!(
                "feature model describes {} groups but the economy has {groups}",
                self.group_count()
            )));
        }
        match self {
            FeatureModel::UniformThreshold { thresholds } => {
                for &h in thresholds {
                    if !(h > 0.0 && h < 1.0) {
                        return Err(Error::Config(format!("threshold {h} must lie in (0, 1)")));
                    }
                }
                Ok(self.clone())
            }
            FeatureModel::GaussianHalfspace { normals } => {
                if normals.len() > 2 {
                    return Err(Error::Config(
                        "gaussian halfspace model supports one or two groups".into(),
                    ));
                }
                let dim = normals[0].len();
                if dim < 2 {
                    return Err(Error::Config(
                        "halfspace normals need dimension >= 2".into(),
                    ));
                }
                let mut unit = Vec::with_capacity(normals.len());
                for h in normals {
                    if h.len() != dim {
                        return Err(Error::Config(
                            "halfspace normals differ in dimension".into(),
                        ));
                    }
                    let norm = norm(h);
                    if !(norm.is_finite() && norm > 0.0) {
                        return Err(Error::Config("halfspace normal must be non-zero".into()));
                    }
                    unit.push(h.iter().map(|x| x / norm).collect::<Vec<_>>());
                }
                if unit.len() == 2 {
                    let angle = normalized_angle(&unit[0], &unit[1]);
                    if !(angle > 0.0 && angle < 1.0) {
                        return Err(Error::Config(format!(
                            "group normals must differ and not be opposite (normalized angle {angle})"
                        )));
                    }
                }
                Ok(FeatureModel::GaussianHalfspace { normals: unit })
            }
            FeatureModel::Score { .. } => Ok(self.clone()),
        }
    }

    /// `(TPR, FPR)` of group `group` under `theta`.
    pub fn tpr_fpr(&self, group: usize, theta: &Theta) -> Result<(f64, f64)> {
        match (self, theta) {
            (FeatureModel::UniformThreshold { thresholds }, Theta::Threshold(t)) => {
                check_threshold(*t)?;
                Ok(uniform_rates(thresholds[group], *t))
            }
            (FeatureModel::Score { groups }, Theta::Threshold(t)) => {
                check_threshold(*t)?;
                let g = &groups[group];
                Ok((g.y1.sf(*t), g.y0.sf(*t)))
            }
            (FeatureModel::GaussianHalfspace { normals }, Theta::Hyperplane { normal, .. }) => {
                let h = &normals[group];
                if normal.len() != h.len() {
                    return Err(Error::Domain(format!(
                        "hyperplane has dimension {}, expected {}",
                        normal.len(),
                        h.len()
                    )));
                }
                if (norm(normal) - 1.0).abs() > 1e-9 {
                    return Err(Error::Domain(
                        "hyperplane normal is not a unit vector".into(),
                    ));
                }
                let x = normalized_angle(normal, h);
                Ok((1.0 - x, x))
            }
            _ => Err(Error::Domain(format!(
                "parameter {theta:?} does not belong to the {} parameter space",
                self.variant_name()
            ))),
        }
    }
}

impl FeatureModel {
    /// Right derivatives `(dTPR/dt, dFPR/dt)` of a threshold model.
    pub(crate) fn rate_slopes(&self, group: usize, t: f64) -> (f64, f64) {
        match self {
            FeatureModel::UniformThreshold { thresholds } => {
                let h = thresholds[group];
                let dtpr = if t >= h { -1.0 / (1.0 - h) } else { 0.0 };
                let dfpr = if t < h { -1.0 / h } else { 0.0 };
                (dtpr, dfpr)
            }
            FeatureModel::Score { groups } => {
                let g = &groups[group];
                (-g.y1.slope(t), -g.y0.slope(t))
            }
            FeatureModel::GaussianHalfspace { .. } => (f64::NAN, f64::NAN),
        }
    }
}

fn check_threshold(t: f64) -> Result<()> {
    if (0.0..=1.0).contains(&t) {
        Ok(())
    } else {
        Err(Error::Domain(format!("threshold {t} outside [0, 1]")))
    }
}

/// Rates of a uniform-score group qualified above `h`, under threshold `t`.
pub(crate) fn uniform_rates(h: f64, t: f64) -> (f64, f64) {
    let tpr = ((1.0 - t.max(h)) / (1.0 - h)).min(1.0);
    let fpr = if t <= h { (h - t) / h } else { 0.0 };
    (tpr, fpr)
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Angle between two unit vectors divided by pi, in `[0, 1]`.
pub fn normalized_angle(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    let sum: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x + y) * (x + y))
        .sum::<f64>()
        .sqrt();
    (2.0 * diff.atan2(sum) / std::f64::consts::PI).clamp(0.0, 1.0)
}

/// Point at fraction `t` of the geodesic from unit vector `a` to `b`.
pub fn slerp(a: &[f64], b: &[f64], t: f64) -> Vec<f64> {
    if t == 0.0 {
        return a.to_vec();
    }
    if t == 1.0 {
        return b.to_vec();
    }
    let omega = normalized_angle(a, b) * std::f64::consts::PI;
    let s = omega.sin();
    let wa = ((1.0 - t) * omega).sin() / s;
    let wb = (t * omega).sin() / s;
    let v: Vec<f64> = a.iter().zip(b).map(|(x, y)| wa * x + wb * y).collect();
    let n = norm(&v);
    v.into_iter().map(|x| x / n).collect()
}

/// Normalized midpoint `(a + b) / |a + b|`.
pub fn midpoint(a: &[f64], b: &[f64]) -> Vec<f64> {
    let v: Vec<f64> = a.iter().zip(b).map(|(x, y)| x + y).collect();
    let n = norm(&v);
    v.into_iter().map(|x| x / n).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn gaussian(h: Vec<Vec<f64>>) -> FeatureModel {
        FeatureModel::GaussianHalfspace { normals: h }
            .validate(2)
            .unwrap()
    }

    #[test]
    fn uniform_threshold_rates() {
        let m = FeatureModel::UniformThreshold {
            thresholds: vec![0.8],
        };
        let (tpr, fpr) = m.tpr_fpr(0, &Theta::Threshold(0.4)).unwrap();
        assert_eq!(tpr, 1.0);
        assert!((fpr - 0.5).abs() < 1e-15);
        assert_eq!(m.tpr_fpr(0, &Theta::Threshold(0.8)).unwrap(), (1.0, 0.0));
        assert!(matches!(
            m.tpr_fpr(0, &Theta::Threshold(1.2)),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn gaussian_rates() {
        let m = gaussian(vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        let own = Theta::Hyperplane {
            normal: vec![1.0, 0.0],
            arc: None,
        };
        assert_eq!(m.tpr_fpr(0, &own).unwrap(), (1.0, 0.0));
        let orth = Theta::Hyperplane {
            normal: vec![0.0, 1.0],
            arc: None,
        };
        let (tpr, fpr) = m.tpr_fpr(0, &orth).unwrap();
        assert!((tpr - 0.5).abs() < 1e-15 && (fpr - 0.5).abs() < 1e-15);
    }

    #[test]
    fn gaussian_rejects_equal_normals() {
        let m = FeatureModel::GaussianHalfspace {
            normals: vec![vec![1.0, 0.0], vec![2.0, 0.0]],
        };
        assert!(m.validate(2).is_err());
    }

    #[test]
    fn midpoint_of_axes() {
        let m = midpoint(&[1.0, 0.0], &[0.0, 1.0]);
        let r = std::f64::consts::FRAC_1_SQRT_2;
        assert!((m[0] - r).abs() < 1e-15 && (m[1] - r).abs() < 1e-15);
    }

    #[test]
    fn score_rates_follow_cdfs() {
        let g = ScoreGroup {
            y1: ScoreDist::beta(5.0, 2.0).unwrap(),
            y0: ScoreDist::beta(2.0, 5.0).unwrap(),
        };
        let m = FeatureModel::Score {
            groups: vec![g.clone()],
        };
        let (tpr, fpr) = m.tpr_fpr(0, &Theta::Threshold(0.5)).unwrap();
        assert!((tpr - (1.0 - g.y1.cdf(0.5))).abs() < 1e-15);
        assert!((fpr - (1.0 - g.y0.cdf(0.5))).abs() < 1e-15);
        // phi = ((1 - x) / x)^3 for this pair
        let x = 0.3;
        assert!((g.likelihood_ratio(x) - ((1.0 - x) / x).powi(3)).abs() < 1e-10);
    }

    #[test]
    fn spec_resolution_checks_groups() {
        use crate::costs::CostModel;
        use crate::economy::GroupSpec;
        let groups = Groups::new(vec![
            GroupSpec::new("a", 0.5, CostModel::uniform()),
            GroupSpec::new("b", 0.5, CostModel::uniform()),
        ])
        .unwrap();
        let mut thresholds = BTreeMap::new();
        thresholds.insert("a".to_string(), 0.4);
        let spec = FeatureSpec::UniformThreshold {
            thresholds: thresholds.clone(),
        };
        assert!(spec.resolve(&groups).is_err());
        thresholds.insert("b".to_string(), 0.8);
        thresholds.insert("c".to_string(), 0.8);
        let spec = FeatureSpec::UniformThreshold { thresholds };
        assert!(spec.resolve(&groups).is_err());
    }

    fn unit(v: (f64, f64, f64)) -> Vec<f64> {
        let n = (v.0 * v.0 + v.1 * v.1 + v.2 * v.2).sqrt();
        vec![v.0 / n, v.1 / n, v.2 / n]
    }

    proptest! {
        #[test]
        fn rates_stay_in_unit_interval(h in 0.01f64..0.99, t in 0.0f64..=1.0) {
            let m = FeatureModel::UniformThreshold { thresholds: vec![h] };
            let (tpr, fpr) = m.tpr_fpr(0, &Theta::Threshold(t)).unwrap();
            prop_assert!((0.0..=1.0).contains(&tpr) && (0.0..=1.0).contains(&fpr));
        }

        #[test]
        fn halfspace_rates_complement(
            a in (0.1f64..1.0, -1.0f64..1.0, -1.0f64..1.0),
            b in (-1.0f64..1.0, 0.1f64..1.0, -1.0f64..1.0),
            t in 0.0f64..=1.0,
        ) {
            let (ha, hb) = (unit(a), unit(b));
            prop_assume!(normalized_angle(&ha, &hb) > 1e-3 && normalized_angle(&ha, &hb) < 0.999);
            let m = gaussian(vec![ha.clone(), hb.clone()]);
            let h = slerp(&ha, &hb, t);
            let theta = Theta::Hyperplane { normal: h.clone(), arc: None };
            let (tpr, fpr) = m.tpr_fpr(0, &theta).unwrap();
            prop_assert!((tpr + fpr - 1.0).abs() < 1e-12);
            prop_assert!((fpr - normalized_angle(&h, &ha)).abs() < 1e-12);
            // reflecting across the midpoint swaps the groups
            let mirrored = Theta::Hyperplane { normal: slerp(&ha, &hb, 1.0 - t), arc: None };
            let (tpr2, _) = m.tpr_fpr(1, &mirrored).unwrap();
            prop_assert!((tpr2 - tpr).abs() < 1e-9);
        }
    }
}
