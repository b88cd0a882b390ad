use serde::Serialize;

use super::ClosedFormEquilibrium;
use crate::dynamics::Stability;
use crate::error::{Error, Result};
use crate::features::{FeatureModel, Theta};
use crate::model::Model;

/// Closed-form equilibria of the two-group uniform threshold model.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UniformClosedForms {
    pub g: f64,
    /// Sorted pair of the wage bounds: the `h1` equilibrium needs `w > w_lo`,
    /// the `h2` equilibrium needs `w < w_hi`.
    pub w_lo: f64,
    pub w_hi: f64,
    pub h_mid: f64,
    pub equilibria: Vec<ClosedFormEquilibrium>,
}

impl UniformClosedForms {
    pub fn equilibrium(&self, label: &str) -> Option<&ClosedFormEquilibrium> {
        self.equilibria.iter().find(|e| e.label == label)
    }

    /// Whether the wage lies strictly between the two bounds.
    pub fn in_band(&self) -> bool {
        self.equilibria.len() == 3
    }
}

fn rates(h1: f64, h2: f64, w: f64, theta: f64) -> Vec<f64> {
    let g = |x: f64| x.clamp(0.0, 1.0);
    let (tpr1, fpr1) = crate::features::uniform_rates(h1, theta);
    let (tpr2, fpr2) = crate::features::uniform_rates(h2, theta);
    vec![g(w * (tpr1 - fpr1).max(0.0)), g(w * (tpr2 - fpr2).max(0.0))]
}

/// Equilibria for thresholds `h1 < h2`, uniform costs and `n1 p_TP = n2 c_FP`.
pub fn uniform_closed_forms(h1: f64, h2: f64, w: f64) -> Result<UniformClosedForms> {
    if !(0.0 < h1 && h1 < h2 && h2 < 1.0) {
        return Err(Error::Precondition(format!(
            "need 0 < h1 < h2 < 1, got h1 = {h1}, h2 = {h2}"
        )));
    }
    if h2 <= 1.0 - h1 {
        return Err(Error::Assumption(format!(
            "need h2 > 1 - h1, got h1 = {h1}, h2 = {h2}"
        )));
    }
    if !(w > 0.0 && w <= 1.0) {
        return Err(Error::Precondition(format!("wage {w} outside (0, 1]")));
    }
    let q = 1.0 - h1;
    let g = q * (-w * h2 * h2 + h2 * q - w * h1 * q) / (w * (q * q - h2 * h2));
    let b1 = h2 * q / (h2 * h2 + h1 * q);
    let b2 = q * q / ((1.0 - h2) * h2 + q * q);
    let (w_lo, w_hi) = (b1.min(b2), b1.max(b2));
    let h_mid = h1 + g;

    let mut equilibria = Vec::new();
    let low_exists = w > b1;
    let high_exists = w < b2;
    if low_exists {
        equilibria.push(ClosedFormEquilibrium {
            label: "h1".into(),
            theta: Theta::Threshold(h1),
            pi: rates(h1, h2, w, h1),
            stability: Stability::Stable,
        });
    }
    if low_exists && high_exists && g > 0.0 && g < h2 - h1 {
        equilibria.push(ClosedFormEquilibrium {
            label: "h_mid".into(),
            theta: Theta::Threshold(h_mid),
            pi: rates(h1, h2, w, h_mid),
            stability: Stability::Unstable,
        });
    }
    if high_exists {
        equilibria.push(ClosedFormEquilibrium {
            label: "h2".into(),
            theta: Theta::Threshold(h2),
            pi: rates(h1, h2, w, h2),
            stability: Stability::Stable,
        });
    }
    Ok(UniformClosedForms {
        g,
        w_lo,
        w_hi,
        h_mid,
        equilibria,
    })
}

/// Checks the model matches the closed-form assumptions, then evaluates them.
pub fn uniform_closed_forms_for(model: &Model) -> Result<UniformClosedForms> {
    let FeatureModel::UniformThreshold { thresholds } = model.features() else {
        return Err(Error::Assumption("not a uniform threshold model".into()));
    };
    if thresholds.len() != 2 {
        return Err(Error::Assumption(
            "closed forms need exactly two groups".into(),
        ));
    }
    if !model.groups().iter().all(|g| g.cost.is_uniform01()) {
        return Err(Error::Assumption("closed forms need uniform costs".into()));
    }
    let n = model.groups().proportions();
    let e = model.economy();
    let lhs = n[0] * e.payoff_tp();
    let rhs = n[1] * e.cost_fp();
    if (lhs - rhs).abs() > 1e-12 * lhs.max(rhs) {
        return Err(Error::Assumption(format!(
            "need n1 p_TP = n2 c_FP, got {lhs} and {rhs}"
        )));
    }
    if thresholds[0] >= thresholds[1] {
        return Err(Error::Assumption(
            "closed forms need the first group's threshold below the second's".into(),
        ));
    }
    uniform_closed_forms(thresholds[0], thresholds[1], e.wage())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_example() {
        let cf = uniform_closed_forms(0.4, 0.8, 0.6).unwrap();
        assert!((cf.g - 0.171429).abs() < 1e-6);
        assert!((cf.h_mid - 0.571429).abs() < 1e-6);
        assert!((cf.w_lo - 0.545455).abs() < 1e-6);
        assert!((cf.w_hi - 0.692308).abs() < 1e-6);
        let h1 = cf.equilibrium("h1").unwrap();
        assert!((h1.pi[0] - 0.6).abs() < 1e-12 && (h1.pi[1] - 0.3).abs() < 1e-12);
        let h2 = cf.equilibrium("h2").unwrap();
        assert!((h2.pi[0] - 0.2).abs() < 1e-12 && (h2.pi[1] - 0.6).abs() < 1e-12);
        let mid = cf.equilibrium("h_mid").unwrap();
        assert!((mid.pi[0] - 3.0 / 7.0).abs() < 1e-12 && (mid.pi[1] - 3.0 / 7.0).abs() < 1e-12);
    }

    #[test]
    fn balanced_point_satisfies_indifference() {
        // G(w (1 - h1 - g) / (1 - h1)) / (1 - h1) = (1 - G(w (h1 + g) / h2)) / h2
        let (h1, h2, w) = (0.4, 0.8, 0.6);
        let cf = uniform_closed_forms(h1, h2, w).unwrap();
        let lhs = (w * (1.0 - h1 - cf.g) / (1.0 - h1)) / (1.0 - h1);
        let rhs = (1.0 - w * (h1 + cf.g) / h2) / h2;
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn outside_band_keeps_one_equilibrium() {
        let low = uniform_closed_forms(0.4, 0.8, 0.5).unwrap();
        assert_eq!(low.equilibria.len(), 1);
        assert_eq!(low.equilibria[0].label, "h2");
        let high = uniform_closed_forms(0.4, 0.8, 0.8).unwrap();
        assert_eq!(high.equilibria.len(), 1);
        assert_eq!(high.equilibria[0].label, "h1");
    }

    #[test]
    fn refuses_outside_assumptions() {
        assert!(matches!(
            uniform_closed_forms(0.3, 0.6, 0.6),
            Err(Error::Assumption(_))
        ));
        assert!(uniform_closed_forms(0.8, 0.4, 0.6).is_err());
    }
}
