use serde::Serialize;

use crate::costs::CostModel;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NearBound {
    /// `G(w (1 - eps / s))`.
    pub bound: f64,
    pub lipschitz: Option<f64>,
    pub hypotheses_checked: bool,
    pub warning: Option<String>,
}

/// Lower bound on equilibria reached from `[s, 1 - s]` when some assessment
/// achieves `TPR = 1 - eps` and `FPR = eps`.
pub fn near_realizability_bound(eps: f64, s: f64, w: f64, cost: &CostModel) -> Result<NearBound> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Precondition(format!("eps = {eps} outside (0, 1)")));
    }
    if !(s > 0.0 && s < 0.5) {
        return Err(Error::Precondition(format!("s = {s} outside (0, 1/2)")));
    }
    let gw = cost.cdf(w);
    let lipschitz = cost
        .declared_lipschitz()
        .unwrap_or_else(|| cost.lipschitz_bound());
    let (lipschitz, warning) = if lipschitz.is_finite() {
        (Some(lipschitz), None)
    } else {
        (
            None,
            Some("no Lipschitz constant available; hypotheses not checked".to_string()),
        )
    };
    if let Some(l) = lipschitz {
        let floor = s + l * w * eps / s;
        if gw > 1.0 - s || gw < floor {
            return Err(Error::Assumption(format!(
                "need 1 - s >= G(w) >= s + L w eps / s, got G(w) = {gw}, 1 - s = {}, lower = {floor}",
                1.0 - s
            )));
        }
    }
    Ok(NearBound {
        bound: cost.cdf((w * (1.0 - eps / s)).max(0.0)),
        hypotheses_checked: lipschitz.is_some(),
        lipschitz,
        warning,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_bound() {
        let b = near_realizability_bound(0.05, 0.25, 0.5, &CostModel::uniform()).unwrap();
        assert!((b.bound - 0.4).abs() < 1e-15);
        assert!(b.hypotheses_checked);
    }

    #[test]
    fn small_eps_recovers_g_of_w() {
        let b = near_realizability_bound(1e-9, 0.25, 0.5, &CostModel::uniform()).unwrap();
        assert!((b.bound - 0.5).abs() < 1e-7);
    }

    #[test]
    fn hypothesis_failure() {
        // G(w) = 0.9 > 1 - s
        let r = near_realizability_bound(0.05, 0.25, 0.9, &CostModel::uniform());
        assert!(matches!(r, Err(Error::Assumption(_))));
        assert!(near_realizability_bound(0.05, 0.6, 0.5, &CostModel::uniform()).is_err());
    }
}
