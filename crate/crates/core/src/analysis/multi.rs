use serde::Serialize;

use crate::economy::QualificationState;
use crate::error::{Error, Result};
use crate::model::Model;

const ZERO: f64 = 1e-12;

/// `beta(pi) = TPR - FPR` of the institution's best response, sampled on a
/// grid over `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BetaOfPi {
    pub pi: Vec<f64>,
    pub theta: Vec<f64>,
    pub beta: Vec<f64>,
    /// Central differences (one-sided at the ends).
    pub derivative: Vec<f64>,
    /// Largest grid rate below which the institution accepts no one.
    pub pi_bar: f64,
}

pub fn beta_of_pi(model: &Model, grid_size: usize) -> Result<BetaOfPi> {
    if model.group_count() != 1 {
        return Err(Error::Precondition("beta map needs a single group".into()));
    }
    if grid_size < 11 {
        return Err(Error::Precondition(
            "beta map needs at least 11 grid points".into(),
        ));
    }
    let pi: Vec<f64> = (0..grid_size)
        .map(|i| i as f64 / (grid_size - 1) as f64)
        .collect();
    let mut theta = Vec::with_capacity(grid_size);
    let mut beta = Vec::with_capacity(grid_size);
    for &x in &pi {
        let t = model.institution_best_response(&QualificationState::new(vec![x])?)?;
        let (tpr, fpr) = model.rates(0, &t)?;
        theta.push(t.coordinate().unwrap_or(f64::NAN));
        beta.push((tpr - fpr).max(0.0));
    }
    let n = grid_size;
    let derivative = (0..n)
        .map(|i| {
            let (a, b) = (i.saturating_sub(1), (i + 1).min(n - 1));
            (beta[b] - beta[a]) / (pi[b] - pi[a])
        })
        .collect();
    let zeros = beta.iter().take_while(|b| **b <= ZERO).count();
    let pi_bar = if zeros == 0 { 0.0 } else { pi[zeros - 1] };
    Ok(BetaOfPi {
        pi,
        theta,
        beta,
        derivative,
        pi_bar,
    })
}

/// First interior grid rate `x` with `x < G(w beta(x))`, which guarantees at
/// least two non-zero equilibria.
pub fn multi_equilibrium_witness(model: &Model, map: &BetaOfPi) -> Option<f64> {
    let w = model.economy().wage();
    let cost = &model.groups().get(0).cost;
    let n = map.pi.len();
    (1..n - 1)
        .map(|i| (map.pi[i], map.beta[i]))
        .find(|&(x, b)| x < cost.cdf(w * b))
        .map(|(x, _)| x)
}
