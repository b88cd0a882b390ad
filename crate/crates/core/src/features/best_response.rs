//! The institution's best response over the parameter space.
//!
//! Scalar models (threshold decisions) are solved by an exhaustive grid
//! argmax followed by one refinement pass: bisection on the utility slope
//! around an interior peak, ternary search otherwise. When the utility is
//! flat across the tied grid points, the institution picks the tied parameter
//! whose induced qualification rates are closest to the current ones, then
//! the smallest parameter. This keeps indifference points (the balanced
//! equilibria) fixed under the dynamics and sends an all-zero state to the
//! accept-no-one threshold.
//!
//! Two-group halfspace models are solved on the geodesic between the two
//! group normals; exact indifference selects the midpoint normal.

use serde::Serialize;

use super::{FeatureModel, Theta};
use crate::economy::QualificationState;
use crate::error::{Error, Result};
use crate::model::{Assessment, Model};

const TERNARY_ITERS: usize = 100;
const PHI_CHECK_POINTS: usize = 1000;
const ENDPOINT_EPS: f64 = 1e-9;
/// A tie set is flat when it spans at least this many grid points and the
/// utility varies by at most `FLAT_SPREAD` (relative to the payoffs) across it.
const FLAT_TIE_POINTS: usize = 3;
const FLAT_SPREAD: f64 = 1e-12;
const BISECTION_ITERS: usize = 200;
/// Refined maxima this close to a grid point are reported as the grid point.
const SNAP: f64 = 1e-12;

/// Threshold chosen by the likelihood-ratio rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThresholdChoice {
    pub theta: f64,
    /// False when the likelihood ratio failed validation and the grid solver
    /// was used instead.
    pub analytic: bool,
}

fn ternary<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, maximize: bool) -> f64 {
    let sign = if maximize { 1.0 } else { -1.0 };
    for _ in 0..TERNARY_ITERS {
        let m1 = lo + (hi - lo) / 3.0;
        let m2 = hi - (hi - lo) / 3.0;
        if sign * f(m1) < sign * f(m2) {
            lo = m1;
        } else {
            hi = m2;
        }
    }
    0.5 * (lo + hi)
}

/// Midpoint normal `(h1 + h2) / |h1 + h2|`, chosen when the institution is
/// indifferent along the whole arc.
pub fn gaussian_tiebreak(model: &Model) -> Result<Theta> {
    match &model.arc {
        Some(arc) => Ok(Theta::Hyperplane {
            normal: arc.mid.clone(),
            arc: Some(0.5),
        }),
        None => Err(Error::Unsupported(
            "tie-break applies to two-group halfspace models".into(),
        )),
    }
}

impl Model {
    /// Shared parameter maximizing institutional utility at `state`.
    pub fn institution_best_response(&self, state: &QualificationState) -> Result<Theta> {
        state.check_groups(self.groups())?;
        match self.features() {
            FeatureModel::GaussianHalfspace { normals } => {
                if normals.len() == 1 {
                    Ok(self.own_hyperplane(0))
                } else {
                    Ok(self.solve_arc(state))
                }
            }
            _ => {
                let members: Vec<(usize, f64)> = self
                    .groups()
                    .iter()
                    .enumerate()
                    .map(|(a, g)| (a, g.proportion))
                    .collect();
                Ok(Theta::Threshold(self.solve_scalar(&members, state.rates())))
            }
        }
    }

    /// Group-specific parameter for decoupled assessment.
    pub fn group_best_response(&self, group: usize, state: &QualificationState) -> Result<Theta> {
        state.check_groups(self.groups())?;
        if group >= self.group_count() {
            return Err(Error::Config(format!("no group with index {group}")));
        }
        match self.features() {
            FeatureModel::GaussianHalfspace { .. } => Ok(self.own_hyperplane(group)),
            _ => Ok(Theta::Threshold(
                self.solve_scalar(&[(group, 1.0)], state.rates()),
            )),
        }
    }

    /// Joint or decoupled best response.
    pub fn best_response(&self, state: &QualificationState, decoupled: bool) -> Result<Assessment> {
        if decoupled {
            let thetas = (0..self.group_count())
                .map(|a| self.group_best_response(a, state))
                .collect::<Result<Vec<_>>>()?;
            Ok(Assessment::PerGroup(thetas))
        } else {
            Ok(Assessment::Joint(self.institution_best_response(state)?))
        }
    }

    fn own_hyperplane(&self, group: usize) -> Theta {
        let FeatureModel::GaussianHalfspace { normals } = self.features() else {
            unreachable!("halfspace model")
        };
        let arc = if self.arc.is_some() {
            Some(if group == 0 { 0.0 } else { 1.0 })
        } else {
            None
        };
        Theta::Hyperplane {
            normal: normals[group].clone(),
            arc,
        }
    }

    fn solve_arc(&self, state: &QualificationState) -> Theta {
        let (p, c) = (self.economy().payoff_tp(), self.economy().cost_fp());
        let n: Vec<f64> = self.groups().proportions();
        let pi = state.rates();
        // utility along the arc is linear with slope set by these weights
        let k1 = n[0] * (p * pi[0] + c * (1.0 - pi[0]));
        let k2 = n[1] * (p * pi[1] + c * (1.0 - pi[1]));
        let n_max = n[0].max(n[1]);
        if (k1 - k2).abs() <= self.tol() * n_max * (p - c).abs() {
            return gaussian_tiebreak(self).expect("two-group halfspace model");
        }
        let mut best = 0;
        let mut best_u = f64::NEG_INFINITY;
        for (i, row) in self.table.iter().enumerate() {
            let u = self.row_utility(row, &[(0, n[0]), (1, n[1])], pi);
            if u > best_u {
                best_u = u;
                best = i;
            }
        }
        self.arc_theta(self.grid[best])
    }

    fn row_utility(&self, row: &[(f64, f64)], members: &[(usize, f64)], pi: &[f64]) -> f64 {
        let (p, c) = (self.economy().payoff_tp(), self.economy().cost_fp());
        members
            .iter()
            .map(|&(a, w)| {
                let (tpr, fpr) = row[a];
                w * (p * tpr * pi[a] - c * fpr * (1.0 - pi[a]))
            })
            .sum()
    }

    fn scalar_row(&self, members: &[(usize, f64)], u: f64) -> Vec<(f64, f64)> {
        let mut row = vec![(0.0, 0.0); self.group_count()];
        for &(a, _) in members {
            row[a] = self
                .features()
                .tpr_fpr(a, &Theta::Threshold(u))
                .expect("threshold inside [0, 1]");
        }
        row
    }

    fn response_gap(&self, row: &[(f64, f64)], members: &[(usize, f64)], pi: &[f64]) -> f64 {
        members
            .iter()
            .map(|&(a, _)| (self.response_rate(a, row[a].0, row[a].1) - pi[a]).abs())
            .fold(0.0, f64::max)
    }

    fn utility_slope(&self, members: &[(usize, f64)], pi: &[f64], u: f64) -> f64 {
        let (p, c) = (self.economy().payoff_tp(), self.economy().cost_fp());
        members
            .iter()
            .map(|&(a, w)| {
                let (dtpr, dfpr) = self.features().rate_slopes(a, u);
                w * (p * dtpr * pi[a] - c * dfpr * (1.0 - pi[a]))
            })
            .sum()
    }

    /// Locates the maximum near grid point `i` inside `[lo, hi]`: by bisection
    /// on the utility slope when it changes sign, else by ternary search.
    fn refine_peak(
        &self,
        members: &[(usize, f64)],
        pi: &[f64],
        lo: f64,
        hi: f64,
        i: usize,
        at_grid: f64,
    ) -> f64 {
        let slope = |u: f64| self.utility_slope(members, pi, u);
        if slope(lo) > 0.0 && slope(hi) < 0.0 {
            let (mut a, mut b) = (lo, hi);
            for _ in 0..BISECTION_ITERS {
                let mid = 0.5 * (a + b);
                if mid <= a || mid >= b {
                    break;
                }
                let s = slope(mid);
                if s > 0.0 {
                    a = mid;
                } else if s < 0.0 {
                    b = mid;
                } else {
                    a = mid;
                    b = mid;
                }
            }
            let root = 0.5 * (a + b);
            if (root - self.grid[i]).abs() <= SNAP {
                return self.grid[i];
            }
            return root;
        }
        let utility_at = |u: f64| self.row_utility(&self.scalar_row(members, u), members, pi);
        let refined = ternary(utility_at, lo, hi, true);
        if utility_at(refined) > at_grid {
            refined
        } else {
            self.grid[i]
        }
    }

    fn solve_scalar(&self, members: &[(usize, f64)], pi: &[f64]) -> f64 {
        let (p, c) = (self.economy().payoff_tp(), self.economy().cost_fp());
        let tie = self.tol() * p.max(c);
        let utils: Vec<f64> = self
            .table
            .iter()
            .map(|row| self.row_utility(row, members, pi))
            .collect();
        let umax = utils.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let tied: Vec<usize> = (0..utils.len())
            .filter(|&i| utils[i] >= umax - tie)
            .collect();
        let last = self.grid.len() - 1;
        let cell = |i: usize| (self.grid[i.saturating_sub(1)], self.grid[(i + 1).min(last)]);
        let utility_at = |u: f64| self.row_utility(&self.scalar_row(members, u), members, pi);
        let (first, last) = (tied[0], *tied.last().expect("non-empty tie set"));
        let spread = umax
            - utils[first..=last]
                .iter()
                .copied()
                .fold(f64::INFINITY, f64::min);
        let flat = tied.len() >= FLAT_TIE_POINTS && spread <= FLAT_SPREAD * p.max(c);
        if !flat {
            let i = tied.iter().copied().fold(
                first,
                |best, j| if utils[j] > utils[best] { j } else { best },
            );
            let (lo, _) = cell(first);
            let (_, hi) = cell(last);
            return self.refine_peak(members, pi, lo, hi, i, utils[i]);
        }

        let mut best = tied[0];
        let mut best_gap = f64::INFINITY;
        for &i in &tied {
            let gap = self.response_gap(&self.table[i], members, pi);
            if gap < best_gap {
                best_gap = gap;
                best = i;
            }
        }
        if best_gap == 0.0 {
            return self.grid[best];
        }
        let gap_at = |u: f64| self.response_gap(&self.scalar_row(members, u), members, pi);
        let (lo, hi) = cell(best);
        let refined = ternary(gap_at, lo, hi, false);
        if gap_at(refined) < best_gap && utility_at(refined) >= umax - tie {
            return refined;
        }
        self.grid[best]
    }

    /// Threshold `inf { x : r >= (1 - pi) / pi * phi(x) }` for a single-group
    /// score model with a strictly decreasing likelihood ratio `phi`.
    pub fn coate_loury_threshold(&self, state: &QualificationState) -> Result<ThresholdChoice> {
        state.check_groups(self.groups())?;
        let FeatureModel::Score { groups } = self.features() else {
            return Err(Error::Unsupported(
                "likelihood-ratio rule needs a score model".into(),
            ));
        };
        if groups.len() != 1 {
            return Err(Error::Unsupported(
                "likelihood-ratio rule needs a single group".into(),
            ));
        }
        let pi = state.get(0);
        if pi == 0.0 {
            return Ok(ThresholdChoice {
                theta: 1.0,
                analytic: true,
            });
        }
        let group = &groups[0];
        let phi_ok = {
            let values: Vec<f64> = (1..PHI_CHECK_POINTS)
                .map(|k| group.likelihood_ratio(k as f64 / PHI_CHECK_POINTS as f64))
                .collect();
            values.iter().all(|v| v.is_finite() && *v > 0.0)
                && values.windows(2).all(|w| w[1] < w[0])
        };
        if !phi_ok {
            let theta = self.institution_best_response(state)?;
            return Ok(ThresholdChoice {
                theta: theta.threshold().expect("scalar model"),
                analytic: false,
            });
        }
        let r = self.economy().ratio();
        let odds = (1.0 - pi) / pi;
        let accepts = |x: f64| r >= odds * group.likelihood_ratio(x);
        if accepts(ENDPOINT_EPS) {
            return Ok(ThresholdChoice {
                theta: 0.0,
                analytic: true,
            });
        }
        if !accepts(1.0 - ENDPOINT_EPS) {
            return Ok(ThresholdChoice {
                theta: 1.0,
                analytic: true,
            });
        }
        let (mut lo, mut hi) = (ENDPOINT_EPS, 1.0 - ENDPOINT_EPS);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if accepts(mid) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(ThresholdChoice {
            theta: hi,
            analytic: true,
        })
    }
}
