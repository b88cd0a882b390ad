use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{classify_stability, iterate, phi, DynamicsConfig, Mode, Stability, Verdict};
use crate::economy::QualificationState;
use crate::error::Result;
use crate::features::{FeatureModel, Theta};
use crate::model::{Assessment, Model};

const BISECTION_ITERS: usize = 200;

/// Grid resolution of equilibrium scans.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScanConfig {
    /// Starting points per axis for multi-group scans.
    pub points: usize,
    /// Grid size of one-dimensional sign-change scans.
    pub line_points: usize,
}

impl Default for ScanConfig {
    fn default() -> Self {
        ScanConfig {
            points: 21,
            line_points: 201,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EquilibriumKind {
    FixedPoint,
    LimitCycle {
        states: Vec<QualificationState>,
        period: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Equilibrium {
    pub state: QualificationState,
    pub assessment: Assessment,
    pub kind: EquilibriumKind,
    pub residual: f64,
    /// All rates zero.
    pub trivial: bool,
    /// Basin-probing label; authoritative.
    pub stability: Stability,
    /// Finite-difference slope of the one-group map at the equilibrium.
    pub derivative: Option<f64>,
    pub derivative_stable: Option<bool>,
    /// `G'(w beta) < |beta'|`, recorded as stated without being relied on.
    pub literal_condition: Option<bool>,
    /// The derivative test and basin probing disagree.
    pub disagreement: bool,
}

impl Equilibrium {
    pub fn is_fixed_point(&self) -> bool {
        matches!(self.kind, EquilibriumKind::FixedPoint)
    }

    /// Coordinate of the assessment (threshold or arc position).
    pub fn theta_coordinate(&self) -> Option<f64> {
        match &self.assessment {
            Assessment::Joint(t) => t.coordinate(),
            Assessment::PerGroup(_) => None,
        }
    }
}

/// Number of strict sign changes in a sequence, skipping exact zeros.
pub fn sign_changes(values: &[f64]) -> usize {
    let signs: Vec<bool> = values
        .iter()
        .filter(|v| **v != 0.0)
        .map(|v| *v > 0.0)
        .collect();
    signs.windows(2).filter(|w| w[0] != w[1]).count()
}

fn grid(n: usize) -> Vec<f64> {
    (0..n).map(|i| i as f64 / (n - 1) as f64).collect()
}

/// Zeros and bisected sign changes of `f` sampled at `xs`.
fn line_roots<F>(f: F, xs: &[f64], values: &[f64], zero_tol: f64) -> Result<Vec<f64>>
where
    F: Fn(f64) -> Result<f64>,
{
    let mut roots = Vec::new();
    for i in 0..xs.len() {
        if values[i].abs() <= zero_tol {
            roots.push(xs[i]);
            continue;
        }
        if i + 1 < xs.len()
            && values[i + 1].abs() > zero_tol
            && values[i].signum() != values[i + 1].signum()
        {
            let (mut lo, mut hi) = (xs[i], xs[i + 1]);
            let lo_sign = values[i].signum();
            let mut root = None;
            for _ in 0..BISECTION_ITERS {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                let v = f(mid)?;
                if v.abs() <= zero_tol {
                    root = Some(mid);
                    break;
                }
                if v.signum() == lo_sign {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            roots.push(root.unwrap_or(0.5 * (lo + hi)));
        }
    }
    Ok(roots)
}

struct Candidate {
    state: QualificationState,
    cycle: Option<Vec<QualificationState>>,
    residual: f64,
}

fn residual(model: &Model, state: &QualificationState, mode: Mode) -> Result<f64> {
    Ok(phi(model, state, mode)?.distance(state))
}

fn one_dimensional(
    model: &Model,
    dynamics: &DynamicsConfig,
    scan: &ScanConfig,
) -> Result<Vec<Candidate>> {
    let n = model.group_count();
    let xs = grid(scan.line_points.max(3));
    // every group sees its own coordinate; in joint mode there is only one group
    let eval = |x: f64| -> Result<Vec<f64>> {
        let s = QualificationState::new(vec![x; n])?;
        let next = phi(model, &s, dynamics.mode)?;
        Ok(next.rates().iter().map(|r| r - x).collect())
    };
    let table = xs
        .par_iter()
        .map(|&x| eval(x))
        .collect::<Result<Vec<_>>>()?;
    let mut per_group: Vec<Vec<f64>> = Vec::with_capacity(n);
    for a in 0..n {
        let values: Vec<f64> = table.iter().map(|row| row[a]).collect();
        let roots = line_roots(|x| Ok(eval(x)?[a]), &xs, &values, dynamics.fix_tol * 1e-3)?;
        per_group.push(roots);
    }
    let mut states: Vec<Vec<f64>> = vec![Vec::new()];
    for roots in &per_group {
        states = states
            .iter()
            .flat_map(|prefix| {
                roots.iter().map(move |&r| {
                    let mut s = prefix.clone();
                    s.push(r);
                    s
                })
            })
            .collect();
    }
    let mut out = Vec::new();
    for s in states {
        let state = QualificationState::new(s)?;
        let r = residual(model, &state, dynamics.mode)?;
        if r <= dynamics.fix_tol {
            out.push(Candidate {
                state,
                cycle: None,
                residual: r,
            });
        }
    }
    Ok(out)
}

fn parameter_theta(model: &Model, u: f64) -> Option<Theta> {
    match model.features() {
        FeatureModel::GaussianHalfspace { .. } => model.arc.as_ref().map(|_| model.arc_theta(u)),
        _ => Some(Theta::Threshold(u)),
    }
}

/// Fixed points of the composed map located through the shared parameter:
/// `u` is an equilibrium parameter when the best response to the rates it
/// induces is `u` again. This also finds equilibria no trajectory reaches.
fn parameter_scan(
    model: &Model,
    dynamics: &DynamicsConfig,
    scan: &ScanConfig,
) -> Result<Vec<Candidate>> {
    if parameter_theta(model, 0.0).is_none() {
        return Ok(Vec::new());
    }
    let induced = |u: f64| -> Result<QualificationState> {
        let theta = parameter_theta(model, u).expect("parameterized model");
        model.individual_best_response(&Assessment::Joint(theta))
    };
    let gap = |u: f64| -> Result<f64> {
        let s = induced(u)?;
        let t = model.institution_best_response(&s)?;
        Ok(t.coordinate().unwrap_or(f64::NAN) - u)
    };
    let us = grid(scan.line_points.max(3));
    let values = us.par_iter().map(|&u| gap(u)).collect::<Result<Vec<_>>>()?;
    let roots = line_roots(gap, &us, &values, 1e-12)?;
    let mut out = Vec::new();
    for u in roots {
        let state = induced(u)?;
        let r = residual(model, &state, Mode::Joint)?;
        if r <= dynamics.fix_tol {
            out.push(Candidate {
                state,
                cycle: None,
                residual: r,
            });
        }
    }
    Ok(out)
}

fn starts(groups: usize, points: usize) -> Result<Vec<QualificationState>> {
    let axis = grid(points.max(2));
    let mut out: Vec<Vec<f64>> = Vec::new();
    if groups <= 2 {
        out.push(Vec::new());
        for _ in 0..groups {
            out = out
                .iter()
                .flat_map(|p| {
                    axis.iter().map(move |&x| {
                        let mut s = p.clone();
                        s.push(x);
                        s
                    })
                })
                .collect();
        }
    } else {
        for &x in &axis {
            out.push(vec![x; groups]);
            for a in 0..groups {
                let mut s = vec![0.5; groups];
                s[a] = x;
                out.push(s);
            }
        }
    }
    out.into_iter().map(QualificationState::new).collect()
}

fn canonical_cycle(states: &[QualificationState]) -> Vec<QualificationState> {
    let first = (0..states.len())
        .min_by(|&a, &b| {
            states[a]
                .rates()
                .partial_cmp(states[b].rates())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
        .unwrap_or(0);
    states[first..]
        .iter()
        .chain(&states[..first])
        .cloned()
        .collect()
}

fn trajectory_scan(
    model: &Model,
    dynamics: &DynamicsConfig,
    scan: &ScanConfig,
) -> Result<Vec<Candidate>> {
    let outcomes = starts(model.group_count(), scan.points)?
        .par_iter()
        .map(|s| iterate(model, s, dynamics))
        .collect::<Result<Vec<_>>>()?;
    let mut out = Vec::new();
    for o in outcomes {
        match o.verdict {
            Verdict::FixedPoint { state } => {
                let r = residual(model, &state, dynamics.mode)?;
                out.push(Candidate {
                    state,
                    cycle: None,
                    residual: r,
                });
            }
            Verdict::LimitCycle { states, .. } => {
                let states = canonical_cycle(&states);
                let mut r: f64 = 0.0;
                for i in 0..states.len() {
                    let next = phi(model, &states[i], dynamics.mode)?;
                    r = r.max(next.distance(&states[(i + 1) % states.len()]));
                }
                out.push(Candidate {
                    state: states[0].clone(),
                    cycle: Some(states),
                    residual: r,
                });
            }
            Verdict::NonConverged => {}
        }
    }
    Ok(out)
}

fn same(a: &Candidate, b: &Candidate, radius: f64) -> bool {
    match (&a.cycle, &b.cycle) {
        (None, None) => a.state.distance(&b.state) <= radius,
        (Some(x), Some(y)) => {
            x.len() == y.len() && x.iter().all(|s| y.iter().any(|t| s.distance(t) <= radius))
        }
        _ => false,
    }
}

fn cluster(candidates: Vec<Candidate>, radius: f64) -> Vec<Candidate> {
    let mut kept: Vec<Candidate> = Vec::new();
    for c in candidates {
        match kept.iter_mut().find(|k| same(k, &c, radius)) {
            Some(k) => {
                if c.residual < k.residual {
                    *k = c;
                }
            }
            None => kept.push(c),
        }
    }
    kept
}

fn derivative_tests(
    model: &Model,
    state: &QualificationState,
    dynamics: &DynamicsConfig,
) -> Result<(f64, bool)> {
    let x = state.get(0);
    let h = dynamics.perturb_eps;
    let (lo, hi) = ((x - h).max(0.0), (x + h).min(1.0));
    let at = |v: f64| -> Result<(f64, f64)> {
        let s = QualificationState::new(vec![v])?;
        let (a, next) = crate::dynamics::step(model, &s, dynamics.mode)?;
        let (tpr, fpr) = model.rates(0, a.for_group(0))?;
        Ok((next.get(0), (tpr - fpr).max(0.0)))
    };
    let (phi_lo, beta_lo) = at(lo)?;
    let (phi_hi, beta_hi) = at(hi)?;
    let (_, beta_x) = at(x)?;
    let slope = (phi_hi - phi_lo) / (hi - lo);
    let beta_slope = (beta_hi - beta_lo) / (hi - lo);
    let density = model
        .groups()
        .get(0)
        .cost
        .density(model.economy().wage() * beta_x);
    Ok((slope, density < beta_slope.abs()))
}

/// Enumerates equilibria and limit cycles.
///
/// With one free coordinate per group (one group, or decoupled mode) the
/// fixed points are sign changes of `Phi(pi) - pi`, refined by bisection.
/// Otherwise trajectories are run from a grid of starts and combined with a
/// scan over the shared assessment parameter. Results are clustered within
/// `10 * fix_tol`.
pub fn find_equilibria_scan(
    model: &Model,
    dynamics: &DynamicsConfig,
    scan: &ScanConfig,
) -> Result<Vec<Equilibrium>> {
    dynamics.validate()?;
    let separable = model.group_count() == 1 || dynamics.mode == Mode::Decoupled;
    let mut candidates = if separable {
        one_dimensional(model, dynamics, scan)?
    } else {
        let mut c = trajectory_scan(model, dynamics, scan)?;
        c.extend(parameter_scan(model, dynamics, scan)?);
        c
    };
    candidates.sort_by(|a, b| {
        a.state
            .rates()
            .partial_cmp(b.state.rates())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cycle.is_some().cmp(&b.cycle.is_some()))
    });
    let kept = cluster(candidates, 10.0 * dynamics.fix_tol);
    kept.into_par_iter()
        .map(|c| {
            let assessment = model.best_response(&c.state, dynamics.mode == Mode::Decoupled)?;
            let trivial = c.state.rates().iter().all(|r| *r == 0.0);
            match c.cycle {
                Some(states) => Ok(Equilibrium {
                    state: c.state,
                    assessment,
                    kind: EquilibriumKind::LimitCycle {
                        period: states.len(),
                        states,
                    },
                    residual: c.residual,
                    trivial,
                    stability: Stability::NotAssessed,
                    derivative: None,
                    derivative_stable: None,
                    literal_condition: None,
                    disagreement: false,
                }),
                None => {
                    let stability = classify_stability(model, &c.state, dynamics)?.label;
                    let (derivative, literal_condition) = if model.group_count() == 1 {
                        let (d, p) = derivative_tests(model, &c.state, dynamics)?;
                        (Some(d), Some(p))
                    } else {
                        (None, None)
                    };
                    let derivative_stable = derivative.map(|d| d.abs() < 1.0);
                    let disagreement =
                        derivative_stable.is_some_and(|d| d != (stability == Stability::Stable));
                    Ok(Equilibrium {
                        state: c.state,
                        assessment,
                        kind: EquilibriumKind::FixedPoint,
                        residual: c.residual,
                        trivial,
                        stability,
                        derivative,
                        derivative_stable,
                        literal_condition,
                        disagreement,
                    })
                }
            }
        })
        .collect()
}
