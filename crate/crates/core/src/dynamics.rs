//! Iterating the composed best-response map, detecting fixed points and
//! cycles, and probing the stability of fixed points.

use std::collections::BTreeMap;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::economy::{balance, QualificationState};
use crate::error::{Error, Result};
use crate::features::Theta;
use crate::model::{Assessment, Model};

/// Whether the institution uses one rule for everyone or one per group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Joint,
    Decoupled,
}

/// Iteration and stability-probe settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DynamicsConfig {
    pub mode: Mode,
    pub max_iters: usize,
    /// Sup-norm tolerance on qualification rates.
    pub fix_tol: f64,
    /// How many recent states are scanned for a recurrence.
    pub cycle_window: usize,
    pub perturb_eps: f64,
    /// Joint random perturbations added to the per-coordinate probes.
    pub random_probes: usize,
    pub probe_seed: u64,
}

impl Default for DynamicsConfig {
    fn default() -> Self {
        DynamicsConfig {
            mode: Mode::Joint,
            max_iters: 500,
            fix_tol: 1e-9,
            cycle_window: 64,
            perturb_eps: 1e-4,
            random_probes: 1,
            probe_seed: 0,
        }
    }
}

impl DynamicsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters < 1 {
            return Err(Error::Config("max_iters must be at least 1".into()));
        }
        if !(self.fix_tol > 0.0 && self.fix_tol.is_finite()) {
            return Err(Error::Config("fix_tol must be positive".into()));
        }
        if !(self.perturb_eps > 0.0 && self.perturb_eps.is_finite()) {
            return Err(Error::Config("perturb_eps must be positive".into()));
        }
        if self.cycle_window < 2 {
            return Err(Error::Config("cycle_window must be at least 2".into()));
        }
        Ok(())
    }

    pub fn with_mode(&self, mode: Mode) -> Self {
        DynamicsConfig {
            mode,
            ..self.clone()
        }
    }

    /// Distance within which a perturbed trajectory counts as having returned.
    pub fn return_tol(&self) -> f64 {
        10.0 * self.fix_tol
    }
}

/// One time step: the assessment chosen at `t` and the rates it induced.
/// The initial state is recorded at `t = 0` without an assessment.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceStep {
    pub t: usize,
    pub state: QualificationState,
    pub assessment: Option<Assessment>,
    pub utility: Option<f64>,
    pub balance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Verdict {
    FixedPoint {
        state: QualificationState,
    },
    LimitCycle {
        states: Vec<QualificationState>,
        period: usize,
    },
    NonConverged,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stability {
    Stable,
    Unstable,
    NotAssessed,
}

/// A single perturbed start and whether it came back.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Probe {
    pub start: QualificationState,
    pub returned: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityReport {
    pub label: Stability,
    pub eps: f64,
    pub probes: Vec<Probe>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DynamicsOutcome {
    pub trace: Vec<TraceStep>,
    pub verdict: Verdict,
    pub stability: Stability,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stability_report: Option<StabilityReport>,
}

impl DynamicsOutcome {
    pub fn iterations(&self) -> usize {
        self.trace.len().saturating_sub(1)
    }

    pub fn fixed_point(&self) -> Option<&QualificationState> {
        match &self.verdict {
            Verdict::FixedPoint { state } => Some(state),
            _ => None,
        }
    }

    pub fn is_converged(&self) -> bool {
        !matches!(self.verdict, Verdict::NonConverged)
    }
}

/// One application of the dynamics: best response of the institution, then
/// of individuals.
pub fn step(
    model: &Model,
    state: &QualificationState,
    mode: Mode,
) -> Result<(Assessment, QualificationState)> {
    let assessment = model.best_response(state, mode == Mode::Decoupled)?;
    let next = model.individual_best_response(&assessment)?;
    Ok((assessment, next))
}

/// The composed map applied once.
pub fn phi(model: &Model, state: &QualificationState, mode: Mode) -> Result<QualificationState> {
    Ok(step(model, state, mode)?.1)
}

fn record(
    model: &Model,
    t: usize,
    state: QualificationState,
    assessment: Option<Assessment>,
) -> Result<TraceStep> {
    let utility = match &assessment {
        Some(a) => Some(model.institutional_utility(a, &state)?),
        None => None,
    };
    Ok(TraceStep {
        t,
        balance: balance(&state)?,
        state,
        assessment,
        utility,
    })
}

/// A recurrence must persist this long, without shrinking, to count as a
/// cycle; damped oscillations around a fixed point recur too.
fn confirm_steps(lag: usize) -> usize {
    (2 * lag).max(16)
}

const CYCLE_AMPLITUDE_KEPT: f64 = 0.9;

fn amplitude(states: &[QualificationState]) -> f64 {
    let k = states.len();
    (0..k)
        .map(|i| states[i].distance(&states[(i + 1) % k]))
        .fold(0.0, f64::max)
}

/// Iterate until a fixed point, a confirmed recurrence, or the iteration
/// budget.
pub fn iterate(
    model: &Model,
    initial: &QualificationState,
    config: &DynamicsConfig,
) -> Result<DynamicsOutcome> {
    config.validate()?;
    initial.check_groups(model.groups())?;
    let mut trace = vec![record(model, 0, initial.clone(), None)?];
    let mut history: Vec<QualificationState> = vec![initial.clone()];
    let mut verdict = Verdict::NonConverged;
    // (lag, step detected, amplitude) of a recurrence awaiting confirmation
    let mut pending: Option<(usize, usize, f64)> = None;
    for t in 1..=config.max_iters {
        let current = history.last().expect("non-empty history").clone();
        let (assessment, next) = step(model, &current, config.mode)?;
        trace.push(record(model, t, next.clone(), Some(assessment))?);
        if next.distance(&current) <= config.fix_tol {
            verdict = Verdict::FixedPoint { state: current };
            break;
        }
        let recurs = |k: usize| {
            k <= history.len() && next.distance(&history[history.len() - k]) <= config.fix_tol
        };
        match pending {
            Some((k, t0, a0)) if recurs(k) => {
                if t - t0 >= confirm_steps(k) {
                    let states = history[history.len() - k..].to_vec();
                    if amplitude(&states) >= CYCLE_AMPLITUDE_KEPT * a0 {
                        verdict = Verdict::LimitCycle { states, period: k };
                        break;
                    }
                    pending = None;
                }
            }
            _ => {
                let window = config.cycle_window.min(history.len());
                pending = (2..=window)
                    .find(|&k| recurs(k))
                    .map(|k| (k, t, amplitude(&history[history.len() - k..])));
            }
        }
        history.push(next);
    }
    if let Verdict::FixedPoint { state } = &verdict {
        let residual = phi(model, state, config.mode)?.distance(state);
        if residual > config.fix_tol {
            return Err(Error::NonConvergence(format!(
                "fixed point residual {residual:e} exceeds {:e}",
                config.fix_tol
            )));
        }
    }
    Ok(DynamicsOutcome {
        trace,
        verdict,
        stability: Stability::NotAssessed,
        stability_report: None,
    })
}

/// Iterate, then probe stability when the verdict is a fixed point.
pub fn run(
    model: &Model,
    initial: &QualificationState,
    config: &DynamicsConfig,
) -> Result<DynamicsOutcome> {
    let mut outcome = iterate(model, initial, config)?;
    if let Some(fp) = outcome.fixed_point().cloned() {
        let report = classify_stability(model, &fp, config)?;
        outcome.stability = report.label;
        outcome.stability_report = Some(report);
    }
    Ok(outcome)
}

fn probe_starts(
    fixed_point: &QualificationState,
    config: &DynamicsConfig,
) -> Vec<QualificationState> {
    let rates = fixed_point.rates();
    let eps = config.perturb_eps;
    let mut starts: Vec<QualificationState> = Vec::new();
    let mut push = |s: QualificationState| {
        if s != *fixed_point && !starts.contains(&s) {
            starts.push(s);
        }
    };
    for i in 0..rates.len() {
        for sign in [1.0, -1.0] {
            let mut r = rates.to_vec();
            r[i] += sign * eps;
            push(QualificationState::from_clamped(r));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.probe_seed);
    for _ in 0..config.random_probes {
        let r: Vec<f64> = rates
            .iter()
            .map(|x| x + rng.random_range(-eps..=eps))
            .collect();
        push(QualificationState::from_clamped(r));
    }
    starts
}

/// Basin probing: every perturbed start must return to the fixed point.
pub fn classify_stability(
    model: &Model,
    fixed_point: &QualificationState,
    config: &DynamicsConfig,
) -> Result<StabilityReport> {
    config.validate()?;
    fixed_point.check_groups(model.groups())?;
    let residual = phi(model, fixed_point, config.mode)?.distance(fixed_point);
    if residual > config.fix_tol {
        return Err(Error::Precondition(format!(
            "state is not a fixed point (residual {residual:e})"
        )));
    }
    let probes = probe_starts(fixed_point, config)
        .into_par_iter()
        .map(|start| {
            let outcome = iterate(model, &start, config)?;
            let returned = outcome
                .fixed_point()
                .is_some_and(|s| s.distance(fixed_point) <= config.return_tol());
            Ok(Probe {
                start,
                returned,
                iterations: outcome.iterations(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let label = if probes.iter().all(|p| p.returned) {
        Stability::Stable
    } else {
        Stability::Unstable
    };
    Ok(StabilityReport {
        label,
        eps: config.perturb_eps,
        probes,
    })
}

/// Coordinate-wise mean of the states of a limit cycle.
pub fn cycle_average(outcome: &DynamicsOutcome) -> Result<QualificationState> {
    match &outcome.verdict {
        Verdict::LimitCycle { states, .. } => mean_state(states),
        _ => Err(Error::Precondition("verdict is not a limit cycle".into())),
    }
}

pub(crate) fn mean_state(states: &[QualificationState]) -> Result<QualificationState> {
    let first = states
        .first()
        .ok_or_else(|| Error::Precondition("empty cycle".into()))?;
    let n = states.len() as f64;
    let rates = (0..first.len())
        .map(|i| states.iter().map(|s| s.get(i)).sum::<f64>() / n)
        .collect();
    Ok(QualificationState::from_clamped(rates))
}

fn keyed_rates(model: &Model, state: &QualificationState) -> BTreeMap<String, f64> {
    model
        .groups()
        .ids()
        .into_iter()
        .map(String::from)
        .zip(state.rates().iter().copied())
        .collect()
}

fn theta_json(model: &Model, assessment: &Assessment) -> serde_json::Value {
    match assessment {
        Assessment::Joint(t) => json!(t),
        Assessment::PerGroup(ts) => {
            let map: BTreeMap<&str, &Theta> = model.groups().ids().into_iter().zip(ts).collect();
            json!(map)
        }
    }
}

/// Line-delimited JSON: one record per step, then a summary record.
pub fn write_trace<W: Write>(model: &Model, outcome: &DynamicsOutcome, mut out: W) -> Result<()> {
    for step in &outcome.trace {
        let line = json!({
            "t": step.t,
            "pi": keyed_rates(model, &step.state),
            "theta": step.assessment.as_ref().map(|a| theta_json(model, a)),
            "utility": step.utility,
            "balance": step.balance,
        });
        writeln!(out, "{line}")?;
    }
    let verdict = match &outcome.verdict {
        Verdict::FixedPoint { state } => json!({
            "verdict": "fixed_point",
            "pi": keyed_rates(model, state),
        }),
        Verdict::LimitCycle { states, period } => json!({
            "verdict": "limit_cycle",
            "period": period,
            "states": states.iter().map(|s| keyed_rates(model, s)).collect::<Vec<_>>(),
            "cycle_average": keyed_rates(model, &mean_state(states)?),
        }),
        Verdict::NonConverged => json!({ "verdict": "non_converged" }),
    };
    let summary = json!({
        "summary": verdict,
        "iterations": outcome.iterations(),
        "stability": outcome.stability,
        "probes": outcome.stability_report.as_ref().map(|r| r.probes.len()),
    });
    writeln!(out, "{summary}")?;
    Ok(())
}
