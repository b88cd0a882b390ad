use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::dynamics::{cycle_average, iterate, DynamicsConfig, DynamicsOutcome, Mode, Verdict};
use crate::economy::QualificationState;
use crate::error::{Error, Result};
use crate::model::Model;

/// Converged rates from one shared initial rate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub init: f64,
    pub joint: Vec<f64>,
    pub joint_verdict: &'static str,
    pub decoupled: Option<Vec<f64>>,
    pub decoupled_verdict: Option<&'static str>,
    /// Decoupled minus joint, per group.
    pub delta: Option<Vec<f64>>,
}

fn settle(outcome: &DynamicsOutcome) -> Result<(Vec<f64>, &'static str)> {
    Ok(match &outcome.verdict {
        Verdict::FixedPoint { state } => (state.rates().to_vec(), "fixed_point"),
        Verdict::LimitCycle { .. } => (cycle_average(outcome)?.rates().to_vec(), "limit_cycle"),
        Verdict::NonConverged => (
            outcome
                .trace
                .last()
                .expect("trace has the initial state")
                .state
                .rates()
                .to_vec(),
            "non_converged",
        ),
    })
}

/// Runs the dynamics from `grid` evenly spaced initial rates shared by all
/// groups, jointly and optionally decoupled.
pub fn initial_rate_sweep(
    model: &Model,
    dynamics: &DynamicsConfig,
    grid: usize,
    decoupled: bool,
) -> Result<Vec<SweepRow>> {
    if grid < 2 {
        return Err(Error::Config("sweep grid needs at least 2 points".into()));
    }
    let joint_cfg = dynamics.with_mode(Mode::Joint);
    let dec_cfg = dynamics.with_mode(Mode::Decoupled);
    (0..grid)
        .into_par_iter()
        .map(|i| {
            let init = i as f64 / (grid - 1) as f64;
            let start = QualificationState::uniform(model.group_count(), init)?;
            let (joint, joint_verdict) = settle(&iterate(model, &start, &joint_cfg)?)?;
            let (decoupled, decoupled_verdict) = if decoupled {
                let (d, v) = settle(&iterate(model, &start, &dec_cfg)?)?;
                (Some(d), Some(v))
            } else {
                (None, None)
            };
            let delta = decoupled
                .as_ref()
                .map(|d| d.iter().zip(&joint).map(|(a, b)| a - b).collect());
            Ok(SweepRow {
                init,
                joint,
                joint_verdict,
                decoupled,
                decoupled_verdict,
                delta,
            })
        })
        .collect()
}

/// Comma-separated sweep table with a header row.
pub fn sweep_csv<W: Write>(model: &Model, rows: &[SweepRow], out: W) -> Result<()> {
    let ids = model.groups().ids();
    let with_dec = rows.iter().any(|r| r.decoupled.is_some());
    let mut header = vec!["init".to_string()];
    header.extend(ids.iter().map(|id| format!("joint_{id}")));
    if with_dec {
        header.extend(ids.iter().map(|id| format!("decoupled_{id}")));
        header.extend(ids.iter().map(|id| format!("delta_{id}")));
    }
    header.push("joint_verdict".into());
    if with_dec {
        header.push("decoupled_verdict".into());
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(&header).map_err(csv_error)?;
    for r in rows {
        let mut rec = vec![r.init.to_string()];
        rec.extend(r.joint.iter().map(f64::to_string));
        if with_dec {
            let blank = || vec![String::new(); ids.len()];
            rec.extend(
                r.decoupled
                    .as_ref()
                    .map_or_else(blank, |d| d.iter().map(f64::to_string).collect()),
            );
            rec.extend(
                r.delta
                    .as_ref()
                    .map_or_else(blank, |d| d.iter().map(f64::to_string).collect()),
            );
        }
        rec.push(r.joint_verdict.to_string());
        if with_dec {
            rec.push(r.decoupled_verdict.unwrap_or("").to_string());
        }
        w.write_record(&rec).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn csv_error(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}
