use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use qualdyn::analysis::{
    equilibria_csv, find_equilibria_scan, gaussian_closed_forms_for, initial_rate_sweep, sweep_csv,
    uniform_closed_forms_for, ClosedFormEquilibrium, Equilibrium, EquilibriumKind,
};
use qualdyn::dynamics::{cycle_average, run, write_trace, Verdict};
use qualdyn::ingest::{fit_all, fit_beta_resampled, load_histogram, to_score_model, BetaFit};
use qualdyn::{Assessment, FeatureModel, Model, QualificationState, Theta};

use crate::scenario::Scenario;
use crate::Failure;

pub struct RunArgs {
    pub config: PathBuf,
    pub init: Option<Vec<f64>>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub decoupled: bool,
}

pub struct SweepArgs {
    pub config: PathBuf,
    pub grid: usize,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub decoupled: bool,
}

pub struct FindArgs {
    pub config: PathBuf,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub decoupled: bool,
}

pub struct FitArgs {
    pub histogram: PathBuf,
    pub out: Option<PathBuf>,
    pub resample: Option<usize>,
    pub seed: Option<u64>,
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Failure::config(format!("cannot write {}: {e}", path.display())))
}

fn rates(model: &Model, state: &QualificationState) -> String {
    model
        .groups()
        .ids()
        .iter()
        .zip(state.rates())
        .map(|(id, r)| format!("{id}={r:.9}"))
        .collect::<Vec<_>>()
        .join(" ")
}

fn theta_text(theta: &Theta) -> String {
    match theta {
        Theta::Threshold(t) => format!("threshold {t:.9}"),
        Theta::Hyperplane { arc: Some(u), .. } => format!("arc {u:.9}"),
        Theta::Hyperplane { normal, .. } => format!(
            "normal ({})",
            normal
                .iter()
                .map(|x| format!("{x:.6}"))
                .collect::<Vec<_>>()
                .join(", ")
        ),
    }
}

fn assessment_text(model: &Model, a: &Assessment) -> String {
    match a {
        Assessment::Joint(t) => theta_text(t),
        Assessment::PerGroup(ts) => model
            .groups()
            .ids()
            .iter()
            .zip(ts)
            .map(|(id, t)| format!("{id}: {}", theta_text(t)))
            .collect::<Vec<_>>()
            .join("; "),
    }
}

fn initial_state(init: Option<&[f64]>, groups: usize) -> Result<QualificationState, Failure> {
    let values = match init {
        None => vec![0.5; groups],
        Some([r]) => vec![*r; groups],
        Some(v) if v.len() == groups => v.to_vec(),
        Some(v) => {
            return Err(Failure::config(format!(
                "--init has {} values, scenario has {groups} groups",
                v.len()
            )))
        }
    };
    QualificationState::new(values).map_err(|e| Failure::config(format!("--init: {e}")))
}

pub fn cmd_run(args: &RunArgs, report: &mut dyn Write) -> Result<(), Failure> {
    let scenario = Scenario::load(&args.config)?;
    let model = scenario.build()?;
    let cfg = scenario.dynamics(args.seed, args.decoupled)?;
    let start = initial_state(args.init.as_deref(), model.group_count())?;
    let outcome = run(&model, &start, &cfg)?;
    if let Some(path) = &args.out {
        let mut out = create(path)?;
        write_trace(&model, &outcome, &mut out)?;
        out.flush()?;
    }
    writeln!(report, "mode: {:?}", cfg.mode)?;
    writeln!(report, "iterations: {}", outcome.iterations())?;
    match &outcome.verdict {
        Verdict::FixedPoint { state } => {
            writeln!(report, "verdict: fixed_point")?;
            writeln!(report, "pi: {}", rates(&model, state))?;
            let theta =
                model.best_response(state, cfg.mode == qualdyn::dynamics::Mode::Decoupled)?;
            writeln!(report, "theta: {}", assessment_text(&model, &theta))?;
            writeln!(
                report,
                "stability: {}",
                serde_json::to_string(&outcome.stability)
                    .unwrap_or_default()
                    .trim_matches('"')
            )?;
        }
        Verdict::LimitCycle { states, period } => {
            writeln!(report, "verdict: limit_cycle")?;
            writeln!(report, "period: {period}")?;
            for (i, s) in states.iter().enumerate() {
                writeln!(report, "state {i}: {}", rates(&model, s))?;
            }
            writeln!(
                report,
                "cycle_average: {}",
                rates(&model, &cycle_average(&outcome)?)
            )?;
        }
        Verdict::NonConverged => {
            writeln!(report, "verdict: non_converged")?;
            let last = &outcome
                .trace
                .last()
                .expect("trace has the initial state")
                .state;
            writeln!(report, "last: {}", rates(&model, last))?;
            return Err(Failure::diverged(format!(
                "no fixed point or cycle within {} iterations",
                cfg.max_iters
            )));
        }
    }
    Ok(())
}

pub fn cmd_sweep(args: &SweepArgs, report: &mut dyn Write) -> Result<(), Failure> {
    let scenario = Scenario::load(&args.config)?;
    let model = scenario.build()?;
    let cfg = scenario.dynamics(args.seed, false)?;
    let decoupled = args.decoupled || scenario.decoupled();
    let rows = initial_rate_sweep(&model, &cfg, args.grid, decoupled)?;
    match &args.out {
        Some(path) => {
            let mut out = create(path)?;
            sweep_csv(&model, &rows, &mut out)?;
            out.flush()?;
            writeln!(report, "wrote {} rows to {}", rows.len(), path.display())?;
        }
        None => sweep_csv(&model, &rows, &mut *report)?,
    }
    Ok(())
}

fn kind_text(e: &Equilibrium) -> String {
    match &e.kind {
        EquilibriumKind::FixedPoint => "fixed_point".into(),
        EquilibriumKind::LimitCycle { period, .. } => format!("limit_cycle({period})"),
    }
}

fn closed_forms(model: &Model) -> Option<Result<Vec<ClosedFormEquilibrium>, qualdyn::Error>> {
    match model.features() {
        FeatureModel::UniformThreshold { .. } => {
            Some(uniform_closed_forms_for(model).map(|c| c.equilibria))
        }
        FeatureModel::GaussianHalfspace { .. } => {
            Some(gaussian_closed_forms_for(model).map(|c| c.equilibria))
        }
        FeatureModel::Score { .. } => None,
    }
}

pub fn cmd_find(args: &FindArgs, report: &mut dyn Write) -> Result<(), Failure> {
    let scenario = Scenario::load(&args.config)?;
    let model = scenario.build()?;
    let cfg = scenario.dynamics(args.seed, args.decoupled)?;
    let eqs = find_equilibria_scan(&model, &cfg, &scenario.scan)?;
    writeln!(report, "equilibria: {}", eqs.len())?;
    for (i, e) in eqs.iter().enumerate() {
        let stability = serde_json::to_string(&e.stability).unwrap_or_default();
        let mut line = format!(
            "[{i}] {} pi: {} | theta: {} | stability: {} | residual: {:.1e}",
            kind_text(e),
            rates(&model, &e.state),
            assessment_text(&model, &e.assessment),
            stability.trim_matches('"'),
            e.residual
        );
        if let Some(d) = e.derivative {
            line.push_str(&format!(" | slope: {d:.6}"));
        }
        if e.disagreement {
            line.push_str(" | stability tests disagree");
        }
        writeln!(report, "{line}")?;
    }
    if let Some(result) = closed_forms(&model) {
        match result {
            Ok(table) => {
                writeln!(report, "closed forms:")?;
                let mut worst: f64 = 0.0;
                for cf in &table {
                    let target = QualificationState::new(cf.pi.clone())?;
                    let gap = eqs
                        .iter()
                        .filter(|e| e.is_fixed_point())
                        .map(|e| e.state.distance(&target))
                        .fold(f64::INFINITY, f64::min);
                    worst = worst.max(gap);
                    let stability = serde_json::to_string(&cf.stability).unwrap_or_default();
                    writeln!(
                        report,
                        "  {} pi: {} | {} | nearest scan equilibrium at {gap:.3e}",
                        cf.label,
                        rates(&model, &target),
                        stability.trim_matches('"')
                    )?;
                }
                writeln!(report, "max discrepancy: {worst:.3e}")?;
            }
            Err(e) => writeln!(report, "closed forms not applicable: {e}")?,
        }
    }
    if let Some(path) = &args.out {
        let mut out = create(path)?;
        equilibria_csv(&model, &eqs, &mut out)?;
        out.flush()?;
    }
    Ok(())
}

pub fn cmd_fit(args: &FitArgs, report: &mut dyn Write) -> Result<(), Failure> {
    let hist = load_histogram(&args.histogram)?;
    let fits: std::collections::BTreeMap<(String, u8), BetaFit> = match args.resample {
        None => fit_all(&hist)?,
        Some(n) => {
            let seed = args.seed.unwrap_or(0);
            hist.keys()
                .map(|(g, l)| Ok(((g.clone(), *l), fit_beta_resampled(&hist, g, *l, n, seed)?)))
                .collect::<Result<_, qualdyn::Error>>()?
        }
    };
    for ((group, label), fit) in &fits {
        writeln!(
            report,
            "{group} y={label}: alpha {:.6} beta {:.6} log-likelihood {:.6} iterations {} gradient {:.1e}",
            fit.alpha, fit.beta, fit.log_likelihood, fit.iterations, fit.gradient_norm
        )?;
    }
    let spec = to_score_model(&fits)?;
    #[derive(serde::Serialize)]
    struct Snippet<'a> {
        features: &'a qualdyn::FeatureSpec,
    }
    let text = toml::to_string_pretty(&Snippet { features: &spec })
        .map_err(|e| Failure::config(e.to_string()))?;
    match &args.out {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| Failure::config(format!("cannot write {}: {e}", path.display())))?,
        None => write!(report, "{text}")?,
    }
    Ok(())
}
