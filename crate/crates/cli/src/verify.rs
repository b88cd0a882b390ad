//! Built-in verification suites with known answers.

use std::io::Write;

use qualdyn::analysis::*;
use qualdyn::dynamics::{iterate, phi, run, DynamicsConfig, Mode, Stability, Verdict};
use qualdyn::{
    Assessment, CostModel, EconomyConfig, FeatureModel, GroupSpec, Groups, Model,
    QualificationState, ScoreDist, ScoreGroup, Subsidy,
};

use crate::Failure;

pub const SUITES: [&str; 7] = [
    "realizable",
    "near-realizable",
    "uniform",
    "gaussian",
    "multi-eq",
    "subsidy",
    "decoupling",
];

type Check = Result<(), String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn st(r: &[f64]) -> QualificationState {
    QualificationState::new(r.to_vec()).expect("valid rates")
}

fn cfg() -> DynamicsConfig {
    DynamicsConfig::default()
}

fn pair(g1: CostModel, g2: CostModel) -> Groups {
    Groups::new(vec![
        GroupSpec::new("a1", 0.5, g1),
        GroupSpec::new("a2", 0.5, g2),
    ])
    .expect("valid groups")
}

fn uniform_model() -> Model {
    Model::new(
        EconomyConfig::new(0.6, 1.0, 1.0).expect("valid economy"),
        pair(CostModel::uniform(), CostModel::uniform()),
        FeatureModel::UniformThreshold {
            thresholds: vec![0.4, 0.8],
        },
    )
    .expect("valid model")
}

fn gaussian_model(angle: f64, p: f64, c: f64, g1: CostModel) -> Model {
    let phi = angle * std::f64::consts::PI;
    Model::new(
        EconomyConfig::new(0.8, p, c).expect("valid economy"),
        pair(g1, CostModel::uniform()),
        FeatureModel::GaussianHalfspace {
            normals: vec![vec![1.0, 0.0], vec![phi.cos(), phi.sin()]],
        },
    )
    .expect("valid model")
}

fn beta(a: f64, b: f64) -> ScoreDist {
    ScoreDist::beta(a, b).expect("valid parameters")
}

/// Threshold 0.5 reaches `TPR = 1 - eps`, `FPR = eps`.
fn separable(eps: f64) -> ScoreGroup {
    ScoreGroup {
        y1: ScoreDist::empirical(vec![[0.0, 0.0], [0.5, eps], [1.0, 1.0]]).expect("valid knots"),
        y0: ScoreDist::empirical(vec![[0.0, 0.0], [0.5, 1.0 - eps], [1.0, 1.0]])
            .expect("valid knots"),
    }
}

fn single(group: ScoreGroup, w: f64, cost: CostModel) -> Model {
    Model::new(
        EconomyConfig::new(w, 1.0, 1.0).expect("valid economy"),
        Groups::new(vec![GroupSpec::new("g", 1.0, cost)]).expect("valid groups"),
        FeatureModel::Score {
            groups: vec![group],
        },
    )
    .expect("valid model")
}

fn multi_model() -> Model {
    single(
        ScoreGroup {
            y1: beta(5.0, 2.0),
            y0: beta(2.0, 5.0),
        },
        0.8,
        CostModel::truncated_normal(0.6, 0.1).expect("valid cost"),
    )
}

fn nonzero(eqs: &[Equilibrium]) -> Vec<&Equilibrium> {
    eqs.iter()
        .filter(|e| e.is_fixed_point() && !e.trivial)
        .collect()
}

fn scan(model: &Model) -> Result<Vec<Equilibrium>, String> {
    find_equilibria_scan(model, &cfg(), &ScanConfig::default()).map_err(err)
}

fn matches_table(eqs: &[Equilibrium], table: &[ClosedFormEquilibrium], tol: f64) -> Check {
    for cf in table {
        let hit = nonzero(eqs)
            .into_iter()
            .find(|e| e.state.distance(&st(&cf.pi)) <= tol)
            .ok_or(format!("{} {:?} not found", cf.label, cf.pi))?;
        ensure!(
            hit.stability == cf.stability,
            "{} labelled {:?}",
            cf.label,
            hit.stability
        );
    }
    Ok(())
}

fn uniform_suite() -> Vec<(&'static str, Check)> {
    let m = uniform_model();
    let golden = |init: [f64; 2], theta: f64| -> Check {
        let out = run(&m, &st(&init), &cfg()).map_err(err)?;
        let fp = out.fixed_point().ok_or(format!("{:?}", out.verdict))?;
        ensure!(fp.distance(&st(&init)) <= 1e-6, "moved to {fp:?}");
        let t = m.institution_best_response(fp).map_err(err)?.threshold();
        ensure!(t == Some(theta), "threshold {t:?}");
        ensure!(out.stability == Stability::Stable, "{:?}", out.stability);
        Ok(())
    };
    let closed = || -> Check {
        let cf = uniform_closed_forms(0.4, 0.8, 0.6).map_err(err)?;
        ensure!((cf.h_mid - 0.571_429).abs() <= 1e-5, "h_mid {}", cf.h_mid);
        ensure!(
            (cf.w_lo - 0.545_455).abs() <= 1e-5 && (cf.w_hi - 0.692_308).abs() <= 1e-5,
            "bounds {} {}",
            cf.w_lo,
            cf.w_hi
        );
        Ok(())
    };
    let scanned = || -> Check {
        let eqs = scan(&m)?;
        ensure!(
            nonzero(&eqs).len() == 3,
            "{} non-zero equilibria",
            nonzero(&eqs).len()
        );
        matches_table(
            &eqs,
            &uniform_closed_forms_for(&m).map_err(err)?.equilibria,
            1e-6,
        )
    };
    let ranking = || -> Check {
        let cf = uniform_closed_forms_for(&m).map_err(err)?;
        let points: Vec<EquilibriumPoint> = cf
            .equilibria
            .iter()
            .map(|e| EquilibriumPoint {
                label: e.label.clone(),
                assessment: Assessment::Joint(e.theta.clone()),
                state: st(&e.pi),
            })
            .collect();
        let cmp = compare_equilibria(&points, &m).map_err(err)?;
        let v = uniform_ranking_violations(&cmp, &m);
        ensure!(v.is_empty(), "{v:?}");
        Ok(())
    };
    vec![
        (
            "init (0.6, 0.3) is a stable fixed point at threshold 0.4",
            golden([0.6, 0.3], 0.4),
        ),
        (
            "init (0.2, 0.6) is a stable fixed point at threshold 0.8",
            golden([0.2, 0.6], 0.8),
        ),
        ("closed-form h_mid and wage bounds", closed()),
        ("scan finds the three closed-form equilibria", scanned()),
        ("rate and balance rankings", ranking()),
    ]
}

fn gaussian_suite() -> Vec<(&'static str, Check)> {
    let stable = || -> Check {
        let m = gaussian_model(0.5, 2.0, 1.0, CostModel::uniform());
        let eqs = scan(&m)?;
        matches_table(
            &eqs,
            &gaussian_closed_forms_for(&m).map_err(err)?.equilibria,
            1e-4,
        )
    };
    let cycle = || -> Check {
        let m = gaussian_model(0.5, 1.0, 2.0, CostModel::uniform());
        let out = iterate(&m, &st(&[0.3, 0.5]), &cfg()).map_err(err)?;
        ensure!(
            matches!(out.verdict, Verdict::LimitCycle { period: 2, .. }),
            "{:?}",
            out.verdict
        );
        let eqs = scan(&m)?;
        ensure!(
            !eqs.iter()
                .any(|e| e.is_fixed_point() && e.stability == Stability::Stable),
            "stable fixed point found"
        );
        Ok(())
    };
    let utility = || -> Check {
        let m = gaussian_model(0.25, 2.0, 1.0, CostModel::uniform());
        let cf = gaussian_closed_forms_for(&m).map_err(err)?;
        let points: Vec<EquilibriumPoint> = cf
            .equilibria
            .iter()
            .map(|e| EquilibriumPoint {
                label: e.label.clone(),
                assessment: Assessment::Joint(e.theta.clone()),
                state: st(&e.pi),
            })
            .collect();
        let cmp = compare_equilibria(&points, &m).map_err(err)?;
        let u = cmp.ranking("utility").ok_or("no utility ranking")?;
        ensure!(
            u.indifferent("h1", "h2") && u.prefers("h1", "h_mid"),
            "{}",
            u.chain
        );
        Ok(())
    };
    vec![
        (
            "two stable equilibria and an unstable balanced one",
            stable(),
        ),
        ("period-two cycle when false positives cost more", cycle()),
        ("utility ranking h1 ~ h2 > h_mid", utility()),
    ]
}

fn realizable_suite() -> Vec<(&'static str, Check)> {
    let check = |cost: CostModel, w: f64| -> Check {
        let m = Model::new(
            EconomyConfig::new(w, 1.0, 1.0).map_err(err)?,
            pair(cost.clone(), cost.clone()),
            FeatureModel::Score {
                groups: vec![separable(0.0), separable(0.0)],
            },
        )
        .map_err(err)?;
        let target = cost.cdf(w);
        let eqs = scan(&m)?;
        let found = nonzero(&eqs);
        ensure!(found.len() == 1, "{} non-zero equilibria", found.len());
        for a in [0.05, 0.5, 1.0] {
            for b in [0.05, 0.5, 1.0] {
                let out = iterate(&m, &st(&[a, b]), &cfg()).map_err(err)?;
                let fp = out.fixed_point().ok_or(format!("{:?}", out.verdict))?;
                ensure!(
                    fp.rates().iter().all(|r| (r - target).abs() <= 1e-9),
                    "({a}, {b}) reached {fp:?}"
                );
            }
        }
        Ok(())
    };
    vec![
        (
            "uniform costs settle at G(w)",
            check(CostModel::uniform(), 0.6),
        ),
        (
            "truncated normal costs settle at G(w)",
            CostModel::truncated_normal(0.5, 0.15)
                .map_err(err)
                .and_then(|c| check(c, 0.7)),
        ),
    ]
}

fn near_suite() -> Vec<(&'static str, Check)> {
    let bound = || -> Check {
        let b = near_realizability_bound(0.05, 0.25, 0.5, &CostModel::uniform()).map_err(err)?;
        ensure!((b.bound - 0.4).abs() <= 1e-12, "bound {}", b.bound);
        Ok(())
    };
    let trajectories = || -> Check {
        let m = single(separable(0.05), 0.5, CostModel::uniform());
        for init in [0.25, 0.5, 0.75] {
            let out = iterate(&m, &st(&[init]), &cfg()).map_err(err)?;
            let fp = out.fixed_point().ok_or(format!("{:?}", out.verdict))?;
            ensure!(fp.get(0) >= 0.4 - 1e-9, "from {init} reached {}", fp.get(0));
        }
        Ok(())
    };
    vec![
        ("bound equals 0.4", bound()),
        ("trajectories end above the bound", trajectories()),
    ]
}

fn multi_suite() -> Vec<(&'static str, Check)> {
    let m = multi_model();
    let witness = || -> Check {
        let map = beta_of_pi(&m, 101).map_err(err)?;
        ensure!(
            multi_equilibrium_witness(&m, &map).is_some(),
            "no x with x < G(w beta(x))"
        );
        Ok(())
    };
    let count = || -> Check {
        let eqs = scan(&m)?;
        ensure!(
            nonzero(&eqs).len() >= 2,
            "{} non-zero equilibria",
            nonzero(&eqs).len()
        );
        let gaps = (1..=400)
            .map(|i| {
                let x = i as f64 / 400.0;
                phi(&m, &st(&[x]), Mode::Joint).map(|y| y.get(0) - x)
            })
            .collect::<Result<Vec<_>, _>>()
            .map_err(err)?;
        ensure!(
            sign_changes(&gaps) >= 2,
            "{} sign changes",
            sign_changes(&gaps)
        );
        Ok(())
    };
    vec![
        ("witness point exists", witness()),
        ("at least two non-zero equilibria", count()),
    ]
}

fn subsidy_suite() -> Vec<(&'static str, Check)> {
    let m = multi_model();
    let identity = || -> Check {
        let g = m.groups().get(0).cost.clone();
        let r =
            subsidy_equilibrium_shift(&m, 0, &g, &cfg(), &ScanConfig::default()).map_err(err)?;
        for s in &r.shifts {
            let near = s.nearest.as_ref().ok_or("unmatched equilibrium")?;
            ensure!(
                near.distance(&s.before) <= 1e-6,
                "{:?} moved to {near:?}",
                s.before
            );
        }
        Ok(())
    };
    let shift = || -> Check {
        let g_bar = m
            .groups()
            .get(0)
            .cost
            .subsidize(Subsidy::Shift(0.05))
            .map_err(err)?;
        let r = subsidy_equilibrium_shift(&m, 0, &g_bar, &cfg(), &ScanConfig::default())
            .map_err(err)?;
        ensure!(!r.shifts.is_empty() && r.all_improved(), "{:?}", r.shifts);
        Ok(())
    };
    let unequal = || -> Check {
        let g1 = CostModel::truncated_normal(0.9, 0.1).map_err(err)?;
        let m = gaussian_model(0.25, 2.0, 1.0, g1.clone());
        let g1_bar = g1.subsidize(Subsidy::Shift(0.1)).map_err(err)?;
        let r = unequal_cost_report(&m, &g1_bar, &cfg(), &ScanConfig::default()).map_err(err)?;
        ensure!(
            r.precondition && r.unique_second,
            "not a unique equilibrium at h2"
        );
        ensure!(
            r.discrepancy.unwrap_or(f64::INFINITY) <= 1e-4,
            "discrepancy {:?}",
            r.discrepancy
        );
        ensure!(r.first_reappears, "h1 equilibrium does not reappear");
        Ok(())
    };
    vec![
        ("zero subsidy leaves equilibria in place", identity()),
        ("shifted costs raise every equilibrium", shift()),
        (
            "unequal costs leave one equilibrium until subsidized",
            unequal(),
        ),
    ]
}

fn decoupling_suite() -> Vec<(&'static str, Check)> {
    let dominance = || -> Check {
        let m = uniform_model();
        let dec = cfg().with_mode(Mode::Decoupled);
        for init in [[0.05, 0.9], [0.5, 0.5], [1.0, 0.2]] {
            let out = iterate(&m, &st(&init), &dec).map_err(err)?;
            let fp = out.fixed_point().ok_or(format!("{:?}", out.verdict))?;
            ensure!(
                fp.rates().iter().all(|r| (r - 0.6).abs() <= 1e-9),
                "{init:?} reached {fp:?}"
            );
        }
        for e in scan(&m)?.iter().filter(|e| e.is_fixed_point()) {
            ensure!(
                e.state.rates().iter().all(|r| *r <= 0.6 + 1e-9),
                "joint {:?} beats decoupling",
                e.state
            );
        }
        Ok(())
    };
    let sign_change = || -> Check {
        let g = CostModel::bimodal(0.2, 0.05, 0.95, 0.05, 0.6).map_err(err)?;
        let groups = Groups::new(vec![
            GroupSpec::new("a", 0.7, g.clone()),
            GroupSpec::new("b", 0.3, g),
        ])
        .map_err(err)?;
        let m = Model::new(
            EconomyConfig::new(0.9, 1.0, 1.0).map_err(err)?,
            groups,
            FeatureModel::Score {
                groups: vec![
                    ScoreGroup {
                        y1: beta(7.5, 3.0),
                        y0: beta(1.5, 3.0),
                    },
                    ScoreGroup {
                        y1: beta(6.0, 2.0),
                        y0: beta(7.0, 4.5),
                    },
                ],
            },
        )
        .map_err(err)?;
        let rows = initial_rate_sweep(&m, &cfg(), 21, true).map_err(err)?;
        let changes = (0..2).any(|k| {
            let d: Vec<f64> = rows
                .iter()
                .filter_map(|r| r.delta.as_ref().map(|d| d[k]))
                .collect();
            d.iter().any(|x| *x > 1e-6) && d.iter().any(|x| *x < -1e-6)
        });
        ensure!(changes, "delta keeps one sign");
        Ok(())
    };
    vec![
        (
            "group-realizable decoupling reaches G(w) and dominates",
            dominance(),
        ),
        (
            "bimodal costs: decoupling effect changes sign across starts",
            sign_change(),
        ),
    ]
}

/// Runs a suite, printing one line per assertion. Returns whether all passed.
pub fn run_suite(name: &str, out: &mut dyn Write) -> Result<bool, Failure> {
    let results = match name {
        "realizable" => realizable_suite(),
        "near-realizable" => near_suite(),
        "uniform" => uniform_suite(),
        "gaussian" => gaussian_suite(),
        "multi-eq" => multi_suite(),
        "subsidy" => subsidy_suite(),
        "decoupling" => decoupling_suite(),
        other => {
            return Err(Failure::config(format!(
                "unknown suite `{other}`; expected one of {}",
                SUITES.join(", ")
            )))
        }
    };
    let mut ok = true;
    for (label, result) in &results {
        match result {
            Ok(()) => writeln!(out, "PASS  {label}")?,
            Err(why) => {
                ok = false;
                writeln!(out, "FAIL  {label}: {why}")?;
            }
        }
    }
    writeln!(
        out,
        "{name}: {}/{} passed",
        results.iter().filter(|r| r.1.is_ok()).count(),
        results.len()
    )?;
    Ok(ok)
}
