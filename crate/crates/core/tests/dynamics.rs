mod common;

use common::*;
use qualdyn::dynamics::{
    classify_stability, cycle_average, iterate, step, DynamicsConfig, Mode, Stability, Verdict,
};
use qualdyn::{Assessment, CostModel, Error, Theta};

fn cfg() -> DynamicsConfig {
    DynamicsConfig::default()
}

#[test]
fn response_to_uniform_threshold() {
    let m = uniform_example();
    let s = m
        .individual_best_response(&Assessment::Joint(Theta::Threshold(0.4)))
        .unwrap();
    assert!(close(s.get(0), 0.6, 1e-12) && close(s.get(1), 0.3, 1e-12));
}

#[test]
fn response_to_gaussian_first_normal() {
    let m = gaussian_model(
        0.25,
        0.8,
        2.0,
        1.0,
        CostModel::uniform(),
        CostModel::uniform(),
    );
    let h1 = normals(0.25)[0].clone();
    let s = m
        .individual_best_response(&Assessment::Joint(Theta::Hyperplane {
            normal: h1,
            arc: None,
        }))
        .unwrap();
    assert!(close(s.get(0), 0.8, 1e-12), "{}", s.get(0));
    assert!(close(s.get(1), 0.4, 1e-12), "{}", s.get(1));
}

#[test]
fn step_at_uniform_equilibrium_is_stationary() {
    let m = uniform_example();
    let (a, next) = step(&m, &state(&[0.6, 0.3]), Mode::Joint).unwrap();
    assert_eq!(a.for_group(0).threshold(), Some(0.4));
    assert!(close(next.get(0), 0.6, 1e-12) && close(next.get(1), 0.3, 1e-12));
}

#[test]
fn decoupled_step_uses_own_threshold() {
    let m = uniform_example();
    for s in [[0.1, 0.9], [0.5, 0.02], [1.0, 1.0]] {
        let (a, next) = step(&m, &state(&s), Mode::Decoupled).unwrap();
        assert_eq!(a.for_group(0).threshold(), Some(0.4));
        assert_eq!(a.for_group(1).threshold(), Some(0.8));
        assert!(close(next.get(0), 0.6, 1e-12) && close(next.get(1), 0.6, 1e-12));
    }
}

#[test]
fn gaussian_cycle_seed() {
    let m = gaussian_model(
        0.25,
        0.8,
        1.0,
        2.0,
        CostModel::uniform(),
        CostModel::uniform(),
    );
    let (a, next) = step(&m, &state(&[0.3, 0.5]), Mode::Joint).unwrap();
    assert_eq!(a.for_group(0).coordinate(), Some(0.0));
    assert!(next.get(0) > next.get(1));
    let (a, _) = step(&m, &next, Mode::Joint).unwrap();
    assert_eq!(a.for_group(0).coordinate(), Some(1.0));
}

#[test]
fn uniform_from_high_start_reaches_a_stable_point() {
    let m = uniform_example();
    let out = iterate(&m, &state(&[0.9, 0.9]), &cfg()).unwrap();
    let fp = out.fixed_point().expect("fixed point").clone();
    let at_h1 = close(fp.get(0), 0.6, 1e-6) && close(fp.get(1), 0.3, 1e-6);
    let at_h2 = close(fp.get(0), 0.2, 1e-6) && close(fp.get(1), 0.6, 1e-6);
    assert!(at_h1 || at_h2, "{fp:?}");
}

#[test]
fn realizable_single_group_converges_to_g_of_w() {
    let m = qualdyn::Model::new(
        qualdyn::EconomyConfig::new(0.7, 1.0, 3.0).unwrap(),
        one_group(CostModel::uniform()),
        qualdyn::FeatureModel::UniformThreshold {
            thresholds: vec![0.3],
        },
    )
    .unwrap();
    for start in [0.05, 0.4, 0.95] {
        let out = iterate(&m, &state(&[start]), &cfg()).unwrap();
        let fp = out.fixed_point().expect("fixed point");
        assert!(close(fp.get(0), 0.7, 1e-9), "start {start}: {fp:?}");
    }
}

#[test]
fn gaussian_costly_false_positives_cycle() {
    let m = gaussian_model(
        0.25,
        0.8,
        1.0,
        2.0,
        CostModel::uniform(),
        CostModel::uniform(),
    );
    let out = iterate(&m, &state(&[0.3, 0.5]), &cfg()).unwrap();
    match &out.verdict {
        Verdict::LimitCycle { states, period } => {
            assert_eq!(*period, 2);
            let thetas: Vec<f64> = out.trace[1..]
                .iter()
                .map(|s| {
                    s.assessment
                        .as_ref()
                        .unwrap()
                        .for_group(0)
                        .coordinate()
                        .unwrap()
                })
                .collect();
            assert!(thetas.iter().all(|&t| t == 0.0 || t == 1.0));
            assert!(states
                .iter()
                .any(|s| close(s.get(0), 0.8, 1e-12) && close(s.get(1), 0.4, 1e-12)));
        }
        other => panic!("expected a cycle, got {other:?}"),
    }
    let avg = cycle_average(&out).unwrap();
    assert!(close(avg.get(0), 0.6, 1e-12) && close(avg.get(1), 0.6, 1e-12));
}

#[test]
fn stability_of_uniform_equilibria() {
    let m = uniform_example();
    let stable = classify_stability(&m, &state(&[0.6, 0.3]), &cfg()).unwrap();
    assert_eq!(stable.label, Stability::Stable);
    let mid = qualdyn::analysis::uniform_closed_forms(0.4, 0.8, 0.6).unwrap();
    let balanced = mid.equilibrium("h_mid").unwrap().pi.clone();
    let unstable = classify_stability(&m, &state(&balanced), &cfg()).unwrap();
    assert_eq!(unstable.label, Stability::Unstable);
    assert!(unstable.probes.len() >= 4);
}

#[test]
fn stability_of_gaussian_midpoint() {
    let m = gaussian_model(
        0.5,
        0.8,
        2.0,
        1.0,
        CostModel::uniform(),
        CostModel::uniform(),
    );
    let report = classify_stability(&m, &state(&[0.4, 0.4]), &cfg()).unwrap();
    assert_eq!(report.label, Stability::Unstable);
}

#[test]
fn stability_requires_fixed_point() {
    let m = uniform_example();
    let err = classify_stability(&m, &state(&[0.5, 0.5]), &cfg()).unwrap_err();
    assert!(matches!(err, Error::Precondition(_)));
}

#[test]
fn traces_are_deterministic() {
    let m = uniform_example();
    let a = iterate(&m, &state(&[0.7, 0.45]), &cfg()).unwrap();
    let b = iterate(&m, &state(&[0.7, 0.45]), &cfg()).unwrap();
    assert_eq!(a, b);
    let mut buf = Vec::new();
    qualdyn::dynamics::write_trace(&m, &a, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), a.trace.len() + 1);
    for line in &lines {
        serde_json::from_str::<serde_json::Value>(line).unwrap();
    }
    assert!(lines.last().unwrap().contains("fixed_point"));
}

#[test]
fn non_convergence_is_a_verdict() {
    let m = gaussian_model(
        0.25,
        0.8,
        1.0,
        2.0,
        CostModel::uniform(),
        CostModel::uniform(),
    );
    let c = DynamicsConfig {
        max_iters: 1,
        ..cfg()
    };
    let out = iterate(&m, &state(&[0.3, 0.5]), &c).unwrap();
    assert_eq!(out.verdict, Verdict::NonConverged);
}

#[test]
fn subsidy_never_lowers_response() {
    let m = uniform_example();
    let theta = Assessment::Joint(Theta::Threshold(0.55));
    let base = m.individual_best_response(&theta).unwrap();
    for delta in [0.01, 0.1, 0.3] {
        let g = CostModel::uniform()
            .subsidize(qualdyn::Subsidy::Shift(delta))
            .unwrap();
        let sub = m.with_cost(0, g.clone()).with_cost(1, g);
        let s = sub.individual_best_response(&theta).unwrap();
        assert!(s.get(0) >= base.get(0) && s.get(1) >= base.get(1));
    }
}
