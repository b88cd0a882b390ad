use serde::Serialize;

use crate::economy::{Metrics, QualificationState};
use crate::error::{Error, Result};
use crate::model::{Assessment, Model};

const INDIFFERENCE_TOL: f64 = 1e-9;

/// A labelled equilibrium to be compared.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquilibriumPoint {
    pub label: String,
    pub assessment: Assessment,
    pub state: QualificationState,
}

/// Labels ordered from most to least preferred; each inner list is an
/// indifference class.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Ranking {
    pub metric: String,
    pub classes: Vec<Vec<String>>,
    pub chain: String,
}

impl Ranking {
    fn position(&self, label: &str) -> Option<usize> {
        self.classes
            .iter()
            .position(|c| c.iter().any(|l| l == label))
    }

    /// Whether `a` is strictly preferred to `b`.
    pub fn prefers(&self, a: &str, b: &str) -> bool {
        matches!((self.position(a), self.position(b)), (Some(x), Some(y)) if x < y)
    }

    pub fn indifferent(&self, a: &str, b: &str) -> bool {
        matches!((self.position(a), self.position(b)), (Some(x), Some(y)) if x == y)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub metrics: Vec<(String, Metrics)>,
    pub rankings: Vec<Ranking>,
}

impl Comparison {
    pub fn ranking(&self, metric: &str) -> Option<&Ranking> {
        self.rankings.iter().find(|r| r.metric == metric)
    }
}

fn rank(metric: String, labels: &[String], scores: &[f64]) -> Ranking {
    let mut order: Vec<usize> = (0..labels.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut classes: Vec<Vec<String>> = Vec::new();
    let mut anchor = f64::NAN;
    for i in order {
        if classes.is_empty() || (anchor - scores[i]).abs() > INDIFFERENCE_TOL {
            classes.push(vec![labels[i].clone()]);
            anchor = scores[i];
        } else {
            classes
                .last_mut()
                .expect("non-empty")
                .push(labels[i].clone());
        }
    }
    let chain = classes
        .iter()
        .map(|c| c.join(" ∼ "))
        .collect::<Vec<_>>()
        .join(" ≻ ");
    Ranking {
        metric,
        classes,
        chain,
    }
}

/// Ranks equilibria on each group's rate, on balance (smaller gap preferred)
/// and on institutional utility.
pub fn compare_equilibria(points: &[EquilibriumPoint], model: &Model) -> Result<Comparison> {
    if points.len() < 2 {
        return Err(Error::Precondition(
            "comparison needs at least two equilibria".into(),
        ));
    }
    let metrics = points
        .iter()
        .map(|p| Ok((p.label.clone(), model.metrics(&p.assessment, &p.state)?)))
        .collect::<Result<Vec<_>>>()?;
    let labels: Vec<String> = points.iter().map(|p| p.label.clone()).collect();
    let mut rankings = Vec::new();
    for (a, id) in model.groups().ids().into_iter().enumerate() {
        let scores: Vec<f64> = metrics
            .iter()
            .map(|(_, m)| m.qualification_rates[a])
            .collect();
        rankings.push(rank(format!("pi_{id}"), &labels, &scores));
    }
    let balance: Vec<f64> = metrics.iter().map(|(_, m)| -m.balance).collect();
    rankings.push(rank("balance".into(), &labels, &balance));
    let utility: Vec<f64> = metrics
        .iter()
        .map(|(_, m)| m.institutional_utility)
        .collect();
    rankings.push(rank("utility".into(), &labels, &utility));
    Ok(Comparison { metrics, rankings })
}

/// Expected orderings among the `h1`, `h_mid`, `h2` equilibria of the
/// uniform model inside the wage band. Returns the violated ones.
pub fn uniform_ranking_violations(cmp: &Comparison, model: &Model) -> Vec<String> {
    let ids = model.groups().ids();
    let expect = [
        (format!("pi_{}", ids[0]), ["h1", "h_mid", "h2"]),
        (format!("pi_{}", ids[1]), ["h2", "h_mid", "h1"]),
        ("balance".to_string(), ["h_mid", "h1", "h2"]),
    ];
    let mut violations = Vec::new();
    for (metric, [a, b, c]) in expect {
        let ok = cmp
            .ranking(&metric)
            .is_some_and(|r| r.prefers(a, b) && r.prefers(b, c));
        if !ok {
            violations.push(format!("{metric}: expected {a} ≻ {b} ≻ {c}"));
        }
    }
    violations
}
