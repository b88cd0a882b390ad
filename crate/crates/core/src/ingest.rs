//! Score histograms and maximum-likelihood Beta fits of the per-group,
//! per-label score distributions.

use std::collections::BTreeMap;
use std::io::Read;
use std::num::NonZeroUsize;
use std::path::Path;
use std::sync::OnceLock;

use gauss_quad::GaussLegendre;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use statrs::function::beta::beta_reg;
use statrs::function::gamma::digamma;

use crate::error::{Error, Result};
use crate::features::{FeatureSpec, ScoreDist, ScoreGroup};

const BIN_TOL: f64 = 1e-9;
const GRAD_TOL: f64 = 1e-8;
const MAX_ITERS: usize = 200;
const MIN_TOTAL: u64 = 100;
const QUAD_DEGREE: usize = 40;
/// Power of the extra substitution in the edge bins, which smooths the
/// logarithmic singularity of the moment integrands.
const EDGE_POWER: f64 = 4.0;

/// Counts of one (group, label) pair on uniform bins.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Series {
    /// Left bin edges, increasing.
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub width: f64,
}

impl Series {
    pub fn right(&self, i: usize) -> f64 {
        (self.edges[i] + self.width).min(1.0)
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn nonempty_bins(&self) -> usize {
        self.counts.iter().filter(|c| **c > 0).count()
    }
}

/// Histograms keyed by group id and label.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreHistogram {
    series: BTreeMap<(String, u8), Series>,
}

impl ScoreHistogram {
    pub fn series(&self, group: &str, label: u8) -> Option<&Series> {
        self.series.get(&(group.to_string(), label))
    }

    pub fn keys(&self) -> impl Iterator<Item = &(String, u8)> {
        self.series.keys()
    }

    pub fn groups(&self) -> Vec<String> {
        let mut g: Vec<String> = self.series.keys().map(|(g, _)| g.clone()).collect();
        g.dedup();
        g
    }

    pub fn len(&self) -> usize {
        self.series.len()
    }

    pub fn is_empty(&self) -> bool {
        self.series.is_empty()
    }
}

fn parse_error(line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

pub fn load_histogram(path: impl AsRef<Path>) -> Result<ScoreHistogram> {
    let file = std::fs::File::open(path.as_ref())
        .map_err(|e| Error::Io(format!("{}: {e}", path.as_ref().display())))?;
    parse_histogram(file)
}

/// Parses `group,label,score,count` rows; `score` is the left bin edge.
pub fn parse_histogram<R: Read>(input: R) -> Result<ScoreHistogram> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(input);
    let header = reader
        .headers()
        .map_err(|e| parse_error(1, e.to_string()))?
        .clone();
    let expected = ["group", "label", "score", "count"];
    if header.iter().collect::<Vec<_>>() != expected {
        return Err(parse_error(
            1,
            format!("header must be `{}`", expected.join(",")),
        ));
    }
    let mut rows: BTreeMap<(String, u8), Vec<(f64, u64, u64)>> = BTreeMap::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_error(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let group = record[0].to_string();
        if group.is_empty() {
            return Err(parse_error(line, "empty group id"));
        }
        let label = match &record[1] {
            "0" => 0,
            "1" => 1,
            other => return Err(parse_error(line, format!("label `{other}` is not 0 or 1"))),
        };
        let score: f64 = record[2]
            .parse()
            .map_err(|_| parse_error(line, format!("score `{}` is not a number", &record[2])))?;
        if !(0.0..1.0).contains(&score) {
            return Err(parse_error(line, format!("score {score} outside [0, 1)")));
        }
        let count: i64 = record[3]
            .parse()
            .map_err(|_| parse_error(line, format!("count `{}` is not an integer", &record[3])))?;
        if count < 0 {
            return Err(parse_error(line, format!("negative count {count}")));
        }
        rows.entry((group, label))
            .or_default()
            .push((score, count as u64, line));
    }
    let mut series = BTreeMap::new();
    for (key, mut bins) in rows {
        bins.sort_by(|a, b| a.0.total_cmp(&b.0));
        let width = if bins.len() > 1 {
            bins[1].0 - bins[0].0
        } else {
            1.0 - bins[0].0
        };
        for pair in bins.windows(2) {
            let gap = pair[1].0 - pair[0].0;
            if gap <= 0.0 {
                return Err(parse_error(
                    pair[1].2,
                    format!("duplicate bin edge {}", pair[1].0),
                ));
            }
            if (gap - width).abs() > BIN_TOL {
                return Err(parse_error(
                    pair[1].2,
                    format!(
                        "non-uniform bins for group `{}` label {}: edge {}",
                        key.0, key.1, pair[1].0
                    ),
                ));
            }
        }
        let last = bins.last().expect("non-empty series");
        if last.0 + width > 1.0 + BIN_TOL {
            return Err(parse_error(
                last.2,
                format!("bin starting at {} extends past 1", last.0),
            ));
        }
        series.insert(
            key,
            Series {
                edges: bins.iter().map(|b| b.0).collect(),
                counts: bins.iter().map(|b| b.1).collect(),
                width,
            },
        );
    }
    if series.is_empty() {
        return Err(parse_error(1, "histogram has no rows"));
    }
    Ok(ScoreHistogram { series })
}

/// Maximum-likelihood Beta parameters with fit diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BetaFit {
    pub alpha: f64,
    pub beta: f64,
    pub log_likelihood: f64,
    pub iterations: usize,
    pub converged: bool,
    pub gradient_norm: f64,
}

/// `psi'(x)` by upward recurrence and the asymptotic series.
fn trigamma(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < 10.0 {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let x2 = 1.0 / (x * x);
    acc + 1.0 / x
        + x2 / 2.0
        + x2 / x
            * (1.0 / 6.0
                - x2 * (1.0 / 30.0 - x2 * (1.0 / 42.0 - x2 * (1.0 / 30.0 - x2 * 5.0 / 66.0))))
}

fn quadrature() -> &'static [(f64, f64)] {
    static RULE: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    RULE.get_or_init(|| {
        let rule = GaussLegendre::new(NonZeroUsize::new(QUAD_DEGREE).expect("positive degree"));
        // mapped to [0, 1]
        rule.as_node_weight_pairs()
            .iter()
            .map(|&(x, w)| (0.5 * (x + 1.0), 0.5 * w))
            .collect()
    })
}

/// Mass of `Beta(a, b)` on `[l, r]`, using the mirrored form in the upper
/// tail to avoid cancellation.
fn bin_mass(a: f64, b: f64, l: f64, r: f64) -> f64 {
    if l >= 0.5 {
        beta_reg(b, a, 1.0 - l) - beta_reg(b, a, 1.0 - r)
    } else {
        beta_reg(a, b, r) - beta_reg(a, b, l)
    }
}

/// Conditional moments of `(ln t, ln(1 - t))` given `t` in `[l, r]`:
/// means, variances and covariance.
struct Moments {
    m1: f64,
    m2: f64,
    v11: f64,
    v22: f64,
    v12: f64,
}

fn bin_moments(a: f64, b: f64, l: f64, r: f64) -> Moments {
    let rule = quadrature();
    // (log weight, ln t, ln(1 - t)) per node
    let points: Vec<(f64, f64, f64)> = if l == 0.0 && r < 1.0 {
        // t = r v^(k / a) absorbs t^(a - 1)
        rule.iter()
            .map(|&(v, w)| {
                let ln_t = r.ln() + EDGE_POWER / a * v.ln();
                let t = ln_t.exp();
                let ln_1t = (-t).ln_1p();
                (
                    w.ln() + (EDGE_POWER - 1.0) * v.ln() + (b - 1.0) * ln_1t,
                    ln_t,
                    ln_1t,
                )
            })
            .collect()
    } else if r >= 1.0 && l > 0.0 {
        // s = 1 - t = (1 - l) v^(k / b) absorbs (1 - t)^(b - 1)
        rule.iter()
            .map(|&(v, w)| {
                let ln_s = (1.0 - l).ln() + EDGE_POWER / b * v.ln();
                let s = ln_s.exp();
                let ln_t = (-s).ln_1p();
                (
                    w.ln() + (EDGE_POWER - 1.0) * v.ln() + (a - 1.0) * ln_t,
                    ln_t,
                    ln_s,
                )
            })
            .collect()
    } else {
        rule.iter()
            .map(|&(v, w)| {
                let t = l + (r - l) * v;
                let (ln_t, ln_1t) = (t.ln(), (-t).ln_1p());
                (w.ln() + (a - 1.0) * ln_t + (b - 1.0) * ln_1t, ln_t, ln_1t)
            })
            .collect()
    };
    let top = points.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = points.iter().map(|p| (p.0 - top).exp()).collect();
    let total: f64 = weights.iter().sum();
    let mean = |f: &dyn Fn(&(f64, f64, f64)) -> f64| -> f64 {
        points
            .iter()
            .zip(&weights)
            .map(|(p, w)| w * f(p))
            .sum::<f64>()
            / total
    };
    let m1 = mean(&|p| p.1);
    let m2 = mean(&|p| p.2);
    Moments {
        m1,
        m2,
        v11: mean(&|p| (p.1 - m1) * (p.1 - m1)),
        v22: mean(&|p| (p.2 - m2) * (p.2 - m2)),
        v12: mean(&|p| (p.1 - m1) * (p.2 - m2)),
    }
}

/// Normalized bins: `(left, right, weight)` with weights summing to one.
fn normalized(series: &Series) -> Vec<(f64, f64, f64)> {
    let total = series.total() as f64;
    (0..series.edges.len())
        .filter(|&i| series.counts[i] > 0)
        .map(|i| {
            (
                series.edges[i],
                series.right(i),
                series.counts[i] as f64 / total,
            )
        })
        .collect()
}

fn binned_log_likelihood(bins: &[(f64, f64, f64)], a: f64, b: f64) -> f64 {
    bins.iter()
        .map(|&(l, r, q)| q * bin_mass(a, b, l, r).ln())
        .sum()
}

fn method_of_moments(points: &[(f64, f64)]) -> (f64, f64) {
    let mean: f64 = points.iter().map(|(x, q)| x * q).sum();
    let var: f64 = points
        .iter()
        .map(|(x, q)| q * (x - mean) * (x - mean))
        .sum();
    moment_start(mean, var)
}

fn moment_start(mean: f64, var: f64) -> (f64, f64) {
    let common = mean * (1.0 - mean) / var - 1.0;
    if var > 0.0 && common > 0.0 {
        (mean * common, (1.0 - mean) * common)
    } else {
        (1.0, 1.0)
    }
}

/// Damped Newton ascent on a concave-ish objective in `(a, b)`.
fn newton<G, L>(start: (f64, f64), derivs: G, objective: L) -> Result<(f64, f64, usize, f64)>
where
    G: Fn(f64, f64) -> ([f64; 2], [[f64; 2]; 2]),
    L: Fn(f64, f64) -> f64,
{
    let (mut a, mut b) = start;
    let mut value = objective(a, b);
    for iter in 0..=MAX_ITERS {
        let (g, h) = derivs(a, b);
        let gnorm = g[0].abs().max(g[1].abs());
        if gnorm <= GRAD_TOL {
            return Ok((a, b, iter, gnorm));
        }
        if iter == MAX_ITERS {
            break;
        }
        let det = h[0][0] * h[1][1] - h[0][1] * h[1][0];
        let (da, db) = if h[0][0] < 0.0 && det > 0.0 {
            (
                -(h[1][1] * g[0] - h[0][1] * g[1]) / det,
                -(-h[1][0] * g[0] + h[0][0] * g[1]) / det,
            )
        } else {
            (g[0] / h[0][0].abs().max(1.0), g[1] / h[1][1].abs().max(1.0))
        };
        let mut step = 1.0;
        let mut moved = false;
        for _ in 0..60 {
            let (na, nb) = (a + step * da, b + step * db);
            if na > 0.0 && nb > 0.0 {
                let nv = objective(na, nb);
                if nv.is_finite() && nv >= value - 1e-14 * value.abs() {
                    a = na;
                    b = nb;
                    value = nv;
                    moved = true;
                    break;
                }
            }
            step *= 0.5;
        }
        if !moved {
            return Err(Error::NonConvergence(format!(
                "line search stalled at alpha = {a}, beta = {b} with gradient {gnorm:e}"
            )));
        }
    }
    let (g, _) = derivs(a, b);
    Err(Error::NonConvergence(format!(
        "no convergence after {MAX_ITERS} iterations (alpha = {a}, beta = {b}, gradient {:e})",
        g[0].abs().max(g[1].abs())
    )))
}

fn check_series<'a>(hist: &'a ScoreHistogram, group: &str, label: u8) -> Result<&'a Series> {
    let series = hist
        .series(group, label)
        .ok_or_else(|| Error::Config(format!("no histogram for group `{group}` label {label}")))?;
    match series.nonempty_bins() {
        0 => {
            return Err(Error::Degenerate(format!(
                "group `{group}` label {label} has no counts"
            )))
        }
        1 => {
            return Err(Error::Degenerate(format!(
                "group `{group}` label {label}: all mass in one bin"
            )))
        }
        2 => {
            return Err(Error::Precondition(format!(
                "group `{group}` label {label} needs at least 3 non-empty bins"
            )))
        }
        _ => {}
    }
    if series.total() < MIN_TOTAL {
        return Err(Error::Precondition(format!(
            "group `{group}` label {label} has {} observations, need at least {MIN_TOTAL}",
            series.total()
        )));
    }
    Ok(series)
}

/// Maximizes the binned log-likelihood `sum count * ln(F(right) - F(left))`.
pub fn fit_beta(hist: &ScoreHistogram, group: &str, label: u8) -> Result<BetaFit> {
    let series = check_series(hist, group, label)?;
    let bins = normalized(series);
    let mids: Vec<(f64, f64)> = bins.iter().map(|&(l, r, q)| (0.5 * (l + r), q)).collect();
    let derivs = |a: f64, b: f64| {
        let mut g = [0.0; 2];
        let mut h = [[0.0; 2]; 2];
        for &(l, r, q) in &bins {
            let m = bin_moments(a, b, l, r);
            g[0] += q * m.m1;
            g[1] += q * m.m2;
            h[0][0] += q * m.v11;
            h[1][1] += q * m.v22;
            h[0][1] += q * m.v12;
        }
        let (da, db, dab) = (digamma(a), digamma(b), digamma(a + b));
        let (ta, tb, tab) = (trigamma(a), trigamma(b), trigamma(a + b));
        g[0] -= da - dab;
        g[1] -= db - dab;
        h[0][0] -= ta - tab;
        h[1][1] -= tb - tab;
        h[0][1] += tab;
        h[1][0] = h[0][1];
        (g, h)
    };
    let (alpha, beta, iterations, gradient_norm) =
        newton(method_of_moments(&mids), derivs, |a, b| {
            binned_log_likelihood(&bins, a, b)
        })?;
    let total = series.total() as f64;
    Ok(BetaFit {
        alpha,
        beta,
        log_likelihood: total * binned_log_likelihood(&bins, alpha, beta),
        iterations,
        converged: true,
        gradient_norm,
    })
}

/// Fits to `n` points drawn from the histogram: a bin by its count, then a
/// uniform position inside it.
pub fn fit_beta_resampled(
    hist: &ScoreHistogram,
    group: &str,
    label: u8,
    n: usize,
    seed: u64,
) -> Result<BetaFit> {
    let series = check_series(hist, group, label)?;
    if n < MIN_TOTAL as usize {
        return Err(Error::Precondition(format!(
            "resample size {n} below {MIN_TOTAL}"
        )));
    }
    let bins = normalized(series);
    let index = WeightedIndex::new(bins.iter().map(|b| b.2))
        .map_err(|e| Error::Degenerate(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let eps = 1e-12;
    let points: Vec<f64> = (0..n)
        .map(|_| {
            let (l, r, _) = bins[index.sample(&mut rng)];
            rng.random_range(l..r).clamp(eps, 1.0 - eps)
        })
        .collect();
    let nf = n as f64;
    let s1 = points.iter().map(|t| t.ln()).sum::<f64>() / nf;
    let s2 = points.iter().map(|t| (-t).ln_1p()).sum::<f64>() / nf;
    let mean = points.iter().sum::<f64>() / nf;
    let var = points.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>() / nf;
    let ll =
        |a: f64, b: f64| (a - 1.0) * s1 + (b - 1.0) * s2 - statrs::function::beta::ln_beta(a, b);
    let derivs = |a: f64, b: f64| {
        let dab = digamma(a + b);
        let tab = trigamma(a + b);
        (
            [s1 - (digamma(a) - dab), s2 - (digamma(b) - dab)],
            [[-(trigamma(a) - tab), tab], [tab, -(trigamma(b) - tab)]],
        )
    };
    let (alpha, beta, iterations, gradient_norm) = newton(moment_start(mean, var), derivs, ll)?;
    Ok(BetaFit {
        alpha,
        beta,
        log_likelihood: nf * ll(alpha, beta),
        iterations,
        converged: true,
        gradient_norm,
    })
}

/// Fits every (group, label) series.
pub fn fit_all(hist: &ScoreHistogram) -> Result<BTreeMap<(String, u8), BetaFit>> {
    let keys: Vec<(String, u8)> = hist.keys().cloned().collect();
    keys.into_par_iter()
        .map(|(g, l)| {
            let fit = fit_beta(hist, &g, l)?;
            Ok(((g, l), fit))
        })
        .collect()
}

/// Score-model declaration from fits of both labels for every group.
pub fn to_score_model(fits: &BTreeMap<(String, u8), BetaFit>) -> Result<FeatureSpec> {
    let mut groups: BTreeMap<String, ScoreGroup> = BTreeMap::new();
    let ids: Vec<String> = {
        let mut v: Vec<String> = fits.keys().map(|(g, _)| g.clone()).collect();
        v.dedup();
        v
    };
    for id in ids {
        let get = |label: u8| {
            fits.get(&(id.clone(), label))
                .ok_or_else(|| Error::Config(format!("group `{id}` has no fit for label {label}")))
        };
        let (y1, y0) = (get(1)?, get(0)?);
        groups.insert(
            id.clone(),
            ScoreGroup {
                y1: ScoreDist::beta(y1.alpha, y1.beta)?,
                y0: ScoreDist::beta(y0.alpha, y0.beta)?,
            },
        );
    }
    if groups.is_empty() {
        return Err(Error::Config("no fits given".into()));
    }
    Ok(FeatureSpec::Score { groups })
}
