//! Investment-cost distributions and subsidy transforms.
//!
//! A [`CostModel`] is the CDF `G` of the cost an individual pays to become
//! qualified. Subsidies never resample costs; they wrap the CDF in a
//! transform that stochastically dominates the original.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

const INVERSE_TOL: f64 = 1e-10;

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Standard normal density.
pub fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

fn default_hi() -> f64 {
    1.0
}

fn is_zero(x: &f64) -> bool {
    *x == 0.0
}

fn is_one(x: &f64) -> bool {
    *x == 1.0
}

/// Declarative form of a cost model, as written in scenario files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CostSpec {
    Uniform01 {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        lipschitz: Option<f64>,
    },
    TruncatedNormal {
        mu: f64,
        sigma: f64,
        #[serde(default, skip_serializing_if = "is_zero")]
        lo: f64,
        #[serde(default = "default_hi", skip_serializing_if = "is_one")]
        hi: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        lipschitz: Option<f64>,
    },
    BimodalNormal {
        mu1: f64,
        sigma1: f64,
        mu2: f64,
        sigma2: f64,
        mix: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        lipschitz: Option<f64>,
    },
    Empirical {
        knots: Vec<[f64; 2]>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        lipschitz: Option<f64>,
    },
    Shifted {
        base: Box<CostSpec>,
        delta: f64,
    },
    Scaled {
        base: Box<CostSpec>,
        factor: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
struct TruncNormal {
    mu: f64,
    sigma: f64,
    lo: f64,
    hi: f64,
    cdf_lo: f64,
    mass: f64,
}

impl TruncNormal {
    fn new(mu: f64, sigma: f64, lo: f64, hi: f64) -> Result<Self> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::Parameter(format!(
                "sigma must be positive, got {sigma}"
            )));
        }
        if !(mu.is_finite() && lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::Parameter(format!(
                "truncated normal needs finite mu and lo < hi, got mu={mu}, [{lo}, {hi}]"
            )));
        }
        let cdf_lo = normal_cdf((lo - mu) / sigma);
        let mass = normal_cdf((hi - mu) / sigma) - cdf_lo;
        if mass <= 0.0 {
            return Err(Error::Parameter(
                "truncation interval carries no probability mass".into(),
            ));
        }
        Ok(TruncNormal {
            mu,
            sigma,
            lo,
            hi,
            cdf_lo,
            mass,
        })
    }

    fn cdf(&self, x: f64) -> f64 {
        if x <= self.lo {
            0.0
        } else if x >= self.hi {
            1.0
        } else {
            ((normal_cdf((x - self.mu) / self.sigma) - self.cdf_lo) / self.mass).clamp(0.0, 1.0)
        }
    }

    fn pdf(&self, x: f64) -> f64 {
        if x < self.lo || x > self.hi {
            0.0
        } else {
            normal_pdf((x - self.mu) / self.sigma) / (self.sigma * self.mass)
        }
    }

    fn peak_density(&self) -> f64 {
        self.pdf(self.mu.clamp(self.lo, self.hi))
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Kind {
    Uniform,
    TruncatedNormal(TruncNormal),
    Bimodal {
        first: TruncNormal,
        second: TruncNormal,
        mix: f64,
    },
    Empirical(Vec<[f64; 2]>),
    Shifted(Box<CostModel>, f64),
    Scaled(Box<CostModel>, f64),
}

/// Validated CDF of the investment cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CostSpec", into = "CostSpec")]
pub struct CostModel {
    kind: Kind,
    lipschitz: Option<f64>,
}

/// A subsidy expressed as a transform of the cost CDF.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Subsidy {
    /// Lowers every cost by `delta`: `G'(x) = G(x + delta)`.
    Shift(f64),
    /// Divides every cost by `factor`: `G'(x) = G(x * factor)`.
    Scale(f64),
}

impl TryFrom<CostSpec> for CostModel {
    type Error = Error;

    fn try_from(spec: CostSpec) -> Result<Self> {
        CostModel::from_spec(&spec)
    }
}

impl From<CostModel> for CostSpec {
    fn from(model: CostModel) -> Self {
        model.to_spec()
    }
}

fn check_lipschitz(l: Option<f64>) -> Result<Option<f64>> {
    match l {
        Some(v) if !(v.is_finite() && v > 0.0) => Err(Error::Parameter(format!(
            "lipschitz bound must be positive, got {v}"
        ))),
        other => Ok(other),
    }
}

impl CostModel {
    /// `G(c) = c` on `[0, 1]`.
    pub fn uniform() -> Self {
        CostModel {
            kind: Kind::Uniform,
            lipschitz: None,
        }
    }

    /// Normal(mu, sigma) truncated to `[0, 1]`.
    pub fn truncated_normal(mu: f64, sigma: f64) -> Result<Self> {
        Self::truncated_normal_on(mu, sigma, 0.0, 1.0)
    }

    pub fn truncated_normal_on(mu: f64, sigma: f64, lo: f64, hi: f64) -> Result<Self> {
        Ok(CostModel {
            kind: Kind::TruncatedNormal(TruncNormal::new(mu, sigma, lo, hi)?),
            lipschitz: None,
        })
    }

    /// Mixture `mix * N1 + (1 - mix) * N2`, each component truncated to `[0, 1]`.
    pub fn bimodal(mu1: f64, sigma1: f64, mu2: f64, sigma2: f64, mix: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&mix) {
            return Err(Error::Parameter(format!(
                "mix must lie in [0, 1], got {mix}"
            )));
        }
        Ok(CostModel {
            kind: Kind::Bimodal {
                first: TruncNormal::new(mu1, sigma1, 0.0, 1.0)?,
                second: TruncNormal::new(mu2, sigma2, 0.0, 1.0)?,
                mix,
            },
            lipschitz: None,
        })
    }

    /// Piecewise-linear CDF through `(x, G(x))` knots.
    pub fn empirical(knots: Vec<[f64; 2]>) -> Result<Self> {
        if knots.len() < 2 {
            return Err(Error::Parameter(
                "empirical CDF needs at least two knots".into(),
            ));
        }
        for k in &knots {
            if !(k[0].is_finite() && (0.0..=1.0).contains(&k[1])) {
                return Err(Error::Parameter(format!(
                    "invalid knot ({}, {})",
                    k[0], k[1]
                )));
            }
        }
        for w in knots.windows(2) {
            if w[1][0] <= w[0][0] {
                return Err(Error::Parameter(
                    "knot positions must be strictly increasing".into(),
                ));
            }
            if w[1][1] < w[0][1] {
                return Err(Error::Parameter(
                    "knot values must be non-decreasing".into(),
                ));
            }
        }
        if (knots[knots.len() - 1][1] - 1.0).abs() > 1e-12 {
            return Err(Error::Parameter("last knot must reach 1".into()));
        }
        Ok(CostModel {
            kind: Kind::Empirical(knots),
            lipschitz: None,
        })
    }

    pub fn with_lipschitz(mut self, bound: f64) -> Result<Self> {
        self.lipschitz = check_lipschitz(Some(bound))?;
        Ok(self)
    }

    pub fn from_spec(spec: &CostSpec) -> Result<Self> {
        let model = match spec {
            CostSpec::Uniform01 { lipschitz } => CostModel {
                kind: Kind::Uniform,
                lipschitz: check_lipschitz(*lipschitz)?,
            },
            CostSpec::TruncatedNormal {
                mu,
                sigma,
                lo,
                hi,
                lipschitz,
            } => CostModel {
                kind: Kind::TruncatedNormal(TruncNormal::new(*mu, *sigma, *lo, *hi)?),
                lipschitz: check_lipschitz(*lipschitz)?,
            },
            CostSpec::BimodalNormal {
                mu1,
                sigma1,
                mu2,
                sigma2,
                mix,
                lipschitz,
            } => {
                let mut m = CostModel::bimodal(*mu1, *sigma1, *mu2, *sigma2, *mix)?;
                m.lipschitz = check_lipschitz(*lipschitz)?;
                m
            }
            CostSpec::Empirical { knots, lipschitz } => {
                let mut m = CostModel::empirical(knots.clone())?;
                m.lipschitz = check_lipschitz(*lipschitz)?;
                m
            }
            CostSpec::Shifted { base, delta } => {
                CostModel::from_spec(base)?.subsidize(Subsidy::Shift(*delta))?
            }
            CostSpec::Scaled { base, factor } => {
                CostModel::from_spec(base)?.subsidize(Subsidy::Scale(*factor))?
            }
        };
        Ok(model)
    }

    pub fn to_spec(&self) -> CostSpec {
        let lipschitz = self.lipschitz;
        match &self.kind {
            Kind::Uniform => CostSpec::Uniform01 { lipschitz },
            Kind::TruncatedNormal(t) => CostSpec::TruncatedNormal {
                mu: t.mu,
                sigma: t.sigma,
                lo: t.lo,
                hi: t.hi,
                lipschitz,
            },
            Kind::Bimodal { first, second, mix } => CostSpec::BimodalNormal {
                mu1: first.mu,
                sigma1: first.sigma,
                mu2: second.mu,
                sigma2: second.sigma,
                mix: *mix,
                lipschitz,
            },
            Kind::Empirical(knots) => CostSpec::Empirical {
                knots: knots.clone(),
                lipschitz,
            },
            Kind::Shifted(base, delta) => CostSpec::Shifted {
                base: Box::new(base.to_spec()),
                delta: *delta,
            },
            Kind::Scaled(base, factor) => CostSpec::Scaled {
                base: Box::new(base.to_spec()),
                factor: *factor,
            },
        }
    }

    /// Support `[lo, hi]` of the cost distribution.
    pub fn support(&self) -> (f64, f64) {
        match &self.kind {
            Kind::Uniform | Kind::Bimodal { .. } => (0.0, 1.0),
            Kind::TruncatedNormal(t) => (t.lo, t.hi),
            Kind::Empirical(knots) => (knots[0][0], knots[knots.len() - 1][0]),
            Kind::Shifted(base, delta) => {
                let (lo, hi) = base.support();
                (lo - delta, hi - delta)
            }
            Kind::Scaled(base, factor) => {
                let (lo, hi) = base.support();
                (lo / factor, hi / factor)
            }
        }
    }

    /// `G(x)`, clamped to 0 below the support and 1 above it.
    pub fn cdf(&self, x: f64) -> f64 {
        if x.is_nan() {
            return f64::NAN;
        }
        match &self.kind {
            Kind::Uniform => x.clamp(0.0, 1.0),
            Kind::TruncatedNormal(t) => t.cdf(x),
            Kind::Bimodal { first, second, mix } => {
                (mix * first.cdf(x) + (1.0 - mix) * second.cdf(x)).clamp(0.0, 1.0)
            }
            Kind::Empirical(knots) => empirical_cdf(knots, x),
            Kind::Shifted(base, delta) => base.cdf(x + delta),
            Kind::Scaled(base, factor) => base.cdf(x * factor),
        }
    }

    /// Density `G'(x)`; one-sided at kinks of piecewise models.
    pub fn density(&self, x: f64) -> f64 {
        match &self.kind {
            Kind::Uniform => {
                if (0.0..=1.0).contains(&x) {
                    1.0
                } else {
                    0.0
                }
            }
            Kind::TruncatedNormal(t) => t.pdf(x),
            Kind::Bimodal { first, second, mix } => {
                mix * first.pdf(x) + (1.0 - mix) * second.pdf(x)
            }
            Kind::Empirical(knots) => {
                let (lo, hi) = (knots[0][0], knots[knots.len() - 1][0]);
                if x < lo || x > hi {
                    return 0.0;
                }
                let i = knots
                    .partition_point(|k| k[0] <= x)
                    .clamp(1, knots.len() - 1);
                let (a, b) = (knots[i - 1], knots[i]);
                (b[1] - a[1]) / (b[0] - a[0])
            }
            Kind::Shifted(base, delta) => base.density(x + delta),
            Kind::Scaled(base, factor) => factor * base.density(x * factor),
        }
    }

    /// Lipschitz constant of `G`: the declared bound, or the analytic one for
    /// built-in kinds.
    pub fn lipschitz_bound(&self) -> f64 {
        if let Some(l) = self.lipschitz {
            return l;
        }
        match &self.kind {
            Kind::Uniform => 1.0,
            Kind::TruncatedNormal(t) => t.peak_density(),
            Kind::Bimodal { first, second, mix } => {
                mix * first.peak_density() + (1.0 - mix) * second.peak_density()
            }
            Kind::Empirical(knots) => knots
                .windows(2)
                .map(|w| (w[1][1] - w[0][1]) / (w[1][0] - w[0][0]))
                .fold(0.0, f64::max),
            Kind::Shifted(base, _) => base.lipschitz_bound(),
            Kind::Scaled(base, factor) => factor * base.lipschitz_bound(),
        }
    }

    /// Declared Lipschitz metadata, if any.
    pub fn declared_lipschitz(&self) -> Option<f64> {
        self.lipschitz
    }

    pub fn is_uniform01(&self) -> bool {
        matches!(self.kind, Kind::Uniform)
    }

    /// Whether the CDF is strictly increasing on its support.
    pub fn is_strictly_increasing(&self) -> bool {
        match &self.kind {
            Kind::Uniform | Kind::TruncatedNormal(_) | Kind::Bimodal { .. } => true,
            Kind::Empirical(knots) => knots.windows(2).all(|w| w[1][1] > w[0][1]),
            Kind::Shifted(base, _) | Kind::Scaled(base, _) => base.is_strictly_increasing(),
        }
    }

    /// Applies a subsidy. The result dominates `self` pointwise.
    pub fn subsidize(&self, subsidy: Subsidy) -> Result<CostModel> {
        let kind = match subsidy {
            Subsidy::Shift(delta) => {
                if !(delta.is_finite() && delta >= 0.0) {
                    return Err(Error::Parameter(format!(
                        "shift must be non-negative, got {delta}"
                    )));
                }
                Kind::Shifted(Box::new(self.clone()), delta)
            }
            Subsidy::Scale(factor) => {
                if !(factor.is_finite() && factor >= 1.0) {
                    return Err(Error::Parameter(format!(
                        "scale must be at least 1, got {factor}"
                    )));
                }
                Kind::Scaled(Box::new(self.clone()), factor)
            }
        };
        Ok(CostModel {
            kind,
            lipschitz: None,
        })
    }

    /// `x` with `|G(x) - p| <= 1e-10`, by bisection on the support.
    pub fn inverse_cdf(&self, p: f64) -> Result<f64> {
        if !self.is_strictly_increasing() {
            return Err(Error::Unsupported(
                "inverse CDF requires a strictly increasing cost model".into(),
            ));
        }
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Domain(format!("probability {p} outside [0, 1]")));
        }
        let (mut lo, mut hi) = self.support();
        if self.cdf(lo) >= p {
            return Ok(lo);
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let v = self.cdf(mid);
            if (v - p).abs() <= INVERSE_TOL * 1e-3 || hi - lo <= f64::EPSILON * hi.abs().max(1.0) {
                return Ok(mid);
            }
            if v < p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// Checks `other(x) >= self(x) - tol` on a probe grid over `[0, 1]`.
    pub fn dominated_by(&self, other: &CostModel, probes: usize, tol: f64) -> bool {
        let n = probes.max(2);
        (0..n).all(|i| {
            let x = i as f64 / (n - 1) as f64;
            other.cdf(x) >= self.cdf(x) - tol
        })
    }
}

fn empirical_cdf(knots: &[[f64; 2]], x: f64) -> f64 {
    let first = knots[0];
    let last = knots[knots.len() - 1];
    if x < first[0] {
        return 0.0;
    }
    if x >= last[0] {
        return 1.0;
    }
    let i = knots.partition_point(|k| k[0] <= x);
    let (a, b) = (knots[i - 1], knots[i]);
    let t = (x - a[0]) / (b[0] - a[0]);
    a[1] + t * (b[1] - a[1])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn cdf_examples() {
        assert_eq!(CostModel::uniform().cdf(0.6), 0.6);
        let shifted = CostModel::uniform().subsidize(Subsidy::Shift(0.1)).unwrap();
        assert!((shifted.cdf(0.5) - 0.6).abs() < 1e-15);
        let emp = CostModel::empirical(vec![[0.0, 0.0], [0.5, 0.8], [1.0, 1.0]]).unwrap();
        assert!((emp.cdf(0.25) - 0.4).abs() < 1e-15);
    }

    #[test]
    fn clamps_outside_support() {
        let u = CostModel::uniform();
        assert_eq!(u.cdf(-0.3), 0.0);
        assert_eq!(u.cdf(1.7), 1.0);
        let t = CostModel::truncated_normal(0.5, 0.2).unwrap();
        assert_eq!(t.cdf(0.0), 0.0);
        assert_eq!(t.cdf(1.0), 1.0);
    }

    #[test]
    fn invalid_parameters() {
        assert!(CostModel::truncated_normal(0.5, 0.0).is_err());
        assert!(CostModel::bimodal(0.3, 0.1, 0.7, 0.1, 1.5).is_err());
        assert!(CostModel::empirical(vec![[0.0, 0.5], [0.5, 0.2], [1.0, 1.0]]).is_err());
        let u = CostModel::uniform();
        assert!(u.subsidize(Subsidy::Shift(-0.1)).is_err());
        assert!(u.subsidize(Subsidy::Scale(0.9)).is_err());
    }

    #[test]
    fn zero_shift_is_identity() {
        let base = CostModel::truncated_normal(0.6, 0.15).unwrap();
        let same = base.subsidize(Subsidy::Shift(0.0)).unwrap();
        for i in 0..=100 {
            let x = i as f64 / 100.0;
            assert_eq!(base.cdf(x), same.cdf(x));
        }
    }

    #[test]
    fn uniform_shift_strictly_dominates() {
        let u = CostModel::uniform();
        let s = u.subsidize(Subsidy::Shift(0.1)).unwrap();
        for i in 1..=900 {
            let x = i as f64 / 1000.0;
            assert!(s.cdf(x) > u.cdf(x));
        }
    }

    #[test]
    fn inverse_examples() {
        let u = CostModel::uniform();
        assert!((u.inverse_cdf(0.25).unwrap() - 0.25).abs() < 1e-10);
        let s = u.subsidize(Subsidy::Shift(0.1)).unwrap();
        assert!((s.inverse_cdf(0.6).unwrap() - 0.5).abs() < 1e-10);
        let t = CostModel::truncated_normal(0.5, 0.2).unwrap();
        assert!((t.inverse_cdf(0.5).unwrap() - 0.5).abs() < 1e-10);
    }

    #[test]
    fn inverse_rejects_flat_models() {
        let flat =
            CostModel::empirical(vec![[0.0, 0.0], [0.5, 0.5], [0.7, 0.5], [1.0, 1.0]]).unwrap();
        assert!(matches!(flat.inverse_cdf(0.3), Err(Error::Unsupported(_))));
    }

    #[test]
    fn truncated_normal_lipschitz_is_peak_density() {
        let t = CostModel::truncated_normal(0.5, 0.1).unwrap();
        let peak = t.density(0.5);
        assert!((t.lipschitz_bound() - peak).abs() < 1e-12);
        assert_eq!(CostModel::uniform().lipschitz_bound(), 1.0);
    }

    #[test]
    fn spec_round_trip() {
        let m = CostModel::bimodal(0.57, 0.05, 0.74, 0.05, 0.5)
            .unwrap()
            .subsidize(Subsidy::Shift(0.05))
            .unwrap();
        let json = serde_json::to_string(&m).unwrap();
        let back: CostModel = serde_json::from_str(&json).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn unknown_fields_rejected() {
        let bad = r#"{"kind":"uniform01","sigma":0.1}"#;
        assert!(serde_json::from_str::<CostModel>(bad).is_err());
        let bad = r#"{"kind":"truncated_normal","mu":0.5,"sigma":-1.0}"#;
        assert!(serde_json::from_str::<CostModel>(bad).is_err());
    }

    fn arb_model() -> impl Strategy<Value = CostModel> {
        prop_oneof![
            Just(CostModel::uniform()),
            (0.0f64..1.0, 0.02f64..0.5)
                .prop_map(|(m, s)| CostModel::truncated_normal(m, s).unwrap()),
            (
                0.0f64..1.0,
                0.02f64..0.3,
                0.0f64..1.0,
                0.02f64..0.3,
                0.0f64..1.0
            )
                .prop_map(|(a, b, c, d, e)| CostModel::bimodal(a, b, c, d, e).unwrap()),
            proptest::collection::vec(0.01f64..1.0, 1..6).prop_map(|steps| {
                let total: f64 = steps.iter().sum();
                let mut acc = 0.0;
                let mut knots = vec![[0.0, 0.0]];
                for (i, s) in steps.iter().enumerate() {
                    acc += s / total;
                    knots.push([(i + 1) as f64 / steps.len() as f64, acc.min(1.0)]);
                }
                let n = knots.len();
                knots[n - 1][1] = 1.0;
                CostModel::empirical(knots).unwrap()
            }),
        ]
    }

    proptest! {
        #[test]
        fn cdf_is_monotone(m in arb_model(), a in -0.2f64..1.2, b in -0.2f64..1.2) {
            let (x1, x2) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(m.cdf(x1) <= m.cdf(x2));
            prop_assert!((0.0..=1.0).contains(&m.cdf(x1)));
        }

        #[test]
        fn shift_never_decreases_cdf(m in arb_model(), delta in 0.0f64..0.5) {
            let s = m.subsidize(Subsidy::Shift(delta)).unwrap();
            for i in 0..=200 {
                let x = i as f64 / 200.0;
                prop_assert!(s.cdf(x) >= m.cdf(x));
            }
        }

        #[test]
        fn inverse_round_trip(m in arb_model()) {
            prop_assume!(m.is_strictly_increasing());
            for i in 0..=20 {
                let p = i as f64 / 20.0;
                let x = m.inverse_cdf(p).unwrap();
                prop_assert!((m.cdf(x) - p).abs() <= 1e-8, "p={} x={} cdf={}", p, x, m.cdf(x));
            }
        }
    }
}
