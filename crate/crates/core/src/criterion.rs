//! The scaled Huber family H̃_k, location M-estimates and the curvature probe.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::fmt;
use std::str::FromStr;

use rand::distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::distributions::ErrorLaw;
use crate::error::{Error, Result};
use crate::registry::{parse_arg, Registry};
use crate::rng::SeedStream;

/// A member of the Huber family, indexed by k ∈ [0, ∞].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum CriterionSpec {
    /// k = 0: |x|.
    AbsoluteDeviation,
    /// 0 < k < ∞: ((k+1)/k)·H_k(x).
    Huber(f64),
    /// k = ∞: x²/2.
    SquaredError,
}

impl CriterionSpec {
    pub fn from_k(k: f64) -> Result<Self> {
        if k == 0.0 {
            Ok(CriterionSpec::AbsoluteDeviation)
        } else if k == f64::INFINITY {
            Ok(CriterionSpec::SquaredError)
        } else if k > 0.0 && k.is_finite() {
            Ok(CriterionSpec::Huber(k))
        } else {
            Err(Error::invalid(format!("criterion needs k in [0, inf], got {k}")))
        }
    }

    pub fn k(&self) -> f64 {
        match *self {
            CriterionSpec::AbsoluteDeviation => 0.0,
            CriterionSpec::Huber(k) => k,
            CriterionSpec::SquaredError => f64::INFINITY,
        }
    }

    pub fn name(&self) -> String {
        match *self {
            CriterionSpec::AbsoluteDeviation => "l1".to_string(),
            CriterionSpec::Huber(k) => format!("huber:{k}"),
            CriterionSpec::SquaredError => "l2".to_string(),
        }
    }

    #[inline]
    pub fn loss(&self, x: f64) -> f64 {
        match *self {
            CriterionSpec::AbsoluteDeviation => x.abs(),
            CriterionSpec::SquaredError => 0.5 * x * x,
            CriterionSpec::Huber(k) => {
                let a = x.abs();
                let h = if a <= k { 0.5 * x * x } else { k * (a - 0.5 * k) };
                (k + 1.0) / k * h
            }
        }
    }

    /// argmin over a of Σ loss(v − a).
    pub fn location(&self, values: &[f64]) -> Result<f64> {
        if values.is_empty() {
            return Err(Error::EmptySegment);
        }
        Ok(match *self {
            CriterionSpec::SquaredError => values.iter().sum::<f64>() / values.len() as f64,
            CriterionSpec::AbsoluteDeviation => median_midpoint(values),
            CriterionSpec::Huber(k) => huber_location(values, k),
        })
    }

    /// Σ loss(v − location(v)).
    pub fn segment_cost(&self, values: &[f64]) -> Result<f64> {
        let a = self.location(values)?;
        Ok(values.iter().map(|v| self.loss(v - a)).sum())
    }

    pub fn criterion(&self) -> Box<dyn Criterion> {
        match *self {
            CriterionSpec::AbsoluteDeviation => Box::new(AbsoluteDeviation),
            CriterionSpec::Huber(k) => Box::new(Huber { k }),
            CriterionSpec::SquaredError => Box::new(SquaredError),
        }
    }
}

pub fn loss(spec: CriterionSpec, x: f64) -> f64 {
    spec.loss(x)
}

pub fn location_mestimate(values: &[f64], spec: CriterionSpec) -> Result<f64> {
    spec.location(values)
}

impl fmt::Display for CriterionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for CriterionSpec {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(registry().build(s)?.spec())
    }
}

impl TryFrom<String> for CriterionSpec {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<CriterionSpec> for String {
    fn from(c: CriterionSpec) -> String {
        c.name()
    }
}

/// A fitting criterion: a loss plus the segment-level operations the
/// estimators need.
pub trait Criterion: Send + Sync + fmt::Debug {
    fn spec(&self) -> CriterionSpec;

    fn loss(&self, x: f64) -> f64 {
        self.spec().loss(x)
    }

    fn location(&self, values: &[f64]) -> Result<f64> {
        self.spec().location(values)
    }

    /// `out[i]` = optimal single-level cost of `values[..=i]`.
    fn prefix_costs(&self, values: &[f64]) -> Vec<f64> {
        let spec = self.spec();
        (1..=values.len())
            .map(|i| spec.segment_cost(&values[..i]).expect("nonempty prefix"))
            .collect()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct AbsoluteDeviation;

#[derive(Debug, Clone, Copy)]
pub struct Huber {
    pub k: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct SquaredError;

impl Criterion for SquaredError {
    fn spec(&self) -> CriterionSpec {
        CriterionSpec::SquaredError
    }

    fn prefix_costs(&self, values: &[f64]) -> Vec<f64> {
        // Welford: cost = M2 / 2
        let mut mean = 0.0;
        let mut m2 = 0.0;
        values
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let d = v - mean;
                mean += d / (i + 1) as f64;
                m2 += d * (v - mean);
                0.5 * m2
            })
            .collect()
    }
}

impl Criterion for AbsoluteDeviation {
    fn spec(&self) -> CriterionSpec {
        CriterionSpec::AbsoluteDeviation
    }

    fn prefix_costs(&self, values: &[f64]) -> Vec<f64> {
        let mut lo: BinaryHeap<Total> = BinaryHeap::new();
        let mut hi: BinaryHeap<Reverse<Total>> = BinaryHeap::new();
        let (mut sum_lo, mut sum_hi) = (0.0, 0.0);
        let mut out = Vec::with_capacity(values.len());
        for &v in values {
            if lo.peek().is_none_or(|t| v <= t.0) {
                lo.push(Total(v));
                sum_lo += v;
            } else {
                hi.push(Reverse(Total(v)));
                sum_hi += v;
            }
            if lo.len() > hi.len() + 1 {
                let t = lo.pop().unwrap().0;
                sum_lo -= t;
                sum_hi += t;
                hi.push(Reverse(Total(t)));
            } else if hi.len() > lo.len() {
                let t = hi.pop().unwrap().0 .0;
                sum_hi -= t;
                sum_lo += t;
                lo.push(Total(t));
            }
            let m = lo.peek().unwrap().0;
            out.push(m * lo.len() as f64 - sum_lo + sum_hi - m * hi.len() as f64);
        }
        out
    }
}

impl Criterion for Huber {
    fn spec(&self) -> CriterionSpec {
        CriterionSpec::Huber(self.k)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Total(f64);

impl Eq for Total {}

impl PartialOrd for Total {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Total {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Registry of criteria: `l1`, `l2`, `huber:<k>`.
pub fn registry() -> Registry<dyn Criterion> {
    Registry::<dyn Criterion>::new("criterion")
        .with("l1", "absolute deviation (k = 0)", |_| {
            Ok(Box::new(AbsoluteDeviation) as Box<dyn Criterion>)
        })
        .with("l2", "squared error (k = inf)", |_| {
            Ok(Box::new(SquaredError) as Box<dyn Criterion>)
        })
        .with("huber", "scaled Huber loss, huber:<k>", |arg| {
            let k: f64 = parse_arg("huber", arg)?;
            Ok(CriterionSpec::from_k(k)?.criterion())
        })
}

fn median_midpoint(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    let n = v.len();
    let (_, &mut upper, _) = v.select_nth_unstable_by(n / 2, f64::total_cmp);
    if n % 2 == 1 {
        upper
    } else {
        let lower = v[..n / 2].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower + upper)
    }
}

const BISECTION_TOL: f64 = 1e-10;

fn huber_location(values: &[f64], k: f64) -> f64 {
    let score = |a: f64| -> f64 { values.iter().map(|v| (v - a).clamp(-k, k)).sum() };
    let lo0 = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi0 = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if lo0 == hi0 {
        return lo0;
    }
    // left end of the root set: inf{a : score(a) <= 0}
    let (mut lo, mut hi) = (lo0, hi0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= BISECTION_TOL || mid == lo || mid == hi {
            break;
        }
        if score(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let left = hi;
    // right end: sup{a : score(a) >= 0}
    let (mut lo, mut hi) = (lo0, hi0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= BISECTION_TOL || mid == lo || mid == hi {
            break;
        }
        if score(mid) < 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let right = lo;
    0.5 * (left + right)
}

/// Monte Carlo comparison of E[H̃_k(ξ+μ) − H̃_k(ξ)] (lhs) with the
/// curvature lower bound (rhs). `se` is the standard error of lhs − rhs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvatureProbe {
    pub lhs: f64,
    pub rhs: f64,
    pub se: f64,
}

impl CurvatureProbe {
    pub fn holds(&self, z: f64) -> bool {
        self.lhs >= self.rhs - z * self.se
    }
}

/// Largest δ with f_ξ(x) ≥ f_ξ(0)/2 on |x| ≤ δ (laws here are unimodal).
pub fn half_density_radius(law: &ErrorLaw) -> Result<f64> {
    let f0 = law.density_at(0.0);
    if !(f0 > 0.0 && f0.is_finite()) {
        return Err(Error::law(format!(
            "{} has f(0) = {f0}; the k = 0 bound needs 0 < f(0) < inf",
            law.name()
        )));
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    while law.density_at(hi) >= 0.5 * f0 {
        hi *= 2.0;
    }
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if law.density_at(mid) >= 0.5 * f0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

pub fn curvature_margin(
    spec: CriterionSpec,
    mu: f64,
    law: &ErrorLaw,
    replications: usize,
    seed: u64,
) -> Result<CurvatureProbe> {
    curvature_margin_with_delta(spec, mu, law, replications, seed, None)
}

/// As [`curvature_margin`]; for k = 0, `delta` overrides the default
/// half-density radius.
pub fn curvature_margin_with_delta(
    spec: CriterionSpec,
    mu: f64,
    law: &ErrorLaw,
    replications: usize,
    seed: u64,
    delta: Option<f64>,
) -> Result<CurvatureProbe> {
    law.validate()?;
    if replications < 2 {
        return Err(Error::invalid("curvature probe needs at least 2 replications"));
    }
    let k = spec.k();
    let analytic_rhs = match spec {
        CriterionSpec::AbsoluteDeviation => {
            let delta = match delta {
                Some(d) => d,
                None => half_density_radius(law)?,
            };
            if mu.abs() > delta {
                return Err(Error::MuOutOfRange(format!(
                    "|mu| = {} > delta = {delta}",
                    mu.abs()
                )));
            }
            Some(0.5 * mu * mu * law.density_at(0.0))
        }
        CriterionSpec::Huber(k) => {
            if mu.abs() >= 2.0 * k {
                return Err(Error::MuOutOfRange(format!(
                    "|mu| = {} >= 2k = {}",
                    mu.abs(),
                    2.0 * k
                )));
            }
            None
        }
        CriterionSpec::SquaredError => None,
    };
    let sampler = law.sampler();
    let mut rng = SeedStream::new(seed).substream("curvature").rng();
    let half_mu2 = 0.5 * mu * mu;
    let (mut sum_l, mut sum_d, mut sum_d2) = (0.0, 0.0, 0.0);
    for _ in 0..replications {
        let xi: f64 = sampler.sample(&mut rng);
        let l = spec.loss(xi + mu) - spec.loss(xi);
        let r = match analytic_rhs {
            Some(r) => r,
            None if (-k..=0.0).contains(&xi) => half_mu2,
            None => 0.0,
        };
        let d = l - r;
        sum_l += l;
        sum_d += d;
        sum_d2 += d * d;
    }
    let n = replications as f64;
    let lhs = sum_l / n;
    let mean_d = sum_d / n;
    let var_d = ((sum_d2 - n * mean_d * mean_d) / (n - 1.0)).max(0.0);
    Ok(CurvatureProbe {
        lhs,
        rhs: lhs - mean_d,
        se: (var_d / n).sqrt(),
    })
}
