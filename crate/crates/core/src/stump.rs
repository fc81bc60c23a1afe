//! Exact one-dimensional change-point fits (the stump model).

use std::fmt;
use std::str::FromStr;

use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::criterion::CriterionSpec;
use crate::distributions::{CovariateLaw, ErrorLaw};
use crate::error::{Error, Result};

/// Y = α0·1{X ≤ d0} + β0·1{X > d0} + ξ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StumpModel {
    pub alpha0: f64,
    pub beta0: f64,
    pub d0: f64,
}

impl StumpModel {
    pub fn new(alpha0: f64, beta0: f64, d0: f64) -> Result<Self> {
        if alpha0 == beta0 || !(alpha0.is_finite() && beta0.is_finite() && d0.is_finite()) {
            return Err(Error::invalid(format!(
                "stump model needs finite alpha0 != beta0, got ({alpha0}, {beta0})"
            )));
        }
        Ok(StumpModel { alpha0, beta0, d0 })
    }

    /// The known-levels model Y = 1{X > d0} + ξ.
    pub fn known_levels(d0: f64) -> Self {
        StumpModel {
            alpha0: 0.0,
            beta0: 1.0,
            d0,
        }
    }

    pub fn delta(&self) -> f64 {
        (self.alpha0 - self.beta0).abs()
    }

    #[inline]
    pub fn mean(&self, x: f64) -> f64 {
        if x <= self.d0 {
            self.alpha0
        } else {
            self.beta0
        }
    }

    pub fn sample<R: Rng + ?Sized>(
        &self,
        n: usize,
        covariate: &CovariateLaw,
        noise: &ErrorLaw,
        rng: &mut R,
    ) -> Dataset1D {
        let xi = noise.sampler();
        let mut x = Vec::with_capacity(n);
        let mut y = Vec::with_capacity(n);
        for _ in 0..n {
            let xv = covariate.sample(rng);
            x.push(xv);
            y.push(self.mean(xv) + xi.sample(rng));
        }
        Dataset1D { x, y }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset1D {
    x: Vec<f64>,
    y: Vec<f64>,
}

impl Dataset1D {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: x.len(),
                got: y.len(),
            });
        }
        if x.iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(Error::invalid("dataset entries must be finite"));
        }
        Ok(Dataset1D { x, y })
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// (x, y) sorted by x.
    fn sorted(&self) -> (Vec<f64>, Vec<f64>) {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.sort_by(|&a, &b| self.x[a].total_cmp(&self.x[b]));
        (
            idx.iter().map(|&i| self.x[i]).collect(),
            idx.iter().map(|&i| self.y[i]).collect(),
        )
    }
}

/// Which point of the minimizing interval is reported as d̂.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArgminConvention {
    #[default]
    Mid,
    Smallest,
}

impl FromStr for ArgminConvention {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "mid" => Ok(ArgminConvention::Mid),
            "smallest" => Ok(ArgminConvention::Smallest),
            other => Err(Error::Unknown {
                kind: "argmin convention",
                name: other.to_string(),
            }),
        }
    }
}

impl fmt::Display for ArgminConvention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ArgminConvention::Mid => "mid",
            ArgminConvention::Smallest => "smallest",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StumpFit {
    pub alpha_hat: f64,
    pub beta_hat: f64,
    pub d_interval: (f64, f64),
    pub d_hat: f64,
    pub criterion_value: f64,
    /// The minimizing interval was clipped by the search window.
    pub boundary_hit: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MidArgmin {
    pub index: usize,
    pub interval: (f64, f64),
    pub mid: f64,
    pub boundary_hit: bool,
}

/// Relative tolerance under which criterion values count as tied.
pub const TIE_RTOL: f64 = 1e-10;

/// Minimizes a piecewise-constant function given by `values[j]` on the j-th
/// interval cut out by `breakpoints`, restricted to `window`. Values within
/// a relative [`TIE_RTOL`] of the minimum tie, and ties go to the interval
/// with the smallest left endpoint.
pub fn mid_argmin(values: &[f64], breakpoints: &[f64], window: (f64, f64)) -> Result<MidArgmin> {
    if values.is_empty() {
        return Err(Error::invalid("mid_argmin needs at least one value"));
    }
    if values.len() != breakpoints.len() + 1 {
        return Err(Error::DimensionMismatch {
            expected: breakpoints.len() + 1,
            got: values.len(),
        });
    }
    if breakpoints.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("breakpoints must be strictly increasing"));
    }
    let (wlo, whi) = window;
    if !(wlo <= whi) {
        return Err(Error::invalid(format!("empty window ({wlo}, {whi})")));
    }
    let k = breakpoints.len();
    let bounds = |j: usize| {
        let left = if j == 0 {
            f64::NEG_INFINITY
        } else {
            breakpoints[j - 1]
        };
        let right = if j == k { f64::INFINITY } else { breakpoints[j] };
        (left, right)
    };
    let eligible = |j: usize| {
        let (left, right) = bounds(j);
        left.max(wlo) <= right.min(whi) && !values[j].is_nan()
    };
    let min = (0..values.len())
        .filter(|&j| eligible(j))
        .map(|j| values[j])
        .min_by(f64::total_cmp)
        .ok_or_else(|| Error::invalid("window misses every interval"))?;
    let cutoff = min + TIE_RTOL * min.abs();
    let j = (0..values.len())
        .find(|&j| eligible(j) && values[j] <= cutoff)
        .expect("the minimum is eligible");
    let (left, right) = bounds(j);
    let (lo, hi) = (left.max(wlo), right.min(whi));
    Ok(MidArgmin {
        index: j,
        interval: (lo, hi),
        mid: 0.5 * (lo + hi),
        boundary_hit: left < wlo || right > whi,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FitOptions {
    /// Search window; defaults to [min X, max X].
    pub window: Option<(f64, f64)>,
    pub convention: ArgminConvention,
}

/// Distinct sorted covariate values and, for each, the end index (exclusive)
/// of its run in the sorted data.
fn groups(xs: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut uniq = Vec::new();
    let mut ends = Vec::new();
    for (i, &x) in xs.iter().enumerate() {
        if uniq.last() == Some(&x) {
            *ends.last_mut().unwrap() = i + 1;
        } else {
            uniq.push(x);
            ends.push(i + 1);
        }
    }
    (uniq, ends)
}

fn report(arg: &MidArgmin, convention: ArgminConvention) -> f64 {
    match convention {
        ArgminConvention::Mid => arg.mid,
        ArgminConvention::Smallest => arg.interval.0,
    }
}

pub fn fit_known_levels(data: &Dataset1D, spec: CriterionSpec) -> Result<StumpFit> {
    fit_known_levels_with(data, spec, FitOptions::default())
}

/// Levels fixed at (0, 1); only d is fitted.
pub fn fit_known_levels_with(data: &Dataset1D, spec: CriterionSpec, options: FitOptions) -> Result<StumpFit> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let (xs, ys) = data.sorted();
    let (uniq, ends) = groups(&xs);
    let mut values = Vec::with_capacity(uniq.len() + 1);
    let mut v: f64 = ys.iter().map(|y| spec.loss(y - 1.0)).sum();
    values.push(v);
    let mut start = 0;
    for &end in &ends {
        v += ys[start..end]
            .iter()
            .map(|y| spec.loss(*y) - spec.loss(y - 1.0))
            .sum::<f64>();
        values.push(v);
        start = end;
    }
    let window = options.window.unwrap_or((uniq[0], *uniq.last().unwrap()));
    let arg = mid_argmin(&values, &uniq, window)?;
    let split = if arg.index == 0 { 0 } else { ends[arg.index - 1] };
    let total: f64 = ys[..split].iter().map(|y| spec.loss(*y)).sum::<f64>()
        + ys[split..].iter().map(|y| spec.loss(y - 1.0)).sum::<f64>();
    Ok(StumpFit {
        alpha_hat: 0.0,
        beta_hat: 1.0,
        d_interval: arg.interval,
        d_hat: report(&arg, options.convention),
        criterion_value: total / data.len() as f64,
        boundary_hit: arg.boundary_hit,
    })
}

/// Known-levels fit on covariates already sorted ascending and distinct,
/// returning d̂ only. Allocation-free scan for Monte Carlo loops; agrees
/// with [`fit_known_levels`] under the default window, except on near-ties
/// within [`TIE_RTOL`].
pub fn known_levels_d_hat_sorted(
    xs: &[f64],
    ys: &[f64],
    spec: CriterionSpec,
    convention: ArgminConvention,
) -> f64 {
    let n = xs.len();
    debug_assert!(n >= 1 && ys.len() == n);
    // value of interval j minus value of interval 0
    let mut v = 0.0;
    let mut best = 0.0;
    let mut best_j = 0;
    for (i, &y) in ys.iter().enumerate() {
        v += spec.loss(y) - spec.loss(y - 1.0);
        if v < best {
            best = v;
            best_j = i + 1;
        }
    }
    let (lo, hi) = if best_j == 0 {
        (xs[0], xs[0])
    } else if best_j == n {
        (xs[n - 1], xs[n - 1])
    } else {
        (xs[best_j - 1], xs[best_j])
    };
    match convention {
        ArgminConvention::Mid => 0.5 * (lo + hi),
        ArgminConvention::Smallest => lo,
    }
}

pub fn fit_stump(data: &Dataset1D, spec: CriterionSpec) -> Result<StumpFit> {
    fit_stump_with(data, spec, FitOptions::default())
}

/// Full fit of (α, β, d) by profiling the levels over every split.
pub fn fit_stump_with(data: &Dataset1D, spec: CriterionSpec, options: FitOptions) -> Result<StumpFit> {
    if data.len() < 2 {
        return Err(Error::NeedTwoPoints);
    }
    let (xs, ys) = data.sorted();
    let (uniq, ends) = groups(&xs);
    if uniq.len() < 2 {
        return Err(Error::NeedTwoPoints);
    }
    let n = ys.len();
    let crit = spec.criterion();
    let pre = crit.prefix_costs(&ys);
    let rev: Vec<f64> = ys.iter().rev().copied().collect();
    let suf = crit.prefix_costs(&rev);
    // values[g+1] = split after group g; the outer intervals leave one side empty
    let mut values = vec![f64::INFINITY; uniq.len() + 1];
    for g in 0..uniq.len() - 1 {
        let e = ends[g];
        values[g + 1] = pre[e - 1] + suf[n - e - 1];
    }
    let window = options.window.unwrap_or((uniq[0], *uniq.last().unwrap()));
    let arg = mid_argmin(&values, &uniq, window)?;
    if !values[arg.index].is_finite() {
        return Err(Error::NeedTwoPoints);
    }
    let split = ends[arg.index - 1];
    let alpha_hat = spec.location(&ys[..split])?;
    let beta_hat = spec.location(&ys[split..])?;
    let total: f64 = ys[..split].iter().map(|y| spec.loss(y - alpha_hat)).sum::<f64>()
        + ys[split..].iter().map(|y| spec.loss(y - beta_hat)).sum::<f64>();
    Ok(StumpFit {
        alpha_hat,
        beta_hat,
        d_interval: arg.interval,
        d_hat: report(&arg, options.convention),
        criterion_value: total / n as f64,
        boundary_hit: arg.boundary_hit,
    })
}

/// (1/n) Σ loss(yᵢ − α·1{xᵢ ≤ d} − β·1{xᵢ > d}).
pub fn criterion_at(data: &Dataset1D, spec: CriterionSpec, alpha: f64, beta: f64, d: f64) -> f64 {
    let total: f64 = data
        .x
        .iter()
        .zip(&data.y)
        .map(|(&x, &y)| spec.loss(y - if x <= d { alpha } else { beta }))
        .sum();
    total / data.len() as f64
}
