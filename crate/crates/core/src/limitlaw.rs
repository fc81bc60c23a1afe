//! Random-walk, compound Binomial and compound Poisson minimizers, quantile
//! tables and tail profiles.

use rand::distr::Distribution;
use rand::Rng;
use rand_distr::{Binomial, Exp1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::criterion::CriterionSpec;
use crate::distributions::{sorted_uniforms, CovariateLaw, ErrorLaw, ErrorSampler};
use crate::error::{Error, Result};
use crate::rng::SeedStream;
use crate::stump::StumpModel;
use crate::table::{empirical_quantile, format_sig};

/// Probability that a side stopped at the barrier would still have found a
/// new minimum.
pub const BARRIER_MISS: f64 = 1e-4;
pub const MAX_BARRIER: f64 = 1e6;
pub const DEFAULT_MIN_STEPS: usize = 50;
pub const STEP_CAP: usize = 10_000_000;
pub const QUANTILE_LEVELS: [f64; 5] = [0.90, 0.95, 0.975, 0.99, 0.995];

/// Increment law of the limiting process for one criterion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepLaw {
    pub criterion: CriterionSpec,
    pub delta: f64,
    pub error_law: ErrorLaw,
}

impl StepLaw {
    pub fn new(criterion: CriterionSpec, delta: f64, error_law: ErrorLaw) -> Result<Self> {
        error_law.validate()?;
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::invalid(format!("step law needs delta > 0, got {delta}")));
        }
        if criterion == CriterionSpec::SquaredError && error_law.tail_index() <= 1.0 {
            return Err(Error::NonpositiveDrift(format!(
                "squared-error steps need E|xi| < inf; {} has none",
                error_law.name()
            )));
        }
        let step = StepLaw {
            criterion,
            delta,
            error_law,
        };
        let drift = step.drift();
        if !(drift > 0.0) {
            return Err(Error::NonpositiveDrift(format!("drift {drift}")));
        }
        Ok(step)
    }

    /// The increment generated by one error draw.
    #[inline]
    pub fn step_from_xi(&self, xi: f64) -> f64 {
        step_value(self.criterion, self.delta, xi)
    }

    pub fn sampler(&self) -> StepSampler {
        StepSampler {
            criterion: self.criterion,
            delta: self.delta,
            xi: self.error_law.sampler(),
        }
    }

    /// Largest possible |step|, when bounded.
    pub fn bound(&self) -> Option<f64> {
        match self.criterion {
            CriterionSpec::AbsoluteDeviation => Some(self.delta),
            CriterionSpec::Huber(k) => Some((k + 1.0) * self.delta),
            CriterionSpec::SquaredError => None,
        }
    }

    /// Mean step, by quadrature.
    pub fn drift(&self) -> f64 {
        let law = &self.error_law;
        let delta = self.delta;
        match self.criterion {
            CriterionSpec::SquaredError => 0.5 * delta,
            // E|ξ+Δ| − E|ξ| = ∫₀^Δ P(|ξ| ≤ u) du
            CriterionSpec::AbsoluteDeviation => midpoint_rule(0.0, delta, 4000, |u| 1.0 - law.survival(u)),
            // steps are ±(k+1)Δ outside [−k−Δ, k]; those tails cancel up to
            // the mass of (k, k+Δ]
            CriterionSpec::Huber(k) => {
                let spec = self.criterion;
                let core = midpoint_rule(-k - delta, k, 20_000, |x| {
                    (spec.loss(x + delta) - spec.loss(x)) * law.density_at(x)
                });
                core + 0.5 * (k + 1.0) * delta * (law.survival(k) - law.survival(k + delta))
            }
        }
    }
}

#[inline]
fn step_value(criterion: CriterionSpec, delta: f64, xi: f64) -> f64 {
    match criterion {
        CriterionSpec::SquaredError => xi + 0.5 * delta,
        // |ξ+Δ| − |ξ| by branches, so the atoms at ±Δ are exact
        CriterionSpec::AbsoluteDeviation => {
            if xi >= 0.0 {
                delta
            } else if xi <= -delta {
                -delta
            } else {
                2.0 * xi + delta
            }
        }
        CriterionSpec::Huber(_) => criterion.loss(xi + delta) - criterion.loss(xi),
    }
}

fn midpoint_rule(a: f64, b: f64, n: usize, f: impl Fn(f64) -> f64) -> f64 {
    let h = (b - a) / n as f64;
    (0..n).map(|i| f(a + (i as f64 + 0.5) * h)).sum::<f64>() * h
}

#[derive(Debug, Clone, Copy)]
pub struct StepSampler {
    criterion: CriterionSpec,
    delta: f64,
    xi: ErrorSampler,
}

impl Distribution<f64> for StepSampler {
    #[inline]
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        step_value(self.criterion, self.delta, self.xi.sample(rng))
    }
}

/// Barrier B such that, once a side has climbed B above its running
/// minimum, a later new minimum has probability below [`BARRIER_MISS`].
///
/// Bounded steps use the Hoeffding–Lundberg bound exp(−8μB/r²) with r the
/// step range. Unbounded (squared-error) steps take the larger of the
/// Gaussian Lundberg barrier and the integrated-tail (single big jump)
/// estimate (1/μ)∫_B^∞ P(step < −u) du. Capped at [`MAX_BARRIER`].
pub fn default_barrier(step: &StepLaw) -> f64 {
    let mu = step.drift();
    let log_miss = (1.0 / BARRIER_MISS).ln();
    let b = match step.bound() {
        Some(bound) => log_miss * bound * bound / (2.0 * mu),
        None => {
            let law = step.error_law;
            let var = law.variance();
            let gauss = if var.is_finite() {
                log_miss * var / (2.0 * mu)
            } else {
                0.0
            };
            let tail = if law.tail_index().is_finite() {
                integrated_tail_barrier(&law, step.delta, mu)
            } else {
                0.0
            };
            gauss.max(tail)
        }
    };
    b.clamp(1.0, MAX_BARRIER)
}

fn integrated_tail_barrier(law: &ErrorLaw, delta: f64, mu: f64) -> f64 {
    // ∫_B^∞ ½ S(u + Δ/2) du in log coordinates
    let tail = |b: f64| -> f64 {
        let (lo, hi) = (b.ln(), b.ln() + 80.0);
        midpoint_rule(lo, hi, 8000, |s| {
            let u = s.exp();
            0.5 * law.survival(u + 0.5 * delta) * u
        }) / mu
    };
    let (mut lo, mut hi) = (1e-2f64, MAX_BARRIER);
    if tail(hi) > BARRIER_MISS {
        return MAX_BARRIER;
    }
    if tail(lo) <= BARRIER_MISS {
        return lo;
    }
    for _ in 0..60 {
        let mid = (lo * hi).sqrt();
        if tail(mid) > BARRIER_MISS {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CppConfig {
    pub step: StepLaw,
    pub intensity: f64,
    pub stop_barrier: f64,
    pub min_steps: usize,
}

impl CppConfig {
    /// Default barrier and minimum step count.
    pub fn new(step: StepLaw, intensity: f64) -> Result<Self> {
        let config = CppConfig {
            step,
            intensity,
            stop_barrier: default_barrier(&step),
            min_steps: DEFAULT_MIN_STEPS,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.intensity > 0.0 && self.intensity.is_finite()) {
            return Err(Error::invalid(format!(
                "intensity must be > 0, got {}",
                self.intensity
            )));
        }
        if !(self.stop_barrier > 0.0) {
            return Err(Error::invalid("stop barrier must be > 0"));
        }
        if self.min_steps < 1 {
            return Err(Error::invalid("min_steps must be >= 1"));
        }
        Ok(())
    }
}

/// Lowest point of one side of the process and the flat piece after it.
#[derive(Debug, Clone, Copy)]
struct SideMin {
    value: f64,
    start: f64,
    end: f64,
    first_arrival: f64,
}

fn run_side<R: Rng + ?Sized>(sampler: &StepSampler, config: &CppConfig, rng: &mut R) -> Result<SideMin> {
    let rate = config.intensity;
    let (mut t, mut s) = (0.0, 0.0);
    let mut side = SideMin {
        value: 0.0,
        start: 0.0,
        end: f64::NAN,
        first_arrival: f64::NAN,
    };
    let mut pending = true;
    let mut steps = 0usize;
    loop {
        let e: f64 = rng.sample(Exp1);
        t += e / rate;
        if steps == 0 {
            side.first_arrival = t;
        }
        if pending {
            side.end = t;
            pending = false;
        }
        s += sampler.sample(rng);
        steps += 1;
        if s < side.value {
            side.value = s;
            side.start = t;
            pending = true;
        }
        if steps >= config.min_steps && s - side.value > config.stop_barrier {
            return Ok(side);
        }
        if steps >= STEP_CAP {
            return Err(Error::NonpositiveDrift(format!(
                "side did not clear barrier {} within {STEP_CAP} steps",
                config.stop_barrier
            )));
        }
    }
}

fn cpp_draw<R: Rng + ?Sized>(sampler: &StepSampler, config: &CppConfig, rng: &mut R) -> Result<f64> {
    let right = run_side(sampler, config, rng)?;
    let left = run_side(sampler, config, rng)?;
    let take_right = if right.value < left.value {
        true
    } else if left.value < right.value {
        false
    } else if right.value == 0.0 {
        // both minima at the origin: the piece straddles 0
        return Ok(0.5 * (right.first_arrival - left.first_arrival));
    } else {
        right.start <= left.start
    };
    Ok(if take_right {
        0.5 * (right.start + right.end)
    } else {
        -0.5 * (left.start + left.end)
    })
}

/// One draw of the two-sided compound Poisson mid-argmin.
pub fn simulate_cpp_midargmin(config: &CppConfig, seed: u64) -> Result<f64> {
    config.validate()?;
    let mut rng = SeedStream::new(seed).rng();
    cpp_draw(&config.step.sampler(), config, &mut rng)
}

/// `replications` independent draws; draw r uses child stream r of `stream`.
pub fn cpp_samples(config: &CppConfig, replications: usize, stream: SeedStream) -> Result<Vec<f64>> {
    config.validate()?;
    let sampler = config.step.sampler();
    (0..replications as u64)
        .into_par_iter()
        .map(|r| cpp_draw(&sampler, config, &mut stream.child(r).rng()))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RwMinimizer {
    pub argmin_index: usize,
    pub min_value: f64,
}

fn rw_draw<R: Rng + ?Sized>(sampler: &StepSampler, n_steps: usize, rng: &mut R) -> RwMinimizer {
    let mut best = RwMinimizer {
        argmin_index: 0,
        min_value: 0.0,
    };
    let mut s = 0.0;
    for j in 1..=n_steps {
        s += sampler.sample(rng);
        if s < best.min_value {
            best = RwMinimizer {
                argmin_index: j,
                min_value: s,
            };
        }
    }
    best
}

/// Minimum of S_0 = 0, S_j = Σ steps over j ≤ n_steps (first minimum on ties).
pub fn simulate_rw_minimizer(step: &StepLaw, n_steps: usize, seed: u64) -> Result<RwMinimizer> {
    if n_steps < 1 {
        return Err(Error::invalid("n_steps must be >= 1"));
    }
    Ok(rw_draw(
        &step.sampler(),
        n_steps,
        &mut SeedStream::new(seed).rng(),
    ))
}

pub fn rw_minimizer_samples(
    step: &StepLaw,
    n_steps: usize,
    replications: usize,
    stream: SeedStream,
) -> Result<Vec<RwMinimizer>> {
    if n_steps < 1 {
        return Err(Error::invalid("n_steps must be >= 1"));
    }
    let sampler = step.sampler();
    Ok((0..replications as u64)
        .into_par_iter()
        .map(|r| rw_draw(&sampler, n_steps, &mut stream.child(r).rng()))
        .collect())
}

/// P(max_{1≤i≤n} S_i < 0) and P(S_n < 0) for a walk with two-point steps
/// (`up` w.p. `p_up`, `down` otherwise), by enumerating all 2ⁿ paths.
pub fn walk_event_probabilities(up: f64, down: f64, p_up: f64, n: usize) -> (f64, f64) {
    assert!((1..=24).contains(&n), "path enumeration supports 1 <= n <= 24");
    let (mut p_max, mut p_end) = (0.0, 0.0);
    for path in 0u32..(1u32 << n) {
        let mut s = 0.0;
        let mut max = f64::NEG_INFINITY;
        let mut weight = 1.0;
        for i in 0..n {
            if path >> i & 1 == 1 {
                s += up;
                weight *= p_up;
            } else {
                s += down;
                weight *= 1.0 - p_up;
            }
            max = max.max(s);
        }
        if max < 0.0 {
            p_max += weight;
        }
        if s < 0.0 {
            p_end += weight;
        }
    }
    (p_max, p_end)
}

fn cbp_draw<R: Rng + ?Sized>(
    model: &StumpModel,
    n: usize,
    covariate: &CovariateLaw,
    sampler: &StepSampler,
    rng: &mut R,
) -> Result<f64> {
    let f0 = covariate.cdf(model.d0);
    let n_right = Binomial::new(n as u64, 1.0 - f0)
        .map_err(|e| Error::invalid(format!("binomial: {e}")))?
        .sample(rng) as usize;
    let n_left = n - n_right;
    // ascending to the right of d0, descending to the left
    let right: Vec<f64> = sorted_uniforms(n_right, rng)
        .into_iter()
        .map(|u| covariate.inverse_cdf(f0 + (1.0 - f0) * u))
        .collect();
    let left: Vec<f64> = sorted_uniforms(n_left, rng)
        .into_iter()
        .map(|u| covariate.inverse_cdf(f0 - f0 * u))
        .collect();

    // smallest-left tie rule: scan pieces from the far left
    let mut left_sums = Vec::with_capacity(n_left);
    let mut s = 0.0;
    for _ in 0..n_left {
        s += sampler.sample(rng);
        left_sums.push(s);
    }
    let mut best_value = f64::INFINITY;
    let mut best = (f64::NAN, f64::NAN);
    for j in (0..n_left).rev() {
        if left_sums[j] < best_value {
            best_value = left_sums[j];
            let lo = if j + 1 < n_left { left[j + 1] } else { left[j] };
            best = (lo, left[j]);
        }
    }
    let (zero_lo, zero_hi) = match (left.first(), right.first()) {
        (Some(&l), Some(&r)) => (l, r),
        (Some(&l), None) => (l, l),
        (None, Some(&r)) => (r, r),
        (None, None) => return Err(Error::EmptyDataset),
    };
    if 0.0 < best_value {
        best_value = 0.0;
        best = (zero_lo, zero_hi);
    }
    let mut s = 0.0;
    for j in 0..n_right {
        s += sampler.sample(rng);
        if s < best_value {
            best_value = s;
            let hi = if j + 1 < n_right { right[j + 1] } else { right[j] };
            best = (right[j], hi);
        }
    }
    Ok(n as f64 * (0.5 * (best.0 + best.1) - model.d0))
}

fn check_cbp(model: &StumpModel, n: usize, covariate: &CovariateLaw, step: &StepLaw) -> Result<()> {
    if n < 1 {
        return Err(Error::EmptyDataset);
    }
    covariate.validate()?;
    if (model.delta() - step.delta).abs() > 1e-12 * step.delta.max(1.0) {
        return Err(Error::invalid(format!(
            "step delta {} does not match model |alpha0 - beta0| = {}",
            step.delta,
            model.delta()
        )));
    }
    if covariate.density_at(model.d0) <= 0.0 {
        return Err(Error::invalid("covariate density vanishes at d0"));
    }
    Ok(())
}

/// One draw of n(d̂ − d0) for the known-levels fit, generated as a compound
/// Binomial process: Binomial counts of covariates on each side of d0 and a
/// two-sided walk over their order statistics. Uses the default window
/// [min X, max X] and the smallest-left tie rule of the direct fit.
pub fn simulate_cbp_midargmin(
    model: &StumpModel,
    n: usize,
    covariate: &CovariateLaw,
    step: &StepLaw,
    seed: u64,
) -> Result<f64> {
    check_cbp(model, n, covariate, step)?;
    cbp_draw(
        model,
        n,
        covariate,
        &step.sampler(),
        &mut SeedStream::new(seed).rng(),
    )
}

pub fn cbp_samples(
    model: &StumpModel,
    n: usize,
    covariate: &CovariateLaw,
    step: &StepLaw,
    replications: usize,
    stream: SeedStream,
) -> Result<Vec<f64>> {
    check_cbp(model, n, covariate, step)?;
    let sampler = step.sampler();
    (0..replications as u64)
        .into_par_iter()
        .map(|r| cbp_draw(model, n, covariate, &sampler, &mut stream.child(r).rng()))
        .collect()
}

/// Upper quantiles of the CPP mid-argmin at [`QUANTILE_LEVELS`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileTable {
    pub mu: f64,
    pub criterion: CriterionSpec,
    pub rows: Vec<(String, [f64; 5])>,
    pub replications: usize,
    pub seed: u64,
}

impl QuantileTable {
    pub fn row(&self, law: &str) -> Option<&[f64; 5]> {
        self.rows.iter().find(|(name, _)| name == law).map(|(_, q)| q)
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!(
            "# mu={} criterion={} replications={} seed={}\n",
            format_sig(self.mu, 6),
            self.criterion,
            self.replications,
            self.seed
        );
        out.push_str(&self.csv_body());
        out
    }

    /// Header plus rows, without the metadata line.
    pub fn csv_body(&self) -> String {
        let mut out = String::from("law,q90,q95,q975,q99,q995\n");
        for (law, q) in &self.rows {
            out.push_str(law);
            for v in q {
                out.push(',');
                out.push_str(&format_sig(*v, 6));
            }
            out.push('\n');
        }
        out
    }
}

/// Intensity of the limit process in the tables: standard-normal X at d0 = 0.
pub fn table_intensity() -> f64 {
    1.0 / (2.0 * std::f64::consts::PI).sqrt()
}

/// Signed CPP mid-argmin draws for one table row; the stream depends only
/// on (seed, law name), so rows do not depend on which other laws are run.
pub fn table_samples(
    mu: f64,
    criterion: CriterionSpec,
    law: &ErrorLaw,
    replications: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let step = StepLaw::new(criterion, mu, *law)?;
    let config = CppConfig::new(step, table_intensity())?;
    cpp_samples(
        &config,
        replications,
        SeedStream::new(seed).substream(&law.name()),
    )
}

pub fn quantile_table(
    mu: f64,
    criterion: CriterionSpec,
    laws: &[ErrorLaw],
    replications: usize,
    seed: u64,
) -> Result<QuantileTable> {
    if replications < 10_000 {
        return Err(Error::invalid(format!(
            "quantile tables need at least 10000 replications, got {replications}"
        )));
    }
    let mut rows = Vec::with_capacity(laws.len());
    for law in laws {
        let mut samples = table_samples(mu, criterion, law, replications, seed)?;
        samples.sort_by(f64::total_cmp);
        let q = QUANTILE_LEVELS.map(|p| empirical_quantile(&samples, p));
        rows.push((law.name(), q));
    }
    Ok(QuantileTable {
        mu,
        criterion,
        rows,
        replications,
        seed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailPoint {
    pub x: f64,
    /// Empirical P(|sample| > x).
    pub survival: f64,
    /// Half-width of the 95% Wilson interval.
    pub half_width: f64,
    pub exceedances: usize,
}

pub fn tail_profile(samples: &[f64], grid: &[f64]) -> Result<Vec<TailPoint>> {
    if grid.iter().any(|g| !(*g > 0.0)) || grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("tail grid must be positive and increasing"));
    }
    if samples.is_empty() {
        return Err(Error::invalid("tail profile of an empty sample"));
    }
    let mut abs: Vec<f64> = samples.iter().map(|s| s.abs()).collect();
    abs.sort_by(f64::total_cmp);
    let n = abs.len();
    let z = 1.959_963_984_540_054;
    Ok(grid
        .iter()
        .map(|&x| {
            let below = abs.partition_point(|&a| a <= x);
            let c = n - below;
            let nf = n as f64;
            let p = c as f64 / nf;
            let denom = 1.0 + z * z / nf;
            let half = z * (p * (1.0 - p) / nf + z * z / (4.0 * nf * nf)).sqrt() / denom;
            TailPoint {
                x,
                survival: p,
                half_width: half,
                exceedances: c,
            }
        })
        .collect())
}

/// Least-squares slope of log survival against log x over the points with
/// at least one exceedance.
pub fn loglog_slope(points: &[TailPoint]) -> Result<f64> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| p.exceedances > 0)
        .map(|p| (p.x.ln(), p.survival.ln()))
        .collect();
    if pts.len() < 2 {
        return Err(Error::invalid("slope needs two points with positive survival"));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Ok(sxy / sxx)
}

/// `points` log-spaced values over [top/10, top], where `top` is the
/// |sample| value exceeded by `top_exceedances` draws.
pub fn upper_decade_grid(samples: &[f64], top_exceedances: usize, points: usize) -> Result<Vec<f64>> {
    if samples.len() <= top_exceedances || points < 2 {
        return Err(Error::invalid("not enough samples for an upper decade"));
    }
    let mut abs: Vec<f64> = samples.iter().map(|s| s.abs()).collect();
    abs.sort_by(f64::total_cmp);
    let top = abs[abs.len() - top_exceedances - 1];
    if !(top > 0.0) {
        return Err(Error::invalid("upper decade collapses at 0"));
    }
    Ok((0..points)
        .map(|i| top * 10f64.powf(i as f64 / (points - 1) as f64 - 1.0))
        .collect())
}
