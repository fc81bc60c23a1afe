//! The m-parallel change-point experiment: m independent known-levels
//! problems, their maximal deviation, and the ℓ1/ℓ2 rate summary.

use rand::distr::Distribution;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::criterion::CriterionSpec;
use crate::distributions::{CovariateLaw, ErrorLaw, ErrorSampler};
use crate::error::{Error, Result};
use crate::rng::SeedStream;
use crate::stump::ArgminConvention;
use crate::table::{format_sig, median};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParallelConfig {
    pub m: usize,
    pub n: usize,
    pub error_law: ErrorLaw,
    pub covariate: CovariateLaw,
    pub criterion: CriterionSpec,
    pub replications: usize,
    pub seed: u64,
    pub argmin_convention: ArgminConvention,
}

impl ParallelConfig {
    /// Uniform(−1, 1) covariates, mid-argmin.
    pub fn new(m: usize, n: usize, error_law: ErrorLaw, criterion: CriterionSpec) -> Self {
        ParallelConfig {
            m,
            n,
            error_law,
            covariate: CovariateLaw::Uniform { a: -1.0, b: 1.0 },
            criterion,
            replications: 1,
            seed: 0,
            argmin_convention: ArgminConvention::Mid,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m < 1 {
            return Err(Error::invalid("parallel experiment needs m >= 1"));
        }
        if self.n < 2 {
            return Err(Error::invalid("parallel experiment needs n >= 2"));
        }
        if self.replications < 1 {
            return Err(Error::invalid("replications must be >= 1"));
        }
        self.error_law.validate()?;
        self.covariate.validate()?;
        if self.covariate.dim() != 1 {
            return Err(Error::DimensionMismatch {
                expected: 1,
                got: self.covariate.dim(),
            });
        }
        Ok(())
    }
}

/// How the true change points d0,i are chosen for each replicate.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind")]
pub enum D0Policy {
    /// Every d0,i = 0.
    #[default]
    Zero,
    /// d0,i uniform on [lo, hi], drawn per replicate.
    Scattered { lo: f64, hi: f64 },
}

impl D0Policy {
    /// Scatter over the central half of the covariate's bulk.
    pub fn scattered_for(covariate: &CovariateLaw) -> Self {
        match *covariate {
            CovariateLaw::Uniform { a, b } => D0Policy::Scattered {
                lo: a + 0.25 * (b - a),
                hi: b - 0.25 * (b - a),
            },
            _ => D0Policy::Scattered { lo: -0.5, hi: 0.5 },
        }
    }

    pub fn draw(&self, m: usize, stream: SeedStream) -> Vec<f64> {
        match *self {
            D0Policy::Zero => vec![0.0; m],
            D0Policy::Scattered { lo, hi } => {
                let mut rng = stream.substream("d0").rng();
                (0..m).map(|_| lo + (hi - lo) * rng.random::<f64>()).collect()
            }
        }
    }
}

/// Known-levels fits of one simulated problem under several criteria
/// sharing the same data; returns |d̂ − d0| per criterion.
fn problem_deviations<R: Rng + ?Sized>(
    n: usize,
    d0: f64,
    covariate: &CovariateLaw,
    xi: &ErrorSampler,
    criteria: &[CriterionSpec],
    convention: ArgminConvention,
    rng: &mut R,
) -> Vec<f64> {
    let xs = covariate.sample_sorted(n, rng);
    let c = criteria.len();
    let mut v = vec![0.0; c];
    let mut best = vec![0.0; c];
    let mut best_j = vec![0usize; c];
    for (i, &x) in xs.iter().enumerate() {
        let y = if x > d0 { 1.0 } else { 0.0 } + xi.sample(rng);
        for k in 0..c {
            let spec = criteria[k];
            v[k] += spec.loss(y) - spec.loss(y - 1.0);
            if v[k] < best[k] {
                best[k] = v[k];
                best_j[k] = i + 1;
            }
        }
    }
    best_j
        .iter()
        .map(|&j| {
            let (lo, hi) = if j == 0 {
                (xs[0], xs[0])
            } else if j == n {
                (xs[n - 1], xs[n - 1])
            } else {
                (xs[j - 1], xs[j])
            };
            let d_hat = match convention {
                ArgminConvention::Mid => 0.5 * (lo + hi),
                ArgminConvention::Smallest => lo,
            };
            (d_hat - d0).abs()
        })
        .collect()
}

fn check_d0s(config: &ParallelConfig, d0s: &[f64]) -> Result<()> {
    if d0s.len() != config.m {
        return Err(Error::DimensionMismatch {
            expected: config.m,
            got: d0s.len(),
        });
    }
    if let Some(d) = d0s.iter().find(|&&d| !(config.covariate.density_at(d) > 0.0)) {
        return Err(Error::invalid(format!(
            "d0 = {d} is outside the covariate support"
        )));
    }
    Ok(())
}

/// max_i |d̂_i − d0,i| for each criterion, all fitted on the same m
/// datasets. Problem i draws from child stream i of `stream`.
pub fn max_deviations(
    config: &ParallelConfig,
    criteria: &[CriterionSpec],
    d0s: &[f64],
    stream: SeedStream,
) -> Result<Vec<f64>> {
    config.validate()?;
    check_d0s(config, d0s)?;
    let xi = config.error_law.sampler();
    let per_problem: Vec<Vec<f64>> = (0..config.m)
        .into_par_iter()
        .map(|i| {
            problem_deviations(
                config.n,
                d0s[i],
                &config.covariate,
                &xi,
                criteria,
                config.argmin_convention,
                &mut stream.child(i as u64).rng(),
            )
        })
        .collect();
    Ok((0..criteria.len())
        .map(|k| per_problem.iter().map(|d| d[k]).fold(0.0, f64::max))
        .collect())
}

/// max_i |d̂_i − d0,i| under `config.criterion`.
pub fn max_deviation(config: &ParallelConfig, d0s: &[f64], seed: u64) -> Result<f64> {
    Ok(max_deviations(config, &[config.criterion], d0s, SeedStream::new(seed))?[0])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub criterion: CriterionSpec,
    pub m: usize,
    pub n: usize,
    pub gamma: f64,
    /// Replicate median of n·maxdev / log m.
    pub norm_logm_median: f64,
    /// Replicate median of n·maxdev / m^(1/γ).
    pub norm_mgamma_median: f64,
    pub replications: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateTable {
    pub rows: Vec<RateRow>,
}

impl RateTable {
    pub const HEADER: &'static str =
        "criterion,m,n,gamma,norm_logm_median,norm_mgamma_median,replications,seed";

    pub fn to_csv(&self) -> String {
        let mut out = format!("{}\n", Self::HEADER);
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.criterion,
                r.m,
                r.n,
                format_sig(r.gamma, 6),
                format_sig(r.norm_logm_median, 6),
                format_sig(r.norm_mgamma_median, 6),
                r.replications,
                r.seed
            ));
        }
        out
    }

    pub fn find(&self, criterion: CriterionSpec, m: usize) -> Option<&RateRow> {
        self.rows.iter().find(|r| r.criterion == criterion && r.m == m)
    }
}

/// Replicate medians of both normalizations for every config. Configs that
/// differ only in criterion share their simulated data (replicate r of a
/// given (m, n) always uses the same stream).
pub fn rate_summary(configs: &[ParallelConfig], d0s: D0Policy, seed: u64) -> Result<RateTable> {
    let root = SeedStream::new(seed);
    let mut done = vec![false; configs.len()];
    let mut rows: Vec<Option<RateRow>> = vec![None; configs.len()];
    for i in 0..configs.len() {
        if done[i] {
            continue;
        }
        let base = configs[i];
        base.validate()?;
        let group: Vec<usize> = (i..configs.len())
            .filter(|&j| {
                let c = &configs[j];
                !done[j]
                    && c.m == base.m
                    && c.n == base.n
                    && c.error_law == base.error_law
                    && c.covariate == base.covariate
                    && c.argmin_convention == base.argmin_convention
                    && c.replications == base.replications
            })
            .collect();
        let criteria: Vec<CriterionSpec> = group.iter().map(|&j| configs[j].criterion).collect();
        let data_stream = root.substream(&format!(
            "m{}-n{}-{}-{}",
            base.m, base.n, base.error_law, base.covariate
        ));
        let mut per_rep = Vec::with_capacity(base.replications);
        for r in 0..base.replications as u64 {
            let stream = data_stream.child(r);
            let d0 = d0s.draw(base.m, stream);
            per_rep.push(max_deviations(&base, &criteria, &d0, stream)?);
        }
        let gamma = base.error_law.tail_index();
        let (n, m) = (base.n as f64, base.m as f64);
        for (k, &j) in group.iter().enumerate() {
            let logm: Vec<f64> = per_rep.iter().map(|d| n * d[k] / m.ln()).collect();
            let mgamma: Vec<f64> = per_rep.iter().map(|d| n * d[k] / m.powf(1.0 / gamma)).collect();
            rows[j] = Some(RateRow {
                criterion: configs[j].criterion,
                m: base.m,
                n: base.n,
                gamma,
                norm_logm_median: median(&logm),
                norm_mgamma_median: median(&mgamma),
                replications: base.replications,
                seed,
            });
            done[j] = true;
        }
    }
    Ok(RateTable {
        rows: rows
            .into_iter()
            .map(|r| r.expect("every config grouped"))
            .collect(),
    })
}
