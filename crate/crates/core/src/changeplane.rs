//! Change planes through the origin in p dimensions: profiled fits by exact
//! enumeration or restarted local search, the wedge semi-metric, the
//! two-shot refit and VC-penalized sparse model selection.

use std::f64::consts::{E, PI};
use std::fmt;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::criterion::CriterionSpec;
use crate::distributions::{CovariateLaw, ErrorLaw};
use crate::error::{Error, Result};
use crate::registry::{parse_arg, Registry};
use crate::rng::SeedStream;
use crate::table::median;

/// Candidate cap for exact enumeration before falling back to restarts.
pub const EXACT_CAP: usize = 2_000_000;
pub const DEFAULT_RESTARTS: usize = 50;
const MAX_ROUNDS: usize = 200;

/// Row-major n×p covariates with responses.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    n: usize,
    p: usize,
    x: Vec<f64>,
    y: Vec<f64>,
}

impl Design {
    pub fn new(rows: Vec<Vec<f64>>, y: Vec<f64>) -> Result<Self> {
        let p = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != p) {
            return Err(Error::DimensionMismatch {
                expected: p,
                got: bad.len(),
            });
        }
        Self::from_flat(p, rows.concat(), y)
    }

    pub fn from_flat(p: usize, x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if y.is_empty() || p == 0 {
            return Err(Error::EmptyDataset);
        }
        if x.len() != y.len() * p {
            return Err(Error::DimensionMismatch {
                expected: y.len() * p,
                got: x.len(),
            });
        }
        if x.iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(Error::invalid("design contains non-finite values"));
        }
        Ok(Design { n: y.len(), p, x, y })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.p..(i + 1) * self.p]
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    /// The design restricted to the given columns, in that order.
    pub fn columns(&self, cols: &[usize]) -> Design {
        let x = (0..self.n)
            .flat_map(|i| cols.iter().map(move |&j| self.x[i * self.p + j]))
            .collect();
        Design {
            n: self.n,
            p: cols.len(),
            x,
            y: self.y.clone(),
        }
    }

    /// Covariates multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Design {
        Design {
            x: self.x.iter().map(|v| v * c).collect(),
            ..self.clone()
        }
    }

    fn dot(&self, i: usize, d: &[f64], idx: Option<&[usize]>) -> f64 {
        let row = self.row(i);
        match idx {
            Some(idx) => idx.iter().map(|&j| row[j] * d[j]).sum(),
            None => row.iter().zip(d).map(|(a, b)| a * b).sum(),
        }
    }
}

/// Y = α0·1{Xᵀd0 ≤ 0} + β0·1{Xᵀd0 > 0} + ξ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaneModel {
    pub alpha0: f64,
    pub beta0: f64,
    pub d0: Vec<f64>,
    pub s: usize,
}

impl PlaneModel {
    /// Normalizes `d0`; `s` is its number of nonzero coordinates.
    pub fn new(alpha0: f64, beta0: f64, d0: Vec<f64>) -> Result<Self> {
        if alpha0 == beta0 || !alpha0.is_finite() || !beta0.is_finite() {
            return Err(Error::invalid("plane model needs finite alpha0 != beta0"));
        }
        let d0 = unit(d0).ok_or_else(|| Error::invalid("d0 must be a nonzero finite vector"))?;
        let s = d0.iter().filter(|v| **v != 0.0).count();
        Ok(PlaneModel { alpha0, beta0, d0, s })
    }

    /// d0 with `s` random coordinates of equal magnitude and random signs.
    pub fn random_sparse<R: Rng + ?Sized>(
        alpha0: f64,
        beta0: f64,
        p: usize,
        s: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if s == 0 || s > p {
            return Err(Error::invalid(format!("need 1 <= s <= p, got s = {s}, p = {p}")));
        }
        let support = rand::seq::index::sample(rng, p, s);
        let mut d0 = vec![0.0; p];
        for j in support.iter() {
            d0[j] = if rng.random::<bool>() { 1.0 } else { -1.0 };
        }
        Self::new(alpha0, beta0, d0)
    }

    /// A uniformly random direction on the sphere.
    pub fn random_dense<R: Rng + ?Sized>(alpha0: f64, beta0: f64, p: usize, rng: &mut R) -> Result<Self> {
        Self::new(alpha0, beta0, random_unit(p, None, rng))
    }

    pub fn p(&self) -> usize {
        self.d0.len()
    }

    pub fn support(&self) -> Vec<usize> {
        support_of(&self.d0)
    }

    pub fn mean(&self, x: &[f64]) -> f64 {
        let s: f64 = x.iter().zip(&self.d0).map(|(a, b)| a * b).sum();
        if s <= 0.0 {
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
    ) -> Result<Design> {
        let p = self.p();
        let xi = noise.sampler();
        let mut x = Vec::with_capacity(n * p);
        let mut y = Vec::with_capacity(n);
        for _ in 0..n {
            let row = covariate.sample_vector(p, rng)?;
            y.push(self.mean(&row) + rng.sample(xi));
            x.extend(row);
        }
        Design::from_flat(p, x, y)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaneFit {
    pub alpha_hat: f64,
    pub beta_hat: f64,
    pub d_hat: Vec<f64>,
    /// Chosen model size; `None` outside the sparse regime.
    pub selected_m: Option<usize>,
    pub criterion_value: f64,
    pub support: Vec<usize>,
}

fn unit(mut v: Vec<f64>) -> Option<Vec<f64>> {
    let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    if !(norm > 0.0 && norm.is_finite()) {
        return None;
    }
    v.iter_mut().for_each(|a| *a /= norm);
    Some(v)
}

fn support_of(d: &[f64]) -> Vec<usize> {
    (0..d.len()).filter(|&j| d[j] != 0.0).collect()
}

fn random_unit<R: Rng + ?Sized>(p: usize, coords: Option<&[usize]>, rng: &mut R) -> Vec<f64> {
    loop {
        let mut v = vec![0.0; p];
        match coords {
            Some(c) => c.iter().for_each(|&j| v[j] = rng.sample(StandardNormal)),
            None => v.iter_mut().for_each(|a| *a = rng.sample(StandardNormal)),
        }
        if let Some(u) = unit(v) {
            return u;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Profile {
    alpha: f64,
    beta: f64,
    value: f64,
}

#[derive(Default)]
struct Scratch {
    left: Vec<f64>,
    right: Vec<f64>,
    gains: Vec<f64>,
    on_left: Vec<bool>,
    events: Vec<(f64, usize)>,
}

/// Side M-estimates and criterion for the plane normal to `d`; `None`
/// when a side is empty.
fn profile(
    design: &Design,
    d: &[f64],
    idx: Option<&[usize]>,
    spec: CriterionSpec,
    s: &mut Scratch,
) -> Option<Profile> {
    s.left.clear();
    s.right.clear();
    for i in 0..design.n {
        if design.dot(i, d, idx) <= 0.0 {
            s.left.push(design.y[i]);
        } else {
            s.right.push(design.y[i]);
        }
    }
    let alpha = spec.location(&s.left).ok()?;
    let beta = spec.location(&s.right).ok()?;
    let value = s.left.iter().map(|v| spec.loss(v - alpha)).sum::<f64>()
        + s.right.iter().map(|v| spec.loss(v - beta)).sum::<f64>();
    Some(Profile { alpha, beta, value })
}

/// A strategy for minimizing the profiled criterion over directions.
pub trait PlaneSearch: Send + Sync + fmt::Debug {
    fn name(&self) -> String;

    /// A minimizing direction (any sign) and its profiled criterion value.
    fn search(&self, design: &Design, spec: CriterionSpec, stream: SeedStream) -> Result<(Vec<f64>, f64)>;
}

/// Every cell of the hyperplane arrangement {d : xᵢᵀd = 0}, reached
/// through the normals of (p−1)-subsets of points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExactEnumeration {
    pub cap: usize,
}

impl Default for ExactEnumeration {
    fn default() -> Self {
        ExactEnumeration { cap: EXACT_CAP }
    }
}

/// Great-circle local search from random unit starts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomRestarts {
    pub count: usize,
}

pub fn search_registry() -> Registry<dyn PlaneSearch> {
    Registry::<dyn PlaneSearch>::new("plane search")
        .with("exact", "exact enumeration (optional candidate cap)", |arg| {
            let cap = match arg {
                Some(_) => parse_arg("exact", arg)?,
                None => EXACT_CAP,
            };
            Ok(Box::new(ExactEnumeration { cap }) as Box<dyn PlaneSearch>)
        })
        .with("restarts", "random-restart local search, restarts:N", |arg| {
            let count = match arg {
                Some(_) => parse_arg("restarts", arg)?,
                None => DEFAULT_RESTARTS,
            };
            if count == 0 {
                return Err(Error::invalid("restarts needs a positive count"));
            }
            Ok(Box::new(RandomRestarts { count }) as Box<dyn PlaneSearch>)
        })
}

pub fn parse_search(spec: &str) -> Result<Box<dyn PlaneSearch>> {
    search_registry().build(spec)
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// The k-subsets of 0..n in lexicographic order, flattened.
fn combinations(n: usize, k: usize) -> Vec<usize> {
    let mut out = Vec::new();
    if k > n {
        return out;
    }
    let mut c: Vec<usize> = (0..k).collect();
    loop {
        out.extend_from_slice(&c);
        let Some(i) = (0..k).rev().find(|&i| c[i] != i + n - k) else {
            return out;
        };
        c[i] += 1;
        for j in i + 1..k {
            c[j] = c[j - 1] + 1;
        }
    }
}

impl ExactEnumeration {
    pub fn candidates(n: usize, p: usize) -> f64 {
        binomial(n, p - 1) * 2f64.powi(p as i32 - 1)
    }

    /// Normal of the subset's span plus, per sign assignment, the direction
    /// that puts the subset's points on the assigned sides.
    fn subset_directions(design: &Design, subset: &[usize]) -> Option<Vec<Vec<f64>>> {
        let p = design.p;
        let k = subset.len();
        let mut q: Vec<Vec<f64>> = Vec::with_capacity(k);
        let mut l = vec![vec![0.0; k]; k];
        for (r, &i) in subset.iter().enumerate() {
            let x = design.row(i);
            let mut v = x.to_vec();
            for (c, qc) in q.iter().enumerate() {
                let proj: f64 = v.iter().zip(qc).map(|(a, b)| a * b).sum();
                l[r][c] = proj;
                v.iter_mut().zip(qc).for_each(|(a, b)| *a -= proj * b);
            }
            let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            let scale = x.iter().map(|a| a * a).sum::<f64>().sqrt();
            if !(norm > 1e-10 * scale) {
                return None;
            }
            l[r][r] = norm;
            q.push(v.into_iter().map(|a| a / norm).collect());
        }
        let orth = |mut v: Vec<f64>| {
            for _ in 0..2 {
                for qc in &q {
                    let proj: f64 = v.iter().zip(qc).map(|(a, b)| a * b).sum();
                    v.iter_mut().zip(qc).for_each(|(a, b)| *a -= proj * b);
                }
            }
            v
        };
        let w = (0..p)
            .map(|j| {
                let mut e = vec![0.0; p];
                e[j] = 1.0;
                orth(e)
            })
            .max_by(|a, b| {
                let na: f64 = a.iter().map(|v| v * v).sum();
                let nb: f64 = b.iter().map(|v| v * v).sum();
                na.total_cmp(&nb)
            })
            .and_then(unit)?;
        let off: Vec<(f64, usize)> = (0..design.n)
            .filter(|i| !subset.contains(i))
            .map(|i| (design.dot(i, &w, None), i))
            .collect();
        let mut dirs = Vec::with_capacity(1 << k);
        for mask in 0..1usize << k {
            let signs: Vec<f64> = (0..k)
                .map(|r| if mask >> r & 1 == 1 { 1.0 } else { -1.0 })
                .collect();
            let mut t = vec![0.0; k];
            for r in 0..k {
                let acc: f64 = (0..r).map(|c| l[r][c] * t[c]).sum();
                t[r] = (signs[r] - acc) / l[r][r];
            }
            let mut v = vec![0.0; p];
            for (c, qc) in q.iter().enumerate() {
                v.iter_mut().zip(qc).for_each(|(a, b)| *a += t[c] * b);
            }
            let mut eps: f64 = 1.0;
            for &(a, i) in &off {
                let b = design.dot(i, &v, None);
                if a != 0.0 && b != 0.0 {
                    eps = eps.min(0.5 * a.abs() / b.abs());
                }
            }
            let d: Vec<f64> = w.iter().zip(&v).map(|(a, b)| a + eps * b).collect();
            dirs.push(unit(d)?);
        }
        Some(dirs)
    }
}

impl PlaneSearch for ExactEnumeration {
    fn name(&self) -> String {
        "exact".to_string()
    }

    fn search(&self, design: &Design, spec: CriterionSpec, stream: SeedStream) -> Result<(Vec<f64>, f64)> {
        let (n, p) = (design.n, design.p);
        if p < 2 {
            return Err(Error::invalid("plane search needs p >= 2"));
        }
        if n <= p {
            return Err(Error::invalid(format!(
                "exact enumeration needs n > p (n = {n}, p = {p})"
            )));
        }
        if Self::candidates(n, p) > self.cap as f64 {
            return RandomRestarts {
                count: DEFAULT_RESTARTS,
            }
            .search(design, spec, stream);
        }
        let k = p - 1;
        let subsets = combinations(n, k);
        let best = subsets
            .par_chunks(k)
            .enumerate()
            .map_init(Scratch::default, |scratch, (si, subset)| {
                let dirs = Self::subset_directions(design, subset)?;
                let mut best: Option<(f64, usize, Vec<f64>)> = None;
                for (mask, d) in dirs.into_iter().enumerate() {
                    if let Some(pr) = profile(design, &d, None, spec, scratch) {
                        if best.as_ref().is_none_or(|b| pr.value < b.0) {
                            best = Some((pr.value, (si << k) | mask, d));
                        }
                    }
                }
                best
            })
            .flatten()
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        best.map(|(v, _, d)| (d, v)).ok_or(Error::DegenerateDesign)
    }
}

/// Best point on the great circle cos θ·d + sin θ·u, θ ∈ (0, 2π), with
/// the side levels held fixed. Returns the new direction when it strictly
/// improves the fixed-level cost.
fn sweep(
    design: &Design,
    spec: CriterionSpec,
    d: &[f64],
    u: &[f64],
    idx: Option<&[usize]>,
    levels: (f64, f64),
    s: &mut Scratch,
) -> Option<Vec<f64>> {
    let (alpha, beta) = levels;
    let tau = 2.0 * PI;
    s.gains.clear();
    s.on_left.clear();
    s.events.clear();
    let mut cost = 0.0;
    for i in 0..design.n {
        let a = design.dot(i, d, idx);
        let b = design.dot(i, u, idx);
        let y = design.y[i];
        let left = if a != 0.0 { a < 0.0 } else { b <= 0.0 };
        cost += if left {
            spec.loss(y - alpha)
        } else {
            spec.loss(y - beta)
        };
        s.gains.push(spec.loss(y - beta) - spec.loss(y - alpha));
        s.on_left.push(left);
        if a == 0.0 && b == 0.0 {
            continue;
        }
        let t0 = (b.atan2(a) + 0.5 * PI).rem_euclid(tau);
        for t in [t0, (t0 + PI).rem_euclid(tau)] {
            if t > 0.0 {
                s.events.push((t, i));
            }
        }
    }
    s.events.sort_by(|x, y| x.0.total_cmp(&y.0));
    let start = cost;
    let tol = 1e-12 * (1.0 + start.abs());
    let mut best: Option<(f64, f64)> = None;
    let m = s.events.len();
    for e in 0..m {
        let (theta, i) = s.events[e];
        cost += if s.on_left[i] { s.gains[i] } else { -s.gains[i] };
        s.on_left[i] = !s.on_left[i];
        let next = if e + 1 < m { s.events[e + 1].0 } else { tau };
        if next > theta && cost < start - tol && best.is_none_or(|b| cost < b.0) {
            best = Some((cost, 0.5 * (theta + next)));
        }
    }
    let (_, theta) = best?;
    let (c, sn) = (theta.cos(), theta.sin());
    unit(d.iter().zip(u).map(|(a, b)| c * a + sn * b).collect())
}

/// Repeated great-circle sweeps in random directions (within `coords`)
/// with level refits, until a round of `coords.len()` sweeps stalls.
fn local_search<R: Rng + ?Sized>(
    design: &Design,
    spec: CriterionSpec,
    mut d: Vec<f64>,
    coords: Option<&[usize]>,
    rng: &mut R,
    s: &mut Scratch,
) -> Option<(Vec<f64>, Profile)> {
    let mut pr = profile(design, &d, coords, spec, s)?;
    let dim = coords.map_or(design.p, <[usize]>::len);
    if dim < 2 {
        return Some((d, pr));
    }
    for _ in 0..MAX_ROUNDS {
        let mut improved = false;
        for _ in 0..dim {
            let mut u = random_unit(design.p, coords, rng);
            let proj: f64 = u.iter().zip(&d).map(|(a, b)| a * b).sum();
            u.iter_mut().zip(&d).for_each(|(a, b)| *a -= proj * b);
            let Some(u) = unit(u) else { continue };
            if let Some(next) = sweep(design, spec, &d, &u, coords, (pr.alpha, pr.beta), s) {
                if let Some(np) = profile(design, &next, coords, spec, s) {
                    if np.value < pr.value - 1e-12 * (1.0 + pr.value.abs()) {
                        d = next;
                        pr = np;
                        improved = true;
                    }
                }
            }
        }
        if !improved {
            break;
        }
    }
    Some((d, pr))
}

impl RandomRestarts {
    fn run(
        &self,
        design: &Design,
        spec: CriterionSpec,
        coords: Option<&[usize]>,
        warm: Option<&[f64]>,
        stream: SeedStream,
    ) -> Result<(Vec<f64>, f64)> {
        let starts = self.count + usize::from(warm.is_some());
        (0..starts)
            .into_par_iter()
            .map_init(Scratch::default, |s, r| {
                let mut rng = stream.child(r as u64).rng();
                let start = match warm {
                    Some(w) if r == 0 => w.to_vec(),
                    _ => random_unit(design.p, coords, &mut rng),
                };
                local_search(design, spec, start, coords, &mut rng, s).map(|(d, pr)| (pr.value, r, d))
            })
            .flatten()
            .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
            .map(|(v, _, d)| (d, v))
            .ok_or(Error::DegenerateDesign)
    }
}

impl PlaneSearch for RandomRestarts {
    fn name(&self) -> String {
        format!("restarts:{}", self.count)
    }

    fn search(&self, design: &Design, spec: CriterionSpec, stream: SeedStream) -> Result<(Vec<f64>, f64)> {
        if design.p < 2 {
            return Err(Error::invalid("plane search needs p >= 2"));
        }
        self.run(design, spec, None, None, stream)
    }
}

/// Refit at `d`, flipping it if needed so that α̂ > β̂.
fn canonical_fit(design: &Design, spec: CriterionSpec, d: Vec<f64>) -> Result<PlaneFit> {
    let mut s = Scratch::default();
    let mut d = d;
    let mut pr = profile(design, &d, None, spec, &mut s).ok_or(Error::PlaneSeparatesNothing)?;
    if pr.alpha < pr.beta {
        let flipped: Vec<f64> = d.iter().map(|v| -v).collect();
        if let Some(fp) = profile(design, &flipped, None, spec, &mut s) {
            d = flipped;
            pr = fp;
        }
    }
    Ok(PlaneFit {
        alpha_hat: pr.alpha,
        beta_hat: pr.beta,
        support: support_of(&d),
        d_hat: d,
        selected_m: None,
        criterion_value: pr.value,
    })
}

/// Minimizes the profiled criterion over unit directions.
pub fn fit_plane(
    design: &Design,
    spec: CriterionSpec,
    search: &dyn PlaneSearch,
    seed: u64,
) -> Result<PlaneFit> {
    fit_plane_stream(design, spec, search, SeedStream::new(seed))
}

pub fn fit_plane_stream(
    design: &Design,
    spec: CriterionSpec,
    search: &dyn PlaneSearch,
    stream: SeedStream,
) -> Result<PlaneFit> {
    if design.p < 2 {
        return Err(Error::invalid("fit_plane needs p >= 2"));
    }
    let (d, _) = search.search(design, spec, stream)?;
    canonical_fit(design, spec, d)
}

/// Side M-estimates with the plane frozen at `d_hat`.
pub fn two_shot_refit(design: &Design, d_hat: &[f64], spec: CriterionSpec) -> Result<(f64, f64)> {
    if d_hat.len() != design.p {
        return Err(Error::DimensionMismatch {
            expected: design.p,
            got: d_hat.len(),
        });
    }
    let pr =
        profile(design, d_hat, None, spec, &mut Scratch::default()).ok_or(Error::PlaneSeparatesNothing)?;
    Ok((pr.alpha, pr.beta))
}

/// P(sign(Xᵀd1) ≠ sign(Xᵀd2)).
pub fn wedge_prob(
    d1: &[f64],
    d2: &[f64],
    covariate: &CovariateLaw,
    mc_budget: usize,
    stream: SeedStream,
) -> Result<f64> {
    if d1.len() != d2.len() {
        return Err(Error::DimensionMismatch {
            expected: d1.len(),
            got: d2.len(),
        });
    }
    let p = d1.len();
    if let CovariateLaw::SphericalGaussian { p: q } = *covariate {
        if q != p {
            return Err(Error::DimensionMismatch { expected: q, got: p });
        }
        let dot: f64 = d1.iter().zip(d2).map(|(a, b)| a * b).sum();
        let n1 = d1.iter().map(|a| a * a).sum::<f64>().sqrt();
        let n2 = d2.iter().map(|a| a * a).sum::<f64>().sqrt();
        return Ok((dot / (n1 * n2)).clamp(-1.0, 1.0).acos() / PI);
    }
    if mc_budget == 0 {
        return Err(Error::invalid("wedge Monte Carlo needs a positive budget"));
    }
    let mut rng = stream.substream("wedge").rng();
    let mut hits = 0usize;
    for _ in 0..mc_budget {
        let x = covariate.sample_vector(p, &mut rng)?;
        let s1: f64 = x.iter().zip(d1).map(|(a, b)| a * b).sum();
        let s2: f64 = x.iter().zip(d2).map(|(a, b)| a * b).sum();
        if (s1 > 0.0) != (s2 > 0.0) {
            hits += 1;
        }
    }
    Ok(hits as f64 / mc_budget as f64)
}

/// √((α̂−α0)² + (β̂−β0)² + wedge(d̂, d0)).
pub fn dist_semimetric(
    fit: &PlaneFit,
    truth: &PlaneModel,
    covariate: &CovariateLaw,
    mc_budget: usize,
    stream: SeedStream,
) -> Result<f64> {
    let w = wedge_prob(&fit.d_hat, &truth.d0, covariate, mc_budget, stream)?;
    Ok(((fit.alpha_hat - truth.alpha0).powi(2) + (fit.beta_hat - truth.beta0).powi(2) + w).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PenaltyKind {
    HuberFamily,
    SquaredError,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltyConfig {
    pub kind: PenaltyKind,
    pub kappa: f64,
    pub delta_exp: f64,
    /// Plug-in for ‖ξ‖_{n,2}; estimated from a pilot fit when absent.
    pub xi_norm_estimate: Option<f64>,
}

impl PenaltyConfig {
    pub const DEFAULT_KAPPA: f64 = 2.0;
    pub const DEFAULT_DELTA: f64 = 0.5;

    pub fn huber(kappa: f64) -> Self {
        PenaltyConfig {
            kind: PenaltyKind::HuberFamily,
            kappa,
            delta_exp: Self::DEFAULT_DELTA,
            xi_norm_estimate: None,
        }
    }

    pub fn squared_error(delta_exp: f64, xi_norm_estimate: Option<f64>) -> Self {
        PenaltyConfig {
            kind: PenaltyKind::SquaredError,
            kappa: Self::DEFAULT_KAPPA,
            delta_exp,
            xi_norm_estimate,
        }
    }

    /// The squared-error form for ℓ2, the Huber-family form otherwise.
    pub fn for_criterion(spec: CriterionSpec) -> Self {
        match spec {
            CriterionSpec::SquaredError => Self::squared_error(Self::DEFAULT_DELTA, None),
            _ => Self::huber(Self::DEFAULT_KAPPA),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            return Err(Error::invalid(format!(
                "kappa must be positive, got {}",
                self.kappa
            )));
        }
        if !(self.delta_exp > 0.0 && self.delta_exp.is_finite()) {
            return Err(Error::invalid(format!(
                "delta must be positive, got {}",
                self.delta_exp
            )));
        }
        if let Some(x) = self.xi_norm_estimate {
            if !(x >= 0.0 && x.is_finite()) {
                return Err(Error::invalid(format!("xi norm must be nonnegative, got {x}")));
            }
        }
        Ok(())
    }

    /// Complexity V_m of m-sparse planes in dimension p.
    pub fn vc_dim(&self, m: usize, p: usize) -> f64 {
        let (m, p) = (m as f64, p as f64);
        match self.kind {
            PenaltyKind::HuberFamily => m * (E * p / m).ln(),
            PenaltyKind::SquaredError => m * p.ln().powf(1.0 + self.delta_exp),
        }
    }
}

pub fn penalty(m: usize, n: f64, p: usize, config: &PenaltyConfig) -> Result<f64> {
    config.validate()?;
    if m < 1 || m > p {
        return Err(Error::invalid(format!("need 1 <= m <= p, got m = {m}, p = {p}")));
    }
    let v = config.vc_dim(m, p);
    if v >= n {
        return Err(Error::ModelTooComplex { v_m: v, n });
    }
    let shape = v * (n / v).ln() / n;
    Ok(match config.kind {
        PenaltyKind::HuberFamily => config.kappa * shape,
        PenaltyKind::SquaredError => {
            let xi = config
                .xi_norm_estimate
                .ok_or_else(|| Error::invalid("squared-error penalty needs a xi norm estimate"))?;
            (p as f64).ln().powf(config.delta_exp) * xi * shape
        }
    })
}

/// (E max_i |ξ_i|^power)^(1/power) over n draws, by simulation.
pub fn xi_max_norm(law: &ErrorLaw, n: usize, power: f64, reps: usize, stream: SeedStream) -> Result<f64> {
    law.validate()?;
    if n == 0 || reps == 0 || !(power > 0.0) {
        return Err(Error::invalid("xi norm needs n, reps and power positive"));
    }
    let xi = law.sampler();
    let total: f64 = (0..reps)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream.child(r as u64).rng();
            (0..n)
                .map(|_| rng.sample(xi).abs())
                .fold(0.0, f64::max)
                .powf(power)
        })
        .collect::<Vec<f64>>()
        .iter()
        .sum();
    Ok((total / reps as f64).powf(1.0 / power))
}

fn best_single_coordinate(
    design: &Design,
    spec: CriterionSpec,
    s: &mut Scratch,
) -> Option<(Vec<f64>, Profile)> {
    let mut best: Option<(Vec<f64>, Profile)> = None;
    for j in 0..design.p {
        let mut d = vec![0.0; design.p];
        d[j] = 1.0;
        if let Some(pr) = profile(design, &d, Some(&[j]), spec, s) {
            if best.as_ref().is_none_or(|b| pr.value < b.1.value) {
                best = Some((d, pr));
            }
        }
    }
    best
}

/// max |rᵢ − median r| over the residuals of the best single-coordinate
/// ℓ1 plane.
pub fn xi_norm_plugin(design: &Design) -> Result<f64> {
    let spec = CriterionSpec::AbsoluteDeviation;
    let mut s = Scratch::default();
    let (d, pr) = best_single_coordinate(design, spec, &mut s).ok_or(Error::DegenerateDesign)?;
    let resid: Vec<f64> = (0..design.n)
        .map(|i| {
            design.y[i]
                - if design.dot(i, &d, None) <= 0.0 {
                    pr.alpha
                } else {
                    pr.beta
                }
        })
        .collect();
    let c = median(&resid);
    Ok(resid.iter().map(|r| (r - c).abs()).fold(0.0, f64::max))
}

/// Per-m training fits and penalties behind a sparse selection.
#[derive(Debug, Clone, PartialEq)]
pub struct SparsePath {
    /// Entry m−1: best plane with at most m nonzero coordinates.
    pub directions: Vec<Vec<f64>>,
    /// Mean training loss per observation, nonincreasing in m.
    pub train: Vec<f64>,
    pub penalty: Vec<f64>,
}

impl SparsePath {
    /// 1-based m minimizing train + penalty, smaller m on ties.
    pub fn selected_m(&self) -> usize {
        let mut best = 0;
        for m in 1..self.train.len() {
            if self.train[m] + self.penalty[m] < self.train[best] + self.penalty[best] {
                best = m;
            }
        }
        best + 1
    }
}

pub fn max_model_size(n: usize, p: usize) -> usize {
    if p < 2 {
        return p;
    }
    let cap = (n as f64 / (4.0 * (p as f64).ln())).floor() as usize;
    cap.clamp(1, p)
}

/// Largest p for which supports are enumerated exhaustively.
pub const EXHAUSTIVE_MAX_P: usize = 15;

fn embed(p: usize, cols: &[usize], sub: &[f64]) -> Vec<f64> {
    let mut d = vec![0.0; p];
    for (k, &j) in cols.iter().enumerate() {
        d[j] = sub[k];
    }
    d
}

fn exhaustive_path(
    design: &Design,
    spec: CriterionSpec,
    search: &dyn PlaneSearch,
    m_max: usize,
    stream: SeedStream,
) -> Result<Vec<(Vec<f64>, f64)>> {
    let p = design.p;
    let mut path = Vec::with_capacity(m_max);
    let mut s = Scratch::default();
    for m in 1..=m_max {
        let level = stream.substream(&format!("m{m}"));
        let best = if m == 1 {
            best_single_coordinate(design, spec, &mut s).map(|(d, pr)| (d, pr.value))
        } else {
            let supports = combinations(p, m);
            supports
                .chunks(m)
                .enumerate()
                .filter_map(|(k, cols)| {
                    let sub = design.columns(cols);
                    let (d, v) = search.search(&sub, spec, level.child(k as u64)).ok()?;
                    Some((v, k, embed(p, cols, &d)))
                })
                .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
                .map(|(v, _, d)| (d, v))
        };
        let best = best.ok_or(Error::DegenerateDesign)?;
        path.push(best);
    }
    Ok(path)
}

fn greedy_path(
    design: &Design,
    spec: CriterionSpec,
    m_max: usize,
    stream: SeedStream,
) -> Result<Vec<(Vec<f64>, f64)>> {
    let p = design.p;
    let mut s = Scratch::default();
    let (mut d, mut pr) = best_single_coordinate(design, spec, &mut s).ok_or(Error::DegenerateDesign)?;
    let mut path = vec![(d.clone(), pr.value)];
    // best fit reachable by tilting `from` toward e_j, for each j outside
    let tilt = |from: &[f64], from_pr: Profile, s: &mut Scratch| -> Option<(Vec<f64>, Profile)> {
        let support = support_of(from);
        let mut best: Option<(Vec<f64>, Profile)> = None;
        for j in (0..p).filter(|j| from[*j] == 0.0) {
            let mut u = vec![0.0; p];
            u[j] = 1.0;
            let mut idx = support.clone();
            idx.push(j);
            let Some(next) = sweep(
                design,
                spec,
                from,
                &u,
                Some(&idx),
                (from_pr.alpha, from_pr.beta),
                s,
            ) else {
                continue;
            };
            if let Some(np) = profile(design, &next, Some(&idx), spec, s) {
                if best.as_ref().is_none_or(|b| np.value < b.1.value) {
                    best = Some((next, np));
                }
            }
        }
        best
    };
    for m in 2..=m_max {
        let mut rng = stream.substream(&format!("m{m}")).rng();
        if let Some((next, np)) = tilt(&d, pr, &mut s) {
            if np.value < pr.value {
                let idx = support_of(&next);
                let (pd, pp) = local_search(design, spec, next, Some(&idx), &mut rng, &mut s)
                    .ok_or(Error::DegenerateDesign)?;
                d = pd;
                pr = pp;
            }
        }
        // one swap: drop the least useful coordinate, tilt toward the best outsider
        let support = support_of(&d);
        if support.len() >= 2 {
            let dropped = support
                .iter()
                .filter_map(|&i| {
                    let mut e = d.clone();
                    e[i] = 0.0;
                    let e = unit(e)?;
                    let idx = support_of(&e);
                    let ep = profile(design, &e, Some(&idx), spec, &mut s)?;
                    Some((ep.value, i, e, ep))
                })
                .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            if let Some((_, _, e, ep)) = dropped {
                if let Some((next, np)) = tilt(&e, ep, &mut s) {
                    if np.value < pr.value && support_of(&next) != support {
                        let idx = support_of(&next);
                        let (pd, pp) = local_search(design, spec, next, Some(&idx), &mut rng, &mut s)
                            .ok_or(Error::DegenerateDesign)?;
                        if pp.value < pr.value {
                            d = pd;
                            pr = pp;
                        }
                    }
                }
            }
        }
        path.push((d.clone(), pr.value));
    }
    Ok(path)
}

/// Best plane with at most m nonzero coordinates for every m up to
/// `max_model_size`, with training losses and penalties.
pub fn sparse_path(
    design: &Design,
    spec: CriterionSpec,
    config: &PenaltyConfig,
    search: &dyn PlaneSearch,
    stream: SeedStream,
) -> Result<SparsePath> {
    config.validate()?;
    let (n, p) = (design.n, design.p);
    let mut config = *config;
    if config.kind == PenaltyKind::SquaredError && config.xi_norm_estimate.is_none() {
        config.xi_norm_estimate = Some(xi_norm_plugin(design)?);
    }
    let m_max = max_model_size(n, p);
    let raw = if p <= EXHAUSTIVE_MAX_P {
        exhaustive_path(design, spec, search, m_max, stream)?
    } else {
        greedy_path(design, spec, m_max, stream)?
    };
    let mut directions: Vec<Vec<f64>> = Vec::with_capacity(m_max);
    let mut train: Vec<f64> = Vec::with_capacity(m_max);
    for (d, v) in raw {
        let v = v / n as f64;
        match train.last() {
            Some(&prev) if prev <= v => {
                directions.push(directions.last().cloned().expect("previous fit"));
                train.push(prev);
            }
            _ => {
                directions.push(d);
                train.push(v);
            }
        }
    }
    let penalty = (1..=m_max)
        .map(|m| penalty(m, n as f64, p, &config))
        .collect::<Result<Vec<_>>>()?;
    Ok(SparsePath {
        directions,
        train,
        penalty,
    })
}

/// Penalized model-size selection followed by the two-shot refit.
pub fn fit_sparse_plane(
    design: &Design,
    spec: CriterionSpec,
    config: &PenaltyConfig,
    search: &dyn PlaneSearch,
    seed: u64,
) -> Result<PlaneFit> {
    fit_sparse_plane_stream(design, spec, config, search, SeedStream::new(seed))
}

pub fn fit_sparse_plane_stream(
    design: &Design,
    spec: CriterionSpec,
    config: &PenaltyConfig,
    search: &dyn PlaneSearch,
    stream: SeedStream,
) -> Result<PlaneFit> {
    let path = sparse_path(design, spec, config, search, stream)?;
    let m = path.selected_m();
    let mut fit = canonical_fit(design, spec, path.directions[m - 1].clone())?;
    fit.selected_m = Some(m);
    Ok(fit)
}

/// One aggregated row of a change-plane rate table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaneRow {
    pub criterion: CriterionSpec,
    pub p: usize,
    pub n: usize,
    pub s: usize,
    pub dist: f64,
    pub wedge: f64,
    pub l2err: f64,
    pub selected_m: f64,
    pub seed: u64,
}

pub const PLANE_HEADER: &str = "criterion,p,n,s,dist,wedge,l2err,selected_m,seed";

pub fn plane_rows_csv(rows: &[PlaneRow]) -> String {
    use crate::table::format_sig;
    let mut out = format!("{PLANE_HEADER}\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.criterion,
            r.p,
            r.n,
            r.s,
            format_sig(r.dist, 6),
            format_sig(r.wedge, 6),
            format_sig(r.l2err, 6),
            format_sig(r.selected_m, 6),
            r.seed
        ));
    }
    out
}

/// A simulated change-plane experiment over a grid of sample sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaneExperiment {
    pub criterion: CriterionSpec,
    pub p: usize,
    /// Sparsity of d0; `s = p` draws a dense uniformly random direction.
    pub s: usize,
    pub ns: Vec<usize>,
    pub error_law: ErrorLaw,
    pub alpha0: f64,
    pub beta0: f64,
    pub replications: usize,
    pub search: String,
    /// Penalized sparse selection when set.
    pub penalty: Option<PenaltyConfig>,
    pub seed: u64,
}

/// Fit of replicate `rep` at sample size `n`, with its true model.
pub fn plane_replicate(
    exp: &PlaneExperiment,
    n: usize,
    rep: usize,
) -> Result<(PlaneModel, Design, PlaneFit)> {
    let search = parse_search(&exp.search)?;
    let stream = SeedStream::new(exp.seed)
        .substream(&format!("n{n}"))
        .child(rep as u64);
    let mut rng = stream.substream("data").rng();
    let model = if exp.s >= exp.p {
        PlaneModel::random_dense(exp.alpha0, exp.beta0, exp.p, &mut rng)?
    } else {
        PlaneModel::random_sparse(exp.alpha0, exp.beta0, exp.p, exp.s, &mut rng)?
    };
    let covariate = CovariateLaw::SphericalGaussian { p: exp.p };
    let design = model.sample(n, &covariate, &exp.error_law, &mut rng)?;
    let fit_stream = stream.substream("fit");
    let fit = match &exp.penalty {
        Some(cfg) => fit_sparse_plane_stream(&design, exp.criterion, cfg, search.as_ref(), fit_stream)?,
        None => fit_plane_stream(&design, exp.criterion, search.as_ref(), fit_stream)?,
    };
    Ok((model, design, fit))
}

pub fn plane_rates(exp: &PlaneExperiment) -> Result<Vec<PlaneRow>> {
    if exp.replications == 0 || exp.ns.is_empty() {
        return Err(Error::invalid(
            "plane experiment needs replications and sample sizes",
        ));
    }
    exp.error_law.validate()?;
    let covariate = CovariateLaw::SphericalGaussian { p: exp.p };
    let mut rows = Vec::with_capacity(exp.ns.len());
    for &n in &exp.ns {
        let mut dist = Vec::new();
        let mut wedge = Vec::new();
        let mut l2err = Vec::new();
        let mut sel = Vec::new();
        for rep in 0..exp.replications {
            let (model, _, fit) = plane_replicate(exp, n, rep)?;
            let w = wedge_prob(&fit.d_hat, &model.d0, &covariate, 0, SeedStream::new(exp.seed))?;
            dist.push(dist_semimetric(
                &fit,
                &model,
                &covariate,
                0,
                SeedStream::new(exp.seed),
            )?);
            wedge.push(w);
            l2err.push(
                fit.d_hat
                    .iter()
                    .zip(&model.d0)
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>()
                    .sqrt(),
            );
            sel.push(fit.selected_m.unwrap_or(exp.p) as f64);
        }
        rows.push(PlaneRow {
            criterion: exp.criterion,
            p: exp.p,
            n,
            s: exp.s.min(exp.p),
            dist: median(&dist),
            wedge: median(&wedge),
            l2err: median(&l2err),
            selected_m: median(&sel),
            seed: exp.seed,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    const L1: CriterionSpec = CriterionSpec::AbsoluteDeviation;
    const L2: CriterionSpec = CriterionSpec::SquaredError;

    fn t3() -> ErrorLaw {
        ErrorLaw::standardized_t(3.0).unwrap()
    }

    fn noisy(p: usize, n: usize, seed: u64) -> (PlaneModel, Design) {
        let mut rng = SeedStream::new(seed).rng();
        let model = PlaneModel::random_dense(1.0, 0.0, p, &mut rng).unwrap();
        let design = model
            .sample(n, &CovariateLaw::SphericalGaussian { p }, &t3(), &mut rng)
            .unwrap();
        (model, design)
    }

    fn angle_dir(t: f64) -> Vec<f64> {
        vec![t.cos(), t.sin()]
    }

    fn value_at(design: &Design, d: &[f64], spec: CriterionSpec) -> f64 {
        profile(design, d, None, spec, &mut Scratch::default()).map_or(f64::INFINITY, |p| p.value)
    }

    #[test]
    fn wedge_examples() {
        let sph = CovariateLaw::SphericalGaussian { p: 2 };
        let s = SeedStream::new(1);
        assert_eq!(wedge_prob(&[1.0, 0.0], &[1.0, 0.0], &sph, 0, s).unwrap(), 0.0);
        assert_abs_diff_eq!(
            wedge_prob(&[1.0, 0.0], &[0.0, 1.0], &sph, 0, s).unwrap(),
            0.5,
            epsilon = 1e-15
        );
        let d2 = [0.5, 0.75f64.sqrt()];
        let exact = wedge_prob(&[1.0, 0.0], &d2, &sph, 0, s).unwrap();
        assert_abs_diff_eq!(exact, 1.0 / 3.0, epsilon = 1e-12);
        // independent normal coordinates take the Monte Carlo route
        let mc = wedge_prob(&[1.0, 0.0], &d2, &CovariateLaw::StandardNormal, 1_000_000, s).unwrap();
        let se = (exact * (1.0 - exact) / 1e6).sqrt();
        assert!((mc - exact).abs() < 4.0 * se, "mc {mc}");
        assert!(wedge_prob(&[1.0, 0.0], &[1.0, 0.0, 0.0], &sph, 0, s).is_err());
    }

    #[test]
    fn wedge_triangle_inequality() {
        let cov = CovariateLaw::StandardNormal;
        let mut rng = SeedStream::new(3).rng();
        for t in 0..5 {
            let d: Vec<Vec<f64>> = (0..3).map(|_| random_unit(3, None, &mut rng)).collect();
            let s = SeedStream::new(100 + t);
            let w = |a: &[f64], b: &[f64]| wedge_prob(a, b, &cov, 200_000, s).unwrap();
            let (ab, bc, ac) = (w(&d[0], &d[1]), w(&d[1], &d[2]), w(&d[0], &d[2]));
            let se = ((ab + bc + ac) / 200_000.0).sqrt();
            assert!(ac <= ab + bc + 3.0 * se);
            assert_abs_diff_eq!(w(&d[0], &d[1]), w(&d[1], &d[0]), epsilon = 1e-12);
        }
    }

    #[test]
    fn dist_examples() {
        let truth = PlaneModel::new(1.0, 0.0, vec![1.0, 0.0]).unwrap();
        let sph = CovariateLaw::SphericalGaussian { p: 2 };
        let s = SeedStream::new(0);
        let fit = |a: f64, b: f64, d: Vec<f64>| PlaneFit {
            alpha_hat: a,
            beta_hat: b,
            d_hat: d,
            selected_m: None,
            criterion_value: 0.0,
            support: vec![],
        };
        assert_eq!(
            dist_semimetric(&fit(1.0, 0.0, vec![1.0, 0.0]), &truth, &sph, 0, s).unwrap(),
            0.0
        );
        assert_abs_diff_eq!(
            dist_semimetric(&fit(1.0, 0.0, vec![0.0, 1.0]), &truth, &sph, 0, s).unwrap(),
            0.5f64.sqrt(),
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            dist_semimetric(&fit(1.3, 0.0, vec![1.0, 0.0]), &truth, &sph, 0, s).unwrap(),
            0.3,
            epsilon = 1e-12
        );
    }

    #[test]
    fn combinations_in_lexicographic_order() {
        assert_eq!(combinations(4, 2), vec![0, 1, 0, 2, 0, 3, 1, 2, 1, 3, 2, 3]);
        assert_eq!(combinations(3, 3), vec![0, 1, 2]);
        assert_eq!(combinations(5, 3).len() / 3, 10);
    }

    #[test]
    fn noiseless_exact_recovery_p2() {
        let model = PlaneModel::new(1.0, -1.0, vec![0.6, 0.8]).unwrap();
        let pts = [
            [1.0, 0.3],
            [-0.4, 1.1],
            [0.7, -0.9],
            [-1.2, -0.2],
            [0.2, 0.5],
            [-0.3, -1.4],
        ];
        let rows: Vec<Vec<f64>> = pts.iter().map(|p| p.to_vec()).collect();
        let y: Vec<f64> = rows.iter().map(|r| model.mean(r)).collect();
        let design = Design::new(rows.clone(), y).unwrap();
        for spec in [L1, CriterionSpec::Huber(1.0), L2] {
            let fit = fit_plane(&design, spec, &ExactEnumeration::default(), 0).unwrap();
            assert_eq!(fit.criterion_value, 0.0);
            assert!(fit.alpha_hat > fit.beta_hat);
            // the cell of the arrangement around d0
            let t0 = 0.8f64.atan2(0.6);
            let mut bounds: Vec<f64> = rows
                .iter()
                .flat_map(|r| {
                    let t = r[1].atan2(r[0]) + 0.5 * PI;
                    [t, t + PI, t - PI, t - 2.0 * PI, t + 2.0 * PI]
                })
                .collect();
            bounds.sort_by(f64::total_cmp);
            let lo = bounds
                .iter()
                .copied()
                .filter(|&b| b < t0)
                .fold(f64::NEG_INFINITY, f64::max);
            let hi = bounds
                .iter()
                .copied()
                .filter(|&b| b > t0)
                .fold(f64::INFINITY, f64::min);
            let w = wedge_prob(
                &fit.d_hat,
                &model.d0,
                &CovariateLaw::SphericalGaussian { p: 2 },
                0,
                SeedStream::new(0),
            )
            .unwrap();
            assert!(w <= (hi - lo) / PI, "wedge {w} width {}", (hi - lo) / PI);
        }
    }

    #[test]
    fn constant_response_takes_first_candidate() {
        let (_, d) = noisy(2, 12, 5);
        let design = Design::from_flat(2, d.x.clone(), vec![3.0; 12]).unwrap();
        let fit = fit_plane(&design, L1, &ExactEnumeration::default(), 0).unwrap();
        assert_eq!(fit.criterion_value, 0.0);
        let first = ExactEnumeration::subset_directions(&design, &[0])
            .unwrap()
            .remove(0);
        assert_eq!(fit.d_hat, first);
        assert_eq!((fit.alpha_hat, fit.beta_hat), (3.0, 3.0));
    }

    #[test]
    fn exact_matches_angle_grid_p2() {
        for seed in 0..6 {
            let (_, design) = noisy(2, 25, seed);
            let mut lines: Vec<f64> = (0..design.n)
                .map(|i| {
                    let r = design.row(i);
                    (r[1].atan2(r[0]) + 0.5 * PI).rem_euclid(PI)
                })
                .collect();
            lines.sort_by(f64::total_cmp);
            lines.push(lines[0] + PI);
            let min_cell = lines
                .windows(2)
                .map(|w| w[1] - w[0])
                .fold(f64::INFINITY, f64::min);
            let step = 2.0 * PI / 1e4;
            for spec in [L1, CriterionSpec::Huber(1.0), L2] {
                let fit = fit_plane(&design, spec, &ExactEnumeration::default(), 0).unwrap();
                let grid = (0..10_000)
                    .map(|k| value_at(&design, &angle_dir(k as f64 * step), spec))
                    .fold(f64::INFINITY, f64::min);
                assert!(fit.criterion_value <= grid + 1e-9);
                if min_cell > 2.0 * step {
                    assert_abs_diff_eq!(fit.criterion_value, grid, epsilon = 1e-9);
                }
            }
        }
    }

    #[test]
    fn exact_matches_random_direction_oracle_p3() {
        for seed in 0..3 {
            let (_, design) = noisy(3, 14, 40 + seed);
            let mut rng = SeedStream::new(seed).rng();
            let mut s = Scratch::default();
            let mut dirs: Vec<(f64, Vec<f64>)> = (0..10_000)
                .map(|_| {
                    let d = random_unit(3, None, &mut rng);
                    (value_at(&design, &d, L1), d)
                })
                .collect();
            dirs.sort_by(|a, b| a.0.total_cmp(&b.0));
            let polished = dirs[..20]
                .iter()
                .filter_map(|(_, d)| local_search(&design, L1, d.clone(), None, &mut rng, &mut s))
                .map(|(_, pr)| pr.value)
                .fold(f64::INFINITY, f64::min);
            let fit = fit_plane(&design, L1, &ExactEnumeration::default(), 0).unwrap();
            assert!(fit.criterion_value <= polished + 1e-9);
            assert!(fit.criterion_value >= polished - 1e-9 || fit.criterion_value < polished);
            let restarts = fit_plane(&design, L1, &RandomRestarts { count: 30 }, 1).unwrap();
            assert!(restarts.criterion_value >= fit.criterion_value - 1e-9);
        }
    }

    #[test]
    fn scale_invariance() {
        let (_, design) = noisy(3, 20, 9);
        let a = fit_plane(&design, L1, &ExactEnumeration::default(), 0).unwrap();
        let b = fit_plane(&design.scaled(4.0), L1, &ExactEnumeration::default(), 0).unwrap();
        assert_eq!((a.alpha_hat, a.beta_hat), (b.alpha_hat, b.beta_hat));
        let signs = |d: &Design, v: &[f64]| (0..d.n).map(|i| d.dot(i, v, None) > 0.0).collect::<Vec<_>>();
        assert_eq!(signs(&design, &a.d_hat), signs(&design, &b.d_hat));
    }

    #[test]
    fn fit_is_unit_and_canonical() {
        let (_, design) = noisy(3, 200, 12);
        let fit = fit_plane(&design, L1, &RandomRestarts { count: 10 }, 3).unwrap();
        let norm: f64 = fit.d_hat.iter().map(|v| v * v).sum();
        assert_abs_diff_eq!(norm, 1.0, epsilon = 1e-12);
        assert!(fit.alpha_hat > fit.beta_hat);
        let again = fit_plane(&design, L1, &RandomRestarts { count: 10 }, 3).unwrap();
        assert_eq!(fit, again);
    }

    #[test]
    fn two_shot_examples() {
        let model = PlaneModel::new(2.0, -1.0, vec![1.0, 1.0, 0.0]).unwrap();
        let mut rng = SeedStream::new(2).rng();
        let rows: Vec<Vec<f64>> = (0..50)
            .map(|_| CovariateLaw::StandardNormal.sample_vector(3, &mut rng).unwrap())
            .collect();
        let y: Vec<f64> = rows.iter().map(|r| model.mean(r)).collect();
        let design = Design::new(rows, y).unwrap();
        assert_eq!(two_shot_refit(&design, &model.d0, L1).unwrap(), (2.0, -1.0));
        let (_, noisy_design) = noisy(3, 60, 1);
        let d = [0.0, 0.0, 1.0];
        let (a, b) = two_shot_refit(&noisy_design, &d, L2).unwrap();
        let (mut l, mut r) = (vec![], vec![]);
        for i in 0..60 {
            if noisy_design.row(i)[2] <= 0.0 {
                l.push(noisy_design.y[i]);
            } else {
                r.push(noisy_design.y[i]);
            }
        }
        assert_abs_diff_eq!(a, l.iter().sum::<f64>() / l.len() as f64, epsilon = 1e-12);
        assert_abs_diff_eq!(b, r.iter().sum::<f64>() / r.len() as f64, epsilon = 1e-12);
        let one_side = Design::new(vec![vec![1.0, 1.0], vec![2.0, 0.5]], vec![0.0, 1.0]).unwrap();
        assert_eq!(
            two_shot_refit(&one_side, &[1.0, 0.0], L1),
            Err(Error::PlaneSeparatesNothing)
        );
    }

    #[test]
    fn penalty_examples() {
        let cfg = PenaltyConfig::huber(1.0);
        assert_abs_diff_eq!(penalty(1, E, 1, &cfg).unwrap(), 1.0 / E, epsilon = 1e-15);
        let (n, p) = (2000.0, 50);
        let values: Vec<f64> = (1..=p / 2).map(|m| penalty(m, n, p, &cfg).unwrap()).collect();
        assert!(values.windows(2).all(|w| w[1] > w[0]));
        let doubled = PenaltyConfig::huber(2.0);
        for m in 1..=10 {
            assert_eq!(
                penalty(m, n, p, &doubled).unwrap(),
                2.0 * penalty(m, n, p, &cfg).unwrap()
            );
        }
        assert!(matches!(
            penalty(40, 40.0, 50, &cfg),
            Err(Error::ModelTooComplex { .. })
        ));
        assert!(penalty(0, n, p, &cfg).is_err());
        assert!(penalty(1, n, p, &PenaltyConfig::huber(0.0)).is_err());
        let l2 = PenaltyConfig::squared_error(0.5, Some(3.0));
        let v = 2.0 * 50f64.ln().powf(1.5);
        let expect = v * 50f64.ln().sqrt() * 3.0 * (n / v).ln() / n;
        assert_abs_diff_eq!(penalty(2, n, p, &l2).unwrap(), expect, epsilon = 1e-15);
        assert!(penalty(2, n, p, &PenaltyConfig::squared_error(0.5, None)).is_err());
    }

    fn sparse_noiseless(p: usize, n: usize, seed: u64) -> (PlaneModel, Design) {
        let mut rng = SeedStream::new(seed).rng();
        let model = PlaneModel::random_sparse(1.0, 0.0, p, 2, &mut rng).unwrap();
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| CovariateLaw::StandardNormal.sample_vector(p, &mut rng).unwrap())
            .collect();
        let y = rows.iter().map(|r| model.mean(r)).collect();
        (model, Design::new(rows, y).unwrap())
    }

    #[test]
    fn sparse_noiseless_exhaustive_recovers_support() {
        let (model, design) = sparse_noiseless(10, 500, 4);
        let fit = fit_sparse_plane(
            &design,
            L1,
            &PenaltyConfig::huber(2.0),
            &RandomRestarts { count: 3 },
            0,
        )
        .unwrap();
        assert_eq!(fit.selected_m, Some(2));
        assert_eq!(fit.support, model.support());
        assert_eq!(fit.criterion_value, 0.0);
    }

    #[test]
    fn sparse_noiseless_greedy_recovers_support() {
        let (model, design) = sparse_noiseless(30, 600, 6);
        let fit = fit_sparse_plane(
            &design,
            L1,
            &PenaltyConfig::huber(2.0),
            &RandomRestarts { count: 3 },
            0,
        )
        .unwrap();
        assert_eq!(fit.selected_m, Some(2));
        assert_eq!(fit.support, model.support());
    }

    #[test]
    fn kappa_limits() {
        let mut rng = SeedStream::new(8).rng();
        let model = PlaneModel::random_sparse(1.0, 0.0, 6, 2, &mut rng).unwrap();
        let design = model
            .sample(150, &CovariateLaw::SphericalGaussian { p: 6 }, &t3(), &mut rng)
            .unwrap();
        let search = RandomRestarts { count: 3 };
        let tiny = PenaltyConfig::huber(1e-12);
        let path = sparse_path(&design, L1, &tiny, &search, SeedStream::new(1)).unwrap();
        assert!(path.train.windows(2).all(|w| w[1] <= w[0]));
        let best = path.train.iter().copied().fold(f64::INFINITY, f64::min);
        let first_min = path.train.iter().position(|&t| t == best).unwrap() + 1;
        assert_eq!(path.selected_m(), first_min);
        assert_eq!(path.train.len(), max_model_size(150, 6));
        let huge = fit_sparse_plane(&design, L1, &PenaltyConfig::huber(1e6), &search, 1).unwrap();
        assert_eq!(huge.selected_m, Some(1));
        assert_eq!(huge.support.len(), 1);
    }

    #[test]
    fn xi_norms() {
        let v = xi_max_norm(&ErrorLaw::StandardNormal, 1, 2.0, 20_000, SeedStream::new(1)).unwrap();
        assert!((v - 1.0).abs() < 0.03, "{v}");
        let (_, design) = noisy(3, 100, 2);
        assert!(xi_norm_plugin(&design).unwrap() > 0.0);
    }

    #[test]
    fn registry_and_design_errors() {
        assert_eq!(parse_search("restarts:7").unwrap().name(), "restarts:7");
        assert_eq!(parse_search("exact").unwrap().name(), "exact");
        assert!(parse_search("restarts:0").is_err());
        assert!(parse_search("anneal").is_err());
        assert!(Design::new(vec![vec![1.0], vec![1.0, 2.0]], vec![0.0, 0.0]).is_err());
        assert!(Design::from_flat(2, vec![1.0; 3], vec![0.0, 1.0]).is_err());
        let tiny = Design::new(vec![vec![1.0, 0.0], vec![0.0, 1.0]], vec![0.0, 1.0]).unwrap();
        assert!(fit_plane(&tiny, L1, &ExactEnumeration::default(), 0).is_err());
    }
}
