//! Error and covariate laws.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::distr::{Distribution, Open01};
use rand::Rng;
use rand_distr::{Exp1, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::error::{Error, Result};

/// Symmetric error law ξ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ErrorLaw {
    /// Student-t with `nu` degrees of freedom, rescaled to unit variance.
    StandardizedT {
        nu: f64,
    },
    StandardNormal,
    /// P(|ξ| > x) = 1 / (1 + x^gamma).
    PowerTail {
        gamma: f64,
    },
}

impl ErrorLaw {
    pub fn standardized_t(nu: f64) -> Result<Self> {
        let law = ErrorLaw::StandardizedT { nu };
        law.validate()?;
        Ok(law)
    }

    pub fn power_tail(gamma: f64) -> Result<Self> {
        let law = ErrorLaw::PowerTail { gamma };
        law.validate()?;
        Ok(law)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            ErrorLaw::StandardizedT { nu } if !(nu > 2.0 && nu.is_finite()) => {
                Err(Error::law(format!("standardized t needs nu > 2, got {nu}")))
            }
            ErrorLaw::PowerTail { gamma } if !(gamma > 0.0 && gamma.is_finite()) => {
                Err(Error::law(format!("power tail needs gamma > 0, got {gamma}")))
            }
            _ => Ok(()),
        }
    }

    /// Short name used in tables: `t3`, `normal`, `pt2`.
    pub fn name(&self) -> String {
        match *self {
            ErrorLaw::StandardizedT { nu } => format!("t{nu}"),
            ErrorLaw::StandardNormal => "normal".to_string(),
            ErrorLaw::PowerTail { gamma } => format!("pt{gamma}"),
        }
    }

    /// Polynomial tail index: P(|ξ| > x) ≍ x^(-index). Infinite for the normal.
    pub fn tail_index(&self) -> f64 {
        match *self {
            ErrorLaw::StandardizedT { nu } => nu,
            ErrorLaw::StandardNormal => f64::INFINITY,
            ErrorLaw::PowerTail { gamma } => gamma,
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            ErrorLaw::StandardizedT { .. } | ErrorLaw::StandardNormal => 1.0,
            ErrorLaw::PowerTail { gamma } if gamma > 2.0 => {
                // E ξ² = ∫ 2x / (1 + x^γ) dx = (2π/γ) / sin(2π/γ)
                let a = 2.0 * PI / gamma;
                a / a.sin()
            }
            ErrorLaw::PowerTail { .. } => f64::INFINITY,
        }
    }

    fn t_scale(nu: f64) -> f64 {
        ((nu - 2.0) / nu).sqrt()
    }

    fn student(nu: f64) -> StudentsT {
        StudentsT::new(0.0, 1.0, nu).expect("validated degrees of freedom")
    }

    /// P(|ξ| > x) for x ≥ 0.
    pub fn survival(&self, x: f64) -> f64 {
        let x = x.abs();
        match *self {
            ErrorLaw::StandardizedT { nu } => 2.0 * Self::student(nu).sf(x / Self::t_scale(nu)),
            ErrorLaw::StandardNormal => 2.0 * std_normal().sf(x),
            ErrorLaw::PowerTail { gamma } => 1.0 / (1.0 + x.powf(gamma)),
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            ErrorLaw::StandardizedT { nu } => Self::student(nu).cdf(x / Self::t_scale(nu)),
            ErrorLaw::StandardNormal => std_normal().cdf(x),
            ErrorLaw::PowerTail { .. } => {
                let half = 0.5 * self.survival(x);
                if x < 0.0 {
                    half
                } else {
                    1.0 - half
                }
            }
        }
    }

    pub fn density_at(&self, x: f64) -> f64 {
        match *self {
            ErrorLaw::StandardizedT { nu } => {
                let s = Self::t_scale(nu);
                let z = x / s;
                let ln_c = statrs::function::gamma::ln_gamma((nu + 1.0) / 2.0)
                    - statrs::function::gamma::ln_gamma(nu / 2.0)
                    - 0.5 * (nu * PI).ln();
                (ln_c - (nu + 1.0) / 2.0 * (1.0 + z * z / nu).ln()).exp() / s
            }
            ErrorLaw::StandardNormal => (-0.5 * x * x).exp() / (2.0 * PI).sqrt(),
            ErrorLaw::PowerTail { gamma } => {
                let a = x.abs();
                if a == 0.0 {
                    return if gamma < 1.0 {
                        f64::INFINITY
                    } else if gamma == 1.0 {
                        0.5
                    } else {
                        0.0
                    };
                }
                let g = a.powf(gamma);
                gamma * g / a / (2.0 * (1.0 + g) * (1.0 + g))
            }
        }
    }

    pub fn sampler(&self) -> ErrorSampler {
        match *self {
            ErrorLaw::StandardizedT { nu } => ErrorSampler::T {
                dist: StudentT::new(nu).expect("validated degrees of freedom"),
                scale: Self::t_scale(nu),
            },
            ErrorLaw::StandardNormal => ErrorSampler::Normal,
            ErrorLaw::PowerTail { gamma } => ErrorSampler::PowerTail {
                inv_gamma: 1.0 / gamma,
            },
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.sampler().sample(rng)
    }
}

/// Prepared sampler for an [`ErrorLaw`], cheap to draw from in tight loops.
#[derive(Debug, Clone, Copy)]
pub enum ErrorSampler {
    T { dist: StudentT<f64>, scale: f64 },
    Normal,
    PowerTail { inv_gamma: f64 },
}

impl Distribution<f64> for ErrorSampler {
    #[inline]
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            ErrorSampler::T { dist, scale } => dist.sample(rng) * scale,
            ErrorSampler::Normal => rng.sample(StandardNormal),
            ErrorSampler::PowerTail { inv_gamma } => {
                let u: f64 = rng.sample(Open01);
                let m = (1.0 / u - 1.0).powf(*inv_gamma);
                if rng.random::<bool>() {
                    m
                } else {
                    -m
                }
            }
        }
    }
}

impl fmt::Display for ErrorLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for ErrorLaw {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        let num = |raw: &str| -> Result<f64> {
            raw.trim_start_matches(':')
                .parse::<f64>()
                .map_err(|_| Error::law(format!("cannot parse '{s}'")))
        };
        if s == "normal" || s == "gaussian" {
            Ok(ErrorLaw::StandardNormal)
        } else if let Some(rest) = s.strip_prefix("pt") {
            ErrorLaw::power_tail(num(rest)?)
        } else if let Some(rest) = s.strip_prefix('t') {
            ErrorLaw::standardized_t(num(rest)?)
        } else {
            Err(Error::Unknown {
                kind: "error law",
                name: s,
            })
        }
    }
}

impl TryFrom<String> for ErrorLaw {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<ErrorLaw> for String {
    fn from(l: ErrorLaw) -> String {
        l.name()
    }
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

/// Covariate law of X.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum CovariateLaw {
    StandardNormal,
    Uniform {
        a: f64,
        b: f64,
    },
    /// N(0, I_p); 1-d queries refer to any single coordinate.
    SphericalGaussian {
        p: usize,
    },
}

impl CovariateLaw {
    pub fn uniform(a: f64, b: f64) -> Result<Self> {
        let law = CovariateLaw::Uniform { a, b };
        law.validate()?;
        Ok(law)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            CovariateLaw::Uniform { a, b } if !(a < b && a.is_finite() && b.is_finite()) => {
                Err(Error::law(format!("uniform needs a < b, got ({a}, {b})")))
            }
            CovariateLaw::SphericalGaussian { p: 0 } => Err(Error::law("spherical gaussian needs p >= 1")),
            _ => Ok(()),
        }
    }

    pub fn dim(&self) -> usize {
        match *self {
            CovariateLaw::SphericalGaussian { p } => p,
            _ => 1,
        }
    }

    pub fn name(&self) -> String {
        match *self {
            CovariateLaw::StandardNormal => "normal".to_string(),
            CovariateLaw::Uniform { a, b } => format!("uniform:{a},{b}"),
            CovariateLaw::SphericalGaussian { p } => format!("spherical:{p}"),
        }
    }

    pub fn density_at(&self, x: f64) -> f64 {
        match *self {
            CovariateLaw::StandardNormal | CovariateLaw::SphericalGaussian { .. } => {
                (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
            }
            CovariateLaw::Uniform { a, b } => {
                if (a..=b).contains(&x) {
                    1.0 / (b - a)
                } else {
                    0.0
                }
            }
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            CovariateLaw::StandardNormal | CovariateLaw::SphericalGaussian { .. } => std_normal().cdf(x),
            CovariateLaw::Uniform { a, b } => ((x - a) / (b - a)).clamp(0.0, 1.0),
        }
    }

    pub fn inverse_cdf(&self, u: f64) -> f64 {
        match *self {
            CovariateLaw::StandardNormal | CovariateLaw::SphericalGaussian { .. } => {
                std_normal().inverse_cdf(u)
            }
            CovariateLaw::Uniform { a, b } => a + (b - a) * u,
        }
    }

    /// One scalar draw (a single coordinate for the spherical law).
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            CovariateLaw::StandardNormal | CovariateLaw::SphericalGaussian { .. } => {
                rng.sample(StandardNormal)
            }
            CovariateLaw::Uniform { a, b } => a + (b - a) * rng.random::<f64>(),
        }
    }

    /// A p-vector draw. Scalar laws fill coordinates independently.
    pub fn sample_vector<R: Rng + ?Sized>(&self, p: usize, rng: &mut R) -> Result<Vec<f64>> {
        if let CovariateLaw::SphericalGaussian { p: q } = *self {
            if q != p {
                return Err(Error::DimensionMismatch { expected: q, got: p });
            }
        }
        Ok((0..p).map(|_| self.sample(rng)).collect())
    }

    /// `n` draws in increasing order, without sorting: uniform order
    /// statistics from normalized exponential spacings, mapped through F⁻¹.
    pub fn sample_sorted<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<f64> {
        let mut out = sorted_uniforms(n, rng);
        if !matches!(self, CovariateLaw::Uniform { a, b } if *a == 0.0 && *b == 1.0) {
            for u in out.iter_mut() {
                *u = self.inverse_cdf(*u);
            }
        }
        out
    }
}

/// Order statistics of `n` i.i.d. uniforms on (0, 1).
pub fn sorted_uniforms<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    let mut out = Vec::with_capacity(n);
    let mut acc = 0.0;
    for _ in 0..n {
        let e: f64 = rng.sample(Exp1);
        acc += e;
        out.push(acc);
    }
    let e: f64 = rng.sample(Exp1);
    let total = acc + e;
    for v in out.iter_mut() {
        *v /= total;
    }
    out
}

impl fmt::Display for CovariateLaw {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

impl FromStr for CovariateLaw {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        let (name, arg) = crate::registry::split_spec(&s);
        let bad = || Error::law(format!("cannot parse covariate law '{s}'"));
        let law = match (name, arg) {
            ("normal", None) => CovariateLaw::StandardNormal,
            ("uniform", None) => CovariateLaw::Uniform { a: -1.0, b: 1.0 },
            ("uniform", Some(arg)) => {
                let (a, b) = arg.split_once(',').ok_or_else(bad)?;
                CovariateLaw::Uniform {
                    a: a.trim().parse().map_err(|_| bad())?,
                    b: b.trim().parse().map_err(|_| bad())?,
                }
            }
            ("spherical", Some(arg)) => CovariateLaw::SphericalGaussian {
                p: arg.parse().map_err(|_| bad())?,
            },
            _ => {
                return Err(Error::Unknown {
                    kind: "covariate law",
                    name: s.clone(),
                })
            }
        };
        law.validate()?;
        Ok(law)
    }
}

impl TryFrom<String> for CovariateLaw {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<CovariateLaw> for String {
    fn from(l: CovariateLaw) -> String {
        l.name()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedStream;
    use approx::assert_abs_diff_eq;

    #[test]
    fn survival_examples() {
        let pt2 = ErrorLaw::power_tail(2.0).unwrap();
        let pt1 = ErrorLaw::power_tail(1.0).unwrap();
        assert_eq!(pt2.survival(0.0), 1.0);
        assert_eq!(pt2.survival(1.0), 0.5);
        assert_eq!(pt1.survival(3.0), 0.25);
    }

    #[test]
    fn density_examples() {
        assert_abs_diff_eq!(
            CovariateLaw::StandardNormal.density_at(0.0),
            0.398_942_280_4,
            epsilon = 1e-9
        );
        assert_eq!(CovariateLaw::uniform(-1.0, 1.0).unwrap().density_at(0.0), 0.5);
        assert_eq!(ErrorLaw::power_tail(2.0).unwrap().density_at(0.0), 0.0);
        assert_eq!(ErrorLaw::power_tail(1.0).unwrap().density_at(0.0), 0.5);
    }

    #[test]
    fn invalid_parameters() {
        assert!(matches!(
            ErrorLaw::standardized_t(2.0),
            Err(Error::InvalidLawParameter(_))
        ));
        assert!(matches!(
            ErrorLaw::power_tail(0.0),
            Err(Error::InvalidLawParameter(_))
        ));
        assert!(CovariateLaw::uniform(1.0, 1.0).is_err());
    }

    #[test]
    fn names_round_trip() {
        for s in ["t3", "t4.5", "normal", "pt2", "pt2.5"] {
            let law: ErrorLaw = s.parse().unwrap();
            assert_eq!(law.name(), s);
        }
        for s in ["normal", "uniform:-1,1", "spherical:3"] {
            let law: CovariateLaw = s.parse().unwrap();
            assert_eq!(law.name(), s);
        }
        assert!("cauchy".parse::<ErrorLaw>().is_err());
    }

    #[test]
    fn t_density_integrates_to_cdf() {
        let law = ErrorLaw::standardized_t(3.0).unwrap();
        // trapezoid of the density on [0, 2] against the CDF increment
        let n = 20_000;
        let h = 2.0 / n as f64;
        let mut acc = 0.0;
        for i in 0..=n {
            let w = if i == 0 || i == n { 0.5 } else { 1.0 };
            acc += w * law.density_at(i as f64 * h);
        }
        assert_abs_diff_eq!(acc * h, law.cdf(2.0) - 0.5, epsilon = 1e-8);
    }

    #[test]
    fn power_tail_variance_formula() {
        let law = ErrorLaw::power_tail(4.0).unwrap();
        // ∫ 2x/(1+x^4) dx on (0, ∞) = π/2
        assert_abs_diff_eq!(law.variance(), PI / 2.0, epsilon = 1e-12);
    }

    #[test]
    fn sorted_sample_is_sorted_and_in_support() {
        let mut rng = SeedStream::new(1).rng();
        let law = CovariateLaw::uniform(-1.0, 1.0).unwrap();
        let xs = law.sample_sorted(1000, &mut rng);
        assert!(xs.windows(2).all(|w| w[0] <= w[1]));
        assert!(xs.iter().all(|x| (-1.0..=1.0).contains(x)));
    }

    #[test]
    fn vector_dimension_checked() {
        let mut rng = SeedStream::new(1).rng();
        let law = CovariateLaw::SphericalGaussian { p: 3 };
        assert_eq!(law.sample_vector(3, &mut rng).unwrap().len(), 3);
        assert!(matches!(
            law.sample_vector(2, &mut rng),
            Err(Error::DimensionMismatch { .. })
        ));
    }
}
