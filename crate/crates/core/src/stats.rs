//! Standard Gaussian CDF and quantile, plus the seeded samplers used to
//! generate synthetic instances and Monte-Carlo draws.
//!
//! All random streams come from ChaCha8 seeded through `seed_from_u64`, whose
//! output is specified independently of platform and word size. Normal draws
//! use the ziggurat sampler of `rand_distr`; a chi-square draw with `dof`
//! degrees of freedom is the sum of `dof` squared standard normals.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub type SimRng = rand_chacha::ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}

/// SplitMix64 finalizer.
#[inline]
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Folds `parts` into one seed: `h = splitmix64(h ^ part)` starting from `h = 0`.
pub fn derive_seed(parts: &[u64]) -> u64 {
    parts.iter().fold(0u64, |h, &p| splitmix64(h ^ p))
}

/// `Phi(z)`, evaluated in double precision.
pub fn std_normal_cdf<T: Scalar>(z: T) -> T {
    T::of(cdf_f64(z.as_f64()))
}

#[inline]
fn cdf_f64(z: f64) -> f64 {
    0.5 * libm::erfc(-z * std::f64::consts::FRAC_1_SQRT_2)
}

#[inline]
fn pdf_f64(z: f64) -> f64 {
    const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
    INV_SQRT_2PI * (-0.5 * z * z).exp()
}

// Acklam's rational approximation, relative error below 1.2e-9 before refinement.
const A: [f64; 6] = [
    -3.969683028665376e+01,
    2.209460984245205e+02,
    -2.759285104469687e+02,
    1.38357751867269e+02,
    -3.066479806614716e+01,
    2.506628277459239e+00,
];
const B: [f64; 5] = [
    -5.447609879822406e+01,
    1.615858368580409e+02,
    -1.556989798598866e+02,
    6.680131188771972e+01,
    -1.328068155288572e+01,
];
const C: [f64; 6] = [
    -7.784894002430293e-03,
    -3.223964580411365e-01,
    -2.400758277161838e+00,
    -2.549732539343734e+00,
    4.374664141464968e+00,
    2.938163982698783e+00,
];
const D: [f64; 4] = [
    7.784695709041462e-03,
    3.224671290700398e-01,
    2.445134137142996e+00,
    3.754408661907416e+00,
];
const P_LOW: f64 = 0.02425;

fn acklam(p: f64) -> f64 {
    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    }
}

fn quantile_f64(p: f64) -> f64 {
    if p == 0.5 {
        return 0.0;
    }
    let mut x = acklam(p);
    for _ in 0..2 {
        // Halley step on Phi(x) - p. For x > 0 the residual is formed from the
        // complements, (1 - p) - (1 - Phi(x)).
        let e = if x > 0.0 {
            (1.0 - p) - 0.5 * libm::erfc(x * std::f64::consts::FRAC_1_SQRT_2)
        } else {
            cdf_f64(x) - p
        };
        let u = e / pdf_f64(x);
        x -= u / (1.0 + 0.5 * x * u);
    }
    x
}

/// `Phi^{-1}(p)` for `0 < p < 1`.
pub fn std_normal_quantile<T: Scalar>(p: T) -> Result<T> {
    let pf = p.as_f64();
    if !(pf > 0.0 && pf < 1.0) {
        return Err(Error::Domain(format!(
            "normal quantile needs 0 < p < 1, got {pf}"
        )));
    }
    Ok(T::of(quantile_f64(pf)))
}

/// Scalar distributions used by the synthetic generators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DistSpec {
    Uniform {
        lo: f64,
        hi: f64,
    },
    ChiSquare {
        dof: u32,
    },
    ScaledChiSquare {
        scale: f64,
        dof: u32,
    },
    SquaredUniform {
        lo: f64,
        hi: f64,
    },
    /// `(scale * Y)^2` with `Y ~ chi2(dof)`.
    SquaredScaledChiSquare {
        scale: f64,
        dof: u32,
    },
}

impl DistSpec {
    pub fn check(&self) -> Result<()> {
        let ok = match *self {
            DistSpec::Uniform { lo, hi } | DistSpec::SquaredUniform { lo, hi } => {
                lo.is_finite() && hi.is_finite() && hi > lo
            }
            DistSpec::ChiSquare { dof } => dof >= 1,
            DistSpec::ScaledChiSquare { scale, dof }
            | DistSpec::SquaredScaledChiSquare { scale, dof } => {
                dof >= 1 && scale.is_finite() && scale > 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Domain(format!("invalid distribution {self}")))
        }
    }

    /// Analytic mean, used by tests and documentation.
    pub fn mean(&self) -> f64 {
        match *self {
            DistSpec::Uniform { lo, hi } => 0.5 * (lo + hi),
            DistSpec::SquaredUniform { lo, hi } => (hi.powi(3) - lo.powi(3)) / (3.0 * (hi - lo)),
            DistSpec::ChiSquare { dof } => dof as f64,
            DistSpec::ScaledChiSquare { scale, dof } => scale * dof as f64,
            DistSpec::SquaredScaledChiSquare { scale, dof } => {
                let v = dof as f64;
                scale * scale * (2.0 * v + v * v)
            }
        }
    }
}

impl fmt::Display for DistSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            DistSpec::Uniform { lo, hi } => write!(f, "uniform:{lo}:{hi}"),
            DistSpec::SquaredUniform { lo, hi } => write!(f, "squared-uniform:{lo}:{hi}"),
            DistSpec::ChiSquare { dof } => write!(f, "chi2:{dof}"),
            DistSpec::ScaledChiSquare { scale, dof } => write!(f, "scaled-chi2:{scale}:{dof}"),
            DistSpec::SquaredScaledChiSquare { scale, dof } => {
                write!(f, "squared-scaled-chi2:{scale}:{dof}")
            }
        }
    }
}

fn parse_number(s: &str) -> Option<f64> {
    match s.split_once('/') {
        Some((a, b)) => Some(a.trim().parse::<f64>().ok()? / b.trim().parse::<f64>().ok()?),
        None => s.trim().parse().ok(),
    }
}

impl FromStr for DistSpec {
    type Err = Error;

    /// Parses `uniform:LO:HI`, `squared-uniform:LO:HI`, `chi2:DOF`,
    /// `scaled-chi2:SCALE:DOF` and `squared-scaled-chi2:SCALE:DOF`.
    /// Real parameters may be written as fractions such as `2/3`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Domain(format!("cannot parse distribution '{s}'"));
        let parts: Vec<&str> = s.split(':').collect();
        let num = |i: usize| parts.get(i).and_then(|p| parse_number(p)).ok_or_else(bad);
        let dof = |i: usize| {
            parts
                .get(i)
                .and_then(|p| p.trim().parse::<u32>().ok())
                .ok_or_else(bad)
        };
        let spec = match (parts[0], parts.len()) {
            ("uniform", 3) => DistSpec::Uniform {
                lo: num(1)?,
                hi: num(2)?,
            },
            ("squared-uniform", 3) => DistSpec::SquaredUniform {
                lo: num(1)?,
                hi: num(2)?,
            },
            ("chi2", 2) => DistSpec::ChiSquare { dof: dof(1)? },
            ("scaled-chi2", 3) => DistSpec::ScaledChiSquare {
                scale: num(1)?,
                dof: dof(2)?,
            },
            ("squared-scaled-chi2", 3) => DistSpec::SquaredScaledChiSquare {
                scale: num(1)?,
                dof: dof(2)?,
            },
            _ => return Err(bad()),
        };
        spec.check()?;
        Ok(spec)
    }
}

fn chi_square<R: Rng + ?Sized>(dof: u32, rng: &mut R) -> f64 {
    (0..dof)
        .map(|_| {
            let z: f64 = rng.sample(StandardNormal);
            z * z
        })
        .sum()
}

/// One draw from `spec`.
pub fn sample<R: Rng + ?Sized>(spec: &DistSpec, rng: &mut R) -> f64 {
    match *spec {
        DistSpec::Uniform { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
        DistSpec::SquaredUniform { lo, hi } => {
            let u = lo + (hi - lo) * rng.random::<f64>();
            u * u
        }
        DistSpec::ChiSquare { dof } => chi_square(dof, rng),
        DistSpec::ScaledChiSquare { scale, dof } => scale * chi_square(dof, rng),
        DistSpec::SquaredScaledChiSquare { scale, dof } => {
            let y = scale * chi_square(dof, rng);
            y * y
        }
    }
}

/// Standard normal draw from the shared generator.
#[inline]
pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}
