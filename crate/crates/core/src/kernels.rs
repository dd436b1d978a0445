//! Stationary ARD covariance kernels for the local GPs.

use std::fmt;
use std::str::FromStr;

use crate::error::{check_dim, Error, Result};
use crate::linalg::SpdMatrix;

/// Kernel family. Lengths are per input dimension in every family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum KernelFamily {
    /// `τ² ∏ exp(−(x_j − x'_j)² / l_j²)`
    #[default]
    RbfArd,
    Matern52Ard,
    Matern32Ard,
}

impl KernelFamily {
    pub fn name(self) -> &'static str {
        match self {
            KernelFamily::RbfArd => "rbf",
            KernelFamily::Matern52Ard => "matern52",
            KernelFamily::Matern32Ard => "matern32",
        }
    }
}

impl fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for KernelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rbf" => Ok(KernelFamily::RbfArd),
            "matern52" => Ok(KernelFamily::Matern52Ard),
            "matern32" => Ok(KernelFamily::Matern32Ard),
            other => Err(Error::InvalidConfig(format!(
                "unknown kernel family `{other}` (expected rbf|matern52|matern32)"
            ))),
        }
    }
}

/// Scale, per-dimension lengths and noise standard deviation, on the natural
/// scale.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelParams {
    pub scale: f64,
    pub lengths: Vec<f64>,
    pub noise_sd: f64,
}

impl KernelParams {
    pub fn new(scale: f64, lengths: Vec<f64>, noise_sd: f64) -> Result<Self> {
        let p = KernelParams {
            scale,
            lengths,
            noise_sd,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.scale > 0.0) || !self.scale.is_finite() {
            return Err(Error::InvalidConfig(format!("scale must be > 0, got {}", self.scale)));
        }
        if let Some(l) = self.lengths.iter().find(|l| !(**l > 0.0) || !l.is_finite()) {
            return Err(Error::InvalidConfig(format!("length-scales must be > 0, got {l}")));
        }
        if !(self.noise_sd >= 0.0) || !self.noise_sd.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "noise sd must be >= 0, got {}",
                self.noise_sd
            )));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.lengths.len()
    }

    /// `τ² + σ²`, the variance of a fresh observation under the prior.
    pub fn prior_variance(&self) -> f64 {
        self.scale * self.scale + self.noise_sd * self.noise_sd
    }
}

/// Scaled distance `r² = Σ (x_j − x'_j)² / l_j²`.
#[inline]
fn scaled_sq_dist(lengths: &[f64], x: &[f64], x2: &[f64]) -> f64 {
    x.iter()
        .zip(x2)
        .zip(lengths)
        .map(|((a, b), l)| {
            let d = (a - b) / l;
            d * d
        })
        .sum()
}

#[inline]
fn correlation(family: KernelFamily, r2: f64) -> f64 {
    match family {
        KernelFamily::RbfArd => (-r2).exp(),
        KernelFamily::Matern52Ard => {
            let r = r2.sqrt();
            let s5 = 5f64.sqrt() * r;
            (1.0 + s5 + 5.0 * r2 / 3.0) * (-s5).exp()
        }
        KernelFamily::Matern32Ard => {
            let s3 = 3f64.sqrt() * r2.sqrt();
            (1.0 + s3) * (-s3).exp()
        }
    }
}

/// Covariance without dimension checks; callers guarantee matching lengths.
#[inline]
pub(crate) fn cov_unchecked(family: KernelFamily, p: &KernelParams, x: &[f64], x2: &[f64]) -> f64 {
    p.scale * p.scale * correlation(family, scaled_sq_dist(&p.lengths, x, x2))
}

/// Evaluates the kernel. The noise term is added only when `same_index` is
/// set, i.e. when both arguments are the same observation.
pub fn kernel_eval(family: KernelFamily, p: &KernelParams, x: &[f64], x2: &[f64], same_index: bool) -> Result<f64> {
    check_dim(p.dim(), x.len())?;
    check_dim(p.dim(), x2.len())?;
    let mut k = cov_unchecked(family, p, x, x2);
    if same_index {
        k += p.noise_sd * p.noise_sd;
    }
    Ok(k)
}

/// Cross-covariances `k(X, x)`; noise never enters.
pub fn kernel_cross(family: KernelFamily, p: &KernelParams, points: &[Vec<f64>], x: &[f64]) -> Result<Vec<f64>> {
    check_dim(p.dim(), x.len())?;
    points
        .iter()
        .map(|xi| {
            check_dim(p.dim(), xi.len())?;
            Ok(cov_unchecked(family, p, xi, x))
        })
        .collect()
}

/// Gram matrix of `points` with `τ² + σ²` on the diagonal.
pub fn kernel_gram(family: KernelFamily, p: &KernelParams, points: &[Vec<f64>]) -> Result<SpdMatrix> {
    for x in points {
        check_dim(p.dim(), x.len())?;
    }
    let diag = p.prior_variance();
    Ok(SpdMatrix::from_lower_fn(points.len(), |i, j| {
        if i == j {
            diag
        } else {
            cov_unchecked(family, p, &points[i], &points[j])
        }
    }))
}
