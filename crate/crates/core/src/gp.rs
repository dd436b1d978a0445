//! A single zero-mean GP with cached Cholesky state.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::designs::unit_lhs;
use crate::error::{check_dim, Error, Result};
use crate::kernels::{cov_unchecked, kernel_cross, kernel_gram, KernelFamily, KernelParams};
use crate::linalg::{chol_append, cholesky, solve_lower, solve_spd, CholeskyFactor};
use crate::optim::{nelder_mead, NelderMeadOptions};

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Hyperparameter search settings. Bounds are multipliers applied to the
/// data's per-dimension range (lengths) and the response sd (scale, noise).
#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub restarts: usize,
    pub max_iter: usize,
    pub tol: f64,
    pub seed: u64,
    pub length_bounds: (f64, f64),
    pub scale_bounds: (f64, f64),
    pub noise_bounds: (f64, f64),
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            restarts: 5,
            max_iter: 200,
            tol: 1e-6,
            seed: 0,
            length_bounds: (1e-3, 1e2),
            scale_bounds: (1e-3, 1e3),
            noise_bounds: (1e-6, 1.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub mean: f64,
    pub variance: f64,
}

/// Sample standard deviation, or `None` when undefined or zero.
fn sample_sd(y: &[f64]) -> Option<f64> {
    if y.len() < 2 {
        return None;
    }
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let var = y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (y.len() - 1) as f64;
    let sd = var.sqrt();
    (sd > 0.0 && sd.is_finite()).then_some(sd)
}

fn ranges(points: &[Vec<f64>], d: usize) -> Vec<f64> {
    (0..d)
        .map(|j| {
            let (lo, hi) = points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| {
                (a.min(p[j]), b.max(p[j]))
            });
            let r = hi - lo;
            if r > 0.0 && r.is_finite() {
                r
            } else {
                1.0
            }
        })
        .collect()
}

/// Default hyperparameters: lengths `0.3·range`, scale `sd(y)`, noise
/// `0.05·sd(y)`. Zero ranges and sds fall back to 1.
pub fn default_params(points: &[Vec<f64>], values: &[f64], dim: usize) -> KernelParams {
    let sd = sample_sd(values).unwrap_or(1.0);
    KernelParams {
        scale: sd,
        lengths: ranges(points, dim).into_iter().map(|r| 0.3 * r).collect(),
        noise_sd: 0.05 * sd,
    }
}

/// `−½ (yᵀK⁻¹y + log det K + n log 2π)`.
pub fn log_marginal_likelihood(
    family: KernelFamily,
    params: &KernelParams,
    points: &[Vec<f64>],
    values: &[f64],
) -> Result<f64> {
    check_dim(points.len(), values.len())?;
    let k = kernel_gram(family, params, points)?;
    let l = cholesky(&k)?;
    Ok(lml_from_factor(&l, values))
}

fn lml_from_factor(l: &CholeskyFactor, values: &[f64]) -> f64 {
    let v = solve_lower(l, values).expect("factor order matches data");
    let quad: f64 = v.iter().map(|x| x * x).sum();
    -0.5 * (quad + l.log_det() + values.len() as f64 * LN_2PI)
}

/// One region's trained GP.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalGp {
    family: KernelFamily,
    params: KernelParams,
    points: Vec<Vec<f64>>,
    values: Vec<f64>,
    factor: CholeskyFactor,
    weights: Vec<f64>,
    log_likelihood: f64,
    degenerate: bool,
}

impl LocalGp {
    /// Conditions a GP with fixed hyperparameters on the data. Zero points
    /// gives the prior.
    pub fn condition(
        family: KernelFamily,
        params: KernelParams,
        points: Vec<Vec<f64>>,
        values: Vec<f64>,
    ) -> Result<Self> {
        params.validate()?;
        check_dim(points.len(), values.len())?;
        let factor = if points.is_empty() {
            CholeskyFactor::empty()
        } else {
            cholesky(&kernel_gram(family, &params, &points)?)?
        };
        let weights = solve_spd(&factor, &values)?;
        let log_likelihood = lml_from_factor(&factor, &values);
        Ok(LocalGp {
            family,
            params,
            points,
            values,
            factor,
            weights,
            log_likelihood,
            degenerate: false,
        })
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn params(&self) -> &KernelParams {
        &self.params
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn factor(&self) -> &CholeskyFactor {
        &self.factor
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.params.dim()
    }

    /// Log marginal likelihood at the stored hyperparameters.
    pub fn log_likelihood(&self) -> f64 {
        self.log_likelihood
    }

    /// Set when the responses carried no variation during fitting.
    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    /// `k(X, x)`.
    pub fn cross_cov(&self, x: &[f64]) -> Vec<f64> {
        self.points
            .iter()
            .map(|xi| cov_unchecked(self.family, &self.params, xi, x))
            .collect()
    }

    /// Posterior mean and variance of a new observation at `x`. The variance
    /// includes the noise term and is clamped at zero.
    pub fn predict(&self, x: &[f64]) -> Result<Prediction> {
        check_dim(self.dim(), x.len())?;
        let k = kernel_cross(self.family, &self.params, &self.points, x)?;
        let mean = k.iter().zip(&self.weights).map(|(a, b)| a * b).sum();
        let v = solve_lower(&self.factor, &k)?;
        let explained: f64 = v.iter().map(|a| a * a).sum();
        Ok(Prediction {
            mean,
            variance: (self.params.prior_variance() - explained).max(0.0),
        })
    }

    /// Adds one observation keeping hyperparameters fixed, extending the
    /// factor in O(n²).
    pub fn with_observation(&self, x: Vec<f64>, y: f64) -> Result<Self> {
        check_dim(self.dim(), x.len())?;
        let k = self.cross_cov(&x);
        let factor = chol_append(&self.factor, &k, self.params.prior_variance())?;
        let mut points = self.points.clone();
        let mut values = self.values.clone();
        points.push(x);
        values.push(y);
        let weights = solve_spd(&factor, &values)?;
        let log_likelihood = lml_from_factor(&factor, &values);
        Ok(LocalGp {
            family: self.family,
            params: self.params.clone(),
            points,
            values,
            factor,
            weights,
            log_likelihood,
            degenerate: self.degenerate,
        })
    }
}

struct LogBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl LogBox {
    fn new(points: &[Vec<f64>], values: &[f64], d: usize, cfg: &FitConfig) -> Self {
        let sd = sample_sd(values).unwrap_or(1.0);
        let r = ranges(points, d);
        let mut lower = vec![(cfg.scale_bounds.0 * sd).ln()];
        let mut upper = vec![(cfg.scale_bounds.1 * sd).ln()];
        for rj in &r {
            lower.push((cfg.length_bounds.0 * rj).ln());
            upper.push((cfg.length_bounds.1 * rj).ln());
        }
        lower.push((cfg.noise_bounds.0 * sd).ln());
        upper.push((cfg.noise_bounds.1 * sd).ln());
        LogBox { lower, upper }
    }
}

fn to_log(p: &KernelParams) -> Vec<f64> {
    std::iter::once(p.scale.ln())
        .chain(p.lengths.iter().map(|l| l.ln()))
        .chain(std::iter::once(p.noise_sd.ln()))
        .collect()
}

fn from_log(theta: &[f64]) -> KernelParams {
    let n = theta.len();
    KernelParams {
        scale: theta[0].exp(),
        lengths: theta[1..n - 1].iter().map(|t| t.exp()).collect(),
        noise_sd: theta[n - 1].exp(),
    }
}

/// Starting points for the multi-start search, in log space: the default
/// hyperparameters followed by `restarts` Latin hypercube points of the box.
pub fn fit_starts(points: &[Vec<f64>], values: &[f64], dim: usize, cfg: &FitConfig) -> Vec<Vec<f64>> {
    let bx = LogBox::new(points, values, dim, cfg);
    let mut init = to_log(&default_params(points, values, dim));
    for ((v, lo), hi) in init.iter_mut().zip(&bx.lower).zip(&bx.upper) {
        *v = v.clamp(*lo, *hi);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut starts = vec![init];
    for t in unit_lhs(cfg.restarts, bx.lower.len(), &mut rng) {
        starts.push(
            t.iter()
                .zip(&bx.lower)
                .zip(&bx.upper)
                .map(|((u, lo), hi)| lo + u * (hi - lo))
                .collect(),
        );
    }
    starts
}

/// Fits hyperparameters by multi-start Nelder–Mead on the log marginal
/// likelihood over log-scale, then conditions on the data.
pub fn fit(family: KernelFamily, points: Vec<Vec<f64>>, values: Vec<f64>, cfg: &FitConfig) -> Result<LocalGp> {
    check_dim(points.len(), values.len())?;
    let dim = points
        .first()
        .map(Vec::len)
        .ok_or_else(|| Error::DegenerateData("cannot fit a GP to zero points".into()))?;
    for p in &points {
        check_dim(dim, p.len())?;
    }
    if points.len() == 1 {
        let params = default_params(&points, &values, dim);
        return LocalGp::condition(family, params, points, values);
    }
    let degenerate = sample_sd(&values).is_none();
    if degenerate {
        log::warn!(
            "all {} responses are identical; hyperparameters sit on their floors",
            values.len()
        );
    }

    let bx = LogBox::new(&points, &values, dim, cfg);
    let objective = |theta: &[f64]| -> f64 {
        match log_marginal_likelihood(family, &from_log(theta), &points, &values) {
            Ok(l) => -l,
            Err(_) => f64::INFINITY,
        }
    };
    let opts = NelderMeadOptions {
        max_iter: cfg.max_iter,
        tol: cfg.tol,
        step: 0.1,
    };
    let mut best: Option<(Vec<f64>, f64)> = None;
    for start in fit_starts(&points, &values, dim, cfg) {
        let m = nelder_mead(objective, &start, &bx.lower, &bx.upper, opts);
        if best.as_ref().is_none_or(|(_, v)| m.value < *v) {
            best = Some((m.x, m.value));
        }
    }
    let (theta, value) = best.expect("at least one start");
    if !value.is_finite() {
        return Err(Error::NotPositiveDefinite {
            row: 0,
            pivot: f64::NAN,
        });
    }
    let mut gp = LocalGp::condition(family, from_log(&theta), points, values)?;
    gp.degenerate = degenerate;
    Ok(gp)
}
