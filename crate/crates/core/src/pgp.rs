//! Partitioned GP: a region classifier routing data and predictions to
//! independent local GPs.

use std::fmt::Write as _;

use crate::dataset::Dataset;
use crate::error::Result;
use crate::gp::{default_params, fit, FitConfig, LocalGp, Prediction};
use crate::kernels::{KernelFamily, KernelParams};
use crate::partition::{DesignSpace, RegionClassifier};

/// Regions with fewer samples than this keep default hyperparameters.
pub const MIN_FIT_SAMPLES: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct PartitionedGp {
    classifier: RegionClassifier,
    family: KernelFamily,
    fit_config: FitConfig,
    /// Hyperparameters for regions that cannot be fitted yet.
    fallback: KernelParams,
    buckets: Vec<Dataset>,
    locals: Vec<LocalGp>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionPrediction {
    pub mean: f64,
    pub variance: f64,
    pub region: usize,
}

fn fallback_params(space: &DesignSpace, values: &[f64]) -> KernelParams {
    // lengths from the box, scale and noise from the response spread
    let corners = vec![space.lower().to_vec(), space.upper().to_vec()];
    let from_space = default_params(&corners, values, space.dim());
    let from_data = default_params(&[], values, space.dim());
    KernelParams {
        scale: from_data.scale,
        lengths: from_space.lengths,
        noise_sd: from_data.noise_sd,
    }
}

fn region_model(
    family: KernelFamily,
    cfg: &FitConfig,
    fallback: &KernelParams,
    region: usize,
    bucket: &Dataset,
) -> Result<LocalGp> {
    if bucket.len() >= MIN_FIT_SAMPLES {
        let cfg = FitConfig {
            seed: cfg.seed.wrapping_add(region as u64),
            ..cfg.clone()
        };
        fit(family, bucket.points.clone(), bucket.values.clone(), &cfg)
    } else {
        LocalGp::condition(family, fallback.clone(), bucket.points.clone(), bucket.values.clone())
    }
}

impl PartitionedGp {
    /// Splits `data` by region and fits every region with at least two
    /// samples; sparser regions get default-parameter placeholders.
    pub fn train(
        classifier: RegionClassifier,
        data: &Dataset,
        family: KernelFamily,
        fit_config: &FitConfig,
    ) -> Result<Self> {
        let fallback = fallback_params(classifier.space(), &data.values);
        let mut buckets = vec![Dataset::default(); classifier.num_regions()];
        for (x, y) in data.points.iter().zip(&data.values) {
            let x = classifier.space().admit(x)?;
            let m = classifier.classify(&x)?;
            buckets[m].push(x, *y);
        }
        let locals = buckets
            .iter()
            .enumerate()
            .map(|(m, b)| region_model(family, fit_config, &fallback, m, b))
            .collect::<Result<Vec<_>>>()?;
        Ok(PartitionedGp {
            classifier,
            family,
            fit_config: fit_config.clone(),
            fallback,
            buckets,
            locals,
        })
    }

    /// Assembles a model from already-conditioned local GPs. Each local's
    /// data must lie in its region.
    pub fn from_locals(classifier: RegionClassifier, locals: Vec<LocalGp>) -> Result<Self> {
        crate::error::check_dim(classifier.num_regions(), locals.len())?;
        let family = locals[0].family();
        let mut buckets = Vec::with_capacity(locals.len());
        for (m, gp) in locals.iter().enumerate() {
            for x in gp.points() {
                let r = classifier.classify(x)?;
                if r != m {
                    return Err(crate::error::Error::InvalidConfig(format!(
                        "point {x:?} of region {m} classifies to region {r}"
                    )));
                }
            }
            buckets.push(Dataset::new(gp.points().to_vec(), gp.values().to_vec())?);
        }
        let fallback = locals[0].params().clone();
        Ok(PartitionedGp {
            classifier,
            family,
            fit_config: FitConfig::default(),
            fallback,
            buckets,
            locals,
        })
    }

    pub fn classifier(&self) -> &RegionClassifier {
        &self.classifier
    }

    pub fn space(&self) -> &DesignSpace {
        self.classifier.space()
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn num_regions(&self) -> usize {
        self.locals.len()
    }

    pub fn local(&self, m: usize) -> &LocalGp {
        &self.locals[m]
    }

    pub fn locals(&self) -> &[LocalGp] {
        &self.locals
    }

    pub fn bucket(&self, m: usize) -> &Dataset {
        &self.buckets[m]
    }

    /// Total number of stored samples.
    pub fn len(&self) -> usize {
        self.buckets.iter().map(Dataset::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Sum of per-region log marginal likelihoods.
    pub fn log_likelihood(&self) -> f64 {
        self.locals.iter().map(LocalGp::log_likelihood).sum()
    }

    pub fn region_of(&self, x: &[f64]) -> Result<usize> {
        self.classifier.classify(x)
    }

    pub fn predict(&self, x: &[f64]) -> Result<RegionPrediction> {
        let m = self.classifier.classify(x)?;
        let x = self.space().admit(x)?;
        let Prediction { mean, variance } = self.locals[m].predict(&x)?;
        Ok(RegionPrediction {
            mean,
            variance,
            region: m,
        })
    }

    /// Returns a new model with `(x, y)` added to its region. With `refit` the
    /// region's hyperparameters are re-estimated; otherwise its factor is
    /// extended with the current hyperparameters. Other regions are shared
    /// unchanged.
    pub fn add_observation(&self, x: &[f64], y: f64, refit: bool) -> Result<Self> {
        let x = self.space().admit(x)?;
        let m = self.classifier.classify(&x)?;
        let mut next = self.clone();
        next.buckets[m].push(x.clone(), y);
        next.locals[m] = if refit {
            region_model(self.family, &self.fit_config, &self.fallback, m, &next.buckets[m])?
        } else {
            self.locals[m].with_observation(x, y)?
        };
        Ok(next)
    }

    /// Replaces the fit settings used by later refits.
    pub fn set_fit_config(&mut self, cfg: FitConfig) {
        self.fit_config = cfg;
    }

    /// Human-readable per-region summary.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "regions: {}", self.num_regions());
        let _ = writeln!(s, "kernel: {}", self.family);
        let _ = writeln!(s, "log_likelihood: {:.6}", self.log_likelihood());
        for (m, gp) in self.locals.iter().enumerate() {
            let p = gp.params();
            let lengths: Vec<String> = p.lengths.iter().map(|l| format!("{l:.6e}")).collect();
            let _ = writeln!(
                s,
                "region {m}: n={} scale={:.6e} lengths=[{}] noise_sd={:.6e} log_likelihood={:.6}{}",
                gp.len(),
                p.scale,
                lengths.join(", "),
                p.noise_sd,
                gp.log_likelihood(),
                if gp.len() < MIN_FIT_SAMPLES {
                    " (placeholder)"
                } else {
                    ""
                },
            );
        }
        s
    }
}
