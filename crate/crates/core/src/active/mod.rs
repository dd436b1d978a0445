//! Information criteria and the sequential design loop.
//!
//! Variance-based selection (ALM, PALM) maximizes the predictive variance of
//! a candidate. IMSE-based selection (ALC, PALC-NoG, PALC) minimizes the
//! reference-weighted latent variance left after hypothetically observing the
//! candidate, computed by bordering the region's Cholesky factor with one row.

mod criteria;
mod learner;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

pub use criteria::{
    global_search, local_search, score_alm, score_imse_single, select_next, GlobalScores, RegionScorer, Selection,
};
pub use learner::{
    propose, run_loop, CurveRecord, EarlyStop, LearningCurve, LoopConfig, LoopOutcome, PartitionSpec, FIT_STREAM,
    INITIAL_STREAM, PASSIVE_STREAM,
};

use crate::error::{check_dim, Error, Result};

/// Selection strategy, including the passive baselines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Strategy {
    Alm,
    Alc,
    Palm,
    PalcNoG,
    Palc,
    Lhd,
    Random,
}

impl Strategy {
    pub const ALL: [Strategy; 7] = [
        Strategy::Alm,
        Strategy::Alc,
        Strategy::Palm,
        Strategy::PalcNoG,
        Strategy::Palc,
        Strategy::Lhd,
        Strategy::Random,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Alm => "alm",
            Strategy::Alc => "alc",
            Strategy::Palm => "palm",
            Strategy::PalcNoG => "palc-nog",
            Strategy::Palc => "palc",
            Strategy::Lhd => "lhd",
            Strategy::Random => "random",
        }
    }

    /// Whether the model behind this strategy is partitioned.
    pub fn is_partitioned(self) -> bool {
        matches!(self, Strategy::Palm | Strategy::PalcNoG | Strategy::Palc)
    }

    pub fn is_passive(self) -> bool {
        matches!(self, Strategy::Lhd | Strategy::Random)
    }

    /// Whether selection integrates over a reference set.
    pub fn uses_reference(self) -> bool {
        matches!(self, Strategy::Alc | Strategy::PalcNoG | Strategy::Palc)
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL.into_iter().find(|st| st.name() == s).ok_or_else(|| {
            Error::InvalidConfig(format!(
                "unknown strategy `{s}` (expected alm|alc|palm|palc-nog|palc|lhd|random)"
            ))
        })
    }
}

pub type Importance = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// A strategy plus its scoring parameters.
#[derive(Clone)]
pub struct Criterion {
    pub strategy: Strategy,
    /// Keep candidates from the smallest set of top regions holding at least
    /// this fraction of the global-search mass. `None` takes the single
    /// argmax region.
    pub top_fraction: Option<f64>,
    /// Importance density over Ω; uniform when absent.
    pub importance: Option<Importance>,
}

impl fmt::Debug for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Criterion")
            .field("strategy", &self.strategy)
            .field("top_fraction", &self.top_fraction)
            .field("importance", &self.importance.as_ref().map(|_| "<fn>"))
            .finish()
    }
}

impl Criterion {
    pub fn new(strategy: Strategy) -> Self {
        Criterion {
            strategy,
            top_fraction: None,
            importance: None,
        }
    }

    pub fn with_top_fraction(mut self, q: f64) -> Result<Self> {
        if !(q > 0.0 && q <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "top fraction q must lie in (0, 1], got {q}"
            )));
        }
        self.top_fraction = Some(q);
        Ok(self)
    }

    pub fn with_importance(mut self, f: Importance) -> Self {
        self.importance = Some(f);
        self
    }

    /// Builds the reference set for `points` under this criterion's
    /// importance.
    pub fn reference_set(&self, points: Vec<Vec<f64>>) -> Result<ReferenceSet> {
        match &self.importance {
            None => ReferenceSet::uniform(points),
            Some(f) => {
                let raw = points.iter().map(|p| f(p)).collect();
                ReferenceSet::weighted(points, raw)
            }
        }
    }
}

/// Reference points with probability masses summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSet {
    points: Vec<Vec<f64>>,
    weights: Vec<f64>,
    uniform: bool,
}

impl ReferenceSet {
    pub fn uniform(points: Vec<Vec<f64>>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyReference);
        }
        let w = 1.0 / points.len() as f64;
        let weights = vec![w; points.len()];
        Ok(ReferenceSet {
            points,
            weights,
            uniform: true,
        })
    }

    /// Normalizes nonnegative raw weights.
    pub fn weighted(points: Vec<Vec<f64>>, raw: Vec<f64>) -> Result<Self> {
        check_dim(points.len(), raw.len())?;
        if points.is_empty() {
            return Err(Error::EmptyReference);
        }
        if raw.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidConfig(
                "importance weights must be finite and >= 0".into(),
            ));
        }
        let total: f64 = raw.iter().sum();
        if !(total > 0.0) {
            return Err(Error::EmptyReference);
        }
        let weights = raw.iter().map(|w| w / total).collect();
        Ok(ReferenceSet {
            points,
            weights,
            uniform: false,
        })
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn is_uniform(&self) -> bool {
        self.uniform
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}
