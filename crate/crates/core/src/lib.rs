//! Partitioned Gaussian-process surrogates and partitioned active learning.
//!
//! The design space is split into regions by a [`RegionClassifier`]; each
//! region carries its own GP. Active learning first picks the region with the
//! largest integrated predictive variance and then the candidate inside it
//! that most reduces that variance, scoring candidates through a one-row
//! Cholesky extension instead of refactorizing.
//!
//! ```
//! use palc_core::{
//!     run_loop, Criterion, DesignSpace, KernelFamily, LoopConfig, PartitionSpec, RegionClassifier,
//!     Strategy, Synthetic, TestFunction,
//! };
//!
//! let space = DesignSpace::unit(1);
//! let split = RegionClassifier::heaviside(space.clone(), 0, 0.5).unwrap();
//! let mut oracle = Synthetic::new(TestFunction::Sine1d, 1e-2, 7).unwrap();
//! let cfg = LoopConfig { n_initial: 6, budget: 9, n_ref: 30, n_cand: 30, ..LoopConfig::default() };
//! let out = run_loop(
//!     &mut oracle,
//!     &space,
//!     &PartitionSpec::Given(split),
//!     &Criterion::new(Strategy::Palc),
//!     KernelFamily::RbfArd,
//!     &cfg,
//! )
//! .unwrap();
//! assert_eq!(out.data.len(), 9);
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod active;
pub mod dataset;
pub mod designs;
pub mod error;
pub mod experiment;
pub mod gp;
pub mod kernels;
pub mod linalg;
pub mod optim;
pub mod oracles;
pub mod partition;
pub mod pgp;

pub use active::{
    global_search, local_search, propose, run_loop, score_alm, score_imse_single, select_next, Criterion, CurveRecord,
    EarlyStop, GlobalScores, LearningCurve, LoopConfig, LoopOutcome, PartitionSpec, ReferenceSet, RegionScorer,
    Selection, Strategy, FIT_STREAM, INITIAL_STREAM, PASSIVE_STREAM,
};
pub use dataset::Dataset;
pub use designs::{lhd, lhd_in_region, lhd_maximin, mix_seed, uniform_random, DesignBatch, Generator};
pub use error::{Error, Result};
pub use experiment::{
    evaluate, evaluation_set, export_curves, import_report, run_experiment, Evaluation, ExperimentReport,
    ExperimentSpec, Metric, OracleFactory,
};
pub use gp::{fit, FitConfig, LocalGp, Prediction};
pub use kernels::{kernel_cross, kernel_eval, kernel_gram, KernelFamily, KernelParams};
pub use linalg::{chol_append, cholesky, CholeskyFactor, SpdMatrix};
pub use oracles::{AskTellFiles, Oracle, Synthetic, TableLookup, TestFunction};
pub use partition::{estimate_partition, DesignSpace, RegionClassifier};
pub use pgp::{PartitionedGp, RegionPrediction};

/// Formats a float with 17 significant digits so it round-trips exactly.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}
