use std::time::Instant;

use super::criteria::{select_next, PartitionedScorer, Selection};
use super::{Criterion, Strategy};
use crate::dataset::Dataset;
use crate::designs::{lhd, lhd_in_region, lhd_maximin, mix_seed, uniform_random, DEFAULT_RESTARTS};
use crate::error::{Error, Result};
use crate::experiment::{Evaluation, Metric};
use crate::gp::FitConfig;
use crate::kernels::KernelFamily;
use crate::oracles::Oracle;
use crate::partition::{estimate_partition, DesignSpace, RegionClassifier};
use crate::pgp::PartitionedGp;

/// Seed stream of the initial design, `mix_seed(seed, INITIAL_STREAM)`.
pub const INITIAL_STREAM: u64 = 1;
/// Seed stream of hyperparameter fitting.
pub const FIT_STREAM: u64 = 2;
/// Seed stream of passive (whole-budget) designs.
pub const PASSIVE_STREAM: u64 = 3;
const REFERENCE: u64 = 0x100;
const CANDIDATE: u64 = 0x200;

/// Stop once `metric` on `test` falls to `target` or below.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStop {
    pub metric: Metric,
    pub test: Dataset,
    pub target: f64,
}

/// How the design space is split for partitioned strategies. Single-GP
/// strategies ignore this and always use one region.
#[derive(Debug, Clone, PartialEq)]
pub enum PartitionSpec {
    Single,
    Given(RegionClassifier),
    /// Estimated from the initial design by slope clustering.
    Estimate {
        regions: usize,
        k: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoopConfig {
    pub n_initial: usize,
    pub budget: usize,
    pub n_ref: usize,
    pub n_cand: usize,
    /// Refit hyperparameters every `refit_period` queries; in between the
    /// model is extended with frozen hyperparameters. 1 refits every step.
    pub refit_period: usize,
    pub early_stop: Option<EarlyStop>,
    /// Evaluation set whose metric is logged on every record.
    pub evaluation: Option<Evaluation>,
    pub fit: FitConfig,
    pub seed: u64,
}

impl Default for LoopConfig {
    fn default() -> Self {
        LoopConfig {
            n_initial: 10,
            budget: 30,
            n_ref: 1000,
            n_cand: 200,
            refit_period: 1,
            early_stop: None,
            evaluation: None,
            fit: FitConfig::default(),
            seed: 0,
        }
    }
}

impl LoopConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.n_initial < 1 {
            return bad("n_initial must be >= 1".into());
        }
        if self.budget < self.n_initial {
            return bad(format!(
                "budget ({}) must be >= n_initial ({})",
                self.budget, self.n_initial
            ));
        }
        if self.n_ref < 1 || self.n_cand < 1 {
            return bad("n_ref and n_cand must be >= 1".into());
        }
        if self.refit_period < 1 {
            return bad("refit_period must be >= 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurveRecord {
    pub iteration: usize,
    pub n_samples: usize,
    /// Evaluation metric after this step, if an evaluation set was given.
    pub metric: Option<f64>,
    pub criterion_seconds: f64,
    pub oracle_seconds: f64,
    pub fit_seconds: f64,
    pub selected: Option<Vec<f64>>,
    pub region: Option<usize>,
    /// Bordered-system evaluations spent on this selection.
    pub evaluations: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LearningCurve {
    pub records: Vec<CurveRecord>,
}

impl LearningCurve {
    pub fn last_metric(&self) -> Option<f64> {
        self.records.last().and_then(|r| r.metric)
    }

    pub fn total_criterion_seconds(&self) -> f64 {
        self.records.iter().map(|r| r.criterion_seconds).sum()
    }
}

#[derive(Debug, Clone)]
pub struct LoopOutcome {
    pub curve: LearningCurve,
    pub model: PartitionedGp,
    pub data: Dataset,
}

struct Scoring<'a> {
    evaluation: Option<&'a Evaluation>,
    early: Option<&'a EarlyStop>,
}

impl Scoring<'_> {
    /// Logged metric and whether to stop.
    fn score(&self, h: &PartitionedGp) -> Result<(Option<f64>, bool)> {
        let metric = match self.evaluation {
            Some(e) => Some(e.score(h)?),
            None => None,
        };
        let stop = match self.early {
            Some(e) => e.metric.evaluate(h, &e.test, false)? <= e.target,
            None => false,
        };
        Ok((metric, stop))
    }
}

fn query_all(oracle: &mut dyn Oracle, points: &[Vec<f64>]) -> Result<Vec<f64>> {
    points.iter().map(|x| oracle.query(x)).collect()
}

/// Runs one sequential design session: a maximin LHD of `n_initial` points,
/// then one query per iteration chosen by `criterion` until the budget is
/// spent or the early-stop target is met.
///
/// Passive strategies draw the whole budget at once and fit a single time.
pub fn run_loop(
    oracle: &mut dyn Oracle,
    space: &DesignSpace,
    partition: &PartitionSpec,
    criterion: &Criterion,
    family: KernelFamily,
    config: &LoopConfig,
) -> Result<LoopOutcome> {
    config.validate()?;
    let seed = config.seed;
    let fit = FitConfig {
        seed: mix_seed(seed, FIT_STREAM),
        ..config.fit.clone()
    };
    let scoring = Scoring {
        evaluation: config.evaluation.as_ref(),
        early: config.early_stop.as_ref(),
    };
    let strategy = criterion.strategy;

    if strategy.is_passive() {
        let design = match strategy {
            Strategy::Lhd => lhd_maximin(space, config.budget, mix_seed(seed, PASSIVE_STREAM), DEFAULT_RESTARTS),
            _ => uniform_random(space, config.budget, mix_seed(seed, PASSIVE_STREAM)),
        };
        let t = Instant::now();
        let values = query_all(oracle, &design.points)?;
        let oracle_seconds = t.elapsed().as_secs_f64();
        let data = Dataset::new(design.points, values)?;
        let t = Instant::now();
        let model = PartitionedGp::train(RegionClassifier::single(space.clone()), &data, family, &fit)?;
        let fit_seconds = t.elapsed().as_secs_f64();
        let (metric, _) = scoring.score(&model)?;
        let record = CurveRecord {
            iteration: 0,
            n_samples: data.len(),
            metric,
            criterion_seconds: 0.0,
            oracle_seconds,
            fit_seconds,
            selected: None,
            region: None,
            evaluations: 0,
        };
        return Ok(LoopOutcome {
            curve: LearningCurve { records: vec![record] },
            model,
            data,
        });
    }

    let init = lhd_maximin(
        space,
        config.n_initial,
        mix_seed(seed, INITIAL_STREAM),
        DEFAULT_RESTARTS,
    );
    let t = Instant::now();
    let values = query_all(oracle, &init.points)?;
    let oracle_seconds = t.elapsed().as_secs_f64();
    let mut data = Dataset::new(init.points, values)?;

    let t = Instant::now();
    let classifier = match (strategy.is_partitioned(), partition) {
        (false, _) | (true, PartitionSpec::Single) => RegionClassifier::single(space.clone()),
        (true, PartitionSpec::Given(c)) => c.clone(),
        (true, PartitionSpec::Estimate { regions, k }) => estimate_partition(space, &data, *regions, *k)?,
    };
    let mut model = PartitionedGp::train(classifier, &data, family, &fit)?;
    let fit_seconds = t.elapsed().as_secs_f64();
    let (metric, mut stop) = scoring.score(&model)?;
    let mut curve = LearningCurve {
        records: vec![CurveRecord {
            iteration: 0,
            n_samples: data.len(),
            metric,
            criterion_seconds: 0.0,
            oracle_seconds,
            fit_seconds,
            selected: None,
            region: None,
            evaluations: 0,
        }],
    };

    let mut iteration = 0;
    while !stop && data.len() < config.budget {
        iteration += 1;
        let it = iteration as u64;
        let t = Instant::now();
        let sel = propose(&model, criterion, config.n_ref, config.n_cand, seed, it)?;
        let criterion_seconds = t.elapsed().as_secs_f64();

        let t = Instant::now();
        let y = oracle.query(&sel.point)?;
        let oracle_seconds = t.elapsed().as_secs_f64();

        let t = Instant::now();
        data.push(sel.point.clone(), y);
        let refit = iteration % config.refit_period == 0;
        model = if refit {
            let fit = FitConfig {
                seed: mix_seed(fit.seed, it),
                ..fit.clone()
            };
            model.set_fit_config(fit);
            model.add_observation(&sel.point, y, true)?
        } else {
            model.add_observation(&sel.point, y, false)?
        };
        let fit_seconds = t.elapsed().as_secs_f64();

        let (metric, s) = scoring.score(&model)?;
        stop = s;
        log::debug!(
            "iteration {iteration}: n={} region={} metric={metric:?}",
            data.len(),
            sel.region
        );
        curve.records.push(CurveRecord {
            iteration,
            n_samples: data.len(),
            metric,
            criterion_seconds,
            oracle_seconds,
            fit_seconds,
            selected: Some(sel.point),
            region: Some(sel.region),
            evaluations: sel.evaluations,
        });
    }
    Ok(LoopOutcome { curve, model, data })
}

/// Draws the reference and candidate sets of active iteration `it` (from 1)
/// and selects one point. Should PALC's target region receive no candidates
/// from the global batch, a batch is drawn inside that region instead.
pub fn propose(
    model: &PartitionedGp,
    criterion: &Criterion,
    n_ref: usize,
    n_cand: usize,
    seed: u64,
    it: u64,
) -> Result<Selection> {
    let space = model.space();
    let reference = if criterion.strategy.uses_reference() {
        let pts = lhd(space, n_ref, mix_seed(seed, REFERENCE + 2 * it)).points;
        Some(criterion.reference_set(pts)?)
    } else {
        None
    };
    let cand_seed = mix_seed(seed, CANDIDATE + 2 * it);
    let cands = lhd(space, n_cand, cand_seed);
    match select_next(model, criterion, &cands, reference.as_ref()) {
        Err(Error::EmptyCandidates) if criterion.strategy == Strategy::Palc => {
            let reference = reference.as_ref().expect("palc uses a reference set");
            let scorer = PartitionedScorer::new(model, reference)?;
            let m = scorer.global.best;
            log::debug!("no global candidates in region {m}; sampling inside it");
            let inside = lhd_in_region(model.classifier(), m, n_cand, mix_seed(cand_seed, 1))?;
            scorer.best_local(model, m, &inside.points)
        }
        other => other,
    }
}
