//! Metrics, evaluation sets, replicated experiments and their CSV exports.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;

use crate::active::{run_loop, Criterion, CurveRecord, LearningCurve, LoopConfig, PartitionSpec, Strategy};
use crate::dataset::Dataset;
use crate::designs::{lhd_maximin, DEFAULT_RESTARTS};
use crate::error::{check_dim, Error, Result};
use crate::fmt_f64;
use crate::kernels::KernelFamily;
use crate::oracles::Oracle;
use crate::partition::DesignSpace;
use crate::pgp::PartitionedGp;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Metric {
    Rmse,
    Mae,
    /// Mean of `|y − h(x)| / |y|`.
    Mre,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Rmse => "rmse",
            Metric::Mae => "mae",
            Metric::Mre => "mre",
        }
    }

    /// Compares predictions with truths. A zero truth under `Mre` is an error
    /// unless `exclude_zero` drops such points.
    pub fn compute(self, truths: &[f64], preds: &[f64], exclude_zero: bool) -> Result<f64> {
        check_dim(truths.len(), preds.len())?;
        if truths.is_empty() {
            return Err(Error::InvalidConfig("evaluation set is empty".into()));
        }
        let n = truths.len() as f64;
        let err = truths.iter().zip(preds).map(|(y, h)| y - h);
        match self {
            Metric::Rmse => Ok((err.map(|e| e * e).sum::<f64>() / n).sqrt()),
            Metric::Mae => Ok(err.map(f64::abs).sum::<f64>() / n),
            Metric::Mre => {
                let mut total = 0.0;
                let mut used = 0usize;
                for (i, (y, h)) in truths.iter().zip(preds).enumerate() {
                    if *y == 0.0 {
                        if exclude_zero {
                            continue;
                        }
                        return Err(Error::DivisionByZero { index: i });
                    }
                    total += (y - h).abs() / y.abs();
                    used += 1;
                }
                if used == 0 {
                    return Err(Error::DivisionByZero { index: 0 });
                }
                Ok(total / used as f64)
            }
        }
    }

    pub fn evaluate(self, model: &PartitionedGp, data: &Dataset, exclude_zero: bool) -> Result<f64> {
        evaluate_with(model, &data.points, &data.values, self, exclude_zero)
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rmse" => Ok(Metric::Rmse),
            "mae" => Ok(Metric::Mae),
            "mre" => Ok(Metric::Mre),
            _ => Err(Error::InvalidConfig(format!(
                "unknown metric `{s}` (expected rmse|mae|mre)"
            ))),
        }
    }
}

fn evaluate_with(
    model: &PartitionedGp,
    points: &[Vec<f64>],
    truths: &[f64],
    metric: Metric,
    exclude_zero: bool,
) -> Result<f64> {
    check_dim(points.len(), truths.len())?;
    let preds = points
        .iter()
        .map(|x| model.predict(x).map(|p| p.mean))
        .collect::<Result<Vec<_>>>()?;
    metric.compute(truths, &preds, exclude_zero)
}

/// Metric of the model's posterior mean at `points` against `truths`.
pub fn evaluate(model: &PartitionedGp, points: &[Vec<f64>], truths: &[f64], metric: Metric) -> Result<f64> {
    evaluate_with(model, points, truths, metric, false)
}

/// A fixed test set and the metric reported on it.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub data: Dataset,
    pub metric: Metric,
    pub exclude_zero: bool,
}

impl Evaluation {
    pub fn new(data: Dataset, metric: Metric) -> Self {
        Evaluation {
            data,
            metric,
            exclude_zero: false,
        }
    }

    pub fn score(&self, model: &PartitionedGp) -> Result<f64> {
        self.metric.evaluate(model, &self.data, self.exclude_zero)
    }
}

/// Space-filling evaluation set: a maximin LHD of `n` points labelled with
/// the oracle's noise-free truth.
pub fn evaluation_set(oracle: &dyn Oracle, space: &DesignSpace, n: usize, seed: u64) -> Result<Dataset> {
    let design = lhd_maximin(space, n, seed, DEFAULT_RESTARTS);
    let truths = design
        .points
        .iter()
        .map(|x| oracle.truth(x))
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(design.points, truths)
}

pub type OracleFactory = Arc<dyn Fn(u64) -> Result<Box<dyn Oracle>> + Send + Sync>;

/// Everything needed to replicate one strategy.
#[derive(Clone)]
pub struct ExperimentSpec {
    pub space: DesignSpace,
    /// Builds a fresh oracle from a replication seed.
    pub oracle: OracleFactory,
    pub partition: PartitionSpec,
    pub criterion: Criterion,
    pub family: KernelFamily,
    /// Per-replication loop settings; `seed` is the base seed.
    pub loop_config: LoopConfig,
    pub replications: usize,
    pub jobs: usize,
}

impl fmt::Debug for ExperimentSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ExperimentSpec")
            .field("space", &self.space)
            .field("partition", &self.partition)
            .field("criterion", &self.criterion)
            .field("family", &self.family)
            .field("loop_config", &self.loop_config)
            .field("replications", &self.replications)
            .field("jobs", &self.jobs)
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationResult {
    pub replication: usize,
    pub seed: u64,
    pub final_metric: f64,
    pub criterion_seconds: f64,
    pub curve: LearningCurve,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationFailure {
    pub replication: usize,
    pub seed: u64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub strategy: Strategy,
    pub metric: Metric,
    pub dim: usize,
    pub replications: Vec<ReplicationResult>,
    pub failures: Vec<ReplicationFailure>,
    pub mean: f64,
    /// Sample standard deviation (0 for a single replication).
    pub sd: f64,
    /// Mean over replications of the total criterion time.
    pub mean_time: f64,
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let sd = if v.len() > 1 {
        (v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, sd)
}

impl ExperimentReport {
    pub fn from_replications(
        strategy: Strategy,
        metric: Metric,
        dim: usize,
        replications: Vec<ReplicationResult>,
        failures: Vec<ReplicationFailure>,
    ) -> Result<Self> {
        if replications.is_empty() {
            return Err(Error::InvalidConfig("report needs at least one replication".into()));
        }
        let finals: Vec<f64> = replications.iter().map(|r| r.final_metric).collect();
        let (mean, sd) = mean_sd(&finals);
        let times: Vec<f64> = replications.iter().map(|r| r.criterion_seconds).collect();
        let (mean_time, _) = mean_sd(&times);
        Ok(ExperimentReport {
            strategy,
            metric,
            dim,
            replications,
            failures,
            mean,
            sd,
            mean_time,
        })
    }

    pub fn finals(&self) -> Vec<f64> {
        self.replications.iter().map(|r| r.final_metric).collect()
    }
}

fn run_replication(spec: &ExperimentSpec, r: usize) -> Result<ReplicationResult> {
    let seed = spec.loop_config.seed.wrapping_add(r as u64);
    let mut oracle = (spec.oracle)(seed)?;
    let cfg = LoopConfig {
        seed,
        ..spec.loop_config.clone()
    };
    let out = run_loop(
        oracle.as_mut(),
        &spec.space,
        &spec.partition,
        &spec.criterion,
        spec.family,
        &cfg,
    )?;
    let final_metric = out
        .curve
        .last_metric()
        .ok_or_else(|| Error::InvalidConfig("experiments need an evaluation set".into()))?;
    Ok(ReplicationResult {
        replication: r,
        seed,
        final_metric,
        criterion_seconds: out.curve.total_criterion_seconds(),
        curve: out.curve,
    })
}

/// Runs `replications` independent sessions with seeds `seed + r`, on up to
/// `jobs` threads. Results are ordered by replication index regardless of
/// scheduling. Failed replications are kept in the report; the call fails
/// only when every replication does.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    if spec.replications == 0 {
        return Err(Error::InvalidConfig("replications must be >= 1".into()));
    }
    if spec.loop_config.evaluation.is_none() {
        return Err(Error::InvalidConfig("experiments need an evaluation set".into()));
    }
    let slots: Vec<Mutex<Option<Result<ReplicationResult>>>> =
        (0..spec.replications).map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let workers = spec.jobs.clamp(1, spec.replications);
    thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let r = next.fetch_add(1, Ordering::Relaxed);
                if r >= spec.replications {
                    break;
                }
                let res = run_replication(spec, r);
                *slots[r].lock().expect("slot lock") = Some(res);
            });
        }
    });
    let mut done = Vec::new();
    let mut failures = Vec::new();
    let mut first_err = None;
    for (r, slot) in slots.into_iter().enumerate() {
        match slot.into_inner().expect("slot lock").expect("every replication ran") {
            Ok(res) => done.push(res),
            Err(e) => {
                let seed = spec.loop_config.seed.wrapping_add(r as u64);
                log::error!("replication {r} (seed {seed}) failed: {e}");
                failures.push(ReplicationFailure {
                    replication: r,
                    seed,
                    message: e.to_string(),
                });
                first_err.get_or_insert(e);
            }
        }
    }
    if done.is_empty() {
        return Err(first_err.expect("at least one failure"));
    }
    let metric = spec.loop_config.evaluation.as_ref().map_or(Metric::Rmse, |e| e.metric);
    ExperimentReport::from_replications(spec.criterion.strategy, metric, spec.space.dim(), done, failures)
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| Error::Csv {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

pub const REPORT_FILE: &str = "report.csv";
pub const SUMMARY_FILE: &str = "summary.csv";

pub fn curve_file(replication: usize) -> String {
    format!("curve_{replication}.csv")
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// Writes a learning curve with columns
/// `iteration,n,metric,time,x_1..x_d,region,evaluations`.
pub fn write_curve(curve: &LearningCurve, dim: usize, path: &Path) -> Result<()> {
    let map = csv_err(path);
    let mut w = csv::Writer::from_path(path).map_err(&map)?;
    let mut header = vec!["iteration".to_string(), "n".into(), "metric".into(), "time".into()];
    header.extend((1..=dim).map(|j| format!("x_{j}")));
    header.extend(["region".to_string(), "evaluations".into()]);
    w.write_record(&header).map_err(&map)?;
    for r in &curve.records {
        let mut row = vec![
            r.iteration.to_string(),
            r.n_samples.to_string(),
            opt(r.metric.map(fmt_f64)),
            fmt_f64(r.criterion_seconds),
        ];
        match &r.selected {
            Some(x) => row.extend(x.iter().map(|v| fmt_f64(*v))),
            None => row.extend(std::iter::repeat_n(String::new(), dim)),
        }
        row.push(opt(r.region));
        row.push(r.evaluations.to_string());
        w.write_record(&row).map_err(&map)?;
    }
    w.flush()?;
    Ok(())
}

fn parse_opt<T: FromStr>(path: &Path, s: &str) -> Result<Option<T>> {
    if s.is_empty() {
        return Ok(None);
    }
    s.parse().map(Some).map_err(|_| Error::Csv {
        path: path.to_path_buf(),
        message: format!("cannot parse field `{s}`"),
    })
}

fn parse_req<T: FromStr>(path: &Path, s: &str) -> Result<T> {
    parse_opt(path, s)?.ok_or_else(|| Error::Csv {
        path: path.to_path_buf(),
        message: "missing required field".into(),
    })
}

/// Reads a curve written by [`write_curve`]. Oracle and fit times are not
/// stored and come back as zero.
pub fn read_curve(path: &Path) -> Result<(LearningCurve, usize)> {
    let map = csv_err(path);
    let mut rdr = csv::Reader::from_path(path).map_err(&map)?;
    let header = rdr.headers().map_err(&map)?.clone();
    let dim = header.len().checked_sub(6).ok_or_else(|| Error::Csv {
        path: path.to_path_buf(),
        message: "too few columns".into(),
    })?;
    let mut records = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(&map)?;
        let f = |i: usize| rec.get(i).unwrap_or("");
        let xs: Vec<Option<f64>> = (0..dim).map(|j| parse_opt(path, f(4 + j))).collect::<Result<_>>()?;
        let selected = xs
            .iter()
            .all(Option::is_some)
            .then(|| xs.iter().flatten().copied().collect());
        records.push(CurveRecord {
            iteration: parse_req(path, f(0))?,
            n_samples: parse_req(path, f(1))?,
            metric: parse_opt(path, f(2))?,
            criterion_seconds: parse_req(path, f(3))?,
            oracle_seconds: 0.0,
            fit_seconds: 0.0,
            selected: if dim == 0 { None } else { selected },
            region: parse_opt(path, f(4 + dim))?,
            evaluations: parse_req(path, f(5 + dim))?,
        });
    }
    Ok((LearningCurve { records }, dim))
}

/// Writes `curve_<r>.csv` per replication, `report.csv` with one row per
/// replication (strategy, replication, seed, final metric), and
/// `summary.csv` with the aggregate `(strategy, mean, sd, mean_time)`.
///
/// `report.csv` carries no timings, so it is byte-identical across reruns.
pub fn export_curves(report: &ExperimentReport, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for r in &report.replications {
        let path = dir.join(curve_file(r.replication));
        write_curve(&r.curve, report.dim, &path)?;
        written.push(path.clone());
    }

    let path = dir.join(REPORT_FILE);
    let map = csv_err(&path);
    let mut w = csv::Writer::from_path(&path).map_err(&map)?;
    w.write_record(["strategy", "metric", "replication", "seed", "final_metric"])
        .map_err(&map)?;
    for r in &report.replications {
        w.write_record([
            report.strategy.name().to_string(),
            report.metric.name().to_string(),
            r.replication.to_string(),
            r.seed.to_string(),
            fmt_f64(r.final_metric),
        ])
        .map_err(&map)?;
    }
    w.flush()?;
    written.push(path.clone());

    let path = dir.join(SUMMARY_FILE);
    let map = csv_err(&path);
    let mut w = csv::Writer::from_path(&path).map_err(&map)?;
    w.write_record(["strategy", "mean", "sd", "mean_time"]).map_err(&map)?;
    w.write_record([
        report.strategy.name().to_string(),
        fmt_f64(report.mean),
        fmt_f64(report.sd),
        fmt_f64(report.mean_time),
    ])
    .map_err(&map)?;
    w.flush()?;
    written.push(path.clone());
    Ok(written)
}

/// Rebuilds a report from the files of [`export_curves`]. Statistics are
/// recomputed from the per-replication values.
pub fn import_report(dir: &Path) -> Result<ExperimentReport> {
    let path = dir.join(REPORT_FILE);
    let map = csv_err(&path);
    let mut rdr = csv::Reader::from_path(&path).map_err(&map)?;
    let mut strategy = None;
    let mut metric = None;
    let mut replications = Vec::new();
    let mut dim = 0;
    for rec in rdr.records() {
        let rec = rec.map_err(&map)?;
        let f = |i: usize| rec.get(i).unwrap_or("");
        strategy = Some(f(0).parse::<Strategy>()?);
        metric = Some(f(1).parse::<Metric>()?);
        let replication: usize = parse_req(&path, f(2))?;
        let (curve, d) = read_curve(&dir.join(curve_file(replication)))?;
        dim = d;
        replications.push(ReplicationResult {
            replication,
            seed: parse_req(&path, f(3))?,
            final_metric: parse_req(&path, f(4))?,
            criterion_seconds: curve.total_criterion_seconds(),
            curve,
        });
    }
    let (Some(strategy), Some(metric)) = (strategy, metric) else {
        return Err(Error::Csv {
            path: path.clone(),
            message: "no replications".into(),
        });
    };
    ExperimentReport::from_replications(strategy, metric, dim, replications, Vec::new())
}
