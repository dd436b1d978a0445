use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use palc_core::{
    estimate_partition, export_curves, fmt_f64, lhd_maximin, mix_seed, propose, run_experiment, uniform_random,
    Dataset, ExperimentReport, FitConfig, PartitionSpec, PartitionedGp, RegionClassifier, Strategy, FIT_STREAM,
    INITIAL_STREAM, PASSIVE_STREAM,
};

use crate::config::{ExperimentConfig, LoadedConfig};
use crate::CliError;

/// Config file inside a suggest state directory.
pub const STATE_CONFIG: &str = "config.toml";
/// Observations so far, `x_1..x_d,y`.
pub const STATE_DATA: &str = "data.csv";
/// Metadata of the latest suggestion.
pub const SUGGESTION_FILE: &str = "suggestion.csv";
/// Replications that failed during `run`.
pub const FAILURES_FILE: &str = "failures.csv";

const MAXIMIN_RESTARTS: usize = 50;

#[derive(Debug, Clone, Default)]
pub struct RunOverrides {
    pub out: Option<PathBuf>,
    pub jobs: Option<usize>,
    pub seed: Option<u64>,
    pub strategy: Option<String>,
}

/// Runs the configured experiment and writes curves, `report.csv` and
/// `summary.csv` to the output directory.
pub fn cmd_run(config_path: &Path, overrides: &RunOverrides) -> Result<ExperimentReport, CliError> {
    let loaded = ExperimentConfig::load(config_path)?;
    let strategy = overrides
        .strategy
        .as_deref()
        .map(|s| {
            s.parse::<Strategy>()
                .map_err(|e| CliError::Config(format!("--strategy-override: {e}")))
        })
        .transpose()?;
    if overrides.jobs == Some(0) {
        return Err(CliError::Config("--jobs: must be >= 1".into()));
    }
    let spec = loaded.experiment_spec(overrides.seed, strategy, overrides.jobs)?;
    let out = overrides.out.clone().unwrap_or_else(|| loaded.output_dir());
    log::info!(
        "running {} x{} ({} threads) into {}",
        spec.criterion.strategy,
        spec.replications,
        spec.jobs,
        out.display()
    );
    let report = run_experiment(&spec)?;
    export_curves(&report, &out)?;
    let failures = out.join(FAILURES_FILE);
    if report.failures.is_empty() {
        if failures.exists() {
            fs::remove_file(&failures)?;
        }
    } else {
        let mut w = csv::Writer::from_path(&failures).map_err(|e| CliError::Runtime(e.to_string()))?;
        w.write_record(["replication", "seed", "message"])
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        for f in &report.failures {
            w.write_record([f.replication.to_string(), f.seed.to_string(), f.message.clone()])
                .map_err(|e| CliError::Runtime(e.to_string()))?;
        }
        w.flush()?;
    }
    Ok(report)
}

/// Prints a normalized config with every default made explicit.
pub fn cmd_validate(config_path: &Path) -> Result<String, CliError> {
    let loaded = ExperimentConfig::load(config_path)?;
    loaded.partition()?;
    loaded.oracle_factory()?;
    loaded.early_stop()?;
    Ok(loaded.config.to_toml())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Suggestion {
    /// Number of observations the suggestion was computed from.
    pub n: usize,
    pub phase: &'static str,
    pub point: Vec<f64>,
    pub region: Option<usize>,
    pub score: Option<f64>,
    pub evaluations: usize,
}

impl Suggestion {
    pub fn csv_row(&self) -> String {
        self.point.iter().map(|v| fmt_f64(*v)).collect::<Vec<_>>().join(",")
    }
}

fn read_state(dir: &Path, loaded: &LoadedConfig) -> Result<Dataset, CliError> {
    let path = dir.join(STATE_DATA);
    if !path.exists() {
        return Ok(Dataset::default());
    }
    let data = Dataset::read_csv(&path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    let space = loaded.space()?;
    for x in &data.points {
        space.admit(x)?;
    }
    Ok(data)
}

/// Chooses the next point for the observations in `state_dir/data.csv`.
///
/// Below `n_initial` the next point of the initial maximin design is
/// returned; afterwards the configured strategy selects from a model trained
/// on all observations. The result depends only on the config and the data,
/// so asking twice gives the same point.
pub fn cmd_suggest(state_dir: &Path) -> Result<Suggestion, CliError> {
    let loaded = ExperimentConfig::load(&state_dir.join(STATE_CONFIG))?;
    let cfg = &loaded.config;
    let data = read_state(state_dir, &loaded)?;
    let n = data.len();
    let budget = cfg.active.budget;
    if n >= budget {
        return Err(CliError::BudgetReached(n));
    }
    let space = loaded.space()?;
    let strategy = cfg.strategy()?;
    let seed = cfg.experiment.seed;

    let suggestion = if strategy.is_passive() {
        let design = match strategy {
            Strategy::Lhd => lhd_maximin(&space, budget, mix_seed(seed, PASSIVE_STREAM), MAXIMIN_RESTARTS),
            _ => uniform_random(&space, budget, mix_seed(seed, PASSIVE_STREAM)),
        };
        Suggestion {
            n,
            phase: "passive",
            point: design.points[n].clone(),
            region: None,
            score: None,
            evaluations: 0,
        }
    } else if n < cfg.active.n_initial {
        let design = lhd_maximin(
            &space,
            cfg.active.n_initial,
            mix_seed(seed, INITIAL_STREAM),
            MAXIMIN_RESTARTS,
        );
        Suggestion {
            n,
            phase: "initial",
            point: design.points[n].clone(),
            region: None,
            score: None,
            evaluations: 0,
        }
    } else {
        let classifier = match (strategy.is_partitioned(), loaded.partition()?) {
            (false, _) | (true, PartitionSpec::Single) => RegionClassifier::single(space.clone()),
            (true, PartitionSpec::Given(c)) => c,
            (true, PartitionSpec::Estimate { regions, k }) => {
                let m = cfg.active.n_initial;
                let head = Dataset::new(data.points[..m].to_vec(), data.values[..m].to_vec())?;
                estimate_partition(&space, &head, regions, k)?
            }
        };
        let fit = FitConfig {
            seed: mix_seed(seed, FIT_STREAM),
            ..loaded.fit_config()
        };
        let model = PartitionedGp::train(classifier, &data, cfg.kernel()?, &fit)?;
        let it = (n - cfg.active.n_initial + 1) as u64;
        let sel = propose(
            &model,
            &loaded.criterion(strategy)?,
            cfg.active.n_ref,
            cfg.active.n_cand,
            seed,
            it,
        )?;
        Suggestion {
            n,
            phase: "active",
            point: sel.point,
            region: Some(sel.region),
            score: Some(sel.score),
            evaluations: sel.evaluations,
        }
    };
    write_suggestion(&state_dir.join(SUGGESTION_FILE), &suggestion)?;
    Ok(suggestion)
}

fn write_suggestion(path: &Path, s: &Suggestion) -> Result<(), CliError> {
    let d = s.point.len();
    let mut header = vec![
        "n".to_string(),
        "phase".into(),
        "region".into(),
        "score".into(),
        "evaluations".into(),
    ];
    header.extend((1..=d).map(|j| format!("x_{j}")));
    let mut row = vec![
        s.n.to_string(),
        s.phase.to_string(),
        s.region.map(|r| r.to_string()).unwrap_or_default(),
        s.score.map(fmt_f64).unwrap_or_default(),
        s.evaluations.to_string(),
    ];
    row.extend(s.point.iter().map(|v| fmt_f64(*v)));
    let mut f = fs::File::create(path)?;
    writeln!(f, "{}", header.join(","))?;
    writeln!(f, "{}", row.join(","))?;
    Ok(())
}
