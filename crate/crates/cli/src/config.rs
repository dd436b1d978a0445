//! Experiment configuration files (TOML, unknown keys rejected).

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use palc_core::partition::{Comparison, ExplicitRule, Threshold};
use palc_core::{
    evaluation_set, AskTellFiles, Criterion, Dataset, DesignSpace, EarlyStop, Evaluation, ExperimentSpec, FitConfig,
    KernelFamily, LoopConfig, Metric, Oracle, OracleFactory, PartitionSpec, RegionClassifier, Strategy, Synthetic,
    TableLookup, TestFunction,
};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub space: SpaceConfig,
    pub oracle: OracleConfig,
    #[serde(default)]
    pub partition: PartitionConfig,
    #[serde(default)]
    pub model: ModelConfig,
    pub active: ActiveConfig,
    #[serde(default)]
    pub experiment: RunConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub early_stop: Option<EarlyStopConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceConfig {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum OracleConfig {
    Sine1d {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        noise_variance: Option<f64>,
    },
    Hetero2d {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        noise_variance: Option<f64>,
    },
    /// Stored `x_1..x_d,y` table.
    Table { file: PathBuf },
    /// External simulator answering through files in `dir`.
    AskTell {
        dir: PathBuf,
        #[serde(default = "default_poll")]
        poll_seconds: f64,
        #[serde(default = "default_timeout")]
        timeout_seconds: f64,
    },
}

fn default_poll() -> f64 {
    1.0
}

fn default_timeout() -> f64 {
    86_400.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdConfig {
    /// 1-based input dimension, as in the `x_j` column names.
    pub dim: usize,
    /// `">="` or `"<"`.
    pub op: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuleConfig {
    pub region: usize,
    pub all_of: Vec<ThresholdConfig>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PartitionConfig {
    #[default]
    Single,
    Explicit {
        regions: usize,
        #[serde(default)]
        default_region: usize,
        rules: Vec<RuleConfig>,
    },
    /// Labeled seed points, CSV with header `x_1..x_d,label`.
    Seeds {
        file: PathBuf,
    },
    Estimate {
        regions: usize,
        k: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default = "default_kernel")]
    pub kernel: String,
    #[serde(default = "one")]
    pub refit_period: usize,
    #[serde(default = "default_restarts")]
    pub fit_restarts: usize,
    #[serde(default = "default_max_iter")]
    pub fit_max_iter: usize,
}

fn default_kernel() -> String {
    "rbf".into()
}

fn one() -> usize {
    1
}

fn default_restarts() -> usize {
    5
}

fn default_max_iter() -> usize {
    200
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            kernel: default_kernel(),
            refit_period: 1,
            fit_restarts: default_restarts(),
            fit_max_iter: default_max_iter(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActiveConfig {
    pub strategy: String,
    pub n_initial: usize,
    pub budget: usize,
    #[serde(default = "default_n_ref")]
    pub n_ref: usize,
    #[serde(default = "default_n_cand")]
    pub n_cand: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub top_fraction: Option<f64>,
}

fn default_n_ref() -> usize {
    1000
}

fn default_n_cand() -> usize {
    200
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "one")]
    pub replications: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_metric")]
    pub metric: String,
    #[serde(default = "default_eval_points")]
    pub eval_points: usize,
    #[serde(default = "default_eval_seed")]
    pub eval_seed: u64,
    /// Test set `x_1..x_d,y` used instead of a generated one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval_file: Option<PathBuf>,
    #[serde(default)]
    pub exclude_zero: bool,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default = "one")]
    pub jobs: usize,
}

fn default_metric() -> String {
    "rmse".into()
}

fn default_eval_points() -> usize {
    1000
}

fn default_eval_seed() -> u64 {
    7
}

fn default_output() -> PathBuf {
    PathBuf::from("palc-out")
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            replications: 1,
            seed: 0,
            metric: default_metric(),
            eval_points: default_eval_points(),
            eval_seed: default_eval_seed(),
            eval_file: None,
            exclude_zero: false,
            output: default_output(),
            jobs: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EarlyStopConfig {
    #[serde(default = "default_metric")]
    pub metric: String,
    pub test_file: PathBuf,
    pub target: f64,
}

fn config_err(field: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{field}: {msg}"))
}

/// A loaded config plus the directory its relative paths resolve against.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    pub base_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut cfg: ExperimentConfig = toml::from_str(text).map_err(|e| {
            let msg = e.message().to_string();
            CliError::Config(msg.lines().next().unwrap_or("malformed config").to_string())
        })?;
        cfg.fill_defaults();
        Ok(cfg)
    }

    fn fill_defaults(&mut self) {
        match &mut self.oracle {
            OracleConfig::Sine1d { noise_variance } => {
                noise_variance.get_or_insert(TestFunction::Sine1d.default_noise_variance());
            }
            OracleConfig::Hetero2d { noise_variance } => {
                noise_variance.get_or_insert(TestFunction::Hetero2d.default_noise_variance());
            }
            _ => {}
        }
    }

    /// The effective configuration with every default written out.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn strategy(&self) -> Result<Strategy, CliError> {
        self.active
            .strategy
            .parse()
            .map_err(|e: palc_core::Error| config_err("active.strategy", e))
    }

    pub fn kernel(&self) -> Result<KernelFamily, CliError> {
        self.model
            .kernel
            .parse()
            .map_err(|e: palc_core::Error| config_err("model.kernel", e))
    }

    pub fn metric(&self) -> Result<Metric, CliError> {
        self.experiment
            .metric
            .parse()
            .map_err(|e: palc_core::Error| config_err("experiment.metric", e))
    }

    pub fn space(&self) -> Result<DesignSpace, CliError> {
        DesignSpace::new(self.space.lower.clone(), self.space.upper.clone()).map_err(|e| config_err("space", e))
    }

    fn test_function(&self) -> Option<(TestFunction, f64)> {
        match self.oracle {
            OracleConfig::Sine1d { noise_variance } => Some((TestFunction::Sine1d, noise_variance.unwrap_or(0.0))),
            OracleConfig::Hetero2d { noise_variance } => Some((TestFunction::Hetero2d, noise_variance.unwrap_or(0.0))),
            _ => None,
        }
    }

    /// Checks field ranges and cross-field consistency, and that every
    /// referenced file exists.
    pub fn validate(&self, base_dir: &Path) -> Result<(), CliError> {
        let space = self.space()?;
        let d = space.dim();
        self.strategy()?;
        self.kernel()?;
        self.metric()?;

        let a = &self.active;
        if a.n_initial < 1 {
            return Err(config_err("active.n_initial", "must be >= 1"));
        }
        if a.budget <= a.n_initial {
            return Err(config_err(
                "active.budget",
                format!("must exceed active.n_initial ({} <= {})", a.budget, a.n_initial),
            ));
        }
        if a.n_ref < 1 {
            return Err(config_err("active.n_ref", "must be >= 1"));
        }
        if a.n_cand < 1 {
            return Err(config_err("active.n_cand", "must be >= 1"));
        }
        if let Some(q) = a.top_fraction {
            if !(q > 0.0 && q <= 1.0) {
                return Err(config_err(
                    "active.top_fraction",
                    format!("must lie in (0, 1], got {q}"),
                ));
            }
        }
        if self.model.refit_period < 1 {
            return Err(config_err("model.refit_period", "must be >= 1"));
        }
        if self.model.fit_max_iter < 1 {
            return Err(config_err("model.fit_max_iter", "must be >= 1"));
        }

        if let Some((f, noise)) = self.test_function() {
            let home = f.space();
            if home.dim() != d {
                return Err(config_err(
                    "space",
                    format!(
                        "{} is {}-dimensional but the space has {d} bounds",
                        f.name(),
                        home.dim()
                    ),
                ));
            }
            let inside = (0..d).all(|j| space.lower()[j] >= home.lower()[j] && space.upper()[j] <= home.upper()[j]);
            if !inside {
                return Err(config_err(
                    "space",
                    format!(
                        "bounds must lie within the {} domain {:?}..{:?}",
                        f.name(),
                        home.lower(),
                        home.upper()
                    ),
                ));
            }
            if !(noise >= 0.0 && noise.is_finite()) {
                return Err(config_err(
                    "oracle.noise_variance",
                    format!("must be finite and >= 0, got {noise}"),
                ));
            }
        }
        match &self.oracle {
            OracleConfig::Table { file } => require_file("oracle.file", base_dir, file)?,
            OracleConfig::AskTell {
                poll_seconds,
                timeout_seconds,
                ..
            } => {
                if !(*poll_seconds > 0.0 && poll_seconds.is_finite()) {
                    return Err(config_err("oracle.poll_seconds", "must be positive"));
                }
                if !(*timeout_seconds > 0.0 && timeout_seconds.is_finite()) {
                    return Err(config_err("oracle.timeout_seconds", "must be positive"));
                }
            }
            _ => {}
        }

        match &self.partition {
            PartitionConfig::Single => {}
            PartitionConfig::Explicit {
                regions,
                default_region,
                rules,
            } => {
                if *regions < 1 {
                    return Err(config_err("partition.regions", "must be >= 1"));
                }
                if default_region >= regions {
                    return Err(config_err("partition.default_region", format!("must be < {regions}")));
                }
                for r in rules {
                    if r.region >= *regions {
                        return Err(config_err(
                            "partition.rules.region",
                            format!("{} must be < {regions}", r.region),
                        ));
                    }
                    for t in &r.all_of {
                        if t.dim < 1 || t.dim > d {
                            return Err(config_err(
                                "partition.rules.all_of.dim",
                                format!("{} not in 1..={d}", t.dim),
                            ));
                        }
                        parse_op(&t.op)?;
                    }
                }
            }
            PartitionConfig::Seeds { file } => require_file("partition.file", base_dir, file)?,
            PartitionConfig::Estimate { regions, k } => {
                if *regions < 2 {
                    return Err(config_err(
                        "partition.regions",
                        "estimated partitions need >= 2 regions",
                    ));
                }
                if *k < 1 {
                    return Err(config_err("partition.k", "must be >= 1"));
                }
                if a.n_initial < 2 * regions {
                    return Err(config_err(
                        "active.n_initial",
                        format!(
                            "estimating {regions} regions needs at least {} initial samples",
                            2 * regions
                        ),
                    ));
                }
            }
        }

        let e = &self.experiment;
        if e.replications < 1 {
            return Err(config_err("experiment.replications", "must be >= 1"));
        }
        if e.jobs < 1 {
            return Err(config_err("experiment.jobs", "must be >= 1"));
        }
        match &e.eval_file {
            Some(f) => require_file("experiment.eval_file", base_dir, f)?,
            None => {
                if e.eval_points < 1 {
                    return Err(config_err("experiment.eval_points", "must be >= 1"));
                }
                if self.test_function().is_none() {
                    return Err(config_err(
                        "experiment.eval_file",
                        "required when the oracle has no noise-free truth",
                    ));
                }
            }
        }
        if let Some(es) = &self.early_stop {
            es.metric
                .parse::<Metric>()
                .map_err(|e| config_err("early_stop.metric", e))?;
            require_file("early_stop.test_file", base_dir, &es.test_file)?;
            if es.target.is_nan() {
                return Err(config_err("early_stop.target", "must be a number"));
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<LoadedConfig, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let config = ExperimentConfig::parse(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        config.validate(&base_dir)?;
        Ok(LoadedConfig { config, base_dir })
    }
}

fn parse_op(op: &str) -> Result<Comparison, CliError> {
    match op {
        ">=" => Ok(Comparison::AtLeast),
        "<" => Ok(Comparison::Below),
        _ => Err(config_err(
            "partition.rules.all_of.op",
            format!("expected \">=\" or \"<\", got {op:?}"),
        )),
    }
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn require_file(field: &str, base: &Path, p: &Path) -> Result<(), CliError> {
    let full = resolve(base, p);
    if full.is_file() {
        Ok(())
    } else {
        Err(config_err(field, format!("file {} does not exist", full.display())))
    }
}

fn read_dataset(field: &str, base: &Path, p: &Path) -> Result<Dataset, CliError> {
    Dataset::read_csv(&resolve(base, p)).map_err(|e| config_err(field, e))
}

impl LoadedConfig {
    pub fn resolve(&self, p: &Path) -> PathBuf {
        resolve(&self.base_dir, p)
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(&self.config.experiment.output)
    }

    pub fn space(&self) -> Result<DesignSpace, CliError> {
        self.config.space()
    }

    pub fn partition(&self) -> Result<PartitionSpec, CliError> {
        let space = self.space()?;
        Ok(match &self.config.partition {
            PartitionConfig::Single => PartitionSpec::Single,
            PartitionConfig::Explicit {
                regions,
                default_region,
                rules,
            } => {
                let rules = rules
                    .iter()
                    .map(|r| {
                        let all_of = r
                            .all_of
                            .iter()
                            .map(|t| {
                                Ok(Threshold {
                                    dim: t.dim - 1,
                                    cmp: parse_op(&t.op)?,
                                    value: t.value,
                                })
                            })
                            .collect::<Result<Vec<_>, CliError>>()?;
                        Ok(ExplicitRule {
                            region: r.region,
                            all_of,
                        })
                    })
                    .collect::<Result<Vec<_>, CliError>>()?;
                let g = RegionClassifier::explicit(space, *regions, rules, *default_region)
                    .map_err(|e| config_err("partition", e))?;
                PartitionSpec::Given(g)
            }
            PartitionConfig::Seeds { file } => {
                let g = RegionClassifier::voronoi_from_csv(space, &self.resolve(file))
                    .map_err(|e| config_err("partition.file", e))?;
                PartitionSpec::Given(g)
            }
            PartitionConfig::Estimate { regions, k } => PartitionSpec::Estimate {
                regions: *regions,
                k: *k,
            },
        })
    }

    /// Oracle constructor keyed by replication seed.
    pub fn oracle_factory(&self) -> Result<OracleFactory, CliError> {
        let space = self.space()?;
        Ok(match &self.config.oracle {
            OracleConfig::Sine1d { noise_variance } => synthetic(TestFunction::Sine1d, noise_variance.unwrap_or(0.0)),
            OracleConfig::Hetero2d { noise_variance } => {
                synthetic(TestFunction::Hetero2d, noise_variance.unwrap_or(0.0))
            }
            OracleConfig::Table { file } => {
                let data = read_dataset("oracle.file", &self.base_dir, file)?;
                let table = TableLookup::new(space, data).map_err(|e| config_err("oracle.file", e))?;
                Arc::new(move |_| Ok(Box::new(table.clone()) as Box<dyn Oracle>))
            }
            OracleConfig::AskTell {
                dir,
                poll_seconds,
                timeout_seconds,
            } => {
                let dir = self.resolve(dir);
                let poll = Duration::from_secs_f64(*poll_seconds);
                let timeout = Duration::from_secs_f64(*timeout_seconds);
                Arc::new(move |_| {
                    Ok(
                        Box::new(AskTellFiles::new(space.clone(), dir.clone()).with_timing(poll, timeout))
                            as Box<dyn Oracle>,
                    )
                })
            }
        })
    }

    pub fn criterion(&self, strategy: Strategy) -> Result<Criterion, CliError> {
        let c = Criterion::new(strategy);
        match self.config.active.top_fraction {
            Some(q) => c.with_top_fraction(q).map_err(|e| config_err("active.top_fraction", e)),
            None => Ok(c),
        }
    }

    pub fn fit_config(&self) -> FitConfig {
        FitConfig {
            restarts: self.config.model.fit_restarts,
            max_iter: self.config.model.fit_max_iter,
            ..FitConfig::default()
        }
    }

    fn evaluation(&self, factory: &OracleFactory) -> Result<Evaluation, CliError> {
        let e = &self.config.experiment;
        let data = match &e.eval_file {
            Some(f) => read_dataset("experiment.eval_file", &self.base_dir, f)?,
            None => {
                let oracle = factory(e.eval_seed).map_err(|err| CliError::Runtime(err.to_string()))?;
                evaluation_set(oracle.as_ref(), &self.space()?, e.eval_points, e.eval_seed)
                    .map_err(|err| config_err("experiment.eval_points", err))?
            }
        };
        Ok(Evaluation {
            data,
            metric: self.config.metric()?,
            exclude_zero: e.exclude_zero,
        })
    }

    pub fn early_stop(&self) -> Result<Option<EarlyStop>, CliError> {
        self.config
            .early_stop
            .as_ref()
            .map(|es| {
                Ok(EarlyStop {
                    metric: es.metric.parse().map_err(|e| config_err("early_stop.metric", e))?,
                    test: read_dataset("early_stop.test_file", &self.base_dir, &es.test_file)?,
                    target: es.target,
                })
            })
            .transpose()
    }

    /// Full experiment description, with optional overrides of the base seed
    /// and strategy.
    pub fn experiment_spec(
        &self,
        seed: Option<u64>,
        strategy: Option<Strategy>,
        jobs: Option<usize>,
    ) -> Result<ExperimentSpec, CliError> {
        let c = &self.config;
        let strategy = match strategy {
            Some(s) => s,
            None => c.strategy()?,
        };
        let oracle = self.oracle_factory()?;
        let evaluation = self.evaluation(&oracle)?;
        Ok(ExperimentSpec {
            space: self.space()?,
            oracle,
            partition: self.partition()?,
            criterion: self.criterion(strategy)?,
            family: c.kernel()?,
            loop_config: LoopConfig {
                n_initial: c.active.n_initial,
                budget: c.active.budget,
                n_ref: c.active.n_ref,
                n_cand: c.active.n_cand,
                refit_period: c.model.refit_period,
                early_stop: self.early_stop()?,
                evaluation: Some(evaluation),
                fit: self.fit_config(),
                seed: seed.unwrap_or(c.experiment.seed),
            },
            replications: c.experiment.replications,
            jobs: jobs.unwrap_or(c.experiment.jobs),
        })
    }
}

fn synthetic(f: TestFunction, noise_variance: f64) -> OracleFactory {
    let sd = noise_variance.sqrt();
    Arc::new(move |seed| Ok(Box::new(Synthetic::new(f, sd, seed)?) as Box<dyn Oracle>))
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[space]
lower = [0.0]
upper = [1.0]

[oracle]
kind = "sine1d"

[active]
strategy = "palc"
n_initial = 10
budget = 30
"#;

    #[test]
    fn defaults_are_filled() {
        let c = ExperimentConfig::parse(MINIMAL).unwrap();
        assert_eq!(
            c.oracle,
            OracleConfig::Sine1d {
                noise_variance: Some(1e-4)
            }
        );
        assert_eq!(c.partition, PartitionConfig::Single);
        assert_eq!((c.active.n_ref, c.active.n_cand), (1000, 200));
        assert_eq!(c.experiment.replications, 1);
        c.validate(Path::new(".")).unwrap();
    }

    #[test]
    fn normalized_output_reparses() {
        let c = ExperimentConfig::parse(MINIMAL).unwrap();
        assert_eq!(ExperimentConfig::parse(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = MINIMAL.replace("budget = 30", "budget = 30\nbudgett = 3");
        assert!(matches!(ExperimentConfig::parse(&text), Err(CliError::Config(_))));
        let text = MINIMAL.replace("kind = \"sine1d\"", "kind = \"sine1d\"\nfile = \"x.csv\"");
        assert!(ExperimentConfig::parse(&text).is_err());
    }

    #[test]
    fn field_diagnostics() {
        let check = |from: &str, to: &str, field: &str| {
            let c = ExperimentConfig::parse(&MINIMAL.replace(from, to)).unwrap();
            match c.validate(Path::new(".")) {
                Err(CliError::Config(m)) => assert!(m.starts_with(field), "{m}"),
                other => panic!("expected config error, got {other:?}"),
            }
        };
        check("budget = 30", "budget = 10", "active.budget");
        check("budget = 30", "budget = 30\ntop_fraction = 1.5", "active.top_fraction");
        check("upper = [1.0]", "upper = [0.0]", "space");
        check("strategy = \"palc\"", "strategy = \"pal\"", "active.strategy");
    }
}
