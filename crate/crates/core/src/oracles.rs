//! Query targets: synthetic test functions with Gaussian noise, stored
//! tables, and a file-based ask/tell bridge to external simulators.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};
use std::thread;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::dataset::Dataset;
use crate::error::{check_dim, Error, Result};
use crate::fmt_f64;
use crate::partition::DesignSpace;

/// Something that returns (possibly noisy) observations at design points.
pub trait Oracle {
    fn space(&self) -> &DesignSpace;

    fn query(&mut self, x: &[f64]) -> Result<f64>;

    /// Noise-free response, where known.
    fn truth(&self, _x: &[f64]) -> Result<f64> {
        Err(Error::Unsupported("this oracle has no noise-free ground truth"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TestFunction {
    /// `2x·sin(8πx³)` on `[0, 1]`.
    Sine1d,
    /// `x₁·exp(−x₁² − x₂²)` on `[−2, 6]²`.
    Hetero2d,
}

impl TestFunction {
    pub fn name(self) -> &'static str {
        match self {
            TestFunction::Sine1d => "sine1d",
            TestFunction::Hetero2d => "hetero2d",
        }
    }

    pub fn space(self) -> DesignSpace {
        match self {
            TestFunction::Sine1d => DesignSpace::unit(1),
            TestFunction::Hetero2d => DesignSpace::new(vec![-2.0; 2], vec![6.0; 2]).expect("valid box"),
        }
    }

    /// Noise variance used in the reference studies.
    pub fn default_noise_variance(self) -> f64 {
        match self {
            TestFunction::Sine1d => 1e-4,
            TestFunction::Hetero2d => 1e-6,
        }
    }

    pub fn eval(self, x: &[f64]) -> f64 {
        match self {
            TestFunction::Sine1d => 2.0 * x[0] * (8.0 * PI * x[0].powi(3)).sin(),
            TestFunction::Hetero2d => x[0] * (-x[0] * x[0] - x[1] * x[1]).exp(),
        }
    }
}

impl std::str::FromStr for TestFunction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sine1d" => Ok(TestFunction::Sine1d),
            "hetero2d" => Ok(TestFunction::Hetero2d),
            _ => Err(Error::InvalidConfig(format!(
                "unknown test function `{s}` (expected sine1d|hetero2d)"
            ))),
        }
    }
}

/// A closed-form test function plus seeded Gaussian noise.
#[derive(Debug, Clone)]
pub struct Synthetic {
    function: TestFunction,
    space: DesignSpace,
    noise: Normal<f64>,
    rng: ChaCha8Rng,
}

impl Synthetic {
    pub fn new(function: TestFunction, noise_sd: f64, seed: u64) -> Result<Self> {
        let noise = Normal::new(0.0, noise_sd)
            .map_err(|_| Error::InvalidConfig(format!("noise sd must be finite and >= 0, got {noise_sd}")))?;
        Ok(Synthetic {
            function,
            space: function.space(),
            noise,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn function(&self) -> TestFunction {
        self.function
    }

    pub fn noise_sd(&self) -> f64 {
        self.noise.std_dev()
    }
}

impl Oracle for Synthetic {
    fn space(&self) -> &DesignSpace {
        &self.space
    }

    fn query(&mut self, x: &[f64]) -> Result<f64> {
        let f = self.truth(x)?;
        if self.noise.std_dev() == 0.0 {
            return Ok(f);
        }
        Ok(f + self.noise.sample(&mut self.rng))
    }

    fn truth(&self, x: &[f64]) -> Result<f64> {
        check_dim(self.space.dim(), x.len())?;
        let x = self.space.admit(x)?;
        Ok(self.function.eval(&x))
    }
}

/// Replays stored observations; a query must hit a stored point within 1e-9.
#[derive(Debug, Clone)]
pub struct TableLookup {
    space: DesignSpace,
    data: Dataset,
}

impl TableLookup {
    pub const TOLERANCE: f64 = 1e-9;

    pub fn new(space: DesignSpace, data: Dataset) -> Result<Self> {
        for p in &data.points {
            check_dim(space.dim(), p.len())?;
        }
        Ok(TableLookup { space, data })
    }

    pub fn from_csv(space: DesignSpace, path: &Path) -> Result<Self> {
        TableLookup::new(space, Dataset::read_csv(path)?)
    }

    pub fn data(&self) -> &Dataset {
        &self.data
    }
}

impl Oracle for TableLookup {
    fn space(&self) -> &DesignSpace {
        &self.space
    }

    fn query(&mut self, x: &[f64]) -> Result<f64> {
        check_dim(self.space.dim(), x.len())?;
        let x = self.space.admit(x)?;
        let mut best: Option<(f64, usize)> = None;
        for (i, p) in self.data.points.iter().enumerate() {
            let d = p.iter().zip(&x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            if best.is_none_or(|(b, _)| d < b) {
                best = Some((d, i));
            }
        }
        match best {
            Some((d, i)) if d <= Self::TOLERANCE => Ok(self.data.values[i]),
            _ => Err(Error::NoSuchRecord { point: x }),
        }
    }
}

/// Hands each query to an external process through files in `dir`:
/// writes `query_<iter>.csv` and waits for `answer_<iter>.csv`.
#[derive(Debug, Clone)]
pub struct AskTellFiles {
    space: DesignSpace,
    dir: PathBuf,
    iteration: usize,
    poll: Duration,
    timeout: Duration,
}

impl AskTellFiles {
    pub const DEFAULT_POLL: Duration = Duration::from_secs(1);
    pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(24 * 3600);

    pub fn new(space: DesignSpace, dir: impl Into<PathBuf>) -> Self {
        AskTellFiles {
            space,
            dir: dir.into(),
            iteration: 0,
            poll: Self::DEFAULT_POLL,
            timeout: Self::DEFAULT_TIMEOUT,
        }
    }

    pub fn with_timing(mut self, poll: Duration, timeout: Duration) -> Self {
        self.poll = poll;
        self.timeout = timeout;
        self
    }

    pub fn query_path(&self, iteration: usize) -> PathBuf {
        self.dir.join(format!("query_{iteration}.csv"))
    }

    pub fn answer_path(&self, iteration: usize) -> PathBuf {
        self.dir.join(format!("answer_{iteration}.csv"))
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    fn write_query(&self, x: &[f64]) -> Result<()> {
        fs::create_dir_all(&self.dir)?;
        let header: Vec<String> = (1..=x.len()).map(|j| format!("x_{j}")).collect();
        let row: Vec<String> = x.iter().map(|v| fmt_f64(*v)).collect();
        let body = format!("{}\n{}\n", header.join(","), row.join(","));
        // rename so a watcher never sees a half-written file
        let tmp = self.dir.join(format!(".query_{}.tmp", self.iteration));
        fs::write(&tmp, body)?;
        fs::rename(&tmp, self.query_path(self.iteration))?;
        Ok(())
    }
}

/// First numeric field in the file; a non-numeric header line is skipped.
fn parse_answer(path: &Path, text: &str) -> Result<Option<f64>> {
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
        let field = line.split(',').next().unwrap_or("").trim();
        match field.parse::<f64>() {
            Ok(v) if v.is_finite() => return Ok(Some(v)),
            Ok(v) => {
                return Err(Error::OracleFailure(format!(
                    "{}: non-finite answer {v}",
                    path.display()
                )));
            }
            Err(_) => continue,
        }
    }
    Ok(None)
}

impl Oracle for AskTellFiles {
    fn space(&self) -> &DesignSpace {
        &self.space
    }

    fn query(&mut self, x: &[f64]) -> Result<f64> {
        check_dim(self.space.dim(), x.len())?;
        let x = self.space.admit(x)?;
        self.write_query(&x)?;
        let answer = self.answer_path(self.iteration);
        let start = Instant::now();
        loop {
            if answer.exists() {
                let text = fs::read_to_string(&answer)?;
                // the writer may not have finished; retry on the next poll
                if let Some(y) = parse_answer(&answer, &text)? {
                    self.iteration += 1;
                    return Ok(y);
                }
            }
            if start.elapsed() >= self.timeout {
                return Err(Error::OracleTimeout(answer));
            }
            thread::sleep(self.poll.min(self.timeout.saturating_sub(start.elapsed())));
        }
    }
}
