//! Space-filling and random designs over Ω.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::fmt_f64;
use crate::partition::{DesignSpace, RegionClassifier};

pub const DEFAULT_RESTARTS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Generator {
    Lhd,
    MaximinLhd,
    UniformRandom,
    Grid,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignBatch {
    pub points: Vec<Vec<f64>>,
    pub generator: Generator,
    pub seed: u64,
}

impl DesignBatch {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Writes the batch as CSV with header `x_1..x_d`.
    pub fn write_csv(&self, path: &Path, dim: usize) -> Result<()> {
        let map = |e: csv::Error| Error::Csv {
            path: path.to_path_buf(),
            message: e.to_string(),
        };
        let mut w = csv::Writer::from_path(path).map_err(map)?;
        w.write_record((1..=dim).map(|j| format!("x_{j}"))).map_err(map)?;
        for p in &self.points {
            w.write_record(p.iter().map(|v| fmt_f64(*v))).map_err(map)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Derives an independent stream seed from a base seed and a tag
/// (splitmix64 finalizer).
pub fn mix_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed
        ^ stream
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(0x632B_E59B_D9B4_E019);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Random Latin hypercube in the unit cube: column `j` places one point in
/// each stratum `[i/n, (i+1)/n)`.
pub(crate) fn unit_lhs(n: usize, d: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    let mut pts = vec![vec![0.0; d]; n];
    let mut strata: Vec<usize> = (0..n).collect();
    for j in 0..d {
        strata.shuffle(rng);
        for (p, s) in pts.iter_mut().zip(&strata) {
            let u: f64 = rng.random();
            p[j] = (*s as f64 + u) / n as f64;
        }
    }
    pts
}

fn min_pairwise_sq(points: &[Vec<f64>]) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..points.len() {
        for j in 0..i {
            let d: f64 = points[i].iter().zip(&points[j]).map(|(a, b)| (a - b) * (a - b)).sum();
            best = best.min(d);
        }
    }
    best
}

/// Smallest pairwise Euclidean distance, in normalized coordinates.
pub fn min_pairwise_distance(space: &DesignSpace, points: &[Vec<f64>]) -> f64 {
    let norm: Vec<Vec<f64>> = points.iter().map(|p| space.normalize(p)).collect();
    min_pairwise_sq(&norm).sqrt()
}

/// Plain random Latin hypercube.
pub fn lhd(space: &DesignSpace, n: usize, seed: u64) -> DesignBatch {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pts = unit_lhs(n, space.dim(), &mut rng);
    DesignBatch {
        points: pts.iter().map(|t| space.denormalize(t)).collect(),
        generator: Generator::Lhd,
        seed,
    }
}

/// Best of `restarts` random Latin hypercubes by minimum pairwise distance
/// (normalized coordinates). The first restart is exactly [`lhd`] with the
/// same seed.
pub fn lhd_maximin(space: &DesignSpace, n: usize, seed: u64, restarts: usize) -> DesignBatch {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = unit_lhs(n, space.dim(), &mut rng);
    let mut best_score = min_pairwise_sq(&best);
    for _ in 1..restarts.max(1) {
        let cand = unit_lhs(n, space.dim(), &mut rng);
        let score = min_pairwise_sq(&cand);
        if score > best_score {
            best = cand;
            best_score = score;
        }
    }
    DesignBatch {
        points: best.iter().map(|t| space.denormalize(t)).collect(),
        generator: Generator::MaximinLhd,
        seed,
    }
}

/// I.i.d. uniform points over Ω.
pub fn uniform_random(space: &DesignSpace, n: usize, seed: u64) -> DesignBatch {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = (0..n)
        .map(|_| {
            let t: Vec<f64> = (0..space.dim()).map(|_| rng.random()).collect();
            space.denormalize(&t)
        })
        .collect();
    DesignBatch {
        points,
        generator: Generator::UniformRandom,
        seed,
    }
}

/// Full tensor grid with `per_dim` levels per axis, endpoints included.
pub fn grid(space: &DesignSpace, per_dim: usize) -> DesignBatch {
    let d = space.dim();
    let total = per_dim.pow(d as u32);
    let level = |i: usize| {
        if per_dim == 1 {
            0.5
        } else {
            i as f64 / (per_dim - 1) as f64
        }
    };
    let points = (0..total)
        .map(|mut idx| {
            let t: Vec<f64> = (0..d)
                .map(|_| {
                    let v = level(idx % per_dim);
                    idx /= per_dim;
                    v
                })
                .collect();
            space.denormalize(&t)
        })
        .collect();
    DesignBatch {
        points,
        generator: Generator::Grid,
        seed: 0,
    }
}

/// Members of `batch` in region `m`, order preserved.
pub fn filter_to_region(batch: &DesignBatch, classifier: &RegionClassifier, m: usize) -> Result<DesignBatch> {
    let mut points = Vec::new();
    for p in &batch.points {
        if classifier.classify(p)? == m {
            points.push(p.clone());
        }
    }
    Ok(DesignBatch {
        points,
        generator: batch.generator,
        seed: batch.seed,
    })
}

/// `n` space-filling candidates inside region `m`: Latin hypercubes over the
/// bounding box, rejection-filtered to the region, at most `100·n` draws.
pub fn lhd_in_region(classifier: &RegionClassifier, m: usize, n: usize, seed: u64) -> Result<DesignBatch> {
    let space = classifier.space();
    let cap = 100 * n;
    let mut points = Vec::with_capacity(n);
    let mut draws = 0;
    let mut round = 0u64;
    while points.len() < n && draws < cap {
        let batch = lhd(space, n.min(cap - draws), mix_seed(seed, round));
        draws += batch.len();
        round += 1;
        for p in batch.points {
            if classifier.classify(&p)? == m {
                points.push(p);
                if points.len() == n {
                    break;
                }
            }
        }
    }
    if points.len() < n {
        return Err(Error::RegionTooSmall {
            region: m,
            found: points.len(),
            wanted: n,
            draws,
        });
    }
    Ok(DesignBatch {
        points,
        generator: Generator::Lhd,
        seed,
    })
}
