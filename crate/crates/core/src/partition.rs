//! Design space and the region classifier `g: Ω → [M]`.
//!
//! Region indices are zero-based throughout.

use std::path::Path;

use crate::dataset::Dataset;
use crate::error::{check_dim, Error, Result};

const DOMAIN_SLACK: f64 = 1e-12;

/// Axis-aligned box `Ω = ∏ [lower_j, upper_j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignSpace {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl DesignSpace {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        check_dim(lower.len(), upper.len())?;
        if lower.is_empty() {
            return Err(Error::InvalidConfig("design space needs at least one dimension".into()));
        }
        for (j, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::InvalidConfig(format!(
                    "bounds of dimension {}: lower {lo} must be below upper {hi}",
                    j + 1
                )));
            }
        }
        Ok(DesignSpace { lower, upper })
    }

    pub fn unit(dim: usize) -> Self {
        DesignSpace {
            lower: vec![0.0; dim],
            upper: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn ranges(&self) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(l, u)| u - l).collect()
    }

    /// Returns `x` clamped into Ω if it lies within `1e-12` of it.
    pub fn admit(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), x.len())?;
        let mut out = Vec::with_capacity(x.len());
        for ((v, lo), hi) in x.iter().zip(&self.lower).zip(&self.upper) {
            if !(*v >= lo - DOMAIN_SLACK && *v <= hi + DOMAIN_SLACK) {
                return Err(Error::OutOfDomain { point: x.to_vec() });
            }
            out.push(v.clamp(*lo, *hi));
        }
        Ok(out)
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.admit(x).is_ok()
    }

    /// Maps into the unit cube.
    pub fn normalize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.lower)
            .zip(&self.upper)
            .map(|((v, lo), hi)| (v - lo) / (hi - lo))
            .collect()
    }

    /// Maps from the unit cube into Ω.
    pub fn denormalize(&self, t: &[f64]) -> Vec<f64> {
        t.iter()
            .zip(&self.lower)
            .zip(&self.upper)
            .map(|((v, lo), hi)| lo + v * (hi - lo))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Comparison {
    /// `x_j ≥ c`
    AtLeast,
    /// `x_j < c`
    Below,
}

/// One per-dimension threshold predicate.
#[derive(Debug, Clone, PartialEq)]
pub struct Threshold {
    pub dim: usize,
    pub cmp: Comparison,
    pub value: f64,
}

impl Threshold {
    fn holds(&self, x: &[f64]) -> bool {
        match self.cmp {
            Comparison::AtLeast => x[self.dim] >= self.value,
            Comparison::Below => x[self.dim] < self.value,
        }
    }
}

/// A conjunction of thresholds mapping to a region. Rules are tried in order;
/// the first match wins.
#[derive(Debug, Clone, PartialEq)]
pub struct ExplicitRule {
    pub region: usize,
    pub all_of: Vec<Threshold>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Rule {
    Explicit {
        rules: Vec<ExplicitRule>,
        default_region: usize,
    },
    VoronoiSeeds {
        seeds: Vec<Vec<f64>>,
        labels: Vec<usize>,
    },
    KnnEstimated {
        points: Vec<Vec<f64>>,
        labels: Vec<usize>,
        k: usize,
    },
}

/// Total, deterministic map from Ω to region indices `0..M`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionClassifier {
    space: DesignSpace,
    num_regions: usize,
    rule: Rule,
    /// Normalized copies of seed/labeled points for nearest-neighbour rules.
    anchors: Vec<Vec<f64>>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Indices of `anchors` sorted by distance to `t`, ties by index.
fn nearest(anchors: &[Vec<f64>], t: &[f64]) -> Vec<(f64, usize)> {
    let mut d: Vec<(f64, usize)> = anchors.iter().enumerate().map(|(i, a)| (sq_dist(a, t), i)).collect();
    d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    d
}

fn check_labels(labels: &[usize]) -> Result<usize> {
    let m = labels.iter().max().map_or(0, |m| m + 1);
    if m == 0 {
        return Err(Error::InvalidConfig(
            "classifier needs at least one labeled point".into(),
        ));
    }
    for r in 0..m {
        if !labels.contains(&r) {
            return Err(Error::InvalidConfig(format!(
                "region {r} has no labeled point; labels must cover 0..{m}"
            )));
        }
    }
    Ok(m)
}

impl RegionClassifier {
    /// Everything in region 0.
    pub fn single(space: DesignSpace) -> Self {
        RegionClassifier {
            space,
            num_regions: 1,
            rule: Rule::Explicit {
                rules: Vec::new(),
                default_region: 0,
            },
            anchors: Vec::new(),
        }
    }

    pub fn explicit(
        space: DesignSpace,
        num_regions: usize,
        rules: Vec<ExplicitRule>,
        default_region: usize,
    ) -> Result<Self> {
        if num_regions == 0 {
            return Err(Error::InvalidConfig("num_regions must be >= 1".into()));
        }
        if default_region >= num_regions {
            return Err(Error::InvalidConfig(format!(
                "default region {default_region} out of range 0..{num_regions}"
            )));
        }
        for r in &rules {
            if r.region >= num_regions {
                return Err(Error::InvalidConfig(format!(
                    "rule region {} out of range 0..{num_regions}",
                    r.region
                )));
            }
            if let Some(t) = r.all_of.iter().find(|t| t.dim >= space.dim()) {
                return Err(Error::InvalidConfig(format!(
                    "threshold on dimension {} but space has {}",
                    t.dim + 1,
                    space.dim()
                )));
            }
        }
        Ok(RegionClassifier {
            space,
            num_regions,
            rule: Rule::Explicit { rules, default_region },
            anchors: Vec::new(),
        })
    }

    /// Two regions split at `x_dim ≥ threshold` (region 1) versus the rest.
    pub fn heaviside(space: DesignSpace, dim: usize, threshold: f64) -> Result<Self> {
        let rule = ExplicitRule {
            region: 1,
            all_of: vec![Threshold {
                dim,
                cmp: Comparison::AtLeast,
                value: threshold,
            }],
        };
        Self::explicit(space, 2, vec![rule], 0)
    }

    /// Nearest labeled seed (normalized Euclidean distance, ties to the lower
    /// seed index).
    pub fn voronoi(space: DesignSpace, seeds: Vec<Vec<f64>>, labels: Vec<usize>) -> Result<Self> {
        check_dim(seeds.len(), labels.len())?;
        let num_regions = check_labels(&labels)?;
        let anchors = seeds
            .iter()
            .map(|s| space.admit(s).map(|s| space.normalize(&s)))
            .collect::<Result<Vec<_>>>()?;
        Ok(RegionClassifier {
            space,
            num_regions,
            rule: Rule::VoronoiSeeds { seeds, labels },
            anchors,
        })
    }

    /// Majority vote among the `k` nearest labeled points.
    pub fn knn(space: DesignSpace, points: Vec<Vec<f64>>, labels: Vec<usize>, k: usize) -> Result<Self> {
        check_dim(points.len(), labels.len())?;
        if k == 0 {
            return Err(Error::InvalidConfig("k_neighbors must be >= 1".into()));
        }
        let num_regions = check_labels(&labels)?;
        let anchors = points
            .iter()
            .map(|s| space.admit(s).map(|s| space.normalize(&s)))
            .collect::<Result<Vec<_>>>()?;
        Ok(RegionClassifier {
            space,
            num_regions,
            rule: Rule::KnnEstimated { points, labels, k },
            anchors,
        })
    }

    /// Loads a seed CSV with header `x_1..x_d,label`.
    pub fn voronoi_from_csv(space: DesignSpace, path: &Path) -> Result<Self> {
        let csv_err = |message: String| Error::Csv {
            path: path.to_path_buf(),
            message,
        };
        let mut rdr = csv::Reader::from_path(path).map_err(|e| csv_err(e.to_string()))?;
        let headers = rdr.headers().map_err(|e| csv_err(e.to_string()))?.clone();
        let d = space.dim();
        let expected: Vec<String> = (1..=d)
            .map(|j| format!("x_{j}"))
            .chain(std::iter::once("label".to_string()))
            .collect();
        if headers.iter().map(str::trim).ne(expected.iter().map(String::as_str)) {
            return Err(csv_err(format!("header must be {}", expected.join(","))));
        }
        let (mut seeds, mut labels) = (Vec::new(), Vec::new());
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| csv_err(e.to_string()))?;
            let bad = |e: String| csv_err(format!("row {}: {e}", line + 1));
            let x = rec
                .iter()
                .take(d)
                .map(|s| s.trim().parse::<f64>().map_err(|e| bad(e.to_string())))
                .collect::<Result<Vec<_>>>()?;
            let label = rec
                .get(d)
                .ok_or_else(|| bad("missing label".into()))?
                .trim()
                .parse::<usize>()
                .map_err(|e| bad(e.to_string()))?;
            seeds.push(x);
            labels.push(label);
        }
        Self::voronoi(space, seeds, labels)
    }

    pub fn space(&self) -> &DesignSpace {
        &self.space
    }

    pub fn num_regions(&self) -> usize {
        self.num_regions
    }

    pub fn rule(&self) -> &Rule {
        &self.rule
    }

    /// Region of `x`.
    pub fn classify(&self, x: &[f64]) -> Result<usize> {
        let x = self.space.admit(x)?;
        Ok(match &self.rule {
            Rule::Explicit { rules, default_region } => rules
                .iter()
                .find(|r| r.all_of.iter().all(|t| t.holds(&x)))
                .map_or(*default_region, |r| r.region),
            Rule::VoronoiSeeds { labels, .. } => {
                let t = self.space.normalize(&x);
                labels[nearest(&self.anchors, &t)[0].1]
            }
            Rule::KnnEstimated { labels, k, .. } => {
                let t = self.space.normalize(&x);
                let near = nearest(&self.anchors, &t);
                let near = &near[..(*k).min(near.len())];
                let mut votes = vec![0usize; self.num_regions];
                for (_, i) in near {
                    votes[labels[*i]] += 1;
                }
                let top = *votes.iter().max().unwrap_or(&0);
                // tie between labels: the nearest neighbour among them decides
                near.iter()
                    .map(|(_, i)| labels[*i])
                    .find(|l| votes[*l] == top)
                    .unwrap_or(0)
            }
        })
    }

    /// Partitions indices of `points` by region.
    pub fn classify_batch(&self, points: &[Vec<f64>]) -> Result<Vec<Vec<usize>>> {
        let mut out = vec![Vec::new(); self.num_regions];
        for (i, x) in points.iter().enumerate() {
            out[self.classify(x)?].push(i);
        }
        Ok(out)
    }
}

/// Finite-difference slope scores: for each sample, the largest
/// `|y_i − y_j| / ‖x_i − x_j‖` over its `k` nearest neighbours, distances
/// measured in the unit-normalized space.
pub fn slope_scores(space: &DesignSpace, data: &Dataset, k: usize) -> Result<Vec<f64>> {
    let norm: Vec<Vec<f64>> = data
        .points
        .iter()
        .map(|x| space.admit(x).map(|x| space.normalize(&x)))
        .collect::<Result<_>>()?;
    let mut any_pair = false;
    let scores = norm
        .iter()
        .enumerate()
        .map(|(i, xi)| {
            let mut d: Vec<(f64, usize)> = norm
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(j, xj)| (sq_dist(xi, xj).sqrt(), j))
                .filter(|(dist, _)| *dist > 1e-12)
                .collect();
            d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            d.truncate(k);
            any_pair |= !d.is_empty();
            d.iter()
                .map(|(dist, j)| (data.values[i] - data.values[*j]).abs() / dist)
                .fold(0.0, f64::max)
        })
        .collect();
    if !any_pair {
        return Err(Error::DegenerateData(
            "no distinct point pairs for finite differences".into(),
        ));
    }
    Ok(scores)
}

fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// One-dimensional k-means initialized at the `i/(M+1)` quantiles.
///
/// Returns labels sorted so that cluster 0 has the smallest mean; empty
/// clusters are dropped.
pub fn kmeans_1d(scores: &[f64], m: usize) -> Vec<usize> {
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut centroids: Vec<f64> = (1..=m)
        .map(|i| quantile_sorted(&sorted, i as f64 / (m + 1) as f64))
        .collect();
    let assign = |c: &[f64]| -> Vec<usize> {
        scores
            .iter()
            .map(|s| {
                let mut best = 0;
                for j in 1..c.len() {
                    if (s - c[j]).abs() < (s - c[best]).abs() {
                        best = j;
                    }
                }
                best
            })
            .collect()
    };
    let mut labels = assign(&centroids);
    for _ in 0..100 {
        for (j, c) in centroids.iter_mut().enumerate() {
            let members: Vec<f64> = scores
                .iter()
                .zip(&labels)
                .filter(|(_, l)| **l == j)
                .map(|(s, _)| *s)
                .collect();
            if !members.is_empty() {
                *c = members.iter().sum::<f64>() / members.len() as f64;
            }
        }
        let next = assign(&centroids);
        if next == labels {
            break;
        }
        labels = next;
    }
    let mut used: Vec<usize> = (0..m).filter(|j| labels.contains(j)).collect();
    used.sort_by(|a, b| centroids[*a].total_cmp(&centroids[*b]).then(a.cmp(b)));
    let mut remap = vec![0; m];
    for (new, old) in used.iter().enumerate() {
        remap[*old] = new;
    }
    labels.iter().map(|l| remap[*l]).collect()
}

/// Estimates a partition from initial samples by clustering finite-difference
/// slope scores into `m` groups and generalizing the labels with a k-nearest
/// neighbour vote. Region 0 is the flattest.
///
/// When the scores carry no heterogeneity signal the result falls back to a
/// single region.
pub fn estimate_partition(
    space: &DesignSpace,
    data: &Dataset,
    m: usize,
    k_neighbors: usize,
) -> Result<RegionClassifier> {
    if m < 2 {
        return Err(Error::InvalidConfig("estimated partitions need M >= 2".into()));
    }
    if data.len() < 2 * m {
        return Err(Error::InvalidConfig(format!(
            "estimating {m} regions needs at least {} samples, got {}",
            2 * m,
            data.len()
        )));
    }
    if k_neighbors == 0 {
        return Err(Error::InvalidConfig("k_neighbors must be >= 1".into()));
    }
    let scores = slope_scores(space, data, k_neighbors)?;
    let (lo, hi) = scores
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), s| (a.min(*s), b.max(*s)));
    if hi - lo <= 1e-12 * hi.abs().max(1.0) {
        log::warn!("slope scores are uniform; falling back to a single region");
        return Ok(RegionClassifier::single(space.clone()));
    }
    let labels = kmeans_1d(&scores, m);
    let found = labels.iter().max().map_or(0, |l| l + 1);
    if found < m {
        log::warn!("partition estimate produced {found} of {m} requested regions");
    }
    if found < 2 {
        return Ok(RegionClassifier::single(space.clone()));
    }
    RegionClassifier::knn(space.clone(), data.points.clone(), labels, k_neighbors)
}
