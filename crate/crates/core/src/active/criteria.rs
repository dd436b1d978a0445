use super::{Criterion, ReferenceSet, Strategy};
use crate::designs::DesignBatch;
use crate::error::{Error, Result};
use crate::gp::LocalGp;
use crate::kernels::cov_unchecked;
use crate::linalg::solve_lower;
use crate::pgp::PartitionedGp;

/// Normalized distance under which a candidate counts as a repeat of an
/// existing design point.
pub const COLLISION_TOL: f64 = 1e-9;

/// Outcome of one selection step.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub point: Vec<f64>,
    /// Position of the point in the candidate batch that was scored.
    pub index: usize,
    pub region: usize,
    /// The criterion value of the winner (variance, IMSE, or negated
    /// variance reduction, depending on the strategy).
    pub score: f64,
    /// Number of bordered-system (Cholesky append) evaluations performed.
    pub evaluations: usize,
    /// Global-search scores per region, when computed.
    pub global: Option<Vec<f64>>,
}

/// Global-search result: integrated predictive variance per region and the
/// argmax (lowest index on ties).
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalScores {
    pub per_region: Vec<f64>,
    pub best: usize,
}

/// Precomputed reference-set state for one local GP: `v_i = L⁻¹ k(X, s_i)`
/// and the current predictive variance `τ² + σ² − vᵢᵀvᵢ` at each reference
/// point (unclamped).
pub struct RegionScorer<'a> {
    gp: &'a LocalGp,
    refs: Vec<&'a [f64]>,
    weights: Vec<f64>,
    /// Row-major `refs.len() × n`.
    v: Vec<f64>,
    var: Vec<f64>,
    uniform: bool,
}

impl<'a> RegionScorer<'a> {
    /// Builds the scorer over the reference points at `indices`, keeping their
    /// global weights.
    pub fn new(gp: &'a LocalGp, reference: &'a ReferenceSet, indices: &[usize]) -> Result<Self> {
        let n = gp.len();
        let prior = gp.params().prior_variance();
        let mut v = Vec::with_capacity(indices.len() * n);
        let mut var = Vec::with_capacity(indices.len());
        let mut refs = Vec::with_capacity(indices.len());
        let mut weights = Vec::with_capacity(indices.len());
        for &i in indices {
            let s = reference.points()[i].as_slice();
            crate::error::check_dim(gp.dim(), s.len())?;
            let vi = solve_lower(gp.factor(), &gp.cross_cov(s))?;
            var.push(prior - vi.iter().map(|a| a * a).sum::<f64>());
            v.extend_from_slice(&vi);
            refs.push(s);
            weights.push(reference.weights()[i]);
        }
        Ok(RegionScorer {
            gp,
            refs,
            weights,
            v,
            var,
            uniform: reference.is_uniform(),
        })
    }

    pub fn len(&self) -> usize {
        self.refs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.refs.is_empty()
    }

    /// `Σ w_i Var_n(s_i)` over this scorer's reference points.
    pub fn integrated_variance(&self) -> f64 {
        self.weights.iter().zip(&self.var).map(|(w, v)| w * v).sum()
    }

    /// Last entries `v*_{n+1}(s_i)` of the bordered forward solves, one per
    /// reference point. Costs O(n² + N·n).
    fn bordered_tail(&self, x: &[f64]) -> Result<Vec<f64>> {
        let gp = self.gp;
        let n = gp.len();
        let (row, diag) = gp
            .factor()
            .bordered_row(&gp.cross_cov(x), gp.params().prior_variance())?;
        let p = gp.params();
        Ok(self
            .refs
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let vi = &self.v[i * n..(i + 1) * n];
                let dot: f64 = row.iter().zip(vi).map(|(a, b)| a * b).sum();
                (cov_unchecked(gp.family(), p, x, s) - dot) / diag
            })
            .collect())
    }

    /// `Σ w_i Var_{n+1}(s_i | x)` with hyperparameters frozen.
    pub fn imse(&self, x: &[f64]) -> Result<f64> {
        let tail = self.bordered_tail(x)?;
        Ok(self
            .weights
            .iter()
            .zip(&self.var)
            .zip(&tail)
            .map(|((w, var), t)| w * (var - t * t))
            .sum())
    }

    /// Value to minimize when comparing candidates inside this region. Under
    /// uniform weights the constant prior term is dropped and `−Σ v*²` is
    /// used; otherwise the full IMSE.
    pub fn local_objective(&self, x: &[f64]) -> Result<f64> {
        if self.uniform {
            let tail = self.bordered_tail(x)?;
            Ok(-tail.iter().map(|t| t * t).sum::<f64>())
        } else {
            self.imse(x)
        }
    }
}

fn collides(ranges: &[f64], gp: &LocalGp, x: &[f64]) -> bool {
    gp.points().iter().any(|p| {
        let d2: f64 = p
            .iter()
            .zip(x)
            .zip(ranges)
            .map(|((a, b), r)| ((a - b) / r).powi(2))
            .sum();
        d2.sqrt() < COLLISION_TOL
    })
}

/// Predictive variance at `x` from the owning region's GP.
pub fn score_alm(h: &PartitionedGp, x: &[f64]) -> Result<f64> {
    Ok(h.predict(x)?.variance)
}

/// Reference-weighted predictive variance after adding `x` to `gp`, over the whole
/// reference set.
pub fn score_imse_single(gp: &LocalGp, x: &[f64], reference: &ReferenceSet) -> Result<f64> {
    crate::error::check_dim(gp.dim(), x.len())?;
    let all: Vec<usize> = (0..reference.len()).collect();
    RegionScorer::new(gp, reference, &all)?.imse(x)
}

/// Per-region scorers plus global-search scores.
pub(crate) struct PartitionedScorer<'a> {
    pub scorers: Vec<RegionScorer<'a>>,
    pub global: GlobalScores,
}

impl<'a> PartitionedScorer<'a> {
    pub fn new(h: &'a PartitionedGp, reference: &'a ReferenceSet) -> Result<Self> {
        if reference.is_empty() {
            return Err(Error::EmptyReference);
        }
        let parts = h.classifier().classify_batch(reference.points())?;
        let scorers = parts
            .iter()
            .enumerate()
            .map(|(m, idx)| RegionScorer::new(h.local(m), reference, idx))
            .collect::<Result<Vec<_>>>()?;
        let per_region: Vec<f64> = scorers.iter().map(RegionScorer::integrated_variance).collect();
        let mut best = 0;
        for (m, v) in per_region.iter().enumerate() {
            if *v > per_region[best] {
                best = m;
            }
        }
        Ok(PartitionedScorer {
            scorers,
            global: GlobalScores { per_region, best },
        })
    }

    /// Smallest set of highest-scoring regions carrying at least fraction `q`
    /// of the total global mass; just the argmax when `q` is `None`.
    pub fn top_regions(&self, q: Option<f64>) -> Vec<usize> {
        let Some(q) = q else {
            return vec![self.global.best];
        };
        let scores = &self.global.per_region;
        let total: f64 = scores.iter().sum();
        let mut order: Vec<usize> = (0..scores.len()).collect();
        order.sort_by(|a, b| scores[*b].total_cmp(&scores[*a]).then(a.cmp(b)));
        let mut kept = Vec::new();
        let mut mass = 0.0;
        for m in order {
            kept.push(m);
            mass += scores[m];
            if total <= 0.0 || mass >= q * total {
                break;
            }
        }
        kept
    }

    /// Argmin of the local objective over `cands` (all in region `m`).
    pub fn best_local(&self, h: &PartitionedGp, m: usize, cands: &[Vec<f64>]) -> Result<Selection> {
        let mut sel = argmin_local(h, &self.scorers[m], m, cands)?;
        sel.global = Some(self.global.per_region.clone());
        Ok(sel)
    }

    /// Argmin of the full partitioned objective
    /// `Σ_{i≠m} J_G(i) + J_L(x)` over candidates whose region is allowed.
    pub fn best_full(&self, h: &PartitionedGp, cands: &[Vec<f64>], allowed: Option<&[usize]>) -> Result<Selection> {
        let total: f64 = self.global.per_region.iter().sum();
        let ranges = h.space().ranges();
        let mut best: Option<(usize, usize, f64)> = None;
        let mut evaluations = 0;
        for (i, x) in cands.iter().enumerate() {
            let m = h.region_of(x)?;
            if allowed.is_some_and(|a| !a.contains(&m)) || collides(&ranges, h.local(m), x) {
                continue;
            }
            evaluations += 1;
            let local = match self.scorers[m].imse(x) {
                Ok(s) => s,
                Err(Error::NotPositiveDefinite { .. }) => continue,
                Err(e) => return Err(e),
            };
            let score = (total - self.global.per_region[m]) + local;
            if best.is_none_or(|(_, _, b)| score < b) {
                best = Some((i, m, score));
            }
        }
        let (index, region, score) = best.ok_or(Error::EmptyCandidates)?;
        Ok(Selection {
            point: cands[index].clone(),
            index,
            region,
            score,
            evaluations,
            global: Some(self.global.per_region.clone()),
        })
    }
}

fn argmin_local(h: &PartitionedGp, scorer: &RegionScorer<'_>, m: usize, cands: &[Vec<f64>]) -> Result<Selection> {
    if scorer.is_empty() {
        return Err(Error::EmptyReference);
    }
    let ranges = h.space().ranges();
    let mut best: Option<(usize, f64)> = None;
    let mut evaluations = 0;
    for (i, x) in cands.iter().enumerate() {
        if collides(&ranges, h.local(m), x) {
            continue;
        }
        evaluations += 1;
        let score = match scorer.local_objective(x) {
            Ok(s) => s,
            Err(Error::NotPositiveDefinite { .. }) => continue,
            Err(e) => return Err(e),
        };
        if best.is_none_or(|(_, b)| score < b) {
            best = Some((i, score));
        }
    }
    let (index, score) = best.ok_or(Error::EmptyCandidates)?;
    Ok(Selection {
        point: cands[index].clone(),
        index,
        region: m,
        score,
        evaluations,
        global: None,
    })
}

/// `J_G(m) = Σ_{s_i ∈ Ω_m} w_i Var_m(s_i)` for every region, and its argmax.
pub fn global_search(h: &PartitionedGp, reference: &ReferenceSet) -> Result<GlobalScores> {
    Ok(PartitionedScorer::new(h, reference)?.global)
}

/// Minimizes the region-`m` IMSE over candidates in region `m`, integrating
/// over the reference points that fall in the region.
pub fn local_search(h: &PartitionedGp, m: usize, cands: &DesignBatch, reference: &ReferenceSet) -> Result<Selection> {
    if cands.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    for x in &cands.points {
        let r = h.region_of(x)?;
        if r != m {
            return Err(Error::InvalidConfig(format!(
                "candidate {x:?} lies in region {r}, not {m}"
            )));
        }
    }
    let idx: Vec<usize> = h.classifier().classify_batch(reference.points())?.swap_remove(m);
    if idx.is_empty() {
        return Err(Error::EmptyReference);
    }
    let scorer = RegionScorer::new(h.local(m), reference, &idx)?;
    argmin_local(h, &scorer, m, &cands.points)
}

fn argmax_variance(h: &PartitionedGp, cands: &[Vec<f64>]) -> Result<Selection> {
    let mut best: Option<(usize, usize, f64)> = None;
    for (i, x) in cands.iter().enumerate() {
        let p = h.predict(x)?;
        if best.is_none_or(|(_, _, b)| p.variance > b) {
            best = Some((i, p.region, p.variance));
        }
    }
    let (index, region, score) = best.ok_or(Error::EmptyCandidates)?;
    Ok(Selection {
        point: cands[index].clone(),
        index,
        region,
        score,
        evaluations: 0,
        global: None,
    })
}

fn require_single(h: &PartitionedGp, strategy: Strategy) -> Result<()> {
    if h.num_regions() == 1 {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!(
            "{strategy} scores a single GP but the model has {} regions",
            h.num_regions()
        )))
    }
}

/// Picks the next design point from `cands` under `criterion`.
///
/// `reference` is required by the IMSE-based strategies and ignored by the
/// variance-based ones. Ties go to the lowest candidate index.
pub fn select_next(
    h: &PartitionedGp,
    criterion: &Criterion,
    cands: &DesignBatch,
    reference: Option<&ReferenceSet>,
) -> Result<Selection> {
    if cands.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    let need_ref = || reference.ok_or(Error::EmptyReference);
    match criterion.strategy {
        Strategy::Alm => {
            require_single(h, Strategy::Alm)?;
            argmax_variance(h, &cands.points)
        }
        Strategy::Palm => argmax_variance(h, &cands.points),
        Strategy::Alc => {
            require_single(h, Strategy::Alc)?;
            let ps = PartitionedScorer::new(h, need_ref()?)?;
            let mut sel = ps.best_local(h, 0, &cands.points)?;
            sel.global = None;
            Ok(sel)
        }
        Strategy::PalcNoG => {
            let ps = PartitionedScorer::new(h, need_ref()?)?;
            ps.best_full(h, &cands.points, None)
        }
        Strategy::Palc => {
            let ps = PartitionedScorer::new(h, need_ref()?)?;
            let regions = ps.top_regions(criterion.top_fraction);
            if let [m] = regions[..] {
                // keep positions relative to the full batch
                let mut kept = Vec::new();
                let mut positions = Vec::new();
                for (i, x) in cands.points.iter().enumerate() {
                    if h.region_of(x)? == m {
                        kept.push(x.clone());
                        positions.push(i);
                    }
                }
                if kept.is_empty() {
                    return Err(Error::EmptyCandidates);
                }
                let mut sel = ps.best_local(h, m, &kept)?;
                sel.index = positions[sel.index];
                Ok(sel)
            } else {
                ps.best_full(h, &cands.points, Some(&regions))
            }
        }
        s @ (Strategy::Lhd | Strategy::Random) => Err(Error::InvalidConfig(format!(
            "{s} is a passive design and does not select points"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::designs::{lhd, Generator};
    use crate::gp::FitConfig;
    use crate::kernels::{kernel_gram, KernelFamily, KernelParams};
    use crate::partition::DesignSpace;
    use crate::partition::RegionClassifier;

    fn batch(points: Vec<Vec<f64>>) -> DesignBatch {
        DesignBatch {
            points,
            generator: Generator::Grid,
            seed: 0,
        }
    }

    fn params(scale: f64, l: f64, noise: f64) -> KernelParams {
        KernelParams::new(scale, vec![l], noise).unwrap()
    }

    #[test]
    fn observing_the_only_reference_point_removes_its_variance() {
        let gp = LocalGp::condition(
            KernelFamily::RbfArd,
            params(1.0, 0.3, 0.0),
            vec![vec![0.1], vec![0.9]],
            vec![1.0, -1.0],
        )
        .unwrap();
        let r = ReferenceSet::uniform(vec![vec![0.5]]).unwrap();
        assert!(score_imse_single(&gp, &[0.5], &r).unwrap().abs() < 1e-12);
    }

    #[test]
    fn prior_gp_closed_form() {
        let p = params(1.3, 0.4, 0.2);
        let gp = LocalGp::condition(KernelFamily::RbfArd, p.clone(), vec![], vec![]).unwrap();
        let refs = vec![vec![0.0], vec![0.25], vec![0.8]];
        let r = ReferenceSet::weighted(refs.clone(), vec![1.0, 2.0, 3.0]).unwrap();
        let x = [0.3];
        let expected: f64 = refs
            .iter()
            .zip(r.weights())
            .map(|(s, w)| {
                let k = cov_unchecked(KernelFamily::RbfArd, &p, s, &x);
                w * (p.prior_variance() - k * k / p.prior_variance())
            })
            .sum();
        assert!((score_imse_single(&gp, &x, &r).unwrap() - expected).abs() < 1e-14);
    }

    #[test]
    fn far_candidate_beats_existing_point() {
        let space = DesignSpace::unit(1);
        let gp = LocalGp::condition(KernelFamily::RbfArd, params(1.0, 0.1, 0.0), vec![vec![0.2]], vec![0.5]).unwrap();
        let h = PartitionedGp::from_locals(RegionClassifier::single(space.clone()), vec![gp]).unwrap();
        let r = ReferenceSet::uniform(lhd(&space, 50, 1).points).unwrap();
        let sel = local_search(&h, 0, &batch(vec![vec![0.2], vec![0.8]]), &r).unwrap();
        assert_eq!(sel.point, vec![0.8]);
        // the repeated point is guarded, not evaluated
        assert_eq!(sel.evaluations, 1);
    }

    #[test]
    fn single_candidate_is_returned() {
        let space = DesignSpace::unit(1);
        let gp = LocalGp::condition(KernelFamily::RbfArd, params(1.0, 0.2, 0.01), vec![vec![0.5]], vec![0.0]).unwrap();
        let h = PartitionedGp::from_locals(RegionClassifier::single(space.clone()), vec![gp]).unwrap();
        let r = ReferenceSet::uniform(lhd(&space, 10, 1).points).unwrap();
        let sel = local_search(&h, 0, &batch(vec![vec![0.31]]), &r).unwrap();
        assert_eq!(sel.point, vec![0.31]);
        assert!(matches!(
            local_search(&h, 0, &batch(vec![]), &r),
            Err(Error::EmptyCandidates)
        ));
    }

    #[test]
    fn untrained_region_wins_global_search() {
        let space = DesignSpace::unit(1);
        let g = RegionClassifier::heaviside(space.clone(), 0, 0.5).unwrap();
        let p = params(1.0, 0.1, 0.05);
        let left = LocalGp::condition(
            KernelFamily::RbfArd,
            p.clone(),
            vec![vec![0.1], vec![0.25], vec![0.4]],
            vec![0.1, 0.2, 0.3],
        )
        .unwrap();
        let right = LocalGp::condition(KernelFamily::RbfArd, p, vec![], vec![]).unwrap();
        let h = PartitionedGp::from_locals(g, vec![left, right]).unwrap();
        // symmetric reference grid: equal mass on both sides
        let r = ReferenceSet::uniform((0..100).map(|i| vec![(i as f64 + 0.5) / 100.0]).collect()).unwrap();
        let gs = global_search(&h, &r).unwrap();
        assert_eq!(gs.best, 1);
        assert!((gs.per_region[1] - 0.5 * (1.0 + 0.05 * 0.05)).abs() < 1e-12);
    }

    #[test]
    fn single_region_global_search() {
        let space = DesignSpace::unit(2);
        let gp = LocalGp::condition(
            KernelFamily::RbfArd,
            KernelParams::new(1.0, vec![0.3, 0.3], 0.1).unwrap(),
            vec![vec![0.5, 0.5]],
            vec![1.0],
        )
        .unwrap();
        let h = PartitionedGp::from_locals(RegionClassifier::single(space.clone()), vec![gp]).unwrap();
        let r = ReferenceSet::uniform(lhd(&space, 20, 4).points).unwrap();
        assert_eq!(global_search(&h, &r).unwrap().best, 0);
    }

    #[test]
    fn passive_strategies_do_not_select() {
        let space = DesignSpace::unit(1);
        let gp = LocalGp::condition(KernelFamily::RbfArd, params(1.0, 0.2, 0.1), vec![], vec![]).unwrap();
        let h = PartitionedGp::from_locals(RegionClassifier::single(space), vec![gp]).unwrap();
        let c = Criterion::new(Strategy::Lhd);
        assert!(select_next(&h, &c, &batch(vec![vec![0.5]]), None).is_err());
    }

    #[test]
    fn single_gp_strategies_reject_partitions() {
        let space = DesignSpace::unit(1);
        let g = RegionClassifier::heaviside(space, 0, 0.5).unwrap();
        let data = crate::dataset::Dataset::new(
            vec![vec![0.1], vec![0.3], vec![0.6], vec![0.9]],
            vec![0.0, 1.0, 0.0, 1.0],
        )
        .unwrap();
        let h = PartitionedGp::train(g, &data, KernelFamily::RbfArd, &FitConfig::default()).unwrap();
        let r = ReferenceSet::uniform(vec![vec![0.5]]).unwrap();
        assert!(select_next(&h, &Criterion::new(Strategy::Alc), &batch(vec![vec![0.2]]), Some(&r)).is_err());
        assert!(select_next(&h, &Criterion::new(Strategy::Palm), &batch(vec![vec![0.2]]), None).is_ok());
    }

    #[test]
    fn imse_never_exceeds_current_integrated_variance() {
        let space = DesignSpace::unit(2);
        let pts = lhd(&space, 12, 3).points;
        let p = KernelParams::new(1.0, vec![0.3, 0.5], 0.05).unwrap();
        let k = kernel_gram(KernelFamily::RbfArd, &p, &pts).unwrap();
        assert_eq!(k.order(), 12);
        let gp = LocalGp::condition(KernelFamily::RbfArd, p, pts, vec![0.0; 12]).unwrap();
        let r = ReferenceSet::uniform(lhd(&space, 80, 5).points).unwrap();
        let all: Vec<usize> = (0..80).collect();
        let sc = RegionScorer::new(&gp, &r, &all).unwrap();
        for x in lhd(&space, 40, 6).points {
            assert!(sc.imse(&x).unwrap() <= sc.integrated_variance() + 1e-9);
        }
    }
}
