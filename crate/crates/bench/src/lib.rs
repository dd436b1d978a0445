//! Shared instance builders for the criterion benches.

use palc_core::{lhd, uniform_random, DesignSpace, KernelFamily, KernelParams, LocalGp, ReferenceSet};

/// A conditioned GP with `n` points in `[0,1]^d`, a uniform reference set of
/// `n_ref` points and `n_cand` candidates.
pub fn instance(n: usize, d: usize, n_ref: usize, n_cand: usize, seed: u64) -> (LocalGp, ReferenceSet, Vec<Vec<f64>>) {
    let space = DesignSpace::unit(d);
    let points = uniform_random(&space, n, seed).points;
    let values = points.iter().map(|x| x.iter().map(|v| (6.0 * v).sin()).sum()).collect();
    let params = KernelParams::new(1.0, vec![0.4; d], 0.1).expect("valid parameters");
    let gp = LocalGp::condition(KernelFamily::RbfArd, params, points, values).expect("noisy gram is SPD");
    let reference = ReferenceSet::uniform(lhd(&space, n_ref, seed ^ 1).points).expect("nonempty");
    let cands = lhd(&space, n_cand, seed ^ 2).points;
    (gp, reference, cands)
}
