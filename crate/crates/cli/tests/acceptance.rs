//! Acceptance suite. Every criterion prints one `PASS`/`FAIL` line; the test
//! fails if any criterion fails. Criteria run one after another in a single
//! test so that timing measurements do not compete with other tests.
//!
//! Run with `cargo test -p palc-cli --test acceptance`.

#![allow(clippy::needless_range_loop)]

use std::io::Write;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use palc_cli::{cmd_run, RunOverrides};
use palc_core::{
    chol_append, cholesky, global_search, kernel_gram, lhd, score_imse_single, select_next, Criterion, DesignBatch,
    DesignSpace, ExperimentReport, Generator, KernelFamily, KernelParams, LocalGp, PartitionedGp, ReferenceSet,
    RegionClassifier, RegionScorer, Strategy,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// ---------------------------------------------------------------------------
// Independent dense oracles: plain squared-exponential covariance and
// Gauss-Jordan inversion with partial pivoting.

fn se(p: &Params, a: &[f64], b: &[f64]) -> f64 {
    let r2: f64 = a
        .iter()
        .zip(b)
        .zip(&p.lengths)
        .map(|((x, y), l)| ((x - y) / l).powi(2))
        .sum();
    p.tau2 * (-r2).exp()
}

#[derive(Clone)]
struct Params {
    tau2: f64,
    lengths: Vec<f64>,
    sigma2: f64,
}

impl Params {
    fn of(k: &KernelParams) -> Self {
        Params {
            tau2: k.scale * k.scale,
            lengths: k.lengths.clone(),
            sigma2: k.noise_sd * k.noise_sd,
        }
    }
}

fn invert(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            r
        })
        .collect();
    for c in 0..n {
        let piv = (c..n).max_by(|&i, &j| m[i][c].abs().total_cmp(&m[j][c].abs())).unwrap();
        m.swap(c, piv);
        let d = m[c][c];
        for v in m[c].iter_mut() {
            *v /= d;
        }
        for r in 0..n {
            if r != c {
                let f = m[r][c];
                if f != 0.0 {
                    for k in 0..2 * n {
                        m[r][k] -= f * m[c][k];
                    }
                }
            }
        }
    }
    m.into_iter().map(|r| r[n..].to_vec()).collect()
}

/// Posterior predictive variance of a new observation at each of `at`,
/// computed with an explicit inverse of the Gram matrix.
fn dense_variances(p: &Params, x: &[Vec<f64>], at: &[Vec<f64>]) -> Vec<f64> {
    let prior = p.tau2 + p.sigma2;
    if x.is_empty() {
        return vec![prior; at.len()];
    }
    let gram: Vec<Vec<f64>> = x
        .iter()
        .enumerate()
        .map(|(i, a)| {
            x.iter()
                .enumerate()
                .map(|(j, b)| se(p, a, b) + if i == j { p.sigma2 } else { 0.0 })
                .collect()
        })
        .collect();
    let inv = invert(&gram);
    at.iter()
        .map(|s| {
            let k: Vec<f64> = x.iter().map(|a| se(p, a, s)).collect();
            let mut q = 0.0;
            for i in 0..k.len() {
                for j in 0..k.len() {
                    q += k[i] * inv[i][j] * k[j];
                }
            }
            prior - q
        })
        .collect()
}

fn dense_imse(p: &Params, x: &[Vec<f64>], cand: &[f64], refs: &[Vec<f64>], w: &[f64]) -> f64 {
    let mut aug = x.to_vec();
    aug.push(cand.to_vec());
    dense_variances(p, &aug, refs).iter().zip(w).map(|(v, w)| v * w).sum()
}

/// Textbook Cholesky of the dense Gram matrix, for the naive cost baseline.
fn dense_cholesky(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                l[i][i] = (a[i][i] - s).sqrt();
            } else {
                l[i][j] = (a[i][j] - s) / l[j][j];
            }
        }
    }
    l
}

fn forward(l: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let mut v = vec![0.0; b.len()];
    for i in 0..b.len() {
        let s: f64 = (0..i).map(|k| l[i][k] * v[k]).sum();
        v[i] = (b[i] - s) / l[i][i];
    }
    v
}

fn dense_gram(p: &Params, x: &[Vec<f64>]) -> Vec<Vec<f64>> {
    x.iter()
        .enumerate()
        .map(|(i, a)| {
            x.iter()
                .enumerate()
                .map(|(j, b)| se(p, a, b) + if i == j { p.sigma2 } else { 0.0 })
                .collect()
        })
        .collect()
}

/// Augmented IMSE by refactorizing the whole `(n+1)`-point Gram matrix.
/// `gram` is the Gram matrix of `x`, which a refactorizing implementation
/// keeps between candidates.
fn naive_refactor_imse(p: &Params, x: &[Vec<f64>], gram: &[Vec<f64>], cand: &[f64], refs: &[Vec<f64>]) -> f64 {
    let n = x.len();
    let cross: Vec<f64> = x.iter().map(|a| se(p, a, cand)).collect();
    let mut aug: Vec<Vec<f64>> = gram
        .iter()
        .zip(&cross)
        .map(|(row, c)| {
            let mut r = row.clone();
            r.push(*c);
            r
        })
        .collect();
    let mut last = cross.clone();
    last.push(p.tau2 + p.sigma2);
    aug.push(last);
    let l = dense_cholesky(&aug);
    refs.iter()
        .map(|s| {
            let mut k: Vec<f64> = x.iter().map(|a| se(p, a, s)).collect();
            k.push(se(p, cand, s));
            let v = forward(&l, &k);
            debug_assert_eq!(v.len(), n + 1);
            p.tau2 + p.sigma2 - v.iter().map(|t| t * t).sum::<f64>()
        })
        .sum::<f64>()
        / refs.len() as f64
}

// ---------------------------------------------------------------------------

fn unit_points(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..d).map(|_| rng.random::<f64>()).collect()).collect()
}

fn random_params(rng: &mut ChaCha8Rng, d: usize) -> KernelParams {
    KernelParams::new(
        rng.random_range(0.5..2.0),
        (0..d).map(|_| rng.random_range(0.2..1.5)).collect(),
        rng.random_range(0.05..0.5),
    )
    .unwrap()
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

fn batch(points: Vec<Vec<f64>>) -> DesignBatch {
    DesignBatch {
        points,
        generator: Generator::Grid,
        seed: 0,
    }
}

type Outcome = Result<String, String>;

fn check(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst_chol: f64 = 0.0;
    let mut worst_imse: f64 = 0.0;
    for _ in 0..200 {
        let n = rng.random_range(2..=64);
        let d = rng.random_range(1..=6);
        let p = random_params(&mut rng, d);
        let x = unit_points(&mut rng, n, d);
        let gram = kernel_gram(KernelFamily::RbfArd, &p, &x).unwrap();
        let full = cholesky(&gram).unwrap();
        let head = cholesky(&kernel_gram(KernelFamily::RbfArd, &p, &x[..n - 1]).unwrap()).unwrap();
        let q = Params::of(&p);
        let cross: Vec<f64> = x[..n - 1].iter().map(|a| se(&q, a, &x[n - 1])).collect();
        let appended = chol_append(&head, &cross, q.tau2 + q.sigma2).unwrap();
        for i in 0..n {
            for j in 0..=i {
                worst_chol = worst_chol.max((appended.get(i, j) - full.get(i, j)).abs());
            }
        }

        let gp = LocalGp::condition(KernelFamily::RbfArd, p.clone(), x.clone(), vec![0.0; n]).unwrap();
        let refs = unit_points(&mut rng, 20, d);
        let raw: Vec<f64> = (0..20).map(|_| rng.random_range(0.1..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let w: Vec<f64> = raw.iter().map(|r| r / total).collect();
        let reference = ReferenceSet::weighted(refs.clone(), raw).unwrap();
        let cand = unit_points(&mut rng, 1, d).remove(0);
        let got = score_imse_single(&gp, &cand, &reference).unwrap();
        let want = dense_imse(&q, &x, &cand, &refs, &w);
        worst_imse = worst_imse.max(rel_err(got, want));
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        worst_chol <= 1e-10 && worst_imse <= 1e-9 && secs < 30.0,
        format!("max |ΔL| {worst_chol:.2e} (tol 1e-10), max rel IMSE err {worst_imse:.2e} (tol 1e-9), {secs:.1}s (limit 30s)"),
    )
}

fn sci(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|t| format!("{t:.2e}")).collect();
    format!("[{}]", parts.join(", "))
}

fn slope(ns: &[f64], ts: &[f64]) -> f64 {
    let lx: Vec<f64> = ns.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ts.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / lx.len() as f64;
    let my = ly.iter().sum::<f64>() / ly.len() as f64;
    let num: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let den: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    num / den
}

/// Minimum over `reps` of the mean time per call across `per` calls.
fn time_per_call(reps: usize, per: usize, mut f: impl FnMut(usize)) -> f64 {
    let mut best = Duration::MAX;
    for r in 0..reps {
        let t = Instant::now();
        for i in 0..per {
            f(r * per + i);
        }
        best = best.min(t.elapsed());
    }
    best.as_secs_f64() / per as f64
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let sizes = [128usize, 256, 512];
    let n_ref = 8;
    let d = 2;
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let p = KernelParams::new(1.0, vec![0.3; d], 0.1).unwrap();
    let q = Params::of(&p);
    let mut fast = Vec::new();
    let mut naive = Vec::new();
    for &n in &sizes {
        let x = unit_points(&mut rng, n, d);
        let refs = unit_points(&mut rng, n_ref, d);
        let cands = unit_points(&mut rng, 64, d);
        let gp = LocalGp::condition(KernelFamily::RbfArd, p.clone(), x.clone(), vec![0.0; n]).unwrap();
        let reference = ReferenceSet::uniform(refs.clone()).unwrap();
        let all: Vec<usize> = (0..n_ref).collect();
        let scorer = RegionScorer::new(&gp, &reference, &all).unwrap();
        let gram = dense_gram(&q, &x);
        let mut sink = 0.0;
        fast.push(time_per_call(7, 64, |i| sink += scorer.imse(&cands[i % 64]).unwrap()));
        let per = if n >= 512 { 2 } else { 4 };
        naive.push(time_per_call(5, per, |i| {
            sink += naive_refactor_imse(&q, &x, &gram, &cands[i % 64], &refs)
        }));
        assert!(sink.is_finite());
    }
    let ns: Vec<f64> = sizes.iter().map(|&n| n as f64).collect();
    let (bf, bn) = (slope(&ns, &fast), slope(&ns, &naive));
    let secs = start.elapsed().as_secs_f64();
    check(
        bf <= 2.4 && bn >= 2.6 && secs < 300.0,
        format!(
            "exponent bordered {bf:.2} (<= 2.4), refactorized {bn:.2} (>= 2.6); per-candidate seconds {} vs {}; {secs:.1}s",
            sci(&fast),
            sci(&naive)
        ),
    )
}

/// Random partitioned GP over the unit square with 2 or 3 Voronoi regions.
fn random_pgp(rng: &mut ChaCha8Rng, regions: usize) -> PartitionedGp {
    let d = 2;
    let space = DesignSpace::unit(d);
    let seeds = unit_points(rng, regions, d);
    let g = RegionClassifier::voronoi(space, seeds, (0..regions).collect()).unwrap();
    let mut pts = vec![Vec::new(); regions];
    while pts.iter().any(|v: &Vec<Vec<f64>>| v.len() < 4) {
        let x = unit_points(rng, 1, d).remove(0);
        let m = g.classify(&x).unwrap();
        if pts[m].len() < 12 {
            pts[m].push(x);
        }
    }
    let locals = pts
        .into_iter()
        .map(|x| {
            let y: Vec<f64> = x.iter().map(|_| rng.random_range(-1.0..1.0)).collect();
            LocalGp::condition(KernelFamily::RbfArd, random_params(rng, d), x, y).unwrap()
        })
        .collect();
    PartitionedGp::from_locals(g, locals).unwrap()
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut worst_const: f64 = 0.0;
    let mut worst_total: f64 = 0.0;
    for trial in 0..50 {
        let regions = 2 + trial % 2;
        let h = random_pgp(&mut rng, regions);
        let refs = unit_points(&mut rng, 60, 2);
        let reference = ReferenceSet::uniform(refs.clone()).unwrap();
        let w = 1.0 / refs.len() as f64;
        let labels: Vec<usize> = refs.iter().map(|s| h.region_of(s).unwrap()).collect();
        let gs = global_search(&h, &reference).unwrap();
        let total: f64 = gs.per_region.iter().sum();
        let parts = h.classifier().classify_batch(&refs).unwrap();

        for m in 0..regions {
            let cands: Vec<Vec<f64>> = unit_points(&mut rng, 200, 2)
                .into_iter()
                .filter(|x| h.region_of(x).unwrap() == m)
                .take(5)
                .collect();
            let scorer = RegionScorer::new(h.local(m), &reference, &parts[m]).unwrap();
            let mut first_terms = Vec::new();
            for x in &cands {
                // whole-space augmented IMSE, every region from scratch
                let mut outside = 0.0;
                let mut inside = 0.0;
                for r in 0..regions {
                    let gp = h.local(r);
                    let q = Params::of(gp.params());
                    let mut pts = gp.points().to_vec();
                    if r == m {
                        pts.push(x.clone());
                    }
                    let at: Vec<Vec<f64>> = refs
                        .iter()
                        .zip(&labels)
                        .filter(|(_, l)| **l == r)
                        .map(|(s, _)| s.clone())
                        .collect();
                    let s: f64 = dense_variances(&q, &pts, &at).iter().map(|v| w * v).sum();
                    if r == m {
                        inside += s;
                    } else {
                        outside += s;
                    }
                }
                first_terms.push(outside);
                let decomposed = (total - gs.per_region[m]) + scorer.imse(x).unwrap();
                worst_total = worst_total.max(rel_err(decomposed, outside + inside));
            }
            for t in &first_terms {
                worst_const = worst_const.max((t - first_terms[0]).abs());
            }
        }
    }
    check(
        worst_const <= 1e-12 && worst_total <= 1e-9,
        format!(
            "first-term spread {worst_const:.2e} (tol 1e-12), max rel decomposition err {worst_total:.2e} (tol 1e-9)"
        ),
    )
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut agree = 0;
    let mut detail = String::new();
    for trial in 0..20 {
        let d = 1 + trial % 3;
        let space = DesignSpace::unit(d);
        let x = unit_points(&mut rng, 8 + trial, d);
        let y: Vec<f64> = x.iter().map(|p| p.iter().map(|v| (5.0 * v).sin()).sum()).collect();
        let gp = LocalGp::condition(KernelFamily::RbfArd, random_params(&mut rng, d), x, y).unwrap();
        let h = PartitionedGp::from_locals(RegionClassifier::single(space.clone()), vec![gp]).unwrap();
        let cands = batch(lhd(&space, 50, trial as u64).points);
        let reference = ReferenceSet::uniform(lhd(&space, 40, 1000 + trial as u64).points).unwrap();
        let a = select_next(&h, &Criterion::new(Strategy::Palc), &cands, Some(&reference)).unwrap();
        let b = select_next(&h, &Criterion::new(Strategy::Alc), &cands, Some(&reference)).unwrap();
        if a.index == b.index {
            agree += 1;
        } else if detail.is_empty() {
            detail = format!("; first mismatch trial {trial}: {} vs {}", a.index, b.index);
        }
    }
    check(agree == 20, format!("{agree}/20 identical argmin indices{detail}"))
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

fn run_study(cfg: &Path, strategy: Strategy, out: &Path) -> ExperimentReport {
    let overrides = RunOverrides {
        out: Some(out.join(strategy.name())),
        jobs: Some(1),
        seed: None,
        strategy: Some(strategy.name().into()),
    };
    let r = cmd_run(cfg, &overrides).unwrap();
    assert!(r.failures.is_empty(), "{strategy}: {:?}", r.failures);
    r
}

struct Study {
    reports: Vec<ExperimentReport>,
    secs: f64,
}

impl Study {
    fn run(cfg: &str, strategies: &[Strategy]) -> Study {
        let start = Instant::now();
        let tmp = tempfile::tempdir().unwrap();
        let reports = strategies
            .iter()
            .map(|s| run_study(&config(cfg), *s, tmp.path()))
            .collect();
        Study {
            reports,
            secs: start.elapsed().as_secs_f64(),
        }
    }

    fn get(&self, s: Strategy) -> &ExperimentReport {
        self.reports.iter().find(|r| r.strategy == s).unwrap()
    }

    fn table(&self) -> String {
        self.reports
            .iter()
            .map(|r| format!("{} {:.4} ({:.4}) {:.2}ms", r.strategy, r.mean, r.sd, 1e3 * r.mean_time))
            .collect::<Vec<_>>()
            .join(", ")
    }
}

fn criterion_5(s: &Study) -> Outcome {
    let palc = s.get(Strategy::Palc).mean;
    let alc = s.get(Strategy::Alc).mean;
    let lhd = s.get(Strategy::Lhd).mean;
    check(
        palc < alc && palc < lhd && palc < 0.15 && s.secs < 600.0,
        format!(
            "mean RMSE PALC {palc:.4} < ALC {alc:.4}, < LHD {lhd:.4}, < 0.15; [{}]; {:.0}s",
            s.table(),
            s.secs
        ),
    )
}

fn criterion_6(s: &Study) -> Outcome {
    let palc = s.get(Strategy::Palc).mean;
    let alc = s.get(Strategy::Alc).mean;
    let palm = s.get(Strategy::Palm).mean;
    check(
        palc <= alc && palc <= palm && s.secs < 600.0,
        format!(
            "mean RMSE PALC {palc:.4} <= ALC {alc:.4}, <= PALM {palm:.4}; [{}]; {:.0}s",
            s.table(),
            s.secs
        ),
    )
}

fn criterion_7(studies: &[(&str, &Study)]) -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, s) in studies {
        let t = |st| s.get(st).mean_time * 1e3;
        let (palm, palc, alc) = (t(Strategy::Palm), t(Strategy::Palc), t(Strategy::Alc));
        ok &= palm < palc && palc < alc;
        parts.push(format!("{name}: PALM {palm:.2}ms < PALC {palc:.2}ms < ALC {alc:.2}ms"));
    }
    check(ok, parts.join("; "))
}

fn criterion_8() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let (mut interp, mut prior, mut mono) = (0.0f64, 0.0f64, f64::NEG_INFINITY);
    let mut strata_ok = true;
    for _ in 0..100 {
        let d = rng.random_range(1..=4);
        let n = rng.random_range(2..=15);
        let space = DesignSpace::unit(d);
        let x = lhd(&space, n, rng.random()).points;
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let exact = KernelParams::new(rng.random_range(0.5..2.0), vec![0.25; d], 0.0).unwrap();
        let gp = LocalGp::condition(KernelFamily::RbfArd, exact.clone(), x.clone(), y.clone()).unwrap();
        for xi in &x {
            interp = interp.max(gp.predict(xi).unwrap().variance);
        }
        let far = vec![1e3; d];
        prior = prior.max((gp.predict(&far).unwrap().variance - exact.prior_variance()).abs());

        let noisy = random_params(&mut rng, d);
        let mut g = LocalGp::condition(KernelFamily::RbfArd, noisy, x[..1].to_vec(), y[..1].to_vec()).unwrap();
        let probes = unit_points(&mut rng, 20, d);
        for i in 1..n {
            let next = g.with_observation(x[i].clone(), y[i]).unwrap();
            for s in &probes {
                mono = mono.max(next.predict(s).unwrap().variance - g.predict(s).unwrap().variance);
            }
            g = next;
        }

        let m = rng.random_range(1..=40);
        let pts = lhd(&space, m, rng.random()).points;
        for j in 0..d {
            let mut seen = vec![false; m];
            for p in &pts {
                let k = ((p[j] * m as f64).floor() as usize).min(m - 1);
                strata_ok &= !seen[k];
                seen[k] = true;
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        interp <= 1e-8 && prior <= 1e-6 && mono <= 1e-9 && strata_ok && secs < 60.0,
        format!(
            "max var at data {interp:.1e} (1e-8), far-field |var - prior| {prior:.1e} (1e-6), max var increase {mono:.1e} (1e-9), LHD strata {}, {secs:.1}s",
            if strata_ok { "ok" } else { "violated" }
        ),
    )
}

fn criterion_9() -> Outcome {
    // 1D setup: heaviside split at 0.5, noisy sine-like data on each side.
    let space = DesignSpace::unit(1);
    let g = RegionClassifier::heaviside(space.clone(), 0, 0.5).unwrap();
    let x0: Vec<Vec<f64>> = [0.05, 0.2, 0.33, 0.45].iter().map(|v| vec![*v]).collect();
    let x1: Vec<Vec<f64>> = [0.6, 0.9].iter().map(|v| vec![*v]).collect();
    let p0 = KernelParams::new(1.0, vec![0.1], 0.01).unwrap();
    let p1 = KernelParams::new(0.5, vec![0.2], 0.05).unwrap();
    let gp0 = LocalGp::condition(KernelFamily::RbfArd, p0.clone(), x0.clone(), vec![0.1, -0.4, 0.8, 0.2]).unwrap();
    let gp1 = LocalGp::condition(KernelFamily::RbfArd, p1.clone(), x1.clone(), vec![0.0, 0.0]).unwrap();
    let h = PartitionedGp::from_locals(g.clone(), vec![gp0, gp1]).unwrap();

    let reference = ReferenceSet::uniform(lhd(&space, 2000, 9).points).unwrap();
    let gs = global_search(&h, &reference).unwrap();

    let grid_n = 10_000;
    let grid: Vec<Vec<f64>> = (0..grid_n).map(|i| vec![(i as f64 + 0.5) / grid_n as f64]).collect();
    let mut quad = [0.0; 2];
    for (m, (p, x)) in [(&p0, &x0), (&p1, &x1)].into_iter().enumerate() {
        let at: Vec<Vec<f64>> = grid.iter().filter(|s| g.classify(s).unwrap() == m).cloned().collect();
        quad[m] = dense_variances(&Params::of(p), x, &at).iter().sum::<f64>() / grid_n as f64;
    }
    let err = (0..2).map(|m| rel_err(gs.per_region[m], quad[m])).fold(0.0, f64::max);

    // region 1 carries no data at all
    let gp0 = LocalGp::condition(KernelFamily::RbfArd, p0.clone(), x0.clone(), vec![0.1, -0.4, 0.8, 0.2]).unwrap();
    let empty = LocalGp::condition(KernelFamily::RbfArd, p0, vec![], vec![]).unwrap();
    let h2 = PartitionedGp::from_locals(g, vec![gp0, empty]).unwrap();
    let best = global_search(&h2, &reference).unwrap().best;
    check(
        err <= 0.01 && best == 1,
        format!(
            "J_G {:.5?} vs grid {:.5?}: max rel err {:.2e} (tol 1e-2); untrained region picked: {}",
            gs.per_region,
            quad,
            err,
            best == 1
        ),
    )
}

fn criterion_10() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let run = |dir: &str, jobs| {
        let out = tmp.path().join(dir);
        let overrides = RunOverrides {
            out: Some(out.clone()),
            jobs: Some(jobs),
            ..RunOverrides::default()
        };
        cmd_run(&config("sim1d.cfg"), &overrides).unwrap();
        std::fs::read(out.join("report.csv")).unwrap()
    };
    let a = run("a", 1);
    let b = run("b", 4);
    check(
        a == b && !a.is_empty(),
        format!("report.csv {} bytes, identical: {}", a.len(), a == b),
    )
}

fn guarded(f: impl FnOnce() -> Outcome) -> Outcome {
    match panic::catch_unwind(AssertUnwindSafe(f)) {
        Ok(o) => o,
        Err(e) => {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        }
    }
}

/// Writes past the test harness's output capture so the verdicts show up in
/// plain `cargo test` runs.
fn say(line: String) {
    let mut out = std::io::stdout().lock();
    writeln!(out, "{line}").unwrap();
    out.flush().unwrap();
}

#[test]
fn acceptance() {
    let mut results: Vec<(usize, &str, Outcome)> = Vec::new();
    let mut report = |n, name, o: Outcome| {
        match &o {
            Ok(d) => say(format!("criterion {n:>2} PASS  {name}: {d}")),
            Err(d) => say(format!("criterion {n:>2} FAIL  {name}: {d}")),
        }
        results.push((n, name, o));
    };
    report(
        1,
        "bordered Cholesky and IMSE match refactorization",
        guarded(criterion_1),
    );
    report(2, "per-candidate cost exponent", guarded(criterion_2));
    report(3, "partitioned IMSE decomposition", guarded(criterion_3));
    report(4, "single-region PALC equals ALC", guarded(criterion_4));

    let one_d = panic::catch_unwind(|| {
        Study::run(
            "sim1d.cfg",
            &[
                Strategy::Palc,
                Strategy::Alc,
                Strategy::Lhd,
                Strategy::Alm,
                Strategy::Palm,
            ],
        )
    });
    let two_d = panic::catch_unwind(|| Study::run("sim2d.cfg", &[Strategy::Palc, Strategy::Alc, Strategy::Palm]));
    let failed = |_| Err::<String, String>("study run panicked".into());
    report(5, "1D study ordering", one_d.as_ref().map_or_else(failed, criterion_5));
    report(6, "2D study ordering", two_d.as_ref().map_or_else(failed, criterion_6));
    let timing = match (&one_d, &two_d) {
        (Ok(a), Ok(b)) => guarded(|| criterion_7(&[("1D", a), ("2D", b)])),
        _ => Err("study run panicked".into()),
    };
    report(7, "criterion time PALM < PALC < ALC", timing);
    report(8, "GP property suite", guarded(criterion_8));
    report(9, "global search against grid quadrature", guarded(criterion_9));
    report(10, "cmd_run reproducibility", guarded(criterion_10));

    let failed: Vec<usize> = results.iter().filter(|r| r.2.is_err()).map(|r| r.0).collect();
    println!(
        "acceptance: {}/{} criteria passed",
        results.len() - failed.len(),
        results.len()
    );
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
