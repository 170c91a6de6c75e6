#![allow(clippy::type_complexity)]

//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any failure.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use interp_forge::builder::{
    build_hardmax, build_softmax, build_softmax_fixed_tau, ConstructionReport,
};
use interp_forge::dynamics::{
    predict_partial_equilibrium, predict_rank1_equilibrium, simulate, step, DynamicsConfig,
};
use interp_forge::gen::corpus_dataset;
use interp_forge::geometry::{choose_leader_ff, hat_ff, is_extreme};
use interp_forge::layers::{hardmax_cluster, hardmax_row, softmax_row};
use interp_forge::training::{
    data_fit, gradient, initial_theta, kappa, make_synthetic, objective, train, GradMode,
    TrainingConfig,
};
use interp_forge::{
    hausdorff_distance, transformer_apply, AttentionKind, AttentionMatrix, Dataset, DenseMatrix,
    FeedForwardLayer, SelfAttentionLayer, Sequence, Token, Transformer, TransformerBlock,
};

const CORPUS: u64 = 200;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn gauss(rng: &mut ChaCha8Rng, d: usize, sd: f64) -> Token<f64> {
    Token(
        (0..d)
            .map(|_| sd * rng.sample::<f64, _>(StandardNormal))
            .collect(),
    )
}

fn gauss_seq(rng: &mut ChaCha8Rng, n: usize, d: usize, sd: f64) -> Sequence<f64> {
    Sequence::new((0..n).map(|_| gauss(rng, d, sd)).collect()).unwrap()
}

fn dense(rng: &mut ChaCha8Rng, r: usize, c: usize, sd: f64) -> DenseMatrix<f64> {
    DenseMatrix::from_rows((0..r).map(|_| gauss(rng, c, sd).0).collect()).unwrap()
}

fn max_dist(a: &Sequence<f64>, b: &Sequence<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| x.dist(y))
        .fold(0.0, f64::max)
}

struct Corpus {
    hard: Vec<(Dataset<f64>, Transformer<f64>, ConstructionReport)>,
    soft: Vec<(
        Dataset<f64>,
        Transformer<f64>,
        ConstructionReport,
        Option<f64>,
        bool,
    )>,
    hard_time: Duration,
    errors: Vec<String>,
}

fn build_corpus() -> Corpus {
    let mut c = Corpus {
        hard: Vec::new(),
        soft: Vec::new(),
        hard_time: Duration::ZERO,
        errors: Vec::new(),
    };
    for k in 0..CORPUS {
        let ds = corpus_dataset(k).unwrap();
        let t = Instant::now();
        match build_hardmax(&ds) {
            Ok((m, r)) => c.hard.push((ds.clone(), m, r)),
            Err(e) => c.errors.push(format!("hardmax dataset {k}: {e}")),
        }
        c.hard_time += t.elapsed();
        match build_softmax(&ds) {
            Ok((m, r, plan)) => c
                .soft
                .push((ds, m, r, plan.global_tau, plan.global_tau_verified)),
            Err(e) => c.errors.push(format!("softmax dataset {k}: {e}")),
        }
    }
    c
}

fn worst_distance(model: &Transformer<f64>, ds: &Dataset<f64>) -> f64 {
    ds.pairs
        .iter()
        .map(|p| hausdorff_distance(&transformer_apply(model, &p.input).unwrap(), &p.output))
        .fold(0.0, f64::max)
}

fn hardmax_exact(c: &Corpus) -> Outcome {
    ensure(c.errors.iter().all(|e| !e.starts_with("hardmax")), || {
        c.errors.join("; ")
    })?;
    ensure(c.hard.len() == CORPUS as usize, || {
        "missing hardmax builds".into()
    })?;
    let worst = c
        .hard
        .iter()
        .map(|(ds, m, _)| worst_distance(m, ds))
        .fold(0.0, f64::max);
    ensure(worst <= 1e-9, || format!("worst d_H {worst:e}"))?;
    ensure(c.hard_time < Duration::from_secs(120), || {
        format!("took {:?}", c.hard_time)
    })?;
    Ok(format!(
        "{CORPUS} datasets, worst d_H {worst:.2e}, build time {:.2?}",
        c.hard_time
    ))
}

fn block_bounds(c: &Corpus) -> Outcome {
    let mut violations = Vec::new();
    for (ds, m, r) in &c.hard {
        let bound = 2 * ds.total_output_len() + 2 * ds.len() + 1;
        if m.num_blocks() > bound || r.num_blocks != m.num_blocks() || r.bound_blocks != bound {
            violations.push(format!("hardmax L {} bound {bound}", m.num_blocks()));
        }
    }
    for (ds, m, r, _, _) in &c.soft {
        let bound = 2 * ds.total_output_len() + 3 * ds.len();
        if m.num_blocks() > bound || r.num_blocks != m.num_blocks() || r.bound_blocks != bound {
            violations.push(format!("softmax L {} bound {bound}", m.num_blocks()));
        }
    }
    ensure(violations.is_empty(), || violations.join("; "))?;
    ensure(c.soft.len() == CORPUS as usize, || {
        "missing softmax builds".into()
    })?;
    Ok(format!(
        "{} models, 0 violations",
        c.hard.len() + c.soft.len()
    ))
}

fn param_scaling(c: &Corpus) -> Outcome {
    let models = c
        .hard
        .iter()
        .map(|(ds, m, _)| (ds, m))
        .chain(c.soft.iter().map(|(ds, m, ..)| (ds, m)));
    let coeff = models
        .map(|(ds, m)| m.param_count() as f64 / (ds.d * ds.total_output_len()) as f64)
        .fold(0.0, f64::max);
    ensure(coeff <= 40.0, || format!("c = {coeff:.2}"))?;
    Ok(format!("c = {coeff:.2}"))
}

fn softmax_exact(c: &Corpus) -> Outcome {
    ensure(c.errors.iter().all(|e| !e.starts_with("softmax")), || {
        c.errors.join("; ")
    })?;
    let worst = c
        .soft
        .iter()
        .map(|(ds, m, ..)| worst_distance(m, ds))
        .fold(0.0, f64::max);
    ensure(worst <= 1e-9, || format!("worst d_H {worst:e}"))?;
    let mut global = 0;
    for (ds, _, _, tau, verified) in &c.soft {
        let Some(tau) = tau.filter(|_| *verified) else {
            continue;
        };
        let (m, _, _) =
            build_softmax_fixed_tau(ds, tau).map_err(|e| format!("global tau {tau}: {e}"))?;
        let w = worst_distance(&m, ds);
        ensure(w <= 1e-9, || format!("global tau {tau}: d_H {w:e}"))?;
        global += 1;
    }
    Ok(format!(
        "worst d_H {worst:.2e}; {global}/{} re-verified at a single global tau",
        c.soft.len()
    ))
}

fn rank_one_instance(rng: &mut ChaCha8Rng) -> (Sequence<f64>, Token<f64>, Sequence<f64>) {
    loop {
        let d = rng.random_range(2..=5);
        let n = rng.random_range(2..=10);
        let x0 = gauss_seq(rng, n, d, 1.0);
        let v = gauss(rng, d, 1.0);
        if let Ok(p) = predict_rank1_equilibrium(&x0, &v) {
            return (x0, v, p);
        }
    }
}

/// Apex `R·1`, `leaders` further points on the radius-`R` sphere in the negative
/// orthant, and `rest` points inside the open cube `(0, R)^d`.
fn partial_instance(
    rng: &mut ChaCha8Rng,
    leaders: usize,
    rest: usize,
) -> (Sequence<f64>, Vec<usize>, f64) {
    let d = rng.random_range(2..=5);
    let r: f64 = rng.random_range(1.0..4.0);
    let mut tokens = vec![Token::splat(d, r)];
    for _ in 0..leaders {
        let g = Token(
            (0..d)
                .map(|_| rng.random_range(0.2..1.0))
                .collect::<Vec<f64>>(),
        );
        tokens.push(g.normalized().scale(-r));
    }
    for _ in 0..rest {
        tokens.push(Token(
            (0..d).map(|_| r * rng.random_range(0.05..0.95)).collect(),
        ));
    }
    (Sequence::new(tokens).unwrap(), (0..=leaders).collect(), r)
}

fn dynamics() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    // Rank-one.
    for gamma in [0.3f64, 0.7] {
        let k = (1e-7f64.ln() / (1.0 - gamma).ln()).ceil() as usize;
        for _ in 0..50 {
            let (x0, v, pred) = rank_one_instance(&mut rng);
            let cfg = DynamicsConfig::rank_one(gamma, v);
            let mut x = x0;
            for _ in 0..k {
                x = step(&x, &cfg);
            }
            let err = max_dist(&x, &pred);
            ensure(err <= 1e-6, || {
                format!("rank-one gamma {gamma}: deviation {err:e} after {k} steps")
            })?;
        }
    }
    for _ in 0..50 {
        let (x0, v, pred) = rank_one_instance(&mut rng);
        let x1 = step(&x0, &DynamicsConfig::rank_one(1.0, v));
        ensure(x1 == pred, || {
            "rank-one gamma 1: not exact after one step".into()
        })?;
    }
    // Full clustering: the apex is the only leader.
    let mut worst_rel = 0.0f64;
    for t in 0..50 {
        let rest = rng.random_range(1..=8);
        let (x0, _, _) = partial_instance(&mut rng, 0, rest);
        let gamma: f64 = [0.3, 0.5, 0.7][t % 3];
        let cfg = DynamicsConfig::scaled_identity(gamma, rng.random_range(0.5..2.0));
        let apex = x0[0].clone();
        let d0: Vec<f64> = x0.iter().map(|x| x.dist(&apex)).collect();
        let horizon = (1e-3f64.ln() / (1.0 - gamma).ln()).ceil() as i32;
        let mut x = x0.clone();
        for k in 1..=horizon {
            x = step(&x, &cfg);
            ensure(x[0] == apex, || "full clustering: apex moved".into())?;
            for i in 1..x.len() {
                let want = (1.0 - gamma).powi(k) * d0[i];
                let rel = (x[i].dist(&apex) - want).abs() / want;
                worst_rel = worst_rel.max(rel);
            }
        }
    }
    ensure(worst_rel <= 1e-12, || {
        format!("full clustering: relative decay error {worst_rel:e}")
    })?;
    // No clustering: distinct points on a sphere are fixed.
    for _ in 0..50 {
        let d = rng.random_range(2..=5);
        let n = rng.random_range(2..=10);
        let r: f64 = rng.random_range(0.5..3.0);
        let x0 = Sequence::new(
            (0..n)
                .map(|_| gauss(&mut rng, d, 1.0).normalized().scale(r))
                .collect(),
        )
        .unwrap();
        let cfg = DynamicsConfig::scaled_identity(rng.random_range(0.1..1.0), 1.0);
        ensure(step(&x0, &cfg) == x0, || {
            "no clustering: sphere configuration moved".into()
        })?;
    }
    // Partial clustering.
    let mut worst_partial = 0.0f64;
    for _ in 0..50 {
        let leaders = rng.random_range(1..=3);
        let rest = rng.random_range(1..=6);
        let (x0, ls, r) = partial_instance(&mut rng, leaders, rest);
        let pred = predict_partial_equilibrium(&x0, &ls, r).map_err(|e| e.to_string())?;
        let cfg = DynamicsConfig::scaled_identity(rng.random_range(0.2..0.9), 1.0);
        let traj = simulate(&x0, &cfg, 10_000, 1e-12).map_err(|e| e.to_string())?;
        ensure(traj.converged, || {
            "partial clustering: no convergence".into()
        })?;
        let dh = hausdorff_distance(traj.last(), &pred);
        worst_partial = worst_partial.max(dh);
    }
    ensure(worst_partial <= 1e-6, || {
        format!("partial clustering: limit set off by {worst_partial:e}")
    })?;
    Ok(format!("4 regimes x 50 instances; decay rel err {worst_rel:.1e}, partial limit err {worst_partial:.1e}"))
}

fn distinct_seq(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Sequence<f64> {
    gauss_seq(rng, n, d, 1.0)
}

/// Strict hull vertices of planar points by gift wrapping.
fn jarvis(p: &[Token<f64>]) -> Vec<usize> {
    let n = p.len();
    if n < 3 {
        return (0..n).collect();
    }
    let cross = |o: usize, a: usize, b: usize| {
        (p[a][0] - p[o][0]) * (p[b][1] - p[o][1]) - (p[a][1] - p[o][1]) * (p[b][0] - p[o][0])
    };
    let start = (0..n).min_by(|&a, &b| p[a].lex_cmp(&p[b])).unwrap();
    let mut hull = vec![start];
    let mut cur = start;
    loop {
        let mut next = (cur + 1) % n;
        for c in 0..n {
            if c == cur {
                continue;
            }
            let x = cross(cur, next, c);
            if x < 0.0 || (x == 0.0 && p[cur].dist(&p[c]) > p[cur].dist(&p[next])) {
                next = c;
            }
        }
        cur = next;
        if cur == start {
            break;
        }
        hull.push(cur);
    }
    hull
}

fn seg_dist(x: &Token<f64>, a: &Token<f64>, b: &Token<f64>) -> f64 {
    let ab = b.sub(a);
    let t = if ab.is_zero() {
        0.0
    } else {
        (x.sub(a).dot(&ab) / ab.dot(&ab)).clamp(0.0, 1.0)
    };
    x.dist(&a.axpy(t, &ab))
}

/// Distance from a vertex to the hull of the remaining points (outside that hull).
fn vertex_margin(p: &[Token<f64>], i: usize) -> f64 {
    let others: Vec<Token<f64>> = p
        .iter()
        .enumerate()
        .filter(|&(l, _)| l != i)
        .map(|(_, x)| x.clone())
        .collect();
    let h = jarvis(&others);
    (0..h.len())
        .map(|k| seg_dist(&p[i], &others[h[k]], &others[h[(k + 1) % h.len()]]))
        .fold(f64::INFINITY, f64::min)
}

fn structural() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst_hat = 0.0f64;
    for _ in 0..500 {
        let d = rng.random_range(2..=6);
        let n = rng.random_range(1..=12);
        let xs = distinct_seq(&mut rng, n, d);
        let i = rng.random_range(0..n);
        let y = gauss(&mut rng, d, 2.0);
        let ff = hat_ff(xs.tokens(), i, &y).map_err(|e| format!("hat_ff: {e}"))?;
        for (j, x) in xs.iter().enumerate() {
            let out = ff.apply(x).unwrap();
            let err = if j == i { out.dist(&y) } else { out.dist(x) };
            worst_hat = worst_hat.max(err);
        }
    }
    ensure(worst_hat <= 1e-12, || format!("hat_ff error {worst_hat:e}"))?;

    for _ in 0..200 {
        let d = rng.random_range(2..=5);
        let n_seq = rng.random_range(1..=5);
        let seqs: Vec<Sequence<f64>> = (0..n_seq)
            .map(|_| {
                let n = rng.random_range(1..=8);
                distinct_seq(&mut rng, n, d)
            })
            .collect();
        let jstar = rng.random_range(0..n_seq);
        let dir = gauss(&mut rng, d, 1.0);
        let istar = (0..seqs[jstar].len())
            .max_by(|&a, &b| {
                dir.dot(&seqs[jstar][a])
                    .total_cmp(&dir.dot(&seqs[jstar][b]))
            })
            .unwrap();
        let choice =
            choose_leader_ff(&seqs, jstar, istar).map_err(|e| format!("choose_leader_ff: {e}"))?;
        ensure(choice.leaders[jstar] == istar, || {
            "choose_leader_ff: wrong leader in jstar".into()
        })?;
        let a = choice.attention();
        for (s, &lead) in seqs.iter().zip(&choice.leaders) {
            let moved = s.map(|x| choice.ff.apply(x).unwrap());
            for i in 0..moved.len() {
                let cluster = hardmax_cluster(&moved, &a, i);
                ensure(cluster == vec![lead], || {
                    format!("cluster of token {i} is {cluster:?}, leader {lead}")
                })?;
            }
        }
    }

    let (mut compared, mut skipped) = (0, 0);
    for t in 0..1000 {
        let n = rng.random_range(1..=15);
        let xs = if t % 4 == 0 {
            // Points on a circle plus interior points: many extreme tokens.
            let k = rng.random_range(1..=n);
            let mut v: Vec<Token<f64>> = (0..k)
                .map(|_| {
                    let a: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                    Token(vec![a.cos(), a.sin()])
                })
                .collect();
            v.extend((k..n).map(|_| gauss(&mut rng, 2, 0.3)));
            Sequence::new(v).unwrap()
        } else {
            distinct_seq(&mut rng, n, 2)
        };
        let hull = jarvis(xs.tokens());
        for i in 0..n {
            let oracle = hull.contains(&i);
            if oracle && n > 1 && vertex_margin(xs.tokens(), i) <= 1e-6 {
                skipped += 1;
                continue;
            }
            let (got, _) = is_extreme(&xs, i, 1e-9).map_err(|e| e.to_string())?;
            ensure(got == oracle, || {
                format!("is_extreme disagrees with gift wrapping on token {i}: {got}")
            })?;
            compared += 1;
        }
    }
    Ok(format!(
        "hat_ff worst {worst_hat:.1e} on 500; 200 leader choices; is_extreme 0 disagreements on {compared} tokens ({skipped} within margin)"
    ))
}

fn softmax_limit() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut done = 0;
    let mut most = 0;
    while done < 100 {
        let d = rng.random_range(2..=5);
        let n = rng.random_range(2..=10);
        let xs = gauss_seq(&mut rng, n, d, 1.0);
        let a = AttentionMatrix::Dense(dense(&mut rng, d, d, 1.0));
        let scores = a.scores(xs.tokens());
        let tie_free = scores.iter().all(|row| {
            let mut r = row.clone();
            r.sort_by(|x, y| y.total_cmp(x));
            r[0] - r[1] > 1e-6 * (1.0 + r[0].abs())
        });
        if !tie_free {
            continue;
        }
        let mut tau = 1.0;
        let mut halvings = 0;
        loop {
            let gap = scores
                .iter()
                .flat_map(|row| {
                    softmax_row(row, tau)
                        .into_iter()
                        .zip(hardmax_row(row))
                        .map(|(s, h)| (s - h).abs())
                        .collect::<Vec<_>>()
                })
                .fold(0.0, f64::max);
            if gap < 1e-6 {
                break;
            }
            ensure(halvings < 60, || {
                format!("weight gap {gap:e} after 60 halvings")
            })?;
            tau *= 0.5;
            halvings += 1;
        }
        most = most.max(halvings);
        done += 1;
    }
    Ok(format!("100 instances, at most {most} halvings"))
}

fn log_log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let cov: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    cov / var
}

fn training() -> Outcome {
    for seed in 0..10 {
        let syn = make_synthetic(seed, 3, 8, 4).map_err(|e| e.to_string())?;
        ensure(
            data_fit(&syn.arch, &syn.theta_exact, &syn.dataset).unwrap() == 0.0,
            || "planted fit".into(),
        )?;
        for eps in [1e-1, 1e-3] {
            let f = objective(&syn.arch, &syn.theta_exact, &syn.dataset, eps).unwrap();
            let want = eps * kappa(&syn.theta_exact);
            ensure((f - want).abs() <= 1e-12 * want, || {
                format!("F(theta_exact) = {f}, want {want}")
            })?;
        }
    }
    let syn = make_synthetic(1, 3, 8, 4).map_err(|e| e.to_string())?;
    let run = train(
        &TrainingConfig::new(1e-3, 5000, 1),
        &syn.arch,
        &syn.dataset,
        &syn.theta_exact,
        None,
    )
    .map_err(|e| e.to_string())?;
    let crossed = run.crossed_at.ok_or_else(|| {
        format!(
            "no crossing; min {:e} vs {:e}",
            run.min_loss(),
            run.threshold
        )
    })?;

    let eps = [1e-1, 1e-2, 1e-3];
    let mut mins = Vec::new();
    for &e in &eps {
        let r = train(
            &TrainingConfig::new(e, 5000, 1),
            &syn.arch,
            &syn.dataset,
            &syn.theta_exact,
            None,
        )
        .map_err(|e| e.to_string())?;
        mins.push(r.min_loss());
    }
    let slope = log_log_slope(&eps, &mins);
    ensure((0.7..=1.3).contains(&slope), || {
        format!("slope {slope:.3} from min losses {mins:?}")
    })?;

    let mut worst = 0.0f64;
    for probe in 0..20 {
        let theta = initial_theta(&syn.arch, 100 + probe, 0.5);
        let a = gradient(&syn.arch, &theta, &syn.dataset, 1e-2, GradMode::Analytic).unwrap();
        let f = gradient(
            &syn.arch,
            &theta,
            &syn.dataset,
            1e-2,
            GradMode::FiniteDifference { h_rel: 1e-5 },
        )
        .unwrap();
        let num = a
            .iter()
            .zip(&f)
            .map(|(x, y)| (x - y).powi(2))
            .sum::<f64>()
            .sqrt();
        let den = f.iter().map(|y| y * y).sum::<f64>().sqrt();
        worst = worst.max(num / den);
    }
    ensure(worst <= 1e-4, || {
        format!("gradient relative error {worst:e}")
    })?;
    Ok(format!("planted exact on 10; crossed at step {crossed}; slope {slope:.3}; gradient rel err {worst:.1e}"))
}

fn random_block(rng: &mut ChaCha8Rng, d: usize) -> TransformerBlock<f64> {
    let w = rng.random_range(1..=4);
    let ff = FeedForwardLayer {
        eta: rng.random_range(0.0..1.0),
        w: dense(rng, d, w, 0.5),
        u: dense(rng, w, d, 0.5),
        b: gauss(rng, w, 0.5).0,
    };
    let kind = if rng.random_bool(0.5) {
        AttentionKind::Hardmax
    } else {
        AttentionKind::Softmax {
            tau: rng.random_range(0.1..2.0),
        }
    };
    let sa = SelfAttentionLayer {
        rho: rng.random_range(0.0..1.0),
        v: AttentionMatrix::Dense(dense(rng, d, d, 0.3)),
        a: AttentionMatrix::Dense(dense(rng, d, d, 0.5)),
        kind,
    };
    TransformerBlock { ff, sa }
}

fn equivariance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst = 0.0f64;
    for _ in 0..500 {
        let d = rng.random_range(2..=5);
        let n = rng.random_range(1..=10);
        let mut model = Transformer::new(d);
        for _ in 0..rng.random_range(1..=3) {
            model.push(random_block(&mut rng, d));
        }
        let xs = gauss_seq(&mut rng, n, d, 1.0);
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut rng);
        let out = transformer_apply(&model, &xs).map_err(|e| e.to_string())?;
        let out_p = transformer_apply(&model, &xs.permuted(&perm)).map_err(|e| e.to_string())?;
        ensure(out.len() == n && out_p.len() == n, || {
            "length changed".into()
        })?;
        worst = worst.max(max_dist(&out.permuted(&perm), &out_p));
    }
    ensure(worst <= 1e-12, || format!("equivariance error {worst:e}"))?;
    Ok(format!("500 pairs, worst {worst:.1e}"))
}

fn cli(dir: &Path, tag: &str, mode: &str) -> Result<Vec<Vec<u8>>, String> {
    let bin = env!("CARGO_BIN_EXE_interp-forge");
    let p = |name: &str| {
        dir.join(format!("{tag}-{name}"))
            .to_string_lossy()
            .into_owned()
    };
    let run = |args: &[&str]| -> Result<(), String> {
        let out = Command::new(bin)
            .args(args)
            .output()
            .map_err(|e| e.to_string())?;
        ensure(out.status.success(), || {
            format!(
                "`{}` exited {:?}: {}",
                args.join(" "),
                out.status.code(),
                String::from_utf8_lossy(&out.stderr)
            )
        })
    };
    let (data, model, report) = (p("data.json"), p("model.json"), p("report.json"));
    run(&[
        "gen-dataset",
        "--seed",
        "42",
        "--d",
        "3",
        "--N",
        "3",
        "--n-max",
        "6",
        "--out",
        &data,
    ])?;
    run(&[
        "construct",
        "--mode",
        mode,
        "--in",
        &data,
        "--out",
        &model,
        "--report",
        &report,
    ])?;
    run(&["verify", "--model", &model, "--in", &data])?;
    [data, model, report]
        .iter()
        .map(|f| std::fs::read(f).map_err(|e| e.to_string()))
        .collect()
}

fn cli_round_trip() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    for mode in ["hardmax", "softmax"] {
        let a = cli(dir.path(), &format!("{mode}-a"), mode)?;
        let b = cli(dir.path(), &format!("{mode}-b"), mode)?;
        ensure(a == b, || format!("{mode}: artifacts differ between runs"))?;
    }
    Ok("gen -> construct -> verify exits 0 in both modes; artifacts byte-identical".into())
}

fn main() {
    let corpus = build_corpus();
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome + '_>)> = vec![
        (
            "exact hardmax interpolation",
            Box::new(|| hardmax_exact(&corpus)),
        ),
        ("block-count bounds", Box::new(|| block_bounds(&corpus))),
        ("parameter scaling", Box::new(|| param_scaling(&corpus))),
        (
            "exact softmax interpolation",
            Box::new(|| softmax_exact(&corpus)),
        ),
        ("dynamics regimes", Box::new(dynamics)),
        ("geometric building blocks", Box::new(structural)),
        ("softmax to hardmax limit", Box::new(softmax_limit)),
        ("regularized training", Box::new(training)),
        ("permutation equivariance", Box::new(equivariance)),
        ("cli round trip", Box::new(cli_round_trip)),
    ];
    let mut failed = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            Err(e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default())
        });
        match outcome {
            Ok(msg) => println!("PASS {:>2} {name}: {msg} ({:.1?})", k + 1, t.elapsed()),
            Err(msg) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {msg}", k + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} of {} criteria failed", criteria.len());
        std::process::exit(1);
    }
    println!("all {} criteria passed", criteria.len());
}
