use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use interp_forge::dynamics::{
    classify, predict_partial_equilibrium, predict_rank1_equilibrium, simulate, step,
    DynamicsConfig, Regime,
};
use interp_forge::geometry::min_norm_point_in_hull;
use interp_forge::{hausdorff_distance, Sequence, Token};

fn seq(rows: &[&[f64]]) -> Sequence<f64> {
    Sequence::from_rows(rows.iter().map(|r| r.to_vec()).collect()).unwrap()
}

fn random_seq(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Sequence<f64> {
    Sequence::from_rows(
        (0..n)
            .map(|_| (0..d).map(|_| rng.sample(StandardNormal)).collect())
            .collect(),
    )
    .unwrap()
}

#[test]
fn rank_one_projections_stay_in_their_band() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut checked = 0;
    while checked < 30 {
        let x0 = random_seq(&mut rng, 7, 3);
        let v = Token(
            (0..3)
                .map(|_| rng.sample(StandardNormal))
                .collect::<Vec<f64>>(),
        );
        let Ok(pred) = predict_rank1_equilibrium(&x0, &v) else {
            continue;
        };
        let p0: Vec<f64> = x0.iter().map(|x| v.dot(x)).collect();
        // Near-tied extremes merge once their gap falls inside the hardmax tie band.
        let mut sorted = p0.clone();
        sorted.sort_by(f64::total_cmp);
        if sorted[1] - sorted[0] < 1e-2 || sorted[6] - sorted[5] < 1e-2 {
            continue;
        }
        let (lo, hi) = p0
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &p| {
                (a.min(p), b.max(p))
            });
        let traj = simulate(&x0, &DynamicsConfig::rank_one(0.4, v.clone()), 200, 1e-13).unwrap();
        for state in &traj.iterates {
            for (x, &p) in state.iter().zip(&p0) {
                let q = v.dot(x);
                assert_eq!(q > 0.0, p > 0.0);
                assert!(q >= lo - 1e-12 && q <= hi + 1e-12);
            }
        }
        assert!(hausdorff_distance(traj.last(), &pred) <= 1e-6);
        checked += 1;
    }
}

#[test]
fn rank_one_example_converges() {
    let x0 = seq(&[&[2.0, 0.0], &[1.0, 0.0], &[-1.0, 0.0], &[-3.0, 0.0]]);
    let v = Token(vec![1.0, 0.0]);
    let pred = predict_rank1_equilibrium(&x0, &v).unwrap();
    let traj = simulate(&x0, &DynamicsConfig::rank_one(0.7, v.clone()), 200, 1e-14).unwrap();
    let dev = traj
        .last()
        .iter()
        .zip(pred.iter())
        .map(|(a, b)| a.dist(b))
        .fold(0.0, f64::max);
    assert!(dev <= 1e-6);
    assert_eq!(step(&x0, &DynamicsConfig::rank_one(1.0, v)), pred);
}

#[test]
fn gamma_one_converges_in_one_step() {
    let x0 = seq(&[&[0.3, 0.4], &[0.2, 0.9], &[1.0, 1.0], &[-0.6, -0.8]]);
    let pred = predict_partial_equilibrium(&x0, &[2, 3], 1.0).unwrap();
    let cfg = DynamicsConfig::scaled_identity(1.0, 1.0);
    assert_eq!(step(&x0, &cfg), pred);
    let traj = simulate(&x0, &cfg, 2, 1e-10).unwrap();
    assert!(traj.converged);
    assert!(traj.steps_taken <= 1);

    let full = seq(&[&[0.3, 0.4], &[0.2, 0.9], &[1.0, 1.0]]);
    let once = step(&full, &cfg);
    assert!(once.iter().all(|x| x == &full[2]));
    assert_eq!(classify(&full, &cfg).0, Regime::FullClustering);
}

#[test]
fn partial_example_at_half_step() {
    let x0 = seq(&[&[0.3, 0.4], &[0.2, 0.9], &[1.0, 1.0], &[-0.6, -0.8]]);
    let pred = predict_partial_equilibrium(&x0, &[2, 3], 1.0).unwrap();
    let mut x = x0;
    let cfg = DynamicsConfig::scaled_identity(0.5, 1.0);
    for _ in 0..200 {
        x = step(&x, &cfg);
    }
    let dev = x
        .iter()
        .zip(pred.iter())
        .map(|(a, b)| a.dist(b))
        .fold(0.0, f64::max);
    assert!(dev <= 1e-6);
}

#[test]
fn convex_hull_shrinks_in_the_plane() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    for t in 0..40 {
        let x0 = random_seq(&mut rng, 8, 2);
        let cfg = if t % 2 == 0 {
            DynamicsConfig::scaled_identity(rng.random_range(0.1..1.0), 1.0)
        } else {
            DynamicsConfig::rank_one(
                rng.random_range(0.1..1.0),
                Token(vec![rng.sample(StandardNormal), 1.0]),
            )
        };
        let mut x = x0;
        for _ in 0..5 {
            let next = step(&x, &cfg);
            for y in next.iter() {
                let (_, dist) = min_norm_point_in_hull(x.tokens(), y, 1e-12).unwrap();
                assert!(dist <= 1e-9, "token left the hull by {dist:e}");
            }
            x = next;
        }
    }
}

#[test]
fn sphere_is_an_equilibrium_for_every_scale() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for _ in 0..20 {
        let x0 = Sequence::new(
            (0..6)
                .map(|_| {
                    Token(
                        (0..4)
                            .map(|_| rng.sample(StandardNormal))
                            .collect::<Vec<f64>>(),
                    )
                    .normalized()
                    .scale(2.5)
                })
                .collect(),
        )
        .unwrap();
        for xi in [0.1, 1.0, 7.0] {
            for gamma in [0.2, 1.0] {
                assert_eq!(step(&x0, &DynamicsConfig::scaled_identity(gamma, xi)), x0);
            }
        }
    }
}

#[test]
fn full_clustering_decay_is_geometric() {
    let x0 = seq(&[&[2.0, 2.0], &[0.5, 1.5], &[1.9, 0.1], &[1.0, 1.0]]);
    let cfg = DynamicsConfig::scaled_identity(0.5, 1.0);
    let apex = x0[0].clone();
    let d0: Vec<f64> = x0.iter().map(|x| x.dist(&apex)).collect();
    let mut x = x0;
    for k in 1..=10 {
        x = step(&x, &cfg);
        for i in 1..4 {
            let want = 0.5f64.powi(k) * d0[i];
            assert!((x[i].dist(&apex) - want).abs() <= 1e-12 * want);
        }
    }
}
