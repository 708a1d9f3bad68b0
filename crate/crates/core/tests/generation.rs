use std::sync::Arc;

use rand::rngs::SmallRng;
use rand::{Rng, SeedableRng};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use qnet_route::overlay::{build_deterministic_ring, Lifecycle, SlotState, Stepping};
use qnet_route::physics::{
    sample_batch_ready, sample_elementary_time, window_success_prob, WindowMode,
};
use qnet_route::topology::build_ring;

const P0: f64 = 0.0003;

/// Pearson statistic of `xs` against Geometric(p) on support 1.., with
/// equal-probability bins; returns (statistic, degrees of freedom).
fn geometric_chi_square(xs: &[u64], p: f64, bins: usize) -> (f64, f64) {
    let ln_q = (-p).ln_1p();
    // upper edges t_k with P(X <= t_k) ~ k/bins
    let mut edges: Vec<u64> = (1..bins)
        .map(|k| ((1.0 - k as f64 / bins as f64).ln() / ln_q).floor() as u64)
        .collect();
    edges.dedup();
    let cdf = |t: u64| 1.0 - (ln_q * t as f64).exp();
    let mut expected = Vec::new();
    let mut lo = 0u64;
    for &hi in &edges {
        expected.push(cdf(hi) - cdf(lo));
        lo = hi;
    }
    expected.push(1.0 - cdf(lo));
    let mut observed = vec![0usize; expected.len()];
    for &x in xs {
        let k = edges.partition_point(|&e| e < x);
        observed[k] += 1;
    }
    let n = xs.len() as f64;
    let stat = observed
        .iter()
        .zip(&expected)
        .map(|(&o, &e)| (o as f64 - n * e).powi(2) / (n * e))
        .sum();
    (stat, (expected.len() - 1) as f64)
}

#[test]
fn elementary_creation_time_is_geometric() {
    let mut rng = SmallRng::seed_from_u64(11);
    let xs: Vec<u64> = (0..100_000)
        .map(|_| sample_elementary_time(P0, &mut rng))
        .collect();
    let mean = xs.iter().sum::<u64>() as f64 / xs.len() as f64;
    assert!((mean * P0 - 1.0).abs() < 0.05, "mean {mean}");
    let (stat, dof) = geometric_chi_square(&xs, P0, 20);
    let crit = ChiSquared::new(dof).unwrap().inverse_cdf(0.999);
    assert!(stat < crit, "chi2 {stat} >= {crit}");
}

#[test]
fn chi_square_rejects_a_wrong_rate() {
    let mut rng = SmallRng::seed_from_u64(12);
    let xs: Vec<u64> = (0..100_000)
        .map(|_| sample_elementary_time(P0 * 1.1, &mut rng))
        .collect();
    let (stat, dof) = geometric_chi_square(&xs, P0, 20);
    assert!(stat > ChiSquared::new(dof).unwrap().inverse_cdf(0.999));
}

#[test]
fn window_success_frequency_matches_closed_form() {
    // oracle: per-step Bernoulli trials for each segment of each window
    let (t, d) = (1000u64, 3u32);
    let mut rng = SmallRng::seed_from_u64(13);
    let windows = 100_000;
    let mut hits = 0;
    for _ in 0..windows {
        let ok = (0..d).all(|_| {
            // first success within t steps, drawn by inversion of the step law
            let u: f64 = rng.random();
            (u.ln() / (-P0).ln_1p()).floor() < t as f64
        });
        hits += ok as u32;
    }
    let freq = hits as f64 / windows as f64;
    let q = window_success_prob(P0, t, d);
    assert!((q - 0.01744).abs() < 5e-5);
    assert!((freq / q - 1.0).abs() < 0.05, "freq {freq} vs {q}");
}

#[test]
fn sampled_ready_time_counts_windows_geometrically() {
    let (t, d) = (1000u64, 2u32);
    let q = window_success_prob(P0, t, d);
    let mut rng = SmallRng::seed_from_u64(14);
    let n = 100_000;
    let mut failed = 0u64;
    for _ in 0..n {
        let (g, ready) = sample_batch_ready(P0, Some(t), WindowMode::PerSlot, 0, &[d], &mut rng);
        assert_eq!(ready.len(), 1);
        failed += (g - 1) / t;
    }
    let mean = failed as f64 / n as f64;
    let want = (1.0 - q) / q;
    assert!((mean / want - 1.0).abs() < 0.05, "{mean} vs {want}");
}

fn regeneration_times(stepping: Stepping, samples: usize) -> Vec<u64> {
    let g = Arc::new(build_ring(8).unwrap());
    let mut vg = build_deterministic_ring(g, 2, 1).unwrap();
    vg.set_lifecycle(Lifecycle {
        p0: 0.01,
        t_th: Some(100),
        stepping,
        ..Lifecycle::default()
    });
    let pool = vg.pool_id(0, 2).unwrap();
    let mut out = Vec::with_capacity(samples);
    let mut now = 0;
    let mut ev = Vec::new();
    while out.len() < samples {
        vg.advance_pool(pool, now, &mut ev);
        let r = vg.reserve_pool(pool, 1, 0);
        if r.handles.is_empty() {
            now += 1;
            continue;
        }
        vg.consume(&r.handles, 0, now).unwrap();
        let start = now;
        loop {
            now += 1;
            vg.advance_pool(pool, now, &mut ev);
            if let SlotState::Available { created_at } = vg.pool(pool).slots[0].state {
                out.push(created_at - start);
                break;
            }
        }
    }
    out
}

#[test]
fn stepwise_and_sampled_generation_agree() {
    let a = regeneration_times(Stepping::Sampled, 20_000);
    let b = regeneration_times(Stepping::Stepwise, 20_000);
    let mean = |v: &[u64]| v.iter().sum::<u64>() as f64 / v.len() as f64;
    let (ma, mb) = (mean(&a), mean(&b));
    assert!((ma / mb - 1.0).abs() < 0.05, "{ma} vs {mb}");
}
