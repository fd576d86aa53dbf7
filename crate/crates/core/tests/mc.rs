//! End-to-end Monte Carlo checks: determinism under parallelism, agreement
//! with the exact two-stage law, and agreement with the quadrature module.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use seqstop_core::analysis;
use seqstop_core::model::{simulate_trial, Stage, StoppingRule, TrialConfig};
use seqstop_core::montecarlo::{run_mc, tail_histogram, McSpec};
use seqstop_core::special;

fn indicator_spec(n: u64, reps: u64, seed: u64, thresholds: Vec<f64>) -> McSpec {
    let config = TrialConfig::new(n, 0.0, 1.0, StoppingRule::Indicator).unwrap();
    McSpec::new(config, reps, seed, thresholds).unwrap()
}

#[test]
fn results_are_identical_across_thread_pool_sizes() {
    let spec = indicator_spec(1, 150_000, 5, vec![2.0, 8.0]);
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap();
        pool.install(|| (run_mc(&spec), tail_histogram(&spec, 10).unwrap()))
    };
    let (summary_1, hist_1) = run(1);
    for threads in [2, 8] {
        let (summary, hist) = run(threads);
        assert_eq!(summary, summary_1, "summary differs at {threads} threads");
        assert_eq!(hist, hist_1, "histogram differs at {threads} threads");
    }
}

// 100 equiprobable cells: stage One splits [0, ∞) by the conditional law of
// K_n given K_n ≥ 0, stage Two splits ℝ by P(K_2n ≤ t√(2n) | K_n < 0) =
// 2Φ(t) − Φ(t)². Each cell carries probability 1/100 exactly, so Pearson's
// statistic is χ²₉₉; 148.2303… is its 99.9% point.
#[test]
fn sampled_outcomes_follow_the_exact_two_stage_law() {
    let n = 25u64;
    let reps = 200_000u64;
    let root_n = 5.0;
    let one_edges: Vec<f64> = (1..50)
        .map(|j| root_n * special::quantile(0.5 + f64::from(j) / 100.0))
        .collect();
    let two_edges: Vec<f64> = (1..50)
        .map(|j| {
            let t = special::quantile(1.0 - (1.0 - f64::from(j) / 50.0).sqrt());
            t * (2.0 * n as f64).sqrt()
        })
        .collect();

    let config = TrialConfig::new(n, 0.0, 1.0, StoppingRule::Indicator).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    let mut cells = [0u64; 100];
    for _ in 0..reps {
        let outcome = simulate_trial(&config, &mut rng);
        let k = outcome.k_final();
        let cell = match outcome.stage() {
            Stage::One => one_edges.partition_point(|&e| e <= k),
            Stage::Two => 50 + two_edges.partition_point(|&e| e <= k),
        };
        cells[cell] += 1;
    }

    let expected = reps as f64 / 100.0;
    let chi2: f64 = cells
        .iter()
        .map(|&obs| {
            let d = obs as f64 - expected;
            d * d / expected
        })
        .sum();
    assert!(chi2 < 148.230_359_165_101_73, "χ² = {chi2}");
}

// Per-octave absolute mass of the conditional MLE settles at φ(0)·log 2 =
// 0.2765257…; targets and restricted second moments below are the exact
// values for octaves 4–10 at n = 1. Seven simultaneous 4σ bands.
#[test]
fn octave_masses_flatten_to_the_tail_constant() {
    let reps = 2_000_000u64;
    let spec = indicator_spec(1, reps, 13, vec![]);
    let hist = tail_histogram(&spec, 12).unwrap();
    assert_eq!(hist.rows.len(), 14);

    let targets = [
        (4usize, 0.272803700181, 6.30356678105),
        (5, 0.275580967359, 12.7258298457),
        (6, 0.276288615878, 25.5120715856),
        (7, 0.276466384142, 51.0544855548),
        (8, 0.276510880087, 102.124159468),
        (9, 0.276522007447, 204.255915265),
        (10, 0.276524789497, 408.515628963),
    ];
    let kept = (reps - hist.degenerate_count) as f64;
    for (octave, mass, second_moment) in targets {
        let row = hist.rows[1 + octave];
        assert_eq!(row.lo, (octave as f64).exp2());
        let band = 4.0 * (second_moment / kept).sqrt();
        assert!(
            (row.mass - mass).abs() <= band,
            "octave {octave}: mass {} vs {mass} (band {band:e})",
            row.mass
        );
    }
}

// E[min(|μ̂_c|, T)] dominates the stage-One truncated MAE pointwise, so the
// sampled mean may not fall more than noise below the quadrature, which in
// turn dominates the closed-form bound.
#[test]
fn sampled_truncations_dominate_the_quadrature_and_the_bound() {
    let n = 4u64;
    let reps = 400_000u64;
    let spec = indicator_spec(n, reps, 23, vec![2.5, 5.0]);
    let summary = run_mc(&spec);

    let freq_se = (0.25 / reps as f64).sqrt();
    assert!(
        (summary.stage_one_freq - 0.5).abs() <= 4.0 * freq_se,
        "stage-One frequency {}",
        summary.stage_one_freq
    );

    let closed = analysis::marginal_mae(n).unwrap().mae;
    let marg = summary.marginal_mae;
    assert!(
        (marg.value - closed).abs() <= 4.0 * marg.se,
        "marginal MAE {} vs {closed}",
        marg.value
    );

    for (threshold, level) in [(2.5, 5.0), (5.0, 10.0)] {
        let (t, mc) = summary
            .conditional_truncated_mae
            .iter()
            .copied()
            .find(|(t, _)| *t == threshold)
            .unwrap();
        assert_eq!(t, threshold);
        let quad = analysis::truncated_mae_quadrature(n, level).unwrap();
        let bound = analysis::truncated_bound(n, level).unwrap().value;
        assert!(quad > bound);
        assert!(
            mc.value + 4.0 * mc.se >= quad,
            "T={threshold}: sampled {} + 4·{} below quadrature {quad}",
            mc.value,
            mc.se
        );
    }
}
