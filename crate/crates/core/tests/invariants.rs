//! Cross-module invariants: identities the model forces on the public API,
//! checked over grids and randomized inputs rather than at pinned points.

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use seqstop_core::analysis;
use seqstop_core::estimators::{conditional_mle, marginal_mle, ScoreTransform};
use seqstop_core::model::{
    joint_density, simulate_trial, stop_probability, Stage, StoppingRule, TrialConfig,
    TrialOutcome,
};
use seqstop_core::special;

fn assert_rel(actual: f64, expected: f64, tol: f64) {
    let scale = expected.abs().max(1.0);
    assert!(
        (actual - expected).abs() <= tol * scale,
        "expected {expected:e}, got {actual:e} (tol {tol:e})"
    );
}

/// Composite Simpson with `panels` even subdivisions — accurate enough for
/// the smooth densities below without reaching into private quadratures.
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    assert!(panels.is_multiple_of(2));
    let h = (b - a) / panels as f64;
    let mut acc = f(a) + f(b);
    for i in 1..panels {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + i as f64 * h);
    }
    acc * h / 3.0
}

#[test]
fn score_transforms_are_strictly_increasing_with_positive_slope() {
    for transform in [ScoreTransform::Psi1, ScoreTransform::Psi2] {
        let mut prev = f64::NEG_INFINITY;
        for i in 0..=10_000 {
            let x = -600.0 + 0.12 * f64::from(i);
            let y = transform.eval(x);
            assert!(y.is_finite(), "{transform:?}({x}) not finite");
            assert!(y > prev, "{transform:?} not increasing at {x}");
            assert!(transform.deriv(x) > 0.0, "{transform:?}' ≤ 0 at {x}");
            prev = y;
        }
    }
}

#[test]
fn inversion_round_trips_across_the_working_range() {
    for i in 0..=3_000 {
        let x = -300.0 + 0.1 * f64::from(i);
        let back = ScoreTransform::Psi1.invert(ScoreTransform::Psi1.eval(x)).unwrap();
        assert_rel(back.x, x, 1e-10);
    }
    for i in 0..=6_000 {
        let x = -300.0 + 0.1 * f64::from(i);
        let back = ScoreTransform::Psi2.invert(ScoreTransform::Psi2.eval(x)).unwrap();
        assert_rel(back.x, x, 1e-10);
    }
}

// ψ₁(x) > x pins the stage-One conditional MLE strictly below the marginal
// one; ψ₂(x) < √2·x flips the ordering on stage Two.
#[test]
fn conditional_mle_is_below_marginal_on_stage_one_and_above_on_stage_two() {
    // The gap is a Mills ratio, so the grids stop where it would sink
    // below f64 resolution and strictness becomes unobservable.
    for n in [1u64, 4, 25] {
        for i in 0..200 {
            let k = 1e-3 + 0.025 * f64::from(i);
            let outcome = TrialOutcome::stage_one(n, k).unwrap();
            let cond = conditional_mle(&outcome).unwrap().value;
            let marg = marginal_mle(&outcome).value;
            assert!(cond < marg, "stage One n={n} k={k}: {cond} !< {marg}");
        }
        for i in 0..200 {
            let k = -8.0 + 0.15 * f64::from(i);
            let outcome = TrialOutcome::stage_two(n, -1.0, k).unwrap();
            let cond = conditional_mle(&outcome).unwrap().value;
            let marg = marginal_mle(&outcome).value;
            assert!(cond > marg, "stage Two n={n} k={k}: {cond} !> {marg}");
        }
    }
}

#[test]
fn joint_density_normalizes_over_both_stages() {
    for n in [1u64, 4, 25] {
        for mu in [0.0, 0.7] {
            let s = (n as f64).sqrt();
            let f1 = |k: f64| joint_density(n, Stage::One, k, mu).unwrap();
            let f2 = |k: f64| joint_density(n, Stage::Two, k, mu).unwrap();
            let one = simpson(f1, 0.0, n as f64 * mu + 14.0 * s, 40_000);
            let spread = 14.0 * (2.0 * n as f64).sqrt();
            let center = 2.0 * n as f64 * mu;
            let two = simpson(f2, center - spread, center + spread, 40_000);
            assert_rel(one + two, 1.0, 1e-8);
        }
    }
}

#[test]
fn stage_probabilities_split_the_density_mass() {
    for n in [1u64, 4, 25] {
        for mu in [0.0, 0.7, -1.3] {
            let (p1, p2) = seqstop_core::model::stage_probabilities(n, mu);
            assert_rel(p1 + p2, 1.0, 1e-14);
            assert_rel(p1, special::cdf(mu * (n as f64).sqrt()), 1e-14);
        }
    }
}

// The n-free expectations are integrated once and scaled by 1/√n, so every
// report is an exact rescaling of the n = 1 report.
#[test]
fn marginal_mae_rescales_exactly_in_n() {
    let base = analysis::marginal_mae(1).unwrap().mae;
    for n in [2u64, 3, 4, 10, 97, 1_000_000, 1_000_000_000_000] {
        let scaled = analysis::marginal_mae(n).unwrap().mae;
        assert_eq!(scaled.to_bits(), (base / (n as f64).sqrt()).to_bits());
    }
}

// At μ = 0 the two stage terms have closed forms: E[ξ·1_{ξ≥0}] = φ(0) and
// (1/√2)·E[|ξ|(1 − Φ(ξ))] = 1/(2√π).
#[test]
fn marginal_mae_decomposition_matches_the_analytic_stage_terms() {
    let report = analysis::marginal_mae(1).unwrap();
    let (t1, t2) = report.decomposition;
    assert_rel(t1, special::pdf(0.0), 1e-12);
    assert_rel(t2, std::f64::consts::FRAC_2_SQRT_PI / 4.0, 1e-12);
    assert_eq!(report.mae.to_bits(), (t1 + t2).to_bits());
}

#[test]
fn quadrature_dominates_the_bound_and_both_grow_with_the_level() {
    for n in [1u64, 4, 25] {
        let mut prev_q = 0.0;
        let mut prev_b = 0.0;
        for level in [1.0, 2.0, 5.0, 10.0, 50.0] {
            let q = analysis::truncated_mae_quadrature(n, level).unwrap();
            let b = analysis::truncated_bound(n, level).unwrap().value;
            assert!(q > b, "n={n} N={level}: quadrature {q} ≤ bound {b}");
            assert!(b > 0.0, "n={n} N={level}: bound {b} ≤ 0");
            assert!(q > prev_q && b > prev_b, "n={n} N={level}: not increasing");
            prev_q = q;
            prev_b = b;
        }
    }
}

// Both divergence columns grow logarithmically, with different tail
// coefficients: the quadrature's integrand tends to φ(0)/t, while the bound
// freezes the density at its minimum φ(ψ₁(0)) — which is why it sits below.
#[test]
fn divergence_curve_slopes_approach_their_tail_coefficients() {
    let levels = [100.0, 1000.0, 10_000.0];
    let rows = analysis::divergence_curve(1, &levels).unwrap();
    let quads: Vec<f64> = rows.iter().map(|r| r.quadrature).collect();
    let bounds: Vec<f64> = rows.iter().map(|r| r.bound).collect();
    let slope_q = analysis::fit_log_slope(&levels, &quads).unwrap();
    let slope_b = analysis::fit_log_slope(&levels, &bounds).unwrap();
    assert_rel(slope_q, special::pdf(0.0), 1e-3);
    assert_rel(slope_b, special::pdf(ScoreTransform::Psi1.eval(0.0)), 1e-3);
}

#[test]
fn transform_integral_identity_holds_on_mixed_ranges() {
    for transform in [ScoreTransform::Psi1, ScoreTransform::Psi2] {
        for (a, b) in [(-40.0, -10.0), (-5.0, 5.0), (0.0, 40.0)] {
            let defect = analysis::integral_identity_check(transform, a, b).unwrap();
            assert!(
                defect.abs() <= 1e-9,
                "{transform:?} on [{a},{b}]: defect {defect:e}"
            );
        }
    }
}

proptest! {
    #[test]
    fn stop_probability_stays_in_the_unit_interval(
        k in -1e6f64..1e6,
        n in 1u64..1_000_000,
        gamma in 0.0f64..4.0,
    ) {
        let indicator = stop_probability(&StoppingRule::Indicator, n, k);
        prop_assert!(indicator == 0.0 || indicator == 1.0);
        let rule = StoppingRule::smooth(special::cdf, gamma).unwrap();
        let p = stop_probability(&rule, n, k);
        prop_assert!((0.0..=1.0).contains(&p), "p = {p}");
    }

    #[test]
    fn simulated_outcomes_are_consistent_with_the_indicator_rule(
        mu in -3.0f64..3.0,
        n in 1u64..1000,
        seed in any::<u64>(),
    ) {
        let config = TrialConfig::new(n, mu, 1.0, StoppingRule::Indicator).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let outcome = simulate_trial(&config, &mut rng);
        prop_assert_eq!(outcome.n(), n);
        match outcome.stage() {
            Stage::One => {
                prop_assert!(outcome.k_final() >= 0.0);
                prop_assert_eq!(outcome.sample_size(), n);
            }
            Stage::Two => {
                prop_assert!(outcome.k_interim() < 0.0);
                prop_assert_eq!(outcome.sample_size(), 2 * n);
            }
        }
    }

    #[test]
    fn psi1_inversion_round_trips_from_the_value_side(y in 1e-6f64..30.0) {
        let x = ScoreTransform::Psi1.invert(y).unwrap().x;
        prop_assert!((ScoreTransform::Psi1.eval(x) - y).abs() <= 1e-9 * y.max(1.0));
    }

    #[test]
    fn psi2_inversion_round_trips_from_the_value_side(y in -40.0f64..40.0) {
        let x = ScoreTransform::Psi2.invert(y).unwrap().x;
        prop_assert!((ScoreTransform::Psi2.eval(x) - y).abs() <= 1e-9 * y.abs().max(1.0));
    }

    #[test]
    fn marginal_mle_is_the_score_over_the_sample_size(k in -50.0f64..50.0, n in 1u64..1000) {
        let one = TrialOutcome::stage_one(n, k.abs()).unwrap();
        prop_assert_eq!(marginal_mle(&one).value, k.abs() / n as f64);
        let two = TrialOutcome::stage_two(n, -0.5, k).unwrap();
        prop_assert_eq!(marginal_mle(&two).value, k / (2 * n) as f64);
    }
}
