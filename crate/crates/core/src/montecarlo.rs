//! Replicated-trial Monte Carlo with deterministic parallel reduction.
//!
//! Replications are partitioned into fixed chunks of 2¹⁶; chunk i runs on
//! the ChaCha8 substream selected by `set_stream(i)` of the spec's seed,
//! and per-chunk partials are folded sequentially in chunk order. Results
//! are therefore a pure function of the spec — bit-identical for any rayon
//! worker count — and normals come from the inverse CDF, so no draw-count
//! randomness leaks between replications.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimators::{conditional_mle, marginal_mle};
use crate::model::{simulate_trial, Stage, TrialConfig, TrialOutcome};

const CHUNK: u64 = 1 << 16;

/// Replication plan for a Monte Carlo run.
#[derive(Debug, Clone)]
pub struct McSpec {
    pub config: TrialConfig,
    pub reps: u64,
    pub seed: u64,
    /// Truncation levels T for E[min(|μ̂_c|, T)], strictly increasing.
    pub thresholds: Vec<f64>,
}

impl McSpec {
    pub fn new(config: TrialConfig, reps: u64, seed: u64, thresholds: Vec<f64>) -> Result<Self> {
        if reps == 0 {
            return Err(Error::Invalid {
                arg: "reps",
                reason: "must be at least 1",
            });
        }
        for (i, &t) in thresholds.iter().enumerate() {
            if !t.is_finite() || t <= 0.0 {
                return Err(Error::Invalid {
                    arg: "thresholds",
                    reason: "must be finite and positive",
                });
            }
            if i > 0 && t <= thresholds[i - 1] {
                return Err(Error::Invalid {
                    arg: "thresholds",
                    reason: "must be strictly increasing",
                });
            }
        }
        // The conditional MLE column uses the closed inversion, which exists
        // for the indicator rule only; a quadrature-based generic fit per
        // replication would be orders of magnitude too slow to be useful.
        if !config.rule.is_indicator() && !thresholds.is_empty() {
            return Err(Error::Invalid {
                arg: "thresholds",
                reason: "conditional-MLE thresholds require the indicator rule",
            });
        }
        // The closed inversion is also a unit-variance formula.
        if config.sigma != 1.0 && !thresholds.is_empty() {
            return Err(Error::Invalid {
                arg: "thresholds",
                reason: "conditional-MLE thresholds require sigma = 1",
            });
        }
        Ok(McSpec {
            config,
            reps,
            seed,
            thresholds,
        })
    }
}

/// A Monte Carlo mean with its standard error (sample std / √count).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValueSe {
    pub value: f64,
    pub se: f64,
}

/// Aggregated results of a replicated run.
#[derive(Debug, Clone, PartialEq)]
pub struct McSummary {
    pub reps: u64,
    pub stage_one_freq: f64,
    pub marginal_mae: ValueSe,
    /// One (threshold, truncated MAE) entry per requested T.
    pub conditional_truncated_mae: Vec<(f64, ValueSe)>,
    /// Stage-One outcomes with K_n exactly 0 — the conditional MLE diverges
    /// there, so they are counted and excluded from its averages. Has
    /// probability zero under continuous sampling.
    pub degenerate_count: u64,
}

/// Runs `step` over every replication, chunked; returns per-chunk partials
/// in chunk order.
fn chunk_fold<A, New, Step>(spec: &McSpec, new: New, step: Step) -> Vec<A>
where
    A: Send,
    New: Fn() -> A + Sync,
    Step: Fn(&mut A, &TrialOutcome) + Sync,
{
    let chunk_count = spec.reps.div_ceil(CHUNK);
    (0..chunk_count)
        .into_par_iter()
        .map(|chunk| {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            rng.set_stream(chunk);
            let mut acc = new();
            let reps_here = CHUNK.min(spec.reps - chunk * CHUNK);
            for _ in 0..reps_here {
                let outcome = simulate_trial(&spec.config, &mut rng);
                step(&mut acc, &outcome);
            }
            acc
        })
        .collect()
}

struct Acc {
    stage_one: u64,
    degenerate: u64,
    marg_sum: f64,
    marg_sumsq: f64,
    /// Per threshold: (Σ min(|μ̂_c|, T), Σ min(...)²).
    trunc: Vec<(f64, f64)>,
}

impl Acc {
    fn new(thresholds: usize) -> Self {
        Acc {
            stage_one: 0,
            degenerate: 0,
            marg_sum: 0.0,
            marg_sumsq: 0.0,
            trunc: vec![(0.0, 0.0); thresholds],
        }
    }
}

fn mean_se(sum: f64, sumsq: f64, count: u64) -> ValueSe {
    let m = count as f64;
    let value = sum / m;
    let se = if count > 1 {
        let var = ((sumsq - sum * sum / m) / (m - 1.0)).max(0.0);
        (var / m).sqrt()
    } else {
        0.0
    };
    ValueSe { value, se }
}

/// Simulates `spec.reps` trials and summarizes |marginal MLE| and, per
/// threshold T, min(|conditional MLE|, T).
pub fn run_mc(spec: &McSpec) -> McSummary {
    let thresholds = &spec.thresholds;
    let partials = chunk_fold(
        spec,
        || Acc::new(thresholds.len()),
        |acc, outcome| {
            let marg = marginal_mle(outcome).value.abs();
            acc.marg_sum += marg;
            acc.marg_sumsq += marg * marg;
            if outcome.stage() == Stage::One {
                acc.stage_one += 1;
                if outcome.k_final() == 0.0 {
                    acc.degenerate += 1;
                    return;
                }
            }
            if thresholds.is_empty() {
                return;
            }
            let cond = match conditional_mle(outcome) {
                Ok(est) => est.value.abs(),
                // Inversion is total away from the k = 0 boundary handled above.
                Err(e) => unreachable!("conditional MLE on a simulated outcome: {e}"),
            };
            for (slot, &t) in acc.trunc.iter_mut().zip(thresholds) {
                let v = cond.min(t);
                slot.0 += v;
                slot.1 += v * v;
            }
        },
    );

    let mut total = Acc::new(thresholds.len());
    for acc in partials {
        total.stage_one += acc.stage_one;
        total.degenerate += acc.degenerate;
        total.marg_sum += acc.marg_sum;
        total.marg_sumsq += acc.marg_sumsq;
        for (into, from) in total.trunc.iter_mut().zip(&acc.trunc) {
            into.0 += from.0;
            into.1 += from.1;
        }
    }

    let kept = spec.reps - total.degenerate;
    McSummary {
        reps: spec.reps,
        stage_one_freq: total.stage_one as f64 / spec.reps as f64,
        marginal_mae: mean_se(total.marg_sum, total.marg_sumsq, spec.reps),
        conditional_truncated_mae: thresholds
            .iter()
            .zip(&total.trunc)
            .map(|(&t, &(sum, sumsq))| (t, mean_se(sum, sumsq, kept)))
            .collect(),
        degenerate_count: total.degenerate,
    }
}

/// One bin of the tail histogram.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistogramRow {
    pub lo: f64,
    pub hi: f64,
    pub count: u64,
    /// Σ |μ̂_c| over the bin, divided by (reps − degenerate): the bin's
    /// contribution to the (divergent) conditional MAE.
    pub mass: f64,
}

/// Log-spaced histogram of |μ̂_c| over stage-One outcomes.
#[derive(Debug, Clone, PartialEq)]
pub struct TailHistogram {
    /// Underflow [0,1), octaves [2^j, 2^{j+1}) for j = 0..bins, overflow.
    pub rows: Vec<HistogramRow>,
    pub stage_two_count: u64,
    pub degenerate_count: u64,
    pub reps: u64,
}

/// Histograms |conditional MLE| over stage-One outcomes into octave bins.
///
/// The |μ̂_c| tail is Cauchy-like (density ~ φ(0)/x² from μ̂_c ≈ −√n/K_n as
/// K_n → 0⁺), so octave counts halve per octave while octave masses tend to
/// the constant φ(0)·log 2 ≈ 0.2765 — each octave contributes the same
/// amount to the mean, which is the histogram picture of its divergence.
pub fn tail_histogram(spec: &McSpec, bins: u32) -> Result<TailHistogram> {
    if bins < 10 {
        return Err(Error::Invalid {
            arg: "bins",
            reason: "must be at least 10",
        });
    }
    if !spec.config.rule.is_indicator() {
        return Err(Error::Invalid {
            arg: "rule",
            reason: "tail histogram requires the indicator rule",
        });
    }
    let rows = bins as usize + 2;

    struct HistAcc {
        counts: Vec<u64>,
        sums: Vec<f64>,
        stage_two: u64,
        degenerate: u64,
    }

    let partials = chunk_fold(
        spec,
        || HistAcc {
            counts: vec![0; rows],
            sums: vec![0.0; rows],
            stage_two: 0,
            degenerate: 0,
        },
        |acc, outcome| {
            if outcome.stage() == Stage::Two {
                acc.stage_two += 1;
                return;
            }
            if outcome.k_final() == 0.0 {
                acc.degenerate += 1;
                return;
            }
            let v = match conditional_mle(outcome) {
                Ok(est) => est.value.abs(),
                Err(e) => unreachable!("conditional MLE on a simulated outcome: {e}"),
            };
            let row = if v < 1.0 {
                0
            } else {
                // v ≥ 1 so the octave index log₂(v) is ≥ 0; everything at
                // or past 2^bins lands in the overflow row.
                1 + (v.log2().floor() as u64).min(bins as u64) as usize
            };
            acc.counts[row] += 1;
            acc.sums[row] += v;
        },
    );

    let mut counts = vec![0u64; rows];
    let mut sums = vec![0.0f64; rows];
    let mut stage_two = 0u64;
    let mut degenerate = 0u64;
    for acc in partials {
        for i in 0..rows {
            counts[i] += acc.counts[i];
            sums[i] += acc.sums[i];
        }
        stage_two += acc.stage_two;
        degenerate += acc.degenerate;
    }

    let kept = (spec.reps - degenerate) as f64;
    let edges = |row: usize| -> (f64, f64) {
        if row == 0 {
            (0.0, 1.0)
        } else if row == rows - 1 {
            ((bins as f64).exp2(), f64::INFINITY)
        } else {
            let j = (row - 1) as f64;
            (j.exp2(), (j + 1.0).exp2())
        }
    };
    Ok(TailHistogram {
        rows: (0..rows)
            .map(|row| {
                let (lo, hi) = edges(row);
                HistogramRow {
                    lo,
                    hi,
                    count: counts[row],
                    mass: sums[row] / kept,
                }
            })
            .collect(),
        stage_two_count: stage_two,
        degenerate_count: degenerate,
        reps: spec.reps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::StoppingRule;

    fn indicator_spec(n: u64, reps: u64, seed: u64, thresholds: Vec<f64>) -> McSpec {
        let config = TrialConfig::new(n, 0.0, 1.0, StoppingRule::Indicator).unwrap();
        McSpec::new(config, reps, seed, thresholds).unwrap()
    }

    #[test]
    fn spec_validation() {
        let config = TrialConfig::new(1, 0.0, 1.0, StoppingRule::Indicator).unwrap();
        assert!(McSpec::new(config.clone(), 0, 0, vec![]).is_err());
        assert!(McSpec::new(config.clone(), 1, 0, vec![1.0, 1.0]).is_err());
        assert!(McSpec::new(config.clone(), 1, 0, vec![-1.0]).is_err());
        assert!(McSpec::new(config.clone(), 1, 0, vec![f64::NAN]).is_err());
        assert!(McSpec::new(config, 1, 0, vec![1.0, 2.0]).is_ok());

        let smooth = TrialConfig::new(
            1,
            0.0,
            1.0,
            StoppingRule::smooth(|_| 0.5, 0.5).unwrap(),
        )
        .unwrap();
        assert!(McSpec::new(smooth.clone(), 1, 0, vec![1.0]).is_err());
        assert!(McSpec::new(smooth, 1, 0, vec![]).is_ok());

        let scaled = TrialConfig::new(1, 0.0, 2.0, StoppingRule::Indicator).unwrap();
        assert!(McSpec::new(scaled.clone(), 1, 0, vec![1.0]).is_err());
        assert!(McSpec::new(scaled, 1, 0, vec![]).is_ok());
    }

    #[test]
    fn identical_seeds_are_bit_identical_across_worker_counts() {
        // 70k reps spans two chunks, so the merge order matters.
        let spec = indicator_spec(4, 70_000, 42, vec![1.0, 10.0]);
        let runs: Vec<McSummary> = [1usize, 3]
            .iter()
            .map(|&workers| {
                rayon::ThreadPoolBuilder::new()
                    .num_threads(workers)
                    .build()
                    .unwrap()
                    .install(|| run_mc(&spec))
            })
            .collect();
        assert_eq!(runs[0].stage_one_freq.to_bits(), runs[1].stage_one_freq.to_bits());
        assert_eq!(
            runs[0].marginal_mae.value.to_bits(),
            runs[1].marginal_mae.value.to_bits()
        );
        assert_eq!(runs[0].marginal_mae.se.to_bits(), runs[1].marginal_mae.se.to_bits());
        for (a, b) in runs[0]
            .conditional_truncated_mae
            .iter()
            .zip(&runs[1].conditional_truncated_mae)
        {
            assert_eq!(a.1.value.to_bits(), b.1.value.to_bits());
            assert_eq!(a.1.se.to_bits(), b.1.se.to_bits());
        }
    }

    #[test]
    fn marginal_summary_tracks_the_closed_form() {
        let spec = indicator_spec(100, 200_000, 7, vec![]);
        let summary = run_mc(&spec);
        assert_eq!(summary.reps, 200_000);
        assert_eq!(summary.degenerate_count, 0);
        assert!((summary.stage_one_freq - 0.5).abs() < 3.0 * (0.25f64 / 200_000.0).sqrt());
        let exact = crate::analysis::marginal_mae(100).unwrap().mae;
        assert!(
            (summary.marginal_mae.value - exact).abs() < 3.0 * summary.marginal_mae.se,
            "value {} vs exact {exact} (se {})",
            summary.marginal_mae.value,
            summary.marginal_mae.se
        );
        assert!(summary.conditional_truncated_mae.is_empty());
    }

    #[test]
    fn truncated_conditional_mae_matches_the_quadrature_targets() {
        let spec = indicator_spec(1, 200_000, 7, vec![5.0, 10.0]);
        let summary = run_mc(&spec);
        // E[min(|μ̂_c|, T)] at n = 1: quadrature oracle values.
        for ((_, got), expected) in summary
            .conditional_truncated_mae
            .iter()
            .zip([1.2767894837204324, 1.54173104217781])
        {
            assert!(
                (got.value - expected).abs() < 3.0 * got.se,
                "value {} vs {expected} (se {})",
                got.value,
                got.se
            );
        }
        let values: Vec<f64> = summary
            .conditional_truncated_mae
            .iter()
            .map(|(_, v)| v.value)
            .collect();
        assert!(values[0] < values[1]);
    }

    #[test]
    fn histogram_bookkeeping_is_exact() {
        let spec = indicator_spec(1, 150_000, 11, vec![]);
        let hist = tail_histogram(&spec, 12).unwrap();
        assert_eq!(hist.rows.len(), 14);
        assert_eq!((hist.rows[0].lo, hist.rows[0].hi), (0.0, 1.0));
        assert_eq!((hist.rows[1].lo, hist.rows[1].hi), (1.0, 2.0));
        assert_eq!(hist.rows[13].hi, f64::INFINITY);
        assert_eq!(hist.rows[13].lo, 4096.0);

        let binned: u64 = hist.rows.iter().map(|r| r.count).sum();
        assert_eq!(
            binned,
            hist.reps - hist.degenerate_count - hist.stage_two_count
        );
    }

    #[test]
    fn histogram_counts_and_masses_match_the_tail_law() {
        let reps = 400_000u64;
        let spec = indicator_spec(1, reps, 3, vec![]);
        let hist = tail_histogram(&spec, 10).unwrap();
        let m = reps as f64;

        // Exact bin probabilities and masses for |μ̂_c| at n=1, μ=0. Seven
        // bands are checked at once, so each gets 4σ (binomial σ for counts,
        // σ of the mean from the octave second moments for masses) to keep
        // the untuned seed honest without flaking.
        let under = &hist.rows[0];
        let p_under = 0.200801952673;
        assert!(
            (under.count as f64 - p_under * m).abs() < 4.0 * (p_under * (1.0 - p_under) * m).sqrt()
        );

        for (j, p, mass, m2) in [
            (0usize, 0.13376453042, 0.192617509401, 0.287971188162),
            (4, 0.0122862437963, 0.272803700181, 6.30356678105),
            (6, 0.00311385536397, 0.276288615878, 25.5120715856),
        ] {
            let row = &hist.rows[1 + j];
            assert!(
                (row.count as f64 - p * m).abs() < 4.0 * (p * (1.0 - p) * m).sqrt(),
                "octave {j} count {} vs expected {}",
                row.count,
                p * m
            );
            assert!(
                (row.mass - mass).abs() < 4.0 * (m2 / m).sqrt(),
                "octave {j} mass {} vs expected {mass}",
                row.mass
            );
        }
    }

    #[test]
    fn histogram_validation() {
        let spec = indicator_spec(1, 10, 0, vec![]);
        assert!(tail_histogram(&spec, 9).is_err());
        assert!(tail_histogram(&spec, 10).is_ok());

        let smooth = TrialConfig::new(
            1,
            0.0,
            1.0,
            StoppingRule::smooth(|_| 0.5, 0.5).unwrap(),
        )
        .unwrap();
        let spec = McSpec::new(smooth, 10, 0, vec![]).unwrap();
        assert!(tail_histogram(&spec, 12).is_err());
    }
}
