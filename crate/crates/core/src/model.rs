//! The two-stage group-sequential trial: stopping rules, simulation, and the
//! exact joint density of (stage, running sum).
//!
//! A first stage of `n` i.i.d. N(μ, σ²) draws is summed to K_n; the trial
//! stops there with probability ψ(K_n/n^γ) and otherwise continues to 2n
//! draws. The hard indicator rule ψ = 1_{[0,∞)} is the case of interest —
//! its stopped-sum density has closed forms at μ = 0 and a one-dimensional
//! convolution integral elsewhere.

use std::fmt;
use std::sync::Arc;

use rand::RngCore;

use crate::analysis::{integrate, QuadratureSpec};
use crate::error::{ensure_finite, Error, Result};
use crate::special;

/// Which analysis the trial stopped at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stage {
    One,
    Two,
}

impl Stage {
    /// Multiplier turning the first-stage size into the realized sample size.
    pub fn factor(self) -> u64 {
        match self {
            Stage::One => 1,
            Stage::Two => 2,
        }
    }
}

/// First-stage stopping rule ψ(K_n/n^γ).
///
/// `Indicator` is 1_{[0,∞)}: stop exactly when K_n ≥ 0. The tie K_n = 0 has
/// probability zero but is fixed to "stop" so the rule is a deterministic
/// function of the data. The indicator is scale-invariant, so γ never
/// enters its value. `Smooth` wraps an arbitrary ψ: ℝ → [0,1] with a shape
/// exponent γ ≥ 0 (γ = 1/2 scales by the statistic's own standard
/// deviation; γ = 0 applies ψ to the raw sum).
#[derive(Clone)]
pub enum StoppingRule {
    Indicator,
    Smooth {
        psi: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
        gamma: f64,
    },
}

impl StoppingRule {
    /// Randomized rule stopping with probability ψ(K_n/n^γ).
    pub fn smooth(psi: impl Fn(f64) -> f64 + Send + Sync + 'static, gamma: f64) -> Result<Self> {
        ensure_finite("gamma", gamma)?;
        if gamma < 0.0 {
            return Err(Error::Invalid {
                arg: "gamma",
                reason: "must be non-negative",
            });
        }
        Ok(StoppingRule::Smooth {
            psi: Arc::new(psi),
            gamma,
        })
    }

    pub fn is_indicator(&self) -> bool {
        matches!(self, StoppingRule::Indicator)
    }
}

impl fmt::Debug for StoppingRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StoppingRule::Indicator => f.write_str("Indicator"),
            StoppingRule::Smooth { gamma, .. } => f
                .debug_struct("Smooth")
                .field("gamma", gamma)
                .finish_non_exhaustive(),
        }
    }
}

/// Probability of stopping after the first stage given the running sum `k_n`.
///
/// Smooth outputs are clamped to [0,1] so a slightly out-of-range user ψ
/// cannot corrupt a simulation.
pub fn stop_probability(rule: &StoppingRule, n: u64, k_n: f64) -> f64 {
    debug_assert!(n >= 1);
    match rule {
        StoppingRule::Indicator => {
            if k_n >= 0.0 {
                1.0
            } else {
                0.0
            }
        }
        StoppingRule::Smooth { psi, gamma } => {
            let scaled = k_n / (n as f64).powf(*gamma);
            psi(scaled).clamp(0.0, 1.0)
        }
    }
}

/// Design parameters of a trial: first-stage size, data law, stopping rule.
#[derive(Debug, Clone)]
pub struct TrialConfig {
    pub n: u64,
    pub mu: f64,
    pub sigma: f64,
    pub rule: StoppingRule,
}

impl TrialConfig {
    pub fn new(n: u64, mu: f64, sigma: f64, rule: StoppingRule) -> Result<Self> {
        if n == 0 {
            return Err(Error::Invalid {
                arg: "n",
                reason: "must be at least 1",
            });
        }
        ensure_finite("mu", mu)?;
        ensure_finite("sigma", sigma)?;
        if sigma <= 0.0 {
            return Err(Error::Invalid {
                arg: "sigma",
                reason: "must be positive",
            });
        }
        Ok(TrialConfig { n, mu, sigma, rule })
    }
}

/// A realized trial: where it stopped, the interim sum K_n, and the final
/// sum K_N over the N = n or 2n draws actually taken.
///
/// Constructed only through [`TrialOutcome::stage_one`] /
/// [`TrialOutcome::stage_two`], which pin the stage-One identity
/// k_final = k_interim.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialOutcome {
    stage: Stage,
    n: u64,
    k_interim: f64,
    k_final: f64,
}

impl TrialOutcome {
    /// Trial stopped at the interim analysis: K_N = K_n.
    pub fn stage_one(n: u64, k: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::Invalid {
                arg: "n",
                reason: "must be at least 1",
            });
        }
        let k = ensure_finite("k", k)?;
        Ok(TrialOutcome {
            stage: Stage::One,
            n,
            k_interim: k,
            k_final: k,
        })
    }

    /// Trial ran to 2n draws: `k_interim` is the sum of the first n,
    /// `k_final` of all 2n.
    pub fn stage_two(n: u64, k_interim: f64, k_final: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::Invalid {
                arg: "n",
                reason: "must be at least 1",
            });
        }
        let k_interim = ensure_finite("k_interim", k_interim)?;
        let k_final = ensure_finite("k_final", k_final)?;
        Ok(TrialOutcome {
            stage: Stage::Two,
            n,
            k_interim,
            k_final,
        })
    }

    pub fn stage(&self) -> Stage {
        self.stage
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn k_interim(&self) -> f64 {
        self.k_interim
    }

    pub fn k_final(&self) -> f64 {
        self.k_final
    }

    /// Realized sample size N ∈ {n, 2n}.
    pub fn sample_size(&self) -> u64 {
        self.n * self.stage.factor()
    }
}

/// Uniform on the open interval (0,1): 53-bit mantissa offset by half an
/// ulp, so 0 and 1 are unreachable and the quantile transform stays finite.
pub(crate) fn uniform_open(rng: &mut impl RngCore) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Standard normal draw by inverse CDF. Reproducible across platforms and
/// worker layouts, unlike rejection samplers whose draw count is random.
pub(crate) fn standard_normal(rng: &mut impl RngCore) -> f64 {
    special::quantile(uniform_open(rng))
}

/// Simulates one trial.
///
/// The stage sums are drawn directly as K_n ~ N(nμ, nσ²) and an independent
/// equally-distributed increment — exactly the law of the partial sums,
/// without paying for n individual draws. Stream consumption per rep is
/// fixed given the rule kind: one normal, then for a Smooth rule one
/// deciding uniform (consumed even when ψ ∈ {0,1}), then on continuation a
/// second normal. The indicator rule is deterministic in K_n and consumes
/// no uniform.
pub fn simulate_trial(config: &TrialConfig, rng: &mut impl RngCore) -> TrialOutcome {
    let nf = config.n as f64;
    let mean = nf * config.mu;
    let scale = nf.sqrt() * config.sigma;
    let k_n = mean + scale * standard_normal(rng);
    let stop = match &config.rule {
        StoppingRule::Indicator => k_n >= 0.0,
        rule => uniform_open(rng) < stop_probability(rule, config.n, k_n),
    };
    if stop {
        TrialOutcome {
            stage: Stage::One,
            n: config.n,
            k_interim: k_n,
            k_final: k_n,
        }
    } else {
        let k_2n = k_n + mean + scale * standard_normal(rng);
        TrialOutcome {
            stage: Stage::Two,
            n: config.n,
            k_interim: k_n,
            k_final: k_2n,
        }
    }
}

/// Joint density of (stage, K_N) under the indicator rule with σ = 1.
///
/// Stage One is closed for every μ: the rule only truncates the support, so
/// f₁(k) = (1/√n)·φ((k − nμ)/√n)·1_{[0,∞)}(k). Stage Two at μ = 0 has the
/// closed form f₂(k) = (1/√(2n))·φ(k/√(2n))·[1 − Φ(k/√(2n))]; for μ ≠ 0 it
/// is evaluated as the defining convolution over the negative interim sum,
/// ∫_{s<0} φ(s; nμ, n)·φ(k − s; nμ, n) ds, by adaptive quadrature.
pub fn joint_density(n: u64, stage: Stage, k: f64, mu: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::Invalid {
            arg: "n",
            reason: "must be at least 1",
        });
    }
    ensure_finite("k", k)?;
    ensure_finite("mu", mu)?;
    let nf = n as f64;
    match stage {
        Stage::One => {
            if k < 0.0 {
                return Ok(0.0);
            }
            let root_n = nf.sqrt();
            Ok(special::pdf((k - nf * mu) / root_n) / root_n)
        }
        Stage::Two => {
            if mu == 0.0 {
                let root_2n = (2.0 * nf).sqrt();
                let t = k / root_2n;
                Ok(special::pdf(t) * special::cdf(-t) / root_2n)
            } else {
                convolution_density(nf, k, mu)
            }
        }
    }
}

/// Stage-Two density as the convolution of the two stage increments over a
/// negative interim sum.
///
/// The integrand in s is the product of two N(nμ, n) kernels — a Gaussian
/// centred at s = k/2 with standard deviation √(n/2) — so the infinite
/// range is truncated at `cutoff` of those widths (relative error < 1e-31)
/// before intersecting with s < 0. An empty intersection means the true
/// value is below any representable tolerance and returns 0.
fn convolution_density(nf: f64, k: f64, mu: f64) -> Result<f64> {
    let spec = QuadratureSpec::default();
    let root_n = nf.sqrt();
    let mean = nf * mu;
    let half_width = spec.cutoff * (nf / 2.0).sqrt();
    let lo = k / 2.0 - half_width;
    let hi = (k / 2.0 + half_width).min(0.0);
    if lo >= hi {
        return Ok(0.0);
    }
    integrate(
        |s| special::pdf((s - mean) / root_n) * special::pdf((k - s - mean) / root_n) / nf,
        lo,
        hi,
        &spec,
    )
}

/// Stage probabilities (P[N = n], P[N = 2n]) = (Φ(√n·μ), Φ(−√n·μ)) under
/// the indicator rule with σ = 1.
pub fn stage_probabilities(n: u64, mu: f64) -> (f64, f64) {
    debug_assert!(n >= 1);
    let z = (n as f64).sqrt() * mu;
    (special::cdf(z), special::cdf(-z))
}
