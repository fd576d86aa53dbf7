//! Marginal and conditional maximum-likelihood estimation of μ.
//!
//! The marginal MLE is the plain sample mean K_N/N. Conditioning on the
//! realized stage adds −log P_θ[N] to the log-likelihood, and the
//! stationarity condition rearranges into a monotone score equation per
//! stage:
//!
//! ```text
//! stage One:  K_n /√n    = ψ₁(√n·θ),  ψ₁(x) = x + φ(x)/Φ(x)
//! stage Two:  K_2n/√(2n) = ψ₂(√n·θ),  ψ₂(x) = √2·x − (1/√2)·φ(x)/(1−Φ(x))
//! ```
//!
//! Each ψ is a strictly increasing bijection — ψ₁ onto (0,∞), ψ₂ onto ℝ —
//! so the conditional MLE is one inverse evaluation scaled by 1/√n. The
//! generic path maximizes the conditional log-likelihood directly and
//! exists to cross-check the closed path (and to cover smooth rules, where
//! no closed form is available).

use std::f64::consts::{FRAC_1_SQRT_2, SQRT_2};

use crate::analysis::{integrate, QuadratureSpec};
use crate::error::{ensure_finite, Error, Result};
use crate::model::{stop_probability, Stage, StoppingRule, TrialOutcome};
use crate::special;

/// The stage-specific score transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreTransform {
    Psi1,
    Psi2,
}

/// How an [`Estimate`] was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Marginal,
    ConditionalClosed,
    ConditionalGeneric,
}

/// An estimate of μ with solver diagnostics.
///
/// `residual` is the final score-equation residual for the closed
/// conditional path, the final bracket width for the generic path, and 0
/// for the marginal estimator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub method: Method,
    pub iterations: u32,
    pub residual: f64,
}

/// Result of a monotone inversion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Inversion {
    pub x: f64,
    pub iterations: u32,
    pub residual: f64,
}

/// Left of this, ψ₁ and ψ₁′ come from the Mills continued fraction. The
/// direct forms are fine here but their cancellation noise grows like |x|³ε
/// — by −10 it would contaminate the 12th digit of ψ₁′ and put visible
/// jitter under the adaptive quadratures.
const CF_CUT: f64 = -3.0;

/// ψ₁(x) = x + φ(x)/Φ(x): positive, strictly increasing, → 0⁺ as x → −∞
/// and asymptotic to x as x → +∞.
///
/// The direct sum cancels catastrophically in the left tail (both operands
/// grow like |x| while the value shrinks like 1/|x|). With t = −x and the
/// continued-fraction tails Cₖ of the Mills ratio, φ/Φ(x) = t + C₁(t), so
/// the cancellation resolves algebraically:
///
///   ψ₁(x) = x + (t + C₁) = C₁(t),
///
/// a positive, subtraction-free expression.
fn psi1(x: f64) -> f64 {
    if x > CF_CUT {
        x + special::mills_lower(x)
    } else {
        special::mills_cf_tails(-x).0
    }
}

/// ψ₁′(x) = 1 − (φ/Φ)(x)·ψ₁(x) ∈ (0, 1).
///
/// The direct product form is 1 minus something close to 1 in the left
/// tail; past the cut the subtraction is again resolved through the
/// continued fraction: 1 − t·C₁ = C₁·C₂ and
/// C₂ − C₁ = (t + 2C₂ − C₃)·C₁C₂/2 give
///
///   ψ₁′(x) = C₁·(C₂ − C₁) = C₁²·C₂·(t + 2C₂ − C₃)/2,
///
/// every factor positive and O(1/t)-sized, so the result carries full
/// relative accuracy down the entire tail.
fn psi1_deriv(x: f64) -> f64 {
    if x > CF_CUT {
        1.0 - special::mills_lower(x) * psi1(x)
    } else {
        let t = -x;
        let (c1, c2, c3) = special::mills_cf_tails(t);
        0.5 * c1 * c1 * c2 * (t + 2.0 * c2 - c3)
    }
}

/// ψ₂(x) = √2·x − (1/√2)·φ(x)/(1−Φ(x)): strictly increasing onto ℝ,
/// asymptotic to √2·x on the left and to x/√2 on the right.
fn psi2(x: f64) -> f64 {
    SQRT_2 * x - FRAC_1_SQRT_2 * special::mills_upper(x)
}

/// ψ₂′(x) = √2 − (1/√2)·m(x)·(m(x) − x) with m = φ/(1−Φ), which lies in
/// (1/√2, √2).
///
/// m(x)·(m(x) − x) is 1 minus the conditional variance of a truncated
/// normal — i.e. exactly 1 − ψ₁′(−x) — so the whole expression collapses
/// to the cancellation-free form (1 + ψ₁′(−x))/√2.
fn psi2_deriv(x: f64) -> f64 {
    FRAC_1_SQRT_2 * (1.0 + psi1_deriv(-x))
}

impl ScoreTransform {
    pub fn for_stage(stage: Stage) -> Self {
        match stage {
            Stage::One => ScoreTransform::Psi1,
            Stage::Two => ScoreTransform::Psi2,
        }
    }

    /// Evaluates the transform; stable for |x| well past 600.
    pub fn eval(self, x: f64) -> f64 {
        match self {
            ScoreTransform::Psi1 => psi1(x),
            ScoreTransform::Psi2 => psi2(x),
        }
    }

    /// First derivative, positive everywhere.
    pub fn deriv(self, x: f64) -> f64 {
        match self {
            ScoreTransform::Psi1 => psi1_deriv(x),
            ScoreTransform::Psi2 => psi2_deriv(x),
        }
    }

    /// Solves ψ(x) = y to |ψ(x) − y| ≤ 1e-12·max(1, |y|).
    ///
    /// Safeguarded Newton inside a verified bracket: every iterate stays
    /// between the current sign-change endpoints, falling back to bisection
    /// whenever the Newton step would leave them.
    pub fn invert(self, y: f64) -> Result<Inversion> {
        ensure_finite("y", y)?;
        let (lo, hi) = self.bracket(y)?;
        let inv = match self {
            ScoreTransform::Psi1 => newton_in_bracket(psi1, psi1_deriv, y, lo, hi),
            ScoreTransform::Psi2 => newton_in_bracket(psi2, psi2_deriv, y, lo, hi),
        }?;
        let allowed = 1e-12 * y.abs().max(1.0);
        if inv.residual > allowed {
            return Err(Error::NoConvergence {
                iterations: inv.iterations,
                residual: inv.residual,
            });
        }
        Ok(inv)
    }

    /// Initial sign-change bracket from the asymptotics.
    fn bracket(self, y: f64) -> Result<(f64, f64)> {
        match self {
            ScoreTransform::Psi1 => {
                if y <= 0.0 {
                    return Err(Error::OutsideRange {
                        transform: "psi1",
                        value: y,
                    });
                }
                let psi0 = psi1(0.0);
                if y >= psi0 {
                    // ψ₁(0) ≤ y and ψ₁(y) > y since the Mills term is positive.
                    Ok((0.0, y))
                } else {
                    // The Mills bound Φ(x) > φ(x)·(−x)/(x²+1) gives
                    // ψ₁(x) < −1/x on x < 0, so ψ₁(−2/y) < y/2: the left end
                    // is always below the root. The right end creeps toward
                    // 0⁻ (where ψ₁ → ψ₁(0) > y) until it crosses.
                    let lo = -2.0 / y;
                    let mut hi = -0.5 * y;
                    for _ in 0..200 {
                        if psi1(hi) >= y {
                            return Ok((lo, hi));
                        }
                        hi *= 0.5;
                    }
                    Err(Error::NoBracket {
                        what: "psi1 inversion",
                        lo,
                        hi,
                    })
                }
            }
            ScoreTransform::Psi2 => {
                // ψ₂(x) < √2·x everywhere (the Mills term is positive), so
                // x = y/√2 − 1 is always below the root. For y ≤ 0 the root
                // is within one unit above y/√2; for y > 0 the right
                // asymptote slope 1/√2 pushes it out to ~√2·y, reached by
                // geometric growth.
                let center = y * FRAC_1_SQRT_2;
                let lo = center - 1.0;
                let mut step = 1.0;
                for _ in 0..200 {
                    let hi = center + step;
                    if psi2(hi) >= y {
                        return Ok((lo, hi));
                    }
                    step *= 2.0;
                }
                Err(Error::NoBracket {
                    what: "psi2 inversion",
                    lo,
                    hi: center + step,
                })
            }
        }
    }
}

/// Newton iteration confined to a sign-change bracket, with one extra
/// polishing step after the stopping tolerance (1e-13 on the score scale)
/// is met.
fn newton_in_bracket<F, D>(f: F, df: D, y: f64, mut lo: f64, mut hi: f64) -> Result<Inversion>
where
    F: Fn(f64) -> f64,
    D: Fn(f64) -> f64,
{
    let tol = 1e-13 * y.abs().max(1.0);
    let mut x = 0.5 * (lo + hi);
    let mut iterations = 0u32;
    let mut residual = f64::INFINITY;
    while iterations < 200 {
        iterations += 1;
        let r = f(x) - y;
        residual = r.abs();
        if residual <= tol {
            let d = df(x);
            if d.is_finite() && d > 0.0 {
                let polished = x - r / d;
                if polished.is_finite() {
                    let rp = (f(polished) - y).abs();
                    if rp < residual {
                        x = polished;
                        residual = rp;
                    }
                }
            }
            return Ok(Inversion {
                x,
                iterations,
                residual,
            });
        }
        if r > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let d = df(x);
        let step = x - r / d;
        x = if d > 0.0 && step > lo && step < hi {
            step
        } else {
            0.5 * (lo + hi)
        };
    }
    Err(Error::NoConvergence {
        iterations,
        residual,
    })
}

/// The sample mean K_N/N.
pub fn marginal_mle(outcome: &TrialOutcome) -> Estimate {
    Estimate {
        value: outcome.k_final() / outcome.sample_size() as f64,
        method: Method::Marginal,
        iterations: 0,
        residual: 0.0,
    }
}

/// Marginal log-likelihood of θ up to a θ-free constant: −(K_N − Nθ)²/(2N).
pub fn marginal_loglik(theta: f64, outcome: &TrialOutcome) -> f64 {
    let n = outcome.sample_size() as f64;
    let r = outcome.k_final() - n * theta;
    -r * r / (2.0 * n)
}

/// Closed-path conditional MLE: ψ₁⁻¹(K_n/√n)/√n after stage One,
/// ψ₂⁻¹(K_2n/√(2n))/√n after stage Two (indicator rule, σ = 1).
///
/// A stage-One sum of exactly zero sits on the stopping boundary where
/// ψ₁⁻¹ → −∞; a negative one cannot occur under the rule at all. Both are
/// reported as distinct errors rather than sentinel values.
pub fn conditional_mle(outcome: &TrialOutcome) -> Result<Estimate> {
    let root_n = (outcome.n() as f64).sqrt();
    let inv = match outcome.stage() {
        Stage::One => {
            let k = outcome.k_final();
            if k < 0.0 {
                return Err(Error::InconsistentOutcome(k));
            }
            if k == 0.0 {
                return Err(Error::DegenerateStatistic);
            }
            ScoreTransform::Psi1.invert(k / root_n)?
        }
        Stage::Two => {
            let root_2n = (2.0 * outcome.n() as f64).sqrt();
            ScoreTransform::Psi2.invert(outcome.k_final() / root_2n)?
        }
    };
    Ok(Estimate {
        value: inv.x / root_n,
        method: Method::ConditionalClosed,
        iterations: inv.iterations,
        residual: inv.residual,
    })
}

/// Conditional log-likelihood ℓ(θ) = −(K_N − Nθ)²/(2N) − log P_θ[N], up to
/// θ-free constants.
///
/// Under the indicator rule the stage probabilities are Φ(±√n·θ), taken in
/// log space so deep tails stay exact. For a smooth rule P_θ[stop] is the
/// quadrature of ψ(k/n^γ) against the N(nθ, n) law of K_n; the stage-Two
/// factor integrates 1 − ψ directly rather than subtracting from 1, so a
/// near-certain continuation keeps full relative accuracy. The probability is
/// floored at 1e-300 before the logarithm: the quadratic term dominates
/// long before the floor can bind, and the likelihood stays finite for
/// bracketed searches.
pub fn conditional_loglik(theta: f64, outcome: &TrialOutcome, rule: &StoppingRule) -> Result<f64> {
    ensure_finite("theta", theta)?;
    let base = marginal_loglik(theta, outcome);
    let nf = outcome.n() as f64;
    let log_p = match rule {
        StoppingRule::Indicator => {
            let z = nf.sqrt() * theta;
            match outcome.stage() {
                Stage::One => special::ln_cdf(z),
                Stage::Two => special::ln_cdf(-z),
            }
        }
        StoppingRule::Smooth { .. } => {
            let spec = QuadratureSpec::default();
            let sd = nf.sqrt();
            let mean = nf * theta;
            let (lo, hi) = (mean - spec.cutoff * sd, mean + spec.cutoff * sd);
            let n = outcome.n();
            let p = match outcome.stage() {
                Stage::One => integrate(
                    |k| stop_probability(rule, n, k) * special::pdf((k - mean) / sd) / sd,
                    lo,
                    hi,
                    &spec,
                )?,
                Stage::Two => integrate(
                    |k| (1.0 - stop_probability(rule, n, k)) * special::pdf((k - mean) / sd) / sd,
                    lo,
                    hi,
                    &spec,
                )?,
            };
            p.clamp(1e-300, 1.0).ln()
        }
    };
    Ok(base - log_p)
}

/// Conditional MLE by direct 1-D maximization over θ ∈ [−50, 50].
///
/// Indicator rule: the log-likelihood is strictly concave (its second
/// derivative is −N·ψ′ in the appropriate variable), so the analytic score
///
/// ```text
/// stage One:  g(θ) = (K_n − n·θ)  − √n·(φ/Φ)(√n·θ)
/// stage Two:  g(θ) = (K_2n − 2n·θ) + √n·(φ/(1−Φ))(√n·θ)
/// ```
///
/// is strictly decreasing and the root is found by sign bisection — an
/// algorithm sharing nothing with the closed path's Newton inversion, which
/// makes agreement between the two a genuine cross-check. Smooth rules have
/// no analytic score; golden-section search maximizes the quadrature-based
/// log-likelihood instead.
pub fn conditional_mle_generic(outcome: &TrialOutcome, rule: &StoppingRule) -> Result<Estimate> {
    const LO: f64 = -50.0;
    const HI: f64 = 50.0;
    match rule {
        StoppingRule::Indicator => {
            let nf = outcome.n() as f64;
            let root_n = nf.sqrt();
            let k = outcome.k_final();
            let big_n = outcome.sample_size() as f64;
            let stage = outcome.stage();
            if stage == Stage::One {
                if k < 0.0 {
                    return Err(Error::InconsistentOutcome(k));
                }
                if k == 0.0 {
                    return Err(Error::DegenerateStatistic);
                }
            }
            let g = |theta: f64| {
                let z = root_n * theta;
                match stage {
                    Stage::One => (k - big_n * theta) - root_n * special::mills_lower(z),
                    Stage::Two => (k - big_n * theta) + root_n * special::mills_upper(z),
                }
            };
            if !(g(LO) > 0.0 && g(HI) < 0.0) {
                return Err(Error::NoBracket {
                    what: "conditional score root",
                    lo: LO,
                    hi: HI,
                });
            }
            let (mut lo, mut hi) = (LO, HI);
            let mut iterations = 0u32;
            while hi - lo > 1e-11 {
                iterations += 1;
                let mid = 0.5 * (lo + hi);
                if g(mid) > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            Ok(Estimate {
                value: 0.5 * (lo + hi),
                method: Method::ConditionalGeneric,
                iterations,
                residual: hi - lo,
            })
        }
        StoppingRule::Smooth { .. } => {
            // Golden-section: one new likelihood evaluation per step,
            // interval shrinks by the inverse golden ratio.
            const INV_PHI: f64 = 0.618_033_988_749_894_9;
            let (mut a, mut b) = (LO, HI);
            let mut c = b - INV_PHI * (b - a);
            let mut d = a + INV_PHI * (b - a);
            let mut fc = conditional_loglik(c, outcome, rule)?;
            let mut fd = conditional_loglik(d, outcome, rule)?;
            let mut iterations = 2u32;
            while b - a > 1e-10 {
                iterations += 1;
                if fc >= fd {
                    b = d;
                    d = c;
                    fd = fc;
                    c = b - INV_PHI * (b - a);
                    fc = conditional_loglik(c, outcome, rule)?;
                } else {
                    a = c;
                    c = d;
                    fc = fd;
                    d = a + INV_PHI * (b - a);
                    fd = conditional_loglik(d, outcome, rule)?;
                }
            }
            Ok(Estimate {
                value: 0.5 * (a + b),
                method: Method::ConditionalGeneric,
                iterations,
                residual: b - a,
            })
        }
    }
}
