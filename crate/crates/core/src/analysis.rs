//! Quadrature engine and the mean-absolute-error analysis of the two
//! estimators.
//!
//! Closed-form territory: at μ = 0 the marginal MLE's MAE is
//! (1/√n)·(E[ξ·1_{ξ≥0}] + (1/√2)·E[|ξ|(1 − Φ(ξ))]) for a standard normal ξ,
//! which vanishes like 1/√n. The conditional MLE behaves very differently:
//! restricting its absolute moment to stage One and |estimate| ≤ N/√n gives
//!
//!   (1/√n)·∫_{ψ₁(−N)}^{ψ₁(0)} |ψ₁⁻¹(u)|·φ(u) du
//!     ≥ (1/√n)·φ(ψ₁(0))·(log½ + N²/2 − log Φ(−N) − N·(φ/Φ)(−N)),
//!
//! a bound growing like φ(ψ₁(0))·log N without limit — so the conditional MAE
//! is infinite. This module computes both sides of that story.

use crate::error::{ensure_finite, Error, Result};
use crate::estimators::ScoreTransform;
use crate::special;

/// Tolerances for adaptive integration.
///
/// `cutoff` truncates integrals over the real line where the standard
/// normal weight falls below ~1e-31 (12 standard deviations).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureSpec {
    pub abs_tol: f64,
    pub max_depth: u32,
    pub cutoff: f64,
}

impl QuadratureSpec {
    pub fn new(abs_tol: f64, max_depth: u32, cutoff: f64) -> Result<Self> {
        ensure_finite("abs_tol", abs_tol)?;
        if abs_tol <= 0.0 {
            return Err(Error::Invalid {
                arg: "abs_tol",
                reason: "must be positive",
            });
        }
        ensure_finite("cutoff", cutoff)?;
        if cutoff < 8.0 {
            return Err(Error::Invalid {
                arg: "cutoff",
                reason: "must be at least 8",
            });
        }
        Ok(QuadratureSpec {
            abs_tol,
            max_depth,
            cutoff,
        })
    }
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec {
            abs_tol: 1e-10,
            max_depth: 60,
            cutoff: 12.0,
        }
    }
}

/// Kronrod-15 abscissae on [0, 1] (symmetric about the panel centre); the
/// embedded Gauss-7 nodes are the odd-indexed entries.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_838_258_730,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];

/// Gauss-7 weights (pairs, then centre).
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// Kronrod-15 weights aligned with `XGK`.
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

/// One Gauss–Kronrod 7/15 panel over [a, b]: (estimate, error estimate).
///
/// The error estimate is the raw |K15 − G7| difference scaled to the panel
/// — crude next to the QUADPACK rescaling, but reliable for the smooth,
/// rapidly decaying integrands here.
fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let f_center = f(center);
    let mut gauss = f_center * WG[3];
    let mut kronrod = f_center * WGK[7];
    let mut resabs = f_center.abs() * WGK[7];
    for (j, &wg) in WG.iter().enumerate().take(3) {
        let idx = 2 * j + 1;
        let dx = half * XGK[idx];
        let (lo, hi) = (f(center - dx), f(center + dx));
        gauss += wg * (lo + hi);
        kronrod += WGK[idx] * (lo + hi);
        resabs += WGK[idx] * (lo.abs() + hi.abs());
    }
    for j in 0..4 {
        let idx = 2 * j;
        let dx = half * XGK[idx];
        let (lo, hi) = (f(center - dx), f(center + dx));
        kronrod += WGK[idx] * (lo + hi);
        resabs += WGK[idx] * (lo.abs() + hi.abs());
    }
    (kronrod * half, (kronrod - gauss).abs() * half, resabs * half)
}

/// Adaptive Gauss–Kronrod integration of `f` over [a, b].
///
/// Recursive bisection with each child owing half its parent's tolerance,
/// so the leaf errors sum below `abs_tol`. Two floors terminate descent
/// once panels shrink past what doubles can resolve: an error at the
/// rounding level of the panel's absolute mass (Σ|f| panels sum to ∫|f|,
/// so these accepted errors total ≲ 1e-13·∫|f| — integrands assembled from
/// root-finding or long sums carry more jitter than that themselves, and
/// bisection can never split the jitter away), or a panel narrower than
/// ~1e-14 of its position. Exhausting `max_depth` with the estimate still
/// above tolerance reports an accuracy error rather than a silent bad
/// value.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, spec: &QuadratureSpec) -> Result<f64> {
    fn recurse<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, depth: u32) -> Result<f64> {
        let (value, err, resabs) = gk15(f, a, b);
        if err <= tol
            || err <= 1e-13 * resabs
            || b - a <= 1e-14 * (a.abs() + b.abs() + 1.0)
        {
            return Ok(value);
        }
        if depth == 0 {
            return Err(Error::QuadratureAccuracy {
                estimate: err,
                tol,
            });
        }
        let mid = 0.5 * (a + b);
        let half_tol = 0.5 * tol;
        Ok(recurse(f, a, mid, half_tol, depth - 1)? + recurse(f, mid, b, half_tol, depth - 1)?)
    }

    ensure_finite("a", a)?;
    ensure_finite("b", b)?;
    if a > b {
        return Err(Error::Invalid {
            arg: "integration range",
            reason: "lower limit exceeds upper limit",
        });
    }
    if a == b {
        return Ok(0.0);
    }
    recurse(&f, a, b, spec.abs_tol, spec.max_depth)
}

/// Marginal-MLE MAE at μ = 0 with its per-stage split.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaeReport {
    pub n: u64,
    pub mae: f64,
    /// (stage-One term, stage-Two term); sums exactly to `mae`.
    pub decomposition: (f64, f64),
}

/// MAE of the marginal MLE at μ = 0 under the indicator rule:
/// (1/√n)·(E[ξ·1_{ξ≥0}] + (1/√2)·E[|ξ|(1 − Φ(ξ))]), both expectations by
/// quadrature against the standard normal weight.
///
/// The n-free expectations are summed first and scaled by 1/√n once, so
/// reports at different n are exact rescalings of each other. The stage-Two
/// entry of the decomposition is `mae − stage-One term`; the two terms are
/// within a factor two of each other, making that subtraction exact
/// (Sterbenz) and the decomposition reassemble to `mae` bitwise.
pub fn marginal_mae(n: u64) -> Result<MaeReport> {
    if n == 0 {
        return Err(Error::Invalid {
            arg: "n",
            reason: "must be at least 1",
        });
    }
    let spec = QuadratureSpec::default();
    let c = spec.cutoff;
    // ∫₀^∞ ξφ(ξ)dξ: the indicator collapses the range to [0, cutoff].
    let e_one = integrate(|x| x * special::pdf(x), 0.0, c, &spec)?;
    let e_two = integrate(|x| x.abs() * special::cdf(-x) * special::pdf(x), -c, c, &spec)?;
    let root_n = (n as f64).sqrt();
    let mae = (e_one + std::f64::consts::FRAC_1_SQRT_2 * e_two) / root_n;
    let t_one = e_one / root_n;
    Ok(MaeReport {
        n,
        mae,
        decomposition: (t_one, mae - t_one),
    })
}

/// Lower bound for the stage-One truncated conditional MAE at truncation
/// level N (of the score variable; the estimate itself is truncated at
/// N/√n).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncatedBound {
    pub n: u64,
    pub level: f64,
    pub value: f64,
}

/// (1/√n)·φ(ψ₁(0))·(log½ + N²/2 − log Φ(−N) − N·(φ/Φ)(−N)).
///
/// −log Φ(−N) is N²/2 + log N + log√(2π) + o(1): the N² pieces must cancel
/// against the explicit N²/2 and the Mills term. Both enter through exact
/// closed expressions (`ln_cdf`, `mills_lower`), so the cancellation costs
/// only the rounding of ~N²-sized intermediates — about 1e-10 absolute at
/// N = 10³, keeping ten significant digits there. What remains grows like
/// φ(ψ₁(0))·log N: unbounded, hence the infinite conditional MAE.
pub fn truncated_bound(n: u64, level: f64) -> Result<TruncatedBound> {
    if n == 0 {
        return Err(Error::Invalid {
            arg: "n",
            reason: "must be at least 1",
        });
    }
    ensure_finite("level", level)?;
    if level <= 0.0 {
        return Err(Error::Invalid {
            arg: "level",
            reason: "must be positive",
        });
    }
    let amplitude = special::pdf(ScoreTransform::Psi1.eval(0.0));
    let inner = 0.5f64.ln() + 0.5 * level * level - special::ln_cdf(-level)
        - level * special::mills_lower(-level);
    Ok(TruncatedBound {
        n,
        level,
        value: amplitude * inner / (n as f64).sqrt(),
    })
}

/// Stage-One truncated conditional MAE E[|μ̂_c|·1_{stage One, |μ̂_c| ≤ N/√n}]
/// by quadrature.
///
/// For moderate N the integral runs in the score variable u over
/// [ψ₁(−N), ψ₁(0)] — the image of the truncation event — inverting ψ₁ at
/// each node. Past N = 50 the lower endpoint sits on the flat left
/// asymptote where inversion is ill-conditioned, so the same integral is
/// taken in the original variable, ∫_{−N}^0 (−x)·ψ₁′(x)·φ(ψ₁(x)) dx, which
/// needs no inversion at all.
pub fn truncated_mae_quadrature(n: u64, level: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::Invalid {
            arg: "n",
            reason: "must be at least 1",
        });
    }
    ensure_finite("level", level)?;
    if level <= 0.0 {
        return Err(Error::Invalid {
            arg: "level",
            reason: "must be positive",
        });
    }
    let spec = QuadratureSpec::default();
    let psi = ScoreTransform::Psi1;
    let base = if level <= 50.0 {
        let value = integrate(
            |u| match psi.invert(u) {
                Ok(inv) => inv.x.abs() * special::pdf(u),
                Err(_) => f64::NAN,
            },
            psi.eval(-level),
            psi.eval(0.0),
            &spec,
        )?;
        if !value.is_finite() {
            return Err(Error::NonFinite {
                arg: "truncated MAE integrand",
                value,
            });
        }
        value
    } else {
        integrate(
            |x| -x * psi.deriv(x) * special::pdf(psi.eval(x)),
            -level,
            0.0,
            &spec,
        )?
    };
    Ok(base / (n as f64).sqrt())
}

/// One row of the divergence table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DivergenceRow {
    pub level: f64,
    pub bound: f64,
    pub quadrature: f64,
}

/// Tabulates [`truncated_bound`] and [`truncated_mae_quadrature`] over
/// strictly increasing truncation levels.
pub fn divergence_curve(n: u64, levels: &[f64]) -> Result<Vec<DivergenceRow>> {
    if levels.is_empty() {
        return Err(Error::Invalid {
            arg: "levels",
            reason: "must be non-empty",
        });
    }
    for pair in levels.windows(2) {
        // A NaN level must fail this check, hence not `pair[0] >= pair[1]`.
        let increasing = pair[0] < pair[1];
        if !increasing {
            return Err(Error::Invalid {
                arg: "levels",
                reason: "must be strictly increasing",
            });
        }
    }
    levels
        .iter()
        .map(|&level| {
            Ok(DivergenceRow {
                level,
                bound: truncated_bound(n, level)?.value,
                quadrature: truncated_mae_quadrature(n, level)?,
            })
        })
        .collect()
}

/// Least-squares slope of `values` against log(levels) — the divergence
/// rate of a curve, φ(ψ₁(0)) ≈ 0.2902 asymptotically for the bound column.
pub fn fit_log_slope(levels: &[f64], values: &[f64]) -> Result<f64> {
    if levels.len() != values.len() || levels.len() < 2 {
        return Err(Error::Invalid {
            arg: "fit data",
            reason: "needs two matched points or more",
        });
    }
    let m = levels.len() as f64;
    let mut sx = 0.0;
    let mut sy = 0.0;
    for (&l, &v) in levels.iter().zip(values) {
        ensure_finite("level", l)?;
        if l <= 0.0 {
            return Err(Error::Invalid {
                arg: "levels",
                reason: "must be positive",
            });
        }
        sx += l.ln();
        sy += v;
    }
    let (mx, my) = (sx / m, sy / m);
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (&l, &v) in levels.iter().zip(values) {
        let dx = l.ln() - mx;
        sxx += dx * dx;
        sxy += dx * (v - my);
    }
    if sxx == 0.0 {
        return Err(Error::Invalid {
            arg: "levels",
            reason: "must not all coincide",
        });
    }
    Ok(sxy / sxx)
}

/// Residual of the integral identity for a strictly increasing transform,
/// |∫_a^b ψ + ∫_{ψ(a)}^{ψ(b)} ψ⁻¹ − (b·ψ(b) − a·ψ(a))|, computed entirely
/// by quadrature. Near zero — below 1e-8 — for any a < b.
pub fn integral_identity_check(transform: ScoreTransform, a: f64, b: f64) -> Result<f64> {
    ensure_finite("a", a)?;
    ensure_finite("b", b)?;
    if a >= b {
        return Err(Error::Invalid {
            arg: "interval",
            reason: "requires a < b",
        });
    }
    let spec = QuadratureSpec::default();
    let forward = integrate(|x| transform.eval(x), a, b, &spec)?;
    let (ya, yb) = (transform.eval(a), transform.eval(b));
    let inverse = integrate(
        |u| match transform.invert(u) {
            Ok(inv) => inv.x,
            Err(_) => f64::NAN,
        },
        ya,
        yb,
        &spec,
    )?;
    if !inverse.is_finite() {
        return Err(Error::NonFinite {
            arg: "inverse integrand",
            value: inverse,
        });
    }
    Ok((forward + inverse - (b * yb - a * ya)).abs())
}
