//! Numerically stable standard-normal special functions.
//!
//! The tail bound analysis needs `ln Φ(-N)` and the inverse Mills ratio
//! `φ/Φ` for arguments down to -10³, far past where `Φ` underflows a double.
//! Everything here routes the lower tail through `erfc` or an asymptotic
//! expansion so those expressions stay finite and accurate.

use std::f64::consts::FRAC_1_SQRT_2;

/// 1/√(2π)
pub const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
/// ln(2π)/2
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_7;

/// Switch from direct CDF evaluation to the asymptotic tail expansion.
/// Φ(-30) ≈ 4.9e-198 is still a normalized double, so both sides of the
/// seam are accurate.
const TAIL_CUT: f64 = -30.0;

/// Standard normal density φ(x).
#[inline]
pub fn pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// ln φ(x), exact in the far tail where `pdf` underflows.
#[inline]
pub fn ln_pdf(x: f64) -> f64 {
    -0.5 * x * x - LN_SQRT_2PI
}

/// Standard normal CDF Φ(x), evaluated through the complementary error
/// function so the lower tail keeps full relative accuracy (Φ(-38) is still
/// a positive normalized value rather than a rounded 0).
#[inline]
pub fn cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// Asymptotic tail sum S(x) - 1 where Φ(x) = φ(x)/(-x) · S(x) for x → -∞,
/// S(x) = 1 - 1/x² + 3/x⁴ - 15/x⁶ + 105/x⁸ - ...
#[inline]
fn tail_sum_m1(x: f64) -> f64 {
    let w = 1.0 / (x * x);
    w * (-1.0 + w * (3.0 + w * (-15.0 + w * 105.0)))
}

/// Leading tails of the Laplace continued fraction for the Mills ratio,
/// Φ(-t)/φ(t) = 1/(t + C₁), C₁ = 1/(t + C₂), C₂ = 2/(t + C₃), ... —
/// returned as (C₁, C₂, C₃).
///
/// Every quantity is a positive sum, so the expansions downstream come out
/// subtraction-free: φ(-t)/Φ(-t) = t + C₁ and, for the score transforms,
/// ψ₁(-t) = C₁ exactly. 120 backward-recursion levels leave truncation
/// below 1e-20 relative for t ≥ 3, and the recursion only contracts, so
/// the results are correct to rounding.
pub(crate) fn mills_cf_tails(t: f64) -> (f64, f64, f64) {
    debug_assert!(t >= 2.5, "continued fraction used outside its domain");
    let mut c = 0.0;
    for m in (4..=120u32).rev() {
        c = f64::from(m) / (t + c);
    }
    let c3 = 3.0 / (t + c);
    let c2 = 2.0 / (t + c3);
    let c1 = 1.0 / (t + c2);
    (c1, c2, c3)
}

/// ln Φ(x) without underflow.
///
/// Direct `cdf(x).ln()` above the seam; below it the expansion
/// ln Φ(x) = -x²/2 - ln(2π)/2 - ln(-x) + ln S(x). The truncation error of
/// the four-term S is below 1e-14 relative already at the seam.
pub fn ln_cdf(x: f64) -> f64 {
    if x > TAIL_CUT {
        cdf(x).ln()
    } else {
        ln_pdf(x) - (-x).ln() + tail_sum_m1(x).ln_1p()
    }
}

/// Inverse Mills ratio of the lower tail, φ(x)/Φ(x).
///
/// Grows like -x - 1/x as x → -∞. Below the seam, where φ and Φ head for
/// the subnormals, the continued fraction gives the ratio directly as
/// -x + C₁(-x): finite for any finite x and accurate to rounding. Forming
/// exp(ln φ - ln Φ) instead would lose x²·ε of relative accuracy to
/// cancellation, which the N·φ(-N)/Φ(-N) term of the tail bound cannot
/// absorb at N ~ 10³.
pub fn mills_lower(x: f64) -> f64 {
    if x > TAIL_CUT {
        pdf(x) / cdf(x)
    } else {
        let (c1, _, _) = mills_cf_tails(-x);
        -x + c1
    }
}

/// Inverse Mills ratio of the upper tail, φ(x)/(1 - Φ(x)) = `mills_lower(-x)`.
#[inline]
pub fn mills_upper(x: f64) -> f64 {
    mills_lower(-x)
}

/// Standard normal quantile Φ⁻¹(p) for p in (0,1).
///
/// Acklam's rational approximation polished by one Halley step against the
/// `erfc`-based CDF, giving ~1 ulp over the full open interval.
pub fn quantile(p: f64) -> f64 {
    assert!(
        p.is_finite() && p > 0.0 && p < 1.0,
        "quantile requires p in (0,1), got {p}"
    );

    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    const P_LOW: f64 = 0.02425;

    let x = if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };

    // Halley refinement: u = (Φ(x) - p)/φ(x), x ← x - u/(1 + x·u/2).
    let u = (cdf(x) - p) / pdf(x);
    x - u / (1.0 + 0.5 * x * u)
}
