//! Scalar probabilistic kernels.
//!
//! Everything here is a pure `f64 -> f64` map used by the mean-field forward
//! and backward passes: the standard normal pdf/cdf pair, the pdf/cdf ratio
//! that appears in the output-layer gradient, and the log-odds transform used
//! for probabilistic readout. All kernels are written so the deep tails stay
//! finite and monotone instead of flushing to zero or infinity.
//!
//! Non-finite inputs propagate NaN (IEEE convention) unless a function
//! documents otherwise; domain violations on bounded-domain functions return
//! [`MathError`].

use thiserror::Error;

/// `1 / sqrt(2 * pi)`.
pub const INV_SQRT_2PI: f64 = 0.3989422804014327;

/// `ln(sqrt(2 * pi))`.
pub const LN_SQRT_2PI: f64 = 0.9189385332046728;

/// Largest `f64` strictly below `1.0`.
const MAX_BELOW_ONE: f64 = 1.0 - f64::EPSILON / 2.0;

/// Clamp applied inside [`log_odds`] so inputs of exactly `+-1` still map to
/// a finite value.
const LOG_ODDS_EPS: f64 = 1e-12;

/// Arguments below this threshold route [`pdf_cdf_ratio`] through the
/// continued-fraction tail expansion instead of the direct quotient.
const RATIO_TAIL_THRESHOLD: f64 = -5.0;

/// Depth of the continued-fraction tail expansion in [`pdf_cdf_ratio`].
/// At the threshold (`z = -5`) depth 60 already agrees with the exact value
/// to the last bit; deeper tails converge faster.
const RATIO_CF_DEPTH: u32 = 64;

/// Domain violation in a bounded-domain kernel.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum MathError {
    /// `log_odds` argument outside `[-1, 1]` (or NaN).
    #[error("log-odds input {0} is outside [-1, 1]")]
    MeanOutsideUnitInterval(f64),
    /// Attempt to build a [`Probability`] from a value outside `[0, 1]`.
    #[error("probability value {0} is outside [0, 1]")]
    InvalidProbability(f64),
}

/// A probability, guaranteed to lie in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Probability(f64);

impl Probability {
    /// Wraps `v`, rejecting values outside `[0, 1]` (NaN included).
    pub fn new(v: f64) -> Result<Self, MathError> {
        if (0.0..=1.0).contains(&v) {
            Ok(Probability(v))
        } else {
            Err(MathError::InvalidProbability(v))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Standard normal density `phi(z)`.
///
/// Underflows to `0.0` for `|z|` beyond roughly `38.6`; use
/// [`log_gaussian_pdf`] when the log-domain value is needed.
pub fn gaussian_pdf(z: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * z * z).exp()
}

/// `ln(phi(z))`, exact even where `phi` underflows.
pub fn log_gaussian_pdf(z: f64) -> f64 {
    -0.5 * z * z - LN_SQRT_2PI
}

/// Standard normal cumulative `Phi(z)`, via the complementary error
/// function so the lower tail keeps full relative precision
/// (`Phi(-10) ~ 7.6e-24` rather than underflowing).
///
/// Returns a value in `[0, 1]` for finite `z`; NaN maps to NaN.
pub fn gaussian_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z * std::f64::consts::FRAC_1_SQRT_2)
}

/// `ln(Phi(z))`, stable across the whole real line.
///
/// For moderate `z` the direct logarithm is exact; in the deep lower tail it
/// is rewritten as `ln(phi(z)) - ln(phi(z)/Phi(z))` so nothing underflows.
pub fn log_gaussian_cdf(z: f64) -> f64 {
    if z >= RATIO_TAIL_THRESHOLD {
        gaussian_cdf(z).ln()
    } else {
        log_gaussian_pdf(z) - pdf_cdf_ratio(z).ln()
    }
}

/// The ratio `phi(z) / Phi(z)` (inverse Mills ratio of `-z`).
///
/// This factor drives the output-layer update: it decays to zero as
/// `z -> +inf` and grows like `-z` as `z -> -inf`. The direct quotient is
/// accurate down to the threshold where both terms are still well scaled;
/// below it the ratio is evaluated with the Laplace continued fraction
/// `t + 1/(t + 2/(t + 3/(...)))` at `t = -z`, which avoids the `0/0`
/// underflow and keeps full precision arbitrarily deep into the tail.
///
/// Strictly positive and strictly decreasing for finite `z` up to the point
/// (`z ~ 38.6`) where `phi(z)` itself underflows to zero.
pub fn pdf_cdf_ratio(z: f64) -> f64 {
    if z.is_nan() {
        return f64::NAN;
    }
    if z >= RATIO_TAIL_THRESHOLD {
        gaussian_pdf(z) / gaussian_cdf(z)
    } else {
        let t = -z;
        let mut acc = t;
        for k in (1..=RATIO_CF_DEPTH).rev() {
            acc = t + f64::from(k) / acc;
        }
        acc
    }
}

/// Log-odds `ln((1 + nu) / (1 - nu))` of a mean activation `nu in [-1, 1]`.
///
/// `|nu|` is clamped to `1 - 1e-12` first, so the endpoints map to a large
/// finite value instead of infinity. Exactly odd: `log_odds(-nu)` is the
/// negation of `log_odds(nu)` bit for bit.
pub fn log_odds(nu: f64) -> Result<f64, MathError> {
    if !(-1.0..=1.0).contains(&nu) {
        return Err(MathError::MeanOutsideUnitInterval(nu));
    }
    let a = nu.abs().min(1.0 - LOG_ODDS_EPS);
    // ln((1+a)/(1-a)) via ln_1p keeps precision for small a.
    let magnitude = f64::ln_1p(a) - f64::ln_1p(-a);
    Ok(if nu.is_sign_negative() { -magnitude } else { magnitude })
}

/// `sech^2(h) = 1 - tanh^2(h)`, computed as `(1/cosh)^2` so large `|h|`
/// underflows gracefully to zero instead of overflowing.
pub fn sech2(h: f64) -> f64 {
    let s = 1.0 / h.cosh();
    s * s
}

/// Clamps `v` into the open interval `(-1, 1)` at the `f64` boundary:
/// values of magnitude `>= 1` become the largest float strictly below one.
pub fn clamp_open_unit(v: f64) -> f64 {
    v.clamp(-MAX_BELOW_ONE, MAX_BELOW_ONE)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Absolute/relative agreement with independently computed references
    /// (40-digit arithmetic), frozen to the digits an f64 can hold.
    fn assert_close(actual: f64, expected: f64, rel_tol: f64) {
        let scale = expected.abs().max(1e-300);
        assert!(
            (actual - expected).abs() / scale <= rel_tol,
            "actual {actual:e} vs expected {expected:e} (rel tol {rel_tol:e})"
        );
    }

    #[test]
    fn pdf_at_zero_is_inverse_sqrt_2pi() {
        assert_close(gaussian_pdf(0.0), 0.3989422804014327, 1e-15);
        assert_eq!(gaussian_pdf(0.0), INV_SQRT_2PI);
    }

    #[test]
    fn pdf_is_symmetric_and_decays() {
        assert_eq!(gaussian_pdf(1.7), gaussian_pdf(-1.7));
        assert!(gaussian_pdf(3.0) < gaussian_pdf(2.0));
        assert_eq!(gaussian_pdf(40.0), 0.0); // underflow is expected here
    }

    #[test]
    fn log_pdf_stays_exact_where_pdf_underflows() {
        assert_close(log_gaussian_pdf(40.0), -800.9189385332047, 1e-15);
        assert_close(log_gaussian_pdf(0.0), -0.9189385332046728, 1e-15);
    }

    #[test]
    fn cdf_matches_upper_tail_anchor() {
        // Phi at the 95th-percentile abscissa 1.6448536.
        assert_close(gaussian_cdf(1.6448536), 0.9499999972203425, 1e-12);
        assert!((gaussian_cdf(1.6448536) - 0.95).abs() < 1e-7);
    }

    #[test]
    fn cdf_lower_tail_keeps_relative_precision() {
        assert_close(gaussian_cdf(-10.0), 7.619853024160526e-24, 1e-12);
        assert_close(gaussian_cdf(-5.0), 2.866515718791939e-7, 1e-12);
    }

    #[test]
    fn cdf_symmetry_holds_to_1e14_across_grid() {
        let mut z = -8.0;
        while z <= 8.0 {
            let sum = gaussian_cdf(z) + gaussian_cdf(-z);
            assert!((sum - 1.0).abs() <= 1e-14, "z={z}: sum={sum}");
            z += 0.0625;
        }
    }

    #[test]
    fn log_cdf_agrees_with_direct_log_and_deep_tail() {
        assert_close(log_gaussian_cdf(2.0), -0.023012909328963488, 1e-13);
        assert_close(log_gaussian_cdf(-20.0), -203.91715537109726, 1e-13);
        // Continuity across the branch threshold.
        let below = log_gaussian_cdf(RATIO_TAIL_THRESHOLD - 1e-9);
        let above = log_gaussian_cdf(RATIO_TAIL_THRESHOLD + 1e-9);
        assert_close(below, above, 1e-8);
    }

    #[test]
    fn ratio_at_zero_is_two_over_sqrt_2pi() {
        assert_close(pdf_cdf_ratio(0.0), 0.7978845608028654, 1e-15);
    }

    #[test]
    fn ratio_matches_references_in_both_branches() {
        assert_close(pdf_cdf_ratio(2.0), 0.05524786267898996, 1e-13);
        assert_close(pdf_cdf_ratio(-5.0), 5.186503967125842, 1e-13);
        assert_close(pdf_cdf_ratio(-8.0), 8.121368112236112, 1e-13);
        assert_close(pdf_cdf_ratio(-30.0), 30.033259667433676, 1e-13);
        assert_close(pdf_cdf_ratio(-100.0), 100.00999800099926, 1e-13);
    }

    #[test]
    fn ratio_is_continuous_across_branch_threshold() {
        let lo = pdf_cdf_ratio(RATIO_TAIL_THRESHOLD - 1e-9);
        let hi = pdf_cdf_ratio(RATIO_TAIL_THRESHOLD + 1e-9);
        assert_close(lo, hi, 1e-9);
    }

    #[test]
    fn ratio_is_positive_and_strictly_decreasing() {
        // Bounded above at z = 38: beyond that phi itself underflows to zero
        // in f64 and the quotient cannot be positive.
        let mut prev = f64::INFINITY;
        let mut z = -100.0;
        while z <= 38.0 {
            let r = pdf_cdf_ratio(z);
            assert!(r > 0.0, "ratio({z}) = {r} not positive");
            assert!(r < prev, "ratio not decreasing at z={z}");
            prev = r;
            z += 0.125;
        }
    }

    #[test]
    fn log_odds_of_half_is_ln_3() {
        assert_close(log_odds(0.5).unwrap(), 1.0986122886681098, 1e-15);
    }

    #[test]
    fn log_odds_endpoints_are_large_but_finite() {
        // Reference computed for the exact f64 value of the clamp bound
        // (1.0 - 1e-12 rounds to 0.999999999999000022...).
        let at_one = log_odds(1.0).unwrap();
        assert!(at_one.is_finite());
        assert_close(at_one, 28.324190418452805, 1e-15);
        assert_eq!(log_odds(-1.0).unwrap(), -at_one);
        assert_eq!(log_odds(0.0).unwrap(), 0.0);
    }

    #[test]
    fn log_odds_rejects_out_of_domain_inputs() {
        assert!(matches!(log_odds(1.0000001), Err(MathError::MeanOutsideUnitInterval(_))));
        assert!(matches!(log_odds(-2.0), Err(MathError::MeanOutsideUnitInterval(_))));
        assert!(log_odds(f64::NAN).is_err());
    }

    #[test]
    fn sech2_matches_reference_and_vanishes_for_large_args() {
        assert_close(sech2(2.0), 0.07065082485316447, 1e-14);
        assert_eq!(sech2(800.0), 0.0); // graceful underflow, no overflow
        assert_eq!(sech2(0.0), 1.0);
    }

    #[test]
    fn tanh_sech2_identity_holds_to_1e14_across_grid() {
        let mut h = -20.0f64;
        while h <= 20.0 {
            let t = h.tanh();
            let sum = t * t + sech2(h);
            assert!((sum - 1.0).abs() <= 1e-14, "h={h}: sum={sum}");
            h += 0.03125;
        }
    }

    #[test]
    fn clamp_open_unit_pins_magnitude_strictly_below_one() {
        assert!(clamp_open_unit(1.0) < 1.0);
        assert!(clamp_open_unit(-1.0) > -1.0);
        assert_eq!(clamp_open_unit(37.0), clamp_open_unit(1.0));
        assert_eq!(clamp_open_unit(0.25), 0.25);
    }

    #[test]
    fn probability_enforces_unit_interval() {
        assert_eq!(Probability::new(0.5).unwrap().value(), 0.5);
        assert!(Probability::new(-0.1).is_err());
        assert!(Probability::new(1.1).is_err());
        assert!(Probability::new(f64::NAN).is_err());
    }

    proptest! {
        #[test]
        fn log_odds_is_exactly_odd(nu in -1.0f64..=1.0) {
            let pos = log_odds(nu).unwrap();
            let neg = log_odds(-nu).unwrap();
            prop_assert_eq!(pos.to_bits(), (-neg).to_bits());
        }

        #[test]
        fn ratio_decreases_for_separated_points(z in -90.0f64..=37.0, gap in 1e-3f64..=2.0) {
            prop_assert!(pdf_cdf_ratio(z) > pdf_cdf_ratio(z + gap));
        }

        #[test]
        fn cdf_is_monotone_nondecreasing(z in -37.0f64..=37.0, gap in 0.0f64..=2.0) {
            prop_assert!(gaussian_cdf(z) <= gaussian_cdf(z + gap));
        }
    }
}
