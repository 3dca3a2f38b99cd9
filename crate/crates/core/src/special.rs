//! Scalar special functions and Inverse-Gamma facts used by the solvers.
//!
//! Inverse-Gamma(A, B) is parameterised by shape `A` and *rate* `B`:
//! `p(v) = B^A / Γ(A) · v^(-A-1) · exp(-B/v)`, so that `E(1/v) = A/B`.

use statrs::distribution::{ContinuousCDF, Gamma};

use crate::error::{Error, Result};

pub use libm::{erf, erfc};
pub use statrs::function::gamma::ln_gamma;

/// Upper 97.5% point of the standard Normal.
pub const Z_975: f64 = 1.959_963_984_540_054;

/// Below this, `lambda_jj` returns its limit at zero.
const LAMBDA_ZERO_THRESHOLD: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InverseGammaParams {
    shape: f64,
    rate: f64,
}

impl InverseGammaParams {
    pub fn new(shape: f64, rate: f64) -> Result<Self> {
        if !(shape > 0.0 && shape.is_finite()) || !(rate > 0.0 && rate.is_finite()) {
            return Err(Error::Domain(format!(
                "Inverse-Gamma needs shape > 0 and rate > 0, got ({shape}, {rate})"
            )));
        }
        Ok(InverseGammaParams { shape, rate })
    }

    pub fn shape(&self) -> f64 {
        self.shape
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    /// `E(1/v) = A/B`.
    pub fn mean_reciprocal(&self) -> f64 {
        self.shape / self.rate
    }

    /// `E(v)`, finite only for shape > 1.
    pub fn mean(&self) -> Option<f64> {
        (self.shape > 1.0).then(|| self.rate / (self.shape - 1.0))
    }

    /// `Var(v)`, finite only for shape > 2.
    pub fn variance(&self) -> Option<f64> {
        (self.shape > 2.0).then(|| {
            let a1 = self.shape - 1.0;
            self.rate * self.rate / (a1 * a1 * (self.shape - 2.0))
        })
    }

    pub fn mode(&self) -> f64 {
        self.rate / (self.shape + 1.0)
    }

    /// `E(log v) = log B - ψ(A)`.
    pub fn mean_log(&self) -> f64 {
        self.rate.ln() - digamma_unchecked(self.shape)
    }

    /// `Var(log v) = ψ'(A)`.
    pub fn var_log(&self) -> f64 {
        trigamma(self.shape)
    }

    pub fn log_density(&self, v: f64) -> Result<f64> {
        inv_gamma_log_density(v, self)
    }

    pub fn density(&self, v: f64) -> f64 {
        if v <= 0.0 {
            return 0.0;
        }
        self.log_density(v).map(f64::exp).unwrap_or(0.0)
    }

    /// Quantile at probability `p`, via the Gamma law of `1/v`.
    pub fn quantile(&self, p: f64) -> f64 {
        if p <= 0.0 {
            return 0.0;
        }
        if p >= 1.0 {
            return f64::INFINITY;
        }
        // Gamma::new only fails for non-positive parameters, excluded above.
        let recip = Gamma::new(self.shape, self.rate).expect("validated parameters");
        1.0 / recip.inverse_cdf(1.0 - p)
    }

    pub fn cdf(&self, v: f64) -> f64 {
        if v <= 0.0 {
            return 0.0;
        }
        let recip = Gamma::new(self.shape, self.rate).expect("validated parameters");
        1.0 - recip.cdf(1.0 / v)
    }
}

pub fn inv_gamma_mean_reciprocal(params: &InverseGammaParams) -> f64 {
    params.mean_reciprocal()
}

/// `A log B - log Γ(A) - (A+1) log v - B/v`.
pub fn inv_gamma_log_density(v: f64, params: &InverseGammaParams) -> Result<f64> {
    if !(v > 0.0) {
        return Err(Error::Domain(format!(
            "Inverse-Gamma density needs v > 0, got {v}"
        )));
    }
    let (a, b) = (params.shape, params.rate);
    Ok(a * b.ln() - ln_gamma(a) - (a + 1.0) * v.ln() - b / v)
}

/// Digamma function ψ(x) for x > 0.
///
/// The argument is lifted to x ≥ 10 with ψ(x) = ψ(x+1) - 1/x and the
/// asymptotic series is summed to the x^-16 term.
pub fn digamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!("digamma needs x > 0, got {x}")));
    }
    Ok(digamma_unchecked(x))
}

pub(crate) fn digamma_unchecked(mut x: f64) -> f64 {
    let mut shift = 0.0;
    while x < 10.0 {
        shift -= 1.0 / x;
        x += 1.0;
    }
    let inv2 = 1.0 / (x * x);
    // Bernoulli terms B_2k / (2k), k = 1..8, in Horner form on 1/x².
    let series = inv2
        * (1.0 / 12.0
            - inv2
                * (1.0 / 120.0
                    - inv2
                        * (1.0 / 252.0
                            - inv2
                                * (1.0 / 240.0
                                    - inv2
                                        * (1.0 / 132.0
                                            - inv2
                                                * (691.0 / 32760.0
                                                    - inv2 * (1.0 / 12.0 - inv2 * 3617.0 / 8160.0)))))));
    shift + x.ln() - 0.5 / x - series
}

/// Trigamma ψ'(x) for x > 0, same lift-then-series scheme as [`digamma`].
pub fn trigamma(mut x: f64) -> f64 {
    debug_assert!(x > 0.0);
    let mut acc = 0.0;
    while x < 12.0 {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    let series = inv
        + 0.5 * inv2
        + inv * inv2
            * (1.0 / 6.0
                - inv2
                    * (1.0 / 30.0
                        - inv2
                            * (1.0 / 42.0
                                - inv2 * (1.0 / 30.0 - inv2 * (5.0 / 66.0 - inv2 * 691.0 / 2730.0)))));
    acc + series
}

/// Jaakkola-Jordan weight `λ(ξ) = tanh(ξ/2) / (4ξ)`, even in ξ, with
/// `λ(0) = 1/8`.
pub fn lambda_jj(xi: f64) -> f64 {
    let xi = xi.abs();
    if xi < LAMBDA_ZERO_THRESHOLD {
        return 0.125;
    }
    (0.5 * xi).tanh() / (4.0 * xi)
}

/// `exp(x) / (1 + exp(x))` without overflow for large |x|.
pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Standard Normal CDF through the error function.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

pub fn normal_pdf(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    (-0.5 * z * z).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Gamma as GammaDist};

    fn ig(a: f64, b: f64) -> InverseGammaParams {
        InverseGammaParams::new(a, b).unwrap()
    }

    /// Composite Simpson on [lo, hi] with `n` (even) panels.
    fn simpson(f: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> f64 {
        let h = (hi - lo) / n as f64;
        let mut s = f(lo) + f(hi);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(lo + i as f64 * h);
        }
        s * h / 3.0
    }

    /// Integrates the density over (0, hi] after the change of variable
    /// v = e^t, which tames the spike near zero.
    fn ig_mass(p: &InverseGammaParams, hi: f64) -> f64 {
        simpson(|t: f64| p.density(t.exp()) * t.exp(), -12.0, hi.ln(), 20_000)
    }

    #[test]
    fn mean_reciprocal_values() {
        assert_eq!(inv_gamma_mean_reciprocal(&ig(3.0, 6.0)), 0.5);
        assert_eq!(inv_gamma_mean_reciprocal(&ig(1.0, 1.0)), 1.0);
        assert_abs_diff_eq!(inv_gamma_mean_reciprocal(&ig(2.5, 0.4)), 6.25, epsilon = 1e-15);
    }

    #[test]
    fn mean_reciprocal_matches_monte_carlo() {
        // 1/v ~ Gamma(shape 2.5, rate 0.4), i.e. scale 2.5.
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let g = GammaDist::new(2.5, 1.0 / 0.4).unwrap();
        let n = 1_000_000;
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let v: f64 = 1.0 / g.sample(&mut rng);
            let r = 1.0 / v;
            s += r;
            s2 += r * r;
        }
        let mean = s / n as f64;
        let se = ((s2 / n as f64 - mean * mean) / n as f64).sqrt();
        assert!((mean - 6.25).abs() < 3.0 * se, "mean {mean} se {se}");
    }

    #[test]
    fn construction_rejects_bad_params() {
        assert!(InverseGammaParams::new(0.0, 1.0).is_err());
        assert!(InverseGammaParams::new(1.0, -1.0).is_err());
        assert!(InverseGammaParams::new(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn log_density_unit_case() {
        assert_abs_diff_eq!(inv_gamma_log_density(1.0, &ig(1.0, 1.0)).unwrap(), -1.0, epsilon = 1e-15);
        assert!(inv_gamma_log_density(0.0, &ig(1.0, 1.0)).is_err());
        assert!(inv_gamma_log_density(-2.0, &ig(1.0, 1.0)).is_err());
    }

    #[test]
    fn log_density_integrates_to_one() {
        let p = ig(2.0, 3.0);
        let mass = ig_mass(&p, 200.0);
        // The tail beyond 200 is 1 - exp(-3/200)(1 + 3/200), about 1.1e-4;
        // compare against the exact truncated mass.
        let truncated = p.cdf(200.0);
        assert!((mass - truncated).abs() < 1e-6, "{mass} vs {truncated}");
    }

    #[test]
    fn density_mode_is_rate_over_shape_plus_one() {
        let p = ig(2.0, 3.0);
        assert_abs_diff_eq!(p.mode(), 1.0);
        let f = |v: f64| p.log_density(v).unwrap();
        let h = 1e-4;
        assert!(f(1.0) > f(1.0 - h) && f(1.0) > f(1.0 + h));
        // Zero derivative by central differences.
        assert!(((f(1.0 + h) - f(1.0 - h)) / (2.0 * h)).abs() < 1e-6);
    }

    #[test]
    fn density_normalises_for_random_params() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let a = rng.random_range(0.8..6.0);
            let b = rng.random_range(0.2..5.0);
            let p = ig(a, b);
            let hi = 1e4;
            let mass = ig_mass(&p, hi);
            assert!((mass - p.cdf(hi)).abs() < 1e-5, "a={a} b={b} mass={mass}");
            assert!(p.cdf(hi) > 0.9);
        }
    }

    #[test]
    fn quantile_inverts_cdf() {
        let p = ig(5.5, 2.0);
        for &q in &[0.025, 0.5, 0.975] {
            let v = p.quantile(q);
            assert_abs_diff_eq!(p.cdf(v), q, epsilon = 1e-9);
        }
    }

    #[test]
    fn digamma_known_values() {
        assert_abs_diff_eq!(digamma(1.0).unwrap(), -0.577_215_664_901_532_9, epsilon = 1e-14);
        assert_abs_diff_eq!(digamma(10.0).unwrap(), 2.251_752_589_066_721, epsilon = 1e-13);
        let x = 2.5;
        assert_abs_diff_eq!(digamma(x + 1.0).unwrap() - digamma(x).unwrap(), 1.0 / x, epsilon = 1e-14);
        assert!(digamma(0.0).is_err());
        assert!(digamma(-1.5).is_err());
    }

    #[test]
    fn digamma_euler_constant_from_series() {
        // ψ(1) = -γ with γ = lim H_n - ln n; the harmonic series with the
        // Euler-Maclaurin tail correction reaches 1e-15 quickly.
        let n = 1000.0_f64;
        let h: f64 = (1..=1000).map(|k| 1.0 / k as f64).sum();
        let gamma = h - n.ln() - 1.0 / (2.0 * n) + 1.0 / (12.0 * n * n);
        assert_abs_diff_eq!(digamma(1.0).unwrap(), -gamma, epsilon = 1e-12);
    }

    #[test]
    fn trigamma_known_values() {
        let pi2_6 = std::f64::consts::PI.powi(2) / 6.0;
        assert_abs_diff_eq!(trigamma(1.0), pi2_6, epsilon = 1e-12);
        assert_abs_diff_eq!(trigamma(3.5) - trigamma(4.5), 1.0 / (3.5f64 * 3.5), epsilon = 1e-13);
        // Finite-difference check against digamma.
        let x = 7.3;
        let h = 1e-5;
        let fd = (digamma(x + h).unwrap() - digamma(x - h).unwrap()) / (2.0 * h);
        assert_abs_diff_eq!(trigamma(x), fd, epsilon = 1e-8);
    }

    #[test]
    fn lambda_limit_and_values() {
        assert_eq!(lambda_jj(0.0), 0.125);
        assert_eq!(lambda_jj(1e-10), 0.125);
        assert_abs_diff_eq!(lambda_jj(2.0), 0.095_199_269_494_470_61, epsilon = 1e-15);
        assert_eq!(lambda_jj(-2.0), lambda_jj(2.0));
    }

    #[test]
    fn lambda_decreasing_and_bounded() {
        let mut prev = lambda_jj(0.0);
        for i in 1..=1000 {
            let x = i as f64 * 0.05;
            let l = lambda_jj(x);
            assert!(l > 0.0 && l <= 0.125);
            assert!(l < prev, "not decreasing at {x}");
            prev = l;
        }
    }

    #[test]
    fn logistic_is_stable() {
        assert_eq!(logistic(0.0), 0.5);
        assert_eq!(logistic(800.0), 1.0);
        assert_eq!(logistic(-800.0), 0.0);
        assert_abs_diff_eq!(logistic(-1.5), 0.182_425_523_806_356_2, epsilon = 1e-15);
        assert!(logistic(-745.0).is_finite());
    }

    #[test]
    fn normal_cdf_symmetry() {
        assert_abs_diff_eq!(normal_cdf(0.0), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(normal_cdf(Z_975), 0.975, epsilon = 1e-12);
        assert_abs_diff_eq!(normal_cdf(1.3) + normal_cdf(-1.3), 1.0, epsilon = 1e-15);
    }

    proptest::proptest! {
        #[test]
        fn digamma_recurrence(x in 0.1f64..100.0) {
            let d = digamma(x + 1.0).unwrap() - digamma(x).unwrap();
            proptest::prop_assert!((d - 1.0 / x).abs() < 1e-10);
        }

        #[test]
        fn lambda_even(x in 0.0f64..50.0) {
            proptest::prop_assert_eq!(lambda_jj(x), lambda_jj(-x));
        }
    }
}
