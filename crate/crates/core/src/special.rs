//! Log-gamma and digamma for any [`Real`] scalar.

use crate::scalar::Real;

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEF: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural log of the gamma function for `x > 0` (Lanczos, g = 7).
pub fn ln_gamma<T: Real>(x: T) -> T {
    if !(x > T::zero()) {
        return T::nan();
    }
    if x < T::lit(0.5) {
        // lnΓ(x) = lnΓ(x + 1) − ln x keeps the argument in the accurate range.
        return ln_gamma(x + T::one()) - x.ln();
    }
    let x = x - T::one();
    let mut acc = T::lit(LANCZOS_COEF[0]);
    for (i, &c) in LANCZOS_COEF.iter().enumerate().skip(1) {
        acc += T::lit(c) / (x + T::from_usize_lossy(i));
    }
    let t = x + T::lit(LANCZOS_G + 0.5);
    T::lit(0.5 * (2.0 * std::f64::consts::PI).ln()) + (x + T::lit(0.5)) * t.ln() - t + acc.ln()
}

/// Digamma Ψ(x) = d/dx lnΓ(x) for `x > 0`.
///
/// Uses the recurrence Ψ(x) = Ψ(x + 1) − 1/x to reach x ≥ 10, then the
/// asymptotic Bernoulli series.
pub fn digamma<T: Real>(x: T) -> T {
    if !(x > T::zero()) {
        return T::nan();
    }
    let mut x = x;
    let mut acc = T::zero();
    let ten = T::lit(10.0);
    while x < ten {
        acc -= x.recip();
        x += T::one();
    }
    let f = (x * x).recip();
    let series = f
        * (T::lit(1.0 / 12.0)
            - f * (T::lit(1.0 / 120.0)
                - f * (T::lit(1.0 / 252.0)
                    - f * (T::lit(1.0 / 240.0)
                        - f * (T::lit(1.0 / 132.0) - f * T::lit(691.0 / 32_760.0))))));
    acc + x.ln() - T::lit(0.5) / x - series
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digamma_recurrence_values() {
        let euler = 0.577_215_664_901_532_9_f64;
        assert!((digamma(1.0_f64) + euler).abs() < 1e-14);
        assert!((digamma(3.0_f64) - (1.5 - euler)).abs() < 1e-14);
        assert!((digamma(0.5_f64) - (-euler - 2.0 * 2f64.ln())).abs() < 1e-13);
    }

    #[test]
    fn ln_gamma_integers() {
        assert!(ln_gamma(1.0_f64).abs() < 1e-14);
        assert!(ln_gamma(2.0_f64).abs() < 1e-14);
        assert!((ln_gamma(5.0_f64) - 24f64.ln()).abs() < 1e-13);
        assert!((ln_gamma(0.5_f64) - std::f64::consts::PI.sqrt().ln()).abs() < 1e-13);
    }

    #[test]
    fn nonpositive_is_nan() {
        assert!(digamma(0.0_f64).is_nan());
        assert!(ln_gamma(-1.0_f64).is_nan());
    }

    #[test]
    fn works_in_f32() {
        assert!((digamma(1.0_f32) + 0.577_215_7).abs() < 1e-5);
        assert!((ln_gamma(5.0_f32) - 24f32.ln()).abs() < 1e-4);
    }
}
