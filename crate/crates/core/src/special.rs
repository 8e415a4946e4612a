//! Polygamma functions and reference distribution tail probabilities.

use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::beta::beta_reg;
use statrs::function::erf::erfc;

use crate::scalar::Scalar;

/// Below this the recurrence shifts the argument upward before the
/// asymptotic expansion is used.
const ASYMPTOTIC_FROM: f64 = 10.0;

/// Degrees of freedom at or above which the normal distribution stands in
/// for Student's t.
pub const DF_NORMAL_CAP: f64 = 1e6;

/// Digamma `ψ(x)` for `x > 0`.
pub fn digamma<T: Scalar>(x: T) -> T {
    if !(x > T::zero()) {
        return T::nan();
    }
    let mut x = x;
    let mut acc = T::zero();
    while x < T::of(ASYMPTOTIC_FROM) {
        acc -= x.recip();
        x += T::one();
    }
    let x2 = (x * x).recip();
    // ln x − 1/(2x) − Σ B_{2k} / (2k x^{2k})
    let series = x2
        * (T::of(1.0 / 12.0)
            - x2 * (T::of(1.0 / 120.0)
                - x2 * (T::of(1.0 / 252.0)
                    - x2 * (T::of(1.0 / 240.0)
                        - x2 * (T::of(1.0 / 132.0) - x2 * (T::of(691.0 / 32760.0) - x2 * T::of(1.0 / 12.0)))))));
    acc + x.ln() - T::of(0.5) / x - series
}

/// Trigamma `ψ'(x)` for `x > 0`.
pub fn trigamma<T: Scalar>(x: T) -> T {
    if !(x > T::zero()) {
        return T::nan();
    }
    let mut x = x;
    let mut acc = T::zero();
    while x < T::of(ASYMPTOTIC_FROM) {
        acc += (x * x).recip();
        x += T::one();
    }
    let xi = x.recip();
    let x2 = xi * xi;
    // 1/x + 1/(2x²) + Σ B_{2k} / x^{2k+1}
    let series = xi
        * x2
        * (T::of(1.0 / 6.0)
            - x2 * (T::of(1.0 / 30.0)
                - x2 * (T::of(1.0 / 42.0)
                    - x2 * (T::of(1.0 / 30.0)
                        - x2 * (T::of(5.0 / 66.0) - x2 * (T::of(691.0 / 2730.0) - x2 * T::of(7.0 / 6.0)))))));
    acc + xi + T::of(0.5) * x2 + series
}

/// Tetragamma `ψ''(x)` for `x > 0`.
pub fn tetragamma<T: Scalar>(x: T) -> T {
    if !(x > T::zero()) {
        return T::nan();
    }
    let mut x = x;
    let mut acc = T::zero();
    while x < T::of(ASYMPTOTIC_FROM) {
        acc -= T::of(2.0) / (x * x * x);
        x += T::one();
    }
    let xi = x.recip();
    let x2 = xi * xi;
    // −1/x² − 1/x³ − Σ (2k+1) B_{2k} / x^{2k+2}
    let series = x2
        * x2
        * (T::of(0.5)
            - x2 * (T::of(1.0 / 6.0)
                - x2 * (T::of(1.0 / 6.0)
                    - x2 * (T::of(3.0 / 10.0)
                        - x2 * (T::of(5.0 / 6.0) - x2 * (T::of(691.0 / 210.0) - x2 * T::of(35.0 / 2.0)))))));
    acc - x2 - x2 * xi - series
}

/// Solves `trigamma(y) = x` for `y > 0` by Newton's method on `1/trigamma`,
/// starting from `0.5 + 1/x`.
pub fn trigamma_inverse<T: Scalar>(x: T) -> T {
    if !(x > T::zero()) {
        return T::nan();
    }
    if x > T::of(1e7) {
        return x.sqrt().recip();
    }
    if x < T::of(1e-6) {
        return x.recip();
    }
    let tol = T::of(1e-8).max(T::epsilon() * T::of(16.0));
    let mut y = T::of(0.5) + x.recip();
    for _ in 0..50 {
        let tri = trigamma(y);
        let step = tri * (T::one() - tri / x) / tetragamma(y);
        y += step;
        if -step / y < tol {
            break;
        }
    }
    y
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("standard normal")
}

/// `2 (1 − Φ(|z|))`, computed through the complementary error function.
pub fn normal_two_sided_p<T: Scalar>(z: T) -> T {
    let z = z.as_f64().abs();
    T::of(erfc(z / std::f64::consts::SQRT_2).min(1.0))
}

/// Two-sided Student-t p-value; the normal distribution is used once
/// `df >= DF_NORMAL_CAP`.
pub fn student_t_two_sided_p<T: Scalar>(t: T, df: T) -> T {
    let df = df.as_f64();
    if df >= DF_NORMAL_CAP {
        return normal_two_sided_p(t);
    }
    let t = t.as_f64();
    if t == 0.0 {
        return T::one();
    }
    if t.is_infinite() {
        return T::zero();
    }
    let x = df / (df + t * t);
    T::of(beta_reg(df / 2.0, 0.5, x).clamp(0.0, 1.0))
}

/// Standard normal quantile.
pub fn normal_quantile<T: Scalar>(p: T) -> T {
    T::of(std_normal().inverse_cdf(p.as_f64()))
}
