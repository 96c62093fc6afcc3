//! Pearson correlation with exact two-tailed p-values.
//!
//! The p-value of a correlation `r` over `n` pairs is obtained from the
//! Student-t statistic `t = r * sqrt((n - 2) / (1 - r^2))` with `n - 2`
//! degrees of freedom, through the identity
//! `P(|T| >= |t|) = I_{df / (df + t^2)}(df / 2, 1 / 2)` where `I` is the
//! regularized incomplete beta function. `I` is evaluated by its continued
//! fraction (modified Lentz), which stays accurate deep in the tail where a
//! normal approximation is useless.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::num::Real;

/// Relative tolerance of the incomplete beta continued fraction.
pub const BETA_CF_TOLERANCE: f64 = 1e-12;
/// Iteration cap of the incomplete beta continued fraction.
pub const BETA_CF_MAX_ITER: usize = 500;

/// Which side of a paired series an error refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    X,
    Y,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Side::X => f.write_str("x"),
            Side::Y => f.write_str("y"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("TOO_SHORT: series has {n} values, at least {min} required")]
    TooShort { n: usize, min: usize },
    #[error("ZERO_VARIANCE: {0} series is constant")]
    ZeroVariance(Side),
    #[error("LENGTH_MISMATCH: x has {x} values, y has {y}")]
    LengthMismatch { x: usize, y: usize },
    #[error("NON_FINITE: {side} series has a non-finite value at index {index}")]
    NonFinite { side: Side, index: usize },
    #[error("EMPTY_INPUT: no values")]
    EmptyInput,
    #[error("INVALID_DF: degrees of freedom must be at least 1")]
    InvalidDegreesOfFreedom,
    #[error("NON_FINITE: t statistic is not finite")]
    NonFiniteStatistic,
    #[error("NONCONVERGENCE: incomplete beta continued fraction failed for a={a}, b={b}, x={x}")]
    NonConvergence { a: f64, b: f64, x: f64 },
}

impl StatsError {
    pub fn code(&self) -> &'static str {
        match self {
            StatsError::TooShort { .. } => "TOO_SHORT",
            StatsError::ZeroVariance(_) => "ZERO_VARIANCE",
            StatsError::LengthMismatch { .. } => "LENGTH_MISMATCH",
            StatsError::NonFinite { .. } | StatsError::NonFiniteStatistic => "NON_FINITE",
            StatsError::EmptyInput => "EMPTY_INPUT",
            StatsError::InvalidDegreesOfFreedom => "INVALID_DF",
            StatsError::NonConvergence { .. } => "NONCONVERGENCE",
        }
    }

    /// True for failures that indicate a numerics bug rather than bad data.
    pub fn is_numerical(&self) -> bool {
        matches!(self, StatsError::NonConvergence { .. })
    }
}

/// Two equal-length, finite series.
#[derive(Debug, Clone, Copy)]
pub struct PairedSeries<'a, T> {
    xs: &'a [T],
    ys: &'a [T],
}

impl<'a, T: Real> PairedSeries<'a, T> {
    pub fn new(xs: &'a [T], ys: &'a [T]) -> Result<Self, StatsError> {
        if xs.len() != ys.len() {
            return Err(StatsError::LengthMismatch {
                x: xs.len(),
                y: ys.len(),
            });
        }
        for (side, values) in [(Side::X, xs), (Side::Y, ys)] {
            if let Some(index) = values.iter().position(|v| !v.is_finite()) {
                return Err(StatsError::NonFinite { side, index });
            }
        }
        Ok(Self { xs, ys })
    }

    pub fn xs(&self) -> &'a [T] {
        self.xs
    }

    pub fn ys(&self) -> &'a [T] {
        self.ys
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }
}

/// Correlation coefficient with its two-tailed p-value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correlation<T> {
    pub r: T,
    pub p_value: T,
    pub n: usize,
}

/// Neumaier-compensated sum.
fn compensated_sum<T: Real>(values: impl IntoIterator<Item = T>) -> T {
    let mut sum = T::zero();
    let mut comp = T::zero();
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp = comp + ((sum - t) + v);
        } else {
            comp = comp + ((v - t) + sum);
        }
        sum = t;
    }
    sum + comp
}

/// Arithmetic mean.
pub fn mean<T: Real>(values: &[T]) -> Result<T, StatsError> {
    if values.is_empty() {
        return Err(StatsError::EmptyInput);
    }
    Ok(compensated_sum(values.iter().copied()) / T::count(values.len()))
}

fn is_constant<T: Real>(values: &[T]) -> bool {
    values.iter().all(|v| *v == values[0])
}

/// Pearson product-moment correlation, two-pass centered, clamped to `[-1, 1]`.
pub fn pearson_r<T: Real>(series: &PairedSeries<'_, T>) -> Result<T, StatsError> {
    let n = series.len();
    if n < 2 {
        return Err(StatsError::TooShort { n, min: 2 });
    }
    // Exact constancy check: a rounded mean of identical values may leave
    // spurious nonzero deviations.
    if is_constant(series.xs) {
        return Err(StatsError::ZeroVariance(Side::X));
    }
    if is_constant(series.ys) {
        return Err(StatsError::ZeroVariance(Side::Y));
    }
    let mx = mean(series.xs)?;
    let my = mean(series.ys)?;
    let mut sxy = T::zero();
    let mut sxx = T::zero();
    let mut syy = T::zero();
    for (&x, &y) in series.xs.iter().zip(series.ys) {
        let dx = x - mx;
        let dy = y - my;
        sxy = sxy + dx * dy;
        sxx = sxx + dx * dx;
        syy = syy + dy * dy;
    }
    if sxx == T::zero() {
        return Err(StatsError::ZeroVariance(Side::X));
    }
    if syy == T::zero() {
        return Err(StatsError::ZeroVariance(Side::Y));
    }
    // sqrt of the product keeps exact linear fits at exactly one; fall back
    // to separate roots if the product leaves the finite range.
    let prod = sxx * syy;
    let denom = if prod.is_finite() && prod > T::zero() {
        prod.sqrt()
    } else {
        sxx.sqrt() * syy.sqrt()
    };
    let r = sxy / denom;
    Ok(r.max(-T::one()).min(T::one()))
}

/// Two-tailed p-value of a Student-t statistic with `df` degrees of freedom.
pub fn t_two_tailed_p<T: Real>(t: T, df: u64) -> Result<T, StatsError> {
    if df == 0 {
        return Err(StatsError::InvalidDegreesOfFreedom);
    }
    if !t.is_finite() {
        return Err(StatsError::NonFiniteStatistic);
    }
    if t == T::zero() {
        return Ok(T::one());
    }
    let nu = T::from_u64(df).expect("df representable");
    let t2 = t * t;
    if !t2.is_finite() {
        return Ok(T::zero());
    }
    let denom = nu + t2;
    // Both complements computed directly so neither loses precision to 1 - x.
    let x = nu / denom;
    let y = t2 / denom;
    let half = T::lit(0.5);
    let p = incomplete_beta_split(nu * half, half, x, y)?;
    Ok(p.max(T::zero()).min(T::one()))
}

/// Pearson correlation with its two-tailed p-value.
///
/// `|r| = 1` maps to `p = 0` exactly.
pub fn pearson_with_p<T: Real>(series: &PairedSeries<'_, T>) -> Result<Correlation<T>, StatsError> {
    let n = series.len();
    if n < 3 {
        return Err(StatsError::TooShort { n, min: 3 });
    }
    let r = pearson_r(series)?;
    let p_value = p_value_for_r(r, n)?;
    Ok(Correlation { r, p_value, n })
}

/// Two-tailed p-value of a correlation `r` observed over `n >= 3` pairs.
pub fn p_value_for_r<T: Real>(r: T, n: usize) -> Result<T, StatsError> {
    if n < 3 {
        return Err(StatsError::TooShort { n, min: 3 });
    }
    let r = r.max(-T::one()).min(T::one());
    if r.abs() == T::one() {
        return Ok(T::zero());
    }
    let df = (n - 2) as u64;
    let t = r * (T::count(n - 2) / (T::one() - r * r)).sqrt();
    t_two_tailed_p(t, df)
}

/// Regularized incomplete beta `I_x(a, b)` for `a, b > 0`, `x` in `[0, 1]`.
pub fn regularized_incomplete_beta<T: Real>(a: T, b: T, x: T) -> Result<T, StatsError> {
    if !(x >= T::zero() && x <= T::one()) {
        return Err(StatsError::NonConvergence {
            a: a.as_f64(),
            b: b.as_f64(),
            x: x.as_f64(),
        });
    }
    incomplete_beta_split(a, b, x, T::one() - x)
}

/// `I_x(a, b)` with `y = 1 - x` supplied by the caller.
fn incomplete_beta_split<T: Real>(a: T, b: T, x: T, y: T) -> Result<T, StatsError> {
    if x <= T::zero() {
        return Ok(T::zero());
    }
    if y <= T::zero() {
        return Ok(T::one());
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * y.ln();
    let front = ln_front.exp();
    let two = T::lit(2.0);
    if x < (a + T::one()) / (a + b + two) {
        Ok(front * beta_continued_fraction(a, b, x)? / a)
    } else {
        Ok(T::one() - front * beta_continued_fraction(b, a, y)? / b)
    }
}

/// Continued fraction for the incomplete beta, modified Lentz.
fn beta_continued_fraction<T: Real>(a: T, b: T, x: T) -> Result<T, StatsError> {
    let tol = T::lit(BETA_CF_TOLERANCE).max(T::epsilon() * T::lit(4.0));
    let tiny = T::min_positive_value() / T::epsilon();
    let one = T::one();
    let qab = a + b;
    let qap = a + one;
    let qam = a - one;

    let guard = |v: T| if v.abs() < tiny { tiny } else { v };

    let mut c = one;
    let mut d = one / guard(one - qab * x / qap);
    let mut h = d;
    for m in 1..=BETA_CF_MAX_ITER {
        let m = T::count(m);
        let m2 = m + m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = one / guard(one + aa * d);
        c = guard(one + aa / c);
        h = h * d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = one / guard(one + aa * d);
        c = guard(one + aa / c);
        let delta = d * c;
        h = h * delta;
        if (delta - one).abs() <= tol {
            return Ok(h);
        }
    }
    Err(StatsError::NonConvergence {
        a: a.as_f64(),
        b: b.as_f64(),
        x: x.as_f64(),
    })
}

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEFFS: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural log of the gamma function for `x > 0` (Lanczos, g = 7).
pub fn ln_gamma<T: Real>(x: T) -> T {
    let half = T::lit(0.5);
    if x < half {
        // Reflection: Γ(x)Γ(1-x) = π / sin(πx)
        let pi = T::lit(std::f64::consts::PI);
        return (pi / (pi * x).sin()).ln() - ln_gamma(T::one() - x);
    }
    let x = x - T::one();
    let mut acc = T::lit(LANCZOS_COEFFS[0]);
    for (i, &c) in LANCZOS_COEFFS.iter().enumerate().skip(1) {
        acc = acc + T::lit(c) / (x + T::count(i));
    }
    let t = x + T::lit(LANCZOS_G) + half;
    let ln_sqrt_2pi = T::lit(0.918_938_533_204_672_8);
    ln_sqrt_2pi + (x + half) * t.ln() - t + acc.ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn series<'a>(xs: &'a [f64], ys: &'a [f64]) -> PairedSeries<'a, f64> {
        PairedSeries::new(xs, ys).unwrap()
    }

    /// Tail of the t density by Gauss-Legendre quadrature in the angle
    /// domain `t = sqrt(df) tan(theta)`, where the integrand becomes
    /// `cos(theta)^(df - 1)`. Normalized numerically, no gamma functions.
    fn quadrature_p(t: f64, df: u64) -> f64 {
        let nodes = [
            (-0.906_179_845_938_664, 0.236_926_885_056_189_1),
            (-0.538_469_310_105_683, 0.478_628_670_499_366_5),
            (0.0, 0.568_888_888_888_888_9),
            (0.538_469_310_105_683, 0.478_628_670_499_366_5),
            (0.906_179_845_938_664, 0.236_926_885_056_189_1),
        ];
        let integrate = |lo: f64, hi: f64| {
            let panels = 4000;
            let h = (hi - lo) / panels as f64;
            let mut acc = 0.0;
            for k in 0..panels {
                let mid = lo + (k as f64 + 0.5) * h;
                for (x, w) in nodes {
                    let theta = mid + 0.5 * h * x;
                    acc += w * 0.5 * h * theta.cos().powi(df as i32 - 1);
                }
            }
            acc
        };
        let half_pi = std::f64::consts::FRAC_PI_2;
        let theta0 = (t.abs() / (df as f64).sqrt()).atan();
        integrate(theta0, half_pi) / integrate(0.0, half_pi)
    }

    #[test]
    fn perfect_correlations() {
        let xs = [1.0, 2.0, 3.0];
        assert_eq!(pearson_r(&series(&xs, &xs)).unwrap(), 1.0);
        let neg = [-1.0, -2.0, -3.0];
        assert_eq!(pearson_r(&series(&xs, &neg)).unwrap(), -1.0);
    }

    #[test]
    fn hand_computed_r() {
        // mean x = 3, mean y = 3.2; sxy = 10, sxx = 10, syy = 14.8
        let expected = 10.0 / 148.0f64.sqrt();
        let r = pearson_r(&series(&[1.0, 2.0, 3.0, 4.0, 5.0], &[2.0, 1.0, 4.0, 3.0, 6.0])).unwrap();
        assert_abs_diff_eq!(r, expected, epsilon = 1e-15);
        assert_abs_diff_eq!(r, 0.822_0, epsilon = 1e-4);
    }

    #[test]
    fn zero_variance_and_short_inputs() {
        assert_eq!(
            pearson_r(&series(&[2.0, 2.0, 2.0], &[1.0, 2.0, 3.0])),
            Err(StatsError::ZeroVariance(Side::X))
        );
        assert_eq!(
            pearson_r(&series(&[1.0, 2.0, 3.0], &[0.1, 0.1, 0.1])),
            Err(StatsError::ZeroVariance(Side::Y))
        );
        assert_eq!(
            pearson_r(&series(&[1.0], &[1.0])),
            Err(StatsError::TooShort { n: 1, min: 2 })
        );
        assert_eq!(
            pearson_with_p(&series(&[1.0, 2.0], &[1.0, 3.0])),
            Err(StatsError::TooShort { n: 2, min: 3 })
        );
        assert!(matches!(
            PairedSeries::new(&[1.0, f64::NAN], &[1.0, 2.0]),
            Err(StatsError::NonFinite { side: Side::X, index: 1 })
        ));
        assert!(matches!(
            PairedSeries::new(&[1.0, 2.0], &[1.0]),
            Err(StatsError::LengthMismatch { x: 2, y: 1 })
        ));
    }

    #[test]
    fn t_p_closed_forms() {
        for df in [1, 2, 7, 100, 10_000] {
            assert_eq!(t_two_tailed_p(0.0, df).unwrap(), 1.0);
        }
        // df = 1 is Cauchy: 1 - (2/pi) atan(1) = 1/2
        assert_abs_diff_eq!(t_two_tailed_p(1.0, 1).unwrap(), 0.5, epsilon = 1e-12);
        // df = 2: p = 1 - t / sqrt(2 + t^2)
        for t in [0.3, 1.0, 4.0, 25.0] {
            let exact = 1.0 - t / (2.0f64 + t * t).sqrt();
            assert_abs_diff_eq!(t_two_tailed_p(t, 2).unwrap(), exact, epsilon = 1e-12);
        }
        assert_eq!(t_two_tailed_p(1.0, 0), Err(StatsError::InvalidDegreesOfFreedom));
    }

    #[test]
    fn t_p_against_quadrature() {
        let expected = quadrature_p(2.5, 10);
        assert_abs_diff_eq!(expected, 0.031_446_844, epsilon = 1e-9);
        assert_abs_diff_eq!(t_two_tailed_p(2.5, 10).unwrap(), expected, epsilon = 1e-12);
        for &(t, df) in &[(0.1, 3), (-1.7, 5), (3.3, 41), (8.0, 150), (0.02, 498), (12.0, 30)] {
            let p = t_two_tailed_p(t, df).unwrap();
            assert_abs_diff_eq!(p, quadrature_p(t, df), epsilon = 1e-11);
        }
    }

    #[test]
    fn normal_limit() {
        let p = t_two_tailed_p(1.96, 10_000).unwrap();
        assert!((0.0498..=0.0502).contains(&p), "p = {p}");
    }

    #[test]
    fn perfect_fit_has_zero_p() {
        let xs = [1.0, 2.0, 3.0, 4.0, 5.0];
        let c = pearson_with_p(&series(&xs, &xs)).unwrap();
        assert_eq!((c.r, c.p_value, c.n), (1.0, 0.0, 5));
    }

    #[test]
    fn reported_pairs_are_consistent() {
        let p = p_value_for_r(0.29, 180).unwrap();
        assert!((1e-5..=1e-3).contains(&p), "p = {p}");
        let p = p_value_for_r(0.67, 9).unwrap();
        assert!((0.03..=0.07).contains(&p), "p = {p}");
    }

    #[test]
    fn incomplete_beta_symmetry() {
        for &(a, b, x) in &[(0.5, 0.5, 0.3), (2.0, 3.0, 0.9), (40.0, 0.5, 0.95), (1.0, 1.0, 0.25)] {
            let lhs = regularized_incomplete_beta(a, b, x).unwrap();
            let rhs = 1.0 - regularized_incomplete_beta(b, a, 1.0 - x).unwrap();
            assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-13);
        }
        // I_x(1, 1) = x
        assert_abs_diff_eq!(regularized_incomplete_beta(1.0, 1.0, 0.25).unwrap(), 0.25, epsilon = 1e-15);
    }

    #[test]
    fn ln_gamma_known_values() {
        assert_abs_diff_eq!(ln_gamma(1.0f64), 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(ln_gamma(0.5f64), std::f64::consts::PI.sqrt().ln(), epsilon = 1e-14);
        // ln(9!) = ln 362880
        assert_abs_diff_eq!(ln_gamma(10.0f64), 362_880f64.ln(), epsilon = 1e-12);
    }

    #[test]
    fn mean_cases() {
        assert_eq!(mean(&[5.0]).unwrap(), 5.0);
        assert_eq!(mean(&[1.0, 2.0, 3.0]).unwrap(), 2.0);
        assert_eq!(mean::<f64>(&[]), Err(StatsError::EmptyInput));
    }

    #[test]
    fn works_in_single_precision() {
        let xs = [1.0f32, 2.0, 3.0, 4.0, 5.0];
        let ys = [2.0f32, 1.0, 4.0, 3.0, 6.0];
        let c = pearson_with_p(&PairedSeries::new(&xs, &ys).unwrap()).unwrap();
        assert!((c.r - 0.822_0).abs() < 1e-4);
        let p64 = pearson_with_p(&series(&[1.0, 2.0, 3.0, 4.0, 5.0], &[2.0, 1.0, 4.0, 3.0, 6.0]))
            .unwrap()
            .p_value;
        assert!((c.p_value as f64 - p64).abs() < 1e-5);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn affine_invariance(
                pairs in prop::collection::vec((-100.0f64..100.0, -100.0f64..100.0), 3..60),
                scale in 0.01f64..100.0,
                shift in -1e3f64..1e3,
            ) {
                let xs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
                let ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
                prop_assume!(!is_constant(&xs) && !is_constant(&ys));
                let base = pearson_r(&series(&xs, &ys)).unwrap();
                let moved: Vec<f64> = xs.iter().map(|x| scale * x + shift).collect();
                prop_assume!(!is_constant(&moved));
                let r = pearson_r(&series(&moved, &ys)).unwrap();
                prop_assert!((r - base).abs() < 1e-10);
                let negated: Vec<f64> = ys.iter().map(|y| -y).collect();
                let r = pearson_r(&series(&xs, &negated)).unwrap();
                prop_assert!((r + base).abs() < 1e-12);
            }

            #[test]
            fn p_decreases_in_abs_t(t in 0.0f64..50.0, dt in 1e-3f64..5.0, df in 1u64..400) {
                let p1 = t_two_tailed_p(t, df).unwrap();
                let p2 = t_two_tailed_p(t + dt, df).unwrap();
                prop_assert!(p2 <= p1);
                prop_assert_eq!(t_two_tailed_p(-t, df).unwrap(), p1);
            }

            #[test]
            fn mean_permutation_invariant(mut values in prop::collection::vec(-1e6f64..1e6, 1..200)) {
                let m = mean(&values).unwrap();
                values.reverse();
                let third = values.len() / 3;
                values.rotate_left(third);
                let m2 = mean(&values).unwrap();
                prop_assert!((m - m2).abs() <= 1e-12 * m.abs().max(1.0));
            }
        }
    }
}
