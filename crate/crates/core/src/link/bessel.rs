//! Bessel functions of the first kind for small integer orders.
//!
//! Ascending power series below `|x| = 12`, Hankel asymptotic expansion
//! above. Both branches agree with a quadrature reference to about 1e-10.

use std::f64::consts::PI;

const SERIES_LIMIT: f64 = 12.0;

fn factorial(n: u32) -> f64 {
    (1..=n).map(f64::from).product()
}

/// `J_n(x) / x^n` from the ascending series. Finite at `x = 0`.
fn scaled_series(n: u32, x: f64) -> f64 {
    let q = -0.25 * x * x;
    let mut term = 1.0 / (2f64.powi(n as i32) * factorial(n));
    let mut sum = term;
    for k in 1..200u32 {
        term *= q / (f64::from(k) * f64::from(n + k));
        sum += term;
        if term.abs() <= 1e-17 * sum.abs() {
            break;
        }
    }
    sum
}

fn hankel_asymptotic(n: u32, x: f64) -> f64 {
    let mu = 4.0 * f64::from(n * n);
    let z = 8.0 * x;
    // P and Q share one running product; terms alternate between them.
    let mut p = 1.0;
    let mut q = 0.0;
    let mut term = 1.0;
    let mut prev = f64::INFINITY;
    for k in 1..60u32 {
        let odd = f64::from(2 * k - 1);
        term *= (mu - odd * odd) / (f64::from(k) * z);
        if term.abs() > prev {
            break;
        }
        prev = term.abs();
        match k % 4 {
            1 => q += term,
            2 => p -= term,
            3 => q -= term,
            _ => p += term,
        }
        if term.abs() < 1e-17 {
            break;
        }
    }
    let chi = x - (f64::from(n) * 0.5 + 0.25) * PI;
    (2.0 / (PI * x)).sqrt() * (p * chi.cos() - q * chi.sin())
}

/// Bessel function of the first kind `J_n(x)`.
pub fn bessel_j(n: u32, x: f64) -> f64 {
    let ax = x.abs();
    let value = if ax < SERIES_LIMIT {
        scaled_series(n, ax) * ax.powi(n as i32)
    } else {
        hankel_asymptotic(n, ax)
    };
    if x < 0.0 && n % 2 == 1 {
        -value
    } else {
        value
    }
}

/// `J_n(x) / x^n`, evaluated without division near the origin.
pub fn bessel_j_over_power(n: u32, x: f64) -> f64 {
    let ax = x.abs();
    if ax < SERIES_LIMIT {
        // even function of x
        scaled_series(n, ax)
    } else {
        bessel_j(n, ax) / ax.powi(n as i32)
    }
}
