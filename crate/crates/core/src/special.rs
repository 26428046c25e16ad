//! Log-space binomial and incomplete-beta numerics.
//!
//! Binomial probabilities use Loader's saddle-point form (Stirling error plus
//! deviance terms), which keeps full relative precision for large `n` where
//! differences of log-factorials would not. Tail sums start at the boundary
//! term and walk away from the mode, so every summand is a ratio of adjacent
//! terms and the sum stops once the geometric remainder is negligible.

use std::f64::consts::PI;

use crate::error::{Error, Result};

const LN_2PI: f64 = 1.837_877_066_409_345_5;
const TAIL_EPS: f64 = 1e-18;

/// `ln n! - [(n + 1/2) ln n - n + ln sqrt(2π)]` for integer `n`.
pub fn stirlerr(n: u64) -> f64 {
    const S0: f64 = 1.0 / 12.0;
    const S1: f64 = 1.0 / 360.0;
    const S2: f64 = 1.0 / 1260.0;
    const S3: f64 = 1.0 / 1680.0;
    const S4: f64 = 1.0 / 1188.0;
    if n == 0 {
        return 0.0;
    }
    if n <= 15 {
        let mut lf = 0.0f64;
        for i in 2..=n {
            lf += (i as f64).ln();
        }
        let nf = n as f64;
        return lf - (nf + 0.5) * nf.ln() + nf - 0.5 * (2.0 * PI).ln();
    }
    let nf = n as f64;
    let nn = nf * nf;
    if n > 500 {
        (S0 - S1 / nn) / nf
    } else if n > 80 {
        (S0 - (S1 - S2 / nn) / nn) / nf
    } else if n > 35 {
        (S0 - (S1 - (S2 - S3 / nn) / nn) / nn) / nf
    } else {
        (S0 - (S1 - (S2 - (S3 - S4 / nn) / nn) / nn) / nn) / nf
    }
}

/// Deviance term `x ln(x/np) + np - x`, evaluated without cancellation.
pub fn bd0(x: f64, np: f64) -> f64 {
    if (x - np).abs() < 0.1 * (x + np) {
        let mut v = (x - np) / (x + np);
        let mut s = (x - np) * v;
        let mut ej = 2.0 * x * v;
        v *= v;
        let mut j = 1;
        loop {
            ej *= v;
            let s1 = s + ej / (2 * j + 1) as f64;
            if s1 == s {
                return s1;
            }
            s = s1;
            j += 1;
            if j > 1000 {
                return s;
            }
        }
    }
    x * (x / np).ln() + np - x
}

/// `ln P(X = x)` for `X ~ Binomial(n, p)`.
pub fn binom_log_pmf(x: u64, n: u64, p: f64) -> f64 {
    if x > n {
        return f64::NEG_INFINITY;
    }
    let q = 1.0 - p;
    if p == 0.0 {
        return if x == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    if q == 0.0 {
        return if x == n { 0.0 } else { f64::NEG_INFINITY };
    }
    let nf = n as f64;
    if x == 0 {
        return if p < 0.5 { nf * (-p).ln_1p() } else { nf * q.ln() };
    }
    if x == n {
        return if q < 0.5 { nf * (-q).ln_1p() } else { nf * p.ln() };
    }
    let xf = x as f64;
    let lc = stirlerr(n) - stirlerr(x) - stirlerr(n - x) - bd0(xf, nf * p) - bd0(nf - xf, nf * q);
    let lf = LN_2PI + xf.ln() + (-xf / nf).ln_1p();
    lc - 0.5 * lf
}

/// `ln Σ_{j ≤ s} P(X = j) / P(X = s)` for `s ≤ np`, where the terms
/// decrease monotonically going down.
pub(crate) fn left_tail_factor(s: u64, n: u64, p: f64) -> f64 {
    let q = 1.0 - p;
    let mut acc = 1.0f64;
    let mut term = 1.0f64;
    let mut j = s;
    while j > 0 {
        let r = (j as f64 * q) / ((n - j + 1) as f64 * p);
        term *= r;
        acc += term;
        j -= 1;
        if j == 0 {
            break;
        }
        // ratios shrink further down, so the remainder is at most geometric
        let r_next = (j as f64 * q) / ((n - j + 1) as f64 * p);
        if r_next < 1.0 && term * r_next / (1.0 - r_next) <= TAIL_EPS * acc {
            break;
        }
    }
    acc.ln()
}

/// `ln P(X ≤ s)` for `X ~ Binomial(n, p)`, `0 < p < 1`.
pub fn binom_log_cdf(s: u64, n: u64, p: f64) -> f64 {
    if s >= n {
        return 0.0;
    }
    let nf = n as f64;
    if (s as f64) <= nf * p {
        binom_log_pmf(s, n, p) + left_tail_factor(s, n, p)
    } else {
        // complement: P(X ≥ s+1) = P(n - X ≤ n - s - 1), and n - s - 1 < nq
        let log_upper = binom_log_sf(s, n, p);
        (-log_upper.exp()).ln_1p()
    }
}

/// `ln P(X > s)` for `X ~ Binomial(n, p)`, `0 < p < 1`.
pub fn binom_log_sf(s: u64, n: u64, p: f64) -> f64 {
    if s >= n {
        return f64::NEG_INFINITY;
    }
    let q = 1.0 - p;
    let nf = n as f64;
    let t = n - s - 1;
    if (t as f64) <= nf * q {
        binom_log_pmf(t, n, q) + left_tail_factor(t, n, q)
    } else {
        let log_lower = binom_log_cdf(s, n, p);
        (-log_lower.exp()).ln_1p()
    }
}

/// `ln C(n, k)` with full relative precision of the binomial pmf.
pub fn ln_choose(n: u64, k: u64) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    if k == 0 || k == n {
        return 0.0;
    }
    binom_log_pmf(k, n, 0.5) + n as f64 * std::f64::consts::LN_2
}

/// `ln Beta(a, b)` for positive integers.
pub fn ln_beta_int(a: u64, b: u64) -> f64 {
    let n = a + b - 1;
    -(n as f64).ln() - ln_choose(n - 1, a - 1)
}

/// Natural log of the (unregularised) incomplete beta function
/// `B(z; a, b) = ∫₀^z t^{a-1} (1-t)^{b-1} dt` for positive integers `a, b`.
///
/// Uses `B(z; a, b) = Beta(a, b) · Σ_{j=a}^{a+b-1} C(a+b-1, j) z^j (1-z)^{a+b-1-j}`,
/// i.e. a binomial upper tail, accumulated in log space.
pub fn log_incomplete_beta(z: f64, a: u64, b: u64) -> Result<f64> {
    if !(z > 0.0 && z < 1.0) {
        return Err(Error::input(format!("z = {z} must lie in (0, 1)")));
    }
    if a == 0 || b == 0 {
        return Err(Error::input(format!("shape parameters must be positive (a = {a}, b = {b})")));
    }
    let n = a + b - 1;
    Ok(ln_beta_int(a, b) + binom_log_sf(a - 1, n, z))
}

/// Standard normal upper tail `P(Z > z)`.
pub fn normal_sf(z: f64) -> f64 {
    0.5 * libm::erfc(z / std::f64::consts::SQRT_2)
}
