mod common;

use common::{exact_binom, exact_log_ratio, log_incomplete_beta_quad, log_ratio_oracle};
use iss_core::pvalue::{log_martingale_ratio, pvalue_from_responses};
use iss_core::special::{binom_log_cdf, binom_log_pmf, log_incomplete_beta};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TAUS: [f64; 5] = [0.1, 0.172, 0.2, 0.5, 0.9];

fn rel_err(log_a: f64, log_b: f64) -> f64 {
    (log_a - log_b).exp_m1().abs()
}

#[test]
fn ratios_match_quadrature_for_short_prefixes() {
    let mut worst = 0.0f64;
    for &tau in &TAUS {
        for k in 1..=50u64 {
            for s in 0..=k {
                let got = log_martingale_ratio(k, s, tau).unwrap();
                let want = log_ratio_oracle(k, s, tau);
                let e = rel_err(got, want);
                assert!(e <= 1e-9, "tau={tau} k={k} s={s}: {got} vs {want}");
                worst = worst.max(e);
            }
        }
    }
    assert!(worst.is_finite());
}

#[test]
fn incomplete_beta_matches_quadrature() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..400 {
        let a = rng.random_range(1..=59u64);
        let b = rng.random_range(1..=60 - a);
        let z = rng.random_range(0.01..0.99);
        let got = log_incomplete_beta(z, a, b).unwrap();
        let want = log_incomplete_beta_quad(z, a, b);
        assert!(rel_err(got, want) <= 1e-9, "z={z} a={a} b={b}: {got} vs {want}");
    }
    assert!((log_incomplete_beta_quad(0.5, 2, 1) - 0.125f64.ln()).abs() < 1e-13);
    assert!((log_incomplete_beta_quad(0.3, 1, 3) - ((1.0 - 0.7f64.powi(3)) / 3.0).ln()).abs() < 1e-13);
    assert!((log_incomplete_beta(0.5, 1, 1).unwrap() - 0.5f64.ln()).abs() < 1e-15);
    assert!((log_incomplete_beta(0.5, 2, 1).unwrap() - 0.125f64.ln()).abs() < 1e-15);
}

#[test]
fn large_samples_match_exact_rationals() {
    let n = 10_000u64;
    for (p, q) in [(1u32, 5u32), (43, 250)] {
        let tau = p as f64 / q as f64;
        let centre = (n as f64 * tau) as u64;
        for s in [0, 1, 50, centre / 2, centre - 100, centre, centre + 150, 3 * centre / 2] {
            let (cdf, pmf) = exact_binom(s, n, p, q);
            let got_cdf = binom_log_cdf(s, n, tau);
            let got_pmf = binom_log_pmf(s, n, tau);
            let tol = |v: f64| 1e-12 + 8.0 * f64::EPSILON * v.abs();
            assert!((got_cdf - cdf).abs() <= tol(cdf), "cdf s={s} tau={tau}: {got_cdf} vs {cdf}");
            assert!((got_pmf - pmf).abs() <= tol(pmf), "pmf s={s} tau={tau}: {got_pmf} vs {pmf}");

            let want = exact_log_ratio(n - 1, s, p, q);
            let got = log_martingale_ratio(n - 1, s, tau).unwrap();
            assert!(rel_err(got, want) <= 1e-12, "ratio s={s} tau={tau}: {got} vs {want}");
        }
    }
}

fn brute_min(ys: &[bool], tau: f64) -> (f64, u64) {
    let mut best = (f64::INFINITY, 0);
    let mut s = 0;
    for (i, &y) in ys.iter().enumerate() {
        s += y as u64;
        let k = i as u64 + 1;
        let r = log_martingale_ratio(k, s, tau).unwrap();
        if r < best.0 {
            best = (r, k);
        }
    }
    best
}

#[test]
fn streaming_scan_matches_prefix_minimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for case in 0..60 {
        let tau = TAUS[case % TAUS.len()];
        let n = [40usize, 700, 5_000][case % 3];
        let rate = tau * rng.random_range(0.6..1.6);
        let ys: Vec<bool> = (0..n).map(|_| rng.random::<f64>() < rate.min(1.0)).collect();
        let p = pvalue_from_responses(&ys, tau).unwrap();
        let (best, k) = brute_min(&ys, tau);
        assert!((p.log_value - best).abs() <= 1e-12 * best.abs().max(1.0), "case {case}");
        assert_eq!(p.argmin_k, k, "case {case}");
        assert_eq!(p.value, best.exp().clamp(f64::MIN_POSITIVE, 1.0));
        if n <= 50 {
            let mut s = 0;
            let mut oracle = f64::INFINITY;
            for (i, &y) in ys.iter().enumerate() {
                s += y as u64;
                oracle = oracle.min(log_ratio_oracle(i as u64 + 1, s, tau));
            }
            assert!(rel_err(p.log_value, oracle) <= 1e-9);
        }
    }
}

#[test]
fn more_successes_never_raise_the_pvalue() {
    let tau = 0.2;
    for n in 1..=12usize {
        let seqs = 1u32 << n;
        let p: Vec<f64> = (0..seqs)
            .map(|bits| {
                let ys: Vec<bool> = (0..n).map(|i| bits >> i & 1 == 1).collect();
                pvalue_from_responses(&ys, tau).unwrap().value
            })
            .collect();
        for bits in 0..seqs {
            for i in 0..n {
                if bits >> i & 1 == 0 {
                    assert!(p[(bits | 1 << i) as usize] <= p[bits as usize] + 1e-15);
                }
            }
            if n < 12 {
                let ys: Vec<bool> = (0..n).map(|i| bits >> i & 1 == 1).chain([true]).collect();
                assert!(pvalue_from_responses(&ys, tau).unwrap().value <= p[bits as usize] + 1e-15);
            }
        }
    }
}
