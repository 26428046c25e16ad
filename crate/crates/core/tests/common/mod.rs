//! Independent reference computations shared by the integration tests.
#![allow(dead_code)]

use num_bigint::BigUint;
use num_traits::{ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use iss_core::coding::EncodedDataset;
use iss_core::lattice::{GridSpec, Profile};

// ---- adaptive Gauss–Kronrod (7/15) ----

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for j in 0..7 {
        let x = h * XGK[j];
        let s = f(c - x) + f(c + x);
        k += WGK[j] * s;
        if j % 2 == 1 {
            g += WG[j / 2] * s;
        }
    }
    (k * h, (k - g).abs() * h)
}

/// Adaptive quadrature with a relative tolerance on the whole integral; the
/// second pass sets the local error floor from the first pass's value.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, rel_tol: f64) -> f64 {
    let mut est = gk15(f, a, b).0;
    for _ in 0..2 {
        let floor = rel_tol * est.abs().max(f64::MIN_POSITIVE);
        let mut stack = vec![(a, b, 0u32)];
        let mut acc = 0.0;
        while let Some((lo, hi, depth)) = stack.pop() {
            let (v, err) = gk15(f, lo, hi);
            let noise = 64.0 * f64::EPSILON * v.abs();
            if err <= floor * (hi - lo) / (b - a) || err <= noise || depth > 40 {
                acc += v;
            } else {
                let mid = 0.5 * (lo + hi);
                stack.push((lo, mid, depth + 1));
                stack.push((mid, hi, depth + 1));
            }
        }
        est = acc;
    }
    est
}

/// `ln ∫₀^z t^{a−1}(1−t)^{b−1} dt` by quadrature of the integrand scaled by
/// its maximum on `[0, z]`.
pub fn log_incomplete_beta_quad(z: f64, a: u64, b: u64) -> f64 {
    let (af, bf) = (a as f64 - 1.0, b as f64 - 1.0);
    let log_f = |t: f64| {
        let mut v = 0.0;
        if af > 0.0 {
            v += af * t.ln();
        }
        if bf > 0.0 {
            v += bf * (-t).ln_1p();
        }
        v
    };
    let mut peak = log_f(z);
    if a == 1 {
        peak = peak.max(0.0);
    }
    if a > 1 && b > 1 {
        let mode = af / (af + bf);
        if mode < z {
            peak = peak.max(log_f(mode));
        }
    }
    let f = |t: f64| if t <= 0.0 { if a == 1 { (-peak).exp() } else { 0.0 } } else { (log_f(t) - peak).exp() };
    peak + integrate(&f, 0.0, z, 1e-14).ln()
}

/// `ln P(Bin(n, τ) ≤ s)` through the regularised incomplete beta,
/// `I_{1−τ}(n−s, s+1)`, both integrals by quadrature.
pub fn log_binom_cdf_quad(s: u64, n: u64, tau: f64) -> f64 {
    if s >= n {
        return 0.0;
    }
    log_incomplete_beta_quad(1.0 - tau, n - s, s + 1) - log_incomplete_beta_quad(1.0, n - s, s + 1)
}

pub fn choose_u128(n: u64, k: u64) -> u128 {
    let k = k.min(n - k);
    let mut c: u128 = 1;
    for i in 0..k {
        c = c * (n - i) as u128 / (i + 1) as u128;
    }
    c
}

/// Oracle for `ln r_k`; valid for `k ≤ 120` where binomial coefficients fit.
pub fn log_ratio_oracle(k: u64, s: u64, tau: f64) -> f64 {
    let log_pmf = (choose_u128(k, s) as f64).ln() + s as f64 * tau.ln() + (k - s) as f64 * (-tau).ln_1p();
    ((k + 1) as f64).ln() + (-tau).ln_1p() + log_pmf - log_binom_cdf_quad(s, k + 1, tau)
}

// ---- exact rational binomial sums ----

const LN_2_HI: f64 = std::f64::consts::LN_2;
const LN_2_LO: f64 = 2.319_046_813_846_299_6e-17;

fn top_bits(x: &BigUint) -> (f64, u64) {
    let shift = x.bits().saturating_sub(64);
    ((x >> shift).to_f64().unwrap(), shift)
}

pub fn ln_big(x: &BigUint) -> f64 {
    let (top, shift) = top_bits(x);
    let sh = shift as f64;
    top.ln() + sh * LN_2_LO + sh * LN_2_HI
}

/// `ln(a / b)` without forming either logarithm at full magnitude.
pub fn ln_quotient(a: &BigUint, b: &BigUint) -> f64 {
    let (ta, sa) = top_bits(a);
    let (tb, sb) = top_bits(b);
    let d = sa as f64 - sb as f64;
    (ta / tb).ln() + d * LN_2_LO + d * LN_2_HI
}

/// Exact binomial weights for `τ = p/q`: `Σ_{j≤s} C(n,j) p^j (q−p)^{n−j}`
/// and the `j = s` term, both scaled by `q^n`.
pub fn binom_terms(s: u64, n: u64, p: u32, q: u32) -> (BigUint, BigUint) {
    let p_big = BigUint::from(p);
    let r_big = BigUint::from(q - p);
    let mut term = r_big.pow(n as u32);
    let mut sum = BigUint::zero();
    for j in 0..=s {
        sum += &term;
        if j == s {
            break;
        }
        term = term * BigUint::from(n - j) * &p_big;
        term /= BigUint::from(j + 1) * &r_big;
    }
    (sum, term)
}

/// `(ln P(X ≤ s), ln P(X = s))` for `X ~ Bin(n, p/q)`, from exact integers.
pub fn exact_binom(s: u64, n: u64, p: u32, q: u32) -> (f64, f64) {
    let (sum, at_s) = binom_terms(s, n, p, q);
    let denom = BigUint::from(q).pow(n as u32);
    (ln_quotient(&sum, &denom), ln_quotient(&at_s, &denom))
}

/// `ln r_k` for `τ = p/q` as a quotient of exact integers.
pub fn exact_log_ratio(k: u64, s: u64, p: u32, q: u32) -> f64 {
    let (_, pmf) = binom_terms(s, k, p, q);
    let (cdf, _) = binom_terms(s, k + 1, p, q);
    let num = pmf * BigUint::from(k + 1) * BigUint::from(q - p);
    ln_quotient(&num, &cdf)
}

// ---- brute-force lattice helpers ----

pub fn all_profiles(levels: &[u8]) -> Vec<Vec<u8>> {
    let mut out = vec![vec![]];
    for &l in levels {
        let mut next = Vec::with_capacity(out.len() * l as usize);
        for p in &out {
            for v in 0..l {
                let mut q = p.clone();
                q.push(v);
                next.push(q);
            }
        }
        out = next;
    }
    out
}

pub fn leq(a: &[u8], b: &[u8]) -> bool {
    a.iter().zip(b).all(|(x, y)| x <= y)
}

pub fn closure_count_brute(levels: &[u8], corners: &[Vec<u8>]) -> u64 {
    all_profiles(levels)
        .iter()
        .filter(|x| corners.iter().any(|c| leq(c, x)))
        .count() as u64
}

// ---- reference DAG test ----

/// Straightforward restatement of the round-based DAG test: each round,
/// every active node whose parent is inactive or absent is a root; a root's
/// budget is α times its share of active leaves; rejections close upward.
pub fn dag_test_reference(profiles: &[Vec<u8>], parent: &[Option<usize>], p: &[f64], alpha: f64) -> Vec<usize> {
    let m = profiles.len();
    let mut active = vec![true; m];
    loop {
        let children = |v: usize, active: &[bool]| -> Vec<usize> {
            (0..m).filter(|&c| active[c] && parent[c] == Some(v)).collect()
        };
        fn leaves(v: usize, children: &dyn Fn(usize) -> Vec<usize>) -> usize {
            let cs = children(v);
            if cs.is_empty() {
                1
            } else {
                cs.iter().map(|&c| leaves(c, children)).sum()
            }
        }
        let roots: Vec<usize> = (0..m)
            .filter(|&i| active[i] && parent[i].is_none_or(|q| !active[q]))
            .collect();
        if roots.is_empty() {
            break;
        }
        let snapshot = active.clone();
        let ch = |v: usize| children(v, &snapshot);
        let counts: Vec<usize> = roots.iter().map(|&r| leaves(r, &ch)).collect();
        let total: usize = counts.iter().sum();
        let hits: Vec<usize> = roots
            .iter()
            .zip(&counts)
            .filter(|(&r, &c)| p[r] <= alpha * c as f64 / total as f64)
            .map(|(&r, _)| r)
            .collect();
        if hits.is_empty() {
            break;
        }
        for j in 0..m {
            if active[j] && hits.iter().any(|&h| leq(&profiles[h], &profiles[j])) {
                active[j] = false;
            }
        }
    }
    (0..m).filter(|&i| !active[i]).collect()
}

// ---- data generation ----

/// Rows drawn uniformly on the grid with `P(Y = 1) = risk(x)`.
pub fn random_dataset(grid: &GridSpec, n: usize, seed: u64, risk: impl Fn(&[u8]) -> f64) -> EncodedDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for _ in 0..n {
        let x: Vec<u8> = grid.levels().iter().map(|&l| rng.random_range(0..l)).collect();
        ys.push(rng.random::<f64>() < risk(&x));
        xs.push(Profile::new(x));
    }
    EncodedDataset::new(grid.clone(), xs, ys).unwrap()
}
