//! Anytime-valid p-values for `H0: η(x) < τ`.
//!
//! The responses of all rows dominated by `x` are streamed through a
//! beta-binomial test martingale; the p-value is the smallest inverse
//! martingale value over all prefixes, which reduces to
//!
//! ```text
//! r_k = (k+1)(1-τ) · P(Bin(k, τ) = S_k) / P(Bin(k+1, τ) ≤ S_k)
//! ```
//!
//! and `p = min(1, min_k r_k)`.

use std::sync::OnceLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coding::EncodedDataset;
use crate::error::{Error, Result};
use crate::lattice::{linf_unchecked, DominanceKeys, Profile};
use crate::special::{binom_log_cdf, binom_log_pmf, left_tail_factor};

const RESYNC_EVERY: u64 = 256;
const SKIP_SLACK: f64 = 1e-9;
const CDF_STEP_ERR: f64 = 1e-15;
const CDF_MAX_ERR: f64 = 1e-10;
const LN_TABLE_LEN: usize = 1 << 17;

fn ln_int(i: u64) -> f64 {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    let t = TABLE.get_or_init(|| (0..LN_TABLE_LEN).map(|i| (i as f64).ln()).collect());
    match t.get(i as usize) {
        Some(&v) => v,
        None => (i as f64).ln(),
    }
}

/// Order in which dominated responses enter the martingale.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrderingRule {
    /// Original row order.
    #[default]
    RowIndex,
    /// Closest rows first by ℓ∞ distance to the tested profile; row order breaks ties.
    LinfDistance,
}

impl std::str::FromStr for OrderingRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "row_index" => Ok(OrderingRule::RowIndex),
            "linf_distance" => Ok(OrderingRule::LinfDistance),
            other => Err(Error::Config(format!("unknown ordering {other:?}"))),
        }
    }
}

impl OrderingRule {
    pub fn as_str(&self) -> &'static str {
        match self {
            OrderingRule::RowIndex => "row_index",
            OrderingRule::LinfDistance => "linf_distance",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DominatedSample {
    pub responses: Vec<bool>,
    pub source_indices: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PValue {
    pub value: f64,
    /// `ln` of the unclipped minimum ratio.
    pub log_value: f64,
    /// Prefix length attaining the minimum (0 when nothing is dominated).
    pub argmin_k: u64,
    pub n: u64,
    pub successes: u64,
}

fn check_tau(tau: f64) -> Result<()> {
    if tau > 0.0 && tau < 1.0 {
        Ok(())
    } else {
        Err(Error::input(format!("tau = {tau} must lie in (0, 1)")))
    }
}

/// `ln r_k` for a prefix of length `k` with `s` successes.
pub fn log_martingale_ratio(k: u64, s: u64, tau: f64) -> Result<f64> {
    check_tau(tau)?;
    if s > k {
        return Err(Error::input(format!("successes {s} exceed prefix length {k}")));
    }
    Ok(exact_log_ratio(k, s, tau))
}

// (k+1)(1-τ)·P(Bin(k) = s) = (k+1-s)·P(Bin(k+1) = s), so below the mean the
// ratio is a pure tail factor with no large logarithms to cancel.
fn exact_log_ratio(k: u64, s: u64, tau: f64) -> f64 {
    if (s as f64) <= (k + 1) as f64 * tau {
        ((k + 1 - s) as f64).ln() - left_tail_factor(s, k + 1, tau)
    } else {
        ((k + 1) as f64).ln() + (-tau).ln_1p() + binom_log_pmf(s, k, tau) - binom_log_cdf(s, k + 1, tau)
    }
}

/// Streaming minimum of the inverse martingale over prefixes.
#[derive(Debug, Clone)]
pub struct MartingaleScan {
    tau: f64,
    ln_tau: f64,
    ln_1m_tau: f64,
    k: u64,
    s: u64,
    log_pmf: f64,
    /// `ln P(Bin(k+1, τ) ≤ s)`, tracked by recurrence.
    log_cdf: f64,
    /// Bound on the relative error of `exp(log_cdf)`.
    cdf_err: f64,
    best: f64,
    argmin: u64,
}

impl MartingaleScan {
    pub fn new(tau: f64) -> Result<Self> {
        check_tau(tau)?;
        Ok(MartingaleScan {
            tau,
            ln_tau: tau.ln(),
            ln_1m_tau: (-tau).ln_1p(),
            k: 0,
            s: 0,
            log_pmf: 0.0,
            log_cdf: (-tau).ln_1p(),
            cdf_err: 0.0,
            best: f64::INFINITY,
            argmin: 0,
        })
    }

    pub fn push(&mut self, y: bool) {
        let k1 = self.k + 1;
        if y {
            self.log_pmf += ln_int(k1) - ln_int(self.s + 1) + self.ln_tau;
            self.s += 1;
        } else {
            self.log_pmf += ln_int(k1) - ln_int(k1 - self.s) + self.ln_1m_tau;
        }
        self.k = k1;
        // P(Bin(k+2) ≤ s') from P(Bin(k+1) ≤ s) and the new pmf
        let e = (self.log_pmf - self.log_cdf).exp();
        if y {
            self.log_cdf += ((1.0 - self.tau) * e).ln_1p();
            self.cdf_err += CDF_STEP_ERR;
        } else {
            let f = 1.0 - self.tau * e;
            self.log_cdf += (-self.tau * e).ln_1p();
            self.cdf_err = self.cdf_err / f.max(f64::MIN_POSITIVE) + CDF_STEP_ERR;
        }
        if self.k.is_multiple_of(RESYNC_EVERY) {
            self.log_pmf = binom_log_pmf(self.s, self.k, self.tau);
            self.resync_cdf();
        } else if self.cdf_err.is_nan() || self.cdf_err > CDF_MAX_ERR {
            self.resync_cdf();
        }
        let approx = ln_int(k1 + 1) + self.ln_1m_tau + self.log_pmf - self.log_cdf;
        if approx >= self.best + SKIP_SLACK {
            return;
        }
        let r = exact_log_ratio(self.k, self.s, self.tau);
        if r < self.best {
            self.best = r;
            self.argmin = self.k;
        }
    }

    fn resync_cdf(&mut self) {
        self.log_cdf = binom_log_cdf(self.s, self.k + 1, self.tau);
        self.cdf_err = 0.0;
    }

    pub fn extend(&mut self, ys: impl IntoIterator<Item = bool>) {
        for y in ys {
            self.push(y);
        }
    }

    pub fn len(&self) -> u64 {
        self.k
    }

    pub fn is_empty(&self) -> bool {
        self.k == 0
    }

    pub fn finish(&self) -> PValue {
        if self.k == 0 {
            return PValue {
                value: 1.0,
                log_value: 0.0,
                argmin_k: 0,
                n: 0,
                successes: 0,
            };
        }
        PValue {
            value: self.best.exp().clamp(f64::MIN_POSITIVE, 1.0),
            log_value: self.best,
            argmin_k: self.argmin,
            n: self.k,
            successes: self.s,
        }
    }
}

/// P-value for an already ordered response sequence.
pub fn pvalue_from_responses(responses: &[bool], tau: f64) -> Result<PValue> {
    let mut scan = MartingaleScan::new(tau)?;
    scan.extend(responses.iter().copied());
    Ok(scan.finish())
}

fn order_indices(data: &EncodedDataset, x: &Profile, idx: &mut [usize], rule: OrderingRule) {
    if rule == OrderingRule::LinfDistance {
        let rows = data.profiles();
        let top = data.grid().levels().iter().copied().max().unwrap_or(1) as usize;
        let mut buckets: Vec<Vec<usize>> = vec![Vec::new(); top];
        for &r in idx.iter() {
            buckets[linf_unchecked(&rows[r], x) as usize].push(r);
        }
        for (slot, r) in idx.iter_mut().zip(buckets.into_iter().flatten()) {
            *slot = r;
        }
    }
}

/// Responses of rows `i` with `X_i ⪯ x`, in the requested order.
pub fn dominated_sample(data: &EncodedDataset, x: &Profile, rule: OrderingRule) -> Result<DominatedSample> {
    data.grid().validate(x)?;
    let mut idx: Vec<usize> = data
        .profiles()
        .iter()
        .enumerate()
        .filter(|(_, xi)| xi.dominated_by(x))
        .map(|(i, _)| i)
        .collect();
    order_indices(data, x, &mut idx, rule);
    Ok(DominatedSample {
        responses: idx.iter().map(|&i| data.outcomes()[i]).collect(),
        source_indices: idx,
    })
}

/// `p_τ(x)` computed from `data`.
pub fn iss_pvalue(data: &EncodedDataset, x: &Profile, tau: f64, rule: OrderingRule) -> Result<PValue> {
    check_tau(tau)?;
    let sample = dominated_sample(data, x, rule)?;
    pvalue_from_responses(&sample.responses, tau)
}

/// P-values at many profiles, computed in parallel.
pub fn pvalues_at(data: &EncodedDataset, profiles: &[Profile], tau: f64, rule: OrderingRule) -> Result<Vec<PValue>> {
    check_tau(tau)?;
    for x in profiles {
        data.grid().validate(x)?;
    }
    let keys = DominanceKeys::build(data.grid(), data.profiles());
    let ys = data.outcomes();
    Ok(profiles
        .par_iter()
        .map(|x| {
            let mut scan = MartingaleScan::new(tau).expect("tau checked");
            match rule {
                OrderingRule::RowIndex => keys.for_each_dominated(x, |r| scan.push(ys[r])),
                OrderingRule::LinfDistance => {
                    let mut idx = Vec::new();
                    keys.for_each_dominated(x, |r| idx.push(r));
                    order_indices(data, x, &mut idx, rule);
                    scan.extend(idx.iter().map(|&r| ys[r]));
                }
            }
            scan.finish()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::GridSpec;

    fn brute(responses: &[bool], tau: f64) -> (f64, u64) {
        let mut best = f64::INFINITY;
        let mut arg = 0;
        let mut s = 0;
        for (i, &y) in responses.iter().enumerate() {
            s += y as u64;
            let r = exact_log_ratio(i as u64 + 1, s, tau);
            if r < best {
                best = r;
                arg = i as u64 + 1;
            }
        }
        (best, arg)
    }

    #[test]
    fn single_observation_values() {
        let p = pvalue_from_responses(&[true], 0.5).unwrap();
        assert!((p.value - 2.0 / 3.0).abs() < 1e-15);
        let p = pvalue_from_responses(&[false], 0.5).unwrap();
        assert_eq!(p.value, 1.0);
        assert!((p.log_value - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn empty_sample_gives_one() {
        let p = pvalue_from_responses(&[], 0.3).unwrap();
        assert_eq!((p.value, p.argmin_k, p.n), (1.0, 0, 0));
    }

    #[test]
    fn rejects_bad_tau() {
        assert!(pvalue_from_responses(&[true], 0.0).is_err());
        assert!(pvalue_from_responses(&[true], 1.0).is_err());
        assert!(log_martingale_ratio(2, 3, 0.5).is_err());
    }

    #[test]
    fn streaming_matches_brute_force() {
        let mut state = 0x1234_5678u64;
        for tau in [0.1, 0.172, 0.5, 0.8] {
            let ys: Vec<bool> = (0..1500)
                .map(|_| {
                    state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                    ((state >> 33) as f64 / (1u64 << 31) as f64) < tau + 0.05
                })
                .collect();
            let p = pvalue_from_responses(&ys, tau).unwrap();
            let (best, arg) = brute(&ys, tau);
            assert!((p.log_value - best).abs() < 1e-9 * best.abs().max(1.0), "tau {tau}");
            assert_eq!(p.argmin_k, arg);
        }
    }

    #[test]
    fn all_successes_shrink_fast() {
        let p = pvalue_from_responses(&[true; 40], 0.2).unwrap();
        assert!(p.value < 1e-20);
        assert_eq!(p.argmin_k, 40);
    }

    #[test]
    fn dominated_sample_orders() {
        let g = GridSpec::new(vec![3, 3], vec!["a".into(), "b".into()]).unwrap();
        let rows = vec![
            Profile::new(vec![0, 0]),
            Profile::new(vec![2, 2]),
            Profile::new(vec![1, 1]),
            Profile::new(vec![1, 0]),
        ];
        let data = EncodedDataset::new(g, rows, vec![false, true, true, false]).unwrap();
        let x = Profile::new(vec![1, 1]);
        let s = dominated_sample(&data, &x, OrderingRule::RowIndex).unwrap();
        assert_eq!(s.source_indices, vec![0, 2, 3]);
        let s = dominated_sample(&data, &x, OrderingRule::LinfDistance).unwrap();
        assert_eq!(s.source_indices, vec![2, 0, 3]);
        assert_eq!(s.responses, vec![true, false, false]);
    }

    #[test]
    fn batch_agrees_with_single() {
        let g = GridSpec::new(vec![3, 2, 4], vec!["a".into(), "b".into(), "c".into()]).unwrap();
        let mut state = 7u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
            (state >> 33) as u32
        };
        let rows: Vec<Profile> = (0..300)
            .map(|_| Profile::new(vec![(next() % 3) as u8, (next() % 2) as u8, (next() % 4) as u8]))
            .collect();
        let ys: Vec<bool> = (0..300).map(|_| next() % 3 == 0).collect();
        let data = EncodedDataset::new(g.clone(), rows, ys).unwrap();
        let all: Vec<Profile> = g.iter().collect();
        for rule in [OrderingRule::RowIndex, OrderingRule::LinfDistance] {
            let batch = pvalues_at(&data, &all, 0.25, rule).unwrap();
            for (x, pb) in all.iter().zip(&batch) {
                let ps = iss_pvalue(&data, x, 0.25, rule).unwrap();
                assert_eq!(ps, *pb);
            }
        }
    }
}
