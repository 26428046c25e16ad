//! Confusion-table metrics for screening rules.

use std::io::Write;

use serde::Serialize;

use crate::coding::{ace_score, EncodedDataset};
use crate::error::{Error, Result};
use crate::lattice::UpwardClosedSet;
use crate::turnover::selection_flags;

#[derive(Debug, Clone, PartialEq)]
pub enum ScreeningRule {
    /// High risk iff at least `k` items are at a positive level.
    ScoreCutoff(u8),
    Subgroup { label: String, selection: UpwardClosedSet },
}

impl ScreeningRule {
    pub fn label(&self) -> String {
        match self {
            ScreeningRule::ScoreCutoff(k) => format!("ACE score >= {k}"),
            ScreeningRule::Subgroup { label, .. } => label.clone(),
        }
    }

    pub fn flags(&self, data: &EncodedDataset) -> Result<Vec<bool>> {
        match self {
            ScreeningRule::ScoreCutoff(k) => {
                if *k == 0 || *k as usize > data.grid().dims() {
                    return Err(Error::input(format!(
                        "cutoff {k} outside 1..={}",
                        data.grid().dims()
                    )));
                }
                Ok(data.profiles().iter().map(|x| ace_score(x) >= *k).collect())
            }
            ScreeningRule::Subgroup { selection, .. } => selection_flags(selection, data),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScreeningReport {
    pub label: String,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
    pub ppr: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    pub ppv: f64,
    pub npv: f64,
    /// Metrics whose denominator was zero; their value is NaN.
    pub undefined: Vec<String>,
}

impl ScreeningReport {
    pub fn n(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn from_counts(label: impl Into<String>, tp: u64, fp: u64, fn_: u64, tn: u64) -> Self {
        let mut undefined = Vec::new();
        let mut ratio = |name: &str, num: u64, den: u64| {
            if den == 0 {
                undefined.push(name.to_string());
                f64::NAN
            } else {
                num as f64 / den as f64
            }
        };
        let n = tp + fp + fn_ + tn;
        let ppr = ratio("ppr", tp + fp, n);
        let sensitivity = ratio("sensitivity", tp, tp + fn_);
        let specificity = ratio("specificity", tn, tn + fp);
        let ppv = ratio("ppv", tp, tp + fp);
        let npv = ratio("npv", tn, tn + fn_);
        ScreeningReport {
            label: label.into(),
            tp,
            fp,
            fn_,
            tn,
            ppr,
            sensitivity,
            specificity,
            ppv,
            npv,
            undefined,
        }
    }
}

/// Report for predicted flags against reference labels.
pub fn evaluate_predictions(label: impl Into<String>, predicted: &[bool], truth: &[bool]) -> Result<ScreeningReport> {
    if predicted.len() != truth.len() {
        return Err(Error::input("prediction and label vectors differ in length"));
    }
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    for (&r, &y) in predicted.iter().zip(truth) {
        match (r, y) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    Ok(ScreeningReport::from_counts(label, tp, fp, fn_, tn))
}

pub fn evaluate_rule(rule: &ScreeningRule, data: &EncodedDataset) -> Result<ScreeningReport> {
    evaluate_predictions(rule.label(), &rule.flags(data)?, data.outcomes())
}

/// One report per cutoff, then one for the subgroup rule if given.
pub fn cutoff_sweep(
    data: &EncodedDataset,
    ks: &[u8],
    subgroup: Option<&ScreeningRule>,
) -> Result<Vec<ScreeningReport>> {
    let mut out = Vec::with_capacity(ks.len() + 1);
    for &k in ks {
        out.push(evaluate_rule(&ScreeningRule::ScoreCutoff(k), data)?);
    }
    if let Some(rule) = subgroup {
        out.push(evaluate_rule(rule, data)?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatchedComparison {
    pub subgroup: String,
    pub cutoff: String,
    pub subgroup_specificity: f64,
    pub cutoff_specificity: f64,
    pub subgroup_sensitivity: f64,
    pub cutoff_sensitivity: f64,
    pub sensitivity_delta: f64,
    /// `delta / cutoff sensitivity`; NaN when that sensitivity is zero.
    pub relative_gain: f64,
}

/// Aligns the subgroup rule with the cutoff whose specificity is closest to
/// it, preferring cutoffs at least as specific.
pub fn matched_specificity_compare(subgroup: &ScreeningReport, cutoffs: &[ScreeningReport]) -> Result<MatchedComparison> {
    let usable: Vec<&ScreeningReport> = cutoffs.iter().filter(|r| !r.specificity.is_nan()).collect();
    if usable.is_empty() {
        return Err(Error::input("need at least one cutoff report with a defined specificity"));
    }
    let target = subgroup.specificity;
    let closest = |pool: &[&ScreeningReport]| -> Option<ScreeningReport> {
        pool.iter()
            .min_by(|a, b| (a.specificity - target).abs().total_cmp(&(b.specificity - target).abs()))
            .map(|r| (*r).clone())
    };
    let above: Vec<&ScreeningReport> = usable.iter().copied().filter(|r| r.specificity >= target).collect();
    let best = closest(&above).or_else(|| closest(&usable)).expect("nonempty");
    let delta = subgroup.sensitivity - best.sensitivity;
    Ok(MatchedComparison {
        subgroup: subgroup.label.clone(),
        cutoff: best.label.clone(),
        subgroup_specificity: subgroup.specificity,
        cutoff_specificity: best.specificity,
        subgroup_sensitivity: subgroup.sensitivity,
        cutoff_sensitivity: best.sensitivity,
        sensitivity_delta: delta,
        relative_gain: if best.sensitivity > 0.0 { delta / best.sensitivity } else { f64::NAN },
    })
}

pub const REPORT_HEADER: [&str; 10] = [
    "rule", "PPR", "Sensitivity", "Specificity", "PPV", "NPV", "TP", "FP", "FN", "TN",
];

fn fmt_metric(v: f64) -> String {
    if v.is_nan() {
        "NA".to_string()
    } else {
        format!("{v:.6}")
    }
}

/// Writes reports as CSV in the column order of [`REPORT_HEADER`].
pub fn write_reports_csv<W: Write>(reports: &[ScreeningReport], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(REPORT_HEADER)?;
    for r in reports {
        w.write_record([
            r.label.clone(),
            fmt_metric(r.ppr),
            fmt_metric(r.sensitivity),
            fmt_metric(r.specificity),
            fmt_metric(r.ppv),
            fmt_metric(r.npv),
            r.tp.to_string(),
            r.fp.to_string(),
            r.fn_.to_string(),
            r.tn.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{GridSpec, Profile};

    fn toy() -> EncodedDataset {
        // scores 0,1,2,3,2,1,3,0 ; outcomes 0,0,1,1,0,1,1,0
        let g = GridSpec::binary(["a", "b", "c"]).unwrap();
        let rows: [[u8; 3]; 8] = [
            [0, 0, 0],
            [1, 0, 0],
            [1, 1, 0],
            [1, 1, 1],
            [0, 1, 1],
            [0, 0, 1],
            [1, 1, 1],
            [0, 0, 0],
        ];
        let ys = vec![false, false, true, true, false, true, true, false];
        EncodedDataset::new(g, rows.iter().map(|r| Profile::new(r.to_vec())).collect(), ys).unwrap()
    }

    #[test]
    fn cutoff_two_hand_tally() {
        let r = evaluate_rule(&ScreeningRule::ScoreCutoff(2), &toy()).unwrap();
        // flagged rows 2,3,4,6 -> TP 3 (2,3,6), FP 1 (4); unflagged 0,1,5,7 -> FN 1 (5), TN 3
        assert_eq!((r.tp, r.fp, r.fn_, r.tn), (3, 1, 1, 3));
        assert_eq!(r.ppr, 0.5);
        assert_eq!(r.sensitivity, 0.75);
        assert_eq!(r.specificity, 0.75);
        assert!(r.undefined.is_empty());
    }

    #[test]
    fn flag_all_and_none() {
        let d = toy();
        let g = d.grid().clone();
        let all = ScreeningRule::Subgroup {
            label: "all".into(),
            selection: UpwardClosedSet::full(g.clone()),
        };
        let r = evaluate_rule(&all, &d).unwrap();
        assert_eq!((r.sensitivity, r.specificity), (1.0, 0.0));
        assert_eq!(r.ppv, d.prevalence());
        let none = ScreeningRule::Subgroup {
            label: "none".into(),
            selection: UpwardClosedSet::empty(g),
        };
        let r = evaluate_rule(&none, &d).unwrap();
        assert_eq!((r.sensitivity, r.specificity), (0.0, 1.0));
        assert!(r.ppv.is_nan());
        assert_eq!(r.undefined, vec!["ppv".to_string()]);
        assert_eq!(r.npv, 1.0 - d.prevalence());
    }

    #[test]
    fn sweep_is_nested() {
        let d = toy();
        let reps = cutoff_sweep(&d, &[1, 2, 3], None).unwrap();
        for w in reps.windows(2) {
            assert!(w[0].sensitivity >= w[1].sensitivity);
            assert!(w[0].specificity <= w[1].specificity);
            assert!(w[0].ppr >= w[1].ppr);
        }
        assert!(cutoff_sweep(&d, &[4], None).is_err());
    }

    #[test]
    fn matched_comparison_arithmetic() {
        let sub = ScreeningReport {
            sensitivity: 0.24,
            specificity: 0.95,
            ..ScreeningReport::from_counts("subgroup", 1, 1, 1, 1)
        };
        let mk = |label: &str, sens: f64, spec: f64| ScreeningReport {
            sensitivity: sens,
            specificity: spec,
            ..ScreeningReport::from_counts(label, 1, 1, 1, 1)
        };
        let cuts = vec![mk(">=6", 0.3, 0.90), mk(">=7", 0.19, 0.95), mk(">=8", 0.1, 0.98)];
        let c = matched_specificity_compare(&sub, &cuts).unwrap();
        assert_eq!(c.cutoff, ">=7");
        assert!((c.relative_gain - 0.05 / 0.19).abs() < 1e-12);
        assert!((c.relative_gain - 0.26).abs() < 0.005);
        let same = matched_specificity_compare(&cuts[1], &cuts).unwrap();
        assert_eq!(same.sensitivity_delta, 0.0);
        assert!(matched_specificity_compare(&sub, &[]).is_err());
    }

    #[test]
    fn csv_layout() {
        let reps = cutoff_sweep(&toy(), &[1], None).unwrap();
        let mut buf = Vec::new();
        write_reports_csv(&reps, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("rule,PPR,Sensitivity,Specificity,PPV,NPV,TP,FP,FN,TN\n"));
    }
}
