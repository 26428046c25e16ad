//! Two-part data turnover: screen on one part, validate on the other, then
//! combine the two directions into replicable and global selections.

use serde::{Deserialize, Serialize};

use crate::coding::{coarsen, Coding, EncodedDataset};
use crate::dagtest::{
    build_polyforest, build_polyforest_nearest, dag_test, dag_test_tiered, HypothesisSet, ParentRule, Polyforest,
    RejectionResult, TierConfig,
};
use crate::error::{Error, Result};
use crate::lattice::{GridSpec, Profile, UpwardClosedSet};
use crate::pvalue::{pvalues_at, OrderingRule};

pub const DEFAULT_TAU: f64 = 0.172;
pub const DEFAULT_ALPHA: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnoverConfig {
    pub tau: f64,
    pub alpha: f64,
    pub kappa: f64,
    /// Level for claims validated in the red part.
    pub alpha_red: f64,
    /// Level for claims validated in the blue part.
    pub alpha_blue: f64,
    pub parent_rule: ParentRule,
    pub coding_red_to_blue: Coding,
    pub coding_blue_to_red: Coding,
    pub ordering: OrderingRule,
    pub tiering: Option<TierConfig>,
    pub seed: u64,
}

impl Default for TurnoverConfig {
    fn default() -> Self {
        TurnoverConfig::with_alpha(DEFAULT_ALPHA)
    }
}

impl TurnoverConfig {
    /// Defaults with `κ = α_R = α_B = α/2`.
    pub fn with_alpha(alpha: f64) -> Self {
        TurnoverConfig {
            tau: DEFAULT_TAU,
            alpha,
            kappa: alpha / 2.0,
            alpha_red: alpha / 2.0,
            alpha_blue: alpha / 2.0,
            parent_rule: ParentRule::Evidence,
            coding_red_to_blue: Coding::Binary,
            coding_blue_to_red: Coding::Frequency,
            ordering: OrderingRule::RowIndex,
            tiering: None,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let open = |v: f64| v > 0.0 && v < 1.0;
        if !open(self.tau) {
            return Err(Error::Config(format!("tau = {} must lie in (0, 1)", self.tau)));
        }
        if !open(self.alpha) {
            return Err(Error::Config(format!("alpha = {} must lie in (0, 1)", self.alpha)));
        }
        if !open(self.kappa) && self.kappa != 1.0 {
            return Err(Error::Config(format!("kappa = {} must lie in (0, 1]", self.kappa)));
        }
        if !open(self.alpha_red) || !open(self.alpha_blue) {
            return Err(Error::Config("per-part alpha levels must lie in (0, 1)".into()));
        }
        if self.alpha_red + self.alpha_blue > self.alpha + 1e-12 {
            return Err(Error::Config(format!(
                "alpha_red + alpha_blue = {} exceeds alpha = {}",
                self.alpha_red + self.alpha_blue,
                self.alpha
            )));
        }
        Ok(())
    }
}

/// Candidates retained by screening, with their screening p-values.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScreenedSet {
    pub profiles: Vec<Profile>,
    pub p_screen: Vec<f64>,
    /// Distinct observed profiles that were tested.
    pub tested: usize,
}

/// Keeps distinct observed profiles of `part` with `p ≤ κ`.
pub fn screen(part: &EncodedDataset, tau: f64, kappa: f64, ordering: OrderingRule) -> Result<ScreenedSet> {
    let distinct = part.distinct_profiles();
    let ps = pvalues_at(part, &distinct, tau, ordering)?;
    let tested = distinct.len();
    let (profiles, p_screen) = distinct
        .into_iter()
        .zip(ps)
        .filter(|(_, p)| p.value <= kappa)
        .map(|(x, p)| (x, p.value))
        .unzip();
    Ok(ScreenedSet {
        profiles,
        p_screen,
        tested,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct DirectionResult {
    pub label: String,
    pub coding: Coding,
    pub alpha: f64,
    pub screened: ScreenedSet,
    pub p_valid: Vec<f64>,
    pub forest: Polyforest,
    pub rejection: RejectionResult,
    pub selection: UpwardClosedSet,
}

impl DirectionResult {
    pub fn rejected_count(&self) -> usize {
        self.rejection.rejected.len()
    }
}

fn run_dag(hyps: &HypothesisSet, forest: &Polyforest, alpha: f64, tiers: Option<&TierConfig>) -> Result<RejectionResult> {
    match tiers {
        Some(t) => dag_test_tiered(hyps, forest, alpha, t),
        None => dag_test(hyps, forest, alpha),
    }
}

/// Tests screened candidates on the validation part at level `alpha`.
pub fn validate(
    candidates: &ScreenedSet,
    validation_part: &EncodedDataset,
    alpha: f64,
    config: &TurnoverConfig,
) -> Result<DirectionResult> {
    let grid = validation_part.grid().clone();
    let p_valid: Vec<f64> = pvalues_at(validation_part, &candidates.profiles, config.tau, config.ordering)?
        .into_iter()
        .map(|p| p.value)
        .collect();
    let hyps = HypothesisSet::new(
        grid.clone(),
        candidates.profiles.clone(),
        p_valid.clone(),
        Some(candidates.p_screen.clone()),
    )?;
    let forest = build_polyforest(&hyps, config.parent_rule, config.seed)?;
    let rejection = run_dag(&hyps, &forest, alpha, config.tiering.as_ref())?;
    let selection = UpwardClosedSet::new(grid, rejection.rejected_profiles(&hyps).into_iter().cloned().collect())?;
    Ok(DirectionResult {
        label: String::new(),
        coding: Coding::Frequency,
        alpha,
        screened: candidates.clone(),
        p_valid,
        forest,
        rejection,
        selection,
    })
}

/// Screens on `screen_part` and validates on `valid_part`, both given at
/// native (frequency) resolution and recoded per `coding`.
pub fn run_direction(
    screen_part: &EncodedDataset,
    valid_part: &EncodedDataset,
    coding: Coding,
    alpha: f64,
    config: &TurnoverConfig,
    label: &str,
) -> Result<DirectionResult> {
    let s = screen_part.recode(coding);
    let v = valid_part.recode(coding);
    let screened = screen(&s, config.tau, config.kappa, config.ordering)?;
    let mut out = validate(&screened, &v, alpha, config)?;
    out.label = label.to_string();
    out.coding = coding;
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct TurnoverResult {
    pub red_to_blue: DirectionResult,
    pub blue_to_red: DirectionResult,
    pub replicable: UpwardClosedSet,
    pub global: UpwardClosedSet,
}

/// Both directions plus their replicable and global combinations on the
/// frequency grid of `red`.
pub fn run_turnover(red: &EncodedDataset, blue: &EncodedDataset, config: &TurnoverConfig) -> Result<TurnoverResult> {
    config.validate()?;
    if red.grid() != blue.grid() {
        return Err(Error::input("red and blue parts use different grids"));
    }
    let (rb, br) = rayon::join(
        || run_direction(red, blue, config.coding_red_to_blue, config.alpha_blue, config, "red_to_blue"),
        || run_direction(blue, red, config.coding_blue_to_red, config.alpha_red, config, "blue_to_red"),
    );
    let (rb, br) = (rb?, br?);
    let freq = red.grid();
    let a = to_frequency_grid(&br.selection, freq)?;
    let b = to_frequency_grid(&rb.selection, freq)?;
    Ok(TurnoverResult {
        replicable: a.intersection(&b)?,
        global: a.union(&b)?,
        red_to_blue: rb,
        blue_to_red: br,
    })
}

/// Expresses a selection made under any coding as an upward-closed set on
/// `freq_grid`: binary selections are lifted, exposure-count thresholds
/// become all profiles with that many positive items.
pub fn to_frequency_grid(sel: &UpwardClosedSet, freq_grid: &GridSpec) -> Result<UpwardClosedSet> {
    let g = sel.grid();
    if g == freq_grid {
        return Ok(sel.clone());
    }
    if g.same_items(freq_grid) {
        if g.levels().iter().all(|&l| l == 2) {
            return sel.embed_into(freq_grid);
        }
        return Err(Error::input("selection grid has the same items but different levels"));
    }
    if g.dims() == 1 && g.item_names()[0] == crate::coding::SCORE_ITEM && g.levels()[0] as usize == freq_grid.dims() + 1 {
        let Some(c) = sel.corners().first() else {
            return Ok(UpwardClosedSet::empty(freq_grid.clone()));
        };
        let z = c.levels()[0] as usize;
        let d = freq_grid.dims();
        let corners = (0u32..(1u32 << d))
            .filter(|m| m.count_ones() as usize == z)
            .map(|m| Profile::new((0..d).map(|j| ((m >> j) & 1) as u8).collect()))
            .collect();
        return UpwardClosedSet::new(freq_grid.clone(), corners);
    }
    Err(Error::input("selection and frequency grids have different items"))
}

fn check_binary_pair(freq_sel: &UpwardClosedSet, bin_sel: &UpwardClosedSet) -> Result<()> {
    if !freq_sel.grid().same_items(bin_sel.grid()) {
        return Err(Error::input("frequency and binary selections have different items"));
    }
    Ok(())
}

/// `up(A_freq ∩ L(A_bin))`.
pub fn replicable_set(freq_sel: &UpwardClosedSet, bin_sel: &UpwardClosedSet) -> Result<UpwardClosedSet> {
    check_binary_pair(freq_sel, bin_sel)?;
    let lifted = to_frequency_grid(bin_sel, freq_sel.grid())?;
    freq_sel.intersection(&lifted)
}

/// `up(A_freq ∪ L(A_bin))`.
pub fn global_set(freq_sel: &UpwardClosedSet, bin_sel: &UpwardClosedSet) -> Result<UpwardClosedSet> {
    check_binary_pair(freq_sel, bin_sel)?;
    let lifted = to_frequency_grid(bin_sel, freq_sel.grid())?;
    freq_sel.union(&lifted)
}

/// Per-row membership of `data` in `selection`. A binary selection applied
/// to frequency data is read through coarsening; an exposure-count selection
/// through the count.
pub fn selection_flags(selection: &UpwardClosedSet, data: &EncodedDataset) -> Result<Vec<bool>> {
    let sg = selection.grid();
    let dg = data.grid();
    if sg == dg {
        return Ok(data.profiles().iter().map(|x| selection.contains(x)).collect());
    }
    if sg.same_items(dg) && sg.levels().iter().all(|&l| l == 2) {
        return Ok(data.profiles().iter().map(|x| selection.contains(&coarsen(x))).collect());
    }
    let lifted = to_frequency_grid(selection, dg)?;
    Ok(data.profiles().iter().map(|x| lifted.contains(x)).collect())
}

/// Rows of `data` whose profile falls in `selection`, and their fraction.
pub fn flag_fraction(selection: &UpwardClosedSet, data: &EncodedDataset) -> Result<(usize, f64)> {
    let count = selection_flags(selection, data)?.into_iter().filter(|&f| f).count();
    let frac = if data.is_empty() { 0.0 } else { count as f64 / data.len() as f64 };
    Ok((count, frac))
}

#[derive(Debug, Clone, Serialize)]
pub struct IssResult {
    pub hypotheses: Vec<Profile>,
    pub p_values: Vec<f64>,
    pub forest: Polyforest,
    pub rejection: RejectionResult,
    pub selection: UpwardClosedSet,
}

/// Single-sample ISS over all distinct observed profiles with nearest-cover
/// parenting, optionally with tiered allocation.
pub fn full_iss(
    data: &EncodedDataset,
    tau: f64,
    alpha: f64,
    seed: u64,
    ordering: OrderingRule,
    tiers: Option<&TierConfig>,
) -> Result<IssResult> {
    let grid = data.grid().clone();
    let hypotheses = data.distinct_profiles();
    let p_values: Vec<f64> = pvalues_at(data, &hypotheses, tau, ordering)?
        .into_iter()
        .map(|p| p.value)
        .collect();
    let hyps = HypothesisSet::new(grid.clone(), hypotheses.clone(), p_values.clone(), None)?;
    let forest = build_polyforest_nearest(&hyps, seed);
    let rejection = run_dag(&hyps, &forest, alpha, tiers)?;
    let selection = UpwardClosedSet::new(grid, rejection.rejected_profiles(&hyps).into_iter().cloned().collect())?;
    Ok(IssResult {
        hypotheses,
        p_values,
        forest,
        rejection,
        selection,
    })
}
