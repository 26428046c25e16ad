//! Hypothesis forests and the iterative DAG rejection procedure.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coding::{coarsen, EncodedDataset};
use crate::error::{Error, Result};
use crate::lattice::{linf_unchecked, minimal_corners, DominanceKeys, GridSpec, Profile};
use crate::special::normal_sf;

#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisSet {
    grid: GridSpec,
    profiles: Vec<Profile>,
    p_valid: Vec<f64>,
    p_screen: Option<Vec<f64>>,
}

fn check_p(p: &[f64], what: &str) -> Result<()> {
    match p.iter().position(|&v| !(v > 0.0 && v <= 1.0)) {
        Some(i) => Err(Error::input(format!("{what}[{i}] = {} is not in (0, 1]", p[i]))),
        None => Ok(()),
    }
}

impl HypothesisSet {
    pub fn new(grid: GridSpec, profiles: Vec<Profile>, p_valid: Vec<f64>, p_screen: Option<Vec<f64>>) -> Result<Self> {
        if p_valid.len() != profiles.len() {
            return Err(Error::input("p_valid length differs from the number of profiles"));
        }
        check_p(&p_valid, "p_valid")?;
        if let Some(ps) = &p_screen {
            if ps.len() != profiles.len() {
                return Err(Error::input("p_screen length differs from the number of profiles"));
            }
            check_p(ps, "p_screen")?;
        }
        let mut seen = std::collections::HashSet::with_capacity(profiles.len());
        for x in &profiles {
            grid.validate(x)?;
            if !seen.insert(grid.index_of(x)) {
                return Err(Error::input(format!("duplicate hypothesis profile {x}")));
            }
        }
        Ok(HypothesisSet {
            grid,
            profiles,
            p_valid,
            p_screen,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn profiles(&self) -> &[Profile] {
        &self.profiles
    }

    pub fn p_valid(&self) -> &[f64] {
        &self.p_valid
    }

    pub fn p_screen(&self) -> Option<&[f64]> {
        self.p_screen.as_deref()
    }

    pub fn len(&self) -> usize {
        self.profiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.profiles.is_empty()
    }

    /// Same hypotheses with different validation p-values.
    pub fn with_p_valid(&self, p_valid: Vec<f64>) -> Result<Self> {
        HypothesisSet::new(self.grid.clone(), self.profiles.clone(), p_valid, self.p_screen.clone())
    }
}

/// At most one parent per hypothesis; each parent strictly dominates its child.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Polyforest {
    pub parent: Vec<Option<usize>>,
}

impl Polyforest {
    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    pub fn roots(&self) -> Vec<usize> {
        (0..self.parent.len()).filter(|&i| self.parent[i].is_none()).collect()
    }

    pub fn children(&self) -> Vec<Vec<usize>> {
        let mut ch = vec![Vec::new(); self.parent.len()];
        for (i, p) in self.parent.iter().enumerate() {
            if let Some(p) = p {
                ch[*p].push(i);
            }
        }
        ch
    }

    /// Checks parent dominance and acyclicity against `hyps`.
    pub fn check(&self, hyps: &HypothesisSet) -> Result<()> {
        if self.parent.len() != hyps.len() {
            return Err(Error::input("forest size differs from the hypothesis set"));
        }
        for (i, p) in self.parent.iter().enumerate() {
            if let Some(p) = *p {
                if p >= hyps.len() || !hyps.profiles[i].strictly_dominated_by(&hyps.profiles[p]) {
                    return Err(Error::input(format!("parent of node {i} does not strictly dominate it")));
                }
            }
        }
        // strict dominance along edges rules out cycles
        Ok(())
    }
}

/// Immediate strict dominators of every hypothesis, each list in grid index order.
pub fn cover_sets(hyps: &HypothesisSet) -> Vec<Vec<usize>> {
    let grid = &hyps.grid;
    let keys = DominanceKeys::build(grid, &hyps.profiles);
    let lin: Vec<u64> = hyps.profiles.iter().map(|x| grid.index_of(x)).collect();
    let pos: BTreeMap<u64, usize> = lin.iter().enumerate().map(|(i, &l)| (l, i)).collect();
    (0..hyps.len())
        .into_par_iter()
        .map(|i| {
            let xi = &hyps.profiles[i];
            let mut above = Vec::new();
            keys.for_each_dominating(xi, |j| {
                if j != i {
                    above.push(&hyps.profiles[j]);
                }
            });
            let mut cov: Vec<usize> = minimal_corners(above).iter().map(|c| pos[&grid.index_of(c)]).collect();
            cov.sort_by_key(|&c| lin[c]);
            cov
        })
        .collect()
}

fn pick(node_key: u64, seed: u64, tied: &[usize]) -> usize {
    if tied.len() == 1 {
        return tied[0];
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(node_key);
    tied[rng.random_range(0..tied.len())]
}

fn build_by_score(hyps: &HypothesisSet, seed: u64, score: impl Fn(usize, usize) -> f64 + Sync) -> Polyforest {
    let covers = cover_sets(hyps);
    let parent = covers
        .par_iter()
        .enumerate()
        .map(|(i, cov)| {
            if cov.is_empty() {
                return None;
            }
            let best = cov.iter().map(|&j| score(i, j)).fold(f64::INFINITY, f64::min);
            let tied: Vec<usize> = cov.iter().copied().filter(|&j| score(i, j) == best).collect();
            Some(pick(hyps.grid.index_of(&hyps.profiles[i]), seed, &tied))
        })
        .collect();
    Polyforest { parent }
}

/// Parent = cover closest in ℓ∞ distance; seeded random tie-breaks.
pub fn build_polyforest_nearest(hyps: &HypothesisSet, seed: u64) -> Polyforest {
    build_by_score(hyps, seed, |i, j| linf_unchecked(&hyps.profiles[i], &hyps.profiles[j]) as f64)
}

/// Parent = cover with the smallest screening p-value; seeded random tie-breaks.
pub fn build_polyforest_evidence(hyps: &HypothesisSet, seed: u64) -> Result<Polyforest> {
    let ps = hyps
        .p_screen
        .as_ref()
        .ok_or_else(|| Error::input("evidence-guided parenting needs screening p-values"))?;
    Ok(build_by_score(hyps, seed, |_, j| ps[j]))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParentRule {
    Nearest,
    #[default]
    Evidence,
}

impl std::str::FromStr for ParentRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "nearest" => Ok(ParentRule::Nearest),
            "evidence" => Ok(ParentRule::Evidence),
            other => Err(Error::Config(format!("unknown parent rule {other:?}"))),
        }
    }
}

pub fn build_polyforest(hyps: &HypothesisSet, rule: ParentRule, seed: u64) -> Result<Polyforest> {
    match rule {
        ParentRule::Nearest => Ok(build_polyforest_nearest(hyps, seed)),
        ParentRule::Evidence => build_polyforest_evidence(hyps, seed),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RootTest {
    pub node: usize,
    pub profile: Profile,
    pub budget: f64,
    pub p_value: f64,
    pub rejected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Round {
    pub index: usize,
    pub roots: Vec<RootTest>,
    /// Every node rejected this round, including propagated ones.
    pub rejected: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RejectionResult {
    pub rejected: Vec<usize>,
    pub rounds: Vec<Round>,
}

impl RejectionResult {
    pub fn rejected_profiles<'a>(&self, hyps: &'a HypothesisSet) -> Vec<&'a Profile> {
        self.rejected.iter().map(|&i| &hyps.profiles[i]).collect()
    }

    /// `i` rejected and `x_j ⪰ x_i` imply `j` rejected.
    pub fn is_upward_closed(&self, hyps: &HypothesisSet) -> bool {
        let mut flag = vec![false; hyps.len()];
        for &i in &self.rejected {
            flag[i] = true;
        }
        self.rejected.iter().all(|&i| {
            (0..hyps.len()).all(|j| flag[j] || !hyps.profiles[i].dominated_by(&hyps.profiles[j]))
        })
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::input(format!("alpha = {alpha} must lie in (0, 1)")))
    }
}

/// Surviving forest state across rounds.
struct ActiveForest<'a> {
    forest: &'a Polyforest,
    children: Vec<Vec<usize>>,
    active: Vec<bool>,
}

impl<'a> ActiveForest<'a> {
    fn new(forest: &'a Polyforest) -> Self {
        ActiveForest {
            forest,
            children: forest.children(),
            active: vec![true; forest.len()],
        }
    }

    fn is_root(&self, i: usize) -> bool {
        self.active[i] && self.forest.parent[i].is_none_or(|p| !self.active[p])
    }

    fn roots(&self) -> Vec<usize> {
        (0..self.forest.len()).filter(|&i| self.is_root(i)).collect()
    }

    fn leaf_count(&self, root: usize) -> usize {
        let mut count = 0;
        let mut stack = vec![root];
        while let Some(v) = stack.pop() {
            let mut has_child = false;
            for &c in &self.children[v] {
                if self.active[c] {
                    has_child = true;
                    stack.push(c);
                }
            }
            if !has_child {
                count += 1;
            }
        }
        count
    }

    /// Leaf-proportional budgets for the current roots.
    fn budgets(&self, alpha: f64) -> Vec<(usize, f64)> {
        let roots = self.roots();
        let leaves: Vec<usize> = roots.iter().map(|&r| self.leaf_count(r)).collect();
        let total: usize = leaves.iter().sum();
        roots
            .into_iter()
            .zip(leaves)
            .map(|(r, l)| (r, alpha * l as f64 / total as f64))
            .collect()
    }

    /// Rejects `seeds` and every active hypothesis dominating one of them.
    fn reject_upward(&mut self, hyps: &HypothesisSet, keys: &DominanceKeys, seeds: &[usize]) -> Vec<usize> {
        let mut out = Vec::new();
        let mut hit = vec![false; hyps.len()];
        for &s in seeds {
            hit[s] = true;
        }
        for &s in seeds {
            keys.for_each_dominating(&hyps.profiles[s], |j| hit[j] = true);
        }
        for (j, h) in hit.into_iter().enumerate() {
            if h && self.active[j] {
                self.active[j] = false;
                out.push(j);
            }
        }
        out
    }
}

/// Runs rounds until nothing new is rejected. `decide` receives the current
/// budgets and returns the roots rejected this round.
fn run_rounds(
    hyps: &HypothesisSet,
    forest: &Polyforest,
    alpha: f64,
    mut decide: impl FnMut(&[(usize, f64)]) -> Vec<usize>,
) -> Result<RejectionResult> {
    check_alpha(alpha)?;
    forest.check(hyps)?;
    let keys = DominanceKeys::build(&hyps.grid, &hyps.profiles);
    let mut state = ActiveForest::new(forest);
    let mut rounds = Vec::new();
    let mut rejected = Vec::new();
    loop {
        let budgets = state.budgets(alpha);
        if budgets.is_empty() {
            break;
        }
        let hits = decide(&budgets);
        let roots = budgets
            .iter()
            .map(|&(r, b)| RootTest {
                node: r,
                profile: hyps.profiles[r].clone(),
                budget: b,
                p_value: hyps.p_valid[r],
                rejected: hits.contains(&r),
            })
            .collect();
        if hits.is_empty() {
            rounds.push(Round {
                index: rounds.len(),
                roots,
                rejected: Vec::new(),
            });
            break;
        }
        let newly = state.reject_upward(hyps, &keys, &hits);
        rejected.extend_from_slice(&newly);
        rounds.push(Round {
            index: rounds.len(),
            roots,
            rejected: newly,
        });
    }
    rejected.sort_unstable();
    Ok(RejectionResult { rejected, rounds })
}

/// Iterative DAG test with leaf-proportional α, recomputed each round.
pub fn dag_test(hyps: &HypothesisSet, forest: &Polyforest, alpha: f64) -> Result<RejectionResult> {
    let p = hyps.p_valid.clone();
    run_rounds(hyps, forest, alpha, |budgets| {
        budgets.iter().filter(|&&(r, b)| p[r] <= b).map(|&(r, _)| r).collect()
    })
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TierConfig {
    /// Item name to tier (1 = highest priority).
    pub item_tiers: BTreeMap<String, usize>,
    /// One positive weight per tier; empty means equal weights.
    #[serde(default)]
    pub tier_weights: Vec<f64>,
}

impl TierConfig {
    pub fn new(item_tiers: BTreeMap<String, usize>) -> Self {
        TierConfig {
            item_tiers,
            tier_weights: Vec::new(),
        }
    }

    /// The three-tier exposure ordering used for the depression outcome.
    pub fn ace_preset() -> Self {
        let tiers: [(&str, usize); 10] = [
            ("ACEDEPRS", 1),
            ("ACESEX", 1),
            ("ACESWEAR", 1),
            ("ACESUB", 2),
            ("ACEPRISN", 2),
            ("ACEADSAF", 2),
            ("ACEHURT1", 2),
            ("ACEADNED", 3),
            ("ACEDIVRC", 3),
            ("ACEPUNCH", 3),
        ];
        TierConfig::new(tiers.iter().map(|(n, t)| (n.to_string(), *t)).collect())
    }

    pub fn n_tiers(&self) -> usize {
        self.item_tiers.values().copied().max().unwrap_or(0)
    }

    /// Tier per grid item, in grid order.
    pub fn resolve(&self, grid: &GridSpec) -> Result<Vec<usize>> {
        let mut out = Vec::with_capacity(grid.dims());
        for name in grid.item_names() {
            match self.item_tiers.get(name) {
                Some(&t) if t >= 1 => out.push(t),
                Some(_) => return Err(Error::input(format!("tier of {name} must be at least 1"))),
                None => return Err(Error::input(format!("item {name} has no tier assignment"))),
            }
        }
        if !self.tier_weights.is_empty() {
            if self.tier_weights.len() < self.n_tiers() {
                return Err(Error::input("fewer tier weights than tiers"));
            }
            if self.tier_weights.iter().any(|&w| !(w > 0.0 && w.is_finite())) {
                return Err(Error::input("tier weights must be positive"));
            }
        }
        Ok(out)
    }

    fn weight(&self, tier: usize) -> f64 {
        if self.tier_weights.is_empty() {
            1.0
        } else {
            self.tier_weights[(tier - 1).min(self.tier_weights.len() - 1)]
        }
    }

    /// Ranks items by marginal risk ratio (after binarising) and splits the
    /// ranking into `n_tiers` nearly equal groups, extra items going to the
    /// middle tiers first.
    pub fn from_marginal_ranking(data: &EncodedDataset, n_tiers: usize) -> Result<Self> {
        let d = data.grid().dims();
        if n_tiers == 0 || n_tiers > d {
            return Err(Error::input(format!("cannot form {n_tiers} tiers from {d} items")));
        }
        let mut rr = Vec::with_capacity(d);
        for j in 0..d {
            rr.push((j, marginal_risk_ratio(j, data).unwrap_or(f64::NAN)));
        }
        // NaN (undefined) ranks last
        rr.sort_by(|a, b| {
            let ka = if a.1.is_nan() { f64::NEG_INFINITY } else { a.1 };
            let kb = if b.1.is_nan() { f64::NEG_INFINITY } else { b.1 };
            kb.total_cmp(&ka).then(a.0.cmp(&b.0))
        });
        let mut sizes = vec![d / n_tiers; n_tiers];
        let extra = d % n_tiers;
        for k in 0..extra {
            sizes[(1 + k) % n_tiers] += 1;
        }
        let mut tiers = BTreeMap::new();
        let mut it = rr.into_iter();
        for (t, &sz) in sizes.iter().enumerate() {
            for (j, _) in it.by_ref().take(sz) {
                tiers.insert(data.grid().item_names()[j].clone(), t + 1);
            }
        }
        Ok(TierConfig::new(tiers))
    }
}

/// Minimum tier over items at a positive level; the bottom profile gets `n_tiers + 1`.
pub fn node_tier(x: &Profile, item_tiers: &[usize]) -> usize {
    let lowest = item_tiers.iter().copied().max().unwrap_or(0) + 1;
    x.levels()
        .iter()
        .zip(item_tiers)
        .filter(|(&v, _)| v > 0)
        .map(|(_, &t)| t)
        .min()
        .unwrap_or(lowest)
}

/// Greedy partition of `nodes` into antichains, topmost profiles first.
fn antichain_groups(hyps: &HypothesisSet, nodes: &[usize]) -> Vec<Vec<usize>> {
    let mut order = nodes.to_vec();
    order.sort_by_key(|&i| (std::cmp::Reverse(hyps.profiles[i].level_sum()), hyps.grid.index_of(&hyps.profiles[i])));
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for i in order {
        let xi = &hyps.profiles[i];
        match groups
            .iter_mut()
            .find(|g| g.iter().all(|&j| !xi.comparable(&hyps.profiles[j])))
        {
            Some(g) => g.push(i),
            None => groups.push(vec![i]),
        }
    }
    groups
}

/// Gatekeeping inside one subset. `members` carry their DAG budgets.
pub(crate) fn gatekeep(
    members: &[(usize, f64)],
    tier_of: impl Fn(usize) -> usize,
    p: impl Fn(usize) -> f64,
    weight: impl Fn(usize) -> f64,
) -> Vec<usize> {
    let joint: f64 = members.iter().map(|m| m.1).sum();
    let mut levels: BTreeMap<usize, Vec<(usize, f64)>> = BTreeMap::new();
    for &(i, b) in members {
        levels.entry(tier_of(i)).or_default().push((i, b));
    }
    let tiers: Vec<usize> = levels.keys().copied().collect();
    let mut out = Vec::new();
    let mut budget = joint;
    let mut reserve = 0.0;
    for (li, t) in tiers.iter().enumerate() {
        let level = &levels[t];
        let share: f64 = level.iter().map(|m| m.1).sum();
        let mut passed = 0.0;
        let mut any = false;
        for &(i, b) in level {
            let bi = if share > 0.0 { budget * b / share } else { budget / level.len() as f64 };
            if p(i) <= bi {
                out.push(i);
                any = true;
                passed += bi - p(i);
            }
        }
        if !any {
            break;
        }
        let rest = &tiers[li + 1..];
        if rest.is_empty() {
            break;
        }
        let pool = passed + reserve;
        let wsum: f64 = rest.iter().map(|&t| weight(t)).sum();
        budget = pool * weight(rest[0]) / wsum;
        reserve = pool - budget;
    }
    out
}

/// DAG test where each round's roots are grouped into antichains and tested
/// by tier-ordered gatekeeping on the summed DAG budgets.
pub fn dag_test_tiered(hyps: &HypothesisSet, forest: &Polyforest, alpha: f64, tiers: &TierConfig) -> Result<RejectionResult> {
    let item_tiers = tiers.resolve(&hyps.grid)?;
    let node_tiers: Vec<usize> = hyps.profiles.iter().map(|x| node_tier(x, &item_tiers)).collect();
    let n_tiers = tiers.n_tiers();
    let p = hyps.p_valid.clone();
    run_rounds(hyps, forest, alpha, |budgets| {
        let roots: Vec<usize> = budgets.iter().map(|b| b.0).collect();
        let bmap: BTreeMap<usize, f64> = budgets.iter().copied().collect();
        let mut hits = Vec::new();
        for g in antichain_groups(hyps, &roots) {
            let members: Vec<(usize, f64)> = g.iter().map(|&i| (i, bmap[&i])).collect();
            hits.extend(gatekeep(
                &members,
                |i| node_tiers[i],
                |i| p[i],
                |t| tiers.weight(t.min(n_tiers.max(1))),
            ));
        }
        hits.sort_unstable();
        hits
    })
}

fn binarised(x: &Profile) -> Profile {
    coarsen(x)
}

/// `P̂(Y=1 | X_j ≥ 1) / P̂(Y=1 | X_j = 0)`; infinite when the unexposed rate is zero.
pub fn marginal_risk_ratio(item: usize, data: &EncodedDataset) -> Result<f64> {
    if item >= data.grid().dims() {
        return Err(Error::input(format!("item index {item} out of range")));
    }
    let (mut n1, mut y1, mut n0, mut y0) = (0u64, 0u64, 0u64, 0u64);
    for (x, y) in data.rows() {
        if x.levels()[item] >= 1 {
            n1 += 1;
            y1 += y as u64;
        } else {
            n0 += 1;
            y0 += y as u64;
        }
    }
    if n1 == 0 || n0 == 0 {
        return Err(Error::Undefined(format!(
            "item {} has an empty exposure group",
            data.grid().item_names()[item]
        )));
    }
    let r1 = y1 as f64 / n1 as f64;
    let r0 = y0 as f64 / n0 as f64;
    if r0 == 0.0 {
        return Ok(if r1 == 0.0 { f64::NAN } else { f64::INFINITY });
    }
    Ok(r1 / r0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MantelHaenszel {
    pub z: f64,
    pub p_value: f64,
    pub strata: usize,
}

/// One-sided Mantel–Haenszel test that `(X_i ≥ 1, X_j = 0)` carries higher
/// risk than `(X_i = 0, X_j ≥ 1)`, stratified on the binarised other items.
pub fn conditional_dominance_test(i: usize, j: usize, data: &EncodedDataset) -> Result<MantelHaenszel> {
    let d = data.grid().dims();
    if i == j || i >= d || j >= d {
        return Err(Error::input(format!("need two distinct item indices, got {i} and {j}")));
    }
    // per stratum: (n_a, events_a, n_b, events_b)
    let mut strata: BTreeMap<Vec<u8>, [u64; 4]> = BTreeMap::new();
    for (x, y) in data.rows() {
        let b = binarised(x);
        let (xi, xj) = (b.levels()[i], b.levels()[j]);
        let slot = match (xi, xj) {
            (1, 0) => 0,
            (0, 1) => 2,
            _ => continue,
        };
        let key: Vec<u8> = b
            .levels()
            .iter()
            .enumerate()
            .filter(|(k, _)| *k != i && *k != j)
            .map(|(_, &v)| v)
            .collect();
        let e = strata.entry(key).or_insert([0; 4]);
        e[slot] += 1;
        e[slot + 1] += y as u64;
    }
    let (mut a, mut ea, mut v, mut used) = (0.0, 0.0, 0.0, 0usize);
    for c in strata.values() {
        let (na, ya, nb, yb) = (c[0] as f64, c[1] as f64, c[2] as f64, c[3] as f64);
        if c[0] == 0 || c[2] == 0 {
            continue;
        }
        let n = na + nb;
        let m1 = ya + yb;
        used += 1;
        a += ya;
        ea += na * m1 / n;
        if n > 1.0 {
            v += na * nb * m1 * (n - m1) / (n * n * (n - 1.0));
        }
    }
    if used == 0 {
        return Err(Error::Undefined("no stratum contains both discordant profiles".into()));
    }
    if v <= 0.0 {
        return Err(Error::Undefined("Mantel–Haenszel variance is zero".into()));
    }
    let z = (a - ea) / v.sqrt();
    Ok(MantelHaenszel {
        z,
        p_value: normal_sf(z),
        strata: used,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(v: &[u8]) -> Profile {
        Profile::new(v.to_vec())
    }

    fn hyps(levels: Vec<u8>, profiles: Vec<Profile>, pv: Vec<f64>, ps: Option<Vec<f64>>) -> HypothesisSet {
        let names = (0..levels.len()).map(|i| format!("X{i}")).collect();
        HypothesisSet::new(GridSpec::new(levels, names).unwrap(), profiles, pv, ps).unwrap()
    }

    #[test]
    fn rejects_duplicates_and_bad_p() {
        let g = GridSpec::binary(["a"]).unwrap();
        assert!(HypothesisSet::new(g.clone(), vec![p(&[0]), p(&[0])], vec![0.1, 0.1], None).is_err());
        assert!(HypothesisSet::new(g.clone(), vec![p(&[0])], vec![0.0], None).is_err());
        assert!(HypothesisSet::new(g, vec![p(&[0])], vec![1.5], None).is_err());
    }

    #[test]
    fn chain_becomes_path() {
        let h = hyps(vec![3], vec![p(&[0]), p(&[1]), p(&[2])], vec![0.5; 3], None);
        let f = build_polyforest_nearest(&h, 1);
        assert_eq!(f.parent, vec![Some(1), Some(2), None]);
    }

    #[test]
    fn nearest_prefers_closer_cover() {
        // (0,0) has covers (1,0) at distance 1 and (0,2) at distance 2
        let h = hyps(vec![3, 3], vec![p(&[0, 0]), p(&[1, 0]), p(&[0, 2])], vec![0.5; 3], None);
        let f = build_polyforest_nearest(&h, 9);
        assert_eq!(f.parent[0], Some(1));
    }

    #[test]
    fn evidence_prefers_smaller_screen_p() {
        let h = hyps(
            vec![2, 2],
            vec![p(&[0, 0]), p(&[1, 0]), p(&[0, 1])],
            vec![0.5; 3],
            Some(vec![0.5, 0.10, 0.03]),
        );
        assert_eq!(build_polyforest_evidence(&h, 0).unwrap().parent[0], Some(2));
        let h2 = hyps(vec![2, 2], vec![p(&[0, 0]), p(&[1, 1])], vec![0.5; 2], Some(vec![0.01, 0.9]));
        assert_eq!(build_polyforest_evidence(&h2, 0).unwrap().parent[0], Some(1));
        let h3 = hyps(vec![2], vec![p(&[0])], vec![0.5], None);
        assert!(build_polyforest_evidence(&h3, 0).is_err());
    }

    #[test]
    fn ties_are_seeded_and_roughly_uniform() {
        let h = hyps(vec![2, 2], vec![p(&[0, 0]), p(&[1, 0]), p(&[0, 1])], vec![0.5; 3], Some(vec![0.5, 0.2, 0.2]));
        let a = build_polyforest_evidence(&h, 42).unwrap();
        assert_eq!(a, build_polyforest_evidence(&h, 42).unwrap());
        let mut first = 0;
        for seed in 0..1000 {
            if build_polyforest_nearest(&h, seed).parent[0] == Some(1) {
                first += 1;
            }
        }
        assert!((400..=600).contains(&first), "{first}");
    }

    #[test]
    fn single_root_rejection_propagates() {
        let h = hyps(vec![2, 2], vec![p(&[1, 1]), p(&[1, 0]), p(&[0, 1])], vec![0.9, 0.01, 0.5], None);
        let forest = Polyforest {
            parent: vec![None, None, Some(0)],
        };
        let r = dag_test(&h, &forest, 0.05).unwrap();
        assert_eq!(r.rejected, vec![0, 1]);
        assert!(r.is_upward_closed(&h));
    }

    #[test]
    fn budgets_sum_to_alpha() {
        let h = hyps(vec![4], vec![p(&[0]), p(&[1]), p(&[3])], vec![1.0; 3], None);
        let forest = build_polyforest_nearest(&h, 0);
        let r = dag_test(&h, &forest, 0.05).unwrap();
        let total: f64 = r.rounds[0].roots.iter().map(|t| t.budget).sum();
        assert!((total - 0.05).abs() < 1e-12);
        assert!(r.rejected.is_empty());
    }

    /// Three roots over a seven-node polyforest with 2/1/1 leaves. Round one
    /// rejects two roots; round two promotes their children, every remaining
    /// root gets a quarter of α and nothing clears it.
    #[test]
    fn seven_node_rounds() {
        // items: three binary blocks plus a 3-level item to build the trees
        let profiles = vec![
            p(&[1, 0, 0, 2]), // 0 root A
            p(&[1, 0, 0, 1]), // 1 child of A
            p(&[1, 0, 0, 0]), // 2 child of A
            p(&[0, 1, 0, 2]), // 3 root B
            p(&[0, 1, 0, 1]), // 4 child of B
            p(&[0, 0, 1, 2]), // 5 root C
            p(&[0, 0, 1, 1]), // 6 child of C
        ];
        let forest = Polyforest {
            parent: vec![None, Some(0), Some(0), None, Some(3), None, Some(5)],
        };
        let pv = vec![0.001, 0.02, 0.2, 0.5, 0.001, 0.012, 0.04];
        let h = hyps(vec![2, 2, 2, 3], profiles, pv, None);
        let r = dag_test(&h, &forest, 0.05).unwrap();
        // round 0 budgets: A 2/4, B 1/4, C 1/4 of α
        let b0: Vec<f64> = r.rounds[0].roots.iter().map(|t| t.budget).collect();
        assert!((b0[0] - 0.025).abs() < 1e-15 && (b0[1] - 0.0125).abs() < 1e-15 && (b0[2] - 0.0125).abs() < 1e-15);
        assert_eq!(r.rounds[0].rejected, vec![0, 5]);
        // round 1: roots 1, 2, 3, 6 with one leaf each -> 0.0125; node 1 (0.02) fails
        assert!(r.rounds[1].roots.iter().all(|t| (t.budget - 0.0125).abs() < 1e-15));
        assert_eq!(r.rejected, vec![0, 5]);
        assert_eq!(r.rounds.len(), 2);
    }

    #[test]
    fn blocking_and_unblocking() {
        // node 0 (p 0.01) sits below two incomparable roots; node 3 is rejected first
        let profiles = vec![p(&[0, 0, 0]), p(&[1, 0, 0]), p(&[0, 1, 0]), p(&[0, 0, 1])];
        let pv = vec![0.01, 0.10, 0.02, 0.001];
        let h = hyps(vec![2, 2, 2], profiles, pv, None);
        // blocked: parent is the 0.10 root
        let f1 = Polyforest {
            parent: vec![Some(1), None, None, None],
        };
        let r1 = dag_test(&h, &f1, 0.05).unwrap();
        assert_eq!(r1.rejected, vec![2, 3]);
        // parent 0.02: once it falls, node 0 becomes a root with half of α
        let f2 = Polyforest {
            parent: vec![Some(2), None, None, None],
        };
        let r2 = dag_test(&h, &f2, 0.05).unwrap();
        assert_eq!(r2.rejected, vec![0, 1, 2, 3]);
        assert!(r2.is_upward_closed(&h));
    }

    #[test]
    fn gatekeeping_examples() {
        let tiers = |i: usize| if i == 0 { 1 } else { 2 };
        let w = |_| 1.0;
        let ps = [0.015, 0.02];
        let hits = gatekeep(&[(0, 0.02), (1, 0.02)], tiers, |i| ps[i], w);
        assert_eq!(hits, vec![0, 1]);
        // the tier-2 node sees 0.025
        let ps = [0.015, 0.026];
        assert_eq!(gatekeep(&[(0, 0.02), (1, 0.02)], tiers, |i| ps[i], w), vec![0]);
        let ps = [0.06, 0.001];
        assert!(gatekeep(&[(0, 0.02), (1, 0.02)], tiers, |i| ps[i], w).is_empty());
    }

    #[test]
    fn single_tier_matches_plain() {
        let profiles = vec![p(&[0, 0, 0]), p(&[1, 0, 0]), p(&[0, 1, 0]), p(&[0, 0, 1])];
        let h = hyps(vec![2, 2, 2], profiles, vec![0.01, 0.10, 0.02, 0.001], None);
        let f = Polyforest {
            parent: vec![Some(2), None, None, None],
        };
        let one: TierConfig = TierConfig::new((0..3).map(|i| (format!("X{i}"), 1)).collect());
        assert_eq!(dag_test_tiered(&h, &f, 0.05, &one).unwrap().rejected, dag_test(&h, &f, 0.05).unwrap().rejected);
        let missing = TierConfig::new([("X0".to_string(), 1)].into_iter().collect());
        assert!(dag_test_tiered(&h, &f, 0.05, &missing).is_err());
    }

    #[test]
    fn node_tier_rules() {
        assert_eq!(node_tier(&p(&[0, 2, 1]), &[1, 3, 2]), 2);
        assert_eq!(node_tier(&p(&[0, 0, 0]), &[1, 3, 2]), 4);
    }

    fn toy(rows: &[(&[u8], bool)], levels: Vec<u8>) -> EncodedDataset {
        let names = (0..levels.len()).map(|i| format!("X{i}")).collect();
        let g = GridSpec::new(levels, names).unwrap();
        EncodedDataset::new(
            g,
            rows.iter().map(|(x, _)| p(x)).collect(),
            rows.iter().map(|(_, y)| *y).collect(),
        )
        .unwrap()
    }

    #[test]
    fn risk_ratio_examples() {
        let d = toy(
            &[(&[1], true), (&[1], false), (&[0], true), (&[0], false), (&[0], false), (&[0], false)],
            vec![2],
        );
        assert!((marginal_risk_ratio(0, &d).unwrap() - 2.0).abs() < 1e-15);
        let eq = toy(&[(&[2], true), (&[0], true)], vec![3]);
        assert_eq!(marginal_risk_ratio(0, &eq).unwrap(), 1.0);
        let empty = toy(&[(&[1], true)], vec![2]);
        assert!(matches!(marginal_risk_ratio(0, &empty), Err(Error::Undefined(_))));
        let inf = toy(&[(&[1], true), (&[0], false)], vec![2]);
        assert_eq!(marginal_risk_ratio(0, &inf).unwrap(), f64::INFINITY);
    }

    #[test]
    fn mantel_haenszel_single_stratum() {
        // a: 3/4 events, b: 1/4 events, one stratum
        let mut rows: Vec<(&[u8], bool)> = Vec::new();
        for k in 0..4 {
            rows.push((&[1, 0], k < 3));
            rows.push((&[0, 1], k < 1));
        }
        let d = toy(&rows, vec![2, 2]);
        let r = conditional_dominance_test(0, 1, &d).unwrap();
        let (na, nb, m1, n): (f64, f64, f64, f64) = (4.0, 4.0, 4.0, 8.0);
        let z = (3.0 - na * m1 / n) / (na * nb * m1 * (n - m1) / (n * n * (n - 1.0))).sqrt();
        assert!((r.z - z).abs() < 1e-12);
        assert_eq!(r.strata, 1);
        let swapped = conditional_dominance_test(1, 0, &d).unwrap();
        assert!((swapped.z + z).abs() < 1e-12);
        assert!(conditional_dominance_test(0, 0, &d).is_err());
        let none = toy(&[(&[1, 1], true), (&[0, 0], false)], vec![2, 2]);
        assert!(matches!(conditional_dominance_test(0, 1, &none), Err(Error::Undefined(_))));
    }

    #[test]
    fn tiers_from_ranking_sizes() {
        let rows: Vec<(Vec<u8>, bool)> = (0..200u32)
            .map(|r| {
                let x: Vec<u8> = (0..10).map(|j| (((r >> (j % 8)) ^ (r >> 3)) & 1) as u8).collect();
                (x, r % 3 == 0)
            })
            .collect();
        let refs: Vec<(&[u8], bool)> = rows.iter().map(|(x, y)| (x.as_slice(), *y)).collect();
        let d = toy(&refs, vec![2; 10]);
        let t = TierConfig::from_marginal_ranking(&d, 3).unwrap();
        let mut sizes = [0; 3];
        for &v in t.item_tiers.values() {
            sizes[v - 1] += 1;
        }
        assert_eq!(sizes, [3, 4, 3]);
    }
}
