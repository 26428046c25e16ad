//! Finite product-of-chains lattices.
//!
//! A [`GridSpec`] fixes the number of ordered levels per item; a [`Profile`]
//! is one point on that grid. Profiles are ordered coordinate-wise, and
//! selections are represented as upward-closed sets through their minimal
//! corners.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest corner count for which [`UpwardClosedSet::count`] uses
/// inclusion–exclusion (2^24 subsets).
pub const INCLUSION_EXCLUSION_MAX_CORNERS: usize = 24;

/// Largest grid that is ever enumerated cell by cell.
pub const ENUMERATION_MAX_CELLS: u64 = 1 << 28;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct GridSpec {
    levels: Vec<u8>,
    item_names: Vec<String>,
    #[serde(skip)]
    strides: Vec<u64>,
}

impl GridSpec {
    pub fn new(levels: Vec<u8>, item_names: Vec<String>) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::input("grid needs at least one item"));
        }
        if levels.len() != item_names.len() {
            return Err(Error::input(format!(
                "{} level counts but {} item names",
                levels.len(),
                item_names.len()
            )));
        }
        if let Some((j, &l)) = levels.iter().enumerate().find(|(_, &l)| l < 2) {
            return Err(Error::input(format!(
                "item {} has {l} levels; at least 2 are required",
                item_names[j]
            )));
        }
        for (a, name) in item_names.iter().enumerate() {
            if item_names[..a].contains(name) {
                return Err(Error::input(format!("duplicate item name {name}")));
            }
        }
        let mut strides = vec![1u64; levels.len()];
        let mut acc: u64 = 1;
        for j in (0..levels.len()).rev() {
            strides[j] = acc;
            acc = acc
                .checked_mul(levels[j] as u64)
                .ok_or_else(|| Error::input("grid size overflows u64"))?;
        }
        Ok(GridSpec {
            levels,
            item_names,
            strides,
        })
    }

    /// All-binary grid over the given items.
    pub fn binary<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Result<Self> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        GridSpec::new(vec![2; names.len()], names)
    }

    pub fn levels(&self) -> &[u8] {
        &self.levels
    }

    pub fn item_names(&self) -> &[String] {
        &self.item_names
    }

    pub fn dims(&self) -> usize {
        self.levels.len()
    }

    pub fn item_index(&self, name: &str) -> Option<usize> {
        self.item_names.iter().position(|n| n == name)
    }

    /// Number of cells, i.e. the product of the level counts.
    pub fn size(&self) -> u64 {
        self.strides[0] * self.levels[0] as u64
    }

    pub fn strides(&self) -> &[u64] {
        &self.strides
    }

    pub fn validate(&self, x: &Profile) -> Result<()> {
        if x.len() != self.dims() {
            return Err(Error::input(format!(
                "profile has {} coordinates, grid has {}",
                x.len(),
                self.dims()
            )));
        }
        for (j, (&v, &l)) in x.levels().iter().zip(&self.levels).enumerate() {
            if v >= l {
                return Err(Error::input(format!(
                    "level {v} out of range for item {} (levels 0..{})",
                    self.item_names[j],
                    l - 1
                )));
            }
        }
        Ok(())
    }

    /// Row-major linear index of a profile (last item varies fastest).
    pub fn index_of(&self, x: &Profile) -> u64 {
        x.levels()
            .iter()
            .zip(&self.strides)
            .map(|(&v, &s)| v as u64 * s)
            .sum()
    }

    pub fn profile_at(&self, mut index: u64) -> Profile {
        let mut out = vec![0u8; self.dims()];
        for (j, &s) in self.strides.iter().enumerate() {
            out[j] = (index / s) as u8;
            index %= s;
        }
        Profile(out)
    }

    pub fn bottom(&self) -> Profile {
        Profile(vec![0; self.dims()])
    }

    pub fn top(&self) -> Profile {
        Profile(self.levels.iter().map(|l| l - 1).collect())
    }

    /// Iterates every cell in linear-index order.
    pub fn iter(&self) -> GridIter<'_> {
        GridIter {
            grid: self,
            next: Some(self.bottom().0),
        }
    }

    /// Same item names in the same order (level counts may differ).
    pub fn same_items(&self, other: &GridSpec) -> bool {
        self.item_names == other.item_names
    }
}

pub struct GridIter<'a> {
    grid: &'a GridSpec,
    next: Option<Vec<u8>>,
}

impl Iterator for GridIter<'_> {
    type Item = Profile;

    fn next(&mut self) -> Option<Profile> {
        let current = self.next.take()?;
        let mut succ = current.clone();
        let mut j = succ.len();
        loop {
            if j == 0 {
                break;
            }
            j -= 1;
            if succ[j] + 1 < self.grid.levels[j] {
                succ[j] += 1;
                self.next = Some(succ);
                break;
            }
            succ[j] = 0;
        }
        Some(Profile(current))
    }
}

/// One point of a product lattice.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Profile(Vec<u8>);

impl Profile {
    pub fn new(levels: Vec<u8>) -> Self {
        Profile(levels)
    }

    pub fn levels(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<u8> {
        self.0
    }

    /// `self ⪯ other` without dimension checks.
    #[inline]
    pub fn dominated_by(&self, other: &Profile) -> bool {
        self.0.iter().zip(&other.0).all(|(a, b)| a <= b)
    }

    /// `self ≺ other`.
    #[inline]
    pub fn strictly_dominated_by(&self, other: &Profile) -> bool {
        self != other && self.dominated_by(other)
    }

    pub fn comparable(&self, other: &Profile) -> bool {
        self.dominated_by(other) || other.dominated_by(self)
    }

    /// Coordinate-wise maximum (the lattice join).
    pub fn join(&self, other: &Profile) -> Profile {
        Profile(self.0.iter().zip(&other.0).map(|(a, b)| *a.max(b)).collect())
    }

    pub fn level_sum(&self) -> u32 {
        self.0.iter().map(|&v| v as u32).sum()
    }
}

impl From<Vec<u8>> for Profile {
    fn from(v: Vec<u8>) -> Self {
        Profile(v)
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (j, v) in self.0.iter().enumerate() {
            if j > 0 {
                write!(f, ",")?;
            }
            write!(f, "{v}")?;
        }
        write!(f, ")")
    }
}

fn check_dims(a: &Profile, b: &Profile) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::input(format!(
            "dimension mismatch: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

/// Coordinate-wise order `a ⪯ b`.
pub fn leq(a: &Profile, b: &Profile, grid: &GridSpec) -> Result<bool> {
    check_dims(a, b)?;
    grid.validate(a)?;
    grid.validate(b)?;
    Ok(a.dominated_by(b))
}

pub fn linf_distance(a: &Profile, b: &Profile) -> Result<u32> {
    check_dims(a, b)?;
    Ok(linf_unchecked(a, b))
}

#[inline]
pub(crate) fn linf_unchecked(a: &Profile, b: &Profile) -> u32 {
    a.0.iter()
        .zip(&b.0)
        .map(|(&x, &y)| (x as i32 - y as i32).unsigned_abs())
        .max()
        .unwrap_or(0)
}

/// Canonical corner order: lexicographic on level vectors.
fn canonical_sort(v: &mut [Profile]) {
    v.sort();
}

/// Minimal elements of `members` under ⪯, canonically sorted and deduplicated.
pub fn minimal_corners<'a>(members: impl IntoIterator<Item = &'a Profile>) -> Vec<Profile> {
    let mut sorted: Vec<&Profile> = members.into_iter().collect();
    sorted.sort_by(|a, b| a.level_sum().cmp(&b.level_sum()).then_with(|| a.cmp(b)));
    sorted.dedup();
    let mut kept: Vec<Profile> = Vec::new();
    for x in sorted {
        // Anything strictly below x has a smaller level sum, so it is either
        // kept already or dominates some kept element from above.
        if !kept.iter().any(|c| c.dominated_by(x)) {
            kept.push(x.clone());
        }
    }
    canonical_sort(&mut kept);
    kept
}

/// Immediate strict dominators of `i` within `candidates`.
pub fn cover_set(i: &Profile, candidates: &[Profile]) -> Vec<Profile> {
    let above: Vec<Profile> = candidates
        .iter()
        .filter(|j| i.strictly_dominated_by(j))
        .cloned()
        .collect();
    minimal_corners(&above)
}

/// Upward-closed subset of a grid, stored through its minimal corners.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct UpwardClosedSet {
    grid: GridSpec,
    corners: Vec<Profile>,
}

impl UpwardClosedSet {
    /// Builds `up(generators)`. Dominated or duplicate generators are dropped.
    pub fn new(grid: GridSpec, generators: Vec<Profile>) -> Result<Self> {
        for g in &generators {
            grid.validate(g)?;
        }
        let corners = minimal_corners(&generators);
        Ok(UpwardClosedSet { grid, corners })
    }

    pub fn empty(grid: GridSpec) -> Self {
        UpwardClosedSet {
            grid,
            corners: Vec::new(),
        }
    }

    pub fn full(grid: GridSpec) -> Self {
        let bottom = grid.bottom();
        UpwardClosedSet {
            grid,
            corners: vec![bottom],
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn corners(&self) -> &[Profile] {
        &self.corners
    }

    pub fn is_empty(&self) -> bool {
        self.corners.is_empty()
    }

    /// Membership without validating `x` against the grid.
    #[inline]
    pub fn contains(&self, x: &Profile) -> bool {
        self.corners.iter().any(|c| c.dominated_by(x))
    }

    /// Exact number of grid cells in the set.
    pub fn count(&self) -> u64 {
        if self.corners.len() <= INCLUSION_EXCLUSION_MAX_CORNERS
            || self.grid.size() > ENUMERATION_MAX_CELLS
        {
            self.count_inclusion_exclusion()
        } else {
            self.count_by_enumeration()
                .expect("grid size checked against enumeration bound")
        }
    }

    pub fn fraction(&self) -> f64 {
        self.count() as f64 / self.grid.size() as f64
    }

    /// Inclusion–exclusion over corner subsets: the intersection of the
    /// closures of a subset is the closure of its join.
    pub fn count_inclusion_exclusion(&self) -> u64 {
        fn up_size(levels: &[u8], x: &[u8]) -> i128 {
            levels
                .iter()
                .zip(x)
                .map(|(&l, &v)| (l - v) as i128)
                .product()
        }
        // joins[d] holds the join of the corners chosen so far at depth d.
        fn recurse(levels: &[u8], corners: &[Profile], start: usize, joins: &mut [Vec<u8>], depth: usize, acc: &mut i128) {
            for k in start..corners.len() {
                let (lower, upper) = joins.split_at_mut(depth + 1);
                let next = &mut upper[0];
                for ((n, &j), &v) in next.iter_mut().zip(&lower[depth]).zip(corners[k].levels()) {
                    *n = j.max(v);
                }
                let term = up_size(levels, next);
                if depth.is_multiple_of(2) {
                    *acc += term;
                } else {
                    *acc -= term;
                }
                recurse(levels, corners, k + 1, joins, depth + 1, acc);
            }
        }
        let mut acc: i128 = 0;
        let mut joins = vec![vec![0u8; self.grid.dims()]; self.corners.len() + 1];
        recurse(self.grid.levels(), &self.corners, 0, &mut joins, 0, &mut acc);
        acc as u64
    }

    pub fn count_by_enumeration(&self) -> Result<u64> {
        Ok(self.membership_mask()?.iter().filter(|&&m| m).count() as u64)
    }

    /// Membership of every grid cell in linear-index order.
    ///
    /// Computed by a sweep: a cell is a member iff it is a corner or one of
    /// its lower neighbours `x - e_j` is a member.
    pub fn membership_mask(&self) -> Result<Vec<bool>> {
        let size = self.grid.size();
        if size > ENUMERATION_MAX_CELLS {
            return Err(Error::input(format!(
                "grid of {size} cells is too large to enumerate"
            )));
        }
        let size = size as usize;
        let mut mask = vec![false; size];
        for c in &self.corners {
            mask[self.grid.index_of(c) as usize] = true;
        }
        let levels = self.grid.levels();
        let strides: Vec<usize> = self.grid.strides().iter().map(|&s| s as usize).collect();
        let mut digits = vec![0u8; levels.len()];
        for idx in 0..size {
            if !mask[idx] {
                mask[idx] = digits
                    .iter()
                    .zip(&strides)
                    .any(|(&d, &s)| d > 0 && mask[idx - s]);
            }
            // advance mixed-radix counter
            let mut j = levels.len();
            while j > 0 {
                j -= 1;
                digits[j] += 1;
                if digits[j] < levels[j] {
                    break;
                }
                digits[j] = 0;
            }
        }
        Ok(mask)
    }

    /// All member profiles in linear-index order.
    pub fn enumerate(&self) -> Result<Vec<Profile>> {
        let mask = self.membership_mask()?;
        Ok(self
            .grid
            .iter()
            .zip(mask)
            .filter_map(|(x, m)| m.then_some(x))
            .collect())
    }

    fn check_same_grid(&self, other: &UpwardClosedSet) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::input("upward-closed sets live on different grids"));
        }
        Ok(())
    }

    pub fn union(&self, other: &UpwardClosedSet) -> Result<UpwardClosedSet> {
        self.check_same_grid(other)?;
        let corners = minimal_corners(self.corners.iter().chain(&other.corners));
        Ok(UpwardClosedSet {
            grid: self.grid.clone(),
            corners,
        })
    }

    pub fn intersection(&self, other: &UpwardClosedSet) -> Result<UpwardClosedSet> {
        self.check_same_grid(other)?;
        let joins: Vec<Profile> = self
            .corners
            .iter()
            .flat_map(|a| other.corners.iter().map(move |b| a.join(b)))
            .collect();
        Ok(UpwardClosedSet {
            grid: self.grid.clone(),
            corners: minimal_corners(&joins),
        })
    }

    /// `self ⊆ other`.
    pub fn is_subset_of(&self, other: &UpwardClosedSet) -> bool {
        self.grid == other.grid && self.corners.iter().all(|c| other.contains(c))
    }

    /// Re-homes the corners on a grid with the same items and at least as
    /// many levels per item.
    pub fn embed_into(&self, grid: &GridSpec) -> Result<UpwardClosedSet> {
        if !self.grid.same_items(grid) {
            return Err(Error::input("grids have different items"));
        }
        UpwardClosedSet::new(grid.clone(), self.corners.clone())
    }
}

impl PartialOrd for UpwardClosedSet {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        if self.grid != other.grid {
            return None;
        }
        match (self.is_subset_of(other), other.is_subset_of(self)) {
            (true, true) => Some(Ordering::Equal),
            (true, false) => Some(Ordering::Less),
            (false, true) => Some(Ordering::Greater),
            (false, false) => None,
        }
    }
}

/// Fast dominance checks on packed profiles.
///
/// When every level fits in four bits and there are at most twelve items, a
/// profile packs into 5-bit fields of a `u64` whose top bit per field is a
/// guard; `a ⪯ b` then reduces to one subtraction and mask test.
#[derive(Debug, Clone)]
pub(crate) enum DominanceKeys {
    Packed { keys: Vec<u64>, guard: u64 },
    Plain(Vec<Profile>),
}

impl DominanceKeys {
    pub(crate) fn packable(grid: &GridSpec) -> bool {
        grid.dims() <= 12 && grid.levels().iter().all(|&l| l <= 16)
    }

    pub(crate) fn guard_mask(dims: usize) -> u64 {
        (0..dims).fold(0u64, |acc, j| acc | (1u64 << (5 * j + 4)))
    }

    pub(crate) fn pack(x: &Profile) -> u64 {
        x.levels()
            .iter()
            .enumerate()
            .fold(0u64, |acc, (j, &v)| acc | ((v as u64) << (5 * j)))
    }

    pub(crate) fn build(grid: &GridSpec, rows: &[Profile]) -> Self {
        if Self::packable(grid) {
            DominanceKeys::Packed {
                keys: rows.iter().map(Self::pack).collect(),
                guard: Self::guard_mask(grid.dims()),
            }
        } else {
            DominanceKeys::Plain(rows.to_vec())
        }
    }

    /// Indices `r` (ascending) with `rows[r] ⪯ x`.
    pub(crate) fn for_each_dominated(&self, x: &Profile, mut f: impl FnMut(usize)) {
        match self {
            DominanceKeys::Packed { keys, guard } => {
                let xk = Self::pack(x) | guard;
                for (r, &k) in keys.iter().enumerate() {
                    if (xk - k) & guard == *guard {
                        f(r);
                    }
                }
            }
            DominanceKeys::Plain(rows) => {
                for (r, row) in rows.iter().enumerate() {
                    if row.dominated_by(x) {
                        f(r);
                    }
                }
            }
        }
    }

    /// Indices `r` (ascending) with `x ⪯ rows[r]`.
    pub(crate) fn for_each_dominating(&self, x: &Profile, mut f: impl FnMut(usize)) {
        match self {
            DominanceKeys::Packed { keys, guard } => {
                let xk = Self::pack(x);
                for (r, &k) in keys.iter().enumerate() {
                    if ((k | guard) - xk) & guard == *guard {
                        f(r);
                    }
                }
            }
            DominanceKeys::Plain(rows) => {
                for (r, row) in rows.iter().enumerate() {
                    if x.dominated_by(row) {
                        f(r);
                    }
                }
            }
        }
    }
}
