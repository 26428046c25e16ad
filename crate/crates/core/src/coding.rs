//! Exposure encodings: frequency (native ordinal levels), binary presence,
//! and the one-dimensional exposure-count chain, plus the coarsening map
//! between them.

use serde::{Deserialize, Serialize};

use crate::error::{DataIssue, Error, Result};
use crate::lattice::{GridSpec, Profile, UpwardClosedSet};

/// Name of the outcome column in dataset tables.
pub const OUTCOME_COLUMN: &str = "Y";
/// Name of the optional part column in dataset tables.
pub const PART_COLUMN: &str = "PART";
/// Item name used for the exposure-count chain grid.
pub const SCORE_ITEM: &str = "ACE_SCORE";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemSpec {
    pub name: String,
    #[serde(rename = "levels")]
    pub n_levels: u8,
    #[serde(default)]
    pub reverse_coded: bool,
    /// Response labels in questionnaire order. For reverse-coded items the
    /// first label maps to the highest level.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level_labels: Option<Vec<String>>,
}

impl ItemSpec {
    pub fn new(name: impl Into<String>, n_levels: u8) -> Self {
        ItemSpec {
            name: name.into(),
            n_levels,
            reverse_coded: false,
            level_labels: None,
        }
    }

    pub fn with_labels(mut self, labels: &[&str]) -> Self {
        self.level_labels = Some(labels.iter().map(|s| s.to_string()).collect());
        self
    }

    pub fn reversed(mut self) -> Self {
        self.reverse_coded = true;
        self
    }

    /// Coded level for a textual cell: an integer level, or a recognised label.
    pub fn parse_level(&self, raw: &str) -> std::result::Result<u8, String> {
        let t = raw.trim();
        if let Ok(v) = t.parse::<i64>() {
            if v < 0 || v >= self.n_levels as i64 {
                return Err(format!("level out of range 0..{}", self.n_levels - 1));
            }
            return Ok(v as u8);
        }
        if let Some(labels) = &self.level_labels {
            if let Some(pos) = labels.iter().position(|l| l.eq_ignore_ascii_case(t)) {
                let pos = pos as u8;
                return Ok(if self.reverse_coded {
                    self.n_levels - 1 - pos
                } else {
                    pos
                });
            }
        }
        Err("not an integer level or a recognised label".to_string())
    }
}

/// The ten-item exposure preset: four binary, four three-level and two
/// reverse-coded five-level items.
pub fn ace_items() -> Vec<ItemSpec> {
    const YES_NO: &[&str] = &["No", "Yes"];
    const FREQ3: &[&str] = &["None", "Once", "More than once"];
    // protective framing, least protective first; reverse coding turns
    // "Never" into the worst level
    const FREQ5: &[&str] = &[
        "Never",
        "A little of the time",
        "Some of the time",
        "Most of the time",
        "All of the time",
    ];
    let mut v = Vec::new();
    for name in ["ACEDEPRS", "ACESUB", "ACEPRISN", "ACEDIVRC"] {
        v.push(ItemSpec::new(name, 2).with_labels(YES_NO));
    }
    for name in ["ACEPUNCH", "ACEHURT1", "ACESWEAR", "ACESEX"] {
        v.push(ItemSpec::new(name, 3).with_labels(FREQ3));
    }
    for name in ["ACEADSAF", "ACEADNED"] {
        v.push(ItemSpec::new(name, 5).with_labels(FREQ5).reversed());
    }
    v
}

pub fn grid_from_items(items: &[ItemSpec]) -> Result<GridSpec> {
    GridSpec::new(
        items.iter().map(|i| i.n_levels).collect(),
        items.iter().map(|i| i.name.clone()).collect(),
    )
}

/// Default item specs for an existing grid (no labels, no reverse coding).
pub fn items_from_grid(grid: &GridSpec) -> Vec<ItemSpec> {
    grid.item_names()
        .iter()
        .zip(grid.levels())
        .map(|(n, &l)| ItemSpec::new(n.clone(), l))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Coding {
    Binary,
    Frequency,
    Score,
}

impl std::str::FromStr for Coding {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "binary" => Ok(Coding::Binary),
            "frequency" => Ok(Coding::Frequency),
            "score" => Ok(Coding::Score),
            other => Err(Error::Config(format!("unknown coding {other:?}"))),
        }
    }
}

impl std::fmt::Display for Coding {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Coding::Binary => "binary",
            Coding::Frequency => "frequency",
            Coding::Score => "score",
        })
    }
}

/// Rows of `(profile, binary outcome)` on a common grid.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedDataset {
    grid: GridSpec,
    profiles: Vec<Profile>,
    outcomes: Vec<bool>,
    pub part_label: Option<String>,
}

impl EncodedDataset {
    pub fn new(grid: GridSpec, profiles: Vec<Profile>, outcomes: Vec<bool>) -> Result<Self> {
        if profiles.len() != outcomes.len() {
            return Err(Error::input(format!(
                "{} profiles but {} outcomes",
                profiles.len(),
                outcomes.len()
            )));
        }
        for x in &profiles {
            grid.validate(x)?;
        }
        Ok(EncodedDataset {
            grid,
            profiles,
            outcomes,
            part_label: None,
        })
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.part_label = Some(label.into());
        self
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn profiles(&self) -> &[Profile] {
        &self.profiles
    }

    pub fn outcomes(&self) -> &[bool] {
        &self.outcomes
    }

    pub fn len(&self) -> usize {
        self.profiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.profiles.is_empty()
    }

    pub fn rows(&self) -> impl Iterator<Item = (&Profile, bool)> {
        self.profiles.iter().zip(self.outcomes.iter().copied())
    }

    /// Rows at the given indices, in the given order.
    pub fn subset(&self, indices: &[usize]) -> EncodedDataset {
        EncodedDataset {
            grid: self.grid.clone(),
            profiles: indices.iter().map(|&i| self.profiles[i].clone()).collect(),
            outcomes: indices.iter().map(|&i| self.outcomes[i]).collect(),
            part_label: self.part_label.clone(),
        }
    }

    /// Distinct observed profiles in linear-index order.
    pub fn distinct_profiles(&self) -> Vec<Profile> {
        let mut idx: Vec<u64> = self.profiles.iter().map(|x| self.grid.index_of(x)).collect();
        idx.sort_unstable();
        idx.dedup();
        idx.into_iter().map(|i| self.grid.profile_at(i)).collect()
    }

    pub fn coarsened(&self) -> EncodedDataset {
        EncodedDataset {
            grid: coarsen_grid(&self.grid),
            profiles: self.profiles.iter().map(coarsen).collect(),
            outcomes: self.outcomes.clone(),
            part_label: self.part_label.clone(),
        }
    }

    /// Re-expresses the rows under `coding`. Frequency keeps native levels.
    pub fn recode(&self, coding: Coding) -> EncodedDataset {
        match coding {
            Coding::Frequency => self.clone(),
            Coding::Binary => self.coarsened(),
            Coding::Score => score_chain(self),
        }
    }

    pub fn prevalence(&self) -> f64 {
        if self.outcomes.is_empty() {
            return f64::NAN;
        }
        self.outcomes.iter().filter(|&&y| y).count() as f64 / self.outcomes.len() as f64
    }
}

/// `C(x)_j = 1{x_j ≥ 1}`.
pub fn coarsen(x: &Profile) -> Profile {
    Profile::new(x.levels().iter().map(|&v| (v >= 1) as u8).collect())
}

pub fn coarsen_grid(grid: &GridSpec) -> GridSpec {
    GridSpec::binary(grid.item_names().iter().cloned()).expect("names already validated")
}

/// `x ∈ L(B)`, i.e. `C(x) ∈ B`.
pub fn lift_membership(binary_set: &UpwardClosedSet, x: &Profile, freq_grid: &GridSpec) -> Result<bool> {
    if !binary_set.grid().same_items(freq_grid) {
        return Err(Error::input("binary and frequency grids have different items"));
    }
    if binary_set.grid().levels().iter().any(|&l| l != 2) {
        return Err(Error::input("lifting expects a binary selection"));
    }
    freq_grid.validate(x)?;
    Ok(binary_set.contains(&coarsen(x)))
}

/// Lifts a binary selection to the frequency grid: `L(B)` for upward-closed
/// `B` is the closure of the same corners read at frequency resolution.
pub fn lift(binary_set: &UpwardClosedSet, freq_grid: &GridSpec) -> Result<UpwardClosedSet> {
    if binary_set.grid().levels().iter().any(|&l| l != 2) {
        return Err(Error::input("lifting expects a binary selection"));
    }
    binary_set.embed_into(freq_grid)
}

/// Number of items at a positive level.
pub fn ace_score(x: &Profile) -> u8 {
    x.levels().iter().filter(|&&v| v >= 1).count() as u8
}

pub fn score_grid(dims: usize) -> GridSpec {
    GridSpec::new(vec![dims as u8 + 1], vec![SCORE_ITEM.to_string()]).expect("chain grid")
}

/// Replaces each profile by its exposure count on the chain `{0, …, d}`.
pub fn score_chain(data: &EncodedDataset) -> EncodedDataset {
    EncodedDataset {
        grid: score_grid(data.grid().dims()),
        profiles: data
            .profiles()
            .iter()
            .map(|x| Profile::new(vec![ace_score(x)]))
            .collect(),
        outcomes: data.outcomes().to_vec(),
        part_label: data.part_label.clone(),
    }
}

/// A parsed but not yet encoded table.
#[derive(Debug, Clone, Default)]
pub struct RawTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl RawTable {
    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h.trim() == name)
    }
}

#[derive(Debug, Clone)]
pub struct EncodedTable {
    pub dataset: EncodedDataset,
    /// Per retained row, the PART cell when that column exists.
    pub parts: Option<Vec<String>>,
    /// 1-based indices of rows dropped for missing values.
    pub dropped_rows: Vec<usize>,
}

impl EncodedTable {
    /// Rows whose part label equals `label` (case-insensitive).
    pub fn part(&self, label: &str) -> Option<EncodedDataset> {
        let parts = self.parts.as_ref()?;
        let idx: Vec<usize> = parts
            .iter()
            .enumerate()
            .filter(|(_, p)| p.eq_ignore_ascii_case(label))
            .map(|(i, _)| i)
            .collect();
        Some(self.dataset.subset(&idx).with_label(label.to_ascii_lowercase()))
    }
}

fn is_missing(cell: &str) -> bool {
    let t = cell.trim();
    t.is_empty()
        || t.eq_ignore_ascii_case("na")
        || t.eq_ignore_ascii_case("n/a")
        || t == "."
        || t == "?"
}

fn parse_outcome(cell: &str) -> std::result::Result<bool, String> {
    match cell.trim() {
        "0" => Ok(false),
        "1" => Ok(true),
        t if t.eq_ignore_ascii_case("no") => Ok(false),
        t if t.eq_ignore_ascii_case("yes") => Ok(true),
        _ => Err("outcome must be 0/1".to_string()),
    }
}

/// Encodes a raw item-level table. Rows with a missing item or outcome are
/// dropped (complete-case); any other unparseable cell is reported.
pub fn encode_dataset(raw: &RawTable, items: &[ItemSpec], coding: Coding) -> Result<EncodedTable> {
    let grid = grid_from_items(items)?;
    let mut cols = Vec::with_capacity(items.len());
    for it in items {
        cols.push(
            raw.column(&it.name)
                .ok_or_else(|| Error::Config(format!("missing item column {}", it.name)))?,
        );
    }
    let ycol = raw
        .column(OUTCOME_COLUMN)
        .ok_or_else(|| Error::Config(format!("missing outcome column {OUTCOME_COLUMN}")))?;
    let pcol = raw.column(PART_COLUMN);

    let mut issues = Vec::new();
    let mut profiles = Vec::new();
    let mut outcomes = Vec::new();
    let mut parts = pcol.map(|_| Vec::new());
    let mut dropped = Vec::new();

    for (r, row) in raw.rows.iter().enumerate() {
        let row_no = r + 1;
        let cell = |c: usize| row.get(c).map(String::as_str).unwrap_or("");
        let missing = cols.iter().any(|&c| is_missing(cell(c))) || is_missing(cell(ycol));
        if missing {
            dropped.push(row_no);
            continue;
        }
        let mut levels = Vec::with_capacity(items.len());
        let mut ok = true;
        for (it, &c) in items.iter().zip(&cols) {
            match it.parse_level(cell(c)) {
                Ok(v) => levels.push(v),
                Err(message) => {
                    ok = false;
                    issues.push(DataIssue {
                        row: row_no,
                        column: it.name.clone(),
                        value: cell(c).to_string(),
                        message,
                    });
                }
            }
        }
        let y = match parse_outcome(cell(ycol)) {
            Ok(y) => Some(y),
            Err(message) => {
                issues.push(DataIssue {
                    row: row_no,
                    column: OUTCOME_COLUMN.to_string(),
                    value: cell(ycol).to_string(),
                    message,
                });
                None
            }
        };
        if let (true, Some(y)) = (ok, y) {
            profiles.push(Profile::new(levels));
            outcomes.push(y);
            if let (Some(p), Some(pc)) = (parts.as_mut(), pcol) {
                p.push(cell(pc).trim().to_string());
            }
        }
    }
    if !issues.is_empty() {
        return Err(Error::Data(issues));
    }
    let native = EncodedDataset::new(grid, profiles, outcomes)?;
    Ok(EncodedTable {
        dataset: native.recode(coding),
        parts,
        dropped_rows: dropped,
    })
}
