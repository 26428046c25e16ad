//! File formats: dataset CSV, corner sets (JSON and CSV), digests, and
//! combination counts.

use std::collections::BTreeMap;
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::coding::{coarsen, EncodedDataset, ItemSpec, RawTable};
use crate::error::{Error, Result};
use crate::lattice::{GridSpec, Profile, UpwardClosedSet};

pub fn read_raw_table<R: Read>(input: R) -> Result<RawTable> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).trim(csv::Trim::All).from_reader(input);
    let header = rdr.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        rows.push(rec?.iter().map(str::to_string).collect());
    }
    Ok(RawTable { header, rows })
}

pub fn read_raw_csv(path: &Path) -> Result<RawTable> {
    read_raw_table(fs::File::open(path)?)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn file_digest(path: &Path) -> Result<String> {
    Ok(sha256_hex(&fs::read(path)?))
}

pub fn read_items_json(path: &Path) -> Result<Vec<ItemSpec>> {
    Ok(serde_json::from_slice(&fs::read(path)?)?)
}

/// Item specs when none are supplied: integer levels per column, with the
/// level count taken from the largest observed value (at least two).
pub fn infer_items(raw: &RawTable, skip: &[&str]) -> Result<Vec<ItemSpec>> {
    let mut items = Vec::new();
    for (c, name) in raw.header.iter().enumerate() {
        if skip.contains(&name.as_str()) {
            continue;
        }
        let mut max = 1u8;
        for (r, row) in raw.rows.iter().enumerate() {
            let cell = row.get(c).map(String::as_str).unwrap_or("").trim();
            if cell.is_empty() || cell.eq_ignore_ascii_case("na") || cell == "." {
                continue;
            }
            match cell.parse::<u8>() {
                Ok(v) if v < 16 => max = max.max(v),
                _ => {
                    return Err(Error::Data(vec![crate::error::DataIssue {
                        row: r + 1,
                        column: name.clone(),
                        value: cell.to_string(),
                        message: "levels must be integers 0..15 when no item file is given".into(),
                    }]))
                }
            }
        }
        items.push(ItemSpec::new(name.clone(), max + 1));
    }
    Ok(items)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridItem {
    pub name: String,
    pub levels: u8,
    #[serde(default)]
    pub reverse_coded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridDoc {
    pub items: Vec<GridItem>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CornersDoc {
    pub grid: GridDoc,
    pub corners: Vec<Vec<u8>>,
}

impl CornersDoc {
    /// `items` supplies reverse-coding flags; any item missing there is
    /// written as not reverse coded.
    pub fn from_set(set: &UpwardClosedSet, items: &[ItemSpec]) -> Self {
        let grid = set.grid();
        let rev: BTreeMap<&str, bool> = items.iter().map(|i| (i.name.as_str(), i.reverse_coded)).collect();
        CornersDoc {
            grid: GridDoc {
                items: grid
                    .item_names()
                    .iter()
                    .zip(grid.levels())
                    .map(|(n, &l)| GridItem {
                        name: n.clone(),
                        levels: l,
                        reverse_coded: rev.get(n.as_str()).copied().unwrap_or(false),
                    })
                    .collect(),
            },
            corners: set.corners().iter().map(|c| c.levels().to_vec()).collect(),
        }
    }

    pub fn grid(&self) -> Result<GridSpec> {
        GridSpec::new(
            self.grid.items.iter().map(|i| i.levels).collect(),
            self.grid.items.iter().map(|i| i.name.clone()).collect(),
        )
    }

    pub fn to_set(&self) -> Result<UpwardClosedSet> {
        let grid = self.grid()?;
        UpwardClosedSet::new(grid, self.corners.iter().map(|c| Profile::new(c.clone())).collect())
    }
}

pub fn write_corners_json(path: &Path, set: &UpwardClosedSet, items: &[ItemSpec]) -> Result<()> {
    let doc = CornersDoc::from_set(set, items);
    let mut s = serde_json::to_string_pretty(&doc)?;
    s.push('\n');
    fs::write(path, s)?;
    Ok(())
}

pub fn read_corners_json(path: &Path) -> Result<UpwardClosedSet> {
    let doc: CornersDoc = serde_json::from_slice(&fs::read(path)?)?;
    doc.to_set()
}

/// One row per corner, one column per item.
pub fn write_corners_csv<W: Write>(set: &UpwardClosedSet, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["corner".to_string()];
    header.extend(set.grid().item_names().iter().cloned());
    w.write_record(&header)?;
    for (k, c) in set.corners().iter().enumerate() {
        let mut rec = vec![(k + 1).to_string()];
        rec.extend(c.levels().iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Parses corners given as `{NAME=level, ...}` strings (unnamed items at 0).
pub fn parse_named_corner(grid: &GridSpec, text: &str) -> Result<Profile> {
    let mut v = vec![0u8; grid.dims()];
    let body = text.trim().trim_start_matches('{').trim_end_matches('}');
    for part in body.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (name, level) = part
            .split_once('=')
            .ok_or_else(|| Error::input(format!("expected NAME=level, got {part:?}")))?;
        let j = grid
            .item_index(name.trim())
            .ok_or_else(|| Error::input(format!("unknown item {name:?}")))?;
        v[j] = level
            .trim()
            .parse()
            .map_err(|_| Error::input(format!("bad level in {part:?}")))?;
    }
    let x = Profile::new(v);
    grid.validate(&x)?;
    Ok(x)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Combination {
    /// Items at a positive level.
    pub items: Vec<String>,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UpsetData {
    pub n: usize,
    pub combinations: Vec<Combination>,
    pub marginals: Vec<(String, usize)>,
}

/// Exact positive-item combinations (after coarsening) by frequency, largest
/// first, truncated to `top`; ties broken by combination order.
pub fn upset_counts(data: &EncodedDataset, top: usize) -> UpsetData {
    let names = data.grid().item_names();
    let mut counts: BTreeMap<Profile, usize> = BTreeMap::new();
    let mut marg = vec![0usize; names.len()];
    for x in data.profiles() {
        let b = coarsen(x);
        for (j, &v) in b.levels().iter().enumerate() {
            marg[j] += v as usize;
        }
        *counts.entry(b).or_default() += 1;
    }
    let mut combos: Vec<(Profile, usize)> = counts.into_iter().collect();
    combos.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    UpsetData {
        n: data.len(),
        combinations: combos
            .into_iter()
            .take(top)
            .map(|(p, count)| Combination {
                items: p
                    .levels()
                    .iter()
                    .zip(names)
                    .filter(|(&v, _)| v > 0)
                    .map(|(_, n)| n.clone())
                    .collect(),
                count,
            })
            .collect(),
        marginals: names.iter().cloned().zip(marg).collect(),
    }
}
