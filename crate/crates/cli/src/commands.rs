use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use iss_core::coding::{
    ace_items, encode_dataset, grid_from_items, Coding, EncodedDataset, ItemSpec, RawTable, OUTCOME_COLUMN,
    PART_COLUMN,
};
use iss_core::dagtest::TierConfig;
use iss_core::io::{
    infer_items, parse_named_corner, read_items_json, read_raw_csv, upset_counts, write_corners_csv, CornersDoc,
};
use iss_core::lattice::{GridSpec, UpwardClosedSet};
use iss_core::metrics::{cutoff_sweep, matched_specificity_compare, write_reports_csv, ScreeningRule};
use iss_core::simulation::{run_experiment, write_results_csv, Cell, DgpConfig, Experiment, Settings, Shape};
use iss_core::turnover::{flag_fraction, run_turnover, DirectionResult, TurnoverConfig, DEFAULT_ALPHA, DEFAULT_TAU};
use iss_core::Error;
use serde_json::json;

use crate::config::{RunConfig, SimulationConfig, TieringConfig};
use crate::manifest::OutputSet;
use crate::{AnalyzeArgs, Common, CornersCountArgs, EvaluateArgs, SimulateArgs, UpsetArgs};

const DEFAULT_OUT_DIR: &str = "iss-out";
const DEFAULT_TOP: usize = 30;

fn merged(common: &Common, flags: RunConfig) -> Result<RunConfig> {
    let file = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let flags = RunConfig {
        out_dir: common.out_dir.clone(),
        threads: common.threads,
        ..flags
    };
    let cfg = flags.or(file);
    if let Some(t) = cfg.threads {
        if t == 0 {
            return Err(Error::Config("threads must be at least 1".into()).into());
        }
        // a pool already built in this process keeps its size
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    Ok(cfg)
}

fn out_dir(cfg: &RunConfig) -> Result<PathBuf> {
    let dir = cfg.out_dir.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR));
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn required(path: &Option<PathBuf>, key: &str) -> Result<PathBuf> {
    path.clone()
        .ok_or_else(|| Error::Config(format!("missing required setting {key} (flag --{key} or config key)")).into())
}

fn read_table(path: &Path) -> Result<RawTable> {
    if !path.exists() {
        return Err(Error::Config(format!("dataset {} not found", path.display())).into());
    }
    Ok(read_raw_csv(path)?)
}

/// Item specs from a file, the exposure preset when every preset column is
/// present, or integer levels inferred from the data.
fn resolve_items(raw: &RawTable, items: Option<&Path>) -> Result<Vec<ItemSpec>> {
    if let Some(p) = items {
        return Ok(read_items_json(p)?);
    }
    let ace = ace_items();
    if ace.iter().all(|i| raw.column(&i.name).is_some()) {
        return Ok(ace);
    }
    Ok(infer_items(raw, &[OUTCOME_COLUMN, PART_COLUMN])?)
}

fn set_summary(set: &UpwardClosedSet, data: &EncodedDataset) -> Result<serde_json::Value> {
    let (flagged, frac) = flag_fraction(set, data)?;
    Ok(json!({
        "corners": set.corners().len(),
        "closure_count": set.count(),
        "grid_size": set.grid().size(),
        "coverage_pct": 100.0 * set.fraction(),
        "flagged_rows": flagged,
        "flagged_fraction": frac,
    }))
}

fn direction_summary(d: &DirectionResult, data: &EncodedDataset) -> Result<serde_json::Value> {
    let mut v = set_summary(&d.selection, data)?;
    let m = v.as_object_mut().expect("object");
    m.insert("coding".into(), json!(d.coding.to_string()));
    m.insert("alpha".into(), json!(d.alpha));
    m.insert("tested".into(), json!(d.screened.tested));
    m.insert("candidates".into(), json!(d.screened.profiles.len()));
    m.insert("rejected".into(), json!(d.rejected_count()));
    m.insert("rounds".into(), json!(d.rejection.rounds.len()));
    Ok(v)
}

fn write_corner_files(out: &mut OutputSet, dir: &Path, stem: &str, set: &UpwardClosedSet, items: &[ItemSpec]) -> Result<()> {
    out.write_json(dir, &format!("{stem}_corners.json"), &CornersDoc::from_set(set, items))?;
    let mut buf = Vec::new();
    write_corners_csv(set, &mut buf)?;
    out.write(dir, &format!("{stem}_corners.csv"), &buf)
}

pub fn analyze(args: &AnalyzeArgs) -> Result<()> {
    let flags = RunConfig {
        data: args.data.clone(),
        items: args.items.clone(),
        tau: args.tau,
        alpha: args.alpha,
        kappa: args.kappa,
        parent_rule: args.parent_rule,
        coding_red_to_blue: args.coding_red_to_blue,
        coding_blue_to_red: args.coding_blue_to_red,
        ordering: args.ordering,
        seed: args.seed,
        tiering: args.tiering.then(|| TieringConfig {
            enabled: true,
            ..Default::default()
        }),
        ..Default::default()
    };
    let mut cfg = merged(&args.common, flags)?;
    let data_path = required(&cfg.data, "data")?;
    let alpha = cfg.alpha.unwrap_or(DEFAULT_ALPHA);
    cfg.alpha = Some(alpha);
    cfg.tau = Some(cfg.tau.unwrap_or(DEFAULT_TAU));
    cfg.kappa = Some(cfg.kappa.unwrap_or(alpha / 2.0));
    cfg.parent_rule = Some(cfg.parent_rule.unwrap_or_default());
    cfg.coding_red_to_blue = Some(cfg.coding_red_to_blue.unwrap_or(Coding::Binary));
    cfg.coding_blue_to_red = Some(cfg.coding_blue_to_red.unwrap_or(Coding::Frequency));
    cfg.ordering = Some(cfg.ordering.unwrap_or_default());
    cfg.seed = Some(cfg.seed.unwrap_or(0));
    let dir = out_dir(&cfg)?;
    cfg.out_dir = Some(dir.clone());

    let raw = read_table(&data_path)?;
    if raw.column(PART_COLUMN).is_none() {
        return Err(Error::Config(format!("dataset has no {PART_COLUMN} column")).into());
    }
    let items = resolve_items(&raw, cfg.items.as_deref())?;
    let table = encode_dataset(&raw, &items, Coding::Frequency)?;
    let part = |label: &str| -> Result<EncodedDataset> {
        let d = table.part(label).expect("part column present");
        if d.is_empty() {
            return Err(Error::Config(format!("no complete rows with {PART_COLUMN} = {label}")).into());
        }
        Ok(d)
    };
    let red = part("red")?;
    let blue = part("blue")?;

    let mut tc = TurnoverConfig::with_alpha(alpha);
    tc.tau = cfg.tau.expect("set");
    tc.kappa = cfg.kappa.expect("set");
    tc.parent_rule = cfg.parent_rule.expect("set");
    tc.coding_red_to_blue = cfg.coding_red_to_blue.expect("set");
    tc.coding_blue_to_red = cfg.coding_blue_to_red.expect("set");
    tc.ordering = cfg.ordering.expect("set");
    tc.seed = cfg.seed.expect("set");
    if let Some(t) = cfg.tiering.as_mut().filter(|t| t.enabled) {
        let preset = TierConfig::ace_preset();
        let mut tiers = match &t.item_tiers {
            Some(m) => TierConfig::new(m.clone()),
            None if items.iter().all(|i| preset.item_tiers.contains_key(&i.name)) => preset,
            None => TierConfig::from_marginal_ranking(&blue.coarsened(), 3.min(items.len()))?,
        };
        if let Some(w) = &t.tier_weights {
            tiers.tier_weights = w.clone();
        }
        t.item_tiers = Some(tiers.item_tiers.clone());
        tc.tiering = Some(tiers);
    }
    tc.validate()?;
    let res = run_turnover(&red, &blue, &tc)?;

    let full = &table.dataset;
    let mut out = OutputSet::default();
    write_corner_files(&mut out, &dir, "replicable", &res.replicable, &items)?;
    write_corner_files(&mut out, &dir, "global", &res.global, &items)?;
    write_corner_files(&mut out, &dir, "red_to_blue", &res.red_to_blue.selection, &items)?;
    write_corner_files(&mut out, &dir, "blue_to_red", &res.blue_to_red.selection, &items)?;
    let summary = json!({
        "rows": full.len(),
        "dropped_rows": table.dropped_rows.len(),
        "red_rows": red.len(),
        "blue_rows": blue.len(),
        "replicable": set_summary(&res.replicable, full)?,
        "global": set_summary(&res.global, full)?,
        "red_to_blue": direction_summary(&res.red_to_blue, full)?,
        "blue_to_red": direction_summary(&res.blue_to_red, full)?,
    });
    out.write_json(&dir, "summary.json", &summary)?;

    let mut inputs: Vec<&Path> = vec![&data_path];
    if let Some(p) = cfg.items.as_deref() {
        inputs.push(p);
    }
    let echo = RunConfig { threads: None, ..cfg.clone() };
    out.finish(&dir, "analyze", &echo, &inputs, summary)?;
    println!(
        "replicable: {} corners covering {} profiles; global: {} corners covering {} profiles; outputs in {}",
        res.replicable.corners().len(),
        res.replicable.count(),
        res.global.corners().len(),
        res.global.count(),
        dir.display()
    );
    Ok(())
}

pub fn simulate(args: &SimulateArgs) -> Result<()> {
    let flags = RunConfig {
        alpha: args.alpha,
        ordering: args.ordering,
        simulation: Some(SimulationConfig {
            mode: args.mode,
            n: args.n.clone(),
            target_mass: args.target_mass.clone(),
            shape: args.shape.clone(),
            replications: args.replications,
            seed0: args.seed0,
            ..Default::default()
        }),
        ..Default::default()
    };
    let mut cfg = merged(&args.common, flags)?;
    let defaults = Settings::default();
    let mut sim = cfg.simulation.clone().unwrap_or_default();
    let mode = *sim.mode.get_or_insert(Experiment::Part1);
    let ns = sim.n.get_or_insert_with(|| vec![10_000]).clone();
    let targets = sim.target_mass.get_or_insert_with(|| vec![0.5]).clone();
    let shapes = sim.shape.get_or_insert_with(|| vec![Shape::MainEffects]).clone();
    let settings = Settings {
        replications: *sim.replications.get_or_insert(defaults.replications),
        seed0: *sim.seed0.get_or_insert(defaults.seed0),
        alpha: *cfg.alpha.get_or_insert(defaults.alpha),
        ordering: *cfg.ordering.get_or_insert(defaults.ordering),
    };
    if settings.replications == 0 {
        return Err(Error::Config("replications must be at least 1".into()).into());
    }
    if ns.is_empty() || targets.is_empty() || shapes.is_empty() {
        return Err(Error::Config("n, target_mass and shape need at least one value each".into()).into());
    }
    let mut base = DgpConfig::ace_default(shapes[0], targets[0]);
    if let Some(b) = &sim.beta {
        base.beta = b.clone();
    }
    if let Some(g) = sim.gamma {
        base.gamma = g;
    }
    if let Some(m) = &sim.marginals {
        base.marginals = m.clone();
    }
    base.validate()?;
    cfg.simulation = Some(sim);
    let dir = out_dir(&cfg)?;
    cfg.out_dir = Some(dir.clone());

    let mut cells = Vec::new();
    for &n in &ns {
        for &target_mass in &targets {
            for &shape in &shapes {
                cells.push(Cell { n, target_mass, shape });
            }
        }
    }
    let rows = run_experiment(mode, &base, &cells, &settings)?;
    let mut buf = Vec::new();
    write_results_csv(&rows, &mut buf)?;
    let name = format!("results_{}.csv", mode_name(mode));
    let mut out = OutputSet::default();
    out.write(&dir, &name, &buf)?;
    let echo = RunConfig { threads: None, ..cfg.clone() };
    out.finish(
        &dir,
        "simulate",
        &echo,
        &[],
        json!({ "cells": cells.len(), "rows": rows.len(), "results": name }),
    )?;
    println!("{} rows for {} cells written to {}", rows.len(), cells.len(), dir.join(&name).display());
    Ok(())
}

fn mode_name(m: Experiment) -> &'static str {
    match m {
        Experiment::Part1 => "part1",
        Experiment::Part2 => "part2",
        Experiment::Tiering => "tiering",
    }
}

/// Items for evaluating `doc` against a dataset: an item file, the preset,
/// or levels inferred from the named columns.
fn evaluation_items(raw: &RawTable, doc: &CornersDoc, items: Option<&Path>) -> Result<Vec<ItemSpec>> {
    if let Some(p) = items {
        return Ok(read_items_json(p)?);
    }
    let names: Vec<&str> = doc.grid.items.iter().map(|i| i.name.as_str()).collect();
    let ace = ace_items();
    if names.iter().all(|n| ace.iter().any(|i| i.name == *n)) {
        return Ok(names
            .iter()
            .map(|n| ace.iter().find(|i| i.name == *n).expect("checked").clone())
            .collect());
    }
    let skip: Vec<&str> = raw
        .header
        .iter()
        .map(String::as_str)
        .filter(|h| !names.contains(h))
        .collect();
    let inferred = infer_items(raw, &skip)?;
    let mut out = Vec::with_capacity(names.len());
    for (n, gi) in names.iter().zip(&doc.grid.items) {
        let mut it = inferred
            .iter()
            .find(|i| i.name == *n)
            .cloned()
            .ok_or_else(|| Error::Config(format!("dataset has no column {n} named in the corners file")))?;
        it.n_levels = it.n_levels.max(gi.levels);
        it.reverse_coded = gi.reverse_coded;
        out.push(it);
    }
    Ok(out)
}

fn check_grids(sel: &GridSpec, data: &GridSpec) -> Result<()> {
    let binary = sel.levels().iter().all(|&l| l == 2);
    if sel.item_names() != data.item_names() || !(sel == data || binary) {
        return Err(Error::Config(format!(
            "corners grid {:?} with levels {:?} does not match dataset items {:?} with levels {:?}",
            sel.item_names(),
            sel.levels(),
            data.item_names(),
            data.levels()
        ))
        .into());
    }
    Ok(())
}

pub fn evaluate(args: &EvaluateArgs) -> Result<()> {
    let flags = RunConfig {
        data: args.data.clone(),
        items: args.items.clone(),
        corners: args.corners.clone(),
        cutoffs: args.cutoffs.clone(),
        ..Default::default()
    };
    let mut cfg = merged(&args.common, flags)?;
    let data_path = required(&cfg.data, "data")?;
    let corners_path = required(&cfg.corners, "corners")?;
    let dir = out_dir(&cfg)?;
    cfg.out_dir = Some(dir.clone());

    let doc: CornersDoc = serde_json::from_slice(
        &fs::read(&corners_path).with_context(|| format!("reading {}", corners_path.display()))?,
    )
    .map_err(Error::from)?;
    let selection = doc.to_set()?;
    let raw = read_table(&data_path)?;
    let items = evaluation_items(&raw, &doc, cfg.items.as_deref())?;
    let data = encode_dataset(&raw, &items, Coding::Frequency)?.dataset;
    check_grids(selection.grid(), data.grid())?;
    let dims = data.grid().dims() as u8;
    let ks = cfg.cutoffs.get_or_insert_with(|| (1..=dims.min(9)).collect()).clone();

    let rule = ScreeningRule::Subgroup {
        label: "Subgroup rule".into(),
        selection,
    };
    let reports = cutoff_sweep(&data, &ks, Some(&rule))?;
    let (sub, cuts) = reports.split_last().expect("subgroup report present");
    let cmp = matched_specificity_compare(sub, cuts)?;

    let mut out = OutputSet::default();
    let mut buf = Vec::new();
    write_reports_csv(&reports, &mut buf)?;
    out.write(&dir, "report.csv", &buf)?;
    out.write_json(&dir, "comparison.json", &cmp)?;
    let mut inputs: Vec<&Path> = vec![&data_path, &corners_path];
    if let Some(p) = cfg.items.as_deref() {
        inputs.push(p);
    }
    let echo = RunConfig { threads: None, ..cfg.clone() };
    out.finish(&dir, "evaluate", &echo, &inputs, serde_json::to_value(&cmp)?)?;
    println!(
        "subgroup sensitivity {:.4} vs {} {:.4} at specificity {:.4} / {:.4}",
        cmp.subgroup_sensitivity, cmp.cutoff, cmp.cutoff_sensitivity, cmp.subgroup_specificity, cmp.cutoff_specificity
    );
    Ok(())
}

pub fn upset_data(args: &UpsetArgs) -> Result<()> {
    let flags = RunConfig {
        data: args.data.clone(),
        items: args.items.clone(),
        top: args.top,
        ..Default::default()
    };
    let mut cfg = merged(&args.common, flags)?;
    let data_path = required(&cfg.data, "data")?;
    let top = *cfg.top.get_or_insert(DEFAULT_TOP);
    let dir = out_dir(&cfg)?;
    cfg.out_dir = Some(dir.clone());
    let raw = read_table(&data_path)?;
    let items = resolve_items(&raw, cfg.items.as_deref())?;
    let data = encode_dataset(&raw, &items, Coding::Frequency)?.dataset;
    let counts = upset_counts(&data, top);
    let mut out = OutputSet::default();
    out.write_json(&dir, "upset.json", &counts)?;
    let mut inputs: Vec<&Path> = vec![&data_path];
    if let Some(p) = cfg.items.as_deref() {
        inputs.push(p);
    }
    let echo = RunConfig { threads: None, ..cfg.clone() };
    out.finish(
        &dir,
        "upset-data",
        &echo,
        &inputs,
        json!({ "n": counts.n, "combinations": counts.combinations.len() }),
    )?;
    println!("{} combinations from {} rows", counts.combinations.len(), counts.n);
    Ok(())
}

fn preset_grid(name: &str) -> Result<GridSpec> {
    let freq = grid_from_items(&ace_items())?;
    match name {
        "ace-frequency" => Ok(freq),
        "ace-binary" => Ok(iss_core::coding::coarsen_grid(&freq)),
        other => Err(Error::Config(format!("unknown grid {other:?}; expected ace-binary or ace-frequency")).into()),
    }
}

pub fn corners_count(args: &CornersCountArgs) -> Result<()> {
    let cfg = merged(&args.common, RunConfig::default())?;
    let (set, items) = match (&args.corners, &args.grid) {
        (Some(p), _) => {
            let doc: CornersDoc = serde_json::from_slice(&fs::read(p)?).map_err(Error::from)?;
            let items: Vec<ItemSpec> = doc
                .grid
                .items
                .iter()
                .map(|i| ItemSpec {
                    reverse_coded: i.reverse_coded,
                    ..ItemSpec::new(i.name.clone(), i.levels)
                })
                .collect();
            (doc.to_set()?, items)
        }
        (None, Some(g)) => {
            let grid = preset_grid(g)?;
            let corners = args
                .corner
                .iter()
                .map(|c| parse_named_corner(&grid, c))
                .collect::<iss_core::Result<Vec<_>>>()?;
            (UpwardClosedSet::new(grid, corners)?, ace_items())
        }
        (None, None) => return Err(Error::Config("give --corners FILE or --grid with --corner".into()).into()),
    };
    let mut report = json!({
        "corners": set.corners().len(),
        "grid_size": set.grid().size(),
        "closure_count": set.count(),
        "fraction": set.fraction(),
    });
    if args.lift {
        if !set.grid().levels().iter().all(|&l| l == 2) {
            return Err(Error::Config("--lift needs a binary corner set".into()).into());
        }
        let ace = ace_items();
        let freq_items: Vec<ItemSpec> = set
            .grid()
            .item_names()
            .iter()
            .map(|n| {
                ace.iter()
                    .find(|i| &i.name == n)
                    .cloned()
                    .ok_or_else(|| Error::Config(format!("no frequency levels known for item {n}")))
            })
            .collect::<std::result::Result<_, _>>()?;
        let lifted = set.embed_into(&grid_from_items(&freq_items)?)?;
        report["lifted"] = json!({
            "grid_size": lifted.grid().size(),
            "closure_count": lifted.count(),
            "fraction": lifted.fraction(),
        });
    }
    println!("{}", serde_json::to_string_pretty(&report)?);
    if let Some(d) = &cfg.out_dir {
        fs::create_dir_all(d)?;
        let mut out = OutputSet::default();
        out.write_json(d, "counts.json", &report)?;
        if args.grid.is_some() {
            out.write_json(d, "corners.json", &CornersDoc::from_set(&set, &items))?;
        }
        let inputs: Vec<&Path> = args.corners.iter().map(PathBuf::as_path).collect();
        let echo = RunConfig {
            corners: args.corners.clone(),
            threads: None,
            ..cfg.clone()
        };
        out.finish(d, "corners-count", &echo, &inputs, report)?;
    }
    Ok(())
}
