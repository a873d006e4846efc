use std::collections::BTreeMap;
use std::fs;

use anyhow::{bail, Context, Result};
use divide_core::active::{run_loop_with, seed_cells};
use divide_core::benchgen::generate;
use divide_core::dataset::{fmt, Dataset, MechanismKind};
use divide_core::disentangle::{
    anchor_at, anchor_correct, cell_reference, center, cluster_check, default_references, mechanism_response,
    scaling_decompose, Reference, References,
};
use divide_core::ferrosim::{
    a_sweep, build_ferrosim_dataset, c_sweep, loop_area, make_pattern, simulate, to_dataset, FieldWaveform,
    LatticeConfig,
};
use divide_core::stats::{mae, rmse};
use divide_core::trainer::{train, Prediction};
use divide_core::ModelState;
use serde_json::json;

use crate::config::{ActiveCmdConfig, DisentangleConfig, FerrosimConfig, GenBenchConfig, Sweep, TrainCmdConfig};
use crate::manifest::Run;
use crate::output::{heatmap, opt, Table};
use crate::Usage;

const DATASET_FILES: [&str; 3] = ["cells.csv", "patches.bin", "dataset.json"];

fn save_dataset(run: &mut Run, ds: &Dataset) -> Result<()> {
    ds.save(run.dir())?;
    for f in DATASET_FILES {
        run.file(f);
    }
    heatmap(run, "target", ds.rows, ds.cols, &ds.targets)
}

fn load_dataset(cfg_path: &std::path::Path) -> Result<Dataset> {
    Dataset::load(cfg_path).with_context(|| format!("loading dataset from {}", cfg_path.display()))
}

fn write_json(run: &mut Run, name: &str, value: &serde_json::Value) -> Result<()> {
    fs::write(run.file(name), serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

pub fn gen_bench(cfg: &GenBenchConfig, run: &mut Run) -> Result<()> {
    let ds = generate(&cfg.bench()?)?;
    save_dataset(run, &ds)
}

pub fn ferrosim(cfg: &FerrosimConfig, run: &mut Run) -> Result<()> {
    cfg.validate()?;
    let lattice = LatticeConfig { size: cfg.size, ..LatticeConfig::default() };
    lattice.validate()?;
    let wave = FieldWaveform::default();
    let (ks, ps) = (cfg.k_values(), cfg.p_values());
    if matches!(cfg.sweep, Some(Sweep::K | Sweep::Both)) {
        let rows = match cfg.p {
            None => c_sweep(&ks, &wave, &lattice)?,
            Some(p) => ks
                .iter()
                .map(|&k| Ok((k, loop_area(&simulate(&make_pattern(k, p, &lattice)?, &wave, &lattice)?)?)))
                .collect::<divide_core::Result<_>>()?,
        };
        let mut t = Table::new(&["K", "loop_area"]);
        for (k, a) in rows {
            t.row(&[k.to_string(), fmt(a)]);
        }
        t.write(run, "sweep_k.csv")?;
    }
    if matches!(cfg.sweep, Some(Sweep::P | Sweep::Both)) {
        let rows = match cfg.k {
            None => a_sweep(&ps, &wave, &lattice)?,
            Some(k) => ps
                .iter()
                .map(|&p| Ok((p, loop_area(&simulate(&make_pattern(k, p, &lattice)?, &wave, &lattice)?)?)))
                .collect::<divide_core::Result<_>>()?,
        };
        let mut t = Table::new(&["P", "loop_area"]);
        for (p, a) in rows {
            t.row(&[p.to_string(), fmt(a)]);
        }
        t.write(run, "sweep_p.csv")?;
    }
    if cfg.dataset {
        let samples = build_ferrosim_dataset(&ks, &ps, &wave, &lattice)?;
        let ds = to_dataset(&samples, &ks, &ps, cfg.size)?;
        save_dataset(run, &ds)?;
    }
    Ok(())
}

fn write_predictions(run: &mut Run, ds: &Dataset, pred: &Prediction, prefix: &str) -> Result<()> {
    let mut t = Table::new(&["cell", "row", "col", "mean", "sd", "target", "clean"]);
    for c in 0..ds.len() {
        let (r, col) = ds.cell(c);
        t.row(&[
            c.to_string(),
            r.to_string(),
            col.to_string(),
            fmt(pred.mean[c]),
            fmt(pred.sd[c]),
            fmt(ds.targets[c]),
            fmt(ds.clean[c]),
        ]);
    }
    t.write(run, &format!("{prefix}predictions.csv"))?;
    heatmap(run, &format!("{prefix}mean"), ds.rows, ds.cols, &pred.mean)?;
    heatmap(run, &format!("{prefix}sd"), ds.rows, ds.cols, &pred.sd)
}

fn fit_summary(state: &ModelState, ds: &Dataset, pred: &Prediction) -> serde_json::Value {
    json!({
        "labeled": state.labeled.len(),
        "rmse_clean": rmse(&pred.mean, &ds.clean),
        "mae_clean": mae(&pred.mean, &ds.clean),
        "structured_center": state.structured_center(),
        "target_mean": state.target_mean,
        "target_sd": state.target_sd,
    })
}

pub fn train_cmd(cfg: &TrainCmdConfig, run: &mut Run) -> Result<()> {
    let tc = cfg.train()?;
    let ds = load_dataset(&cfg.data)?;
    let labeled = if cfg.labeled >= ds.len() {
        (0..ds.len()).collect()
    } else {
        seed_cells(ds.len(), cfg.labeled, cfg.seed)?
    };
    let out = train::<f64>(&ds, &labeled, &tc)?;
    out.state.save(&run.file("model.ckpt"))?;

    let mut t = Table::new(&["step", "neg_elbo"]);
    for (i, l) in out.losses.iter().enumerate() {
        t.row(&[i.to_string(), fmt(*l)]);
    }
    t.write(run, "loss.csv")?;
    let mut t = Table::new(&["cell", "row", "col", "target"]);
    for &c in &out.state.labeled {
        let (r, col) = ds.cell(c);
        t.row(&[c.to_string(), r.to_string(), col.to_string(), fmt(ds.targets[c])]);
    }
    t.write(run, "labeled.csv")?;

    let all: Vec<usize> = (0..ds.len()).collect();
    let pred = out.state.predict_cells(&ds, &all)?;
    write_predictions(run, &ds, &pred, "")?;
    let mut summary = fit_summary(&out.state, &ds, &pred);
    summary["elbo_init"] = json!(out.elbo_init);
    summary["elbo_final"] = json!(out.elbo_final);
    write_json(run, "summary.json", &summary)
}

pub fn active_cmd(cfg: &ActiveCmdConfig, run: &mut Run) -> Result<()> {
    let (acq, tc) = cfg.configs()?;
    let ds = load_dataset(&cfg.data)?;
    let mut snapshots: Vec<(usize, Prediction)> = Vec::new();
    let every = cfg.snapshot_every;
    let (trace, state) = run_loop_with::<f64, _>(&ds, &acq, &tc, |it, pred| {
        eprintln!("iteration {it}/{}", acq.budget);
        if every > 0 && it % every == 0 {
            snapshots.push((it, pred.clone()));
        }
        Ok(())
    })?;
    state.save(&run.file("model.ckpt"))?;

    let mut t = Table::new(&["iteration", "cell", "row", "col", "score", "sigma", "penalty", "rmse", "mean_sigma"]);
    for e in &trace.entries {
        t.row(&[
            e.iteration.to_string(),
            e.cell.to_string(),
            e.row.to_string(),
            e.col.to_string(),
            opt(e.score),
            opt(e.sigma),
            opt(e.penalty),
            opt(e.rmse),
            opt(e.mean_sigma),
        ]);
    }
    t.write(run, "trace.csv")?;
    for (it, pred) in &snapshots {
        heatmap(run, &format!("mean_{it:04}"), ds.rows, ds.cols, &pred.mean)?;
        heatmap(run, &format!("sd_{it:04}"), ds.rows, ds.cols, &pred.sd)?;
    }

    let all: Vec<usize> = (0..ds.len()).collect();
    let pred = state.predict_cells(&ds, &all)?;
    write_predictions(run, &ds, &pred, "final_")?;
    write_json(run, "summary.json", &fit_summary(&state, &ds, &pred))
}

/// Parses `mechanism@x,y`, `mechanism@cell:N` or `mechanism@ref`.
fn parse_input(ds: &Dataset, refs: &References, spec: &str) -> Result<(String, Reference)> {
    let Some((name, at)) = spec.split_once('@') else {
        bail!(Usage(format!("`{spec}`: expected mechanism@x,y, mechanism@cell:N or mechanism@ref")));
    };
    let (_, mech) = ds.mechanism(name).ok_or_else(|| Usage(format!("unknown mechanism `{name}`")))?;
    let r = if at == "ref" {
        refs.get(name).cloned().ok_or_else(|| Usage(format!("mechanism `{name}` has no reference")))?
    } else if let Some(cell) = at.strip_prefix("cell:") {
        let cell: usize = cell.parse().map_err(|_| Usage(format!("`{spec}`: bad cell index")))?;
        cell_reference(ds, name, cell).map_err(|e| Usage(format!("`{spec}`: {e}")))?
    } else {
        if !matches!(mech.kind, MechanismKind::Coordinates) {
            bail!(Usage(format!("`{spec}`: x,y inputs apply to the coordinate mechanism only")));
        }
        let parsed = at.split_once(',').and_then(|(x, y)| Some((x.trim().parse().ok()?, y.trim().parse().ok()?)));
        let (x, y) = parsed.ok_or_else(|| Usage(format!("`{spec}`: bad coordinates")))?;
        Reference::Coordinates(x, y)
    };
    Ok((name.to_string(), r))
}

pub fn disentangle_cmd(cfg: &DisentangleConfig, run: &mut Run) -> Result<()> {
    if cfg.data.as_os_str().is_empty() || cfg.model.as_os_str().is_empty() {
        bail!(Usage("--data and --model are required".into()));
    }
    let ds = load_dataset(&cfg.data)?;
    let state = ModelState::load(&cfg.model).with_context(|| format!("loading model {}", cfg.model.display()))?;
    let mut refs = default_references(&ds);
    for spec in &cfg.references {
        let (name, r) = parse_input(&ds, &refs, spec)?;
        refs.insert(name, r);
    }
    let all: Vec<usize> = (0..ds.len()).collect();
    let mut responses = ds
        .mechanisms
        .iter()
        .map(|m| mechanism_response(&state, &ds, &m.name, &all, &refs))
        .collect::<divide_core::Result<Vec<_>>>()?;
    center(&mut responses)?;
    if !cfg.anchors.is_empty() {
        let mut anchors = Vec::new();
        for spec in &cfg.anchors {
            let (name, input) = parse_input(&ds, &refs, spec)?;
            let i = responses.iter().position(|r| r.mechanism == name).expect("mechanism exists");
            anchors.push(anchor_at(&state, &ds, &responses[i], &input)?);
        }
        anchor_correct(&mut responses, &anchors)?;
    }

    let mut mechanisms = BTreeMap::new();
    for (m, r) in ds.mechanisms.iter().zip(&responses) {
        let mut t = Table::new(&["cell", "row", "col", "raw", "corrected"]);
        for (i, &c) in r.probe.iter().enumerate() {
            let (row, col) = ds.cell(c);
            t.row(&[c.to_string(), row.to_string(), col.to_string(), fmt(r.values[i] + r.offset), fmt(r.values[i])]);
        }
        t.write(run, &format!("response_{}.csv", m.name))?;
        heatmap(run, &format!("response_{}", m.name), ds.rows, ds.cols, &r.values)?;

        let mut entry = json!({ "offset": r.offset, "delta": r.delta, "reference_value": r.reference_value });
        if let Some(labels) = &m.labels {
            let k = m.categories.len().max(1);
            let cl = cluster_check(&r.values, labels, k, cfg.cluster_seed)?;
            let mut t = Table::new(&["cell", "row", "col", "response", "cluster", "category"]);
            for (i, &c) in r.probe.iter().enumerate() {
                let (row, col) = ds.cell(c);
                let cat = m.categories.get(labels[c] as usize).cloned().unwrap_or_else(|| labels[c].to_string());
                t.row(&[c.to_string(), row.to_string(), col.to_string(), fmt(r.values[i]), cl.labels[i].to_string(), cat]);
            }
            t.write(run, &format!("clusters_{}.csv", m.name))?;
            let mut means = BTreeMap::new();
            for (ci, name) in m.categories.iter().enumerate() {
                let v: Vec<f64> = r.probe.iter().enumerate().filter(|(_, &c)| labels[c] as usize == ci).map(|(i, _)| r.values[i]).collect();
                if !v.is_empty() {
                    means.insert(name.clone(), v.iter().sum::<f64>() / v.len() as f64);
                }
            }
            entry["purity"] = json!(cl.purity);
            entry["cluster_centers"] = json!(cl.centers);
            entry["category_means"] = json!(means);
        }
        mechanisms.insert(m.name.clone(), entry);
    }
    let mut summary = json!({ "mechanisms": mechanisms, "anchored": !cfg.anchors.is_empty() });

    if cfg.scaling {
        if ds.row_values.len() != ds.rows || ds.col_values.len() != ds.cols {
            bail!(Usage("scaling decomposition needs a dataset with row and column axis values".into()));
        }
        let p_star = match cfg.p_star {
            None => None,
            Some(p) => Some(
                ds.col_values.iter().position(|&v| v == p).ok_or_else(|| Usage(format!("P* = {p} is not a column value")))?,
            ),
        };
        let pred = state.predict_cells(&ds, &all)?;
        let dec = scaling_decompose(&pred.mean, &ds.row_values, &ds.col_values, p_star)?;
        let mut t = Table::new(&["K", "A_c", "beta"]);
        for (i, k) in dec.k_values.iter().enumerate() {
            t.row(&[fmt(*k), fmt(dec.a_c[i]), fmt(dec.beta[i])]);
        }
        t.write(run, "scaling_k.csv")?;
        let mut t = Table::new(&["P", "A_a", "alpha"]);
        for (i, p) in dec.p_values.iter().enumerate() {
            t.row(&[fmt(*p), fmt(dec.a_a[i]), fmt(dec.alpha[i])]);
        }
        t.write(run, "scaling_p.csv")?;
        let lo = pred.mean.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = pred.mean.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        summary["scaling"] = json!({
            "p_star": dec.p_star,
            "gauge": dec.gauge,
            "iterations": dec.iterations,
            "residual_rms": dec.residual_rms,
            "residual_max": dec.residual_max,
            "grid_range": hi - lo,
        });
    }
    write_json(run, "summary.json", &summary)
}
