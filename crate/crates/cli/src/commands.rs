use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use fairgm::disparity::{disparity_report, DisparityReport};
use fairgm::experiment::{pooled_objective, run_cells, Cell, Scenario, Suite};
use fairgm::metrics::{
    compare_runs, pcee_gap_report, EvalReport, PceeGapReport, PceeVariant, RunSummary,
};
use fairgm::{
    fit_locals, fit_standard, group_stats, validate_dataset, FitConfig, GraphEstimate, IstaStop,
    Mat, Model, ModelKind, PenaltyKind,
};

use crate::error::CliError;
use crate::io;
use crate::output::{sha256_file, write_json, RunManifest, SCHEMA_VERSION};
use crate::{
    BenchmarkArgs, EvaluateArgs, FitArgs, PenaltyArg, SimKind, SimulateArgs, SolverArgs, StopArg,
    ValidateTraceArgs,
};

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::input(format!("{}: {e}", dir.display())))
}

fn check_input(path: &Path) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::input(format!("{}: no such file", path.display())))
    }
}

// ---------------------------------------------------------------- simulate

#[derive(Serialize)]
struct TruthInfo {
    schema_version: u32,
    scenario: Scenario,
    seed: u64,
    /// Blocks reset or hubs removed, per group.
    altered: Vec<Vec<usize>>,
    files: Vec<String>,
}

pub fn simulate(a: &SimulateArgs, dry_run: bool) -> Result<(), CliError> {
    let k = a.k.unwrap_or(a.n.len());
    let sizes = match a.n.len() {
        1 => vec![a.n[0]; k],
        len if len == k => a.n.clone(),
        len => {
            return Err(CliError::input(format!(
                "--n lists {len} sizes but --k is {k}"
            )))
        }
    };
    let scenario = match a.kind {
        SimKind::Gaussian => Scenario::Gaussian {
            p: a.p,
            q: a.q,
            resets: a.resets,
            sizes,
        },
        SimKind::Ising => Scenario::Ising {
            p: a.p,
            hubs: a.hubs,
            removals: a.removals,
            sizes,
            burn_in: a.burn_in,
            thinning: a.thinning,
        },
    };
    scenario.validate()?;
    let mut manifest = RunManifest::new("simulate", dry_run);
    manifest.seed = Some(a.seed);
    manifest.config(&scenario)?;
    create_dir(&a.out)?;
    if dry_run {
        return manifest.write(&a.out);
    }

    let t0 = Instant::now();
    let (truth, ds) = scenario.generate(a.seed)?;
    manifest.time("generate", t0.elapsed().as_secs_f64());

    let mut files = Vec::new();
    let data_path = a.out.join("data.csv");
    io::write_data(&data_path, &ds, &a.group_col)?;
    files.push(data_path);
    for (k, m) in truth.matrices.iter().enumerate() {
        match a.kind {
            SimKind::Gaussian => {
                let sp = a.out.join(format!("sigma_{}.csv", k + 1));
                io::write_matrix(&sp, m)?;
                files.push(sp);
                let tp = a.out.join(format!("theta_{}.csv", k + 1));
                io::write_matrix(&tp, &fairgm::linalg::SpdFactor::new(m)?.inverse())?;
                files.push(tp);
            }
            SimKind::Ising => {
                let tp = a.out.join(format!("theta_{}.csv", k + 1));
                io::write_matrix(&tp, m)?;
                files.push(tp);
            }
        }
    }
    let info_path = a.out.join("truth.json");
    write_json(
        &info_path,
        &TruthInfo {
            schema_version: SCHEMA_VERSION,
            scenario,
            seed: a.seed,
            altered: truth.altered.clone(),
            files: files
                .iter()
                .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
                .collect(),
        },
    )?;
    files.push(info_path);
    for f in &files {
        manifest.output(f)?;
    }
    manifest.write(&a.out)
}

// --------------------------------------------------------------------- fit

fn build_config(s: &SolverArgs) -> Result<FitConfig, CliError> {
    let mut cfg = match &s.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| CliError::input(format!("{}: {e}", path.display())))?
        }
        None => FitConfig::default(),
    };
    macro_rules! set {
        ($($field:ident),*) => {
            $(if let Some(v) = s.$field { cfg.$field = v; })*
        };
    }
    set!(lambda, tau, eps, max_iter, ell0, ell_growth, ell_decay, seed);
    if let Some(g) = s.gamma {
        cfg.gamma = Some(g);
    }
    if let Some(p) = s.penalty {
        cfg.penalty = match p {
            PenaltyArg::Square => PenaltyKind::Square,
            PenaltyArg::Exp => PenaltyKind::Exp,
        };
    }
    if let Some(st) = s.ista_stop {
        cfg.ista_stop = match st {
            StopArg::GradientMap => IstaStop::GradientMap,
            StopArg::RawGradient => IstaStop::RawGradient,
        };
    }
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Serialize, Deserialize)]
struct GroupInfo {
    label: String,
    n: usize,
}

/// Contents of a fit's report.json.
#[derive(Serialize, Deserialize)]
struct FitReport {
    schema_version: u32,
    model: ModelKind,
    mode: String,
    config: FitConfig,
    data_sha256: String,
    standardized: bool,
    n_rows: usize,
    n_features: usize,
    features: Vec<String>,
    groups: Vec<GroupInfo>,
    converged: bool,
    not_converged: bool,
    stalled: bool,
    iterations: usize,
    is_pd: bool,
    final_ell: f64,
    infeasible_trials: usize,
    /// Penalized pooled objective.
    f1: f64,
    delta_total: Option<f64>,
    disparity: Option<DisparityReport>,
    locals_converged: Vec<bool>,
    gamma: Option<f64>,
    /// Group whose local solution started the fair iteration.
    init_group: Option<String>,
    runtime_secs: f64,
    runtime_locals_secs: f64,
}

pub fn fit(a: &FitArgs, dry_run: bool) -> Result<(), CliError> {
    let cfg = build_config(&a.solver)?;
    let kind: ModelKind = a.model.into();
    let mut manifest = RunManifest::new("fit", dry_run);
    manifest.seed = Some(cfg.seed);
    manifest.config(&cfg)?;
    check_input(&a.data)?;
    manifest.input(&a.data)?;
    if let Some(c) = &a.solver.config {
        manifest.input(c)?;
    }

    let mut raw = io::read_data(&a.data, &a.group_col)?;
    if a.standardize {
        if kind == ModelKind::BinNet {
            return Err(CliError::input("--standardize would destroy binary data"));
        }
        io::standardize(&mut raw.values)?;
    }
    let ds = validate_dataset(raw.values.clone(), &raw.labels, kind == ModelKind::BinNet)?;
    create_dir(&a.out)?;
    if dry_run {
        return manifest.write(&a.out);
    }

    let model = Model::new(kind, cfg.tau);
    let stats = group_stats(&ds);
    let k = stats.n_groups();

    let t0 = Instant::now();
    let (estimate, local, gamma, init_group, runtime_locals) = if a.mode.fair {
        let tl = Instant::now();
        let local = fit_locals(&model, &stats, &cfg)?;
        let runtime_locals = tl.elapsed().as_secs_f64();
        let fit = fairgm::moo::fit_fair_with_locals(&model, &stats, local, &cfg)?;
        let init = (k >= 2).then(|| ds.labels()[fit.init_group].clone());
        (
            fit.estimate,
            Some(fit.local),
            (k >= 2).then_some(fit.gamma),
            init,
            runtime_locals,
        )
    } else {
        let est = fit_standard(&model, &stats, &cfg)?;
        let tl = Instant::now();
        // Local solutions are only needed to report the disparity of the pooled estimate.
        let local = if k >= 2 {
            Some(fit_locals(&model, &stats, &cfg)?)
        } else {
            None
        };
        (est, local, None, None, tl.elapsed().as_secs_f64())
    };
    let runtime = t0.elapsed().as_secs_f64() - if a.mode.fair { 0.0 } else { runtime_locals };
    manifest.time("fit", runtime);
    manifest.time("locals", runtime_locals);

    let disparity = match (&local, k >= 2) {
        (Some(l), true) => Some(disparity_report(
            &model,
            &estimate.matrix,
            cfg.penalty,
            &stats,
            l,
        )?),
        _ => None,
    };
    if estimate.stalled {
        eprintln!(
            "warning: stalled at working precision after {} iterations (final inverse step {:e})",
            estimate.iterations, estimate.final_ell
        );
    } else if !estimate.converged {
        eprintln!(
            "warning: not converged after {} iterations (final inverse step {:e})",
            estimate.iterations, estimate.final_ell
        );
    }

    let report = FitReport {
        schema_version: SCHEMA_VERSION,
        model: kind,
        mode: if a.mode.fair { "fair" } else { "standard" }.into(),
        config: cfg.clone(),
        data_sha256: sha256_file(&a.data)?,
        standardized: a.standardize,
        n_rows: ds.n_rows(),
        n_features: ds.n_features(),
        features: raw.features.clone(),
        groups: ds
            .labels()
            .iter()
            .zip(ds.group_sizes())
            .map(|(l, &n)| GroupInfo {
                label: l.clone(),
                n,
            })
            .collect(),
        converged: estimate.converged,
        not_converged: !estimate.converged,
        stalled: estimate.stalled,
        iterations: estimate.iterations,
        is_pd: estimate.is_pd,
        final_ell: estimate.final_ell,
        infeasible_trials: estimate.infeasible_trials,
        f1: pooled_objective(&model, &estimate.matrix, &stats, cfg.lambda)?,
        delta_total: disparity.as_ref().map(|d| d.total),
        disparity,
        locals_converged: local
            .as_ref()
            .map(|l| l.converged.clone())
            .unwrap_or_default(),
        gamma,
        init_group,
        runtime_secs: runtime,
        runtime_locals_secs: runtime_locals,
    };
    write_fit_outputs(
        &a.out,
        &estimate,
        local.as_ref().map(|l| l.thetas.as_slice()),
        &report,
        &mut manifest,
    )?;
    manifest.write(&a.out)
}

fn write_fit_outputs(
    out: &Path,
    estimate: &GraphEstimate,
    locals: Option<&[Mat]>,
    report: &FitReport,
    manifest: &mut RunManifest,
) -> Result<(), CliError> {
    let mut files = vec![
        out.join("theta_hat.csv"),
        out.join("adjacency.csv"),
        out.join("trace.csv"),
    ];
    io::write_matrix(&files[0], &estimate.matrix)?;
    io::write_matrix(&files[1], &io::adjacency(&estimate.matrix))?;
    io::write_trace(&files[2], estimate)?;
    if let Some(thetas) = locals {
        let dir = out.join("locals");
        create_dir(&dir)?;
        for (k, t) in thetas.iter().enumerate() {
            let p = dir.join(format!("theta_{}.csv", k + 1));
            io::write_matrix(&p, t)?;
            files.push(p);
        }
    }
    let rp = out.join("report.json");
    write_json(&rp, report)?;
    files.push(rp);
    for f in &files {
        manifest.output(f)?;
    }
    Ok(())
}

// ---------------------------------------------------------------- evaluate

struct LoadedRun {
    matrix: Mat,
    report: Option<FitReport>,
}

fn load_run(path: &Path, manifest: &mut RunManifest) -> Result<LoadedRun, CliError> {
    if path.is_dir() {
        let mp = path.join("theta_hat.csv");
        let rp = path.join("report.json");
        check_input(&mp)?;
        check_input(&rp)?;
        manifest.input(&mp)?;
        manifest.input(&rp)?;
        let text = fs::read_to_string(&rp)?;
        let report: FitReport = serde_json::from_str(&text)
            .map_err(|e| CliError::input(format!("{}: {e}", rp.display())))?;
        Ok(LoadedRun {
            matrix: io::read_matrix(&mp)?,
            report: Some(report),
        })
    } else {
        check_input(path)?;
        manifest.input(path)?;
        Ok(LoadedRun {
            matrix: io::read_matrix(path)?,
            report: None,
        })
    }
}

#[derive(Serialize)]
struct RunEntry {
    name: String,
    source: PathBuf,
    f1: Option<f64>,
    delta_total: Option<f64>,
    runtime_secs: Option<f64>,
    converged: Option<bool>,
    pcee: Option<PceeGapReport>,
}

#[derive(Serialize)]
struct EvaluateReport {
    schema_version: u32,
    lambda: Option<f64>,
    pcee_variant: PceeVariant,
    runs: Vec<RunEntry>,
    comparison: Option<EvalReport>,
    warnings: Vec<String>,
}

pub fn evaluate(a: &EvaluateArgs, dry_run: bool) -> Result<(), CliError> {
    let mut manifest = RunManifest::new("evaluate", dry_run);
    let named: Vec<(&str, &PathBuf)> =
        [("standard", a.standard.as_ref()), ("fair", a.fair.as_ref())]
            .into_iter()
            .filter_map(|(n, p)| p.map(|p| (n, p)))
            .collect();
    if named.is_empty() {
        return Err(CliError::input("give --standard and/or --fair"));
    }
    let mut runs = Vec::new();
    for (name, path) in &named {
        runs.push((*name, (*path).clone(), load_run(path, &mut manifest)?));
    }
    let mut truths = Vec::new();
    for t in &a.truth {
        check_input(t)?;
        manifest.input(t)?;
        truths.push(io::read_matrix(t)?);
    }
    let p = runs[0].2.matrix.nrows();
    if runs.iter().any(|r| r.2.matrix.nrows() != p) || truths.iter().any(|t| t.nrows() != p) {
        return Err(CliError::input(
            "estimates and truths must all have the same dimension",
        ));
    }
    let lambda = a.lambda.or_else(|| {
        runs.iter()
            .find_map(|r| r.2.report.as_ref().map(|x| x.config.lambda))
    });
    if !truths.is_empty() && lambda.is_none() {
        return Err(CliError::input(
            "--lambda is required when scoring bare matrices against truth",
        ));
    }
    let variant: PceeVariant = a.pcee.into();
    manifest.config(&serde_json::json!({ "lambda": lambda, "pcee": variant }))?;
    create_dir(&a.out)?;
    if dry_run {
        return manifest.write(&a.out);
    }

    let mut warnings = Vec::new();
    let shas: Vec<&str> = runs
        .iter()
        .filter_map(|r| r.2.report.as_ref().map(|x| x.data_sha256.as_str()))
        .collect();
    if shas.windows(2).any(|w| w[0] != w[1]) {
        warnings.push("the two fits were run on different data files".to_string());
    }
    if variant == PceeVariant::Literal {
        warnings.push("literal PCEE never counts negative estimated entries as edges".to_string());
    }

    let mut entries = Vec::new();
    for (name, source, run) in &runs {
        let pcee = if truths.is_empty() {
            None
        } else {
            Some(pcee_gap_report(
                &run.matrix,
                &truths,
                lambda.unwrap(),
                variant,
            )?)
        };
        entries.push(RunEntry {
            name: name.to_string(),
            source: source.clone(),
            f1: run.report.as_ref().map(|r| r.f1),
            delta_total: run.report.as_ref().and_then(|r| r.delta_total),
            runtime_secs: run.report.as_ref().map(|r| r.runtime_secs),
            converged: run.report.as_ref().map(|r| r.converged),
            pcee,
        });
    }
    let summary = |e: &RunEntry| -> Option<RunSummary> {
        Some(RunSummary {
            f1: e.f1?,
            delta_total: e.delta_total?,
            runtime_secs: e.runtime_secs?,
            pcee: e.pcee.clone(),
        })
    };
    let comparison = match entries.as_slice() {
        [s, f] => match (summary(s), summary(f)) {
            (Some(s), Some(f)) => Some(compare_runs(&s, &f)),
            _ => None,
        },
        _ => None,
    };

    let report = EvaluateReport {
        schema_version: SCHEMA_VERSION,
        lambda,
        pcee_variant: variant,
        runs: entries,
        comparison,
        warnings,
    };
    let jp = a.out.join("evaluation.json");
    write_json(&jp, &report)?;
    let cp = a.out.join("evaluation.csv");
    write_evaluation_csv(&cp, &report)?;
    manifest.output(&jp)?;
    manifest.output(&cp)?;
    manifest.write(&a.out)
}

fn opt(v: Option<f64>) -> String {
    v.map(io::fmt_num).unwrap_or_default()
}

fn write_evaluation_csv(path: &Path, r: &EvaluateReport) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(CliError::io)?;
    let with_pcee = r.runs.iter().any(|e| e.pcee.is_some());
    let groups = r
        .runs
        .iter()
        .filter_map(|e| e.pcee.as_ref().map(|p| p.per_group.len()))
        .max()
        .unwrap_or(0);
    let mut header: Vec<String> = ["run", "f1", "delta", "runtime_secs"]
        .map(String::from)
        .to_vec();
    if with_pcee {
        header.extend((1..=groups).map(|k| format!("pcee_{k}")));
        header.push("pcee_gap".into());
    }
    w.write_record(&header).map_err(CliError::io)?;
    for e in &r.runs {
        let mut rec = vec![
            e.name.clone(),
            opt(e.f1),
            opt(e.delta_total),
            opt(e.runtime_secs),
        ];
        if with_pcee {
            let p = e.pcee.as_ref();
            rec.extend(
                (0..groups).map(|k| opt(p.and_then(|p| p.per_group.get(k).copied().flatten()))),
            );
            rec.push(opt(p.and_then(|p| p.gap)));
        }
        w.write_record(&rec).map_err(CliError::io)?;
    }
    if let Some(c) = &r.comparison {
        let mut rec = vec![
            "pct_change".to_string(),
            opt(c.pct_f1),
            opt(c.pct_delta),
            String::new(),
        ];
        if with_pcee {
            rec.extend((0..=groups).map(|_| String::new()));
        }
        w.write_record(&rec).map_err(CliError::io)?;
    }
    w.flush().map_err(CliError::io)?;
    Ok(())
}

// --------------------------------------------------------------- benchmark

fn parse_list(s: &str) -> Result<Vec<f64>, CliError> {
    if let Some((a, b)) = s.split_once("..") {
        let a: i64 = a
            .trim()
            .parse()
            .map_err(|_| CliError::input(format!("bad range '{s}'")))?;
        let b: i64 = b
            .trim()
            .parse()
            .map_err(|_| CliError::input(format!("bad range '{s}'")))?;
        if b < a {
            return Err(CliError::input(format!("empty range '{s}'")));
        }
        return Ok((a..=b).map(|v| v as f64).collect());
    }
    s.split(',')
        .map(|x| {
            x.trim()
                .parse::<f64>()
                .map_err(|_| CliError::input(format!("'{x}' is not a number")))
        })
        .collect()
}

fn parse_seeds(s: &str) -> Result<Vec<u64>, CliError> {
    parse_list(s)?
        .into_iter()
        .map(|v| {
            if v >= 0.0 && v.fract() == 0.0 {
                Ok(v as u64)
            } else {
                Err(CliError::input(format!(
                    "seed {v} is not a non-negative integer"
                )))
            }
        })
        .collect()
}

#[derive(Serialize)]
struct CellRow {
    cell: Cell,
    converged_standard: bool,
    converged_fair: bool,
    iterations_standard: usize,
    iterations_fair: usize,
    eval: EvalReport,
}

#[derive(Serialize)]
struct CellFailure {
    cell: Cell,
    error: String,
}

#[derive(Serialize)]
struct BenchmarkReport {
    schema_version: u32,
    suite: String,
    config: FitConfig,
    pcee_variant: PceeVariant,
    cells: Vec<CellRow>,
    failures: Vec<CellFailure>,
}

pub fn benchmark(a: &BenchmarkArgs, dry_run: bool) -> Result<(), CliError> {
    let suite = Suite::parse(&a.suite)?;
    let seeds = parse_seeds(&a.seeds)?;
    let grid = a.grid.as_deref().map(parse_list).transpose()?;
    if grid.is_some() && suite.param_name().is_none() {
        return Err(CliError::input(format!("{} has no grid", suite.name())));
    }
    let cfg = build_config(&a.solver)?;
    let cells = suite.cells(grid.as_deref(), &seeds)?;
    for c in &cells {
        c.scenario.validate()?;
    }
    let variant: PceeVariant = a.pcee.into();
    let mut manifest = RunManifest::new("benchmark", dry_run);
    manifest.config(&serde_json::json!({ "suite": suite.name(), "seeds": seeds, "cells": cells.len(), "fit": cfg }))?;
    if let Some(c) = &a.solver.config {
        manifest.input(c)?;
    }
    create_dir(&a.out)?;
    if dry_run {
        return manifest.write(&a.out);
    }

    let t0 = Instant::now();
    let results = run_cells(&cells, &cfg, variant);
    manifest.time("cells", t0.elapsed().as_secs_f64());
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (cell, r) in cells.into_iter().zip(results) {
        match r {
            Ok(o) => rows.push(CellRow {
                converged_standard: o.comparison.standard.converged,
                converged_fair: o.comparison.fair.estimate.converged,
                iterations_standard: o.comparison.standard.iterations,
                iterations_fair: o.comparison.fair.estimate.iterations,
                eval: o.comparison.eval,
                cell,
            }),
            Err(e) => {
                eprintln!("error: cell {} seed {}: {e}", cell.suite, cell.seed);
                failures.push(CellFailure {
                    cell,
                    error: e.to_string(),
                });
            }
        }
    }
    let report = BenchmarkReport {
        schema_version: SCHEMA_VERSION,
        suite: suite.name().into(),
        config: cfg,
        pcee_variant: variant,
        cells: rows,
        failures,
    };
    let files = [
        a.out.join("cells.csv"),
        a.out.join("table.csv"),
        a.out.join("report.json"),
    ];
    write_cells_csv(&files[0], &report)?;
    write_table_csv(&files[1], &report)?;
    write_json(&files[2], &report)?;
    for f in &files {
        manifest.output(f)?;
    }
    manifest.write(&a.out)?;
    for row in &report.cells {
        print_row(row);
    }
    if report.failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::numerical(format!(
            "{} of {} cells failed",
            report.failures.len(),
            report.failures.len() + report.cells.len()
        )))
    }
}

fn param_value(c: &Cell) -> Option<f64> {
    c.param.as_ref().map(|p| p.1)
}

fn print_row(r: &CellRow) {
    let param = r
        .cell
        .param
        .as_ref()
        .map(|(n, v)| format!(" {n}={v}"))
        .unwrap_or_default();
    let pct = |v: Option<f64>| {
        v.map(|x| format!("{x:+.2}%"))
            .unwrap_or_else(|| "n/a".into())
    };
    println!(
        "{}{} seed={} F1 {:.6} -> {:.6} ({}) Delta {:.6} -> {:.6} ({})",
        r.cell.suite,
        param,
        r.cell.seed,
        r.eval.f1_standard,
        r.eval.f1_fair,
        pct(r.eval.pct_f1),
        r.eval.delta_standard,
        r.eval.delta_fair,
        pct(r.eval.pct_delta)
    );
}

fn write_cells_csv(path: &Path, r: &BenchmarkReport) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(CliError::io)?;
    w.write_record([
        "suite",
        "param",
        "value",
        "seed",
        "f1_gm",
        "f1_fair",
        "pct_f1",
        "delta_gm",
        "delta_fair",
        "pct_delta",
        "runtime_gm",
        "runtime_fair",
        "pcee_gap_gm",
        "pcee_gap_fair",
        "converged_gm",
        "converged_fair",
    ])
    .map_err(CliError::io)?;
    for row in &r.cells {
        let e = &row.eval;
        let gap = |p: &Option<PceeGapReport>| opt(p.as_ref().and_then(|p| p.gap));
        w.write_record([
            row.cell.suite.clone(),
            row.cell
                .param
                .as_ref()
                .map(|p| p.0.clone())
                .unwrap_or_default(),
            opt(param_value(&row.cell)),
            row.cell.seed.to_string(),
            io::fmt_num(e.f1_standard),
            io::fmt_num(e.f1_fair),
            opt(e.pct_f1),
            io::fmt_num(e.delta_standard),
            io::fmt_num(e.delta_fair),
            opt(e.pct_delta),
            io::fmt_num(e.runtime_standard),
            io::fmt_num(e.runtime_fair),
            gap(&e.pcee_standard),
            gap(&e.pcee_fair),
            row.converged_standard.to_string(),
            row.converged_fair.to_string(),
        ])
        .map_err(CliError::io)?;
    }
    w.flush().map_err(CliError::io)?;
    Ok(())
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let sd = if v.len() > 1 {
        (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, sd)
}

/// One row per grid point with the seed averages, shaped like the paper's result tables.
fn write_table_csv(path: &Path, r: &BenchmarkReport) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(CliError::io)?;
    w.write_record([
        "value",
        "seeds",
        "f1_gm",
        "f1_fair",
        "pct_f1",
        "delta_gm",
        "delta_fair",
        "pct_delta",
        "runtime_gm",
        "runtime_gm_sd",
        "runtime_fair",
        "runtime_fair_sd",
    ])
    .map_err(CliError::io)?;
    let mut values: Vec<Option<f64>> = Vec::new();
    for row in &r.cells {
        let v = param_value(&row.cell);
        if !values
            .iter()
            .any(|x| x.map(f64::to_bits) == v.map(f64::to_bits))
        {
            values.push(v);
        }
    }
    for v in values {
        let rows: Vec<&CellRow> = r
            .cells
            .iter()
            .filter(|c| param_value(&c.cell).map(f64::to_bits) == v.map(f64::to_bits))
            .collect();
        let col =
            |f: &dyn Fn(&EvalReport) -> f64| rows.iter().map(|c| f(&c.eval)).collect::<Vec<f64>>();
        let (f1g, _) = mean_sd(&col(&|e| e.f1_standard));
        let (f1f, _) = mean_sd(&col(&|e| e.f1_fair));
        let (dg, _) = mean_sd(&col(&|e| e.delta_standard));
        let (df, _) = mean_sd(&col(&|e| e.delta_fair));
        let (rg, rgs) = mean_sd(&col(&|e| e.runtime_standard));
        let (rf, rfs) = mean_sd(&col(&|e| e.runtime_fair));
        w.write_record([
            opt(v),
            rows.len().to_string(),
            io::fmt_num(f1g),
            io::fmt_num(f1f),
            opt(fairgm::metrics::percent_change(f1g, f1f)),
            io::fmt_num(dg),
            io::fmt_num(df),
            opt(fairgm::metrics::percent_change(dg, df)),
            io::fmt_num(rg),
            io::fmt_num(rgs),
            io::fmt_num(rf),
            io::fmt_num(rfs),
        ])
        .map_err(CliError::io)?;
    }
    w.flush().map_err(CliError::io)?;
    Ok(())
}

// ---------------------------------------------------------- validate-trace

pub fn validate_trace(a: &ValidateTraceArgs, dry_run: bool) -> Result<(), CliError> {
    check_input(&a.trace)?;
    if !(a.tol >= 0.0) {
        return Err(CliError::input("--tol must be non-negative"));
    }
    let rows = io::read_trace_objectives(&a.trace)?;
    if dry_run {
        println!("{}: {} rows parsed", a.trace.display(), rows.len());
        return Ok(());
    }
    let mut violations = Vec::new();
    for w in rows.windows(2) {
        let ((_, prev), (it, next)) = (&w[0], &w[1]);
        if prev.len() != next.len() {
            return Err(CliError::input(format!(
                "row for iteration {it} has a different number of objectives"
            )));
        }
        for (k, (a0, a1)) in prev.iter().zip(next).enumerate() {
            if !(a1 <= &(a0 + a.tol * a0.abs().max(1.0))) {
                violations.push(format!(
                    "iteration {it}: F_{} rose from {a0:e} to {a1:e}",
                    k + 1
                ));
            }
        }
    }
    let m = rows.first().map_or(0, |r| r.1.len());
    if violations.is_empty() {
        println!(
            "ok: {} rows, {m} objectives, all non-increasing",
            rows.len()
        );
        Ok(())
    } else {
        for v in violations.iter().take(20) {
            println!("{v}");
        }
        Err(CliError::numerical(format!(
            "{} objective increases in {}",
            violations.len(),
            a.trace.display()
        )))
    }
}
