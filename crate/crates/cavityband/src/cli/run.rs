//! Command dispatch: from a validated configuration to files on disk.
//!
//! Each command computes one result table, an optional plot, and a set of
//! diagnostics. All parallel work happens in order-preserving map-reduce
//! over rayon, so the emitted bytes are identical for any worker count; all
//! file writes happen on the calling thread after the computation finishes.
//!
//! Exit codes: 0 success, 2 configuration error, 3 computation finished
//! without a usable result (or a failed validation suite), 4 internal error.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde_json::{json, Value};

use super::cache::{self, CacheEntry};
use super::config::{BandMethod, Command, Resolved, RunConfig};
use super::manifest::{now_unix, sha256_hex, utc_string, OutputRecord, RunManifest};
use super::plot::{render_svg, PlotSpec, Series, SeriesStyle};
use super::table::{Cell, Table};
use crate::band::{band_sweep, cross_validate};
use crate::bistability::{bifurcation_map, critical_point_numeric, eta_cr_analytic_shallow_with};
use crate::bloch::{eigen_residual, solve_bloch};
use crate::catastrophe::{butterfly_check, find_q_sw, swallowtail_scan, ButterflyVerdict};
use crate::error::{Error, Result};
use crate::overlap::{BlochOverlap, OverlapModel};
use crate::params::{LatticeDepth, QuasiMomentum, SystemParams};
use crate::photon::{
    find_branches, find_branches_red_detuned, input_output_curve, lineshape_sweep,
    state_function_g, BranchSet,
};
use crate::stability::classify_band;

/// How a completed run ended.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RunStatus {
    /// The computation produced its result.
    Ok,
    /// The computation finished without error but found nothing to report.
    NoResult(String),
    /// The validation suite ran and at least one check failed.
    ChecksFailed(String),
}

impl RunStatus {
    fn manifest_text(&self) -> String {
        match self {
            RunStatus::Ok => "ok".to_string(),
            RunStatus::NoResult(_) => "no result".to_string(),
            RunStatus::ChecksFailed(_) => "checks failed".to_string(),
        }
    }

    fn exit_code(&self) -> i32 {
        match self {
            RunStatus::Ok => 0,
            RunStatus::NoResult(_) | RunStatus::ChecksFailed(_) => 3,
        }
    }
}

/// The in-memory result of one command before any file is written.
pub struct CommandOutput {
    pub table: Table,
    pub plot: Option<PlotSpec>,
    pub diagnostics: BTreeMap<String, Value>,
    pub status: RunStatus,
    /// Human-readable lines echoed to stdout.
    pub notes: Vec<String>,
}

impl CommandOutput {
    fn new(table: Table) -> Self {
        CommandOutput {
            table,
            plot: None,
            diagnostics: BTreeMap::new(),
            status: RunStatus::Ok,
            notes: Vec::new(),
        }
    }
}

/// Maps an error to the process exit code.
pub fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::Config(_) | Error::InvalidParams(_) => 2,
        Error::Inconclusive(_)
        | Error::NotFound(_)
        | Error::NoRoots { .. }
        | Error::OnsetOutsideWindow { .. }
        | Error::DegenerateWindow { .. }
        | Error::BranchCountMismatch { .. } => 3,
        _ => 4,
    }
}

fn print_error(err: &Error) {
    match err {
        Error::Config(msgs) => {
            for msg in msgs {
                eprintln!("config error: {msg}");
            }
        }
        other => eprintln!("error: {other}"),
    }
}

/// Loads, validates, computes, and writes one run. Returns the exit code.
pub fn execute(
    command: Command,
    config_path: &Path,
    out_override: Option<PathBuf>,
    workers_override: Option<usize>,
    no_plots_flag: bool,
) -> i32 {
    let text = match fs::read_to_string(config_path) {
        Ok(t) => t,
        Err(err) => {
            eprintln!("config error: cannot read {}: {err}", config_path.display());
            return 2;
        }
    };
    let config = match RunConfig::from_json(&text) {
        Ok(c) => c,
        Err(err) => {
            print_error(&err);
            return 2;
        }
    };
    let resolved = match config.resolve(command) {
        Ok(r) => r,
        Err(err) => {
            print_error(&err);
            return 2;
        }
    };

    let out_dir = out_override
        .or_else(|| config.output_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    if let Err(err) = fs::create_dir_all(&out_dir) {
        eprintln!("error: cannot create {}: {err}", out_dir.display());
        return 4;
    }

    let hash = config.config_hash(command);
    let workers = workers_override.or(config.workers).unwrap_or(0);
    let no_plots = no_plots_flag || config.no_plots;
    let cache_dir = config.cache_dir.as_ref().map(PathBuf::from);

    if let Some(cd) = &cache_dir {
        if let Some((entry, delivered)) = cache::lookup(cd, &hash, &out_dir, !no_plots) {
            let status = match entry.status.as_str() {
                "no result" => RunStatus::NoResult("cached".to_string()),
                "checks failed" => RunStatus::ChecksFailed("cached".to_string()),
                _ => RunStatus::Ok,
            };
            let manifest = RunManifest {
                tool: "cavityband".to_string(),
                version: env!("CARGO_PKG_VERSION").to_string(),
                command: command.name().to_string(),
                config_hash: hash.clone(),
                created_unix: now_unix(),
                created_utc: utc_string(now_unix()),
                workers,
                cached: true,
                status: entry.status.clone(),
                outputs: delivered.clone(),
                diagnostics: entry.diagnostics.clone(),
            };
            if let Err(err) = write_manifest(&out_dir, &manifest) {
                print_error(&err);
                return 4;
            }
            println!("cached result (config {})", &hash[..12]);
            for record in &delivered {
                println!("wrote {}", out_dir.join(&record.file).display());
            }
            println!("wrote {}", out_dir.join("manifest.json").display());
            return status.exit_code();
        }
    }

    let pool = match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(p) => p,
        Err(err) => {
            eprintln!("error: cannot build worker pool: {err}");
            return 4;
        }
    };

    let outcome = pool.install(|| dispatch(command, &resolved));
    let output = match outcome {
        Ok(o) => o,
        Err(err) => {
            print_error(&err);
            let code = exit_code_for(&err);
            if code != 2 {
                let manifest = RunManifest {
                    tool: "cavityband".to_string(),
                    version: env!("CARGO_PKG_VERSION").to_string(),
                    command: command.name().to_string(),
                    config_hash: hash.clone(),
                    created_unix: now_unix(),
                    created_utc: utc_string(now_unix()),
                    workers,
                    cached: false,
                    status: format!("error: {err}"),
                    outputs: Vec::new(),
                    diagnostics: BTreeMap::new(),
                };
                let _ = write_manifest(&out_dir, &manifest);
            }
            return code;
        }
    };

    match deliver(
        command,
        &out_dir,
        &hash,
        workers,
        no_plots,
        cache_dir.as_deref(),
        output,
    ) {
        Ok(code) => code,
        Err(err) => {
            print_error(&err);
            exit_code_for(&err)
        }
    }
}

/// Writes the table, plot, manifest, and cache entry for a computed run.
fn deliver(
    command: Command,
    out_dir: &Path,
    hash: &str,
    workers: usize,
    no_plots: bool,
    cache_dir: Option<&Path>,
    output: CommandOutput,
) -> Result<i32> {
    let mut artifacts: Vec<(String, Vec<u8>)> = Vec::new();
    artifacts.push((
        format!("{}.csv", command.name()),
        output.table.to_csv().into_bytes(),
    ));
    if let Some(plot) = &output.plot {
        artifacts.push((
            format!("{}.svg", command.name()),
            render_svg(plot).into_bytes(),
        ));
    }
    let all_records: Vec<OutputRecord> = artifacts
        .iter()
        .map(|(name, bytes)| OutputRecord {
            file: name.clone(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len() as u64,
        })
        .collect();

    let mut written = Vec::new();
    for (record, (name, bytes)) in all_records.iter().zip(&artifacts) {
        if no_plots && name.ends_with(".svg") {
            continue;
        }
        fs::write(out_dir.join(name), bytes)?;
        written.push(record.clone());
    }

    let manifest = RunManifest {
        tool: "cavityband".to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        command: command.name().to_string(),
        config_hash: hash.to_string(),
        created_unix: now_unix(),
        created_utc: utc_string(now_unix()),
        workers,
        cached: false,
        status: output.status.manifest_text(),
        outputs: written.clone(),
        diagnostics: output.diagnostics.clone(),
    };
    write_manifest(out_dir, &manifest)?;

    if let Some(cd) = cache_dir {
        let entry = CacheEntry {
            config_hash: hash.to_string(),
            command: command.name().to_string(),
            status: output.status.manifest_text(),
            outputs: all_records,
            diagnostics: output.diagnostics,
        };
        if let Err(err) = cache::store(cd, &entry, &artifacts) {
            eprintln!("warning: cache store failed: {err}");
        }
    }

    for note in &output.notes {
        println!("{note}");
    }
    match &output.status {
        RunStatus::Ok => {}
        RunStatus::NoResult(reason) => println!("no result: {reason}"),
        RunStatus::ChecksFailed(reason) => println!("checks failed: {reason}"),
    }
    for record in &written {
        println!("wrote {}", out_dir.join(&record.file).display());
    }
    println!("wrote {}", out_dir.join("manifest.json").display());
    Ok(output.status.exit_code())
}

fn write_manifest(out_dir: &Path, manifest: &RunManifest) -> Result<()> {
    let mut text = serde_json::to_string_pretty(manifest)?;
    text.push('\n');
    fs::write(out_dir.join("manifest.json"), text)?;
    Ok(())
}

/// Runs one command against a validated configuration.
pub fn dispatch(command: Command, resolved: &Resolved) -> Result<CommandOutput> {
    match command {
        Command::Lineshape => run_lineshape(resolved),
        Command::Band => run_band(resolved),
        Command::Scurve => run_scurve(resolved),
        Command::Bifmap => run_bifmap(resolved),
        Command::Critical => run_critical(resolved),
        Command::Swallowtail => run_swallowtail(resolved),
        Command::Stability => run_stability(resolved),
        Command::Validate => run_validate(resolved),
    }
}

fn run_lineshape(resolved: &Resolved) -> Result<CommandOutput> {
    let grid = resolved.delta_grid.as_ref().expect("validated");
    let q = QuasiMomentum::new(resolved.q)?;
    let mut table = Table::new(&[
        "record",
        "delta_c [w_R]",
        "branch_index",
        "n_ph",
        "v [E_R]",
        "f",
        "mu [E_R]",
        "phase [rad]",
    ]);
    let mut plot = PlotSpec::new(
        "Steady-state photon number over cavity detuning",
        "delta_c [w_R]",
        "n_ph",
    );
    let mut output;

    if resolved.red_detuned {
        let sets: Result<Vec<BranchSet>> = grid
            .par_iter()
            .map(|&delta| {
                let p = SystemParams {
                    delta_c: delta,
                    ..resolved.params
                };
                find_branches_red_detuned(q, &p, resolved.band)
            })
            .collect();
        let sets = sets?;
        let mut dots = Vec::new();
        for set in &sets {
            for (i, b) in set.branches.iter().enumerate() {
                table.push_row(vec![
                    "state".into(),
                    set.params.delta_c.into(),
                    i.into(),
                    b.n_ph.into(),
                    b.v.into(),
                    b.f.into(),
                    b.mu.into(),
                    b.phase.into(),
                ])?;
                dots.push((set.params.delta_c, b.n_ph));
            }
        }
        plot.series
            .push(Series::new("steady states", dots, SeriesStyle::Dots));
        output = CommandOutput::new(table);
        output.diagnostics.insert(
            "hysteresis_traces".to_string(),
            json!("omitted on the red-detuned path"),
        );
        output.diagnostics.insert(
            "max_branches".to_string(),
            json!(sets.iter().map(BranchSet::count).max().unwrap_or(0)),
        );
        output
            .diagnostics
            .insert("detunings".to_string(), json!(grid.len()));
    } else {
        let sweep = lineshape_sweep(&resolved.params, q, resolved.band, grid)?;
        let mut dots = Vec::new();
        for set in &sweep.sets {
            for (i, b) in set.branches.iter().enumerate() {
                table.push_row(vec![
                    "state".into(),
                    set.params.delta_c.into(),
                    i.into(),
                    b.n_ph.into(),
                    b.v.into(),
                    b.f.into(),
                    b.mu.into(),
                    b.phase.into(),
                ])?;
                dots.push((set.params.delta_c, b.n_ph));
            }
        }
        for tp in &sweep.up_trace {
            table.push_row(vec![
                "sweep_up".into(),
                tp.delta_c.into(),
                Cell::Empty,
                tp.n_ph.into(),
                Cell::Empty,
                Cell::Empty,
                Cell::Empty,
                Cell::Empty,
            ])?;
        }
        for tp in &sweep.down_trace {
            table.push_row(vec![
                "sweep_down".into(),
                tp.delta_c.into(),
                Cell::Empty,
                tp.n_ph.into(),
                Cell::Empty,
                Cell::Empty,
                Cell::Empty,
                Cell::Empty,
            ])?;
        }
        let down_by_delta: std::collections::HashMap<u64, f64> = sweep
            .down_trace
            .iter()
            .map(|t| (t.delta_c.to_bits(), t.n_ph))
            .collect();
        let hysteretic = sweep.up_trace.iter().any(|u| {
            down_by_delta
                .get(&u.delta_c.to_bits())
                .is_some_and(|&d| (u.n_ph - d).abs() > 1e-9 * (1.0 + u.n_ph.abs()))
        });
        plot.series
            .push(Series::new("steady states", dots, SeriesStyle::Dots));
        plot.series.push(Series::new(
            "sweep up",
            sweep.up_trace.iter().map(|t| (t.delta_c, t.n_ph)).collect(),
            SeriesStyle::Line,
        ));
        plot.series.push(Series::new(
            "sweep down",
            sweep
                .down_trace
                .iter()
                .map(|t| (t.delta_c, t.n_ph))
                .collect(),
            SeriesStyle::Line,
        ));
        output = CommandOutput::new(table);
        output.diagnostics.insert(
            "max_branches".to_string(),
            json!(sweep.sets.iter().map(BranchSet::count).max().unwrap_or(0)),
        );
        output
            .diagnostics
            .insert("hysteretic".to_string(), json!(hysteretic));
        output
            .diagnostics
            .insert("detunings".to_string(), json!(grid.len()));
    }
    output.plot = Some(plot);
    Ok(output)
}

fn run_band(resolved: &Resolved) -> Result<CommandOutput> {
    let grid = resolved.q_grid.as_ref().expect("validated");
    let diagram = band_sweep(&resolved.params, resolved.band, grid)?;

    let mut component_of = vec![usize::MAX; diagram.points.len()];
    for (ci, component) in diagram.components.iter().enumerate() {
        for &pid in &component.point_ids {
            component_of[pid] = ci;
        }
    }

    let mut table = Table::new(&[
        "q [hbar k]",
        "branch",
        "energy_total [E_R]",
        "energy_per_atom [E_R]",
        "n_ph",
        "v [E_R]",
        "mu [E_R]",
        "f",
        "component",
    ]);
    for (pid, pt) in diagram.points.iter().enumerate() {
        table.push_row(vec![
            pt.q.into(),
            pt.label.as_str().into(),
            pt.energy_total.into(),
            pt.energy_per_atom.into(),
            pt.n_ph.into(),
            pt.v.into(),
            pt.mu.into(),
            pt.f.into(),
            component_of[pid].into(),
        ])?;
    }

    let mut plot = PlotSpec::new(
        "Band diagram of the coupled atom-cavity system",
        "q [hbar k]",
        "energy per atom [E_R]",
    );
    let mut segments = Vec::with_capacity(diagram.links.len() * 2);
    for &(a, b) in &diagram.links {
        segments.push((diagram.points[a].q, diagram.points[a].energy_per_atom));
        segments.push((diagram.points[b].q, diagram.points[b].energy_per_atom));
    }
    plot.series
        .push(Series::new("", segments, SeriesStyle::Segments));
    plot.series.push(Series::new(
        "band states",
        diagram
            .points
            .iter()
            .map(|p| (p.q, p.energy_per_atom))
            .collect(),
        SeriesStyle::Dots,
    ));

    let mut output = CommandOutput::new(table);
    output.plot = Some(plot);
    output
        .diagnostics
        .insert("points".to_string(), json!(diagram.points.len()));
    output
        .diagnostics
        .insert("quasi_momenta".to_string(), json!(grid.len()));
    output
        .diagnostics
        .insert("components".to_string(), json!(diagram.components.len()));
    output.diagnostics.insert(
        "detached_components".to_string(),
        json!(diagram
            .components
            .iter()
            .filter(|c| !c.touches_edge)
            .count()),
    );
    if resolved.method == BandMethod::Extremize {
        let worst = cross_validate(grid, &resolved.params)?;
        output
            .diagnostics
            .insert("cross_validation_worst_mismatch".to_string(), json!(worst));
        output.notes.push(format!(
            "cross-validation worst relative mismatch: {worst:.3e}"
        ));
    }
    Ok(output)
}

fn run_scurve(resolved: &Resolved) -> Result<CommandOutput> {
    let grid = resolved.nph_grid.as_ref().expect("validated");
    let q = QuasiMomentum::new(resolved.q)?;
    let points = input_output_curve(&resolved.params, q, resolved.band, grid)?;

    let mut table = Table::new(&["n_ph", "n_max"]);
    for p in &points {
        table.push_row(vec![p.n_ph.into(), p.n_max.into()])?;
    }

    let mut turning_points = 0usize;
    for w in points.windows(3) {
        let d1 = w[1].n_max - w[0].n_max;
        let d2 = w[2].n_max - w[1].n_max;
        if d1 * d2 < 0.0 {
            turning_points += 1;
        }
    }

    let mut plot = PlotSpec::new(
        "Input-output characteristic",
        "pump capacity n_max",
        "steady-state n_ph",
    );
    plot.series.push(Series::new(
        "characteristic",
        points.iter().map(|p| (p.n_max, p.n_ph)).collect(),
        SeriesStyle::Line,
    ));

    let mut output = CommandOutput::new(table);
    output.plot = Some(plot);
    output
        .diagnostics
        .insert("points".to_string(), json!(points.len()));
    output
        .diagnostics
        .insert("turning_points".to_string(), json!(turning_points));
    output
        .diagnostics
        .insert("monotone".to_string(), json!(turning_points == 0));
    Ok(output)
}

fn run_bifmap(resolved: &Resolved) -> Result<CommandOutput> {
    let delta_grid = resolved.delta_grid.as_ref().expect("validated");
    let eta_grid = resolved.eta_grid.as_ref().expect("validated");
    let q = QuasiMomentum::new(resolved.q)?;
    let map = bifurcation_map(q, &resolved.params, eta_grid, delta_grid)?;

    let mut table = Table::new(&["record", "series", "delta_c [w_R]", "eta [w_R]", "count"]);
    for (i, &eta) in map.eta_grid.iter().enumerate() {
        for (j, &delta) in map.delta_grid.iter().enumerate() {
            table.push_row(vec![
                "count".into(),
                Cell::Empty,
                delta.into(),
                eta.into(),
                (map.counts[i][j] as i64).into(),
            ])?;
        }
    }
    for (b, polyline) in map.boundaries.iter().enumerate() {
        for &(delta, eta) in polyline {
            table.push_row(vec![
                "boundary".into(),
                b.into(),
                delta.into(),
                eta.into(),
                Cell::Empty,
            ])?;
        }
    }
    for &(delta, eta) in &map.cusps {
        table.push_row(vec![
            "cusp".into(),
            Cell::Empty,
            delta.into(),
            eta.into(),
            Cell::Empty,
        ])?;
    }

    let mut plot = PlotSpec::new(
        "Steady-state multiplicity boundaries",
        "delta_c [w_R]",
        "eta [w_R]",
    );
    for (b, polyline) in map.boundaries.iter().enumerate() {
        let label = if b == 0 { "fold curves" } else { "" };
        plot.series
            .push(Series::new(label, polyline.clone(), SeriesStyle::Line));
    }
    plot.series
        .push(Series::new("cusps", map.cusps.clone(), SeriesStyle::Dots));

    let max_count = map
        .counts
        .iter()
        .flat_map(|row| row.iter().copied())
        .max()
        .unwrap_or(0);
    let mut output = CommandOutput::new(table);
    output.plot = Some(plot);
    output.diagnostics.insert(
        "cells".to_string(),
        json!(map.eta_grid.len() * map.delta_grid.len()),
    );
    output
        .diagnostics
        .insert("boundaries".to_string(), json!(map.boundaries.len()));
    output
        .diagnostics
        .insert("cusps".to_string(), json!(map.cusps.len()));
    output
        .diagnostics
        .insert("max_count".to_string(), json!(max_count));
    Ok(output)
}

fn run_critical(resolved: &Resolved) -> Result<CommandOutput> {
    let q = QuasiMomentum::new(resolved.q)?;
    let cp = critical_point_numeric(q, &resolved.params, resolved.delta_window)?;
    let analytic = eta_cr_analytic_shallow_with(q, &resolved.params, resolved.analytic_constant);
    let constant_name = match resolved.analytic_constant {
        crate::bistability::AnalyticConstant::Sqrt128 => "sqrt128",
        crate::bistability::AnalyticConstant::Sqrt8 => "sqrt8",
    };

    let mut table = Table::new(&[
        "q [hbar k]",
        "delta_0 [w_R]",
        "eta_cr [w_R]",
        "n_0",
        "eta_cr_shallow [w_R]",
        "constant",
    ]);
    table.push_row(vec![
        cp.q.into(),
        cp.delta_0.into(),
        cp.eta_cr.into(),
        cp.n_0.into(),
        analytic.into(),
        constant_name.into(),
    ])?;

    let mut output = CommandOutput::new(table);
    output.diagnostics.insert(
        "delta_window".to_string(),
        json!([resolved.delta_window.0, resolved.delta_window.1]),
    );
    output.diagnostics.insert(
        "analytic_relative_gap".to_string(),
        json!((cp.eta_cr - analytic).abs() / cp.eta_cr.abs().max(f64::MIN_POSITIVE)),
    );
    output.notes.push(format!(
        "bistability onset: delta_0 = {:.6} w_R, eta_cr = {:.6} w_R, n_0 = {:.6}",
        cp.delta_0, cp.eta_cr, cp.n_0
    ));
    Ok(output)
}

fn run_swallowtail(resolved: &Resolved) -> Result<CommandOutput> {
    let qs: Vec<f64> = match &resolved.q_grid {
        Some(grid) => grid.clone(),
        None => vec![resolved.q],
    };
    let n_atoms = resolved.params.n_atoms;
    let kappa = resolved.params.kappa;

    let mut table = Table::new(&[
        "q [hbar k]",
        "v [E_R]",
        "delta_over_nu0",
        "inv_nu0_sq",
        "eta_over_kappa",
        "f",
        "residual3",
        "residual3_error",
        "residual4",
        "residual4_error",
        "inconclusive",
        "butterfly",
        "delta_c [w_R]",
        "eta [w_R]",
        "u0 [w_R]",
        "n_ph",
    ]);

    let mut dots = Vec::new();
    let mut total = 0usize;
    let mut worst_residual3_error: f64 = 0.0;
    for &qv in &qs {
        let q = QuasiMomentum::new(qv)?;
        let points = swallowtail_scan(q, n_atoms)?;
        for point in &points {
            let (realized, v) = point.realize(kappa, n_atoms)?;
            let butterfly = butterfly_check(point)?;
            let verdict = match butterfly.verdict {
                ButterflyVerdict::NoButterfly => "excluded",
                ButterflyVerdict::Inconclusive => "inconclusive",
            };
            table.push_row(vec![
                point.q.into(),
                point.v.into(),
                point.delta_over_nu0.into(),
                point.inv_nu0_sq.into(),
                point.eta.into(),
                point.f.into(),
                point.residual3.value.into(),
                point.residual3.error.into(),
                point.residual4.value.into(),
                point.residual4.error.into(),
                point.inconclusive.into(),
                verdict.into(),
                realized.delta_c.into(),
                realized.eta.into(),
                realized.u0.into(),
                (v / realized.u0).into(),
            ])?;
            dots.push((point.q, point.v));
            worst_residual3_error = worst_residual3_error.max(point.residual3.error);
        }
        total += points.len();
    }

    let mut output = CommandOutput::new(table);
    output
        .diagnostics
        .insert("points".to_string(), json!(total));
    output
        .diagnostics
        .insert("quasi_momenta".to_string(), json!(qs.len()));
    output.diagnostics.insert(
        "worst_residual3_error".to_string(),
        json!(worst_residual3_error),
    );

    let mut found_q_sw = false;
    if let Some(window) = resolved.q_window {
        match find_q_sw(window, n_atoms) {
            Ok(q_sw) => {
                found_q_sw = true;
                output.diagnostics.insert("q_sw".to_string(), json!(q_sw));
                output
                    .notes
                    .push(format!("swallowtail onset quasi-momentum: {q_sw:.5}"));
            }
            Err(Error::OnsetOutsideWindow {
                already_supercritical,
                ..
            }) => {
                let note = if already_supercritical {
                    "onset below the window: points exist throughout"
                } else {
                    "onset above the window: no points found"
                };
                output
                    .diagnostics
                    .insert("q_sw_note".to_string(), json!(note));
                output.notes.push(format!("onset search: {note}"));
            }
            Err(other) => return Err(other),
        }
    }

    if total > 0 {
        let mut plot = PlotSpec::new(
            "Swallowtail points per quasi-momentum",
            "q [hbar k]",
            "v [E_R]",
        );
        plot.series
            .push(Series::new("swallowtail points", dots, SeriesStyle::Dots));
        output.plot = Some(plot);
    } else if !found_q_sw {
        output.status =
            RunStatus::NoResult("no swallowtail points in the scanned depth range".to_string());
    }
    Ok(output)
}

fn run_stability(resolved: &Resolved) -> Result<CommandOutput> {
    let grid = resolved.q_grid.as_ref().expect("validated");
    let diagram = band_sweep(&resolved.params, resolved.band, grid)?;
    let reports = classify_band(&diagram, resolved.j)?;

    let mut table = Table::new(&[
        "q [hbar k]",
        "branch",
        "n_ph",
        "v [E_R]",
        "mu [E_R]",
        "min_eig [E_R]",
        "max_growth_rate [w_R]",
        "energetically_stable",
        "dynamically_stable",
        "consistency_warning",
        "j",
    ]);
    let mut stable_dots = Vec::new();
    let mut unstable_dots = Vec::new();
    let mut unstable = 0usize;
    let mut warnings = 0usize;
    for report in &reports {
        let pt = &diagram.points[report.branch];
        let is_stable = report.energetically_stable && report.dynamically_stable;
        if is_stable {
            stable_dots.push((pt.q, pt.n_ph));
        } else {
            unstable_dots.push((pt.q, pt.n_ph));
            unstable += 1;
        }
        if report.consistency_warning {
            warnings += 1;
        }
        table.push_row(vec![
            pt.q.into(),
            pt.label.as_str().into(),
            pt.n_ph.into(),
            pt.v.into(),
            pt.mu.into(),
            report.min_eig_a.into(),
            report.max_abs_imag_sigma_a.into(),
            report.energetically_stable.into(),
            report.dynamically_stable.into(),
            report.consistency_warning.into(),
            report.j.into(),
        ])?;
    }

    let mut plot = PlotSpec::new("Branch stability over the band", "q [hbar k]", "n_ph");
    plot.series
        .push(Series::new("stable", stable_dots, SeriesStyle::Dots));
    plot.series
        .push(Series::new("unstable", unstable_dots, SeriesStyle::Dots));

    let mut output = CommandOutput::new(table);
    output.plot = Some(plot);
    output
        .diagnostics
        .insert("points".to_string(), json!(reports.len()));
    output
        .diagnostics
        .insert("unstable".to_string(), json!(unstable));
    output
        .diagnostics
        .insert("consistency_warnings".to_string(), json!(warnings));
    output
        .diagnostics
        .insert("perturbation_truncation".to_string(), json!(resolved.j));
    Ok(output)
}

struct CheckRow {
    name: &'static str,
    value: f64,
    threshold: f64,
    pass: bool,
    note: Option<String>,
}

fn check(name: &'static str, value: f64, threshold: f64) -> CheckRow {
    CheckRow {
        name,
        value,
        threshold,
        pass: value.is_finite() && value <= threshold,
        note: None,
    }
}

fn run_validate(resolved: &Resolved) -> Result<CommandOutput> {
    let grid = resolved.q_grid.as_ref().expect("defaulted");
    let params = &resolved.params;
    let mut checks = Vec::new();

    match cross_validate(grid, params) {
        Ok(worst) => checks.push(check("cross_method_energy_mismatch", worst, 1e-6)),
        Err(err) => {
            let mut row = check("cross_method_energy_mismatch", f64::NAN, 1e-6);
            row.note = Some(format!("{err}"));
            checks.push(row);
        }
    }

    let residuals: Result<Vec<(f64, f64)>> = grid
        .par_iter()
        .map(|&qv| {
            let q = QuasiMomentum::new(qv)?;
            let set = find_branches(q, params, resolved.band)?;
            let scale = params.eta * params.eta * params.u0.abs() + 1.0;
            let mut worst_state = 0.0f64;
            let mut worst_eigen = 0.0f64;
            for branch in &set.branches {
                let g = state_function_g(branch.v, q, params, resolved.band)?;
                worst_state = worst_state.max(g.abs() / scale);
                let state =
                    solve_bloch(q, LatticeDepth::new(branch.v)?, resolved.band, resolved.r)?;
                worst_eigen = worst_eigen.max(eigen_residual(&state) / (1.0 + state.mu.abs()));
            }
            Ok((worst_state, worst_eigen))
        })
        .collect();
    let residuals = residuals?;
    let worst_state = residuals.iter().map(|r| r.0).fold(0.0, f64::max);
    let worst_eigen = residuals.iter().map(|r| r.1).fold(0.0, f64::max);
    checks.push(check("state_equation_residual", worst_state, 1e-8));
    checks.push(check("band_eigenproblem_residual", worst_eigen, 1e-8));

    let v_probe = 5.0;
    let mut worst_symmetry = 0.0f64;
    for &qv in grid {
        let fwd = BlochOverlap::new(QuasiMomentum::new(qv)?, resolved.band).f(v_probe)?;
        let bwd = BlochOverlap::new(QuasiMomentum::new(-qv)?, resolved.band).f(v_probe)?;
        worst_symmetry = worst_symmetry.max((fwd - bwd).abs());
    }
    checks.push(check("overlap_momentum_symmetry", worst_symmetry, 1e-10));

    let mut table = Table::new(&["check", "value", "threshold", "pass"]);
    let mut notes = Vec::new();
    let mut failures = 0usize;
    for row in &checks {
        table.push_row(vec![
            row.name.into(),
            row.value.into(),
            row.threshold.into(),
            row.pass.into(),
        ])?;
        let verdict = if row.pass { "PASS" } else { "FAIL" };
        let mut line = format!(
            "{verdict} {} (value {:.3e}, threshold {:.3e})",
            row.name, row.value, row.threshold
        );
        if let Some(note) = &row.note {
            line.push_str(&format!(" [{note}]"));
        }
        notes.push(line);
        if !row.pass {
            failures += 1;
        }
    }

    let mut output = CommandOutput::new(table);
    output.notes = notes;
    output
        .diagnostics
        .insert("checks".to_string(), json!(checks.len()));
    output
        .diagnostics
        .insert("failures".to_string(), json!(failures));
    output
        .diagnostics
        .insert("quasi_momenta".to_string(), json!(grid.len()));
    if failures > 0 {
        output.status =
            RunStatus::ChecksFailed(format!("{failures} of {} checks failed", checks.len()));
    }
    Ok(output)
}
