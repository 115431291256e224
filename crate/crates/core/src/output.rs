//! Run directories: moment series, snapshots, mass ledger and manifest.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::gpc::Normalization;
use crate::kernels::KernelMatrices;
use crate::quadrature::QuadratureRule;
use crate::scaling::{build_scaling, PhysicalConstants, ScalingOverrides};
use crate::simulate::{compare_runs, ComparisonReport, MomentSet, Simulation, SimulationConfig};

pub const MOMENTS_FILE: &str = "moments.csv";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const COMPARE_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Serialize, Deserialize)]
struct MomentRow {
    time: f64,
    x: f64,
    density: f64,
    momentum: f64,
    energy: f64,
    velocity: f64,
    efield: f64,
    potential: f64,
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

pub fn write_moments(path: &Path, series: &[MomentSet]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    for ms in series {
        for i in 0..ms.x.len() {
            w.serialize(MomentRow {
                time: ms.time,
                x: ms.x[i],
                density: ms.density[i],
                momentum: ms.momentum[i],
                energy: ms.energy[i],
                velocity: ms.velocity[i],
                efield: ms.efield[i],
                potential: ms.potential[i],
            })
            .map_err(|e| csv_err(path, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Read a moment series back; pointwise statistics are not stored here and come back empty.
pub fn read_moments(path: &Path) -> Result<Vec<MomentSet>> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let mut out: Vec<MomentSet> = Vec::new();
    for row in r.deserialize() {
        let row: MomentRow = row.map_err(|e| csv_err(path, e))?;
        let start_new = out.last().is_none_or(|m| m.time != row.time);
        if start_new {
            out.push(MomentSet {
                time: row.time,
                x: vec![],
                density: vec![],
                momentum: vec![],
                energy: vec![],
                velocity: vec![],
                efield: vec![],
                potential: vec![],
                degenerate: vec![],
                mean: vec![],
                variance: vec![],
                stddev: vec![],
            });
        }
        let m = out.last_mut().expect("pushed above");
        m.x.push(row.x);
        m.density.push(row.density);
        m.momentum.push(row.momentum);
        m.energy.push(row.energy);
        m.velocity.push(row.velocity);
        m.efield.push(row.efield);
        m.potential.push(row.potential);
    }
    if out.is_empty() {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            message: "no moment rows".into(),
        });
    }
    Ok(out)
}

fn write_statistics(path: &Path, sim: &Simulation, ms: &MomentSet) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(["i", "k", "m", "x", "r", "mu", "mean", "variance", "stddev"])
        .map_err(|e| csv_err(path, e))?;
    let g = &sim.grid;
    for idx in 0..g.cells() {
        let (i, k, m) = g.unindex(idx);
        w.write_record(&[
            i.to_string(),
            k.to_string(),
            m.to_string(),
            format!("{:e}", g.xc(i)),
            format!("{:e}", g.rc(k)),
            format!("{:e}", g.muc(m)),
            format!("{:e}", ms.mean[idx]),
            format!("{:e}", ms.variance[idx]),
            format!("{:e}", ms.stddev[idx]),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_ledger(path: &Path, sim: &Simulation) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record([
        "step",
        "time",
        "dt",
        "mass0",
        "mass1",
        "outflow0",
        "outflow1",
        "collision0",
        "collision1",
    ])
    .map_err(|e| csv_err(path, e))?;
    for r in &sim.ledger {
        w.write_record(&[
            r.step.to_string(),
            format!("{:e}", r.time),
            format!("{:e}", r.dt),
            format!("{:e}", r.mass_after[0]),
            format!("{:e}", r.mass_after[1]),
            format!("{:e}", r.boundary.total(0)),
            format!("{:e}", r.boundary.total(1)),
            format!("{:e}", r.collision_source[0]),
            format!("{:e}", r.collision_source[1]),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex(&Sha256::digest(&bytes)))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FileEntry {
    pub name: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RunManifest {
    pub version: String,
    pub status: String,
    pub config: SimulationConfig,
    pub scaling_audit_sha256: String,
    pub scaling_audit: Vec<String>,
    pub final_time: f64,
    pub steps: usize,
    /// Seconds per phase.
    pub timings: Vec<(String, f64)>,
    pub files: Vec<FileEntry>,
    pub error: Option<String>,
}

/// Outcome of a finished run.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub dir: PathBuf,
    pub manifest: RunManifest,
    pub series: Vec<MomentSet>,
}

fn snapshot_name(t: f64) -> String {
    format!("snapshot_t{t:09.4}")
}

/// Run a simulation and write its outputs to `dir`.
pub fn run_to_dir(config: SimulationConfig, dir: &Path) -> Result<RunSummary> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let clock = Instant::now();
    let mut timings = Vec::new();
    let mut sim = Simulation::new(config.clone())?;
    timings.push(("setup".to_string(), clock.elapsed().as_secs_f64()));
    let mut files: Vec<String> = Vec::new();
    let mut series = vec![sim.moments()];
    let mut stat_times = vec![0.0];
    write_statistics(&dir.join("statistics_t0000.0000.csv"), &sim, &series[0])?;
    files.push("statistics_t0000.0000.csv".into());

    let mut outputs: Vec<f64> = Vec::new();
    let mi = config.output.moment_interval;
    let mut t = mi;
    while t < config.final_time * (1.0 - 1e-12) {
        outputs.push(t);
        t += mi;
    }
    outputs.push(config.final_time);
    let mut next_snap = config.output.snapshot_interval;

    let stepping = Instant::now();
    let mut failure = None;
    for &t_out in &outputs {
        if let Err(e) = sim.advance_to(t_out) {
            let name = "abort_snapshot";
            sim.state.write_snapshot(
                &sim.grid,
                &dir.join(format!("{name}.csv")),
                &dir.join(format!("{name}.json")),
                sim.time,
            )?;
            files.push(format!("{name}.csv"));
            files.push(format!("{name}.json"));
            failure = Some(e);
            break;
        }
        let ms = sim.moments();
        if let Some(s) = next_snap {
            if t_out >= s * (1.0 - 1e-12) && t_out < config.final_time * (1.0 - 1e-12) {
                let name = snapshot_name(t_out);
                sim.state.write_snapshot(
                    &sim.grid,
                    &dir.join(format!("{name}.csv")),
                    &dir.join(format!("{name}.json")),
                    t_out,
                )?;
                files.push(format!("{name}.csv"));
                files.push(format!("{name}.json"));
                let sname = format!("statistics_t{t_out:09.4}.csv");
                write_statistics(&dir.join(&sname), &sim, &ms)?;
                files.push(sname);
                stat_times.push(t_out);
                next_snap = Some(s + config.output.snapshot_interval.unwrap_or(s));
            }
        }
        series.push(ms);
    }
    timings.push(("time_stepping".to_string(), stepping.elapsed().as_secs_f64()));

    if failure.is_none() {
        let name = snapshot_name(sim.time);
        sim.state.write_snapshot(
            &sim.grid,
            &dir.join(format!("{name}.csv")),
            &dir.join(format!("{name}.json")),
            sim.time,
        )?;
        files.push(format!("{name}.csv"));
        files.push(format!("{name}.json"));
        let sname = format!("statistics_t{:09.4}.csv", sim.time);
        write_statistics(&dir.join(&sname), &sim, series.last().expect("final moments"))?;
        files.push(sname);
    }
    write_moments(&dir.join(MOMENTS_FILE), &series)?;
    files.push(MOMENTS_FILE.into());
    write_ledger(&dir.join("mass.csv"), &sim)?;
    files.push("mass.csv".into());
    timings.push(("total".to_string(), clock.elapsed().as_secs_f64()));

    let audit = sim.scaling.audit_text();
    let mut entries = Vec::new();
    for f in &files {
        let p = dir.join(f);
        let bytes = fs::metadata(&p).map_err(|e| Error::io(&p, e))?.len();
        entries.push(FileEntry {
            name: f.clone(),
            bytes,
            sha256: sha256_file(&p)?,
        });
    }
    let manifest = RunManifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        status: if failure.is_some() { "failed" } else { "ok" }.to_string(),
        config,
        scaling_audit_sha256: hex(&Sha256::digest(audit.as_bytes())),
        scaling_audit: sim.scaling.audit_lines().to_vec(),
        final_time: sim.time,
        steps: sim.steps,
        timings,
        files: entries,
        error: failure.as_ref().map(|e| e.to_string()),
    };
    let mpath = dir.join(MANIFEST_FILE);
    fs::write(
        &mpath,
        serde_json::to_string_pretty(&manifest).expect("manifest json"),
    )
    .map_err(|e| Error::io(&mpath, e))?;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(RunSummary {
        dir: dir.to_path_buf(),
        manifest,
        series,
    })
}

/// Compare the moment series of two run directories; writes `compare.csv` and
/// `compare_summary.txt` into `out` when given.
pub fn compare_dirs(a: &Path, b: &Path, tolerance: f64, out: Option<&Path>) -> Result<ComparisonReport> {
    let sa = read_moments(&a.join(MOMENTS_FILE))?;
    let sb = read_moments(&b.join(MOMENTS_FILE))?;
    let report = compare_runs(&sa, &sb, tolerance)?;
    if let Some(dir) = out {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join("compare.csv");
        let mut w = csv::Writer::from_path(&path).map_err(|e| csv_err(&path, e))?;
        let mut head = vec!["x".to_string()];
        head.extend(report.profiles.iter().map(|(n, _)| n.clone()));
        w.write_record(&head).map_err(|e| csv_err(&path, e))?;
        for (i, x) in report.x.iter().enumerate() {
            let mut row = vec![format!("{x:e}")];
            row.extend(report.profiles.iter().map(|(_, p)| format!("{:e}", p[i])));
            w.write_record(&row).map_err(|e| csv_err(&path, e))?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
        let spath = dir.join("compare_summary.txt");
        fs::write(&spath, report.summary()).map_err(|e| Error::io(&spath, e))?;
    }
    Ok(report)
}

/// Kernel matrices and constants as JSON.
pub fn kernels_report(n_divisor: f64, basis: Normalization) -> Result<serde_json::Value> {
    let overrides = ScalingOverrides {
        n_divisor,
        ..ScalingOverrides::default()
    };
    let scaling = build_scaling(PhysicalConstants::default(), overrides)?;
    let quad = QuadratureRule::gauss_legendre(64)?;
    let b = crate::gpc::GpcBasis::new(basis, &quad);
    let k = KernelMatrices::new(&scaling, &b, &quad)?;
    let paper = crate::kernels::compute_c_minus_analytic(&scaling)?;
    let sc = [1.0, b.scale];
    let mut analytic = paper;
    for i in 0..2 {
        for j in 0..2 {
            analytic[i][j] = sc[i] * sc[j] * paper[i][j];
        }
    }
    Ok(serde_json::json!({
        "constants": {
            "A": scaling.a,
            "B": scaling.b,
            "n_q": scaling.n_q,
            "N": scaling.n_divisor,
            "beta": scaling.beta,
        },
        "basis": basis,
        "gram": k.gram,
        "c_minus": k.c_minus,
        "c_minus_polylog": analytic,
        "c_plus": k.c_plus,
        "recomb_split": k.recomb_split,
        "galerkin_minus": k.galerkin_minus(),
        "galerkin_plus": k.galerkin_plus(),
        "galerkin_split": k.galerkin_split(),
        "k_optical": k.k_optical,
        "k0_acoustic": k.k0_acoustic,
    }))
}
