//! Subcommand implementations. Each writes its tables plus a manifest into
//! the output directory and reports whether any sweep point failed.

use std::path::{Path, PathBuf};

use fluxleak::branch::compute_branches;
use fluxleak::calibration::{
    fit_attenuation_scale, kerr_coefficient, photons_from_power, DriveSetting, QubitBranch, StarkDataset,
};
use fluxleak::composite::{CompositeSystem, DeviceParams, HilbertSpec};
use fluxleak::floquet::sweep::{drive_frequency, epsilon_for_photons, sweep_qnd_curves};
use fluxleak::fluxonium::level_name;
use fluxleak::readout::{bootstrap_probabilities, fit_readout_gaussians, label_pairs};
use serde_json::json;

use crate::config::{parse_level, BranchJob, Config, SweepScenario};
use crate::manifest::{FailureRecord, Manifest, PointRecord};
use crate::output::{
    read_shots, read_stark, write_branches, write_grid, write_probabilities, write_qnd_curve, write_shots, GridRow,
};
use crate::CliError;

#[derive(Debug)]
pub struct RunOutcome {
    pub manifest: PathBuf,
    /// Some sweep points failed; their errors are in the manifest.
    pub partial: bool,
}

fn prepare(out: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(out).map_err(|e| CliError::Io(format!("{}: {e}", out.display())))
}

fn finish(manifest: Manifest, out: &Path) -> Result<RunOutcome, CliError> {
    let partial = !manifest.failures.is_empty();
    let path = manifest.write(out)?;
    Ok(RunOutcome { manifest: path, partial })
}

fn write_json(out: &Path, name: &str, value: &serde_json::Value, manifest: &mut Manifest) -> Result<(), CliError> {
    std::fs::write(out.join(name), serde_json::to_string_pretty(value)?)?;
    manifest.record_output(out, name)
}

/// Drive amplitudes for a scenario: given directly, or from photon-number
/// targets through the linear response of the resonator seen by state `q`.
fn epsilon_grid(s: &SweepScenario, sys: &CompositeSystem, q: usize) -> Result<Vec<f64>, CliError> {
    if let Some(e) = &s.epsilon {
        return Ok(e.clone());
    }
    let targets = s.n_bar.as_ref().expect("validated grid");
    let omega_d = drive_frequency(sys, q, &s.solver)?;
    let detuning = omega_d - sys.dressed_resonator_frequency(q)?;
    Ok(targets
        .iter()
        .map(|&n| epsilon_for_photons(n, sys.device.kappa, detuning))
        .collect())
}

pub fn run_sweep(cfg: &Config, out: &Path, threads: usize) -> Result<RunOutcome, CliError> {
    prepare(out)?;
    let mut manifest = Manifest::new("sweep", cfg.clone(), threads);
    for (k, s) in cfg.scenario.iter().enumerate() {
        let at = format!("scenario[{k}]");
        let dev = s.device.resolve(&format!("{at}.device"))?;
        let tls = s.tls.as_ref().map(|t| t.resolve(&format!("{at}.tls"))).transpose()?;
        let spec = s.hilbert.resolve(&format!("{at}.hilbert"))?;
        let omegas = s.omega_r_values.clone();
        let values = omegas.clone().unwrap_or_else(|| vec![dev.omega_r]);
        for state in &s.initial_states {
            let q = parse_level(state, &format!("{at}.initial_states"))?;
            let mut grid_rows = Vec::new();
            for &w in &values {
                let dev_w = DeviceParams { omega_r: w, ..dev };
                let sys = CompositeSystem::new(dev_w, spec)?;
                let eps = epsilon_grid(s, &sys, q)?;
                let curves = sweep_qnd_curves(dev_w, tls.as_ref(), spec, &eps, &[q], &s.solver)?;
                let curve = &curves[0];
                let job = match omegas {
                    Some(_) => format!("{}_wr{w}", s.name),
                    None => s.name.clone(),
                };
                let file = format!("sweep_{job}_{}.csv", level_name(q));
                write_qnd_curve(&out.join(&file), curve)?;
                manifest.record_output(out, &file)?;
                for (index, p) in curve.points.iter().enumerate() {
                    manifest.points.push(PointRecord {
                        job: job.clone(),
                        initial_state: level_name(q),
                        index,
                        epsilon: p.epsilon,
                        wall_time: p.wall_time,
                        converged: p.converged,
                    });
                }
                for f in &curve.failures {
                    manifest.failures.push(FailureRecord {
                        job: job.clone(),
                        initial_state: level_name(q),
                        index: f.index,
                        epsilon: f.epsilon,
                        message: f.message.clone(),
                    });
                }
                if omegas.is_some() {
                    let chi = sys.dispersive_shift()?;
                    grid_rows.extend(curve.points.iter().map(|p| GridRow {
                        omega_r: w,
                        chi,
                        epsilon: p.epsilon,
                        n_bar: p.n_bar,
                        p_same: p.p(q),
                        converged: p.converged,
                    }));
                }
            }
            if omegas.is_some() {
                let file = format!("grid_{}_{}.csv", s.name, level_name(q));
                write_grid(&out.join(&file), &grid_rows)?;
                manifest.record_output(out, &file)?;
            }
        }
    }
    finish(manifest, out)
}

fn branch_job(job: &BranchJob, at: &str) -> Result<(DeviceParams, HilbertSpec), CliError> {
    Ok((job.device.resolve(&format!("{at}.device"))?, job.hilbert.resolve(&format!("{at}.hilbert"))?))
}

pub fn run_branch(cfg: &Config, out: &Path, threads: usize) -> Result<RunOutcome, CliError> {
    prepare(out)?;
    let mut manifest = Manifest::new("branch", cfg.clone(), threads);
    for (k, job) in cfg.branch.iter().enumerate() {
        let (dev, spec) = branch_job(job, &format!("branch[{k}]"))?;
        let analysis = compute_branches(dev, spec, job.epsilon, job.n_levels_tracked)?;
        let file = format!("branch_{}.csv", job.name);
        write_branches(&out.join(&file), &analysis)?;
        manifest.record_output(out, &file)?;
        let onsets: Vec<_> = analysis
            .branches
            .iter()
            .map(|b| json!({"label": level_name(b.label), "onset_n": b.transfer_onset(job.onset_drop)}))
            .collect();
        let summary = json!({
            "name": job.name,
            "onset_drop": job.onset_drop,
            "onsets": onsets,
            "crossings": analysis.crossings,
        });
        write_json(out, &format!("branch_{}.json", job.name), &summary, &mut manifest)?;
    }
    finish(manifest, out)
}

pub fn run_stats(shots: &Path, cfg: &Config, out: &Path, threads: usize) -> Result<RunOutcome, CliError> {
    let sc = cfg
        .stats
        .as_ref()
        .ok_or_else(|| CliError::Config("stats: section missing".into()))?;
    let table = read_shots(shots)?;
    prepare(out)?;
    let mut manifest = Manifest::new("stats", cfg.clone(), threads);
    manifest.record_input(shots)?;
    manifest.seeds.push(sc.bootstrap.seed);
    let fit_i = fit_readout_gaussians(&table.initial, sc.initial_components, sc.fit)?;
    let fit_f = fit_readout_gaussians(&table.final_, sc.final_components, sc.fit)?;
    let e_init = match &sc.error_init {
        Some(m) => m.resolve("stats.error_init")?,
        None => fit_i.error_matrix()?,
    };
    let e_final = match &sc.error_final {
        Some(m) => m.resolve("stats.error_final")?,
        None => fit_f.error_matrix()?,
    };
    let pairs = label_pairs(&table, &fit_i, &fit_f)?;
    let boot = bootstrap_probabilities(&pairs, sc.bootstrap, &e_init, &e_final)?;
    write_probabilities(&out.join("stats_probabilities.csv"), &boot)?;
    manifest.record_output(out, "stats_probabilities.csv")?;
    let summary = json!({
        "n_shots": table.n_shots(),
        "fit_initial": fit_i,
        "fit_final": fit_f,
        "snr_initial": fit_i.snr(),
        "snr_final": fit_f.snr(),
        "error_initial": e_init,
        "error_final": e_final,
        "bootstrap": boot,
    });
    write_json(out, "stats_summary.json", &summary, &mut manifest)?;
    finish(manifest, out)
}

pub fn run_calibrate(data: &Path, cfg: &Config, out: &Path, threads: usize) -> Result<RunOutcome, CliError> {
    let cc = cfg
        .calibrate
        .as_ref()
        .ok_or_else(|| CliError::Config("calibrate: section missing".into()))?;
    let records = read_stark(data)?;
    prepare(out)?;
    let mut manifest = Manifest::new("calibrate", cfg.clone(), threads);
    manifest.record_input(data)?;
    let dev = cc.device.resolve("calibrate.device")?;
    let spec = cc.hilbert.resolve("calibrate.hilbert")?;
    let chi = match cc.chi {
        Some(c) => c,
        None => CompositeSystem::new(dev, spec)?.dispersive_shift()?,
    };
    let drive = DriveSetting::from_device(&dev, chi, cc.delta);
    let dataset = StarkDataset {
        records: records.clone(),
        drive,
    };
    let fit = fit_attenuation_scale(&dataset)?;
    let mut report = json!({
        "chi": chi,
        "delta": cc.delta,
        "alpha": fit.alpha,
        "alpha_db": fit.alpha_db,
        "omega_q0": fit.omega_q0,
        "slope": fit.slope,
        "slope_stderr": fit.slope_stderr,
        "residuals": fit.residuals,
        "rms_residual": fit.rms_residual,
        "slope_unresolved": fit.slope_unresolved,
    });
    if cc.photons && fit.alpha > 0.0 {
        let kerr = kerr_coefficient(dev, spec, cc.branch)?;
        let mut w = csv::Writer::from_path(out.join("calibration_photons.csv"))?;
        w.write_record(["p_rf_watts", "n_bar", "method"])?;
        for r in &records {
            let s = photons_from_power(r.p_rf, fit.alpha, &drive, cc.branch, kerr)?;
            w.write_record([r.p_rf.to_string(), s.n_bar.to_string(), format!("{:?}", s.method)])?;
        }
        w.flush()?;
        manifest.record_output(out, "calibration_photons.csv")?;
        report["kerr"] = json!(kerr);
        report["branch"] = json!(match cc.branch {
            QubitBranch::Plus => "plus",
            QubitBranch::Minus => "minus",
        });
    }
    write_json(out, "calibration.json", &report, &mut manifest)?;
    finish(manifest, out)
}

pub fn run_simulate_shots(cfg: &Config, out: &Path, threads: usize) -> Result<RunOutcome, CliError> {
    let sc = cfg
        .synthetic
        .as_ref()
        .ok_or_else(|| CliError::Config("synthetic: section missing".into()))?;
    prepare(out)?;
    let mut manifest = Manifest::new("simulate-shots", cfg.clone(), threads);
    manifest.seeds.push(sc.seed);
    let shots = sc.generator().generate(sc.n_shots, sc.seed)?;
    write_shots(&out.join("shots.csv"), &shots.table)?;
    manifest.record_output(out, "shots.csv")?;
    finish(manifest, out)
}

/// Repeat the run recorded in a manifest into a new output directory.
pub fn rerun(manifest_path: &Path, out: &Path, threads: usize) -> Result<RunOutcome, CliError> {
    let m = Manifest::load(manifest_path)?;
    let input = || {
        m.inputs
            .first()
            .map(|f| PathBuf::from(&f.path))
            .ok_or_else(|| CliError::Config("manifest records no input file".into()))
    };
    match m.command.as_str() {
        "sweep" => run_sweep(&m.config, out, threads),
        "branch" => run_branch(&m.config, out, threads),
        "stats" => run_stats(&input()?, &m.config, out, threads),
        "calibrate" => run_calibrate(&input()?, &m.config, out, threads),
        "simulate-shots" => run_simulate_shots(&m.config, out, threads),
        other => Err(CliError::Config(format!("manifest command \"{other}\" is unknown"))),
    }
}
