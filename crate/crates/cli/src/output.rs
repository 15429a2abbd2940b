//! CSV readers and writers for the plot-ready result tables.

use std::path::Path;

use fluxleak::branch::BranchAnalysis;
use fluxleak::calibration::StarkRecord;
use fluxleak::floquet::QndCurve;
use fluxleak::fluxonium::level_name;
use fluxleak::readout::{BootstrapResult, Iq, ShotTable};
use serde::Deserialize;

use crate::CliError;

/// Fluxonium levels reported by name; everything above goes into p_other.
pub const NAMED_LEVELS: usize = 5;

fn open_reader(path: &Path) -> Result<csv::Reader<std::fs::File>, CliError> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn level_headers(prefix: &str) -> Vec<String> {
    (0..NAMED_LEVELS).map(|k| format!("{prefix}{}", level_name(k))).collect()
}

pub fn write_qnd_curve(path: &Path, curve: &QndCurve) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["epsilon_ghz".to_string(), "n_bar".to_string()];
    header.extend(level_headers("p_"));
    header.extend(["p_other".to_string(), "converged_flag".to_string()]);
    w.write_record(&header)?;
    for p in &curve.points {
        let mut row = vec![p.epsilon.to_string(), p.n_bar.to_string()];
        row.extend((0..NAMED_LEVELS).map(|k| p.p(k).to_string()));
        row.push(p.p_other.to_string());
        row.push(u8::from(p.converged).to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// One row per (ω_r, ε) point of a sweep repeated over resonator frequencies.
pub struct GridRow {
    pub omega_r: f64,
    pub chi: f64,
    pub epsilon: f64,
    pub n_bar: f64,
    pub p_same: f64,
    pub converged: bool,
}

pub fn write_grid(path: &Path, rows: &[GridRow]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["omega_r_ghz", "chi_ghz", "epsilon_ghz", "n_bar", "p_same", "converged_flag"])?;
    for r in rows {
        w.write_record([
            r.omega_r.to_string(),
            r.chi.to_string(),
            r.epsilon.to_string(),
            r.n_bar.to_string(),
            r.p_same.to_string(),
            u8::from(r.converged).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_branches(path: &Path, analysis: &BranchAnalysis) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["label".to_string(), "n".to_string()];
    header.extend(level_headers("p_"));
    header.extend(["mean_flux_index".to_string(), "photons".to_string(), "energy_ghz".to_string()]);
    w.write_record(&header)?;
    for b in &analysis.branches {
        for m in &b.members {
            let mut row = vec![level_name(b.label), m.n.to_string()];
            row.extend((0..NAMED_LEVELS).map(|k| m.probabilities.get(k).copied().unwrap_or(0.0).to_string()));
            row.push(m.mean_flux_index().to_string());
            row.push(m.photons.to_string());
            row.push(m.energy.to_string());
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Deserialize)]
struct ShotRow {
    #[allow(dead_code)]
    rep_index: u64,
    i_init: f64,
    q_init: f64,
    i_final: f64,
    q_final: f64,
}

pub fn read_shots(path: &Path) -> Result<ShotTable, CliError> {
    let mut r = open_reader(path)?;
    let mut table = ShotTable::default();
    for (k, row) in r.deserialize::<ShotRow>().enumerate() {
        let row = row.map_err(|e| CliError::Io(format!("{} row {}: {e}", path.display(), k + 1)))?;
        table.initial.push(Iq::new(row.i_init, row.q_init));
        table.final_.push(Iq::new(row.i_final, row.q_final));
    }
    table.validate()?;
    Ok(table)
}

pub fn write_shots(path: &Path, table: &ShotTable) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["rep_index", "i_init", "q_init", "i_final", "q_final"])?;
    for (k, (a, b)) in table.initial.iter().zip(&table.final_).enumerate() {
        w.write_record([k.to_string(), a.i.to_string(), a.q.to_string(), b.i.to_string(), b.q.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Deserialize)]
struct StarkRow {
    p_rf_watts: f64,
    f_q_ghz: f64,
}

pub fn read_stark(path: &Path) -> Result<Vec<StarkRecord>, CliError> {
    let mut r = open_reader(path)?;
    r.deserialize::<StarkRow>()
        .enumerate()
        .map(|(k, row)| {
            row.map(|s| StarkRecord {
                p_rf: s.p_rf_watts,
                f_q: s.f_q_ghz,
            })
            .map_err(|e| CliError::Io(format!("{} row {}: {e}", path.display(), k + 1)))
        })
        .collect()
}

pub fn write_probabilities(path: &Path, res: &BootstrapResult) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["initial", "final", "p", "sd"])?;
    let state = |k: usize| if k == 2 { "o".to_string() } else { level_name(k) };
    for i in 0..res.mean.first().map_or(0, |r| r.len()) {
        for f in 0..res.mean.len() {
            w.write_record([state(i), state(f), res.mean[f][i].to_string(), res.sd[f][i].to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}
