//! Run configuration. One TOML file describes every job; all frequencies are
//! in GHz, powers in watts, flux in units of Φ₀.

use std::path::Path;

use fluxleak::calibration::QubitBranch;
use fluxleak::composite::{DeviceParams, HilbertSpec, TlsParams};
use fluxleak::floquet::SolverOptions;
use fluxleak::fluxonium::{level_index, FluxoniumParams};
use fluxleak::readout::{BootstrapOptions, ErrorMatrix, FitOptions, Iq, SyntheticReadout};
use fluxleak::{devices, Error};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub schema_version: u32,
    #[serde(default)]
    pub scenario: Vec<SweepScenario>,
    #[serde(default)]
    pub branch: Vec<BranchJob>,
    pub stats: Option<StatsConfig>,
    pub calibrate: Option<CalibrationConfig>,
    pub synthetic: Option<SyntheticConfig>,
}

/// Device parameters, optionally starting from a named row ("A", "B", "C").
/// Explicit keys override the preset.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceConfig {
    pub preset: Option<String>,
    pub e_j: Option<f64>,
    pub e_c: Option<f64>,
    pub e_l: Option<f64>,
    pub phi_ext: Option<f64>,
    pub g: Option<f64>,
    pub omega_r: Option<f64>,
    pub kappa: Option<f64>,
}

impl DeviceConfig {
    pub fn resolve(&self, at: &str) -> Result<DeviceParams, CliError> {
        let base = match &self.preset {
            Some(name) => Some(devices::by_name(name).ok_or_else(|| {
                CliError::Config(format!("{at}.preset: unknown device \"{name}\" (expected A, B or C)"))
            })?),
            None => None,
        };
        let pick = |v: Option<f64>, from: Option<f64>, key: &str| {
            v.or(from)
                .ok_or_else(|| CliError::Config(format!("{at}.{key}: missing (no preset given)")))
        };
        let dev = DeviceParams {
            fluxonium: FluxoniumParams {
                e_j: pick(self.e_j, base.map(|b| b.fluxonium.e_j), "e_j")?,
                e_c: pick(self.e_c, base.map(|b| b.fluxonium.e_c), "e_c")?,
                e_l: pick(self.e_l, base.map(|b| b.fluxonium.e_l), "e_l")?,
                phi_ext: pick(self.phi_ext, base.map(|b| b.fluxonium.phi_ext), "phi_ext")?,
            },
            g: pick(self.g, base.map(|b| b.g), "g")?,
            omega_r: pick(self.omega_r, base.map(|b| b.omega_r), "omega_r")?,
            kappa: pick(self.kappa, base.map(|b| b.kappa), "kappa")?,
        };
        dev.validate().map_err(|e| field_error(at, e))?;
        Ok(dev)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TlsConfig {
    pub delta_tls: f64,
    pub g_tls: f64,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default)]
    pub photon_order: u32,
}

impl TlsConfig {
    pub fn resolve(&self, at: &str) -> Result<TlsParams, CliError> {
        let t = TlsParams {
            delta_tls: self.delta_tls,
            g_tls: self.g_tls,
            temperature: self.temperature,
            photon_order: self.photon_order,
        };
        t.validate().map_err(|e| field_error(at, e))?;
        Ok(t)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HilbertConfig {
    pub n_flux: usize,
    pub n_fock: usize,
    pub n_sidebands: usize,
    pub flux_basis: usize,
    pub dense_cap: usize,
    pub floquet_cap: usize,
}

impl Default for HilbertConfig {
    fn default() -> Self {
        let d = HilbertSpec::default();
        Self {
            n_flux: d.n_flux,
            n_fock: d.n_fock,
            n_sidebands: d.n_sidebands,
            flux_basis: d.flux_basis,
            dense_cap: d.dense_cap,
            floquet_cap: d.floquet_cap,
        }
    }
}

impl HilbertConfig {
    pub fn resolve(&self, at: &str) -> Result<HilbertSpec, CliError> {
        let spec = HilbertSpec {
            n_flux: self.n_flux,
            n_fock: self.n_fock,
            tls_present: false,
            n_sidebands: self.n_sidebands,
            flux_basis: self.flux_basis,
            dense_cap: self.dense_cap,
            floquet_cap: self.floquet_cap,
        };
        spec.validate().map_err(|e| field_error(at, e))?;
        Ok(spec)
    }
}

/// One QND sweep: a device, an optional TLS and a drive grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepScenario {
    pub name: String,
    pub device: DeviceConfig,
    pub tls: Option<TlsConfig>,
    #[serde(default)]
    pub hilbert: HilbertConfig,
    #[serde(default = "default_initial_states")]
    pub initial_states: Vec<String>,
    /// Drive amplitudes ε/2π in GHz.
    pub epsilon: Option<Vec<f64>>,
    /// Target photon numbers, converted to ε with the linear-cavity response.
    pub n_bar: Option<Vec<f64>>,
    /// Repeat the sweep for each resonator frequency (the χ axis of a 2D map).
    pub omega_r_values: Option<Vec<f64>>,
    #[serde(default)]
    pub solver: SolverOptions,
}

fn default_initial_states() -> Vec<String> {
    vec!["g".into(), "e".into()]
}

/// Parsed initial-state label.
pub fn parse_level(name: &str, at: &str) -> Result<usize, CliError> {
    level_index(name)
        .or_else(|| name.parse().ok())
        .ok_or_else(|| CliError::Config(format!("{at}: unknown fluxonium level \"{name}\"")))
}

impl SweepScenario {
    pub fn validate(&self, at: &str) -> Result<(), CliError> {
        check_name(&self.name, at)?;
        self.device.resolve(&format!("{at}.device"))?;
        if let Some(t) = &self.tls {
            t.resolve(&format!("{at}.tls"))?;
        }
        let spec = self.hilbert.resolve(&format!("{at}.hilbert"))?;
        for s in &self.initial_states {
            let q = parse_level(s, &format!("{at}.initial_states"))?;
            if q >= spec.n_flux {
                return Err(CliError::Config(format!(
                    "{at}.initial_states: level {s} is not below n_flux = {}",
                    spec.n_flux
                )));
            }
        }
        let grid = match (&self.epsilon, &self.n_bar) {
            (Some(e), None) => e,
            (None, Some(n)) => n,
            _ => {
                return Err(CliError::Config(format!(
                    "{at}: give exactly one of `epsilon` or `n_bar`"
                )))
            }
        };
        if grid.is_empty() {
            return Err(CliError::Config(format!("{at}: drive grid is empty")));
        }
        if let Some(v) = grid.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(CliError::Config(format!("{at}: drive grid value {v} must be non-negative")));
        }
        if let Some(ws) = &self.omega_r_values {
            if let Some(w) = ws.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
                return Err(CliError::Config(format!("{at}.omega_r_values: {w} must be positive")));
            }
        }
        if self.solver.window.k_kept == 0 {
            return Err(CliError::Config(format!("{at}.solver.window.k_kept: must be positive")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BranchJob {
    pub name: String,
    pub device: DeviceConfig,
    #[serde(default)]
    pub hilbert: HilbertConfig,
    #[serde(default)]
    pub epsilon: f64,
    #[serde(default = "default_tracked")]
    pub n_levels_tracked: usize,
    /// Population drop of a branch's own level that marks its transfer onset.
    #[serde(default = "default_onset_drop")]
    pub onset_drop: f64,
}

fn default_tracked() -> usize {
    6
}

fn default_onset_drop() -> f64 {
    0.1
}

impl BranchJob {
    pub fn validate(&self, at: &str) -> Result<(), CliError> {
        check_name(&self.name, at)?;
        self.device.resolve(&format!("{at}.device"))?;
        let spec = self.hilbert.resolve(&format!("{at}.hilbert"))?;
        if self.n_levels_tracked == 0 || self.n_levels_tracked > spec.n_flux {
            return Err(CliError::Config(format!(
                "{at}.n_levels_tracked: must be between 1 and n_flux = {}",
                spec.n_flux
            )));
        }
        if !(self.epsilon.is_finite() && self.epsilon >= 0.0) {
            return Err(CliError::Config(format!("{at}.epsilon: must be non-negative")));
        }
        Ok(())
    }
}

/// Explicit error matrix given by its off-diagonal entries (measured, true, p).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErrorMatrixConfig {
    pub dim: usize,
    pub errors: Vec<(usize, usize, f64)>,
}

impl ErrorMatrixConfig {
    pub fn resolve(&self, at: &str) -> Result<ErrorMatrix, CliError> {
        ErrorMatrix::from_off_diagonal(self.dim, &self.errors).map_err(|e| field_error(at, e))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StatsConfig {
    #[serde(default = "two")]
    pub initial_components: usize,
    #[serde(default = "two")]
    pub final_components: usize,
    #[serde(default)]
    pub fit: FitOptions,
    #[serde(default)]
    pub bootstrap: BootstrapOptions,
    /// Overrides for the error matrices; by default they follow from the fits.
    pub error_init: Option<ErrorMatrixConfig>,
    pub error_final: Option<ErrorMatrixConfig>,
}

fn two() -> usize {
    2
}

impl StatsConfig {
    pub fn validate(&self, at: &str) -> Result<(), CliError> {
        for (k, v) in [("initial_components", self.initial_components), ("final_components", self.final_components)] {
            if !(2..=3).contains(&v) {
                return Err(CliError::Config(format!("{at}.{k}: must be 2 or 3")));
            }
        }
        if self.bootstrap.n_samples == 0 || self.bootstrap.sample_size == 0 {
            return Err(CliError::Config(format!("{at}.bootstrap: sizes must be positive")));
        }
        for (k, m, want) in [
            ("error_init", &self.error_init, self.initial_components),
            ("error_final", &self.error_final, self.final_components),
        ] {
            if let Some(m) = m {
                let e = m.resolve(&format!("{at}.{k}"))?;
                if e.dim() != want {
                    return Err(CliError::Config(format!("{at}.{k}: dimension {} does not match {want} components", e.dim())));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationConfig {
    pub device: DeviceConfig,
    #[serde(default)]
    pub hilbert: HilbertConfig,
    /// Drive detuning Δ = ω_rf - ω_r.
    #[serde(default)]
    pub delta: f64,
    /// Dispersive shift; computed from the device when absent.
    pub chi: Option<f64>,
    /// Also convert every record to photon numbers with the Kerr correction.
    #[serde(default)]
    pub photons: bool,
    #[serde(default = "default_branch")]
    pub branch: QubitBranch,
}

fn default_branch() -> QubitBranch {
    QubitBranch::Plus
}

impl CalibrationConfig {
    pub fn validate(&self, at: &str) -> Result<(), CliError> {
        self.device.resolve(&format!("{at}.device"))?;
        self.hilbert.resolve(&format!("{at}.hilbert"))?;
        if !self.delta.is_finite() {
            return Err(CliError::Config(format!("{at}.delta: must be finite")));
        }
        if let Some(c) = self.chi {
            if !c.is_finite() {
                return Err(CliError::Config(format!("{at}.chi: must be finite")));
            }
        }
        Ok(())
    }
}

/// Generator settings for synthetic shot tables.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticConfig {
    pub centers: Vec<(f64, f64)>,
    pub sigma: f64,
    pub prior: Vec<f64>,
    /// P(f | i) indexed [f][i].
    pub transitions: Vec<Vec<f64>>,
    pub n_shots: usize,
    #[serde(default)]
    pub seed: u64,
}

impl SyntheticConfig {
    pub fn generator(&self) -> SyntheticReadout {
        SyntheticReadout {
            centers: self.centers.iter().map(|&(i, q)| Iq::new(i, q)).collect(),
            sigma: self.sigma,
            prior: self.prior.clone(),
            transitions: self.transitions.clone(),
        }
    }

    pub fn validate(&self, at: &str) -> Result<(), CliError> {
        let d = self.centers.len();
        if !(2..=3).contains(&d) {
            return Err(CliError::Config(format!("{at}.centers: need 2 or 3 states")));
        }
        if !(self.sigma > 0.0) {
            return Err(CliError::Config(format!("{at}.sigma: must be positive")));
        }
        if self.prior.len() != d || (self.prior.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(CliError::Config(format!("{at}.prior: need {d} probabilities summing to 1")));
        }
        if self.transitions.len() != d || self.transitions.iter().any(|r| r.len() != d) {
            return Err(CliError::Config(format!("{at}.transitions: need a {d}x{d} table")));
        }
        for i in 0..d {
            let s: f64 = (0..d).map(|f| self.transitions[f][i]).sum();
            if (s - 1.0).abs() > 1e-9 {
                return Err(CliError::Config(format!("{at}.transitions: column {i} sums to {s}")));
            }
        }
        if self.n_shots == 0 {
            return Err(CliError::Config(format!("{at}.n_shots: must be positive")));
        }
        Ok(())
    }
}

fn check_name(name: &str, at: &str) -> Result<(), CliError> {
    if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-' || c == '.') {
        return Err(CliError::Config(format!(
            "{at}.name: \"{name}\" must be non-empty and use only letters, digits, '_', '-' or '.'"
        )));
    }
    Ok(())
}

fn field_error(at: &str, e: Error) -> CliError {
    CliError::Config(format!("{at}: {e}"))
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: Config = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(CliError::Config(format!(
                "schema_version: {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        let mut names = std::collections::HashSet::new();
        for (k, s) in self.scenario.iter().enumerate() {
            s.validate(&format!("scenario[{k}]"))?;
            if !names.insert(&s.name) {
                return Err(CliError::Config(format!("scenario[{k}].name: \"{}\" is used twice", s.name)));
            }
        }
        let mut names = std::collections::HashSet::new();
        for (k, b) in self.branch.iter().enumerate() {
            b.validate(&format!("branch[{k}]"))?;
            if !names.insert(&b.name) {
                return Err(CliError::Config(format!("branch[{k}].name: \"{}\" is used twice", b.name)));
            }
        }
        if let Some(s) = &self.stats {
            s.validate("stats")?;
        }
        if let Some(c) = &self.calibrate {
            c.validate("calibrate")?;
        }
        if let Some(s) = &self.synthetic {
            s.validate("synthetic")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn device_rows_round_trip_exactly() {
        for name in ["A", "B", "C"] {
            let dev = devices::by_name(name).unwrap();
            let cfg = DeviceConfig {
                preset: None,
                e_j: Some(dev.fluxonium.e_j),
                e_c: Some(dev.fluxonium.e_c),
                e_l: Some(dev.fluxonium.e_l),
                phi_ext: Some(dev.fluxonium.phi_ext),
                g: Some(dev.g),
                omega_r: Some(dev.omega_r),
                kappa: Some(dev.kappa),
            };
            let text = toml::to_string(&cfg).unwrap();
            let back: DeviceConfig = toml::from_str(&text).unwrap();
            assert_eq!(back.resolve("device").unwrap(), dev);
        }
    }

    #[test]
    fn field_level_diagnostics() {
        let bad = r#"
schema_version = 1
[[scenario]]
name = "x"
epsilon = [0.001]
[scenario.device]
preset = "A"
kappa = -1.0
"#;
        let err = Config::from_toml(bad).unwrap_err().to_string();
        assert!(err.contains("scenario[0].device") && err.contains("kappa"), "{err}");
        let unknown = "schema_version = 1\nbogus = 3\n";
        assert!(Config::from_toml(unknown).unwrap_err().to_string().contains("bogus"));
    }

    #[test]
    fn empty_config_is_valid() {
        let c = Config::from_toml("schema_version = 1\n").unwrap();
        assert!(c.scenario.is_empty());
    }
}
