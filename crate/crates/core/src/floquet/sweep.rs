//! QND transition-probability curves over a grid of drive amplitudes.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::eigen::{select_quasi_eigenbasis, WindowOptions};
use super::evolve::{evolve_to_fixed_point, EvolutionDiagnostics, EvolutionOptions};
use super::lattice::{FloquetSystem, Gauge};
use crate::composite::{CompositeSystem, DeviceParams, DriveParams, HilbertSpec, TlsParams};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DriveReference {
    /// Resonator frequency dressed by the initial fluxonium state.
    #[default]
    Dressed,
    /// Bare ω_r.
    Bare,
    /// Midway between the resonator frequencies dressed by |g⟩ and |e⟩, so
    /// both qubit states see the drive detuned by χ.
    Midpoint,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    pub gauge: Gauge,
    pub drive_reference: DriveReference,
    /// Fixed drive frequency (GHz), overriding `drive_reference`.
    pub omega_d: Option<f64>,
    /// Start the TLS in its thermal state instead of the ground state.
    pub thermal_tls: bool,
    pub window: WindowOptions,
    pub evolution: EvolutionOptions,
}

#[derive(Clone, Debug, Serialize)]
pub struct QndPoint {
    pub epsilon: f64,
    pub omega_d: f64,
    pub n_bar: f64,
    pub populations: Vec<f64>,
    pub p_other: f64,
    pub converged: bool,
    pub capture: f64,
    pub k_kept: usize,
    pub wall_time: f64,
    pub diagnostics: EvolutionDiagnostics,
}

impl QndPoint {
    pub fn p(&self, level: usize) -> f64 {
        self.populations.get(level).copied().unwrap_or(0.0)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct PointFailure {
    pub index: usize,
    pub epsilon: f64,
    pub message: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct QndCurve {
    pub initial_state: usize,
    pub points: Vec<QndPoint>,
    pub failures: Vec<PointFailure>,
}

impl QndCurve {
    pub fn n_bar(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.n_bar).collect()
    }

    pub fn probability(&self, level: usize) -> Vec<f64> {
        self.points.iter().map(|p| p.p(level)).collect()
    }
}

pub fn drive_frequency(sys: &CompositeSystem, q: usize, opts: &SolverOptions) -> Result<f64> {
    if let Some(w) = opts.omega_d {
        return Ok(w);
    }
    match opts.drive_reference {
        DriveReference::Dressed => sys.dressed_resonator_frequency(q),
        DriveReference::Bare => Ok(sys.device.omega_r),
        DriveReference::Midpoint => {
            let wg = sys.dressed_resonator_frequency(crate::fluxonium::G)?;
            let we = sys.dressed_resonator_frequency(crate::fluxonium::E)?;
            Ok(0.5 * (wg + we))
        }
    }
}

/// One drive amplitude, one initial fluxonium level.
pub fn run_point(
    sys: &CompositeSystem,
    tls: Option<&TlsParams>,
    epsilon: f64,
    omega_d: f64,
    q: usize,
    opts: &SolverOptions,
) -> Result<QndPoint> {
    let start = Instant::now();
    let drive = DriveParams { epsilon, omega_d };
    let fs = FloquetSystem::build(sys, drive, tls, opts.gauge)?;
    let thermal = match (opts.thermal_tls, tls) {
        (true, Some(t)) => Some(t.thermal_population()),
        _ => None,
    };
    let rho0 = fs.initial_state(q, thermal)?;
    let basis = select_quasi_eigenbasis(&fs.operator, &rho0, &opts.window)?;
    let res = evolve_to_fixed_point(&fs, &basis, &rho0, &opts.evolution)?;
    let p_other = res.p_other();
    Ok(QndPoint {
        epsilon,
        omega_d,
        n_bar: res.n_bar,
        populations: res.populations,
        p_other,
        converged: res.converged,
        capture: basis.capture,
        k_kept: basis.k_kept(),
        wall_time: start.elapsed().as_secs_f64(),
        diagnostics: res.diagnostics,
    })
}

/// Points run in parallel; output order follows the grid.
pub fn sweep_qnd_curves(
    dev: DeviceParams,
    tls: Option<&TlsParams>,
    spec: HilbertSpec,
    epsilon_grid: &[f64],
    initial_states: &[usize],
    opts: &SolverOptions,
) -> Result<Vec<QndCurve>> {
    if epsilon_grid.is_empty() {
        return Err(Error::InvalidInput("epsilon grid is empty".into()));
    }
    let spec = HilbertSpec {
        tls_present: tls.is_some(),
        ..spec
    };
    let sys = CompositeSystem::new(dev, spec)?;
    let mut curves = Vec::new();
    for &q in initial_states {
        let omega_d = drive_frequency(&sys, q, opts)?;
        let results: Vec<Result<QndPoint>> = epsilon_grid
            .par_iter()
            .map(|&eps| run_point(&sys, tls, eps, omega_d, q, opts))
            .collect();
        let mut points = Vec::new();
        let mut failures = Vec::new();
        for (index, (r, &eps)) in results.into_iter().zip(epsilon_grid).enumerate() {
            match r {
                Ok(p) => points.push(p),
                Err(e) => failures.push(PointFailure {
                    index,
                    epsilon: eps,
                    message: e.to_string(),
                }),
            }
        }
        curves.push(QndCurve {
            initial_state: q,
            points,
            failures,
        });
    }
    Ok(curves)
}

/// Linear-cavity estimate of the amplitude giving `n_bar` photons when the
/// drive is `detuning` (GHz) away from the resonator: ε = 2 √n̄ √((κ/2)² + δ²).
pub fn epsilon_for_photons(n_bar: f64, kappa: f64, detuning: f64) -> f64 {
    2.0 * n_bar.max(0.0).sqrt() * (0.25 * kappa * kappa + detuning * detuning).sqrt()
}

/// Length of the leading stretch over which `n_bar` does not decrease.
pub fn monotone_prefix(n_bar: &[f64]) -> usize {
    match n_bar.windows(2).position(|w| w[1] < w[0]) {
        Some(i) => i + 1,
        None => n_bar.len(),
    }
}

/// Amplitudes reaching each target photon number, by interpolating ε against √n̄
/// on the monotone part of a measured ε ↦ n̄ map. Targets outside it give `None`.
pub fn invert_photon_map(epsilon: &[f64], n_bar: &[f64], targets: &[f64]) -> Vec<Option<f64>> {
    let m = monotone_prefix(n_bar).min(epsilon.len());
    let xs: Vec<f64> = n_bar[..m].iter().map(|n| n.max(0.0).sqrt()).collect();
    targets
        .iter()
        .map(|&t| {
            let x = t.max(0.0).sqrt();
            (1..m).find(|&i| xs[i - 1] <= x && x <= xs[i]).map(|i| {
                let (x0, x1) = (xs[i - 1], xs[i]);
                if x1 == x0 {
                    epsilon[i - 1]
                } else {
                    epsilon[i - 1] + (epsilon[i] - epsilon[i - 1]) * (x - x0) / (x1 - x0)
                }
            })
        })
        .collect()
}

/// Shift simulated probabilities by a constant offset, clamped to [0, 1].
pub fn subtract_offset(p: &[f64], offset: f64) -> Vec<f64> {
    p.iter().map(|x| (x - offset).clamp(0.0, 1.0)).collect()
}

/// Interior local minima of y(x) as (x, y) after a three-point parabolic refinement.
pub fn local_minima(x: &[f64], y: &[f64]) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    for i in 1..y.len().saturating_sub(1) {
        if y[i] < y[i - 1] && y[i] <= y[i + 1] {
            out.push(parabola_vertex((x[i - 1], y[i - 1]), (x[i], y[i]), (x[i + 1], y[i + 1])));
        }
    }
    out
}

fn parabola_vertex(a: (f64, f64), b: (f64, f64), c: (f64, f64)) -> (f64, f64) {
    let d = (a.0 - b.0) * (a.0 - c.0) * (b.0 - c.0);
    if d == 0.0 {
        return b;
    }
    let p = (c.0 * (b.1 - a.1) + b.0 * (a.1 - c.1) + a.0 * (c.1 - b.1)) / d;
    let q = (c.0 * c.0 * (a.1 - b.1) + b.0 * b.0 * (c.1 - a.1) + a.0 * a.0 * (b.1 - c.1)) / d;
    if p <= 0.0 {
        return b;
    }
    let xv = (-q / (2.0 * p)).clamp(a.0, c.0);
    let r = a.1 - p * a.0 * a.0 - q * a.0;
    (xv, p * xv * xv + q * xv + r)
}

/// First x at which y falls to `level` or below, linearly interpolated.
pub fn threshold_crossing(x: &[f64], y: &[f64], level: f64) -> Option<f64> {
    if y.first().is_some_and(|&y0| y0 <= level) {
        return x.first().copied();
    }
    (1..y.len()).find(|&i| y[i] <= level).map(|i| {
        let (x0, x1, y0, y1) = (x[i - 1], x[i], y[i - 1], y[i]);
        if y1 == y0 {
            x1
        } else {
            x0 + (x1 - x0) * (y0 - level) / (y0 - y1)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inversion_of_linear_cavity_map() {
        let kappa = 0.0006;
        let eps: Vec<f64> = (0..10).map(|i| 0.0003 * i as f64).collect();
        let nb: Vec<f64> = eps.iter().map(|e| (e / kappa) * (e / kappa)).collect();
        let got = invert_photon_map(&eps, &nb, &[4.0, 9.0, 1e6]);
        assert!((got[0].unwrap() - epsilon_for_photons(4.0, kappa, 0.0)).abs() < 1e-12);
        assert!((got[1].unwrap() - epsilon_for_photons(9.0, kappa, 0.0)).abs() < 1e-12);
        assert!(got[2].is_none());
    }

    #[test]
    fn inversion_stops_at_first_resonance() {
        let eps = [0.0, 1.0, 2.0, 3.0, 4.0];
        let nb = [0.0, 1.0, 4.0, 3.0, 16.0];
        assert_eq!(monotone_prefix(&nb), 3);
        assert!(invert_photon_map(&eps, &nb, &[10.0])[0].is_none());
    }

    #[test]
    fn minima_and_crossings() {
        let x: Vec<f64> = (0..21).map(|i| i as f64 * 0.5).collect();
        let y: Vec<f64> = x.iter().map(|v| (v - 6.3).powi(2)).collect();
        let m = local_minima(&x, &y);
        assert_eq!(m.len(), 1);
        assert!((m[0].0 - 6.3).abs() < 1e-9);
        let z: Vec<f64> = x.iter().map(|v| 1.0 - 0.1 * v).collect();
        assert!((threshold_crossing(&x, &z, 0.55).unwrap() - 4.5).abs() < 1e-12);
        assert!(threshold_crossing(&x, &z, -1.0).is_none());
    }

    #[test]
    fn offset_is_clamped() {
        assert_eq!(subtract_offset(&[0.02, 0.5], 0.05), vec![0.0, 0.45]);
    }
}
