//! ac-Stark photon-number calibration: drive power at the resonator input to
//! intraresonator photon number, with a Kerr correction and a fitted
//! attenuation scale.

use serde::{Deserialize, Serialize};

use crate::composite::{CompositeSystem, DeviceParams, HilbertSpec};
use crate::fluxonium::{E, G};
use crate::units::{angular_si, to_db, HBAR};
use crate::{Error, Result};

pub const FIXED_POINT_MAX_ITER: usize = 50;
pub const FIXED_POINT_DAMPING: f64 = 0.5;
const ROOT_TOL: f64 = 1e-13;
const BISTABILITY_SCAN: usize = 4000;

/// Which qubit-conditioned resonator the drive populates. `Plus` is the
/// resonator seen with the qubit in |g⟩, at detuning Δ + χ; `Minus` is |e⟩ at Δ - χ.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QubitBranch {
    Plus,
    Minus,
}

impl QubitBranch {
    pub fn level(self) -> usize {
        match self {
            QubitBranch::Plus => G,
            QubitBranch::Minus => E,
        }
    }

    pub fn sign(self) -> f64 {
        match self {
            QubitBranch::Plus => 1.0,
            QubitBranch::Minus => -1.0,
        }
    }
}

/// K = [E(q,2) - E(q,1)] - [E(q,1) - E(q,0)] from adiabatically labeled dressed levels.
pub fn kerr_coefficient(dev: DeviceParams, spec: HilbertSpec, branch: QubitBranch) -> Result<f64> {
    let spec = HilbertSpec {
        tls_present: false,
        ..spec
    };
    let sys = CompositeSystem::new(dev, spec)?;
    let q = branch.level();
    let e = sys.dressed_levels(&[(q, 0), (q, 1), (q, 2)])?.energies;
    Ok((e[2] - e[1]) - (e[1] - e[0]))
}

/// Readout drive parameters for the power-to-photon conversion. Frequencies in GHz.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct DriveSetting {
    pub omega_r: f64,
    pub kappa: f64,
    pub chi: f64,
    /// Δ = ω_rf - ω_r.
    pub delta: f64,
}

impl DriveSetting {
    pub fn from_device(dev: &DeviceParams, chi: f64, delta: f64) -> Self {
        Self {
            omega_r: dev.omega_r,
            kappa: dev.kappa,
            chi,
            delta,
        }
    }

    pub fn omega_rf(&self) -> f64 {
        self.omega_r + self.delta
    }

    /// Photons per watt at zero photon number:
    /// C = (κ/2) / (ħω_rf [(κ/2)² + (Δ ± χ)²]).
    pub fn photons_per_watt(&self, branch: QubitBranch) -> f64 {
        self.photons_per_watt_at(branch, 0.0, 0.0)
    }

    fn photons_per_watt_at(&self, branch: QubitBranch, kerr: f64, n: f64) -> f64 {
        let half = angular_si(self.kappa) / 2.0;
        let det = angular_si(self.delta + branch.sign() * (self.chi + kerr * n));
        half / (HBAR * angular_si(self.omega_rf()) * (half * half + det * det))
    }

    fn validate(&self) -> Result<()> {
        if !(self.kappa > 0.0) {
            return Err(Error::domain("kappa", self.kappa, "must be positive"));
        }
        if !(self.omega_rf() > 0.0) {
            return Err(Error::domain("omega_rf", self.omega_rf(), "must be positive"));
        }
        if !self.chi.is_finite() {
            return Err(Error::domain("chi", self.chi, "must be finite"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum SolveMethod {
    Closed,
    FixedPoint,
    Bisection,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct PhotonSolution {
    pub n_bar: f64,
    pub method: SolveMethod,
    pub iterations: usize,
}

/// n̄_± = α C_±(n̄_±) P_rf with the detuning Δ ± (χ + K n̄) evaluated self-consistently.
pub fn photons_from_power(
    p_rf: f64,
    alpha: f64,
    drive: &DriveSetting,
    branch: QubitBranch,
    kerr: f64,
) -> Result<PhotonSolution> {
    drive.validate()?;
    if !(p_rf >= 0.0) || !p_rf.is_finite() {
        return Err(Error::domain("p_rf", p_rf, "must be finite and non-negative"));
    }
    if !(alpha > 0.0) {
        return Err(Error::domain("alpha", alpha, "must be positive"));
    }
    if !kerr.is_finite() {
        return Err(Error::domain("kerr", kerr, "must be finite"));
    }
    let f = |n: f64| alpha * p_rf * drive.photons_per_watt_at(branch, kerr, n);
    if kerr == 0.0 || p_rf == 0.0 {
        return Ok(PhotonSolution {
            n_bar: f(0.0),
            method: SolveMethod::Closed,
            iterations: 0,
        });
    }
    // f is bounded by its Lorentzian peak, so every root lies in [0, n_max]
    let half = angular_si(drive.kappa) / 2.0;
    let n_max = alpha * p_rf / (HBAR * angular_si(drive.omega_rf()) * half);
    let residual = |n: f64| n - f(n);
    let roots = count_sign_changes(&residual, n_max, BISTABILITY_SCAN);
    if roots > 1 {
        return Err(Error::Bistable { power: p_rf, roots });
    }
    let mut n = f(0.0);
    for it in 1..=FIXED_POINT_MAX_ITER {
        let next = (1.0 - FIXED_POINT_DAMPING) * n + FIXED_POINT_DAMPING * f(n);
        if (next - n).abs() <= ROOT_TOL * next.abs().max(1e-300) {
            return Ok(PhotonSolution {
                n_bar: next,
                method: SolveMethod::FixedPoint,
                iterations: it,
            });
        }
        n = next;
    }
    let (n, iterations) = bisect(&residual, 0.0, n_max)?;
    Ok(PhotonSolution {
        n_bar: n,
        method: SolveMethod::Bisection,
        iterations,
    })
}

fn count_sign_changes(g: &impl Fn(f64) -> f64, hi: f64, points: usize) -> usize {
    let mut count = 0;
    let mut prev = g(0.0);
    for i in 1..=points {
        let v = g(hi * i as f64 / points as f64);
        if prev.signum() != v.signum() && v != 0.0 {
            count += 1;
        }
        prev = v;
    }
    count
}

fn bisect(g: &impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> Result<(f64, usize)> {
    let (mut glo, ghi) = (g(lo), g(hi));
    if glo.signum() == ghi.signum() && glo != 0.0 && ghi != 0.0 {
        return Err(Error::InvalidInput("photon-number root is not bracketed".into()));
    }
    for it in 1..=200 {
        let mid = 0.5 * (lo + hi);
        let gm = g(mid);
        if gm == 0.0 || (hi - lo) <= ROOT_TOL * mid.abs() {
            return Ok((mid, it));
        }
        if gm.signum() == glo.signum() {
            lo = mid;
            glo = gm;
        } else {
            hi = mid;
        }
    }
    Ok((0.5 * (lo + hi), 200))
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct StarkRecord {
    /// Drive power at the device plane before attenuation correction, watts.
    pub p_rf: f64,
    /// Measured qubit peak frequency, GHz.
    pub f_q: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StarkDataset {
    pub records: Vec<StarkRecord>,
    pub drive: DriveSetting,
}

impl StarkDataset {
    pub fn validate(&self) -> Result<()> {
        self.drive.validate()?;
        for r in &self.records {
            if !(r.p_rf > 0.0) || !r.p_rf.is_finite() {
                return Err(Error::domain("p_rf", r.p_rf, "must be positive and finite"));
            }
            if !r.f_q.is_finite() {
                return Err(Error::domain("f_q", r.f_q, "must be finite"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct AttenuationFit {
    pub alpha: f64,
    /// 10 log10 α, absent when α ≤ 0.
    pub alpha_db: Option<f64>,
    pub omega_q0: f64,
    /// GHz per watt.
    pub slope: f64,
    pub slope_stderr: f64,
    pub residuals: Vec<f64>,
    pub rms_residual: f64,
    /// Set when the slope is not resolved from zero by two standard errors.
    pub slope_unresolved: bool,
}

/// Least-squares fit of ω_q(P) = ω_q(0) + 2χ α (C₊ + C₋) P.
pub fn fit_attenuation_scale(data: &StarkDataset) -> Result<AttenuationFit> {
    data.validate()?;
    let m = data.records.len();
    if m < 3 {
        return Err(Error::Underdetermined(format!("{m} Stark records, need at least 3")));
    }
    let c = data.drive.photons_per_watt(QubitBranch::Plus) + data.drive.photons_per_watt(QubitBranch::Minus);
    let gain = 2.0 * data.drive.chi * c;
    if gain == 0.0 {
        return Err(Error::Underdetermined("χ = 0 leaves α unconstrained".into()));
    }
    let mf = m as f64;
    let px = data.records.iter().map(|r| r.p_rf).sum::<f64>() / mf;
    let py = data.records.iter().map(|r| r.f_q).sum::<f64>() / mf;
    let sxx: f64 = data.records.iter().map(|r| (r.p_rf - px).powi(2)).sum();
    let sxy: f64 = data.records.iter().map(|r| (r.p_rf - px) * (r.f_q - py)).sum();
    if sxx <= f64::EPSILON * px * px * mf {
        return Err(Error::Underdetermined("all Stark records share one power".into()));
    }
    let slope = sxy / sxx;
    let omega_q0 = py - slope * px;
    let residuals: Vec<f64> = data.records.iter().map(|r| r.f_q - omega_q0 - slope * r.p_rf).collect();
    let ss: f64 = residuals.iter().map(|r| r * r).sum();
    let slope_stderr = if m > 2 { (ss / (mf - 2.0) / sxx).sqrt() } else { f64::INFINITY };
    let alpha = slope / gain;
    Ok(AttenuationFit {
        alpha,
        alpha_db: (alpha > 0.0).then(|| to_db(alpha)),
        omega_q0,
        slope,
        slope_stderr,
        rms_residual: (ss / mf).sqrt(),
        residuals,
        slope_unresolved: slope.abs() <= 2.0 * slope_stderr,
    })
}

/// Synthetic Stark sweep generated from the forward model, used for round trips.
pub fn synthetic_stark_dataset(drive: DriveSetting, alpha: f64, omega_q0: f64, powers: &[f64]) -> StarkDataset {
    let c = drive.photons_per_watt(QubitBranch::Plus) + drive.photons_per_watt(QubitBranch::Minus);
    StarkDataset {
        records: powers
            .iter()
            .map(|&p| StarkRecord {
                p_rf: p,
                f_q: omega_q0 + 2.0 * drive.chi * alpha * c * p,
            })
            .collect(),
        drive,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::devices;

    fn drive_a() -> DriveSetting {
        DriveSetting::from_device(&devices::device_a(), 0.0009, 0.0)
    }

    #[test]
    fn closed_form_without_kerr() {
        let d = drive_a();
        let p = 1e-15;
        let s = photons_from_power(p, 1e-8 * 1e8, &d, QubitBranch::Plus, 0.0).unwrap();
        let half = angular_si(d.kappa) / 2.0;
        let chi = angular_si(d.chi);
        let expect = half * p / (HBAR * angular_si(d.omega_rf()) * (half * half + chi * chi));
        assert!((s.n_bar - expect).abs() < 1e-12 * expect);
        let s2 = photons_from_power(2.0 * p, 1.0, &d, QubitBranch::Plus, 0.0).unwrap();
        assert!((s2.n_bar - 2.0 * s.n_bar).abs() < 1e-12 * s.n_bar);
    }

    #[test]
    fn rejects_bad_alpha() {
        assert!(photons_from_power(1e-15, 0.0, &drive_a(), QubitBranch::Plus, 0.0).is_err());
    }

    #[test]
    fn round_trip_alpha() {
        let d = drive_a();
        let powers: Vec<f64> = (1..=8).map(|k| k as f64 * 1e-9).collect();
        let data = synthetic_stark_dataset(d, 1e-8, 0.4015, &powers);
        let fit = fit_attenuation_scale(&data).unwrap();
        assert!((fit.alpha / 1e-8 - 1.0).abs() < 0.01);
        assert!((fit.omega_q0 - 0.4015).abs() < 1e-9);
        assert!(!fit.slope_unresolved);
    }

    #[test]
    fn flat_data_gives_zero_alpha() {
        let d = drive_a();
        let data = StarkDataset {
            records: (1..=5)
                .map(|k| StarkRecord {
                    p_rf: k as f64 * 1e-9,
                    f_q: 0.4015 + if k % 2 == 0 { 1e-6 } else { -1e-6 },
                })
                .collect(),
            drive: d,
        };
        let fit = fit_attenuation_scale(&data).unwrap();
        assert!(fit.alpha.abs() < 1e-3 * 1e-8 || fit.slope_unresolved);
        assert!(fit.slope_unresolved);
        assert!(fit.alpha_db.is_none() || fit.alpha > 0.0);
    }

    #[test]
    fn too_few_points() {
        let data = synthetic_stark_dataset(drive_a(), 1e-8, 0.4, &[1e-9, 2e-9]);
        assert!(matches!(fit_attenuation_scale(&data), Err(Error::Underdetermined(_))));
    }
}
