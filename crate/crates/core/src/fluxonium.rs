//! Bare fluxonium: Hamiltonian in the harmonic-oscillator basis of the
//! linearized E_L/E_C circuit and its low-lying eigenbasis.

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::linalg::{c64, complexify, destroy, eigh_real};
use crate::operator::{ComposedOperator, HilbertLayout, Subsystem};
use crate::units::TWO_PI;
use crate::{Error, Result};

pub const DEFAULT_BASIS_SIZE: usize = 60;
pub const MIN_BASIS_SIZE: usize = 20;

pub const G: usize = 0;
pub const E: usize = 1;
pub const F: usize = 2;
pub const H: usize = 3;
pub const I: usize = 4;

const NAMES: [&str; 5] = ["g", "e", "f", "h", "i"];

/// Name used for eigenstate `k` (`g`..`i`, then the bare index).
pub fn level_name(k: usize) -> String {
    NAMES.get(k).map(|s| s.to_string()).unwrap_or_else(|| k.to_string())
}

pub fn level_index(name: &str) -> Option<usize> {
    NAMES
        .iter()
        .position(|&s| s == name)
        .or_else(|| name.parse().ok())
}

/// Circuit energies in GHz (E/h) and external flux in flux quanta.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FluxoniumParams {
    pub e_j: f64,
    pub e_c: f64,
    pub e_l: f64,
    pub phi_ext: f64,
}

impl FluxoniumParams {
    pub fn new(e_j: f64, e_c: f64, e_l: f64, phi_ext: f64) -> Result<Self> {
        let p = Self {
            e_j,
            e_c,
            e_l,
            phi_ext,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("e_j", self.e_j), ("e_c", self.e_c), ("e_l", self.e_l)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::domain(name, v, "must be positive and finite"));
            }
        }
        if !self.phi_ext.is_finite() {
            return Err(Error::domain("phi_ext", self.phi_ext, "must be finite"));
        }
        Ok(())
    }

    pub fn with_phi(self, phi_ext: f64) -> Self {
        Self { phi_ext, ..self }
    }

    /// Plasma frequency of the linearized circuit, sqrt(8 E_L E_C).
    pub fn plasma_frequency(&self) -> f64 {
        (8.0 * self.e_l * self.e_c).sqrt()
    }

    pub fn phi_zpf(&self) -> f64 {
        (2.0 * self.e_c / self.e_l).powf(0.25)
    }
}

/// Hamiltonian and the two circuit operators in the oscillator basis.
///
/// `charge_im` holds the imaginary part of n; the real part is identically zero.
#[derive(Clone, Debug)]
pub struct FluxoniumHamiltonian {
    pub params: FluxoniumParams,
    pub h: Mat<f64>,
    pub phase: Mat<f64>,
    pub charge_im: Mat<f64>,
}

impl FluxoniumHamiltonian {
    pub fn basis_size(&self) -> usize {
        self.h.nrows()
    }

    pub fn operator(&self) -> ComposedOperator {
        let layout = HilbertLayout::new(vec![(Subsystem::Fluxonium, self.basis_size())])
            .expect("single factor layout");
        ComposedOperator::new(layout, complexify(self.h.as_ref())).expect("square")
    }
}

pub fn build_fluxonium_hamiltonian(
    params: FluxoniumParams,
    basis_size: usize,
) -> Result<FluxoniumHamiltonian> {
    params.validate()?;
    if basis_size < MIN_BASIS_SIZE {
        return Err(Error::Truncation(format!(
            "fluxonium basis of {basis_size} states, need at least {MIN_BASIS_SIZE}"
        )));
    }
    assemble(params, basis_size)
}

fn assemble(params: FluxoniumParams, n: usize) -> Result<FluxoniumHamiltonian> {
    let phi_zpf = params.phi_zpf();
    let n_zpf = 0.5 / phi_zpf;
    let a = destroy(n);
    let ad = a.transpose().to_owned();

    let phase = Mat::from_fn(n, n, |i, j| phi_zpf * (a[(i, j)] + ad[(i, j)]));
    // n = i n_zpf (a^dag - a)
    let charge_im = Mat::from_fn(n, n, |i, j| n_zpf * (ad[(i, j)] - a[(i, j)]));

    // cos of the truncated phase operator through its own eigenbasis
    let (x, v) = eigh_real(phase.as_ref())?;
    let shift = TWO_PI * params.phi_ext;
    let c: Vec<f64> = x.iter().map(|&xk| (xk - shift).cos()).collect();
    let cos = Mat::from_fn(n, n, |i, j| (0..n).map(|k| v[(i, k)] * c[k] * v[(j, k)]).sum::<f64>());

    // n^2 = -(charge_im)^2 since n is i times a real antisymmetric matrix
    let n2 = -(&charge_im * &charge_im);
    let phi2 = &phase * &phase;
    let h = Mat::<f64>::from_fn(n, n, |i, j| {
        4.0 * params.e_c * n2[(i, j)] + 0.5 * params.e_l * phi2[(i, j)]
            - params.e_j * cos[(i, j)]
    });
    // exact symmetrization against rounding
    let h = Mat::<f64>::from_fn(n, n, |i, j| 0.5 * (h[(i, j)] + h[(j, i)]));
    Ok(FluxoniumHamiltonian {
        params,
        h,
        phase,
        charge_im,
    })
}

/// Lowest eigenpairs of the bare fluxonium together with circuit matrix elements.
///
/// Energies are absolute, in GHz. Eigenvectors are real; `charge` is therefore
/// purely imaginary and antisymmetric.
#[derive(Clone, Debug)]
pub struct FluxoniumEigenbasis {
    pub params: FluxoniumParams,
    pub energies: Vec<f64>,
    pub states: Mat<f64>,
    pub charge: Mat<c64>,
    pub phase: Mat<f64>,
}

impl FluxoniumEigenbasis {
    pub fn solve(params: FluxoniumParams, n_levels: usize, basis_size: usize) -> Result<Self> {
        diagonalize_fluxonium(&build_fluxonium_hamiltonian(params, basis_size)?, n_levels)
    }

    pub fn n_levels(&self) -> usize {
        self.energies.len()
    }

    /// E_k - E_0.
    pub fn relative_energies(&self) -> Vec<f64> {
        self.energies.iter().map(|e| e - self.energies[0]).collect()
    }

    pub fn transition(&self, i: usize, j: usize) -> f64 {
        self.energies[j] - self.energies[i]
    }

    /// |<i|n|j>|.
    pub fn charge_element(&self, i: usize, j: usize) -> f64 {
        self.charge[(i, j)].norm()
    }
}

pub fn diagonalize_fluxonium(h: &FluxoniumHamiltonian, n_levels: usize) -> Result<FluxoniumEigenbasis> {
    let n = h.basis_size();
    if n_levels == 0 || n_levels > n {
        return Err(Error::domain(
            "n_levels",
            n_levels as f64,
            "must be between 1 and the construction basis size",
        ));
    }
    let (w, v) = eigh_real(h.h.as_ref())?;
    let mut states = Mat::<f64>::zeros(n, n_levels);
    for j in 0..n_levels {
        // fix the sign so the largest component is positive
        let pivot = (0..n)
            .max_by(|&a, &b| v[(a, j)].abs().total_cmp(&v[(b, j)].abs()))
            .unwrap();
        let s = v[(pivot, j)].signum();
        for i in 0..n {
            states[(i, j)] = s * v[(i, j)];
        }
    }
    let project = |op: &Mat<f64>| states.transpose() * op * &states;
    let q = project(&h.charge_im);
    let charge = Mat::from_fn(n_levels, n_levels, |i, j| {
        c64::new(0.0, 0.5 * (q[(i, j)] - q[(j, i)]))
    });
    let p = project(&h.phase);
    let phase = Mat::from_fn(n_levels, n_levels, |i, j| 0.5 * (p[(i, j)] + p[(j, i)]));
    Ok(FluxoniumEigenbasis {
        params: h.params,
        energies: w[..n_levels].to_vec(),
        states,
        charge,
        phase,
    })
}

/// Bare E_1 - E_0 in GHz with the default construction basis.
pub fn qubit_frequency(params: FluxoniumParams) -> Result<f64> {
    let b = FluxoniumEigenbasis::solve(params, 2, DEFAULT_BASIS_SIZE)?;
    Ok(b.transition(G, E))
}

/// Largest change of the lowest `n_levels` transition energies (GHz) when the
/// construction basis grows by half.
pub fn basis_convergence(params: FluxoniumParams, basis_size: usize, n_levels: usize) -> Result<f64> {
    let a = FluxoniumEigenbasis::solve(params, n_levels, basis_size)?.relative_energies();
    let b = FluxoniumEigenbasis::solve(params, n_levels, basis_size * 3 / 2)?.relative_energies();
    Ok(a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn device_a(phi: f64) -> FluxoniumParams {
        FluxoniumParams::new(2.68, 1.09, 0.32, phi).unwrap()
    }

    #[test]
    fn harmonic_limit() {
        let p = FluxoniumParams {
            e_j: 0.0,
            e_c: 1.09,
            e_l: 0.32,
            phi_ext: 0.3,
        };
        let h = assemble(p, 40).unwrap();
        let (w, _) = eigh_real(h.h.as_ref()).unwrap();
        let wp = p.plasma_frequency();
        for k in 0..10 {
            let expect = wp * (k as f64 + 0.5);
            assert!(((w[k] - expect) / expect).abs() < 1e-8, "{k}: {} vs {expect}", w[k]);
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(FluxoniumParams::new(-1.0, 1.0, 0.3, 0.5).is_err());
        assert!(FluxoniumParams::new(1.0, 1.0, 0.3, f64::NAN).is_err());
        assert!(build_fluxonium_hamiltonian(device_a(0.5), 10).is_err());
        let h = build_fluxonium_hamiltonian(device_a(0.5), 30).unwrap();
        assert!(diagonalize_fluxonium(&h, 31).is_err());
    }

    #[test]
    fn hamiltonian_is_symmetric() {
        let h = build_fluxonium_hamiltonian(device_a(0.43), 60).unwrap();
        assert!(h.operator().hermiticity_error() < 1e-12);
    }

    #[test]
    fn bare_half_flux_qubit_frequency() {
        // grid solve of the same circuit gives 402.25 MHz
        let wq = qubit_frequency(device_a(0.5)).unwrap();
        assert!((wq - 0.40225).abs() < 2e-5, "{wq}");
    }

    #[test]
    fn symmetric_about_half_flux_and_periodic() {
        let a = qubit_frequency(device_a(0.5 + 0.013)).unwrap();
        let b = qubit_frequency(device_a(0.5 - 0.013)).unwrap();
        let c = qubit_frequency(device_a(1.5 + 0.013)).unwrap();
        assert!((a - b).abs() < 1e-10);
        assert!((a - c).abs() < 1e-9);
    }

    #[test]
    fn converged_at_default_basis() {
        // 1 kHz on the lowest ten levels
        let d = basis_convergence(device_a(0.5), DEFAULT_BASIS_SIZE, 10).unwrap();
        assert!(d < 1e-6, "{d}");
    }

    #[test]
    fn parity_selection_at_half_flux() {
        let b = FluxoniumEigenbasis::solve(device_a(0.5), 10, 60).unwrap();
        assert!(b.charge_element(G, E) > 0.05);
        for i in 0..10 {
            for j in 0..10 {
                if (i + j) % 2 == 0 {
                    assert!(b.charge_element(i, j) < 1e-8, "{i}{j}");
                }
            }
        }
        let b = FluxoniumEigenbasis::solve(device_a(0.500196), 10, 60).unwrap();
        assert!(b.charge_element(G, I) > 1e-6);
    }

    #[test]
    fn level_names() {
        assert_eq!(level_name(4), "i");
        assert_eq!(level_name(7), "7");
        assert_eq!(level_index("h"), Some(3));
    }
}
