//! Fluxonium + resonator (+ TLS) product space: Hamiltonians, dressed-level
//! tracking and the dispersive quantities derived from it.

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::fluxonium::{FluxoniumEigenbasis, FluxoniumParams, DEFAULT_BASIS_SIZE, E, G};
use crate::linalg::{c64, complexify, destroy, diag_real, eigh, identity, kron, number, I, ZERO};
use crate::operator::{ComposedOperator, HilbertLayout, Subsystem};
use crate::units::{thermal_excited_population, TWO_PI};
use crate::{Error, Result};

/// Largest product dimension the dense builders will allocate by default.
pub const DEFAULT_DENSE_CAP: usize = 8192;
/// Largest Floquet-space dimension accepted by default.
pub const DEFAULT_FLOQUET_CAP: usize = 60_000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeviceParams {
    #[serde(flatten)]
    pub fluxonium: FluxoniumParams,
    /// Coupling g/2π, GHz.
    pub g: f64,
    /// Bare resonator frequency, GHz.
    pub omega_r: f64,
    /// Resonator linewidth κ/2π, GHz.
    pub kappa: f64,
}

impl DeviceParams {
    pub fn validate(&self) -> Result<()> {
        self.fluxonium.validate()?;
        for (name, v) in [("g", self.g), ("omega_r", self.omega_r), ("kappa", self.kappa)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::domain(name, v, "must be positive and finite"));
            }
        }
        Ok(())
    }

    pub fn with_phi(self, phi_ext: f64) -> Self {
        Self {
            fluxonium: self.fluxonium.with_phi(phi_ext),
            ..self
        }
    }
}

/// Spurious two-level system coupled to the fluxonium charge.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TlsParams {
    /// TLS splitting, GHz. For `photon_order` m > 0 this is the full 2mΩ + Δ₀ gap.
    pub delta_tls: f64,
    pub g_tls: f64,
    /// Bath temperature in K for the optional thermal initial state.
    #[serde(default)]
    pub temperature: f64,
    #[serde(default)]
    pub photon_order: u32,
}

impl TlsParams {
    pub fn new(delta_tls: f64, g_tls: f64) -> Self {
        Self {
            delta_tls,
            g_tls,
            temperature: 0.0,
            photon_order: 0,
        }
    }

    /// Mode seen through a 2m-photon process: gap Δ₀ + 2mΩ.
    pub fn multiphoton(delta0: f64, m: u32, omega_d: f64, g_tls: f64) -> Self {
        Self {
            delta_tls: delta0 + 2.0 * m as f64 * omega_d,
            g_tls,
            temperature: 0.0,
            photon_order: m,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta_tls.is_finite() && self.delta_tls > 0.0) {
            return Err(Error::domain("delta_tls", self.delta_tls, "must be positive"));
        }
        if !(self.g_tls.is_finite() && self.g_tls >= 0.0) {
            return Err(Error::domain("g_tls", self.g_tls, "must be non-negative"));
        }
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(Error::domain("temperature", self.temperature, "must be non-negative"));
        }
        Ok(())
    }

    /// Boltzmann weight of the excited TLS state. The gap already contains the
    /// photon energies of a multi-photon mode, so this is 1/(1+exp(β(Δ₀+2mΩ))).
    pub fn thermal_population(&self) -> f64 {
        thermal_excited_population(self.delta_tls, self.temperature)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriveParams {
    /// Drive amplitude ε/2π, GHz.
    pub epsilon: f64,
    /// Drive frequency Ω/2π, GHz.
    pub omega_d: f64,
}

impl DriveParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon.is_finite() && self.epsilon >= 0.0) {
            return Err(Error::domain("epsilon", self.epsilon, "must be non-negative"));
        }
        if !(self.omega_d.is_finite() && self.omega_d > 0.0) {
            return Err(Error::domain("omega_d", self.omega_d, "must be positive"));
        }
        Ok(())
    }
}

fn default_flux_basis() -> usize {
    DEFAULT_BASIS_SIZE
}

fn default_dense_cap() -> usize {
    DEFAULT_DENSE_CAP
}

fn default_floquet_cap() -> usize {
    DEFAULT_FLOQUET_CAP
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HilbertSpec {
    pub n_flux: usize,
    pub n_fock: usize,
    #[serde(default)]
    pub tls_present: bool,
    pub n_sidebands: usize,
    /// Oscillator-basis size used to diagonalize the bare fluxonium.
    #[serde(default = "default_flux_basis")]
    pub flux_basis: usize,
    #[serde(default = "default_dense_cap")]
    pub dense_cap: usize,
    #[serde(default = "default_floquet_cap")]
    pub floquet_cap: usize,
}

impl Default for HilbertSpec {
    fn default() -> Self {
        Self {
            n_flux: 10,
            n_fock: 65,
            tls_present: false,
            n_sidebands: 13,
            flux_basis: DEFAULT_BASIS_SIZE,
            dense_cap: DEFAULT_DENSE_CAP,
            floquet_cap: DEFAULT_FLOQUET_CAP,
        }
    }
}

impl HilbertSpec {
    pub fn new(n_flux: usize, n_fock: usize, n_sidebands: usize) -> Self {
        Self {
            n_flux,
            n_fock,
            n_sidebands,
            ..Self::default()
        }
    }

    pub fn with_tls(self, tls_present: bool) -> Self {
        Self { tls_present, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_flux < 2 || self.n_fock < 2 {
            return Err(Error::Truncation(format!(
                "n_flux = {}, n_fock = {}; both must be at least 2",
                self.n_flux, self.n_fock
            )));
        }
        if self.n_flux > self.flux_basis {
            return Err(Error::Truncation(format!(
                "n_flux = {} exceeds the fluxonium construction basis {}",
                self.n_flux, self.flux_basis
            )));
        }
        if self.n_sidebands == 0 || self.n_sidebands % 2 == 0 {
            return Err(Error::domain(
                "n_sidebands",
                self.n_sidebands as f64,
                "must be odd so the lattice is centered",
            ));
        }
        Ok(())
    }

    pub fn tls_dim(&self) -> usize {
        if self.tls_present {
            2
        } else {
            1
        }
    }

    /// Dimension of one sideband block.
    pub fn block_dim(&self) -> usize {
        self.n_flux * self.n_fock * self.tls_dim()
    }
}

/// The bare fluxonium eigenbasis plus the coupled-system parameters.
#[derive(Clone, Debug)]
pub struct CompositeSystem {
    pub device: DeviceParams,
    pub spec: HilbertSpec,
    pub flux: FluxoniumEigenbasis,
}

impl CompositeSystem {
    pub fn new(device: DeviceParams, spec: HilbertSpec) -> Result<Self> {
        device.validate()?;
        spec.validate()?;
        let flux = FluxoniumEigenbasis::solve(device.fluxonium, spec.n_flux, spec.flux_basis)?;
        Ok(Self { device, spec, flux })
    }

    pub fn layout(&self) -> HilbertLayout {
        HilbertLayout::new(vec![
            (Subsystem::Fluxonium, self.spec.n_flux),
            (Subsystem::Resonator, self.spec.n_fock),
        ])
        .expect("validated dimensions")
    }

    fn guard(&self, dim: usize) -> Result<()> {
        if dim > self.spec.dense_cap {
            return Err(Error::Resource {
                requested: dim,
                cap: self.spec.dense_cap,
            });
        }
        Ok(())
    }

    /// E_k - E_0 of the bare fluxonium on the retained levels.
    pub fn flux_energies(&self) -> Vec<f64> {
        self.flux.relative_energies()
    }

    pub fn resonator_destroy(&self) -> Mat<c64> {
        complexify(destroy(self.spec.n_fock).as_ref())
    }

    /// Coupling term per unit g: -i n ⊗ (a - a†).
    pub fn coupling_operator(&self) -> Mat<c64> {
        let a = self.resonator_destroy();
        let x = Mat::from_fn(a.nrows(), a.ncols(), |i, j| -I * (a[(i, j)] - a[(j, i)].conj()));
        kron(self.flux.charge.as_ref(), x.as_ref())
    }

    /// Static Hamiltonian with the fluxonium ground energy as zero.
    pub fn static_hamiltonian(&self) -> Result<ComposedOperator> {
        self.static_hamiltonian_with_coupling(self.device.g)
    }

    pub fn static_hamiltonian_with_coupling(&self, g: f64) -> Result<ComposedOperator> {
        let layout = self.layout();
        self.guard(layout.dim())?;
        let hf = diag_real(&self.flux_energies());
        let nr = complexify(number(self.spec.n_fock).as_ref());
        let mut h = kron(hf.as_ref(), identity(self.spec.n_fock).as_ref());
        let hr = kron(identity(self.spec.n_flux).as_ref(), nr.as_ref());
        let v = self.coupling_operator();
        let wr = c64::new(self.device.omega_r, 0.0);
        let gg = c64::new(g, 0.0);
        for j in 0..h.ncols() {
            for i in 0..h.nrows() {
                h[(i, j)] += wr * hr[(i, j)] + gg * v[(i, j)];
            }
        }
        ComposedOperator::new(layout, h)
    }

    /// Static Hamiltonian plus -i ε cos(2π Ω t)(a - a†), t in ns.
    pub fn driven_hamiltonian(&self, drive: DriveParams, t: f64) -> Result<ComposedOperator> {
        drive.validate()?;
        let mut h = self.static_hamiltonian()?;
        let c = drive.epsilon * (TWO_PI * drive.omega_d * t).cos();
        if c == 0.0 {
            return Ok(h);
        }
        let a = self.resonator_destroy();
        let x = Mat::from_fn(a.nrows(), a.ncols(), |i, j| -I * (a[(i, j)] - a[(j, i)].conj()));
        let xd = h.layout.embed(Subsystem::Resonator, x.as_ref())?;
        let cc = c64::new(c, 0.0);
        for j in 0..xd.ncols() {
            for i in 0..xd.nrows() {
                h.matrix[(i, j)] += cc * xd[(i, j)];
            }
        }
        Ok(h)
    }

    /// Append the TLS factor: H ⊗ 1 + (Δ/2) Z + g_TLS n ⊗ X with Z = diag(-1, 1),
    /// so index 0 is the TLS ground state and the splitting is Δ.
    pub fn extend_with_tls(&self, h: &ComposedOperator, tls: &TlsParams) -> Result<ComposedOperator> {
        tls.validate()?;
        if h.layout.contains(Subsystem::Tls) {
            return Err(Error::Dimension("operator already contains a TLS factor".into()));
        }
        let layout = h.layout.with_factor(Subsystem::Tls, 2)?;
        self.guard(layout.dim())?;
        let z = diag_real(&[-0.5 * tls.delta_tls, 0.5 * tls.delta_tls]);
        let x = Mat::from_fn(2, 2, |i, j| if i != j { c64::new(tls.g_tls, 0.0) } else { ZERO });
        let mut out = kron(h.matrix.as_ref(), identity(2).as_ref());
        let zt = layout.embed(Subsystem::Tls, z.as_ref())?;
        let nf = layout.embed(Subsystem::Fluxonium, self.flux.charge.as_ref())?;
        let xt = layout.embed(Subsystem::Tls, x.as_ref())?;
        let coupling = &nf * &xt;
        for j in 0..out.ncols() {
            for i in 0..out.nrows() {
                out[(i, j)] += zt[(i, j)] + coupling[(i, j)];
            }
        }
        ComposedOperator::new(layout, out)
    }

    /// Dressed levels adiabatically connected to the given bare (fluxonium, photon) labels.
    pub fn dressed_levels(&self, labels: &[(usize, usize)]) -> Result<DressedLevels> {
        track_dressed_levels(self, labels, DEFAULT_TRACKING_STEPS)
    }

    pub fn dispersive_shift(&self) -> Result<f64> {
        let d = self.dressed_levels(&[(G, 0), (G, 1), (E, 0), (E, 1)])?;
        let e = &d.energies;
        Ok(0.5 * ((e[3] - e[2]) - (e[1] - e[0])))
    }

    /// Dressed qubit frequency E(e,0) - E(g,0).
    pub fn qubit_frequency(&self) -> Result<f64> {
        let d = self.dressed_levels(&[(G, 0), (E, 0)])?;
        Ok(d.energies[1] - d.energies[0])
    }

    /// Resonator frequency conditioned on fluxonium state `q`: E(q,1) - E(q,0).
    pub fn dressed_resonator_frequency(&self, q: usize) -> Result<f64> {
        let d = self.dressed_levels(&[(q, 0), (q, 1)])?;
        Ok(d.energies[1] - d.energies[0])
    }

    /// ω_q(0) + 2χ n̄ with both quantities taken from the dressed spectrum.
    pub fn stark_shifted_qubit_frequency(&self, n_bar: f64) -> Result<f64> {
        if !(n_bar >= 0.0) {
            return Err(Error::domain("n_bar", n_bar, "must be non-negative"));
        }
        Ok(stark_shift(self.qubit_frequency()?, self.dispersive_shift()?, n_bar))
    }
}

pub fn build_static_hamiltonian(dev: DeviceParams, spec: HilbertSpec) -> Result<ComposedOperator> {
    CompositeSystem::new(dev, spec)?.static_hamiltonian()
}

pub fn build_driven_hamiltonian(
    dev: DeviceParams,
    drive: DriveParams,
    spec: HilbertSpec,
    t: f64,
) -> Result<ComposedOperator> {
    CompositeSystem::new(dev, spec)?.driven_hamiltonian(drive, t)
}

pub fn dispersive_shift(dev: DeviceParams, spec: HilbertSpec) -> Result<f64> {
    CompositeSystem::new(dev, spec)?.dispersive_shift()
}

/// ω_q(n̄) = ω_q(0) + 2χ n̄.
pub fn stark_shift(omega_q0: f64, chi: f64, n_bar: f64) -> f64 {
    omega_q0 + 2.0 * chi * n_bar
}

/// Shift of the photon-number resonance when the qubit frequency moves by
/// `delta_omega_ge`: δn̄* = -δω_ge / (2χ).
pub fn resonance_shift_prediction(delta_omega_ge: f64, chi: f64) -> f64 {
    -delta_omega_ge / (2.0 * chi)
}

pub const DEFAULT_TRACKING_STEPS: usize = 16;

#[derive(Clone, Debug)]
pub struct DressedLevels {
    pub labels: Vec<(usize, usize)>,
    pub energies: Vec<f64>,
    /// |<bare label|dressed state>|² at full coupling.
    pub bare_overlap: Vec<f64>,
    /// Smallest margin between best and runner-up overlap seen while tracking.
    pub min_margin: f64,
}

/// Follow each labeled product state from g = 0 to the device coupling in
/// `steps` equal increments, picking the eigenvector of maximal overlap with
/// the previous one at every step.
pub fn track_dressed_levels(
    sys: &CompositeSystem,
    labels: &[(usize, usize)],
    steps: usize,
) -> Result<DressedLevels> {
    let layout = sys.layout();
    for &(f, n) in labels {
        if f >= sys.spec.n_flux || n >= sys.spec.n_fock {
            return Err(Error::Truncation(format!(
                "label ({f}, {n}) lies outside n_flux = {}, n_fock = {}",
                sys.spec.n_flux, sys.spec.n_fock
            )));
        }
    }
    let dim = layout.dim();
    let mut current: Vec<Vec<c64>> = labels
        .iter()
        .map(|&(f, n)| {
            let mut v = vec![ZERO; dim];
            v[layout.index(&[f, n])] = c64::new(1.0, 0.0);
            v
        })
        .collect();
    let steps = steps.max(1);
    let mut energies = vec![0.0; labels.len()];
    let mut min_margin = f64::INFINITY;
    for s in 1..=steps {
        let g = sys.device.g * s as f64 / steps as f64;
        let h = sys.static_hamiltonian_with_coupling(g)?;
        let (w, u) = eigh(h.matrix.as_ref())?;
        let mut taken = vec![false; dim];
        // assign labels in order of decreasing best overlap so a strong match wins a contested state
        let overlaps: Vec<Vec<f64>> = current
            .iter()
            .map(|v| {
                (0..dim)
                    .map(|j| {
                        let mut acc = ZERO;
                        for i in 0..dim {
                            acc += v[i].conj() * u[(i, j)];
                        }
                        acc.norm_sqr()
                    })
                    .collect()
            })
            .collect();
        let mut order: Vec<usize> = (0..labels.len()).collect();
        let best = |o: &Vec<f64>| o.iter().cloned().fold(0.0, f64::max);
        order.sort_by(|&a, &b| best(&overlaps[b]).total_cmp(&best(&overlaps[a])).then(a.cmp(&b)));
        for &l in &order {
            let o = &overlaps[l];
            let mut idx: Vec<usize> = (0..dim).filter(|&j| !taken[j]).collect();
            idx.sort_by(|&a, &b| o[b].total_cmp(&o[a]).then(a.cmp(&b)));
            let (j, b1) = (idx[0], o[idx[0]]);
            let b2 = idx.get(1).map(|&k| o[k]).unwrap_or(0.0);
            min_margin = min_margin.min(b1 - b2);
            if b1 - b2 < 0.05 {
                let (f, n) = labels[l];
                return Err(Error::LevelAmbiguity {
                    label: format!("({f}, {n})"),
                    step: s,
                    best: b1,
                    second: b2,
                });
            }
            taken[j] = true;
            energies[l] = w[j];
            // keep a continuous phase: align with the previous vector
            let mut ov = ZERO;
            for i in 0..dim {
                ov += current[l][i].conj() * u[(i, j)];
            }
            let phase = if ov.norm() > 0.0 { ov.conj() / ov.norm() } else { c64::new(1.0, 0.0) };
            current[l] = (0..dim).map(|i| u[(i, j)] * phase).collect();
        }
    }
    let bare_overlap = labels
        .iter()
        .zip(&current)
        .map(|(&(f, n), v)| v[layout.index(&[f, n])].norm_sqr())
        .collect();
    Ok(DressedLevels {
        labels: labels.to_vec(),
        energies,
        bare_overlap,
        min_margin,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::devices;
    use crate::linalg::eigvalsh;

    fn small(dev: DeviceParams) -> CompositeSystem {
        CompositeSystem::new(dev, HilbertSpec::new(10, 6, 1)).unwrap()
    }

    #[test]
    fn decoupled_spectrum_is_sum_of_parts() {
        let mut dev = devices::device_a();
        dev.g = 1e-300;
        let sys = small(dev);
        let h = sys.static_hamiltonian_with_coupling(0.0).unwrap();
        let w = eigvalsh(h.matrix.as_ref()).unwrap();
        let mut expect: Vec<f64> = Vec::new();
        for e in sys.flux_energies() {
            for n in 0..6 {
                expect.push(e + n as f64 * dev.omega_r);
            }
        }
        expect.sort_by(f64::total_cmp);
        for (a, b) in w.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn static_is_hermitian() {
        let sys = small(devices::device_a());
        assert!(sys.static_hamiltonian().unwrap().hermiticity_error() < 1e-12);
    }

    #[test]
    fn dispersive_shift_vanishes_without_coupling() {
        let mut dev = devices::device_a();
        dev.g = 1e-12;
        let chi = small(dev).dispersive_shift().unwrap();
        assert!(chi.abs() < 1e-12, "{chi}");
    }

    #[test]
    fn driven_hamiltonian_limits() {
        let sys = small(devices::device_a());
        let h0 = sys.static_hamiltonian().unwrap();
        let drive = DriveParams {
            epsilon: 0.01,
            omega_d: 7.44,
        };
        let quarter = 0.25 / drive.omega_d;
        let hq = sys.driven_hamiltonian(drive, quarter).unwrap();
        assert!(crate::linalg::max_abs_diff(hq.matrix.as_ref(), h0.matrix.as_ref()) < 1e-12);
        let t = 0.37;
        let a = sys.driven_hamiltonian(drive, t).unwrap();
        let b = sys.driven_hamiltonian(drive, t + 1.0 / drive.omega_d).unwrap();
        assert!(crate::linalg::max_abs_diff(a.matrix.as_ref(), b.matrix.as_ref()) < 1e-12);
        let zero = DriveParams { epsilon: 0.0, ..drive };
        let c = sys.driven_hamiltonian(zero, t).unwrap();
        assert_eq!(crate::linalg::max_abs_diff(c.matrix.as_ref(), h0.matrix.as_ref()), 0.0);
    }

    #[test]
    fn tls_without_coupling_splits_spectrum() {
        let sys = small(devices::device_a());
        let h = sys.static_hamiltonian().unwrap();
        let w0 = eigvalsh(h.matrix.as_ref()).unwrap();
        let tls = TlsParams::new(0.411, 0.0);
        let ht = sys.extend_with_tls(&h, &tls).unwrap();
        assert!(ht.hermiticity_error() < 1e-12);
        let w = eigvalsh(ht.matrix.as_ref()).unwrap();
        let mut expect: Vec<f64> = w0
            .iter()
            .flat_map(|&e| [e - 0.5 * tls.delta_tls, e + 0.5 * tls.delta_tls])
            .collect();
        expect.sort_by(f64::total_cmp);
        for (a, b) in w.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn dimension_cap() {
        let spec = HilbertSpec {
            dense_cap: 50,
            ..HilbertSpec::new(10, 6, 1)
        };
        let sys = CompositeSystem::new(devices::device_a(), spec).unwrap();
        assert!(matches!(sys.static_hamiltonian(), Err(Error::Resource { .. })));
    }

    #[test]
    fn resonance_shift_formula() {
        assert!((resonance_shift_prediction(0.0005, 0.0009) + 0.2778).abs() < 1e-3);
        assert_eq!(stark_shift(0.4, 0.0009, 10.0), 0.4 + 0.018);
    }
}
