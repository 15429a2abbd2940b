//! Frequency lattice and the banded Floquet operator built on it.
//!
//! The lattice index is the slowest tensor index: global = j * block + local,
//! where sideband j carries the frequency offset (j - K) Ω, K = (S - 1) / 2.

use faer::linalg::matmul::matmul;
use faer::{Accum, Mat, MatRef, Par};

use crate::composite::{CompositeSystem, DriveParams, TlsParams};
use crate::linalg::{c64, complexify, destroy, diag_real, hermiticity_error, identity, kron, I, ZERO};
use crate::operator::{HilbertLayout, Subsystem};
use crate::{Error, Result};

/// Sideband labeling of the extended space.
///
/// `Lab` is the direct Fourier construction: sideband k carries H_static + kΩ,
/// the drive couples neighbouring sidebands and photon loss is a ⊗ b†.
/// `Rotating` relabels |n, k⟩ → |n, m = n + k⟩, a unitary change of basis that
/// makes the RWA drive block-diagonal and photon loss sideband-diagonal, so a
/// handful of sidebands covers tens of photons.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gauge {
    Lab,
    #[default]
    Rotating,
}

/// Sideband lattice with its translation operator.
#[derive(Clone, Debug)]
pub struct FloquetLattice {
    pub n_sidebands: usize,
    pub omega_d: f64,
}

impl FloquetLattice {
    pub fn new(n_sidebands: usize, omega_d: f64) -> Result<Self> {
        if n_sidebands % 2 == 0 {
            return Err(Error::domain("n_sidebands", n_sidebands as f64, "must be odd"));
        }
        Ok(Self {
            n_sidebands,
            omega_d,
        })
    }

    pub fn half_width(&self) -> usize {
        (self.n_sidebands - 1) / 2
    }

    /// Frequency label of sideband slot j.
    pub fn sideband(&self, j: usize) -> isize {
        j as isize - self.half_width() as isize
    }

    /// b†: moves sideband j to j + 1, annihilating the last slot.
    pub fn translation(&self) -> Mat<f64> {
        let s = self.n_sidebands;
        Mat::from_fn(s, s, |i, j| if i == j + 1 { 1.0 } else { 0.0 })
    }
}

/// Hermitian block-banded operator with sideband-independent off-diagonal blocks:
/// block (j, j) = D + (j - K) Ω, block (j, j + d) = bands[d - 1].
#[derive(Clone, Debug)]
pub struct BandedOperator {
    pub lattice: FloquetLattice,
    pub diagonal: Mat<c64>,
    pub bands: Vec<Mat<c64>>,
}

impl BandedOperator {
    pub fn block(&self) -> usize {
        self.diagonal.nrows()
    }

    pub fn n_sidebands(&self) -> usize {
        self.lattice.n_sidebands
    }

    pub fn dim(&self) -> usize {
        self.block() * self.n_sidebands()
    }

    /// Number of non-zero bands above the diagonal.
    pub fn bandwidth(&self) -> usize {
        self.bands
            .iter()
            .rposition(|b| b.norm_l2() > 0.0)
            .map(|p| p + 1)
            .unwrap_or(0)
    }

    pub fn shift(&self, j: usize) -> f64 {
        self.lattice.sideband(j) as f64 * self.lattice.omega_d
    }

    /// Dense matrix of rows/cols of slots [j0, j0 + nj) × [k0, k0 + nk).
    pub fn dense_blocks(&self, j0: usize, nj: usize, k0: usize, nk: usize, sigma: f64) -> Mat<c64> {
        let b = self.block();
        let mut out = Mat::<c64>::zeros(nj * b, nk * b);
        for jj in 0..nj {
            for kk in 0..nk {
                let (j, k) = (j0 + jj, k0 + kk);
                let blk: Option<Mat<c64>> = if j == k {
                    let s = self.shift(j) - sigma;
                    let mut d = self.diagonal.clone();
                    for i in 0..b {
                        d[(i, i)] += c64::new(s, 0.0);
                    }
                    Some(d)
                } else if k > j && k - j <= self.bands.len() {
                    Some(self.bands[k - j - 1].clone())
                } else if j > k && j - k <= self.bands.len() {
                    Some(self.bands[j - k - 1].adjoint().to_owned())
                } else {
                    None
                };
                if let Some(m) = blk {
                    out.submatrix_mut(jj * b, kk * b, b, b).copy_from(&m);
                }
            }
        }
        out
    }

    pub fn to_dense(&self) -> Mat<c64> {
        let s = self.n_sidebands();
        self.dense_blocks(0, s, 0, s, 0.0)
    }

    /// F X for a tall matrix X (dim × k).
    pub fn apply(&self, x: MatRef<'_, c64>) -> Mat<c64> {
        let b = self.block();
        let s = self.n_sidebands();
        let mut y = Mat::<c64>::zeros(x.nrows(), x.ncols());
        let one = c64::new(1.0, 0.0);
        for j in 0..s {
            let xj = x.subrows(j * b, b);
            {
                let yj = y.as_mut().subrows_mut(j * b, b);
                matmul(yj, Accum::Add, self.diagonal.as_ref(), xj, one, Par::Seq);
            }
            let sh = self.shift(j);
            for c in 0..x.ncols() {
                for i in 0..b {
                    y[(j * b + i, c)] += xj[(i, c)] * sh;
                }
            }
            for (d0, band) in self.bands.iter().enumerate() {
                let d = d0 + 1;
                if j + d < s {
                    let yj = y.as_mut().subrows_mut(j * b, b);
                    matmul(yj, Accum::Add, band.as_ref(), x.subrows((j + d) * b, b), one, Par::Seq);
                }
                if j >= d {
                    let yj = y.as_mut().subrows_mut(j * b, b);
                    matmul(yj, Accum::Add, band.adjoint(), x.subrows((j - d) * b, b), one, Par::Seq);
                }
            }
        }
        y
    }

    /// Crude upper bound of the spectral radius, used to scale residual tolerances.
    pub fn norm_scale(&self) -> f64 {
        let k = self.lattice.half_width() as f64 * self.lattice.omega_d.abs();
        self.diagonal.norm_l2() + k + 2.0 * self.bands.iter().map(|b| b.norm_l2()).sum::<f64>()
    }

    pub fn hermiticity_error(&self) -> f64 {
        hermiticity_error(self.diagonal.as_ref())
    }
}

/// Operator acting as `local` inside each slot and moving slot j to j + shift.
#[derive(Clone, Debug)]
pub struct ShiftedOperator {
    pub local: Mat<c64>,
    pub shift: isize,
}

impl ShiftedOperator {
    pub fn apply(&self, x: MatRef<'_, c64>, n_sidebands: usize) -> Mat<c64> {
        let b = self.local.nrows();
        let mut y = Mat::<c64>::zeros(x.nrows(), x.ncols());
        for j in 0..n_sidebands {
            let t = j as isize + self.shift;
            if t < 0 || t >= n_sidebands as isize {
                continue;
            }
            let yt = y.as_mut().subrows_mut(t as usize * b, b);
            matmul(yt, Accum::Replace, self.local.as_ref(), x.subrows(j * b, b), c64::new(1.0, 0.0), Par::Seq);
        }
        y
    }

    pub fn to_dense(&self, n_sidebands: usize) -> Mat<c64> {
        let b = self.local.nrows();
        let s = n_sidebands;
        let shift = Mat::from_fn(s, s, |i, j| {
            if i as isize == j as isize + self.shift {
                c64::new(1.0, 0.0)
            } else {
                ZERO
            }
        });
        let _ = b;
        kron(shift.as_ref(), self.local.as_ref())
    }
}

/// Everything needed to evolve one drive point: the Floquet operator, the
/// photon-loss jump and the diagonal observables of one sideband block.
#[derive(Clone, Debug)]
pub struct FloquetSystem {
    pub gauge: Gauge,
    pub drive: DriveParams,
    pub kappa: f64,
    pub operator: BandedOperator,
    pub jump: ShiftedOperator,
    /// Layout of one sideband block: fluxonium ⊗ resonator (⊗ TLS).
    pub layout: HilbertLayout,
    /// Photon number of each local basis state.
    pub photons: Vec<f64>,
    /// Fluxonium eigen-index of each local basis state.
    pub flux_level: Vec<usize>,
    pub n_flux: usize,
}

impl FloquetSystem {
    pub fn build(
        sys: &CompositeSystem,
        drive: DriveParams,
        tls: Option<&TlsParams>,
        gauge: Gauge,
    ) -> Result<Self> {
        drive.validate()?;
        let spec = sys.spec;
        if spec.tls_present != tls.is_some() {
            return Err(Error::InvalidInput(
                "tls_present in the Hilbert spec must match whether TLS parameters are given".into(),
            ));
        }
        let lattice = FloquetLattice::new(spec.n_sidebands, drive.omega_d)?;
        let nt = spec.tls_dim();
        let mut factors = vec![
            (Subsystem::Fluxonium, spec.n_flux),
            (Subsystem::Resonator, spec.n_fock),
        ];
        if nt == 2 {
            factors.push((Subsystem::Tls, 2));
        }
        let layout = HilbertLayout::new(factors)?;
        let dim = layout.dim() * spec.n_sidebands;
        if dim > spec.floquet_cap {
            return Err(Error::Resource {
                requested: dim,
                cap: spec.floquet_cap,
            });
        }

        let nf = spec.n_flux;
        let nr = spec.n_fock;
        let a = complexify(destroy(nr).as_ref());
        let ad = a.adjoint().to_owned();
        let x = Mat::from_fn(nr, nr, |i, j| -I * (a[(i, j)] - ad[(i, j)]));
        let n_op = sys.flux.charge.clone();
        let id_f = identity(nf);
        let id_r = identity(nr);
        let id_t = identity(nt);
        let k3 = |p: &Mat<c64>, q: &Mat<c64>, r: &Mat<c64>| kron(kron(p.as_ref(), q.as_ref()).as_ref(), r.as_ref());

        let hf = diag_real(&sys.flux_energies());
        let num = complexify(crate::linalg::number(nr).as_ref());
        let g = c64::new(sys.device.g, 0.0);
        let half_eps = c64::new(0.5 * drive.epsilon, 0.0);

        let mut diagonal = k3(&hf, &id_r, &id_t);
        let mut add = |m: Mat<c64>, s: c64| {
            for j in 0..m.ncols() {
                for i in 0..m.nrows() {
                    diagonal[(i, j)] += s * m[(i, j)];
                }
            }
        };
        let bands;
        let jump;
        match gauge {
            Gauge::Lab => {
                add(k3(&id_f, &num, &id_t), c64::new(sys.device.omega_r, 0.0));
                add(k3(&n_op, &x, &id_t), g);
                bands = vec![crate::linalg::scale(k3(&id_f, &x, &id_t).as_ref(), half_eps)];
                jump = ShiftedOperator {
                    local: k3(&id_f, &a, &id_t),
                    shift: 1,
                };
            }
            Gauge::Rotating => {
                add(k3(&id_f, &num, &id_t), c64::new(sys.device.omega_r - drive.omega_d, 0.0));
                add(k3(&id_f, &x, &id_t), half_eps);
                // block (m-1, m): -i g n ⊗ a ; block (m-2, m): -i (ε/2) a
                let na = crate::linalg::scale(k3(&n_op, &a, &id_t).as_ref(), -I * g);
                let ca = crate::linalg::scale(k3(&id_f, &a, &id_t).as_ref(), -I * half_eps);
                bands = vec![na, ca];
                jump = ShiftedOperator {
                    local: k3(&id_f, &a, &id_t),
                    shift: 0,
                };
            }
        }
        if let Some(t) = tls {
            t.validate()?;
            let z = diag_real(&[-0.5 * t.delta_tls, 0.5 * t.delta_tls]);
            let xt = Mat::from_fn(2, 2, |i, j| if i != j { c64::new(t.g_tls, 0.0) } else { ZERO });
            add(k3(&id_f, &id_r, &z), c64::new(1.0, 0.0));
            add(k3(&n_op, &id_r, &xt), c64::new(1.0, 0.0));
        }
        // remove rounding asymmetry
        let d = diagonal.clone();
        let diagonal = Mat::from_fn(d.nrows(), d.ncols(), |i, j| 0.5 * (d[(i, j)] + d[(j, i)].conj()));

        let b = layout.dim();
        let photons = (0..b).map(|i| layout.digits(i)[1] as f64).collect();
        let flux_level = (0..b).map(|i| layout.digits(i)[0]).collect();
        Ok(Self {
            gauge,
            drive,
            kappa: sys.device.kappa,
            operator: BandedOperator {
                lattice,
                diagonal,
                bands,
            },
            jump,
            layout,
            photons,
            flux_level,
            n_flux: nf,
        })
    }

    pub fn dim(&self) -> usize {
        self.operator.dim()
    }

    pub fn block(&self) -> usize {
        self.operator.block()
    }

    /// Global index of the product state |q, n photons, TLS s⟩ in the central slot.
    pub fn product_index(&self, q: usize, n: usize, tls: usize) -> usize {
        let center = self.operator.lattice.half_width();
        let mut digits = vec![q, n];
        if self.layout.contains(Subsystem::Tls) {
            digits.push(tls);
        }
        center * self.block() + self.layout.index(&digits)
    }

    /// Diagonal initial state |q, 0⟩ with the TLS in its ground state, or in a
    /// thermal mixture when `thermal_tls` is given.
    pub fn initial_state(&self, q: usize, thermal_tls: Option<f64>) -> Result<InitialState> {
        if q >= self.n_flux {
            return Err(Error::Truncation(format!(
                "initial level {q} is not among the {} retained fluxonium levels",
                self.n_flux
            )));
        }
        let mut components = vec![(1.0, self.product_index(q, 0, 0))];
        if let Some(p) = thermal_tls.filter(|&p| p > 0.0) {
            if !self.layout.contains(Subsystem::Tls) {
                return Err(Error::InvalidInput("thermal TLS population without a TLS".into()));
            }
            components = vec![(1.0 - p, components[0].1), (p, self.product_index(q, 0, 1))];
        }
        Ok(InitialState { components })
    }

    /// Fluxonium level and sideband slot of global index `idx`.
    pub fn locate(&self, idx: usize) -> (usize, usize) {
        let b = self.block();
        (self.flux_level[idx % b], idx / b)
    }
}

/// A density matrix that is diagonal in the product basis.
#[derive(Clone, Debug, PartialEq)]
pub struct InitialState {
    pub components: Vec<(f64, usize)>,
}

impl InitialState {
    pub fn pure(index: usize) -> Self {
        Self {
            components: vec![(1.0, index)],
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        let total: f64 = self.components.iter().map(|c| c.0).sum();
        if self.components.iter().any(|c| c.0 < 0.0 || c.1 >= dim) || (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidInput(
                "initial state must be a normalized non-negative mixture of basis states".into(),
            ));
        }
        Ok(())
    }
}

/// Floquet operator of the spec's lab-frame construction, as a dense matrix.
pub fn build_floquet_hamiltonian(
    sys: &CompositeSystem,
    drive: DriveParams,
    tls: Option<&TlsParams>,
) -> Result<Mat<c64>> {
    Ok(FloquetSystem::build(sys, drive, tls, Gauge::Lab)?.operator.to_dense())
}
