//! Floquet-Lindblad evolution projected onto the retained quasi-eigenbasis.
//!
//! In the quasi-eigenbasis F is diagonal. The density matrix is kept
//! block-diagonal over clusters of quasi-energies separated by more than
//! `secular_gap`; coherences between clusters rotate at least that fast and
//! are dropped. The jump operator restricted to cluster pairs, P_c Ã P_c',
//! keeps the generator in Lindblad form, so the truncated evolution is still
//! trace preserving and completely positive. A single cluster is the full
//! projected generator.

use std::ops::Range;

use faer::linalg::matmul::matmul;
use faer::{Accum, Mat, MatMut, MatRef, Par};

use super::eigen::QuasiEigenbasis;
use super::lattice::{FloquetSystem, InitialState};
use super::ode::{integrate, Control, Tolerances};
use crate::linalg::{c64, eigvalsh, I};
use crate::units::TWO_PI;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvolutionOptions {
    /// Evolution window in ns; `None` means 10·2π/κ (κ angular), i.e. 10/κ in ns with κ in GHz.
    pub duration: Option<f64>,
    pub atol: f64,
    pub rtol: f64,
    /// Stop once ‖𝒦ρ‖_F < fixed_point_tol · ‖ρ‖_F, with 𝒦 in rad/ns.
    pub fixed_point_tol: f64,
    /// Quasi-energy gap (GHz) separating secular clusters.
    pub secular_gap: f64,
    pub max_steps: usize,
    /// Check positivity every this many accepted steps.
    pub positivity_every: usize,
}

impl Default for EvolutionOptions {
    fn default() -> Self {
        Self {
            duration: None,
            atol: 1e-9,
            rtol: 1e-7,
            fixed_point_tol: 1e-7,
            secular_gap: 0.02,
            max_steps: 5_000_000,
            positivity_every: 20,
        }
    }
}

impl EvolutionOptions {
    pub fn duration_for(&self, kappa: f64) -> f64 {
        self.duration.unwrap_or(10.0 / kappa)
    }
}

/// Generator and observables in the retained basis.
#[derive(Clone, Debug)]
pub struct ReducedModel {
    pub energies: Vec<f64>,
    pub kappa: f64,
    pub jump: Mat<c64>,
    pub number: Mat<c64>,
    pub projectors: Vec<Mat<c64>>,
    /// Weight in the two outermost sideband slots.
    pub edge: Mat<c64>,
    pub clusters: Vec<Range<usize>>,
    effective: Vec<Mat<c64>>,
    feeds: Vec<Vec<(usize, Mat<c64>)>>,
    offsets: Vec<usize>,
}

/// U† diag(d) U for a row-weight vector d.
fn weighted_gram(u: MatRef<'_, c64>, d: impl Fn(usize) -> f64) -> Mat<c64> {
    let w = Mat::from_fn(u.nrows(), u.ncols(), |i, j| u[(i, j)] * d(i));
    let mut out = Mat::<c64>::zeros(u.ncols(), u.ncols());
    matmul(out.as_mut(), Accum::Replace, u.adjoint(), w.as_ref(), c64::new(1.0, 0.0), Par::Seq);
    out
}

pub fn clusters(energies: &[f64], gap: f64) -> Vec<Range<usize>> {
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..energies.len() {
        if energies[i] - energies[i - 1] > gap {
            out.push(start..i);
            start = i;
        }
    }
    out.push(start..energies.len());
    out
}

impl ReducedModel {
    pub fn new(fs: &FloquetSystem, basis: &QuasiEigenbasis, secular_gap: f64) -> Self {
        let u = basis.states.as_ref();
        let k = u.ncols();
        let b = fs.block();
        let s = fs.operator.n_sidebands();
        let ju = fs.jump.apply(u, s);
        let mut jump = Mat::<c64>::zeros(k, k);
        matmul(jump.as_mut(), Accum::Replace, u.adjoint(), ju.as_ref(), c64::new(1.0, 0.0), Par::Seq);
        let number = weighted_gram(u, |i| fs.photons[i % b]);
        let projectors = (0..fs.n_flux)
            .map(|q| weighted_gram(u, |i| if fs.flux_level[i % b] == q { 1.0 } else { 0.0 }))
            .collect();
        let edge = weighted_gram(u, |i| {
            let slot = i / b;
            if s > 1 && (slot == 0 || slot == s - 1) {
                1.0
            } else {
                0.0
            }
        });
        let clusters = clusters(&basis.quasi_energies, secular_gap);
        let kappa_ang = TWO_PI * fs.kappa;
        let ada = jump.adjoint() * &jump;
        let scale = jump.norm_l2().max(1e-300);
        let mut effective = Vec::new();
        let mut feeds = Vec::new();
        let mut offsets = vec![0];
        for c in &clusters {
            let n = c.len();
            // K = -i 2π Λ - κ/2 (Ã†Ã)_cc
            let kc = Mat::from_fn(n, n, |i, j| {
                let mut v = ada[(c.start + i, c.start + j)] * (-0.5 * kappa_ang);
                if i == j {
                    v += -I * (TWO_PI * basis.quasi_energies[c.start + i]);
                }
                v
            });
            effective.push(kc);
            let mut f = Vec::new();
            for (cj, d) in clusters.iter().enumerate() {
                let a = jump.as_ref().submatrix(c.start, d.start, n, d.len()).to_owned();
                if a.norm_l2() > 1e-13 * scale {
                    f.push((cj, a));
                }
            }
            feeds.push(f);
            offsets.push(offsets.last().unwrap() + n * n);
        }
        Self {
            energies: basis.quasi_energies.clone(),
            kappa: fs.kappa,
            jump,
            number,
            projectors,
            edge,
            clusters,
            effective,
            feeds,
            offsets,
        }
    }

    pub fn packed_len(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    fn block<'a>(&self, y: &'a [c64], c: usize) -> MatRef<'a, c64> {
        let n = self.clusters[c].len();
        MatRef::from_column_major_slice(&y[self.offsets[c]..self.offsets[c + 1]], n, n)
    }

    /// Block-diagonal part of U† ρ₀ U, renormalized to unit trace.
    pub fn initial(&self, basis: &QuasiEigenbasis, rho0: &InitialState) -> Vec<c64> {
        let u = basis.states.as_ref();
        let mut y = vec![c64::new(0.0, 0.0); self.packed_len()];
        let mut total = 0.0;
        for &(w, idx) in &rho0.components {
            for (c, r) in self.clusters.iter().enumerate() {
                let n = r.len();
                let o = self.offsets[c];
                for j in 0..n {
                    let vj = u[(idx, r.start + j)].conj();
                    for i in 0..n {
                        let vi = u[(idx, r.start + i)].conj();
                        y[o + j * n + i] += vi * vj.conj() * w;
                    }
                    total += w * vj.norm_sqr();
                }
            }
        }
        for z in &mut y {
            *z /= total;
        }
        y
    }

    /// 𝒦 applied to the Hermitian part of each block. Round-off leaves a tiny
    /// anti-Hermitian part in the state; under K ρ + (K ρ)† it would rotate at
    /// sums of quasi-energies, far outside the stepper's stability region.
    pub fn rhs(&self, y: &[c64], dy: &mut [c64]) {
        let kappa_ang = TWO_PI * self.kappa;
        let one = c64::new(1.0, 0.0);
        let hermitian: Vec<Mat<c64>> = (0..self.clusters.len())
            .map(|c| {
                let b = self.block(y, c);
                Mat::from_fn(b.nrows(), b.ncols(), |i, j| 0.5 * (b[(i, j)] + b[(j, i)].conj()))
            })
            .collect();
        for (c, r) in self.clusters.iter().enumerate() {
            let n = r.len();
            let rho = hermitian[c].as_ref();
            let mut m = Mat::<c64>::zeros(n, n);
            matmul(m.as_mut(), Accum::Replace, self.effective[c].as_ref(), rho, one, Par::Seq);
            let mut out = MatMut::from_column_major_slice_mut(&mut dy[self.offsets[c]..self.offsets[c + 1]], n, n);
            for j in 0..n {
                for i in 0..n {
                    out[(i, j)] = m[(i, j)] + m[(j, i)].conj();
                }
            }
            for (cj, a) in &self.feeds[c] {
                let src = hermitian[*cj].as_ref();
                let mut tmp = Mat::<c64>::zeros(n, src.ncols());
                matmul(tmp.as_mut(), Accum::Replace, a.as_ref(), src, one, Par::Seq);
                matmul(out.as_mut(), Accum::Add, tmp.as_ref(), a.adjoint(), c64::new(kappa_ang, 0.0), Par::Seq);
            }
        }
    }

    /// tr(O ρ) for the block-diagonal state.
    pub fn expectation(&self, op: &Mat<c64>, y: &[c64]) -> f64 {
        let mut acc = 0.0;
        for (c, r) in self.clusters.iter().enumerate() {
            let rho = self.block(y, c);
            for j in 0..r.len() {
                for i in 0..r.len() {
                    acc += (op[(r.start + j, r.start + i)] * rho[(i, j)]).re;
                }
            }
        }
        acc
    }

    pub fn trace(&self, y: &[c64]) -> f64 {
        (0..self.clusters.len())
            .map(|c| {
                let b = self.block(y, c);
                (0..b.nrows()).map(|i| b[(i, i)].re).sum::<f64>()
            })
            .sum()
    }

    pub fn hermiticity_error(&self, y: &[c64]) -> f64 {
        let mut worst = 0.0f64;
        for c in 0..self.clusters.len() {
            let b = self.block(y, c);
            for j in 0..b.ncols() {
                for i in 0..=j {
                    worst = worst.max((b[(i, j)] - b[(j, i)].conj()).norm());
                }
            }
        }
        worst
    }

    pub fn min_eigenvalue(&self, y: &[c64]) -> f64 {
        (0..self.clusters.len())
            .map(|c| {
                let b = self.block(y, c);
                let h = Mat::from_fn(b.nrows(), b.ncols(), |i, j| 0.5 * (b[(i, j)] + b[(j, i)].conj()));
                eigvalsh(h.as_ref()).map(|w| w[0]).unwrap_or(f64::NAN)
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Mean quasi-energy tr(Λρ).
    pub fn energy(&self, y: &[c64]) -> f64 {
        let mut acc = 0.0;
        for (c, r) in self.clusters.iter().enumerate() {
            let b = self.block(y, c);
            for i in 0..r.len() {
                acc += self.energies[r.start + i] * b[(i, i)].re;
            }
        }
        acc
    }

    /// Dense k×k density matrix from the packed blocks.
    pub fn unpack(&self, y: &[c64]) -> Mat<c64> {
        let k = self.energies.len();
        let mut rho = Mat::<c64>::zeros(k, k);
        for (c, r) in self.clusters.iter().enumerate() {
            rho.as_mut().submatrix_mut(r.start, r.start, r.len(), r.len()).copy_from(self.block(y, c));
        }
        rho
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, serde::Serialize)]
pub struct EvolutionDiagnostics {
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    pub max_trace_error: f64,
    pub max_hermiticity_error: f64,
    pub min_eigenvalue: f64,
    /// ‖𝒦ρ‖_F / ‖ρ‖_F at the last step, rad/ns.
    pub generator_norm: f64,
    pub energy_drift: f64,
    pub edge_population: f64,
    pub clusters: usize,
    pub largest_cluster: usize,
}

#[derive(Clone, Debug)]
pub struct FixedPointResult {
    pub rho: Mat<c64>,
    pub n_bar: f64,
    /// p_φ for every retained fluxonium level.
    pub populations: Vec<f64>,
    pub converged: bool,
    pub time: f64,
    pub diagnostics: EvolutionDiagnostics,
}

impl FixedPointResult {
    pub fn p_other(&self) -> f64 {
        self.populations.iter().skip(2).sum()
    }
}

/// Evolve from `t0` to `t1`, tracking the contract checks in `diag`. Returns the
/// time reached and whether the fixed-point criterion stopped the run.
pub fn propagate(
    model: &ReducedModel,
    y: &mut Vec<c64>,
    t0: f64,
    t1: f64,
    opts: &EvolutionOptions,
    stop_at_fixed_point: bool,
    diag: &mut EvolutionDiagnostics,
) -> Result<(f64, bool)> {
    let tol = Tolerances {
        atol: opts.atol,
        rtol: opts.rtol,
    };
    let mut reached = false;
    let mut since_check = 0usize;
    let mut gen_norm = f64::NAN;
    let mut failure: Option<Error> = None;
    let (t, stats) = integrate(
        |_, y, dy| model.rhs(y, dy),
        t0,
        t1,
        y,
        tol,
        opts.max_steps,
        |_, y, dy| {
            let tr = (model.trace(y) - 1.0).abs();
            let herm = model.hermiticity_error(y);
            diag.max_trace_error = diag.max_trace_error.max(tr);
            diag.max_hermiticity_error = diag.max_hermiticity_error.max(herm);
            if tr > 1e-9 || herm > 1e-9 {
                failure = Some(Error::Integration(format!(
                    "density matrix drifted: trace error {tr:.2e}, hermiticity error {herm:.2e}"
                )));
                return Control::Stop;
            }
            since_check += 1;
            if since_check >= opts.positivity_every {
                since_check = 0;
                diag.min_eigenvalue = diag.min_eigenvalue.min(model.min_eigenvalue(y));
            }
            let rn = y.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            let dn = dy.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            gen_norm = dn / rn;
            if stop_at_fixed_point && gen_norm < opts.fixed_point_tol {
                reached = true;
                return Control::Stop;
            }
            Control::Continue
        },
    )?;
    if let Some(e) = failure {
        return Err(e);
    }
    diag.accepted_steps += stats.accepted;
    diag.rejected_steps += stats.rejected;
    diag.generator_norm = gen_norm;
    diag.min_eigenvalue = diag.min_eigenvalue.min(model.min_eigenvalue(y));
    Ok((t, reached))
}

pub fn evolve_to_fixed_point(
    fs: &FloquetSystem,
    basis: &QuasiEigenbasis,
    rho0: &InitialState,
    opts: &EvolutionOptions,
) -> Result<FixedPointResult> {
    let model = ReducedModel::new(fs, basis, opts.secular_gap);
    let mut y = model.initial(basis, rho0);
    let e_start = model.energy(&y);
    let mut diag = EvolutionDiagnostics {
        min_eigenvalue: f64::INFINITY,
        clusters: model.clusters.len(),
        largest_cluster: model.clusters.iter().map(|c| c.len()).max().unwrap_or(0),
        ..Default::default()
    };
    let duration = opts.duration_for(fs.kappa);
    let (t, reached) = propagate(&model, &mut y, 0.0, duration, opts, true, &mut diag)?;
    diag.energy_drift = model.energy(&y) - e_start;
    diag.edge_population = model.expectation(&model.edge, &y);
    let populations = model.projectors.iter().map(|p| model.expectation(p, &y)).collect();
    Ok(FixedPointResult {
        n_bar: model.expectation(&model.number, &y),
        populations,
        converged: reached || diag.generator_norm < opts.fixed_point_tol,
        time: t,
        rho: model.unpack(&y),
        diagnostics: diag,
    })
}
