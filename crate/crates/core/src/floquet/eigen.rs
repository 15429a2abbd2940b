//! Quasi-eigenpairs of the Floquet operator closest to the initial-state energy.

use faer::linalg::solvers::{PartialPivLu, Solve};
use faer::{Mat, MatRef};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::lattice::{BandedOperator, InitialState};
use crate::linalg::{c64, eigh, eigh_real};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EigenMethod {
    /// Shift-invert above `dense_threshold`, dense below or as a fallback.
    #[default]
    Auto,
    Dense,
    ShiftInvert,
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowOptions {
    pub k_kept: usize,
    /// Required weight of the initial state inside the retained basis.
    pub min_capture: f64,
    /// Double k_kept until the capture requirement holds.
    pub auto_grow: bool,
    pub method: EigenMethod,
    pub dense_threshold: usize,
    /// Largest dimension the dense fallback may handle.
    pub dense_cap: usize,
    /// Residual bound relative to the operator norm scale.
    pub residual_tol: f64,
}

impl Default for WindowOptions {
    fn default() -> Self {
        Self {
            k_kept: 200,
            min_capture: 0.999,
            auto_grow: true,
            method: EigenMethod::Auto,
            dense_threshold: 1200,
            dense_cap: 8192,
            residual_tol: 1e-6,
        }
    }
}

/// Retained quasi-eigenpairs, ascending in quasi-energy.
#[derive(Clone, Debug)]
pub struct QuasiEigenbasis {
    pub center_energy: f64,
    pub quasi_energies: Vec<f64>,
    pub states: Mat<c64>,
    pub capture: f64,
    pub max_residual: f64,
    pub method: EigenMethod,
}

impl QuasiEigenbasis {
    pub fn k_kept(&self) -> usize {
        self.quasi_energies.len()
    }
}

/// E₀ = tr(F ρ₀) for a diagonal initial state.
pub fn center_energy(op: &BandedOperator, rho0: &InitialState) -> f64 {
    let b = op.block();
    rho0.components
        .iter()
        .map(|&(w, idx)| w * (op.diagonal[(idx % b, idx % b)].re + op.shift(idx / b)))
        .sum()
}

pub fn capture(states: MatRef<'_, c64>, rho0: &InitialState) -> f64 {
    rho0.components
        .iter()
        .map(|&(w, idx)| w * (0..states.ncols()).map(|j| states[(idx, j)].norm_sqr()).sum::<f64>())
        .sum()
}

pub fn select_quasi_eigenbasis(
    op: &BandedOperator,
    rho0: &InitialState,
    opts: &WindowOptions,
) -> Result<QuasiEigenbasis> {
    let dim = op.dim();
    rho0.validate(dim)?;
    let e0 = center_energy(op, rho0);
    let mut k = opts.k_kept.clamp(1, dim);
    let mut method = match opts.method {
        EigenMethod::Auto if dim > opts.dense_threshold => EigenMethod::ShiftInvert,
        EigenMethod::Auto => EigenMethod::Dense,
        m => m,
    };
    let mut dense_cache: Option<(Vec<f64>, Mat<c64>)> = None;
    loop {
        let attempt = match method {
            EigenMethod::Dense => {
                if dense_cache.is_none() {
                    if dim > opts.dense_cap {
                        return Err(Error::Resource {
                            requested: dim,
                            cap: opts.dense_cap,
                        });
                    }
                    dense_cache = Some(eigh(op.to_dense().as_ref())?);
                }
                let (w, v) = dense_cache.as_ref().unwrap();
                Ok(window_from_dense(w, v.as_ref(), e0, k))
            }
            _ => shift_invert_window(op, e0, k, rho0, opts.residual_tol),
        };
        let (vals, vecs) = match attempt {
            Ok(x) => x,
            Err(e) => {
                if opts.method == EigenMethod::Auto && method == EigenMethod::ShiftInvert && dim <= opts.dense_cap {
                    method = EigenMethod::Dense;
                    continue;
                }
                return Err(e);
            }
        };
        let cap = capture(vecs.as_ref(), rho0);
        if cap >= opts.min_capture || k == dim || !opts.auto_grow {
            if cap < opts.min_capture {
                return Err(Error::BasisCapture {
                    captured: cap,
                    required: opts.min_capture,
                });
            }
            let max_residual = residual(op, &vals, vecs.as_ref());
            let scale = op.norm_scale();
            if max_residual > opts.residual_tol * scale {
                return Err(Error::Eigensolver(format!(
                    "residual {max_residual:.3e} exceeds {:.3e}",
                    opts.residual_tol * scale
                )));
            }
            return Ok(QuasiEigenbasis {
                center_energy: e0,
                quasi_energies: vals,
                states: vecs,
                capture: cap,
                max_residual,
                method,
            });
        }
        k = (2 * k).min(dim);
    }
}

/// max_i ‖F v_i - λ_i v_i‖.
pub fn residual(op: &BandedOperator, vals: &[f64], vecs: MatRef<'_, c64>) -> f64 {
    let fv = op.apply(vecs);
    (0..vecs.ncols())
        .map(|j| {
            (0..vecs.nrows())
                .map(|i| (fv[(i, j)] - vecs[(i, j)] * vals[j]).norm_sqr())
                .sum::<f64>()
                .sqrt()
        })
        .fold(0.0, f64::max)
}

fn window_from_dense(w: &[f64], v: MatRef<'_, c64>, e0: f64, k: usize) -> (Vec<f64>, Mat<c64>) {
    let mut idx: Vec<usize> = (0..w.len()).collect();
    idx.sort_by(|&a, &b| (w[a] - e0).abs().total_cmp(&(w[b] - e0).abs()).then(a.cmp(&b)));
    let mut sel = idx[..k].to_vec();
    sel.sort_unstable();
    let vals = sel.iter().map(|&j| w[j]).collect();
    let vecs = Mat::from_fn(v.nrows(), k, |i, c| v[(i, sel[c])]);
    (vals, vecs)
}

/// LU factorization of a block-tridiagonal Hermitian matrix (F - σ), with
/// sidebands grouped into super-blocks wide enough to cover the band.
pub struct BlockTridiagonalLu {
    offsets: Vec<usize>,
    lus: Vec<PartialPivLu<c64>>,
    upper: Vec<Mat<c64>>,
    gain: Vec<Mat<c64>>,
}

impl BlockTridiagonalLu {
    pub fn new(op: &BandedOperator, sigma: f64) -> Self {
        let s = op.n_sidebands();
        let b = op.block();
        let group = op.bandwidth().max(1);
        let mut slots = Vec::new();
        let mut j = 0;
        while j < s {
            let n = group.min(s - j);
            slots.push((j, n));
            j += n;
        }
        let mut offsets = vec![0];
        for &(_, n) in &slots {
            offsets.push(offsets.last().unwrap() + n * b);
        }
        let mut lus: Vec<PartialPivLu<c64>> = Vec::with_capacity(slots.len());
        let mut upper: Vec<Mat<c64>> = Vec::new();
        let mut gain: Vec<Mat<c64>> = Vec::new();
        for (i, &(j0, nj)) in slots.iter().enumerate() {
            let mut a = op.dense_blocks(j0, nj, j0, nj, sigma);
            if i > 0 {
                // S_i = A_i - B_{i-1}^† G_{i-1}
                let corr = upper[i - 1].adjoint() * &gain[i - 1];
                a = &a - &corr;
            }
            let lu = a.partial_piv_lu();
            if let Some(&(k0, nk)) = slots.get(i + 1) {
                let bi = op.dense_blocks(j0, nj, k0, nk, 0.0);
                gain.push(lu.solve(&bi));
                upper.push(bi);
            }
            lus.push(lu);
        }
        Self {
            offsets,
            lus,
            upper,
            gain,
        }
    }

    pub fn solve(&self, rhs: MatRef<'_, c64>) -> Mat<c64> {
        let nb = self.lus.len();
        let mut z: Vec<Mat<c64>> = Vec::with_capacity(nb);
        for i in 0..nb {
            let (o, n) = (self.offsets[i], self.offsets[i + 1] - self.offsets[i]);
            let mut bi = rhs.subrows(o, n).to_owned();
            if i > 0 {
                let corr = self.upper[i - 1].adjoint() * &z[i - 1];
                bi = &bi - &corr;
            }
            z.push(self.lus[i].solve(&bi));
        }
        for i in (0..nb - 1).rev() {
            let corr = &self.gain[i] * &z[i + 1];
            z[i] = &z[i] - &corr;
        }
        let mut out = Mat::<c64>::zeros(rhs.nrows(), rhs.ncols());
        for i in 0..nb {
            out.as_mut().subrows_mut(self.offsets[i], z[i].nrows()).copy_from(&z[i]);
        }
        out
    }
}

/// Lanczos on (F - σ)⁻¹ with full reorthogonalization.
fn shift_invert_window(
    op: &BandedOperator,
    e0: f64,
    k: usize,
    rho0: &InitialState,
    residual_tol: f64,
) -> Result<(Vec<f64>, Mat<c64>)> {
    let dim = op.dim();
    // stay off an exact eigenvalue (the undriven product state is one)
    let sigma = e0 + 1.0e-6 * (1.0 + e0.abs()) * std::f64::consts::FRAC_1_SQRT_2;
    let lu = BlockTridiagonalLu::new(op, sigma);
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut start: Vec<c64> = (0..dim)
        .map(|_| c64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
        .collect();
    for &(w, idx) in &rho0.components {
        start[idx] += c64::new(w * (dim as f64).sqrt(), 0.0);
    }
    let want = (k + 8).min(dim);
    let max_m = dim;
    let mut q: Vec<Vec<c64>> = Vec::new();
    let mut alpha: Vec<f64> = Vec::new();
    let mut beta: Vec<f64> = Vec::new();
    let mut v = normalize(start);
    let tol = 1e-10;
    let mut next_check = (2 * want + 20).min(max_m);
    loop {
        let x = Mat::from_fn(dim, 1, |i, _| v[i]);
        let y = lu.solve(x.as_ref());
        let mut w: Vec<c64> = (0..dim).map(|i| y[(i, 0)]).collect();
        let a = dot(&v, &w).re;
        axpy(&mut w, -a, &v);
        if let (Some(prev), Some(&b)) = (q.last(), beta.last()) {
            axpy(&mut w, -b, prev);
        }
        q.push(v);
        alpha.push(a);
        for _ in 0..2 {
            for qi in &q {
                let c = dot(qi, &w);
                for (wj, qj) in w.iter_mut().zip(qi) {
                    *wj -= c * qj;
                }
            }
        }
        let m = q.len();
        let mut b = norm(&w);
        if m >= next_check || m == max_m {
            if let Some((vals, vecs)) = ritz(&q, &alpha, &beta, b, sigma, e0, want, k, tol, m == max_m)? {
                let vals = rayleigh(op, &vals, vecs.as_ref());
                let r = residual(op, &vals, vecs.as_ref());
                if r <= residual_tol * op.norm_scale() {
                    return Ok((vals, vecs));
                }
                if m == max_m {
                    return Err(Error::Eigensolver(format!("Lanczos residual {r:.3e} at full dimension")));
                }
            }
            next_check = (m + m / 4 + 10).min(max_m);
        }
        if b < 1e-12 * a.abs().max(1e-300) {
            // invariant subspace: continue from a fresh random direction
            let mut fresh: Vec<c64> = (0..dim)
                .map(|_| c64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
                .collect();
            for _ in 0..2 {
                for qi in &q {
                    let c = dot(qi, &fresh);
                    for (wj, qj) in fresh.iter_mut().zip(qi) {
                        *wj -= c * qj;
                    }
                }
            }
            w = fresh;
            b = 0.0;
            beta.push(b);
            v = normalize(w);
        } else {
            beta.push(b);
            v = w.into_iter().map(|z| z / b).collect();
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn ritz(
    q: &[Vec<c64>],
    alpha: &[f64],
    beta: &[f64],
    b_last: f64,
    sigma: f64,
    e0: f64,
    want: usize,
    k: usize,
    tol: f64,
    exhausted: bool,
) -> Result<Option<(Vec<f64>, Mat<c64>)>> {
    let m = alpha.len();
    let t = Mat::from_fn(m, m, |i, j| {
        if i == j {
            alpha[i]
        } else if i + 1 == j {
            beta[i]
        } else if j + 1 == i {
            beta[j]
        } else {
            0.0
        }
    });
    let (theta, s) = eigh_real(t.as_ref())?;
    let mut idx: Vec<usize> = (0..m).collect();
    idx.sort_by(|&a, &b| theta[b].abs().total_cmp(&theta[a].abs()));
    let top = &idx[..want.min(m)];
    if top.len() < k {
        return Ok(None);
    }
    if !exhausted {
        let converged = top
            .iter()
            .all(|&i| (b_last * s[(m - 1, i)]).abs() <= tol * theta[i].abs());
        if !converged {
            return Ok(None);
        }
    }
    // among the converged candidates keep the k closest to e0
    let mut cand: Vec<(f64, usize)> = top.iter().map(|&i| (sigma + 1.0 / theta[i], i)).collect();
    cand.sort_by(|a, b| (a.0 - e0).abs().total_cmp(&(b.0 - e0).abs()));
    cand.truncate(k);
    cand.sort_by(|a, b| a.0.total_cmp(&b.0));
    let dim = q[0].len();
    let mut vecs = Mat::<c64>::zeros(dim, k);
    for (c, &(_, i)) in cand.iter().enumerate() {
        for (r, qr) in q.iter().enumerate() {
            let coef = s[(r, i)];
            if coef == 0.0 {
                continue;
            }
            for row in 0..dim {
                vecs[(row, c)] += qr[row] * coef;
            }
        }
    }
    Ok(Some((cand.iter().map(|c| c.0).collect(), vecs)))
}

/// Rayleigh quotients v†Fv of unit vectors; order is kept.
fn rayleigh(op: &BandedOperator, _vals: &[f64], vecs: MatRef<'_, c64>) -> Vec<f64> {
    let fv = op.apply(vecs);
    (0..vecs.ncols())
        .map(|j| (0..vecs.nrows()).map(|i| (vecs[(i, j)].conj() * fv[(i, j)]).re).sum())
        .collect()
}

fn dot(u: &[c64], v: &[c64]) -> c64 {
    u.iter().zip(v).map(|(a, b)| a.conj() * b).sum()
}

fn norm(v: &[c64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn normalize(v: Vec<c64>) -> Vec<c64> {
    let n = norm(&v);
    v.into_iter().map(|z| z / n).collect()
}

fn axpy(y: &mut [c64], a: f64, x: &[c64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += xi * a;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::composite::{CompositeSystem, DriveParams, HilbertSpec};
    use crate::devices;
    use crate::floquet::lattice::{FloquetSystem, Gauge};
    use crate::linalg::max_abs_diff;

    fn floquet(eps: f64, s: usize) -> FloquetSystem {
        let sys = CompositeSystem::new(devices::device_a().with_phi(0.500196), HilbertSpec::new(4, 8, s)).unwrap();
        let drive = DriveParams { epsilon: eps, omega_d: 7.4417 };
        FloquetSystem::build(&sys, drive, None, Gauge::Rotating).unwrap()
    }

    #[test]
    fn block_lu_solves() {
        for s in [1, 3, 5, 6 + 1] {
            let fs = floquet(0.004, s);
            let sigma = 0.3;
            let lu = BlockTridiagonalLu::new(&fs.operator, sigma);
            let b = Mat::from_fn(fs.dim(), 2, |i, j| c64::new(((i + j) % 7) as f64, (i % 3) as f64));
            let x = lu.solve(b.as_ref());
            let mut ax = fs.operator.apply(x.as_ref());
            for j in 0..2 {
                for i in 0..fs.dim() {
                    ax[(i, j)] -= x[(i, j)] * sigma;
                }
            }
            assert!(max_abs_diff(ax.as_ref(), b.as_ref()) < 1e-8, "{s}");
        }
    }

    #[test]
    fn shift_invert_matches_dense() {
        let fs = floquet(0.004, 5);
        let rho0 = fs.initial_state(1, None).unwrap();
        let mut opts = WindowOptions { k_kept: 30, method: EigenMethod::Dense, ..Default::default() };
        let dense = select_quasi_eigenbasis(&fs.operator, &rho0, &opts).unwrap();
        opts.method = EigenMethod::ShiftInvert;
        let si = select_quasi_eigenbasis(&fs.operator, &rho0, &opts).unwrap();
        assert_eq!(dense.k_kept(), si.k_kept());
        for (a, b) in dense.quasi_energies.iter().zip(&si.quasi_energies) {
            assert!((a - b).abs() < 1e-9, "{a} {b}");
        }
        assert!((dense.capture - si.capture).abs() < 1e-8);
        // orthonormal
        let g = si.states.adjoint() * &si.states;
        let id = Mat::<c64>::identity(si.k_kept(), si.k_kept());
        assert!(max_abs_diff(g.as_ref(), id.as_ref()) < 1e-8);
    }

    #[test]
    fn undriven_window_contains_product_state() {
        let fs = floquet(0.0, 3);
        let rho0 = fs.initial_state(0, None).unwrap();
        let opts = WindowOptions { k_kept: 10, ..Default::default() };
        let b = select_quasi_eigenbasis(&fs.operator, &rho0, &opts).unwrap();
        let idx = rho0.components[0].1;
        let best = (0..b.k_kept()).map(|j| b.states[(idx, j)].norm_sqr()).fold(0.0, f64::max);
        // the bare product state is dressed by g; its overlap with one quasi-state is still dominant
        assert!(best > 0.99, "{best}");
        assert!(b.capture > 0.999);
    }

    #[test]
    fn uncoupled_window_holds_exact_product_state() {
        // Detuned drive: at ω_d = ω_r every photon number is degenerate in the rotating frame.
        let mut dev = devices::device_a();
        dev.g = 1e-12;
        let sys = CompositeSystem::new(dev, HilbertSpec::new(4, 8, 3)).unwrap();
        let fs = FloquetSystem::build(&sys, DriveParams { epsilon: 0.0, omega_d: 7.3 }, None, Gauge::Rotating).unwrap();
        let rho0 = fs.initial_state(0, None).unwrap();
        let opts = WindowOptions { k_kept: 10, ..Default::default() };
        let b = select_quasi_eigenbasis(&fs.operator, &rho0, &opts).unwrap();
        let idx = rho0.components[0].1;
        let best = (0..b.k_kept()).map(|j| b.states[(idx, j)].norm_sqr()).fold(0.0, f64::max);
        assert!(best > 1.0 - 1e-8, "{best}");
    }
}
