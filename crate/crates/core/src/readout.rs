//! Single-shot readout statistics: Gaussian fits of IQ shots, threshold
//! assignment, assignment-error correction and bootstrap uncertainties.

use faer::linalg::solvers::Solve;
use faer::Mat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use libm::erfc;
use serde::{Deserialize, Serialize};

use crate::linalg::condition_number;
use crate::{Error, Result};

pub const HISTOGRAM_BINS: usize = 101;
pub const MIN_SHOTS: usize = 1000;
pub const MAX_CONDITION: f64 = 1e6;
pub const DEFAULT_BOOTSTRAP_SAMPLES: usize = 1000;
pub const DEFAULT_BOOTSTRAP_SIZE: usize = 20_000;
/// Component centers closer than this many σ are reported as degenerate.
pub const DEGENERATE_SEPARATION: f64 = 0.1;
const EM_MAX_ITER: usize = 500;
const EM_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Iq {
    pub i: f64,
    pub q: f64,
}

impl Iq {
    pub fn new(i: f64, q: f64) -> Self {
        Self { i, q }
    }

    fn rotate(self, angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self {
            i: c * self.i + s * self.q,
            q: -s * self.i + c * self.q,
        }
    }
}

/// Paired initial and final measurement records, one entry per repetition.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct ShotTable {
    pub initial: Vec<Iq>,
    pub final_: Vec<Iq>,
}

impl ShotTable {
    pub fn n_shots(&self) -> usize {
        self.initial.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.initial.is_empty() {
            return Err(Error::InvalidInput("shot table is empty".into()));
        }
        if self.initial.len() != self.final_.len() {
            return Err(Error::InvalidInput(format!(
                "{} initial shots but {} final shots",
                self.initial.len(),
                self.final_.len()
            )));
        }
        if self.initial.iter().chain(&self.final_).any(|s| !s.i.is_finite() || !s.q.is_finite()) {
            return Err(Error::InvalidInput("non-finite IQ value".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FitMode {
    /// One-dimensional mixtures along the rotated discrimination axes.
    #[default]
    Marginal,
    /// Isotropic two-dimensional mixture.
    Joint,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitOptions {
    pub mode: FitMode,
    /// Fit one σ for all components; otherwise each component has its own.
    pub shared_sigma: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            mode: FitMode::Marginal,
            shared_sigma: true,
        }
    }
}

/// Mixture fit in the lab IQ frame. Components are ordered g, e, then o: the
/// qubit pair is the two heaviest components, g the one at lower lab-frame I
/// (lower Q on a tie).
#[derive(Clone, Debug, Serialize)]
pub struct GaussianFit {
    pub centers: Vec<Iq>,
    /// Shared (pooled) standard deviation.
    pub sigma: f64,
    /// Per-component standard deviations; all equal to `sigma` for a shared fit.
    pub component_sigma: Vec<f64>,
    pub weights: Vec<f64>,
    /// Rotation that puts the g→e axis along +I.
    pub angle: f64,
    pub degenerate: bool,
}

impl GaussianFit {
    pub fn n_components(&self) -> usize {
        self.centers.len()
    }

    fn rotated_centers(&self) -> Vec<Iq> {
        self.centers.iter().map(|c| c.rotate(self.angle)).collect()
    }

    /// ((I_g - I_e)/σ)².
    pub fn snr(&self) -> f64 {
        let r = self.rotated_centers();
        ((r[1].i - r[0].i) / self.sigma).powi(2)
    }

    pub fn thresholds(&self) -> Thresholds {
        let r = self.rotated_centers();
        let i = 0.5 * (r[0].i + r[1].i);
        let q = (r.len() == 3).then(|| {
            let qubit_q = 0.5 * (r[0].q + r[1].q);
            (0.5 * (qubit_q + r[2].q), r[2].q > qubit_q)
        });
        Thresholds {
            angle: self.angle,
            i,
            q,
        }
    }

    /// Assignment error matrix implied by the fit with midpoint thresholds.
    pub fn error_matrix(&self) -> Result<ErrorMatrix> {
        let r = self.rotated_centers();
        let t = self.thresholds();
        let s = &self.component_sigma;
        // tail mass of N(mu, sd) beyond x on the side away from mu
        let tail = |mu: f64, sd: f64, x: f64| 0.5 * erfc((mu - x).abs() / (sd * std::f64::consts::SQRT_2));
        let upper = |mu: f64, sd: f64, x: f64| 0.5 * erfc((x - mu) / (sd * std::f64::consts::SQRT_2));
        match (r.len(), t.q) {
            (2, _) => {
                let pe_g = tail(r[0].i, s[0], t.i);
                let pg_e = tail(r[1].i, s[1], t.i);
                ErrorMatrix::new(vec![vec![1.0 - pe_g, pg_e], vec![pe_g, 1.0 - pg_e]])
            }
            (3, Some((qt, o_above))) => {
                let p_o = |c: Iq, sd: f64| if o_above { upper(c.q, sd, qt) } else { 1.0 - upper(c.q, sd, qt) };
                let p_e = |c: Iq, sd: f64| upper(c.i, sd, t.i);
                let mut cols = Vec::new();
                for k in 0..3 {
                    let po = p_o(r[k], s[k]);
                    let pe = p_e(r[k], s[k]);
                    cols.push([(1.0 - po) * (1.0 - pe), (1.0 - po) * pe, po]);
                }
                ErrorMatrix::new((0..3).map(|x| (0..3).map(|y| cols[y][x]).collect()).collect())
            }
            _ => Err(Error::InvalidInput("fit must have 2 or 3 components".into())),
        }
    }
}

/// Axis-aligned decision boundaries in the rotated frame.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Thresholds {
    pub angle: f64,
    /// Boundary between g (below) and e (above) along rotated I.
    pub i: f64,
    /// Boundary along rotated Q and whether o lies above it.
    pub q: Option<(f64, bool)>,
}

impl Thresholds {
    /// Label 0 = g, 1 = e, 2 = o.
    pub fn assign(&self, shot: Iq) -> usize {
        let r = shot.rotate(self.angle);
        if let Some((qt, above)) = self.q {
            if (r.q > qt) == above {
                return 2;
            }
        }
        usize::from(r.i > self.i)
    }

    pub fn assign_all(&self, shots: &[Iq]) -> Vec<usize> {
        shots.iter().map(|&s| self.assign(s)).collect()
    }
}

/// Equal-width histogram over the data range; returns bin centers and counts.
pub fn histogram(values: &[f64], bins: usize) -> (Vec<f64>, Vec<usize>) {
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
    let mut counts = vec![0; bins];
    for &v in values {
        let k = (((v - lo) / width) as usize).min(bins - 1);
        counts[k] += 1;
    }
    let centers = (0..bins).map(|k| lo + (k as f64 + 0.5) * width).collect();
    (centers, counts)
}

/// Highest `k` local maxima of a three-bin smoothed histogram, as positions.
fn histogram_peaks(values: &[f64], k: usize) -> Vec<f64> {
    let (x, c) = histogram(values, HISTOGRAM_BINS);
    let n = c.len();
    let s: Vec<f64> = (0..n)
        .map(|i| {
            let a = if i > 0 { c[i - 1] } else { 0 };
            let b = if i + 1 < n { c[i + 1] } else { 0 };
            (a + 2 * c[i] + b) as f64
        })
        .collect();
    let mut peaks: Vec<usize> = (0..n)
        .filter(|&i| (i == 0 || s[i] > s[i - 1]) && (i + 1 == n || s[i] >= s[i + 1]))
        .collect();
    peaks.sort_by(|&a, &b| s[b].total_cmp(&s[a]).then(a.cmp(&b)));
    let mut out: Vec<f64> = peaks.iter().take(k).map(|&i| x[i]).collect();
    // too few modes: fill in from quantiles
    if out.len() < k {
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        for j in out.len()..k {
            out.push(v[(v.len() - 1) * (2 * j + 1) / (2 * k)]);
        }
    }
    out
}

struct Mixture1d {
    means: Vec<f64>,
    sigmas: Vec<f64>,
    weights: Vec<f64>,
    log_likelihood: f64,
}

fn log_normal(x: f64, mu: f64, sd: f64) -> f64 {
    let z = (x - mu) / sd;
    -0.5 * z * z - sd.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
}

/// EM for a 1D Gaussian mixture with optional per-sample prior weights.
fn em_1d(x: &[f64], prior: Option<&[f64]>, init: &[f64], shared: bool) -> Mixture1d {
    let k = init.len();
    let w_of = |n: usize| prior.map_or(1.0, |p| p[n]);
    let total: f64 = (0..x.len()).map(w_of).sum();
    let mean = (0..x.len()).map(|n| w_of(n) * x[n]).sum::<f64>() / total;
    let var = (0..x.len()).map(|n| w_of(n) * (x[n] - mean).powi(2)).sum::<f64>() / total;
    let floor = 1e-9 * var.sqrt().max(f64::MIN_POSITIVE);
    let mut means = init.to_vec();
    let sd0 = (var.sqrt() / (2.0 * k as f64)).max(floor);
    let mut sigmas = vec![sd0; k];
    let mut weights = vec![1.0 / k as f64; k];
    let mut resp = vec![0.0; x.len() * k];
    let mut ll_prev = f64::NEG_INFINITY;
    let mut ll = ll_prev;
    for _ in 0..EM_MAX_ITER {
        ll = 0.0;
        for n in 0..x.len() {
            let lp: Vec<f64> = (0..k).map(|j| weights[j].ln() + log_normal(x[n], means[j], sigmas[j])).collect();
            let m = lp.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = lp.iter().map(|v| (v - m).exp()).sum();
            for j in 0..k {
                resp[n * k + j] = (lp[j] - m).exp() / z;
            }
            ll += w_of(n) * (m + z.ln());
        }
        let mut pooled = 0.0;
        for j in 0..k {
            let nj: f64 = (0..x.len()).map(|n| w_of(n) * resp[n * k + j]).sum();
            weights[j] = (nj / total).max(1e-300);
            if nj > 0.0 {
                means[j] = (0..x.len()).map(|n| w_of(n) * resp[n * k + j] * x[n]).sum::<f64>() / nj;
            }
            let ss: f64 = (0..x.len()).map(|n| w_of(n) * resp[n * k + j] * (x[n] - means[j]).powi(2)).sum();
            pooled += ss;
            if !shared && nj > 0.0 {
                sigmas[j] = (ss / nj).sqrt().max(floor);
            }
        }
        if shared {
            let s = (pooled / total).sqrt().max(floor);
            sigmas.iter_mut().for_each(|v| *v = s);
        }
        if (ll - ll_prev).abs() <= EM_TOL * ll.abs().max(1.0) {
            break;
        }
        ll_prev = ll;
    }
    Mixture1d {
        means,
        sigmas,
        weights,
        log_likelihood: ll,
    }
}

/// Posterior membership of every sample under a fitted 1D mixture.
fn responsibilities(x: &[f64], m: &Mixture1d) -> Vec<Vec<f64>> {
    let k = m.means.len();
    x.iter()
        .map(|&v| {
            let lp: Vec<f64> = (0..k).map(|j| m.weights[j].ln() + log_normal(v, m.means[j], m.sigmas[j])).collect();
            let mx = lp.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = lp.iter().map(|p| (p - mx).exp()).sum();
            lp.iter().map(|p| (p - mx).exp() / z).collect()
        })
        .collect()
}

/// Deterministic k-means with farthest-point seeding from the sample mean.
fn kmeans(shots: &[Iq], k: usize) -> Vec<usize> {
    let n = shots.len() as f64;
    let mean = Iq::new(
        shots.iter().map(|s| s.i).sum::<f64>() / n,
        shots.iter().map(|s| s.q).sum::<f64>() / n,
    );
    let d2 = |a: Iq, b: Iq| (a.i - b.i).powi(2) + (a.q - b.q).powi(2);
    let mut centers = vec![*shots.iter().max_by(|a, b| d2(**a, mean).total_cmp(&d2(**b, mean))).unwrap()];
    while centers.len() < k {
        let far = shots
            .iter()
            .max_by(|a, b| {
                let da = centers.iter().map(|c| d2(**a, *c)).fold(f64::INFINITY, f64::min);
                let db = centers.iter().map(|c| d2(**b, *c)).fold(f64::INFINITY, f64::min);
                da.total_cmp(&db)
            })
            .unwrap();
        centers.push(*far);
    }
    let mut label = vec![0; shots.len()];
    for _ in 0..100 {
        let mut changed = false;
        for (s, l) in shots.iter().zip(label.iter_mut()) {
            let best = (0..k).min_by(|&a, &b| d2(*s, centers[a]).total_cmp(&d2(*s, centers[b]))).unwrap();
            changed |= best != *l;
            *l = best;
        }
        for (j, c) in centers.iter_mut().enumerate() {
            let (mut si, mut sq, mut m) = (0.0, 0.0, 0.0);
            for (s, &l) in shots.iter().zip(&label) {
                if l == j {
                    si += s.i;
                    sq += s.q;
                    m += 1.0;
                }
            }
            if m > 0.0 {
                *c = Iq::new(si / m, sq / m);
            }
        }
        if !changed {
            break;
        }
    }
    label
}

/// Fit a 2- or 3-component Gaussian mixture to IQ shots.
pub fn fit_readout_gaussians(shots: &[Iq], n_components: usize, opts: FitOptions) -> Result<GaussianFit> {
    if !(2..=3).contains(&n_components) {
        return Err(Error::domain("n_components", n_components as f64, "must be 2 or 3"));
    }
    if shots.len() < MIN_SHOTS {
        return Err(Error::InvalidInput(format!(
            "{} shots, need at least {MIN_SHOTS}",
            shots.len()
        )));
    }
    if shots.iter().any(|s| !s.i.is_finite() || !s.q.is_finite()) {
        return Err(Error::InvalidInput("non-finite IQ value".into()));
    }
    // coarse clusters fix the orientation of the discrimination axes
    let labels = kmeans(shots, n_components);
    let mut coarse: Vec<(f64, Iq)> = (0..n_components)
        .map(|j| {
            let members: Vec<&Iq> = shots.iter().zip(&labels).filter(|(_, &l)| l == j).map(|(s, _)| s).collect();
            let m = members.len().max(1) as f64;
            (
                members.len() as f64,
                Iq::new(members.iter().map(|s| s.i).sum::<f64>() / m, members.iter().map(|s| s.q).sum::<f64>() / m),
            )
        })
        .collect();
    coarse.sort_by(|a, b| b.0.total_cmp(&a.0));
    // the label order must not depend on which state got more shots
    let (mut a, mut b) = (coarse[0].1, coarse[1].1);
    if (a.i, a.q) > (b.i, b.q) {
        std::mem::swap(&mut a, &mut b);
    }
    let mut angle = (b.q - a.q).atan2(b.i - a.i);
    if a.rotate(angle).i > b.rotate(angle).i {
        angle += std::f64::consts::PI;
    }
    let rot: Vec<Iq> = shots.iter().map(|s| s.rotate(angle)).collect();
    let ri: Vec<f64> = rot.iter().map(|s| s.i).collect();
    let rq: Vec<f64> = rot.iter().map(|s| s.q).collect();

    let mut fit = match opts.mode {
        FitMode::Marginal => fit_marginal(&ri, &rq, n_components, opts.shared_sigma, &coarse, angle),
        FitMode::Joint => fit_joint(&rot, n_components, opts.shared_sigma, &coarse, angle),
    };
    fit.angle = angle;
    // back to the lab frame
    fit.centers = fit.centers.iter().map(|c| c.rotate(-angle)).collect();

    let single = em_1d(&ri, None, &[ri.iter().sum::<f64>() / ri.len() as f64], true);
    let pair = em_1d(&ri, None, &histogram_peaks(&ri, 2), opts.shared_sigma);
    let n = ri.len() as f64;
    // BIC penalty: two means + weight against one mean
    let mixture_preferred = 2.0 * (pair.log_likelihood - single.log_likelihood) > 2.0 * n.ln();
    let r = fit.rotated_centers();
    let sep = ((r[1].i - r[0].i).powi(2) + (r[1].q - r[0].q).powi(2)).sqrt();
    fit.degenerate = sep < DEGENERATE_SEPARATION * fit.sigma || !mixture_preferred;
    if n_components == 3 {
        for j in 0..2 {
            let d = ((r[2].i - r[j].i).powi(2) + (r[2].q - r[j].q).powi(2)).sqrt();
            fit.degenerate |= d < DEGENERATE_SEPARATION * fit.sigma;
        }
    }
    Ok(fit)
}

fn fit_marginal(ri: &[f64], rq: &[f64], k: usize, shared: bool, coarse: &[(f64, Iq)], angle: f64) -> GaussianFit {
    let rc: Vec<Iq> = coarse.iter().map(|c| c.1.rotate(angle)).collect();
    let (qubit_prior, o_part) = if k == 3 {
        // split off o along Q first, then resolve g/e along I among qubit-like shots
        let qubit_q = 0.5 * (rc[0].q + rc[1].q);
        let m = em_1d(rq, None, &[qubit_q, rc[2].q], shared);
        let resp = responsibilities(rq, &m);
        let prior: Vec<f64> = resp.iter().map(|r| r[0]).collect();
        let po: Vec<f64> = resp.iter().map(|r| r[1]).collect();
        (Some(prior), Some((m, po)))
    } else {
        (None, None)
    };
    let mut init = histogram_peaks(ri, 2);
    init.sort_by(f64::total_cmp);
    let mi = em_1d(ri, qubit_prior.as_deref(), &init, shared);
    let (g, e) = if mi.means[0] <= mi.means[1] { (0, 1) } else { (1, 0) };
    let resp = responsibilities(ri, &mi);
    let wq = |n: usize| qubit_prior.as_ref().map_or(1.0, |p| p[n]);
    let mean_q = |j: usize| {
        let (s, w) = (0..rq.len()).fold((0.0, 0.0), |(s, w), n| {
            let r = wq(n) * resp[n][j];
            (s + r * rq[n], w + r)
        });
        s / w.max(f64::MIN_POSITIVE)
    };
    let mut centers = vec![Iq::new(mi.means[g], mean_q(g)), Iq::new(mi.means[e], mean_q(e))];
    let mut component_sigma = vec![mi.sigmas[g], mi.sigmas[e]];
    let qubit_weight = o_part.as_ref().map_or(1.0, |(m, _)| m.weights[0]);
    let mut weights = vec![qubit_weight * mi.weights[g], qubit_weight * mi.weights[e]];
    if let Some((mq, po)) = o_part {
        let w: f64 = po.iter().sum();
        let oi = po.iter().zip(ri).map(|(p, x)| p * x).sum::<f64>() / w.max(f64::MIN_POSITIVE);
        centers.push(Iq::new(oi, mq.means[1]));
        weights.push(mq.weights[1]);
        // Q-marginal spread of each part pooled with the I spread of the qubit pair
        component_sigma = vec![
            0.5 * (mi.sigmas[g] + mq.sigmas[0]),
            0.5 * (mi.sigmas[e] + mq.sigmas[0]),
            mq.sigmas[1],
        ];
        if shared {
            let s = 0.5 * (mi.sigmas[g] + mq.sigmas[0]);
            component_sigma = vec![s; 3];
        }
    }
    let sigma = pooled_sigma(&component_sigma, &weights);
    GaussianFit {
        centers,
        sigma,
        component_sigma,
        weights,
        angle,
        degenerate: false,
    }
}

fn pooled_sigma(sigmas: &[f64], weights: &[f64]) -> f64 {
    let w: f64 = weights.iter().sum();
    (sigmas.iter().zip(weights).map(|(s, p)| p * s * s).sum::<f64>() / w).sqrt()
}

fn fit_joint(rot: &[Iq], k: usize, shared: bool, coarse: &[(f64, Iq)], angle: f64) -> GaussianFit {
    let n = rot.len();
    let mut centers: Vec<Iq> = coarse.iter().map(|c| c.1.rotate(angle)).collect();
    let mut weights: Vec<f64> = coarse.iter().map(|c| c.0 / n as f64).collect();
    let var0 = {
        let mi = rot.iter().map(|s| s.i).sum::<f64>() / n as f64;
        let mq = rot.iter().map(|s| s.q).sum::<f64>() / n as f64;
        rot.iter().map(|s| (s.i - mi).powi(2) + (s.q - mq).powi(2)).sum::<f64>() / (2.0 * n as f64)
    };
    let mut sig = vec![(var0.sqrt() / k as f64).max(1e-12); k];
    let mut resp = vec![0.0; n * k];
    let mut prev = f64::NEG_INFINITY;
    for _ in 0..EM_MAX_ITER {
        let mut ll = 0.0;
        for (t, s) in rot.iter().enumerate() {
            let lp: Vec<f64> = (0..k)
                .map(|j| {
                    weights[j].max(1e-300).ln() + log_normal(s.i, centers[j].i, sig[j]) + log_normal(s.q, centers[j].q, sig[j])
                })
                .collect();
            let m = lp.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = lp.iter().map(|v| (v - m).exp()).sum();
            for j in 0..k {
                resp[t * k + j] = (lp[j] - m).exp() / z;
            }
            ll += m + z.ln();
        }
        let mut pooled = 0.0;
        for j in 0..k {
            let nj: f64 = (0..n).map(|t| resp[t * k + j]).sum();
            weights[j] = nj / n as f64;
            if nj > 0.0 {
                let ci = (0..n).map(|t| resp[t * k + j] * rot[t].i).sum::<f64>() / nj;
                let cq = (0..n).map(|t| resp[t * k + j] * rot[t].q).sum::<f64>() / nj;
                centers[j] = Iq::new(ci, cq);
            }
            let ss: f64 = (0..n)
                .map(|t| resp[t * k + j] * ((rot[t].i - centers[j].i).powi(2) + (rot[t].q - centers[j].q).powi(2)))
                .sum();
            pooled += ss;
            if !shared && nj > 0.0 {
                sig[j] = (ss / (2.0 * nj)).sqrt().max(1e-12);
            }
        }
        if shared {
            let s = (pooled / (2.0 * n as f64)).sqrt().max(1e-12);
            sig.iter_mut().for_each(|v| *v = s);
        }
        if (ll - prev).abs() <= EM_TOL * ll.abs().max(1.0) {
            break;
        }
        prev = ll;
    }
    // keep the g/e order along rotated I
    if k >= 2 && centers[0].i > centers[1].i {
        centers.swap(0, 1);
        weights.swap(0, 1);
        sig.swap(0, 1);
    }
    let sigma = pooled_sigma(&sig, &weights);
    GaussianFit {
        centers,
        sigma,
        component_sigma: sig,
        weights,
        angle,
        degenerate: false,
    }
}

/// ½(1 - erf(√(SNR/8))).
pub fn assignment_error_probability(snr: f64) -> Result<f64> {
    if !(snr >= 0.0) {
        return Err(Error::domain("snr", snr, "must be non-negative"));
    }
    if snr.is_infinite() {
        return Ok(0.0);
    }
    Ok(0.5 * erfc((snr / 8.0).sqrt()))
}

/// Column-stochastic matrix of P(measured x | true y), stored as rows of x.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorMatrix {
    entries: Vec<Vec<f64>>,
}

impl ErrorMatrix {
    pub fn new(entries: Vec<Vec<f64>>) -> Result<Self> {
        let d = entries.len();
        if !(2..=3).contains(&d) || entries.iter().any(|r| r.len() != d) {
            return Err(Error::Dimension("error matrix must be 2x2 or 3x3".into()));
        }
        for y in 0..d {
            let mut s = 0.0;
            for row in &entries {
                let p = row[y];
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::domain("error-matrix entry", p, "must lie in [0, 1]"));
                }
                s += p;
            }
            if (s - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidInput(format!("column {y} sums to {s}")));
            }
        }
        Ok(Self { entries })
    }

    pub fn identity(d: usize) -> Result<Self> {
        Self::new((0..d).map(|x| (0..d).map(|y| f64::from(u8::from(x == y))).collect()).collect())
    }

    /// Off-diagonal P(x|y) given as (x, y, p); each diagonal takes the remainder of its column.
    pub fn from_off_diagonal(d: usize, errors: &[(usize, usize, f64)]) -> Result<Self> {
        let mut e = vec![vec![0.0; d]; d];
        for &(x, y, p) in errors {
            if x >= d || y >= d || x == y {
                return Err(Error::InvalidInput(format!("bad error-matrix index ({x}, {y})")));
            }
            e[x][y] = p;
        }
        for y in 0..d {
            let off: f64 = (0..d).filter(|&x| x != y).map(|x| e[x][y]).sum();
            e[y][y] = 1.0 - off;
        }
        Self::new(e)
    }

    /// Two-state matrix with the symmetric error of the given SNR.
    pub fn from_snr(snr: f64) -> Result<Self> {
        let p = assignment_error_probability(snr)?;
        Self::from_off_diagonal(2, &[(1, 0, p), (0, 1, p)])
    }

    pub fn dim(&self) -> usize {
        self.entries.len()
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.entries[x][y]
    }

    pub fn to_mat(&self) -> Mat<f64> {
        let d = self.dim();
        Mat::from_fn(d, d, |x, y| self.entries[x][y])
    }

    pub fn condition_number(&self) -> Result<f64> {
        condition_number(self.to_mat().as_ref())
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        self.entries.iter().map(|r| r.iter().zip(v).map(|(a, b)| a * b).sum()).collect()
    }

    fn checked_inverse(&self) -> Result<Mat<f64>> {
        let c = self.condition_number()?;
        if !(c < MAX_CONDITION) {
            return Err(Error::IllConditioned(c));
        }
        let m = self.to_mat();
        let d = self.dim();
        Ok(m.partial_piv_lu().solve(Mat::<f64>::identity(d, d)))
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CorrectedCounts {
    pub values: Vec<f64>,
    /// Set when negative components were clipped to zero and the rest rescaled.
    pub clipped: bool,
}

/// E⁻¹ counts, with negative entries clipped and the total restored.
pub fn correct_counts(counts: &[f64], e: &ErrorMatrix) -> Result<CorrectedCounts> {
    if counts.len() != e.dim() {
        return Err(Error::Dimension(format!(
            "{} counts for a {}-state error matrix",
            counts.len(),
            e.dim()
        )));
    }
    let inv = e.checked_inverse()?;
    let raw: Vec<f64> = (0..e.dim()).map(|x| (0..e.dim()).map(|y| inv[(x, y)] * counts[y]).sum()).collect();
    Ok(clip_renormalize(raw, counts.iter().sum()))
}

fn clip_renormalize(raw: Vec<f64>, total: f64) -> CorrectedCounts {
    if raw.iter().all(|&v| v >= 0.0) {
        return CorrectedCounts {
            values: raw,
            clipped: false,
        };
    }
    let clipped: Vec<f64> = raw.iter().map(|v| v.max(0.0)).collect();
    let s: f64 = clipped.iter().sum();
    let values = if s > 0.0 {
        clipped.iter().map(|v| v * total / s).collect()
    } else {
        clipped
    };
    CorrectedCounts { values, clipped: true }
}

/// Conditional probabilities P(f | i) from a joint count matrix M[f][i],
/// corrected as E_f⁻¹ M E_i⁻ᵀ, clipped and normalized per initial state.
/// Returns the matrix indexed [f][i] and whether any entry was clipped.
pub fn correct_joint(counts: &[Vec<f64>], e_init: &ErrorMatrix, e_final: &ErrorMatrix) -> Result<(Vec<Vec<f64>>, bool)> {
    let (df, di) = (e_final.dim(), e_init.dim());
    if counts.len() != df || counts.iter().any(|r| r.len() != di) {
        return Err(Error::Dimension("joint counts do not match the error matrices".into()));
    }
    let fi = e_final.checked_inverse()?;
    let ii = e_init.checked_inverse()?;
    let m = Mat::from_fn(df, di, |f, i| counts[f][i]);
    let t = &(&fi * &m) * ii.transpose();
    let mut clipped = false;
    let mut p = vec![vec![0.0; di]; df];
    for i in 0..di {
        let col: Vec<f64> = (0..df).map(|f| t[(f, i)]).collect();
        clipped |= col.iter().any(|&v| v < 0.0);
        let pos: Vec<f64> = col.iter().map(|v| v.max(0.0)).collect();
        let s: f64 = pos.iter().sum();
        for f in 0..df {
            p[f][i] = if s > 0.0 { pos[f] / s } else { 0.0 };
        }
    }
    Ok((p, clipped))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BootstrapOptions {
    pub n_samples: usize,
    pub sample_size: usize,
    pub seed: u64,
}

impl Default for BootstrapOptions {
    fn default() -> Self {
        Self {
            n_samples: DEFAULT_BOOTSTRAP_SAMPLES,
            sample_size: DEFAULT_BOOTSTRAP_SIZE,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BootstrapResult {
    /// Mean of P(f | i), indexed [f][i].
    pub mean: Vec<Vec<f64>>,
    pub sd: Vec<Vec<f64>>,
    /// Number of resamples in which clipping was needed.
    pub clipped_samples: usize,
    pub options: BootstrapOptions,
}

/// Resample (initial, final) label pairs with replacement, correct each
/// resample with the error matrices and report the spread of P(f | i).
/// Every resample draws from its own stream, so results do not depend on threading.
pub fn bootstrap_probabilities(
    pairs: &[(usize, usize)],
    opts: BootstrapOptions,
    e_init: &ErrorMatrix,
    e_final: &ErrorMatrix,
) -> Result<BootstrapResult> {
    if opts.n_samples == 0 || opts.sample_size == 0 {
        return Err(Error::InvalidInput("bootstrap needs at least one sample of one shot".into()));
    }
    if opts.sample_size > pairs.len() {
        return Err(Error::InvalidInput(format!(
            "sample size {} exceeds the {} available shots",
            opts.sample_size,
            pairs.len()
        )));
    }
    let (di, df) = (e_init.dim(), e_final.dim());
    if let Some(&(i, f)) = pairs.iter().find(|&&(i, f)| i >= di || f >= df) {
        return Err(Error::InvalidInput(format!("label pair ({i}, {f}) out of range")));
    }
    let samples: Vec<Result<(Vec<Vec<f64>>, bool)>> = (0..opts.n_samples)
        .into_par_iter()
        .map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            rng.set_stream(s as u64);
            let mut counts = vec![vec![0.0; di]; df];
            for _ in 0..opts.sample_size {
                let (i, f) = pairs[rng.random_range(0..pairs.len())];
                counts[f][i] += 1.0;
            }
            correct_joint(&counts, e_init, e_final)
        })
        .collect();
    let mut sum = vec![vec![0.0; di]; df];
    let mut sq = vec![vec![0.0; di]; df];
    let mut clipped_samples = 0;
    for r in samples {
        let (p, c) = r?;
        clipped_samples += usize::from(c);
        for f in 0..df {
            for i in 0..di {
                sum[f][i] += p[f][i];
                sq[f][i] += p[f][i] * p[f][i];
            }
        }
    }
    let n = opts.n_samples as f64;
    let mean: Vec<Vec<f64>> = sum.iter().map(|r| r.iter().map(|v| v / n).collect()).collect();
    let sd = (0..df)
        .map(|f| {
            (0..di)
                .map(|i| {
                    let var = if opts.n_samples > 1 {
                        (sq[f][i] - n * mean[f][i] * mean[f][i]) / (n - 1.0)
                    } else {
                        0.0
                    };
                    var.max(0.0).sqrt()
                })
                .collect()
        })
        .collect();
    Ok(BootstrapResult {
        mean,
        sd,
        clipped_samples,
        options: opts,
    })
}

/// Generator for synthetic readout experiments.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SyntheticReadout {
    /// IQ center of each state, lab frame.
    pub centers: Vec<Iq>,
    pub sigma: f64,
    /// Probability of each prepared initial state.
    pub prior: Vec<f64>,
    /// True transition probabilities P(f | i), indexed [f][i].
    pub transitions: Vec<Vec<f64>>,
}

#[derive(Clone, Debug)]
pub struct SyntheticShots {
    pub table: ShotTable,
    /// True (initial, final) state of every repetition.
    pub truth: Vec<(usize, usize)>,
}

impl SyntheticReadout {
    pub fn generate(&self, n_shots: usize, seed: u64) -> Result<SyntheticShots> {
        let d = self.centers.len();
        if self.prior.len() != d || self.transitions.len() != d || self.transitions.iter().any(|r| r.len() != d) {
            return Err(Error::Dimension("synthetic readout tables disagree in size".into()));
        }
        let noise = Normal::new(0.0, self.sigma).map_err(|e| Error::InvalidInput(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let draw = |rng: &mut ChaCha8Rng, p: &mut dyn Iterator<Item = f64>| {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut last = 0;
            for (k, w) in p.enumerate() {
                acc += w;
                last = k;
                if u < acc {
                    return k;
                }
            }
            last
        };
        let mut table = ShotTable::default();
        let mut truth = Vec::with_capacity(n_shots);
        for _ in 0..n_shots {
            let i = draw(&mut rng, &mut self.prior.iter().copied());
            let f = draw(&mut rng, &mut (0..d).map(|x| self.transitions[x][i]));
            let c0 = self.centers[i];
            let c1 = self.centers[f];
            table.initial.push(Iq::new(c0.i + noise.sample(&mut rng), c0.q + noise.sample(&mut rng)));
            table.final_.push(Iq::new(c1.i + noise.sample(&mut rng), c1.q + noise.sample(&mut rng)));
            truth.push((i, f));
        }
        Ok(SyntheticShots { table, truth })
    }
}

/// Relabel every shot with the thresholds of the given fits.
pub fn label_pairs(table: &ShotTable, init_fit: &GaussianFit, final_fit: &GaussianFit) -> Result<Vec<(usize, usize)>> {
    table.validate()?;
    let ti = init_fit.thresholds();
    let tf = final_fit.thresholds();
    Ok(table
        .initial
        .iter()
        .zip(&table.final_)
        .map(|(a, b)| (ti.assign(*a), tf.assign(*b)))
        .collect())
}
