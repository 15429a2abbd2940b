//! Branch analysis: partition the dressed (quasi-)eigenstates into ladders that
//! start from a bare fluxonium state and climb in photon number, and follow
//! how their fluxonium content changes along the ladder.

use faer::Mat;
use serde::Serialize;

use crate::composite::{CompositeSystem, DeviceParams, DriveParams, HilbertSpec};
use crate::floquet::lattice::{FloquetSystem, Gauge, ShiftedOperator};
use crate::linalg::{c64, complexify, destroy, eigh};
use crate::operator::Subsystem;
use crate::units::TWO_PI;
use crate::{Error, Result};

/// Candidates whose overlaps differ by less than this are reported as a crossing.
pub const TIE_MARGIN: f64 = 0.05;

#[derive(Clone, Debug, Serialize)]
pub struct BranchMember {
    /// Photon index along the branch.
    pub n: usize,
    /// Index of the eigenvector in the diagonalized operator.
    pub state: usize,
    pub energy: f64,
    /// <ψ|Π_x|ψ> for every retained fluxonium level x.
    pub probabilities: Vec<f64>,
    /// <ψ|a†a|ψ>.
    pub photons: f64,
    /// Overlap with the raised previous member that selected this state.
    pub overlap: f64,
}

impl BranchMember {
    pub fn mean_flux_index(&self) -> f64 {
        self.probabilities.iter().enumerate().map(|(x, p)| x as f64 * p).sum()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Branch {
    pub label: usize,
    pub members: Vec<BranchMember>,
}

impl Branch {
    pub fn probability(&self, level: usize) -> Vec<f64> {
        self.members.iter().map(|m| m.probabilities.get(level).copied().unwrap_or(0.0)).collect()
    }

    pub fn photon_index(&self) -> Vec<f64> {
        self.members.iter().map(|m| m.n as f64).collect()
    }

    pub fn mean_flux_index(&self) -> Vec<f64> {
        self.members.iter().map(|m| m.mean_flux_index()).collect()
    }

    /// First photon index at which the population of the branch's own level
    /// has fallen by `drop` from its value at n = 0, linearly interpolated.
    pub fn transfer_onset(&self, drop: f64) -> Option<f64> {
        let p = self.probability(self.label);
        let level = p.first()? - drop;
        crate::floquet::sweep::threshold_crossing(&self.photon_index(), &p, level)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BranchCrossing {
    pub branch: usize,
    pub n: usize,
    pub best: f64,
    pub second: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct BranchAnalysis {
    pub branches: Vec<Branch>,
    pub crossings: Vec<BranchCrossing>,
}

/// Diagonalized operator together with the bookkeeping the continuation needs.
struct Spectrum {
    energies: Vec<f64>,
    vectors: Mat<c64>,
    flux_level: Vec<usize>,
    photons: Vec<f64>,
    n_flux: usize,
}

/// Branches for the lowest `n_levels_tracked` fluxonium states. With ε = 0 the
/// static Hamiltonian is used; otherwise the rotating-gauge Floquet operator,
/// where adding a photon also moves one sideband up.
pub fn compute_branches(
    dev: DeviceParams,
    spec: HilbertSpec,
    epsilon: f64,
    n_levels_tracked: usize,
) -> Result<BranchAnalysis> {
    let spec = HilbertSpec {
        tls_present: false,
        ..spec
    };
    let sys = CompositeSystem::new(dev, spec)?;
    if n_levels_tracked == 0 || n_levels_tracked > spec.n_flux {
        return Err(Error::domain(
            "n_levels_tracked",
            n_levels_tracked as f64,
            "must be between 1 and n_flux",
        ));
    }
    let n_max = spec.n_fock.saturating_sub(3).max(1);
    if epsilon == 0.0 {
        let h = sys.static_hamiltonian()?;
        let (w, v) = eigh(h.matrix.as_ref())?;
        let layout = &h.layout;
        let dim = layout.dim();
        let sp = Spectrum {
            energies: w,
            vectors: v,
            flux_level: (0..dim).map(|i| layout.digits(i)[0]).collect(),
            photons: (0..dim).map(|i| layout.digits(i)[1] as f64).collect(),
            n_flux: spec.n_flux,
        };
        let a = complexify(destroy(spec.n_fock).as_ref());
        let raise = layout.embed(Subsystem::Resonator, a.adjoint().to_owned().as_ref())?;
        let starts = (0..n_levels_tracked).map(|q| layout.index(&[q, 0])).collect::<Vec<_>>();
        Ok(continue_branches(&sp, &starts, n_max, |x| &raise * x))
    } else {
        let omega_d = sys.dressed_resonator_frequency(0)?;
        let fs = FloquetSystem::build(&sys, DriveParams { epsilon, omega_d }, None, Gauge::Rotating)?;
        let dim = fs.dim();
        if dim > spec.dense_cap {
            return Err(Error::Resource {
                requested: dim,
                cap: spec.dense_cap,
            });
        }
        let (w, v) = eigh(fs.operator.to_dense().as_ref())?;
        let b = fs.block();
        let sp = Spectrum {
            energies: w,
            vectors: v,
            flux_level: (0..dim).map(|i| fs.flux_level[i % b]).collect(),
            photons: (0..dim).map(|i| fs.photons[i % b]).collect(),
            n_flux: spec.n_flux,
        };
        let ad = complexify(destroy(spec.n_fock).as_ref()).adjoint().to_owned();
        let local = crate::linalg::kron(crate::linalg::identity(spec.n_flux).as_ref(), ad.as_ref());
        let raise = ShiftedOperator { local, shift: 1 };
        let s = fs.operator.n_sidebands();
        let n_max = n_max.min(fs.operator.lattice.half_width());
        let starts = (0..n_levels_tracked).map(|q| fs.product_index(q, 0, 0)).collect::<Vec<_>>();
        Ok(continue_branches(&sp, &starts, n_max, |x| raise.apply(x.as_ref(), s)))
    }
}

fn overlaps(vectors: &Mat<c64>, target: &Mat<c64>) -> Vec<f64> {
    let o = vectors.adjoint() * target;
    (0..o.nrows()).map(|j| o[(j, 0)].norm_sqr()).collect()
}

fn continue_branches<R>(sp: &Spectrum, starts: &[usize], n_max: usize, raise: R) -> BranchAnalysis
where
    R: Fn(&Mat<c64>) -> Mat<c64>,
{
    let dim = sp.energies.len();
    let nb = starts.len();
    let mut taken = vec![false; dim];
    let mut branches: Vec<Branch> = (0..nb)
        .map(|q| Branch {
            label: q,
            members: Vec::new(),
        })
        .collect();
    let mut crossings = Vec::new();
    let mut targets: Vec<Option<Mat<c64>>> = starts
        .iter()
        .map(|&idx| Some(Mat::from_fn(dim, 1, |i, _| if i == idx { c64::new(1.0, 0.0) } else { c64::new(0.0, 0.0) })))
        .collect();
    for n in 0..=n_max {
        let ov: Vec<Option<Vec<f64>>> = targets.iter().map(|t| t.as_ref().map(|t| overlaps(&sp.vectors, t))).collect();
        let best = |o: &Option<Vec<f64>>| o.as_ref().map(|o| o.iter().cloned().fold(0.0, f64::max)).unwrap_or(-1.0);
        let mut order: Vec<usize> = (0..nb).filter(|&q| ov[q].is_some()).collect();
        order.sort_by(|&a, &b| best(&ov[b]).total_cmp(&best(&ov[a])).then(a.cmp(&b)));
        for q in order {
            let o = ov[q].as_ref().unwrap();
            let mut free: Vec<usize> = (0..dim).filter(|&j| !taken[j]).collect();
            if free.is_empty() {
                targets[q] = None;
                continue;
            }
            free.sort_by(|&a, &b| o[b].total_cmp(&o[a]).then(a.cmp(&b)));
            let b1 = o[free[0]];
            let mut pick = free[0];
            if let Some(&second) = free.get(1) {
                let b2 = o[second];
                if b1 - b2 < TIE_MARGIN {
                    crossings.push(BranchCrossing {
                        branch: q,
                        n,
                        best: b1,
                        second: b2,
                    });
                    pick = pick.min(second);
                }
            }
            taken[pick] = true;
            let col = Mat::from_fn(dim, 1, |i, _| sp.vectors[(i, pick)]);
            let mut probabilities = vec![0.0; sp.n_flux];
            let mut photons = 0.0;
            for i in 0..dim {
                let w = col[(i, 0)].norm_sqr();
                probabilities[sp.flux_level[i]] += w;
                photons += w * sp.photons[i];
            }
            branches[q].members.push(BranchMember {
                n,
                state: pick,
                energy: sp.energies[pick],
                probabilities,
                photons,
                overlap: o[pick],
            });
            let raised = raise(&col);
            let norm = raised.norm_l2();
            targets[q] = if norm > 0.0 {
                Some(Mat::from_fn(dim, 1, |i, _| raised[(i, 0)] / norm))
            } else {
                None
            };
        }
    }
    BranchAnalysis {
        branches,
        crossings,
    }
}

/// Diabatic passage probability exp(-π Δ² / 2v) for a full minimum splitting
/// `gap` (GHz) swept at `velocity` (GHz/ns). Both are converted to angular
/// units, Δ → 2πΔ and v → 2πv, which gives exp(-π² gap² / velocity).
pub fn landau_zener_probability(gap: f64, velocity: f64) -> Result<f64> {
    if !(gap >= 0.0) {
        return Err(Error::domain("gap", gap, "must be non-negative"));
    }
    if !(velocity > 0.0) {
        return Err(Error::domain("velocity", velocity, "must be positive"));
    }
    let d = TWO_PI * gap;
    let v = TWO_PI * velocity;
    Ok((-std::f64::consts::PI * d * d / (2.0 * v)).exp())
}

/// Sweep rate (GHz/ns) of a level detuning that moves by `slope_per_photon`
/// (GHz per photon) while the resonator fills at the rate n̄·κ (κ angular).
pub fn photon_ramp_velocity(n_bar: f64, kappa: f64, slope_per_photon: f64) -> f64 {
    slope_per_photon.abs() * n_bar * TWO_PI * kappa
}
