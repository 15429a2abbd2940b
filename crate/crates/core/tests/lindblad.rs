//! Floquet-Lindblad pipeline against oracles that avoid the Floquet machinery.

use fluxleak::composite::{CompositeSystem, DeviceParams, DriveParams, HilbertSpec};
use fluxleak::devices;
use fluxleak::floquet::evolve::propagate;
use fluxleak::floquet::{
    evolve_to_fixed_point, run_point, select_quasi_eigenbasis, EvolutionDiagnostics, EvolutionOptions,
    FloquetSystem, Gauge, InitialState, ReducedModel, SolverOptions, WindowOptions,
};
use fluxleak::fluxonium::{E, G};
use std::f64::consts::PI;

/// Devices require g > 0; this is numerically indistinguishable from no coupling.
const DECOUPLED: f64 = 1e-12;

fn empty_cavity() -> DeviceParams {
    DeviceParams { g: DECOUPLED, ..devices::device_a() }
}

fn small_window() -> WindowOptions {
    WindowOptions {
        k_kept: 60,
        ..WindowOptions::default()
    }
}

#[test]
fn undriven_cavity_decays_at_kappa() {
    let dev = empty_cavity();
    let sys = CompositeSystem::new(dev, HilbertSpec::new(2, 6, 1)).unwrap();
    let drive = DriveParams {
        epsilon: 0.0,
        omega_d: dev.omega_r,
    };
    let fs = FloquetSystem::build(&sys, drive, None, Gauge::Rotating).unwrap();
    let rho0 = InitialState::pure(fs.product_index(G, 1, 0));
    let basis = select_quasi_eigenbasis(&fs.operator, &rho0, &small_window()).unwrap();
    let model = ReducedModel::new(&fs, &basis, 0.02);
    let mut y = model.initial(&basis, &rho0);
    let opts = EvolutionOptions {
        atol: 1e-12,
        rtol: 1e-10,
        ..EvolutionOptions::default()
    };
    let mut diag = EvolutionDiagnostics::default();
    let mut t = 0.0;
    for step in [100.0, 400.0, 1000.0] {
        propagate(&model, &mut y, t, step, &opts, false, &mut diag).unwrap();
        t = step;
        let n = model.expectation(&model.number, &y);
        let exact = (-2.0 * PI * dev.kappa * t).exp();
        assert!((n / exact - 1.0).abs() < 1e-6, "t = {t}: {n} vs {exact}");
    }
}

/// Steady photon number of the classical cavity amplitude under the full
/// lab-frame drive ε sin(Ωt)(a + a†), integrated with fixed-step RK4.
/// The free rotation is removed exactly (β = α e^{iω_r t}) so the stepper
/// adds no numerical damping at the cavity frequency.
fn direct_cavity_photons(omega_r: f64, kappa: f64, epsilon: f64, omega_d: f64) -> f64 {
    let w = 2.0 * PI;
    let rhs = |t: f64, (re, im): (f64, f64)| {
        // dβ/dt = -(κ/2) β - i ε sin(Ωt) e^{iω_r t}, all angular.
        let f = epsilon * w * (w * omega_d * t).sin();
        let (s, c) = (w * omega_r * t).sin_cos();
        let dre = -0.5 * w * kappa * re + f * s;
        let dim = -0.5 * w * kappa * im - f * c;
        (dre, dim)
    };
    let period = 1.0 / omega_d;
    let dt = period / 40.0;
    let t_end = 12.0 / kappa;
    let steps = (t_end / dt) as usize;
    let per = 40;
    let mut y = (0.0, 0.0);
    let mut t = 0.0;
    let mut acc = 0.0;
    let mut count = 0;
    for s in 0..steps {
        let k1 = rhs(t, y);
        let k2 = rhs(t + dt / 2.0, (y.0 + dt / 2.0 * k1.0, y.1 + dt / 2.0 * k1.1));
        let k3 = rhs(t + dt / 2.0, (y.0 + dt / 2.0 * k2.0, y.1 + dt / 2.0 * k2.1));
        let k4 = rhs(t + dt, (y.0 + dt * k3.0, y.1 + dt * k3.1));
        y.0 += dt / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
        y.1 += dt / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
        t += dt;
        if s + 100 * per >= steps {
            acc += y.0 * y.0 + y.1 * y.1;
            count += 1;
        }
    }
    acc / count as f64
}

#[test]
fn driven_cavity_matches_lorentzian_and_direct_integration() {
    let dev = empty_cavity();
    let sys = CompositeSystem::new(dev, HilbertSpec::new(2, 14, 3)).unwrap();
    let kappa = dev.kappa;
    let epsilon = 2.0 * 2f64.sqrt() * kappa / 2.0;
    for delta in [0.0, 0.5 * kappa, -kappa] {
        let omega_d = dev.omega_r + delta;
        let p = run_point(&sys, None, epsilon, omega_d, G, &SolverOptions::default()).unwrap();
        let lorentz = (epsilon / 2.0).powi(2) / ((kappa / 2.0).powi(2) + delta * delta);
        let direct = direct_cavity_photons(dev.omega_r, kappa, epsilon, omega_d);
        assert!((direct / lorentz - 1.0).abs() < 0.02, "direct {direct} vs {lorentz}");
        assert!((p.n_bar / direct - 1.0).abs() < 0.02, "δ = {delta}: {} vs {direct}", p.n_bar);
        assert!((p.p(G) - 1.0).abs() < 1e-9);
    }
}

#[test]
fn undriven_ground_state_is_stationary() {
    let dev = devices::device_a();
    let sys = CompositeSystem::new(dev, HilbertSpec::new(4, 8, 3)).unwrap();
    let p = run_point(&sys, None, 0.0, dev.omega_r, G, &SolverOptions::default()).unwrap();
    // The dressed vacuum carries virtual photons and bare-level admixture of order (g/Δ)².
    assert!(p.n_bar < 1e-3, "{}", p.n_bar);
    assert!((p.p(G) - 1.0).abs() < 1e-2);
    let weak = DeviceParams { g: 1e-4, ..dev };
    let sys = CompositeSystem::new(weak, HilbertSpec::new(4, 8, 3)).unwrap();
    let p = run_point(&sys, None, 0.0, weak.omega_r, G, &SolverOptions::default()).unwrap();
    assert!((p.p(G) - 1.0).abs() < 1e-6, "{}", p.p(G));
    assert!(p.n_bar < 1e-6);
}

#[test]
fn fixed_point_respects_the_cptp_contract() {
    let dev = devices::device_a();
    let sys = CompositeSystem::new(dev, HilbertSpec::new(5, 20, 5)).unwrap();
    let omega_d = sys.dressed_resonator_frequency(E).unwrap();
    let drive = DriveParams {
        epsilon: 2.0 * 3f64.sqrt() * dev.kappa / 2.0,
        omega_d,
    };
    let fs = FloquetSystem::build(&sys, drive, None, Gauge::Rotating).unwrap();
    let rho0 = fs.initial_state(E, None).unwrap();
    let basis = select_quasi_eigenbasis(&fs.operator, &rho0, &WindowOptions::default()).unwrap();
    let res = evolve_to_fixed_point(&fs, &basis, &rho0, &EvolutionOptions::default()).unwrap();
    let d = res.diagnostics;
    assert!(d.max_trace_error < 1e-8 && d.max_hermiticity_error < 1e-9);
    let final_min = fluxleak::linalg::eigvalsh(res.rho.as_ref()).unwrap()[0];
    assert!(final_min > -1e-8, "final {final_min}, trajectory {}", d.min_eigenvalue);
    assert!(d.min_eigenvalue > -1e-7, "trajectory {}", d.min_eigenvalue);
    let total: f64 = res.populations.iter().sum();
    assert!((total - 1.0).abs() < 1e-6);
    assert!(res.n_bar > 2.0 && res.n_bar < 4.0, "{}", res.n_bar);
}

#[test]
fn lab_and_rotating_gauges_agree() {
    let dev = devices::device_a();
    let epsilon = 2.0 * 2f64.sqrt() * dev.kappa / 2.0;
    let mut results = Vec::new();
    for (gauge, sidebands) in [(Gauge::Rotating, 3), (Gauge::Lab, 17)] {
        let sys = CompositeSystem::new(dev, HilbertSpec::new(4, 10, sidebands)).unwrap();
        let omega_d = sys.dressed_resonator_frequency(E).unwrap();
        let opts = SolverOptions {
            gauge,
            ..SolverOptions::default()
        };
        results.push(run_point(&sys, None, epsilon, omega_d, E, &opts).unwrap());
    }
    let (a, b) = (&results[0], &results[1]);
    assert!((a.n_bar - b.n_bar).abs() < 0.02 * a.n_bar, "{} vs {}", a.n_bar, b.n_bar);
    for k in 0..4 {
        assert!((a.p(k) - b.p(k)).abs() < 0.01, "level {k}: {} vs {}", a.p(k), b.p(k));
    }
}

#[test]
fn sideband_count_is_converged() {
    let dev = devices::device_a().with_phi(devices::DEVICE_A_PHI_READOUT);
    let mut results = Vec::new();
    for sidebands in [13, 17] {
        let sys = CompositeSystem::new(dev, HilbertSpec::new(5, 30, sidebands)).unwrap();
        let omega_d = sys.dressed_resonator_frequency(G).unwrap();
        let epsilon = 2.0 * 10f64.sqrt() * dev.kappa / 2.0;
        results.push(run_point(&sys, None, epsilon, omega_d, G, &SolverOptions::default()).unwrap());
    }
    for k in 0..5 {
        let d = (results[0].p(k) - results[1].p(k)).abs();
        assert!(d < 0.01, "level {k}: {d}");
    }
}

#[test]
fn generator_preserves_trace_and_hermiticity() {
    use fluxleak::linalg::c64;
    use rand::{Rng, SeedableRng};
    let dev = devices::device_a();
    let sys = CompositeSystem::new(dev, HilbertSpec::new(5, 20, 5)).unwrap();
    let drive = DriveParams {
        epsilon: 2.0 * 3f64.sqrt() * dev.kappa / 2.0,
        omega_d: sys.dressed_resonator_frequency(E).unwrap(),
    };
    let fs = FloquetSystem::build(&sys, drive, None, Gauge::Rotating).unwrap();
    let rho0 = fs.initial_state(E, None).unwrap();
    let basis = select_quasi_eigenbasis(&fs.operator, &rho0, &WindowOptions::default()).unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    for gap in [0.02, 1e9] {
        let model = ReducedModel::new(&fs, &basis, gap);
        let mut y = vec![c64::new(0.0, 0.0); model.packed_len()];
        let mut offset = 0;
        for r in &model.clusters {
            let n = r.len();
            for j in 0..n {
                for i in 0..=j {
                    let z = if i == j {
                        c64::new(rng.random_range(-1.0..1.0), 0.0)
                    } else {
                        c64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
                    };
                    y[offset + j * n + i] = z;
                    y[offset + i * n + j] = z.conj();
                }
            }
            offset += n * n;
        }
        let mut dy = vec![c64::new(0.0, 0.0); y.len()];
        model.rhs(&y, &mut dy);
        let trace = model.trace(&dy) + 1.0;
        assert!((trace - 1.0).abs() < 1e-10, "gap {gap}: tr 𝒦ρ = {:e}", trace - 1.0);
        assert!(model.hermiticity_error(&dy) < 1e-10);
    }
}

