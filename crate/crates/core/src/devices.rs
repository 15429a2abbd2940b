//! Parameter sets for the three measured devices and the fitted spurious modes.

use crate::composite::{DeviceParams, TlsParams};
use crate::fluxonium::FluxoniumParams;

const fn device(e_j: f64, e_c: f64, e_l: f64, g: f64, omega_r: f64, kappa: f64) -> DeviceParams {
    DeviceParams {
        fluxonium: FluxoniumParams {
            e_j,
            e_c,
            e_l,
            phi_ext: 0.5,
        },
        g,
        omega_r,
        kappa,
    }
}

pub fn device_a() -> DeviceParams {
    device(2.68, 1.09, 0.32, 0.203, 7.440, 0.0006)
}

pub fn device_b() -> DeviceParams {
    device(2.49, 1.06, 0.32, 0.215, 7.047, 0.0006)
}

pub fn device_c() -> DeviceParams {
    device(2.25, 1.08, 0.32, 0.250, 7.826, 0.0014)
}

/// Device C's fluxonium with the resonator frequency varied over [7.7415, 7.8165] GHz.
pub fn simulation_row(omega_r: f64) -> DeviceParams {
    DeviceParams {
        omega_r,
        ..device_c()
    }
}

pub const SIM_OMEGA_R_RANGE: (f64, f64) = (7.7415, 7.8165);

/// Flux at which device A was read out in the leakage measurements.
pub const DEVICE_A_PHI_READOUT: f64 = 0.500196;

pub fn by_name(name: &str) -> Option<DeviceParams> {
    match name {
        "A" | "a" => Some(device_a()),
        "B" | "b" => Some(device_b()),
        "C" | "c" => Some(device_c()),
        _ => None,
    }
}

pub fn tls_device_a() -> TlsParams {
    TlsParams::new(0.411, 0.0013)
}

/// Mode seen by device A when biased at φ_ext = 0.48.
pub fn tls_device_a_048() -> TlsParams {
    TlsParams::new(0.457, 0.001)
}

pub fn tls_device_b() -> TlsParams {
    TlsParams::new(0.4305, 0.0015)
}

pub fn tls_device_c() -> TlsParams {
    TlsParams::new(0.5245, 0.00225)
}

/// Two fitted values are quoted for the multi-photon mode of device A.
pub const DEVICE_A_MULTIPHOTON_DELTA: [f64; 2] = [15.2901, 15.2991];

pub fn tls_device_a_multiphoton(delta: f64, g_tls: f64) -> TlsParams {
    TlsParams {
        delta_tls: delta,
        g_tls,
        temperature: 0.0,
        photon_order: 1,
    }
}
