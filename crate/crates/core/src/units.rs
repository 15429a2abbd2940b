//! Physical constants and unit helpers.

use std::f64::consts::PI;

pub const TWO_PI: f64 = 2.0 * PI;
/// Planck constant, J s.
pub const PLANCK: f64 = 6.626_070_15e-34;
/// Reduced Planck constant, J s.
pub const HBAR: f64 = PLANCK / TWO_PI;
/// Boltzmann constant, J/K.
pub const BOLTZMANN: f64 = 1.380_649e-23;

/// Linear frequency in GHz to angular frequency in rad/ns.
#[inline]
pub fn angular(f_ghz: f64) -> f64 {
    TWO_PI * f_ghz
}

/// Linear frequency in GHz to angular frequency in rad/s.
#[inline]
pub fn angular_si(f_ghz: f64) -> f64 {
    TWO_PI * f_ghz * 1e9
}

/// Dimensionless h f / (k_B T) for a frequency in GHz and a temperature in K.
pub fn reduced_energy(f_ghz: f64, temperature: f64) -> f64 {
    PLANCK * f_ghz * 1e9 / (BOLTZMANN * temperature)
}

/// Thermal excited-state population of a two-level system with splitting `f_ghz`.
/// Zero temperature gives exactly zero.
pub fn thermal_excited_population(f_ghz: f64, temperature: f64) -> f64 {
    if temperature <= 0.0 {
        return 0.0;
    }
    1.0 / (1.0 + reduced_energy(f_ghz, temperature).exp())
}

/// Decibel value of a power ratio.
pub fn to_db(ratio: f64) -> f64 {
    10.0 * ratio.log10()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn readout_photon_energy_at_30mk() {
        // 7.44 GHz photon against a 30 mK bath
        let x = reduced_energy(7.44, 0.030);
        assert!((x - 11.9).abs() < 0.05, "{x}");
    }

    #[test]
    fn thermal_population_limits() {
        assert_eq!(thermal_excited_population(0.4, 0.0), 0.0);
        let p = thermal_excited_population(1e-6, 10.0);
        assert!((p - 0.5).abs() < 1e-6);
    }
}
