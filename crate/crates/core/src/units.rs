//! Internal unit system and atomic species.
//!
//! Internally ħ = 1, lengths are in μm and times in μs. Energies, detunings,
//! Rabi frequencies and decay rates are therefore all in μs⁻¹, velocities in
//! μm/μs (1 μm/μs = 100 cm/s) and wavenumbers in μm⁻¹.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::scalar::Real;

/// Reduced Planck constant in J·s.
pub const HBAR_SI: f64 = 1.0546e-34;
/// Cesium atomic mass in kg.
pub const CESIUM_MASS_KG: f64 = 2.2069e-25;
/// Cs D2 line (S1/2 F=4 → P3/2 F=5) decay rate in s⁻¹.
pub const CESIUM_GAMMA_PER_S: f64 = 33.3e6;
/// Cs D2 line wavelength in nm.
pub const CESIUM_WAVELENGTH_NM: f64 = 852.0;

/// Conversions between experimentalist units and the internal ones.
pub mod si {
    use crate::scalar::Real;

    pub fn cm_per_s_to_internal<T: Real>(v: T) -> T {
        v / T::lit(100.0)
    }

    pub fn internal_to_cm_per_s<T: Real>(v: T) -> T {
        v * T::lit(100.0)
    }

    pub fn per_s_to_internal<T: Real>(rate: T) -> T {
        rate * T::lit(1e-6)
    }

    pub fn internal_to_per_s<T: Real>(rate: T) -> T {
        rate * T::lit(1e6)
    }

    pub fn nm_to_internal<T: Real>(length: T) -> T {
        length / T::lit(1000.0)
    }

    pub fn internal_to_nm<T: Real>(length: T) -> T {
        length * T::lit(1000.0)
    }

    /// m/ħ in μs·μm⁻² from a mass in kg (1 s/m² = 10⁻⁶ μs/μm²).
    pub fn mass_over_hbar_from_kg<T: Real>(mass_kg: f64) -> T {
        T::lit(mass_kg / super::HBAR_SI * 1e-6)
    }

    pub fn mass_kg_from_mass_over_hbar<T: Real>(mass_over_hbar: T) -> f64 {
        mass_over_hbar.to_f64_lossy() * 1e6 * super::HBAR_SI
    }
}

/// Atomic constants in internal units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomSpecies<T> {
    pub name: String,
    /// m/ħ in μs·μm⁻².
    pub mass_over_hbar: T,
    /// Decay rate of the excited level in μs⁻¹.
    pub gamma: T,
    /// Transition wavelength in μm.
    pub lambda_laser: T,
}

impl<T: Real> AtomSpecies<T> {
    pub fn new(
        name: impl Into<String>,
        mass_over_hbar: T,
        gamma: T,
        lambda_laser: T,
    ) -> Result<Self> {
        let species = Self {
            name: name.into(),
            mass_over_hbar,
            gamma,
            lambda_laser,
        };
        species.validate()?;
        Ok(species)
    }

    /// Cs, 852 nm line, γ = 33.3 × 10⁶ s⁻¹.
    pub fn cesium() -> Self {
        Self {
            name: "cesium".to_string(),
            mass_over_hbar: si::mass_over_hbar_from_kg(CESIUM_MASS_KG),
            gamma: si::per_s_to_internal(T::lit(CESIUM_GAMMA_PER_S)),
            lambda_laser: si::nm_to_internal(T::lit(CESIUM_WAVELENGTH_NM)),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |x: T| x.is_finite() && x > T::zero();
        if !ok(self.mass_over_hbar) {
            return Err(invalid("mass_over_hbar must be finite and positive"));
        }
        if !ok(self.gamma) {
            return Err(invalid("gamma must be finite and positive"));
        }
        if !ok(self.lambda_laser) {
            return Err(invalid("lambda_laser must be finite and positive"));
        }
        Ok(())
    }

    /// Laser wavenumber k_L = 2π/λ in μm⁻¹.
    pub fn laser_wavenumber(&self) -> T {
        T::TAU() / self.lambda_laser
    }

    /// Single-photon recoil velocity ħk_L/m in μm/μs.
    pub fn recoil_velocity(&self) -> T {
        self.laser_wavenumber() / self.mass_over_hbar
    }

    /// k = (m/ħ)·v. Rejects non-positive velocities.
    pub fn velocity_to_wavenumber(&self, v: T) -> Result<T> {
        if !(v > T::zero()) || !v.is_finite() {
            return Err(invalid(format!("velocity must be positive, got {v}")));
        }
        Ok(self.mass_over_hbar * v)
    }

    pub fn wavenumber_to_velocity(&self, k: T) -> Result<T> {
        if !(k > T::zero()) || !k.is_finite() {
            return Err(invalid(format!("wavenumber must be positive, got {k}")));
        }
        Ok(k / self.mass_over_hbar)
    }

    /// E(k) = k²/(2m/ħ), in μs⁻¹.
    pub fn kinetic_energy(&self, k: T) -> T {
        k * k / (T::lit(2.0) * self.mass_over_hbar)
    }
}

/// The Cs parameter set used throughout the examples.
pub fn cesium_default<T: Real>() -> AtomSpecies<T> {
    AtomSpecies::cesium()
}

pub fn recoil_velocity<T: Real>(species: &AtomSpecies<T>) -> T {
    species.recoil_velocity()
}
