//! Physical constants, the atomic transition, and conversions between SI and
//! the internal recoil units.
//!
//! Internal units: length `1/k`, momentum `ħk`, energy `E_R = (ħk)²/2M`, time
//! `ħ/E_R`. In these units `ħ = k = 1` and the atomic mass is `1/2`, so the
//! kinetic energy of momentum `p` is simply `p·p`.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const HBAR: f64 = 1.054_571_817e-34;
pub const BOLTZMANN: f64 = 1.380_649e-23;
pub const ATOMIC_MASS_UNIT: f64 = 1.660_539_066_60e-27;

/// Atomic mass in internal units.
pub const MASS: f64 = 0.5;

/// A closed `Jg -> Je = Jg + 1` transition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    /// Twice the ground angular momentum.
    two_jg: u32,
    /// Wavelength in metres.
    pub wavelength: f64,
    /// Natural linewidth Γ in rad/s.
    pub linewidth: f64,
    /// Saturation irradiance in W/m².
    pub saturation_irradiance: f64,
    /// Atomic mass in kg.
    pub mass: f64,
}

impl Transition {
    pub fn new(
        jg: f64,
        je: f64,
        wavelength: f64,
        linewidth: f64,
        saturation_irradiance: f64,
        mass: f64,
    ) -> Result<Self> {
        let two_jg = 2.0 * jg;
        if !(two_jg >= 0.0) || two_jg.fract() != 0.0 || two_jg > 40.0 {
            return Err(Error::Transition(format!(
                "ground angular momentum {jg} is not a non-negative half-integer"
            )));
        }
        if je != jg + 1.0 {
            return Err(Error::Transition(format!(
                "excited angular momentum {je} must equal jg + 1 = {}",
                jg + 1.0
            )));
        }
        for (name, v) in [
            ("wavelength", wavelength),
            ("linewidth", linewidth),
            ("saturation irradiance", saturation_irradiance),
            ("mass", mass),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Transition(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        Ok(Transition {
            two_jg: two_jg as u32,
            wavelength,
            linewidth,
            saturation_irradiance,
            mass,
        })
    }

    /// ¹³³Cs D2 line, `Fg = 4 -> Fe = 5`.
    pub fn cesium_d2() -> Self {
        Transition {
            two_jg: 8,
            wavelength: 852.347e-9,
            linewidth: TAU * 5.2e6,
            saturation_irradiance: 11.0, // 1.1 mW/cm²
            mass: 132.905_451_961 * ATOMIC_MASS_UNIT,
        }
    }

    /// Same atom with a different ground angular momentum. Used for the
    /// smaller model transitions.
    pub fn with_jg(&self, jg: f64) -> Result<Self> {
        Transition::new(
            jg,
            jg + 1.0,
            self.wavelength,
            self.linewidth,
            self.saturation_irradiance,
            self.mass,
        )
    }

    pub fn two_jg(&self) -> u32 {
        self.two_jg
    }

    pub fn two_je(&self) -> u32 {
        self.two_jg + 2
    }

    pub fn jg(&self) -> f64 {
        self.two_jg as f64 / 2.0
    }

    pub fn je(&self) -> f64 {
        self.jg() + 1.0
    }

    /// Number of ground Zeeman sublevels.
    pub fn ground_dim(&self) -> usize {
        self.two_jg as usize + 1
    }

    /// Number of excited Zeeman sublevels.
    pub fn excited_dim(&self) -> usize {
        self.two_jg as usize + 3
    }

    pub fn wavenumber(&self) -> f64 {
        TAU / self.wavelength
    }

    /// `E_R = (ħk)²/2M` in joules.
    pub fn recoil_energy(&self) -> f64 {
        let p = HBAR * self.wavenumber();
        p * p / (2.0 * self.mass)
    }

    /// `E_R/ħ` in rad/s; the inverse of the internal time unit.
    pub fn recoil_frequency(&self) -> f64 {
        self.recoil_energy() / HBAR
    }

    /// `E_R/k_B` in kelvin.
    pub fn recoil_temperature(&self) -> f64 {
        self.recoil_energy() / BOLTZMANN
    }

    /// Linewidth in internal frequency units.
    pub fn linewidth_internal(&self) -> f64 {
        self.linewidth / self.recoil_frequency()
    }

    /// SI seconds per internal time unit.
    pub fn time_unit(&self) -> f64 {
        1.0 / self.recoil_frequency()
    }

    /// SI metres per internal length unit.
    pub fn length_unit(&self) -> f64 {
        1.0 / self.wavenumber()
    }

    /// SI m/s per internal momentum unit divided by the mass (`ħk/M`).
    pub fn velocity_unit(&self) -> f64 {
        HBAR * self.wavenumber() / self.mass
    }

    /// Kinetic temperature `M v²/k_B` in kelvin for a mean squared momentum
    /// given in `(ħk)²`.
    pub fn temperature_from_p2(&self, mean_p2: f64) -> f64 {
        2.0 * mean_p2 * self.recoil_temperature()
    }

    /// Inverse of [`Transition::temperature_from_p2`].
    pub fn p2_from_temperature(&self, temperature: f64) -> f64 {
        temperature / (2.0 * self.recoil_temperature())
    }

    /// Internal length expressed in wavelengths.
    pub fn length_over_lambda(&self, internal: f64) -> f64 {
        internal / TAU
    }

    /// Wavelengths expressed as an internal length.
    pub fn lambda_to_internal(&self, over_lambda: f64) -> f64 {
        over_lambda * 2.0 * PI
    }
}

impl Default for Transition {
    fn default() -> Self {
        Transition::cesium_d2()
    }
}
