//! Run configuration: a TOML file whose keys carry their units.
//!
//! ```toml
//! seed = 1
//! workers = 1
//!
//! [atom]
//! wavelength_nm = 852.347
//! linewidth_MHz = 5.2        # Γ/2π
//! saturation_mW_per_cm2 = 1.1
//! mass_amu = 132.905451961
//! jg = 4.0
//!
//! [lattice]
//! half_angle_deg = 45.0
//! detunings_Gamma = [-10.0]
//! depths_Er = [500.0, 1000.0, 1500.0, 2000.0, 2500.0, 3000.0]
//!
//! [simulation]
//! n_atoms = 300
//! equilibration_pumping_times = 4000.0   # units of 1/Γ'
//! averaging_pumping_times = 2000.0
//! initial_temperature_uK = 3.0
//! snapshots = 20
//!
//! [thermometry]
//! tau1_ms = 12.0
//! tau2_ms = 35.0
//! ```
//!
//! Unknown keys are rejected. The configuration hash covers everything that
//! can change results: it excludes the seed (recorded separately), the worker
//! count and the output directory.

use std::f64::consts::TAU;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::field::BeamConfig;
use crate::langevin::{Dynamics, JumpDrift, SimParams};
use crate::thermometry::{Binning, ImagingOptions};
use crate::units::{Transition, ATOMIC_MASS_UNIT};
use crate::wells::Plane;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Worker threads; `0` uses every available core.
    #[serde(default)]
    pub workers: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub atom: AtomSection,
    pub lattice: LatticeSection,
    #[serde(default)]
    pub simulation: SimulationSection,
    #[serde(default)]
    pub thermometry: ThermometrySection,
    #[serde(default)]
    pub scan: ScanSection,
}

fn default_seed() -> u64 {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
#[allow(non_snake_case)]
pub struct AtomSection {
    pub wavelength_nm: f64,
    /// `Γ/2π`.
    pub linewidth_MHz: f64,
    pub saturation_mW_per_cm2: f64,
    pub mass_amu: f64,
    pub jg: f64,
}

impl Default for AtomSection {
    fn default() -> Self {
        let cs = Transition::cesium_d2();
        AtomSection {
            wavelength_nm: 852.347,
            linewidth_MHz: 5.2,
            saturation_mW_per_cm2: 1.1,
            mass_amu: cs.mass / ATOMIC_MASS_UNIT,
            jg: cs.jg(),
        }
    }
}

impl AtomSection {
    pub fn transition(&self) -> Result<Transition> {
        Transition::new(
            self.jg,
            self.jg + 1.0,
            self.wavelength_nm * 1e-9,
            TAU * self.linewidth_MHz * 1e6,
            self.saturation_mW_per_cm2 * 10.0,
            self.mass_amu * ATOMIC_MASS_UNIT,
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(non_snake_case)]
pub struct LatticeSection {
    #[serde(default = "default_half_angle")]
    pub half_angle_deg: f64,
    pub detunings_Gamma: Vec<f64>,
    pub depths_Er: Vec<f64>,
}

fn default_half_angle() -> f64 {
    45.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
#[allow(non_snake_case)]
pub struct SimulationSection {
    pub n_atoms: usize,
    /// Equilibration time in units of `1/Γ'`.
    pub equilibration_pumping_times: f64,
    /// Averaging time in units of `1/Γ'`.
    pub averaging_pumping_times: f64,
    pub initial_temperature_uK: f64,
    pub snapshots: usize,
    /// Fixed step in `ħ/E_R`; chosen automatically when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestep_recoil_times: Option<f64>,
    pub dynamics: Dynamics,
    pub jump_drift: JumpDrift,
    /// Largest kick a single jump carries, in ħk; `0` removes the limit.
    pub jump_limit_hbar_k: f64,
    /// Write one snapshot file per record.
    pub write_snapshots: bool,
}

impl Default for SimulationSection {
    fn default() -> Self {
        let p = SimParams::default();
        SimulationSection {
            n_atoms: p.n_atoms,
            equilibration_pumping_times: p.equilibration,
            averaging_pumping_times: p.averaging,
            initial_temperature_uK: p.initial_temperature * 1e6,
            snapshots: p.snapshots,
            timestep_recoil_times: p.timestep,
            dynamics: p.dynamics,
            jump_drift: p.jump_drift,
            jump_limit_hbar_k: p.jump_limit.unwrap_or(0.0),
            write_snapshots: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThermometrySection {
    pub tau1_ms: f64,
    pub tau2_ms: f64,
    pub gravity: bool,
    pub bins: usize,
    /// Half-width of the automatic field of view in sample standard
    /// deviations.
    pub span_sigma: f64,
}

impl Default for ThermometrySection {
    fn default() -> Self {
        let o = ImagingOptions::default();
        ThermometrySection {
            tau1_ms: o.tau1 * 1e3,
            tau2_ms: o.tau2 * 1e3,
            gravity: o.gravity,
            bins: o.binning.bins,
            span_sigma: o.binning.span,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanSection {
    /// `xy`, `xz` or `yz`.
    pub plane: String,
    /// Grid points per `a_z`.
    pub points_per_az: usize,
    /// Write every adiabatic level instead of the lowest only.
    pub all_levels: bool,
}

impl Default for ScanSection {
    fn default() -> Self {
        ScanSection {
            plane: "xz".to_string(),
            points_per_az: 64,
            all_levels: false,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<RunConfig> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        RunConfig::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Check every derived object can be built.
    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| Err(Error::Config(m));
        if i64::try_from(self.seed).is_err() {
            return cfg(format!("seed {} does not fit a TOML integer", self.seed));
        }
        let transition = self
            .atom
            .transition()
            .map_err(|e| Error::Config(e.to_string()))?;
        crate::field::lattice_constants(
            self.lattice.half_angle_deg.to_radians(),
            transition.wavelength,
        )
        .map_err(|e| Error::Config(e.to_string()))?;
        if self.lattice.detunings_Gamma.is_empty() || self.lattice.depths_Er.is_empty() {
            return cfg("at least one detuning and one depth are required".into());
        }
        for &d in &self.lattice.detunings_Gamma {
            for &u in &self.lattice.depths_Er {
                self.beam(&transition, d, u)
                    .map_err(|e| Error::Config(e.to_string()))?;
            }
        }
        self.sim_params()
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        let t = &self.thermometry;
        if !(t.tau2_ms > t.tau1_ms && t.tau1_ms >= 0.0) {
            return cfg(format!(
                "expansion times must satisfy tau2 > tau1 >= 0, got {} and {} ms",
                t.tau1_ms, t.tau2_ms
            ));
        }
        if t.bins < 8 || !(t.span_sigma > 0.0) {
            return cfg("thermometry needs at least 8 bins and a positive span".into());
        }
        self.scan.plane.parse::<Plane>()?;
        if self.scan.points_per_az < 2 {
            return cfg("scan needs at least 2 points per a_z".into());
        }
        Ok(())
    }

    pub fn transition(&self) -> Result<Transition> {
        self.atom.transition()
    }

    pub fn beam(&self, transition: &Transition, detuning: f64, depth: f64) -> Result<BeamConfig> {
        let theta = self.lattice.half_angle_deg.to_radians();
        let probe = BeamConfig::for_depth(transition.clone(), detuning, depth)?;
        BeamConfig::with_angle(transition.clone(), theta, detuning, probe.beam_irradiance)
    }

    pub fn sim_params(&self) -> SimParams {
        let s = &self.simulation;
        SimParams {
            n_atoms: s.n_atoms,
            equilibration: s.equilibration_pumping_times,
            averaging: s.averaging_pumping_times,
            initial_temperature: s.initial_temperature_uK * 1e-6,
            seed: self.seed,
            snapshots: s.snapshots,
            timestep: s.timestep_recoil_times,
            dynamics: s.dynamics,
            jump_drift: s.jump_drift,
            jump_limit: (s.jump_limit_hbar_k != 0.0).then_some(s.jump_limit_hbar_k),
        }
    }

    pub fn imaging(&self) -> ImagingOptions {
        let t = &self.thermometry;
        ImagingOptions {
            tau1: t.tau1_ms * 1e-3,
            tau2: t.tau2_ms * 1e-3,
            gravity: t.gravity,
            binning: Binning {
                bins: t.bins,
                span: t.span_sigma,
                field_of_view: None,
            },
        }
    }

    /// SHA-256 of the canonical serialization with seed, workers and output
    /// directory removed.
    pub fn hash(&self) -> String {
        let canonical = RunConfig {
            seed: 0,
            workers: 0,
            output_dir: None,
            ..self.clone()
        };
        let digest = Sha256::digest(canonical.to_toml().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
