//! The four-beam 3D lin⊥lin field and the operators built from it.
//!
//! Two beam pairs propagate at `±θ` to the `z` axis, one pair in the `xz`
//! plane polarized along `y`, the other in the `yz` plane polarized along `x`.
//! The polarization vector `ε(r)` is normalized so that `|ε|² = 1` at the
//! centre of a potential well, where the irradiance is `8·I_beam`; the
//! amplitude and laser frequency are carried by the Rabi frequency and the
//! detuning.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_4, PI};

use nalgebra::{DMatrix, Vector3};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::angular::{Cartesian, DipoleComponents, Polarization, Spherical};
use crate::error::{Error, Result};
use crate::units::Transition;

pub type C64 = Complex64;
pub type CVector3 = Vector3<C64>;

const ZERO: C64 = C64::new(0.0, 0.0);

/// Spherical components `ε_q = e_q*·ε` in the order `(−, 0, +)`, with
/// `e_± = (∓x − iy)/√2` and `e_0 = z`.
pub fn spherical_components(v: &CVector3) -> [C64; 3] {
    let i = C64::new(0.0, 1.0);
    let plus = (-v.x + i * v.y) * FRAC_1_SQRT_2;
    let minus = (v.x + i * v.y) * FRAC_1_SQRT_2;
    [minus, v.z, plus]
}

/// Circular basis vector `e_q`.
pub fn circular_basis(q: Spherical) -> CVector3 {
    let s = FRAC_1_SQRT_2;
    match q {
        Spherical::Plus => CVector3::new(C64::new(-s, 0.0), C64::new(0.0, -s), ZERO),
        Spherical::Minus => CVector3::new(C64::new(s, 0.0), C64::new(0.0, -s), ZERO),
        Spherical::Pi => CVector3::new(ZERO, ZERO, C64::new(1.0, 0.0)),
    }
}

/// Spherical components of a Cartesian unit vector, `e_q*·e_u`.
pub fn cartesian_in_spherical(u: Cartesian) -> [C64; 3] {
    let mut v = CVector3::zeros();
    v[u.index()] = C64::new(1.0, 0.0);
    spherical_components(&v)
}

/// One plane-wave beam, `amplitude · polarization · exp(i k̂·r)` with `r` in
/// units of `1/k`.
#[derive(Clone, Debug, PartialEq)]
pub struct PlaneWave {
    pub direction: Vector3<f64>,
    pub polarization: Vector3<f64>,
    pub amplitude: f64,
}

/// Lattice beam geometry and intensity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BeamConfig {
    /// Beam half-angle to the `z` axis, radians.
    pub theta: f64,
    /// Detuning from resonance in units of Γ (negative for red detuning).
    pub detuning: f64,
    /// Irradiance of a single beam, W/m².
    pub beam_irradiance: f64,
    pub transition: Transition,
}

impl BeamConfig {
    pub fn new(transition: Transition, detuning: f64, beam_irradiance: f64) -> Result<Self> {
        Self::with_angle(transition, FRAC_PI_4, detuning, beam_irradiance)
    }

    pub fn with_angle(
        transition: Transition,
        theta: f64,
        detuning: f64,
        beam_irradiance: f64,
    ) -> Result<Self> {
        if !(theta > 0.0 && theta < PI / 2.0) {
            return Err(Error::BeamConfig(format!(
                "half-angle {theta} must lie in (0, pi/2)"
            )));
        }
        if !detuning.is_finite() || detuning == 0.0 {
            return Err(Error::BeamConfig(format!(
                "detuning must be finite and nonzero, got {detuning}"
            )));
        }
        if !(beam_irradiance >= 0.0 && beam_irradiance.is_finite()) {
            return Err(Error::BeamConfig(format!(
                "beam irradiance must be non-negative, got {beam_irradiance}"
            )));
        }
        if detuning > 0.0 {
            log::warn!("blue detuning {detuning} Γ: the lattice does not Sisyphus-cool");
        }
        Ok(BeamConfig {
            theta,
            detuning,
            beam_irradiance,
            transition,
        })
    }

    /// Configuration whose diabatic modulation depth equals `depth` (in E_R)
    /// at the given detuning.
    pub fn for_depth(transition: Transition, detuning: f64, depth: f64) -> Result<Self> {
        if !(depth >= 0.0 && depth.is_finite()) {
            return Err(Error::BeamConfig(format!(
                "depth must be non-negative, got {depth}"
            )));
        }
        let probe = BeamConfig::new(transition, detuning, 0.0)?;
        let delta = probe.detuning_internal().abs();
        let contrast = stretched_contrast(probe.transition.two_jg());
        // U0 = |Δ|/2 ln(1 + c Ω²/(2Δ²)),  Ω²/(2Δ²) = (I/I0)/(4δ²)
        let ratio = (2.0 * depth / delta).exp_m1() / contrast;
        let total = ratio * 4.0 * detuning * detuning * probe.transition.saturation_irradiance;
        BeamConfig::new(probe.transition, detuning, total / 8.0)
    }

    /// Irradiance at a well centre, `8·I_beam`.
    pub fn total_irradiance(&self) -> f64 {
        8.0 * self.beam_irradiance
    }

    /// Squared Rabi frequency `Ω² = (Γ²/2)(I/I₀)` in (rad/s)².
    pub fn rabi_frequency_sq(&self) -> f64 {
        let g = self.transition.linewidth;
        0.5 * g * g * self.total_irradiance() / self.transition.saturation_irradiance
    }

    /// Detuning in internal frequency units.
    pub fn detuning_internal(&self) -> f64 {
        self.detuning * self.transition.linewidth_internal()
    }

    /// Saturation parameter `s₀ = (Ω²/2)/(Δ² + Γ²/4)`.
    pub fn saturation(&self) -> f64 {
        let g = self.transition.linewidth;
        let delta = self.detuning * g;
        0.5 * self.rabi_frequency_sq() / (delta * delta + 0.25 * g * g)
    }

    /// Total scattering rate `Γ' = Γ s₀/2` in internal units.
    pub fn scattering_rate(&self) -> f64 {
        0.5 * self.transition.linewidth_internal() * self.saturation()
    }

    /// `ħΔs₀/2` in E_R: multiplies the light-shift operator.
    pub fn light_shift_scale(&self) -> f64 {
        0.5 * self.detuning_internal() * self.saturation()
    }

    /// Diabatic modulation depth `U₀ = (ħ|Δ|/2) ln[1 + (44/45) Ω²/(2Δ²)]` in
    /// E_R. The 44/45 factor is the stretched-state contrast of `Fg = 4`; the
    /// general `Jg` value is used for other transitions.
    pub fn diabatic_depth(&self) -> f64 {
        let delta = self.detuning_internal().abs();
        let g = self.transition.linewidth;
        let omega_ratio = self.rabi_frequency_sq() / (2.0 * (self.detuning * g).powi(2));
        let contrast = stretched_contrast(self.transition.two_jg());
        0.5 * delta * (contrast * omega_ratio).ln_1p()
    }

    /// The four beams, all with zero phase at the origin.
    pub fn beams(&self) -> [PlaneWave; 4] {
        let (s, c) = self.theta.sin_cos();
        let a = 1.0 / 8f64.sqrt();
        let x = Vector3::x();
        let y = Vector3::y();
        [
            PlaneWave {
                direction: Vector3::new(s, 0.0, c),
                polarization: y,
                amplitude: a,
            },
            PlaneWave {
                direction: Vector3::new(-s, 0.0, c),
                polarization: y,
                amplitude: a,
            },
            PlaneWave {
                direction: Vector3::new(0.0, s, -c),
                polarization: x,
                amplitude: a,
            },
            PlaneWave {
                direction: Vector3::new(0.0, -s, -c),
                polarization: x,
                amplitude: a,
            },
        ]
    }

    /// A pure-σ⁺ well centre, internal units.
    pub fn sigma_plus_site(&self) -> Vector3<f64> {
        Vector3::new(0.0, 0.0, PI / (4.0 * self.theta.cos()))
    }

    /// A pure-σ⁻ well centre, internal units.
    pub fn sigma_minus_site(&self) -> Vector3<f64> {
        -self.sigma_plus_site()
    }
}

/// `|⟨jg jg;1 1|je je⟩|² − |⟨jg −jg;1 1|je −jg+1⟩|² = 1 − 2/((2jg+1)(2jg+2))`.
pub fn stretched_contrast(two_jg: u32) -> f64 {
    let n = two_jg as f64;
    1.0 - 2.0 / ((n + 1.0) * (n + 2.0))
}

/// Polarization vector and its first and second spatial derivatives at one
/// point (internal units).
#[derive(Clone, Debug)]
pub struct FieldSample {
    pub position: Vector3<f64>,
    pub epsilon: CVector3,
    /// `gradient[i] = ∂_i ε`.
    pub gradient: [CVector3; 3],
    /// `hessian[i][j] = ∂_i ∂_j ε`.
    pub hessian: [[CVector3; 3]; 3],
}

impl FieldSample {
    pub fn zero(position: Vector3<f64>) -> Self {
        FieldSample {
            position,
            epsilon: CVector3::zeros(),
            gradient: [CVector3::zeros(); 3],
            hessian: [[CVector3::zeros(); 3]; 3],
        }
    }

    pub fn intensity(&self) -> f64 {
        self.epsilon.iter().map(|c| c.norm_sqr()).sum()
    }
}

/// Evaluate the polarization field and its analytic derivatives at `r`.
pub fn field_polarization(config: &BeamConfig, r: &Vector3<f64>) -> FieldSample {
    field_from_beams(&config.beams(), r)
}

pub fn field_from_beams(beams: &[PlaneWave], r: &Vector3<f64>) -> FieldSample {
    let mut out = FieldSample::zero(*r);
    for b in beams {
        let phase = b.direction.dot(r);
        let wave = C64::from_polar(b.amplitude, phase);
        let e = b.polarization.map(|p| wave * p);
        out.epsilon += e;
        for i in 0..3 {
            let ki = b.direction[i];
            out.gradient[i] += e * C64::new(0.0, ki);
            for j in 0..3 {
                out.hessian[i][j] -= e * C64::new(ki * b.direction[j], 0.0);
            }
        }
    }
    out
}

/// Lattice constants `(a_z, a_xy)` in metres. Only `θ = π/4` is supported,
/// giving `a_z = λ/(2√2)` and `a_xy = λ/√2`.
pub fn lattice_constants(theta: f64, wavelength: f64) -> Result<(f64, f64)> {
    if (theta - FRAC_PI_4).abs() > 1e-12 {
        return Err(Error::UnsupportedAngle(theta));
    }
    let a_z = wavelength / (2.0 * 2f64.sqrt());
    let a_xy = wavelength / 2f64.sqrt();
    Ok((a_z, a_xy))
}

/// Dense `d⁺·v` for a complex 3-vector `v`.
pub fn raising_dot(dipoles: &DipoleComponents, v: &CVector3) -> DMatrix<C64> {
    let comps = spherical_components(v);
    let mut out = DMatrix::zeros(dipoles.excited_dim(), dipoles.ground_dim());
    for q in Spherical::ALL {
        if comps[q.index()] != ZERO {
            out += dipoles.raising(q) * comps[q.index()];
        }
    }
    out
}

/// Light-shift operator `Â = (d⁻·ε*)(d⁺·ε)` (dimensionless; multiply by
/// [`BeamConfig::light_shift_scale`] for energies).
pub fn light_shift_operator(sample: &FieldSample, dipoles: &DipoleComponents) -> DMatrix<C64> {
    let x = raising_dot(dipoles, &sample.epsilon);
    x.adjoint() * x
}

/// Analytic first derivatives `∂_i Â`.
pub fn light_shift_gradient(sample: &FieldSample, dipoles: &DipoleComponents) -> [DMatrix<C64>; 3] {
    let x = raising_dot(dipoles, &sample.epsilon);
    std::array::from_fn(|i| {
        let dx = raising_dot(dipoles, &sample.gradient[i]);
        let t = dx.adjoint() * &x;
        &t + t.adjoint()
    })
}

/// Analytic second derivatives `∂_i ∂_j Â`.
pub fn light_shift_hessian(
    sample: &FieldSample,
    dipoles: &DipoleComponents,
) -> [[DMatrix<C64>; 3]; 3] {
    let x = raising_dot(dipoles, &sample.epsilon);
    let dx: [DMatrix<C64>; 3] = std::array::from_fn(|i| raising_dot(dipoles, &sample.gradient[i]));
    std::array::from_fn(|i| {
        std::array::from_fn(|j| {
            let dxx = raising_dot(dipoles, &sample.hessian[i][j]);
            let t = dxx.adjoint() * &x + dx[i].adjoint() * &dx[j];
            &t + t.adjoint()
        })
    })
}

/// A pumping operator `B̂_q` and its analytic spatial derivatives.
#[derive(Clone, Debug)]
pub struct PumpingOperator {
    pub value: DMatrix<C64>,
    pub gradient: [DMatrix<C64>; 3],
    pub hessian: [[DMatrix<C64>; 3]; 3],
}

/// `d⁺·e_q` for a spherical or Cartesian label.
pub fn raising_along(dipoles: &DipoleComponents, pol: Polarization) -> DMatrix<C64> {
    match pol {
        Polarization::Spherical(q) => dipoles.raising(q).clone(),
        Polarization::Cartesian(u) => dipoles.raising_cartesian(u),
    }
}

/// `B̂_q = (d⁻·ε*)(d⁺·e_q)`. The basis vector `e_q` is constant, so all the
/// spatial dependence sits in the `ε*` factor.
pub fn b_operator(
    sample: &FieldSample,
    dipoles: &DipoleComponents,
    pol: Polarization,
) -> PumpingOperator {
    let dq = raising_along(dipoles, pol);
    let left = |v: &CVector3| raising_dot(dipoles, v).adjoint() * &dq;
    PumpingOperator {
        value: left(&sample.epsilon),
        gradient: std::array::from_fn(|i| left(&sample.gradient[i])),
        hessian: std::array::from_fn(|i| std::array::from_fn(|j| left(&sample.hessian[i][j]))),
    }
}
