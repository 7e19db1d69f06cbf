//! Quantum-jump interrupted Langevin dynamics for independent atoms and
//! steady-state temperature extraction.
//!
//! Each atom moves on its current adiabatic potential with a velocity-Verlet
//! step, then one uniform random number decides between a single optical
//! pumping jump and the no-jump branch. Momentum kicks are Gaussian with the
//! first two moments fixed by the drift and diffusion coefficients.
//!
//! A weak channel (small `γ_{n,m}`) would have to deliver its whole drift and
//! diffusion in rare, huge jumps. Each jump is therefore limited to a mean of
//! [`DEFAULT_JUMP_LIMIT`] and a spread of the same size along any direction;
//! what is cut off is applied continuously while the atom sits in the source
//! level, which keeps the total drift and diffusion per unit time unchanged.

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adiabatic::{
    continuation, diagonalize, AdiabaticFrame, Channels, CoefficientTable, Lattice,
};
use crate::error::{Error, Result};
use crate::units::MASS;
use crate::wells::{internal_lattice_constants, well_characterization};

/// Largest allowed probability of two or more jumps in one step.
pub const MULTI_JUMP_LIMIT: f64 = 0.005;
/// Target single-step jump probability bound, `γ_max·dt`.
pub const JUMP_FRACTION: f64 = 0.05;
/// Minimum number of steps per harmonic oscillation period.
pub const STEPS_PER_PERIOD: f64 = 40.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Dynamics {
    /// Jumps, radiation pressure and momentum diffusion.
    Full,
    /// Conservative motion on the current adiabatic potential only.
    Deterministic,
}

/// How the radiation-pressure drift of a jump channel enters.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JumpDrift {
    /// Mean kick `F_{n,m}/γ_{n,m}` per jump, the choice for which the jump
    /// channel reproduces the drift term of the Fokker-Planck equation.
    PerJump,
    /// `F_{n,m}·dt` per jump, read literally; vanishes as `dt → 0`.
    PerStep,
}

/// Ensemble simulation parameters. Durations are in units of `1/Γ'`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimParams {
    pub n_atoms: usize,
    pub equilibration: f64,
    pub averaging: f64,
    /// Initial temperature in kelvin.
    pub initial_temperature: f64,
    pub seed: u64,
    /// Phase-space snapshots taken evenly across the averaging window.
    pub snapshots: usize,
    /// Fixed time step in internal units; chosen automatically when `None`.
    pub timestep: Option<f64>,
    pub dynamics: Dynamics,
    pub jump_drift: JumpDrift,
    /// See [`KickModel::jump_limit`].
    pub jump_limit: Option<f64>,
}

impl Default for SimParams {
    fn default() -> Self {
        SimParams {
            n_atoms: 300,
            equilibration: 4000.0,
            averaging: 2000.0,
            initial_temperature: 3e-6,
            seed: 1,
            snapshots: 20,
            timestep: None,
            dynamics: Dynamics::Full,
            jump_drift: JumpDrift::PerJump,
            jump_limit: Some(DEFAULT_JUMP_LIMIT),
        }
    }
}

impl SimParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::SimParams(m));
        if self.n_atoms == 0 {
            return bad("at least one atom is required".into());
        }
        if !(self.equilibration >= 0.0 && self.equilibration.is_finite()) {
            return bad(format!(
                "equilibration time {} is invalid",
                self.equilibration
            ));
        }
        if !(self.averaging > 0.0 && self.averaging.is_finite()) {
            return bad(format!(
                "averaging time {} must be positive",
                self.averaging
            ));
        }
        if !(self.initial_temperature >= 0.0 && self.initial_temperature.is_finite()) {
            return bad(format!(
                "initial temperature {} is invalid",
                self.initial_temperature
            ));
        }
        if let Some(l) = self.jump_limit {
            if !(l > 0.0 && l.is_finite()) {
                return bad(format!("jump kick limit {l} must be positive"));
            }
        }
        if let Some(dt) = self.timestep {
            if !(dt > 0.0 && dt.is_finite()) {
                return bad(format!("time step {dt} must be positive"));
            }
        }
        Ok(())
    }
}

/// Phase-space state of one atom.
#[derive(Clone, Debug)]
pub struct AtomState {
    pub index: usize,
    pub position: Vector3<f64>,
    pub momentum: Vector3<f64>,
    /// Adiabatic level, `0` being the lowest potential.
    pub level: usize,
    pub rng: ChaCha8Rng,
}

/// Random stream of atom `index`: the master seed selects the key and the
/// atom index the stream, so atoms are independent of scheduling.
pub fn atom_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Uniform positions over one unit cell, Gaussian momenta at the initial
/// temperature, lowest adiabatic level.
pub fn initialize_ensemble(lattice: &Lattice, params: &SimParams) -> Vec<AtomState> {
    let (a_z, a_xy) = internal_lattice_constants(lattice.config.theta);
    let sigma_p = lattice
        .config
        .transition
        .p2_from_temperature(params.initial_temperature)
        .sqrt();
    (0..params.n_atoms)
        .map(|index| {
            let mut rng = atom_rng(params.seed, index);
            let position = Vector3::new(
                rng.random::<f64>() * a_xy,
                rng.random::<f64>() * a_xy,
                rng.random::<f64>() * 2.0 * a_z,
            );
            let momentum = Vector3::from_fn(|_, _| sigma_p * rng.sample::<f64, _>(StandardNormal));
            AtomState {
                index,
                position,
                momentum,
                level: 0,
                rng,
            }
        })
        .collect()
}

/// Pumping coefficients as seen by the stepper.
pub trait ChannelCoefficients {
    fn rates_from(&self, n: usize) -> Vec<f64>;
    fn force(&self, n: usize, m: usize) -> Vector3<f64>;
    fn diffusion(&self, n: usize, m: usize) -> Matrix3<f64>;
}

impl ChannelCoefficients for Channels<'_> {
    fn rates_from(&self, n: usize) -> Vec<f64> {
        Channels::rates_from(self, n)
    }
    fn force(&self, n: usize, m: usize) -> Vector3<f64> {
        Channels::force(self, n, m)
    }
    fn diffusion(&self, n: usize, m: usize) -> Matrix3<f64> {
        Channels::diffusion(self, n, m)
    }
}

impl ChannelCoefficients for CoefficientTable {
    fn rates_from(&self, n: usize) -> Vec<f64> {
        self.gamma.row(n).iter().copied().collect()
    }
    fn force(&self, n: usize, m: usize) -> Vector3<f64> {
        self.force[n][m]
    }
    fn diffusion(&self, n: usize, m: usize) -> Matrix3<f64> {
        self.diffusion[n][m]
    }
}

/// Gaussian vector with zero mean and covariance `cov` (symmetric PSD).
/// Always consumes exactly three normal variates.
pub fn gaussian_with_covariance<R: Rng>(cov: &Matrix3<f64>, rng: &mut R) -> Vector3<f64> {
    let z = Vector3::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
    if let Some(ch) = cov.cholesky() {
        return ch.l() * z;
    }
    let eig = cov.symmetric_eigen();
    let scaled = Vector3::from_fn(|i, _| eig.eigenvalues[i].max(0.0).sqrt() * z[i]);
    eig.eigenvectors * scaled
}

/// Result of the stochastic part of one step.
#[derive(Clone, Debug)]
pub struct Kick {
    pub momentum: Vector3<f64>,
    pub level: usize,
    pub jumped: bool,
    /// Poisson estimate of the probability of two or more jumps in the step.
    pub multi_jump_probability: f64,
}

/// How jump channels deliver their drift and diffusion.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KickModel {
    pub jump_drift: JumpDrift,
    /// Largest mean kick, and largest standard deviation along any direction,
    /// that one jump may carry (ħk). The remainder of the channel's drift and
    /// diffusion is applied continuously while the atom sits in the source
    /// level. `None` puts everything into the jump.
    pub jump_limit: Option<f64>,
}

impl Default for KickModel {
    fn default() -> Self {
        KickModel {
            jump_drift: JumpDrift::PerJump,
            jump_limit: Some(DEFAULT_JUMP_LIMIT),
        }
    }
}

/// One absorption along a beam plus one emission along an axis moves the
/// atom by at most 2ħk.
pub const DEFAULT_JUMP_LIMIT: f64 = 2.0;

/// Mean and covariance of the momentum carried by one jump of a channel with
/// rate `g`, drift `f` and diffusion `d`, plus the drift and diffusion rates
/// left over for continuous delivery.
pub fn jump_moments(
    g: f64,
    f: &Vector3<f64>,
    d: &Matrix3<f64>,
    dt: f64,
    model: &KickModel,
) -> (Vector3<f64>, Matrix3<f64>, Vector3<f64>, Matrix3<f64>) {
    let mean = match model.jump_drift {
        JumpDrift::PerJump => f / g,
        JumpDrift::PerStep => f * dt,
    };
    let cov = d * (2.0 / g);
    let Some(limit) = model.jump_limit else {
        return (mean, cov, Vector3::zeros(), Matrix3::zeros());
    };
    let norm = mean.norm();
    let (mean, drift_left) = if norm > limit && model.jump_drift == JumpDrift::PerJump {
        let capped = mean * (limit / norm);
        (capped, f - capped * g)
    } else {
        (mean, Vector3::zeros())
    };
    let cap = limit * limit;
    // the trace bounds the largest eigenvalue of a PSD matrix
    if cov.trace() <= cap {
        return (mean, cov, drift_left, Matrix3::zeros());
    }
    let eig = cov.symmetric_eigen();
    if eig.eigenvalues.max() <= cap {
        return (mean, cov, drift_left, Matrix3::zeros());
    }
    let v = &eig.eigenvectors;
    let kept = eig.eigenvalues.map(|l| l.clamp(0.0, cap));
    let left = eig.eigenvalues.map(|l| (l - cap).max(0.0) * g / 2.0);
    (
        mean,
        v * Matrix3::from_diagonal(&kept) * v.transpose(),
        drift_left,
        v * Matrix3::from_diagonal(&left) * v.transpose(),
    )
}

/// One uniform number decides between a jump to some `n ≠ level` (with
/// probability `γ_{level,n}·dt`) and no jump.
pub fn sample_kick<C: ChannelCoefficients, R: Rng>(
    coeffs: &C,
    level: usize,
    dt: f64,
    model: &KickModel,
    rng: &mut R,
) -> Kick {
    let rates = coeffs.rates_from(level);
    let total: f64 = rates
        .iter()
        .enumerate()
        .filter(|&(n, _)| n != level)
        .map(|(_, g)| g)
        .sum();
    let x = total * dt;
    let multi_jump_probability = -(-x).exp_m1() - x * (-x).exp();
    let r: f64 = rng.random();

    // continuous remainders need every channel; without a limit only the
    // selected one is evaluated
    let mut drift = Vector3::zeros();
    let mut diffusion = Matrix3::zeros();
    let mut chosen = None;
    let mut cumulative = 0.0;
    for (n, &g) in rates.iter().enumerate() {
        if n == level || g <= 0.0 {
            continue;
        }
        cumulative += g * dt;
        let hit = chosen.is_none() && r < cumulative;
        if !hit && model.jump_limit.is_none() {
            continue;
        }
        let (mean, cov, f_left, d_left) = jump_moments(
            g,
            &coeffs.force(level, n),
            &coeffs.diffusion(level, n),
            dt,
            model,
        );
        drift += f_left;
        diffusion += d_left;
        if hit {
            chosen = Some((n, mean, cov));
            if model.jump_limit.is_none() {
                break;
            }
        }
    }
    let continuous = diffusion * (2.0 * dt);
    let (momentum, new_level) = match chosen {
        Some((n, mean, cov)) => (mean + gaussian_with_covariance(&(cov + continuous), rng), n),
        None => {
            let cov = coeffs.diffusion(level, level) * (2.0 * dt) + continuous;
            (
                coeffs.force(level, level) * dt + gaussian_with_covariance(&cov, rng),
                level,
            )
        }
    };
    Kick {
        momentum: momentum + drift * dt,
        level: new_level,
        jumped: chosen.is_some(),
        multi_jump_probability,
    }
}

/// An atom together with the adiabatic frame at its position.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub atom: AtomState,
    pub frame: AdiabaticFrame,
    pub time: f64,
    pub jumps: u64,
}

impl Trajectory {
    pub fn new(lattice: &Lattice, atom: AtomState) -> Self {
        let frame = diagonalize(lattice, &atom.position);
        Trajectory {
            atom,
            frame,
            time: 0.0,
            jumps: 0,
        }
    }

    /// `P²/2M + U_m` in E_R.
    pub fn energy(&self) -> f64 {
        self.kinetic_energy() + self.frame.potentials[self.atom.level]
    }

    pub fn kinetic_energy(&self) -> f64 {
        self.atom.momentum.norm_squared() / (2.0 * MASS)
    }

    /// Modified energy `E + dt²/12·PᵀU''P/M² − dt²/24·|∇U|²/M` that velocity
    /// Verlet conserves to `O(dt⁴)` on a smooth potential. The plain energy
    /// only oscillates at `O(dt²)` around it.
    pub fn shadow_energy(&self, dt: f64) -> f64 {
        let m = self.atom.level;
        let p = &self.atom.momentum;
        let g = self.frame.gradient(m);
        let curvature = (p.transpose() * self.frame.hessian(m) * p)[0];
        self.energy() + dt * dt / 12.0 * curvature / (MASS * MASS)
            - dt * dt / 24.0 * g.norm_squared() / MASS
    }
}

/// Fixed-step integrator for one lattice.
#[derive(Clone, Debug)]
pub struct Integrator<'a> {
    pub lattice: &'a Lattice,
    pub dt: f64,
    pub dynamics: Dynamics,
    pub kicks: KickModel,
}

impl Integrator<'_> {
    /// Advance by one step. Returns the multiple-jump probability of the step.
    pub fn step(&self, t: &mut Trajectory) -> Result<f64> {
        let dt = self.dt;
        let atom = &mut t.atom;
        atom.momentum -= t.frame.gradient(atom.level) * (0.5 * dt);
        atom.position += atom.momentum * (dt / MASS);
        let next = diagonalize(self.lattice, &atom.position);
        atom.level = continuation(&t.frame, atom.level, &next);
        t.frame = next;
        atom.momentum -= t.frame.gradient(atom.level) * (0.5 * dt);

        let mut multi = 0.0;
        if self.dynamics == Dynamics::Full {
            let channels = Channels::new(self.lattice, &t.frame);
            let kick = sample_kick(&channels, atom.level, dt, &self.kicks, &mut atom.rng);
            atom.momentum += kick.momentum;
            atom.level = kick.level;
            t.jumps += kick.jumped as u64;
            multi = kick.multi_jump_probability;
        }
        t.time += dt;
        if !atom
            .momentum
            .iter()
            .chain(atom.position.iter())
            .all(|v| v.is_finite())
        {
            return Err(Error::Diverged {
                atom: atom.index,
                time: t.time,
                reason: "non-finite phase-space coordinates".to_string(),
            });
        }
        Ok(multi)
    }
}

/// Time-step choice and the quantities behind it (internal units).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Timestep {
    pub dt: f64,
    /// Largest total departure rate found over the sampled positions.
    pub gamma_max: f64,
    /// Shortest harmonic oscillation period of the lowest well.
    pub vibration_period: f64,
}

/// `dt = min(0.05/γ_max, T_vib/40)`, with `γ_max` the largest departure rate
/// out of any level at 100 random positions of a unit cell.
pub fn choose_timestep(lattice: &Lattice, seed: u64) -> Result<Timestep> {
    let (a_z, a_xy) = internal_lattice_constants(lattice.config.theta);
    let well = well_characterization(lattice, a_z / 40.0)?;
    let omega = well.frequencies.max();
    let vibration_period = if omega > 0.0 {
        std::f64::consts::TAU / omega
    } else {
        f64::INFINITY
    };
    // stream outside the range used by atoms
    let mut rng = atom_rng(seed, usize::MAX);
    let mut gamma_max: f64 = 0.0;
    for _ in 0..100 {
        let r = Vector3::new(
            rng.random::<f64>() * a_xy,
            rng.random::<f64>() * a_xy,
            rng.random::<f64>() * 2.0 * a_z,
        );
        let frame = diagonalize(lattice, &r);
        let ch = Channels::new(lattice, &frame);
        for n in 0..frame.dim() {
            let rates = ch.rates_from(n);
            let out: f64 = rates
                .iter()
                .enumerate()
                .filter(|&(m, _)| m != n)
                .map(|(_, g)| g)
                .sum();
            gamma_max = gamma_max.max(out);
        }
    }
    let mut dt = vibration_period / STEPS_PER_PERIOD;
    if gamma_max > 0.0 {
        dt = dt.min(JUMP_FRACTION / gamma_max);
    }
    if !dt.is_finite() {
        return Err(Error::SimParams(
            "no finite time step: the lattice has neither wells nor pumping".to_string(),
        ));
    }
    Ok(Timestep {
        dt,
        gamma_max,
        vibration_period,
    })
}

/// Phase-space coordinates of every atom at one instant.
#[derive(Clone, Debug, PartialEq)]
pub struct SnapshotSlice {
    /// Time since the start of the run, internal units.
    pub time: f64,
    pub atoms: Vec<AtomRow>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AtomRow {
    pub index: usize,
    pub position: Vector3<f64>,
    pub momentum: Vector3<f64>,
    pub level: usize,
}

/// Steady-state kinetic temperatures at one lattice depth.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TemperatureRecord {
    /// Diabatic modulation depth `U₀` in E_R.
    pub depth: f64,
    /// Detuning in units of Γ.
    pub detuning: f64,
    pub n_atoms: usize,
    /// Per-axis `M⟨v_i²⟩/k_B` in kelvin.
    pub temperature: [f64; 3],
    /// Standard errors from the inter-atom spread of time averages.
    pub temperature_err: [f64; 3],
    /// Per-axis mean kinetic energy divided by `U₀`.
    pub kinetic_over_depth: [f64; 3],
    pub jumps_per_atom: f64,
    /// Change of the mean kinetic energy between the two halves of the
    /// averaging window, in units of its standard error.
    pub drift_sigma: f64,
    pub equilibrated: bool,
    pub timestep: f64,
}

impl TemperatureRecord {
    /// Mean per-axis kinetic energy over `U₀`.
    pub fn mean_kinetic_over_depth(&self) -> f64 {
        self.kinetic_over_depth.iter().sum::<f64>() / 3.0
    }
}

/// Output of one ensemble run.
#[derive(Clone, Debug)]
pub struct EnsembleRun {
    pub record: TemperatureRecord,
    pub snapshots: Vec<SnapshotSlice>,
    pub timestep: Timestep,
}

struct AtomOutcome {
    /// Time-averaged `P_i²` over each half of the averaging window.
    halves: [[f64; 3]; 2],
    jumps: u64,
    rows: Vec<AtomRow>,
}

enum AtomResult {
    Done(AtomOutcome),
    Refine,
}

fn run_atom(
    integrator: &Integrator,
    atom: AtomState,
    n_equil: usize,
    n_avg: usize,
    snapshot_steps: &[usize],
) -> Result<AtomResult> {
    let mut t = Trajectory::new(integrator.lattice, atom);
    for _ in 0..n_equil {
        if integrator.step(&mut t)? > MULTI_JUMP_LIMIT {
            return Ok(AtomResult::Refine);
        }
    }
    let half = n_avg / 2;
    let mut sums = [[0.0; 3]; 2];
    let mut rows = Vec::with_capacity(snapshot_steps.len());
    let mut next_snapshot = snapshot_steps.iter().peekable();
    for k in 0..n_avg {
        if integrator.step(&mut t)? > MULTI_JUMP_LIMIT {
            return Ok(AtomResult::Refine);
        }
        let h = usize::from(k >= half);
        for i in 0..3 {
            sums[h][i] += t.atom.momentum[i] * t.atom.momentum[i];
        }
        if next_snapshot.peek() == Some(&&(k + 1)) {
            next_snapshot.next();
            rows.push(AtomRow {
                index: t.atom.index,
                position: t.atom.position,
                momentum: t.atom.momentum,
                level: t.atom.level,
            });
        }
    }
    let counts = [half as f64, (n_avg - half) as f64];
    let halves = [0, 1].map(|h| sums[h].map(|s| s / counts[h]));
    Ok(AtomResult::Done(AtomOutcome {
        halves,
        jumps: t.jumps,
        rows,
    }))
}

fn mean_and_error(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Build a worker pool with a fixed number of threads (`0` = rayon default).
pub fn worker_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::SimParams(format!("cannot build worker pool: {e}")))
}

/// Equilibrate, then average `P_i²` over the averaging window and all atoms.
/// Results do not depend on the pool size.
pub fn run_ensemble(
    lattice: &Lattice,
    params: &SimParams,
    pool: &rayon::ThreadPool,
) -> Result<EnsembleRun> {
    params.validate()?;
    let mut timestep = match params.timestep {
        Some(dt) => Timestep {
            dt,
            gamma_max: f64::NAN,
            vibration_period: f64::NAN,
        },
        None => choose_timestep(lattice, params.seed)?,
    };
    let rate = lattice.scattering_rate();
    if !(rate > 0.0) {
        return Err(Error::SimParams(
            "scattering rate is zero; durations in units of 1/Γ' are undefined".to_string(),
        ));
    }
    loop {
        let dt = timestep.dt;
        let n_equil = (params.equilibration / rate / dt).ceil() as usize;
        let n_avg = ((params.averaging / rate / dt).ceil() as usize).max(2);
        let snapshot_steps: Vec<usize> = (1..=params.snapshots)
            .map(|k| (k * n_avg / params.snapshots).max(1))
            .collect();
        let integrator = Integrator {
            lattice,
            dt,
            dynamics: params.dynamics,
            kicks: KickModel {
                jump_drift: params.jump_drift,
                jump_limit: params.jump_limit,
            },
        };
        log::info!(
            "U0 = {:.1} E_R, detuning {} Γ: dt = {dt:.3e}, {} + {} steps, {} atoms",
            lattice.config.diabatic_depth(),
            lattice.config.detuning,
            n_equil,
            n_avg,
            params.n_atoms
        );
        let atoms = initialize_ensemble(lattice, params);
        let results: Vec<Result<AtomResult>> = pool.install(|| {
            atoms
                .into_par_iter()
                .map(|a| run_atom(&integrator, a, n_equil, n_avg, &snapshot_steps))
                .collect()
        });
        let mut outcomes = Vec::with_capacity(results.len());
        let mut refine = false;
        for r in results {
            match r? {
                AtomResult::Done(o) => outcomes.push(o),
                AtomResult::Refine => refine = true,
            }
        }
        if refine {
            log::warn!("multiple-jump probability above {MULTI_JUMP_LIMIT}: halving dt");
            timestep.dt *= 0.5;
            continue;
        }
        let record = summarize(lattice, params, dt, &outcomes, n_avg);
        let snapshots = snapshot_steps
            .iter()
            .enumerate()
            .map(|(s, &k)| SnapshotSlice {
                time: (n_equil + k) as f64 * dt,
                atoms: outcomes.iter().map(|o| o.rows[s]).collect(),
            })
            .collect();
        return Ok(EnsembleRun {
            record,
            snapshots,
            timestep,
        });
    }
}

fn summarize(
    lattice: &Lattice,
    params: &SimParams,
    dt: f64,
    outcomes: &[AtomOutcome],
    n_avg: usize,
) -> TemperatureRecord {
    let transition = &lattice.config.transition;
    let depth = lattice.config.diabatic_depth();
    let half = n_avg / 2;
    let w = [
        half as f64 / n_avg as f64,
        (n_avg - half) as f64 / n_avg as f64,
    ];
    let mut temperature = [0.0; 3];
    let mut temperature_err = [0.0; 3];
    let mut kinetic_over_depth = [0.0; 3];
    for i in 0..3 {
        let per_atom: Vec<f64> = outcomes
            .iter()
            .map(|o| w[0] * o.halves[0][i] + w[1] * o.halves[1][i])
            .collect();
        let (p2, err) = mean_and_error(&per_atom);
        temperature[i] = transition.temperature_from_p2(p2);
        temperature_err[i] = transition.temperature_from_p2(err);
        kinetic_over_depth[i] = p2 / (2.0 * MASS) / depth;
    }
    let drift: Vec<f64> = outcomes
        .iter()
        .map(|o| (0..3).map(|i| o.halves[1][i] - o.halves[0][i]).sum::<f64>() / (2.0 * MASS))
        .collect();
    let (d, d_err) = mean_and_error(&drift);
    let drift_sigma = if d_err > 0.0 { d / d_err } else { 0.0 };
    let equilibrated = drift_sigma.abs() <= 2.0;
    if !equilibrated {
        log::warn!("U0 = {depth:.1} E_R: kinetic energy drifts by {drift_sigma:.2} sigma across the averaging window");
    }
    TemperatureRecord {
        depth,
        detuning: lattice.config.detuning,
        n_atoms: params.n_atoms,
        temperature,
        temperature_err,
        kinetic_over_depth,
        jumps_per_atom: outcomes.iter().map(|o| o.jumps as f64).sum::<f64>()
            / outcomes.len() as f64,
        drift_sigma,
        equilibrated,
        timestep: dt,
    }
}

/// Seed of the `k`-th record of a sweep derived from the master seed.
pub fn record_seed(seed: u64, k: usize) -> u64 {
    seed ^ (k as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Run every (detuning, depth) combination, detunings outermost.
pub fn sweep(
    transition: &crate::units::Transition,
    detunings: &[f64],
    depths: &[f64],
    params: &SimParams,
    pool: &rayon::ThreadPool,
) -> Result<Vec<EnsembleRun>> {
    if depths.len() < 3 {
        return Err(Error::SimParams(format!(
            "a sweep needs at least 3 depths per detuning, got {}",
            depths.len()
        )));
    }
    let mut runs = Vec::with_capacity(detunings.len() * depths.len());
    for &detuning in detunings {
        for &depth in depths {
            let lattice = Lattice::new(crate::field::BeamConfig::for_depth(
                transition.clone(),
                detuning,
                depth,
            )?)?;
            let p = SimParams {
                seed: record_seed(params.seed, runs.len()),
                ..params.clone()
            };
            runs.push(run_ensemble(&lattice, &p, pool)?);
        }
    }
    Ok(runs)
}
