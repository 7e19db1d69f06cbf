//! Adiabatic potentials and states of the light-shift operator, and the
//! optical-pumping coefficients expressed in that basis.
//!
//! All quantities are in internal units (see [`crate::units`]). Every
//! coefficient is built from inner products of the excited-state vectors
//! `X|Φ_n⟩`, `∂_i X|Φ_n⟩`, `∂_i∂_j X|Φ_n⟩` (with `X = d⁺·ε`) against
//! `d⁺_q|Φ_m⟩`, so the pumping operators never have to be formed densely in
//! the integrator.

use std::cell::OnceCell;
use std::sync::Arc;

use nalgebra::{DMatrix, Matrix3, Vector3};
use num_complex::Complex64;

use crate::angular::{Cartesian, DipoleComponents, Spherical};
use crate::eigen::hermitian_eigen;
use crate::error::Result;
use crate::field::{
    cartesian_in_spherical, field_polarization, spherical_components, BeamConfig, FieldSample,
};

type C64 = Complex64;
const ZERO: C64 = C64::new(0.0, 0.0);

/// Relative gap below which two adiabatic levels are reported as degenerate.
pub const DEGENERACY_GAP: f64 = 1e-8;

/// Second-derivative index pairs `(i, j)` with `i <= j`.
const PAIRS: [(usize, usize); 6] = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)];

fn pair_index(i: usize, j: usize) -> usize {
    let (a, b) = if i <= j { (i, j) } else { (j, i) };
    PAIRS.iter().position(|&p| p == (a, b)).unwrap()
}

type CgTable = [Vec<f64>; 3];

/// `out = (Σ_q a_q d⁺_q) φ` for spherical amplitudes `a`.
fn apply_raising(cg: &CgTable, amps: &[C64; 3], phi: &[C64], out: &mut [C64]) {
    out.iter_mut().for_each(|o| *o = ZERO);
    for (qi, a) in amps.iter().enumerate() {
        if *a == ZERO {
            continue;
        }
        for (ig, (&c, &p)) in cg[qi].iter().zip(phi).enumerate() {
            out[ig + qi] += a * c * p;
        }
    }
}

/// `(u)† (d⁺_q φ)` for an excited vector `u`.
fn project(cg: &CgTable, q: usize, u: &[C64], phi: &[C64]) -> C64 {
    let mut acc = ZERO;
    for (ig, (&c, &p)) in cg[q].iter().zip(phi).enumerate() {
        acc += u[ig + q].conj() * p * c;
    }
    acc
}

/// Beam configuration together with the dipole tables and derived scalars.
#[derive(Clone, Debug)]
pub struct Lattice {
    pub config: BeamConfig,
    pub dipoles: DipoleComponents,
    /// `cg[q][ig]`: the single nonzero entry of column `ig` of `d⁺_q`, which
    /// sits in excited row `ig + 1 + q`.
    cg: Arc<CgTable>,
    /// `ħΔs₀/2` in E_R.
    light_shift_scale: f64,
    /// `Γ'` in internal units.
    scattering_rate: f64,
}

impl Lattice {
    pub fn new(config: BeamConfig) -> Result<Self> {
        let dipoles = DipoleComponents::new(&config.transition)?;
        let ng = dipoles.ground_dim();
        let cg = Arc::new(std::array::from_fn(|qi| {
            let d = dipoles.raising(Spherical::ALL[qi]);
            (0..ng).map(|ig| d[(ig + qi, ig)].re).collect()
        }));
        Ok(Lattice {
            light_shift_scale: config.light_shift_scale(),
            scattering_rate: config.scattering_rate(),
            config,
            dipoles,
            cg,
        })
    }

    pub fn dim(&self) -> usize {
        self.dipoles.ground_dim()
    }

    pub fn excited_dim(&self) -> usize {
        self.dipoles.excited_dim()
    }

    pub fn light_shift_scale(&self) -> f64 {
        self.light_shift_scale
    }

    pub fn scattering_rate(&self) -> f64 {
        self.scattering_rate
    }

    pub fn sample(&self, r: &Vector3<f64>) -> FieldSample {
        field_polarization(&self.config, r)
    }

    /// Dimensionless light-shift operator `Â` at a field sample, built from
    /// the banded structure of `d⁺·ε`.
    pub fn light_shift_matrix(&self, sample: &FieldSample) -> DMatrix<C64> {
        let amps = spherical_components(&sample.epsilon);
        let n = self.dim();
        let mut a = DMatrix::zeros(n, n);
        for (qi, aq) in amps.iter().enumerate() {
            for ig in 0..n {
                let left = aq * self.cg[qi][ig];
                if left == ZERO {
                    continue;
                }
                let ie = ig + qi;
                for (qj, ap) in amps.iter().enumerate() {
                    // column ig2 with excited row ie = ig2 + qj
                    if ie < qj || ie - qj >= n {
                        continue;
                    }
                    let ig2 = ie - qj;
                    a[(ig, ig2)] += left.conj() * ap * self.cg[qj][ig2];
                }
            }
        }
        a
    }
}

/// Eigen-decomposition of the light-shift operator at one position.
///
/// Potential gradients and the excited-state vectors behind the coefficients
/// are computed on first use for each state, so a trajectory that only needs
/// its current state pays for one state rather than all of them.
#[derive(Clone, Debug)]
pub struct AdiabaticFrame {
    pub position: Vector3<f64>,
    /// Adiabatic potentials `U_m` in E_R, ascending.
    pub potentials: Vec<f64>,
    /// Orthonormal states `|Φ_m⟩` as columns, in the order of `potentials`.
    pub states: DMatrix<C64>,
    /// Pairs `(m, m+1)` whose gap is below [`DEGENERACY_GAP`] of the spectral
    /// range.
    pub near_degenerate: Vec<(usize, usize)>,
    pub sample: FieldSample,
    scale: f64,
    cg: Arc<CgTable>,
    /// Spherical components of ε, ∂_iε and ∂_i∂_jε (pairs in `PAIRS` order).
    amps: [[C64; 3]; 10],
    /// Per-state excited vectors `X|Φ_m⟩`, `∂_i X|Φ_m⟩`, `∂_i∂_j X|Φ_m⟩`.
    source: Vec<OnceCell<SourceVectors>>,
}

#[derive(Clone, Debug)]
struct SourceVectors {
    value: Vec<C64>,
    gradient: [Vec<C64>; 3],
    hessian: [Vec<C64>; 6],
}

fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

impl AdiabaticFrame {
    pub fn dim(&self) -> usize {
        self.potentials.len()
    }

    pub fn state(&self, m: usize) -> &[C64] {
        let n = self.dim();
        &self.states.as_slice()[m * n..(m + 1) * n]
    }

    fn source(&self, k: usize) -> &SourceVectors {
        self.source[k].get_or_init(|| {
            let n = self.dim();
            let ne = self.cg[0].len() + 2;
            let phi = &self.states.as_slice()[k * n..(k + 1) * n];
            let build = |a: &[C64; 3]| {
                let mut w = vec![ZERO; ne];
                apply_raising(&self.cg, a, phi, &mut w);
                w
            };
            SourceVectors {
                value: build(&self.amps[0]),
                gradient: std::array::from_fn(|i| build(&self.amps[1 + i])),
                hessian: std::array::from_fn(|p| build(&self.amps[4 + p])),
            }
        })
    }

    /// `∇U_m` in E_R per `1/k`, from the Hellmann-Feynman form
    /// `∂_iU = s⟨Φ|∂_iÂ|Φ⟩ = 2s Re[(XΦ)†(∂_iXΦ)]`.
    pub fn gradient(&self, m: usize) -> Vector3<f64> {
        let src = self.source(m);
        Vector3::from_fn(|i, _| 2.0 * self.scale * dot(&src.value, &src.gradient[i]).re)
    }

    /// Index of the lowest adiabatic potential.
    pub fn lowest(&self) -> usize {
        0
    }

    /// `⟨Φ_m|Â|Φ_m⟩` (dimensionless).
    pub fn light_shift_expectation(&self, m: usize) -> f64 {
        let v = &self.source(m).value;
        dot(v, v).re
    }

    /// Analytic Hessian `∂_i∂_j U_m` from second-order perturbation theory.
    /// Meaningful only where level `m` is nondegenerate.
    pub fn hessian(&self, m: usize) -> Matrix3<f64> {
        let s = self.scale;
        let src: Vec<&SourceVectors> = (0..self.dim()).map(|k| self.source(k)).collect();
        let a_m = self.potentials[m] / s;
        // ⟨k|∂_iÂ|m⟩ = (XΦ_k)†(∂_iXΦ_m) + (∂_iXΦ_k)†(XΦ_m)
        let coupling = |k: usize, i: usize| {
            dot(&src[k].value, &src[m].gradient[i]) + dot(&src[k].gradient[i], &src[m].value)
        };
        let mut h = Matrix3::zeros();
        for i in 0..3 {
            for j in i..3 {
                let p = pair_index(i, j);
                let direct = 2.0
                    * (dot(&src[m].hessian[p], &src[m].value)
                        + dot(&src[m].gradient[i], &src[m].gradient[j]))
                    .re;
                let mut second = 0.0;
                for k in 0..self.dim() {
                    if k == m {
                        continue;
                    }
                    let a_k = self.potentials[k] / s;
                    let gap = a_m - a_k;
                    if gap.abs() < 1e-14 {
                        continue;
                    }
                    second += 2.0 * (coupling(k, i).conj() * coupling(k, j)).re / gap;
                }
                h[(i, j)] = s * (direct + second);
                h[(j, i)] = h[(i, j)];
            }
        }
        h
    }
}

/// Diagonalize `ħ(Δs₀/2)Â` at `r`.
pub fn diagonalize(lattice: &Lattice, r: &Vector3<f64>) -> AdiabaticFrame {
    diagonalize_sample(lattice, lattice.sample(r))
}

pub fn diagonalize_sample(lattice: &Lattice, sample: FieldSample) -> AdiabaticFrame {
    let n = lattice.dim();
    let scale = lattice.light_shift_scale();
    let a = lattice.light_shift_matrix(&sample);
    let eig = hermitian_eigen(&a);
    // ascending in U = scale·a
    let order: Vec<usize> = if scale < 0.0 {
        (0..n).rev().collect()
    } else {
        (0..n).collect()
    };
    let potentials: Vec<f64> = order.iter().map(|&k| scale * eig.values[k]).collect();
    let states = DMatrix::from_fn(n, n, |i, k| eig.vectors[(i, order[k])]);
    AdiabaticFrame::from_eigenpairs(lattice, sample, potentials, states)
}

impl AdiabaticFrame {
    /// Assemble a frame from already-known eigenpairs (potentials ascending).
    /// Used to rebuild a frame after rephasing or reordering its states.
    pub fn from_eigenpairs(
        lattice: &Lattice,
        sample: FieldSample,
        potentials: Vec<f64>,
        states: DMatrix<C64>,
    ) -> AdiabaticFrame {
        let n = lattice.dim();
        let mut amps = [[ZERO; 3]; 10];
        amps[0] = spherical_components(&sample.epsilon);
        for i in 0..3 {
            amps[1 + i] = spherical_components(&sample.gradient[i]);
        }
        for (p, &(i, j)) in PAIRS.iter().enumerate() {
            amps[4 + p] = spherical_components(&sample.hessian[i][j]);
        }

        let range = potentials[n - 1] - potentials[0];
        let near_degenerate = (0..n.saturating_sub(1))
            .filter(|&m| potentials[m + 1] - potentials[m] <= DEGENERACY_GAP * range)
            .map(|m| (m, m + 1))
            .collect();

        AdiabaticFrame {
            position: sample.position,
            potentials,
            states,
            near_degenerate,
            sample,
            scale: lattice.light_shift_scale(),
            cg: Arc::clone(&lattice.cg),
            amps,
            source: vec![OnceCell::new(); n],
        }
    }
}

/// Which optical-pumping channel coefficients to evaluate for.
///
/// Channel `(n, m)` is the transition from `|Φ_n⟩` to `|Φ_m⟩`; `n == m` is
/// the cycle that leaves the adiabatic state unchanged.
pub struct Channels<'a> {
    lattice: &'a Lattice,
    frame: &'a AdiabaticFrame,
    cart: [[C64; 3]; 3],
}

impl<'a> Channels<'a> {
    pub fn new(lattice: &'a Lattice, frame: &'a AdiabaticFrame) -> Self {
        Channels {
            lattice,
            frame,
            cart: std::array::from_fn(|u| cartesian_in_spherical(Cartesian::ALL[u])),
        }
    }

    /// `⟨Φ_n|B̂_q|Φ_m⟩` for q = −, 0, +.
    fn amplitudes(&self, n: usize, m: usize) -> [C64; 3] {
        let w = &self.frame.source(n).value;
        let phi = self.frame.state(m);
        std::array::from_fn(|q| project(&self.lattice.cg, q, w, phi))
    }

    /// `γ_{n,m} = Γ' Σ_q |⟨Φ_n|B̂_q|Φ_m⟩|²`.
    pub fn rate(&self, n: usize, m: usize) -> f64 {
        let amp = self.amplitudes(n, m);
        self.lattice.scattering_rate() * amp.iter().map(|a| a.norm_sqr()).sum::<f64>()
    }

    /// Rates out of `n` into every state (the `n → n` entry included).
    pub fn rates_from(&self, n: usize) -> Vec<f64> {
        (0..self.frame.dim()).map(|m| self.rate(n, m)).collect()
    }

    /// `F_{n,m}^i = −ħΓ' Im Σ_q ⟨Φ_m|∂_iB̂_q†|Φ_n⟩⟨Φ_n|B̂_q|Φ_m⟩`.
    pub fn force(&self, n: usize, m: usize) -> Vector3<f64> {
        let amp = self.amplitudes(n, m);
        let phi = self.frame.state(m);
        let src = self.frame.source(n);
        let g = self.lattice.scattering_rate();
        Vector3::from_fn(|i, _| {
            let mut acc = ZERO;
            for q in 0..3 {
                // ⟨Φ_m|d_q† ∂_iX|Φ_n⟩ = conj((∂_iXΦ_n)† d_qΦ_m)
                let db = project(&self.lattice.cg, q, &src.gradient[i], phi).conj();
                acc += db * amp[q];
            }
            -g * acc.im
        })
    }

    /// Raw (unsymmetrized, unclipped) momentum diffusion matrix `D_{n,m}`,
    /// split into its three terms: dipole-force fluctuations (diagonal
    /// channels only), spontaneous-emission recoil along the coordinate axes,
    /// and the absorption term.
    pub fn diffusion_terms(&self, n: usize, m: usize) -> [Matrix3<f64>; 3] {
        let g = self.lattice.scattering_rate();
        let phi = self.frame.state(m);
        let src = self.frame.source(n);
        let amp = self.amplitudes(n, m);

        let mut dipole = Matrix3::zeros();
        if n == m {
            for i in 0..3 {
                for j in 0..3 {
                    let p = pair_index(i, j);
                    let d2a = 2.0
                        * (dot(&src.hessian[p], &src.value)
                            + dot(&src.gradient[i], &src.gradient[j]))
                        .re;
                    dipole[(i, j)] = g / 8.0 * d2a;
                }
            }
        }

        // |⟨Φ_n|B̂_u|Φ_m⟩|² for u = x, y, z
        let cart_sq: [f64; 3] = std::array::from_fn(|u| {
            let c = &self.cart[u];
            (c[0] * amp[0] + c[1] * amp[1] + c[2] * amp[2]).norm_sqr()
        });
        let mut recoil = Matrix3::zeros();
        for i in 0..3 {
            let s: f64 = (0..3).filter(|&u| u != i).map(|u| cart_sq[u]).sum();
            recoil[(i, i)] = g / 4.0 * s;
        }

        let db: [[C64; 3]; 3] = std::array::from_fn(|i| {
            std::array::from_fn(|q| project(&self.lattice.cg, q, &src.gradient[i], phi))
        });
        let d2b: [[C64; 3]; 6] = std::array::from_fn(|p| {
            std::array::from_fn(|q| project(&self.lattice.cg, q, &src.hessian[p], phi))
        });
        let mut absorption = Matrix3::zeros();
        for i in 0..3 {
            for j in 0..3 {
                let p = pair_index(i, j);
                let mut acc = ZERO;
                for q in 0..3 {
                    // ⟨Φ_m|∂²B_q†|Φ_n⟩⟨Φ_n|B_q|Φ_m⟩ − ⟨Φ_m|∂_iB_q†|Φ_n⟩⟨Φ_n|∂_jB_q|Φ_m⟩
                    acc += d2b[p][q].conj() * amp[q] - db[i][q].conj() * db[j][q];
                }
                absorption[(i, j)] = -g / 8.0 * 2.0 * acc.re;
            }
        }
        [dipole, recoil, absorption]
    }

    /// Symmetrized, PSD-clipped `D_{n,m}`.
    pub fn diffusion(&self, n: usize, m: usize) -> Matrix3<f64> {
        let [a, b, c] = self.diffusion_terms(n, m);
        clip_psd(&(a + b + c)).0
    }
}

/// Symmetrize and clip negative eigenvalues to zero. Returns the clipped
/// matrix and the most negative eigenvalue before clipping (0 if none).
pub fn clip_psd(m: &Matrix3<f64>) -> (Matrix3<f64>, f64) {
    let sym = (m + m.transpose()) * 0.5;
    if sym.cholesky().is_some() {
        return (sym, 0.0);
    }
    let eig = sym.symmetric_eigen();
    let min = eig.eigenvalues.min();
    if min >= 0.0 {
        return (sym, 0.0);
    }
    let norm = eig.eigenvalues.abs().max();
    if min < -1e-9 * norm {
        log::debug!("diffusion matrix clipped: eigenvalue {min:.3e} against norm {norm:.3e}");
    }
    let clipped = eig.eigenvalues.map(|l| l.max(0.0));
    (
        eig.eigenvectors * Matrix3::from_diagonal(&clipped) * eig.eigenvectors.transpose(),
        min,
    )
}

/// Full coefficient tables over all channel pairs.
#[derive(Clone, Debug)]
pub struct CoefficientTable {
    /// `gamma[(n, m)]` in internal rate units.
    pub gamma: DMatrix<f64>,
    /// `force[n][m]` in ħk per internal time.
    pub force: Vec<Vec<Vector3<f64>>>,
    /// `diffusion[n][m]` in (ħk)² per internal time, symmetrized and clipped.
    pub diffusion: Vec<Vec<Matrix3<f64>>>,
    /// Most negative pre-clip diffusion eigenvalue relative to the matrix
    /// norm, over all channels.
    pub worst_clip: f64,
}

pub fn pumping_rates(frame: &AdiabaticFrame, lattice: &Lattice) -> DMatrix<f64> {
    let ch = Channels::new(lattice, frame);
    let n = frame.dim();
    DMatrix::from_fn(n, n, |a, b| ch.rate(a, b))
}

pub fn radiation_pressure(frame: &AdiabaticFrame, lattice: &Lattice) -> Vec<Vec<Vector3<f64>>> {
    let ch = Channels::new(lattice, frame);
    let n = frame.dim();
    (0..n)
        .map(|a| (0..n).map(|b| ch.force(a, b)).collect())
        .collect()
}

/// Momentum diffusion tables and the worst relative pre-clip eigenvalue.
pub fn diffusion_matrix(
    frame: &AdiabaticFrame,
    lattice: &Lattice,
) -> (Vec<Vec<Matrix3<f64>>>, f64) {
    let ch = Channels::new(lattice, frame);
    let n = frame.dim();
    let mut worst: f64 = 0.0;
    let table = (0..n)
        .map(|a| {
            (0..n)
                .map(|b| {
                    let [t1, t2, t3] = ch.diffusion_terms(a, b);
                    let raw = t1 + t2 + t3;
                    let (clipped, min) = clip_psd(&raw);
                    let norm = raw.norm();
                    if min < 0.0 && norm > 0.0 {
                        worst = worst.min(min / norm);
                    }
                    clipped
                })
                .collect()
        })
        .collect();
    if worst < -1e-9 {
        log::info!("diffusion tables needed PSD clipping (worst relative eigenvalue {worst:.3e})");
    }
    (table, worst)
}

pub fn coefficients(frame: &AdiabaticFrame, lattice: &Lattice) -> CoefficientTable {
    let (diffusion, worst_clip) = diffusion_matrix(frame, lattice);
    CoefficientTable {
        gamma: pumping_rates(frame, lattice),
        force: radiation_pressure(frame, lattice),
        diffusion,
        worst_clip,
    }
}

/// Mapping from the states of one frame to those of a nearby frame.
#[derive(Clone, Debug, PartialEq)]
pub struct Alignment {
    /// `permutation[m]` is the index in the new frame that continues state `m`
    /// of the old frame.
    pub permutation: Vec<usize>,
    /// Phase factor that makes `⟨Φ_m(old)|Φ_σ(m)(new)⟩` real and positive
    /// when multiplied onto the new state.
    pub phases: Vec<C64>,
    /// True when overlaps were too small and eigenvalue order was used.
    pub fallback: bool,
}

/// Match adiabatic states across two nearby frames by maximal overlap.
pub fn align_continuity(previous: &AdiabaticFrame, next: &AdiabaticFrame) -> Alignment {
    let n = previous.dim();
    let mut overlaps = vec![ZERO; n * n];
    let mut permutation = vec![usize::MAX; n];
    let mut weakest: f64 = 1.0;
    let mut clear = true;
    for m in 0..n {
        let mut best = (0.0, 0);
        for k in 0..n {
            let o = dot(previous.state(m), next.state(k));
            overlaps[m * n + k] = o;
            if o.norm_sqr() > best.0 {
                best = (o.norm_sqr(), k);
            }
        }
        // a squared overlap above 1/2 is the unique one in its row and column
        clear &= best.0 > 0.5;
        permutation[m] = best.1;
        weakest = weakest.min(best.0.sqrt());
    }
    if !clear {
        let mut order: Vec<(f64, usize, usize)> = (0..n * n)
            .map(|x| (overlaps[x].norm(), x / n, x % n))
            .collect();
        order.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        permutation.iter_mut().for_each(|p| *p = usize::MAX);
        let mut taken = vec![false; n];
        weakest = 1.0;
        for (mag, m, k) in order {
            if permutation[m] != usize::MAX || taken[k] {
                continue;
            }
            permutation[m] = k;
            taken[k] = true;
            weakest = weakest.min(mag);
        }
    }
    let fallback = weakest < 0.5;
    if fallback {
        log::debug!(
            "continuity overlap {weakest:.3} below 0.5 at {:?}; using eigenvalue order",
            next.position
        );
        permutation = (0..n).collect();
    }
    let phases = (0..n)
        .map(|m| {
            let o = overlaps[m * n + permutation[m]];
            if o.norm() > 0.0 {
                (o / o.norm()).conj()
            } else {
                C64::new(1.0, 0.0)
            }
        })
        .collect();
    Alignment {
        permutation,
        phases,
        fallback,
    }
}

/// Index in `next` that continues state `m` of `previous`. Cheaper than a
/// full [`align_continuity`] when the continuation is unambiguous.
pub fn continuation(previous: &AdiabaticFrame, m: usize, next: &AdiabaticFrame) -> usize {
    let old = previous.state(m);
    let mut best = (0.0, m);
    for k in 0..next.dim() {
        let o = dot(old, next.state(k)).norm_sqr();
        if o > best.0 {
            best = (o, k);
        }
    }
    if best.0 > 0.5 {
        best.1
    } else {
        align_continuity(previous, next).permutation[m]
    }
}
