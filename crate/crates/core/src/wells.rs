//! Potential-well characterisation of the lowest adiabatic potential, and
//! plane scans used for lattice maps.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};

use crate::adiabatic::{diagonalize, Lattice};
use crate::error::{Error, Result};
use crate::units::MASS;

/// Depth, barriers and harmonic frequencies of a lowest-potential well.
/// Energies in E_R, lengths in `1/k`, frequencies in `E_R/ħ`.
#[derive(Clone, Debug)]
pub struct WellCharacterization {
    pub minimum: Vector3<f64>,
    /// `U_lowest` at the minimum (negative for red detuning).
    pub bottom: f64,
    /// Barrier to the neighbouring well along `x` (opposite site type).
    pub barrier_x: f64,
    /// Barrier to the neighbouring well along `z` (opposite site type).
    pub barrier_z: f64,
    pub barrier_ratio: f64,
    pub hessian: Matrix3<f64>,
    /// `ω_i = √(∂²U/∂x_i² / M)`.
    pub frequencies: Vector3<f64>,
}

/// Lattice constants `(a_z, a_xy)` in internal length units for half-angle
/// `theta`: nearest-neighbour spacings along `z` and along `x`. Neighbours
/// are of opposite site type in both directions.
pub fn internal_lattice_constants(theta: f64) -> (f64, f64) {
    (PI / (2.0 * theta.cos()), PI / theta.sin())
}

pub fn lowest_potential(lattice: &Lattice, r: &Vector3<f64>) -> f64 {
    diagonalize(lattice, r).potentials[0]
}

/// Newton iteration on the lowest potential, starting from `start`.
pub fn locate_minimum(lattice: &Lattice, start: Vector3<f64>) -> Result<Vector3<f64>> {
    let mut r = start;
    for _ in 0..50 {
        let f = diagonalize(lattice, &r);
        let g = f.gradient(0);
        let h = f.hessian(0);
        let step = h.cholesky().map(|c| c.solve(&g)).ok_or_else(|| {
            Error::DegenerateInput(format!("lowest potential is not convex near {r:?}"))
        })?;
        r -= step;
        if step.norm() < 1e-13 {
            return Ok(r);
        }
    }
    Err(Error::DegenerateInput(
        "minimum search did not converge".to_string(),
    ))
}

/// Golden-section search for a local extremum of `f` on `[a, b]`. With
/// `maximize` the maximum is sought.
fn golden<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, maximize: bool) -> (f64, f64) {
    let sign = if maximize { -1.0 } else { 1.0 };
    let g = |t: f64| sign * f(t);
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let (mut fc, mut fd) = (g(c), g(d));
    while (b - a).abs() > 1e-11 * (1.0 + a.abs() + b.abs()) {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = g(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = g(d);
        }
    }
    let t = 0.5 * (a + b);
    (t, f(t))
}

/// Highest value of the lowest potential on the straight segment
/// `from → from + span`, sampled with spacing at most `step` and refined.
fn barrier_top(lattice: &Lattice, from: Vector3<f64>, span: Vector3<f64>, step: f64) -> f64 {
    let n = (span.norm() / step).ceil().max(2.0) as usize;
    let at = |t: f64| lowest_potential(lattice, &(from + span * t));
    let values: Vec<f64> = (0..=n).map(|k| at(k as f64 / n as f64)).collect();
    let (kmax, _) = values
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .unwrap();
    let lo = kmax.saturating_sub(1) as f64 / n as f64;
    let hi = (kmax + 1).min(n) as f64 / n as f64;
    golden(at, lo, hi, true).1.max(values[kmax])
}

/// Locate the σ⁺ well, scan straight escape paths along `x` and `z`, and
/// evaluate the local Hessian. `step` is the scan spacing in `1/k`; it must
/// resolve `a_z/20`.
pub fn well_characterization(lattice: &Lattice, step: f64) -> Result<WellCharacterization> {
    let (a_z, a_xy) = internal_lattice_constants(lattice.config.theta);
    let limit = a_z / 20.0;
    if !(step > 0.0 && step <= limit) {
        return Err(Error::ScanResolution { step, limit });
    }
    let minimum = locate_minimum(lattice, lattice.config.sigma_plus_site())?;
    let frame = diagonalize(lattice, &minimum);
    let bottom = frame.potentials[0];
    let hessian = frame.hessian(0);
    let frequencies = hessian.diagonal().map(|h| (h.max(0.0) / MASS).sqrt());

    let barrier_x = barrier_top(lattice, minimum, Vector3::new(a_xy, 0.0, 0.0), step) - bottom;
    let barrier_z = barrier_top(lattice, minimum, Vector3::new(0.0, 0.0, a_z), step) - bottom;
    Ok(WellCharacterization {
        minimum,
        bottom,
        barrier_x,
        barrier_z,
        barrier_ratio: barrier_x / barrier_z,
        hessian,
        frequencies,
    })
}

/// Positions (distance along the line) of local minima of the lowest
/// potential on `origin + t·direction`, `t ∈ [0, length]`, refined to
/// machine-level precision. Endpoint minima are not reported.
pub fn minima_along_line(
    lattice: &Lattice,
    origin: Vector3<f64>,
    direction: Vector3<f64>,
    length: f64,
    points: usize,
) -> Vec<f64> {
    let dir = direction.normalize();
    let at = |t: f64| lowest_potential(lattice, &(origin + dir * t));
    let h = length / points as f64;
    let values: Vec<f64> = (0..=points).map(|k| at(k as f64 * h)).collect();
    (1..points)
        .filter(|&k| values[k] <= values[k - 1] && values[k] < values[k + 1])
        .map(|k| golden(at, (k - 1) as f64 * h, (k + 1) as f64 * h, false).0)
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Plane {
    XY,
    XZ,
    YZ,
}

impl Plane {
    /// Coordinate indices spanning the plane, and the normal index.
    pub fn axes(self) -> (usize, usize, usize) {
        match self {
            Plane::XY => (0, 1, 2),
            Plane::XZ => (0, 2, 1),
            Plane::YZ => (1, 2, 0),
        }
    }
}

impl std::str::FromStr for Plane {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "xy" => Ok(Plane::XY),
            "xz" => Ok(Plane::XZ),
            "yz" => Ok(Plane::YZ),
            other => Err(Error::Config(format!("unknown scan plane `{other}`"))),
        }
    }
}

/// Rectangular grid of adiabatic potentials, row-major with the first plane
/// axis varying fastest.
#[derive(Clone, Debug)]
pub struct PlaneScan {
    pub plane: Plane,
    pub nu: usize,
    pub nv: usize,
    pub positions: Vec<Vector3<f64>>,
    /// All adiabatic potentials per grid point, ascending.
    pub potentials: Vec<Vec<f64>>,
}

impl PlaneScan {
    pub fn lowest(&self, iu: usize, iv: usize) -> f64 {
        self.potentials[iv * self.nu + iu][0]
    }

    /// Barrier ratio read off the grid: the rise of the lowest potential along
    /// the grid row and column through the grid minimum. The scan must cover
    /// at least one full period in each direction.
    pub fn barrier_ratio(&self) -> f64 {
        let (mut iu0, mut iv0, mut min) = (0, 0, f64::INFINITY);
        for iv in 0..self.nv {
            for iu in 0..self.nu {
                if self.lowest(iu, iv) < min {
                    (iu0, iv0, min) = (iu, iv, self.lowest(iu, iv));
                }
            }
        }
        let row = (0..self.nu)
            .map(|iu| self.lowest(iu, iv0))
            .fold(f64::MIN, f64::max);
        let col = (0..self.nv)
            .map(|iv| self.lowest(iu0, iv))
            .fold(f64::MIN, f64::max);
        (row - min) / (col - min)
    }
}

/// Scan the plane through `offset` (its normal coordinate) over
/// `u ∈ [u_range.0, u_range.1]`, `v ∈ [v_range.0, v_range.1]` with `nu × nv`
/// inclusive grid points.
pub fn scan_plane(
    lattice: &Lattice,
    plane: Plane,
    offset: f64,
    u_range: (f64, f64),
    v_range: (f64, f64),
    nu: usize,
    nv: usize,
) -> Result<PlaneScan> {
    if nu < 2 || nv < 2 {
        return Err(Error::ScanResolution {
            step: f64::INFINITY,
            limit: 0.0,
        });
    }
    let (iu, iv, inormal) = plane.axes();
    let mut positions = Vec::with_capacity(nu * nv);
    let mut potentials = Vec::with_capacity(nu * nv);
    for jv in 0..nv {
        let v = v_range.0 + (v_range.1 - v_range.0) * jv as f64 / (nv - 1) as f64;
        for ju in 0..nu {
            let u = u_range.0 + (u_range.1 - u_range.0) * ju as f64 / (nu - 1) as f64;
            let mut r = Vector3::zeros();
            r[iu] = u;
            r[iv] = v;
            r[inormal] = offset;
            potentials.push(diagonalize(lattice, &r).potentials);
            positions.push(r);
        }
    }
    Ok(PlaneScan {
        plane,
        nu,
        nv,
        positions,
        potentials,
    })
}

/// Default map for the `xz` plane through `y = 0`: one lattice period along
/// `x` centred on a σ⁺ site and two site spacings along `z`, with `per_az`
/// points per `a_z` (even counts put the σ⁺ site on the grid).
pub fn default_xz_scan(lattice: &Lattice, per_az: usize) -> Result<PlaneScan> {
    let (a_z, a_xy) = internal_lattice_constants(lattice.config.theta);
    let nu = 2 * per_az + 1;
    let nv = 2 * per_az + 1;
    scan_plane(
        lattice,
        Plane::XZ,
        0.0,
        (-0.5 * a_xy, 0.5 * a_xy),
        (0.0, 2.0 * a_z),
        nu,
        nv,
    )
}
