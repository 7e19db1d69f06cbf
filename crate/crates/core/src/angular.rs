//! Angular-momentum algebra for the `Jg -> Jg + 1` dipole transition.
//!
//! Angular momenta are carried internally as doubled integers so that
//! half-integer values are exact. Clebsch-Gordan coefficients are evaluated
//! with the Racah sum in exact rational arithmetic and only converted to
//! floating point at the end.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::units::Transition;

/// Spherical polarization index `q ∈ {-1, 0, +1}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Spherical {
    Minus,
    Pi,
    Plus,
}

impl Spherical {
    pub const ALL: [Spherical; 3] = [Spherical::Minus, Spherical::Pi, Spherical::Plus];

    pub fn q(self) -> i32 {
        match self {
            Spherical::Minus => -1,
            Spherical::Pi => 0,
            Spherical::Plus => 1,
        }
    }

    pub fn index(self) -> usize {
        (self.q() + 1) as usize
    }
}

/// Cartesian polarization axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Cartesian {
    X,
    Y,
    Z,
}

impl Cartesian {
    pub const ALL: [Cartesian; 3] = [Cartesian::X, Cartesian::Y, Cartesian::Z];

    pub fn index(self) -> usize {
        match self {
            Cartesian::X => 0,
            Cartesian::Y => 1,
            Cartesian::Z => 2,
        }
    }
}

/// Either kind of polarization label accepted by the pumping operators.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Polarization {
    Spherical(Spherical),
    Cartesian(Cartesian),
}

impl FromStr for Polarization {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim() {
            "-" | "-1" | "minus" | "sigma-" => Polarization::Spherical(Spherical::Minus),
            "0" | "pi" => Polarization::Spherical(Spherical::Pi),
            "+" | "+1" | "1" | "plus" | "sigma+" => Polarization::Spherical(Spherical::Plus),
            "x" => Polarization::Cartesian(Cartesian::X),
            "y" => Polarization::Cartesian(Cartesian::Y),
            "z" => Polarization::Cartesian(Cartesian::Z),
            other => return Err(Error::PolarizationLabel(other.to_string())),
        })
    }
}

impl fmt::Display for Polarization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Polarization::Spherical(Spherical::Minus) => "-",
            Polarization::Spherical(Spherical::Pi) => "0",
            Polarization::Spherical(Spherical::Plus) => "+",
            Polarization::Cartesian(Cartesian::X) => "x",
            Polarization::Cartesian(Cartesian::Y) => "y",
            Polarization::Cartesian(Cartesian::Z) => "z",
        };
        f.write_str(s)
    }
}

/// Exact rational with overflow-checked arithmetic.
#[derive(Clone, Copy, Debug)]
struct Ratio {
    num: i128,
    den: i128,
}

fn gcd(mut a: i128, mut b: i128) -> i128 {
    a = a.abs();
    b = b.abs();
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

impl Ratio {
    const ZERO: Ratio = Ratio { num: 0, den: 1 };

    fn new(num: i128, den: i128) -> Ratio {
        let g = gcd(num, den).max(1);
        let s = if den < 0 { -1 } else { 1 };
        Ratio {
            num: s * num / g,
            den: s * den / g,
        }
    }

    fn add(self, o: Ratio) -> Option<Ratio> {
        let g = gcd(self.den, o.den).max(1);
        let l = (self.den / g).checked_mul(o.den)?;
        let a = self.num.checked_mul(l / self.den)?;
        let b = o.num.checked_mul(l / o.den)?;
        Some(Ratio::new(a.checked_add(b)?, l))
    }

    fn mul(self, o: Ratio) -> Option<Ratio> {
        let g1 = gcd(self.num, o.den).max(1);
        let g2 = gcd(o.num, self.den).max(1);
        let num = (self.num / g1).checked_mul(o.num / g2)?;
        let den = (self.den / g2).checked_mul(o.den / g1)?;
        Some(Ratio::new(num, den))
    }
}

fn factorial(n: i64) -> Option<i128> {
    if n < 0 {
        return None;
    }
    (1..=n as i128).try_fold(1i128, |acc, k| acc.checked_mul(k))
}

fn is_valid_pair(two_j: i64, two_m: i64) -> bool {
    two_j >= 0 && two_m.abs() <= two_j && (two_j - two_m) % 2 == 0
}

fn doubled(x: f64, what: &str) -> Result<i64> {
    let t = 2.0 * x;
    if !t.is_finite() || t.fract() != 0.0 || t.abs() > 1e6 {
        return Err(Error::AngularMomentum(format!(
            "{what} = {x} is not a half-integer"
        )));
    }
    Ok(t as i64)
}

/// Clebsch-Gordan coefficient `⟨j1 m1; j2 m2 | J M⟩` in the Condon-Shortley
/// phase convention.
pub fn clebsch_gordan(j1: f64, m1: f64, j2: f64, m2: f64, j: f64, m: f64) -> Result<f64> {
    clebsch_gordan_doubled(
        doubled(j1, "j1")?,
        doubled(m1, "m1")?,
        doubled(j2, "j2")?,
        doubled(m2, "m2")?,
        doubled(j, "J")?,
        doubled(m, "M")?,
    )
}

/// Same as [`clebsch_gordan`] with every argument doubled.
pub fn clebsch_gordan_doubled(
    tj1: i64,
    tm1: i64,
    tj2: i64,
    tm2: i64,
    tj: i64,
    tm: i64,
) -> Result<f64> {
    for (tj_, tm_, name) in [(tj1, tm1, "1"), (tj2, tm2, "2"), (tj, tm, "")] {
        if !is_valid_pair(tj_, tm_) {
            return Err(Error::AngularMomentum(format!(
                "(j{name}, m{name}) = ({}, {}) is not a valid pair",
                tj_ as f64 / 2.0,
                tm_ as f64 / 2.0
            )));
        }
    }
    if tm1 + tm2 != tm || tj > tj1 + tj2 || tj < (tj1 - tj2).abs() || (tj1 + tj2 + tj) % 2 != 0 {
        return Ok(0.0);
    }
    let overflow =
        || Error::AngularMomentum("angular momenta too large for exact evaluation".to_string());
    let f = |two_n: i64| factorial(two_n / 2).ok_or_else(overflow);

    // Prefactor squared as an exact rational.
    let mut pref = Ratio::new((tj + 1) as i128, f(tj1 + tj2 + tj + 2)?);
    for two_n in [tj1 + tj2 - tj, tj1 - tj2 + tj, -tj1 + tj2 + tj] {
        pref = pref.mul(Ratio::new(f(two_n)?, 1)).ok_or_else(overflow)?;
    }
    for two_n in [tj1 + tm1, tj1 - tm1, tj2 + tm2, tj2 - tm2, tj + tm, tj - tm] {
        pref = pref.mul(Ratio::new(f(two_n)?, 1)).ok_or_else(overflow)?;
    }

    // Racah alternating sum.
    let mut sum = Ratio::ZERO;
    for k in 0.. {
        let args = [
            2 * k,
            tj1 + tj2 - tj - 2 * k,
            tj1 - tm1 - 2 * k,
            tj2 + tm2 - 2 * k,
            tj - tj2 + tm1 + 2 * k,
            tj - tj1 - tm2 + 2 * k,
        ];
        if args[1] < 0 || args[2] < 0 || args[3] < 0 {
            break;
        }
        if args[4] < 0 || args[5] < 0 {
            continue;
        }
        let mut den = 1i128;
        for a in args {
            den = den.checked_mul(f(a)?).ok_or_else(overflow)?;
        }
        let sign = if k % 2 == 0 { 1 } else { -1 };
        sum = sum.add(Ratio::new(sign, den)).ok_or_else(overflow)?;
    }
    if sum.num == 0 {
        return Ok(0.0);
    }
    let squared = pref
        .mul(sum)
        .and_then(|r| r.mul(sum))
        .ok_or_else(overflow)?;
    let magnitude = (squared.num as f64 / squared.den as f64).sqrt();
    Ok(magnitude * sum.num.signum() as f64)
}

/// Raising and lowering parts of the reduced dipole operator, one matrix per
/// spherical component. The reduced dipole moment is set to one, so the
/// raising entries are bare Clebsch-Gordan coefficients.
#[derive(Clone, Debug)]
pub struct DipoleComponents {
    two_jg: u32,
    /// `raising[q]` has shape `(2je+1) × (2jg+1)`; entry `(me, mg)` is
    /// `⟨je me | jg mg; 1 q⟩`. Sublevels are ordered by ascending `m`.
    raising: [DMatrix<Complex64>; 3],
    lowering: [DMatrix<Complex64>; 3],
}

impl DipoleComponents {
    pub fn new(transition: &Transition) -> Result<Self> {
        let tjg = transition.two_jg() as i64;
        let tje = tjg + 2;
        let ng = transition.ground_dim();
        let ne = transition.excited_dim();
        let mut raising: [DMatrix<Complex64>; 3] = std::array::from_fn(|_| DMatrix::zeros(ne, ng));
        for pol in Spherical::ALL {
            let tq = 2 * pol.q() as i64;
            for ie in 0..ne {
                let tme = -tje + 2 * ie as i64;
                for ig in 0..ng {
                    let tmg = -tjg + 2 * ig as i64;
                    if tme != tmg + tq {
                        continue;
                    }
                    let c = clebsch_gordan_doubled(tjg, tmg, 2, tq, tje, tme)?;
                    raising[pol.index()][(ie, ig)] = Complex64::new(c, 0.0);
                }
            }
        }
        let lowering = std::array::from_fn(|i| raising[i].adjoint());
        Ok(DipoleComponents {
            two_jg: tjg as u32,
            raising,
            lowering,
        })
    }

    pub fn two_jg(&self) -> u32 {
        self.two_jg
    }

    pub fn ground_dim(&self) -> usize {
        self.two_jg as usize + 1
    }

    pub fn excited_dim(&self) -> usize {
        self.two_jg as usize + 3
    }

    pub fn raising(&self, q: Spherical) -> &DMatrix<Complex64> {
        &self.raising[q.index()]
    }

    pub fn lowering(&self, q: Spherical) -> &DMatrix<Complex64> {
        &self.lowering[q.index()]
    }

    /// Raising part projected on a Cartesian unit vector, `d⁺·e_u`.
    pub fn raising_cartesian(&self, u: Cartesian) -> DMatrix<Complex64> {
        let coeffs = crate::field::cartesian_in_spherical(u);
        let mut out = DMatrix::zeros(self.excited_dim(), self.ground_dim());
        for q in Spherical::ALL {
            out += &self.raising[q.index()] * coeffs[q.index()];
        }
        out
    }

    /// Squared-coupling contrast between the stretched states under σ⁺
    /// light: `|⟨jg jg;1 1|je je⟩|² − |⟨jg −jg;1 1|je −jg+1⟩|²`. Equals 44/45
    /// for `jg = 4`.
    pub fn stretched_contrast(&self) -> f64 {
        let d = self.raising(Spherical::Plus);
        let ng = self.ground_dim();
        let top = d[(ng + 1, ng - 1)].norm_sqr();
        let bottom = d[(2, 0)].norm_sqr();
        top - bottom
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spin_half_triplet() {
        let c = clebsch_gordan(0.5, 0.5, 0.5, -0.5, 1.0, 0.0).unwrap();
        assert!((c - 0.5f64.sqrt()).abs() < 1e-15);
        let s = clebsch_gordan(0.5, 0.5, 0.5, -0.5, 0.0, 0.0).unwrap();
        assert!((s - 0.5f64.sqrt()).abs() < 1e-15);
        let s2 = clebsch_gordan(0.5, -0.5, 0.5, 0.5, 0.0, 0.0).unwrap();
        assert!((s2 + 0.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn stretched_state_is_one() {
        assert_eq!(clebsch_gordan(4.0, 4.0, 1.0, 1.0, 5.0, 5.0).unwrap(), 1.0);
    }

    #[test]
    fn selection_rules_give_zero() {
        assert_eq!(clebsch_gordan(1.0, 1.0, 1.0, 1.0, 2.0, 1.0).unwrap(), 0.0);
        assert_eq!(clebsch_gordan(1.0, 0.0, 1.0, 0.0, 3.0, 0.0).unwrap(), 0.0);
        // ⟨1 0; 1 0 | 1 0⟩ vanishes by symmetry.
        assert_eq!(clebsch_gordan(1.0, 0.0, 1.0, 0.0, 1.0, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn rejects_invalid_inputs() {
        assert!(clebsch_gordan(0.3, 0.3, 1.0, 0.0, 1.0, 0.0).is_err());
        assert!(clebsch_gordan(1.0, 2.0, 1.0, 0.0, 2.0, 2.0).is_err());
        assert!(clebsch_gordan(1.0, 0.5, 1.0, 0.0, 1.0, 0.5).is_err());
        assert!(clebsch_gordan(-1.0, 0.0, 1.0, 0.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn half_to_three_halves_table() {
        let t = Transition::cesium_d2().with_jg(0.5).unwrap();
        let d = DipoleComponents::new(&t).unwrap();
        // ⟨3/2 3/2 | 1/2 1/2; 1 1⟩ = 1 and ⟨3/2 1/2 | 1/2 -1/2; 1 1⟩ = 1/√3.
        assert!((d.raising(Spherical::Plus)[(3, 1)].re - 1.0).abs() < 1e-15);
        assert!((d.raising(Spherical::Plus)[(2, 0)].re - (1.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!((d.raising(Spherical::Pi)[(2, 1)].re - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn stretched_entry_for_cesium() {
        let d = DipoleComponents::new(&Transition::cesium_d2()).unwrap();
        assert_eq!(d.raising(Spherical::Plus)[(10, 8)].re, 1.0);
        assert!((d.stretched_contrast() - 44.0 / 45.0).abs() < 1e-15);
    }

    #[test]
    fn selection_rule_pattern() {
        let d = DipoleComponents::new(&Transition::cesium_d2()).unwrap();
        for q in Spherical::ALL {
            let m = d.raising(q);
            for ie in 0..11 {
                for ig in 0..9 {
                    let me = ie as i32 - 5;
                    let mg = ig as i32 - 4;
                    if me != mg + q.q() {
                        assert_eq!(m[(ie, ig)], Complex64::new(0.0, 0.0));
                    }
                    assert_eq!(m[(ie, ig)].im, 0.0);
                }
            }
        }
    }

    #[test]
    fn lowering_is_adjoint() {
        let d = DipoleComponents::new(&Transition::cesium_d2()).unwrap();
        for q in Spherical::ALL {
            assert_eq!(d.lowering(q), &d.raising(q).adjoint());
        }
    }

    #[test]
    fn polarization_labels() {
        assert_eq!(
            "+".parse::<Polarization>().unwrap(),
            Polarization::Spherical(Spherical::Plus)
        );
        assert_eq!(
            "y".parse::<Polarization>().unwrap(),
            Polarization::Cartesian(Cartesian::Y)
        );
        assert!("w".parse::<Polarization>().is_err());
    }
}
