//! Projections and proximal maps on the box `B`, the constellation lattice `S`,
//! and the two superiorization objectives (indicator of `S` and the `ℓ1`
//! distance to `S`).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, RealVector, Result};

/// Square QAM family supported by the simulator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Modulation {
    #[serde(rename = "qpsk")]
    Qpsk,
    #[serde(rename = "16qam")]
    Qam16,
    #[serde(rename = "64qam")]
    Qam64,
}

impl Modulation {
    pub fn constellation(self) -> Constellation {
        match self {
            Modulation::Qpsk => Constellation::normalized(&[-1.0, 1.0]),
            Modulation::Qam16 => Constellation::normalized(&[-3.0, -1.0, 1.0, 3.0]),
            Modulation::Qam64 => {
                Constellation::normalized(&[-7.0, -5.0, -3.0, -1.0, 1.0, 3.0, 5.0, 7.0])
            }
        }
        .expect("built-in alphabets are valid")
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Modulation::Qpsk => "qpsk",
            Modulation::Qam16 => "16qam",
            Modulation::Qam64 => "64qam",
        }
    }
}

impl fmt::Display for Modulation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Modulation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "qpsk" | "4qam" => Ok(Modulation::Qpsk),
            "16qam" => Ok(Modulation::Qam16),
            "64qam" => Ok(Modulation::Qam64),
            other => Err(Error::config(format!("unknown modulation `{other}`"))),
        }
    }
}

/// Real per-coordinate alphabet `A` of a square constellation.
///
/// Real coordinate `k` and `k + K` of a stacked vector form one complex symbol,
/// so the complex symbol energy is `2·mean(a²)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Constellation {
    levels: Vec<f64>,
    a_max: f64,
    bits_per_real_dim: u32,
}

impl Constellation {
    /// Builds an alphabet from raw levels. Levels must be finite, strictly
    /// increasing and symmetric about zero. No energy normalization is applied.
    pub fn from_levels(levels: &[f64]) -> Result<Self> {
        if levels.len() < 2 {
            return Err(Error::config("constellation needs at least two levels"));
        }
        if levels.iter().any(|a| !a.is_finite()) {
            return Err(Error::config("constellation levels must be finite"));
        }
        if levels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config("constellation levels must be strictly increasing"));
        }
        let symmetric = levels
            .iter()
            .zip(levels.iter().rev())
            .all(|(lo, hi)| (lo + hi).abs() <= 1e-12 * hi.abs().max(1.0));
        if !symmetric {
            return Err(Error::config("constellation levels must be symmetric about 0"));
        }
        let a_max = levels.iter().fold(0.0_f64, |m, a| m.max(a.abs()));
        Ok(Self {
            levels: levels.to_vec(),
            a_max,
            bits_per_real_dim: levels.len().ilog2(),
        })
    }

    /// Like [`Constellation::from_levels`] but rescaled to unit average
    /// complex-symbol energy.
    pub fn normalized(levels: &[f64]) -> Result<Self> {
        let raw = Self::from_levels(levels)?;
        let scale = raw.complex_symbol_energy().sqrt().recip();
        let scaled: Vec<f64> = raw.levels.iter().map(|a| a * scale).collect();
        Self::from_levels(&scaled)
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn a_max(&self) -> f64 {
        self.a_max
    }

    pub fn bits_per_real_dim(&self) -> u32 {
        self.bits_per_real_dim
    }

    /// `2·mean(a²)`.
    pub fn complex_symbol_energy(&self) -> f64 {
        2.0 * self.levels.iter().map(|a| a * a).sum::<f64>() / self.levels.len() as f64
    }

    pub fn box_set(&self) -> BoxSet {
        BoxSet { a_max: self.a_max }
    }

    /// Nearest level to `x`; exact midpoints go to the smaller level.
    pub fn slice(&self, x: f64) -> f64 {
        // Number of midpoints strictly below x is the index of the nearest level.
        let idx = self
            .levels
            .windows(2)
            .take_while(|w| 0.5 * (w[0] + w[1]) < x)
            .count();
        self.levels[idx]
    }

    pub fn contains(&self, x: f64) -> bool {
        self.levels.contains(&x)
    }
}

/// The box `B = {x : ‖x‖_∞ ≤ a_max}`, the convex hull of the lattice `S = A^{2K}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxSet {
    a_max: f64,
}

impl BoxSet {
    pub fn new(a_max: f64) -> Result<Self> {
        if a_max > 0.0 && a_max.is_finite() {
            Ok(Self { a_max })
        } else {
            Err(Error::config(format!("box bound must be positive, got {a_max}")))
        }
    }

    pub fn a_max(&self) -> f64 {
        self.a_max
    }

    pub fn contains(&self, x: &RealVector) -> bool {
        x.iter().all(|v| v.abs() <= self.a_max)
    }

    /// Radius of the smallest ball around the origin containing the box in `dim` dimensions.
    pub fn max_norm(&self, dim: usize) -> f64 {
        self.a_max * (dim as f64).sqrt()
    }
}

pub fn project_box(x: &RealVector, b: &BoxSet) -> RealVector {
    x.map(|v| v.clamp(-b.a_max, b.a_max))
}

/// In-place variant of [`project_box`] used on the hot path.
pub fn project_box_mut(x: &mut RealVector, b: &BoxSet) {
    x.apply(|v| *v = v.clamp(-b.a_max, b.a_max));
}

/// Hard slicing `P_S`: coordinate-wise nearest constellation level.
pub fn project_constellation(x: &RealVector, c: &Constellation) -> RealVector {
    x.map(|v| c.slice(v))
}

/// `φ_τ(x)_k = sign(x_k)·(|x_k| − τ)₊`.
pub fn soft_threshold(x: &RealVector, tau: f64) -> RealVector {
    x.map(|v| shrink(v, tau))
}

#[inline]
fn shrink(v: f64, tau: f64) -> f64 {
    let mag = (v.abs() - tau).max(0.0);
    if mag == 0.0 {
        0.0
    } else {
        mag.copysign(v)
    }
}

/// `prox_{τ f_ℓ1}(x) = φ_τ(x − P_S(x)) + P_S(x)` with `f_ℓ1(x) = ‖x − P_S(x)‖₁`.
///
/// At exact midpoints between two levels the minimizer is not unique; the
/// fixed slicing rule of [`Constellation::slice`] picks one.
pub fn prox_l1_superiorization(x: &RealVector, tau: f64, c: &Constellation) -> RealVector {
    x.map(|v| {
        let p = c.slice(v);
        p + shrink(v - p, tau)
    })
}

/// `v = P_S(x) − x`.
pub fn perturbation_l2(x: &RealVector, c: &Constellation) -> RealVector {
    x.map(|v| c.slice(v) - v)
}

/// `v = prox_{τ f_ℓ1}(x) − x`.
pub fn perturbation_l1(x: &RealVector, tau: f64, c: &Constellation) -> RealVector {
    x.map(|v| {
        let p = c.slice(v);
        p + shrink(v - p, tau) - v
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(xs: &[f64]) -> RealVector {
        RealVector::from_column_slice(xs)
    }

    fn raw(levels: &[f64]) -> Constellation {
        Constellation::from_levels(levels).unwrap()
    }

    #[test]
    fn box_projection_examples() {
        let b = BoxSet::new(1.0).unwrap();
        assert_eq!(project_box(&v(&[0.5, -0.2]), &b), v(&[0.5, -0.2]));
        assert_eq!(project_box(&v(&[2.0, -3.0]), &b), v(&[1.0, -1.0]));
        assert_eq!(project_box(&v(&[1.0]), &b), v(&[1.0]));
    }

    #[test]
    fn box_rejects_nonpositive_bound() {
        assert!(BoxSet::new(0.0).is_err());
        assert!(BoxSet::new(-1.0).is_err());
        assert!(BoxSet::new(f64::NAN).is_err());
    }

    #[test]
    fn slicing_examples() {
        let c = raw(&[-3.0, -1.0, 1.0, 3.0]);
        assert_eq!(project_constellation(&v(&[0.2]), &c), v(&[1.0]));
        assert_eq!(project_constellation(&v(&[2.0]), &c), v(&[1.0]));
        assert_eq!(project_constellation(&v(&[5.0]), &c), v(&[3.0]));
        assert_eq!(project_constellation(&v(&[0.0]), &c), v(&[-1.0]));
        assert_eq!(project_constellation(&v(&[-2.0]), &c), v(&[-3.0]));
        assert_eq!(project_constellation(&v(&[-9.0]), &c), v(&[-3.0]));
    }

    #[test]
    fn soft_threshold_examples() {
        assert_eq!(soft_threshold(&v(&[0.3]), 0.5), v(&[0.0]));
        assert_eq!(soft_threshold(&v(&[-2.0]), 0.5), v(&[-1.5]));
        assert_eq!(soft_threshold(&v(&[1.0, -1.0]), 0.0), v(&[1.0, -1.0]));
    }

    #[test]
    fn prox_and_perturbation_examples() {
        let c = raw(&[-1.0, 1.0]);
        let p = prox_l1_superiorization(&v(&[1.3]), 0.1, &c);
        assert!((p[0] - 1.2).abs() < 1e-15);
        assert_eq!(prox_l1_superiorization(&v(&[1.05]), 0.1, &c), v(&[1.0]));
        let x = v(&[0.7, -1.4, 0.0]);
        assert_eq!(prox_l1_superiorization(&x, 0.0, &c), x);

        let pert = perturbation_l1(&v(&[1.3]), 0.1, &c);
        assert!((pert[0] + 0.1).abs() < 1e-15);
        assert_eq!(perturbation_l1(&x, 0.0, &c), RealVector::zeros(3));

        assert_eq!(perturbation_l2(&v(&[0.2]), &c), v(&[0.8]));
        assert_eq!(perturbation_l2(&v(&[1.0, -1.0]), &c), RealVector::zeros(2));
    }

    #[test]
    fn perturbed_point_lands_on_lattice() {
        let c = Modulation::Qam16.constellation();
        let x = v(&[0.1, -0.77, 0.5, 1.3, -0.0001]);
        let landed = &x + perturbation_l2(&x, &c);
        assert!(landed.iter().all(|a| c.contains(*a)));
    }

    #[test]
    fn named_alphabets_have_unit_energy() {
        for m in [Modulation::Qpsk, Modulation::Qam16, Modulation::Qam64] {
            let c = m.constellation();
            assert!((c.complex_symbol_energy() - 1.0).abs() < 1e-12, "{m}");
            assert_eq!(c.a_max(), *c.levels().last().unwrap());
        }
        let q = Modulation::Qam16.constellation();
        assert!((q.levels()[3] - 3.0 / 10f64.sqrt()).abs() < 1e-15);
        assert_eq!(q.bits_per_real_dim(), 2);
    }

    #[test]
    fn rejects_bad_alphabets() {
        assert!(Constellation::from_levels(&[1.0]).is_err());
        assert!(Constellation::from_levels(&[1.0, -1.0]).is_err());
        assert!(Constellation::from_levels(&[-1.0, 2.0]).is_err());
        assert!(Constellation::from_levels(&[-1.0, f64::INFINITY]).is_err());
    }

    #[test]
    fn modulation_parses() {
        assert_eq!("16QAM".parse::<Modulation>().unwrap(), Modulation::Qam16);
        assert!("8psk".parse::<Modulation>().is_err());
    }
}
