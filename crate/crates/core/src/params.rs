//! Physical parameters, family labels, and the classification of a radial
//! solution.
//!
//! Every length is measured in the same units as the mass parameter `m`;
//! the profile function `phi` carries units of inverse length.

use serde::{Serialize, Serializer};

use crate::error::{Result, SolverError};
use crate::profile::RadialProfile;

/// `|phi| > DIVERGENCE_PHI / m` flags a divergent solution.
pub const DIVERGENCE_PHI: f64 = 10.0;
/// `|phi'| > DIVERGENCE_DPHI / m^2` flags a divergent solution.
pub const DIVERGENCE_DPHI: f64 = 10.0;
/// Slack on `alpha^2 >= 0` that absorbs integrator noise.
pub const TOL_ALPHA: f64 = 1e-10;

/// Mass parameter of the background; the horizon sits at `r = 2m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhysParams {
    m: f64,
}

impl PhysParams {
    pub fn new(m: f64) -> Result<Self> {
        check_mass("m", m)?;
        Ok(PhysParams { m })
    }

    pub fn m(&self) -> f64 {
        self.m
    }

    pub fn horizon_radius(&self) -> f64 {
        2.0 * self.m
    }
}

pub(crate) fn check_mass(name: &'static str, m: f64) -> Result<()> {
    if m.is_finite() && m > 0.0 {
        Ok(())
    } else {
        Err(SolverError::param(name, format!("mass must be positive and finite, got {m}")))
    }
}

/// Labels one regular solution near the horizon: the winding `p`
/// (`phi(2m) = p / 4m`) and the value of the coefficient left free by the
/// resonance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FamilyParams {
    pub p: i32,
    /// Value of `a_k` at the free (or forced) index, units `m^-(k+1)`.
    pub free_coeff: f64,
    /// `16 m^3 a_2`, only meaningful for `p = -1`.
    pub kappa: Option<f64>,
}

impl FamilyParams {
    /// The `p = -1` member with parameter `kappa`.
    pub fn from_kappa(m: f64, kappa: f64) -> Self {
        FamilyParams {
            p: -1,
            free_coeff: kappa_to_free_coeff(m, kappa),
            kappa: Some(kappa),
        }
    }

    pub fn general(m: f64, p: i32, free_coeff: f64) -> Self {
        FamilyParams {
            p,
            free_coeff,
            kappa: (p == -1).then(|| free_coeff_to_kappa(m, free_coeff)),
        }
    }
}

/// `a_2 = kappa / (16 m^3)`.
pub fn kappa_to_free_coeff(m: f64, kappa: f64) -> f64 {
    kappa / (16.0 * m * m * m)
}

pub fn free_coeff_to_kappa(m: f64, a2: f64) -> f64 {
    16.0 * m * m * m * a2
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum ClassTag {
    FiniteAction,
    Divergent,
    AlphaImaginary,
    Abelian,
}

impl ClassTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            ClassTag::FiniteAction => "FiniteAction",
            ClassTag::Divergent => "Divergent",
            ClassTag::AlphaImaginary => "AlphaImaginary",
            ClassTag::Abelian => "Abelian",
        }
    }
}

impl std::fmt::Display for ClassTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Global behaviour of a solution, with the radius where a negative verdict
/// was first detected.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SolutionClass {
    FiniteAction,
    Abelian,
    /// `phi` or `phi'` left the divergence box, the step size collapsed, or
    /// `phi` fell below the monopole curve by the end of the run.
    Divergent { witness_r: f64, phi: f64, dphi: f64 },
    /// `1 - r^2 phi'` dropped below `-TOL_ALPHA`.
    AlphaImaginary { witness_r: f64, alpha_sq: f64 },
}

impl SolutionClass {
    pub fn tag(&self) -> ClassTag {
        match self {
            SolutionClass::FiniteAction => ClassTag::FiniteAction,
            SolutionClass::Abelian => ClassTag::Abelian,
            SolutionClass::Divergent { .. } => ClassTag::Divergent,
            SolutionClass::AlphaImaginary { .. } => ClassTag::AlphaImaginary,
        }
    }

    pub fn witness_r(&self) -> Option<f64> {
        match *self {
            SolutionClass::Divergent { witness_r, .. }
            | SolutionClass::AlphaImaginary { witness_r, .. } => Some(witness_r),
            _ => None,
        }
    }

    /// Finite-action members and the Abelian references both have a
    /// well-defined action.
    pub fn has_finite_action(&self) -> bool {
        matches!(self, SolutionClass::FiniteAction | SolutionClass::Abelian)
    }
}

impl Serialize for SolutionClass {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(self.tag().as_str())
    }
}

/// Maps a profile computed with mass `m_old` onto mass `m_new` using the
/// scaling symmetry `(r, phi) -> (lambda r, phi / lambda)` of the field
/// equation.
pub fn rescale_profile(profile: &RadialProfile, m_old: f64, m_new: f64) -> Result<RadialProfile> {
    check_mass("m_old", m_old)?;
    check_mass("m_new", m_new)?;
    if (profile.m() - m_old).abs() > 1e-14 * m_old {
        return Err(SolverError::param(
            "m_old",
            format!("profile was computed with m = {}, not {m_old}", profile.m()),
        ));
    }
    Ok(profile.scaled(m_new / m_old))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn horizon_is_twice_the_mass() {
        let p = PhysParams::new(1.75).unwrap();
        assert_eq!(p.horizon_radius(), 3.5);
        assert!(PhysParams::new(0.0).is_err());
        assert!(PhysParams::new(-1.0).is_err());
        assert!(PhysParams::new(f64::NAN).is_err());
    }

    #[test]
    fn kappa_round_trip() {
        for &m in &[1.0, 2.0, 0.5, 3.0] {
            for &k in &[-3.0, -2.5, -2.0, 0.3] {
                let fam = FamilyParams::from_kappa(m, k);
                assert_eq!(fam.free_coeff, k / (16.0 * m * m * m));
                let back = free_coeff_to_kappa(m, fam.free_coeff);
                assert!((back - k).abs() <= 2.0 * f64::EPSILON * k.abs());
            }
        }
        assert_eq!(FamilyParams::general(1.0, 0, 0.1).kappa, None);
    }

    #[test]
    fn class_serializes_as_tag() {
        let c = SolutionClass::AlphaImaginary {
            witness_r: 3.0,
            alpha_sq: -1.0,
        };
        assert_eq!(serde_json::to_string(&c).unwrap(), "\"AlphaImaginary\"");
        assert_eq!(c.witness_r(), Some(3.0));
        assert_eq!(SolutionClass::FiniteAction.witness_r(), None);
    }
}
