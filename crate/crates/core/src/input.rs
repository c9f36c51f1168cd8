//! Candidate input distributions on the ellipse boundary.
//!
//! A distribution is stored as atoms on the half axis `x1 in [0, r_p]`; the
//! four-fold input symmetry expands each atom to its orbit
//! `(+-x1, +-x2)` with `x2 = r_m sqrt(1 - x1^2/r_p^2)`.

use serde::{Deserialize, Serialize};

use crate::channel::EllipseConstraint;
use crate::error::{Error, Result};

/// Two atoms closer than this (relative to `r_p`) in `x1` are considered one.
pub const MERGE_TOL_REL: f64 = 1e-6;

/// Relative clamp below the endpoint where the boundary radicand is snapped
/// to zero instead of erroring.
const CLAMP_TOL: f64 = 1e-14;

/// Probability atom on the upper-right quarter of the boundary, carrying the
/// total mass of its symmetry orbit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HalfAxisAtom {
    pub x1: f64,
    pub mass: f64,
}

/// One concrete mixture component after symmetry expansion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpandedAtom {
    pub point: (f64, f64),
    pub mass: f64,
}

/// A violated distribution invariant, reported by [`validate_distribution`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NonFinite { index: usize },
    MassNotPositive { index: usize, mass: f64 },
    OutsideHalfAxis { index: usize, x1: f64 },
    NotAscending { index: usize },
    Separation { index: usize, gap: f64 },
    MassSum { sum: f64 },
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::NonFinite { index } => write!(f, "atom {index} has a non-finite field"),
            Violation::MassNotPositive { index, mass } => {
                write!(f, "atom {index} mass {mass} is not positive")
            }
            Violation::OutsideHalfAxis { index, x1 } => {
                write!(f, "atom {index} x1={x1} lies outside [0, r_p]")
            }
            Violation::NotAscending { index } => {
                write!(f, "atom {index} does not increase x1")
            }
            Violation::Separation { index, gap } => {
                write!(f, "atoms {} and {index} are only {gap:e} apart", index - 1)
            }
            Violation::MassSum { sum } => {
                write!(f, "atom masses sum to {sum} (deficit {:e})", 1.0 - sum)
            }
        }
    }
}

/// Checks every distribution invariant and returns the violations found.
pub fn validate_distribution(
    constraint: &EllipseConstraint,
    atoms: &[HalfAxisAtom],
) -> Vec<Violation> {
    let r_p = constraint.r_p();
    let mut violations = Vec::new();
    let mut sum = 0.0;
    for (index, atom) in atoms.iter().enumerate() {
        if !atom.x1.is_finite() || !atom.mass.is_finite() {
            violations.push(Violation::NonFinite { index });
            continue;
        }
        if atom.mass <= 0.0 {
            violations.push(Violation::MassNotPositive {
                index,
                mass: atom.mass,
            });
        }
        if atom.x1 < 0.0 || atom.x1 > r_p {
            violations.push(Violation::OutsideHalfAxis { index, x1: atom.x1 });
        }
        if index > 0 {
            let gap = atom.x1 - atoms[index - 1].x1;
            if gap <= 0.0 {
                violations.push(Violation::NotAscending { index });
            } else if gap < MERGE_TOL_REL * r_p {
                violations.push(Violation::Separation { index, gap });
            }
        }
        sum += atom.mass;
    }
    if atoms.is_empty() || (sum - 1.0).abs() > 1e-12 {
        violations.push(Violation::MassSum { sum });
    }
    violations
}

/// Upper-half boundary point for a given `x1`.
pub fn boundary_point(x1: f64, constraint: &EllipseConstraint) -> Result<(f64, f64)> {
    let r_p = constraint.r_p();
    if r_p <= 0.0 || !x1.is_finite() {
        return Err(Error::OutsideEllipse { x1, r_p });
    }
    let radicand = 1.0 - (x1 / r_p) * (x1 / r_p);
    if radicand < -CLAMP_TOL {
        return Err(Error::OutsideEllipse { x1, r_p });
    }
    Ok((x1, constraint.r_m() * radicand.max(0.0).sqrt()))
}

/// Finite input distribution on the ellipse boundary with the four-fold
/// symmetry baked into its parameterization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DistributionJson", into = "DistributionJson")]
pub struct SymmetricBoundaryDistribution {
    constraint: EllipseConstraint,
    atoms: Vec<HalfAxisAtom>,
}

impl SymmetricBoundaryDistribution {
    /// Sorts the atoms by `x1` and validates every invariant.
    pub fn new(constraint: EllipseConstraint, mut atoms: Vec<HalfAxisAtom>) -> Result<Self> {
        atoms.sort_by(|a, b| a.x1.total_cmp(&b.x1));
        let violations = validate_distribution(&constraint, &atoms);
        if violations.is_empty() {
            Ok(Self { constraint, atoms })
        } else {
            Err(Error::InvalidDistribution(violations))
        }
    }

    pub fn constraint(&self) -> &EllipseConstraint {
        &self.constraint
    }

    pub fn atoms(&self) -> &[HalfAxisAtom] {
        &self.atoms
    }

    /// Upper-half representative point of the atom's orbit.
    pub fn representative(&self, atom: &HalfAxisAtom) -> (f64, f64) {
        representative(atom.x1, &self.constraint)
    }

    /// Expands every atom into its symmetry orbit. Mass splits use exact
    /// halving, so the expanded masses sum to the atom masses exactly.
    pub fn expand(&self) -> Vec<ExpandedAtom> {
        let mut out = Vec::new();
        for atom in &self.atoms {
            let (x1, x2) = self.representative(atom);
            let m = atom.mass;
            if x1 == 0.0 && x2 == 0.0 {
                out.push(ExpandedAtom { point: (0.0, 0.0), mass: m });
            } else if x1 == 0.0 {
                out.push(ExpandedAtom { point: (0.0, x2), mass: m / 2.0 });
                out.push(ExpandedAtom { point: (0.0, -x2), mass: m / 2.0 });
            } else if x2 == 0.0 {
                out.push(ExpandedAtom { point: (x1, 0.0), mass: m / 2.0 });
                out.push(ExpandedAtom { point: (-x1, 0.0), mass: m / 2.0 });
            } else {
                for (s1, s2) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
                    out.push(ExpandedAtom {
                        point: (s1 * x1, s2 * x2),
                        mass: m / 4.0,
                    });
                }
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("distribution serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::ParseJson(e.to_string()))
    }
}

pub(crate) fn representative(x1: f64, constraint: &EllipseConstraint) -> (f64, f64) {
    if constraint.r_p() == 0.0 {
        (0.0, 0.0)
    } else {
        boundary_point(x1, constraint).expect("atom x1 validated within [0, r_p]")
    }
}

/// Flat serialization schema: `{r_p, r_m, atoms: [{x1, mass}]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct DistributionJson {
    r_p: f64,
    r_m: f64,
    atoms: Vec<HalfAxisAtom>,
}

impl TryFrom<DistributionJson> for SymmetricBoundaryDistribution {
    type Error = Error;

    fn try_from(json: DistributionJson) -> Result<Self> {
        let constraint = EllipseConstraint::new(json.r_p, json.r_m)?;
        SymmetricBoundaryDistribution::new(constraint, json.atoms)
    }
}

impl From<SymmetricBoundaryDistribution> for DistributionJson {
    fn from(d: SymmetricBoundaryDistribution) -> Self {
        DistributionJson {
            r_p: d.constraint.r_p(),
            r_m: d.constraint.r_m(),
            atoms: d.atoms,
        }
    }
}
