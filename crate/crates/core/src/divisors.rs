//! Trajectory divisors of model fields and their multiplicity functionals.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::ModelSpec;
use crate::polyparam::{real_roots_with_mult, Divisor, DivisorEntry, ROOT_TOL};

/// Ordered multiplicities `(j_1, ..., j_p)` along a trajectory.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct OmegaPattern(Vec<usize>);

impl TryFrom<Vec<usize>> for OmegaPattern {
    type Error = Error;
    fn try_from(v: Vec<usize>) -> Result<Self> {
        OmegaPattern::new(v)
    }
}

impl From<OmegaPattern> for Vec<usize> {
    fn from(w: OmegaPattern) -> Self {
        w.0
    }
}

impl fmt::Display for OmegaPattern {
    /// `(1,2,1)`; the empty pattern is `()`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|j| j.to_string()).collect();
        write!(f, "({})", parts.join(","))
    }
}

impl std::str::FromStr for OmegaPattern {
    type Err = Error;
    /// Accepts `(1,2,1)`, `1,2,1`, `()` and the empty string.
    fn from_str(s: &str) -> Result<Self> {
        let t = s
            .trim()
            .trim_start_matches('(')
            .trim_end_matches(')')
            .trim();
        if t.is_empty() {
            return Ok(OmegaPattern::default());
        }
        let v = t
            .split(',')
            .map(|p| {
                p.trim()
                    .parse::<usize>()
                    .map_err(|e| Error::InvalidSpec(format!("pattern entry {p:?}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        OmegaPattern::new(v)
    }
}

impl OmegaPattern {
    pub fn new(entries: Vec<usize>) -> Result<Self> {
        if entries.contains(&0) {
            return Err(Error::InvalidSpec(format!(
                "pattern entries must be >= 1: {entries:?}"
            )));
        }
        Ok(OmegaPattern(entries))
    }

    pub fn entries(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Total multiplicity `m`.
    pub fn sum(&self) -> usize {
        self.0.iter().sum()
    }

    pub fn reversed(&self) -> Self {
        OmegaPattern(self.0.iter().rev().copied().collect())
    }
}

/// Reading of the half-multiplicity in `mu`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MuRounding {
    #[default]
    Ceil,
    Floor,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MultiplicityReport {
    pub m: usize,
    pub m_reduced: usize,
    pub mu: usize,
}

const MERGE_TOL: f64 = 1e-8;

/// Real divisor of the model polynomial in field order: increasing `u` for
/// `+e` variants, decreasing for `-e`.
///
/// Product models are solved block by block; roots of different blocks
/// closer than `MERGE_TOL * (1 + |r|)` are merged and their multiplicities
/// added.
pub fn trajectory_divisor(m: &ModelSpec) -> Result<Divisor> {
    let mut roots: Vec<DivisorEntry> = Vec::new();
    for f in m.factor_polys() {
        roots.extend(
            real_roots_with_mult(&f, ROOT_TOL)?
                .entries()
                .iter()
                .cloned(),
        );
    }
    roots.sort_by(|a, b| a.root.total_cmp(&b.root));
    let mut merged: Vec<DivisorEntry> = Vec::new();
    for e in roots {
        match merged.last_mut() {
            Some(last) if (e.root - last.root).abs() <= MERGE_TOL * (1.0 + e.root.abs()) => {
                let total = last.mult + e.mult;
                last.root = (last.root * last.mult as f64 + e.root * e.mult as f64) / total as f64;
                last.mult = total;
            }
            _ => merged.push(e),
        }
    }
    let d = Divisor::new(merged)?;
    Ok(if m.variant().field_positive() {
        d
    } else {
        d.reversed()
    })
}

pub fn omega_of(d: &Divisor) -> OmegaPattern {
    OmegaPattern(d.mults())
}

/// `(m, m', mu)` with the default ceiling reading of `mu`.
pub fn multiplicities(w: &OmegaPattern) -> MultiplicityReport {
    multiplicities_with(w, MuRounding::Ceil)
}

pub fn multiplicities_with(w: &OmegaPattern, rounding: MuRounding) -> MultiplicityReport {
    let m = w.sum();
    let mu =
        w.0.iter()
            .map(|j| match rounding {
                MuRounding::Ceil => j.div_ceil(2),
                MuRounding::Floor => j / 2,
            })
            .sum();
    MultiplicityReport {
        m,
        m_reduced: m - w.len(),
        mu,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{ProductFactor, Variant};

    fn pat(v: &[usize]) -> OmegaPattern {
        OmegaPattern::new(v.to_vec()).unwrap()
    }

    #[test]
    fn divisor_examples() {
        let m = ModelSpec::morin(4, vec![0.0, 0.0, -1.0], Variant::PgeqEplus, 3).unwrap();
        let d = trajectory_divisor(&m).unwrap();
        assert_eq!(d.mults(), vec![1, 2, 1]);
        for (r, e) in d.roots().iter().zip([-1.0, 0.0, 1.0]) {
            assert!((r - e).abs() < 1e-12);
        }
        let m = ModelSpec::morin(3, vec![0.0, 0.0], Variant::PgeqEplus, 3).unwrap();
        assert_eq!(omega_of(&trajectory_divisor(&m).unwrap()), pat(&[3]));
        let p = ModelSpec::product(
            vec![
                ProductFactor {
                    alpha: -1.0,
                    j: 1,
                    x: vec![],
                },
                ProductFactor {
                    alpha: 1.0,
                    j: 3,
                    x: vec![0.0, 0.0],
                },
            ],
            Variant::PgeqEplus,
            3,
        )
        .unwrap();
        let d = trajectory_divisor(&p).unwrap();
        assert_eq!(d.mults(), vec![1, 3]);
        assert!((d.roots()[0] + 1.0).abs() < 1e-12 && (d.roots()[1] - 1.0).abs() < 1e-9);
        let rev = trajectory_divisor(&p.with_variant(Variant::PgeqEminus)).unwrap();
        assert_eq!(omega_of(&rev), pat(&[3, 1]));
    }

    #[test]
    fn report_examples() {
        assert_eq!(
            multiplicities(&pat(&[1, 2, 1])),
            MultiplicityReport {
                m: 4,
                m_reduced: 1,
                mu: 3
            }
        );
        assert_eq!(
            multiplicities(&pat(&[3, 1])),
            MultiplicityReport {
                m: 4,
                m_reduced: 2,
                mu: 3
            }
        );
        assert_eq!(
            multiplicities(&pat(&[])),
            MultiplicityReport {
                m: 0,
                m_reduced: 0,
                mu: 0
            }
        );
        assert_eq!(multiplicities_with(&pat(&[3, 1]), MuRounding::Floor).mu, 1);
        assert_eq!(
            serde_json::to_string(&multiplicities(&pat(&[1, 2, 1]))).unwrap(),
            r#"{"m":4,"m_reduced":1,"mu":3}"#
        );
    }

    #[test]
    fn pattern_text() {
        assert_eq!(pat(&[1, 2, 1]).to_string(), "(1,2,1)");
        assert_eq!(pat(&[]).to_string(), "()");
        assert_eq!("(1, 3)".parse::<OmegaPattern>().unwrap(), pat(&[1, 3]));
        assert_eq!("".parse::<OmegaPattern>().unwrap(), pat(&[]));
        assert!("(0,1)".parse::<OmegaPattern>().is_err());
        assert!(serde_json::from_str::<OmegaPattern>("[2,0]").is_err());
    }
}
