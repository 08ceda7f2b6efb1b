//! Seeded sampling of model trajectories near a center spec.
//!
//! Each sample perturbs the spec's coordinates inside the sup-norm ball of
//! the given radius and records the real divisor restricted to windows
//! around the center's real root clusters. Window half-widths come from the
//! localization bound applied to the local Taylor expansion at each cluster,
//! with `rho(j) = j`.
//!
//! Uniform sampling alone never lands on the measure-zero degenerate
//! patterns, so the default measure mixes it with a weighted-homogeneous
//! dyadic lattice: coordinate `x` of weight `w` is `center + y t^w` with
//! integer `y` in `[-8, 8]`, which realizes the degenerate strata exactly.

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::rho_bound;
use crate::divisors::{omega_of, OmegaPattern};
use crate::error::{Error, Result};
use crate::models::{ModelKind, ModelSpec};
use crate::polyparam::{real_roots_with_mult, Divisor, ROOT_TOL};
use crate::rng;

/// Relative slack added to every window.
pub const WINDOW_MARGIN: f64 = 0.5;

const LATTICE_HALF: i32 = 8;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepMeasure {
    Uniform,
    Lattice,
    /// Even sample indices uniform, odd ones on the lattice.
    #[default]
    Mixed,
}

impl std::str::FromStr for SweepMeasure {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(SweepMeasure::Uniform),
            "lattice" => Ok(SweepMeasure::Lattice),
            "mixed" => Ok(SweepMeasure::Mixed),
            _ => Err(Error::InvalidSpec(format!("unknown measure {s:?}"))),
        }
    }
}

/// A root cluster of the center and its confinement window.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub center: f64,
    pub mult: usize,
    pub half_width: f64,
}

impl Window {
    pub fn lo(&self) -> f64 {
        self.center - self.half_width
    }

    pub fn hi(&self) -> f64 {
        self.center + self.half_width
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NearbySample {
    pub offset: Vec<f64>,
    /// Window-restricted divisor in field order.
    pub divisor: Divisor,
    /// Per-window divisors, windows in increasing `u`.
    pub clusters: Vec<Divisor>,
}

/// Windows around the center's real roots for perturbations of sup-norm
/// at most `radius`.
pub fn confinement_windows(m: &ModelSpec, radius: f64) -> Result<Vec<Window>> {
    if !(radius > 0.0) {
        return Err(Error::InvalidSpec(format!(
            "radius must be positive, got {radius}"
        )));
    }
    let p = m.poly();
    let partials = m.coordinate_partials();
    let center = real_roots_with_mult(&p, ROOT_TOL)?;
    if partials.is_empty() {
        // Nothing moves: any window that separates the roots will do.
        let gaps = center
            .roots()
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min);
        let hw = radius.min(0.25 * gaps);
        return Ok(center
            .entries()
            .iter()
            .map(|e| Window {
                center: e.root,
                mult: e.mult,
                half_width: hw,
            })
            .collect());
    }
    let mut windows = Vec::new();
    for e in center.entries() {
        let j = e.mult;
        let a = e.root;
        // Taylor coefficients at a: b_l = P^(l)(a) / l!, perturbation bound
        // radius * sum_c |d_c P^(l)(a)| / l!.
        let fact = |l: usize| (1..=l).map(|i| i as f64).product::<f64>();
        let slack = |l: usize| {
            radius
                * partials
                    .iter()
                    .map(|d| d.derivative(l).eval(a).abs())
                    .sum::<f64>()
                / fact(l)
        };
        let lead = p.derivative(j).eval(a).abs() / fact(j) - slack(j);
        if !(lead > 0.0) {
            return Err(Error::RadiusTooLarge(format!(
                "radius {radius} can cancel the leading local coefficient at u = {a}"
            )));
        }
        let spread = (0..j)
            .map(|l| {
                ((p.derivative(l).eval(a).abs() / fact(l) + slack(l)) / lead)
                    .powf(1.0 / (j - l) as f64)
            })
            .fold(0.0, f64::max);
        windows.push(Window {
            center: a,
            mult: j,
            half_width: rho_bound(j) * spread * (1.0 + WINDOW_MARGIN),
        });
    }
    for w in windows.windows(2) {
        if w[0].hi() >= w[1].lo() {
            return Err(Error::RadiusTooLarge(format!(
                "windows around u = {} and u = {} overlap at radius {radius}",
                w[0].center, w[1].center
            )));
        }
    }
    Ok(windows)
}

/// Weight of each coordinate: `degree - l` for the coefficient of
/// `(u - a)^l` in a block of degree `degree`.
pub fn coordinate_weights(m: &ModelSpec) -> Vec<u32> {
    match m.kind() {
        ModelKind::Morin { s, .. } => (0..s - 1).map(|l| (s - l) as u32).collect(),
        ModelKind::Product { factors } => factors
            .iter()
            .flat_map(|f| (0..f.j - 1).map(move |l| (f.j - l) as u32))
            .collect(),
    }
}

/// Largest power of two `t <= 1` with `8 t^2 <= radius`.
pub fn lattice_step(radius: f64) -> f64 {
    let mut t = 1.0;
    while LATTICE_HALF as f64 * t * t > radius {
        t *= 0.5;
    }
    t
}

fn draw_offset<R: Rng>(rng: &mut R, weights: &[u32], radius: f64, lattice: bool) -> Vec<f64> {
    if lattice {
        let t = lattice_step(radius);
        weights
            .iter()
            .map(|&w| rng.random_range(-LATTICE_HALF..=LATTICE_HALF) as f64 * t.powi(w as i32))
            .collect()
    } else {
        weights
            .iter()
            .map(|_| rng.random_range(-radius..=radius))
            .collect()
    }
}

fn is_lattice(measure: SweepMeasure, index: usize) -> bool {
    match measure {
        SweepMeasure::Uniform => false,
        SweepMeasure::Lattice => true,
        SweepMeasure::Mixed => index % 2 == 1,
    }
}

/// `count` perturbed divisors with the default mixed measure.
pub fn sample_nearby_divisors(
    m: &ModelSpec,
    radius: f64,
    count: usize,
    seed: u64,
) -> Result<Vec<NearbySample>> {
    sample_nearby_divisors_with(m, radius, count, seed, SweepMeasure::default())
}

pub fn sample_nearby_divisors_with(
    m: &ModelSpec,
    radius: f64,
    count: usize,
    seed: u64,
    measure: SweepMeasure,
) -> Result<Vec<NearbySample>> {
    let windows = confinement_windows(m, radius)?;
    let weights = coordinate_weights(m);
    let base = m.coords();
    (0..count)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream(seed, i as u64);
            let offset = draw_offset(&mut r, &weights, radius, is_lattice(measure, i));
            let coords: Vec<f64> = base.iter().zip(&offset).map(|(c, o)| c + o).collect();
            let spec = m.with_coords(&coords)?;
            let full = real_roots_with_mult(&spec.poly(), ROOT_TOL)?;
            let clusters: Vec<Divisor> = windows
                .iter()
                .map(|w| full.restrict(w.lo(), w.hi()))
                .collect();
            let kept = Divisor::new(
                clusters
                    .iter()
                    .flat_map(|d| d.entries().iter().copied())
                    .collect(),
            )?;
            let divisor = if m.variant().field_positive() {
                kept
            } else {
                kept.reversed()
            };
            Ok(NearbySample {
                offset,
                divisor,
                clusters,
            })
        })
        .collect()
}

/// Frequency table of window-restricted patterns.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Census {
    /// Serialized as `[{"pattern": [..], "count": c}, ...]`.
    #[serde(with = "count_list")]
    pub counts: BTreeMap<OmegaPattern, usize>,
    pub meta: CensusMeta,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CensusMeta {
    pub seed: u64,
    pub radius: f64,
    pub count: usize,
    pub measure: SweepMeasure,
    pub model: ModelSpec,
    pub windows: Vec<Window>,
}

impl Census {
    pub fn total(&self) -> usize {
        self.counts.values().sum()
    }

    /// `pattern,count,frequency` with the pattern quoted.
    pub fn to_csv(&self) -> String {
        let total = self.total().max(1) as f64;
        let mut out = String::from("pattern,count,frequency\n");
        for (p, c) in &self.counts {
            out.push_str(&format!("\"{p}\",{c},{}\n", *c as f64 / total));
        }
        out
    }
}

mod count_list {
    use super::*;
    use serde::{Deserializer, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Entry {
        pattern: OmegaPattern,
        count: usize,
    }

    pub fn serialize<S: Serializer>(
        m: &BTreeMap<OmegaPattern, usize>,
        s: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        s.collect_seq(m.iter().map(|(p, &count)| Entry {
            pattern: p.clone(),
            count,
        }))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> std::result::Result<BTreeMap<OmegaPattern, usize>, D::Error> {
        let v = Vec::<Entry>::deserialize(d)?;
        Ok(v.into_iter().map(|e| (e.pattern, e.count)).collect())
    }
}

pub fn empirical_pattern_census(
    m: &ModelSpec,
    radius: f64,
    count: usize,
    seed: u64,
) -> Result<Census> {
    empirical_pattern_census_with(m, radius, count, seed, SweepMeasure::default())
}

pub fn empirical_pattern_census_with(
    m: &ModelSpec,
    radius: f64,
    count: usize,
    seed: u64,
    measure: SweepMeasure,
) -> Result<Census> {
    let samples = sample_nearby_divisors_with(m, radius, count, seed, measure)?;
    let mut counts = BTreeMap::new();
    for s in &samples {
        *counts.entry(omega_of(&s.divisor)).or_insert(0) += 1;
    }
    let windows = confinement_windows(m, radius)?;
    Ok(Census {
        counts,
        meta: CensusMeta {
            seed,
            radius,
            count,
            measure,
            model: m.clone(),
            windows,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{ProductFactor, Variant};
    use crate::patterns::enumerate_local;

    fn morin(s: usize) -> ModelSpec {
        ModelSpec::morin(s, vec![0.0; s - 1], Variant::PgeqEplus, s.max(2) - 1).unwrap()
    }

    #[test]
    fn lattice_steps() {
        assert_eq!(lattice_step(0.5), 0.25);
        assert_eq!(lattice_step(0.01), 1.0 / 32.0);
        assert_eq!(coordinate_weights(&morin(4)), vec![4, 3, 2]);
    }

    #[test]
    fn small_radius_patterns_are_local() {
        for s in [2, 3] {
            let c = empirical_pattern_census(&morin(s), 0.01, 200, 1).unwrap();
            let allowed = enumerate_local(s);
            assert!(
                c.counts.keys().all(|p| allowed.contains(p)),
                "{:?}",
                c.counts
            );
        }
    }

    #[test]
    fn product_clusters_are_independent() {
        let m = ModelSpec::product(
            vec![
                ProductFactor {
                    alpha: 0.0,
                    j: 2,
                    x: vec![0.0],
                },
                ProductFactor {
                    alpha: 3.0,
                    j: 2,
                    x: vec![0.0],
                },
            ],
            Variant::PgeqEplus,
            2,
        )
        .unwrap();
        let allowed = enumerate_local(2);
        for s in sample_nearby_divisors(&m, 0.01, 200, 4).unwrap() {
            assert_eq!(s.clusters.len(), 2);
            for d in &s.clusters {
                assert!(allowed.contains(&omega_of(d)));
            }
        }
    }

    #[test]
    fn linear_model_always_one_root() {
        let c = empirical_pattern_census(&morin(1), 3.0, 50, 2).unwrap();
        assert_eq!(c.counts.len(), 1);
        assert_eq!(c.counts[&OmegaPattern::new(vec![1]).unwrap()], 50);
    }

    #[test]
    fn overlapping_windows_are_rejected() {
        let m = ModelSpec::product(
            vec![
                ProductFactor {
                    alpha: 0.0,
                    j: 2,
                    x: vec![0.0],
                },
                ProductFactor {
                    alpha: 0.1,
                    j: 2,
                    x: vec![0.0],
                },
            ],
            Variant::PgeqEplus,
            2,
        )
        .unwrap();
        assert_eq!(
            sample_nearby_divisors(&m, 0.5, 10, 1).unwrap_err().name(),
            "RadiusTooLarge"
        );
    }

    #[test]
    fn census_is_deterministic() {
        let a = empirical_pattern_census(&morin(4), 0.5, 2000, 9).unwrap();
        let b = empirical_pattern_census(&morin(4), 0.5, 2000, 9).unwrap();
        assert_eq!(a, b);
        assert!(a.to_csv().starts_with("pattern,count,frequency\n"));
        let back: Census = serde_json::from_str(&serde_json::to_string(&a).unwrap()).unwrap();
        assert_eq!(back, a);
    }
}
