//! The root-localization constant `rho(k)`: if a monic degree-`k`
//! polynomial has `|coefficient of u^{k-j}| < (eps / rho)^j` for all `j`,
//! every real root lies in `(-eps, eps)`.
//!
//! `rho(alpha)` for a root vector `alpha` on the boundary of the unit
//! polydisk is the smallest `beta` with `|sigma_j(alpha)| <= beta^j` for all
//! `j`, i.e. `max_j |sigma_j(alpha)|^{1/j}`; the estimate is its maximum over
//! samples. The supremum is `k`, attained at `alpha = (1, ..., 1)`.

use nalgebra::Complex;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::polyparam::{real_roots_with_mult, ParamPoly, ROOT_TOL};
use crate::rng;

const CHUNK: usize = 4096;

/// Which coefficient each power of `eps / rho` bounds.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundIndexing {
    /// `|coefficient of u^{k-j}| < (eps/rho)^j`, `j = 1..k`.
    #[default]
    Proof,
    /// `|coefficient of u^j| < (eps/rho)^j`, `j = 0..k-1`.
    Statement,
}

/// Elementary symmetric functions `sigma_1..sigma_k`.
fn elementary(alpha: &[Complex<f64>]) -> Vec<Complex<f64>> {
    let k = alpha.len();
    let mut e = vec![Complex::new(0.0, 0.0); k + 1];
    e[0] = Complex::new(1.0, 0.0);
    for (i, a) in alpha.iter().enumerate() {
        for j in (1..=i + 1).rev() {
            e[j] = e[j] + e[j - 1] * a;
        }
    }
    e.remove(0);
    e
}

/// `max_j |sigma_j(alpha)|^{1/j}`.
pub fn rho_at(alpha: &[Complex<f64>]) -> f64 {
    elementary(alpha)
        .iter()
        .enumerate()
        .map(|(j, s)| s.norm().powf(1.0 / (j + 1) as f64))
        .fold(0.0, f64::max)
}

/// The known value of the supremum, `k`.
pub fn rho_bound(k: usize) -> f64 {
    k as f64
}

/// Point on the boundary of the polydisk of radius `scale`: one coordinate
/// pinned to modulus `scale`, the rest with uniform modulus and phase.
fn boundary_sample<R: Rng>(rng: &mut R, k: usize, scale: f64) -> Vec<Complex<f64>> {
    let pinned = rng.random_range(0..k);
    (0..k)
        .map(|i| {
            let r = if i == pinned {
                1.0
            } else {
                rng.random::<f64>()
            };
            let phase = rng.random::<f64>() * std::f64::consts::TAU;
            Complex::from_polar(r * scale, phase)
        })
        .collect()
}

/// Real sign vertices `{-1, 1}^k` (all of them for `k <= 12`, else the
/// all-ones corner only).
fn vertices(k: usize) -> Vec<Vec<Complex<f64>>> {
    if k > 12 {
        return vec![vec![Complex::new(1.0, 0.0); k]];
    }
    (0..1usize << k)
        .map(|mask| {
            (0..k)
                .map(|i| Complex::new(if mask >> i & 1 == 1 { -1.0 } else { 1.0 }, 0.0))
                .collect()
        })
        .collect()
}

/// Maximum of `rho(alpha)` over the sign vertices and `samples` random
/// boundary points.
pub fn estimate_rho(k: usize, samples: usize, seed: u64) -> f64 {
    estimate_rho_at_scale(k, samples, seed, 1.0)
}

/// The same estimate on the polydisk of radius `scale`, divided by `scale`.
pub fn estimate_rho_at_scale(k: usize, samples: usize, seed: u64, scale: f64) -> f64 {
    if k == 0 {
        return 0.0;
    }
    let corners = vertices(k)
        .iter()
        .map(|a| rho_at(&a.iter().map(|z| z * scale).collect::<Vec<_>>()))
        .fold(0.0, f64::max);
    let sampled = (0..samples.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut r = rng::stream(seed, c as u64);
            let n = CHUNK.min(samples - c * CHUNK);
            (0..n)
                .map(|_| rho_at(&boundary_sample(&mut r, k, scale)))
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max);
    corners.max(sampled) / scale
}

/// Monte Carlo check of the confinement claim.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfinementReport {
    pub k: usize,
    pub rho: f64,
    pub eps: f64,
    pub trials: usize,
    pub seed: u64,
    pub indexing: BoundIndexing,
    pub failures: usize,
    pub pass: bool,
}

/// Random monic degree-`k` polynomials under the coefficient bounds.
pub fn draw_bounded<R: Rng>(
    rng: &mut R,
    k: usize,
    rho: f64,
    eps: f64,
    indexing: BoundIndexing,
) -> ParamPoly {
    let mut c = vec![0.0; k + 1];
    c[k] = 1.0;
    let q = eps / rho;
    for j in 1..=k {
        let v = rng.random_range(-1.0..1.0);
        match indexing {
            BoundIndexing::Proof => c[k - j] = v * q.powi(j as i32),
            BoundIndexing::Statement => c[j - 1] = v * q.powi(j as i32 - 1),
        }
    }
    ParamPoly::new(c)
}

/// Counts trials with a real root outside `(-eps, eps)`.
pub fn verify_confinement(
    k: usize,
    rho: f64,
    eps: f64,
    trials: usize,
    seed: u64,
    indexing: BoundIndexing,
) -> ConfinementReport {
    let failures = (0..trials.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut r = rng::stream(seed, c as u64);
            let n = CHUNK.min(trials - c * CHUNK);
            (0..n)
                .filter(|_| {
                    let p = draw_bounded(&mut r, k, rho, eps, indexing);
                    match real_roots_with_mult(&p, ROOT_TOL) {
                        Ok(d) => d.roots().iter().any(|u| u.abs() >= eps),
                        Err(_) => true,
                    }
                })
                .count()
        })
        .sum();
    ConfinementReport {
        k,
        rho,
        eps,
        trials,
        seed,
        indexing,
        failures,
        pass: failures == 0,
    }
}

/// Report of [`estimate_rho`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RhoReport {
    pub k: usize,
    pub rho_hat: f64,
    pub samples: usize,
    pub seed: u64,
}

pub fn rho_report(k: usize, samples: usize, seed: u64) -> RhoReport {
    RhoReport {
        k,
        rho_hat: estimate_rho(k, samples, seed),
        samples,
        seed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_k_values() {
        assert_eq!(estimate_rho(1, 1000, 1), 1.0);
        assert!(estimate_rho(2, 1000, 1) >= 2.0);
        let c = |x: f64| Complex::new(x, 0.0);
        assert_eq!(rho_at(&[c(1.0), c(1.0)]), 2.0);
        assert_eq!(rho_at(&[c(1.0), c(-1.0)]), 1.0);
    }

    #[test]
    fn estimate_never_exceeds_k() {
        for k in 1..=5 {
            let r = estimate_rho(k, 20_000, 3);
            assert!(r <= rho_bound(k) + 1e-12, "k = {k}: {r}");
        }
    }

    #[test]
    fn confinement_examples() {
        assert_eq!(
            verify_confinement(1, 1.0, 0.1, 10_000, 5, BoundIndexing::Proof).failures,
            0
        );
        let rho2 = estimate_rho(2, 10_000, 5);
        assert_eq!(
            verify_confinement(2, rho2, 0.5, 20_000, 5, BoundIndexing::Proof).failures,
            0
        );
        assert!(verify_confinement(2, 0.01, 0.1, 10_000, 5, BoundIndexing::Proof).failures > 0);
    }

    #[test]
    fn report_json() {
        let r = rho_report(1, 10, 9);
        assert_eq!(
            serde_json::to_string(&r).unwrap(),
            r#"{"k":1,"rho_hat":1.0,"samples":10,"seed":9}"#
        );
    }
}
