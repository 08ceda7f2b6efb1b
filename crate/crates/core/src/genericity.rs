//! Rank criteria for traversal genericity: confluent Vandermonde systems,
//! their kernels via divisibility, general position of subspaces and the
//! versality rank test for product models.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::models::{ModelKind, ModelSpec};
use crate::polyparam::{real_roots_with_mult, ParamPoly, ROOT_TOL};

/// Nodes `alpha_i` with multiplicities `j_i` against the monomial vector
/// `P_x = (u^{d-1}, ..., u, 1)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSystem", into = "RawSystem")]
pub struct ConfluentSystem {
    alphas: Vec<f64>,
    j_list: Vec<usize>,
    d: usize,
}

#[derive(Serialize, Deserialize)]
struct RawSystem {
    alphas: Vec<f64>,
    mults: Vec<usize>,
    d: usize,
}

impl TryFrom<RawSystem> for ConfluentSystem {
    type Error = Error;
    fn try_from(r: RawSystem) -> Result<Self> {
        ConfluentSystem::new(r.alphas, r.mults, r.d)
    }
}

impl From<ConfluentSystem> for RawSystem {
    fn from(c: ConfluentSystem) -> Self {
        RawSystem {
            alphas: c.alphas,
            mults: c.j_list,
            d: c.d,
        }
    }
}

impl ConfluentSystem {
    pub fn new(alphas: Vec<f64>, j_list: Vec<usize>, d: usize) -> Result<Self> {
        if alphas.len() != j_list.len() {
            return Err(Error::InvalidSystem(format!(
                "{} nodes but {} multiplicities",
                alphas.len(),
                j_list.len()
            )));
        }
        if j_list.contains(&0) {
            return Err(Error::InvalidSystem("multiplicities must be >= 1".into()));
        }
        if alphas.iter().any(|a| !a.is_finite()) {
            return Err(Error::InvalidSystem("nodes must be finite".into()));
        }
        let mut sorted = alphas.clone();
        sorted.sort_by(f64::total_cmp);
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidSystem("nodes must be distinct".into()));
        }
        let m: usize = j_list.iter().map(|j| j - 1).sum();
        if m > d {
            return Err(Error::InvalidSystem(format!(
                "m = {m} constraints exceed d = {d}"
            )));
        }
        Ok(ConfluentSystem { alphas, j_list, d })
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn mults(&self) -> &[usize] {
        &self.j_list
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// Number of constraint rows, `sum (j_i - 1)`.
    pub fn m(&self) -> usize {
        self.j_list.iter().map(|j| j - 1).sum()
    }

    /// `S(u) = prod (u - alpha_i)^{j_i - 1}`.
    pub fn divisor_poly(&self) -> ParamPoly {
        self.alphas
            .iter()
            .zip(&self.j_list)
            .fold(ParamPoly::constant(1.0), |acc, (&a, &j)| {
                &acc * &ParamPoly::new(vec![-a, 1.0]).pow(j as u32 - 1)
            })
    }
}

/// Row `l` derivative of `(u^{d-1}, ..., 1)` at `u`.
fn monomial_row(d: usize, l: usize, u: f64) -> Vec<f64> {
    (0..d)
        .map(|c| {
            let p = d - 1 - c;
            if p < l {
                0.0
            } else {
                let falling: f64 = (p - l + 1..=p).map(|k| k as f64).product();
                falling * u.powi((p - l) as i32)
            }
        })
        .collect()
}

/// The `m x d` matrix with rows `P_x^{(l)}(alpha_i)`, `l <= j_i - 2`.
pub fn confluent_vandermonde(c: &ConfluentSystem) -> DMatrix<f64> {
    let rows: Vec<Vec<f64>> = c
        .alphas
        .iter()
        .zip(&c.j_list)
        .flat_map(|(&a, &j)| (0..j - 1).map(move |l| monomial_row(c.d, l, a)))
        .collect();
    DMatrix::from_fn(rows.len(), c.d, |r, k| rows[r][k])
}

/// Rank report shared by the check commands.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankCheck {
    pub rank: usize,
    pub expected: usize,
    pub pass: bool,
}

impl RankCheck {
    fn new(rank: usize, expected: usize) -> Self {
        RankCheck {
            rank,
            expected,
            pass: rank == expected,
        }
    }
}

/// Numerical rank of the confluent matrix after row and column
/// equilibration, which leaves the exact rank unchanged.
pub fn rank_test(c: &ConfluentSystem, tol: f64) -> RankCheck {
    let (a, _) = linalg::equilibrate(&confluent_vandermonde(c));
    RankCheck::new(linalg::numerical_rank(&a, tol), c.m())
}

/// Kernel of the confluent matrix from the SVD of its equilibrated form,
/// one unit column per null direction.
pub fn svd_kernel(c: &ConfluentSystem, tol: f64) -> DMatrix<f64> {
    let (a, scale) = linalg::equilibrate(&confluent_vandermonde(c));
    let mut k = linalg::kernel_basis(&a, tol);
    for mut col in k.column_iter_mut() {
        col.component_mul_assign(&scale);
        let n = col.norm();
        col /= n;
    }
    k
}

/// Columns are the coefficient vectors (in `P_x` order) of `S(u) u^l`,
/// highest `l = d - 1 - m` first, so that `m = 0` gives the identity.
pub fn solution_space_by_divisibility(c: &ConfluentSystem) -> DMatrix<f64> {
    let s = c.divisor_poly();
    let (d, m) = (c.d, c.m());
    DMatrix::from_fn(d, d - m, |r, c| {
        s.coeff((d - 1 - r).wrapping_sub(d - 1 - m - c))
    })
}

/// The polynomial `sum t_c u^{d-1-c}` of a coefficient vector in `P_x` order.
pub fn poly_of_vector(t: &[f64]) -> ParamPoly {
    ParamPoly::new(t.iter().rev().copied().collect())
}

/// Relative remainder `|T mod S| / |T|` of a kernel vector against `S`.
pub fn divisibility_remainder(c: &ConfluentSystem, t: &[f64]) -> f64 {
    let tp = poly_of_vector(t);
    if tp.is_zero() {
        return 0.0;
    }
    let (_, r) = tp.div_rem(&c.divisor_poly());
    r.norm_inf() / tp.norm_inf()
}

/// Linear subspaces `T_i` of `R^n`, each given by spanning columns.
#[derive(Clone, Debug, PartialEq)]
pub struct SubspaceConfig {
    n: usize,
    subspaces: Vec<DMatrix<f64>>,
}

#[derive(Serialize, Deserialize)]
struct RawConfig {
    n: usize,
    subspaces: Vec<Vec<Vec<f64>>>,
}

impl Serialize for SubspaceConfig {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        RawConfig {
            n: self.n,
            subspaces: self
                .subspaces
                .iter()
                .map(|b| {
                    b.column_iter()
                        .map(|c| c.iter().copied().collect())
                        .collect()
                })
                .collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for SubspaceConfig {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = RawConfig::deserialize(d)?;
        let mut bases = Vec::new();
        for vecs in r.subspaces {
            if let Some(v) = vecs.iter().find(|v| v.len() != r.n) {
                return Err(serde::de::Error::custom(format!(
                    "vector {v:?} is not in R^{}",
                    r.n
                )));
            }
            bases.push(DMatrix::from_fn(r.n, vecs.len(), |i, j| vecs[j][i]));
        }
        SubspaceConfig::new(r.n, bases).map_err(serde::de::Error::custom)
    }
}

impl SubspaceConfig {
    /// Each basis must have full column rank and positive codimension.
    pub fn new(n: usize, subspaces: Vec<DMatrix<f64>>) -> Result<Self> {
        for (i, b) in subspaces.iter().enumerate() {
            if b.nrows() != n {
                return Err(Error::InvalidSpec(format!(
                    "subspace {i} lives in R^{}, not R^{n}",
                    b.nrows()
                )));
            }
            if b.ncols() >= n {
                return Err(Error::InvalidSpec(format!(
                    "subspace {i} has codimension 0"
                )));
            }
            if b.ncols() > 0 && linalg::numerical_rank(b, linalg::DEFAULT_RANK_TOL) < b.ncols() {
                return Err(Error::InvalidSpec(format!(
                    "subspace {i} basis is not independent"
                )));
            }
        }
        Ok(SubspaceConfig { n, subspaces })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn subspaces(&self) -> &[DMatrix<f64>] {
        &self.subspaces
    }

    pub fn codims(&self) -> Vec<usize> {
        self.subspaces.iter().map(|b| self.n - b.ncols()).collect()
    }
}

/// Surjectivity of `R^n -> prod R^n / T_i`: the stacked orthogonal
/// complements must have rank `sum n_i`, which needs `sum n_i <= n`.
pub fn general_position(cfg: &SubspaceConfig, tol: f64) -> bool {
    let total: usize = cfg.codims().iter().sum();
    if total > cfg.n {
        return false;
    }
    let blocks: Vec<DMatrix<f64>> = cfg
        .subspaces
        .iter()
        .map(|b| {
            if b.ncols() == 0 {
                DMatrix::identity(cfg.n, cfg.n)
            } else {
                linalg::orthogonal_complement_rows(b, tol)
            }
        })
        .collect();
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut stacked = DMatrix::zeros(rows, cfg.n);
    let mut r = 0;
    for b in &blocks {
        stacked.rows_mut(r, b.nrows()).copy_from(b);
        r += b.nrows();
    }
    rows == total && linalg::numerical_rank(&stacked, tol) == total
}

/// Orthonormal basis of `span(a) ∩ span(b)` from the kernel of `[a | -b]`.
fn intersect(a: &DMatrix<f64>, b: &DMatrix<f64>, tol: f64) -> DMatrix<f64> {
    let n = a.nrows();
    if a.ncols() == 0 || b.ncols() == 0 {
        return DMatrix::zeros(n, 0);
    }
    let mut joint = DMatrix::zeros(n, a.ncols() + b.ncols());
    joint.columns_mut(0, a.ncols()).copy_from(a);
    joint.columns_mut(a.ncols(), b.ncols()).copy_from(&(-b));
    let ker = linalg::kernel_basis(&joint, tol);
    if ker.ncols() == 0 {
        return DMatrix::zeros(n, 0);
    }
    let span = a * ker.rows(0, a.ncols());
    let svd = span.svd(true, false);
    let u = svd.u.unwrap();
    let smax = svd.singular_values.max();
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] > tol * smax)
        .collect();
    DMatrix::from_fn(n, keep.len(), |r, c| u[(r, keep[c])])
}

/// `dim (T_1 ∩ ... ∩ T_k)` by iterated pairwise intersection.
pub fn intersection_dimension(cfg: &SubspaceConfig, tol: f64) -> usize {
    let mut cur = DMatrix::identity(cfg.n, cfg.n);
    for b in &cfg.subspaces {
        cur = intersect(&cur, b, tol);
    }
    cur.ncols()
}

/// Report of [`versality_check`], with the probed coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VersalityReport {
    pub rank: usize,
    pub expected: usize,
    pub pass: bool,
    pub probe: Vec<f64>,
}

/// Default probe radius: a tenth of the smallest gap between factor
/// centers, or 0.1 for a single factor.
pub fn default_probe_radius(m: &ModelSpec) -> f64 {
    match m.kind() {
        ModelKind::Product { factors } => {
            factors
                .windows(2)
                .map(|w| w[1].alpha - w[0].alpha)
                .fold(f64::INFINITY, f64::min)
                .min(1.0)
                * 0.1
        }
        ModelKind::Morin { .. } => 0.1,
    }
}

/// At the spec's coordinates `x*`, every real root `beta` of multiplicity
/// `j*` of factor `i` contributes the rows `xi_i^{(l)}(beta)`, `l <= j* - 2`,
/// in factor `i`'s coordinate block, where
/// `xi_i(u) = ((u - alpha_i)^{j_i - 2}, ..., 1)`. Passes iff the stacked
/// system has full row rank `m*`.
pub fn versality_check(m: &ModelSpec, tol: f64) -> Result<VersalityReport> {
    let ModelKind::Product { factors } = m.kind() else {
        return Err(Error::InvalidSpec(
            "versality check needs a product model".into(),
        ));
    };
    let width: usize = factors.iter().map(|f| f.j - 1).sum();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut offset = 0;
    for f in factors {
        let k = f.j - 1;
        let block = (&ParamPoly::monomial(1.0, f.j) + &ParamPoly::new(f.x.clone())).shift(-f.alpha);
        let roots = real_roots_with_mult(&block, ROOT_TOL)?;
        for e in roots.entries() {
            for l in 0..e.mult - 1 {
                // xi^{(l)} at beta: entries d^l/du^l (u - alpha)^p, p = k-1 .. 0.
                let mut row = vec![0.0; width];
                let t = e.root - f.alpha;
                for (c, p) in (0..k).rev().enumerate() {
                    row[offset + c] = if p < l {
                        0.0
                    } else {
                        (p - l + 1..=p).map(|q| q as f64).product::<f64>() * t.powi((p - l) as i32)
                    };
                }
                rows.push(row);
            }
        }
        offset += k;
    }
    let expected = rows.len();
    let mat = DMatrix::from_fn(expected, width, |r, c| rows[r][c]);
    let rank = if expected == 0 {
        0
    } else {
        linalg::numerical_rank(&mat, tol)
    };
    Ok(VersalityReport {
        rank,
        expected,
        pass: rank == expected,
        probe: m.coords(),
    })
}
