//! Dense univariate real polynomials in the chart coordinate `u`.
//!
//! Coefficients are stored in ascending order (`coeffs[i]` multiplies `u^i`)
//! and trailing zeros are always trimmed, so the zero polynomial is the empty
//! coefficient vector. Everything runs in `f64`; the places where a
//! floating-point decision is made (gcd truncation, root clustering) carry an
//! explicit, documented tolerance.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;

/// Relative backward error accepted for an approximate gcd.
pub const GCD_TOL: f64 = 1e-10;

/// Relative merge distance for roots found on different square-free factors.
pub const CLUSTER_TOL: f64 = 1e-7;

/// Default residual tolerance for root refinement.
pub const ROOT_TOL: f64 = 1e-12;

#[derive(Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "PolyRepr", into = "PolyRepr")]
pub struct ParamPoly {
    coeffs: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct PolyRepr {
    coeffs: Vec<f64>,
}

impl From<PolyRepr> for ParamPoly {
    fn from(r: PolyRepr) -> Self {
        ParamPoly::new(r.coeffs)
    }
}

impl From<ParamPoly> for PolyRepr {
    fn from(p: ParamPoly) -> Self {
        PolyRepr { coeffs: p.coeffs }
    }
}

impl fmt::Debug for ParamPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ParamPoly{:?}", self.coeffs)
    }
}

impl fmt::Display for ParamPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        let mut first = true;
        for (i, &c) in self.coeffs.iter().enumerate().rev() {
            if c == 0.0 {
                continue;
            }
            let sign = if c < 0.0 { "-" } else { "+" };
            if first {
                if c < 0.0 {
                    write!(f, "-")?;
                }
            } else {
                write!(f, " {sign} ")?;
            }
            first = false;
            let a = c.abs();
            match i {
                0 => write!(f, "{a}")?,
                _ if a == 1.0 => {}
                _ => write!(f, "{a}")?,
            }
            match i {
                0 => {}
                1 => write!(f, "u")?,
                _ => write!(f, "u^{i}")?,
            }
        }
        Ok(())
    }
}

impl ParamPoly {
    pub fn new(mut coeffs: Vec<f64>) -> Self {
        while coeffs.last() == Some(&0.0) {
            coeffs.pop();
        }
        ParamPoly { coeffs }
    }

    pub fn zero() -> Self {
        ParamPoly { coeffs: Vec::new() }
    }

    pub fn constant(c: f64) -> Self {
        ParamPoly::new(vec![c])
    }

    /// `c * u^k`.
    pub fn monomial(c: f64, k: usize) -> Self {
        let mut v = vec![0.0; k + 1];
        v[k] = c;
        ParamPoly::new(v)
    }

    /// Monic polynomial with the given roots (repeated entries give multiplicity).
    pub fn from_roots(roots: &[f64]) -> Self {
        roots.iter().fold(ParamPoly::constant(1.0), |acc, &r| {
            &acc * &ParamPoly::new(vec![-r, 1.0])
        })
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Degree, or `None` for the zero polynomial.
    pub fn degree(&self) -> Option<usize> {
        self.coeffs.len().checked_sub(1)
    }

    pub fn leading(&self) -> f64 {
        self.coeffs.last().copied().unwrap_or(0.0)
    }

    pub fn coeff(&self, i: usize) -> f64 {
        self.coeffs.get(i).copied().unwrap_or(0.0)
    }

    pub fn norm_inf(&self) -> f64 {
        self.coeffs.iter().fold(0.0_f64, |m, c| m.max(c.abs()))
    }

    pub fn is_monic(&self) -> bool {
        self.leading() == 1.0
    }

    /// Monic with vanishing coefficient of `u^{deg-1}`.
    pub fn is_depressed(&self) -> bool {
        match self.degree() {
            Some(d) if d >= 1 => self.is_monic() && self.coeff(d - 1) == 0.0,
            _ => false,
        }
    }

    pub fn eval(&self, u: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, &c| acc * u + c)
    }

    /// `sum |c_i| |u|^i`, the natural scale of rounding error in `eval(u)`.
    pub fn abs_eval(&self, u: f64) -> f64 {
        let a = u.abs();
        self.coeffs
            .iter()
            .rev()
            .fold(0.0, |acc, &c| acc * a + c.abs())
    }

    pub fn scale(&self, s: f64) -> Self {
        ParamPoly::new(self.coeffs.iter().map(|c| c * s).collect())
    }

    pub fn monic(&self) -> Self {
        if self.is_zero() {
            return self.clone();
        }
        let lc = self.leading();
        let mut coeffs: Vec<f64> = self.coeffs.iter().map(|c| c / lc).collect();
        *coeffs.last_mut().unwrap() = 1.0;
        ParamPoly::new(coeffs)
    }

    /// The `order`-th derivative in `u`.
    pub fn derivative(&self, order: usize) -> Self {
        if order == 0 {
            return self.clone();
        }
        if self.coeffs.len() <= order {
            return ParamPoly::zero();
        }
        let coeffs = (order..self.coeffs.len())
            .map(|i| self.coeffs[i] * falling_factorial(i, order))
            .collect();
        ParamPoly::new(coeffs)
    }

    /// `p(u + c)`.
    pub fn shift(&self, c: f64) -> Self {
        let mut out = self.coeffs.clone();
        let n = out.len();
        // Repeated synthetic division (Horner's Taylor shift).
        for i in 0..n {
            for j in (i..n.saturating_sub(1)).rev() {
                out[j] += c * out[j + 1];
            }
        }
        ParamPoly::new(out)
    }

    pub fn pow(&self, k: u32) -> Self {
        (0..k).fold(ParamPoly::constant(1.0), |acc, _| &acc * self)
    }

    /// Euclidean division `self = q * d + r` with `deg r < deg d`.
    ///
    /// Panics if `d` is zero.
    pub fn div_rem(&self, d: &ParamPoly) -> (ParamPoly, ParamPoly) {
        let dd = d.degree().expect("division by the zero polynomial");
        let Some(n) = self.degree() else {
            return (ParamPoly::zero(), ParamPoly::zero());
        };
        if n < dd {
            return (ParamPoly::zero(), self.clone());
        }
        let lc = d.leading();
        let mut rem = self.coeffs.clone();
        let mut q = vec![0.0; n - dd + 1];
        for k in (0..=n - dd).rev() {
            let c = rem[k + dd] / lc;
            q[k] = c;
            for (j, &dj) in d.coeffs.iter().enumerate() {
                rem[k + j] -= c * dj;
            }
            rem[k + dd] = 0.0;
        }
        rem.truncate(dd);
        (ParamPoly::new(q), ParamPoly::new(rem))
    }

    /// Zero every coefficient with magnitude `<= threshold`.
    pub fn truncate_below(&self, threshold: f64) -> Self {
        ParamPoly::new(
            self.coeffs
                .iter()
                .map(|&c| if c.abs() <= threshold { 0.0 } else { c })
                .collect(),
        )
    }

    /// Cauchy bound `1 + max |c_i / c_n|`: every complex root lies inside it.
    pub fn cauchy_bound(&self) -> f64 {
        let Some(n) = self.degree() else { return 0.0 };
        let lc = self.leading().abs();
        1.0 + self.coeffs[..n]
            .iter()
            .fold(0.0_f64, |m, c| m.max(c.abs() / lc))
    }
}

fn falling_factorial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64)
}

impl Add for &ParamPoly {
    type Output = ParamPoly;
    fn add(self, rhs: &ParamPoly) -> ParamPoly {
        let n = self.coeffs.len().max(rhs.coeffs.len());
        ParamPoly::new((0..n).map(|i| self.coeff(i) + rhs.coeff(i)).collect())
    }
}

impl Sub for &ParamPoly {
    type Output = ParamPoly;
    fn sub(self, rhs: &ParamPoly) -> ParamPoly {
        let n = self.coeffs.len().max(rhs.coeffs.len());
        ParamPoly::new((0..n).map(|i| self.coeff(i) - rhs.coeff(i)).collect())
    }
}

impl Mul for &ParamPoly {
    type Output = ParamPoly;
    fn mul(self, rhs: &ParamPoly) -> ParamPoly {
        if self.is_zero() || rhs.is_zero() {
            return ParamPoly::zero();
        }
        let mut out = vec![0.0; self.coeffs.len() + rhs.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in rhs.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        ParamPoly::new(out)
    }
}

impl Neg for &ParamPoly {
    type Output = ParamPoly;
    fn neg(self) -> ParamPoly {
        self.scale(-1.0)
    }
}

/// The `order`-th derivative of `p`.
pub fn derivative(p: &ParamPoly, order: usize) -> ParamPoly {
    p.derivative(order)
}

/// `(p(u0), p'(u0), ..., p^(order)(u0))`.
pub fn jet_at(p: &ParamPoly, u0: f64, order: usize) -> Vec<f64> {
    let mut d = p.clone();
    let mut out = Vec::with_capacity(order + 1);
    for _ in 0..=order {
        out.push(d.eval(u0));
        d = d.derivative(1);
    }
    out
}

/// Monic approximate greatest common divisor.
///
/// See [`gcd_triple`].
pub fn gcd(a: &ParamPoly, b: &ParamPoly, rel_tol: f64) -> ParamPoly {
    gcd_triple(a, b, rel_tol).0
}

/// Approximate gcd `h` of `f` and `g` with cofactors, `f ~ h * u`, `g ~ h * v`.
///
/// Candidate degrees come from the small singular values of the Sylvester
/// matrix of the norm-scaled inputs. For each candidate (largest first) the
/// null vector of the subresultant matrix seeds the cofactors, the triple is
/// refined by Gauss-Newton, and it is accepted when the relative backward
/// error `(|h u - f| + |h v - g|) / (|f| + |g|)` is at most `rel_tol`.
/// `h` is monic; the cofactors carry the scale of the inputs.
pub fn gcd_triple(a: &ParamPoly, b: &ParamPoly, rel_tol: f64) -> (ParamPoly, ParamPoly, ParamPoly) {
    let one = ParamPoly::constant(1.0);
    if a.is_zero() {
        let h = b.monic();
        return (h, ParamPoly::zero(), ParamPoly::constant(b.leading()));
    }
    if b.is_zero() {
        let h = a.monic();
        return (h, ParamPoly::constant(a.leading()), ParamPoly::zero());
    }
    let swapped = a.degree() < b.degree();
    let (f, g) = if swapped { (b, a) } else { (a, b) };
    let trivial = || {
        if swapped {
            (one.clone(), b.clone(), a.clone())
        } else {
            (one.clone(), a.clone(), b.clone())
        }
    };
    let (sf, sg) = (f.norm_inf(), g.norm_inf());
    let (fs, gs) = (f.scale(1.0 / sf), g.scale(1.0 / sg));
    let m = gs.degree().unwrap();
    if m == 0 {
        return trivial();
    }
    let sv = linalg::singular_values(&subresultant_matrix(&fs, &gs, 1));
    let smax = sv.first().copied().unwrap_or(0.0);
    let loose = rel_tol.sqrt().max(rel_tol * 1e3);
    let candidates = sv.iter().filter(|&&s| s <= loose * smax).count().min(m);
    for k in (1..=candidates).rev() {
        let Some((h, u, v)) = seed_triple(&fs, &gs, k) else {
            continue;
        };
        let (h, u, v, err) = refine_triple(&fs, &gs, h, u, v);
        if err <= rel_tol {
            let (u, v) = (u.scale(sf), v.scale(sg));
            return if swapped { (h, v, u) } else { (h, u, v) };
        }
    }
    trivial()
}

fn seed_triple(
    f: &ParamPoly,
    g: &ParamPoly,
    k: usize,
) -> Option<(ParamPoly, ParamPoly, ParamPoly)> {
    let (n, m) = (f.degree()?, g.degree()?);
    let sk = subresultant_matrix(f, g, k);
    let svd = sk.svd(false, true);
    let vt = svd.v_t?;
    let (imin, _) = svd
        .singular_values
        .iter()
        .copied()
        .enumerate()
        .min_by(|x, y| x.1.total_cmp(&y.1))?;
    let z: Vec<f64> = vt.row(imin).iter().copied().collect();
    // f * v + g * w = 0 with v ~ g / h and w ~ -f / h.
    let v = ParamPoly::new(z[..m - k + 1].to_vec());
    let u = ParamPoly::new(z[m - k + 1..].iter().map(|x| -x).collect());
    if v.degree() != Some(m - k) || u.degree() != Some(n - k) {
        return None;
    }
    let h = least_squares_common_factor(f, &u, g, &v, k)?.monic();
    let u = least_squares_quotient(f, &h)?;
    let v = least_squares_quotient(g, &h)?;
    Some((h, u, v))
}

/// Gauss-Newton on `(h monic, u, v)` minimising `|h u - f|^2 + |h v - g|^2`.
fn refine_triple(
    f: &ParamPoly,
    g: &ParamPoly,
    mut h: ParamPoly,
    mut u: ParamPoly,
    mut v: ParamPoly,
) -> (ParamPoly, ParamPoly, ParamPoly, f64) {
    let norm = f.norm_inf() + g.norm_inf();
    let backward = |h: &ParamPoly, u: &ParamPoly, v: &ParamPoly| {
        ((&(h * u) - f).norm_inf() + (&(h * v) - g).norm_inf()) / norm
    };
    let mut err = backward(&h, &u, &v);
    let k = h.degree().unwrap_or(0);
    let (du, dv) = (f.degree().unwrap() - k, g.degree().unwrap() - k);
    let (rf, rg) = (f.coeffs().len(), g.coeffs().len());
    for _ in 0..12 {
        if err < 1e-15 {
            break;
        }
        // Unknowns: h_0..h_{k-1} (h stays monic), u_0..u_du, v_0..v_dv.
        let cols = k + du + 1 + dv + 1;
        let mut jac = DMatrix::zeros(rf + rg, cols);
        let hu = &h * &u;
        let hv = &h * &v;
        let mut res = DVector::zeros(rf + rg);
        for i in 0..rf {
            res[i] = f.coeff(i) - hu.coeff(i);
        }
        for i in 0..rg {
            res[rf + i] = g.coeff(i) - hv.coeff(i);
        }
        for l in 0..k {
            for (i, &c) in u.coeffs().iter().enumerate() {
                if i + l < rf {
                    jac[(i + l, l)] += c;
                }
            }
            for (i, &c) in v.coeffs().iter().enumerate() {
                if i + l < rg {
                    jac[(rf + i + l, l)] += c;
                }
            }
        }
        for l in 0..=du {
            for (i, &c) in h.coeffs().iter().enumerate() {
                if i + l < rf {
                    jac[(i + l, k + l)] += c;
                }
            }
        }
        for l in 0..=dv {
            for (i, &c) in h.coeffs().iter().enumerate() {
                if i + l < rg {
                    jac[(rf + i + l, k + du + 1 + l)] += c;
                }
            }
        }
        let Ok(step) = jac.svd(true, true).solve(&res, 1e-15) else {
            break;
        };
        let mut hc = h.coeffs().to_vec();
        let mut uc = u.coeffs().to_vec();
        let mut vc = v.coeffs().to_vec();
        uc.resize(du + 1, 0.0);
        vc.resize(dv + 1, 0.0);
        for l in 0..k {
            hc[l] += step[l];
        }
        for l in 0..=du {
            uc[l] += step[k + l];
        }
        for l in 0..=dv {
            vc[l] += step[k + du + 1 + l];
        }
        let (h2, u2, v2) = (ParamPoly::new(hc), ParamPoly::new(uc), ParamPoly::new(vc));
        let err2 = backward(&h2, &u2, &v2);
        if !(err2 < err) {
            break;
        }
        let gain = err / err2;
        (h, u, v, err) = (h2, u2, v2, err2);
        if gain < 1.5 {
            break;
        }
    }
    (h, u, v, err)
}

/// Columns: `deg g - k + 1` shifts of `f`, then `deg f - k + 1` shifts of `g`.
fn subresultant_matrix(f: &ParamPoly, g: &ParamPoly, k: usize) -> DMatrix<f64> {
    let (n, m) = (f.degree().unwrap(), g.degree().unwrap());
    let (cf, cg) = (m - k + 1, n - k + 1);
    let mut s = DMatrix::zeros(n + m - k + 1, cf + cg);
    for j in 0..cf {
        for (i, &c) in f.coeffs().iter().enumerate() {
            s[(i + j, j)] = c;
        }
    }
    for j in 0..cg {
        for (i, &c) in g.coeffs().iter().enumerate() {
            s[(i + j, cf + j)] = c;
        }
    }
    s
}

/// Least-squares `q` with `f ~ h * q`.
fn least_squares_quotient(f: &ParamPoly, h: &ParamPoly) -> Option<ParamPoly> {
    let (n, k) = (f.degree()?, h.degree()?);
    if k > n {
        return None;
    }
    let cols = n - k + 1;
    let mut a = DMatrix::zeros(n + 1, cols);
    for j in 0..cols {
        for (i, &c) in h.coeffs().iter().enumerate() {
            a[(i + j, j)] = c;
        }
    }
    let rhs = DVector::from_column_slice(f.coeffs());
    let q = a.svd(true, true).solve(&rhs, 1e-15).ok()?;
    Some(ParamPoly::new(q.iter().copied().collect()))
}

/// Least-squares `h` of degree `k` with `f ~ f_cof * h` and `g ~ g_cof * h`.
fn least_squares_common_factor(
    f: &ParamPoly,
    f_cof: &ParamPoly,
    g: &ParamPoly,
    g_cof: &ParamPoly,
    k: usize,
) -> Option<ParamPoly> {
    let (rf, rg) = (f.coeffs().len(), g.coeffs().len());
    let mut a = DMatrix::zeros(rf + rg, k + 1);
    let mut rhs = DVector::zeros(rf + rg);
    for j in 0..=k {
        for (i, &c) in f_cof.coeffs().iter().enumerate() {
            a[(i + j, j)] = c;
        }
        for (i, &c) in g_cof.coeffs().iter().enumerate() {
            a[(rf + i + j, j)] = c;
        }
    }
    for (i, &c) in f.coeffs().iter().enumerate() {
        rhs[i] = c;
    }
    for (i, &c) in g.coeffs().iter().enumerate() {
        rhs[rf + i] = c;
    }
    let h = a.svd(true, true).solve(&rhs, 1e-14).ok()?;
    let h = ParamPoly::new(h.iter().copied().collect());
    (h.degree() == Some(k)).then_some(h)
}

/// Square-free decomposition `p = c * prod f_i^i` (Yun's algorithm).
///
/// Returns the non-constant monic factors with their multiplicities, in
/// increasing multiplicity. The factors are pairwise coprime and square-free.
pub fn squarefree_decompose(p: &ParamPoly) -> Result<Vec<(ParamPoly, usize)>> {
    squarefree_decompose_with(p, GCD_TOL)
}

pub fn squarefree_decompose_with(p: &ParamPoly, gcd_tol: f64) -> Result<Vec<(ParamPoly, usize)>> {
    if p.is_zero() {
        return Err(Error::DegenerateInput("zero polynomial".into()));
    }
    let f = p.monic();
    let deg = f.degree().unwrap();
    if deg == 0 {
        return Ok(Vec::new());
    }
    // Later stages of the chain see inputs that already carry rounding error,
    // so the gcd tolerance is relaxed in steps until the refined
    // factorization reproduces `f`.
    let mut best: Option<(f64, Vec<(ParamPoly, usize)>)> = None;
    for scale in [1.0, 1e1, 1e2, 1e3, 1e4, 1e5] {
        let tol = gcd_tol * scale;
        let factors = refine_factorization(&f, yun(&f, tol));
        let total: usize = factors
            .iter()
            .map(|(a, m)| a.degree().unwrap_or(0) * m)
            .sum();
        if total != deg {
            continue;
        }
        let prod = factors
            .iter()
            .fold(ParamPoly::constant(1.0), |acc, (a, m)| {
                &acc * &a.pow(*m as u32)
            });
        let res = (&prod - &f).norm_inf() / f.norm_inf();
        if res <= RECONSTRUCT_TOL {
            return Ok(factors);
        }
        if best.as_ref().is_none_or(|(r, _)| res < *r) {
            best = Some((res, factors));
        }
    }
    // Nothing reproduces f: the near-common factors were spurious (typically
    // a tight cluster of simple roots). Keep a close candidate, otherwise
    // treat f as square-free, which is exact.
    Ok(match best {
        Some((res, factors)) if res <= FALLBACK_TOL => factors,
        _ => vec![(f, 1)],
    })
}

/// Relative residual at which a refined square-free factorization is accepted.
const RECONSTRUCT_TOL: f64 = 1e-11;

/// Looser residual for the best candidate when none meets [`RECONSTRUCT_TOL`].
const FALLBACK_TOL: f64 = 1e-9;

fn yun(f: &ParamPoly, gcd_tol: f64) -> Vec<(ParamPoly, usize)> {
    let deg = f.degree().unwrap_or(0);
    let (_, mut b, mut c) = gcd_triple(f, &f.derivative(1), gcd_tol);
    let mut out = Vec::new();
    let mut i = 1;
    while b.degree().unwrap_or(0) > 0 && i <= deg {
        let d = &c - &b.derivative(1);
        // Once only the last factor is left, `d` vanishes up to the error
        // carried through the chain, which is well above `gcd_tol`.
        let (a, b_next, c_next) = if d.norm_inf() <= gcd_tol.sqrt() * b.norm_inf().max(c.norm_inf())
        {
            (
                b.monic(),
                ParamPoly::constant(b.leading()),
                ParamPoly::zero(),
            )
        } else {
            gcd_triple(&b, &d, gcd_tol)
        };
        if a.degree().unwrap_or(0) > 0 {
            out.push((a, i));
        }
        b = b_next;
        c = c_next;
        i += 1;
    }
    out
}

/// Structure-preserving Gauss-Newton: adjusts the monic factors `a_i` so that
/// `prod a_i^{m_i}` matches the monic `f`, keeping degrees and
/// multiplicities fixed.
fn refine_factorization(
    f: &ParamPoly,
    factors: Vec<(ParamPoly, usize)>,
) -> Vec<(ParamPoly, usize)> {
    let n = f.degree().unwrap_or(0);
    let total: usize = factors
        .iter()
        .map(|(a, m)| a.degree().unwrap_or(0) * m)
        .sum();
    if factors.is_empty() || total != n {
        return factors;
    }
    let product = |fs: &[(ParamPoly, usize)]| {
        fs.iter().fold(ParamPoly::constant(1.0), |acc, (a, m)| {
            &acc * &a.pow(*m as u32)
        })
    };
    let residual = |fs: &[(ParamPoly, usize)]| (&product(fs) - f).norm_inf();
    let mut current = factors;
    let mut err = residual(&current);
    let unknowns: usize = current.iter().map(|(a, _)| a.degree().unwrap_or(0)).sum();
    for _ in 0..20 {
        if err <= 1e-16 * f.norm_inf() {
            break;
        }
        let full = product(&current);
        let mut jac = DMatrix::zeros(n, unknowns);
        let mut col = 0;
        for (idx, (a, m)) in current.iter().enumerate() {
            let others = current
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != idx)
                .fold(ParamPoly::constant(1.0), |acc, (_, (b, mb))| {
                    &acc * &b.pow(*mb as u32)
                });
            let base = (&others * &a.pow(*m as u32 - 1)).scale(*m as f64);
            for l in 0..a.degree().unwrap_or(0) {
                for (i, &c) in base.coeffs().iter().enumerate() {
                    if i + l < n {
                        jac[(i + l, col)] += c;
                    }
                }
                col += 1;
            }
        }
        let res = DVector::from_iterator(n, (0..n).map(|i| f.coeff(i) - full.coeff(i)));
        let Ok(step) = jac.svd(true, true).solve(&res, 1e-15) else {
            break;
        };
        let mut col = 0;
        let next: Vec<(ParamPoly, usize)> = current
            .iter()
            .map(|(a, m)| {
                let mut c = a.coeffs().to_vec();
                for cl in c.iter_mut().take(a.degree().unwrap_or(0)) {
                    *cl += step[col];
                    col += 1;
                }
                (ParamPoly::new(c), *m)
            })
            .collect();
        let err2 = residual(&next);
        if !(err2 < err) {
            break;
        }
        let gain = err / err2;
        current = next;
        err = err2;
        if gain < 1.5 {
            break;
        }
    }
    current
}

/// One point of a divisor: a real root and its multiplicity.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DivisorEntry {
    pub root: f64,
    pub mult: usize,
}

/// Real zero divisor: distinct roots with positive multiplicities, listed in
/// trajectory order (increasing `u` unless [`Divisor::reversed`]).
#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Divisor {
    entries: Vec<DivisorEntry>,
}

impl Divisor {
    /// Builds a divisor, sorting the entries by root.
    pub fn new(mut entries: Vec<DivisorEntry>) -> Result<Self> {
        entries.sort_by(|a, b| a.root.total_cmp(&b.root));
        if entries.iter().any(|e| e.mult == 0 || !e.root.is_finite()) {
            return Err(Error::InvalidSpec(
                "divisor entries need finite roots and mult >= 1".into(),
            ));
        }
        if entries.windows(2).any(|w| w[0].root >= w[1].root) {
            return Err(Error::InvalidSpec("divisor roots must be distinct".into()));
        }
        Ok(Divisor { entries })
    }

    pub fn empty() -> Self {
        Divisor {
            entries: Vec::new(),
        }
    }

    pub fn entries(&self) -> &[DivisorEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Sum of multiplicities.
    pub fn degree(&self) -> usize {
        self.entries.iter().map(|e| e.mult).sum()
    }

    pub fn roots(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.root).collect()
    }

    pub fn mults(&self) -> Vec<usize> {
        self.entries.iter().map(|e| e.mult).collect()
    }

    /// The same points in decreasing `u` order.
    pub fn reversed(&self) -> Divisor {
        Divisor {
            entries: self.entries.iter().rev().copied().collect(),
        }
    }

    /// Entries whose roots lie in the open interval `(lo, hi)`.
    pub fn restrict(&self, lo: f64, hi: f64) -> Divisor {
        Divisor {
            entries: self
                .entries
                .iter()
                .copied()
                .filter(|e| e.root > lo && e.root < hi)
                .collect(),
        }
    }

    /// Multiplicity of the root closest to `u` within `dist`, or 0.
    pub fn mult_near(&self, u: f64, dist: f64) -> usize {
        self.entries
            .iter()
            .filter(|e| (e.root - u).abs() <= dist)
            .min_by(|a, b| (a.root - u).abs().total_cmp(&(b.root - u).abs()))
            .map_or(0, |e| e.mult)
    }
}

/// Real roots of the sign-changing kind, via recursive critical-point
/// bracketing inside the Cauchy bound followed by bisection.
///
/// For a square-free input these are all of its real roots.
pub fn sign_change_roots(p: &ParamPoly) -> Vec<f64> {
    match p.degree() {
        None | Some(0) => Vec::new(),
        Some(1) => vec![-p.coeffs[0] / p.coeffs[1]],
        Some(_) => {
            let bound = p.cauchy_bound();
            let mut breaks = vec![-bound];
            breaks.extend(
                sign_change_roots(&p.derivative(1))
                    .into_iter()
                    .filter(|c| c.abs() < bound),
            );
            breaks.push(bound);
            let vals: Vec<f64> = breaks.iter().map(|&b| p.eval(b)).collect();
            let mut roots = Vec::new();
            for i in 0..breaks.len() {
                if vals[i] == 0.0 && i > 0 && i + 1 < breaks.len() {
                    roots.push(breaks[i]);
                }
                if i + 1 < breaks.len() && vals[i] * vals[i + 1] < 0.0 {
                    roots.push(bisect(p, breaks[i], breaks[i + 1], vals[i]));
                }
            }
            roots.sort_by(f64::total_cmp);
            roots.dedup();
            roots
        }
    }
}

fn bisect(p: &ParamPoly, mut lo: f64, mut hi: f64, flo: f64) -> f64 {
    let lo_neg = flo < 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = p.eval(mid);
        if fm == 0.0 {
            return mid;
        }
        if (fm < 0.0) == lo_neg {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (flo, fhi) = (p.eval(lo).abs(), p.eval(hi).abs());
    if flo <= fhi {
        lo
    } else {
        hi
    }
}

/// All real roots of `p` with multiplicities.
///
/// Multiplicities come from the square-free decomposition; each square-free
/// factor is isolated by [`sign_change_roots`]. Roots from different factors
/// closer than `CLUSTER_TOL * (1 + cauchy_bound)` are merged and their
/// multiplicities added.
pub fn real_roots_with_mult(p: &ParamPoly, tol: f64) -> Result<Divisor> {
    if p.is_zero() {
        return Err(Error::DegenerateInput(
            "zero polynomial has no divisor".into(),
        ));
    }
    if !(tol > 0.0) {
        return Err(Error::DegenerateInput(format!(
            "root tolerance must be positive, got {tol}"
        )));
    }
    let factors = squarefree_decompose(p)?;
    let mut found: Vec<DivisorEntry> = Vec::new();
    for (f, mult) in &factors {
        for r in sign_change_roots(f) {
            found.push(DivisorEntry {
                root: polish(f, r, tol),
                mult: *mult,
            });
        }
    }
    found.sort_by(|a, b| a.root.total_cmp(&b.root));
    let merge = CLUSTER_TOL * (1.0 + p.cauchy_bound());
    let mut merged: Vec<DivisorEntry> = Vec::with_capacity(found.len());
    for e in found {
        match merged.last_mut() {
            Some(last) if e.root - last.root < merge => {
                if e.mult > last.mult {
                    last.root = e.root;
                }
                last.mult += e.mult;
            }
            _ => merged.push(e),
        }
    }
    Ok(Divisor { entries: merged })
}

/// A couple of Newton steps on a simple root, kept only if the residual drops.
fn polish(f: &ParamPoly, r: f64, tol: f64) -> f64 {
    let df = f.derivative(1);
    let mut best = r;
    let mut best_res = f.eval(r).abs();
    if best_res <= tol * f.abs_eval(r) * 1e-3 {
        return best;
    }
    let mut x = r;
    for _ in 0..3 {
        let d = df.eval(x);
        if d == 0.0 {
            break;
        }
        x -= f.eval(x) / d;
        let res = f.eval(x).abs();
        if res < best_res && (x - r).abs() <= 1e-6 * (1.0 + r.abs()) {
            best = x;
            best_res = res;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len()
            && a.iter()
                .zip(b)
                .all(|(x, y)| (x - y).abs() <= tol * (1.0 + y.abs()))
    }

    #[test]
    fn derivative_examples() {
        assert_eq!(
            ParamPoly::monomial(1.0, 4).derivative(2),
            ParamPoly::monomial(12.0, 2)
        );
        let p = ParamPoly::new(vec![5.0, 0.0, 1.0]);
        assert_eq!(p.derivative(0), p);
        let q = ParamPoly::new(vec![1.0, 2.0, 0.0, 1.0]);
        assert_eq!(q.derivative(1), ParamPoly::new(vec![2.0, 0.0, 3.0]));
        assert!(q.derivative(4).is_zero());
    }

    #[test]
    fn trailing_zeros_trimmed() {
        let p = ParamPoly::new(vec![1.0, 2.0, 0.0, 0.0]);
        assert_eq!(p.degree(), Some(1));
        assert_eq!(ParamPoly::new(vec![0.0]).degree(), None);
    }

    #[test]
    fn squarefree_examples() {
        // u^2 (u - 1)
        let p = ParamPoly::new(vec![0.0, 0.0, -1.0, 1.0]);
        let f = squarefree_decompose(&p).unwrap();
        assert_eq!(f.len(), 2);
        assert_eq!(f[0].1, 1);
        assert!(close(f[0].0.coeffs(), &[-1.0, 1.0], 1e-12));
        assert_eq!(f[1].1, 2);
        assert!(close(f[1].0.coeffs(), &[0.0, 1.0], 1e-12));

        let p = ParamPoly::new(vec![1.0, 0.0, 1.0]);
        let f = squarefree_decompose(&p).unwrap();
        assert_eq!(f, vec![(p.clone(), 1)]);

        // (u-1)^2 (u+2)^2 = u^4 + 2u^3 - 3u^2 - 4u + 4
        let p = ParamPoly::new(vec![4.0, -4.0, -3.0, 2.0, 1.0]);
        let f = squarefree_decompose(&p).unwrap();
        assert_eq!(f.len(), 1);
        assert_eq!(f[0].1, 2);
        // (u-1)(u+2) = u^2 + u - 2
        assert!(close(f[0].0.coeffs(), &[-2.0, 1.0, 1.0], 1e-12));
    }

    #[test]
    fn squarefree_rejects_zero() {
        assert!(matches!(
            squarefree_decompose(&ParamPoly::zero()),
            Err(Error::DegenerateInput(_))
        ));
    }

    #[test]
    fn root_examples() {
        let d = real_roots_with_mult(&ParamPoly::new(vec![0.0, 0.0, 1.0]), ROOT_TOL).unwrap();
        assert_eq!(d.mults(), vec![2]);
        assert!(d.roots()[0].abs() < 1e-12);

        let d = real_roots_with_mult(&ParamPoly::new(vec![1.0, 0.0, 1.0]), ROOT_TOL).unwrap();
        assert!(d.is_empty());

        let d = real_roots_with_mult(&ParamPoly::new(vec![0.0, 0.0, -1.0, 0.0, 1.0]), ROOT_TOL)
            .unwrap();
        assert_eq!(d.mults(), vec![1, 2, 1]);
        assert!(close(&d.roots(), &[-1.0, 0.0, 1.0], 1e-12));
    }

    #[test]
    fn roots_reject_zero_polynomial() {
        assert!(matches!(
            real_roots_with_mult(&ParamPoly::zero(), 1e-12),
            Err(Error::DegenerateInput(_))
        ));
    }

    #[test]
    fn jet_examples() {
        assert_eq!(
            jet_at(&ParamPoly::new(vec![0.0, 0.0, 1.0]), 1.0, 2),
            vec![1.0, 2.0, 2.0]
        );
        assert_eq!(
            jet_at(&ParamPoly::new(vec![1.0, 2.0, 0.0, 1.0]), 0.0, 3),
            vec![1.0, 2.0, 0.0, 6.0]
        );
        assert_eq!(
            jet_at(&ParamPoly::new(vec![0.0, 0.0, -1.0, 0.0, 1.0]), 0.0, 2),
            vec![0.0, 0.0, -2.0]
        );
    }

    #[test]
    fn shift_matches_evaluation() {
        let p = ParamPoly::new(vec![1.0, -3.0, 0.5, 2.0]);
        let q = p.shift(0.75);
        for u in [-1.0, 0.0, 0.3, 2.0] {
            assert!((q.eval(u) - p.eval(u + 0.75)).abs() < 1e-12);
        }
    }

    #[test]
    fn div_rem_reconstructs() {
        let a = ParamPoly::new(vec![3.0, 1.0, -2.0, 0.0, 1.0]);
        let b = ParamPoly::new(vec![1.0, 1.0, 2.0]);
        let (q, r) = a.div_rem(&b);
        let back = &(&q * &b) + &r;
        assert!(close(back.coeffs(), a.coeffs(), 1e-12));
        assert!(r.degree() < b.degree());
    }

    #[test]
    fn display_is_readable() {
        assert_eq!(
            ParamPoly::new(vec![1.0, 2.0, 0.0, 1.0]).to_string(),
            "u^3 + 2u + 1"
        );
        assert_eq!(
            ParamPoly::new(vec![0.0, 0.0, -1.0, 0.0, 1.0]).to_string(),
            "u^4 - u^2"
        );
    }

    #[test]
    fn json_forms() {
        let p: ParamPoly = serde_json::from_str(r#"{"coeffs":[1,2,0,0]}"#).unwrap();
        assert_eq!(p.degree(), Some(1));
        let d = Divisor::new(vec![DivisorEntry { root: 0.5, mult: 2 }]).unwrap();
        assert_eq!(
            serde_json::to_string(&d).unwrap(),
            r#"[{"root":0.5,"mult":2}]"#
        );
    }
}
