//! Truncated multivariate Taylor jets and the operations built on them:
//! the psi-chain of Lie derivatives, boundary multiplicity, the `M(z)` rank
//! test and field reconstruction from a chain of functions.
//!
//! A smooth function is supplied as a [`SmoothHandle`]: anything that can
//! produce its Taylor jet at a point. Polynomials ([`MultiPoly`]) and
//! closures over jet arithmetic ([`JetFn`]) are exact; [`FiniteDifference`]
//! wraps a plain point evaluator and is lower accuracy.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::models::{Sign, StratumLabel};
use crate::polyparam::ParamPoly;

/// Default relative threshold below which a chain entry counts as zero.
pub const DEFAULT_PSI_TOL: f64 = 1e-9;

// ---------------------------------------------------------------------------
// Monomial tables

struct Table {
    nvars: usize,
    order: usize,
    exps: Vec<Vec<u8>>,
    degs: Vec<usize>,
    index: HashMap<Vec<u8>, usize>,
    products: OnceLock<Vec<(u32, u32, u32)>>,
}

impl Table {
    fn build(nvars: usize, order: usize) -> Table {
        let mut exps = Vec::new();
        let mut degs = Vec::new();
        for d in 0..=order {
            let mut cur = vec![0u8; nvars];
            compositions(nvars, d, 0, &mut cur, &mut exps);
            degs.resize(exps.len(), d);
        }
        let index = exps
            .iter()
            .cloned()
            .enumerate()
            .map(|(i, e)| (e, i))
            .collect();
        Table {
            nvars,
            order,
            exps,
            degs,
            index,
            products: OnceLock::new(),
        }
    }

    fn len(&self) -> usize {
        self.exps.len()
    }

    /// `(a, b, a*b)` index triples with total degree within the order.
    fn products(&self) -> &[(u32, u32, u32)] {
        self.products.get_or_init(|| {
            let mut out = Vec::new();
            let mut sum = vec![0u8; self.nvars];
            for a in 0..self.len() {
                for b in 0..self.len() {
                    if self.degs[a] + self.degs[b] > self.order {
                        // degs is sorted, nothing further for this a.
                        break;
                    }
                    for v in 0..self.nvars {
                        sum[v] = self.exps[a][v] + self.exps[b][v];
                    }
                    out.push((a as u32, b as u32, self.index[&sum] as u32));
                }
            }
            out
        })
    }
}

/// All exponent vectors of total degree `d`, in a fixed lexicographic order.
fn compositions(nvars: usize, d: usize, pos: usize, cur: &mut Vec<u8>, out: &mut Vec<Vec<u8>>) {
    if nvars == 0 {
        if d == 0 {
            out.push(Vec::new());
        }
        return;
    }
    if pos == nvars - 1 {
        cur[pos] = d as u8;
        out.push(cur.clone());
        cur[pos] = 0;
        return;
    }
    for k in (0..=d).rev() {
        cur[pos] = k as u8;
        compositions(nvars, d - k, pos + 1, cur, out);
    }
    cur[pos] = 0;
}

fn table(nvars: usize, order: usize) -> Arc<Table> {
    static TABLES: OnceLock<Mutex<HashMap<(usize, usize), Arc<Table>>>> = OnceLock::new();
    let mut map = TABLES.get_or_init(Default::default).lock().unwrap();
    map.entry((nvars, order))
        .or_insert_with(|| Arc::new(Table::build(nvars, order)))
        .clone()
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

// ---------------------------------------------------------------------------
// Jet

/// Taylor polynomial of a function at a point, truncated at total degree
/// `order`. Coefficient of `h^e` is `d^e f / e!`.
#[derive(Clone)]
pub struct Jet {
    table: Arc<Table>,
    c: Vec<f64>,
}

impl fmt::Debug for Jet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut m = f.debug_map();
        for (e, c) in self.table.exps.iter().zip(&self.c) {
            if *c != 0.0 {
                m.entry(e, c);
            }
        }
        m.finish()
    }
}

impl Jet {
    pub fn constant(nvars: usize, order: usize, value: f64) -> Jet {
        let t = table(nvars, order);
        let mut c = vec![0.0; t.len()];
        c[0] = value;
        Jet { table: t, c }
    }

    /// The coordinate function `x_i` expanded at `x_i = at`.
    pub fn variable(nvars: usize, order: usize, i: usize, at: f64) -> Jet {
        let mut j = Jet::constant(nvars, order, at);
        if order >= 1 {
            let mut e = vec![0u8; nvars];
            e[i] = 1;
            let idx = j.table.index[&e];
            j.c[idx] = 1.0;
        }
        j
    }

    /// Build from a coefficient callback over exponent vectors.
    pub fn from_fn(nvars: usize, order: usize, mut f: impl FnMut(&[u8]) -> f64) -> Jet {
        let t = table(nvars, order);
        let c = t.exps.iter().map(|e| f(e)).collect();
        Jet { table: t, c }
    }

    pub fn nvars(&self) -> usize {
        self.table.nvars
    }

    pub fn order(&self) -> usize {
        self.table.order
    }

    pub fn value(&self) -> f64 {
        self.c[0]
    }

    /// Taylor coefficient of `h^e`; zero beyond the order.
    pub fn coeff(&self, e: &[u8]) -> f64 {
        self.table.index.get(e).map_or(0.0, |&i| self.c[i])
    }

    /// Mixed partial derivative `d^e f` at the expansion point.
    pub fn derivative(&self, e: &[u8]) -> f64 {
        self.coeff(e) * e.iter().map(|&k| factorial(k as usize)).product::<f64>()
    }

    pub fn max_abs(&self) -> f64 {
        self.c.iter().fold(0.0_f64, |m, c| m.max(c.abs()))
    }

    pub fn truncate(&self, order: usize) -> Jet {
        if order >= self.order() {
            return self.clone();
        }
        let t = table(self.nvars(), order);
        let c = self.c[..t.len()].to_vec();
        Jet { table: t, c }
    }

    fn aligned<'a>(&'a self, other: &'a Jet) -> (Jet, Jet) {
        assert_eq!(
            self.nvars(),
            other.nvars(),
            "jets over different variable counts"
        );
        let o = self.order().min(other.order());
        (self.truncate(o), other.truncate(o))
    }

    pub fn scale(&self, s: f64) -> Jet {
        Jet {
            table: self.table.clone(),
            c: self.c.iter().map(|c| c * s).collect(),
        }
    }

    pub fn add_scalar(&self, s: f64) -> Jet {
        let mut j = self.clone();
        j.c[0] += s;
        j
    }

    /// `d/dx_i`; the result has order one less.
    pub fn partial(&self, i: usize) -> Jet {
        let o = self.order();
        if o == 0 {
            return Jet::constant(self.nvars(), 0, 0.0);
        }
        let t = table(self.nvars(), o - 1);
        let mut up = vec![0u8; self.nvars()];
        let c = t
            .exps
            .iter()
            .map(|e| {
                up.copy_from_slice(e);
                up[i] += 1;
                (e[i] as f64 + 1.0) * self.c[self.table.index[&up]]
            })
            .collect();
        Jet { table: t, c }
    }

    /// `f(self)` for a univariate `f` given its derivatives `f^(k)(value)`.
    pub fn compose(&self, derivs: &[f64]) -> Jet {
        let mut dx = self.clone();
        dx.c[0] = 0.0;
        let mut out = Jet::constant(
            self.nvars(),
            self.order(),
            derivs.first().copied().unwrap_or(0.0),
        );
        let mut power = Jet::constant(self.nvars(), self.order(), 1.0);
        for (k, d) in derivs.iter().enumerate().skip(1).take(self.order()) {
            power = &power * &dx;
            out = &out + &power.scale(d / factorial(k));
        }
        out
    }

    pub fn exp(&self) -> Jet {
        let e = self.value().exp();
        self.compose(&vec![e; self.order() + 1])
    }

    pub fn sin(&self) -> Jet {
        let (s, c) = self.value().sin_cos();
        let cyc = [s, c, -s, -c];
        self.compose(&(0..=self.order()).map(|k| cyc[k % 4]).collect::<Vec<_>>())
    }

    pub fn cos(&self) -> Jet {
        let (s, c) = self.value().sin_cos();
        let cyc = [c, -s, -c, s];
        self.compose(&(0..=self.order()).map(|k| cyc[k % 4]).collect::<Vec<_>>())
    }

    pub fn recip(&self) -> Jet {
        let a = self.value();
        let d: Vec<f64> = (0..=self.order())
            .map(|k| if k % 2 == 0 { 1.0 } else { -1.0 } * factorial(k) / a.powi(k as i32 + 1))
            .collect();
        self.compose(&d)
    }

    pub fn powi(&self, k: u32) -> Jet {
        let mut out = Jet::constant(self.nvars(), self.order(), 1.0);
        for _ in 0..k {
            out = &out * self;
        }
        out
    }
}

impl Add for &Jet {
    type Output = Jet;
    fn add(self, rhs: &Jet) -> Jet {
        let (mut a, b) = self.aligned(rhs);
        a.c.iter_mut().zip(&b.c).for_each(|(x, y)| *x += y);
        a
    }
}

impl Sub for &Jet {
    type Output = Jet;
    fn sub(self, rhs: &Jet) -> Jet {
        let (mut a, b) = self.aligned(rhs);
        a.c.iter_mut().zip(&b.c).for_each(|(x, y)| *x -= y);
        a
    }
}

impl Mul for &Jet {
    type Output = Jet;
    fn mul(self, rhs: &Jet) -> Jet {
        let (a, b) = self.aligned(rhs);
        let mut c = vec![0.0; a.c.len()];
        for &(i, j, k) in a.table.products() {
            c[k as usize] += a.c[i as usize] * b.c[j as usize];
        }
        Jet { table: a.table, c }
    }
}

impl Neg for &Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

// ---------------------------------------------------------------------------
// MultiPoly

/// Sparse real polynomial in `nvars` variables.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MultiPolyRepr", into = "MultiPolyRepr")]
pub struct MultiPoly {
    nvars: usize,
    terms: BTreeMap<Vec<u32>, f64>,
}

#[derive(Serialize, Deserialize)]
struct MultiPolyRepr {
    nvars: usize,
    terms: Vec<TermRepr>,
}

#[derive(Serialize, Deserialize)]
struct TermRepr {
    coef: f64,
    exp: Vec<u32>,
}

impl TryFrom<MultiPolyRepr> for MultiPoly {
    type Error = Error;
    fn try_from(r: MultiPolyRepr) -> Result<Self> {
        if let Some(t) = r.terms.iter().find(|t| t.exp.len() != r.nvars) {
            return Err(Error::InvalidSpec(format!(
                "term exponent {:?} has length {}, expected {}",
                t.exp,
                t.exp.len(),
                r.nvars
            )));
        }
        Ok(MultiPoly::from_terms(
            r.nvars,
            r.terms.into_iter().map(|t| (t.exp, t.coef)),
        ))
    }
}

impl From<MultiPoly> for MultiPolyRepr {
    fn from(p: MultiPoly) -> Self {
        MultiPolyRepr {
            nvars: p.nvars,
            terms: p
                .terms
                .into_iter()
                .map(|(exp, coef)| TermRepr { coef, exp })
                .collect(),
        }
    }
}

impl fmt::Debug for MultiPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "MultiPoly[{}]{:?}", self.nvars, self.terms)
    }
}

impl MultiPoly {
    pub fn zero(nvars: usize) -> Self {
        MultiPoly {
            nvars,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(nvars: usize, c: f64) -> Self {
        Self::monomial(nvars, c, vec![0; nvars])
    }

    pub fn var(nvars: usize, i: usize) -> Self {
        let mut e = vec![0; nvars];
        e[i] = 1;
        Self::monomial(nvars, 1.0, e)
    }

    pub fn monomial(nvars: usize, coef: f64, exp: Vec<u32>) -> Self {
        Self::from_terms(nvars, [(exp, coef)])
    }

    /// Sums repeated exponents and drops zero coefficients.
    pub fn from_terms(nvars: usize, terms: impl IntoIterator<Item = (Vec<u32>, f64)>) -> Self {
        let mut map: BTreeMap<Vec<u32>, f64> = BTreeMap::new();
        for (e, c) in terms {
            assert_eq!(e.len(), nvars, "exponent length mismatch");
            *map.entry(e).or_insert(0.0) += c;
        }
        map.retain(|_, c| *c != 0.0);
        MultiPoly { nvars, terms: map }
    }

    /// The univariate `p` in variable `var`.
    pub fn from_univariate(p: &ParamPoly, nvars: usize, var: usize) -> Self {
        Self::from_terms(
            nvars,
            p.coeffs().iter().enumerate().map(|(k, &c)| {
                let mut e = vec![0; nvars];
                e[var] = k as u32;
                (e, c)
            }),
        )
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn terms(&self) -> impl Iterator<Item = (&[u32], f64)> {
        self.terms.iter().map(|(e, &c)| (e.as_slice(), c))
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Total degree; `None` for the zero polynomial.
    pub fn degree(&self) -> Option<usize> {
        self.terms
            .keys()
            .map(|e| e.iter().sum::<u32>() as usize)
            .max()
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::from_terms(
            self.nvars,
            self.terms.iter().map(|(e, c)| (e.clone(), c * s)),
        )
    }

    pub fn pow(&self, k: u32) -> Self {
        let mut out = MultiPoly::constant(self.nvars, 1.0);
        for _ in 0..k {
            out = &out * self;
        }
        out
    }

    pub fn partial(&self, i: usize) -> Self {
        Self::from_terms(
            self.nvars,
            self.terms.iter().filter(|(e, _)| e[i] > 0).map(|(e, c)| {
                let mut d = e.clone();
                d[i] -= 1;
                (d, c * e[i] as f64)
            }),
        )
    }

    pub fn eval(&self, at: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(e, c)| {
                c * e
                    .iter()
                    .zip(at)
                    .map(|(&k, x)| x.powi(k as i32))
                    .product::<f64>()
            })
            .sum()
    }

    /// `<grad self, field>`.
    pub fn lie_derivative(&self, field: &[MultiPoly]) -> Result<Self> {
        if field.len() != self.nvars || field.iter().any(|f| f.nvars != self.nvars) {
            return Err(Error::InvalidSpec(format!(
                "field of {} components on {} variables",
                field.len(),
                self.nvars
            )));
        }
        Ok(field
            .iter()
            .enumerate()
            .fold(MultiPoly::zero(self.nvars), |acc, (i, f)| {
                &acc + &(&self.partial(i) * f)
            }))
    }

    /// Taylor jet at `at`, evaluated with jet arithmetic.
    pub fn jet(&self, at: &[f64], order: usize) -> Jet {
        let n = self.nvars;
        let vars: Vec<Jet> = (0..n).map(|i| Jet::variable(n, order, i, at[i])).collect();
        let mut powers: Vec<Vec<Jet>> = vars
            .iter()
            .map(|v| vec![Jet::constant(n, order, 1.0), v.clone()])
            .collect();
        let mut out = Jet::constant(n, order, 0.0);
        for (e, c) in &self.terms {
            let mut t = Jet::constant(n, order, *c);
            for (i, &k) in e.iter().enumerate() {
                while powers[i].len() <= k as usize {
                    let next = powers[i].last().unwrap() * &vars[i];
                    powers[i].push(next);
                }
                if k > 0 {
                    t = &t * &powers[i][k as usize];
                }
            }
            out = &out + &t;
        }
        out
    }
}

impl Add for &MultiPoly {
    type Output = MultiPoly;
    fn add(self, rhs: &MultiPoly) -> MultiPoly {
        assert_eq!(self.nvars, rhs.nvars);
        MultiPoly::from_terms(
            self.nvars,
            self.terms
                .iter()
                .chain(&rhs.terms)
                .map(|(e, c)| (e.clone(), *c)),
        )
    }
}

impl Sub for &MultiPoly {
    type Output = MultiPoly;
    fn sub(self, rhs: &MultiPoly) -> MultiPoly {
        self + &(-rhs)
    }
}

impl Neg for &MultiPoly {
    type Output = MultiPoly;
    fn neg(self) -> MultiPoly {
        self.scale(-1.0)
    }
}

impl Mul for &MultiPoly {
    type Output = MultiPoly;
    fn mul(self, rhs: &MultiPoly) -> MultiPoly {
        assert_eq!(self.nvars, rhs.nvars);
        let mut terms = Vec::with_capacity(self.terms.len() * rhs.terms.len());
        for (a, ca) in &self.terms {
            for (b, cb) in &rhs.terms {
                terms.push((a.iter().zip(b).map(|(x, y)| x + y).collect(), ca * cb));
            }
        }
        MultiPoly::from_terms(self.nvars, terms)
    }
}

// ---------------------------------------------------------------------------
// Handles

/// A smooth scalar function on a chart that can report its Taylor jet.
pub trait SmoothHandle: Sync {
    fn nvars(&self) -> usize;

    /// Highest derivative order the handle can deliver.
    fn max_order(&self) -> usize {
        usize::MAX
    }

    fn taylor(&self, at: &[f64], order: usize) -> Result<Jet>;
}

fn check_budget(h: &dyn SmoothHandle, order: usize) -> Result<()> {
    if order > h.max_order() {
        return Err(Error::OrderBudgetExceeded {
            requested: order,
            max: h.max_order(),
        });
    }
    Ok(())
}

impl SmoothHandle for MultiPoly {
    fn nvars(&self) -> usize {
        self.nvars
    }

    fn taylor(&self, at: &[f64], order: usize) -> Result<Jet> {
        Ok(self.jet(at, order))
    }
}

/// A closed form written in jet arithmetic: receives the coordinate jets and
/// returns the jet of the function.
pub struct JetFn<F> {
    nvars: usize,
    f: F,
}

impl<F: Fn(&[Jet]) -> Jet + Sync> JetFn<F> {
    pub fn new(nvars: usize, f: F) -> Self {
        JetFn { nvars, f }
    }
}

impl<F: Fn(&[Jet]) -> Jet + Sync> SmoothHandle for JetFn<F> {
    fn nvars(&self) -> usize {
        self.nvars
    }

    fn taylor(&self, at: &[f64], order: usize) -> Result<Jet> {
        let vars: Vec<Jet> = (0..self.nvars)
            .map(|i| Jet::variable(self.nvars, order, i, at[i]))
            .collect();
        Ok((self.f)(&vars))
    }
}

/// Black-box point evaluator differentiated by tensor-product central
/// differences with one Richardson step. Step for a derivative of total
/// order `k` is `eps^(1/(k+4)) * (1 + |a_i|)` per coordinate.
pub struct FiniteDifference<F> {
    nvars: usize,
    max_order: usize,
    f: F,
}

impl<F: Fn(&[f64]) -> f64 + Sync> FiniteDifference<F> {
    pub fn new(nvars: usize, max_order: usize, f: F) -> Self {
        FiniteDifference {
            nvars,
            max_order,
            f,
        }
    }

    fn central(&self, at: &[f64], e: &[u8], h: &[f64]) -> f64 {
        // Stencil offsets (e_i/2 - j) h_i, weights (-1)^j C(e_i, j).
        let mut total = 0.0;
        let mut idx = vec![0usize; self.nvars];
        let mut pt = vec![0.0; self.nvars];
        loop {
            let mut w = 1.0;
            for v in 0..self.nvars {
                let (k, j) = (e[v] as usize, idx[v]);
                w *= binomial(k, j) * if j % 2 == 0 { 1.0 } else { -1.0 };
                pt[v] = at[v] + (k as f64 / 2.0 - j as f64) * h[v];
            }
            total += w * (self.f)(&pt);
            let mut v = 0;
            loop {
                if v == self.nvars {
                    let denom: f64 = (0..self.nvars).map(|v| h[v].powi(e[v] as i32)).product();
                    return total / denom;
                }
                idx[v] += 1;
                if idx[v] <= e[v] as usize {
                    break;
                }
                idx[v] = 0;
                v += 1;
            }
        }
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

impl<F: Fn(&[f64]) -> f64 + Sync> SmoothHandle for FiniteDifference<F> {
    fn nvars(&self) -> usize {
        self.nvars
    }

    fn max_order(&self) -> usize {
        self.max_order
    }

    fn taylor(&self, at: &[f64], order: usize) -> Result<Jet> {
        check_budget(self, order)?;
        Ok(Jet::from_fn(self.nvars, order, |e| {
            let k: usize = e.iter().map(|&x| x as usize).sum();
            if k == 0 {
                return (self.f)(at);
            }
            let base = f64::EPSILON.powf(1.0 / (k as f64 + 4.0));
            let h: Vec<f64> = at.iter().map(|a| base * (1.0 + a.abs())).collect();
            let h2: Vec<f64> = h.iter().map(|x| x / 2.0).collect();
            let d1 = self.central(at, e, &h);
            let d2 = self.central(at, e, &h2);
            let d = (4.0 * d2 - d1) / 3.0;
            d / e.iter().map(|&x| factorial(x as usize)).product::<f64>()
        }))
    }
}

// ---------------------------------------------------------------------------
// Operations

fn check_dims(field: &[&dyn SmoothHandle], z: &dyn SmoothHandle, a: &[f64]) -> Result<()> {
    let n = z.nvars();
    if a.len() != n || field.len() != n || field.iter().any(|v| v.nvars() != n) {
        return Err(Error::InvalidSpec(format!(
            "chart has {n} coordinates, point has {}, field has {} components",
            a.len(),
            field.len()
        )));
    }
    Ok(())
}

/// `(psi_0(a), ..., psi_depth(a))` with `psi_0 = z` and
/// `psi_k = <grad psi_{k-1}, v>`.
pub fn psi_chain(
    field: &[&dyn SmoothHandle],
    z: &dyn SmoothHandle,
    a: &[f64],
    depth: usize,
) -> Result<Vec<f64>> {
    check_dims(field, z, a)?;
    check_budget(z, depth)?;
    for v in field {
        check_budget(*v, depth.saturating_sub(1))?;
    }
    let mut psi = z.taylor(a, depth)?;
    let vj = field
        .iter()
        .map(|v| v.taylor(a, depth.saturating_sub(1)))
        .collect::<Result<Vec<_>>>()?;
    let mut out = vec![psi.value()];
    for _ in 0..depth {
        let o = psi.order() - 1;
        let mut next = Jet::constant(a.len(), o, 0.0);
        for (i, v) in vj.iter().enumerate() {
            next = &next + &(&v.truncate(o) * &psi.partial(i));
        }
        psi = next;
        out.push(psi.value());
    }
    Ok(out)
}

/// Index of the first non-vanishing chain entry after `psi_0`, with the
/// relative threshold `tol * (1 + max |psi_l|)`.
fn first_nonvanishing(chain: &[f64], tol: f64) -> Result<usize> {
    let thr = tol * (1.0 + chain.iter().fold(0.0_f64, |m, x| m.max(x.abs())));
    if chain[0].abs() > thr {
        return Err(Error::NotOnBoundary {
            residual: chain[0].abs(),
            threshold: thr,
        });
    }
    chain
        .iter()
        .enumerate()
        .skip(1)
        .find(|(_, x)| x.abs() > thr)
        .map(|(k, _)| k)
        .ok_or(Error::NoFiniteOrder(chain.len() - 1))
}

/// Order of tangency at `a` of the trajectory of `v` with `{z = 0}`.
pub fn boundary_multiplicity(
    field: &[&dyn SmoothHandle],
    z: &dyn SmoothHandle,
    a: &[f64],
    max_order: usize,
    tol: f64,
) -> Result<usize> {
    let chain = psi_chain(field, z, a, max_order)?;
    first_nonvanishing(&chain, tol)
}

/// `(j, sign)` with sign plus iff `psi_j(a) >= 0`.
pub fn morse_label_general(
    field: &[&dyn SmoothHandle],
    z: &dyn SmoothHandle,
    a: &[f64],
    max_order: usize,
    tol: f64,
) -> Result<StratumLabel> {
    let chain = psi_chain(field, z, a, max_order)?;
    let j = first_nonvanishing(&chain, tol)?;
    let sign = if chain[j] >= 0.0 {
        Sign::Plus
    } else {
        Sign::Minus
    };
    Ok(StratumLabel { j, sign })
}

/// Result of [`rank_equality_check`].
#[derive(Clone, Debug, Serialize)]
pub struct RankReport {
    pub rank: usize,
    pub rows: usize,
    pub cols: usize,
    pub singular_values: Vec<f64>,
    #[serde(skip)]
    pub matrix: DMatrix<f64>,
}

/// Numerical rank of `M(z)`, rows `d^{l+1} z / du^l dy_m` at `(alpha_i, 0)`
/// for `l <= k_i - 2`, on the chart `(u, y_1..y_n)`. Singular values count
/// when above `tol * max(sigma_max, max |jet of z|)`.
pub fn rank_equality_check(
    z: &dyn SmoothHandle,
    alphas: &[f64],
    k_list: &[usize],
    tol: f64,
) -> Result<RankReport> {
    let nv = z.nvars();
    if nv < 2 {
        return Err(Error::InvalidSpec(
            "chart needs u and at least one y coordinate".into(),
        ));
    }
    if alphas.len() != k_list.len() || k_list.contains(&0) {
        return Err(Error::InvalidSpec(
            "alphas and multiplicities must pair up, multiplicities >= 1".into(),
        ));
    }
    let n = nv - 1;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut scale = 0.0f64;
    for (&alpha, &k) in alphas.iter().zip(k_list) {
        let mut at = vec![0.0; nv];
        at[0] = alpha;
        let jet = z.taylor(&at, k)?;
        scale = scale.max(jet.max_abs());
        let mut e = vec![0u8; nv];
        let premise: Vec<f64> = (0..k)
            .map(|l| {
                e[0] = l as u8;
                jet.derivative(&e)
            })
            .collect();
        let thr = linalg::DEFAULT_RANK_TOL * (1.0 + jet.max_abs());
        if let Some(l) = premise.iter().position(|x| x.abs() > thr) {
            return Err(Error::PremiseViolated(format!(
                "d^{l}z/du^{l} = {:e} at u = {alpha}, expected vanishing to order {k}",
                premise[l]
            )));
        }
        for l in 0..k.saturating_sub(1) {
            let row = (1..=n)
                .map(|m| {
                    let mut e = vec![0u8; nv];
                    e[0] = l as u8;
                    e[m] = 1;
                    jet.derivative(&e)
                })
                .collect();
            rows.push(row);
        }
    }
    let matrix = DMatrix::from_fn(rows.len(), n, |r, c| rows[r][c]);
    let singular_values = linalg::singular_values(&matrix);
    // Relative to the jet of z as well, so that a matrix of pure roundoff
    // has rank 0.
    let floor = tol * singular_values.first().copied().unwrap_or(0.0).max(scale);
    let rank = singular_values.iter().filter(|&&s| s > floor).count();
    Ok(RankReport {
        rank,
        rows: rows.len(),
        cols: n,
        singular_values,
        matrix,
    })
}

/// Field value recovered at one grid point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldSample {
    pub point: Vec<f64>,
    pub field: Vec<f64>,
    pub residual: f64,
}

/// Output of [`reconstruct_field`]: solved points and points where the
/// gradient rank premise failed.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Reconstruction {
    pub samples: Vec<FieldSample>,
    pub degenerate: Vec<Degenerate>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Degenerate {
    pub point: Vec<f64>,
    pub rank: usize,
    pub expected: usize,
}

impl Degenerate {
    pub fn to_error(&self) -> Error {
        Error::RankDeficient {
            point: self.point.clone(),
            rank: self.rank,
            expected: self.expected,
        }
    }
}

impl Reconstruction {
    /// CSV with columns `x0..xn, v0..vn, residual`; degenerate points are not rows.
    pub fn to_csv(&self) -> String {
        let dim = self
            .samples
            .first()
            .map(|s| s.point.len())
            .or_else(|| self.degenerate.first().map(|d| d.point.len()))
            .unwrap_or(0);
        let mut out = String::new();
        let head: Vec<String> = (0..dim)
            .map(|i| format!("x{i}"))
            .chain((0..dim).map(|i| format!("v{i}")))
            .chain(["residual".to_string()])
            .collect();
        out.push_str(&head.join(","));
        out.push('\n');
        for s in &self.samples {
            let cells: Vec<String> = s
                .point
                .iter()
                .chain(&s.field)
                .map(|x| x.to_string())
                .chain([format!("{:e}", s.residual)])
                .collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

/// Solve `<grad theta_j, v> = theta_{j+1}`, `j = 0..n`, at each grid point
/// (Euclidean metric on the chart). `theta` holds `n + 2` functions on an
/// `(n+1)`-dimensional chart.
pub fn reconstruct_field(
    theta: &[&dyn SmoothHandle],
    grid: &[Vec<f64>],
    tol: f64,
) -> Result<Reconstruction> {
    let dim = theta.first().map_or(0, |t| t.nvars());
    if dim == 0 || theta.len() != dim + 1 || theta.iter().any(|t| t.nvars() != dim) {
        return Err(Error::InvalidSpec(format!(
            "need n+2 functions on an (n+1)-chart, got {} on {dim}",
            theta.len()
        )));
    }
    if let Some(p) = grid.iter().find(|p| p.len() != dim) {
        return Err(Error::InvalidSpec(format!(
            "grid point {p:?} is not {dim}-dimensional"
        )));
    }
    let results: Vec<Result<std::result::Result<FieldSample, Degenerate>>> = grid
        .par_iter()
        .map(|p| {
            let jets = theta
                .iter()
                .map(|t| t.taylor(p, 1))
                .collect::<Result<Vec<_>>>()?;
            let g = DMatrix::from_fn(dim, dim, |r, c| {
                let mut e = vec![0u8; dim];
                e[c] = 1;
                jets[r].derivative(&e)
            });
            let rhs = DVector::from_fn(dim, |r, _| jets[r + 1].value());
            let rank = linalg::numerical_rank(&g, tol);
            if rank < dim {
                return Ok(Err(Degenerate {
                    point: p.clone(),
                    rank,
                    expected: dim,
                }));
            }
            let v = g
                .clone()
                .lu()
                .solve(&rhs)
                .ok_or_else(|| Error::RankDeficient {
                    point: p.clone(),
                    rank,
                    expected: dim,
                })?;
            let residual = (&g * &v - &rhs).amax();
            Ok(Ok(FieldSample {
                point: p.clone(),
                field: v.iter().copied().collect(),
                residual,
            }))
        })
        .collect();
    let mut out = Reconstruction::default();
    for r in results {
        match r? {
            Ok(s) => out.samples.push(s),
            Err(d) => out.degenerate.push(d),
        }
    }
    Ok(out)
}

/// `theta_0 = z`, `theta_{k+1} = <grad theta_k, v>`, symbolically.
pub fn theta_chain(field: &[MultiPoly], z: &MultiPoly, len: usize) -> Result<Vec<MultiPoly>> {
    let mut out = vec![z.clone()];
    while out.len() < len {
        let next = out.last().unwrap().lie_derivative(field)?;
        out.push(next);
    }
    Ok(out)
}
