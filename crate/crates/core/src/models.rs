//! Local models: the Morin polynomial `P_s = u^s + sum_{i<=s-2} x_i u^i` and
//! the product model `prod_i [(u - a_i)^{j_i} + sum_{l<=j_i-2} x_{i,l} (u - a_i)^l]`,
//! each paired with one of four sign/orientation variants.
//!
//! Chart coordinates are `(u, x)`: `u` runs along the constant field
//! `+-d/du`, the `x` are the polynomial's free coefficients.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jets::MultiPoly;
use crate::linalg;
use crate::polyparam::ParamPoly;

/// Relative band for boundary membership: `|P| <= BOUNDARY_TOL * (1 + |coeffs|_inf)`.
pub const BOUNDARY_TOL: f64 = 1e-9;

/// Default relative threshold for vanishing derivatives in [`stratum_index`].
pub const STRATUM_TOL: f64 = 1e-8;

/// Sign of the defining inequality and direction of the field.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Variant {
    /// `X = {P >= 0}`, `v = +e`.
    PgeqEplus,
    /// `X = {P <= 0}`, `v = +e`.
    PleqEplus,
    /// `X = {P >= 0}`, `v = -e`.
    PgeqEminus,
    /// `X = {P <= 0}`, `v = -e`.
    PleqEminus,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::PgeqEplus,
        Variant::PleqEplus,
        Variant::PgeqEminus,
        Variant::PleqEminus,
    ];

    pub fn is_geq(self) -> bool {
        matches!(self, Variant::PgeqEplus | Variant::PgeqEminus)
    }

    pub fn field_positive(self) -> bool {
        matches!(self, Variant::PgeqEplus | Variant::PleqEplus)
    }

    /// Same inequality, opposite field.
    pub fn flip_field(self) -> Variant {
        match self {
            Variant::PgeqEplus => Variant::PgeqEminus,
            Variant::PleqEplus => Variant::PleqEminus,
            Variant::PgeqEminus => Variant::PgeqEplus,
            Variant::PleqEminus => Variant::PleqEplus,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::PgeqEplus => "PgeqEplus",
            Variant::PleqEplus => "PleqEplus",
            Variant::PgeqEminus => "PgeqEminus",
            Variant::PleqEminus => "PleqEminus",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Variant> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::InvalidSpec(format!("unknown variant {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sign {
    Plus,
    Minus,
    None,
}

/// Stratum `d_j X` with polarity; `j = 0` is the interior.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StratumLabel {
    pub j: usize,
    pub sign: Sign,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Membership {
    Interior,
    Boundary,
    Exterior,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProductFactor {
    pub alpha: f64,
    pub j: usize,
    pub x: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModelKind {
    Morin { s: usize, x: Vec<f64> },
    Product { factors: Vec<ProductFactor> },
}

/// A validated model. Deserialization validates too.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpec", into = "RawSpec")]
pub struct ModelSpec {
    kind: ModelKind,
    variant: Variant,
    n: usize,
}

#[derive(Serialize, Deserialize)]
struct RawSpec {
    #[serde(flatten)]
    kind: ModelKind,
    variant: Variant,
    n: usize,
}

impl TryFrom<RawSpec> for ModelSpec {
    type Error = Error;
    fn try_from(r: RawSpec) -> Result<Self> {
        ModelSpec::new(r.kind, r.variant, r.n)
    }
}

impl From<ModelSpec> for RawSpec {
    fn from(m: ModelSpec) -> Self {
        RawSpec {
            kind: m.kind,
            variant: m.variant,
            n: m.n,
        }
    }
}

impl ModelSpec {
    pub fn new(kind: ModelKind, variant: Variant, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidSpec("ambient n must be >= 1".into()));
        }
        match &kind {
            ModelKind::Morin { s, x } => {
                if *s == 0 || *s > n + 1 {
                    return Err(Error::InvalidSpec(format!(
                        "Morin type s = {s} outside [1, {}]",
                        n + 1
                    )));
                }
                if x.len() != s - 1 {
                    return Err(Error::InvalidSpec(format!(
                        "Morin type {s} needs {} coordinates, got {}",
                        s - 1,
                        x.len()
                    )));
                }
            }
            ModelKind::Product { factors } => {
                for f in factors {
                    if f.j == 0 {
                        return Err(Error::InvalidSpec(format!(
                            "factor at {} has multiplicity 0",
                            f.alpha
                        )));
                    }
                    if f.x.len() != f.j - 1 {
                        return Err(Error::InvalidSpec(format!(
                            "factor at {} with j = {} needs {} coordinates, got {}",
                            f.alpha,
                            f.j,
                            f.j - 1,
                            f.x.len()
                        )));
                    }
                }
                for w in factors.windows(2) {
                    if !(w[0].alpha < w[1].alpha) {
                        return Err(Error::InvalidSpec(format!(
                            "factor centers must be strictly increasing: {} then {}",
                            w[0].alpha, w[1].alpha
                        )));
                    }
                }
                let reduced: usize = factors.iter().map(|f| f.j - 1).sum();
                if reduced > n {
                    return Err(Error::InvalidSpec(format!(
                        "product needs {reduced} coordinates, ambient n = {n}"
                    )));
                }
            }
        }
        if kind_coords(&kind).iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidSpec("coordinates must be finite".into()));
        }
        Ok(ModelSpec { kind, variant, n })
    }

    pub fn morin(s: usize, x: Vec<f64>, variant: Variant, n: usize) -> Result<Self> {
        Self::new(ModelKind::Morin { s, x }, variant, n)
    }

    pub fn product(factors: Vec<ProductFactor>, variant: Variant, n: usize) -> Result<Self> {
        Self::new(ModelKind::Product { factors }, variant, n)
    }

    pub fn kind(&self) -> &ModelKind {
        &self.kind
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn with_variant(&self, variant: Variant) -> Self {
        ModelSpec {
            variant,
            ..self.clone()
        }
    }

    /// Degree of the model polynomial.
    pub fn degree(&self) -> usize {
        match &self.kind {
            ModelKind::Morin { s, .. } => *s,
            ModelKind::Product { factors } => factors.iter().map(|f| f.j).sum(),
        }
    }

    /// Flattened `x` coordinates (factor blocks in order for products).
    pub fn coords(&self) -> Vec<f64> {
        kind_coords(&self.kind)
    }

    /// The same model at other coordinates.
    pub fn with_coords(&self, coords: &[f64]) -> Result<Self> {
        let mut kind = self.kind.clone();
        let want = self.coords().len();
        if coords.len() != want {
            return Err(Error::InvalidSpec(format!(
                "expected {want} coordinates, got {}",
                coords.len()
            )));
        }
        match &mut kind {
            ModelKind::Morin { x, .. } => x.copy_from_slice(coords),
            ModelKind::Product { factors } => {
                let mut it = coords.iter();
                for f in factors {
                    for c in f.x.iter_mut() {
                        *c = *it.next().unwrap();
                    }
                }
            }
        }
        ModelSpec::new(kind, self.variant, self.n)
    }

    pub fn poly(&self) -> ParamPoly {
        match &self.kind {
            ModelKind::Morin { s, x } => &ParamPoly::new(x.clone()) + &ParamPoly::monomial(1.0, *s),
            ModelKind::Product { factors } => factors
                .iter()
                .fold(ParamPoly::constant(1.0), |acc, f| &acc * &factor_poly(f)),
        }
    }

    /// The polynomial as a list of factors: one per product block, or the
    /// whole Morin polynomial.
    pub fn factor_polys(&self) -> Vec<ParamPoly> {
        match &self.kind {
            ModelKind::Morin { .. } => vec![self.poly()],
            ModelKind::Product { factors } => factors.iter().map(factor_poly).collect(),
        }
    }

    /// `dP/dx_c` for each coordinate, as polynomials in `u`.
    pub fn coordinate_partials(&self) -> Vec<ParamPoly> {
        match &self.kind {
            ModelKind::Morin { s, .. } => (0..s - 1).map(|i| ParamPoly::monomial(1.0, i)).collect(),
            ModelKind::Product { factors } => {
                let polys: Vec<ParamPoly> = factors.iter().map(factor_poly).collect();
                let mut out = Vec::new();
                for (i, f) in factors.iter().enumerate() {
                    let others = polys
                        .iter()
                        .enumerate()
                        .filter(|(k, _)| *k != i)
                        .fold(ParamPoly::constant(1.0), |acc, (_, p)| &acc * p);
                    let base = ParamPoly::new(vec![-f.alpha, 1.0]);
                    for l in 0..f.j - 1 {
                        out.push(&base.pow(l as u32) * &others);
                    }
                }
                out
            }
        }
    }

    /// The model polynomial on the chart `(u, x_0, ..., x_{c-1})`.
    pub fn chart_polynomial(&self) -> MultiPoly {
        let nv = 1 + self.coords().len();
        let u = MultiPoly::var(nv, 0);
        match &self.kind {
            ModelKind::Morin { s, .. } => {
                let mut p = MultiPoly::monomial(nv, 1.0, exponent(nv, 0, *s as u32));
                for i in 0..s - 1 {
                    let mut e = exponent(nv, 0, i as u32);
                    e[1 + i] = 1;
                    p = &p + &MultiPoly::monomial(nv, 1.0, e);
                }
                p
            }
            ModelKind::Product { factors } => {
                let mut p = MultiPoly::constant(nv, 1.0);
                let mut c = 1;
                for f in factors {
                    let shifted = &u - &MultiPoly::constant(nv, f.alpha);
                    let mut g = shifted.pow(f.j as u32);
                    for l in 0..f.j - 1 {
                        g = &g + &(&MultiPoly::var(nv, c) * &shifted.pow(l as u32));
                        c += 1;
                    }
                    p = &p * &g;
                }
                p
            }
        }
    }

    /// The constant field `+-d/du` on the chart, matching the variant.
    pub fn chart_field(&self) -> Vec<MultiPoly> {
        let nv = 1 + self.coords().len();
        let sgn = if self.variant.field_positive() {
            1.0
        } else {
            -1.0
        };
        (0..nv)
            .map(|i| {
                if i == 0 {
                    MultiPoly::constant(nv, sgn)
                } else {
                    MultiPoly::zero(nv)
                }
            })
            .collect()
    }
}

fn exponent(nv: usize, var: usize, k: u32) -> Vec<u32> {
    let mut e = vec![0; nv];
    e[var] = k;
    e
}

fn kind_coords(kind: &ModelKind) -> Vec<f64> {
    match kind {
        ModelKind::Morin { x, .. } => x.clone(),
        ModelKind::Product { factors } => {
            factors.iter().flat_map(|f| f.x.iter().copied()).collect()
        }
    }
}

fn factor_poly(f: &ProductFactor) -> ParamPoly {
    let block = &ParamPoly::monomial(1.0, f.j) + &ParamPoly::new(f.x.clone());
    block.shift(-f.alpha)
}

/// Expanded model polynomial.
pub fn build_poly(m: &ModelSpec) -> Result<ParamPoly> {
    let m = ModelSpec::new(m.kind.clone(), m.variant, m.n)?;
    Ok(m.poly())
}

fn boundary_threshold(p: &ParamPoly) -> f64 {
    BOUNDARY_TOL * (1.0 + p.norm_inf())
}

/// Classify the chart point `(u, x)`; `x` defaults to the spec's coordinates.
pub fn membership(m: &ModelSpec, u: f64, x: Option<&[f64]>) -> Result<Membership> {
    let p = match x {
        Some(x) => m.with_coords(x)?.poly(),
        None => m.poly(),
    };
    let val = p.eval(u);
    Ok(if val.abs() <= boundary_threshold(&p) {
        Membership::Boundary
    } else if (val > 0.0) == m.variant.is_geq() {
        Membership::Interior
    } else {
        Membership::Exterior
    })
}

fn require_boundary(p: &ParamPoly, u0: f64) -> Result<()> {
    let (res, thr) = (p.eval(u0).abs(), boundary_threshold(p));
    if res > thr {
        return Err(Error::NotOnBoundary {
            residual: res,
            threshold: thr,
        });
    }
    Ok(())
}

/// Largest `j` with `P^(i)(u0) ~ 0` for all `i < j`; `P(u0) ~ 0` is required.
pub fn stratum_index(m: &ModelSpec, u0: f64, tol: f64) -> Result<usize> {
    let p = m.poly();
    require_boundary(&p, u0)?;
    let deg = p.degree().unwrap_or(0);
    let mut j = 1;
    while j < deg {
        let d = p.derivative(j);
        if d.eval(u0).abs() > tol * (1.0 + d.abs_eval(u0)) {
            break;
        }
        j += 1;
    }
    Ok(j)
}

/// Polarity of the boundary point `u0` in the variant's convention.
pub fn stratum_sign(m: &ModelSpec, u0: f64) -> Result<StratumLabel> {
    stratum_sign_with(m, u0, STRATUM_TOL)
}

pub fn stratum_sign_with(m: &ModelSpec, u0: f64, tol: f64) -> Result<StratumLabel> {
    let j = stratum_index(m, u0, tol)?;
    let d = m.poly().derivative(j).eval(u0);
    let oriented = if m.variant.field_positive() || j % 2 == 0 {
        d
    } else {
        -d
    };
    let plus = if m.variant.is_geq() {
        oriented >= 0.0
    } else {
        oriented <= 0.0
    };
    Ok(StratumLabel {
        j,
        sign: if plus { Sign::Plus } else { Sign::Minus },
    })
}

/// Interior points get `j = 0`, boundary points their stratum, exterior an error.
pub fn label_point(m: &ModelSpec, u: f64, tol: f64) -> Result<StratumLabel> {
    match membership(m, u, None)? {
        Membership::Interior => Ok(StratumLabel {
            j: 0,
            sign: Sign::None,
        }),
        Membership::Boundary => stratum_sign_with(m, u, tol),
        Membership::Exterior => {
            let p = m.poly();
            Err(Error::NotOnBoundary {
                residual: p.eval(u).abs(),
                threshold: boundary_threshold(&p),
            })
        }
    }
}

/// Gradient matrix of `P, P', ..., P^(j-1)` in the chart `(u, x)` at `u0`.
pub fn boundary_gradients(m: &ModelSpec, u0: f64, tol: f64) -> Result<nalgebra::DMatrix<f64>> {
    let j = stratum_index(m, u0, tol)?;
    let p = m.poly();
    let partials = m.coordinate_partials();
    Ok(nalgebra::DMatrix::from_fn(j, 1 + partials.len(), |i, c| {
        if c == 0 {
            p.derivative(i + 1).eval(u0)
        } else {
            partials[c - 1].derivative(i).eval(u0)
        }
    }))
}

/// Whether the gradients of `P, ..., P^(j-1)` are independent at `u0`.
pub fn check_boundary_generic(m: &ModelSpec, u0: f64) -> Result<bool> {
    let g = boundary_gradients(m, u0, STRATUM_TOL)?;
    Ok(linalg::numerical_rank(&g, linalg::DEFAULT_RANK_TOL) == g.nrows())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn morin(s: usize, x: &[f64], v: Variant) -> ModelSpec {
        ModelSpec::morin(s, x.to_vec(), v, 4).unwrap()
    }

    #[test]
    fn build_examples() {
        assert_eq!(
            morin(3, &[1.0, 2.0], Variant::PgeqEplus).poly().coeffs(),
            &[1.0, 2.0, 0.0, 1.0]
        );
        assert_eq!(
            morin(1, &[], Variant::PgeqEplus).poly().coeffs(),
            &[0.0, 1.0]
        );
        let p = ModelSpec::product(
            vec![
                ProductFactor {
                    alpha: -1.0,
                    j: 2,
                    x: vec![0.0],
                },
                ProductFactor {
                    alpha: 1.0,
                    j: 1,
                    x: vec![],
                },
            ],
            Variant::PleqEplus,
            3,
        )
        .unwrap();
        assert_eq!(p.poly().coeffs(), &[-1.0, -1.0, 1.0, 1.0]);
    }

    #[test]
    fn validation() {
        assert!(ModelSpec::morin(5, vec![0.0; 4], Variant::PgeqEplus, 3).is_err());
        assert!(ModelSpec::morin(3, vec![0.0], Variant::PgeqEplus, 3).is_err());
        let coincide = vec![
            ProductFactor {
                alpha: 0.0,
                j: 1,
                x: vec![],
            },
            ProductFactor {
                alpha: 0.0,
                j: 1,
                x: vec![],
            },
        ];
        assert_eq!(
            ModelSpec::product(coincide, Variant::PgeqEplus, 3)
                .unwrap_err()
                .name(),
            "InvalidSpec"
        );
        let bad = vec![ProductFactor {
            alpha: 0.0,
            j: 3,
            x: vec![0.0],
        }];
        assert!(ModelSpec::product(bad, Variant::PgeqEplus, 3).is_err());
    }

    #[test]
    fn json_forms() {
        let m: ModelSpec = serde_json::from_str(
            r#"{"kind":"morin","s":4,"x":[0,0,-1],"variant":"PleqEplus","n":3}"#,
        )
        .unwrap();
        assert_eq!(m.poly().coeffs(), &[0.0, 0.0, -1.0, 0.0, 1.0]);
        let s = serde_json::to_string(&m).unwrap();
        assert_eq!(
            s,
            r#"{"kind":"morin","s":4,"x":[0.0,0.0,-1.0],"variant":"PleqEplus","n":3}"#
        );
        let p: ModelSpec = serde_json::from_str(
            r#"{"kind":"product","factors":[{"alpha":-1,"j":2,"x":[0]},{"alpha":1,"j":1,"x":[]}],"variant":"PleqEplus","n":3}"#,
        )
        .unwrap();
        assert_eq!(p.degree(), 3);
        assert!(serde_json::from_str::<ModelSpec>(
            r#"{"kind":"morin","s":4,"x":[0],"variant":"PleqEplus","n":3}"#
        )
        .is_err());
    }

    #[test]
    fn membership_examples() {
        let m = morin(2, &[-1.0], Variant::PleqEplus);
        assert_eq!(membership(&m, 0.0, None).unwrap(), Membership::Interior);
        assert_eq!(membership(&m, 1.0, None).unwrap(), Membership::Boundary);
        let g = m.with_variant(Variant::PgeqEplus);
        assert_eq!(membership(&g, 0.0, None).unwrap(), Membership::Exterior);
        assert_eq!(
            membership(&g, 0.0, Some(&[1.0])).unwrap(),
            Membership::Interior
        );
    }

    #[test]
    fn stratum_examples() {
        assert_eq!(
            stratum_index(&morin(2, &[0.0], Variant::PgeqEplus), 0.0, 1e-8).unwrap(),
            2
        );
        assert_eq!(
            stratum_index(&morin(4, &[0.0, 0.0, -1.0], Variant::PgeqEplus), 1.0, 1e-8).unwrap(),
            1
        );
        assert_eq!(
            stratum_index(&morin(4, &[0.0; 3], Variant::PgeqEplus), 0.0, 1e-8).unwrap(),
            4
        );
        assert_eq!(
            stratum_index(&morin(2, &[-1.0], Variant::PgeqEplus), 0.0, 1e-8)
                .unwrap_err()
                .name(),
            "NotOnBoundary"
        );
        let p2 = morin(2, &[0.0], Variant::PgeqEplus);
        let plus = StratumLabel {
            j: 2,
            sign: Sign::Plus,
        };
        let minus = StratumLabel {
            j: 2,
            sign: Sign::Minus,
        };
        assert_eq!(stratum_sign(&p2, 0.0).unwrap(), plus);
        assert_eq!(
            stratum_sign(&p2.with_variant(Variant::PleqEplus), 0.0).unwrap(),
            minus
        );
        assert_eq!(
            stratum_sign(&p2.with_variant(Variant::PgeqEminus), 0.0).unwrap(),
            plus
        );
    }

    #[test]
    fn flip_law_on_cubic() {
        // u^3 at 0: j = 3 is odd, so flipping the field flips polarity.
        let p3 = morin(3, &[0.0, 0.0], Variant::PgeqEplus);
        let a = stratum_sign(&p3, 0.0).unwrap();
        let b = stratum_sign(&p3.with_variant(Variant::PgeqEminus), 0.0).unwrap();
        assert_eq!(a.j, 3);
        assert_ne!(a.sign, b.sign);
    }

    #[test]
    fn generic_examples() {
        assert!(check_boundary_generic(&morin(3, &[0.0, 0.0], Variant::PgeqEplus), 0.0).unwrap());
        assert!(check_boundary_generic(&morin(4, &[0.0; 3], Variant::PgeqEplus), 0.0).unwrap());
        let p = ModelSpec::product(
            vec![
                ProductFactor {
                    alpha: 0.0,
                    j: 2,
                    x: vec![0.0],
                },
                ProductFactor {
                    alpha: 1.0,
                    j: 2,
                    x: vec![0.0],
                },
            ],
            Variant::PgeqEplus,
            3,
        )
        .unwrap();
        let g = boundary_gradients(&p, 0.0, 1e-8).unwrap();
        assert_eq!(g.nrows(), 2);
        assert!(check_boundary_generic(&p, 0.0).unwrap());
    }

    #[test]
    fn chart_polynomial_agrees_with_poly() {
        let p = ModelSpec::product(
            vec![
                ProductFactor {
                    alpha: -0.5,
                    j: 3,
                    x: vec![0.2, -0.1],
                },
                ProductFactor {
                    alpha: 1.0,
                    j: 2,
                    x: vec![0.3],
                },
            ],
            Variant::PgeqEplus,
            4,
        )
        .unwrap();
        let c = p.chart_polynomial();
        let mut at = vec![0.0];
        at.extend(p.coords());
        for u in [-1.0, 0.0, 0.7, 2.0] {
            at[0] = u;
            assert!((c.eval(&at) - p.poly().eval(u)).abs() < 1e-12);
        }
        let partials = p.coordinate_partials();
        for (k, d) in partials.iter().enumerate() {
            at[0] = 0.4;
            assert!((c.partial(k + 1).eval(&at) - d.eval(0.4)).abs() < 1e-12);
        }
    }
}
