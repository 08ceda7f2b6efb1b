//! Catalogs of tangency patterns: local degenerations of a type-`k` Morin
//! point, global patterns of traversally generic fields, and the decorated
//! classification of the quartic model. Also witness realization and a
//! number-line SVG rendering.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::divisors::{multiplicities, omega_of, trajectory_divisor, OmegaPattern};
use crate::error::{Error, Result};
use crate::models::{stratum_sign, ModelSpec, ProductFactor, Sign, Variant};
use crate::polyparam::ParamPoly;

fn canonical(mut v: Vec<OmegaPattern>) -> Vec<OmegaPattern> {
    v.sort_by(|a, b| (a.sum(), a.entries()).cmp(&(b.sum(), b.entries())));
    v
}

fn compositions(total: usize, prefix: &mut Vec<usize>, out: &mut Vec<OmegaPattern>) {
    if total == 0 {
        out.push(OmegaPattern::new(prefix.clone()).unwrap());
        return;
    }
    for j in 1..=total {
        prefix.push(j);
        compositions(total - j, prefix, out);
        prefix.pop();
    }
}

/// All ordered patterns with `sum <= k` and `sum = k (mod 2)`.
pub fn enumerate_local(k: usize) -> Vec<OmegaPattern> {
    let mut out = Vec::new();
    for sigma in (k % 2..=k).step_by(2) {
        compositions(sigma, &mut Vec::new(), &mut out);
    }
    canonical(out)
}

pub fn is_local_admissible(w: &OmegaPattern, k: usize) -> bool {
    w.sum() <= k && w.sum() % 2 == k % 2
}

/// Patterns of length >= 2 with odd ends, even interior and `m' <= n`,
/// plus the singleton `(2)` on request.
pub fn enumerate_traversal(n: usize, include_singleton: bool) -> Vec<OmegaPattern> {
    let mut out = Vec::new();
    if include_singleton && n >= 1 {
        out.push(OmegaPattern::new(vec![2]).unwrap());
    }
    fn interior(budget: usize, prefix: &mut Vec<usize>, out: &mut Vec<OmegaPattern>) {
        // Close with an odd last entry.
        for last in (1..=budget + 1).step_by(2) {
            prefix.push(last);
            out.push(OmegaPattern::new(prefix.clone()).unwrap());
            prefix.pop();
        }
        for even in (2..=budget + 1).step_by(2) {
            prefix.push(even);
            interior(budget - (even - 1), prefix, out);
            prefix.pop();
        }
    }
    for first in (1..=n + 1).step_by(2) {
        interior(n - (first - 1), &mut vec![first], &mut out);
    }
    canonical(out)
}

pub fn is_traversal_admissible(w: &OmegaPattern, n: usize, include_singleton: bool) -> bool {
    let e = w.entries();
    if e == [2] {
        return include_singleton && n >= 1;
    }
    e.len() >= 2
        && e[0] % 2 == 1
        && e[e.len() - 1] % 2 == 1
        && e[1..e.len() - 1].iter().all(|j| j % 2 == 0)
        && multiplicities(w).m_reduced <= n
}

/// Where a pattern is realized.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "context", content = "value")]
pub enum Context {
    /// Near a type-`k` Morin point.
    Local(usize),
    /// Along a trajectory of a traversally generic field in dimension `n + 1`.
    Traversal(usize),
}

/// Witness model whose trajectory divisor has pattern `w`.
///
/// Local: the depressed Morin polynomial `prod (u - r_i)^{j_i} (u^{2t} + 1)`
/// with `r_i = -1 + 2i/(p-1)` shifted to zero mean, `2t = k - sum`.
/// Traversal: the product model with `alpha_i = i` and zero blocks.
/// For fields pointing toward decreasing `u` the roots are placed in reverse.
pub fn realize_pattern(w: &OmegaPattern, ctx: Context, variant: Variant) -> Result<ModelSpec> {
    // Negative fields traverse in decreasing u.
    let w = &if variant.field_positive() {
        w.clone()
    } else {
        w.reversed()
    };
    match ctx {
        Context::Local(k) => {
            if k == 0 || !is_local_admissible(w, k) {
                return Err(Error::Unrealizable(format!(
                    "{w} is not a local pattern for k = {k}"
                )));
            }
            let p = w.len();
            let roots: Vec<f64> = (0..p)
                .map(|i| {
                    if p == 1 {
                        0.0
                    } else {
                        -1.0 + 2.0 * i as f64 / (p - 1) as f64
                    }
                })
                .collect();
            let sigma = w.sum();
            let shift = if sigma == 0 {
                0.0
            } else {
                roots
                    .iter()
                    .zip(w.entries())
                    .map(|(r, &j)| r * j as f64)
                    .sum::<f64>()
                    / sigma as f64
            };
            let t = (k - sigma) / 2;
            let pad = if t == 0 {
                ParamPoly::constant(1.0)
            } else {
                &ParamPoly::monomial(1.0, 2 * t) + &ParamPoly::constant(1.0)
            };
            let poly = roots.iter().zip(w.entries()).fold(pad, |acc, (&r, &j)| {
                &acc * &ParamPoly::new(vec![-(r - shift), 1.0]).pow(j as u32)
            });
            let mut x: Vec<f64> = (0..k - 1).map(|i| poly.coeff(i)).collect();
            x.iter_mut().for_each(|c| {
                if c.abs() < 1e-15 {
                    *c = 0.0;
                }
            });
            ModelSpec::morin(k, x, variant, (k - 1).max(1))
        }
        Context::Traversal(n) => {
            if !is_traversal_admissible(w, n, true) {
                return Err(Error::Unrealizable(format!(
                    "{w} is not a traversal pattern for n = {n}"
                )));
            }
            let factors = w
                .entries()
                .iter()
                .enumerate()
                .map(|(i, &j)| ProductFactor {
                    alpha: i as f64,
                    j,
                    x: vec![0.0; j - 1],
                })
                .collect();
            ModelSpec::product(factors, variant, n)
        }
    }
}

/// A quartic pattern with its witness and per-root polarities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifiedPattern {
    pub pattern: OmegaPattern,
    pub witness: Vec<f64>,
    pub roots: Vec<f64>,
    pub polarity: BTreeMap<Variant, Vec<Sign>>,
}

/// The 11 quartic patterns, decorated with the stratum polarity at each root
/// of the witness under `X = {P >= 0}` and `X = {P <= 0}` (field `+e`).
pub fn classify_p4() -> Result<Vec<ClassifiedPattern>> {
    enumerate_local(4)
        .into_iter()
        .map(|w| {
            let spec = realize_pattern(&w, Context::Local(4), Variant::PgeqEplus)?;
            let d = trajectory_divisor(&spec)?;
            if omega_of(&d) != w {
                return Err(Error::Unrealizable(format!(
                    "witness for {w} has divisor {d:?}"
                )));
            }
            let mut polarity = BTreeMap::new();
            for v in [Variant::PgeqEplus, Variant::PleqEplus] {
                let s = spec.with_variant(v);
                let signs = d
                    .roots()
                    .iter()
                    .map(|&r| stratum_sign(&s, r).map(|l| l.sign))
                    .collect::<Result<_>>()?;
                polarity.insert(v, signs);
            }
            Ok(ClassifiedPattern {
                pattern: w,
                witness: spec.coords(),
                roots: d.roots(),
                polarity,
            })
        })
        .collect()
}

// ---------------------------------------------------------------------------
// SVG

const ROW_H: f64 = 56.0;
const WIDTH: f64 = 480.0;
const MARGIN: f64 = 60.0;

fn sign_glyph(s: Sign) -> &'static str {
    match s {
        Sign::Plus => "+",
        Sign::Minus => "\u{2212}",
        Sign::None => "",
    }
}

/// Number-line diagram, one row per model: the u-axis with `X` shaded,
/// each root marked with its multiplicity and polarity.
pub fn render_svg(rows: &[(String, ModelSpec)]) -> Result<String> {
    let height = ROW_H * rows.len().max(1) as f64 + 20.0;
    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{height}" viewBox="0 0 {w} {height}" font-family="sans-serif" font-size="12">"#,
        w = WIDTH + 2.0 * MARGIN
    )
    .unwrap();
    for (idx, (label, spec)) in rows.iter().enumerate() {
        let y = 20.0 + ROW_H * idx as f64 + ROW_H / 2.0;
        let d = trajectory_divisor(spec)?;
        let mut roots = d.roots();
        roots.sort_by(f64::total_cmp);
        let (lo, hi) = match (roots.first(), roots.last()) {
            (Some(&a), Some(&b)) => (a.min(-1.0) - 0.5, b.max(1.0) + 0.5),
            _ => (-1.5, 1.5),
        };
        let px = |u: f64| MARGIN + (u - lo) / (hi - lo) * WIDTH;
        let poly = spec.poly();
        let geq = spec.variant().is_geq();
        let mut cuts = vec![lo];
        cuts.extend(&roots);
        cuts.push(hi);
        for w in cuts.windows(2) {
            let val = poly.eval(0.5 * (w[0] + w[1]));
            if (val >= 0.0) == geq {
                writeln!(
                    s,
                    r##"  <rect x="{:.2}" y="{:.2}" width="{:.2}" height="10" fill="#9bb7d4"/>"##,
                    px(w[0]),
                    y - 5.0,
                    px(w[1]) - px(w[0])
                )
                .unwrap();
            }
        }
        writeln!(
            s,
            r#"  <line x1="{:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="black"/>"#,
            px(lo),
            px(hi)
        )
        .unwrap();
        writeln!(s, r#"  <text x="4" y="{:.2}">{label}</text>"#, y + 4.0).unwrap();
        for e in d.entries() {
            let sign = stratum_sign(spec, e.root)
                .map(|l| l.sign)
                .unwrap_or(Sign::None);
            let x = px(e.root);
            writeln!(
                s,
                r#"  <circle cx="{x:.2}" cy="{y:.2}" r="3.5" fill="black"/>"#
            )
            .unwrap();
            writeln!(
                s,
                r#"  <text x="{x:.2}" y="{:.2}" text-anchor="middle">{}{}</text>"#,
                y - 10.0,
                e.mult,
                sign_glyph(sign)
            )
            .unwrap();
        }
    }
    s.push_str("</svg>\n");
    Ok(s)
}
