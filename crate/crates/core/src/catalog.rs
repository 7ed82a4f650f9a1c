//! Built-in fixtures, addressable by key.

use rand::Rng;

use crate::algebroid::{pair_count, pair_index, AlgebroidSpec, Anchor};
use crate::bundle::AElement;
use crate::error::{Error, Result};
use crate::flow::{stack, AHomotopyVariation, APathVariation};
use crate::groupoid::MatrixGroupSpec;
use crate::poly::{PolyMap, Term};

/// Every algebroid key, with `tangent(m)` shown at `m = 2`.
pub const ALGEBROID_KEYS: [&str; 8] = [
    "abelian",
    "tangent(2)",
    "so3",
    "sl2",
    "action-so3-r3",
    "bundle-of-lie-algebras",
    "broken-jacobi",
    "incompatible-anchor",
];

/// The algebroids that satisfy every axiom.
pub const VALID_ALGEBROID_KEYS: [&str; 6] = [
    "abelian",
    "tangent(2)",
    "so3",
    "sl2",
    "action-so3-r3",
    "bundle-of-lie-algebras",
];

pub const GROUP_KEYS: [&str; 4] = ["so3", "sl2", "diag-abelian(3)", "pair-groupoid(2)"];

pub const PATH_KEYS: [&str; 1] = ["tangent-path(2)"];

pub const HOMOTOPY_KEYS: [&str; 2] = ["tangent-homotopy", "tangent-homotopy-invalid"];

/// Parses `name(n)` with `n ≥ 1`.
fn param(key: &str, name: &str) -> Option<usize> {
    let inner = key.strip_prefix(name)?.strip_prefix('(')?.strip_suffix(')')?;
    inner.trim().parse().ok().filter(|n| *n >= 1)
}

fn constant_table(n: usize, entries: &[(usize, usize, usize, f64)]) -> Vec<Vec<Vec<f64>>> {
    let mut t = vec![vec![vec![0.0; n]; n]; n];
    for &(i, j, k, v) in entries {
        t[i][j][k] = v;
        t[j][i][k] = -v;
    }
    t
}

fn epsilon(sign: f64) -> Vec<Vec<Vec<f64>>> {
    constant_table(3, &[(0, 1, 2, sign), (1, 2, 0, sign), (2, 0, 1, sign)])
}

fn identity_rho(n: usize) -> PolyMap {
    let mut vals = vec![0.0; n * n];
    for i in 0..n {
        vals[i * n + i] = 1.0;
    }
    PolyMap::constant(n, &vals)
}

/// Anchor `ρ(m)a = a × m` on `ℝ³`, stored as `ρ^α_j` at `α·3 + j`.
fn cross_anchor() -> PolyMap {
    let x = |i: usize, c: f64| {
        let mut e = vec![0; 3];
        e[i] = 1;
        vec![Term::new(c, e)]
    };
    let terms = vec![
        vec![],
        x(2, 1.0),
        x(1, -1.0),
        x(2, -1.0),
        vec![],
        x(0, 1.0),
        x(1, 1.0),
        x(0, -1.0),
        vec![],
    ];
    PolyMap::new(3, 9, terms).expect("shape")
}

pub fn algebroid(key: &str) -> Result<AlgebroidSpec> {
    if let Some(n) = param(key, "tangent") {
        return AlgebroidSpec::new(key, Anchor::new(n, n, identity_rho(n))?, PolyMap::zero(n, pair_count(n) * n));
    }
    match key {
        "abelian" => AlgebroidSpec::new(key, Anchor::new(2, 2, PolyMap::zero(2, 4))?, PolyMap::zero(2, 2)),
        "so3" => AlgebroidSpec::from_constants(key, Anchor::new(0, 3, PolyMap::zero(0, 0))?, &epsilon(1.0)),
        "sl2" => {
            // basis (h, e, f)
            let t = constant_table(3, &[(0, 1, 1, 2.0), (0, 2, 2, -2.0), (1, 2, 0, 1.0)]);
            AlgebroidSpec::from_constants(key, Anchor::new(0, 3, PolyMap::zero(0, 0))?, &t)
        }
        "action-so3-r3" => AlgebroidSpec::from_constants(key, Anchor::new(3, 3, cross_anchor())?, &epsilon(-1.0)),
        "bundle-of-lie-algebras" => {
            // [e₂,e₃] = e₁, [e₃,e₁] = m₁e₂, [e₁,e₂] = m₂e₃
            let n = 3;
            let mut terms = vec![Vec::new(); pair_count(n) * n];
            terms[pair_index(n, 1, 2) * n] = vec![Term::new(1.0, vec![0, 0])];
            terms[pair_index(n, 0, 2) * n + 1] = vec![Term::new(-1.0, vec![1, 0])];
            terms[pair_index(n, 0, 1) * n + 2] = vec![Term::new(1.0, vec![0, 1])];
            AlgebroidSpec::new(key, Anchor::new(2, 3, PolyMap::zero(2, 6))?, PolyMap::new(2, 9, terms)?)
        }
        "broken-jacobi" => {
            let t = constant_table(3, &[(0, 1, 0, 1.0), (0, 2, 1, 1.0)]);
            AlgebroidSpec::from_constants(key, Anchor::new(0, 3, PolyMap::zero(0, 0))?, &t)
        }
        "incompatible-anchor" => {
            // ρ(m)a = a₁ + m·a₂
            let rho = PolyMap::new(1, 2, vec![vec![Term::new(1.0, vec![0])], vec![Term::new(1.0, vec![1])]])?;
            AlgebroidSpec::new(key, Anchor::new(1, 2, rho)?, PolyMap::zero(1, 2))
        }
        _ => Err(Error::UnknownCatalogKey(key.to_string())),
    }
}

fn mat(rows: [[f64; 3]; 3]) -> Vec<f64> {
    rows.iter().flatten().copied().collect()
}

pub fn group(key: &str) -> Result<MatrixGroupSpec> {
    if let Some(n) = param(key, "diag-abelian") {
        let basis = (0..n)
            .map(|i| {
                let mut b = vec![0.0; n * n];
                b[i * n + i] = 1.0;
                b
            })
            .collect();
        return MatrixGroupSpec::new(key, n, basis);
    }
    match key {
        "so3" => MatrixGroupSpec::new(
            key,
            3,
            vec![
                mat([[0.0, 0.0, 0.0], [0.0, 0.0, -1.0], [0.0, 1.0, 0.0]]),
                mat([[0.0, 0.0, 1.0], [0.0, 0.0, 0.0], [-1.0, 0.0, 0.0]]),
                mat([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]]),
            ],
        ),
        "sl2" => MatrixGroupSpec::new(
            key,
            2,
            vec![vec![1.0, 0.0, 0.0, -1.0], vec![0.0, 1.0, 0.0, 0.0], vec![0.0, 0.0, 1.0, 0.0]],
        ),
        _ => Err(Error::UnknownCatalogKey(key.to_string())),
    }
}

/// `Some(m)` for `pair-groupoid(m)`.
pub fn pair_groupoid_dim(key: &str) -> Option<usize> {
    param(key, "pair-groupoid")
}

/// One-variable polynomial `Σ cᵢ tⁱ`.
fn poly1(coeffs: &[f64]) -> Vec<Term> {
    coeffs
        .iter()
        .enumerate()
        .filter(|(_, c)| **c != 0.0)
        .map(|(i, c)| Term::new(*c, vec![i as u32]))
        .collect()
}

/// A variation of A-paths on the tangent algebroid of `ℝⁿ`: the base path
/// `g(t)` moved along `ε ↦ g(t) + εc`, i.e. `φ = (g, g′, g′ + c, g″)`,
/// with the composable start `a₀ = (g(0), g′(0) + c)`.
pub fn tangent_path(n: usize) -> (APathVariation, AElement<f64>) {
    let g: Vec<Vec<Term>> = (0..n)
        .map(|k| {
            let k = k as f64;
            poly1(&[0.1 * k, -0.3, k + 0.5, 0.0, 0.0, 0.2, 0.0, 1.0 / (k + 1.0)])
        })
        .collect();
    let g = PolyMap::new(1, n, g).expect("shape");
    let dg = g.derivative(0);
    let c: Vec<f64> = (0..n).map(|k| 0.2 * (k as f64 + 1.0)).collect();
    let dm = dg.add(&PolyMap::constant(1, &c)).expect("shape");
    let phi = stack(&[g.clone(), dg.clone(), dm, dg.derivative(0)]).expect("shape");
    let a0 = AElement::new(g.eval(&[0.0]), dg.eval(&[0.0]).iter().zip(&c).map(|(a, b)| a + b).collect());
    (APathVariation::new(n, n, 1.0, phi).expect("shape"), a0)
}

fn poly2(terms: &[(f64, u32, u32)]) -> Vec<Term> {
    terms.iter().map(|&(c, i, j)| Term::new(c, vec![i, j])).collect()
}

/// A homotopy on the tangent algebroid of `ℝ²` from `γ(s, t) = (st, s + t)`
/// moved along `δ`. With `invalid` set, `h₁` is built from `δ + st·(0.05, −0.02)`
/// instead, breaking the compatibility condition while keeping both start
/// slices composable.
pub fn tangent_homotopy(invalid: bool) -> (AHomotopyVariation, AElement<f64>) {
    let gamma = PolyMap::new(2, 2, vec![poly2(&[(1.0, 1, 1)]), poly2(&[(1.0, 1, 0), (1.0, 0, 1)])]).expect("shape");
    let delta = PolyMap::new(
        2,
        2,
        vec![
            poly2(&[(0.3, 0, 0), (1.0, 2, 1), (-0.5, 0, 2)]),
            poly2(&[(1.0, 0, 0), (1.0, 1, 2), (-0.2, 0, 1)]),
        ],
    )
    .expect("shape");
    let delta1 = if invalid {
        delta
            .add(&PolyMap::new(2, 2, vec![poly2(&[(0.05, 1, 1)]), poly2(&[(-0.02, 1, 1)])]).expect("shape"))
            .expect("shape")
    } else {
        delta.clone()
    };
    let h0 = stack(&[gamma.clone(), gamma.derivative(0), delta.clone(), delta.derivative(0)]).expect("shape");
    let h1 = stack(&[gamma.clone(), gamma.derivative(1), delta1.clone(), delta1.derivative(1)]).expect("shape");
    let a0 = AElement::new(gamma.eval(&[0.0, 0.0]), delta.eval(&[0.0, 0.0]));
    (AHomotopyVariation::new(2, 2, h0, h1).expect("shape"), a0)
}

pub fn path(key: &str) -> Result<(APathVariation, AElement<f64>, String)> {
    match param(key, "tangent-path") {
        Some(n) => {
            let (p, a) = tangent_path(n);
            Ok((p, a, format!("tangent({n})")))
        }
        None => Err(Error::UnknownCatalogKey(key.to_string())),
    }
}

pub fn homotopy(key: &str) -> Result<(AHomotopyVariation, AElement<f64>, String)> {
    let invalid = match key {
        "tangent-homotopy" => false,
        "tangent-homotopy-invalid" => true,
        _ => return Err(Error::UnknownCatalogKey(key.to_string())),
    };
    let (h, a) = tangent_homotopy(invalid);
    Ok((h, a, "tangent(2)".to_string()))
}

/// Random polynomial `χ: ℝ → ℝ^{dim}` with `χ(0) = 0`.
pub fn random_fiber_path<R: Rng + ?Sized>(rng: &mut R, dim: usize, degree: u32) -> PolyMap {
    let terms = (0..dim)
        .map(|_| {
            (1..=degree)
                .map(|d| Term::new(rng.random_range(-1.0..=1.0), vec![d]))
                .collect()
        })
        .collect();
    PolyMap::new(1, dim, terms).expect("shape")
}

/// Random polynomial `η: ℝ² → ℝ^{dim}` with `η(0, 0) = 0`.
pub fn random_fiber_surface<R: Rng + ?Sized>(rng: &mut R, dim: usize, degree: u32) -> PolyMap {
    let terms = (0..dim)
        .map(|_| {
            let mut t = Vec::new();
            for total in 1..=degree {
                for i in 0..=total {
                    t.push(Term::new(rng.random_range(-1.0..=1.0), vec![i, total - i]));
                }
            }
            t
        })
        .collect();
    PolyMap::new(2, dim, terms).expect("shape")
}

/// `(kind, key, description)` for every built-in entry.
pub fn list() -> Vec<(&'static str, String, String)> {
    let mut out = Vec::new();
    for key in ALGEBROID_KEYS {
        let spec = algebroid(key).expect("catalog entries build");
        let key = if key == "tangent(2)" { "tangent(m)".to_string() } else { key.to_string() };
        out.push((
            "algebroid",
            key,
            format!("dim_M={} dim_A={}", spec.dim_m(), spec.dim_a()),
        ));
    }
    for key in ["so3", "sl2", "diag-abelian(n)", "pair-groupoid(m)"] {
        out.push(("group", key.to_string(), String::new()));
    }
    out.push(("path", "tangent-path(m)".to_string(), "over tangent(m)".to_string()));
    for key in HOMOTOPY_KEYS {
        out.push(("homotopy", key.to_string(), "over tangent(2)".to_string()));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_key_builds() {
        for key in ALGEBROID_KEYS {
            algebroid(key).unwrap();
        }
        for key in GROUP_KEYS {
            if pair_groupoid_dim(key).is_none() {
                group(key).unwrap();
            }
        }
        assert_eq!(algebroid("tangent(5)").unwrap().dim_a(), 5);
        assert!(matches!(algebroid("tangent(0)"), Err(Error::UnknownCatalogKey(_))));
        assert!(matches!(algebroid("nope"), Err(Error::UnknownCatalogKey(_))));
        assert_eq!(pair_groupoid_dim("pair-groupoid(4)"), Some(4));
    }

    #[test]
    fn so3_basis_commutators() {
        // [L₁, L₂] = L₃ with the standard generators
        let g = group("so3").unwrap();
        let k = crate::groupoid::commutator_constants(&g).unwrap();
        assert_eq!(k[0][1], vec![0.0, 0.0, 1.0]);
        assert_eq!(k[1][2], vec![1.0, 0.0, 0.0]);
        assert_eq!(k[2][0], vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn sl2_matches_its_matrices() {
        let spec = algebroid("sl2").unwrap();
        let k = crate::groupoid::commutator_constants(&group("sl2").unwrap()).unwrap();
        assert_eq!(spec.constants_at(&[]), k);
    }

    #[test]
    fn cross_anchor_is_a_cross_product() {
        let spec = algebroid("action-so3-r3").unwrap();
        let m = [0.3, -0.7, 0.2];
        let a = [1.0, 2.0, -1.0];
        let r = spec.anchor.apply(&m, &a);
        let expect = [a[1] * m[2] - a[2] * m[1], a[2] * m[0] - a[0] * m[2], a[0] * m[1] - a[1] * m[0]];
        assert!(crate::scalar::max_dist(&r, &expect) < 1e-15);
    }

    #[test]
    fn random_fiber_data_vanish_at_origin() {
        let mut rng = crate::sampling::rng_for(1, 0);
        assert_eq!(random_fiber_path(&mut rng, 3, 4).eval(&[0.0]), vec![0.0; 3]);
        assert_eq!(random_fiber_surface(&mut rng, 2, 3).eval(&[0.0, 0.0]), vec![0.0; 2]);
    }
}
