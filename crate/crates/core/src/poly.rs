//! Polynomial maps `ℝ^n → ℝ^k`, evaluable on any [`Scalar`].
//!
//! Evaluating on jets gives the tangent maps `T^d(f)` exactly, since
//! polynomials differentiate without truncation error.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jet::JetPoint;
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub coeff: f64,
    pub exponents: Vec<u32>,
}

impl Term {
    pub fn new(coeff: f64, exponents: Vec<u32>) -> Self {
        Term { coeff, exponents }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPolyMap", into = "RawPolyMap")]
pub struct PolyMap {
    in_dim: usize,
    out_dim: usize,
    terms: Vec<Vec<Term>>,
}

#[derive(Serialize, Deserialize)]
struct RawPolyMap {
    in_dim: usize,
    out_dim: usize,
    terms: Vec<Vec<Term>>,
}

impl TryFrom<RawPolyMap> for PolyMap {
    type Error = Error;
    fn try_from(r: RawPolyMap) -> Result<Self> {
        PolyMap::new(r.in_dim, r.out_dim, r.terms)
    }
}

impl From<PolyMap> for RawPolyMap {
    fn from(p: PolyMap) -> Self {
        RawPolyMap {
            in_dim: p.in_dim,
            out_dim: p.out_dim,
            terms: p.terms,
        }
    }
}

type Monomials = BTreeMap<Vec<u32>, f64>;

impl PolyMap {
    pub fn new(in_dim: usize, out_dim: usize, terms: Vec<Vec<Term>>) -> Result<Self> {
        if terms.len() != out_dim {
            return Err(Error::DimensionMismatch {
                expected: out_dim,
                got: terms.len(),
            });
        }
        for t in terms.iter().flatten() {
            if t.exponents.len() != in_dim {
                return Err(Error::DimensionMismatch {
                    expected: in_dim,
                    got: t.exponents.len(),
                });
            }
            if !t.coeff.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "non-finite polynomial coefficient {}",
                    t.coeff
                )));
            }
        }
        Ok(PolyMap {
            in_dim,
            out_dim,
            terms,
        })
    }

    pub fn zero(in_dim: usize, out_dim: usize) -> Self {
        PolyMap {
            in_dim,
            out_dim,
            terms: vec![Vec::new(); out_dim],
        }
    }

    pub fn constant(in_dim: usize, values: &[f64]) -> Self {
        let terms = values
            .iter()
            .map(|v| {
                if *v == 0.0 {
                    Vec::new()
                } else {
                    vec![Term::new(*v, vec![0; in_dim])]
                }
            })
            .collect();
        PolyMap {
            in_dim,
            out_dim: values.len(),
            terms,
        }
    }

    /// `x ↦ M x` for a row-major matrix with `in_dim` columns.
    pub fn linear(in_dim: usize, rows: &[Vec<f64>]) -> Result<Self> {
        let mut terms = Vec::with_capacity(rows.len());
        for row in rows {
            if row.len() != in_dim {
                return Err(Error::DimensionMismatch {
                    expected: in_dim,
                    got: row.len(),
                });
            }
            terms.push(
                row.iter()
                    .enumerate()
                    .filter(|(_, c)| **c != 0.0)
                    .map(|(j, c)| Term::new(*c, unit_exponent(in_dim, j)))
                    .collect(),
            );
        }
        PolyMap::new(in_dim, rows.len(), terms)
    }

    pub fn identity(n: usize) -> Self {
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        PolyMap::linear(n, &rows).expect("square rows")
    }

    /// Random map with every monomial of total degree ≤ `degree` present and
    /// coefficients uniform in [−1, 1].
    pub fn random<R: Rng + ?Sized>(rng: &mut R, in_dim: usize, out_dim: usize, degree: u32) -> Self {
        let monos = monomials_up_to(in_dim, degree);
        let terms = (0..out_dim)
            .map(|_| {
                monos
                    .iter()
                    .map(|e| Term::new(rng.random_range(-1.0..=1.0), e.clone()))
                    .collect()
            })
            .collect();
        PolyMap {
            in_dim,
            out_dim,
            terms,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn terms(&self) -> &[Vec<Term>] {
        &self.terms
    }

    pub fn degree(&self) -> u32 {
        self.terms
            .iter()
            .flatten()
            .map(|t| t.exponents.iter().sum::<u32>())
            .max()
            .unwrap_or(0)
    }

    /// Evaluates on any scalar type. Panics if `x.len() != in_dim`; the
    /// fallible entry point is [`PolyMap::try_eval`].
    pub fn eval<S: Scalar>(&self, x: &[S]) -> Vec<S> {
        assert_eq!(x.len(), self.in_dim, "polynomial input dimension");
        let max_exp = self
            .terms
            .iter()
            .flatten()
            .flat_map(|t| t.exponents.iter().copied())
            .max()
            .unwrap_or(0) as usize;
        // powers[i][e] = x_i^e
        let powers: Vec<Vec<S>> = x
            .iter()
            .map(|xi| {
                let mut p = Vec::with_capacity(max_exp + 1);
                p.push(S::one());
                for e in 1..=max_exp {
                    p.push(p[e - 1] * *xi);
                }
                p
            })
            .collect();
        self.terms
            .iter()
            .map(|row| {
                let mut acc = S::zero();
                for t in row {
                    let mut m = S::from_f64(t.coeff);
                    for (i, e) in t.exponents.iter().enumerate() {
                        if *e > 0 {
                            m = m * powers[i][*e as usize];
                        }
                    }
                    acc += m;
                }
                acc
            })
            .collect()
    }

    pub fn try_eval<S: Scalar>(&self, x: &[S]) -> Result<Vec<S>> {
        if x.len() != self.in_dim {
            return Err(Error::DimensionMismatch {
                expected: self.in_dim,
                got: x.len(),
            });
        }
        Ok(self.eval(x))
    }

    /// `T^d(f)` at a depth-`d` jet.
    pub fn apply(&self, x: &JetPoint) -> Result<JetPoint> {
        let out = self.try_eval(x.entries())?;
        JetPoint::with_depth(x.depth(), out)
    }

    /// Jacobian at a real point, `out_dim × in_dim`.
    pub fn jacobian(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut jac = vec![vec![0.0; self.in_dim]; self.out_dim];
        for j in 0..self.in_dim {
            let d = self.derivative(j);
            let col = d.eval(x);
            for (i, v) in col.into_iter().enumerate() {
                jac[i][j] = v;
            }
        }
        jac
    }

    /// Exact partial derivative in input variable `var`.
    pub fn derivative(&self, var: usize) -> PolyMap {
        let terms = self
            .terms
            .iter()
            .map(|row| {
                row.iter()
                    .filter(|t| t.exponents[var] > 0)
                    .map(|t| {
                        let mut e = t.exponents.clone();
                        let k = e[var];
                        e[var] -= 1;
                        Term::new(t.coeff * k as f64, e)
                    })
                    .collect()
            })
            .collect();
        PolyMap {
            in_dim: self.in_dim,
            out_dim: self.out_dim,
            terms,
        }
    }

    /// `self ∘ inner`, expanded and with like monomials merged.
    pub fn compose(&self, inner: &PolyMap) -> Result<PolyMap> {
        if inner.out_dim != self.in_dim {
            return Err(Error::DimensionMismatch {
                expected: self.in_dim,
                got: inner.out_dim,
            });
        }
        let n = inner.in_dim;
        let inner_polys: Vec<Monomials> = inner.terms.iter().map(|r| to_monomials(r)).collect();
        let mut terms = Vec::with_capacity(self.out_dim);
        for row in &self.terms {
            let mut acc: Monomials = BTreeMap::new();
            for t in row {
                let mut m: Monomials = BTreeMap::new();
                m.insert(vec![0; n], t.coeff);
                for (i, e) in t.exponents.iter().enumerate() {
                    for _ in 0..*e {
                        m = mul_monomials(&m, &inner_polys[i]);
                    }
                }
                for (k, v) in m {
                    *acc.entry(k).or_insert(0.0) += v;
                }
            }
            terms.push(from_monomials(acc));
        }
        Ok(PolyMap {
            in_dim: n,
            out_dim: self.out_dim,
            terms,
        })
    }

    /// Pointwise sum of two maps with equal shapes.
    pub fn add(&self, other: &PolyMap) -> Result<PolyMap> {
        self.check_same_shape(other)?;
        let terms = self
            .terms
            .iter()
            .zip(&other.terms)
            .map(|(a, b)| {
                let mut m = to_monomials(a);
                for t in b {
                    *m.entry(t.exponents.clone()).or_insert(0.0) += t.coeff;
                }
                from_monomials(m)
            })
            .collect();
        Ok(PolyMap {
            in_dim: self.in_dim,
            out_dim: self.out_dim,
            terms,
        })
    }

    pub fn scale(&self, s: f64) -> PolyMap {
        let terms = self
            .terms
            .iter()
            .map(|row| row.iter().map(|t| Term::new(t.coeff * s, t.exponents.clone())).collect())
            .collect();
        PolyMap {
            in_dim: self.in_dim,
            out_dim: self.out_dim,
            terms,
        }
    }

    /// `x ↦ f(x)·self(x)` for a scalar polynomial `f`.
    pub fn times_scalar_field(&self, f: &PolyMap) -> Result<PolyMap> {
        if f.out_dim != 1 || f.in_dim != self.in_dim {
            return Err(Error::DimensionMismatch {
                expected: self.in_dim,
                got: f.in_dim,
            });
        }
        let fm = to_monomials(&f.terms[0]);
        let terms = self
            .terms
            .iter()
            .map(|row| from_monomials(mul_monomials(&fm, &to_monomials(row))))
            .collect();
        Ok(PolyMap {
            in_dim: self.in_dim,
            out_dim: self.out_dim,
            terms,
        })
    }

    fn check_same_shape(&self, other: &PolyMap) -> Result<()> {
        if self.in_dim != other.in_dim {
            return Err(Error::DimensionMismatch {
                expected: self.in_dim,
                got: other.in_dim,
            });
        }
        if self.out_dim != other.out_dim {
            return Err(Error::DimensionMismatch {
                expected: self.out_dim,
                got: other.out_dim,
            });
        }
        Ok(())
    }
}

fn unit_exponent(n: usize, j: usize) -> Vec<u32> {
    let mut e = vec![0; n];
    e[j] = 1;
    e
}

fn monomials_up_to(n: usize, degree: u32) -> Vec<Vec<u32>> {
    let mut out = vec![Vec::new()];
    for _ in 0..n {
        let mut next = Vec::new();
        for prefix in &out {
            let used: u32 = prefix.iter().sum();
            for e in 0..=(degree - used) {
                let mut p = prefix.clone();
                p.push(e);
                next.push(p);
            }
        }
        out = next;
    }
    out
}

fn to_monomials(row: &[Term]) -> Monomials {
    let mut m = BTreeMap::new();
    for t in row {
        *m.entry(t.exponents.clone()).or_insert(0.0) += t.coeff;
    }
    m
}

fn from_monomials(m: Monomials) -> Vec<Term> {
    m.into_iter()
        .filter(|(_, c)| *c != 0.0)
        .map(|(e, c)| Term::new(c, e))
        .collect()
}

fn mul_monomials(a: &Monomials, b: &Monomials) -> Monomials {
    let mut out = BTreeMap::new();
    for (ea, ca) in a {
        for (eb, cb) in b {
            let e: Vec<u32> = ea.iter().zip(eb).map(|(x, y)| x + y).collect();
            *out.entry(e).or_insert(0.0) += ca * cb;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jet::{flip_c, JetScalar};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn square() -> PolyMap {
        PolyMap::new(1, 1, vec![vec![Term::new(1.0, vec![2])]]).unwrap()
    }

    #[test]
    fn square_on_depth_one() {
        let x = JetPoint::from_blocks(1, &[vec![3.0], vec![1.0]]).unwrap();
        let y = square().apply(&x).unwrap();
        assert_eq!(y.entries()[0].coeffs(), &[9.0, 6.0]);
    }

    #[test]
    fn square_on_depth_two_matches_hand_expansion() {
        // (3 + ε1 + ε2)² = 9 + 6ε1 + 6ε2 + 2ε1ε2
        let x = JetPoint::from_blocks(2, &[vec![3.0], vec![1.0], vec![1.0], vec![0.0]]).unwrap();
        let y = square().apply(&x).unwrap();
        assert_eq!(y.entries()[0].coeffs(), &[9.0, 6.0, 6.0, 2.0]);
    }

    #[test]
    fn depth_zero_is_plain_evaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f = PolyMap::random(&mut rng, 3, 2, 3);
        let x = [0.3, -0.7, 0.2];
        let direct: Vec<f64> = f.eval(&x);
        let jets: Vec<JetScalar> = x.iter().map(|v| JetScalar::constant(*v)).collect();
        let via_jet: Vec<f64> = f.eval(&jets).iter().map(|j| j.re()).collect();
        assert_eq!(direct, via_jet);
    }

    #[test]
    fn direction_one_is_jvp() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let f = PolyMap::random(&mut rng, 2, 2, 3);
        let x = [0.4, -0.1];
        let v = [0.7, 0.2];
        let jet = JetPoint::from_blocks(1, &[x.to_vec(), v.to_vec()]).unwrap();
        let out = f.apply(&jet).unwrap().block(1);
        let jac = f.jacobian(&x);
        for i in 0..2 {
            let jvp = jac[i][0] * v[0] + jac[i][1] * v[1];
            assert!((out[i] - jvp).abs() < 1e-14);
        }
    }

    #[test]
    fn flip_is_natural() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let f = PolyMap::random(&mut rng, 2, 3, 3);
            let x = JetPoint::random(&mut rng, 2, 2).unwrap();
            let a = f.apply(&flip_c(&x, 1, 2).unwrap()).unwrap();
            let b = flip_c(&f.apply(&x).unwrap(), 1, 2).unwrap();
            assert!(a.max_abs_diff(&b) < 1e-14);
        }
    }

    #[test]
    fn composition_is_functorial() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let f = PolyMap::random(&mut rng, 2, 2, 2);
        let g = PolyMap::random(&mut rng, 2, 1, 2);
        let gf = g.compose(&f).unwrap();
        let x = JetPoint::random(&mut rng, 2, 3).unwrap();
        let a = gf.apply(&x).unwrap();
        let b = g.apply(&f.apply(&x).unwrap()).unwrap();
        assert!(a.max_abs_diff(&b) < 1e-12);
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(PolyMap::new(2, 1, vec![vec![Term::new(1.0, vec![1])]]).is_err());
        assert!(PolyMap::new(1, 2, vec![vec![]]).is_err());
        let f = square();
        assert!(f.apply(&JetPoint::from_real(&[1.0, 2.0])).is_err());
        let json = r#"{"in_dim":1,"out_dim":1,"terms":[[{"coeff":1.0,"exponents":[1,2]}]]}"#;
        assert!(serde_json::from_str::<PolyMap>(json).is_err());
    }

    #[test]
    fn derivative_and_scalar_product() {
        // f = x² y, ∂x f = 2xy
        let f = PolyMap::new(2, 1, vec![vec![Term::new(1.0, vec![2, 1])]]).unwrap();
        assert_eq!(f.derivative(0).eval(&[3.0, 2.0]), vec![12.0]);
        let g = PolyMap::identity(2).times_scalar_field(&f).unwrap();
        assert_eq!(g.eval(&[1.0, 2.0]), vec![2.0, 4.0]);
    }
}
