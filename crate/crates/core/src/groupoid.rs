//! Differentiation of matrix groups and pair groupoids.
//!
//! Second-order jets of two-parameter families are composed exactly, and
//! the flip is read off `α(v, w) = cw ∘ 0v ∘ (c0pw)⁻¹`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::algebroid::{
    self, compare_flips, unit, Anchor, AlgebroidSpec, FlipMap, InvolutionAlgebroid, EXACT_TOL, LOOSE_TOL,
};
use crate::bundle::{AElement, SectionSpec, TAElement};
use crate::error::{Error, Result};
use crate::poly::PolyMap;
use crate::report::{CheckResult, Report};
use crate::scalar::{zeros, Scalar};

/// Tolerance for the least-squares projection onto the algebra span.
pub const SPAN_TOL: f64 = 1e-9;

/// A matrix Lie group given by a basis of its Lie algebra in `gl(N)`.
/// Matrices are row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixGroupSpec {
    pub name: String,
    pub n: usize,
    pub algebra_basis: Vec<Vec<f64>>,
}

impl MatrixGroupSpec {
    pub fn new(name: impl Into<String>, n: usize, algebra_basis: Vec<Vec<f64>>) -> Result<Self> {
        let spec = MatrixGroupSpec {
            name: name.into(),
            n,
            algebra_basis,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Shape, linear independence and closure under commutators.
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidFixture("matrix size must be positive".into()));
        }
        for b in &self.algebra_basis {
            if b.len() != self.n * self.n {
                return Err(Error::DimensionMismatch {
                    expected: self.n * self.n,
                    got: b.len(),
                });
            }
        }
        let proj = Projector::new(self)?;
        for x in &self.algebra_basis {
            for y in &self.algebra_basis {
                let c = commutator(self.n, x, y);
                proj.coords(&c)?;
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.algebra_basis.len()
    }

    /// `Σ xᵢ Bᵢ`.
    pub fn matrix<S: Scalar>(&self, x: &[S]) -> Vec<S> {
        let mut out = zeros(self.n * self.n);
        for (b, c) in self.algebra_basis.iter().zip(x) {
            for (o, e) in out.iter_mut().zip(b) {
                *o += *c * *e;
            }
        }
        out
    }
}

fn commutator(n: usize, x: &[f64], y: &[f64]) -> Vec<f64> {
    let xy = matmul(n, x, y);
    let yx = matmul(n, y, x);
    xy.iter().zip(&yx).map(|(a, b)| a - b).collect()
}

fn matmul<S: Scalar>(n: usize, a: &[S], b: &[S]) -> Vec<S> {
    let mut out = zeros(n * n);
    for i in 0..n {
        for k in 0..n {
            let aik = a[i * n + k];
            for j in 0..n {
                out[i * n + j] += aik * b[k * n + j];
            }
        }
    }
    out
}

fn identity<S: Scalar>(n: usize) -> Vec<S> {
    let mut out = zeros(n * n);
    for i in 0..n {
        out[i * n + i] = S::one();
    }
    out
}

fn add<S: Scalar>(a: &[S], b: &[S]) -> Vec<S> {
    a.iter().zip(b).map(|(x, y)| *x + *y).collect()
}

fn neg<S: Scalar>(a: &[S]) -> Vec<S> {
    a.iter().map(|x| -*x).collect()
}

/// Gauss–Jordan inverse with partial pivoting on the real parts.
fn inverse<S: Scalar>(n: usize, a: &[S]) -> Result<Vec<S>> {
    let mut m = a.to_vec();
    let mut inv = identity::<S>(n);
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| m[i * n + col].re().abs().total_cmp(&m[j * n + col].re().abs()))
            .expect("non-empty range");
        if !(m[pivot * n + col].re().abs() > 1e-300) {
            return Err(Error::SingularMatrix);
        }
        if pivot != col {
            for j in 0..n {
                m.swap(pivot * n + j, col * n + j);
                inv.swap(pivot * n + j, col * n + j);
            }
        }
        let r = m[col * n + col].recip();
        for j in 0..n {
            m[col * n + j] = m[col * n + j] * r;
            inv[col * n + j] = inv[col * n + j] * r;
        }
        for i in 0..n {
            if i == col {
                continue;
            }
            let f = m[i * n + col];
            for j in 0..n {
                let (mc, ic) = (m[col * n + j], inv[col * n + j]);
                m[i * n + j] = m[i * n + j] - f * mc;
                inv[i * n + j] = inv[i * n + j] - f * ic;
            }
        }
    }
    Ok(inv)
}

/// The second-order jet `g + s g₁ + t g₂ + st g₁₂` of a two-parameter
/// family of `N×N` matrices.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupJet2<S = f64> {
    pub n: usize,
    pub g: Vec<S>,
    pub g1: Vec<S>,
    pub g2: Vec<S>,
    pub g12: Vec<S>,
}

impl<S: Scalar> GroupJet2<S> {
    pub fn new(n: usize, g: Vec<S>, g1: Vec<S>, g2: Vec<S>, g12: Vec<S>) -> Result<Self> {
        for part in [&g, &g1, &g2, &g12] {
            if part.len() != n * n {
                return Err(Error::DimensionMismatch {
                    expected: n * n,
                    got: part.len(),
                });
            }
        }
        Ok(GroupJet2 { n, g, g1, g2, g12 })
    }

    pub fn identity(n: usize) -> Self {
        GroupJet2 {
            n,
            g: identity(n),
            g1: zeros(n * n),
            g2: zeros(n * n),
            g12: zeros(n * n),
        }
    }

    pub fn dist(&self, other: &Self) -> f64 {
        use crate::scalar::max_dist;
        if self.n != other.n {
            return f64::INFINITY;
        }
        max_dist(&self.g, &other.g)
            .max(max_dist(&self.g1, &other.g1))
            .max(max_dist(&self.g2, &other.g2))
            .max(max_dist(&self.g12, &other.g12))
    }
}

/// Truncated product.
pub fn jet2_mul<S: Scalar>(x: &GroupJet2<S>, y: &GroupJet2<S>) -> Result<GroupJet2<S>> {
    if x.n != y.n {
        return Err(Error::DimensionMismatch {
            expected: x.n,
            got: y.n,
        });
    }
    let n = x.n;
    let mm = |a: &[S], b: &[S]| matmul(n, a, b);
    let g = mm(&x.g, &y.g);
    let g1 = add(&mm(&x.g1, &y.g), &mm(&x.g, &y.g1));
    let g2 = add(&mm(&x.g2, &y.g), &mm(&x.g, &y.g2));
    let g12 = add(
        &add(&mm(&x.g12, &y.g), &mm(&x.g1, &y.g2)),
        &add(&mm(&x.g2, &y.g1), &mm(&x.g, &y.g12)),
    );
    Ok(GroupJet2 { n, g, g1, g2, g12 })
}

/// Truncated inverse from `g⁻¹` by the Leibniz expansion.
pub fn jet2_inv<S: Scalar>(x: &GroupJet2<S>) -> Result<GroupJet2<S>> {
    let n = x.n;
    let mm = |a: &[S], b: &[S]| matmul(n, a, b);
    let y = inverse(n, &x.g)?;
    let y1 = neg(&mm(&mm(&y, &x.g1), &y));
    let y2 = neg(&mm(&mm(&y, &x.g2), &y));
    let inner = add(&add(&mm(&x.g12, &y), &mm(&x.g1, &y2)), &mm(&x.g2, &y1));
    let y12 = neg(&mm(&y, &inner));
    Ok(GroupJet2 {
        n,
        g: y,
        g1: y1,
        g2: y2,
        g12: y12,
    })
}

/// Least-squares coordinates in the algebra basis.
#[derive(Clone, Debug, PartialEq)]
struct Projector {
    basis: Vec<Vec<f64>>,
    /// `(BᵀB)⁻¹Bᵀ`, one row per basis element.
    pinv: Vec<Vec<f64>>,
}

impl Projector {
    fn new(spec: &MatrixGroupSpec) -> Result<Self> {
        let k = spec.dim();
        let nn = spec.n * spec.n;
        let b = DMatrix::from_fn(nn, k, |r, c| spec.algebra_basis[c][r]);
        let gram = b.transpose() * &b;
        let gram_inv = gram.try_inverse().ok_or(Error::SingularMatrix)?;
        // a rank-deficient basis shows up as a poorly conditioned Gram matrix
        let check = &gram_inv * (b.transpose() * &b);
        if (check - DMatrix::<f64>::identity(k, k)).abs().max() > 1e-9 {
            return Err(Error::InvalidFixture("algebra basis is linearly dependent".into()));
        }
        let p = gram_inv * b.transpose();
        Ok(Projector {
            basis: spec.algebra_basis.clone(),
            pinv: (0..k).map(|i| p.row(i).iter().copied().collect()).collect(),
        })
    }

    /// Coordinates of a matrix over any scalar; errors if the matrix is not
    /// reproduced by its coordinates.
    fn coords<S: Scalar>(&self, m: &[S]) -> Result<Vec<S>> {
        let x: Vec<S> = self
            .pinv
            .iter()
            .map(|row| {
                let mut acc = S::zero();
                for (p, e) in row.iter().zip(m) {
                    acc += *e * *p;
                }
                acc
            })
            .collect();
        let mut residual: f64 = 0.0;
        for (idx, e) in m.iter().enumerate() {
            let mut back = S::zero();
            for (b, c) in self.basis.iter().zip(&x) {
                back += *c * b[idx];
            }
            let d = back.dist(e);
            if d.is_nan() || d > residual {
                residual = d;
            }
        }
        if residual.is_nan() || residual > SPAN_TOL {
            return Err(Error::OutsideSpan { residual });
        }
        Ok(x)
    }
}

/// The flip of a matrix group, with the basis projector cached.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupFlip {
    pub spec: MatrixGroupSpec,
    proj: Projector,
}

impl GroupFlip {
    pub fn new(spec: MatrixGroupSpec) -> Result<Self> {
        spec.validate()?;
        let proj = Projector::new(&spec)?;
        Ok(GroupFlip { spec, proj })
    }

    /// The composite `cw ∘ 0v ∘ (c0pw)⁻¹` before projection.
    pub fn composite<S: Scalar>(&self, v: &[S], wh: &[S], wv: &[S]) -> Result<GroupJet2<S>> {
        let n = self.spec.n;
        let (vm, whm, wvm) = (self.spec.matrix(v), self.spec.matrix(wh), self.spec.matrix(wv));
        let e = identity::<S>(n);
        let z = zeros::<S>(n * n);
        let cw = GroupJet2::new(n, e.clone(), z.clone(), whm.clone(), wvm)?;
        let zero_v = GroupJet2::new(n, e.clone(), vm, z.clone(), z.clone())?;
        let c0pw = GroupJet2::new(n, e, z.clone(), whm, z)?;
        jet2_mul(&jet2_mul(&cw, &zero_v)?, &jet2_inv(&c0pw)?)
    }

    pub fn alpha<S: Scalar>(&self, v: &AElement<S>, w: &TAElement<S>) -> Result<TAElement<S>> {
        let k = self.spec.dim();
        for (len, what) in [(v.a.len(), k), (w.a.len(), k), (w.da.len(), k)] {
            if len != what {
                return Err(Error::DimensionMismatch {
                    expected: what,
                    got: len,
                });
            }
        }
        let out = self.composite(&v.a, &w.a, &w.da)?;
        Ok(TAElement {
            m: Vec::new(),
            a: self.proj.coords(&out.g1)?,
            dm: Vec::new(),
            da: self.proj.coords(&out.g12)?,
        })
    }

    /// Basis coordinates of a matrix in the algebra.
    pub fn coords(&self, m: &[f64]) -> Result<Vec<f64>> {
        self.proj.coords(m)
    }
}

/// `group_flip(spec, v, (w_H, w_V))`.
pub fn group_flip(spec: &MatrixGroupSpec, v: &[f64], wh: &[f64], wv: &[f64]) -> Result<TAElement<f64>> {
    let flip = GroupFlip::new(spec.clone())?;
    flip.alpha(
        &AElement::new(Vec::new(), v.to_vec()),
        &TAElement::new(Vec::new(), wh.to_vec(), Vec::new(), wv.to_vec()),
    )
}

/// A point of `T²(M × M)` for `M = ℝⁿ`: target and source jets, each
/// coordinate stored as `[∅, 1, 2, 12]`.
#[derive(Clone, Debug, PartialEq)]
pub struct PairJet2<S = f64> {
    pub t: Vec<[S; 4]>,
    pub s: Vec<[S; 4]>,
}

impl<S: Scalar> PairJet2<S> {
    /// Composition `(t, s)∘(t', s') = (t, s')`, defined when `s = t'`.
    pub fn compose(&self, other: &Self) -> Self {
        PairJet2 {
            t: self.t.clone(),
            s: other.s.clone(),
        }
    }

    pub fn inverse(&self) -> Self {
        PairJet2 {
            t: self.s.clone(),
            s: self.t.clone(),
        }
    }

    /// How far `s(self)` is from `t(other)`.
    pub fn composable_residual(&self, other: &Self) -> f64 {
        let mut r: f64 = 0.0;
        for (a, b) in self.s.iter().zip(&other.t) {
            for (x, y) in a.iter().zip(b) {
                let d = x.dist(y);
                if d.is_nan() || d > r {
                    r = d;
                }
            }
        }
        r
    }
}

/// The flip of the pair groupoid of `ℝⁿ`, whose algebroid is `Tℝⁿ`.
#[derive(Clone, Debug, PartialEq)]
pub struct PairFlip {
    pub n: usize,
}

impl PairFlip {
    /// `cw` with the algebroid direction second: target `(m; ṁ, a, ȧ)`,
    /// source `(m; ṁ, 0, 0)`.
    fn cw<S: Scalar>(w: &TAElement<S>) -> PairJet2<S> {
        let z = S::zero();
        PairJet2 {
            t: (0..w.m.len()).map(|i| [w.m[i], w.dm[i], w.a[i], w.da[i]]).collect(),
            s: (0..w.m.len()).map(|i| [w.m[i], w.dm[i], z, z]).collect(),
        }
    }

    fn zero_v<S: Scalar>(v: &AElement<S>) -> PairJet2<S> {
        let z = S::zero();
        PairJet2 {
            t: (0..v.m.len()).map(|i| [v.m[i], v.a[i], z, z]).collect(),
            s: v.m.iter().map(|m| [*m, z, z, z]).collect(),
        }
    }

    fn c0pw<S: Scalar>(w: &TAElement<S>) -> PairJet2<S> {
        let z = S::zero();
        PairJet2 {
            t: (0..w.m.len()).map(|i| [w.m[i], z, w.a[i], z]).collect(),
            s: w.m.iter().map(|m| [*m, z, z, z]).collect(),
        }
    }

    /// The three factors of the flip formula, in order.
    pub fn factors<S: Scalar>(v: &AElement<S>, w: &TAElement<S>) -> [PairJet2<S>; 3] {
        [Self::cw(w), Self::zero_v(v), Self::c0pw(w).inverse()]
    }

    /// Reads a point of `T²(M × M)` with source fixed in direction 1 as a
    /// point of `TA`: `m = s[∅]`, `ṁ = s[2]`, `a = t[1]`, `ȧ = t[12]`.
    fn read<S: Scalar>(x: &PairJet2<S>) -> TAElement<S> {
        TAElement {
            m: x.s.iter().map(|c| c[0]).collect(),
            a: x.t.iter().map(|c| c[1]).collect(),
            dm: x.s.iter().map(|c| c[2]).collect(),
            da: x.t.iter().map(|c| c[3]).collect(),
        }
    }

    pub fn alpha<S: Scalar>(&self, v: &AElement<S>, w: &TAElement<S>) -> Result<TAElement<S>> {
        for len in [v.m.len(), v.a.len(), w.m.len(), w.a.len(), w.dm.len(), w.da.len()] {
            if len != self.n {
                return Err(Error::DimensionMismatch {
                    expected: self.n,
                    got: len,
                });
            }
        }
        let [a, b, c] = Self::factors(v, w);
        Ok(Self::read(&a.compose(&b).compose(&c)))
    }
}

/// The pair groupoid of `ℝⁿ` as an involution algebroid over `ℝⁿ` with
/// identity anchor.
pub fn pair_groupoid(n: usize) -> InvolutionAlgebroid {
    InvolutionAlgebroid {
        name: format!("pair-groupoid({n})"),
        anchor: Anchor::new(n, n, identity_anchor(n)).expect("shape"),
        flip: FlipMap::Pair(PairFlip { n }),
    }
}

fn identity_anchor(n: usize) -> PolyMap {
    let mut vals = vec![0.0; n * n];
    for i in 0..n {
        vals[i * n + i] = 1.0;
    }
    PolyMap::constant(n, &vals)
}

/// The group's algebra as an involution algebroid over a point.
pub fn group_algebroid(spec: &MatrixGroupSpec) -> Result<InvolutionAlgebroid> {
    let k = spec.dim();
    Ok(InvolutionAlgebroid {
        name: spec.name.clone(),
        anchor: Anchor::new(0, k, PolyMap::zero(0, 0))?,
        flip: FlipMap::Group(GroupFlip::new(spec.clone())?),
    })
}

/// Structure constants `K^k_{ij}` of the matrix commutator in the basis.
pub fn commutator_constants(spec: &MatrixGroupSpec) -> Result<Vec<Vec<Vec<f64>>>> {
    let flip = GroupFlip::new(spec.clone())?;
    spec.algebra_basis
        .iter()
        .map(|x| {
            spec.algebra_basis
                .iter()
                .map(|y| flip.coords(&commutator(spec.n, x, y)))
                .collect()
        })
        .collect()
}

fn scaled_table(t: &[Vec<Vec<f64>>], s: f64) -> Vec<Vec<Vec<f64>>> {
    t.iter()
        .map(|r| r.iter().map(|c| c.iter().map(|x| x * s).collect()).collect())
        .collect()
}

fn table_dist(a: &[Vec<Vec<f64>>], b: &[Vec<Vec<f64>>]) -> f64 {
    let fa: Vec<f64> = a.iter().flatten().flatten().copied().collect();
    let fb: Vec<f64> = b.iter().flatten().flatten().copied().collect();
    crate::scalar::max_dist(&fa, &fb)
}

/// Wraps the group flip as an involution algebroid, runs the axiom suite,
/// recovers the bracket and determines its sign against the matrix
/// commutator.
pub fn differentiate_group(spec: &MatrixGroupSpec, samples: usize, seed: u64) -> Result<(InvolutionAlgebroid, Report)> {
    let inv = group_algebroid(spec)?;
    let mut report = Report::new(format!("differentiate-group:{}", spec.name));
    report.absorb("", algebroid::check_axioms(&inv, samples, seed));
    report.absorb("", algebroid::check_yang_baxter(&inv, samples, seed));

    let k = spec.dim();
    let FlipMap::Group(flip) = &inv.flip else { unreachable!() };

    // the composite never moves in the second direction
    let mut g2: f64 = 0.0;
    let mut rng = crate::sampling::rng_for(seed, usize::MAX - 1);
    for _ in 0..samples.max(1) {
        let v = AElement::random(&mut rng, 0, k);
        let w = TAElement::random(&mut rng, 0, k);
        let c = flip.composite(&v.a, &w.a, &w.da)?;
        g2 = g2.max(crate::scalar::max_dist(&c.g2, &zeros(c.g2.len())));
    }
    report.push(CheckResult::new("source-constant", samples.max(1), seed, g2, EXACT_TOL));

    // bracket of constant sections, read through the flip
    let frame: Vec<SectionSpec> = (0..k).map(|i| SectionSpec::new(PolyMap::constant(0, &unit(k, i)))).collect();
    let mut recovered = vec![vec![vec![0.0; k]; k]; k];
    for i in 0..k {
        for j in 0..k {
            recovered[i][j] = algebroid::bracket_from_flip(&inv, &frame[i], &frame[j], &[])?;
        }
    }
    let kmat = commutator_constants(spec)?;
    let plus = table_dist(&recovered, &kmat);
    let minus = table_dist(&recovered, &scaled_table(&kmat, -1.0));
    let sign = if minus < plus { -1.0 } else { 1.0 };
    report.push(CheckResult::new("structure-constants", k * k, seed, plus.min(minus), LOOSE_TOL));

    // the sign oracle: exactly one of C = ±K reproduces the group flip
    let anchor = inv.anchor.clone();
    let flip_for = |s: f64| -> Result<InvolutionAlgebroid> {
        let spec = AlgebroidSpec::from_constants(format!("{}{}", if s > 0.0 { "+" } else { "-" }, spec.name), anchor.clone(), &scaled_table(&kmat, s))?;
        Ok(InvolutionAlgebroid::from_spec(&spec))
    };
    let against = |s: f64| -> Result<f64> {
        Ok(compare_flips(&inv, &flip_for(s)?, "sign", samples.max(1), seed)[0].max_residual)
    };
    let (rp, rm) = (against(1.0)?, against(-1.0)?);
    let matched = if sign > 0.0 { rp } else { rm };
    let other = if sign > 0.0 { rm } else { rp };
    let abelian = kmat.iter().flatten().flatten().all(|x| *x == 0.0);
    report.push(CheckResult::new("sign-oracle", samples.max(1), seed, matched, LOOSE_TOL));
    if !abelian {
        // the rejected sign must genuinely disagree
        report.push(CheckResult::new(
            "sign-oracle-rejects-other",
            samples.max(1),
            seed,
            if other > 1e-6 { 0.0 } else { 1.0 },
            0.5,
        ));
    }

    let rec_spec = AlgebroidSpec::from_constants(format!("bracket({})", spec.name), inv.anchor.clone(), &recovered)?;
    let wf = algebroid::check_well_formed(&rec_spec, 1, seed);
    report.absorb("bracket", wf);

    report.note(
        "bracket-sign",
        if abelian {
            "0 (abelian: every bracket vanishes)".to_string()
        } else if sign < 0.0 {
            "-1: the flip induces minus the matrix commutator".to_string()
        } else {
            "+1: the flip induces the matrix commutator".to_string()
        },
    );
    report.note("structure-constants", constants_string(&recovered));
    Ok((inv, report))
}

/// `[[C^k_{01}, ...], ...]` listing only `i < j`.
fn constants_string(t: &[Vec<Vec<f64>>]) -> String {
    let n = t.len();
    let mut parts = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let c: Vec<String> = t[i][j].iter().map(|x| format!("{}", round_clean(*x))).collect();
            parts.push(format!("[e{},e{}]=({})", i + 1, j + 1, c.join(",")));
        }
    }
    parts.join(" ")
}

fn round_clean(x: f64) -> f64 {
    let r = (x * 1e12).round() / 1e12;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

/// The pair groupoid reproduces the canonical flip of `Tℝⁿ` exactly.
pub fn compare_pair_groupoid(n: usize, samples: usize, seed: u64) -> Result<Report> {
    let pair = pair_groupoid(n);
    let tangent = InvolutionAlgebroid::from_spec(&crate::catalog::algebroid(&format!("tangent({n})"))?);
    let mut r = Report::new(format!("pair-groupoid({n})"));
    r.extend(compare_flips(&pair, &tangent, "matches-tangent-flip", samples, seed));
    // α = cπ₁: the flip of w itself
    let checks = [crate::sampling::Check::new("is-c-of-w", EXACT_TOL)];
    r.extend(crate::sampling::run(samples, seed, &checks, |rng| {
        let m: Vec<f64> = AElement::random(rng, n, 0).m;
        let pe = algebroid::sample_prolongation(&pair.anchor, &m, rng);
        let d = match pair.alpha(&pe.v, &pe.w) {
            Ok(a) => a.dist(&TAElement::new(pe.w.m.clone(), pe.w.dm.clone(), pe.w.a.clone(), pe.w.da.clone())),
            Err(_) => f64::INFINITY,
        };
        crate::sampling::Outcome {
            residuals: vec![d],
            input: format!("{pe:?}"),
        }
    }));
    r.absorb("", algebroid::check_axioms(&pair, samples, seed));
    Ok(r)
}
