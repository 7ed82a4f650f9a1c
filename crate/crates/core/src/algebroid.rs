//! Lie-algebroid data, flip maps and the involution-algebroid axiom suite.
//!
//! The canonical coordinate flip is
//! `α(v, w) = (m, a_v, ρ(m)a_w, ȧ_w + C(m)(a_v, a_w))`.
//!
//! Points of `T²A` are depth-2 jets over `A`. When a map must be evaluated
//! on them (`T(α)`, `T(ρ)`), they are read as `TAElement<JetScalar>`: each
//! coordinate's base block is the jet `([∅], [1])` and its tangent block is
//! `([2], [12])`, so direction 1 is the new outer tangent.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bundle::{
    self, anchor_apply, directional, strong_difference, AElement, ConnectionSpec, Fiber, ScalarFieldSpec,
    SectionSpec, TAElement, VectorField,
};
use crate::error::{Error, Result};
use crate::groupoid::{GroupFlip, PairFlip};
use crate::jet::{self, JetPoint, JetScalar};
use crate::poly::PolyMap;
use crate::report::{CheckResult, Report};
use crate::sampling::{self, Check, Outcome};
use crate::scalar::{add_vec, max_dist, sub_vec, zeros, Scalar};

/// Tolerance for identities exact in exact arithmetic.
pub const EXACT_TOL: f64 = 1e-12;
/// Tolerance where polynomial cancellation accumulates rounding.
pub const LOOSE_TOL: f64 = 1e-9;

/// The anchored bundle underlying an algebroid: `ρ^α_j(m)` stored row-major
/// at `α·dim_A + j`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Anchor {
    pub dim_m: usize,
    pub dim_a: usize,
    pub rho: PolyMap,
}

impl Anchor {
    pub fn new(dim_m: usize, dim_a: usize, rho: PolyMap) -> Result<Self> {
        if rho.in_dim() != dim_m || rho.out_dim() != dim_m * dim_a {
            return Err(Error::DimensionMismatch {
                expected: dim_m * dim_a,
                got: rho.out_dim(),
            });
        }
        Ok(Anchor { dim_m, dim_a, rho })
    }

    pub fn apply<S: Scalar>(&self, m: &[S], a: &[S]) -> Vec<S> {
        anchor_apply(&self.rho, m, a)
    }

    /// `T(ρ)w` as a depth-2 jet over `M`: `[∅] = m`, `[1] = ṁ`,
    /// `[2] = ρ(m)a`, `[12]` its derivative along `(ṁ, ȧ)`.
    pub fn t_rho(&self, w: &TAElement<f64>) -> JetPoint {
        let v = ta_as_jet(w);
        let r = self.apply(&v.m, &v.a);
        let blocks = vec![
            w.m.clone(),
            w.dm.clone(),
            r.iter().map(|j| j.coeff(0)).collect(),
            r.iter().map(|j| j.coeff(1)).collect(),
        ];
        JetPoint::from_blocks(2, &blocks).expect("depth 2")
    }
}

/// Trivialized Lie-algebroid data. Structure functions are stored for
/// `i < j` only; `C^k_{ji} = −C^k_{ij}` by construction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlgebroidSpec {
    pub name: String,
    pub anchor: Anchor,
    /// Output index `pair(i, j)·dim_A + k` over pairs `i < j` in
    /// lexicographic order.
    pub c: PolyMap,
}

pub fn pair_count(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

/// Position of the pair `(i, j)`, `i < j`, in lexicographic order.
pub fn pair_index(n: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j && j < n);
    i * n - i * (i + 1) / 2 + (j - i - 1)
}

impl AlgebroidSpec {
    pub fn new(name: impl Into<String>, anchor: Anchor, c: PolyMap) -> Result<Self> {
        let n = anchor.dim_a;
        if c.in_dim() != anchor.dim_m || c.out_dim() != pair_count(n) * n {
            return Err(Error::DimensionMismatch {
                expected: pair_count(n) * n,
                got: c.out_dim(),
            });
        }
        Ok(AlgebroidSpec {
            name: name.into(),
            anchor,
            c,
        })
    }

    /// Builds constant structure functions from a full table
    /// `table[i][j][k] = C^k_{ij}`, rejecting tables that are not
    /// antisymmetric.
    pub fn from_constants(name: impl Into<String>, anchor: Anchor, table: &[Vec<Vec<f64>>]) -> Result<Self> {
        let n = anchor.dim_a;
        let mut vals = vec![0.0; pair_count(n) * n];
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let a = table[i][j][k];
                    let b = table[j][i][k];
                    if (a + b).abs() > EXACT_TOL {
                        return Err(Error::InvalidFixture(format!(
                            "structure constants not antisymmetric at ({i},{j},{k})"
                        )));
                    }
                    if i < j {
                        vals[pair_index(n, i, j) * n + k] = a;
                    }
                }
            }
        }
        let c = PolyMap::constant(anchor.dim_m, &vals);
        AlgebroidSpec::new(name, anchor, c)
    }

    pub fn dim_m(&self) -> usize {
        self.anchor.dim_m
    }

    pub fn dim_a(&self) -> usize {
        self.anchor.dim_a
    }

    /// `C(m)(u, v)^k = Σ_{i<j} C^k_{ij}(m)(u^i v^j − u^j v^i)`.
    pub fn structure<S: Scalar>(&self, m: &[S], u: &[S], v: &[S]) -> Vec<S> {
        let n = self.dim_a();
        let c = self.c.eval(m);
        let mut out = zeros(n);
        for i in 0..n {
            for j in (i + 1)..n {
                let w = u[i] * v[j] - u[j] * v[i];
                let base = pair_index(n, i, j) * n;
                for (k, o) in out.iter_mut().enumerate() {
                    *o += c[base + k] * w;
                }
            }
        }
        out
    }

    /// Whether this is `TM` itself: identity anchor and zero bracket on the
    /// coordinate frame.
    pub fn is_tangent(&self) -> bool {
        let n = self.dim_a();
        if self.dim_m() != n || self.anchor.rho.degree() > 0 || self.c.degree() > 0 {
            return false;
        }
        let origin = vec![0.0; n];
        let rho = self.anchor.rho.eval(&origin);
        let id = (0..n).all(|i| (0..n).all(|j| rho[i * n + j] == if i == j { 1.0 } else { 0.0 }));
        id && self.c.eval(&origin).iter().all(|c| *c == 0.0)
    }

    /// Structure constants at a point: `out[i][j][k] = C^k_{ij}(m)`.
    pub fn constants_at(&self, m: &[f64]) -> Vec<Vec<Vec<f64>>> {
        let n = self.dim_a();
        (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        let (ei, ej) = (unit(n, i), unit(n, j));
                        self.structure(m, &ei, &ej)
                    })
                    .collect()
            })
            .collect()
    }
}

pub(crate) fn unit(n: usize, i: usize) -> Vec<f64> {
    let mut e = vec![0.0; n];
    e[i] = 1.0;
    e
}

/// How α is evaluated.
#[derive(Clone, Debug)]
pub enum FlipMap {
    /// The canonical coordinate form.
    Structure(AlgebroidSpec),
    /// `α(v, w) = H(v, ρpw) +_p (λα₂ +_{Tπ} 0v)` with
    /// `α₂ = KT(v̄)ρpw − KT(p̄w)ρv + Kw − [p̄w, v̄]`, constant extensions.
    Connection(AlgebroidSpec, ConnectionSpec),
    /// `α(v, w) = cw ∘ 0v ∘ (c0pw)⁻¹` in a matrix group.
    Group(GroupFlip),
    /// The same formula in the pair groupoid of `ℝ^n`.
    Pair(PairFlip),
}

/// An anchored bundle with an evaluable flip.
#[derive(Clone, Debug)]
pub struct InvolutionAlgebroid {
    pub name: String,
    pub anchor: Anchor,
    pub flip: FlipMap,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProlongElement {
    pub v: AElement<f64>,
    pub w: TAElement<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DoubleProlongElement {
    pub v: AElement<f64>,
    pub w: TAElement<f64>,
    /// A point of `T²A` as a depth-2 jet over `A`.
    pub x: JetPoint,
}

impl InvolutionAlgebroid {
    /// The canonical flip of a Lie-algebroid spec.
    pub fn from_spec(spec: &AlgebroidSpec) -> Self {
        InvolutionAlgebroid {
            name: spec.name.clone(),
            anchor: spec.anchor.clone(),
            flip: FlipMap::Structure(spec.clone()),
        }
    }

    pub fn dim_m(&self) -> usize {
        self.anchor.dim_m
    }

    pub fn dim_a(&self) -> usize {
        self.anchor.dim_a
    }

    /// Evaluates α on any scalar type; on jets this is `T(α)`. The
    /// prolongation condition is not checked here.
    pub fn alpha<S: Scalar>(&self, v: &AElement<S>, w: &TAElement<S>) -> Result<TAElement<S>> {
        match &self.flip {
            FlipMap::Structure(spec) => Ok(structure_alpha(spec, v, w)),
            FlipMap::Connection(spec, conn) => connection_alpha(spec, conn, v, w),
            FlipMap::Group(g) => g.alpha(v, w),
            FlipMap::Pair(p) => p.alpha(v, w),
        }
    }

    /// `T(α)(u, x)` for `u ∈ TA` and `x ∈ T²A`.
    pub fn t_alpha(&self, u: &TAElement<f64>, x: &JetPoint) -> Result<JetPoint> {
        let out = self.alpha(&ta_as_jet(u), &t2_as_tajet(x, self.dim_m()))?;
        Ok(tajet_as_t2(&out))
    }

    /// Residual of the prolongation condition `ρv = T(π)w`.
    pub fn prolong_residual(&self, v: &AElement<f64>, w: &TAElement<f64>) -> f64 {
        let rv = self.anchor.apply(&v.m, &v.a);
        max_dist(&v.m, &w.m).max(max_dist(&rv, &w.dm))
    }

    /// Residuals `ρπ₀ = T(π)π₁` and `cT²(π)π₂ = T(ρ)π₁`.
    pub fn double_prolong_residual(&self, e: &DoubleProlongElement) -> f64 {
        let first = self.prolong_residual(&e.v, &e.w);
        let t2pi = t2_pi(&e.x, self.dim_m());
        let second = match jet::flip_c(&t2pi, 1, 2) {
            Ok(c) => c.max_abs_diff(&self.anchor.t_rho(&e.w)),
            Err(_) => f64::INFINITY,
        };
        first.max(second)
    }
}

fn structure_alpha<S: Scalar>(spec: &AlgebroidSpec, v: &AElement<S>, w: &TAElement<S>) -> TAElement<S> {
    let rho_aw = spec.anchor.apply(&w.m, &w.a);
    let corr = spec.structure(&v.m, &v.a, &w.a);
    TAElement {
        m: v.m.clone(),
        a: v.a.clone(),
        dm: rho_aw,
        da: add_vec(&w.da, &corr),
    }
}

fn connection_alpha<S: Scalar>(
    spec: &AlgebroidSpec,
    conn: &ConnectionSpec,
    v: &AElement<S>,
    w: &TAElement<S>,
) -> Result<TAElement<S>> {
    let m = &v.m;
    let dim_a = spec.dim_a();
    let rho_pw = spec.anchor.apply(&w.m, &w.a);
    let rho_v = spec.anchor.apply(m, &v.a);
    // constant extensions: T(v̄)(m, u) = (m, a_v, u, 0)
    let t_const = |a: &[S], u: &[S]| TAElement {
        m: m.clone(),
        a: a.to_vec(),
        dm: u.to_vec(),
        da: zeros(dim_a),
    };
    let k1 = conn.k(&t_const(&v.a, &rho_pw)).a;
    let k2 = conn.k(&t_const(&w.a, &rho_v)).a;
    let kw = conn.k(w).a;
    // the bracket of constant sections is C(m)(p̄w, v̄)
    let br = spec.structure(m, &w.a, &v.a);
    let alpha2 = sub_vec(&add_vec(&sub_vec(&k1, &k2), &kw), &br);
    let horiz = conn.h(v, &rho_pw);
    let vert = bundle::add_in_fiber(
        &bundle::lift_lambda(&AElement {
            m: m.clone(),
            a: alpha2,
        }),
        &TAElement::zero_at(v),
        Fiber::TPi,
    )?;
    bundle::add_in_fiber(&horiz, &vert, Fiber::P)
}

/// `flip_from_bracket`: α through an arbitrary connection.
pub fn flip_from_bracket(spec: &AlgebroidSpec, conn: &ConnectionSpec) -> Result<InvolutionAlgebroid> {
    if conn.dim_m != spec.dim_m() || conn.dim_a != spec.dim_a() {
        return Err(Error::DimensionMismatch {
            expected: spec.dim_a(),
            got: conn.dim_a,
        });
    }
    Ok(InvolutionAlgebroid {
        name: spec.name.clone(),
        anchor: spec.anchor.clone(),
        flip: FlipMap::Connection(spec.clone(), conn.clone()),
    })
}

/// Reads `u ∈ TA` as a point of `A` over jets in one direction.
pub fn ta_as_jet(u: &TAElement<f64>) -> AElement<JetScalar> {
    let pair = |x: &[f64], dx: &[f64]| -> Vec<JetScalar> {
        x.iter()
            .zip(dx)
            .map(|(a, b)| JetScalar::new(1, &[*a, *b]).expect("depth 1"))
            .collect()
    };
    AElement {
        m: pair(&u.m, &u.dm),
        a: pair(&u.a, &u.da),
    }
}

pub fn jet_as_ta(v: &AElement<JetScalar>) -> TAElement<f64> {
    TAElement {
        m: v.m.iter().map(|j| j.coeff(0)).collect(),
        a: v.a.iter().map(|j| j.coeff(0)).collect(),
        dm: v.m.iter().map(|j| j.coeff(1)).collect(),
        da: v.a.iter().map(|j| j.coeff(1)).collect(),
    }
}

/// Reads a depth-2 jet over `A` as `TA` over one-direction jets.
pub fn t2_as_tajet(x: &JetPoint, dim_m: usize) -> TAElement<JetScalar> {
    let split = |e: &JetScalar| {
        (
            JetScalar::new(1, &[e.coeff(0), e.coeff(1)]).expect("depth 1"),
            JetScalar::new(1, &[e.coeff(2), e.coeff(3)]).expect("depth 1"),
        )
    };
    let (bases, tangents): (Vec<_>, Vec<_>) = x.entries().iter().map(split).unzip();
    TAElement {
        m: bases[..dim_m].to_vec(),
        a: bases[dim_m..].to_vec(),
        dm: tangents[..dim_m].to_vec(),
        da: tangents[dim_m..].to_vec(),
    }
}

pub fn tajet_as_t2(y: &TAElement<JetScalar>) -> JetPoint {
    let join = |b: &JetScalar, t: &JetScalar| {
        JetScalar::new(2, &[b.coeff(0), b.coeff(1), t.coeff(0), t.coeff(1)]).expect("depth 2")
    };
    let mut entries: Vec<JetScalar> = y.m.iter().zip(&y.dm).map(|(b, t)| join(b, t)).collect();
    entries.extend(y.a.iter().zip(&y.da).map(|(b, t)| join(b, t)));
    JetPoint::with_depth(2, entries).expect("depth 2")
}

/// `T²(π)x`: the `M` coordinates of a depth-2 jet over `A`.
pub fn t2_pi(x: &JetPoint, dim_m: usize) -> JetPoint {
    JetPoint::with_depth(x.depth(), x.entries()[..dim_m].to_vec()).expect("same depth")
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..=1.0)).collect()
}

/// Random `(v, w)` with `ṁ_w = ρ(m)a_v`.
pub fn sample_prolongation<R: Rng + ?Sized>(anchor: &Anchor, m: &[f64], rng: &mut R) -> ProlongElement {
    let av = uniform(rng, anchor.dim_a);
    let aw = uniform(rng, anchor.dim_a);
    let daw = uniform(rng, anchor.dim_a);
    let dm = anchor.apply(m, &av);
    ProlongElement {
        v: AElement::new(m.to_vec(), av),
        w: TAElement::new(m.to_vec(), aw, dm, daw),
    }
}

/// Random `(v, w, x)` with `T²(π)x = cT(ρ)w`.
pub fn sample_double_prolongation<R: Rng + ?Sized>(anchor: &Anchor, m: &[f64], rng: &mut R) -> DoubleProlongElement {
    let ProlongElement { v, w } = sample_prolongation(anchor, m, rng);
    let dim = anchor.dim_m + anchor.dim_a;
    let free = JetPoint::random(rng, dim, 2).expect("depth 2");
    let target = jet::flip_c(&anchor.t_rho(&w), 1, 2).expect("depth 2");
    let mut entries = free.into_entries();
    entries[..anchor.dim_m].copy_from_slice(target.entries());
    let x = JetPoint::with_depth(2, entries).expect("depth 2");
    DoubleProlongElement { v, w, x }
}

/// `σ(v, w) = (pw, α(v, w))`.
pub fn sigma(inv: &InvolutionAlgebroid, pe: &ProlongElement) -> Result<ProlongElement> {
    let residual = inv.prolong_residual(&pe.v, &pe.w);
    if !(residual <= EXACT_TOL) {
        return Err(Error::Membership {
            what: "prolongation".into(),
            residual,
        });
    }
    Ok(ProlongElement {
        v: pe.w.p(),
        w: inv.alpha(&pe.v, &pe.w)?,
    })
}

/// A base point with coordinates uniform in `[-1, 1]`.
pub fn random_base<R: Rng + ?Sized>(rng: &mut R, dim_m: usize) -> Vec<f64> {
    uniform(rng, dim_m)
}

/// Every involution-algebroid axiom on random (double) prolongations.
pub fn check_axioms(inv: &InvolutionAlgebroid, samples: usize, seed: u64) -> Report {
    let checks = [
        Check::new("unit", EXACT_TOL),
        Check::new("inv", EXACT_TOL),
        Check::new("base", EXACT_TOL),
        Check::new("source", LOOSE_TOL),
        Check::new("target", LOOSE_TOL),
        Check::new("zero-sections", EXACT_TOL),
        Check::new("flip", LOOSE_TOL),
        Check::new("linear-vertical", LOOSE_TOL),
        Check::new("linear-horizontal", LOOSE_TOL),
    ];
    let results = sampling::run(samples, seed, &checks, |rng| {
        axiom_sample(inv, rng).unwrap_or_else(|e| Outcome::failed(checks.len(), format!("error: {e}")))
    });
    let mut r = Report::new(format!("axioms:{}", inv.name));
    r.extend(results);
    r
}

fn axiom_sample<R: Rng + ?Sized>(inv: &InvolutionAlgebroid, rng: &mut R) -> Result<Outcome> {
    let (dim_m, dim_a) = (inv.dim_m(), inv.dim_a());
    let m = random_base(rng, dim_m);
    let e = sample_double_prolongation(&inv.anchor, &m, rng);
    let (v, w, x) = (&e.v, &e.w, &e.x);
    let alpha = inv.alpha(v, w)?;

    // α(ξπv, λv) = λv
    let lv = bundle::lift_lambda(v);
    let unit = inv.alpha(&AElement::zero_over(&m, dim_a), &lv)?.dist(&lv);

    // α(pw, α(v, w)) = w
    let involution = inv.alpha(&w.p(), &alpha)?.dist(w);

    // pα = π₀
    let base = alpha.p().dist(v);

    // T(π)α = ρpw
    let (am, adm) = alpha.t_pi();
    let source = max_dist(&am, &m).max(max_dist(&adm, &inv.anchor.apply(&m, &w.a)));

    // T(ρ)α = cT(ρ)w
    let target = inv
        .anchor
        .t_rho(&alpha)
        .max_abs_diff(&jet::flip_c(&inv.anchor.t_rho(w), 1, 2)?);

    // α(ξπa, 0a) = T(ξ)ρa and α(a, T(ξ)ρa) = 0a
    let a = AElement::new(m.clone(), w.a.clone());
    let rho_a = inv.anchor.apply(&m, &a.a);
    let txi = TAElement::t_xi(&m, &rho_a, dim_a);
    let zero_a = TAElement::zero_at(&a);
    let z1 = inv.alpha(&AElement::zero_over(&m, dim_a), &zero_a)?.dist(&txi);
    let z2 = inv.alpha(&a, &txi)?.dist(&zero_a);
    let zero_sections = z1.max(z2);

    // T(α)(α(v,w), x) = cT(α)(α(v, px), cT(α)(w, cx))
    let lhs = inv.t_alpha(&alpha, x)?;
    let px = TAElement::from_jet(&jet::proj_p(x, 1)?, dim_m)?;
    let inner = jet::flip_c(&inv.t_alpha(w, &jet::flip_c(x, 1, 2)?)?, 1, 2)?;
    let rhs = jet::flip_c(&inv.t_alpha(&inv.alpha(v, &px)?, &inner)?, 1, 2)?;
    let flip = lhs.max_abs_diff(&rhs);

    // T(α)(0v, cT(λ)w) = lα(v, w)
    let ctl_w = jet::flip_c(&t_lambda(w), 1, 2)?;
    let lin_v = inv
        .t_alpha(&TAElement::zero_at(v), &ctl_w)?
        .max_abs_diff(&jet::lift_l(&alpha.to_jet())?);

    // T(α)(λv, lw) = cT(λ)α(v, w)
    let lw = jet::lift_l(&w.to_jet())?;
    let lin_h = inv
        .t_alpha(&lv, &lw)?
        .max_abs_diff(&jet::flip_c(&t_lambda(&alpha), 1, 2)?);

    Ok(Outcome {
        residuals: vec![
            unit,
            involution,
            base,
            source,
            target,
            zero_sections,
            flip,
            lin_v,
            lin_h,
        ],
        input: format!("v={:?} w={:?} x={:?}", e.v, e.w, e.x),
    })
}

/// `T(λ)u` as a depth-2 jet over `A`: λ applied to the jet `u`.
pub fn t_lambda(u: &TAElement<f64>) -> JetPoint {
    let lifted = bundle::lift_lambda(&ta_as_jet(u));
    tajet_as_t2(&lifted)
}

/// The seven-point permutation identity behind the flip axiom of a Lie
/// algebroid. Returns the three tuples `(01)(45)(13)(24)(01)(45)`,
/// `(03)(25)` and `(13)(24)(01)(45)(13)(24)` applied to `0..7`.
pub fn s7_words() -> [[usize; 7]; 3] {
    fn apply(word: &[(usize, usize)]) -> [usize; 7] {
        let mut t = [0, 1, 2, 3, 4, 5, 6];
        for &(i, j) in word {
            t.swap(i, j);
        }
        t
    }
    [
        apply(&[(0, 1), (4, 5), (1, 3), (2, 4), (0, 1), (4, 5)]),
        apply(&[(0, 3), (2, 5)]),
        apply(&[(1, 3), (2, 4), (0, 1), (4, 5), (1, 3), (2, 4)]),
    ]
}

type Triple = (AElement<f64>, TAElement<f64>, JetPoint);

fn sigma_times_c(inv: &InvolutionAlgebroid, t: &Triple) -> Result<Triple> {
    let (v, w, x) = t;
    Ok((w.p(), inv.alpha(v, w)?, jet::flip_c(x, 1, 2)?))
}

fn id_times_t_sigma(inv: &InvolutionAlgebroid, t: &Triple) -> Result<Triple> {
    let (v, w, x) = t;
    let tpx = TAElement::from_jet(&jet::proj_p(x, 2)?, inv.dim_m())?;
    Ok((v.clone(), tpx, inv.t_alpha(w, x)?))
}

fn triple_dist(a: &Triple, b: &Triple) -> f64 {
    a.0.dist(&b.0).max(a.1.dist(&b.1)).max(a.2.max_abs_diff(&b.2))
}

/// `(σ×c)(id×Tσ)(σ×c) = (id×Tσ)(σ×c)(id×Tσ)` on random triples, plus the
/// discrete permutation identity.
pub fn check_yang_baxter(inv: &InvolutionAlgebroid, samples: usize, seed: u64) -> Report {
    let mut r = Report::new(format!("yang-baxter:{}", inv.name));
    if samples == 0 {
        return r;
    }
    let [lhs, mid, rhs] = s7_words();
    let perm = if lhs == mid && mid == rhs { 0.0 } else { 1.0 };
    r.push(
        CheckResult::new("s7-permutation", 1, seed, perm, 0.5)
            .with_input(format!("{lhs:?} {mid:?} {rhs:?}")),
    );
    let checks = [Check::new("yang-baxter", LOOSE_TOL)];
    r.extend(sampling::run(samples, seed, &checks, |rng| {
        yb_sample(inv, rng).unwrap_or_else(|e| Outcome::failed(1, format!("error: {e}")))
    }));
    r
}

fn yb_sample<R: Rng + ?Sized>(inv: &InvolutionAlgebroid, rng: &mut R) -> Result<Outcome> {
    let m = random_base(rng, inv.dim_m());
    let e = sample_double_prolongation(&inv.anchor, &m, rng);
    // (w, cx) lies in the tangent prolongation
    let t: Triple = (e.v.clone(), e.w.clone(), jet::flip_c(&e.x, 1, 2)?);
    let l = sigma_times_c(inv, &id_times_t_sigma(inv, &sigma_times_c(inv, &t)?)?)?;
    let r = id_times_t_sigma(inv, &sigma_times_c(inv, &id_times_t_sigma(inv, &t)?)?)?;
    Ok(Outcome {
        residuals: vec![triple_dist(&l, &r)],
        input: format!("v={:?} w={:?} x={:?}", e.v, e.w, e.x),
    })
}

/// Sections `M → A`, evaluable on any scalar.
pub trait Section: Sync {
    fn dim_m(&self) -> usize;
    fn dim_a(&self) -> usize;
    fn eval<S: Scalar>(&self, m: &[S]) -> Vec<S>;
}

impl Section for SectionSpec {
    fn dim_m(&self) -> usize {
        self.x_poly.in_dim()
    }

    fn dim_a(&self) -> usize {
        self.x_poly.out_dim()
    }

    fn eval<S: Scalar>(&self, m: &[S]) -> Vec<S> {
        self.x_poly.eval(m)
    }
}

impl<X: Section> Section for &X {
    fn dim_m(&self) -> usize {
        (*self).dim_m()
    }

    fn dim_a(&self) -> usize {
        (*self).dim_a()
    }

    fn eval<S: Scalar>(&self, m: &[S]) -> Vec<S> {
        (*self).eval(m)
    }
}

/// A section seen as a map between coordinate spaces, for differentiation.
struct AsMap<'a, X>(&'a X);

impl<X: Section> VectorField for AsMap<'_, X> {
    fn dim(&self) -> usize {
        self.0.dim_m()
    }

    fn eval<S: Scalar>(&self, x: &[S]) -> Vec<S> {
        self.0.eval(x)
    }
}

pub struct SumSection<X, Y>(pub X, pub Y);

impl<X: Section, Y: Section> Section for SumSection<X, Y> {
    fn dim_m(&self) -> usize {
        self.0.dim_m()
    }

    fn dim_a(&self) -> usize {
        self.0.dim_a()
    }

    fn eval<S: Scalar>(&self, m: &[S]) -> Vec<S> {
        add_vec(&self.0.eval(m), &self.1.eval(m))
    }
}

pub struct ScaledSection<X>(pub f64, pub X);

impl<X: Section> Section for ScaledSection<X> {
    fn dim_m(&self) -> usize {
        self.1.dim_m()
    }

    fn dim_a(&self) -> usize {
        self.1.dim_a()
    }

    fn eval<S: Scalar>(&self, m: &[S]) -> Vec<S> {
        self.1.eval(m).into_iter().map(|x| x * self.0).collect()
    }
}

/// `f • X`.
pub struct FieldTimes<'a, X> {
    pub f: &'a ScalarFieldSpec,
    pub x: X,
}

impl<X: Section> Section for FieldTimes<'_, X> {
    fn dim_m(&self) -> usize {
        self.x.dim_m()
    }

    fn dim_a(&self) -> usize {
        self.x.dim_a()
    }

    fn eval<S: Scalar>(&self, m: &[S]) -> Vec<S> {
        let f = self.f.f_poly.eval(m)[0];
        self.x.eval(m).into_iter().map(|x| f * x).collect()
    }
}

/// `[X, Y]_α = α_Y X ⊖ T(X)ρY`, i.e.
/// `α(X, T(Y)ρX) ⊖ T(X)ρY` pointwise.
pub struct FlipBracket<'a, X, Y> {
    pub inv: &'a InvolutionAlgebroid,
    pub x: X,
    pub y: Y,
}

impl<X: Section, Y: Section> Section for FlipBracket<'_, X, Y> {
    fn dim_m(&self) -> usize {
        self.x.dim_m()
    }

    fn dim_a(&self) -> usize {
        self.x.dim_a()
    }

    fn eval<S: Scalar>(&self, m: &[S]) -> Vec<S> {
        flip_bracket_at(self.inv, &self.x, &self.y, m)
            .unwrap_or_else(|_| vec![S::from_f64(f64::NAN); self.dim_a()])
    }
}

/// `T(X)u` for a tangent vector `u` at `m`: `(m, X(m), u, DX·u)`.
pub fn tangent_of_section<X: Section, S: Scalar>(x: &X, m: &[S], u: &[S]) -> TAElement<S> {
    TAElement {
        m: m.to_vec(),
        a: x.eval(m),
        dm: u.to_vec(),
        da: directional(&AsMap(x), m, u),
    }
}

fn flip_bracket_at<X: Section, Y: Section, S: Scalar>(
    inv: &InvolutionAlgebroid,
    x: &X,
    y: &Y,
    m: &[S],
) -> Result<Vec<S>> {
    let xv = x.eval(m);
    let yv = y.eval(m);
    let rho_x = inv.anchor.apply(m, &xv);
    let rho_y = inv.anchor.apply(m, &yv);
    let a = inv.alpha(&AElement::new(m.to_vec(), xv), &tangent_of_section(y, m, &rho_x))?;
    let b = tangent_of_section(x, m, &rho_y);
    Ok(strong_difference(&a, &b)?.a)
}

/// `bracket_from_flip`: evaluates `[X, Y]_α` at a point.
pub fn bracket_from_flip<X: Section, Y: Section>(
    inv: &InvolutionAlgebroid,
    x: &X,
    y: &Y,
    m: &[f64],
) -> Result<Vec<f64>> {
    flip_bracket_at(inv, x, y, m)
}

/// `α_X(v) = α(v, T(X)ρv)`, a vector field on the total space of `A`.
pub struct AlphaField<'a, X> {
    pub inv: &'a InvolutionAlgebroid,
    pub x: X,
}

impl<X: Section> VectorField for AlphaField<'_, X> {
    fn dim(&self) -> usize {
        self.inv.dim_m() + self.inv.dim_a()
    }

    fn eval<S: Scalar>(&self, coords: &[S]) -> Vec<S> {
        let (m, a) = coords.split_at(self.inv.dim_m());
        let rho_v = self.inv.anchor.apply(m, a);
        let w = tangent_of_section(&self.x, m, &rho_v);
        match self.inv.alpha(&AElement::new(m.to_vec(), a.to_vec()), &w) {
            Ok(t) => [t.dm, t.da].concat(),
            Err(_) => vec![S::from_f64(f64::NAN); self.dim()],
        }
    }
}

/// `ρX`, a vector field on `M`.
pub struct AnchorField<'a, X> {
    pub anchor: &'a Anchor,
    pub x: X,
}

impl<X: Section> VectorField for AnchorField<'_, X> {
    fn dim(&self) -> usize {
        self.anchor.dim_m
    }

    fn eval<S: Scalar>(&self, m: &[S]) -> Vec<S> {
        self.anchor.apply(m, &self.x.eval(m))
    }
}

/// Random sections and a scalar field for the bracket laws.
pub fn random_sections(dim_m: usize, dim_a: usize, degree: u32, count: usize, seed: u64) -> Vec<SectionSpec> {
    let mut rng = sampling::rng_for(seed, usize::MAX);
    (0..count)
        .map(|_| SectionSpec::random(&mut rng, dim_m, dim_a, degree))
        .collect()
}

/// Bilinearity, antisymmetry, Jacobi, α-homomorphism, anchor morphism and
/// additivity of `X ↦ α_X`, on the first three given sections at random
/// base points.
pub fn check_bracket_laws(inv: &InvolutionAlgebroid, sections: &[SectionSpec], samples: usize, seed: u64) -> Result<Report> {
    if sections.len() < 3 {
        return Err(Error::InvalidArgument("bracket laws need three sections".into()));
    }
    let (x, y, z) = (&sections[0], &sections[1], &sections[2]);
    for s in [x, y, z] {
        if s.dim_m() != inv.dim_m() || s.dim_a() != inv.dim_a() {
            return Err(Error::DimensionMismatch {
                expected: inv.dim_a(),
                got: s.dim_a(),
            });
        }
    }
    let checks = [
        Check::new("bilinear", LOOSE_TOL),
        Check::new("antisymmetric", LOOSE_TOL),
        Check::new("jacobi", LOOSE_TOL),
        Check::new("alpha-homomorphism", LOOSE_TOL),
        Check::new("anchor-morphism", LOOSE_TOL),
        Check::new("alpha-additive", LOOSE_TOL),
    ];
    let results = sampling::run(samples, seed, &checks, |rng| {
        bracket_sample(inv, x, y, z, rng).unwrap_or_else(|e| Outcome::failed(checks.len(), format!("error: {e}")))
    });
    let mut r = Report::new(format!("bracket-laws:{}", inv.name));
    r.extend(results);
    Ok(r)
}

fn bracket_sample<R: Rng + ?Sized>(
    inv: &InvolutionAlgebroid,
    x: &SectionSpec,
    y: &SectionSpec,
    z: &SectionSpec,
    rng: &mut R,
) -> Result<Outcome> {
    let m = random_base(rng, inv.dim_m());
    let s: f64 = rng.random_range(-2.0..=2.0);
    let xy = bracket_from_flip(inv, x, y, &m)?;

    let lhs = bracket_from_flip(inv, &SumSection(x, ScaledSection(s, z)), y, &m)?;
    let rhs = add_vec(&xy, &bracket_from_flip(inv, z, y, &m)?.iter().map(|v| v * s).collect::<Vec<_>>());
    let lhs2 = bracket_from_flip(inv, x, &SumSection(y, ScaledSection(s, z)), &m)?;
    let rhs2 = add_vec(&xy, &bracket_from_flip(inv, x, z, &m)?.iter().map(|v| v * s).collect::<Vec<_>>());
    let bilinear = max_dist(&lhs, &rhs).max(max_dist(&lhs2, &rhs2));

    let yx = bracket_from_flip(inv, y, x, &m)?;
    let antisym = max_dist(&add_vec(&xy, &yx), &zeros(inv.dim_a()));

    let j1 = bracket_from_flip(inv, x, &FlipBracket { inv, x: y, y: z }, &m)?;
    let j2 = bracket_from_flip(inv, y, &FlipBracket { inv, x: z, y: x }, &m)?;
    let j3 = bracket_from_flip(inv, z, &FlipBracket { inv, x, y }, &m)?;
    let jacobi = max_dist(&add_vec(&add_vec(&j1, &j2), &j3), &zeros(inv.dim_a()));

    // α_{[X,Y]} = [α_X, α_Y] at a random point of A over m
    let a = uniform(rng, inv.dim_a());
    let pt = [m.clone(), a].concat();
    let ax = AlphaField { inv, x };
    let ay = AlphaField { inv, x: y };
    let axy = AlphaField {
        inv,
        x: FlipBracket { inv, x, y },
    };
    let hom = max_dist(&axy.eval(&pt), &bundle::vf_bracket_at(&ax, &ay, &pt)?);

    // ρ[X,Y] = [ρX, ρY]
    let rho_xy = inv.anchor.apply(&m, &xy);
    let vf = bundle::vf_bracket_at(
        &AnchorField {
            anchor: &inv.anchor,
            x,
        },
        &AnchorField {
            anchor: &inv.anchor,
            x: y,
        },
        &m,
    )?;
    let anchor = max_dist(&rho_xy, &vf);

    // α_{X+Y} = α_X + α_Y
    let axpy = AlphaField {
        inv,
        x: SumSection(x, y),
    };
    let additive = max_dist(&axpy.eval(&pt), &add_vec(&ax.eval(&pt), &ay.eval(&pt)));

    Ok(Outcome {
        residuals: vec![bilinear, antisym, jacobi, hom, anchor, additive],
        input: format!("m={m:?} point={pt:?} s={s}"),
    })
}

/// `[X, fY] − f[X, Y] − 𝓛_{ρX}(f) Y` at random base points.
pub fn check_leibniz(
    inv: &InvolutionAlgebroid,
    x: &SectionSpec,
    y: &SectionSpec,
    f: &ScalarFieldSpec,
    samples: usize,
    seed: u64,
) -> Report {
    let checks = [Check::new("leibniz", LOOSE_TOL)];
    let results = sampling::run(samples, seed, &checks, |rng| {
        let m = random_base(rng, inv.dim_m());
        let run = || -> Result<f64> {
            let lhs = bracket_from_flip(inv, x, &FieldTimes { f, x: y }, &m)?;
            let fm = f.f_poly.eval(&m)[0];
            let xy = bracket_from_flip(inv, x, y, &m)?;
            let lie = bundle::lie_derivative(f, x, &inv.anchor.rho, &m)?;
            let yv = y.x_poly.eval(&m);
            let rhs: Vec<f64> = xy.iter().zip(&yv).map(|(b, yy)| fm * b + lie * yy).collect();
            Ok(max_dist(&lhs, &rhs))
        };
        Outcome {
            residuals: vec![run().unwrap_or(f64::INFINITY)],
            input: format!("m={m:?}"),
        }
    });
    let mut r = Report::new(format!("leibniz:{}", inv.name));
    r.extend(results);
    r
}

/// The Lie-algebroid bracket of two sections straight from the spec:
/// `DY·ρX − DX·ρY + C(X, Y)`.
pub fn spec_bracket(spec: &AlgebroidSpec, x: &SectionSpec, y: &SectionSpec, m: &[f64]) -> Vec<f64> {
    let xv = x.x_poly.eval(m);
    let yv = y.x_poly.eval(m);
    let rx = spec.anchor.apply(m, &xv);
    let ry = spec.anchor.apply(m, &yv);
    let dy = matvec(&y.x_poly.jacobian(m), &rx);
    let dx = matvec(&x.x_poly.jacobian(m), &ry);
    add_vec(&sub_vec(&dy, &dx), &spec.structure(m, &xv, &yv))
}

fn matvec(a: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    a.iter().map(|row| row.iter().zip(v).map(|(x, y)| x * y).sum()).collect()
}

/// Recovers constant structure data from a flip on a point base:
/// `C^k_{ij} = π₁α(e_i, e_j, 0)`.
pub fn recover_lie_algebra(inv: &InvolutionAlgebroid) -> Result<AlgebroidSpec> {
    if inv.dim_m() != 0 {
        return Err(Error::InvalidArgument(
            "structure constants can only be read off a flip over a point".into(),
        ));
    }
    let n = inv.dim_a();
    let mut table = vec![vec![vec![0.0; n]; n]; n];
    for (i, row) in table.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            let v = AElement::new(Vec::new(), unit(n, i));
            let w = TAElement::new(Vec::new(), unit(n, j), Vec::new(), vec![0.0; n]);
            *cell = inv.alpha(&v, &w)?.da;
        }
    }
    AlgebroidSpec::from_constants(format!("r({})", inv.name), inv.anchor.clone(), &table)
}

/// `r∘ι` on sampled section pairs and, over a point, `ι∘r` pointwise.
pub fn roundtrip_bracket(spec: &AlgebroidSpec, sections: &[SectionSpec], samples: usize, seed: u64) -> Report {
    let inv = InvolutionAlgebroid::from_spec(spec);
    let mut r = Report::new(format!("roundtrip:{}", spec.name));
    let checks = [Check::new("bracket-roundtrip", EXACT_TOL)];
    let pairs: Vec<(usize, usize)> = (0..sections.len())
        .flat_map(|i| (0..sections.len()).map(move |j| (i, j)))
        .collect();
    r.extend(sampling::run(samples, seed, &checks, |rng| {
        let m = random_base(rng, spec.dim_m());
        let mut worst: f64 = 0.0;
        for &(i, j) in &pairs {
            let got = bracket_from_flip(&inv, &sections[i], &sections[j], &m);
            let d = match got {
                Ok(g) => max_dist(&g, &spec_bracket(spec, &sections[i], &sections[j], &m)),
                Err(_) => f64::INFINITY,
            };
            if d.is_nan() || d > worst {
                worst = d;
            }
        }
        Outcome {
            residuals: vec![worst],
            input: format!("m={m:?}"),
        }
    }));
    if spec.dim_m() == 0 {
        r.absorb("", flip_roundtrip(&inv, samples, seed));
    }
    r
}

/// `ι(r(A)) = A` pointwise for a flip over a point.
pub fn flip_roundtrip(inv: &InvolutionAlgebroid, samples: usize, seed: u64) -> Report {
    let mut r = Report::new(format!("flip-roundtrip:{}", inv.name));
    let rebuilt = match recover_lie_algebra(inv) {
        Ok(spec) => InvolutionAlgebroid::from_spec(&spec),
        Err(e) => {
            if samples > 0 {
                r.push(CheckResult::new("flip-roundtrip", samples, seed, f64::INFINITY, EXACT_TOL).with_input(e.to_string()));
            }
            return r;
        }
    };
    let checks = [Check::new("flip-roundtrip", EXACT_TOL)];
    r.extend(sampling::run(samples, seed, &checks, |rng| {
        let pe = sample_prolongation(&inv.anchor, &[], rng);
        let d = match (inv.alpha(&pe.v, &pe.w), rebuilt.alpha(&pe.v, &pe.w)) {
            (Ok(a), Ok(b)) => a.dist(&b),
            _ => f64::INFINITY,
        };
        Outcome {
            residuals: vec![d],
            input: format!("{pe:?}"),
        }
    }));
    r
}

/// Pointwise difference of two flips on common prolongation samples.
pub fn compare_flips(a: &InvolutionAlgebroid, b: &InvolutionAlgebroid, name: &'static str, samples: usize, seed: u64) -> Vec<CheckResult> {
    let checks = [Check::new(name, EXACT_TOL)];
    sampling::run(samples, seed, &checks, |rng| {
        let m = random_base(rng, a.dim_m());
        let pe = sample_prolongation(&a.anchor, &m, rng);
        let d = match (a.alpha(&pe.v, &pe.w), b.alpha(&pe.v, &pe.w)) {
            (Ok(x), Ok(y)) => x.dist(&y),
            _ => f64::INFINITY,
        };
        Outcome {
            residuals: vec![d],
            input: format!("{pe:?}"),
        }
    })
}

/// Well-formedness of a spec: Jacobi with Leibniz on constant frame
/// sections and compatibility of the anchor with brackets.
pub fn check_well_formed(spec: &AlgebroidSpec, samples: usize, seed: u64) -> Report {
    let inv = InvolutionAlgebroid::from_spec(spec);
    let n = spec.dim_a();
    let frame: Vec<SectionSpec> = (0..n)
        .map(|i| SectionSpec::new(PolyMap::constant(spec.dim_m(), &unit(n, i))))
        .collect();
    let checks = [Check::new("jacobi", LOOSE_TOL), Check::new("anchor-compatible", LOOSE_TOL)];
    let results = sampling::run(samples, seed, &checks, |rng| {
        let m = random_base(rng, spec.dim_m());
        let mut jac: f64 = 0.0;
        let mut anc: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let (ei, ej) = (&frame[i], &frame[j]);
                let b = spec_bracket(spec, ei, ej, &m);
                let vf = bundle::vf_bracket_at(
                    &AnchorField {
                        anchor: &spec.anchor,
                        x: ei,
                    },
                    &AnchorField {
                        anchor: &spec.anchor,
                        x: ej,
                    },
                    &m,
                )
                .unwrap_or_else(|_| vec![f64::INFINITY; spec.dim_m()]);
                anc = anc.max(max_dist(&spec.anchor.apply(&m, &b), &vf));
                for ek in frame.iter().skip(j + 1) {
                    let s1 = bracket_from_flip(&inv, ei, &FlipBracket { inv: &inv, x: ej, y: ek }, &m);
                    let s2 = bracket_from_flip(&inv, ej, &FlipBracket { inv: &inv, x: ek, y: ei }, &m);
                    let s3 = bracket_from_flip(&inv, ek, &FlipBracket { inv: &inv, x: ei, y: ej }, &m);
                    let d = match (s1, s2, s3) {
                        (Ok(a), Ok(b), Ok(c)) => max_dist(&add_vec(&add_vec(&a, &b), &c), &zeros(n)),
                        _ => f64::INFINITY,
                    };
                    jac = jac.max(d);
                }
            }
        }
        Outcome {
            residuals: vec![jac, anc],
            input: format!("m={m:?}"),
        }
    });
    let mut r = Report::new(format!("well-formed:{}", spec.name));
    r.extend(results);
    r
}

/// A candidate morphism of involution algebroids given by a polynomial map
/// of total spaces `F: A → B` covering `F_M: M → N`. Checks that
/// `T(F)α_A(v, w) = α_B(Fv, T(F)w)` and `T(F_M)ρ_A = ρ_B F`.
pub fn check_morphism(
    src: &InvolutionAlgebroid,
    dst: &InvolutionAlgebroid,
    map: &PolyMap,
    samples: usize,
    seed: u64,
) -> Result<Report> {
    let (sm, sa) = (src.dim_m(), src.dim_a());
    let (dm, da) = (dst.dim_m(), dst.dim_a());
    if map.in_dim() != sm + sa || map.out_dim() != dm + da {
        return Err(Error::DimensionMismatch {
            expected: dm + da,
            got: map.out_dim(),
        });
    }
    let checks = [Check::new("flip-square", LOOSE_TOL), Check::new("anchor-square", LOOSE_TOL)];
    let results = sampling::run(samples, seed, &checks, |rng| {
        let m = random_base(rng, sm);
        let pe = sample_prolongation(&src.anchor, &m, rng);
        let apply_t = |u: &TAElement<f64>| -> TAElement<f64> {
            let j = ta_as_jet(u);
            let out = map.eval(&[j.m, j.a].concat());
            let (om, oa) = out.split_at(dm);
            jet_as_ta(&AElement::new(om.to_vec(), oa.to_vec()))
        };
        let apply = |v: &AElement<f64>| -> AElement<f64> {
            let out = map.eval(&[v.m.clone(), v.a.clone()].concat());
            AElement::new(out[..dm].to_vec(), out[dm..].to_vec())
        };
        let run = || -> Result<(f64, f64)> {
            let lhs = apply_t(&src.alpha(&pe.v, &pe.w)?);
            let rhs = dst.alpha(&apply(&pe.v), &apply_t(&pe.w))?;
            // T(F_M)ρ_A v against ρ_B F v, with ρ_A v read as (m, 0, ρv, 0)
            let rho_v = TAElement::t_xi(&m, &src.anchor.apply(&m, &pe.v.a), sa);
            let pushed = apply_t(&rho_v);
            let fv = apply(&pe.v);
            let target = dst.anchor.apply(&fv.m, &fv.a);
            Ok((lhs.dist(&rhs), max_dist(&pushed.dm, &target)))
        };
        let (a, b) = run().unwrap_or((f64::INFINITY, f64::INFINITY));
        Outcome {
            residuals: vec![a, b],
            input: format!("{pe:?}"),
        }
    });
    let mut r = Report::new(format!("morphism:{}->{}", src.name, dst.name));
    r.extend(results);
    Ok(r)
}
