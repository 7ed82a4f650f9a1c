//! The trivialized bundle `A = ℝ^{dim_M} × ℝ^{dim_A}` and its tangent.
//!
//! A point of `TA` has four blocks `(m, a, ṁ, ȧ)`. Viewed as a depth-2 jet
//! over `M` (for `A = TM`), `m` is the empty coefficient, `ṁ` the outer
//! direction 1, `a` direction 2 and `ȧ` the mixed one.
//!
//! `+_p` adds `(ṁ, ȧ)` over a shared `(m, a)`; `+_{Tπ}` adds `(a, ȧ)` over a
//! shared `(m, ṁ)`. The difference written `−_A` in the affine identities is
//! read as `−_p`, the only reading under which those identities typecheck.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jet::{self, JetPoint, JetScalar};
use crate::poly::PolyMap;
use crate::report::Report;
use crate::sampling::{self, Check, Outcome};
use crate::scalar::{add_vec, max_dist, sub_vec, zeros, Scalar};

/// Tolerance used for projection-compatibility preconditions.
pub const PROJ_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct AElement<S = f64> {
    pub m: Vec<S>,
    pub a: Vec<S>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TAElement<S = f64> {
    pub m: Vec<S>,
    pub a: Vec<S>,
    pub dm: Vec<S>,
    pub da: Vec<S>,
}

impl<S: Scalar> AElement<S> {
    pub fn new(m: Vec<S>, a: Vec<S>) -> Self {
        AElement { m, a }
    }

    /// `ξ(m)`, the zero of the fiber over `m`.
    pub fn zero_over(m: &[S], dim_a: usize) -> Self {
        AElement {
            m: m.to_vec(),
            a: zeros(dim_a),
        }
    }

    pub fn dist(&self, other: &Self) -> f64 {
        max_dist(&self.m, &other.m).max(max_dist(&self.a, &other.a))
    }
}

impl AElement<f64> {
    pub fn random<R: Rng + ?Sized>(rng: &mut R, dim_m: usize, dim_a: usize) -> Self {
        AElement {
            m: uniform(rng, dim_m),
            a: uniform(rng, dim_a),
        }
    }
}

impl<S: Scalar> TAElement<S> {
    pub fn new(m: Vec<S>, a: Vec<S>, dm: Vec<S>, da: Vec<S>) -> Self {
        TAElement { m, a, dm, da }
    }

    /// `p`, the base point in `A`.
    pub fn p(&self) -> AElement<S> {
        AElement {
            m: self.m.clone(),
            a: self.a.clone(),
        }
    }

    /// `T(π)`, returned as `(m, ṁ)`.
    pub fn t_pi(&self) -> (Vec<S>, Vec<S>) {
        (self.m.clone(), self.dm.clone())
    }

    /// `0v = (m, a, 0, 0)`.
    pub fn zero_at(v: &AElement<S>) -> Self {
        TAElement {
            m: v.m.clone(),
            a: v.a.clone(),
            dm: zeros(v.m.len()),
            da: zeros(v.a.len()),
        }
    }

    /// `T(ξ)(m, ṁ) = (m, 0, ṁ, 0)`.
    pub fn t_xi(m: &[S], dm: &[S], dim_a: usize) -> Self {
        TAElement {
            m: m.to_vec(),
            a: zeros(dim_a),
            dm: dm.to_vec(),
            da: zeros(dim_a),
        }
    }

    pub fn dist(&self, other: &Self) -> f64 {
        max_dist(&self.m, &other.m)
            .max(max_dist(&self.a, &other.a))
            .max(max_dist(&self.dm, &other.dm))
            .max(max_dist(&self.da, &other.da))
    }

    pub fn is_finite(&self) -> bool {
        [&self.m, &self.a, &self.dm, &self.da]
            .iter()
            .all(|v| v.iter().all(|x| x.is_finite()))
    }
}

impl TAElement<f64> {
    pub fn random<R: Rng + ?Sized>(rng: &mut R, dim_m: usize, dim_a: usize) -> Self {
        TAElement {
            m: uniform(rng, dim_m),
            a: uniform(rng, dim_a),
            dm: uniform(rng, dim_m),
            da: uniform(rng, dim_a),
        }
    }

    /// The depth-1 jet over `A` with base `(m, a)` and velocity `(ṁ, ȧ)`.
    pub fn to_jet(&self) -> JetPoint {
        let base = [self.m.as_slice(), self.a.as_slice()].concat();
        let vel = [self.dm.as_slice(), self.da.as_slice()].concat();
        JetPoint::from_blocks(1, &[base, vel]).expect("depth 1")
    }

    pub fn from_jet(x: &JetPoint, dim_m: usize) -> Result<Self> {
        if x.depth() != 1 {
            return Err(Error::DepthMismatch(x.depth(), 1));
        }
        let base = x.block(0);
        let vel = x.block(1);
        let (m, a) = base.split_at(dim_m.min(base.len()));
        let (dm, da) = vel.split_at(dim_m.min(vel.len()));
        Ok(TAElement {
            m: m.to_vec(),
            a: a.to_vec(),
            dm: dm.to_vec(),
            da: da.to_vec(),
        })
    }

    /// Reads a depth-2 jet over `M` as a point of `T(TM)`: `a` is direction
    /// 2, `ṁ` direction 1 and `ȧ` the mixed coefficient.
    pub fn from_second_jet(x: &JetPoint) -> Result<Self> {
        if x.depth() != 2 {
            return Err(Error::DepthMismatch(x.depth(), 2));
        }
        Ok(TAElement {
            m: x.block(0),
            a: x.block(2),
            dm: x.block(1),
            da: x.block(3),
        })
    }
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..=1.0)).collect()
}

/// `λ(m, a) = (m, 0, 0, a)`.
pub fn lift_lambda<S: Scalar>(v: &AElement<S>) -> TAElement<S> {
    TAElement {
        m: v.m.clone(),
        a: zeros(v.a.len()),
        dm: zeros(v.m.len()),
        da: v.a.clone(),
    }
}

/// Inverse of [`lift_lambda`] on its image.
pub fn unlift_lambda<S: Scalar>(x: &TAElement<S>) -> Result<AElement<S>> {
    let z_a = zeros::<S>(x.a.len());
    let z_m = zeros::<S>(x.dm.len());
    let residual = max_dist(&x.a, &z_a).max(max_dist(&x.dm, &z_m));
    if !(residual <= PROJ_TOL) {
        return Err(Error::FiberMismatch { residual });
    }
    Ok(AElement {
        m: x.m.clone(),
        a: x.da.clone(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Fiber {
    /// Over `p`: adds `(ṁ, ȧ)`.
    P,
    /// Over `T(π)`: adds `(a, ȧ)`.
    TPi,
}

pub fn add_in_fiber<S: Scalar>(x: &TAElement<S>, y: &TAElement<S>, which: Fiber) -> Result<TAElement<S>> {
    combine(x, y, which, 1.0)
}

pub fn sub_in_fiber<S: Scalar>(x: &TAElement<S>, y: &TAElement<S>, which: Fiber) -> Result<TAElement<S>> {
    combine(x, y, which, -1.0)
}

fn combine<S: Scalar>(x: &TAElement<S>, y: &TAElement<S>, which: Fiber, sign: f64) -> Result<TAElement<S>> {
    let lin = |u: &[S], v: &[S]| -> Vec<S> { u.iter().zip(v).map(|(a, b)| *a + *b * sign).collect() };
    let m_res = max_dist(&x.m, &y.m);
    match which {
        Fiber::P => {
            let residual = m_res.max(max_dist(&x.a, &y.a));
            if !(residual <= PROJ_TOL) {
                return Err(Error::FiberMismatch { residual });
            }
            Ok(TAElement {
                m: x.m.clone(),
                a: x.a.clone(),
                dm: lin(&x.dm, &y.dm),
                da: lin(&x.da, &y.da),
            })
        }
        Fiber::TPi => {
            let residual = m_res.max(max_dist(&x.dm, &y.dm));
            if !(residual <= PROJ_TOL) {
                return Err(Error::FiberMismatch { residual });
            }
            Ok(TAElement {
                m: x.m.clone(),
                a: lin(&x.a, &y.a),
                dm: x.dm.clone(),
                da: lin(&x.da, &y.da),
            })
        }
    }
}

/// `x ⊖ y = λ⁻¹((x −_p y) −_{Tπ} 0py)`.
pub fn strong_difference<S: Scalar>(x: &TAElement<S>, y: &TAElement<S>) -> Result<AElement<S>> {
    let residual = max_dist(&x.dm, &y.dm);
    if !(residual <= PROJ_TOL) {
        return Err(Error::FiberMismatch { residual });
    }
    let d = sub_in_fiber(x, y, Fiber::P)?;
    let v = sub_in_fiber(&d, &TAElement::zero_at(&y.p()), Fiber::TPi)?;
    unlift_lambda(&v)
}

/// `x ⊕ v = (λv +_{Tπ} 0px) +_p x`.
pub fn strong_sum<S: Scalar>(x: &TAElement<S>, v: &AElement<S>) -> Result<TAElement<S>> {
    let residual = max_dist(&x.m, &v.m);
    if !(residual <= PROJ_TOL) {
        return Err(Error::FiberMismatch { residual });
    }
    let s = add_in_fiber(&lift_lambda(v), &TAElement::zero_at(&x.p()), Fiber::TPi)?;
    add_in_fiber(&s, x, Fiber::P)
}

/// Polynomial Christoffel data `Γ^k_{αj}(m)`, stored at output index
/// `(α·dim_A + j)·dim_A + k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConnectionSpec {
    pub dim_m: usize,
    pub dim_a: usize,
    pub gamma: PolyMap,
}

impl ConnectionSpec {
    pub fn new(dim_m: usize, dim_a: usize, gamma: PolyMap) -> Result<Self> {
        if gamma.in_dim() != dim_m || gamma.out_dim() != dim_m * dim_a * dim_a {
            return Err(Error::DimensionMismatch {
                expected: dim_m * dim_a * dim_a,
                got: gamma.out_dim(),
            });
        }
        Ok(ConnectionSpec { dim_m, dim_a, gamma })
    }

    pub fn flat(dim_m: usize, dim_a: usize) -> Self {
        ConnectionSpec {
            dim_m,
            dim_a,
            gamma: PolyMap::zero(dim_m, dim_m * dim_a * dim_a),
        }
    }

    pub fn random<R: Rng + ?Sized>(rng: &mut R, dim_m: usize, dim_a: usize, degree: u32) -> Self {
        ConnectionSpec {
            dim_m,
            dim_a,
            gamma: PolyMap::random(rng, dim_m, dim_m * dim_a * dim_a, degree),
        }
    }

    /// `Γ(m)(w, a)^k = Σ Γ^k_{αj}(m) w^α a^j`.
    pub fn contract<S: Scalar>(&self, m: &[S], w: &[S], a: &[S]) -> Vec<S> {
        let g = self.gamma.eval(m);
        let n = self.dim_a;
        let mut out = zeros(n);
        for (al, wa) in w.iter().enumerate() {
            for (j, aj) in a.iter().enumerate() {
                let wa_aj = *wa * *aj;
                for (k, o) in out.iter_mut().enumerate() {
                    *o += g[(al * n + j) * n + k] * wa_aj;
                }
            }
        }
        out
    }

    /// `K(m, a, ṁ, ȧ) = (m, ȧ + Γ(m)(ṁ, a))`.
    pub fn k<S: Scalar>(&self, x: &TAElement<S>) -> AElement<S> {
        AElement {
            m: x.m.clone(),
            a: add_vec(&x.da, &self.contract(&x.m, &x.dm, &x.a)),
        }
    }

    /// `H(v, w) = (m, a_v, w, −Γ(m)(w, a_v))`.
    pub fn h<S: Scalar>(&self, v: &AElement<S>, w: &[S]) -> TAElement<S> {
        let g = self.contract(&v.m, w, &v.a);
        TAElement {
            m: v.m.clone(),
            a: v.a.clone(),
            dm: w.to_vec(),
            da: g.into_iter().map(|x| -x).collect(),
        }
    }
}

/// A vector field on a coordinate space, evaluable on any scalar so its
/// tangent map comes for free.
pub trait VectorField: Sync {
    fn dim(&self) -> usize;
    fn eval<S: Scalar>(&self, x: &[S]) -> Vec<S>;
}

impl VectorField for PolyMap {
    fn dim(&self) -> usize {
        self.in_dim()
    }

    fn eval<S: Scalar>(&self, x: &[S]) -> Vec<S> {
        PolyMap::eval(self, x)
    }
}

/// The point `T(Y)(X(x))` of `T²M` as a depth-2 jet: direction 1 carries
/// `X`, direction 2 carries `Y`, the mixed slot `DY·X`.
pub fn tangent_push<X: VectorField, Y: VectorField>(x_field: &X, y_field: &Y, at: &[f64]) -> JetPoint {
    let xv = x_field.eval(at);
    let jets: Vec<JetScalar> = at
        .iter()
        .zip(&xv)
        .map(|(p, v)| JetScalar::new(1, &[*p, *v]).expect("depth 1"))
        .collect();
    let yj = y_field.eval(&jets);
    let blocks = vec![
        at.to_vec(),
        xv,
        yj.iter().map(|j| j.coeff(0)).collect(),
        yj.iter().map(|j| j.coeff(1)).collect(),
    ];
    JetPoint::from_blocks(2, &blocks).expect("depth 2")
}

/// `[X, Y] = cT(Y)X ⊖ T(X)Y`, which equals `DY·X − DX·Y`.
pub fn vf_bracket_at<X: VectorField, Y: VectorField>(x_field: &X, y_field: &Y, at: &[f64]) -> Result<Vec<f64>> {
    if x_field.dim() != at.len() || y_field.dim() != at.len() {
        return Err(Error::DimensionMismatch {
            expected: at.len(),
            got: x_field.dim(),
        });
    }
    let cty = jet::flip_c(&tangent_push(x_field, y_field, at), 1, 2)?;
    let txy = tangent_push(y_field, x_field, at);
    let d = strong_difference(&TAElement::from_second_jet(&cty)?, &TAElement::from_second_jet(&txy)?)?;
    Ok(d.a)
}

/// The bracket of two fields as a field in its own right.
pub struct Bracket<'a, X, Y> {
    pub x: &'a X,
    pub y: &'a Y,
}

impl<X: VectorField, Y: VectorField> VectorField for Bracket<'_, X, Y> {
    fn dim(&self) -> usize {
        self.x.dim()
    }

    fn eval<S: Scalar>(&self, at: &[S]) -> Vec<S> {
        // DY·X − DX·Y via one extra jet direction on top of S
        let xv = self.x.eval(at);
        let yv = self.y.eval(at);
        sub_vec(&directional(self.y, at, &xv), &directional(self.x, at, &yv))
    }
}

/// `DF(at)·v`, computed by pushing `at + εv` through `F` with a fresh
/// nilpotent on top of whatever `S` already carries.
pub fn directional<F: VectorField, S: Scalar>(f: &F, at: &[S], v: &[S]) -> Vec<S> {
    let dual: Vec<Dual<S>> = at.iter().zip(v).map(|(a, b)| Dual { re: *a, eps: *b }).collect();
    f.eval(&dual).into_iter().map(|d| d.eps).collect()
}

/// First-order dual numbers over an arbitrary scalar, so derivatives nest.
#[derive(Clone, Copy, Debug)]
pub struct Dual<S> {
    pub re: S,
    pub eps: S,
}

impl<S: Scalar> std::ops::Add for Dual<S> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Dual {
            re: self.re + o.re,
            eps: self.eps + o.eps,
        }
    }
}

impl<S: Scalar> std::ops::AddAssign for Dual<S> {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl<S: Scalar> std::ops::Sub for Dual<S> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Dual {
            re: self.re - o.re,
            eps: self.eps - o.eps,
        }
    }
}

impl<S: Scalar> std::ops::Mul for Dual<S> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        Dual {
            re: self.re * o.re,
            eps: self.re * o.eps + self.eps * o.re,
        }
    }
}

impl<S: Scalar> std::ops::Mul<f64> for Dual<S> {
    type Output = Self;
    fn mul(self, o: f64) -> Self {
        Dual {
            re: self.re * o,
            eps: self.eps * o,
        }
    }
}

impl<S: Scalar> std::ops::Neg for Dual<S> {
    type Output = Self;
    fn neg(self) -> Self {
        Dual {
            re: -self.re,
            eps: -self.eps,
        }
    }
}

impl<S: Scalar> Scalar for Dual<S> {
    fn from_f64(x: f64) -> Self {
        Dual {
            re: S::from_f64(x),
            eps: S::zero(),
        }
    }

    fn re(&self) -> f64 {
        self.re.re()
    }

    fn recip(self) -> Self {
        let r = self.re.recip();
        Dual {
            re: r,
            eps: -(self.eps * r * r),
        }
    }

    fn dist(&self, other: &Self) -> f64 {
        self.re.dist(&other.re).max(self.eps.dist(&other.eps))
    }

    fn is_finite(&self) -> bool {
        self.re.is_finite() && self.eps.is_finite()
    }
}

/// Sections `M → A` of the trivialized bundle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SectionSpec {
    pub x_poly: PolyMap,
}

impl SectionSpec {
    pub fn new(x_poly: PolyMap) -> Self {
        SectionSpec { x_poly }
    }

    pub fn random<R: Rng + ?Sized>(rng: &mut R, dim_m: usize, dim_a: usize, degree: u32) -> Self {
        SectionSpec {
            x_poly: PolyMap::random(rng, dim_m, dim_a, degree),
        }
    }
}

/// Scalar functions `M → ℝ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalarFieldSpec {
    pub f_poly: PolyMap,
}

impl ScalarFieldSpec {
    pub fn new(f_poly: PolyMap) -> Result<Self> {
        if f_poly.out_dim() != 1 {
            return Err(Error::DimensionMismatch {
                expected: 1,
                got: f_poly.out_dim(),
            });
        }
        Ok(ScalarFieldSpec { f_poly })
    }

    pub fn random<R: Rng + ?Sized>(rng: &mut R, dim_m: usize, degree: u32) -> Self {
        ScalarFieldSpec {
            f_poly: PolyMap::random(rng, dim_m, 1, degree),
        }
    }
}

/// `ρ(m)a` for an anchor stored row-major as `ρ^α_j` at `α·dim_A + j`.
pub fn anchor_apply<S: Scalar>(rho: &PolyMap, m: &[S], a: &[S]) -> Vec<S> {
    let r = rho.eval(m);
    let dim_a = a.len();
    (0..m.len())
        .map(|al| {
            let mut acc = S::zero();
            for (j, aj) in a.iter().enumerate() {
                acc += r[al * dim_a + j] * *aj;
            }
            acc
        })
        .collect()
}

/// `𝓛_{ρX}(f)(m) = p̂ T(f) ρX`: the `ε` part of `f` along the tangent vector
/// `ρ(m)X(m)`.
pub fn lie_derivative(f: &ScalarFieldSpec, x: &SectionSpec, rho: &PolyMap, m: &[f64]) -> Result<f64> {
    let dim_m = m.len();
    if f.f_poly.in_dim() != dim_m || x.x_poly.in_dim() != dim_m {
        return Err(Error::DimensionMismatch {
            expected: dim_m,
            got: f.f_poly.in_dim(),
        });
    }
    let xa = x.x_poly.eval(m);
    if rho.in_dim() != dim_m || rho.out_dim() != dim_m * xa.len() {
        return Err(Error::DimensionMismatch {
            expected: dim_m * xa.len(),
            got: rho.out_dim(),
        });
    }
    let v = anchor_apply(rho, m, &xa);
    let tangent = JetPoint::from_blocks(1, &[m.to_vec(), v])?;
    let tf = f.f_poly.apply(&tangent)?;
    Ok(tf.block(1)[0])
}

/// Coordinate identities of the two additive structures on `TA`, run on
/// random compatible inputs.
pub fn check_affine_identities(dim_m: usize, dim_a: usize, samples: usize, seed: u64) -> Report {
    let checks = [
        Check::new("interchange", 1e-12),
        Check::new("lift-sum-exchange", 1e-12),
        Check::new("difference-exchange", 1e-12),
        Check::new("difference-vertical", 1e-12),
        Check::new("difference-horizontal-base", 1e-12),
        Check::new("difference-base", 1e-12),
        Check::new("strong-inverse", 1e-12),
        Check::new("strong-associative", 1e-12),
    ];
    let results = sampling::run(samples, seed, &checks, |rng| {
        affine_sample(rng, dim_m, dim_a).unwrap_or_else(|e| Outcome::failed(checks.len(), format!("error: {e}")))
    });
    let mut r = Report::new(format!("affine-structure({dim_m},{dim_a})"));
    r.extend(results);
    r
}

fn affine_sample<R: Rng + ?Sized>(rng: &mut R, dim_m: usize, dim_a: usize) -> Result<Outcome> {
    let x = TAElement::random(rng, dim_m, dim_a);
    // y shares both projections with x
    let y = TAElement {
        da: uniform(rng, dim_a),
        ..x.clone()
    };
    let v = AElement {
        m: x.m.clone(),
        a: uniform(rng, dim_a),
    };
    let v2 = AElement {
        m: x.m.clone(),
        a: uniform(rng, dim_a),
    };

    // interchange on a compatible quadruple
    let (xq, yq, wq, zq) = quadruple(rng, dim_m, dim_a);
    let lhs = add_in_fiber(&add_in_fiber(&xq, &yq, Fiber::TPi)?, &add_in_fiber(&wq, &zq, Fiber::TPi)?, Fiber::P)?;
    let rhs = add_in_fiber(&add_in_fiber(&xq, &wq, Fiber::P)?, &add_in_fiber(&yq, &zq, Fiber::P)?, Fiber::TPi)?;
    let interchange = lhs.dist(&rhs);

    let txi_tpi = |u: &TAElement<f64>| TAElement::t_xi(&u.m, &u.dm, dim_a);

    // (λv +_{Tπ} 0px) +_p x = (λv +_p T(ξ)T(π)x) +_{Tπ} x
    let l1 = add_in_fiber(
        &add_in_fiber(&lift_lambda(&v), &TAElement::zero_at(&x.p()), Fiber::TPi)?,
        &x,
        Fiber::P,
    )?;
    let r1 = add_in_fiber(&add_in_fiber(&lift_lambda(&v), &txi_tpi(&x), Fiber::P)?, &x, Fiber::TPi)?;
    let exchange = l1.dist(&r1);

    // (x −_p y) −_{Tπ} 0py = (x −_{Tπ} y) −_p T(ξ)T(π)y
    let d1 = sub_in_fiber(&sub_in_fiber(&x, &y, Fiber::P)?, &TAElement::zero_at(&y.p()), Fiber::TPi)?;
    let d2 = sub_in_fiber(&sub_in_fiber(&x, &y, Fiber::TPi)?, &txi_tpi(&y), Fiber::P)?;
    let diff_exchange = d1.dist(&d2);

    // T(π)d1 = 0πpy and p d2 = ξpT(π)y
    let (d1m, d1dm) = d1.t_pi();
    let vertical = max_dist(&d1m, &y.m).max(max_dist(&d1dm, &zeros(dim_m)));
    let pd2 = d2.p();
    let horizontal = max_dist(&pd2.m, &y.m).max(max_dist(&pd2.a, &zeros(dim_a)));

    // p d1 = ξπpx
    let pd1 = d1.p();
    let base = pd1.dist(&AElement::zero_over(&x.m, dim_a));

    let inverse = strong_sum(&y, &strong_difference(&x, &y)?)?.dist(&x);
    let sum_v = AElement {
        m: v.m.clone(),
        a: add_vec(&v.a, &v2.a),
    };
    let assoc = strong_sum(&strong_sum(&x, &v)?, &v2)?.dist(&strong_sum(&x, &sum_v)?);

    Ok(Outcome {
        residuals: vec![
            interchange,
            exchange,
            diff_exchange,
            vertical,
            horizontal,
            base,
            inverse,
            assoc,
        ],
        input: format!("x={x:?} y={y:?} v={v:?}"),
    })
}

/// `x, y` share `(m, ṁ)`, as do `w, z`; `x, w` share `(m, a)`, as do `y, z`.
fn quadruple<R: Rng + ?Sized>(
    rng: &mut R,
    dim_m: usize,
    dim_a: usize,
) -> (TAElement<f64>, TAElement<f64>, TAElement<f64>, TAElement<f64>) {
    let m = uniform(rng, dim_m);
    let (a1, a2) = (uniform(rng, dim_a), uniform(rng, dim_a));
    let (dm1, dm2) = (uniform(rng, dim_m), uniform(rng, dim_m));
    let mut mk = |a: &Vec<f64>, dm: &Vec<f64>| TAElement {
        m: m.clone(),
        a: a.clone(),
        dm: dm.clone(),
        da: uniform(rng, dim_a),
    };
    let x = mk(&a1, &dm1);
    let y = mk(&a2, &dm1);
    let w = mk(&a1, &dm2);
    let z = mk(&a2, &dm2);
    (x, y, w, z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::Term;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(17)
    }

    #[test]
    fn lift_example() {
        let v = AElement::new(vec![1.0], vec![2.0]);
        assert_eq!(
            lift_lambda(&v),
            TAElement::new(vec![1.0], vec![0.0], vec![0.0], vec![2.0])
        );
        let z = AElement::zero_over(&[1.0], 1);
        assert_eq!(lift_lambda(&z), TAElement::zero_at(&z));
    }

    #[test]
    fn lift_satisfies_t_lambda_lambda() {
        // T(λ)λ = lλ, both computed as depth-2 jets over A
        let mut r = rng();
        for _ in 0..50 {
            let v = AElement::random(&mut r, 2, 3);
            let lv = lift_lambda(&v).to_jet();
            // T(λ) acts on the inner direction of a jet over A
            let lam = |x: &JetPoint| -> JetPoint {
                let (dm, da) = (2, 3);
                let entries = x.entries();
                let mut out = Vec::new();
                out.extend_from_slice(&entries[..dm]);
                out.extend(std::iter::repeat_n(JetScalar::constant(0.0), da));
                out.extend(std::iter::repeat_n(JetScalar::constant(0.0), dm));
                out.extend_from_slice(&entries[dm..dm + da]);
                JetPoint::with_depth(x.depth(), out).unwrap()
            };
            // T(λ)(λv): apply λ pointwise to the jet λv, giving a jet over TA;
            // then read TA coordinates (m,a,ṁ,ȧ) as a depth-2 jet over A
            let tl = lam(&lv);
            let to_depth2 = |x: &JetPoint| -> JetPoint {
                let e = x.entries();
                let base: Vec<f64> = e[..5].iter().map(|j| j.coeff(0)).collect();
                let outer: Vec<f64> = e[..5].iter().map(|j| j.coeff(1)).collect();
                let inner: Vec<f64> = e[5..].iter().map(|j| j.coeff(0)).collect();
                let mixed: Vec<f64> = e[5..].iter().map(|j| j.coeff(1)).collect();
                JetPoint::from_blocks(2, &[base, outer, inner, mixed]).unwrap()
            };
            let lhs = to_depth2(&tl);
            let rhs = jet::lift_l(&lv).unwrap();
            assert_eq!(lhs.max_abs_diff(&rhs), 0.0);
        }
    }

    #[test]
    fn fiber_additions() {
        let x = TAElement::new(vec![1.0], vec![2.0], vec![3.0], vec![4.0]);
        let y = TAElement::new(vec![1.0], vec![2.0], vec![5.0], vec![6.0]);
        assert_eq!(
            add_in_fiber(&x, &y, Fiber::P).unwrap(),
            TAElement::new(vec![1.0], vec![2.0], vec![8.0], vec![10.0])
        );
        assert!(add_in_fiber(&x, &y, Fiber::TPi).is_err());
        let unit = TAElement::t_xi(&x.m, &x.dm, 1);
        assert_eq!(add_in_fiber(&x, &unit, Fiber::TPi).unwrap(), x);
    }

    #[test]
    fn strong_difference_examples() {
        let x = TAElement::new(vec![0.5], vec![1.0], vec![2.0], vec![7.0]);
        let y = TAElement::new(vec![0.5], vec![1.0], vec![2.0], vec![3.0]);
        assert_eq!(strong_difference(&x, &y).unwrap(), AElement::new(vec![0.5], vec![4.0]));
        assert_eq!(strong_difference(&x, &x).unwrap(), AElement::new(vec![0.5], vec![0.0]));
        let off = TAElement::new(vec![0.5], vec![1.0], vec![2.5], vec![3.0]);
        assert!(strong_difference(&x, &off).is_err());
    }

    #[test]
    fn strong_sum_examples() {
        let x = TAElement::new(vec![0.5], vec![1.0], vec![2.0], vec![7.0]);
        let u = AElement::new(vec![0.5], vec![-3.0]);
        assert_eq!(
            strong_sum(&x, &u).unwrap(),
            TAElement::new(vec![0.5], vec![1.0], vec![2.0], vec![4.0])
        );
        assert_eq!(strong_sum(&x, &AElement::zero_over(&[0.5], 1)).unwrap(), x);
        assert!(strong_sum(&x, &AElement::new(vec![0.0], vec![1.0])).is_err());
    }

    #[test]
    fn affine_identities_hold() {
        let r = check_affine_identities(2, 3, 100, 9);
        assert!(r.passed(), "{}", r.to_text());
    }

    #[test]
    fn literal_self_inverse_law_fails() {
        // a ⊕ (a ⊖ b) = a only when the ȧ blocks agree
        let x = TAElement::new(vec![0.0], vec![1.0], vec![2.0], vec![7.0]);
        let y = TAElement::new(vec![0.0], vec![1.0], vec![2.0], vec![3.0]);
        let lit = strong_sum(&x, &strong_difference(&x, &y).unwrap()).unwrap();
        assert_eq!(lit.dist(&x), 4.0);
    }

    #[test]
    fn second_projection_clause_fails_in_coordinates() {
        // T(π)((x −_p y) −_{Tπ} 0py) is (m, 0), not T(π)x, whenever ṁ ≠ 0
        let x = TAElement::new(vec![0.0], vec![1.0], vec![2.0], vec![7.0]);
        let y = TAElement::new(vec![0.0], vec![1.0], vec![2.0], vec![3.0]);
        let d = sub_in_fiber(&sub_in_fiber(&x, &y, Fiber::P).unwrap(), &TAElement::zero_at(&y.p()), Fiber::TPi).unwrap();
        assert_eq!(max_dist(&d.t_pi().1, &x.t_pi().1), 2.0);
    }

    #[test]
    fn connection_laws() {
        let mut r = rng();
        for _ in 0..50 {
            let conn = ConnectionSpec::random(&mut r, 2, 2, 2);
            let v = AElement::random(&mut r, 2, 2);
            assert!(conn.k(&lift_lambda(&v)).dist(&v) < 1e-15);
            assert!(conn.k(&TAElement::zero_at(&v)).dist(&AElement::zero_over(&v.m, 2)) < 1e-15);
            let w = uniform(&mut r, 2);
            let hv = conn.h(&v, &w);
            assert!(conn.k(&hv).dist(&AElement::zero_over(&v.m, 2)) < 1e-15);
            // H(px, T(π)x) +_p (λKx +_{Tπ} 0px) = x
            let x = TAElement::random(&mut r, 2, 2);
            let vert = add_in_fiber(&lift_lambda(&conn.k(&x)), &TAElement::zero_at(&x.p()), Fiber::TPi).unwrap();
            let back = add_in_fiber(&conn.h(&x.p(), &x.dm), &vert, Fiber::P).unwrap();
            assert!(back.dist(&x) < 1e-14);
        }
        let flat = ConnectionSpec::flat(1, 1);
        let x = TAElement::new(vec![1.0], vec![2.0], vec![3.0], vec![4.0]);
        assert_eq!(flat.k(&x), AElement::new(vec![1.0], vec![4.0]));
        assert_eq!(
            flat.h(&x.p(), &[5.0]),
            TAElement::new(vec![1.0], vec![2.0], vec![5.0], vec![0.0])
        );
    }

    #[test]
    fn vector_field_bracket_examples() {
        let one = PolyMap::constant(1, &[1.0]);
        let id = PolyMap::identity(1);
        assert_eq!(vf_bracket_at(&one, &id, &[0.3]).unwrap(), vec![1.0]);
        assert_eq!(vf_bracket_at(&id, &id, &[0.3]).unwrap(), vec![0.0]);
    }

    fn jacobian_oracle(f: &PolyMap, x: &[f64], v: &[f64]) -> Vec<f64> {
        let j = f.jacobian(x);
        j.iter().map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum()).collect()
    }

    #[test]
    fn bracket_matches_jacobian_oracle_and_jacobi() {
        let mut r = rng();
        for _ in 0..20 {
            let x = PolyMap::random(&mut r, 3, 3, 3);
            let y = PolyMap::random(&mut r, 3, 3, 3);
            let z = PolyMap::random(&mut r, 3, 3, 3);
            let p = uniform(&mut r, 3);
            let got = vf_bracket_at(&x, &y, &p).unwrap();
            let want = sub_vec(
                &jacobian_oracle(&y, &p, &x.eval(&p)),
                &jacobian_oracle(&x, &p, &y.eval(&p)),
            );
            assert!(max_dist(&got, &want) < 1e-12);
            let yz = Bracket { x: &y, y: &z };
            let zx = Bracket { x: &z, y: &x };
            let xy = Bracket { x: &x, y: &y };
            let j1 = vf_bracket_at(&x, &yz, &p).unwrap();
            let j2 = vf_bracket_at(&z, &xy, &p).unwrap();
            let j3 = vf_bracket_at(&y, &zx, &p).unwrap();
            let sum = add_vec(&add_vec(&j1, &j2), &j3);
            assert!(max_dist(&sum, &[0.0; 3]) < 1e-9);
        }
    }

    #[test]
    fn lie_derivative_examples() {
        let sq = ScalarFieldSpec::new(PolyMap::new(1, 1, vec![vec![Term::new(1.0, vec![2])]]).unwrap()).unwrap();
        let x = SectionSpec::new(PolyMap::constant(1, &[1.0]));
        let rho = PolyMap::constant(1, &[1.0]);
        assert_eq!(lie_derivative(&sq, &x, &rho, &[0.7]).unwrap(), 1.4);
        let c = ScalarFieldSpec::new(PolyMap::constant(1, &[3.0])).unwrap();
        assert_eq!(lie_derivative(&c, &x, &rho, &[0.7]).unwrap(), 0.0);
    }

    #[test]
    fn lie_derivative_is_linear_in_f() {
        let mut r = rng();
        let rho = PolyMap::random(&mut r, 2, 4, 1);
        let x = SectionSpec::random(&mut r, 2, 2, 2);
        for _ in 0..20 {
            let f = ScalarFieldSpec::random(&mut r, 2, 3);
            let g = ScalarFieldSpec::random(&mut r, 2, 3);
            let fg = ScalarFieldSpec::new(f.f_poly.add(&g.f_poly).unwrap()).unwrap();
            let m = uniform(&mut r, 2);
            let lhs = lie_derivative(&fg, &x, &rho, &m).unwrap();
            let rhs = lie_derivative(&f, &x, &rho, &m).unwrap() + lie_derivative(&g, &x, &rho, &m).unwrap();
            assert!((lhs - rhs).abs() < 1e-13);
        }
    }
}
