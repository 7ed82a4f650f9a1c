//! ODE layer: fixed-step RK4, matrix exponentials, and transport along
//! A-path and A-homotopy variations.
//!
//! Transport solves `T(ψ)∂ = α(ψ, φ)`. The base flow `ṁ = ρ(m)a_φ(t)` is
//! integrated first at half the step, then the fiber equation, which is
//! affine in `b`, is integrated against those base samples.

use std::thread;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::algebroid::{t2_pi, tajet_as_t2, InvolutionAlgebroid, EXACT_TOL};
use crate::bundle::{AElement, TAElement};
use crate::error::{Error, Result};
use crate::jet::{self, JetScalar};
use crate::poly::{PolyMap, Term};
use crate::sampling;
use crate::scalar::{max_dist, Scalar};

/// Composability and membership threshold.
pub const MEMBERSHIP_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn last(&self) -> &[f64] {
        self.states.last().expect("trajectories are non-empty")
    }

    pub fn to_csv(&self, header: &[String]) -> String {
        let mut s = String::from("t");
        for h in header {
            s.push(',');
            s.push_str(h);
        }
        s.push('\n');
        for (t, x) in self.times.iter().zip(&self.states) {
            s.push_str(&format!("{t:e}"));
            for v in x {
                s.push_str(&format!(",{v:e}"));
            }
            s.push('\n');
        }
        s
    }
}

fn step_count(t_end: f64, h: f64) -> Result<usize> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::InvalidArgument(format!("step must be positive, got {h}")));
    }
    if !(t_end >= 0.0) || !t_end.is_finite() {
        return Err(Error::InvalidArgument(format!("end time must be non-negative, got {t_end}")));
    }
    // tolerate t_end/h landing a hair above an integer
    Ok(((t_end / h) - 1e-9).ceil().max(0.0) as usize)
}

fn axpy(x: &[f64], a: f64, k: &[f64]) -> Vec<f64> {
    x.iter().zip(k).map(|(x, k)| x + a * k).collect()
}

/// Classical RK4 for `ẋ = f(t, x)` on `[0, t_end]`. The step is shrunk to
/// `t_end / ⌈t_end / h⌉` so the grid ends exactly at `t_end`.
pub fn rk4_solve<F>(field: F, x0: &[f64], t_end: f64, h: f64) -> Result<Trajectory>
where
    F: Fn(f64, &[f64]) -> Vec<f64>,
{
    let n = step_count(t_end, h)?;
    let h = if n == 0 { 0.0 } else { t_end / n as f64 };
    let mut times = Vec::with_capacity(n + 1);
    let mut states = Vec::with_capacity(n + 1);
    let mut x = x0.to_vec();
    times.push(0.0);
    states.push(x.clone());
    for i in 0..n {
        let t = i as f64 * h;
        let k1 = field(t, &x);
        let k2 = field(t + h / 2.0, &axpy(&x, h / 2.0, &k1));
        let k3 = field(t + h / 2.0, &axpy(&x, h / 2.0, &k2));
        let k4 = field(t + h, &axpy(&x, h, &k3));
        for j in 0..x.len() {
            x[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
        let t_next = (i + 1) as f64 * h;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { t: t_next });
        }
        times.push(t_next);
        states.push(x.clone());
    }
    Ok(Trajectory { times, states })
}

/// Matrix exponential by scaling and squaring with a Padé approximant.
pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    a.clone().exp()
}

/// A path variation `t ↦ (m, a, ṁ, ȧ)` with polynomial blocks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct APathVariation {
    pub dim_m: usize,
    pub dim_a: usize,
    pub t_end: f64,
    /// `1 → 2·dim_M + 2·dim_A`, blocks in the order `m, a, ṁ, ȧ`.
    pub phi: PolyMap,
}

fn split_ta<S: Scalar>(x: Vec<S>, dim_m: usize, dim_a: usize) -> TAElement<S> {
    let m = x[..dim_m].to_vec();
    let a = x[dim_m..dim_m + dim_a].to_vec();
    let dm = x[dim_m + dim_a..2 * dim_m + dim_a].to_vec();
    let da = x[2 * dim_m + dim_a..].to_vec();
    TAElement { m, a, dm, da }
}

fn check_shape(p: &PolyMap, in_dim: usize, dim_m: usize, dim_a: usize) -> Result<()> {
    if p.in_dim() != in_dim || p.out_dim() != 2 * (dim_m + dim_a) {
        return Err(Error::DimensionMismatch {
            expected: 2 * (dim_m + dim_a),
            got: p.out_dim(),
        });
    }
    Ok(())
}

impl APathVariation {
    pub fn new(dim_m: usize, dim_a: usize, t_end: f64, phi: PolyMap) -> Result<Self> {
        check_shape(&phi, 1, dim_m, dim_a)?;
        if !(t_end > 0.0) || !t_end.is_finite() {
            return Err(Error::InvalidArgument(format!("end time must be positive, got {t_end}")));
        }
        Ok(APathVariation { dim_m, dim_a, t_end, phi })
    }

    pub fn eval<S: Scalar>(&self, t: S) -> TAElement<S> {
        split_ta(self.phi.eval(&[t]), self.dim_m, self.dim_a)
    }
}

/// `T(φ)∂` at `t`: `φ` pushed along the time direction, as a depth-2 jet
/// over `A` with time as direction 1.
fn push_time(phi: impl Fn(JetScalar) -> TAElement<JetScalar>, t: f64) -> crate::jet::JetPoint {
    let tj = JetScalar::variable(t, 1, 1).expect("depth 1");
    tajet_as_t2(&phi(tj))
}

/// Residual of `T(ρ)x = cT²(π)y` where `y` is a time push of the variation.
fn apath_residual_at(inv: &InvolutionAlgebroid, x: &TAElement<f64>, pushed: &crate::jet::JetPoint) -> f64 {
    let rhs = match jet::flip_c(&t2_pi(pushed, inv.dim_m()), 1, 2) {
        Ok(r) => r,
        Err(_) => return f64::INFINITY,
    };
    inv.anchor.t_rho(x).max_abs_diff(&rhs)
}

/// Uniform grid of `n + 1` points on `[0, end]`.
fn grid(end: f64, n: usize) -> Vec<f64> {
    (0..=n).map(|i| end * i as f64 / n as f64).collect()
}

/// Largest violation of `T(ρ)φ = cT²(π)T(φ)∂` on a uniform time grid.
pub fn apath_membership(inv: &InvolutionAlgebroid, phi: &APathVariation, n: usize) -> f64 {
    grid(phi.t_end, n.max(1))
        .into_iter()
        .map(|t| apath_residual_at(inv, &phi.eval(t), &push_time(|s| phi.eval(s), t)))
        .fold(0.0, fmax)
}

fn fmax(a: f64, b: f64) -> f64 {
    if a.is_nan() || b.is_nan() {
        f64::NAN
    } else {
        a.max(b)
    }
}

/// The affine fiber equation `ḃ = A(t)b + r(t)` over a precomputed base flow.
pub struct LinearDynSys<'a> {
    /// Base solution sampled at half steps.
    pub base: Trajectory,
    coefficient: Box<dyn Fn(f64, &[f64]) -> Result<(DMatrix<f64>, DVector<f64>)> + Sync + 'a>,
}

impl<'a> LinearDynSys<'a> {
    /// Transport along `phi`: the coefficients are read off
    /// `α((m, b), (m, a_φ, ṁ_φ, ȧ_φ))`, which is affine in `b`.
    pub fn for_transport<P>(inv: &'a InvolutionAlgebroid, phi: P, m0: &[f64], t_end: f64, h: f64) -> Result<Self>
    where
        P: Fn(f64) -> TAElement<f64> + Sync + 'a,
    {
        let base = rk4_solve(
            |t, m| inv.anchor.apply(m, &phi(t).a),
            m0,
            t_end,
            h / 2.0,
        )?;
        let dim_a = inv.dim_a();
        let coefficient = move |t: f64, m: &[f64]| -> Result<(DMatrix<f64>, DVector<f64>)> {
            let p = phi(t);
            let w = TAElement::new(m.to_vec(), p.a, p.dm, p.da);
            let r = inv.alpha(&AElement::zero_over(m, dim_a), &w)?.da;
            let mut a = DMatrix::zeros(dim_a, dim_a);
            for j in 0..dim_a {
                let mut e = vec![0.0; dim_a];
                e[j] = 1.0;
                let col = inv.alpha(&AElement::new(m.to_vec(), e), &w)?.da;
                for k in 0..dim_a {
                    a[(k, j)] = col[k] - r[k];
                }
            }
            Ok((a, DVector::from_vec(r)))
        };
        Ok(LinearDynSys {
            base,
            coefficient: Box::new(coefficient),
        })
    }

    /// RK4 at twice the base step, from `b0`. States are `(m, b)`.
    pub fn solve(&self, b0: &[f64]) -> Result<Trajectory> {
        let n = (self.base.times.len() - 1) / 2;
        let mut b = DVector::from_column_slice(b0);
        let mut times = Vec::with_capacity(n + 1);
        let mut states = Vec::with_capacity(n + 1);
        let push = |times: &mut Vec<f64>, states: &mut Vec<Vec<f64>>, i: usize, b: &DVector<f64>| {
            times.push(self.base.times[2 * i]);
            states.push([self.base.states[2 * i].clone(), b.iter().copied().collect()].concat());
        };
        push(&mut times, &mut states, 0, &b);
        for i in 0..n {
            let (t0, t1, t2) = (self.base.times[2 * i], self.base.times[2 * i + 1], self.base.times[2 * i + 2]);
            let h = t2 - t0;
            let (a0, r0) = (self.coefficient)(t0, &self.base.states[2 * i])?;
            let (a1, r1) = (self.coefficient)(t1, &self.base.states[2 * i + 1])?;
            let (a2, r2) = (self.coefficient)(t2, &self.base.states[2 * i + 2])?;
            let k1 = &a0 * &b + &r0;
            let k2 = &a1 * (&b + &k1 * (h / 2.0)) + &r1;
            let k3 = &a1 * (&b + &k2 * (h / 2.0)) + &r1;
            let k4 = &a2 * (&b + &k3 * h) + &r2;
            b += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
            if b.iter().any(|v| !v.is_finite()) {
                return Err(Error::Divergence { t: t2 });
            }
            push(&mut times, &mut states, i + 1, &b);
        }
        Ok(Trajectory { times, states })
    }
}

/// A transported element along a path, with the anchor identity
/// `ρψ = T(π)φ` measured on the way.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathTransport {
    /// States `(m, b)`.
    pub trajectory: Trajectory,
    pub anchor_residual: f64,
}

fn composability(inv: &InvolutionAlgebroid, a0: &AElement<f64>, at: &TAElement<f64>) -> f64 {
    max_dist(&a0.m, &at.m).max(max_dist(&inv.anchor.apply(&a0.m, &a0.a), &at.dm))
}

fn transport_along<P>(inv: &InvolutionAlgebroid, phi: P, a0: &AElement<f64>, t_end: f64, h: f64) -> Result<PathTransport>
where
    P: Fn(f64) -> TAElement<f64> + Sync,
{
    let sys = LinearDynSys::for_transport(inv, &phi, &a0.m, t_end, h)?;
    let trajectory = sys.solve(&a0.a)?;
    let dim_m = inv.dim_m();
    let mut anchor_residual: f64 = 0.0;
    for (t, x) in trajectory.times.iter().zip(&trajectory.states) {
        let (m, b) = x.split_at(dim_m);
        let p = phi(*t);
        let r = max_dist(m, &p.m).max(max_dist(&inv.anchor.apply(m, b), &p.dm));
        anchor_residual = fmax(anchor_residual, r);
    }
    Ok(PathTransport {
        trajectory,
        anchor_residual,
    })
}

/// `ψ_a` with `ψ_a(0) = a0` and `T(ψ_a)∂ = α(ψ_a, φ)`.
pub fn apath_transport(inv: &InvolutionAlgebroid, phi: &APathVariation, a0: &AElement<f64>, h: f64) -> Result<PathTransport> {
    if phi.dim_m != inv.dim_m() || phi.dim_a != inv.dim_a() {
        return Err(Error::DimensionMismatch {
            expected: inv.dim_a(),
            got: phi.dim_a,
        });
    }
    let residual = composability(inv, a0, &phi.eval(0.0));
    if !(residual <= MEMBERSHIP_TOL) {
        return Err(Error::Composability { residual });
    }
    transport_along(inv, |t| phi.eval(t), a0, phi.t_end, h)
}

/// Distance of a transport over a tangent algebroid from its closed form
/// `b(t) = b₀ + a_φ(t) − a_φ(0)`.
pub fn tangent_closed_form_residual(phi: &APathVariation, a0: &AElement<f64>, tr: &Trajectory) -> f64 {
    let start = phi.eval(0.0).a;
    let mut worst: f64 = 0.0;
    for (t, x) in tr.times.iter().zip(&tr.states) {
        let at = phi.eval(*t).a;
        let expect: Vec<f64> = (0..phi.dim_a).map(|k| a0.a[k] + at[k] - start[k]).collect();
        worst = fmax(worst, max_dist(&x[phi.dim_m..], &expect));
    }
    worst
}

/// A homotopy variation `(h₀, h₁)` over `[0, 1]²`, polynomial in `(s, t)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AHomotopyVariation {
    pub dim_m: usize,
    pub dim_a: usize,
    pub h0: PolyMap,
    pub h1: PolyMap,
}

impl AHomotopyVariation {
    pub fn new(dim_m: usize, dim_a: usize, h0: PolyMap, h1: PolyMap) -> Result<Self> {
        check_shape(&h0, 2, dim_m, dim_a)?;
        check_shape(&h1, 2, dim_m, dim_a)?;
        Ok(AHomotopyVariation { dim_m, dim_a, h0, h1 })
    }

    pub fn eval0<S: Scalar>(&self, s: S, t: S) -> TAElement<S> {
        split_ta(self.h0.eval(&[s, t]), self.dim_m, self.dim_a)
    }

    pub fn eval1<S: Scalar>(&self, s: S, t: S) -> TAElement<S> {
        split_ta(self.h1.eval(&[s, t]), self.dim_m, self.dim_a)
    }
}

/// Largest violations of the horizontal A-path, vertical A-path and
/// compatibility conditions on an `(n+1)²` grid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HomotopyMembership {
    pub horizontal: f64,
    pub vertical: f64,
    pub compatible: f64,
}

impl HomotopyMembership {
    pub fn max(&self) -> f64 {
        fmax(fmax(self.horizontal, self.vertical), self.compatible)
    }
}

pub fn ahomotopy_membership(inv: &InvolutionAlgebroid, h: &AHomotopyVariation, n: usize) -> HomotopyMembership {
    let mut out = HomotopyMembership {
        horizontal: 0.0,
        vertical: 0.0,
        compatible: 0.0,
    };
    let g = grid(1.0, n.max(1));
    let konst = JetScalar::constant;
    for &s in &g {
        for &t in &g {
            let h0 = h.eval0(s, t);
            let h1 = h.eval1(s, t);
            // T(h_i) along s and along t, with the moving parameter first
            let h0_s = push_time(|x| h.eval0(x, konst(t)), s);
            let h0_t = push_time(|x| h.eval0(konst(s), x), t);
            let h1_s = push_time(|x| h.eval1(x, konst(t)), s);
            let h1_t = push_time(|x| h.eval1(konst(s), x), t);
            out.horizontal = fmax(out.horizontal, apath_residual_at(inv, &h0, &h0_s));
            out.vertical = fmax(out.vertical, apath_residual_at(inv, &h1, &h1_t));
            let ctd = (|| -> Result<f64> {
                let lhs = inv.t_alpha(&h0, &jet::flip_c(&h1_s, 1, 2)?)?;
                Ok(lhs.max_abs_diff(&jet::flip_c(&h0_t, 1, 2)?))
            })()
            .unwrap_or(f64::INFINITY);
            out.compatible = fmax(out.compatible, ctd);
        }
    }
    out
}

/// Both integration orders of a homotopy transport sampled on a uniform
/// output grid. `phi0[i][j]` and `phi1[i][j]` hold `(m, b)` at
/// `(grid[i], grid[j])`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HomotopyTransport {
    pub grid: Vec<f64>,
    pub phi0: Vec<Vec<Vec<f64>>>,
    pub phi1: Vec<Vec<Vec<f64>>>,
    pub discrepancy: f64,
    pub anchor_residual: f64,
}

impl HomotopyTransport {
    /// Rows `(s, t, b…)` of `Φ₀`.
    pub fn to_csv(&self, dim_m: usize) -> String {
        let mut out = String::from("s,t");
        let dim_b = self.phi0[0][0].len() - dim_m;
        for k in 0..dim_b {
            out.push_str(&format!(",b{k}"));
        }
        out.push('\n');
        for (i, s) in self.grid.iter().enumerate() {
            for (j, t) in self.grid.iter().enumerate() {
                out.push_str(&format!("{s:e},{t:e}"));
                for v in &self.phi0[i][j][dim_m..] {
                    out.push_str(&format!(",{v:e}"));
                }
                out.push('\n');
            }
        }
        out
    }
}

/// Runs `f` over `0..n` on scoped worker threads, keeping index order.
fn par_map<T: Send, F: Fn(usize) -> T + Sync>(n: usize, f: F) -> Vec<T> {
    let workers = sampling::worker_count().min(n).max(1);
    if workers == 1 {
        return (0..n).map(f).collect();
    }
    let chunk = n.div_ceil(workers);
    thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let f = &f;
                scope.spawn(move || (w * chunk..((w + 1) * chunk).min(n)).map(f).collect::<Vec<T>>())
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("transport worker panicked"))
            .collect()
    })
}

/// Default number of output cells per axis for homotopy surfaces.
pub const SURFACE_CELLS: usize = 20;

/// `Φ₀` (first along `t` at `s = 0`, then along `s`) and `Φ₁` (first along
/// `s` at `t = 0`, then along `t`), each integrated at step `h` and sampled
/// on `cells + 1` points per axis.
pub fn ahomotopy_transport(
    inv: &InvolutionAlgebroid,
    h: &AHomotopyVariation,
    a0: &AElement<f64>,
    step: f64,
    cells: usize,
) -> Result<HomotopyTransport> {
    if h.dim_m != inv.dim_m() || h.dim_a != inv.dim_a() {
        return Err(Error::DimensionMismatch {
            expected: inv.dim_a(),
            got: h.dim_a,
        });
    }
    let residual = composability(inv, a0, &h.eval0(0.0, 0.0));
    if !(residual <= MEMBERSHIP_TOL) {
        return Err(Error::Composability { residual });
    }
    let cells = cells.max(1);
    let per_cell = step_count(1.0 / cells as f64, step)?.max(1);
    let h_eff = 1.0 / (cells * per_cell) as f64;
    let g = grid(1.0, cells);
    let dim_m = inv.dim_m();
    let split = |x: &[f64]| AElement::new(x[..dim_m].to_vec(), x[dim_m..].to_vec());
    let every = |tr: PathTransport| -> (Vec<Vec<f64>>, f64) {
        let pts = (0..=cells).map(|k| tr.trajectory.states[k * per_cell].clone()).collect();
        (pts, tr.anchor_residual)
    };

    // Φ₀: ψ₁ along t at s = 0, then each t-slice along s
    let (psi1, r1) = every(transport_along(inv, |t| h.eval1(0.0, t), a0, 1.0, h_eff)?);
    let cols: Vec<Result<(Vec<Vec<f64>>, f64)>> = par_map(cells + 1, |j| {
        let t = g[j];
        Ok(every(transport_along(inv, |s| h.eval0(s, t), &split(&psi1[j]), 1.0, h_eff)?))
    });
    // Φ₁: ψ₀ along s at t = 0, then each s-slice along t
    let (psi0, r0) = every(transport_along(inv, |s| h.eval0(s, 0.0), a0, 1.0, h_eff)?);
    let rows: Vec<Result<(Vec<Vec<f64>>, f64)>> = par_map(cells + 1, |i| {
        let s = g[i];
        Ok(every(transport_along(inv, |t| h.eval1(s, t), &split(&psi0[i]), 1.0, h_eff)?))
    });

    let mut anchor_residual = fmax(r0, r1);
    let mut phi0 = vec![vec![Vec::new(); cells + 1]; cells + 1];
    for (j, c) in cols.into_iter().enumerate() {
        let (pts, r) = c?;
        anchor_residual = fmax(anchor_residual, r);
        for (i, p) in pts.into_iter().enumerate() {
            phi0[i][j] = p;
        }
    }
    let mut phi1 = Vec::with_capacity(cells + 1);
    for r in rows {
        let (pts, res) = r?;
        anchor_residual = fmax(anchor_residual, res);
        phi1.push(pts);
    }
    let mut discrepancy: f64 = 0.0;
    for i in 0..=cells {
        for j in 0..=cells {
            discrepancy = fmax(discrepancy, max_dist(&phi0[i][j], &phi1[i][j]));
        }
    }
    Ok(HomotopyTransport {
        grid: g,
        phi0,
        phi1,
        discrepancy,
        anchor_residual,
    })
}

/// Concatenates the outputs of maps sharing an input space.
pub fn stack(parts: &[PolyMap]) -> Result<PolyMap> {
    let in_dim = parts.first().map_or(0, |p| p.in_dim());
    let terms: Vec<Vec<Term>> = parts.iter().flat_map(|p| p.terms().to_vec()).collect();
    PolyMap::new(in_dim, terms.len(), terms)
}

/// `ρ(m)` as a constant linear map `ℝ^{dim_A} → ℝ^{dim_M}`.
fn anchor_matrix(inv: &InvolutionAlgebroid, m: &[f64]) -> Vec<Vec<f64>> {
    let n = inv.dim_a();
    let cols: Vec<Vec<f64>> = (0..n).map(|j| inv.anchor.apply(m, &crate::algebroid::unit(n, j))).collect();
    (0..inv.dim_m()).map(|r| cols.iter().map(|c| c[r]).collect()).collect()
}

fn require_zero_at(p: &PolyMap, at: &[f64], what: &str) -> Result<()> {
    let v = p.eval(at);
    let r = v.iter().fold(0.0f64, |acc, x| fmax(acc, x.abs()));
    if !(r <= EXACT_TOL) {
        return Err(Error::InvalidArgument(format!("{what} must vanish at the origin (|value| = {r:e})")));
    }
    Ok(())
}

/// `∨χ = α(ξm!, T(χ)∂) = (m, 0, ρ(m)χ, χ′)`.
pub fn inf_apath_vee(inv: &InvolutionAlgebroid, chi: &PolyMap, m: &[f64], t_end: f64) -> Result<APathVariation> {
    let (dm, da) = (inv.dim_m(), inv.dim_a());
    if chi.in_dim() != 1 || chi.out_dim() != da || m.len() != dm {
        return Err(Error::DimensionMismatch {
            expected: da,
            got: chi.out_dim(),
        });
    }
    require_zero_at(chi, &[0.0], "fiber path")?;
    let rho = PolyMap::linear(da, &anchor_matrix(inv, m))?.compose(chi)?;
    let phi = stack(&[
        PolyMap::constant(1, m),
        PolyMap::zero(1, da),
        rho,
        chi.derivative(0),
    ])?;
    APathVariation::new(dm, da, t_end, phi)
}

/// The three conditions of an infinitesimal A-path: starts at zero,
/// source constant, variation of A-paths.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InfPathMembership {
    pub starts_at_zero: f64,
    pub source_constant: f64,
    pub variation: f64,
}

impl InfPathMembership {
    pub fn max(&self) -> f64 {
        fmax(fmax(self.starts_at_zero, self.source_constant), self.variation)
    }
}

pub fn inf_apath_membership(inv: &InvolutionAlgebroid, phi: &APathVariation, n: usize) -> InfPathMembership {
    let start = phi.eval(0.0);
    let mut zero: f64 = 0.0;
    for t in grid(phi.t_end, n.max(1)) {
        let x = phi.eval(t);
        zero = fmax(zero, max_dist(&x.m, &start.m).max(max_dist(&x.a, &vec![0.0; x.a.len()])));
    }
    InfPathMembership {
        starts_at_zero: zero,
        source_constant: max_dist(&start.dm, &vec![0.0; start.dm.len()]),
        variation: apath_membership(inv, phi, n),
    }
}

/// Number of grid cells used for membership checks.
pub const MEMBERSHIP_GRID: usize = 32;

/// `∧φ`: transport of `ξm` along `φ`. States are the fiber values `b`.
pub fn inf_apath_wedge(inv: &InvolutionAlgebroid, phi: &APathVariation, h: f64) -> Result<Trajectory> {
    let mem = inf_apath_membership(inv, phi, MEMBERSHIP_GRID);
    if !(mem.max() <= MEMBERSHIP_TOL) {
        return Err(Error::Membership {
            what: "infinitesimal A-path".into(),
            residual: mem.max(),
        });
    }
    let m = phi.eval(0.0).m;
    let tr = apath_transport(inv, phi, &AElement::zero_over(&m, inv.dim_a()), h)?;
    // π-constancy of the fiber path
    let drift = tr
        .trajectory
        .states
        .iter()
        .fold(0.0f64, |acc, x| fmax(acc, max_dist(&x[..m.len()], &m)));
    if !(drift <= MEMBERSHIP_TOL) {
        return Err(Error::Membership {
            what: "fiber path".into(),
            residual: drift,
        });
    }
    let dim_m = inv.dim_m();
    Ok(Trajectory {
        times: tr.trajectory.times,
        states: tr.trajectory.states.into_iter().map(|x| x[dim_m..].to_vec()).collect(),
    })
}

/// `∨` of a sampled fiber path, with `T(χ)∂` taken from a fourth-order
/// central difference. Returns `(t, ∨χ(t))` at interior samples.
pub fn vee_of_sampled_path(inv: &InvolutionAlgebroid, m: &[f64], chi: &Trajectory) -> Result<Vec<(f64, TAElement<f64>)>> {
    let n = chi.times.len();
    if n < 5 {
        return Err(Error::InvalidArgument("need at least five samples".into()));
    }
    let h = chi.times[1] - chi.times[0];
    let xi = AElement::zero_over(m, inv.dim_a());
    let mut out = Vec::with_capacity(n - 4);
    for i in 2..n - 2 {
        let s = &chi.states;
        let d: Vec<f64> = (0..s[i].len())
            .map(|k| (-s[i + 2][k] + 8.0 * s[i + 1][k] - 8.0 * s[i - 1][k] + s[i - 2][k]) / (12.0 * h))
            .collect();
        let tchi = TAElement::new(m.to_vec(), s[i].clone(), vec![0.0; m.len()], d);
        out.push((chi.times[i], inv.alpha(&xi, &tchi)?));
    }
    Ok(out)
}

/// `∨η = (α(ξm!, T(η)(∂×0)), α(ξm!, T(η)(0×∂)))`, which in coordinates is
/// `((m, 0, ρ(m)η, ∂ₛη), (m, 0, ρ(m)η, ∂ₜη))`.
pub fn inf_ahomotopy_vee(inv: &InvolutionAlgebroid, eta: &PolyMap, m: &[f64]) -> Result<AHomotopyVariation> {
    let (dm, da) = (inv.dim_m(), inv.dim_a());
    if eta.in_dim() != 2 || eta.out_dim() != da || m.len() != dm {
        return Err(Error::DimensionMismatch {
            expected: da,
            got: eta.out_dim(),
        });
    }
    require_zero_at(eta, &[0.0, 0.0], "fiber surface")?;
    let rho = PolyMap::linear(da, &anchor_matrix(inv, m))?.compose(eta)?;
    let half = |d: usize| -> Result<PolyMap> {
        stack(&[PolyMap::constant(2, m), PolyMap::zero(2, da), rho.clone(), eta.derivative(d)])
    };
    AHomotopyVariation::new(dm, da, half(0)?, half(1)?)
}

/// The five conditions of an infinitesimal A-homotopy.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InfHomotopyMembership {
    pub starts_at_zero: f64,
    pub source_constant: f64,
    pub horizontal: f64,
    pub vertical: f64,
    pub compatible: f64,
}

impl InfHomotopyMembership {
    pub fn max(&self) -> f64 {
        [self.starts_at_zero, self.source_constant, self.horizontal, self.vertical, self.compatible]
            .into_iter()
            .fold(0.0, fmax)
    }
}

pub fn inf_ahomotopy_membership(inv: &InvolutionAlgebroid, h: &AHomotopyVariation, n: usize) -> InfHomotopyMembership {
    let m = h.eval0(0.0, 0.0).m;
    let mut zero: f64 = 0.0;
    for s in grid(1.0, n.max(1)) {
        for t in grid(1.0, n.max(1)) {
            for x in [h.eval0(s, t), h.eval1(s, t)] {
                zero = fmax(zero, max_dist(&x.m, &m).max(max_dist(&x.a, &vec![0.0; x.a.len()])));
            }
        }
    }
    let src = [h.eval0(0.0, 0.0), h.eval1(0.0, 0.0)]
        .iter()
        .fold(0.0f64, |acc, x| fmax(acc, max_dist(&x.dm, &vec![0.0; x.dm.len()])));
    let rest = ahomotopy_membership(inv, h, n);
    InfHomotopyMembership {
        starts_at_zero: zero,
        source_constant: src,
        horizontal: rest.horizontal,
        vertical: rest.vertical,
        compatible: rest.compatible,
    }
}

/// `∧h = Φ₀ = Φ₁` from `ξm`. Also returns the transport so the
/// discrepancy of the two orders stays visible.
pub fn inf_ahomotopy_wedge(inv: &InvolutionAlgebroid, h: &AHomotopyVariation, step: f64, cells: usize) -> Result<HomotopyTransport> {
    let mem = inf_ahomotopy_membership(inv, h, MEMBERSHIP_GRID.min(16));
    if !(mem.max() <= MEMBERSHIP_TOL) {
        return Err(Error::Membership {
            what: "infinitesimal A-homotopy".into(),
            residual: mem.max(),
        });
    }
    let m = h.eval0(0.0, 0.0).m;
    ahomotopy_transport(inv, h, &AElement::zero_over(&m, inv.dim_a()), step, cells)
}

/// `∨∧h − h` on the output grid: the derivatives of the surface are read
/// off its defining equations `∂ₛΦ₀ = α(Φ₀, h₀)` and `∂ₜΦ₁ = α(Φ₁, h₁)`,
/// so the result also absorbs `|Φ₀ − Φ₁|`.
pub fn homotopy_vee_wedge_residual(inv: &InvolutionAlgebroid, h: &AHomotopyVariation, surf: &HomotopyTransport) -> Result<f64> {
    let dim_m = inv.dim_m();
    let m = h.eval0(0.0, 0.0).m;
    let xi = AElement::zero_over(&m, inv.dim_a());
    let mut worst = surf.discrepancy;
    for (i, &s) in surf.grid.iter().enumerate() {
        for (j, &t) in surf.grid.iter().enumerate() {
            for (phi, hk) in [(&surf.phi0[i][j], h.eval0(s, t)), (&surf.phi1[i][j], h.eval1(s, t))] {
                let v = AElement::new(phi[..dim_m].to_vec(), phi[dim_m..].to_vec());
                let deriv = inv.alpha(&v, &TAElement::new(v.m.clone(), hk.a.clone(), hk.dm.clone(), hk.da.clone()))?;
                let teta = TAElement::new(m.clone(), v.a.clone(), vec![0.0; dim_m], deriv.da);
                worst = fmax(worst, inv.alpha(&xi, &teta)?.dist(&hk));
            }
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn rk4_examples() {
        let c = rk4_solve(|_, _| vec![0.0, 0.0], &[1.0, -2.0], 1.0, 1e-2).unwrap();
        assert!(c.states.iter().all(|x| x == &vec![1.0, -2.0]));
        let e = rk4_solve(|_, x| x.to_vec(), &[1.0], 1.0, 1e-3).unwrap();
        assert_eq!(e.times.len(), 1001);
        assert_eq!(*e.times.last().unwrap(), 1.0);
        assert!((e.last()[0] - std::f64::consts::E).abs() < 1e-10);
    }

    #[test]
    fn rk4_reports_divergence() {
        let r = rk4_solve(|_, x| vec![x[0] * x[0]], &[1.0], 2.0, 1e-2);
        assert!(matches!(r, Err(Error::Divergence { .. })));
        assert!(rk4_solve(|_, x| x.to_vec(), &[1.0], 1.0, 0.0).is_err());
    }

    #[test]
    fn expm_examples() {
        assert_eq!(expm(&DMatrix::zeros(3, 3)), DMatrix::identity(3, 3));
        let d = expm(&DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -2.0, 0.5])));
        for (i, a) in [1.0f64, -2.0, 0.5].iter().enumerate() {
            assert!((d[(i, i)] - a.exp()).abs() < 1e-12 * a.exp().max(1.0));
        }
        let mut n = DMatrix::zeros(3, 3);
        n[(0, 2)] = 4.0;
        n[(1, 2)] = -1.5;
        assert_eq!(expm(&n), DMatrix::identity(3, 3) + &n);
    }

    #[test]
    fn expm_matches_rk4() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..5 {
            let mut a = DMatrix::from_fn(4, 4, |_, _| rng.random_range(-1.0..=1.0));
            let norm = a.norm();
            a *= 2.0 / norm;
            let x0 = DVector::from_fn(4, |_, _| rng.random_range(-1.0..=1.0));
            let tr = rk4_solve(|_, x| (&a * DVector::from_column_slice(x)).iter().copied().collect(), x0.as_slice(), 1.0, 1e-3).unwrap();
            let exact = expm(&a) * &x0;
            assert!(max_dist(tr.last(), exact.as_slice()) < 1e-8);
        }
    }

    #[test]
    fn tangent_transport_closed_form() {
        let inv = InvolutionAlgebroid::from_spec(&catalog::algebroid("tangent(2)").unwrap());
        let (phi, a0) = catalog::tangent_path(2);
        assert!(apath_membership(&inv, &phi, 50) < 1e-12);
        let tr = apath_transport(&inv, &phi, &a0, 1e-3).unwrap();
        let worst = tangent_closed_form_residual(&phi, &a0, &tr.trajectory);
        assert!(worst < 1e-8, "{worst}");
        assert!(tr.anchor_residual < 1e-6);
    }

    #[test]
    fn abelian_transport_keeps_base() {
        let inv = InvolutionAlgebroid::from_spec(&catalog::algebroid("abelian").unwrap());
        // φ(t) = (m₀, (t, 0), 0, (1, 2t)): ρ = 0 so any a works
        let phi = APathVariation::new(
            2,
            2,
            1.0,
            stack(&[
                PolyMap::constant(1, &[0.3, -0.4]),
                PolyMap::linear(1, &[vec![1.0], vec![0.0]]).unwrap(),
                PolyMap::zero(1, 2),
                PolyMap::new(1, 2, vec![vec![Term::new(1.0, vec![0])], vec![Term::new(2.0, vec![1])]]).unwrap(),
            ])
            .unwrap(),
        )
        .unwrap();
        let a0 = AElement::new(vec![0.3, -0.4], vec![1.0, 1.0]);
        let tr = apath_transport(&inv, &phi, &a0, 1e-2).unwrap();
        let last = tr.trajectory.last();
        assert!(max_dist(last, &[0.3, -0.4, 2.0, 2.0]) < 1e-12);
    }

    #[test]
    fn zero_path_gives_constant_trajectory() {
        let inv = InvolutionAlgebroid::from_spec(&catalog::algebroid("so3").unwrap());
        let phi = APathVariation::new(0, 3, 1.0, PolyMap::zero(1, 6)).unwrap();
        let a0 = AElement::new(vec![], vec![0.2, 0.1, -0.3]);
        let tr = apath_transport(&inv, &phi, &a0, 1e-2).unwrap();
        assert!(tr.trajectory.states.iter().all(|x| x == &a0.a));
    }

    #[test]
    fn composability_is_enforced() {
        let inv = InvolutionAlgebroid::from_spec(&catalog::algebroid("tangent(2)").unwrap());
        let (phi, mut a0) = catalog::tangent_path(2);
        a0.a[0] += 0.1;
        assert!(matches!(apath_transport(&inv, &phi, &a0, 1e-2), Err(Error::Composability { .. })));
    }

    #[test]
    fn fiber_equation_is_affine() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for key in catalog::VALID_ALGEBROID_KEYS {
            let inv = InvolutionAlgebroid::from_spec(&catalog::algebroid(key).unwrap());
            let (dm, da) = (inv.dim_m(), inv.dim_a());
            let m: Vec<f64> = (0..dm).map(|_| rng.random_range(-1.0..=1.0)).collect();
            let w = TAElement::random(&mut rng, dm, da);
            let w = TAElement::new(m.clone(), w.a, w.dm, w.da);
            let f = |b: &[f64]| inv.alpha(&AElement::new(m.clone(), b.to_vec()), &w).unwrap().da;
            let (x, y): (Vec<f64>, Vec<f64>) = (0..da).map(|_| (rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0))).unzip();
            let mid: Vec<f64> = x.iter().zip(&y).map(|(a, b)| 0.3 * a + 0.7 * b).collect();
            let lin: Vec<f64> = f(&x).iter().zip(f(&y)).map(|(a, b)| 0.3 * a + 0.7 * b).collect();
            assert!(max_dist(&f(&mid), &lin) < 1e-12, "{key}");
        }
    }

    #[test]
    fn tangent_homotopy_is_path_independent() {
        let inv = InvolutionAlgebroid::from_spec(&catalog::algebroid("tangent(2)").unwrap());
        let (h, a0) = catalog::tangent_homotopy(false);
        assert!(ahomotopy_membership(&inv, &h, 8).max() < 1e-12);
        let out = ahomotopy_transport(&inv, &h, &a0, 1e-2, 4).unwrap();
        assert!(out.discrepancy < 1e-6, "{}", out.discrepancy);
        let (bad, a0) = catalog::tangent_homotopy(true);
        assert!(ahomotopy_membership(&inv, &bad, 8).compatible > 1e-3);
        let out = ahomotopy_transport(&inv, &bad, &a0, 1e-2, 4).unwrap();
        assert!(out.discrepancy > 1e-3, "{}", out.discrepancy);
    }

    #[test]
    fn constant_homotopy_is_straight_line() {
        let inv = InvolutionAlgebroid::from_spec(&catalog::algebroid("abelian").unwrap());
        // h₀ = h₁ = (m, 0, 0, c)
        let c = PolyMap::constant(2, &[0.1, 0.2, 0.0, 0.0, 0.0, 0.0, 1.0, -1.0]);
        let h = AHomotopyVariation::new(2, 2, c.clone(), c).unwrap();
        let a0 = AElement::new(vec![0.1, 0.2], vec![0.0, 0.0]);
        let out = ahomotopy_transport(&inv, &h, &a0, 1e-2, 2).unwrap();
        assert!(out.discrepancy < 1e-12);
        assert!(max_dist(&out.phi0[2][2], &[0.1, 0.2, 2.0, -2.0]) < 1e-12);
    }

    #[test]
    fn vee_examples() {
        let inv = InvolutionAlgebroid::from_spec(&catalog::algebroid("tangent(2)").unwrap());
        let chi = PolyMap::linear(1, &[vec![1.0], vec![0.0]]).unwrap();
        let phi = inf_apath_vee(&inv, &chi, &[0.5, 0.5], 1.0).unwrap();
        let x = phi.eval(0.7);
        assert_eq!(x, TAElement::new(vec![0.5, 0.5], vec![0.0, 0.0], vec![0.7, 0.0], vec![1.0, 0.0]));
        let zero = inf_apath_vee(&inv, &PolyMap::zero(1, 2), &[0.5, 0.5], 1.0).unwrap();
        assert_eq!(zero.eval(0.3), TAElement::new(vec![0.5, 0.5], vec![0.0; 2], vec![0.0; 2], vec![0.0; 2]));
        let bad = PolyMap::constant(1, &[1.0, 0.0]);
        assert!(inf_apath_vee(&inv, &bad, &[0.0, 0.0], 1.0).is_err());
    }

    #[test]
    fn vee_matches_literal_flip() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for key in catalog::VALID_ALGEBROID_KEYS {
            let inv = InvolutionAlgebroid::from_spec(&catalog::algebroid(key).unwrap());
            let m: Vec<f64> = (0..inv.dim_m()).map(|_| rng.random_range(-1.0..=1.0)).collect();
            let chi = catalog::random_fiber_path(&mut rng, inv.dim_a(), 4);
            let phi = inf_apath_vee(&inv, &chi, &m, 1.0).unwrap();
            assert!(inf_apath_membership(&inv, &phi, 20).max() < 1e-12, "{key}");
            for t in [0.0, 0.3, 1.0] {
                let tchi = TAElement::new(m.clone(), chi.eval(&[t]), vec![0.0; m.len()], chi.derivative(0).eval(&[t]));
                let lit = inv.alpha(&AElement::zero_over(&m, inv.dim_a()), &tchi).unwrap();
                assert!(lit.dist(&phi.eval(t)) < 1e-14, "{key}");
            }
            let eta = catalog::random_fiber_surface(&mut rng, inv.dim_a(), 3);
            let h = inf_ahomotopy_vee(&inv, &eta, &m).unwrap();
            assert!(inf_ahomotopy_membership(&inv, &h, 6).max() < 1e-12, "{key}");
        }
    }

    #[test]
    fn path_roundtrips() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for key in ["so3", "action-so3-r3"] {
            let inv = InvolutionAlgebroid::from_spec(&catalog::algebroid(key).unwrap());
            let m: Vec<f64> = (0..inv.dim_m()).map(|_| rng.random_range(-1.0..=1.0)).collect();
            let chi = catalog::random_fiber_path(&mut rng, inv.dim_a(), 4);
            let phi = inf_apath_vee(&inv, &chi, &m, 1.0).unwrap();
            let back = inf_apath_wedge(&inv, &phi, 1e-3).unwrap();
            for (t, b) in back.times.iter().zip(&back.states) {
                assert!(max_dist(b, &chi.eval(&[*t])) < 1e-6);
            }
            for (t, v) in vee_of_sampled_path(&inv, &m, &back).unwrap() {
                assert!(v.dist(&phi.eval(t)) < 1e-6);
            }
        }
    }

    #[test]
    fn wedge_rejects_non_members() {
        let inv = InvolutionAlgebroid::from_spec(&catalog::algebroid("tangent(2)").unwrap());
        let (phi, _) = catalog::tangent_path(2);
        assert!(matches!(inf_apath_wedge(&inv, &phi, 1e-2), Err(Error::Membership { .. })));
    }
}
