//! Square-free multi-directional jets.
//!
//! A depth-`d` jet carries `2^d` coefficients indexed by subsets of the
//! directions `{1..d}`; bit `k-1` of the index marks direction `k`. Every
//! `ε_k` squares to zero, so a depth-`d` jet over a space `M` is a point of
//! `T^d M`.
//!
//! Direction 1 is the outermost tangent: projecting it away is `p` at
//! `T^{d-1}M`, projecting direction 2 is `T(p)`, and so on. On depth 2 the
//! canonical flip `c` swaps directions 1 and 2; on depth 3 `c` is the swap
//! (1,2) and `T(c)` the swap (2,3). The vertical lift `l` is [`lift_at`] with
//! `k = 1` and `T(l)` is `k = 2`.

use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use rand::Rng;

use crate::error::{Error, Result};
use crate::report::Report;
use crate::sampling::{self, Check, Outcome};
use crate::scalar::Scalar;

pub const MAX_DEPTH: usize = 3;
const SLOTS: usize = 1 << MAX_DEPTH;

/// Absolute tolerance for the same-fiber precondition of [`add_tangent`].
pub const FIBER_TOL: f64 = 1e-12;

/// A truncated Taylor value with up to three nilpotent directions.
///
/// Coefficients beyond `2^depth` are kept at zero, which lets jets of
/// different depths combine: a shallower operand behaves like its promotion.
#[derive(Clone, Copy, PartialEq)]
pub struct JetScalar {
    depth: u8,
    c: [f64; SLOTS],
}

impl JetScalar {
    pub fn constant(x: f64) -> Self {
        let mut c = [0.0; SLOTS];
        c[0] = x;
        JetScalar { depth: 0, c }
    }

    pub fn new(depth: usize, coeffs: &[f64]) -> Result<Self> {
        check_depth(depth)?;
        if coeffs.len() != 1 << depth {
            return Err(Error::DimensionMismatch {
                expected: 1 << depth,
                got: coeffs.len(),
            });
        }
        let mut c = [0.0; SLOTS];
        c[..coeffs.len()].copy_from_slice(coeffs);
        Ok(JetScalar {
            depth: depth as u8,
            c,
        })
    }

    /// `value + ε_direction` at the given depth.
    pub fn variable(value: f64, direction: usize, depth: usize) -> Result<Self> {
        check_depth(depth)?;
        check_direction(direction, depth)?;
        let mut c = [0.0; SLOTS];
        c[0] = value;
        c[1 << (direction - 1)] = 1.0;
        Ok(JetScalar {
            depth: depth as u8,
            c,
        })
    }

    pub fn depth(&self) -> usize {
        self.depth as usize
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.c[..1 << self.depth]
    }

    /// Coefficient of `∏_{k∈S} ε_k`, with `S` given as a bitmask.
    pub fn coeff(&self, mask: usize) -> f64 {
        if mask < (1 << self.depth) {
            self.c[mask]
        } else {
            0.0
        }
    }

    fn from_raw(depth: usize, c: [f64; SLOTS]) -> Self {
        JetScalar {
            depth: depth as u8,
            c,
        }
    }

    fn remap(&self, new_depth: usize, f: impl Fn(usize) -> Option<usize>) -> Self {
        let mut c = [0.0; SLOTS];
        for (mask, v) in self.coeffs().iter().enumerate() {
            if let Some(m) = f(mask) {
                c[m] += v;
            }
        }
        JetScalar::from_raw(new_depth, c)
    }
}

impl Default for JetScalar {
    fn default() -> Self {
        JetScalar::constant(0.0)
    }
}

impl fmt::Debug for JetScalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.coeffs())
    }
}

impl Add for JetScalar {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        let mut c = self.c;
        for (a, b) in c.iter_mut().zip(rhs.c) {
            *a += b;
        }
        JetScalar::from_raw(self.depth.max(rhs.depth) as usize, c)
    }
}

impl AddAssign for JetScalar {
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

impl Sub for JetScalar {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        let mut c = self.c;
        for (a, b) in c.iter_mut().zip(rhs.c) {
            *a -= b;
        }
        JetScalar::from_raw(self.depth.max(rhs.depth) as usize, c)
    }
}

impl Neg for JetScalar {
    type Output = Self;
    fn neg(self) -> Self {
        let mut c = self.c;
        for a in c.iter_mut() {
            *a = -*a;
        }
        JetScalar::from_raw(self.depth as usize, c)
    }
}

impl Mul for JetScalar {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        let depth = self.depth.max(rhs.depth) as usize;
        let mut c = [0.0; SLOTS];
        for (s, out) in c.iter_mut().enumerate().take(1 << depth) {
            // sum over every split of s into disjoint t and s\t
            let mut t = s;
            loop {
                *out += self.c[t] * rhs.c[s ^ t];
                if t == 0 {
                    break;
                }
                t = (t - 1) & s;
            }
        }
        JetScalar::from_raw(depth, c)
    }
}

impl Mul<f64> for JetScalar {
    type Output = Self;
    fn mul(self, rhs: f64) -> Self {
        let mut c = self.c;
        for a in c.iter_mut() {
            *a *= rhs;
        }
        JetScalar::from_raw(self.depth as usize, c)
    }
}

impl Scalar for JetScalar {
    fn from_f64(x: f64) -> Self {
        JetScalar::constant(x)
    }

    fn re(&self) -> f64 {
        self.c[0]
    }

    fn recip(self) -> Self {
        let depth = self.depth as usize;
        let mut y = [0.0; SLOTS];
        let inv0 = 1.0 / self.c[0];
        y[0] = inv0;
        // masks in increasing order: every proper sub-mask is already known
        for s in 1..(1 << depth) {
            let mut acc = 0.0;
            let mut t = s;
            while t != 0 {
                acc += self.c[t] * y[s ^ t];
                t = (t - 1) & s;
            }
            y[s] = -inv0 * acc;
        }
        JetScalar::from_raw(depth, y)
    }

    fn dist(&self, other: &Self) -> f64 {
        self.c.iter().zip(other.c).fold(0.0, |acc, (a, b)| {
            let d = (a - b).abs();
            if d.is_nan() || d > acc {
                d
            } else {
                acc
            }
        })
    }

    fn is_finite(&self) -> bool {
        self.c.iter().all(|x| x.is_finite())
    }
}

fn check_depth(depth: usize) -> Result<()> {
    if depth > MAX_DEPTH {
        Err(Error::DepthOverflow {
            requested: depth,
            max: MAX_DEPTH,
        })
    } else {
        Ok(())
    }
}

fn check_direction(direction: usize, depth: usize) -> Result<()> {
    if direction == 0 || direction > depth {
        Err(Error::DirectionOutOfRange { direction, depth })
    } else {
        Ok(())
    }
}

/// Open a zero bit at position `k` (0-based), shifting higher bits up.
fn insert_bit(mask: usize, k: usize) -> usize {
    let low = mask & ((1 << k) - 1);
    low | ((mask >> k) << (k + 1))
}

/// Close bit `k` (0-based, assumed clear), shifting higher bits down.
fn remove_bit(mask: usize, k: usize) -> usize {
    let low = mask & ((1 << k) - 1);
    low | ((mask >> (k + 1)) << k)
}

fn swap_bits(mask: usize, i: usize, j: usize) -> usize {
    let bi = (mask >> i) & 1;
    let bj = (mask >> j) & 1;
    if bi == bj {
        mask
    } else {
        mask ^ ((1 << i) | (1 << j))
    }
}

/// A point of `T^d M` for a coordinate space `M ⊆ ℝ^n`.
#[derive(Clone, PartialEq)]
pub struct JetPoint {
    depth: usize,
    entries: Vec<JetScalar>,
}

impl fmt::Debug for JetPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.entries.iter()).finish()
    }
}

impl JetPoint {
    /// Entries are promoted to the largest depth present.
    pub fn new(entries: Vec<JetScalar>) -> Result<Self> {
        let depth = entries.iter().map(|e| e.depth()).max().unwrap_or(0);
        Self::with_depth(depth, entries)
    }

    /// Like [`JetPoint::new`] but with an explicit depth, which matters for
    /// zero-dimensional spaces and for entries that happen to be shallow.
    pub fn with_depth(depth: usize, entries: Vec<JetScalar>) -> Result<Self> {
        check_depth(depth)?;
        if let Some(e) = entries.iter().find(|e| e.depth() > depth) {
            return Err(Error::DepthMismatch(e.depth(), depth));
        }
        let entries = entries
            .into_iter()
            .map(|e| JetScalar::from_raw(depth, e.c))
            .collect();
        Ok(JetPoint { depth, entries })
    }

    pub fn from_real(x: &[f64]) -> Self {
        JetPoint {
            depth: 0,
            entries: x.iter().map(|v| JetScalar::constant(*v)).collect(),
        }
    }

    /// Builds a jet from per-subset blocks: `blocks[mask]` holds the
    /// coefficient vector of `∏_{k∈mask} ε_k`.
    pub fn from_blocks(depth: usize, blocks: &[Vec<f64>]) -> Result<Self> {
        check_depth(depth)?;
        if blocks.len() != 1 << depth {
            return Err(Error::DimensionMismatch {
                expected: 1 << depth,
                got: blocks.len(),
            });
        }
        let dim = blocks[0].len();
        if let Some(b) = blocks.iter().find(|b| b.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: b.len(),
            });
        }
        let entries = (0..dim)
            .map(|i| {
                let mut c = [0.0; SLOTS];
                for (mask, b) in blocks.iter().enumerate() {
                    c[mask] = b[i];
                }
                JetScalar::from_raw(depth, c)
            })
            .collect();
        Ok(JetPoint { depth, entries })
    }

    pub fn random<R: Rng + ?Sized>(rng: &mut R, dim: usize, depth: usize) -> Result<Self> {
        check_depth(depth)?;
        let blocks: Vec<Vec<f64>> = (0..1 << depth)
            .map(|_| (0..dim).map(|_| rng.random_range(-1.0..=1.0)).collect())
            .collect();
        Self::from_blocks(depth, &blocks)
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn dim(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[JetScalar] {
        &self.entries
    }

    pub fn into_entries(self) -> Vec<JetScalar> {
        self.entries
    }

    /// Coefficient vector of `∏_{k∈mask} ε_k`.
    pub fn block(&self, mask: usize) -> Vec<f64> {
        self.entries.iter().map(|e| e.coeff(mask)).collect()
    }

    pub fn base(&self) -> Vec<f64> {
        self.block(0)
    }

    /// Largest coefficient difference; infinite if the shapes differ.
    pub fn max_abs_diff(&self, other: &JetPoint) -> f64 {
        if self.depth != other.depth || self.dim() != other.dim() {
            return f64::INFINITY;
        }
        crate::scalar::max_dist(&self.entries, &other.entries)
    }

    fn map_masks(&self, new_depth: usize, f: impl Fn(usize) -> Option<usize> + Copy) -> JetPoint {
        JetPoint {
            depth: new_depth,
            entries: self.entries.iter().map(|e| e.remap(new_depth, f)).collect(),
        }
    }
}

/// Embeds `x` with `count` new directions appended after the existing ones,
/// all carrying zero coefficients.
pub fn promote(x: &JetPoint, count: usize) -> Result<JetPoint> {
    let depth = x.depth + count;
    check_depth(depth)?;
    Ok(x.map_masks(depth, Some))
}

/// Inserts a new zero direction at position `k`, shifting later directions
/// up. `k = 1` is the zero section at the outer level, `k = depth + 1`
/// coincides with [`promote`].
pub fn insert_zero(x: &JetPoint, k: usize) -> Result<JetPoint> {
    let depth = x.depth + 1;
    check_depth(depth)?;
    check_direction(k, depth)?;
    Ok(x.map_masks(depth, |m| Some(insert_bit(m, k - 1))))
}

/// Drops every coefficient whose index set contains `direction`.
pub fn proj_p(x: &JetPoint, direction: usize) -> Result<JetPoint> {
    check_direction(direction, x.depth)?;
    let k = direction - 1;
    Ok(x.map_masks(x.depth - 1, |m| {
        if m & (1 << k) != 0 {
            None
        } else {
            Some(remove_bit(m, k))
        }
    }))
}

/// The vertical lift acting on direction `k`: index sets without `k` are
/// relabeled around a fresh direction `k+1`, and `k` itself is replaced by
/// the pair `{k, k+1}`.
pub fn lift_at(x: &JetPoint, k: usize) -> Result<JetPoint> {
    check_direction(k, x.depth)?;
    let depth = x.depth + 1;
    check_depth(depth)?;
    let b = k - 1;
    Ok(x.map_masks(depth, |m| {
        let shifted = insert_bit(m, b);
        if m & (1 << b) != 0 {
            Some(shifted | (1 << b))
        } else {
            Some(shifted)
        }
    }))
}

/// `l: T ⇒ T²` at the outer level.
pub fn lift_l(x: &JetPoint) -> Result<JetPoint> {
    lift_at(x, 1)
}

/// Swaps direction labels `i` and `j`.
pub fn flip_c(x: &JetPoint, i: usize, j: usize) -> Result<JetPoint> {
    check_direction(i, x.depth)?;
    check_direction(j, x.depth)?;
    if i == j {
        return Err(Error::InvalidArgument(format!(
            "flip needs two distinct directions, got {i} twice"
        )));
    }
    Ok(x.map_masks(x.depth, |m| Some(swap_bits(m, i - 1, j - 1))))
}

/// Adds two jets in the fiber of `direction`. Coefficients whose index set
/// avoids `direction` must agree within [`FIBER_TOL`].
pub fn add_tangent(x: &JetPoint, y: &JetPoint, direction: usize) -> Result<JetPoint> {
    combine_tangent(x, y, direction, 1.0)
}

/// Inverse of [`add_tangent`]: `x - y` in the fiber of `direction`.
pub fn sub_tangent(x: &JetPoint, y: &JetPoint, direction: usize) -> Result<JetPoint> {
    combine_tangent(x, y, direction, -1.0)
}

fn combine_tangent(x: &JetPoint, y: &JetPoint, direction: usize, sign: f64) -> Result<JetPoint> {
    if x.depth != y.depth {
        return Err(Error::DepthMismatch(x.depth, y.depth));
    }
    if x.dim() != y.dim() {
        return Err(Error::DimensionMismatch {
            expected: x.dim(),
            got: y.dim(),
        });
    }
    check_direction(direction, x.depth)?;
    let bit = 1 << (direction - 1);
    let mut residual: f64 = 0.0;
    let mut entries = Vec::with_capacity(x.dim());
    for (a, b) in x.entries.iter().zip(&y.entries) {
        let mut c = [0.0; SLOTS];
        for m in 0..1 << x.depth {
            if m & bit != 0 {
                c[m] = a.c[m] + sign * b.c[m];
            } else {
                let d = (a.c[m] - b.c[m]).abs();
                if d.is_nan() || d > residual {
                    residual = d;
                }
                c[m] = a.c[m];
            }
        }
        entries.push(JetScalar::from_raw(x.depth, c));
    }
    if residual.is_nan() || residual > FIBER_TOL {
        return Err(Error::FiberMismatch { residual });
    }
    Ok(JetPoint {
        depth: x.depth,
        entries,
    })
}

/// The zero of the `direction` fiber through `x`.
pub fn zero_in_fiber(x: &JetPoint, direction: usize) -> Result<JetPoint> {
    let base = proj_p(x, direction)?;
    insert_zero(&base, direction)
}

/// `μ(a, b) = 0b +_{T(p)} l a` for a pair of tangent vectors in one fiber.
pub fn mu(a: &JetPoint, b: &JetPoint) -> Result<JetPoint> {
    let zb = insert_zero(b, 1)?;
    let la = lift_l(a)?;
    add_tangent(&zb, &la, 2)
}

/// Signature of the vertical-lift family used by the verifier, so a
/// corrupted lift can be injected for mutation testing.
pub type LiftFn = fn(&JetPoint, usize) -> Result<JetPoint>;

/// Runs the tangent-structure equations on random jets.
pub fn check_tangent_axioms(samples: usize, seed: u64) -> Report {
    check_tangent_axioms_with(samples, seed, lift_at)
}

const TANGENT_DIM: usize = 2;

/// As [`check_tangent_axioms`] with an explicit lift; `T(l)` is taken to be
/// `lift(·, 2)`.
pub fn check_tangent_axioms_with(samples: usize, seed: u64, lift: LiftFn) -> Report {
    let checks = [
        Check::new("cc=id", 1e-12),
        Check::new("T(c)cT(c)=cT(c)c", 1e-12),
        Check::new("cl=l", 1e-12),
        Check::new("T(l)l=ll", 1e-12),
        Check::new("cT(c)l=T(l)c", 1e-12),
        Check::new("p0=id", 1e-12),
        Check::new("additive-unit", 1e-12),
        Check::new("additive-commutative", 1e-12),
        Check::new("additive-associative", 1e-12),
        Check::new("interchange", 1e-12),
        Check::new("l-additive", 1e-12),
        Check::new("c-additive", 1e-12),
        Check::new("equaliser-equation", 1e-12),
    ];
    let results = sampling::run(samples, seed, &checks, |rng| {
        let out = tangent_sample(rng, lift);
        match out {
            Ok(o) => o,
            Err(e) => Outcome::failed(checks.len(), format!("error: {e}")),
        }
    });
    let mut report = Report::new("tangent-structure");
    report.extend(results);
    report
}

fn tangent_sample(rng: &mut rand_chacha::ChaCha8Rng, lift: LiftFn) -> Result<Outcome> {
    let x1 = JetPoint::random(rng, TANGENT_DIM, 1)?;
    let x2 = JetPoint::random(rng, TANGENT_DIM, 2)?;
    let x3 = JetPoint::random(rng, TANGENT_DIM, 3)?;
    let c = |x: &JetPoint| flip_c(x, 1, 2);
    let tc = |x: &JetPoint| flip_c(x, 2, 3);
    let l = |x: &JetPoint| lift(x, 1);
    let tl = |x: &JetPoint| lift(x, 2);

    let cc = c(&c(&x2)?)?.max_abs_diff(&x2).max(c(&c(&x3)?)?.max_abs_diff(&x3));
    let braid = tc(&c(&tc(&x3)?)?)?.max_abs_diff(&c(&tc(&c(&x3)?)?)?);
    let cl = c(&l(&x1)?)?.max_abs_diff(&l(&x1)?);
    let tll = tl(&l(&x1)?)?.max_abs_diff(&l(&l(&x1)?)?);
    let ctcl = c(&tc(&l(&x2)?)?)?.max_abs_diff(&tl(&c(&x2)?)?);
    let p0 = proj_p(&promote(&x2, 1)?, 3)?
        .max_abs_diff(&x2)
        .max(proj_p(&insert_zero(&x1, 1)?, 1)?.max_abs_diff(&x1));

    // a fiber-compatible family in direction 1 of depth 2
    let y2 = same_fiber(rng, &x2, 1)?;
    let z2 = same_fiber(rng, &x2, 1)?;
    let zero = zero_in_fiber(&x2, 1)?;
    let unit = add_tangent(&x2, &zero, 1)?.max_abs_diff(&x2);
    let comm = add_tangent(&x2, &y2, 1)?.max_abs_diff(&add_tangent(&y2, &x2, 1)?);
    let assoc = add_tangent(&add_tangent(&x2, &y2, 1)?, &z2, 1)?
        .max_abs_diff(&add_tangent(&x2, &add_tangent(&y2, &z2, 1)?, 1)?);

    let interchange = interchange_residual(rng, &x2)?;

    // l is additive from (p, +) to (T(p), T(+))
    let y1 = same_fiber(rng, &x1, 1)?;
    let l_add = l(&add_tangent(&x1, &y1, 1)?)?.max_abs_diff(&add_tangent(&l(&x1)?, &l(&y1)?, 2)?);
    // c is additive from (T(p), T(+)) to (p, +)
    let w2 = same_fiber(rng, &x2, 2)?;
    let c_add = c(&add_tangent(&x2, &w2, 2)?)?.max_abs_diff(&add_tangent(&c(&x2)?, &c(&w2)?, 1)?);

    // T(p)μ = 0pp μ on a pair sharing a base point
    let b1 = same_fiber(rng, &x1, 1)?;
    let m = mu(&x1, &b1)?;
    let lhs = proj_p(&m, 2)?;
    let rhs = insert_zero(&proj_p(&proj_p(&m, 1)?, 1)?, 1)?;
    let equaliser = lhs.max_abs_diff(&rhs);

    Ok(Outcome {
        residuals: vec![
            cc,
            braid,
            cl,
            tll,
            ctcl,
            p0,
            unit,
            comm,
            assoc,
            interchange,
            l_add,
            c_add,
            equaliser,
        ],
        input: format!("x1={x1:?} x2={x2:?} x3={x3:?}"),
    })
}

/// A random jet agreeing with `x` on every coefficient outside `direction`.
pub fn same_fiber<R: Rng + ?Sized>(rng: &mut R, x: &JetPoint, direction: usize) -> Result<JetPoint> {
    check_direction(direction, x.depth)?;
    let bit = 1 << (direction - 1);
    let entries = x
        .entries
        .iter()
        .map(|e| {
            let mut c = e.c;
            for (m, v) in c.iter_mut().enumerate().take(1 << x.depth) {
                if m & bit != 0 {
                    *v = rng.random_range(-1.0..=1.0);
                }
            }
            JetScalar::from_raw(x.depth, c)
        })
        .collect();
    Ok(JetPoint {
        depth: x.depth,
        entries,
    })
}

/// `(x +₂ y) +₁ (w +₂ z)` against `(x +₁ w) +₂ (y +₁ z)` on a random
/// compatible quadruple sharing the base of `seed`.
fn interchange_residual<R: Rng + ?Sized>(rng: &mut R, seed: &JetPoint) -> Result<f64> {
    let base = proj_p(&proj_p(seed, 2)?, 1)?;
    let dim = base.dim();
    let rand_vec = |rng: &mut R| -> Vec<f64> { (0..dim).map(|_| rng.random_range(-1.0..=1.0)).collect() };
    // x, y share direction-1 data u; w, z share u'; x, w share direction-2 data v; y, z share v'
    let b = base.base();
    let (u, u2, v, v2) = (rand_vec(rng), rand_vec(rng), rand_vec(rng), rand_vec(rng));
    let mk = |d1: &Vec<f64>, d2: &Vec<f64>, rng: &mut R| {
        let mixed = rand_vec(rng);
        JetPoint::from_blocks(2, &[b.clone(), d1.clone(), d2.clone(), mixed])
    };
    let x = mk(&u, &v, rng)?;
    let y = mk(&u, &v2, rng)?;
    let w = mk(&u2, &v, rng)?;
    let z = mk(&u2, &v2, rng)?;
    let lhs = add_tangent(&add_tangent(&x, &y, 2)?, &add_tangent(&w, &z, 2)?, 1)?;
    let rhs = add_tangent(&add_tangent(&x, &w, 1)?, &add_tangent(&y, &z, 1)?, 2)?;
    Ok(lhs.max_abs_diff(&rhs))
}
