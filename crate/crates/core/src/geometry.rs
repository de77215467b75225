//! Geometry of the flat torus `T^d = R^d / Z^d`.
//!
//! Points live in the fundamental domain `[0, 1)^d`. Relations are modelled as
//! cyclic orthotopes: axis-aligned boxes given by a center and a per-dimension
//! half-width in `(0, 0.5]`, which may straddle the `0/1` seam and stay
//! connected. Every function here accepts raw real coordinates and wraps them
//! where needed, so callers can hand in unconstrained parameters.
//!
//! The per-dimension point-to-region distance is
//!
//! ```text
//!            | delta / w                    if delta <= w
//! dist_i  =  |
//!            | (delta - w) / w^2 + 1        otherwise
//! ```
//!
//! where `delta` is the shortest circular distance between the coordinate and
//! the region center. Both branches meet at exactly `1` when `delta == w`.

use std::fmt;
use std::ops::Deref;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest possible circular distance in one dimension.
pub const MAX_DELTA: f64 = 0.5;

/// A point on the torus, every coordinate in `[0, 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TorusVector(Vec<f64>);

impl TorusVector {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for TorusVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl AsRef<[f64]> for TorusVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Axis-aligned region on the torus that may wrap across the seam.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CyclicOrthotope {
    center: TorusVector,
    width: Vec<f64>,
}

impl CyclicOrthotope {
    /// Builds a region from a raw center (wrapped here) and half-widths in `(0, 0.5]`.
    pub fn new(center: &[f64], width: Vec<f64>) -> Result<Self> {
        if center.len() != width.len() {
            return Err(Error::invalid(format!(
                "center has {} dimensions but width has {}",
                center.len(),
                width.len()
            )));
        }
        if let Some((i, w)) = width
            .iter()
            .enumerate()
            .find(|(_, &w)| !(w > 0.0 && w <= MAX_DELTA))
        {
            return Err(Error::invalid(format!(
                "width[{i}] = {w} is outside (0, 0.5]"
            )));
        }
        Ok(Self {
            center: wrap(center)?,
            width,
        })
    }

    pub fn center(&self) -> &TorusVector {
        &self.center
    }

    pub fn width(&self) -> &[f64] {
        &self.width
    }

    pub fn dim(&self) -> usize {
        self.width.len()
    }
}

/// How per-dimension distances are aggregated into one number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormKind {
    L1,
    L2,
    /// Squared Euclidean norm, `sum v_i^2`.
    EL2,
}

impl NormKind {
    pub fn as_str(self) -> &'static str {
        match self {
            NormKind::L1 => "l1",
            NormKind::L2 => "l2",
            NormKind::EL2 => "el2",
        }
    }
}

impl fmt::Display for NormKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NormKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "l1" => Ok(NormKind::L1),
            "l2" => Ok(NormKind::L2),
            "el2" => Ok(NormKind::EL2),
            other => Err(Error::invalid(format!(
                "unknown norm '{other}', expected one of l1, l2, el2"
            ))),
        }
    }
}

/// Per-dimension partial derivatives of the region distance, before norm
/// aggregation.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionDistanceGradient {
    pub d_point: Vec<f64>,
    pub d_center: Vec<f64>,
    pub d_width: Vec<f64>,
}

#[inline]
pub fn wrap_scalar(x: f64) -> f64 {
    let r = x - fast_floor(x);
    // tiny negative inputs round up to exactly 1.0
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

/// `x.floor()` without the libm call on targets lacking a rounding
/// instruction. Exact for every finite input.
#[inline]
fn fast_floor(x: f64) -> f64 {
    if x.abs() < 4.5e15 {
        let t = x as i64 as f64;
        if t > x {
            t - 1.0
        } else {
            t
        }
    } else {
        x.floor()
    }
}

/// Shortest offset between two coordinates, returning `(delta, d delta / d x)`.
///
/// With `torus == false` the plain Euclidean `|x - c|` is used and nothing is
/// wrapped. The derivative is `0` at `delta == 0`; at the antipode the sign of
/// the short branch is kept.
#[inline]
pub fn offset_1d(x: f64, c: f64, torus: bool) -> (f64, f64) {
    if torus {
        offset_wrapped(wrap_scalar(x), wrap_scalar(c))
    } else {
        let diff = x - c;
        (diff.abs(), sign_or_zero(diff))
    }
}

/// [`offset_1d`] for coordinates already in `[0, 1)`.
#[inline]
pub(crate) fn offset_wrapped(x: f64, c: f64) -> (f64, f64) {
    // both branches computed and selected: the comparison is unpredictable
    let diff = x - c;
    let abs = diff.abs();
    let sign = sign_or_zero(diff);
    let short = abs <= MAX_DELTA;
    (
        if short { abs } else { 1.0 - abs },
        if short { sign } else { -sign },
    )
}

#[inline]
fn sign_or_zero(v: f64) -> f64 {
    let pos = if v > 0.0 { 1.0 } else { 0.0 };
    let neg = if v < 0.0 { 1.0 } else { 0.0 };
    pos - neg
}

/// One-dimensional region distance for circular offset `delta` and half-width `w`.
#[inline]
pub fn dist_1d(delta: f64, w: f64) -> f64 {
    let inner = delta / w;
    let outer = (delta - w) / (w * w) + 1.0;
    if delta <= w {
        inner
    } else {
        outer
    }
}

/// Returns `(d dist / d delta, d dist / d w)`. The inner branch owns `delta == w`.
#[inline]
pub fn dist_1d_partials(delta: f64, w: f64) -> (f64, f64) {
    let inv = 1.0 / w;
    let inv2 = inv * inv;
    let inner = (inv, -delta * inv2);
    let outer = (inv2, -inv2 - 2.0 * (delta - w) * inv2 * inv);
    if delta <= w {
        inner
    } else {
        outer
    }
}

fn check_dims(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::invalid(format!("dimension mismatch: {a} vs {b}")));
    }
    Ok(())
}

/// Maps raw coordinates into the fundamental domain `[0, 1)`.
pub fn wrap(x: &[f64]) -> Result<TorusVector> {
    if let Some((i, v)) = x.iter().enumerate().find(|(_, v)| !v.is_finite()) {
        return Err(Error::invalid(format!("coordinate {i} is not finite ({v})")));
    }
    Ok(TorusVector(x.iter().map(|&v| wrap_scalar(v)).collect()))
}

/// Shortest circular distance per dimension, each value in `[0, 0.5]`.
pub fn torus_delta(x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    check_dims(x.len(), y.len())?;
    Ok(x.iter()
        .zip(y)
        .map(|(&a, &b)| offset_1d(a, b, true).0)
        .collect())
}

pub fn contains(r: &CyclicOrthotope, x: &[f64]) -> Result<bool> {
    check_dims(r.dim(), x.len())?;
    Ok(x.iter()
        .zip(r.center.iter())
        .zip(&r.width)
        .all(|((&xi, &ci), &wi)| offset_1d(xi, ci, true).0 <= wi))
}

/// Per-dimension distance from `x` to region `r`.
pub fn region_distance(x: &[f64], r: &CyclicOrthotope) -> Result<Vec<f64>> {
    check_dims(r.dim(), x.len())?;
    Ok(x.iter()
        .zip(r.center.iter())
        .zip(&r.width)
        .map(|((&xi, &ci), &wi)| dist_1d(offset_1d(xi, ci, true).0, wi))
        .collect())
}

pub fn region_distance_grad(x: &[f64], r: &CyclicOrthotope) -> Result<RegionDistanceGradient> {
    check_dims(r.dim(), x.len())?;
    let d = x.len();
    let mut grad = RegionDistanceGradient {
        d_point: Vec::with_capacity(d),
        d_center: Vec::with_capacity(d),
        d_width: Vec::with_capacity(d),
    };
    for ((&xi, &ci), &wi) in x.iter().zip(r.center.iter()).zip(&r.width) {
        let (delta, sign) = offset_1d(xi, ci, true);
        let (d_delta, d_w) = dist_1d_partials(delta, wi);
        let d_x = sign * d_delta;
        grad.d_point.push(d_x);
        grad.d_center.push(-d_x);
        grad.d_width.push(d_w);
    }
    Ok(grad)
}

pub fn aggregate_norm(v: &[f64], kind: NormKind) -> Result<f64> {
    if v.is_empty() {
        return Err(Error::invalid("cannot take the norm of an empty vector"));
    }
    Ok(match kind {
        NormKind::L1 => v.iter().map(|x| x.abs()).sum(),
        NormKind::L2 => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
        NormKind::EL2 => v.iter().map(|x| x * x).sum(),
    })
}

/// True when the two regions share at least one point.
pub fn region_overlap(a: &CyclicOrthotope, b: &CyclicOrthotope) -> Result<bool> {
    check_dims(a.dim(), b.dim())?;
    Ok(overlap_slack(a, b).all(|s| s >= 0.0))
}

/// Per-dimension `w_a + w_b - delta`; nonnegative in every dimension iff the
/// regions intersect.
pub(crate) fn overlap_slack<'a>(
    a: &'a CyclicOrthotope,
    b: &'a CyclicOrthotope,
) -> impl Iterator<Item = f64> + 'a {
    (0..a.dim()).map(move |i| {
        let delta = offset_wrapped(a.center[i], b.center[i]).0;
        a.width[i] + b.width[i] - delta
    })
}

/// True when every point of `inner` is covered by `outer`.
pub fn region_subsumes(outer: &CyclicOrthotope, inner: &CyclicOrthotope) -> Result<bool> {
    check_dims(outer.dim(), inner.dim())?;
    Ok(subsume_slack(outer, inner).all(|s| s >= 0.0))
}

/// Per-dimension containment slack, nonnegative iff the inner arc lies in the
/// outer arc. A half-width of 0.5 covers the whole circle.
pub(crate) fn subsume_slack<'a>(
    outer: &'a CyclicOrthotope,
    inner: &'a CyclicOrthotope,
) -> impl Iterator<Item = f64> + 'a {
    (0..outer.dim()).map(move |i| {
        arc_subsume_slack(
            outer.center[i],
            outer.width[i],
            inner.center[i],
            inner.width[i],
        )
    })
}

pub(crate) fn arc_subsume_slack(outer_c: f64, outer_w: f64, inner_c: f64, inner_w: f64) -> f64 {
    if outer_w >= MAX_DELTA {
        return outer_w - inner_w;
    }
    let delta = offset_wrapped(wrap_scalar(outer_c), wrap_scalar(inner_c)).0;
    outer_w - (delta + inner_w)
}

/// An arc on the unit circle, stored as center and half-width.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Arc {
    pub center: f64,
    pub half: f64,
}

/// Intersection of two closed arcs. Two long arcs can meet in two pieces.
pub(crate) fn arc_intersection(a: Arc, b: Arc) -> Vec<Arc> {
    if a.half >= MAX_DELTA {
        return vec![b];
    }
    if b.half >= MAX_DELTA {
        return vec![a];
    }
    let lo = a.center - a.half;
    let hi = a.center + a.half;
    let (delta, sign) = offset_wrapped(wrap_scalar(b.center), wrap_scalar(a.center));
    let b_near = a.center + sign * delta;
    let mut pieces = Vec::new();
    for shift in [-1.0, 0.0, 1.0] {
        let b_lo = b_near + shift - b.half;
        let b_hi = b_near + shift + b.half;
        let s = lo.max(b_lo);
        let e = hi.min(b_hi);
        if s <= e {
            pieces.push(Arc {
                center: wrap_scalar(0.5 * (s + e)),
                half: 0.5 * (e - s),
            });
        }
    }
    pieces
}
