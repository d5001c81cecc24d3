//! Exact geometric kernels for staircase OU sets.
//!
//! A closed OU set in the tail quadrant `D0 = [x0, inf) x [y0, inf)` is the
//! hypograph of a non-increasing left-continuous step function. The
//! "staircase" parametrization stores step widths `z` (left to right) and
//! height increments `w`, so that step `i` (1-indexed from the left) has
//! height `y0 + w[1] + ... + w[k+1-i]`. Everything downstream — mixture
//! columns, constraint coefficients, the grid oracle — reduces to a handful
//! of closed-form areas computed here: total area, axis intercepts,
//! rectangle overlaps, and the overlap with a rare-event region
//! `S = { y >= g(x) }` for clamped piecewise-affine `g`.
//!
//! All values are immutable after construction and all operations are pure,
//! so everything in this module is safe to share across threads.

mod variational;

pub use variational::{dominating_staircase, three_step_subproblem};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::jsonio;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("invalid staircase: {0}")]
    InvalidStaircase(String),
    #[error("invalid rectangle: {0}")]
    InvalidRectangle(String),
    #[error("invalid boundary: {0}")]
    InvalidBoundary(String),
    #[error("invalid step function: {0}")]
    InvalidStepFunction(String),
    #[error("x = {x} outside staircase domain [{lo}, {hi}]")]
    OutOfDomain { x: f64, lo: f64, hi: f64 },
    #[error("infeasible mass {mass} for bounds [{lo}, {hi}] on interval of length {len}")]
    InfeasibleMass { mass: f64, lo: f64, hi: f64, len: f64 },
    #[error("degenerate step function: zero area")]
    ZeroArea,
}

/// Staircase OU set `R_{z,w}` anchored at the mode `(x0, y0)`.
///
/// Step widths `z[i] > 0` run left to right; `w` are height increments with
/// `w[0] > 0`, `w[i] >= 0`. Cached breakpoints and step heights make the
/// area and overlap operations O(steps).
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(try_from = "AtomRepr", into = "AtomRepr")]
pub struct StaircaseAtom {
    x0: f64,
    y0: f64,
    z: Vec<f64>,
    w: Vec<f64>,
    // breakpoints[i] = x0 + z[0] + .. + z[i]; heights[i] is the step value on
    // (breakpoints[i-1], breakpoints[i]].
    breakpoints: Vec<f64>,
    heights: Vec<f64>,
    area: f64,
}

#[derive(Serialize, Deserialize)]
struct AtomRepr {
    x0: f64,
    y0: f64,
    z: Vec<f64>,
    w: Vec<f64>,
}

impl TryFrom<AtomRepr> for StaircaseAtom {
    type Error = GeometryError;
    fn try_from(r: AtomRepr) -> Result<Self, GeometryError> {
        StaircaseAtom::new(r.x0, r.y0, r.z, r.w)
    }
}

impl From<StaircaseAtom> for AtomRepr {
    fn from(a: StaircaseAtom) -> AtomRepr {
        AtomRepr {
            x0: a.x0,
            y0: a.y0,
            z: a.z,
            w: a.w,
        }
    }
}

impl StaircaseAtom {
    pub fn new(x0: f64, y0: f64, z: Vec<f64>, w: Vec<f64>) -> Result<Self, GeometryError> {
        if !x0.is_finite() || !y0.is_finite() {
            return Err(GeometryError::InvalidStaircase("non-finite mode".into()));
        }
        if z.is_empty() || z.len() != w.len() {
            return Err(GeometryError::InvalidStaircase(format!(
                "need matching non-empty z/w, got {}/{}",
                z.len(),
                w.len()
            )));
        }
        if z.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(GeometryError::InvalidStaircase(
                "all step widths must be positive and finite".into(),
            ));
        }
        if !(w[0] > 0.0) || w.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(GeometryError::InvalidStaircase(
                "w[0] must be positive and all w nonnegative".into(),
            ));
        }
        let k = z.len();
        let mut breakpoints = Vec::with_capacity(k);
        let mut acc = x0;
        for &zi in &z {
            acc += zi;
            breakpoints.push(acc);
        }
        // heights[i] = y0 + w[0] + ... + w[k-1-i]
        let mut wsum = vec![0.0; k];
        let mut s = 0.0;
        for (j, &wj) in w.iter().enumerate() {
            s += wj;
            wsum[j] = s;
        }
        let heights: Vec<f64> = (0..k).map(|i| y0 + wsum[k - 1 - i]).collect();
        let area: f64 = (0..k).map(|i| z[i] * (heights[i] - y0)).sum();
        if !area.is_finite() || !(area > 0.0) {
            return Err(GeometryError::InvalidStaircase(format!(
                "area must be positive and finite, got {area}"
            )));
        }
        Ok(Self {
            x0,
            y0,
            z,
            w,
            breakpoints,
            heights,
            area,
        })
    }

    /// Rectangle `[x0, x0+width] x [y0, y0+height]` as a one-step staircase.
    pub fn rectangle(x0: f64, y0: f64, width: f64, height: f64) -> Result<Self, GeometryError> {
        Self::new(x0, y0, vec![width], vec![height])
    }

    pub fn x0(&self) -> f64 {
        self.x0
    }

    pub fn y0(&self) -> f64 {
        self.y0
    }

    pub fn z(&self) -> &[f64] {
        &self.z
    }

    pub fn w(&self) -> &[f64] {
        &self.w
    }

    pub fn steps(&self) -> usize {
        self.z.len()
    }

    /// Right edge of the domain, `x0 + sum(z)`.
    pub fn x_end(&self) -> f64 {
        *self.breakpoints.last().unwrap()
    }

    /// Lebesgue area of the set above `y0`.
    pub fn area(&self) -> f64 {
        self.area
    }

    /// `(R^X, R^Y)` = (sum of widths, sum of height increments).
    pub fn intercepts(&self) -> (f64, f64) {
        (self.x_end() - self.x0, self.heights[0] - self.y0)
    }

    /// Step height at `x` under the left-continuous convention: a point
    /// exactly at a breakpoint belongs to the step on its left, and `x0`
    /// takes the first step's height.
    pub fn height(&self, x: f64) -> Result<f64, GeometryError> {
        if !(x >= self.x0) || !(x <= self.x_end()) {
            return Err(GeometryError::OutOfDomain {
                x,
                lo: self.x0,
                hi: self.x_end(),
            });
        }
        let i = self.breakpoints.partition_point(|&b| b < x);
        Ok(self.heights[i.min(self.heights.len() - 1)])
    }

    /// `lambda(rect ∩ R)`, handling infinite rectangle edges exactly.
    pub fn rect_overlap_area(&self, rect: &AxisRectangle) -> f64 {
        let mut total = 0.0;
        let mut left = self.x0;
        for (i, &right) in self.breakpoints.iter().enumerate() {
            let lo = left.max(rect.x1);
            let hi = if rect.x2.is_infinite() {
                right
            } else {
                right.min(rect.x2)
            };
            if hi > lo {
                let h = self.heights[i];
                let y_hi = if rect.y2.is_infinite() { h } else { h.min(rect.y2) };
                // The step occupies [y0, h]; clamp the rectangle's lower
                // edge at the floor so cells above it are not overcounted.
                let y_lo = h.min(rect.y1.max(self.y0));
                if y_hi > y_lo {
                    total += (hi - lo) * (y_hi - y_lo);
                }
            }
            left = right;
        }
        total
    }

    /// `lambda(S ∩ R)` for the rare-event region `S = { y >= g(x) }`,
    /// evaluated in closed form per affine boundary piece.
    pub fn rare_event_overlap_area(&self, boundary: &RareEventBoundary) -> f64 {
        let mut total = 0.0;
        let mut left = self.x0;
        for (i, &right) in self.breakpoints.iter().enumerate() {
            total += boundary.clipped_integral(left, right, self.heights[i]);
            left = right;
        }
        total
    }

    /// The upper boundary as an explicit step function.
    pub fn to_step_function(&self) -> StepFunction {
        let mut bps = Vec::with_capacity(self.z.len() + 1);
        bps.push(self.x0);
        bps.extend_from_slice(&self.breakpoints);
        StepFunction::new(bps, self.heights.clone(), self.y0).expect("atom is a valid step function")
    }

    pub(crate) fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub(crate) fn step_heights(&self) -> &[f64] {
        &self.heights
    }

    /// Lexicographic comparison on `(x0, y0, z, w)`, used by the pricing
    /// tie-break so concurrent searches are schedule-independent.
    pub fn lex_cmp(&self, other: &Self) -> std::cmp::Ordering {
        let key = |a: &Self| {
            (
                a.x0,
                a.y0,
                a.z.clone(),
                a.w.clone(),
            )
        };
        key(self).partial_cmp(&key(other)).unwrap_or(std::cmp::Ordering::Equal)
    }
}

/// Axis-aligned rectangle with lower corners at or above the mode; the
/// upper edges may be `+inf`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct AxisRectangle {
    #[serde(with = "jsonio::ext")]
    pub x1: f64,
    #[serde(with = "jsonio::ext")]
    pub x2: f64,
    #[serde(with = "jsonio::ext")]
    pub y1: f64,
    #[serde(with = "jsonio::ext")]
    pub y2: f64,
}

impl AxisRectangle {
    pub fn new(x1: f64, x2: f64, y1: f64, y2: f64) -> Result<Self, GeometryError> {
        if !(x1 <= x2) || !(y1 <= y2) || !x1.is_finite() || !y1.is_finite() {
            return Err(GeometryError::InvalidRectangle(format!(
                "need finite lower corners and ordered edges, got [{x1},{x2}]x[{y1},{y2}]"
            )));
        }
        Ok(Self { x1, x2, y1, y2 })
    }

    pub fn area(&self) -> f64 {
        (self.x2 - self.x1) * (self.y2 - self.y1)
    }
}

/// One affine piece of the rare-event boundary, in effect from `x_start`
/// until the next piece. An infinite `intercept` marks an x-range carrying
/// no rare-event mass at all (`g = +inf` there).
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct BoundaryPiece {
    pub x_start: f64,
    pub slope: f64,
    #[serde(with = "jsonio::ext")]
    pub intercept: f64,
}

/// The target set `S = { (x, y) in D0 : y >= g(x) }` where `g` is
/// piecewise affine clamped below at `y0`: `g(x) = max(y0, a_p x + b_p)`
/// on piece `p`. The last piece extends to `+inf`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RareEventBoundary {
    x0: f64,
    y0: f64,
    pieces: Vec<BoundaryPiece>,
}

impl RareEventBoundary {
    pub fn new(x0: f64, y0: f64, pieces: Vec<BoundaryPiece>) -> Result<Self, GeometryError> {
        if pieces.is_empty() {
            return Err(GeometryError::InvalidBoundary("no pieces".into()));
        }
        if pieces[0].x_start != x0 {
            return Err(GeometryError::InvalidBoundary(format!(
                "first piece must start at the mode x0 = {x0}, got {}",
                pieces[0].x_start
            )));
        }
        if pieces.windows(2).any(|p| !(p[0].x_start < p[1].x_start)) {
            return Err(GeometryError::InvalidBoundary(
                "piece breakpoints must increase strictly".into(),
            ));
        }
        if pieces
            .iter()
            .any(|p| !p.x_start.is_finite() || !p.slope.is_finite() || p.intercept.is_nan())
        {
            return Err(GeometryError::InvalidBoundary("non-finite piece".into()));
        }
        Ok(Self { x0, y0, pieces })
    }

    /// Boundary with pieces as given, clipped to the domain `[x0, inf)`.
    /// Any gap between `x0` and the first supplied piece carries `g = +inf`
    /// (that x-range is not part of the rare-event set).
    pub fn from_pieces(x0: f64, y0: f64, mut pieces: Vec<BoundaryPiece>) -> Result<Self, GeometryError> {
        pieces.sort_by(|a, b| a.x_start.total_cmp(&b.x_start));
        // Keep only the piece in effect at x0 and everything after.
        let mut kept: Vec<BoundaryPiece> = Vec::new();
        for p in pieces {
            if p.x_start <= x0 {
                kept.clear();
                kept.push(BoundaryPiece { x_start: x0, ..p });
            } else {
                kept.push(p);
            }
        }
        if kept.is_empty() || kept[0].x_start > x0 {
            kept.insert(
                0,
                BoundaryPiece {
                    x_start: x0,
                    slope: 0.0,
                    intercept: f64::INFINITY,
                },
            );
        }
        Self::new(x0, y0, kept)
    }

    /// `g(x) = max(y0, slope * x + intercept)` everywhere.
    pub fn affine(x0: f64, y0: f64, slope: f64, intercept: f64) -> Result<Self, GeometryError> {
        Self::new(
            x0,
            y0,
            vec![BoundaryPiece {
                x_start: x0,
                slope,
                intercept,
            }],
        )
    }

    /// `g = y0`: the whole quadrant is the rare-event set.
    pub fn floor(x0: f64, y0: f64) -> Self {
        Self::affine(x0, y0, 0.0, f64::NEG_INFINITY).unwrap()
    }

    /// `g = +inf`: the rare-event set is empty.
    pub fn empty(x0: f64, y0: f64) -> Self {
        Self::affine(x0, y0, 0.0, f64::INFINITY).unwrap()
    }

    pub fn x0(&self) -> f64 {
        self.x0
    }

    pub fn y0(&self) -> f64 {
        self.y0
    }

    pub fn pieces(&self) -> &[BoundaryPiece] {
        &self.pieces
    }

    /// Effective boundary value at `x >= x0`.
    pub fn value(&self, x: f64) -> f64 {
        let idx = self.pieces.partition_point(|p| p.x_start <= x);
        let p = &self.pieces[idx.saturating_sub(1)];
        if p.intercept.is_infinite() {
            f64::INFINITY
        } else {
            self.y0.max(p.slope * x + p.intercept)
        }
    }

    /// Membership test for `S` (points below `y0` or left of `x0` excluded).
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x0 && y >= self.y0 && y >= self.value(x)
    }

    /// `∫_lo^hi (top - g(x))_+ dx` in closed form.
    pub fn clipped_integral(&self, lo: f64, hi: f64, top: f64) -> f64 {
        if !(hi > lo) || top <= self.y0 {
            return 0.0;
        }
        let mut total = 0.0;
        for (i, p) in self.pieces.iter().enumerate() {
            let seg_lo = p.x_start.max(lo);
            let seg_hi = match self.pieces.get(i + 1) {
                Some(q) => q.x_start.min(hi),
                None => hi,
            };
            if seg_hi <= seg_lo || p.intercept == f64::INFINITY {
                continue;
            }
            total += clipped_affine_integral(seg_lo, seg_hi, top, self.y0, p.slope, p.intercept);
        }
        total
    }
}

/// `∫_lo^hi clamp(top - (slope*x + intercept), 0, top - floor) dx`,
/// i.e. the area between a flat level `top` and the clamped affine
/// boundary `max(floor, slope*x + intercept)` over `[lo, hi]`.
pub(crate) fn clipped_affine_integral(
    lo: f64,
    hi: f64,
    top: f64,
    floor: f64,
    slope: f64,
    intercept: f64,
) -> f64 {
    let cap = top - floor;
    if !(hi > lo) || cap <= 0.0 {
        return 0.0;
    }
    let f = |x: f64| (top - (slope * x + intercept)).clamp(0.0, cap);
    if slope == 0.0 {
        return f(lo) * (hi - lo);
    }
    // The clamped integrand is piecewise affine with kinks where the affine
    // part crosses 0 and cap; trapezoid on each sub-segment is exact.
    let mut knots = [lo, hi, (top - intercept) / slope, (floor - intercept) / slope];
    knots.sort_by(f64::total_cmp);
    let mut total = 0.0;
    for w in knots.windows(2) {
        let (a, b) = (w[0].max(lo), w[1].min(hi));
        if b > a {
            total += 0.5 * (f(a) + f(b)) * (b - a);
        }
    }
    total
}

/// Non-increasing left-continuous step function on `[start, end]`, with an
/// explicit floor so it can model the upper boundary of an OU set.
/// `breakpoints` has one more entry than `values`; value `values[i]` holds
/// on `(breakpoints[i], breakpoints[i+1]]`, and the value at the left
/// endpoint equals `values[0]`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepFunction {
    breakpoints: Vec<f64>,
    values: Vec<f64>,
    floor: f64,
}

impl StepFunction {
    pub fn new(breakpoints: Vec<f64>, values: Vec<f64>, floor: f64) -> Result<Self, GeometryError> {
        if breakpoints.len() != values.len() + 1 || values.is_empty() {
            return Err(GeometryError::InvalidStepFunction(format!(
                "need |breakpoints| = |values| + 1 >= 2, got {}/{}",
                breakpoints.len(),
                values.len()
            )));
        }
        if breakpoints.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(GeometryError::InvalidStepFunction(
                "breakpoints must increase strictly".into(),
            ));
        }
        if values.windows(2).any(|w| w[0] < w[1]) {
            return Err(GeometryError::InvalidStepFunction(
                "values must be non-increasing".into(),
            ));
        }
        if values.iter().any(|&v| v < floor) {
            return Err(GeometryError::InvalidStepFunction(
                "values must stay at or above the floor".into(),
            ));
        }
        Ok(Self {
            breakpoints,
            values,
            floor,
        })
    }

    pub fn start(&self) -> f64 {
        self.breakpoints[0]
    }

    pub fn end(&self) -> f64 {
        *self.breakpoints.last().unwrap()
    }

    pub fn floor(&self) -> f64 {
        self.floor
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn steps(&self) -> usize {
        self.values.len()
    }

    /// Left-continuous evaluation.
    pub fn value_at(&self, x: f64) -> Result<f64, GeometryError> {
        if !(x >= self.start()) || !(x <= self.end()) {
            return Err(GeometryError::OutOfDomain {
                x,
                lo: self.start(),
                hi: self.end(),
            });
        }
        let i = self.breakpoints[1..].partition_point(|&b| b < x);
        Ok(self.values[i.min(self.values.len() - 1)])
    }

    /// Right limit `h(x+)`, defined for `x` in `[start, end)`.
    pub fn value_right(&self, x: f64) -> Result<f64, GeometryError> {
        if !(x >= self.start()) || !(x < self.end()) {
            return Err(GeometryError::OutOfDomain {
                x,
                lo: self.start(),
                hi: self.end(),
            });
        }
        let i = self.breakpoints[1..].partition_point(|&b| b <= x);
        Ok(self.values[i])
    }

    /// Generalized inverse `sup { x : h(x) >= y }`; `None` when no point
    /// reaches `y`.
    pub fn inverse(&self, y: f64) -> Option<f64> {
        if y > self.values[0] {
            return None;
        }
        let p = self.values.partition_point(|&v| v >= y);
        Some(self.breakpoints[p])
    }

    /// `∫_a^b h(x) dx` for `[a, b]` inside the domain.
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        let mut total = 0.0;
        for i in 0..self.values.len() {
            let lo = self.breakpoints[i].max(a);
            let hi = self.breakpoints[i + 1].min(b);
            if hi > lo {
                total += self.values[i] * (hi - lo);
            }
        }
        total
    }

    /// Area of the hypograph above the floor.
    pub fn area_above_floor(&self) -> f64 {
        self.integral(self.start(), self.end()) - self.floor * (self.end() - self.start())
    }

    /// Merge equal adjacent steps (exact equality).
    pub fn canonicalized(&self) -> StepFunction {
        let mut bps = vec![self.breakpoints[0]];
        let mut vals: Vec<f64> = Vec::new();
        for i in 0..self.values.len() {
            if vals.last() == Some(&self.values[i]) {
                *bps.last_mut().unwrap() = self.breakpoints[i + 1];
            } else {
                vals.push(self.values[i]);
                bps.push(self.breakpoints[i + 1]);
            }
        }
        StepFunction {
            breakpoints: bps,
            values: vals,
            floor: self.floor,
        }
    }

    /// Convert to a staircase atom anchored at `(start, floor)`. Trailing
    /// steps at the floor are trimmed (they carry no area); fails if the
    /// whole function sits at the floor.
    pub fn to_atom(&self) -> Result<StaircaseAtom, GeometryError> {
        let canon = self.canonicalized();
        let mut last = canon.values.len();
        while last > 0 && canon.values[last - 1] <= canon.floor {
            last -= 1;
        }
        if last == 0 {
            return Err(GeometryError::ZeroArea);
        }
        let values = &canon.values[..last];
        let k = values.len();
        let z: Vec<f64> = (0..k)
            .map(|i| canon.breakpoints[i + 1] - canon.breakpoints[i])
            .collect();
        // w[k-1-i] recovers height differences; w[0] is the last step's
        // elevation above the floor.
        let mut w = vec![0.0; k];
        w[0] = values[k - 1] - canon.floor;
        for i in 0..k - 1 {
            w[k - 1 - i] = values[i] - values[i + 1];
        }
        StaircaseAtom::new(canon.breakpoints[0], canon.floor, z, w)
    }
}

#[cfg(test)]
mod tests;
