//! Exact areas of the decomposition regions and piecewise-linear
//! min-integrals, with bracketed tail error for the regions that reach the
//! unrepresentable part of a curve near s = 0.
//!
//! Everything that can be exact is exact: the two triangle families have
//! closed forms, and the min of a curve segment and a line integrates
//! analytically once split at their crossing. Only the C-region tail below
//! `tail_s` is bracketed, so all approximation error funnels through one
//! audited mechanism.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::seminal::{CurveRealization, CurveVertex, SeminalCurve};

/// A tangent line of one curve, `y = Y + σx` in its own orientation.
/// Seen from the opposite curve's mirrored coordinate `t = -x` it reads
/// `Y - σt`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct TangentLine {
    pub intercept: f64,
    pub slope: f64,
}

impl TangentLine {
    pub fn from_vertex(v: &CurveVertex) -> Self {
        Self {
            intercept: v.intercept,
            slope: v.slope,
        }
    }

    /// Height over the opposite quadrant at mirrored abscissa `t`.
    pub fn opposite_height(&self, t: f64) -> f64 {
        self.intercept - self.slope * t
    }

    /// Mirrored abscissa where the line meets the x-axis.
    pub fn positive_root(&self) -> f64 {
        self.intercept / self.slope
    }
}

/// Interval `[lower, upper]` enclosing a nonnegative area.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct AreaBracket {
    pub lower: f64,
    pub upper: f64,
}

impl AreaBracket {
    pub const ZERO: Self = Self {
        lower: 0.0,
        upper: 0.0,
    };

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }

    pub fn add(self, other: Self) -> Self {
        Self {
            lower: self.lower + other.lower,
            upper: self.upper + other.upper,
        }
    }

    /// Scale by a nonnegative factor.
    pub fn scale(self, k: f64) -> Self {
        debug_assert!(k >= 0.0);
        Self {
            lower: self.lower * k,
            upper: self.upper * k,
        }
    }

    /// Product of two nonnegative brackets.
    pub fn product(self, other: Self) -> Self {
        debug_assert!(self.lower >= 0.0 && other.lower >= 0.0);
        Self {
            lower: self.lower * other.lower,
            upper: self.upper * other.upper,
        }
    }
}

/// Area of the triangle cut off between consecutive tangents `ℓₙ`, `ℓₙ₊₁`
/// and the x = 1 axis: `½(1-Sₙ₊₁)²(σₙ₊₁-σₙ)`.
pub fn delta_area(v: &CurveVertex, next: &CurveVertex) -> f64 {
    debug_assert_eq!(next.index, v.index + 1);
    let base = 1.0 - next.s;
    0.5 * base * base * (next.slope - v.slope)
}

/// Area of the triangle a tangent cuts off against both axes:
/// `½Y²/σ`, the triangle with vertices (0,0), (0,Y) and (-Y/σ, 0).
pub fn delta_tilde_area(v: &CurveVertex) -> f64 {
    0.5 * v.intercept * v.intercept / v.slope
}

/// One linear piece of `t ↦ min(Γ(t), Y - σt)`: the interval `[lo, hi]`
/// with the endpoint values of the binding branch.
#[derive(Clone, Copy, Debug)]
pub struct MinPiece {
    pub lo: f64,
    pub hi: f64,
    pub value_lo: f64,
    pub value_hi: f64,
}

impl MinPiece {
    pub fn area(&self) -> f64 {
        0.5 * (self.value_lo + self.value_hi) * (self.hi - self.lo)
    }
}

/// The linear pieces of `min(Γ(t), Y - σt)` on `[a, b]`: each curve segment
/// is split at its unique crossing with the line.
pub fn min_profile(
    curve: &SeminalCurve,
    line: &TangentLine,
    a: f64,
    b: f64,
) -> Result<Vec<MinPiece>> {
    let tail = curve.tail_s();
    if !(a <= b) || !(a >= tail) || !(b <= 1.0) {
        return Err(Error::OutOfRange {
            s: if a < tail { a } else { b },
            tail_s: tail,
        });
    }
    let vertices = curve.vertices();
    let mut pieces = Vec::new();
    if a == b || vertices.len() == 1 {
        // A single-vertex curve only admits the empty interval [1, 1].
        return Ok(pieces);
    }
    let mut push = |y0: f64, s0: f64, lo: f64, hi: f64| {
        if lo < hi {
            pieces.push(MinPiece {
                lo,
                hi,
                value_lo: y0 + s0 * lo,
                value_hi: y0 + s0 * hi,
            });
        }
    };
    for w in vertices.windows(2) {
        let (v, next) = (&w[0], &w[1]);
        let lo = a.max(next.s);
        let hi = b.min(v.s);
        if lo >= hi {
            continue;
        }
        // g(t) = Y_seg + σ_seg·t rises, h(t) = Y - σt falls; g - h is
        // strictly increasing, so g is the min left of the crossing.
        let cross = (line.intercept - v.intercept) / (v.slope + line.slope);
        if cross <= lo {
            push(line.intercept, -line.slope, lo, hi);
        } else if cross >= hi {
            push(v.intercept, v.slope, lo, hi);
        } else {
            push(v.intercept, v.slope, lo, cross);
            push(line.intercept, -line.slope, cross, hi);
        }
    }
    Ok(pieces)
}

/// Exact `∫ₐᵇ min(Γ(t), Y - σt) dt` for `[a, b]` inside the represented
/// range of the curve: the trapezoid sum of [`min_profile`].
pub fn integral_min_linear(
    curve: &SeminalCurve,
    line: &TangentLine,
    a: f64,
    b: f64,
) -> Result<f64> {
    Ok(min_profile(curve, line, a, b)?.iter().map(MinPiece::area).sum())
}

/// Bracket on `∫₀¹ min(Γ₋(-t), (Y - σt)₊) dt`: the area below both the
/// opposite curve and the tangent line, i.e. one C-region.
///
/// The opposite curve is extended until the unrepresented tail
/// `tail_s · min(Γ(tail_s), Y)` drops below `tol`, the represented part then
/// integrates exactly and the tail stays bracketed by `[0, that bound]`, so
/// `upper - lower ≤ tol` on return.
pub fn c_region_area(
    line: &TangentLine,
    opposite: &mut CurveRealization,
    tol: f64,
) -> Result<AreaBracket> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "C-region tolerance must be positive, got {tol}"
        )));
    }
    let y = line.intercept;
    opposite.extend_until(|v| v.s * v.height().min(y) <= tol)?;
    let cap = line.positive_root().min(1.0);
    let tail = opposite.curve.tail_s();
    let exact = if cap > tail {
        integral_min_linear(&opposite.curve, line, tail, cap)?
    } else {
        0.0
    };
    let tail_bound = tail * opposite.curve.tail_height().min(y);
    Ok(AreaBracket {
        lower: exact,
        upper: exact + tail_bound,
    })
}
