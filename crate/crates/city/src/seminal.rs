//! Seminal curves: simulation of the concave lower envelope Γ on (0, 1]
//! via its reverse-time dynamical system, plus evaluation, integration and
//! inversion of the resulting piecewise-linear curve.
//!
//! A curve is stored as the ordered list of states `(Sₙ, Yₙ, σₙ)` of the
//! change-of-slope chain: `Sₙ` are the abscissas where the slope changes
//! (strictly decreasing from `S₀ = 1`), `σₙ = Γ'(Sₙ)` the tangent slopes
//! (strictly increasing) and `Yₙ = Γ(Sₙ) - Sₙσₙ` the tangent y-intercepts.
//! One reverse step draws a standard Exponential `E` and a Uniform `U` and
//! applies
//!
//! ```text
//! 1/Sₙ₊₁ = 1/Sₙ + (4/Yₙ²)·E        σₙ₊₁ = σₙ + (Yₙ/Sₙ₊₁)·√U
//! ```
//!
//! which forces the intercept recursion `Yₙ₊₁ = Yₙ·(1-√U)`; the intercepts
//! form a multiplicative perpetuity and decay geometrically, so every stop
//! rule used by the estimator is met after a handful of steps.
//!
//! The left curve has the same law as the right one by mirror symmetry and
//! is stored in mirrored coordinates; [`Orientation`] records which half it
//! came from.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Default cap on extension steps; exceeding it signals a bug or a
/// pathological tolerance rather than bad luck.
pub const DEFAULT_STEP_CAP: usize = 1_000_000;

/// One state of the reverse-time chain.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveVertex {
    /// Step index, starting at 0.
    #[serde(rename = "n")]
    pub index: usize,
    /// Change-of-slope abscissa `Sₙ ∈ (0, 1]`.
    #[serde(rename = "S")]
    pub s: f64,
    /// Tangent y-intercept `Yₙ > 0`.
    #[serde(rename = "Y")]
    pub intercept: f64,
    /// Tangent slope `σₙ > 0`.
    #[serde(rename = "sigma")]
    pub slope: f64,
}

impl CurveVertex {
    /// Curve height at this vertex, `Γ(Sₙ) = Yₙ + Sₙσₙ`.
    pub fn height(&self) -> f64 {
        self.intercept + self.s * self.slope
    }
}

/// Which half-plane quadrant the curve describes. A left curve is stored in
/// mirrored coordinates (`t = -x`), so both orientations expose the same
/// increasing concave function on (0, 1].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Orientation {
    Right,
    Left,
}

/// Initial state built from an Exponential draw `e` and a Uniform draw `v`:
/// `Γ(1) = 2√e` (Rayleigh(√2) by inverse transform) and a slope drawn
/// uniformly on `[0, Γ(1)]`.
pub fn initial_state_from_draws(e: f64, v: f64) -> CurveVertex {
    let height = 2.0 * e.sqrt();
    let slope = v * height;
    CurveVertex {
        index: 0,
        s: 1.0,
        intercept: height - slope,
        slope,
    }
}

/// Draw the state at `S₀ = 1`. Resamples the measure-zero degenerate draws
/// (`Y = 0` or `σ = 0`) so downstream code never branches on them.
pub fn draw_initial_state(stream: &mut RngStream) -> CurveVertex {
    loop {
        let v = initial_state_from_draws(stream.exponential1(), stream.uniform01());
        if v.intercept > 0.0 && v.slope > 0.0 {
            return v;
        }
    }
}

/// One reverse step driven by explicit draws `(e, u)`.
///
/// The new intercept is generated directly as `Yₙ(1-√u)`, keeping the
/// perpetuity identity exact as generated; the geometric identity
/// `Yₙ₊₁ = Γ(Sₙ₊₁) - Sₙ₊₁σₙ₊₁` then holds to rounding and is what the
/// validation suite checks.
pub fn step_reverse_from_draws(v: &CurveVertex, e: f64, u: f64) -> CurveVertex {
    let y = v.intercept;
    // 1/S' = 1/S + 4E/Y², rearranged so no tiny S is inverted and the
    // E = 0 identity case stays bit-exact.
    let s_next = v.s / (1.0 + 4.0 * v.s * e / (y * y));
    let sqrt_u = u.sqrt();
    CurveVertex {
        index: v.index + 1,
        s: s_next,
        intercept: y * (1.0 - sqrt_u),
        slope: v.slope + (y / s_next) * sqrt_u,
    }
}

/// One reverse step consuming the stream.
pub fn step_reverse(v: &CurveVertex, stream: &mut RngStream) -> CurveVertex {
    step_reverse_from_draws(v, stream.exponential1(), stream.uniform01())
}

/// Finite initial segment of a seminal curve: vertices `n = 0..=N`, valid on
/// `[tail_s, 1]` with tail bounds for the unrepresented part `(0, tail_s)`.
#[derive(Clone, Debug, Serialize)]
pub struct SeminalCurve {
    orientation: Orientation,
    vertices: Vec<CurveVertex>,
}

impl SeminalCurve {
    /// Start a fresh curve with a drawn initial state.
    pub fn draw(orientation: Orientation, stream: &mut RngStream) -> Self {
        Self {
            orientation,
            vertices: vec![draw_initial_state(stream)],
        }
    }

    /// Build a curve from explicit vertices, validating the invariants:
    /// indices consecutive from 0, `S₀ = 1`, `S` strictly decreasing and
    /// positive, `Y` positive, `σ` positive and strictly increasing, and
    /// adjacent tangents agreeing at the junctions to 1e-12 relative.
    pub fn from_vertices(orientation: Orientation, vertices: Vec<CurveVertex>) -> Result<Self> {
        if vertices.is_empty() {
            return Err(Error::InvalidCurve("no vertices".into()));
        }
        if vertices[0].s != 1.0 {
            return Err(Error::InvalidCurve(format!(
                "first vertex must sit at S = 1, got {}",
                vertices[0].s
            )));
        }
        for (k, v) in vertices.iter().enumerate() {
            if v.index != k {
                return Err(Error::InvalidCurve(format!(
                    "vertex {k} carries index {}",
                    v.index
                )));
            }
            if !(v.s > 0.0 && v.intercept > 0.0 && v.slope > 0.0) {
                return Err(Error::InvalidCurve(format!(
                    "vertex {k} not strictly positive: {v:?}"
                )));
            }
        }
        for w in vertices.windows(2) {
            let (a, b) = (&w[0], &w[1]);
            if !(b.s < a.s) || !(b.slope > a.slope) {
                return Err(Error::InvalidCurve(format!(
                    "monotonicity violated between vertices {} and {}",
                    a.index, b.index
                )));
            }
            let lhs = a.intercept + b.s * a.slope;
            let rhs = b.intercept + b.s * b.slope;
            if (lhs - rhs).abs() > 1e-12 * lhs.abs().max(rhs.abs()) {
                return Err(Error::InvalidCurve(format!(
                    "tangents {} and {} disagree at their junction: {lhs} vs {rhs}",
                    a.index, b.index
                )));
            }
        }
        Ok(Self {
            orientation,
            vertices,
        })
    }

    pub fn orientation(&self) -> Orientation {
        self.orientation
    }

    pub fn vertices(&self) -> &[CurveVertex] {
        &self.vertices
    }

    pub fn last(&self) -> &CurveVertex {
        self.vertices.last().expect("curve is never empty")
    }

    /// Abscissa of the deepest represented vertex.
    pub fn tail_s(&self) -> f64 {
        self.last().s
    }

    /// Curve height at `tail_s`.
    pub fn tail_height(&self) -> f64 {
        self.last().height()
    }

    /// Evaluate `Γ(s)` for `s ∈ [tail_s, 1]`: the tangent `ℓₙ` with
    /// `Sₙ ≥ s > Sₙ₊₁` carries the value `Yₙ + s·σₙ`.
    pub fn value(&self, s: f64) -> Result<f64> {
        let tail = self.tail_s();
        if !(s >= tail && s <= 1.0) {
            return Err(Error::OutOfRange { s, tail_s: tail });
        }
        // Vertices are sorted by strictly decreasing S.
        let k = self.vertices.partition_point(|v| v.s >= s);
        let v = &self.vertices[k - 1];
        Ok(v.intercept + s * v.slope)
    }

    /// Slope `Γ'(s)` (left-continuous) for `s ∈ [tail_s, 1]`.
    pub fn slope_at(&self, s: f64) -> Result<f64> {
        let tail = self.tail_s();
        if !(s >= tail && s <= 1.0) {
            return Err(Error::OutOfRange { s, tail_s: tail });
        }
        let k = self.vertices.partition_point(|v| v.s >= s);
        Ok(self.vertices[k - 1].slope)
    }

    /// Deterministic bracket for `∫₀¹ Γ(s) ds`.
    ///
    /// The represented part `[tail_s, 1]` integrates exactly (trapezoids of a
    /// piecewise-linear function); the unrepresented tail `(0, tail_s)`
    /// contributes between 0 and `tail_s·Γ(tail_s)` because Γ is positive and
    /// increasing.
    pub fn integral_bracket(&self) -> (f64, f64) {
        let mut lower = 0.0;
        for w in self.vertices.windows(2) {
            let (a, b) = (&w[0], &w[1]);
            let high = a.height();
            let low = a.intercept + b.s * a.slope;
            lower += 0.5 * (a.s - b.s) * (high + low);
        }
        let upper = lower + self.tail_s() * self.tail_height();
        (lower, upper)
    }

    /// The unique `s` with `Γ(s) = eps`, with the convention that levels
    /// above `Γ(1)` map to 1. Levels below the represented range return a
    /// needs-extension error.
    pub fn inverse(&self, eps: f64) -> Result<f64> {
        if !(eps > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "inverse level must be positive, got {eps}"
            )));
        }
        if eps > self.vertices[0].height() {
            return Ok(1.0);
        }
        let tail_value = self.tail_height();
        if eps < tail_value {
            return Err(Error::NeedsExtension {
                eps,
                tail_s: self.tail_s(),
                tail_value,
            });
        }
        // Vertex heights decrease with the index; find the segment whose
        // height range straddles eps and invert its tangent.
        let k = self.vertices.partition_point(|v| v.height() >= eps);
        let v = &self.vertices[k - 1];
        let s = (eps - v.intercept) / v.slope;
        let lo = if k < self.vertices.len() {
            self.vertices[k].s
        } else {
            self.tail_s()
        };
        Ok(s.clamp(lo, v.s))
    }

    /// JSON array of `{n, S, Y, sigma}` records.
    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.vertices).expect("vertices serialize infallibly")
    }

    fn push_step(&mut self, stream: &mut RngStream) {
        let next = step_reverse(self.last(), stream);
        self.vertices.push(next);
    }
}

/// Extend `curve` by reverse steps until `stop` holds at the last vertex,
/// with the default step cap.
pub fn extend_until(
    curve: &mut SeminalCurve,
    stream: &mut RngStream,
    stop: impl FnMut(&CurveVertex) -> bool,
) -> Result<()> {
    extend_until_capped(curve, stream, DEFAULT_STEP_CAP, stop)
}

/// As [`extend_until`] with an explicit step cap.
pub fn extend_until_capped(
    curve: &mut SeminalCurve,
    stream: &mut RngStream,
    cap: usize,
    mut stop: impl FnMut(&CurveVertex) -> bool,
) -> Result<()> {
    let mut steps = 0;
    while !stop(curve.last()) {
        if steps >= cap {
            return Err(Error::ExtensionCapExceeded { cap });
        }
        curve.push_step(stream);
        steps += 1;
    }
    Ok(())
}

/// A curve paired with the stream that generates it.
///
/// Extending a realization always consumes its own stream, so the vertex
/// sequence is a function of the key alone: extending to one stop rule and
/// then to a stricter one yields exactly the vertices of extending straight
/// to the stricter rule. Clones replay identically, which is what the
/// shared-randomness truncation diagnostics rely on.
#[derive(Clone, Debug)]
pub struct CurveRealization {
    pub curve: SeminalCurve,
    pub stream: RngStream,
}

impl CurveRealization {
    pub fn draw(orientation: Orientation, mut stream: RngStream) -> Self {
        let curve = SeminalCurve::draw(orientation, &mut stream);
        Self { curve, stream }
    }

    pub fn extend_until(&mut self, stop: impl FnMut(&CurveVertex) -> bool) -> Result<()> {
        extend_until(&mut self.curve, &mut self.stream, stop)
    }
}
