//! The truncated central-flow estimator: product of curve integrals plus
//! depth-N correction sums, with a deterministic bracket on everything the
//! finite curve segments cannot resolve and the closed-form stochastic L¹
//! bound on everything the truncation discards.
//!
//! One half-plane estimate combines a left and a right curve:
//!
//! ```text
//! (∫Γ₋)(∫Γ₊) + Σₙ₌₀ᴺ term⁺ₙ + Σₙ₌₀ᴺ term⁻ₙ
//! ```
//!
//! The n-th correction pairs the triangle `Δₙ` of second points binned to
//! tangent `ℓₙ` with the region `Cₙ` of first points lying below the
//! opposite curve and below `ℓₙ`. Those two constraints account for every
//! line the curves represent; the lines the envelopes do *not* represent
//! (same sign class, strictly above the curve) still separate some of the
//! binned pairs, and given the curves they form a Poisson process with the
//! ambient intensity restricted above the envelope. Each term therefore
//! carries the conditional void probability `exp(-ν)` of that unseen set,
//! evaluated at a uniformly sampled pair of the bin — an importance-sampled,
//! conditionally unbiased correction. `ν` is exact up to a bracketed
//! truncation error: see [`shadow_measure`].
//!
//! Dropping the weights recovers the pure envelope decomposition, which
//! overestimates the flow (every unseen separating line is ignored); it is
//! kept as [`envelope_upper_bound`] because all of its terms are
//! closed-form and it deterministically dominates the weighted estimate.
//!
//! The deterministic budget `eps` splits as `eps/4` of integral tail per
//! curve and `2⁻ⁿ⁻³·eps` per correction term for each of the two bracketed
//! mechanisms (region tail, void-measure truncation), so the reported
//! bracket width stays at most `eps` plus the integral-product bracket.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::regions::{c_region_area, delta_area, min_profile, AreaBracket, TangentLine};
use crate::rng::RngStream;
use crate::seminal::{CurveRealization, CurveVertex, Orientation};

/// Stream tags for the independent variables of one total-flow replicate.
/// Fixing tags per variable means adding draws for one purpose never
/// perturbs another.
pub mod stream_tag {
    pub const UPPER_MINUS: u64 = 1;
    pub const UPPER_PLUS: u64 = 2;
    pub const LOWER_MINUS: u64 = 3;
    pub const LOWER_PLUS: u64 = 4;
    pub const UPPER_PAIRS: u64 = 5;
    pub const LOWER_PAIRS: u64 = 6;
}

/// Per-depth contribution (bracket midpoints) from each side.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct FlowTerm {
    pub n: usize,
    pub plus: f64,
    pub minus: f64,
}

/// Value of the truncated estimator together with its error accounting.
#[derive(Clone, Debug, Serialize)]
pub struct FlowEstimate {
    /// Truncation depth N.
    pub depth: usize,
    /// Midpoint of the deterministic bracket.
    pub value: f64,
    /// Width of the deterministic bracket.
    pub bracket_width: f64,
    /// Stochastic L¹ truncation bound `(20/7)·3⁻ᴺ + (20/27)·6⁻ᴺ`.
    pub l1_bound: f64,
    /// Midpoint of the product-of-integrals term.
    pub product_term: f64,
    /// Midpoint of the summed corrections from tangents of the right curve.
    pub sum_plus: f64,
    /// Midpoint of the summed corrections from tangents of the left curve.
    pub sum_minus: f64,
    /// Per-depth contributions.
    pub terms: Vec<FlowTerm>,
}

/// L¹ error bound of the depth-N truncation: `(20/7)·3⁻ᴺ + (20/27)·6⁻ᴺ`.
///
/// The bound controls the discarded tail of the full (unweighted) envelope
/// decomposition, which dominates the weighted terms, so it applies to both
/// estimator variants.
pub fn l1_error_bound(depth: usize) -> f64 {
    let n = i32::try_from(depth).unwrap_or(i32::MAX);
    20.0 / 7.0 * 3f64.powi(-n) + 20.0 / 27.0 * 6f64.powi(-n)
}

/// Conditional intensity measure of the unrepresented separating lines for
/// a point pair, given the represented vertices of one curve.
///
/// Given the curve, the remaining lines of its sign class form a Poisson
/// process above the curve. A line `y = b + σx` of that class separates the
/// pair `(-t1, y1)`, `(a2, y2)` from the origin iff `0 < b`,
/// `b < y2 - σ·a2` (below the second point) and `b < y1 + σ·t1` (below the
/// first); lying above the curve means `b` exceeds the curve's tangent
/// intercept at slope σ, `max_k (Γ(Sₖ) - σSₖ)`. The measure is ½ db dσ over
/// that region — a piecewise-linear integrand in σ, integrated exactly.
///
/// Returns `(measure, truncation_error)`: slopes beyond the last
/// represented vertex use tangent intercept 0 instead of the true (unknown,
/// at most `Y_last`) value, which overstates the measure by at most
/// `½·Y_last·(σ_cap - σ_last)₊`.
pub fn shadow_measure(vertices: &[CurveVertex], t1: f64, y1: f64, a2: f64, y2: f64) -> (f64, f64) {
    debug_assert!(t1 > 0.0 && y1 > 0.0 && a2 > 0.0 && y2 > 0.0);
    debug_assert!(!vertices.is_empty());
    let sigma_cap = y2 / a2;

    // Candidate breakpoints: every slope where one of the participating
    // linear branches can switch. Between consecutive candidates the
    // integrand is linear, so endpoint trapezoids are exact.
    let mut cuts = Vec::with_capacity(4 * vertices.len() + 4);
    cuts.push(0.0);
    cuts.push(sigma_cap);
    let mut push = |x: f64| {
        if x > 0.0 && x < sigma_cap {
            cuts.push(x);
        }
    };
    push((y2 - y1) / (a2 + t1));
    for w in vertices.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        // Chord slope: where the binding tangent hands over to the next.
        push((a.height() - b.height()) / (a.s - b.s));
    }
    for v in vertices {
        let h = v.height();
        if a2 != v.s {
            push((y2 - h) / (a2 - v.s));
        }
        push((h - y1) / (t1 + v.s));
        push(h / v.s);
    }
    cuts.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());

    let integrand = |sigma: f64, hint: &mut usize| {
        let upper = (y2 - sigma * a2).min(y1 + sigma * t1);
        // Tangent transform: the maximiser index only grows with σ.
        while *hint + 1 < vertices.len() {
            let here = vertices[*hint].height() - sigma * vertices[*hint].s;
            let next = vertices[*hint + 1].height() - sigma * vertices[*hint + 1].s;
            if next > here {
                *hint += 1;
            } else {
                break;
            }
        }
        let v = &vertices[*hint];
        let lower = (v.height() - sigma * v.s).max(0.0);
        (upper - lower).max(0.0)
    };

    let mut hint_lo = 0usize;
    let mut hint_hi = 0usize;
    let mut measure = 0.0;
    for w in cuts.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        if lo >= hi {
            continue;
        }
        let f_lo = integrand(lo, &mut hint_lo);
        let f_hi = integrand(hi, &mut hint_hi);
        measure += 0.25 * (f_lo + f_hi) * (hi - lo); // ½ intensity × trapezoid
    }

    let last = vertices.last().expect("nonempty vertex slice");
    let err = 0.5 * last.intercept * (sigma_cap - last.slope).max(0.0);
    (measure, err)
}

/// Extend the realization until `rule` holds, then return the index of the
/// first vertex satisfying it. Using that prefix makes derived quantities
/// depend only on the stop rule and the stream, never on how much deeper
/// the curve happens to be represented already — which is what keeps
/// shared-stream comparisons across truncation depths meaningful.
fn canonical_prefix(
    real: &mut CurveRealization,
    mut rule: impl FnMut(&CurveVertex) -> bool,
) -> Result<usize> {
    real.extend_until(&mut rule)?;
    Ok(real
        .curve
        .vertices()
        .iter()
        .position(&mut rule)
        .expect("extension guarantees a satisfying vertex"))
}

/// Uniform point in the triangle with the given vertices.
fn sample_triangle(stream: &mut RngStream, a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> [f64; 2] {
    let r1 = stream.uniform01().sqrt();
    let r2 = stream.uniform01();
    let w0 = 1.0 - r1;
    let w1 = r1 * (1.0 - r2);
    let w2 = r1 * r2;
    [
        w0 * a[0] + w1 * b[0] + w2 * c[0],
        w0 * a[1] + w1 * b[1] + w2 * c[1],
    ]
}

/// Uniform point under the profile `t ↦ min(Γ(t), Y - σt)` restricted to
/// its represented support; returns `(t, y)` mirrored into the opposite
/// quadrant's coordinates. `total` must be the profile's area.
fn sample_under_profile(
    stream: &mut RngStream,
    profile: &[crate::regions::MinPiece],
    total: f64,
) -> (f64, f64) {
    debug_assert!(!profile.is_empty() && total > 0.0);
    let mut target = stream.uniform01() * total;
    let mut index = profile.len() - 1;
    for (k, piece) in profile.iter().enumerate() {
        let area = piece.area();
        if target <= area {
            index = k;
            break;
        }
        target -= area;
    }
    let piece = &profile[index];
    let target = target.min(piece.area()).max(0.0);
    let width = piece.hi - piece.lo;
    let rate = (piece.value_hi - piece.value_lo) / width;
    // Invert the quadratic CDF of a linear density on the piece.
    let x = if rate.abs() * width <= 1e-12 * piece.value_lo.abs() {
        target / piece.value_lo.max(1e-300)
    } else {
        let disc = (piece.value_lo * piece.value_lo + 2.0 * rate * target).max(0.0);
        (disc.sqrt() - piece.value_lo) / rate
    };
    let t = (piece.lo + x).clamp(piece.lo, piece.hi);
    let height = piece.value_lo + rate * (t - piece.lo);
    (t, stream.uniform01() * height.max(0.0))
}

struct TermEstimate {
    bracket: AreaBracket,
}

/// One weighted correction term: tangent `ℓₙ` of `own` against the region
/// under `other`, with the conditional no-unseen-separator weight sampled
/// at one uniform pair of the bin. Every ingredient is computed from the
/// canonical vertex prefix of its stop rule, so the term is a function of
/// `(streams, n, budget)` alone.
fn weighted_term(
    own: &mut CurveRealization,
    other: &mut CurveRealization,
    n: usize,
    budget: f64,
    pairs: &mut RngStream,
) -> Result<TermEstimate> {
    let v = own.curve.vertices()[n];
    let next = own.curve.vertices()[n + 1];
    let delta = delta_area(&v, &next);
    if delta <= 0.0 {
        return Ok(TermEstimate {
            bracket: AreaBracket::ZERO,
        });
    }
    let line = TangentLine::from_vertex(&v);
    let half_budget = 0.5 * budget;

    // Canonical C-region: exact min-integral down to the first vertex whose
    // unrepresented tail fits the budget share, tail bracketed as usual.
    let c_tol = half_budget / delta;
    let y = line.intercept;
    let k = canonical_prefix(other, |v| v.s * v.height().min(y) <= c_tol)?;
    let c_tail = &other.curve.vertices()[k];
    let tail_bound = c_tail.s * c_tail.height().min(y);
    let cap = line.positive_root().min(1.0);
    let profile = if cap > c_tail.s {
        min_profile(&other.curve, &line, c_tail.s, cap)?
    } else {
        Vec::new()
    };
    let c_exact: f64 = profile.iter().map(crate::regions::MinPiece::area).sum();
    if c_exact <= 0.0 {
        return Ok(TermEstimate {
            bracket: AreaBracket {
                lower: 0.0,
                upper: delta * tail_bound,
            },
        });
    }

    // Sample the bin: a second point uniform in the triangle, a first point
    // uniform under the represented part of the C-region profile.
    let junction = [next.s, v.intercept + next.s * v.slope];
    let on_axis_low = [1.0, v.intercept + v.slope];
    let on_axis_high = [1.0, next.intercept + next.slope];
    let p2 = sample_triangle(pairs, junction, on_axis_low, on_axis_high);
    let (t1, y1) = sample_under_profile(pairs, &profile, c_exact);

    // Void-measure truncation error inside its budget share, again on the
    // canonical prefix.
    let sigma_cap = p2[1] / p2[0];
    let nu_tol = (half_budget / (delta * c_exact)).min(0.5) * 0.5;
    let k_nu = canonical_prefix(own, |v| {
        0.5 * v.intercept * (sigma_cap - v.slope).max(0.0) <= nu_tol
    })?;
    let (nu, nu_err) = shadow_measure(
        &own.curve.vertices()[..=k_nu],
        t1,
        y1,
        p2[0],
        p2[1],
    );
    let w_lo = (-nu).exp();
    let w_hi = ((-nu + nu_err).exp()).min(1.0);

    Ok(TermEstimate {
        bracket: AreaBracket {
            lower: delta * c_exact * w_lo,
            upper: delta * (c_exact * w_hi + tail_bound),
        },
    })
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "bracket budget must be positive, got {eps}"
        )));
    }
    Ok(())
}

fn integral_product(
    minus: &mut CurveRealization,
    plus: &mut CurveRealization,
    eps: f64,
) -> Result<AreaBracket> {
    let budget = 0.25 * eps;
    minus.extend_until(|v| v.s * v.height() <= budget)?;
    plus.extend_until(|v| v.s * v.height() <= budget)?;
    let (ml, mu) = minus.curve.integral_bracket();
    let (pl, pu) = plus.curve.integral_bracket();
    Ok(AreaBracket { lower: ml, upper: mu }.product(AreaBracket { lower: pl, upper: pu }))
}

fn assemble(
    depth: usize,
    product: AreaBracket,
    terms_plus: Vec<AreaBracket>,
    terms_minus: Vec<AreaBracket>,
) -> FlowEstimate {
    let mut total = product;
    let mut sum_plus = AreaBracket::ZERO;
    let mut sum_minus = AreaBracket::ZERO;
    let mut terms = Vec::with_capacity(depth + 1);
    for (n, (tp, tm)) in terms_plus.into_iter().zip(terms_minus).enumerate() {
        total = total.add(tp).add(tm);
        sum_plus = sum_plus.add(tp);
        sum_minus = sum_minus.add(tm);
        terms.push(FlowTerm {
            n,
            plus: tp.midpoint(),
            minus: tm.midpoint(),
        });
    }
    FlowEstimate {
        depth,
        value: total.midpoint(),
        bracket_width: total.width(),
        l1_bound: l1_error_bound(depth),
        product_term: product.midpoint(),
        sum_plus: sum_plus.midpoint(),
        sum_minus: sum_minus.midpoint(),
        terms,
    }
}

/// Depth-N estimate of one half-plane's flow volume from its two curves,
/// with conditionally unbiased correction terms.
///
/// Both realizations are extended as needed: to depth N+1 for the
/// triangles, until their integral tails fit in `eps/4` each, and until
/// every per-term mechanism fits its `2⁻ⁿ⁻³·eps` share. `pairs` supplies
/// the bin-sampling randomness and must be dedicated to this call chain.
pub fn estimate_half_plane(
    minus: &mut CurveRealization,
    plus: &mut CurveRealization,
    depth: usize,
    eps: f64,
    pairs: &mut RngStream,
) -> Result<FlowEstimate> {
    check_eps(eps)?;
    minus.extend_until(|v| v.index >= depth + 1)?;
    plus.extend_until(|v| v.index >= depth + 1)?;
    let product = integral_product(minus, plus, eps)?;
    let mut terms_plus = Vec::with_capacity(depth + 1);
    let mut terms_minus = Vec::with_capacity(depth + 1);
    for n in 0..=depth {
        let budget = eps * 2f64.powi(-(n as i32) - 2);
        terms_plus.push(weighted_term(plus, minus, n, budget, pairs)?.bracket);
        terms_minus.push(weighted_term(minus, plus, n, budget, pairs)?.bracket);
    }
    Ok(assemble(depth, product, terms_plus, terms_minus))
}

/// The pure envelope decomposition: every correction region is taken in
/// full, with no allowance for separating lines the envelopes do not
/// represent. All terms are closed-form given the curves, and the value
/// deterministically dominates [`estimate_half_plane`] on the same curves;
/// its mean overestimates the flow (by about 19% at the centre).
pub fn envelope_upper_bound(
    minus: &mut CurveRealization,
    plus: &mut CurveRealization,
    depth: usize,
    eps: f64,
) -> Result<FlowEstimate> {
    check_eps(eps)?;
    minus.extend_until(|v| v.index >= depth + 1)?;
    plus.extend_until(|v| v.index >= depth + 1)?;
    let product = integral_product(minus, plus, eps)?;
    let mut terms_plus = Vec::with_capacity(depth + 1);
    let mut terms_minus = Vec::with_capacity(depth + 1);
    for n in 0..=depth {
        let budget = eps * 2f64.powi(-(n as i32) - 2);
        let side = |own: &mut CurveRealization,
                        other: &mut CurveRealization|
         -> Result<AreaBracket> {
            let v = own.curve.vertices()[n];
            let next = own.curve.vertices()[n + 1];
            let delta = delta_area(&v, &next);
            if delta <= 0.0 {
                return Ok(AreaBracket::ZERO);
            }
            let line = TangentLine::from_vertex(&v);
            Ok(c_region_area(&line, other, budget / delta)?.scale(delta))
        };
        terms_plus.push(side(plus, minus)?);
        terms_minus.push(side(minus, plus)?);
    }
    Ok(assemble(depth, product, terms_plus, terms_minus))
}

/// Draw the two fresh curve realizations of one half-plane.
pub fn draw_half_plane(
    seed: u64,
    replicate: u64,
    tag_minus: u64,
    tag_plus: u64,
) -> (CurveRealization, CurveRealization) {
    (
        CurveRealization::draw(Orientation::Left, RngStream::keyed(seed, replicate, tag_minus)),
        CurveRealization::draw(Orientation::Right, RngStream::keyed(seed, replicate, tag_plus)),
    )
}

/// The two independent half-plane estimates (upper, lower) of one replicate.
pub fn sample_total_flow_parts(
    seed: u64,
    replicate: u64,
    depth: usize,
    eps: f64,
) -> Result<(FlowEstimate, FlowEstimate)> {
    let (mut um, mut up) = draw_half_plane(
        seed,
        replicate,
        stream_tag::UPPER_MINUS,
        stream_tag::UPPER_PLUS,
    );
    let (mut lm, mut lp) = draw_half_plane(
        seed,
        replicate,
        stream_tag::LOWER_MINUS,
        stream_tag::LOWER_PLUS,
    );
    let mut upper_pairs = RngStream::keyed(seed, replicate, stream_tag::UPPER_PAIRS);
    let mut lower_pairs = RngStream::keyed(seed, replicate, stream_tag::LOWER_PAIRS);
    let upper = estimate_half_plane(&mut um, &mut up, depth, eps, &mut upper_pairs)?;
    let lower = estimate_half_plane(&mut lm, &mut lp, depth, eps, &mut lower_pairs)?;
    Ok((upper, lower))
}

/// One replicate of the total central flow: the average of the two
/// independent half-plane estimates, with brackets and L¹ bounds averaged
/// alongside. Calibrated to mean 2.
pub fn sample_total_flow(seed: u64, replicate: u64, depth: usize, eps: f64) -> Result<FlowEstimate> {
    let (upper, lower) = sample_total_flow_parts(seed, replicate, depth, eps)?;
    Ok(average_estimates(&upper, &lower))
}

fn average_estimates(a: &FlowEstimate, b: &FlowEstimate) -> FlowEstimate {
    debug_assert_eq!(a.depth, b.depth);
    let terms = a
        .terms
        .iter()
        .zip(&b.terms)
        .map(|(x, y)| FlowTerm {
            n: x.n,
            plus: 0.5 * (x.plus + y.plus),
            minus: 0.5 * (x.minus + y.minus),
        })
        .collect();
    FlowEstimate {
        depth: a.depth,
        value: 0.5 * (a.value + b.value),
        bracket_width: 0.5 * (a.bracket_width + b.bracket_width),
        l1_bound: 0.5 * (a.l1_bound + b.l1_bound),
        product_term: 0.5 * (a.product_term + b.product_term),
        sum_plus: 0.5 * (a.sum_plus + b.sum_plus),
        sum_minus: 0.5 * (a.sum_minus + b.sum_minus),
        terms,
    }
}

/// Replicate-parallel batch of total-flow samples, ordered by replicate id.
/// The output is bit-identical for a fixed seed regardless of thread count.
pub fn run_flow_replicates(
    seed: u64,
    replicates: u64,
    depth: usize,
    eps: f64,
) -> Result<Vec<FlowEstimate>> {
    (0..replicates)
        .into_par_iter()
        .map(|r| sample_total_flow(seed, r, depth, eps))
        .collect()
}
