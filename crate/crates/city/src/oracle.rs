//! Independent brute-force pathway: windowed realizations of the improper
//! line process, literal lower envelopes, the separation predicate behind
//! the near-geodesic boundary indicator, and a box-restricted flow volume
//! computed two unrelated ways (Monte Carlo point pairs vs. grid quadrature
//! over exact clipped-polygon areas).
//!
//! In intercept/slope coordinates `(b, σ)` the process intensity is
//! `½ db dσ` (the Jacobian of `(y₋, y₊) = (b-σ, b+σ)` contributes a factor
//! 2 against the `¼ dy₋dy₊` intensity), so a rectangular window
//! `|σ| ≤ M`, `0 < b ≤ B` of one sign class holds a Poisson(½MB) number of
//! lines, each uniform in the window. For separation queries the windows
//! below are provably sufficient: a line separating two upper-half-plane
//! points from the origin must run above the origin (`b > 0`) and below
//! both points, which caps `b` by the larger height and `|σ|` by the larger
//! height/abscissa ratio. Truncation therefore introduces no bias there.

use rand_distr::Distribution;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::rng::RngStream;

/// A non-vertical planar line `y = intercept + slope·x`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Line {
    pub slope: f64,
    pub intercept: f64,
}

impl Line {
    pub fn height(&self, x: f64) -> f64 {
        self.intercept + self.slope * x
    }

    /// Intercept on the x = -1 axis.
    pub fn y_minus(&self) -> f64 {
        self.intercept - self.slope
    }

    /// Intercept on the x = +1 axis.
    pub fn y_plus(&self) -> f64 {
        self.intercept + self.slope
    }
}

/// Sign class of a windowed sample: positive-slope lines crossing the
/// negative x-axis, or negative-slope lines crossing the positive x-axis.
/// Both classes have `b > 0`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum LineClass {
    Plus,
    Minus,
}

/// A finite window of the improper line process.
#[derive(Clone, Debug)]
pub struct TruncatedLineSample {
    pub lines: Vec<Line>,
    pub slope_bound: f64,
    pub intercept_window: f64,
    pub class: LineClass,
}

impl TruncatedLineSample {
    /// CSV capture of the realization, one `sigma,b` row per line.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("sigma,b\n");
        for line in &self.lines {
            out.push_str(&format!("{},{}\n", line.slope, line.intercept));
        }
        out
    }
}

fn poisson_count(stream: &mut RngStream, mean: f64) -> u64 {
    rand_distr::Poisson::new(mean)
        .expect("mean is validated positive and finite")
        .sample(stream) as u64
}

/// Sample the window `0 < |σ| ≤ slope_bound`, `0 < b ≤ intercept_window`
/// of one sign class: a Poisson(½·M·B) count of i.i.d. uniform lines.
pub fn sample_lines(
    stream: &mut RngStream,
    class: LineClass,
    slope_bound: f64,
    intercept_window: f64,
) -> Result<TruncatedLineSample> {
    if !(slope_bound > 0.0 && slope_bound.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "slope bound must be positive and finite, got {slope_bound}"
        )));
    }
    if !(intercept_window > 0.0 && intercept_window.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "intercept window must be positive and finite, got {intercept_window}"
        )));
    }
    let mean = 0.5 * slope_bound * intercept_window;
    let count = poisson_count(stream, mean);
    let sign = match class {
        LineClass::Plus => 1.0,
        LineClass::Minus => -1.0,
    };
    let lines = (0..count)
        .map(|_| Line {
            slope: sign * slope_bound * stream.uniform01(),
            intercept: intercept_window * stream.uniform01(),
        })
        .collect();
    Ok(TruncatedLineSample {
        lines,
        slope_bound,
        intercept_window,
        class,
    })
}

/// One maximal linear piece of a lower envelope.
#[derive(Clone, Copy, Debug)]
pub struct EnvelopePiece {
    pub line: Line,
    pub x_from: f64,
    pub x_to: f64,
}

/// Pointwise infimum of finitely many lines over an interval: concave and
/// piecewise linear, stored as pieces ordered by abscissa (slopes strictly
/// decreasing left to right).
#[derive(Clone, Debug)]
pub struct Envelope {
    pieces: Vec<EnvelopePiece>,
}

impl Envelope {
    pub fn pieces(&self) -> &[EnvelopePiece] {
        &self.pieces
    }

    pub fn domain(&self) -> (f64, f64) {
        (
            self.pieces.first().unwrap().x_from,
            self.pieces.last().unwrap().x_to,
        )
    }

    fn piece_at(&self, x: f64) -> &EnvelopePiece {
        let k = self.pieces.partition_point(|p| p.x_to < x);
        &self.pieces[k.min(self.pieces.len() - 1)]
    }

    pub fn value(&self, x: f64) -> f64 {
        self.piece_at(x).line.height(x)
    }

    pub fn slope_at(&self, x: f64) -> f64 {
        self.piece_at(x).line.slope
    }
}

/// Lower envelope of a sample over `domain`, by the dual convex-hull sweep:
/// sort by slope (steepest first, since steep lines win toward -∞), then
/// prune lines whose candidate piece would start left of its predecessor's.
/// O(n log n).
pub fn lower_envelope(sample: &TruncatedLineSample, domain: (f64, f64)) -> Result<Envelope> {
    envelope_of_lines(&sample.lines, domain)
}

pub(crate) fn envelope_of_lines(lines: &[Line], domain: (f64, f64)) -> Result<Envelope> {
    let (lo, hi) = domain;
    if lines.is_empty() {
        return Err(Error::EmptyEnvelope);
    }
    if !(lo < hi) {
        return Err(Error::InvalidParameter(format!(
            "envelope domain must be a nonempty interval, got [{lo}, {hi}]"
        )));
    }
    let mut sorted: Vec<Line> = lines.to_vec();
    sorted.sort_unstable_by(|a, b| {
        b.slope
            .partial_cmp(&a.slope)
            .unwrap()
            .then(a.intercept.partial_cmp(&b.intercept).unwrap())
    });

    // Stack of (line, start of its piece). Equal-slope duplicates keep only
    // the lowest intercept (the sort puts it first).
    let mut stack: Vec<(Line, f64)> = Vec::new();
    for &line in &sorted {
        if let Some(&(top, _)) = stack.last() {
            if top.slope == line.slope {
                continue;
            }
        }
        loop {
            match stack.last() {
                None => {
                    stack.push((line, f64::NEG_INFINITY));
                    break;
                }
                Some(&(top, top_from)) => {
                    // Flatter line takes over right of the crossing.
                    let cross =
                        (line.intercept - top.intercept) / (top.slope - line.slope);
                    if cross <= top_from {
                        stack.pop();
                    } else {
                        stack.push((line, cross));
                        break;
                    }
                }
            }
        }
    }

    let mut pieces = Vec::new();
    for (k, &(line, from)) in stack.iter().enumerate() {
        let to = stack.get(k + 1).map_or(f64::INFINITY, |&(_, next)| next);
        let piece_lo = from.max(lo);
        let piece_hi = to.min(hi);
        if piece_lo < piece_hi {
            pieces.push(EnvelopePiece {
                line,
                x_from: piece_lo,
                x_to: piece_hi,
            });
        }
    }
    debug_assert!(!pieces.is_empty());
    Ok(Envelope { pieces })
}

/// True iff `line` strictly separates both points from the origin.
pub fn separates(line: &Line, p1: [f64; 2], p2: [f64; 2]) -> bool {
    let origin_side = -line.intercept;
    let s1 = p1[1] - line.height(p1[0]);
    let s2 = p2[1] - line.height(p2[0]);
    s1 * origin_side < 0.0 && s2 * origin_side < 0.0
}

fn check_quadrant_point(p: [f64; 2], want_negative_x: bool) -> Result<()> {
    let x_ok = if want_negative_x { p[0] < 0.0 } else { p[0] > 0.0 };
    if !x_ok || !(p[1] > 0.0) {
        return Err(Error::DegeneratePoint { x: p[0], y: p[1] });
    }
    Ok(())
}

/// Exact draw of the event "the origin lies on the near-geodesic boundary
/// of the pair": sample both sign classes in windows that provably contain
/// every line able to separate the pair from the origin, and report whether
/// none does.
///
/// `p1` must lie strictly inside the upper-left quadrant strip and `p2`
/// strictly inside the upper-right one.
pub fn boundary_indicator(stream: &mut RngStream, p1: [f64; 2], p2: [f64; 2]) -> Result<bool> {
    check_quadrant_point(p1, true)?;
    check_quadrant_point(p2, false)?;
    // A separating line needs 0 < b < max height, and its slope is capped by
    // the height/abscissa ratio on the side it descends toward.
    let slope_bound = (p1[1] / -p1[0]).max(p2[1] / p2[0]);
    let intercept_window = p1[1].max(p2[1]);
    let plus = sample_lines(stream, LineClass::Plus, slope_bound, intercept_window)?;
    let minus = sample_lines(stream, LineClass::Minus, slope_bound, intercept_window)?;
    Ok(!plus
        .lines
        .iter()
        .chain(minus.lines.iter())
        .any(|line| separates(line, p1, p2)))
}

/// Box-restricted flow volume computed two independent ways on one shared
/// realization.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct BoxVolume {
    /// Monte Carlo estimate over uniform point pairs.
    pub mc: f64,
    /// Standard error of `mc`.
    pub mc_se: f64,
    /// Midpoint-grid quadrature over exact clipped-polygon areas.
    pub quad: f64,
    /// Stated bound on the quadrature discretization error.
    pub quad_error_bound: f64,
}

/// Variation-based midpoint-rule bound: the valid-area integrand is bounded
/// by H and of bounded variation along each grid row and column, giving
/// `3H²/grid`.
pub fn quadrature_error_bound(height: f64, grid: usize) -> f64 {
    3.0 * height * height / grid as f64
}

/// Draw a fresh realization windowed for the box `(0,1) × (0,H)` (and its
/// mirror) and evaluate [`box_volume_with_lines`] on it. The slope window is
/// `H / x_min` where `x_min = 1/(2·grid)` is the quadrature grid margin, so
/// both pathways see exactly the lines they can resolve.
pub fn box_volume_two_ways(
    stream: &mut RngStream,
    height: f64,
    n_mc: usize,
    grid: usize,
) -> Result<BoxVolume> {
    if grid == 0 {
        return Err(Error::InvalidParameter(
            "grid must be positive: a zero grid margin makes the slope window infinite".into(),
        ));
    }
    if !(height > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "box height must be positive, got {height}"
        )));
    }
    let x_min = 0.5 / grid as f64;
    let slope_bound = height / x_min;
    let plus = sample_lines(stream, LineClass::Plus, slope_bound, height)?;
    let minus = sample_lines(stream, LineClass::Minus, slope_bound, height)?;
    let mut lines = plus.lines;
    lines.extend_from_slice(&minus.lines);
    box_volume_with_lines(stream, &lines, height, n_mc, grid)
}

/// The two-way volume for a fixed line realization.
///
/// Both pathways target the same quantity conditional on the realization:
/// the 4-volume of pairs `(p1, p2)` in `((-1,0)×(0,H)) × ((0,1)×(0,H))`
/// that no line of the realization separates from the origin.
pub fn box_volume_with_lines(
    stream: &mut RngStream,
    lines: &[Line],
    height: f64,
    n_mc: usize,
    grid: usize,
) -> Result<BoxVolume> {
    if grid == 0 || n_mc == 0 {
        return Err(Error::InvalidParameter(
            "both the grid and the Monte Carlo budget must be positive".into(),
        ));
    }

    // Monte Carlo side. Low lines separate most pairs, so scanning in
    // ascending mid-strip height makes the early-exit cheap.
    let mut by_height: Vec<Line> = lines.to_vec();
    by_height.sort_unstable_by(|a, b| {
        a.height(0.5).partial_cmp(&b.height(0.5)).unwrap()
    });
    let mut hits = 0usize;
    for _ in 0..n_mc {
        let p1 = [-stream.uniform01(), height * stream.uniform01()];
        let p2 = [stream.uniform01(), height * stream.uniform01()];
        if !by_height.iter().any(|line| separates(line, p1, p2)) {
            hits += 1;
        }
    }
    let p_hat = hits as f64 / n_mc as f64;
    let vol = height * height;
    let mc = vol * p_hat;
    let mc_se = vol * (p_hat * (1.0 - p_hat) / n_mc as f64).sqrt();

    // Quadrature side: for each p2 grid centre, the valid p1 region is the
    // left box clipped below every line strictly under p2; sweeping the
    // centres upward adds one clip per line crossing.
    let mut total = 0.0;
    for j in 0..grid {
        let x = (j as f64 + 0.5) / grid as f64;
        let mut heights: Vec<(f64, Line)> =
            lines.iter().map(|l| (l.height(x), *l)).collect();
        heights.sort_unstable_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let mut poly = vec![
            [-1.0, 0.0],
            [0.0, 0.0],
            [0.0, height],
            [-1.0, height],
        ];
        let mut area = height;
        let mut idx = 0;
        for k in 0..grid {
            let y = (k as f64 + 0.5) * height / grid as f64;
            while idx < heights.len() && heights[idx].0 < y {
                poly = clip_below_line(&poly, &heights[idx].1);
                area = polygon_area(&poly);
                idx += 1;
            }
            total += area;
        }
    }
    let quad = total * height / (grid * grid) as f64;

    Ok(BoxVolume {
        mc,
        mc_se,
        quad,
        quad_error_bound: quadrature_error_bound(height, grid),
    })
}

/// Exact `∫ max(0, min(a(x), b(x), cap)) dx` over `[lo, hi]` for one or two
/// piecewise-linear envelopes under a constant cap. Every pair of
/// participating linear branches is split at its crossing, after which the
/// integrand is linear per sub-interval and endpoint trapezoids are exact.
fn integrate_min_envelopes(
    a: &Envelope,
    b: Option<&Envelope>,
    cap: f64,
    lo: f64,
    hi: f64,
) -> f64 {
    let eval = |x: f64| {
        let mut v = a.value(x).min(cap);
        if let Some(env) = b {
            v = v.min(env.value(x));
        }
        v.max(0.0)
    };
    let mut cuts = vec![lo, hi];
    let mut push = |x: f64| {
        if x > lo && x < hi {
            cuts.push(x);
        }
    };
    for piece in a.pieces() {
        push(piece.x_from);
    }
    if let Some(env) = b {
        for piece in env.pieces() {
            push(piece.x_from);
        }
    }
    // Branch crossings: each a-piece against the cap, zero, and every
    // overlapping b-piece (and those against cap and zero as well).
    let root = |l: &Line, level: f64| -> Option<f64> {
        if l.slope != 0.0 {
            Some((level - l.intercept) / l.slope)
        } else {
            None
        }
    };
    for pa in a.pieces() {
        if let Some(x) = root(&pa.line, cap) {
            push(x);
        }
        if let Some(x) = root(&pa.line, 0.0) {
            push(x);
        }
        if let Some(env) = b {
            for pb in env.pieces() {
                let den = pa.line.slope - pb.line.slope;
                if den != 0.0 {
                    push((pb.line.intercept - pa.line.intercept) / den);
                }
            }
        }
    }
    if let Some(env) = b {
        for pb in env.pieces() {
            if let Some(x) = root(&pb.line, cap) {
                push(x);
            }
            if let Some(x) = root(&pb.line, 0.0) {
                push(x);
            }
        }
    }
    cuts.sort_unstable_by(|x, y| x.partial_cmp(y).unwrap());
    let mut total = 0.0;
    for w in cuts.windows(2) {
        if w[0] < w[1] {
            total += 0.5 * (eval(w[0]) + eval(w[1])) * (w[1] - w[0]);
        }
    }
    total
}

/// Box-restricted flow volume assembled by the region decomposition, exact
/// for a finite realization: product of capped envelope integrals, plus one
/// layer per envelope component in which the bin of second points is
/// refined by every line of the realization crossing it, so that each
/// refined cell pairs with the exact area of admissible first points (below
/// the opposite envelope and below every line under the cell).
///
/// This decomposes the same volume as the point-pair indicator pathways of
/// [`box_volume_with_lines`] through entirely different geometry, so the
/// two must agree up to the quadrature bound.
pub fn box_volume_region_logic(plus: &[Line], minus: &[Line], height: f64) -> Result<f64> {
    if !(height > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "box height must be positive, got {height}"
        )));
    }
    // Store the minus side mirrored (t = -x) so both envelopes are
    // increasing concave functions over (0, 1).
    let minus_mirrored: Vec<Line> = minus
        .iter()
        .map(|l| Line {
            slope: -l.slope,
            intercept: l.intercept,
        })
        .collect();
    let env_plus = envelope_of_lines(plus, (0.0, 1.0))?;
    let env_minus = envelope_of_lines(&minus_mirrored, (0.0, 1.0))?;

    let product = integrate_min_envelopes(&env_minus, None, height, 0.0, 1.0)
        * integrate_min_envelopes(&env_plus, None, height, 0.0, 1.0);
    let plus_side = exact_component_sum(&env_plus, plus, &env_minus, height);
    let minus_side = exact_component_sum(&env_minus, &minus_mirrored, &env_plus, height);
    Ok(product + plus_side + minus_side)
}

/// Split a convex polygon by a line into its below and above parts.
fn split_polygon(poly: &[[f64; 2]], line: &Line) -> (Vec<[f64; 2]>, Vec<[f64; 2]>) {
    let below = clip_below_line(poly, line);
    let flipped = Line {
        slope: -line.slope,
        intercept: -line.intercept,
    };
    let mirrored: Vec<[f64; 2]> = poly.iter().map(|p| [p[0], -p[1]]).collect();
    let above: Vec<[f64; 2]> = clip_below_line(&mirrored, &flipped)
        .into_iter()
        .map(|p| [p[0], -p[1]])
        .collect();
    (below, above)
}

/// Σ over components and refined cells of (cell area) × (exact area of
/// admissible first points for second points in that cell).
fn exact_component_sum(own: &Envelope, own_lines: &[Line], other: &Envelope, cap: f64) -> f64 {
    let pieces = own.pieces();
    let count = pieces.len();
    let mut sum = 0.0;
    for n in 0..count {
        let piece = &pieces[count - 1 - n];
        let line = piece.line;
        // The bin of second points whose last represented line below them
        // is this component: the triangle against the next-steeper tangent,
        // or the wedge above the steepest one; both clipped to y < cap.
        let ceiling = Line {
            slope: 0.0,
            intercept: cap,
        };
        let bin = if n + 1 < count {
            let junction = piece.x_from;
            let next = pieces[count - 2 - n].line;
            let tri = [
                [junction, line.height(junction)],
                [1.0, line.height(1.0)],
                [1.0, next.height(1.0)],
            ];
            clip_below_line(&tri, &ceiling)
        } else {
            let rect = [
                [0.0, 0.0],
                [1.0, 0.0],
                [1.0, cap],
                [0.0, cap],
            ];
            split_polygon(&rect, &line).1
        };
        if polygon_area(&bin) <= 0.0 {
            continue;
        }

        // Refine the bin by every realization line crossing its interior:
        // within a refined cell the set of lines under the second point is
        // constant, so the admissible first-point area is too.
        let mut cells = vec![bin];
        for g in own_lines {
            let crosses = |poly: &[[f64; 2]]| {
                let mut above = false;
                let mut below = false;
                for p in poly {
                    let d = p[1] - g.height(p[0]);
                    above |= d > 0.0;
                    below |= d < 0.0;
                }
                above && below
            };
            let mut next_cells = Vec::with_capacity(cells.len() + 4);
            for cell in cells {
                if crosses(&cell) {
                    let (below, above) = split_polygon(&cell, g);
                    if polygon_area(&below) > 0.0 {
                        next_cells.push(below);
                    }
                    if polygon_area(&above) > 0.0 {
                        next_cells.push(above);
                    }
                } else {
                    next_cells.push(cell);
                }
            }
            cells = next_cells;
        }

        for cell in &cells {
            let area = polygon_area(cell);
            if area <= 1e-14 {
                continue;
            }
            let centroid = {
                let mut c = [0.0, 0.0];
                for p in cell {
                    c[0] += p[0];
                    c[1] += p[1];
                }
                [c[0] / cell.len() as f64, c[1] / cell.len() as f64]
            };
            // Every line under the cell constrains the first point when
            // seen across the origin; the binned component is below the
            // whole bin by construction, so it is always among them.
            let under: Vec<Line> = own_lines
                .iter()
                .filter(|g| g.height(centroid[0]) < centroid[1])
                .map(|g| Line {
                    slope: -g.slope,
                    intercept: g.intercept,
                })
                .collect();
            debug_assert!(!under.is_empty());
            let constraint =
                envelope_of_lines(&under, (0.0, 1.0)).expect("cell has lines under it");
            let c_area = integrate_min_envelopes(other, Some(&constraint), cap, 0.0, 1.0);
            sum += area * c_area;
        }
    }
    sum
}

/// Clip a convex polygon to the half-plane below (or on) a line.
pub(crate) fn clip_below_line(poly: &[[f64; 2]], line: &Line) -> Vec<[f64; 2]> {
    let mut out = Vec::with_capacity(poly.len() + 1);
    let n = poly.len();
    if n == 0 {
        return out;
    }
    let dist = |p: [f64; 2]| line.height(p[0]) - p[1]; // ≥ 0 inside
    for i in 0..n {
        let s = poly[i];
        let e = poly[(i + 1) % n];
        let ds = dist(s);
        let de = dist(e);
        let s_in = ds >= 0.0;
        let e_in = de >= 0.0;
        if s_in != e_in {
            let t = ds / (ds - de);
            out.push([s[0] + t * (e[0] - s[0]), s[1] + t * (e[1] - s[1])]);
        }
        if e_in {
            out.push(e);
        }
    }
    out
}

pub(crate) fn polygon_area(poly: &[[f64; 2]]) -> f64 {
    if poly.len() < 3 {
        return 0.0;
    }
    let mut twice = 0.0;
    for i in 0..poly.len() {
        let [x1, y1] = poly[i];
        let [x2, y2] = poly[(i + 1) % poly.len()];
        twice += x1 * y2 - x2 * y1;
    }
    0.5 * twice.abs()
}
