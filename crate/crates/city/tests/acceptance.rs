//! Acceptance suite: the exit criteria of the estimator, each run at its
//! stated scale and tolerance, one pass/fail line per criterion.

use std::sync::LazyLock;

use poissonian_city::estimator::{
    l1_error_bound, run_flow_replicates, sample_total_flow, sample_total_flow_parts, FlowEstimate,
};
use poissonian_city::oracle::{box_volume_two_ways, box_volume_with_lines};
use poissonian_city::rng::RngStream;
use poissonian_city::seminal::{step_reverse_from_draws, CurveVertex, draw_initial_state};
use poissonian_city::stats::RunningStats;
use poissonian_city::validation::{
    decay_check, ks_rayleigh, martingale_check, moment_unit_checks, MarginalSource, DEFAULT_SEED,
};

const SQRT_PI: f64 = 1.7724538509055159;

fn report(criterion: &str, passed: bool, detail: &str) {
    println!(
        "ACCEPTANCE {criterion}: {} ({detail})",
        if passed { "PASS" } else { "FAIL" }
    );
    assert!(passed, "{criterion}: {detail}");
}

/// The flow batch shared by criteria 1 and 8: N = 20, eps = 1e-4, 10⁵
/// replicates.
static FLOW_BATCH: LazyLock<Vec<FlowEstimate>> = LazyLock::new(|| {
    run_flow_replicates(DEFAULT_SEED, 100_000, 20, 1e-4).expect("stop rules are a.s. finite")
});

#[test]
fn criterion_1_mean_central_flow() {
    let stats: RunningStats = FLOW_BATCH.iter().map(|e| e.value).collect();
    let band = 3.0 * stats.std_error() + 1e-4 + l1_error_bound(20);
    let deviation = (stats.mean() - 2.0).abs();
    report(
        "1 mean central flow",
        deviation <= band,
        &format!(
            "mean {:.5} vs 2 within {:.5} (se {:.5})",
            stats.mean(),
            band,
            stats.std_error()
        ),
    );
}

#[test]
fn criterion_2_marginal_law_both_generators() {
    let mut all = true;
    let mut details = Vec::new();
    for source in [MarginalSource::Dynamics, MarginalSource::OracleEnvelope] {
        for s in [1.0, 0.5, 0.25] {
            let r = ks_rayleigh(DEFAULT_SEED, source, s, 10_000);
            all &= r.passed;
            details.push(format!("{} D={:.4}/{:.4}", r.name, r.statistic, r.threshold));
        }
    }
    report("2 marginal law", all, &details.join("; "));
}

#[test]
fn criterion_3_perpetuity_and_martingale() {
    // Pathwise identities on every step of 10⁴ audited replicates: the
    // intercept recursion exactly as generated, and junction continuity of
    // adjacent tangents to 1e-12 relative.
    let mut worst_junction: f64 = 0.0;
    let mut exact = true;
    for i in 0..10_000u64 {
        let mut stream = RngStream::keyed(DEFAULT_SEED, i, 901);
        let mut v = draw_initial_state(&mut stream);
        for _ in 0..12 {
            let e = stream.exponential1();
            let u = stream.uniform01();
            let next = step_reverse_from_draws(&v, e, u);
            exact &= next.intercept == v.intercept * (1.0 - u.sqrt());
            let lhs = v.intercept + next.s * v.slope;
            let rhs = next.intercept + next.s * next.slope;
            worst_junction = worst_junction.max((lhs - rhs).abs() / lhs.abs().max(rhs.abs()));
            v = next;
        }
    }
    let martingale = martingale_check(DEFAULT_SEED, 10, 10_000);
    let passed = exact && worst_junction <= 1e-12 && martingale.passed;
    report(
        "3 perpetuity/martingale",
        passed,
        &format!(
            "pathwise exact: {exact}, worst junction {:.2e}, martingale max |z| {:.2}",
            worst_junction, martingale.statistic
        ),
    );
}

#[test]
fn criterion_4_decay_bound() {
    let mut all = true;
    let mut details = Vec::new();
    for n in [4usize, 8] {
        let r = decay_check(DEFAULT_SEED, n, 10_000);
        all &= r.passed;
        details.push(format!("n={n}: z={:.2}", r.statistic));
    }
    report("4 decay bound", all, &details.join("; "));
}

#[test]
fn criterion_5_truncation_error_realized() {
    // Shared-stream comparison: the same four curve realizations (and the
    // same pair draws) estimated at N = 5 and N = 25, so the difference
    // isolates the discarded tail.
    let eps = 1e-4;
    let mut diffs = RunningStats::new();
    for replicate in 0..10_000u64 {
        let shallow = sample_total_flow(DEFAULT_SEED, replicate, 5, eps).unwrap();
        let deep = sample_total_flow(DEFAULT_SEED, replicate, 25, eps).unwrap();
        diffs.push((deep.value - shallow.value).abs());
    }
    let bound = l1_error_bound(5) + 2.0 * eps;
    report(
        "5 truncation error realized",
        diffs.mean() <= bound,
        &format!("mean |N25 - N5| = {:.5} vs bound {:.5}", diffs.mean(), bound),
    );
}

#[test]
fn criterion_6_oracle_equivalence() {
    // Exact agreement on the empty realization.
    let mut stream = RngStream::keyed(DEFAULT_SEED, 0, 902);
    let empty = box_volume_with_lines(&mut stream, &[], 3.0, 1000, 200).unwrap();
    let exact = empty.mc == 9.0 && empty.quad == 9.0;

    // 20 independent realizations at the stated scale.
    let mut worst: f64 = 0.0;
    let mut all = exact;
    for r in 0..20u64 {
        let mut stream = RngStream::keyed(DEFAULT_SEED, r, 903);
        let v = box_volume_two_ways(&mut stream, 3.0, 100_000, 200).unwrap();
        let band = 3.0 * v.mc_se + v.quad_error_bound;
        let gap = (v.mc - v.quad).abs();
        worst = worst.max(gap / band);
        all &= gap <= band;
    }
    report(
        "6 oracle equivalence",
        all,
        &format!("empty case exact: {exact}, worst |mc-quad|/band = {worst:.3}"),
    );
}

#[test]
fn criterion_7_moment_unit_checks() {
    let reports = moment_unit_checks(DEFAULT_SEED);
    let all = reports.iter().all(|r| r.passed);
    let worst = reports
        .iter()
        .map(|r| r.statistic / r.threshold.max(1e-300))
        .fold(0.0f64, f64::max);
    report(
        "7 moment unit checks",
        all,
        &format!("{} checks, worst statistic/threshold = {worst:.3}", reports.len()),
    );
}

#[test]
fn criterion_8_product_term_mean() {
    let stats: RunningStats = FLOW_BATCH.iter().map(|e| e.product_term).collect();
    let target = 4.0 * std::f64::consts::PI / 9.0;
    let band = 3.0 * stats.std_error() + 1e-4;
    let deviation = (stats.mean() - target).abs();
    report(
        "8 product-of-integrals mean",
        deviation <= band,
        &format!("mean {:.5} vs {target:.5} within {band:.5}", stats.mean()),
    );
}

/// Supporting diagnostics stated alongside the criteria: the two half-plane
/// estimates are uncorrelated, the estimator value dominates the product
/// lower bound per replicate, and the per-depth term means respect the tail
/// estimate `5/σ₀·((2/7)Yₙ + (1/27)Yₙ³/Sₙ)`.
#[test]
fn supporting_invariants() {
    // Correlation of the upper and lower half-plane estimates.
    let n = 100_000u64;
    let (mut sx, mut sy, mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for replicate in 0..n {
        let (upper, lower) =
            sample_total_flow_parts(DEFAULT_SEED, replicate, 6, 1e-3).unwrap();
        let (x, y) = (upper.value, lower.value);
        sx += x;
        sy += y;
        sxy += x * y;
        sxx += x * x;
        syy += y * y;
    }
    let nf = n as f64;
    let cov = sxy / nf - (sx / nf) * (sy / nf);
    let corr = cov / ((sxx / nf - (sx / nf).powi(2)) * (syy / nf - (sy / nf).powi(2))).sqrt();
    assert!(corr.abs() <= 0.01, "half-plane correlation {corr}");

    // Term decay against the per-replicate tail estimate at n ∈ {5, 10}.
    for check_n in [5usize, 10] {
        let mut diffs = RunningStats::new();
        for replicate in 0..10_000u64 {
            let est = sample_total_flow(DEFAULT_SEED, replicate, check_n, 1e-4).unwrap();
            let term = est.terms[check_n];
            // The tail estimate uses the state of each curve at this depth.
            let bound_for = |tag_minus, tag_plus| {
                let (mut minus, mut plus) = poissonian_city::estimator::draw_half_plane(
                    DEFAULT_SEED,
                    replicate,
                    tag_minus,
                    tag_plus,
                );
                let side = |real: &mut poissonian_city::seminal::CurveRealization| {
                    real.extend_until(|v| v.index >= check_n).unwrap();
                    let v: CurveVertex = real.curve.vertices()[check_n];
                    let sigma0 = real.curve.vertices()[0].slope;
                    5.0 / sigma0
                        * (2.0 / 7.0 * v.intercept + 1.0 / 27.0 * v.intercept.powi(3) / v.s)
                };
                (side(&mut plus), side(&mut minus))
            };
            let (bp_u, bm_u) = bound_for(
                poissonian_city::estimator::stream_tag::UPPER_MINUS,
                poissonian_city::estimator::stream_tag::UPPER_PLUS,
            );
            let (bp_l, bm_l) = bound_for(
                poissonian_city::estimator::stream_tag::LOWER_MINUS,
                poissonian_city::estimator::stream_tag::LOWER_PLUS,
            );
            // The estimate averages the two half-planes, so compare against
            // the averaged bounds side by side.
            diffs.push(term.plus - 0.5 * (bp_u + bp_l));
            diffs.push(term.minus - 0.5 * (bm_u + bm_l));
        }
        assert!(
            diffs.mean() <= 3.0 * diffs.std_error(),
            "term {check_n} exceeds its tail estimate: mean diff {} (se {})",
            diffs.mean(),
            diffs.std_error()
        );
    }

    // Martingale-side sanity already covered by criterion 3; here pin the
    // initial-intercept mean the tail estimate leans on.
    let mut y0 = RunningStats::new();
    for i in 0..200_000u64 {
        let mut stream = RngStream::keyed(DEFAULT_SEED, i, 904);
        y0.push(draw_initial_state(&mut stream).intercept);
    }
    assert!((y0.mean() - SQRT_PI / 2.0).abs() <= 3.0 * y0.std_error() + 1e-3);
}
