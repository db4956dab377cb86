//! One pass/fail line per acceptance criterion, written straight to stderr so
//! it shows without `--nocapture`.

use std::f64::consts::PI;
use std::io::Write;
use std::time::Instant;

use nonlocality::bases::{domino_basis, domino_type_basis, standard_basis};
use nonlocality::bounds::{
    appendix_constant, appendix_constant_min, appendix_s_star_closed_form, domino_report, domino_type_report, helstrom_error,
    rotated_constant, rotated_constants, stopping_argmax_on_grid,
};
use nonlocality::estimator::{estimate_eta, upper_bound_construction, EstimatorConfig};
use nonlocality::loccsim::{
    evaluate_error, interpolate, max_distribution_shift, measure_and_guess, one_round_projective, stage_one_frontier, Decision,
    Party,
};
use nonlocality::matkernel::PsdOperator;
use nonlocality::rng::{derive_seed, DEFAULT_SEED};
use nonlocality::tiling::{parse_tiling, CYCLIC_4X4_LAYOUT};
use nonlocality::verify::{
    adversarial_rigidity, check_dimbox_rigidity, check_domino_rigidity, check_kkb_conditions, check_pair_of_tiles,
    check_rotated_chain, check_uv_lemma, KkbCandidate, LemmaSuiteResult,
};
use num_complex::Complex64 as C64;

const TRIALS: usize = 10_000;

fn report(n: u32, pass: bool, start: Instant, detail: String) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let line = format!("criterion {n}: {verdict} ({:.2}s) {detail}\n", start.elapsed().as_secs_f64());
    std::io::stderr().write_all(line.as_bytes()).unwrap();
    assert!(pass, "criterion {n} failed: {detail}");
}

fn within(x: f64, lo: f64, hi: f64) -> bool {
    (lo..=hi).contains(&x)
}

#[test]
fn criterion_1_table_rows() {
    let t = Instant::now();
    let d = domino_report();
    let r = rotated_constants(PI / 4.0).unwrap();
    let dt = domino_type_report(2, 4, 4).unwrap();
    let want_dt = 1.0 / (216.0 * 4.0 * 16f64.powi(5));
    let checks = [
        d.c == 4.0,
        (d.eta_lower - 0.125).abs() < 1e-15,
        (d.p_error_lower - 1.96014e-8).abs() <= 1e-12,
        within(r.p_error_lower, 2.40e-11, 2.42e-11),
        within(r.c, 113.50, 114.00),
        within(r.c_tight.unwrap(), 113.50, 114.00),
        ((dt.p_error_lower - want_dt) / want_dt).abs() <= 1e-18,
    ];
    report(
        1,
        checks.iter().all(|&b| b),
        t,
        format!(
            "domino c={} eta={} p={:.6e}; rotated c={} (exact {:.6}) p={:.4e}; domino-type p={:.6e} vs {:.6e}",
            d.c,
            d.eta_lower,
            d.p_error_lower,
            r.c,
            r.c_tight.unwrap(),
            r.p_error_lower,
            dt.p_error_lower,
            want_dt
        ),
    );
}

#[test]
fn criterion_2_appendix_minimum() {
    let t = Instant::now();
    let m = appendix_constant_min();
    let s_star = appendix_s_star_closed_form();
    let c_closed = rotated_constant();
    let pass = (m.s_star - s_star).abs() <= 1e-6
        && (m.c - c_closed).abs() <= 1e-6
        && (appendix_constant(s_star) - c_closed).abs() <= 1e-6;
    report(2, pass, t, format!("s*={:.9} (closed {:.9}), C(s*)={:.9} (closed {:.9})", m.s_star, s_star, m.c, c_closed));
}

fn suite_line(r: &LemmaSuiteResult) -> String {
    let params: Vec<String> = r.parameters.iter().map(|(k, v)| format!("{k}={v:.4}")).collect();
    format!("{}[{}] v={}", r.lemma_id, params.join(","), r.violations)
}

#[test]
fn criterion_3_lemma_suites() {
    let t = Instant::now();
    let mut results = Vec::new();
    let mut k = 0;
    let mut next = || {
        k += 1;
        derive_seed(DEFAULT_SEED, k)
    };
    for m in 1..=4 {
        for n in 1..=4 {
            results.push(check_uv_lemma(m, n, TRIALS, next()).unwrap());
        }
    }
    results.push(check_pair_of_tiles(&domino_basis(), TRIALS, next()).unwrap());
    results.push(check_domino_rigidity(TRIALS, next()));
    let cyclic = parse_tiling(CYCLIC_4X4_LAYOUT).unwrap();
    results.push(check_dimbox_rigidity(&cyclic, TRIALS, next()).unwrap());
    for theta in [PI / 4.0, PI / 8.0, PI / 12.0] {
        results.push(check_rotated_chain(theta, TRIALS, next()).unwrap());
    }
    let total: usize = results.iter().map(|r| r.violations).sum();
    let all_trials = results.iter().all(|r| r.trials == TRIALS);
    let failing: Vec<String> = results.iter().filter(|r| !r.passed()).map(suite_line).collect();
    let min_hit = results.iter().filter_map(|r| r.hypothesis_hit_rate).fold(1.0f64, f64::min);
    report(
        3,
        total == 0 && all_trials,
        t,
        format!("{} suites x {TRIALS} trials, {total} violations, min hypothesis hit rate {min_hit:.3} {failing:?}", results.len()),
    );
}

#[test]
fn criterion_4_ratio_bracket() {
    let t = Instant::now();
    let s = domino_basis();
    let est = estimate_eta(&s, 100_000, DEFAULT_SEED, &EstimatorConfig::default()).unwrap();
    let adv = adversarial_rigidity(&s, 4.0, 2_000, 16, 1_000, derive_seed(DEFAULT_SEED, 4));
    let pass = within(est.best_ratio, 0.125 - 1e-9, 1.125 + 0.01)
        && est.min_evaluated_ratio >= 0.125 - 1e-9
        && est.certificate_violations == 0
        && adv.passed();
    report(
        4,
        pass,
        t,
        format!(
            "best_ratio={:.9} min_evaluated={:.9} evaluations={} certificate_violations={} adversarial min margin={:.3e}",
            est.best_ratio, est.min_evaluated_ratio, est.evaluations, est.certificate_violations, adv.min_margin
        ),
    );
}

#[test]
fn criterion_5_optimal_epsilon() {
    let t = Instant::now();
    let step = 1e-6;
    let mut worst = 0.0f64;
    for n in [2usize, 3, 9, 16] {
        let arg = stopping_argmax_on_grid(n, 0.125, step);
        let want = (2.0 / 3.0) / (n * (n - 1)) as f64;
        worst = worst.max((arg - want).abs());
    }
    report(5, worst <= step, t, format!("worst |argmax - 2/(3n(n-1))| = {worst:.3e} for n in {{2, 3, 9, 16}}"));
}

#[test]
fn criterion_6_simulator() {
    let t = Instant::now();
    let s = domino_basis();
    let baseline = measure_and_guess(&s);
    let p_map = evaluate_error(&baseline, &s, &Decision::Map).unwrap();
    let p_labels = evaluate_error(&baseline, &s, &Decision::LeafLabels).unwrap();

    let eps = 1.0 / 108.0;
    let target = 1.0 / 9.0 + eps;
    let p = one_round_projective(3, 3, Party::Alice);
    let q = interpolate(&p, &s, eps).unwrap();
    let frontier = stage_one_frontier(&q, &s, eps).unwrap();
    let worst_hit = frontier.nodes.iter().map(|n| (n.p_max - target).abs()).fold(0.0f64, f64::max);
    let every_branch_crosses = !frontier.nodes.is_empty() && frontier.nodes.iter().all(|n| !n.is_leaf_case);
    let tv = max_distribution_shift(&p, &q, &s).unwrap();
    let pass = (p_map - 4.0 / 9.0).abs() <= 1e-12
        && (p_labels - 4.0 / 9.0).abs() <= 1e-12
        && q.validate().valid
        && every_branch_crosses
        && worst_hit <= 1e-9
        && tv <= 1e-9;
    report(
        6,
        pass,
        t,
        format!(
            "baseline p_error={p_map:.15} ; interpolated branches={} worst |p_max - target|={worst_hit:.3e} max TV={tv:.3e}",
            frontier.nodes.len()
        ),
    );
}

#[test]
fn criterion_7_helstrom_grid() {
    let t = Instant::now();
    let k = 1000;
    let mut violations = 0usize;
    let mut points = 0usize;
    for i in 0..k {
        let q0 = i as f64 / (k - 1) as f64;
        for j in 0..k {
            let delta = j as f64 / (k - 1) as f64;
            let h = helstrom_error(q0, 1.0 - q0, delta).unwrap();
            points += 1;
            if h.exact < h.relaxation {
                violations += 1;
            }
        }
    }
    report(7, violations == 0 && points == 1_000_000, t, format!("{points} grid points, {violations} violations"));
}

#[test]
fn criterion_8_kkb_candidates() {
    let t = Instant::now();
    let std9 = standard_basis(3, 3);
    let uniform = KkbCandidate::new(PsdOperator::identity(3).scale(1.0 / 9.0), PsdOperator::identity(3), 1.0 / 9.0);
    let mut e0 = vec![C64::new(0.0, 0.0); 3];
    e0[0] = C64::new(1.0, 0.0);
    let corner = KkbCandidate::normalized_for(&std9, PsdOperator::projector(&e0), PsdOperator::projector(&e0)).unwrap();
    let r_uniform = check_kkb_conditions(&std9, &uniform).unwrap();
    let r_corner = check_kkb_conditions(&std9, &corner).unwrap();

    let dom = domino_basis();
    let m = upper_bound_construction(&dom, 0, 1e-6);
    let cand = KkbCandidate::normalized_for(&dom, m.a, m.b).unwrap();
    let r_dom = check_kkb_conditions(&dom, &cand).unwrap();
    let worst_any_state = (0..dom.n())
        .map(|i| {
            let m = upper_bound_construction(&dom, i, 1e-6);
            let c = KkbCandidate::normalized_for(&dom, m.a, m.b).unwrap();
            check_kkb_conditions(&dom, &c).unwrap().worst_cross_term
        })
        .fold(0.0f64, f64::max);

    let pass = r_uniform.all_hold
        && r_corner.all_hold
        && (r_corner.chi - 1.0).abs() < 1e-12
        && !r_dom.orthogonality_holds
        && r_dom.worst_cross_term > 1e-6;
    report(
        8,
        pass,
        t,
        format!(
            "standard uniform all_hold={} ; standard corner all_hold={} ; domino construction orthogonality_holds={} worst cross-term={:.3e} at {:?} (max over all centre states {:.3e})",
            r_uniform.all_hold,
            r_corner.all_hold,
            r_dom.orthogonality_holds,
            r_dom.worst_cross_term,
            r_dom.worst_pair,
            worst_any_state
        ),
    );
}

#[test]
fn domino_type_basis_on_the_cyclic_layout_is_certified() {
    let cyclic = parse_tiling(CYCLIC_4X4_LAYOUT).unwrap();
    let b = domino_type_basis(&cyclic, None).unwrap();
    assert_eq!(b.n(), 16);
    assert!(b.orthonormality_defect() < 1e-12);
}
