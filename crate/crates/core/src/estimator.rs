//! Numerical upper bounds on the nonlocality constant.
//!
//! The constant is an infimum of `δ / info_gain` over product operators, so
//! every evaluated pair gives an upper bound. [`estimate_eta`] samples pairs,
//! refines the best ones with Nelder–Mead, and tracks the smallest ratio seen
//! anywhere so it can be compared with a rigidity certificate.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::bases::ProductBasis;
use crate::bounds::certify_basis;
use crate::matkernel::{ginibre, psd_sqrt, ComplexMatrix, PsdOperator, C64};
use crate::measures::{nonlocality_ratio, MeasurementPair};
use crate::optim::NelderMead;
use crate::rng::{derive_seed, trial_rng, GENERATOR_ID};

/// Slack allowed below a certified lower bound before it counts as violated.
pub const CERTIFICATE_SLACK: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimatorError {
    #[error("budget must be at least one sample")]
    EmptyBudget,
    #[error("every sampled pair left the ratio undefined")]
    AllUndefined,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EstimatorConfig {
    /// Local refinements; `None` means one per hundred samples.
    pub restarts: Option<usize>,
    pub max_iter: usize,
    /// Stabilizers of the analytic construction added to the sample set.
    pub eps_list: Vec<f64>,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self { restarts: None, max_iter: 500, eps_list: vec![1e-4, 1e-5, 1e-6] }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct EtaEstimate {
    pub basis_id: String,
    pub samples: usize,
    pub best_ratio: f64,
    pub best_pair: MeasurementPair,
    pub certified_lower: Option<f64>,
    pub seed: u64,
    pub generator: &'static str,
    /// `(cumulative refinement iterations, best ratio so far)`.
    pub refinement_trace: Vec<(usize, f64)>,
    /// Ratio evaluations across sampling and refinement.
    pub evaluations: usize,
    pub undefined_samples: usize,
    /// Smallest defined ratio at any evaluated point.
    pub min_evaluated_ratio: f64,
    /// Evaluated points below `certified_lower - 1e-9`.
    pub certificate_violations: usize,
    pub config: EstimatorConfig,
}

/// `a = |α_i><α_i| + εI`, `b = |β_i><β_i| + εI`.
pub fn upper_bound_construction(s: &ProductBasis, i: usize, eps: f64) -> MeasurementPair {
    let st = s.state(i);
    MeasurementPair::new(
        PsdOperator::projector(&st.alice).scaled_plus_identity(1.0, eps),
        PsdOperator::projector(&st.bob).scaled_plus_identity(1.0, eps),
    )
}

/// Real coordinates of a pair of factors `(A, B)`.
pub(crate) fn pack(a: &ComplexMatrix, b: &ComplexMatrix) -> Vec<f64> {
    a.entries().iter().chain(b.entries()).flat_map(|z| [z.re, z.im]).collect()
}

pub(crate) fn unpack(x: &[f64], da: usize, db: usize) -> MeasurementPair {
    let z: Vec<C64> = x.chunks(2).map(|p| C64::new(p[0], p[1])).collect();
    let (za, zb) = z.split_at(da * da);
    let fa = ComplexMatrix::from_row_major(da, da, za.to_vec()).expect("sized");
    let fb = ComplexMatrix::from_row_major(db, db, zb.to_vec()).expect("sized");
    MeasurementPair::new(PsdOperator::from_factor(&fa).normalized(), PsdOperator::from_factor(&fb).normalized())
}

struct Candidate {
    ratio: Option<f64>,
    factors: Vec<f64>,
}

fn raw_sample(s: &ProductBasis, seed: u64, index: u64) -> Candidate {
    let mut rng = trial_rng(seed, index);
    let fa = ginibre(s.da(), s.da(), &mut rng);
    let fb = ginibre(s.db(), s.db(), &mut rng);
    let x = pack(&fa, &fb);
    let ratio = nonlocality_ratio(s, &unpack(&x, s.da(), s.db())).expect("dimensions match");
    Candidate { ratio, factors: x }
}

fn construction_sample(s: &ProductBasis, i: usize, eps: f64) -> Candidate {
    let m = upper_bound_construction(s, i, eps);
    let x = pack(psd_sqrt(&m.a).matrix(), psd_sqrt(&m.b).matrix());
    let ratio = nonlocality_ratio(s, &unpack(&x, s.da(), s.db())).expect("dimensions match");
    Candidate { ratio, factors: x }
}

struct Refinement {
    best: f64,
    x: Vec<f64>,
    iterations: usize,
    evaluations: usize,
    min_seen: f64,
    below: usize,
}

fn refine(s: &ProductBasis, x0: &[f64], max_iter: usize, floor: Option<f64>) -> Refinement {
    let (da, db) = (s.da(), s.db());
    let mut min_seen = f64::INFINITY;
    let mut below = 0;
    let nm = NelderMead { max_iter, ..Default::default() };
    let result = nm.minimize(
        |x| match nonlocality_ratio(s, &unpack(x, da, db)).expect("dimensions match") {
            Some(r) => {
                min_seen = min_seen.min(r);
                if floor.is_some_and(|f| r < f - CERTIFICATE_SLACK) {
                    below += 1;
                }
                r
            }
            None => f64::INFINITY,
        },
        x0,
    );
    Refinement { best: result.fx, x: result.x, iterations: result.iterations, evaluations: result.evaluations, min_seen, below }
}

/// Brackets the nonlocality constant of `s` from above; deterministic given
/// `seed` regardless of thread count.
pub fn estimate_eta(s: &ProductBasis, budget: usize, seed: u64, config: &EstimatorConfig) -> Result<EtaEstimate, EstimatorError> {
    if budget == 0 {
        return Err(EstimatorError::EmptyBudget);
    }
    let certified_lower = certify_basis(s).ok().map(|r| r.eta_lower);
    let sample_seed = derive_seed(seed, u64::MAX);
    let mut pool: Vec<Candidate> = (0..budget as u64).into_par_iter().map(|i| raw_sample(s, sample_seed, i)).collect();
    for &eps in &config.eps_list {
        for i in 0..s.n() {
            pool.push(construction_sample(s, i, eps));
        }
    }
    let evaluations = pool.len();
    let undefined_samples = pool.iter().filter(|c| c.ratio.is_none()).count();
    let mut defined: Vec<(f64, usize)> = pool.iter().enumerate().filter_map(|(k, c)| c.ratio.map(|r| (r, k))).collect();
    if defined.is_empty() {
        return Err(EstimatorError::AllUndefined);
    }
    defined.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let below = |r: f64| certified_lower.is_some_and(|f| r < f - CERTIFICATE_SLACK);
    let mut violations = defined.iter().filter(|(r, _)| below(*r)).count();
    let mut min_evaluated = defined[0].0;

    let restarts = config.restarts.unwrap_or(budget / 100).max(1).min(defined.len());
    let runs: Vec<Refinement> = defined[..restarts]
        .par_iter()
        .map(|&(_, k)| refine(s, &pool[k].factors, config.max_iter, certified_lower))
        .collect();

    let (mut best, mut best_x) = (defined[0].0, pool[defined[0].1].factors.clone());
    let mut trace = vec![(0, best)];
    let mut iterations = 0;
    let mut total_evals = evaluations;
    for run in runs {
        iterations += run.iterations;
        total_evals += run.evaluations;
        violations += run.below;
        min_evaluated = min_evaluated.min(run.min_seen);
        if run.best < best {
            best = run.best;
            best_x = run.x;
        }
        trace.push((iterations, best));
    }
    Ok(EtaEstimate {
        basis_id: s.name().to_string(),
        samples: budget,
        best_ratio: best,
        best_pair: unpack(&best_x, s.da(), s.db()),
        certified_lower,
        seed,
        generator: GENERATOR_ID,
        refinement_trace: trace,
        evaluations: total_evals,
        undefined_samples,
        min_evaluated_ratio: min_evaluated,
        certificate_violations: violations,
        config: config.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bases::{domino_basis, rotated_domino_basis, standard_basis};
    use crate::measures::{info_gain, nonlocality_ratio};

    #[test]
    fn construction_matches_closed_form_gain() {
        let s = domino_basis();
        for eps in [1e-2, 1e-4, 1e-6] {
            for i in 0..9 {
                let m = upper_bound_construction(&s, i, eps);
                assert!((m.a.trace() - (1.0 + 3.0 * eps)).abs() < 1e-14);
                let closed = (1.0 + eps).powi(2) / ((1.0 + 3.0 * eps) * (1.0 + 3.0 * eps)) - 1.0 / 9.0;
                assert!((info_gain(&s, &m).unwrap() - closed).abs() < 1e-12);
            }
        }
        let tiny = upper_bound_construction(&s, 0, 1e-12);
        assert!((info_gain(&s, &tiny).unwrap() - 8.0 / 9.0).abs() < 1e-9);
        let r = nonlocality_ratio(&s, &upper_bound_construction(&s, 1, 1e-6)).unwrap().unwrap();
        assert!(r <= 9.0 / 8.0 + 0.01, "{r}");
    }

    #[test]
    fn factor_round_trip() {
        let m = upper_bound_construction(&domino_basis(), 3, 1e-3);
        let x = pack(psd_sqrt(&m.a).matrix(), psd_sqrt(&m.b).matrix());
        let back = unpack(&x, 3, 3);
        let diff = &back.a.matrix().scale(m.a.trace()) - m.a.matrix();
        assert!(diff.max_abs_entry() < 1e-12);
    }

    #[test]
    fn domino_estimate_is_bracketed() {
        let est = estimate_eta(&domino_basis(), 2000, 3, &EstimatorConfig::default()).unwrap();
        assert_eq!(est.certified_lower, Some(0.125));
        assert!(est.best_ratio >= 0.125 - 1e-9 && est.best_ratio <= 1.125 + 0.01, "{}", est.best_ratio);
        assert!(est.min_evaluated_ratio >= 0.125 - 1e-9);
        assert_eq!(est.certificate_violations, 0);
        assert!(est.refinement_trace.windows(2).all(|w| w[1].1 <= w[0].1));
        assert_eq!(est.refinement_trace.len(), 21);
    }

    #[test]
    fn standard_basis_ratio_vanishes() {
        let est = estimate_eta(&standard_basis(3, 3), 200, 1, &EstimatorConfig::default()).unwrap();
        assert!(est.best_ratio < 1e-9, "{}", est.best_ratio);
        assert_eq!(est.certified_lower, None);
    }

    #[test]
    fn single_sample_is_reproducible() {
        let cfg = EstimatorConfig { restarts: Some(1), max_iter: 0, eps_list: vec![] };
        let s = rotated_domino_basis([0.3; 4]).unwrap();
        let a = estimate_eta(&s, 1, 99, &cfg).unwrap();
        let b = estimate_eta(&s, 1, 99, &cfg).unwrap();
        assert_eq!(a.best_ratio, b.best_ratio);
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        assert_eq!(estimate_eta(&s, 0, 1, &cfg).unwrap_err(), EstimatorError::EmptyBudget);
    }

    #[test]
    fn construction_points_cap_ratio() {
        // with the analytic points included, any complete orthonormal product
        // basis stays below n/(n-1) + 0.01
        let cfg = EstimatorConfig { restarts: Some(1), max_iter: 20, ..Default::default() };
        for s in [domino_basis(), rotated_domino_basis([0.1, 0.2, 0.3, 0.4]).unwrap(), standard_basis(2, 3)] {
            let n = s.n() as f64;
            let est = estimate_eta(&s, 10, 5, &cfg).unwrap();
            assert!(est.best_ratio <= n / (n - 1.0) + 0.01);
            assert!(est.best_ratio <= 2.0 + 1e-6);
        }
    }
}
