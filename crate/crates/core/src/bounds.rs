//! Closed-form error bounds and the rigidity constants behind them.

use serde::{Serialize, Serializer};
use std::f64::consts::SQRT_2;
use thiserror::Error;

use crate::bases::{domino_basis, domino_type_basis, induced_tiling, rotated_domino_basis, ProductBasis};
use crate::tiling::{analyze, Diameter};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoundError {
    #[error("priors must be probabilities summing to one, got ({q0}, {q1})")]
    Priors { q0: f64, q1: f64 },
    #[error("overlap {0} is outside [0, 1]")]
    Overlap(f64),
    #[error("need at least two states, got {0}")]
    TooFewStates(usize),
    #[error("{name} must be positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("angle {0} gives a vanishing bound")]
    DegenerateAngle(f64),
    #[error("no rigidity certificate applies to this basis: {0}")]
    NoCertificate(String),
}

/// Minimum error for two pure states, with its quadratic relaxation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Helstrom {
    pub exact: f64,
    pub relaxation: f64,
}

pub fn helstrom_error(q0: f64, q1: f64, delta: f64) -> Result<Helstrom, BoundError> {
    let prob = |q: f64| (0.0..=1.0).contains(&q);
    if !prob(q0) || !prob(q1) || (q0 + q1 - 1.0).abs() > 1e-12 {
        return Err(BoundError::Priors { q0, q1 });
    }
    if !(0.0..=1.0).contains(&delta) {
        return Err(BoundError::Overlap(delta));
    }
    let relaxation = q0 * q1 * delta * delta;
    // (1 - √(1 - 4r)) / 2 without cancellation at small r
    let exact = 2.0 * relaxation / (1.0 + (1.0 - 4.0 * relaxation).max(0.0).sqrt());
    Ok(Helstrom { exact, relaxation })
}

/// Stopping threshold that maximizes the bound of [`perror_from_eta`].
pub fn optimal_epsilon(n: usize) -> f64 {
    let n = n as f64;
    (2.0 / 3.0) / (n * (n - 1.0))
}

/// `½ (1/n − (n−1)ε) (ηε)²`, the error guaranteed when stopping at `ε`.
pub fn stopping_objective(eps: f64, n: usize, eta: f64) -> f64 {
    let nf = n as f64;
    0.5 * (1.0 / nf - (nf - 1.0) * eps) * (eta * eps).powi(2)
}

/// Grid argmax of [`stopping_objective`] over `(0, 1/(n(n−1)))`.
pub fn stopping_argmax_on_grid(n: usize, eta: f64, step: f64) -> f64 {
    let upper = 1.0 / ((n * (n - 1)) as f64);
    let steps = (upper / step).floor() as usize;
    let mut best = (0.0, f64::NEG_INFINITY);
    for k in 1..steps {
        let eps = k as f64 * step;
        let v = stopping_objective(eps, n, eta);
        if v > best.1 {
            best = (eps, v);
        }
    }
    best.0
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EtaBound {
    pub p_error: f64,
    pub epsilon: f64,
}

/// `p_error ≥ (2/27) η² / n⁵`.
pub fn perror_from_eta(eta: f64, n: usize) -> Result<EtaBound, BoundError> {
    if n < 2 {
        return Err(BoundError::TooFewStates(n));
    }
    if eta.is_nan() || eta < 0.0 {
        return Err(BoundError::NonPositive { name: "eta", value: eta });
    }
    let p_error = (2.0 / 27.0) * eta * eta / (n as f64).powi(5);
    Ok(EtaBound { p_error, epsilon: optimal_epsilon(n) })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Domino,
    DominoType,
    RotatedDomino,
    Custom,
}

/// Rounds to twelve significant digits for reports.
pub fn sig12(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.11e}").parse().expect("formatted float parses")
}

fn ser_sig12<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_f64(sig12(*x))
}

fn ser_opt_sig12<S: Serializer>(x: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
    match x {
        Some(v) => s.serialize_some(&sig12(*v)),
        None => s.serialize_none(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundReport {
    pub family: Family,
    pub n: usize,
    #[serde(rename = "L")]
    pub l: usize,
    #[serde(serialize_with = "ser_sig12")]
    pub c: f64,
    #[serde(rename = "D")]
    pub d: Option<usize>,
    #[serde(serialize_with = "ser_opt_sig12")]
    pub theta: Option<f64>,
    #[serde(serialize_with = "ser_sig12")]
    pub eta_lower: f64,
    #[serde(serialize_with = "ser_sig12")]
    pub p_error_lower: f64,
    #[serde(serialize_with = "ser_sig12")]
    pub epsilon: f64,
    /// Same chain with the exact rotated constant instead of its ceiling.
    #[serde(serialize_with = "ser_opt_sig12", skip_serializing_if = "Option::is_none")]
    pub c_tight: Option<f64>,
    #[serde(serialize_with = "ser_opt_sig12", skip_serializing_if = "Option::is_none")]
    pub eta_lower_tight: Option<f64>,
    #[serde(serialize_with = "ser_opt_sig12", skip_serializing_if = "Option::is_none")]
    pub p_error_lower_tight: Option<f64>,
    pub provenance: Vec<String>,
}

/// `η ≥ 1/(cL)` followed by the η bound.
pub fn perror_from_rigidity(c: f64, l: usize, n: usize) -> Result<BoundReport, BoundError> {
    if c.is_nan() || c <= 0.0 {
        return Err(BoundError::NonPositive { name: "c", value: c });
    }
    if l == 0 {
        return Err(BoundError::NonPositive { name: "L", value: 0.0 });
    }
    let eta_lower = 1.0 / (c * l as f64);
    let eb = perror_from_eta(eta_lower, n)?;
    Ok(BoundReport {
        family: Family::Custom,
        n,
        l,
        c,
        d: None,
        theta: None,
        eta_lower,
        p_error_lower: eb.p_error,
        epsilon: eb.epsilon,
        c_tight: None,
        eta_lower_tight: None,
        p_error_lower_tight: None,
        provenance: vec!["rigidity-to-eta: eta >= 1/(cL)".into(), "eta-to-perror: (2/27) eta^2 / n^5".into()],
    })
}

pub fn domino_report() -> BoundReport {
    let mut r = perror_from_rigidity(4.0, 2, 9).expect("valid constants");
    r.family = Family::Domino;
    r.d = Some(2);
    r.provenance.insert(0, "domino basis is 4-rigid".into());
    r
}

/// Irreducible domino-type tilings of diameter `d` are `2D`-rigid.
pub fn domino_type_report(d: usize, da: usize, db: usize) -> Result<BoundReport, BoundError> {
    let mut r = perror_from_rigidity(2.0 * d as f64, 2, da * db)?;
    r.family = Family::DominoType;
    r.d = Some(d);
    r.provenance.insert(0, "irreducible domino-type tiling of diameter D is 2D-rigid".into());
    Ok(r)
}

/// `6 (1 + 6√2 + 2√(3(6 + √2)))`.
pub fn rotated_constant() -> f64 {
    6.0 * (1.0 + 6.0 * SQRT_2 + 2.0 * (3.0 * (6.0 + SQRT_2)).sqrt())
}

/// Integer ceiling of [`rotated_constant`] used by the certified chain.
pub const ROTATED_CONSTANT_CEIL: f64 = 114.0;

/// Rotated domino basis at smallest angle `theta`: certified `c = 114/sin 2θ`,
/// with the exact-constant chain in the `*_tight` fields.
pub fn rotated_constants(theta: f64) -> Result<BoundReport, BoundError> {
    let s2 = (2.0 * theta).sin();
    if theta.is_nan() || theta <= 0.0 || s2 <= 0.0 {
        return Err(BoundError::DegenerateAngle(theta));
    }
    let c_exact = rotated_constant();
    assert!(c_exact <= ROTATED_CONSTANT_CEIL);
    let mut r = perror_from_rigidity(ROTATED_CONSTANT_CEIL / s2, 2, 9)?;
    let tight = perror_from_rigidity(c_exact / s2, 2, 9)?;
    r.family = Family::RotatedDomino;
    r.d = Some(2);
    r.theta = Some(theta);
    r.c_tight = Some(tight.c);
    r.eta_lower_tight = Some(tight.eta_lower);
    r.p_error_lower_tight = Some(tight.p_error_lower);
    r.provenance.insert(0, "rotated domino basis is C/sin(2 theta)-rigid, C <= 114".into());
    Ok(r)
}

/// The three candidate constants `8(1+√2s)`, `14·3s/(s−3)` and
/// `2(1+√2s)·3s/(s−3)`.
pub fn appendix_branches(s: f64) -> [f64; 3] {
    let lin = 1.0 + SQRT_2 * s;
    let pole = 3.0 * s / (s - 3.0);
    [8.0 * lin, 14.0 * pole, 2.0 * lin * pole]
}

/// `C(s)`, the larger of the two rigidity constants available at `s`.
pub fn appendix_constant(s: f64) -> f64 {
    let [a, b, c] = appendix_branches(s);
    a.max(b).max(c)
}

/// `r(s)`: beyond `δ/sin 2θ = 1/r(s)` the trivial bound takes over.
pub fn appendix_r(s: f64) -> f64 {
    let [_, b, c] = appendix_branches(s);
    b.max(c)
}

/// `3 + √(9 + 3/√2)`.
pub fn appendix_s_star_closed_form() -> f64 {
    3.0 + (9.0 + 3.0 / SQRT_2).sqrt()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AppendixMin {
    pub s_star: f64,
    pub c: f64,
    /// `(s, C(s))` at integer `s` from 4 to 20 plus `s*`.
    pub table: Vec<(f64, f64)>,
}

/// Golden-section search for the minimum of `C(s)` on `(3, 100]`.
pub fn appendix_constant_min() -> AppendixMin {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = (3.0 + 1e-9, 100.0);
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let (mut f1, mut f2) = (appendix_constant(x1), appendix_constant(x2));
    while hi - lo > 1e-10 {
        if f1 < f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = appendix_constant(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = appendix_constant(x2);
        }
    }
    let s_star = (lo + hi) / 2.0;
    let mut table: Vec<(f64, f64)> = (4..=20).map(|s| (s as f64, appendix_constant(s as f64))).collect();
    table.push((s_star, appendix_constant(s_star)));
    table.sort_by(|a, b| a.0.total_cmp(&b.0));
    AppendixMin { s_star, c: appendix_constant(s_star), table }
}

fn same_states_up_to_phase(x: &ProductBasis, y: &ProductBasis) -> bool {
    if (x.da(), x.db(), x.n()) != (y.da(), y.db(), y.n()) {
        return false;
    }
    let mut used = vec![false; y.n()];
    'outer: for s in x.states() {
        for (j, t) in y.states().iter().enumerate() {
            if !used[j] && (s.overlap(t).norm() - 1.0).abs() < 1e-10 {
                used[j] = true;
                continue 'outer;
            }
        }
        return false;
    }
    true
}

fn rotated_angles(b: &ProductBasis) -> Option<[f64; 4]> {
    // first state of each domino pair in the family's order
    let leads = [1, 3, 5, 7];
    let reference = rotated_domino_basis([0.5; 4]).ok()?;
    let mut theta = [0.0; 4];
    for (k, &p) in leads.iter().enumerate() {
        let tile = reference.state(p).tile();
        let members: Vec<_> = b.states().iter().filter(|s| s.tile() == tile).collect();
        if members.len() != 2 {
            return None;
        }
        let (r0, r1) = (tile.rows(), tile.cols());
        let pick = |s: &crate::bases::ProductState| -> (f64, f64) {
            if r0.len() == 2 {
                (s.alice[r0[0]].norm(), s.alice[r0[1]].norm())
            } else {
                (s.bob[r1[0]].norm(), s.bob[r1[1]].norm())
            }
        };
        theta[k] = members
            .iter()
            .map(|s| {
                let (x, y) = pick(s);
                y.atan2(x)
            })
            .fold(f64::INFINITY, f64::min)
            .min(std::f64::consts::FRAC_PI_4);
    }
    Some(theta)
}

/// Picks the strongest certificate that provably applies to `b`.
pub fn certify_basis(b: &ProductBasis) -> Result<BoundReport, BoundError> {
    if same_states_up_to_phase(b, &domino_basis()) {
        return Ok(domino_report());
    }
    if (b.da(), b.db()) == (3, 3) {
        if let Some(theta) = rotated_angles(b) {
            if let Ok(r) = rotated_domino_basis(theta) {
                if same_states_up_to_phase(b, &r) {
                    let min = theta.iter().cloned().fold(f64::INFINITY, f64::min);
                    return rotated_constants(min);
                }
            }
        }
    }
    let tiling = induced_tiling(b).map_err(|e| BoundError::NoCertificate(e.to_string()))?;
    let a = analyze(&tiling);
    let Diameter::Finite(d) = a.diameter else {
        return Err(BoundError::NoCertificate("induced tiling is reducible".into()));
    };
    if !a.domino_type {
        return Err(BoundError::NoCertificate("induced tiling has tiles of area above two".into()));
    }
    if b.da() < 3 || b.db() < 3 {
        return Err(BoundError::NoCertificate("domino-type certificate needs both dimensions at least 3".into()));
    }
    let reference = domino_type_basis(&tiling, None).map_err(|e| BoundError::NoCertificate(e.to_string()))?;
    if !same_states_up_to_phase(b, &reference) {
        return Err(BoundError::NoCertificate("states differ from the balanced domino-type construction".into()));
    }
    domino_type_report(d, b.da(), b.db())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bases::standard_basis;
    use crate::tiling::{parse_tiling, CYCLIC_4X4_LAYOUT};
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_4, PI};

    #[test]
    fn helstrom_examples() {
        let h = helstrom_error(0.5, 0.5, 0.0).unwrap();
        assert_eq!((h.exact, h.relaxation), (0.0, 0.0));
        assert_eq!(helstrom_error(0.5, 0.5, 1.0).unwrap().exact, 0.5);
        let h = helstrom_error(0.5, 0.5, 0.5).unwrap();
        assert!((h.exact - (1.0 - 3f64.sqrt() / 2.0) / 2.0).abs() < 1e-15);
        assert!((h.exact - 0.0669873).abs() < 1e-7);
        assert!(helstrom_error(0.5, 0.6, 0.5).is_err());
        assert!(helstrom_error(0.5, 0.5, 1.5).is_err());
    }

    #[test]
    fn eta_bound_examples() {
        let b = perror_from_eta(0.125, 9).unwrap();
        let oracle = 2.0 / (27.0 * 64.0 * 9f64.powi(5));
        assert_eq!(b.p_error, oracle);
        assert!((b.p_error - 1.96014e-8).abs() < 1e-12);
        assert!(b.p_error >= 1.9e-8);
        assert!((b.epsilon - 1.0 / 108.0).abs() < 1e-18);
        assert_eq!(perror_from_eta(0.0, 9).unwrap().p_error, 0.0);
        assert_eq!(perror_from_eta(0.1, 1).unwrap_err(), BoundError::TooFewStates(1));
    }

    #[test]
    fn rigidity_chain_examples() {
        let r = perror_from_rigidity(4.0, 2, 9).unwrap();
        assert_eq!(r.eta_lower, 0.125);
        assert_eq!(r.p_error_lower, perror_from_eta(0.125, 9).unwrap().p_error);

        let r = domino_type_report(2, 4, 4).unwrap();
        let oracle = 1.0 / (216.0 * 4.0 * 16f64.powi(5));
        assert!(((r.p_error_lower - oracle) / oracle).abs() < 1e-15);
        assert!((r.p_error_lower - 1.1036e-9).abs() < 1e-12);
        for d in 1..6 {
            for (da, db) in [(3, 3), (3, 5), (6, 4)] {
                let r = domino_type_report(d, da, db).unwrap();
                let closed = 1.0 / (216.0 * (d * d) as f64 * ((da * db) as f64).powi(5));
                assert!(((r.p_error_lower - closed) / closed).abs() < 1e-14);
                assert_eq!(r.eta_lower, 1.0 / (4.0 * d as f64));
            }
        }
    }

    #[test]
    fn rotated_constant_values() {
        let c = rotated_constant();
        assert!((c - 113.5067).abs() < 1e-3, "{c}");
        assert!(c <= 114.0);
        let r = rotated_constants(FRAC_PI_4).unwrap();
        assert_eq!(r.c, 114.0);
        assert!((2.40e-11..=2.42e-11).contains(&r.p_error_lower), "{}", r.p_error_lower);
        assert!(r.p_error_lower >= 2.4e-11);
        assert!((r.c_tight.unwrap() - c).abs() < 1e-12);
        assert!((r.eta_lower_tight.unwrap() - 1.0 / (2.0 * c)).abs() < 1e-15);
        assert!(r.p_error_lower_tight.unwrap() > r.p_error_lower);
        assert!(rotated_constants(0.0).is_err());
        assert!(rotated_constants(-0.1).is_err());
    }

    #[test]
    fn rotated_bound_vanishes_monotonically() {
        let mut last = f64::INFINITY;
        for k in (1..=100).rev() {
            let theta = FRAC_PI_4 * k as f64 / 100.0;
            let p = rotated_constants(theta).unwrap().p_error_lower;
            assert!(p <= last);
            assert!(p >= 2.4e-11 * (2.0 * theta).sin().powi(2));
            last = p;
        }
        assert!(rotated_constants(1e-9).unwrap().p_error_lower < 1e-27);
    }

    #[test]
    fn appendix_minimum() {
        let m = appendix_constant_min();
        assert!((m.s_star - appendix_s_star_closed_form()).abs() < 1e-6);
        assert!((m.s_star - 6.33).abs() < 0.01);
        assert!((m.c - rotated_constant()).abs() < 1e-6);
        assert!(m.table.iter().all(|&(_, c)| c >= m.c - 1e-12));

        let s: f64 = 10.0;
        let direct = [8.0 * (1.0 + SQRT_2 * s), 14.0 * 30.0 / 7.0, 2.0 * (1.0 + SQRT_2 * s) * 30.0 / 7.0];
        assert_eq!(appendix_constant(10.0), direct.iter().cloned().fold(0.0, f64::max));
        assert_eq!(appendix_r(10.0), direct[1].max(direct[2]));
    }

    #[test]
    fn appendix_minimum_is_interior_to_one_branch() {
        // the third branch alone is active at s*, so the minimum is where its
        // derivative vanishes rather than where two branches cross
        let s = appendix_s_star_closed_form();
        let [b1, b2, b3] = appendix_branches(s);
        assert!(b3 > b1 + 30.0 && b3 > b2 + 30.0);
        let h = 1e-5;
        let slope = (appendix_branches(s + h)[2] - appendix_branches(s - h)[2]) / (2.0 * h);
        assert!(slope.abs() < 1e-6, "{slope}");
    }

    #[test]
    fn stopping_objective_peaks_at_optimal_epsilon() {
        for n in [2usize, 3, 9, 16] {
            let arg = stopping_argmax_on_grid(n, 0.125, 1e-6);
            assert!((arg - optimal_epsilon(n)).abs() <= 1e-6, "n={n}: {arg}");
        }
    }

    #[test]
    fn certify_known_families() {
        assert_eq!(certify_basis(&domino_basis()).unwrap(), domino_report());

        let r = certify_basis(&rotated_domino_basis([0.3, 0.5, 0.2, 0.7]).unwrap()).unwrap();
        assert_eq!(r.family, Family::RotatedDomino);
        assert!((r.theta.unwrap() - 0.2).abs() < 1e-12);

        let t = parse_tiling(CYCLIC_4X4_LAYOUT).unwrap();
        let r = certify_basis(&domino_type_basis(&t, None).unwrap()).unwrap();
        assert_eq!((r.family, r.d, r.c), (Family::DominoType, Some(2), 4.0));

        assert!(matches!(certify_basis(&standard_basis(3, 3)), Err(BoundError::NoCertificate(_))));
    }

    #[test]
    fn report_json_has_twelve_digits() {
        let r = rotated_constants(PI / 12.0).unwrap();
        let v: serde_json::Value = serde_json::to_value(&r).unwrap();
        assert_eq!(v["family"], "rotated_domino");
        assert_eq!(v["c"].as_f64().unwrap(), sig12(r.c));
        assert_eq!(format!("{:e}", v["c"].as_f64().unwrap()), "2.28e2");
        assert_eq!(sig12(1.0 / 3.0), 0.333333333333);
    }

    proptest! {
        #[test]
        fn helstrom_dominates_relaxation_sampled(q0 in 0.0f64..=1.0, delta in 0.0f64..=1.0) {
            let h = helstrom_error(q0, 1.0 - q0, delta).unwrap();
            prop_assert!(h.exact >= h.relaxation - 1e-15);
        }

        #[test]
        fn chain_identity(c in 0.1f64..1e3, l in 1usize..6, n in 2usize..40) {
            let r = perror_from_rigidity(c, l, n).unwrap();
            prop_assert_eq!(r.p_error_lower, perror_from_eta(1.0 / (c * l as f64), n).unwrap().p_error);
        }
    }
}
