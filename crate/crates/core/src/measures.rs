//! Disturbance, information gain and rigidity of a product operator `a ⊗ b`
//! relative to a product basis.

use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::bases::ProductBasis;
use crate::matkernel::{sample_psd_with, ComplexMatrix, PsdOperator, C64};

/// Diagonal entries of `G` at or below this fraction of `tr(a ⊗ b)` count as zero.
pub const DIAG_FLOOR_REL: f64 = 1e-12;

/// Information gains at or below this value leave the ratio undefined.
pub const RATIO_FLOOR: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeasureError {
    #[error("operator dimensions ({a}, {b}) do not match basis dimensions ({da}, {db})")]
    Dimension { a: usize, b: usize, da: usize, db: usize },
    #[error("disturbance undefined: state {state} has vanishing probability")]
    UndefinedDisturbance { state: usize },
    #[error("the operator has zero total probability on the basis")]
    ZeroProbability,
    #[error("tr(a ⊗ b) is zero")]
    ZeroTrace,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MeasurementPair {
    pub a: PsdOperator,
    pub b: PsdOperator,
}

impl MeasurementPair {
    pub fn new(a: PsdOperator, b: PsdOperator) -> Self {
        Self { a, b }
    }

    pub fn identity(da: usize, db: usize) -> Self {
        Self::new(PsdOperator::identity(da), PsdOperator::identity(db))
    }

    /// Independent Ginibre samples for both parties.
    pub fn sample<R: Rng + ?Sized>(da: usize, db: usize, rng: &mut R) -> Self {
        let a = sample_psd_with(da, rng);
        let b = sample_psd_with(db, rng);
        Self::new(a, b)
    }

    /// `tr(a ⊗ b)`.
    pub fn trace(&self) -> f64 {
        self.a.trace() * self.b.trace()
    }

    fn check(&self, s: &ProductBasis) -> Result<(), MeasureError> {
        if self.a.dim() != s.da() || self.b.dim() != s.db() {
            return Err(MeasureError::Dimension { a: self.a.dim(), b: self.b.dim(), da: s.da(), db: s.db() });
        }
        Ok(())
    }
}

/// `G_ij = <α_i|a|α_j> <β_i|b|β_j>`.
pub fn gram_under(s: &ProductBasis, m: &MeasurementPair) -> Result<ComplexMatrix, MeasureError> {
    m.check(s)?;
    let n = s.n();
    let a_alpha: Vec<Vec<C64>> = s.states().iter().map(|x| m.a.matrix().mul_vec(&x.alice)).collect();
    let b_beta: Vec<Vec<C64>> = s.states().iter().map(|x| m.b.matrix().mul_vec(&x.bob)).collect();
    let dot = |u: &[C64], v: &[C64]| -> C64 { u.iter().zip(v).map(|(x, y)| x.conj() * y).sum() };
    let mut g = ComplexMatrix::zeros(n, n);
    for i in 0..n {
        let si = s.state(i);
        for j in i..n {
            let v = dot(&si.alice, &a_alpha[j]) * dot(&si.bob, &b_beta[j]);
            if i == j {
                g[(i, i)] = C64::new(v.re, 0.0);
            } else {
                g[(i, j)] = v;
                g[(j, i)] = v.conj();
            }
        }
    }
    Ok(g)
}

fn disturbance_of(g: &ComplexMatrix, trace: f64) -> Result<f64, MeasureError> {
    let n = g.rows();
    let floor = DIAG_FLOOR_REL * trace;
    let diag: Vec<f64> = (0..n).map(|i| g[(i, i)].re).collect();
    if let Some(state) = diag.iter().position(|&d| d <= floor) {
        return Err(MeasureError::UndefinedDisturbance { state });
    }
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            worst = worst.max(g[(i, j)].norm() / (diag[i] * diag[j]).sqrt());
        }
    }
    Ok(worst)
}

fn info_gain_of(g: &ComplexMatrix) -> Result<f64, MeasureError> {
    let n = g.rows();
    let diag: Vec<f64> = (0..n).map(|i| g[(i, i)].re).collect();
    let total: f64 = diag.iter().sum();
    if total <= 0.0 {
        return Err(MeasureError::ZeroProbability);
    }
    let max = diag.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(max / total - 1.0 / n as f64)
}

/// Largest overlap between distinct normalized post-measurement states.
pub fn disturbance(s: &ProductBasis, m: &MeasurementPair) -> Result<f64, MeasureError> {
    let g = gram_under(s, m)?;
    disturbance_of(&g, m.trace())
}

/// `max_k p(ψ_k|m) - 1/n`.
pub fn info_gain(s: &ProductBasis, m: &MeasurementPair) -> Result<f64, MeasureError> {
    info_gain_of(&gram_under(s, m)?)
}

/// `δ / info_gain`, or `None` when either side is undefined or the gain is
/// at most [`RATIO_FLOOR`].
pub fn nonlocality_ratio(s: &ProductBasis, m: &MeasurementPair) -> Result<Option<f64>, MeasureError> {
    let g = gram_under(s, m)?;
    Ok(ratio_of(&g, m.trace()))
}

fn ratio_of(g: &ComplexMatrix, trace: f64) -> Option<f64> {
    let gain = info_gain_of(g).ok()?;
    let delta = disturbance_of(g, trace).ok()?;
    (gain > RATIO_FLOOR).then(|| delta / gain)
}

/// `‖(a ⊗ b)/tr(a ⊗ b) − I/n‖_max`, evaluated without forming `a ⊗ b`.
pub fn rigidity_deviation(m: &MeasurementPair, n: usize) -> Result<f64, MeasureError> {
    let tr = m.trace();
    if tr <= 0.0 {
        return Err(MeasureError::ZeroTrace);
    }
    let (a, b) = (m.a.matrix(), m.b.matrix());
    let (da, db) = (a.rows(), b.rows());
    let mut worst: f64 = 0.0;
    for r1 in 0..da {
        for r2 in 0..da {
            let ar = a[(r1, r2)];
            for c1 in 0..db {
                for c2 in 0..db {
                    let mut v = ar * b[(c1, c2)] / tr;
                    if r1 == r2 && c1 == c2 {
                        v -= 1.0 / n as f64;
                    }
                    worst = worst.max(v.norm());
                }
            }
        }
    }
    Ok(worst)
}

#[derive(Clone, Debug, Serialize)]
pub struct MeasureReport {
    #[serde(rename = "G")]
    pub gram: ComplexMatrix,
    pub delta: Option<f64>,
    pub info_gain: f64,
    pub ratio: Option<f64>,
    pub rigidity_dev: f64,
    /// All diagonal entries of `G` exceed the floor.
    pub valid: bool,
    pub seed: Option<u64>,
}

/// Every quantity above from a single evaluation of `G`.
pub fn measure_report(s: &ProductBasis, m: &MeasurementPair, seed: Option<u64>) -> Result<MeasureReport, MeasureError> {
    let gram = gram_under(s, m)?;
    let tr = m.trace();
    let delta = disturbance_of(&gram, tr).ok();
    Ok(MeasureReport {
        info_gain: info_gain_of(&gram)?,
        ratio: ratio_of(&gram, tr),
        rigidity_dev: rigidity_deviation(m, s.n())?,
        valid: delta.is_some(),
        delta,
        gram,
        seed,
    })
}

/// Disturbance and information gain together, for inner loops.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Evaluation {
    pub delta: Option<f64>,
    pub info_gain: f64,
    pub ratio: Option<f64>,
}

pub fn evaluate(s: &ProductBasis, m: &MeasurementPair) -> Result<Evaluation, MeasureError> {
    let g = gram_under(s, m)?;
    let tr = m.trace();
    Ok(Evaluation { delta: disturbance_of(&g, tr).ok(), info_gain: info_gain_of(&g)?, ratio: ratio_of(&g, tr) })
}
