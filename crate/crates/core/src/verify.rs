//! Randomized checks of the rigidity inequalities and a checker for candidate
//! operators against the KKB conditions.
//!
//! Every suite draws seeded measurement pairs `(a, b)`, rescales them to unit
//! trace and evaluates each inequality as a margin `rhs - lhs`. A trial
//! violates a suite when some margin falls below `-LEMMA_TOL`. Trials whose
//! disturbance is undefined (a basis state with vanishing probability) are
//! skipped. Conditional inequalities are evaluated only on trials that meet
//! their hypothesis; the rest count as skipped for that check.

use std::collections::{BTreeMap, VecDeque};
use std::f64::consts::SQRT_2;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::bases::{domino_basis, domino_type_basis, rotated_domino_basis, BasisError, ProductBasis};
use crate::bounds::{appendix_r, appendix_s_star_closed_form, rotated_constant};
use crate::estimator::{pack, unpack};
use crate::matkernel::{ginibre, haar_unitary, psd_sqrt, sample_psd_rank, sample_psd_with, ComplexMatrix, PsdOperator};
use crate::measures::{disturbance, gram_under, rigidity_deviation, MeasureError, MeasurementPair};
use crate::optim::NelderMead;
use crate::rng::{trial_rng, SeededRng, GENERATOR_ID};
use crate::tiling::{analyze, parse_tiling, Diameter, Tiling, DOMINO_LAYOUT};

/// Margin below which a trial counts as a violation (margins are relative to
/// the trial scale).
pub const LEMMA_TOL: f64 = 1e-9;

/// Tolerance for the normalization and `χ` conditions.
pub const KKB_TOL: f64 = 1e-9;

/// Largest admissible `|<ψ_i|E|ψ_j>|²` for `i != j`.
pub const KKB_CROSS_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VerifyError {
    #[error("dimensions must be at least one")]
    EmptyDimension,
    #[error("tiling is reducible")]
    Reducible,
    #[error("tiling has a tile with more than two cells")]
    NotDominoType,
    #[error("grid {da}x{db} is smaller than 3x3")]
    GridTooSmall { da: usize, db: usize },
    #[error("angle {0} is outside (0, π/4]")]
    Angle(f64),
    #[error(transparent)]
    Basis(#[from] BasisError),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckSummary {
    pub name: &'static str,
    /// Evaluated only when a hypothesis holds.
    pub conditional: bool,
    pub evaluated: usize,
    pub violations: usize,
    pub worst_margin: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LemmaSuiteResult {
    pub lemma_id: String,
    pub trials: usize,
    /// Trials that passed the stage-I guard.
    pub evaluated: usize,
    pub skipped: usize,
    pub violations: usize,
    /// Smallest margin over every check and trial.
    pub worst_margin: Option<f64>,
    pub seed: u64,
    pub generator: &'static str,
    /// Smallest fraction of trials meeting any conditional hypothesis.
    pub hypothesis_hit_rate: Option<f64>,
    pub parameters: BTreeMap<&'static str, f64>,
    pub checks: Vec<CheckSummary>,
}

impl LemmaSuiteResult {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }

    pub fn check(&self, name: &str) -> Option<&CheckSummary> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Margins of one trial, one entry per check; `None` where a hypothesis failed.
pub type TrialMargins = Vec<(&'static str, Option<f64>)>;

fn run_suite<F>(
    lemma_id: &str,
    conditional: &[&'static str],
    trials: usize,
    seed: u64,
    parameters: BTreeMap<&'static str, f64>,
    trial: F,
) -> LemmaSuiteResult
where
    F: Fn(&mut SeededRng) -> Option<TrialMargins> + Sync,
{
    let outcomes: Vec<Option<TrialMargins>> =
        (0..trials as u64).into_par_iter().map(|i| trial(&mut trial_rng(seed, i))).collect();
    let mut checks: Vec<CheckSummary> = Vec::new();
    let (mut evaluated, mut violations) = (0, 0);
    for margins in outcomes.iter().flatten() {
        evaluated += 1;
        let mut violated = false;
        for &(name, margin) in margins {
            let pos = match checks.iter().position(|c| c.name == name) {
                Some(p) => p,
                None => {
                    checks.push(CheckSummary {
                        name,
                        conditional: conditional.contains(&name),
                        evaluated: 0,
                        violations: 0,
                        worst_margin: None,
                    });
                    checks.len() - 1
                }
            };
            let Some(m) = margin else { continue };
            let c = &mut checks[pos];
            c.evaluated += 1;
            c.worst_margin = Some(c.worst_margin.map_or(m, |w| w.min(m)));
            if m < -LEMMA_TOL || m.is_nan() {
                c.violations += 1;
                violated = true;
            }
        }
        violations += usize::from(violated);
    }
    let worst_margin = checks.iter().filter_map(|c| c.worst_margin).reduce(f64::min);
    let hypothesis_hit_rate = (trials > 0)
        .then(|| checks.iter().filter(|c| c.conditional).map(|c| c.evaluated as f64 / trials as f64).reduce(f64::min))
        .flatten();
    LemmaSuiteResult {
        lemma_id: lemma_id.to_string(),
        trials,
        evaluated,
        skipped: trials - evaluated,
        violations,
        worst_margin,
        seed,
        generator: GENERATOR_ID,
        hypothesis_hit_rate,
        parameters,
        checks,
    }
}

/// Seeded PSD pairs for the suites: generic, low rank, weak (close to a
/// multiple of the identity, strength log-uniform in `[1e-7, 1]`) and mixed,
/// each with probability 1/4.
pub fn sample_suite_pair<R: Rng + ?Sized>(da: usize, db: usize, rng: &mut R) -> MeasurementPair {
    fn weak_at<R: Rng + ?Sized>(dim: usize, w: f64, rng: &mut R) -> PsdOperator {
        sample_psd_with(dim, rng).normalized().scaled_plus_identity(w, (1.0 - w) / dim as f64)
    }
    fn weak<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> PsdOperator {
        let w = 10f64.powf(rng.random_range(-7.0..0.0));
        weak_at(dim, w, rng)
    }
    fn low_rank<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> PsdOperator {
        let rank = rng.random_range(1..=dim);
        sample_psd_rank(dim, rank, rng)
    }
    fn any<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> PsdOperator {
        match rng.random_range(0..3) {
            0 => sample_psd_with(dim, rng),
            1 => low_rank(dim, rng),
            _ => weak(dim, rng),
        }
    }
    let (a, b) = match rng.random_range(0..4) {
        0 => (sample_psd_with(da, rng), sample_psd_with(db, rng)),
        1 => (low_rank(da, rng), low_rank(db, rng)),
        2 => {
            // one strength for both sides
            let w = 10f64.powf(rng.random_range(-7.0..0.0));
            (weak_at(da, w, rng), weak_at(db, w, rng))
        }
        _ => (any(da, rng), any(db, rng)),
    };
    MeasurementPair::new(a.normalized(), b.normalized())
}

fn unit_trace(m: &MeasurementPair) -> MeasurementPair {
    MeasurementPair::new(m.a.normalized(), m.b.normalized())
}

fn diag(x: &ComplexMatrix, i: usize) -> f64 {
    x[(i, i)].re
}

/// `√(mn) · max |(U†MV)_ij| − max |M_kl|`, divided by `max |M_kl|`.
pub fn uv_margin(u: &ComplexMatrix, v: &ComplexMatrix, m: &ComplexMatrix) -> f64 {
    let scale = m.max_abs_entry();
    if scale == 0.0 {
        return 0.0;
    }
    let rotated = &(&u.adjoint() * m) * v;
    let dims = (m.rows() * m.cols()) as f64;
    (dims.sqrt() * rotated.max_abs_entry() - scale) / scale
}

/// Largest-entry growth under a unitary change of basis on both sides.
pub fn check_uv_lemma(m_dim: usize, n_dim: usize, trials: usize, seed: u64) -> Result<LemmaSuiteResult, VerifyError> {
    if m_dim == 0 || n_dim == 0 {
        return Err(VerifyError::EmptyDimension);
    }
    let params = BTreeMap::from([("m", m_dim as f64), ("n", n_dim as f64)]);
    Ok(run_suite("unitary_change_of_basis", &[], trials, seed, params, |rng| {
        let u = haar_unitary(m_dim, rng);
        let v = haar_unitary(n_dim, rng);
        let m = match rng.random_range(0..3) {
            0 => ginibre(m_dim, n_dim, rng),
            1 => &ginibre(m_dim, 1, rng) * &ginibre(1, n_dim, rng),
            // |φ_0><ψ_0|: a single unit entry after the change of basis
            _ => ComplexMatrix::from_fn(m_dim, n_dim, |r, c| u[(r, 0)] * v[(c, 0)].conj()),
        };
        Some(vec![("max_entry", Some(uv_margin(&u, &v, &m)))])
    }))
}

fn bfs_distances(adj: &[Vec<usize>]) -> Vec<Vec<usize>> {
    (0..adj.len())
        .map(|src| {
            let mut dist = vec![usize::MAX; adj.len()];
            dist[src] = 0;
            let mut queue = VecDeque::from([src]);
            while let Some(v) = queue.pop_front() {
                for &w in &adj[v] {
                    if dist[w] == usize::MAX {
                        dist[w] = dist[v] + 1;
                        queue.push_back(w);
                    }
                }
            }
            dist
        })
        .collect()
}

/// The inequalities that bound the rigidity of a basis through its tiling.
#[derive(Clone, Debug)]
pub struct TilingBounds {
    tiling: Tiling,
    row_dist: Vec<Vec<usize>>,
    col_dist: Vec<Vec<usize>>,
    owner: Vec<usize>,
    /// Rigidity constant asserted by the final check.
    pub constant: f64,
    /// Constant for products whose two cells share a domino.
    pub same_tile_constant: f64,
    pub diameter: Option<usize>,
}

impl TilingBounds {
    /// Bounds with `c = 2D` and same-tile constant `D + 2`.
    pub fn domino_type(t: &Tiling) -> Self {
        let analysis = analyze(t);
        let d = analysis.diameter.finite();
        let mut out = Self {
            tiling: t.clone(),
            row_dist: bfs_distances(&analysis.row_graph),
            col_dist: bfs_distances(&analysis.col_graph),
            owner: t.owner_grid(),
            constant: f64::INFINITY,
            same_tile_constant: f64::INFINITY,
            diameter: d,
        };
        if let Some(d) = d {
            out.constant = 2.0 * d as f64;
            out.same_tile_constant = d as f64 + 2.0;
        }
        out
    }

    /// The sharper constants available for the 3x3 domino layout.
    pub fn domino() -> Self {
        let t = parse_tiling(DOMINO_LAYOUT).expect("valid layout");
        Self { constant: 4.0, same_tile_constant: 1.0 + SQRT_2, ..Self::domino_type(&t) }
    }

    pub fn tiling(&self) -> &Tiling {
        &self.tiling
    }

    fn tile_at(&self, r: usize, c: usize) -> usize {
        self.owner[r * self.tiling.db() + c]
    }

    /// `min √(|T1||T2|) δ − |a_{r1 r2}| |b_{c1 c2}|` over cells in distinct tiles,
    /// for unit-trace `a` and `b`.
    pub fn pair_of_tiles_margin(&self, a: &ComplexMatrix, b: &ComplexMatrix, delta: f64) -> f64 {
        let (da, db) = (self.tiling.da(), self.tiling.db());
        let areas: Vec<f64> = self.tiling.tiles().iter().map(|t| t.area() as f64).collect();
        let mut worst = f64::INFINITY;
        for r1 in 0..da {
            for c1 in 0..db {
                let t1 = self.tile_at(r1, c1);
                for r2 in 0..da {
                    for c2 in 0..db {
                        let t2 = self.tile_at(r2, c2);
                        if t1 == t2 {
                            continue;
                        }
                        let rhs = (areas[t1] * areas[t2]).sqrt() * delta;
                        worst = worst.min(rhs - a[(r1, r2)].norm() * b[(c1, c2)].norm());
                    }
                }
            }
        }
        worst
    }

    /// All margins for one pair; errors when the disturbance is undefined.
    pub fn margins(&self, s: &ProductBasis, m: &MeasurementPair) -> Result<TrialMargins, MeasureError> {
        let m = unit_trace(m);
        let delta = disturbance(s, &m)?;
        let (a, b) = (m.a.matrix(), m.b.matrix());
        let (da, db) = (self.tiling.da(), self.tiling.db());
        let n = (da * db) as f64;
        let mut adjacent = f64::INFINITY;
        for tile in self.tiling.tiles() {
            if let [r1, r2] = tile.rows() {
                adjacent = adjacent.min(delta - (diag(a, *r1) - diag(a, *r2)).abs());
            }
            if let [c1, c2] = tile.cols() {
                adjacent = adjacent.min(delta - (diag(b, *c1) - diag(b, *c2)).abs());
            }
        }
        let mut path = f64::INFINITY;
        for (x, dist, dim) in [(a, &self.row_dist, da), (b, &self.col_dist, db)] {
            for i in 0..dim {
                for j in i + 1..dim {
                    path = path.min(dist[i][j] as f64 * delta - (diag(x, i) - diag(x, j)).abs());
                }
            }
        }
        let d = self.diameter.map_or(f64::INFINITY, |d| d as f64);
        let products: Vec<f64> = (0..da).flat_map(|i| (0..db).map(move |j| diag(a, i) * diag(b, j))).collect();
        let (lo, hi) = products.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &p| (l.min(p), h.max(p)));
        let diagonal_products = 2.0 * d * delta - (hi - lo);
        let diagonal = self.constant * delta - products.iter().map(|p| (p - 1.0 / n).abs()).fold(0.0, f64::max);

        let mut same_tile = f64::INFINITY;
        for tile in self.tiling.tiles() {
            if let [c1, c2] = tile.cols() {
                let r = tile.rows()[0];
                same_tile = same_tile.min(self.same_tile_constant * delta - diag(a, r).abs() * b[(*c1, *c2)].norm());
            }
            if let [r1, r2] = tile.rows() {
                let c = tile.cols()[0];
                same_tile = same_tile.min(self.same_tile_constant * delta - a[(*r1, *r2)].norm() * diag(b, c).abs());
            }
        }
        let mut off = 0.0f64;
        for r1 in 0..da {
            for r2 in 0..da {
                for c1 in 0..db {
                    for c2 in 0..db {
                        if r1 != r2 || c1 != c2 {
                            off = off.max(a[(r1, r2)].norm() * b[(c1, c2)].norm());
                        }
                    }
                }
            }
        }
        let deviation = rigidity_deviation(&m, da * db)?;
        Ok(vec![
            ("adjacent_diagonals", Some(adjacent)),
            ("path_diagonals", Some(path)),
            ("diagonal_products", Some(diagonal_products)),
            ("diagonal", Some(diagonal)),
            ("pair_of_tiles", Some(self.pair_of_tiles_margin(a, b, delta))),
            ("same_tile", (same_tile < f64::INFINITY).then_some(same_tile)),
            ("offdiagonal", Some(self.constant * delta - off)),
            ("rigidity", Some(self.constant * delta - deviation)),
        ])
    }
}

/// The pair-of-tiles inequality on the tiling induced by `s`.
pub fn check_pair_of_tiles(s: &ProductBasis, trials: usize, seed: u64) -> Result<LemmaSuiteResult, VerifyError> {
    let t = crate::bases::induced_tiling(s)?;
    let bounds = TilingBounds::domino_type(&t);
    let params = BTreeMap::from([("max_tile_area", t.max_tile_area() as f64)]);
    Ok(run_suite("pair_of_tiles", &[], trials, seed, params, |rng| {
        let m = sample_suite_pair(s.da(), s.db(), rng);
        let delta = disturbance(s, &m).ok()?;
        Some(vec![("pair_of_tiles", Some(bounds.pair_of_tiles_margin(m.a.matrix(), m.b.matrix(), delta)))])
    }))
}

fn tiling_suite(lemma_id: &str, s: &ProductBasis, bounds: &TilingBounds, trials: usize, seed: u64) -> LemmaSuiteResult {
    let params = BTreeMap::from([
        ("c", bounds.constant),
        ("same_tile_constant", bounds.same_tile_constant),
        ("diameter", bounds.diameter.map_or(f64::INFINITY, |d| d as f64)),
    ]);
    run_suite(lemma_id, &[], trials, seed, params, |rng| bounds.margins(s, &sample_suite_pair(s.da(), s.db(), rng)).ok())
}

/// Rigidity of the domino basis with `c = 4`, including the intermediate
/// single-tile and hard off-diagonal bounds.
pub fn check_domino_rigidity(trials: usize, seed: u64) -> LemmaSuiteResult {
    tiling_suite("domino_rigidity", &domino_basis(), &TilingBounds::domino(), trials, seed)
}

/// Rigidity with `c = 2D` of the basis built on an irreducible domino-type
/// tiling of diameter `D`.
pub fn check_dimbox_rigidity(t: &Tiling, trials: usize, seed: u64) -> Result<LemmaSuiteResult, VerifyError> {
    if t.da() < 3 || t.db() < 3 {
        return Err(VerifyError::GridTooSmall { da: t.da(), db: t.db() });
    }
    let analysis = analyze(t);
    if !analysis.domino_type {
        return Err(VerifyError::NotDominoType);
    }
    if !analysis.irreducible || analysis.diameter == Diameter::Infinite {
        return Err(VerifyError::Reducible);
    }
    let s = domino_type_basis(t, None)?;
    Ok(tiling_suite("domino_type_rigidity", &s, &TilingBounds::domino_type(t), trials, seed))
}

/// Constants of the rotated-basis argument for one angle and threshold `s`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RotatedChain {
    pub theta: f64,
    pub s: f64,
}

impl RotatedChain {
    pub fn new(theta: f64) -> Result<Self, VerifyError> {
        if !(theta > 0.0 && theta <= std::f64::consts::FRAC_PI_4 + 1e-15) {
            return Err(VerifyError::Angle(theta));
        }
        Ok(Self { theta, s: appendix_s_star_closed_form() })
    }

    fn sin2(&self) -> f64 {
        (2.0 * self.theta).sin()
    }

    /// `a_11 ≥ ‖a‖/s`.
    pub fn hypothesis(&self, x: &PsdOperator) -> bool {
        diag(x.matrix(), 1) >= x.operator_norm() / self.s
    }

    /// Margins of every step on one pair.
    pub fn margins(&self, s: &ProductBasis, m: &MeasurementPair) -> Result<TrialMargins, MeasureError> {
        let m = unit_trace(m);
        let delta = disturbance(s, &m)?;
        let k = self.sin2();
        let ratio = delta / k;
        let t = self.s;
        let grow = 1.0 + SQRT_2 * t;

        let diagonal = |x: &PsdOperator| {
            let (xm, norm) = (x.matrix(), x.operator_norm());
            [0, 2]
                .iter()
                .map(|&j| 2.0 / k * (delta * norm + xm[(j, 1)].re.abs()) - (diag(xm, 1) - diag(xm, j)).abs())
                .fold(f64::INFINITY, f64::min)
        };
        let bounds = |x: &PsdOperator| {
            let (xm, norm) = (x.matrix(), x.operator_norm());
            [0, 2]
                .iter()
                .flat_map(|&j| {
                    [
                        SQRT_2 * t * delta * norm - xm[(j, 1)].norm(),
                        2.0 * grow * ratio * norm - (diag(xm, 1) - diag(xm, j)).abs(),
                    ]
                })
                .fold(f64::INFINITY, f64::min)
        };
        let (ha, hb) = (self.hypothesis(&m.a), self.hypothesis(&m.b));
        let deviation = rigidity_deviation(&m, 9)?;
        let r = appendix_r(t);
        let small = ratio <= 1.0 / r;
        let small_delta = small.then(|| {
            let slack = |x: &PsdOperator| diag(x.matrix(), 1) - x.operator_norm() / t;
            slack(&m.a).min(slack(&m.b))
        });
        let dichotomy = if small { 8.0 * grow * ratio } else { r * ratio } - deviation;
        Ok(vec![
            ("diagonal_unconditional", Some(diagonal(&m.a).min(diagonal(&m.b)))),
            ("bounds_given_a11", ha.then(|| bounds(&m.b))),
            ("bounds_given_b11", hb.then(|| bounds(&m.a))),
            ("max_norm_given_both", (ha && hb).then_some(8.0 * grow * ratio - deviation)),
            ("small_delta", small_delta),
            ("dichotomy", Some(dichotomy)),
            ("rigidity", Some(rotated_constant() * ratio - deviation)),
        ])
    }

    /// Half generic pairs, half pairs whose `(1, 1)` entries are boosted so
    /// that both hypotheses hold.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> MeasurementPair {
        let m = sample_suite_pair(3, 3, rng);
        if rng.random_bool(0.5) {
            return m;
        }
        let lo = 1.0 / (self.s - 1.0);
        let mut boost = |x: &PsdOperator| {
            let kappa = rng.random_range(lo..=2.0);
            let mut y = x.matrix().clone();
            y[(1, 1)] += kappa * x.operator_norm();
            PsdOperator::new(y).expect("PSD plus a diagonal projector").normalized()
        };
        let a = boost(&m.a);
        let b = boost(&m.b);
        MeasurementPair::new(a, b)
    }
}

/// The chain of bounds for rotated domino states with all four angles equal
/// to `theta`, run at the optimal threshold `s`.
pub fn check_rotated_chain(theta: f64, trials: usize, seed: u64) -> Result<LemmaSuiteResult, VerifyError> {
    let chain = RotatedChain::new(theta)?;
    let s = rotated_domino_basis([theta; 4])?;
    let params = BTreeMap::from([
        ("theta", theta),
        ("s", chain.s),
        ("r", appendix_r(chain.s)),
        ("c", rotated_constant() / chain.sin2()),
    ]);
    let conditional = ["bounds_given_a11", "bounds_given_b11", "max_norm_given_both", "small_delta"];
    Ok(run_suite("rotated_domino_rigidity", &conditional, trials, seed, params, |rng| {
        chain.margins(&s, &chain.sample(rng)).ok()
    }))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AdversarialReport {
    pub basis_id: String,
    pub constant: f64,
    pub starts: usize,
    pub evaluations: usize,
    /// Smallest `c δ − deviation` at any evaluated point.
    pub min_margin: f64,
    pub seed: u64,
    pub generator: &'static str,
}

impl AdversarialReport {
    pub fn passed(&self) -> bool {
        self.min_margin >= -LEMMA_TOL
    }
}

fn rigidity_margin(s: &ProductBasis, c: f64, m: &MeasurementPair) -> f64 {
    match (disturbance(s, m), rigidity_deviation(m, s.n())) {
        (Ok(d), Ok(dev)) => c * d - dev,
        _ => f64::INFINITY,
    }
}

/// Drives `c δ − deviation` down with Nelder–Mead from the `starts` lowest of
/// `samples` suite pairs, recording the smallest margin evaluated anywhere.
pub fn adversarial_rigidity(
    s: &ProductBasis,
    c: f64,
    samples: usize,
    starts: usize,
    max_iter: usize,
    seed: u64,
) -> AdversarialReport {
    let (da, db) = (s.da(), s.db());
    let mut pool: Vec<(f64, Vec<f64>)> = (0..samples as u64)
        .into_par_iter()
        .map(|i| {
            let m = sample_suite_pair(da, db, &mut trial_rng(seed, i));
            let x = pack(psd_sqrt(&m.a).matrix(), psd_sqrt(&m.b).matrix());
            (rigidity_margin(s, c, &unpack(&x, da, db)), x)
        })
        .collect();
    pool.sort_by(|x, y| x.0.total_cmp(&y.0));
    let starts = starts.min(pool.len());
    let nm = NelderMead { max_iter, ..Default::default() };
    let runs: Vec<(f64, usize)> = pool[..starts]
        .par_iter()
        .map(|(_, x0)| {
            let mut seen = f64::INFINITY;
            let result = nm.minimize(
                |x| {
                    let v = rigidity_margin(s, c, &unpack(x, da, db));
                    seen = seen.min(v);
                    v
                },
                x0,
            );
            (seen, result.evaluations)
        })
        .collect();
    let sampled_min = pool.first().map_or(f64::INFINITY, |p| p.0);
    AdversarialReport {
        basis_id: s.name().to_string(),
        constant: c,
        starts,
        evaluations: samples + runs.iter().map(|r| r.1).sum::<usize>(),
        min_margin: runs.iter().map(|r| r.0).fold(sampled_min, f64::min),
        seed,
        generator: GENERATOR_ID,
    }
}

/// Product operator `e_a ⊗ e_b` and target `χ`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KkbCandidate {
    pub e_a: PsdOperator,
    pub e_b: PsdOperator,
    pub chi: f64,
}

impl KkbCandidate {
    pub fn new(e_a: PsdOperator, e_b: PsdOperator, chi: f64) -> Self {
        Self { e_a, e_b, chi }
    }

    /// Rescales `e_a ⊗ e_b` so the probabilities over `s` sum to one and takes
    /// `χ` as their maximum.
    pub fn normalized_for(s: &ProductBasis, e_a: PsdOperator, e_b: PsdOperator) -> Result<Self, MeasureError> {
        let g = gram_under(s, &MeasurementPair::new(e_a.clone(), e_b.clone()))?;
        let probs: Vec<f64> = (0..s.n()).map(|i| g[(i, i)].re).collect();
        let total: f64 = probs.iter().sum();
        if total <= 0.0 {
            return Err(MeasureError::ZeroProbability);
        }
        let chi = probs.iter().cloned().fold(0.0, f64::max) / total;
        Ok(Self { e_a: e_a.scale(1.0 / total), e_b, chi })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KkbReport {
    pub basis_id: String,
    pub chi: f64,
    pub chi_in_range: bool,
    pub probability_sum: f64,
    pub normalization_holds: bool,
    pub max_probability: f64,
    pub chi_holds: bool,
    /// Largest `|<ψ_i|E|ψ_j>|²` over `i != j`.
    pub worst_cross_term: f64,
    pub worst_pair: Option<(usize, usize)>,
    pub orthogonality_holds: bool,
    pub all_hold: bool,
    pub diagonals_positive: bool,
    pub disturbance: Option<f64>,
    /// Orthogonality with positive diagonals forces zero disturbance.
    pub implies_zero_disturbance: bool,
    pub note: &'static str,
}

/// Evaluates the three KKB conditions for one candidate. Passing them is a
/// necessary condition for asymptotic LOCC discrimination; the report is
/// evidence only.
pub fn check_kkb_conditions(s: &ProductBasis, cand: &KkbCandidate) -> Result<KkbReport, MeasureError> {
    let m = MeasurementPair::new(cand.e_a.clone(), cand.e_b.clone());
    let g = gram_under(s, &m)?;
    let n = s.n();
    let probs: Vec<f64> = (0..n).map(|i| g[(i, i)].re).collect();
    let probability_sum: f64 = probs.iter().sum();
    let max_probability = probs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut worst_cross_term = 0.0;
    let mut worst_pair = None;
    for i in 0..n {
        for j in i + 1..n {
            let v = g[(i, j)].norm_sqr();
            if worst_pair.is_none() || v > worst_cross_term {
                worst_cross_term = v;
                worst_pair = Some((i, j));
            }
        }
    }
    let chi_in_range = cand.chi >= 1.0 / n as f64 - KKB_TOL && cand.chi <= 1.0 + KKB_TOL;
    let normalization_holds = (probability_sum - 1.0).abs() <= KKB_TOL;
    let chi_holds = (max_probability - cand.chi).abs() <= KKB_TOL;
    let orthogonality_holds = worst_cross_term <= KKB_CROSS_TOL;
    let diagonals_positive = probs.iter().all(|&p| p > 0.0);
    Ok(KkbReport {
        basis_id: s.name().to_string(),
        chi: cand.chi,
        chi_in_range,
        probability_sum,
        normalization_holds,
        max_probability,
        chi_holds,
        worst_cross_term,
        worst_pair,
        orthogonality_holds,
        all_hold: chi_in_range && normalization_holds && chi_holds && orthogonality_holds,
        diagonals_positive,
        disturbance: disturbance(s, &m).ok(),
        implies_zero_disturbance: orthogonality_holds && diagonals_positive,
        note: "necessary conditions only; sufficiency is open",
    })
}
