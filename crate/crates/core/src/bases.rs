//! Orthonormal product bases and the tilings they induce.
//!
//! Amplitudes produced by the constructors here are real, and each local
//! factor has its leading nonzero amplitude positive.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_4;
use thiserror::Error;

use crate::matkernel::{inner, kron_vec, C64};
use crate::tiling::{Tile, Tiling, TilingError};

/// Amplitudes at or below this magnitude are outside a state's support.
pub const SUPPORT_THRESHOLD: f64 = 1e-12;

/// Tolerance for unit norms and pairwise orthogonality.
pub const ORTHONORMAL_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BasisError {
    #[error("state {label}: {party} factor has norm {norm}, expected 1")]
    NotUnit { label: usize, party: &'static str, norm: f64 },
    #[error("state {label}: factor dimensions {got:?} do not match {expected:?}")]
    Dimension { label: usize, got: (usize, usize), expected: (usize, usize) },
    #[error("states {i} and {j} have overlap {overlap:e}")]
    NotOrthogonal { i: usize, j: usize, overlap: f64 },
    #[error("basis has no states")]
    Empty,
    #[error("angle {0} is outside [0, pi/4]")]
    AngleOutOfRange(f64),
    #[error("tile {0:?} has area greater than two")]
    UnsupportedTile(Tile),
    #[error("supports of states {i} and {j} overlap without being equal")]
    PartialOverlap { i: usize, j: usize },
    #[error("a tile of area {area} is induced by {count} states")]
    Multiplicity { area: usize, count: usize },
    #[error(transparent)]
    Tiling(#[from] TilingError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProductState {
    pub label: usize,
    pub alice: Vec<C64>,
    pub bob: Vec<C64>,
}

fn norm(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn support(v: &[C64]) -> Vec<usize> {
    v.iter().enumerate().filter(|(_, z)| z.norm() > SUPPORT_THRESHOLD).map(|(i, _)| i).collect()
}

fn canonical_phase(mut v: Vec<C64>) -> Vec<C64> {
    if let Some(lead) = v.iter().find(|z| z.norm() > SUPPORT_THRESHOLD) {
        let phase = lead.conj() / lead.norm();
        for z in &mut v {
            *z *= phase;
        }
    }
    v
}

fn real_vector(dim: usize, entries: &[(usize, f64)]) -> Vec<C64> {
    let mut v = vec![C64::new(0.0, 0.0); dim];
    for &(i, x) in entries {
        v[i] = C64::new(x, 0.0);
    }
    v
}

impl ProductState {
    pub fn full(&self) -> Vec<C64> {
        kron_vec(&self.alice, &self.bob)
    }

    /// `<psi_self|psi_other>` computed factor by factor.
    pub fn overlap(&self, other: &ProductState) -> C64 {
        inner(&self.alice, &other.alice) * inner(&self.bob, &other.bob)
    }

    pub fn alice_support(&self) -> Vec<usize> {
        support(&self.alice)
    }

    pub fn bob_support(&self) -> Vec<usize> {
        support(&self.bob)
    }

    pub fn tile(&self) -> Tile {
        Tile::new(self.alice_support(), self.bob_support()).expect("unit vectors have nonempty support")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProductBasis {
    name: String,
    da: usize,
    db: usize,
    states: Vec<ProductState>,
}

impl ProductBasis {
    /// Validates unit norms, dimensions and pairwise orthogonality. Labels are
    /// reassigned to list positions.
    pub fn new(name: impl Into<String>, da: usize, db: usize, mut states: Vec<ProductState>) -> Result<Self, BasisError> {
        if states.is_empty() {
            return Err(BasisError::Empty);
        }
        for (i, s) in states.iter_mut().enumerate() {
            s.label = i;
            if (s.alice.len(), s.bob.len()) != (da, db) {
                return Err(BasisError::Dimension { label: i, got: (s.alice.len(), s.bob.len()), expected: (da, db) });
            }
            for (party, v) in [("alice", &s.alice), ("bob", &s.bob)] {
                let n = norm(v);
                if (n - 1.0).abs() > ORTHONORMAL_TOL {
                    return Err(BasisError::NotUnit { label: i, party, norm: n });
                }
            }
        }
        for i in 0..states.len() {
            for j in i + 1..states.len() {
                let overlap = states[i].overlap(&states[j]).norm();
                if overlap > ORTHONORMAL_TOL {
                    return Err(BasisError::NotOrthogonal { i, j, overlap });
                }
            }
        }
        Ok(Self { name: name.into(), da, db, states })
    }

    /// Loads a list of states, inferring the local dimensions from the first.
    pub fn from_states(name: impl Into<String>, states: Vec<ProductState>) -> Result<Self, BasisError> {
        let first = states.first().ok_or(BasisError::Empty)?;
        let (da, db) = (first.alice.len(), first.bob.len());
        Self::new(name, da, db, states)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn da(&self) -> usize {
        self.da
    }

    pub fn db(&self) -> usize {
        self.db
    }

    pub fn n(&self) -> usize {
        self.states.len()
    }

    pub fn states(&self) -> &[ProductState] {
        &self.states
    }

    pub fn state(&self, i: usize) -> &ProductState {
        &self.states[i]
    }

    pub fn is_complete(&self) -> bool {
        self.n() == self.da * self.db
    }

    /// Largest deviation of the state Gram matrix from the identity.
    pub fn orthonormality_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (i, s) in self.states.iter().enumerate() {
            for (j, t) in self.states.iter().enumerate() {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((s.overlap(t) - target).norm());
            }
        }
        worst
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.states).expect("states serialize")
    }

    pub fn from_json(name: impl Into<String>, text: &str) -> Result<Self, BasisLoadError> {
        let states: Vec<ProductState> = serde_json::from_str(text)?;
        Ok(Self::from_states(name, states)?)
    }
}

impl Serialize for ProductBasis {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.states.serialize(s)
    }
}

#[derive(Debug, Error)]
pub enum BasisLoadError {
    #[error("malformed basis file: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Basis(#[from] BasisError),
}

fn state(da: usize, db: usize, alice: &[(usize, f64)], bob: &[(usize, f64)]) -> ProductState {
    ProductState {
        label: 0,
        alice: canonical_phase(real_vector(da, alice)),
        bob: canonical_phase(real_vector(db, bob)),
    }
}

/// `|r>|c>` in row-major cell order.
pub fn standard_basis(da: usize, db: usize) -> ProductBasis {
    let states = (0..da).flat_map(|r| (0..db).map(move |c| state(da, db, &[(r, 1.0)], &[(c, 1.0)]))).collect();
    ProductBasis::new(format!("standard-{da}x{db}"), da, db, states).expect("standard basis is orthonormal")
}

/// The nine domino states in their conventional order.
pub fn domino_basis() -> ProductBasis {
    rotated_domino_basis([FRAC_PI_4; 4]).expect("pi/4 is in range").with_name("domino")
}

/// The rotated domino family; all angles equal to pi/4 give [`domino_basis`].
pub fn rotated_domino_basis(theta: [f64; 4]) -> Result<ProductBasis, BasisError> {
    for &t in &theta {
        if !(0.0..=FRAC_PI_4 + 1e-15).contains(&t) {
            return Err(BasisError::AngleOutOfRange(t));
        }
    }
    let (d, cs) = (3, |t: f64| (t.cos(), t.sin()));
    let (c1, s1) = cs(theta[0]);
    let (c2, s2) = cs(theta[1]);
    let (c3, s3) = cs(theta[2]);
    let (c4, s4) = cs(theta[3]);
    let states = vec![
        state(d, d, &[(1, 1.0)], &[(1, 1.0)]),
        state(d, d, &[(0, 1.0)], &[(0, c1), (1, s1)]),
        state(d, d, &[(0, 1.0)], &[(0, -s1), (1, c1)]),
        state(d, d, &[(2, 1.0)], &[(1, c2), (2, s2)]),
        state(d, d, &[(2, 1.0)], &[(1, -s2), (2, c2)]),
        state(d, d, &[(1, c3), (2, s3)], &[(0, 1.0)]),
        state(d, d, &[(1, -s3), (2, c3)], &[(0, 1.0)]),
        state(d, d, &[(0, c4), (1, s4)], &[(2, 1.0)]),
        state(d, d, &[(0, -s4), (1, c4)], &[(2, 1.0)]),
    ];
    let name = format!("rotated-domino({}, {}, {}, {})", theta[0], theta[1], theta[2], theta[3]);
    ProductBasis::new(name, d, d, states)
}

/// One state per `1x1` tile and a rotated pair per domino, tiles in canonical
/// order, plus-state first. Tiles missing from `angles` use pi/4.
pub fn domino_type_basis(t: &Tiling, angles: Option<&BTreeMap<Tile, f64>>) -> Result<ProductBasis, BasisError> {
    let (da, db) = (t.da(), t.db());
    let mut states = Vec::with_capacity(da * db);
    for tile in t.tiles() {
        let theta = angles.and_then(|m| m.get(tile)).copied().unwrap_or(FRAC_PI_4);
        let (c, s) = (theta.cos(), theta.sin());
        let (rows, cols) = (tile.rows(), tile.cols());
        match (rows.len(), cols.len()) {
            (1, 1) => states.push(state(da, db, &[(rows[0], 1.0)], &[(cols[0], 1.0)])),
            (1, 2) => {
                states.push(state(da, db, &[(rows[0], 1.0)], &[(cols[0], c), (cols[1], s)]));
                states.push(state(da, db, &[(rows[0], 1.0)], &[(cols[0], -s), (cols[1], c)]));
            }
            (2, 1) => {
                states.push(state(da, db, &[(rows[0], c), (rows[1], s)], &[(cols[0], 1.0)]));
                states.push(state(da, db, &[(rows[0], -s), (rows[1], c)], &[(cols[0], 1.0)]));
            }
            _ => return Err(BasisError::UnsupportedTile(tile.clone())),
        }
    }
    ProductBasis::new(format!("domino-type-{da}x{db}"), da, db, states)
}

/// Tiles are the distinct state supports; a tile of area `L` must carry
/// exactly `L` states.
pub fn induced_tiling(b: &ProductBasis) -> Result<Tiling, BasisError> {
    let tiles: Vec<Tile> = b.states().iter().map(ProductState::tile).collect();
    let mut counts: BTreeMap<&Tile, usize> = BTreeMap::new();
    for (i, ti) in tiles.iter().enumerate() {
        for (j, tj) in tiles.iter().enumerate().skip(i + 1) {
            if ti != tj && ti.cells().any(|(r, c)| tj.contains(r, c)) {
                return Err(BasisError::PartialOverlap { i, j });
            }
        }
        *counts.entry(ti).or_default() += 1;
    }
    for (tile, &count) in &counts {
        if count != tile.area() {
            return Err(BasisError::Multiplicity { area: tile.area(), count });
        }
    }
    Ok(Tiling::new(b.da(), b.db(), counts.into_keys().cloned().collect())?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tiling::{analyze, enumerate_domino_tilings, parse_tiling, CYCLIC_4X4_LAYOUT, DOMINO_LAYOUT};
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_1_SQRT_2, PI};

    fn gram_defect_from_full_vectors(b: &ProductBasis) -> f64 {
        let full: Vec<Vec<C64>> = b.states().iter().map(ProductState::full).collect();
        let mut worst: f64 = 0.0;
        for (i, u) in full.iter().enumerate() {
            for (j, v) in full.iter().enumerate() {
                let dot: C64 = u.iter().zip(v).map(|(x, y)| x.conj() * y).sum();
                worst = worst.max((dot - if i == j { 1.0 } else { 0.0 }).norm());
            }
        }
        worst
    }

    fn re(v: &[C64]) -> Vec<f64> {
        v.iter().map(|z| z.re).collect()
    }

    #[test]
    fn domino_states_match_listing() {
        let b = domino_basis();
        assert_eq!(b.n(), 9);
        let h = FRAC_1_SQRT_2;
        assert_eq!(re(&b.state(0).alice), vec![0.0, 1.0, 0.0]);
        assert_eq!(re(&b.state(0).bob), vec![0.0, 1.0, 0.0]);
        let expect: [(&[f64], &[f64]); 8] = [
            (&[1.0, 0.0, 0.0], &[h, h, 0.0]),
            (&[1.0, 0.0, 0.0], &[h, -h, 0.0]),
            (&[0.0, 0.0, 1.0], &[0.0, h, h]),
            (&[0.0, 0.0, 1.0], &[0.0, h, -h]),
            (&[0.0, h, h], &[1.0, 0.0, 0.0]),
            (&[0.0, h, -h], &[1.0, 0.0, 0.0]),
            (&[h, h, 0.0], &[0.0, 0.0, 1.0]),
            (&[h, -h, 0.0], &[0.0, 0.0, 1.0]),
        ];
        for (k, (a, bv)) in expect.iter().enumerate() {
            let s = b.state(k + 1);
            for (x, y) in re(&s.alice).iter().zip(a.iter()) {
                assert!((x - y).abs() < 1e-15);
            }
            for (x, y) in re(&s.bob).iter().zip(bv.iter()) {
                assert!((x - y).abs() < 1e-15);
            }
        }
        assert!(gram_defect_from_full_vectors(&b) < 1e-12);
    }

    #[test]
    fn domino_induces_five_tile_layout() {
        let t = induced_tiling(&domino_basis()).unwrap();
        assert_eq!(t, parse_tiling(DOMINO_LAYOUT).unwrap());
        assert_eq!(analyze(&t).max_tile_area, 2);
        assert_eq!(t.tiles().iter().filter(|x| x.area() == 1).count(), 1);
    }

    #[test]
    fn rotated_examples() {
        let r = rotated_domino_basis([PI / 6.0, 0.3, 0.5, 0.7]).unwrap();
        let psi2 = r.state(1);
        assert_eq!(re(&psi2.alice), vec![1.0, 0.0, 0.0]);
        assert!((psi2.bob[0].re - (PI / 6.0).cos()).abs() < 1e-15);
        assert!((psi2.bob[1].re - 0.5).abs() < 1e-15);
        assert_eq!(induced_tiling(&r).unwrap(), induced_tiling(&domino_basis()).unwrap());

        let zero = rotated_domino_basis([0.0; 4]).unwrap();
        let t = induced_tiling(&zero).unwrap();
        assert_eq!(t, Tiling::standard(3, 3));
        for s in zero.states() {
            assert_eq!(s.tile().area(), 1);
        }

        assert_eq!(rotated_domino_basis([1.0, 0.1, 0.1, 0.1]).unwrap_err(), BasisError::AngleOutOfRange(1.0));
    }

    #[test]
    fn rotated_at_quarter_pi_spans_domino_pairs() {
        let r = rotated_domino_basis([FRAC_PI_4; 4]).unwrap();
        let d = domino_basis();
        for pair in [(1, 2), (3, 4), (5, 6), (7, 8)] {
            // each domino state lies in the span of the rotated pair
            for k in [pair.0, pair.1] {
                let w: f64 = [pair.0, pair.1].iter().map(|&j| r.state(j).overlap(d.state(k)).norm_sqr()).sum();
                assert!((w - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn domino_type_on_domino_layout_is_domino_basis() {
        let t = parse_tiling(DOMINO_LAYOUT).unwrap();
        let b = domino_type_basis(&t, None).unwrap();
        let d = domino_basis();
        for s in d.states() {
            let hits = b.states().iter().filter(|x| x.alice == s.alice && x.bob == s.bob).count();
            assert_eq!(hits, 1);
        }
    }

    #[test]
    fn domino_type_on_cyclic_layout() {
        let t = parse_tiling(CYCLIC_4X4_LAYOUT).unwrap();
        let b = domino_type_basis(&t, None).unwrap();
        assert_eq!(b.n(), 16);
        assert!(b.is_complete());
        assert!(gram_defect_from_full_vectors(&b) < 1e-12);
    }

    #[test]
    fn single_tiles_give_standard_basis() {
        let b = domino_type_basis(&Tiling::standard(2, 3), None).unwrap();
        assert_eq!(b.states(), standard_basis(2, 3).states());
    }

    #[test]
    fn unsupported_and_overlapping_inputs() {
        let big = parse_tiling("A A\nA A").unwrap();
        assert!(matches!(domino_type_basis(&big, None), Err(BasisError::UnsupportedTile(_))));

        let h = FRAC_1_SQRT_2;
        let s = |a: Vec<f64>, b: Vec<f64>| ProductState {
            label: 0,
            alice: a.into_iter().map(|x| C64::new(x, 0.0)).collect(),
            bob: b.into_iter().map(|x| C64::new(x, 0.0)).collect(),
        };
        let ok = ProductBasis::new(
            "t",
            2,
            2,
            vec![s(vec![1.0, 0.0], vec![h, h]), s(vec![1.0, 0.0], vec![h, -h]), s(vec![0.0, 1.0], vec![1.0, 0.0]), s(vec![0.0, 1.0], vec![0.0, 1.0])],
        )
        .unwrap();
        assert_eq!(induced_tiling(&ok).unwrap().tiles().len(), 3);

        let partial = ProductBasis::new(
            "p",
            2,
            3,
            vec![s(vec![1.0, 0.0], vec![h, h, 0.0]), s(vec![1.0, 0.0], vec![0.0, 0.0, 1.0]), s(vec![1.0, 0.0], vec![h, -h, 0.0])],
        )
        .unwrap();
        // incomplete: grid is not covered
        assert!(matches!(induced_tiling(&partial), Err(BasisError::Tiling(TilingError::Uncovered { .. }))));

        let bad = ProductBasis::new("x", 2, 2, vec![s(vec![1.0, 0.0], vec![1.0, 0.0]), s(vec![1.0, 0.0], vec![h, h])]);
        assert!(matches!(bad, Err(BasisError::NotOrthogonal { i: 0, j: 1, .. })));

        let overlap = ProductBasis::new(
            "o",
            2,
            2,
            vec![s(vec![1.0, 0.0], vec![h, h]), s(vec![h, h], vec![h, -h])],
        )
        .unwrap();
        assert_eq!(induced_tiling(&overlap).unwrap_err(), BasisError::PartialOverlap { i: 0, j: 1 });
    }

    #[test]
    fn json_round_trip() {
        let b = rotated_domino_basis([0.2, 0.4, 0.6, 0.1]).unwrap();
        let text = b.to_json();
        let back = ProductBasis::from_json("loaded", &text).unwrap();
        assert_eq!(back.states(), b.states());
        assert!(text.contains("\"alice\""));
    }

    #[test]
    fn domino_type_round_trip_for_small_grids() {
        for (da, db) in [(2, 2), (2, 3), (3, 3), (3, 4)] {
            for t in enumerate_domino_tilings(da, db, false).unwrap() {
                let b = domino_type_basis(&t, None).unwrap();
                assert!(b.orthonormality_defect() < 1e-12);
                assert_eq!(induced_tiling(&b).unwrap(), t);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn rotation_keeps_tiling(t in prop::array::uniform4(1e-6f64..=FRAC_PI_4)) {
            let b = rotated_domino_basis(t).unwrap();
            prop_assert!(b.orthonormality_defect() < 1e-12);
            prop_assert_eq!(induced_tiling(&b).unwrap(), parse_tiling(DOMINO_LAYOUT).unwrap());
        }

        #[test]
        fn random_angles_stay_orthonormal(skip in 0usize..40, seed in any::<u64>()) {
            let t = enumerate_domino_tilings(3, 3, false).unwrap().nth(skip).unwrap();
            let angles: BTreeMap<Tile, f64> = t
                .tiles()
                .iter()
                .enumerate()
                .map(|(i, tile)| (tile.clone(), 0.01 + (crate::rng::derive_seed(seed, i as u64) % 1000) as f64 * 7.8e-4))
                .collect();
            let b = domino_type_basis(&t, Some(&angles)).unwrap();
            prop_assert!(gram_defect_from_full_vectors(&b) < 1e-12);
            prop_assert_eq!(induced_tiling(&b).unwrap(), t);
        }
    }
}
