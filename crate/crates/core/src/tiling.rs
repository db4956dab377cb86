//! Tilings of a `d_A x d_B` grid by submatrix-shaped tiles.
//!
//! A tile is a set `R x C` of cells; it need not be contiguous. A [`Tiling`]
//! is always a partition of the full grid and is stored in canonical order:
//! tiles sorted by their first cell in row-major scan order.

use serde::{Serialize, Serializer};
use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use thiserror::Error;

/// Largest grid (in cells) the domino enumerator accepts.
pub const ENUMERATION_MAX_CELLS: usize = 30;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TilingError {
    #[error("tile must have at least one row and one column")]
    EmptyTile,
    #[error("cell ({row}, {col}) lies outside the {da}x{db} grid")]
    OutOfRange { row: usize, col: usize, da: usize, db: usize },
    #[error("cell ({row}, {col}) is covered by more than one tile")]
    Overlap { row: usize, col: usize },
    #[error("cell ({row}, {col}) is not covered by any tile")]
    Uncovered { row: usize, col: usize },
    #[error("label `{label}` is not submatrix-shaped: cell ({row}, {col}) is missing from it")]
    NotSubmatrix { label: String, row: usize, col: usize },
    #[error("line {line}: expected {expected} labels, found {found}")]
    Ragged { line: usize, expected: usize, found: usize },
    #[error("tiling text contains no rows")]
    EmptyText,
    #[error("refusing to enumerate a {da}x{db} grid ({cells} cells > {max})")]
    TooLarge { da: usize, db: usize, cells: usize, max: usize },
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Tile {
    rows: Vec<usize>,
    cols: Vec<usize>,
}

impl Tile {
    pub fn new(rows: impl IntoIterator<Item = usize>, cols: impl IntoIterator<Item = usize>) -> Result<Self, TilingError> {
        let rows: Vec<usize> = rows.into_iter().collect::<BTreeSet<_>>().into_iter().collect();
        let cols: Vec<usize> = cols.into_iter().collect::<BTreeSet<_>>().into_iter().collect();
        if rows.is_empty() || cols.is_empty() {
            return Err(TilingError::EmptyTile);
        }
        Ok(Self { rows, cols })
    }

    pub fn single(row: usize, col: usize) -> Self {
        Self { rows: vec![row], cols: vec![col] }
    }

    pub fn rows(&self) -> &[usize] {
        &self.rows
    }

    pub fn cols(&self) -> &[usize] {
        &self.cols
    }

    pub fn area(&self) -> usize {
        self.rows.len() * self.cols.len()
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        self.rows.binary_search(&row).is_ok() && self.cols.binary_search(&col).is_ok()
    }

    /// Cells in row-major order.
    pub fn cells(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.rows.iter().flat_map(move |&r| self.cols.iter().map(move |&c| (r, c)))
    }

    pub fn first_cell(&self) -> (usize, usize) {
        (self.rows[0], self.cols[0])
    }

    /// A `1 x 2` tile (one row, two columns).
    pub fn is_horizontal_domino(&self) -> bool {
        self.rows.len() == 1 && self.cols.len() == 2
    }

    /// A `2 x 1` tile (two rows, one column).
    pub fn is_vertical_domino(&self) -> bool {
        self.rows.len() == 2 && self.cols.len() == 1
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct Tiling {
    da: usize,
    db: usize,
    tiles: Vec<Tile>,
}

impl Tiling {
    /// Validates that `tiles` partition the grid and stores them in canonical
    /// order. Identical tiles listed twice are an overlap.
    pub fn new(da: usize, db: usize, mut tiles: Vec<Tile>) -> Result<Self, TilingError> {
        let mut owner = vec![false; da * db];
        for tile in &tiles {
            for (r, c) in tile.cells() {
                if r >= da || c >= db {
                    return Err(TilingError::OutOfRange { row: r, col: c, da, db });
                }
                if std::mem::replace(&mut owner[r * db + c], true) {
                    return Err(TilingError::Overlap { row: r, col: c });
                }
            }
        }
        if let Some(idx) = owner.iter().position(|&o| !o) {
            return Err(TilingError::Uncovered { row: idx / db, col: idx % db });
        }
        tiles.sort_by_key(|t| t.first_cell());
        Ok(Self { da, db, tiles })
    }

    /// All `1 x 1` tiles.
    pub fn standard(da: usize, db: usize) -> Self {
        let tiles = (0..da).flat_map(|r| (0..db).map(move |c| Tile::single(r, c))).collect();
        Self { da, db, tiles }
    }

    pub fn da(&self) -> usize {
        self.da
    }

    pub fn db(&self) -> usize {
        self.db
    }

    pub fn tiles(&self) -> &[Tile] {
        &self.tiles
    }

    /// Index of the tile containing a cell.
    pub fn tile_of(&self, row: usize, col: usize) -> Option<usize> {
        self.tiles.iter().position(|t| t.contains(row, col))
    }

    /// Grid of tile indices, row-major.
    pub fn owner_grid(&self) -> Vec<usize> {
        let mut grid = vec![0; self.da * self.db];
        for (i, tile) in self.tiles.iter().enumerate() {
            for (r, c) in tile.cells() {
                grid[r * self.db + c] = i;
            }
        }
        grid
    }

    pub fn max_tile_area(&self) -> usize {
        self.tiles.iter().map(Tile::area).max().unwrap_or(0)
    }

    pub fn is_domino_type(&self) -> bool {
        self.tiles.iter().all(|t| t.area() <= 2)
    }

    /// Canonical text: one line per row, labels `T0..Tk` in first-cell order.
    pub fn to_text(&self) -> String {
        let grid = self.owner_grid();
        let mut out = String::new();
        for r in 0..self.da {
            let line: Vec<String> = (0..self.db).map(|c| format!("T{}", grid[r * self.db + c])).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }
}

impl fmt::Display for Tiling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

/// Parses the grid-label format: one line per row of whitespace-separated
/// labels, `#` starting a comment line, blank lines ignored.
pub fn parse_tiling(text: &str) -> Result<Tiling, TilingError> {
    let mut rows: Vec<Vec<&str>> = Vec::new();
    let mut width = None;
    for (lineno, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let labels: Vec<&str> = trimmed.split_whitespace().collect();
        match width {
            None => width = Some(labels.len()),
            Some(w) if w != labels.len() => {
                return Err(TilingError::Ragged { line: lineno + 1, expected: w, found: labels.len() })
            }
            _ => {}
        }
        rows.push(labels);
    }
    let db = width.ok_or(TilingError::EmptyText)?;
    let da = rows.len();

    let mut cells: BTreeMap<&str, Vec<(usize, usize)>> = BTreeMap::new();
    for (r, row) in rows.iter().enumerate() {
        for (c, label) in row.iter().enumerate() {
            cells.entry(label).or_default().push((r, c));
        }
    }
    let mut tiles = Vec::with_capacity(cells.len());
    for (label, members) in &cells {
        let tile = Tile::new(members.iter().map(|x| x.0), members.iter().map(|x| x.1))?;
        if tile.area() != members.len() {
            let (row, col) = tile
                .cells()
                .find(|&(r, c)| rows[r][c] != *label)
                .expect("a tile larger than its label set has a foreign cell");
            return Err(TilingError::NotSubmatrix { label: label.to_string(), row, col });
        }
        tiles.push(tile);
    }
    Tiling::new(da, db, tiles)
}

/// Graph diameter; disconnected graphs have no finite diameter.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Diameter {
    Finite(usize),
    Infinite,
}

impl Diameter {
    pub fn finite(self) -> Option<usize> {
        match self {
            Diameter::Finite(d) => Some(d),
            Diameter::Infinite => None,
        }
    }
}

impl Serialize for Diameter {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Diameter::Finite(d) => s.serialize_u64(*d as u64),
            Diameter::Infinite => s.serialize_str("infinite"),
        }
    }
}

impl fmt::Display for Diameter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Diameter::Finite(d) => write!(f, "{d}"),
            Diameter::Infinite => f.write_str("infinite"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TilingAnalysis {
    /// Sorted adjacency lists on the rows `[d_A]`.
    pub row_graph: Vec<Vec<usize>>,
    /// Sorted adjacency lists on the columns `[d_B]`.
    pub col_graph: Vec<Vec<usize>>,
    pub irreducible: bool,
    pub diameter: Diameter,
    pub domino_type: bool,
    pub max_tile_area: usize,
}

fn graph_from_groups<'a>(vertices: usize, groups: impl Iterator<Item = &'a [usize]>) -> Vec<Vec<usize>> {
    let mut adj: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); vertices];
    for group in groups {
        for &i in group {
            for &j in group {
                if i != j {
                    adj[i].insert(j);
                }
            }
        }
    }
    adj.into_iter().map(|s| s.into_iter().collect()).collect()
}

fn bfs_eccentricity(adj: &[Vec<usize>], start: usize) -> Option<usize> {
    let mut dist = vec![usize::MAX; adj.len()];
    dist[start] = 0;
    let mut queue = VecDeque::from([start]);
    while let Some(u) = queue.pop_front() {
        for &v in &adj[u] {
            if dist[v] == usize::MAX {
                dist[v] = dist[u] + 1;
                queue.push_back(v);
            }
        }
    }
    if dist.contains(&usize::MAX) {
        None
    } else {
        dist.into_iter().max()
    }
}

/// All-pairs BFS diameter.
pub fn graph_diameter(adj: &[Vec<usize>]) -> Diameter {
    let mut worst = 0;
    for v in 0..adj.len() {
        match bfs_eccentricity(adj, v) {
            Some(e) => worst = worst.max(e),
            None => return Diameter::Infinite,
        }
    }
    Diameter::Finite(worst)
}

pub fn analyze(t: &Tiling) -> TilingAnalysis {
    let row_graph = graph_from_groups(t.da, t.tiles.iter().map(|x| x.rows()));
    let col_graph = graph_from_groups(t.db, t.tiles.iter().map(|x| x.cols()));
    let dr = graph_diameter(&row_graph);
    let dc = graph_diameter(&col_graph);
    let diameter = dr.max(dc);
    TilingAnalysis {
        irreducible: diameter != Diameter::Infinite,
        diameter,
        domino_type: t.is_domino_type(),
        max_tile_area: t.max_tile_area(),
        row_graph,
        col_graph,
    }
}

/// Lazily enumerates every tiling of the grid by contiguous `1x1`, `1x2` and
/// `2x1` tiles, each exactly once.
pub fn enumerate_domino_tilings(da: usize, db: usize, irreducible_only: bool) -> Result<DominoTilings, TilingError> {
    let cells = da * db;
    if cells > ENUMERATION_MAX_CELLS {
        return Err(TilingError::TooLarge { da, db, cells, max: ENUMERATION_MAX_CELLS });
    }
    Ok(DominoTilings {
        da,
        db,
        irreducible_only,
        filled: vec![false; cells],
        stack: Vec::new(),
        started: false,
        done: cells == 0,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Piece {
    Single,
    Horizontal,
    Vertical,
}

const PIECES: [Piece; 3] = [Piece::Single, Piece::Horizontal, Piece::Vertical];

/// Depth-first enumerator behind [`enumerate_domino_tilings`].
pub struct DominoTilings {
    da: usize,
    db: usize,
    irreducible_only: bool,
    filled: Vec<bool>,
    stack: Vec<(usize, usize)>,
    started: bool,
    done: bool,
}

impl DominoTilings {
    fn footprint(&self, cell: usize, piece: Piece) -> Option<[usize; 2]> {
        let (r, c) = (cell / self.db, cell % self.db);
        let other = match piece {
            Piece::Single => return Some([cell, cell]),
            Piece::Horizontal if c + 1 < self.db => cell + 1,
            Piece::Vertical if r + 1 < self.da => cell + self.db,
            _ => return None,
        };
        (!self.filled[other]).then_some([cell, other])
    }

    fn set(&mut self, cells: [usize; 2], value: bool) {
        self.filled[cells[0]] = value;
        self.filled[cells[1]] = value;
    }

    fn place_from(&mut self, cell: usize, first_choice: usize) -> bool {
        for choice in first_choice..PIECES.len() {
            if let Some(fp) = self.footprint(cell, PIECES[choice]) {
                self.set(fp, true);
                self.stack.push((cell, choice));
                return true;
            }
        }
        false
    }

    fn backtrack(&mut self) -> bool {
        while let Some((cell, choice)) = self.stack.pop() {
            let fp = self.footprint_placed(cell, PIECES[choice]);
            self.set(fp, false);
            if self.place_from(cell, choice + 1) {
                return true;
            }
        }
        false
    }

    fn footprint_placed(&self, cell: usize, piece: Piece) -> [usize; 2] {
        match piece {
            Piece::Single => [cell, cell],
            Piece::Horizontal => [cell, cell + 1],
            Piece::Vertical => [cell, cell + self.db],
        }
    }

    fn current(&self) -> Tiling {
        let tiles = self
            .stack
            .iter()
            .map(|&(cell, choice)| {
                let (r, c) = (cell / self.db, cell % self.db);
                match PIECES[choice] {
                    Piece::Single => Tile::single(r, c),
                    Piece::Horizontal => Tile { rows: vec![r], cols: vec![c, c + 1] },
                    Piece::Vertical => Tile { rows: vec![r, r + 1], cols: vec![c] },
                }
            })
            .collect();
        Tiling::new(self.da, self.db, tiles).expect("enumerator produces partitions")
    }
}

impl Iterator for DominoTilings {
    type Item = Tiling;

    fn next(&mut self) -> Option<Tiling> {
        loop {
            if self.done {
                return None;
            }
            if self.started && !self.backtrack() {
                self.done = true;
                return None;
            }
            self.started = true;
            while let Some(cell) = self.filled.iter().position(|&f| !f) {
                // a single tile always fits, so this cannot fail
                let placed = self.place_from(cell, 0);
                debug_assert!(placed);
            }
            let tiling = self.current();
            if !self.irreducible_only || analyze(&tiling).irreducible {
                return Some(tiling);
            }
        }
    }
}

/// The five-tile `3x3` layout induced by the domino states.
pub const DOMINO_LAYOUT: &str = "A A B\nC D B\nC E E\n";

/// The irreducible `4x4` domino-type tiling with two wrap-around tiles (row and
/// column graphs are both 4-cycles).
pub const CYCLIC_4X4_LAYOUT: &str = "\
C A A W
C D B B
H D E H
F F E W
";
