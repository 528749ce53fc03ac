//! Spatial histograms: face counts per grid cell plus edge counts for the
//! crossings between 4-adjacent cells.
//!
//! Storage is row-major. The vertical-edge matrix has `rows x (cols - 1)`
//! entries, entry `(i, j)` sitting between faces `(i, j)` and `(i, j + 1)`.
//! The horizontal-edge matrix has `(rows - 1) x cols` entries, entry `(i, j)`
//! sitting between faces `(i, j)` and `(i + 1, j)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance used by [`SpatialHistogram::check_consistency`].
pub const CONSISTENCY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellIndex {
    pub row: usize,
    pub col: usize,
}

impl CellIndex {
    pub const fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }

    pub fn is_adjacent(&self, other: &CellIndex) -> bool {
        self.row.abs_diff(other.row) + self.col.abs_diff(other.col) == 1
    }
}

/// An edge between two 4-adjacent faces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Edge {
    /// Between `(row, col)` and `(row, col + 1)`.
    Vertical { row: usize, col: usize },
    /// Between `(row, col)` and `(row + 1, col)`.
    Horizontal { row: usize, col: usize },
}

impl Edge {
    /// The edge joining two adjacent cells, if they are adjacent.
    pub fn between(a: CellIndex, b: CellIndex) -> Option<Edge> {
        if !a.is_adjacent(&b) {
            return None;
        }
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        if lo.row == hi.row {
            Some(Edge::Vertical { row: lo.row, col: lo.col })
        } else {
            Some(Edge::Horizontal { row: lo.row, col: lo.col })
        }
    }

    /// Endpoint faces, top/left first.
    pub fn faces(&self) -> (CellIndex, CellIndex) {
        match *self {
            Edge::Vertical { row, col } => (CellIndex::new(row, col), CellIndex::new(row, col + 1)),
            Edge::Horizontal { row, col } => (CellIndex::new(row, col), CellIndex::new(row + 1, col)),
        }
    }
}

/// Axis-aligned rectangle of cells, bounds inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RangeQuery {
    pub row_lo: usize,
    pub row_hi: usize,
    pub col_lo: usize,
    pub col_hi: usize,
}

impl RangeQuery {
    pub fn new(row_lo: usize, row_hi: usize, col_lo: usize, col_hi: usize) -> Result<Self> {
        if row_lo > row_hi || col_lo > col_hi {
            return Err(Error::InvalidQuery(format!(
                "rows {row_lo}..={row_hi}, cols {col_lo}..={col_hi} are not ordered"
            )));
        }
        Ok(Self { row_lo, row_hi, col_lo, col_hi })
    }

    pub fn single(cell: CellIndex) -> Self {
        Self { row_lo: cell.row, row_hi: cell.row, col_lo: cell.col, col_hi: cell.col }
    }

    pub fn full(rows: usize, cols: usize) -> Self {
        Self { row_lo: 0, row_hi: rows - 1, col_lo: 0, col_hi: cols - 1 }
    }

    pub fn contains(&self, cell: CellIndex) -> bool {
        (self.row_lo..=self.row_hi).contains(&cell.row) && (self.col_lo..=self.col_hi).contains(&cell.col)
    }

    pub fn intersects(&self, other: &RangeQuery) -> bool {
        self.row_lo <= other.row_hi
            && other.row_lo <= self.row_hi
            && self.col_lo <= other.col_hi
            && other.col_lo <= self.col_hi
    }

    pub fn cell_count(&self) -> usize {
        (self.row_hi - self.row_lo + 1) * (self.col_hi - self.col_lo + 1)
    }

    pub fn cells(&self) -> impl Iterator<Item = CellIndex> + '_ {
        (self.row_lo..=self.row_hi).flat_map(move |r| (self.col_lo..=self.col_hi).map(move |c| CellIndex::new(r, c)))
    }

    pub fn check_bounds(&self, rows: usize, cols: usize) -> Result<()> {
        if self.row_lo > self.row_hi || self.col_lo > self.col_hi {
            return Err(Error::InvalidQuery(format!("{self:?} is not ordered")));
        }
        if self.row_hi >= rows || self.col_hi >= cols {
            return Err(Error::InvalidQuery(format!("{self:?} exceeds the {rows}x{cols} grid")));
        }
        Ok(())
    }
}

/// Faces, vertical edges and horizontal edges of a grid, with the public
/// trajectory count `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialHistogram {
    rows: usize,
    cols: usize,
    faces: Vec<f64>,
    edges_v: Vec<f64>,
    edges_h: Vec<f64>,
    n: f64,
    /// Per face, the sum of `1 / len` over the paths visiting it.
    path_mass: Option<Vec<f64>>,
    /// Longest ingested path, in cells.
    max_path_len: Option<usize>,
}

pub(crate) fn check_dims(rows: usize, cols: usize) -> Result<()> {
    if rows == 0 || cols == 0 {
        return Err(Error::InvalidDimensions { rows, cols, need: "non-zero" });
    }
    Ok(())
}

/// Quadtree splits need both sides to be powers of two.
pub(crate) fn check_quadtree_dims(rows: usize, cols: usize) -> Result<()> {
    if !rows.is_power_of_two() || !cols.is_power_of_two() {
        return Err(Error::InvalidDimensions { rows, cols, need: "non-zero powers of two" });
    }
    Ok(())
}

impl SpatialHistogram {
    /// All-zero histogram.
    pub fn zeros(rows: usize, cols: usize) -> Result<Self> {
        check_dims(rows, cols)?;
        Ok(Self {
            rows,
            cols,
            faces: vec![0.0; rows * cols],
            edges_v: vec![0.0; rows * (cols - 1)],
            edges_h: vec![0.0; (rows - 1) * cols],
            n: 0.0,
            path_mass: None,
            max_path_len: None,
        })
    }

    /// Assemble a histogram from row-major component vectors.
    pub fn from_parts(
        rows: usize,
        cols: usize,
        faces: Vec<f64>,
        edges_v: Vec<f64>,
        edges_h: Vec<f64>,
        n: f64,
    ) -> Result<Self> {
        check_dims(rows, cols)?;
        let expect = [
            ("faces", faces.len(), rows * cols),
            ("edges_v", edges_v.len(), rows * (cols - 1)),
            ("edges_h", edges_h.len(), (rows - 1) * cols),
        ];
        for (name, got, want) in expect {
            if got != want {
                return Err(Error::DimensionMismatch(format!("{name} has {got} entries, expected {want}")));
            }
        }
        for (component, values) in [("faces", &faces), ("edges_v", &edges_v), ("edges_h", &edges_h)] {
            if let Some(&value) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
                return Err(Error::NegativeEntry { component, value });
            }
        }
        if !n.is_finite() || n < 0.0 {
            return Err(Error::NegativeEntry { component: "n", value: n });
        }
        Ok(Self { rows, cols, faces, edges_v, edges_h, n, path_mass: None, max_path_len: None })
    }

    /// Build the histogram of a set of cell paths.
    ///
    /// Each path must be non-empty, 4-adjacent step to step, and loop-free.
    /// Every visited face and every crossed edge gains one count per path.
    pub fn from_cell_paths(paths: &[Vec<CellIndex>], rows: usize, cols: usize) -> Result<Self> {
        let mut h = Self::zeros(rows, cols)?;
        let mut mass = vec![0.0; rows * cols];
        let mut seen = vec![usize::MAX; rows * cols];
        let mut k_max = 0;
        for (p, path) in paths.iter().enumerate() {
            if path.is_empty() {
                return Err(Error::EmptyPath(p));
            }
            for cell in path {
                if cell.row >= rows || cell.col >= cols {
                    return Err(Error::CellOutOfBounds { row: cell.row, col: cell.col, rows, cols });
                }
                let idx = cell.row * cols + cell.col;
                if seen[idx] == p {
                    return Err(Error::RepeatedCell { path: p, cell: *cell });
                }
                seen[idx] = p;
            }
            for w in path.windows(2) {
                if !w[0].is_adjacent(&w[1]) {
                    return Err(Error::NonAdjacentStep { path: p, from: w[0], to: w[1] });
                }
            }
            let share = 1.0 / path.len() as f64;
            for cell in path {
                let idx = cell.row * cols + cell.col;
                h.faces[idx] += 1.0;
                mass[idx] += share;
            }
            for w in path.windows(2) {
                let edge = Edge::between(w[0], w[1]).expect("adjacency checked");
                *h.edge_mut(edge) += 1.0;
            }
            k_max = k_max.max(path.len());
        }
        h.n = paths.len() as f64;
        h.path_mass = Some(mass);
        h.max_path_len = Some(k_max);
        Ok(h)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Public trajectory count.
    pub fn n(&self) -> f64 {
        self.n
    }

    pub fn set_n(&mut self, n: f64) {
        self.n = n;
    }

    pub fn face_count(&self) -> usize {
        self.rows * self.cols
    }

    pub fn edge_count(&self) -> usize {
        self.edges_v.len() + self.edges_h.len()
    }

    /// Faces plus edges, i.e. `|H|`.
    pub fn entry_count(&self) -> usize {
        self.face_count() + self.edge_count()
    }

    pub fn faces(&self) -> &[f64] {
        &self.faces
    }

    pub fn edges_v(&self) -> &[f64] {
        &self.edges_v
    }

    pub fn edges_h(&self) -> &[f64] {
        &self.edges_h
    }

    pub fn faces_mut(&mut self) -> &mut [f64] {
        &mut self.faces
    }

    pub fn edges_v_mut(&mut self) -> &mut [f64] {
        &mut self.edges_v
    }

    pub fn edges_h_mut(&mut self) -> &mut [f64] {
        &mut self.edges_h
    }

    pub fn path_mass(&self) -> Option<&[f64]> {
        self.path_mass.as_deref()
    }

    pub fn max_path_len(&self) -> Option<usize> {
        self.max_path_len
    }

    /// Drop ingestion metadata; published histograms never carry it.
    pub fn without_metadata(mut self) -> Self {
        self.path_mass = None;
        self.max_path_len = None;
        self
    }

    pub fn face(&self, cell: CellIndex) -> f64 {
        self.faces[cell.row * self.cols + cell.col]
    }

    pub fn face_mut(&mut self, cell: CellIndex) -> &mut f64 {
        &mut self.faces[cell.row * self.cols + cell.col]
    }

    pub fn edge(&self, edge: Edge) -> f64 {
        match edge {
            Edge::Vertical { row, col } => self.edges_v[row * (self.cols - 1) + col],
            Edge::Horizontal { row, col } => self.edges_h[row * self.cols + col],
        }
    }

    pub fn edge_mut(&mut self, edge: Edge) -> &mut f64 {
        match edge {
            Edge::Vertical { row, col } => &mut self.edges_v[row * (self.cols - 1) + col],
            Edge::Horizontal { row, col } => &mut self.edges_h[row * self.cols + col],
        }
    }

    /// All edges, vertical first, each in row-major order.
    pub fn edges(&self) -> impl Iterator<Item = Edge> + '_ {
        let (rows, cols) = (self.rows, self.cols);
        let vertical = (0..rows).flat_map(move |row| (0..cols - 1).map(move |col| Edge::Vertical { row, col }));
        let horizontal = (0..rows - 1).flat_map(move |row| (0..cols).map(move |col| Edge::Horizontal { row, col }));
        vertical.chain(horizontal)
    }

    /// Every entry: faces, then vertical edges, then horizontal edges.
    pub fn entries(&self) -> impl Iterator<Item = f64> + '_ {
        self.faces.iter().chain(&self.edges_v).chain(&self.edges_h).copied()
    }

    pub fn entries_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.faces.iter_mut().chain(self.edges_v.iter_mut()).chain(self.edges_h.iter_mut())
    }

    pub fn face_total(&self) -> f64 {
        self.faces.iter().sum()
    }

    fn same_shape(&self, other: &SpatialHistogram) -> Result<()> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(())
    }

    /// `a * self + b * other`, entrywise; `n` combines the same way.
    pub fn linear_combination(&self, a: f64, other: &SpatialHistogram, b: f64) -> Result<Self> {
        self.same_shape(other)?;
        let mut out = self.clone().without_metadata();
        for (x, y) in out.entries_mut().zip(other.entries()) {
            *x = a * *x + b * y;
        }
        out.n = a * self.n + b * other.n;
        Ok(out)
    }

    /// Sum of absolute entrywise differences over faces and edges.
    pub fn l1_distance(&self, other: &SpatialHistogram) -> Result<f64> {
        self.same_shape(other)?;
        Ok(self.entries().zip(other.entries()).map(|(a, b)| (a - b).abs()).sum())
    }

    /// Answer a range query: faces inside the rectangle minus edges with
    /// both endpoint faces inside it. Border edges are not counted.
    ///
    /// A trajectory that enters the rectangle in several disjoint runs is
    /// counted once per run.
    pub fn eval_range_query(&self, q: &RangeQuery) -> Result<f64> {
        q.check_bounds(self.rows, self.cols)?;
        let mut total = 0.0;
        for row in q.row_lo..=q.row_hi {
            for col in q.col_lo..=q.col_hi {
                total += self.faces[row * self.cols + col];
                if col < q.col_hi {
                    total -= self.edges_v[row * (self.cols - 1) + col];
                }
                if row < q.row_hi {
                    total -= self.edges_h[row * self.cols + col];
                }
            }
        }
        Ok(total)
    }

    /// Edges whose count exceeds the smaller adjacent face by more than
    /// [`CONSISTENCY_TOL`].
    pub fn check_consistency(&self) -> Vec<Edge> {
        self.edges()
            .filter(|&e| {
                let (a, b) = e.faces();
                self.edge(e) > self.face(a).min(self.face(b)) + CONSISTENCY_TOL
            })
            .collect()
    }

    pub fn negative_entries(&self) -> usize {
        self.entries().filter(|v| *v < 0.0).count()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&HistogramDoc::from(self))?)
    }

    pub fn to_json_pretty(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&HistogramDoc::from(self))?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: HistogramDoc = serde_json::from_str(s)?;
        doc.try_into()
    }
}

/// On-disk representation, version 1.
#[derive(Debug, Serialize, Deserialize)]
pub struct HistogramDoc {
    pub version: u32,
    pub rows: usize,
    pub cols: usize,
    pub n: f64,
    pub faces: Vec<Vec<f64>>,
    pub edges_v: Vec<Vec<f64>>,
    pub edges_h: Vec<Vec<f64>>,
    /// Length-normalized face mass, present only on ingested histograms.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub faces_normalized: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_max: Option<usize>,
}

pub const DOC_VERSION: u32 = 1;

fn to_rows(values: &[f64], height: usize, width: usize) -> Vec<Vec<f64>> {
    (0..height).map(|r| values[r * width..(r + 1) * width].to_vec()).collect()
}

fn flatten(name: &str, rows: Vec<Vec<f64>>, height: usize, width: usize) -> Result<Vec<f64>> {
    if rows.len() != height {
        return Err(Error::DimensionMismatch(format!("{name} has {} rows, expected {height}", rows.len())));
    }
    let mut out = Vec::with_capacity(height * width);
    for (i, row) in rows.into_iter().enumerate() {
        if row.len() != width {
            return Err(Error::DimensionMismatch(format!(
                "{name} row {i} has {} entries, expected {width}",
                row.len()
            )));
        }
        out.extend(row);
    }
    Ok(out)
}

impl From<&SpatialHistogram> for HistogramDoc {
    fn from(h: &SpatialHistogram) -> Self {
        HistogramDoc {
            version: DOC_VERSION,
            rows: h.rows,
            cols: h.cols,
            n: h.n,
            faces: to_rows(&h.faces, h.rows, h.cols),
            edges_v: to_rows(&h.edges_v, h.rows, h.cols - 1),
            edges_h: to_rows(&h.edges_h, h.rows - 1, h.cols),
            faces_normalized: h.path_mass.as_ref().map(|m| to_rows(m, h.rows, h.cols)),
            k_max: h.max_path_len,
        }
    }
}

impl TryFrom<HistogramDoc> for SpatialHistogram {
    type Error = Error;

    fn try_from(doc: HistogramDoc) -> Result<Self> {
        if doc.version != DOC_VERSION {
            return Err(Error::UnsupportedVersion(doc.version));
        }
        let (rows, cols) = (doc.rows, doc.cols);
        check_dims(rows, cols)?;
        let faces = flatten("faces", doc.faces, rows, cols)?;
        let edges_v = flatten("edges_v", doc.edges_v, rows, cols - 1)?;
        let edges_h = flatten("edges_h", doc.edges_h, rows - 1, cols)?;
        let mut h = SpatialHistogram::from_parts(rows, cols, faces, edges_v, edges_h, doc.n)?;
        if let Some(m) = doc.faces_normalized {
            let m = flatten("faces_normalized", m, rows, cols)?;
            if let Some(&value) = m.iter().find(|v| !v.is_finite() || **v < 0.0) {
                return Err(Error::NegativeEntry { component: "faces_normalized", value });
            }
            h.path_mass = Some(m);
        }
        h.max_path_len = doc.k_max;
        Ok(h)
    }
}

/// Constant-time rectangle sums via 2-D prefix tables.
#[derive(Debug, Clone)]
pub struct PrefixSums {
    cols: usize,
    faces: Vec<f64>,
    edges_v: Vec<f64>,
    edges_h: Vec<f64>,
}

fn prefix_table(values: &[f64], height: usize, width: usize) -> Vec<f64> {
    let w = width + 1;
    let mut t = vec![0.0; (height + 1) * w];
    for r in 0..height {
        for c in 0..width {
            t[(r + 1) * w + c + 1] = values[r * width + c] + t[r * w + c + 1] + t[(r + 1) * w + c] - t[r * w + c];
        }
    }
    t
}

fn rect_sum(t: &[f64], width: usize, r0: usize, r1: usize, c0: usize, c1: usize) -> f64 {
    // half-open [r0, r1) x [c0, c1)
    if r1 <= r0 || c1 <= c0 {
        return 0.0;
    }
    let w = width + 1;
    t[r1 * w + c1] - t[r0 * w + c1] - t[r1 * w + c0] + t[r0 * w + c0]
}

impl PrefixSums {
    pub fn new(h: &SpatialHistogram) -> Self {
        Self {
            cols: h.cols,
            faces: prefix_table(&h.faces, h.rows, h.cols),
            edges_v: prefix_table(&h.edges_v, h.rows, h.cols - 1),
            edges_h: prefix_table(&h.edges_h, h.rows - 1, h.cols),
        }
    }

    /// Same value as [`SpatialHistogram::eval_range_query`] up to rounding.
    /// The query must already be known to be in bounds.
    pub fn eval(&self, q: &RangeQuery) -> f64 {
        let c = self.cols;
        let faces = rect_sum(&self.faces, c, q.row_lo, q.row_hi + 1, q.col_lo, q.col_hi + 1);
        let ev = rect_sum(&self.edges_v, c - 1, q.row_lo, q.row_hi + 1, q.col_lo, q.col_hi);
        let eh = rect_sum(&self.edges_h, c, q.row_lo, q.row_hi, q.col_lo, q.col_hi + 1);
        faces - ev - eh
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(row: usize, col: usize) -> CellIndex {
        CellIndex::new(row, col)
    }

    #[test]
    fn empty_path_list_gives_zero_histogram() {
        let h = SpatialHistogram::from_cell_paths(&[], 4, 4).unwrap();
        assert_eq!(h.n(), 0.0);
        assert!(h.entries().all(|v| v == 0.0));
        assert!(h.check_consistency().is_empty());
    }

    #[test]
    fn rejects_bad_paths() {
        let jump = vec![vec![c(0, 0), c(1, 1)]];
        assert!(matches!(SpatialHistogram::from_cell_paths(&jump, 4, 4), Err(Error::NonAdjacentStep { .. })));
        let looped = vec![vec![c(0, 0), c(0, 1), c(1, 1), c(1, 0), c(0, 0)]];
        assert!(matches!(SpatialHistogram::from_cell_paths(&looped, 4, 4), Err(Error::RepeatedCell { .. })));
        let outside = vec![vec![c(0, 3), c(0, 4)]];
        assert!(matches!(SpatialHistogram::from_cell_paths(&outside, 4, 4), Err(Error::CellOutOfBounds { .. })));
        assert!(matches!(SpatialHistogram::from_cell_paths(&[vec![]], 4, 4), Err(Error::EmptyPath(0))));
        assert!(matches!(SpatialHistogram::zeros(0, 4), Err(Error::InvalidDimensions { .. })));
        assert_eq!(SpatialHistogram::zeros(3, 5).unwrap().entry_count(), 15 + 12 + 10);
    }

    #[test]
    fn single_cell_query_is_face_value() {
        let paths = vec![vec![c(1, 1), c(1, 2), c(2, 2)], vec![c(1, 2)]];
        let h = SpatialHistogram::from_cell_paths(&paths, 4, 4).unwrap();
        for cell in RangeQuery::full(4, 4).cells() {
            assert_eq!(h.eval_range_query(&RangeQuery::single(cell)).unwrap(), h.face(cell));
        }
        assert_eq!(h.face(c(1, 2)), 2.0);
        assert_eq!(h.eval_range_query(&RangeQuery::full(4, 4)).unwrap(), 2.0);
    }

    #[test]
    fn out_of_bounds_query_is_rejected() {
        let h = SpatialHistogram::zeros(4, 4).unwrap();
        assert!(h.eval_range_query(&RangeQuery { row_lo: 0, row_hi: 4, col_lo: 0, col_hi: 0 }).is_err());
        assert!(RangeQuery::new(2, 1, 0, 0).is_err());
    }

    #[test]
    fn consistency_flags_oversized_edge() {
        let mut h = SpatialHistogram::zeros(1, 2).unwrap();
        h.faces_mut().copy_from_slice(&[3.0, 4.0]);
        h.edges_v_mut()[0] = 5.0;
        assert_eq!(h.check_consistency(), vec![Edge::Vertical { row: 0, col: 0 }]);
        h.edges_v_mut()[0] = 3.0 + 1e-12;
        assert!(h.check_consistency().is_empty());
    }

    #[test]
    fn json_rejects_dimension_mismatch() {
        let h = SpatialHistogram::zeros(8, 8).unwrap();
        let mut doc = HistogramDoc::from(&h);
        doc.faces.pop();
        let s = serde_json::to_string(&doc).unwrap();
        assert!(matches!(SpatialHistogram::from_json(&s), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn json_rejects_negative_and_malformed() {
        let mut h = SpatialHistogram::zeros(2, 2).unwrap();
        h.faces_mut()[0] = -1.0;
        let s = h.to_json().unwrap();
        assert!(matches!(SpatialHistogram::from_json(&s), Err(Error::NegativeEntry { .. })));
        assert!(matches!(SpatialHistogram::from_json("{\"version\":1"), Err(Error::Json(_))));
        let bad_version =
            SpatialHistogram::zeros(2, 2).unwrap().to_json().unwrap().replace("\"version\":1", "\"version\":9");
        assert!(matches!(SpatialHistogram::from_json(&bad_version), Err(Error::UnsupportedVersion(9))));
    }

    #[test]
    fn json_keeps_ingestion_metadata() {
        let paths = vec![vec![c(0, 0), c(0, 1), c(1, 1)]];
        let h = SpatialHistogram::from_cell_paths(&paths, 2, 2).unwrap();
        let back = SpatialHistogram::from_json(&h.to_json().unwrap()).unwrap();
        assert_eq!(back, h);
        assert_eq!(back.max_path_len(), Some(3));
    }

    #[test]
    fn prefix_sums_match_direct_evaluation() {
        let paths = vec![
            vec![c(0, 0), c(0, 1), c(1, 1), c(2, 1), c(2, 2)],
            vec![c(3, 3), c(2, 3), c(2, 2), c(1, 2)],
            vec![c(3, 0)],
        ];
        let h = SpatialHistogram::from_cell_paths(&paths, 4, 4).unwrap();
        let ps = PrefixSums::new(&h);
        for r0 in 0..4 {
            for r1 in r0..4 {
                for c0 in 0..4 {
                    for c1 in c0..4 {
                        let q = RangeQuery::new(r0, r1, c0, c1).unwrap();
                        assert_eq!(ps.eval(&q), h.eval_range_query(&q).unwrap());
                    }
                }
            }
        }
    }
}
