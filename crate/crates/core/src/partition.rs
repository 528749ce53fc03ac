//! Private quadtree partitioning of a histogram into near-uniform regions,
//! each with a noisy density.
//!
//! Costs are computed on length-normalized face counts, so one trajectory
//! moves the cost of any region by at most 2.

use serde::{Deserialize, Serialize};

use crate::dp::{NoiseSource, PrivacyBudget};
use crate::error::{Error, Result};
use crate::grid::{CellIndex, Edge, RangeQuery, SpatialHistogram};

/// Sensitivity of [`uniformity_cost`] on length-normalized counts.
pub const COST_SENSITIVITY: f64 = 2.0;

/// A quadtree block of cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Region {
    pub row: usize,
    pub col: usize,
    pub height: usize,
    pub width: usize,
}

impl Region {
    pub fn root(rows: usize, cols: usize) -> Self {
        Self { row: 0, col: 0, height: rows, width: cols }
    }

    pub fn size(&self) -> usize {
        self.height * self.width
    }

    pub fn contains(&self, cell: CellIndex) -> bool {
        (self.row..self.row + self.height).contains(&cell.row) && (self.col..self.col + self.width).contains(&cell.col)
    }

    pub fn rect(&self) -> RangeQuery {
        RangeQuery {
            row_lo: self.row,
            row_hi: self.row + self.height - 1,
            col_lo: self.col,
            col_hi: self.col + self.width - 1,
        }
    }

    pub fn cells(&self) -> impl Iterator<Item = CellIndex> + '_ {
        (self.row..self.row + self.height)
            .flat_map(move |r| (self.col..self.col + self.width).map(move |c| CellIndex::new(r, c)))
    }

    /// Halve every side longer than one cell. Square blocks yield the four
    /// quadrants in order top-left, top-right, bottom-left, bottom-right.
    pub fn split(&self) -> Vec<Region> {
        let rows: Vec<(usize, usize)> = if self.height > 1 {
            let h = self.height / 2;
            vec![(self.row, h), (self.row + h, h)]
        } else {
            vec![(self.row, 1)]
        };
        let cols: Vec<(usize, usize)> = if self.width > 1 {
            let w = self.width / 2;
            vec![(self.col, w), (self.col + w, w)]
        } else {
            vec![(self.col, 1)]
        };
        let mut out = Vec::with_capacity(4);
        for &(row, height) in &rows {
            for &(col, width) in &cols {
                out.push(Region { row, col, height, width });
            }
        }
        out
    }
}

/// Leaves of the private quadtree with their noisy densities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionSet {
    pub rows: usize,
    pub cols: usize,
    pub regions: Vec<Region>,
    pub densities: Vec<f64>,
    pub delta: f64,
}

impl PartitionSet {
    /// One region covering the grid.
    pub fn single(rows: usize, cols: usize, density: f64) -> Self {
        Self { rows, cols, regions: vec![Region::root(rows, cols)], densities: vec![density], delta: 0.0 }
    }

    /// Check lengths, density range, disjointness and coverage.
    pub fn validate(&self) -> Result<()> {
        if self.regions.len() != self.densities.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} regions but {} densities",
                self.regions.len(),
                self.densities.len()
            )));
        }
        if let Some(d) = self.densities.iter().find(|d| !(0.0..=1.0).contains(*d)) {
            return Err(Error::InvalidParameter(format!("density {d} outside [0, 1]")));
        }
        self.region_map().map(|_| ())
    }

    /// Assign faces and edges to regions. An edge belongs to the region of
    /// its top/left face.
    pub fn region_map(&self) -> Result<RegionMap> {
        let (rows, cols) = (self.rows, self.cols);
        let mut faces = vec![usize::MAX; rows * cols];
        for (id, region) in self.regions.iter().enumerate() {
            if region.height == 0
                || region.width == 0
                || region.row + region.height > rows
                || region.col + region.width > cols
            {
                return Err(Error::InvalidParameter(format!("region {region:?} lies outside the {rows}x{cols} grid")));
            }
            for cell in region.cells() {
                let slot = &mut faces[cell.row * cols + cell.col];
                if *slot != usize::MAX {
                    return Err(Error::InvalidParameter(format!("regions {} and {id} overlap at {cell:?}", *slot)));
                }
                *slot = id;
            }
        }
        if let Some(pos) = faces.iter().position(|&r| r == usize::MAX) {
            return Err(Error::InvalidParameter(format!(
                "cell ({}, {}) is not covered by any region",
                pos / cols,
                pos % cols
            )));
        }
        Ok(RegionMap { rows, cols, faces })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let ps: PartitionSet = serde_json::from_str(s)?;
        ps.validate()?;
        Ok(ps)
    }
}

/// Face and edge ownership by region.
#[derive(Debug, Clone)]
pub struct RegionMap {
    rows: usize,
    cols: usize,
    faces: Vec<usize>,
}

impl RegionMap {
    pub fn face(&self, cell: CellIndex) -> usize {
        self.faces[cell.row * self.cols + cell.col]
    }

    pub fn edge(&self, edge: Edge) -> usize {
        self.face(edge.faces().0)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Row-major face ownership.
    pub fn face_regions(&self) -> &[usize] {
        &self.faces
    }
}

/// Length-normalized face counts: one trajectory contributes `1 / len` to
/// each face it visits, so the matrix sums to `n`.
pub fn normalized_counts(h: &SpatialHistogram) -> Result<Vec<f64>> {
    h.path_mass().map(<[f64]>::to_vec).ok_or(Error::MissingNormalization)
}

/// Sum of absolute deviations from the region mean.
pub fn uniformity_cost(counts: &[f64], cols: usize, region: &Region) -> f64 {
    let size = region.size() as f64;
    let sum: f64 = region.cells().map(|c| counts[c.row * cols + c.col]).sum();
    let mean = sum / size;
    region.cells().map(|c| (counts[c.row * cols + c.col] - mean).abs()).sum()
}

fn region_mass(counts: &[f64], cols: usize, region: &Region) -> f64 {
    region.cells().map(|c| counts[c.row * cols + c.col]).sum()
}

/// Default split threshold, `4 / eps1^2`.
pub fn default_delta(eps1: f64) -> f64 {
    4.0 / (eps1 * eps1)
}

/// Private quadtree partitioning.
///
/// From the root, each node with more than one cell compares its noisy cost
/// against the mean noisy cost of its children and recurses only when the
/// difference exceeds `delta`. Every cost evaluation draws fresh
/// `Lap(2 / eps1)` noise. Leaves get density `mass / n + Lap(1 / eps2)`,
/// clamped to `[0, 1]`.
pub fn partition(
    h: &SpatialHistogram,
    budget: &PrivacyBudget,
    ns: &mut NoiseSource,
    delta: Option<f64>,
) -> Result<PartitionSet> {
    let counts = normalized_counts(h)?;
    partition_counts(&counts, h.rows(), h.cols(), h.n(), budget, ns, delta)
}

/// [`partition`] over an explicit normalized-count matrix.
pub fn partition_counts(
    counts: &[f64],
    rows: usize,
    cols: usize,
    n: f64,
    budget: &PrivacyBudget,
    ns: &mut NoiseSource,
    delta: Option<f64>,
) -> Result<PartitionSet> {
    crate::grid::check_quadtree_dims(rows, cols)?;
    if counts.len() != rows * cols {
        return Err(Error::DimensionMismatch(format!("{} counts for a {rows}x{cols} grid", counts.len())));
    }
    let delta = delta.unwrap_or_else(|| default_delta(budget.eps1));
    let cost_scale = COST_SENSITIVITY / budget.eps1;
    let density_scale = 1.0 / budget.eps2;

    let mut leaves = Vec::new();
    let mut stack = vec![Region::root(rows, cols)];
    while let Some(node) = stack.pop() {
        if node.size() > 1 {
            let pcost = uniformity_cost(counts, cols, &node) + ns.laplace(cost_scale)?;
            let children = node.split();
            let mut chcost = 0.0;
            for child in &children {
                chcost += uniformity_cost(counts, cols, child) + ns.laplace(cost_scale)?;
            }
            chcost /= children.len() as f64;
            if pcost - chcost > delta {
                // reversed so the top-left quadrant is processed first
                stack.extend(children.into_iter().rev());
                continue;
            }
        }
        leaves.push(node);
    }

    let mut densities = Vec::with_capacity(leaves.len());
    for leaf in &leaves {
        let share = if n > 0.0 { region_mass(counts, cols, leaf) / n } else { 0.0 };
        densities.push((share + ns.laplace(density_scale)?).clamp(0.0, 1.0));
    }
    Ok(PartitionSet { rows, cols, regions: leaves, densities, delta })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dp::split_budget;

    #[test]
    fn single_path_normalized_mass() {
        let path: Vec<CellIndex> = (0..4).map(|c| CellIndex::new(0, c)).collect();
        let h = SpatialHistogram::from_cell_paths(&[path], 4, 4).unwrap();
        let m = normalized_counts(&h).unwrap();
        assert_eq!(&m[..4], &[0.25; 4]);
        assert_eq!(m.iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn missing_metadata_is_an_error() {
        let h = SpatialHistogram::zeros(2, 2).unwrap();
        assert!(matches!(normalized_counts(&h), Err(Error::MissingNormalization)));
    }

    #[test]
    fn cost_examples() {
        let region = Region::root(2, 2);
        assert_eq!(uniformity_cost(&[4.0, 0.0, 0.0, 0.0], 2, &region), 6.0);
        assert_eq!(uniformity_cost(&[2.5; 4], 2, &region), 0.0);
    }

    #[test]
    fn zero_histogram_without_noise_is_one_region() {
        let h = SpatialHistogram::from_cell_paths(&[], 8, 8).unwrap();
        let budget = split_budget(1.0, 10).unwrap();
        let ps = partition(&h, &budget, &mut NoiseSource::disabled(), Some(0.0)).unwrap();
        assert_eq!(ps.regions, vec![Region::root(8, 8)]);
        assert_eq!(ps.densities, vec![0.0]);
    }

    #[test]
    fn split_orders_quadrants() {
        let r = Region::root(4, 4).split();
        assert_eq!(r.iter().map(|q| (q.row, q.col)).collect::<Vec<_>>(), vec![(0, 0), (0, 2), (2, 0), (2, 2)]);
        assert_eq!(Region { row: 0, col: 0, height: 1, width: 4 }.split().len(), 2);
    }

    #[test]
    fn region_map_follows_top_left_rule() {
        let ps = PartitionSet {
            rows: 2,
            cols: 2,
            regions: vec![
                Region { row: 0, col: 0, height: 1, width: 2 },
                Region { row: 1, col: 0, height: 1, width: 2 },
            ],
            densities: vec![0.5, 0.5],
            delta: 0.0,
        };
        let map = ps.region_map().unwrap();
        assert_eq!(map.face(CellIndex::new(1, 1)), 1);
        assert_eq!(map.edge(Edge::Vertical { row: 1, col: 0 }), 1);
        assert_eq!(map.edge(Edge::Horizontal { row: 0, col: 1 }), 0);
    }

    #[test]
    fn validate_catches_gaps_and_overlaps() {
        let mut ps = PartitionSet::single(2, 2, 0.5);
        ps.regions.push(Region { row: 0, col: 0, height: 1, width: 1 });
        ps.densities.push(0.1);
        assert!(ps.validate().is_err());
        let gap = PartitionSet {
            rows: 2,
            cols: 2,
            regions: vec![Region { row: 0, col: 0, height: 1, width: 2 }],
            densities: vec![0.5],
            delta: 0.0,
        };
        assert!(gap.validate().is_err());
        let bad_density = PartitionSet::single(2, 2, 1.5);
        assert!(bad_density.validate().is_err());
    }
}
