//! Raw GPS trajectories: CSV input/output, rasterization onto the grid and
//! synthetic random-walk generators.

use std::collections::HashMap;
use std::io::{Read, Write};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{CellIndex, SpatialHistogram};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawTrajectory {
    pub id: String,
    /// `(lat, lon)` in degrees, in travel order.
    pub points: Vec<(f64, f64)>,
}

/// Bounding box and resolution; the grid is `2^k x 2^k`.
///
/// Row 0 is the southernmost band (`min_lat`), column 0 the westernmost.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub min_lat: f64,
    pub min_lon: f64,
    pub max_lat: f64,
    pub max_lon: f64,
    pub resolution: u32,
}

impl GridSpec {
    pub fn new(min_lat: f64, min_lon: f64, max_lat: f64, max_lon: f64, resolution: u32) -> Result<Self> {
        let g = Self { min_lat, min_lon, max_lat, max_lon, resolution };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        let coords = [self.min_lat, self.min_lon, self.max_lat, self.max_lon];
        if coords.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("bounding box must be finite".into()));
        }
        if !(self.max_lat > self.min_lat) || !(self.max_lon > self.min_lon) {
            return Err(Error::InvalidParameter(format!(
                "bounding box must satisfy min < max on both axes, got lat {}..{}, lon {}..{}",
                self.min_lat, self.max_lat, self.min_lon, self.max_lon
            )));
        }
        if !(1..=12).contains(&self.resolution) {
            return Err(Error::InvalidParameter(format!("resolution must be in 1..=12, got {}", self.resolution)));
        }
        Ok(())
    }

    /// Cells per side.
    pub fn side(&self) -> usize {
        1 << self.resolution
    }

    pub fn contains(&self, lat: f64, lon: f64) -> bool {
        (self.min_lat..=self.max_lat).contains(&lat) && (self.min_lon..=self.max_lon).contains(&lon)
    }

    /// Continuous grid coordinates `(row, col)` of a point.
    fn grid_coords(&self, lat: f64, lon: f64) -> (f64, f64) {
        let side = self.side() as f64;
        (
            (lat - self.min_lat) / (self.max_lat - self.min_lat) * side,
            (lon - self.min_lon) / (self.max_lon - self.min_lon) * side,
        )
    }

    pub fn cell_of(&self, lat: f64, lon: f64) -> CellIndex {
        let (y, x) = self.grid_coords(lat, lon);
        let last = self.side() - 1;
        CellIndex::new((y.floor().max(0.0) as usize).min(last), (x.floor().max(0.0) as usize).min(last))
    }

    /// `(lat, lon)` of a cell's centre.
    pub fn cell_center(&self, cell: CellIndex) -> (f64, f64) {
        let side = self.side() as f64;
        (
            self.min_lat + (cell.row as f64 + 0.5) / side * (self.max_lat - self.min_lat),
            self.min_lon + (cell.col as f64 + 0.5) / side * (self.max_lon - self.min_lon),
        )
    }
}

/// Append the 4-connected supercover walk from `from` to `to`, excluding
/// the starting cell. Exact corner crossings step along the column first.
fn walk_segment(g: &GridSpec, from: (f64, f64), to: (f64, f64), out: &mut Vec<CellIndex>) {
    let start = g.cell_of(from.0, from.1);
    let end = g.cell_of(to.0, to.1);
    let (y0, x0) = g.grid_coords(from.0, from.1);
    let (y1, x1) = g.grid_coords(to.0, to.1);
    let (dy, dx) = (y1 - y0, x1 - x0);

    let first_crossing = |pos: f64, cell: usize, delta: f64| -> f64 {
        if delta > 0.0 {
            ((cell + 1) as f64 - pos) / delta
        } else if delta < 0.0 {
            (pos - cell as f64) / -delta
        } else {
            f64::INFINITY
        }
    };
    let mut t_row = first_crossing(y0, start.row, dy);
    let mut t_col = first_crossing(x0, start.col, dx);
    let step_t_row = if dy != 0.0 { 1.0 / dy.abs() } else { f64::INFINITY };
    let step_t_col = if dx != 0.0 { 1.0 / dx.abs() } else { f64::INFINITY };

    let mut cell = start;
    while cell != end {
        let move_col = if cell.row == end.row {
            true
        } else if cell.col == end.col {
            false
        } else {
            t_col <= t_row
        };
        if move_col {
            cell.col = if end.col > cell.col { cell.col + 1 } else { cell.col - 1 };
            t_col += step_t_col;
        } else {
            cell.row = if end.row > cell.row { cell.row + 1 } else { cell.row - 1 };
            t_row += step_t_row;
        }
        out.push(cell);
    }
}

/// Map a trajectory onto grid cells.
///
/// Consecutive points are joined by a supercover walk, so the result is
/// 4-adjacent. The walk stops just before the first revisited cell. Any
/// point outside the bounding box rejects the whole trajectory.
pub fn rasterize(t: &RawTrajectory, g: &GridSpec) -> Result<Vec<CellIndex>> {
    if t.points.is_empty() {
        return Err(Error::Trajectory { id: t.id.clone(), reason: "no points".into() });
    }
    for (i, &(lat, lon)) in t.points.iter().enumerate() {
        if !lat.is_finite() || !lon.is_finite() {
            return Err(Error::Trajectory { id: t.id.clone(), reason: format!("point {i} is not finite") });
        }
        if !g.contains(lat, lon) {
            return Err(Error::Trajectory {
                id: t.id.clone(),
                reason: format!("point {i} ({lat}, {lon}) lies outside the bounding box"),
            });
        }
    }
    let first = t.points[0];
    let mut raw = vec![g.cell_of(first.0, first.1)];
    for w in t.points.windows(2) {
        walk_segment(g, w[0], w[1], &mut raw);
    }
    let side = g.side();
    let mut seen = vec![false; side * side];
    let mut out = Vec::with_capacity(raw.len());
    for cell in raw {
        let slot = &mut seen[cell.row * side + cell.col];
        if *slot {
            break;
        }
        *slot = true;
        out.push(cell);
    }
    Ok(out)
}

/// Rasterized dataset ready for publishing.
#[derive(Debug, Clone)]
pub struct Ingested {
    pub histogram: SpatialHistogram,
    /// `(trajectory id, reason)` for every rejected trajectory.
    pub rejected: Vec<(String, String)>,
    pub k_max: usize,
}

/// Rasterize every trajectory and build the histogram; trajectories that
/// fail to rasterize are skipped and reported.
pub fn ingest(trajectories: &[RawTrajectory], g: &GridSpec) -> Result<Ingested> {
    g.validate()?;
    let mut paths = Vec::with_capacity(trajectories.len());
    let mut rejected = Vec::new();
    for t in trajectories {
        match rasterize(t, g) {
            Ok(p) => paths.push(p),
            Err(Error::Trajectory { id, reason }) => rejected.push((id, reason)),
            Err(e) => return Err(e),
        }
    }
    let histogram = SpatialHistogram::from_cell_paths(&paths, g.side(), g.side())?;
    let k_max = histogram.max_path_len().unwrap_or(0);
    Ok(Ingested { histogram, rejected, k_max })
}

const REQUIRED_COLUMNS: [&str; 4] = ["traj_id", "seq", "lat", "lon"];

/// Parse `traj_id,seq,lat,lon` rows (extra columns are ignored) into
/// trajectories ordered by first appearance, points ordered by `seq`.
pub fn parse_csv<R: Read>(reader: R) -> Result<Vec<RawTrajectory>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let mut idx = [0usize; 4];
    for (slot, name) in idx.iter_mut().zip(REQUIRED_COLUMNS) {
        *slot = headers.iter().position(|h| h == name).ok_or_else(|| Error::Csv(format!("missing column '{name}'")))?;
    }
    let mut order: HashMap<String, usize> = HashMap::new();
    // (seq, lat, lon) samples per trajectory, in first-seen order
    type Samples = Vec<(i64, f64, f64)>;
    let mut groups: Vec<(String, Samples)> = Vec::new();
    for (line, record) in rdr.records().enumerate() {
        let record = record?;
        let line = line + 2;
        let field = |i: usize| record.get(idx[i]).unwrap_or("");
        let id = field(0).to_string();
        let seq: i64 = field(1).parse().map_err(|_| Error::Csv(format!("line {line}: bad seq '{}'", field(1))))?;
        let coord = |i: usize| -> Result<f64> {
            let v: f64 = field(i)
                .parse()
                .map_err(|_| Error::Csv(format!("line {line}: non-numeric {} '{}'", REQUIRED_COLUMNS[i], field(i))))?;
            if !v.is_finite() {
                return Err(Error::Csv(format!("line {line}: non-finite {}", REQUIRED_COLUMNS[i])));
            }
            Ok(v)
        };
        let (lat, lon) = (coord(2)?, coord(3)?);
        let slot = *order.entry(id.clone()).or_insert_with(|| {
            groups.push((id.clone(), Vec::new()));
            groups.len() - 1
        });
        groups[slot].1.push((seq, lat, lon));
    }
    let mut out = Vec::with_capacity(groups.len());
    for (id, mut pts) in groups {
        pts.sort_by_key(|p| p.0);
        if let Some(w) = pts.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(Error::Csv(format!("duplicate (traj_id, seq) = ({id}, {})", w[0].0)));
        }
        out.push(RawTrajectory { id, points: pts.into_iter().map(|(_, lat, lon)| (lat, lon)).collect() });
    }
    Ok(out)
}

/// Write trajectories with the same schema [`parse_csv`] reads.
pub fn write_csv<W: Write>(writer: W, trajectories: &[RawTrajectory]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(REQUIRED_COLUMNS)?;
    for t in trajectories {
        for (seq, (lat, lon)) in t.points.iter().enumerate() {
            w.write_record([t.id.as_str(), &seq.to_string(), &lat.to_string(), &lon.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn check_gen_params(n_traj: usize, mean_len: usize, g: &GridSpec) -> Result<()> {
    g.validate()?;
    if n_traj == 0 || mean_len == 0 {
        return Err(Error::InvalidParameter("n_traj and mean_len must be at least 1".into()));
    }
    Ok(())
}

fn neighbours(cell: CellIndex, side: usize) -> impl Iterator<Item = CellIndex> {
    let CellIndex { row, col } = cell;
    [
        (row > 0).then(|| CellIndex::new(row - 1, col)),
        (row + 1 < side).then(|| CellIndex::new(row + 1, col)),
        (col > 0).then(|| CellIndex::new(row, col - 1)),
        (col + 1 < side).then(|| CellIndex::new(row, col + 1)),
    ]
    .into_iter()
    .flatten()
}

/// Self-avoiding walks; `weight` scores candidate cells for the start and
/// every step. Lengths are uniform on `1..=2*mean_len-1`.
fn random_walks(
    n_traj: usize,
    mean_len: usize,
    g: &GridSpec,
    seed: u64,
    weight: impl Fn(CellIndex) -> f64,
) -> Result<Vec<RawTrajectory>> {
    let side = g.side();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cells: Vec<CellIndex> = (0..side * side).map(|i| CellIndex::new(i / side, i % side)).collect();
    let start_dist = WeightedIndex::new(cells.iter().map(|&c| weight(c)))
        .map_err(|e| Error::InvalidParameter(format!("start distribution: {e}")))?;
    let mut visited = vec![usize::MAX; side * side];
    let mut out = Vec::with_capacity(n_traj);
    for t in 0..n_traj {
        let len = rng.random_range(1..=2 * mean_len - 1);
        let mut cell = cells[start_dist.sample(&mut rng)];
        visited[cell.row * side + cell.col] = t;
        let mut path = vec![cell];
        while path.len() < len {
            let options: Vec<CellIndex> =
                neighbours(cell, side).filter(|c| visited[c.row * side + c.col] != t).collect();
            if options.is_empty() {
                break;
            }
            let weights: Vec<f64> = options.iter().map(|&c| weight(c)).collect();
            let total: f64 = weights.iter().sum();
            let mut pick = rng.random::<f64>() * total;
            let mut chosen = options[options.len() - 1];
            for (c, w) in options.iter().zip(&weights) {
                if pick < *w {
                    chosen = *c;
                    break;
                }
                pick -= w;
            }
            cell = chosen;
            visited[cell.row * side + cell.col] = t;
            path.push(cell);
        }
        out.push(RawTrajectory { id: format!("t{t}"), points: path.into_iter().map(|c| g.cell_center(c)).collect() });
    }
    Ok(out)
}

/// Random walks with uniform start cells and unbiased steps.
pub fn gen_uniform(n_traj: usize, mean_len: usize, g: &GridSpec, seed: u64) -> Result<Vec<RawTrajectory>> {
    check_gen_params(n_traj, mean_len, g)?;
    random_walks(n_traj, mean_len, g, seed, |_| 1.0)
}

/// Random walks whose start cells and steps favour cells close to
/// `hotspot = (lat, lon)`: a cell at Manhattan distance `d` from the
/// hotspot cell has weight `exp(-concentration * d)`.
pub fn gen_skewed(
    n_traj: usize,
    mean_len: usize,
    g: &GridSpec,
    hotspot: (f64, f64),
    concentration: f64,
    seed: u64,
) -> Result<Vec<RawTrajectory>> {
    check_gen_params(n_traj, mean_len, g)?;
    if !g.contains(hotspot.0, hotspot.1) {
        return Err(Error::InvalidParameter("hotspot lies outside the bounding box".into()));
    }
    if !(concentration >= 0.0) || !concentration.is_finite() {
        return Err(Error::InvalidParameter(format!("concentration must be non-negative, got {concentration}")));
    }
    let hot = g.cell_of(hotspot.0, hotspot.1);
    random_walks(n_traj, mean_len, g, seed, move |c| {
        let d = c.row.abs_diff(hot.row) + c.col.abs_diff(hot.col);
        (-concentration * d as f64).exp()
    })
}
