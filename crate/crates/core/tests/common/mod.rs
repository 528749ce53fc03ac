//! Fixtures and brute-force reference implementations shared by the
//! integration tests. Nothing here calls into the solver or partitioner
//! code paths it is used to check.
#![allow(dead_code)]

use std::collections::BTreeSet;

use dqam::grid::{CellIndex, Edge, RangeQuery, SpatialHistogram};
use dqam::partition::Region;
use dqam::trajectory::{gen_skewed, ingest, GridSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const SKEWED_N: usize = 1000;
pub const SKEWED_MEAN_LEN: usize = 6;
pub const SKEWED_HOTSPOT: (f64, f64) = (0.3, 0.7);
pub const SKEWED_CONCENTRATION: f64 = 0.5;

pub fn unit_grid(resolution: u32) -> GridSpec {
    GridSpec::new(0.0, 0.0, 1.0, 1.0, resolution).unwrap()
}

/// Skewed 16x16 fixture with 1000 trajectories.
pub fn skewed_fixture() -> SpatialHistogram {
    let g = unit_grid(4);
    let trajs = gen_skewed(SKEWED_N, SKEWED_MEAN_LEN, &g, SKEWED_HOTSPOT, SKEWED_CONCENTRATION, 2024).unwrap();
    ingest(&trajs, &g).unwrap().histogram
}

/// Self-avoiding 4-connected walk of at most `max_len` cells.
pub fn random_path(rng: &mut ChaCha8Rng, rows: usize, cols: usize, max_len: usize) -> Vec<CellIndex> {
    let len = rng.random_range(1..=max_len);
    let mut path = vec![CellIndex::new(rng.random_range(0..rows), rng.random_range(0..cols))];
    let mut seen: BTreeSet<CellIndex> = path.iter().copied().collect();
    while path.len() < len {
        let c = *path.last().unwrap();
        let mut options = Vec::new();
        if c.row > 0 {
            options.push(CellIndex::new(c.row - 1, c.col));
        }
        if c.row + 1 < rows {
            options.push(CellIndex::new(c.row + 1, c.col));
        }
        if c.col > 0 {
            options.push(CellIndex::new(c.row, c.col - 1));
        }
        if c.col + 1 < cols {
            options.push(CellIndex::new(c.row, c.col + 1));
        }
        options.retain(|o| !seen.contains(o));
        if options.is_empty() {
            break;
        }
        let next = options[rng.random_range(0..options.len())];
        seen.insert(next);
        path.push(next);
    }
    path
}

pub fn random_rect(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> RangeQuery {
    let (a, b) = (rng.random_range(0..rows), rng.random_range(0..rows));
    let (c, d) = (rng.random_range(0..cols), rng.random_range(0..cols));
    RangeQuery { row_lo: a.min(b), row_hi: a.max(b), col_lo: c.min(d), col_hi: c.max(d) }
}

fn inside(q: &RangeQuery, c: &CellIndex) -> bool {
    (q.row_lo..=q.row_hi).contains(&c.row) && (q.col_lo..=q.col_hi).contains(&c.col)
}

/// Number of maximal runs of consecutive path cells inside `q`.
pub fn runs_inside(path: &[CellIndex], q: &RangeQuery) -> usize {
    let mut runs = 0;
    let mut prev = false;
    for c in path {
        let now = inside(q, c);
        if now && !prev {
            runs += 1;
        }
        prev = now;
    }
    runs
}

/// Distinct paths with at least one cell inside `q`.
pub fn distinct_count(paths: &[Vec<CellIndex>], q: &RangeQuery) -> usize {
    paths.iter().filter(|p| p.iter().any(|c| inside(q, c))).count()
}

/// Face-minus-edge count straight from the raw paths, no histogram.
pub fn face_minus_edge_count(paths: &[Vec<CellIndex>], q: &RangeQuery) -> i64 {
    let mut total = 0i64;
    for p in paths {
        total += p.iter().filter(|c| inside(q, c)).count() as i64;
        total -= p.windows(2).filter(|w| inside(q, &w[0]) && inside(q, &w[1])).count() as i64;
    }
    total
}

/// All entries of a histogram in storage order with their kind.
pub fn entries_with_edges(h: &SpatialHistogram) -> (Vec<f64>, Vec<(usize, usize)>) {
    let faces = h.face_count();
    let values: Vec<f64> = h.entries().collect();
    let cols = h.cols();
    let pairs = h
        .edges()
        .map(|e| {
            let (a, b) = e.faces();
            (a.row * cols + a.col, b.row * cols + b.col)
        })
        .collect();
    let _ = faces;
    (values, pairs)
}

/// Exact optimum of `min sum |x' - x|` subject to `x' >= 0` and every edge
/// no larger than either adjacent face.
///
/// Uses the threshold decomposition of L1 fits under order constraints: the
/// cost is the integral over levels `t` of the cheapest upward-closed set
/// (an edge above `t` forces both faces above `t`), and the cheapest sets
/// can be chosen nested, so the per-level minima add up exactly. Each level
/// is solved by enumerating every subset of faces, so this only scales to
/// grids with a handful of faces.
pub fn l1_repair_oracle(h: &SpatialHistogram) -> f64 {
    let faces = h.face_count();
    assert!(faces <= 16, "oracle enumerates 2^faces subsets");
    let (values, pairs) = entries_with_edges(h);
    let mut levels: Vec<f64> = values.iter().copied().chain(std::iter::once(0.0)).collect();
    levels.sort_by(|a, b| a.partial_cmp(b).unwrap());
    levels.dedup();
    // below zero every entry must sit above the level
    let mut total: f64 = values.iter().filter(|v| **v < 0.0).map(|v| -v).sum();
    for w in levels.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        if hi <= 0.0 {
            continue;
        }
        let t = lo.max(0.0);
        let width = hi - t;
        let mut best = usize::MAX;
        for mask in 0u32..(1 << faces) {
            let face_in = |f: usize| mask & (1 << f) != 0;
            let mut cost = 0;
            for (f, v) in values[..faces].iter().enumerate() {
                let above = *v > t;
                if above != face_in(f) {
                    cost += 1;
                }
            }
            for (k, &(a, b)) in pairs.iter().enumerate() {
                let above = values[faces + k] > t;
                let allowed = face_in(a) && face_in(b);
                if above && !allowed {
                    cost += 1;
                }
            }
            best = best.min(cost);
        }
        total += width * best as f64;
    }
    total
}

/// Uniformity cost recomputed from its definition with plain loops.
pub fn reference_cost(counts: &[f64], cols: usize, r: &Region) -> f64 {
    let mut vals = Vec::new();
    for row in r.row..r.row + r.height {
        for col in r.col..r.col + r.width {
            vals.push(counts[row * cols + col]);
        }
    }
    let mean = vals.iter().sum::<f64>() / vals.len() as f64;
    vals.iter().map(|v| (v - mean).abs()).sum()
}

fn quadrants(r: &Region) -> Vec<Region> {
    let (h1, w1) = ((r.height / 2).max(1), (r.width / 2).max(1));
    let mut out = Vec::new();
    for (dr, hh) in [(0, h1), (h1, r.height - h1)] {
        for (dc, ww) in [(0, w1), (w1, r.width - w1)] {
            if hh > 0 && ww > 0 {
                out.push(Region { row: r.row + dr, col: r.col + dc, height: hh, width: ww });
            }
        }
    }
    out
}

/// Noise-free quadtree recursion written directly from the split rule.
pub fn reference_partition(counts: &[f64], cols: usize, r: Region, delta: f64, out: &mut Vec<Region>) {
    if r.height * r.width > 1 {
        let kids = quadrants(&r);
        let mean_child = kids.iter().map(|k| reference_cost(counts, cols, k)).sum::<f64>() / kids.len() as f64;
        if reference_cost(counts, cols, &r) - mean_child > delta {
            for k in kids {
                reference_partition(counts, cols, k, delta, out);
            }
            return;
        }
    }
    out.push(r);
}

/// Minimum total leaf cost over every pruning of the full quadtree.
pub fn best_pruning_cost(counts: &[f64], cols: usize, r: Region) -> f64 {
    let own = reference_cost(counts, cols, &r);
    if r.height * r.width == 1 {
        return own;
    }
    let split: f64 = quadrants(&r).into_iter().map(|k| best_pruning_cost(counts, cols, k)).sum();
    own.min(split)
}

/// Random histogram with every entry drawn from `0..=max` (integers).
pub fn random_histogram(rng: &mut ChaCha8Rng, rows: usize, cols: usize, max: u32) -> SpatialHistogram {
    let mut h = SpatialHistogram::zeros(rows, cols).unwrap();
    for v in h.entries_mut() {
        *v = rng.random_range(0..=max) as f64;
    }
    h
}

pub fn edge_list(h: &SpatialHistogram) -> Vec<Edge> {
    h.edges().collect()
}

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
