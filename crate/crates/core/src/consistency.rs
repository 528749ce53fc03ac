//! Consistent inference: the L1-nearest histogram in which every edge is at
//! most the smaller of its two faces and nothing is negative. Also the
//! greedy clamp used as a comparison baseline.
//!
//! Some optimum never lowers a face and never raises an edge, since lowering
//! a face or raising an edge only tightens the constraints. After clamping
//! negatives to zero, the problem therefore reduces to
//!
//! ```text
//! min  sum(u) + sum(d)
//! s.t. d_e + u_f >= e - f   for every edge e and endpoint face f
//!      u, d >= 0
//! ```
//!
//! where `u` raises faces and `d` lowers edges. Only rows with a positive
//! right-hand side bind, and the rows split into independent connected
//! components that are solved separately.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{SpatialHistogram, CONSISTENCY_TOL};
use crate::simplex::minimize_covering;

/// A repaired histogram and its L1 distance from the input.
#[derive(Debug, Clone)]
pub struct Repair {
    pub histogram: SpatialHistogram,
    pub objective: f64,
}

/// The full L1 projection as a single LP over faces, edges and one
/// absolute-deviation variable per entry.
///
/// Variables are ordered: all faces, all vertical edges, all horizontal
/// edges, then the matching deviation variables in the same order. Every
/// row reads `sum(coef * var) >= rhs`; non-negativity is implicit.
#[derive(Debug, Clone)]
pub struct LpProblem {
    pub entries: usize,
    pub target: Vec<f64>,
    pub objective: Vec<f64>,
    pub rows: Vec<LpRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpRow {
    pub terms: Vec<(usize, f64)>,
    pub rhs: f64,
    pub label: String,
}

/// Row-major entry index of every edge's endpoint faces, edges in
/// [`SpatialHistogram::edges`] order.
fn edge_endpoints(h: &SpatialHistogram) -> Vec<(usize, usize)> {
    let cols = h.cols();
    h.edges()
        .map(|e| {
            let (a, b) = e.faces();
            (a.row * cols + a.col, b.row * cols + b.col)
        })
        .collect()
}

impl LpProblem {
    pub fn from_histogram(h: &SpatialHistogram) -> Self {
        let target: Vec<f64> = h.entries().collect();
        let n = target.len();
        let faces = h.face_count();
        let mut objective = vec![0.0; 2 * n];
        objective[n..].iter_mut().for_each(|c| *c = 1.0);
        let mut rows = Vec::new();
        for (k, (a, b)) in edge_endpoints(h).into_iter().enumerate() {
            let e = faces + k;
            rows.push(LpRow { terms: vec![(a, 1.0), (e, -1.0)], rhs: 0.0, label: format!("edge{k}<=face{a}") });
            rows.push(LpRow { terms: vec![(b, 1.0), (e, -1.0)], rhs: 0.0, label: format!("edge{k}<=face{b}") });
        }
        for (k, &x) in target.iter().enumerate() {
            rows.push(LpRow { terms: vec![(n + k, 1.0), (k, -1.0)], rhs: -x, label: format!("dev{k}+") });
            rows.push(LpRow { terms: vec![(n + k, 1.0), (k, 1.0)], rhs: x, label: format!("dev{k}-") });
        }
        Self { entries: n, target, objective, rows }
    }

    pub fn variable_count(&self) -> usize {
        self.objective.len()
    }

    /// Solve the whole problem in one simplex run. Returns the objective and
    /// the entry values (deviation variables dropped).
    pub fn solve(&self) -> Result<(f64, Vec<f64>)> {
        let nv = self.variable_count();
        let mut g = vec![0.0; self.rows.len() * nv];
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, coef) in &row.terms {
                g[i * nv + j] += coef;
            }
        }
        let h: Vec<f64> = self.rows.iter().map(|r| r.rhs).collect();
        let (obj, z) = minimize_covering(&self.objective, &g, &h)?;
        Ok((obj, z[..self.entries].to_vec()))
    }

    /// Plain-text dump for debugging.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        let n = self.entries;
        let _ =
            writeln!(out, "# variables: x0..x{} entries, t0..t{} deviations", n.saturating_sub(1), n.saturating_sub(1));
        let _ = writeln!(out, "minimize");
        let terms: Vec<String> = (0..n).map(|k| format!("t{k}")).collect();
        let _ = writeln!(out, "  {}", terms.join(" + "));
        let _ = writeln!(out, "subject to");
        let name = |j: usize| if j < n { format!("x{j}") } else { format!("t{}", j - n) };
        for row in &self.rows {
            let lhs: Vec<String> = row.terms.iter().map(|&(j, c)| format!("{c:+} {}", name(j))).collect();
            let _ = writeln!(out, "  {}: {} >= {}", row.label, lhs.join(" "), row.rhs);
        }
        let _ = writeln!(out, "bounds\n  all >= 0");
        out
    }
}

struct Dsu(Vec<usize>);

impl Dsu {
    fn find(&mut self, x: usize) -> usize {
        let mut r = x;
        while self.0[r] != r {
            r = self.0[r];
        }
        let mut x = x;
        while self.0[x] != r {
            let next = self.0[x];
            self.0[x] = r;
            x = next;
        }
        r
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.0[ra.max(rb)] = ra.min(rb);
        }
    }
}

/// One connected block of the reduced covering problem.
#[derive(Debug, Clone)]
pub struct Component {
    /// Entry indices (faces then edges, as in [`SpatialHistogram::entries`]).
    pub vars: Vec<usize>,
    /// `(edge var, face var, demand)`, variables local to `vars`.
    pub rows: Vec<(usize, usize, f64)>,
}

impl Component {
    /// Solve `min sum(z)` over this block; returns objective and local `z`.
    pub fn solve(&self) -> Result<(f64, Vec<f64>)> {
        let nv = self.vars.len();
        let mut g = vec![0.0; self.rows.len() * nv];
        let mut h = Vec::with_capacity(self.rows.len());
        for (i, &(e, f, demand)) in self.rows.iter().enumerate() {
            g[i * nv + e] = 1.0;
            g[i * nv + f] = 1.0;
            h.push(demand);
        }
        minimize_covering(&vec![1.0; nv], &g, &h)
    }
}

/// Clamp negatives to zero and split the binding constraints into
/// components. Returns the clamped entries, the cost of clamping and the
/// components.
pub fn violation_components(h: &SpatialHistogram) -> (Vec<f64>, f64, Vec<Component>) {
    let mut base: Vec<f64> = h.entries().collect();
    let mut clamp_cost = 0.0;
    for v in &mut base {
        if *v < 0.0 {
            clamp_cost += -*v;
            *v = 0.0;
        }
    }
    let faces = h.face_count();
    let mut pairs = Vec::new();
    for (k, (a, b)) in edge_endpoints(h).into_iter().enumerate() {
        let e = faces + k;
        for f in [a, b] {
            let demand = base[e] - base[f];
            if demand > 0.0 {
                pairs.push((e, f, demand));
            }
        }
    }
    let mut dsu = Dsu((0..base.len()).collect());
    for &(e, f, _) in &pairs {
        dsu.union(e, f);
    }
    let mut by_root: std::collections::BTreeMap<usize, Component> = Default::default();
    let mut local: std::collections::HashMap<usize, usize> = Default::default();
    for &(e, f, demand) in &pairs {
        let root = dsu.find(e);
        let comp = by_root.entry(root).or_insert_with(|| Component { vars: Vec::new(), rows: Vec::new() });
        let mut id = |var: usize, comp: &mut Component| {
            *local.entry(var).or_insert_with(|| {
                comp.vars.push(var);
                comp.vars.len() - 1
            })
        };
        let le = id(e, comp);
        let lf = id(f, comp);
        comp.rows.push((le, lf, demand));
    }
    (base, clamp_cost, by_root.into_values().collect())
}

fn rebuild(h: &SpatialHistogram, values: Vec<f64>) -> SpatialHistogram {
    let mut out = h.clone().without_metadata();
    for (slot, v) in out.entries_mut().zip(values) {
        *slot = v;
    }
    out
}

/// L1-nearest consistent, non-negative histogram.
///
/// The reported objective is the L1 distance between input and output.
pub fn consistent_inference(h: &SpatialHistogram) -> Result<Repair> {
    if let Some(v) = h.entries().find(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter(format!("histogram entry {v} is not finite")));
    }
    let (mut values, _, components) = violation_components(h);
    let solved: Vec<Result<(f64, Vec<f64>)>> = components.par_iter().map(Component::solve).collect();
    let faces = h.face_count();
    for (comp, result) in components.iter().zip(solved) {
        let (_, z) = result?;
        for (local, &var) in comp.vars.iter().enumerate() {
            if var < faces {
                values[var] += z[local];
            } else {
                values[var] = (values[var] - z[local]).max(0.0);
            }
        }
    }

    // Snap rounding residue so the constraints hold exactly.
    let scale = values.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    for (k, (a, b)) in edge_endpoints(h).into_iter().enumerate() {
        let e = faces + k;
        let cap = values[a].min(values[b]);
        if values[e] > cap {
            let excess = values[e] - cap;
            if excess > 1e-7 * scale {
                return Err(Error::Solver(format!(
                    "solution leaves edge entry {e} above its faces by {excess}; solver lost precision"
                )));
            }
            values[e] = cap;
        }
    }

    let histogram = rebuild(h, values);
    debug_assert!(histogram.check_consistency().is_empty());
    let objective = histogram.l1_distance(h)?;
    Ok(Repair { histogram, objective })
}

/// Clamp every edge to the smaller of its faces (and to zero); faces are
/// left as they are.
pub fn greedy_repair(h: &SpatialHistogram) -> Repair {
    let mut out = h.clone().without_metadata();
    for edge in h.edges() {
        let (a, b) = edge.faces();
        let cap = h.face(a).min(h.face(b));
        let slot = out.edge_mut(edge);
        *slot = slot.min(cap).max(0.0);
    }
    let objective = out.l1_distance(h).expect("same shape");
    Repair { histogram: out, objective }
}

/// True when the histogram is consistent and has no negative entry.
pub fn is_consistent(h: &SpatialHistogram) -> bool {
    h.check_consistency().is_empty() && h.entries().all(|v| v >= -CONSISTENCY_TOL)
}
