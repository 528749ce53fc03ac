//! Iterative private estimation of a histogram: exponential-mechanism query
//! selection, a noisy measurement of the chosen query, and a multiplicative
//! update scaled by region density, followed by consistency repair.

use serde::{Deserialize, Serialize};

use crate::consistency::{consistent_inference, greedy_repair};
use crate::dp::{NoiseSource, PrivacyBudget};
use crate::error::{Error, Result};
use crate::grid::{PrefixSums, RangeQuery, SpatialHistogram};
use crate::partition::{PartitionSet, RegionMap};

/// Sensitivity of the selection score `|q(H) - q(H')|`.
pub const SCORE_SENSITIVITY: f64 = 1.0;

/// How violations left by an update are removed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RepairMode {
    /// L1-optimal consistent inference.
    #[default]
    Optimal,
    /// Clamp edges to their faces.
    Greedy,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthesisConfig {
    pub budget: PrivacyBudget,
    #[serde(default)]
    pub repair: RepairMode,
}

impl SynthesisConfig {
    pub fn new(budget: PrivacyBudget) -> Self {
        Self { budget, repair: RepairMode::Optimal }
    }

    pub fn iterations(&self) -> usize {
        self.budget.iterations
    }
}

/// Why a repair ran in an iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RepairTrigger {
    /// Negative measured error scaled the touched regions down.
    ScaleDown,
    /// A scale-up moved an edge owned by one region past the face of an
    /// untouched or lower-density neighbour.
    RegionBoundary,
}

/// One iteration of the synthesis loop.
///
/// `workload_error` and `max_error` are computed against the true data and
/// are diagnostics only; they are not privacy protected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub query: usize,
    pub noisy_error: f64,
    pub violations: usize,
    pub repair: Option<RepairTrigger>,
    pub repair_objective: f64,
    pub workload_error: f64,
    pub max_error: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SynthesisTrace {
    pub iterations: Vec<IterationRecord>,
}

impl SynthesisTrace {
    /// One JSON object per line.
    pub fn to_json_lines(&self) -> Result<String> {
        let mut out = String::new();
        for rec in &self.iterations {
            out.push_str(&serde_json::to_string(rec)?);
            out.push('\n');
        }
        Ok(out)
    }

    pub fn len(&self) -> usize {
        self.iterations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.iterations.is_empty()
    }
}

/// Uniform starting estimate: every face `n / |F|`, every edge half that.
pub fn init_uniform(rows: usize, cols: usize, n: f64) -> Result<SpatialHistogram> {
    let mut h = SpatialHistogram::zeros(rows, cols)?;
    let faces = h.face_count() as f64;
    let face = n / faces;
    h.faces_mut().iter_mut().for_each(|v| *v = face);
    h.edges_v_mut().iter_mut().for_each(|v| *v = face / 2.0);
    h.edges_h_mut().iter_mut().for_each(|v| *v = face / 2.0);
    h.set_n(n);
    Ok(h)
}

fn check_queries(queries: &[RangeQuery], rows: usize, cols: usize) -> Result<()> {
    queries.iter().try_for_each(|q| q.check_bounds(rows, cols))
}

/// Absolute error of every query on the estimate.
pub fn score_queries(h_true: &SpatialHistogram, h_est: &SpatialHistogram, queries: &[RangeQuery]) -> Result<Vec<f64>> {
    if h_true.rows() != h_est.rows() || h_true.cols() != h_est.cols() {
        return Err(Error::DimensionMismatch("true and estimated histograms differ in shape".into()));
    }
    check_queries(queries, h_true.rows(), h_true.cols())?;
    let (pt, pe) = (PrefixSums::new(h_true), PrefixSums::new(h_est));
    Ok(queries.iter().map(|q| (pt.eval(q) - pe.eval(q)).abs()).collect())
}

/// `(q(H) + Lap(T / eps4)) - q(H')`.
pub fn noisy_error(
    h_true: &SpatialHistogram,
    h_est: &SpatialHistogram,
    q: &RangeQuery,
    ns: &mut NoiseSource,
    eps4: f64,
    iterations: usize,
) -> Result<f64> {
    let truth = h_true.eval_range_query(q)?;
    let est = h_est.eval_range_query(q)?;
    Ok(truth + ns.laplace(iterations as f64 / eps4)? - est)
}

/// Density-weighted multiplicative update.
///
/// Every region intersecting `q` is touched as a whole. Faces and edges of
/// a touched region `p` are multiplied by `exp(werr * b_p / (2n))`; then all
/// entries share one factor that restores the pre-update face total.
pub fn apply_update(
    h: &SpatialHistogram,
    q: &RangeQuery,
    werr: f64,
    ps: &PartitionSet,
    n: f64,
) -> Result<SpatialHistogram> {
    let map = ps.region_map()?;
    if map.rows() != h.rows() || map.cols() != h.cols() {
        return Err(Error::DimensionMismatch("partition and histogram differ in shape".into()));
    }
    q.check_bounds(h.rows(), h.cols())?;
    let mut out = h.clone();
    update_in_place(&mut out, q, werr, ps, &map, n);
    Ok(out)
}

pub(crate) fn update_in_place(
    h: &mut SpatialHistogram,
    q: &RangeQuery,
    werr: f64,
    ps: &PartitionSet,
    map: &RegionMap,
    n: f64,
) {
    if !(n > 0.0) || werr == 0.0 {
        return;
    }
    let exponents: Vec<f64> = ps
        .regions
        .iter()
        .zip(&ps.densities)
        .map(|(r, b)| if r.rect().intersects(q) { werr * b / (2.0 * n) } else { 0.0 })
        .collect();
    // shifting every exponent by the same amount is absorbed by renormalization
    let shift = exponents.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let factors: Vec<f64> = exponents.iter().map(|x| (x - shift).exp()).collect();

    let before = h.face_total();
    let cols = h.cols();
    let regions = map.face_regions();
    for (v, &r) in h.faces_mut().iter_mut().zip(regions) {
        *v *= factors[r];
    }
    for (k, v) in h.edges_v_mut().iter_mut().enumerate() {
        let (row, col) = (k / (cols - 1), k % (cols - 1));
        *v *= factors[regions[row * cols + col]];
    }
    for (k, v) in h.edges_h_mut().iter_mut().enumerate() {
        *v *= factors[regions[k]];
    }
    let after = h.face_total();
    if after > 0.0 && before > 0.0 {
        let norm = before / after;
        h.entries_mut().for_each(|v| *v *= norm);
    }
}

/// Run the estimation loop for `config.iterations()` rounds.
///
/// Each round selects a query with budget `eps3 / T`, measures it with
/// `Lap(T / eps4)` noise, applies [`apply_update`] and, when the update left
/// the estimate inconsistent, replaces it with its repair.
pub fn synthesize(
    h_true: &SpatialHistogram,
    queries: &[RangeQuery],
    ps: &PartitionSet,
    config: &SynthesisConfig,
    ns: &mut NoiseSource,
) -> Result<(SpatialHistogram, SynthesisTrace)> {
    let (rows, cols) = (h_true.rows(), h_true.cols());
    if queries.is_empty() {
        return Err(Error::InvalidParameter("query set is empty".into()));
    }
    check_queries(queries, rows, cols)?;
    let map = ps.region_map()?;
    if map.rows() != rows || map.cols() != cols {
        return Err(Error::DimensionMismatch("partition and histogram differ in shape".into()));
    }
    let n = h_true.n();
    let budget = &config.budget;
    let truth_ps = PrefixSums::new(h_true);
    let truth: Vec<f64> = queries.iter().map(|q| truth_ps.eval(q)).collect();

    let mut est = init_uniform(rows, cols, n)?;
    let mut trace = SynthesisTrace::default();
    let mut scores = vec![0.0; queries.len()];
    for iteration in 0..budget.iterations {
        let est_ps = PrefixSums::new(&est);
        for ((s, q), t) in scores.iter_mut().zip(queries).zip(&truth) {
            *s = (t - est_ps.eval(q)).abs();
        }
        let chosen = ns.exp_mechanism_select(&scores, budget.selection_share(), SCORE_SENSITIVITY)?;
        let q = &queries[chosen];
        let werr = truth[chosen] + ns.laplace(budget.measurement_scale())? - est_ps.eval(q);

        update_in_place(&mut est, q, werr, ps, &map, n);

        let violations = est.check_consistency().len();
        let mut repair = None;
        let mut repair_objective = 0.0;
        if violations > 0 {
            let fixed = match config.repair {
                RepairMode::Optimal => consistent_inference(&est)?,
                RepairMode::Greedy => greedy_repair(&est),
            };
            repair_objective = fixed.objective;
            est = fixed.histogram;
            est.set_n(n);
            repair = Some(if werr < 0.0 { RepairTrigger::ScaleDown } else { RepairTrigger::RegionBoundary });
        }

        let est_ps = PrefixSums::new(&est);
        let errors = queries.iter().zip(&truth).map(|(q, t)| (t - est_ps.eval(q)).abs());
        let (sum, max) = errors.fold((0.0, 0.0f64), |(s, m), e| (s + e, m.max(e)));
        trace.iterations.push(IterationRecord {
            iteration,
            query: chosen,
            noisy_error: werr,
            violations,
            repair,
            repair_objective,
            workload_error: sum / queries.len() as f64,
            max_error: max,
        });
    }
    Ok((est, trace))
}
