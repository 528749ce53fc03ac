//! Query workloads, error metrics, baseline mechanisms and the experiment
//! runner.

use std::path::PathBuf;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dp::{derive_seed, NoiseSource};
use crate::error::{Error, Result};
use crate::grid::{PrefixSums, RangeQuery, SpatialHistogram};
use crate::pipeline::{publish_dqam, DqamConfig};
use crate::synth::{init_uniform, RepairMode, SCORE_SENSITIVITY};
use crate::trajectory::{gen_skewed, gen_uniform, ingest, GridSpec};

/// Default workload size.
pub const DEFAULT_QUERY_COUNT: usize = 16_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuerySet {
    pub version: u32,
    pub rows: usize,
    pub cols: usize,
    pub seed: u64,
    pub queries: Vec<RangeQuery>,
}

impl QuerySet {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let qs: QuerySet = serde_json::from_str(s)?;
        if qs.version != 1 {
            return Err(Error::UnsupportedVersion(qs.version));
        }
        crate::grid::check_dims(qs.rows, qs.cols)?;
        for q in &qs.queries {
            q.check_bounds(qs.rows, qs.cols)?;
        }
        Ok(qs)
    }
}

/// Random rectangles: both column bounds drawn uniformly and sorted, same
/// for rows.
pub fn gen_queries(rows: usize, cols: usize, count: usize, seed: u64) -> Result<QuerySet> {
    crate::grid::check_dims(rows, cols)?;
    if count == 0 {
        return Err(Error::InvalidParameter("query count must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let queries = (0..count)
        .map(|_| {
            let (x1, x2) = (rng.random_range(0..cols), rng.random_range(0..cols));
            let (y1, y2) = (rng.random_range(0..rows), rng.random_range(0..rows));
            RangeQuery { row_lo: y1.min(y2), row_hi: y1.max(y2), col_lo: x1.min(x2), col_hi: x1.max(x2) }
        })
        .collect();
    Ok(QuerySet { version: 1, rows, cols, seed, queries })
}

fn same_shape(a: &SpatialHistogram, b: &SpatialHistogram) -> Result<()> {
    if a.rows() != b.rows() || a.cols() != b.cols() {
        return Err(Error::DimensionMismatch(format!("{}x{} vs {}x{}", a.rows(), a.cols(), b.rows(), b.cols())));
    }
    Ok(())
}

/// Mean absolute query error over the workload.
pub fn avg_l1_error(h_true: &SpatialHistogram, h_pub: &SpatialHistogram, queries: &[RangeQuery]) -> Result<f64> {
    same_shape(h_true, h_pub)?;
    if queries.is_empty() {
        return Err(Error::InvalidParameter("query set is empty".into()));
    }
    for q in queries {
        q.check_bounds(h_true.rows(), h_true.cols())?;
    }
    let (a, b) = (PrefixSums::new(h_true), PrefixSums::new(h_pub));
    Ok(queries.iter().map(|q| (a.eval(q) - b.eval(q)).abs()).sum::<f64>() / queries.len() as f64)
}

/// Relative entropy `sum_j H[j] log(H[j] / H'[j]) / n` over faces and edges.
///
/// Entries with `H[j] = 0` contribute nothing; `H'[j]` is floored at
/// `1e-6 * total(H') / |H|`.
pub fn kld(h_true: &SpatialHistogram, h_pub: &SpatialHistogram) -> Result<f64> {
    same_shape(h_true, h_pub)?;
    let n = h_true.n();
    if !(n > 0.0) {
        return Ok(0.0);
    }
    let total: f64 = h_pub.entries().map(|v| v.max(0.0)).sum();
    let floor = (1e-6 * total / h_pub.entry_count() as f64).max(f64::MIN_POSITIVE);
    let sum: f64 =
        h_true.entries().zip(h_pub.entries()).filter(|(p, _)| *p > 0.0).map(|(p, q)| p * (p / q.max(floor)).ln()).sum();
    Ok(sum / n)
}

/// Per-entry Laplace noise with scale `(2 k_max - 1) / epsilon`, negatives
/// clamped to zero. No consistency repair.
pub fn lm_publish(
    h_true: &SpatialHistogram,
    epsilon: f64,
    k_max: usize,
    ns: &mut NoiseSource,
) -> Result<SpatialHistogram> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidParameter(format!("epsilon must be positive, got {epsilon}")));
    }
    let sensitivity = (2 * k_max.max(1) - 1) as f64;
    let scale = sensitivity / epsilon;
    let mut out = h_true.clone().without_metadata();
    for v in out.entries_mut() {
        *v = (*v + ns.laplace(scale)?).max(0.0);
    }
    Ok(out)
}

/// Multiplicative weights over faces only.
///
/// Half the budget selects queries, half measures them. Faces inside the
/// selected rectangle are scaled by `exp(werr / (2n))` and renormalized to
/// total `n`; edges stay at their uniform initial values and no consistency
/// repair runs.
pub fn mwem_face_publish(
    h_true: &SpatialHistogram,
    queries: &[RangeQuery],
    epsilon: f64,
    iterations: usize,
    ns: &mut NoiseSource,
) -> Result<SpatialHistogram> {
    if !(epsilon > 0.0) || iterations == 0 {
        return Err(Error::InvalidParameter("epsilon must be positive and iterations at least 1".into()));
    }
    if queries.is_empty() {
        return Err(Error::InvalidParameter("query set is empty".into()));
    }
    let (rows, cols) = (h_true.rows(), h_true.cols());
    for q in queries {
        q.check_bounds(rows, cols)?;
    }
    let n = h_true.n();
    let selection_share = epsilon / 2.0 / iterations as f64;
    let measurement_scale = iterations as f64 / (epsilon / 2.0);
    let truth_ps = PrefixSums::new(h_true);
    let truth: Vec<f64> = queries.iter().map(|q| truth_ps.eval(q)).collect();
    let mut est = init_uniform(rows, cols, n)?;
    let mut scores = vec![0.0; queries.len()];
    for _ in 0..iterations {
        let ps = PrefixSums::new(&est);
        for ((s, q), t) in scores.iter_mut().zip(queries).zip(&truth) {
            *s = (t - ps.eval(q)).abs();
        }
        let i = ns.exp_mechanism_select(&scores, selection_share, SCORE_SENSITIVITY)?;
        let q = &queries[i];
        let werr = truth[i] + ns.laplace(measurement_scale)? - ps.eval(q);
        if !(n > 0.0) {
            continue;
        }
        let (inside, outside) = (werr / (2.0 * n), 0.0f64);
        let shift = inside.max(outside);
        let (f_in, f_out) = ((inside - shift).exp(), (outside - shift).exp());
        let before = est.face_total();
        let faces = est.faces_mut();
        for r in 0..rows {
            for c in 0..cols {
                let inside = (q.row_lo..=q.row_hi).contains(&r) && (q.col_lo..=q.col_hi).contains(&c);
                faces[r * cols + c] *= if inside { f_in } else { f_out };
            }
        }
        let after = est.face_total();
        if after > 0.0 {
            let norm = before / after;
            est.faces_mut().iter_mut().for_each(|v| *v *= norm);
        }
    }
    Ok(est)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mechanism {
    /// Partitioning plus synthesis with optimal consistency repair.
    Dqam,
    /// Same, with the greedy edge clamp instead of the LP.
    DqamGreedy,
    MwemFace,
    Lm,
}

impl Mechanism {
    pub fn id(&self) -> &'static str {
        match self {
            Mechanism::Dqam => "dqam",
            Mechanism::DqamGreedy => "dqam_greedy",
            Mechanism::MwemFace => "mwem_face",
            Mechanism::Lm => "lm",
        }
    }

    /// Whether published output is guaranteed consistent.
    pub fn consistent(&self) -> bool {
        matches!(self, Mechanism::Dqam | Mechanism::DqamGreedy)
    }
}

impl std::str::FromStr for Mechanism {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dqam" => Ok(Mechanism::Dqam),
            "dqam_greedy" => Ok(Mechanism::DqamGreedy),
            "mwem_face" | "mwem" => Ok(Mechanism::MwemFace),
            "lm" => Ok(Mechanism::Lm),
            other => Err(Error::InvalidParameter(format!("unknown mechanism '{other}'"))),
        }
    }
}

/// Parameters shared by every mechanism run.
#[derive(Debug, Clone, Copy)]
pub struct RunParams {
    pub epsilon: f64,
    pub iterations: usize,
    pub seed: u64,
    pub delta: Option<f64>,
}

/// Publish `h_true` with the given mechanism.
pub fn publish(
    mechanism: Mechanism,
    h_true: &SpatialHistogram,
    queries: &[RangeQuery],
    p: &RunParams,
) -> Result<SpatialHistogram> {
    match mechanism {
        Mechanism::Dqam | Mechanism::DqamGreedy => {
            let mut cfg = DqamConfig::new(p.epsilon, p.iterations, p.seed);
            cfg.delta = p.delta;
            if mechanism == Mechanism::DqamGreedy {
                cfg.repair = RepairMode::Greedy;
            }
            Ok(publish_dqam(h_true, queries, &cfg)?.histogram)
        }
        Mechanism::MwemFace => {
            let mut ns = NoiseSource::new(p.seed).derive("mwem_face");
            mwem_face_publish(h_true, queries, p.epsilon, p.iterations, &mut ns)
        }
        Mechanism::Lm => {
            let k_max = h_true.max_path_len().ok_or(Error::MissingNormalization)?;
            let mut ns = NoiseSource::new(p.seed).derive("lm");
            lm_publish(h_true, p.epsilon, k_max, &mut ns)
        }
    }
}

/// Entries violating consistency or non-negativity.
pub fn violation_count(h: &SpatialHistogram) -> usize {
    h.check_consistency().len() + h.negative_entries()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetModel {
    Uniform,
    Skewed,
}

fn default_concentration() -> f64 {
    1.0
}

fn default_hotspot() -> (f64, f64) {
    (0.5, 0.5)
}

/// Where an experiment's input histogram comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DatasetSpec {
    /// Previously ingested histogram.
    File { name: String, histogram: PathBuf },
    /// Synthetic random walks on the unit square.
    Generated {
        name: String,
        model: DatasetModel,
        n: usize,
        mean_len: usize,
        resolution: u32,
        #[serde(default)]
        seed: u64,
        /// Hotspot in unit-square coordinates `(lat, lon)`.
        #[serde(default = "default_hotspot")]
        hotspot: (f64, f64),
        #[serde(default = "default_concentration")]
        concentration: f64,
    },
}

impl DatasetSpec {
    pub fn name(&self) -> &str {
        match self {
            DatasetSpec::File { name, .. } | DatasetSpec::Generated { name, .. } => name,
        }
    }

    pub fn load(&self) -> Result<SpatialHistogram> {
        match self {
            DatasetSpec::File { histogram, .. } => SpatialHistogram::from_json(&std::fs::read_to_string(histogram)?),
            DatasetSpec::Generated { model, n, mean_len, resolution, seed, hotspot, concentration, .. } => {
                let g = GridSpec::new(0.0, 0.0, 1.0, 1.0, *resolution)?;
                let trajs = match model {
                    DatasetModel::Uniform => gen_uniform(*n, *mean_len, &g, *seed)?,
                    DatasetModel::Skewed => gen_skewed(*n, *mean_len, &g, *hotspot, *concentration, *seed)?,
                };
                Ok(ingest(&trajs, &g)?.histogram)
            }
        }
    }
}

fn default_iterations() -> usize {
    10
}

fn default_query_count() -> usize {
    DEFAULT_QUERY_COUNT
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub mechanisms: Vec<Mechanism>,
    pub epsilons: Vec<f64>,
    pub datasets: Vec<DatasetSpec>,
    pub seeds: Vec<u64>,
    #[serde(rename = "T", default = "default_iterations")]
    pub iterations: usize,
    #[serde(default = "default_query_count")]
    pub query_count: usize,
    #[serde(default)]
    pub delta: Option<f64>,
}

/// One mechanism run on one dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mechanism: String,
    pub epsilon: f64,
    pub dataset: String,
    pub seed: u64,
    pub avg_l1: f64,
    pub kld: f64,
    pub runtime_s: f64,
    pub violations: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Mean and standard deviation over the seeds of one grid cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub mechanism: String,
    pub epsilon: f64,
    pub dataset: String,
    pub runs: usize,
    pub mean_avg_l1: f64,
    pub std_avg_l1: f64,
    pub mean_kld: f64,
    pub std_kld: f64,
    pub failures: usize,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub reports: Vec<EvalReport>,
    pub summary: Vec<SummaryRow>,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Evaluate one mechanism on one prepared dataset.
pub fn evaluate_run(
    mechanism: Mechanism,
    dataset: &str,
    h_true: &SpatialHistogram,
    queries: &[RangeQuery],
    params: &RunParams,
) -> EvalReport {
    let start = Instant::now();
    let outcome = publish(mechanism, h_true, queries, params).and_then(|h| {
        let avg = avg_l1_error(h_true, &h, queries)?;
        let kl = kld(h_true, &h)?;
        Ok((avg, kl, violation_count(&h)))
    });
    let runtime_s = start.elapsed().as_secs_f64();
    let base = EvalReport {
        mechanism: mechanism.id().to_string(),
        epsilon: params.epsilon,
        dataset: dataset.to_string(),
        seed: params.seed,
        avg_l1: f64::NAN,
        kld: f64::NAN,
        runtime_s,
        violations: 0,
        error: None,
    };
    match outcome {
        Ok((avg_l1, kld, violations)) => EvalReport { avg_l1, kld, violations, ..base },
        Err(e) => EvalReport { error: Some(e.to_string()), ..base },
    }
}

/// Run the full grid of datasets x mechanisms x epsilons x seeds.
///
/// Cells run in parallel; reports come back in configuration order.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    if config.mechanisms.is_empty()
        || config.epsilons.is_empty()
        || config.datasets.is_empty()
        || config.seeds.is_empty()
    {
        return Err(Error::InvalidParameter("experiment grid has an empty axis".into()));
    }
    if let Some(e) = config.epsilons.iter().find(|e| !(**e > 0.0)) {
        return Err(Error::InvalidParameter(format!("epsilon must be positive, got {e}")));
    }
    let mut prepared = Vec::with_capacity(config.datasets.len());
    for (i, ds) in config.datasets.iter().enumerate() {
        let h = ds.load()?;
        let qs = gen_queries(h.rows(), h.cols(), config.query_count, derive_seed(i as u64, "queries"))?;
        prepared.push((ds.name().to_string(), h, qs.queries));
    }
    let mut cells = Vec::new();
    for d in 0..prepared.len() {
        for &m in &config.mechanisms {
            for &eps in &config.epsilons {
                for &seed in &config.seeds {
                    cells.push((d, m, eps, seed));
                }
            }
        }
    }
    let reports: Vec<EvalReport> = cells
        .par_iter()
        .map(|&(d, m, epsilon, seed)| {
            let (name, h, qs) = &prepared[d];
            let params = RunParams { epsilon, iterations: config.iterations, seed, delta: config.delta };
            evaluate_run(m, name, h, qs, &params)
        })
        .collect();

    let mut summary = Vec::new();
    for chunk in reports.chunks(config.seeds.len()) {
        let ok: Vec<&EvalReport> = chunk.iter().filter(|r| r.error.is_none()).collect();
        let l1: Vec<f64> = ok.iter().map(|r| r.avg_l1).collect();
        let kl: Vec<f64> = ok.iter().map(|r| r.kld).collect();
        let (mean_avg_l1, std_avg_l1) = mean_std(&l1);
        let (mean_kld, std_kld) = mean_std(&kl);
        summary.push(SummaryRow {
            mechanism: chunk[0].mechanism.clone(),
            epsilon: chunk[0].epsilon,
            dataset: chunk[0].dataset.clone(),
            runs: ok.len(),
            mean_avg_l1,
            std_avg_l1,
            mean_kld,
            std_kld,
            failures: chunk.len() - ok.len(),
        });
    }
    Ok(ExperimentResult { reports, summary })
}

pub const REPORT_HEADER: [&str; 8] =
    ["mechanism", "epsilon", "dataset", "seed", "avg_l1", "kld", "runtime_s", "violations"];

/// Per-run CSV in long format.
pub fn reports_to_csv<W: std::io::Write>(writer: W, reports: &[EvalReport]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(REPORT_HEADER)?;
    for r in reports {
        w.write_record([
            r.mechanism.clone(),
            r.epsilon.to_string(),
            r.dataset.clone(),
            r.seed.to_string(),
            r.avg_l1.to_string(),
            r.kld.to_string(),
            format!("{:.6}", r.runtime_s),
            r.violations.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn summary_to_csv<W: std::io::Write>(writer: W, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::CellIndex;

    #[test]
    fn one_cell_grid_gives_the_cell() {
        let qs = gen_queries(1, 1, 1, 0).unwrap();
        assert_eq!(qs.queries, vec![RangeQuery::single(CellIndex::new(0, 0))]);
        assert!(gen_queries(4, 4, 0, 0).is_err());
    }

    #[test]
    fn query_json_round_trip() {
        let qs = gen_queries(8, 8, 50, 3).unwrap();
        assert_eq!(QuerySet::from_json(&qs.to_json().unwrap()).unwrap(), qs);
        let mut bad = qs.clone();
        bad.queries[0].row_hi = 8;
        assert!(QuerySet::from_json(&bad.to_json().unwrap()).is_err());
    }

    #[test]
    fn avg_l1_examples() {
        let mut a = SpatialHistogram::zeros(2, 2).unwrap();
        a.faces_mut()[0] = 5.0;
        let mut b = SpatialHistogram::zeros(2, 2).unwrap();
        b.faces_mut()[0] = 3.0;
        let q = [RangeQuery::single(CellIndex::new(0, 0))];
        assert_eq!(avg_l1_error(&a, &a, &q).unwrap(), 0.0);
        assert_eq!(avg_l1_error(&a, &b, &q).unwrap(), 2.0);
        assert!(avg_l1_error(&a, &SpatialHistogram::zeros(4, 4).unwrap(), &q).is_err());
    }

    #[test]
    fn kld_examples() {
        let n = 16.0;
        let mut point = SpatialHistogram::zeros(4, 4).unwrap();
        point.faces_mut()[5] = n;
        point.set_n(n);
        assert_eq!(kld(&point, &point).unwrap(), 0.0);
        let uniform = init_uniform(4, 4, n).unwrap();
        assert!((kld(&point, &uniform).unwrap() - 16f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn lm_sensitivity_and_noise_free_limit() {
        let paths = vec![vec![CellIndex::new(0, 0), CellIndex::new(0, 1)]];
        let h = SpatialHistogram::from_cell_paths(&paths, 2, 2).unwrap();
        let out = lm_publish(&h, 1.0, 2, &mut NoiseSource::disabled()).unwrap();
        assert_eq!(out.entries().collect::<Vec<_>>(), h.entries().collect::<Vec<_>>());
        // k_max = 10 gives 19 / epsilon
        assert_eq!((2 * 10 - 1) as f64 / 0.5, 38.0);
        let noisy = lm_publish(&h, 0.01, 10, &mut NoiseSource::new(1)).unwrap();
        assert_eq!(noisy.negative_entries(), 0);
    }

    #[test]
    fn mechanism_ids_round_trip() {
        for m in [Mechanism::Dqam, Mechanism::DqamGreedy, Mechanism::MwemFace, Mechanism::Lm] {
            assert_eq!(m.id().parse::<Mechanism>().unwrap(), m);
        }
        assert!("dawa".parse::<Mechanism>().is_err());
    }

    #[test]
    fn mean_std_basics() {
        assert_eq!(mean_std(&[2.0]), (2.0, 0.0));
        let (m, s) = mean_std(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 2f64.sqrt()).abs() < 1e-12);
    }
}
