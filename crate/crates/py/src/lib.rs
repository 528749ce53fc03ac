//! Python bindings for the `dqam` crate.
//!
//! Histograms cross the boundary as `SpatialHistogram` objects (or their
//! JSON form), queries as `(row_lo, row_hi, col_lo, col_hi)` tuples and
//! trajectories as `(id, [(lat, lon), ...])` pairs.

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;

use dqam::eval::{self, Mechanism, QuerySet, RunParams};
use dqam::grid::{self, RangeQuery};
use dqam::trajectory::{self, GridSpec, RawTrajectory};
use dqam::{DqamConfig, NoiseSource, RepairMode};

create_exception!(dqam_py, DqamError, PyException, "Raised for every error reported by the library.");

type Query = (usize, usize, usize, usize);
type Trajectory = (String, Vec<(f64, f64)>);

fn to_py(e: dqam::Error) -> PyErr {
    DqamError::new_err(format!("{}: {e}", e.category()))
}

fn queries_from(raw: &[Query]) -> PyResult<Vec<RangeQuery>> {
    raw.iter().map(|&(a, b, c, d)| RangeQuery::new(a, b, c, d).map_err(to_py)).collect()
}

fn queries_to(qs: &[RangeQuery]) -> Vec<Query> {
    qs.iter().map(|q| (q.row_lo, q.row_hi, q.col_lo, q.col_hi)).collect()
}

fn grid_spec(bbox: (f64, f64, f64, f64), resolution: u32) -> PyResult<GridSpec> {
    GridSpec::new(bbox.0, bbox.1, bbox.2, bbox.3, resolution).map_err(to_py)
}

fn trajectories_from(raw: Vec<Trajectory>) -> Vec<RawTrajectory> {
    raw.into_iter().map(|(id, points)| RawTrajectory { id, points }).collect()
}

fn trajectories_to(ts: Vec<RawTrajectory>) -> Vec<Trajectory> {
    ts.into_iter().map(|t| (t.id, t.points)).collect()
}

/// Face and edge counts over a `rows x cols` grid.
#[pyclass(name = "SpatialHistogram", module = "dqam_py", from_py_object)]
#[derive(Clone)]
struct PyHistogram {
    inner: grid::SpatialHistogram,
}

#[pymethods]
impl PyHistogram {
    /// All-zero histogram.
    #[new]
    fn new(rows: usize, cols: usize) -> PyResult<Self> {
        Ok(Self { inner: grid::SpatialHistogram::zeros(rows, cols).map_err(to_py)? })
    }

    /// Build from paths of `(row, col)` cells; consecutive cells must be adjacent.
    #[staticmethod]
    fn from_paths(paths: Vec<Vec<(usize, usize)>>, rows: usize, cols: usize) -> PyResult<Self> {
        let paths: Vec<Vec<grid::CellIndex>> =
            paths.into_iter().map(|p| p.into_iter().map(|(r, c)| grid::CellIndex::new(r, c)).collect()).collect();
        Ok(Self { inner: grid::SpatialHistogram::from_cell_paths(&paths, rows, cols).map_err(to_py)? })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self { inner: grid::SpatialHistogram::from_json(text).map_err(to_py)? })
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(to_py)
    }

    #[getter]
    fn rows(&self) -> usize {
        self.inner.rows()
    }

    #[getter]
    fn cols(&self) -> usize {
        self.inner.cols()
    }

    #[getter]
    fn n(&self) -> f64 {
        self.inner.n()
    }

    #[getter]
    fn max_path_len(&self) -> Option<usize> {
        self.inner.max_path_len()
    }

    /// Row-major face counts.
    #[getter]
    fn faces(&self) -> Vec<f64> {
        self.inner.faces().to_vec()
    }

    /// Edges between horizontally adjacent faces, `rows x (cols - 1)`.
    #[getter]
    fn edges_v(&self) -> Vec<f64> {
        self.inner.edges_v().to_vec()
    }

    /// Edges between vertically adjacent faces, `(rows - 1) x cols`.
    #[getter]
    fn edges_h(&self) -> Vec<f64> {
        self.inner.edges_h().to_vec()
    }

    fn face(&self, row: usize, col: usize) -> PyResult<f64> {
        if row >= self.inner.rows() || col >= self.inner.cols() {
            return Err(to_py(dqam::Error::CellOutOfBounds {
                row,
                col,
                rows: self.inner.rows(),
                cols: self.inner.cols(),
            }));
        }
        Ok(self.inner.face(grid::CellIndex::new(row, col)))
    }

    fn query(&self, row_lo: usize, row_hi: usize, col_lo: usize, col_hi: usize) -> PyResult<f64> {
        let q = RangeQuery::new(row_lo, row_hi, col_lo, col_hi).map_err(to_py)?;
        self.inner.eval_range_query(&q).map_err(to_py)
    }

    /// Answers to many queries at once, via prefix sums.
    fn query_many(&self, queries: Vec<Query>) -> PyResult<Vec<f64>> {
        let qs = queries_from(&queries)?;
        for q in &qs {
            q.check_bounds(self.inner.rows(), self.inner.cols()).map_err(to_py)?;
        }
        let ps = grid::PrefixSums::new(&self.inner);
        Ok(qs.iter().map(|q| ps.eval(q)).collect())
    }

    fn is_consistent(&self) -> bool {
        dqam::is_consistent(&self.inner)
    }

    /// Number of edges larger than one of their faces.
    fn violations(&self) -> usize {
        self.inner.check_consistency().len()
    }

    fn l1_distance(&self, other: &PyHistogram) -> PyResult<f64> {
        self.inner.l1_distance(&other.inner).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!("SpatialHistogram(rows={}, cols={}, n={})", self.inner.rows(), self.inner.cols(), self.inner.n())
    }
}

/// Rectangle workload as a list of query tuples.
#[pyfunction]
#[pyo3(signature = (rows, cols, count=eval::DEFAULT_QUERY_COUNT, seed=0))]
fn gen_queries(rows: usize, cols: usize, count: usize, seed: u64) -> PyResult<Vec<Query>> {
    let qs = eval::gen_queries(rows, cols, count, seed).map_err(to_py)?;
    Ok(queries_to(&qs.queries))
}

/// Query set JSON as written by the CLI.
#[pyfunction]
fn load_queries(text: &str) -> PyResult<Vec<Query>> {
    Ok(queries_to(&QuerySet::from_json(text).map_err(to_py)?.queries))
}

/// Private quadtree partition; returns `(regions, densities, delta)` with
/// regions as `(row, col, height, width)`.
#[allow(clippy::type_complexity)]
#[pyfunction]
#[pyo3(signature = (hist, epsilon, iterations=10, seed=0, delta=None))]
fn partition(
    py: Python<'_>,
    hist: &PyHistogram,
    epsilon: f64,
    iterations: usize,
    seed: u64,
    delta: Option<f64>,
) -> PyResult<(Vec<(usize, usize, usize, usize)>, Vec<f64>, f64)> {
    let h = &hist.inner;
    let ps = py
        .detach(|| {
            let budget = dqam::split_budget(epsilon, iterations)?;
            dqam::partition(h, &budget, &mut NoiseSource::new(seed).derive("partition"), delta)
        })
        .map_err(to_py)?;
    let regions = ps.regions.iter().map(|r| (r.row, r.col, r.height, r.width)).collect();
    Ok((regions, ps.densities, ps.delta))
}

/// Publish a private histogram; `mechanism` is one of `dqam`,
/// `dqam_greedy`, `mwem_face` or `lm`.
#[pyfunction]
#[pyo3(signature = (hist, queries, epsilon, iterations=10, seed=0, delta=None, mechanism="dqam"))]
#[allow(clippy::too_many_arguments)]
fn publish(
    py: Python<'_>,
    hist: &PyHistogram,
    queries: Vec<Query>,
    epsilon: f64,
    iterations: usize,
    seed: u64,
    delta: Option<f64>,
    mechanism: &str,
) -> PyResult<PyHistogram> {
    let mechanism: Mechanism = mechanism.parse().map_err(to_py)?;
    let qs = queries_from(&queries)?;
    let h = &hist.inner;
    let p = RunParams { epsilon, iterations, seed, delta };
    let inner = py.detach(|| eval::publish(mechanism, h, &qs, &p)).map_err(to_py)?;
    Ok(PyHistogram { inner })
}

/// Full DQAM run; returns the histogram, the number of regions and the
/// per-iteration trace as JSON lines.
#[pyfunction]
#[pyo3(signature = (hist, queries, epsilon, iterations=10, seed=0, delta=None, greedy=false))]
#[allow(clippy::too_many_arguments)]
fn synthesize(
    py: Python<'_>,
    hist: &PyHistogram,
    queries: Vec<Query>,
    epsilon: f64,
    iterations: usize,
    seed: u64,
    delta: Option<f64>,
    greedy: bool,
) -> PyResult<(PyHistogram, usize, String)> {
    let qs = queries_from(&queries)?;
    let mut cfg = DqamConfig::new(epsilon, iterations, seed);
    cfg.delta = delta;
    if greedy {
        cfg.repair = RepairMode::Greedy;
    }
    let h = &hist.inner;
    let run = py.detach(|| dqam::publish_dqam(h, &qs, &cfg)).map_err(to_py)?;
    let trace = run.trace.to_json_lines().map_err(to_py)?;
    Ok((PyHistogram { inner: run.histogram }, run.partition.regions.len(), trace))
}

/// Closest consistent, non-negative histogram in L1; returns it with its distance.
#[pyfunction]
fn consistent_inference(py: Python<'_>, hist: &PyHistogram) -> PyResult<(PyHistogram, f64)> {
    let h = &hist.inner;
    let r = py.detach(|| dqam::consistent_inference(h)).map_err(to_py)?;
    Ok((PyHistogram { inner: r.histogram }, r.objective))
}

/// Cheap repair that lowers each offending edge to its smaller face.
#[pyfunction]
fn greedy_repair(hist: &PyHistogram) -> (PyHistogram, f64) {
    let r = dqam::greedy_repair(&hist.inner);
    (PyHistogram { inner: r.histogram }, r.objective)
}

#[pyfunction]
fn avg_l1_error(truth: &PyHistogram, published: &PyHistogram, queries: Vec<Query>) -> PyResult<f64> {
    let qs = queries_from(&queries)?;
    eval::avg_l1_error(&truth.inner, &published.inner, &qs).map_err(to_py)
}

#[pyfunction]
fn kld(truth: &PyHistogram, published: &PyHistogram) -> PyResult<f64> {
    eval::kld(&truth.inner, &published.inner).map_err(to_py)
}

/// Rasterize one trajectory into grid cells.
#[pyfunction]
fn rasterize(points: Vec<(f64, f64)>, bbox: (f64, f64, f64, f64), resolution: u32) -> PyResult<Vec<(usize, usize)>> {
    let g = grid_spec(bbox, resolution)?;
    let t = RawTrajectory { id: String::new(), points };
    let cells = trajectory::rasterize(&t, &g).map_err(to_py)?;
    Ok(cells.into_iter().map(|c| (c.row, c.col)).collect())
}

/// Build a histogram from trajectories; returns it with the rejected
/// `(id, reason)` pairs.
#[pyfunction]
fn ingest(
    trajectories: Vec<Trajectory>,
    bbox: (f64, f64, f64, f64),
    resolution: u32,
) -> PyResult<(PyHistogram, Vec<(String, String)>)> {
    let g = grid_spec(bbox, resolution)?;
    let result = trajectory::ingest(&trajectories_from(trajectories), &g).map_err(to_py)?;
    Ok((PyHistogram { inner: result.histogram }, result.rejected))
}

#[pyfunction]
#[pyo3(signature = (n, mean_len, bbox=(0.0, 0.0, 1.0, 1.0), resolution=4, seed=0))]
fn gen_uniform(
    n: usize,
    mean_len: usize,
    bbox: (f64, f64, f64, f64),
    resolution: u32,
    seed: u64,
) -> PyResult<Vec<Trajectory>> {
    let g = grid_spec(bbox, resolution)?;
    Ok(trajectories_to(trajectory::gen_uniform(n, mean_len, &g, seed).map_err(to_py)?))
}

#[pyfunction]
#[pyo3(signature = (n, mean_len, hotspot, bbox=(0.0, 0.0, 1.0, 1.0), resolution=4, concentration=1.0, seed=0))]
fn gen_skewed(
    n: usize,
    mean_len: usize,
    hotspot: (f64, f64),
    bbox: (f64, f64, f64, f64),
    resolution: u32,
    concentration: f64,
    seed: u64,
) -> PyResult<Vec<Trajectory>> {
    let g = grid_spec(bbox, resolution)?;
    Ok(trajectories_to(trajectory::gen_skewed(n, mean_len, &g, hotspot, concentration, seed).map_err(to_py)?))
}

/// Run an experiment from its JSON config; returns the per-run CSV.
#[pyfunction]
fn run_experiment(py: Python<'_>, config_json: &str) -> PyResult<String> {
    let config: eval::ExperimentConfig =
        serde_json::from_str(config_json).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let result = py.detach(|| eval::run_experiment(&config)).map_err(to_py)?;
    let mut buf = Vec::new();
    eval::reports_to_csv(&mut buf, &result.reports).map_err(to_py)?;
    Ok(String::from_utf8(buf).expect("csv output is utf-8"))
}

#[pymodule]
fn dqam_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("DqamError", m.py().get_type::<DqamError>())?;
    m.add_class::<PyHistogram>()?;
    m.add_function(wrap_pyfunction!(gen_queries, m)?)?;
    m.add_function(wrap_pyfunction!(load_queries, m)?)?;
    m.add_function(wrap_pyfunction!(partition, m)?)?;
    m.add_function(wrap_pyfunction!(publish, m)?)?;
    m.add_function(wrap_pyfunction!(synthesize, m)?)?;
    m.add_function(wrap_pyfunction!(consistent_inference, m)?)?;
    m.add_function(wrap_pyfunction!(greedy_repair, m)?)?;
    m.add_function(wrap_pyfunction!(avg_l1_error, m)?)?;
    m.add_function(wrap_pyfunction!(kld, m)?)?;
    m.add_function(wrap_pyfunction!(rasterize, m)?)?;
    m.add_function(wrap_pyfunction!(ingest, m)?)?;
    m.add_function(wrap_pyfunction!(gen_uniform, m)?)?;
    m.add_function(wrap_pyfunction!(gen_skewed, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
