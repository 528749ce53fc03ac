use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use dqam::dp::{split_budget, NoiseSource};
use dqam::eval::{
    avg_l1_error, gen_queries, kld, publish, reports_to_csv, run_experiment, summary_to_csv, violation_count,
    ExperimentConfig, Mechanism, QuerySet, RunParams, DEFAULT_QUERY_COUNT,
};
use dqam::grid::SpatialHistogram;
use dqam::partition::partition;
use dqam::pipeline::{publish_dqam, DqamConfig};
use dqam::trajectory::{gen_skewed, gen_uniform, ingest, parse_csv, write_csv, GridSpec};
use serde_json::json;

#[derive(Parser)]
#[command(name = "dqam", version, about = "Private spatial histograms for trajectory range queries")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Rasterize a trajectory CSV into a histogram.
    Ingest(IngestArgs),
    /// Generate synthetic trajectories as CSV.
    GenData(GenDataArgs),
    /// Generate a random rectangle workload.
    GenQueries(GenQueriesArgs),
    /// Publish a private histogram.
    Synthesize(SynthesizeArgs),
    /// Compare a published histogram with the true one.
    Evaluate(EvaluateArgs),
    /// Run a grid of mechanisms, budgets, datasets and seeds.
    Experiment(ExperimentArgs),
    /// Run only the private partitioning and print the regions.
    Partition(PartitionArgs),
}

/// `min_lat,min_lon,max_lat,max_lon`.
#[derive(Clone, Copy, Debug)]
struct BBox([f64; 4]);

impl FromStr for BBox {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>().map_err(|e| format!("bad bbox value '{p}': {e}")))
            .collect::<Result<_, _>>()?;
        match parts[..] {
            [a, b, c, d] => Ok(BBox([a, b, c, d])),
            _ => Err(format!("bbox needs 4 comma-separated numbers, got {}", parts.len())),
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct Point(f64, f64);

impl FromStr for Point {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (a, b) = s.split_once(',').ok_or("expected lat,lon")?;
        let parse = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("bad coordinate '{v}': {e}"));
        Ok(Point(parse(a)?, parse(b)?))
    }
}

fn grid(bbox: BBox, resolution: u32) -> dqam::Result<GridSpec> {
    let [a, b, c, d] = bbox.0;
    GridSpec::new(a, b, c, d, resolution)
}

#[derive(Args)]
struct IngestArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, allow_hyphen_values = true)]
    bbox: BBox,
    #[arg(long)]
    resolution: u32,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct GenDataArgs {
    #[arg(long, value_parser = ["uniform", "skewed"])]
    model: String,
    #[arg(long)]
    n: usize,
    /// Mean trajectory length in cells.
    #[arg(long)]
    len: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "0,0,1,1", allow_hyphen_values = true)]
    bbox: BBox,
    #[arg(long, default_value_t = 4)]
    resolution: u32,
    /// Hotspot `lat,lon` for the skewed model; defaults to the bbox centre.
    #[arg(long, allow_hyphen_values = true)]
    hotspot: Option<Point>,
    #[arg(long, default_value_t = 1.0)]
    concentration: f64,
}

#[derive(Args)]
struct GenQueriesArgs {
    #[arg(long, default_value_t = DEFAULT_QUERY_COUNT)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Grid side is `2^resolution`.
    #[arg(long, conflicts_with = "hist", required_unless_present = "hist")]
    resolution: Option<u32>,
    /// Take the grid shape from a histogram file.
    #[arg(long)]
    hist: Option<PathBuf>,
}

#[derive(Args)]
struct SynthesizeArgs {
    #[arg(long)]
    hist: PathBuf,
    #[arg(long)]
    queries: PathBuf,
    #[arg(long)]
    epsilon: f64,
    #[arg(long, default_value_t = 10)]
    iterations: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Partition split threshold; `4 / eps1^2` when omitted.
    #[arg(long)]
    delta: Option<f64>,
    /// Write the per-iteration trace as JSON lines.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Write the partition as JSON.
    #[arg(long)]
    partition_out: Option<PathBuf>,
    #[arg(long, default_value = "dqam")]
    mechanism: String,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long = "true")]
    true_hist: PathBuf,
    #[arg(long)]
    published: PathBuf,
    #[arg(long)]
    queries: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long)]
    config: PathBuf,
    /// Per-run CSV; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Mean and standard deviation per grid cell.
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Args)]
struct PartitionArgs {
    #[arg(long)]
    hist: PathBuf,
    #[arg(long)]
    epsilon: f64,
    #[arg(long, default_value_t = 10)]
    iterations: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn require_file(path: &Path) -> anyhow::Result<()> {
    if !path.is_file() {
        return Err(dqam::Error::InvalidParameter(format!("input file {} does not exist", path.display())).into());
    }
    Ok(())
}

fn require_parent(path: &Path) -> anyhow::Result<()> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() && !p.is_dir() => {
            Err(dqam::Error::InvalidParameter(format!("output directory {} does not exist", p.display())).into())
        }
        _ => Ok(()),
    }
}

fn require_positive_epsilon(epsilon: f64) -> anyhow::Result<()> {
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(dqam::Error::InvalidParameter(format!("epsilon must be positive, got {epsilon}")).into());
    }
    Ok(())
}

fn read_histogram(path: &Path) -> anyhow::Result<SpatialHistogram> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    SpatialHistogram::from_json(&text).with_context(|| format!("parsing {}", path.display()))
}

fn read_queries(path: &Path) -> anyhow::Result<QuerySet> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    QuerySet::from_json(&text).with_context(|| format!("parsing {}", path.display()))
}

fn write_text(path: &Path, text: &str) -> anyhow::Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn print_config(value: serde_json::Value) {
    println!("config: {value}");
}

fn cmd_ingest(a: IngestArgs) -> anyhow::Result<()> {
    require_file(&a.input)?;
    require_parent(&a.out)?;
    let g = grid(a.bbox, a.resolution)?;
    print_config(
        json!({"command": "ingest", "input": a.input, "bbox": a.bbox.0, "resolution": a.resolution, "out": a.out}),
    );
    let file = File::open(&a.input).with_context(|| format!("opening {}", a.input.display()))?;
    let trajectories = parse_csv(BufReader::new(file))?;
    let result = ingest(&trajectories, &g)?;
    write_text(&a.out, &result.histogram.to_json()?)?;
    println!("n={} rejected={} k_max={}", result.histogram.n(), result.rejected.len(), result.k_max);
    for (id, reason) in &result.rejected {
        eprintln!("rejected {id}: {reason}");
    }
    Ok(())
}

fn cmd_gen_data(a: GenDataArgs) -> anyhow::Result<()> {
    require_parent(&a.out)?;
    let g = grid(a.bbox, a.resolution)?;
    let hotspot =
        a.hotspot.map(|p| (p.0, p.1)).unwrap_or(((g.min_lat + g.max_lat) / 2.0, (g.min_lon + g.max_lon) / 2.0));
    print_config(json!({
        "command": "gen-data", "model": a.model, "n": a.n, "len": a.len, "seed": a.seed, "out": a.out,
        "bbox": a.bbox.0, "resolution": a.resolution, "hotspot": [hotspot.0, hotspot.1], "concentration": a.concentration,
    }));
    let trajectories = match a.model.as_str() {
        "uniform" => gen_uniform(a.n, a.len, &g, a.seed)?,
        _ => gen_skewed(a.n, a.len, &g, hotspot, a.concentration, a.seed)?,
    };
    let file = File::create(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    write_csv(BufWriter::new(file), &trajectories)?;
    println!("trajectories={}", trajectories.len());
    Ok(())
}

fn cmd_gen_queries(a: GenQueriesArgs) -> anyhow::Result<()> {
    require_parent(&a.out)?;
    let (rows, cols) = match (&a.hist, a.resolution) {
        (Some(path), _) => {
            require_file(path)?;
            let h = read_histogram(path)?;
            (h.rows(), h.cols())
        }
        (None, Some(k)) => {
            if !(1..=12).contains(&k) {
                return Err(dqam::Error::InvalidParameter(format!("resolution must be in 1..=12, got {k}")).into());
            }
            (1usize << k, 1usize << k)
        }
        (None, None) => bail!("either --resolution or --hist is required"),
    };
    print_config(
        json!({"command": "gen-queries", "count": a.count, "seed": a.seed, "rows": rows, "cols": cols, "out": a.out}),
    );
    let qs = gen_queries(rows, cols, a.count, a.seed)?;
    write_text(&a.out, &qs.to_json()?)?;
    println!("queries={}", qs.queries.len());
    Ok(())
}

fn cmd_synthesize(a: SynthesizeArgs) -> anyhow::Result<()> {
    require_file(&a.hist)?;
    require_file(&a.queries)?;
    require_parent(&a.out)?;
    require_positive_epsilon(a.epsilon)?;
    for p in a.trace.iter().chain(&a.partition_out) {
        require_parent(p)?;
    }
    let mechanism: Mechanism = a.mechanism.parse()?;
    let h = read_histogram(&a.hist)?;
    let qs = read_queries(&a.queries)?;
    if (qs.rows, qs.cols) != (h.rows(), h.cols()) {
        return Err(dqam::Error::DimensionMismatch(format!(
            "queries are for a {}x{} grid, histogram is {}x{}",
            qs.rows,
            qs.cols,
            h.rows(),
            h.cols()
        ))
        .into());
    }
    print_config(json!({
        "command": "synthesize", "hist": a.hist, "queries": a.queries, "epsilon": a.epsilon,
        "iterations": a.iterations, "seed": a.seed, "delta": a.delta, "mechanism": mechanism.id(), "out": a.out,
    }));
    let published = match mechanism {
        Mechanism::Dqam | Mechanism::DqamGreedy => {
            let mut cfg = DqamConfig::new(a.epsilon, a.iterations, a.seed);
            cfg.delta = a.delta;
            if mechanism == Mechanism::DqamGreedy {
                cfg.repair = dqam::RepairMode::Greedy;
            }
            let run = publish_dqam(&h, &qs.queries, &cfg)?;
            if let Some(path) = &a.trace {
                write_text(path, &run.trace.to_json_lines()?)?;
            }
            if let Some(path) = &a.partition_out {
                write_text(path, &run.partition.to_json()?)?;
            }
            println!("regions={} spent_epsilon={}", run.partition.regions.len(), run.accountant.spent());
            run.histogram
        }
        other => {
            if a.trace.is_some() || a.partition_out.is_some() {
                eprintln!("note: --trace and --partition-out only apply to dqam mechanisms");
            }
            let p = RunParams { epsilon: a.epsilon, iterations: a.iterations, seed: a.seed, delta: a.delta };
            publish(other, &h, &qs.queries, &p)?
        }
    };
    write_text(&a.out, &published.to_json()?)?;
    println!("violations={}", violation_count(&published));
    Ok(())
}

fn cmd_evaluate(a: EvaluateArgs) -> anyhow::Result<()> {
    require_file(&a.true_hist)?;
    require_file(&a.published)?;
    require_file(&a.queries)?;
    require_parent(&a.out)?;
    print_config(
        json!({"command": "evaluate", "true": a.true_hist, "published": a.published, "queries": a.queries, "out": a.out}),
    );
    let truth = read_histogram(&a.true_hist)?;
    let published = read_histogram(&a.published)?;
    let qs = read_queries(&a.queries)?;
    let l1 = avg_l1_error(&truth, &published, &qs.queries)?;
    let kl = kld(&truth, &published)?;
    let violations = violation_count(&published);
    let mut out = BufWriter::new(File::create(&a.out).with_context(|| format!("creating {}", a.out.display()))?);
    writeln!(out, "avg_l1,kld,violations,queries")?;
    writeln!(out, "{l1},{kl},{violations},{}", qs.queries.len())?;
    out.flush()?;
    println!("avg_l1={l1} kld={kl} violations={violations}");
    Ok(())
}

fn cmd_experiment(a: ExperimentArgs) -> anyhow::Result<()> {
    require_file(&a.config)?;
    for p in a.out.iter().chain(&a.summary) {
        require_parent(p)?;
    }
    let text = fs::read_to_string(&a.config).with_context(|| format!("reading {}", a.config.display()))?;
    let config: ExperimentConfig = serde_json::from_str(&text).map_err(dqam::Error::from)?;
    for ds in &config.datasets {
        if let dqam::eval::DatasetSpec::File { histogram, .. } = ds {
            require_file(histogram)?;
        }
    }
    print_config(json!({"command": "experiment", "config": config_value(&config)?}));
    let result = run_experiment(&config)?;
    match &a.out {
        Some(path) => reports_to_csv(
            File::create(path).with_context(|| format!("creating {}", path.display()))?,
            &result.reports,
        )?,
        None => reports_to_csv(std::io::stdout().lock(), &result.reports)?,
    }
    if let Some(path) = &a.summary {
        summary_to_csv(File::create(path).with_context(|| format!("creating {}", path.display()))?, &result.summary)?;
    }
    for r in result.reports.iter().filter(|r| r.error.is_some()) {
        eprintln!(
            "run {} eps={} {} seed={} failed: {}",
            r.mechanism,
            r.epsilon,
            r.dataset,
            r.seed,
            r.error.as_deref().unwrap_or("")
        );
    }
    Ok(())
}

fn config_value(config: &ExperimentConfig) -> anyhow::Result<serde_json::Value> {
    Ok(serde_json::to_value(config).map_err(dqam::Error::from)?)
}

fn cmd_partition(a: PartitionArgs) -> anyhow::Result<()> {
    require_file(&a.hist)?;
    require_positive_epsilon(a.epsilon)?;
    if let Some(p) = &a.out {
        require_parent(p)?;
    }
    let h = read_histogram(&a.hist)?;
    let budget = split_budget(a.epsilon, a.iterations)?;
    print_config(json!({
        "command": "partition", "hist": a.hist, "epsilon": a.epsilon, "eps1": budget.eps1, "eps2": budget.eps2,
        "seed": a.seed, "delta": a.delta, "out": a.out,
    }));
    let ps = partition(&h, &budget, &mut NoiseSource::new(a.seed).derive("partition"), a.delta)?;
    println!("regions={} delta={}", ps.regions.len(), ps.delta);
    println!("row,col,height,width,density");
    for (r, b) in ps.regions.iter().zip(&ps.densities) {
        println!("{},{},{},{},{b}", r.row, r.col, r.height, r.width);
    }
    if let Some(path) = &a.out {
        write_text(path, &ps.to_json()?)?;
    }
    Ok(())
}

fn exit_code(category: &str) -> u8 {
    match category {
        "validation" => 2,
        "data" => 3,
        "format" => 4,
        "numerical" => 5,
        "io" => 6,
        _ => 1,
    }
}

fn report(err: &anyhow::Error) -> ExitCode {
    let category = err
        .chain()
        .find_map(|e| e.downcast_ref::<dqam::Error>().map(|d| d.category()))
        .or_else(|| err.chain().find_map(|e| e.downcast_ref::<std::io::Error>().map(|_| "io")))
        .unwrap_or("internal");
    let message = err.chain().map(|e| e.to_string()).collect::<Vec<_>>().join(": ");
    eprintln!("{}", json!({"error": {"category": category, "message": message}}));
    ExitCode::from(exit_code(category))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Ingest(a) => cmd_ingest(a),
        Command::GenData(a) => cmd_gen_data(a),
        Command::GenQueries(a) => cmd_gen_queries(a),
        Command::Synthesize(a) => cmd_synthesize(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Experiment(a) => cmd_experiment(a),
        Command::Partition(a) => cmd_partition(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => report(&e),
    }
}
