use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use tpsfem::boundary::BoundaryKind;
use tpsfem::data::{self, peaks};
use tpsfem::driver::{self, AlphaChoice, DomainSpec, Refinement, RunConfig, StagnationSetting};
use tpsfem::experiment::{self, ExperimentConfig};
use tpsfem::indicators::IndicatorKind;
use tpsfem::rbf::{self, AlphaSpec, BaselineConfig, BaselineMethod, ControlPointPlan, Support};
use tpsfem::report::{self, DataSummary, FinalMetrics, RunReport};
use tpsfem::{DataSet, Error};

const EXIT_FAILURE: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;

#[derive(Parser)]
#[command(name = "tpsfem", version, about = "Finite element thin plate spline smoothing")]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the smoother with uniform or adaptive refinement.
    Fit(FitArgs),
    /// Fit a global TPS or compactly supported RBF for comparison.
    Baseline(BaselineArgs),
    /// Generate peaks data and run the boundary accuracy experiment.
    Peaks(PeaksArgs),
    /// Merge run reports into one CSV table.
    Report(ReportArgs),
}

#[derive(Args)]
struct Input {
    /// CSV file whose first three numeric columns are x1, x2, y.
    #[arg(long, value_name = "FILE", conflicts_with = "peaks")]
    data: Option<PathBuf>,
    /// Use synthetic peaks data generated with this seed.
    #[arg(long, value_name = "SEED")]
    peaks: Option<u64>,
}

impl Input {
    fn load(&self) -> anyhow::Result<(String, DataSet)> {
        match (&self.data, self.peaks) {
            (Some(p), _) => Ok((p.display().to_string(), data::ingest(p)?)),
            (None, Some(seed)) => {
                let raw = peaks::generate(&peaks::PeaksSpec::default(), seed);
                Ok((format!("peaks:{seed}"), DataSet::normalized(&raw)?))
            }
            (None, None) => Err(usage("either --data FILE or --peaks SEED is required")),
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum RefineArg {
    Uniform,
    Adaptive,
}

#[derive(Clone, Copy, ValueEnum)]
enum IndicatorArg {
    Auxiliary,
    Recovery,
}

#[derive(Clone, Copy, ValueEnum)]
enum BoundaryArg {
    Tps,
    Average,
    Constant,
}

#[derive(Clone, Copy, ValueEnum)]
enum StagnationArg {
    Auto,
    Off,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    input: Input,
    /// square | irregular | polygon FILE
    #[arg(long, num_args = 1..=2, value_names = ["KIND", "FILE"], default_values = ["square"])]
    domain: Vec<String>,
    /// Refinement level of the square mesh that irregular domains are cut from.
    #[arg(long)]
    trim_level: Option<usize>,
    #[arg(long, value_enum, default_value = "adaptive")]
    refine: RefineArg,
    #[arg(long, value_enum, default_value = "recovery")]
    indicator: IndicatorArg,
    #[arg(long, value_enum, default_value = "average")]
    boundary: BoundaryArg,
    /// Boundary value for `--boundary constant`, in normalized units.
    #[arg(long)]
    constant: Option<f64>,
    /// `auto` (GCV) or a fixed smoothing parameter.
    #[arg(long, default_value = "auto")]
    alpha: String,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long, value_enum, default_value = "auto")]
    stagnation: StagnationArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Single thread, no timings: bit-identical reports for a given seed.
    #[arg(long)]
    reproducible: bool,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Also write the smoother on an N × N grid over the unit square.
    #[arg(long, value_name = "N")]
    sample_grid: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Tps,
    Buhmann,
    Wendland,
}

#[derive(Args)]
struct BaselineArgs {
    #[arg(value_enum)]
    method: MethodArg,
    #[command(flatten)]
    input: Input,
    /// Support radius covering about K data points.
    #[arg(long, conflicts_with = "rho")]
    cover: Option<usize>,
    /// Support radius in normalized units.
    #[arg(long)]
    rho: Option<f64>,
    /// Spacing of the control point grid.
    #[arg(long, default_value_t = 0.02)]
    grid_h: f64,
    #[arg(long, default_value = "auto")]
    alpha: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    reproducible: bool,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct PeaksArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 10_000)]
    n: usize,
    /// Run the boundary accuracy experiment as well.
    #[arg(long)]
    experiment: bool,
    /// Sample sizes for the experiment.
    #[arg(long, value_delimiter = ',', default_values_t = [100, 200, 300, 400, 500, 600])]
    sizes: Vec<usize>,
    /// Number of seeds for the experiment, starting at `--seed`.
    #[arg(long, default_value_t = 10)]
    seeds: u64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    /// Report files (JSON lines).
    #[arg(required = true)]
    reports: Vec<PathBuf>,
    /// CSV destination; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

/// Marks a failure after which a partial report was written.
#[derive(Debug)]
struct Numerical(Error);

impl std::fmt::Display for Numerical {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "numerical failure: {}", self.0)
    }
}

impl std::error::Error for Numerical {}

fn parse_alpha(s: &str) -> anyhow::Result<Option<f64>> {
    if s == "auto" {
        return Ok(None);
    }
    match s.parse::<f64>() {
        Ok(a) if a.is_finite() && a >= 0.0 => Ok(Some(a)),
        _ => Err(usage(format!("--alpha expects `auto` or a non-negative number, got `{s}`"))),
    }
}

/// Polygon file: one `x y` vertex per line in data coordinates, loops
/// separated by blank lines, outer loop first.
fn read_polygon(path: &Path, data: &DataSet) -> anyhow::Result<Vec<Vec<[f64; 2]>>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut loops = vec![Vec::new()];
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.starts_with('#') {
            continue;
        }
        if line.is_empty() {
            if !loops.last().unwrap().is_empty() {
                loops.push(Vec::new());
            }
            continue;
        }
        let v: Vec<f64> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .map(str::parse)
            .collect::<Result<_, _>>()
            .map_err(|_| Error::Parse {
                line: i + 1,
                message: format!("expected two numbers, got `{line}`"),
            })?;
        if v.len() != 2 {
            return Err(Error::Parse {
                line: i + 1,
                message: format!("expected two numbers, got `{line}`"),
            }
            .into());
        }
        let p = [v[0], v[1]];
        loops
            .last_mut()
            .unwrap()
            .push(data.normalization.as_ref().map_or(p, |n| n.point(p)));
    }
    loops.retain(|l| !l.is_empty());
    Ok(loops)
}

fn configure_threads(threads: Option<usize>) -> anyhow::Result<()> {
    if let Some(n) = threads {
        if n == 0 {
            return Err(usage("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    Ok(())
}

fn fit(args: FitArgs) -> anyhow::Result<()> {
    let (source, data) = args.input.load()?;
    let domain = match (args.domain[0].as_str(), args.domain.get(1)) {
        ("square", None) => DomainSpec::Square,
        ("irregular", None) => DomainSpec::Irregular,
        ("polygon", Some(f)) => DomainSpec::Polygon {
            loops: read_polygon(Path::new(f), &data)?,
        },
        ("polygon", None) => return Err(usage("--domain polygon needs a FILE")),
        (k, _) => return Err(usage(format!("unknown domain `{k}` (square, irregular, polygon FILE)"))),
    };
    let defaults = RunConfig::default();
    let cfg = RunConfig {
        domain,
        trim_level: args.trim_level.unwrap_or(defaults.trim_level),
        refinement: match args.refine {
            RefineArg::Uniform => Refinement::Uniform,
            RefineArg::Adaptive => Refinement::Adaptive,
        },
        indicator: match args.indicator {
            IndicatorArg::Auxiliary => IndicatorKind::Auxiliary,
            IndicatorArg::Recovery => IndicatorKind::Recovery,
        },
        boundary: match args.boundary {
            BoundaryArg::Tps => BoundaryKind::TpsApproximation,
            BoundaryArg::Average => BoundaryKind::NodalAverage,
            BoundaryArg::Constant => BoundaryKind::Constant,
        },
        constant_value: args.constant,
        alpha: parse_alpha(&args.alpha)?.map_or(AlphaChoice::Gcv, AlphaChoice::Fixed),
        max_iters: args.max_iters,
        gamma: args.gamma.unwrap_or(defaults.gamma),
        stagnation: match args.stagnation {
            StagnationArg::Auto => StagnationSetting::Auto,
            StagnationArg::Off => StagnationSetting::Off,
        },
        seed: args.seed,
        reproducible: args.reproducible,
        ..defaults
    };
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;

    let mut rep = RunReport::new("fit", &cfg, cfg.seed)?;
    rep.data = Some(DataSummary::of(&source, &data));
    let mut records = Vec::new();
    let result = driver::run_with(&data, &cfg, |r| {
        log::info!("iteration {}: {} nodes, rmse {:.4e}", r.iteration, r.nodes, r.rmse);
        records.push(r.clone());
    });
    rep.records = records;
    rep.final_metrics = rep.records.last().map(FinalMetrics::from_record);
    let report_path = args.out.join("report.jsonl");
    match result {
        Ok(out) => {
            rep.stop = Some(out.stop);
            rep.write(&report_path)?;
            let mesh = out.smoother.mesh();
            fs::write(args.out.join("mesh.txt"), mesh.to_text())?;
            fs::write(args.out.join("nodes.txt"), report::node_table(&out.smoother))?;
            if let Some(n) = args.sample_grid {
                fs::write(args.out.join("surface.csv"), report::surface_grid(&out.smoother, n))?;
            }
            if let Some(m) = &rep.final_metrics {
                println!(
                    "{} nodes, rmse {:.4e}, max {:.4e}, stop {:?}",
                    m.nodes, m.rmse, m.max, out.stop
                );
            }
            Ok(())
        }
        Err(e) => {
            rep.error = Some(e.to_string());
            rep.write(&report_path)?;
            Err(classify(e))
        }
    }
}

fn classify(e: Error) -> anyhow::Error {
    match e {
        Error::InvalidConfig(m) => usage(m),
        Error::Io(_) | Error::Parse { .. } | Error::Json(_) | Error::DegenerateExtent => e.into(),
        other => Numerical(other).into(),
    }
}

fn baseline(args: BaselineArgs) -> anyhow::Result<()> {
    let (source, data) = args.input.load()?;
    let method = match args.method {
        MethodArg::Tps => BaselineMethod::Tps,
        MethodArg::Buhmann => BaselineMethod::Buhmann,
        MethodArg::Wendland => BaselineMethod::Wendland,
    };
    if args.grid_h <= 0.0 {
        return Err(usage("--grid-h must be positive"));
    }
    let defaults = BaselineConfig::default();
    let cfg = BaselineConfig {
        method,
        grid: ControlPointPlan { spacing: args.grid_h },
        support: match (args.cover, args.rho) {
            (_, Some(r)) if r > 0.0 => Support::Radius(r),
            (_, Some(_)) => return Err(usage("--rho must be positive")),
            (Some(k), None) => Support::Cover(k),
            (None, None) => defaults.support,
        },
        alpha: parse_alpha(&args.alpha)?.map_or(AlphaSpec::Gcv, AlphaSpec::Fixed),
        gcv: tpsfem::gcv::GcvConfig {
            seed: args.seed,
            ..defaults.gcv
        },
        reproducible: args.reproducible,
    };
    fs::create_dir_all(&args.out)?;
    let mut rep = RunReport::new("baseline", &cfg, args.seed)?;
    rep.data = Some(DataSummary::of(&source, &data));
    let path = args.out.join("baseline.jsonl");
    match rbf::run_baseline(&data, &cfg) {
        Ok(b) => {
            println!(
                "{:?}: {} basis functions, nonzero ratio {:.4}, rmse {:.4e}, max {:.4e}",
                b.method, b.basis, b.ratio, b.rmse, b.max
            );
            rep.final_metrics = Some(FinalMetrics::from_baseline(&b));
            rep.baselines.push(b);
            rep.write(&path)?;
            Ok(())
        }
        Err(e) => {
            rep.error = Some(e.to_string());
            rep.write(&path)?;
            Err(classify(e))
        }
    }
}

fn peaks_cmd(args: PeaksArgs) -> anyhow::Result<()> {
    if args.n == 0 {
        return Err(usage("--n must be positive"));
    }
    fs::create_dir_all(&args.out)?;
    let spec = peaks::PeaksSpec {
        n: args.n,
        ..peaks::PeaksSpec::default()
    };
    let raw = peaks::generate(&spec, args.seed);
    let mut csv = String::from("x1,x2,y\n");
    for [x, y, z] in &raw {
        csv.push_str(&format!("{x},{y},{z}\n"));
    }
    fs::write(args.out.join("peaks.csv"), csv)?;
    if !args.experiment {
        return Ok(());
    }
    let cfg = ExperimentConfig {
        spec,
        sizes: args.sizes,
        seeds: (args.seed..args.seed + args.seeds).collect(),
        ..ExperimentConfig::default()
    };
    let rows = experiment::experiment_boundary_accuracy(&cfg).map_err(classify)?;
    fs::write(args.out.join("experiment.csv"), experiment::rows_csv(&rows))?;
    let summary = experiment::summarize(&rows);
    fs::write(
        args.out.join("experiment_summary.json"),
        serde_json::to_string_pretty(&serde_json::json!({
            "schema_version": report::SCHEMA_VERSION,
            "config": cfg,
            "summary": summary,
        }))?,
    )?;
    println!("strategy count rmse_f rmse_dx1 rmse_dx2 rmse_laplacian fill_distance");
    for s in &summary {
        println!(
            "{:?} {} {:.4e} {:.4e} {:.4e} {:.4e} {:.4}",
            s.strategy, s.count, s.rmse_f, s.rmse_dx1, s.rmse_dx2, s.rmse_laplacian, s.fill_distance
        );
    }
    Ok(())
}

fn report_cmd(args: ReportArgs) -> anyhow::Result<()> {
    let mut runs = Vec::new();
    for p in &args.reports {
        let r = RunReport::read(p).with_context(|| format!("reading {}", p.display()))?;
        runs.push((p.display().to_string(), r));
    }
    let csv = report::merge_csv(&runs)?;
    match &args.out {
        Some(p) => fs::write(p, csv)?,
        None => print!("{csv}"),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let reproducible = match &cli.command {
        Command::Fit(a) => a.reproducible,
        Command::Baseline(a) => a.reproducible,
        _ => false,
    };
    let threads = if reproducible { Some(1) } else { cli.threads };
    let result = configure_threads(threads).and_then(|_| match cli.command {
        Command::Fit(a) => fit(a),
        Command::Baseline(a) => baseline(a),
        Command::Peaks(a) => peaks_cmd(a),
        Command::Report(a) => report_cmd(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.is::<Usage>() {
                ExitCode::from(EXIT_USAGE)
            } else if e.is::<Numerical>() {
                ExitCode::from(EXIT_NUMERICAL)
            } else {
                ExitCode::from(EXIT_FAILURE)
            }
        }
    }
}
