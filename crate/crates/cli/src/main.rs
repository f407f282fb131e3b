use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use kpiroot::datagen::{generate_scenario, AnomalyKind, KindWeights, LabeledDataset, Manifest, ScenarioSpec, MANIFEST_FILE};
use kpiroot::detection::DetectionMode;
use kpiroot::evaluation::{build_report, evaluate_incident, IncidentMetrics};
use kpiroot::scoring::SelectionPolicy;
use kpiroot::symbolic::Encoding;
use kpiroot::{localize, KpiError, KpiSeries, LocalizationReport, RunConfig};

const EXIT_FAILURE: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_NO_ANOMALY: u8 = 3;

#[derive(Parser)]
#[command(name = "kpiroot", version, about = "Root-cause localization for alarm KPI anomalies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate labeled synthetic incidents.
    Gen(GenArgs),
    /// Localize the root causes of one incident directory.
    Localize(LocalizeArgs),
    /// Score localization reports against dataset manifests.
    Eval(EvalArgs),
    /// Time the pipeline stages over series lengths and candidate counts.
    Bench(BenchArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Trend,
    Seasonal,
    Spike,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, default_value_t = 50)]
    m: usize,
    #[arg(long, default_value_t = 2880)]
    n: usize,
    #[arg(long)]
    period: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Root-cause count; drawn from 3..=8 with the seed when omitted.
    #[arg(long)]
    roots: Option<usize>,
    #[arg(long, default_value_t = 5)]
    lag_delta: usize,
    #[arg(long, default_value_t = 0.3)]
    noise: f64,
    /// Anomaly kinds to draw from (all by default).
    #[arg(long, value_delimiter = ',')]
    kinds: Vec<Kind>,
    /// Number of incidents; more than one writes `scenario-<seed>`
    /// subdirectories with consecutive seeds.
    #[arg(long, default_value_t = 1)]
    count: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Policy {
    TopK,
    Threshold,
}

#[derive(Clone, Copy, ValueEnum)]
enum EncodingArg {
    Isax,
    Sax,
}

#[derive(Clone, Copy, ValueEnum)]
enum DetectionArg {
    Decomposition,
    TrendOnly,
}

#[derive(Args)]
struct PipelineArgs {
    /// PAA size; round(sqrt(n)) when omitted.
    #[arg(long)]
    w: Option<usize>,
    #[arg(long, default_value_t = 9)]
    alpha: usize,
    #[arg(long, default_value_t = 0.9)]
    lambda: f64,
    #[arg(long, default_value_t = 2.0)]
    gamma: f64,
    /// Lag `l` of the growth ratio, in PAA points.
    #[arg(long, default_value_t = 5)]
    trend_lags: usize,
    /// Autoregressive order `q` of the F test.
    #[arg(long, default_value_t = 3)]
    lag: usize,
    /// Samples per seasonal cycle; read from the manifest when omitted.
    #[arg(long)]
    period: Option<usize>,
    #[arg(long, default_value_t = 7)]
    seasonal_window: usize,
    #[arg(long)]
    trend_window: Option<usize>,
    #[arg(long, default_value_t = 10)]
    top_k: usize,
    #[arg(long, default_value_t = 0.8)]
    theta: f64,
    #[arg(long, value_enum, default_value_t = Policy::Threshold)]
    policy: Policy,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = EncodingArg::Isax)]
    encoding: EncodingArg,
    #[arg(long, value_enum, default_value_t = DetectionArg::Decomposition)]
    detection: DetectionArg,
}

impl PipelineArgs {
    fn config(&self, period: usize) -> RunConfig {
        let mut cfg = RunConfig::new(period);
        cfg.w = self.w;
        cfg.alpha = self.alpha;
        cfg.lambda = self.lambda;
        cfg.gamma = self.gamma;
        cfg.lag_l = self.trend_lags;
        cfg.q = self.lag;
        cfg.seasonal_window = self.seasonal_window;
        cfg.trend_window = self.trend_window;
        cfg.selection = match self.policy {
            Policy::TopK => SelectionPolicy::top_k(self.top_k),
            Policy::Threshold => SelectionPolicy::relative_threshold(self.theta),
        };
        cfg.jobs = self.jobs;
        cfg.seed = self.seed;
        cfg.encoding = match self.encoding {
            EncodingArg::Isax => Encoding::Isax,
            EncodingArg::Sax => Encoding::Sax,
        };
        cfg.detection = match self.detection {
            DetectionArg::Decomposition => DetectionMode::Decomposition,
            DetectionArg::TrendOnly => DetectionMode::TrendOnly,
        };
        cfg
    }
}

#[derive(Args)]
struct LocalizeArgs {
    /// Directory with `alarm.csv` and one CSV per candidate, or a
    /// generated dataset with a manifest.
    dataset: PathBuf,
    #[command(flatten)]
    pipeline: PipelineArgs,
    /// Report path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long, num_args = 1.., required = true)]
    reports: Vec<PathBuf>,
    /// Manifest files or the dataset directories holding them.
    #[arg(long, num_args = 1.., required = true)]
    manifests: Vec<PathBuf>,
    #[arg(long, value_delimiter = ',', default_values_t = vec![1, 3, 5, 10])]
    k: Vec<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Series lengths.
    #[arg(long, value_delimiter = ',', default_values_t = vec![10_000, 40_000])]
    sizes: Vec<usize>,
    /// Candidate counts.
    #[arg(long, value_delimiter = ',', default_values_t = vec![100])]
    m: Vec<usize>,
    #[arg(long, default_value_t = 1)]
    reps: u64,
    #[arg(long, default_value_t = 96)]
    period: usize,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Failed(String),
    NoAnomaly,
}

impl From<KpiError> for Failure {
    fn from(e: KpiError) -> Self {
        match e {
            KpiError::Parameter(_) => Failure::Usage(e.to_string()),
            _ => Failure::Failed(e.to_string()),
        }
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure::Failed(format!("{}: {e}", path.display()))
}

fn emit(text: &str, out: Option<&Path>) -> Result<(), Failure> {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| io_failure(path, e)),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| Failure::Failed(format!("stdout: {e}"))),
    }
}

fn cmd_gen(args: GenArgs) -> Result<(), Failure> {
    let kinds = if args.kinds.is_empty() {
        KindWeights::default()
    } else {
        let mut w = KindWeights {
            trend_shift: 0.0,
            seasonal_deviation: 0.0,
            residual_spike: 0.0,
        };
        for k in &args.kinds {
            match k {
                Kind::Trend => w.trend_shift = 1.0,
                Kind::Seasonal => w.seasonal_deviation = 1.0,
                Kind::Spike => w.residual_spike = 1.0,
            }
        }
        w
    };
    for seed in args.seed..args.seed + args.count {
        let base = ScenarioSpec::benchmark(seed);
        let spec = ScenarioSpec {
            m: args.m,
            n: args.n,
            period: args.period,
            num_root_causes: args.roots.unwrap_or(base.num_root_causes),
            lag_delta: args.lag_delta,
            noise_sigma: args.noise,
            kind_weights: kinds,
            seed,
        };
        let dataset = generate_scenario(&spec)?;
        let dir = if args.count > 1 {
            args.out.join(format!("scenario-{seed:04}"))
        } else {
            args.out.clone()
        };
        dataset.write_dir(&dir)?;
        log::info!("wrote {} ({} root causes)", dir.display(), spec.num_root_causes);
    }
    Ok(())
}

/// A generated dataset, or a plain directory holding `alarm.csv` and the
/// candidate CSVs.
fn load_incident(dir: &Path) -> Result<(String, KpiSeries, Vec<KpiSeries>, Option<usize>), Failure> {
    if dir.join(MANIFEST_FILE).exists() {
        let d = LabeledDataset::read_dir(dir)?;
        return Ok((d.incident_id, d.alarm, d.candidates, Some(d.spec.period)));
    }
    let alarm_path = dir.join("alarm.csv");
    if !alarm_path.exists() {
        return Err(Failure::Failed(format!("{}: no manifest and no alarm.csv", dir.display())));
    }
    let alarm = KpiSeries::read_csv(&alarm_path, "alarm")?;
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| io_failure(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "csv") && p.file_name() != Some("alarm.csv".as_ref()))
        .collect();
    paths.sort();
    let candidates = paths
        .iter()
        .map(|p| KpiSeries::read_csv(p, p.file_stem().unwrap_or_default().to_string_lossy()))
        .collect::<Result<Vec<_>, _>>()?;
    let id = dir.file_name().unwrap_or_default().to_string_lossy().into_owned();
    Ok((id, alarm, candidates, None))
}

fn cmd_localize(args: LocalizeArgs) -> Result<(), Failure> {
    let (id, alarm, candidates, manifest_period) = load_incident(&args.dataset)?;
    let period = args
        .pipeline
        .period
        .or(manifest_period)
        .ok_or_else(|| Failure::Usage("--period is required for datasets without a manifest".into()))?;
    let cfg = args.pipeline.config(period);
    let report = localize(&id, &alarm, &candidates, &cfg)?;
    let text = serde_json::to_string_pretty(&report).map_err(KpiError::from)? + "\n";
    emit(&text, args.out.as_deref())?;
    if report.anomaly_detected {
        Ok(())
    } else {
        Err(Failure::NoAnomaly)
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = fs::read_to_string(path).map_err(|e| io_failure(path, e))?;
    serde_json::from_str(&text).map_err(|e| Failure::Failed(format!("{}: {e}", path.display())))
}

fn cmd_eval(args: EvalArgs) -> Result<(), Failure> {
    let reports: Vec<LocalizationReport> = args.reports.iter().map(|p| read_json(p)).collect::<Result<_, _>>()?;
    let manifests: Vec<Manifest> = args
        .manifests
        .iter()
        .map(|p| if p.is_dir() { read_json(&p.join(MANIFEST_FILE)) } else { read_json(p) })
        .collect::<Result<_, _>>()?;
    let mut rows = Vec::new();
    for report in &reports {
        let manifest = manifests
            .iter()
            .find(|m| m.incident_id == report.incident_id)
            .ok_or_else(|| Failure::Failed(format!("no manifest for incident `{}`", report.incident_id)))?;
        let metrics = evaluate_incident(&report.ranked_ids(), &report.predicted, &manifest.truth.root_causes, &args.k)?;
        rows.push(IncidentMetrics {
            incident_id: report.incident_id.clone(),
            metrics,
        });
    }
    if let Some(m) = manifests.iter().find(|m| !reports.iter().any(|r| r.incident_id == m.incident_id)) {
        return Err(Failure::Failed(format!("no report for incident `{}`", m.incident_id)));
    }
    let text = serde_json::to_string_pretty(&build_report(rows)).map_err(KpiError::from)? + "\n";
    emit(&text, args.out.as_deref())
}

fn cmd_bench(args: BenchArgs) -> Result<(), Failure> {
    let mut csv = String::from("n,m,stage,seconds\n");
    for &n in &args.sizes {
        for &m in &args.m {
            for rep in 0..args.reps {
                let spec = ScenarioSpec {
                    m,
                    n,
                    period: args.period,
                    num_root_causes: 5.min(m - 1),
                    seed: rep,
                    kind_weights: KindWeights::only(AnomalyKind::ResidualSpike),
                    ..ScenarioSpec::default()
                };
                let d = generate_scenario(&spec)?;
                let cfg = RunConfig {
                    jobs: args.jobs,
                    ..RunConfig::new(args.period)
                };
                let t = localize(&d.incident_id, &d.alarm, &d.candidates, &cfg)?.timings;
                for (stage, secs) in [
                    ("detection", t.detection),
                    ("paa", t.paa),
                    ("symbolic", t.symbolic),
                    ("similarity", t.similarity),
                    ("causality", t.causality),
                    ("scoring", t.scoring),
                    ("total", t.total),
                ] {
                    csv.push_str(&format!("{n},{m},{stage},{secs:.6}\n"));
                }
                log::info!("n={n} m={m} rep={rep}: {:.3} s", t.total);
            }
        }
    }
    emit(&csv, args.out.as_deref())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("KPIROOT_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Localize(a) => cmd_localize(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Bench(a) => cmd_bench(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::NoAnomaly) => {
            eprintln!("no anomaly detected on the alarm");
            ExitCode::from(EXIT_NO_ANOMALY)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Failed(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_FAILURE)
        }
    }
}
