//! The `zfrac` command line.
//!
//! Exit codes: 0 on success, 2 for bad input or validation failures, 1 for
//! internal errors. Output files are written atomically.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::features::{batch_extract, BatchOutput, ExtractConfig, FeatureCache, FeatureTable, Threshold, WindowSchedule};
use crate::fractal::{fd_of_grid_with_series, FractalEstimate};
use crate::imagio::{binarize, downsample_nearest, load_gray_image, load_manifest, pad_to_square_pow2, Split};
use crate::shallownet::{evaluate, train, NetConfig, ShallowNet, Timers};
use crate::simlab::{agreement, layer_sweep, load_dump, Aggregate, Metric, RankOptions, SweepOptions};
use crate::util::atomic_write;

#[derive(Parser, Debug)]
#[command(name = "zfrac", version, about = "Fractal features, representation similarity and a shallow classifier")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Fractal dimension of one image
    Fd(FdArgs),
    /// Extract ZFrac feature tables for every split of a manifest
    Zfrac(ZfracArgs),
    /// Score a feature table against a directory of layer activations
    Similarity(SimilarityArgs),
    /// Train the classifier on a feature table
    Train(TrainArgs),
    /// Evaluate a trained model on a feature table
    Eval(EvalArgs),
    /// Percentage agreement between two prediction files
    Agree(AgreeArgs),
    /// Time extraction across worker counts, then training and inference
    Bench(BenchArgs),
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct ExtractArgs {
    /// Comma-separated window sides in pixels
    #[arg(long, default_value = "2,4,8,16,32")]
    pub schedule: String,
    /// Use every window from 2 to M/2 instead of --schedule
    #[arg(long)]
    pub full_sweep: bool,
    /// otsu or fixed:N
    #[arg(long, default_value = "otsu")]
    pub threshold: String,
    /// Resample every image to N×N first
    #[arg(long)]
    pub downsample: Option<usize>,
    /// Z-score each window level
    #[arg(long)]
    pub normalize_levels: bool,
}

impl ExtractArgs {
    fn config(&self) -> Result<ExtractConfig> {
        Ok(ExtractConfig {
            threshold: self.threshold.parse::<Threshold>()?,
            downsample: self.downsample,
            normalize_levels: self.normalize_levels,
        })
    }

    fn schedule_for(&self, first_image: Option<&Path>, cfg: &ExtractConfig) -> Result<WindowSchedule> {
        if !self.full_sweep {
            return self.schedule.parse();
        }
        let side = match (cfg.downsample, first_image) {
            (Some(d), _) => d.next_power_of_two(),
            (None, Some(p)) => {
                let img = load_gray_image(p)?;
                img.width().max(img.height()).next_power_of_two()
            }
            (None, None) => return Err(Error::InvalidArgument("full sweep needs an image".into())),
        };
        WindowSchedule::full(side)
    }
}

#[derive(Args, Debug, Serialize)]
pub struct FdArgs {
    pub image: PathBuf,
    #[arg(long, default_value = "otsu")]
    pub threshold: String,
    #[arg(long)]
    pub downsample: Option<usize>,
    /// Write the (r, N) series as CSV
    #[arg(long)]
    pub series: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
pub struct ZfracArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[command(flatten)]
    pub extract: ExtractArgs,
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    /// Cache directory (overridden by ZFRAC_CACHE)
    #[arg(long)]
    pub cache: Option<PathBuf>,
    /// Output directory for <split>.zft files
    #[arg(long)]
    pub out: PathBuf,
    /// Also write <split>.csv mirrors
    #[arg(long)]
    pub csv: bool,
}

#[derive(Args, Debug, Serialize)]
pub struct SimilarityArgs {
    /// ZFT1 feature table, one row per probe input
    #[arg(long)]
    pub features: PathBuf,
    /// Directory of ACTM layer files
    #[arg(long)]
    pub activations: PathBuf,
    /// cka-linear, cka-rbf:ALPHA, cca, pearson, spearman, kendall (repeatable)
    #[arg(long = "metric")]
    pub metrics: Vec<String>,
    /// Rank metrics: max or mean over column pairs
    #[arg(long, default_value = "max")]
    pub aggregate: String,
    /// Rank metrics: subsample at most this many activation columns
    #[arg(long)]
    pub max_columns: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct NetArgs {
    #[arg(long, default_value = "100,50")]
    pub hidden: String,
    #[arg(long, default_value_t = 200)]
    pub epochs: usize,
    #[arg(long, default_value_t = 3)]
    pub patience: usize,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.1)]
    pub val_fraction: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl NetArgs {
    fn config(&self) -> Result<NetConfig> {
        let hidden_sizes = parse_list(&self.hidden, "hidden size")?;
        let cfg = NetConfig {
            hidden_sizes,
            max_epochs: self.epochs,
            patience: self.patience,
            batch_size: self.batch_size,
            learning_rate: self.lr,
            seed: self.seed,
            val_fraction: self.val_fraction,
            ..NetConfig::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args, Debug, Serialize)]
pub struct TrainArgs {
    #[arg(long)]
    pub features: PathBuf,
    #[command(flatten)]
    pub net: NetArgs,
    /// Model JSON output
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub features: PathBuf,
    /// Report CSV output
    #[arg(long)]
    pub out: PathBuf,
    /// Per-example predictions CSV (index,prediction)
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    /// Training time to record in the report
    #[arg(long, default_value_t = 0.0)]
    pub train_seconds: f64,
}

#[derive(Args, Debug, Serialize)]
pub struct AgreeArgs {
    pub a: PathBuf,
    pub b: PathBuf,
}

#[derive(Args, Debug, Serialize)]
pub struct BenchArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[command(flatten)]
    pub extract: ExtractArgs,
    /// Comma-separated worker counts
    #[arg(long, default_value = "1,2,4")]
    pub workers: String,
    #[command(flatten)]
    pub net: NetArgs,
    /// Report CSV output (stdout only when absent)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_list(s: &str, what: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(|t| t.trim().parse().map_err(|_| Error::InvalidArgument(format!("bad {what} {t:?}"))))
        .collect()
}

fn echo<T: Serialize>(command: &str, args: &T) -> String {
    let v = serde_json::json!({ "command": command, "version": env!("CARGO_PKG_VERSION"), "args": args });
    serde_json::to_string(&v).expect("config echo serializes")
}

/// Parses `argv` and runs the command, returning the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_input_error() {
                2
            } else {
                1
            }
        }
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Fd(a) => cmd_fd(&a),
        Command::Zfrac(a) => cmd_zfrac(&a),
        Command::Similarity(a) => cmd_similarity(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Agree(a) => cmd_agree(&a),
        Command::Bench(a) => cmd_bench(&a),
    }
}

fn print_estimate(e: &FractalEstimate, threshold: u8) {
    println!("fd {:.6}", e.fd);
    println!("r_squared {:.6}", e.r_squared);
    println!("n_points {}", e.n_points);
    println!("degenerate {}", e.degenerate);
    println!("out_of_range {}", e.out_of_range);
    println!("threshold {threshold}");
}

pub fn cmd_fd(a: &FdArgs) -> Result<()> {
    let mut img = load_gray_image(&a.image)?;
    if let Some(d) = a.downsample {
        img = downsample_nearest(&img, d)?;
    }
    let thr = a.threshold.parse::<Threshold>()?.resolve(&img);
    let grid = pad_to_square_pow2(&binarize(&img, thr));
    let (est, series) = fd_of_grid_with_series(&grid);
    print_estimate(&est, thr);
    if let Some(p) = &a.series {
        let mut csv = String::from("r,n\n");
        for (r, n) in series.points() {
            let _ = writeln!(csv, "{r},{n}");
        }
        atomic_write(p, csv.as_bytes())?;
    }
    Ok(())
}

fn resolve_cache(flag: Option<&Path>) -> Option<FeatureCache> {
    std::env::var_os("ZFRAC_CACHE")
        .filter(|v| !v.is_empty())
        .map(PathBuf::from)
        .or_else(|| flag.map(Path::to_path_buf))
        .map(FeatureCache::new)
}

pub fn cmd_zfrac(a: &ZfracArgs) -> Result<()> {
    let manifest = load_manifest(&a.manifest)?;
    let cfg = a.extract.config()?;
    let schedule = a.extract.schedule_for(manifest.entries().first().map(|e| e.path.as_path()), &cfg)?;
    let cache = resolve_cache(a.cache.as_deref());
    let out = batch_extract(&manifest, &schedule, &cfg, a.workers, cache.as_ref())?;
    for (split, table) in &out.splits {
        table.write(a.out.join(format!("{split}.zft")))?;
        if a.csv {
            atomic_write(&a.out.join(format!("{split}.csv")), table.to_csv().as_bytes())?;
        }
        println!("{split}: {} rows x {} cols", table.rows, table.cols);
    }
    atomic_write(&a.out.join("zfrac.config.json"), echo("zfrac", a).as_bytes())?;
    println!("schedule {schedule}");
    println!("cache hits {} misses {}", out.cache_hits, out.cache_misses);
    println!("digest {}", out.digest());
    Ok(())
}

pub fn cmd_similarity(a: &SimilarityArgs) -> Result<()> {
    let table = FeatureTable::read(&a.features)?;
    let z = table.to_feature_matrix()?;
    let layers = load_dump(&a.activations)?;
    let metrics = if a.metrics.is_empty() {
        vec![Metric::CkaLinear, Metric::Cca]
    } else {
        a.metrics.iter().map(|m| m.parse()).collect::<Result<Vec<Metric>>>()?
    };
    let aggregate = match a.aggregate.as_str() {
        "max" => Aggregate::MaxAbs,
        "mean" => Aggregate::MeanAbs,
        other => return Err(Error::InvalidArgument(format!("aggregate {other:?} is not max or mean"))),
    };
    let opts = SweepOptions { metrics, rank: RankOptions { aggregate, max_y_columns: a.max_columns, seed: a.seed } };
    let report = layer_sweep(&z, &layers, &opts)?;
    let mut csv = report.to_csv();
    let _ = writeln!(csv, "# config {}", echo("similarity", a));
    atomic_write(&a.out, csv.as_bytes())?;
    for s in &report.summary {
        println!(
            "{} argmax {} max {}",
            s.metric,
            s.argmax_name.as_deref().unwrap_or("none"),
            s.max_score.map_or("none".into(), |v| format!("{v:.6}"))
        );
    }
    Ok(())
}

pub fn cmd_train(a: &TrainArgs) -> Result<()> {
    let cfg = a.net.config()?;
    let table = FeatureTable::read(&a.features)?;
    let x = table.to_feature_matrix()?;
    let y = table.class_labels()?;
    let net = train(&x, &y, &cfg)?;
    net.save(&a.out)?;
    let best = &net.log[net.best_epoch.max(1) - 1];
    println!("epochs {} best_epoch {} val_loss {:.6}", net.stopped_epoch, net.best_epoch, best.val_loss);
    println!("train_seconds {:.3}", net.train_seconds);
    Ok(())
}

pub fn cmd_eval(a: &EvalArgs) -> Result<()> {
    let net = ShallowNet::load(&a.model)?;
    let table = FeatureTable::read(&a.features)?;
    let x = table.to_feature_matrix()?;
    let y = table.class_labels()?;
    let report = evaluate(&net, &x, &y, Timers { train_seconds: a.train_seconds })?;
    let mut csv = report.to_csv();
    let _ = writeln!(csv, "# config {}", echo("eval", a));
    atomic_write(&a.out, csv.as_bytes())?;
    if let Some(p) = &a.predictions {
        atomic_write(p, predictions_csv(&report.predictions).as_bytes())?;
    }
    println!("accuracy {:.6}", report.accuracy);
    println!("f1 {:.6}", report.f1);
    Ok(())
}

pub fn predictions_csv(labels: &[usize]) -> String {
    let mut s = String::from("index,prediction\n");
    for (i, l) in labels.iter().enumerate() {
        let _ = writeln!(s, "{i},{l}");
    }
    s
}

/// Reads the `prediction` column (or the last column) of a CSV file.
pub fn read_predictions(path: &Path) -> Result<Vec<usize>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = rdr.headers().map_err(|e| Error::decode(path, e.to_string()))?.clone();
    let col = headers.iter().position(|h| h == "prediction").unwrap_or(headers.len().saturating_sub(1));
    rdr.records()
        .map(|r| {
            let r = r.map_err(|e| Error::decode(path, e.to_string()))?;
            let f = r.get(col).unwrap_or("");
            f.parse().map_err(|_| Error::decode(path, format!("bad prediction {f:?}")))
        })
        .collect()
}

pub fn cmd_agree(a: &AgreeArgs) -> Result<()> {
    let pa = read_predictions(&a.a)?;
    let pb = read_predictions(&a.b)?;
    println!("{}", agreement(&pa, &pb)?);
    Ok(())
}

pub fn cmd_bench(a: &BenchArgs) -> Result<()> {
    let manifest = load_manifest(&a.manifest)?;
    let cfg = a.extract.config()?;
    let schedule = a.extract.schedule_for(manifest.entries().first().map(|e| e.path.as_path()), &cfg)?;
    let workers = parse_list(&a.workers, "worker count")?;
    let net_cfg = a.net.config()?;

    let mut report = format!("# config {}\nstage,workers,seconds,digest\n", echo("bench", a));
    let mut reference: Option<BatchOutput> = None;
    for &w in &workers {
        let t = Instant::now();
        let out = batch_extract(&manifest, &schedule, &cfg, w, None)?;
        let secs = t.elapsed().as_secs_f64();
        let digest = out.digest();
        let _ = writeln!(report, "extract,{w},{secs:.6},{digest}");
        match &reference {
            Some(r) if r.digest() != digest => {
                return Err(Error::Internal(format!("extraction digest differs at {w} workers")));
            }
            Some(_) => {}
            None => reference = Some(out),
        }
    }
    let out = reference.ok_or_else(|| Error::InvalidArgument("no worker counts given".into()))?;
    let train_table = &out.splits[&Split::Train];
    let t = Instant::now();
    let net = train(&train_table.to_feature_matrix()?, &train_table.class_labels()?, &net_cfg)?;
    let train_secs = t.elapsed().as_secs_f64();
    let eval_table = out.splits.get(&Split::Test).unwrap_or(train_table);
    let ev = evaluate(&net, &eval_table.to_feature_matrix()?, &eval_table.class_labels()?, Timers {
        train_seconds: train_secs,
    })?;
    let _ = writeln!(report, "train,,{train_secs:.6},");
    let _ = writeln!(report, "inference_mean,,{:.9},", ev.mean_inference_seconds);
    let _ = writeln!(report, "# accuracy {:.6} f1 {:.6}", ev.accuracy, ev.f1);
    print!("{report}");
    if let Some(p) = &a.out {
        atomic_write(p, report.as_bytes())?;
    }
    Ok(())
}
