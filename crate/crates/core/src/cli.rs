// SPDX-License-Identifier: MIT OR Apache-2.0

//! The `ant` command line.

use std::ffi::OsString;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use crate::ant::{self, ant_score, curve, normalize, CurveConfig, Metric, RankConfig, RankReport};
use crate::dataset::{generate_ar1, generate_sine_mix, load_csv, Dataset, Layout};
use crate::denoiser::{train, DenoiserParams, EmbeddingConfig, TrainConfig, DEFAULT_EMBEDDING_DIM, DEFAULT_HIDDEN};
use crate::diffusion::{forward_step, sample};
use crate::experiments::{
    artifact_stem, de_ablation, generation_trace, proxy_step_classification, robustness_scan, write_artifact,
    write_json, AblationConfig, ProxyConfig, Report,
};
use crate::plot::{curve_chart, line_chart, Line};
use crate::schedule::{candidate_grid, parse_spec, Schedule, ScheduleSpec};
use crate::seed::{self, tag};
use crate::stats::{StatConfig, Statistic};

#[derive(Debug, Parser)]
#[command(name = "ant", version, about = "Score and rank diffusion noise schedules for time series")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Rank a grid of candidate schedules on a dataset.
    Rank(RankArgs),
    /// Score a single schedule.
    Score(ScheduleArgs),
    /// Write the non-stationarity curve of one schedule.
    Curve(CurveArgs),
    /// Per-series statistics of the clean data.
    Stats(StatsArgs),
    /// Write forward-process trajectories.
    Corrupt(CorruptArgs),
    /// Step-classification proxy task.
    Proxy(ProxyArgs),
    /// Train, sample and inspect the toy denoiser.
    #[command(subcommand)]
    Toy(ToyCommand),
    /// Curve robustness across step counts.
    Scan(ScanArgs),
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// CSV dataset.
    #[arg(long, conflicts_with = "gen")]
    pub data: Option<PathBuf>,
    /// CSV layout: wide (one row per channel) or long (id,index,value).
    #[arg(long, default_value = "wide")]
    pub layout: Layout,
    /// Synthetic dataset, e.g. `ar1:phi=0.95,n=32,len=256` or
    /// `sine:periods=24/168,n=16,len=512,noise=0.1`.
    #[arg(long)]
    pub gen: Option<String>,
    /// Keep only the first N observations of each series.
    #[arg(long)]
    pub truncate: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory.
    #[arg(long, env = "ANT_OUT_DIR", default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct CurveOpts {
    #[arg(long = "stat", default_value = "iaat")]
    pub statistic: Statistic,
    #[arg(long, default_value = "auc")]
    pub metric: Metric,
    /// Corrupted trajectories per series.
    #[arg(long, default_value_t = 1)]
    pub draws: usize,
    /// Use |rho| in the mIAAT cross terms.
    #[arg(long)]
    pub miaat_absolute: bool,
    /// Worker threads (default: all cores).
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct RankArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub curve: CurveOpts,
    #[command(flatten)]
    pub common: CommonArgs,
    /// `default`, a `;`-separated list of specs, or `@file` with one spec per line.
    #[arg(long, default_value = "default")]
    pub grid: String,
    #[arg(long)]
    pub max_steps: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ScheduleArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub curve: CurveOpts,
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, default_value = "lin:T=100")]
    pub schedule: String,
}

#[derive(Debug, Args)]
pub struct CurveArgs {
    #[command(flatten)]
    pub inner: ScheduleArgs,
    /// Also write an SVG plot.
    #[arg(long)]
    pub svg: bool,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub common: CommonArgs,
    /// Statistics to compute (repeatable; default all).
    #[arg(long = "stat")]
    pub statistics: Vec<Statistic>,
    #[arg(long)]
    pub miaat_absolute: bool,
}

#[derive(Debug, Args)]
pub struct CorruptArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, default_value = "lin:T=100")]
    pub schedule: String,
    /// Steps to keep, comma separated (default all).
    #[arg(long, value_delimiter = ',')]
    pub steps: Vec<usize>,
}

#[derive(Debug, Args)]
pub struct ProxyArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, default_value = "lin:T=20")]
    pub schedule: String,
    #[arg(long, default_value_t = 32)]
    pub window: usize,
    #[arg(long, default_value_t = 30)]
    pub epochs: usize,
    #[arg(long, default_value_t = 64)]
    pub train_per_class: usize,
    #[arg(long, default_value_t = 32)]
    pub test_per_class: usize,
    #[arg(long, default_value_t = 32)]
    pub batch: usize,
    #[arg(long, default_value_t = 1e-2)]
    pub lr: f64,
}

#[derive(Debug, Clone, Args)]
pub struct TrainOpts {
    #[arg(long, default_value = "lin:T=100")]
    pub schedule: String,
    #[arg(long, default_value_t = 32)]
    pub window: usize,
    #[arg(long, default_value_t = DEFAULT_HIDDEN)]
    pub hidden: usize,
    #[arg(long, default_value_t = DEFAULT_EMBEDDING_DIM)]
    pub embedding_dim: usize,
    /// Train without the step embedding.
    #[arg(long)]
    pub no_embedding: bool,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 2000)]
    pub steps: usize,
    #[arg(long, default_value_t = 32)]
    pub batch: usize,
}

impl TrainOpts {
    fn config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            window: self.window,
            hidden: self.hidden,
            embedding: EmbeddingConfig {
                enabled: !self.no_embedding,
                dim: self.embedding_dim,
            },
            lr: self.lr,
            steps: self.steps,
            batch: self.batch,
            seed,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum ToyCommand {
    /// Train a denoiser; writes parameters and the loss trace.
    Train {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        train: TrainOpts,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Draw samples from a trained denoiser.
    Sample {
        #[arg(long)]
        params: PathBuf,
        #[arg(long, default_value = "lin:T=100")]
        schedule: String,
        #[arg(long, default_value_t = 16)]
        count: usize,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Mean statistic of generated samples at every reverse step.
    Trace {
        #[arg(long)]
        params: PathBuf,
        #[arg(long, default_value = "lin:T=100")]
        schedule: String,
        #[arg(long = "stat", default_value = "iaat")]
        statistic: Statistic,
        #[arg(long, default_value_t = 32)]
        count: usize,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Train with and without the step embedding and compare.
    Ablate {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        train: TrainOpts,
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, default_value_t = 64)]
        samples: usize,
    },
}

#[derive(Debug, Args)]
pub struct ScanArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub curve: CurveOpts,
    #[command(flatten)]
    pub common: CommonArgs,
    /// `;`-separated family templates; their `T` is replaced by each entry of `--steps`.
    #[arg(long, default_value = "lin:T=100;cos:T=100,tau=1.0;sig:T=100,tau=0.5")]
    pub families: String,
    #[arg(long, value_delimiter = ',', default_value = "10,20,50,75,100")]
    pub steps: Vec<usize>,
}

/// Parses `args` and runs the command. Returns the process exit code:
/// 0 on success, 1 on a runtime error, 2 on a usage error.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

pub fn execute(command: Command) -> anyhow::Result<()> {
    match command {
        Command::Rank(a) => cmd_rank(&a),
        Command::Score(a) => cmd_score(&a),
        Command::Curve(a) => cmd_curve(&a),
        Command::Stats(a) => cmd_stats(&a),
        Command::Corrupt(a) => cmd_corrupt(&a),
        Command::Proxy(a) => cmd_proxy(&a),
        Command::Toy(t) => cmd_toy(t),
        Command::Scan(a) => cmd_scan(&a),
    }
}

fn kv_pairs(body: &str) -> anyhow::Result<Vec<(&str, &str)>> {
    body.split(',')
        .filter(|s| !s.is_empty())
        .map(|kv| kv.split_once('=').with_context(|| format!("expected key=value, got `{kv}`")))
        .collect()
}

fn get<T: std::str::FromStr>(pairs: &[(&str, &str)], key: &str, default: T) -> anyhow::Result<T>
where
    T::Err: std::fmt::Display,
{
    match pairs.iter().find(|(k, _)| *k == key) {
        Some((_, v)) => v.parse().map_err(|e| anyhow::anyhow!("bad value for `{key}`: {e}")),
        None => Ok(default),
    }
}

/// Builds a synthetic dataset from a generator spec.
pub fn generate(spec: &str, master_seed: u64) -> anyhow::Result<Dataset> {
    let (kind, body) = spec.split_once(':').unwrap_or((spec, ""));
    let pairs = kv_pairs(body)?;
    for (k, _) in &pairs {
        let known: &[&str] = match kind {
            "ar1" => &["phi", "n", "len", "seed"],
            "sine" => &["periods", "n", "len", "noise", "seed"],
            _ => &[],
        };
        if !known.contains(k) {
            bail!("unknown parameter `{k}` for generator `{kind}`");
        }
    }
    let n = get(&pairs, "n", 32usize)?;
    let len = get(&pairs, "len", 256usize)?;
    let seed = get(&pairs, "seed", master_seed)?;
    let mut ds = match kind {
        "ar1" => generate_ar1(get(&pairs, "phi", 0.95)?, n, len, seed)?,
        "sine" => {
            let periods: Vec<f64> = get(&pairs, "periods", "24".to_string())?
                .split('/')
                .map(|p| p.parse::<f64>().with_context(|| format!("bad period `{p}`")))
                .collect::<anyhow::Result<_>>()?;
            generate_sine_mix(n, len, &periods, get(&pairs, "noise", 0.1)?, seed)?
        }
        other => bail!("unknown generator `{other}` (expected ar1 or sine)"),
    };
    ds.name = spec.to_string();
    Ok(ds)
}

pub fn load_dataset(args: &DataArgs, seed: u64) -> anyhow::Result<Dataset> {
    let ds = match (&args.data, &args.gen) {
        (Some(path), _) => {
            let mut ds = load_csv(path, args.layout).with_context(|| format!("loading {}", path.display()))?;
            ds.name = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "data".into());
            ds
        }
        (None, Some(spec)) => generate(spec, seed)?,
        (None, None) => bail!("either --data or --gen is required"),
    };
    match args.truncate {
        Some(len) => Ok(ds.truncated(len)?),
        None => Ok(ds),
    }
}

/// Resolves `default`, `a;b;c` or `@file` into candidate specs.
pub fn parse_grid(grid: &str) -> anyhow::Result<Vec<ScheduleSpec>> {
    let grid = grid.trim();
    if grid == "default" {
        return Ok(candidate_grid());
    }
    let text;
    let lines: Vec<&str> = if let Some(path) = grid.strip_prefix('@') {
        text = std::fs::read_to_string(path).with_context(|| format!("reading grid file {path}"))?;
        text.lines().collect()
    } else {
        grid.split(';').collect()
    };
    let specs = lines
        .into_iter()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| parse_spec(l).with_context(|| format!("in grid entry `{l}`")))
        .collect::<anyhow::Result<Vec<_>>>()?;
    if specs.is_empty() {
        bail!("the grid is empty");
    }
    Ok(specs)
}

fn curve_config(opts: &CurveOpts, seed: u64) -> CurveConfig {
    CurveConfig {
        statistic: opts.statistic,
        stats: StatConfig {
            miaat_absolute: opts.miaat_absolute,
            ..StatConfig::default()
        },
        draws: opts.draws,
        seed,
        ..CurveConfig::default()
    }
}

fn build_schedule(spec: &str) -> anyhow::Result<(ScheduleSpec, Schedule)> {
    let spec = parse_spec(spec).with_context(|| format!("parsing schedule `{spec}`"))?;
    let schedule = spec.build()?;
    Ok((spec, schedule))
}

fn written(path: &Path) {
    eprintln!("wrote {}", path.display());
}

fn cmd_rank(a: &RankArgs) -> anyhow::Result<()> {
    let seed = a.common.seed;
    let ds = load_dataset(&a.data, seed)?;
    let grid = parse_grid(&a.grid)?;
    let cfg = RankConfig {
        curve: curve_config(&a.curve, seed),
        metric: a.curve.metric,
        max_steps: a.max_steps,
    };
    let ranked = crate::par::with_jobs(a.curve.jobs, || ant::rank(&ds, &grid, &cfg))?;
    let report = RankReport::new(&ds.name, cfg.curve.statistic, cfg.metric, &ranked);
    let stem = artifact_stem("rank", &ds.name, &format!("{}-{}", cfg.curve.statistic, cfg.metric), seed);
    let dir = &a.common.out;
    written(&write_json(dir, &format!("{stem}.json"), &report)?);
    written(&write_artifact(dir, &format!("{stem}.csv"), &report.to_csv())?);
    let best = &ranked[0];
    written(&write_json(dir, &format!("{stem}_winner.json"), &best.spec.build()?.to_json())?);

    let mut out = std::io::stdout().lock();
    writeln!(out, "{:>4}  {:<28} {:>12} {:>10} {:>10} {:>12}", "rank", "schedule", "l_linear", "l_noise", "l_step", "score")?;
    for (i, r) in ranked.iter().take(5).enumerate() {
        writeln!(
            out,
            "{:>4}  {:<28} {:>12.6} {:>10.6} {:>10.6} {:>12.6}",
            i + 1,
            r.spec.label(),
            r.score.lambda_linear,
            r.score.lambda_noise,
            r.score.lambda_step,
            r.score.score
        )?;
    }
    Ok(())
}

fn cmd_score(a: &ScheduleArgs) -> anyhow::Result<()> {
    let seed = a.common.seed;
    let ds = load_dataset(&a.data, seed)?;
    let (spec, schedule) = build_schedule(&a.schedule)?;
    let cfg = curve_config(&a.curve, seed);
    let c = crate::par::with_jobs(a.curve.jobs, || curve(&ds, &schedule, &cfg))?;
    let score = ant_score(&c, a.curve.metric)?;
    let report = Report {
        experiment: "score".into(),
        dataset: ds.name.clone(),
        spec: spec.to_string(),
        seed,
        config: serde_json::json!({"statistic": cfg.statistic, "draws": cfg.draws}),
        results: score,
    };
    let stem = artifact_stem("score", &ds.name, &spec.to_string(), seed);
    written(&write_json(&a.common.out, &format!("{stem}.json"), &report)?);
    println!(
        "{}: lambda_linear={:.6} lambda_noise={:.6} lambda_step={:.6} score={:.6}",
        spec.label(),
        score.lambda_linear,
        score.lambda_noise,
        score.lambda_step,
        score.score
    );
    Ok(())
}

fn cmd_curve(a: &CurveArgs) -> anyhow::Result<()> {
    let a_in = &a.inner;
    let seed = a_in.common.seed;
    let ds = load_dataset(&a_in.data, seed)?;
    let (spec, schedule) = build_schedule(&a_in.schedule)?;
    let cfg = curve_config(&a_in.curve, seed);
    let c = crate::par::with_jobs(a_in.curve.jobs, || curve(&ds, &schedule, &cfg))?;
    let normalized = normalize(&c.values)?.values;
    let mut csv = String::from("t,raw,normalized\n");
    for (i, (r, n)) in c.values.iter().zip(&normalized).enumerate() {
        csv.push_str(&format!("{},{r},{n}\n", i + 1));
    }
    let stem = artifact_stem("curve", &ds.name, &format!("{spec}-{}", cfg.statistic), seed);
    written(&write_artifact(&a_in.common.out, &format!("{stem}.csv"), &csv)?);
    if a.svg {
        let title = format!("{} {} on {}", spec.label(), cfg.statistic, ds.name);
        written(&write_artifact(&a_in.common.out, &format!("{stem}.svg"), &curve_chart(&title, &normalized))?);
    }
    Ok(())
}

fn cmd_stats(a: &StatsArgs) -> anyhow::Result<()> {
    let seed = a.common.seed;
    let ds = load_dataset(&a.data, seed)?;
    let stats = if a.statistics.is_empty() {
        Statistic::ALL.to_vec()
    } else {
        a.statistics.clone()
    };
    let cfg = StatConfig {
        miaat_absolute: a.miaat_absolute,
        ..StatConfig::default()
    };
    let mut csv = String::from("id,stat,value\n");
    for s in ds.series() {
        for &stat in &stats {
            csv.push_str(&format!("{},{},{}\n", s.id, stat, cfg.evaluate(stat, s).value));
        }
    }
    let stem = artifact_stem("stats", &ds.name, "clean", seed);
    written(&write_artifact(&a.common.out, &format!("{stem}.csv"), &csv)?);
    Ok(())
}

fn cmd_corrupt(a: &CorruptArgs) -> anyhow::Result<()> {
    let seed = a.common.seed;
    let ds = load_dataset(&a.data, seed)?.mean_scaled()?;
    let (spec, schedule) = build_schedule(&a.schedule)?;
    let n_steps = schedule.steps();
    if let Some(bad) = a.steps.iter().find(|&&t| t == 0 || t > n_steps) {
        bail!("step {bad} is outside 1..={n_steps}");
    }
    let keep = |t: usize| a.steps.is_empty() || a.steps.contains(&t);
    let mut csv = String::from("series_id,t,coord_index,value\n");
    for (i, s) in ds.series().iter().enumerate() {
        // Same substream as the first draw of a curve.
        let mut rng = seed::stream(seed, &[tag::CORRUPT, i as u64, 0]);
        let mut x = s.values().to_vec();
        for t in 1..=n_steps {
            x = forward_step(&x, t, &schedule, &mut rng)?;
            if keep(t) {
                for (j, v) in x.iter().enumerate() {
                    csv.push_str(&format!("{},{t},{j},{v}\n", s.id));
                }
            }
        }
    }
    let stem = artifact_stem("corrupt", &ds.name, &spec.to_string(), seed);
    written(&write_artifact(&a.common.out, &format!("{stem}.csv"), &csv)?);
    Ok(())
}

fn cmd_proxy(a: &ProxyArgs) -> anyhow::Result<()> {
    let seed = a.common.seed;
    let ds = load_dataset(&a.data, seed)?;
    let (spec, schedule) = build_schedule(&a.schedule)?;
    let cfg = ProxyConfig {
        window: a.window,
        train_per_class: a.train_per_class,
        test_per_class: a.test_per_class,
        epochs: a.epochs,
        batch: a.batch,
        lr: a.lr,
        seed,
    };
    let outcome = proxy_step_classification(&ds, &schedule, &cfg)?;
    let stem = artifact_stem("proxy", &ds.name, &spec.to_string(), seed);
    let dir = &a.common.out;
    let report = Report {
        experiment: "proxy".into(),
        dataset: ds.name.clone(),
        spec: spec.to_string(),
        seed,
        config: &cfg,
        results: serde_json::json!({
            "accuracy": outcome.confusion.accuracy,
            "confusion": outcome.confusion.counts,
            "epoch_losses": outcome.losses,
        }),
    };
    written(&write_json(dir, &format!("{stem}.json"), &report)?);
    let mut confusion = String::from("true_t,predicted_t,count\n");
    for (i, row) in outcome.confusion.counts.iter().enumerate() {
        for (j, c) in row.iter().enumerate() {
            confusion.push_str(&format!("{},{},{c}\n", i + 1, j + 1));
        }
    }
    written(&write_artifact(dir, &format!("{stem}_confusion.csv"), &confusion)?);
    let mut features = String::from("example,t,channel,position,value\n");
    for f in &outcome.features {
        for (p, v) in f.values.iter().enumerate() {
            features.push_str(&format!("{},{},{},{p},{v}\n", f.example, f.t, f.channel));
        }
    }
    written(&write_artifact(dir, &format!("{stem}_features.csv"), &features)?);
    println!("{}: held-out accuracy {:.4}", spec.label(), outcome.confusion.accuracy);
    Ok(())
}

fn read_params(path: &Path) -> anyhow::Result<DenoiserParams> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn cmd_toy(cmd: ToyCommand) -> anyhow::Result<()> {
    match cmd {
        ToyCommand::Train { data, train: opts, common } => {
            let ds = load_dataset(&data, common.seed)?;
            let (spec, schedule) = build_schedule(&opts.schedule)?;
            let trained = train(&ds, &schedule, &opts.config(common.seed))?;
            let stem = artifact_stem("toy-train", &ds.name, &spec.to_string(), common.seed);
            written(&write_json(&common.out, &format!("{stem}_params.json"), &trained.params)?);
            let mut csv = String::from("iteration,loss\n");
            for (i, l) in trained.losses.iter().enumerate() {
                csv.push_str(&format!("{i},{l}\n"));
            }
            written(&write_artifact(&common.out, &format!("{stem}_loss.csv"), &csv)?);
            println!("final smoothed loss {:.6}", trained.smoothed_final_loss());
        }
        ToyCommand::Sample { params, schedule, count, common } => {
            let model = read_params(&params)?;
            let (spec, schedule) = build_schedule(&schedule)?;
            let mut rng = seed::stream(common.seed, &[tag::SAMPLE]);
            let mut csv = String::from("sample,index,value\n");
            for i in 0..count {
                let x = sample(&model, &schedule, model.window, &mut rng, None)?;
                for (j, v) in x.iter().enumerate() {
                    csv.push_str(&format!("{i},{j},{v}\n"));
                }
            }
            let stem = artifact_stem("toy-sample", "model", &spec.to_string(), common.seed);
            written(&write_artifact(&common.out, &format!("{stem}.csv"), &csv)?);
        }
        ToyCommand::Trace { params, schedule, statistic, count, common } => {
            let model = read_params(&params)?;
            let (spec, schedule) = build_schedule(&schedule)?;
            let tr = generation_trace(&model, &schedule, statistic, &StatConfig::default(), model.window, count, common.seed)?;
            let stem = artifact_stem("toy-trace", "model", &format!("{spec}-{statistic}"), common.seed);
            written(&write_artifact(&common.out, &format!("{stem}.csv"), &tr.to_csv())?);
            let points = tr.steps.iter().zip(&tr.values).map(|(t, v)| (*t as f64, *v)).collect();
            let svg = line_chart(
                &format!("Generation under {}", spec.label()),
                "step t",
                statistic.name(),
                &[Line::new(statistic.name(), points)],
            );
            written(&write_artifact(&common.out, &format!("{stem}.svg"), &svg)?);
        }
        ToyCommand::Ablate { data, train: opts, common, samples } => {
            let ds = load_dataset(&data, common.seed)?;
            let (spec, schedule) = build_schedule(&opts.schedule)?;
            let cfg = AblationConfig {
                train: opts.config(common.seed),
                samples,
            };
            let result = de_ablation(&ds, &schedule, &cfg)?;
            let report = Report {
                experiment: "de-ablation".into(),
                dataset: ds.name.clone(),
                spec: spec.to_string(),
                seed: common.seed,
                config: &cfg,
                results: &result,
            };
            let stem = artifact_stem("ablate", &ds.name, &spec.to_string(), common.seed);
            written(&write_json(&common.out, &format!("{stem}.json"), &report)?);
            println!(
                "loss with embedding {:.6}, without {:.6}",
                result.with_embedding.final_loss, result.without_embedding.final_loss
            );
        }
    }
    Ok(())
}

fn cmd_scan(a: &ScanArgs) -> anyhow::Result<()> {
    let seed = a.common.seed;
    let ds = load_dataset(&a.data, seed)?;
    let templates = parse_grid(&a.families)?;
    let cfg = curve_config(&a.curve, seed);
    let report = crate::par::with_jobs(a.curve.jobs, || robustness_scan(&ds, &templates, &a.steps, &cfg, a.curve.metric))?;
    let stem = artifact_stem("scan", &ds.name, &cfg.statistic.to_string(), seed);
    let dir = &a.common.out;
    written(&write_json(dir, &format!("{stem}.json"), &report)?);
    written(&write_artifact(dir, &format!("{stem}_curves.csv"), &report.curves_csv())?);
    written(&write_artifact(dir, &format!("{stem}_summary.csv"), &report.summary_csv())?);
    for (k, fam) in report.families.iter().enumerate() {
        let lines: Vec<Line> = fam
            .entries
            .iter()
            .map(|e| {
                let pts = e
                    .normalized
                    .iter()
                    .enumerate()
                    .map(|(i, v)| (if e.steps == 1 { 0.0 } else { i as f64 / (e.steps - 1) as f64 }, *v))
                    .collect();
                Line::new(format!("T={}", e.steps), pts)
            })
            .collect();
        let svg = line_chart(&format!("{} across T", fam.template), "progress", "normalized statistic", &lines);
        written(&write_artifact(dir, &format!("{stem}_family{k}.svg"), &svg)?);
        println!(
            "{:<24} dispersion {:.6}  posterior-variance spread {:.6}",
            fam.template, fam.dispersion, fam.posterior_variance_spread
        );
    }
    Ok(())
}
