use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Arg, ArgMatches, Args, Command, FromArgMatches, Parser, Subcommand};

use pirnn::dataset::{ingest_csv, kfold_split, read_weather_csv, synth_generate, write_csv, write_et_csv, SynthConfig};
use pirnn::fao56::{simulate_season, CropCoefficientCurve, SoilBucket, DEFAULT_ELEVATION_M};
use pirnn::harness::{
    cross_validate, emit_trajectories, report_tables, train, write_log_csv, EvalReport, TrainConfig, CONFIG_KEYS,
};
use pirnn::model::Checkpoint;

#[derive(Parser)]
#[command(name = "pirnn", version, about = "Physics-informed yield-loss modelling")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic pixel-series dataset.
    Synth(SynthArgs),
    /// Run the FAO-56 simulation on a daily weather CSV.
    Simulate(SimulateArgs),
    /// Train one network on a dataset and write a checkpoint.
    Train(TrainArgs),
    /// Grouped K-fold cross-validation.
    Crossval(CrossvalArgs),
    /// Model × modality table from cross-validation reports.
    Report(ReportArgs),
    /// Per-pixel Ky, ETa, ETx and yield-loss trajectories of a checkpoint.
    Trajectories(TrajectoryArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    /// Per-pixel generator truth (drought, ky, taw, target).
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long)]
    fields: Option<usize>,
    #[arg(long)]
    pixels: Option<usize>,
    #[arg(long)]
    season_days: Option<u32>,
    #[arg(long)]
    interval_days: Option<u32>,
    /// Switch off all observation noise.
    #[arg(long)]
    noiseless: bool,
    /// Top every field up to demand so no stress occurs.
    #[arg(long)]
    no_drought: bool,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    weather: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Total available water, mm.
    #[arg(long, default_value_t = 100.0)]
    taw: f64,
    #[arg(long, default_value_t = 0.55)]
    depletion_fraction: f64,
    /// Root-zone depletion at sowing, mm.
    #[arg(long, default_value_t = 0.0)]
    initial_depletion: f64,
    #[arg(long, default_value_t = DEFAULT_ELEVATION_M)]
    elevation: f64,
    /// Multiplier on the spring cereal Kc curve.
    #[arg(long, default_value_t = 1.0)]
    kc_scale: f64,
}

/// Every training config key as an optional `--key value` flag.
#[derive(Clone, Default)]
struct Overrides(Vec<(&'static str, String)>);

impl FromArgMatches for Overrides {
    fn from_arg_matches(m: &ArgMatches) -> Result<Self, clap::Error> {
        Ok(Self(
            CONFIG_KEYS
                .iter()
                .filter_map(|k| m.get_one::<String>(k).map(|v| (*k, v.clone())))
                .collect(),
        ))
    }

    fn update_from_arg_matches(&mut self, m: &ArgMatches) -> Result<(), clap::Error> {
        *self = Self::from_arg_matches(m)?;
        Ok(())
    }
}

impl Args for Overrides {
    fn augment_args(cmd: Command) -> Command {
        CONFIG_KEYS.iter().fold(cmd, |cmd, &k| {
            cmd.arg(
                Arg::new(k)
                    .long(k)
                    .value_name("VALUE")
                    .required(k == "seed")
                    .help_heading("Config overrides"),
            )
        })
    }

    fn augment_args_for_update(cmd: Command) -> Command {
        Self::augment_args(cmd)
    }
}

#[derive(Args)]
struct RunArgs {
    /// Dataset CSV.
    #[arg(long)]
    data: PathBuf,
    /// Flat `key = value` config file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out_dir: PathBuf,
    #[command(flatten)]
    overrides: Overrides,
}

impl RunArgs {
    fn config(&self) -> Result<TrainConfig> {
        let mut cfg = match &self.config {
            Some(p) => TrainConfig::from_file(p).with_context(|| format!("reading {}", p.display()))?,
            None => TrainConfig::default(),
        };
        for (k, v) in &self.overrides.0 {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Hold out this fold of the grouped split for validation logging.
    #[arg(long)]
    holdout_fold: Option<usize>,
}

#[derive(Args)]
struct CrossvalArgs {
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Args)]
struct ReportArgs {
    /// Cross-validation report JSON files.
    #[arg(required = true)]
    reports: Vec<PathBuf>,
    /// Also write the table as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct TrajectoryArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn synth(a: &SynthArgs) -> Result<()> {
    let mut cfg = if a.noiseless { SynthConfig::noiseless() } else { SynthConfig::default() };
    cfg.seed = a.seed;
    cfg.drought_enabled = !a.no_drought;
    if let Some(v) = a.fields {
        cfg.n_fields = v;
    }
    if let Some(v) = a.pixels {
        cfg.pixels_per_field = v;
    }
    if let Some(v) = a.season_days {
        cfg.season_length_days = v;
    }
    if let Some(v) = a.interval_days {
        cfg.observation_interval_days = v;
    }
    let s = synth_generate(&cfg)?;
    write_csv(&s.dataset, create(&a.out)?)?;
    if let Some(path) = &a.truth {
        let mut w = csv::Writer::from_writer(create(path)?);
        w.write_record(["field_id", "pixel_id", "drought", "ky", "taw", "target_yl"])?;
        for t in &s.truth {
            w.write_record([
                t.field_id.clone(),
                t.pixel_id.clone(),
                t.drought.to_string(),
                t.ky.to_string(),
                t.taw.to_string(),
                t.target_yl.to_string(),
            ])?;
        }
        w.flush()?;
    }
    eprintln!("wrote {} pixels, provenance {}", s.dataset.len(), s.dataset.provenance());
    Ok(())
}

fn simulate(a: &SimulateArgs) -> Result<()> {
    let weather = read_weather_csv(File::open(&a.weather).with_context(|| format!("opening {}", a.weather.display()))?)?;
    let curve = CropCoefficientCurve::spring_cereal(weather.len() as f64).scaled(a.kc_scale);
    let mut bucket = SoilBucket::new(a.taw, a.depletion_fraction, a.initial_depletion)?;
    let series = simulate_season(&weather, &curve, &mut bucket, a.elevation)?;
    write_et_csv(&series, create(&a.out)?)?;
    Ok(())
}

fn train_cmd(a: &TrainArgs) -> Result<()> {
    let cfg = a.run.config()?;
    let dataset = ingest_csv(&a.run.data)?;
    let (train_idx, val_idx) = match a.holdout_fold {
        Some(k) => {
            let folds = kfold_split(&dataset, cfg.folds, cfg.seed)?;
            let fold = folds.get(k).with_context(|| format!("holdout fold {k} out of range (folds = {})", cfg.folds))?;
            (fold.train.clone(), fold.validation.clone())
        }
        None => ((0..dataset.len()).collect(), Vec::new()),
    };
    let outcome = train(&cfg, &dataset, &train_idx, &val_idx, cfg.seed)?;
    if let Some(e) = outcome.diverged_at {
        eprintln!("warning: loss became non-finite at epoch {e}; keeping the last finite network");
    }
    fs::create_dir_all(&a.run.out_dir)?;
    let dir = &a.run.out_dir;
    Checkpoint::from_network(&outcome.network, dataset.provenance()).save(dir.join("checkpoint.json"))?;
    write_log_csv(&outcome.log, create(&dir.join("training_log.csv"))?)?;
    fs::write(dir.join("config.txt"), cfg.to_text())?;
    Ok(())
}

fn crossval(a: &CrossvalArgs) -> Result<()> {
    let cfg = a.run.config()?;
    let dataset = ingest_csv(&a.run.data)?;
    let report = cross_validate(&cfg, &dataset)?;
    let dir = &a.run.out_dir;
    fs::create_dir_all(dir)?;
    fs::write(dir.join("metrics.json"), report.to_json()?)?;
    report.write_csv(create(&dir.join("metrics.csv"))?)?;
    report.write_horizons_csv(create(&dir.join("horizons.csv"))?)?;
    let agg = &report.aggregate;
    println!(
        "{} {}: R2 {:.3} ± {:.3}, MAE {:.3}, RMSE {:.3} ({:.1} s)",
        cfg.model.name(),
        cfg.modality.name(),
        agg.r2.mean,
        agg.r2.sd,
        agg.mae.mean,
        agg.rmse.mean,
        report.wall_clock_s
    );
    Ok(())
}

fn report(a: &ReportArgs) -> Result<()> {
    let reports = a
        .reports
        .iter()
        .map(|p| {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            serde_json::from_str::<EvalReport>(&text).with_context(|| format!("parsing {}", p.display()))
        })
        .collect::<Result<Vec<_>>>()?;
    let table = report_tables(&reports)?;
    print!("{}", table.to_text());
    if let Some(path) = &a.csv {
        table.write_csv(create(path)?)?;
    }
    Ok(())
}

fn trajectories(a: &TrajectoryArgs) -> Result<()> {
    let checkpoint = Checkpoint::load(&a.checkpoint)?;
    let dataset = ingest_csv(&a.data)?;
    let rows = emit_trajectories(&checkpoint, &dataset, create(&a.out)?)?;
    eprintln!("wrote {rows} rows");
    Ok(())
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match &cli.command {
        Cmd::Synth(a) => synth(a),
        Cmd::Simulate(a) => simulate(a),
        Cmd::Train(a) => train_cmd(a),
        Cmd::Crossval(a) => crossval(a),
        Cmd::Report(a) => report(a),
        Cmd::Trajectories(a) => trajectories(a),
    }?;
    io::stdout().flush()?;
    Ok(())
}
