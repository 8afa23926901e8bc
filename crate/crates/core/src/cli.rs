//! Command-line front end: argument parsing, the run configuration document
//! and one function per subcommand.
//!
//! Every command writes `resolved_config.toml` into its output directory.
//! Passing that file back with `--config` (and no overriding flags) repeats
//! the run with identical outputs.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::calib::{self, SourceCalibration};
use crate::dataset::TimeSeriesDataset;
use crate::error::{Error, Result};
use crate::evaluation;
use crate::factors::{self, FactorModel, FactorOptions};
use crate::io;
use crate::sbbts::{self, SBBTSConfig};
use crate::stochastic::{sample_heston_dataset, HestonRanges, HestonSampling, RandomSource};

pub const RUN_CONFIG_SCHEMA: u32 = 1;
pub const OUT_DIR_ENV: &str = "SBBTS_OUT_DIR";
pub const RESOLVED_CONFIG: &str = "resolved_config.toml";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Inputs {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub resume: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub real: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub synth: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub synth_sb: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub returns: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub factor_model: Option<PathBuf>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub cluster_checkpoints: Vec<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HestonSection {
    pub ranges: HestonRanges,
    pub sampling: HestonSampling,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenerateSection {
    pub n_paths: usize,
}

impl Default for GenerateSection {
    fn default() -> Self {
        GenerateSection { n_paths: 500 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchSection {
    /// Observation spacing of the benchmarked paths.
    pub dt: f64,
    pub bins: usize,
    pub x_column: String,
    pub v_column: String,
}

impl Default for BenchSection {
    fn default() -> Self {
        BenchSection {
            dt: 1.0 / 252.0,
            bins: 30,
            x_column: "X".into(),
            v_column: "v".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub max_lag: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection { max_lag: 20 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FactorSection {
    pub n_factors: usize,
    pub n_clusters: usize,
    pub standardize: bool,
    pub window_length: usize,
    pub stride: usize,
}

impl Default for FactorSection {
    fn default() -> Self {
        FactorSection {
            n_factors: 16,
            n_clusters: 3,
            standardize: false,
            window_length: 253,
            stride: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    Noise,
    Sbbts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AugmentSection {
    pub baseline: Baseline,
    pub lambda: f64,
    pub copies: usize,
}

impl Default for AugmentSection {
    fn default() -> Self {
        AugmentSection {
            baseline: Baseline::Noise,
            lambda: 0.5,
            copies: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeatureSection {
    /// Row at which features are computed; `None` computes every eligible row.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub row: Option<usize>,
}

impl Default for FeatureSection {
    fn default() -> Self {
        FeatureSection { row: None }
    }
}

/// The run configuration document (TOML).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub inputs: Inputs,
    #[serde(default)]
    pub sbbts: SBBTSConfig,
    #[serde(default)]
    pub heston: HestonSection,
    #[serde(default)]
    pub generate: GenerateSection,
    #[serde(default)]
    pub bench: BenchSection,
    #[serde(default)]
    pub eval: EvalSection,
    #[serde(default)]
    pub factors: FactorSection,
    #[serde(default)]
    pub augment: AugmentSection,
    #[serde(default)]
    pub features: FeatureSection,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            schema_version: RUN_CONFIG_SCHEMA,
            seed: 0,
            out_dir: default_out_dir(),
            inputs: Inputs::default(),
            sbbts: SBBTSConfig::default(),
            heston: HestonSection::default(),
            generate: GenerateSection::default(),
            bench: BenchSection::default(),
            eval: EvalSection::default(),
            factors: FactorSection::default(),
            augment: AugmentSection::default(),
            features: FeatureSection::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("bad run config: {e}")))?;
        if cfg.schema_version != RUN_CONFIG_SCHEMA {
            return Err(Error::Config(format!(
                "run config schema_version {} is not supported (expected {RUN_CONFIG_SCHEMA})",
                cfg.schema_version
            )));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("cannot encode run config: {e}")))
    }
}

#[derive(Debug, Parser)]
#[command(name = "sbbts", version, about = "Bridge-based generative modeling of multi-step time series")]
pub struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for parallel sections; outputs do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output directory (overrides the SBBTS_OUT_DIR environment variable and the config).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a heterogeneous Heston dataset.
    SimulateHeston(SimulateArgs),
    /// Train a drift network on a paths file.
    Train(TrainArgs),
    /// Generate paths from a checkpoint.
    Generate(GenerateArgs),
    /// Calibrate Heston parameters on real and synthetic paths.
    HestonBench(BenchArgs),
    /// Compare synthetic paths with real ones.
    Eval(EvalArgs),
    /// Fit the PCA / k-means / mixture factor model to a returns panel.
    FactorFit(FactorFitArgs),
    /// Emit augmented windows with input/target splits.
    Augment(AugmentArgs),
    /// Compute tabular features from a returns panel.
    Features(FeaturesArgs),
}

#[derive(Debug, Args, Default)]
pub struct SimulateArgs {
    #[arg(long)]
    pub paths: Option<usize>,
    #[arg(long)]
    pub length: Option<usize>,
    #[arg(long)]
    pub dt: Option<f64>,
}

#[derive(Debug, Args, Default)]
pub struct TrainArgs {
    /// Paths CSV.
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub sb_mode: bool,
    #[arg(long)]
    pub beta: Option<f64>,
    /// Epochs per outer iteration.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Outer iterations.
    #[arg(long)]
    pub outer: Option<usize>,
    /// Continue from this checkpoint (its grid must match the data).
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

#[derive(Debug, Args, Default)]
pub struct GenerateArgs {
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub paths: Option<usize>,
}

#[derive(Debug, Args, Default)]
pub struct BenchArgs {
    #[arg(long)]
    pub real: Option<PathBuf>,
    #[arg(long)]
    pub synth: Option<PathBuf>,
    #[arg(long)]
    pub synth_sb: Option<PathBuf>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub bins: Option<usize>,
}

#[derive(Debug, Args, Default)]
pub struct EvalArgs {
    #[arg(long)]
    pub real: Option<PathBuf>,
    #[arg(long)]
    pub synth: Option<PathBuf>,
    #[arg(long)]
    pub max_lag: Option<usize>,
}

#[derive(Debug, Args, Default)]
pub struct FactorFitArgs {
    #[arg(long)]
    pub returns: Option<PathBuf>,
    #[arg(long)]
    pub factors: Option<usize>,
    #[arg(long)]
    pub clusters: Option<usize>,
    #[arg(long)]
    pub standardize: bool,
    #[arg(long)]
    pub window: Option<usize>,
}

#[derive(Debug, Args, Default)]
pub struct AugmentArgs {
    #[arg(long)]
    pub returns: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub baseline: Option<Baseline>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub copies: Option<usize>,
    #[arg(long)]
    pub factor_model: Option<PathBuf>,
    /// One checkpoint per factor cluster, in cluster order.
    #[arg(long = "checkpoint")]
    pub checkpoints: Vec<PathBuf>,
    /// Synthetic windows to generate.
    #[arg(long)]
    pub paths: Option<usize>,
    #[arg(long)]
    pub window: Option<usize>,
}

#[derive(Debug, Args, Default)]
pub struct FeaturesArgs {
    #[arg(long)]
    pub returns: Option<PathBuf>,
    /// Row at which to compute features (default: every row from 251 on).
    #[arg(long)]
    pub row: Option<usize>,
}

/// Loads the config file (or defaults) and applies global flag overrides.
pub fn base_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.out_dir = o.clone();
    } else if let Some(env) = std::env::var_os(OUT_DIR_ENV).filter(|v| !v.is_empty()) {
        cfg.out_dir = PathBuf::from(env);
    }
    Ok(cfg)
}

/// Runs `cli`, on a dedicated thread pool when `--threads` is given.
/// Returns the files written.
pub fn run(cli: &Cli) -> Result<Vec<PathBuf>> {
    let cfg = base_config(cli)?;
    match cli.threads {
        Some(0) => Err(Error::Config("--threads must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("cannot start thread pool: {e}")))?
            .install(|| dispatch(&cli.command, cfg)),
        None => dispatch(&cli.command, cfg),
    }
}

pub fn dispatch(command: &Command, cfg: RunConfig) -> Result<Vec<PathBuf>> {
    match command {
        Command::SimulateHeston(a) => cmd_simulate_heston(cfg, a),
        Command::Train(a) => cmd_train(cfg, a),
        Command::Generate(a) => cmd_generate(cfg, a),
        Command::HestonBench(a) => cmd_heston_bench(cfg, a),
        Command::Eval(a) => cmd_eval(cfg, a),
        Command::FactorFit(a) => cmd_factor_fit(cfg, a),
        Command::Augment(a) => cmd_augment(cfg, a),
        Command::Features(a) => cmd_features(cfg, a),
    }
}

fn require(p: &Option<PathBuf>, flag: &str) -> Result<PathBuf> {
    p.clone()
        .ok_or_else(|| Error::Config(format!("missing input: pass --{flag} or set it in [inputs]")))
}

struct Outputs {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl Outputs {
    fn new(cfg: &RunConfig) -> Result<Self> {
        std::fs::create_dir_all(&cfg.out_dir).map_err(|e| Error::io(&cfg.out_dir, e))?;
        Ok(Outputs {
            dir: cfg.out_dir.clone(),
            written: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let p = self.dir.join(name);
        io::write_file(&p, bytes)?;
        self.written.push(p);
        Ok(())
    }

    fn finish(mut self, cfg: &RunConfig) -> Result<Vec<PathBuf>> {
        self.write(RESOLVED_CONFIG, cfg.to_toml()?.as_bytes())?;
        Ok(self.written)
    }
}

fn json<T: Serialize>(v: &T) -> Result<Vec<u8>> {
    let mut s = serde_json::to_vec_pretty(v).map_err(|e| Error::Schema(format!("cannot encode JSON: {e}")))?;
    s.push(b'\n');
    Ok(s)
}

pub fn cmd_simulate_heston(mut cfg: RunConfig, a: &SimulateArgs) -> Result<Vec<PathBuf>> {
    let s = &mut cfg.heston.sampling;
    if let Some(n) = a.paths {
        s.n_paths = n;
    }
    if let Some(n) = a.length {
        s.length = n;
    }
    if let Some(dt) = a.dt {
        s.dt = dt;
    }
    let (data, truth) = sample_heston_dataset(
        &cfg.heston.ranges,
        &cfg.heston.sampling,
        RandomSource::new(cfg.seed).named("heston"),
    )?;
    let mut out = Outputs::new(&cfg)?;
    out.write("heston_paths.csv", io::paths_to_csv(&data).as_bytes())?;
    out.write("heston_truth.csv", io::truth_to_csv(&truth).as_bytes())?;
    out.finish(&cfg)
}

pub fn cmd_train(mut cfg: RunConfig, a: &TrainArgs) -> Result<Vec<PathBuf>> {
    if a.data.is_some() {
        cfg.inputs.data = a.data.clone();
    }
    if a.resume.is_some() {
        cfg.inputs.resume = a.resume.clone();
    }
    if a.sb_mode {
        cfg.sbbts.sb_mode = true;
    }
    if a.beta.is_some() {
        cfg.sbbts.beta = a.beta;
    }
    if let Some(e) = a.epochs {
        cfg.sbbts.n_epoch = e;
    }
    if let Some(k) = a.outer {
        cfg.sbbts.outer_iterations = k;
    }
    let data = io::read_paths(&require(&cfg.inputs.data, "data")?)?;
    let grid = cfg.sbbts.grid(data.n_dates())?;
    if cfg.sbbts.beta.is_none() && !cfg.sbbts.sb_mode {
        cfg.sbbts.beta = Some(cfg.sbbts.beta_for(&grid));
    }
    let warm = match &cfg.inputs.resume {
        Some(p) => Some(sbbts::load_checkpoint(p)?),
        None => None,
    };
    let outcome = sbbts::train_on_grid(
        &data,
        &grid,
        &cfg.sbbts,
        RandomSource::new(cfg.seed).named("train"),
        warm.as_ref(),
    )?;
    let mut out = Outputs::new(&cfg)?;
    out.write("model.ckpt", &sbbts::checkpoint_to_bytes(&outcome.model)?)?;
    out.write("losses.csv", io::losses_to_csv(&outcome.losses).as_bytes())?;
    out.finish(&cfg)
}

pub fn cmd_generate(mut cfg: RunConfig, a: &GenerateArgs) -> Result<Vec<PathBuf>> {
    if a.checkpoint.is_some() {
        cfg.inputs.checkpoint = a.checkpoint.clone();
    }
    if let Some(n) = a.paths {
        cfg.generate.n_paths = n;
    }
    let model = sbbts::load_checkpoint(&require(&cfg.inputs.checkpoint, "checkpoint")?)?;
    let data = sbbts::generate(
        &model,
        cfg.generate.n_paths,
        RandomSource::new(cfg.seed).named("generate"),
    )?;
    let mut out = Outputs::new(&cfg)?;
    out.write("generated.csv", io::paths_to_csv(&data).as_bytes())?;
    out.finish(&cfg)
}

fn column(data: &TimeSeriesDataset, name: &str, path: &Path) -> Result<usize> {
    data.dim_names().iter().position(|n| n == name).ok_or_else(|| {
        Error::Schema(format!(
            "{}: no column {name:?} (columns: {})",
            path.display(),
            data.dim_names().join(",")
        ))
    })
}

pub fn cmd_heston_bench(mut cfg: RunConfig, a: &BenchArgs) -> Result<Vec<PathBuf>> {
    for (slot, flag) in [
        (&mut cfg.inputs.real, &a.real),
        (&mut cfg.inputs.synth, &a.synth),
        (&mut cfg.inputs.synth_sb, &a.synth_sb),
    ] {
        if flag.is_some() {
            *slot = flag.clone();
        }
    }
    if let Some(dt) = a.dt {
        cfg.bench.dt = dt;
    }
    if let Some(b) = a.bins {
        cfg.bench.bins = b;
    }
    let mut sources: Vec<SourceCalibration> = Vec::new();
    for (name, p) in [
        ("data", Some(require(&cfg.inputs.real, "real")?)),
        ("sbbts", cfg.inputs.synth.clone()),
        ("sb_mode", cfg.inputs.synth_sb.clone()),
    ] {
        let Some(p) = p else { continue };
        let data = io::read_paths(&p)?;
        let x = column(&data, &cfg.bench.x_column, &p)?;
        let v = column(&data, &cfg.bench.v_column, &p)?;
        sources.push(calib::calibrate_dataset(name, &data, cfg.bench.dt, x, v)?);
    }
    let report = calib::build_report(cfg.bench.dt, &sources, cfg.bench.bins)?;
    for c in &report.comparisons {
        if c.underdispersed {
            log::warn!(
                "{}: vol-of-vol dispersion is {:.2}x that of {}",
                c.candidate,
                c.xi_std_ratio,
                c.reference
            );
        }
    }
    let mut out = Outputs::new(&cfg)?;
    out.write("calibration_report.json", &json(&report)?)?;
    out.write("calibration_estimates.csv", calib::estimates_csv(&sources).as_bytes())?;
    out.write("calibration_histograms.csv", calib::histograms_csv(&report).as_bytes())?;
    out.finish(&cfg)
}

pub fn cmd_eval(mut cfg: RunConfig, a: &EvalArgs) -> Result<Vec<PathBuf>> {
    if a.real.is_some() {
        cfg.inputs.real = a.real.clone();
    }
    if a.synth.is_some() {
        cfg.inputs.synth = a.synth.clone();
    }
    if let Some(l) = a.max_lag {
        cfg.eval.max_lag = l;
    }
    let real = io::read_paths(&require(&cfg.inputs.real, "real")?)?;
    let synth = io::read_paths(&require(&cfg.inputs.synth, "synth")?)?;
    if real.dim_names() != synth.dim_names() || real.n_dates() != synth.n_dates() {
        return Err(Error::Schema(format!(
            "real ({} dates; {}) and synthetic ({} dates; {}) files differ in layout",
            real.n_dates(),
            real.dim_names().join(","),
            synth.n_dates(),
            synth.dim_names().join(",")
        )));
    }
    let grid = cfg.sbbts.grid(real.n_dates())?;
    let report = evaluation::compare_datasets(&real, &synth, &grid, cfg.eval.max_lag)?;
    let mut metrics = String::from("metric,value\n");
    for (k, v) in &report.metrics {
        metrics.push_str(&format!("{k},{v}\n"));
    }
    let mut acf = String::from("series,lag,value\n");
    for (k, vals) in &report.acfs {
        for (l, v) in vals.iter().enumerate() {
            acf.push_str(&format!("{k},{l},{v}\n"));
        }
    }
    let mut corr = String::from("source,row,col,value\n");
    for (k, m) in &report.correlations {
        for (i, row) in m.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                corr.push_str(&format!("{k},{i},{j},{v}\n"));
            }
        }
    }
    let mut out = Outputs::new(&cfg)?;
    out.write("eval_report.json", &json(&report)?)?;
    out.write("eval_metrics.csv", metrics.as_bytes())?;
    out.write("eval_acf.csv", acf.as_bytes())?;
    out.write("eval_correlations.csv", corr.as_bytes())?;
    out.finish(&cfg)
}

fn factor_names(idx: &[usize]) -> Vec<String> {
    idx.iter().map(|k| format!("f{k}")).collect()
}

pub fn cmd_factor_fit(mut cfg: RunConfig, a: &FactorFitArgs) -> Result<Vec<PathBuf>> {
    if a.returns.is_some() {
        cfg.inputs.returns = a.returns.clone();
    }
    if let Some(m) = a.factors {
        cfg.factors.n_factors = m;
    }
    if let Some(k) = a.clusters {
        cfg.factors.n_clusters = k;
    }
    if a.standardize {
        cfg.factors.standardize = true;
    }
    if let Some(w) = a.window {
        cfg.factors.window_length = w;
    }
    let (ids, x) = io::read_returns(&require(&cfg.inputs.returns, "returns")?)?;
    let opts = FactorOptions {
        n_factors: cfg.factors.n_factors,
        n_clusters: cfg.factors.n_clusters,
        standardize: cfg.factors.standardize,
    };
    let fit = factors::fit_factor_model(&x, &opts, &RandomSource::new(cfg.seed).named("kmeans"))?;
    let all: Vec<usize> = (0..opts.n_factors).collect();
    let mut out = Outputs::new(&cfg)?;
    out.write("factor_model.json", &json(&fit.model)?)?;
    out.write("factors.csv", io::matrix_to_csv(&factor_names(&all), &fit.factors).as_bytes())?;
    out.write("residuals.csv", io::matrix_to_csv(&ids, &fit.residuals).as_bytes())?;
    for (c, members) in fit.model.cluster_members().iter().enumerate() {
        let cols = DMatrix::from_fn(fit.factors.nrows(), members.len(), |i, j| fit.factors[(i, members[j])]);
        let mut windows = factors::sliding_windows(&cols, cfg.factors.window_length, cfg.factors.stride)?;
        windows = TimeSeriesDataset::new(
            windows.n_paths(),
            windows.n_dates(),
            windows.dim(),
            factor_names(members),
            windows.values().to_vec(),
        )?;
        out.write(&format!("cluster_{c}_windows.csv"), io::paths_to_csv(&windows).as_bytes())?;
    }
    out.finish(&cfg)
}

fn write_split(out: &mut Outputs, names: &[String], windows: &[Vec<f64>], length: usize) -> Result<()> {
    let d = names.len();
    let mut inputs = Vec::with_capacity(windows.len());
    let mut labels = Vec::with_capacity(windows.len());
    for w in windows {
        let (i, l) = factors::split_target(w, d)?;
        inputs.push(i);
        labels.push(l);
    }
    let ds = TimeSeriesDataset::from_paths(names.to_vec(), length - 1, inputs)?;
    out.write("augmented_inputs.csv", io::paths_to_csv(&ds).as_bytes())?;
    out.write("augmented_targets.csv", io::targets_to_csv(names, &labels).as_bytes())?;
    Ok(())
}

pub fn cmd_augment(mut cfg: RunConfig, a: &AugmentArgs) -> Result<Vec<PathBuf>> {
    if a.returns.is_some() {
        cfg.inputs.returns = a.returns.clone();
    }
    if a.factor_model.is_some() {
        cfg.inputs.factor_model = a.factor_model.clone();
    }
    if !a.checkpoints.is_empty() {
        cfg.inputs.cluster_checkpoints = a.checkpoints.clone();
    }
    if let Some(b) = a.baseline {
        cfg.augment.baseline = b;
    }
    if let Some(l) = a.lambda {
        cfg.augment.lambda = l;
    }
    if let Some(c) = a.copies {
        cfg.augment.copies = c;
    }
    if let Some(n) = a.paths {
        cfg.generate.n_paths = n;
    }
    if let Some(w) = a.window {
        cfg.factors.window_length = w;
    }
    let source = RandomSource::new(cfg.seed).named("augment");
    let mut out = Outputs::new(&cfg)?;
    match cfg.augment.baseline {
        Baseline::Noise => {
            let (ids, x) = io::read_returns(&require(&cfg.inputs.returns, "returns")?)?;
            let len = cfg.factors.window_length;
            let windows = factors::sliding_windows(&x, len, cfg.factors.stride)?;
            let mut all = Vec::new();
            for w in 0..windows.n_paths() {
                let copies = factors::noise_augment(
                    windows.path(w),
                    cfg.augment.copies,
                    cfg.augment.lambda,
                    &source.child(w as u64),
                )?;
                all.extend(copies);
            }
            write_split(&mut out, &ids, &all, len)?;
        }
        Baseline::Sbbts => {
            let model_path = require(&cfg.inputs.factor_model, "factor-model")?;
            let model: FactorModel = serde_json::from_slice(&io::read_file(&model_path)?)
                .map_err(|e| Error::Schema(format!("{}: {e}", model_path.display())))?;
            let members = model.cluster_members();
            if cfg.inputs.cluster_checkpoints.len() != members.len() {
                return Err(Error::Config(format!(
                    "factor model has {} clusters but {} checkpoints were given",
                    members.len(),
                    cfg.inputs.cluster_checkpoints.len()
                )));
            }
            let n = cfg.generate.n_paths;
            let m = model.pca.n_components();
            let mut generated = Vec::new();
            for (c, p) in cfg.inputs.cluster_checkpoints.iter().enumerate() {
                let ckpt = sbbts::load_checkpoint(p)?;
                if ckpt.dim() != members[c].len() {
                    return Err(Error::Schema(format!(
                        "{}: model has dimension {}, cluster {c} has {} factors",
                        p.display(),
                        ckpt.dim(),
                        members[c].len()
                    )));
                }
                generated.push(sbbts::generate(&ckpt, n, source.named("cluster").child(c as u64))?);
            }
            let len = generated.first().map_or(0, |g| g.n_dates());
            if generated.iter().any(|g| g.n_dates() != len) {
                return Err(Error::Schema("cluster checkpoints use different window lengths".into()));
            }
            let ids: Vec<String> = (0..model.pca.dim()).map(|j| format!("x{j}")).collect();
            let mut windows = Vec::with_capacity(n);
            for w in 0..n {
                let mut f = DMatrix::zeros(len, m);
                for (c, g) in generated.iter().enumerate() {
                    for (jj, &k) in members[c].iter().enumerate() {
                        for i in 0..len {
                            f[(i, k)] = g.get(w, i, jj);
                        }
                    }
                }
                let r = model.sample_residuals(len, &source.named("residuals").child(w as u64));
                let x = factors::reconstruct(&f, &model, &r)?;
                windows.push((0..len).flat_map(|i| x.row(i).iter().copied().collect::<Vec<_>>()).collect());
            }
            write_split(&mut out, &ids, &windows, len)?;
        }
    }
    out.finish(&cfg)
}

pub fn cmd_features(mut cfg: RunConfig, a: &FeaturesArgs) -> Result<Vec<PathBuf>> {
    if a.returns.is_some() {
        cfg.inputs.returns = a.returns.clone();
    }
    if a.row.is_some() {
        cfg.features.row = a.row;
    }
    let (ids, x) = io::read_returns(&require(&cfg.inputs.returns, "returns")?)?;
    let first = factors::CUM_HORIZONS[factors::CUM_HORIZONS.len() - 1] - 1;
    let rows: Vec<usize> = match cfg.features.row {
        Some(t) => vec![t],
        None => (first..x.nrows()).collect(),
    };
    let mut s = String::from("date_index,instrument,");
    s.push_str(&factors::feature_columns().join(","));
    s.push_str(",degenerate_zscores\n");
    for t in rows {
        let table = factors::engineer_features(&x, t)?;
        for (j, row) in table.rows.iter().enumerate() {
            let flags = table.degenerate.iter().filter(|(i, _)| *i == j).count();
            let vals: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            s.push_str(&format!("{t},{},{},{flags}\n", ids[j], vals.join(",")));
        }
    }
    let mut out = Outputs::new(&cfg)?;
    out.write("features.csv", s.as_bytes())?;
    out.finish(&cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_round_trips_through_toml() {
        let cfg = RunConfig::default();
        let back = RunConfig::from_toml(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn unknown_keys_and_versions_rejected() {
        assert!(matches!(
            RunConfig::from_toml("schema_version = 1\nbogus = 3\n"),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            RunConfig::from_toml("schema_version = 1\n[sbbts]\nlearning_rate = 0.1\n"),
            Err(Error::Config(_))
        ));
        assert!(matches!(RunConfig::from_toml("schema_version = 9\n"), Err(Error::Config(_))));
        assert!(matches!(RunConfig::from_toml("seed = 1\n"), Err(Error::Config(_))));
    }

    #[test]
    fn partial_sections_take_defaults() {
        let cfg = RunConfig::from_toml("schema_version = 1\n[sbbts]\nd_model = 32\nn_head = 4\n").unwrap();
        assert_eq!(cfg.sbbts.d_model, 32);
        assert_eq!(cfg.sbbts.outer_iterations, 5);
        assert_eq!(cfg.factors.n_factors, 16);
        assert_eq!(cfg.augment.lambda, 0.5);
    }
}
