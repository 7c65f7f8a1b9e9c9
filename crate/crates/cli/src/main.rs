use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use log::info;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use viscofit::cluster::{self, ClusterConfig, PostStep};
use viscofit::experiments::{self, Figure, FigureKind, Report, Series, SweepSpec, Table};
use viscofit::optimize::{self, FitConfig, FitResult, RegularizerKind};
use viscofit::synth::{self, NoiseSpec};
use viscofit::{rheology, Error, LoadingProgram, MaterialModel, TimeGrid};

type Result<T> = std::result::Result<T, Error>;

/// Generalized-Maxwell relaxation: simulate, fit, cluster and run studies.
///
/// Settings come from built-in defaults, then `--config <file.json>`, then
/// command line flags.
#[derive(Debug, Parser)]
#[command(name = "viscofit", version)]
struct Cli {
    /// JSON file with settings for the chosen subcommand.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for noise or multi-start generation.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory receiving every output file.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, clap::Args)]
struct ProgramArgs {
    /// Strain rate eta (%/s).
    #[arg(long)]
    rate: Option<f64>,
    /// Plateau strain (%).
    #[arg(long)]
    max_strain: Option<f64>,
    /// Record length T (s).
    #[arg(long)]
    horizon: Option<f64>,
    /// Grid intervals m.
    #[arg(long)]
    intervals: Option<usize>,
}

#[derive(Debug, clap::Args)]
struct FitArgs {
    /// Element budget N.
    #[arg(long)]
    max_elements: Option<usize>,
    #[arg(long, value_enum)]
    regularizer: Option<RegArg>,
    /// Penalty weight.
    #[arg(long)]
    lambda: Option<f64>,
    /// Number of multi-start points.
    #[arg(long)]
    starts: Option<usize>,
    #[arg(long)]
    max_iterations: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum RegArg {
    None,
    TikhonovFull,
    FirstStiffness,
}

impl From<RegArg> for RegularizerKind {
    fn from(r: RegArg) -> Self {
        match r {
            RegArg::None => RegularizerKind::None,
            RegArg::TikhonovFull => RegularizerKind::TikhonovFull,
            RegArg::FirstStiffness => RegularizerKind::FirstStiffness,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum PostArg {
    Merge,
    Refit,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write exact stress data for a model and loading program.
    Simulate {
        /// Model JSON (`base_stiffness`, `elements`); defaults to the reference material.
        #[arg(long)]
        model: Option<PathBuf>,
        #[command(flatten)]
        program: ProgramArgs,
        /// Output stem: writes `<name>.csv` and `<name>.meta.json`.
        #[arg(long, default_value = "data")]
        name: String,
    },
    /// Add Gaussian noise at a relative level to a dataset.
    AddNoise {
        input: PathBuf,
        /// Relative noise level delta.
        #[arg(long)]
        level: Option<f64>,
        #[arg(long, default_value = "noisy")]
        name: String,
    },
    /// Multi-start fit of a dataset; writes `<name>.json`.
    Fit {
        input: PathBuf,
        #[command(flatten)]
        fit: FitArgs,
        #[arg(long, default_value = "fit")]
        name: String,
    },
    /// Decade clustering of a previous fit; writes `<name>.json`.
    Cluster {
        /// The dataset the fit was made on.
        input: PathBuf,
        /// Output of `fit`.
        #[arg(long)]
        fit: PathBuf,
        #[arg(long, value_enum)]
        post_step: Option<PostArg>,
        #[arg(long)]
        drop_threshold: Option<f64>,
        #[arg(long, default_value = "clustered")]
        name: String,
    },
    /// Per-element stress contributions of a model (CSV and SVG).
    Decompose {
        #[arg(long)]
        model: Option<PathBuf>,
        #[command(flatten)]
        program: ProgramArgs,
        #[arg(long, default_value = "decomposition")]
        name: String,
    },
    /// Exact-data recovery: simulate, fit, cluster.
    Recover {
        #[command(flatten)]
        program: ProgramArgs,
        #[command(flatten)]
        fit: FitArgs,
    },
    /// Noise sweep over replicas.
    Sweep {
        #[command(flatten)]
        sweep: SweepArgs,
    },
    /// Noise sweep comparing no penalty, full Tikhonov and first-stiffness penalty.
    CompareReg {
        #[command(flatten)]
        sweep: SweepArgs,
        #[arg(long)]
        lambda: Option<f64>,
        /// Repeat the comparison for lambda = 1e-4 .. 1 (one decade apart),
        /// each into `<out-dir>/lambda_<value>`.
        #[arg(long)]
        lambda_sweep: bool,
    },
    /// Compare loading rates: per-element peaks and fits.
    Rates {
        /// Comma separated strain rates.
        #[arg(long, value_delimiter = ',')]
        rates: Option<Vec<f64>>,
        #[arg(long)]
        replicas: Option<usize>,
        #[arg(long)]
        noise_level: Option<f64>,
    },
    /// Fit shortened records and report conclusive identification times.
    TruncateStudy {
        #[arg(long, value_delimiter = ',')]
        rates: Option<Vec<f64>>,
        /// Comma separated record lengths (s).
        #[arg(long, value_delimiter = ',')]
        cuts: Option<Vec<f64>>,
        #[arg(long)]
        noise_level: Option<f64>,
    },
    /// Re-emit CSV and SVG files from a report JSON and print its summary.
    Report { input: PathBuf },
}

#[derive(Debug, clap::Args)]
struct SweepArgs {
    #[arg(long)]
    replicas: Option<usize>,
    #[arg(long)]
    noise_level: Option<f64>,
    #[arg(long)]
    rate: Option<f64>,
}

/// Settings for `simulate` and `decompose`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
struct SimulateConfig {
    model: MaterialModel,
    rate: f64,
    max_strain: f64,
    horizon: f64,
    intervals: usize,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            model: MaterialModel::reference(),
            rate: 1.0,
            max_strain: 20.0,
            horizon: 100.0,
            intervals: 1000,
        }
    }
}

impl SimulateConfig {
    fn apply(&mut self, a: &ProgramArgs) {
        set(&mut self.rate, a.rate);
        set(&mut self.max_strain, a.max_strain);
        set(&mut self.horizon, a.horizon);
        set(&mut self.intervals, a.intervals);
    }

    fn program(&self) -> Result<LoadingProgram> {
        LoadingProgram::new(self.rate, self.max_strain, self.horizon)
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
struct NoiseConfig {
    level: f64,
    seed: u64,
}

/// Settings for `cluster`; the fit section drives the refit step.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
struct ClusterSettings {
    fit: FitConfig,
    cluster: ClusterConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
struct CompareConfig {
    sweep: SweepSpec,
    lambda: f64,
}

impl Default for CompareConfig {
    fn default() -> Self {
        Self {
            sweep: SweepSpec::default(),
            lambda: 1e-2,
        }
    }
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn apply_fit(cfg: &mut FitConfig, a: &FitArgs, seed: Option<u64>) {
    set(&mut cfg.max_elements, a.max_elements);
    set(&mut cfg.starts, a.starts);
    set(&mut cfg.max_iterations, a.max_iterations);
    set(&mut cfg.seed, seed);
    if let Some(r) = a.regularizer {
        cfg.regularizer.kind = r.into();
        if cfg.regularizer.kind == RegularizerKind::None {
            cfg.regularizer.lambda = 0.0;
        }
    }
    set(&mut cfg.regularizer.lambda, a.lambda);
}

fn apply_sweep(s: &mut SweepSpec, a: &SweepArgs, seed: Option<u64>) -> Result<()> {
    set(&mut s.replicas, a.replicas);
    set(&mut s.noise_level, a.noise_level);
    set(&mut s.base_seed, seed);
    if let Some(rate) = a.rate {
        s.program = LoadingProgram::new(rate, s.program.max_strain(), s.program.horizon())?;
    }
    Ok(())
}

fn load<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.into(),
        source: e,
    })?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn load_model(path: Option<&Path>, fallback: MaterialModel) -> Result<MaterialModel> {
    let Some(path) = path else {
        return Ok(fallback);
    };
    let text = fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.into(),
        source: e,
    })?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.into(),
        msg: e.to_string(),
    })
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("results serialize");
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.into(),
        source: e,
    })
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.into(),
        source: e,
    })
}

fn print_model(label: &str, m: &MaterialModel) {
    println!("{label}: mu = {:.6}", m.base_stiffness());
    for (j, e) in m.elements().iter().enumerate() {
        println!(
            "  element {}: mu = {:.6}, tau = {:.6} s",
            j + 1,
            e.stiffness(),
            e.relaxation_time()
        );
    }
}

fn finish_report(report: &Report, dir: &Path) -> Result<()> {
    let written = experiments::write_report(report, dir)?;
    for w in &report.warnings {
        log::warn!("{w}");
    }
    print_summary(report);
    for p in written {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn print_summary(report: &Report) {
    println!("{} (config {})", report.experiment, report.config_hash);
    for s in &report.summary {
        let v = s
            .value
            .map_or_else(|| "-".to_owned(), |v| format!("{v:.6}"));
        println!(
            "  {:<18} {:<12} {:<24} {v}",
            s.group, s.parameter, s.statistic
        );
    }
}

fn decompose(cfg: &SimulateConfig, name: &str, dir: &Path) -> Result<()> {
    let p = cfg.program()?;
    let g = TimeGrid::uniform(cfg.intervals, p.horizon())?;
    let parts = rheology::stress_decomposition(&cfg.model, &p, &g)?;
    let times = g.times();

    let mut cols = vec!["t".to_owned(), "strain".to_owned(), "spring".to_owned()];
    cols.extend((1..=cfg.model.len()).map(|j| format!("element_{j}")));
    cols.push("total".to_owned());
    let col_refs: Vec<&str> = cols.iter().map(String::as_str).collect();
    let mut table = Table::new(name, &col_refs);
    for (i, &t) in times.iter().enumerate() {
        let mut row = vec![t.into(), p.strain_at(t)?.into()];
        row.extend(parts.iter().map(|c| c[i].into()));
        row.push(parts.iter().map(|c| c[i]).sum::<f64>().into());
        table.push(row);
    }
    let csv = dir.join(format!("{name}.csv"));
    table.write_csv(&csv)?;
    println!("wrote {}", csv.display());

    let fig = Figure {
        name: name.to_owned(),
        kind: FigureKind::Lines,
        title: format!("Stress contributions at eta = {}", p.rate()),
        x_label: "t (s)".into(),
        y_label: "stress (MPa)".into(),
        log_x: false,
        log_y: false,
        series: parts
            .into_iter()
            .enumerate()
            .map(|(j, y)| {
                let label = if j == 0 {
                    "spring".to_owned()
                } else {
                    format!("element {j}")
                };
                Series::new(label, times.clone(), y)
            })
            .collect(),
    };
    if let Some(svg) = experiments::plot::render(&fig) {
        let path = dir.join(format!("{name}.svg"));
        fs::write(&path, svg).map_err(|e| Error::Io {
            path: path.clone(),
            source: e,
        })?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let cfg_path = cli.config.as_deref();
    let dir = cli.out_dir.as_path();
    ensure_dir(dir)?;
    match cli.command {
        Command::Simulate {
            model,
            program,
            name,
        } => {
            let mut cfg: SimulateConfig = load(cfg_path)?;
            cfg.apply(&program);
            cfg.model = load_model(model.as_deref(), cfg.model)?;
            let d = synth::simulate_dataset(&cfg.model, &cfg.program()?, cfg.intervals)?;
            let path = dir.join(format!("{name}.csv"));
            synth::write_dataset(&d, &path)?;
            println!("wrote {} ({} samples)", path.display(), d.len());
        }
        Command::AddNoise { input, level, name } => {
            let mut cfg: NoiseConfig = load(cfg_path)?;
            set(&mut cfg.level, level);
            set(&mut cfg.seed, cli.seed);
            let d = synth::read_dataset(&input)?;
            let noisy = synth::add_noise(
                &d,
                &NoiseSpec {
                    relative_level: cfg.level,
                    seed: cfg.seed,
                },
            )?;
            let path = dir.join(format!("{name}.csv"));
            synth::write_dataset(&noisy, &path)?;
            println!("achieved noise level {:.6}", noisy.meta().noise_level);
            println!("wrote {}", path.display());
        }
        Command::Fit { input, fit, name } => {
            let mut cfg: FitConfig = load(cfg_path)?;
            apply_fit(&mut cfg, &fit, cli.seed);
            let d = synth::read_dataset(&input)?;
            info!("fitting {} samples with N = {}", d.len(), cfg.max_elements);
            let result = optimize::multistart_fit(&d, &cfg)?;
            print_model("fitted", &result.model);
            println!("residual {:.6e}, cost {:.6e}", result.residual, result.cost);
            let path = dir.join(format!("{name}.json"));
            write_json(&result, &path)?;
            println!("wrote {}", path.display());
        }
        Command::Cluster {
            input,
            fit,
            post_step,
            drop_threshold,
            name,
        } => {
            let mut cfg: ClusterSettings = load(cfg_path)?;
            set(&mut cfg.fit.seed, cli.seed);
            if let Some(p) = post_step {
                cfg.cluster.post_step = match p {
                    PostArg::Merge => PostStep::Merge,
                    PostArg::Refit => PostStep::Refit,
                };
            }
            set(&mut cfg.cluster.drop_threshold, drop_threshold);
            let d = synth::read_dataset(&input)?;
            let text = fs::read_to_string(&fit).map_err(|e| Error::Io {
                path: fit.clone(),
                source: e,
            })?;
            let result: FitResult = serde_json::from_str(&text).map_err(|e| Error::Parse {
                path: fit.clone(),
                msg: e.to_string(),
            })?;
            let report = cluster::cluster(&result, &d, &cfg.cluster, &cfg.fit)?;
            for w in &report.warnings {
                log::warn!("{w}");
            }
            print_model("clustered", &report.model);
            println!(
                "residual {:.6e} -> {:.6e}",
                report.residual_before, report.residual_after
            );
            let path = dir.join(format!("{name}.json"));
            write_json(&report, &path)?;
            println!("wrote {}", path.display());
        }
        Command::Decompose {
            model,
            program,
            name,
        } => {
            let mut cfg: SimulateConfig = load(cfg_path)?;
            cfg.apply(&program);
            cfg.model = load_model(model.as_deref(), cfg.model)?;
            decompose(&cfg, &name, dir)?;
        }
        Command::Recover { program, fit } => {
            let mut spec: experiments::RecoverySpec = load(cfg_path)?;
            let p = &spec.program;
            let rate = program.rate.unwrap_or(p.rate());
            let max_strain = program.max_strain.unwrap_or(p.max_strain());
            let horizon = program.horizon.unwrap_or(p.horizon());
            spec.program = LoadingProgram::new(rate, max_strain, horizon)?;
            set(&mut spec.intervals, program.intervals);
            apply_fit(&mut spec.fit, &fit, cli.seed);
            finish_report(&experiments::run_exact_recovery(&spec)?, dir)?;
        }
        Command::Sweep { sweep } => {
            let mut spec: SweepSpec = load(cfg_path)?;
            apply_sweep(&mut spec, &sweep, cli.seed)?;
            finish_report(&experiments::run_noise_sweep(&spec)?, dir)?;
        }
        Command::CompareReg {
            sweep,
            lambda,
            lambda_sweep,
        } => {
            let mut cfg: CompareConfig = load(cfg_path)?;
            apply_sweep(&mut cfg.sweep, &sweep, cli.seed)?;
            set(&mut cfg.lambda, lambda);
            if lambda_sweep {
                for k in -4..=0 {
                    let l = 10f64.powi(k);
                    let sub = dir.join(format!("lambda_{l}"));
                    ensure_dir(&sub)?;
                    finish_report(
                        &experiments::run_regularizer_comparison(&cfg.sweep, l)?,
                        &sub,
                    )?;
                }
            } else {
                finish_report(
                    &experiments::run_regularizer_comparison(&cfg.sweep, cfg.lambda)?,
                    dir,
                )?;
            }
        }
        Command::Rates {
            rates,
            replicas,
            noise_level,
        } => {
            let mut spec: experiments::RateSpec = load(cfg_path)?;
            set(&mut spec.rates, rates);
            set(&mut spec.replicas, replicas);
            set(&mut spec.noise_level, noise_level);
            set(&mut spec.base_seed, cli.seed);
            finish_report(&experiments::run_rate_comparison(&spec)?, dir)?;
        }
        Command::TruncateStudy {
            rates,
            cuts,
            noise_level,
        } => {
            let mut spec: experiments::TruncationSpec = load(cfg_path)?;
            set(&mut spec.rates, rates);
            set(&mut spec.cuts, cuts);
            set(&mut spec.noise_level, noise_level);
            set(&mut spec.seed, cli.seed);
            finish_report(&experiments::run_truncation_study(&spec)?, dir)?;
        }
        Command::Report { input } => {
            let report = experiments::read_report(&input)?;
            finish_report(&report, dir)?;
        }
    }
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Domain(_) | Error::Config(_) => 2,
        Error::FitFailed { .. } => 3,
        Error::Parse { .. } | Error::Io { .. } => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if let Error::FitFailed { diagnostics, .. } = &e {
                for d in diagnostics {
                    eprintln!("  {d}");
                }
            }
            ExitCode::from(exit_code(&e))
        }
    }
}
