use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::report::{Cell, Figure, FigureKind, Report, Series, Table};
use super::stats::{box_stats, spearman};
use crate::cluster::{self, ClusterConfig, ClusterReport, PostStep};
use crate::error::{Error, Result};
use crate::optimize::{self, FitConfig, FitResult, Regularizer};
use crate::rheology::{self, LoadingProgram, MaterialModel, MaxwellElement, TimeGrid};
use crate::synth::{self, NoiseSpec, StressDataset};

/// Points used for smooth curves in figures.
const CURVE_POINTS: usize = 400;

/// A named fit + cluster configuration compared within a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variant {
    pub name: String,
    #[serde(default)]
    pub fit: FitConfig,
    #[serde(default = "refit_cluster")]
    pub cluster: ClusterConfig,
}

fn refit_cluster() -> ClusterConfig {
    ClusterConfig {
        post_step: PostStep::Refit,
        ..ClusterConfig::default()
    }
}

impl Variant {
    pub fn new(name: &str, regularizer: Regularizer) -> Self {
        Self {
            name: name.to_owned(),
            fit: FitConfig {
                regularizer,
                ..FitConfig::default()
            },
            cluster: refit_cluster(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepSpec {
    pub replicas: usize,
    /// Replica `k` draws its noise with seed `base_seed + k`.
    pub base_seed: u64,
    pub noise_level: f64,
    pub program: LoadingProgram,
    /// Grid intervals `m` (the dataset has `m + 1` samples).
    pub intervals: usize,
    pub truth: MaterialModel,
    pub variants: Vec<Variant>,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            replicas: 100,
            base_seed: 1000,
            noise_level: 0.01,
            program: LoadingProgram::new(10.0, 20.0, 100.0).expect("valid default program"),
            intervals: 1000,
            truth: MaterialModel::reference(),
            variants: vec![Variant::new("none", Regularizer::none())],
        }
    }
}

fn check_noise(level: f64) -> Result<()> {
    if !(level.is_finite() && level >= 0.0) {
        return Err(Error::config(format!(
            "noise level must be non-negative, got {level}"
        )));
    }
    Ok(())
}

fn check_fit(fit: &FitConfig, cl: &ClusterConfig) -> Result<()> {
    fit.validate()?;
    cl.validate()
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.replicas < 1 {
            return Err(Error::config("a sweep needs at least one replica"));
        }
        if self.intervals < 1 {
            return Err(Error::config("intervals must be at least 1"));
        }
        check_noise(self.noise_level)?;
        if self.variants.is_empty() {
            return Err(Error::config("a sweep needs at least one variant"));
        }
        for (i, v) in self.variants.iter().enumerate() {
            if self.variants[..i].iter().any(|w| w.name == v.name) {
                return Err(Error::config(format!("duplicate variant name {}", v.name)));
            }
            check_fit(&v.fit, &v.cluster)?;
        }
        self.base_seed
            .checked_add(self.replicas as u64 - 1)
            .ok_or_else(|| Error::config("replica seeds overflow"))?;
        Ok(())
    }

    pub fn seed(&self, replica: usize) -> u64 {
        self.base_seed + replica as u64
    }
}

/// Column names `mu, mu_1, tau_1, ..., mu_k, tau_k` for a `k`-element truth.
pub fn parameter_columns(k: usize) -> Vec<String> {
    let mut cols = vec!["mu".to_owned()];
    for j in 1..=k {
        cols.push(format!("mu_{j}"));
        cols.push(format!("tau_{j}"));
    }
    cols
}

/// Matches the elements of `model` to the `truth_taus.len()` slots of a
/// reference model: the first slot takes the smallest relaxation time, the
/// last slot the largest, interior slots the element nearest in `ln tau`.
pub fn align_slots(model: &MaterialModel, truth_taus: &[f64]) -> Vec<Option<MaxwellElement>> {
    let k = truth_taus.len();
    let e = model.elements();
    if e.is_empty() || k == 0 {
        return vec![None; k];
    }
    let interior: &[MaxwellElement] = if e.len() >= 3 { &e[1..e.len() - 1] } else { e };
    (0..k)
        .map(|j| {
            if j == 0 {
                e.first().copied()
            } else if j == k - 1 {
                e.last().copied()
            } else {
                let target = truth_taus[j].ln();
                interior
                    .iter()
                    .min_by(|a, b| {
                        let da = (a.relaxation_time().ln() - target).abs();
                        let db = (b.relaxation_time().ln() - target).abs();
                        da.total_cmp(&db)
                    })
                    .copied()
            }
        })
        .collect()
}

fn truth_taus(truth: &MaterialModel) -> Vec<f64> {
    truth
        .elements()
        .iter()
        .map(|e| e.relaxation_time())
        .collect()
}

fn parameter_cells(model: Option<&MaterialModel>, truth: &MaterialModel) -> Vec<Cell> {
    let k = truth.len();
    let Some(model) = model else {
        return vec![Cell::Empty; 1 + 2 * k];
    };
    let mut cells = vec![Cell::from(model.base_stiffness())];
    for slot in align_slots(model, &truth_taus(truth)) {
        match slot {
            Some(e) => {
                cells.push(e.stiffness().into());
                cells.push(e.relaxation_time().into());
            }
            None => cells.extend([Cell::Empty, Cell::Empty]),
        }
    }
    cells
}

/// Truth values in [`parameter_columns`] order.
fn truth_values(truth: &MaterialModel) -> Vec<f64> {
    let mut v = vec![truth.base_stiffness()];
    for e in truth.elements() {
        v.push(e.stiffness());
        v.push(e.relaxation_time());
    }
    v
}

fn fit_and_cluster(
    d: &StressDataset,
    fit: &FitConfig,
    cl: &ClusterConfig,
) -> Result<(FitResult, ClusterReport)> {
    let result = optimize::multistart_fit(d, fit)?;
    let report = cluster::cluster(&result, d, cl, fit)?;
    Ok((result, report))
}

/// Fit failures become rows with a status message; configuration errors
/// abort the run.
fn tolerate_fit_failure<T>(r: Result<T>) -> Result<std::result::Result<T, String>> {
    match r {
        Ok(v) => Ok(Ok(v)),
        Err(e @ Error::Config(_)) => Err(e),
        Err(e) => Ok(Err(e.to_string())),
    }
}

fn outcome_cells(
    outcome: &std::result::Result<(FitResult, ClusterReport), String>,
    truth: &MaterialModel,
) -> Vec<Cell> {
    match outcome {
        Ok((fit, rep)) => {
            let mut c = vec![
                Cell::from(rep.element_count),
                fit.residual.into(),
                rep.residual_after.into(),
            ];
            c.extend(parameter_cells(Some(&rep.model), truth));
            c.push("ok".into());
            c
        }
        Err(msg) => {
            let mut c = vec![Cell::Empty; 3];
            c.extend(parameter_cells(None, truth));
            c.push(msg.clone().into());
            c
        }
    }
}

fn outcome_columns(truth: &MaterialModel) -> Vec<String> {
    let mut cols: Vec<String> = ["n", "fit_residual", "residual"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    cols.extend(parameter_columns(truth.len()));
    cols.push("status".to_owned());
    cols
}

fn table_with(name: &str, leading: &[&str], trailing: &[String]) -> Table {
    let mut cols: Vec<&str> = leading.to_vec();
    cols.extend(trailing.iter().map(String::as_str));
    Table::new(name, &cols)
}

fn push_box_stats(report: &mut Report, group: &str, parameter: &str, values: &[f64]) {
    let b = box_stats(values);
    report.push_stat(
        group,
        parameter,
        "count",
        Some(values.iter().filter(|v| v.is_finite()).count() as f64),
    );
    report.push_stat(group, parameter, "min", b.map(|b| b.min));
    report.push_stat(
        group,
        parameter,
        "lower_quartile",
        b.map(|b| b.lower_quartile),
    );
    report.push_stat(group, parameter, "median", b.map(|b| b.median));
    report.push_stat(
        group,
        parameter,
        "upper_quartile",
        b.map(|b| b.upper_quartile),
    );
    report.push_stat(group, parameter, "max", b.map(|b| b.max));
    report.push_stat(group, parameter, "iqr", b.map(|b| b.iqr()));
}

fn noisy(clean: &StressDataset, level: f64, seed: u64) -> Result<StressDataset> {
    synth::add_noise(
        clean,
        &NoiseSpec {
            relative_level: level,
            seed,
        },
    )
}

fn run_sweep(experiment: &str, spec: &SweepSpec, config: &impl Serialize) -> Result<Report> {
    spec.validate()?;
    let mut report = Report::new(experiment, config)?;
    let hash = report.config_hash.clone();
    let clean = synth::simulate_dataset(&spec.truth, &spec.program, spec.intervals)?;

    info!(
        "{experiment}: {} replicas x {} variants",
        spec.replicas,
        spec.variants.len()
    );
    let per_replica: Vec<Result<Vec<_>>> = (0..spec.replicas)
        .into_par_iter()
        .map(|k| {
            let d = noisy(&clean, spec.noise_level, spec.seed(k))?;
            spec.variants
                .iter()
                .map(|v| {
                    let out = tolerate_fit_failure(fit_and_cluster(&d, &v.fit, &v.cluster))?;
                    Ok((d.meta().noise_level, out))
                })
                .collect()
        })
        .collect();

    let mut table = table_with(
        "replicas",
        &["variant", "replica", "seed", "config_hash", "noise_level"],
        &outcome_columns(&spec.truth),
    );
    for (k, rows) in per_replica.into_iter().enumerate() {
        for (v, (level, out)) in spec.variants.iter().zip(rows?) {
            if let Err(msg) = &out {
                let w = format!("variant {} replica {k}: {msg}", v.name);
                warn!("{w}");
                report.warnings.push(w);
            }
            let mut row = vec![
                v.name.as_str().into(),
                Cell::from(k),
                Cell::from(spec.seed(k)),
                hash.as_str().into(),
                level.into(),
            ];
            row.extend(outcome_cells(&out, &spec.truth));
            table.push(row);
        }
    }

    let k = spec.truth.len();
    let params = parameter_columns(k);
    for v in &spec.variants {
        let of = |col: &str| table.numbers_where(col, |r| r[0].as_str() == Some(v.name.as_str()));
        for p in &params {
            push_box_stats(&mut report, &v.name, p, &of(p));
        }
        let n = of("n");
        let matches = n.iter().filter(|c| **c == k as f64).count() as f64 / n.len() as f64;
        report.push_stat(&v.name, "n", "fraction_matching_truth", Some(matches));
        if k > 0 {
            report.push_stat(
                &v.name,
                "mu_1~tau_1",
                "spearman",
                spearman(&of("mu_1"), &of("tau_1")),
            );
        }
    }

    if k > 0 {
        for v in &spec.variants {
            let of =
                |col: &str| table.numbers_where(col, |r| r[0].as_str() == Some(v.name.as_str()));
            report.figures.push(Figure {
                name: format!("spread_{}", v.name),
                kind: FigureKind::Scatter,
                title: format!(
                    "Spread of (tau_1, mu_1) over {} replicas: {}",
                    spec.replicas, v.name
                ),
                x_label: "tau_1 (s)".into(),
                y_label: "mu_1 (MPa)".into(),
                log_x: true,
                log_y: true,
                series: vec![Series::new(v.name.clone(), of("tau_1"), of("mu_1"))],
            });
        }
        for (slot, log) in [(1, true), (k, false)] {
            let col = format!("tau_{slot}");
            report.figures.push(Figure {
                name: format!("box_{col}"),
                kind: FigureKind::Boxes,
                title: format!("Clustered tau_{slot} per variant"),
                x_label: String::new(),
                y_label: format!("tau_{slot} (s)"),
                log_x: false,
                log_y: log,
                series: spec
                    .variants
                    .iter()
                    .map(|v| {
                        let y =
                            table.numbers_where(&col, |r| r[0].as_str() == Some(v.name.as_str()));
                        Series::new(v.name.clone(), Vec::new(), y)
                    })
                    .collect(),
            });
            if k == 1 {
                break;
            }
        }
    }
    report.tables.push(table);
    Ok(report)
}

/// Fits `spec.replicas` independently noised copies of the truth's data
/// with every variant and summarizes the clustered parameters.
pub fn run_noise_sweep(spec: &SweepSpec) -> Result<Report> {
    run_sweep("noise_sweep", spec, spec)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularizerComparison {
    pub sweep: SweepSpec,
    pub lambda: f64,
}

/// The three-variant sweep (`none`, `tikhonov_full`, `first_stiffness`)
/// built from the first variant of `spec` with penalty weight `lambda`.
pub fn regularizer_variants(spec: &SweepSpec, lambda: f64) -> Result<SweepSpec> {
    let template = spec
        .variants
        .first()
        .ok_or_else(|| Error::config("a sweep needs at least one variant"))?;
    let make = |name: &str, reg: Regularizer| Variant {
        name: name.to_owned(),
        fit: FitConfig {
            regularizer: reg,
            ..template.fit.clone()
        },
        cluster: template.cluster,
    };
    Ok(SweepSpec {
        variants: vec![
            make("none", Regularizer::none()),
            make("tikhonov_full", Regularizer::tikhonov_full(lambda)),
            make("first_stiffness", Regularizer::first_stiffness(lambda)),
        ],
        ..spec.clone()
    })
}

pub fn run_regularizer_comparison(spec: &SweepSpec, lambda: f64) -> Result<Report> {
    let expanded = regularizer_variants(spec, lambda)?;
    let config = RegularizerComparison {
        sweep: spec.clone(),
        lambda,
    };
    run_sweep("regularizer_comparison", &expanded, &config)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RateSpec {
    pub truth: MaterialModel,
    pub rates: Vec<f64>,
    pub max_strain: f64,
    pub horizon: f64,
    pub intervals: usize,
    pub noise_level: f64,
    /// Noisy fits per rate; 0 only tabulates the forward model.
    pub replicas: usize,
    pub base_seed: u64,
    pub fit: FitConfig,
    pub cluster: ClusterConfig,
}

impl Default for RateSpec {
    fn default() -> Self {
        Self {
            truth: MaterialModel::reference(),
            rates: vec![1.0, 10.0],
            max_strain: 20.0,
            horizon: 100.0,
            intervals: 1000,
            noise_level: 0.01,
            replicas: 4,
            base_seed: 1000,
            fit: FitConfig::default(),
            cluster: refit_cluster(),
        }
    }
}

impl RateSpec {
    pub fn validate(&self) -> Result<()> {
        if self.rates.is_empty() {
            return Err(Error::config("at least one rate is required"));
        }
        for &r in &self.rates {
            self.program(r)?;
        }
        if self.intervals < 1 {
            return Err(Error::config("intervals must be at least 1"));
        }
        check_noise(self.noise_level)?;
        check_fit(&self.fit, &self.cluster)
    }

    fn program(&self, rate: f64) -> Result<LoadingProgram> {
        LoadingProgram::new(rate, self.max_strain, self.horizon)
            .map_err(|e| Error::config(format!("rate {rate}: {e}")))
    }
}

fn label(rate: f64) -> String {
    format!("eta={rate}")
}

fn curve_grid(horizon: f64) -> Result<TimeGrid> {
    TimeGrid::uniform(CURVE_POINTS, horizon)
}

fn decomposition_figure(
    name: String,
    title: String,
    model: &MaterialModel,
    p: &LoadingProgram,
) -> Result<Figure> {
    let g = curve_grid(p.horizon())?;
    let parts = rheology::stress_decomposition(model, p, &g)?;
    let t = g.times();
    let series = parts
        .into_iter()
        .enumerate()
        .map(|(j, y)| {
            let label = if j == 0 {
                "spring".to_owned()
            } else {
                format!("element {j}")
            };
            Series::new(label, t.clone(), y)
        })
        .collect();
    Ok(Figure {
        name,
        kind: FigureKind::Lines,
        title,
        x_label: "t (s)".into(),
        y_label: "stress (MPa)".into(),
        log_x: false,
        log_y: false,
        series,
    })
}

/// Per-element stress maxima (reached at the end of the ramp) for each
/// rate, optional noisy fits per rate, and strain/stress/decomposition
/// figures.
pub fn run_rate_comparison(spec: &RateSpec) -> Result<Report> {
    spec.validate()?;
    let mut report = Report::new("rate_comparison", spec)?;
    let hash = report.config_hash.clone();
    let truth = &spec.truth;

    let mut maxima = Table::new(
        "maxima",
        &[
            "rate",
            "element",
            "stiffness",
            "relaxation_time",
            "peak_time",
            "peak_stress",
        ],
    );
    let mut strain_series = Vec::new();
    let mut stress_series = Vec::new();
    for &rate in &spec.rates {
        let p = spec.program(rate)?;
        let r = p.ramp_end();
        maxima.push(vec![
            rate.into(),
            Cell::from(0usize),
            truth.base_stiffness().into(),
            Cell::Empty,
            r.into(),
            rheology::spring_stress_at(truth.base_stiffness(), &p, r)?.into(),
        ]);
        for (j, e) in truth.elements().iter().enumerate() {
            let peak = e.stress_at(&p, r)?;
            maxima.push(vec![
                rate.into(),
                Cell::from(j + 1),
                e.stiffness().into(),
                e.relaxation_time().into(),
                r.into(),
                peak.into(),
            ]);
            report.push_stat(
                &label(rate),
                &format!("element_{}", j + 1),
                "peak_stress",
                Some(peak),
            );
        }
        let g = curve_grid(spec.horizon)?;
        let t = g.times();
        let strain = t
            .iter()
            .map(|&s| p.strain_at(s))
            .collect::<Result<Vec<_>>>()?;
        strain_series.push(Series::new(label(rate), t.clone(), strain));
        stress_series.push(Series::new(
            label(rate),
            t,
            rheology::stress_series(truth, &p, &g)?,
        ));
        report.figures.push(decomposition_figure(
            format!("decomposition_eta_{rate}"),
            format!("Stress contributions at eta = {rate}"),
            truth,
            &p,
        )?);
    }
    report.tables.push(maxima);
    report.figures.push(Figure {
        name: "strain".into(),
        kind: FigureKind::Lines,
        title: "Applied strain".into(),
        x_label: "t (s)".into(),
        y_label: "strain (%)".into(),
        log_x: false,
        log_y: false,
        series: strain_series,
    });
    report.figures.push(Figure {
        name: "stress".into(),
        kind: FigureKind::Lines,
        title: "Total stress".into(),
        x_label: "t (s)".into(),
        y_label: "stress (MPa)".into(),
        log_x: false,
        log_y: false,
        series: stress_series,
    });

    if spec.replicas > 0 {
        let jobs: Vec<(f64, usize)> = spec
            .rates
            .iter()
            .flat_map(|&r| (0..spec.replicas).map(move |k| (r, k)))
            .collect();
        let outcomes: Vec<Result<_>> = jobs
            .par_iter()
            .map(|&(rate, k)| {
                let p = spec.program(rate)?;
                let clean = synth::simulate_dataset(truth, &p, spec.intervals)?;
                let d = noisy(&clean, spec.noise_level, spec.base_seed + k as u64)?;
                let out = tolerate_fit_failure(fit_and_cluster(&d, &spec.fit, &spec.cluster))?;
                Ok((d.meta().noise_level, out))
            })
            .collect();
        let mut fits = table_with(
            "fits",
            &["rate", "replica", "seed", "config_hash", "noise_level"],
            &outcome_columns(truth),
        );
        for (&(rate, k), out) in jobs.iter().zip(outcomes) {
            let (level, out) = out?;
            if let Err(msg) = &out {
                report
                    .warnings
                    .push(format!("rate {rate} replica {k}: {msg}"));
            }
            let mut row = vec![
                rate.into(),
                Cell::from(k),
                Cell::from(spec.base_seed + k as u64),
                hash.as_str().into(),
                level.into(),
            ];
            row.extend(outcome_cells(&out, truth));
            fits.push(row);
        }
        for &rate in &spec.rates {
            for p in parameter_columns(truth.len()) {
                let v = fits.numbers_where(&p, |r| r[0].as_f64() == Some(rate));
                report.push_stat(&label(rate), &p, "median", super::stats::median(&v));
            }
        }
        report.tables.push(fits);
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TruncationSpec {
    pub truth: MaterialModel,
    pub rates: Vec<f64>,
    pub max_strain: f64,
    pub horizon: f64,
    pub intervals: usize,
    /// Record lengths to fit, each applied to the same noisy full record.
    pub cuts: Vec<f64>,
    pub noise_level: f64,
    pub seed: u64,
    pub fit: FitConfig,
    pub cluster: ClusterConfig,
    /// Relative tolerance for stiffnesses when judging identification.
    pub stiffness_tolerance: f64,
    /// Relative tolerance for relaxation times.
    pub tau_tolerance: f64,
    /// Limit fitted relaxation times to the record length of each cut.
    pub cap_tau_at_horizon: bool,
}

impl Default for TruncationSpec {
    fn default() -> Self {
        Self {
            truth: MaterialModel::reference(),
            rates: vec![10.0, 1.0],
            max_strain: 20.0,
            horizon: 100.0,
            intervals: 1000,
            cuts: (0..16).map(|i| 100.0 - 5.0 * i as f64).collect(),
            noise_level: 0.01,
            seed: 1000,
            fit: FitConfig {
                regularizer: Regularizer::first_stiffness(1e-2),
                ..FitConfig::default()
            },
            cluster: refit_cluster(),
            stiffness_tolerance: 0.02,
            tau_tolerance: 0.10,
            cap_tau_at_horizon: true,
        }
    }
}

impl TruncationSpec {
    pub fn validate(&self) -> Result<()> {
        if self.rates.is_empty() || self.cuts.is_empty() {
            return Err(Error::config("rates and cuts must be non-empty"));
        }
        for &rate in &self.rates {
            let p = LoadingProgram::new(rate, self.max_strain, self.horizon)
                .map_err(|e| Error::config(format!("rate {rate}: {e}")))?;
            for &c in &self.cuts {
                if !(c > p.ramp_end() && c <= self.horizon) {
                    return Err(Error::config(format!(
                        "cut {c} s must exceed the ramp end {} s and not exceed {} s",
                        p.ramp_end(),
                        self.horizon
                    )));
                }
                if self.cap_tau_at_horizon && c <= self.fit.bounds.tau_min {
                    return Err(Error::config(format!(
                        "cut {c} s is below the smallest relaxation time bound"
                    )));
                }
            }
        }
        if self.intervals < 1 {
            return Err(Error::config("intervals must be at least 1"));
        }
        if !(self.stiffness_tolerance > 0.0 && self.tau_tolerance > 0.0) {
            return Err(Error::config("tolerances must be positive"));
        }
        check_noise(self.noise_level)?;
        check_fit(&self.fit, &self.cluster)
    }
}

/// Smallest record length from which the estimate stays within
/// `rel_tol` of `truth` for every longer record; `None` if even the
/// longest record misses.
pub fn conclusive_time(points: &[(f64, f64)], truth: f64, rel_tol: f64) -> Option<f64> {
    let mut sorted: Vec<(f64, f64)> = points.to_vec();
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut best = None;
    for (t, est) in sorted {
        if est.is_finite() && (est - truth).abs() <= rel_tol * truth.abs() {
            best = Some(t);
        } else {
            break;
        }
    }
    best
}

/// Fits progressively shortened versions of one noisy record per rate and
/// reports when each parameter is conclusively identified.
pub fn run_truncation_study(spec: &TruncationSpec) -> Result<Report> {
    spec.validate()?;
    let mut report = Report::new("truncation_study", spec)?;
    let hash = report.config_hash.clone();
    let truth = &spec.truth;

    let mut full = Vec::new();
    for &rate in &spec.rates {
        let p = LoadingProgram::new(rate, spec.max_strain, spec.horizon)?;
        let clean = synth::simulate_dataset(truth, &p, spec.intervals)?;
        full.push(noisy(&clean, spec.noise_level, spec.seed)?);
    }
    let jobs: Vec<(usize, f64)> = (0..spec.rates.len())
        .flat_map(|i| spec.cuts.iter().map(move |&c| (i, c)))
        .collect();
    let outcomes: Vec<Result<_>> = jobs
        .par_iter()
        .map(|&(i, cut)| {
            let d = synth::truncate(&full[i], cut)?;
            let mut fit = spec.fit.clone();
            if spec.cap_tau_at_horizon {
                fit.bounds.tau_max = fit.bounds.tau_max.min(cut);
            }
            tolerate_fit_failure(fit_and_cluster(&d, &fit, &spec.cluster))
        })
        .collect();

    let mut table = table_with(
        "estimates",
        &[
            "rate",
            "horizon",
            "samples",
            "seed",
            "config_hash",
            "noise_level",
        ],
        &outcome_columns(truth),
    );
    for (&(i, cut), out) in jobs.iter().zip(outcomes) {
        let out = out?;
        let rate = spec.rates[i];
        if let Err(msg) = &out {
            report
                .warnings
                .push(format!("rate {rate} horizon {cut}: {msg}"));
        }
        let samples = full[i]
            .times()
            .iter()
            .filter(|&&t| t <= cut * (1.0 + 1e-12))
            .count();
        let mut row = vec![
            rate.into(),
            cut.into(),
            Cell::from(samples),
            Cell::from(spec.seed),
            hash.as_str().into(),
            full[i].meta().noise_level.into(),
        ];
        row.extend(outcome_cells(&out, truth));
        table.push(row);
    }

    let params = parameter_columns(truth.len());
    let truths = truth_values(truth);
    for &rate in &spec.rates {
        let of_rate = |col: &str| table.numbers_where(col, |r| r[0].as_f64() == Some(rate));
        let horizons = of_rate("horizon");
        for (p, &tv) in params.iter().zip(&truths) {
            let tol = if p.starts_with("tau") {
                spec.tau_tolerance
            } else {
                spec.stiffness_tolerance
            };
            let pts: Vec<(f64, f64)> = horizons.iter().copied().zip(of_rate(p)).collect();
            report.push_stat(
                &label(rate),
                p,
                "conclusive_time",
                conclusive_time(&pts, tv, tol),
            );
        }
    }

    let k = truth.len();
    let mut shown = vec!["mu".to_owned()];
    if k > 0 {
        shown.extend([format!("mu_{k}"), "tau_1".to_owned(), format!("tau_{k}")]);
    }
    shown.dedup();
    for p in shown {
        let idx = params
            .iter()
            .position(|c| *c == p)
            .expect("shown parameters are columns");
        let mut series: Vec<Series> = spec
            .rates
            .iter()
            .map(|&rate| {
                let x = table.numbers_where("horizon", |r| r[0].as_f64() == Some(rate));
                let y = table.numbers_where(&p, |r| r[0].as_f64() == Some(rate));
                Series::new(label(rate), x, y)
            })
            .collect();
        let (lo, hi) = spec
            .cuts
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &c| {
                (a.min(c), b.max(c))
            });
        series.push(Series::new("truth", vec![lo, hi], vec![truths[idx]; 2]));
        report.figures.push(Figure {
            name: format!("truncation_{p}"),
            kind: FigureKind::Lines,
            title: format!("Estimate of {p} versus record length"),
            x_label: "record length T (s)".into(),
            y_label: p.clone(),
            log_x: false,
            log_y: false,
            series,
        });
    }
    report.tables.push(table);
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RecoverySpec {
    pub truth: MaterialModel,
    pub program: LoadingProgram,
    pub intervals: usize,
    pub fit: FitConfig,
    pub cluster: ClusterConfig,
}

impl Default for RecoverySpec {
    fn default() -> Self {
        Self {
            truth: MaterialModel::reference(),
            program: LoadingProgram::new(1.0, 20.0, 100.0).expect("valid default program"),
            intervals: 1000,
            fit: FitConfig::default(),
            cluster: ClusterConfig::default(),
        }
    }
}

fn push_model_rows(t: &mut Table, stage: &str, m: &MaterialModel) {
    t.push(vec![
        stage.into(),
        Cell::from(0usize),
        m.base_stiffness().into(),
        Cell::Empty,
    ]);
    for (j, e) in m.elements().iter().enumerate() {
        t.push(vec![
            stage.into(),
            Cell::from(j + 1),
            e.stiffness().into(),
            e.relaxation_time().into(),
        ]);
    }
}

/// Simulate exact data, fit with the element budget, cluster.
pub fn run_exact_recovery(spec: &RecoverySpec) -> Result<Report> {
    if spec.intervals < 1 {
        return Err(Error::config("intervals must be at least 1"));
    }
    check_fit(&spec.fit, &spec.cluster)?;
    let mut report = Report::new("exact_recovery", spec)?;
    let d = synth::simulate_dataset(&spec.truth, &spec.program, spec.intervals)?;
    let (fit, clustered) = fit_and_cluster(&d, &spec.fit, &spec.cluster)?;
    report.warnings.extend(clustered.warnings.iter().cloned());

    let mut params = Table::new(
        "parameters",
        &["stage", "element", "stiffness", "relaxation_time"],
    );
    push_model_rows(&mut params, "truth", &spec.truth);
    push_model_rows(&mut params, "fitted", &fit.model);
    push_model_rows(&mut params, "clustered", &clustered.model);
    report.tables.push(params);

    let g = "recovery";
    report.push_stat(g, "n", "value", Some(clustered.element_count as f64));
    report.push_stat(g, "fit", "residual", Some(fit.residual));
    report.push_stat(g, "merged", "residual", Some(clustered.residual_merged));
    report.push_stat(g, "clustered", "residual", Some(clustered.residual_after));
    let max_err = (clustered.model.len() == spec.truth.len()).then(|| {
        clustered
            .model
            .parameters()
            .iter()
            .zip(spec.truth.parameters())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    });
    report.push_stat(g, "parameters", "max_abs_error", max_err);

    let p = &spec.program;
    let grid = curve_grid(p.horizon())?;
    let t = grid.times();
    let strain = t
        .iter()
        .map(|&s| p.strain_at(s))
        .collect::<Result<Vec<_>>>()?;
    report.figures.push(Figure {
        name: "strain".into(),
        kind: FigureKind::Lines,
        title: format!("Applied strain, eta = {}", p.rate()),
        x_label: "t (s)".into(),
        y_label: "strain (%)".into(),
        log_x: false,
        log_y: false,
        series: vec![Series::new("strain", t.clone(), strain)],
    });
    report.figures.push(Figure {
        name: "stress".into(),
        kind: FigureKind::Lines,
        title: "Data and clustered model".into(),
        x_label: "t (s)".into(),
        y_label: "stress (MPa)".into(),
        log_x: false,
        log_y: false,
        series: vec![
            Series::new("data", d.times().to_vec(), d.stresses().to_vec()),
            Series::new(
                "clustered model",
                t,
                rheology::stress_series(&clustered.model, p, &grid)?,
            ),
        ],
    });
    report.figures.push(decomposition_figure(
        "decomposition".into(),
        "Stress contributions of the clustered model".into(),
        &clustered.model,
        p,
    )?);
    Ok(report)
}
