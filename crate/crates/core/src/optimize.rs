//! Bound-constrained, optionally regularized least-squares fitting of a
//! generalized Maxwell model with a fixed element budget, run from many
//! deterministic starting points.
//!
//! The data term is `R = ||sigma_model - sigma_data||^2` summed over the
//! samples. Penalties are added on the raw parameters:
//!
//! * `tikhonov_full`: `lambda * ||(mu, mu_1..mu_N, tau_1..tau_N)||^2`
//! * `first_stiffness`: `lambda * mu_k^2` where `k` is the element with the
//!   currently smallest relaxation time.
//!
//! Internally the solver works on `(mu, mu_1..mu_N, ln tau_1..ln tau_N)`
//! with box bounds; see [`lm`].

pub mod lm;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rheology::{self, LoadingProgram, MaterialModel};
use crate::synth::StressDataset;

pub use lm::Termination;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RegularizerKind {
    #[default]
    None,
    TikhonovFull,
    FirstStiffness,
}

impl std::fmt::Display for RegularizerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RegularizerKind::None => "none",
            RegularizerKind::TikhonovFull => "tikhonov_full",
            RegularizerKind::FirstStiffness => "first_stiffness",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct Regularizer {
    pub kind: RegularizerKind,
    #[serde(default)]
    pub lambda: f64,
}

impl Regularizer {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn tikhonov_full(lambda: f64) -> Self {
        Self {
            kind: RegularizerKind::TikhonovFull,
            lambda,
        }
    }

    pub fn first_stiffness(lambda: f64) -> Self {
        Self {
            kind: RegularizerKind::FirstStiffness,
            lambda,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::config(format!(
                "lambda must be non-negative, got {}",
                self.lambda
            )));
        }
        if self.kind == RegularizerKind::None && self.lambda != 0.0 {
            return Err(Error::config("lambda must be 0 without a regularizer"));
        }
        Ok(())
    }

    /// Number of extra residual rows the penalty contributes for `n` elements.
    fn rows(&self, n: usize) -> usize {
        match self.kind {
            _ if self.lambda == 0.0 => 0,
            RegularizerKind::None => 0,
            RegularizerKind::TikhonovFull => 2 * n + 1,
            RegularizerKind::FirstStiffness => usize::from(n > 0),
        }
    }

    /// Penalty value on raw parameters `(mu, mu_j.., tau_j..)`.
    pub fn penalty(&self, params: &[f64]) -> f64 {
        if self.lambda == 0.0 {
            return 0.0;
        }
        match self.kind {
            RegularizerKind::None => 0.0,
            RegularizerKind::TikhonovFull => {
                self.lambda * params.iter().map(|v| v * v).sum::<f64>()
            }
            RegularizerKind::FirstStiffness => match first_element(params) {
                Some(k) => self.lambda * params[1 + k] * params[1 + k],
                None => 0.0,
            },
        }
    }
}

/// Index of the element with the smallest relaxation time (first on ties).
fn first_element(params: &[f64]) -> Option<usize> {
    let n = (params.len() - 1) / 2;
    (0..n).min_by(|&a, &b| params[1 + n + a].total_cmp(&params[1 + n + b]))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Bounds {
    /// Upper stiffness bound; `None` leaves stiffnesses unbounded above.
    pub stiffness_max: Option<f64>,
    /// Upper end of the stiffness range starts are drawn from; `None` uses
    /// `2 * max(sigma) / max_strain`.
    pub start_stiffness_max: Option<f64>,
    pub tau_min: f64,
    pub tau_max: f64,
}

impl Default for Bounds {
    fn default() -> Self {
        Self {
            stiffness_max: None,
            start_stiffness_max: None,
            tau_min: 1e-2,
            tau_max: 1e3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct ResolvedBounds {
    pub stiffness_max: f64,
    pub start_stiffness_max: f64,
    pub tau_min: f64,
    pub tau_max: f64,
}

impl Bounds {
    pub(crate) fn resolve(&self, d: &StressDataset) -> Result<ResolvedBounds> {
        let start_max = match self.start_stiffness_max {
            Some(v) => v,
            None => 2.0 * d.max_stress().max(0.0) / d.program().max_strain(),
        };
        let start_max = if start_max > 0.0 { start_max } else { 1.0 };
        let stiffness_max = self.stiffness_max.unwrap_or(f64::INFINITY);
        Ok(ResolvedBounds {
            stiffness_max,
            start_stiffness_max: start_max.min(stiffness_max),
            tau_min: self.tau_min,
            tau_max: self.tau_max,
        })
    }

    fn validate(&self) -> Result<()> {
        if !(self.tau_min.is_finite() && self.tau_min > 0.0) {
            return Err(Error::config("tau_min must be positive"));
        }
        if !(self.tau_max.is_finite() && self.tau_max > self.tau_min) {
            return Err(Error::config("tau_max must exceed tau_min"));
        }
        for v in [self.stiffness_max, self.start_stiffness_max]
            .into_iter()
            .flatten()
        {
            if !(v > 0.0) {
                return Err(Error::config("stiffness bounds must be positive"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    pub gradient: f64,
    pub step: f64,
    pub cost: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            gradient: 1e-10,
            step: 1e-12,
            cost: 1e-14,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    /// Element budget `N`.
    pub max_elements: usize,
    pub regularizer: Regularizer,
    pub starts: usize,
    pub bounds: Bounds,
    pub tolerances: Tolerances,
    pub max_iterations: usize,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            max_elements: 5,
            regularizer: Regularizer::none(),
            starts: 40,
            bounds: Bounds::default(),
            tolerances: Tolerances::default(),
            max_iterations: 500,
            seed: 0,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_elements < 1 {
            return Err(Error::config("max_elements must be at least 1"));
        }
        if self.starts < 1 {
            return Err(Error::config("at least one start is required"));
        }
        if self.max_iterations < 1 {
            return Err(Error::config("max_iterations must be at least 1"));
        }
        let t = &self.tolerances;
        if !(t.gradient > 0.0 && t.step > 0.0 && t.cost > 0.0) {
            return Err(Error::config("tolerances must be positive"));
        }
        self.regularizer.validate()?;
        self.bounds.validate()
    }
}

/// Outcome of one local solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartRecord {
    pub start: MaterialModel,
    pub result: MaterialModel,
    pub initial_cost: f64,
    /// Regularized cost at `result`.
    pub cost: f64,
    /// Data term `R` at `result`.
    pub residual: f64,
    pub iterations: usize,
    pub termination: Termination,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    /// Best fitted model with the full element budget (not clustered).
    pub model: MaterialModel,
    pub residual: f64,
    pub cost: f64,
    pub best_start: usize,
    pub records: Vec<StartRecord>,
    /// Diagnostics for starts that could not be evaluated.
    #[serde(default)]
    pub rejected: Vec<String>,
}

/// `sigma_model(t_i) - sigma_data(t_i)` on the dataset's samples.
pub fn residual(mdl: &MaterialModel, d: &StressDataset) -> Result<Vec<f64>> {
    let model = rheology::stress_at_times(mdl, d.program(), d.times())?;
    Ok(model.iter().zip(d.stresses()).map(|(m, s)| m - s).collect())
}

/// `R = ||residual||^2`.
pub fn residual_norm_sq(mdl: &MaterialModel, d: &StressDataset) -> Result<f64> {
    Ok(residual(mdl, d)?.iter().map(|r| r * r).sum())
}

/// Data term plus penalty.
pub fn regularized_cost(mdl: &MaterialModel, d: &StressDataset, reg: &Regularizer) -> Result<f64> {
    Ok(residual_norm_sq(mdl, d)? + reg.penalty(&mdl.parameters()))
}

/// Gradient of [`regularized_cost`] with respect to the raw parameters
/// `(mu, mu_1..mu_n, tau_1..tau_n)`.
pub fn cost_gradient(
    mdl: &MaterialModel,
    d: &StressDataset,
    reg: &Regularizer,
) -> Result<Vec<f64>> {
    let r = residual(mdl, d)?;
    let jac = rheology::jacobian_at_times(mdl, d.program(), d.times())?;
    let mut g: Vec<f64> = (0..jac.ncols())
        .map(|c| {
            2.0 * jac
                .column(c)
                .iter()
                .zip(&r)
                .map(|(a, b)| a * b)
                .sum::<f64>()
        })
        .collect();
    let params = mdl.parameters();
    if reg.lambda > 0.0 {
        match reg.kind {
            RegularizerKind::None => {}
            RegularizerKind::TikhonovFull => {
                for (gi, p) in g.iter_mut().zip(&params) {
                    *gi += 2.0 * reg.lambda * p;
                }
            }
            RegularizerKind::FirstStiffness => {
                if let Some(k) = first_element(&params) {
                    g[1 + k] += 2.0 * reg.lambda * params[1 + k];
                }
            }
        }
    }
    Ok(g)
}

/// Least-squares problem in solver coordinates
/// `x = (mu, mu_1..mu_n, ln tau_1..ln tau_n)`.
pub(crate) struct FitProblem<'a> {
    times: &'a [f64],
    data: &'a [f64],
    program: LoadingProgram,
    n: usize,
    reg: Regularizer,
}

impl<'a> FitProblem<'a> {
    pub(crate) fn new(d: &'a StressDataset, n: usize, reg: Regularizer) -> Self {
        Self {
            times: d.times(),
            data: d.stresses(),
            program: *d.program(),
            n,
            reg,
        }
    }

    fn samples(&self) -> usize {
        self.times.len()
    }

    pub(crate) fn raw_params(&self, x: &[f64]) -> Vec<f64> {
        let mut p = x.to_vec();
        for v in &mut p[1 + self.n..] {
            *v = v.exp();
        }
        p
    }

    pub(crate) fn solver_coords(&self, mdl: &MaterialModel) -> Vec<f64> {
        let mut x = mdl.parameters();
        for v in &mut x[1 + self.n..] {
            *v = v.ln();
        }
        x
    }

    pub(crate) fn model(&self, x: &[f64]) -> MaterialModel {
        MaterialModel::from_parameters(&self.raw_params(x))
            .expect("solver iterates stay inside the parameter domain")
    }

    /// Splits a raw residual-norm from the penalty rows.
    pub(crate) fn data_term(&self, r: &[f64]) -> f64 {
        r[..self.samples()].iter().map(|v| v * v).sum()
    }
}

impl lm::LeastSquares for FitProblem<'_> {
    fn params(&self) -> usize {
        2 * self.n + 1
    }

    fn residuals(&self) -> usize {
        self.samples() + self.reg.rows(self.n)
    }

    fn eval(&self, x: &[f64], r: &mut [f64]) {
        let n = self.n;
        let p = &self.program;
        let taus: Vec<f64> = x[1 + n..].iter().map(|v| v.exp()).collect();
        for (i, (&t, &s)) in self.times.iter().zip(self.data).enumerate() {
            let mut model = x[0] * p.strain_unchecked(t);
            for j in 0..n {
                model += x[1 + j] * rheology::unit_stress(taus[j], p, t);
            }
            r[i] = model - s;
        }
        self.penalty_rows(x, &taus, &mut r[self.samples()..], None);
    }

    fn jacobian(&self, x: &[f64], jac: &mut nalgebra::DMatrix<f64>) {
        let n = self.n;
        let p = &self.program;
        let taus: Vec<f64> = x[1 + n..].iter().map(|v| v.exp()).collect();
        for (i, &t) in self.times.iter().enumerate() {
            jac[(i, 0)] = p.strain_unchecked(t);
            for j in 0..n {
                let (value, dtau) = rheology::unit_stress_with_dtau(taus[j], p, t);
                jac[(i, 1 + j)] = value;
                // chain rule through tau = exp(theta)
                jac[(i, 1 + n + j)] = x[1 + j] * dtau * taus[j];
            }
        }
        let m = self.samples();
        for row in m..jac.nrows() {
            for c in 0..jac.ncols() {
                jac[(row, c)] = 0.0;
            }
        }
        let mut scratch = vec![0.0; jac.nrows() - m];
        self.penalty_rows(x, &taus, &mut scratch, Some((jac, m)));
    }
}

impl FitProblem<'_> {
    fn penalty_rows(
        &self,
        x: &[f64],
        taus: &[f64],
        out: &mut [f64],
        jac: Option<(&mut nalgebra::DMatrix<f64>, usize)>,
    ) {
        if self.reg.rows(self.n) == 0 {
            return;
        }
        let n = self.n;
        let w = self.reg.lambda.sqrt();
        match self.reg.kind {
            RegularizerKind::None => {}
            RegularizerKind::TikhonovFull => {
                for k in 0..=n {
                    out[k] = w * x[k];
                }
                for j in 0..n {
                    out[1 + n + j] = w * taus[j];
                }
                if let Some((jac, m)) = jac {
                    for k in 0..=n {
                        jac[(m + k, k)] = w;
                    }
                    for j in 0..n {
                        jac[(m + 1 + n + j, 1 + n + j)] = w * taus[j];
                    }
                }
            }
            RegularizerKind::FirstStiffness => {
                let k = (0..n)
                    .min_by(|&a, &b| x[1 + n + a].total_cmp(&x[1 + n + b]))
                    .expect("penalty rows only exist with elements");
                out[0] = w * x[1 + k];
                if let Some((jac, m)) = jac {
                    jac[(m, 1 + k)] = w;
                }
            }
        }
    }
}

fn lm_settings(cfg: &FitConfig) -> lm::Settings {
    lm::Settings {
        gradient_tol: cfg.tolerances.gradient,
        step_tol: cfg.tolerances.step,
        cost_tol: cfg.tolerances.cost,
        max_iterations: cfg.max_iterations,
    }
}

fn solver_box(n: usize, b: &ResolvedBounds) -> (Vec<f64>, Vec<f64>) {
    let mut lo = vec![0.0; 2 * n + 1];
    let mut hi = vec![b.stiffness_max; 2 * n + 1];
    for j in 0..n {
        lo[1 + n + j] = b.tau_min.ln();
        hi[1 + n + j] = b.tau_max.ln();
    }
    (lo, hi)
}

fn check_start(start: &MaterialModel, b: &ResolvedBounds) -> Result<()> {
    let slack = 1e-12;
    let mu_ok = |mu: f64| mu >= 0.0 && mu <= b.stiffness_max;
    if !mu_ok(start.base_stiffness()) {
        return Err(Error::domain("start base stiffness outside bounds"));
    }
    for e in start.elements() {
        let tau = e.relaxation_time();
        if !mu_ok(e.stiffness())
            || tau < b.tau_min * (1.0 - slack)
            || tau > b.tau_max * (1.0 + slack)
        {
            return Err(Error::domain(format!(
                "start element ({}, {tau}) outside bounds",
                e.stiffness()
            )));
        }
    }
    Ok(())
}

fn solve_resolved(
    start: &MaterialModel,
    d: &StressDataset,
    cfg: &FitConfig,
    bounds: &ResolvedBounds,
) -> Result<StartRecord> {
    check_start(start, bounds)?;
    let n = start.len();
    let problem = FitProblem::new(d, n, cfg.regularizer);
    let (lo, hi) = solver_box(n, bounds);
    let x0 = problem.solver_coords(start);
    let out = lm::minimize(&problem, &x0, &lo, &hi, &lm_settings(cfg))?;
    Ok(StartRecord {
        start: start.clone(),
        result: problem.model(&out.x),
        initial_cost: out.initial_cost,
        cost: out.cost,
        residual: problem.data_term(&out.residuals),
        iterations: out.iterations,
        termination: out.termination,
    })
}

/// Runs the local solver from one starting model.
pub fn solve_single(
    start: &MaterialModel,
    d: &StressDataset,
    cfg: &FitConfig,
) -> Result<StartRecord> {
    cfg.regularizer.validate()?;
    cfg.bounds.validate()?;
    let bounds = cfg.bounds.resolve(d)?;
    solve_resolved(start, d, cfg, &bounds)
}

fn primes(count: usize) -> Vec<u64> {
    let mut out = Vec::with_capacity(count);
    let mut candidate = 2u64;
    while out.len() < count {
        if out
            .iter()
            .take_while(|&&p| p * p <= candidate)
            .all(|&p| candidate % p != 0)
        {
            out.push(candidate);
        }
        candidate += 1;
    }
    out
}

fn radical_inverse(mut index: u64, base: u64) -> f64 {
    let mut inv = 1.0 / base as f64;
    let mut out = 0.0;
    while index > 0 {
        out += (index % base) as f64 * inv;
        index /= base;
        inv /= base as f64;
    }
    out
}

/// Randomly shifted Halton points in `[0, 1)^dim`.
fn shifted_halton(count: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
    let bases = primes(dim);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shift: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
    (0..count)
        .map(|k| {
            bases
                .iter()
                .zip(&shift)
                .map(|(&b, s)| (radical_inverse(k as u64 + 1, b) + s).fract())
                .collect()
        })
        .collect()
}

pub(crate) fn global_starts(
    n: usize,
    count: usize,
    seed: u64,
    b: &ResolvedBounds,
) -> Vec<MaterialModel> {
    let (ln_lo, ln_hi) = (b.tau_min.ln(), b.tau_max.ln());
    shifted_halton(count, 2 * n + 1, seed)
        .into_iter()
        .map(|u| {
            let mut params = Vec::with_capacity(2 * n + 1);
            params.extend(u[..=n].iter().map(|v| v * b.start_stiffness_max));
            params.extend(u[1 + n..].iter().map(|v| {
                (ln_lo + v * (ln_hi - ln_lo))
                    .exp()
                    .clamp(b.tau_min, b.tau_max)
            }));
            MaterialModel::from_parameters(&params).expect("start inside the parameter domain")
        })
        .collect()
}

/// The deterministic starting models `multistart_fit` uses for `cfg`.
pub fn generate_starts(d: &StressDataset, cfg: &FitConfig) -> Result<Vec<MaterialModel>> {
    cfg.validate()?;
    let b = cfg.bounds.resolve(d)?;
    Ok(global_starts(cfg.max_elements, cfg.starts, cfg.seed, &b))
}

/// Runs the local solver from each of `starts` and keeps the best.
pub fn fit_from_starts(
    d: &StressDataset,
    cfg: &FitConfig,
    starts: &[MaterialModel],
) -> Result<FitResult> {
    cfg.regularizer.validate()?;
    cfg.bounds.validate()?;
    if starts.is_empty() {
        return Err(Error::config("no starting points"));
    }
    let bounds = cfg.bounds.resolve(d)?;
    let outcomes: Vec<Result<StartRecord>> = starts
        .par_iter()
        .map(|s| solve_resolved(s, d, cfg, &bounds))
        .collect();

    let mut records = Vec::with_capacity(outcomes.len());
    let mut rejected = Vec::new();
    for (i, o) in outcomes.into_iter().enumerate() {
        match o {
            Ok(rec) => records.push(rec),
            Err(e) => rejected.push(format!("start {i}: {e}")),
        }
    }
    let best_start = records
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.cost.total_cmp(&b.1.cost))
        .map(|(i, _)| i)
        .ok_or_else(|| Error::FitFailed {
            reason: "every start was rejected".into(),
            diagnostics: rejected.clone(),
        })?;
    let best = &records[best_start];
    Ok(FitResult {
        model: best.result.clone(),
        residual: best.residual,
        cost: best.cost,
        best_start,
        records,
        rejected,
    })
}

/// Multi-start fit with `cfg.max_elements` elements.
pub fn multistart_fit(d: &StressDataset, cfg: &FitConfig) -> Result<FitResult> {
    let starts = generate_starts(d, cfg)?;
    fit_from_starts(d, cfg, &starts)
}
