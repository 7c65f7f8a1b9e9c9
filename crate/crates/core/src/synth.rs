//! Synthetic relaxation experiments: sampled stress data, noise injection,
//! truncation and the on-disk dataset format.
//!
//! A dataset on disk is a pair of files: `name.csv` with header `t,sigma`
//! and one sample per row, and `name.meta.json` holding the loading program,
//! noise record and (for synthetic data) the generating model.

use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rheology::{self, LoadingProgram, MaterialModel, TimeGrid};

/// Provenance carried alongside the samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub program: LoadingProgram,
    /// Requested relative noise level (0 for clean data).
    #[serde(default)]
    pub target_noise_level: f64,
    /// Achieved `||sigma - sigma_noisy|| / ||sigma_noisy||`.
    #[serde(default)]
    pub noise_level: f64,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub truth: Option<MaterialModel>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StressDataset {
    times: Vec<f64>,
    stresses: Vec<f64>,
    meta: DatasetMeta,
}

impl StressDataset {
    pub fn new(times: Vec<f64>, stresses: Vec<f64>, meta: DatasetMeta) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::domain("dataset has no samples"));
        }
        if times.len() != stresses.len() {
            return Err(Error::domain(format!(
                "{} times but {} stresses",
                times.len(),
                stresses.len()
            )));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::domain("sample times must be strictly increasing"));
        }
        if stresses.iter().any(|s| !s.is_finite()) {
            return Err(Error::domain("stress samples must be finite"));
        }
        for &t in &times {
            meta.program.check_time(t)?;
        }
        Ok(Self {
            times,
            stresses,
            meta,
        })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn stresses(&self) -> &[f64] {
        &self.stresses
    }

    pub fn meta(&self) -> &DatasetMeta {
        &self.meta
    }

    pub fn program(&self) -> &LoadingProgram {
        &self.meta.program
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn max_stress(&self) -> f64 {
        self.stresses
            .iter()
            .cloned()
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub relative_level: f64,
    pub seed: u64,
}

/// Exact stresses of `mdl` on a uniform grid with `m` intervals.
pub fn simulate_dataset(
    mdl: &MaterialModel,
    p: &LoadingProgram,
    m: usize,
) -> Result<StressDataset> {
    let grid = TimeGrid::uniform(m, p.horizon())?;
    let stresses = rheology::stress_series(mdl, p, &grid)?;
    StressDataset::new(
        grid.times(),
        stresses,
        DatasetMeta {
            program: *p,
            target_noise_level: 0.0,
            noise_level: 0.0,
            seed: None,
            truth: Some(mdl.clone()),
        },
    )
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Adds i.i.d. Gaussian noise scaled so that `||sigma - sigma_noisy||`
/// equals `relative_level * ||sigma||` exactly.
pub fn add_noise(d: &StressDataset, spec: &NoiseSpec) -> Result<StressDataset> {
    if !(spec.relative_level.is_finite() && spec.relative_level >= 0.0) {
        return Err(Error::config(format!(
            "noise level must be non-negative, got {}",
            spec.relative_level
        )));
    }
    if d.meta.target_noise_level > 0.0 || d.meta.noise_level > 0.0 {
        return Err(Error::domain("dataset is already noisy"));
    }
    if spec.relative_level == 0.0 {
        return Ok(d.clone());
    }
    let signal = norm(&d.stresses);
    if signal == 0.0 {
        return Err(Error::domain(
            "cannot scale noise against an all-zero signal",
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let z: Vec<f64> = (0..d.len())
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    let scale = spec.relative_level * signal / norm(&z);
    let noisy: Vec<f64> = d
        .stresses
        .iter()
        .zip(&z)
        .map(|(s, zi)| s + scale * zi)
        .collect();
    let diff: Vec<f64> = d.stresses.iter().zip(&noisy).map(|(a, b)| a - b).collect();
    let achieved = norm(&diff) / norm(&noisy);
    let mut meta = d.meta.clone();
    meta.target_noise_level = spec.relative_level;
    meta.noise_level = achieved;
    meta.seed = Some(spec.seed);
    StressDataset::new(d.times.clone(), noisy, meta)
}

/// Keeps samples with `t <= cut`; the ramp must stay fully inside.
pub fn truncate(d: &StressDataset, cut: f64) -> Result<StressDataset> {
    let p = d.program();
    let slack = 1e-9 * p.horizon().max(1.0);
    if !(cut > p.ramp_end()) {
        return Err(Error::domain(format!(
            "cut at {cut} s would remove part of the ramp (ends at {} s)",
            p.ramp_end()
        )));
    }
    if cut > p.horizon() + slack {
        return Err(Error::domain(format!(
            "cut at {cut} s lies beyond the horizon {} s",
            p.horizon()
        )));
    }
    let keep = d.times.iter().take_while(|&&t| t <= cut + slack).count();
    let mut meta = d.meta.clone();
    meta.program = p.with_horizon(cut.min(p.horizon()).max(d.times[keep - 1]))?;
    StressDataset::new(d.times[..keep].to_vec(), d.stresses[..keep].to_vec(), meta)
}

/// Path of the JSON sidecar belonging to a dataset CSV.
pub fn meta_path(csv_path: &Path) -> PathBuf {
    let stem = csv_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    csv_path.with_file_name(format!("{stem}.meta.json"))
}

pub fn write_dataset(d: &StressDataset, path: &Path) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(|e| Error::parse(path, e.to_string()))?;
    let io_err = |e: csv::Error| Error::parse(path, e.to_string());
    w.write_record(["t", "sigma"]).map_err(io_err)?;
    for (t, s) in d.times.iter().zip(&d.stresses) {
        w.write_record([t.to_string(), s.to_string()])
            .map_err(io_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    let meta = serde_json::to_string_pretty(&d.meta).expect("metadata serializes");
    let mp = meta_path(path);
    fs::write(&mp, meta + "\n").map_err(|e| Error::io(mp, e))
}

pub fn read_dataset(path: &Path) -> Result<StressDataset> {
    let mp = meta_path(path);
    let meta_text = fs::read_to_string(&mp).map_err(|e| Error::io(&mp, e))?;
    let meta: DatasetMeta =
        serde_json::from_str(&meta_text).map_err(|e| Error::parse(&mp, e.to_string()))?;

    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().from_reader(text.as_bytes());
    let headers = rdr
        .headers()
        .map_err(|e| Error::parse(path, e.to_string()))?
        .clone();
    if headers.len() != 2 || &headers[0] != "t" || &headers[1] != "sigma" {
        return Err(Error::parse(path, "expected header `t,sigma`"));
    }
    let mut times = Vec::new();
    let mut stresses = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::parse(path, e.to_string()))?;
        let field = |i: usize| -> Result<f64> {
            rec.get(i)
                .ok_or_else(|| Error::parse(path, format!("row {}: missing column", line + 2)))?
                .trim()
                .parse::<f64>()
                .map_err(|e| Error::parse(path, format!("row {}: {e}", line + 2)))
        };
        times.push(field(0)?);
        stresses.push(field(1)?);
    }
    if times.is_empty() {
        return Err(Error::parse(path, "no samples"));
    }
    StressDataset::new(times, stresses, meta).map_err(|e| Error::parse(path, e.to_string()))
}
