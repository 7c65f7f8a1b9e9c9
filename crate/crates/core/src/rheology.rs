//! Closed-form forward model of a generalized Maxwell material under a
//! ramp-and-hold strain program.
//!
//! Strain is measured in percent and the displacement rate in percent per
//! second, so a "10 mm/s" experiment with a 20 % plateau is
//! `LoadingProgram::new(10.0, 20.0, 100.0)` and reaches the plateau at 2 s.
//! Stiffnesses are in MPa per percent strain and relaxation times in
//! seconds.
//!
//! All hold-phase expressions are written relative to the end of the ramp,
//! `(1 - exp(-2 r / tau)) * exp(-2 (t - r) / tau)` with `r = max_strain / rate`,
//! which never forms `exp(+2 r / tau)` and therefore stays finite for
//! arbitrarily small relaxation times.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative slack allowed when checking that a time lies in `[0, T]`.
const TIME_SLACK: f64 = 1e-12;

/// Ramp-and-hold strain program: strain grows at `rate` until it reaches
/// `max_strain`, then stays constant until `horizon`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawProgram")]
pub struct LoadingProgram {
    rate: f64,
    max_strain: f64,
    horizon: f64,
}

#[derive(Deserialize)]
struct RawProgram {
    rate: f64,
    max_strain: f64,
    horizon: f64,
}

impl TryFrom<RawProgram> for LoadingProgram {
    type Error = Error;

    fn try_from(raw: RawProgram) -> Result<Self> {
        LoadingProgram::new(raw.rate, raw.max_strain, raw.horizon)
    }
}

impl LoadingProgram {
    pub fn new(rate: f64, max_strain: f64, horizon: f64) -> Result<Self> {
        if !(rate.is_finite() && rate > 0.0) {
            return Err(Error::domain(format!("rate must be positive, got {rate}")));
        }
        if !(max_strain.is_finite() && max_strain > 0.0) {
            return Err(Error::domain(format!(
                "max_strain must be positive, got {max_strain}"
            )));
        }
        let ramp_end = max_strain / rate;
        if !ramp_end.is_finite() {
            return Err(Error::domain("ramp end time is not finite"));
        }
        if !horizon.is_finite() || horizon < ramp_end * (1.0 - TIME_SLACK) {
            return Err(Error::domain(format!(
                "horizon {horizon} s ends before the ramp ({ramp_end} s)"
            )));
        }
        Ok(Self {
            rate,
            max_strain,
            horizon,
        })
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn max_strain(&self) -> f64 {
        self.max_strain
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// Time at which the plateau strain is reached.
    pub fn ramp_end(&self) -> f64 {
        self.max_strain / self.rate
    }

    /// Same rate and plateau, different observation horizon.
    pub fn with_horizon(&self, horizon: f64) -> Result<Self> {
        Self::new(self.rate, self.max_strain, horizon)
    }

    pub(crate) fn check_time(&self, t: f64) -> Result<()> {
        let slack = TIME_SLACK * self.horizon.max(1.0);
        if !t.is_finite() || t < -slack || t > self.horizon + slack {
            return Err(Error::domain(format!(
                "time {t} s outside [0, {}] s",
                self.horizon
            )));
        }
        Ok(())
    }

    #[inline]
    pub(crate) fn strain_unchecked(&self, t: f64) -> f64 {
        if t <= self.ramp_end() {
            self.rate * t
        } else {
            self.max_strain
        }
    }

    /// Applied strain at time `t`.
    pub fn strain_at(&self, t: f64) -> Result<f64> {
        self.check_time(t)?;
        Ok(self.strain_unchecked(t))
    }
}

/// Spring and damper in series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawElement")]
pub struct MaxwellElement {
    stiffness: f64,
    relaxation_time: f64,
}

#[derive(Deserialize)]
struct RawElement {
    stiffness: f64,
    relaxation_time: f64,
}

impl TryFrom<RawElement> for MaxwellElement {
    type Error = Error;

    fn try_from(raw: RawElement) -> Result<Self> {
        MaxwellElement::new(raw.stiffness, raw.relaxation_time)
    }
}

impl MaxwellElement {
    pub fn new(stiffness: f64, relaxation_time: f64) -> Result<Self> {
        if !(stiffness.is_finite() && stiffness >= 0.0) {
            return Err(Error::domain(format!(
                "element stiffness must be non-negative, got {stiffness}"
            )));
        }
        if !(relaxation_time.is_finite() && relaxation_time > 0.0) {
            return Err(Error::domain(format!(
                "relaxation time must be positive, got {relaxation_time}"
            )));
        }
        Ok(Self {
            stiffness,
            relaxation_time,
        })
    }

    pub fn stiffness(&self) -> f64 {
        self.stiffness
    }

    pub fn relaxation_time(&self) -> f64 {
        self.relaxation_time
    }

    /// Inelastic (damper) strain at time `t`.
    pub fn inelastic_strain_at(&self, p: &LoadingProgram, t: f64) -> Result<f64> {
        p.check_time(t)?;
        Ok(p.strain_unchecked(t) - unit_stress(self.relaxation_time, p, t))
    }

    /// Stress carried by this element's spring at time `t`.
    pub fn stress_at(&self, p: &LoadingProgram, t: f64) -> Result<f64> {
        p.check_time(t)?;
        Ok(self.stiffness * unit_stress(self.relaxation_time, p, t))
    }
}

/// Equilibrium spring in parallel with Maxwell elements sorted by
/// ascending relaxation time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawModel")]
pub struct MaterialModel {
    base_stiffness: f64,
    elements: Vec<MaxwellElement>,
}

#[derive(Deserialize)]
struct RawModel {
    base_stiffness: f64,
    #[serde(default)]
    elements: Vec<MaxwellElement>,
}

impl TryFrom<RawModel> for MaterialModel {
    type Error = Error;

    fn try_from(raw: RawModel) -> Result<Self> {
        MaterialModel::new(raw.base_stiffness, raw.elements)
    }
}

impl MaterialModel {
    /// Builds a model; elements are reordered by relaxation time.
    pub fn new(base_stiffness: f64, mut elements: Vec<MaxwellElement>) -> Result<Self> {
        if !(base_stiffness.is_finite() && base_stiffness >= 0.0) {
            return Err(Error::domain(format!(
                "base stiffness must be non-negative, got {base_stiffness}"
            )));
        }
        elements.sort_by(|a, b| a.relaxation_time.total_cmp(&b.relaxation_time));
        Ok(Self {
            base_stiffness,
            elements,
        })
    }

    /// Convenience constructor from `(stiffness, relaxation_time)` pairs.
    pub fn from_pairs(base_stiffness: f64, pairs: &[(f64, f64)]) -> Result<Self> {
        let elements = pairs
            .iter()
            .map(|&(mu, tau)| MaxwellElement::new(mu, tau))
            .collect::<Result<Vec<_>>>()?;
        Self::new(base_stiffness, elements)
    }

    /// The three-element reference material: spring 10 MPa plus
    /// (4, 0.2 s), (7, 3.7 s), (1, 25 s).
    pub fn reference() -> Self {
        Self::from_pairs(10.0, &[(4.0, 0.2), (7.0, 3.7), (1.0, 25.0)])
            .expect("reference parameters are valid")
    }

    pub fn base_stiffness(&self) -> f64 {
        self.base_stiffness
    }

    pub fn elements(&self) -> &[MaxwellElement] {
        &self.elements
    }

    /// Number of Maxwell elements.
    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    /// Parameter vector in the order `mu, mu_1..mu_n, tau_1..tau_n`.
    pub fn parameters(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(2 * self.len() + 1);
        out.push(self.base_stiffness);
        out.extend(self.elements.iter().map(|e| e.stiffness));
        out.extend(self.elements.iter().map(|e| e.relaxation_time));
        out
    }

    /// Inverse of [`MaterialModel::parameters`].
    pub fn from_parameters(params: &[f64]) -> Result<Self> {
        if params.is_empty() || params.len() % 2 == 0 {
            return Err(Error::domain(format!(
                "parameter vector must have odd length 2n+1, got {}",
                params.len()
            )));
        }
        let n = (params.len() - 1) / 2;
        let elements = (0..n)
            .map(|j| MaxwellElement::new(params[1 + j], params[1 + n + j]))
            .collect::<Result<Vec<_>>>()?;
        Self::new(params[0], elements)
    }
}

/// Uniform grid `t_i = i T / m`, `i = 0..=m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    intervals: usize,
    horizon: f64,
}

impl TimeGrid {
    pub fn uniform(intervals: usize, horizon: f64) -> Result<Self> {
        if intervals < 1 {
            return Err(Error::domain("time grid needs at least one interval"));
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::domain(format!(
                "grid horizon must be positive, got {horizon}"
            )));
        }
        Ok(Self { intervals, horizon })
    }

    /// Number of intervals `m`; the grid holds `m + 1` nodes.
    pub fn intervals(&self) -> usize {
        self.intervals
    }

    pub fn len(&self) -> usize {
        self.intervals + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn node(&self, i: usize) -> f64 {
        if i == self.intervals {
            self.horizon
        } else {
            i as f64 * self.horizon / self.intervals as f64
        }
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.intervals).map(|i| self.node(i)).collect()
    }

    fn check_program(&self, p: &LoadingProgram) -> Result<()> {
        let tol = TIME_SLACK * p.horizon().max(1.0);
        if (self.horizon - p.horizon()).abs() > tol {
            return Err(Error::domain(format!(
                "grid horizon {} s does not match program horizon {} s",
                self.horizon,
                p.horizon()
            )));
        }
        Ok(())
    }
}

/// Stress of a unit-stiffness element with relaxation time `tau`.
#[inline]
pub(crate) fn unit_stress(tau: f64, p: &LoadingProgram, t: f64) -> f64 {
    let half = 0.5 * tau * p.rate;
    let r = p.ramp_end();
    if t <= r {
        -half * (-2.0 * t / tau).exp_m1()
    } else {
        -half * (-2.0 * r / tau).exp_m1() * (-2.0 * (t - r) / tau).exp()
    }
}

/// [`unit_stress`] together with its derivative with respect to `tau`.
#[inline]
pub(crate) fn unit_stress_with_dtau(tau: f64, p: &LoadingProgram, t: f64) -> (f64, f64) {
    let eta = p.rate;
    let half = 0.5 * tau * eta;
    let r = p.ramp_end();
    if t <= r {
        let em1 = (-2.0 * t / tau).exp_m1();
        let value = -half * em1;
        let d = -0.5 * eta * em1 - eta * t / tau * (em1 + 1.0);
        (value, d)
    } else {
        let em1 = (-2.0 * r / tau).exp_m1();
        let a = -em1;
        let b = (-2.0 * (t - r) / tau).exp();
        let tau2 = tau * tau;
        let da = -(2.0 * r / tau2) * (em1 + 1.0);
        let db = (2.0 * (t - r) / tau2) * b;
        (
            half * a * b,
            0.5 * eta * a * b + half * da * b + half * a * db,
        )
    }
}

/// Stress carried by the equilibrium spring.
pub fn spring_stress_at(stiffness: f64, p: &LoadingProgram, t: f64) -> Result<f64> {
    p.check_time(t)?;
    Ok(stiffness * p.strain_unchecked(t))
}

#[inline]
pub(crate) fn total_stress_unchecked(mdl: &MaterialModel, p: &LoadingProgram, t: f64) -> f64 {
    let mut s = mdl.base_stiffness * p.strain_unchecked(t);
    for e in &mdl.elements {
        s += e.stiffness * unit_stress(e.relaxation_time, p, t);
    }
    s
}

/// Total stress (spring plus all Maxwell elements) at time `t`.
pub fn total_stress_at(mdl: &MaterialModel, p: &LoadingProgram, t: f64) -> Result<f64> {
    p.check_time(t)?;
    Ok(total_stress_unchecked(mdl, p, t))
}

/// Total stress at arbitrary times inside the program horizon.
pub fn stress_at_times(mdl: &MaterialModel, p: &LoadingProgram, times: &[f64]) -> Result<Vec<f64>> {
    times.iter().map(|&t| total_stress_at(mdl, p, t)).collect()
}

/// Total stress on every node of `g`.
pub fn stress_series(mdl: &MaterialModel, p: &LoadingProgram, g: &TimeGrid) -> Result<Vec<f64>> {
    g.check_program(p)?;
    stress_at_times(mdl, p, &g.times())
}

/// Per-branch stresses on `g`: index 0 is the equilibrium spring, index
/// `j` the j-th Maxwell element.
pub fn stress_decomposition(
    mdl: &MaterialModel,
    p: &LoadingProgram,
    g: &TimeGrid,
) -> Result<Vec<Vec<f64>>> {
    g.check_program(p)?;
    let times = g.times();
    let mut out = Vec::with_capacity(mdl.len() + 1);
    out.push(
        times
            .iter()
            .map(|&t| spring_stress_at(mdl.base_stiffness, p, t))
            .collect::<Result<Vec<_>>>()?,
    );
    for e in &mdl.elements {
        out.push(
            times
                .iter()
                .map(|&t| e.stress_at(p, t))
                .collect::<Result<Vec<_>>>()?,
        );
    }
    Ok(out)
}

/// Jacobian of the stress at `times` with respect to
/// `(mu, mu_1..mu_n, tau_1..tau_n)`.
pub fn jacobian_at_times(
    mdl: &MaterialModel,
    p: &LoadingProgram,
    times: &[f64],
) -> Result<DMatrix<f64>> {
    for &t in times {
        p.check_time(t)?;
    }
    let n = mdl.len();
    let mut jac = DMatrix::zeros(times.len(), 2 * n + 1);
    for (i, &t) in times.iter().enumerate() {
        jac[(i, 0)] = p.strain_unchecked(t);
        for (j, e) in mdl.elements.iter().enumerate() {
            let (value, dtau) = unit_stress_with_dtau(e.relaxation_time, p, t);
            jac[(i, 1 + j)] = value;
            jac[(i, 1 + n + j)] = e.stiffness * dtau;
        }
    }
    Ok(jac)
}

/// Jacobian of [`stress_series`]; shape `(m + 1) x (2n + 1)`.
pub fn stress_jacobian(
    mdl: &MaterialModel,
    p: &LoadingProgram,
    g: &TimeGrid,
) -> Result<DMatrix<f64>> {
    g.check_program(p)?;
    jacobian_at_times(mdl, p, &g.times())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn fast() -> LoadingProgram {
        LoadingProgram::new(10.0, 20.0, 100.0).unwrap()
    }

    fn slow() -> LoadingProgram {
        LoadingProgram::new(1.0, 20.0, 100.0).unwrap()
    }

    #[test]
    fn program_validation() {
        assert!(LoadingProgram::new(0.0, 20.0, 100.0).is_err());
        assert!(LoadingProgram::new(1.0, -1.0, 100.0).is_err());
        assert!(LoadingProgram::new(1.0, 20.0, 10.0).is_err());
        assert!(LoadingProgram::new(1.0, 20.0, 20.0).is_ok());
    }

    #[test]
    fn strain_values() {
        assert_eq!(fast().strain_at(2.0).unwrap(), 20.0);
        assert_eq!(fast().strain_at(0.0).unwrap(), 0.0);
        assert_eq!(slow().strain_at(50.0).unwrap(), 20.0);
        assert_eq!(slow().strain_at(10.0).unwrap(), 10.0);
        assert!(slow().strain_at(-1.0).is_err());
        assert!(slow().strain_at(100.5).is_err());
    }

    #[test]
    fn inelastic_strain_values() {
        let p = fast();
        let e = MaxwellElement::new(4.0, 0.2).unwrap();
        assert_eq!(e.inelastic_strain_at(&p, 0.0).unwrap(), 0.0);
        // (tau eta / 2) e^{-20} + 20 - 1
        let expected = 1.0 * (-20.0f64).exp() + 19.0;
        assert_relative_eq!(
            e.inelastic_strain_at(&p, 2.0).unwrap(),
            expected,
            max_relative = 1e-14
        );
        let slow_element = MaxwellElement::new(1.0, 25.0).unwrap();
        let p_long = LoadingProgram::new(10.0, 20.0, 1000.0).unwrap();
        assert!((slow_element.inelastic_strain_at(&p_long, 1000.0).unwrap() - 20.0).abs() < 1e-12);
    }

    #[test]
    fn element_stress_matches_reported_maxima() {
        let e2 = MaxwellElement::new(7.0, 3.7).unwrap();
        assert!((e2.stress_at(&fast(), 2.0).unwrap() - 85.57).abs() < 0.02);
        let e3 = MaxwellElement::new(1.0, 25.0).unwrap();
        assert!((e3.stress_at(&slow(), 20.0).unwrap() - 9.9).abs() < 0.1);
        let inert = MaxwellElement::new(0.0, 3.0).unwrap();
        for t in [0.0, 1.0, 2.0, 50.0] {
            assert_eq!(inert.stress_at(&fast(), t).unwrap(), 0.0);
        }
    }

    #[test]
    fn element_rejects_bad_parameters() {
        assert!(MaxwellElement::new(1.0, 0.0).is_err());
        assert!(MaxwellElement::new(1.0, -2.0).is_err());
        assert!(MaxwellElement::new(-1.0, 2.0).is_err());
        assert!(MaxwellElement::new(f64::NAN, 2.0).is_err());
    }

    #[test]
    fn spring_values() {
        assert_eq!(spring_stress_at(10.0, &fast(), 2.0).unwrap(), 200.0);
        assert_eq!(spring_stress_at(10.0, &fast(), 70.0).unwrap(), 200.0);
        assert_eq!(spring_stress_at(10.0, &slow(), 10.0).unwrap(), 100.0);
        assert_eq!(spring_stress_at(0.0, &slow(), 10.0).unwrap(), 0.0);
    }

    #[test]
    fn total_stress_values() {
        let mdl = MaterialModel::reference();
        let s = total_stress_at(&mdl, &fast(), 2.0).unwrap();
        assert!((s - 308.05).abs() < 0.05, "{s}");
        let spring = MaterialModel::new(10.0, vec![]).unwrap();
        assert_eq!(total_stress_at(&spring, &slow(), 5.0).unwrap(), 50.0);
        assert_eq!(total_stress_at(&mdl, &fast(), 0.0).unwrap(), 0.0);
    }

    #[test]
    fn model_sorts_elements() {
        let mdl = MaterialModel::from_pairs(1.0, &[(1.0, 25.0), (4.0, 0.2), (7.0, 3.7)]).unwrap();
        let taus: Vec<f64> = mdl.elements().iter().map(|e| e.relaxation_time()).collect();
        assert_eq!(taus, vec![0.2, 3.7, 25.0]);
        assert_eq!(
            MaterialModel::from_parameters(&mdl.parameters()).unwrap(),
            mdl
        );
    }

    #[test]
    fn model_json_enforces_invariants() {
        let bad =
            r#"{"base_stiffness": 1.0, "elements": [{"stiffness": 1.0, "relaxation_time": 0.0}]}"#;
        assert!(serde_json::from_str::<MaterialModel>(bad).is_err());
        let unsorted = r#"{"base_stiffness": 1.0, "elements": [
            {"stiffness": 1.0, "relaxation_time": 5.0},
            {"stiffness": 2.0, "relaxation_time": 0.5}]}"#;
        let mdl: MaterialModel = serde_json::from_str(unsorted).unwrap();
        assert_eq!(mdl.elements()[0].relaxation_time(), 0.5);
    }

    #[test]
    fn series_shapes() {
        let spring = MaterialModel::new(10.0, vec![]).unwrap();
        let p = slow();
        let g = TimeGrid::uniform(1000, 100.0).unwrap();
        let s = stress_series(&spring, &p, &g).unwrap();
        assert_eq!(s.len(), 1001);
        for (i, t) in g.times().into_iter().enumerate() {
            assert_eq!(s[i], spring_stress_at(10.0, &p, t).unwrap());
        }
        let mismatched = TimeGrid::uniform(10, 50.0).unwrap();
        assert!(stress_series(&spring, &p, &mismatched).is_err());

        // two nodes exactly at 0 and the ramp end
        let mdl = MaterialModel::reference();
        let p_short = LoadingProgram::new(10.0, 20.0, 2.0).unwrap();
        let two = TimeGrid::uniform(1, 2.0).unwrap();
        let s = stress_series(&mdl, &p_short, &two).unwrap();
        let expected = 200.0
            + mdl
                .elements()
                .iter()
                .map(|e| {
                    e.stiffness()
                        * 0.5
                        * e.relaxation_time()
                        * 10.0
                        * (1.0 - (-4.0 / e.relaxation_time()).exp())
                })
                .sum::<f64>();
        assert_eq!(s[0], 0.0);
        assert_relative_eq!(s[1], expected, max_relative = 1e-14);
    }

    #[test]
    fn series_peaks_at_ramp_end() {
        let mdl = MaterialModel::reference();
        let g = TimeGrid::uniform(1000, 100.0).unwrap();
        let s = stress_series(&mdl, &slow(), &g).unwrap();
        let argmax = s
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        assert_eq!(argmax, 200);
    }

    #[test]
    fn decomposition_adds_up() {
        let mdl = MaterialModel::reference();
        let g = TimeGrid::uniform(1000, 100.0).unwrap();
        let parts = stress_decomposition(&mdl, &fast(), &g).unwrap();
        let total = stress_series(&mdl, &fast(), &g).unwrap();
        assert_eq!(parts.len(), 4);
        for i in 0..total.len() {
            let sum: f64 = parts.iter().map(|v| v[i]).sum();
            assert!((sum - total[i]).abs() <= 1e-12 * total[i].abs().max(1.0));
        }
        // node 20 is t = 2 s, the ramp end
        assert!((parts[2][20] - 85.57).abs() < 0.02);

        let spring = MaterialModel::new(10.0, vec![]).unwrap();
        let parts = stress_decomposition(&spring, &fast(), &g).unwrap();
        assert_eq!(parts.len(), 1);
        assert_eq!(parts[0], stress_series(&spring, &fast(), &g).unwrap());
    }

    #[test]
    fn jacobian_special_columns() {
        let g = TimeGrid::uniform(100, 100.0).unwrap();
        let spring = MaterialModel::new(3.0, vec![]).unwrap();
        let jac = stress_jacobian(&spring, &slow(), &g).unwrap();
        assert_eq!(jac.ncols(), 1);
        for (i, t) in g.times().into_iter().enumerate() {
            assert_eq!(jac[(i, 0)], slow().strain_at(t).unwrap());
        }
        let inert = MaterialModel::from_pairs(3.0, &[(0.0, 2.0)]).unwrap();
        let jac = stress_jacobian(&inert, &slow(), &g).unwrap();
        assert!(jac.column(1).iter().any(|v| *v > 0.0));
        assert!(jac.column(2).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn equal_relaxation_times_are_indistinguishable() {
        let g = TimeGrid::uniform(1000, 100.0).unwrap();
        let split = MaterialModel::from_pairs(10.0, &[(3.0, 3.7), (4.0, 3.7)]).unwrap();
        let merged = MaterialModel::from_pairs(10.0, &[(7.0, 3.7)]).unwrap();
        let a = stress_series(&split, &fast(), &g).unwrap();
        let b = stress_series(&merged, &fast(), &g).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() <= 1e-12 * y.abs().max(1.0));
        }
    }

    #[test]
    fn tiny_relaxation_time_stays_finite() {
        let e = MaxwellElement::new(5.0, 1e-8).unwrap();
        for p in [fast(), slow()] {
            let s = e.stress_at(&p, 100.0).unwrap();
            assert!(s.is_finite() && s >= 0.0);
            let (_, d) = unit_stress_with_dtau(1e-8, &p, 100.0);
            assert!(d.is_finite());
            assert!(e.inelastic_strain_at(&p, 100.0).unwrap().is_finite());
        }
    }

    fn next_up(x: f64) -> f64 {
        f64::from_bits(x.to_bits() + 1)
    }

    fn arb_case() -> impl Strategy<Value = (f64, f64, f64, f64)> {
        // (mu, tau, rate, max_strain)
        (0.01f64..50.0, -2.0f64..3.0, 0.1f64..20.0, 1.0f64..40.0)
            .prop_map(|(mu, lt, eta, eps)| (mu, 10f64.powf(lt), eta, eps))
    }

    proptest! {
        #[test]
        fn branches_meet_at_ramp_end((mu, tau, eta, eps) in arb_case()) {
            let r = eps / eta;
            let p = LoadingProgram::new(eta, eps, r * 3.0).unwrap();
            let half = 0.5 * tau * eta;
            let ramp_stress = mu * half * (1.0 - (-2.0 * r / tau).exp());
            let hold_stress = mu * half * (-(-2.0 * r / tau).exp_m1()) * (-2.0 * 0.0 / tau).exp();
            prop_assert!((ramp_stress - hold_stress).abs() <= 1e-12 * ramp_stress.abs().max(1e-300));
            // just after the kink the hold branch is used
            let before = MaxwellElement::new(mu, tau).unwrap().stress_at(&p, r).unwrap();
            let after = MaxwellElement::new(mu, tau).unwrap().stress_at(&p, next_up(r)).unwrap();
            // the hold branch decays at relative rate 2/tau
            let slack = 1e-12 + 4.0 * (next_up(r) - r) / tau;
            prop_assert!((before - after).abs() <= slack * before.abs().max(1e-300));
            let eb = MaxwellElement::new(mu, tau).unwrap().inelastic_strain_at(&p, r).unwrap();
            let ea = MaxwellElement::new(mu, tau).unwrap().inelastic_strain_at(&p, next_up(r)).unwrap();
            prop_assert!((eb - ea).abs() <= slack * eps);
        }

        #[test]
        fn stresses_nonnegative_and_hold_decays((mu, tau, eta, eps) in arb_case(), frac in 0.0f64..1.0) {
            let r = eps / eta;
            let p = LoadingProgram::new(eta, eps, r + 50.0 * tau).unwrap();
            let e = MaxwellElement::new(mu, tau).unwrap();
            let t = frac * p.horizon();
            let s = e.stress_at(&p, t).unwrap();
            prop_assert!(s >= 0.0);
            let ie = e.inelastic_strain_at(&p, t).unwrap();
            prop_assert!(ie >= -1e-12 * eps && ie <= p.strain_at(t).unwrap() + 1e-12 * eps);
            // strictly decreasing while the value is representable
            let t1 = r + 0.1 * tau;
            let t2 = r + 0.2 * tau;
            prop_assert!(e.stress_at(&p, t2).unwrap() < e.stress_at(&p, t1).unwrap());
        }
    }
}
