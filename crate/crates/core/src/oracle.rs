//! Numerical reference for the forward model.
//!
//! Integrates the damper evolution law `d/dt eps_i = (eps - eps_i) / (tau / 2)`
//! with the trapezoidal (Crank-Nicolson) rule and rebuilds stresses from the
//! integrated inelastic strains. Nothing here calls the closed forms in
//! [`crate::rheology`]; the two routes are meant to be compared against each
//! other in tests.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rheology::{LoadingProgram, MaterialModel, MaxwellElement, TimeGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Trapezoidal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OdeConfig {
    pub step: f64,
    pub scheme: Scheme,
}

impl OdeConfig {
    pub fn trapezoidal(step: f64) -> Self {
        Self {
            step,
            scheme: Scheme::Trapezoidal,
        }
    }

    fn check(&self, tau: f64) -> Result<()> {
        if !(self.step.is_finite() && self.step > 0.0) {
            return Err(Error::config(format!(
                "step must be positive, got {}",
                self.step
            )));
        }
        if self.step > tau / 10.0 {
            return Err(Error::config(format!(
                "step {} s too coarse for relaxation time {tau} s (needs <= tau/10)",
                self.step
            )));
        }
        Ok(())
    }
}

/// Piecewise-linear strain written out independently of `LoadingProgram`'s
/// own evaluation.
fn applied_strain(p: &LoadingProgram, t: f64) -> f64 {
    (p.rate() * t).min(p.max_strain())
}

/// One trapezoidal step of length `h` from `(t0, x0)`.
fn trapezoid_step(p: &LoadingProgram, rate_const: f64, t0: f64, h: f64, x0: f64) -> f64 {
    let k = 0.5 * h * rate_const;
    let f0 = applied_strain(p, t0);
    let f1 = applied_strain(p, t0 + h);
    (x0 * (1.0 - k) + k * (f0 + f1)) / (1.0 + k)
}

/// Integrates the inelastic strain of `e` and samples it on `g`.
pub fn evolve_inelastic(
    e: &MaxwellElement,
    p: &LoadingProgram,
    g: &TimeGrid,
    c: &OdeConfig,
) -> Result<Vec<f64>> {
    let tau = e.relaxation_time();
    c.check(tau)?;
    let spacing = g.horizon() / g.intervals() as f64;
    let substeps = (spacing / c.step).round();
    if substeps < 1.0 || (substeps * c.step - spacing).abs() > 1e-9 * spacing {
        return Err(Error::config(format!(
            "step {} s does not divide grid spacing {spacing} s",
            c.step
        )));
    }
    let substeps = substeps as usize;
    let rate_const = 2.0 / tau;
    let kink = p.ramp_end();

    let times = g.times();
    let mut out = Vec::with_capacity(times.len());
    let mut x = 0.0;
    out.push(x);
    for w in times.windows(2) {
        let (a, b) = (w[0], w[1]);
        let h = (b - a) / substeps as f64;
        for k in 0..substeps {
            let t0 = a + k as f64 * h;
            let t1 = if k + 1 == substeps { b } else { t0 + h };
            if t0 < kink && kink < t1 {
                x = trapezoid_step(p, rate_const, t0, kink - t0, x);
                x = trapezoid_step(p, rate_const, kink, t1 - kink, x);
            } else {
                x = trapezoid_step(p, rate_const, t0, t1 - t0, x);
            }
        }
        out.push(x);
    }
    Ok(out)
}

/// Total stress on `g` assembled from integrated inelastic strains.
pub fn stress_series_numeric(
    mdl: &MaterialModel,
    p: &LoadingProgram,
    g: &TimeGrid,
    c: &OdeConfig,
) -> Result<Vec<f64>> {
    if (g.horizon() - p.horizon()).abs() > 1e-12 * p.horizon().max(1.0) {
        return Err(Error::domain("grid horizon does not match program horizon"));
    }
    let times = g.times();
    let strain: Vec<f64> = times.iter().map(|&t| applied_strain(p, t)).collect();
    let mut sigma: Vec<f64> = strain.iter().map(|s| mdl.base_stiffness() * s).collect();
    for e in mdl.elements() {
        let inelastic = evolve_inelastic(e, p, g, c)?;
        for i in 0..sigma.len() {
            sigma[i] += e.stiffness() * (strain[i] - inelastic[i]);
        }
    }
    Ok(sigma)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_coarse_or_misaligned_steps() {
        let p = LoadingProgram::new(1.0, 20.0, 100.0).unwrap();
        let g = TimeGrid::uniform(1000, 100.0).unwrap();
        let e = MaxwellElement::new(1.0, 0.2).unwrap();
        assert!(evolve_inelastic(&e, &p, &g, &OdeConfig::trapezoidal(0.05)).is_err());
        assert!(evolve_inelastic(&e, &p, &g, &OdeConfig::trapezoidal(0.003)).is_err());
        assert!(evolve_inelastic(&e, &p, &g, &OdeConfig::trapezoidal(-1.0)).is_err());
    }

    #[test]
    fn instant_plateau_gives_exponential_approach() {
        // ramp shorter than one substep
        let p = LoadingProgram::new(1e9, 20.0, 10.0).unwrap();
        let g = TimeGrid::uniform(100, 10.0).unwrap();
        let tau = 2.0;
        let e = MaxwellElement::new(1.0, tau).unwrap();
        let x = evolve_inelastic(&e, &p, &g, &OdeConfig::trapezoidal(1e-3)).unwrap();
        for (i, t) in g.times().into_iter().enumerate() {
            let exact = 20.0 * (1.0 - (-2.0 * t / tau).exp());
            assert!((x[i] - exact).abs() < 1e-5, "t={t}: {} vs {exact}", x[i]);
        }
    }

    #[test]
    fn frozen_damper() {
        let p = LoadingProgram::new(1.0, 20.0, 100.0).unwrap();
        let g = TimeGrid::uniform(100, 100.0).unwrap();
        let e = MaxwellElement::new(1.0, 1e6).unwrap();
        let x = evolve_inelastic(&e, &p, &g, &OdeConfig::trapezoidal(1e-2)).unwrap();
        assert!(x.iter().all(|v| v.abs() < 1e-2));
    }

    #[test]
    fn spring_only_and_inert_element() {
        let p = LoadingProgram::new(1.0, 20.0, 100.0).unwrap();
        let g = TimeGrid::uniform(100, 100.0).unwrap();
        let c = OdeConfig::trapezoidal(1e-2);
        let spring = MaterialModel::new(10.0, vec![]).unwrap();
        let expected: Vec<f64> = g.times().iter().map(|&t| 10.0 * t.min(20.0)).collect();
        assert_eq!(
            stress_series_numeric(&spring, &p, &g, &c).unwrap(),
            expected
        );
        let inert = MaterialModel::from_pairs(10.0, &[(0.0, 3.0)]).unwrap();
        assert_eq!(stress_series_numeric(&inert, &p, &g, &c).unwrap(), expected);
    }
}
