//! SIWR waterborne-disease model observed as reported cases y = I/k.
//!
//! Parameters are `(beta_I, beta_W, xi, k)`; γ is fixed. States are
//! `(S, I, R, W)` as population fractions.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::model::{ModelOutputSpec, ParametricModel};
use crate::ode::{integrate, linspace, OdeSystem, Tolerances};

pub const SIWR_NAMES: [&str; 4] = ["beta_I", "beta_W", "xi", "k"];
pub const SIWR_THETA_HAT: [f64; 4] = [0.256, 1.21, 0.00756, 1.1212e-5];
pub const SIWR_GAMMA: f64 = 0.25;
/// ξ multiplier of the fast-decay regime.
pub const FAST_XI_FACTOR: f64 = 5000.0;

pub fn siwr_fast_theta_hat() -> [f64; 4] {
    let mut t = SIWR_THETA_HAT;
    t[2] *= FAST_XI_FACTOR;
    t
}

#[derive(Debug, Clone, PartialEq)]
pub struct SiwrOptions {
    pub gamma: f64,
    /// Reported cases at t = 0; I(0) = y0·k.
    pub y0: f64,
    pub w0: f64,
    pub n_obs: usize,
    /// The epidemic ends when I first drops below this fraction of its peak.
    pub end_fraction: f64,
    /// Explicit schedule; otherwise `n_obs` even points from 0 to the end of
    /// the epidemic at θ̂.
    pub observation_times: Option<Vec<f64>>,
    pub tolerances: Tolerances,
}

impl Default for SiwrOptions {
    fn default() -> Self {
        Self {
            gamma: SIWR_GAMMA,
            y0: 1.0,
            w0: 0.0,
            n_obs: 20,
            end_fraction: 0.01,
            observation_times: None,
            tolerances: Tolerances::new(1e-11, 1e-17),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SiwrSystem {
    pub gamma: f64,
    pub y0: f64,
    pub w0: f64,
}

impl OdeSystem for SiwrSystem {
    fn dim(&self) -> usize {
        4
    }

    fn rhs(&self, _t: f64, x: &[f64], theta: &[f64], dx: &mut [f64]) {
        let (s, i, w) = (x[0], x[1], x[3]);
        let force = s * (theta[0] * i + theta[1] * w);
        dx[0] = -force;
        dx[1] = force - self.gamma * i;
        dx[2] = self.gamma * i;
        dx[3] = theta[2] * (i - w);
    }

    fn initial_state(&self, theta: &[f64]) -> Vec<f64> {
        let i0 = self.y0 * theta[3];
        vec![1.0 - i0, i0, 0.0, self.w0]
    }

    fn observe(&self, x: &[f64], theta: &[f64]) -> Vec<f64> {
        vec![x[1] / theta[3]]
    }
}

fn check_theta(theta: &[f64]) -> Result<()> {
    if !(theta[3] > 0.0) {
        return Err(Error::InvalidArgument(format!("SIWR needs k > 0, got {}", theta[3])));
    }
    if theta[2] < 0.0 {
        return Err(Error::InvalidArgument(format!("SIWR needs xi >= 0, got {}", theta[2])));
    }
    Ok(())
}

/// Time at which I first falls below `end_fraction` of its peak after the
/// peak, found on a grid of spacing `horizon / 4000` with the horizon doubled
/// until the decline is seen.
pub fn epidemic_end(system: &SiwrSystem, theta: &[f64], end_fraction: f64, tol: Tolerances) -> Result<f64> {
    check_theta(theta)?;
    let mut horizon = 400.0;
    while horizon <= 1e6 {
        let times = linspace(0.0, horizon, 4001);
        let traj = integrate(system, theta, (0.0, horizon), &times, tol)?;
        let infected = traj.component(1);
        let (peak_at, peak) = infected
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (j, v)| if *v > acc.1 { (j, *v) } else { acc });
        if let Some(j) = (peak_at..infected.len()).find(|&j| infected[j] < end_fraction * peak) {
            return Ok(times[j]);
        }
        horizon *= 2.0;
    }
    Err(Error::InvalidArgument("epidemic does not end within 1e6 time units".into()))
}

/// Model whose output is `y = I/k` at the observation schedule.
pub fn siwr(theta_hat: &[f64], opts: &SiwrOptions) -> Result<ParametricModel> {
    if theta_hat.len() != 4 {
        return Err(Error::DimensionMismatch { expected: 4, got: theta_hat.len() });
    }
    let system = SiwrSystem { gamma: opts.gamma, y0: opts.y0, w0: opts.w0 };
    let times = match &opts.observation_times {
        Some(t) => t.clone(),
        None => {
            if opts.n_obs < 2 {
                return Err(Error::InvalidArgument("SIWR needs at least two observations".into()));
            }
            let end = epidemic_end(&system, theta_hat, opts.end_fraction, opts.tolerances)?;
            linspace(0.0, end, opts.n_obs)
        }
    };
    let spec = ModelOutputSpec::time_series("y", times.clone())?;
    let t_end = *times.last().unwrap();
    let t_span = (0.0_f64.min(times[0]), if t_end > 0.0 { t_end } else { 1.0 });
    let tol = opts.tolerances;
    let times = Arc::new(times);
    Ok(ParametricModel::new("siwr", 4, spec, move |theta| {
        check_theta(theta)?;
        let traj = integrate(&system, theta, t_span, &times, tol)?;
        Ok(traj.observations.iter().map(|o| o[0]).collect())
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_transmission_decays_at_gamma() {
        let opts = SiwrOptions { observation_times: Some(vec![0.0, 2.0, 8.0]), ..Default::default() };
        let m = siwr(&SIWR_THETA_HAT, &opts).unwrap();
        let y = m.evaluate(&[0.0, 0.0, 0.00756, 1.1212e-5]).unwrap();
        for (t, v) in [0.0_f64, 2.0, 8.0].iter().zip(&y) {
            assert!((v - (-0.25 * t).exp()).abs() < 1e-9, "{t} {v}");
        }
    }

    #[test]
    fn default_schedule_has_single_peak() {
        let m = siwr(&SIWR_THETA_HAT, &SiwrOptions::default()).unwrap();
        let times = m.output_spec().observation_times().unwrap().to_vec();
        assert_eq!(times.len(), 20);
        let y = m.evaluate(&SIWR_THETA_HAT).unwrap();
        let peak = y.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let at = y.iter().position(|v| *v == peak).unwrap();
        assert!(at > 0 && at < 19);
        assert!(y[..at].windows(2).all(|w| w[1] > w[0]));
        assert!(y[at..].windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn rejects_nonpositive_k() {
        let opts = SiwrOptions { observation_times: Some(vec![0.0, 1.0]), ..Default::default() };
        let m = siwr(&SIWR_THETA_HAT, &opts).unwrap();
        assert!(m.evaluate(&[0.256, 1.21, 0.00756, 0.0]).is_err());
    }
}
