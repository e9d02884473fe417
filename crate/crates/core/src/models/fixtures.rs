//! Small test systems.

use crate::error::{Error, Result};
use crate::model::{ModelOutputSpec, ParametricModel};
use crate::ode::{estimate_period, integrate, linspace, OdeSystem, Tolerances};

/// Harmonic oscillator `ẋ = ω·v, v̇ = −ω·x` with `θ = (ω)`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LinearOscillator;

impl OdeSystem for LinearOscillator {
    fn dim(&self) -> usize {
        2
    }

    fn rhs(&self, _t: f64, x: &[f64], theta: &[f64], dx: &mut [f64]) {
        dx[0] = theta[0] * x[1];
        dx[1] = -theta[0] * x[0];
    }

    fn initial_state(&self, _theta: &[f64]) -> Vec<f64> {
        vec![1.0, 0.0]
    }
}

/// Period of the oscillator, 2π/ω, measured from a simulated trajectory
/// spanning `cycles` nominal periods at ω = 1.
pub fn linear_oscillator_period(cycles: f64) -> ParametricModel {
    ParametricModel::new("linear-oscillator", 1, ModelOutputSpec::scalar("period"), move |theta| {
        if !(theta[0] > 0.0) {
            return Err(Error::InvalidArgument("rate must be positive".into()));
        }
        let horizon = cycles * std::f64::consts::TAU / theta[0];
        let times = linspace(0.0, horizon, (cycles * 200.0) as usize + 1);
        let traj = integrate(&LinearOscillator, theta, (0.0, horizon), &times, Tolerances::new(1e-10, 1e-12))?;
        Ok(vec![estimate_period(&traj, 0, 0.2, 0.01)?.period])
    })
}

pub fn oscillator_period(rate: f64) -> Result<f64> {
    Ok(linear_oscillator_period(12.0).evaluate(&[rate])?[0])
}
