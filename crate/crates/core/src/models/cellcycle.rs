//! Six-variable cyclin/Cdk skeleton oscillator with the cell-cycle period as
//! a scalar QOI.
//!
//! States are `(Md, E2F, Me, Ma, Mb, Cdc20)`. The period is read from peaks of
//! Mb. Default parameter values ship in `data/cellcycle_defaults.txt`. Parts of
//! the sampling box are stiff, so integration uses the implicit solver.

use std::path::Path;

use crate::error::{Error, Result};
use crate::io::KeyValues;
use crate::model::{ModelOutputSpec, ParametricModel};
use crate::ode::{estimate_period, integrate_stiff, linspace, OdeSystem, Tolerances};

pub const CELLCYCLE_NAMES: [&str; 24] = [
    "vsd", "Kgf", "Vdd", "Kdd", "V1e2f", "K1e2f", "V2e2f", "K2e2f", "vse", "Vde", "Kde", "vsa", "Vda", "Kda", "vsb",
    "Vdb", "Kdb", "V1cdc20", "K1cdc20", "V2cdc20", "K2cdc20", "GF", "E2Ftot", "Cdc20tot",
];
pub const MB_INDEX: usize = 4;
pub const DEFAULTS_TEXT: &str = include_str!("../../data/cellcycle_defaults.txt");

/// Parse a `name = value` defaults file into parameter order.
pub fn parse_defaults(text: &str) -> Result<Vec<f64>> {
    let kv = KeyValues::parse(text)?;
    for (k, _) in &kv.entries {
        if !CELLCYCLE_NAMES.contains(&k.as_str()) {
            return Err(Error::InvalidArgument(format!("unknown cell-cycle parameter '{k}'")));
        }
    }
    CELLCYCLE_NAMES
        .iter()
        .map(|name| {
            let raw = kv.get(name).ok_or_else(|| Error::InvalidArgument(format!("defaults file lacks '{name}'")))?;
            let v: f64 = raw.parse().map_err(|_| Error::InvalidArgument(format!("'{name}' = '{raw}' is not a number")))?;
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("'{name}' must be positive, got {v}")));
            }
            Ok(v)
        })
        .collect()
}

pub fn bundled_defaults() -> Vec<f64> {
    parse_defaults(DEFAULTS_TEXT).expect("bundled cell-cycle defaults parse")
}

pub fn load_defaults(path: &Path) -> Result<Vec<f64>> {
    parse_defaults(&std::fs::read_to_string(path)?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellCycleSystem {
    pub x0: [f64; 6],
}

impl Default for CellCycleSystem {
    fn default() -> Self {
        Self { x0: [0.01; 6] }
    }
}

fn mm(v: f64, k: f64) -> f64 {
    v / (k + v)
}

impl OdeSystem for CellCycleSystem {
    fn dim(&self) -> usize {
        6
    }

    fn rhs(&self, _t: f64, x: &[f64], p: &[f64], dx: &mut [f64]) {
        let [vsd, kgf, vdd, kdd, v1e2f, k1e2f, v2e2f, k2e2f, vse, vde, kde, vsa, vda, kda, vsb, vdb, kdb, v1cdc20, k1cdc20, v2cdc20, k2cdc20, gf, e2ftot, cdc20tot] =
            p[..24].try_into().unwrap();
        let (md, e2f, me, ma, mb, cdc20) = (x[0], x[1], x[2], x[3], x[4], x[5]);
        dx[0] = vsd * mm(gf, kgf) - vdd * mm(md, kdd);
        dx[1] = v1e2f * mm(e2ftot - e2f, k1e2f) * (md + me) - v2e2f * mm(e2f, k2e2f) * ma;
        dx[2] = vse * e2f - vde * ma * mm(me, kde);
        dx[3] = vsa * e2f - vda * cdc20 * mm(ma, kda);
        dx[4] = vsb * ma - vdb * cdc20 * mm(mb, kdb);
        dx[5] = v1cdc20 * mb * mm(cdc20tot - cdc20, k1cdc20) - v2cdc20 * mm(cdc20, k2cdc20);
    }

    fn initial_state(&self, _theta: &[f64]) -> Vec<f64> {
        self.x0.to_vec()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellCycleOptions {
    /// Fixed horizon; otherwise `horizon_factor` times the period measured at
    /// θ̂ on a long coarse run.
    pub horizon: Option<f64>,
    pub horizon_factor: f64,
    /// Dense-output samples per time unit for peak finding.
    pub samples_per_unit: f64,
    pub transient_fraction: f64,
    pub periodicity_cv_tol: f64,
    pub tolerances: Tolerances,
}

impl Default for CellCycleOptions {
    fn default() -> Self {
        Self {
            horizon: None,
            horizon_factor: 20.0,
            samples_per_unit: 20.0,
            transient_fraction: 0.5,
            periodicity_cv_tol: 0.05,
            tolerances: Tolerances::default(),
        }
    }
}

const COARSE_HORIZON: f64 = 2000.0;

/// Period of Mb at `theta` over `[0, horizon]`.
pub fn cellcycle_period(theta: &[f64], horizon: f64, opts: &CellCycleOptions) -> Result<f64> {
    if theta.len() != 24 {
        return Err(Error::DimensionMismatch { expected: 24, got: theta.len() });
    }
    if let Some(j) = theta.iter().position(|v| !(*v > 0.0)) {
        return Err(Error::InvalidArgument(format!("'{}' must be positive", CELLCYCLE_NAMES[j])));
    }
    let count = (horizon * opts.samples_per_unit).ceil() as usize + 1;
    let times = linspace(0.0, horizon, count);
    let traj = integrate_stiff(&CellCycleSystem::default(), theta, (0.0, horizon), &times, opts.tolerances)?;
    Ok(estimate_period(&traj, MB_INDEX, opts.transient_fraction, opts.periodicity_cv_tol)?.period)
}

pub fn cellcycle(theta_hat: &[f64], opts: &CellCycleOptions) -> Result<ParametricModel> {
    let horizon = match opts.horizon {
        Some(h) if h > 0.0 => h,
        Some(h) => return Err(Error::InvalidArgument(format!("horizon {h}"))),
        None => opts.horizon_factor * cellcycle_period(theta_hat, COARSE_HORIZON, opts)?,
    };
    let opts = opts.clone();
    Ok(ParametricModel::new("cellcycle", 24, ModelOutputSpec::scalar("period"), move |theta| {
        Ok(vec![cellcycle_period(theta, horizon, &opts)?])
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_parse_in_order() {
        let d = bundled_defaults();
        assert_eq!(d.len(), 24);
        assert!(d.iter().all(|v| *v > 0.0));
    }

    #[test]
    fn defaults_errors() {
        assert!(parse_defaults("vsd = 1").is_err());
        let mut text = DEFAULTS_TEXT.to_string();
        text.push_str("bogus = 1\n");
        assert!(parse_defaults(&text).is_err());
    }
}
