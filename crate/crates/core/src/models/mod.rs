//! Built-in models and their registry.

mod cellcycle;
mod examples;
mod fixtures;
mod siwr;

pub use cellcycle::{
    bundled_defaults, cellcycle, cellcycle_period, load_defaults, parse_defaults, CellCycleOptions, CellCycleSystem,
    CELLCYCLE_NAMES, DEFAULTS_TEXT, MB_INDEX,
};
pub use examples::{example1, example2, example3};
pub use fixtures::{linear_oscillator_period, oscillator_period, LinearOscillator};
pub use siwr::{
    epidemic_end, siwr, siwr_fast_theta_hat, SiwrOptions, SiwrSystem, FAST_XI_FACTOR, SIWR_GAMMA, SIWR_NAMES,
    SIWR_THETA_HAT,
};

use crate::error::{Error, Result};
use crate::model::{ParameterSpace, ParametricModel};

/// Model-specific knobs consumed by the registry builders.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ModelSettings {
    pub siwr: SiwrOptions,
    pub cellcycle: CellCycleOptions,
}

type Builder = fn(&ModelSettings, &[f64]) -> Result<ParametricModel>;

#[derive(Clone)]
pub struct ModelRegistryEntry {
    pub name: &'static str,
    pub doc: &'static str,
    pub parameter_names: Vec<String>,
    pub default_theta_hat: Vec<f64>,
    pub default_space: ParameterSpace,
    /// Central-difference relative step suited to the model's evaluation noise.
    pub recommended_fd_step: f64,
    builder: Builder,
}

impl std::fmt::Debug for ModelRegistryEntry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ModelRegistryEntry").field("name", &self.name).field("doc", &self.doc).finish()
    }
}

impl ModelRegistryEntry {
    /// Instantiate the model. `theta_hat` matters for models whose observation
    /// schedule or horizon is derived from the nominal point.
    pub fn build(&self, settings: &ModelSettings, theta_hat: &[f64]) -> Result<ParametricModel> {
        if theta_hat.len() != self.parameter_names.len() {
            return Err(Error::DimensionMismatch { expected: self.parameter_names.len(), got: theta_hat.len() });
        }
        (self.builder)(settings, theta_hat)
    }
}

fn names(list: &[&str]) -> Vec<String> {
    list.iter().map(|s| s.to_string()).collect()
}

fn box_space(list: &[&str], lower: Vec<f64>, upper: Vec<f64>) -> ParameterSpace {
    ParameterSpace::new(names(list), lower, upper).expect("static bounds are valid")
}

pub fn registry() -> Vec<ModelRegistryEntry> {
    let cc = bundled_defaults();
    vec![
        ModelRegistryEntry {
            name: "example1",
            doc: "exp(theta1 + theta2), scalar; box [0,1]x[0,2]",
            parameter_names: names(&["theta1", "theta2"]),
            default_theta_hat: vec![0.3, 1.0],
            default_space: box_space(&["theta1", "theta2"], vec![0.0, 0.0], vec![1.0, 2.0]),
            recommended_fd_step: crate::sensitivity::DEFAULT_RELATIVE_STEP,
            builder: |_, _| Ok(example1()),
        },
        ModelRegistryEntry {
            name: "example2",
            doc: "exp(theta1 * theta2), scalar; box [0,1]x[0,2]",
            parameter_names: names(&["theta1", "theta2"]),
            default_theta_hat: vec![0.3, 1.0],
            default_space: box_space(&["theta1", "theta2"], vec![0.0, 0.0], vec![1.0, 2.0]),
            recommended_fd_step: crate::sensitivity::DEFAULT_RELATIVE_STEP,
            builder: |_, _| Ok(example2()),
        },
        ModelRegistryEntry {
            name: "example3",
            doc: "(theta1 + ln(1 + theta2), theta1 + theta2); box [0,2]x[0,2]",
            parameter_names: names(&["theta1", "theta2"]),
            default_theta_hat: vec![1.95, 0.05],
            default_space: box_space(&["theta1", "theta2"], vec![0.0, 0.0], vec![2.0, 2.0]),
            recommended_fd_step: crate::sensitivity::DEFAULT_RELATIVE_STEP,
            builder: |_, _| Ok(example3()),
        },
        ModelRegistryEntry {
            name: "siwr",
            doc: "SIWR epidemic, y = I/k at an even schedule over the epidemic; 50-150% box",
            parameter_names: names(&SIWR_NAMES),
            default_theta_hat: SIWR_THETA_HAT.to_vec(),
            default_space: ParameterSpace::relative_box(names(&SIWR_NAMES), &SIWR_THETA_HAT, 0.5)
                .expect("positive nominal values"),
            recommended_fd_step: 1e-4,
            builder: |s, t| siwr(t, &s.siwr),
        },
        ModelRegistryEntry {
            name: "cellcycle",
            doc: "six-state cyclin/Cdk oscillator, period of Mb; 50-150% box around bundled defaults",
            parameter_names: names(&CELLCYCLE_NAMES),
            default_space: ParameterSpace::relative_box(names(&CELLCYCLE_NAMES), &cc, 0.5)
                .expect("positive defaults"),
            default_theta_hat: cc,
            recommended_fd_step: 1e-3,
            builder: |s, t| cellcycle(t, &s.cellcycle),
        },
    ]
}

pub fn lookup(name: &str) -> Result<ModelRegistryEntry> {
    registry().into_iter().find(|e| e.name == name).ok_or_else(|| {
        let known: Vec<&str> = registry().iter().map(|e| e.name).collect();
        Error::InvalidArgument(format!("unknown model '{name}' (known: {})", known.join(", ")))
    })
}
