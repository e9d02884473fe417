//! Parametric model abstraction, parameter spaces and QOI wrappers.

use std::collections::HashSet;
use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Density over the parameter box used when sampling.
#[derive(Debug, Clone, PartialEq)]
pub enum Density {
    Uniform,
    /// Independent normal per dimension, truncated to the box by rejection.
    Gaussian { mean: Vec<f64>, stdev: Vec<f64> },
}

/// Coordinate system handed to sampling and summary consumers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scaling {
    Raw,
    /// Each coordinate mapped affinely onto `[-1, 1]`.
    CenteredUnit,
}

impl Scaling {
    pub fn as_str(&self) -> &'static str {
        match self {
            Scaling::Raw => "raw",
            Scaling::CenteredUnit => "centered-unit",
        }
    }
}

/// A named, bounded parameter box with a sampling density.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSpace {
    names: Vec<String>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    density: Density,
    scaling: Scaling,
}

impl ParameterSpace {
    pub fn new(names: Vec<String>, lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let n = names.len();
        if lower.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: lower.len() });
        }
        if upper.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: upper.len() });
        }
        let mut seen = HashSet::new();
        for name in &names {
            if name.is_empty() {
                return Err(Error::InvalidArgument("empty parameter name".into()));
            }
            if !seen.insert(name.as_str()) {
                return Err(Error::InvalidArgument(format!("duplicate parameter name '{name}'")));
            }
        }
        for i in 0..n {
            if !(lower[i].is_finite() && upper[i].is_finite()) {
                return Err(Error::NonFinite(format!("bounds of '{}'", names[i])));
            }
            if lower[i] >= upper[i] {
                return Err(Error::InvalidArgument(format!(
                    "lower bound {} not below upper bound {} for '{}'",
                    lower[i], upper[i], names[i]
                )));
            }
        }
        Ok(Self { names, lower, upper, density: Density::Uniform, scaling: Scaling::Raw })
    }

    /// Box spanning `[(1-frac)·θ̂, (1+frac)·θ̂]` in each coordinate, e.g. `frac = 0.5`
    /// for the 50–150% box. Zero-valued nominals have no relative box and are rejected.
    pub fn relative_box(names: Vec<String>, theta_hat: &[f64], frac: f64) -> Result<Self> {
        if !(frac > 0.0 && frac.is_finite()) {
            return Err(Error::InvalidArgument(format!("relative box fraction {frac}")));
        }
        let mut lower = Vec::with_capacity(theta_hat.len());
        let mut upper = Vec::with_capacity(theta_hat.len());
        for &v in theta_hat {
            let a = v * (1.0 - frac);
            let b = v * (1.0 + frac);
            lower.push(a.min(b));
            upper.push(a.max(b));
        }
        Self::new(names, lower, upper)
    }

    pub fn with_density(mut self, density: Density) -> Result<Self> {
        if let Density::Gaussian { mean, stdev } = &density {
            let n = self.dim();
            if mean.len() != n {
                return Err(Error::DimensionMismatch { expected: n, got: mean.len() });
            }
            if stdev.len() != n {
                return Err(Error::DimensionMismatch { expected: n, got: stdev.len() });
            }
            if let Some(s) = stdev.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
                return Err(Error::InvalidArgument(format!("gaussian stdev must be > 0, got {s}")));
            }
        }
        self.density = density;
        Ok(self)
    }

    pub fn with_scaling(mut self, scaling: Scaling) -> Self {
        self.scaling = scaling;
        self
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn density(&self) -> &Density {
        &self.density
    }

    pub fn scaling(&self) -> Scaling {
        self.scaling
    }

    pub fn contains(&self, theta: &[f64]) -> bool {
        theta.len() == self.dim()
            && theta
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(t, (lo, hi))| *t >= *lo && *t <= *hi)
    }

    fn check_in_bounds(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: theta.len() });
        }
        for (i, t) in theta.iter().enumerate() {
            if !(*t >= self.lower[i] && *t <= self.upper[i]) {
                return Err(Error::OutOfBounds(format!(
                    "{} = {} outside [{}, {}]",
                    self.names[i], t, self.lower[i], self.upper[i]
                )));
            }
        }
        Ok(())
    }

    /// Affine map of the box onto `[-1, 1]ⁿ`.
    pub fn scale_to_unit(&self, theta: &[f64]) -> Result<Vec<f64>> {
        self.check_in_bounds(theta)?;
        Ok(theta
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(t, (lo, hi))| (2.0 * t - (lo + hi)) / (hi - lo))
            .collect())
    }

    /// Inverse of [`scale_to_unit`](Self::scale_to_unit).
    pub fn unscale_from_unit(&self, unit: &[f64]) -> Result<Vec<f64>> {
        if unit.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: unit.len() });
        }
        if let Some((i, u)) = unit.iter().enumerate().find(|(_, u)| !(u.abs() <= 1.0)) {
            return Err(Error::OutOfBounds(format!("unit coordinate {i} = {u} outside [-1, 1]")));
        }
        Ok(unit
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(u, (lo, hi))| 0.5 * (lo + hi) + 0.5 * u * (hi - lo))
            .collect())
    }

    /// Coordinates in the space's configured scaling.
    pub fn to_scaled(&self, theta: &[f64]) -> Result<Vec<f64>> {
        match self.scaling {
            Scaling::Raw => Ok(theta.to_vec()),
            Scaling::CenteredUnit => self.scale_to_unit(theta),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputKind {
    Scalar,
    Vector(usize),
}

/// Shape and labelling of a model's output.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelOutputSpec {
    kind: OutputKind,
    observation_times: Option<Vec<f64>>,
    labels: Vec<String>,
}

impl ModelOutputSpec {
    pub fn scalar(label: impl Into<String>) -> Self {
        Self { kind: OutputKind::Scalar, observation_times: None, labels: vec![label.into()] }
    }

    pub fn vector(labels: Vec<String>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::InvalidArgument("vector output needs m >= 1".into()));
        }
        Ok(Self { kind: OutputKind::Vector(labels.len()), observation_times: None, labels })
    }

    /// Vector output sampled at observation times; labels are generated as `y@t`.
    pub fn time_series(prefix: &str, times: Vec<f64>) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::InvalidArgument("observation schedule is empty".into()));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument("observation times must be strictly increasing".into()));
        }
        let labels = times.iter().map(|t| format!("{prefix}@{t}")).collect();
        Ok(Self { kind: OutputKind::Vector(times.len()), observation_times: Some(times), labels })
    }

    pub fn kind(&self) -> OutputKind {
        self.kind
    }

    pub fn m(&self) -> usize {
        match self.kind {
            OutputKind::Scalar => 1,
            OutputKind::Vector(m) => m,
        }
    }

    pub fn observation_times(&self) -> Option<&[f64]> {
        self.observation_times.as_deref()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }
}

pub type Evaluator = Arc<dyn Fn(&[f64]) -> Result<Vec<f64>> + Send + Sync>;
pub type JacobianFn = Arc<dyn Fn(&[f64]) -> Result<DMatrix<f64>> + Send + Sync>;

/// A deterministic map θ ∈ ℝⁿ → ℝᵐ, optionally with a closed-form Jacobian.
///
/// Cloning is cheap; evaluators are shared behind `Arc` and hold no mutable state.
#[derive(Clone)]
pub struct ParametricModel {
    name: String,
    n: usize,
    output: ModelOutputSpec,
    evaluator: Evaluator,
    analytic_jacobian: Option<JacobianFn>,
}

impl fmt::Debug for ParametricModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ParametricModel")
            .field("name", &self.name)
            .field("n", &self.n)
            .field("output", &self.output)
            .field("analytic_jacobian", &self.analytic_jacobian.is_some())
            .finish()
    }
}

impl ParametricModel {
    pub fn new<F>(name: impl Into<String>, n: usize, output: ModelOutputSpec, evaluator: F) -> Self
    where
        F: Fn(&[f64]) -> Result<Vec<f64>> + Send + Sync + 'static,
    {
        Self { name: name.into(), n, output, evaluator: Arc::new(evaluator), analytic_jacobian: None }
    }

    pub fn with_jacobian<J>(mut self, jacobian: J) -> Self
    where
        J: Fn(&[f64]) -> Result<DMatrix<f64>> + Send + Sync + 'static,
    {
        self.analytic_jacobian = Some(Arc::new(jacobian));
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.output.m()
    }

    pub fn output_spec(&self) -> &ModelOutputSpec {
        &self.output
    }

    pub fn has_analytic_jacobian(&self) -> bool {
        self.analytic_jacobian.is_some()
    }

    fn check_theta(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, got: theta.len() });
        }
        if theta.iter().any(|t| !t.is_finite()) {
            return Err(Error::NonFinite(format!("{}: parameter vector {:?}", self.name, theta)));
        }
        Ok(())
    }

    /// Evaluate f(θ). Errors if θ has the wrong length or the output is not finite.
    pub fn evaluate(&self, theta: &[f64]) -> Result<Vec<f64>> {
        self.check_theta(theta)?;
        let y = (self.evaluator)(theta)?;
        if y.len() != self.m() {
            return Err(Error::DimensionMismatch { expected: self.m(), got: y.len() });
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("{}: output at {:?}", self.name, theta)));
        }
        Ok(y)
    }

    /// Closed-form Jacobian (m×n) when the model provides one.
    pub fn analytic_jacobian(&self, theta: &[f64]) -> Option<Result<DMatrix<f64>>> {
        let jac = self.analytic_jacobian.as_ref()?;
        Some(self.check_theta(theta).and_then(|_| {
            let j = jac(theta)?;
            if j.nrows() != self.m() || j.ncols() != self.n {
                return Err(Error::DimensionMismatch { expected: self.m() * self.n, got: j.len() });
            }
            Ok(j)
        }))
    }
}

/// Wraps `model` as the scalar least-squares cost `q(θ) = Σ (y(θ) − y(θ̂))²`.
///
/// The reference output `y(θ̂)` is evaluated once here and frozen. Residuals are
/// summed in raw output units; no per-output normalization is applied.
pub fn scalar_cost_qoi(model: &ParametricModel, theta_hat: &[f64]) -> Result<ParametricModel> {
    let reference = model.evaluate(theta_hat)?;
    let base = model.clone();
    let name = format!("{}-cost", model.name());
    Ok(ParametricModel::new(name, model.n(), ModelOutputSpec::scalar("cost"), move |theta| {
        let y = base.evaluate(theta)?;
        Ok(vec![squared_distance(&y, &reference)])
    }))
}

pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_box() -> ParameterSpace {
        ParameterSpace::new(vec!["a".into(), "b".into()], vec![0.0, 0.0], vec![1.0, 2.0]).unwrap()
    }

    #[test]
    fn scale_examples() {
        let s = unit_box();
        assert_eq!(s.scale_to_unit(&[0.5, 1.0]).unwrap(), vec![0.0, 0.0]);
        assert_eq!(s.scale_to_unit(&[1.0, 2.0]).unwrap(), vec![1.0, 1.0]);
        let v = s.scale_to_unit(&[0.25, 0.5]).unwrap();
        assert!((v[0] + 0.5).abs() < 1e-15 && (v[1] + 0.5).abs() < 1e-15);
    }

    #[test]
    fn scale_rejects_out_of_bounds() {
        let s = unit_box();
        assert!(matches!(s.scale_to_unit(&[1.5, 1.0]), Err(Error::OutOfBounds(_))));
        assert!(matches!(s.scale_to_unit(&[0.5]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn space_invariants() {
        let dup = ParameterSpace::new(vec!["a".into(), "a".into()], vec![0.0, 0.0], vec![1.0, 1.0]);
        assert!(dup.is_err());
        let empty = ParameterSpace::new(vec!["".into()], vec![0.0], vec![1.0]);
        assert!(empty.is_err());
        let inverted = ParameterSpace::new(vec!["a".into()], vec![1.0], vec![1.0]);
        assert!(inverted.is_err());
        let bad_sd = unit_box().with_density(Density::Gaussian { mean: vec![0.5, 1.0], stdev: vec![0.1, 0.0] });
        assert!(bad_sd.is_err());
    }

    #[test]
    fn relative_box_handles_negative_nominals() {
        let s = ParameterSpace::relative_box(vec!["a".into(), "b".into()], &[2.0, -4.0], 0.5).unwrap();
        assert_eq!(s.lower(), &[1.0, -6.0]);
        assert_eq!(s.upper(), &[3.0, -2.0]);
        assert!(ParameterSpace::relative_box(vec!["z".into()], &[0.0], 0.5).is_err());
    }

    #[test]
    fn evaluate_checks_shape_and_finiteness() {
        let m = ParametricModel::new("inv", 1, ModelOutputSpec::scalar("q"), |t| Ok(vec![1.0 / t[0]]));
        assert!(matches!(m.evaluate(&[1.0, 2.0]), Err(Error::DimensionMismatch { .. })));
        assert!(matches!(m.evaluate(&[0.0]), Err(Error::NonFinite(_))));
        assert!(matches!(m.evaluate(&[f64::NAN]), Err(Error::NonFinite(_))));
        assert_eq!(m.evaluate(&[4.0]).unwrap(), vec![0.25]);
    }

    #[test]
    fn time_series_requires_increasing_times() {
        assert!(ModelOutputSpec::time_series("y", vec![0.0, 1.0, 1.0]).is_err());
        let s = ModelOutputSpec::time_series("y", vec![1.0, 2.0]).unwrap();
        assert_eq!(s.m(), 2);
        assert_eq!(s.labels()[1], "y@2");
    }
}
