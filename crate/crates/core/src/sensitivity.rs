//! Finite-difference sensitivity matrices, the local sensitivity FIM and
//! rank-based identifiability verdicts.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::eigen::EigenAnalysis;
use crate::error::{Error, Result};
use crate::model::ParametricModel;

/// Cube root of machine epsilon, the usual central-difference optimum.
pub const DEFAULT_RELATIVE_STEP: f64 = 6.055_454_452_393_343e-6;
pub const DEFAULT_ABSOLUTE_FLOOR: f64 = 1e-8;
pub const DEFAULT_RANK_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiffMethod {
    Central,
    Forward,
    Analytic,
}

impl DiffMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            DiffMethod::Central => "central",
            DiffMethod::Forward => "forward",
            DiffMethod::Analytic => "analytic",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdOptions {
    pub relative_step: f64,
    pub absolute_floor: f64,
    pub method: DiffMethod,
    /// Evaluate columns on the rayon pool.
    pub parallel: bool,
}

impl Default for FdOptions {
    fn default() -> Self {
        Self {
            relative_step: DEFAULT_RELATIVE_STEP,
            absolute_floor: DEFAULT_ABSOLUTE_FLOOR,
            method: DiffMethod::Central,
            parallel: false,
        }
    }
}

impl FdOptions {
    pub fn with_step(relative_step: f64) -> Self {
        Self { relative_step, ..Self::default() }
    }

    pub fn analytic() -> Self {
        Self { method: DiffMethod::Analytic, ..Self::default() }
    }
}

/// Sensitivity matrix χ = ∂f/∂θ (m×n) at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct Jacobian {
    pub matrix: DMatrix<f64>,
    pub theta: Vec<f64>,
    pub step_sizes: Vec<f64>,
    pub method: DiffMethod,
}

/// Jacobian of `model` at `theta`.
///
/// Column `i` uses `h_i = relative_step · max(|θ_i|, absolute_floor)`. If a
/// perturbed evaluation fails, that column falls back once to the one-sided
/// difference on the other side before giving up. With `DiffMethod::Analytic`
/// the model's closed-form Jacobian is used (an error if it has none).
pub fn jacobian_fd(model: &ParametricModel, theta: &[f64], opts: &FdOptions) -> Result<Jacobian> {
    if theta.len() != model.n() {
        return Err(Error::DimensionMismatch { expected: model.n(), got: theta.len() });
    }
    if !(opts.relative_step > 0.0) {
        return Err(Error::InvalidArgument(format!("relative step {}", opts.relative_step)));
    }
    let n = model.n();
    let m = model.m();

    if opts.method == DiffMethod::Analytic {
        let matrix = model.analytic_jacobian(theta).ok_or_else(|| {
            Error::InvalidArgument(format!("model '{}' has no analytic Jacobian", model.name()))
        })??;
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("analytic Jacobian of '{}'", model.name())));
        }
        return Ok(Jacobian { matrix, theta: theta.to_vec(), step_sizes: vec![0.0; n], method: DiffMethod::Analytic });
    }

    let steps: Vec<f64> =
        theta.iter().map(|t| opts.relative_step * t.abs().max(opts.absolute_floor)).collect();
    let base = if opts.method == DiffMethod::Forward { Some(model.evaluate(theta)?) } else { None };

    let column = |i: usize| -> Result<Vec<f64>> {
        let h = steps[i];
        let shifted = |sign: f64| {
            let mut p = theta.to_vec();
            p[i] += sign * h;
            model.evaluate(&p)
        };
        let center = || match &base {
            Some(b) => Ok(b.clone()),
            None => model.evaluate(theta),
        };
        let one_sided = |from: &[f64], to: &[f64], sign: f64| -> Vec<f64> {
            to.iter().zip(from).map(|(a, b)| sign * (a - b) / h).collect()
        };
        match opts.method {
            DiffMethod::Forward => match shifted(1.0) {
                Ok(up) => Ok(one_sided(base.as_ref().unwrap(), &up, 1.0)),
                Err(_) => {
                    let down = shifted(-1.0)?;
                    Ok(one_sided(base.as_ref().unwrap(), &down, -1.0))
                }
            },
            _ => match (shifted(1.0), shifted(-1.0)) {
                (Ok(up), Ok(down)) => Ok(up.iter().zip(&down).map(|(a, b)| (a - b) / (2.0 * h)).collect()),
                (Ok(up), Err(_)) => Ok(one_sided(&center()?, &up, 1.0)),
                (Err(_), Ok(down)) => Ok(one_sided(&center()?, &down, -1.0)),
                (Err(e), Err(_)) => Err(e),
            },
        }
    };

    let columns: Vec<Vec<f64>> = if opts.parallel {
        (0..n).into_par_iter().map(column).collect::<Result<_>>()?
    } else {
        (0..n).map(column).collect::<Result<_>>()?
    };

    let mut matrix = DMatrix::zeros(m, n);
    for (j, col) in columns.iter().enumerate() {
        for (i, v) in col.iter().enumerate() {
            matrix[(i, j)] = *v;
        }
    }
    if matrix.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("finite-difference Jacobian of '{}'", model.name())));
    }
    Ok(Jacobian { matrix, theta: theta.to_vec(), step_sizes: steps, method: opts.method })
}

/// Local sensitivity FIM F = χᵀχ.
#[derive(Debug, Clone, PartialEq)]
pub struct Sfim {
    pub matrix: DMatrix<f64>,
    pub theta: Vec<f64>,
}

pub fn local_sfim(jac: &Jacobian) -> Sfim {
    let chi = &jac.matrix;
    let f = chi.transpose() * chi;
    Sfim { matrix: symmetrize(&f), theta: jac.theta.clone() }
}

pub(crate) fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

#[derive(Debug, Clone, PartialEq)]
pub enum Verdict {
    LocallyIdentifiable,
    RankDeficient { rank: usize },
    /// Full rank, but λmax/λmin exceeds the configured ratio.
    NearlyDeficient { ratio: f64, gap_after: usize, gap_ratio: f64 },
}

impl Verdict {
    pub fn label(&self) -> String {
        match self {
            Verdict::LocallyIdentifiable => "locally_identifiable".into(),
            Verdict::RankDeficient { rank } => format!("rank_deficient({rank})"),
            Verdict::NearlyDeficient { .. } => "nearly_deficient".into(),
        }
    }
}

/// Rank verdict for an n-parameter sFIM. `near_ratio` is the sloppiness ratio
/// above which a full-rank matrix is reported as nearly deficient.
pub fn identifiability_verdict(eig: &EigenAnalysis, n: usize, near_ratio: f64) -> Verdict {
    if eig.numerical_rank < n {
        return Verdict::RankDeficient { rank: eig.numerical_rank };
    }
    if eig.sloppiness_ratio > near_ratio {
        let (gap_after, gap_ratio) = eig.largest_gap().unwrap_or((0, 1.0));
        return Verdict::NearlyDeficient { ratio: eig.sloppiness_ratio, gap_after, gap_ratio };
    }
    Verdict::LocallyIdentifiable
}
