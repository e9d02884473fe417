//! Average sensitivity FIM, active/inactive subspace partitions, the ridge
//! approximation `g(θ) = f(Q_a Q_aᵀ θ)` and sufficient-summary tables.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::eigen::{eigendecompose, EigenAnalysis};
use crate::error::{Error, Result};
use crate::model::{ParameterSpace, ParametricModel};
use crate::sampling::{SampleScheme, SampleSet};
use crate::sensitivity::{jacobian_fd, local_sfim, FdOptions};

/// Largest tolerated fraction of failed samples.
pub const MAX_EXCLUDED_FRACTION: f64 = 0.5;
pub const DEFAULT_GAP_RATIO: f64 = 10.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Exclusion {
    pub index: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleMeta {
    pub scheme: SampleScheme,
    pub seed: u64,
    pub n_requested: usize,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub acceptance_rate: Option<f64>,
}

/// Monte Carlo estimate of C = ∫ F(θ) ρ(θ) dθ.
#[derive(Debug, Clone, PartialEq)]
pub struct AverageSfim {
    pub matrix: DMatrix<f64>,
    pub eig: EigenAnalysis,
    pub n_samples_used: usize,
    /// Sample indices that contributed, in sample order.
    pub used: Vec<usize>,
    /// Model output at each used sample, aligned with `used`.
    pub outputs: Vec<Vec<f64>>,
    pub excluded: Vec<Exclusion>,
    pub meta: SampleMeta,
}

impl AverageSfim {
    pub fn used_points<'a>(&self, samples: &'a SampleSet) -> Vec<&'a [f64]> {
        self.used.iter().map(|&i| samples.points[i].as_slice()).collect()
    }
}

/// Equal-weight average of local sFIMs over `samples`.
///
/// Samples whose evaluation or gradient fails are excluded and logged. The
/// per-sample work runs on the current rayon pool; the sum is reduced over a
/// fixed pairwise tree in sample order, so the result does not depend on the
/// number of workers.
pub fn average_sfim(
    model: &ParametricModel,
    samples: &SampleSet,
    fd: &FdOptions,
    rank_tolerance: f64,
) -> Result<AverageSfim> {
    let n = model.n();
    if samples.space.dim() != n {
        return Err(Error::DimensionMismatch { expected: n, got: samples.space.dim() });
    }
    let fd = FdOptions { parallel: false, ..*fd };
    let per_sample: Vec<Result<(DMatrix<f64>, Vec<f64>)>> = samples
        .points
        .par_iter()
        .map(|theta| {
            let y = model.evaluate(theta)?;
            let jac = jacobian_fd(model, theta, &fd)?;
            Ok((local_sfim(&jac).matrix, y))
        })
        .collect();

    let mut used = Vec::new();
    let mut outputs = Vec::new();
    let mut mats = Vec::new();
    let mut excluded = Vec::new();
    for (index, r) in per_sample.into_iter().enumerate() {
        match r {
            Ok((f, y)) => {
                used.push(index);
                outputs.push(y);
                mats.push(f);
            }
            Err(e) => excluded.push(Exclusion { index, reason: format!("{}: {}", e.class(), e) }),
        }
    }
    let total = samples.len();
    if excluded.len() as f64 > MAX_EXCLUDED_FRACTION * total as f64 || mats.is_empty() {
        return Err(Error::TooManyFailures { failed: excluded.len(), total });
    }

    let sum = pairwise_sum(&mats, n);
    let matrix = crate::sensitivity::symmetrize(&(sum / mats.len() as f64));
    let eig = eigendecompose(&matrix, rank_tolerance)?;
    let meta = SampleMeta {
        scheme: samples.scheme,
        seed: samples.seed,
        n_requested: total,
        lower: samples.space.lower().to_vec(),
        upper: samples.space.upper().to_vec(),
        acceptance_rate: samples.acceptance_rate,
    };
    Ok(AverageSfim { matrix, eig, n_samples_used: mats.len(), used, outputs, excluded, meta })
}

fn pairwise_sum(mats: &[DMatrix<f64>], n: usize) -> DMatrix<f64> {
    match mats.len() {
        0 => DMatrix::zeros(n, n),
        1 => mats[0].clone(),
        len => {
            let (a, b) = mats.split_at(len / 2);
            pairwise_sum(a, n) + pairwise_sum(b, n)
        }
    }
}

/// Rule for splitting eigenvectors into active and inactive sets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PartitionCriterion {
    FixedR(usize),
    /// Split after the largest consecutive ratio λ_i/λ_{i+1}, which must reach `min_ratio`.
    Gap { min_ratio: f64 },
    /// Keep eigenvalues above `relative · λ₁`.
    Threshold { relative: f64 },
}

impl PartitionCriterion {
    pub fn describe(&self) -> String {
        match self {
            PartitionCriterion::FixedR(r) => format!("fixed_r({r})"),
            PartitionCriterion::Gap { min_ratio } => format!("gap_after_largest_ratio(min_ratio={min_ratio})"),
            PartitionCriterion::Threshold { relative } => format!("threshold(relative={relative})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubspacePartition {
    /// n×r, columns are the active eigenvectors.
    pub active: DMatrix<f64>,
    /// n×(n−r).
    pub inactive: DMatrix<f64>,
    pub r: usize,
    pub criterion: PartitionCriterion,
    /// Human-readable record of how `r` was chosen.
    pub record: String,
}

impl SubspacePartition {
    /// Q_a Q_aᵀ θ
    pub fn project_active(&self, theta: &[f64]) -> Vec<f64> {
        let t = DVector::from_column_slice(theta);
        let p = &self.active * (self.active.transpose() * t);
        p.iter().copied().collect()
    }

    /// Q_i Q_iᵀ θ
    pub fn project_inactive(&self, theta: &[f64]) -> Vec<f64> {
        let t = DVector::from_column_slice(theta);
        let p = &self.inactive * (self.inactive.transpose() * t);
        p.iter().copied().collect()
    }

    /// Active variables Q_aᵀ θ.
    pub fn active_coordinates(&self, theta: &[f64]) -> Vec<f64> {
        let t = DVector::from_column_slice(theta);
        (self.active.transpose() * t).iter().copied().collect()
    }
}

pub fn partition(eig: &EigenAnalysis, criterion: PartitionCriterion) -> Result<SubspacePartition> {
    let n = eig.dim();
    let (r, record) = match criterion {
        PartitionCriterion::FixedR(r) => {
            if r > n {
                return Err(Error::InvalidArgument(format!("active dimension {r} exceeds n = {n}")));
            }
            (r, format!("fixed_r({r})"))
        }
        PartitionCriterion::Gap { min_ratio } => match eig.largest_gap() {
            Some((i, ratio)) if ratio >= min_ratio => (
                i + 1,
                format!("gap_after_largest_ratio(min_ratio={min_ratio}): split after λ{} with ratio {ratio:.6e}", i + 1),
            ),
            Some((_, ratio)) => return Err(Error::DegenerateGap { required: min_ratio, best: ratio }),
            None => return Err(Error::DegenerateGap { required: min_ratio, best: 1.0 }),
        },
        PartitionCriterion::Threshold { relative } => {
            let cut = relative * eig.eigenvalues.get(0).copied().unwrap_or(0.0);
            let r = eig.eigenvalues.iter().filter(|l| **l > cut && **l > 0.0).count();
            (r, format!("threshold(relative={relative}): {r} eigenvalues above {cut:.6e}"))
        }
    };
    let active = eig.eigenvectors.columns(0, r).into_owned();
    let inactive = eig.eigenvectors.columns(r, n - r).into_owned();
    Ok(SubspacePartition { active, inactive, r, criterion, record })
}

/// g(θ) = f(Q_a Q_aᵀ θ).
pub fn low_rank_eval(model: &ParametricModel, part: &SubspacePartition, theta: &[f64]) -> Result<Vec<f64>> {
    if theta.len() != model.n() || part.active.nrows() != model.n() {
        return Err(Error::DimensionMismatch { expected: model.n(), got: theta.len() });
    }
    let projected = part.project_active(theta);
    model.evaluate(&projected).map_err(|e| {
        Error::ProjectionOutOfDomain(format!("{} at {:?}: {}", model.name(), projected, e))
    })
}

/// Active coordinates and QOI per sample, for sufficient-summary plots.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryTable {
    pub rows: usize,
    /// One entry per sample: `(w₁ᵀθ, …, w_rowsᵀθ)`.
    pub coordinates: Vec<Vec<f64>>,
    pub q: Vec<f64>,
}

pub fn summary_table(
    points: &[&[f64]],
    q_values: &[f64],
    part: &SubspacePartition,
    rows: usize,
) -> Result<SummaryTable> {
    if rows == 0 {
        return Err(Error::InvalidArgument("summary table needs at least one row of Q_aᵀ".into()));
    }
    if rows > part.r {
        return Err(Error::InvalidArgument(format!("requested {rows} rows but active dimension is {}", part.r)));
    }
    if points.len() != q_values.len() {
        return Err(Error::AlignmentMismatch(format!(
            "{} samples but {} QOI values",
            points.len(),
            q_values.len()
        )));
    }
    let w = part.active.columns(0, rows);
    let coordinates = points
        .iter()
        .map(|p| {
            if p.len() != w.nrows() {
                return Err(Error::DimensionMismatch { expected: w.nrows(), got: p.len() });
            }
            let t = DVector::from_column_slice(p);
            Ok((w.transpose() * t).iter().copied().collect())
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    Ok(SummaryTable { rows, coordinates, q: q_values.to_vec() })
}

/// The model re-expressed in the centered-unit coordinates of `space`:
/// `u ↦ f(mid + u ⊙ half_width)`. Points outside `[-1, 1]` are mapped affinely too.
pub fn unit_scaled_model(model: &ParametricModel, space: &ParameterSpace) -> Result<ParametricModel> {
    if space.dim() != model.n() {
        return Err(Error::DimensionMismatch { expected: model.n(), got: space.dim() });
    }
    let mid: Vec<f64> = space.lower().iter().zip(space.upper()).map(|(a, b)| 0.5 * (a + b)).collect();
    let half: Vec<f64> = space.lower().iter().zip(space.upper()).map(|(a, b)| 0.5 * (b - a)).collect();
    let base = model.clone();
    Ok(ParametricModel::new(
        format!("{}-unit", model.name()),
        model.n(),
        model.output_spec().clone(),
        move |u| {
            let theta: Vec<f64> = u.iter().zip(mid.iter().zip(&half)).map(|(u, (m, h))| m + u * h).collect();
            base.evaluate(&theta)
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelOutputSpec;
    use crate::sampling::sample;

    fn eig_of(values: &[f64]) -> EigenAnalysis {
        let m = DMatrix::from_diagonal(&DVector::from_column_slice(values));
        eigendecompose(&m, 1e-8).unwrap()
    }

    #[test]
    fn flat_spectrum_has_no_gap() {
        let e = eig_of(&[5.0, 5.0, 5.0]);
        assert!(matches!(partition(&e, PartitionCriterion::Gap { min_ratio: 10.0 }), Err(Error::DegenerateGap { .. })));
    }

    #[test]
    fn fixed_full_rank_is_whole_basis() {
        let e = eig_of(&[3.0, 2.0, 1.0]);
        let p = partition(&e, PartitionCriterion::FixedR(3)).unwrap();
        assert_eq!(p.active, e.eigenvectors);
        assert_eq!(p.inactive.ncols(), 0);
        assert!(partition(&e, PartitionCriterion::FixedR(4)).is_err());
    }

    #[test]
    fn threshold_counts_large_eigenvalues() {
        let e = eig_of(&[100.0, 5.0, 0.01]);
        let p = partition(&e, PartitionCriterion::Threshold { relative: 0.01 }).unwrap();
        assert_eq!(p.r, 2);
    }

    #[test]
    fn constant_model_gives_zero_matrix() {
        let m = ParametricModel::new("c", 2, ModelOutputSpec::scalar("q"), |_| Ok(vec![1.0]));
        let space = ParameterSpace::new(vec!["a".into(), "b".into()], vec![0.0, 0.0], vec![1.0, 2.0]).unwrap();
        let s = sample(&space, SampleScheme::UniformIid, 20, 1).unwrap();
        let c = average_sfim(&m, &s, &FdOptions::default(), 1e-8).unwrap();
        assert_eq!(c.matrix, DMatrix::zeros(2, 2));
        assert_eq!(c.n_samples_used, 20);
    }

    #[test]
    fn failures_are_excluded_then_fatal() {
        let space = ParameterSpace::new(vec!["a".into()], vec![0.0], vec![1.0]).unwrap();
        let s = sample(&space, SampleScheme::Lhs, 10, 2).unwrap();
        // fails on the upper 30% of the box
        let m = ParametricModel::new("cliff", 1, ModelOutputSpec::scalar("q"), |t| {
            if t[0] > 0.7 { Err(Error::NonFinite("cliff".into())) } else { Ok(vec![t[0] * t[0]]) }
        });
        let c = average_sfim(&m, &s, &FdOptions::default(), 1e-8).unwrap();
        assert_eq!(c.n_samples_used + c.excluded.len(), 10);
        assert_eq!(c.excluded.len(), 3);
        assert!(c.excluded[0].reason.starts_with("NonFinite"));

        let m = ParametricModel::new("cliff", 1, ModelOutputSpec::scalar("q"), |t| {
            if t[0] > 0.3 { Err(Error::NonFinite("cliff".into())) } else { Ok(vec![t[0]]) }
        });
        assert!(matches!(average_sfim(&m, &s, &FdOptions::default(), 1e-8), Err(Error::TooManyFailures { .. })));
    }

    #[test]
    fn summary_table_preconditions() {
        let e = eig_of(&[3.0, 1.0]);
        let p = partition(&e, PartitionCriterion::FixedR(1)).unwrap();
        let pts: Vec<&[f64]> = vec![&[1.0, 2.0], &[3.0, 4.0]];
        assert!(summary_table(&pts, &[1.0, 2.0], &p, 0).is_err());
        assert!(summary_table(&pts, &[1.0, 2.0], &p, 2).is_err());
        assert!(matches!(summary_table(&pts, &[1.0], &p, 1), Err(Error::AlignmentMismatch(_))));
        let t = summary_table(&pts, &[1.0, 2.0], &p, 1).unwrap();
        assert_eq!(t.coordinates, vec![vec![1.0], vec![3.0]]);
    }

    #[test]
    fn unit_scaled_model_maps_center() {
        let m = ParametricModel::new("id", 2, ModelOutputSpec::vector(vec!["a".into(), "b".into()]).unwrap(), |t| Ok(t.to_vec()));
        let space = ParameterSpace::new(vec!["a".into(), "b".into()], vec![0.0, 2.0], vec![1.0, 4.0]).unwrap();
        let u = unit_scaled_model(&m, &space).unwrap();
        assert_eq!(u.evaluate(&[0.0, 0.0]).unwrap(), vec![0.5, 3.0]);
        assert_eq!(u.evaluate(&[1.0, -1.0]).unwrap(), vec![1.0, 2.0]);
    }
}
