//! Symmetric eigendecomposition by cyclic Jacobi rotations.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 100;

/// Eigenpairs of a symmetric matrix, sorted by descending eigenvalue.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenAnalysis {
    pub eigenvalues: DVector<f64>,
    /// Orthogonal; column `i` pairs with `eigenvalues[i]`. The largest-magnitude
    /// entry of every column is positive.
    pub eigenvectors: DMatrix<f64>,
    pub numerical_rank: usize,
    /// λmax / λmin, infinite when λmin is at or below the rank tolerance.
    pub sloppiness_ratio: f64,
    pub rank_tolerance: f64,
}

impl EigenAnalysis {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvector(&self, i: usize) -> DVector<f64> {
        self.eigenvectors.column(i).into_owned()
    }

    /// Largest ratio λ_i / λ_{i+1} over consecutive eigenvalues, with the
    /// index `i` (0-based) after which it occurs. Non-positive denominators give ∞.
    pub fn largest_gap(&self) -> Option<(usize, f64)> {
        let l = &self.eigenvalues;
        (0..l.len().saturating_sub(1))
            .map(|i| {
                let r = if l[i + 1] > 0.0 {
                    l[i] / l[i + 1]
                } else if l[i] > 0.0 {
                    f64::INFINITY
                } else {
                    1.0
                };
                (i, r)
            })
            .fold(None, |best: Option<(usize, f64)>, cur| match best {
                Some(b) if b.1 >= cur.1 => Some(b),
                _ => Some(cur),
            })
    }
}

/// Full eigendecomposition of a symmetric matrix.
///
/// `rank_tolerance` is relative to the largest eigenvalue: an eigenvalue counts
/// toward the numerical rank when it exceeds `rank_tolerance · λ₁`.
pub fn eigendecompose(matrix: &DMatrix<f64>, rank_tolerance: f64) -> Result<EigenAnalysis> {
    let n = matrix.nrows();
    if matrix.ncols() != n {
        return Err(Error::DimensionMismatch { expected: n, got: matrix.ncols() });
    }
    if matrix.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("matrix passed to eigensolver".into()));
    }
    let scale = matrix.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    for i in 0..n {
        for j in 0..i {
            if (matrix[(i, j)] - matrix[(j, i)]).abs() > 1e-10 * scale {
                return Err(Error::InvalidArgument(format!("matrix not symmetric at ({i}, {j})")));
            }
        }
    }

    let (values, vectors) = jacobi(matrix)?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    let eigenvalues = DVector::from_iterator(n, order.iter().map(|&i| values[i]));
    let mut eigenvectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = vectors.column(src).into_owned();
        normalize_sign(&mut col);
        eigenvectors.set_column(dst, &col);
    }

    let (numerical_rank, sloppiness_ratio) = rank_and_ratio(&eigenvalues, rank_tolerance);
    Ok(EigenAnalysis { eigenvalues, eigenvectors, numerical_rank, sloppiness_ratio, rank_tolerance })
}

fn rank_and_ratio(l: &DVector<f64>, tol: f64) -> (usize, f64) {
    if l.is_empty() {
        return (0, f64::INFINITY);
    }
    let lmax = l[0];
    if !(lmax > 0.0) {
        return (0, f64::INFINITY);
    }
    let cut = tol * lmax;
    let rank = l.iter().filter(|v| **v > cut).count();
    let lmin = l[l.len() - 1];
    let ratio = if lmin <= cut { f64::INFINITY } else { lmax / lmin };
    (rank, ratio)
}

/// Flip `v` so its largest-magnitude component is positive. Near-ties resolve to
/// the lowest index.
pub fn normalize_sign(v: &mut DVector<f64>) {
    let amax = v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    if amax == 0.0 {
        return;
    }
    if let Some(lead) = v.iter().find(|x| x.abs() >= amax * (1.0 - 1e-9)) {
        if *lead < 0.0 {
            v.neg_mut();
        }
    }
}

/// Cyclic Jacobi. Returns unsorted eigenvalues and the accumulated rotation.
fn jacobi(matrix: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = matrix.nrows();
    let mut a = matrix.clone();
    // symmetrize
    for i in 0..n {
        for j in 0..i {
            let m = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = m;
            a[(j, i)] = m;
        }
    }
    let mut v = DMatrix::<f64>::identity(n, n);
    let frob2: f64 = a.iter().map(|x| x * x).sum();
    if n < 2 || frob2 == 0.0 {
        return Ok(((0..n).map(|i| a[(i, i)]).collect(), v));
    }

    let floor = f64::EPSILON * f64::EPSILON * frob2.sqrt();
    for _sweep in 0..MAX_SWEEPS {
        let mut rotations = 0;
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                let app = a[(p, p)];
                let aqq = a[(q, q)];
                // Entries this small no longer move any eigenvalue.
                if apq.abs() <= floor.max(f64::EPSILON * (app * aqq).abs().sqrt()) {
                    continue;
                }
                rotations += 1;
                let theta = (aqq - app) / (2.0 * apq);
                let sign = if theta >= 0.0 { 1.0 } else { -1.0 };
                let t = sign / (theta.abs() + theta.hypot(1.0));
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;

                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                a[(p, q)] = 0.0;
                a[(q, p)] = 0.0;

                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
        if rotations == 0 {
            return Ok(((0..n).map(|i| a[(i, i)]).collect(), v));
        }
    }
    Err(Error::ConvergenceFailure(MAX_SWEEPS))
}
