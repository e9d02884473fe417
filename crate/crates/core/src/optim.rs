//! Bounded Nelder–Mead simplex minimization with dimension-adaptive coefficients.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct NelderMeadOptions {
    pub max_iter: usize,
    /// Converged once every vertex is within `xtol` (max-norm) of the best one...
    pub xtol: f64,
    /// ...and every vertex value is within `ftol` of the best value.
    pub ftol: f64,
    /// Per-coordinate offsets for the initial simplex. Defaults to 5% of each
    /// nonzero coordinate and 2.5e-4 for zeros.
    pub initial_step: Option<Vec<f64>>,
}

impl Default for NelderMeadOptions {
    fn default() -> Self {
        Self { max_iter: 10_000, xtol: 1e-10, ftol: 1e-14, initial_step: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NelderMeadResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub evaluations: usize,
    /// False when `max_iter` ran out; `x` is then the best vertex found.
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    fn clip(&self, x: &mut [f64]) {
        for (i, v) in x.iter_mut().enumerate() {
            *v = v.clamp(self.lower[i], self.upper[i]);
        }
    }
}

/// Minimize `cost` from `x0`.
///
/// Uses the adaptive coefficients of Gao & Han (reflection 1, expansion
/// 1 + 2/k, contraction 0.75 − 1/(2k), shrink 1 − 1/k for k unknowns). Trial
/// points are clipped coordinate-wise into `bounds`. Non-finite cost values are
/// treated as +∞.
pub fn nelder_mead<F>(
    cost: F,
    x0: &[f64],
    bounds: Option<&Bounds>,
    opts: &NelderMeadOptions,
) -> Result<NelderMeadResult>
where
    F: Fn(&[f64]) -> f64,
{
    let k = x0.len();
    if let Some(b) = bounds {
        if b.lower.len() != k || b.upper.len() != k {
            return Err(Error::DimensionMismatch { expected: k, got: b.lower.len().min(b.upper.len()) });
        }
        if b.lower.iter().zip(&b.upper).any(|(l, u)| l > u) {
            return Err(Error::InvalidArgument("inverted optimizer bounds".into()));
        }
    }
    let mut evaluations = 0usize;
    let mut eval = |x: &[f64]| {
        evaluations += 1;
        let v = cost(x);
        if v.is_nan() { f64::INFINITY } else { v }
    };

    let mut start = x0.to_vec();
    if let Some(b) = bounds {
        b.clip(&mut start);
    }
    let f0 = eval(&start);
    if !f0.is_finite() {
        return Err(Error::NonFinite(format!("cost at starting point {start:?}")));
    }
    if k == 0 {
        return Ok(NelderMeadResult { x: start, f: f0, iterations: 0, evaluations, converged: true });
    }

    let kf = k as f64;
    let (alpha, gamma, rho, sigma) = if k >= 2 {
        (1.0, 1.0 + 2.0 / kf, 0.75 - 1.0 / (2.0 * kf), 1.0 - 1.0 / kf)
    } else {
        (1.0, 2.0, 0.5, 0.5)
    };

    let mut simplex: Vec<Vec<f64>> = vec![start.clone()];
    let mut values = vec![f0];
    for j in 0..k {
        let mut v = start.clone();
        let step = match &opts.initial_step {
            Some(s) => s[j],
            None if start[j] != 0.0 => 0.05 * start[j],
            None => 2.5e-4,
        };
        v[j] += step;
        if let Some(b) = bounds {
            b.clip(&mut v);
            if v[j] == start[j] {
                v[j] -= step;
                b.clip(&mut v);
            }
        }
        values.push(eval(&v));
        simplex.push(v);
    }

    let mut iterations = 0;
    let mut converged = false;
    loop {
        // order vertices by value, ties keep insertion order
        let mut order: Vec<usize> = (0..=k).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();

        let best = &simplex[0];
        let diameter = simplex[1..]
            .iter()
            .map(|v| v.iter().zip(best).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        let spread = values[1..].iter().map(|v| (v - values[0]).abs()).fold(0.0, f64::max);
        if spread == 0.0 && values[0].is_finite() && iterations == 0 {
            converged = true;
            break;
        }
        if diameter <= opts.xtol && spread <= opts.ftol {
            converged = true;
            break;
        }
        if iterations >= opts.max_iter {
            break;
        }
        iterations += 1;

        let mut centroid = vec![0.0; k];
        for v in &simplex[..k] {
            for (c, x) in centroid.iter_mut().zip(v) {
                *c += x / kf;
            }
        }
        let worst = simplex[k].clone();
        let along = |t: f64| -> Vec<f64> {
            let mut p: Vec<f64> = centroid.iter().zip(&worst).map(|(c, w)| c + t * (c - w)).collect();
            if let Some(b) = bounds {
                b.clip(&mut p);
            }
            p
        };

        let xr = along(alpha);
        let fr = eval(&xr);
        if fr < values[0] {
            let xe = along(alpha * gamma);
            let fe = eval(&xe);
            if fe < fr {
                simplex[k] = xe;
                values[k] = fe;
            } else {
                simplex[k] = xr;
                values[k] = fr;
            }
            continue;
        }
        if fr < values[k - 1] {
            simplex[k] = xr;
            values[k] = fr;
            continue;
        }
        let (xc, fc) = if fr < values[k] {
            let xc = along(alpha * rho);
            let fc = eval(&xc);
            (xc, fc)
        } else {
            let xc = along(-rho);
            let fc = eval(&xc);
            (xc, fc)
        };
        if fc < values[k].min(fr) {
            simplex[k] = xc;
            values[k] = fc;
            continue;
        }
        // shrink toward the best vertex
        let best = simplex[0].clone();
        for i in 1..=k {
            let mut p: Vec<f64> = best.iter().zip(&simplex[i]).map(|(b, v)| b + sigma * (v - b)).collect();
            if let Some(b) = bounds {
                b.clip(&mut p);
            }
            values[i] = eval(&p);
            simplex[i] = p;
        }
    }

    Ok(NelderMeadResult { x: simplex[0].clone(), f: values[0], iterations, evaluations, converged })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn convex_quadratic() {
        let r = nelder_mead(
            |x| (x[0] - 1.0).powi(2) + (x[1] - 2.0).powi(2),
            &[0.0, 0.0],
            None,
            &NelderMeadOptions::default(),
        )
        .unwrap();
        assert!(r.converged);
        assert!((r.x[0] - 1.0).abs() < 1e-5 && (r.x[1] - 2.0).abs() < 1e-5, "{:?}", r.x);
    }

    #[test]
    fn rosenbrock() {
        let f = |x: &[f64]| 100.0 * (x[1] - x[0] * x[0]).powi(2) + (1.0 - x[0]).powi(2);
        let opts = NelderMeadOptions { max_iter: 20_000, ..Default::default() };
        let r = nelder_mead(f, &[-1.2, 1.0], None, &opts).unwrap();
        assert!((r.x[0] - 1.0).abs() < 1e-3 && (r.x[1] - 1.0).abs() < 1e-3, "{:?}", r.x);
    }

    #[test]
    fn constant_cost_stops_at_start() {
        let r = nelder_mead(|_| 4.0, &[0.3, -2.0], None, &NelderMeadOptions::default()).unwrap();
        assert!(r.converged);
        assert_eq!(r.iterations, 0);
        assert_eq!(r.x, vec![0.3, -2.0]);
    }

    #[test]
    fn bounds_are_respected() {
        let b = Bounds { lower: vec![2.0, -1.0], upper: vec![5.0, 1.0] };
        let r = nelder_mead(|x| x[0] * x[0] + x[1] * x[1], &[3.0, 0.5], Some(&b), &NelderMeadOptions::default()).unwrap();
        assert!((r.x[0] - 2.0).abs() < 1e-8 && r.x[1].abs() < 1e-5, "{:?}", r.x);
    }

    #[test]
    fn iteration_cap_returns_best_so_far() {
        let opts = NelderMeadOptions { max_iter: 5, ..Default::default() };
        let r = nelder_mead(|x| (x[0] - 10.0).powi(2), &[0.0], None, &opts).unwrap();
        assert!(!r.converged);
        assert!(r.f < 100.0);
    }

    #[test]
    fn non_finite_start_is_an_error() {
        assert!(nelder_mead(|_| f64::NAN, &[1.0], None, &NelderMeadOptions::default()).is_err());
    }
}
