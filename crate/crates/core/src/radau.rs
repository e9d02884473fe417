//! Implicit integration with the three-stage Radau IIA method (order 5).
//!
//! Stages are solved by simplified Newton on the full `3n × 3n` system with a
//! finite-difference Jacobian refreshed every step, which is cheap for the
//! small systems this crate integrates. Step control and the embedded error
//! estimate follow Hairer & Wanner's RADAU5. Output between steps comes from
//! the collocation polynomial, which also seeds the next step's Newton start.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::ode::{check_request, OdeSystem, SolverStats, Tolerances, Trajectory};

const SQ6: f64 = 2.449_489_742_783_178;
const C: [f64; 3] = [(4.0 - SQ6) / 10.0, (4.0 + SQ6) / 10.0, 1.0];
const A: [[f64; 3]; 3] = [
    [(88.0 - 7.0 * SQ6) / 360.0, (296.0 - 169.0 * SQ6) / 1800.0, (-2.0 + 3.0 * SQ6) / 225.0],
    [(296.0 + 169.0 * SQ6) / 1800.0, (88.0 + 7.0 * SQ6) / 360.0, (-2.0 - 3.0 * SQ6) / 225.0],
    [(16.0 - SQ6) / 36.0, (16.0 + SQ6) / 36.0, 1.0 / 9.0],
];
const DD: [f64; 3] = [-(13.0 + 7.0 * SQ6) / 3.0, (-13.0 + 7.0 * SQ6) / 3.0, -1.0 / 3.0];

const MAX_NEWTON: usize = 7;
const SAFETY: f64 = 0.9;
const MAX_STEPS: usize = 2_000_000;

/// Real eigenvalue of the inverse Radau coefficient matrix.
fn u1() -> f64 {
    30.0 / (6.0 + 81f64.cbrt() - 9f64.cbrt())
}

struct Problem<'a, S: OdeSystem + ?Sized> {
    system: &'a S,
    theta: &'a [f64],
    rhs_evals: usize,
}

impl<S: OdeSystem + ?Sized> Problem<'_, S> {
    fn f(&mut self, t: f64, x: &[f64]) -> Vec<f64> {
        let mut dx = vec![0.0; x.len()];
        self.system.rhs(t, x, self.theta, &mut dx);
        self.rhs_evals += 1;
        dx
    }

    fn jacobian(&mut self, t: f64, x: &[f64], f0: &[f64]) -> DMatrix<f64> {
        let n = x.len();
        let mut j = DMatrix::zeros(n, n);
        let mut xp = x.to_vec();
        for k in 0..n {
            let delta = (f64::EPSILON * x[k].abs().max(1e-5)).sqrt();
            xp[k] = x[k] + delta;
            let fk = self.f(t, &xp);
            for i in 0..n {
                j[(i, k)] = (fk[i] - f0[i]) / delta;
            }
            xp[k] = x[k];
        }
        j
    }
}

/// Stage increments of the last accepted step, for dense output.
struct Collocation {
    t: f64,
    h: f64,
    x: Vec<f64>,
    z: [Vec<f64>; 3],
}

impl Collocation {
    /// `Z(s)` through `(0, 0)` and `(c_i, z_i)`.
    fn increment(&self, s: f64) -> Vec<f64> {
        let w: [f64; 3] = std::array::from_fn(|i| {
            let mut num = s;
            let mut den = C[i];
            for j in 0..3 {
                if j != i {
                    num *= s - C[j];
                    den *= C[i] - C[j];
                }
            }
            num / den
        });
        (0..self.x.len()).map(|k| w[0] * self.z[0][k] + w[1] * self.z[1][k] + w[2] * self.z[2][k]).collect()
    }

    fn state_at(&self, t: f64) -> Vec<f64> {
        let dz = self.increment((t - self.t) / self.h);
        self.x.iter().zip(dz).map(|(x, d)| x + d).collect()
    }
}

fn rms(v: impl Iterator<Item = f64>, count: usize) -> f64 {
    (v.map(|e| e * e).sum::<f64>() / count as f64).sqrt()
}

/// Integrate a stiff `system` over `t_span`, sampling at `output_times`.
///
/// Same contract as [`crate::ode::integrate`]. Tolerances are mapped to the
/// method's internal scale the way RADAU5 does (`rel' = 0.1·rel^(2/3)`).
pub fn integrate_stiff<S: OdeSystem + ?Sized>(
    system: &S,
    theta: &[f64],
    t_span: (f64, f64),
    output_times: &[f64],
    tol: Tolerances,
) -> Result<Trajectory> {
    let (t0, t1) = t_span;
    let mut x = check_request(system, theta, t_span, output_times, tol)?;
    let n = x.len();
    let rtol = 0.1 * tol.rel.powf(2.0 / 3.0);
    let atol = rtol * tol.abs / tol.rel;
    let fnewt = (10.0 * f64::EPSILON / rtol).max(0.03f64.min(rtol.sqrt()));
    let u1 = u1();

    let mut prob = Problem { system, theta, rhs_evals: 0 };
    let mut times = Vec::with_capacity(output_times.len());
    let mut states = Vec::with_capacity(output_times.len());
    let mut next_out = 0;
    while next_out < output_times.len() && output_times[next_out] <= t0 {
        times.push(output_times[next_out]);
        states.push(x.clone());
        next_out += 1;
    }

    let span = t1 - t0;
    let mut t = t0;
    let mut h = (1e-6 * span).min(1e-3);
    let mut last_step: Option<Collocation> = None;
    let mut faccon = 1.0_f64;
    let mut reject = false;
    let mut first = true;
    let mut stats = SolverStats { min_step: f64::INFINITY, ..Default::default() };
    let mut f0 = prob.f(t, &x);

    while t < t1 {
        if stats.steps + stats.rejected >= MAX_STEPS || h < 1e-14 * t.abs().max(span) {
            return Err(Error::StepSizeUnderflow { t, h });
        }
        let last = t + 1.01 * h >= t1;
        if last {
            h = t1 - t;
        }
        let scal: Vec<f64> = x.iter().map(|v| atol + rtol * v.abs()).collect();
        let jac = prob.jacobian(t, &x, &f0);

        // M = I - h (A ⊗ J)
        let mut m = DMatrix::<f64>::identity(3 * n, 3 * n);
        for bi in 0..3 {
            for bj in 0..3 {
                let a = h * A[bi][bj];
                for r in 0..n {
                    for c in 0..n {
                        m[(bi * n + r, bj * n + c)] -= a * jac[(r, c)];
                    }
                }
            }
        }
        let lu = m.lu();

        let mut z: [Vec<f64>; 3] = match (&last_step, first) {
            (Some(prev), false) => {
                let z3 = &prev.z[2];
                std::array::from_fn(|i| {
                    let s = 1.0 + C[i] * h / prev.h;
                    prev.increment(s).iter().zip(z3).map(|(a, b)| a - b).collect()
                })
            }
            _ => std::array::from_fn(|_| vec![0.0; n]),
        };

        // simplified Newton
        let mut converged = false;
        let mut diverged = false;
        faccon = faccon.max(f64::EPSILON).powf(0.8);
        let mut dyn_old = 0.0;
        let mut theta_old = 1.0;
        let mut newt = 0;
        while newt < MAX_NEWTON {
            let fz: Vec<Vec<f64>> = (0..3)
                .map(|i| {
                    let xi: Vec<f64> = x.iter().zip(&z[i]).map(|(a, b)| a + b).collect();
                    prob.f(t + C[i] * h, &xi)
                })
                .collect();
            if fz.iter().flatten().any(|v| !v.is_finite()) {
                diverged = true;
                break;
            }
            let mut rhs = DVector::<f64>::zeros(3 * n);
            for i in 0..3 {
                for k in 0..n {
                    let af: f64 = (0..3).map(|j| A[i][j] * fz[j][k]).sum();
                    rhs[i * n + k] = -z[i][k] + h * af;
                }
            }
            let Some(dz) = lu.solve(&rhs) else {
                diverged = true;
                break;
            };
            let dyn_ = rms((0..3 * n).map(|q| dz[q] / scal[q % n]), 3 * n);
            if newt >= 1 {
                let thq = dyn_ / dyn_old;
                let rate = if newt == 1 { thq } else { (thq * theta_old).sqrt() };
                theta_old = thq;
                if rate >= 0.99 {
                    diverged = true;
                    break;
                }
                faccon = rate / (1.0 - rate);
                let remaining = (MAX_NEWTON - 1 - newt) as i32;
                if dyn_ * rate.powi(remaining) / (1.0 - rate) > fnewt {
                    let qnewt = (dyn_ / fnewt).clamp(1e-4, 20.0);
                    h *= 0.8 * qnewt.powf(-1.0 / (4.0 + remaining as f64));
                    diverged = true;
                    break;
                }
            }
            dyn_old = dyn_.max(f64::EPSILON);
            for i in 0..3 {
                for k in 0..n {
                    z[i][k] += dz[i * n + k];
                }
            }
            newt += 1;
            if faccon * dyn_ <= fnewt {
                converged = true;
                break;
            }
        }
        if !converged {
            if diverged && newt == 0 || !diverged {
                h *= 0.5;
            } else if theta_old >= 0.99 {
                h *= 0.5;
            }
            stats.rejected += 1;
            reject = true;
            first = first || last_step.is_none();
            continue;
        }

        // embedded error estimate
        let mut e_lu_m = DMatrix::<f64>::zeros(n, n);
        for r in 0..n {
            for c in 0..n {
                e_lu_m[(r, c)] = -jac[(r, c)];
            }
            e_lu_m[(r, r)] += u1 / h;
        }
        let e_lu = e_lu_m.lu();
        let f2: Vec<f64> = (0..n).map(|k| (DD[0] * z[0][k] + DD[1] * z[1][k] + DD[2] * z[2][k]) / h).collect();
        let cont = DVector::from_iterator(n, (0..n).map(|k| f2[k] + f0[k]));
        let mut err_v = e_lu.solve(&cont).unwrap_or_else(|| DVector::from_element(n, f64::INFINITY));
        let mut err = rms((0..n).map(|k| err_v[k] / scal[k]), n).max(1e-10);
        if err >= 1.0 && (first || reject) {
            let xe: Vec<f64> = (0..n).map(|k| x[k] + err_v[k]).collect();
            let fe = prob.f(t, &xe);
            let cont = DVector::from_iterator(n, (0..n).map(|k| f2[k] + fe[k]));
            err_v = e_lu.solve(&cont).unwrap_or_else(|| DVector::from_element(n, f64::INFINITY));
            err = rms((0..n).map(|k| err_v[k] / scal[k]), n).max(1e-10);
        }
        if !err.is_finite() {
            h *= 0.2;
            stats.rejected += 1;
            reject = true;
            continue;
        }

        let fac = SAFETY.min(SAFETY * (1 + 2 * MAX_NEWTON) as f64 / (newt + 2 * MAX_NEWTON) as f64);
        let quot = (err.powf(0.25) / fac).clamp(0.2, 8.0);
        let mut h_new = h / quot;
        if err < 1.0 {
            let t_new = if last { t1 } else { t + h };
            let step = Collocation { t, h, x: x.clone(), z };
            while next_out < output_times.len() && output_times[next_out] <= t_new {
                times.push(output_times[next_out]);
                states.push(step.state_at(output_times[next_out]));
                next_out += 1;
            }
            for k in 0..n {
                x[k] += step.z[2][k];
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteState(t_new));
            }
            stats.steps += 1;
            stats.min_step = stats.min_step.min(h);
            t = t_new;
            f0 = prob.f(t, &x);
            if reject {
                h_new = h_new.min(h);
            }
            last_step = Some(step);
            first = false;
            reject = false;
            h = h_new;
        } else {
            if first {
                h *= 0.1;
            } else {
                h = h_new;
            }
            stats.rejected += 1;
            reject = true;
        }
    }

    stats.rhs_evals = prob.rhs_evals;
    if stats.steps == 0 {
        stats.min_step = 0.0;
    }
    if states.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteState(t1));
    }
    let observations = states.iter().map(|s| system.observe(s, theta)).collect();
    Ok(Trajectory { times, states, observations, stats })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ode::{integrate, linspace};

    /// `x' = -λ(x - cos t) - sin t`, exact solution `cos t + (x0 - 1) e^{-λt}`.
    struct StiffLinear(f64);
    impl OdeSystem for StiffLinear {
        fn dim(&self) -> usize {
            1
        }
        fn rhs(&self, t: f64, x: &[f64], _th: &[f64], dx: &mut [f64]) {
            dx[0] = -self.0 * (x[0] - t.cos()) - t.sin();
        }
        fn initial_state(&self, _th: &[f64]) -> Vec<f64> {
            vec![2.0]
        }
    }

    struct Rotation;
    impl OdeSystem for Rotation {
        fn dim(&self) -> usize {
            2
        }
        fn rhs(&self, _t: f64, x: &[f64], _th: &[f64], dx: &mut [f64]) {
            dx[0] = -x[1];
            dx[1] = x[0];
        }
        fn initial_state(&self, _th: &[f64]) -> Vec<f64> {
            vec![1.0, 0.0]
        }
    }

    #[test]
    fn stiff_linear_matches_exact_with_few_steps() {
        let lambda = 1e5;
        for (tol, bound) in [(1e-8, 1e-6), (1e-10, 1e-8)] {
            let tr = integrate_stiff(&StiffLinear(lambda), &[], (0.0, 10.0), &[10.0], Tolerances::new(tol, tol * 1e-2))
                .unwrap();
            let exact = 10f64.cos();
            assert!((tr.states[0][0] - exact).abs() < bound, "{} vs {exact}", tr.states[0][0]);
            // An explicit method would need on the order of λ·T steps.
            assert!(tr.stats.steps < 500, "{:?}", tr.stats);
        }
    }

    #[test]
    fn agrees_with_explicit_solver_on_rotation() {
        let times = linspace(0.0, 20.0, 401);
        let tol = Tolerances::new(1e-10, 1e-12);
        let a = integrate_stiff(&Rotation, &[], (0.0, 20.0), &times, tol).unwrap();
        let b = integrate(&Rotation, &[], (0.0, 20.0), &times, tol).unwrap();
        for ((t, sa), sb) in a.times.iter().zip(&a.states).zip(&b.states) {
            assert!((sa[0] - t.cos()).abs() < 1e-7, "t={t}");
            assert!((sa[1] - t.sin()).abs() < 1e-7, "t={t}");
            assert!((sa[0] - sb[0]).abs() < 1e-7);
        }
    }

    #[test]
    fn rejects_bad_requests() {
        assert!(integrate_stiff(&Rotation, &[], (1.0, 0.0), &[], Tolerances::default()).is_err());
        assert!(integrate_stiff(&Rotation, &[], (0.0, 1.0), &[2.0], Tolerances::default()).is_err());
    }
}
