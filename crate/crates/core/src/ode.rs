//! ODE integration and limit-cycle period estimation.
//!
//! The integrator is the Dormand–Prince 5(4) pair with a PI step-size controller
//! and the pair's native fourth-order continuous extension for output at
//! arbitrary times. Stiff systems go through [`integrate_stiff`] (Radau IIA).

pub use crate::radau::integrate_stiff;

use crate::error::{Error, Result};

/// A parameterized first-order system `ẋ = w(t, x, θ)` observed through `y = v(x, θ)`.
pub trait OdeSystem: Send + Sync {
    fn dim(&self) -> usize;

    fn rhs(&self, t: f64, x: &[f64], theta: &[f64], dx: &mut [f64]);

    fn initial_state(&self, theta: &[f64]) -> Vec<f64>;

    /// Observation map; the identity by default.
    fn observe(&self, x: &[f64], _theta: &[f64]) -> Vec<f64> {
        x.to_vec()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub rel: f64,
    pub abs: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { rel: 1e-8, abs: 1e-10 }
    }
}

impl Tolerances {
    pub fn new(rel: f64, abs: f64) -> Self {
        Self { rel, abs }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SolverStats {
    pub steps: usize,
    pub rejected: usize,
    pub min_step: f64,
    pub rhs_evals: usize,
}

/// Solution sampled at the requested output times.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    /// One row per output time.
    pub states: Vec<Vec<f64>>,
    pub observations: Vec<Vec<f64>>,
    pub stats: SolverStats,
}

impl Trajectory {
    /// Time series of one state variable.
    pub fn component(&self, index: usize) -> Vec<f64> {
        self.states.iter().map(|row| row[index]).collect()
    }

    /// Build a trajectory from an externally sampled scalar signal.
    pub fn from_signal(times: Vec<f64>, values: Vec<f64>) -> Self {
        let states: Vec<Vec<f64>> = values.into_iter().map(|v| vec![v]).collect();
        Self { times, observations: states.clone(), states, stats: SolverStats::default() }
    }
}

// Dormand–Prince 5(4) tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
// Continuous extension.
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

const SAFETY: f64 = 0.9;
const BETA: f64 = 0.04;
const EXPO1: f64 = 0.2 - BETA * 0.75;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;
const MAX_STEPS: usize = 5_000_000;

struct Stepper<'a, S: OdeSystem + ?Sized> {
    system: &'a S,
    theta: &'a [f64],
    tol: Tolerances,
    k: [Vec<f64>; 7],
    tmp: Vec<f64>,
    rhs_evals: usize,
}

impl<'a, S: OdeSystem + ?Sized> Stepper<'a, S> {
    fn eval(&mut self, t: f64, x: &[f64], slot: usize) {
        let mut out = std::mem::take(&mut self.k[slot]);
        self.system.rhs(t, x, self.theta, &mut out);
        self.k[slot] = out;
        self.rhs_evals += 1;
    }

    fn error_norm(&self, x: &[f64], x_new: &[f64], err: &[f64]) -> f64 {
        let n = x.len();
        let sum: f64 = (0..n)
            .map(|i| {
                let sc = self.tol.abs + self.tol.rel * x[i].abs().max(x_new[i].abs());
                (err[i] / sc).powi(2)
            })
            .sum();
        (sum / n as f64).sqrt()
    }

    /// Starting step heuristic (Hairer, Nørsett & Wanner, II.4).
    fn initial_step(&mut self, t0: f64, x0: &[f64], span: f64) -> f64 {
        let n = x0.len();
        let sc: Vec<f64> = x0.iter().map(|v| self.tol.abs + self.tol.rel * v.abs()).collect();
        let d0 = (x0.iter().zip(&sc).map(|(v, s)| (v / s).powi(2)).sum::<f64>() / n as f64).sqrt();
        let d1 = (self.k[0].iter().zip(&sc).map(|(v, s)| (v / s).powi(2)).sum::<f64>() / n as f64).sqrt();
        let mut h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        h0 = h0.min(span);
        let x1: Vec<f64> = x0.iter().zip(&self.k[0]).map(|(x, k)| x + h0 * k).collect();
        self.eval(t0 + h0, &x1, 1);
        let d2 = (self.k[1]
            .iter()
            .zip(&self.k[0])
            .zip(&sc)
            .map(|((a, b), s)| ((a - b) / s).powi(2))
            .sum::<f64>()
            / n as f64)
            .sqrt()
            / h0;
        let m = d1.max(d2);
        let h1 = if m <= 1e-15 { (h0 * 1e-3).max(1e-6) } else { (0.01 / m).powf(0.2) };
        (100.0 * h0).min(h1).min(span)
    }
}

/// Validate an integration request and return the initial state.
pub(crate) fn check_request<S: OdeSystem + ?Sized>(
    system: &S,
    theta: &[f64],
    (t0, t1): (f64, f64),
    output_times: &[f64],
    tol: Tolerances,
) -> Result<Vec<f64>> {
    if !(t0 < t1) || !t0.is_finite() || !t1.is_finite() {
        return Err(Error::InvalidArgument(format!("time span ({t0}, {t1})")));
    }
    if !(tol.rel > 0.0 && tol.abs > 0.0) {
        return Err(Error::InvalidArgument("tolerances must be positive".into()));
    }
    if output_times.iter().any(|t| !(*t >= t0 && *t <= t1)) {
        return Err(Error::InvalidArgument("output time outside the integration span".into()));
    }
    if output_times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgument("output times must be strictly increasing".into()));
    }
    let n = system.dim();
    let x = system.initial_state(theta);
    if x.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: x.len() });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteState(t0));
    }
    Ok(x)
}

/// Integrate `system` over `t_span` and sample the solution at `output_times`.
///
/// Local error per step is held below `rel·|x| + abs` in the RMS norm.
pub fn integrate<S: OdeSystem + ?Sized>(
    system: &S,
    theta: &[f64],
    t_span: (f64, f64),
    output_times: &[f64],
    tol: Tolerances,
) -> Result<Trajectory> {
    let (t0, t1) = t_span;
    let mut x = check_request(system, theta, t_span, output_times, tol)?;
    let n = x.len();

    let mut st = Stepper {
        system,
        theta,
        tol,
        k: std::array::from_fn(|_| vec![0.0; n]),
        tmp: vec![0.0; n],
        rhs_evals: 0,
    };

    let mut times = Vec::with_capacity(output_times.len());
    let mut states = Vec::with_capacity(output_times.len());
    let mut next_out = 0;
    while next_out < output_times.len() && output_times[next_out] <= t0 {
        times.push(output_times[next_out]);
        states.push(x.clone());
        next_out += 1;
    }

    let span = t1 - t0;
    st.eval(t0, &x, 0);
    let mut h = st.initial_step(t0, &x, span);
    let mut t = t0;
    let mut x_new = vec![0.0; n];
    let mut err = vec![0.0; n];
    let mut rcont: [Vec<f64>; 5] = std::array::from_fn(|_| vec![0.0; n]);
    let mut fac_old = 1e-4_f64;
    let mut reject = false;
    let mut stats = SolverStats { min_step: f64::INFINITY, ..Default::default() };

    while t < t1 {
        if stats.steps + stats.rejected >= MAX_STEPS {
            return Err(Error::StepSizeUnderflow { t, h });
        }
        if h < 1e-14 * t.abs().max(span) {
            return Err(Error::StepSizeUnderflow { t, h });
        }
        let last = t + 1.01 * h >= t1;
        if last {
            h = t1 - t;
        }

        // stages 2..7
        for i in 0..n {
            st.tmp[i] = x[i] + h * A21 * st.k[0][i];
        }
        let y = st.tmp.clone();
        st.eval(t + C2 * h, &y, 1);
        for i in 0..n {
            st.tmp[i] = x[i] + h * (A31 * st.k[0][i] + A32 * st.k[1][i]);
        }
        let y = st.tmp.clone();
        st.eval(t + C3 * h, &y, 2);
        for i in 0..n {
            st.tmp[i] = x[i] + h * (A41 * st.k[0][i] + A42 * st.k[1][i] + A43 * st.k[2][i]);
        }
        let y = st.tmp.clone();
        st.eval(t + C4 * h, &y, 3);
        for i in 0..n {
            st.tmp[i] = x[i]
                + h * (A51 * st.k[0][i] + A52 * st.k[1][i] + A53 * st.k[2][i] + A54 * st.k[3][i]);
        }
        let y = st.tmp.clone();
        st.eval(t + C5 * h, &y, 4);
        for i in 0..n {
            st.tmp[i] = x[i]
                + h * (A61 * st.k[0][i]
                    + A62 * st.k[1][i]
                    + A63 * st.k[2][i]
                    + A64 * st.k[3][i]
                    + A65 * st.k[4][i]);
        }
        let y = st.tmp.clone();
        st.eval(t + h, &y, 5);
        for i in 0..n {
            x_new[i] = x[i]
                + h * (A71 * st.k[0][i]
                    + A73 * st.k[2][i]
                    + A74 * st.k[3][i]
                    + A75 * st.k[4][i]
                    + A76 * st.k[5][i]);
        }
        st.eval(t + h, &x_new, 6);
        for i in 0..n {
            err[i] = h
                * (E1 * st.k[0][i]
                    + E3 * st.k[2][i]
                    + E4 * st.k[3][i]
                    + E5 * st.k[4][i]
                    + E6 * st.k[5][i]
                    + E7 * st.k[6][i]);
        }

        let en = st.error_norm(&x, &x_new, &err);
        if !en.is_finite() {
            // Non-finite stage values: shrink hard and retry.
            stats.rejected += 1;
            reject = true;
            h *= FAC_MIN;
            if x_new.iter().any(|v| !v.is_finite()) && h < 1e-12 * span {
                return Err(Error::NonFiniteState(t));
            }
            continue;
        }

        let fac11 = en.powf(EXPO1);
        if en <= 1.0 {
            // accepted
            let mut fac = fac11 / fac_old.powf(BETA);
            fac = (fac / SAFETY).clamp(1.0 / FAC_MAX, 1.0 / FAC_MIN);
            let mut h_new = h / fac;
            fac_old = en.max(1e-4);

            for i in 0..n {
                let ydiff = x_new[i] - x[i];
                let bspl = h * st.k[0][i] - ydiff;
                rcont[0][i] = x[i];
                rcont[1][i] = ydiff;
                rcont[2][i] = bspl;
                rcont[3][i] = ydiff - h * st.k[6][i] - bspl;
                rcont[4][i] = h
                    * (D1 * st.k[0][i]
                        + D3 * st.k[2][i]
                        + D4 * st.k[3][i]
                        + D5 * st.k[4][i]
                        + D6 * st.k[5][i]
                        + D7 * st.k[6][i]);
            }
            let t_new = if last { t1 } else { t + h };
            while next_out < output_times.len() && output_times[next_out] <= t_new {
                let s = (output_times[next_out] - t) / h;
                let s1 = 1.0 - s;
                let row: Vec<f64> = (0..n)
                    .map(|i| {
                        rcont[0][i]
                            + s * (rcont[1][i]
                                + s1 * (rcont[2][i] + s * (rcont[3][i] + s1 * rcont[4][i])))
                    })
                    .collect();
                times.push(output_times[next_out]);
                states.push(row);
                next_out += 1;
            }

            stats.steps += 1;
            stats.min_step = stats.min_step.min(h);
            t = t_new;
            std::mem::swap(&mut x, &mut x_new);
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFiniteState(t));
            }
            st.k.swap(0, 6);
            if reject {
                h_new = h_new.min(h);
            }
            reject = false;
            h = h_new;
        } else {
            h /= (fac11 / SAFETY).min(1.0 / FAC_MIN);
            reject = true;
            stats.rejected += 1;
        }
    }
    stats.rhs_evals = st.rhs_evals;
    if stats.steps == 0 {
        stats.min_step = 0.0;
    }

    if states.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteState(t1));
    }
    let observations = states.iter().map(|s| system.observe(s, theta)).collect();
    Ok(Trajectory { times, states, observations, stats })
}

/// Evenly spaced output grid over `[t0, t1]` with `count` points (both ends included).
pub fn linspace(t0: f64, t1: f64, count: usize) -> Vec<f64> {
    match count {
        0 => vec![],
        1 => vec![t0],
        _ => {
            let d = (t1 - t0) / (count - 1) as f64;
            let mut v: Vec<f64> = (0..count).map(|i| t0 + d * i as f64).collect();
            v[count - 1] = t1;
            v
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PeriodEstimate {
    pub period: f64,
    pub n_peaks_used: usize,
    pub peak_times: Vec<f64>,
    /// Coefficient of variation of the inter-peak intervals.
    pub cv_interpeak: f64,
}

/// Peaks lower than this fraction of the window's range are treated as shoulders.
const MIN_PEAK_HEIGHT_FRACTION: f64 = 0.1;
const MIN_PEAKS: usize = 4;

/// Period of a sustained oscillation of one state variable.
///
/// The first `transient_fraction` of the time span is discarded. Strict local
/// maxima of the sampled signal are located to sub-sample accuracy with a
/// parabola through each discrete-maximum triple; the period is the mean
/// inter-peak interval. The signal is rejected as `NotPeriodic` when fewer than
/// four peaks remain, or when either the inter-peak intervals or the peak
/// heights (measured from the window minimum) have a coefficient of variation
/// above `periodicity_cv_tol`. The height gate rejects damped oscillations.
pub fn estimate_period(
    traj: &Trajectory,
    variable_index: usize,
    transient_fraction: f64,
    periodicity_cv_tol: f64,
) -> Result<PeriodEstimate> {
    if !(0.0..1.0).contains(&transient_fraction) {
        return Err(Error::InvalidArgument(format!("transient fraction {transient_fraction}")));
    }
    if traj.times.len() < 3 {
        return Err(Error::NotPeriodic("trajectory has fewer than three samples".into()));
    }
    if traj.states.first().is_none_or(|s| variable_index >= s.len()) {
        return Err(Error::InvalidArgument(format!("variable index {variable_index}")));
    }
    let t_first = traj.times[0];
    let t_last = *traj.times.last().unwrap();
    let cutoff = t_first + transient_fraction * (t_last - t_first);
    let start = traj.times.partition_point(|t| *t < cutoff);
    let times = &traj.times[start..];
    let values: Vec<f64> = traj.states[start..].iter().map(|r| r[variable_index]).collect();
    if values.len() < 3 {
        return Err(Error::NotPeriodic("window after transient is too short".into()));
    }

    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    if !(range > 0.0) {
        return Err(Error::NotPeriodic("signal is constant".into()));
    }

    let mut peak_times = Vec::new();
    let mut heights = Vec::new();
    for k in 1..values.len() - 1 {
        let (a, b, c) = (values[k - 1], values[k], values[k + 1]);
        if b > a && b > c {
            if b - lo < MIN_PEAK_HEIGHT_FRACTION * range {
                continue;
            }
            let (tp, xp) = parabola_vertex(
                (times[k - 1], a),
                (times[k], b),
                (times[k + 1], c),
            );
            peak_times.push(tp);
            heights.push(xp - lo);
        }
    }
    if peak_times.len() < MIN_PEAKS {
        return Err(Error::NotPeriodic(format!("found {} peaks, need {MIN_PEAKS}", peak_times.len())));
    }

    let intervals: Vec<f64> = peak_times.windows(2).map(|w| w[1] - w[0]).collect();
    let cv_interpeak = coefficient_of_variation(&intervals);
    if !(cv_interpeak <= periodicity_cv_tol) {
        return Err(Error::NotPeriodic(format!(
            "inter-peak coefficient of variation {cv_interpeak:.3e} exceeds {periodicity_cv_tol}"
        )));
    }
    let cv_height = coefficient_of_variation(&heights);
    if !(cv_height <= periodicity_cv_tol) {
        return Err(Error::NotPeriodic(format!(
            "peak height coefficient of variation {cv_height:.3e} exceeds {periodicity_cv_tol}"
        )));
    }
    let period = (peak_times[peak_times.len() - 1] - peak_times[0]) / intervals.len() as f64;
    Ok(PeriodEstimate { period, n_peaks_used: peak_times.len(), peak_times, cv_interpeak })
}

fn parabola_vertex(p0: (f64, f64), p1: (f64, f64), p2: (f64, f64)) -> (f64, f64) {
    let (t0, x0) = p0;
    let (t1, x1) = p1;
    let (t2, x2) = p2;
    let num = (t1 - t0).powi(2) * (x1 - x2) - (t1 - t2).powi(2) * (x1 - x0);
    let den = (t1 - t0) * (x1 - x2) - (t1 - t2) * (x1 - x0);
    if den == 0.0 {
        return p1;
    }
    let tv = t1 - 0.5 * num / den;
    // Lagrange form evaluated at the vertex.
    let l0 = (tv - t1) * (tv - t2) / ((t0 - t1) * (t0 - t2));
    let l1 = (tv - t0) * (tv - t2) / ((t1 - t0) * (t1 - t2));
    let l2 = (tv - t0) * (tv - t1) / ((t2 - t0) * (t2 - t1));
    (tv, x0 * l0 + x1 * l1 + x2 * l2)
}

fn coefficient_of_variation(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return 0.0;
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    var.sqrt() / mean.abs()
}
