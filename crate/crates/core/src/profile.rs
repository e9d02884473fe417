//! Parameter profiles: fix one parameter on a grid, refit the rest by least
//! squares against the reference output, then read off confidence intervals
//! and parameter relationships.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use statrs::function::gamma::gamma_lr;

use crate::error::{Error, Result};
use crate::io::{Cell, Table};
use crate::model::{squared_distance, ParametricModel};
use crate::optim::{nelder_mead, Bounds, NelderMeadOptions};

pub const MIN_SUCCESSFUL_POINTS: usize = 5;
pub const DEFAULT_FLATNESS_FACTOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct ProfileOptions {
    /// Extra random starts per grid point; the best result wins.
    pub restarts: usize,
    pub seed: u64,
    pub optimizer: NelderMeadOptions,
    /// `ftol` is multiplied by `max(1, ‖f(θ̂)‖²)` so that it is relative to the
    /// output scale.
    pub relative_ftol: bool,
    /// Full-length bounds; the grid must lie inside bound `i` and the others
    /// clip the optimizer.
    pub bounds: Option<Bounds>,
    /// Random restarts draw each free coordinate uniformly from
    /// `θ̂_j · [1 − spread, 1 + spread]`.
    pub restart_spread: f64,
}

impl Default for ProfileOptions {
    fn default() -> Self {
        Self {
            restarts: 0,
            seed: 0,
            optimizer: NelderMeadOptions { max_iter: 20_000, xtol: 1e-10, ftol: 1e-16, initial_step: None },
            relative_ftol: true,
            bounds: None,
            restart_spread: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointStats {
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    /// Set when no finite cost could be found at this grid value.
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProfileTrace {
    pub parameter_index: usize,
    pub theta_hat: Vec<f64>,
    pub grid: Vec<f64>,
    /// `+∞` at failed points.
    pub cost_min: Vec<f64>,
    /// One row of n − 1 fitted values per grid point, in parameter order with
    /// index `parameter_index` removed.
    pub argmin_others: Vec<Vec<f64>>,
    pub stats: Vec<PointStats>,
}

impl ProfileTrace {
    pub fn successful(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.grid.len()).filter(|&g| self.stats[g].failure.is_none())
    }

    /// Full parameter vector at grid point `g`.
    pub fn full_point(&self, g: usize) -> Vec<f64> {
        let mut p = self.argmin_others[g].clone();
        p.insert(self.parameter_index, self.grid[g]);
        p
    }
}

/// `points` values from `(1 − frac)·center` to `(1 + frac)·center`. With an
/// odd count the middle value is exactly `center`. Log-spaced when the span
/// ratio exceeds 10 and the center is positive.
pub fn default_grid(center: f64, frac: f64, points: usize) -> Result<Vec<f64>> {
    if points < 2 || !(frac > 0.0) || !center.is_finite() {
        return Err(Error::InvalidArgument(format!("grid of {points} points at ±{frac}")));
    }
    let lo = center - frac * center.abs();
    let hi = center + frac * center.abs();
    let log = center > 0.0 && lo > 0.0 && hi / lo > 10.0;
    let mut grid = grid_between(lo, hi, points, log)?;
    if points % 2 == 1 {
        grid[points / 2] = center;
    }
    Ok(grid)
}

pub fn grid_between(lo: f64, hi: f64, points: usize, log: bool) -> Result<Vec<f64>> {
    if points < 2 || !(lo < hi) || (log && lo <= 0.0) {
        return Err(Error::InvalidArgument(format!("grid [{lo}, {hi}] with {points} points")));
    }
    let last = (points - 1) as f64;
    Ok((0..points)
        .map(|j| {
            let t = j as f64 / last;
            if log {
                (lo.ln() + t * (hi.ln() - lo.ln())).exp()
            } else {
                lo + t * (hi - lo)
            }
        })
        .collect())
}

/// Profile parameter `i` of `model` around `theta_hat` over `grid`.
///
/// Free parameters are optimized in coordinates divided by `|θ̂_j|` (1 for
/// zeros). Starting at the grid value nearest `θ̂_i`, two sweeps run outward,
/// each warm-started from the previous point's argmin.
pub fn profile_parameter(
    model: &ParametricModel,
    theta_hat: &[f64],
    i: usize,
    grid: &[f64],
    opts: &ProfileOptions,
) -> Result<ProfileTrace> {
    let n = model.n();
    if theta_hat.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: theta_hat.len() });
    }
    if i >= n {
        return Err(Error::InvalidArgument(format!("parameter index {i} for n = {n}")));
    }
    if grid.is_empty() || grid.iter().any(|g| !g.is_finite()) {
        return Err(Error::InvalidArgument("empty or non-finite profile grid".into()));
    }
    let increasing = grid.windows(2).all(|w| w[0] < w[1]);
    let decreasing = grid.windows(2).all(|w| w[0] > w[1]);
    if !(increasing || decreasing) {
        return Err(Error::InvalidArgument("profile grid must be strictly monotone".into()));
    }
    if let Some(b) = &opts.bounds {
        if b.lower.len() != n || b.upper.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: b.lower.len() });
        }
        if let Some(g) = grid.iter().find(|g| **g < b.lower[i] || **g > b.upper[i]) {
            return Err(Error::OutOfBounds(format!("grid value {g} outside [{}, {}]", b.lower[i], b.upper[i])));
        }
    }

    let reference = model.evaluate(theta_hat)?;
    let ref_norm2: f64 = reference.iter().map(|v| v * v).sum();
    let mut nm = opts.optimizer.clone();
    if opts.relative_ftol {
        nm.ftol *= ref_norm2.max(1.0);
    }

    let free: Vec<usize> = (0..n).filter(|&j| j != i).collect();
    let scale: Vec<f64> = free.iter().map(|&j| if theta_hat[j] != 0.0 { theta_hat[j].abs() } else { 1.0 }).collect();
    let scaled_bounds = opts.bounds.as_ref().map(|b| Bounds {
        lower: free.iter().zip(&scale).map(|(&j, s)| b.lower[j] / s).collect(),
        upper: free.iter().zip(&scale).map(|(&j, s)| b.upper[j] / s).collect(),
    });
    let u_hat: Vec<f64> = free.iter().zip(&scale).map(|(&j, s)| theta_hat[j] / s).collect();

    let assemble = |fixed: f64, u: &[f64]| -> Vec<f64> {
        let mut p = Vec::with_capacity(n);
        let mut k = 0;
        for j in 0..n {
            if j == i {
                p.push(fixed);
            } else {
                p.push(u[k] * scale[k]);
                k += 1;
            }
        }
        p
    };
    let cost_at = |fixed: f64, u: &[f64]| -> f64 {
        match model.evaluate(&assemble(fixed, u)) {
            Ok(y) => squared_distance(&y, &reference),
            Err(_) => f64::INFINITY,
        }
    };

    // Fit one grid point from `start` plus seeded restarts.
    let fit = |g: usize, start: &[f64]| -> (Vec<f64>, f64, PointStats) {
        let fixed = grid[g];
        let mut starts = vec![start.to_vec()];
        let mut rng = ChaCha20Rng::seed_from_u64(opts.seed ^ (g as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        for _ in 0..opts.restarts {
            starts.push(
                u_hat
                    .iter()
                    .map(|u| u * (1.0 + opts.restart_spread * (2.0 * rng.random::<f64>() - 1.0)))
                    .collect(),
            );
        }
        let results: Vec<_> = starts
            .par_iter()
            .map(|x0| nelder_mead(|u| cost_at(fixed, u), x0, scaled_bounds.as_ref(), &nm))
            .collect();
        let mut best: Option<(Vec<f64>, f64, PointStats)> = None;
        let mut last_err = None;
        for r in results {
            match r {
                Ok(r) => {
                    if best.as_ref().is_none_or(|b| r.f < b.1) {
                        let stats = PointStats {
                            iterations: r.iterations,
                            evaluations: r.evaluations,
                            converged: r.converged,
                            failure: None,
                        };
                        best = Some((r.x, r.f, stats));
                    }
                }
                Err(e) => last_err = Some(e),
            }
        }
        match best {
            Some(b) if b.1.is_finite() => b,
            _ => {
                let msg = last_err.map(|e| format!("{}: {e}", e.class())).unwrap_or_else(|| "non-finite cost".into());
                let stats = PointStats { iterations: 0, evaluations: 0, converged: false, failure: Some(msg) };
                (vec![f64::NAN; free.len()], f64::INFINITY, stats)
            }
        }
    };

    let sweep = |order: Vec<usize>| -> Vec<(usize, Vec<f64>, f64, PointStats)> {
        let mut out = Vec::with_capacity(order.len());
        let mut warm = u_hat.clone();
        for g in order {
            let (u, f, stats) = fit(g, &warm);
            if stats.failure.is_none() {
                warm = u.clone();
            }
            out.push((g, u, f, stats));
        }
        out
    };

    let center = (0..grid.len())
        .min_by(|&a, &b| (grid[a] - theta_hat[i]).abs().total_cmp(&(grid[b] - theta_hat[i]).abs()))
        .unwrap();
    let up: Vec<usize> = (center..grid.len()).collect();
    let down: Vec<usize> = (0..center).rev().collect();
    let (a, b) = rayon::join(|| sweep(up), || sweep(down));

    let len = grid.len();
    let mut cost_min = vec![f64::INFINITY; len];
    let mut argmin_others = vec![Vec::new(); len];
    let mut stats = vec![None; len];
    for (g, u, f, s) in a.into_iter().chain(b) {
        cost_min[g] = f;
        argmin_others[g] = u.iter().zip(&scale).map(|(v, s)| v * s).collect();
        stats[g] = Some(s);
    }
    Ok(ProfileTrace {
        parameter_index: i,
        theta_hat: theta_hat.to_vec(),
        grid: grid.to_vec(),
        cost_min,
        argmin_others,
        stats: stats.into_iter().map(Option::unwrap).collect(),
    })
}

/// Δ = χ²-quantile(1 − α; dof) / 2.
///
/// The quantile is found by bisection on the regularized lower incomplete
/// gamma function P(dof/2, x/2) until the bracket is narrower than 1e-10.
pub fn chi2_threshold(alpha: f64, dof: usize) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!("alpha = {alpha} not in (0, 1)")));
    }
    if dof == 0 {
        return Err(Error::InvalidArgument("chi-square needs dof >= 1".into()));
    }
    let p = 1.0 - alpha;
    let a = dof as f64 / 2.0;
    let cdf = |x: f64| gamma_lr(a, x / 2.0);
    let mut lo = 0.0;
    let mut hi = dof as f64 + 10.0;
    while cdf(hi) < p {
        hi *= 2.0;
    }
    while hi - lo > 1e-10 {
        let mid = 0.5 * (lo + hi);
        if cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.25 * (lo + hi))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Lower,
    Upper,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum IntervalShape {
    Empty,
    Finite { lo: f64, hi: f64 },
    /// Unbounded on `open_side`; `bound` closes the other side.
    HalfInfinite { open_side: Side, bound: f64 },
    Infinite,
}

impl IntervalShape {
    pub fn label(&self) -> &'static str {
        match self {
            IntervalShape::Empty => "empty",
            IntervalShape::Finite { .. } => "finite",
            IntervalShape::HalfInfinite { .. } => "half_infinite",
            IntervalShape::Infinite => "infinite",
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        match *self {
            IntervalShape::Empty => false,
            IntervalShape::Finite { lo, hi } => lo <= x && x <= hi,
            IntervalShape::HalfInfinite { open_side: Side::Lower, bound } => x <= bound,
            IntervalShape::HalfInfinite { open_side: Side::Upper, bound } => x >= bound,
            IntervalShape::Infinite => true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Classification {
    Identifiable,
    PracticallyUnidentifiable,
    StructurallySuspect,
}

impl Classification {
    pub fn as_str(&self) -> &'static str {
        match self {
            Classification::Identifiable => "identifiable",
            Classification::PracticallyUnidentifiable => "practically_unidentifiable",
            Classification::StructurallySuspect => "structurally_suspect",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfidenceInterval {
    pub threshold: f64,
    pub flatness_tol: f64,
    pub interval: IntervalShape,
    pub classification: Classification,
    pub max_cost: f64,
}

/// Flatness tolerance `factor · (max |f(θ̂)|)²`.
pub fn flatness_tolerance(reference: &[f64], factor: f64) -> f64 {
    let scale = reference.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    factor * scale * scale
}

/// Confidence set `{θ_i* | c < Δ}` from a trace.
///
/// Costs are linearly interpolated between successful grid points. When the
/// sub-threshold set has several pieces, the one containing the smallest cost
/// is reported. A profile whose largest cost is below `flatness_tol` is
/// structurally suspect whatever its interval; otherwise a finite (or empty)
/// interval means identifiable and an unbounded one practically
/// unidentifiable.
pub fn classify_profile(trace: &ProfileTrace, delta: f64, flatness_tol: f64) -> Result<ConfidenceInterval> {
    if !(delta >= 0.0) {
        return Err(Error::InvalidArgument(format!("threshold {delta}")));
    }
    let mut pts: Vec<(f64, f64)> = trace.successful().map(|g| (trace.grid[g], trace.cost_min[g])).collect();
    if pts.len() < MIN_SUCCESSFUL_POINTS {
        return Err(Error::InsufficientTrace { successful: pts.len(), required: MIN_SUCCESSFUL_POINTS });
    }
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let max_cost = pts.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);

    let best = (0..pts.len()).min_by(|&a, &b| pts[a].1.total_cmp(&pts[b].1)).unwrap();
    let interval = if pts[best].1 >= delta {
        IntervalShape::Empty
    } else {
        let mut l = best;
        while l > 0 && pts[l - 1].1 < delta {
            l -= 1;
        }
        let mut r = best;
        while r + 1 < pts.len() && pts[r + 1].1 < delta {
            r += 1;
        }
        let crossing = |inside: (f64, f64), outside: (f64, f64)| {
            let t = (delta - inside.1) / (outside.1 - inside.1);
            inside.0 + t * (outside.0 - inside.0)
        };
        let lo = (l > 0).then(|| crossing(pts[l], pts[l - 1]));
        let hi = (r + 1 < pts.len()).then(|| crossing(pts[r], pts[r + 1]));
        match (lo, hi) {
            (Some(lo), Some(hi)) => IntervalShape::Finite { lo, hi },
            (None, Some(hi)) => IntervalShape::HalfInfinite { open_side: Side::Lower, bound: hi },
            (Some(lo), None) => IntervalShape::HalfInfinite { open_side: Side::Upper, bound: lo },
            (None, None) => IntervalShape::Infinite,
        }
    };
    let classification = if max_cost < flatness_tol {
        Classification::StructurallySuspect
    } else {
        match interval {
            IntervalShape::Empty | IntervalShape::Finite { .. } => Classification::Identifiable,
            _ => Classification::PracticallyUnidentifiable,
        }
    };
    Ok(ConfidenceInterval { threshold: delta, flatness_tol, interval, classification, max_cost })
}

fn others<'a>(names: &'a [String], i: usize) -> impl Iterator<Item = &'a String> {
    names.iter().enumerate().filter(move |(j, _)| *j != i).map(|(_, n)| n)
}

fn check_names(trace: &ProfileTrace, names: &[String]) -> Result<()> {
    if names.len() != trace.theta_hat.len() {
        return Err(Error::DimensionMismatch { expected: trace.theta_hat.len(), got: names.len() });
    }
    Ok(())
}

fn ln_or_nan(v: f64) -> f64 {
    if v > 0.0 { v.ln() } else { f64::NAN }
}

/// Rows `(θ_i*, argmin θ_j…, log θ_i*, log θ_j…)` over successful points.
/// Logs of non-positive values are NaN.
pub fn relationship_table(trace: &ProfileTrace, names: &[String]) -> Result<Table> {
    check_names(trace, names)?;
    let pi = &names[trace.parameter_index];
    let mut header = vec![pi.clone()];
    header.extend(others(names, trace.parameter_index).cloned());
    header.push(format!("log_{pi}"));
    header.extend(others(names, trace.parameter_index).map(|n| format!("log_{n}")));
    let mut t = Table::new(header);
    for g in trace.successful() {
        let mut row = vec![trace.grid[g]];
        row.extend(&trace.argmin_others[g]);
        row.push(ln_or_nan(trace.grid[g]));
        row.extend(trace.argmin_others[g].iter().map(|v| ln_or_nan(*v)));
        t.push_numeric(&row)?;
    }
    Ok(t)
}

/// Rows `(θ_i*, cost, iterations, converged, argmin θ_j…)` over every grid
/// point, failed ones included with cost `inf`.
pub fn profile_table(trace: &ProfileTrace, names: &[String]) -> Result<Table> {
    check_names(trace, names)?;
    let mut header = vec![names[trace.parameter_index].clone(), "cost".into(), "iterations".into(), "converged".into()];
    header.extend(others(names, trace.parameter_index).cloned());
    let mut t = Table::new(header);
    for g in 0..trace.grid.len() {
        let s = &trace.stats[g];
        let mut row = vec![
            Cell::Num(trace.grid[g]),
            Cell::Num(trace.cost_min[g]),
            Cell::Num(s.iterations as f64),
            Cell::Text(if s.failure.is_some() { "failed".into() } else { s.converged.to_string() }),
        ];
        row.extend(trace.argmin_others[g].iter().map(|v| Cell::Num(*v)));
        t.push_row(row)?;
    }
    Ok(t)
}

/// Least-squares slope of `y` against `x`, skipping non-finite pairs.
pub fn fit_slope(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch { expected: x.len(), got: y.len() });
    }
    let pairs: Vec<(f64, f64)> = x.iter().zip(y).filter(|(a, b)| a.is_finite() && b.is_finite()).map(|(a, b)| (*a, *b)).collect();
    if pairs.len() < 2 {
        return Err(Error::InvalidArgument("slope needs two finite points".into()));
    }
    let k = pairs.len() as f64;
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pairs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pairs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidArgument("slope of a vertical set".into()));
    }
    Ok(sxy / sxx)
}
