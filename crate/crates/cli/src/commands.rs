use prt_core::io::{join_numbers, sha256_hex};
use prt_core::profile::{default_grid, flatness_tolerance, grid_between, profile_table, DEFAULT_FLATNESS_FACTOR};
use prt_core::{
    average_sfim, chi2_threshold, classify_profile, eigendecompose, identifiability_verdict, jacobian_fd,
    local_sfim, low_rank_eval, partition, profile_parameter, relationship_table, sample, summary_table,
    unit_scaled_model, write_report, AnalysisArtifact, ArtifactKind, AverageSfim, Bounds, Cell, DiffMethod,
    EigenAnalysis, IntervalShape, KeyValues, ParameterSpace, ParametricModel, Payload, ProfileOptions, Provenance,
    SampleSet, Scaling, SubspacePartition, Table,
};

use crate::config::RunConfig;
use crate::resolve::{Qoi, Resolved};
use crate::{CliError, RunSummary};

pub const DEFAULT_PROFILE_POINTS: usize = 21;
pub const DEFAULT_PROFILE_SPAN: f64 = 0.5;
pub const DEFAULT_APPROX_SAMPLES: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Sfim,
    Active,
    Profile,
    Approx,
}

impl Command {
    pub fn as_str(&self) -> &'static str {
        match self {
            Command::Sfim => "sfim",
            Command::Active => "active",
            Command::Profile => "profile",
            Command::Approx => "approx",
        }
    }
}

/// Everything a command hands back before it is written out.
struct Report {
    artifacts: Vec<(ArtifactKind, Option<String>, Payload)>,
    meta: KeyValues,
}

impl Report {
    fn new() -> Self {
        Self { artifacts: Vec::new(), meta: KeyValues::default() }
    }

    fn table(&mut self, kind: ArtifactKind, qualifier: Option<String>, t: Table) {
        self.artifacts.push((kind, qualifier, Payload::Table(t)));
    }
}

/// Model and sample coordinates after the configured scaling.
struct Frame {
    model: ParametricModel,
    unit: Option<ParameterSpace>,
    fd: prt_core::FdOptions,
}

impl Frame {
    fn new(r: &Resolved) -> Result<Self, CliError> {
        match r.space.scaling() {
            Scaling::Raw => Ok(Self { model: r.analysed.clone(), unit: None, fd: r.fd }),
            Scaling::CenteredUnit => {
                if r.fd.method == DiffMethod::Analytic {
                    return Err(CliError::Config("fd_method = \"analytic\" needs scaling = \"raw\"".into()));
                }
                let n = r.space.dim();
                let unit = ParameterSpace::new(r.names.clone(), vec![-1.0; n], vec![1.0; n])?;
                // Unit coordinates sit near zero, so the step floor is the unit scale.
                let fd = prt_core::FdOptions { absolute_floor: 1.0, ..r.fd };
                Ok(Self { model: unit_scaled_model(&r.analysed, &r.space)?, unit: Some(unit), fd })
            }
        }
    }

    fn point(&self, r: &Resolved, theta: &[f64]) -> Result<Vec<f64>, CliError> {
        Ok(r.space.to_scaled(theta)?)
    }

    fn samples(&self, r: &Resolved, raw: SampleSet) -> Result<SampleSet, CliError> {
        match &self.unit {
            None => Ok(raw),
            Some(unit) => {
                let points = raw.points.iter().map(|p| r.space.scale_to_unit(p)).collect::<prt_core::Result<_>>()?;
                Ok(SampleSet { points, space: unit.clone(), ..raw })
            }
        }
    }
}

pub fn run_command(command: Command, cfg: &RunConfig, r: &Resolved, config_bytes: &[u8]) -> Result<RunSummary, CliError> {
    let report = match command {
        Command::Sfim => sfim(r)?,
        Command::Active => active(cfg, r)?,
        Command::Profile => profile(cfg, r)?,
        Command::Approx => approx(cfg, r)?,
    };
    let mut hashed = config_bytes.to_vec();
    hashed.extend_from_slice(format!("\nseed={}", r.seed).as_bytes());
    let prov = Provenance::new(&r.entry.name, command.as_str(), &sha256_hex(&hashed), Some(r.seed));

    let mut meta = common_meta(command, r);
    for (k, v) in report.meta.entries {
        meta.insert(k, v);
    }
    let mut artifacts: Vec<AnalysisArtifact> = report
        .artifacts
        .into_iter()
        .map(|(kind, qualifier, payload)| AnalysisArtifact { kind, qualifier, payload, provenance: prov.clone() })
        .collect();
    artifacts.push(AnalysisArtifact {
        kind: ArtifactKind::Metadata,
        qualifier: None,
        payload: Payload::KeyValues(meta),
        provenance: prov,
    });
    let manifest = write_report(&artifacts, &r.output_dir)?;
    Ok(RunSummary { dir: manifest.dir, files: manifest.entries.into_iter().map(|e| e.file).collect() })
}

fn common_meta(command: Command, r: &Resolved) -> KeyValues {
    let mut kv = KeyValues::default();
    kv.insert("model", r.entry.name);
    kv.insert("command", command.as_str());
    kv.insert("seed", r.seed.to_string());
    kv.insert("parameters", r.names.join(";"));
    kv.insert("theta_hat", join_numbers(&r.theta_hat));
    kv.insert("qoi", r.qoi.as_str());
    kv.insert("fd_method", r.fd.method.as_str());
    kv.insert("fd_step", r.fd.relative_step.to_string());
    kv.insert("rank_tolerance", r.rank_tolerance.to_string());
    kv.insert("gap_ratio", r.gap_ratio.to_string());
    kv.insert("bounds_lo", join_numbers(r.space.lower()));
    kv.insert("bounds_hi", join_numbers(r.space.upper()));
    kv.insert("scaling", r.space.scaling().as_str());
    kv
}

fn eigen_tables(eig: &EigenAnalysis, names: &[String]) -> Result<(Table, Table), CliError> {
    let mut values = Table::new(vec!["index".into(), "eigenvalue".into(), "relative".into()]);
    let lead = eig.eigenvalues.get(0).copied().unwrap_or(0.0);
    for (i, v) in eig.eigenvalues.iter().enumerate() {
        let rel = if lead > 0.0 { v / lead } else { f64::NAN };
        values.push_numeric(&[(i + 1) as f64, *v, rel])?;
    }
    let mut header = vec!["parameter".to_string()];
    header.extend((1..=eig.dim()).map(|i| format!("w{i}")));
    let mut vectors = Table::new(header);
    for (row, name) in names.iter().enumerate() {
        let mut cells = vec![Cell::Text(name.clone())];
        cells.extend((0..eig.dim()).map(|c| Cell::Num(eig.eigenvectors[(row, c)])));
        vectors.push_row(cells)?;
    }
    Ok((values, vectors))
}

fn sfim(r: &Resolved) -> Result<Report, CliError> {
    let frame = Frame::new(r)?;
    let at = frame.point(r, &r.theta_hat)?;
    let jac = jacobian_fd(&frame.model, &at, &frame.fd)?;
    let f = local_sfim(&jac);
    let eig = eigendecompose(&f.matrix, r.rank_tolerance)?;
    let verdict = identifiability_verdict(&eig, r.names.len(), r.near_ratio);

    let mut rep = Report::new();
    let (values, vectors) = eigen_tables(&eig, &r.names)?;
    rep.table(ArtifactKind::Eigenvalues, None, values);
    rep.table(ArtifactKind::Eigenvectors, None, vectors);
    rep.meta.insert("n_samples", "1");
    rep.meta.insert("numerical_rank", eig.numerical_rank.to_string());
    rep.meta.insert("sloppiness_ratio", eig.sloppiness_ratio.to_string());
    rep.meta.insert("near_ratio", r.near_ratio.to_string());
    rep.meta.insert("verdict", verdict.label());
    rep.meta.insert("fd_steps", join_numbers(&jac.step_sizes));
    Ok(rep)
}

struct ActiveRun {
    frame: Frame,
    samples: SampleSet,
    avg: AverageSfim,
    part: SubspacePartition,
}

fn run_active(r: &Resolved, seed: u64) -> Result<ActiveRun, CliError> {
    let frame = Frame::new(r)?;
    let raw = sample(&r.space, r.scheme, r.n_samples, seed)?;
    let samples = frame.samples(r, raw)?;
    let avg = average_sfim(&frame.model, &samples, &frame.fd, r.rank_tolerance)?;
    let part = partition(&avg.eig, r.criterion)?;
    Ok(ActiveRun { frame, samples, avg, part })
}

fn active_meta(rep: &mut Report, run: &ActiveRun) {
    let avg = &run.avg;
    rep.meta.insert("sampling", avg.meta.scheme.as_str());
    rep.meta.insert("rng", prt_core::sampling::RNG_ALGORITHM);
    rep.meta.insert("n_samples", avg.meta.n_requested.to_string());
    rep.meta.insert("n_used", avg.n_samples_used.to_string());
    rep.meta.insert("n_excluded", avg.excluded.len().to_string());
    for e in &avg.excluded {
        rep.meta.insert(format!("excluded_{}", e.index), e.reason.clone());
    }
    if let Some(a) = avg.meta.acceptance_rate {
        rep.meta.insert("acceptance_rate", a.to_string());
    }
    rep.meta.insert("numerical_rank", avg.eig.numerical_rank.to_string());
    rep.meta.insert("partition", run.part.criterion.describe());
    rep.meta.insert("partition_record", run.part.record.clone());
    rep.meta.insert("active_dimension", run.part.r.to_string());
}

/// Scalar QOI per used sample: the output itself for scalar models, otherwise
/// the squared distance to the output at θ̂.
fn qoi_values(r: &Resolved, avg: &AverageSfim) -> Result<Vec<f64>, CliError> {
    if r.analysed.m() == 1 {
        return Ok(avg.outputs.iter().map(|y| y[0]).collect());
    }
    let reference = r.analysed.evaluate(&r.theta_hat)?;
    Ok(avg.outputs.iter().map(|y| y.iter().zip(&reference).map(|(a, b)| (a - b) * (a - b)).sum()).collect())
}

fn active(cfg: &RunConfig, r: &Resolved) -> Result<Report, CliError> {
    let run = run_active(r, r.seed)?;
    let mut rep = Report::new();
    active_meta(&mut rep, &run);

    let q = qoi_values(r, &run.avg)?;
    let mut header = vec!["index".to_string()];
    header.extend(r.names.iter().cloned());
    header.extend(["used".to_string(), "q".to_string()]);
    let mut samples = Table::new(header);
    let mut used = run.avg.used.iter().zip(&q).peekable();
    for (i, p) in run.samples.points.iter().enumerate() {
        let mut row = vec![Cell::Num(i as f64)];
        row.extend(p.iter().map(|v| Cell::Num(*v)));
        match used.peek() {
            Some((&u, &qv)) if u == i => {
                row.extend([Cell::Text("true".into()), Cell::Num(qv)]);
                used.next();
            }
            _ => row.extend([Cell::Text("false".into()), Cell::Num(f64::NAN)]),
        }
        samples.push_row(row)?;
    }
    rep.table(ArtifactKind::Samples, None, samples);

    let (values, vectors) = eigen_tables(&run.avg.eig, &r.names)?;
    rep.table(ArtifactKind::Eigenvalues, None, values);
    rep.table(ArtifactKind::Eigenvectors, None, vectors);

    let points = run.avg.used_points(&run.samples);
    let rows = cfg.partition.summary_rows.clone().unwrap_or_else(|| vec![1]);
    for rows in rows {
        if rows == 0 || rows > run.part.r {
            return Err(CliError::Config(format!(
                "summary_rows entry {rows} outside 1..={} (active dimension)",
                run.part.r
            )));
        }
        let s = summary_table(&points, &q, &run.part, rows)?;
        let mut header: Vec<String> = (1..=rows).map(|k| format!("w{k}_theta")).collect();
        header.push("q".into());
        let mut t = Table::new(header);
        for (c, qv) in s.coordinates.iter().zip(&s.q) {
            let mut row = c.clone();
            row.push(*qv);
            t.push_numeric(&row)?;
        }
        rep.table(ArtifactKind::Summary, Some(rows.to_string()), t);
    }
    Ok(rep)
}

fn approx(cfg: &RunConfig, r: &Resolved) -> Result<Report, CliError> {
    let run = run_active(r, r.seed)?;
    let mut rep = Report::new();
    active_meta(&mut rep, &run);
    let (values, vectors) = eigen_tables(&run.avg.eig, &r.names)?;
    rep.table(ArtifactKind::Eigenvalues, None, values);
    rep.table(ArtifactKind::Eigenvectors, None, vectors);

    let n_test = cfg.approx.n.unwrap_or(DEFAULT_APPROX_SAMPLES);
    let scheme = match cfg.approx.scheme.as_deref() {
        None => r.scheme,
        Some(s) => prt_core::SampleScheme::parse(s).map_err(|e| CliError::Config(e.to_string()))?,
    };
    let test_seed = cfg.approx.seed.unwrap_or(r.seed.wrapping_add(1));
    let test = run.frame.samples(r, sample(&r.space, scheme, n_test, test_seed)?)?;

    let mut header = vec!["index".to_string()];
    header.extend(r.names.iter().cloned());
    header.extend(["relative_deviation".to_string(), "status".to_string()]);
    let mut table = Table::new(header);
    let mut devs = Vec::new();
    let mut failed = 0usize;
    for (i, p) in test.points.iter().enumerate() {
        let outcome = run.frame.model.evaluate(p).and_then(|f| low_rank_eval(&run.frame.model, &run.part, p).map(|g| (f, g)));
        let mut row = vec![Cell::Num(i as f64)];
        row.extend(p.iter().map(|v| Cell::Num(*v)));
        match outcome {
            Ok((f, g)) => {
                let d = relative_deviation(&f, &g);
                devs.push(d);
                row.extend([Cell::Num(d), Cell::Text("ok".into())]);
            }
            Err(e) => {
                failed += 1;
                row.extend([Cell::Num(f64::NAN), Cell::Text(e.class().into())]);
            }
        }
        table.push_row(row)?;
    }
    rep.table(ArtifactKind::Samples, Some("approx".into()), table);
    if devs.is_empty() {
        return Err(prt_core::Error::TooManyFailures { failed, total: test.len() }.into());
    }
    let max = devs.iter().copied().fold(0.0_f64, f64::max);
    let mean = devs.iter().sum::<f64>() / devs.len() as f64;
    rep.meta.insert("approx_seed", test_seed.to_string());
    rep.meta.insert("approx_n", n_test.to_string());
    rep.meta.insert("approx_failed", failed.to_string());
    rep.meta.insert("max_relative_deviation", max.to_string());
    rep.meta.insert("mean_relative_deviation", mean.to_string());
    Ok(rep)
}

/// `‖g − f‖ / ‖f‖`, or the absolute norm when `f` vanishes.
pub fn relative_deviation(f: &[f64], g: &[f64]) -> f64 {
    let diff = f.iter().zip(g).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    let norm = f.iter().map(|a| a * a).sum::<f64>().sqrt();
    if norm > 0.0 {
        diff / norm
    } else {
        diff
    }
}

fn profile(cfg: &RunConfig, r: &Resolved) -> Result<Report, CliError> {
    let pc = &cfg.profile;
    let n = r.names.len();
    if r.qoi == Qoi::Period {
        return Err(CliError::Config("profiles need a vector model output, not the period".into()));
    }
    let delta = match (pc.delta, pc.alpha) {
        (Some(_), Some(_)) => return Err(CliError::Config("profile: give alpha or delta, not both".into())),
        (Some(d), None) if d > 0.0 => d,
        (Some(d), None) => return Err(CliError::Config(format!("profile.delta must be positive, got {d}"))),
        (None, Some(a)) => {
            if !(a > 0.0 && a < 1.0) {
                return Err(CliError::Config(format!("profile.alpha must lie in (0, 1), got {a}")));
            }
            chi2_threshold(a, pc.dof.unwrap_or(n))?
        }
        (None, None) => return Err(CliError::Config("profile needs alpha or delta".into())),
    };
    let targets: Vec<usize> = match &pc.parameters {
        None => (0..n).collect(),
        Some(list) => list
            .iter()
            .map(|p| {
                r.names
                    .iter()
                    .position(|name| name == p)
                    .ok_or_else(|| CliError::Config(format!("unknown profile parameter '{p}'")))
            })
            .collect::<Result<_, _>>()?,
    };
    if let Some(grid) = &pc.grid {
        if let Some(k) = grid.keys().find(|k| !r.names.contains(k)) {
            return Err(CliError::Config(format!("profile.grid names unknown parameter '{k}'")));
        }
    }
    let bounded = pc.bounded.unwrap_or(false);
    let mut opts = ProfileOptions { restarts: pc.restarts.unwrap_or(0), seed: r.seed, ..ProfileOptions::default() };
    if let Some(it) = pc.max_iter {
        opts.optimizer.max_iter = it;
    }
    if bounded {
        opts.bounds = Some(Bounds { lower: r.space.lower().to_vec(), upper: r.space.upper().to_vec() });
    }
    let reference = r.base.evaluate(&r.theta_hat)?;
    let flat = flatness_tolerance(&reference, pc.flatness_factor.unwrap_or(DEFAULT_FLATNESS_FACTOR));
    let points = pc.points.unwrap_or(DEFAULT_PROFILE_POINTS);
    let span = pc.span.unwrap_or(DEFAULT_PROFILE_SPAN);

    let mut rep = Report::new();
    rep.meta.insert("n_samples", "0");
    rep.meta.insert("delta", delta.to_string());
    if let Some(a) = pc.alpha {
        rep.meta.insert("alpha", a.to_string());
        rep.meta.insert("dof", pc.dof.unwrap_or(n).to_string());
    }
    rep.meta.insert("flatness_tol", flat.to_string());
    rep.meta.insert("bounded", bounded.to_string());
    for i in targets {
        let name = &r.names[i];
        let grid = match pc.grid.as_ref().and_then(|g| g.get(name)) {
            Some(g) => g.clone(),
            None if pc.log.unwrap_or(false) => {
                let c = r.theta_hat[i];
                grid_between(c - span * c.abs(), c + span * c.abs(), points, true)
                    .map_err(|e| CliError::Config(e.to_string()))?
            }
            None => default_grid(r.theta_hat[i], span, points).map_err(|e| CliError::Config(e.to_string()))?,
        };
        let (lo, hi) = (r.space.lower()[i], r.space.upper()[i]);
        if let Some(v) = grid.iter().find(|v| !(**v >= lo && **v <= hi)) {
            return Err(CliError::Config(format!("profile grid value {v} for '{name}' outside [{lo}, {hi}]")));
        }
        let trace = profile_parameter(&r.base, &r.theta_hat, i, &grid, &opts).map_err(|e| match e {
            prt_core::Error::InvalidArgument(m) => CliError::Config(m),
            other => CliError::Core(other),
        })?;
        let ci = classify_profile(&trace, delta, flat)?;
        rep.table(ArtifactKind::Profile, Some(name.clone()), profile_table(&trace, &r.names)?);
        rep.table(ArtifactKind::Relationship, Some(name.clone()), relationship_table(&trace, &r.names)?);
        rep.meta.insert(format!("{name}.interval"), ci.interval.label());
        let (lo, hi) = interval_ends(&ci.interval);
        rep.meta.insert(format!("{name}.lower"), lo.to_string());
        rep.meta.insert(format!("{name}.upper"), hi.to_string());
        rep.meta.insert(format!("{name}.classification"), ci.classification.as_str());
        rep.meta.insert(format!("{name}.max_cost"), ci.max_cost.to_string());
        let failed = trace.stats.iter().filter(|s| s.failure.is_some()).count();
        let unconverged = trace.stats.iter().filter(|s| s.failure.is_none() && !s.converged).count();
        rep.meta.insert(format!("{name}.failed_points"), failed.to_string());
        rep.meta.insert(format!("{name}.unconverged_points"), unconverged.to_string());
    }
    Ok(rep)
}

fn interval_ends(shape: &IntervalShape) -> (f64, f64) {
    use prt_core::profile::Side;
    match *shape {
        IntervalShape::Empty => (f64::NAN, f64::NAN),
        IntervalShape::Finite { lo, hi } => (lo, hi),
        IntervalShape::HalfInfinite { open_side: Side::Lower, bound } => (f64::NEG_INFINITY, bound),
        IntervalShape::HalfInfinite { open_side: Side::Upper, bound } => (bound, f64::INFINITY),
        IntervalShape::Infinite => (f64::NEG_INFINITY, f64::INFINITY),
    }
}
