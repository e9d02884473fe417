//! Turn a parsed config plus command-line overrides into concrete analysis
//! settings, validating everything before any numerics run.

use std::path::PathBuf;

use prt_core::models::{self, load_defaults, CellCycleOptions, ModelRegistryEntry, ModelSettings, SiwrOptions};
use prt_core::{
    scalar_cost_qoi, Density, DiffMethod, FdOptions, ParameterSpace, ParametricModel, PartitionCriterion,
    SampleScheme, Scaling, Tolerances,
};

use crate::config::RunConfig;
use crate::CliError;

pub const DEFAULT_OUTPUT_DIR: &str = "prt-report";
pub const DEFAULT_SEED: u64 = 0;
pub const DEFAULT_SAMPLES: usize = 1000;
pub const DEFAULT_NEAR_RATIO: f64 = 1e3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Qoi {
    Vector,
    Cost,
    Period,
}

impl Qoi {
    pub fn as_str(&self) -> &'static str {
        match self {
            Qoi::Vector => "vector",
            Qoi::Cost => "cost",
            Qoi::Period => "period",
        }
    }
}

/// Values that may come from the command line instead of the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

pub struct Resolved {
    pub entry: ModelRegistryEntry,
    pub names: Vec<String>,
    pub theta_hat: Vec<f64>,
    /// The model as built, before any QOI wrapping.
    pub base: ParametricModel,
    /// The model whose sensitivities are analysed.
    pub analysed: ParametricModel,
    pub qoi: Qoi,
    pub space: ParameterSpace,
    pub fd: FdOptions,
    pub rank_tolerance: f64,
    pub near_ratio: f64,
    pub seed: u64,
    pub scheme: SampleScheme,
    pub n_samples: usize,
    pub criterion: PartitionCriterion,
    pub gap_ratio: f64,
    pub output_dir: PathBuf,
}

fn positive(name: &str, v: f64) -> Result<f64, CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(CliError::Config(format!("{name} must be positive, got {v}")))
    }
}

fn length(name: &str, v: &[f64], n: usize) -> Result<(), CliError> {
    if v.len() != n {
        return Err(CliError::Config(format!("{name} has {} entries, model has {n} parameters", v.len())));
    }
    Ok(())
}

fn model_settings(cfg: &RunConfig) -> Result<ModelSettings, CliError> {
    let mut siwr = SiwrOptions::default();
    let s = &cfg.siwr;
    if let Some(v) = s.y0 {
        siwr.y0 = positive("siwr.y0", v)?;
    }
    if let Some(v) = s.w0 {
        if !(v >= 0.0) {
            return Err(CliError::Config(format!("siwr.w0 must be non-negative, got {v}")));
        }
        siwr.w0 = v;
    }
    if let Some(v) = s.n_obs {
        siwr.n_obs = v;
    }
    if let Some(v) = s.end_fraction {
        siwr.end_fraction = positive("siwr.end_fraction", v)?;
    }
    siwr.observation_times = s.observation_times.clone();
    siwr.tolerances = Tolerances::new(
        positive("siwr.rel_tol", s.rel_tol.unwrap_or(siwr.tolerances.rel))?,
        positive("siwr.abs_tol", s.abs_tol.unwrap_or(siwr.tolerances.abs))?,
    );

    let mut cc = CellCycleOptions::default();
    let c = &cfg.cellcycle;
    if let Some(v) = c.horizon {
        cc.horizon = Some(positive("cellcycle.horizon", v)?);
    }
    if let Some(v) = c.horizon_factor {
        cc.horizon_factor = positive("cellcycle.horizon_factor", v)?;
    }
    if let Some(v) = c.samples_per_unit {
        cc.samples_per_unit = positive("cellcycle.samples_per_unit", v)?;
    }
    if let Some(v) = c.transient_fraction {
        cc.transient_fraction = v;
    }
    if let Some(v) = c.cv_tol {
        cc.periodicity_cv_tol = positive("cellcycle.cv_tol", v)?;
    }
    cc.tolerances = Tolerances::new(
        positive("cellcycle.rel_tol", c.rel_tol.unwrap_or(cc.tolerances.rel))?,
        positive("cellcycle.abs_tol", c.abs_tol.unwrap_or(cc.tolerances.abs))?,
    );
    Ok(ModelSettings { siwr, cellcycle: cc })
}

fn space(cfg: &RunConfig, entry: &ModelRegistryEntry, theta_hat: &[f64]) -> Result<ParameterSpace, CliError> {
    let n = entry.parameter_names.len();
    let b = &cfg.bounds;
    let mut space = match (b.relative, &b.lower, &b.upper) {
        (Some(_), Some(_), _) | (Some(_), _, Some(_)) => {
            return Err(CliError::Config("bounds: give either relative or lower/upper, not both".into()))
        }
        (Some(frac), None, None) => {
            ParameterSpace::relative_box(entry.parameter_names.clone(), theta_hat, positive("bounds.relative", frac)?)?
        }
        (None, Some(lo), Some(hi)) => {
            length("bounds.lower", lo, n)?;
            length("bounds.upper", hi, n)?;
            ParameterSpace::new(entry.parameter_names.clone(), lo.clone(), hi.clone())?
        }
        (None, None, None) => entry.default_space.clone(),
        _ => return Err(CliError::Config("bounds: lower and upper must be given together".into())),
    };
    match b.density.as_deref() {
        None | Some("uniform") => {
            if b.mean.is_some() || b.stdev.is_some() {
                return Err(CliError::Config("bounds.mean/stdev need density = \"gaussian\"".into()));
            }
        }
        Some("gaussian") => {
            let mean = b.mean.clone().unwrap_or_else(|| theta_hat.to_vec());
            let stdev = b
                .stdev
                .clone()
                .ok_or_else(|| CliError::Config("gaussian density needs bounds.stdev".into()))?;
            length("bounds.mean", &mean, n)?;
            length("bounds.stdev", &stdev, n)?;
            space = space.with_density(Density::Gaussian { mean, stdev })?;
        }
        Some(other) => return Err(CliError::Config(format!("unknown density '{other}'"))),
    }
    let scaling = match b.scaling.as_deref() {
        None | Some("raw") => Scaling::Raw,
        Some("centered-unit") => Scaling::CenteredUnit,
        Some(other) => return Err(CliError::Config(format!("unknown scaling '{other}'"))),
    };
    Ok(space.with_scaling(scaling))
}

fn criterion(cfg: &RunConfig) -> Result<(PartitionCriterion, f64), CliError> {
    let p = &cfg.partition;
    let gap_ratio = positive("partition.gap_ratio", p.gap_ratio.unwrap_or(prt_core::active::DEFAULT_GAP_RATIO))?;
    let c = match p.criterion.as_deref() {
        None | Some("gap") => PartitionCriterion::Gap { min_ratio: gap_ratio },
        Some("fixed") => PartitionCriterion::FixedR(
            p.r.ok_or_else(|| CliError::Config("partition.criterion = \"fixed\" needs partition.r".into()))?,
        ),
        Some("threshold") => PartitionCriterion::Threshold {
            relative: positive(
                "partition.threshold",
                p.threshold.ok_or_else(|| CliError::Config("threshold criterion needs partition.threshold".into()))?,
            )?,
        },
        Some(other) => return Err(CliError::Config(format!("unknown partition criterion '{other}'"))),
    };
    Ok((c, gap_ratio))
}

pub fn resolve(cfg: &RunConfig, overrides: &Overrides) -> Result<Resolved, CliError> {
    let name = cfg.model.as_deref().ok_or_else(|| CliError::Usage("config does not name a model".into()))?;
    let entry = models::lookup(name).map_err(|e| CliError::Usage(e.to_string()))?;
    let n = entry.parameter_names.len();

    let mut settings = model_settings(cfg)?;
    let mut theta_hat = entry.default_theta_hat.clone();
    if let Some(path) = &cfg.cellcycle.defaults_file {
        if entry.name != "cellcycle" {
            return Err(CliError::Config("cellcycle.defaults_file only applies to the cellcycle model".into()));
        }
        theta_hat = load_defaults(std::path::Path::new(path))?;
    }
    if let Some(t) = &cfg.theta_hat {
        length("theta_hat", t, n)?;
        if t.iter().any(|v| !v.is_finite()) {
            return Err(CliError::Config("theta_hat must be finite".into()));
        }
        theta_hat = t.clone();
    }
    if entry.name != "siwr" {
        settings.siwr = SiwrOptions::default();
    }

    let space = space(cfg, &entry, &theta_hat)?;
    let base = entry.build(&settings, &theta_hat)?;
    let qoi = match cfg.qoi.as_deref() {
        None if entry.name == "cellcycle" => Qoi::Period,
        None | Some("vector") => Qoi::Vector,
        Some("cost") => Qoi::Cost,
        Some("period") => Qoi::Period,
        Some(other) => return Err(CliError::Config(format!("unknown qoi '{other}'"))),
    };
    if (qoi == Qoi::Period) != (entry.name == "cellcycle") {
        return Err(CliError::Config(format!("qoi '{}' does not apply to model '{}'", qoi.as_str(), entry.name)));
    }
    let analysed = match qoi {
        Qoi::Cost => scalar_cost_qoi(&base, &theta_hat)?,
        _ => base.clone(),
    };

    let method = match cfg.fd_method.as_deref() {
        None | Some("central") => DiffMethod::Central,
        Some("forward") => DiffMethod::Forward,
        Some("analytic") => DiffMethod::Analytic,
        Some(other) => return Err(CliError::Config(format!("unknown fd_method '{other}'"))),
    };
    if method == DiffMethod::Analytic && !analysed.has_analytic_jacobian() {
        return Err(CliError::Config(format!("model '{}' has no analytic Jacobian", analysed.name())));
    }
    let fd = FdOptions {
        relative_step: positive("fd_step", cfg.fd_step.unwrap_or(entry.recommended_fd_step))?,
        method,
        ..FdOptions::default()
    };
    let rank_tolerance = positive(
        "rank_tolerance",
        cfg.rank_tolerance.unwrap_or(prt_core::sensitivity::DEFAULT_RANK_TOLERANCE),
    )?;
    let near_ratio = positive("near_ratio", cfg.near_ratio.unwrap_or(DEFAULT_NEAR_RATIO))?;
    let scheme = match cfg.sampling.scheme.as_deref() {
        None if matches!(space.density(), Density::Gaussian { .. }) => SampleScheme::GaussianIid,
        None => SampleScheme::Lhs,
        Some(s) => SampleScheme::parse(s).map_err(|e| CliError::Config(e.to_string()))?,
    };
    let (criterion, gap_ratio) = criterion(cfg)?;
    let file_seed = match (cfg.seed, cfg.sampling.seed) {
        (Some(a), Some(b)) if a != b => {
            return Err(CliError::Config(format!("seed = {a} conflicts with sampling.seed = {b}")))
        }
        (a, b) => a.or(b),
    };
    let output_dir = overrides
        .out
        .clone()
        .or_else(|| cfg.output_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR));

    Ok(Resolved {
        names: entry.parameter_names.clone(),
        entry,
        theta_hat,
        base,
        analysed,
        qoi,
        space,
        fd,
        rank_tolerance,
        near_ratio,
        seed: overrides.seed.or(file_seed).unwrap_or(DEFAULT_SEED),
        scheme,
        n_samples: cfg.sampling.n.unwrap_or(DEFAULT_SAMPLES),
        criterion,
        gap_ratio,
        output_dir,
    })
}
