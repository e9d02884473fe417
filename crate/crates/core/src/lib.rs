//! Sensitivity Fisher information, active subspaces and parameter profiles
//! for algebraic and ODE models.

pub mod active;
pub mod eigen;
pub mod error;
pub mod io;
pub mod model;
pub mod models;
pub mod ode;
mod radau;
pub mod optim;
pub mod profile;
pub mod sampling;
pub mod sensitivity;

pub use active::{
    average_sfim, low_rank_eval, partition, summary_table, unit_scaled_model, AverageSfim, Exclusion, PartitionCriterion,
    SampleMeta, SubspacePartition, SummaryTable,
};
pub use eigen::{eigendecompose, normalize_sign, EigenAnalysis};
pub use error::{Error, Result};
pub use io::{
    read_csv, write_csv, write_report, AnalysisArtifact, ArtifactKind, Cell, KeyValues, Manifest, Payload, Provenance,
    Table,
};
pub use model::{scalar_cost_qoi, Density, ModelOutputSpec, OutputKind, ParameterSpace, ParametricModel, Scaling};
pub use ode::{estimate_period, integrate, integrate_stiff, OdeSystem, PeriodEstimate, SolverStats, Tolerances, Trajectory};
pub use optim::{nelder_mead, Bounds, NelderMeadOptions, NelderMeadResult};
pub use profile::{
    chi2_threshold, classify_profile, profile_parameter, relationship_table, Classification, ConfidenceInterval,
    IntervalShape, ProfileOptions, ProfileTrace,
};
pub use sampling::{sample, SampleScheme, SampleSet};
pub use sensitivity::{
    identifiability_verdict, jacobian_fd, local_sfim, DiffMethod, FdOptions, Jacobian, Sfim, Verdict,
};
