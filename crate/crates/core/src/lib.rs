//! Coverage simulation for teams of aerial agents over 2.5D terrain.
//!
//! The pipeline builds a terrain model, turns a sparse set of prior terrain
//! samples into a piecewise-linear surface estimate, places the team with a
//! stochastic centroidal Voronoi tessellation on that estimate, and then
//! refines it online with CAO against noisy coverage measurements of the
//! true terrain.

pub mod cao;
pub mod constraints;
pub mod cvt;
pub mod error;
pub mod experiment;
pub mod io;
pub mod surface;
pub mod visibility;

pub use cao::{cao_run, cao_step, CaoParams, CaoState, Measurement, RegressorBank, RunTrace};
pub use constraints::{is_feasible, repair, ConstraintParams, ConstraintSpec};
pub use cvt::{cvt_init, cvt_run, cvt_step, CvtOutcome, CvtParams, CvtState};
pub use error::{Error, Result};
pub use experiment::{
    minimal_prior_study, run_batch, run_scenario, BatchOptions, BatchReport, BatchSpec, BatchSummary, InitMode,
    PriorSpec, RunResult, ScenarioSpec, Seeds, TerrainSource,
};
pub use surface::{DomainRect, GaussianMixtureSpec, HeightField, SamplePointSet, TerrainParams};
pub use visibility::{CoverageEvaluator, CoverageMeasurement, SensorModel, SurfaceGrid, TeamConfiguration};
