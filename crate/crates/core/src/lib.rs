//! Per-biomarker average treatment effects of a binary exposure, estimated
//! by targeted maximum likelihood with a super-learner outcome regression,
//! and tested with empirical-Bayes moderated statistics across biomarkers.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`). The
//! aliases below fix it to `f64`, which is what the command-line tool uses.
//!
//! ```no_run
//! use modtmle::{analyze_observations, load_observation_set, AnalysisConfig, LoadOptions};
//!
//! let opts = LoadOptions::new("benzene", vec!["age".into(), "sex".into()]);
//! let obs = load_observation_set::<f64>("expr.tsv".as_ref(), "pheno.tsv".as_ref(), &opts)?;
//! let result = analyze_observations(&obs, &AnalysisConfig::default())?;
//! for (id, row) in result.biomarker_ids.iter().zip(&result.moderated.rows) {
//!     println!("{id}\t{}\t{}", row.psi, row.p_adj);
//! }
//! # Ok::<(), modtmle::Error>(())
//! ```

pub mod commands;
pub mod config;
pub mod data;
pub mod error;
pub mod learners;
pub mod linalg;
pub mod moderation;
pub mod pipeline;
pub mod report;
pub mod scalar;
pub mod simulation;
pub mod special;
pub mod super_learner;
pub mod tmle;

pub use config::{AnalysisSettings, RunConfig, SimulationConfig};
pub use data::{
    assign_folds, load_observation_set, ConfounderMatrix, ExposureVector, ExpressionMatrix, FoldAssignment,
    LoadOptions, ObservationSet,
};
pub use error::{Error, ErrorClass, Result};
pub use learners::{FittedLearner, LearnerSpec};
pub use moderation::{
    bh_adjust, estimate_hyperparameters, moderate, EbHyperparameters, InfluenceMatrix, ModeratedResult,
    ModerationMode,
};
pub use pipeline::{analyze_observations, AnalysisConfig, AnalysisResult};
pub use scalar::Scalar;
pub use simulation::{generate, run_replicates, DgpSpec, ReplicateSummary};
pub use super_learner::{Selection, SuperLearnerFit};
pub use tmle::{PropensityFit, TmleFit};

pub type ObservationSet64 = ObservationSet<f64>;
pub type ConfounderMatrix64 = ConfounderMatrix<f64>;
pub type ExpressionMatrix64 = ExpressionMatrix<f64>;
pub type FittedLearner64 = FittedLearner<f64>;
pub type SuperLearnerFit64 = SuperLearnerFit<f64>;
pub type PropensityFit64 = PropensityFit<f64>;
pub type TmleFit64 = TmleFit<f64>;
pub type InfluenceMatrix64 = InfluenceMatrix<f64>;
pub type EbHyperparameters64 = EbHyperparameters<f64>;
pub type ModeratedResult64 = ModeratedResult<f64>;
pub type AnalysisResult64 = AnalysisResult<f64>;
