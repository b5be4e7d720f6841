//! Graphon estimation from graph collections and graphon-based data augmentation.
//!
//! Graphs are turned into step-function graphons, per-class graphons are
//! learned with a Gromov-Wasserstein barycenter (or one of the classical
//! block-model / low-rank baselines), and synthetic graphs are sampled from
//! them to enlarge a training set. An evaluation harness measures the effect
//! on a simple graph classifier.
//!
//! The numerical core is generic over the floating-point type through
//! [`Scalar`]; the aliases below fix it to `f64`, which is what the CLI and
//! the experiment runner use.

pub mod augment;
pub mod error;
pub mod estimators;
pub mod eval;
pub mod graph;
pub mod graphon;
pub mod ot;
pub mod rng;
pub mod scalar;

pub use error::{Error, Result};
pub use graph::{Graph, GraphDataset, NodeMeasurePolicy, ProbabilityVector};
pub use scalar::Scalar;

/// Step graphon over `f64`.
pub type StepGraphonF64 = graphon::StepGraphon<f64>;
/// Step graphon over `f32`.
pub type StepGraphonF32 = graphon::StepGraphon<f32>;
/// Transport plan over `f64`.
pub type TransportPlanF64 = ot::TransportPlan<f64>;
/// Symmetric kernel matrix over `f64`.
pub type KernelMatrixF64 = ot::SymmetricKernelMatrix<f64>;
/// Estimator configuration over `f64`.
pub type EstimatorConfigF64 = estimators::EstimatorConfig<f64>;
/// Gromov-Wasserstein solver parameters over `f64`.
pub type GwParamsF64 = ot::GwParams<f64>;
/// Classifier over `f64`.
pub type ClassifierF64 = eval::Classifier<f64>;
