//! CAT bond pricing laboratory.
//!
//! Aggregate catastrophe losses follow a compound Poisson process; a bond's
//! cash flows are lost once the aggregate loss reaches a trigger threshold.
//! Prices combine affine (Vasicek) discount factors with trigger
//! probabilities estimated by Monte Carlo, using exponentially tilted
//! importance sampling in the rare-event regime. A multilayer perceptron
//! trained on simulated prices serves as a fast pricing surrogate.

pub mod error;
pub mod estimators;
pub mod experiments;
pub mod loss_model;
pub mod pricer;
pub mod rng;
pub mod special;
pub mod surrogate;
pub mod term_structure;

pub use error::{CatBondError, Result};
pub use estimators::{EstimatorMethod, EstimatorResult, MethodChoice, TiltParams};
pub use loss_model::{LossModel, SeverityDistribution, SeverityKind, TriggerSpec};
pub use pricer::{BondSpec, PriceResult};
pub use rng::StreamSeed;
pub use surrogate::{Activation, MlpConfig, MlpModel, TrainingSample};
pub use term_structure::{VasicekParams, DAYS_PER_YEAR};
