//! Feedback dynamics between a utility-maximizing institution and groups
//! that invest in qualification.
//!
//! The institution picks an assessment rule that maximizes its expected
//! payoff given each group's qualification rate; individuals invest when the
//! wage gain from a positive assessment exceeds their cost. Iterating the two
//! best responses defines a dynamical system whose fixed points, cycles and
//! stability this crate computes.

pub mod analysis;
pub mod costs;
pub mod dynamics;
pub mod economy;
pub mod error;
pub mod features;
pub mod ingest;
pub mod model;

pub use costs::{CostModel, CostSpec, Subsidy};
pub use economy::{balance, EconomyConfig, GroupSpec, Groups, Metrics, QualificationState};
pub use error::{Error, Result};
pub use features::{FeatureModel, FeatureSpec, ScoreDist, ScoreGroup, Theta};
pub use model::{institutional_utility, Assessment, Model, SolverConfig};
