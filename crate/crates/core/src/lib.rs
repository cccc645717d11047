//! Release planning for *Wolbachia*-infected mosquitoes against a bistable
//! wild/infected population model.
//!
//! The crate covers the model and its equilibria, simulation with continuous
//! and impulsive releases, the free-time optimal control problem, impulsive
//! schedules derived from the optimal control, and a genetic algorithm that
//! searches discrete release plans directly.

pub mod error;
pub mod ga;
pub mod impulsive;
pub mod io;
pub mod model;
pub mod ocp;
pub mod ode;
pub mod params;
pub mod reference;
pub mod schedule;
pub mod sim;

pub use error::{Error, Result};
pub use model::{equilibria, secure_region, EquilibriumSet, Stability};
pub use params::{OffspringNumbers, State, StrainParams};
pub use schedule::{ImpulseSchedule, Release, RuleTag};
