//! Supervisory heating control for a house with a variable-speed heat pump and
//! staged resistance backup.
//!
//! The crate is organised as a pipeline:
//!
//! - [`model`]: single-state thermal circuit and its exact discretisation
//! - [`ident`]: grey-box training of the circuit and the exogenous-power regressor
//! - [`plant`]: COP curve, convex electric-power map, device-level thermostat, defrost
//! - [`lp`]: dense bounded-variable revised simplex
//! - [`mpc`]: open-loop problem as an LP, receding-horizon controller, PMV/PPD, price tuning
//! - [`sim`]: weather ingestion, forecasts and closed-loop simulation
//! - [`synth`]: deterministic synthetic weather, training data and seasonal temperatures
//! - [`analysis`]: daily aggregation, energy slopes, savings Monte Carlo, stage statistics

pub mod analysis;
pub mod error;
pub mod ident;
pub mod lp;
pub mod model;
pub mod mpc;
pub mod plant;
pub mod rng;
pub mod series;
pub mod sim;
pub mod synth;

pub use error::{Error, Result};
