//! Rate analysis and Monte Carlo simulation for the generalized ent-B92
//! device-independent QKD protocol with non-maximally entangled photon pairs.
//!
//! * [`quantum`]: states, noise channel, measurement bases, Born tables.
//! * [`keyrate`]: closed-form QBERs, CH values and key rates.
//! * [`loss`]: CH prediction and threshold efficiencies under detection loss.
//! * [`optimize`]: angle optimization and threshold searches.
//! * [`sim`]: event-level protocol simulation and empirical estimators.

pub mod error;
pub mod keyrate;
pub mod loss;
pub mod optimize;
pub mod quantum;
pub mod rng;
pub mod sim;

pub use error::{Error, Result};
pub use keyrate::{Efficiencies, RateReport};
pub use quantum::{CoincidenceTable, NoiseParams, ProtocolParams, TwoQubitState};
