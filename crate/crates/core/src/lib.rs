//! Order-book modelling with state-dependent Hawkes processes.
//!
//! The crate models an order-driven market as a multivariate Hawkes process
//! whose kernels depend on a discrete book state (last mid move and imbalance
//! bucket), calibrates the model from LOBSTER-style event data, simulates
//! liquidations by a labelled agent, and measures scenario-dependent price
//! impact through compensators rather than averages over executions.
//!
//! Module map:
//! - [`lob`]: book snapshots, queue imbalance, state variable, limit-order
//!   decomposition, the Dirichlet volume model and market-order book updates.
//! - [`hawkes`]: intensities, closed-form power-law compensators, thinning
//!   simulation with and without the liquidator.
//! - [`calibrate`]: transition frequencies, maximum likelihood with analytic
//!   gradients, Dirichlet MLE, time-change residual diagnostics.
//! - [`impact`]: the liquidator's transition matrix, direct/indirect impact
//!   intensities, exact profile integration, price symmetry, Monte Carlo
//!   profile statistics.
//! - [`lobster`]: LOBSTER CSV ingestion, event classification, tick
//!   renormalisation, canonical event/volume files.
//! - [`model`]: the serialisable model document and the shipped synthetic
//!   reference calibration.

pub mod calibrate;
pub mod error;
pub mod hawkes;
pub mod impact;
pub mod lob;
pub mod lobster;
pub mod model;
pub mod special;

pub use error::{CalibrationError, HawkesError, ImpactError, IngestError, LobError};
pub use hawkes::{
    EventRecord, HawkesParams, History, LiquidationOutcome, LiquidatorFill, TransitionMatrices,
};
pub use impact::{ImpactEvaluator, ImpactProfile, LiquidationConfig, MonteCarloProfiles};
pub use lob::{BookSnapshot, DirichletParams, LimitOrder, Side, StateVariable};
pub use model::{MarketModel, ModelError};
