//! Logic neural networks with Walsh–Hadamard parametrized neurons.
//!
//! Networks of fixed-fan-in Boolean neurons are trained through a continuous
//! relaxation, then frozen to lookup-table netlists and evaluated bit-exactly.

pub mod config;
pub mod datasets;
pub mod discrete;
pub mod encoder;
pub mod error;
pub mod hadamard;
pub mod network;
pub mod neurons;
pub mod oracle;

pub use error::{Error, Result};
pub use hadamard::{fwht, lut_to_theta, theta_to_lut, LutTable, WalshCoeffs, MAX_ARITY};
pub use config::NetworkConfig;
pub use datasets::Dataset;
pub use discrete::Netlist;
pub use encoder::ThresholdPlan;
pub use network::{build_network, train, Network, TrainMetrics};
pub use neurons::{ForwardMode, Parametrization};
