//! Discrete-event simulation of class-A LoRaWAN networks.
//!
//! The crate is organised bottom-up:
//!
//! - [`engine`]: deterministic event scheduler and named random streams.
//! - [`linkmodel`]: path loss, SNR, the fitted LoRa BER model and airtime.
//! - [`baseband`]: complex-baseband LoRa modem used to regenerate the BER model.
//! - [`phy`]: transceiver state machine, shared medium and chunk-based SINR reception.
//! - [`mac`]: end-device and gateway MAC state machines, duty-cycle ledgers.
//! - [`netserver`]: deduplication, downlink queues and receive-window scheduling.
//! - [`scenario`]: topology, spreading-factor assignment and traffic generation.
//! - [`network`]: the event-driven world that wires the layers together.
//! - [`harness`]: experiment configuration, metrics, sweeps and CSV output.

pub mod baseband;
pub mod engine;
mod error;
pub mod harness;
pub mod linkmodel;
pub mod mac;
pub mod netserver;
pub mod network;
pub mod phy;
pub mod scenario;

pub use error::{Error, Result};
