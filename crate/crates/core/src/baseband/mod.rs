//! Complex-baseband LoRa transceiver over AWGN.
//!
//! Sender chain: information bits, FEC encoder, diagonal interleaver,
//! whitening, reverse Gray mapping, chirp modulator. The receiver correlates
//! against every reference chirp and runs the inverse chain. The chain is
//! used as a Monte-Carlo oracle for the fitted BER model in
//! [`crate::linkmodel`].

mod campaign;
mod chirp;
mod fec;
mod fit;
mod gray;
mod interleave;
mod whitening;

pub use campaign::{
    measure_ber, read_samples_csv, run_campaign, wilson_interval, write_samples_csv, BerSample,
    Transceiver,
};
pub use chirp::{awgn, correlate, demodulate, modulate, Demodulator};
pub use fec::{fec_decode, fec_encode, DecodeReport};
pub use fit::{
    fit_error_model, fit_samples, pdr_for_bits, select_fit_subset, solve_cutoff, FitResult,
    CUTOFF_BITS, CUTOFF_PDR,
};
pub use gray::{gray_demap, gray_map};
pub use interleave::{deinterleave, interleave};
pub use whitening::{dewhiten, whiten, whitening_sequence};
