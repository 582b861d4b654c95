//! Link-level simulation and beamforming optimization for mmWave multi-user
//! MIMO downlinks assisted by a reconfigurable distributed antenna and
//! reflecting surface (RDARS).
//!
//! The crate is organized bottom-up:
//!
//! - [`channel`]: steering vectors, rank-one LoS channels, SINR and WSR.
//! - [`rdars_config`]: mode-switching configurations, transmit-element
//!   placement and element-count bounds.
//! - [`codebook`]: passive/connected reconfigurable codebooks, fixed DFT
//!   codebooks and DEACT hierarchies.
//! - [`beam_training`]: two-phase hierarchical beam training and channel
//!   reconstruction.
//! - [`tdma`] and [`sdma`]: the two multiple-access optimizers.
//! - [`oracle`]: brute-force references used to validate the closed forms.
//! - [`harness`]: scenario files, experiment sweeps and CSV output.

// Index loops mirror the summations; `!(x > 0.0)` also rejects NaN.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod beam_training;
pub mod channel;
pub mod codebook;
mod error;
pub mod harness;
pub mod oracle;
pub mod rdars_config;
pub mod sdma;
pub mod tdma;
pub mod units;

pub use error::{Error, Result};

/// Complex sample type used throughout the crate.
pub type C64 = num_complex::Complex64;
/// Dense complex column vector.
pub type CVector = nalgebra::DVector<C64>;
/// Dense complex matrix.
pub type CMatrix = nalgebra::DMatrix<C64>;
