//! End-to-end learning of digital pre-distortion for wideband power
//! amplifiers: OFDM stimuli, a synthetic PA, figures of merit, a small
//! reverse-mode autodiff engine, recurrent and polynomial models, and the
//! PA-then-DPD training pipeline.

pub mod autodiff;
pub mod cli;
pub mod error;
pub mod io;
pub mod metrics;
pub mod models;
pub mod pipeline;
pub mod signal;
pub mod waveform;

pub use error::{Error, Result};
