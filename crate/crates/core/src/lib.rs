//! Sequence-to-sequence LSTM forecasting of hourly PM2.5 AQI.
//!
//! The crate is layered bottom-up: dense [`linalg`], recurrent cells in
//! [`rnn`], the encoder/decoder in [`seq2seq`], optimisation in [`optim`],
//! the data pipeline in [`data`], training and checkpoints in [`train`], and
//! evaluation and experiment grids in [`eval`].

pub mod data;
pub mod error;
pub mod eval;
pub mod linalg;
pub mod optim;
pub mod rnn;
pub mod seq2seq;
pub mod train;

pub use error::{Error, Result};
