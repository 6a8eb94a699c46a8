//! Grid-based air-quality modelling from mobile sensor records.
//!
//! Records are binned onto a lat/lon grid per time bucket ([`geogrid`]) and
//! rendered as normalized single-channel images that a small CNN classifies
//! into PM2.5 classes ([`cnn`], [`labeling`]). Hourly city averages feed an
//! LSTM forecaster ([`lstm`]) that is blended with a linear weather model
//! ([`hybrid`]). Everything numerical lives in [`nn`], written from scratch in
//! double precision.

pub mod checkpoint;
pub mod cli;
pub mod cnn;
pub mod datagen;
pub mod error;
pub mod fsum;
pub mod geogrid;
pub mod hybrid;
pub mod io;
pub mod labeling;
pub mod lstm;
pub mod nn;
pub mod record;
pub mod seed;
mod train;

pub use error::{Error, Result};
