//! Occupancy and open-window event detection from multivariate gas-sensor
//! time series.
//!
//! The crate covers the whole path from raw CSV exports to trained
//! classifiers:
//!
//! - [`data`]: the [`SensorFrame`] model, CSV ingestion, missing-value
//!   handling, Pearson correlation and correlation-driven feature selection.
//! - [`pipeline`]: event-centred under-sampling, time-gap segmentation,
//!   sliding windows, sequence labeling, splits and scalers.
//! - [`nn`]: a small deterministic f64 engine with explicit forward/backward
//!   layers, losses, Adam and a cosine schedule.
//! - [`models`]: FCN, LSTM, InceptionTime, a recurrent autoencoder and the
//!   frozen-encoder classifier built on it.
//! - [`train`]: training loops with early stopping, random search, metrics,
//!   prediction timelines, spike smoothing and PCA.
//! - [`synth`]: seeded synthetic sensor frames with ground-truth events.
//!
//! Data-parallel kernels run on rayon when the `parallel` feature is enabled
//! (the default). Every parallel loop writes disjoint output rows and keeps a
//! fixed reduction order, so results are bit-identical with and without the
//! feature.

// `!(x > 0.0)` style checks are meant to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod error;
pub mod models;
pub mod nn;
pub mod par;
pub mod pipeline;
pub mod rng;
pub mod synth;
pub mod train;

pub use data::{CorrelationMatrix, FeatureSet, MissingReport, SensorFrame};
pub use error::{Error, Result};
pub use nn::{ParamStore, Tensor};
pub use pipeline::{ScalerParams, Segment, WindowSet};

/// The 17 sensor channels of an air-quality device, in export order.
pub const SENSOR_CHANNELS: [&str; 17] = [
    "pressure",
    "temperature",
    "sound",
    "tvoc",
    "oxygen",
    "humidity",
    "humidity_abs",
    "co2",
    "co",
    "so2",
    "no2",
    "o3",
    "pm2_5",
    "pm10",
    "pm1",
    "sound_max",
    "dewpt",
];

/// Event classes detected by the classifiers.
pub const CLASS_NAMES: [&str; 2] = ["person", "window_open"];

/// Nominal sampling period of the devices in seconds.
pub const SAMPLE_PERIOD_SECS: i64 = 120;
