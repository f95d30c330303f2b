//! Affective reaction mapping for urban environments.
//!
//! Two channels describe how people feel about a place: *perception*, scored
//! from street-view imagery together with the proportion of each urban element
//! in the image, and *opinion*, scored from geotagged text posts. This crate
//! turns both into gridded score maps per epoch, per-channel trend maps
//! (late minus early), a perception/opinion mismatch map, zone-conditioned
//! cubic regressions of score on element proportion, and word-frequency
//! reports.
//!
//! The modules map one-to-one onto pipeline stages:
//!
//! - [`geo`]: coordinates, the study grid, point-in-polygon and zone assignment
//! - [`ingest`]: line-delimited record parsing and dataset bookkeeping
//! - [`textsent`]: dictionary segmentation, naive Bayes scoring, word counts
//! - [`percept`]: questionnaire aggregation, score bins, segment validation
//! - [`affectmap`]: score, trend and mismatch rasters
//! - [`regress`]: cubic least squares with the overall F-test
//! - [`render`]: color ramps, PPM images and GeoJSON export
//! - [`synth`]: seeded scenarios with a planted answer key
//! - [`pipeline`]: configuration, end-to-end run and the run manifest

pub mod affectmap;
pub mod geo;
pub mod ingest;
pub mod percept;
pub mod pipeline;
pub mod regress;
pub mod render;
pub mod rng;
pub mod synth;
pub mod textsent;

/// Crate version recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
