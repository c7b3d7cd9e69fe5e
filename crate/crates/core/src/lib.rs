//! Automated labelling of thyroid nodule ultrasound images.
//!
//! A batch pipeline links nodules described in cytopathology reports to the
//! pair of ultrasound frames (transverse + longitudinal) that depict them,
//! using date matching, caliper detection, banner OCR and radiology-report
//! measurements. A seeded synthetic corpus generator supplies inputs with
//! known ground truth, and the `metrics` module scores pipeline output
//! against it.

pub mod caliper;
pub mod corpus;
pub mod error;
pub mod font;
pub mod metrics;
pub mod ocr;
pub mod path_parser;
pub mod pipeline;
pub mod rad_parser;
pub mod raster;
pub mod study;
pub mod study_matcher;
pub mod types;

pub use error::{Error, Result};
pub use font::GlyphFont;
pub use raster::Raster;
pub use types::{Diagnosis, Laterality, Site, StudyKind, View};
