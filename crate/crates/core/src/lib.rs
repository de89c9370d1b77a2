//! Forensic bullet comparison pipeline.
//!
//! The crate turns 3D scans of land engraved areas (LEAs) into 1D signals,
//! scores every pair of lands with a maximised lagged cross-correlation,
//! summarises each pair of bullets with a phase-selected in-phase minus
//! out-of-phase score, and derives clustering, shot-distance variograms and
//! outlier flags from the resulting score matrix. Everything is finally
//! packed into a single JSON [`bundle::Bundle`] that an interactive viewer
//! reads over HTTP.
//!
//! The stages map onto modules:
//!
//! * [`scan_io`] parses x3p containers and plain-text grids, validates scans
//!   and builds thumbnails.
//! * [`signal`] selects a crosscut, extracts a band-median profile, trims
//!   groove shoulders and removes curvature with robust LOESS.
//! * [`compare`] holds the lag search, land matrices, phase selection and
//!   whole-set comparison.
//! * [`analyze`] clusters the score matrix and builds variograms and flags.
//! * [`bundle`] assembles and (de)serialises the viewer bundle.
//!
//! [`pipeline`] wires scans to signal records and [`synth`] generates
//! synthetic barrels with known ground truth.

pub mod analyze;
pub mod bundle;
pub mod compare;
pub mod config;
pub mod pipeline;
pub mod scan_io;
pub mod signal;
pub mod stats;
pub mod synth;

pub use analyze::{
    AnalysisReport, Dendrogram, LeafOrder, OutlierReport, TrendCurve, VariogramPoint,
};
pub use bundle::Bundle;
pub use compare::{
    BulletLands, BulletScore, ComparisonSet, LagSearchParams, LandMatrix, LandPairResult,
};
pub use config::PipelineConfig;
pub use pipeline::LandRecord;
pub use scan_io::{HeightField, ScanMeta, ScanRecord};
pub use signal::{GrooveBounds, LoessParams, Profile, Signal};

/// Number of lands on the barrels this pipeline targets.
pub const LANDS: usize = 6;
