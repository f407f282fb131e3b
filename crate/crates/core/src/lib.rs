//! Root-cause localization for anomalies on an aggregate alarm KPI.
//!
//! The alarm is decomposed and scanned for anomaly segments; every
//! candidate KPI is then scored by the similarity of its trend-aware SAX
//! symbols to the alarm's inside those segments and by a Granger F test,
//! and the fused scores are ranked.

pub mod causality;
pub mod datagen;
pub mod decomposition;
pub mod detection;
pub mod error;
pub mod evaluation;
pub mod pipeline;
pub mod scoring;
pub mod series;
pub mod symbolic;

pub use error::{KpiError, Result};
pub use pipeline::{localize, LocalizationReport, RunConfig};
pub use series::KpiSeries;
