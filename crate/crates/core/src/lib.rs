//! Uncertainty-aware SHAP explanations for bagged tree ensembles.
//!
//! The crate trains a bagged CART forest, samples Dirichlet-weighted
//! sub-ensembles from it, computes exact interventional TreeSHAP per tree and
//! decomposes the resulting attribution distribution into aleatoric,
//! epistemic and entanglement components. Belief/plausibility structures and
//! an empirical uncertainty distribution with its entropy complete the
//! per-feature report.
//!
//! A typical flow:
//!
//! ```no_run
//! use ubiqtree::{data, forest, pipeline};
//!
//! let ds = data::load_csv("train.csv", Some("y")).unwrap();
//! let model = forest::fit(&ds, &forest::ForestConfig::default()).unwrap();
//! let background = pipeline::select_background(&ds, 256, 7);
//! let cfg = pipeline::PipelineConfig::default();
//! let report = pipeline::explain(&model, ds.row(0), &background, &cfg).unwrap();
//! println!("{}", serde_json::to_string_pretty(&report).unwrap());
//! ```

pub mod aggregate;
pub mod data;
pub mod decompose;
pub mod evidence;
pub mod forest;
pub mod hypothesis;
pub mod invariants;
pub mod pipeline;
pub mod report;
pub mod rng;
pub mod shap;
pub mod stats;
pub mod synthetic;
pub mod uncertainty;

mod error;

pub use error::{Error, Result};
