//! Hierarchical frequency tagging probe.
//!
//! Finds units that follow linguistic structure at its own rate (sentences
//! at 1 Hz, phrases at 2 Hz, in a 4 Hz syllable stream) in language-model
//! MLP neurons and in intracranial recordings, then aligns the two.
//!
//! * [`ingest`]: tensors, recordings, ROI maps, binary formats, synthetic data
//! * [`spectral`]: DFT conventions, peak tests, FDR
//! * [`probe_model`]: permutation test and control z-scores for neurons
//! * [`probe_brain`]: ITPC and channel classification
//! * [`alignment`]: SRDMs, RSA, top-`k` selection and similarity scores
//! * [`encoding`]: ridge encoding control over the same aggregation
//!
//! ```
//! use hftp::ingest::{generate_scenario, ScenarioConfig};
//! use hftp::probe_model::{probe_model, ModelProbeConfig};
//!
//! let s = generate_scenario(&ScenarioConfig { n_trials: 4, ..Default::default() }).unwrap();
//! let mut cfg = ModelProbeConfig::default();
//! cfg.permutation.n_perm = 100;
//! let report = probe_model(&s.activations[0], &s.activations[2], &cfg).unwrap();
//! assert_eq!(report.layers.len(), 4);
//! ```

pub mod alignment;
pub mod encoding;
pub mod error;
pub mod ingest;
pub mod probe_brain;
pub mod probe_model;
pub mod spectral;
pub mod stats;

pub use error::{Error, Result};

// The guide's snippets run as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    mod readme {}
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/data-formats.md")]
    mod data_formats {}
    #[doc = include_str!("../../../book/src/spectral.md")]
    mod spectral {}
    #[doc = include_str!("../../../book/src/probing-models.md")]
    mod probing_models {}
    #[doc = include_str!("../../../book/src/probing-recordings.md")]
    mod probing_recordings {}
    #[doc = include_str!("../../../book/src/alignment.md")]
    mod alignment {}
    #[doc = include_str!("../../../book/src/encoding.md")]
    mod encoding {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
