//! Toolkit for constructing synthetic overlapped-speech datasets from
//! single-speaker corpora and evaluating separation output.
//!
//! The pipeline runs segmentation -> speaker verification -> utterance
//! pairing -> mixture rendering, and the evaluation side provides oracle
//! mask separation, a permutation-invariant spectral loss, and SI-SDR
//! metrics. See the `overmix` binary for the command-line front end.

pub mod audio;
pub mod error;
pub mod metrics;
pub mod mix;
pub mod pair;
pub mod seed;
pub mod segment;
pub mod separate;
pub mod stats;
pub mod stft;
pub mod verify;

pub use audio::{read_wav, write_wav, SampleFormat, Waveform};
pub use error::{Error, Result};
