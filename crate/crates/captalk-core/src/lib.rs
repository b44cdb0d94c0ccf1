//! Core library of the CapTalk voice-design toolkit.
//!
//! The crate is organized around the stages of the pipeline:
//!
//! - [`dsp`] — deterministic signal primitives: energy VAD, lag-search pitch
//!   estimation, voiced RMS, semitone mapping, log-mel features, WAV I/O.
//! - [`cot`] — turn-level control labels: speaker baselines and the
//!   seven-level relative pitch/energy/speed bins plus emotion/tone
//!   ingestion.
//! - [`corpus`] — single-utterance and dialogue dataset construction:
//!   caption attachment, eligible-speaker filtering, speaker views, turn
//!   windows.
//! - [`seqlayout`] — the unified token sequence for both branches, loss
//!   masks, the factorized frame likelihood behind a pluggable predictor,
//!   and the loss combinators.
//! - [`fhvae`] — hierarchical variational timbre conditioning with its own
//!   reverse-mode gradient tape and a full-batch fitting loop.
//! - [`evalkit`] — speaker similarity, timbre-reuse analysis,
//!   controllability success rates, accuracy and preference aggregation.
//! - [`config`] — the TOML configuration consumed by the CLI.
//! - [`fixtures`] — the deterministic synthetic corpus used by tests and
//!   the examples in the README.
//!
//! Numeric kernels are generic over the scalar type via [`Real`]; the
//! aliases below fix the pipeline default at `f64`.

pub mod config;
pub mod corpus;
pub mod cot;
pub mod dsp;
pub mod error;
pub mod evalkit;
pub mod fhvae;
pub mod fixtures;
pub mod num;
pub mod seqlayout;

pub use error::{Error, Result};
pub use num::Real;

/// Pipeline scalar type. All CLI commands run at double precision.
pub type Scalar = f64;

pub type Waveform = dsp::Waveform<Scalar>;
pub type VoicingMask = dsp::VoicingMask<Scalar>;
pub type F0Track = dsp::F0Track<Scalar>;
pub type FeatureMatrix = dsp::FeatureMatrix<Scalar>;
pub type DspConfig = dsp::DspConfig<Scalar>;
pub type SpeakerBaseline = cot::SpeakerBaseline<Scalar>;
pub type BinThresholds = cot::BinThresholds<Scalar>;
pub type LossWeights = seqlayout::LossWeights<Scalar>;
pub type LossReport = seqlayout::LossReport<Scalar>;
pub type GaussianDiag = fhvae::GaussianDiag<Scalar>;
pub type Segment = fhvae::Segment<Scalar>;
pub type ModuleParams = fhvae::ModuleParams<Scalar>;
pub type LatentBundle = fhvae::LatentBundle<Scalar>;
pub type SpeakerEmbedding = evalkit::SpeakerEmbedding<Scalar>;
