//! Deterministic dual-stream audio tokenizer with similarity-driven
//! dynamic frame aggregation.
//!
//! The pipeline turns waveforms into two parallel residual-vector-quantized
//! token streams — acoustic (STFT magnitude+phase frames) and semantic
//! (log-mel proxy or external features) — optionally merges near-duplicate
//! frames into variable-duration segments whose lengths ride along inside
//! the layer-0 codes, and reconstructs audio from the tokens alone.
//! Around that core: a delay-pattern sequencer for LM consumption,
//! task-mode conditioning, a seeded degradation chain for building paired
//! corpora, objective rate/distortion metrics, and bit-exact file formats.
//!
//! Everything numeric is generic over [`scalar::Scalar`] (`f32` or `f64`);
//! the `*64` aliases below fix the default precision used by the CLI.

pub mod codec;
pub mod conditioning;
pub mod degrade;
pub mod delay;
pub mod error;
pub mod framerate;
pub mod metrics;
pub mod quantizer;
pub mod scalar;
pub mod signal;
pub mod store;
pub mod synth;
pub mod util;
pub mod wav;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Waveform at the default precision.
pub type Waveform64 = signal::Waveform<f64>;
/// Feature frames at the default precision.
pub type FeatureMatrix64 = signal::FeatureMatrix<f64>;
/// Spectrogram at the default precision.
pub type Spectrogram64 = signal::Spectrogram<f64>;
/// One quantizer layer at the default precision.
pub type Codebook64 = quantizer::Codebook<f64>;
/// A residual quantizer stack at the default precision.
pub type RvqStack64 = quantizer::RvqStack<f64>;
/// Both trained stacks of a codec at the default precision.
pub type CodecStacks64 = codec::CodecStacks<f64>;
/// Degradation asset pool at the default precision.
pub type AssetPool64 = degrade::AssetPool<f64>;
/// Condition slot at the default precision.
pub type Condition64 = conditioning::Condition<f64>;
/// Assembled conditioning prefix at the default precision.
pub type ConditioningSequence64 = conditioning::ConditioningSequence<f64>;
