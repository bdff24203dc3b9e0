//! End-to-end dual-stream codec.
//!
//! Encode: waveform -> magnitude+phase features (stacked) alongside a
//! semantic stream (log-mel proxy or external features) -> optional
//! similarity-driven aggregation -> per-stream residual quantization, with
//! segment durations embedded in each stream's first-layer codes. Decode
//! inverts the chain and reconstructs audio by overlap-add synthesis from
//! the quantized magnitude+phase. The semantic stream never drives the
//! waveform path; it is quantized, persisted, and integrity-checked for
//! downstream consumers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::framerate::{
    aggregate, deaggregate, decode_duration, encode_duration, segment_by_similarity,
    AggregationConfig, SegmentPartition,
};
use crate::quantizer::{rvq_decode, rvq_encode, CodeGrid, RvqStack, StreamKind};
use crate::scalar::Scalar;
use crate::signal::{
    hann_window, istft, magnitude_frames, mel_filterbank, stack_frames, stft_magphase,
    unstack_frames, FeatureKind, FeatureMatrix, Spectrogram, StftConfig, Waveform,
};
use crate::util::{fnv1a64, Fps};

/// Dimensionality of the built-in semantic proxy.
pub const PROXY_MELS: usize = 80;

/// Where the semantic stream's features come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SemanticSource {
    /// Deterministic log-mel proxy computed from the input waveform.
    #[default]
    Proxy,
    /// Caller-supplied feature matrix (e.g. SSL features ingested offline).
    External,
}

/// Full codec configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CodecConfig {
    pub stft: StftConfig,
    /// Consecutive analysis frames concatenated into one codec frame.
    pub stack_factor: usize,
    pub nq_acoustic: usize,
    pub nq_semantic: usize,
    pub k: usize,
    /// Dynamic frame aggregation; `None` keeps the fixed frame rate.
    pub dynamic: Option<AggregationConfig>,
    pub semantic_source: SemanticSource,
}

impl CodecConfig {
    /// 16 kHz speech profile: 25 Hz frames, 4+4 layers, K=1024.
    pub fn speech_16k() -> Self {
        CodecConfig {
            stft: StftConfig::new(1280, 640).unwrap(),
            stack_factor: 1,
            nq_acoustic: 4,
            nq_semantic: 4,
            k: 1024,
            dynamic: None,
            semantic_source: SemanticSource::Proxy,
        }
    }

    /// 48 kHz profile: 50 Hz analysis stacked 8x to 6.25 Hz, 16+16 layers.
    pub fn full_band_48k() -> Self {
        CodecConfig {
            stft: StftConfig::new(1920, 960).unwrap(),
            stack_factor: 8,
            nq_acoustic: 16,
            nq_semantic: 16,
            k: 1024,
            dynamic: None,
            semantic_source: SemanticSource::Proxy,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.stft.validate_reconstruction()?;
        if self.stack_factor == 0 {
            return Err(Error::InvalidConfig("stack_factor must be >= 1".into()));
        }
        if self.nq_acoustic == 0 || self.nq_semantic == 0 {
            return Err(Error::InvalidConfig("layer counts must be >= 1".into()));
        }
        if self.nq_acoustic > u8::MAX as usize || self.nq_semantic > u8::MAX as usize {
            return Err(Error::InvalidConfig("layer counts must fit in u8".into()));
        }
        if self.k == 0 {
            return Err(Error::InvalidConfig("k must be >= 1".into()));
        }
        if let Some(dynamic) = &self.dynamic {
            dynamic.validate()?;
        }
        let vocab = self.k * self.d_max();
        if vocab > u16::MAX as usize {
            return Err(Error::InvalidConfig(format!(
                "K * d_max = {vocab} exceeds the u16 code space"
            )));
        }
        Ok(())
    }

    /// Maximum segment duration; 1 in static mode.
    pub fn d_max(&self) -> usize {
        self.dynamic.as_ref().map(|d| d.d_max).unwrap_or(1)
    }

    /// Nominal post-stacking frame rate at `sample_rate`.
    pub fn fps_nominal(&self, sample_rate: u32) -> Fps {
        Fps::from_step(
            sample_rate,
            (self.stft.hop_length * self.stack_factor) as u32,
        )
    }

    /// Reserved PAD symbol for delayed layouts: one past the largest
    /// duration-embedded code.
    pub fn pad_symbol(&self) -> u16 {
        (self.k * self.d_max()) as u16
    }

    /// Feature dimensionality entering the acoustic quantizer.
    pub fn acoustic_dim(&self) -> usize {
        (self.stft.frame_length + 2) * self.stack_factor
    }
}

/// Trained quantizers for both streams.
#[derive(Debug, Clone, PartialEq)]
pub struct CodecStacks<S: Scalar> {
    pub acoustic: RvqStack<S>,
    pub semantic: RvqStack<S>,
}

impl<S: Scalar> CodecStacks<S> {
    pub fn new(acoustic: RvqStack<S>, semantic: RvqStack<S>) -> Result<Self> {
        if acoustic.stream != StreamKind::Acoustic || semantic.stream != StreamKind::Semantic {
            return Err(Error::ShapeMismatch(
                "stacks assigned to the wrong streams".into(),
            ));
        }
        Ok(CodecStacks { acoustic, semantic })
    }

    /// Checks layer counts, codebook sizes, and the acoustic feature width
    /// against a config.
    pub fn check_against(&self, cfg: &CodecConfig) -> Result<()> {
        if self.acoustic.nq() != cfg.nq_acoustic || self.semantic.nq() != cfg.nq_semantic {
            return Err(Error::ShapeMismatch(format!(
                "stacks have {}+{} layers, config wants {}+{}",
                self.acoustic.nq(),
                self.semantic.nq(),
                cfg.nq_acoustic,
                cfg.nq_semantic
            )));
        }
        if self.acoustic.k() != cfg.k || self.semantic.k() != cfg.k {
            return Err(Error::ShapeMismatch(format!(
                "stacks have K {}/{}, config wants {}",
                self.acoustic.k(),
                self.semantic.k(),
                cfg.k
            )));
        }
        if self.acoustic.d() != cfg.acoustic_dim() {
            return Err(Error::ShapeMismatch(format!(
                "acoustic stack D {} does not match config feature width {}",
                self.acoustic.d(),
                cfg.acoustic_dim()
            )));
        }
        Ok(())
    }
}

/// One encoded clip: dual code grids plus everything needed to decode it
/// and to populate a token-file header.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedAudio {
    pub acoustic: CodeGrid,
    pub semantic: CodeGrid,
    /// Present exactly in dynamic mode; lengths equal the grid T.
    pub partition: Option<SegmentPartition>,
    pub original_len: u64,
    pub sample_rate: u32,
    pub fps_nominal: Fps,
    pub k: usize,
    pub d_max: usize,
    pub fingerprint: u64,
}

/// Stable identity of (config, trained codebooks). Decoding with stacks
/// whose fingerprint differs is refused.
pub fn fingerprint<S: Scalar>(cfg: &CodecConfig, stacks: &CodecStacks<S>) -> u64 {
    let mut bytes = Vec::new();
    bytes.extend_from_slice(b"HCODEC1");
    bytes.extend_from_slice(&(cfg.stft.frame_length as u64).to_le_bytes());
    bytes.extend_from_slice(&(cfg.stft.hop_length as u64).to_le_bytes());
    bytes.extend_from_slice(&(cfg.stack_factor as u64).to_le_bytes());
    bytes.push(cfg.nq_acoustic as u8);
    bytes.push(cfg.nq_semantic as u8);
    bytes.extend_from_slice(&(cfg.k as u16).to_le_bytes());
    match &cfg.dynamic {
        None => bytes.push(0),
        Some(d) => {
            bytes.push(1);
            bytes.extend_from_slice(&d.threshold.to_le_bytes());
            bytes.push(d.d_max as u8);
            bytes.extend_from_slice(&(d.window as u32).to_le_bytes());
        }
    }
    bytes.push(match cfg.semantic_source {
        SemanticSource::Proxy => 0,
        SemanticSource::External => 1,
    });
    for stack in [&stacks.acoustic, &stacks.semantic] {
        for layer in stack.layers() {
            for e in layer.entries() {
                bytes.extend_from_slice(&(e.into_f64() as f32).to_le_bytes());
            }
        }
    }
    fnv1a64(&bytes)
}

/// Zero-pads the tail so analysis yields T = ceil(len / hop) frames.
fn pad_for_analysis<S: Scalar>(w: &Waveform<S>, stft: &StftConfig) -> Waveform<S> {
    let t = w.len().div_ceil(stft.hop_length);
    let padded_len = stft.frame_length + (t - 1) * stft.hop_length;
    let mut samples = w.samples.clone();
    samples.resize(padded_len.max(w.len()), S::zero());
    Waveform {
        samples,
        sample_rate: w.sample_rate,
    }
}

/// Codec-frame count for a clip: ceil over hop, then ceil over stacking.
pub fn frame_count(len: usize, cfg: &CodecConfig) -> usize {
    len.div_ceil(cfg.stft.hop_length).div_ceil(cfg.stack_factor)
}

/// Magnitude+phase features at the codec frame rate.
pub fn acoustic_features<S: Scalar>(
    w: &Waveform<S>,
    cfg: &CodecConfig,
) -> Result<FeatureMatrix<S>> {
    let padded = pad_for_analysis(w, &cfg.stft);
    let spec = stft_magphase(&padded, &cfg.stft)?;
    let features = spec.into_features();
    if cfg.stack_factor == 1 {
        Ok(features)
    } else {
        stack_frames(&features, cfg.stack_factor)
    }
}

/// Deterministic semantic stand-in: 80-dim log-mel, per-dimension
/// standardized, smoothed over +-2 frames, then averaged down to the codec
/// frame rate. Dimensions with zero temporal variance become the constant
/// 1.0, so featureless audio merges maximally under dynamic aggregation.
pub fn semantic_proxy<S: Scalar>(w: &Waveform<S>, cfg: &CodecConfig) -> Result<FeatureMatrix<S>> {
    let padded = pad_for_analysis(w, &cfg.stft);
    let window = hann_window::<S>(cfg.stft.frame_length);
    let (mags, t, bins) = magnitude_frames(
        &padded.samples,
        cfg.stft.frame_length,
        cfg.stft.hop_length,
        &window,
    )?;
    let bank = mel_filterbank::<S>(PROXY_MELS, bins, w.sample_rate, cfg.stft.frame_length);
    let eps = S::of_f64(1e-10);
    let mut data = vec![S::zero(); t * PROXY_MELS];
    for ti in 0..t {
        let mag = &mags[ti * bins..(ti + 1) * bins];
        for m in 0..PROXY_MELS {
            let row = &bank[m * bins..(m + 1) * bins];
            let mut acc = S::zero();
            for (wk, xk) in row.iter().zip(mag.iter()) {
                if *wk != S::zero() {
                    acc += *wk * *xk;
                }
            }
            data[ti * PROXY_MELS + m] = (acc + eps).ln();
        }
    }
    // Per-dimension standardization; constant dimensions map to 1.0.
    let inv_t = S::one() / S::of_usize(t);
    for m in 0..PROXY_MELS {
        let mut mean = S::zero();
        for ti in 0..t {
            mean += data[ti * PROXY_MELS + m];
        }
        mean *= inv_t;
        let mut var = S::zero();
        for ti in 0..t {
            let dv = data[ti * PROXY_MELS + m] - mean;
            var += dv * dv;
        }
        var *= inv_t;
        if var.into_f64() < 1e-20 {
            for ti in 0..t {
                data[ti * PROXY_MELS + m] = S::one();
            }
        } else {
            let inv_std = S::one() / var.sqrt();
            for ti in 0..t {
                data[ti * PROXY_MELS + m] = (data[ti * PROXY_MELS + m] - mean) * inv_std;
            }
        }
    }
    // Moving average over +-2 frames.
    let mut smoothed = vec![S::zero(); t * PROXY_MELS];
    for ti in 0..t {
        let lo = ti.saturating_sub(2);
        let hi = (ti + 3).min(t);
        let inv = S::one() / S::of_usize(hi - lo);
        for m in 0..PROXY_MELS {
            let mut acc = S::zero();
            for u in lo..hi {
                acc += data[u * PROXY_MELS + m];
            }
            smoothed[ti * PROXY_MELS + m] = acc * inv;
        }
    }
    let fps = cfg.stft.fps(w.sample_rate);
    let proxy = FeatureMatrix::new(smoothed, t, PROXY_MELS, fps, FeatureKind::SemanticProxy)?;
    if cfg.stack_factor == 1 {
        return Ok(proxy);
    }
    // Group means align the proxy to the stacked acoustic frames.
    let t_out = t.div_ceil(cfg.stack_factor);
    let mut out = vec![S::zero(); t_out * PROXY_MELS];
    for g in 0..t_out {
        let lo = g * cfg.stack_factor;
        let hi = (lo + cfg.stack_factor).min(t);
        let inv = S::one() / S::of_usize(hi - lo);
        for m in 0..PROXY_MELS {
            let mut acc = S::zero();
            for u in lo..hi {
                acc += proxy.frame(u)[m];
            }
            out[g * PROXY_MELS + m] = acc * inv;
        }
    }
    FeatureMatrix::new(
        out,
        t_out,
        PROXY_MELS,
        fps / cfg.stack_factor as f64,
        FeatureKind::SemanticProxy,
    )
}

/// Embeds partition durations into a grid's first layer in place.
fn embed_durations(grid: &mut CodeGrid, partition: &SegmentPartition, k: usize) -> Result<()> {
    let t = grid.t();
    if partition.len() != t {
        return Err(Error::ShapeMismatch(format!(
            "partition has {} segments, grid has {}",
            partition.len(),
            t
        )));
    }
    let layer0 = grid.layer_mut(0);
    for (c, &d) in layer0.iter_mut().zip(partition.durations().iter()) {
        *c = encode_duration(*c, d, k)?;
    }
    Ok(())
}

/// Splits a grid's first-layer codes into plain codes plus durations.
fn extract_durations(grid: &mut CodeGrid, k: usize, d_max: usize) -> Result<SegmentPartition> {
    let mut durations = Vec::with_capacity(grid.t());
    let layer0 = grid.layer_mut(0);
    for c in layer0.iter_mut() {
        let (code, d) = decode_duration(*c, k)?;
        *c = code;
        durations.push(d);
    }
    SegmentPartition::new(durations, d_max)
}

fn encode_features<S: Scalar>(
    acoustic: FeatureMatrix<S>,
    semantic: FeatureMatrix<S>,
    w_len: usize,
    sample_rate: u32,
    cfg: &CodecConfig,
    stacks: &CodecStacks<S>,
) -> Result<EncodedAudio> {
    if acoustic.t() != semantic.t() {
        return Err(Error::ShapeMismatch(format!(
            "acoustic T {} != semantic T {}",
            acoustic.t(),
            semantic.t()
        )));
    }
    if semantic.d() != stacks.semantic.d() {
        return Err(Error::ShapeMismatch(format!(
            "semantic features have D {}, stack expects {}",
            semantic.d(),
            stacks.semantic.d()
        )));
    }
    let (acoustic, semantic, partition) = match &cfg.dynamic {
        None => (acoustic, semantic, None),
        Some(agg) => {
            let partition = segment_by_similarity(&semantic, agg)?;
            let a = aggregate(&acoustic, &partition)?;
            let s = aggregate(&semantic, &partition)?;
            (a, s, Some(partition))
        }
    };
    let mut acoustic_grid = rvq_encode(&stacks.acoustic, &acoustic)?;
    let mut semantic_grid = rvq_encode(&stacks.semantic, &semantic)?;
    if let Some(partition) = &partition {
        embed_durations(&mut acoustic_grid, partition, cfg.k)?;
        embed_durations(&mut semantic_grid, partition, cfg.k)?;
    }
    Ok(EncodedAudio {
        acoustic: acoustic_grid,
        semantic: semantic_grid,
        partition,
        original_len: w_len as u64,
        sample_rate,
        fps_nominal: cfg.fps_nominal(sample_rate),
        k: cfg.k,
        d_max: cfg.d_max(),
        fingerprint: fingerprint(cfg, stacks),
    })
}

/// Encodes a waveform with the built-in semantic proxy.
pub fn encode<S: Scalar>(
    w: &Waveform<S>,
    cfg: &CodecConfig,
    stacks: &CodecStacks<S>,
) -> Result<EncodedAudio> {
    cfg.validate()?;
    stacks.check_against(cfg)?;
    if cfg.semantic_source == SemanticSource::External {
        return Err(Error::InvalidConfig(
            "config expects external semantic features; use encode_with_semantic".into(),
        ));
    }
    let acoustic = acoustic_features(w, cfg)?;
    let semantic = semantic_proxy(w, cfg)?;
    encode_features(acoustic, semantic, w.len(), w.sample_rate, cfg, stacks)
}

/// Encodes with caller-supplied semantic features (external SSL path).
/// The features must already be at the codec frame rate with one frame per
/// codec frame.
pub fn encode_with_semantic<S: Scalar>(
    w: &Waveform<S>,
    cfg: &CodecConfig,
    stacks: &CodecStacks<S>,
    semantic: FeatureMatrix<S>,
) -> Result<EncodedAudio> {
    cfg.validate()?;
    stacks.check_against(cfg)?;
    let acoustic = acoustic_features(w, cfg)?;
    if semantic.t() != acoustic.t() {
        return Err(Error::ShapeMismatch(format!(
            "external semantic features have {} frames, clip needs {}",
            semantic.t(),
            acoustic.t()
        )));
    }
    let nominal = cfg.fps_nominal(w.sample_rate).as_f64();
    if (semantic.fps - nominal).abs() > 1e-9 * nominal {
        return Err(Error::ShapeMismatch(format!(
            "external semantic features at {} fps, codec runs at {} fps",
            semantic.fps, nominal
        )));
    }
    encode_features(acoustic, semantic, w.len(), w.sample_rate, cfg, stacks)
}

/// Decodes an encoded clip back to audio. The output has exactly
/// `original_len` samples, clamped into [-1, 1].
pub fn decode<S: Scalar>(
    enc: &EncodedAudio,
    cfg: &CodecConfig,
    stacks: &CodecStacks<S>,
) -> Result<Waveform<S>> {
    cfg.validate()?;
    stacks.check_against(cfg)?;
    let expected = fingerprint(cfg, stacks);
    if enc.fingerprint != expected {
        return Err(Error::CodecMismatch(format!(
            "tokens were produced by codec {:016x}, decoder is {:016x}",
            enc.fingerprint, expected
        )));
    }
    let layer0_bound = cfg.k * cfg.d_max();
    enc.acoustic.validate_ranges(cfg.k, layer0_bound)?;
    enc.semantic.validate_ranges(cfg.k, layer0_bound)?;

    let mut acoustic_grid = enc.acoustic.clone();
    let mut semantic_grid = enc.semantic.clone();
    let partition = match (&cfg.dynamic, &enc.partition) {
        (None, None) => None,
        (Some(agg), Some(stored)) => {
            let from_acoustic = extract_durations(&mut acoustic_grid, cfg.k, agg.d_max)?;
            let from_semantic = extract_durations(&mut semantic_grid, cfg.k, agg.d_max)?;
            if from_acoustic != *stored || from_semantic != *stored {
                return Err(Error::ShapeMismatch(
                    "embedded durations disagree with the stored partition".into(),
                ));
            }
            Some(from_acoustic)
        }
        (Some(_), None) => {
            return Err(Error::CodecMismatch(
                "dynamic config but tokens carry no partition".into(),
            ))
        }
        (None, Some(_)) => {
            return Err(Error::CodecMismatch(
                "static config but tokens carry a partition".into(),
            ))
        }
    };

    let fps_nominal = enc.fps_nominal.as_f64();
    let acoustic = rvq_decode(
        &stacks.acoustic,
        &acoustic_grid,
        fps_nominal,
        FeatureKind::AcousticMagPhase,
    )?;
    // The semantic stream is reconstructed for integrity even though the
    // waveform path does not consume it.
    let semantic = rvq_decode(
        &stacks.semantic,
        &semantic_grid,
        fps_nominal,
        FeatureKind::SemanticProxy,
    )?;
    log::trace!(
        "decoded semantic stream: {} frames, rms {:.4}",
        semantic.t(),
        (semantic.data().iter().map(|v| v.into_f64().powi(2)).sum::<f64>()
            / semantic.data().len() as f64)
            .sqrt()
    );

    let smoothing = cfg.dynamic.as_ref().map(|d| d.window).unwrap_or(0);
    let acoustic = match &partition {
        Some(p) => deaggregate(&acoustic, p, smoothing)?,
        None => acoustic,
    };

    let stft_t = (enc.original_len as usize).div_ceil(cfg.stft.hop_length);
    let unstacked = if cfg.stack_factor == 1 {
        acoustic
    } else {
        unstack_frames(&acoustic, cfg.stack_factor, stft_t)?
    };
    let spec = Spectrogram::from_features(&unstacked, enc.sample_rate)?;
    let mut wave = istft(&spec, &cfg.stft)?;
    wave.samples.truncate(enc.original_len as usize);
    if wave.samples.len() < enc.original_len as usize {
        return Err(Error::ShapeMismatch(format!(
            "reconstruction produced {} samples, header says {}",
            wave.samples.len(),
            enc.original_len
        )));
    }
    wave.clamp_unit();
    Ok(wave)
}
