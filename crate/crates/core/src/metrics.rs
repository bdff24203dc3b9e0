//! Objective evaluation: spectral losses, SNR variants, and token-rate
//! accounting.
//!
//! Both spectral losses are mean absolute differences of magnitude spectra
//! (mel-filtered for the mel loss) under a fixed Hann 1024/256 analysis.
//! They are pseudo-metrics: nonnegative, symmetric, zero on identical
//! magnitudes.

use serde::{Deserialize, Serialize};

use crate::codec::EncodedAudio;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::signal::{hann_window, magnitude_frames, mel_filterbank, Waveform};

/// dB value reported when the error power underflows to zero.
pub const SNR_CAP_DB: f64 = 120.0;

/// Analysis geometry for the spectral losses.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SpectralLossConfig {
    pub frame_length: usize,
    pub hop_length: usize,
    pub n_mels: usize,
}

impl Default for SpectralLossConfig {
    fn default() -> Self {
        SpectralLossConfig {
            frame_length: 1024,
            hop_length: 256,
            n_mels: 100,
        }
    }
}

impl SpectralLossConfig {
    fn validate(&self) -> Result<()> {
        if self.frame_length == 0 || self.hop_length == 0 {
            return Err(Error::InvalidConfig(
                "loss frame and hop must be positive".into(),
            ));
        }
        if self.n_mels == 0 || self.n_mels > self.frame_length / 2 + 1 {
            return Err(Error::InvalidConfig(format!(
                "n_mels {} out of range for frame {}",
                self.n_mels, self.frame_length
            )));
        }
        Ok(())
    }
}

/// Zero-pads both signals to a shared length of at least one frame.
fn padded_pair<S: Scalar>(
    a: &Waveform<S>,
    b: &Waveform<S>,
    frame: usize,
) -> Result<(Vec<S>, Vec<S>)> {
    if a.sample_rate != b.sample_rate {
        return Err(Error::ShapeMismatch(format!(
            "sample rates differ: {} vs {}",
            a.sample_rate, b.sample_rate
        )));
    }
    if a.len() != b.len() {
        log::warn!(
            "spectral loss inputs differ in length ({} vs {}); zero-padding the shorter",
            a.len(),
            b.len()
        );
    }
    let len = a.len().max(b.len()).max(frame);
    let mut pa = a.samples.clone();
    pa.resize(len, S::zero());
    let mut pb = b.samples.clone();
    pb.resize(len, S::zero());
    Ok((pa, pb))
}

/// Mean absolute difference of Hann-windowed magnitude spectra.
pub fn stft_loss<S: Scalar>(
    a: &Waveform<S>,
    b: &Waveform<S>,
    cfg: &SpectralLossConfig,
) -> Result<f64> {
    cfg.validate()?;
    let (pa, pb) = padded_pair(a, b, cfg.frame_length)?;
    let window = hann_window::<S>(cfg.frame_length);
    let (ma, t, bins) = magnitude_frames(&pa, cfg.frame_length, cfg.hop_length, &window)?;
    let (mb, _, _) = magnitude_frames(&pb, cfg.frame_length, cfg.hop_length, &window)?;
    let mut acc = 0.0;
    for (x, y) in ma.iter().zip(mb.iter()) {
        acc += (*x - *y).abs().into_f64();
    }
    Ok(acc / (t * bins) as f64)
}

/// Mean absolute difference of mel-filtered magnitude spectra.
pub fn mel_loss<S: Scalar>(
    a: &Waveform<S>,
    b: &Waveform<S>,
    cfg: &SpectralLossConfig,
) -> Result<f64> {
    cfg.validate()?;
    let (pa, pb) = padded_pair(a, b, cfg.frame_length)?;
    let window = hann_window::<S>(cfg.frame_length);
    let (ma, t, bins) = magnitude_frames(&pa, cfg.frame_length, cfg.hop_length, &window)?;
    let (mb, _, _) = magnitude_frames(&pb, cfg.frame_length, cfg.hop_length, &window)?;
    let bank = mel_filterbank::<S>(cfg.n_mels, bins, a.sample_rate, cfg.frame_length);
    let mut acc = 0.0;
    for ti in 0..t {
        let fa = &ma[ti * bins..(ti + 1) * bins];
        let fb = &mb[ti * bins..(ti + 1) * bins];
        for m in 0..cfg.n_mels {
            let row = &bank[m * bins..(m + 1) * bins];
            let mut ea = S::zero();
            let mut eb = S::zero();
            for k in 0..bins {
                let w = row[k];
                if w != S::zero() {
                    ea += w * fa[k];
                    eb += w * fb[k];
                }
            }
            acc += (ea - eb).abs().into_f64();
        }
    }
    Ok(acc / (t * cfg.n_mels) as f64)
}

/// 10 log10(||clean||^2 / ||clean - test||^2), capped at [`SNR_CAP_DB`].
pub fn snr<S: Scalar>(clean: &Waveform<S>, test: &Waveform<S>) -> Result<f64> {
    if clean.len() != test.len() {
        return Err(Error::ShapeMismatch(format!(
            "snr needs equal lengths, got {} vs {}",
            clean.len(),
            test.len()
        )));
    }
    let mut sig = 0.0;
    let mut err = 0.0;
    for (c, t) in clean.samples.iter().zip(test.samples.iter()) {
        let cv = c.into_f64();
        let ev = cv - t.into_f64();
        sig += cv * cv;
        err += ev * ev;
    }
    if sig == 0.0 {
        return Err(Error::SilentInput("snr reference is all zero".into()));
    }
    if err == 0.0 {
        return Ok(SNR_CAP_DB);
    }
    Ok((10.0 * (sig / err).log10()).min(SNR_CAP_DB))
}

/// Scale-invariant SNR: the estimate is first projected onto the reference
/// so a pure gain change scores the cap.
pub fn si_snr<S: Scalar>(reference: &Waveform<S>, estimate: &Waveform<S>) -> Result<f64> {
    if reference.len() != estimate.len() {
        return Err(Error::ShapeMismatch(format!(
            "si_snr needs equal lengths, got {} vs {}",
            reference.len(),
            estimate.len()
        )));
    }
    let n = reference.len() as f64;
    let mean_r: f64 = reference.samples.iter().map(|s| s.into_f64()).sum::<f64>() / n;
    let mean_e: f64 = estimate.samples.iter().map(|s| s.into_f64()).sum::<f64>() / n;
    let mut dot = 0.0;
    let mut rr = 0.0;
    for (r, e) in reference.samples.iter().zip(estimate.samples.iter()) {
        let rv = r.into_f64() - mean_r;
        let ev = e.into_f64() - mean_e;
        dot += rv * ev;
        rr += rv * rv;
    }
    if rr == 0.0 {
        return Err(Error::SilentInput("si_snr reference is all zero".into()));
    }
    let scale = dot / rr;
    let mut target = 0.0;
    let mut noise = 0.0;
    for (r, e) in reference.samples.iter().zip(estimate.samples.iter()) {
        let rv = (r.into_f64() - mean_r) * scale;
        let ev = e.into_f64() - mean_e - rv;
        target += rv * rv;
        noise += ev * ev;
    }
    if noise == 0.0 {
        return Ok(SNR_CAP_DB);
    }
    Ok((10.0 * (target / noise).log10()).min(SNR_CAP_DB))
}

/// Token-rate accounting for one encoded clip. Two bit counts are reported
/// because duration-embedded first layers need ceil(log2(K * d_max)) bits
/// while plain layers need ceil(log2 K).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RateReport {
    pub fps_nominal: f64,
    pub fps_effective: f64,
    pub bits_per_code: u32,
    pub nq_total: usize,
    pub bps_simple: f64,
    pub bps_duration_aware: f64,
}

/// ceil(log2 k); 0 for a single-entry book.
pub fn bits_per_code(k: usize) -> u32 {
    if k <= 1 {
        0
    } else {
        usize::BITS - (k - 1).leading_zeros()
    }
}

/// Rate arithmetic from raw quantities. `duration_layers` is the number of
/// layers whose codes embed durations (2 in dynamic dual-stream mode: the
/// first layer of each stream; 0 in static mode).
pub fn rate_report_from_parts(
    fps_nominal: f64,
    fps_effective: f64,
    k: usize,
    d_max: usize,
    nq_total: usize,
    duration_layers: usize,
) -> RateReport {
    let bits = bits_per_code(k);
    let bits_dur = bits_per_code(k * d_max);
    let plain = nq_total - duration_layers;
    RateReport {
        fps_nominal,
        fps_effective,
        bits_per_code: bits,
        nq_total,
        bps_simple: fps_effective * nq_total as f64 * bits as f64,
        bps_duration_aware: fps_effective
            * (plain as f64 * bits as f64 + duration_layers as f64 * bits_dur as f64),
    }
}

/// Rate report for an encoded clip: effective fps is segments per second
/// in dynamic mode and the nominal rate otherwise.
pub fn rate_report(enc: &EncodedAudio) -> Result<RateReport> {
    if enc.original_len == 0 {
        return Err(Error::EmptyInput);
    }
    let seconds = enc.original_len as f64 / enc.sample_rate as f64;
    let fps_nominal = enc.fps_nominal.as_f64();
    let (fps_effective, duration_layers) = if enc.partition.is_some() {
        (enc.acoustic.t() as f64 / seconds, 2)
    } else {
        (fps_nominal, 0)
    };
    Ok(rate_report_from_parts(
        fps_nominal,
        fps_effective,
        enc.k,
        enc.d_max,
        enc.acoustic.nq() + enc.semantic.nq(),
        duration_layers,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth;

    fn cfg() -> SpectralLossConfig {
        SpectralLossConfig::default()
    }

    #[test]
    fn identical_signals_have_zero_loss() {
        let a = synth::tone(440.0, 16_000, 0.5, 0.5);
        assert_eq!(stft_loss(&a, &a, &cfg()).unwrap(), 0.0);
        assert_eq!(mel_loss(&a, &a, &cfg()).unwrap(), 0.0);
    }

    #[test]
    fn losses_are_symmetric_and_nonnegative() {
        for seed in 0..5 {
            let a = synth::white_noise(seed, 16_000, 0.3, 0.3);
            let b = synth::tone(200.0 + 50.0 * seed as f64, 16_000, 0.3, 0.4);
            let sab = stft_loss(&a, &b, &cfg()).unwrap();
            let sba = stft_loss(&b, &a, &cfg()).unwrap();
            assert!(sab >= 0.0);
            assert!((sab - sba).abs() < 1e-12);
            let mab = mel_loss(&a, &b, &cfg()).unwrap();
            let mba = mel_loss(&b, &a, &cfg()).unwrap();
            assert!(mab >= 0.0);
            assert!((mab - mba).abs() < 1e-12);
        }
    }

    #[test]
    fn length_mismatch_pads_instead_of_failing() {
        let a = synth::tone(440.0, 16_000, 0.5, 0.5);
        let mut short = a.clone();
        short.samples.truncate(a.len() - 1000);
        let loss = stft_loss(&a, &short, &cfg()).unwrap();
        assert!(loss > 0.0);
    }

    #[test]
    fn snr_caps_on_identical_signals() {
        let a = synth::tone(440.0, 16_000, 0.2, 0.5);
        assert_eq!(snr(&a, &a).unwrap(), SNR_CAP_DB);
        assert_eq!(si_snr(&a, &a).unwrap(), SNR_CAP_DB);
    }

    #[test]
    fn equal_rms_mixture_scores_zero_db() {
        let clean = synth::tone(300.0, 16_000, 1.0, 0.4);
        let noise = synth::white_noise(7, 16_000, 1.0, 1.0);
        let g = clean.rms() / noise.rms();
        let mixed: Vec<f64> = clean
            .samples
            .iter()
            .zip(noise.samples.iter())
            .map(|(c, n)| c + g * n)
            .collect();
        let test = Waveform::new(mixed, 16_000).unwrap();
        let db = snr(&clean, &test).unwrap();
        assert!(db.abs() < 0.1, "snr {db}");
    }

    #[test]
    fn halved_noise_gains_six_db() {
        let clean = synth::tone(300.0, 16_000, 1.0, 0.4);
        let noise = synth::white_noise(7, 16_000, 1.0, 1.0);
        let g = 0.5 * clean.rms() / noise.rms();
        let mixed: Vec<f64> = clean
            .samples
            .iter()
            .zip(noise.samples.iter())
            .map(|(c, n)| c + g * n)
            .collect();
        let test = Waveform::new(mixed, 16_000).unwrap();
        let db = snr(&clean, &test).unwrap();
        assert!((db - 6.02).abs() < 0.1, "snr {db}");
    }

    #[test]
    fn silent_reference_is_rejected() {
        let z = Waveform::new(vec![0.0f64; 4000], 16_000).unwrap();
        let a = synth::tone(440.0, 16_000, 0.25, 0.5);
        assert!(matches!(snr(&z, &a), Err(Error::SilentInput(_))));
    }

    #[test]
    fn si_snr_ignores_pure_gain() {
        let a = synth::tone(440.0, 16_000, 0.25, 0.4);
        let scaled =
            Waveform::new(a.samples.iter().map(|s| s * 0.3).collect(), 16_000).unwrap();
        assert_eq!(si_snr(&a, &scaled).unwrap(), SNR_CAP_DB);
    }

    #[test]
    fn bits_per_code_is_ceil_log2() {
        assert_eq!(bits_per_code(1), 0);
        assert_eq!(bits_per_code(2), 1);
        assert_eq!(bits_per_code(3), 2);
        assert_eq!(bits_per_code(256), 8);
        assert_eq!(bits_per_code(1024), 10);
        assert_eq!(bits_per_code(1025), 11);
        assert_eq!(bits_per_code(8192), 13);
    }

    #[test]
    fn static_rate_cells_are_exact() {
        let r1 = rate_report_from_parts(25.0, 25.0, 1024, 8, 8, 0);
        assert_eq!(r1.bps_simple, 2000.0);
        assert_eq!(r1.bps_duration_aware, 2000.0);
        let r2 = rate_report_from_parts(6.25, 6.25, 1024, 8, 32, 0);
        assert_eq!(r2.bps_simple, 2000.0);
        let r3 = rate_report_from_parts(75.0, 75.0, 1024, 8, 8, 0);
        assert_eq!(r3.bps_simple, 6000.0);
    }

    #[test]
    fn duration_layers_cost_three_extra_bits_each() {
        // K=1024, d_max=8: plain 10 bits, duration layers 13 bits.
        let r = rate_report_from_parts(25.0, 12.5, 1024, 8, 8, 2);
        assert_eq!(r.bps_simple, 12.5 * 8.0 * 10.0);
        assert_eq!(r.bps_duration_aware, 12.5 * (6.0 * 10.0 + 2.0 * 13.0));
    }
}
