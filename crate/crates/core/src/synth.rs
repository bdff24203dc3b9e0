//! Deterministic synthetic signals for tests, demos, and asset fallbacks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::signal::Waveform;

fn sample_count(sample_rate: u32, secs: f64) -> usize {
    ((sample_rate as f64 * secs).round() as usize).max(1)
}

/// Pure sine tone.
pub fn tone(freq: f64, sample_rate: u32, secs: f64, amp: f64) -> Waveform<f64> {
    let n = sample_count(sample_rate, secs);
    let w = 2.0 * std::f64::consts::PI * freq / sample_rate as f64;
    let samples = (0..n).map(|i| amp * (w * i as f64).sin()).collect();
    Waveform::new(samples, sample_rate).unwrap()
}

/// Linear sweep from `f0` to `f1` Hz.
pub fn chirp(f0: f64, f1: f64, sample_rate: u32, secs: f64, amp: f64) -> Waveform<f64> {
    let n = sample_count(sample_rate, secs);
    let sr = sample_rate as f64;
    let rate = (f1 - f0) / (n as f64 / sr);
    let samples = (0..n)
        .map(|i| {
            let t = i as f64 / sr;
            let phase = 2.0 * std::f64::consts::PI * (f0 * t + 0.5 * rate * t * t);
            amp * phase.sin()
        })
        .collect();
    Waveform::new(samples, sample_rate).unwrap()
}

/// Seeded uniform white noise in [-amp, amp].
pub fn white_noise(seed: u64, sample_rate: u32, secs: f64, amp: f64) -> Waveform<f64> {
    let n = sample_count(sample_rate, secs);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = (0..n)
        .map(|_| amp * (rng.random::<f64>() * 2.0 - 1.0))
        .collect();
    Waveform::new(samples, sample_rate).unwrap()
}

/// All zeros.
pub fn silence(sample_rate: u32, secs: f64) -> Waveform<f64> {
    Waveform::new(vec![0.0; sample_count(sample_rate, secs)], sample_rate).unwrap()
}

/// Harmonic stack with drifting pitch, two resonance peaks, a syllabic
/// amplitude gate, and a low noise floor. Spectrally non-stationary enough
/// to exercise segmentation and quantization without real recordings.
pub fn speech_like(seed: u64, sample_rate: u32, secs: f64) -> Waveform<f64> {
    let n = sample_count(sample_rate, secs);
    let sr = sample_rate as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let f0_base: f64 = rng.random_range(95.0..180.0);
    let vibrato_hz: f64 = rng.random_range(0.4..1.2);
    let formant1: f64 = rng.random_range(400.0..900.0);
    let formant2: f64 = rng.random_range(1200.0..2400.0);
    let syllable_hz: f64 = rng.random_range(2.0..4.0);
    let noise_amp: f64 = 0.01;

    let resonance = |f: f64| {
        let r1 = (-((f - formant1) / 250.0).powi(2)).exp();
        let r2 = 0.6 * (-((f - formant2) / 350.0).powi(2)).exp();
        0.12 + r1 + r2
    };

    let mut samples = Vec::with_capacity(n);
    let mut phases = [0.0f64; 12];
    for i in 0..n {
        let t = i as f64 / sr;
        let f0 = f0_base * (1.0 + 0.04 * (2.0 * std::f64::consts::PI * vibrato_hz * t).sin());
        let gate = 0.55 + 0.45 * (2.0 * std::f64::consts::PI * syllable_hz * t).sin();
        let mut v = 0.0;
        for (h, phase) in phases.iter_mut().enumerate() {
            let f = f0 * (h + 1) as f64;
            if f >= sr / 2.0 {
                break;
            }
            *phase += 2.0 * std::f64::consts::PI * f / sr;
            v += resonance(f) / (h + 1) as f64 * phase.sin();
        }
        v = 0.18 * gate * v + noise_amp * (rng.random::<f64>() * 2.0 - 1.0);
        samples.push(v.clamp(-1.0, 1.0));
    }
    Waveform::new(samples, sample_rate).unwrap()
}

/// Single unit impulse at `pos` in an otherwise zero signal.
pub fn impulse(sample_rate: u32, len: usize, pos: usize) -> Waveform<f64> {
    let mut samples = vec![0.0; len.max(pos + 1)];
    samples[pos] = 1.0;
    Waveform::new(samples, sample_rate).unwrap()
}
