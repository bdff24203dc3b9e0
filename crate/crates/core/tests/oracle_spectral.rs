//! Independent spectral oracles: the library's FFT-based losses are checked
//! against a naive O(N^2) discrete Fourier transform and a from-scratch
//! triangular mel bank, both written here from the defining formulas.

use hcodec::metrics::{mel_loss, stft_loss, SpectralLossConfig};
use hcodec::signal::Waveform;
use hcodec::synth;

/// Naive DFT magnitudes of one windowed frame: |sum_n x[n] w[n] e^{-2pi i kn/N}|
/// for k in 0..=N/2. Quadratic on purpose — this is the reference route.
fn naive_frame_mags(frame: &[f64], window: &[f64]) -> Vec<f64> {
    let n = frame.len();
    let bins = n / 2 + 1;
    let mut mags = Vec::with_capacity(bins);
    for k in 0..bins {
        let mut re = 0.0;
        let mut im = 0.0;
        for (i, (&x, &w)) in frame.iter().zip(window.iter()).enumerate() {
            let theta = -2.0 * std::f64::consts::PI * (k * i) as f64 / n as f64;
            let v = x * w;
            re += v * theta.cos();
            im += v * theta.sin();
        }
        mags.push((re * re + im * im).sqrt());
    }
    mags
}

/// Periodic Hann, written from the cosine definition.
fn reference_hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
        .collect()
}

/// All frame magnitudes of a padded signal at the loss framing:
/// pad to at least one frame, T = 1 + floor((len - frame)/hop).
fn naive_mags(w: &Waveform<f64>, frame: usize, hop: usize) -> (Vec<Vec<f64>>, usize) {
    let mut x = w.samples.clone();
    if x.len() < frame {
        x.resize(frame, 0.0);
    }
    let t = 1 + (x.len() - frame) / hop;
    let window = reference_hann(frame);
    let mags = (0..t)
        .map(|ti| naive_frame_mags(&x[ti * hop..ti * hop + frame], &window))
        .collect();
    (mags, t)
}

/// One triangular mel filter response at frequency `f`, from the
/// 2595*log10(1 + f/700) warping with n_mels+2 equally spaced mel points.
fn mel_triangle(f: f64, m: usize, n_mels: usize, nyquist: f64) -> f64 {
    let to_mel = |hz: f64| 2595.0 * (1.0 + hz / 700.0).log10();
    let to_hz = |mel: f64| 700.0 * (10f64.powf(mel / 2595.0) - 1.0);
    let top = to_mel(nyquist);
    let hz_at = |i: usize| to_hz(top * i as f64 / (n_mels + 1) as f64);
    let (lo, center, hi) = (hz_at(m), hz_at(m + 1), hz_at(m + 2));
    if (f - center).abs() < 1e-12 {
        1.0
    } else if f > lo && f < center {
        (f - lo) / (center - lo)
    } else if f > center && f < hi {
        (hi - f) / (hi - center)
    } else {
        0.0
    }
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * f64::max(1.0, a.abs().max(b.abs()))
}

#[test]
fn stft_loss_matches_the_naive_dft_route() {
    let cfg = SpectralLossConfig::default();
    assert_eq!((cfg.frame_length, cfg.hop_length), (1024, 256));
    let a = synth::speech_like(41, 16_000, 0.5);
    let noise = synth::white_noise(42, 16_000, 0.5, 0.05);
    let b = Waveform::new(
        a.samples
            .iter()
            .zip(noise.samples.iter())
            .map(|(x, n)| x + n)
            .collect::<Vec<f64>>(),
        16_000,
    )
    .unwrap();

    let fast = stft_loss(&a, &b, &cfg).unwrap();

    let (ma, t) = naive_mags(&a, cfg.frame_length, cfg.hop_length);
    let (mb, _) = naive_mags(&b, cfg.frame_length, cfg.hop_length);
    let bins = cfg.frame_length / 2 + 1;
    let mut acc = 0.0;
    for ti in 0..t {
        for k in 0..bins {
            acc += (ma[ti][k] - mb[ti][k]).abs();
        }
    }
    let reference = acc / (t * bins) as f64;

    assert!(
        close(fast, reference, 1e-6),
        "stft_loss {fast} vs naive DFT {reference}"
    );
    assert!(fast > 0.0, "distinct signals must have positive loss");
}

#[test]
fn mel_loss_matches_the_naive_route() {
    let cfg = SpectralLossConfig::default();
    assert_eq!(cfg.n_mels, 100);
    let a = synth::speech_like(43, 16_000, 0.5);
    let b = synth::tone(440.0, 16_000, 0.5, 0.3);

    let fast = mel_loss(&a, &b, &cfg).unwrap();

    let (ma, t) = naive_mags(&a, cfg.frame_length, cfg.hop_length);
    let (mb, _) = naive_mags(&b, cfg.frame_length, cfg.hop_length);
    let bins = cfg.frame_length / 2 + 1;
    let nyquist = 8_000.0;
    let bin_hz = 16_000.0 / cfg.frame_length as f64;
    let mut acc = 0.0;
    for ti in 0..t {
        for m in 0..cfg.n_mels {
            let mut ea = 0.0;
            let mut eb = 0.0;
            for k in 0..bins {
                let w = mel_triangle(k as f64 * bin_hz, m, cfg.n_mels, nyquist);
                ea += w * ma[ti][k];
                eb += w * mb[ti][k];
            }
            acc += (ea - eb).abs();
        }
    }
    let reference = acc / (t * cfg.n_mels) as f64;

    assert!(
        close(fast, reference, 1e-6),
        "mel_loss {fast} vs naive route {reference}"
    );
}

#[test]
fn identical_signals_have_exactly_zero_loss() {
    let cfg = SpectralLossConfig::default();
    let a = synth::speech_like(44, 16_000, 0.5);
    assert_eq!(stft_loss(&a, &a, &cfg).unwrap(), 0.0);
    assert_eq!(mel_loss(&a, &a, &cfg).unwrap(), 0.0);
}

#[test]
fn single_bin_tone_puts_the_loss_where_the_math_says() {
    // A tone exactly on DFT bin 32 of a 1024 frame (500 Hz at 16 kHz),
    // compared against silence: stft loss = mean over bins of the Hann-
    // windowed tone magnitudes. The naive route must agree bin by bin.
    let cfg = SpectralLossConfig::default();
    let sr = 16_000;
    let freq = 32.0 * sr as f64 / cfg.frame_length as f64;
    let a = synth::tone(freq, sr, 0.25, 0.5);
    let b = synth::silence(sr, 0.25);
    let fast = stft_loss(&a, &b, &cfg).unwrap();
    let (ma, t) = naive_mags(&a, cfg.frame_length, cfg.hop_length);
    let bins = cfg.frame_length / 2 + 1;
    let reference: f64 =
        ma.iter().map(|f| f.iter().sum::<f64>()).sum::<f64>() / (t * bins) as f64;
    assert!(
        close(fast, reference, 1e-6),
        "tone-vs-silence {fast} vs {reference}"
    );
    // The windowed tone concentrates at bin 32 with peak N/4 * amplitude.
    let peak = ma[1][32];
    assert!(
        (peak - 0.5 * 1024.0 / 4.0).abs() < 1.0,
        "bin-32 Hann peak {peak}"
    );
}
