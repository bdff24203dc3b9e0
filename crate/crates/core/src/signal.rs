//! Signal frontend: waveforms, STFT analysis/synthesis, mel features, and
//! frame stacking.
//!
//! The magnitude+phase path is the codec's carrier: analysis and synthesis
//! both apply the square root of a periodic Hann window, so the overlap-added
//! product is Hann and the sum of squared shifted windows is exactly constant
//! at 50% overlap. Analysis-only paths (mel features, spectral losses) use a
//! plain periodic Hann window.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Analysis window shape. Only Hann-family windows are supported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    #[default]
    Hann,
}

/// Frame/hop geometry for short-time analysis.
///
/// `frame_length` must be even and divisible by `hop_length`. Perfect
/// reconstruction additionally requires 50% overlap (`hop * 2 == frame`),
/// which [`istft`] enforces; analysis-only uses may pick denser hops.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StftConfig {
    pub frame_length: usize,
    pub hop_length: usize,
    #[serde(default)]
    pub window: Window,
}

impl StftConfig {
    pub fn new(frame_length: usize, hop_length: usize) -> Result<Self> {
        let cfg = StftConfig {
            frame_length,
            hop_length,
            window: Window::Hann,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.frame_length == 0 || !self.frame_length.is_multiple_of(2) {
            return Err(Error::InvalidConfig(format!(
                "frame_length must be even and positive, got {}",
                self.frame_length
            )));
        }
        if self.hop_length == 0 || !self.frame_length.is_multiple_of(self.hop_length) {
            return Err(Error::InvalidConfig(format!(
                "hop_length {} must divide frame_length {}",
                self.hop_length, self.frame_length
            )));
        }
        Ok(())
    }

    /// Errors unless the geometry supports perfect reconstruction.
    pub fn validate_reconstruction(&self) -> Result<()> {
        self.validate()?;
        if self.hop_length * 2 != self.frame_length {
            return Err(Error::InvalidConfig(format!(
                "reconstruction requires 50% overlap: frame {} hop {}",
                self.frame_length, self.hop_length
            )));
        }
        Ok(())
    }

    /// Spectral bins per frame for a real input.
    pub fn bins(&self) -> usize {
        self.frame_length / 2 + 1
    }

    /// Nominal frames per second at `sample_rate`.
    pub fn fps(&self, sample_rate: u32) -> f64 {
        sample_rate as f64 / self.hop_length as f64
    }
}

/// Mono audio at a known sample rate. Samples are nominally in [-1, 1];
/// intermediate processing may exceed that, and clamping happens on
/// write-out and on decoder output.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform<S: Scalar> {
    pub samples: Vec<S>,
    pub sample_rate: u32,
}

impl<S: Scalar> Waveform<S> {
    pub fn new(samples: Vec<S>, sample_rate: u32) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyInput);
        }
        if sample_rate == 0 {
            return Err(Error::InvalidConfig("sample_rate must be positive".into()));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::InvalidConfig(
                "waveform contains non-finite samples".into(),
            ));
        }
        Ok(Waveform {
            samples,
            sample_rate,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn rms(&self) -> S {
        let n = S::of_usize(self.samples.len());
        (self.samples.iter().map(|s| *s * *s).sum::<S>() / n).sqrt()
    }

    /// Clamps every sample into [-1, 1] in place.
    pub fn clamp_unit(&mut self) {
        let one = S::one();
        for s in &mut self.samples {
            if *s > one {
                *s = one;
            } else if *s < -one {
                *s = -one;
            }
        }
    }
}

/// What a feature matrix carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    AcousticMagPhase,
    SemanticProxy,
    SemanticExternal,
    Mel,
}

/// Row-major T x D feature frames with their frame rate.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix<S: Scalar> {
    data: Vec<S>,
    t: usize,
    d: usize,
    pub fps: f64,
    pub kind: FeatureKind,
}

impl<S: Scalar> FeatureMatrix<S> {
    pub fn new(data: Vec<S>, t: usize, d: usize, fps: f64, kind: FeatureKind) -> Result<Self> {
        if t == 0 || d == 0 {
            return Err(Error::EmptyInput);
        }
        if data.len() != t * d {
            return Err(Error::ShapeMismatch(format!(
                "feature data has {} values, expected {} x {}",
                data.len(),
                t,
                d
            )));
        }
        Ok(FeatureMatrix {
            data,
            t,
            d,
            fps,
            kind,
        })
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn frame(&self, t: usize) -> &[S] {
        &self.data[t * self.d..(t + 1) * self.d]
    }

    pub fn frame_mut(&mut self, t: usize) -> &mut [S] {
        &mut self.data[t * self.d..(t + 1) * self.d]
    }

    pub fn frames(&self) -> impl Iterator<Item = &[S]> {
        self.data.chunks_exact(self.d)
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }
}

/// Magnitude and phase planes of a short-time transform, row-major T x bins.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram<S: Scalar> {
    pub mags: Vec<S>,
    pub phases: Vec<S>,
    pub t: usize,
    pub bins: usize,
    pub fps: f64,
    pub sample_rate: u32,
}

impl<S: Scalar> Spectrogram<S> {
    pub fn mag_frame(&self, t: usize) -> &[S] {
        &self.mags[t * self.bins..(t + 1) * self.bins]
    }

    pub fn phase_frame(&self, t: usize) -> &[S] {
        &self.phases[t * self.bins..(t + 1) * self.bins]
    }

    /// Concatenates magnitude and phase per frame into codec features
    /// (D = frame_length + 2).
    pub fn into_features(self) -> FeatureMatrix<S> {
        let d = 2 * self.bins;
        let mut data = Vec::with_capacity(self.t * d);
        for ti in 0..self.t {
            data.extend_from_slice(&self.mags[ti * self.bins..(ti + 1) * self.bins]);
            data.extend_from_slice(&self.phases[ti * self.bins..(ti + 1) * self.bins]);
        }
        FeatureMatrix::new(data, self.t, d, self.fps, FeatureKind::AcousticMagPhase)
            .expect("spectrogram planes are consistent")
    }

    /// Splits concatenated magnitude|phase features back into planes.
    pub fn from_features(f: &FeatureMatrix<S>, sample_rate: u32) -> Result<Self> {
        if !f.d().is_multiple_of(2) {
            return Err(Error::ShapeMismatch(format!(
                "magnitude|phase features need even D, got {}",
                f.d()
            )));
        }
        let bins = f.d() / 2;
        let mut mags = Vec::with_capacity(f.t() * bins);
        let mut phases = Vec::with_capacity(f.t() * bins);
        for frame in f.frames() {
            mags.extend_from_slice(&frame[..bins]);
            phases.extend_from_slice(&frame[bins..]);
        }
        Ok(Spectrogram {
            mags,
            phases,
            t: f.t(),
            bins,
            fps: f.fps,
            sample_rate,
        })
    }
}

/// Periodic Hann window of length `n`.
pub fn hann_window<S: Scalar>(n: usize) -> Vec<S> {
    let half = S::of_f64(0.5);
    (0..n)
        .map(|i| {
            let theta = S::of_f64(2.0) * S::PI() * S::of_usize(i) / S::of_usize(n);
            half * (S::one() - theta.cos())
        })
        .collect()
}

/// Square root of the periodic Hann window: sin(pi*n/N). Applied at both
/// analysis and synthesis so the product is Hann and the squared-window
/// overlap sum is exactly 1 at 50% overlap.
pub fn sqrt_hann_window<S: Scalar>(n: usize) -> Vec<S> {
    (0..n)
        .map(|i| (S::PI() * S::of_usize(i) / S::of_usize(n)).sin())
        .collect()
}

/// Analysis window used by the reconstruction path for `cfg`.
pub fn analysis_window<S: Scalar>(cfg: &StftConfig) -> Vec<S> {
    match cfg.window {
        Window::Hann => sqrt_hann_window(cfg.frame_length),
    }
}

fn frame_count(len: usize, frame: usize, hop: usize) -> Option<usize> {
    if len < frame {
        return None;
    }
    Some(1 + (len - frame) / hop)
}

/// Windowed magnitude frames with an arbitrary window; shared by the
/// mag+phase transform, mel features, and the spectral losses.
pub(crate) fn magnitude_frames<S: Scalar>(
    samples: &[S],
    frame: usize,
    hop: usize,
    window: &[S],
) -> Result<(Vec<S>, usize, usize)> {
    let t = frame_count(samples.len(), frame, hop).ok_or(Error::InputTooShort {
        needed: frame,
        got: samples.len(),
    })?;
    let bins = frame / 2 + 1;
    let mut planner = FftPlanner::<S>::new();
    let fft = planner.plan_fft_forward(frame);
    let mut buf = vec![Complex::new(S::zero(), S::zero()); frame];
    let mut mags = vec![S::zero(); t * bins];
    for ti in 0..t {
        let start = ti * hop;
        for i in 0..frame {
            buf[i] = Complex::new(samples[start + i] * window[i], S::zero());
        }
        fft.process(&mut buf);
        for (k, out) in mags[ti * bins..(ti + 1) * bins].iter_mut().enumerate() {
            let c = buf[k];
            *out = (c.re * c.re + c.im * c.im).sqrt();
        }
    }
    Ok((mags, t, bins))
}

/// Short-time transform to magnitude and phase planes.
///
/// T = 1 + floor((len - frame) / hop); inputs shorter than one frame are
/// rejected. Phases are normalized into (-pi, pi].
pub fn stft_magphase<S: Scalar>(w: &Waveform<S>, cfg: &StftConfig) -> Result<Spectrogram<S>> {
    cfg.validate()?;
    let frame = cfg.frame_length;
    let hop = cfg.hop_length;
    let t = frame_count(w.len(), frame, hop).ok_or(Error::InputTooShort {
        needed: frame,
        got: w.len(),
    })?;
    let bins = cfg.bins();
    let window = analysis_window::<S>(cfg);
    let mut planner = FftPlanner::<S>::new();
    let fft = planner.plan_fft_forward(frame);
    let mut buf = vec![Complex::new(S::zero(), S::zero()); frame];
    let mut mags = vec![S::zero(); t * bins];
    let mut phases = vec![S::zero(); t * bins];
    for ti in 0..t {
        let start = ti * hop;
        for i in 0..frame {
            buf[i] = Complex::new(w.samples[start + i] * window[i], S::zero());
        }
        fft.process(&mut buf);
        for k in 0..bins {
            let c = buf[k];
            mags[ti * bins + k] = (c.re * c.re + c.im * c.im).sqrt();
            let mut p = c.im.atan2(c.re);
            if p == -S::PI() {
                p = S::PI();
            }
            phases[ti * bins + k] = p;
        }
    }
    Ok(Spectrogram {
        mags,
        phases,
        t,
        bins,
        fps: cfg.fps(w.sample_rate),
        sample_rate: w.sample_rate,
    })
}

/// Inverse transform by windowed overlap-add with squared-window
/// normalization. Output length is (T-1)*hop + frame; edge samples inside
/// the first/last window ramp carry the usual taper error.
pub fn istft<S: Scalar>(spec: &Spectrogram<S>, cfg: &StftConfig) -> Result<Waveform<S>> {
    cfg.validate_reconstruction()?;
    if spec.t == 0 {
        return Err(Error::EmptyInput);
    }
    let frame = cfg.frame_length;
    let hop = cfg.hop_length;
    if spec.bins != cfg.bins() {
        return Err(Error::ShapeMismatch(format!(
            "spectrogram has {} bins, config expects {}",
            spec.bins,
            cfg.bins()
        )));
    }
    if spec.mags.len() != spec.t * spec.bins || spec.phases.len() != spec.t * spec.bins {
        return Err(Error::ShapeMismatch(
            "magnitude/phase planes disagree with T x bins".into(),
        ));
    }
    let window = analysis_window::<S>(cfg);
    let out_len = (spec.t - 1) * hop + frame;
    let mut num = vec![S::zero(); out_len];
    let mut den = vec![S::zero(); out_len];
    let mut planner = FftPlanner::<S>::new();
    let ifft = planner.plan_fft_inverse(frame);
    let mut buf = vec![Complex::new(S::zero(), S::zero()); frame];
    let scale = S::one() / S::of_usize(frame);
    for ti in 0..spec.t {
        for (k, slot) in buf.iter_mut().enumerate().take(spec.bins) {
            let m = spec.mags[ti * spec.bins + k];
            let p = spec.phases[ti * spec.bins + k];
            *slot = Complex::new(m * p.cos(), m * p.sin());
        }
        for k in spec.bins..frame {
            buf[k] = buf[frame - k].conj();
        }
        ifft.process(&mut buf);
        let start = ti * hop;
        for i in 0..frame {
            num[start + i] += buf[i].re * scale * window[i];
            den[start + i] += window[i] * window[i];
        }
    }
    let floor = S::of_f64(1e-12);
    let samples: Vec<S> = num
        .iter()
        .zip(den.iter())
        .map(|(&n, &d)| n / d.max(floor))
        .collect();
    Waveform::new(samples, spec.sample_rate)
}

/// Triangular mel filterbank, n_mels x n_bins row-major. HTK mel scale,
/// unit-peak triangles between successive mel points from 0 to Nyquist.
pub fn mel_filterbank<S: Scalar>(
    n_mels: usize,
    n_bins: usize,
    sample_rate: u32,
    frame_length: usize,
) -> Vec<S> {
    let hz_to_mel = |hz: f64| 2595.0 * (1.0 + hz / 700.0).log10();
    let mel_to_hz = |mel: f64| 700.0 * (10f64.powf(mel / 2595.0) - 1.0);
    let nyquist = sample_rate as f64 / 2.0;
    let mel_max = hz_to_mel(nyquist);
    let points: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(mel_max * i as f64 / (n_mels + 1) as f64))
        .collect();
    let bin_hz = sample_rate as f64 / frame_length as f64;
    let mut bank = vec![S::zero(); n_mels * n_bins];
    for m in 0..n_mels {
        let (lo, center, hi) = (points[m], points[m + 1], points[m + 2]);
        for k in 0..n_bins {
            let f = k as f64 * bin_hz;
            let w = if f > lo && f < center {
                (f - lo) / (center - lo)
            } else if (f - center).abs() < 1e-12 {
                1.0
            } else if f > center && f < hi {
                (hi - f) / (hi - center)
            } else {
                0.0
            };
            if w > 0.0 {
                bank[m * n_bins + k] = S::of_f64(w);
            }
        }
    }
    bank
}

/// Mel-filtered magnitude features with a plain Hann analysis window.
pub fn mel_features<S: Scalar>(
    w: &Waveform<S>,
    n_mels: usize,
    cfg: &StftConfig,
) -> Result<FeatureMatrix<S>> {
    cfg.validate()?;
    let bins = cfg.bins();
    if n_mels == 0 || n_mels > bins {
        return Err(Error::InvalidConfig(format!(
            "n_mels {} must be in 1..={} for frame_length {}",
            n_mels, bins, cfg.frame_length
        )));
    }
    let window = hann_window::<S>(cfg.frame_length);
    let (mags, t, _) = magnitude_frames(&w.samples, cfg.frame_length, cfg.hop_length, &window)?;
    let bank = mel_filterbank::<S>(n_mels, bins, w.sample_rate, cfg.frame_length);
    let mut data = vec![S::zero(); t * n_mels];
    for ti in 0..t {
        let mag = &mags[ti * bins..(ti + 1) * bins];
        for m in 0..n_mels {
            let row = &bank[m * bins..(m + 1) * bins];
            let mut acc = S::zero();
            for (w_k, x_k) in row.iter().zip(mag.iter()) {
                if *w_k != S::zero() {
                    acc += *w_k * *x_k;
                }
            }
            data[ti * n_mels + m] = acc;
        }
    }
    FeatureMatrix::new(data, t, n_mels, cfg.fps(w.sample_rate), FeatureKind::Mel)
}

/// Concatenates consecutive groups of `factor` frames: T' = ceil(T/factor),
/// D' = D*factor, zero-padded tail, fps divided by `factor`.
pub fn stack_frames<S: Scalar>(f: &FeatureMatrix<S>, factor: usize) -> Result<FeatureMatrix<S>> {
    if factor == 0 {
        return Err(Error::InvalidConfig("stack factor must be positive".into()));
    }
    let t_out = f.t().div_ceil(factor);
    let d_out = f.d() * factor;
    let mut data = vec![S::zero(); t_out * d_out];
    for ti in 0..f.t() {
        let group = ti / factor;
        let slot = ti % factor;
        let dst = group * d_out + slot * f.d();
        data[dst..dst + f.d()].copy_from_slice(f.frame(ti));
    }
    FeatureMatrix::new(data, t_out, d_out, f.fps / factor as f64, f.kind)
}

/// Exact inverse of [`stack_frames`] given the original frame count.
pub fn unstack_frames<S: Scalar>(
    f: &FeatureMatrix<S>,
    factor: usize,
    original_t: usize,
) -> Result<FeatureMatrix<S>> {
    if factor == 0 {
        return Err(Error::InvalidConfig("stack factor must be positive".into()));
    }
    if !f.d().is_multiple_of(factor) {
        return Err(Error::ShapeMismatch(format!(
            "stacked D {} is not divisible by factor {}",
            f.d(),
            factor
        )));
    }
    if original_t.div_ceil(factor) != f.t() || original_t == 0 {
        return Err(Error::ShapeMismatch(format!(
            "original_t {} does not stack into {} groups of {}",
            original_t,
            f.t(),
            factor
        )));
    }
    let d_out = f.d() / factor;
    let mut data = vec![S::zero(); original_t * d_out];
    for ti in 0..original_t {
        let group = ti / factor;
        let slot = ti % factor;
        data[ti * d_out..(ti + 1) * d_out]
            .copy_from_slice(&f.frame(group)[slot * d_out..(slot + 1) * d_out]);
    }
    FeatureMatrix::new(data, original_t, d_out, f.fps * factor as f64, f.kind)
}

/// Linear-phase FIR low-pass taps: Hamming-windowed sinc, normalized to
/// unity DC gain.
pub fn fir_lowpass_taps<S: Scalar>(n_taps: usize, cutoff_hz: f64, sample_rate: u32) -> Vec<S> {
    let fc = cutoff_hz / sample_rate as f64;
    let mid = (n_taps - 1) as f64 / 2.0;
    let mut taps: Vec<f64> = (0..n_taps)
        .map(|i| {
            let x = i as f64 - mid;
            let sinc = if x.abs() < 1e-12 {
                2.0 * fc
            } else {
                (2.0 * std::f64::consts::PI * fc * x).sin() / (std::f64::consts::PI * x)
            };
            let hamming =
                0.54 - 0.46 * (2.0 * std::f64::consts::PI * i as f64 / (n_taps - 1) as f64).cos();
            sinc * hamming
        })
        .collect();
    let sum: f64 = taps.iter().sum();
    for t in &mut taps {
        *t /= sum;
    }
    taps.into_iter().map(S::of_f64).collect()
}

/// Convolves with `taps` and compensates the group delay, returning exactly
/// `x.len()` samples.
pub fn convolve_delay_compensated<S: Scalar>(x: &[S], taps: &[S]) -> Vec<S> {
    let delay = (taps.len() - 1) / 2;
    let mut out = vec![S::zero(); x.len()];
    for (n, o) in out.iter_mut().enumerate() {
        let shifted = n + delay;
        let mut acc = S::zero();
        let k_lo = shifted.saturating_sub(x.len() - 1);
        let k_hi = taps.len().min(shifted + 1);
        for k in k_lo..k_hi {
            acc += taps[k] * x[shifted - k];
        }
        *o = acc;
    }
    out
}

/// Integer-factor decimation via an anti-alias FIR at 90% of the target
/// Nyquist. The sample rate must divide exactly.
pub fn decimate<S: Scalar>(w: &Waveform<S>, factor: u32) -> Result<Waveform<S>> {
    if factor == 0 || !w.sample_rate.is_multiple_of(factor) {
        return Err(Error::InvalidConfig(format!(
            "decimation factor {} must divide sample rate {}",
            factor, w.sample_rate
        )));
    }
    if factor == 1 {
        return Ok(w.clone());
    }
    let new_rate = w.sample_rate / factor;
    let cutoff = 0.9 * new_rate as f64 / 2.0;
    let taps = fir_lowpass_taps::<S>(256, cutoff, w.sample_rate);
    let filtered = convolve_delay_compensated(&w.samples, &taps);
    let samples: Vec<S> = filtered.into_iter().step_by(factor as usize).collect();
    Waveform::new(samples, new_rate)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(freq: f64, sr: u32, secs: f64) -> Waveform<f64> {
        let n = (sr as f64 * secs) as usize;
        let samples = (0..n)
            .map(|i| (2.0 * std::f64::consts::PI * freq * i as f64 / sr as f64).sin() * 0.5)
            .collect();
        Waveform::new(samples, sr).unwrap()
    }

    #[test]
    fn full_band_geometry_gives_50_fps() {
        let cfg = StftConfig::new(1920, 960).unwrap();
        assert_eq!(cfg.fps(48_000), 50.0);
        assert_eq!(cfg.bins(), 961);
    }

    #[test]
    fn analysis_only_geometry_is_accepted_but_not_reconstructible() {
        let cfg = StftConfig::new(1024, 256).unwrap();
        assert!(cfg.validate().is_ok());
        assert!(matches!(
            cfg.validate_reconstruction(),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn squared_window_overlap_is_constant_at_half_hop() {
        let cfg = StftConfig::new(1920, 960).unwrap();
        let win = analysis_window::<f64>(&cfg);
        // Accumulate the squared window at every shift covering an interior
        // span, then check deviation from 1.
        let frames = 8;
        let len = (frames - 1) * cfg.hop_length + cfg.frame_length;
        let mut acc = vec![0.0f64; len];
        for f in 0..frames {
            for i in 0..cfg.frame_length {
                acc[f * cfg.hop_length + i] += win[i] * win[i];
            }
        }
        for &v in &acc[cfg.frame_length..len - cfg.frame_length] {
            assert!((v - 1.0).abs() < 1e-9, "overlap sum {v} drifts from 1");
        }
    }

    #[test]
    fn short_input_is_rejected() {
        let w = Waveform::new(vec![0.1; 100], 16_000).unwrap();
        let cfg = StftConfig::new(256, 128).unwrap();
        assert!(matches!(
            stft_magphase(&w, &cfg),
            Err(Error::InputTooShort { needed: 256, .. })
        ));
    }

    #[test]
    fn zero_waveform_gives_zero_magnitudes_and_zero_reconstruction() {
        let w = Waveform::new(vec![0.0f64; 4096], 16_000).unwrap();
        let cfg = StftConfig::new(512, 256).unwrap();
        let spec = stft_magphase(&w, &cfg).unwrap();
        assert!(spec.mags.iter().all(|&m| m == 0.0));
        let back = istft(&spec, &cfg).unwrap();
        assert!(back.samples.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn phases_stay_in_half_open_pi_interval() {
        let w = tone(440.0, 16_000, 0.25);
        let cfg = StftConfig::new(512, 256).unwrap();
        let spec = stft_magphase(&w, &cfg).unwrap();
        assert!(spec
            .phases
            .iter()
            .all(|&p| p > -std::f64::consts::PI && p <= std::f64::consts::PI));
    }

    #[test]
    fn round_trip_interior_is_transparent() {
        let w = tone(523.0, 16_000, 0.5);
        let cfg = StftConfig::new(512, 256).unwrap();
        let spec = stft_magphase(&w, &cfg).unwrap();
        let back = istft(&spec, &cfg).unwrap();
        let frame = cfg.frame_length;
        let interior = frame..(back.len() - frame);
        let mut err = 0.0;
        let mut ref_pow = 0.0;
        for i in interior {
            let d = back.samples[i] - w.samples[i];
            err += d * d;
            ref_pow += w.samples[i] * w.samples[i];
        }
        assert!((err / ref_pow).sqrt() < 1e-6);
    }

    #[test]
    fn istft_rejects_wrong_bin_count() {
        let w = tone(440.0, 16_000, 0.25);
        let cfg = StftConfig::new(512, 256).unwrap();
        let spec = stft_magphase(&w, &cfg).unwrap();
        let other = StftConfig::new(256, 128).unwrap();
        assert!(matches!(istft(&spec, &other), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn mel_rejects_more_filters_than_bins() {
        let w = tone(440.0, 16_000, 0.25);
        let cfg = StftConfig::new(256, 128).unwrap();
        assert!(matches!(
            mel_features(&w, 200, &cfg),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn metric_geometry_mel_count_is_legal() {
        let w = tone(440.0, 16_000, 0.25);
        let cfg = StftConfig::new(1024, 256).unwrap();
        let mel = mel_features(&w, 100, &cfg).unwrap();
        assert_eq!(mel.d(), 100);
        assert!(mel.data().iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn stacking_halves_rate_by_factor_and_round_trips() {
        let t = 10;
        let d = 3;
        let data: Vec<f64> = (0..t * d).map(|i| i as f64).collect();
        let f = FeatureMatrix::new(data, t, d, 50.0, FeatureKind::Mel).unwrap();
        let stacked = stack_frames(&f, 8).unwrap();
        assert_eq!(stacked.t(), 2);
        assert_eq!(stacked.d(), 24);
        assert_eq!(stacked.fps, 6.25);
        // Tail of the last group is zero-padded.
        assert!(stacked.frame(1)[2 * d..].iter().all(|&x| x == 0.0));
        let back = unstack_frames(&stacked, 8, t).unwrap();
        assert_eq!(back, f);
    }

    #[test]
    fn stack_factor_zero_is_invalid() {
        let f = FeatureMatrix::new(vec![0.0f64; 6], 2, 3, 50.0, FeatureKind::Mel).unwrap();
        assert!(matches!(
            stack_frames(&f, 0),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn decimation_keeps_passband_tone() {
        let w = tone(1000.0, 48_000, 0.5);
        let d = decimate(&w, 3).unwrap();
        assert_eq!(d.sample_rate, 16_000);
        let ratio = d.rms() / w.rms();
        assert!((ratio - 1.0).abs() < 0.05, "rms ratio {ratio}");
    }

    #[test]
    fn decimation_needs_exact_divisor() {
        let w = tone(1000.0, 48_000, 0.1);
        assert!(matches!(decimate(&w, 7), Err(Error::InvalidConfig(_))));
    }
}
