//! Seeded stochastic degradation chain for building paired clean/degraded
//! corpora.
//!
//! Six distortion families are applied in a fixed order, each with an
//! independent probability and uniform parameter ranges. Every stochastic
//! component records its sub-seed in the chain log, so a logged run can be
//! replayed bit-identically without the original master seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::signal::{convolve_delay_compensated, fir_lowpass_taps, Waveform};
use crate::synth;

/// Requested SNR/SIR at or above this is treated as "no degradation".
pub const SNR_NOOP_DB: f64 = 80.0;

/// Inclusive uniform range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Range2 {
    pub lo: f64,
    pub hi: f64,
}

impl Range2 {
    pub fn new(lo: f64, hi: f64) -> Self {
        Range2 { lo, hi }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        if self.lo == self.hi {
            self.lo
        } else {
            rng.random_range(self.lo..=self.hi)
        }
    }

    fn validate(&self, name: &str) -> Result<()> {
        if !self.lo.is_finite() || !self.hi.is_finite() || self.lo > self.hi {
            return Err(Error::InvalidConfig(format!(
                "range {name} = [{}, {}] is empty or non-finite",
                self.lo, self.hi
            )));
        }
        Ok(())
    }
}

/// Parameter ranges for one distortion family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DistortionParams {
    AdditiveNoise { snr_db: Range2 },
    Reverb { t60_secs: Range2 },
    Clipping { q_lo: Range2, q_hi: Range2 },
    Bandwidth { cutoffs_hz: Vec<f64> },
    PacketLoss { rate: Range2, packet_ms: f64 },
    Interferer { sir_db: Range2 },
}

impl DistortionParams {
    pub fn name(&self) -> &'static str {
        match self {
            DistortionParams::AdditiveNoise { .. } => "additive_noise",
            DistortionParams::Reverb { .. } => "reverb",
            DistortionParams::Clipping { .. } => "clipping",
            DistortionParams::Bandwidth { .. } => "bandwidth",
            DistortionParams::PacketLoss { .. } => "packet_loss",
            DistortionParams::Interferer { .. } => "interferer",
        }
    }
}

/// One chain slot: a distortion family and its application probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistortionSpec {
    pub probability: f64,
    #[serde(flatten)]
    pub params: DistortionParams,
}

/// Task presets that override the default chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TaskPreset {
    /// Full restoration chain with the default probabilities.
    #[default]
    Standard,
    /// Target-speaker extraction: interference is certain, SIR in [-5, 5].
    Tse,
    /// Language-queried separation: mixing only, SIR in [-5, 20].
    Lass,
}

/// The ordered chain plus its master seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub specs: Vec<DistortionSpec>,
    pub seed: u64,
}

impl ChainConfig {
    /// Default restoration chain: noise 0.5, reverb 0.4, clipping 0.3,
    /// bandwidth 0.3, packet loss 0.3, interfering speaker 0.2.
    pub fn standard(seed: u64) -> Self {
        ChainConfig {
            specs: vec![
                DistortionSpec {
                    probability: 0.5,
                    params: DistortionParams::AdditiveNoise {
                        snr_db: Range2::new(-15.0, 20.0),
                    },
                },
                DistortionSpec {
                    probability: 0.4,
                    params: DistortionParams::Reverb {
                        t60_secs: Range2::new(0.2, 0.8),
                    },
                },
                DistortionSpec {
                    probability: 0.3,
                    params: DistortionParams::Clipping {
                        q_lo: Range2::new(0.0, 0.1),
                        q_hi: Range2::new(0.9, 1.0),
                    },
                },
                DistortionSpec {
                    probability: 0.3,
                    params: DistortionParams::Bandwidth {
                        cutoffs_hz: vec![2000.0, 4000.0],
                    },
                },
                DistortionSpec {
                    probability: 0.3,
                    params: DistortionParams::PacketLoss {
                        rate: Range2::new(0.05, 0.25),
                        packet_ms: 20.0,
                    },
                },
                DistortionSpec {
                    probability: 0.2,
                    params: DistortionParams::Interferer {
                        sir_db: Range2::new(15.0, 25.0),
                    },
                },
            ],
            seed,
        }
    }

    /// Chain for a task preset.
    pub fn for_task(task: TaskPreset, seed: u64) -> Self {
        match task {
            TaskPreset::Standard => Self::standard(seed),
            TaskPreset::Tse => {
                let mut cfg = Self::standard(seed);
                for spec in &mut cfg.specs {
                    if let DistortionParams::Interferer { sir_db } = &mut spec.params {
                        spec.probability = 1.0;
                        *sir_db = Range2::new(-5.0, 5.0);
                    }
                }
                cfg
            }
            TaskPreset::Lass => ChainConfig {
                specs: vec![DistortionSpec {
                    probability: 1.0,
                    params: DistortionParams::Interferer {
                        sir_db: Range2::new(-5.0, 20.0),
                    },
                }],
                seed,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        for spec in &self.specs {
            if !(0.0..=1.0).contains(&spec.probability) {
                return Err(Error::InvalidConfig(format!(
                    "probability {} outside [0, 1]",
                    spec.probability
                )));
            }
            match &spec.params {
                DistortionParams::AdditiveNoise { snr_db } => snr_db.validate("snr_db")?,
                DistortionParams::Reverb { t60_secs } => {
                    t60_secs.validate("t60_secs")?;
                    if t60_secs.lo <= 0.0 {
                        return Err(Error::InvalidConfig("t60 must be positive".into()));
                    }
                }
                DistortionParams::Clipping { q_lo, q_hi } => {
                    q_lo.validate("q_lo")?;
                    q_hi.validate("q_hi")?;
                }
                DistortionParams::Bandwidth { cutoffs_hz } => {
                    if cutoffs_hz.is_empty() {
                        return Err(Error::InvalidConfig("no bandwidth cutoffs".into()));
                    }
                }
                DistortionParams::PacketLoss { rate, packet_ms } => {
                    rate.validate("rate")?;
                    if !(0.0..1.0).contains(&rate.lo) || !(0.0..1.0).contains(&rate.hi) {
                        return Err(Error::InvalidConfig("loss rate outside [0, 1)".into()));
                    }
                    if *packet_ms <= 0.0 {
                        return Err(Error::InvalidConfig("packet_ms must be positive".into()));
                    }
                }
                DistortionParams::Interferer { sir_db } => sir_db.validate("sir_db")?,
            }
        }
        Ok(())
    }
}

/// Sources for noise, impulse responses, and interfering speech. With
/// `synthetic_fallback` the pool synthesizes assets from sub-seeds instead
/// of failing when a list is empty.
#[derive(Debug, Clone)]
pub struct AssetPool<S: Scalar> {
    pub noise: Vec<Waveform<S>>,
    pub rirs: Vec<Vec<S>>,
    pub interferers: Vec<Waveform<S>>,
    pub synthetic_fallback: bool,
}

impl<S: Scalar> AssetPool<S> {
    /// Pool that synthesizes everything.
    pub fn synthetic() -> Self {
        AssetPool {
            noise: Vec::new(),
            rirs: Vec::new(),
            interferers: Vec::new(),
            synthetic_fallback: true,
        }
    }

    fn draw_noise(&self, seed: u64, len: usize, sample_rate: u32) -> Result<Waveform<S>> {
        if !self.noise.is_empty() {
            return Ok(pick_and_fit(&self.noise, seed, len));
        }
        if !self.synthetic_fallback {
            return Err(Error::AssetMissing(
                "noise pool is empty and synthesis is disabled".into(),
            ));
        }
        let secs = len as f64 / sample_rate as f64;
        let w = synth::white_noise(seed, sample_rate, secs, 0.5);
        Ok(convert_waveform(&w))
    }

    fn draw_interferer(&self, seed: u64, len: usize, sample_rate: u32) -> Result<Waveform<S>> {
        if !self.interferers.is_empty() {
            return Ok(pick_and_fit(&self.interferers, seed, len));
        }
        if !self.synthetic_fallback {
            return Err(Error::AssetMissing(
                "interferer pool is empty and synthesis is disabled".into(),
            ));
        }
        let secs = len as f64 / sample_rate as f64;
        let w = synth::speech_like(seed, sample_rate, secs);
        Ok(convert_waveform(&w))
    }

    fn draw_rir(&self, seed: u64, t60_secs: f64, sample_rate: u32) -> Result<Vec<S>> {
        if !self.rirs.is_empty() {
            let idx = (seed % self.rirs.len() as u64) as usize;
            return Ok(self.rirs[idx].clone());
        }
        if !self.synthetic_fallback {
            return Err(Error::AssetMissing(
                "impulse-response pool is empty and synthesis is disabled".into(),
            ));
        }
        Ok(synthesize_rir(seed, t60_secs, sample_rate))
    }
}

fn convert_waveform<S: Scalar>(w: &Waveform<f64>) -> Waveform<S> {
    Waveform {
        samples: w.samples.iter().map(|&v| S::of_f64(v)).collect(),
        sample_rate: w.sample_rate,
    }
}

/// Picks an asset by seed and cuts or tiles it to `len` samples, with a
/// seed-derived start offset when the asset is longer.
fn pick_and_fit<S: Scalar>(pool: &[Waveform<S>], seed: u64, len: usize) -> Waveform<S> {
    let idx = (seed % pool.len() as u64) as usize;
    let src = &pool[idx];
    let mut samples = Vec::with_capacity(len);
    if src.len() >= len {
        let slack = src.len() - len;
        let start = if slack == 0 {
            0
        } else {
            ((seed >> 32) % (slack as u64 + 1)) as usize
        };
        samples.extend_from_slice(&src.samples[start..start + len]);
    } else {
        while samples.len() < len {
            let take = (len - samples.len()).min(src.len());
            samples.extend_from_slice(&src.samples[..take]);
        }
    }
    Waveform {
        samples,
        sample_rate: src.sample_rate,
    }
}

/// Exponentially decaying seeded noise with the requested T60; unit energy.
pub fn synthesize_rir<S: Scalar>(seed: u64, t60_secs: f64, sample_rate: u32) -> Vec<S> {
    let len = ((t60_secs * sample_rate as f64).ceil() as usize).max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // 60 dB of decay over t60: envelope exp(-ln(1000) * t / t60).
    let decay = (1000.0f64).ln() / (t60_secs * sample_rate as f64);
    let mut h: Vec<f64> = (0..len)
        .map(|n| (rng.random::<f64>() * 2.0 - 1.0) * (-decay * n as f64).exp())
        .collect();
    h[0] = 1.0;
    let energy: f64 = h.iter().map(|v| v * v).sum();
    let scale = 1.0 / energy.sqrt();
    h.iter().map(|&v| S::of_f64(v * scale)).collect()
}

fn check_nonsilent<S: Scalar>(w: &Waveform<S>, role: &str) -> Result<()> {
    if w.samples.iter().all(|s| *s == S::zero()) {
        return Err(Error::SilentInput(format!("{role} signal is all zero")));
    }
    Ok(())
}

/// Tiles `noise` to the clean signal's length and mixes it at the requested
/// SNR: gain = (rms(w) / rms(noise)) * 10^(-snr/20), with RMS measured on
/// the mixed region. Requests at or above [`SNR_NOOP_DB`] return the input
/// unchanged.
pub fn add_noise<S: Scalar>(
    w: &Waveform<S>,
    noise: &Waveform<S>,
    snr_db: f64,
) -> Result<Waveform<S>> {
    check_nonsilent(w, "clean")?;
    check_nonsilent(noise, "noise")?;
    if snr_db >= SNR_NOOP_DB {
        return Ok(w.clone());
    }
    let len = w.len();
    let mut tiled = Vec::with_capacity(len);
    while tiled.len() < len {
        let take = (len - tiled.len()).min(noise.len());
        tiled.extend_from_slice(&noise.samples[..take]);
    }
    let rms = |xs: &[S]| {
        (xs.iter().map(|x| x.into_f64().powi(2)).sum::<f64>() / xs.len() as f64).sqrt()
    };
    let noise_rms = rms(&tiled);
    if noise_rms == 0.0 {
        return Err(Error::SilentInput(
            "noise is silent over the mixed region".into(),
        ));
    }
    let g = S::of_f64(rms(&w.samples) / noise_rms * 10f64.powf(-snr_db / 20.0));
    let samples = w
        .samples
        .iter()
        .zip(tiled.iter())
        .map(|(c, n)| *c + g * *n)
        .collect();
    Ok(Waveform {
        samples,
        sample_rate: w.sample_rate,
    })
}

/// Mixes an interfering signal at the requested SIR; identical mechanics to
/// [`add_noise`] with the interferer in the noise role.
pub fn mix_interferer<S: Scalar>(
    w: &Waveform<S>,
    interferer: &Waveform<S>,
    sir_db: f64,
) -> Result<Waveform<S>> {
    add_noise(w, interferer, sir_db)
}

/// Clamps samples to the empirical [q_lo, q_hi] quantiles of the signal.
/// Degenerate quantiles (equal values) leave the signal unchanged.
pub fn clip_quantile<S: Scalar>(w: &Waveform<S>, q_lo: f64, q_hi: f64) -> Result<Waveform<S>> {
    if !(0.0..=1.0).contains(&q_lo) || !(0.0..=1.0).contains(&q_hi) || q_lo >= q_hi {
        return Err(Error::InvalidConfig(format!(
            "quantiles must satisfy 0 <= lo < hi <= 1, got {q_lo}, {q_hi}"
        )));
    }
    let mut sorted = w.samples.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let pick = |q: f64| {
        let idx = (q * (sorted.len() - 1) as f64).round() as usize;
        sorted[idx.min(sorted.len() - 1)]
    };
    let lo = pick(q_lo);
    let hi = pick(q_hi);
    if lo >= hi {
        log::warn!("degenerate clipping quantiles ({q_lo}, {q_hi}); leaving signal unchanged");
        return Ok(w.clone());
    }
    let samples = w
        .samples
        .iter()
        .map(|s| {
            if *s < lo {
                lo
            } else if *s > hi {
                hi
            } else {
                *s
            }
        })
        .collect();
    Ok(Waveform {
        samples,
        sample_rate: w.sample_rate,
    })
}

/// Order-255 linear-phase low-pass (Hamming-windowed sinc), delay
/// compensated so the output stays aligned with the input.
pub fn bandlimit<S: Scalar>(w: &Waveform<S>, cutoff_hz: f64) -> Result<Waveform<S>> {
    let nyquist = w.sample_rate as f64 / 2.0;
    if cutoff_hz <= 0.0 || cutoff_hz >= nyquist {
        return Err(Error::InvalidConfig(format!(
            "cutoff {cutoff_hz} Hz outside (0, {nyquist})"
        )));
    }
    let taps = fir_lowpass_taps::<S>(256, cutoff_hz, w.sample_rate);
    let samples = convolve_delay_compensated(&w.samples, &taps);
    Ok(Waveform {
        samples,
        sample_rate: w.sample_rate,
    })
}

/// Zeroes packets of `packet_ms` milliseconds independently with the given
/// probability, using a dedicated sub-seed.
pub fn packet_loss<S: Scalar>(
    w: &Waveform<S>,
    rate: f64,
    packet_ms: f64,
    seed: u64,
) -> Result<Waveform<S>> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::InvalidConfig(format!(
            "loss rate {rate} outside [0, 1)"
        )));
    }
    if packet_ms <= 0.0 {
        return Err(Error::InvalidConfig(format!(
            "packet_ms {packet_ms} must be positive"
        )));
    }
    if rate == 0.0 {
        return Ok(w.clone());
    }
    let packet = ((w.sample_rate as f64 * packet_ms / 1000.0).round() as usize).max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = w.samples.clone();
    for chunk in samples.chunks_mut(packet) {
        if rng.random::<f64>() < rate {
            chunk.fill(S::zero());
        }
    }
    Ok(Waveform {
        samples,
        sample_rate: w.sample_rate,
    })
}

/// Full convolution with an impulse response, truncated to the input
/// length. Uses an FFT for long responses.
pub fn reverb<S: Scalar>(w: &Waveform<S>, rir: &[S]) -> Result<Waveform<S>> {
    if rir.is_empty() {
        return Err(Error::InvalidConfig("empty impulse response".into()));
    }
    let n = w.len();
    let samples = if rir.len() <= 64 {
        let mut out = vec![S::zero(); n];
        for (i, o) in out.iter_mut().enumerate() {
            let mut acc = S::zero();
            for (j, h) in rir.iter().enumerate() {
                if j > i {
                    break;
                }
                acc += *h * w.samples[i - j];
            }
            *o = acc;
        }
        out
    } else {
        fft_convolve_trunc(&w.samples, rir, n)
    };
    Ok(Waveform {
        samples,
        sample_rate: w.sample_rate,
    })
}

/// FFT-based linear convolution truncated to `out_len` samples.
fn fft_convolve_trunc<S: Scalar>(x: &[S], h: &[S], out_len: usize) -> Vec<S> {
    use rustfft::num_complex::Complex;
    use rustfft::FftPlanner;
    let full = x.len() + h.len() - 1;
    let size = full.next_power_of_two();
    let mut planner = FftPlanner::<S>::new();
    let fft = planner.plan_fft_forward(size);
    let ifft = planner.plan_fft_inverse(size);
    let mut fx: Vec<Complex<S>> = x
        .iter()
        .map(|&v| Complex::new(v, S::zero()))
        .chain(std::iter::repeat(Complex::new(S::zero(), S::zero())))
        .take(size)
        .collect();
    let mut fh: Vec<Complex<S>> = h
        .iter()
        .map(|&v| Complex::new(v, S::zero()))
        .chain(std::iter::repeat(Complex::new(S::zero(), S::zero())))
        .take(size)
        .collect();
    fft.process(&mut fx);
    fft.process(&mut fh);
    for (a, b) in fx.iter_mut().zip(fh.iter()) {
        *a *= *b;
    }
    ifft.process(&mut fx);
    let scale = S::one() / S::of_usize(size);
    fx.iter().take(out_len).map(|c| c.re * scale).collect()
}

/// One applied distortion with every sampled parameter and sub-seed needed
/// to repeat it exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum AppliedOp {
    AdditiveNoise { snr_db: f64, noise_seed: u64 },
    Reverb { t60_secs: f64, rir_seed: u64 },
    Clipping { q_lo: f64, q_hi: f64 },
    Bandwidth { cutoff_hz: f64 },
    PacketLoss { rate: f64, packet_ms: f64, drop_seed: u64 },
    Interferer { sir_db: f64, interferer_seed: u64 },
}

/// Record of one chain run; applying `ops` in order to the same clean input
/// reproduces the degraded output bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ChainLog {
    pub seed: u64,
    pub ops: Vec<AppliedOp>,
}

fn apply_op<S: Scalar>(
    w: &Waveform<S>,
    op: &AppliedOp,
    assets: &AssetPool<S>,
) -> Result<Waveform<S>> {
    match op {
        AppliedOp::AdditiveNoise { snr_db, noise_seed } => {
            let noise = assets.draw_noise(*noise_seed, w.len(), w.sample_rate)?;
            add_noise(w, &noise, *snr_db)
        }
        AppliedOp::Reverb { t60_secs, rir_seed } => {
            let rir = assets.draw_rir(*rir_seed, *t60_secs, w.sample_rate)?;
            reverb(w, &rir)
        }
        AppliedOp::Clipping { q_lo, q_hi } => clip_quantile(w, *q_lo, *q_hi),
        AppliedOp::Bandwidth { cutoff_hz } => bandlimit(w, *cutoff_hz),
        AppliedOp::PacketLoss {
            rate,
            packet_ms,
            drop_seed,
        } => packet_loss(w, *rate, *packet_ms, *drop_seed),
        AppliedOp::Interferer {
            sir_db,
            interferer_seed,
        } => {
            let interferer = assets.draw_interferer(*interferer_seed, w.len(), w.sample_rate)?;
            mix_interferer(w, &interferer, *sir_db)
        }
    }
}

/// Runs the chain: per slot, one Bernoulli draw against its probability,
/// then parameter sampling and application. Deterministic in `cfg.seed`.
pub fn run_chain<S: Scalar>(
    w: &Waveform<S>,
    cfg: &ChainConfig,
    assets: &AssetPool<S>,
) -> Result<(Waveform<S>, ChainLog)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut out = w.clone();
    let mut ops = Vec::new();
    for spec in &cfg.specs {
        let roll: f64 = rng.random();
        if roll >= spec.probability {
            continue;
        }
        let op = match &spec.params {
            DistortionParams::AdditiveNoise { snr_db } => AppliedOp::AdditiveNoise {
                snr_db: snr_db.sample(&mut rng),
                noise_seed: rng.random(),
            },
            DistortionParams::Reverb { t60_secs } => AppliedOp::Reverb {
                t60_secs: t60_secs.sample(&mut rng),
                rir_seed: rng.random(),
            },
            DistortionParams::Clipping { q_lo, q_hi } => AppliedOp::Clipping {
                q_lo: q_lo.sample(&mut rng),
                q_hi: q_hi.sample(&mut rng),
            },
            DistortionParams::Bandwidth { cutoffs_hz } => AppliedOp::Bandwidth {
                cutoff_hz: cutoffs_hz[rng.random_range(0..cutoffs_hz.len())],
            },
            DistortionParams::PacketLoss { rate, packet_ms } => AppliedOp::PacketLoss {
                rate: rate.sample(&mut rng),
                packet_ms: *packet_ms,
                drop_seed: rng.random(),
            },
            DistortionParams::Interferer { sir_db } => AppliedOp::Interferer {
                sir_db: sir_db.sample(&mut rng),
                interferer_seed: rng.random(),
            },
        };
        out = apply_op(&out, &op, assets)?;
        ops.push(op);
    }
    Ok((
        out,
        ChainLog {
            seed: cfg.seed,
            ops,
        },
    ))
}

/// Re-applies a logged chain to the same clean input; bit-identical to the
/// run that produced the log.
pub fn replay_chain<S: Scalar>(
    w: &Waveform<S>,
    log: &ChainLog,
    assets: &AssetPool<S>,
) -> Result<Waveform<S>> {
    let mut out = w.clone();
    for op in &log.ops {
        out = apply_op(&out, op, assets)?;
    }
    Ok(out)
}
