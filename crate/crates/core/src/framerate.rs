//! Similarity-driven dynamic frame aggregation.
//!
//! A greedy scan merges adjacent frames whose cosine similarity exceeds the
//! threshold, capped at `d_max` frames per segment. Segments aggregate by
//! softmax pooling around the segment mean, and durations ride inside the
//! first-layer code indices: c' = (d - 1) * K + c.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::signal::FeatureMatrix;

/// Aggregation policy: merge threshold, maximum segment length, and the
/// half-width of the de-aggregation smoothing pass.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AggregationConfig {
    pub threshold: f64,
    pub d_max: usize,
    /// Moving-average half-width applied after repetition on de-aggregation.
    /// 0 keeps pure repetition, which is lossless for all-1 partitions.
    #[serde(default)]
    pub window: usize,
}

impl Default for AggregationConfig {
    fn default() -> Self {
        AggregationConfig {
            threshold: 0.6,
            d_max: 8,
            window: 0,
        }
    }
}

impl AggregationConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.threshold.is_finite() {
            return Err(Error::InvalidConfig("threshold must be finite".into()));
        }
        if self.d_max == 0 || self.d_max > u8::MAX as usize {
            return Err(Error::InvalidConfig(format!(
                "d_max must be in 1..=255, got {}",
                self.d_max
            )));
        }
        Ok(())
    }
}

/// Segment durations of one utterance; every value is in 1..=d_max and the
/// sum equals the pre-aggregation frame count.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentPartition {
    durations: Vec<u32>,
}

impl SegmentPartition {
    pub fn new(durations: Vec<u32>, d_max: usize) -> Result<Self> {
        if durations.is_empty() {
            return Err(Error::EmptyInput);
        }
        if let Some(&bad) = durations.iter().find(|&&d| d == 0 || d as usize > d_max) {
            return Err(Error::InvalidConfig(format!(
                "segment duration {bad} outside 1..={d_max}"
            )));
        }
        Ok(SegmentPartition { durations })
    }

    pub fn durations(&self) -> &[u32] {
        &self.durations
    }

    pub fn len(&self) -> usize {
        self.durations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.durations.is_empty()
    }

    /// Total frames covered; equals the original T.
    pub fn total_frames(&self) -> usize {
        self.durations.iter().map(|&d| d as usize).sum()
    }
}

/// Effective frames per second after aggregation: segments divided by the
/// original duration. Bounded by [fps / d_max, fps].
pub fn effective_fps(partition: &SegmentPartition, fps: f64) -> f64 {
    fps * partition.len() as f64 / partition.total_frames() as f64
}

fn cosine<S: Scalar>(a: &[S], b: &[S]) -> f64 {
    let mut dot = S::zero();
    let mut na = S::zero();
    let mut nb = S::zero();
    for (x, y) in a.iter().zip(b.iter()) {
        dot += *x * *y;
        na += *x * *x;
        nb += *y * *y;
    }
    if na == S::zero() || nb == S::zero() {
        return 0.0;
    }
    (dot / (na.sqrt() * nb.sqrt())).into_f64()
}

/// Greedy left-to-right segmentation: a frame joins the current segment iff
/// its cosine similarity to the previous frame strictly exceeds the
/// threshold and the segment is still shorter than d_max. Zero-norm frames
/// have similarity 0 to everything.
pub fn segment_by_similarity<S: Scalar>(
    f: &FeatureMatrix<S>,
    cfg: &AggregationConfig,
) -> Result<SegmentPartition> {
    cfg.validate()?;
    let mut durations = Vec::new();
    let mut current = 1u32;
    for t in 1..f.t() {
        let sim = cosine(f.frame(t - 1), f.frame(t));
        if sim > cfg.threshold && (current as usize) < cfg.d_max {
            current += 1;
        } else {
            durations.push(current);
            current = 1;
        }
    }
    durations.push(current);
    SegmentPartition::new(durations, cfg.d_max)
}

/// Pools each segment into one frame: weights are the softmax of each
/// frame's dot product with the segment mean. Single-frame segments pass
/// through unchanged.
pub fn aggregate<S: Scalar>(
    f: &FeatureMatrix<S>,
    partition: &SegmentPartition,
) -> Result<FeatureMatrix<S>> {
    if partition.total_frames() != f.t() {
        return Err(Error::ShapeMismatch(format!(
            "partition covers {} frames, features have {}",
            partition.total_frames(),
            f.t()
        )));
    }
    let d = f.d();
    let mut data = Vec::with_capacity(partition.len() * d);
    let mut start = 0usize;
    for &dur in partition.durations() {
        let dur = dur as usize;
        if dur == 1 {
            data.extend_from_slice(f.frame(start));
        } else {
            let mut mean = vec![S::zero(); d];
            for t in start..start + dur {
                for (m, x) in mean.iter_mut().zip(f.frame(t).iter()) {
                    *m += *x;
                }
            }
            let inv = S::one() / S::of_usize(dur);
            for m in &mut mean {
                *m *= inv;
            }
            let scores: Vec<S> = (start..start + dur)
                .map(|t| {
                    let mut dot = S::zero();
                    for (x, m) in f.frame(t).iter().zip(mean.iter()) {
                        dot += *x * *m;
                    }
                    dot
                })
                .collect();
            let max = scores
                .iter()
                .cloned()
                .fold(S::neg_infinity(), |a, b| if b > a { b } else { a });
            let exps: Vec<S> = scores.iter().map(|&s| (s - max).exp()).collect();
            let total: S = exps.iter().cloned().sum();
            let mut pooled = vec![S::zero(); d];
            for (j, t) in (start..start + dur).enumerate() {
                let w = exps[j] / total;
                for (p, x) in pooled.iter_mut().zip(f.frame(t).iter()) {
                    *p += w * *x;
                }
            }
            data.extend_from_slice(&pooled);
        }
        start += dur;
    }
    let fps_out = f.fps * partition.len() as f64 / f.t() as f64;
    FeatureMatrix::new(data, partition.len(), d, fps_out, f.kind)
}

/// Expands each segment frame back to its duration by repetition, then runs
/// a moving average of half-width `window` across the sequence. Half-width 0
/// is pure repetition.
pub fn deaggregate<S: Scalar>(
    f: &FeatureMatrix<S>,
    partition: &SegmentPartition,
    window: usize,
) -> Result<FeatureMatrix<S>> {
    if partition.len() != f.t() {
        return Err(Error::ShapeMismatch(format!(
            "partition has {} segments, features have {} frames",
            partition.len(),
            f.t()
        )));
    }
    let d = f.d();
    let total = partition.total_frames();
    let mut repeated = Vec::with_capacity(total * d);
    for (seg, &dur) in partition.durations().iter().enumerate() {
        for _ in 0..dur {
            repeated.extend_from_slice(f.frame(seg));
        }
    }
    let data = if window == 0 {
        repeated
    } else {
        let mut smoothed = vec![S::zero(); total * d];
        for t in 0..total {
            let lo = t.saturating_sub(window);
            let hi = (t + window + 1).min(total);
            let inv = S::one() / S::of_usize(hi - lo);
            for j in 0..d {
                let mut acc = S::zero();
                for u in lo..hi {
                    acc += repeated[u * d + j];
                }
                smoothed[t * d + j] = acc * inv;
            }
        }
        smoothed
    };
    let fps_out = f.fps * total as f64 / partition.len() as f64;
    FeatureMatrix::new(data, total, d, fps_out, f.kind)
}

/// Embeds a duration into a first-layer code: c' = (d - 1) * K + c.
pub fn encode_duration(code: u16, duration: u32, k: usize) -> Result<u16> {
    if k == 0 {
        return Err(Error::InvalidConfig("k must be positive".into()));
    }
    if code as usize >= k || duration < 1 {
        return Err(Error::CodeOutOfRange {
            code: code as u64,
            max: k as u64 - 1,
            offset: None,
        });
    }
    let combined = (duration as usize - 1) * k + code as usize;
    if combined > u16::MAX as usize {
        return Err(Error::CodeOutOfRange {
            code: combined as u64,
            max: u16::MAX as u64,
            offset: None,
        });
    }
    Ok(combined as u16)
}

/// Splits a duration-embedded code: d = floor(c' / K) + 1, c = c' mod K.
pub fn decode_duration(combined: u16, k: usize) -> Result<(u16, u32)> {
    if k == 0 {
        return Err(Error::InvalidConfig("k must be positive".into()));
    }
    let code = (combined as usize % k) as u16;
    let duration = (combined as usize / k) as u32 + 1;
    Ok((code, duration))
}
