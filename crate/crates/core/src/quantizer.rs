//! Residual vector quantization: codebooks, training, encode, decode.
//!
//! Each layer quantizes the residual left by the previous layers; decoding
//! sums the selected centroids. Training is k-means++ seeding plus Lloyd
//! iterations with an optional EMA refinement epoch, fully determined by the
//! seed. Every residual layer (index >= 1) pins its last entry to the zero
//! vector so adding a layer can never increase a frame's residual energy.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::signal::{FeatureKind, FeatureMatrix};

/// Which codec stream a codebook or grid belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StreamKind {
    Acoustic,
    Semantic,
}

impl std::fmt::Display for StreamKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StreamKind::Acoustic => write!(f, "acoustic"),
            StreamKind::Semantic => write!(f, "semantic"),
        }
    }
}

/// One quantization layer: K entries of dimension D.
///
/// Entries are kept exactly representable in f32 so codebook files round-trip
/// without loss regardless of the in-memory scalar.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook<S: Scalar> {
    entries: Vec<S>,
    k: usize,
    d: usize,
    /// Assignment counts from the final training pass; zero for codebooks
    /// built directly or loaded from file.
    pub usage: Vec<f64>,
}

impl<S: Scalar> Codebook<S> {
    pub fn from_flat(entries: Vec<S>, k: usize, d: usize) -> Result<Self> {
        if k == 0 || d == 0 {
            return Err(Error::InvalidConfig("codebook needs k >= 1, d >= 1".into()));
        }
        if k > u16::MAX as usize {
            return Err(Error::InvalidConfig(format!(
                "k {} exceeds the u16 code space",
                k
            )));
        }
        if entries.len() != k * d {
            return Err(Error::ShapeMismatch(format!(
                "codebook has {} values, expected {} x {}",
                entries.len(),
                k,
                d
            )));
        }
        if entries.iter().any(|e| !e.is_finite()) {
            return Err(Error::InvalidConfig(
                "codebook contains non-finite entries".into(),
            ));
        }
        Ok(Codebook {
            entries,
            k,
            d,
            usage: vec![0.0; k],
        })
    }

    pub fn from_entries(rows: Vec<Vec<S>>) -> Result<Self> {
        let k = rows.len();
        let d = rows.first().map(|r| r.len()).unwrap_or(0);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::ShapeMismatch("ragged codebook rows".into()));
        }
        Self::from_flat(rows.into_iter().flatten().collect(), k, d)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn entry(&self, i: usize) -> &[S] {
        &self.entries[i * self.d..(i + 1) * self.d]
    }

    pub fn entries(&self) -> &[S] {
        &self.entries
    }

    /// Index and squared distance of the nearest entry; ties resolve to the
    /// lowest index because the scan keeps the first strict minimum.
    pub fn nearest(&self, frame: &[S]) -> (usize, S) {
        debug_assert_eq!(frame.len(), self.d);
        let mut best_i = 0;
        let mut best = S::infinity();
        for i in 0..self.k {
            let e = self.entry(i);
            let mut acc = S::zero();
            for (x, c) in frame.iter().zip(e.iter()) {
                let diff = *x - *c;
                acc += diff * diff;
            }
            if acc < best {
                best = acc;
                best_i = i;
            }
        }
        (best_i, best)
    }

    fn round_entries_to_f32(&mut self) {
        for e in &mut self.entries {
            *e = S::of_f64(e.into_f64() as f32 as f64);
        }
    }
}

/// An ordered cascade of codebooks for one stream.
#[derive(Debug, Clone, PartialEq)]
pub struct RvqStack<S: Scalar> {
    layers: Vec<Codebook<S>>,
    pub stream: StreamKind,
}

impl<S: Scalar> RvqStack<S> {
    pub fn new(layers: Vec<Codebook<S>>, stream: StreamKind) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::NotTrained);
        }
        let k = layers[0].k();
        let d = layers[0].d();
        if layers.iter().any(|l| l.k() != k || l.d() != d) {
            return Err(Error::ShapeMismatch(
                "stack layers disagree on K or D".into(),
            ));
        }
        Ok(RvqStack { layers, stream })
    }

    pub fn nq(&self) -> usize {
        self.layers.len()
    }

    pub fn k(&self) -> usize {
        self.layers[0].k()
    }

    pub fn d(&self) -> usize {
        self.layers[0].d()
    }

    pub fn layer(&self, i: usize) -> &Codebook<S> {
        &self.layers[i]
    }

    pub fn layers(&self) -> &[Codebook<S>] {
        &self.layers
    }
}

/// Code indices for one stream, layer-major (nq x T).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodeGrid {
    codes: Vec<u16>,
    nq: usize,
    t: usize,
    pub stream: StreamKind,
}

impl CodeGrid {
    pub fn new(codes: Vec<u16>, nq: usize, t: usize, stream: StreamKind) -> Result<Self> {
        if nq == 0 || t == 0 {
            return Err(Error::EmptyInput);
        }
        if codes.len() != nq * t {
            return Err(Error::ShapeMismatch(format!(
                "grid has {} codes, expected {} x {}",
                codes.len(),
                nq,
                t
            )));
        }
        Ok(CodeGrid {
            codes,
            nq,
            t,
            stream,
        })
    }

    pub fn nq(&self) -> usize {
        self.nq
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn layer(&self, l: usize) -> &[u16] {
        &self.codes[l * self.t..(l + 1) * self.t]
    }

    pub fn layer_mut(&mut self, l: usize) -> &mut [u16] {
        &mut self.codes[l * self.t..(l + 1) * self.t]
    }

    pub fn codes(&self) -> &[u16] {
        &self.codes
    }

    /// Checks every code against its layer bound: `layer0_max` for layer 0
    /// (duration-embedded codes in dynamic mode), `k` elsewhere.
    pub fn validate_ranges(&self, k: usize, layer0_max: usize) -> Result<()> {
        for l in 0..self.nq {
            let bound = if l == 0 { layer0_max } else { k };
            for &c in self.layer(l) {
                if c as usize >= bound {
                    return Err(Error::CodeOutOfRange {
                        code: c as u64,
                        max: bound as u64 - 1,
                        offset: None,
                    });
                }
            }
        }
        Ok(())
    }
}

/// Training hyper-parameters. `iters` are Lloyd passes; `ema_passes` are
/// optional refinement epochs that move centroids toward batch means with
/// decay `ema_decay`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub nq: usize,
    pub k: usize,
    pub seed: u64,
    pub iters: usize,
    pub ema_passes: usize,
    pub ema_decay: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            nq: 4,
            k: 256,
            seed: 0,
            iters: 10,
            ema_passes: 1,
            ema_decay: 0.99,
        }
    }
}

fn squared_dist<S: Scalar>(a: &[S], b: &[S]) -> S {
    let mut acc = S::zero();
    for (x, y) in a.iter().zip(b.iter()) {
        let diff = *x - *y;
        acc += diff * diff;
    }
    acc
}

/// k-means++ seeding: first center uniform, the rest sampled proportional to
/// squared distance from the chosen set.
fn kmeans_pp_init<S: Scalar>(
    data: &[S],
    t: usize,
    d: usize,
    k: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<S> {
    let frame = |i: usize| &data[i * d..(i + 1) * d];
    let mut centers: Vec<S> = Vec::with_capacity(k * d);
    let first = rng.random_range(0..t);
    centers.extend_from_slice(frame(first));
    let mut dists: Vec<f64> = (0..t)
        .map(|i| squared_dist(frame(i), &centers[..d]).into_f64())
        .collect();
    for c in 1..k {
        let total: f64 = dists.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = t - 1;
            for (i, &w) in dists.iter().enumerate() {
                target -= w;
                if target <= 0.0 {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            // All mass collapsed onto chosen centers; fall back to uniform.
            rng.random_range(0..t)
        };
        let start = c * d;
        centers.extend_from_slice(frame(pick));
        for (i, slot) in dists.iter_mut().enumerate() {
            let nd = squared_dist(frame(i), &centers[start..start + d]).into_f64();
            if nd < *slot {
                *slot = nd;
            }
        }
    }
    centers
}

/// Re-seeds empty clusters onto the frames worst served by their current
/// centroid, worst first.
fn reseed_empty<S: Scalar>(
    data: &[S],
    t: usize,
    d: usize,
    centers: &mut [S],
    counts: &[usize],
    assignments: &[usize],
) {
    let empty: Vec<usize> = counts
        .iter()
        .enumerate()
        .filter_map(|(i, &c)| (c == 0).then_some(i))
        .collect();
    if empty.is_empty() {
        return;
    }
    let frame = |i: usize| &data[i * d..(i + 1) * d];
    let mut errors: Vec<(usize, f64)> = (0..t)
        .map(|i| {
            let c = assignments[i];
            (
                i,
                squared_dist(frame(i), &centers[c * d..(c + 1) * d]).into_f64(),
            )
        })
        .collect();
    errors.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    for (slot, cluster) in empty.into_iter().enumerate() {
        let (src, _) = errors[slot.min(t - 1)];
        centers[cluster * d..(cluster + 1) * d].copy_from_slice(frame(src));
    }
}

fn assign_all<S: Scalar>(
    data: &[S],
    t: usize,
    d: usize,
    centers: &[S],
    k: usize,
) -> (Vec<usize>, Vec<usize>) {
    let mut assignments = vec![0usize; t];
    let mut counts = vec![0usize; k];
    for i in 0..t {
        let x = &data[i * d..(i + 1) * d];
        let mut best = S::infinity();
        let mut best_j = 0;
        for j in 0..k {
            let dist = squared_dist(x, &centers[j * d..(j + 1) * d]);
            if dist < best {
                best = dist;
                best_j = j;
            }
        }
        assignments[i] = best_j;
        counts[best_j] += 1;
    }
    (assignments, counts)
}

fn kmeans<S: Scalar>(
    data: &[S],
    t: usize,
    d: usize,
    k: usize,
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Vec<S> {
    let mut centers = kmeans_pp_init(data, t, d, k, rng);
    for _ in 0..cfg.iters {
        let (assignments, counts) = assign_all(data, t, d, &centers, k);
        let mut sums = vec![S::zero(); k * d];
        for i in 0..t {
            let c = assignments[i];
            for j in 0..d {
                sums[c * d + j] += data[i * d + j];
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                let inv = S::one() / S::of_usize(counts[c]);
                for j in 0..d {
                    centers[c * d + j] = sums[c * d + j] * inv;
                }
            }
        }
        reseed_empty(data, t, d, &mut centers, &counts, &assignments);
    }
    for _ in 0..cfg.ema_passes {
        let (assignments, counts) = assign_all(data, t, d, &centers, k);
        let mut sums = vec![S::zero(); k * d];
        for i in 0..t {
            let c = assignments[i];
            for j in 0..d {
                sums[c * d + j] += data[i * d + j];
            }
        }
        let decay = S::of_f64(cfg.ema_decay);
        let blend = S::one() - decay;
        for c in 0..k {
            if counts[c] > 0 {
                let inv = S::one() / S::of_usize(counts[c]);
                for j in 0..d {
                    let mean = sums[c * d + j] * inv;
                    centers[c * d + j] = centers[c * d + j] * decay + mean * blend;
                }
            }
        }
        reseed_empty(data, t, d, &mut centers, &counts, &assignments);
    }
    centers
}

/// Trains a residual stack layer by layer. Needs at least `k` frames.
pub fn train_rvq<S: Scalar>(
    features: &FeatureMatrix<S>,
    cfg: &TrainConfig,
    stream: StreamKind,
) -> Result<RvqStack<S>> {
    if cfg.nq == 0 {
        return Err(Error::InvalidConfig("nq must be >= 1".into()));
    }
    if cfg.k == 0 || cfg.k > u16::MAX as usize {
        return Err(Error::InvalidConfig(format!(
            "k must be in 1..={}, got {}",
            u16::MAX,
            cfg.k
        )));
    }
    let t = features.t();
    let d = features.d();
    if t < cfg.k {
        return Err(Error::InsufficientData {
            needed: cfg.k,
            got: t,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut residuals: Vec<S> = features.data().to_vec();
    let mut layers = Vec::with_capacity(cfg.nq);
    for layer_idx in 0..cfg.nq {
        // Residual layers reserve the top entry for the zero vector: the
        // encoder can always keep a residual unchanged, so depth never makes
        // any frame worse.
        let pin_zero = layer_idx > 0 && cfg.k > 1;
        let free_k = if pin_zero { cfg.k - 1 } else { cfg.k };
        let mut entries = kmeans(&residuals, t, d, free_k, cfg, &mut rng);
        if pin_zero {
            entries.extend(std::iter::repeat_n(S::zero(), d));
        }
        let mut book = Codebook::from_flat(entries, cfg.k, d)?;
        book.round_entries_to_f32();
        for i in 0..t {
            let r = &mut residuals[i * d..(i + 1) * d];
            let (idx, _) = book.nearest(r);
            book.usage[idx] += 1.0;
            let e = book.entry(idx).to_vec();
            for (rj, ej) in r.iter_mut().zip(e.iter()) {
                *rj -= *ej;
            }
        }
        layers.push(book);
    }
    RvqStack::new(layers, stream)
}

/// Encodes features into per-layer nearest-centroid indices.
pub fn rvq_encode<S: Scalar>(stack: &RvqStack<S>, features: &FeatureMatrix<S>) -> Result<CodeGrid> {
    if features.d() != stack.d() {
        return Err(Error::ShapeMismatch(format!(
            "features have D {}, stack expects {}",
            features.d(),
            stack.d()
        )));
    }
    let t = features.t();
    let nq = stack.nq();
    let mut codes = vec![0u16; nq * t];
    let mut residual = vec![S::zero(); stack.d()];
    for ti in 0..t {
        residual.copy_from_slice(features.frame(ti));
        for l in 0..nq {
            let book = stack.layer(l);
            let (idx, _) = book.nearest(&residual);
            codes[l * t + ti] = idx as u16;
            for (r, e) in residual.iter_mut().zip(book.entry(idx).iter()) {
                *r -= *e;
            }
        }
    }
    CodeGrid::new(codes, nq, t, stack.stream)
}

/// Reconstructs features by summing the selected centroids of every layer.
pub fn rvq_decode<S: Scalar>(
    stack: &RvqStack<S>,
    grid: &CodeGrid,
    fps: f64,
    kind: FeatureKind,
) -> Result<FeatureMatrix<S>> {
    if grid.stream != stack.stream {
        return Err(Error::ShapeMismatch(format!(
            "grid stream {} does not match stack stream {}",
            grid.stream, stack.stream
        )));
    }
    if grid.nq() != stack.nq() {
        return Err(Error::ShapeMismatch(format!(
            "grid has {} layers, stack has {}",
            grid.nq(),
            stack.nq()
        )));
    }
    decode_prefix(stack, grid, grid.nq(), fps, kind)
}

/// Reconstructs from the first `layers` layers only; used for
/// rate/distortion sweeps over one encoded grid.
pub fn decode_prefix<S: Scalar>(
    stack: &RvqStack<S>,
    grid: &CodeGrid,
    layers: usize,
    fps: f64,
    kind: FeatureKind,
) -> Result<FeatureMatrix<S>> {
    if layers == 0 || layers > stack.nq() || layers > grid.nq() {
        return Err(Error::InvalidConfig(format!(
            "prefix depth {} outside 1..={}",
            layers,
            stack.nq().min(grid.nq())
        )));
    }
    let t = grid.t();
    let d = stack.d();
    let mut data = vec![S::zero(); t * d];
    for l in 0..layers {
        let book = stack.layer(l);
        for (ti, &code) in grid.layer(l).iter().enumerate() {
            if code as usize >= book.k() {
                return Err(Error::CodeOutOfRange {
                    code: code as u64,
                    max: book.k() as u64 - 1,
                    offset: None,
                });
            }
            let e = book.entry(code as usize);
            for j in 0..d {
                data[ti * d + j] += e[j];
            }
        }
    }
    FeatureMatrix::new(data, t, d, fps, kind)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(rows: Vec<Vec<f64>>) -> FeatureMatrix<f64> {
        let t = rows.len();
        let d = rows[0].len();
        FeatureMatrix::new(rows.into_iter().flatten().collect(), t, d, 25.0, FeatureKind::Mel)
            .unwrap()
    }

    #[test]
    fn two_layer_toy_trace() {
        let b0 = Codebook::from_entries(vec![vec![-1.0], vec![1.0]]).unwrap();
        let b1 = Codebook::from_entries(vec![vec![-0.5], vec![0.5]]).unwrap();
        let stack = RvqStack::new(vec![b0, b1], StreamKind::Acoustic).unwrap();
        let f = matrix(vec![vec![0.4]]);
        let grid = rvq_encode(&stack, &f).unwrap();
        assert_eq!(grid.layer(0), &[1]);
        assert_eq!(grid.layer(1), &[0]);
        let recon = rvq_decode(&stack, &grid, 25.0, FeatureKind::Mel).unwrap();
        assert!((recon.frame(0)[0] - 0.5).abs() < 1e-12);
        let residual = f.frame(0)[0] - recon.frame(0)[0];
        assert!((residual - (-0.1)).abs() < 1e-12);
    }

    #[test]
    fn ties_pick_the_lowest_index() {
        let book =
            Codebook::from_entries(vec![vec![0.5, 0.5], vec![0.5, 0.5], vec![2.0, 2.0]]).unwrap();
        let (idx, _) = book.nearest(&[0.5, 0.5]);
        assert_eq!(idx, 0);
    }

    #[test]
    fn single_centroid_is_the_data_mean() {
        let rows: Vec<Vec<f64>> = (0..50)
            .map(|i| vec![i as f64 * 0.01, 1.0 - i as f64 * 0.02])
            .collect();
        let mean0: f64 = rows.iter().map(|r| r[0]).sum::<f64>() / 50.0;
        let mean1: f64 = rows.iter().map(|r| r[1]).sum::<f64>() / 50.0;
        let f = matrix(rows);
        let cfg = TrainConfig {
            nq: 1,
            k: 1,
            seed: 7,
            iters: 5,
            ema_passes: 0,
            ..TrainConfig::default()
        };
        let stack = train_rvq(&f, &cfg, StreamKind::Acoustic).unwrap();
        let e = stack.layer(0).entry(0);
        assert!((e[0] - mean0).abs() < 1e-6);
        assert!((e[1] - mean1).abs() < 1e-6);
    }

    #[test]
    fn training_needs_at_least_k_frames() {
        let f = matrix(vec![vec![0.0, 0.0], vec![1.0, 1.0]]);
        let cfg = TrainConfig {
            nq: 1,
            k: 4,
            ..TrainConfig::default()
        };
        assert!(matches!(
            train_rvq(&f, &cfg, StreamKind::Acoustic),
            Err(Error::InsufficientData { needed: 4, got: 2 })
        ));
    }

    #[test]
    fn same_seed_trains_identical_stacks() {
        let rows: Vec<Vec<f64>> = (0..64)
            .map(|i| vec![(i as f64 * 0.37).sin(), (i as f64 * 0.91).cos()])
            .collect();
        let f = matrix(rows);
        let cfg = TrainConfig {
            nq: 2,
            k: 8,
            seed: 42,
            iters: 6,
            ema_passes: 1,
            ..TrainConfig::default()
        };
        let a = train_rvq(&f, &cfg, StreamKind::Acoustic).unwrap();
        let b = train_rvq(&f, &cfg, StreamKind::Acoustic).unwrap();
        assert_eq!(a, b);
        let c = train_rvq(
            &f,
            &TrainConfig { seed: 43, ..cfg },
            StreamKind::Acoustic,
        )
        .unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn residual_layers_contain_the_zero_entry() {
        let rows: Vec<Vec<f64>> = (0..64)
            .map(|i| vec![(i as f64 * 0.37).sin(), (i as f64 * 0.91).cos()])
            .collect();
        let f = matrix(rows);
        let cfg = TrainConfig {
            nq: 3,
            k: 8,
            seed: 1,
            iters: 4,
            ema_passes: 0,
            ..TrainConfig::default()
        };
        let stack = train_rvq(&f, &cfg, StreamKind::Acoustic).unwrap();
        for l in 1..stack.nq() {
            let last = stack.layer(l).entry(cfg.k - 1);
            assert!(last.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn decode_rejects_out_of_range_codes() {
        let b0 = Codebook::from_entries(vec![vec![-1.0], vec![1.0]]).unwrap();
        let stack = RvqStack::new(vec![b0], StreamKind::Acoustic).unwrap();
        let grid = CodeGrid::new(vec![7], 1, 1, StreamKind::Acoustic).unwrap();
        assert!(matches!(
            rvq_decode(&stack, &grid, 25.0, FeatureKind::Mel),
            Err(Error::CodeOutOfRange { code: 7, max: 1, .. })
        ));
    }

    #[test]
    fn usage_counts_sum_to_frames_seen() {
        let rows: Vec<Vec<f64>> = (0..40).map(|i| vec![i as f64, -(i as f64)]).collect();
        let f = matrix(rows);
        let cfg = TrainConfig {
            nq: 2,
            k: 4,
            seed: 3,
            iters: 5,
            ema_passes: 1,
            ..TrainConfig::default()
        };
        let stack = train_rvq(&f, &cfg, StreamKind::Semantic).unwrap();
        for l in 0..stack.nq() {
            let total: f64 = stack.layer(l).usage.iter().sum();
            assert_eq!(total, 40.0);
        }
    }

    #[test]
    fn empty_stack_is_not_trained() {
        assert!(matches!(
            RvqStack::<f64>::new(vec![], StreamKind::Acoustic),
            Err(Error::NotTrained)
        ));
    }
}
