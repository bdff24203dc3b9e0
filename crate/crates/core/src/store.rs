//! Bit-exact persistence: token files (HTOK), codebook files (HCBK), and
//! external-feature files (HFEA).
//!
//! All integers and floats are little-endian. Serialization is canonical —
//! equal values produce identical bytes — and every reader failure names
//! the byte offset where the file stopped making sense.
//!
//! ## HTOK layout
//! ```text
//! offset  size  field
//!      0     4  magic "HTOK"
//!      4     1  version (1)
//!      5     4  sample_rate u32
//!      9     4  fps numerator u32
//!     13     4  fps denominator u32
//!     17     2  K u16
//!     19     1  d_max u8
//!     20     1  nq_acoustic u8
//!     21     1  nq_semantic u8
//!     22     1  dynamic flag (0|1)
//!     23     8  original_len_samples u64
//!     31     4  T u32 (frames per layer)
//!     35     8  codec fingerprint u64
//!     43     T  durations, one u8 per frame   (present iff dynamic)
//!      …   2·T·(nq_acoustic+nq_semantic)  codes u16, layer-major,
//!                                         acoustic block then semantic
//! ```
//!
//! ## HFEA layout
//! ```text
//!      0     4  magic "HFEA"
//!      4     1  version (1)
//!      5     4  T u32
//!      9     2  D u16
//!     11     4  fps numerator u32
//!     15     4  fps denominator u32
//!     19     1  dtype (1 = f32)
//!     20  4·T·D payload, f32 little-endian, row-major
//! ```
//!
//! ## HCBK layout (one quantizer stack per file)
//! ```text
//!      0     4  magic "HCBK"
//!      4     1  version (1)
//!      5     1  stream (0 = acoustic, 1 = semantic)
//!      6     1  nq u8
//!      7     2  K u16
//!      9     4  D u32
//!     13  4·nq·K·D  entries, f32 little-endian, layer-major row-major
//! ```

use std::io::Read;
use std::path::Path;

use crate::codec::EncodedAudio;
use crate::error::{Error, Result};
use crate::framerate::SegmentPartition;
use crate::quantizer::{CodeGrid, Codebook, RvqStack, StreamKind};
use crate::scalar::Scalar;
use crate::signal::{FeatureKind, FeatureMatrix};
use crate::util::Fps;

pub const TOKEN_MAGIC: [u8; 4] = *b"HTOK";
pub const FEATURE_MAGIC: [u8; 4] = *b"HFEA";
pub const CODEBOOK_MAGIC: [u8; 4] = *b"HCBK";
pub const FORMAT_VERSION: u8 = 1;

/// f32 payload marker in feature files.
const DTYPE_F32: u8 = 1;

// ---------------------------------------------------------------------------
// Cursor over a byte buffer that reports the offset of every failure.
// ---------------------------------------------------------------------------

struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        ByteReader { bytes, pos: 0 }
    }

    fn offset(&self) -> u64 {
        self.pos as u64
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::CorruptFile {
                offset: self.bytes.len() as u64,
                detail: format!(
                    "unexpected end of file: needed {} more bytes at offset {}",
                    self.pos + n - self.bytes.len(),
                    self.pos
                ),
            });
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn expect_magic(&mut self, magic: &[u8; 4]) -> Result<()> {
        if self.take(4).map_err(|_| Error::NotATokenFile)? != magic {
            return Err(Error::NotATokenFile);
        }
        Ok(())
    }

    fn expect_version(&mut self) -> Result<()> {
        let at = self.offset();
        let v = self.u8()?;
        if v != FORMAT_VERSION {
            return Err(Error::CorruptFile {
                offset: at,
                detail: format!("unsupported format version {v}, expected {FORMAT_VERSION}"),
            });
        }
        Ok(())
    }

    fn expect_end(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::CorruptFile {
                offset: self.pos as u64,
                detail: format!(
                    "{} trailing bytes after the payload",
                    self.bytes.len() - self.pos
                ),
            });
        }
        Ok(())
    }
}

fn corrupt(offset: u64, detail: impl Into<String>) -> Error {
    Error::CorruptFile {
        offset,
        detail: detail.into(),
    }
}

/// Rational frame-rate equality by cross-multiplication, so unreduced
/// fractions still compare correctly.
pub fn fps_compatible(a: Fps, b: Fps) -> bool {
    a.num as u64 * b.den as u64 == b.num as u64 * a.den as u64
}

// ---------------------------------------------------------------------------
// Token files.
// ---------------------------------------------------------------------------

/// Serializes an encoded clip to canonical HTOK bytes.
pub fn token_bytes(enc: &EncodedAudio) -> Result<Vec<u8>> {
    let nq_a = enc.acoustic.nq();
    let nq_s = enc.semantic.nq();
    let t = enc.acoustic.t();
    if enc.semantic.t() != t {
        return Err(Error::ShapeMismatch(format!(
            "acoustic stream has {t} frames, semantic has {}",
            enc.semantic.t()
        )));
    }
    if nq_a > u8::MAX as usize || nq_s > u8::MAX as usize {
        return Err(Error::InvalidConfig("more than 255 layers".into()));
    }
    if t > u32::MAX as usize {
        return Err(Error::InvalidConfig("more than u32::MAX frames".into()));
    }
    if let Some(p) = &enc.partition {
        if p.len() != t {
            return Err(Error::ShapeMismatch(format!(
                "partition has {} segments, token grid has {t} frames",
                p.len()
            )));
        }
    }
    if enc.k == 0 || enc.k > u16::MAX as usize {
        return Err(Error::InvalidConfig(format!(
            "K {} outside [1, 65535]",
            enc.k
        )));
    }
    if enc.d_max == 0 || enc.d_max > u8::MAX as usize {
        return Err(Error::InvalidConfig(format!(
            "d_max {} outside [1, 255]",
            enc.d_max
        )));
    }
    let mut out = Vec::with_capacity(43 + t * (1 + 2 * (nq_a + nq_s)));
    out.extend_from_slice(&TOKEN_MAGIC);
    out.push(FORMAT_VERSION);
    out.extend_from_slice(&enc.sample_rate.to_le_bytes());
    out.extend_from_slice(&enc.fps_nominal.num.to_le_bytes());
    out.extend_from_slice(&enc.fps_nominal.den.to_le_bytes());
    out.extend_from_slice(&(enc.k as u16).to_le_bytes());
    out.push(enc.d_max as u8);
    out.push(nq_a as u8);
    out.push(nq_s as u8);
    out.push(enc.partition.is_some() as u8);
    out.extend_from_slice(&enc.original_len.to_le_bytes());
    out.extend_from_slice(&(t as u32).to_le_bytes());
    out.extend_from_slice(&enc.fingerprint.to_le_bytes());
    if let Some(p) = &enc.partition {
        for &d in p.durations() {
            debug_assert!(d >= 1 && d as usize <= enc.d_max);
            out.push(d as u8);
        }
    }
    for &c in enc.acoustic.codes() {
        out.extend_from_slice(&c.to_le_bytes());
    }
    for &c in enc.semantic.codes() {
        out.extend_from_slice(&c.to_le_bytes());
    }
    Ok(out)
}

/// Parses HTOK bytes; the inverse of [`token_bytes`].
pub fn parse_tokens(bytes: &[u8]) -> Result<EncodedAudio> {
    let mut r = ByteReader::new(bytes);
    r.expect_magic(&TOKEN_MAGIC)?;
    r.expect_version()?;
    let sample_rate_at = r.offset();
    let sample_rate = r.u32()?;
    if sample_rate == 0 {
        return Err(corrupt(sample_rate_at, "sample rate is zero"));
    }
    let num_at = r.offset();
    let fps_num = r.u32()?;
    let den_at = r.offset();
    let fps_den = r.u32()?;
    if fps_num == 0 {
        return Err(corrupt(num_at, "fps numerator is zero"));
    }
    if fps_den == 0 {
        return Err(corrupt(den_at, "fps denominator is zero"));
    }
    let k_at = r.offset();
    let k = r.u16()?;
    if k == 0 {
        return Err(corrupt(k_at, "K is zero"));
    }
    let d_max_at = r.offset();
    let d_max = r.u8()?;
    if d_max == 0 {
        return Err(corrupt(d_max_at, "d_max is zero"));
    }
    if k as u32 * d_max as u32 > u16::MAX as u32 + 1 {
        return Err(corrupt(
            k_at,
            format!("K*d_max = {} exceeds the u16 code space", k as u32 * d_max as u32),
        ));
    }
    let nq_a_at = r.offset();
    let nq_a = r.u8()?;
    if nq_a == 0 {
        return Err(corrupt(nq_a_at, "no acoustic layers"));
    }
    let nq_s_at = r.offset();
    let nq_s = r.u8()?;
    if nq_s == 0 {
        return Err(corrupt(nq_s_at, "no semantic layers"));
    }
    let dyn_at = r.offset();
    let dynamic = match r.u8()? {
        0 => false,
        1 => true,
        other => {
            return Err(corrupt(
                dyn_at,
                format!("dynamic flag must be 0 or 1, got {other}"),
            ))
        }
    };
    let original_len = r.u64()?;
    let t_at = r.offset();
    let t = r.u32()? as usize;
    if t == 0 {
        return Err(corrupt(t_at, "token stream has zero frames (T >= 1)"));
    }
    let fingerprint = r.u64()?;

    let partition = if dynamic {
        let mut durations = Vec::with_capacity(t);
        for _ in 0..t {
            let at = r.offset();
            let d = r.u8()?;
            if d == 0 || d > d_max {
                return Err(corrupt(
                    at,
                    format!("duration {d} outside [1, {d_max}]"),
                ));
            }
            durations.push(d as u32);
        }
        Some(SegmentPartition::new(durations, d_max as usize).map_err(|e| {
            corrupt(43, format!("invalid duration block: {e}"))
        })?)
    } else {
        None
    };

    let code_bound = k as u64 * d_max as u64;
    let mut read_grid = |nq: usize, stream: StreamKind| -> Result<CodeGrid> {
        let mut codes = Vec::with_capacity(nq * t);
        for l in 0..nq {
            let bound = if l == 0 { code_bound } else { k as u64 };
            for _ in 0..t {
                let at = r.offset();
                let c = r.u16()?;
                if c as u64 >= bound {
                    return Err(Error::CodeOutOfRange {
                        code: c as u64,
                        max: bound - 1,
                        offset: Some(at),
                    });
                }
                codes.push(c);
            }
        }
        CodeGrid::new(codes, nq, t, stream)
    };
    let acoustic = read_grid(nq_a as usize, StreamKind::Acoustic)?;
    let semantic = read_grid(nq_s as usize, StreamKind::Semantic)?;
    r.expect_end()?;

    Ok(EncodedAudio {
        acoustic,
        semantic,
        partition,
        original_len,
        sample_rate,
        fps_nominal: Fps::new(fps_num, fps_den),
        k: k as usize,
        d_max: d_max as usize,
        fingerprint,
    })
}

pub fn write_tokens(enc: &EncodedAudio, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, token_bytes(enc)?)?;
    Ok(())
}

pub fn read_tokens(path: impl AsRef<Path>) -> Result<EncodedAudio> {
    parse_tokens(&std::fs::read(path)?)
}

/// Reads HTOK from any stream (the bytes are buffered to parse with exact
/// offsets).
pub fn read_tokens_from(mut source: impl Read) -> Result<EncodedAudio> {
    let mut bytes = Vec::new();
    source.read_to_end(&mut bytes)?;
    parse_tokens(&bytes)
}

// ---------------------------------------------------------------------------
// Feature files.
// ---------------------------------------------------------------------------

/// Serializes a feature matrix to canonical HFEA bytes. Values are stored
/// as f32; NaN values are rejected here rather than written.
pub fn feature_bytes<S: Scalar>(fm: &FeatureMatrix<S>, fps: Fps) -> Result<Vec<u8>> {
    if fm.t() > u32::MAX as usize {
        return Err(Error::InvalidConfig("more than u32::MAX frames".into()));
    }
    if fm.d() > u16::MAX as usize {
        return Err(Error::InvalidConfig(
            "feature dimension exceeds u16".into(),
        ));
    }
    let mut out = Vec::with_capacity(20 + 4 * fm.t() * fm.d());
    out.extend_from_slice(&FEATURE_MAGIC);
    out.push(FORMAT_VERSION);
    out.extend_from_slice(&(fm.t() as u32).to_le_bytes());
    out.extend_from_slice(&(fm.d() as u16).to_le_bytes());
    out.extend_from_slice(&fps.num.to_le_bytes());
    out.extend_from_slice(&fps.den.to_le_bytes());
    out.push(DTYPE_F32);
    for &v in fm.data() {
        let f = v.into_f64() as f32;
        if f.is_nan() {
            return Err(Error::InvalidConfig(
                "feature payload contains NaN".into(),
            ));
        }
        out.extend_from_slice(&f.to_le_bytes());
    }
    Ok(out)
}

/// Parses HFEA bytes into a feature matrix and its rational frame rate.
/// The matrix is tagged [`FeatureKind::SemanticExternal`].
pub fn parse_features<S: Scalar>(bytes: &[u8]) -> Result<(FeatureMatrix<S>, Fps)> {
    let mut r = ByteReader::new(bytes);
    r.expect_magic(&FEATURE_MAGIC)?;
    r.expect_version()?;
    let t_at = r.offset();
    let t = r.u32()? as usize;
    if t == 0 {
        return Err(corrupt(t_at, "feature file has zero frames"));
    }
    let d_at = r.offset();
    let d = r.u16()? as usize;
    if d == 0 {
        return Err(corrupt(d_at, "feature file has zero dimensions"));
    }
    let num_at = r.offset();
    let fps_num = r.u32()?;
    if fps_num == 0 {
        return Err(corrupt(num_at, "fps numerator is zero"));
    }
    let den_at = r.offset();
    let fps_den = r.u32()?;
    if fps_den == 0 {
        return Err(corrupt(den_at, "fps denominator is zero"));
    }
    let dtype_at = r.offset();
    let dtype = r.u8()?;
    if dtype != DTYPE_F32 {
        return Err(corrupt(
            dtype_at,
            format!("unsupported dtype {dtype}, expected {DTYPE_F32} (f32)"),
        ));
    }
    let mut data = Vec::with_capacity(t * d);
    for _ in 0..t * d {
        let at = r.offset();
        let v = r.f32()?;
        if v.is_nan() {
            return Err(corrupt(at, "NaN in feature payload"));
        }
        data.push(S::of_f64(v as f64));
    }
    r.expect_end()?;
    let fps = Fps::new(fps_num, fps_den);
    let fm = FeatureMatrix::new(data, t, d, fps.as_f64(), FeatureKind::SemanticExternal)?;
    Ok((fm, fps))
}

pub fn write_features<S: Scalar>(
    fm: &FeatureMatrix<S>,
    fps: Fps,
    path: impl AsRef<Path>,
) -> Result<()> {
    std::fs::write(path, feature_bytes(fm, fps)?)?;
    Ok(())
}

pub fn read_features<S: Scalar>(path: impl AsRef<Path>) -> Result<(FeatureMatrix<S>, Fps)> {
    parse_features(&std::fs::read(path)?)
}

// ---------------------------------------------------------------------------
// Codebook files.
// ---------------------------------------------------------------------------

/// Serializes one quantizer stack to canonical HCBK bytes.
pub fn codebook_bytes<S: Scalar>(stack: &RvqStack<S>) -> Result<Vec<u8>> {
    let nq = stack.nq();
    let k = stack.k();
    let d = stack.d();
    if nq == 0 || nq > u8::MAX as usize {
        return Err(Error::InvalidConfig(format!("layer count {nq} outside [1, 255]")));
    }
    if k == 0 || k > u16::MAX as usize {
        return Err(Error::InvalidConfig(format!("K {k} outside [1, 65535]")));
    }
    if d as u64 > u32::MAX as u64 {
        return Err(Error::InvalidConfig("entry dimension exceeds u32".into()));
    }
    let mut out = Vec::with_capacity(13 + 4 * nq * k * d);
    out.extend_from_slice(&CODEBOOK_MAGIC);
    out.push(FORMAT_VERSION);
    out.push(match stack.stream {
        StreamKind::Acoustic => 0,
        StreamKind::Semantic => 1,
    });
    out.push(nq as u8);
    out.extend_from_slice(&(k as u16).to_le_bytes());
    out.extend_from_slice(&(d as u32).to_le_bytes());
    for layer in stack.layers() {
        if layer.k() != k || layer.d() != d {
            return Err(Error::ShapeMismatch(format!(
                "layer with K={} D={} in a stack declared K={k} D={d}",
                layer.k(),
                layer.d()
            )));
        }
        for &v in layer.entries() {
            out.extend_from_slice(&(v.into_f64() as f32).to_le_bytes());
        }
    }
    Ok(out)
}

/// Parses HCBK bytes; the inverse of [`codebook_bytes`].
pub fn parse_codebooks<S: Scalar>(bytes: &[u8]) -> Result<RvqStack<S>> {
    let mut r = ByteReader::new(bytes);
    r.expect_magic(&CODEBOOK_MAGIC)?;
    r.expect_version()?;
    let stream_at = r.offset();
    let stream = match r.u8()? {
        0 => StreamKind::Acoustic,
        1 => StreamKind::Semantic,
        other => {
            return Err(corrupt(
                stream_at,
                format!("stream tag must be 0 or 1, got {other}"),
            ))
        }
    };
    let nq_at = r.offset();
    let nq = r.u8()? as usize;
    if nq == 0 {
        return Err(corrupt(nq_at, "no layers"));
    }
    let k_at = r.offset();
    let k = r.u16()? as usize;
    if k == 0 {
        return Err(corrupt(k_at, "K is zero"));
    }
    let d_at = r.offset();
    let d = r.u32()? as usize;
    if d == 0 {
        return Err(corrupt(d_at, "entry dimension is zero"));
    }
    let mut layers = Vec::with_capacity(nq);
    for _ in 0..nq {
        let mut entries = Vec::with_capacity(k * d);
        for _ in 0..k * d {
            let at = r.offset();
            let v = r.f32()?;
            if v.is_nan() {
                return Err(corrupt(at, "NaN in codebook entry"));
            }
            entries.push(S::of_f64(v as f64));
        }
        layers.push(Codebook::from_flat(entries, k, d)?);
    }
    r.expect_end()?;
    RvqStack::new(layers, stream)
}

pub fn write_codebooks<S: Scalar>(stack: &RvqStack<S>, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, codebook_bytes(stack)?)?;
    Ok(())
}

pub fn read_codebooks<S: Scalar>(path: impl AsRef<Path>) -> Result<RvqStack<S>> {
    parse_codebooks(&std::fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Random but structurally valid encoded clip.
    fn random_encoded(rng: &mut ChaCha8Rng) -> EncodedAudio {
        let k = *[1u16, 2, 17, 256, 1024].iter().filter(|&&kk| kk > 0).nth(rng.random_range(0..5)).unwrap();
        let dynamic = rng.random::<f64>() < 0.5;
        let d_max: u8 = if dynamic { rng.random_range(1..=8) } else { 1 };
        let t = rng.random_range(1..=40);
        let nq_a = rng.random_range(1..=4);
        let nq_s = rng.random_range(1..=2);
        let bound0 = k as u32 * d_max as u32;
        let partition = if dynamic {
            let durations: Vec<u32> = (0..t).map(|_| rng.random_range(1..=d_max as u32)).collect();
            Some(SegmentPartition::new(durations, d_max as usize).unwrap())
        } else {
            None
        };
        let mut make_grid = |nq: usize, stream: StreamKind| {
            let mut codes = Vec::with_capacity(nq * t);
            for l in 0..nq {
                let bound = if l == 0 { bound0 } else { k as u32 };
                for _ in 0..t {
                    codes.push(rng.random_range(0..bound) as u16);
                }
            }
            CodeGrid::new(codes, nq, t, stream).unwrap()
        };
        // Durations must agree between the partition and layer 0 of both
        // streams, because layer-0 codes embed them.
        let mut acoustic = make_grid(nq_a, StreamKind::Acoustic);
        let mut semantic = make_grid(nq_s, StreamKind::Semantic);
        if let Some(p) = &partition {
            for (t_idx, &dur) in p.durations().iter().enumerate() {
                for grid in [&mut acoustic, &mut semantic] {
                    let base = grid.layer(0)[t_idx] % k;
                    grid.layer_mut(0)[t_idx] = (dur as u16 - 1) * k + base;
                }
            }
        }
        EncodedAudio {
            acoustic,
            semantic,
            partition,
            original_len: rng.random_range(1..=1_000_000),
            sample_rate: [16_000u32, 24_000, 48_000][rng.random_range(0..3)],
            fps_nominal: Fps::new(rng.random_range(1..=50_000), rng.random_range(1..=64)),
            k: k as usize,
            d_max: d_max as usize,
            fingerprint: rng.random(),
        }
    }

    #[test]
    fn token_round_trip_is_identity_over_many_random_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..100 {
            let enc = random_encoded(&mut rng);
            let bytes = token_bytes(&enc).unwrap();
            let back = parse_tokens(&bytes).unwrap();
            assert_eq!(back, enc);
            // Canonical: re-serialization yields identical bytes.
            assert_eq!(token_bytes(&back).unwrap(), bytes);
        }
    }

    #[test]
    fn bad_magic_is_not_a_token_file() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut bytes = token_bytes(&random_encoded(&mut rng)).unwrap();
        bytes[0] = b'X';
        assert!(matches!(parse_tokens(&bytes), Err(Error::NotATokenFile)));
    }

    #[test]
    fn truncation_names_the_end_offset() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let bytes = token_bytes(&random_encoded(&mut rng)).unwrap();
        for cut in [3, 10, 20, 34, 42, bytes.len() - 1] {
            match parse_tokens(&bytes[..cut]) {
                Err(Error::CorruptFile { offset, .. }) => {
                    assert_eq!(offset, cut as u64, "cut at {cut}");
                }
                Err(Error::NotATokenFile) => assert!(cut < 4),
                other => panic!("cut {cut}: expected corruption, got {other:?}"),
            }
        }
    }

    #[test]
    fn zero_frames_are_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let enc = random_encoded(&mut rng);
        let mut bytes = token_bytes(&enc).unwrap();
        bytes[31..35].copy_from_slice(&0u32.to_le_bytes());
        match parse_tokens(&bytes) {
            Err(Error::CorruptFile { offset, detail }) => {
                assert_eq!(offset, 31);
                assert!(detail.contains("zero frames"), "{detail}");
            }
            other => panic!("expected corruption at 31, got {other:?}"),
        }
    }

    #[test]
    fn out_of_range_code_names_its_byte_offset() {
        // Static file, K=17, d_max=1: any code >= 17 in layer 0 is invalid.
        let k: u16 = 17;
        let t = 5;
        let grid = |stream| CodeGrid::new(vec![1u16; t], 1, t, stream).unwrap();
        let enc = EncodedAudio {
            acoustic: grid(StreamKind::Acoustic),
            semantic: grid(StreamKind::Semantic),
            partition: None,
            original_len: 1000,
            sample_rate: 16_000,
            fps_nominal: Fps::new(25, 1),
            k: k as usize,
            d_max: 1,
            fingerprint: 7,
        };
        let mut bytes = token_bytes(&enc).unwrap();
        // Corrupt the third acoustic code: header is 43 bytes, cells are u16.
        let bad_at = 43 + 2 * 2;
        bytes[bad_at..bad_at + 2].copy_from_slice(&500u16.to_le_bytes());
        match parse_tokens(&bytes) {
            Err(Error::CodeOutOfRange { code, max, offset }) => {
                assert_eq!(code, 500);
                assert_eq!(max, 16);
                assert_eq!(offset, Some(bad_at as u64));
            }
            other => panic!("expected CodeOutOfRange, got {other:?}"),
        }
    }

    #[test]
    fn max_duration_code_8191_round_trips() {
        // K=1024, d_max=8: top duration-embedded code is 8191 and fits u16.
        let k: u16 = 1024;
        let d_max: u8 = 8;
        let t = 3;
        let top = (k as u32 * d_max as u32 - 1) as u16;
        assert_eq!(top, 8191);
        let partition = SegmentPartition::new(vec![8, 8, 8], d_max as usize).unwrap();
        let grid = |stream| CodeGrid::new(vec![top; t], 1, t, stream).unwrap();
        let enc = EncodedAudio {
            acoustic: grid(StreamKind::Acoustic),
            semantic: grid(StreamKind::Semantic),
            partition: Some(partition),
            original_len: 123,
            sample_rate: 16_000,
            fps_nominal: Fps::new(25, 1),
            k: k as usize,
            d_max: d_max as usize,
            fingerprint: 1,
        };
        let back = parse_tokens(&token_bytes(&enc).unwrap()).unwrap();
        assert_eq!(back, enc);
    }

    #[test]
    fn trailing_bytes_are_corruption() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let enc = random_encoded(&mut rng);
        let mut bytes = token_bytes(&enc).unwrap();
        let expected = bytes.len() as u64;
        bytes.push(0);
        match parse_tokens(&bytes) {
            Err(Error::CorruptFile { offset, .. }) => assert_eq!(offset, expected),
            other => panic!("expected trailing-byte corruption, got {other:?}"),
        }
    }

    #[test]
    fn feature_round_trip_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let t = rng.random_range(1..=30);
            let d = rng.random_range(1..=16);
            // f32-representable values so the round trip is exact.
            let data: Vec<f64> = (0..t * d)
                .map(|_| (rng.random::<f32>() * 2.0 - 1.0) as f64)
                .collect();
            let fps = Fps::new(rng.random_range(1..=100), rng.random_range(1..=8));
            let fm =
                FeatureMatrix::new(data, t, d, fps.as_f64(), FeatureKind::SemanticExternal)
                    .unwrap();
            let bytes = feature_bytes(&fm, fps).unwrap();
            let (back, back_fps) = parse_features::<f64>(&bytes).unwrap();
            assert_eq!(back.data(), fm.data());
            assert_eq!(back.t(), t);
            assert_eq!(back.d(), d);
            assert!(fps_compatible(back_fps, fps));
            assert_eq!(feature_bytes(&back, back_fps).unwrap(), bytes);
        }
    }

    #[test]
    fn nan_payload_is_rejected_with_its_offset() {
        let fm = FeatureMatrix::new(
            vec![0.5f64; 6],
            2,
            3,
            25.0,
            FeatureKind::SemanticExternal,
        )
        .unwrap();
        let mut bytes = feature_bytes(&fm, Fps::new(25, 1)).unwrap();
        // Fourth value: header is 20 bytes, f32 cells.
        let at = 20 + 3 * 4;
        bytes[at..at + 4].copy_from_slice(&f32::NAN.to_le_bytes());
        match parse_features::<f64>(&bytes) {
            Err(Error::CorruptFile { offset, detail }) => {
                assert_eq!(offset, at as u64);
                assert!(detail.contains("NaN"), "{detail}");
            }
            other => panic!("expected NaN rejection, got {other:?}"),
        }
    }

    #[test]
    fn feature_size_mismatch_is_corruption() {
        let fm = FeatureMatrix::new(
            vec![0.5f64; 6],
            2,
            3,
            25.0,
            FeatureKind::SemanticExternal,
        )
        .unwrap();
        let bytes = feature_bytes(&fm, Fps::new(25, 1)).unwrap();
        assert!(matches!(
            parse_features::<f64>(&bytes[..bytes.len() - 2]),
            Err(Error::CorruptFile { .. })
        ));
    }

    #[test]
    fn fps_compatibility_is_rational_not_floating() {
        assert!(fps_compatible(Fps { num: 25, den: 1 }, Fps { num: 50, den: 2 }));
        assert!(!fps_compatible(Fps::new(25, 1), Fps::new(50, 1)));
        // The documented check: a 25 fps feature file works with a 25 fps
        // codec; a 50 fps file does not.
        let codec_fps = Fps::new(16_000, 640);
        assert!(fps_compatible(Fps::new(25, 1), codec_fps));
        assert!(!fps_compatible(Fps::new(50, 1), codec_fps));
    }

    #[test]
    fn codebook_round_trip_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for &stream in &[StreamKind::Acoustic, StreamKind::Semantic] {
            let nq = 3;
            let k = 5;
            let d = 4;
            let layers: Vec<Codebook<f64>> = (0..nq)
                .map(|_| {
                    let entries: Vec<f64> = (0..k * d)
                        .map(|_| (rng.random::<f32>() * 2.0 - 1.0) as f64)
                        .collect();
                    Codebook::from_flat(entries, k, d).unwrap()
                })
                .collect();
            let stack = RvqStack::new(layers, stream).unwrap();
            let bytes = codebook_bytes(&stack).unwrap();
            let back = parse_codebooks::<f64>(&bytes).unwrap();
            assert_eq!(back.stream, stream);
            assert_eq!(back.nq(), nq);
            for (a, b) in back.layers().iter().zip(stack.layers().iter()) {
                assert_eq!(a.entries(), b.entries());
            }
            assert_eq!(codebook_bytes(&back).unwrap(), bytes);
        }
    }

    #[test]
    fn codebook_nan_entry_is_rejected() {
        let layers = vec![Codebook::from_flat(vec![0.5f64; 8], 2, 4).unwrap()];
        let stack = RvqStack::new(layers, StreamKind::Acoustic).unwrap();
        let mut bytes = codebook_bytes(&stack).unwrap();
        bytes[13..17].copy_from_slice(&f32::NAN.to_le_bytes());
        match parse_codebooks::<f64>(&bytes) {
            Err(Error::CorruptFile { offset, .. }) => assert_eq!(offset, 13),
            other => panic!("expected NaN rejection, got {other:?}"),
        }
    }

    #[test]
    fn file_level_round_trip_through_disk() {
        let dir = std::env::temp_dir().join("hcodec-store-test");
        std::fs::create_dir_all(&dir).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let enc = random_encoded(&mut rng);
        let path = dir.join("clip.htok");
        write_tokens(&enc, &path).unwrap();
        let back = read_tokens(&path).unwrap();
        assert_eq!(back, enc);
        std::fs::remove_dir_all(&dir).ok();
    }
}
