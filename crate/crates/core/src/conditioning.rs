//! Task-mode conditioning: the prefix an audio language model consumes
//! before generating tokens.
//!
//! Each operational mode owns a reserved task token and a fixed, ordered
//! list of condition kinds. A conditioning sequence is the embedded
//! conditions in that order, the task token, and a generation-start marker.
//! Task-token ids live strictly above the code vocabulary and the PAD
//! symbol, so the three id families never collide.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::signal::{FeatureKind, FeatureMatrix};
use crate::util::fnv1a64;

/// Operational modes. `rTSE` also answers to the manifest alias `SS`,
/// which [`TaskMode::parse`] reports as an alias so audits can flag it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TaskMode {
    /// Speech restoration.
    #[serde(rename = "SR")]
    Sr,
    /// Target-speaker extraction.
    #[serde(rename = "TSE")]
    Tse,
    /// Reverse target-speaker extraction (remove the enrolled speaker).
    #[serde(rename = "rTSE", alias = "SS")]
    RTse,
    /// Voice conversion.
    #[serde(rename = "VC")]
    Vc,
    /// Language-queried audio separation.
    #[serde(rename = "LASS")]
    Lass,
    /// Instruction-driven speech editing.
    #[serde(rename = "EDIT_S")]
    EditSpeech,
    /// Instruction-driven general-audio editing.
    #[serde(rename = "EDIT_A")]
    EditAudio,
}

impl TaskMode {
    /// All modes in table order.
    pub const ALL: [TaskMode; 7] = [
        TaskMode::Sr,
        TaskMode::Tse,
        TaskMode::RTse,
        TaskMode::Vc,
        TaskMode::Lass,
        TaskMode::EditSpeech,
        TaskMode::EditAudio,
    ];

    pub fn canonical_name(&self) -> &'static str {
        match self {
            TaskMode::Sr => "SR",
            TaskMode::Tse => "TSE",
            TaskMode::RTse => "rTSE",
            TaskMode::Vc => "VC",
            TaskMode::Lass => "LASS",
            TaskMode::EditSpeech => "EDIT_S",
            TaskMode::EditAudio => "EDIT_A",
        }
    }

    /// Parses a mode name (case-insensitive, `-`/`_` interchangeable).
    /// The second value is true when an alias was used (`SS` for `rTSE`),
    /// so callers can surface it.
    pub fn parse(s: &str) -> Result<(TaskMode, bool)> {
        let norm = s.trim().to_ascii_lowercase().replace('-', "_");
        let mode = match norm.as_str() {
            "sr" => TaskMode::Sr,
            "tse" => TaskMode::Tse,
            "rtse" => TaskMode::RTse,
            "ss" => return Ok((TaskMode::RTse, true)),
            "vc" => TaskMode::Vc,
            "lass" => TaskMode::Lass,
            "edit_s" => TaskMode::EditSpeech,
            "edit_a" => TaskMode::EditAudio,
            _ => {
                return Err(Error::InvalidConfig(format!(
                    "unknown task mode {s:?}; known modes: SR, TSE, rTSE, VC, LASS, EDIT_S, EDIT_A (alias SS)"
                )))
            }
        };
        Ok((mode, false))
    }

    /// Ordered condition kinds this mode requires.
    pub fn expected_conditions(&self) -> &'static [ConditionKind] {
        match self {
            TaskMode::Sr => &[ConditionKind::DegradedSpeech],
            TaskMode::Tse | TaskMode::RTse => {
                &[ConditionKind::ReferenceSpeech, ConditionKind::MixtureSpeech]
            }
            TaskMode::Vc => &[ConditionKind::ReferenceSpeech, ConditionKind::SourceSpeech],
            TaskMode::Lass => &[ConditionKind::Caption, ConditionKind::MixtureAudio],
            TaskMode::EditSpeech => &[ConditionKind::Instruction, ConditionKind::SourceSpeech],
            TaskMode::EditAudio => &[ConditionKind::Instruction, ConditionKind::SourceAudio],
        }
    }

    fn ordinal(&self) -> u32 {
        Self::ALL.iter().position(|m| m == self).unwrap() as u32
    }
}

impl fmt::Display for TaskMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.canonical_name())
    }
}

impl std::str::FromStr for TaskMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(TaskMode::parse(s)?.0)
    }
}

/// Reserved-id layout for one codec vocabulary: codes occupy
/// `[0, k*d_max)`, PAD is `k*d_max`, task tokens and the generation-start
/// marker sit strictly above.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TokenVocab {
    pub k: u16,
    pub d_max: u8,
}

impl TokenVocab {
    pub fn new(k: u16, d_max: u8) -> Result<Self> {
        if k == 0 || d_max == 0 {
            return Err(Error::InvalidConfig(
                "vocabulary needs k >= 1 and d_max >= 1".into(),
            ));
        }
        Ok(TokenVocab { k, d_max })
    }

    /// Number of duration-embedded code ids: `k * d_max`.
    pub fn code_count(&self) -> u32 {
        self.k as u32 * self.d_max as u32
    }

    /// PAD symbol used by the delay pattern.
    pub fn pad_id(&self) -> u32 {
        self.code_count()
    }

    /// Reserved token for a task mode; disjoint from codes and PAD.
    pub fn task_token_id(&self, mode: TaskMode) -> u32 {
        self.pad_id() + 1 + mode.ordinal()
    }

    /// Marker that closes the prefix and opens the generation region.
    pub fn generation_start_id(&self) -> u32 {
        self.pad_id() + 1 + TaskMode::ALL.len() as u32
    }

    /// Total ids: codes, PAD, 7 task tokens, generation marker.
    pub fn vocab_size(&self) -> u32 {
        self.generation_start_id() + 1
    }
}

/// What a condition slot carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ConditionKind {
    DegradedSpeech,
    ReferenceSpeech,
    MixtureSpeech,
    SourceSpeech,
    Caption,
    MixtureAudio,
    Instruction,
    SourceAudio,
}

impl ConditionKind {
    pub const ALL: [ConditionKind; 8] = [
        ConditionKind::DegradedSpeech,
        ConditionKind::ReferenceSpeech,
        ConditionKind::MixtureSpeech,
        ConditionKind::SourceSpeech,
        ConditionKind::Caption,
        ConditionKind::MixtureAudio,
        ConditionKind::Instruction,
        ConditionKind::SourceAudio,
    ];

    /// Caption and Instruction are text; everything else is audio-derived
    /// features.
    pub fn is_text(&self) -> bool {
        matches!(self, ConditionKind::Caption | ConditionKind::Instruction)
    }

    pub fn name(&self) -> &'static str {
        match self {
            ConditionKind::DegradedSpeech => "DegradedSpeech",
            ConditionKind::ReferenceSpeech => "ReferenceSpeech",
            ConditionKind::MixtureSpeech => "MixtureSpeech",
            ConditionKind::SourceSpeech => "SourceSpeech",
            ConditionKind::Caption => "Caption",
            ConditionKind::MixtureAudio => "MixtureAudio",
            ConditionKind::Instruction => "Instruction",
            ConditionKind::SourceAudio => "SourceAudio",
        }
    }
}

impl fmt::Display for ConditionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Payload of one condition: extracted features for audio kinds, raw text
/// for Caption/Instruction.
#[derive(Debug, Clone, PartialEq)]
pub enum ConditionPayload<S: Scalar> {
    Features(FeatureMatrix<S>),
    Text(String),
}

/// One condition slot before embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct Condition<S: Scalar> {
    pub kind: ConditionKind,
    pub payload: ConditionPayload<S>,
}

impl<S: Scalar> Condition<S> {
    /// Text condition; only Caption and Instruction accept text.
    pub fn text(kind: ConditionKind, text: impl Into<String>) -> Result<Self> {
        if !kind.is_text() {
            return Err(Error::InvalidConfig(format!(
                "{kind} carries features, not text"
            )));
        }
        Ok(Condition {
            kind,
            payload: ConditionPayload::Text(text.into()),
        })
    }

    /// Feature condition; rejected for the two text kinds.
    pub fn features(kind: ConditionKind, features: FeatureMatrix<S>) -> Result<Self> {
        if kind.is_text() {
            return Err(Error::InvalidConfig(format!(
                "{kind} carries text, not features"
            )));
        }
        Ok(Condition {
            kind,
            payload: ConditionPayload::Features(features),
        })
    }
}

/// A condition slot after text embedding: every slot is features.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddedCondition<S: Scalar> {
    pub kind: ConditionKind,
    pub features: FeatureMatrix<S>,
}

/// The assembled LM prefix, in feed order: `slots`, then `task_token`,
/// then `generation_start`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditioningSequence<S: Scalar> {
    pub mode: TaskMode,
    pub slots: Vec<EmbeddedCondition<S>>,
    pub task_token: u32,
    pub generation_start: u32,
}

/// Plug-in point for a real text encoder; the default is a deterministic
/// hash embedding.
pub trait TextEmbedder<S: Scalar> {
    fn dim(&self) -> usize;
    fn embed(&self, text: &str) -> Result<FeatureMatrix<S>>;
}

/// Deterministic text embedding: one frame per whitespace-separated word,
/// values drawn from a ChaCha8 stream seeded by the word's FNV-1a hash
/// mixed with its position.
#[derive(Debug, Clone, Copy)]
pub struct HashEmbedder {
    pub dim: usize,
}

impl Default for HashEmbedder {
    fn default() -> Self {
        HashEmbedder { dim: 64 }
    }
}

impl<S: Scalar> TextEmbedder<S> for HashEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<FeatureMatrix<S>> {
        let words: Vec<&str> = text.split_whitespace().collect();
        if words.is_empty() {
            return Err(Error::EmptyCondition);
        }
        let mut data = Vec::with_capacity(words.len() * self.dim);
        for (pos, word) in words.iter().enumerate() {
            let seed =
                fnv1a64(word.as_bytes()) ^ (pos as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for _ in 0..self.dim {
                data.push(S::of_f64(rng.random::<f64>() * 2.0 - 1.0));
            }
        }
        FeatureMatrix::new(
            data,
            words.len(),
            self.dim,
            1.0,
            FeatureKind::SemanticExternal,
        )
    }
}

fn kinds_summary(kinds: &[ConditionKind]) -> String {
    if kinds.is_empty() {
        "(none)".to_string()
    } else {
        kinds
            .iter()
            .map(|k| k.name())
            .collect::<Vec<_>>()
            .join(", ")
    }
}

/// [`assemble_with`] using the default [`HashEmbedder`].
pub fn assemble<S: Scalar>(
    mode: TaskMode,
    conds: Vec<Condition<S>>,
    vocab: &TokenVocab,
) -> Result<ConditioningSequence<S>> {
    assemble_with(mode, conds, vocab, &HashEmbedder::default())
}

/// Validates the condition kinds against the mode's table row (exact kinds,
/// exact order), embeds text payloads, and returns the prefix sequence.
pub fn assemble_with<S: Scalar>(
    mode: TaskMode,
    conds: Vec<Condition<S>>,
    vocab: &TokenVocab,
    embedder: &dyn TextEmbedder<S>,
) -> Result<ConditioningSequence<S>> {
    let expected = mode.expected_conditions();
    let got: Vec<ConditionKind> = conds.iter().map(|c| c.kind).collect();
    if got != expected {
        return Err(Error::ConditionMismatch {
            mode: mode.to_string(),
            expected: kinds_summary(expected),
            got: kinds_summary(&got),
        });
    }
    let mut slots = Vec::with_capacity(conds.len());
    for cond in conds {
        let features = match cond.payload {
            ConditionPayload::Text(text) => {
                if text.trim().is_empty() {
                    return Err(Error::EmptyCondition);
                }
                if !cond.kind.is_text() {
                    return Err(Error::InvalidConfig(format!(
                        "{} carries features, not text",
                        cond.kind
                    )));
                }
                embedder.embed(&text)?
            }
            ConditionPayload::Features(fm) => {
                if cond.kind.is_text() {
                    return Err(Error::InvalidConfig(format!(
                        "{} carries text, not features",
                        cond.kind
                    )));
                }
                fm
            }
        };
        slots.push(EmbeddedCondition {
            kind: cond.kind,
            features,
        });
    }
    Ok(ConditioningSequence {
        mode,
        slots,
        task_token: vocab.task_token_id(mode),
        generation_start: vocab.generation_start_id(),
    })
}

/// One audit row: a mode, its ordered condition kinds, and any accepted
/// manifest aliases.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableRow {
    pub mode: TaskMode,
    pub conditions: &'static [ConditionKind],
    pub aliases: &'static [&'static str],
}

/// The full mode/condition matrix, for audit and the `modes` command.
/// Exactly seven rows, in table order.
pub fn validate_table() -> Vec<TableRow> {
    TaskMode::ALL
        .iter()
        .map(|&mode| TableRow {
            mode,
            conditions: mode.expected_conditions(),
            aliases: if mode == TaskMode::RTse { &["SS"] } else { &[] },
        })
        .collect()
}

/// JSON manifest for a conditioning request:
/// `{"mode": "LASS", "conditions": [{"kind": "Caption", "text": ...},
/// {"kind": "MixtureAudio", "path": ...}]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionManifest {
    pub mode: String,
    pub conditions: Vec<ManifestEntry>,
}

/// One manifest slot: text kinds carry `text`, audio kinds carry `path`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub kind: ConditionKind,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub text: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub path: Option<String>,
}

impl ConditionManifest {
    pub fn from_json(json: &str) -> Result<Self> {
        serde_json::from_str(json)
            .map_err(|e| Error::InvalidConfig(format!("bad condition manifest: {e}")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serialization cannot fail")
    }

    /// Mode named by the manifest; the flag reports alias use (`SS`).
    pub fn parse_mode(&self) -> Result<(TaskMode, bool)> {
        TaskMode::parse(&self.mode)
    }
}
