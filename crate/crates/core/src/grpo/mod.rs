//! FoldGRPO training signals: process-reward labeling, group-relative
//! advantages, the clipped objective and per-thread training examples.
//!
//! Everything is generic over the scalar type; per-token vectors are laid out
//! turn by turn, each turn's action tokens followed by its observation tokens.

mod advantage;
mod examples;
mod labels;
mod objective;

use num_traits::Float;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

pub use advantage::{compute_advantages, GroupMember, RewardedGroup};
pub use examples::{emit_training_examples, LogprobSupplier, Part, PseudoLogprobs, Segment, TrainingExample};
pub use labels::{label_process_rewards, label_with_counts, PenaltyCounts};
pub use objective::{evaluate_objective, ObjectiveError, ObjectiveReport};

use crate::context::Turn;

pub const UNFOLDED_PENALTY: f64 = -1.0;
pub const OUT_OF_SCOPE_PENALTY: f64 = -0.2;
pub const FAILURE_PENALTY: f64 = -1.0;
/// Fraction of the active limit above which the main thread counts as unfolded.
pub const UNFOLDED_THRESHOLD: f64 = 0.5;
pub const DEFAULT_GROUP_SIZE: usize = 8;

pub(crate) fn lit<F: Float>(x: f64) -> F {
    F::from(x).expect("constant is representable")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClipConfig<F> {
    pub eps_low: F,
    pub eps_high: F,
}

impl<F: Float> Default for ClipConfig<F> {
    fn default() -> Self {
        Self { eps_low: lit(0.2), eps_high: lit(0.28) }
    }
}

impl<F: Float> ClipConfig<F> {
    pub fn is_valid(&self) -> bool {
        F::zero() < self.eps_low && self.eps_low <= self.eps_high && self.eps_high < F::one()
    }
}

/// Start offset of every turn's action and observation tokens in the flat
/// per-token layout, plus the total length.
pub(crate) fn token_layout(turns: &[Turn]) -> (Vec<(usize, usize)>, usize) {
    let mut offsets = Vec::with_capacity(turns.len());
    let mut pos = 0;
    for t in turns {
        let a = pos;
        pos += t.action_tokens().len();
        offsets.push((a, pos));
        pos += t.observation_tokens().len();
    }
    (offsets, pos)
}

/// Per-token LLM mask: true on generated (action) tokens only.
pub fn llm_mask(turns: &[Turn]) -> Vec<bool> {
    turns
        .iter()
        .flat_map(|t| t.action_tokens().iter().chain(t.observation_tokens()).map(|tok| tok.is_generated()))
        .collect()
}

/// Serde adapter storing per-token vectors as `[value, run_length]` pairs.
pub(crate) mod runs {
    use serde::de::DeserializeOwned;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<T: Serialize + PartialEq, S: Serializer>(v: &[T], s: S) -> Result<S::Ok, S::Error> {
        let mut out: Vec<(&T, usize)> = Vec::new();
        for x in v {
            match out.last_mut() {
                Some((y, n)) if *y == x => *n += 1,
                _ => out.push((x, 1)),
            }
        }
        out.serialize(s)
    }

    pub fn deserialize<'de, T: DeserializeOwned + Clone, D: Deserializer<'de>>(d: D) -> Result<Vec<T>, D::Error> {
        let pairs: Vec<(T, usize)> = Vec::deserialize(d)?;
        Ok(pairs.into_iter().flat_map(|(x, n)| std::iter::repeat_n(x, n)).collect())
    }
}

pub const GROUPS_FORMAT: &str = "context-fold-groups";
pub const EXAMPLES_FORMAT: &str = "context-fold-examples";
pub const FILE_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct JsonlHeader {
    format: String,
    version: u32,
    config: serde_json::Value,
}

/// Writes a header line embedding `config`, then one compact record per line.
pub fn write_versioned_jsonl<W: std::io::Write, T: Serialize>(
    mut out: W,
    format: &str,
    config: &serde_json::Value,
    items: &[T],
) -> std::io::Result<()> {
    let header = JsonlHeader { format: format.to_string(), version: FILE_VERSION, config: config.clone() };
    serde_json::to_writer(&mut out, &header)?;
    out.write_all(b"\n")?;
    for item in items {
        serde_json::to_writer(&mut out, item)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

/// Reads a file written by [`write_versioned_jsonl`].
pub fn read_versioned_jsonl<R: std::io::BufRead, T: DeserializeOwned>(
    input: R,
    format: &str,
) -> Result<(serde_json::Value, Vec<T>), String> {
    let mut lines = input.lines();
    let first = lines.next().ok_or("empty file")?.map_err(|e| e.to_string())?;
    let header: JsonlHeader = serde_json::from_str(&first).map_err(|e| format!("header: {e}"))?;
    if header.format != format || header.version != FILE_VERSION {
        return Err(format!("expected {format} v{FILE_VERSION}, found {} v{}", header.format, header.version));
    }
    let mut items = Vec::new();
    for (n, line) in lines.enumerate() {
        let line = line.map_err(|e| e.to_string())?;
        if line.trim().is_empty() {
            continue;
        }
        items.push(serde_json::from_str(&line).map_err(|e| format!("line {}: {e}", n + 2))?);
    }
    Ok((header.config, items))
}
