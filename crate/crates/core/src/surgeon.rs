//! Vocabulary trimming of checkpoints.
//!
//! A [`TrimPlan`] maps each retained original id to its rank among the
//! retained ids, so new ids keep the original relative order. Every tensor
//! with a vocabulary axis is gathered along that axis with the plan; every
//! other tensor is carried over byte for byte.

use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use regex::Regex;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::selection::Selection;
use crate::tensor_store::{TensorEntry, TensorFile};
use crate::tokenizer::{TokenId, Vocab};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TrimPlan {
    pub old_vocab_size: usize,
    pub kept_old_ids: Vec<TokenId>,
    pub new_tokens: Vec<String>,
}

impl TrimPlan {
    pub fn identity(vocab: &Vocab) -> TrimPlan {
        TrimPlan {
            old_vocab_size: vocab.len(),
            kept_old_ids: (0..vocab.len() as TokenId).collect(),
            new_tokens: vocab.tokens().to_vec(),
        }
    }

    pub fn new_vocab_size(&self) -> usize {
        self.kept_old_ids.len()
    }

    /// New id of a retained original id.
    pub fn remap(&self, old_id: TokenId) -> Option<TokenId> {
        self.kept_old_ids
            .binary_search(&old_id)
            .ok()
            .map(|rank| rank as TokenId)
    }

    pub fn is_identity(&self) -> bool {
        self.kept_old_ids.len() == self.old_vocab_size
    }

    /// The trimmed vocabulary, carrying over the original's options.
    pub fn trimmed_vocab(&self, original: &Vocab) -> Result<Vocab> {
        Vocab::with_options(self.new_tokens.iter().cloned(), original.options().clone())
    }

    pub fn vocab_bytes(&self) -> Vec<u8> {
        let mut bytes = Vec::new();
        for token in &self.new_tokens {
            bytes.extend_from_slice(token.as_bytes());
            bytes.push(b'\n');
        }
        bytes
    }
}

pub fn build_trim_plan(sel: &Selection, vocab: &Vocab) -> Result<TrimPlan> {
    sel.check_against(vocab)?;
    let new_tokens = sel
        .selected_ids
        .iter()
        .map(|&id| vocab.tokens()[id as usize].clone())
        .collect();
    Ok(TrimPlan {
        old_vocab_size: vocab.len(),
        kept_old_ids: sel.selected_ids.clone(),
        new_tokens,
    })
}

/// Writes the retained tokens one per line; loading the file back assigns
/// exactly the plan's new ids.
pub fn emit_trimmed_vocab(plan: &TrimPlan, path: impl AsRef<Path>) -> Result<()> {
    crate::io::write_bytes_atomic(path.as_ref(), &plan.vocab_bytes())
}

/// Gathers the retained rows of `t` along `axis`.
pub fn slice_vocab_axis(t: &TensorEntry, plan: &TrimPlan, axis: usize) -> Result<TensorEntry> {
    let shape = t.shape();
    if axis >= shape.len() {
        return Err(Error::Container(format!(
            "axis {axis} out of range for shape {shape:?}"
        )));
    }
    if shape[axis] != plan.old_vocab_size {
        return Err(Error::Container(format!(
            "axis {axis} of shape {shape:?} is not the vocabulary size {}",
            plan.old_vocab_size
        )));
    }
    let outer: usize = shape[..axis].iter().product();
    let row_bytes: usize = shape[axis + 1..].iter().product::<usize>() * t.dtype().size();
    let block = plan.old_vocab_size * row_bytes;
    let src = t.data();

    let mut data = Vec::with_capacity(outer * plan.kept_old_ids.len() * row_bytes);
    for o in 0..outer {
        let base = o * block;
        for &id in &plan.kept_old_ids {
            let start = base + id as usize * row_bytes;
            data.extend_from_slice(&src[start..start + row_bytes]);
        }
    }
    let mut new_shape = shape.to_vec();
    new_shape[axis] = plan.kept_old_ids.len();
    TensorEntry::new(t.dtype(), new_shape, data)
}

/// Selects tensors to slice by name. Written as `REGEX` or `REGEX:AXIS`; without
/// an axis the unique axis matching the vocabulary size is used.
#[derive(Clone, Debug)]
pub struct VocabAxisRule {
    pub pattern: Regex,
    pub axis: Option<usize>,
}

impl VocabAxisRule {
    pub fn matches(&self, name: &str) -> bool {
        self.pattern.is_match(name)
    }
}

impl FromStr for VocabAxisRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (pattern, axis) = match s.rsplit_once(':') {
            Some((p, a)) if !a.is_empty() && a.bytes().all(|b| b.is_ascii_digit()) => {
                (p, Some(a.parse().map_err(|_| Error::InvalidRule(s.to_string()))?))
            }
            _ => (s, None),
        };
        let pattern = Regex::new(pattern).map_err(|_| Error::InvalidRule(s.to_string()))?;
        Ok(VocabAxisRule { pattern, axis })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TensorReport {
    pub name: String,
    pub shape_old: Vec<usize>,
    pub shape_new: Vec<usize>,
    pub params_old: u64,
    pub params_new: u64,
    pub sliced_axis: Option<usize>,
}

/// Parameter accounting for one trim.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ModelReport {
    pub old_vocab_size: usize,
    pub new_vocab_size: usize,
    pub hidden_size: Option<usize>,
    pub embedding_tensor: Option<String>,
    pub tensor_params: Vec<TensorReport>,
    pub total_params_old: u64,
    pub total_params_new: u64,
    /// Percentage of the trimmed model's parameters held by the word embedding.
    pub embedding_share: f64,
    pub embedding_share_old: f64,
    pub reduction_pct: f64,
    pub predicted_file_bytes: u64,
    pub original_file_bytes: u64,
}

impl ModelReport {
    pub fn to_json(&self) -> Result<Vec<u8>> {
        let mut bytes = serde_json::to_vec_pretty(self)?;
        bytes.push(b'\n');
        Ok(bytes)
    }
}

fn vocab_axes(shape: &[usize], vocab_size: usize) -> Vec<usize> {
    shape
        .iter()
        .enumerate()
        .filter(|&(_, &d)| d == vocab_size)
        .map(|(i, _)| i)
        .collect()
}

fn axis_for(name: &str, entry: &TensorEntry, plan: &TrimPlan, rules: &[VocabAxisRule]) -> Result<Option<usize>> {
    let v = plan.old_vocab_size;
    if rules.is_empty() {
        return match vocab_axes(entry.shape(), v)[..] {
            [] => Ok(None),
            [axis] => Ok(Some(axis)),
            _ => Err(Error::tensor(
                name,
                format!("several axes equal the vocabulary size {v}; pass an explicit NAME:AXIS rule"),
            )),
        };
    }
    let Some(rule) = rules.iter().find(|r| r.matches(name)) else {
        return Ok(None);
    };
    if let Some(axis) = rule.axis {
        return match entry.shape().get(axis) {
            Some(&d) if d == v => Ok(Some(axis)),
            _ => Err(Error::tensor(
                name,
                format!("axis {axis} of shape {:?} is not the vocabulary size {v}", entry.shape()),
            )),
        };
    }
    match vocab_axes(entry.shape(), v)[..] {
        [] => Err(Error::tensor(
            name,
            format!("matches a vocab-axis rule but has no axis of length {v}"),
        )),
        [axis] => Ok(Some(axis)),
        _ => Err(Error::tensor(
            name,
            format!("several axes equal the vocabulary size {v}; add :AXIS to the rule"),
        )),
    }
}

fn pct(part: u64, whole: u64) -> f64 {
    if whole == 0 {
        0.0
    } else {
        100.0 * part as f64 / whole as f64
    }
}

/// Slices every vocabulary-axis tensor of `tf` with `plan` and copies the
/// rest unchanged.
///
/// With no rules, a tensor is sliced when exactly one of its axes has the
/// original vocabulary size. When rules are given only matching tensors are
/// sliced. If the hidden size happens to equal the vocabulary size, auto
/// detection refuses square tensors and explicit rules are required.
pub fn trim_model(tf: &TensorFile, plan: &TrimPlan, rules: &[VocabAxisRule]) -> Result<(TensorFile, ModelReport)> {
    let axes = tf
        .entries
        .iter()
        .map(|(name, entry)| axis_for(name, entry, plan, rules))
        .collect::<Result<Vec<_>>>()?;
    if axes.iter().all(Option::is_none) {
        return Err(Error::NothingToTrim {
            vocab_size: plan.old_vocab_size,
        });
    }

    let jobs: Vec<_> = tf.entries.iter().zip(&axes).collect();
    let sliced: Vec<(String, TensorEntry)> = jobs
        .into_par_iter()
        .map(|((name, entry), axis)| {
            let out = match axis {
                Some(axis) => slice_vocab_axis(entry, plan, *axis)
                    .map_err(|e| Error::tensor(name, e.to_string()))?,
                None => entry.clone(),
            };
            Ok((name.clone(), out))
        })
        .collect::<Result<_>>()?;

    let mut out = TensorFile {
        entries: Default::default(),
        metadata: tf.metadata.clone(),
    };
    let mut tensor_params = Vec::with_capacity(sliced.len());
    for (((name, old), axis), (_, new)) in tf.entries.iter().zip(&axes).zip(&sliced) {
        tensor_params.push(TensorReport {
            name: name.clone(),
            shape_old: old.shape().to_vec(),
            shape_new: new.shape().to_vec(),
            params_old: old.numel() as u64,
            params_new: new.numel() as u64,
            sliced_axis: *axis,
        });
    }
    for (name, entry) in sliced {
        out.entries.insert(name, entry);
    }

    let embedding = find_word_embedding(&tensor_params);
    let total_params_old = tf.total_params();
    let total_params_new = out.total_params();
    let report = ModelReport {
        old_vocab_size: plan.old_vocab_size,
        new_vocab_size: plan.new_vocab_size(),
        hidden_size: embedding.map(|t| t.shape_old[1]),
        embedding_tensor: embedding.map(|t| t.name.clone()),
        embedding_share: pct(embedding.map_or(0, |t| t.params_new), total_params_new),
        embedding_share_old: pct(embedding.map_or(0, |t| t.params_old), total_params_old),
        reduction_pct: if total_params_old == 0 {
            0.0
        } else {
            100.0 * (1.0 - total_params_new as f64 / total_params_old as f64)
        },
        predicted_file_bytes: out.serialized_size(),
        original_file_bytes: tf.serialized_size(),
        tensor_params,
        total_params_old,
        total_params_new,
    };
    Ok((out, report))
}

/// The 2-D tensor sliced along axis 0, preferring a name that mentions word
/// embeddings.
fn find_word_embedding(tensors: &[TensorReport]) -> Option<&TensorReport> {
    let candidates = || {
        tensors
            .iter()
            .filter(|t| t.sliced_axis == Some(0) && t.shape_old.len() == 2)
    };
    candidates()
        .find(|t| t.name.contains("word_embeddings"))
        .or_else(|| candidates().max_by_key(|t| t.params_old))
}

/// Dimensions of a BERT encoder.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct BertArch {
    pub hidden: u64,
    pub layers: u64,
    pub heads: u64,
    pub intermediate: u64,
    pub max_positions: u64,
    pub type_vocab: u64,
}

impl BertArch {
    /// The base configuration shared by the English and multilingual models.
    pub const BASE: BertArch = BertArch {
        hidden: 768,
        layers: 12,
        heads: 12,
        intermediate: 3072,
        max_positions: 512,
        type_vocab: 2,
    };

    pub fn non_vocab_params(&self) -> u64 {
        let h = self.hidden;
        let i = self.intermediate;
        let embeddings = (self.max_positions + self.type_vocab) * h + 2 * h;
        // attention q/k/v/o with biases, feed-forward in/out with biases, two layer norms
        let layer = 4 * (h * h + h) + (h * i + i) + (i * h + h) + 2 * 2 * h;
        let pooler = h * h + h;
        embeddings + self.layers * layer + pooler
    }
}

/// Encoder parameters (embeddings, layers, pooler) for a given vocabulary size.
/// With the base dimensions each layer holds `12H² + 13H` parameters.
pub fn param_count(vocab_size: u64, arch: &BertArch) -> u64 {
    vocab_size * arch.hidden + arch.non_vocab_params()
}

/// Percentage of [`param_count`] held by the word-embedding matrix.
pub fn embedding_share(vocab_size: u64, arch: &BertArch) -> f64 {
    pct(vocab_size * arch.hidden, param_count(vocab_size, arch))
}

/// Parameter reduction, in percent, from shrinking the vocabulary.
pub fn reduction_pct(old_vocab: u64, new_vocab: u64, arch: &BertArch) -> f64 {
    100.0 * (1.0 - param_count(new_vocab, arch) as f64 / param_count(old_vocab, arch) as f64)
}
