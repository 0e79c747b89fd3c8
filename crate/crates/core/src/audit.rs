//! Post-trim verification and load benchmarking.
//!
//! [`verify_rows`] checks that every retained row was copied verbatim and
//! that tensors without a vocabulary axis were left alone.
//! [`verify_tokenization`] checks that words fully covered by the retained
//! pieces segment identically under the trimmed vocabulary, with ids remapped
//! through the plan. [`bench_load`] measures file size and load time; it does
//! not measure inference, which vocabulary trimming leaves unchanged.

use std::path::Path;
use std::time::{Duration, Instant};

use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::surgeon::TrimPlan;
use crate::tensor_store::{read_tensor_file, TensorEntry, TensorFile};
use crate::tokenizer::{basic_tokenize, TokenizerConfig, Vocab};

/// How many individual mismatches are kept for reporting.
const MAX_REPORTED: usize = 32;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RowMismatch {
    pub tensor: String,
    pub old_id: u32,
    pub new_id: u32,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct RowCheck {
    pub rows_checked: u64,
    pub rows_identical: u64,
    /// Tensors without a vocabulary axis, compared whole.
    pub tensors_checked: u64,
    pub tensors_identical: u64,
    pub mismatched_rows: Vec<RowMismatch>,
    pub mismatched_tensors: Vec<String>,
}

impl RowCheck {
    pub fn passed(&self) -> bool {
        self.rows_identical == self.rows_checked && self.tensors_identical == self.tensors_checked
    }
}

fn sliced_axis(orig: &[usize], trimmed: &[usize], plan: &TrimPlan) -> Option<usize> {
    if orig.len() != trimmed.len() {
        return None;
    }
    (0..orig.len()).find(|&a| {
        orig[a] == plan.old_vocab_size
            && trimmed[a] == plan.new_vocab_size()
            && orig
                .iter()
                .zip(trimmed)
                .enumerate()
                .all(|(i, (o, t))| i == a || o == t)
    })
}

fn compare_rows(name: &str, orig: &TensorEntry, trimmed: &TensorEntry, plan: &TrimPlan, axis: usize, check: &mut RowCheck) {
    let shape = orig.shape();
    let outer: usize = shape[..axis].iter().product();
    let row_bytes: usize = shape[axis + 1..].iter().product::<usize>() * orig.dtype().size();
    let (src, dst) = (orig.data(), trimmed.data());
    let new_v = plan.new_vocab_size();
    for o in 0..outer {
        for (new_id, &old_id) in plan.kept_old_ids.iter().enumerate() {
            let s = (o * plan.old_vocab_size + old_id as usize) * row_bytes;
            let d = (o * new_v + new_id) * row_bytes;
            check.rows_checked += 1;
            if src[s..s + row_bytes] == dst[d..d + row_bytes] {
                check.rows_identical += 1;
            } else if check.mismatched_rows.len() < MAX_REPORTED {
                check.mismatched_rows.push(RowMismatch {
                    tensor: name.to_string(),
                    old_id,
                    new_id: new_id as u32,
                });
            }
        }
    }
}

/// Byte-level comparison of an original checkpoint with its trimmed version.
pub fn verify_rows(orig: &TensorFile, trimmed: &TensorFile, plan: &TrimPlan) -> Result<RowCheck> {
    if let Some(extra) = trimmed.entries.keys().find(|k| !orig.entries.contains_key(*k)) {
        return Err(Error::tensor(extra, "present in the trimmed model only"));
    }
    let mut check = RowCheck::default();
    for (name, o) in &orig.entries {
        let t = trimmed
            .get(name)
            .ok_or_else(|| Error::tensor(name, "missing from the trimmed model"))?;
        if o.dtype() != t.dtype() {
            return Err(Error::tensor(name, format!("dtype changed from {} to {}", o.dtype(), t.dtype())));
        }
        match sliced_axis(o.shape(), t.shape(), plan) {
            Some(axis) => compare_rows(name, o, t, plan, axis, &mut check),
            None if o.shape() == t.shape() => {
                check.tensors_checked += 1;
                if o.data() == t.data() {
                    check.tensors_identical += 1;
                } else if check.mismatched_tensors.len() < MAX_REPORTED {
                    check.mismatched_tensors.push(name.clone());
                }
            }
            None => {
                return Err(Error::tensor(
                    name,
                    format!(
                        "shape {:?} -> {:?} is inconsistent with a {} -> {} vocabulary",
                        o.shape(),
                        t.shape(),
                        plan.old_vocab_size,
                        plan.new_vocab_size()
                    ),
                ))
            }
        }
    }
    Ok(check)
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct TokenizationCheck {
    pub words: u64,
    /// Words whose full-vocabulary pieces are all retained.
    pub cases: u64,
    pub preserved: u64,
    /// Words needing a piece that was dropped; re-segmented, not a failure.
    pub words_with_dropped_pieces: u64,
    pub violations: Vec<String>,
}

/// Re-tokenizes every word of `sample` under both vocabularies.
pub fn verify_tokenization<'a, I>(
    sample: I,
    full: &Vocab,
    trimmed: &Vocab,
    plan: &TrimPlan,
    cfg: &TokenizerConfig,
) -> Result<TokenizationCheck>
where
    I: IntoIterator<Item = &'a str>,
{
    if full.len() != plan.old_vocab_size || trimmed.tokens() != plan.new_tokens.as_slice() {
        return Err(Error::InvalidSelection(
            "trimmed vocabulary was not produced from the full vocabulary by this plan".into(),
        ));
    }
    let mut check = TokenizationCheck::default();
    let (mut full_ids, mut trimmed_ids) = (Vec::new(), Vec::new());
    for line in sample {
        for word in basic_tokenize(line, cfg) {
            check.words += 1;
            full_ids.clear();
            full.wordpiece_ids(&word, cfg, &mut full_ids);
            let Some(expected) = full_ids.iter().map(|&id| plan.remap(id)).collect::<Option<Vec<_>>>() else {
                check.words_with_dropped_pieces += 1;
                continue;
            };
            check.cases += 1;
            trimmed_ids.clear();
            trimmed.wordpiece_ids(&word, cfg, &mut trimmed_ids);
            if trimmed_ids == expected {
                check.preserved += 1;
            } else if check.violations.len() < MAX_REPORTED {
                check.violations.push(word);
            }
        }
    }
    Ok(check)
}

/// Fraction of emitted pieces that are the unknown token; 0 when nothing is emitted.
pub fn unk_rate<'a, I>(sample: I, vocab: &Vocab, cfg: &TokenizerConfig) -> f64
where
    I: IntoIterator<Item = &'a str>,
{
    let (mut unk, mut total) = (0u64, 0u64);
    let mut ids = Vec::new();
    for line in sample {
        ids.clear();
        for word in basic_tokenize(line, cfg) {
            vocab.wordpiece_ids(&word, cfg, &mut ids);
        }
        total += ids.len() as u64;
        unk += ids.iter().filter(|&&id| id == vocab.unk_id()).count() as u64;
    }
    if total == 0 {
        0.0
    } else {
        unk as f64 / total as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AuditResult {
    pub rows_checked: u64,
    pub rows_identical: u64,
    pub tensors_checked: u64,
    pub tensors_identical: u64,
    pub tokenization_cases: u64,
    pub tokenization_preserved: u64,
    pub words_with_dropped_pieces: u64,
    pub unk_rate_original: f64,
    pub unk_rate_trimmed: f64,
    pub passed: bool,
    pub mismatched_rows: Vec<RowMismatch>,
    pub mismatched_tensors: Vec<String>,
    pub tokenization_violations: Vec<String>,
}

impl AuditResult {
    pub fn new(rows: RowCheck, tokens: TokenizationCheck, unk_rate_original: f64, unk_rate_trimmed: f64) -> AuditResult {
        let passed = rows.passed() && tokens.preserved == tokens.cases;
        AuditResult {
            rows_checked: rows.rows_checked,
            rows_identical: rows.rows_identical,
            tensors_checked: rows.tensors_checked,
            tensors_identical: rows.tensors_identical,
            tokenization_cases: tokens.cases,
            tokenization_preserved: tokens.preserved,
            words_with_dropped_pieces: tokens.words_with_dropped_pieces,
            unk_rate_original,
            unk_rate_trimmed,
            passed,
            mismatched_rows: rows.mismatched_rows,
            mismatched_tensors: rows.mismatched_tensors,
            tokenization_violations: tokens.violations,
        }
    }
}

/// Runs the row check, and the tokenization and UNK checks over `sample`.
pub fn audit(
    orig: &TensorFile,
    trimmed: &TensorFile,
    plan: &TrimPlan,
    full_vocab: &Vocab,
    trimmed_vocab: &Vocab,
    sample: &[String],
    cfg: &TokenizerConfig,
) -> Result<AuditResult> {
    let rows = verify_rows(orig, trimmed, plan)?;
    let lines = || sample.iter().map(String::as_str);
    let tokens = verify_tokenization(lines(), full_vocab, trimmed_vocab, plan, cfg)?;
    Ok(AuditResult::new(
        rows,
        tokens,
        unk_rate(lines(), full_vocab, cfg),
        unk_rate(lines(), trimmed_vocab, cfg),
    ))
}

fn secs<S: Serializer>(d: &Duration, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_f64(d.as_secs_f64())
}

fn secs_vec<S: Serializer>(ds: &[Duration], s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_seq(ds.iter().map(Duration::as_secs_f64))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchResult {
    pub file_bytes: u64,
    /// Σ tensor data bytes: the memory the weights occupy once loaded.
    pub tensor_bytes: u64,
    pub params: u64,
    #[serde(serialize_with = "secs_vec")]
    pub load_wall_times: Vec<Duration>,
    #[serde(serialize_with = "secs")]
    pub load_median: Duration,
    pub methodology: &'static str,
}

pub fn median(samples: &[Duration]) -> Duration {
    assert!(!samples.is_empty(), "median of no samples");
    let mut sorted = samples.to_vec();
    sorted.sort_unstable();
    let mid = sorted.len() / 2;
    if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        (sorted[mid - 1] + sorted[mid]) / 2
    }
}

/// Times `repetitions` sequential full reads of a checkpoint.
pub fn bench_load(path: impl AsRef<Path>, repetitions: usize) -> Result<BenchResult> {
    let path = path.as_ref();
    if repetitions == 0 {
        return Err(Error::Container("bench needs at least one repetition".into()));
    }
    let file_bytes = std::fs::metadata(path).map_err(|e| Error::io(path, e))?.len();
    let mut times = Vec::with_capacity(repetitions);
    let mut last = None;
    for _ in 0..repetitions {
        let start = Instant::now();
        let tf = read_tensor_file(path)?;
        times.push(start.elapsed());
        last = Some(tf);
    }
    let tf = last.expect("at least one repetition");
    Ok(BenchResult {
        file_bytes,
        tensor_bytes: tf.data_bytes(),
        params: tf.total_params(),
        load_median: median(&times),
        load_wall_times: times,
        methodology: "wall-clock time of a full parse and copy of every tensor, run sequentially; OS page cache not dropped",
    })
}
