//! Paragraph document frequencies over a one-paragraph-per-line corpus.

use std::collections::BTreeMap;
use std::io::BufRead;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fingerprint::Fingerprint;
use crate::tokenizer::{encode, TokenId, TokenizerConfig, Vocab};

/// Number of lines handed to the worker pool at a time.
const BATCH_LINES: usize = 16 * 1024;

/// For each vocabulary id, the number of non-empty lines in which it occurs
/// at least once. Ids missing from `df` have count zero.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FreqTable {
    pub language: String,
    pub total_paragraphs: u64,
    pub vocab_fingerprint: Fingerprint,
    pub df: BTreeMap<TokenId, u64>,
}

impl FreqTable {
    pub fn empty(language: &str, vocab_fingerprint: Fingerprint) -> FreqTable {
        FreqTable {
            language: language.to_string(),
            total_paragraphs: 0,
            vocab_fingerprint,
            df: BTreeMap::new(),
        }
    }

    pub fn count(&self, id: TokenId) -> u64 {
        self.df.get(&id).copied().unwrap_or(0)
    }

    pub fn to_json(&self) -> Result<Vec<u8>> {
        let mut bytes = serde_json::to_vec_pretty(self)?;
        bytes.push(b'\n');
        Ok(bytes)
    }

    pub fn from_json(bytes: &[u8]) -> Result<FreqTable> {
        let table: FreqTable = serde_json::from_slice(bytes)?;
        for (&id, &count) in &table.df {
            if count == 0 || count > table.total_paragraphs {
                return Err(Error::InvalidSelection(format!(
                    "frequency table {:?}: id {id} has count {count} outside 1..={}",
                    table.language, table.total_paragraphs
                )));
            }
        }
        Ok(table)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<FreqTable> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        FreqTable::from_json(&bytes)
    }
}

/// Dense per-id accumulator used while counting.
struct Counter {
    total: u64,
    counts: Vec<u64>,
    scratch: Vec<TokenId>,
}

impl Counter {
    fn new(vocab_size: usize) -> Self {
        Counter {
            total: 0,
            counts: vec![0; vocab_size],
            scratch: Vec::new(),
        }
    }

    fn add_line(&mut self, line: &str, vocab: &Vocab, cfg: &TokenizerConfig) {
        let line = line.trim();
        if line.is_empty() {
            return;
        }
        self.total += 1;
        self.scratch = encode(line, vocab, cfg);
        self.scratch.sort_unstable();
        self.scratch.dedup();
        for &id in &self.scratch {
            self.counts[id as usize] += 1;
        }
    }

    fn absorb(&mut self, other: &Counter) {
        self.total += other.total;
        for (mine, theirs) in self.counts.iter_mut().zip(&other.counts) {
            *mine += theirs;
        }
    }

    fn into_table(self, language: &str, vocab: &Vocab) -> FreqTable {
        let df = self
            .counts
            .into_iter()
            .enumerate()
            .filter(|&(_, c)| c > 0)
            .map(|(id, c)| (id as TokenId, c))
            .collect();
        FreqTable {
            language: language.to_string(),
            total_paragraphs: self.total,
            vocab_fingerprint: vocab.fingerprint(),
            df,
        }
    }
}

/// Counts paragraph frequencies over lines already held in memory.
pub fn count_lines<'a, I>(lines: I, vocab: &Vocab, cfg: &TokenizerConfig, language: &str) -> FreqTable
where
    I: IntoIterator<Item = &'a str>,
{
    let mut counter = Counter::new(vocab.len());
    for line in lines {
        counter.add_line(line, vocab, cfg);
    }
    counter.into_table(language, vocab)
}

/// Single-pass streaming count. Blank lines are skipped and do not count as
/// paragraphs; each token is counted at most once per line.
pub fn count_paragraph_df<R: BufRead>(
    corpus: R,
    vocab: &Vocab,
    cfg: &TokenizerConfig,
    language: &str,
) -> Result<FreqTable> {
    let mut counter = Counter::new(vocab.len());
    for_each_batch(corpus, 1, |batch| {
        for line in batch {
            counter.add_line(line, vocab, cfg);
        }
    })?;
    Ok(counter.into_table(language, vocab))
}

/// Streaming count split over `threads` workers. Each batch of lines is cut
/// into `threads` shards counted independently and merged, so the result is
/// identical to [`count_paragraph_df`] for any thread count.
pub fn count_paragraph_df_parallel<R: BufRead>(
    corpus: R,
    vocab: &Vocab,
    cfg: &TokenizerConfig,
    language: &str,
    threads: usize,
) -> Result<FreqTable> {
    let threads = threads.max(1);
    if threads == 1 {
        return count_paragraph_df(corpus, vocab, cfg, language);
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Container(format!("thread pool: {e}")))?;
    let mut total = Counter::new(vocab.len());
    for_each_batch(corpus, BATCH_LINES, |batch| {
        let shard_len = batch.len().div_ceil(threads).max(1);
        let shards: Vec<Counter> = pool.install(|| {
            batch
                .par_chunks(shard_len)
                .map(|shard| {
                    let mut c = Counter::new(vocab.len());
                    for line in shard {
                        c.add_line(line, vocab, cfg);
                    }
                    c
                })
                .collect()
        });
        for shard in &shards {
            total.absorb(shard);
        }
    })?;
    Ok(total.into_table(language, vocab))
}

fn for_each_batch<R, F>(mut corpus: R, batch_lines: usize, mut f: F) -> Result<()>
where
    R: BufRead,
    F: FnMut(&[String]),
{
    let mut batch = Vec::with_capacity(batch_lines);
    let mut raw = Vec::new();
    let mut line_no = 0usize;
    loop {
        raw.clear();
        let n = corpus
            .read_until(b'\n', &mut raw)
            .map_err(|e| Error::io("<corpus>", e))?;
        if n == 0 {
            break;
        }
        line_no += 1;
        let line = String::from_utf8(std::mem::take(&mut raw))
            .map_err(|_| Error::InvalidUtf8 { line: line_no })?;
        batch.push(line);
        if batch.len() >= batch_lines {
            f(&batch);
            batch.clear();
        }
    }
    if !batch.is_empty() {
        f(&batch);
    }
    Ok(())
}

/// Adds two tables counted over disjoint line sets of the same language.
pub fn merge_freq(a: &FreqTable, b: &FreqTable) -> Result<FreqTable> {
    if a.language != b.language {
        return Err(Error::LanguageMismatch {
            left: a.language.clone(),
            right: b.language.clone(),
        });
    }
    if a.vocab_fingerprint != b.vocab_fingerprint {
        return Err(Error::FingerprintMismatch {
            expected: a.vocab_fingerprint.to_string(),
            found: b.vocab_fingerprint.to_string(),
        });
    }
    let mut df = a.df.clone();
    for (&id, &count) in &b.df {
        *df.entry(id).or_insert(0) += count;
    }
    Ok(FreqTable {
        language: a.language.clone(),
        total_paragraphs: a.total_paragraphs + b.total_paragraphs,
        vocab_fingerprint: a.vocab_fingerprint,
        df,
    })
}
