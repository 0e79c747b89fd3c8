//! Frequency-threshold token selection and per-language unions.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::corpus_stats::FreqTable;
use crate::error::{Error, Result};
use crate::fingerprint::Fingerprint;
use crate::tokenizer::{TokenId, Vocab};

/// A selection threshold held as an exact decimal `mantissa / 10^scale`,
/// so that boundary comparisons never go through floating point.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Threshold {
    mantissa: u64,
    scale: u32,
}

impl Threshold {
    /// 0.05% of paragraphs.
    pub const DEFAULT: Threshold = Threshold {
        mantissa: 5,
        scale: 4,
    };

    /// `count / total >= threshold`, compared as `count * 10^scale >= mantissa * total`.
    pub fn is_met(&self, count: u64, total: u64) -> bool {
        let lhs = u128::from(count) * 10u128.pow(self.scale);
        let rhs = u128::from(self.mantissa) * u128::from(total);
        lhs >= rhs
    }

    pub fn as_f64(&self) -> f64 {
        self.mantissa as f64 / 10f64.powi(self.scale as i32)
    }
}

impl Default for Threshold {
    fn default() -> Self {
        Threshold::DEFAULT
    }
}

impl FromStr for Threshold {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidThreshold(s.to_string());
        let (int_part, frac_part) = s.split_once('.').unwrap_or((s, ""));
        if int_part.is_empty() && frac_part.is_empty() {
            return Err(bad());
        }
        if !int_part.bytes().chain(frac_part.bytes()).all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        let frac_part = frac_part.trim_end_matches('0');
        let digits = format!("{int_part}{frac_part}");
        let digits = digits.trim_start_matches('0');
        let scale = frac_part.len() as u32;
        if scale > 18 || digits.len() > 19 {
            return Err(bad());
        }
        let mantissa = if digits.is_empty() {
            0
        } else {
            digits.parse::<u64>().map_err(|_| bad())?
        };
        // 0 < t <= 1
        if mantissa == 0 || u128::from(mantissa) > 10u128.pow(scale) {
            return Err(bad());
        }
        Ok(Threshold { mantissa, scale })
    }
}

impl fmt::Display for Threshold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.scale == 0 {
            return write!(f, "{}", self.mantissa);
        }
        let digits = format!("{:0width$}", self.mantissa, width = self.scale as usize + 1);
        let (int, frac) = digits.split_at(digits.len() - self.scale as usize);
        write!(f, "{int}.{frac}")
    }
}

impl Serialize for Threshold {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Threshold {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Retained token ids for a set of languages.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Selection {
    pub languages: Vec<String>,
    pub threshold: Threshold,
    #[serde(rename = "vocab_fingerprint")]
    pub source_fingerprint: Fingerprint,
    pub selected_ids: Vec<TokenId>,
    pub forced_ids: Vec<TokenId>,
}

impl Selection {
    /// Keeps every id of `vocab`; trimming with it is a no-op.
    pub fn all(vocab: &Vocab) -> Selection {
        Selection {
            languages: Vec::new(),
            threshold: Threshold::DEFAULT,
            source_fingerprint: vocab.fingerprint(),
            selected_ids: (0..vocab.len() as TokenId).collect(),
            forced_ids: vocab.special_ids(),
        }
    }

    pub fn len(&self) -> usize {
        self.selected_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.selected_ids.is_empty()
    }

    pub fn contains(&self, id: TokenId) -> bool {
        self.selected_ids.binary_search(&id).is_ok()
    }

    pub fn validate(&self) -> Result<()> {
        let ascending = |ids: &[TokenId]| ids.windows(2).all(|w| w[0] < w[1]);
        if !ascending(&self.selected_ids) {
            return Err(Error::InvalidSelection("selected_ids not strictly ascending".into()));
        }
        if !ascending(&self.forced_ids) {
            return Err(Error::InvalidSelection("forced_ids not strictly ascending".into()));
        }
        if let Some(id) = self.forced_ids.iter().find(|&&id| !self.contains(id)) {
            return Err(Error::InvalidSelection(format!(
                "forced id {id} missing from selected_ids"
            )));
        }
        Ok(())
    }

    /// Checks the invariants plus consistency with the vocabulary it claims
    /// to come from.
    pub fn check_against(&self, vocab: &Vocab) -> Result<()> {
        if self.source_fingerprint != vocab.fingerprint() {
            return Err(Error::FingerprintMismatch {
                expected: vocab.fingerprint().to_string(),
                found: self.source_fingerprint.to_string(),
            });
        }
        self.validate()?;
        if let Some(&id) = self.selected_ids.last() {
            if id as usize >= vocab.len() {
                return Err(Error::IdOutOfRange {
                    id,
                    vocab_size: vocab.len(),
                });
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<Vec<u8>> {
        let mut bytes = serde_json::to_vec(self)?;
        bytes.push(b'\n');
        Ok(bytes)
    }

    pub fn from_json(bytes: &[u8]) -> Result<Selection> {
        let sel: Selection = serde_json::from_slice(bytes)?;
        sel.validate()?;
        Ok(sel)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Selection> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Selection::from_json(&bytes)
    }
}

/// Keeps every id whose paragraph frequency reaches `threshold` (inclusive),
/// plus the vocabulary's special tokens.
pub fn select_tokens(freq: &FreqTable, threshold: Threshold, vocab: &Vocab) -> Result<Selection> {
    if freq.vocab_fingerprint != vocab.fingerprint() {
        return Err(Error::FingerprintMismatch {
            expected: vocab.fingerprint().to_string(),
            found: freq.vocab_fingerprint.to_string(),
        });
    }
    if freq.total_paragraphs == 0 {
        return Err(Error::EmptyCorpus {
            language: freq.language.clone(),
        });
    }
    if let Some((&id, _)) = freq.df.last_key_value() {
        if id as usize >= vocab.len() {
            return Err(Error::IdOutOfRange {
                id,
                vocab_size: vocab.len(),
            });
        }
    }
    let forced_ids = vocab.special_ids();
    let mut selected: BTreeSet<TokenId> = freq
        .df
        .iter()
        .filter(|&(_, &count)| threshold.is_met(count, freq.total_paragraphs))
        .map(|(&id, _)| id)
        .collect();
    selected.extend(forced_ids.iter().copied());
    Ok(Selection {
        languages: vec![freq.language.clone()],
        threshold,
        source_fingerprint: freq.vocab_fingerprint,
        selected_ids: selected.into_iter().collect(),
        forced_ids,
    })
}

/// Set union of selections made against the same vocabulary and threshold.
pub fn union_selections(parts: &[Selection]) -> Result<Selection> {
    let (first, rest) = parts
        .split_first()
        .ok_or_else(|| Error::InvalidSelection("union of zero selections".into()))?;
    let mut languages = first.languages.clone();
    let mut selected: BTreeSet<TokenId> = first.selected_ids.iter().copied().collect();
    let mut forced: BTreeSet<TokenId> = first.forced_ids.iter().copied().collect();
    for part in rest {
        if part.source_fingerprint != first.source_fingerprint {
            return Err(Error::FingerprintMismatch {
                expected: first.source_fingerprint.to_string(),
                found: part.source_fingerprint.to_string(),
            });
        }
        if part.threshold != first.threshold {
            return Err(Error::ThresholdMismatch {
                left: first.threshold.to_string(),
                right: part.threshold.to_string(),
            });
        }
        for lang in &part.languages {
            if !languages.contains(lang) {
                languages.push(lang.clone());
            }
        }
        selected.extend(part.selected_ids.iter().copied());
        forced.extend(part.forced_ids.iter().copied());
    }
    Ok(Selection {
        languages,
        threshold: first.threshold,
        source_fingerprint: first.source_fingerprint,
        selected_ids: selected.into_iter().collect(),
        forced_ids: forced.into_iter().collect(),
    })
}

/// `100 * count / original_size`, rounded half away from zero to one decimal.
pub fn proportion_pct(count: usize, original_size: usize) -> f64 {
    assert!(original_size > 0, "original vocabulary size must be positive");
    let (c, n) = (count as u128, original_size as u128);
    let tenths = (2000 * c + n) / (2 * n);
    tenths as f64 / 10.0
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Coverage {
    pub label: String,
    pub selected: usize,
    pub proportion_of_original: f64,
}

pub fn coverage_stats(sel: &Selection, original_size: usize) -> Coverage {
    debug_assert!(sel.selected_ids.last().is_none_or(|&id| (id as usize) < original_size));
    Coverage {
        label: sel.languages.join("+"),
        selected: sel.len(),
        proportion_of_original: proportion_pct(sel.len(), original_size),
    }
}

/// Per-language selected counts and their union, as proportions of the
/// original vocabulary.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CoverageReport {
    pub original_size: usize,
    pub languages: Vec<Coverage>,
    pub union: Coverage,
}

impl CoverageReport {
    pub fn new(per_language: &[Selection], original_size: usize) -> Result<CoverageReport> {
        let union = union_selections(per_language)?;
        let mut union_row = coverage_stats(&union, original_size);
        union_row.label = format!("Union ({} langs)", per_language.len());
        Ok(CoverageReport {
            original_size,
            languages: per_language
                .iter()
                .map(|s| coverage_stats(s, original_size))
                .collect(),
            union: union_row,
        })
    }
}

impl fmt::Display for CoverageReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<20} {:>16} {:>12}", "Language", "#Selected tokens", "Proportion")?;
        for row in self.languages.iter().chain(std::iter::once(&self.union)) {
            writeln!(
                f,
                "{:<20} {:>16} {:>11.1}%",
                row.label, row.selected, row.proportion_of_original
            )?;
        }
        Ok(())
    }
}
