//! Cased multilingual WordPiece tokenization.
//!
//! Tokenization runs in two stages. [`basic_tokenize`] cleans the text,
//! isolates CJK ideographs and splits on whitespace and punctuation.
//! [`wordpiece_tokenize`] then segments each word by greedy longest-prefix
//! matching against the vocabulary, marking non-initial pieces with the
//! continuation prefix (`##`).
//!
//! Nothing here adds `[CLS]`/`[SEP]`: the encoder is used to count raw corpus
//! occurrences, not to build model inputs.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use unicode_categories::UnicodeCategories;
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};
use crate::fingerprint::Fingerprint;

pub type TokenId = u32;

pub const DEFAULT_UNK: &str = "[UNK]";
pub const DEFAULT_SPECIALS: [&str; 5] = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"];
pub const DEFAULT_CONTINUATION_PREFIX: &str = "##";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VocabOptions {
    pub unk_token: String,
    pub special_tokens: BTreeSet<String>,
    pub continuation_prefix: String,
}

impl Default for VocabOptions {
    fn default() -> Self {
        VocabOptions {
            unk_token: DEFAULT_UNK.to_string(),
            special_tokens: DEFAULT_SPECIALS.iter().map(|s| s.to_string()).collect(),
            continuation_prefix: DEFAULT_CONTINUATION_PREFIX.to_string(),
        }
    }
}

/// An ordered WordPiece vocabulary. The id of a token is its position.
#[derive(Clone, Debug)]
pub struct Vocab {
    tokens: Vec<String>,
    id_of: HashMap<String, TokenId>,
    unk_id: TokenId,
    options: VocabOptions,
    fingerprint: Fingerprint,
}

impl Vocab {
    /// Builds a vocabulary from tokens held in memory, with default options.
    ///
    /// The fingerprint is taken over the canonical file form (one token per
    /// line, each terminated by LF), so it matches a file written by
    /// [`Vocab::to_file_bytes`].
    pub fn from_tokens<I, S>(tokens: I) -> Result<Vocab>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Vocab::with_options(tokens, VocabOptions::default())
    }

    pub fn with_options<I, S>(tokens: I, options: VocabOptions) -> Result<Vocab>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let tokens: Vec<String> = tokens.into_iter().map(Into::into).collect();
        for token in &tokens {
            if token.contains('\n') {
                return Err(Error::InvalidToken {
                    token: token.clone(),
                    reason: "contains a newline",
                });
            }
        }
        let fingerprint = Fingerprint::of_bytes(&canonical_bytes(&tokens));
        Vocab::build(tokens, options, fingerprint)
    }

    /// Parses the contents of a vocabulary file.
    pub fn parse(bytes: &[u8], options: VocabOptions) -> Result<Vocab> {
        let text = std::str::from_utf8(bytes).map_err(|e| {
            let line = bytes[..e.valid_up_to()].iter().filter(|&&b| b == b'\n').count() + 1;
            Error::InvalidUtf8 { line }
        })?;
        let mut lines: Vec<&str> = text.split('\n').collect();
        while lines.last().is_some_and(|l| l.is_empty()) {
            lines.pop();
        }
        if let Some(pos) = lines.iter().position(|l| l.is_empty()) {
            return Err(Error::EmptyToken { line: pos + 1 });
        }
        let tokens = lines.into_iter().map(str::to_string).collect();
        Vocab::build(tokens, options, Fingerprint::of_bytes(bytes))
    }

    fn build(tokens: Vec<String>, options: VocabOptions, fingerprint: Fingerprint) -> Result<Vocab> {
        let mut id_of = HashMap::with_capacity(tokens.len());
        for (i, token) in tokens.iter().enumerate() {
            if token.is_empty() {
                return Err(Error::EmptyToken { line: i + 1 });
            }
            if let Some(first) = id_of.insert(token.clone(), i as TokenId) {
                return Err(Error::DuplicateToken {
                    token: token.clone(),
                    first_line: first as usize + 1,
                    second_line: i + 1,
                });
            }
        }
        let unk_id = *id_of
            .get(&options.unk_token)
            .ok_or_else(|| Error::MissingUnk(options.unk_token.clone()))?;
        Ok(Vocab {
            tokens,
            id_of,
            unk_id,
            options,
            fingerprint,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn id_of(&self, token: &str) -> Option<TokenId> {
        self.id_of.get(token).copied()
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn unk_id(&self) -> TokenId {
        self.unk_id
    }

    pub fn unk_token(&self) -> &str {
        &self.options.unk_token
    }

    pub fn continuation_prefix(&self) -> &str {
        &self.options.continuation_prefix
    }

    pub fn options(&self) -> &VocabOptions {
        &self.options
    }

    pub fn fingerprint(&self) -> Fingerprint {
        self.fingerprint
    }

    /// Ids of the special tokens present in this vocabulary, ascending.
    pub fn special_ids(&self) -> Vec<TokenId> {
        let mut ids: Vec<TokenId> = self
            .options
            .special_tokens
            .iter()
            .filter_map(|t| self.id_of(t))
            .collect();
        ids.sort_unstable();
        ids
    }

    /// Vocabulary file contents: one token per line, LF terminated.
    pub fn to_file_bytes(&self) -> Vec<u8> {
        canonical_bytes(&self.tokens)
    }

    /// Greedy longest-match-first segmentation of a single word into ids.
    pub fn wordpiece_ids(&self, word: &str, cfg: &TokenizerConfig, out: &mut Vec<TokenId>) {
        let mark = out.len();
        let mut bounds: Vec<usize> = word.char_indices().map(|(i, _)| i).collect();
        if bounds.is_empty() {
            return;
        }
        if bounds.len() > cfg.max_word_chars {
            out.push(self.unk_id);
            return;
        }
        bounds.push(word.len());

        let prefix = self.continuation_prefix();
        let mut candidate = String::with_capacity(word.len() + prefix.len());
        let mut start = 0;
        while start + 1 < bounds.len() {
            let mut matched = None;
            for end in (start + 1..bounds.len()).rev() {
                let piece = &word[bounds[start]..bounds[end]];
                let id = if start > 0 {
                    candidate.clear();
                    candidate.push_str(prefix);
                    candidate.push_str(piece);
                    self.id_of(&candidate)
                } else {
                    self.id_of(piece)
                };
                if let Some(id) = id {
                    matched = Some((id, end));
                    break;
                }
            }
            match matched {
                Some((id, end)) => {
                    out.push(id);
                    start = end;
                }
                None => {
                    out.truncate(mark);
                    out.push(self.unk_id);
                    return;
                }
            }
        }
    }
}

fn canonical_bytes(tokens: &[String]) -> Vec<u8> {
    let mut bytes = Vec::with_capacity(tokens.iter().map(|t| t.len() + 1).sum());
    for token in tokens {
        bytes.extend_from_slice(token.as_bytes());
        bytes.push(b'\n');
    }
    bytes
}

/// Reads a vocabulary file with default options.
pub fn load_vocab(path: impl AsRef<Path>) -> Result<Vocab> {
    load_vocab_with(path, VocabOptions::default())
}

pub fn load_vocab_with(path: impl AsRef<Path>, options: VocabOptions) -> Result<Vocab> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Vocab::parse(&bytes, options)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TokenizerConfig {
    pub lowercase: bool,
    pub strip_accents: bool,
    pub split_cjk: bool,
    /// Words longer than this many characters become the unknown token.
    pub max_word_chars: usize,
}

impl TokenizerConfig {
    /// The cased multilingual setup: no lowercasing, accents kept.
    pub const CASED: TokenizerConfig = TokenizerConfig {
        lowercase: false,
        strip_accents: false,
        split_cjk: true,
        max_word_chars: 100,
    };
}

impl Default for TokenizerConfig {
    fn default() -> Self {
        TokenizerConfig::CASED
    }
}

fn is_cjk(c: char) -> bool {
    matches!(c as u32,
        0x4E00..=0x9FFF
        | 0x3400..=0x4DBF
        | 0x20000..=0x2A6DF
        | 0x2A700..=0x2B73F
        | 0x2B740..=0x2B81F
        | 0xF900..=0xFAFF
        | 0x2F800..=0x2FA1F)
}

fn is_punctuation(c: char) -> bool {
    matches!(c as u32, 33..=47 | 58..=64 | 91..=96 | 123..=126) || c.is_punctuation()
}

fn is_control(c: char) -> bool {
    c.is_other_control() || c.is_other_format()
}

fn clean_text(text: &str, split_cjk: bool) -> String {
    let mut cleaned = String::with_capacity(text.len());
    for c in text.chars() {
        if c.is_whitespace() {
            cleaned.push(' ');
        } else if c == '\0' || c == '\u{FFFD}' || is_control(c) {
            continue;
        } else if split_cjk && is_cjk(c) {
            cleaned.push(' ');
            cleaned.push(c);
            cleaned.push(' ');
        } else {
            cleaned.push(c);
        }
    }
    cleaned
}

fn split_punctuation(chunk: &str, words: &mut Vec<String>) {
    let mut current = String::new();
    for c in chunk.chars() {
        if is_punctuation(c) {
            if !current.is_empty() {
                words.push(std::mem::take(&mut current));
            }
            words.push(c.to_string());
        } else {
            current.push(c);
        }
    }
    if !current.is_empty() {
        words.push(current);
    }
}

/// Splits raw text into words: cleaning, CJK isolation, whitespace and
/// punctuation splitting.
pub fn basic_tokenize(text: &str, cfg: &TokenizerConfig) -> Vec<String> {
    let cleaned = clean_text(text, cfg.split_cjk);
    let mut words = Vec::new();
    for chunk in cleaned.split(' ').filter(|c| !c.is_empty()) {
        let chunk = match (cfg.lowercase, cfg.strip_accents) {
            (false, false) => std::borrow::Cow::Borrowed(chunk),
            (lower, strip) => {
                let mut s = if lower { chunk.to_lowercase() } else { chunk.to_string() };
                if strip {
                    s = s.nfd().filter(|c| !c.is_mark_nonspacing()).collect();
                }
                std::borrow::Cow::Owned(s)
            }
        };
        split_punctuation(&chunk, &mut words);
    }
    words
}

/// Segments one word into vocabulary pieces. A word that cannot be fully
/// covered, or is longer than `max_word_chars`, yields the unknown token alone.
pub fn wordpiece_tokenize(word: &str, vocab: &Vocab, cfg: &TokenizerConfig) -> Vec<String> {
    let mut ids = Vec::new();
    vocab.wordpiece_ids(word, cfg, &mut ids);
    ids.into_iter()
        .map(|id| vocab.tokens[id as usize].clone())
        .collect()
}

/// Token ids for raw text, without any added special tokens.
pub fn encode(text: &str, vocab: &Vocab, cfg: &TokenizerConfig) -> Vec<TokenId> {
    let mut ids = Vec::new();
    for word in basic_tokenize(text, cfg) {
        vocab.wordpiece_ids(&word, cfg, &mut ids);
    }
    ids
}
