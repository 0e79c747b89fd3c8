//! Shrink a multilingual WordPiece transformer checkpoint to the languages you
//! actually serve.
//!
//! Most parameters of a multilingual BERT sit in its word-embedding matrix,
//! one row per vocabulary entry. Given a corpus per target language, the
//! pipeline keeps only the entries those languages use and drops the other
//! rows, leaving every other weight untouched:
//!
//! 1. [`corpus_stats`] counts, per language, the paragraphs (lines) in which
//!    each vocabulary entry appears.
//! 2. [`selection`] keeps entries reaching a paragraph-frequency threshold
//!    (0.05% by default) and unions languages.
//! 3. [`surgeon`] turns a selection into an order-preserving id remapping and
//!    slices every vocabulary-axis tensor of a [`tensor_store`] checkpoint.
//! 4. [`audit`] checks that rows were copied verbatim and tokenization is
//!    preserved, and measures size and load time.
//!
//! ```
//! use vocab_trim::{corpus_stats, selection, surgeon, tensor_store, tokenizer};
//!
//! let vocab = tokenizer::Vocab::from_tokens(
//!     ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]", "hello", "world", "bonjour"],
//! )?;
//! let cfg = tokenizer::TokenizerConfig::CASED;
//! let en = corpus_stats::count_lines(["hello world", "hello"], &vocab, &cfg, "en");
//! let sel = selection::select_tokens(&en, selection::Threshold::DEFAULT, &vocab)?;
//! assert_eq!(sel.selected_ids, [0, 1, 2, 3, 4, 5, 6]);
//!
//! let mut model = tensor_store::TensorFile::new();
//! let rows: Vec<f32> = (0..8 * 4).map(|i| i as f32).collect();
//! model.insert("word_embeddings.weight", tensor_store::TensorEntry::from_f32(vec![8, 4], &rows)?)?;
//!
//! let plan = surgeon::build_trim_plan(&sel, &vocab)?;
//! let (small, report) = surgeon::trim_model(&model, &plan, &[])?;
//! assert_eq!(small.get("word_embeddings.weight").unwrap().shape(), [7, 4]);
//! assert_eq!(report.total_params_new, 28);
//! # Ok::<(), vocab_trim::Error>(())
//! ```

pub mod audit;
pub mod cli;
pub mod corpus_stats;
mod error;
pub mod fingerprint;
pub mod io;
pub mod selection;
pub mod surgeon;
pub mod tensor_store;
pub mod tokenizer;

pub use error::{Error, Result};

// The guide under book/ is compiled here so its snippets run as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/tokenization.md")]
    mod tokenization {}
    #[doc = include_str!("../../../book/src/counting.md")]
    mod counting {}
    #[doc = include_str!("../../../book/src/selection.md")]
    mod selection {}
    #[doc = include_str!("../../../book/src/checkpoint-format.md")]
    mod checkpoint_format {}
    #[doc = include_str!("../../../book/src/surgery.md")]
    mod surgery {}
    #[doc = include_str!("../../../book/src/audit.md")]
    mod audit {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
