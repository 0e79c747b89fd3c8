//! The `vocab-trim` command line: `count`, `select`, `trim`, `verify`, `bench`.
//!
//! Each step reads and writes plain files so per-language counts can be
//! reused across any number of language combinations.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::audit::{audit, bench_load};
use crate::corpus_stats::{count_paragraph_df_parallel, FreqTable};
use crate::error::{Error, Result};
use crate::io::write_bytes_atomic;
use crate::selection::{select_tokens, union_selections, CoverageReport, Selection, Threshold};
use crate::surgeon::{build_trim_plan, emit_trimmed_vocab, trim_model, VocabAxisRule};
use crate::tensor_store::{read_tensor_file, write_tensor_file};
use crate::tokenizer::{load_vocab, TokenizerConfig, Vocab};

#[derive(Debug, Parser)]
#[command(name = "vocab-trim", version, about = "Shrink a multilingual WordPiece model to the languages you need")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Count per-language paragraph frequencies of every vocabulary entry.
    Count(CountArgs),
    /// Threshold the frequencies and union the chosen languages.
    Select(SelectArgs),
    /// Slice the checkpoint and vocabulary down to a selection.
    Trim(TrimArgs),
    /// Check a trimmed checkpoint against its original.
    Verify(VerifyArgs),
    /// Measure file size and load time of a checkpoint.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct CountArgs {
    #[arg(long)]
    pub vocab: PathBuf,
    /// LANG=PATH, one paragraph per line. Repeatable.
    #[arg(long = "corpus", value_name = "LANG=PATH", required = true, value_parser = parse_corpus)]
    pub corpora: Vec<(String, PathBuf)>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    /// Vocabulary the frequency files were counted with.
    #[arg(long)]
    pub vocab: PathBuf,
    /// Directory holding <lang>.freq.json files.
    #[arg(long)]
    pub freq: PathBuf,
    #[arg(long, value_delimiter = ',', required = true)]
    pub languages: Vec<String>,
    #[arg(long, default_value = "0.0005")]
    pub threshold: Threshold,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrimArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub vocab: PathBuf,
    #[arg(long)]
    pub selection: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// REGEX or REGEX:AXIS naming tensors to slice. Disables auto-detection.
    #[arg(long = "vocab-axis", value_name = "PATTERN")]
    pub vocab_axis: Vec<VocabAxisRule>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long)]
    pub original: PathBuf,
    #[arg(long)]
    pub trimmed: PathBuf,
    #[arg(long)]
    pub selection: PathBuf,
    /// Vocabulary of the original model.
    #[arg(long)]
    pub vocab: PathBuf,
    /// Vocabulary of the trimmed model; defaults to vocab.txt next to it.
    #[arg(long)]
    pub trimmed_vocab: Option<PathBuf>,
    /// Text sample for the tokenization and UNK checks. Repeatable.
    #[arg(long)]
    pub corpus: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u64).range(1..))]
    pub reps: u64,
}

fn parse_corpus(s: &str) -> std::result::Result<(String, PathBuf), String> {
    let (lang, path) = s
        .split_once('=')
        .ok_or_else(|| format!("expected LANG=PATH, got {s:?}"))?;
    if lang.is_empty() || path.is_empty() {
        return Err(format!("expected LANG=PATH, got {s:?}"));
    }
    check_language(lang)?;
    Ok((lang.to_string(), PathBuf::from(path)))
}

fn check_language(lang: &str) -> std::result::Result<(), String> {
    if lang.is_empty() || !lang.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
        return Err(format!("invalid language code {lang:?}"));
    }
    Ok(())
}

pub fn freq_path(dir: &Path, lang: &str) -> PathBuf {
    dir.join(format!("{lang}.freq.json"))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn open_corpus(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(path, e))
}

fn pretty_json<T: serde::Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)?)
}

/// Runs one subcommand. `Ok(false)` means the command ran but a check failed.
pub fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Count(args) => cmd_count(&args),
        Command::Select(args) => cmd_select(&args).map(|_| true),
        Command::Trim(args) => cmd_trim(&args).map(|_| true),
        Command::Verify(args) => cmd_verify(&args),
        Command::Bench(args) => cmd_bench(&args).map(|_| true),
    }
}

pub fn cmd_count(args: &CountArgs) -> Result<bool> {
    let vocab = load_vocab(&args.vocab)?;
    let cfg = TokenizerConfig::CASED;
    create_dir(&args.out)?;
    let mut ok = true;
    for (lang, path) in &args.corpora {
        let result = open_corpus(path)
            .and_then(|r| count_paragraph_df_parallel(r, &vocab, &cfg, lang, args.threads))
            .and_then(|table| {
                let out = freq_path(&args.out, lang);
                write_bytes_atomic(&out, &table.to_json()?)?;
                Ok((table, out))
            });
        match result {
            Ok((table, out)) => println!(
                "{lang}: {} paragraphs, {} distinct tokens -> {}",
                table.total_paragraphs,
                table.df.len(),
                out.display()
            ),
            Err(e) => {
                eprintln!("error: {lang}: {e}");
                ok = false;
            }
        }
    }
    Ok(ok)
}

pub fn cmd_select(args: &SelectArgs) -> Result<Selection> {
    let vocab = load_vocab(&args.vocab)?;
    let mut parts = Vec::with_capacity(args.languages.len());
    for lang in &args.languages {
        check_language(lang).map_err(Error::InvalidSelection)?;
        let table = FreqTable::read(freq_path(&args.freq, lang))?;
        if table.language != *lang {
            return Err(Error::LanguageMismatch {
                left: lang.clone(),
                right: table.language,
            });
        }
        let unk = table.count(vocab.unk_id());
        if unk > 0 {
            println!(
                "note: {lang}: {unk} of {} paragraphs produced {}",
                table.total_paragraphs,
                vocab.unk_token()
            );
        }
        parts.push(select_tokens(&table, args.threshold, &vocab)?);
    }
    let report = CoverageReport::new(&parts, vocab.len())?;
    let union = union_selections(&parts)?;
    print!("{report}");
    write_bytes_atomic(&args.out, &union.to_json()?)?;
    println!("selection of {} tokens -> {}", union.len(), args.out.display());
    Ok(union)
}

pub fn cmd_trim(args: &TrimArgs) -> Result<crate::surgeon::ModelReport> {
    let vocab = load_vocab(&args.vocab)?;
    let selection = Selection::read(&args.selection)?;
    let plan = build_trim_plan(&selection, &vocab)?;
    let model = read_tensor_file(&args.model)?;
    let (trimmed, report) = trim_model(&model, &plan, &args.vocab_axis)?;

    create_dir(&args.out)?;
    write_tensor_file(&trimmed, args.out.join("model.safetensors"))?;
    emit_trimmed_vocab(&plan, args.out.join("vocab.txt"))?;
    write_bytes_atomic(&args.out.join("report.json"), &report.to_json()?)?;

    println!(
        "vocabulary {} -> {}; parameters {} -> {} ({:.1}% smaller)",
        report.old_vocab_size,
        report.new_vocab_size,
        report.total_params_old,
        report.total_params_new,
        report.reduction_pct
    );
    Ok(report)
}

fn read_sample(paths: &[PathBuf]) -> Result<Vec<String>> {
    let mut lines = Vec::new();
    for path in paths {
        for (i, line) in open_corpus(path)?.split(b'\n').enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            let line = String::from_utf8(line).map_err(|_| Error::InvalidUtf8 { line: i + 1 })?;
            lines.push(line);
        }
    }
    Ok(lines)
}

pub fn cmd_verify(args: &VerifyArgs) -> Result<bool> {
    let vocab = load_vocab(&args.vocab)?;
    let selection = Selection::read(&args.selection)?;
    let plan = build_trim_plan(&selection, &vocab)?;

    let default_vocab = args.trimmed.with_file_name("vocab.txt");
    let trimmed_vocab: Vocab = match &args.trimmed_vocab {
        Some(path) => load_vocab(path)?,
        None if default_vocab.exists() => load_vocab(&default_vocab)?,
        None => plan.trimmed_vocab(&vocab)?,
    };
    let original = read_tensor_file(&args.original)?;
    let trimmed = read_tensor_file(&args.trimmed)?;
    let sample = read_sample(&args.corpus)?;

    let result = audit(
        &original,
        &trimmed,
        &plan,
        &vocab,
        &trimmed_vocab,
        &sample,
        &TokenizerConfig::CASED,
    )?;
    println!("{}", pretty_json(&result)?);
    Ok(result.passed)
}

pub fn cmd_bench(args: &BenchArgs) -> Result<crate::audit::BenchResult> {
    let result = bench_load(&args.model, args.reps as usize)?;
    println!("{}", pretty_json(&result)?);
    Ok(result)
}
