//! Test-only oracles and fixtures. Nothing here calls into the code paths it
//! is used to check.
#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vocab_trim::surgeon::BertArch;
use vocab_trim::tensor_store::{TensorEntry, TensorFile};

/// WordPiece by exhaustive scan: at every position try every vocabulary entry
/// and keep the longest one that fits.
pub fn brute_force_wordpiece(word: &str, tokens: &[String], unk: &str, max_chars: usize) -> Vec<String> {
    let chars: Vec<char> = word.chars().collect();
    if chars.is_empty() {
        return vec![];
    }
    if chars.len() > max_chars {
        return vec![unk.to_string()];
    }
    let mut pos = 0;
    let mut out = Vec::new();
    while pos < chars.len() {
        let rest: String = chars[pos..].iter().collect();
        let mut best: Option<(&String, usize)> = None;
        for t in tokens {
            let body = if pos == 0 {
                t.as_str()
            } else {
                match t.strip_prefix("##") {
                    Some(b) => b,
                    None => continue,
                }
            };
            if body.is_empty() || !rest.starts_with(body) {
                continue;
            }
            let n = body.chars().count();
            if best.is_none_or(|(_, m)| n > m) {
                best = Some((t, n));
            }
        }
        match best {
            Some((t, n)) => {
                out.push(t.clone());
                pos += n;
            }
            None => return vec![unk.to_string()],
        }
    }
    out
}

/// Tensor names and shapes of a BERT encoder with a pooler, laid out the way
/// common checkpoints store them.
pub fn bert_tensor_shapes(arch: &BertArch, vocab_size: usize) -> Vec<(String, Vec<usize>)> {
    let h = arch.hidden as usize;
    let i = arch.intermediate as usize;
    let mut t = vec![
        ("embeddings.word_embeddings.weight".to_string(), vec![vocab_size, h]),
        ("embeddings.position_embeddings.weight".to_string(), vec![arch.max_positions as usize, h]),
        ("embeddings.token_type_embeddings.weight".to_string(), vec![arch.type_vocab as usize, h]),
        ("embeddings.LayerNorm.weight".to_string(), vec![h]),
        ("embeddings.LayerNorm.bias".to_string(), vec![h]),
    ];
    for l in 0..arch.layers {
        let p = format!("encoder.layer.{l}");
        for m in ["query", "key", "value"] {
            t.push((format!("{p}.attention.self.{m}.weight"), vec![h, h]));
            t.push((format!("{p}.attention.self.{m}.bias"), vec![h]));
        }
        t.push((format!("{p}.attention.output.dense.weight"), vec![h, h]));
        t.push((format!("{p}.attention.output.dense.bias"), vec![h]));
        t.push((format!("{p}.attention.output.LayerNorm.weight"), vec![h]));
        t.push((format!("{p}.attention.output.LayerNorm.bias"), vec![h]));
        t.push((format!("{p}.intermediate.dense.weight"), vec![i, h]));
        t.push((format!("{p}.intermediate.dense.bias"), vec![i]));
        t.push((format!("{p}.output.dense.weight"), vec![h, i]));
        t.push((format!("{p}.output.dense.bias"), vec![h]));
        t.push((format!("{p}.output.LayerNorm.weight"), vec![h]));
        t.push((format!("{p}.output.LayerNorm.bias"), vec![h]));
    }
    t.push(("pooler.dense.weight".to_string(), vec![h, h]));
    t.push(("pooler.dense.bias".to_string(), vec![h]));
    t
}

pub fn shape_sum(shapes: &[(String, Vec<usize>)]) -> u64 {
    shapes
        .iter()
        .map(|(_, s)| s.iter().product::<usize>() as u64)
        .sum()
}

pub const TINY: BertArch = BertArch {
    hidden: 8,
    layers: 2,
    heads: 2,
    intermediate: 32,
    max_positions: 16,
    type_vocab: 2,
};

pub fn random_entry(rng: &mut ChaCha8Rng, shape: Vec<usize>) -> TensorEntry {
    let n: usize = shape.iter().product();
    let values: Vec<f32> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    TensorEntry::from_f32(shape, &values).unwrap()
}

/// Random-valued BERT checkpoint; with `mlm_bias` an output bias of length V
/// is added, as masked-LM checkpoints store it.
pub fn bert_checkpoint(arch: &BertArch, vocab_size: usize, seed: u64, mlm_bias: bool) -> TensorFile {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tf = TensorFile::new();
    for (name, shape) in bert_tensor_shapes(arch, vocab_size) {
        tf.insert(name, random_entry(&mut rng, shape)).unwrap();
    }
    if mlm_bias {
        tf.insert("cls.predictions.bias", random_entry(&mut rng, vec![vocab_size]))
            .unwrap();
    }
    tf
}

/// A synthetic multilingual vocabulary and per-language corpora.
pub struct Trilingual {
    pub tokens: Vec<String>,
    pub corpora: Vec<(String, Vec<String>)>,
}

const SPECIALS: [&str; 5] = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"];

fn word(rng: &mut ChaCha8Rng, alphabet: &[char], len: usize) -> String {
    (0..len).map(|_| *alphabet.choose(rng).unwrap()).collect()
}

/// Three languages with disjoint alphabets, shared punctuation and digits,
/// and Zipf-like word frequencies so that a threshold keeps a strict subset.
pub fn trilingual(seed: u64, lines_per_language: usize) -> Trilingual {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let langs: [(&str, Vec<char>); 3] = [
        ("en", ('a'..='m').collect()),
        ("fr", "àâçéèêëîïôûùn".chars().collect()),
        ("el", ('α'..='μ').collect()),
    ];
    let mut tokens: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
    tokens.extend((0..20).map(|i| format!("[unused{i}]")));
    tokens.extend(".,!?;:".chars().map(String::from));
    tokens.extend(('0'..='9').map(String::from));
    for (_, alphabet) in &langs {
        for &c in alphabet {
            tokens.push(c.to_string());
            tokens.push(format!("##{c}"));
        }
    }
    let mut pools = Vec::new();
    for (_, alphabet) in &langs {
        let mut pool = Vec::new();
        while pool.len() < 150 {
            let len = rng.gen_range(2..6);
            let w = word(&mut rng, alphabet, len);
            if !tokens.contains(&w) && !pool.contains(&w) {
                pool.push(w);
            }
        }
        for w in &pool {
            tokens.push(w.clone());
            // Some words also get a continuation form so they chain.
            if rng.gen_bool(0.3) {
                tokens.push(format!("##{w}"));
            }
        }
        pools.push(pool);
    }
    tokens.sort();
    tokens.dedup();
    // Specials first, in their usual positions.
    tokens.retain(|t| !SPECIALS.contains(&t.as_str()));
    let mut ordered: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
    ordered.extend(tokens);
    ordered.shuffle(&mut rng);
    let pos = |ordered: &Vec<String>, t: &str| ordered.iter().position(|x| x == t).unwrap();
    for (i, s) in SPECIALS.iter().enumerate() {
        let j = pos(&ordered, s);
        ordered.swap(i, j);
    }

    let mut corpora = Vec::new();
    for ((lang, alphabet), pool) in langs.iter().zip(&pools) {
        let mut lines = Vec::with_capacity(lines_per_language);
        for _ in 0..lines_per_language {
            if rng.gen_bool(0.02) {
                lines.push(String::new());
                continue;
            }
            let n = rng.gen_range(3..12);
            let mut parts = Vec::with_capacity(n);
            for _ in 0..n {
                let r: f64 = rng.gen();
                let part = if r < 0.85 {
                    // Zipf-like: index ~ pool.len() * u^3
                    let u: f64 = rng.gen();
                    let k = ((u * u * u) * pool.len() as f64) as usize;
                    pool[k.min(pool.len() - 1)].clone()
                } else if r < 0.93 {
                    let len = rng.gen_range(3..9);
                    word(&mut rng, alphabet, len)
                } else if r < 0.97 {
                    rng.gen_range(0..1000).to_string()
                } else {
                    // Out-of-alphabet word: always [UNK].
                    "xyz".chars().cycle().take(rng.gen_range(1..4)).collect::<String>().to_uppercase()
                };
                parts.push(part);
            }
            let mut line = parts.join(" ");
            if rng.gen_bool(0.5) {
                line.push_str([".", "!", "?"][rng.gen_range(0..3)]);
            }
            lines.push(line);
        }
        corpora.push((lang.to_string(), lines));
    }
    Trilingual {
        tokens: ordered,
        corpora,
    }
}

/// Files for an end-to-end run: vocabulary, per-language corpora, checkpoint.
pub struct PipelineFixture {
    pub vocab: std::path::PathBuf,
    pub corpora: Vec<(String, std::path::PathBuf)>,
    pub model: std::path::PathBuf,
    pub vocab_size: usize,
}

pub fn write_pipeline_fixture(dir: &std::path::Path, seed: u64, lines_per_language: usize, arch: &BertArch) -> PipelineFixture {
    let t = trilingual(seed, lines_per_language);
    let vocab = dir.join("vocab.txt");
    let mut text = t.tokens.join("\n");
    text.push('\n');
    std::fs::write(&vocab, text).unwrap();
    let mut corpora = Vec::new();
    for (lang, lines) in &t.corpora {
        let path = dir.join(format!("{lang}.txt"));
        std::fs::write(&path, lines.join("\n")).unwrap();
        corpora.push((lang.clone(), path));
    }
    let model = dir.join("model.safetensors");
    let tf = bert_checkpoint(arch, t.tokens.len(), seed ^ 0x5eed, true);
    vocab_trim::tensor_store::write_tensor_file(&tf, &model).unwrap();
    PipelineFixture {
        vocab,
        corpora,
        model,
        vocab_size: t.tokens.len(),
    }
}

pub fn cli<I, S>(args: I) -> std::process::Output
where
    I: IntoIterator<Item = S>,
    S: AsRef<std::ffi::OsStr>,
{
    std::process::Command::new(env!("CARGO_BIN_EXE_vocab-trim"))
        .args(args)
        .output()
        .expect("failed to spawn vocab-trim")
}
