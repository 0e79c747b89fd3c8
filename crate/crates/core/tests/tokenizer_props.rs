mod common;

use std::collections::BTreeSet;

use proptest::prelude::*;
use vocab_trim::tokenizer::{encode, wordpiece_tokenize, TokenizerConfig, Vocab};

use common::brute_force_wordpiece;

fn piece() -> impl Strategy<Value = String> {
    ("[abcd]{1,3}", any::<bool>()).prop_map(|(s, cont)| if cont { format!("##{s}") } else { s })
}

/// A vocabulary over a tiny alphabet plus a subset of it that keeps [UNK].
fn vocab_pair() -> impl Strategy<Value = (Vec<String>, Vec<String>)> {
    prop::collection::btree_set(piece(), 1..24).prop_flat_map(|set: BTreeSet<String>| {
        let mut full = vec!["[PAD]".to_string(), "[UNK]".to_string()];
        full.extend(set);
        let n = full.len();
        (Just(full), prop::collection::vec(any::<bool>(), n))
    })
    .prop_map(|(full, keep)| {
        let sub = full
            .iter()
            .zip(&keep)
            .filter(|(t, &k)| k || *t == "[UNK]")
            .map(|(t, _)| t.clone())
            .collect();
        (full, sub)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn matches_brute_force((full, sub) in vocab_pair(), word in "[abcde]{1,9}") {
        let cfg = TokenizerConfig::CASED;
        for tokens in [&full, &sub] {
            let v = Vocab::from_tokens(tokens.clone()).unwrap();
            prop_assert_eq!(
                wordpiece_tokenize(&word, &v, &cfg),
                brute_force_wordpiece(&word, tokens, "[UNK]", cfg.max_word_chars)
            );
        }
    }

    #[test]
    fn subset_preserves_covered_segmentations((full, sub) in vocab_pair(), word in "[abcd]{1,9}") {
        let cfg = TokenizerConfig::CASED;
        let vf = Vocab::from_tokens(full.clone()).unwrap();
        let vs = Vocab::from_tokens(sub.clone()).unwrap();
        let pieces = brute_force_wordpiece(&word, &full, "[UNK]", cfg.max_word_chars);
        prop_assert_eq!(&wordpiece_tokenize(&word, &vf, &cfg), &pieces);
        let covered = pieces != ["[UNK]"] && pieces.iter().all(|p| sub.contains(p));
        if covered {
            prop_assert_eq!(wordpiece_tokenize(&word, &vs, &cfg), pieces);
        }
    }

    #[test]
    fn unk_count_never_drops_on_subset((full, sub) in vocab_pair(), text in "[abcd ,.]{0,40}") {
        let cfg = TokenizerConfig::CASED;
        let vf = Vocab::from_tokens(full).unwrap();
        let vs = Vocab::from_tokens(sub).unwrap();
        let unk_full = encode(&text, &vf, &cfg).iter().filter(|&&i| i == vf.unk_id()).count();
        let unk_sub = encode(&text, &vs, &cfg).iter().filter(|&&i| i == vs.unk_id()).count();
        prop_assert!(unk_sub >= unk_full);
    }

    #[test]
    fn encode_is_pure_and_in_range((full, _) in vocab_pair(), text in "\\PC{0,40}") {
        let cfg = TokenizerConfig::CASED;
        let v = Vocab::from_tokens(full).unwrap();
        let a = encode(&text, &v, &cfg);
        prop_assert_eq!(&a, &encode(&text, &v, &cfg));
        prop_assert!(a.iter().all(|&id| (id as usize) < v.len()));
    }
}

#[test]
fn unicode_words_match_brute_force() {
    let tokens: Vec<String> = ["[UNK]", "é", "##té", "##t", "##é", "中", "##文", "été"]
        .map(String::from)
        .to_vec();
    let v = Vocab::from_tokens(tokens.clone()).unwrap();
    let cfg = TokenizerConfig::CASED;
    for word in ["été", "étété", "中文", "ét", "x"] {
        assert_eq!(
            wordpiece_tokenize(word, &v, &cfg),
            brute_force_wordpiece(word, &tokens, "[UNK]", 100),
            "{word}"
        );
    }
}
