mod common;

use common::oracles::{brute_force_wordpiece, random_vocab, random_word};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use relsrl_core::tokenizer::{tokenize_words, wordpiece, Vocab, MAX_WORD_CHARS, UNK};

const MASKS: [&str; 3] = ["SUBJ-PER", "OBJ-LOC", "OBJ-DATE"];

#[test]
fn greedy_agrees_with_brute_force_segmenter() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut unk = 0;
    let mut split = 0;
    for _ in 0..20 {
        let vocab = random_vocab(&mut rng, 40, &MASKS);
        for _ in 0..50 {
            let word = random_word(&mut rng, 8);
            let got = wordpiece(&word, &vocab).unwrap();
            assert_eq!(got, brute_force_wordpiece(&word, &vocab), "word {word}");
            unk += (got == [UNK]) as usize;
            split += (got.len() > 1) as usize;
        }
    }
    // the fuzz set exercises both outcomes
    assert!(unk > 50 && split > 50, "unk {unk}, split {split}");
}

#[test]
fn greedy_dead_end_is_unknown_even_when_another_split_exists() {
    let vocab = Vocab::from_tokens(["[PAD]", "[UNK]", "[CLS]", "[SEP]", "ab", "a", "##bc"]).unwrap();
    assert_eq!(wordpiece("abc", &vocab).unwrap(), [UNK]);
    assert_eq!(brute_force_wordpiece("abc", &vocab), [UNK]);
}

#[test]
fn overlong_words_are_unknown() {
    let vocab = Vocab::build(["a"], std::iter::empty(), 4).unwrap();
    let long = "a".repeat(MAX_WORD_CHARS + 1);
    assert_eq!(wordpiece(&long, &vocab).unwrap(), [UNK]);
    assert_eq!(wordpiece(&"a".repeat(MAX_WORD_CHARS), &vocab).unwrap().len(), MAX_WORD_CHARS);
}

fn random_sentence(rng: &mut ChaCha8Rng) -> Vec<String> {
    let n = rng.gen_range(1..12);
    (0..n)
        .map(|_| match rng.gen_range(0..10) {
            0 => MASKS[rng.gen_range(0..MASKS.len())].to_string(),
            1 => format!("{}z", random_word(rng, 3)),
            _ => random_word(rng, 7),
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn sentences_tile_and_round_trip(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vocab = random_vocab(&mut rng, 30, &MASKS);
        let words = random_sentence(&mut rng);
        let t = tokenize_words(&words, &vocab).unwrap();
        prop_assert!(t.alignment_tiles());
        prop_assert_eq!(&t, &tokenize_words(&words, &vocab).unwrap());
        for (w, word) in words.iter().enumerate() {
            let pieces = &t.sub_tokens[t.word_to_pieces[w].clone()];
            if MASKS.contains(&word.as_str()) {
                prop_assert_eq!(pieces, &[word.clone()][..]);
            } else if word.contains('z') {
                prop_assert_eq!(pieces, &[UNK.to_string()][..]);
            } else if pieces != [UNK] {
                prop_assert_eq!(&t.reconstruct_word(w), word);
            }
        }
        for (tok, &id) in t.sub_tokens.iter().zip(&t.sub_ids) {
            prop_assert_eq!(vocab.token(id), Some(tok.as_str()));
        }
        let owners = t.piece_to_word();
        prop_assert!(owners.windows(2).all(|p| p[0] <= p[1]));
    }

    #[test]
    fn built_vocab_never_emits_unknown(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let corpus: Vec<String> = (0..20).map(|_| random_word(&mut rng, 12)).collect();
        let vocab = Vocab::build(corpus.iter().map(String::as_str), MASKS.iter().map(|s| s.to_string()), 5).unwrap();
        let t = tokenize_words(&corpus, &vocab).unwrap();
        prop_assert!(t.sub_tokens.iter().all(|p| p != UNK));
        for w in 0..corpus.len() {
            prop_assert_eq!(&t.reconstruct_word(w), &corpus[w]);
        }
    }
}

#[test]
fn vocab_text_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let vocab = random_vocab(&mut rng, 25, &MASKS);
    let again = Vocab::parse(&vocab.to_text()).unwrap();
    assert_eq!(again.tokens(), vocab.tokens());
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("vocab.txt");
    vocab.save(&path).unwrap();
    assert_eq!(Vocab::load(&path).unwrap().tokens(), vocab.tokens());
}
