mod common;

use common::{arg_model, check_config, grad_check, re_corpus, re_model, rebuild, sense_model, srl_corpus, GRAD_STEP};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use relsrl_core::labels::LabelVocab;
use relsrl_core::models::{Net, OwnedRow, Preset};
use relsrl_core::nn::gradcheck::check_input;
use relsrl_core::nn::Graph;
use relsrl_core::train::Trainer;
use relsrl_core::{Error, Model, ModelConfig, Prediction};

const GRAD_TOL: f64 = 1e-4;

fn assert_grads<N: Net>(model: &mut Model<N>, enc: &N::Encoded, what: &str) {
    let report = grad_check(model, enc);
    assert!(report.checked > 1000, "{what}: only {} entries", report.checked);
    assert!(
        report.max_rel_error < GRAD_TOL,
        "{what}: max relative error {:e} at {:?}",
        report.max_rel_error,
        report.worst
    );
}

#[test]
fn relation_gradients_match_finite_differences() {
    let data = re_corpus(3, 20);
    let m = re_model(&data, Preset::Tiny, 0);
    assert!(m.labels.num_classes() > 2);
    let mut m = rebuild(&m, check_config(m.vocab.len()), 1);
    let enc = m.encode(&data[0]).unwrap();
    assert_grads(&mut m, &enc, "relation");
}

#[test]
fn sense_gradients_match_finite_differences() {
    let data = srl_corpus(3, 20);
    let m = sense_model(&data, Preset::Tiny, 0);
    let mut m = rebuild(&m, check_config(m.vocab.len()), 1);
    let enc = m.encode(&data[0]).unwrap();
    assert_grads(&mut m, &enc, "sense");
}

#[test]
fn argument_gradients_match_finite_differences() {
    let data = srl_corpus(3, 20);
    let m = arg_model(&data, Preset::Tiny, 0);
    let mut m = rebuild(&m, check_config(m.vocab.len()), 1);
    let enc = m.encode(&data[0]).unwrap();
    assert_grads(&mut m, &enc, "argument");
}

#[test]
fn relation_head_ignores_rows_past_the_kept_length() {
    let data = re_corpus(4, 20);
    let m = re_model(&data, Preset::Tiny, 0);
    assert!(m.labels.num_classes() > 2);
    let m = rebuild(&m, check_config(m.vocab.len()), 2);
    let enc = m.encode(&data[0]).unwrap();
    let d = m.config.encoder.model_dim;
    let rows = enc.input_ids.len();
    assert!(rows > enc.keep_len);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let h: Vec<f64> = (0..rows * d).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let logits = |h: Vec<f64>| {
        let mut g = Graph::new(&m.store);
        let x = g.input(rows, d, h).unwrap();
        let l = m.net.forward_from_hidden(&mut g, x, &enc).unwrap();
        g.value(l).to_vec()
    };
    let base = logits(h.clone());
    let mut zeroed = h.clone();
    zeroed[enc.keep_len * d..].iter_mut().for_each(|x| *x = 0.0);
    assert_eq!(base, logits(zeroed));

    let target = enc.relation.unwrap();
    let report = check_input(&m.store, rows, d, &h, GRAD_STEP, |g, x| {
        let l = m.net.forward_from_hidden(g, x, &enc).unwrap();
        g.cross_entropy(l, &[target], &[true])
    })
    .unwrap();
    assert!(report.max_rel_error < GRAD_TOL, "{report:?}");

    let mut g = Graph::new(&m.store);
    let x = g.input(rows, d, h.clone()).unwrap();
    let l = m.net.forward_from_hidden(&mut g, x, &enc).unwrap();
    let loss = g.cross_entropy(l, &[target], &[true]).unwrap();
    let grads = g.backward(loss).unwrap();
    let dh = grads.wrt(x).unwrap();
    assert!(dh[enc.keep_len * d..].iter().all(|&v| v == 0.0));
    assert!(dh[..enc.keep_len * d].iter().any(|&v| v != 0.0));
}

fn differs(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).any(|(x, y)| (x - y).abs() > 1e-9)
}

#[test]
fn swapping_entity_positions_changes_relation_logits() {
    let data = re_corpus(5, 10);
    let m = re_model(&data, Preset::Tiny, 3);
    for inst in &data {
        let enc = m.encode(inst).unwrap();
        let mut swapped = enc.clone();
        std::mem::swap(&mut swapped.pos_subj, &mut swapped.pos_obj);
        if enc.pos_subj != enc.pos_obj {
            assert!(differs(&m.logit_values(&enc).unwrap().0, &m.logit_values(&swapped).unwrap().0));
        }
    }
}

#[test]
fn predicate_indicator_changes_sense_logits_where_it_flips() {
    let data = srl_corpus(6, 5);
    let m = sense_model(&data, Preset::Tiny, 3);
    for inst in &data {
        let enc = m.encode(inst).unwrap();
        let mut flipped = enc.clone();
        flipped.indicator.iter_mut().for_each(|b| *b = 1 - *b);
        let (a, cols) = m.logit_values(&enc).unwrap();
        let (b, _) = m.logit_values(&flipped).unwrap();
        for i in 0..enc.keep_len {
            assert!(differs(&a[i * cols..(i + 1) * cols], &b[i * cols..(i + 1) * cols]), "row {i}");
        }
    }
}

#[test]
fn moving_the_predicate_changes_every_argument_row() {
    let data = srl_corpus(7, 5);
    let m = arg_model(&data, Preset::Tiny, 3);
    for inst in &data {
        let enc = m.encode(inst).unwrap();
        let mut moved = enc.clone();
        let other = if enc.predicate_piece == 1 { 2 } else { 1 };
        moved.predicate_piece = other;
        moved.indicator = (0..enc.keep_len).map(|i| (i == other) as usize).collect();
        let (a, cols) = m.logit_values(&enc).unwrap();
        let (b, _) = m.logit_values(&moved).unwrap();
        for i in 0..enc.keep_len {
            assert!(differs(&a[i * cols..(i + 1) * cols], &b[i * cols..(i + 1) * cols]), "row {i}");
        }
    }
}

#[test]
fn logit_shapes_follow_the_task() {
    let re = re_corpus(8, 3);
    let m = re_model(&re, Preset::Tiny, 0);
    for inst in &re {
        let (v, cols) = m.logit_values(&m.encode(inst).unwrap()).unwrap();
        assert_eq!((v.len(), cols), (m.labels.num_classes(), m.labels.num_classes()));
    }
    let srl = srl_corpus(8, 3);
    let sense = sense_model(&srl, Preset::Tiny, 0);
    let args = arg_model(&srl, Preset::Tiny, 0);
    for inst in &srl {
        let enc = sense.encode(inst).unwrap();
        let (v, cols) = sense.logit_values(&enc).unwrap();
        assert_eq!((v.len(), cols), (enc.keep_len * sense.labels.num_classes(), sense.labels.num_classes()));
        let enc = args.encode(inst).unwrap();
        let (v, cols) = args.logit_values(&enc).unwrap();
        assert_eq!((v.len(), cols), (enc.keep_len * args.labels.num_classes(), args.labels.num_classes()));
        match args.predict(&enc).unwrap() {
            Prediction::Arguments { word_tags, .. } => assert_eq!(word_tags.len(), inst.words.len()),
            other => panic!("unexpected {other:?}"),
        }
    }
}

#[test]
fn malformed_rows_and_predicates_are_rejected() {
    let srl = srl_corpus(9, 1);
    let m = arg_model(&srl, Preset::Tiny, 0);
    let enc = m.encode(&srl[0]).unwrap();
    let mut row = OwnedRow::unpadded(&enc);
    row.segment_ids.pop();
    assert!(m.logit_values_in(&enc, &row.as_row()).is_err());
    let mut bad = enc.clone();
    bad.predicate_piece = bad.keep_len;
    assert!(matches!(m.logit_values(&bad), Err(Error::Instance { .. })));
}

#[test]
fn construction_checks_vocab_and_label_kind() {
    let srl = srl_corpus(10, 3);
    let m = sense_model(&srl, Preset::Tiny, 0);
    let cfg = ModelConfig::preset(Preset::Tiny, m.vocab.len() + 1);
    assert!(relsrl_core::SenseModel::new(cfg, m.vocab.clone(), m.labels.clone(), 0).is_err());
    let cfg = ModelConfig::preset(Preset::Tiny, m.vocab.len());
    let roles = LabelVocab::arguments(["ARG1"]).unwrap();
    assert!(relsrl_core::SenseModel::new(cfg, m.vocab.clone(), roles, 0).is_err());
}

#[test]
fn prediction_is_a_pure_function_of_weights_and_input() {
    let re = re_corpus(11, 20);
    let a = re_model(&re, Preset::Tiny, 5);
    let b = re_model(&re, Preset::Tiny, 5);
    let c = re_model(&re, Preset::Tiny, 6);
    assert_eq!(a.predict_all(&re).unwrap(), a.predict_all(&re).unwrap());
    assert_eq!(a.predict_all(&re).unwrap(), b.predict_all(&re).unwrap());
    let enc = a.encode(&re[0]).unwrap();
    assert_eq!(a.logit_values(&enc).unwrap(), b.logit_values(&enc).unwrap());
    assert_ne!(a.logit_values(&enc).unwrap(), c.logit_values(&enc).unwrap());
}

fn mean_loss<N: Net>(m: &Model<N>, encoded: &[N::Encoded]) -> f64 {
    let losses: Vec<f64> = encoded.iter().filter_map(|e| m.instance_loss(e).unwrap()).collect();
    losses.iter().sum::<f64>() / losses.len() as f64
}

fn one_step_decreases<N: Net>(mut m: Model<N>, data: &[N::Instance]) -> (f64, f64) {
    let encoded = m.encode_all(&data[..1]).unwrap();
    let before = mean_loss(&m, &encoded);
    let mut trainer = Trainer::new(&m, 1e-3, Some(1.0));
    let refs: Vec<&N::Encoded> = encoded.iter().collect();
    let reported = trainer.step(&mut m, &refs, None, (0, 0)).unwrap().unwrap();
    assert!((reported - before).abs() < 1e-9, "{reported} vs {before}");
    (before, mean_loss(&m, &encoded))
}

#[test]
fn one_optimizer_step_lowers_a_single_instance_loss() {
    for seed in 0..20 {
        let re = re_corpus(100 + seed, 8);
        let srl = srl_corpus(100 + seed, 8);
        let runs = [
            ("relation", one_step_decreases(re_model(&re, Preset::Desk, seed), &re)),
            ("sense", one_step_decreases(sense_model(&srl, Preset::Desk, seed), &srl)),
            ("argument", one_step_decreases(arg_model(&srl, Preset::Desk, seed), &srl)),
        ];
        for (what, (before, after)) in runs {
            assert!(after < before, "{what} seed {seed}: {before} -> {after}");
        }
    }
}

#[test]
fn frozen_encoder_is_left_untouched_by_a_step() {
    let srl = srl_corpus(12, 8);
    let mut m = arg_model(&srl, Preset::Tiny, 0);
    assert!(m.freeze_encoder(true) > 0);
    let before = m.store.clone();
    let encoded = m.encode_all(&srl).unwrap();
    let refs: Vec<_> = encoded.iter().collect();
    let mut trainer = Trainer::new(&m, 1e-2, None);
    trainer.step(&mut m, &refs, None, (0, 0)).unwrap();
    let mut head_moved = false;
    for id in m.store.ids() {
        let same = m.store.get(id).data() == before.get(id).data();
        if m.store.name(id).starts_with("encoder.") {
            assert!(same, "{} moved", m.store.name(id));
        } else {
            head_moved |= !same;
        }
    }
    assert!(head_moved);
}
