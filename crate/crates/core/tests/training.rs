mod common;

use common::{arg_model, overfit, re_corpus, re_model, sense_model, srl_corpus};
use relsrl_core::archive::{archive_kind, load_model, read_model, save_model, write_model};
use relsrl_core::models::{ModelInput, Net, Preset};
use relsrl_core::nn::Graph;
use relsrl_core::train::{batch_loss, epoch_order, pad_batch, train, TrainConfig, Trainer};
use relsrl_core::{ArgModel, Error, Model, ModelKind, ReModel};

const OVERFIT_SEED: u64 = 1;
const OVERFIT_SIZE: usize = 50;

fn overfit_config(learning_rate: f64, max_epochs: usize) -> TrainConfig {
    TrainConfig {
        learning_rate,
        batch_size: 8,
        max_epochs,
        seed: OVERFIT_SEED,
        ..Default::default()
    }
}

#[test]
fn relation_model_overfits_a_small_corpus() {
    let data = re_corpus(OVERFIT_SEED, OVERFIT_SIZE);
    let mut m = re_model(&data, Preset::Tiny, OVERFIT_SEED);
    let (reached, history) = overfit(&mut m, &data, &overfit_config(1e-2, 200));
    assert!(reached.is_some(), "F1 never reached 1.0; last loss {:?}", history.losses().last());
    let losses = history.losses();
    assert!(losses.last().unwrap() < &losses[0]);
}

#[test]
fn sense_model_overfits_a_small_corpus() {
    let data = srl_corpus(OVERFIT_SEED, OVERFIT_SIZE);
    let mut m = sense_model(&data, Preset::Tiny, OVERFIT_SEED);
    let (reached, _) = overfit(&mut m, &data, &overfit_config(1e-3, 200));
    assert!(reached.is_some());
}

#[test]
fn argument_model_overfits_a_small_corpus() {
    let data = srl_corpus(OVERFIT_SEED, OVERFIT_SIZE);
    let mut m = arg_model(&data, Preset::Tiny, OVERFIT_SEED);
    let (reached, _) = overfit(&mut m, &data, &overfit_config(1e-2, 300));
    assert!(reached.is_some());
}

#[test]
fn training_is_reproducible_bit_for_bit() {
    let data = srl_corpus(2, 24);
    let cfg = TrainConfig {
        learning_rate: 1e-2,
        batch_size: 5,
        max_epochs: 4,
        seed: 7,
        ..Default::default()
    };
    let run = |cfg: &TrainConfig| {
        let mut m = arg_model(&data, Preset::Tiny, 3);
        assert!(m.config.head.dropout > 0.0);
        let h = train(&mut m, &data, None, cfg).unwrap();
        (h, m)
    };
    let (h1, m1) = run(&cfg);
    let (h2, m2) = run(&cfg);
    assert_eq!(h1, h2);
    for id in m1.store.ids() {
        assert_eq!(m1.store.get(id).data(), m2.store.get(id).data());
    }
    let (h3, _) = run(&TrainConfig { seed: 8, ..cfg });
    assert_ne!(h1.losses(), h3.losses());
}

#[test]
fn epoch_orders_are_permutations_that_vary_by_epoch() {
    let a = epoch_order(30, 1, 1);
    let mut sorted = a.clone();
    sorted.sort_unstable();
    assert_eq!(sorted, (0..30).collect::<Vec<_>>());
    assert_eq!(a, epoch_order(30, 1, 1));
    assert_ne!(a, epoch_order(30, 1, 2));
    assert_ne!(a, epoch_order(30, 2, 1));
}

#[test]
fn best_dev_parameters_are_restored() {
    let data = re_corpus(3, 40);
    let (train_set, dev) = data.split_at(30);
    let mut m = re_model(&data, Preset::Tiny, 2);
    let cfg = TrainConfig {
        learning_rate: 1e-2,
        max_epochs: 12,
        patience: 100,
        ..Default::default()
    };
    let history = train(&mut m, train_set, Some(dev), &cfg).unwrap();
    assert_eq!(history.rows.len(), 12);
    let best = history.best_metric.unwrap();
    let best_epoch = history.best_epoch.unwrap();
    assert_eq!(history.rows[best_epoch - 1].dev_metric, Some(best));
    assert!(history.rows.iter().all(|r| r.dev_metric.unwrap() <= best));
    assert_eq!(m.evaluate(dev).unwrap().metric, best);
}

#[test]
fn history_renders_one_line_per_epoch() {
    let data = srl_corpus(4, 10);
    let mut m = sense_model(&data, Preset::Tiny, 0);
    let cfg = TrainConfig {
        learning_rate: 1e-3,
        max_epochs: 3,
        ..Default::default()
    };
    let h = train(&mut m, &data, Some(&data), &cfg).unwrap();
    assert_eq!(h.to_table().lines().count(), 4);
    assert_eq!(h.to_series().lines().count(), 4);
    for line in h.to_series().lines().skip(1) {
        assert_eq!(line.split('\t').count(), 3, "{line}");
    }
}

fn forward_equal_after_archive<N: Net>(m: &Model<N>, instances: &[N::Instance]) {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.bin");
    save_model(m, &path).unwrap();
    assert_eq!(archive_kind(&path).unwrap(), N::KIND);
    let back: Model<N> = load_model(&path).unwrap();
    assert_eq!(back.config, m.config);
    assert_eq!(back.vocab.tokens(), m.vocab.tokens());
    for inst in instances {
        let e = m.encode(inst).unwrap();
        let (a, b) = (m.logit_values(&e).unwrap(), back.logit_values(&back.encode(inst).unwrap()).unwrap());
        assert_eq!(a.1, b.1);
        assert!(a.0.iter().zip(&b.0).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
    let (mut first, mut second) = (Vec::new(), Vec::new());
    write_model(m, &mut first).unwrap();
    write_model(&back, &mut second).unwrap();
    assert_eq!(first, second);
}

#[test]
fn archives_reproduce_the_forward_pass_exactly() {
    let re = re_corpus(5, 16);
    let srl = srl_corpus(5, 16);
    let cfg = TrainConfig {
        learning_rate: 1e-2,
        max_epochs: 2,
        freeze_encoder: true,
        ..Default::default()
    };
    let mut r = re_model(&re, Preset::Tiny, 1);
    train(&mut r, &re, None, &cfg).unwrap();
    forward_equal_after_archive(&r, &re);
    let mut s = sense_model(&srl, Preset::Tiny, 1);
    train(&mut s, &srl, None, &cfg).unwrap();
    forward_equal_after_archive(&s, &srl);
    let mut a = arg_model(&srl, Preset::Tiny, 1);
    train(&mut a, &srl, None, &cfg).unwrap();
    forward_equal_after_archive(&a, &srl);

    // the frozen flags travel with the weights
    let mut bytes = Vec::new();
    write_model(&a, &mut bytes).unwrap();
    let back: ArgModel = read_model(bytes.as_slice()).unwrap();
    for id in a.store.ids() {
        assert_eq!(a.store.is_frozen(id), back.store.is_frozen(id));
    }
}

#[test]
fn archives_refuse_the_wrong_model_kind() {
    let re = re_corpus(6, 4);
    let m = re_model(&re, Preset::Tiny, 0);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("re.bin");
    save_model(&m, &path).unwrap();
    assert_eq!(archive_kind(&path).unwrap(), ModelKind::Relation);
    let err = load_model::<relsrl_core::models::SenseNet>(&path).unwrap_err();
    assert!(err.to_string().contains("relation"), "{err}");
    let junk = dir.path().join("junk.bin");
    std::fs::write(&junk, b"not a model").unwrap();
    assert!(load_model::<relsrl_core::models::ReNet>(&junk).is_err());
    let mut bytes = Vec::new();
    write_model(&m, &mut bytes).unwrap();
    bytes.truncate(bytes.len() - 3);
    assert!(read_model::<relsrl_core::models::ReNet, _>(bytes.as_slice()).is_err());
}

fn check_padding<N: Net>(m: &Model<N>, instances: &[N::Instance]) {
    let encoded = m.encode_all(instances).unwrap();
    let refs: Vec<&N::Encoded> = encoded.iter().collect();
    let batch = pad_batch(&refs, m.vocab.pad_id()).unwrap();
    assert!(encoded.iter().any(|e| e.input_ids().len() < batch.width));
    for (i, e) in encoded.iter().enumerate() {
        let (alone, cols) = m.logit_values(e).unwrap();
        let (padded, pcols) = m.logit_values_in(e, &batch.row(i)).unwrap();
        assert_eq!(cols, pcols);
        for (a, b) in alone.iter().zip(&padded) {
            assert!((a - b).abs() <= 1e-8, "instance {i}: {a} vs {b}");
        }
    }

    let mean = {
        let losses: Vec<f64> = encoded.iter().map(|e| m.instance_loss(e).unwrap().unwrap()).collect();
        losses.iter().sum::<f64>() / losses.len() as f64
    };
    let mut g = Graph::new(&m.store);
    let l = batch_loss(m, &mut g, &refs, &batch).unwrap().unwrap();
    assert!((g.scalar(l) - mean).abs() <= 1e-8, "{} vs {mean}", g.scalar(l));

    let same = vec![&encoded[0]; 4];
    let batch = pad_batch(&same, m.vocab.pad_id()).unwrap();
    let mut g = Graph::new(&m.store);
    let l = batch_loss(m, &mut g, &same, &batch).unwrap().unwrap();
    let single = m.instance_loss(&encoded[0]).unwrap().unwrap();
    assert!((g.scalar(l) - single).abs() <= 1e-10);
}

#[test]
fn padding_does_not_change_outputs_or_losses() {
    let re = re_corpus(7, 8);
    let srl = srl_corpus(7, 8);
    check_padding(&re_model(&re, Preset::Tiny, 2), &re);
    check_padding(&sense_model(&srl, Preset::Tiny, 2), &srl);
    check_padding(&arg_model(&srl, Preset::Tiny, 2), &srl);
    assert!(matches!(pad_batch::<relsrl_core::encoding::ReEncoded>(&[], 0), Err(Error::Empty(_))));
}

#[test]
fn non_finite_weights_are_reported_by_name() {
    let re = re_corpus(8, 4);
    let mut m: ReModel = re_model(&re, Preset::Tiny, 0);
    let id = m.store.ids().find(|&id| m.store.name(id).starts_with("re.mlp")).unwrap();
    let name = m.store.name(id).to_string();
    m.store.get_mut(id).data_mut()[0] = f64::NAN;
    let encoded = m.encode_all(&re).unwrap();
    let refs: Vec<_> = encoded.iter().collect();
    let mut trainer = Trainer::new(&m, 1e-3, Some(1.0));
    match trainer.step(&mut m, &refs, None, (3, 1)) {
        Err(Error::NonFinite { epoch, batch, param }) => {
            assert_eq!((epoch, batch), (3, 1));
            assert_eq!(param.as_deref(), Some(name.as_str()));
        }
        other => panic!("expected a non-finite error, got {other:?}"),
    }
}

#[test]
fn relations_outside_the_inventory_are_left_out_of_the_loss() {
    let re = re_corpus(9, 30);
    let known = &re[0].relation;
    let vocab = relsrl_core::data::re_vocab(&re).unwrap();
    let labels = relsrl_core::labels::LabelVocab::relations([known.as_str(), "no_relation"]).unwrap();
    let cfg = relsrl_core::ModelConfig::preset(Preset::Tiny, vocab.len());
    let m = ReModel::new(cfg, vocab, labels, 0).unwrap();
    let encoded = m.encode_all(&re).unwrap();
    let (with, without): (Vec<_>, Vec<_>) = encoded.iter().partition(|e| e.relation.is_some());
    assert!(!with.is_empty() && !without.is_empty());
    for e in &without {
        assert_eq!(m.instance_loss(e).unwrap(), None);
    }
    let refs: Vec<_> = encoded.iter().collect();
    let batch = pad_batch(&refs, m.vocab.pad_id()).unwrap();
    let mut g = Graph::new(&m.store);
    let l = batch_loss(&m, &mut g, &refs, &batch).unwrap().unwrap();
    let mean = with.iter().map(|e| m.instance_loss(e).unwrap().unwrap()).sum::<f64>() / with.len() as f64;
    assert!((g.scalar(l) - mean).abs() <= 1e-8);
    let mut g = Graph::new(&m.store);
    let batch = pad_batch(&without, m.vocab.pad_id()).unwrap();
    assert!(batch_loss(&m, &mut g, &without, &batch).unwrap().is_none());
}
