use std::path::Path;

use numcore::{adam_step, clip_global_norm, AdamState, NumError, Scalar, Tape, Tensor};
use rand::seq::SliceRandom;
use rand::RngCore;

use crate::corpus::{build_vocabulary, Domain, Example, Splits, Vocabulary};
use crate::embed::{load_pretrained, load_pretrained_from_table, random_embedding, EmbeddingMatrix, WordVectors};
use crate::error::{Error, Result};
use crate::evaluator::Ranker;
use crate::model::{batch_loss, xavier, ModelDims, ModelParams, Pair};
use crate::util::{derive_seed, rng};

use super::checkpoint::{Checkpoint, EpochRecord, TrainingMetadata};
use super::config::{EmbeddingInit, Precision, TrainConfig};
use super::early_stop::{early_stop_update, Decision, EarlyStopState};

const TAG_EMBEDDING: u64 = 0x454d_4245;
const TAG_WEIGHTS: u64 = 0x5745_4947;
const TAG_ADAPT: u64 = 0x4144_4150;

/// Hooks into the training loop. All methods default to doing nothing.
pub trait TrainObserver {
    /// Called after every clipped gradient, before the optimizer step.
    fn after_clip(&mut self, _epoch: usize, _batch: usize, _norm_before: f64, _norm_after: f64) {}

    /// Receives the computed validation accuracy and returns the value the
    /// early-stopping rule should see.
    fn validation_metric(&mut self, _epoch: usize, computed: f64) -> f64 {
        computed
    }

    fn on_epoch_end(&mut self, _record: &EpochRecord) {}
}

pub struct NoObserver;

impl TrainObserver for NoObserver {}

/// Where pre-trained vectors come from, if anywhere.
#[derive(Debug, Clone, Copy)]
pub enum EmbeddingSource<'a> {
    None,
    File(&'a Path),
    Table(&'a WordVectors),
}

/// Initial embedding rows for `words` according to `cfg`.
pub fn initial_embedding<S: AsRef<str>>(
    words: &[S],
    cfg: &TrainConfig,
    source: EmbeddingSource<'_>,
) -> Result<EmbeddingMatrix> {
    let seed = derive_seed(cfg.seed, &[TAG_EMBEDDING]);
    match cfg.embedding_init {
        EmbeddingInit::Random => random_embedding(words.len(), cfg.embed_dim, seed),
        EmbeddingInit::Pretrained => {
            let (raw, _) = match source {
                EmbeddingSource::File(p) => load_pretrained(p, words, cfg.embed_dim, seed)?,
                EmbeddingSource::Table(t) => {
                    if t.dim() != cfg.embed_dim {
                        return Err(Error::Dimension(format!(
                            "embedding table has dimension {}, config expects {}",
                            t.dim(),
                            cfg.embed_dim
                        )));
                    }
                    load_pretrained_from_table(t, words, seed)?
                }
                EmbeddingSource::None => {
                    return Err(Error::Contract("pretrained initialization needs an embedding source".into()))
                }
            };
            cfg.embedding_transform.apply(&raw)
        }
    }
}

/// Fresh model for `vocab` as configured.
pub fn init_model(cfg: &TrainConfig, vocab: &Vocabulary, source: EmbeddingSource<'_>) -> Result<ModelParams> {
    cfg.validate()?;
    let dims = ModelDims {
        vocab: vocab.len(),
        embed: cfg.embed_dim,
        state: cfg.state_size,
    };
    let emb = initial_embedding(vocab.tokens(), cfg, source)?;
    ModelParams::init(dims, &emb, derive_seed(cfg.seed, &[TAG_WEIGHTS]))
}

fn encode_pairs(vocab: &Vocabulary, examples: &[Example], max_len: usize) -> Result<Vec<Pair>> {
    examples
        .iter()
        .map(|e| {
            for (what, toks) in [("utterance", &e.utterance), ("canonical", &e.canonical)] {
                if toks.is_empty() || toks.len() > max_len {
                    return Err(Error::Range(format!(
                        "{what} {:?} has {} tokens, accepted lengths are 1..={max_len}",
                        toks.join(" "),
                        toks.len()
                    )));
                }
            }
            Ok(Pair {
                input: vocab.encode(&e.utterance),
                target: vocab.encode(&e.canonical),
            })
        })
        .collect()
}

fn diverged(epoch: usize, batch: usize) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::Num(NumError::NonFinite { .. }) => Error::Divergence { epoch, batch },
        other => other,
    }
}

struct Run<'a> {
    cfg: &'a TrainConfig,
    observer: &'a mut dyn TrainObserver,
    history: Vec<EpochRecord>,
}

impl Run<'_> {
    /// One pass over shuffled mini-batches. Returns the mean per-example loss.
    fn epoch<T: Scalar>(
        &mut self,
        params: &mut ModelParams<T>,
        adam: &mut AdamState<T>,
        pairs: &[Pair],
        phase: u8,
        epoch: usize,
    ) -> Result<f64> {
        let cfg = self.cfg;
        let mut order: Vec<usize> = (0..pairs.len()).collect();
        order.shuffle(&mut rng(derive_seed(cfg.seed, &[phase as u64, epoch as u64])));
        let size = cfg.batch_size.min(pairs.len());
        let cap = T::from_f64(cfg.clip_norm);
        let mut total = 0.0;
        for (b, chunk) in order.chunks(size).enumerate() {
            let batch_no = b + 1;
            let on_fail = diverged(epoch, batch_no);
            let batch: Vec<Pair> = chunk.iter().map(|&i| pairs[i].clone()).collect();
            let mut tape = Tape::<T>::new();
            let vars = params.register(&mut tape)?;
            let mut mask_rng = rng(derive_seed(cfg.seed, &[phase as u64, epoch as u64, batch_no as u64]));
            let dropout = cfg
                .dropout
                .then(|| (cfg.dropout_config(), &mut mask_rng as &mut dyn RngCore));
            let loss = batch_loss(&mut tape, &vars, &batch, dropout).map_err(&on_fail)?;
            let value = tape.value(loss).item().map(|x| x.as_f64()).unwrap_or(f64::NAN);
            let grads = tape.backward(loss).map_err(|e| on_fail(e.into()))?;
            if !value.is_finite() || !grads.all_finite() {
                return Err(on_fail(Error::Num(NumError::NonFinite { op: "loss", index: 0 })));
            }
            let (grads, before) = clip_global_norm(grads, cap);
            self.observer
                .after_clip(epoch, batch_no, before.as_f64(), grads.global_norm().as_f64());
            adam_step(params, &grads, adam)?;
            total += value * chunk.len() as f64;
        }
        Ok(total / pairs.len() as f64)
    }

    fn record(&mut self, r: EpochRecord) {
        self.observer.on_epoch_end(&r);
        self.history.push(r);
    }
}

/// Trains from `init`. With a validation split, picks the epoch count by
/// early stopping on validation accuracy, then retrains from the same `init`
/// on train plus validation for that many epochs. Without one, trains on
/// the training split for `max_epochs`.
pub fn train(
    cfg: &TrainConfig,
    vocab: &Vocabulary,
    splits: &Splits,
    inventory: &Domain,
    init: &ModelParams,
    observer: &mut dyn TrainObserver,
) -> Result<Checkpoint> {
    cfg.validate()?;
    init.validate()?;
    if splits.train.is_empty() {
        return Err(Error::InsufficientData("the training split is empty".into()));
    }
    let dims = init.dims();
    if dims.state != cfg.state_size || dims.embed != cfg.embed_dim {
        return Err(Error::Incompatible(format!(
            "parameters have state {} and embedding {}, config asks for {} and {}",
            dims.state, dims.embed, cfg.state_size, cfg.embed_dim
        )));
    }
    if dims.vocab != vocab.len() {
        return Err(Error::Dimension(format!(
            "embedding has {} rows for a vocabulary of {}",
            dims.vocab,
            vocab.len()
        )));
    }
    match cfg.precision {
        Precision::F64 => train_as::<f64>(cfg, vocab, splits, inventory, init, observer),
        Precision::F32 => train_as::<f32>(cfg, vocab, splits, inventory, init, observer),
    }
}

fn train_as<T: Scalar>(
    cfg: &TrainConfig,
    vocab: &Vocabulary,
    splits: &Splits,
    inventory: &Domain,
    init: &ModelParams,
    observer: &mut dyn TrainObserver,
) -> Result<Checkpoint> {
    let train_pairs = encode_pairs(vocab, &splits.train, cfg.max_len)?;
    let mut run = Run {
        cfg,
        observer,
        history: Vec::new(),
    };
    let mut meta = TrainingMetadata {
        seed: cfg.seed,
        domains: vec![inventory.name().to_string()],
        ..Default::default()
    };

    let params = if splits.validation.is_empty() {
        let mut params = init.cast::<T>();
        let mut adam = AdamState::new(cfg.adam(), &params);
        for epoch in 1..=cfg.max_epochs {
            let loss = run.epoch(&mut params, &mut adam, &train_pairs, 1, epoch)?;
            run.record(EpochRecord {
                phase: 1,
                epoch,
                examples: train_pairs.len(),
                loss,
                validation_accuracy: None,
            });
        }
        meta.epochs_run = cfg.max_epochs;
        meta.best_epoch = cfg.max_epochs;
        params
    } else {
        encode_pairs(vocab, &splits.validation, cfg.max_len)?;
        let mut params = init.cast::<T>();
        let mut adam = AdamState::new(cfg.adam(), &params);
        let mut stop = EarlyStopState::new(cfg.patience);
        for epoch in 1..=cfg.max_epochs {
            let loss = run.epoch(&mut params, &mut adam, &train_pairs, 1, epoch)?;
            let computed = Ranker::new(&params, vocab, inventory)?.accuracy(&splits.validation)?;
            let metric = run.observer.validation_metric(epoch, computed);
            run.record(EpochRecord {
                phase: 1,
                epoch,
                examples: train_pairs.len(),
                loss,
                validation_accuracy: Some(metric),
            });
            meta.epochs_run = epoch;
            if early_stop_update(&mut stop, metric, epoch, || params.clone()) == Decision::Stop {
                break;
            }
        }
        meta.best_epoch = stop.best_epoch;
        meta.best_validation_accuracy = stop.snapshot.is_some().then_some(stop.best);

        let all: Vec<Example> = splits.train.iter().chain(&splits.validation).cloned().collect();
        let all_pairs = encode_pairs(vocab, &all, cfg.max_len)?;
        let mut params = init.cast::<T>();
        let mut adam = AdamState::new(cfg.adam(), &params);
        for epoch in 1..=stop.best_epoch {
            let loss = run.epoch(&mut params, &mut adam, &all_pairs, 2, epoch)?;
            run.record(EpochRecord {
                phase: 2,
                epoch,
                examples: all_pairs.len(),
                loss,
                validation_accuracy: None,
            });
        }
        meta.retrain_epochs = stop.best_epoch;
        params
    };
    meta.history = run.history;
    Ok(Checkpoint {
        config: cfg.clone(),
        vocab: vocab.clone(),
        params: params.cast(),
        meta,
    })
}

/// Initial vocabulary and parameters for fine-tuning `source` on `target`.
///
/// Target tokens missing from the source vocabulary are appended. Their
/// embedding rows come from the configured initialization over the extended
/// vocabulary, their output rows are Xavier-initialized with zero bias, and
/// every other value is copied from the source.
pub fn adapt_init(
    source: &Checkpoint,
    target: &Domain,
    cfg: &TrainConfig,
    embeddings: EmbeddingSource<'_>,
) -> Result<(Vocabulary, ModelParams)> {
    cfg.validate()?;
    let dims = source.params.dims();
    if dims.state != cfg.state_size || dims.embed != cfg.embed_dim {
        return Err(Error::Incompatible(format!(
            "checkpoint has state {} and embedding {}, config asks for {} and {}",
            dims.state, dims.embed, cfg.state_size, cfg.embed_dim
        )));
    }
    let mut vocab = source.vocab.clone();
    for t in build_vocabulary([target]).content_tokens() {
        vocab.add(t);
    }
    let (old, new) = (source.vocab.len(), vocab.len());
    if new == old {
        return Ok((vocab, source.params.clone()));
    }

    let emb = initial_embedding(vocab.tokens(), cfg, embeddings)?;
    let mut rng = rng(derive_seed(cfg.seed, &[TAG_ADAPT]));
    let fresh_out = xavier(&mut rng, new - old, 3 * dims.state, 3 * dims.state, new);
    let mut p = source.params.clone();

    let mut table = p.embedding.clone().into_data();
    table.extend_from_slice(&emb.data()[old * dims.embed..]);
    p.embedding = Tensor::matrix(new, dims.embed, table)?;

    let mut out = p.out_w.clone().into_data();
    out.extend(fresh_out.into_data());
    p.out_w = Tensor::matrix(new, 3 * dims.state, out)?;

    let mut bias = p.out_b.clone().into_data();
    bias.resize(new, 0.0);
    p.out_b = Tensor::vector(bias);
    p.validate()?;
    Ok((vocab, p))
}

/// Fine-tunes `source` on the target domain's splits with a fresh optimizer.
pub fn adapt(
    source: &Checkpoint,
    target: &Domain,
    splits: &Splits,
    cfg: &TrainConfig,
    embeddings: EmbeddingSource<'_>,
    observer: &mut dyn TrainObserver,
) -> Result<Checkpoint> {
    let (vocab, init) = adapt_init(source, target, cfg, embeddings)?;
    let mut ckpt = train(cfg, &vocab, splits, target, &init, observer)?;
    let mut lineage = source.meta.lineage.clone();
    lineage.extend(source.meta.domains.iter().cloned());
    ckpt.meta.lineage = lineage;
    Ok(ckpt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::split_domain;
    use crate::model::sequence_log_prob;

    fn domain(name: &str, nouns: &[&str]) -> Domain {
        let mut ex = Vec::new();
        for (i, n) in nouns.iter().enumerate() {
            let c = format!("{n} with size {i}");
            ex.push(Example::new(name, &format!("show {n} of size {i}"), &c, &format!("(size {n} {i})")));
            ex.push(Example::new(name, &format!("list every {n} sized {i}"), &c, &format!("(size {n} {i})")));
        }
        Domain::new(name, ex, vec![]).unwrap()
    }

    fn small_cfg() -> TrainConfig {
        TrainConfig {
            state_size: 6,
            embed_dim: 5,
            batch_size: 4,
            max_epochs: 4,
            patience: 2,
            seed: 3,
            ..Default::default()
        }
    }

    fn setup(cfg: &TrainConfig) -> (Domain, Vocabulary, Splits, ModelParams) {
        let d = domain("blocks", &["block", "cube", "brick", "slab", "tile"]);
        let v = build_vocabulary([&d]);
        let s = split_domain(&d, 1).unwrap();
        let p = init_model(cfg, &v, EmbeddingSource::None).unwrap();
        (d, v, s, p)
    }

    struct Recorder {
        constant: Option<f64>,
        evaluations: usize,
        max_after: f64,
        clipped: usize,
        epochs: Vec<EpochRecord>,
    }

    impl Recorder {
        fn new(constant: Option<f64>) -> Self {
            Recorder {
                constant,
                evaluations: 0,
                max_after: 0.0,
                clipped: 0,
                epochs: vec![],
            }
        }
    }

    impl TrainObserver for Recorder {
        fn after_clip(&mut self, _: usize, _: usize, before: f64, after: f64) {
            self.max_after = self.max_after.max(after);
            if before > after {
                self.clipped += 1;
            }
        }

        fn validation_metric(&mut self, _: usize, computed: f64) -> f64 {
            self.evaluations += 1;
            self.constant.unwrap_or(computed)
        }

        fn on_epoch_end(&mut self, r: &EpochRecord) {
            self.epochs.push(r.clone());
        }
    }

    #[test]
    fn constant_metric_stops_after_two_evaluations() {
        let cfg = TrainConfig {
            patience: 1,
            max_epochs: 10,
            ..small_cfg()
        };
        let (d, v, s, p) = setup(&cfg);
        let mut rec = Recorder::new(Some(0.25));
        let c = train(&cfg, &v, &s, &d, &p, &mut rec).unwrap();
        assert_eq!(rec.evaluations, 2);
        assert_eq!((c.meta.epochs_run, c.meta.best_epoch, c.meta.retrain_epochs), (2, 1, 1));
        assert_eq!(c.meta.best_validation_accuracy, Some(0.25));
    }

    #[test]
    fn identical_runs_give_identical_bytes() {
        for precision in [Precision::F64, Precision::F32] {
            let cfg = TrainConfig {
                precision,
                ..small_cfg()
            };
            let (d, v, s, p) = setup(&cfg);
            let a = train(&cfg, &v, &s, &d, &p, &mut NoObserver).unwrap();
            let b = train(&cfg, &v, &s, &d, &p, &mut NoObserver).unwrap();
            assert_eq!(a.to_bytes().unwrap(), b.to_bytes().unwrap());
            assert_ne!(a.params, p);
        }
    }

    #[test]
    fn clipping_caps_every_step() {
        let cfg = TrainConfig {
            clip_norm: 0.05,
            ..small_cfg()
        };
        let (d, v, s, p) = setup(&cfg);
        let mut rec = Recorder::new(None);
        train(&cfg, &v, &s, &d, &p, &mut rec).unwrap();
        assert!(rec.clipped > 0);
        assert!(rec.max_after <= 0.05 + 1e-9, "{}", rec.max_after);
    }

    #[test]
    fn retraining_sees_train_and_validation() {
        let cfg = small_cfg();
        let (d, v, s, p) = setup(&cfg);
        let mut rec = Recorder::new(None);
        let c = train(&cfg, &v, &s, &d, &p, &mut rec).unwrap();
        let phase1 = rec.epochs.iter().filter(|r| r.phase == 1).count();
        let phase2: Vec<_> = rec.epochs.iter().filter(|r| r.phase == 2).collect();
        assert_eq!(phase1, c.meta.epochs_run);
        assert_eq!(phase2.len(), c.meta.best_epoch);
        assert!(phase2.iter().all(|r| r.examples == s.train.len() + s.validation.len()));
        assert!(!s.validation.is_empty());
        assert_eq!(c.meta.history, rec.epochs);
    }

    #[test]
    fn empty_validation_trains_for_max_epochs() {
        let cfg = small_cfg();
        let (d, v, mut s, p) = setup(&cfg);
        s.validation.clear();
        let c = train(&cfg, &v, &s, &d, &p, &mut NoObserver).unwrap();
        assert_eq!((c.meta.epochs_run, c.meta.retrain_epochs), (4, 0));
        assert!(c.meta.history.iter().all(|r| r.phase == 1 && r.examples == s.train.len()));
    }

    #[test]
    fn rejected_inputs() {
        let cfg = small_cfg();
        let (d, v, s, p) = setup(&cfg);
        let mut empty = s.clone();
        empty.train.clear();
        assert!(matches!(
            train(&cfg, &v, &empty, &d, &p, &mut NoObserver),
            Err(Error::InsufficientData(_))
        ));
        let short = TrainConfig { max_len: 3, ..cfg.clone() };
        assert!(matches!(train(&short, &v, &s, &d, &p, &mut NoObserver), Err(Error::Range(_))));
        let wide = TrainConfig { state_size: 7, ..cfg };
        assert!(matches!(train(&wide, &v, &s, &d, &p, &mut NoObserver), Err(Error::Incompatible(_))));
    }

    #[test]
    fn overflow_is_reported_as_divergence() {
        let cfg = TrainConfig {
            learning_rate: 1e300,
            ..small_cfg()
        };
        let (d, v, s, p) = setup(&cfg);
        match train(&cfg, &v, &s, &d, &p, &mut NoObserver) {
            Err(Error::Divergence { epoch, batch }) => assert_eq!((epoch, batch), (1, 2)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn adapt_with_known_vocabulary_copies_everything() {
        let cfg = small_cfg();
        let (d, v, s, p) = setup(&cfg);
        let src = train(&cfg, &v, &s, &d, &p, &mut NoObserver).unwrap();
        let sub = domain("blocks", &["cube", "tile", "slab"]);
        let (v2, init) = adapt_init(&src, &sub, &cfg, EmbeddingSource::None).unwrap();
        assert_eq!(v2, src.vocab);
        assert_eq!(init, src.params);

        let frozen = TrainConfig { max_epochs: 0, ..cfg };
        let sub_splits = split_domain(&sub, 2).unwrap();
        let a = adapt(&src, &sub, &sub_splits, &frozen, EmbeddingSource::None, &mut NoObserver).unwrap();
        assert_eq!(a.meta.lineage, ["blocks"]);
        for e in sub.examples() {
            let (u, c) = (a.vocab.encode(&e.utterance), a.vocab.encode(&e.canonical));
            let before = sequence_log_prob(&src.params, &u, &c).unwrap();
            let after = sequence_log_prob(&a.params, &u, &c).unwrap();
            assert_eq!(before.to_bits(), after.to_bits());
        }
    }

    #[test]
    fn adapt_to_disjoint_vocabulary() {
        let cfg = small_cfg();
        let (d, v, s, p) = setup(&cfg);
        let src = train(&cfg, &v, &s, &d, &p, &mut NoObserver).unwrap();
        let mut ex = Vec::new();
        for (i, n) in ["apple", "pear", "plum", "fig", "kiwi"].iter().enumerate() {
            let c = format!("fruit {n} number n{i}");
            ex.push(Example::new("fruit", &format!("get {n} n{i}"), &c, &format!("(fruit {n})")));
            ex.push(Example::new("fruit", &format!("find {n} n{i}"), &c, &format!("(fruit {n})")));
        }
        let target = Domain::new("fruit", ex, vec![]).unwrap();
        let (v2, init) = adapt_init(&src, &target, &cfg, EmbeddingSource::None).unwrap();
        let added = v2.len() - src.vocab.len();
        assert_eq!(added, build_vocabulary([&target]).content_tokens().len());
        assert_eq!(init.enc_fwd, src.params.enc_fwd);
        assert_eq!((&init.w0, &init.w1, &init.v), (&src.params.w0, &src.params.w1, &src.params.v));
        let e = cfg.embed_dim;
        let old = src.vocab.len();
        assert_eq!(&init.embedding.data()[..old * e], src.params.embedding.data());
        assert_eq!(&init.out_b.data()[old..], vec![0.0; added].as_slice());
        assert!(init.out_w.data()[old * 3 * cfg.state_size..].iter().any(|&x| x != 0.0));

        let wide = TrainConfig { embed_dim: 4, ..cfg };
        assert!(matches!(
            adapt_init(&src, &target, &wide, EmbeddingSource::None),
            Err(Error::Incompatible(_))
        ));
    }

    #[test]
    fn pretrained_rows_come_from_the_table() {
        let cfg = TrainConfig {
            embedding_init: EmbeddingInit::Pretrained,
            ..small_cfg()
        };
        let mut table = WordVectors::new(5);
        table.insert("block", &[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        let (_, v, _, _) = setup(&small_cfg());
        let p = init_model(&cfg, &v, EmbeddingSource::Table(&table)).unwrap();
        assert_eq!(p.embedding.row(v.id("block")), &[1.0, 2.0, 3.0, 4.0, 5.0]);
        assert!(init_model(&cfg, &v, EmbeddingSource::None).is_err());
    }
}
