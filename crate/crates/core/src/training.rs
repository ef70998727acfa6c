//! Online SGD with mean-NLL loss, plus evaluation and the epoch loop with
//! best-dev model selection.
//!
//! Training is strictly sequential: parameters update after every sentence
//! (one forward with fresh dropout masks, one backward, one step at a
//! single constant learning rate for all layers — no clipping, no decay,
//! no momentum). Evaluation runs the deterministic test-mode forward.

use crate::corpus::{Sentence, TagSet};
use crate::error::{Error, Result};
use crate::networks::{Grads, Model};
use crate::numerics::{Rng, Vector};

/// Floor for log arguments so a zero probability yields a large finite
/// loss instead of −∞.
const LOG_FLOOR: f64 = 1e-300;

/// Optimizer-loop settings. Architecture, feature, and dropout settings
/// live in the model's `NetConfig`.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    /// One constant rate for every layer.
    pub learning_rate: f64,
    pub epochs: usize,
    /// Revisit sentences in a fresh seeded order each epoch.
    pub shuffle: bool,
    /// Seed for sentence order and dropout masks (independent of the
    /// model-init seed).
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.02,
            epochs: 40,
            shuffle: true,
            seed: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning_rate must be > 0"));
        }
        Ok(())
    }
}

/// A sentence ready for the model: surfaces plus gold tag ids. Tags
/// outside the tagset map to RARE with `known = false`; evaluation counts
/// those tokens wrong no matter what the model predicts.
#[derive(Clone, Debug)]
pub struct TaggedSentence {
    pub surfaces: Vec<String>,
    pub gold: Vec<usize>,
    pub known: Vec<bool>,
}

pub fn prepare(data: &[Sentence], tags: &TagSet) -> Vec<TaggedSentence> {
    data.iter()
        .map(|s| TaggedSentence {
            surfaces: s.tokens.iter().map(|t| t.surface.clone()).collect(),
            gold: s.tokens.iter().map(|t| tags.id_or_rare(&t.tag)).collect(),
            known: s.tokens.iter().map(|t| tags.id(&t.tag).is_some()).collect(),
        })
        .collect()
}

/// Mean over tokens of −log p(gold tag).
pub fn nll_loss(probs: &[Vector], gold: &[usize]) -> f64 {
    assert_eq!(probs.len(), gold.len());
    let total: f64 = probs
        .iter()
        .zip(gold)
        .map(|(y, &g)| -y[g].max(LOG_FLOOR).ln())
        .sum();
    total / gold.len() as f64
}

/// One pass over the training set in (optionally shuffled) order, updating
/// after every sentence. Returns the mean per-sentence training loss,
/// measured on the train-mode forward that produced each update.
pub fn sgd_epoch(
    model: &mut Model,
    train: &[TaggedSentence],
    cfg: &TrainConfig,
    rng: &mut Rng,
) -> f64 {
    let mut order: Vec<usize> = (0..train.len()).collect();
    if cfg.shuffle {
        rng.shuffle(&mut order);
    }
    let mut grads = Grads::zeros_like(model);
    let mut total = 0.0;
    for &i in &order {
        let s = &train[i];
        let sf = model.featurize(&s.surfaces);
        let masks = model.sample_masks(sf.len(), rng);
        let fwd = model.forward(&sf, &masks);
        total += nll_loss(&fwd.probs, &s.gold);
        model.backward(&sf, &masks, &fwd, &s.gold, &mut grads);
        grads.apply_sgd(model, cfg.learning_rate);
    }
    if train.is_empty() {
        0.0
    } else {
        total / train.len() as f64
    }
}

/// Token-level counts from a test-mode evaluation pass.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct EvalStats {
    pub correct: usize,
    pub tokens: usize,
    /// Tokens whose gold tag is outside the model's tagset (always wrong).
    pub unknown_gold: usize,
}

impl EvalStats {
    pub fn accuracy(&self) -> f64 {
        self.correct as f64 / self.tokens as f64
    }
}

pub fn evaluate(model: &Model, data: &[TaggedSentence]) -> Result<EvalStats> {
    let mut stats = EvalStats::default();
    for s in data {
        let pred = model.tag(&s.surfaces);
        for ((&p, &g), &known) in pred.iter().zip(&s.gold).zip(&s.known) {
            stats.tokens += 1;
            if known {
                if p == g {
                    stats.correct += 1;
                }
            } else {
                stats.unknown_gold += 1;
            }
        }
    }
    if stats.tokens == 0 {
        return Err(Error::config("cannot evaluate on an empty data set"));
    }
    Ok(stats)
}

/// 1-best tagging accuracy: correct tokens / all tokens.
pub fn evaluate_accuracy(model: &Model, data: &[TaggedSentence]) -> Result<f64> {
    Ok(evaluate(model, data)?.accuracy())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_acc: f64,
}

/// Accuracy history and the best-so-far bookkeeping.
#[derive(Clone, Debug, Default)]
pub struct TrainState {
    pub history: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
    pub best_dev_acc: f64,
}

impl TrainState {
    /// Records one epoch; returns true when it sets a new best dev
    /// accuracy (strictly greater, so ties keep the earlier snapshot).
    pub fn observe(&mut self, rec: EpochRecord) -> bool {
        self.history.push(rec);
        let improved = self.best_epoch.is_none() || rec.dev_acc > self.best_dev_acc;
        if improved {
            self.best_dev_acc = rec.dev_acc;
            self.best_epoch = Some(rec.epoch);
        }
        improved
    }
}

/// Runs the full epoch budget, evaluating on dev after every epoch and
/// keeping the snapshot with the highest dev accuracy. `on_epoch` fires
/// once per epoch (for logging). With `epochs = 0` the initialized model
/// comes straight back with an empty history.
pub fn train_loop(
    model: Model,
    train: &[TaggedSentence],
    dev: &[TaggedSentence],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<(Model, TrainState)> {
    cfg.validate()?;
    if train.is_empty() || dev.is_empty() {
        return Err(Error::config("train and dev sets must be non-empty"));
    }
    let mut rng = Rng::new(cfg.seed);
    let mut state = TrainState::default();
    let mut current = model;
    let mut best: Option<Model> = None;
    for epoch in 1..=cfg.epochs {
        let train_loss = sgd_epoch(&mut current, train, cfg, &mut rng);
        let dev_acc = evaluate_accuracy(&current, dev)?;
        let rec = EpochRecord {
            epoch,
            train_loss,
            dev_acc,
        };
        if state.observe(rec) {
            best = Some(current.clone());
        }
        on_epoch(&rec);
    }
    Ok((best.unwrap_or(current), state))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{build_vocab_tagset, parse_corpus, CharVocab};
    use crate::features::FeatureConfig;
    use crate::networks::{Arch, NetConfig, NetKind};

    fn corpus() -> Vec<Sentence> {
        parse_corpus(
            "the|D cat|N sat|V\nthe|D dog|N ran|V fast|A\nbig|A cats|N sleep|V",
            "test",
        )
        .unwrap()
    }

    fn tiny_model(kind: NetKind, drop: f64, seed: u64) -> (Model, Vec<TaggedSentence>) {
        let train = corpus();
        let (vocab, tags) = build_vocab_tagset(&train, 1).unwrap();
        let chars = CharVocab::build(&train);
        let cfg = NetConfig {
            kind,
            hidden: 12,
            feature: FeatureConfig {
                word_dim: 4,
                cap_dim: 2,
                char_dim: 2,
                chars_per_side: 1,
                window_radius: 1,
            },
            gate_drop: drop,
            hidden_drop: drop,
            ..NetConfig::default()
        };
        let model = Model::new(cfg, vocab, chars, tags.clone(), None, seed).unwrap();
        let data = prepare(&train, &tags);
        (model, data)
    }

    #[test]
    fn uniform_predictions_cost_ln_k() {
        let probs = vec![vec![0.1; 10]; 3];
        let loss = nll_loss(&probs, &[0, 4, 9]);
        assert!((loss - 10.0_f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn confident_correct_prediction_costs_almost_nothing() {
        let mut y = vec![1e-9; 4];
        y[2] = 1.0 - 3e-9;
        assert!(nll_loss(&[y], &[2]) < 1e-8);
    }

    #[test]
    fn nll_matches_direct_summation() {
        let mut rng = Rng::new(8);
        let probs: Vec<Vector> = (0..5)
            .map(|_| {
                let raw: Vector = (0..6).map(|_| rng.uniform().exp()).collect();
                let z: f64 = raw.iter().sum();
                raw.iter().map(|v| v / z).collect()
            })
            .collect();
        let gold = [0, 5, 2, 3, 1];
        let direct: f64 =
            gold.iter().zip(&probs).map(|(&g, y)| -(y[g].ln())).sum::<f64>() / 5.0;
        assert!((nll_loss(&probs, &gold) - direct).abs() < 1e-12);
    }

    #[test]
    fn zero_probability_stays_finite() {
        let loss = nll_loss(&[vec![0.0, 1.0]], &[0]);
        assert!(loss.is_finite() && loss > 600.0);
    }

    #[test]
    fn zero_learning_rate_changes_nothing() {
        let (mut model, data) = tiny_model(NetKind::Mlp, 0.3, 3);
        let before = model.clone();
        let cfg = TrainConfig {
            learning_rate: 0.0,
            ..TrainConfig::default()
        };
        sgd_epoch(&mut model, &data, &cfg, &mut Rng::new(5));
        for ((_, a), (_, b)) in model.param_blocks().iter().zip(before.param_blocks()) {
            assert_eq!(a.data(), b.data());
        }
    }

    #[test]
    fn same_seed_reproduces_the_trained_model() {
        let run = || {
            let (mut model, data) = tiny_model(NetKind::Elman, 0.4, 3);
            let cfg = TrainConfig {
                epochs: 3,
                seed: 11,
                ..TrainConfig::default()
            };
            let mut rng = Rng::new(cfg.seed);
            for _ in 0..cfg.epochs {
                sgd_epoch(&mut model, &data, &cfg, &mut rng);
            }
            model
        };
        let a = run();
        let b = run();
        for ((na, ma), (_, mb)) in a.param_blocks().iter().zip(b.param_blocks()) {
            assert_eq!(ma.data(), mb.data(), "{na}");
        }
    }

    #[test]
    fn overfits_one_sentence_with_mostly_decreasing_loss() {
        let (mut model, data) = tiny_model(NetKind::Mlp, 0.0, 7);
        let one = &data[..1];
        let cfg = TrainConfig {
            learning_rate: 1.0,
            shuffle: false,
            ..TrainConfig::default()
        };
        let mut rng = Rng::new(2);
        let losses: Vec<f64> = (0..200)
            .map(|_| sgd_epoch(&mut model, one, &cfg, &mut rng))
            .collect();
        let decreases = losses.windows(2).filter(|w| w[1] < w[0]).count();
        assert!(
            decreases as f64 >= 0.95 * (losses.len() - 1) as f64,
            "only {decreases}/199 steps decreased"
        );
        assert_eq!(evaluate_accuracy(&model, one).unwrap(), 1.0);
    }

    /// A tiny step along the analytic gradient must not increase the loss
    /// of the same frozen-mask forward.
    #[test]
    fn descent_at_tiny_learning_rate() {
        for kind in NetKind::ALL {
            let (mut model, data) = tiny_model(kind, 0.3, 9);
            let s = &data[1];
            let sf = model.featurize(&s.surfaces);
            let masks = model.sample_masks(sf.len(), &mut Rng::new(6));
            let fwd = model.forward(&sf, &masks);
            let before = nll_loss(&fwd.probs, &s.gold);
            let mut grads = Grads::zeros_like(&model);
            model.backward(&sf, &masks, &fwd, &s.gold, &mut grads);
            grads.apply_sgd(&mut model, 1e-5);
            let after = nll_loss(&model.forward(&sf, &masks).probs, &s.gold);
            assert!(after <= before + 1e-12, "{kind:?}: {before} -> {after}");
        }
    }

    /// One update touches only the lookup rows of symbols that occur in
    /// the sentence (plus the learned padding row).
    #[test]
    fn sgd_touches_only_occurring_word_rows() {
        let (mut model, data) = tiny_model(NetKind::Mlp, 0.0, 13);
        let s = &data[0];
        let before = model.tables.word.clone();
        let sf = model.featurize(&s.surfaces);
        let masks = model.sample_masks(sf.len(), &mut Rng::new(1));
        let fwd = model.forward(&sf, &masks);
        let mut grads = Grads::zeros_like(&model);
        model.backward(&sf, &masks, &fwd, &s.gold, &mut grads);
        grads.apply_sgd(&mut model, 0.02);

        let mut allowed: std::collections::HashSet<usize> =
            sf.ids.iter().map(|ids| ids.word).collect();
        allowed.insert(sf.pad_ids.word);
        for r in 0..before.rows() {
            let changed = (0..before.cols()).any(|c| {
                model.tables.word.get(r, c) != before.get(r, c)
            });
            assert_eq!(changed, allowed.contains(&r), "row {r}");
        }
    }

    #[test]
    fn evaluation_is_an_exact_count_and_flags_unknown_gold() {
        let (mut model, _) = tiny_model(NetKind::Mlp, 0.0, 17);
        // Nail the output to the RARE tag by brute bias.
        if let Arch::Mlp(p) = &mut model.arch {
            p.w_hy.fill(0.0);
            let b = p.b_y.as_mut().unwrap();
            b.fill(0.0);
            b.set(0, 0, 50.0);
        }
        let tags = model.tags.clone();
        // Five tokens; gold "zzz" is outside the tagset, so even though the
        // model predicts exactly RARE everywhere, that token counts wrong.
        let data = prepare(
            &parse_corpus("a|zzz b|D c|D d|N e|V", "test").unwrap(),
            &tags,
        );
        let stats = evaluate(&model, &data).unwrap();
        assert_eq!(stats.tokens, 5);
        assert_eq!(stats.correct, 0);
        assert_eq!(stats.unknown_gold, 1);

        // A constant-tag model scores exactly that tag's frequency.
        if let Arch::Mlp(p) = &mut model.arch {
            let d = tags.id("D").unwrap();
            let b = p.b_y.as_mut().unwrap();
            b.fill(0.0);
            b.set(0, d, 50.0);
        }
        let stats = evaluate(&model, &data).unwrap();
        assert_eq!(stats.correct, 2);
        assert!((stats.accuracy() - 0.4).abs() < 1e-12);

        assert!(evaluate(&model, &[]).is_err());
    }

    #[test]
    fn self_tagged_corpus_scores_perfectly() {
        let (model, data) = tiny_model(NetKind::Lstm, 0.0, 19);
        let oracle: Vec<TaggedSentence> = data
            .iter()
            .map(|s| {
                let pred = model.tag(&s.surfaces);
                TaggedSentence {
                    surfaces: s.surfaces.clone(),
                    gold: pred.clone(),
                    known: vec![true; pred.len()],
                }
            })
            .collect();
        assert_eq!(evaluate_accuracy(&model, &oracle).unwrap(), 1.0);
    }

    #[test]
    fn best_snapshot_follows_the_max_rule() {
        let mut st = TrainState::default();
        let recs = [0.3, 0.9, 0.7].map(|acc| EpochRecord {
            epoch: 0,
            train_loss: 0.0,
            dev_acc: acc,
        });
        let improved: Vec<bool> = recs
            .into_iter()
            .enumerate()
            .map(|(i, mut r)| {
                r.epoch = i + 1;
                st.observe(r)
            })
            .collect();
        assert_eq!(improved, [true, true, false]);
        assert_eq!(st.best_epoch, Some(2));
        assert_eq!(st.best_dev_acc, 0.9);
        assert_eq!(st.history.len(), 3);
    }

    #[test]
    fn train_loop_overfits_and_returns_best_snapshot() {
        let (model, data) = tiny_model(NetKind::Mlp, 0.0, 23);
        let cfg = TrainConfig {
            learning_rate: 0.5,
            epochs: 80,
            seed: 4,
            ..TrainConfig::default()
        };
        let mut lines = 0;
        let (best, state) = train_loop(model, &data, &data, &cfg, |_| lines += 1).unwrap();
        assert_eq!(lines, 80);
        assert_eq!(state.history.len(), 80);
        assert_eq!(state.best_dev_acc, 1.0);
        assert_eq!(evaluate_accuracy(&best, &data).unwrap(), 1.0);
        assert!(state
            .history
            .iter()
            .all(|r| r.dev_acc <= state.best_dev_acc));
    }

    #[test]
    fn zero_epochs_returns_initial_model_untouched() {
        let (model, data) = tiny_model(NetKind::Mlp, 0.0, 29);
        let before = model.clone();
        let (after, state) =
            train_loop(model, &data, &data, &TrainConfig { epochs: 0, ..TrainConfig::default() }, |_| {})
                .unwrap();
        assert!(state.history.is_empty());
        assert_eq!(state.best_epoch, None);
        for ((_, a), (_, b)) in after.param_blocks().iter().zip(before.param_blocks()) {
            assert_eq!(a.data(), b.data());
        }
    }

    #[test]
    fn invalid_config_and_empty_splits_are_rejected() {
        let (model, data) = tiny_model(NetKind::Mlp, 0.0, 31);
        let bad = TrainConfig {
            learning_rate: 0.0,
            ..TrainConfig::default()
        };
        assert!(train_loop(model.clone(), &data, &data, &bad, |_| {}).is_err());
        let ok = TrainConfig::default();
        assert!(train_loop(model.clone(), &[], &data, &ok, |_| {}).is_err());
        assert!(train_loop(model, &data, &[], &ok, |_| {}).is_err());
    }
}
