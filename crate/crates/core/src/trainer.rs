//! Alternating optimization of the three players. Predictors descend their
//! cross-entropies on sampled masks; the generator ascends a bounded reward
//! by REINFORCE with a moving-average baseline.
//!
//! Every per-example random draw comes from a generator seeded by
//! `(seed, step, example index)`, and per-example gradients are summed in
//! fixed-size chunks in a fixed order, so results do not depend on the
//! number of worker threads.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, TokenSequence};
use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalReport};
use crate::numkit::{adam_update, AdamConfig, Grads, ParamSet};
use crate::objectives::{generator_objective, sample_reward, selected, LossBreakdown};
use crate::players::{
    apply_mask, argmax, classifier_xent_backward, generator_backward, generator_forward,
    introspect_label, mask_log_likelihood_grad, predict, sample_mask, GameConfig, ModelConfig,
    PlayerParams,
};

const CHUNK: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    Joint,
    ThreeStep,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Joint epochs (the fine-tuning phase under the three-step schedule).
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_predictors: f64,
    pub lr_generator: f64,
    pub baseline_decay: f64,
    pub schedule: Schedule,
    pub pretrain_epochs_classifier: usize,
    pub pretrain_epochs_generator: usize,
    pub seed: u64,
    pub eval_every: usize,
    /// Predictor steps per batch in joint training.
    pub predictor_steps: usize,
    /// Generator steps per batch in joint training.
    pub generator_steps: usize,
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 32,
            lr_predictors: 1e-3,
            lr_generator: 1e-3,
            baseline_decay: 0.9,
            schedule: Schedule::Joint,
            pretrain_epochs_classifier: 5,
            pretrain_epochs_generator: 5,
            seed: 0,
            eval_every: 1,
            predictor_steps: 1,
            generator_steps: 1,
            model: ModelConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("batch_size", self.batch_size),
            ("eval_every", self.eval_every),
            ("predictor_steps", self.predictor_steps),
            ("generator_steps", self.generator_steps),
            ("embed_dim", self.model.embed_dim),
            ("hidden_dim", self.model.hidden_dim),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        for (name, v) in [("lr_predictors", self.lr_predictors), ("lr_generator", self.lr_generator)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be > 0, got {v}")));
            }
        }
        if !(0.0..1.0).contains(&self.baseline_decay) {
            return Err(Error::Config(format!(
                "baseline_decay must be in [0, 1), got {}",
                self.baseline_decay
            )));
        }
        if !(self.model.init_scale > 0.0) {
            return Err(Error::Config("init_scale must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    /// Full-text classifier pretraining.
    Classifier,
    /// Generator pretraining against frozen predictors.
    Generator,
    Joint,
}

/// One line of the training log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub phase: Phase,
    pub l_p: f64,
    pub l_c: f64,
    pub reward: f64,
    pub baseline: f64,
    pub dev_acc: Option<f64>,
    pub dev_acc_c: Option<f64>,
    /// Token precision of dev rationales against gold masks, when present.
    pub dev_precision: Option<f64>,
    /// Mean fraction of tokens in the masks sampled during the epoch.
    pub mean_selected_fraction: f64,
    pub losses: LossBreakdown,
}

/// Adam step counts per parameter group.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepCounters {
    pub generator: u64,
    pub predictor: u64,
    pub complement_predictor: u64,
    pub classifier: u64,
    /// Number of predictor, generator and classifier steps taken so far;
    /// keys the per-example random streams.
    pub global: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BestCheckpoint {
    pub epoch: usize,
    pub dev_acc: f64,
    pub params: PlayerParams,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub params: PlayerParams,
    pub baseline: f64,
    pub epoch: usize,
    pub steps: StepCounters,
    pub history: Vec<EpochRecord>,
    pub best: Option<BestCheckpoint>,
    pub seed: u64,
}

impl TrainState {
    pub fn new(vocab: usize, num_classes: usize, cfg: &TrainConfig) -> Self {
        Self::from_params(PlayerParams::init(vocab, num_classes, &cfg.model, cfg.seed), cfg.seed)
    }

    pub fn from_params(params: PlayerParams, seed: u64) -> Self {
        Self {
            params,
            baseline: 0.0,
            epoch: 0,
            steps: StepCounters::default(),
            history: Vec::new(),
            best: None,
            seed,
        }
    }

    /// Parameters with the best dev accuracy seen, or the current ones.
    pub fn best_params(&self) -> &PlayerParams {
        self.best.as_ref().map_or(&self.params, |b| &b.params)
    }

    fn next_stream(&mut self) -> u64 {
        self.steps.global += 1;
        self.steps.global
    }
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Independent random stream for one example of one step.
pub fn example_rng(seed: u64, stream: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix(seed ^ splitmix(stream ^ splitmix(index))))
}

/// `decay·baseline + (1 − decay)·batch_mean_reward`
pub fn update_baseline(baseline: f64, batch_mean_reward: f64, decay: f64) -> f64 {
    decay * baseline + (1.0 - decay) * batch_mean_reward
}

fn adam_step(params: &mut ParamSet, lr: f64, step: &mut u64, context: &str) -> Result<()> {
    *step += 1;
    adam_update(params, &AdamConfig::with_lr(lr), *step).map_err(|e| match e {
        Error::Divergence { param, .. } => Error::Divergence {
            param,
            context: context.to_string(),
        },
        e => e,
    })
}

fn check_finite(value: f64, what: &str, context: &str) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::Divergence {
            param: what.to_string(),
            context: context.to_string(),
        })
    }
}

/// Summed per-example results of one chunk, merged in chunk order.
fn chunked<T, A, F>(items: &[T], init: impl Fn() -> A + Sync, per_example: F) -> Result<Vec<A>>
where
    T: Sync,
    A: Send,
    F: Fn(&mut A, usize, &T) -> Result<()> + Sync,
{
    items
        .par_chunks(CHUNK)
        .enumerate()
        .map(|(c, chunk)| {
            let mut acc = init();
            for (j, item) in chunk.iter().enumerate() {
                per_example(&mut acc, c * CHUNK + j, item)?;
            }
            Ok(acc)
        })
        .collect()
}

/// Mean statistics of one predictor step.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictorStats {
    pub losses: Vec<LossBreakdown>,
    pub selected_fraction: f64,
}

/// Samples a mask for every example from the current (fixed) generator and
/// takes one cross-entropy step on each predictor. Only the two predictors
/// change.
pub fn train_predictors_step(
    state: &mut TrainState,
    batch: &[&TokenSequence],
    game: &GameConfig,
    cfg: &TrainConfig,
    context: &str,
) -> Result<PredictorStats> {
    if batch.is_empty() {
        return Err(Error::EmptyInput);
    }
    let stream = state.next_stream();
    let seed = state.seed;
    let params = &state.params;
    struct Acc {
        gp: Grads,
        gc: Grads,
        losses: Vec<LossBreakdown>,
        frac: f64,
    }
    let parts = chunked(
        batch,
        || Acc {
            gp: params.predictor.zero_grads(),
            gc: params.complement_predictor.zero_grads(),
            losses: Vec::new(),
            frac: 0.0,
        },
        |acc, i, ex| {
            let mut rng = example_rng(seed, stream, i as u64);
            let (probs, _) = params.selection_probs(&ex.tokens)?;
            let m = sample_mask(&probs, game.explore, &mut rng);
            let v = apply_mask(&ex.tokens, &m.z)?;
            let (l_p, _) = classifier_xent_backward(&v.rationale, ex.label, &params.predictor, &mut acc.gp)?;
            let (l_c, _) = classifier_xent_backward(&v.complement, ex.label, &params.complement_predictor, &mut acc.gc)?;
            acc.losses.push(generator_objective(l_p, l_c, &m.z, game));
            acc.frac += selected(&m.z) as f64 / ex.len() as f64;
            Ok(())
        },
    )?;
    let mut it = parts.into_iter();
    let mut total = it.next().expect("nonempty batch");
    for p in it {
        total.gp.add_assign(&p.gp);
        total.gc.add_assign(&p.gc);
        total.losses.extend(p.losses);
        total.frac += p.frac;
    }
    let mean = LossBreakdown::mean(&total.losses);
    check_finite(mean.l_p, "predictor loss", context)?;
    check_finite(mean.l_c, "complement loss", context)?;
    let scale = 1.0 / batch.len() as f64;
    state.params.predictor.accumulate(&total.gp, scale);
    state.params.complement_predictor.accumulate(&total.gc, scale);
    adam_step(&mut state.params.predictor, cfg.lr_predictors, &mut state.steps.predictor, context)?;
    adam_step(
        &mut state.params.complement_predictor,
        cfg.lr_predictors,
        &mut state.steps.complement_predictor,
        context,
    )?;
    Ok(PredictorStats {
        losses: total.losses,
        selected_fraction: total.frac * scale,
    })
}

/// Summed REINFORCE gradient of one batch.
#[derive(Clone, Debug)]
pub struct PolicyGradient {
    pub generator: Grads,
    pub rewards: Vec<f64>,
    pub selected_fraction: f64,
}

/// `Σ (reward − baseline)·∇ log π(z)` over the batch, with masks drawn from
/// the exploration mixture. The sign is that of a loss to descend.
pub fn policy_gradient<F>(
    params: &PlayerParams,
    batch: &[&TokenSequence],
    baseline: f64,
    explore: f64,
    seed: u64,
    stream: u64,
    reward: F,
) -> Result<PolicyGradient>
where
    F: Fn(&TokenSequence, &[u8]) -> Result<f64> + Sync,
{
    struct Acc {
        g: Grads,
        rewards: Vec<f64>,
        frac: f64,
    }
    let parts = chunked(
        batch,
        || Acc {
            g: params.generator.zero_grads(),
            rewards: Vec::new(),
            frac: 0.0,
        },
        |acc, i, ex| {
            let mut rng = example_rng(seed, stream, i as u64);
            let y_tilde = match &params.introspection_classifier {
                Some(c) => Some(introspect_label(&ex.tokens, c)?),
                None => None,
            };
            let trace = generator_forward(&ex.tokens, &params.generator, y_tilde)?;
            let m = sample_mask(&trace.probs, explore, &mut rng);
            let r = reward(ex, &m.z)?;
            let adv = r - baseline;
            let d: Vec<f64> = mask_log_likelihood_grad(&m.z, &trace.probs)
                .into_iter()
                .map(|g| -adv * g)
                .collect();
            generator_backward(&ex.tokens, &trace, &d, &params.generator, &mut acc.g)?;
            acc.rewards.push(r);
            acc.frac += selected(&m.z) as f64 / ex.len() as f64;
            Ok(())
        },
    )?;
    let mut it = parts.into_iter();
    let mut total = it.next().ok_or(Error::EmptyInput)?;
    for p in it {
        total.g.add_assign(&p.g);
        total.rewards.extend(p.rewards);
        total.frac += p.frac;
    }
    Ok(PolicyGradient {
        generator: total.g,
        rewards: total.rewards,
        selected_fraction: total.frac / batch.len() as f64,
    })
}

/// The game reward of one sampled mask under fixed predictors.
pub fn game_reward(params: &PlayerParams, game: &GameConfig, ex: &TokenSequence, z: &[u8]) -> Result<f64> {
    let v = apply_mask(&ex.tokens, z)?;
    let pred_ok = argmax(&predict(&v.rationale, &params.predictor)?) == ex.label;
    let comp_ok = argmax(&predict(&v.complement, &params.complement_predictor)?) == ex.label;
    Ok(sample_reward(pred_ok, comp_ok, z, game))
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorStats {
    pub mean_reward: f64,
    pub selected_fraction: f64,
}

/// One REINFORCE step on the generator group for an arbitrary reward,
/// followed by the baseline update.
pub fn reinforce_step<F>(
    state: &mut TrainState,
    batch: &[&TokenSequence],
    explore: f64,
    cfg: &TrainConfig,
    context: &str,
    reward: F,
) -> Result<GeneratorStats>
where
    F: Fn(&PlayerParams, &TokenSequence, &[u8]) -> Result<f64> + Sync,
{
    if batch.is_empty() {
        return Err(Error::EmptyInput);
    }
    let stream = state.next_stream();
    let params = &state.params;
    let pg = policy_gradient(params, batch, state.baseline, explore, state.seed, stream, |ex, z| {
        reward(params, ex, z)
    })?;
    let mean_reward = pg.rewards.iter().sum::<f64>() / batch.len() as f64;
    check_finite(mean_reward, "reward", context)?;
    state.params.generator.accumulate(&pg.generator, 1.0 / batch.len() as f64);
    adam_step(&mut state.params.generator, cfg.lr_generator, &mut state.steps.generator, context)?;
    state.baseline = update_baseline(state.baseline, mean_reward, cfg.baseline_decay);
    Ok(GeneratorStats {
        mean_reward,
        selected_fraction: pg.selected_fraction,
    })
}

/// [`reinforce_step`] with the game reward: the predictors are held fixed
/// and only the generator's parameters change.
pub fn train_generator_step(
    state: &mut TrainState,
    batch: &[&TokenSequence],
    game: &GameConfig,
    cfg: &TrainConfig,
    context: &str,
) -> Result<GeneratorStats> {
    reinforce_step(state, batch, game.explore, cfg, context, |p, ex, z| game_reward(p, game, ex, z))
}

/// One full-text cross-entropy step on a standalone classifier.
pub fn train_classifier_step(
    classifier: &mut ParamSet,
    step: &mut u64,
    batch: &[&TokenSequence],
    lr: f64,
    context: &str,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::EmptyInput);
    }
    let model = &*classifier;
    let parts = chunked(
        batch,
        || (model.zero_grads(), 0.0),
        |acc, _, ex| {
            acc.1 += classifier_xent_backward(&ex.tokens, ex.label, model, &mut acc.0)?.0;
            Ok(())
        },
    )?;
    let mut it = parts.into_iter();
    let (mut g, mut loss) = it.next().expect("nonempty batch");
    for (pg, pl) in it {
        g.add_assign(&pg);
        loss += pl;
    }
    let scale = 1.0 / batch.len() as f64;
    check_finite(loss, "classifier loss", context)?;
    classifier.accumulate(&g, scale);
    adam_step(classifier, lr, step, context)?;
    Ok(loss * scale)
}

fn train_introspection_classifier(state: &mut TrainState, batch: &[&TokenSequence], lr: f64, context: &str) -> Result<()> {
    if let Some(cls) = state.params.introspection_classifier.as_mut() {
        state.steps.global += 1;
        train_classifier_step(cls, &mut state.steps.classifier, batch, lr, context)?;
    }
    Ok(())
}

fn epoch_batches(data: &Dataset, batch_size: usize, seed: u64, epoch: usize) -> Vec<Vec<&TokenSequence>> {
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix(seed ^ splitmix(0x5eed_0000 + epoch as u64)));
    order.shuffle(&mut rng);
    order
        .chunks(batch_size)
        .map(|c| c.iter().map(|&i| &data.examples[i]).collect())
        .collect()
}

#[derive(Default)]
struct EpochAcc {
    losses: Vec<LossBreakdown>,
    rewards: Vec<f64>,
    fractions: Vec<f64>,
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

fn finish_epoch(
    state: &mut TrainState,
    phase: Phase,
    acc: EpochAcc,
    dev: Option<&Dataset>,
    game: &GameConfig,
    cfg: &TrainConfig,
    track_best: bool,
) -> Result<()> {
    let losses = LossBreakdown::mean(&acc.losses);
    let index = state.epoch;
    state.epoch += 1;
    let report: Option<EvalReport> = match dev {
        Some(d) if state.epoch % cfg.eval_every == 0 && !d.is_empty() => Some(evaluate(d, &state.params, game, None)?),
        _ => None,
    };
    if let (Some(r), true) = (&report, track_best) {
        if state.best.as_ref().map_or(true, |b| r.accuracy > b.dev_acc) {
            state.best = Some(BestCheckpoint {
                epoch: index,
                dev_acc: r.accuracy,
                params: state.params.clone(),
            });
        }
    }
    state.history.push(EpochRecord {
        epoch: index,
        phase,
        l_p: losses.l_p,
        l_c: losses.l_c,
        reward: mean(&acc.rewards),
        baseline: state.baseline,
        dev_acc: report.as_ref().map(|r| r.accuracy),
        dev_acc_c: report.as_ref().map(|r| r.accuracy_c),
        dev_precision: report.as_ref().and_then(|r| r.precision),
        mean_selected_fraction: mean(&acc.fractions),
        losses,
    });
    Ok(())
}

fn joint_epoch(state: &mut TrainState, train: &Dataset, game: &GameConfig, cfg: &TrainConfig) -> Result<EpochAcc> {
    let mut acc = EpochAcc::default();
    for (b, batch) in epoch_batches(train, cfg.batch_size, state.seed, state.epoch).iter().enumerate() {
        let ctx = format!("epoch {} batch {b}", state.epoch);
        for _ in 0..cfg.predictor_steps {
            let s = train_predictors_step(state, batch, game, cfg, &ctx)?;
            acc.losses.extend(s.losses);
        }
        for _ in 0..cfg.generator_steps {
            let g = train_generator_step(state, batch, game, cfg, &ctx)?;
            acc.rewards.push(g.mean_reward);
            acc.fractions.push(g.selected_fraction);
        }
        train_introspection_classifier(state, batch, cfg.lr_predictors, &ctx)?;
    }
    Ok(acc)
}

/// Pretrains a full-text classifier (the introspection classifier when
/// enabled) and copies it into both predictors with fresh optimizer state.
pub fn pretrain_classifier_phase(state: &mut TrainState, train: &Dataset, game: &GameConfig, cfg: &TrainConfig) -> Result<()> {
    let mut classifier = match &state.params.introspection_classifier {
        Some(c) => c.clone(),
        None => state.params.predictor.values_only(),
    };
    let mut steps = state.steps.classifier;
    for _ in 0..cfg.pretrain_epochs_classifier {
        let mut acc = EpochAcc::default();
        for (b, batch) in epoch_batches(train, cfg.batch_size, state.seed, state.epoch).iter().enumerate() {
            let ctx = format!("epoch {} batch {b} (classifier pretraining)", state.epoch);
            state.steps.global += 1;
            let l = train_classifier_step(&mut classifier, &mut steps, batch, cfg.lr_predictors, &ctx)?;
            acc.losses.push(LossBreakdown {
                l_p: l,
                total: l,
                ..LossBreakdown::default()
            });
        }
        finish_epoch(state, Phase::Classifier, acc, None, game, cfg, false)?;
    }
    state.params.predictor = classifier.values_only();
    state.params.complement_predictor = classifier.values_only();
    state.steps.predictor = 0;
    state.steps.complement_predictor = 0;
    if state.params.introspection_classifier.is_some() {
        state.params.introspection_classifier = Some(classifier);
        state.steps.classifier = steps;
    }
    Ok(())
}

/// Generator pretraining against frozen predictors.
pub fn pretrain_generator_phase(
    state: &mut TrainState,
    train: &Dataset,
    dev: Option<&Dataset>,
    game: &GameConfig,
    cfg: &TrainConfig,
) -> Result<()> {
    for _ in 0..cfg.pretrain_epochs_generator {
        let mut acc = EpochAcc::default();
        for (b, batch) in epoch_batches(train, cfg.batch_size, state.seed, state.epoch).iter().enumerate() {
            let ctx = format!("epoch {} batch {b} (generator pretraining)", state.epoch);
            let g = train_generator_step(state, batch, game, cfg, &ctx)?;
            acc.rewards.push(g.mean_reward);
            acc.fractions.push(g.selected_fraction);
        }
        finish_epoch(state, Phase::Generator, acc, dev, game, cfg, true)?;
    }
    Ok(())
}

/// `cfg.epochs` epochs of alternating predictor and generator steps.
pub fn joint_phase(state: &mut TrainState, train: &Dataset, dev: Option<&Dataset>, game: &GameConfig, cfg: &TrainConfig) -> Result<()> {
    for _ in 0..cfg.epochs {
        let acc = joint_epoch(state, train, game, cfg)?;
        finish_epoch(state, Phase::Joint, acc, dev, game, cfg, true)?;
    }
    Ok(())
}

/// Trains all players. Under `Joint`, every batch takes predictor steps then
/// generator steps. Under `ThreeStep`, the classifier and generator
/// pretraining phases run first. `epochs = 0` returns the initial state.
pub fn run_training(train: &Dataset, dev: Option<&Dataset>, game: &GameConfig, cfg: &TrainConfig) -> Result<TrainState> {
    if train.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    game.validate()?;
    cfg.validate()?;
    let mut state = TrainState::new(train.vocab.len(), train.num_classes, cfg);
    if cfg.epochs == 0 {
        return Ok(state);
    }
    if cfg.schedule == Schedule::ThreeStep {
        pretrain_classifier_phase(&mut state, train, game, cfg)?;
        pretrain_generator_phase(&mut state, train, dev, game, cfg)?;
    }
    joint_phase(&mut state, train, dev, game, cfg)?;
    Ok(state)
}
