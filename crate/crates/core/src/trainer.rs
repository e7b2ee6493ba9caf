//! Baseline and adversarial training loops.
//!
//! Baselines (`neg`, `nce`) train a single network. The adversarial
//! objectives pre-train a generator and a discriminator independently with
//! negative sampling, then alternate rounds of `g_steps` generator sweeps and
//! `d_steps` discriminator sweeps. During generator sweeps only the generator
//! is written and vice versa.
//!
//! Everything is driven by one seeded [`ChaCha8Rng`] owned by [`TrainState`],
//! so single-threaded runs are bitwise reproducible.

use std::time::Instant;

use log::{debug, info};
use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{
    build_noise_distribution, make_instances, split_indices, BasketDataset, InstanceMode,
    NoiseDistribution, NoiseKind, TrainingInstance,
};
use crate::error::{ConfigIssue, Error, Result};
use crate::eval::{evaluate, EvalOptions, EvalReport};
use crate::losses::{
    adversarial_disc_loss, combine, neg_loss, nce_loss, weighted_log_likelihood, LossValue,
    SparseGradient,
};
use crate::model::{CategoricalDistribution, EmbeddingModel, Role};
use crate::sampling::{reward_weights_from, sample_categorical, sample_noise};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    Neg,
    Nce,
    GanBasic,
    GanMixed,
}

impl Objective {
    pub fn is_adversarial(self) -> bool {
        matches!(self, Objective::GanBasic | Objective::GanMixed)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Objective::Neg => "neg",
            Objective::Nce => "nce",
            Objective::GanBasic => "gan_basic",
            Objective::GanMixed => "gan_mixed",
        }
    }
}

impl std::str::FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "neg" => Ok(Objective::Neg),
            "nce" => Ok(Objective::Nce),
            "gan_basic" => Ok(Objective::GanBasic),
            "gan_mixed" => Ok(Objective::GanMixed),
            other => Err(Error::config("objective", format!("unknown objective {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub objective: Objective,
    /// Generator (or baseline) embedding size.
    pub dim: usize,
    /// Discriminator embedding size; defaults to `dim`.
    pub disc_dim: Option<usize>,
    pub init_scale: f64,
    /// Learning rate of the baseline and pre-training phases.
    pub learning_rate: f64,
    /// The pre-training rate decays linearly to this fraction of `learning_rate`.
    pub lr_floor: f64,
    pub adv_lr_gen: f64,
    pub adv_lr_disc: f64,
    pub epochs_pretrain: usize,
    /// Upper bound on adversarial rounds.
    pub adversarial_rounds: usize,
    pub g_steps: usize,
    pub d_steps: usize,
    /// Instances visited by one generator or discriminator sweep.
    pub step_instances: usize,
    /// Negatives per instance (noise or discriminator draws from the generator).
    pub k: usize,
    /// Generator draws per instance in the policy-gradient objective.
    pub m: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Seed of the validation split and held-out item choice; shared across
    /// training seeds so runs are scored on the same instances.
    pub eval_seed: u64,
    pub noise: NoiseKind,
    pub noise_power: f64,
    /// Weight of the reward-weighted term in `gan_mixed`.
    pub mix_weight: f64,
    pub eval_every: usize,
    pub patience: usize,
    pub validation_fraction: f64,
    pub eval_ks: Vec<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            objective: Objective::Neg,
            dim: 64,
            disc_dim: None,
            init_scale: 1.0,
            learning_rate: 0.05,
            lr_floor: 0.1,
            adv_lr_gen: 0.01,
            adv_lr_disc: 0.01,
            epochs_pretrain: 10,
            adversarial_rounds: 50,
            g_steps: 1,
            d_steps: 1,
            step_instances: 20_000,
            k: 5,
            m: 5,
            batch_size: 1,
            seed: 0,
            eval_seed: 0,
            noise: NoiseKind::Unigram,
            noise_power: 0.75,
            mix_weight: crate::losses::DEFAULT_MIX,
            eval_every: 1,
            patience: 3,
            validation_fraction: 0.1,
            eval_ks: vec![1, 5, 10],
        }
    }
}

impl TrainConfig {
    pub fn disc_dim(&self) -> usize {
        self.disc_dim.unwrap_or(self.dim)
    }

    /// Same configuration with every optional value made explicit.
    pub fn resolved(&self) -> Self {
        TrainConfig {
            disc_dim: Some(self.disc_dim()),
            ..self.clone()
        }
    }

    /// Checks every field, reporting all violations at once.
    pub fn validate(&self) -> Result<()> {
        let mut issues = Vec::new();
        let mut check = |ok: bool, field: &str, reason: &str| {
            if !ok {
                issues.push(ConfigIssue {
                    field: field.into(),
                    reason: reason.into(),
                });
            }
        };
        check(self.dim >= 1, "dim", "must be >= 1");
        check(self.disc_dim() >= 1, "disc_dim", "must be >= 1");
        check(self.init_scale.is_finite() && self.init_scale >= 0.0, "init_scale", "must be finite and >= 0");
        check(self.learning_rate.is_finite() && self.learning_rate > 0.0, "learning_rate", "must be > 0");
        check((0.0..=1.0).contains(&self.lr_floor), "lr_floor", "must lie in [0, 1]");
        check(self.adv_lr_gen.is_finite() && self.adv_lr_gen >= 0.0, "adv_lr_gen", "must be >= 0");
        check(self.adv_lr_disc.is_finite() && self.adv_lr_disc >= 0.0, "adv_lr_disc", "must be >= 0");
        check(self.adversarial_rounds >= 1, "adversarial_rounds", "must be >= 1");
        check(self.g_steps >= 1, "g_steps", "must be >= 1");
        check(self.d_steps >= 1, "d_steps", "must be >= 1");
        check(self.step_instances >= 1, "step_instances", "must be >= 1");
        check(self.k >= 1, "k", "must be >= 1");
        check(self.m >= 1, "m", "must be >= 1");
        check(self.batch_size >= 1, "batch_size", "must be >= 1");
        check(self.noise_power.is_finite() && self.noise_power >= 0.0, "noise_power", "must be >= 0");
        check((0.0..=1.0).contains(&self.mix_weight), "mix_weight", "must lie in [0, 1]");
        check(self.eval_every >= 1, "eval_every", "must be >= 1");
        check(self.patience >= 1, "patience", "must be >= 1");
        check(
            (0.0..1.0).contains(&self.validation_fraction),
            "validation_fraction",
            "must lie in [0, 1)",
        );
        check(
            !self.eval_ks.is_empty() && self.eval_ks.iter().all(|&k| k >= 1),
            "eval_ks",
            "must be a non-empty list of counts >= 1",
        );
        if issues.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(issues))
        }
    }
}

/// Deterministic per-purpose seed derivation (splitmix64 finalizer).
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const STREAM_TRAIN: u64 = 1;
const STREAM_GEN_INIT: u64 = 2;
const STREAM_DISC_INIT: u64 = 3;
const STREAM_VAL_SPLIT: u64 = 4;
const STREAM_VAL_INSTANCES: u64 = 5;
const STREAM_TEST_INSTANCES: u64 = 6;

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub phase: Phase,
    /// Epoch for baselines and pre-training, adversarial round otherwise.
    pub round: usize,
    pub objective_mean: f64,
    pub disc_objective_mean: Option<f64>,
    pub val_mpr_generator: Option<f64>,
    pub val_mpr_discriminator: Option<f64>,
    pub wall_secs: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Baseline,
    Pretrain,
    Adversarial,
}

#[derive(Debug, Clone)]
pub struct TrainState {
    pub generator: EmbeddingModel,
    pub discriminator: Option<EmbeddingModel>,
    pub round: usize,
    pub rng: ChaCha8Rng,
    pub history: Vec<RoundRecord>,
}

impl TrainState {
    pub fn new(catalog_size: usize, config: &TrainConfig) -> Result<Self> {
        let generator = EmbeddingModel::init(
            catalog_size,
            config.dim,
            derive_seed(config.seed, STREAM_GEN_INIT),
            config.init_scale,
            Role::Generator,
        )?;
        let discriminator = if config.objective.is_adversarial() {
            Some(EmbeddingModel::init(
                catalog_size,
                config.disc_dim(),
                derive_seed(config.seed, STREAM_DISC_INIT),
                config.init_scale,
                Role::Discriminator,
            )?)
        } else {
            None
        };
        Ok(TrainState {
            generator,
            discriminator,
            round: 0,
            rng: ChaCha8Rng::seed_from_u64(derive_seed(config.seed, STREAM_TRAIN)),
            history: Vec::new(),
        })
    }

    fn discriminator(&self) -> Result<&EmbeddingModel> {
        self.discriminator
            .as_ref()
            .ok_or_else(|| Error::InvalidInput("adversarial training needs a discriminator".into()))
    }
}

/// Gradient ascent on the touched rows: `row += lr * grad`.
///
/// Nothing is written unless every updated entry stays finite.
pub fn sgd_apply(model: &mut EmbeddingModel, gradient: &SparseGradient, lr: f64) -> Result<()> {
    if gradient.dim() != model.dim() {
        return Err(Error::InvalidInput(format!(
            "gradient dim {} does not match model dim {}",
            gradient.dim(),
            model.dim()
        )));
    }
    if lr == 0.0 {
        return Ok(());
    }
    for (table, row, g) in gradient.iter() {
        model.check_item(row)?;
        let current = model.row(table, row);
        if current.iter().zip(g).any(|(x, d)| !(x + lr * d).is_finite()) {
            return Err(Error::Divergence(format!(
                "non-finite update of {table:?} row {row} in the {}",
                model.role()
            )));
        }
    }
    for (table, row, g) in gradient.iter() {
        for (x, d) in model.row_mut(table, row).iter_mut().zip(g) {
            *x += lr * d;
        }
    }
    Ok(())
}

/// Static-negative loss used by baselines and pre-training.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StaticLoss {
    Neg,
    Nce,
}

/// One pass over `instances` in a shuffled order.
#[derive(Debug, Clone, Copy)]
pub struct EpochPlan {
    pub loss: StaticLoss,
    pub k: usize,
    pub batch_size: usize,
    /// Rate of the first batch.
    pub lr_start: f64,
    /// Rate the schedule reaches after the last batch.
    pub lr_end: f64,
}

fn apply_batch(
    model: &mut EmbeddingModel,
    grads: Vec<SparseGradient>,
    lr: f64,
) -> Result<()> {
    let mut iter = grads.into_iter();
    let Some(mut total) = iter.next() else {
        return Ok(());
    };
    for g in iter {
        total.merge_scaled(&g, 1.0);
    }
    sgd_apply(model, &total, lr)
}

/// Runs one SGD epoch and returns the mean sampled objective.
pub fn sgd_epoch(
    model: &mut EmbeddingModel,
    instances: &[TrainingInstance],
    plan: &EpochPlan,
    noise: &NoiseDistribution,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    if instances.is_empty() {
        return Ok(0.0);
    }
    let mut order: Vec<usize> = (0..instances.len()).collect();
    order.shuffle(rng);
    let n_batches = order.len().div_ceil(plan.batch_size);
    let mut total = 0.0;
    for (b, chunk) in order.chunks(plan.batch_size).enumerate() {
        let lr = plan.lr_start + (plan.lr_end - plan.lr_start) * b as f64 / n_batches as f64;
        let mut grads = Vec::with_capacity(chunk.len());
        for &i in chunk {
            let inst = &instances[i];
            let negatives = sample_noise(noise, plan.k, rng);
            let (value, grad) = match plan.loss {
                StaticLoss::Neg => neg_loss(model, inst, &negatives)?,
                StaticLoss::Nce => nce_loss(model, inst, &negatives, noise)?,
            };
            total += value.total;
            grads.push(grad);
        }
        apply_batch(model, grads, lr)?;
    }
    Ok(total / instances.len() as f64)
}

/// Learning rate at fraction `t` of a linearly decaying schedule.
fn decayed(lr: f64, floor: f64, t: f64) -> f64 {
    lr * (1.0 - (1.0 - floor) * t)
}

fn static_schedule(
    model: &mut EmbeddingModel,
    instances: &[TrainingInstance],
    loss: StaticLoss,
    noise: &NoiseDistribution,
    config: &TrainConfig,
    rng: &mut ChaCha8Rng,
    mut after_epoch: impl FnMut(&EmbeddingModel, usize, f64) -> Result<()>,
) -> Result<()> {
    let epochs = config.epochs_pretrain;
    for epoch in 0..epochs {
        let plan = EpochPlan {
            loss,
            k: config.k,
            batch_size: config.batch_size,
            lr_start: decayed(config.learning_rate, config.lr_floor, epoch as f64 / epochs as f64),
            lr_end: decayed(config.learning_rate, config.lr_floor, (epoch + 1) as f64 / epochs as f64),
        };
        let objective = sgd_epoch(model, instances, &plan, noise, rng)?;
        debug!("{} epoch {} objective {objective:.5}", model.role(), epoch + 1);
        after_epoch(model, epoch + 1, objective)?;
    }
    Ok(())
}

/// Pre-trains the generator and then the discriminator (when present) for
/// `epochs_pretrain` negative-sampling epochs each. With zero epochs the
/// state, including its generator, is left untouched.
pub fn pretrain(
    state: &mut TrainState,
    instances: &[TrainingInstance],
    config: &TrainConfig,
    noise: &NoiseDistribution,
) -> Result<Vec<f64>> {
    let mut objectives = Vec::new();
    let rng = &mut state.rng;
    static_schedule(&mut state.generator, instances, StaticLoss::Neg, noise, config, rng, |_, _, v| {
        objectives.push(v);
        Ok(())
    })?;
    if let Some(disc) = state.discriminator.as_mut() {
        static_schedule(disc, instances, StaticLoss::Neg, noise, config, rng, |_, _, v| {
            objectives.push(v);
            Ok(())
        })?;
    }
    Ok(objectives)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RoundStats {
    pub generator_objective: f64,
    pub discriminator_objective: f64,
}

fn sweep_indices(n: usize, config: &TrainConfig, rng: &mut ChaCha8Rng) -> Vec<usize> {
    index::sample(rng, n, config.step_instances.min(n)).into_vec()
}

fn generator_instance_step(
    gen: &EmbeddingModel,
    disc: &EmbeddingModel,
    inst: &TrainingInstance,
    config: &TrainConfig,
    uniform: &NoiseDistribution,
    rng: &mut ChaCha8Rng,
) -> Result<(LossValue, SparseGradient)> {
    let ctx = gen.context_embedding(&inst.context)?;
    let dist = CategoricalDistribution::from_logits(&gen.logits(&ctx));
    let draws = sample_categorical(&dist, config.m, rng)?;
    let disc_dist = disc.conditional_distribution(&inst.context)?;
    let weights = reward_weights_from(&disc_dist, &draws);
    let adversarial = weighted_log_likelihood(gen, inst, &ctx, &dist, &draws, &weights)?;
    match config.objective {
        Objective::GanMixed => {
            let noise_draws = sample_noise(uniform, config.k, rng);
            let likelihood = neg_loss(gen, inst, &noise_draws)?;
            Ok(combine(adversarial, likelihood, config.mix_weight))
        }
        _ => Ok(adversarial),
    }
}

/// One round of `g_steps` generator sweeps followed by `d_steps`
/// discriminator sweeps, each over `step_instances` sampled instances.
///
/// `uniform` supplies the likelihood-term negatives of `gan_mixed`.
pub fn adversarial_round(
    state: &mut TrainState,
    instances: &[TrainingInstance],
    config: &TrainConfig,
    uniform: &NoiseDistribution,
) -> Result<RoundStats> {
    if instances.is_empty() {
        return Err(Error::InvalidInput("no training instances".into()));
    }
    state.discriminator()?;
    let mut stats = RoundStats::default();

    let mut gen_total = 0.0;
    let mut gen_count = 0usize;
    for _ in 0..config.g_steps {
        let picks = sweep_indices(instances.len(), config, &mut state.rng);
        for chunk in picks.chunks(config.batch_size) {
            let disc = state.discriminator.as_ref().expect("checked above");
            let mut grads = Vec::with_capacity(chunk.len());
            for &i in chunk {
                let (value, grad) = generator_instance_step(
                    &state.generator,
                    disc,
                    &instances[i],
                    config,
                    uniform,
                    &mut state.rng,
                )?;
                gen_total += value.total;
                gen_count += 1;
                grads.push(grad);
            }
            apply_batch(&mut state.generator, grads, config.adv_lr_gen)?;
        }
    }
    stats.generator_objective = gen_total / gen_count.max(1) as f64;

    let mut disc_total = 0.0;
    let mut disc_count = 0usize;
    for _ in 0..config.d_steps {
        let picks = sweep_indices(instances.len(), config, &mut state.rng);
        for chunk in picks.chunks(config.batch_size) {
            let mut grads = Vec::with_capacity(chunk.len());
            for &i in chunk {
                let inst = &instances[i];
                let dist = state.generator.conditional_distribution(&inst.context)?;
                let draws = sample_categorical(&dist, config.k, &mut state.rng)?;
                let disc = state.discriminator.as_ref().expect("checked above");
                let (value, grad) = adversarial_disc_loss(disc, inst, &draws)?;
                disc_total += value.total;
                disc_count += 1;
                grads.push(grad);
            }
            let disc = state.discriminator.as_mut().expect("checked above");
            apply_batch(disc, grads, config.adv_lr_disc)?;
        }
    }
    stats.discriminator_objective = disc_total / disc_count.max(1) as f64;

    state.round += 1;
    Ok(stats)
}

/// Patience-based stopping on a metric that should increase.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    since_best: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            best: f64::NEG_INFINITY,
            since_best: 0,
        }
    }

    /// Records a new evaluation; returns true once `patience` consecutive
    /// evaluations failed to improve on the best so far.
    pub fn observe(&mut self, value: f64) -> bool {
        if value > self.best {
            self.best = value;
            self.since_best = 0;
        } else {
            self.since_best += 1;
        }
        self.since_best >= self.patience
    }

    pub fn improved_last(&self) -> bool {
        self.since_best == 0
    }

    pub fn best(&self) -> f64 {
        self.best
    }
}

/// Instances and noise distributions derived from a train/test split.
#[derive(Debug, Clone)]
pub struct PreparedData {
    /// All-positions instances of the training baskets outside the validation slice.
    pub fit: Vec<TrainingInstance>,
    pub validation: Vec<TrainingInstance>,
    pub test: Vec<TrainingInstance>,
    /// Configured noise (unigram^power by default) over the fit baskets.
    pub noise: NoiseDistribution,
    /// Uniform noise for the likelihood half of `gan_mixed`.
    pub uniform: NoiseDistribution,
}

pub fn prepare_data(
    train: &BasketDataset,
    test: &BasketDataset,
    config: &TrainConfig,
) -> Result<PreparedData> {
    if train.is_empty() {
        return Err(Error::NoBaskets);
    }
    let (fit_ds, val_ds) = if config.validation_fraction > 0.0 && train.len() >= 2 {
        let (fit, val) = split_indices(
            train.len(),
            config.validation_fraction,
            derive_seed(config.eval_seed, STREAM_VAL_SPLIT),
        )?;
        (train.subset(&fit)?, Some(train.subset(&val)?))
    } else {
        (train.clone(), None)
    };
    let fit = make_instances(&fit_ds, InstanceMode::AllPositions, 0).instances;
    if fit.is_empty() {
        return Err(Error::Data("training baskets yield no instances".into()));
    }
    let validation = val_ds
        .map(|v| {
            make_instances(&v, InstanceMode::OneRandom, derive_seed(config.eval_seed, STREAM_VAL_INSTANCES))
                .instances
        })
        .unwrap_or_default();
    let test = test_instances(test, config);
    if test.is_empty() {
        return Err(Error::EmptyTestSet);
    }
    Ok(PreparedData {
        fit,
        validation,
        test,
        noise: build_noise_distribution(&fit_ds, config.noise, config.noise_power)?,
        uniform: NoiseDistribution::uniform(train.catalog().len())?,
    })
}

/// Held-out instances of the test baskets: one seeded item per basket.
pub fn test_instances(test: &BasketDataset, config: &TrainConfig) -> Vec<TrainingInstance> {
    make_instances(
        test,
        InstanceMode::OneRandom,
        derive_seed(config.eval_seed, STREAM_TEST_INSTANCES),
    )
    .instances
}

/// Hooks invoked by [`train_with_observer`].
pub trait TrainObserver {
    /// Called after every evaluation point with the freshly logged record.
    fn on_eval(&mut self, _state: &TrainState, _record: &RoundRecord) -> Result<()> {
        Ok(())
    }

    /// Called with the last consistent state when an update would diverge.
    fn on_divergence(&mut self, _state: &TrainState, _error: &Error) {}
}

impl TrainObserver for () {}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub state: TrainState,
    /// Test reports of the generator and discriminator right after
    /// pre-training (adversarial objectives only).
    pub pretrain_reports: Option<(EvalReport, EvalReport)>,
    pub generator_report: EvalReport,
    pub discriminator_report: Option<EvalReport>,
    /// Adversarial round whose models were kept (0 = pre-trained models).
    pub best_round: usize,
    pub test_instances: Vec<TrainingInstance>,
}

pub fn train(train: &BasketDataset, test: &BasketDataset, config: &TrainConfig) -> Result<TrainOutcome> {
    train_with_observer(train, test, config, &mut ())
}

pub fn train_with_observer(
    train: &BasketDataset,
    test: &BasketDataset,
    config: &TrainConfig,
    observer: &mut dyn TrainObserver,
) -> Result<TrainOutcome> {
    config.validate()?;
    if train.catalog() != test.catalog() {
        return Err(Error::CatalogMismatch("train and test catalogs differ".into()));
    }
    let data = prepare_data(train, test, config)?;
    let mut state = TrainState::new(train.catalog().len(), config)?;
    let result = run(&mut state, &data, config, observer);
    match result {
        Ok((pretrain_reports, best_round)) => {
            let options = EvalOptions::default();
            let generator_report = evaluate(&state.generator, &data.test, &config.eval_ks, options)?;
            let discriminator_report = state
                .discriminator
                .as_ref()
                .map(|d| evaluate(d, &data.test, &config.eval_ks, options))
                .transpose()?;
            Ok(TrainOutcome {
                state,
                pretrain_reports,
                generator_report,
                discriminator_report,
                best_round,
                test_instances: data.test,
            })
        }
        Err(e) => {
            if matches!(e, Error::Divergence(_)) {
                observer.on_divergence(&state, &e);
            }
            Err(e)
        }
    }
}

fn val_mpr(model: &EmbeddingModel, data: &PreparedData, config: &TrainConfig) -> Result<Option<f64>> {
    if data.validation.is_empty() {
        return Ok(None);
    }
    let report = evaluate(model, &data.validation, &config.eval_ks, EvalOptions::default())?;
    Ok(Some(report.mpr))
}

type RunResult = (Option<(EvalReport, EvalReport)>, usize);

fn run(
    state: &mut TrainState,
    data: &PreparedData,
    config: &TrainConfig,
    observer: &mut dyn TrainObserver,
) -> Result<RunResult> {
    let started = Instant::now();
    if !config.objective.is_adversarial() {
        let loss = match config.objective {
            Objective::Nce => StaticLoss::Nce,
            _ => StaticLoss::Neg,
        };
        let mut gen = state.generator.clone();
        let mut rng = state.rng.clone();
        let mut records = Vec::new();
        let outcome = static_schedule(&mut gen, &data.fit, loss, &data.noise, config, &mut rng, |m, epoch, obj| {
            if epoch % config.eval_every != 0 && epoch != config.epochs_pretrain {
                return Ok(());
            }
            let record = RoundRecord {
                phase: Phase::Baseline,
                round: epoch,
                objective_mean: obj,
                disc_objective_mean: None,
                val_mpr_generator: val_mpr(m, data, config)?,
                val_mpr_discriminator: None,
                wall_secs: started.elapsed().as_secs_f64(),
            };
            info!("epoch {epoch}: objective {obj:.4} val MPR {:?}", record.val_mpr_generator);
            let snapshot = TrainState {
                generator: m.clone(),
                discriminator: None,
                round: epoch,
                rng: ChaCha8Rng::seed_from_u64(0),
                history: Vec::new(),
            };
            observer.on_eval(&snapshot, &record)?;
            records.push(record);
            Ok(())
        });
        state.generator = gen;
        state.rng = rng;
        state.history.extend(records);
        state.round = config.epochs_pretrain;
        outcome?;
        return Ok((None, 0));
    }

    let pretrain_objectives = pretrain(state, &data.fit, config, &data.noise)?;
    let disc = state.discriminator()?;
    let options = EvalOptions::default();
    let pretrain_reports = (
        evaluate(&state.generator, &data.test, &config.eval_ks, options)?,
        evaluate(disc, &data.test, &config.eval_ks, options)?,
    );
    let record = RoundRecord {
        phase: Phase::Pretrain,
        round: 0,
        objective_mean: pretrain_objectives.last().copied().unwrap_or(f64::NAN),
        disc_objective_mean: None,
        val_mpr_generator: val_mpr(&state.generator, data, config)?,
        val_mpr_discriminator: val_mpr(disc, data, config)?,
        wall_secs: started.elapsed().as_secs_f64(),
    };
    info!(
        "pretrained: val MPR G {:?} D {:?}",
        record.val_mpr_generator, record.val_mpr_discriminator
    );
    observer.on_eval(state, &record)?;

    let mut stopper = EarlyStopping::new(config.patience);
    let mut best = (0usize, state.generator.clone(), state.discriminator.clone());
    if let Some(mpr) = record.val_mpr_generator {
        stopper.observe(mpr);
    }
    state.history.push(record);

    for round in 1..=config.adversarial_rounds {
        let stats = adversarial_round(state, &data.fit, config, &data.uniform)?;
        if round % config.eval_every != 0 && round != config.adversarial_rounds {
            continue;
        }
        let disc = state.discriminator()?;
        let record = RoundRecord {
            phase: Phase::Adversarial,
            round,
            objective_mean: stats.generator_objective,
            disc_objective_mean: Some(stats.discriminator_objective),
            val_mpr_generator: val_mpr(&state.generator, data, config)?,
            val_mpr_discriminator: val_mpr(disc, data, config)?,
            wall_secs: started.elapsed().as_secs_f64(),
        };
        info!(
            "round {round}: G {:.4} D {:.4} val MPR G {:?} D {:?}",
            stats.generator_objective,
            stats.discriminator_objective,
            record.val_mpr_generator,
            record.val_mpr_discriminator
        );
        observer.on_eval(state, &record)?;
        let val = record.val_mpr_generator;
        state.history.push(record);

        if let Some(mpr) = val {
            let stop = stopper.observe(mpr);
            if stopper.improved_last() {
                best = (round, state.generator.clone(), state.discriminator.clone());
            }
            if stop {
                info!("no validation improvement for {} evaluations, stopping", config.patience);
                break;
            }
        } else {
            best = (round, state.generator.clone(), state.discriminator.clone());
        }
    }

    let (best_round, generator, discriminator) = best;
    state.generator = generator;
    state.discriminator = discriminator;
    Ok((Some(pretrain_reports), best_round))
}
