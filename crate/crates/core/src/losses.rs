//! Training objectives and their analytic gradients.
//!
//! Every objective is a quantity to maximize. Gradients are returned with
//! respect to the embedding rows the objective touches and are applied by
//! gradient ascent (see [`crate::trainer::sgd_apply`]).
//!
//! With `c` the mean of the context input rows and `s_j = w_j . c` the logit
//! of item `j`:
//!
//! ```text
//! NEG / adversarial D:  log σ(s_z) + Σ_i log σ(-s_{N_i})
//! NCE:                  log σ(s_z - log(k q_z)) + Σ_i log σ(-(s_{N_i} - log(k q_{N_i})))
//! generator (basic):    Σ_i ω_i log P_G(O_i | C),   ω_i = r_i / Σ_j r_j
//! generator (mixed):    λ basic + (1 - λ) NEG with uniform negatives
//! ```
//!
//! The reward weights `ω_i` and all sampled items are constants: no gradient
//! flows through the sampling or through the discriminator.

use std::collections::HashMap;

use crate::corpus::{NoiseDistribution, TrainingInstance};
use crate::error::{Error, Result};
use crate::model::{dot, CategoricalDistribution, ContextVector, EmbeddingModel, Table};
use crate::sampling::{reward_weights_from, DrawSource, NegativeDraw, RewardWeights};

/// Default weight of the reward-weighted term in the mixed generator objective.
pub const DEFAULT_MIX: f64 = 0.5;

/// Numerically stable `log σ(x)`.
pub fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossValue {
    pub total: f64,
    /// `log σ(.)` of the true target.
    pub positive: f64,
    /// Sum of the negative log-sigmoid terms.
    pub negative: f64,
    /// Reward-weighted log-likelihood of generator draws.
    pub adversarial: f64,
    /// `positive + negative` of the likelihood half of the mixed objective.
    pub mle: f64,
}

/// Gradient rows keyed by (table, item).
#[derive(Debug, Clone, PartialEq)]
pub struct SparseGradient {
    dim: usize,
    keys: Vec<(Table, usize)>,
    values: Vec<f64>,
    slots: HashMap<(Table, usize), usize>,
}

impl SparseGradient {
    pub fn new(dim: usize) -> Self {
        SparseGradient {
            dim,
            keys: Vec::new(),
            values: Vec::new(),
            slots: HashMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of distinct rows.
    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    fn slot(&mut self, table: Table, row: usize) -> &mut [f64] {
        let next = self.keys.len();
        let slot = *self.slots.entry((table, row)).or_insert(next);
        if slot == next {
            self.keys.push((table, row));
            self.values.resize(self.values.len() + self.dim, 0.0);
        }
        &mut self.values[slot * self.dim..(slot + 1) * self.dim]
    }

    /// `row += scale * v`.
    pub fn add_scaled(&mut self, table: Table, row: usize, scale: f64, v: &[f64]) {
        debug_assert_eq!(v.len(), self.dim);
        for (g, x) in self.slot(table, row).iter_mut().zip(v) {
            *g += scale * x;
        }
    }

    pub fn get(&self, table: Table, row: usize) -> Option<&[f64]> {
        self.slots
            .get(&(table, row))
            .map(|&s| &self.values[s * self.dim..(s + 1) * self.dim])
    }

    pub fn iter(&self) -> impl Iterator<Item = (Table, usize, &[f64])> + '_ {
        self.keys
            .iter()
            .zip(self.values.chunks_exact(self.dim.max(1)))
            .map(|(&(t, r), v)| (t, r, v))
    }

    pub fn scale(&mut self, factor: f64) {
        self.values.iter_mut().for_each(|v| *v *= factor);
    }

    /// `self += factor * other`.
    pub fn merge_scaled(&mut self, other: &SparseGradient, factor: f64) {
        for (table, row, v) in other.iter() {
            self.add_scaled(table, row, factor, v);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

fn check_instance(model: &EmbeddingModel, instance: &TrainingInstance) -> Result<ContextVector> {
    model.check_item(instance.target)?;
    model.context_embedding(&instance.context)
}

fn check_items(model: &EmbeddingModel, items: &[usize]) -> Result<()> {
    items.iter().try_for_each(|&i| model.check_item(i))
}

/// Spreads the context-vector gradient over the context input rows.
fn backprop_context(grad: &mut SparseGradient, context: &[usize], d_ctx: &[f64]) {
    let share = 1.0 / context.len() as f64;
    for &item in context {
        grad.add_scaled(Table::Input, item, share, d_ctx);
    }
}

/// `log σ(s_z - b_z) + Σ log σ(-(s_n - b_n))` and its gradient, where the
/// `b` are per-item logit offsets (zero for negative sampling).
fn logistic_objective(
    model: &EmbeddingModel,
    instance: &TrainingInstance,
    ctx: &ContextVector,
    target_offset: f64,
    negatives: &[(usize, f64)],
) -> (LossValue, SparseGradient) {
    let dim = model.dim();
    let mut grad = SparseGradient::new(dim);
    let mut d_ctx = vec![0.0; dim];

    let z = instance.target;
    let s_z = model.score(ctx, z) - target_offset;
    let positive = log_sigmoid(s_z);
    let g = sigmoid(-s_z);
    grad.add_scaled(Table::Output, z, g, &ctx.values);
    for (d, w) in d_ctx.iter_mut().zip(model.output_row(z)) {
        *d += g * w;
    }

    let mut negative = 0.0;
    for &(n, offset) in negatives {
        let s = model.score(ctx, n) - offset;
        negative += log_sigmoid(-s);
        let g = -sigmoid(s);
        grad.add_scaled(Table::Output, n, g, &ctx.values);
        for (d, w) in d_ctx.iter_mut().zip(model.output_row(n)) {
            *d += g * w;
        }
    }
    backprop_context(&mut grad, &instance.context, &d_ctx);

    let value = LossValue {
        total: positive + negative,
        positive,
        negative,
        adversarial: 0.0,
        mle: positive + negative,
    };
    (value, grad)
}

/// Negative-sampling objective against the given negatives.
pub fn neg_loss(
    model: &EmbeddingModel,
    instance: &TrainingInstance,
    negatives: &NegativeDraw,
) -> Result<(LossValue, SparseGradient)> {
    let ctx = check_instance(model, instance)?;
    check_items(model, &negatives.items)?;
    let terms: Vec<(usize, f64)> = negatives.items.iter().map(|&n| (n, 0.0)).collect();
    Ok(logistic_objective(model, instance, &ctx, 0.0, &terms))
}

/// Binary NCE with `k = negatives.len()` noise samples and a self-normalized
/// model (partition function fixed to one).
pub fn nce_loss(
    model: &EmbeddingModel,
    instance: &TrainingInstance,
    negatives: &NegativeDraw,
    noise: &NoiseDistribution,
) -> Result<(LossValue, SparseGradient)> {
    let ctx = check_instance(model, instance)?;
    check_items(model, &negatives.items)?;
    if noise.len() != model.n_items() {
        return Err(Error::CatalogMismatch("noise distribution size".into()));
    }
    if negatives.is_empty() {
        return Err(Error::config("k", "nce needs at least one noise sample"));
    }
    let k = negatives.len() as f64;
    let offset = |item: usize| -> Result<f64> {
        let q = noise.prob(item);
        if q <= 0.0 {
            return Err(Error::NceNoiseSupport { item });
        }
        Ok((k * q).ln())
    };
    let target_offset = offset(instance.target)?;
    let terms = negatives
        .items
        .iter()
        .map(|&n| offset(n).map(|o| (n, o)))
        .collect::<Result<Vec<_>>>()?;
    Ok(logistic_objective(model, instance, &ctx, target_offset, &terms))
}

/// Discriminator objective with negatives drawn from the generator.
pub fn adversarial_disc_loss(
    disc: &EmbeddingModel,
    instance: &TrainingInstance,
    gen_negatives: &NegativeDraw,
) -> Result<(LossValue, SparseGradient)> {
    if gen_negatives.source != DrawSource::Generator {
        return Err(Error::InvalidInput(
            "adversarial discriminator loss expects generator draws".into(),
        ));
    }
    neg_loss(disc, instance, gen_negatives)
}

/// Reward-weighted log-likelihood given the generator's softmax for this
/// context. The gradient covers every output row since `log P_G` depends on
/// the whole partition function.
pub(crate) fn weighted_log_likelihood(
    gen: &EmbeddingModel,
    instance: &TrainingInstance,
    ctx: &ContextVector,
    dist: &CategoricalDistribution,
    draws: &NegativeDraw,
    weights: &RewardWeights,
) -> Result<(LossValue, SparseGradient)> {
    if draws.is_empty() {
        return Err(Error::config("m", "must be >= 1"));
    }
    if draws.len() != weights.len() {
        return Err(Error::InvalidInput(format!(
            "{} draws but {} reward weights",
            draws.len(),
            weights.len()
        )));
    }
    check_items(gen, &draws.items)?;

    let dim = gen.dim();
    // d/ds_j of sum_i w_i log P(O_i) is (weight on j) - (sum_i w_i) P(j)
    let weight_sum: f64 = weights.normalized.iter().sum();
    let mut coef: Vec<f64> = dist.probs.iter().map(|p| -weight_sum * p).collect();
    let mut value = 0.0;
    for (&item, &w) in draws.items.iter().zip(&weights.normalized) {
        value += w * dist.log_probs[item];
        coef[item] += w;
    }

    let mut grad = SparseGradient::new(dim);
    let mut d_ctx = vec![0.0; dim];
    for (j, &c) in coef.iter().enumerate() {
        if c == 0.0 {
            continue;
        }
        grad.add_scaled(Table::Output, j, c, &ctx.values);
        for (d, w) in d_ctx.iter_mut().zip(gen.output_row(j)) {
            *d += c * w;
        }
    }
    backprop_context(&mut grad, &instance.context, &d_ctx);

    let value = LossValue {
        total: value,
        adversarial: value,
        ..LossValue::default()
    };
    Ok((value, grad))
}

/// Basic generator objective with explicit (frozen) reward weights.
pub fn maligan_gen_loss_weighted(
    gen: &EmbeddingModel,
    instance: &TrainingInstance,
    draws: &NegativeDraw,
    weights: &RewardWeights,
) -> Result<(LossValue, SparseGradient)> {
    let ctx = check_instance(gen, instance)?;
    let dist = CategoricalDistribution::from_logits(&gen.logits(&ctx));
    weighted_log_likelihood(gen, instance, &ctx, &dist, draws, weights)
}

/// Basic generator objective with rewards taken from `disc`.
pub fn maligan_gen_loss(
    gen: &EmbeddingModel,
    disc: &EmbeddingModel,
    instance: &TrainingInstance,
    draws: &NegativeDraw,
) -> Result<(LossValue, SparseGradient)> {
    if disc.n_items() != gen.n_items() {
        return Err(Error::CatalogMismatch("generator and discriminator sizes differ".into()));
    }
    check_items(disc, &draws.items)?;
    let disc_dist = disc.conditional_distribution(&instance.context)?;
    let weights = reward_weights_from(&disc_dist, draws);
    maligan_gen_loss_weighted(gen, instance, draws, &weights)
}

pub(crate) fn combine(
    adversarial: (LossValue, SparseGradient),
    likelihood: (LossValue, SparseGradient),
    mix: f64,
) -> (LossValue, SparseGradient) {
    let (adv_value, mut grad) = adversarial;
    let (mle_value, mle_grad) = likelihood;
    grad.scale(mix);
    grad.merge_scaled(&mle_grad, 1.0 - mix);
    let value = LossValue {
        total: mix * adv_value.total + (1.0 - mix) * mle_value.total,
        positive: mle_value.positive,
        negative: mle_value.negative,
        adversarial: adv_value.total,
        mle: mle_value.total,
    };
    (value, grad)
}

/// Mixed generator objective with explicit reward weights and mixing weight.
pub fn mixed_gen_loss_weighted(
    gen: &EmbeddingModel,
    instance: &TrainingInstance,
    gen_draws: &NegativeDraw,
    weights: &RewardWeights,
    noise_draws: &NegativeDraw,
    mix: f64,
) -> Result<(LossValue, SparseGradient)> {
    let adversarial = maligan_gen_loss_weighted(gen, instance, gen_draws, weights)?;
    let likelihood = neg_loss(gen, instance, noise_draws)?;
    Ok(combine(adversarial, likelihood, mix))
}

/// Mixed generator objective, half reward-weighted likelihood and half
/// negative sampling over `noise_draws`.
pub fn mixed_gen_loss(
    gen: &EmbeddingModel,
    disc: &EmbeddingModel,
    instance: &TrainingInstance,
    gen_draws: &NegativeDraw,
    noise_draws: &NegativeDraw,
) -> Result<(LossValue, SparseGradient)> {
    let adversarial = maligan_gen_loss(gen, disc, instance, gen_draws)?;
    let likelihood = neg_loss(gen, instance, noise_draws)?;
    Ok(combine(adversarial, likelihood, DEFAULT_MIX))
}

/// Exact expectation of the negative-sampling objective over `k` draws from
/// `noise`; useful as a noise-free training curve.
pub fn expected_neg_objective(
    model: &EmbeddingModel,
    instance: &TrainingInstance,
    noise: &NoiseDistribution,
    k: usize,
) -> Result<f64> {
    let ctx = check_instance(model, instance)?;
    let positive = log_sigmoid(model.score(&ctx, instance.target));
    let expected_negative: f64 = noise
        .probs()
        .iter()
        .enumerate()
        .filter(|(_, &q)| q > 0.0)
        .map(|(j, &q)| q * log_sigmoid(-dot(model.output_row(j), &ctx.values)))
        .sum();
    Ok(positive + k as f64 * expected_negative)
}
