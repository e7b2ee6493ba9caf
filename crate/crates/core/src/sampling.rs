//! Negative draws from static noise or from the generator, and the
//! discriminator reward weights used by the generator objective.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;

use crate::corpus::NoiseDistribution;
use crate::error::{Error, Result};
use crate::model::{CategoricalDistribution, EmbeddingModel};

/// Probabilities are clamped to `[EPS, 1 - EPS]` before forming `p / (1 - p)`.
pub const REWARD_CLAMP: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DrawSource {
    Noise,
    Generator,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NegativeDraw {
    pub items: Vec<usize>,
    pub source: DrawSource,
}

impl NegativeDraw {
    pub fn new(items: Vec<usize>, source: DrawSource) -> Self {
        NegativeDraw { items, source }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

/// `k` i.i.d. draws with replacement.
pub fn sample_noise<R: Rng + ?Sized>(dist: &NoiseDistribution, k: usize, rng: &mut R) -> NegativeDraw {
    let items = (0..k).map(|_| dist.sample(rng)).collect();
    NegativeDraw::new(items, DrawSource::Noise)
}

/// `m` i.i.d. draws from an already computed softmax.
pub fn sample_categorical<R: Rng + ?Sized>(
    dist: &CategoricalDistribution,
    m: usize,
    rng: &mut R,
) -> Result<NegativeDraw> {
    if m == 0 {
        return Err(Error::config("m", "must be >= 1"));
    }
    let index = WeightedIndex::new(&dist.probs)
        .map_err(|e| Error::Divergence(format!("cannot sample generator softmax: {e}")))?;
    let items = (0..m).map(|_| index.sample(rng)).collect();
    Ok(NegativeDraw::new(items, DrawSource::Generator))
}

/// Draws `m` items from `P_G(. | context)`. The true target may be drawn.
pub fn sample_from_generator<R: Rng + ?Sized>(
    gen: &EmbeddingModel,
    context: &[usize],
    m: usize,
    rng: &mut R,
) -> Result<NegativeDraw> {
    let dist = gen.conditional_distribution(context)?;
    sample_categorical(&dist, m, rng)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RewardWeights {
    pub raw: Vec<f64>,
    pub normalized: Vec<f64>,
}

impl RewardWeights {
    /// `raw_i = p_i / (1 - p_i)` with clamped `p_i`, normalized to sum to one.
    pub fn from_probs(probs: &[f64]) -> Self {
        let raw: Vec<f64> = probs
            .iter()
            .map(|&p| {
                let p = p.clamp(REWARD_CLAMP, 1.0 - REWARD_CLAMP);
                p / (1.0 - p)
            })
            .collect();
        RewardWeights::from_raw(raw)
    }

    pub fn from_raw(raw: Vec<f64>) -> Self {
        let total: f64 = raw.iter().sum();
        let normalized = if total > 0.0 {
            raw.iter().map(|r| r / total).collect()
        } else {
            vec![0.0; raw.len()]
        };
        RewardWeights { raw, normalized }
    }

    /// Equal weights `1/m`, as produced by an indifferent discriminator.
    pub fn uniform(m: usize) -> Self {
        RewardWeights::from_raw(vec![1.0; m])
    }

    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }
}

/// Discriminator reward for each generator draw.
pub fn reward_weights(
    disc: &EmbeddingModel,
    draw: &NegativeDraw,
    context: &[usize],
) -> Result<RewardWeights> {
    if draw.is_empty() {
        return Err(Error::InvalidInput("reward weights need a non-empty draw".into()));
    }
    let dist = disc.conditional_distribution(context)?;
    Ok(reward_weights_from(&dist, draw))
}

pub fn reward_weights_from(disc_dist: &CategoricalDistribution, draw: &NegativeDraw) -> RewardWeights {
    let probs: Vec<f64> = draw.items.iter().map(|&i| disc_dist.probs[i]).collect();
    RewardWeights::from_probs(&probs)
}
