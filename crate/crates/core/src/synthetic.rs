//! Seeded synthetic basket corpora for examples and tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::BasketDataset;
use crate::error::{Error, Result};

/// Baskets `[2j, 2j+1]`: every item has exactly one partner, so the context
/// determines the target.
pub fn paired_corpus(n_items: usize) -> Result<BasketDataset> {
    if n_items < 2 || !n_items.is_multiple_of(2) {
        return Err(Error::InvalidInput("paired corpus needs an even item count >= 2".into()));
    }
    let baskets = (0..n_items / 2).map(|j| vec![2 * j, 2 * j + 1]).collect();
    BasketDataset::from_indices(baskets, n_items)
}

/// Parameters of a topic-mixture basket generator.
///
/// Items are split into `n_topics` contiguous blocks. A basket picks one topic
/// (Zipf-distributed popularity) and draws each item from that topic with
/// probability `1 - noise`, otherwise from the whole catalog. Inside a block,
/// item popularity is Zipf-distributed too, which gives the skewed unigram
/// counts of real retail data.
#[derive(Debug, Clone, Copy)]
pub struct TopicCorpus {
    pub n_items: usize,
    pub n_topics: usize,
    pub n_baskets: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub noise: f64,
    pub zipf_exponent: f64,
    pub seed: u64,
}

impl Default for TopicCorpus {
    fn default() -> Self {
        TopicCorpus {
            n_items: 400,
            n_topics: 20,
            n_baskets: 4_000,
            min_len: 2,
            max_len: 8,
            noise: 0.1,
            zipf_exponent: 1.0,
            seed: 0,
        }
    }
}

fn zipf_cdf(n: usize, exponent: f64) -> Vec<f64> {
    let weights: Vec<f64> = (1..=n).map(|r| (r as f64).powf(-exponent)).collect();
    let total: f64 = weights.iter().sum();
    let mut acc = 0.0;
    weights
        .iter()
        .map(|w| {
            acc += w / total;
            acc
        })
        .collect()
}

fn draw(cdf: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.random();
    cdf.partition_point(|&c| c < u).min(cdf.len() - 1)
}

impl TopicCorpus {
    pub fn generate(&self) -> Result<BasketDataset> {
        if self.n_topics == 0 || self.n_items < self.n_topics.max(2) {
            return Err(Error::InvalidInput("need at least one item per topic".into()));
        }
        if self.min_len == 0 || self.min_len > self.max_len {
            return Err(Error::InvalidInput("basket lengths must satisfy 1 <= min <= max".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let block = self.n_items / self.n_topics;
        let topic_cdf = zipf_cdf(self.n_topics, self.zipf_exponent);
        let item_cdf = zipf_cdf(block, self.zipf_exponent);
        let global_cdf = zipf_cdf(self.n_items, self.zipf_exponent);

        let baskets = (0..self.n_baskets)
            .map(|_| {
                let topic = draw(&topic_cdf, &mut rng);
                let len = rng.random_range(self.min_len..=self.max_len);
                let mut basket: Vec<usize> = Vec::with_capacity(len);
                while basket.len() < len {
                    let item = if rng.random::<f64>() < self.noise {
                        draw(&global_cdf, &mut rng)
                    } else {
                        topic * block + draw(&item_cdf, &mut rng)
                    };
                    if !basket.contains(&item) {
                        basket.push(item);
                    }
                }
                basket
            })
            .collect();
        BasketDataset::from_indices(baskets, self.n_items)
    }
}
