//! Oracles and property checks shared by the invariant tests and the
//! acceptance runner. Every property returns `Err(description)` on failure so
//! it can be driven either by `#[test]` or by a reporting loop.
#![allow(dead_code)]

use std::collections::{BTreeMap, HashSet};

use basket2vec::corpus::{
    build_noise_distribution, make_instances, parse_basket_file, split_indices, BasketDataset,
    Catalog, FileFormat, InstanceMode, NoiseDistribution, NoiseKind, ParseOptions, TrainingInstance,
};
use basket2vec::eval::{evaluate, evaluate_with, percentile_rank, EvalOptions};
use basket2vec::losses::{
    adversarial_disc_loss, expected_neg_objective, maligan_gen_loss, maligan_gen_loss_weighted,
    mixed_gen_loss, neg_loss, nce_loss, SparseGradient,
};
use basket2vec::model::{CategoricalDistribution, EmbeddingModel, Role, Table};
use basket2vec::sampling::{
    reward_weights, sample_categorical, sample_from_generator, sample_noise, DrawSource,
    NegativeDraw, RewardWeights,
};
use basket2vec::trainer::{
    adversarial_round, derive_seed, pretrain, sgd_apply, sgd_epoch, train, train_with_observer,
    EpochPlan, Objective, StaticLoss, TrainConfig, TrainObserver, TrainState,
};
use basket2vec::{synthetic, Error};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};
use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Outcome = Result<(), String>;

/// Runs a property under a fixed-seed proptest runner.
pub fn check<S: Strategy>(
    cases: u32,
    strategy: S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Outcome {
    let config = Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    };
    let mut runner = TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha));
    runner.run(&strategy, test).map_err(|e| e.to_string())
}

fn fail<T>(e: Error) -> Result<T, TestCaseError> {
    Err(TestCaseError::fail(e.to_string()))
}

macro_rules! ok {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(e) => return fail(e),
        }
    };
}

// ---------------------------------------------------------------- oracles

/// Logits computed straight from the raw tables.
pub fn oracle_logits(model: &EmbeddingModel, context: &[usize]) -> Vec<f64> {
    let dim = model.dim();
    let input = model.input_table();
    let output = model.output_table();
    let mut ctx = vec![0.0; dim];
    for &c in context {
        for d in 0..dim {
            ctx[d] += input[c * dim + d];
        }
    }
    for v in &mut ctx {
        *v /= context.len() as f64;
    }
    (0..model.n_items())
        .map(|i| (0..dim).map(|d| output[i * dim + d] * ctx[d]).sum())
        .collect()
}

/// Plain exp/normalize, no shift.
pub fn oracle_softmax(logits: &[f64]) -> Vec<f64> {
    let exps: Vec<f64> = logits.iter().map(|s| s.exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.iter().map(|e| e / total).collect()
}

pub fn oracle_log_sum_exp(logits: &[f64]) -> f64 {
    logits.iter().map(|s| s.exp()).sum::<f64>().ln()
}

/// Pairwise PR and rank: each candidate gets `1 + #strictly better`; the
/// target's PR counts the candidates ranked no better than it.
pub fn oracle_percentile_rank(scores: &[f64], target: usize) -> (f64, usize) {
    let n = scores.len();
    let ranks: Vec<usize> = (0..n)
        .map(|i| 1 + (0..n).filter(|&j| scores[j] > scores[i]).count())
        .collect();
    let not_above = (0..n).filter(|&i| ranks[i] >= ranks[target]).count();
    (not_above as f64 / n as f64 * 100.0, ranks[target])
}

/// Upper 0.001 quantile of chi-square with 4 degrees of freedom.
pub const CHI2_DF4_P001: f64 = 18.4668;

pub fn chi_square(counts: &[u64], probs: &[f64]) -> f64 {
    let n: u64 = counts.iter().sum();
    counts
        .iter()
        .zip(probs)
        .map(|(&c, &p)| {
            let e = n as f64 * p;
            (c as f64 - e).powi(2) / e
        })
        .sum()
}

// ---------------------------------------------------------- random inputs

pub fn random_model(rng: &mut ChaCha8Rng, n: usize, dim: usize, scale: f64, role: Role) -> EmbeddingModel {
    EmbeddingModel::init(n, dim, rng.random(), scale, role).unwrap()
}

/// Context of 1..=4 items (duplicates allowed) and any target.
pub fn random_instance(rng: &mut ChaCha8Rng, n: usize) -> TrainingInstance {
    let len = rng.random_range(1..=4);
    TrainingInstance {
        context: (0..len).map(|_| rng.random_range(0..n)).collect(),
        target: rng.random_range(0..n),
    }
}

pub fn random_items(rng: &mut ChaCha8Rng, n: usize, count: usize) -> Vec<usize> {
    (0..count).map(|_| rng.random_range(0..n)).collect()
}

fn grad_entry(g: &SparseGradient, table: Table, row: usize, dim: usize) -> Vec<f64> {
    g.get(table, row).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; dim])
}

// ------------------------------------------------------ gradient checking

pub const FD_STEP: f64 = 1e-6;
pub const FD_TOLERANCE: f64 = 1e-5;

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Largest per-row relative error `|a - fd| / max(|a|, |fd|)` between the
/// analytic gradient and central differences, over every row of both tables.
pub fn max_row_error(
    model: &EmbeddingModel,
    analytic: &SparseGradient,
    objective: impl Fn(&EmbeddingModel) -> f64,
) -> f64 {
    let mut m = model.clone();
    let dim = model.dim();
    let mut worst: f64 = 0.0;
    for table in [Table::Input, Table::Output] {
        for row in 0..model.n_items() {
            let fd: Vec<f64> = (0..dim)
                .map(|c| {
                    let orig = m.row(table, row)[c];
                    m.row_mut(table, row)[c] = orig + FD_STEP;
                    let up = objective(&m);
                    m.row_mut(table, row)[c] = orig - FD_STEP;
                    let down = objective(&m);
                    m.row_mut(table, row)[c] = orig;
                    (up - down) / (2.0 * FD_STEP)
                })
                .collect();
            let a = grad_entry(analytic, table, row, dim);
            let diff: Vec<f64> = a.iter().zip(&fd).map(|(x, y)| x - y).collect();
            let scale = norm(&a).max(norm(&fd));
            if scale > 0.0 {
                worst = worst.max(norm(&diff) / scale);
            }
        }
    }
    worst
}

#[derive(Debug, Clone)]
pub struct GradientCheck {
    pub loss: &'static str,
    pub instances: usize,
    pub max_rel_err: f64,
}

/// Finite-difference check of all five losses on `instances` random
/// problems with `|Z| <= 12` and `dim <= 8`. Draws and reward weights stay
/// fixed while parameters are perturbed.
pub fn gradient_checks(instances: usize, seed: u64) -> Vec<GradientCheck> {
    let names = ["neg_loss", "nce_loss", "adversarial_disc_loss", "maligan_gen_loss", "mixed_gen_loss"];
    let mut worst = [0.0f64; 5];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..instances {
        let n = rng.random_range(3..=12);
        let dim = rng.random_range(2..=8);
        // entries in [-1, 1]
        let gen = random_model(&mut rng, n, dim, dim as f64, Role::Generator);
        let disc = random_model(&mut rng, n, dim, dim as f64, Role::Discriminator);
        let inst = random_instance(&mut rng, n);
        let k = rng.random_range(1..=5);
        let weights: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
        let noise = NoiseDistribution::from_weights(&weights).unwrap();
        let negs = sample_noise(&noise, k, &mut rng);
        let uniform = NoiseDistribution::uniform(n).unwrap();
        let uniform_negs = sample_noise(&uniform, k, &mut rng);
        let gen_draws = sample_from_generator(&gen, &inst.context, k, &mut rng).unwrap();

        let (_, g) = neg_loss(&gen, &inst, &negs).unwrap();
        worst[0] = worst[0].max(max_row_error(&gen, &g, |m| neg_loss(m, &inst, &negs).unwrap().0.total));

        let (_, g) = nce_loss(&gen, &inst, &negs, &noise).unwrap();
        worst[1] = worst[1].max(max_row_error(&gen, &g, |m| {
            nce_loss(m, &inst, &negs, &noise).unwrap().0.total
        }));

        let (_, g) = adversarial_disc_loss(&disc, &inst, &gen_draws).unwrap();
        worst[2] = worst[2].max(max_row_error(&disc, &g, |m| {
            adversarial_disc_loss(m, &inst, &gen_draws).unwrap().0.total
        }));

        // disc is not perturbed, so the rewards it hands out stay frozen
        let (_, g) = maligan_gen_loss(&gen, &disc, &inst, &gen_draws).unwrap();
        worst[3] = worst[3].max(max_row_error(&gen, &g, |m| {
            maligan_gen_loss(m, &disc, &inst, &gen_draws).unwrap().0.total
        }));

        let (_, g) = mixed_gen_loss(&gen, &disc, &inst, &gen_draws, &uniform_negs).unwrap();
        worst[4] = worst[4].max(max_row_error(&gen, &g, |m| {
            mixed_gen_loss(m, &disc, &inst, &gen_draws, &uniform_negs).unwrap().0.total
        }));
    }
    names
        .iter()
        .zip(worst)
        .map(|(&loss, max_rel_err)| GradientCheck {
            loss,
            instances,
            max_rel_err,
        })
        .collect()
}

// ------------------------------------------------------- corpus properties

pub fn catalog_round_trip() -> Outcome {
    let lines = prop::collection::vec(prop::collection::vec("[a-z0-9]{1,5}", 1..6), 1..30);
    check(64, lines, |lines| {
        let mut catalog = Catalog::new();
        for line in &lines {
            for token in line {
                let i = catalog.intern(token);
                prop_assert_eq!(catalog.item(i), Some(token.as_str()));
            }
        }
        for (i, item) in catalog.items().iter().enumerate() {
            prop_assert_eq!(catalog.index_of(item), Some(i));
        }

        let text: String = lines.iter().map(|l| l.join(" \t") + "\n").collect();
        let parsed = ok!(parse_basket_file(text.as_bytes(), ParseOptions::new(FileFormat::Whitespace)));
        let ds = parsed.dataset;
        prop_assert_eq!(ds.len(), lines.len());
        for (basket, line) in ds.baskets().iter().zip(&lines) {
            let names: Vec<&str> = basket
                .item_indices
                .iter()
                .map(|&i| ds.catalog().item(i).unwrap())
                .collect();
            prop_assert_eq!(names, line.iter().map(String::as_str).collect::<Vec<_>>());
        }
        Ok(())
    })
}

pub fn split_partition() -> Outcome {
    check(256, (2usize..500, 0.01f64..0.99, any::<u64>()), |(n, frac, seed)| {
        let (train, test) = ok!(split_indices(n, frac, seed));
        prop_assert_eq!(train.len() + test.len(), n);
        prop_assert!(!train.is_empty() && !test.is_empty());
        let a: HashSet<usize> = train.iter().copied().collect();
        prop_assert!(test.iter().all(|i| !a.contains(i)));
        let mut all: Vec<usize> = train.iter().chain(&test).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        Ok(())
    })
}

pub fn noise_mass() -> Outcome {
    let counts = prop::collection::vec(0usize..40, 2..150);
    check(128, (counts, 0.0f64..1.5), |(mut counts, power)| {
        if counts.iter().all(|&c| c == 0) {
            counts[0] = 1;
        }
        let baskets: Vec<Vec<usize>> = counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(i, &c)| vec![i; c])
            .collect();
        let ds = ok!(BasketDataset::from_indices(baskets, counts.len()));
        for kind in [NoiseKind::Uniform, NoiseKind::Unigram] {
            let noise = ok!(build_noise_distribution(&ds, kind, power));
            let total: f64 = noise.probs().iter().sum();
            prop_assert!((total - 1.0).abs() <= 1e-12, "{:?} mass {}", kind, total);
            prop_assert!(noise.probs().iter().all(|&p| p >= 0.0));
        }
        let unigram = ok!(build_noise_distribution(&ds, NoiseKind::Unigram, power));
        let z: f64 = counts.iter().filter(|&&c| c > 0).map(|&c| (c as f64).powf(power)).sum();
        for (&c, &p) in counts.iter().zip(unigram.probs()) {
            let expected = if c == 0 { 0.0 } else { (c as f64).powf(power) / z };
            prop_assert!((p - expected).abs() <= 1e-12);
        }
        Ok(())
    })
}

fn baskets_strategy(max_items: usize) -> impl Strategy<Value = (usize, Vec<Vec<usize>>)> {
    (2..max_items).prop_flat_map(|n| {
        let basket = prop::collection::vec(0..n, 1..7);
        (Just(n), prop::collection::vec(basket, 1..40))
    })
}

pub fn one_random_deterministic() -> Outcome {
    check(128, (baskets_strategy(30), any::<u64>()), |((n, baskets), seed)| {
        let ds = ok!(BasketDataset::from_indices(baskets, n));
        let a = make_instances(&ds, InstanceMode::OneRandom, seed);
        let b = make_instances(&ds, InstanceMode::OneRandom, seed);
        prop_assert_eq!(&a, &b);
        let multi = ds.baskets().iter().filter(|b| b.len() >= 2);
        for (inst, basket) in a.instances.iter().zip(multi) {
            let mut rebuilt = inst.context.clone();
            rebuilt.push(inst.target);
            rebuilt.sort_unstable();
            let mut original = basket.item_indices.clone();
            original.sort_unstable();
            prop_assert_eq!(rebuilt, original);
        }
        Ok(())
    })
}

// -------------------------------------------------------- model properties

pub fn softmax_normalization() -> Outcome {
    check(48, (2usize..=20_000, 1usize..6, 0.1f64..200.0, any::<u64>()), |(n, dim, scale, seed)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = random_model(&mut rng, n, dim, scale, Role::Generator);
        let inst = random_instance(&mut rng, n);
        let dist = ok!(model.conditional_distribution(&inst.context));
        let total: f64 = dist.probs.iter().sum();
        prop_assert!((total - 1.0).abs() <= 1e-9, "mass {}", total);
        for (&p, &lp) in dist.probs.iter().zip(&dist.log_probs) {
            prop_assert!(p >= 0.0);
            if p > 1e-300 {
                prop_assert!((p.ln() - lp).abs() <= 1e-9);
            }
        }
        Ok(())
    })
}

pub fn shift_invariance() -> Outcome {
    let logits = prop::collection::vec(-30.0f64..30.0, 2..200);
    check(256, (logits, -100.0f64..100.0), |(logits, c)| {
        let a = CategoricalDistribution::from_logits(&logits);
        let shifted: Vec<f64> = logits.iter().map(|s| s + c).collect();
        let b = CategoricalDistribution::from_logits(&shifted);
        for (x, y) in a.probs.iter().zip(&b.probs) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
        Ok(())
    })
}

pub fn permutation_invariance() -> Outcome {
    check(128, (2usize..50, 1usize..9, any::<u64>()), |(n, dim, seed)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = random_model(&mut rng, n, dim, dim as f64, Role::Generator);
        let len = rng.random_range(1..10);
        let context = random_items(&mut rng, n, len);
        let mut shuffled = context.clone();
        shuffled.shuffle(&mut rng);
        let a = ok!(model.context_embedding(&context));
        let b = ok!(model.context_embedding(&shuffled));
        prop_assert_eq!(a.source_size, b.source_size);
        for (x, y) in a.values.iter().zip(&b.values) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
        Ok(())
    })
}

pub fn softmax_consistency() -> Outcome {
    check(128, (2usize..300, 1usize..9, any::<u64>()), |(n, dim, seed)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = random_model(&mut rng, n, dim, dim as f64, Role::Generator);
        let inst = random_instance(&mut rng, n);
        let ctx = ok!(model.context_embedding(&inst.context));
        let dist = ok!(model.conditional_distribution(&inst.context));
        let logits = oracle_logits(&model, &inst.context);
        let lse = oracle_log_sum_exp(&logits);
        for i in 0..n {
            prop_assert!((model.score(&ctx, i) - (dist.log_probs[i] + lse)).abs() <= 1e-9);
        }
        Ok(())
    })
}

// ----------------------------------------------------- sampling properties

pub fn reward_monotone() -> Outcome {
    let p = 1e-8f64..(1.0 - 1e-8);
    check(512, (p.clone(), p), |(a, b)| {
        let w = RewardWeights::from_probs(&[a, b]);
        if a > b {
            prop_assert!(w.raw[0] > w.raw[1]);
        } else if b > a {
            prop_assert!(w.raw[1] > w.raw[0]);
        }
        prop_assert!(w.raw.iter().all(|&r| r >= 0.0));
        Ok(())
    })
}

pub fn reward_normalization() -> Outcome {
    let probs = prop::collection::vec(0.0f64..=1.0, 1..40);
    check(256, probs, |probs| {
        let w = RewardWeights::from_probs(&probs);
        let total: f64 = w.normalized.iter().sum();
        prop_assert!((total - 1.0).abs() <= 1e-12, "sum {}", total);
        Ok(())
    })
}

pub const FIVE_ITEM_PROBS: [f64; 5] = [0.1, 0.2, 0.3, 0.15, 0.25];

pub fn chi_square_sampling() -> Outcome {
    check(16, any::<u64>(), |seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let draws = 20_000;
        let noise = ok!(NoiseDistribution::from_weights(&FIVE_ITEM_PROBS));
        let mut counts = [0u64; 5];
        for i in sample_noise(&noise, draws, &mut rng).items {
            counts[i] += 1;
        }
        let stat = chi_square(&counts, &FIVE_ITEM_PROBS);
        prop_assert!(stat < CHI2_DF4_P001, "alias sampler chi2 {}", stat);

        let logits: Vec<f64> = FIVE_ITEM_PROBS.iter().map(|p| p.ln()).collect();
        let dist = CategoricalDistribution::from_logits(&logits);
        let mut counts = [0u64; 5];
        for i in ok!(sample_categorical(&dist, draws, &mut rng)).items {
            counts[i] += 1;
        }
        let stat = chi_square(&counts, &FIVE_ITEM_PROBS);
        prop_assert!(stat < CHI2_DF4_P001, "categorical sampler chi2 {}", stat);
        Ok(())
    })
}

pub fn generator_frequencies() -> Outcome {
    check(16, any::<u64>(), |seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let gen = random_model(&mut rng, 5, 4, 12.0, Role::Generator);
        let context = [rng.random_range(0..5)];
        let probs = ok!(gen.conditional_distribution(&context)).probs;
        let n = 30_000;
        let draw = ok!(sample_from_generator(&gen, &context, n, &mut rng));
        prop_assert_eq!(draw.source, DrawSource::Generator);
        let mut counts = [0usize; 5];
        for i in draw.items {
            counts[i] += 1;
        }
        for (c, p) in counts.iter().zip(&probs) {
            let sigma = (p * (1.0 - p) / n as f64).sqrt();
            let freq = *c as f64 / n as f64;
            prop_assert!((freq - p).abs() <= 4.0 * sigma + 1e-12, "freq {} vs p {}", freq, p);
        }
        Ok(())
    })
}

// ------------------------------------------------------- loss properties

pub fn neg_matches_disc_loss() -> Outcome {
    check(128, any::<u64>(), |seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(2..30);
        let dim = rng.random_range(1..9);
        let disc = random_model(&mut rng, n, dim, dim as f64, Role::Discriminator);
        let inst = random_instance(&mut rng, n);
        let k = rng.random_range(1..8);
        let items = random_items(&mut rng, n, k);
        let a = ok!(neg_loss(&disc, &inst, &NegativeDraw::new(items.clone(), DrawSource::Noise)));
        let b = ok!(adversarial_disc_loss(&disc, &inst, &NegativeDraw::new(items, DrawSource::Generator)));
        prop_assert_eq!(a, b);
        Ok(())
    })
}

pub fn log_sigmoid_terms_non_positive() -> Outcome {
    check(128, any::<u64>(), |seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(2..30);
        let dim = rng.random_range(1..9);
        let scale = rng.random_range(0.0..50.0);
        let model = random_model(&mut rng, n, dim, scale, Role::Generator);
        let inst = random_instance(&mut rng, n);
        let noise = ok!(NoiseDistribution::uniform(n));
        let negs = sample_noise(&noise, rng.random_range(1..8), &mut rng);
        for (value, _) in [ok!(neg_loss(&model, &inst, &negs)), ok!(nce_loss(&model, &inst, &negs, &noise))] {
            prop_assert!(value.positive <= 0.0 && value.negative <= 0.0, "{:?}", value);
        }
        let draws = ok!(sample_from_generator(&model, &inst.context, 3, &mut rng));
        let (value, _) = ok!(maligan_gen_loss_weighted(&model, &inst, &draws, &RewardWeights::uniform(3)));
        prop_assert!(value.total <= 0.0);
        Ok(())
    })
}

pub fn mixed_loss_midpoint() -> Outcome {
    check(128, any::<u64>(), |seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(2..20);
        let dim = rng.random_range(1..9);
        let gen = random_model(&mut rng, n, dim, dim as f64, Role::Generator);
        let disc = random_model(&mut rng, n, dim, dim as f64, Role::Discriminator);
        let inst = random_instance(&mut rng, n);
        let draws = ok!(sample_from_generator(&gen, &inst.context, 4, &mut rng));
        let negs = sample_noise(&ok!(NoiseDistribution::uniform(n)), 4, &mut rng);

        let (mixed, gm) = ok!(mixed_gen_loss(&gen, &disc, &inst, &draws, &negs));
        let (adv, ga) = ok!(maligan_gen_loss(&gen, &disc, &inst, &draws));
        let (mle, gn) = ok!(neg_loss(&gen, &inst, &negs));
        prop_assert_eq!(mixed.total, 0.5 * adv.total + 0.5 * mle.total);
        for table in [Table::Input, Table::Output] {
            for row in 0..n {
                let m = grad_entry(&gm, table, row, dim);
                let a = grad_entry(&ga, table, row, dim);
                let b = grad_entry(&gn, table, row, dim);
                for d in 0..dim {
                    prop_assert_eq!(m[d], 0.5 * a[d] + 0.5 * b[d]);
                }
            }
        }
        Ok(())
    })
}

pub fn maligan_weight_scaling() -> Outcome {
    check(128, (any::<u64>(), 1e-6f64..1e6), |(seed, c)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(2..20);
        let dim = rng.random_range(1..9);
        let gen = random_model(&mut rng, n, dim, dim as f64, Role::Generator);
        let disc = random_model(&mut rng, n, dim, dim as f64, Role::Discriminator);
        let inst = random_instance(&mut rng, n);
        let draws = ok!(sample_from_generator(&gen, &inst.context, 5, &mut rng));
        let weights = ok!(reward_weights(&disc, &draws, &inst.context));
        let total: f64 = weights.normalized.iter().sum();
        prop_assert!((total - 1.0).abs() <= 1e-12);
        let scaled = RewardWeights::from_raw(weights.raw.iter().map(|r| r * c).collect());
        let (a, _) = ok!(maligan_gen_loss_weighted(&gen, &inst, &draws, &weights));
        let (b, _) = ok!(maligan_gen_loss_weighted(&gen, &inst, &draws, &scaled));
        prop_assert!((a.total - b.total).abs() <= 1e-12 * a.total.abs().max(1.0));
        Ok(())
    })
}

pub fn gradient_property() -> Outcome {
    check(8, any::<u64>(), |seed| {
        for c in gradient_checks(5, seed) {
            prop_assert!(c.max_rel_err <= FD_TOLERANCE, "{} rel err {}", c.loss, c.max_rel_err);
        }
        Ok(())
    })
}

// ------------------------------------------------------- eval properties

pub fn rank_equivalence() -> Outcome {
    check(64, (2usize..200, any::<u64>()), |(n, seed)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dim = rng.random_range(1..9);
        // entries within [-2, 2] keep every exp(s - max) well above underflow,
        // so f64 softmax stays strictly monotone
        let scale = rng.random_range(0.1..2.0 * dim as f64);
        let model = random_model(&mut rng, n, dim, scale, Role::Generator);
        let instances: Vec<TrainingInstance> = (0..50).map(|_| random_instance(&mut rng, n)).collect();
        let by_logits = ok!(evaluate(&model, &instances, &[1, 5], EvalOptions::default()));
        let by_probs = ok!(evaluate_with(Role::Generator, n, &instances, &[1, 5], EvalOptions::default(), |inst| {
            model.conditional_distribution(&inst.context).map(|d| d.probs)
        }));
        prop_assert_eq!(by_logits, by_probs);
        Ok(())
    })
}

pub fn mpr_bounds_and_full_precision() -> Outcome {
    check(128, (2usize..100, any::<u64>(), any::<bool>()), |(n, seed, exclude)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = rng.random_range(0.0..20.0);
        let model = random_model(&mut rng, n, 3, scale, Role::Generator);
        let instances: Vec<TrainingInstance> = (0..30).map(|_| random_instance(&mut rng, n)).collect();
        let opts = EvalOptions { exclude_context: exclude };
        let report = ok!(evaluate(&model, &instances, &[n], opts));
        prop_assert!(report.mpr <= 100.0);
        prop_assert!(report.mpr >= 100.0 / n as f64 - 1e-12);
        prop_assert_eq!(report.precision(n), Some(1.0));
        Ok(())
    })
}

pub fn percentile_rank_oracle() -> Outcome {
    let scores = prop::collection::vec(0u8..4, 1..=8);
    check(1024, (scores, any::<prop::sample::Index>()), |(scores, t)| {
        let scores: Vec<f64> = scores.into_iter().map(f64::from).collect();
        let target = t.index(scores.len());
        prop_assert_eq!(percentile_rank(&scores, target), oracle_percentile_rank(&scores, target));
        Ok(())
    })
}

// ------------------------------------------------------ trainer properties

pub fn small_topic_corpus(seed: u64) -> (BasketDataset, BasketDataset) {
    let ds = synthetic::TopicCorpus {
        n_items: 60,
        n_topics: 6,
        n_baskets: 300,
        seed,
        ..Default::default()
    }
    .generate()
    .unwrap();
    basket2vec::corpus::split_train_test(&ds, 0.2, seed).unwrap()
}

pub fn tiny_adversarial_config(objective: Objective, seed: u64) -> TrainConfig {
    TrainConfig {
        objective,
        dim: 8,
        epochs_pretrain: 2,
        adversarial_rounds: 3,
        step_instances: 200,
        seed,
        ..TrainConfig::default()
    }
}

pub fn bitwise_replay() -> Outcome {
    check(3, any::<u64>(), |seed| {
        let (tr, te) = small_topic_corpus(seed);
        for objective in [Objective::Neg, Objective::Nce, Objective::GanBasic, Objective::GanMixed] {
            let config = tiny_adversarial_config(objective, seed);
            let a = ok!(train(&tr, &te, &config));
            let b = ok!(train(&tr, &te, &config));
            prop_assert_eq!(&a.state.generator, &b.state.generator);
            prop_assert_eq!(&a.state.discriminator, &b.state.discriminator);
            prop_assert_eq!(&a.generator_report, &b.generator_report);
            prop_assert_eq!(a.best_round, b.best_round);
            let strip = |h: &[basket2vec::trainer::RoundRecord]| {
                h.iter()
                    .map(|r| basket2vec::trainer::RoundRecord { wall_secs: 0.0, ..r.clone() })
                    .collect::<Vec<_>>()
            };
            prop_assert_eq!(strip(&a.state.history), strip(&b.state.history));
        }
        Ok(())
    })
}

fn pretrained_state(seed: u64, objective: Objective) -> (TrainState, Vec<TrainingInstance>, TrainConfig, NoiseDistribution) {
    let (tr, _) = small_topic_corpus(seed);
    let config = tiny_adversarial_config(objective, seed);
    let instances = make_instances(&tr, InstanceMode::AllPositions, 0).instances;
    let noise = build_noise_distribution(&tr, NoiseKind::Unigram, 0.75).unwrap();
    let mut state = TrainState::new(tr.catalog().len(), &config).unwrap();
    pretrain(&mut state, &instances, &config, &noise).unwrap();
    (state, instances, config, noise)
}

pub fn step_isolation() -> Outcome {
    check(4, (any::<u64>(), any::<bool>()), |(seed, mixed)| {
        let objective = if mixed { Objective::GanMixed } else { Objective::GanBasic };
        let (mut state, instances, config, _) = pretrained_state(seed, objective);
        let uniform = ok!(NoiseDistribution::uniform(state.generator.n_items()));

        let g_only = TrainConfig { g_steps: 1, d_steps: 0, ..config.clone() };
        let d_print = state.discriminator.as_ref().unwrap().fingerprint();
        let g_print = state.generator.fingerprint();
        ok!(adversarial_round(&mut state, &instances, &g_only, &uniform));
        prop_assert_eq!(state.discriminator.as_ref().unwrap().fingerprint(), d_print);
        prop_assert_ne!(state.generator.fingerprint(), g_print);

        let d_only = TrainConfig { g_steps: 0, d_steps: 1, ..config };
        let g_print = state.generator.fingerprint();
        ok!(adversarial_round(&mut state, &instances, &d_only, &uniform));
        prop_assert_eq!(state.generator.fingerprint(), g_print);
        prop_assert_ne!(state.discriminator.as_ref().unwrap().fingerprint(), d_print);
        Ok(())
    })
}

/// With the generator's learning rate at zero a round must equal plain
/// negative-sampling training of D against the fixed generator softmax,
/// replayed here step by step from the same rng stream.
pub fn frozen_generator_equivalence() -> Outcome {
    check(4, any::<u64>(), |seed| {
        let (state, instances, config, _) = pretrained_state(seed, Objective::GanBasic);
        let config = TrainConfig {
            adv_lr_gen: 0.0,
            batch_size: 1,
            ..config
        };
        let uniform = ok!(NoiseDistribution::uniform(state.generator.n_items()));
        let mut actual = state.clone();
        ok!(adversarial_round(&mut actual, &instances, &config, &uniform));
        prop_assert_eq!(&actual.generator, &state.generator);

        let gen = &state.generator;
        let mut disc = state.discriminator.clone().unwrap();
        let mut rng = state.rng.clone();
        let take = config.step_instances.min(instances.len());
        for _ in 0..config.g_steps {
            for i in index::sample(&mut rng, instances.len(), take).into_vec() {
                let dist = ok!(gen.conditional_distribution(&instances[i].context));
                ok!(sample_categorical(&dist, config.m, &mut rng));
            }
        }
        for _ in 0..config.d_steps {
            for i in index::sample(&mut rng, instances.len(), take).into_vec() {
                let dist = ok!(gen.conditional_distribution(&instances[i].context));
                let negatives = ok!(sample_categorical(&dist, config.k, &mut rng));
                let plain = NegativeDraw::new(negatives.items, DrawSource::Noise);
                let (_, grad) = ok!(neg_loss(&disc, &instances[i], &plain));
                ok!(sgd_apply(&mut disc, &grad, config.adv_lr_disc));
            }
        }
        prop_assert_eq!(actual.discriminator.as_ref(), Some(&disc));
        prop_assert_eq!(&actual.rng, &rng);
        Ok(())
    })
}

#[derive(Default)]
struct DivergenceProbe {
    dumped_finite: Option<bool>,
}

impl TrainObserver for DivergenceProbe {
    fn on_divergence(&mut self, state: &TrainState, _error: &Error) {
        let finite = state.generator.is_finite()
            && state.discriminator.as_ref().is_none_or(EmbeddingModel::is_finite);
        self.dumped_finite = Some(finite);
    }
}

pub fn no_nan_guarantee() -> Outcome {
    check(4, (any::<u64>(), any::<bool>()), |(seed, adversarial)| {
        let (tr, te) = small_topic_corpus(seed);
        let objective = if adversarial { Objective::GanMixed } else { Objective::Neg };
        let config = TrainConfig {
            learning_rate: 1e300,
            adv_lr_gen: 1e300,
            adv_lr_disc: 1e300,
            init_scale: 8.0,
            ..tiny_adversarial_config(objective, seed)
        };
        let mut probe = DivergenceProbe::default();
        let result = train_with_observer(&tr, &te, &config, &mut probe);
        prop_assert!(matches!(result, Err(Error::Divergence(_))), "{:?}", result.err());
        prop_assert_eq!(probe.dumped_finite, Some(true));
        Ok(())
    })
}

/// Trains NEG on the 20-item paired corpus and returns precision@1 on the
/// training instances after each epoch.
pub fn memorization_curve(epochs: usize, seed: u64) -> Vec<f64> {
    let ds = synthetic::paired_corpus(20).unwrap();
    let instances = make_instances(&ds, InstanceMode::AllPositions, 0).instances;
    let noise = NoiseDistribution::uniform(20).unwrap();
    let config = TrainConfig {
        epochs_pretrain: epochs,
        seed,
        ..TrainConfig::default()
    };
    let mut state = TrainState::new(20, &config).unwrap();
    let mut curve = Vec::new();
    for epoch in 0..epochs {
        let frac = |e: usize| 1.0 - (1.0 - config.lr_floor) * e as f64 / epochs as f64;
        let plan = EpochPlan {
            loss: StaticLoss::Neg,
            k: config.k,
            batch_size: 1,
            lr_start: config.learning_rate * frac(epoch),
            lr_end: config.learning_rate * frac(epoch + 1),
        };
        sgd_epoch(&mut state.generator, &instances, &plan, &noise, &mut state.rng).unwrap();
        let report = evaluate(&state.generator, &instances, &[1], EvalOptions::default()).unwrap();
        curve.push(report.precision(1).unwrap());
    }
    curve
}

pub fn pretrain_sanity() -> Outcome {
    check(3, any::<u64>(), |seed| {
        let curve = memorization_curve(200, seed);
        let best = curve.iter().copied().fold(0.0, f64::max);
        prop_assert!(best >= 0.95, "precision@1 peaked at {}", best);
        Ok(())
    })
}

/// Exact expected NEG objective of a single instance after each of `epochs`
/// one-step epochs.
pub fn single_instance_curve(epochs: usize, seed: u64) -> Vec<f64> {
    let inst = TrainingInstance {
        context: vec![0],
        target: 1,
    };
    let noise = NoiseDistribution::uniform(8).unwrap();
    let config = TrainConfig { seed, ..TrainConfig::default() };
    let mut state = TrainState::new(8, &config).unwrap();
    let mut curve = vec![expected_neg_objective(&state.generator, &inst, &noise, config.k).unwrap()];
    for epoch in 0..epochs {
        let lr = config.learning_rate * (1.0 - (1.0 - config.lr_floor) * epoch as f64 / epochs as f64);
        let plan = EpochPlan {
            loss: StaticLoss::Neg,
            k: config.k,
            batch_size: 1,
            lr_start: lr,
            lr_end: lr,
        };
        sgd_epoch(&mut state.generator, std::slice::from_ref(&inst), &plan, &noise, &mut state.rng).unwrap();
        curve.push(expected_neg_objective(&state.generator, &inst, &noise, config.k).unwrap());
    }
    curve
}

pub fn pretrain_monotone() -> Outcome {
    check(8, any::<u64>(), |seed| {
        let curve = single_instance_curve(100, seed);
        let rising = curve.windows(2).filter(|w| w[1] >= w[0]).count();
        prop_assert!(rising >= 95, "only {} of 100 epochs non-decreasing", rising);
        Ok(())
    })
}

pub fn paired_argmax() -> Outcome {
    check(4, any::<u64>(), |seed| {
        // a=0 -> b=1 and c=2 -> d=3
        let ds = ok!(BasketDataset::from_indices(vec![vec![0, 1], vec![2, 3]], 4));
        let instances = make_instances(&ds, InstanceMode::AllPositions, 0).instances;
        let config = TrainConfig {
            epochs_pretrain: 200,
            objective: Objective::GanMixed,
            seed,
            ..TrainConfig::default()
        };
        let noise = ok!(NoiseDistribution::uniform(4));
        let mut state = ok!(TrainState::new(4, &config));
        ok!(pretrain(&mut state, &instances, &config, &noise));
        for model in [&state.generator, state.discriminator.as_ref().unwrap()] {
            for (ctx, want) in [(0, 1), (1, 0), (2, 3), (3, 2)] {
                let dist = ok!(model.conditional_distribution(&[ctx]));
                let argmax = (0..4).max_by(|&a, &b| dist.probs[a].total_cmp(&dist.probs[b])).unwrap();
                prop_assert_eq!(argmax, want, "{} context {}", model.role(), ctx);
            }
        }
        Ok(())
    })
}

pub fn zero_epoch_pretrain_untouched() -> Outcome {
    check(8, any::<u64>(), |seed| {
        let (tr, _) = small_topic_corpus(seed);
        let config = TrainConfig {
            epochs_pretrain: 0,
            ..tiny_adversarial_config(Objective::GanMixed, seed)
        };
        let instances = make_instances(&tr, InstanceMode::AllPositions, 0).instances;
        let noise = ok!(NoiseDistribution::uniform(tr.catalog().len()));
        let before = ok!(TrainState::new(tr.catalog().len(), &config));
        let mut after = before.clone();
        ok!(pretrain(&mut after, &instances, &config, &noise));
        prop_assert_eq!(&after.generator, &before.generator);
        prop_assert_eq!(&after.discriminator, &before.discriminator);
        prop_assert_eq!(&after.rng, &before.rng);
        Ok(())
    })
}

// ---------------------------------------------------------- cli properties

pub fn frozen_config_replay() -> Outcome {
    use basket2vec::cli::{cmd_train, RunConfig, RunManifest};
    check(2, any::<u64>(), |seed| {
        let dir = tempfile::tempdir().map_err(|e| TestCaseError::fail(e.to_string()))?;
        let (tr, te) = small_topic_corpus(seed);
        let text: String = tr
            .baskets()
            .iter()
            .chain(te.baskets())
            .map(|b| {
                let names: Vec<&str> = b.item_indices.iter().map(|&i| tr.catalog().item(i).unwrap()).collect();
                names.join(" ") + "\n"
            })
            .collect();
        let data = dir.path().join("baskets.dat");
        std::fs::write(&data, text).unwrap();

        let first = dir.path().join("first");
        let overrides = vec![
            format!("dataset = {:?}", data.to_str().unwrap()),
            format!("output_dir = {:?}", first.to_str().unwrap()),
            "objective = \"gan_mixed\"".into(),
            "dim = 8".into(),
            "epochs_pretrain = 2".into(),
            "adversarial_rounds = 2".into(),
            "step_instances = 100".into(),
            format!("seed = {seed}"),
        ];
        let config = ok!(RunConfig::load(None, &overrides));
        ok!(cmd_train(&config));

        let frozen = dir.path().join("frozen.toml");
        std::fs::copy(first.join("config.toml"), &frozen).unwrap();
        let second = dir.path().join("second");
        let replay = ok!(RunConfig::load(
            Some(&frozen),
            &[format!("output_dir = {:?}", second.to_str().unwrap())]
        ));
        ok!(cmd_train(&replay));

        for file in ["final/generator.snap", "final/discriminator.snap", "report-generator.json"] {
            let a = std::fs::read(first.join(file)).unwrap();
            let b = std::fs::read(second.join(file)).unwrap();
            prop_assert!(a == b, "{} differs between runs", file);
        }
        let manifest: RunManifest =
            serde_json::from_slice(&std::fs::read(first.join("manifest.json")).unwrap()).unwrap();
        prop_assert_eq!(manifest.seed, seed);
        prop_assert_eq!(manifest.input_sha256.len(), 64);
        prop_assert_eq!(manifest.config.train.disc_dim, Some(8));
        Ok(())
    })
}

/// Every invariant of the suite, by name.
pub type Property = (&'static str, fn() -> Outcome);

pub fn invariant_suite() -> Vec<Property> {
    vec![
        ("catalog round-trip", catalog_round_trip),
        ("split is a partition", split_partition),
        ("noise distribution mass", noise_mass),
        ("one_random instances deterministic", one_random_deterministic),
        ("softmax normalization", softmax_normalization),
        ("softmax shift invariance", shift_invariance),
        ("context permutation invariance", permutation_invariance),
        ("softmax consistency", softmax_consistency),
        ("reward weight monotonicity", reward_monotone),
        ("reward weight normalization", reward_normalization),
        ("chi-square sampling fit", chi_square_sampling),
        ("generator sampling frequencies", generator_frequencies),
        ("neg and discriminator loss agree", neg_matches_disc_loss),
        ("log-sigmoid terms non-positive", log_sigmoid_terms_non_positive),
        ("mixed loss midpoint", mixed_loss_midpoint),
        ("reward weight scale invariance", maligan_weight_scaling),
        ("finite-difference gradients", gradient_property),
        ("rank equivalence logits/probs", rank_equivalence),
        ("MPR bounds and precision@|Z|", mpr_bounds_and_full_precision),
        ("percentile rank tie semantics", percentile_rank_oracle),
        ("bitwise replay", bitwise_replay),
        ("g/d step isolation", step_isolation),
        ("frozen generator equivalence", frozen_generator_equivalence),
        ("no-NaN guarantee", no_nan_guarantee),
        ("pretrain sanity", pretrain_sanity),
        ("pretrain objective monotone", pretrain_monotone),
        ("paired pretrain argmax", paired_argmax),
        ("zero-epoch pretrain untouched", zero_epoch_pretrain_untouched),
        ("frozen-config replay", frozen_config_replay),
    ]
}

/// Seeds used for paired multi-seed comparisons.
pub fn seeds(n: u64) -> Vec<u64> {
    (0..n).map(|i| derive_seed(2024, i)).collect()
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

pub fn counts_by<T: Ord + Copy>(items: &[T]) -> BTreeMap<T, usize> {
    let mut out = BTreeMap::new();
    for &i in items {
        *out.entry(i).or_insert(0) += 1;
    }
    out
}
