//! Wall time of one pre-training epoch and one adversarial round on a
//! synthetic corpus shaped like the Belgian retail data (16,470 items,
//! 88,162 baskets).
//!
//! ```text
//! cargo run --release --example scale_timing
//! ```

use std::time::Instant;

use basket2vec::corpus::{build_noise_distribution, make_instances, InstanceMode, NoiseDistribution};
use basket2vec::synthetic::TopicCorpus;
use basket2vec::trainer::{adversarial_round, pretrain, Objective, TrainConfig, TrainState};

fn main() -> basket2vec::Result<()> {
    let started = Instant::now();
    let ds = TopicCorpus {
        n_items: 16_470,
        n_topics: 300,
        n_baskets: 88_162,
        min_len: 2,
        max_len: 20,
        ..TopicCorpus::default()
    }
    .generate()?;
    let instances = make_instances(&ds, InstanceMode::AllPositions, 0).instances;
    println!(
        "{} baskets, {} instances, generated in {:.1}s",
        ds.len(),
        instances.len(),
        started.elapsed().as_secs_f64()
    );

    let config = TrainConfig {
        objective: Objective::GanMixed,
        epochs_pretrain: 1,
        ..TrainConfig::default()
    };
    let noise = build_noise_distribution(&ds, config.noise, config.noise_power)?;
    let uniform = NoiseDistribution::uniform(ds.catalog().len())?;
    let mut state = TrainState::new(ds.catalog().len(), &config)?;

    let t = Instant::now();
    pretrain(&mut state, &instances, &config, &noise)?;
    println!("one NEG epoch for G and D: {:.1}s", t.elapsed().as_secs_f64());

    let t = Instant::now();
    adversarial_round(&mut state, &instances, &config, &uniform)?;
    println!(
        "one adversarial round ({} g-step and {} d-step sweeps of {} instances): {:.1}s",
        config.g_steps,
        config.d_steps,
        config.step_instances,
        t.elapsed().as_secs_f64()
    );
    Ok(())
}
