//! Context embedding and the full conditional softmax P(. | context) of a
//! trained model.

use basket2vec::corpus::{make_instances, InstanceMode, NoiseDistribution};
use basket2vec::synthetic::paired_corpus;
use basket2vec::trainer::{pretrain, TrainConfig, TrainState};

fn main() -> basket2vec::Result<()> {
    // baskets [0,1], [2,3], ... : every item predicts its partner
    let ds = paired_corpus(12)?;
    let instances = make_instances(&ds, InstanceMode::AllPositions, 0).instances;
    let config = TrainConfig {
        dim: 16,
        epochs_pretrain: 150,
        ..TrainConfig::default()
    };
    let mut state = TrainState::new(12, &config)?;
    pretrain(&mut state, &instances, &config, &NoiseDistribution::uniform(12)?)?;
    let model = &state.generator;

    for context in [vec![4], vec![7], vec![4, 7]] {
        let ctx = model.context_embedding(&context)?;
        let dist = model.conditional_distribution(&context)?;
        let mut order: Vec<usize> = (0..12).collect();
        order.sort_by(|&a, &b| dist.probs[b].total_cmp(&dist.probs[a]));
        let top: Vec<String> = order
            .iter()
            .take(3)
            .map(|&i| format!("{i} ({:.3}, logit {:.2})", dist.probs[i], model.score(&ctx, i)))
            .collect();
        println!("context {context:?}: {}", top.join(", "));
    }
    Ok(())
}
