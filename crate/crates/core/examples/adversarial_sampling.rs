//! Adversarial negatives: draw candidates from a generator's softmax and
//! weight them by the discriminator's odds p / (1 - p).

use basket2vec::model::{EmbeddingModel, Role};
use basket2vec::sampling::{reward_weights, sample_from_generator};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> basket2vec::Result<()> {
    let n = 8;
    let gen = EmbeddingModel::init(n, 4, 1, 12.0, Role::Generator)?;
    let disc = EmbeddingModel::init(n, 4, 2, 12.0, Role::Discriminator)?;
    let context = [3, 5];
    let mut rng = ChaCha8Rng::seed_from_u64(9);

    let p_g = gen.conditional_distribution(&context)?;
    let p_d = disc.conditional_distribution(&context)?;
    println!("item   P_G     P_D");
    for i in 0..n {
        println!("{i:>4} {:.4} {:.4}", p_g.probs[i], p_d.probs[i]);
    }

    let draw = sample_from_generator(&gen, &context, 5, &mut rng)?;
    let w = reward_weights(&disc, &draw, &context)?;
    println!("\ndraw  reward  weight");
    for ((item, raw), norm) in draw.items.iter().zip(&w.raw).zip(&w.normalized) {
        println!("{item:>4} {raw:>7.4} {norm:>7.4}");
    }
    Ok(())
}
