//! Static negative sampling: unigram^0.75 noise built from item counts and
//! sampled through an alias table.

use basket2vec::corpus::{build_noise_distribution, NoiseKind};
use basket2vec::sampling::sample_noise;
use basket2vec::synthetic::TopicCorpus;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> basket2vec::Result<()> {
    let ds = TopicCorpus::default().generate()?;
    let counts = ds.item_counts();
    let noise = build_noise_distribution(&ds, NoiseKind::Unigram, 0.75)?;

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let n = 200_000;
    let mut hits = vec![0usize; noise.len()];
    for i in sample_noise(&noise, n, &mut rng).items {
        hits[i] += 1;
    }

    let mut by_count: Vec<usize> = (0..counts.len()).collect();
    by_count.sort_by_key(|&i| std::cmp::Reverse(counts[i]));
    println!("{:>6} {:>7} {:>9} {:>9}", "item", "count", "q(item)", "sampled");
    for &i in by_count.iter().take(8) {
        println!(
            "{:>6} {:>7} {:>9.5} {:>9.5}",
            i,
            counts[i],
            noise.prob(i),
            hits[i] as f64 / n as f64
        );
    }
    let uniform = build_noise_distribution(&ds, NoiseKind::Uniform, 0.75)?;
    println!("uniform noise puts {:.5} on every item", uniform.prob(0));
    Ok(())
}
