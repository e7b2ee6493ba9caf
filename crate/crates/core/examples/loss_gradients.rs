//! The five objectives on one instance, with a finite-difference check of
//! each analytic gradient.

use basket2vec::corpus::{NoiseDistribution, TrainingInstance};
use basket2vec::losses::{
    adversarial_disc_loss, maligan_gen_loss, mixed_gen_loss, neg_loss, nce_loss, LossValue, SparseGradient,
};
use basket2vec::model::{EmbeddingModel, Role, Table};
use basket2vec::sampling::{sample_from_generator, sample_noise};
use basket2vec::Result;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn fd_error(model: &EmbeddingModel, grad: &SparseGradient, f: &dyn Fn(&EmbeddingModel) -> Result<(LossValue, SparseGradient)>) -> f64 {
    let h = 1e-6;
    let mut m = model.clone();
    let mut worst: f64 = 0.0;
    for table in [Table::Input, Table::Output] {
        for row in 0..m.n_items() {
            for c in 0..m.dim() {
                let orig = m.row(table, row)[c];
                m.row_mut(table, row)[c] = orig + h;
                let up = f(&m).unwrap().0.total;
                m.row_mut(table, row)[c] = orig - h;
                let down = f(&m).unwrap().0.total;
                m.row_mut(table, row)[c] = orig;
                let fd = (up - down) / (2.0 * h);
                let a = grad.get(table, row).map_or(0.0, |g| g[c]);
                worst = worst.max((a - fd).abs());
            }
        }
    }
    worst
}

fn main() -> Result<()> {
    let n = 10;
    let gen = EmbeddingModel::init(n, 6, 1, 6.0, Role::Generator)?;
    let disc = EmbeddingModel::init(n, 6, 2, 6.0, Role::Discriminator)?;
    let inst = TrainingInstance {
        context: vec![1, 4, 7],
        target: 2,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let noise = NoiseDistribution::uniform(n)?;
    let negs = sample_noise(&noise, 5, &mut rng);
    let draws = sample_from_generator(&gen, &inst.context, 5, &mut rng)?;

    type Loss<'a> = Box<dyn Fn(&EmbeddingModel) -> Result<(LossValue, SparseGradient)> + 'a>;
    let losses: Vec<(&str, &EmbeddingModel, Loss)> = vec![
        ("neg", &gen, Box::new(|m| neg_loss(m, &inst, &negs))),
        ("nce", &gen, Box::new(|m| nce_loss(m, &inst, &negs, &noise))),
        ("adversarial_disc", &disc, Box::new(|m| adversarial_disc_loss(m, &inst, &draws))),
        ("maligan_gen", &gen, Box::new(|m| maligan_gen_loss(m, &disc, &inst, &draws))),
        ("mixed_gen", &gen, Box::new(|m| mixed_gen_loss(m, &disc, &inst, &draws, &negs))),
    ];
    println!("{:<18} {:>10} {:>6} {:>12}", "objective", "value", "rows", "max |a - fd|");
    for (name, model, loss) in &losses {
        let (value, grad) = loss(model)?;
        println!(
            "{name:<18} {:>10.5} {:>6} {:>12.2e}",
            value.total,
            grad.len(),
            fd_error(model, &grad, loss.as_ref())
        );
    }
    Ok(())
}
