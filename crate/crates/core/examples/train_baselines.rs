//! Negative sampling versus NCE on a synthetic topic corpus.

use basket2vec::corpus::split_train_test;
use basket2vec::eval::render_table;
use basket2vec::synthetic::TopicCorpus;
use basket2vec::trainer::{train, Objective, TrainConfig};

fn main() -> basket2vec::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let ds = TopicCorpus::default().generate()?;
    let (tr, te) = split_train_test(&ds, 0.2, 7)?;

    let mut reports = Vec::new();
    for objective in [Objective::Neg, Objective::Nce] {
        let config = TrainConfig {
            objective,
            ..TrainConfig::default()
        };
        let outcome = train(&tr, &te, &config)?;
        for r in &outcome.state.history {
            println!(
                "{:<4} epoch {:>2}  objective {:>8.4}  val MPR {:.2}",
                objective.as_str(),
                r.round,
                r.objective_mean,
                r.val_mpr_generator.unwrap_or(f64::NAN)
            );
        }
        reports.push((format!("W2V-{}", objective.as_str().to_uppercase()), outcome.generator_report));
    }
    let rows: Vec<(&str, _)> = reports.iter().map(|(n, r)| (n.as_str(), r)).collect();
    println!("\n{}", render_table(&rows, 500, 0));
    Ok(())
}
