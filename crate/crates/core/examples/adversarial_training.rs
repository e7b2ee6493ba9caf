//! Pre-training followed by adversarial rounds, logging both networks'
//! validation MPR after every round.

use basket2vec::corpus::split_train_test;
use basket2vec::synthetic::TopicCorpus;
use basket2vec::trainer::{train_with_observer, Objective, RoundRecord, TrainConfig, TrainObserver, TrainState};

struct Printer;

impl TrainObserver for Printer {
    fn on_eval(&mut self, _state: &TrainState, r: &RoundRecord) -> basket2vec::Result<()> {
        println!(
            "{:?} {:>2}  G objective {:>8.4}  D objective {:>8.4}  val MPR G {:.2} D {:.2}",
            r.phase,
            r.round,
            r.objective_mean,
            r.disc_objective_mean.unwrap_or(f64::NAN),
            r.val_mpr_generator.unwrap_or(f64::NAN),
            r.val_mpr_discriminator.unwrap_or(f64::NAN)
        );
        Ok(())
    }
}

fn main() -> basket2vec::Result<()> {
    let ds = TopicCorpus::default().generate()?;
    let (tr, te) = split_train_test(&ds, 0.2, 7)?;
    let objective = match std::env::args().nth(1) {
        Some(s) => s.parse()?,
        None => Objective::GanMixed,
    };
    let config = TrainConfig {
        objective,
        adversarial_rounds: 15,
        step_instances: 5_000,
        ..TrainConfig::default()
    };
    let outcome = train_with_observer(&tr, &te, &config, &mut Printer)?;
    let (pre_g, pre_d) = outcome.pretrain_reports.as_ref().expect("adversarial objective");
    let d = outcome.discriminator_report.as_ref().expect("adversarial objective");
    println!("\nkept round {}", outcome.best_round);
    println!("test MPR  generator {:.2} (pretrained {:.2})", outcome.generator_report.mpr, pre_g.mpr);
    println!("          discriminator {:.2} (pretrained {:.2})", d.mpr, pre_d.mpr);
    Ok(())
}
