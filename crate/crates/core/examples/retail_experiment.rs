//! Full comparison on a basket file: W2V-NCE, W2V-NEG and both adversarial
//! objectives, over several seeds, scored on one shared test split.
//!
//! ```text
//! cargo run --release --example retail_experiment -- data/retail.dat 3
//! ```

use std::io::BufReader;

use basket2vec::corpus::{parse_basket_file, split_train_test, FileFormat, ParseOptions};
use basket2vec::eval::{compare_reports, render_table, EvalReport};
use basket2vec::trainer::{derive_seed, train, Objective, TrainConfig};

fn main() -> basket2vec::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let mut args = std::env::args().skip(1);
    let path = args.next().unwrap_or_else(|| "data/retail.dat".into());
    let n_seeds: u64 = args.next().map_or(Ok(1), |s| s.parse()).map_err(|_| {
        basket2vec::Error::InvalidInput("seed count must be an integer".into())
    })?;

    let file = std::fs::File::open(&path).map_err(|e| basket2vec::Error::Data(format!("{path}: {e}")))?;
    let parsed = parse_basket_file(BufReader::new(file), ParseOptions::new(FileFormat::Whitespace))?;
    let ds = parsed.dataset;
    println!("{}: {} baskets, {} items", path, ds.len(), ds.catalog().len());
    let (tr, te) = split_train_test(&ds, 0.2, 7)?;

    let objectives = [Objective::Nce, Objective::Neg, Objective::GanBasic, Objective::GanMixed];
    let mut rows: Vec<(String, EvalReport)> = Vec::new();
    for i in 0..n_seeds {
        let seed = derive_seed(2024, i);
        let mut neg = None;
        for objective in objectives {
            let config = TrainConfig {
                objective,
                seed,
                ..TrainConfig::default()
            };
            let outcome = train(&tr, &te, &config)?;
            let name = format!("{} seed {i}", objective.as_str());
            if let Some((pre, _)) = &outcome.pretrain_reports {
                println!("{name}: pretrained G MPR {:.2}, kept round {}", pre.mpr, outcome.best_round);
            }
            if let Some(d) = &outcome.discriminator_report {
                rows.push((format!("{name} (D)"), d.clone()));
            }
            if objective == Objective::Neg {
                neg = Some(outcome.generator_report.clone());
            } else if let (true, Some(base)) = (objective.is_adversarial(), &neg) {
                let c = compare_reports(base, &outcome.generator_report, 1000, seed)?;
                println!(
                    "{name} - neg: MPR {:+.2} [{:+.2}, {:+.2}]",
                    c.delta_mpr.estimate, c.delta_mpr.lo, c.delta_mpr.hi
                );
            }
            rows.push((name, outcome.generator_report));
        }
    }
    let table: Vec<(&str, &EvalReport)> = rows.iter().map(|(n, r)| (n.as_str(), r)).collect();
    println!("\n{}", render_table(&table, 1000, 0));
    Ok(())
}
