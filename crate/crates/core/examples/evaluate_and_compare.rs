//! Percentile-rank evaluation, a Table-style summary with bootstrap
//! standard errors, and paired bootstrap intervals for the difference.

use basket2vec::corpus::split_train_test;
use basket2vec::eval::{compare_reports, evaluate, render_table, EvalOptions};
use basket2vec::model::{EmbeddingModel, Role};
use basket2vec::synthetic::TopicCorpus;
use basket2vec::trainer::{train, TrainConfig};

fn main() -> basket2vec::Result<()> {
    let ds = TopicCorpus::default().generate()?;
    let (tr, te) = split_train_test(&ds, 0.2, 7)?;
    let outcome = train(&tr, &te, &TrainConfig::default())?;
    let trained = outcome.generator_report;

    let random = EmbeddingModel::init(ds.catalog().len(), 64, 99, 1.0, Role::Generator)?;
    let untrained = evaluate(&random, &outcome.test_instances, &[1, 5, 10], EvalOptions::default())?;

    let excluded = evaluate(
        &outcome.state.generator,
        &outcome.test_instances,
        &[1, 5, 10],
        EvalOptions { exclude_context: true },
    )?;

    println!(
        "{}",
        render_table(
            &[("random", &untrained), ("W2V-NEG", &trained), ("W2V-NEG, context excluded", &excluded)],
            1000,
            0
        )
    );
    let c = compare_reports(&untrained, &trained, 1000, 0)?;
    println!(
        "\nW2V-NEG - random: MPR {:+.2} [{:+.2}, {:+.2}] (95% paired bootstrap)",
        c.delta_mpr.estimate, c.delta_mpr.lo, c.delta_mpr.hi
    );
    print!("\n{}", trained.to_text());
    Ok(())
}
