//! Parse a basket file, split it by basket and turn baskets into
//! (context, held-out item) instances.
//!
//! ```text
//! cargo run --example parse_and_split -- path/to/baskets.dat
//! ```
//! Without a path a small inline corpus is used.

use std::io::BufReader;

use basket2vec::corpus::{
    make_instances, parse_basket_file, split_train_test, FileFormat, InstanceMode, ParseOptions,
};

const SAMPLE: &str = "\
milk bread butter
bread jam
milk  cereal\tbananas
beer chips salsa chips

coffee
coffee milk sugar
";

fn main() -> basket2vec::Result<()> {
    let options = ParseOptions::new(FileFormat::Whitespace);
    let parsed = match std::env::args().nth(1) {
        Some(path) => parse_basket_file(BufReader::new(std::fs::File::open(path)?), options)?,
        None => parse_basket_file(SAMPLE.as_bytes(), options)?,
    };
    let ds = &parsed.dataset;
    println!("{} baskets, {} distinct items", ds.len(), ds.catalog().len());

    let (train, test) = split_train_test(ds, 0.3, 7)?;
    println!("train {} / test {} baskets", train.len(), test.len());

    let all = make_instances(&train, InstanceMode::AllPositions, 0);
    println!(
        "{} training instances ({} singleton baskets skipped)",
        all.instances.len(),
        all.skipped_singletons
    );
    for inst in all.instances.iter().take(6) {
        let names = |idx: &[usize]| -> Vec<&str> { idx.iter().map(|&i| ds.catalog().item(i).unwrap()).collect() };
        println!("  {:?} -> {}", names(&inst.context), ds.catalog().item(inst.target).unwrap());
    }

    let held_out = make_instances(&test, InstanceMode::OneRandom, 42);
    println!("{} test instances, one held-out item per basket", held_out.instances.len());
    Ok(())
}
