//! Item embeddings for basket completion.
//!
//! Three training objectives share one embedding architecture (mean of the
//! context's input rows scored against output rows):
//!
//! * negative sampling against a static noise distribution,
//! * noise contrastive estimation,
//! * adversarial negative sampling, where a generator network supplies the
//!   negatives of a discriminator and is itself trained by reward-weighted
//!   policy gradient, optionally mixed with a negative-sampling term.
//!
//! Models are evaluated by mean percentile rank and precision@k of a held-out
//! basket item.
//!
//! ```no_run
//! use basket2vec::corpus::{parse_basket_file, split_train_test, FileFormat, ParseOptions};
//! use basket2vec::trainer::{train, Objective, TrainConfig};
//!
//! let file = std::io::BufReader::new(std::fs::File::open("retail.dat")?);
//! let parsed = parse_basket_file(file, ParseOptions::new(FileFormat::Whitespace))?;
//! let (train_set, test_set) = split_train_test(&parsed.dataset, 0.2, 7)?;
//! let config = TrainConfig { objective: Objective::GanMixed, ..TrainConfig::default() };
//! let outcome = train(&train_set, &test_set, &config)?;
//! println!("generator MPR {:.2}", outcome.generator_report.mpr);
//! # Ok::<(), basket2vec::Error>(())
//! ```

pub mod cli;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod losses;
pub mod model;
pub mod sampling;
pub mod snapshot;
pub mod synthetic;
pub mod trainer;

pub use error::{Error, Result};
