//! Transaction ingestion, catalogs, train/test splits and training instances.
//!
//! A basket file holds one basket per line. Item tokens are opaque strings and
//! are interned into a [`Catalog`] in first-seen order, so the same file always
//! produces the same dense indices.

use std::collections::HashMap;
use std::io::BufRead;

use log::warn;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bidirectional map between external item identifiers and dense indices.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Catalog {
    items: Vec<String>,
    index_of: HashMap<String, usize>,
}

impl Catalog {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a catalog from an ordered list of distinct identifiers.
    pub fn from_items<I, S>(items: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut catalog = Catalog::new();
        for item in items {
            let item = item.into();
            if catalog.index_of.contains_key(&item) {
                return Err(Error::Data(format!("duplicate catalog item {item:?}")));
            }
            catalog.intern(&item);
        }
        Ok(catalog)
    }

    /// Returns the index of `item`, adding it if unseen.
    pub fn intern(&mut self, item: &str) -> usize {
        if let Some(&idx) = self.index_of.get(item) {
            return idx;
        }
        let idx = self.items.len();
        self.items.push(item.to_owned());
        self.index_of.insert(item.to_owned(), idx);
        idx
    }

    pub fn index_of(&self, item: &str) -> Option<usize> {
        self.index_of.get(item).copied()
    }

    pub fn item(&self, index: usize) -> Option<&str> {
        self.items.get(index).map(String::as_str)
    }

    pub fn items(&self) -> &[String] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Basket {
    pub item_indices: Vec<usize>,
}

impl Basket {
    pub fn new(item_indices: Vec<usize>) -> Self {
        Basket { item_indices }
    }

    pub fn len(&self) -> usize {
        self.item_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.item_indices.is_empty()
    }
}

/// Baskets sharing one catalog.
#[derive(Debug, Clone, PartialEq)]
pub struct BasketDataset {
    baskets: Vec<Basket>,
    catalog: Catalog,
}

impl BasketDataset {
    /// Validates that every basket is non-empty and indexes into `catalog`.
    pub fn new(baskets: Vec<Basket>, catalog: Catalog) -> Result<Self> {
        if baskets.is_empty() {
            return Err(Error::NoBaskets);
        }
        if catalog.len() < 2 {
            return Err(Error::CatalogTooSmall(catalog.len()));
        }
        for basket in &baskets {
            if basket.is_empty() {
                return Err(Error::Data("empty basket".into()));
            }
            if let Some(&index) = basket.item_indices.iter().find(|&&i| i >= catalog.len()) {
                return Err(Error::ItemOutOfRange {
                    index,
                    catalog_size: catalog.len(),
                });
            }
        }
        Ok(BasketDataset { baskets, catalog })
    }

    /// Convenience constructor for in-memory corpora with a catalog of
    /// `catalog_size` anonymous items named by their index.
    pub fn from_indices(baskets: Vec<Vec<usize>>, catalog_size: usize) -> Result<Self> {
        let catalog = Catalog::from_items((0..catalog_size).map(|i| i.to_string()))?;
        BasketDataset::new(baskets.into_iter().map(Basket::new).collect(), catalog)
    }

    pub fn baskets(&self) -> &[Basket] {
        &self.baskets
    }

    pub fn catalog(&self) -> &Catalog {
        &self.catalog
    }

    pub fn len(&self) -> usize {
        self.baskets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.baskets.is_empty()
    }

    /// Returns a dataset holding the baskets at `indices`, sharing the catalog.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let baskets = indices.iter().map(|&i| self.baskets[i].clone()).collect();
        BasketDataset::new(baskets, self.catalog.clone())
    }

    /// Number of occurrences of each item, duplicates included.
    pub fn item_counts(&self) -> Vec<u64> {
        let mut counts = vec![0u64; self.catalog.len()];
        for basket in &self.baskets {
            for &i in &basket.item_indices {
                counts[i] += 1;
            }
        }
        counts
    }

    /// Histogram of basket lengths: `hist[d]` baskets have length `d`.
    pub fn size_histogram(&self) -> Vec<usize> {
        let max = self.baskets.iter().map(Basket::len).max().unwrap_or(0);
        let mut hist = vec![0; max + 1];
        for basket in &self.baskets {
            hist[basket.len()] += 1;
        }
        hist
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FileFormat {
    /// Tokens separated by runs of spaces or tabs (the `retail.dat` layout).
    Whitespace,
    /// Comma separated tokens.
    Csv,
}

impl std::str::FromStr for FileFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "whitespace" => Ok(FileFormat::Whitespace),
            "csv" => Ok(FileFormat::Csv),
            other => Err(Error::config("format", format!("unknown format {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParseOptions {
    pub format: FileFormat,
    /// Drop the first token of every line (a per-line basket id).
    pub skip_id_column: bool,
}

impl ParseOptions {
    pub fn new(format: FileFormat) -> Self {
        ParseOptions {
            format,
            skip_id_column: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ParsedBaskets {
    pub dataset: BasketDataset,
    /// Non-empty lines that produced no item tokens.
    pub skipped_lines: usize,
}

/// Reads one basket per non-empty line.
pub fn parse_basket_file<R: BufRead>(source: R, options: ParseOptions) -> Result<ParsedBaskets> {
    let mut catalog = Catalog::new();
    let mut baskets = Vec::new();
    let mut skipped_lines = 0;

    for (lineno, line) in source.lines().enumerate() {
        let line = line.map_err(|e| match e.kind() {
            std::io::ErrorKind::InvalidData => {
                Error::Data(format!("line {}: not valid UTF-8", lineno + 1))
            }
            _ => Error::Io(e),
        })?;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }

        let tokens: Vec<&str> = match options.format {
            FileFormat::Whitespace => line.split_whitespace().collect(),
            FileFormat::Csv => line.split(',').map(str::trim).collect(),
        };
        let tokens = if options.skip_id_column {
            tokens.get(1..).unwrap_or_default()
        } else {
            &tokens[..]
        };

        let item_indices: Vec<usize> = tokens
            .iter()
            .filter(|t| !t.is_empty())
            .map(|t| catalog.intern(t))
            .collect();
        if item_indices.is_empty() {
            skipped_lines += 1;
            warn!("line {}: no item tokens, skipped", lineno + 1);
            continue;
        }
        baskets.push(Basket::new(item_indices));
    }

    if skipped_lines > 0 {
        warn!("skipped {skipped_lines} malformed lines");
    }
    let dataset = BasketDataset::new(baskets, catalog)?;
    Ok(ParsedBaskets {
        dataset,
        skipped_lines,
    })
}

/// Seeded basket-level partition: returns sorted (train, test) basket indices.
pub fn split_indices(
    n_baskets: usize,
    test_fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidFraction(test_fraction));
    }
    if n_baskets < 2 {
        return Err(Error::TooFewBaskets(n_baskets));
    }
    let n_test = ((n_baskets as f64 * test_fraction).round() as usize).clamp(1, n_baskets - 1);

    let mut order: Vec<usize> = (0..n_baskets).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (test, train) = order.split_at(n_test);
    let mut train = train.to_vec();
    let mut test = test.to_vec();
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

pub fn split_train_test(
    dataset: &BasketDataset,
    test_fraction: f64,
    seed: u64,
) -> Result<(BasketDataset, BasketDataset)> {
    let (train, test) = split_indices(dataset.len(), test_fraction, seed)?;
    Ok((dataset.subset(&train)?, dataset.subset(&test)?))
}

/// A basket with one occurrence of `target` removed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingInstance {
    pub context: Vec<usize>,
    pub target: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstanceMode {
    /// One instance per distinct item of every basket.
    AllPositions,
    /// One seeded random held-out item per basket.
    OneRandom,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InstanceSet {
    pub instances: Vec<TrainingInstance>,
    /// Baskets of length one, which have no context.
    pub skipped_singletons: usize,
}

fn remove_one(basket: &[usize], position: usize) -> TrainingInstance {
    let mut context = Vec::with_capacity(basket.len() - 1);
    context.extend_from_slice(&basket[..position]);
    context.extend_from_slice(&basket[position + 1..]);
    TrainingInstance {
        context,
        target: basket[position],
    }
}

pub fn make_instances(dataset: &BasketDataset, mode: InstanceMode, seed: u64) -> InstanceSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut instances = Vec::new();
    let mut skipped_singletons = 0;

    for basket in dataset.baskets() {
        let items = &basket.item_indices;
        if items.len() < 2 {
            skipped_singletons += 1;
            continue;
        }
        match mode {
            InstanceMode::OneRandom => {
                let position = rng.random_range(0..items.len());
                instances.push(remove_one(items, position));
            }
            InstanceMode::AllPositions => {
                // Positions holding an already-seen item would repeat an instance.
                for position in 0..items.len() {
                    if !items[..position].contains(&items[position]) {
                        instances.push(remove_one(items, position));
                    }
                }
            }
        }
    }
    InstanceSet {
        instances,
        skipped_singletons,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    Uniform,
    Unigram,
}

impl std::str::FromStr for NoiseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform" => Ok(NoiseKind::Uniform),
            "unigram" => Ok(NoiseKind::Unigram),
            other => Err(Error::config("noise", format!("unknown noise kind {other:?}"))),
        }
    }
}

/// Static distribution over the catalog used to draw negatives.
#[derive(Debug, Clone)]
pub struct NoiseDistribution {
    probs: Vec<f64>,
    table: WeightedAliasIndex<f64>,
}

impl NoiseDistribution {
    /// Normalizes non-negative weights into a distribution.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidInput("noise weights must be finite and >= 0".into()));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidInput("noise weights sum to zero".into()));
        }
        let probs: Vec<f64> = weights.iter().map(|w| w / total).collect();
        let table = WeightedAliasIndex::new(probs.clone())
            .map_err(|e| Error::InvalidInput(format!("alias table: {e}")))?;
        Ok(NoiseDistribution { probs, table })
    }

    pub fn uniform(catalog_size: usize) -> Result<Self> {
        NoiseDistribution::from_weights(&vec![1.0; catalog_size])
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, item: usize) -> f64 {
        self.probs[item]
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.table.sample(rng)
    }
}

/// Uniform noise, or `count(item)^power` over training occurrences.
pub fn build_noise_distribution(
    train: &BasketDataset,
    kind: NoiseKind,
    power: f64,
) -> Result<NoiseDistribution> {
    if !(power >= 0.0 && power.is_finite()) {
        return Err(Error::config("noise_power", "must be finite and >= 0"));
    }
    match kind {
        NoiseKind::Uniform => NoiseDistribution::uniform(train.catalog().len()),
        NoiseKind::Unigram => {
            let weights: Vec<f64> = train
                .item_counts()
                .into_iter()
                .map(|c| if c == 0 { 0.0 } else { (c as f64).powf(power) })
                .collect();
            NoiseDistribution::from_weights(&weights)
        }
    }
}
