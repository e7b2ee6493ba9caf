//! Embedding parameters of one network and its conditional softmax.
//!
//! Each network owns two `|Z| x dim` tables. Rows of the input table are
//! averaged into a context vector; rows of the output table score candidate
//! items against it. The generator and the discriminator are two independent
//! instances of [`EmbeddingModel`].

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Generator,
    Discriminator,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Generator => "generator",
            Role::Discriminator => "discriminator",
        }
    }
}

impl std::fmt::Display for Role {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Which of the two tables a row belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Table {
    Input,
    Output,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingModel {
    input: Vec<f64>,
    output: Vec<f64>,
    n_items: usize,
    dim: usize,
    role: Role,
}

/// Mean of the input rows of a context.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextVector {
    pub values: Vec<f64>,
    pub source_size: usize,
}

/// A full softmax over the catalog.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoricalDistribution {
    pub probs: Vec<f64>,
    pub log_probs: Vec<f64>,
}

impl CategoricalDistribution {
    /// Numerically stable softmax of `logits`.
    pub fn from_logits(logits: &[f64]) -> Self {
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let shifted: Vec<f64> = logits.iter().map(|&s| s - max).collect();
        let sum: f64 = shifted.iter().map(|s| s.exp()).sum();
        let log_sum = sum.ln();
        let probs = shifted.iter().map(|s| s.exp() / sum).collect();
        let log_probs = shifted.iter().map(|s| s - log_sum).collect();
        CategoricalDistribution { probs, log_probs }
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl EmbeddingModel {
    /// Entries drawn i.i.d. from `U[-scale/dim, scale/dim]`, input table first.
    pub fn init(catalog_size: usize, dim: usize, seed: u64, scale: f64, role: Role) -> Result<Self> {
        if dim == 0 {
            return Err(Error::config("dim", "must be >= 1"));
        }
        if catalog_size < 2 {
            return Err(Error::CatalogTooSmall(catalog_size));
        }
        if !(scale >= 0.0 && scale.is_finite()) {
            return Err(Error::config("init_scale", "must be finite and >= 0"));
        }
        let bound = scale / dim as f64;
        let len = catalog_size * dim;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |n: usize| -> Vec<f64> {
            if bound == 0.0 {
                vec![0.0; n]
            } else {
                (0..n).map(|_| rng.random_range(-bound..=bound)).collect()
            }
        };
        let input = draw(len);
        let output = draw(len);
        Ok(EmbeddingModel {
            input,
            output,
            n_items: catalog_size,
            dim,
            role,
        })
    }

    /// Builds a model from explicit row-major tables.
    pub fn from_tables(
        input: Vec<f64>,
        output: Vec<f64>,
        n_items: usize,
        dim: usize,
        role: Role,
    ) -> Result<Self> {
        if dim == 0 || n_items == 0 {
            return Err(Error::InvalidInput("empty embedding table".into()));
        }
        if input.len() != n_items * dim || output.len() != n_items * dim {
            return Err(Error::InvalidInput(format!(
                "tables must hold {n_items} x {dim} entries"
            )));
        }
        if input.iter().chain(&output).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite embedding entry".into()));
        }
        Ok(EmbeddingModel {
            input,
            output,
            n_items,
            dim,
            role,
        })
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn set_role(&mut self, role: Role) {
        self.role = role;
    }

    pub fn input_table(&self) -> &[f64] {
        &self.input
    }

    pub fn output_table(&self) -> &[f64] {
        &self.output
    }

    pub fn table(&self, table: Table) -> &[f64] {
        match table {
            Table::Input => &self.input,
            Table::Output => &self.output,
        }
    }

    pub fn table_mut(&mut self, table: Table) -> &mut [f64] {
        match table {
            Table::Input => &mut self.input,
            Table::Output => &mut self.output,
        }
    }

    pub fn row(&self, table: Table, item: usize) -> &[f64] {
        &self.table(table)[item * self.dim..(item + 1) * self.dim]
    }

    pub fn row_mut(&mut self, table: Table, item: usize) -> &mut [f64] {
        let dim = self.dim;
        &mut self.table_mut(table)[item * dim..(item + 1) * dim]
    }

    pub fn input_row(&self, item: usize) -> &[f64] {
        self.row(Table::Input, item)
    }

    pub fn output_row(&self, item: usize) -> &[f64] {
        self.row(Table::Output, item)
    }

    pub(crate) fn check_item(&self, item: usize) -> Result<()> {
        if item >= self.n_items {
            return Err(Error::ItemOutOfRange {
                index: item,
                catalog_size: self.n_items,
            });
        }
        Ok(())
    }

    pub fn context_embedding(&self, context: &[usize]) -> Result<ContextVector> {
        if context.is_empty() {
            return Err(Error::EmptyContext);
        }
        let mut values = vec![0.0; self.dim];
        for &item in context {
            self.check_item(item)?;
            for (v, x) in values.iter_mut().zip(self.input_row(item)) {
                *v += x;
            }
        }
        let n = context.len() as f64;
        values.iter_mut().for_each(|v| *v /= n);
        Ok(ContextVector {
            values,
            source_size: context.len(),
        })
    }

    /// Pre-sigmoid logit of `item` against a context vector.
    pub fn score(&self, ctx: &ContextVector, item: usize) -> f64 {
        dot(self.output_row(item), &ctx.values)
    }

    /// Logits of every catalog item.
    pub fn logits(&self, ctx: &ContextVector) -> Vec<f64> {
        self.output
            .chunks_exact(self.dim)
            .map(|row| dot(row, &ctx.values))
            .collect()
    }

    pub fn conditional_distribution(&self, context: &[usize]) -> Result<CategoricalDistribution> {
        let ctx = self.context_embedding(context)?;
        Ok(CategoricalDistribution::from_logits(&self.logits(&ctx)))
    }

    pub fn is_finite(&self) -> bool {
        self.input.iter().chain(&self.output).all(|v| v.is_finite())
    }

    /// Hash of the exact bit patterns of both tables.
    pub fn fingerprint(&self) -> u64 {
        let mut hasher = DefaultHasher::new();
        self.n_items.hash(&mut hasher);
        self.dim.hash(&mut hasher);
        for v in self.input.iter().chain(&self.output) {
            v.to_bits().hash(&mut hasher);
        }
        hasher.finish()
    }
}
