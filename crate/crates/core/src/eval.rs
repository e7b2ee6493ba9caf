//! Percentile rank, mean percentile rank and precision@k.
//!
//! The percentile rank of the held-out item counts every candidate whose
//! score does not exceed the target's, the target included, so ties go in the
//! target's favour and `100/|Z| <= PR <= 100`. The rank is one plus the number
//! of strictly better candidates, consistent with the same tie rule.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::TrainingInstance;
use crate::error::{Error, Result};
use crate::model::{EmbeddingModel, Role};

/// Returns `(PR in percent, rank)` of `target` under `scores`.
pub fn percentile_rank(scores: &[f64], target: usize) -> (f64, usize) {
    let t = scores[target];
    let mut not_above = 0usize;
    let mut above = 0usize;
    for &s in scores {
        if t >= s {
            not_above += 1;
        }
        if s > t {
            above += 1;
        }
    }
    (not_above as f64 / scores.len() as f64 * 100.0, above + 1)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EvalOptions {
    /// Remove the context items (other than the target) from the candidates.
    pub exclude_context: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InstanceResult {
    pub id: usize,
    pub pr: f64,
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub scorer: Role,
    pub n_items: usize,
    pub n_instances: usize,
    pub mpr: f64,
    /// Fraction of instances with rank <= k.
    pub precision_at: BTreeMap<usize, f64>,
    pub per_instance: Vec<InstanceResult>,
}

impl EvalReport {
    pub fn from_results(
        scorer: Role,
        n_items: usize,
        per_instance: Vec<InstanceResult>,
        ks: &[usize],
    ) -> Result<Self> {
        if per_instance.is_empty() {
            return Err(Error::EmptyTestSet);
        }
        let n = per_instance.len();
        let mpr = per_instance.iter().map(|r| r.pr).sum::<f64>() / n as f64;
        let precision_at = ks
            .iter()
            .map(|&k| {
                let hits = per_instance.iter().filter(|r| r.rank <= k).count();
                (k, hits as f64 / n as f64)
            })
            .collect();
        Ok(EvalReport {
            scorer,
            n_items,
            n_instances: n,
            mpr,
            precision_at,
            per_instance,
        })
    }

    pub fn precision(&self, k: usize) -> Option<f64> {
        self.precision_at.get(&k).copied()
    }

    fn metrics_on(&self, sample: &[usize], ks: &[usize]) -> (f64, Vec<f64>) {
        let n = sample.len() as f64;
        let mpr = sample.iter().map(|&i| self.per_instance[i].pr).sum::<f64>() / n;
        let precisions = ks
            .iter()
            .map(|&k| sample.iter().filter(|&&i| self.per_instance[i].rank <= k).count() as f64 / n)
            .collect();
        (mpr, precisions)
    }

    /// Bootstrap standard errors of MPR and of each precision@k.
    pub fn bootstrap_se(&self, resamples: usize, seed: u64) -> (f64, BTreeMap<usize, f64>) {
        let ks: Vec<usize> = self.precision_at.keys().copied().collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = self.per_instance.len();
        let mut mprs = Vec::with_capacity(resamples);
        let mut precs: Vec<Vec<f64>> = vec![Vec::with_capacity(resamples); ks.len()];
        let mut sample = vec![0; n];
        for _ in 0..resamples {
            sample.iter_mut().for_each(|s| *s = rng.random_range(0..n));
            let (m, p) = self.metrics_on(&sample, &ks);
            mprs.push(m);
            for (acc, v) in precs.iter_mut().zip(p) {
                acc.push(v);
            }
        }
        let se = ks.into_iter().zip(precs.iter().map(|v| std_dev(v))).collect();
        (std_dev(&mprs), se)
    }

    /// Aligned plain-text rendering.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "scorer      {}", self.scorer);
        let _ = writeln!(out, "instances   {}", self.n_instances);
        let _ = writeln!(out, "catalog     {}", self.n_items);
        let _ = writeln!(out, "MPR         {:.2}", self.mpr);
        for (k, p) in &self.precision_at {
            let label = format!("P@{k}");
            let _ = writeln!(out, "{label:<11} {:.2}", 100.0 * p);
        }
        out
    }
}

fn std_dev(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

fn candidate_scores(scores: &[f64], instance: &TrainingInstance) -> (Vec<f64>, usize) {
    let mut excluded = vec![false; scores.len()];
    for &c in &instance.context {
        excluded[c] = true;
    }
    excluded[instance.target] = false;
    let mut kept = Vec::with_capacity(scores.len());
    let mut target = 0;
    for (j, &s) in scores.iter().enumerate() {
        if excluded[j] {
            continue;
        }
        if j == instance.target {
            target = kept.len();
        }
        kept.push(s);
    }
    (kept, target)
}

/// Scores one instance with an arbitrary scorer over the catalog.
pub fn rank_instance(
    scores: &[f64],
    instance: &TrainingInstance,
    options: EvalOptions,
) -> (f64, usize) {
    if options.exclude_context {
        let (kept, target) = candidate_scores(scores, instance);
        percentile_rank(&kept, target)
    } else {
        percentile_rank(scores, instance.target)
    }
}

/// Ranks every held-out target by the model's logits. Softmax is strictly
/// monotone so logits and probabilities give identical ranks; logits avoid
/// ties introduced by underflow.
pub fn evaluate(
    model: &EmbeddingModel,
    instances: &[TrainingInstance],
    ks: &[usize],
    options: EvalOptions,
) -> Result<EvalReport> {
    evaluate_with(model.role(), model.n_items(), instances, ks, options, |inst| {
        let ctx = model.context_embedding(&inst.context)?;
        model.check_item(inst.target)?;
        Ok(model.logits(&ctx))
    })
}

/// Evaluates any scorer that maps an instance to one score per catalog item.
pub fn evaluate_with<F>(
    scorer: Role,
    n_items: usize,
    instances: &[TrainingInstance],
    ks: &[usize],
    options: EvalOptions,
    score: F,
) -> Result<EvalReport>
where
    F: Fn(&TrainingInstance) -> Result<Vec<f64>> + Sync,
{
    if instances.is_empty() {
        return Err(Error::EmptyTestSet);
    }
    let results = instances
        .par_iter()
        .enumerate()
        .map(|(id, inst)| {
            let scores = score(inst)?;
            if scores.len() != n_items {
                return Err(Error::CatalogMismatch(format!(
                    "scorer returned {} scores for {n_items} items",
                    scores.len()
                )));
            }
            let (pr, rank) = rank_instance(&scores, inst, options);
            Ok(InstanceResult { id, pr, rank })
        })
        .collect::<Result<Vec<_>>>()?;
    EvalReport::from_results(scorer, n_items, results, ks)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub estimate: f64,
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }
}

/// Paired differences `b - a` with 95% bootstrap intervals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub delta_mpr: Interval,
    pub delta_precision: BTreeMap<usize, Interval>,
    pub resamples: usize,
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn interval(estimate: f64, mut samples: Vec<f64>) -> Interval {
    if samples.is_empty() {
        return Interval {
            estimate,
            lo: estimate,
            hi: estimate,
        };
    }
    samples.sort_by(f64::total_cmp);
    Interval {
        estimate,
        lo: percentile(&samples, 0.025),
        hi: percentile(&samples, 0.975),
    }
}

pub fn compare_reports(
    a: &EvalReport,
    b: &EvalReport,
    resamples: usize,
    seed: u64,
) -> Result<Comparison> {
    let same_ids = a.per_instance.len() == b.per_instance.len()
        && a.per_instance.iter().zip(&b.per_instance).all(|(x, y)| x.id == y.id);
    if !same_ids {
        return Err(Error::MismatchedInstances);
    }
    let ks: Vec<usize> = a
        .precision_at
        .keys()
        .filter(|k| b.precision_at.contains_key(k))
        .copied()
        .collect();
    let n = a.per_instance.len();
    let all: Vec<usize> = (0..n).collect();
    let delta = |sample: &[usize]| {
        let (ma, pa) = a.metrics_on(sample, &ks);
        let (mb, pb) = b.metrics_on(sample, &ks);
        let dp: Vec<f64> = pb.iter().zip(&pa).map(|(y, x)| y - x).collect();
        (mb - ma, dp)
    };
    let (dm, dp) = delta(&all);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mpr_samples = Vec::with_capacity(resamples);
    let mut prec_samples: Vec<Vec<f64>> = vec![Vec::with_capacity(resamples); ks.len()];
    let mut sample = vec![0; n];
    for _ in 0..resamples {
        sample.iter_mut().for_each(|s| *s = rng.random_range(0..n));
        let (m, p) = delta(&sample);
        mpr_samples.push(m);
        for (acc, v) in prec_samples.iter_mut().zip(p) {
            acc.push(v);
        }
    }

    let delta_precision = ks
        .iter()
        .zip(dp)
        .zip(prec_samples)
        .map(|((&k, d), s)| (k, interval(d, s)))
        .collect();
    Ok(Comparison {
        delta_mpr: interval(dm, mpr_samples),
        delta_precision,
        resamples,
    })
}

/// Method | Precision@1 | MPR table, each cell `value ± bootstrap s.e.`.
pub fn render_table(rows: &[(&str, &EvalReport)], resamples: usize, seed: u64) -> String {
    let cells: Vec<(String, String, String)> = rows
        .iter()
        .map(|(name, report)| {
            let (mpr_se, prec_se) = report.bootstrap_se(resamples, seed);
            let p1 = report
                .precision(1)
                .map(|p| format!("{:.2} ±{:.2}", 100.0 * p, 100.0 * prec_se[&1]))
                .unwrap_or_else(|| "-".into());
            let mpr = format!("{:.2} ±{:.2}", report.mpr, mpr_se);
            (name.to_string(), p1, mpr)
        })
        .collect();
    let w0 = cells.iter().map(|c| c.0.chars().count()).chain([6]).max().unwrap();
    let w1 = cells.iter().map(|c| c.1.chars().count()).chain([11]).max().unwrap();
    let w2 = cells.iter().map(|c| c.2.chars().count()).chain([3]).max().unwrap();

    let mut out = String::new();
    let _ = writeln!(out, "{:<w0$} | {:>w1$} | {:>w2$}", "Method", "Precision@1", "MPR");
    let _ = writeln!(out, "{}-+-{}-+-{}", "-".repeat(w0), "-".repeat(w1), "-".repeat(w2));
    for (name, p1, mpr) in cells {
        let _ = writeln!(out, "{name:<w0$} | {p1:>w1$} | {mpr:>w2$}");
    }
    out
}
