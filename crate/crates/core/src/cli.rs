//! The `prepare`, `train`, `eval` and `compare` commands.
//!
//! Runs are described by a flat TOML document (see [`RunConfig`]); command
//! line `--set key=value` pairs override file values. Every training run
//! writes its resolved configuration, the split, an input hash and all
//! checkpoints into its output directory so it can be replayed.
//!
//! Output directory layout of `train`:
//!
//! ```text
//! config.toml           resolved configuration, every default explicit
//! manifest.json         input hash, seeds, crate version, resolved config
//! split.json            train/test basket indices
//! log.jsonl             one RoundRecord per evaluation point
//! checkpoints/<phase>-<round>/{generator,discriminator}.snap
//! final/{generator,discriminator}.snap
//! report-<scorer>.{json,txt}, pretrain-report-<scorer>.{json,txt}
//! ```

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use log::info;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{parse_basket_file, split_indices, BasketDataset, FileFormat, ParseOptions};
use crate::error::{ConfigIssue, Error, Result};
use crate::eval::{compare_reports, evaluate, render_table, EvalOptions, EvalReport};
use crate::model::{EmbeddingModel, Role};
use crate::snapshot;
use crate::trainer::{test_instances, train_with_observer, RoundRecord, TrainConfig, TrainObserver, TrainState};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub version: u32,
    pub dataset: PathBuf,
    pub format: FileFormat,
    pub skip_id_column: bool,
    pub test_fraction: f64,
    pub split_seed: u64,
    pub output_dir: PathBuf,
    #[serde(flatten)]
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            version: CONFIG_VERSION,
            dataset: PathBuf::new(),
            format: FileFormat::Whitespace,
            skip_id_column: false,
            test_fraction: 0.2,
            split_seed: 7,
            output_dir: PathBuf::from("runs/latest"),
            train: TrainConfig::default(),
        }
    }
}

fn to_table<T: Serialize>(value: &T) -> Result<toml::Table> {
    toml::Table::try_from(value).map_err(|e| Error::InvalidInput(format!("serialize config: {e}")))
}

/// Parses `key=value`; values are TOML literals, falling back to bare strings.
pub fn parse_override(pair: &str) -> Result<(String, toml::Value)> {
    let (key, raw) = pair
        .split_once('=')
        .ok_or_else(|| Error::config(pair, "override must look like key=value"))?;
    let key = key.trim().to_owned();
    let raw = raw.trim();
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_owned()));
    Ok((key, value))
}

impl RunConfig {
    /// Every default made explicit.
    pub fn resolved(&self) -> Self {
        RunConfig {
            train: self.train.resolved(),
            ..self.clone()
        }
    }

    /// Builds a configuration from defaults, an optional file and overrides.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut table = toml::Table::new();
        if let Some(path) = path {
            let text = fs::read_to_string(path)
                .map_err(|e| Error::config("config", format!("{}: {e}", path.display())))?;
            table = toml::from_str(&text)
                .map_err(|e| Error::config("config", format!("{}: {e}", path.display())))?;
        }
        for pair in overrides {
            let (key, value) = parse_override(pair)?;
            table.insert(key, value);
        }
        RunConfig::from_table(table)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let table = toml::from_str(text).map_err(|e| Error::config("config", e.to_string()))?;
        RunConfig::from_table(table)
    }

    fn from_table(table: toml::Table) -> Result<Self> {
        let known = to_table(&RunConfig::default().resolved())?;
        let unknown: Vec<ConfigIssue> = table
            .keys()
            .filter(|k| !known.contains_key(*k))
            .map(|k| ConfigIssue {
                field: k.clone(),
                reason: "unknown key".into(),
            })
            .collect();
        if !unknown.is_empty() {
            return Err(Error::Config(unknown));
        }
        let config: RunConfig = table
            .try_into()
            .map_err(|e: toml::de::Error| Error::config("config", e.message().to_owned()))?;
        Ok(config)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(&self.resolved()).map_err(|e| Error::InvalidInput(format!("serialize config: {e}")))
    }

    /// Checks all fields, including that the dataset path resolves.
    pub fn validate(&self) -> Result<()> {
        let mut issues = Vec::new();
        if self.version != CONFIG_VERSION {
            issues.push(ConfigIssue {
                field: "version".into(),
                reason: format!("unsupported version {}, expected {CONFIG_VERSION}", self.version),
            });
        }
        if self.dataset.as_os_str().is_empty() {
            issues.push(ConfigIssue {
                field: "dataset".into(),
                reason: "required".into(),
            });
        } else if !self.dataset.is_file() {
            issues.push(ConfigIssue {
                field: "dataset".into(),
                reason: format!("{} is not a readable file", self.dataset.display()),
            });
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            issues.push(ConfigIssue {
                field: "test_fraction".into(),
                reason: "must lie strictly between 0 and 1".into(),
            });
        }
        if let Err(Error::Config(more)) = self.train.validate() {
            issues.extend(more);
        }
        if issues.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(issues))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub input_sha256: String,
    pub test_fraction: f64,
    pub seed: u64,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub baskets: usize,
    pub catalog_size: usize,
    pub skipped_lines: usize,
    pub singleton_baskets: usize,
    /// `size_histogram[d]` baskets hold `d` items.
    pub size_histogram: Vec<usize>,
    pub train_baskets: usize,
    pub test_baskets: usize,
    pub input_sha256: String,
}

impl DatasetSummary {
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "baskets         {}\ncatalog items   {}\nskipped lines   {}\nsingletons      {}\ntrain / test    {} / {}\n",
            self.baskets,
            self.catalog_size,
            self.skipped_lines,
            self.singleton_baskets,
            self.train_baskets,
            self.test_baskets
        );
        out.push_str("basket sizes\n");
        for (size, count) in self.size_histogram.iter().enumerate().filter(|(_, &c)| c > 0) {
            out.push_str(&format!("  {size:>4}  {count}\n"));
        }
        out
    }
}

/// A parsed dataset together with the hash of its raw bytes.
pub struct LoadedDataset {
    pub dataset: BasketDataset,
    pub skipped_lines: usize,
    pub sha256: String,
}

pub fn load_dataset(path: &Path, format: FileFormat, skip_id_column: bool) -> Result<LoadedDataset> {
    let bytes = fs::read(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    let sha256 = hex::encode(Sha256::digest(&bytes));
    let parsed = parse_basket_file(&bytes[..], ParseOptions { format, skip_id_column })?;
    Ok(LoadedDataset {
        dataset: parsed.dataset,
        skipped_lines: parsed.skipped_lines,
        sha256,
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let file = File::open(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    Ok(serde_json::from_reader(BufReader::new(file))?)
}

#[derive(Debug, Clone)]
pub struct PrepareArgs {
    pub dataset: PathBuf,
    pub format: FileFormat,
    pub skip_id_column: bool,
    pub test_fraction: f64,
    pub seed: u64,
    pub out: Option<PathBuf>,
}

/// Summarizes a basket file and its split; writes `summary.json` and
/// `split.json` when an output directory is given.
pub fn cmd_prepare(args: &PrepareArgs) -> Result<DatasetSummary> {
    let loaded = load_dataset(&args.dataset, args.format, args.skip_id_column)?;
    let ds = &loaded.dataset;
    let (train, test) = split_indices(ds.len(), args.test_fraction, args.seed)?;
    let hist = ds.size_histogram();
    let summary = DatasetSummary {
        baskets: ds.len(),
        catalog_size: ds.catalog().len(),
        skipped_lines: loaded.skipped_lines,
        singleton_baskets: hist.get(1).copied().unwrap_or(0),
        size_histogram: hist,
        train_baskets: train.len(),
        test_baskets: test.len(),
        input_sha256: loaded.sha256.clone(),
    };
    if let Some(out) = &args.out {
        fs::create_dir_all(out)?;
        write_json(&out.join("summary.json"), &summary)?;
        let manifest = SplitManifest {
            input_sha256: loaded.sha256,
            test_fraction: args.test_fraction,
            seed: args.seed,
            train,
            test,
        };
        write_json(&out.join("split.json"), &manifest)?;
    }
    Ok(summary)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub crate_version: String,
    pub dataset: PathBuf,
    pub input_sha256: String,
    pub split_seed: u64,
    pub seed: u64,
    pub eval_seed: u64,
    pub config: RunConfig,
}

/// Writes log lines and checkpoints while training.
struct RunRecorder {
    dir: PathBuf,
    catalog: crate::corpus::Catalog,
    log: BufWriter<File>,
}

fn save_models(dir: &Path, state: &TrainState, catalog: &crate::corpus::Catalog) -> Result<()> {
    fs::create_dir_all(dir)?;
    snapshot::save(&dir.join("generator.snap"), &state.generator, catalog)?;
    if let Some(d) = &state.discriminator {
        snapshot::save(&dir.join("discriminator.snap"), d, catalog)?;
    }
    Ok(())
}

impl TrainObserver for RunRecorder {
    fn on_eval(&mut self, state: &TrainState, record: &RoundRecord) -> Result<()> {
        serde_json::to_writer(&mut self.log, record)?;
        self.log.write_all(b"\n")?;
        self.log.flush()?;
        let phase = serde_json::to_value(record.phase)?;
        let name = format!("{}-{:04}", phase.as_str().unwrap_or("round"), record.round);
        save_models(&self.dir.join("checkpoints").join(name), state, &self.catalog)
    }

    fn on_divergence(&mut self, state: &TrainState, error: &Error) {
        let dir = self.dir.join("checkpoints").join("divergence");
        log::error!("{error}; dumping last consistent state to {}", dir.display());
        if let Err(e) = save_models(&dir, state, &self.catalog) {
            log::error!("state dump failed: {e}");
        }
    }
}

fn write_report(dir: &Path, stem: &str, report: &EvalReport) -> Result<()> {
    write_json(&dir.join(format!("{stem}.json")), report)?;
    fs::write(dir.join(format!("{stem}.txt")), report.to_text())?;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub output_dir: PathBuf,
    pub generator: EvalReport,
    pub discriminator: Option<EvalReport>,
    pub best_round: usize,
}

/// Trains according to `config` and writes the run directory.
pub fn cmd_train(config: &RunConfig) -> Result<TrainSummary> {
    config.validate()?;
    let resolved = config.resolved();
    let loaded = load_dataset(&config.dataset, config.format, config.skip_id_column)?;
    let ds = &loaded.dataset;
    let (train_idx, test_idx) = split_indices(ds.len(), config.test_fraction, config.split_seed)?;
    let train_ds = ds.subset(&train_idx)?;
    let test_ds = ds.subset(&test_idx)?;

    let out = &config.output_dir;
    fs::create_dir_all(out)?;
    fs::write(out.join("config.toml"), resolved.to_toml()?)?;
    write_json(
        &out.join("split.json"),
        &SplitManifest {
            input_sha256: loaded.sha256.clone(),
            test_fraction: config.test_fraction,
            seed: config.split_seed,
            train: train_idx,
            test: test_idx,
        },
    )?;
    write_json(
        &out.join("manifest.json"),
        &RunManifest {
            crate_version: env!("CARGO_PKG_VERSION").into(),
            dataset: config.dataset.clone(),
            input_sha256: loaded.sha256.clone(),
            split_seed: config.split_seed,
            seed: config.train.seed,
            eval_seed: config.train.eval_seed,
            config: resolved.clone(),
        },
    )?;

    let mut recorder = RunRecorder {
        dir: out.clone(),
        catalog: ds.catalog().clone(),
        log: BufWriter::new(File::create(out.join("log.jsonl"))?),
    };
    info!(
        "training {} on {} train / {} test baskets",
        config.train.objective.as_str(),
        train_ds.len(),
        test_ds.len()
    );
    let outcome = train_with_observer(&train_ds, &test_ds, &resolved.train, &mut recorder)?;

    save_models(&out.join("final"), &outcome.state, ds.catalog())?;
    write_report(out, "report-generator", &outcome.generator_report)?;
    if let Some(d) = &outcome.discriminator_report {
        write_report(out, "report-discriminator", d)?;
    }
    if let Some((g, d)) = &outcome.pretrain_reports {
        write_report(out, "pretrain-report-generator", g)?;
        write_report(out, "pretrain-report-discriminator", d)?;
    }
    Ok(TrainSummary {
        output_dir: out.clone(),
        generator: outcome.generator_report,
        discriminator: outcome.discriminator_report,
        best_round: outcome.best_round,
    })
}

#[derive(Debug, Clone, Default)]
pub struct EvalArgs {
    pub run_dir: PathBuf,
    /// Directory holding `generator.snap` (and maybe `discriminator.snap`);
    /// defaults to `<run_dir>/final`.
    pub checkpoint: Option<PathBuf>,
    pub ks: Option<Vec<usize>>,
    pub exclude_context: bool,
}

/// Scores the test split of a run with every model found in a checkpoint.
/// Writes `eval-<scorer>.{json,txt}` into the checkpoint directory.
pub fn cmd_eval(args: &EvalArgs) -> Result<Vec<EvalReport>> {
    let text = fs::read_to_string(args.run_dir.join("config.toml"))
        .map_err(|e| Error::Data(format!("{}: {e}", args.run_dir.display())))?;
    let config = RunConfig::from_toml(&text)?;
    let split: SplitManifest = read_json(&args.run_dir.join("split.json"))?;
    let loaded = load_dataset(&config.dataset, config.format, config.skip_id_column)?;
    if loaded.sha256 != split.input_sha256 {
        return Err(Error::Data(format!(
            "{} changed since the run was split",
            config.dataset.display()
        )));
    }
    let test_ds = loaded.dataset.subset(&split.test)?;
    let instances = test_instances(&test_ds, &config.train);
    let ks = args.ks.clone().unwrap_or_else(|| config.train.eval_ks.clone());
    let options = EvalOptions {
        exclude_context: args.exclude_context,
    };

    let dir = args.checkpoint.clone().unwrap_or_else(|| args.run_dir.join("final"));
    let mut reports = Vec::new();
    for role in [Role::Generator, Role::Discriminator] {
        let path = dir.join(format!("{role}.snap"));
        if role == Role::Discriminator && !path.exists() {
            continue;
        }
        let (model, catalog): (EmbeddingModel, _) = snapshot::load(&path)?;
        if &catalog != loaded.dataset.catalog() {
            return Err(Error::CatalogMismatch(format!(
                "{} was trained on a different catalog",
                path.display()
            )));
        }
        let report = evaluate(&model, &instances, &ks, options)?;
        write_report(&dir, &format!("eval-{role}"), &report)?;
        reports.push(report);
    }
    Ok(reports)
}

/// Renders a Method | Precision@1 | MPR table plus paired deltas of every
/// report against the first one.
pub fn cmd_compare(reports: &[(String, PathBuf)], resamples: usize, seed: u64) -> Result<String> {
    if reports.is_empty() {
        return Err(Error::InvalidInput("nothing to compare".into()));
    }
    let loaded = reports
        .iter()
        .map(|(name, path)| read_json::<EvalReport>(path).map(|r| (name.clone(), r)))
        .collect::<Result<Vec<_>>>()?;
    let rows: Vec<(&str, &EvalReport)> = loaded.iter().map(|(n, r)| (n.as_str(), r)).collect();
    let mut out = render_table(&rows, resamples, seed);

    let (base_name, base) = &loaded[0];
    for (name, report) in &loaded[1..] {
        let c = compare_reports(base, report, resamples, seed)?;
        out.push_str(&format!(
            "\n{name} - {base_name}: MPR {:+.2} [{:+.2}, {:+.2}]",
            c.delta_mpr.estimate, c.delta_mpr.lo, c.delta_mpr.hi
        ));
        for (k, i) in &c.delta_precision {
            out.push_str(&format!(
                "  P@{k} {:+.2} [{:+.2}, {:+.2}]",
                100.0 * i.estimate,
                100.0 * i.lo,
                100.0 * i.hi
            ));
        }
        out.push('\n');
    }
    Ok(out)
}
