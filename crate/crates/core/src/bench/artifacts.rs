//! Step-by-step pipeline over an artifact directory, one call per CLI
//! subcommand. Every step reads what earlier steps wrote, and the train/test
//! split is rederived from the run seed each time.

use std::path::{Path, PathBuf};

use super::config::{load_csv_file, CostConfig, LoadedData};
use super::pipeline::{evaluate_model, train_test_split, ExperimentSpec, Model, RunSeeds};
use super::report::{Report, ReportRow, RunReport};
use super::synthetic::{gen_synthetic, SyntheticSpec};
use crate::attack_graph::SearchMode;
use crate::cost_model::Dataset;
use crate::error::{Error, Result};
use crate::merging::merge_embeddings;
use crate::net::{read_json, write_json, EmbeddingFile, EmbeddingNet};
use crate::training::{train_adversarial, train_bilevel, train_clean, TrainConfig};
use crate::trees::{train_tree_classifier, RowEncoder, TreeClassifier, TreeLearner};

pub const DATA_FILE: &str = "data.csv";
pub const COST_CONFIG_FILE: &str = "cost_config.json";
pub const RESULTS_FILE: &str = "results.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainMode {
    Clean,
    Adv,
    Bilevel,
}

impl TrainMode {
    pub fn name(self) -> &'static str {
        match self {
            Self::Clean => "clean",
            Self::Adv => "adv",
            Self::Bilevel => "bilevel",
        }
    }
}

/// Locations of the table and its cost config; defaults live in the
/// artifact directory.
#[derive(Debug, Clone)]
pub struct DataPaths {
    pub data: PathBuf,
    pub cost_config: PathBuf,
}

impl DataPaths {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            data: dir.join(DATA_FILE),
            cost_config: dir.join(COST_CONFIG_FILE),
        }
    }

    pub fn load(&self) -> Result<LoadedData> {
        for f in [&self.data, &self.cost_config] {
            if !f.is_file() {
                return Err(Error::Config(format!(
                    "{} not found; run gen-synthetic or pass the data files",
                    f.display()
                )));
            }
        }
        load_csv_file(&self.data, &CostConfig::load(&self.cost_config)?)
    }

    /// The training and test portions for a run seed.
    pub fn split(&self, seed: u64, test_fraction: f64) -> Result<(LoadedData, Dataset, Dataset)> {
        let data = self.load()?;
        let (train, test) = train_test_split(&data.dataset, RunSeeds::derive(seed).split, test_fraction)?;
        Ok((data, train, test))
    }
}

/// Writes `data.csv` and `cost_config.json`; returns their paths.
pub fn write_synthetic(dir: &Path, spec: &SyntheticSpec, seed: u64) -> Result<DataPaths> {
    std::fs::create_dir_all(dir)?;
    let s = gen_synthetic(spec, RunSeeds::derive(seed).data)?;
    let paths = DataPaths::in_dir(dir);
    std::fs::write(&paths.data, &s.csv)?;
    std::fs::write(&paths.cost_config, s.config.to_json()?)?;
    Ok(paths)
}

/// Trains a network and writes `net_<mode>.json`; bilevel also writes
/// `embeddings_bilevel.json`. Returns the checkpoint path.
pub fn train_to_dir(
    dir: &Path,
    paths: &DataPaths,
    mode: TrainMode,
    cfg: &TrainConfig,
    seed: u64,
    test_fraction: f64,
) -> Result<PathBuf> {
    let (data, train, _) = paths.split(seed, test_fraction)?;
    let seeds = RunSeeds::derive(seed);
    let cm = &data.cost_model;
    let net = match mode {
        TrainMode::Clean => train_clean(&train, &TrainConfig { seed: seeds.clean, ..cfg.clone() })?.net,
        TrainMode::Adv => train_adversarial(&train, cm, &TrainConfig { seed: seeds.adv, ..cfg.clone() })?.net,
        TrainMode::Bilevel => {
            let out = train_bilevel(&train, cm, &TrainConfig { seed: seeds.bilevel, ..cfg.clone() })?;
            let names = cm.features().iter().map(|f| f.name.clone()).collect();
            let mut file = EmbeddingFile::new(&out.embeddings, names);
            file.cost_config_hash = Some(data.config_hash.clone());
            file.seed = Some(seed);
            file.save(&dir.join("embeddings_bilevel.json"))?;
            out.net
        }
    };
    let path = dir.join(format!("net_{}.json", mode.name()));
    net.save(&path)?;
    Ok(path)
}

/// Merges an embedding file and writes `<stem>_p<P>.json` next to it.
pub fn merge_file(embeddings: &Path, percentile: f64) -> Result<PathBuf> {
    let file = EmbeddingFile::load(embeddings)?;
    let q = file.to_embeddings()?;
    let merged = merge_embeddings(&q, percentile)?;
    let mut out = EmbeddingFile::new(&merged.merged, file.feature_names.clone());
    out.cost_config_hash = file.cost_config_hash.clone();
    out.seed = file.seed;
    let stem = embeddings.file_stem().and_then(|s| s.to_str()).unwrap_or("embeddings");
    let path = embeddings.with_file_name(format!("{stem}_p{percentile:.2}.json"));
    out.save(&path)?;
    Ok(path)
}

/// Fits a tree learner on one-hot rows or on an embedding file and writes
/// `trees_<learner>_<tag>.json`.
pub fn train_trees_to_dir(
    dir: &Path,
    paths: &DataPaths,
    learner: &TreeLearner,
    embeddings: Option<&Path>,
    seed: u64,
    test_fraction: f64,
) -> Result<PathBuf> {
    let (data, train, _) = paths.split(seed, test_fraction)?;
    let (encoder, tag) = match embeddings {
        None => (RowEncoder::one_hot(train.features()), "onehot".to_string()),
        Some(p) => {
            let file = EmbeddingFile::load(p)?;
            if let Some(h) = &file.cost_config_hash {
                if *h != data.config_hash {
                    log::warn!("{} was trained under a different cost config", p.display());
                }
            }
            let stem = p.file_stem().and_then(|s| s.to_str()).unwrap_or("embedded");
            let tag = stem.strip_prefix("embeddings_").unwrap_or(stem).to_string();
            (RowEncoder::embedded(file.to_embeddings()?), tag)
        }
    };
    let learner = match learner {
        TreeLearner::Rf(p) => TreeLearner::Rf(crate::trees::ForestParams {
            seed: RunSeeds::derive(seed).trees,
            ..p.clone()
        }),
        other => other.clone(),
    };
    let clf = train_tree_classifier(&train, encoder, &learner)?;
    let path = dir.join(format!("trees_{}_{tag}.json", learner.name()));
    clf.save(&path)?;
    Ok(path)
}

/// Every model artifact in the directory, by name, in file-name order.
pub fn load_models(dir: &Path) -> Result<Vec<(String, Model)>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    files.sort();
    let mut models = Vec::new();
    for f in files {
        let stem = f.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
        if stem.starts_with("net_") {
            models.push((stem, Model::Net(EmbeddingNet::load(&f)?)));
        } else if let Some(name) = stem.strip_prefix("trees_") {
            models.push((name.to_string(), Model::Trees(TreeClassifier::load(&f)?)));
        }
    }
    Ok(models)
}

/// Evaluates every model in the directory at `eps` and merges the rows into
/// `results.json`, replacing earlier rows for the same model and budget.
pub fn attack_eval_dir(
    dir: &Path,
    paths: &DataPaths,
    eps: f64,
    mode: SearchMode,
    seed: u64,
    test_fraction: f64,
    strict: bool,
) -> Result<Vec<ReportRow>> {
    let (data, _, test) = paths.split(seed, test_fraction)?;
    let models = load_models(dir)?;
    if models.is_empty() {
        return Err(Error::Config(format!("no net_*.json or trees_*.json in {}", dir.display())));
    }
    let mut rows = Vec::new();
    for (name, model) in &models {
        let scorer = model.scorer();
        rows.extend(evaluate_model(name, scorer.as_ref(), &test, &data.cost_model, &[eps], mode, strict)?);
    }
    let results = dir.join(RESULTS_FILE);
    let mut run: RunReport = if results.is_file() {
        read_json(&results)?
    } else {
        RunReport { seed, rows: Vec::new() }
    };
    if run.seed != seed {
        return Err(Error::Config(format!(
            "{} holds results for seed {}, not {seed}",
            results.display(),
            run.seed
        )));
    }
    for row in &rows {
        match run.rows.iter_mut().find(|r| r.model == row.model && r.eps == row.eps) {
            Some(old) => *old = row.clone(),
            None => run.rows.push(row.clone()),
        }
    }
    run.rows.sort_by(|a, b| a.model.cmp(&b.model).then(a.eps.total_cmp(&b.eps)));
    write_json(&results, &run)?;
    Ok(rows)
}

/// Builds a report from `results.json`.
pub fn report_from_dir(dir: &Path, paths: &DataPaths, spec: &ExperimentSpec) -> Result<Report> {
    let results = dir.join(RESULTS_FILE);
    if !results.is_file() {
        return Err(Error::Config(format!("{} not found; run attack-eval first", results.display())));
    }
    let run: RunReport = read_json(&results)?;
    let hash = CostConfig::load(&paths.cost_config)?.hash();
    Report::new(serde_json::to_value(spec)?, hash, vec![run])
}
