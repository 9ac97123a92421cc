//! Experiment specification and the staged pipeline that turns it into a
//! [`Report`].

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{load_csv_file, CostConfig, LoadedData};
use super::report::{emit_report, Report, ReportFormat, ReportRow, RunReport};
use super::synthetic::{gen_synthetic, SyntheticSpec};
use crate::attack_graph::{clean_accuracy, robust_accuracy_curve, NetScorer, Scorer, SearchMode, TreeScorer};
use crate::cost_model::{balance_undersample, CostModel, Dataset};
use crate::error::{Error, Result};
use crate::merging::merge_embeddings;
use crate::net::{EmbeddingFile, EmbeddingNet, EmbeddingSet};
use crate::training::{train_adversarial, train_bilevel, train_clean, TrainConfig};
use crate::trees::{train_tree_classifier, RowEncoder, TreeClassifier, TreeLearner};

/// Budget used for training and as the headline evaluation point.
pub const DEFAULT_EPS: f64 = 5.0;

/// Evaluation budgets in dollars.
pub const EPS_GRID: [f64; 11] = [0.1, 0.2, 0.3, 0.5, 1.0, 3.0, 5.0, 10.0, 30.0, 50.0, 100.0];

/// Merging percentiles of the ablation.
pub const MERGE_PERCENTILES: [f64; 3] = [0.05, 0.1, 0.15];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Clean,
    Adv,
    Bilevel,
    Merge,
    Trees,
    AttackEval,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    Synthetic {
        #[serde(default)]
        spec: SyntheticSpec,
    },
    Csv {
        path: PathBuf,
        cost_config: PathBuf,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    pub data: DataSource,
    pub stages: Vec<Stage>,
    /// Ascending evaluation budgets.
    pub eps_grid: Vec<f64>,
    pub seeds: Vec<u64>,
    /// Where checkpoints, embeddings, tree models and reports go.
    pub out_dir: Option<PathBuf>,
    pub test_fraction: f64,
    /// Clean and adversarial training.
    pub train: TrainConfig,
    pub bilevel: TrainConfig,
    pub percentiles: Vec<f64>,
    pub tree_learners: Vec<TreeLearner>,
    /// Also fit trees on random embeddings, merged at the same percentiles.
    pub random_baseline: bool,
    pub attack: SearchMode,
    /// Serial attack generation and zeroed timings, so reruns are byte-identical.
    pub strict_deterministic: bool,
}

fn benchmark_train_config() -> TrainConfig {
    let mut cfg = TrainConfig {
        epochs: 10,
        lr_theta: 0.2,
        lr_q: 0.2,
        ..TrainConfig::default()
    };
    cfg.pgd.eps = DEFAULT_EPS;
    cfg.pgd.alpha = Some(5.0);
    cfg
}

fn benchmark_bilevel_config() -> TrainConfig {
    TrainConfig {
        epochs: 20,
        lr_q: 0.5,
        q_steps: 2,
        ..benchmark_train_config()
    }
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            data: DataSource::Synthetic {
                spec: SyntheticSpec::default(),
            },
            stages: vec![
                Stage::Clean,
                Stage::Adv,
                Stage::Bilevel,
                Stage::Merge,
                Stage::Trees,
                Stage::AttackEval,
            ],
            eps_grid: EPS_GRID.to_vec(),
            seeds: vec![1, 2, 3],
            out_dir: None,
            test_fraction: 0.2,
            train: benchmark_train_config(),
            bilevel: benchmark_bilevel_config(),
            percentiles: MERGE_PERCENTILES.to_vec(),
            tree_learners: vec![TreeLearner::default_gbs()],
            random_baseline: true,
            attack: SearchMode::default(),
            strict_deterministic: false,
        }
    }
}

impl ExperimentSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text).map_err(|e| Error::Config(format!("experiment spec: {e}")))?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read experiment spec {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let config = |msg: String| Err(Error::Config(msg));
        if self.seeds.is_empty() {
            return config("at least one seed is required".into());
        }
        if self.eps_grid.iter().any(|e| !(*e >= 0.0)) || self.eps_grid.windows(2).any(|w| w[0] >= w[1]) {
            return config(format!("eps grid must be nonnegative and strictly ascending: {:?}", self.eps_grid));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return config(format!("test fraction must lie in (0, 1), got {}", self.test_fraction));
        }
        if self.percentiles.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return config("percentiles must lie in [0, 1]".into());
        }
        if let DataSource::Csv { path, cost_config } = &self.data {
            for f in [path, cost_config] {
                if !f.is_file() {
                    return config(format!("referenced file {} does not exist", f.display()));
                }
            }
        }
        for (i, stage) in self.stages.iter().enumerate() {
            let before = &self.stages[..i];
            if before.contains(stage) {
                return config(format!("stage {stage:?} listed twice"));
            }
            let missing = match stage {
                Stage::Merge => !before.contains(&Stage::Bilevel),
                Stage::AttackEval => !before
                    .iter()
                    .any(|s| matches!(s, Stage::Clean | Stage::Adv | Stage::Bilevel | Stage::Trees)),
                _ => false,
            };
            if missing {
                return config(format!("stage {stage:?} needs an earlier stage that produces its input"));
            }
        }
        if self.stages.contains(&Stage::Trees) && self.tree_learners.is_empty() {
            return config("trees stage without any tree learner".into());
        }
        self.train.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.bilevel.validate().map_err(|e| Error::Config(e.to_string()))
    }
}

/// Independent seeds for each random step of one run, all drawn from the run
/// seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunSeeds {
    pub data: u64,
    pub split: u64,
    pub clean: u64,
    pub adv: u64,
    pub bilevel: u64,
    pub random_embeddings: u64,
    pub trees: u64,
}

impl RunSeeds {
    pub fn derive(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            data: rng.gen(),
            split: rng.gen(),
            clean: rng.gen(),
            adv: rng.gen(),
            bilevel: rng.gen(),
            random_embeddings: rng.gen(),
            trees: rng.gen(),
        }
    }
}

/// Loads or generates the table. Synthetic sources also return the CSV text
/// and cost config so they can be written out.
pub fn load_data(source: &DataSource, seed: u64) -> Result<(LoadedData, Option<(String, CostConfig)>)> {
    match source {
        DataSource::Synthetic { spec } => {
            let s = gen_synthetic(spec, seed)?;
            Ok((s.data, Some((s.csv, s.config))))
        }
        DataSource::Csv { path, cost_config } => {
            let cfg = CostConfig::load(cost_config)?;
            Ok((load_csv_file(path, &cfg)?, None))
        }
    }
}

/// Balances the classes by undersampling and splits off a test set.
pub fn train_test_split(dataset: &Dataset, seed: u64, test_fraction: f64) -> Result<(Dataset, Dataset)> {
    let balanced = balance_undersample(dataset, seed)?;
    Ok(balanced.split(1.0 - test_fraction, seed))
}

pub enum Model {
    Net(EmbeddingNet),
    Trees(TreeClassifier),
}

impl Model {
    pub fn scorer(&self) -> Box<dyn Scorer + '_> {
        match self {
            Self::Net(n) => Box::new(NetScorer(n)),
            Self::Trees(t) => Box::new(TreeScorer(t)),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        match self {
            Self::Net(n) => n.save(path),
            Self::Trees(t) => t.save(path),
        }
    }
}

/// Clean accuracy and the robust-accuracy curve of one model on `test`.
pub fn evaluate_model(
    name: &str,
    scorer: &dyn Scorer,
    test: &Dataset,
    cost_model: &CostModel,
    eps_grid: &[f64],
    mode: SearchMode,
    strict: bool,
) -> Result<Vec<ReportRow>> {
    let clean_acc = clean_accuracy(test, &scorer);
    let start = Instant::now();
    let curve = robust_accuracy_curve(test, &scorer, cost_model, eps_grid, mode, !strict)?;
    let per_eps = if strict || eps_grid.is_empty() {
        0.0
    } else {
        start.elapsed().as_secs_f64() / eps_grid.len() as f64
    };
    Ok(eps_grid
        .iter()
        .zip(curve)
        .map(|(&eps, robust_acc)| ReportRow {
            model: name.to_string(),
            eps,
            clean_acc,
            robust_acc,
            seconds: per_eps,
        })
        .collect())
}

/// Name of a tree model trained on merged embeddings.
pub fn merged_name(base: &str, p: f64) -> String {
    format!("{base}_p{p:.2}")
}

struct RunContext<'a> {
    spec: &'a ExperimentSpec,
    seed: u64,
    dir: Option<PathBuf>,
    config_hash: String,
}

impl RunContext<'_> {
    fn save(&self, file: &str, model: &Model) -> Result<()> {
        match &self.dir {
            Some(dir) => model.save(&dir.join(file)),
            None => Ok(()),
        }
    }

    fn save_embeddings(&self, file: &str, q: &EmbeddingSet, names: Vec<String>) -> Result<()> {
        let Some(dir) = &self.dir else {
            return Ok(());
        };
        let mut f = EmbeddingFile::new(q, names);
        f.cost_config_hash = Some(self.config_hash.clone());
        f.seed = Some(self.seed);
        f.save(&dir.join(file))
    }
}

fn run_seed(spec: &ExperimentSpec, seed: u64) -> Result<(RunReport, String)> {
    let seeds = RunSeeds::derive(seed);
    let strict = spec.strict_deterministic;
    let (data, synthetic) = load_data(&spec.data, seeds.data)?;
    let dir = spec.out_dir.as_ref().map(|d| d.join(format!("seed_{seed}")));
    if let Some(dir) = &dir {
        std::fs::create_dir_all(dir)?;
        if let Some((csv, cfg)) = &synthetic {
            std::fs::write(dir.join("data.csv"), csv)?;
            std::fs::write(dir.join("cost_config.json"), cfg.to_json()?)?;
        }
    }
    let ctx = RunContext {
        spec,
        seed,
        dir,
        config_hash: data.config_hash.clone(),
    };
    let cost_model = &data.cost_model;
    let names: Vec<String> = cost_model.features().iter().map(|f| f.name.clone()).collect();
    let (train, test) = train_test_split(&data.dataset, seeds.split, spec.test_fraction)?;
    let config = |base: &TrainConfig, s: u64| TrainConfig {
        seed: s,
        parallel: base.parallel && !strict,
        ..base.clone()
    };

    let mut models: Vec<(String, Model)> = Vec::new();
    let mut bilevel_q: Option<EmbeddingSet> = None;
    let mut merged: Vec<(f64, EmbeddingSet)> = Vec::new();
    let mut rows = Vec::new();
    for stage in &ctx.spec.stages {
        log::info!("seed {seed}: stage {stage:?}");
        match stage {
            Stage::Clean => {
                let net = Model::Net(train_clean(&train, &config(&spec.train, seeds.clean))?.net);
                ctx.save("net_clean.json", &net)?;
                models.push(("net_clean".into(), net));
            }
            Stage::Adv => {
                let net = Model::Net(train_adversarial(&train, cost_model, &config(&spec.train, seeds.adv))?.net);
                ctx.save("net_adv.json", &net)?;
                models.push(("net_adv".into(), net));
            }
            Stage::Bilevel => {
                let out = train_bilevel(&train, cost_model, &config(&spec.bilevel, seeds.bilevel))?;
                ctx.save_embeddings("embeddings_bilevel.json", &out.embeddings, names.clone())?;
                bilevel_q = Some(out.embeddings);
                let net = Model::Net(out.net);
                ctx.save("net_bilevel.json", &net)?;
                models.push(("net_bilevel".into(), net));
            }
            Stage::Merge => {
                let q = bilevel_q
                    .as_ref()
                    .ok_or_else(|| Error::Config("merge needs bilevel embeddings".into()))?;
                for &p in &spec.percentiles {
                    let m = merge_embeddings(q, p)?;
                    ctx.save_embeddings(&format!("embeddings_bilevel_p{p:.2}.json"), &m.merged, names.clone())?;
                    merged.push((p, m.merged));
                }
            }
            Stage::Trees => {
                let random = spec.random_baseline.then(|| {
                    let cards = train.layout().lengths().to_vec();
                    let mut rng = ChaCha8Rng::seed_from_u64(seeds.random_embeddings);
                    EmbeddingSet::random(&cards, spec.bilevel.embedding_dim, &mut rng)
                });
                let mut inputs: Vec<(String, RowEncoder)> = vec![("onehot".into(), RowEncoder::one_hot(train.features()))];
                if let Some(q) = &bilevel_q {
                    inputs.push(("bilevel".into(), RowEncoder::embedded(q.clone())));
                }
                for (p, q) in &merged {
                    inputs.push((merged_name("bilevel", *p), RowEncoder::embedded(q.clone())));
                }
                if let Some(q) = &random {
                    inputs.push(("random".into(), RowEncoder::embedded(q.clone())));
                    for &p in &spec.percentiles {
                        let m = merge_embeddings(q, p)?;
                        inputs.push((merged_name("random", p), RowEncoder::embedded(m.merged)));
                    }
                }
                for learner in &spec.tree_learners {
                    let learner = match learner {
                        TreeLearner::Rf(params) => TreeLearner::Rf(crate::trees::ForestParams {
                            seed: seeds.trees,
                            ..params.clone()
                        }),
                        other => other.clone(),
                    };
                    for (tag, encoder) in &inputs {
                        let name = format!("{}_{tag}", learner.name());
                        let clf = Model::Trees(train_tree_classifier(&train, encoder.clone(), &learner)?);
                        ctx.save(&format!("trees_{name}.json"), &clf)?;
                        models.push((name, clf));
                    }
                }
            }
            Stage::AttackEval => {
                for (name, model) in &models {
                    let scorer = model.scorer();
                    rows.extend(evaluate_model(
                        name,
                        scorer.as_ref(),
                        &test,
                        cost_model,
                        &spec.eps_grid,
                        spec.attack,
                        strict,
                    )?);
                }
            }
        }
    }
    Ok((RunReport { seed, rows }, data.config_hash))
}

/// Runs every stage for every seed and writes the report files when an
/// output directory is set.
pub fn run_pipeline(spec: &ExperimentSpec) -> Result<Report> {
    spec.validate()?;
    let mut runs = Vec::with_capacity(spec.seeds.len());
    let mut hash = String::new();
    for &seed in &spec.seeds {
        let (run, h) = run_seed(spec, seed)?;
        runs.push(run);
        hash = h;
    }
    let report = Report::new(serde_json::to_value(spec)?, hash, runs)?;
    if let Some(dir) = &spec.out_dir {
        std::fs::create_dir_all(dir)?;
        for (format, file) in [
            (ReportFormat::Json, "report.json"),
            (ReportFormat::Csv, "report.csv"),
            (ReportFormat::Table, "report.txt"),
        ] {
            std::fs::write(dir.join(file), emit_report(&report, format)?)?;
        }
    }
    Ok(report)
}
