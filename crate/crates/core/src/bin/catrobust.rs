use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use catrobust::attack_graph::SearchMode;
use catrobust::bench::artifacts::{
    attack_eval_dir, merge_file, report_from_dir, train_to_dir, train_trees_to_dir, write_synthetic, DataPaths,
    TrainMode,
};
use catrobust::bench::{emit_report, run_pipeline, DataSource, ExperimentSpec, ReportFormat, SyntheticSpec};
use catrobust::trees::TreeLearner;
use catrobust::{Error, Result};

#[derive(Parser)]
#[command(version, about = "Cost-aware robustness experiments on categorical tabular data")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment spec (JSON); flags below override its training settings.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run seed [default: 1, or the spec's seeds for `run`].
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Artifact directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Dataset CSV (default: <out>/data.csv).
    #[arg(long, global = true)]
    data: Option<PathBuf>,
    /// Cost config JSON (default: <out>/cost_config.json).
    #[arg(long, global = true)]
    cost_config: Option<PathBuf>,
    #[arg(long, global = true)]
    pgd_steps: Option<usize>,
    #[arg(long, global = true)]
    dykstra_steps: Option<usize>,
    #[arg(long, global = true)]
    alpha: Option<f64>,
    #[arg(long, global = true)]
    epochs: Option<usize>,
    #[arg(long, global = true)]
    batch_size: Option<usize>,
    #[arg(long, global = true)]
    theta_steps: Option<usize>,
    #[arg(long, global = true)]
    q_steps: Option<usize>,
    /// Serial attack generation and zeroed timings.
    #[arg(long, global = true)]
    strict: bool,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true, env = "CATROBUST_THREADS", default_value_t = 0)]
    threads: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset and its cost config into the artifact directory.
    GenSynthetic {
        #[arg(long)]
        n_samples: Option<usize>,
    },
    /// Train a network: clean, adversarial, or bilevel (robust embeddings).
    Train {
        #[arg(long, value_enum)]
        mode: Mode,
        /// Training budget in dollars.
        #[arg(long)]
        eps: Option<f64>,
        /// Bilevel only: update the head on adversarial inputs.
        #[arg(long)]
        theta_adv: bool,
    },
    /// Merge nearby embedding columns.
    Merge {
        #[arg(long)]
        percentile: f64,
        /// Default: <out>/embeddings_bilevel.json.
        #[arg(long)]
        embeddings: Option<PathBuf>,
    },
    /// Fit a tree model on one-hot rows or on an embedding file.
    TrainTrees {
        #[arg(long, value_enum)]
        model: TreeKind,
        #[arg(long)]
        embeddings: Option<PathBuf>,
    },
    /// Attack every model in the artifact directory at one budget.
    AttackEval {
        #[arg(long)]
        eps: f64,
        /// Exhaustive cheapest-first search instead of the beam.
        #[arg(long)]
        exact: bool,
    },
    /// Print the accumulated results.
    Report {
        #[arg(long, default_value = "table")]
        format: String,
    },
    /// Run the whole pipeline described by --config.
    Run,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Clean,
    Adv,
    Bilevel,
}

#[derive(Clone, Copy, ValueEnum)]
enum TreeKind {
    Gbs,
    Gbt,
    Rf,
}

fn spec(common: &Common) -> Result<ExperimentSpec> {
    let mut spec = match &common.config {
        Some(p) => ExperimentSpec::load(p)?,
        None => ExperimentSpec::default(),
    };
    for cfg in [&mut spec.train, &mut spec.bilevel] {
        if let Some(v) = common.pgd_steps {
            cfg.pgd.pgd_steps = v;
        }
        if let Some(v) = common.dykstra_steps {
            cfg.pgd.d_steps = v;
        }
        if common.alpha.is_some() {
            cfg.pgd.alpha = common.alpha;
        }
        if let Some(v) = common.epochs {
            cfg.epochs = v;
        }
        if let Some(v) = common.batch_size {
            cfg.batch_size = v;
        }
        if let Some(v) = common.theta_steps {
            cfg.theta_steps = v;
        }
        if let Some(v) = common.q_steps {
            cfg.q_steps = v;
        }
        cfg.parallel &= !common.strict;
    }
    spec.strict_deterministic |= common.strict;
    spec.validate()?;
    Ok(spec)
}

fn run(cli: Cli) -> Result<()> {
    let c = &cli.common;
    let mut spec = spec(c)?;
    let paths = DataPaths {
        data: c.data.clone().unwrap_or_else(|| c.out.join("data.csv")),
        cost_config: c.cost_config.clone().unwrap_or_else(|| c.out.join("cost_config.json")),
    };
    std::fs::create_dir_all(&c.out)?;
    let tf = spec.test_fraction;
    let seed = c.seed.unwrap_or(1);
    match cli.command {
        Command::GenSynthetic { n_samples } => {
            let mut synth = match &spec.data {
                DataSource::Synthetic { spec } => spec.clone(),
                DataSource::Csv { .. } => SyntheticSpec::default(),
            };
            if let Some(n) = n_samples {
                synth.n_samples = n;
            }
            let p = write_synthetic(&c.out, &synth, seed)?;
            println!("wrote {} and {}", p.data.display(), p.cost_config.display());
        }
        Command::Train { mode, eps, theta_adv } => {
            let (mode, mut cfg) = match mode {
                Mode::Clean => (TrainMode::Clean, spec.train.clone()),
                Mode::Adv => (TrainMode::Adv, spec.train.clone()),
                Mode::Bilevel => (TrainMode::Bilevel, spec.bilevel.clone()),
            };
            if let Some(e) = eps {
                cfg.pgd.eps = e;
            }
            cfg.theta_adv |= theta_adv;
            cfg.validate().map_err(|e| Error::Config(e.to_string()))?;
            let path = train_to_dir(&c.out, &paths, mode, &cfg, seed, tf)?;
            println!("wrote {}", path.display());
        }
        Command::Merge { percentile, embeddings } => {
            if !(0.0..=1.0).contains(&percentile) {
                return Err(Error::Config(format!("percentile must lie in [0, 1], got {percentile}")));
            }
            let input = embeddings.unwrap_or_else(|| c.out.join("embeddings_bilevel.json"));
            let path = merge_file(&input, percentile)?;
            println!("wrote {}", path.display());
        }
        Command::TrainTrees { model, embeddings } => {
            let learner = match model {
                TreeKind::Gbs => TreeLearner::default_gbs(),
                TreeKind::Gbt => TreeLearner::default_gbt(),
                TreeKind::Rf => TreeLearner::default_rf(0),
            };
            let path = train_trees_to_dir(&c.out, &paths, &learner, embeddings.as_deref(), seed, tf)?;
            println!("wrote {}", path.display());
        }
        Command::AttackEval { eps, exact } => {
            if !(eps >= 0.0) {
                return Err(Error::Config(format!("eps must be nonnegative, got {eps}")));
            }
            let mode = if exact { SearchMode::Exact } else { spec.attack };
            let rows = attack_eval_dir(&c.out, &paths, eps, mode, seed, tf, spec.strict_deterministic)?;
            for r in rows {
                println!("{:<28} eps {:<6} clean {:.4} robust {:.4}", r.model, r.eps, r.clean_acc, r.robust_acc);
            }
        }
        Command::Report { format } => {
            let format: ReportFormat = format.parse()?;
            let report = report_from_dir(&c.out, &paths, &spec)?;
            print!("{}", emit_report(&report, format)?);
        }
        Command::Run => {
            spec.out_dir.get_or_insert_with(|| c.out.clone());
            if c.config.is_none() || c.seed.is_some() {
                spec.seeds = vec![seed];
            }
            let report = run_pipeline(&spec)?;
            print!("{}", emit_report(&report, ReportFormat::Table)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if cli.common.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.common.threads).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ Error::Config(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
