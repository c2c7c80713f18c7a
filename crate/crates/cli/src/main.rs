use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use lonecorp_core::annotation::{load_tasks, TaskBoard};
use lonecorp_core::corpus::contamination_audit;
use lonecorp_core::harness::{self, CauseAxis, MergeStrategy};
use lonecorp_core::service::{self, ServiceState};
use lonecorp_core::{jsonl, GoldFile, Pipeline, Population, RunConfig, Stage, Task};

#[derive(Parser)]
#[command(name = "lonecorp", version, about = "Build and evaluate population-specific loneliness corpora")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Run configuration (TOML).
    #[arg(long, short)]
    config: PathBuf,
    /// Recompute the stage and everything downstream of it.
    #[arg(long)]
    force: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Read raw JSON Lines records into the corpus store.
    Ingest(RunArgs),
    /// Draw the configured stratified sample.
    Sample(RunArgs),
    /// Apply token-length and keyword prefilters.
    Prefilter(RunArgs),
    /// Screen posts for population relevance.
    Relevance(RunArgs),
    /// Judge the fifteen loneliness items.
    Evaluate(RunArgs),
    /// Apply the score threshold.
    Gate(RunArgs),
    /// Categorize loneliness causes.
    Causes(RunArgs),
    /// Extract caregiver and patient demographics.
    Demographics(RunArgs),
    /// Run every stage in order, then write reports.
    Run(RunArgs),
    /// Write reports and the run manifest.
    Report {
        #[arg(long, short)]
        config: PathBuf,
    },
    /// Export pipeline outputs for one task as a gold-format file.
    Export {
        #[arg(long, short)]
        config: PathBuf,
        #[arg(long)]
        task: String,
        #[arg(long, default_value = "pipeline")]
        annotator: String,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Score predictions against a gold file.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gold: PathBuf,
        /// Cause matching axis.
        #[arg(long, value_enum, default_value_t = Axis::TypeOnly)]
        axis: Axis,
    },
    /// Cohen's kappa between two annotators.
    Kappa {
        a: PathBuf,
        b: PathBuf,
    },
    /// Merge several annotators' files into one gold file.
    MergeGold {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long, value_enum, default_value_t = Strategy::PriorityOrder)]
        strategy: Strategy,
        #[arg(long)]
        adjudications: Option<PathBuf>,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Draw non-caregiver posts as contamination audit tasks.
    Audit {
        #[arg(long, short)]
        config: PathBuf,
        #[arg(long, default_value_t = 100)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Serve the annotation API.
    Serve {
        #[arg(long, short)]
        config: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        /// Bearer token; unauthenticated when unset.
        #[arg(long, env = "LONECORP_TOKEN")]
        token: Option<String>,
        /// Secret used to derive annotator submission tokens.
        #[arg(long, env = "LONECORP_SECRET", default_value = "lonecorp")]
        secret: String,
        /// Tasks to preload (JSON Lines).
        #[arg(long)]
        tasks: Option<PathBuf>,
        /// Persist board state here.
        #[arg(long)]
        state: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Axis {
    TypeOnly,
    TypeAndFlag,
}

#[derive(Clone, Copy, ValueEnum)]
enum Strategy {
    PriorityOrder,
    Adjudicated,
}

fn pipeline(config: &Path) -> Result<Pipeline> {
    let config = RunConfig::load(config).with_context(|| format!("loading {}", config.display()))?;
    Ok(Pipeline::new(config)?)
}

fn parse_task(s: &str) -> Result<Task> {
    Task::parse(s).with_context(|| {
        let names: Vec<_> = Task::ALL.iter().map(|t| t.as_str()).collect();
        format!("unknown task {s:?}; expected one of {}", names.join(", "))
    })
}

fn print_json(value: &impl serde::Serialize) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn stage(args: &RunArgs, stage: Stage) -> Result<()> {
    let p = pipeline(&args.config)?;
    let summary = p.run_stage(stage, args.force)?;
    println!("{summary}");
    Ok(())
}

fn eval(pred: &Path, gold: &Path, axis: Axis) -> Result<()> {
    let pred = GoldFile::load(pred)?;
    let gold = GoldFile::load(gold)?;
    if pred.task != gold.task {
        bail!("task mismatch: predictions are {}, gold is {}", pred.task, gold.task);
    }
    let out = match gold.task {
        Task::Relevance => json!({"task": gold.task, "relevance": harness::relevance_prf(&pred, &gold)?}),
        Task::LonelinessItems => json!({
            "task": gold.task,
            "items": harness::item_accuracy(&pred, &gold)?,
            "confusion": harness::label_confusion(&pred, &gold)?,
        }),
        Task::Causes => {
            let axis = match axis {
                Axis::TypeOnly => CauseAxis::TypeOnly,
                Axis::TypeAndFlag => CauseAxis::TypeAndFlag,
            };
            json!({"task": gold.task, "causes": harness::cause_prf(&pred, &gold, axis)?})
        }
        Task::Demographics => json!({"task": gold.task, "demographics": harness::demographic_accuracy(&pred, &gold)?}),
        Task::Contamination => json!({"task": gold.task, "agreement": harness::cohen_kappa(&pred, &gold)?}),
    };
    print_json(&out)
}

fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::from_default_env())
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    match cli.command {
        Command::Ingest(a) => stage(&a, Stage::Ingest)?,
        Command::Sample(a) => stage(&a, Stage::Sample)?,
        Command::Prefilter(a) => stage(&a, Stage::Prefilter)?,
        Command::Relevance(a) => stage(&a, Stage::Relevance)?,
        Command::Evaluate(a) => stage(&a, Stage::Evaluate)?,
        Command::Gate(a) => stage(&a, Stage::Gate)?,
        Command::Causes(a) => stage(&a, Stage::Causes)?,
        Command::Demographics(a) => stage(&a, Stage::Demographics)?,
        Command::Run(a) => {
            let p = pipeline(&a.config)?;
            for summary in p.run_all(a.force)? {
                println!("{summary}");
            }
            for path in p.report()? {
                println!("wrote {}", path.display());
            }
        }
        Command::Report { config } => {
            for path in pipeline(&config)?.report()? {
                println!("wrote {}", path.display());
            }
        }
        Command::Export {
            config,
            task,
            annotator,
            out,
        } => {
            let task = parse_task(&task)?;
            let posts = pipeline(&config)?.posts();
            let file = GoldFile::from_posts(&posts, task, &annotator)?;
            file.save(&out)?;
            println!("exported {} {task} labels to {}", file.len(), out.display());
        }
        Command::Eval { pred, gold, axis } => eval(&pred, &gold, axis)?,
        Command::Kappa { a, b } => {
            let report = harness::cohen_kappa(&GoldFile::load(&a)?, &GoldFile::load(&b)?)?;
            print_json(&report)?;
        }
        Command::MergeGold {
            inputs,
            strategy,
            adjudications,
            out,
        } => {
            let files = inputs
                .iter()
                .map(|p| GoldFile::load(p).with_context(|| format!("loading {}", p.display())))
                .collect::<Result<Vec<_>>>()?;
            let adjudications = match &adjudications {
                Some(p) => harness::load_adjudications(p)?,
                None => Vec::new(),
            };
            let strategy = match strategy {
                Strategy::PriorityOrder => MergeStrategy::PriorityOrder,
                Strategy::Adjudicated => MergeStrategy::Adjudicated,
            };
            let outcome = harness::merge_gold(&files, strategy, &adjudications)?;
            outcome.gold.save(&out)?;
            println!(
                "merged {} posts ({} overridden, {} adjudicated) into {}",
                outcome.gold.len(),
                outcome.overrides.len(),
                outcome.adjudicated,
                out.display()
            );
        }
        Command::Audit { config, n, seed, out } => {
            let p = pipeline(&config)?;
            let pool: Vec<_> = p
                .posts()
                .into_iter()
                .filter(|post| post.population == Population::NonCaregiver)
                .collect();
            let tasks = contamination_audit(&pool, n, seed, p.config().include_title)?;
            jsonl::write(&out, &tasks)?;
            println!("wrote {} audit tasks to {}", tasks.len(), out.display());
        }
        Command::Serve {
            config,
            addr,
            token,
            secret,
            tasks,
            state,
        } => {
            let p = pipeline(&config)?;
            let mut board = TaskBoard::new(p.posts(), p.config().include_title, secret);
            if let Some(path) = state {
                board = board.with_state_file(path)?;
            }
            if let Some(path) = tasks {
                for task in load_tasks(&path)? {
                    if board.get(&task.task_id).is_err() {
                        board.insert(task)?;
                    }
                }
            }
            if token.is_none() {
                tracing::warn!("no token set; the API is open to anyone who can reach {addr}");
            }
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(service::serve(ServiceState::new(board, token), addr))?;
        }
    }
    Ok(())
}
