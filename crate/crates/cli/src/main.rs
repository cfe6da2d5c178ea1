use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use evigraph_cli::config::parse_override;
use evigraph_cli::pipeline::{self, Split};
use evigraph_cli::{PipelineConfig, PipelineError};

#[derive(Parser)]
#[command(name = "evigraph", version, about = "Evidence graphs for fact verification over text and tables")]
struct Cli {
    /// Pipeline config (TOML). Flags override its keys.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    corpus: Option<PathBuf>,
    #[arg(long, global = true)]
    claims: Option<PathBuf>,
    #[arg(long, global = true)]
    test_claims: Option<PathBuf>,
    /// Output directory for artifacts.
    #[arg(short, long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    mode: Option<ModeArg>,
    /// Set any config key, e.g. `--set train.steps=200`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Stl,
    Mtl,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Test,
}

#[derive(Subcommand)]
enum Command {
    /// Validate corpus and claims; write the evidence census.
    Ingest,
    /// Linearize every element (or one page, printed to stdout).
    Linearize {
        #[arg(long)]
        page: Option<String>,
    },
    /// Add NEI records to the training claims.
    Augment {
        #[arg(long)]
        reduction: Option<usize>,
        #[arg(long)]
        mutation: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Rank candidate pages per claim.
    Retrieve {
        #[arg(long)]
        k: Option<usize>,
    },
    /// Score evidence and choose graph nodes.
    Select,
    /// Encode selected nodes into evidence graphs.
    BuildGraphs,
    /// Train the reasoner and save the selected checkpoint.
    Train {
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Predict labels and evidence for the test claims.
    Predict,
    /// Score predictions; prints the metrics JSON.
    Evaluate,
    /// Attention report for one claim.
    Explain {
        #[arg(long)]
        claim: u64,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
        /// Print JSON instead of the text table.
        #[arg(long)]
        json: bool,
    },
    /// Every stage from ingest to evaluate.
    Run,
}

fn push(ov: &mut Vec<(String, toml::Value)>, key: &str, value: toml::Value) {
    ov.push((key.to_string(), value));
}

fn path_value(p: &std::path::Path) -> toml::Value {
    toml::Value::String(p.to_string_lossy().into_owned())
}

fn overrides(cli: &Cli) -> Result<Vec<(String, toml::Value)>, PipelineError> {
    let mut ov = Vec::new();
    for (key, p) in [
        ("corpus", &cli.corpus),
        ("claims", &cli.claims),
        ("test_claims", &cli.test_claims),
        ("output_dir", &cli.out),
    ] {
        if let Some(p) = p {
            push(&mut ov, key, path_value(p));
        }
    }
    if let Some(m) = cli.mode {
        let m = match m {
            ModeArg::Stl => "stl",
            ModeArg::Mtl => "mtl",
        };
        push(&mut ov, "mode", toml::Value::String(m.into()));
    }
    let int = |n: u64| toml::Value::Integer(n as i64);
    match &cli.command {
        Command::Augment {
            reduction,
            mutation,
            seed,
        } => {
            for (key, v) in [
                ("augmentation.reduction", reduction.map(|n| n as u64)),
                ("augmentation.mutation", mutation.map(|n| n as u64)),
                ("augmentation.seed", *seed),
            ] {
                if let Some(v) = v {
                    push(&mut ov, key, int(v));
                }
            }
        }
        Command::Retrieve { k: Some(k) } => push(&mut ov, "retrieval_k", int(*k as u64)),
        Command::Train { steps, lr, seed } => {
            if let Some(s) = steps {
                push(&mut ov, "train.steps", int(*s as u64));
            }
            if let Some(lr) = lr {
                push(&mut ov, "train.learning_rate", toml::Value::Float(*lr));
            }
            if let Some(s) = seed {
                push(&mut ov, "train.rng_seed", int(*s));
            }
        }
        _ => {}
    }
    // explicit --set entries win over everything else
    for s in &cli.set {
        ov.push(parse_override(s)?);
    }
    Ok(ov)
}

fn execute(cli: &Cli) -> Result<(), PipelineError> {
    let cfg = PipelineConfig::load(cli.config.as_deref(), &overrides(cli)?)?;
    match &cli.command {
        Command::Ingest => {
            let census = pipeline::ingest(&cfg)?;
            eprintln!("{} evidence sets; census written to {}", census.evidence_sets, cfg.output_dir.display());
        }
        Command::Linearize { page: Some(page) } => {
            let store = pipeline::load_store(&cfg, "linearize")?;
            let records =
                pipeline::linearize_records(&store, Some(page)).map_err(|e| PipelineError::data("linearize", e))?;
            for r in records {
                println!("{}", serde_json::to_string(&r).expect("records serialize"));
            }
        }
        Command::Linearize { page: None } => {
            let n = pipeline::linearize_stage(&cfg)?;
            eprintln!("{n} elements linearized");
        }
        Command::Augment { .. } => {
            let claims = pipeline::augment(&cfg)?;
            eprintln!("{} training claims after augmentation", claims.len());
        }
        Command::Retrieve { .. } => pipeline::retrieve(&cfg)?,
        Command::Select => pipeline::select(&cfg)?,
        Command::BuildGraphs => pipeline::build_graphs(&cfg)?,
        Command::Train { .. } => {
            let step = pipeline::train(&cfg)?;
            eprintln!("selected checkpoint from step {step}");
        }
        Command::Predict => {
            let preds = pipeline::predict(&cfg)?;
            eprintln!("{} predictions", preds.len());
        }
        Command::Evaluate => {
            let report = pipeline::evaluate(&cfg)?;
            println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
        }
        Command::Explain { claim, split, json } => {
            let split = match split {
                SplitArg::Train => Split::Train,
                SplitArg::Test => Split::Test,
            };
            let report = pipeline::explain(&cfg, *claim, split)?;
            if *json {
                println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
            } else {
                print!("{report}");
            }
        }
        Command::Run => {
            let summary = pipeline::run_pipeline(&cfg)?;
            println!("{}", serde_json::to_string_pretty(&summary.metrics).expect("report serializes"));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
