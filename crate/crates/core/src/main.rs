use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use tailfirst::cli::{self, RetrieveArgs, RunOverrides};
use tailfirst::{AdaptationKind, CapPolicy, Error, Strategy, SynthSpec};

#[derive(Parser)]
#[command(name = "tailfirst", version, about = "Active-learning simulation on frozen features")]
struct Args {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic long-tailed task.
    Synth {
        #[arg(long, default_value_t = 20)]
        classes: usize,
        #[arg(long, default_value_t = 32)]
        dim: usize,
        #[arg(long, default_value_t = 0.35)]
        spread: f64,
        #[arg(long, default_value_t = 1.0)]
        tail_exponent: f64,
        #[arg(long, default_value_t = 2000)]
        pool_size: usize,
        #[arg(long, default_value_t = 50)]
        test_per_class: usize,
        #[arg(long, default_value_t = 100)]
        retrieved_max: usize,
        #[arg(long, default_value_t = 0.2)]
        domain_gap: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Match captions against class synonyms and cap per class by similarity.
    Retrieve {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        synonyms: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        prototypes: Option<PathBuf>,
        /// Keep at most this many per capped class.
        #[arg(long, conflicts_with_all = ["cap_ratio", "no_cap"])]
        cap: Option<usize>,
        /// Keep this fraction of each capped class.
        #[arg(long, conflicts_with = "no_cap")]
        cap_ratio: Option<f64>,
        /// Cap only the this-many largest classes.
        #[arg(long)]
        top_x: Option<usize>,
        #[arg(long)]
        no_cap: bool,
        #[arg(long)]
        drop_multi_class: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run an experiment config.
    Run {
        config: PathBuf,
        /// Replace the configured seeds; repeatable.
        #[arg(long = "seed")]
        seeds: Vec<u64>,
        #[arg(long)]
        strategy: Option<Strategy>,
        #[arg(long)]
        adaptation: Option<AdaptationKind>,
        #[arg(long, value_enum)]
        rda: Option<Switch>,
        #[arg(long)]
        cap: Option<usize>,
        #[arg(long)]
        rounds: Option<usize>,
        #[arg(long)]
        budget: Option<usize>,
        #[arg(long)]
        allow_tfs_without_rda: bool,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Per-class accuracy matrix from a JSONL report.
    Report {
        jsonl: PathBuf,
        /// Write here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(args: Args) -> tailfirst::Result<()> {
    match args.command {
        Command::Synth {
            classes,
            dim,
            spread,
            tail_exponent,
            pool_size,
            test_per_class,
            retrieved_max,
            domain_gap,
            seed,
            out,
        } => {
            let spec = SynthSpec {
                num_classes: classes,
                dim,
                spread,
                tail_exponent,
                pool_size,
                test_per_class,
                retrieved_max,
                domain_gap,
                seed,
            };
            for p in cli::cmd_synth(&spec, &out)? {
                println!("{}", p.display());
            }
        }
        Command::Retrieve {
            corpus,
            synonyms,
            features,
            prototypes,
            cap,
            cap_ratio,
            top_x,
            no_cap,
            drop_multi_class,
            out,
        } => {
            let cap = match (no_cap, cap, cap_ratio) {
                (true, _, _) => CapPolicy::None,
                (_, _, Some(ratio)) => CapPolicy::Ratio { ratio, top_x },
                (_, Some(cap), _) => CapPolicy::Count { cap, top_x },
                _ => match CapPolicy::default() {
                    CapPolicy::Count { cap, .. } => CapPolicy::Count { cap, top_x },
                    other => other,
                },
            };
            let summary = cli::cmd_retrieve(&RetrieveArgs {
                corpus,
                synonyms,
                features,
                prototypes,
                cap,
                drop_multi_class,
                out,
            })?;
            eprint!("{}", summary.to_tsv());
        }
        Command::Run {
            config,
            seeds,
            strategy,
            adaptation,
            rda,
            cap,
            rounds,
            budget,
            allow_tfs_without_rda,
            out_dir,
        } => {
            let overrides = RunOverrides {
                seeds: (!seeds.is_empty()).then_some(seeds),
                strategy,
                adaptation,
                rda: rda.map(|s| matches!(s, Switch::On)),
                cap,
                rounds,
                budget,
                allow_tfs_without_rda,
                out_dir,
            };
            let out = cli::cmd_run(&config, &overrides)?;
            println!("{}", out.jsonl.display());
            println!("{}", out.summary.display());
        }
        Command::Report { jsonl, out } => {
            let csv = cli::cmd_report(&jsonl, out.as_deref())?;
            if out.is_none() {
                print!("{csv}");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Args::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("error[{}]: {msg}", e.class());
            if matches!(e, Error::Config(_)) {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
