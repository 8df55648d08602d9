//! Active-learning simulation on frozen features: caption-based retrieval
//! augmentation, tail-first sampling and lightweight head adaptation.
//!
//! Runnable entry points live under `examples/`:
//!
//! * `caption_retrieval`: synonym matching and similarity-ranked capping
//! * `tail_first_sampling`: one selection step, oracle and pseudo-label counts
//! * `baseline_strategies`: random, entropy, coreset, BADGE and PCB side by side
//! * `adapt_heads`: linear probe vs cosine prototypes on a synthetic task
//! * `long_tail_synth`: generating a long-tailed task and its retrieved pool
//! * `full_experiment`: the round-based protocol over several seeds
//! * `per_class_heatmap`: per-class accuracy matrix from a run report
//! * `feature_files`: reading and writing the binary feature format

pub mod adapt;
pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod harness;
pub mod io;
pub mod retrieval;
pub mod seed;
pub mod strategies;
pub mod synth;

pub use adapt::{AdaptationKind, AdaptedModel, LinearProbe, PrototypeModel, TrainConfig};
pub use data::{ClassDistribution, FeaturePool, LabelLedger, LabelStatus, RoundRecord};
pub use error::{Error, Result};
pub use harness::{run_experiment, run_seed, ExperimentConfig, TaskData};
pub use retrieval::{CapPolicy, CaptionCorpus, RetrievedSet, SynonymTable};
pub use strategies::{CountUpdate, SelectionRequest, Strategy, StrategyConfig};
pub use synth::{generate_task, SynthSpec, SynthTask};
