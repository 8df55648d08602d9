//! The round-based protocol for a few strategies, averaged over seeds.

use tailfirst::harness::summarize;
use tailfirst::synth::{generate_task, SynthSpec};
use tailfirst::{run_experiment, ExperimentConfig, Result, Strategy, TaskData};

fn main() -> Result<()> {
    let task: TaskData = generate_task(&SynthSpec::default())?.into();
    for strategy in [Strategy::Random, Strategy::Entropy, Strategy::Tfs] {
        let cfg = ExperimentConfig { strategy, budget: Some(20), ..ExperimentConfig::default() };
        let records = run_experiment(&cfg, &task)?;
        let line: Vec<String> = summarize(&records)
            .iter()
            .map(|s| format!("{:.3}", s.macro_f1_mean))
            .collect();
        println!("{strategy:>8} macro-F1 by round: {}", line.join(" "));
    }
    Ok(())
}
