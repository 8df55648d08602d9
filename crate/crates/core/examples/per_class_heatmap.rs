//! Runs a small experiment through the file-based interface and prints the
//! per-class accuracy matrix (classes by round).

use tailfirst::cli::{cmd_report, cmd_run, cmd_synth, RunOverrides};
use tailfirst::synth::SynthSpec;
use tailfirst::Result;

fn main() -> Result<()> {
    let dir = std::env::temp_dir().join("tailfirst_heatmap");
    let spec = SynthSpec { num_classes: 8, pool_size: 600, ..SynthSpec::default() };
    cmd_synth(&spec, &dir)?;
    let config = dir.join("experiment.toml");
    tailfirst::io::write_atomic(
        &config,
        b"[data]\ntrain = \"train.alfp\"\ntest = \"test.alfp\"\nlabels = \"labels.csv\"\n\
          retrieved = \"retrieved.alfp\"\n[harness]\nrounds = 4\n",
    )?;
    let outputs = cmd_run(&config, &RunOverrides::default())?;
    print!("{}", cmd_report(&outputs.jsonl, None)?);
    Ok(())
}
