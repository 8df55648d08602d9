//! Linear probe and cosine prototypes trained on the same few labels.

use tailfirst::harness::evaluate;
use tailfirst::synth::{generate_task, SynthSpec};
use tailfirst::{AdaptedModel, LinearProbe, PrototypeModel, Result, TrainConfig};

fn main() -> Result<()> {
    let task = generate_task(&SynthSpec { seed: 1, ..SynthSpec::default() })?;
    let x = task.retrieved.features();
    let y = task.retrieved.labels().expect("synthetic pools are labeled");
    let k = task.retrieved.num_classes();

    // Retrieved examples sit off the test distribution, so a tighter fit
    // need not transfer.
    let cfg = TrainConfig { lr_head: 1e-2, lr_temperature: 1e-2, ..TrainConfig::default() };
    let heads: [(&str, AdaptedModel); 2] = [
        ("linear probe", LinearProbe::zeros(k, x.ncols()).into()),
        ("prototypes", PrototypeModel::from_class_means(x, y, k, 0.07)?.into()),
    ];
    for (name, head) in heads {
        let before = evaluate(&head, &task.test)?;
        let trained = head.train(x, y, &cfg)?;
        let after = evaluate(&trained, &task.test)?;
        println!(
            "{name:>12}: loss {:.4} -> {:.4}, test accuracy {:.4} -> {:.4}",
            head.loss(x, y)?,
            trained.loss(x, y)?,
            before.accuracy,
            after.accuracy
        );
    }
    Ok(())
}
