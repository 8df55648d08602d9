//! A long-tailed synthetic task: class sizes in the unlabeled pool and the
//! retrieved pool.

use tailfirst::synth::{generate_task, SynthSpec};
use tailfirst::Result;

fn counts(labels: &[usize], k: usize) -> Vec<usize> {
    let mut c = vec![0; k];
    for &y in labels {
        c[y] += 1;
    }
    c
}

fn main() -> Result<()> {
    let spec = SynthSpec { num_classes: 10, pool_size: 1000, tail_exponent: 1.5, ..SynthSpec::default() };
    let task = generate_task(&spec)?;
    let k = spec.num_classes;
    let train = counts(task.train.labels().unwrap(), k);
    let retrieved = counts(task.retrieved.labels().unwrap(), k);
    println!("class  pool  retrieved");
    for c in 0..k {
        println!("{c:>5} {:>5} {:>10}", train[c], retrieved[c]);
    }
    println!("test examples per class: {}", spec.test_per_class);
    Ok(())
}
