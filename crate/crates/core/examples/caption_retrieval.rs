//! Matches captions to class synonyms, then caps the dominant class by
//! keeping the examples closest to its prototype.

use ndarray::array;
use tailfirst::retrieval::{cap_retrieved, match_captions, mean_prototypes};
use tailfirst::{CapPolicy, CaptionCorpus, FeaturePool, Result, SynonymTable};

fn main() -> Result<()> {
    let corpus = CaptionCorpus::new(vec![
        (1, "A tabby cat on a sofa".into()),
        (2, "two cats asleep".into()),
        (3, "a dog chasing a cat".into()),
        (4, "puppy in the snow".into()),
        (5, "a black cat".into()),
        (6, "concatenate this".into()),
    ])?;
    let names = SynonymTable::new(vec![
        ("cat".into(), vec!["cat".into(), "cats".into()]),
        ("dog".into(), vec!["dog".into(), "puppy".into()]),
    ])?;

    let matched = match_captions(&corpus, &names);
    for k in 0..names.num_classes() {
        println!("{:>4}: {:?}", names.names()[k], matched.class(k));
    }

    let features = FeaturePool::new(
        vec![1, 2, 3, 4, 5, 6],
        array![[1.0, 0.1], [0.9, 0.2], [0.5, 0.5], [0.1, 1.0], [0.2, 0.9], [0.0, 0.0]],
        None,
        2,
    )?;
    let protos = mean_prototypes(&matched, &features)?;
    let capped = cap_retrieved(
        &matched,
        &features,
        &protos,
        &CapPolicy::Count { cap: 2, top_x: Some(1) },
    )?;
    println!("after capping the largest class to 2:");
    for k in 0..names.num_classes() {
        println!("{:>4}: {:?}", names.names()[k], capped.class(k));
    }
    Ok(())
}
