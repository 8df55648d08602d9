//! Writes a feature file and a label file, then loads them back as a pool.

use ndarray::array;
use tailfirst::io::{encode_labels, load_pool, read_features, read_labels, write_atomic, write_features};


fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join("tailfirst_features");
    std::fs::create_dir_all(&dir)?;
    let ids = [7, 3, 42];
    let feats = array![[0.25, -1.0], [1.5, 0.0], [0.0, 2.0]];
    let path = dir.join("pool.alfp");
    write_features(&path, &ids, &feats)?;
    write_atomic(&dir.join("labels.csv"), encode_labels(&ids, &[1, 0, 1]).as_bytes())?;

    let (read_ids, read) = read_features(&path)?;
    println!("{} bytes, ids {read_ids:?}", std::fs::metadata(&path)?.len());
    println!("{read}");

    let labels = read_labels(&dir.join("labels.csv"))?;
    let pool = load_pool(&path, Some(&labels), 2)?;
    println!("pool of {} with labels {:?}", pool.len(), pool.labels());
    Ok(())
}
