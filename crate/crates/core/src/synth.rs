//! Synthetic long-tailed tasks on the unit sphere.
//!
//! Class means are uniform on the sphere; an example of class `c` is
//! `normalize(mean_c + spread * z)` with `z ~ N(0, I_d)`. Train-pool class sizes follow `(c + 1)^-gamma`; the
//! test pool is balanced; the retrieved pool is drawn around shifted means
//! `normalize(mean_c + gap * offset_c)` where `offset_c` is a fixed random
//! unit vector per class.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use rand_chacha::ChaCha8Rng;

use crate::data::{l2_normalize, FeaturePool};
use crate::error::{Error, Result};
use crate::seed::{self, Stream};

pub const TEST_ID_BASE: u64 = 1 << 40;
pub const RETRIEVED_ID_BASE: u64 = 2 << 40;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub num_classes: usize,
    pub dim: usize,
    pub spread: f64,
    pub tail_exponent: f64,
    pub pool_size: usize,
    pub test_per_class: usize,
    pub retrieved_max: usize,
    pub domain_gap: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            num_classes: 20,
            dim: 32,
            spread: 0.35,
            tail_exponent: 1.0,
            pool_size: 2000,
            test_per_class: 50,
            retrieved_max: 100,
            domain_gap: 0.2,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.num_classes < 2 {
            problems.push("num_classes must be >= 2".to_string());
        }
        if self.dim < 2 {
            problems.push("dim must be >= 2".to_string());
        }
        for (name, v) in [
            ("spread", self.spread),
            ("tail_exponent", self.tail_exponent),
            ("domain_gap", self.domain_gap),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                problems.push(format!("{name} must be a non-negative number, got {v}"));
            }
        }
        for (name, v) in [
            ("pool_size", self.pool_size),
            ("test_per_class", self.test_per_class),
            ("retrieved_max", self.retrieved_max),
        ] {
            if v == 0 {
                problems.push(format!("{name} must be >= 1"));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }
}

/// Generated train/test/retrieved pools plus the true class means.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthTask {
    pub train: FeaturePool,
    pub test: FeaturePool,
    pub retrieved: FeaturePool,
    pub prototypes: Array2<f64>,
}

fn tail_weights(num_classes: usize, gamma: f64) -> Vec<f64> {
    (0..num_classes)
        .map(|c| ((c + 1) as f64).powf(-gamma))
        .collect()
}

/// Splits `total` across classes proportionally to `(c + 1)^-gamma`: floor
/// the real-valued quotas, then hand the remainder to the largest fractional
/// parts (ties to the lower class).
pub fn tail_allocation(total: usize, num_classes: usize, gamma: f64) -> Vec<usize> {
    let w = tail_weights(num_classes, gamma);
    let sum: f64 = w.iter().sum();
    let quotas: Vec<f64> = w.iter().map(|wc| total as f64 * wc / sum).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..num_classes).collect();
    order.sort_by(|&a, &b| {
        let fa = quotas[a] - quotas[a].floor();
        let fb = quotas[b] - quotas[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &c in order.iter().take(total.saturating_sub(assigned)) {
        counts[c] += 1;
    }
    counts
}

/// Retrieved-pool sizes: the head class gets `retrieved_max` and the rest
/// decay by the same law, rounded to nearest.
pub fn retrieved_allocation(retrieved_max: usize, num_classes: usize, gamma: f64) -> Vec<usize> {
    tail_weights(num_classes, gamma)
        .iter()
        .map(|w| (retrieved_max as f64 * w).round() as usize)
        .collect()
}

fn unit_vector(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if n > 1e-12 {
            return v.into_iter().map(|a| a / n).collect();
        }
    }
}

fn sample_around(
    rng: &mut ChaCha8Rng,
    center: &[f64],
    spread: f64,
    count: usize,
    out: &mut Vec<f64>,
) {
    for _ in 0..count {
        for &m in center {
            let z: f64 = StandardNormal.sample(rng);
            out.push(m + spread * z);
        }
    }
}

fn build_pool(
    rng: &mut ChaCha8Rng,
    centers: &[Vec<f64>],
    counts: &[usize],
    spread: f64,
    id_base: u64,
    shuffle: bool,
) -> Result<FeaturePool> {
    let dim = centers[0].len();
    let n: usize = counts.iter().sum();
    let mut raw = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for (c, (center, &count)) in centers.iter().zip(counts).enumerate() {
        sample_around(rng, center, spread, count, &mut raw);
        labels.extend(std::iter::repeat_n(c, count));
    }
    let feats = l2_normalize(&Array2::from_shape_vec((n, dim), raw).expect("n x dim"))?;
    // Row order is class-major; shuffling which id each row gets keeps id
    // order (the tie-breaker everywhere) independent of class.
    let mut ids: Vec<u64> = (0..n as u64).map(|i| id_base + i).collect();
    if shuffle {
        ids.shuffle(rng);
    }
    FeaturePool::new(ids, feats, Some(labels), centers.len())
}

/// Generates a task; fully determined by `spec`.
pub fn generate_task(spec: &SynthSpec) -> Result<SynthTask> {
    spec.validate()?;
    let k = spec.num_classes;
    let train_counts = tail_allocation(spec.pool_size, k, spec.tail_exponent);
    let retrieved_counts = retrieved_allocation(spec.retrieved_max, k, spec.tail_exponent);
    if let Some(c) = train_counts.iter().position(|&n| n == 0) {
        return Err(Error::Infeasible(format!(
            "class {c} gets no train examples; raise pool_size or lower tail_exponent"
        )));
    }
    if let Some(c) = retrieved_counts.iter().position(|&n| n == 0) {
        return Err(Error::Infeasible(format!(
            "class {c} gets no retrieved examples; raise retrieved_max or lower tail_exponent"
        )));
    }

    let mut rng = seed::rng(seed::derive(spec.seed, Stream::Synth, 0));
    let means: Vec<Vec<f64>> = (0..k).map(|_| unit_vector(&mut rng, spec.dim)).collect();
    let offsets: Vec<Vec<f64>> = (0..k).map(|_| unit_vector(&mut rng, spec.dim)).collect();
    let shifted: Vec<Vec<f64>> = means
        .iter()
        .zip(&offsets)
        .map(|(m, o)| {
            let v: Vec<f64> = m.iter().zip(o).map(|(a, b)| a + spec.domain_gap * b).collect();
            let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            v.into_iter().map(|a| a / n).collect()
        })
        .collect();

    let train = build_pool(&mut rng, &means, &train_counts, spec.spread, 0, true)?;
    let test = build_pool(
        &mut rng,
        &means,
        &vec![spec.test_per_class; k],
        spec.spread,
        TEST_ID_BASE,
        false,
    )?;
    let retrieved = build_pool(
        &mut rng,
        &shifted,
        &retrieved_counts,
        spec.spread,
        RETRIEVED_ID_BASE,
        true,
    )?;
    let prototypes =
        Array2::from_shape_vec((k, spec.dim), means.concat()).expect("k x dim");
    Ok(SynthTask {
        train,
        test,
        retrieved,
        prototypes,
    })
}
