//! Model adaptation on frozen features.
//!
//! Two heads are supported: a linear probe (`logits = W x + b`) and a
//! prototype model whose logits are cosine similarities to unit-norm class
//! prototypes divided by a learned temperature. Both are trained with
//! mini-batch AdamW on mean cross-entropy.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::seed;

pub const DEFAULT_TEMPERATURE: f64 = 0.07;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdaptationKind {
    LinearProbe,
    PrototypeCt,
}

impl AdaptationKind {
    pub fn name(self) -> &'static str {
        match self {
            AdaptationKind::LinearProbe => "linear_probe",
            AdaptationKind::PrototypeCt => "prototype_ct",
        }
    }
}

impl fmt::Display for AdaptationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AdaptationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear_probe" | "lp" => Ok(AdaptationKind::LinearProbe),
            "prototype_ct" | "ct" => Ok(AdaptationKind::PrototypeCt),
            other => Err(Error::InvalidInput(format!("unknown adaptation {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr_head: f64,
    pub lr_temperature: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr_head: 1e-4,
            lr_temperature: 1e-4,
            epochs: 50,
            batch_size: 32,
            weight_decay: 1e-2,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !(self.lr_head > 0.0) {
            problems.push(format!("lr_head must be > 0, got {}", self.lr_head));
        }
        if !(self.lr_temperature > 0.0) {
            problems.push(format!("lr_temperature must be > 0, got {}", self.lr_temperature));
        }
        if self.batch_size == 0 {
            problems.push("batch_size must be >= 1".to_string());
        }
        if !(self.weight_decay >= 0.0) {
            problems.push(format!("weight_decay must be >= 0, got {}", self.weight_decay));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }
}

/// Linear classification head.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProbe {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl LinearProbe {
    pub fn zeros(num_classes: usize, dim: usize) -> Self {
        Self {
            weights: Array2::zeros((num_classes, dim)),
            bias: Array1::zeros(num_classes),
        }
    }

    pub fn new(weights: Array2<f64>, bias: Array1<f64>) -> Result<Self> {
        if weights.nrows() != bias.len() {
            return Err(Error::Shape(format!(
                "{} weight rows but {} biases",
                weights.nrows(),
                bias.len()
            )));
        }
        if weights.iter().chain(bias.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite probe parameter".into()));
        }
        Ok(Self {
            weights: weights.as_standard_layout().into_owned(),
            bias,
        })
    }
}

/// Cosine-similarity classifier over unit-norm class prototypes.
#[derive(Debug, Clone, PartialEq)]
pub struct PrototypeModel {
    prototypes: Array2<f64>,
    temperature: f64,
}

impl PrototypeModel {
    /// Normalizes the rows of `prototypes`.
    pub fn new(prototypes: Array2<f64>, temperature: f64) -> Result<Self> {
        if !(temperature > 0.0 && temperature.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "temperature must be positive, got {temperature}"
            )));
        }
        let prototypes = crate::data::l2_normalize(&prototypes)?;
        Ok(Self {
            prototypes,
            temperature,
        })
    }

    /// Prototypes initialized at the normalized mean of each class's examples.
    pub fn from_class_means(
        features: ArrayView2<'_, f64>,
        labels: &[usize],
        num_classes: usize,
        temperature: f64,
    ) -> Result<Self> {
        check_labels(labels, features.nrows(), num_classes)?;
        let mut sums = Array2::<f64>::zeros((num_classes, features.ncols()));
        let mut seen = vec![false; num_classes];
        for (x, &y) in features.rows().into_iter().zip(labels) {
            let mut row = sums.row_mut(y);
            row += &x;
            seen[y] = true;
        }
        if let Some(k) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidInput(format!(
                "class {k} has no examples to initialize its prototype"
            )));
        }
        Self::new(sums, temperature)
    }

    pub fn prototypes(&self) -> ArrayView2<'_, f64> {
        self.prototypes.view()
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    /// Replaces parameters without renormalizing; used by gradient checks.
    pub fn from_raw(prototypes: Array2<f64>, temperature: f64) -> Self {
        Self {
            prototypes: prototypes.as_standard_layout().into_owned(),
            temperature,
        }
    }
}

/// Either adaptation head.
#[derive(Debug, Clone, PartialEq)]
pub enum AdaptedModel {
    Linear(LinearProbe),
    Prototype(PrototypeModel),
}

/// Gradient of the mean cross-entropy in the model's parameter space.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelGradient {
    Linear {
        weights: Array2<f64>,
        bias: Array1<f64>,
    },
    Prototype {
        prototypes: Array2<f64>,
        temperature: f64,
    },
}

impl ModelGradient {
    pub fn max_abs(&self) -> f64 {
        let fold = |a: f64, v: &f64| a.max(v.abs());
        match self {
            ModelGradient::Linear { weights, bias } => {
                weights.iter().chain(bias.iter()).fold(0.0, fold)
            }
            ModelGradient::Prototype {
                prototypes,
                temperature,
            } => prototypes.iter().fold(temperature.abs(), fold),
        }
    }
}

impl From<LinearProbe> for AdaptedModel {
    fn from(m: LinearProbe) -> Self {
        AdaptedModel::Linear(m)
    }
}

impl From<PrototypeModel> for AdaptedModel {
    fn from(m: PrototypeModel) -> Self {
        AdaptedModel::Prototype(m)
    }
}

fn check_labels(labels: &[usize], n: usize, num_classes: usize) -> Result<()> {
    if labels.len() != n {
        return Err(Error::Shape(format!("{} labels for {n} rows", labels.len())));
    }
    match labels.iter().find(|&&y| y >= num_classes) {
        Some(&label) => Err(Error::InvalidLabel { label, num_classes }),
        None => Ok(()),
    }
}

/// In-place softmax; returns log-sum-exp of the input.
fn softmax_in_place(z: &mut [f64]) -> f64 {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in z.iter_mut() {
        *v /= sum;
    }
    max + sum.ln()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn row_slice<'a>(x: &'a ArrayView1<'_, f64>, buf: &'a mut Vec<f64>) -> &'a [f64] {
    match x.as_slice() {
        Some(s) => s,
        None => {
            buf.clear();
            buf.extend(x.iter().copied());
            buf
        }
    }
}

impl AdaptedModel {
    pub fn num_classes(&self) -> usize {
        match self {
            AdaptedModel::Linear(m) => m.weights.nrows(),
            AdaptedModel::Prototype(m) => m.prototypes.nrows(),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            AdaptedModel::Linear(m) => m.weights.ncols(),
            AdaptedModel::Prototype(m) => m.prototypes.ncols(),
        }
    }

    pub fn kind(&self) -> AdaptationKind {
        match self {
            AdaptedModel::Linear(_) => AdaptationKind::LinearProbe,
            AdaptedModel::Prototype(_) => AdaptationKind::PrototypeCt,
        }
    }

    /// Writes the logits of one example into `out`.
    fn logits_into(&self, x: &[f64], out: &mut [f64]) {
        match self {
            AdaptedModel::Linear(m) => {
                let w = m.weights.as_slice().expect("standard layout");
                let d = x.len();
                for (k, o) in out.iter_mut().enumerate() {
                    *o = dot(&w[k * d..(k + 1) * d], x) + m.bias[k];
                }
            }
            AdaptedModel::Prototype(m) => {
                let p = m.prototypes.as_slice().expect("standard layout");
                let d = x.len();
                let nx = norm(x);
                for (k, o) in out.iter_mut().enumerate() {
                    let pk = &p[k * d..(k + 1) * d];
                    let denom = nx * norm(pk);
                    let cos = if denom > 0.0 { dot(pk, x) / denom } else { 0.0 };
                    *o = cos / m.temperature;
                }
            }
        }
    }

    fn check_dim(&self, features: &ArrayView2<'_, f64>) -> Result<()> {
        if features.ncols() != self.dim() {
            return Err(Error::Shape(format!(
                "features have dimension {}, model expects {}",
                features.ncols(),
                self.dim()
            )));
        }
        Ok(())
    }

    /// Raw logits, `n x K`.
    pub fn logits(&self, features: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        self.check_dim(&features)?;
        let k = self.num_classes();
        let mut out = Array2::zeros((features.nrows(), k));
        let mut buf = Vec::new();
        for (x, mut o) in features.rows().into_iter().zip(out.rows_mut()) {
            let xs = row_slice(&x, &mut buf);
            self.logits_into(xs, o.as_slice_mut().expect("owned row"));
        }
        Ok(out)
    }

    /// Row-stochastic class probabilities, `n x K`.
    pub fn predict_proba(&self, features: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let mut out = self.logits(features)?;
        for mut row in out.rows_mut() {
            softmax_in_place(row.as_slice_mut().expect("owned row"));
        }
        Ok(out)
    }

    /// Mean cross-entropy and its gradient over a batch.
    pub fn loss_and_grad(
        &self,
        features: ArrayView2<'_, f64>,
        labels: &[usize],
    ) -> Result<(f64, ModelGradient)> {
        let rows: Vec<usize> = (0..features.nrows()).collect();
        self.batch_loss_and_grad(&features, labels, None, &rows)
    }

    pub fn loss(&self, features: ArrayView2<'_, f64>, labels: &[usize]) -> Result<f64> {
        self.loss_and_grad(features, labels).map(|(l, _)| l)
    }

    /// Weighted mean cross-entropy over `rows` of `features`, summed in row order.
    fn batch_loss_and_grad(
        &self,
        features: &ArrayView2<'_, f64>,
        labels: &[usize],
        weights: Option<&[f64]>,
        rows: &[usize],
    ) -> Result<(f64, ModelGradient)> {
        if rows.is_empty() {
            return Err(Error::InvalidInput("empty batch".into()));
        }
        self.check_dim(features)?;
        let k = self.num_classes();
        let d = self.dim();
        if let Some(&label) = rows.iter().map(|&r| &labels[r]).find(|&&y| y >= k) {
            return Err(Error::InvalidLabel {
                label,
                num_classes: k,
            });
        }
        let total_weight: f64 = match weights {
            Some(w) => rows.iter().map(|&r| w[r]).sum(),
            None => rows.len() as f64,
        };
        if !(total_weight > 0.0) {
            return Err(Error::InvalidInput("batch has zero total weight".into()));
        }

        let mut z = vec![0.0; k];
        let mut buf = Vec::new();
        let mut loss = 0.0;
        match self {
            AdaptedModel::Linear(_) => {
                let mut gw = vec![0.0; k * d];
                let mut gb = vec![0.0; k];
                for &r in rows {
                    let xv = features.row(r);
                    let x = row_slice(&xv, &mut buf);
                    let y = labels[r];
                    let scale = weights.map_or(1.0, |w| w[r]) / total_weight;
                    self.logits_into(x, &mut z);
                    let zy = z[y];
                    let lse = softmax_in_place(&mut z);
                    loss += scale * (lse - zy);
                    z[y] -= 1.0;
                    for c in 0..k {
                        let g = scale * z[c];
                        gb[c] += g;
                        for (gwj, xj) in gw[c * d..(c + 1) * d].iter_mut().zip(x) {
                            *gwj += g * xj;
                        }
                    }
                }
                Ok((
                    loss,
                    ModelGradient::Linear {
                        weights: Array2::from_shape_vec((k, d), gw).expect("k x d"),
                        bias: Array1::from(gb),
                    },
                ))
            }
            AdaptedModel::Prototype(m) => {
                let p = m.prototypes.as_slice().expect("standard layout");
                let t = m.temperature;
                let pnorms: Vec<f64> = (0..k).map(|c| norm(&p[c * d..(c + 1) * d])).collect();
                let mut gp = vec![0.0; k * d];
                let mut gt = 0.0;
                let mut cos = vec![0.0; k];
                for &r in rows {
                    let xv = features.row(r);
                    let x = row_slice(&xv, &mut buf);
                    let y = labels[r];
                    let scale = weights.map_or(1.0, |w| w[r]) / total_weight;
                    let nx = norm(x);
                    for c in 0..k {
                        let denom = nx * pnorms[c];
                        cos[c] = if denom > 0.0 {
                            dot(&p[c * d..(c + 1) * d], x) / denom
                        } else {
                            0.0
                        };
                        z[c] = cos[c] / t;
                    }
                    let zy = z[y];
                    let lse = softmax_in_place(&mut z);
                    loss += scale * (lse - zy);
                    z[y] -= 1.0;
                    if nx == 0.0 {
                        continue;
                    }
                    for c in 0..k {
                        let g = scale * z[c];
                        // dz_c/dt = -cos_c / t^2
                        gt -= g * cos[c] / (t * t);
                        if pnorms[c] == 0.0 {
                            continue;
                        }
                        // dcos/dp = x/(|x||p|) - cos p/|p|^2
                        let a = g / (t * nx * pnorms[c]);
                        let b = g * cos[c] / (t * pnorms[c] * pnorms[c]);
                        let pc = &p[c * d..(c + 1) * d];
                        for ((gpj, xj), pj) in gp[c * d..(c + 1) * d].iter_mut().zip(x).zip(pc) {
                            *gpj += a * xj - b * pj;
                        }
                    }
                }
                Ok((
                    loss,
                    ModelGradient::Prototype {
                        prototypes: Array2::from_shape_vec((k, d), gp).expect("k x d"),
                        temperature: gt,
                    },
                ))
            }
        }
    }

    /// Trains for `cfg.epochs` passes with unit example weights.
    pub fn train(
        &self,
        features: ArrayView2<'_, f64>,
        labels: &[usize],
        cfg: &TrainConfig,
    ) -> Result<AdaptedModel> {
        self.train_weighted(features, labels, None, cfg)
    }

    /// Mini-batch AdamW on weighted mean cross-entropy. The example order is
    /// reshuffled every epoch from a generator seeded by `cfg.seed`.
    pub fn train_weighted(
        &self,
        features: ArrayView2<'_, f64>,
        labels: &[usize],
        weights: Option<&[f64]>,
        cfg: &TrainConfig,
    ) -> Result<AdaptedModel> {
        cfg.validate()?;
        let n = features.nrows();
        if n == 0 {
            return Err(Error::InvalidInput("empty training set".into()));
        }
        self.check_dim(&features)?;
        check_labels(labels, n, self.num_classes())?;
        if let Some(w) = weights {
            if w.len() != n {
                return Err(Error::Shape(format!("{} weights for {n} rows", w.len())));
            }
            if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(Error::InvalidInput("example weights must be finite and >= 0".into()));
            }
        }
        let mut model = self.clone();
        if cfg.epochs == 0 {
            return Ok(model);
        }
        let features = features.as_standard_layout();
        let features = features.view();
        let mut rng = seed::rng(cfg.seed);
        let mut order: Vec<usize> = (0..n).collect();

        let num_params = self.num_classes() * self.dim()
            + match self {
                AdaptedModel::Linear(_) => self.num_classes(),
                AdaptedModel::Prototype(_) => 0,
            };
        let mut head_opt = AdamW::new(num_params, cfg.lr_head, cfg.weight_decay);
        let mut temp_opt = AdamW::new(1, cfg.lr_temperature, 0.0);

        for epoch in 0..cfg.epochs {
            order.shuffle(&mut rng);
            for batch in order.chunks(cfg.batch_size) {
                let (loss, grad) = model.batch_loss_and_grad(&features, labels, weights, batch)?;
                if !loss.is_finite() {
                    return Err(Error::Divergence(format!("non-finite loss at epoch {epoch}")));
                }
                match (&mut model, grad) {
                    (AdaptedModel::Linear(m), ModelGradient::Linear { weights, bias }) => {
                        let mut params: Vec<f64> =
                            m.weights.iter().chain(m.bias.iter()).copied().collect();
                        let grads: Vec<f64> = weights.iter().chain(bias.iter()).copied().collect();
                        head_opt.step(&mut params, &grads);
                        let kd = m.weights.len();
                        m.weights
                            .as_slice_mut()
                            .expect("standard layout")
                            .copy_from_slice(&params[..kd]);
                        m.bias
                            .as_slice_mut()
                            .expect("contiguous")
                            .copy_from_slice(&params[kd..]);
                    }
                    (
                        AdaptedModel::Prototype(m),
                        ModelGradient::Prototype {
                            prototypes,
                            temperature,
                        },
                    ) => {
                        head_opt.step(
                            m.prototypes.as_slice_mut().expect("standard layout"),
                            prototypes.as_slice().expect("standard layout"),
                        );
                        for mut row in m.prototypes.rows_mut() {
                            let nrm = row.dot(&row).sqrt();
                            if nrm > 0.0 {
                                row.mapv_inplace(|v| v / nrm);
                            }
                        }
                        // t = exp(s); dL/ds = t dL/dt keeps t positive.
                        let mut log_t = [m.temperature.ln()];
                        temp_opt.step(&mut log_t, &[m.temperature * temperature]);
                        m.temperature = log_t[0].exp();
                    }
                    _ => unreachable!("gradient kind matches model kind"),
                }
                if model_has_non_finite(&model) {
                    return Err(Error::Divergence(format!(
                        "non-finite parameter at epoch {epoch}"
                    )));
                }
            }
        }
        Ok(model)
    }
}

fn model_has_non_finite(model: &AdaptedModel) -> bool {
    match model {
        AdaptedModel::Linear(m) => m.weights.iter().chain(m.bias.iter()).any(|v| !v.is_finite()),
        AdaptedModel::Prototype(m) => {
            !(m.temperature.is_finite() && m.temperature > 0.0)
                || m.prototypes.iter().any(|v| !v.is_finite())
        }
    }
}

/// Adam with decoupled weight decay (PyTorch `AdamW` defaults).
#[derive(Debug, Clone)]
pub struct AdamW {
    lr: f64,
    weight_decay: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    step: i32,
}

impl AdamW {
    pub fn new(num_params: usize, lr: f64, weight_decay: f64) -> Self {
        Self {
            lr,
            weight_decay,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
            step: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        debug_assert_eq!(params.len(), self.m.len());
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step);
        let bc2 = 1.0 - self.beta2.powi(self.step);
        for i in 0..params.len() {
            let g = grads[i];
            params[i] -= self.lr * self.weight_decay * params[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}
