//! Feedforward classifier trained by back-propagation.
//!
//! The reference topology is 17-325-320-K: two rectifier hidden layers and a
//! softmax output with cross-entropy loss. Inputs are z-scored with statistics
//! fitted on the training set and stored inside the model. Training is plain
//! mini-batch gradient descent; the returned parameters are the snapshot with
//! the best held-out accuracy.

use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Dataset, FeatureVector, LabelScheme, NUM_FEATURES};
use crate::exec::Exec;
use crate::rng::rng_from_seed;

pub const HIDDEN_LAYERS: [usize; 2] = [325, 320];

#[derive(Debug, Error)]
pub enum MlpError {
    #[error("input has {found} features, model expects {expected}")]
    Dimension { expected: usize, found: usize },
    #[error("model has {outputs} outputs but the {scheme} scheme has {classes} classes")]
    SchemeMismatch {
        scheme: LabelScheme,
        classes: usize,
        outputs: usize,
    },
    #[error("non-finite loss at epoch {epoch}, step {step} (learning rate {learning_rate}); training diverged")]
    Diverged {
        epoch: usize,
        step: usize,
        learning_rate: f64,
    },
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("invalid model file: {0}")]
    Format(String),
    #[error("empty training set")]
    EmptyTrainingSet,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub validation_fraction: f64,
    /// Stop after this many epochs without a validation improvement.
    pub patience: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            epochs: 200,
            batch_size: 32,
            seed: 0x6E6E,
            validation_fraction: 0.1,
            patience: Some(25),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), MlpError> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(MlpError::Config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(MlpError::Config(format!(
                "validation_fraction must lie in [0, 1), got {}",
                self.validation_fraction
            )));
        }
        if self.batch_size == 0 {
            return Err(MlpError::Config("batch_size must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalization {
    /// Per-column mean and population deviation; constant columns get deviation 1.
    pub fn fit(x: ArrayView2<f64>) -> Self {
        let n = x.nrows().max(1) as f64;
        let mean: Vec<f64> = x.columns().into_iter().map(|c| c.sum() / n).collect();
        let std = x
            .columns()
            .into_iter()
            .zip(&mean)
            .map(|(c, m)| {
                let var = c.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
                let sd = var.sqrt();
                if sd > 0.0 && sd.is_finite() {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, std }
    }

    fn apply(&self, x: &mut Array2<f64>) {
        for mut row in x.rows_mut() {
            for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
                *v = (*v - m) / s;
            }
        }
    }
}

/// Per-layer parameter gradients, laid out like the model.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub layer_sizes: Vec<usize>,
    /// `weights[l]` has shape `(layer_sizes[l], layer_sizes[l + 1])`.
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
    pub normalization: Option<Normalization>,
    pub scheme: Option<LabelScheme>,
    pub train_config: Option<TrainConfig>,
}

/// 17-325-320-K network with fresh weights.
pub fn init_model<R: Rng + ?Sized>(num_classes: usize, rng: &mut R) -> MlpModel {
    assert!(num_classes >= 2, "need at least two classes");
    let sizes = [
        NUM_FEATURES,
        HIDDEN_LAYERS[0],
        HIDDEN_LAYERS[1],
        num_classes,
    ];
    MlpModel::init(&sizes, rng)
}

impl MlpModel {
    /// He-normal weights (deviation `sqrt(2 / fan_in)`), zero biases.
    pub fn init<R: Rng + ?Sized>(layer_sizes: &[usize], rng: &mut R) -> Self {
        assert!(layer_sizes.len() >= 2 && layer_sizes.iter().all(|&s| s > 0));
        let mut weights = Vec::with_capacity(layer_sizes.len() - 1);
        let mut biases = Vec::with_capacity(layer_sizes.len() - 1);
        for w in layer_sizes.windows(2) {
            let scale = (2.0 / w[0] as f64).sqrt();
            weights.push(Array2::from_shape_simple_fn((w[0], w[1]), || {
                let z: f64 = rng.sample(StandardNormal);
                scale * z
            }));
            biases.push(Array1::zeros(w[1]));
        }
        Self {
            layer_sizes: layer_sizes.to_vec(),
            weights,
            biases,
            normalization: None,
            scheme: None,
            train_config: None,
        }
    }

    pub fn num_inputs(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn num_classes(&self) -> usize {
        *self.layer_sizes.last().expect("at least two layers")
    }

    fn normalized(&self, x: ArrayView2<f64>) -> Result<Array2<f64>, MlpError> {
        if x.ncols() != self.num_inputs() {
            return Err(MlpError::Dimension {
                expected: self.num_inputs(),
                found: x.ncols(),
            });
        }
        let mut x = x.to_owned();
        if let Some(norm) = &self.normalization {
            norm.apply(&mut x);
        }
        Ok(x)
    }

    /// Activations of every layer for already-normalized inputs; the last
    /// entry holds the output logits.
    fn activations(&self, x: Array2<f64>) -> Vec<Array2<f64>> {
        let last = self.weights.len() - 1;
        let mut acts = Vec::with_capacity(self.weights.len() + 1);
        acts.push(x);
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let mut z = acts[l].dot(w);
            z += b;
            if l < last {
                z.mapv_inplace(|v| v.max(0.0));
            }
            acts.push(z);
        }
        acts
    }

    /// Class probabilities for each row of `x` (raw features).
    pub fn forward_batch(&self, x: ArrayView2<f64>) -> Result<Array2<f64>, MlpError> {
        let x = self.normalized(x)?;
        let mut logits = self.activations(x).pop().expect("output layer");
        for mut row in logits.rows_mut() {
            softmax_inplace(row.as_slice_mut().expect("standard layout"));
        }
        Ok(logits)
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>, MlpError> {
        let view = ArrayView2::from_shape((1, x.len()), x).expect("row vector");
        Ok(self.forward_batch(view)?.row(0).to_vec())
    }

    pub fn predict(&self, x: &[f64]) -> Result<usize, MlpError> {
        Ok(argmax(&self.forward(x)?))
    }

    /// Predicted class for each vector, batched and run through `exec`.
    pub fn predict_all(
        &self,
        exec: Exec,
        features: &[FeatureVector],
    ) -> Result<Vec<usize>, MlpError> {
        Ok(self
            .probabilities_all(exec, features)?
            .rows()
            .into_iter()
            .map(|r| argmax(r.as_slice().expect("standard layout")))
            .collect())
    }

    /// Class probabilities for each vector.
    pub fn probabilities_all(
        &self,
        exec: Exec,
        features: &[FeatureVector],
    ) -> Result<Array2<f64>, MlpError> {
        const CHUNK: usize = 512;
        let chunks: Vec<&[FeatureVector]> = features.chunks(CHUNK).collect();
        let parts = exec.map_slice(&chunks, |chunk| {
            self.forward_batch(feature_matrix(chunk).view())
        });
        let mut out = Array2::zeros((features.len(), self.num_classes()));
        for (i, part) in parts.into_iter().enumerate() {
            let part = part?;
            let start = i * CHUNK;
            out.slice_mut(ndarray::s![start..start + part.nrows(), ..])
                .assign(&part);
        }
        Ok(out)
    }

    /// Mean cross-entropy over the batch and its gradient with respect to
    /// every weight and bias. `x` holds raw features, one row per sample.
    pub fn loss_and_gradients(
        &self,
        x: ArrayView2<f64>,
        classes: &[usize],
    ) -> Result<(f64, Gradients), MlpError> {
        assert_eq!(x.nrows(), classes.len());
        assert!(!classes.is_empty(), "empty batch");
        let x = self.normalized(x)?;
        Ok(self.backprop(x, classes))
    }

    fn backprop(&self, x: Array2<f64>, classes: &[usize]) -> (f64, Gradients) {
        let batch = classes.len() as f64;
        let mut acts = self.activations(x);
        let mut delta = acts.pop().expect("output layer");
        let mut loss = 0.0;
        for (mut row, &k) in delta.rows_mut().into_iter().zip(classes) {
            let row = row.as_slice_mut().expect("standard layout");
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
            loss += lse - row[k];
            for z in row.iter_mut() {
                *z = (*z - lse).exp();
            }
            row[k] -= 1.0;
        }
        delta /= batch;

        let layers = self.weights.len();
        let mut weights = Vec::with_capacity(layers);
        let mut biases = Vec::with_capacity(layers);
        for l in (0..layers).rev() {
            let input = &acts[l];
            weights.push(input.t().dot(&delta));
            biases.push(delta.sum_axis(Axis(0)));
            if l > 0 {
                let mut back = delta.dot(&self.weights[l].t());
                ndarray::Zip::from(&mut back).and(input).for_each(|d, &a| {
                    if a <= 0.0 {
                        *d = 0.0;
                    }
                });
                delta = back;
            }
        }
        weights.reverse();
        biases.reverse();
        (loss / batch, Gradients { weights, biases })
    }

    fn apply_gradients(&mut self, grads: &Gradients, learning_rate: f64) {
        for (w, g) in self.weights.iter_mut().zip(&grads.weights) {
            w.scaled_add(-learning_rate, g);
        }
        for (b, g) in self.biases.iter_mut().zip(&grads.biases) {
            b.scaled_add(-learning_rate, g);
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), MlpError> {
        let file = std::fs::File::create(path)?;
        serde_json::to_writer(std::io::BufWriter::new(file), &MlpFile::from(self))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, MlpError> {
        let file = std::fs::File::open(path)?;
        let raw: MlpFile = serde_json::from_reader(std::io::BufReader::new(file))?;
        raw.try_into()
    }
}

fn softmax_inplace(row: &mut [f64]) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// Index of the largest score; ties go to the lowest index.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

pub fn feature_matrix(features: &[FeatureVector]) -> Array2<f64> {
    let flat: Vec<f64> = features.iter().flat_map(|f| f.0).collect();
    Array2::from_shape_vec((features.len(), NUM_FEATURES), flat).expect("rectangular")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_accuracy: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: MlpModel,
    pub log: Vec<EpochStats>,
    /// Epoch whose parameters were kept.
    pub best_epoch: usize,
}

/// Trains `model` on `train_set` and returns the best validation snapshot.
pub fn train(
    mut model: MlpModel,
    train_set: &Dataset,
    cfg: &TrainConfig,
) -> Result<TrainOutcome, MlpError> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(MlpError::EmptyTrainingSet);
    }
    if model.num_classes() != train_set.num_classes() {
        return Err(MlpError::SchemeMismatch {
            scheme: train_set.scheme,
            classes: train_set.num_classes(),
            outputs: model.num_classes(),
        });
    }
    if model.num_inputs() != NUM_FEATURES {
        return Err(MlpError::Dimension {
            expected: NUM_FEATURES,
            found: model.num_inputs(),
        });
    }
    let mut rng = rng_from_seed(cfg.seed);
    let mut x = feature_matrix(&train_set.features());
    let classes = train_set.classes();
    let norm = Normalization::fit(x.view());
    norm.apply(&mut x);
    model.normalization = Some(norm);
    model.scheme = Some(train_set.scheme);
    model.train_config = Some(cfg.clone());

    let mut order: Vec<usize> = (0..classes.len()).collect();
    order.shuffle(&mut rng);
    let n_val = ((classes.len() as f64) * cfg.validation_fraction).floor() as usize;
    let n_val = n_val.min(classes.len() - 1);
    let (val_idx, train_idx) = order.split_at(n_val);
    let mut train_idx = train_idx.to_vec();
    let val_x = x.select(Axis(0), val_idx);
    let val_classes: Vec<usize> = val_idx.iter().map(|&i| classes[i]).collect();

    let mut log = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, MlpModel)> = None;
    for epoch in 0..cfg.epochs {
        train_idx.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut seen = 0usize;
        for (step, batch) in train_idx.chunks(cfg.batch_size).enumerate() {
            let xb = x.select(Axis(0), batch);
            let kb: Vec<usize> = batch.iter().map(|&i| classes[i]).collect();
            let (loss, grads) = model.backprop(xb, &kb);
            if !loss.is_finite() {
                return Err(MlpError::Diverged {
                    epoch,
                    step,
                    learning_rate: cfg.learning_rate,
                });
            }
            loss_sum += loss * batch.len() as f64;
            seen += batch.len();
            model.apply_gradients(&grads, cfg.learning_rate);
        }
        let val_accuracy = (!val_classes.is_empty()).then(|| {
            let logits = model
                .activations(val_x.clone())
                .pop()
                .expect("output layer");
            let correct = logits
                .rows()
                .into_iter()
                .zip(&val_classes)
                .filter(|(r, &k)| argmax(r.as_slice().expect("standard layout")) == k)
                .count();
            correct as f64 / val_classes.len() as f64
        });
        log.push(EpochStats {
            epoch,
            train_loss: loss_sum / seen as f64,
            val_accuracy,
        });
        if let Some(acc) = val_accuracy {
            if best.as_ref().is_none_or(|(b, _, _)| acc > *b) {
                best = Some((acc, epoch, model.clone()));
            }
            let best_epoch = best.as_ref().map_or(epoch, |b| b.1);
            if cfg.patience.is_some_and(|p| epoch - best_epoch >= p) {
                break;
            }
        }
    }
    let last_epoch = log.len().saturating_sub(1);
    let (model, best_epoch) = match best {
        Some((_, epoch, snapshot)) => (snapshot, epoch),
        None => (model, last_epoch),
    };
    Ok(TrainOutcome {
        model,
        log,
        best_epoch,
    })
}

/// On-disk layout: row-major weights plus everything needed to predict.
#[derive(Debug, Serialize, Deserialize)]
struct MlpFile {
    layer_sizes: Vec<usize>,
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
    normalization: Option<Normalization>,
    scheme: Option<LabelScheme>,
    train_config: Option<TrainConfig>,
}

impl From<&MlpModel> for MlpFile {
    fn from(m: &MlpModel) -> Self {
        Self {
            layer_sizes: m.layer_sizes.clone(),
            weights: m
                .weights
                .iter()
                .map(|w| w.iter().copied().collect())
                .collect(),
            biases: m.biases.iter().map(|b| b.to_vec()).collect(),
            normalization: m.normalization.clone(),
            scheme: m.scheme,
            train_config: m.train_config.clone(),
        }
    }
}

impl TryFrom<MlpFile> for MlpModel {
    type Error = MlpError;

    fn try_from(f: MlpFile) -> Result<Self, MlpError> {
        let layers = f.layer_sizes.len();
        if layers < 2 || f.weights.len() != layers - 1 || f.biases.len() != layers - 1 {
            return Err(MlpError::Format("layer count mismatch".into()));
        }
        let mut weights = Vec::with_capacity(layers - 1);
        let mut biases = Vec::with_capacity(layers - 1);
        for (l, (w, b)) in f.weights.into_iter().zip(f.biases).enumerate() {
            let (rows, cols) = (f.layer_sizes[l], f.layer_sizes[l + 1]);
            weights.push(Array2::from_shape_vec((rows, cols), w).map_err(|_| {
                MlpError::Format(format!("layer {l} weights are not {rows}x{cols}"))
            })?);
            if b.len() != cols {
                return Err(MlpError::Format(format!(
                    "layer {l} has {} biases, expected {cols}",
                    b.len()
                )));
            }
            biases.push(Array1::from(b));
        }
        if let Some(n) = &f.normalization {
            if n.mean.len() != f.layer_sizes[0] || n.std.len() != f.layer_sizes[0] {
                return Err(MlpError::Format("normalization width mismatch".into()));
            }
        }
        Ok(MlpModel {
            layer_sizes: f.layer_sizes,
            weights,
            biases,
            normalization: f.normalization,
            scheme: f.scheme,
            train_config: f.train_config,
        })
    }
}
