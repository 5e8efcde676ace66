//! Mini-batch Adam training with early stopping on test accuracy, plus
//! evaluation metrics and history export.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::{WindowSample, AXES, ROWS};
use crate::error::{Error, Result};
use crate::labeling::DifficultyLabel;
use crate::nn::{adam_step, backward, forward, predict, AdamState, Mode, ModelConfig, ModelParams, Tensor};

const CLASSES: usize = DifficultyLabel::COUNT;

/// Rows per inference batch. Fixed so metrics never depend on how a caller
/// groups samples.
pub const EVAL_BATCH: usize = 256;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl TrainConfig {
    pub fn new(seed: u64) -> Self {
        TrainConfig {
            batch_size: 32,
            max_epochs: 1500,
            patience: 250,
            learning_rate: 1e-3,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.max_epochs == 0 || self.patience == 0 {
            return Err(Error::InvalidConfig("batch size, epochs and patience must be positive".into()));
        }
        if self.patience > self.max_epochs {
            return Err(Error::InvalidConfig(format!(
                "patience {} exceeds max epochs {}",
                self.patience, self.max_epochs
            )));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig(format!("learning rate {}", self.learning_rate)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_sca: f64,
    pub test_sca: f64,
    pub train_loss: f64,
}

/// Rows are true labels, columns predictions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConfusionMatrix {
    pub counts: [[u64; CLASSES]; CLASSES],
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..CLASSES).map(|i| self.counts[i][i]).sum()
    }

    pub fn accuracy(&self) -> f64 {
        self.trace() as f64 / self.total() as f64
    }

    fn merge(&mut self, other: &ConfusionMatrix) {
        for (row, o) in self.counts.iter_mut().zip(&other.counts) {
            for (c, v) in row.iter_mut().zip(o) {
                *c += v;
            }
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("true\\pred,0,1,2\n");
        for (t, row) in self.counts.iter().enumerate() {
            let _ = writeln!(out, "{t},{},{},{}", row[0], row[1], row[2]);
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct TrainResult {
    pub best_params: ModelParams,
    pub best_epoch: usize,
    pub best_test_sca: f64,
    pub history: Vec<EpochRecord>,
    pub confusion: ConfusionMatrix,
    pub stopped_early: bool,
}

/// Index of the largest entry; the lowest index wins ties.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

fn check_batch(probs: &Tensor, labels: &[usize]) -> Result<[usize; 2]> {
    let [b, c] = probs.dims2()?;
    if labels.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if b != labels.len() {
        return Err(Error::ShapeMismatch(format!("{b} probability rows for {} labels", labels.len())));
    }
    if let Some(&label) = labels.iter().find(|&&l| l >= c) {
        return Err(Error::LabelOutOfRange { label, classes: c });
    }
    Ok([b, c])
}

pub fn sparse_categorical_accuracy(probs: &Tensor, labels: &[usize]) -> Result<f64> {
    let [b, c] = check_batch(probs, labels)?;
    let hits = probs
        .data()
        .chunks_exact(c)
        .zip(labels)
        .filter(|(row, &l)| argmax(row) == l)
        .count();
    Ok(hits as f64 / b as f64)
}

pub fn confusion_matrix(probs: &Tensor, labels: &[usize]) -> Result<ConfusionMatrix> {
    let [_, c] = check_batch(probs, labels)?;
    if c != CLASSES {
        return Err(Error::ShapeMismatch(format!("confusion matrix needs {CLASSES} classes, got {c}")));
    }
    let mut m = ConfusionMatrix::default();
    for (row, &l) in probs.data().chunks_exact(c).zip(labels) {
        m.counts[l][argmax(row)] += 1;
    }
    Ok(m)
}

/// Stacks samples into a `(B, n, 4, 3)` input tensor.
pub fn batch_tensor(samples: &[&WindowSample], window_points: usize) -> Result<Tensor> {
    if samples.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let per = window_points * ROWS * AXES;
    let mut data = Vec::with_capacity(per * samples.len());
    for s in samples {
        if s.window_points != window_points || s.data.len() != per {
            return Err(Error::ShapeMismatch(format!(
                "sample of {} points for a {window_points}-point model",
                s.window_points
            )));
        }
        data.extend_from_slice(&s.data);
    }
    Tensor::new(vec![samples.len(), window_points, ROWS, AXES], data)
}

fn labels_of(samples: &[&WindowSample]) -> Vec<usize> {
    samples.iter().map(|s| s.label.index()).collect()
}

/// Infer-mode accuracy and confusion matrix over `samples`.
pub fn evaluate(params: &ModelParams, samples: &[WindowSample]) -> Result<(f64, ConfusionMatrix)> {
    if samples.is_empty() {
        return Err(Error::EmptyDataset("evaluation set"));
    }
    let refs: Vec<&WindowSample> = samples.iter().collect();
    evaluate_refs(params, &refs)
}

fn evaluate_refs(params: &ModelParams, samples: &[&WindowSample]) -> Result<(f64, ConfusionMatrix)> {
    let mut total = ConfusionMatrix::default();
    for chunk in samples.chunks(EVAL_BATCH) {
        let x = batch_tensor(chunk, params.config.window_points)?;
        let probs = predict(params, &x)?;
        total.merge(&confusion_matrix(&probs, &labels_of(chunk))?);
    }
    Ok((total.accuracy(), total))
}

/// Tracks the best monitored value and decides when to stop.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopping {
    pub patience: usize,
    pub max_epochs: usize,
    pub best: f64,
    pub best_epoch: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize, max_epochs: usize) -> Self {
        EarlyStopping {
            patience,
            max_epochs,
            best: f64::NEG_INFINITY,
            best_epoch: 0,
        }
    }

    /// Records `value` for `epoch` and returns true when it strictly improves
    /// on the running best.
    pub fn observe(&mut self, epoch: usize, value: f64) -> bool {
        if value > self.best {
            self.best = value;
            self.best_epoch = epoch;
            true
        } else {
            false
        }
    }

    pub fn should_stop(&self, epoch: usize) -> bool {
        epoch - self.best_epoch >= self.patience || epoch >= self.max_epochs
    }

    /// Whether stopping at `epoch` came from patience running out.
    pub fn patience_exhausted(&self, epoch: usize) -> bool {
        epoch - self.best_epoch >= self.patience
    }
}

/// Partitions `0..n` into batches of `size`, folding a trailing batch too
/// small for batch statistics into its predecessor.
pub fn batch_ranges(n: usize, size: usize, elements_per_row: usize) -> Vec<std::ops::Range<usize>> {
    let mut out: Vec<std::ops::Range<usize>> = (0..n).step_by(size).map(|s| s..(s + size).min(n)).collect();
    if out.len() >= 2 && out.last().is_some_and(|r| r.len() * elements_per_row < 2) {
        let last = out.pop().unwrap();
        out.last_mut().unwrap().end = last.end;
    }
    out
}

pub fn train(
    train_samples: &[WindowSample],
    test_samples: &[WindowSample],
    model: &ModelConfig,
    config: &TrainConfig,
) -> Result<TrainResult> {
    train_with_progress(train_samples, test_samples, model, config, |_| {})
}

/// [`train`] with a callback after every epoch.
pub fn train_with_progress(
    train_samples: &[WindowSample],
    test_samples: &[WindowSample],
    model: &ModelConfig,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainResult> {
    config.validate()?;
    model.validate()?;
    if train_samples.is_empty() {
        return Err(Error::EmptyDataset("training set"));
    }
    if test_samples.is_empty() {
        return Err(Error::EmptyDataset("test set"));
    }
    let n = model.window_points;
    for s in train_samples.iter().chain(test_samples) {
        if s.window_points != n {
            return Err(Error::ShapeMismatch(format!(
                "sample of {} points for a {n}-point model",
                s.window_points
            )));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = crate::nn::build_model(model, &mut rng)?;
    let mut adam = AdamState::new(&params);
    let mut stopper = EarlyStopping::new(config.patience, config.max_epochs);
    let mut best_params = params.clone();
    let mut history = Vec::new();
    let mut order: Vec<usize> = (0..train_samples.len()).collect();
    let all_train: Vec<&WindowSample> = train_samples.iter().collect();
    let all_test: Vec<&WindowSample> = test_samples.iter().collect();
    let ranges = batch_ranges(order.len(), config.batch_size, n * ROWS);

    let mut epoch = 0;
    loop {
        epoch += 1;
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for r in &ranges {
            let batch: Vec<&WindowSample> = order[r.clone()].iter().map(|&i| &train_samples[i]).collect();
            let x = batch_tensor(&batch, n)?;
            let (_, cache) = forward(&mut params, &x, Mode::Train, &mut rng)?;
            let (loss, grads) = backward(&params, &cache.expect("train mode caches"), &labels_of(&batch))?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss(epoch));
            }
            loss_sum += loss * batch.len() as f64;
            adam_step(&mut params, &grads, &mut adam, config.learning_rate)?;
        }
        let (train_sca, _) = evaluate_refs(&params, &all_train)?;
        let (test_sca, _) = evaluate_refs(&params, &all_test)?;
        let record = EpochRecord {
            epoch,
            train_sca,
            test_sca,
            train_loss: loss_sum / train_samples.len() as f64,
        };
        on_epoch(&record);
        history.push(record);
        if stopper.observe(epoch, test_sca) {
            best_params = params.clone();
        }
        if stopper.should_stop(epoch) {
            break;
        }
    }

    let (_, confusion) = evaluate_refs(&best_params, &all_test)?;
    Ok(TrainResult {
        best_params,
        best_epoch: stopper.best_epoch,
        best_test_sca: stopper.best,
        stopped_early: epoch < config.max_epochs,
        history,
        confusion,
    })
}

pub fn history_csv(history: &[EpochRecord]) -> String {
    let mut out = String::from("epoch,train_sca,test_sca,train_loss\n");
    for r in history {
        let _ = writeln!(out, "{},{},{},{}", r.epoch, r.train_sca, r.test_sca, r.train_loss);
    }
    out
}

pub fn parse_history_csv(text: &str) -> Result<Vec<EpochRecord>> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let header = rdr.headers().map_err(|e| malformed(1, e))?.clone();
    if header.iter().collect::<Vec<_>>() != ["epoch", "train_sca", "test_sca", "train_loss"] {
        return Err(Error::MalformedLine {
            line: 1,
            reason: "expected header epoch,train_sca,test_sca,train_loss".into(),
        });
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i as u64 + 2;
        let rec = rec.map_err(|e| malformed(line, e))?;
        let field = |k: usize| rec.get(k).unwrap_or("");
        let real = |k: usize| field(k).parse::<f64>().map_err(|e| malformed(line, e));
        out.push(EpochRecord {
            epoch: field(0).parse().map_err(|e| malformed(line, e))?,
            train_sca: real(1)?,
            test_sca: real(2)?,
            train_loss: real(3)?,
        });
    }
    Ok(out)
}

fn malformed(line: u64, e: impl std::fmt::Display) -> Error {
    Error::MalformedLine {
        line,
        reason: e.to_string(),
    }
}
