//! Shared training loop: mini-batch AdamW with cosine annealing, early
//! stopping on a validation metric, and best-epoch weight restoration.

use ndarray::{Array1, Array2, ArrayView2};
use rand::seq::SliceRandom;

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::nn::loss::{Targets, TrainLoss};
use crate::nn::net::{ArchDescriptor, Backbone, Mode};
use crate::nn::optim::{AdamW, OptimizerConfig};
use crate::seeding::rng_from_seed;

/// One epoch of the loss history.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub learning_rate: f64,
}

/// A trained backbone together with its loss history.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Backbone,
    pub history: Vec<EpochStats>,
}

/// Owned targets buffer.
pub enum TargetBuffer {
    Classes(Vec<usize>),
    Values(Vec<f64>),
}

impl TargetBuffer {
    fn view(&self) -> Targets<'_> {
        match self {
            TargetBuffer::Classes(c) => Targets::Classes(c),
            TargetBuffer::Values(v) => Targets::Values(v),
        }
    }

    fn gather(&self, idx: &[usize]) -> TargetBuffer {
        match self {
            TargetBuffer::Classes(c) => {
                TargetBuffer::Classes(idx.iter().map(|&i| c[i]).collect())
            }
            TargetBuffer::Values(v) => TargetBuffer::Values(idx.iter().map(|&i| v[i]).collect()),
        }
    }

    fn len(&self) -> usize {
        match self {
            TargetBuffer::Classes(c) => c.len(),
            TargetBuffer::Values(v) => v.len(),
        }
    }
}

pub(crate) fn gather_rows(x: &ArrayView2<f64>, idx: &[usize]) -> Array2<f64> {
    let mut out = Array2::<f64>::zeros((idx.len(), x.ncols()));
    for (row, &i) in idx.iter().enumerate() {
        out.row_mut(row).assign(&x.row(i));
    }
    out
}

/// Trains a backbone on explicit train/validation arrays.
///
/// RNG consumption order is fixed: weight initialization first, then per
/// epoch one shuffle followed by the dropout draws of each batch, so a given
/// (data, config, seed) triple always produces bit-identical weights.
pub fn train_with_loss(
    x_train: &ArrayView2<f64>,
    train_targets: &TargetBuffer,
    x_val: &ArrayView2<f64>,
    val_targets: &TargetBuffer,
    arch: &ArchDescriptor,
    loss: TrainLoss,
    opt: &OptimizerConfig,
) -> Result<TrainOutcome> {
    opt.validate()?;
    let n = x_train.nrows();
    if n < 2 {
        return Err(Error::invalid("training needs at least 2 rows"));
    }
    if x_val.nrows() == 0 {
        return Err(Error::invalid(
            "a validation split is required for early stopping",
        ));
    }
    if train_targets.len() != n || val_targets.len() != x_val.nrows() {
        return Err(Error::invalid("target length does not match feature rows"));
    }
    if x_train.ncols() != arch.input_dim {
        return Err(Error::DimMismatch {
            context: "training features".to_string(),
            expected: arch.input_dim,
            actual: x_train.ncols(),
        });
    }

    let mut rng = rng_from_seed(opt.seed);
    let mut model = Backbone::init(arch, &mut rng);
    let mut adam = AdamW::new(&model);

    let mut indices: Vec<usize> = (0..n).collect();
    let mut history = Vec::new();
    let mut best: Option<(f64, Backbone)> = None;
    let mut epochs_since_improvement = 0usize;

    for epoch in 0..opt.max_epochs {
        let lr = opt.learning_rate_at(epoch);
        indices.shuffle(&mut rng);

        let mut loss_sum = 0.0;
        let mut rows_used = 0usize;
        for (batch_idx, chunk) in indices.chunks(opt.batch_size).enumerate() {
            // A single row cannot support batch statistics or the
            // feature-moment regularizer; drop a size-1 remainder.
            if chunk.len() < 2 {
                continue;
            }
            let x = gather_rows(x_train, chunk);
            let targets = train_targets.gather(chunk);

            model.power_iteration_step();
            let (out, cache) = model.forward_train(&x.view(), &mut rng)?;
            let eval = loss.eval(
                &out.logits.view(),
                &out.penultimate.view(),
                targets.view(),
                epoch,
            )?;
            if !eval.loss.is_finite() {
                return Err(Error::TrainingDiverged {
                    epoch,
                    batch: batch_idx,
                    loss: eval.loss,
                });
            }
            let grads = model.backward(&cache, &eval.grad_logits, eval.grad_penultimate.as_ref());
            adam.step(&mut model, &grads, lr, opt.weight_decay);

            loss_sum += eval.loss * chunk.len() as f64;
            rows_used += chunk.len();
        }

        let val_out = model.forward(x_val)?;
        let val_loss = loss.validation_loss(&val_out.logits.view(), val_targets.view());
        if !val_loss.is_finite() {
            return Err(Error::TrainingDiverged {
                epoch,
                batch: usize::MAX,
                loss: val_loss,
            });
        }
        history.push(EpochStats {
            epoch,
            train_loss: loss_sum / rows_used.max(1) as f64,
            val_loss,
            learning_rate: lr,
        });

        let improved = best.as_ref().map_or(true, |(b, _)| val_loss < *b);
        if improved {
            best = Some((val_loss, model.clone()));
            epochs_since_improvement = 0;
        } else {
            epochs_since_improvement += 1;
            if epochs_since_improvement >= opt.patience {
                break;
            }
        }
    }

    let (_, mut best_model) = best.expect("at least one epoch ran");
    best_model.mode = Mode::Inference;
    Ok(TrainOutcome {
        model: best_model,
        history,
    })
}

/// Trains a classifier on the train split of `data`, validating on its val
/// split. With `gauss_lambda = 0` the loss is plain cross-entropy.
pub fn train_classifier(
    data: &LabeledDataset,
    arch: &ArchDescriptor,
    gauss_lambda: f64,
    opt: &OptimizerConfig,
) -> Result<TrainOutcome> {
    let (x_train, y_train) = data.train_rows();
    let (x_val, y_val) = data.val_rows();
    let distinct = {
        let mut classes: Vec<usize> = y_train.clone();
        classes.sort_unstable();
        classes.dedup();
        classes.len()
    };
    if distinct < 2 {
        return Err(Error::invalid(
            "classifier training requires at least 2 classes in the train split",
        ));
    }
    if x_train.nrows() < 2 * opt.batch_size {
        return Err(Error::invalid(format!(
            "classifier training requires at least 2 * batch_size = {} rows, got {}",
            2 * opt.batch_size,
            x_train.nrows()
        )));
    }
    train_with_loss(
        &x_train.view(),
        &TargetBuffer::Classes(y_train),
        &x_val.view(),
        &TargetBuffer::Classes(y_val),
        arch,
        TrainLoss::CrossEntropy { gauss_lambda },
        opt,
    )
}

/// Trains a single-output regressor under mean squared error.
pub fn train_regressor(
    x_train: &ArrayView2<f64>,
    y_train: &[f64],
    x_val: &ArrayView2<f64>,
    y_val: &[f64],
    arch: &ArchDescriptor,
    opt: &OptimizerConfig,
) -> Result<TrainOutcome> {
    train_with_loss(
        x_train,
        &TargetBuffer::Values(y_train.to_vec()),
        x_val,
        &TargetBuffer::Values(y_val.to_vec()),
        arch,
        TrainLoss::SquaredError,
        opt,
    )
}

/// Predicted probabilities for a dataset slice under a trained classifier.
pub fn predict_probabilities(model: &Backbone, x: &ArrayView2<f64>) -> Result<Array2<f64>> {
    let out = model.forward(x)?;
    Ok(crate::nn::loss::softmax_rows(&out.logits.view()))
}

/// Classification accuracy of a trained model on the given rows.
pub fn accuracy(model: &Backbone, x: &ArrayView2<f64>, labels: &[usize]) -> Result<f64> {
    let probs = predict_probabilities(model, x)?;
    let mut correct = 0usize;
    for (row, &label) in probs.rows().into_iter().zip(labels.iter()) {
        let pred = argmax(row.as_slice().expect("contiguous"));
        if pred == label {
            correct += 1;
        }
    }
    Ok(correct as f64 / labels.len() as f64)
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    values
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).expect("finite values"))
        .map(|(i, _)| i)
        .expect("nonempty")
}

#[allow(dead_code)]
fn ones(n: usize) -> Array1<f64> {
    Array1::ones(n)
}
