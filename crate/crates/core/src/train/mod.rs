//! Mini-batch training with Adadelta, gradient clipping, length bucketing
//! and early stopping on validation loss.

mod batch;
mod checkpoint;
mod optim;

use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use batch::{make_batches, sequential_batches, Batch, SORT_WINDOW_BATCHES};
pub use checkpoint::{
    load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CheckpointMeta,
    CHECKPOINT_MAGIC,
};
pub use optim::{adadelta_update, clip_gradients, dense_gradients, global_norm, AdadeltaState};

use crate::corpus::{lvt_for_examples, Example, Vocabulary};
use crate::error::{Error, Result};
use crate::model::{Model, ModelConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub batch_size: usize,
    pub lvt_size: usize,
    pub clip_norm: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    /// Multiplier on the Adadelta step.
    pub learning_rate: f64,
    pub rho: f64,
    pub epsilon: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            model: ModelConfig::default(),
            batch_size: 50,
            lvt_size: 2000,
            clip_norm: 5.0,
            max_epochs: 15,
            patience: 2,
            seed: 1,
            learning_rate: 1.0,
            rho: 0.95,
            epsilon: 1e-6,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(self.clip_norm > 0.0) {
            return Err(Error::Config("clip_norm must be positive".into()));
        }
        if self.lvt_size < crate::corpus::NUM_SPECIALS {
            return Err(Error::Config(
                "lvt_size is smaller than the special tokens".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.rho) || !(self.epsilon > 0.0) || !(self.learning_rate > 0.0) {
            return Err(Error::Config("invalid optimizer settings".into()));
        }
        Ok(())
    }
}

/// Tracks the best validation loss and counts epochs without improvement.
#[derive(Clone, Debug)]
pub struct EarlyStopping {
    pub patience: usize,
    pub best: f64,
    pub best_epoch: Option<usize>,
    bad: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            best: f64::INFINITY,
            best_epoch: None,
            bad: 0,
        }
    }

    /// Records an epoch's validation loss; `true` means stop now.
    pub fn observe(&mut self, epoch: usize, loss: f64) -> bool {
        if loss < self.best {
            self.best = loss;
            self.best_epoch = Some(epoch);
            self.bad = 0;
        } else {
            self.bad += 1;
        }
        self.bad >= self.patience.max(1)
    }

    pub fn improved_at(&self, epoch: usize) -> bool {
        self.best_epoch == Some(epoch)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_loss: f64,
    pub seconds: f64,
    pub skipped_batches: usize,
}

impl EpochLog {
    /// Machine-parsable one-line summary.
    pub fn line(&self) -> String {
        format!(
            "epoch={} train_loss={:.6} valid_loss={:.6} seconds={:.3}",
            self.epoch, self.train_loss, self.valid_loss, self.seconds
        )
    }
}

pub struct TrainOutcome {
    /// Parameters from the epoch with the lowest validation loss.
    pub model: Model,
    pub best_epoch: usize,
    pub best_valid_loss: f64,
    pub history: Vec<EpochLog>,
    pub skipped_batches: usize,
}

impl TrainOutcome {
    pub fn meta(&self, config: &TrainConfig) -> CheckpointMeta {
        CheckpointMeta {
            config: config.clone(),
            epoch: self.best_epoch,
            valid_loss: Some(self.best_valid_loss),
        }
    }
}

/// Mean per-target loss over `examples`, batched in corpus order.
pub fn evaluate_loss(
    model: &Model,
    examples: &[Example],
    tgt_vocab: &Vocabulary,
    lvt_size: usize,
    batch_size: usize,
) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0;
    for b in sequential_batches(examples, batch_size) {
        let exs = b.examples(examples);
        let lvt = lvt_for_examples(&exs, tgt_vocab, lvt_size)?;
        let mut tape = model.tape();
        let (loss, n) = model.batch_loss(&mut tape, &exs, &lvt)?;
        total += tape.scalar(loss) * n as f64;
        count += n;
    }
    if count == 0 {
        return Err(Error::Contract("no targets to evaluate".into()));
    }
    Ok(total / count as f64)
}

/// Runs one optimizer step on a batch. Returns the batch loss and target
/// count, or `None` when the gradient was not finite and the step was skipped.
pub fn train_step(
    model: &mut Model,
    state: &mut AdadeltaState,
    config: &TrainConfig,
    examples: &[&Example],
    tgt_vocab: &Vocabulary,
) -> Result<Option<(f64, usize)>> {
    let lvt = lvt_for_examples(examples, tgt_vocab, config.lvt_size)?;
    let mut tape = model.tape();
    let (loss, n) = model.batch_loss(&mut tape, examples, &lvt)?;
    let value = tape.scalar(loss);
    tape.backward(loss)?;
    let grads = tape.into_gradients();
    let mut dense = dense_gradients(&model.params, &grads);
    if !value.is_finite() || dense.iter().flatten().any(|g| !g.is_finite()) {
        return Ok(None);
    }
    clip_gradients(&mut dense, config.clip_norm);
    adadelta_update(&mut model.params, &dense, state, config.learning_rate)?;
    Ok(Some((value, n)))
}

/// Trains from a fresh model seeded with `config.seed`. `on_epoch` sees each
/// epoch's log as soon as it is available.
pub fn train(
    config: &TrainConfig,
    train_set: &[Example],
    valid_set: &[Example],
    tgt_vocab: &Vocabulary,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainOutcome> {
    config.validate()?;
    if train_set.is_empty() || valid_set.is_empty() {
        return Err(Error::Contract(
            "training and validation sets must be nonempty".into(),
        ));
    }
    let mut model = Model::new(config.model.clone(), config.seed)?;
    let mut state = AdadeltaState::new(&model.params, config.rho, config.epsilon);
    let mut stopper = EarlyStopping::new(config.patience);
    let mut best = model.params.clone();
    let mut history = Vec::new();
    let mut skipped_total = 0;
    for epoch in 1..=config.max_epochs {
        let start = Instant::now();
        let (mut sum, mut count, mut skipped) = (0.0, 0usize, 0usize);
        for b in make_batches(train_set, config.batch_size, config.seed, epoch as u64) {
            let exs = b.examples(train_set);
            match train_step(&mut model, &mut state, config, &exs, tgt_vocab)? {
                Some((loss, n)) => {
                    sum += loss * n as f64;
                    count += n;
                }
                None => {
                    skipped += 1;
                    log::warn!("epoch {epoch}: skipped a batch with non-finite gradients ({skipped} so far)");
                }
            }
        }
        if count == 0 {
            return Err(Error::Divergence(format!(
                "every batch of epoch {epoch} had non-finite gradients"
            )));
        }
        if !model.params.all_finite() {
            return Err(Error::Divergence(format!(
                "parameters became non-finite in epoch {epoch}"
            )));
        }
        let valid_loss = evaluate_loss(
            &model,
            valid_set,
            tgt_vocab,
            config.lvt_size,
            config.batch_size,
        )?;
        if !valid_loss.is_finite() {
            return Err(Error::Divergence(format!(
                "validation loss is {valid_loss} after epoch {epoch}"
            )));
        }
        let entry = EpochLog {
            epoch,
            train_loss: if count > 0 {
                sum / count as f64
            } else {
                f64::NAN
            },
            valid_loss,
            seconds: start.elapsed().as_secs_f64(),
            skipped_batches: skipped,
        };
        log::info!("{}", entry.line());
        on_epoch(&entry);
        history.push(entry);
        skipped_total += skipped;
        let stop = stopper.observe(epoch, valid_loss);
        if stopper.improved_at(epoch) {
            best = model.params.clone();
        }
        if stop {
            break;
        }
    }
    model.params = best;
    Ok(TrainOutcome {
        model,
        best_epoch: stopper.best_epoch.unwrap_or(0),
        best_valid_loss: stopper.best,
        history,
        skipped_batches: skipped_total,
    })
}
