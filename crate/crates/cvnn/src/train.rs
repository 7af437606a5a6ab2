use std::fmt;
use std::ops::ControlFlow;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adam::{Adam, AdamConfig};
use crate::data::Samples;
use crate::error::{NetError, Result};
use crate::layers::Mode;
use crate::loss::{l1_loss, l1_value};
use crate::scalar::Real;
use crate::unet::UNet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
    /// Draw new training masks (same microphone count) every epoch.
    pub resample_masks: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let a = AdamConfig::default();
        TrainConfig {
            lr: a.lr,
            batch: 32,
            max_epochs: 5000,
            patience: 100,
            beta1: a.beta1,
            beta2: a.beta2,
            eps: a.eps,
            seed: 0,
            resample_masks: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(NetError::Config(m.into()));
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return bad("lr must be finite and non-negative");
        }
        if self.batch == 0 || self.max_epochs == 0 || self.patience == 0 {
            return bad("batch, max_epochs and patience must be positive");
        }
        if self.patience > self.max_epochs {
            return bad("patience must not exceed max_epochs");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("Adam betas must lie in [0, 1)");
        }
        if !(self.eps > 0.0) {
            return bad("Adam eps must be positive");
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxEpochs,
    Patience,
    Interrupted,
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StopReason::MaxEpochs => "max_epochs",
            StopReason::Patience => "patience",
            StopReason::Interrupted => "interrupted",
        })
    }
}

/// Losses are per record: the summed L1 loss divided by the number of records.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub improved: bool,
}

pub const HISTORY_HEADER: &str = "epoch,train_loss,val_loss,improved";

pub fn history_csv(history: &[EpochStats]) -> String {
    let mut s = String::from(HISTORY_HEADER);
    s.push('\n');
    for e in history {
        s.push_str(&format!(
            "{},{:e},{:e},{}\n",
            e.epoch, e.train_loss, e.val_loss, e.improved as u8
        ));
    }
    s
}

/// Training state: model, optimizer, shuffling RNG and early-stopping
/// bookkeeping. Everything needed to resume is public so it can be saved.
#[derive(Debug, Clone)]
pub struct Trainer<T> {
    pub model: UNet<T>,
    pub best: UNet<T>,
    pub adam: Adam<T>,
    pub rng: ChaCha8Rng,
    pub config: TrainConfig,
    pub epoch: usize,
    pub best_val: f64,
    pub best_epoch: usize,
    pub wait: usize,
    pub history: Vec<EpochStats>,
    pub stop: Option<StopReason>,
}

impl<T: Real> Trainer<T> {
    pub fn new(model: UNet<T>, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        Ok(Trainer {
            best: model.clone(),
            model,
            adam: Adam::new(config.adam()),
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            epoch: 0,
            best_val: f64::INFINITY,
            best_epoch: 0,
            wait: 0,
            history: Vec::new(),
            stop: None,
            config,
        })
    }

    fn check_data(&self, train: &Samples<T>, val: &Samples<T>) -> Result<()> {
        if train.is_empty() || val.is_empty() {
            return Err(NetError::Config("training and validation splits must be nonempty".into()));
        }
        for s in [train, val] {
            let x = &s.inputs[0];
            let y = &s.targets[0];
            if x.c != self.model.spec.in_channels || y.c != self.model.spec.out_channels {
                return Err(NetError::Shape(format!(
                    "data has {} input and {} target channels, network expects {} and {}",
                    x.c, y.c, self.model.spec.in_channels, self.model.spec.out_channels
                )));
            }
        }
        if train.inputs[0].shape() != val.inputs[0].shape() {
            return Err(NetError::Shape("training and validation grids differ".into()));
        }
        Ok(())
    }

    /// Records a batch needs so the smallest feature map still gives batch
    /// normalization two values per channel.
    fn min_batch(&self, train: &Samples<T>) -> usize {
        let x = &train.inputs[0];
        let d = self.model.spec.divisor();
        let cells = (x.h.div_ceil(d) * x.w.div_ceil(d)).max(1);
        2usize.div_ceil(cells)
    }

    /// One pass over the training split followed by validation.
    pub fn run_epoch(&mut self, train: &mut Samples<T>, val: &Samples<T>) -> Result<EpochStats> {
        self.check_data(train, val)?;
        if self.config.resample_masks {
            train.resample_masks(&mut self.rng)?;
        }
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut self.rng);
        let min_batch = self.min_batch(train);
        let mut train_total = 0.0;
        for chunk in batches(&order, self.config.batch, min_batch) {
            let (x, y) = train.batch(chunk)?;
            self.model.zero_grad();
            let est = self.model.forward(&x, Mode::Train)?;
            let (loss, grad) = l1_loss(&est, &y)?;
            self.model.backward(&grad)?;
            self.adam.step(&mut self.model.params_mut())?;
            train_total += loss;
        }
        let val_loss = validation_loss(&self.model, val, self.config.batch)?;
        let train_loss = train_total / train.len() as f64;
        if !train_loss.is_finite() || !val_loss.is_finite() {
            return Err(NetError::NonFinite(format!("loss at epoch {}", self.epoch + 1)));
        }
        self.epoch += 1;
        let improved = val_loss < self.best_val;
        if improved {
            self.best_val = val_loss;
            self.best_epoch = self.epoch;
            self.best.load_state(&self.model)?;
            self.wait = 0;
        } else {
            self.wait += 1;
        }
        let stats = EpochStats {
            epoch: self.epoch,
            train_loss,
            val_loss,
            improved,
        };
        self.history.push(stats);
        Ok(stats)
    }

    /// Trains until `max_epochs`, patience exhaustion, or `observer` breaks.
    /// The observer sees the trainer after every epoch. The model is left at
    /// its last state; call [`Trainer::restore_best`] afterwards.
    pub fn run<F>(&mut self, train: &mut Samples<T>, val: &Samples<T>, mut observer: F) -> Result<StopReason>
    where
        F: FnMut(&Trainer<T>, &EpochStats) -> ControlFlow<()>,
    {
        self.stop = None;
        let reason = loop {
            if self.epoch >= self.config.max_epochs {
                break StopReason::MaxEpochs;
            }
            if self.wait >= self.config.patience {
                break StopReason::Patience;
            }
            let stats = self.run_epoch(train, val)?;
            if observer(self, &stats).is_break() {
                break StopReason::Interrupted;
            }
        };
        self.stop = Some(reason);
        Ok(reason)
    }

    pub fn restore_best(&mut self) -> Result<()> {
        if self.best_epoch > 0 {
            self.model.load_state(&self.best)?;
        }
        Ok(())
    }
}

/// Consecutive batches of `size`; a trailing batch shorter than `min` is
/// folded into the one before it.
fn batches(order: &[usize], size: usize, min: usize) -> Vec<&[usize]> {
    let mut out: Vec<&[usize]> = order.chunks(size).collect();
    if out.len() > 1 && out[out.len() - 1].len() < min {
        out.pop();
        let start = (out.len() - 1) * size;
        *out.last_mut().expect("nonempty") = &order[start..];
    }
    out
}

/// Mean per-record L1 loss of the evaluation-mode network.
pub fn validation_loss<T: Real>(model: &UNet<T>, data: &Samples<T>, batch: usize) -> Result<f64> {
    let order: Vec<usize> = (0..data.len()).collect();
    let mut total = 0.0;
    for chunk in order.chunks(batch.max(1)) {
        let (x, y) = data.batch(chunk)?;
        total += l1_value(&model.infer(&x)?, &y)?;
    }
    Ok(total / data.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::batches;

    #[test]
    fn short_tail_joins_the_previous_batch() {
        let order: Vec<usize> = (0..5).collect();
        assert_eq!(batches(&order, 2, 2), vec![&[0, 1][..], &[2, 3, 4][..]]);
        assert_eq!(batches(&order, 2, 1), vec![&[0, 1][..], &[2, 3][..], &[4][..]]);
        assert_eq!(batches(&order[..1], 2, 2), vec![&[0][..]]);
        assert_eq!(batches(&order[..4], 4, 2), vec![&[0, 1, 2, 3][..]]);
    }
}
