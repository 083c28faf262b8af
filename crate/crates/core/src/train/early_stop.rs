#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Decision {
    Continue,
    Stop,
}

/// Stops after `patience` consecutive epochs without a strictly lower
/// validation loss.
#[derive(Clone, Debug, PartialEq)]
pub struct EarlyStopper {
    pub best_val_loss: f64,
    /// 1-based epoch of the best loss; 0 before the first update.
    pub best_epoch: usize,
    pub epochs_since_improvement: usize,
    pub patience: usize,
    epochs_seen: usize,
}

impl EarlyStopper {
    pub fn new(patience: usize) -> Self {
        Self {
            best_val_loss: f64::INFINITY,
            best_epoch: 0,
            epochs_since_improvement: 0,
            patience,
            epochs_seen: 0,
        }
    }

    /// Records one epoch's validation loss. NaN never counts as improvement.
    pub fn update(&mut self, val_loss: f64) -> Decision {
        self.epochs_seen += 1;
        if val_loss.is_nan() {
            log::warn!("epoch {}: validation loss is NaN", self.epochs_seen);
        }
        if val_loss < self.best_val_loss {
            self.best_val_loss = val_loss;
            self.best_epoch = self.epochs_seen;
            self.epochs_since_improvement = 0;
        } else {
            self.epochs_since_improvement += 1;
        }
        if self.epochs_since_improvement >= self.patience {
            Decision::Stop
        } else {
            Decision::Continue
        }
    }
}
