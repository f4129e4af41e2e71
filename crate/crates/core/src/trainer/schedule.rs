/// Plateau learning-rate decay with early stopping.
///
/// A single counter tracks epochs without strict improvement of the
/// validation loss. Whenever it reaches a positive multiple of
/// `plateau_patience` the rate is multiplied by `factor`; once it reaches
/// `early_stop_patience` training stops.
#[derive(Debug, Clone, PartialEq)]
pub struct Scheduler {
    lr: f64,
    factor: f64,
    plateau_patience: usize,
    early_stop_patience: usize,
    best: Option<f64>,
    bad_epochs: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleDecision {
    /// Rate for the next epoch.
    pub lr: f64,
    pub improved: bool,
    pub stop: bool,
}

impl Scheduler {
    pub fn new(lr: f64, factor: f64, plateau_patience: usize, early_stop_patience: usize) -> Self {
        Scheduler {
            lr,
            factor,
            plateau_patience,
            early_stop_patience,
            best: None,
            bad_epochs: 0,
        }
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn best(&self) -> Option<f64> {
        self.best
    }

    pub fn bad_epochs(&self) -> usize {
        self.bad_epochs
    }

    /// Records one epoch's validation loss. A NaN loss never improves.
    pub fn step(&mut self, valid_loss: f64) -> ScheduleDecision {
        let improved = self.best.is_none_or(|b| valid_loss < b);
        if improved {
            self.best = Some(valid_loss);
            self.bad_epochs = 0;
        } else {
            self.bad_epochs += 1;
            if self.bad_epochs.is_multiple_of(self.plateau_patience) {
                self.lr *= self.factor;
            }
        }
        ScheduleDecision {
            lr: self.lr,
            improved,
            stop: self.bad_epochs >= self.early_stop_patience,
        }
    }
}
