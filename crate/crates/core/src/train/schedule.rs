//! Plateau-driven learning-rate halving.

use serde::{Deserialize, Serialize};

pub const PATIENCE: usize = 10;
pub const COOLDOWN: usize = 8;
pub const STOP_AFTER: usize = 30;
pub const MAX_REDUCTION: f64 = 2000.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Action {
    Continue,
    Halve,
    Stop,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// No improvement for [`STOP_AFTER`] epochs.
    Plateau,
    /// Learning rate reduced by more than [`MAX_REDUCTION`] overall.
    LrExhausted,
    MaxEpochs,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub initial_lr: f64,
    pub current_lr: f64,
    pub best_val_err: f64,
    pub epochs_since_improvement: usize,
    pub cooldown_remaining: usize,
    pub cumulative_factor: f64,
    pub halvings: u32,
    pub stop_reason: Option<StopReason>,
}

impl LrSchedule {
    pub fn new(initial_lr: f64) -> Self {
        Self {
            initial_lr,
            current_lr: initial_lr,
            best_val_err: f64::INFINITY,
            epochs_since_improvement: 0,
            cooldown_remaining: 0,
            cumulative_factor: 1.0,
            halvings: 0,
            stop_reason: None,
        }
    }

    /// Start from the error measured before the first epoch, so that epoch `k` of a
    /// flat stream has gone `k` epochs without a drop.
    pub fn with_baseline(initial_lr: f64, val_err: f64) -> Self {
        Self {
            best_val_err: val_err,
            ..Self::new(initial_lr)
        }
    }

    /// Record one epoch's validation error. A drop must be strictly below the best
    /// error seen so far.
    pub fn update(&mut self, val_err: f64) -> Action {
        if val_err < self.best_val_err {
            self.best_val_err = val_err;
            self.epochs_since_improvement = 0;
        } else {
            self.epochs_since_improvement += 1;
        }
        if self.epochs_since_improvement >= STOP_AFTER {
            self.stop_reason = Some(StopReason::Plateau);
            return Action::Stop;
        }
        if self.cooldown_remaining > 0 {
            self.cooldown_remaining -= 1;
            return Action::Continue;
        }
        if self.epochs_since_improvement >= PATIENCE {
            self.current_lr *= 0.5;
            self.cumulative_factor *= 2.0;
            self.halvings += 1;
            self.cooldown_remaining = COOLDOWN;
            if self.cumulative_factor > MAX_REDUCTION {
                self.stop_reason = Some(StopReason::LrExhausted);
                return Action::Stop;
            }
            return Action::Halve;
        }
        Action::Continue
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strictly_decreasing_never_acts() {
        let mut s = LrSchedule::new(0.1);
        for e in 0..500 {
            assert_eq!(s.update(1.0 - e as f64 * 1e-3), Action::Continue);
        }
        assert_eq!(s.current_lr, 0.1);
    }

    #[test]
    fn ties_are_not_drops() {
        let mut s = LrSchedule::with_baseline(0.1, 0.5);
        s.update(0.5);
        assert_eq!(s.epochs_since_improvement, 1);
    }

    #[test]
    fn flat_stream_from_baseline() {
        let mut s = LrSchedule::with_baseline(0.1, 0.5);
        let mut halves = Vec::new();
        let mut stop = None;
        for epoch in 1..=100 {
            match s.update(0.5) {
                Action::Halve => halves.push(epoch),
                Action::Stop => {
                    stop = Some(epoch);
                    break;
                }
                Action::Continue => {}
            }
        }
        assert_eq!(halves, vec![10, 19, 28]);
        assert_eq!(stop, Some(30));
        assert_eq!(s.stop_reason, Some(StopReason::Plateau));
        assert_eq!(s.cumulative_factor, 8.0);
        assert_eq!(s.initial_lr / s.current_lr, s.cumulative_factor);
    }
}
