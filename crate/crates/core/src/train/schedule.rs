use serde::{Deserialize, Serialize};

/// Geometric learning-rate decay from `lr_init` to `lr_init * final_ratio`
/// over `total_steps`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub lr_init: f64,
    pub total_steps: usize,
    pub final_ratio: f64,
}

pub const DEFAULT_FINAL_RATIO: f64 = 1e-5;

impl LrSchedule {
    pub fn new(lr_init: f64, total_steps: usize) -> Self {
        LrSchedule {
            lr_init,
            total_steps,
            final_ratio: DEFAULT_FINAL_RATIO,
        }
    }

    /// `lr_init * final_ratio^(step / T)`; steps past `T` keep the final rate.
    pub fn lr_at(&self, step: usize) -> f64 {
        if self.total_steps == 0 {
            return self.lr_init;
        }
        let frac = step.min(self.total_steps) as f64 / self.total_steps as f64;
        self.lr_init * self.final_ratio.powf(frac)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoints_and_midpoint() {
        let s = LrSchedule::new(0.0003, 1000);
        assert_eq!(s.lr_at(0), 0.0003);
        assert!((s.lr_at(1000) / (0.0003 * 1e-5) - 1.0).abs() < 1e-12);
        assert!((s.lr_at(500) / (0.0003 * 10f64.powf(-2.5)) - 1.0).abs() < 1e-12);
        assert_eq!(s.lr_at(5000), s.lr_at(1000));
    }

    #[test]
    fn non_increasing() {
        let s = LrSchedule::new(1e-3, 37);
        for t in 0..40 {
            assert!(s.lr_at(t + 1) <= s.lr_at(t));
        }
    }
}
