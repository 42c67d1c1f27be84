//! Unsupervised weight updates: the Hebb/Oja/Grossberg baselines and the
//! activity-aware NeAW family, plus neuron-activity bookkeeping.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

mod activity;
mod neaw;
mod train;

pub use activity::{record_winners, ActivityState, Deviation};
pub use neaw::{baseline_update, neaw_update, neaw_update_sparse, SparseInput};
pub use train::{
    limited_data_lr, train_encoder, train_encoder_epoch, ActivityWindow, EncoderTrainer, EpochReport, LayerSchedule,
    NeawScope, TelemetryWriter, TrainOptions,
};

/// Default encoder learning rate.
pub const DEFAULT_ETA: f64 = 0.01;
/// Default clouds per encoder batch.
pub const DEFAULT_BATCH: usize = 4;
/// Default encoder epochs.
pub const DEFAULT_EPOCHS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RuleKind {
    Hebb,
    Oja,
    Grossberg,
    Neaw,
    NeawH,
    NeawAh,
}

impl RuleKind {
    pub const ALL: [RuleKind; 6] = [
        RuleKind::Hebb,
        RuleKind::Oja,
        RuleKind::Grossberg,
        RuleKind::Neaw,
        RuleKind::NeawH,
        RuleKind::NeawAh,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RuleKind::Hebb => "hebb",
            RuleKind::Oja => "oja",
            RuleKind::Grossberg => "grossberg",
            RuleKind::Neaw => "neaw",
            RuleKind::NeawH => "neaw-h",
            RuleKind::NeawAh => "neaw-ah",
        }
    }

    /// True for the batch-level activity-aware rules.
    pub fn is_neaw(self) -> bool {
        matches!(self, RuleKind::Neaw | RuleKind::NeawH | RuleKind::NeawAh)
    }
}

impl fmt::Display for RuleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RuleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('_', "-");
        RuleKind::ALL
            .into_iter()
            .find(|k| k.name() == norm)
            .ok_or_else(|| Error::invalid(format!("unknown rule '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RuleConfig {
    pub kind: RuleKind,
    pub eta: f64,
    /// Hebbian-branch scale (NeAW family).
    pub a: f64,
    /// Anti-Hebbian-branch scale (NeAW family).
    pub b: f64,
    /// Half-width of the band around `1/d` in which no update happens.
    pub activity_epsilon: f64,
}

impl RuleConfig {
    pub fn new(kind: RuleKind, eta: f64) -> Self {
        Self {
            kind,
            eta,
            a: 1.0,
            b: 1.0,
            activity_epsilon: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("eta", self.eta), ("a", self.a), ("b", self.b), ("activity_epsilon", self.activity_epsilon)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::invalid(format!("{name} must be finite and non-negative, got {v}")));
            }
        }
        Ok(())
    }

    /// Signed step multiplier of the NeAW family for a neuron whose
    /// activity deviates from `1/d` as `dev`.
    pub fn neaw_factor(&self, dev: Deviation) -> f64 {
        match (self.kind, dev) {
            (_, Deviation::Optimal) => 0.0,
            (RuleKind::NeawH, _) => self.a,
            (RuleKind::NeawAh, _) => -self.b,
            (_, Deviation::Below) => self.a,
            (_, Deviation::Above) => -self.b,
        }
    }
}

impl Default for RuleConfig {
    fn default() -> Self {
        Self::new(RuleKind::Neaw, DEFAULT_ETA)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rule_names_round_trip() {
        for k in RuleKind::ALL {
            assert_eq!(k.name().parse::<RuleKind>().unwrap(), k);
        }
        assert_eq!("NeAW_aH".parse::<RuleKind>().unwrap(), RuleKind::NeawAh);
        assert!("sgd".parse::<RuleKind>().is_err());
    }

    #[test]
    fn neaw_factors() {
        let mut cfg = RuleConfig::new(RuleKind::Neaw, 0.1);
        cfg.a = 2.0;
        cfg.b = 3.0;
        assert_eq!(cfg.neaw_factor(Deviation::Below), 2.0);
        assert_eq!(cfg.neaw_factor(Deviation::Above), -3.0);
        assert_eq!(cfg.neaw_factor(Deviation::Optimal), 0.0);
        cfg.kind = RuleKind::NeawH;
        assert_eq!(cfg.neaw_factor(Deviation::Above), 2.0);
        assert_eq!(cfg.neaw_factor(Deviation::Below), 2.0);
        cfg.kind = RuleKind::NeawAh;
        assert_eq!(cfg.neaw_factor(Deviation::Below), -3.0);
        assert_eq!(cfg.neaw_factor(Deviation::Optimal), 0.0);
    }

    #[test]
    fn config_validation() {
        assert!(RuleConfig::default().validate().is_ok());
        let mut cfg = RuleConfig::default();
        cfg.eta = f64::NAN;
        assert!(cfg.validate().is_err());
        cfg.eta = 0.0;
        cfg.b = -1.0;
        assert!(cfg.validate().is_err());
    }
}
