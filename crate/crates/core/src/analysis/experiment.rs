use super::activity_variance;
use crate::data::PointCloud;
use crate::encoder::{EncoderModel, WeightInit, DEFAULT_DIMS};
use crate::error::{Error, Result};
use crate::numerics::{Scalar, SeededRng};
use crate::rules::{train_encoder, EpochReport, RuleConfig, RuleKind, TrainOptions, DEFAULT_EPOCHS, DEFAULT_ETA};

/// Mean over clouds of the last-layer per-cloud activity variance.
pub fn mean_cloud_variance<T: Scalar>(model: &EncoderModel<T>, clouds: &[PointCloud]) -> Result<f64> {
    if clouds.is_empty() {
        return Err(Error::Empty("clouds"));
    }
    let prepared = model.prepare();
    let d = model.output_dim();
    let mut sum = 0.0;
    for c in clouds {
        let winners: Vec<usize> = prepared.encode_cloud(c)?.iter().map(|a| a.winner).collect();
        sum += activity_variance(&winners, d)?;
    }
    Ok(sum / clouds.len() as f64)
}

/// Shared settings of an encoder training run; the rule is chosen per run.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub dims: Vec<usize>,
    pub epochs: usize,
    pub eta: f64,
    pub a: f64,
    pub b: f64,
    pub init: WeightInit,
    pub opts: TrainOptions,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dims: DEFAULT_DIMS.to_vec(),
            epochs: DEFAULT_EPOCHS,
            eta: DEFAULT_ETA,
            a: 1.0,
            b: 1.0,
            init: WeightInit::default(),
            opts: TrainOptions::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn rule(&self, kind: RuleKind) -> RuleConfig {
        RuleConfig {
            a: self.a,
            b: self.b,
            ..RuleConfig::new(kind, self.eta)
        }
    }
}

#[derive(Debug, Clone)]
pub struct RuleRun {
    pub rule: RuleKind,
    pub seed: u64,
    pub model: EncoderModel<f64>,
    pub reports: Vec<EpochReport>,
    /// [`mean_cloud_variance`] of the trained model on the training clouds.
    pub final_variance: f64,
    /// Epoch at which the weights became non-finite; `model` then holds the
    /// weights from the end of the previous epoch.
    pub diverged: Option<usize>,
}

/// Trains one encoder. The initial weights depend only on `seed` (not on the
/// rule), so runs with different rules start from the same model. A
/// diverging run stops early and is reported rather than failing.
pub fn train_rule(clouds: &[PointCloud], rule: RuleKind, seed: u64, cfg: &ExperimentConfig) -> Result<RuleRun> {
    let root = SeededRng::new(seed);
    let mut init_rng = root.derive("encoder-init");
    let mut model = EncoderModel::init(&cfg.dims, cfg.init, clouds, &mut init_rng)?;
    let train_seed = root.derive("encoder-train").next_u64();
    let mut reports = Vec::new();
    let diverged = match train_encoder(&mut model, clouds, &cfg.rule(rule), &cfg.opts, cfg.epochs, train_seed, |r, _| {
        reports.push(r.clone());
        Ok(())
    }) {
        Ok(_) => None,
        Err(Error::Diverged { epoch, .. }) => Some(epoch),
        Err(e) => return Err(e),
    };
    let final_variance = mean_cloud_variance(&model, clouds)?;
    Ok(RuleRun {
        rule,
        seed,
        model,
        reports,
        final_variance,
        diverged,
    })
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Final and per-epoch last-layer variance per rule and seed.
#[derive(Debug, Clone, PartialEq)]
pub struct VarianceTable {
    pub rules: Vec<RuleKind>,
    pub seeds: Vec<u64>,
    /// `[rule][seed]`.
    pub final_variance: Vec<Vec<f64>>,
    /// `[rule][seed][epoch]`, measured during training.
    pub trajectories: Vec<Vec<Vec<f64>>>,
}

impl VarianceTable {
    pub fn median_final(&self, rule: RuleKind) -> Option<f64> {
        let i = self.rules.iter().position(|&r| r == rule)?;
        Some(median(&self.final_variance[i]))
    }

    /// NeAW's median final variance strictly exceeds both single-branch
    /// variants'.
    pub fn ordering_holds(&self) -> bool {
        match (
            self.median_final(RuleKind::Neaw),
            self.median_final(RuleKind::NeawH),
            self.median_final(RuleKind::NeawAh),
        ) {
            (Some(n), Some(h), Some(ah)) => n > h && n > ah,
            _ => false,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("rule,seed,epoch,variance\n");
        for (r, rule) in self.rules.iter().enumerate() {
            for (k, seed) in self.seeds.iter().enumerate() {
                for (e, v) in self.trajectories[r][k].iter().enumerate() {
                    s.push_str(&format!("{rule},{seed},{e},{v:.16e}\n"));
                }
                s.push_str(&format!("{rule},{seed},final,{:.16e}\n", self.final_variance[r][k]));
            }
        }
        s
    }
}

/// Trains NeAW, NeAW-H and NeAW-aH from identical initial weights for every
/// seed. `on_run` sees each finished run (e.g. to reuse the models).
pub fn variance_ordering_experiment(
    clouds: &[PointCloud],
    seeds: &[u64],
    cfg: &ExperimentConfig,
    mut on_run: impl FnMut(&RuleRun) -> Result<()>,
) -> Result<VarianceTable> {
    if seeds.len() < 3 {
        return Err(Error::invalid(format!("need at least 3 seeds, got {}", seeds.len())));
    }
    let rules = vec![RuleKind::Neaw, RuleKind::NeawH, RuleKind::NeawAh];
    let mut table = VarianceTable {
        rules: rules.clone(),
        seeds: seeds.to_vec(),
        final_variance: vec![Vec::new(); rules.len()],
        trajectories: vec![Vec::new(); rules.len()],
    };
    for &seed in seeds {
        for (r, &rule) in rules.iter().enumerate() {
            let run = train_rule(clouds, rule, seed, cfg)?;
            let last = cfg.dims.len() - 2;
            table.final_variance[r].push(run.final_variance);
            table.trajectories[r].push(run.reports.iter().map(|e| e.variance[last]).collect());
            on_run(&run)?;
        }
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synthetic_dataset;

    #[test]
    fn median_cases() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(&[]).is_nan());
    }

    #[test]
    fn zero_eta_gives_equal_variances() {
        let data = synthetic_dataset(2, 32, 1, 0.01, "train").unwrap();
        let cfg = ExperimentConfig {
            dims: vec![3, 8, 16],
            epochs: 2,
            eta: 0.0,
            ..Default::default()
        };
        let mut runs = 0;
        let t = variance_ordering_experiment(&data.clouds, &[1, 2, 3], &cfg, |_| {
            runs += 1;
            Ok(())
        })
        .unwrap();
        assert_eq!(runs, 9);
        for k in 0..3 {
            assert_eq!(t.final_variance[0][k], t.final_variance[1][k]);
            assert_eq!(t.final_variance[0][k], t.final_variance[2][k]);
        }
        assert!(!t.ordering_holds());
        assert!(t.to_csv().lines().count() == 1 + 9 * 3);
        assert!(variance_ordering_experiment(&data.clouds, &[1, 2], &cfg, |_| Ok(())).is_err());
    }
}
