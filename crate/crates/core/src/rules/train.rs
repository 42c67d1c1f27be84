use std::fs::File;
use std::path::Path;
use std::time::Instant;

use super::neaw::{apply_baseline_batch, apply_dense, apply_sparse, neaw_steps, BatchInputs, SparseInput};
use super::{ActivityState, Deviation, RuleConfig, DEFAULT_BATCH};
use crate::analysis::activity_variance;
use crate::data::PointCloud;
use crate::encoder::{EncoderModel, PreparedEncoder};
use crate::error::{Error, Result};
use crate::numerics::{Scalar, SeededRng};

/// Encoder learning rate for limited-data runs: `0.01 / fraction`, clamped
/// to `[0.01, 0.1]`.
pub fn limited_data_lr(fraction: f64) -> f64 {
    (0.01 / fraction).clamp(0.01, 0.1)
}

/// Order in which layers are updated within a batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LayerSchedule {
    /// One forward pass per batch, then every layer updates from it.
    #[default]
    Simultaneous,
    /// Layer by layer; each layer sees inputs recomputed through the
    /// already-updated layers below it.
    Greedy,
}

/// Window over which neuron activity is measured for the NeAW sign.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum ActivityWindow {
    /// Activity of the current batch only.
    #[default]
    Batch,
    /// Exponential moving average across batches (`p ← decay·p + (1−decay)·p_batch`).
    Ema { decay: f64 },
}

/// Layers that receive NeAW-family updates. Other layers stay frozen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NeawScope {
    #[default]
    AllLayers,
    LastOnly,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainOptions {
    /// Clouds per batch.
    pub batch: usize,
    pub schedule: LayerSchedule,
    pub window: ActivityWindow,
    pub scope: NeawScope,
    /// Shuffle cloud order every epoch.
    pub shuffle: bool,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            batch: DEFAULT_BATCH,
            schedule: LayerSchedule::default(),
            window: ActivityWindow::default(),
            scope: NeawScope::default(),
            shuffle: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochReport {
    pub epoch: usize,
    /// Activity of the last batch, per layer.
    pub activity: Vec<ActivityState>,
    /// Mean over clouds of the per-cloud activity variance, per layer,
    /// measured on the forward passes used for training.
    pub variance: Vec<f64>,
    pub weight_norm_mean: Vec<f64>,
    pub weight_norm_max: Vec<f64>,
    pub seconds: f64,
}

/// Per-layer winners and values of a batch of points.
struct Trace<T> {
    winners: Vec<Vec<usize>>,
    values: Vec<Vec<T>>,
}

impl<T: Scalar> Trace<T> {
    fn run(prepared: &PreparedEncoder<'_, T>, flat: &[T], dim: usize, last: usize) -> Result<Self> {
        let n = flat.len() / dim;
        let mut t = Trace {
            winners: (0..=last).map(|_| Vec::with_capacity(n)).collect(),
            values: (0..=last).map(|_| Vec::with_capacity(n)).collect(),
        };
        let mut scratch = Vec::new();
        for p in flat.chunks_exact(dim) {
            prepared.forward_point(p, last, &mut scratch, |l, a| {
                t.winners[l].push(a.winner);
                t.values[l].push(a.value);
            })?;
        }
        Ok(t)
    }

    fn sparse_inputs(&self, l: usize) -> Vec<SparseInput<T>> {
        self.winners[l]
            .iter()
            .zip(&self.values[l])
            .map(|(&index, &value)| SparseInput { index, value })
            .collect()
    }
}

/// Stateful encoder trainer; holds the moving activity averages when the
/// EMA window is selected.
#[derive(Debug, Clone)]
pub struct EncoderTrainer {
    cfg: RuleConfig,
    opts: TrainOptions,
    ema: Vec<Option<Vec<f64>>>,
}

impl EncoderTrainer {
    pub fn new(cfg: RuleConfig, opts: TrainOptions) -> Result<Self> {
        cfg.validate()?;
        if opts.batch == 0 {
            return Err(Error::invalid("batch must be at least 1"));
        }
        if let ActivityWindow::Ema { decay } = opts.window {
            if !(0.0..1.0).contains(&decay) {
                return Err(Error::invalid(format!("EMA decay must be in [0, 1), got {decay}")));
            }
        }
        Ok(Self {
            cfg,
            opts,
            ema: Vec::new(),
        })
    }

    pub fn config(&self) -> &RuleConfig {
        &self.cfg
    }

    pub fn options(&self) -> &TrainOptions {
        &self.opts
    }

    /// One pass over `clouds`. The cloud order is shuffled by a generator
    /// derived from `(seed, epoch)`, so epoch `e` of a long run equals a
    /// resumed run started at `e` from the same weights.
    pub fn epoch<T: Scalar>(
        &mut self,
        model: &mut EncoderModel<T>,
        clouds: &[PointCloud],
        seed: u64,
        epoch: usize,
    ) -> Result<EpochReport> {
        if clouds.is_empty() {
            return Err(Error::Empty("training clouds"));
        }
        let dim = model.input_dim();
        if let Some(c) = clouds.iter().find(|c| c.dim() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: c.dim(),
            });
        }
        let start = Instant::now();
        let n_layers = model.layers().len();
        self.ema.resize(n_layers, None);
        let mut order: Vec<usize> = (0..clouds.len()).collect();
        if self.opts.shuffle {
            SeededRng::new(seed).derive_index(epoch as u64).shuffle(&mut order);
        }
        let mut var_sum = vec![0.0; n_layers];
        let mut last_states = Vec::new();
        let mut flat: Vec<T> = Vec::new();
        let mut sizes = Vec::new();
        for batch in order.chunks(self.opts.batch) {
            flat.clear();
            sizes.clear();
            for &c in batch {
                let cloud = &clouds[c];
                sizes.push(cloud.len());
                flat.extend(cloud.iter().flatten().map(|&v| T::from_f64_lossy(v)));
            }
            let mut states = Vec::with_capacity(n_layers);
            let trace = match self.opts.schedule {
                LayerSchedule::Simultaneous => {
                    let trace = Trace::run(&model.prepare(), &flat, dim, n_layers - 1)?;
                    for l in 0..n_layers {
                        states.push(self.update_layer(model, l, &trace, &flat)?);
                    }
                    trace
                }
                LayerSchedule::Greedy => {
                    let mut trace = None;
                    for l in 0..n_layers {
                        let t = Trace::run(&model.prepare(), &flat, dim, l)?;
                        states.push(self.update_layer(model, l, &t, &flat)?);
                        trace = Some(t);
                    }
                    trace.expect("encoder has layers")
                }
            };
            for (l, sum) in var_sum.iter_mut().enumerate() {
                let d = model.layers()[l].d_out();
                let mut off = 0;
                for &s in &sizes {
                    *sum += activity_variance(&trace.winners[l][off..off + s], d)?;
                    off += s;
                }
            }
            last_states = states;
        }
        let (weight_norm_mean, weight_norm_max) = weight_norms(model);
        Ok(EpochReport {
            epoch,
            activity: last_states,
            variance: var_sum.iter().map(|s| s / clouds.len() as f64).collect(),
            weight_norm_mean,
            weight_norm_max,
            seconds: start.elapsed().as_secs_f64(),
        })
    }

    fn update_layer<T: Scalar>(
        &mut self,
        model: &mut EncoderModel<T>,
        l: usize,
        trace: &Trace<T>,
        flat: &[T],
    ) -> Result<ActivityState> {
        let n_layers = model.layers().len();
        let layer = &mut model.layers_mut()[l];
        let d = layer.d_out();
        let state = ActivityState::from_winners(d, &trace.winners[l])?;
        let cfg = self.cfg;
        if cfg.kind.is_neaw() {
            if self.opts.scope == NeawScope::LastOnly && l + 1 != n_layers {
                return Ok(state);
            }
            let n = trace.winners[l].len();
            let steps = match self.opts.window {
                ActivityWindow::Batch => neaw_steps(d, &cfg, n, |j| state.deviation(j, cfg.activity_epsilon)),
                ActivityWindow::Ema { decay } => {
                    let batch = state.activities();
                    let p = match self.ema[l].take() {
                        Some(prev) => prev.iter().zip(&batch).map(|(a, b)| decay * a + (1.0 - decay) * b).collect(),
                        None => batch,
                    };
                    let p_star = state.optimal();
                    let steps = neaw_steps(d, &cfg, n, |j| Deviation::of(p[j], p_star, cfg.activity_epsilon));
                    self.ema[l] = Some(p);
                    steps
                }
            };
            if l == 0 {
                apply_dense(layer, flat, &steps);
            } else {
                apply_sparse(layer, &trace.sparse_inputs(l - 1), &steps);
            }
        } else {
            let sparse;
            let inputs = if l == 0 {
                BatchInputs::Dense(flat)
            } else {
                sparse = trace.sparse_inputs(l - 1);
                BatchInputs::Sparse(&sparse)
            };
            apply_baseline_batch(layer, inputs, &trace.winners[l], &trace.values[l], &cfg);
        }
        Ok(state)
    }
}

fn weight_norms<T: Scalar>(model: &EncoderModel<T>) -> (Vec<f64>, Vec<f64>) {
    model
        .layers()
        .iter()
        .map(|l| {
            let norms: Vec<f64> = l.weights().column_sq_norms().iter().map(|v| v.to_f64_lossy().sqrt()).collect();
            let mean = norms.iter().sum::<f64>() / norms.len() as f64;
            (mean, norms.iter().copied().fold(0.0, f64::max))
        })
        .unzip()
}

/// Single-epoch convenience wrapper with a fresh trainer.
pub fn train_encoder_epoch<T: Scalar>(
    model: &mut EncoderModel<T>,
    clouds: &[PointCloud],
    cfg: &RuleConfig,
    opts: &TrainOptions,
    seed: u64,
) -> Result<EpochReport> {
    EncoderTrainer::new(*cfg, *opts)?.epoch(model, clouds, seed, 0)
}

/// Runs `epochs` epochs, calling `on_epoch` after each. If an epoch leaves
/// any weight non-finite (plain Hebb's rule has no norm bound), the model
/// is restored to its state before that epoch and [`Error::Diverged`] is
/// returned.
pub fn train_encoder<T: Scalar>(
    model: &mut EncoderModel<T>,
    clouds: &[PointCloud],
    cfg: &RuleConfig,
    opts: &TrainOptions,
    epochs: usize,
    seed: u64,
    mut on_epoch: impl FnMut(&EpochReport, &EncoderModel<T>) -> Result<()>,
) -> Result<Vec<EpochReport>> {
    let mut trainer = EncoderTrainer::new(*cfg, *opts)?;
    let mut reports = Vec::with_capacity(epochs);
    for e in 0..epochs {
        let snapshot = model.clone();
        let r = trainer.epoch(model, clouds, seed, e)?;
        if let Some(layer) = model.layers().iter().position(|l| !l.weights().is_finite()) {
            *model = snapshot;
            return Err(Error::Diverged { epoch: e, layer });
        }
        on_epoch(&r, model)?;
        reports.push(r);
    }
    Ok(reports)
}

/// Per-epoch training telemetry CSV.
pub struct TelemetryWriter {
    inner: csv::Writer<File>,
    path: std::path::PathBuf,
}

impl TelemetryWriter {
    pub fn create(path: impl AsRef<Path>, layers: usize) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let mut inner = csv::Writer::from_path(&path).map_err(|e| Error::io(&path, e.into()))?;
        let mut header = vec!["epoch".to_string()];
        for prefix in ["variance", "weight_norm_mean", "weight_norm_max"] {
            header.extend((1..=layers).map(|l| format!("{prefix}_l{l}")));
        }
        header.push("wall_seconds".into());
        inner.write_record(&header).map_err(|e| Error::io(&path, e.into()))?;
        inner.flush().map_err(|e| Error::io(&path, e))?;
        Ok(Self { inner, path })
    }

    pub fn write(&mut self, r: &EpochReport) -> Result<()> {
        let mut row = vec![r.epoch.to_string()];
        for v in r.variance.iter().chain(&r.weight_norm_mean).chain(&r.weight_norm_max) {
            row.push(format!("{v:.17e}"));
        }
        row.push(format!("{:.6}", r.seconds));
        self.inner.write_record(&row).map_err(|e| Error::io(&self.path, e.into()))?;
        self.inner.flush().map_err(|e| Error::io(&self.path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::WtaLayer;
    use crate::numerics::Matrix;
    use crate::rules::RuleKind;

    fn cloud(points: &[[f64; 3]]) -> PointCloud {
        let pts: Vec<Vec<f64>> = points.iter().map(|p| p.to_vec()).collect();
        PointCloud::from_points(&pts, None, "c").unwrap()
    }

    fn random_clouds(seed: u64, n: usize, pts: usize) -> Vec<PointCloud> {
        let mut rng = SeededRng::new(seed);
        (0..n)
            .map(|_| {
                let p: Vec<Vec<f64>> = (0..pts).map(|_| (0..3).map(|_| rng.uniform_range(-1.0, 1.0)).collect()).collect();
                PointCloud::from_points(&p, None, "r").unwrap()
            })
            .collect()
    }

    #[test]
    fn lr_schedule() {
        assert!((limited_data_lr(0.1) - 0.1).abs() < 1e-15);
        assert!((limited_data_lr(0.25) - 0.04).abs() < 1e-15);
        assert_eq!(limited_data_lr(1.0), 0.01);
        assert_eq!(limited_data_lr(0.01), 0.1);
    }

    #[test]
    fn zero_eta_leaves_model_unchanged() {
        let clouds = random_clouds(1, 6, 20);
        for kind in RuleKind::ALL {
            let mut rng = SeededRng::new(2);
            let mut m = EncoderModel::<f64>::random(&[3, 8, 16], 0.5, &mut rng).unwrap();
            let before = m.clone();
            train_encoder_epoch(&mut m, &clouds, &RuleConfig::new(kind, 0.0), &TrainOptions::default(), 3).unwrap();
            assert_eq!(m, before, "{kind}");
        }
    }

    #[test]
    fn hand_traced_single_layer_batch() {
        // Two neurons on a 4-point cloud: w0 = (0,0,0) wins the three points
        // near the origin, w1 = (2,0,0) wins (1.5,0,0).
        let c = cloud(&[[0.1, 0.0, 0.0], [0.0, 0.2, 0.0], [1.5, 0.0, 0.0], [0.0, 0.0, -0.1]]);
        let w = Matrix::from_columns(&[vec![0.0, 0.0, 0.0], vec![2.0, 0.0, 0.0]]).unwrap();
        let mut m = EncoderModel::new(vec![WtaLayer::new(w).unwrap()]).unwrap();
        let cfg = RuleConfig::new(RuleKind::Neaw, 0.4);
        let r = train_encoder_epoch(&mut m, &[c], &cfg, &TrainOptions::default(), 0).unwrap();
        assert_eq!(r.activity[0].counts(), &[3, 1]);
        // p0 = 3/4 > 1/2: anti-Hebbian away from nearest input (0.1,0,0),
        // the first of the two inputs at distance 0.1.
        let s = 0.4 / 4.0;
        let col0 = m.layers()[0].column(0);
        assert_eq!(col0, vec![0.0 - s * 0.1, 0.0, 0.0]);
        // p1 = 1/4 < 1/2: Hebbian towards (1.5,0,0).
        let col1 = m.layers()[0].column(1);
        assert_eq!(col1, vec![2.0 + s * (1.5 - 2.0), 0.0, 0.0]);
        // Per-cloud variance 1 - (9 + 1)/16.
        assert!((r.variance[0] - 0.375).abs() < 1e-15);
    }

    #[test]
    fn checkpoint_resume_is_identical() {
        let clouds = random_clouds(3, 9, 16);
        let cfg = RuleConfig::new(RuleKind::Neaw, 0.05);
        let opts = TrainOptions::default();
        let mut rng = SeededRng::new(4);
        let init = EncoderModel::<f64>::random(&[3, 8, 16, 32], 0.5, &mut rng).unwrap();
        let mut full = init.clone();
        train_encoder(&mut full, &clouds, &cfg, &opts, 2, 11, |_, _| Ok(())).unwrap();
        let mut resumed = init.clone();
        let mut t = EncoderTrainer::new(cfg, opts).unwrap();
        t.epoch(&mut resumed, &clouds, 11, 0).unwrap();
        let checkpoint = resumed.clone();
        let mut t2 = EncoderTrainer::new(cfg, opts).unwrap();
        let mut from_ckpt = checkpoint;
        t2.epoch(&mut from_ckpt, &clouds, 11, 1).unwrap();
        assert_eq!(from_ckpt, full);
        assert_ne!(full, init);
    }

    #[test]
    fn variants_run_and_stay_finite() {
        let clouds = random_clouds(5, 8, 24);
        let mut rng = SeededRng::new(6);
        let init = EncoderModel::<f64>::random(&[3, 8, 16, 32], 0.5, &mut rng).unwrap();
        let variants = [
            TrainOptions::default(),
            TrainOptions {
                schedule: LayerSchedule::Greedy,
                ..Default::default()
            },
            TrainOptions {
                window: ActivityWindow::Ema { decay: 0.9 },
                ..Default::default()
            },
            TrainOptions {
                scope: NeawScope::LastOnly,
                ..Default::default()
            },
        ];
        for kind in RuleKind::ALL {
            for opts in &variants {
                let mut m = init.clone();
                let reports = train_encoder(&mut m, &clouds, &RuleConfig::new(kind, 0.05), opts, 2, 1, |_, _| Ok(())).unwrap();
                assert!(m.is_finite());
                assert_eq!(reports.len(), 2);
                for r in &reports {
                    assert_eq!(r.variance.len(), 3);
                    assert!(r.variance.iter().all(|v| (0.0..1.0).contains(v)));
                    assert_eq!(r.activity[2].total(), 4 * 24);
                }
                if opts.scope == NeawScope::LastOnly && kind.is_neaw() {
                    assert_eq!(m.layers()[0], init.layers()[0]);
                    assert_eq!(m.layers()[1], init.layers()[1]);
                }
            }
        }
    }

    #[test]
    fn invalid_options_rejected() {
        let cfg = RuleConfig::default();
        assert!(EncoderTrainer::new(cfg, TrainOptions { batch: 0, ..Default::default() }).is_err());
        let ema = TrainOptions {
            window: ActivityWindow::Ema { decay: 1.0 },
            ..Default::default()
        };
        assert!(EncoderTrainer::new(cfg, ema).is_err());
        let mut rng = SeededRng::new(1);
        let mut m = EncoderModel::<f64>::random(&[3, 4], 0.5, &mut rng).unwrap();
        assert!(train_encoder_epoch(&mut m, &[], &cfg, &TrainOptions::default(), 0).is_err());
    }

    #[test]
    fn telemetry_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        let clouds = random_clouds(7, 4, 10);
        let mut rng = SeededRng::new(1);
        let mut m = EncoderModel::<f64>::random(&[3, 4, 6], 0.5, &mut rng).unwrap();
        let mut w = TelemetryWriter::create(&path, 2).unwrap();
        train_encoder(&mut m, &clouds, &RuleConfig::default(), &TrainOptions::default(), 3, 1, |r, _| w.write(r)).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4);
        assert!(lines[0].starts_with("epoch,variance_l1,variance_l2,weight_norm_mean_l1"));
        assert!(lines[3].starts_with("2,"));
    }
}
