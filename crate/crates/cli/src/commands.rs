use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use neaw::analysis::{
    activity_report, class_prototypes, deactivation_ablation, dissimilarity, export_artifacts, median,
    run_corollary_suite, run_eq5_suite, run_ordering_suite, run_theorem1_suite, train_rule, CorollaryMode,
    ExperimentConfig, Prototype, UpdateFault, VerifySummary,
};
use neaw::classifier::{evaluate, evaluate_features, train, ClassifierModel};
use neaw::data::{
    load_modelnet, point_mnist_dataset, read_dataset, read_idx_images, read_idx_labels, stratified_sample_indices,
    stratified_subset, synthetic_dataset, write_dataset, DatasetSplit, DEFAULT_JITTER, DEFAULT_MNIST_POINTS,
    DEFAULT_POINTS,
};
use neaw::encoder::{global_features, EncoderModel, WtaLayer};
use neaw::numerics::derive_seed;
use neaw::persist::{encoder_bytes, sidecar_path, write_atomic, ClassifierMeta, ModelFile, ModelMeta};
use neaw::rules::{RuleKind, TelemetryWriter};
use neaw::SeededRng;
use serde::Serialize;

use crate::manifest::{sha256_hex, RunManifest};
use crate::settings::{DatasetKind, Flags, Suite};
use crate::CliError;

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("report serializes");
    bytes.push(b'\n');
    write_atomic(path, &bytes)?;
    Ok(())
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))
}

fn load_splits(flags: &Flags) -> Result<BTreeMap<String, DatasetSplit>, CliError> {
    Ok(read_dataset(flags.data_dir()?)?)
}

fn take_split(splits: &mut BTreeMap<String, DatasetSplit>, name: &str) -> Result<DatasetSplit, CliError> {
    splits.remove(name).ok_or_else(|| {
        let have: Vec<_> = splits.keys().cloned().collect();
        CliError::Usage(format!("dataset has no '{name}' split (found: {})", have.join(", ")))
    })
}

/// The labeled training set after the per-class `--fraction` drop. Encoder
/// and classifier see the same subset.
fn training_split(flags: &Flags, splits: &mut BTreeMap<String, DatasetSplit>) -> Result<DatasetSplit, CliError> {
    let train = take_split(splits, "train")?;
    if flags.fraction() < 1.0 {
        Ok(stratified_subset(&train, flags.fraction(), flags.phase_seed("subset"))?)
    } else {
        Ok(train)
    }
}

fn find_file(dir: &Path, stems: &[&str]) -> Result<PathBuf, CliError> {
    for stem in stems {
        for ext in ["", ".gz"] {
            let p = dir.join(format!("{stem}{ext}"));
            if p.is_file() {
                return Ok(p);
            }
        }
    }
    Err(CliError::Usage(format!(
        "no {} (or .gz) in {}",
        stems.join(" / "),
        dir.display()
    )))
}

fn mnist_split(flags: &Flags, split: &str, subset: Option<usize>) -> Result<DatasetSplit, CliError> {
    let dir = flags.data_dir()?;
    let (images, labels) = match split {
        "train" => (
            ["train-images-idx3-ubyte", "train-images.idx3-ubyte", "mnist-train.images.idx"],
            ["train-labels-idx1-ubyte", "train-labels.idx1-ubyte", "mnist-train.labels.idx"],
        ),
        _ => (
            ["t10k-images-idx3-ubyte", "t10k-images.idx3-ubyte", "mnist-test.images.idx"],
            ["t10k-labels-idx1-ubyte", "t10k-labels.idx1-ubyte", "mnist-test.labels.idx"],
        ),
    };
    let images = read_idx_images(find_file(dir, &images)?)?;
    let labels = read_idx_labels(find_file(dir, &labels)?)?;
    let points = flags.points.unwrap_or(DEFAULT_MNIST_POINTS);
    // Subsample before conversion so unused images cost nothing.
    let chosen: Vec<usize> = match subset {
        Some(n) => {
            let l: Vec<usize> = labels.iter().map(|&d| d as usize).collect();
            stratified_sample_indices(&l, 10, n, derive_seed(flags.phase_seed("gen-subset"), split))?
        }
        None => (0..labels.len()).collect(),
    };
    let picked = neaw::data::IdxImages {
        rows: images.rows,
        cols: images.cols,
        pixels: chosen.iter().flat_map(|&i| images.image(i).to_vec()).collect(),
    };
    let picked_labels: Vec<u8> = chosen.iter().map(|&i| labels[i]).collect();
    Ok(point_mnist_dataset(&picked, &picked_labels, points, flags.phase_seed("gen"), split)?)
}

pub fn gen(flags: &Flags, name: &str) -> Result<(), CliError> {
    let out = flags.out_dir()?.to_path_buf();
    let kind = flags.dataset.unwrap_or(DatasetKind::Synthetic);
    let mut m = RunManifest::new(name, flags);
    let (train, test) = m.phase("load", || match kind {
        DatasetKind::Synthetic => {
            let points = flags.points.unwrap_or(DEFAULT_POINTS);
            let jitter = flags.jitter.unwrap_or(DEFAULT_JITTER);
            let seed = flags.phase_seed("gen");
            Ok((
                synthetic_dataset(flags.train_per_class.unwrap_or(200), points, seed, jitter, "train")?,
                synthetic_dataset(flags.test_per_class.unwrap_or(50), points, seed, jitter, "test")?,
            ))
        }
        DatasetKind::PointMnist => Ok((mnist_split(flags, "train", flags.n_train)?, mnist_split(flags, "test", flags.n_test)?)),
        DatasetKind::Modelnet => Ok(load_modelnet(
            flags.data_dir()?,
            flags.points.unwrap_or(DEFAULT_POINTS),
            flags.phase_seed("gen"),
        )?),
    })?;
    m.resolve("dataset", kind);
    m.resolve("train_counts", train.class_counts());
    m.resolve("test_counts", test.class_counts());
    create_dir(&out)?;
    let files = m.phase("write", || Ok(write_dataset(&out, &[("train", &train), ("test", &test)])?))?;
    for f in files {
        m.add_file(f);
    }
    m.finish(&out)?;
    println!(
        "{}",
        serde_json::json!({ "train": train.len(), "test": test.len(), "classes": train.class_names })
    );
    Ok(())
}

pub fn experiment_config(flags: &Flags, input_dim: usize) -> Result<ExperimentConfig, CliError> {
    let rule = flags.rule_config()?;
    Ok(ExperimentConfig {
        dims: flags.encoder_dims(input_dim)?,
        epochs: flags.epochs(),
        eta: rule.eta,
        a: rule.a,
        b: rule.b,
        init: flags.weight_init(),
        opts: flags.train_options(),
    })
}

pub fn train_encoder(flags: &Flags, name: &str) -> Result<(), CliError> {
    let out = flags.out_dir()?.to_path_buf();
    let model_path = flags.model_path()?;
    let mut m = RunManifest::new(name, flags);
    let train = m.phase("load", || training_split(flags, &mut load_splits(flags)?))?;
    let dim = train.clouds.first().ok_or(neaw::Error::Empty("training split"))?.dim();
    let cfg = experiment_config(flags, dim)?;
    let rule = flags.rule_kind()?;
    m.resolve("eta", cfg.eta);
    m.resolve("dims", &cfg.dims);
    m.resolve("train_clouds", train.len());
    let run = m.phase("train-encoder", || Ok(train_rule(&train.clouds, rule, flags.seed(), &cfg)?))?;
    if let Some(e) = run.diverged {
        eprintln!("warning: weights diverged during epoch {e}; keeping the weights from before it");
    }
    create_dir(&out)?;
    if let Some(parent) = model_path.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    let telemetry = out.join("telemetry.csv");
    let mut w = TelemetryWriter::create(&telemetry, cfg.dims.len() - 1)?;
    for r in &run.reports {
        w.write(r)?;
    }
    ModelFile::new(run.model.clone()).save(&model_path)?;
    ModelMeta {
        dims: cfg.dims.clone(),
        rule: rule.to_string(),
        eta: cfg.eta,
        a: cfg.a,
        b: cfg.b,
        epochs: cfg.epochs,
        batch: cfg.opts.batch,
        seed: flags.seed(),
        diverged_epoch: run.diverged,
        classifier: None,
    }
    .save(&model_path)?;
    m.add_file(&model_path);
    m.add_file(sidecar_path(&model_path));
    m.add_file(&telemetry);
    m.resolve("final_variance", run.final_variance);
    m.finish(&out)?;
    println!(
        "{}",
        serde_json::json!({
            "rule": rule.to_string(),
            "epochs_run": run.reports.len(),
            "diverged_epoch": run.diverged,
            "final_variance": run.final_variance,
            "model": model_path,
        })
    );
    Ok(())
}

#[derive(Serialize)]
struct ClassifierReport {
    encoder_sha256: String,
    class_names: Vec<String>,
    train: neaw::classifier::EvalReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    test: Option<neaw::classifier::EvalReport>,
    losses: Vec<f64>,
}

/// Nudges one weight; only reachable through a hidden test flag.
fn mutate_encoder(enc: &EncoderModel<f64>) -> Result<EncoderModel<f64>, CliError> {
    let mut layers: Vec<WtaLayer<f64>> = enc.layers().to_vec();
    let mut w = layers[0].weights().clone();
    w.set(0, 0, w.get(0, 0) + 1e-3);
    layers[0] = WtaLayer::new(w)?;
    Ok(EncoderModel::new(layers)?)
}

pub fn train_classifier(flags: &Flags, name: &str) -> Result<(), CliError> {
    let out = flags.out_dir()?.to_path_buf();
    let model_path = flags.model_path()?;
    let mut m = RunManifest::new(name, flags);
    let mut file = ModelFile::<f64>::load(&model_path)?;
    let guard = sha256_hex(&encoder_bytes(&file.encoder));
    let mut splits = load_splits(flags)?;
    let train_split = training_split(flags, &mut splits)?;
    let test_split = splits.remove("test");
    let features = m.phase("features", || Ok(global_features(&file.encoder, &train_split.clouds)?))?;
    let labels = train_split.labels();
    let mut rng = SeededRng::new(flags.phase_seed("classifier-init"));
    let mut clf = ClassifierModel::with_default_widths(file.encoder.output_dim(), train_split.num_classes(), &mut rng)?;
    let cfg = flags.clf_config(flags.phase_seed("classifier-train"));
    let losses = m.phase("train-classifier", || Ok(train(&mut clf, &features, &labels, &cfg)?))?;
    if flags.fault_mutate_encoder {
        file.encoder = mutate_encoder(&file.encoder)?;
    }
    let after = sha256_hex(&encoder_bytes(&file.encoder));
    if after != guard {
        return Err(CliError::Violation(format!(
            "encoder bytes changed during classifier training ({guard} -> {after}); model not written"
        )));
    }
    let report = m.phase("evaluate", || {
        Ok(ClassifierReport {
            encoder_sha256: guard.clone(),
            class_names: train_split.class_names.clone(),
            train: evaluate_features(&clf, &features, &labels, "train")?,
            test: match &test_split {
                Some(t) if !t.is_empty() => Some(evaluate(&file.encoder, &clf, t, "test")?),
                _ => None,
            },
            losses,
        })
    })?;
    let mut meta = ModelMeta::load(&model_path).unwrap_or_default();
    meta.classifier = Some(ClassifierMeta {
        dims: clf.dims(),
        norm_order: format!("{:?}", clf.order()),
        epochs: cfg.epochs,
        lr: cfg.lr,
        batch: cfg.batch,
        seed: flags.seed(),
    });
    file.classifier = Some(clf);
    file.save(&model_path)?;
    meta.save(&model_path)?;
    create_dir(&out)?;
    let report_path = out.join("classifier_report.json");
    write_json(&report_path, &report)?;
    for f in [model_path.clone(), sidecar_path(&model_path), report_path] {
        m.add_file(f);
    }
    m.finish(&out)?;
    println!(
        "{}",
        serde_json::json!({
            "train_accuracy": report.train.accuracy,
            "test_accuracy": report.test.as_ref().map(|t| t.accuracy),
            "encoder_sha256": guard,
        })
    );
    Ok(())
}

fn load_model_and_split(flags: &Flags, default_split: &str) -> Result<(ModelFile<f64>, DatasetSplit), CliError> {
    let file = ModelFile::<f64>::load(flags.model_path()?)?;
    let mut splits = load_splits(flags)?;
    let split = take_split(&mut splits, flags.split.as_deref().unwrap_or(default_split))?;
    Ok((file, split))
}

pub fn eval(flags: &Flags, name: &str) -> Result<(), CliError> {
    let mut m = RunManifest::new(name, flags);
    let (file, split) = load_model_and_split(flags, "test")?;
    let clf = file
        .classifier
        .as_ref()
        .ok_or_else(|| CliError::Usage("model file has no classifier section; run train-classifier first".into()))?;
    let split_name = flags.split.as_deref().unwrap_or("test");
    let report = m.phase("evaluate", || Ok(evaluate(&file.encoder, clf, &split, split_name)?))?;
    if let Some(out) = &flags.out {
        create_dir(out)?;
        let p = out.join("eval_report.json");
        write_json(&p, &report)?;
        m.add_file(p);
        m.finish(out)?;
    }
    println!("{}", serde_json::to_string(&report).expect("report serializes"));
    Ok(())
}

#[derive(Serialize)]
struct AnalysisReport {
    split: String,
    clouds: usize,
    variance: f64,
    pooled_variance: f64,
    active_neurons: usize,
    class_names: Vec<String>,
    dissimilarity: Vec<Vec<f64>>,
    frobenius: f64,
}

pub fn analyze(flags: &Flags, name: &str) -> Result<(), CliError> {
    let out = flags.out_dir()?.to_path_buf();
    let mut m = RunManifest::new(name, flags);
    let (file, split) = load_model_and_split(flags, "train")?;
    let split_name = flags.split.clone().unwrap_or_else(|| "train".into());
    let act = m.phase("activity", || Ok(activity_report(&file.encoder, &split)?))?;
    let features: Vec<Vec<f64>> = m.phase("features", || {
        Ok(global_features(&file.encoder, &split.clouds)?.into_iter().map(|f| f.values).collect())
    })?;
    let labels = split.labels();
    let k = split.num_classes();
    let protos = class_prototypes(&features, &labels, k, Prototype::Mean)?;
    let dis = dissimilarity(&protos, &split.class_names)?;
    let ablation = m.phase("ablation", || {
        let mut csv = String::from("neuron,delta_frobenius,cross_class_variance\n");
        for j in 0..file.encoder.output_dim() {
            let a = deactivation_ablation(&features, &labels, k, &split.class_names, j)?;
            csv.push_str(&format!("{j},{:.16e},{:.16e}\n", a.delta_frobenius, a.cross_class_variance));
        }
        Ok(csv)
    })?;
    let report = AnalysisReport {
        split: split_name,
        clouds: split.len(),
        variance: act.variance,
        pooled_variance: act.pooled_variance,
        active_neurons: act.wins.iter().filter(|&&w| w > 0).count(),
        class_names: split.class_names.clone(),
        dissimilarity: (0..k).map(|r| dis.d.row(r).to_vec()).collect(),
        frobenius: dis.frobenius,
    };
    create_dir(&out)?;
    let rp = out.join("analysis.json");
    write_json(&rp, &report)?;
    let ap = out.join("ablation.csv");
    write_atomic(&ap, ablation.as_bytes())?;
    m.add_file(rp);
    m.add_file(ap);
    m.finish(&out)?;
    println!(
        "{}",
        serde_json::json!({ "variance": report.variance, "active_neurons": report.active_neurons, "frobenius": report.frobenius })
    );
    Ok(())
}

pub fn export(flags: &Flags, name: &str) -> Result<(), CliError> {
    let out = flags.out_dir()?.to_path_buf();
    let mut m = RunManifest::new(name, flags);
    let (file, split) = load_model_and_split(flags, "train")?;
    let files = m.phase("export", || Ok(export_artifacts(&file.encoder, &split, &out)?))?;
    for f in files {
        m.add_file(f);
    }
    m.finish(&out)?;
    Ok(())
}

fn default_n(suite: Suite) -> usize {
    match suite {
        Suite::Theorem1 | Suite::Corollaries => 100_000,
        Suite::Eq5 => 1000,
        Suite::Ordering => 10,
    }
}

pub fn verify(flags: &Flags, name: &str) -> Result<(), CliError> {
    let suite = flags
        .suite
        .ok_or_else(|| CliError::Usage("--suite is required (theorem1, corollaries, eq5, ordering)".into()))?;
    let n = flags.n.unwrap_or(default_n(suite));
    let seed = flags.seed();
    let mut m = RunManifest::new(name, flags);
    let summaries: Vec<VerifySummary> = m.phase("verify", || match suite {
        Suite::Theorem1 => {
            let fault = if flags.fault_sign_flip { UpdateFault::SignFlip } else { UpdateFault::None };
            Ok(vec![run_theorem1_suite(n, seed, fault)?])
        }
        Suite::Corollaries => Ok(vec![
            run_corollary_suite(n, seed, CorollaryMode::BothHebbian)?,
            run_corollary_suite(n, seed, CorollaryMode::BothAnti)?,
        ]),
        Suite::Eq5 => Ok(vec![run_eq5_suite(n, seed)?]),
        Suite::Ordering => {
            let train = training_split(flags, &mut load_splits(flags)?)?;
            let dim = train.clouds.first().ok_or(neaw::Error::Empty("training split"))?.dim();
            let cfg = experiment_config(flags, dim)?;
            Ok(vec![run_ordering_suite(&train.clouds, n, seed, &cfg)?])
        }
    })?;
    let json = if summaries.len() == 1 {
        serde_json::to_value(&summaries[0])
    } else {
        serde_json::to_value(&summaries)
    }
    .expect("summary serializes");
    if let Some(out) = &flags.out {
        create_dir(out)?;
        let p = out.join(format!("verify_{}.json", suite_name(suite)));
        write_json(&p, &json)?;
        m.add_file(p);
        m.finish(out)?;
    }
    println!("{json}");
    let violations: usize = summaries.iter().map(|s| s.violations).sum();
    if violations > 0 {
        return Err(CliError::Violation(format!(
            "{violations} violation(s) in suite {}",
            suite_name(suite)
        )));
    }
    Ok(())
}

fn suite_name(s: Suite) -> &'static str {
    match s {
        Suite::Theorem1 => "theorem1",
        Suite::Corollaries => "corollaries",
        Suite::Eq5 => "eq5",
        Suite::Ordering => "ordering",
    }
}

/// Default encoder epochs of one sweep cell.
pub const SWEEP_EPOCHS: usize = 5;

pub fn sweep_ab(flags: &Flags, name: &str) -> Result<(), CliError> {
    let a_values = flags.grid("a")?;
    let b_values = flags.grid("b")?;
    if a_values.is_empty() || b_values.is_empty() {
        return Err(CliError::Usage("sweep grids must be nonempty".into()));
    }
    let out = flags.out_dir()?.to_path_buf();
    let repeats = flags.repeats.unwrap_or(1);
    let rule = match flags.rule {
        Some(_) => flags.rule_kind()?,
        None => RuleKind::Neaw,
    };
    let mut m = RunManifest::new(name, flags);
    let mut splits = load_splits(flags)?;
    let train_split = training_split(flags, &mut splits)?;
    let test_split = splits.remove("test").filter(|t| !t.is_empty());
    let dim = train_split.clouds.first().ok_or(neaw::Error::Empty("training split"))?.dim();
    let base = ExperimentConfig {
        epochs: flags.epochs.unwrap_or(SWEEP_EPOCHS),
        ..experiment_config(flags, dim)?
    };
    let epochs = base.epochs;
    m.resolve("epochs", epochs);
    m.resolve("rule", rule.to_string());
    let mut csv = String::from("a,b,repeats,final_variance,accuracy");
    for e in 0..epochs {
        csv.push_str(&format!(",variance_e{e}"));
    }
    csv.push('\n');
    let rows = m.phase("sweep", || {
        let mut rows = Vec::new();
        for &a in &a_values {
            for &b in &b_values {
                let cfg = ExperimentConfig { a, b, ..base.clone() };
                let mut finals = Vec::new();
                let mut accs = Vec::new();
                let mut traj = vec![Vec::new(); epochs];
                for r in 0..repeats {
                    let seed = derive_seed(flags.seed(), &format!("sweep-{r}"));
                    let run = train_rule(&train_split.clouds, rule, seed, &cfg)?;
                    finals.push(run.final_variance);
                    let last = cfg.dims.len() - 2;
                    for (e, rep) in run.reports.iter().enumerate() {
                        traj[e].push(rep.variance[last]);
                    }
                    if let Some(test) = &test_split {
                        let feats = global_features(&run.model, &train_split.clouds)?;
                        let mut rng = SeededRng::new(derive_seed(seed, "classifier-init"));
                        let mut clf = ClassifierModel::with_default_widths(
                            run.model.output_dim(),
                            train_split.num_classes(),
                            &mut rng,
                        )?;
                        train(&mut clf, &feats, &train_split.labels(), &flags.clf_config(derive_seed(seed, "classifier-train")))?;
                        accs.push(evaluate(&run.model, &clf, test, "test")?.accuracy);
                    }
                }
                let mut row = format!(
                    "{a},{b},{repeats},{:.16e},{}",
                    median(&finals),
                    if accs.is_empty() { String::new() } else { format!("{:.6}", median(&accs)) }
                );
                for t in &traj {
                    // Diverged runs stop early; their missing epochs are left blank.
                    if t.len() == repeats {
                        row.push_str(&format!(",{:.16e}", median(t)));
                    } else {
                        row.push(',');
                    }
                }
                rows.push(row);
            }
        }
        Ok(rows)
    })?;
    for r in &rows {
        csv.push_str(r);
        csv.push('\n');
    }
    create_dir(&out)?;
    let p = out.join("sweep_ab.csv");
    write_atomic(&p, csv.as_bytes())?;
    m.add_file(&p);
    m.finish(&out)?;
    print!("{csv}");
    Ok(())
}
