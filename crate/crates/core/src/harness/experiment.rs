//! Replicated experiments and sweeps.
//!
//! Layout of one experiment directory:
//!
//! ```text
//! <out>/config.ini              resolved config
//! <out>/replicate_<seed>/metrics.csv   per-epoch curves
//! <out>/replicate_<seed>/result.csv    metric,value
//! <out>/replicate_<seed>/ood.csv       pool,fpr95,auroc,aupr   (if OOD pools)
//! <out>/replicate_<seed>/landscape.csv i,j,a,b,loss            (if enabled)
//! <out>/replicate_<seed>/params.txt
//! <out>/summary.csv                    metric,mean,std,replicates
//! <out>/error_manifest.txt             only when a stage failed
//! ```
//!
//! Every CSV starts with the resolved config as `# key = value` lines.
//! Seeds for data, noise and pools are derived from `data.seed`, the
//! replicate seed and a role name, so replicates never share draws and a
//! rerun reproduces every byte.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::Rng;

use super::config::{AuxKind, ExperimentConfig, NoiseKind};
use super::data::{generate_blobs, generate_closedset_pool, generate_openset_pool, OpenSetKind};
use crate::analyzer;
use crate::error::{LabError, Result};
use crate::netcore::NetworkParams;
use crate::noisegen::{
    assign_fixed_labels, corrupt_circular, corrupt_instance_dependent, corrupt_symmetric,
    empirical_transition_matrix, inject_open_set, mix_auxiliary, AuxiliaryPool, LabeledDataset,
    TransitionMatrix,
};
use crate::oodeval::{self, OodMetrics};
use crate::rng;
use crate::training::{self, AuxLabelMode, Regularizer, TrainConfig, TrainData, TrainOutcome};

/// Window for the tail-averaged test accuracy.
pub const TAIL_WINDOW: usize = 5;

/// Seed for one role within one replicate.
pub fn derive_seed(base: u64, replicate: u64, role: &str) -> u64 {
    rng::indexed_stream(base, role, replicate).gen()
}

/// Everything a replicate trains and evaluates on.
#[derive(Debug, Clone)]
pub struct ReplicateInputs {
    pub clean_train: LabeledDataset,
    pub train: LabeledDataset,
    pub test: LabeledDataset,
    pub aux: Option<AuxiliaryPool>,
    pub transition: Option<TransitionMatrix>,
    pub ood: Vec<(String, AuxiliaryPool)>,
}

fn read_dataset(path: &Path, k: usize) -> Result<LabeledDataset> {
    LabeledDataset::read_csv(File::open(path)?, k)
}

fn clean_datasets(
    config: &ExperimentConfig,
    seed: u64,
) -> Result<(LabeledDataset, LabeledDataset)> {
    let d = &config.data;
    let train = match &d.train_file {
        Some(p) => read_dataset(p, d.blobs.k)?,
        None => generate_blobs(&d.blobs, d.n_train, derive_seed(d.seed, seed, "train_data"))?,
    };
    let test = match &d.test_file {
        Some(p) => read_dataset(p, d.blobs.k)?,
        None => generate_blobs(&d.blobs, d.n_test, derive_seed(d.seed, seed, "test_data"))?,
    };
    Ok((train, test))
}

/// Briefly trained clean-label model used to rank instances for
/// instance-dependent noise.
fn weak_model(
    config: &ExperimentConfig,
    clean: &LabeledDataset,
    seed: u64,
) -> Result<NetworkParams> {
    let mut cfg = config.train.clone();
    cfg.regularizer = Regularizer::Standard;
    cfg.compose_odnl = false;
    cfg.epochs = config.noise.weak_epochs.max(1);
    cfg.lr.decay_epochs.clear();
    cfg.train_batch = cfg.train_batch.min(clean.len());
    cfg.seed = derive_seed(config.data.seed, seed, "weak_model");
    Ok(training::train(&cfg, TrainData::new(clean))?.params)
}

/// Applies the configured label noise and returns the matching transition
/// matrix when one exists.
pub fn corrupt_dataset(
    config: &ExperimentConfig,
    clean: &LabeledDataset,
    seed: u64,
) -> Result<(LabeledDataset, Option<TransitionMatrix>)> {
    let (k, rate) = (clean.num_classes(), config.noise.rate);
    let mut noise_rng = rng::indexed_stream(config.data.seed, "label_noise", seed);
    Ok(match config.noise.kind {
        NoiseKind::None => (clean.clone(), Some(TransitionMatrix::identity(k))),
        NoiseKind::Symmetric => (
            corrupt_symmetric(clean, rate, &mut noise_rng)?,
            Some(TransitionMatrix::symmetric(k, rate)),
        ),
        NoiseKind::Circular => (
            corrupt_circular(clean, rate, &mut noise_rng)?,
            Some(TransitionMatrix::circular(k, rate)),
        ),
        NoiseKind::InstanceDependent => {
            let weak = weak_model(config, clean, seed)?;
            let noisy = corrupt_instance_dependent(clean, rate, &weak, &mut noise_rng)?;
            let t = empirical_transition_matrix(&noisy)?;
            (noisy, Some(t))
        }
        NoiseKind::OpenSet => {
            let count = ((rate * clean.len() as f64).round() as usize).max(1);
            let pool = generate_openset_pool(
                OpenSetKind::Ring,
                count,
                &config.data.blobs,
                derive_seed(config.data.seed, seed, "open_set_noise"),
            )?;
            (inject_open_set(clean, rate, &pool, &mut noise_rng)?, None)
        }
    })
}

/// The auxiliary pool named by `aux.kind` (or loaded from `aux.file`).
pub fn build_aux_pool(config: &ExperimentConfig, seed: u64) -> Result<AuxiliaryPool> {
    let (spec, base, m) = (&config.data.blobs, config.data.seed, config.aux.size);
    let mut pool = match (&config.aux.file, config.aux.kind) {
        (Some(path), _) => AuxiliaryPool::read_csv(File::open(path)?, spec.k)?,
        (None, AuxKind::Open(kind)) => {
            generate_openset_pool(kind, m, spec, derive_seed(base, seed, "aux_pool"))?
        }
        (None, AuxKind::ClosedSameMixture) => {
            generate_closedset_pool(m, spec, derive_seed(base, seed, "closed_pool"))?
        }
        (None, AuxKind::Mix(alpha)) => {
            let open = generate_openset_pool(
                OpenSetKind::Ring,
                m,
                spec,
                derive_seed(base, seed, "aux_pool"),
            )?;
            let closed = generate_closedset_pool(m, spec, derive_seed(base, seed, "closed_pool"))?;
            mix_auxiliary(
                &open,
                &closed,
                alpha,
                &mut rng::indexed_stream(base, "aux_mix", seed),
            )?
        }
    };
    if config.aux.mode == AuxLabelMode::Fixed && pool.fixed_labels().is_none() {
        pool = assign_fixed_labels(
            &pool,
            spec.k,
            &mut rng::indexed_stream(base, "aux_fixed_labels", seed),
        )?;
    }
    Ok(pool)
}

pub fn build_ood_pools(
    config: &ExperimentConfig,
    seed: u64,
) -> Result<Vec<(String, AuxiliaryPool)>> {
    config
        .ood
        .pools
        .iter()
        .map(|&kind| {
            let name = AuxKind::Open(kind).to_string();
            let pool = generate_openset_pool(
                kind,
                config.ood.size,
                &config.data.blobs,
                derive_seed(config.data.seed, seed, &format!("ood_{name}")),
            )?;
            Ok((name, pool))
        })
        .collect()
}

pub fn prepare_replicate(config: &ExperimentConfig, seed: u64) -> Result<ReplicateInputs> {
    let (clean_train, test) = clean_datasets(config, seed)?;
    let (train, transition) = corrupt_dataset(config, &clean_train, seed)?;
    let aux = if config.train.uses_aux_pool() {
        Some(build_aux_pool(config, seed)?)
    } else {
        None
    };
    Ok(ReplicateInputs {
        clean_train,
        train,
        test,
        aux,
        transition,
        ood: build_ood_pools(config, seed)?,
    })
}

/// The training config a replicate actually runs.
pub fn replicate_train_config(config: &ExperimentConfig, seed: u64) -> TrainConfig {
    let mut cfg = config.train.clone();
    cfg.seed = seed;
    cfg.aux_label_mode = config.aux.mode;
    cfg
}

pub fn train_replicate(
    config: &ExperimentConfig,
    inputs: &ReplicateInputs,
    seed: u64,
) -> Result<TrainOutcome> {
    let mut data = TrainData::new(&inputs.train).with_test(&inputs.test);
    data.aux = inputs.aux.as_ref();
    data.transition = inputs.transition.as_ref();
    training::train(&replicate_train_config(config, seed), data)
}

/// Ordered `metric, value` pairs of one replicate.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateResult {
    pub seed: u64,
    pub values: Vec<(String, f64)>,
}

impl ReplicateResult {
    pub fn get(&self, metric: &str) -> Option<f64> {
        self.values
            .iter()
            .find(|(k, _)| k == metric)
            .map(|(_, v)| *v)
    }
}

fn push(values: &mut Vec<(String, f64)>, key: &str, v: Option<f64>) {
    if let Some(v) = v {
        values.push((key.to_string(), v));
    }
}

fn summarize_outcome(outcome: &TrainOutcome, ood: &[(String, OodMetrics)]) -> Vec<(String, f64)> {
    let last = outcome.final_metrics();
    let best = outcome
        .metrics
        .iter()
        .filter_map(|m| m.test_acc)
        .fold(None, |acc: Option<f64>, a| {
            Some(acc.map_or(a, |b| b.max(a)))
        });
    let mut values = Vec::new();
    push(&mut values, "final_test_acc", last.test_acc);
    push(
        &mut values,
        "tail5_test_acc",
        outcome.tail_test_accuracy(TAIL_WINDOW),
    );
    push(&mut values, "best_test_acc", best);
    push(&mut values, "test_acc_drop", outcome.test_accuracy_drop());
    push(&mut values, "final_train_loss", Some(last.train_loss));
    push(&mut values, "final_clean_loss", last.clean_loss);
    push(&mut values, "final_noisy_loss", last.noisy_loss);
    push(&mut values, "final_aux_loss", last.aux_loss);
    if !ood.is_empty() {
        let n = ood.len() as f64;
        push(
            &mut values,
            "ood_fpr95",
            Some(ood.iter().map(|(_, m)| m.fpr95).sum::<f64>() / n),
        );
        push(
            &mut values,
            "ood_auroc",
            Some(ood.iter().map(|(_, m)| m.auroc).sum::<f64>() / n),
        );
        push(
            &mut values,
            "ood_aupr",
            Some(ood.iter().map(|(_, m)| m.aupr).sum::<f64>() / n),
        );
    }
    values
}

fn header_lines<W: Write>(w: &mut W, header: &[(String, String)]) -> Result<()> {
    for (key, value) in header {
        writeln!(w, "# {key} = {value}")?;
    }
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

/// Writes `metric,value` rows under a config header.
pub fn write_result_csv<W: Write>(
    mut writer: W,
    header: &[(String, String)],
    values: &[(String, f64)],
) -> Result<()> {
    header_lines(&mut writer, header)?;
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["metric", "value"])?;
    for (k, v) in values {
        w.write_record([k.clone(), v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Skips `#` lines and parses `metric,value` rows back.
pub fn read_result_csv(path: &Path) -> Result<Vec<(String, f64)>> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)?;
    reader
        .records()
        .map(|r| {
            let r = r?;
            let value = r[1].parse().map_err(|_| {
                LabError::Parse(format!("{}: bad value {:?}", path.display(), &r[1]))
            })?;
            Ok((r[0].to_string(), value))
        })
        .collect()
}

/// Text format: `# layer_sizes = a,b,c` and `# count = n` lines, then one
/// value per line.
pub fn write_params<W: Write>(mut w: W, params: &NetworkParams) -> Result<()> {
    let sizes: Vec<String> = params.layer_sizes().iter().map(|s| s.to_string()).collect();
    writeln!(w, "# layer_sizes = {}", sizes.join(","))?;
    writeln!(w, "# count = {}", params.len())?;
    for v in params.values() {
        writeln!(w, "{v}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_params(path: &Path) -> Result<NetworkParams> {
    let reader = BufReader::new(File::open(path)?);
    let mut sizes: Option<Vec<usize>> = None;
    let mut values = Vec::new();
    for line in reader.lines() {
        let line = line?;
        let line = line.trim();
        if let Some(rest) = line.strip_prefix("# layer_sizes =") {
            let parsed: std::result::Result<Vec<usize>, _> =
                rest.split(',').map(|s| s.trim().parse()).collect();
            sizes = Some(parsed.map_err(|_| LabError::Parse(format!("bad shape line {line:?}")))?);
        } else if line.is_empty() || line.starts_with('#') {
            continue;
        } else {
            values.push(
                line.parse::<f64>()
                    .map_err(|_| LabError::Parse(format!("bad parameter value {line:?}")))?,
            );
        }
    }
    let sizes =
        sizes.ok_or_else(|| LabError::Parse(format!("{}: no shape header", path.display())))?;
    NetworkParams::from_values(&sizes, values)
}

fn replicate_dir(out: &Path, seed: u64) -> PathBuf {
    out.join(format!("replicate_{seed}"))
}

fn run_replicate(config: &ExperimentConfig, seed: u64, dir: &Path) -> Result<ReplicateResult> {
    fs::create_dir_all(dir)?;
    let mut header = config.to_pairs();
    header.push(("replicate.seed".to_string(), seed.to_string()));

    let inputs = prepare_replicate(config, seed)?;
    let outcome = train_replicate(config, &inputs, seed)?;
    training::write_metrics_csv(create(&dir.join("metrics.csv"))?, &header, &outcome.metrics)?;
    write_params(create(&dir.join("params.txt"))?, &outcome.params)?;

    let mut ood = Vec::with_capacity(inputs.ood.len());
    for (name, pool) in &inputs.ood {
        let m =
            oodeval::evaluate_detector(&outcome.params, inputs.test.features(), pool.features())?;
        ood.push((name.clone(), m));
    }
    if !ood.is_empty() {
        let mut w = create(&dir.join("ood.csv"))?;
        header_lines(&mut w, &header)?;
        oodeval::write_metrics_csv(w, &ood)?;
    }

    let mut values = summarize_outcome(&outcome, &ood);
    if config.landscape.enabled {
        let mut dir_rng = rng::indexed_stream(config.data.seed, "landscape", seed);
        let slice = analyzer::landscape_slice(
            &outcome.params,
            &inputs.train,
            config.landscape.resolution,
            config.landscape.radius,
            &mut dir_rng,
        )?;
        let mut w = create(&dir.join("landscape.csv"))?;
        header_lines(&mut w, &header)?;
        slice.write_csv(w)?;
        values.push(("landscape_sharpness".to_string(), slice.sharpness()));
    }
    write_result_csv(create(&dir.join("result.csv"))?, &header, &values)?;
    Ok(ReplicateResult { seed, values })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub metric: String,
    pub mean: f64,
    /// Sample standard deviation; zero for a single replicate.
    pub std: f64,
    pub replicates: usize,
}

/// Mean and sample standard deviation, summed in the order given.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Aggregates the metrics every replicate reported, in first-seen order.
pub fn summarize(results: &[ReplicateResult]) -> Vec<SummaryRow> {
    let Some(first) = results.first() else {
        return Vec::new();
    };
    first
        .values
        .iter()
        .filter_map(|(metric, _)| {
            let vals: Option<Vec<f64>> = results.iter().map(|r| r.get(metric)).collect();
            let vals = vals?;
            let (mean, std) = mean_std(&vals);
            Some(SummaryRow {
                metric: metric.clone(),
                mean,
                std,
                replicates: vals.len(),
            })
        })
        .collect()
}

pub fn write_summary_csv<W: Write>(
    mut writer: W,
    header: &[(String, String)],
    rows: &[SummaryRow],
) -> Result<()> {
    header_lines(&mut writer, header)?;
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["metric", "mean", "std", "replicates"])?;
    for r in rows {
        w.write_record([
            r.metric.clone(),
            r.mean.to_string(),
            r.std.to_string(),
            r.replicates.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Records a failed stage next to whatever results were already written.
pub fn write_error_manifest(
    dir: &Path,
    stage: &str,
    error: &LabError,
    completed: &[u64],
) -> Result<()> {
    fs::create_dir_all(dir)?;
    let done: Vec<String> = completed.iter().map(|s| s.to_string()).collect();
    let mut w = create(&dir.join("error_manifest.txt"))?;
    writeln!(w, "status = failed")?;
    writeln!(w, "stage = {stage}")?;
    writeln!(w, "error = {}", error.to_string().replace('\n', " "))?;
    writeln!(w, "completed_replicates = {}", done.join(","))?;
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSummary {
    pub dir: PathBuf,
    pub replicates: Vec<ReplicateResult>,
    pub rows: Vec<SummaryRow>,
}

impl ExperimentSummary {
    pub fn row(&self, metric: &str) -> Option<&SummaryRow> {
        self.rows.iter().find(|r| r.metric == metric)
    }

    /// Per-replicate values of one metric, in seed order.
    pub fn values(&self, metric: &str) -> Vec<f64> {
        self.replicates
            .iter()
            .filter_map(|r| r.get(metric))
            .collect()
    }
}

/// Runs every replicate into `config.out_dir` and writes the summary. On a
/// failure the finished replicates stay on disk and an error manifest names
/// the failing stage.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentSummary> {
    let out = config.out_dir.clone();
    let _ = fs::remove_file(out.join("error_manifest.txt"));
    if let Err(e) = config.validate() {
        write_error_manifest(&out, "config", &e, &[])?;
        return Err(e);
    }
    fs::create_dir_all(&out)?;
    fs::write(out.join("config.ini"), config.to_text())?;
    let mut results = Vec::with_capacity(config.seeds.len());
    for &seed in &config.seeds {
        log::info!(
            "replicate {seed} -> {}",
            replicate_dir(&out, seed).display()
        );
        match run_replicate(config, seed, &replicate_dir(&out, seed)) {
            Ok(r) => results.push(r),
            Err(e) => {
                let done: Vec<u64> = results.iter().map(|r| r.seed).collect();
                write_error_manifest(&out, &format!("replicate {seed}"), &e, &done)?;
                return Err(e);
            }
        }
    }
    let rows = summarize(&results);
    write_summary_csv(create(&out.join("summary.csv"))?, &config.to_pairs(), &rows)?;
    Ok(ExperimentSummary {
        dir: out,
        replicates: results,
        rows,
    })
}

/// One row of a sweep summary.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    /// Pool size or α, printed as given.
    pub point: String,
    pub pool: String,
    pub summary: ExperimentSummary,
}

const SWEEP_METRICS: [&str; 4] = [
    "tail5_test_acc",
    "final_test_acc",
    "final_noisy_loss",
    "final_aux_loss",
];

fn write_sweep_csv(
    path: &Path,
    header: &[(String, String)],
    axis: &str,
    points: &[SweepPoint],
) -> Result<()> {
    let mut writer = create(path)?;
    header_lines(&mut writer, header)?;
    let mut w = csv::Writer::from_writer(writer);
    let mut columns = vec![axis.to_string(), "pool".to_string()];
    for m in SWEEP_METRICS {
        columns.push(format!("{m}_mean"));
        columns.push(format!("{m}_std"));
    }
    columns.push("replicates".to_string());
    w.write_record(&columns)?;
    for p in points {
        let mut record = vec![p.point.clone(), p.pool.clone()];
        for m in SWEEP_METRICS {
            match p.summary.row(m) {
                Some(r) => {
                    record.push(r.mean.to_string());
                    record.push(r.std.to_string());
                }
                None => record.extend([String::new(), String::new()]),
            }
        }
        record.push(p.summary.replicates.len().to_string());
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

fn with_odnl(base: &ExperimentConfig) -> ExperimentConfig {
    let mut c = base.clone();
    if c.train.regularizer == Regularizer::Standard {
        c.train.regularizer = Regularizer::Odnl;
    } else if c.train.regularizer != Regularizer::Odnl {
        c.train.compose_odnl = true;
    }
    c
}

/// Fixed-label open and closed pools at each size, plus a run without any
/// auxiliary term. Writes `<out>/size_sweep.csv`.
pub fn run_size_sweep(base: &ExperimentConfig, sizes: &[usize]) -> Result<Vec<SweepPoint>> {
    if sizes.is_empty() || sizes.iter().any(|&s| s == 0) || sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(LabError::config(
            "pool sizes must be positive and strictly ascending",
        ));
    }
    let open_kind = match base.aux.kind {
        AuxKind::Open(kind) => AuxKind::Open(kind),
        _ => AuxKind::Open(OpenSetKind::Ring),
    };
    let mut points = Vec::new();

    let mut none = base.clone();
    none.train.compose_odnl = false;
    if none.train.regularizer == Regularizer::Odnl {
        none.train.regularizer = Regularizer::Standard;
    }
    none.out_dir = base.out_dir.join("none");
    points.push(SweepPoint {
        point: "0".to_string(),
        pool: "none".to_string(),
        summary: run_experiment(&none)?,
    });

    for &size in sizes {
        for (pool, kind) in [("open", open_kind), ("closed", AuxKind::ClosedSameMixture)] {
            let mut c = with_odnl(base);
            c.aux.kind = kind;
            c.aux.size = size;
            c.aux.mode = AuxLabelMode::Fixed;
            c.aux.file = None;
            c.out_dir = base.out_dir.join(format!("size_{size}_{pool}"));
            points.push(SweepPoint {
                point: size.to_string(),
                pool: pool.to_string(),
                summary: run_experiment(&c)?,
            });
        }
    }
    write_sweep_csv(
        &base.out_dir.join("size_sweep.csv"),
        &base.to_pairs(),
        "size",
        &points,
    )?;
    Ok(points)
}

/// One ODNL experiment per α on `mix(α)` pools. Writes
/// `<out>/alpha_sweep.csv`.
pub fn run_alpha_sweep(base: &ExperimentConfig, alphas: &[f64]) -> Result<Vec<SweepPoint>> {
    if alphas.is_empty() || alphas.iter().any(|a| !(0.0..=1.0).contains(a)) {
        return Err(LabError::config("alphas must lie in [0, 1]"));
    }
    let mut points = Vec::new();
    for &alpha in alphas {
        let mut c = with_odnl(base);
        c.aux.kind = AuxKind::Mix(alpha);
        c.aux.file = None;
        c.out_dir = base.out_dir.join(format!("alpha_{alpha}"));
        points.push(SweepPoint {
            point: alpha.to_string(),
            pool: c.aux.kind.to_string(),
            summary: run_experiment(&c)?,
        });
    }
    write_sweep_csv(
        &base.out_dir.join("alpha_sweep.csv"),
        &base.to_pairs(),
        "alpha",
        &points,
    )?;
    Ok(points)
}

/// Tunes η on the data of replicate `seed` with a held-out noisy split.
pub fn tune_experiment_eta(
    config: &ExperimentConfig,
    seed: u64,
    validation_fraction: f64,
    candidates: &[f64],
) -> Result<training::EtaTuning> {
    config.validate()?;
    let mut odnl = with_odnl(config);
    if odnl.train.eta <= 0.0 {
        // the pool is only built when the auxiliary term is active
        odnl.train.eta = 1.0;
    }
    let inputs = prepare_replicate(&odnl, seed)?;
    training::tune_eta(
        &replicate_train_config(&odnl, seed),
        &inputs.train,
        inputs.aux.as_ref(),
        inputs.transition.as_ref(),
        validation_fraction,
        candidates,
    )
}

/// `eta,score,late_drop` rows; the chosen η goes into the header.
pub fn write_tuning_csv<W: Write>(
    mut writer: W,
    header: &[(String, String)],
    tuning: &training::EtaTuning,
) -> Result<()> {
    header_lines(&mut writer, header)?;
    writeln!(writer, "# best_eta = {}", tuning.best_eta)?;
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["eta", "score", "late_drop"])?;
    for c in &tuning.candidates {
        w.write_record([
            c.eta.to_string(),
            c.score.to_string(),
            c.late_drop.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
