use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use noisylab::analyzer;
use noisylab::harness::config::ExperimentConfig;
use noisylab::harness::experiment::{
    build_aux_pool, build_ood_pools, corrupt_dataset, prepare_replicate, read_params,
    write_error_manifest, write_tuning_csv,
};
use noisylab::harness::{run_alpha_sweep, run_experiment, run_size_sweep};
use noisylab::netcore::NetworkParams;
use noisylab::noisegen::{AuxiliaryPool, LabeledDataset};
use noisylab::oodeval;
use noisylab::rng;
use noisylab::{LabError, Result};

#[derive(Parser)]
#[command(
    name = "noisylab",
    version,
    about = "Desk-scale noisy-label experiments"
)]
struct Cli {
    /// Config file (sectioned key = value text); defaults apply to missing keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Replaces the replicate seed list with this single seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides run.out_dir.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Extra `section.key=value` overrides, applied after the config file.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write clean train/test blobs, the auxiliary pool and the OOD pools as CSV.
    GenData,
    /// Apply the configured label noise to a dataset CSV.
    Corrupt {
        #[arg(long)]
        input: PathBuf,
    },
    /// Run the configured experiment over all replicate seeds.
    Train,
    /// Pick η from a candidate grid on a held-out noisy split.
    TuneEta {
        #[arg(long, value_delimiter = ',', default_value = "0.1,0.5,1,2.5,5")]
        candidates: Vec<f64>,
        #[arg(long, default_value_t = 0.1)]
        validation_fraction: f64,
    },
    /// Check the gradient-noise identities on one network.
    AnalyzeNoise {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
    },
    /// Loss surface on a 2-D filter-normalized slice around the given params.
    Landscape {
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// MSP detection metrics of a trained model against OOD pool CSVs.
    EvalOod {
        #[arg(long)]
        params: PathBuf,
        /// In-distribution test set.
        #[arg(long = "in")]
        in_data: PathBuf,
        /// One or more pool CSVs; the file stem names the pool.
        #[arg(long = "ood", required = true)]
        pools: Vec<PathBuf>,
    },
    /// Fixed-label open vs closed auxiliary pools across sizes.
    SweepSize {
        #[arg(long, value_delimiter = ',', required = true)]
        sizes: Vec<usize>,
    },
    /// ODNL on mix(α) pools.
    SweepAlpha {
        #[arg(long, value_delimiter = ',', default_value = "0,0.5,1")]
        alphas: Vec<f64>,
    },
    /// Print every summary CSV found under a directory.
    Report {
        #[arg(long)]
        dir: Option<PathBuf>,
    },
}

#[derive(Args)]
struct ModelArg {
    /// Parameter file; a freshly initialized network is used when absent.
    #[arg(long)]
    params: Option<PathBuf>,
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut config = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    for item in &cli.overrides {
        let (key, value) = item
            .split_once('=')
            .ok_or_else(|| LabError::config(format!("override {item:?} is not KEY=VALUE")))?;
        config.set(key.trim(), value.trim())?;
    }
    if let Some(seed) = cli.seed {
        config.seeds = vec![seed];
    }
    if let Some(out) = &cli.out {
        config.out_dir = out.clone();
    }
    Ok(config)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn first_seed(config: &ExperimentConfig) -> Result<u64> {
    config
        .seeds
        .first()
        .copied()
        .ok_or_else(|| LabError::config("no replicate seed"))
}

fn header(config: &ExperimentConfig, seed: u64) -> Vec<(String, String)> {
    let mut h = config.to_pairs();
    h.push(("replicate.seed".to_string(), seed.to_string()));
    h
}

fn gen_data(config: &ExperimentConfig) -> Result<()> {
    let seed = first_seed(config)?;
    let mut c = config.clone();
    c.noise.kind = noisylab::harness::NoiseKind::None;
    let inputs = prepare_replicate(&c, seed)?;
    let out = &config.out_dir;
    inputs
        .clean_train
        .write_csv(create(&out.join("train.csv"))?)?;
    inputs.test.write_csv(create(&out.join("test.csv"))?)?;
    build_aux_pool(config, seed)?.write_csv(create(&out.join("aux.csv"))?)?;
    for (name, pool) in build_ood_pools(config, seed)? {
        pool.write_csv(create(&out.join(format!("ood_{name}.csv")))?)?;
    }
    println!("wrote datasets and pools to {}", out.display());
    Ok(())
}

fn corrupt(config: &ExperimentConfig, input: &Path) -> Result<()> {
    let seed = first_seed(config)?;
    let clean = LabeledDataset::read_csv(File::open(input)?, config.data.blobs.k)?;
    let (noisy, transition) = corrupt_dataset(config, &clean, seed)?;
    let out = &config.out_dir;
    noisy.write_csv(create(&out.join("train_noisy.csv"))?)?;
    if let Some(t) = transition {
        let mut w = csv::Writer::from_writer(create(&out.join("transition.csv"))?);
        for i in 0..t.k() {
            w.write_record(t.row(i).iter().map(|v| v.to_string()))?;
        }
        w.flush()?;
    }
    println!(
        "{} of {} labels differ from the truth; wrote {}",
        noisy.noisy_count(),
        noisy.len(),
        out.join("train_noisy.csv").display()
    );
    Ok(())
}

fn train(config: &ExperimentConfig) -> Result<()> {
    let summary = run_experiment(config)?;
    for row in &summary.rows {
        println!("{:<20} {:>10.4} ± {:.4}", row.metric, row.mean, row.std);
    }
    println!("summary: {}", summary.dir.join("summary.csv").display());
    Ok(())
}

fn tune(config: &ExperimentConfig, candidates: &[f64], fraction: f64) -> Result<()> {
    let seed = first_seed(config)?;
    let tuning =
        noisylab::harness::experiment::tune_experiment_eta(config, seed, fraction, candidates)?;
    let path = config.out_dir.join("eta_tuning.csv");
    write_tuning_csv(create(&path)?, &header(config, seed), &tuning)?;
    for c in &tuning.candidates {
        println!(
            "eta {:<5} validation {:.4}  late drop {:.4}",
            c.eta, c.score, c.late_drop
        );
    }
    println!("best eta = {}", tuning.best_eta);
    Ok(())
}

fn model_or_init(
    config: &ExperimentConfig,
    params: &Option<PathBuf>,
    seed: u64,
) -> Result<NetworkParams> {
    match params {
        Some(p) => read_params(p),
        None => {
            let mut sizes = vec![config.data.blobs.dim];
            sizes.extend(&config.train.hidden);
            sizes.push(config.data.blobs.k);
            NetworkParams::init(&sizes, &mut rng::stream(seed, "init"))
        }
    }
}

fn analyze_noise(config: &ExperimentConfig, model: &ModelArg, samples: usize) -> Result<()> {
    let seed = first_seed(config)?;
    let params = model_or_init(config, &model.params, seed)?;
    let mut c = config.clone();
    c.aux.mode = noisylab::training::AuxLabelMode::DynamicPerIteration;
    let inputs = prepare_replicate(&c, seed)?;
    let aux = build_aux_pool(&c, seed)?;
    let report = analyzer::noise_report(
        &params,
        aux.row(0),
        inputs.train.row(0),
        config.train.sigma_sln,
        samples,
        &mut rng::stream(seed, "noise_report"),
    )?;
    let text = serde_json::to_string_pretty(&report)
        .map_err(|e| LabError::numeric("noise report", e.to_string()))?;
    let path = config.out_dir.join("noise_report.json");
    fs::create_dir_all(&config.out_dir)?;
    fs::write(&path, format!("{text}\n"))?;
    println!("{text}");
    if !report.passed() {
        return Err(LabError::numeric(
            "noise report",
            "at least one identity check failed",
        ));
    }
    Ok(())
}

fn landscape(config: &ExperimentConfig, params: &Path, data: &Path) -> Result<()> {
    let seed = first_seed(config)?;
    let params = read_params(params)?;
    let dataset = LabeledDataset::read_csv(File::open(data)?, params.num_classes())?;
    let slice = analyzer::landscape_slice(
        &params,
        &dataset,
        config.landscape.resolution,
        config.landscape.radius,
        &mut rng::stream(seed, "landscape"),
    )?;
    let path = config.out_dir.join("landscape.csv");
    slice.write_csv(create(&path)?)?;
    println!(
        "center loss {:.4}, sharpness {:.4}, center is local min: {}",
        slice.center_loss(),
        slice.sharpness(),
        slice.center_is_local_min()
    );
    Ok(())
}

fn eval_ood(
    config: &ExperimentConfig,
    params: &Path,
    in_data: &Path,
    pools: &[PathBuf],
) -> Result<()> {
    let params = read_params(params)?;
    let k = params.num_classes();
    let test = LabeledDataset::read_csv(File::open(in_data)?, k)?;
    let mut rows = Vec::with_capacity(pools.len());
    for path in pools {
        let pool = AuxiliaryPool::read_csv(File::open(path)?, k)?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        let m = oodeval::evaluate_detector(&params, test.features(), pool.features())?;
        println!(
            "{name:<24} fpr95 {:.4}  auroc {:.4}  aupr {:.4}",
            m.fpr95, m.auroc, m.aupr
        );
        rows.push((name, m));
    }
    oodeval::write_metrics_csv(create(&config.out_dir.join("ood.csv"))?, &rows)?;
    Ok(())
}

fn print_sweep(points: &[noisylab::harness::experiment::SweepPoint]) {
    for p in points {
        let acc = p.summary.row("tail5_test_acc");
        println!(
            "{:>8} {:<20} acc {:.4} ± {:.4}",
            p.point,
            p.pool,
            acc.map_or(f64::NAN, |r| r.mean),
            acc.map_or(f64::NAN, |r| r.std)
        );
    }
}

fn report(dir: &Path) -> Result<()> {
    let mut found = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d)? {
            let path = entry?.path();
            if path.is_dir() {
                stack.push(path);
            } else if matches!(
                path.file_name().and_then(|n| n.to_str()),
                Some("summary.csv" | "size_sweep.csv" | "alpha_sweep.csv")
            ) {
                found.push(path);
            }
        }
    }
    if found.is_empty() {
        return Err(LabError::input(format!(
            "no summaries under {}",
            dir.display()
        )));
    }
    found.sort();
    for path in found {
        println!("== {}", path.display());
        let text = fs::read_to_string(&path)?;
        for line in text.lines().filter(|l| !l.starts_with('#')) {
            println!("{}", line.replace(',', "\t"));
        }
    }
    Ok(())
}

fn run(cli: &Cli, config: &ExperimentConfig) -> Result<()> {
    match &cli.command {
        Command::GenData => gen_data(config),
        Command::Corrupt { input } => corrupt(config, input),
        Command::Train => train(config),
        Command::TuneEta {
            candidates,
            validation_fraction,
        } => tune(config, candidates, *validation_fraction),
        Command::AnalyzeNoise { model, samples } => analyze_noise(config, model, *samples),
        Command::Landscape { params, data } => landscape(config, params, data),
        Command::EvalOod {
            params,
            in_data,
            pools,
        } => eval_ood(config, params, in_data, pools),
        Command::SweepSize { sizes } => run_size_sweep(config, sizes).map(|p| print_sweep(&p)),
        Command::SweepAlpha { alphas } => run_alpha_sweep(config, alphas).map(|p| print_sweep(&p)),
        Command::Report { dir } => report(dir.as_deref().unwrap_or(&config.out_dir)),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let config = match load_config(&cli) {
        Ok(c) => c,
        Err(e) => {
            if let Some(out) = &cli.out {
                let _ = write_error_manifest(out, "config", &e, &[]);
            }
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    };
    let manifest = config.out_dir.join("error_manifest.txt");
    let _ = fs::remove_file(&manifest);
    match run(&cli, &config) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // experiments write their own, more specific manifest
            if !manifest.exists() {
                let _ = write_error_manifest(&config.out_dir, "command", &e, &[]);
            }
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
