use std::fs;
use std::path::Path;

use ndarray::Array2;
use rayon::prelude::*;

use super::{evaluate, extract_features, train_linear};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::frontend::{Frontend, Provenance};
use crate::image::Image;
use crate::ingest::{load_cifar10_dir, load_mnist_dir, LabeledDataset, Split};
use crate::learning::{train_network, TrainingSet};
use crate::network::NetworkState;
use crate::symmetry::{build_dataset, read_dataset, SymmetrySpec};

pub const RESULTS_HEADER: [&str; 6] = ["dataset", "variant", "seed", "accuracy", "train_size", "test_size"];
pub const SUMMARY_HEADER: [&str; 4] = ["dataset", "variant", "mean", "sd"];
pub const RESULTS_FILE: &str = "results.csv";
pub const SUMMARY_FILE: &str = "summary.csv";

/// Result of one seeded run. `accuracy` is `None` when the run failed.
#[derive(Clone, Debug, PartialEq)]
pub struct SeedOutcome {
    pub seed: u64,
    pub accuracy: Option<f64>,
    pub train_size: usize,
    pub test_size: usize,
    pub error: Option<String>,
}

/// Per-seed outcomes of one dataset/variant pair. Mean and SD are always
/// derived from the stored list.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentResult {
    pub dataset: String,
    pub variant: String,
    pub outcomes: Vec<SeedOutcome>,
}

impl ExperimentResult {
    /// Accuracies of the seeds that completed.
    pub fn accuracies(&self) -> Vec<f64> {
        self.outcomes.iter().filter_map(|o| o.accuracy).collect()
    }

    pub fn mean(&self) -> Option<f64> {
        let a = self.accuracies();
        (!a.is_empty()).then(|| a.iter().sum::<f64>() / a.len() as f64)
    }

    /// Population standard deviation over completed seeds.
    pub fn sd(&self) -> Option<f64> {
        let a = self.accuracies();
        let mean = self.mean()?;
        Some((a.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / a.len() as f64).sqrt())
    }

    pub fn failures(&self) -> usize {
        self.outcomes.iter().filter(|o| o.accuracy.is_none()).count()
    }
}

fn subset(ds: LabeledDataset, cfg: &RunConfig, seed: u64) -> LabeledDataset {
    if cfg.train_per_class == 0 && cfg.test_per_class == 0 {
        return ds;
    }
    let quota = |q: usize| if q == 0 { usize::MAX } else { q };
    ds.stratified_subset(quota(cfg.train_per_class), quota(cfg.test_per_class), seed)
}

/// Loads a file-backed dataset, or `None` for generated sets, which are
/// rebuilt per seed.
pub fn load_fixed_dataset(cfg: &RunConfig) -> Result<Option<LabeledDataset>> {
    let dir = || cfg.data_dir.as_deref().ok_or_else(|| Error::Config(format!("dataset {} needs data.dir", cfg.dataset)));
    Ok(match cfg.dataset.as_str() {
        "MNIST" => Some(load_mnist_dir(dir()?)?),
        "CIFAR-10" => Some(load_cifar10_dir(dir()?)?),
        "DIR" => Some(read_dataset(dir()?)?),
        _ => None,
    })
}

/// The dataset used by run `seed`: a generated set built from the seed, or
/// a seeded stratified subset of `fixed`.
pub fn dataset_for_seed(cfg: &RunConfig, fixed: Option<&LabeledDataset>, seed: u64) -> Result<LabeledDataset> {
    let ds = match fixed {
        Some(ds) => ds.clone(),
        None => {
            let spec = SymmetrySpec {
                count: cfg.data_count,
                image_size: cfg.image_size,
                seed,
                ..SymmetrySpec::named(&cfg.dataset).map_err(|e| Error::Config(e.to_string()))?
            };
            build_dataset(&spec)?
        }
    };
    Ok(subset(ds, cfg, seed))
}

/// Rejects datasets the configured frontend cannot consume.
pub fn check_compatible(frontend: &Frontend, ds: &LabeledDataset) -> Result<()> {
    if frontend.provenance() == Provenance::DogRgbGabor && ds.images.iter().any(|img| !img.is_rgb()) {
        return Err(Error::param("variant", "li-dog-rgb requires an RGB dataset (3-plane images)"));
    }
    Ok(())
}

/// Unsupervised phase of one run on the training split.
pub fn train_for_seed(cfg: &RunConfig, frontend: &Frontend, ds: &LabeledDataset, seed: u64) -> Result<NetworkState> {
    check_compatible(frontend, ds)?;
    let mut net = NetworkState::init(&cfg.network_config(frontend.channels()), seed)?;
    train_network(&mut net, frontend, &TrainingSet::from_dataset(ds, cfg.resolved_sequence_mode()), &cfg.learning_for(seed))?;
    Ok(net)
}

fn split_features(net: &NetworkState, frontend: &Frontend, ds: &LabeledDataset, split: Split) -> Result<(Array2<f64>, Vec<usize>)> {
    let idx = ds.indices_of(split);
    let images: Vec<&Image> = idx.iter().map(|&i| &ds.images[i]).collect();
    let labels = idx.iter().map(|&i| ds.labels[i]).collect();
    Ok((extract_features(net, frontend, &images)?, labels))
}

/// Supervised phase: readout on the training split, accuracy on the test split.
pub fn evaluate_for_seed(cfg: &RunConfig, frontend: &Frontend, net: &NetworkState, ds: &LabeledDataset, seed: u64) -> Result<SeedOutcome> {
    check_compatible(frontend, ds)?;
    let (train_x, train_y) = split_features(net, frontend, ds, Split::Train)?;
    let (test_x, test_y) = split_features(net, frontend, ds, Split::Test)?;
    let model = train_linear(&train_x, &train_y, &cfg.readout_for(seed))?;
    let accuracy = evaluate(&model, &test_x, &test_y)?;
    Ok(SeedOutcome { seed, accuracy: Some(accuracy), train_size: train_y.len(), test_size: test_y.len(), error: None })
}

/// Full pipeline for one seed.
pub fn run_seed(cfg: &RunConfig, fixed: Option<&LabeledDataset>, seed: u64) -> Result<SeedOutcome> {
    let frontend = cfg.frontend()?;
    let ds = dataset_for_seed(cfg, fixed, seed)?;
    let net = train_for_seed(cfg, &frontend, &ds, seed)?;
    evaluate_for_seed(cfg, &frontend, &net, &ds, seed)
}

/// Runs seeds `seed .. seed + n_seeds`. Seeds are independent, so they run
/// in batches of one per worker thread; rows are still recorded in seed
/// order. A failing seed is recorded and the remaining seeds still run.
/// When `out_dir` is given, per-seed rows are flushed after every batch,
/// followed by the summary and the resolved config.
pub fn run_experiment(cfg: &RunConfig, out_dir: Option<&Path>) -> Result<ExperimentResult> {
    cfg.validate()?;
    let fixed = load_fixed_dataset(cfg)?;
    let mut writer = match out_dir {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            cfg.write_snapshot(dir)?;
            let mut w = csv::Writer::from_path(dir.join(RESULTS_FILE))?;
            w.write_record(RESULTS_HEADER)?;
            w.flush()?;
            Some(w)
        }
        None => None,
    };
    let mut result = ExperimentResult { dataset: cfg.dataset.clone(), variant: cfg.variant.name().to_string(), outcomes: Vec::new() };
    let seeds: Vec<u64> = (0..cfg.n_seeds as u64).map(|k| cfg.seed + k).collect();
    for batch in seeds.chunks(rayon::current_num_threads().max(1)) {
        let runs: Vec<(u64, Result<SeedOutcome>)> = batch.par_iter().map(|&seed| (seed, run_seed(cfg, fixed.as_ref(), seed))).collect();
        for (seed, run) in runs {
            let outcome = match run {
                Ok(o) => o,
                Err(e @ (Error::Param { .. } | Error::Config(_) | Error::Structure(_))) if seed == cfg.seed => return Err(e),
                Err(e) => {
                    log::error!("seed {seed} failed: {e}");
                    SeedOutcome { seed, accuracy: None, train_size: 0, test_size: 0, error: Some(e.to_string()) }
                }
            };
            log::info!("seed {seed}: accuracy {:?}", outcome.accuracy);
            if let Some(w) = writer.as_mut() {
                w.write_record(result_row(&result.dataset, &result.variant, &outcome))?;
            }
            result.outcomes.push(outcome);
        }
        if let Some(w) = writer.as_mut() {
            w.flush()?;
        }
    }
    if let Some(dir) = out_dir {
        write_summary(&result, &dir.join(SUMMARY_FILE))?;
    }
    Ok(result)
}

fn result_row(dataset: &str, variant: &str, o: &SeedOutcome) -> [String; 6] {
    [
        dataset.to_string(),
        variant.to_string(),
        o.seed.to_string(),
        o.accuracy.map_or("failed".to_string(), |a| a.to_string()),
        o.train_size.to_string(),
        o.test_size.to_string(),
    ]
}

fn write_summary(result: &ExperimentResult, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(SUMMARY_HEADER)?;
    let fmt = |v: Option<f64>| v.map_or("failed".to_string(), |x| x.to_string());
    w.write_record([result.dataset.clone(), result.variant.clone(), fmt(result.mean()), fmt(result.sd())])?;
    w.flush()?;
    Ok(())
}

/// Writes the per-seed CSV and the summary CSV for a finished experiment.
pub fn write_results(result: &ExperimentResult, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut w = csv::Writer::from_path(dir.join(RESULTS_FILE))?;
    w.write_record(RESULTS_HEADER)?;
    for o in &result.outcomes {
        w.write_record(result_row(&result.dataset, &result.variant, o))?;
    }
    w.flush()?;
    write_summary(result, &dir.join(SUMMARY_FILE))
}
