//! Command-line entry point.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data or format
//! error, 3 runtime failure.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use ndarray::Array2;

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::ingest::{write_pnm, Split};
use crate::network::{load_model, save_model};
use crate::readout::{
    dataset_for_seed, evaluate_for_seed, load_fixed_dataset, run_experiment, train_for_seed, write_results, ExperimentResult,
};
use crate::symmetry::{build_dataset, write_dataset, Family, SymmetrySpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_RUNTIME: i32 = 3;

/// Environment variable capping the worker thread count.
pub const THREADS_ENV: &str = "VISNET_THREADS";

#[derive(Parser, Debug)]
#[command(name = "visnet", version, about = "Trace-learning visual hierarchy: data generation, training, evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a mirror-symmetry dataset as PGM/PPM files plus a manifest.
    GenData(GenDataArgs),
    /// Train a network without labels and save the model file.
    Train(TrainArgs),
    /// Evaluate a saved model with a linear readout.
    Eval(EvalArgs),
    /// Train and evaluate across `n_seeds` seeds.
    Run(RunArgs),
    /// Write receptive fields of one layer as PGM tiles.
    InspectRf(InspectArgs),
}

#[derive(Args, Debug)]
struct GenDataArgs {
    /// Named preset, e.g. TWOCLASSES-SQUARE. Overrides --family/--classes.
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long, default_value = "square")]
    family: String,
    /// Number of symmetry classes: 2 or 5.
    #[arg(long, default_value_t = 5)]
    classes: usize,
    #[arg(long, default_value_t = 10_000)]
    count: usize,
    #[arg(long, default_value_t = 32)]
    size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Maximum absolute rotation in degrees.
    #[arg(long)]
    rotation: Option<f64>,
    /// Maximum absolute shift as a fraction of the image side.
    #[arg(long)]
    translation: Option<f64>,
    /// Recursion depth of the triangle family.
    #[arg(long)]
    depth: Option<usize>,
    /// Base split count of the parted families.
    #[arg(long)]
    splits: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ConfigArgs {
    /// `key = value` config file; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one config key, e.g. `--set eta=0`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Shorthand for `--set variant=...`.
    #[arg(long)]
    variant: Option<String>,
    /// Shorthand for `--set seed=...`.
    #[arg(long)]
    seed: Option<u64>,
    /// Directory written by gen-data; sets `dataset = DIR` and `data.dir`.
    #[arg(long)]
    data: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Model file to write.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[command(flatten)]
    config: ConfigArgs,
    #[arg(long)]
    model: PathBuf,
    /// Directory for results.csv, summary.csv and the config snapshot.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Results directory; defaults to `output.dir`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct InspectArgs {
    #[arg(long)]
    model: PathBuf,
    /// Layer number, 1 (bottom) to 4 (top).
    #[arg(long)]
    layer: usize,
    /// Upper bound on tiles written; all neurons when omitted.
    #[arg(long)]
    max_tiles: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

/// Maps an error to its exit code.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Param { .. } | Error::Config(_) => EXIT_USAGE,
        Error::Format { .. } | Error::Io(_) | Error::Csv(_) | Error::Structure(_) => EXIT_DATA,
        Error::DegenerateWeights | Error::UndefinedScore | Error::Generation(_) => EXIT_RUNTIME,
    }
}

/// Parses `args` (including the program name), runs the command, and
/// returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    if let Err(code) = configure_threads() {
        return code;
    }
    let outcome = match cli.command {
        Command::GenData(a) => cmd_gen_data(&a),
        Command::Train(a) => cmd_train(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Run(a) => cmd_run(&a),
        Command::InspectRf(a) => cmd_inspect_rf(&a),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn configure_threads() -> std::result::Result<(), i32> {
    let Ok(value) = std::env::var(THREADS_ENV) else { return Ok(()) };
    let n: usize = match value.trim().parse() {
        Ok(n) if n > 0 => n,
        _ => {
            eprintln!("error: {THREADS_ENV} must be a positive integer, got `{value}`");
            return Err(EXIT_USAGE);
        }
    };
    // a second call in the same process (tests) keeps the first pool
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

fn resolve_config(args: &ConfigArgs) -> Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::load(path).map_err(|e| match e {
            Error::Io(io) => Error::Config(format!("cannot read {}: {io}", path.display())),
            other => other,
        })?,
        None => RunConfig::default(),
    };
    for kv in &args.overrides {
        let (k, v) = kv.split_once('=').ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got `{kv}`")))?;
        cfg.set(k.trim(), v.trim())?;
    }
    if let Some(v) = &args.variant {
        cfg.set("variant", v)?;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(dir) = &args.data {
        cfg.dataset = "DIR".into();
        cfg.data_dir = Some(dir.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_gen_data(a: &GenDataArgs) -> Result<i32> {
    let mut spec = match &a.dataset {
        Some(name) => SymmetrySpec::named(name)?,
        None => {
            let family = Family::parse(&a.family).ok_or_else(|| {
                let names: Vec<&str> = Family::ALL.iter().map(|f| f.name()).collect();
                Error::param("family", format!("unknown family `{}` (expected one of {})", a.family, names.join(", ")))
            })?;
            SymmetrySpec::new(family, a.classes)
        }
    };
    spec.count = a.count;
    spec.image_size = a.size;
    spec.seed = a.seed;
    if let Some(r) = a.rotation {
        spec.rotation_range = r;
    }
    if let Some(t) = a.translation {
        spec.translation_range = t;
    }
    if let Some(d) = a.depth {
        spec.depth = d;
    }
    if let Some(s) = a.splits {
        spec.n_splits = s;
    }
    spec.validate()?;
    let ds = build_dataset(&spec)?;
    write_dataset(&ds, &a.out)?;
    fs::write(a.out.join("generation.txt"), spec_text(&spec))?;

    let scores = ds.scores.as_deref().unwrap_or(&[]);
    println!("wrote {} images to {}", ds.len(), a.out.display());
    for class in 0..spec.levels {
        let members: Vec<usize> = (0..ds.len()).filter(|&i| ds.labels[i] == class).collect();
        let mean = members.iter().map(|&i| scores[i]).sum::<f64>() / members.len().max(1) as f64;
        println!("class {class}: {} images, mean measured symmetry {mean:.4}", members.len());
    }
    println!("train {} / test {}", ds.count(Split::Train), ds.count(Split::Test));
    Ok(EXIT_OK)
}

fn spec_text(spec: &SymmetrySpec) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "family = {}", spec.family.name());
    let _ = writeln!(s, "levels = {}", spec.levels);
    let _ = writeln!(s, "image_size = {}", spec.image_size);
    let _ = writeln!(s, "count = {}", spec.count);
    let _ = writeln!(s, "rotation_range = {}", spec.rotation_range);
    let _ = writeln!(s, "translation_range = {}", spec.translation_range);
    let _ = writeln!(s, "seed = {}", spec.seed);
    let _ = writeln!(s, "depth = {}", spec.depth);
    let _ = writeln!(s, "n_splits = {}", spec.n_splits);
    s
}

fn cmd_train(a: &TrainArgs) -> Result<i32> {
    let cfg = resolve_config(&a.config)?;
    let frontend = cfg.frontend()?;
    let fixed = load_fixed_dataset(&cfg)?;
    let ds = dataset_for_seed(&cfg, fixed.as_ref(), cfg.seed)?;
    let net = train_for_seed(&cfg, &frontend, &ds, cfg.seed)?;
    save_model(&net, &a.out)?;
    let dir = a.out.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    cfg.write_snapshot(dir)?;
    println!("trained {} on {} images; model written to {}", cfg.variant, ds.count(Split::Train), a.out.display());
    Ok(EXIT_OK)
}

fn cmd_eval(a: &EvalArgs) -> Result<i32> {
    let cfg = resolve_config(&a.config)?;
    if !a.model.is_file() {
        return Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("model file {} does not exist", a.model.display()),
        )));
    }
    let net = load_model(&a.model)?;
    if net.variant != cfg.variant {
        return Err(Error::Config(format!("model was trained as {} but the config selects {}", net.variant, cfg.variant)));
    }
    let mut net = net;
    net.inhibition = cfg.inhibition;
    let frontend = cfg.frontend()?;
    let fixed = load_fixed_dataset(&cfg)?;
    let ds = dataset_for_seed(&cfg, fixed.as_ref(), cfg.seed)?;
    let outcome = evaluate_for_seed(&cfg, &frontend, &net, &ds, cfg.seed)?;
    let result = ExperimentResult { dataset: cfg.dataset.clone(), variant: cfg.variant.name().into(), outcomes: vec![outcome] };
    write_results(&result, &a.out)?;
    cfg.write_snapshot(&a.out)?;
    println!("accuracy {:.4}", result.mean().unwrap_or(f64::NAN));
    Ok(EXIT_OK)
}

fn cmd_run(a: &RunArgs) -> Result<i32> {
    let cfg = resolve_config(&a.config)?;
    let out = a.out.clone().unwrap_or_else(|| cfg.output_dir.clone());
    let result = run_experiment(&cfg, Some(&out))?;
    for o in &result.outcomes {
        match o.accuracy {
            Some(acc) => println!("seed {}: accuracy {acc:.4}", o.seed),
            None => println!("seed {}: failed ({})", o.seed, o.error.as_deref().unwrap_or("unknown error")),
        }
    }
    match (result.mean(), result.sd()) {
        (Some(m), Some(sd)) => println!("{} {}: {m:.4} ± {sd:.4} over {} seeds", result.dataset, result.variant, result.accuracies().len()),
        _ => println!("{} {}: every seed failed", result.dataset, result.variant),
    }
    Ok(if result.failures() > 0 { EXIT_RUNTIME } else { EXIT_OK })
}

/// Min-max scales values into `[0, 1]`; a constant tile maps to zeros.
fn scale_tile(tile: &Array2<f64>) -> Array2<f64> {
    let lo = tile.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = tile.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi > lo {
        tile.mapv(|v| (v - lo) / (hi - lo))
    } else {
        Array2::zeros(tile.dim())
    }
}

fn cmd_inspect_rf(a: &InspectArgs) -> Result<i32> {
    if !(1..=4).contains(&a.layer) {
        return Err(Error::param("layer", format!("{} is out of range; layers are numbered 1 to 4", a.layer)));
    }
    let net = load_model(&a.model)?;
    let layer = net
        .layers
        .get(a.layer - 1)
        .ok_or_else(|| Error::param("layer", format!("model has only {} layers", net.layers.len())))?;
    let g = layer.geometry;
    let tiles = g.neurons().min(a.max_tiles.unwrap_or(usize::MAX));
    fs::create_dir_all(&a.out)?;
    for n in 0..tiles {
        let row = layer.weights.row(n);
        // fan-in is laid out (dy, dx, channel)
        let tile = Array2::from_shape_fn((g.patch, g.patch), |(dy, dx)| {
            let base = (dy * g.patch + dx) * g.in_channels;
            (0..g.in_channels).map(|c| row[base + c]).sum::<f64>() / g.in_channels as f64
        });
        write_pnm(&a.out.join(format!("layer{}_{n:05}.pgm", a.layer)), &Image::Gray(scale_tile(&tile)))?;
    }
    println!("wrote {tiles} tiles of {}x{} to {}", g.patch, g.patch, a.out.display());
    Ok(EXIT_OK)
}
