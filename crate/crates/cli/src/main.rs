//! `alac` command-line interface.
//!
//! Exit codes: 0 success, 1 configuration or usage error, 2 runtime failure.
//! Commands write their outputs only after all work succeeded.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use alac::data::{load_dataset, synth_dataset, write_dataset, Pool, SceneId, SynthSpec};
use alac::density::{rasterize, DensityMap};
use alac::harness::{benchmark_synth_spec, run_experiment, ExperimentConfig, RESULT_GAME_LEVELS};
use alac::metrics::evaluate;
use alac::model::{featurize, forward, Checkpoint, FeatureConfig, ModelShape, RegressorState};
use alac::selection::{select, SelectionRequest, Strategy, DEFAULT_LEVEL};
use alac::{write_atomic, Error};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "alac", version, about = "Active learning for density-based crowd counting")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset (manifest.csv + points/).
    Synth {
        /// TOML file with a synthetic dataset spec; defaults to the benchmark spec.
        #[arg(long)]
        spec: Option<PathBuf>,
        /// Overrides the generator seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory; must not exist or be empty.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run every configured variant for all trials and write results.csv / summary.csv.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `base_seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// Results directory.
        #[arg(long)]
        out: PathBuf,
        /// Also write the final regressor of every trial to `<out>/checkpoints/`.
        #[arg(long)]
        save_checkpoints: bool,
    },
    /// Write a freshly initialized (or all-zero) regressor checkpoint.
    Init {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// All weights zero: the model predicts an empty density everywhere.
        #[arg(long)]
        zero: bool,
        #[arg(long, default_value_t = 16)]
        hidden: usize,
        #[arg(long, default_value_t = 8)]
        latent: usize,
        #[arg(long, default_value_t = 8)]
        cell_size: u32,
        #[arg(long, value_delimiter = ',', default_value = "0,1,2")]
        radii: Vec<usize>,
        #[arg(long, default_value_t = 4.0)]
        sigma: f64,
        #[arg(long, default_value_t = 0.95)]
        momentum: f64,
    },
    /// One selection step from a saved regressor.
    Select {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Manifest of the whole pool (labeled and unlabeled scenes).
        #[arg(long)]
        manifest: PathBuf,
        /// File listing labeled scene ids, one per line.
        #[arg(long)]
        labeled: Option<PathBuf>,
        #[arg(long, default_value = "pssw")]
        strategy: Strategy,
        /// Number of scenes to select.
        #[arg(short, long, default_value_t = 10)]
        m: usize,
        /// Finest GDSIM level.
        #[arg(long, default_value_t = DEFAULT_LEVEL)]
        level: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Selected ids, one per line.
        #[arg(long)]
        out: PathBuf,
    },
    /// Count metrics of a checkpoint on a dataset, written as JSON.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// Accepted for uniformity with the other commands; evaluation is deterministic.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) | Error::InvalidArgument(_) => ExitCode::from(1),
                _ => ExitCode::from(2),
            }
        }
    }
}

fn dispatch(command: Command) -> alac::Result<()> {
    match command {
        Command::Synth { spec, seed, out } => synth(spec.as_deref(), seed, &out),
        Command::Run {
            config,
            seed,
            out,
            save_checkpoints,
        } => run(&config, seed, &out, save_checkpoints),
        Command::Init {
            seed,
            out,
            zero,
            hidden,
            latent,
            cell_size,
            radii,
            sigma,
            momentum,
        } => {
            let features = FeatureConfig { cell_size, radii };
            let shape = ModelShape {
                input: features.dim(),
                hidden,
                latent,
            };
            if hidden == 0 || latent == 0 || cell_size == 0 || features.radii.is_empty() {
                return Err(Error::Config("model sizes, cell size and radii must be non-empty".into()));
            }
            let state = if zero {
                RegressorState::zeros(shape, momentum)
            } else {
                RegressorState::init(shape, momentum, seed)
            };
            Checkpoint::new(features, sigma, state).save(&out)?;
            println!("wrote {}", out.display());
            Ok(())
        }
        Command::Select {
            checkpoint,
            manifest,
            labeled,
            strategy,
            m,
            level,
            seed,
            out,
        } => select_step(&checkpoint, &manifest, labeled.as_deref(), strategy, m, level, seed, &out),
        Command::Eval {
            checkpoint,
            manifest,
            seed: _,
            out,
        } => eval(&checkpoint, &manifest, &out),
    }
}

fn synth(spec_path: Option<&Path>, seed: Option<u64>, out: &Path) -> alac::Result<()> {
    let mut spec = match spec_path {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            toml::from_str::<SynthSpec>(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        }
        None => benchmark_synth_spec(0),
    };
    if let Some(seed) = seed {
        spec.seed = seed;
    }
    spec.validate().map_err(|e| Error::Config(e.to_string()))?;
    if out.exists() && fs::read_dir(out).map_err(|e| Error::io(out, e))?.next().is_some() {
        return Err(Error::Config(format!("{} exists and is not empty", out.display())));
    }

    let scenes = synth_dataset(&spec)?;
    // build next to the target, then move into place
    let name = out.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let staging = out.with_file_name(format!(".{name}.tmp-{}", std::process::id()));
    let written = write_dataset(&scenes, &staging).and_then(|_| {
        if out.exists() {
            fs::remove_dir(out).map_err(|e| Error::io(out, e))?;
        }
        fs::rename(&staging, out).map_err(|e| Error::io(out, e))
    });
    if written.is_err() {
        let _ = fs::remove_dir_all(&staging);
    }
    written?;
    println!("wrote {} scenes to {}", scenes.len(), out.display());
    Ok(())
}

fn run(config_path: &Path, seed: Option<u64>, out: &Path, save_checkpoints: bool) -> alac::Result<()> {
    let mut config = ExperimentConfig::load(config_path)?;
    if let Some(seed) = seed {
        config.base_seed = seed;
    }
    let output = run_experiment(&config, out)?;
    if save_checkpoints {
        let dir = out.join("checkpoints");
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        for (variant, trial, state) in &output.states {
            let path = dir.join(format!("{}_trial{trial}.json", variant.replace('+', "_")));
            Checkpoint::new(config.features(), config.sigma, state.clone()).save(&path)?;
        }
    }
    println!("{:<16} {:>9} {:>9} {:>9} {:>9}", "variant", "mae", "mae_std", "mse", "mse_std");
    for row in &output.table.rows {
        println!(
            "{:<16} {:>9.3} {:>9.3} {:>9.3} {:>9.3}",
            row.strategy, row.mae_mean, row.mae_std, row.mse_mean, row.mse_std
        );
    }
    Ok(())
}

fn load_labeled(path: Option<&Path>) -> alac::Result<Vec<SceneId>> {
    let Some(path) = path else {
        return Ok(Vec::new());
    };
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(SceneId::from)
        .collect())
}

#[allow(clippy::too_many_arguments)]
fn select_step(
    checkpoint: &Path,
    manifest: &Path,
    labeled: Option<&Path>,
    strategy: Strategy,
    m: usize,
    level: u32,
    seed: u64,
    out: &Path,
) -> alac::Result<()> {
    let ck = Checkpoint::load(checkpoint)?;
    let scenes = load_dataset(manifest)?;
    let labeled = load_labeled(labeled)?;
    let known: HashSet<&SceneId> = scenes.iter().map(|s| &s.id).collect();
    if let Some(id) = labeled.iter().find(|id| !known.contains(id)) {
        return Err(Error::InvalidArgument(format!("labeled id {id} is not in the manifest")));
    }
    let pool = Pool::new(scenes.iter().map(|s| s.id.clone()))?.annotate(&labeled)?;

    let mut predictions = HashMap::new();
    let mut gt: HashMap<SceneId, DensityMap> = HashMap::new();
    for scene in &scenes {
        if pool.labeled().contains(&scene.id) {
            gt.insert(scene.id.clone(), rasterize(scene, ck.features.cell_size, ck.sigma)?);
        } else if strategy != Strategy::Random {
            let (_, pred) = forward(&ck.state, &featurize(scene, &ck.features)?, ck.features.cell_size)?;
            predictions.insert(scene.id.clone(), pred);
        }
    }
    let req = SelectionRequest {
        strategy,
        m,
        level,
        seed,
    };
    let picked = select(&pool, &predictions, &gt, &req)?;
    let mut body = String::new();
    for id in &picked {
        body.push_str(id.as_str());
        body.push('\n');
    }
    write_atomic(out, body.as_bytes())?;
    print!("{body}");
    Ok(())
}

fn eval(checkpoint: &Path, manifest: &Path, out: &Path) -> alac::Result<()> {
    let ck = Checkpoint::load(checkpoint)?;
    let scenes = load_dataset(manifest)?;
    if scenes.is_empty() {
        return Err(Error::InvalidArgument(format!("{} lists no scenes", manifest.display())));
    }
    let pairs = scenes
        .iter()
        .map(|s| {
            let (_, pred) = forward(&ck.state, &featurize(s, &ck.features)?, ck.features.cell_size)?;
            Ok((pred, rasterize(s, ck.features.cell_size, ck.sigma)?))
        })
        .collect::<alac::Result<Vec<_>>>()?;
    let report = evaluate(&pairs, RESULT_GAME_LEVELS)?;
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    write_atomic(out, format!("{json}\n").as_bytes())?;
    println!("scenes {}  mae {:.4}  mse {:.4}", report.n_scenes, report.mae, report.mse);
    Ok(())
}
