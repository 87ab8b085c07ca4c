//! Active-learning protocol driver and multi-trial runner.
//!
//! One trial: label `m` scenes uniformly at random, train, then repeat
//! predict -> select -> annotate -> train (warm-started) until `M` scenes are
//! labeled. Alignment variants train the final cycle with the distribution
//! classifier on both pools. Test metrics come from a held-out split that
//! never enters any pool.

mod config;
mod results;

use std::collections::{HashMap, HashSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
#[cfg(feature = "parallel")]
use rayon::prelude::*;

pub use config::{
    benchmark_config, benchmark_synth_spec, Alignment, DatasetConfig, ExperimentConfig, ModelConfig, Variant,
};
pub use results::{
    mean_std, read_results, read_summary, summarize, write_results, CycleRecord, ResultsTable,
    SummaryRow, RESULTS_FILE, RESULTS_HEADER, RESULT_GAME_LEVELS, SUMMARY_FILE, SUMMARY_HEADER,
};

use crate::alignment::{aligned_train_step, ClassifierState};
use crate::data::{load_dataset, synth_dataset, Pool, Scene, SceneId};
use crate::density::{rasterize, DensityMap};
use crate::metrics::{evaluate, EvalReport};
use crate::model::{
    featurize, forward, train_step, Example, FeatureConfig, FeatureGrid, ModelShape,
    RegressorState,
};
use crate::selection::{select, SelectionRequest, Strategy};
use crate::{Error, Result};

/// Fraction of a dataset used for training when no test manifest is given.
pub const TRAIN_FRACTION: f64 = 0.6;

/// Scenes with cached features and ground-truth maps, split into train and test.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub scenes: HashMap<SceneId, Scene>,
    pub features: HashMap<SceneId, FeatureGrid>,
    pub gt: HashMap<SceneId, DensityMap>,
    pub train: Vec<SceneId>,
    pub test: Vec<SceneId>,
}

impl PreparedData {
    pub fn new(
        train: Vec<Scene>,
        test: Vec<Scene>,
        features: &FeatureConfig,
        sigma: f64,
    ) -> Result<Self> {
        let train_ids: Vec<SceneId> = train.iter().map(|s| s.id.clone()).collect();
        let test_ids: Vec<SceneId> = test.iter().map(|s| s.id.clone()).collect();
        let train_set: HashSet<&SceneId> = train_ids.iter().collect();
        if let Some(dup) = test_ids.iter().find(|id| train_set.contains(id)) {
            return Err(Error::invalid(format!("scene {dup} is in both train and test")));
        }
        let mut data = Self {
            scenes: HashMap::new(),
            features: HashMap::new(),
            gt: HashMap::new(),
            train: train_ids,
            test: test_ids,
        };
        for scene in train.into_iter().chain(test) {
            data.features.insert(scene.id.clone(), featurize(&scene, features)?);
            data.gt.insert(scene.id.clone(), rasterize(&scene, features.cell_size, sigma)?);
            if data.scenes.insert(scene.id.clone(), scene).is_some() {
                return Err(Error::invalid("duplicate scene id in dataset"));
            }
        }
        Ok(data)
    }

    /// Seeded shuffle, first [`TRAIN_FRACTION`] for training.
    pub fn split(scenes: Vec<Scene>, seed: u64, features: &FeatureConfig, sigma: f64) -> Result<Self> {
        let mut order: Vec<usize> = (0..scenes.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n_train = (scenes.len() as f64 * TRAIN_FRACTION).round() as usize;
        let mut slots: Vec<Option<Scene>> = scenes.into_iter().map(Some).collect();
        let mut take = |idx: &[usize]| -> Vec<Scene> {
            idx.iter().map(|&i| slots[i].take().expect("each index once")).collect()
        };
        let train = take(&order[..n_train]);
        let test = take(&order[n_train..]);
        Self::new(train, test, features, sigma)
    }

    pub fn from_config(config: &ExperimentConfig) -> Result<Self> {
        let features = config.features();
        let ds = &config.dataset;
        let scenes = match (&ds.synth, &ds.manifest) {
            (Some(spec), _) => synth_dataset(spec)?,
            (None, Some(path)) => load_dataset(path)?,
            (None, None) => return Err(Error::Config("no dataset source".into())),
        };
        let data = match &ds.test_manifest {
            Some(test) => Self::new(scenes, load_dataset(test)?, &features, config.sigma)?,
            None => Self::split(scenes, ds.split_seed, &features, config.sigma)?,
        };
        if config.budget > data.train.len() {
            return Err(Error::Config(format!(
                "budget {} exceeds the {} training scenes",
                config.budget,
                data.train.len()
            )));
        }
        if data.test.is_empty() {
            return Err(Error::Config("test split is empty".into()));
        }
        Ok(data)
    }

    fn examples<'a>(&'a self, ids: &[SceneId]) -> Vec<Example<'a>> {
        ids.iter().map(|id| (&self.features[id], &self.gt[id])).collect()
    }
}

// Independent RNG streams per purpose so that, e.g., every variant shares the
// initial weights and the cycle-1 random pick.
#[derive(Debug, Clone, Copy)]
enum Stream {
    Init = 1,
    Select = 2,
    Shuffle = 3,
    Pairs = 4,
    Classifier = 5,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn stream_seed(trial_seed: u64, stream: Stream, cycle: usize) -> u64 {
    splitmix(splitmix(splitmix(trial_seed) ^ stream as u64) ^ cycle as u64)
}

/// Predicted density maps for `ids`.
pub fn predict(
    state: &RegressorState,
    data: &PreparedData,
    ids: &[SceneId],
    cell_size: u32,
) -> Result<HashMap<SceneId, DensityMap>> {
    let one = |id: &SceneId| -> Result<(SceneId, DensityMap)> {
        let (_, pred) = forward(state, &data.features[id], cell_size)?;
        Ok((id.clone(), pred))
    };
    #[cfg(feature = "parallel")]
    return ids.par_iter().map(one).collect();
    #[cfg(not(feature = "parallel"))]
    return ids.iter().map(one).collect();
}

/// Test-set metrics of `state`.
pub fn evaluate_state(state: &RegressorState, data: &PreparedData, cell_size: u32) -> Result<EvalReport> {
    let preds = predict(state, data, &data.test, cell_size)?;
    let pairs: Vec<(DensityMap, DensityMap)> = data
        .test
        .iter()
        .map(|id| (preds[id].clone(), data.gt[id].clone()))
        .collect();
    evaluate(&pairs, RESULT_GAME_LEVELS)
}

fn model_shape(config: &ExperimentConfig) -> ModelShape {
    ModelShape {
        input: config.features().dim(),
        hidden: config.model.hidden,
        latent: config.model.latent,
    }
}

/// Initial regressor of a trial; shared by every variant with the same seed.
pub fn initial_state(config: &ExperimentConfig, trial_seed: u64) -> RegressorState {
    RegressorState::init(
        model_shape(config),
        config.momentum,
        stream_seed(trial_seed, Stream::Init, 0),
    )
    .with_grad_clip(config.grad_clip())
}

/// State carried through one trial.
struct TrialState {
    reg: RegressorState,
    clf: ClassifierState,
    pool: Pool,
}

fn train_cycle(
    config: &ExperimentConfig,
    data: &PreparedData,
    st: &mut TrialState,
    aligned: Option<Alignment>,
    trial_seed: u64,
    cycle: usize,
) -> Result<()> {
    let labeled: Vec<SceneId> = st.pool.labeled().iter().cloned().collect();
    let unlabeled: Vec<&FeatureGrid> = st
        .pool
        .unlabeled()
        .iter()
        .map(|id| &data.features[id])
        .collect();
    let align_cfg = aligned.map(|a| config.align(a));
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(stream_seed(trial_seed, Stream::Shuffle, cycle));
    let mut pair_rng = ChaCha8Rng::seed_from_u64(stream_seed(trial_seed, Stream::Pairs, cycle));
    let mut order = labeled;
    for _ in 0..config.epochs_per_cycle {
        order.shuffle(&mut shuffle_rng);
        for chunk in order.chunks(config.model.batch_size) {
            let batch = data.examples(chunk);
            match &align_cfg {
                Some(ac) => {
                    let (reg, clf) = aligned_train_step(
                        &st.reg,
                        &st.clf,
                        &batch,
                        &unlabeled,
                        ac,
                        config.lr,
                        &mut pair_rng,
                    )?;
                    st.reg = reg;
                    st.clf = clf;
                }
                None => st.reg = train_step(&st.reg, &batch, config.lr)?,
            }
        }
    }
    Ok(())
}

/// Runs the full protocol once and returns one record per cycle.
pub fn run_trial(
    config: &ExperimentConfig,
    data: &PreparedData,
    variant: Variant,
    trial: usize,
    trial_seed: u64,
) -> Result<Vec<CycleRecord>> {
    run_trial_with_state(config, data, variant, trial, trial_seed).map(|(records, _)| records)
}

/// [`run_trial`] plus the regressor after the last cycle.
pub fn run_trial_with_state(
    config: &ExperimentConfig,
    data: &PreparedData,
    variant: Variant,
    trial: usize,
    trial_seed: u64,
) -> Result<(Vec<CycleRecord>, RegressorState)> {
    config.validate()?;
    let with_context = |cycle: usize| {
        move |e: Error| Error::Trial {
            trial,
            cycle,
            source: Box::new(e),
        }
    };
    let pool = Pool::new(data.train.iter().cloned())?;
    let mut clf_rng = ChaCha8Rng::seed_from_u64(stream_seed(trial_seed, Stream::Classifier, 0));
    let mut st = TrialState {
        reg: initial_state(config, trial_seed),
        clf: ClassifierState::init(config.model.latent, config.momentum, &mut clf_rng),
        pool,
    };

    let cycles = config.cycles();
    let mut records = Vec::with_capacity(cycles);
    for cycle in 1..=cycles {
        let mut step = || -> Result<CycleRecord> {
            let n_new = config.batch.min(config.budget - st.pool.labeled().len());
            let strategy = if cycle == 1 { Strategy::Random } else { variant.strategy };
            let req = SelectionRequest {
                strategy,
                m: n_new,
                level: config.level,
                seed: stream_seed(trial_seed, Stream::Select, cycle),
            };
            let predictions = if strategy == Strategy::Random {
                HashMap::new()
            } else {
                let ids: Vec<SceneId> = st.pool.unlabeled().iter().cloned().collect();
                predict(&st.reg, data, &ids, config.cell_size)?
            };
            let selected = select(&st.pool, &predictions, &data.gt, &req)?;
            st.pool = st.pool.annotate(&selected)?;

            let last = cycle == cycles;
            let aligned = match variant.alignment {
                Alignment::None => None,
                a if last || config.align_every_cycle => Some(a),
                _ => None,
            };
            train_cycle(config, data, &mut st, aligned, trial_seed, cycle)?;
            Ok(CycleRecord {
                trial,
                cycle,
                selected,
                labeled: st.pool.labeled().len(),
                report: evaluate_state(&st.reg, data, config.cell_size)?,
            })
        };
        records.push(step().map_err(with_context(cycle))?);
    }
    Ok((records, st.reg))
}

/// All cycle records plus the per-variant summary over final cycles.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub records: Vec<(String, CycleRecord)>,
    pub table: ResultsTable,
    /// Final regressor of every `(variant, trial)`.
    pub states: Vec<(String, usize, RegressorState)>,
}

/// Runs every variant for `trials` trials with seeds `base_seed + i`.
pub fn run_experiment_on(config: &ExperimentConfig, data: &PreparedData) -> Result<ExperimentOutput> {
    config.validate()?;
    let mut records = Vec::new();
    let mut states = Vec::new();
    let mut table = ResultsTable::default();
    for &variant in &config.variants {
        let run = |trial: usize| {
            run_trial_with_state(config, data, variant, trial, config.base_seed + trial as u64)
        };
        #[cfg(feature = "parallel")]
        let trials: Vec<_> = (0..config.trials).into_par_iter().map(run).collect::<Result<_>>()?;
        #[cfg(not(feature = "parallel"))]
        let trials: Vec<_> = (0..config.trials).map(run).collect::<Result<_>>()?;

        let name = variant.to_string();
        let finals: Vec<&CycleRecord> = trials.iter().filter_map(|(t, _)| t.last()).collect();
        table.rows.push(summarize(&name, &finals));
        for (trial, (recs, state)) in trials.into_iter().enumerate() {
            records.extend(recs.into_iter().map(|r| (name.clone(), r)));
            states.push((name.clone(), trial, state));
        }
    }
    Ok(ExperimentOutput {
        records,
        table,
        states,
    })
}

/// Loads the dataset, runs the experiment and writes `results.csv` /
/// `summary.csv` into `out_dir` (nothing is written if any trial fails).
pub fn run_experiment(config: &ExperimentConfig, out_dir: &Path) -> Result<ExperimentOutput> {
    let data = PreparedData::from_config(config)?;
    let output = run_experiment_on(config, &data)?;
    write_results(out_dir, &output.records, &output.table)?;
    Ok(output)
}
