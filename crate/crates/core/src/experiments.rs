//! Experiment harness: convergence-trial index versus task size, and trial
//! length versus trial index, summarized with the type-1 (inverse empirical
//! CDF) quantile.
//!
//! Every run gets its own seed from [`derive_seed`], so results do not depend
//! on how runs are spread over worker threads.

use rayon::prelude::*;
use thiserror::Error;

use crate::engine::{seeded_run_setup, Caps, EngineError, Simulation};
use crate::generators::{chain_task, corridor_task, GenError};
use crate::task::Task;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("quantile level must satisfy 0 < p < 1, got {0}")]
    QuantileLevel(f64),
    #[error("quantile of an empty list")]
    EmptyQuantileInput,
    #[error("quantile input contains NaN")]
    NanInput,
    #[error("{0} must be at least 1")]
    Zero(&'static str),
    #[error(transparent)]
    Gen(#[from] GenError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("thread pool: {0}")]
    ThreadPool(#[from] rayon::ThreadPoolBuildError),
}

/// A validated quantile input: a nonempty list and a level strictly inside (0, 1).
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileInput<T> {
    values: Vec<T>,
    p: f64,
}

impl<T: Copy + PartialOrd> QuantileInput<T> {
    pub fn new(values: Vec<T>, p: f64) -> Result<Self, ExperimentError> {
        if !(p > 0.0 && p < 1.0) {
            return Err(ExperimentError::QuantileLevel(p));
        }
        if values.is_empty() {
            return Err(ExperimentError::EmptyQuantileInput);
        }
        #[allow(clippy::eq_op)]
        if values.iter().any(|v| v != v) {
            return Err(ExperimentError::NanInput);
        }
        Ok(QuantileInput { values, p })
    }

    /// Type-1 quantile: with `j = ⌊p·n⌋`, the `(j+1)`-th smallest element if
    /// `p·n` has a fractional part, else the `j`-th smallest.
    ///
    /// `p·n` within a few ulps of an integer counts as that integer, so
    /// decimal levels such as 0.9 behave as written.
    pub fn quantile(&self) -> T {
        let mut sorted = self.values.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("no NaN"));
        let n = sorted.len();
        let np = self.p * n as f64;
        let fuzz = 4.0 * f64::EPSILON * np.max(1.0);
        let j = (np + fuzz).floor();
        let index = if np - j > fuzz { j as usize + 1 } else { j as usize };
        sorted[index.clamp(1, n) - 1]
    }
}

/// Shorthand for `QuantileInput::new(values.to_vec(), p)?.quantile()`.
pub fn quantile<T: Copy + PartialOrd>(values: &[T], p: f64) -> Result<T, ExperimentError> {
    Ok(QuantileInput::new(values.to_vec(), p)?.quantile())
}

const fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-run seed: `m(m(m(master) ^ size) ^ run_index)` with `m` the
/// SplitMix64 finalizer. Fixed-task experiments use `size = 0`.
pub const fn derive_seed(master_seed: u64, size: u64, run_index: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(master_seed) ^ size) ^ run_index)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Corridor,
    Chain,
}

impl Family {
    pub fn task(self, size: u32) -> Result<Task, GenError> {
        match self {
            Family::Corridor => corridor_task(size),
            Family::Chain => chain_task(size),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Family::Corridor => "corridor",
            Family::Chain => "chain",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExperimentSettings {
    pub runs: usize,
    pub p: f64,
    pub master_seed: u64,
    pub caps: Caps,
    /// Worker threads; results are identical for every value.
    pub jobs: usize,
}

impl Default for ExperimentSettings {
    fn default() -> Self {
        ExperimentSettings {
            runs: 400,
            p: 0.9,
            master_seed: 0,
            caps: Caps::default(),
            jobs: 1,
        }
    }
}

impl ExperimentSettings {
    fn check(&self) -> Result<(), ExperimentError> {
        if !(self.p > 0.0 && self.p < 1.0) {
            return Err(ExperimentError::QuantileLevel(self.p));
        }
        if self.runs == 0 {
            return Err(ExperimentError::Zero("runs"));
        }
        if self.caps.step_cap == 0 {
            return Err(ExperimentError::Zero("step cap"));
        }
        if self.caps.trial_cap == 0 {
            return Err(ExperimentError::Zero("trial cap"));
        }
        Ok(())
    }

    fn pool(&self) -> Result<rayon::ThreadPool, ExperimentError> {
        Ok(rayon::ThreadPoolBuilder::new().num_threads(self.jobs.max(1)).build()?)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConvergenceRow {
    pub size: u32,
    /// Quantile over converged runs; `None` if every run failed.
    pub quantile: Option<usize>,
    pub runs: usize,
    /// Runs that hit a cap before convergence; excluded from the quantile.
    pub failures: usize,
    /// Convergence-trial index per run, `None` for failed runs.
    pub indices: Vec<Option<usize>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceTable {
    pub family: Family,
    pub settings: ExperimentSettings,
    pub rows: Vec<ConvergenceRow>,
}

impl ConvergenceTable {
    pub fn total_failures(&self) -> usize {
        self.rows.iter().map(|r| r.failures).sum()
    }

    /// `size,quantile,runs,failures`
    pub fn to_csv(&self) -> String {
        let mut out = String::from("size,quantile,runs,failures\n");
        for r in &self.rows {
            let q = r.quantile.map(|q| q.to_string()).unwrap_or_default();
            out.push_str(&format!("{},{},{},{}\n", r.size, q, r.runs, r.failures));
        }
        out
    }
}

/// One random-scheduler run until convergence; `None` if a cap was hit.
pub fn convergence_index(task: &Task, seed: u64, caps: Caps) -> Result<Option<usize>, EngineError> {
    let (scheduler, policy) = seeded_run_setup(task, seed);
    let summary = Simulation::new(task, scheduler, policy, caps.step_cap).run_with(caps.trial_cap, drop)?;
    Ok(summary.convergence_trial_index)
}

/// For each size, runs `settings.runs` seeded random-scheduler runs until the
/// final policy is detected and reports the `p`-quantile of the
/// convergence-trial indexes. Sizes are sorted and deduplicated.
pub fn convergence_index_experiment(
    family: Family,
    sizes: &[u32],
    settings: ExperimentSettings,
) -> Result<ConvergenceTable, ExperimentError> {
    settings.check()?;
    if sizes.is_empty() {
        return Err(ExperimentError::Zero("number of sizes"));
    }
    let mut sizes = sizes.to_vec();
    sizes.sort_unstable();
    sizes.dedup();
    let tasks = sizes.iter().map(|&s| family.task(s)).collect::<Result<Vec<_>, _>>()?;
    let jobs: Vec<(usize, usize)> = (0..sizes.len())
        .flat_map(|i| (0..settings.runs).map(move |r| (i, r)))
        .collect();
    let results: Vec<Option<usize>> = settings.pool()?.install(|| {
        jobs.par_iter()
            .map(|&(i, r)| {
                let seed = derive_seed(settings.master_seed, u64::from(sizes[i]), r as u64);
                convergence_index(&tasks[i], seed, settings.caps)
            })
            .collect::<Result<Vec<_>, _>>()
    })?;
    let rows = sizes
        .iter()
        .zip(results.chunks(settings.runs))
        .map(|(&size, indices)| {
            let ok: Vec<usize> = indices.iter().flatten().copied().collect();
            let quantile = if ok.is_empty() {
                None
            } else {
                Some(QuantileInput::new(ok, settings.p)?.quantile())
            };
            Ok(ConvergenceRow {
                size,
                quantile,
                runs: settings.runs,
                failures: indices.iter().filter(|i| i.is_none()).count(),
                indices: indices.to_vec(),
            })
        })
        .collect::<Result<Vec<_>, ExperimentError>>()?;
    Ok(ConvergenceTable { family, settings, rows })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialLengthTable {
    pub settings: ExperimentSettings,
    pub trials_per_run: usize,
    /// `(trial_index, quantile)` with 1-based trial indexes.
    pub rows: Vec<(usize, Option<usize>)>,
    /// Runs with a truncated trial; excluded from every quantile.
    pub failures: usize,
}

impl TrialLengthTable {
    /// `trial_index,length_quantile`, omitting the first `skip_first` trials.
    pub fn to_csv(&self, skip_first: usize) -> String {
        let mut out = String::from("trial_index,length_quantile\n");
        for &(i, q) in self.rows.iter().skip(skip_first) {
            let q = q.map(|q| q.to_string()).unwrap_or_default();
            out.push_str(&format!("{i},{q}\n"));
        }
        out
    }
}

/// Trial lengths of one seeded run over exactly `trials` trials, ignoring
/// convergence; `None` if a trial was truncated.
pub fn trial_lengths(
    task: &Task,
    seed: u64,
    trials: usize,
    step_cap: usize,
) -> Result<Option<Vec<usize>>, EngineError> {
    let (scheduler, policy) = seeded_run_setup(task, seed);
    let mut sim = Simulation::new(task, scheduler, policy, step_cap);
    let mut lengths = Vec::with_capacity(trials);
    for _ in 0..trials {
        let record = sim.next_trial()?;
        if record.truncated {
            return Ok(None);
        }
        lengths.push(record.length);
    }
    Ok(Some(lengths))
}

/// Builds the run × trial matrix of trial lengths and reports, per trial
/// index, the `p`-quantile over runs. Run `r` uses `derive_seed(seed, 0, r)`.
pub fn trial_length_experiment(
    task: &Task,
    trials_per_run: usize,
    settings: ExperimentSettings,
) -> Result<TrialLengthTable, ExperimentError> {
    settings.check()?;
    if trials_per_run == 0 {
        return Err(ExperimentError::Zero("trials per run"));
    }
    let matrix: Vec<Option<Vec<usize>>> = settings.pool()?.install(|| {
        (0..settings.runs)
            .into_par_iter()
            .map(|r| {
                trial_lengths(
                    task,
                    derive_seed(settings.master_seed, 0, r as u64),
                    trials_per_run,
                    settings.caps.step_cap,
                )
            })
            .collect::<Result<Vec<_>, _>>()
    })?;
    let ok: Vec<&Vec<usize>> = matrix.iter().flatten().collect();
    let failures = matrix.len() - ok.len();
    let mut rows = Vec::with_capacity(trials_per_run);
    for t in 0..trials_per_run {
        let column: Vec<usize> = ok.iter().map(|run| run[t]).collect();
        let q = if column.is_empty() {
            None
        } else {
            Some(QuantileInput::new(column, settings.p)?.quantile())
        };
        rows.push((t + 1, q));
    }
    Ok(TrialLengthTable {
        settings,
        trials_per_run,
        rows,
        failures,
    })
}
