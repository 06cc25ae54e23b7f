//! Simulation and analysis of the cycle-detection learner on nondeterministic
//! navigation tasks.
//!
//! The learner remembers every state visited since the last reward. When it
//! revisits a state it may try any action there, and the chosen action is
//! stored in the policy. Runs are driven by fair schedulers, and convergence
//! is detected exactly with the final-policy test `forward ⊆ backward`.
//!
//! - [`task`]: task model, task and policy file formats
//! - [`analysis`]: reducibility layers, unstable/border sets, necessary conditions
//! - [`engine`]: configurations, options, schedulers, trials and runs
//! - [`convergence`]: ground/forward/backward sets and the final-policy test
//! - [`generators`]: grid, corridor and chain task families
//! - [`experiments`]: type-1 quantiles and the seeded experiment harness

pub mod analysis;
pub mod convergence;
pub mod engine;
pub mod experiments;
pub mod fixtures;
pub mod generators;
pub mod task;

pub use analysis::{
    check_necessary_conditions, is_reducible, path_exists, reduce, reducibility_layers, unstable_and_border,
    LayerSequence, NecessaryConditionsReport,
};
pub use convergence::{analyze_policy, backward_set, forward_set, ground, is_final_policy, PolicyAnalysis};
pub use engine::{
    apply_option, options, run_trial, run_until_convergence, Caps, Choice, Configuration, EngineError, Recording,
    RunOutcome, RunRecord, RunSummary, Scheduler, SchedulerKind, Simulation, TransitionRecord, TrialRecord,
};
pub use experiments::{
    convergence_index_experiment, derive_seed, quantile, trial_length_experiment, ExperimentError, ExperimentSettings,
    Family, QuantileInput,
};
pub use generators::{chain_task, corridor_task, grid_task, GenError, GridAction, GridSpec};
pub use task::{parse_task, ActionId, Policy, StateId, StateSet, Task, TaskError, ValidationReport};
