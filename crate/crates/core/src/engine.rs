//! Operational semantics of the cycle-detection learner.
//!
//! A configuration is the current state, the policy and the working memory
//! of states visited since the last reward. At a revisit (a *branching*
//! configuration) every action is eligible; otherwise only the policy action
//! is. The chosen action is written back into the policy for the departed
//! state, which is then added to the working memory. A trial ends right after
//! the first rewarding transition; a run chains trials, reusing the policy and
//! clearing the working memory, and rotates through the start states.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::convergence::is_final_policy;
use crate::task::{ActionId, Policy, StateId, StateSet, Task};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EngineError {
    #[error("option ({action:?},{next:?}) is not available at state {state:?}")]
    InvalidOption {
        state: StateId,
        action: ActionId,
        next: StateId,
    },
    #[error("scripted option #{position} ({action},{next}) is not available at state {state}")]
    ScriptMismatch {
        position: usize,
        state: String,
        action: String,
        next: String,
    },
    #[error("empty script")]
    EmptyScript,
    #[error("state {0:?} is not a start state")]
    NotAStartState(StateId),
    #[error("{0} must be at least 1")]
    ZeroCap(&'static str),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Configuration {
    pub state: StateId,
    pub policy: Policy,
    pub memory: StateSet,
}

impl Configuration {
    /// A start configuration: empty working memory.
    pub fn start(task: &Task, state: StateId, policy: Policy) -> Self {
        Configuration {
            state,
            policy,
            memory: task.empty_set(),
        }
    }

    pub fn is_branching(&self) -> bool {
        self.memory.contains(self.state)
    }
}

/// An eligible (action, successor) pair at a configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Choice {
    pub action: ActionId,
    pub next: StateId,
}

impl Choice {
    pub fn new(action: ActionId, next: StateId) -> Self {
        Choice { action, next }
    }
}

fn fill_options(task: &Task, state: StateId, branching: bool, policy: &Policy, buf: &mut Vec<Choice>) {
    buf.clear();
    let mut push = |a: ActionId| {
        buf.extend(task.delta(state, a).iter().map(|&next| Choice { action: a, next }));
    };
    if branching {
        task.actions().for_each(&mut push);
    } else {
        push(policy.action(state));
    }
}

/// Options at `cfg`, ordered by action then successor in canonical order.
pub fn options(task: &Task, cfg: &Configuration) -> Vec<Choice> {
    let mut buf = Vec::new();
    fill_options(task, cfg.state, cfg.is_branching(), &cfg.policy, &mut buf);
    buf
}

/// Successor configuration: move to `choice.next`, store `choice.action` for
/// the departed state and mark it visited.
pub fn apply_option(task: &Task, cfg: &Configuration, choice: Choice) -> Result<Configuration, EngineError> {
    if !options(task, cfg).contains(&choice) {
        return Err(EngineError::InvalidOption {
            state: cfg.state,
            action: choice.action,
            next: choice.next,
        });
    }
    let mut next = cfg.clone();
    step_in_place(&mut next, choice);
    Ok(next)
}

fn step_in_place(cfg: &mut Configuration, choice: Choice) {
    cfg.policy.set(cfg.state, choice.action);
    cfg.memory.insert(cfg.state);
    cfg.state = choice.next;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchedulerKind {
    Rotating,
    Random,
    Scripted,
}

#[derive(Debug, Clone)]
enum SchedulerInner {
    /// Visit counts per full configuration.
    Rotating {
        counts: HashMap<Configuration, u64>,
    },
    Random {
        rng: Box<ChaCha8Rng>,
        master_seed: u64,
    },
    /// Replays a fixed option list, wrapping around at the end.
    Scripted {
        script: Vec<Choice>,
        position: usize,
    },
}

/// Resolves the action and successor choice at every transition.
#[derive(Debug, Clone)]
pub struct Scheduler {
    inner: SchedulerInner,
}

impl Scheduler {
    /// Deterministic fair scheduler: the `k`-th occurrence (0-based) of a
    /// configuration takes option `k mod |options|`.
    pub fn rotating() -> Self {
        Scheduler {
            inner: SchedulerInner::Rotating { counts: HashMap::new() },
        }
    }

    /// Uniform draw over the option list, seeded.
    pub fn random(master_seed: u64) -> Self {
        Scheduler {
            inner: SchedulerInner::Random {
                rng: Box::new(ChaCha8Rng::seed_from_u64(master_seed)),
                master_seed,
            },
        }
    }

    pub fn scripted(script: Vec<Choice>) -> Result<Self, EngineError> {
        if script.is_empty() {
            return Err(EngineError::EmptyScript);
        }
        Ok(Scheduler {
            inner: SchedulerInner::Scripted { script, position: 0 },
        })
    }

    pub fn kind(&self) -> SchedulerKind {
        match self.inner {
            SchedulerInner::Rotating { .. } => SchedulerKind::Rotating,
            SchedulerInner::Random { .. } => SchedulerKind::Random,
            SchedulerInner::Scripted { .. } => SchedulerKind::Scripted,
        }
    }

    pub fn master_seed(&self) -> Option<u64> {
        match self.inner {
            SchedulerInner::Random { master_seed, .. } => Some(master_seed),
            _ => None,
        }
    }

    /// Occurrences of `cfg` seen so far (rotating kind only).
    pub fn visit_count(&self, cfg: &Configuration) -> u64 {
        match &self.inner {
            SchedulerInner::Rotating { counts } => counts.get(cfg).copied().unwrap_or(0),
            _ => 0,
        }
    }

    /// Picks an index into `opts`, which must be nonempty and canonically ordered.
    pub fn choose(&mut self, task: &Task, cfg: &Configuration, opts: &[Choice]) -> Result<usize, EngineError> {
        debug_assert!(!opts.is_empty());
        match &mut self.inner {
            SchedulerInner::Rotating { counts } => {
                let count = counts.entry(cfg.clone()).or_insert(0);
                let index = (*count % opts.len() as u64) as usize;
                *count += 1;
                Ok(index)
            }
            SchedulerInner::Random { rng, .. } => {
                let u: f64 = rng.gen();
                Ok(((u * opts.len() as f64) as usize).min(opts.len() - 1))
            }
            SchedulerInner::Scripted { script, position } => {
                let want = script[*position % script.len()];
                let found = opts
                    .iter()
                    .position(|&c| c == want)
                    .ok_or_else(|| EngineError::ScriptMismatch {
                        position: *position,
                        state: task.state_name(cfg.state).to_owned(),
                        action: task.action_name(want.action).to_owned(),
                        next: task.state_name(want.next).to_owned(),
                    })?;
                *position += 1;
                Ok(found)
            }
        }
    }
}

/// Draws one uniformly random action per state, in canonical state order.
pub fn random_policy<R: Rng>(task: &Task, rng: &mut R) -> Policy {
    Policy::new(
        task.states()
            .map(|_| ActionId(rng.gen_range(0..task.num_actions())))
            .collect(),
    )
}

/// Scheduler and initial policy for one seeded random run. The policy uses a
/// separate ChaCha stream of the same seed.
pub fn seeded_run_setup(task: &Task, seed: u64) -> (Scheduler, Policy) {
    let mut policy_rng = ChaCha8Rng::seed_from_u64(seed);
    policy_rng.set_stream(1);
    (Scheduler::random(seed), random_policy(task, &mut policy_rng))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransitionRecord {
    pub source: Configuration,
    pub action: ActionId,
    pub next_state: StateId,
    pub target: Configuration,
    pub is_reward: bool,
    pub source_branching: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrialRecord {
    pub start_state: StateId,
    /// Full transcript; empty unless recording was requested.
    pub transitions: Vec<TransitionRecord>,
    pub end_policy: Policy,
    /// Number of transitions, which is also the number of non-terminal configurations.
    pub length: usize,
    pub terminated_with_reward: bool,
    pub truncated: bool,
    /// Transitions whose source configuration is branching.
    pub branching_steps: usize,
    pub policy_changed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Recording {
    Full,
    Summary,
}

fn execute_trial(
    task: &Task,
    start: StateId,
    policy: Policy,
    scheduler: &mut Scheduler,
    step_cap: usize,
    recording: Recording,
    buf: &mut Vec<Choice>,
) -> Result<TrialRecord, EngineError> {
    let initial = policy.clone();
    let mut cfg = Configuration::start(task, start, policy);
    let mut transitions = Vec::new();
    let mut length = 0;
    let mut branching_steps = 0;
    let mut rewarded = false;
    while length < step_cap {
        let branching = cfg.is_branching();
        fill_options(task, cfg.state, branching, &cfg.policy, buf);
        let choice = buf[scheduler.choose(task, &cfg, buf)?];
        let is_reward = task.is_reward(cfg.state, choice.action);
        length += 1;
        branching_steps += usize::from(branching);
        match recording {
            Recording::Full => {
                let source = cfg.clone();
                step_in_place(&mut cfg, choice);
                transitions.push(TransitionRecord {
                    source,
                    action: choice.action,
                    next_state: choice.next,
                    target: cfg.clone(),
                    is_reward,
                    source_branching: branching,
                });
            }
            Recording::Summary => step_in_place(&mut cfg, choice),
        }
        if is_reward {
            rewarded = true;
            break;
        }
    }
    let policy_changed = cfg.policy != initial;
    Ok(TrialRecord {
        start_state: start,
        transitions,
        end_policy: cfg.policy,
        length,
        terminated_with_reward: rewarded,
        truncated: !rewarded,
        branching_steps,
        policy_changed,
    })
}

/// Runs one trial from the start configuration `(start, policy, ∅)` with a
/// full transcript. Stops after the first reward transition or after
/// `step_cap` transitions (then `truncated` is set).
pub fn run_trial(
    task: &Task,
    start: StateId,
    policy: Policy,
    scheduler: &mut Scheduler,
    step_cap: usize,
) -> Result<TrialRecord, EngineError> {
    if !task.start_states().contains(&start) {
        return Err(EngineError::NotAStartState(start));
    }
    if step_cap == 0 {
        return Err(EngineError::ZeroCap("step cap"));
    }
    execute_trial(
        task,
        start,
        policy,
        scheduler,
        step_cap,
        Recording::Full,
        &mut Vec::new(),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Caps {
    pub step_cap: usize,
    pub trial_cap: usize,
}

impl Default for Caps {
    fn default() -> Self {
        Caps {
            step_cap: 1_000_000,
            trial_cap: 100_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunOutcome {
    Converged,
    TrialCapReached,
    TrialTruncated,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunRecord {
    pub trials: Vec<TrialRecord>,
    /// 1-based index of the convergence trial.
    pub convergence_trial_index: Option<usize>,
    pub final_policy: Option<Policy>,
    /// Position in the start-state rotation for the next trial.
    pub start_rotation: usize,
    pub outcome: RunOutcome,
}

/// Result of [`Simulation::run_with`]; a [`RunRecord`] without the trials.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunSummary {
    pub trials_run: usize,
    pub convergence_trial_index: Option<usize>,
    pub final_policy: Option<Policy>,
    pub outcome: RunOutcome,
}

/// A run in progress: owns the scheduler and the current policy.
#[derive(Debug, Clone)]
pub struct Simulation<'t> {
    task: &'t Task,
    scheduler: Scheduler,
    policy: Policy,
    start_rotation: usize,
    trials_run: usize,
    step_cap: usize,
    recording: Recording,
    buf: Vec<Choice>,
}

impl<'t> Simulation<'t> {
    pub fn new(task: &'t Task, scheduler: Scheduler, initial_policy: Policy, step_cap: usize) -> Self {
        Simulation {
            task,
            scheduler,
            policy: initial_policy,
            start_rotation: 0,
            trials_run: 0,
            step_cap: step_cap.max(1),
            recording: Recording::Summary,
            buf: Vec::new(),
        }
    }

    pub fn with_recording(mut self, recording: Recording) -> Self {
        self.recording = recording;
        self
    }

    pub fn policy(&self) -> &Policy {
        &self.policy
    }

    pub fn trials_run(&self) -> usize {
        self.trials_run
    }

    pub fn scheduler(&self) -> &Scheduler {
        &self.scheduler
    }

    /// Runs the next trial from the next start state in round-robin order.
    pub fn next_trial(&mut self) -> Result<TrialRecord, EngineError> {
        let starts = self.task.start_states();
        let start = starts[self.start_rotation % starts.len()];
        self.start_rotation = (self.start_rotation + 1) % starts.len();
        let record = execute_trial(
            self.task,
            start,
            self.policy.clone(),
            &mut self.scheduler,
            self.step_cap,
            self.recording,
            &mut self.buf,
        )?;
        self.policy = record.end_policy.clone();
        self.trials_run += 1;
        Ok(record)
    }

    /// Runs trials until an end-of-trial policy passes the final-policy test,
    /// a trial truncates, or `trial_cap` trials have run.
    pub fn run_until_convergence(&mut self, trial_cap: usize) -> Result<RunRecord, EngineError> {
        let mut trials = Vec::new();
        let summary = self.run_with(trial_cap, |record| trials.push(record))?;
        Ok(RunRecord {
            convergence_trial_index: summary.convergence_trial_index,
            final_policy: summary.final_policy,
            trials,
            start_rotation: self.start_rotation,
            outcome: summary.outcome,
        })
    }

    /// Same stopping rule as [`Simulation::run_until_convergence`], but hands
    /// each trial to `on_trial` instead of keeping it, so very long runs stay
    /// in constant memory.
    pub fn run_with(
        &mut self,
        trial_cap: usize,
        mut on_trial: impl FnMut(TrialRecord),
    ) -> Result<RunSummary, EngineError> {
        if trial_cap == 0 {
            return Err(EngineError::ZeroCap("trial cap"));
        }
        let mut outcome = RunOutcome::TrialCapReached;
        let mut count = 0;
        // Policy last found not final; skip re-testing an unchanged policy.
        let mut rejected: Option<Policy> = None;
        while count < trial_cap {
            let record = self.next_trial()?;
            count += 1;
            let truncated = record.truncated;
            on_trial(record);
            if truncated {
                outcome = RunOutcome::TrialTruncated;
                break;
            }
            if rejected.as_ref() == Some(&self.policy) {
                continue;
            }
            if is_final_policy(self.task, &self.policy) {
                outcome = RunOutcome::Converged;
                break;
            }
            rejected = Some(self.policy.clone());
        }
        let converged = outcome == RunOutcome::Converged;
        Ok(RunSummary {
            trials_run: count,
            convergence_trial_index: converged.then_some(count),
            final_policy: converged.then(|| self.policy.clone()),
            outcome,
        })
    }
}

/// Runs trials back to back until the final policy is detected or a cap is hit.
pub fn run_until_convergence(
    task: &Task,
    scheduler: Scheduler,
    initial_policy: Policy,
    caps: Caps,
) -> Result<RunRecord, EngineError> {
    if caps.step_cap == 0 {
        return Err(EngineError::ZeroCap("step cap"));
    }
    Simulation::new(task, scheduler, initial_policy, caps.step_cap).run_until_convergence(caps.trial_cap)
}
