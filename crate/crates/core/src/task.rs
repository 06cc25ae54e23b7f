//! Task data model, the line-based task file format, and structural validation.
//!
//! A task is a finite nondeterministic transition system: states, start
//! states, actions, rewarding state-action pairs, and a total transition
//! function mapping every state-action pair to a nonempty set of successors.
//! States and actions are interned to dense indices in declaration order; that
//! order is the canonical total order used by every iteration in the crate.

use std::collections::HashMap;
use std::fmt;

use fixedbitset::FixedBitSet;
use thiserror::Error;

/// Index of a state in its task's declaration order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StateId(pub usize);

/// Index of an action in its task's declaration order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ActionId(pub usize);

/// A subset of a task's states, iterated in canonical order.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct StateSet {
    bits: FixedBitSet,
}

impl StateSet {
    /// The empty set over a universe of `universe` states.
    pub fn empty(universe: usize) -> Self {
        StateSet {
            bits: FixedBitSet::with_capacity(universe),
        }
    }

    pub fn full(universe: usize) -> Self {
        let mut bits = FixedBitSet::with_capacity(universe);
        bits.insert_range(..);
        StateSet { bits }
    }

    pub fn from_states<I: IntoIterator<Item = StateId>>(universe: usize, states: I) -> Self {
        let mut set = StateSet::empty(universe);
        for q in states {
            set.insert(q);
        }
        set
    }

    pub fn universe(&self) -> usize {
        self.bits.len()
    }

    pub fn insert(&mut self, q: StateId) {
        self.bits.insert(q.0);
    }

    pub fn contains(&self, q: StateId) -> bool {
        self.bits.contains(q.0)
    }

    pub fn len(&self) -> usize {
        self.bits.count_ones(..)
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_clear()
    }

    pub fn clear(&mut self) {
        self.bits.clear();
    }

    pub fn is_subset(&self, other: &StateSet) -> bool {
        self.bits.is_subset(&other.bits)
    }

    pub fn union_with(&mut self, other: &StateSet) {
        self.bits.union_with(&other.bits);
    }

    pub fn intersects(&self, other: &StateSet) -> bool {
        !self.bits.is_disjoint(&other.bits)
    }

    pub fn difference(&self, other: &StateSet) -> StateSet {
        let mut bits = self.bits.clone();
        bits.difference_with(&other.bits);
        StateSet { bits }
    }

    pub fn intersection(&self, other: &StateSet) -> StateSet {
        let mut bits = self.bits.clone();
        bits.intersect_with(&other.bits);
        StateSet { bits }
    }

    pub fn complement(&self) -> StateSet {
        let mut bits = self.bits.clone();
        bits.toggle_range(..);
        StateSet { bits }
    }

    pub fn iter(&self) -> impl Iterator<Item = StateId> + '_ {
        self.bits.ones().map(StateId)
    }

    pub fn to_vec(&self) -> Vec<StateId> {
        self.iter().collect()
    }
}

impl fmt::Debug for StateSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter().map(|q| q.0)).finish()
    }
}

/// A total assignment of one action to every state.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Policy(Vec<ActionId>);

impl Policy {
    pub fn new(assignment: Vec<ActionId>) -> Self {
        Policy(assignment)
    }

    /// Every state mapped to the same action.
    pub fn constant(task: &Task, action: ActionId) -> Self {
        Policy(vec![action; task.num_states()])
    }

    pub fn action(&self, q: StateId) -> ActionId {
        self.0[q.0]
    }

    pub fn set(&mut self, q: StateId, a: ActionId) {
        self.0[q.0] = a;
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[ActionId] {
        &self.0
    }

    /// States on which the two policies assign different actions.
    pub fn differing_states<'a>(&'a self, other: &'a Policy) -> impl Iterator<Item = StateId> + 'a {
        self.0
            .iter()
            .zip(other.0.iter())
            .enumerate()
            .filter(|(_, (a, b))| a != b)
            .map(|(i, _)| StateId(i))
    }

    /// Checks totality against `task`.
    pub fn check(&self, task: &Task) -> Result<(), TaskError> {
        if self.0.len() != task.num_states() {
            return Err(TaskError::Policy(format!(
                "policy assigns {} states, task has {}",
                self.0.len(),
                task.num_states()
            )));
        }
        if let Some((i, a)) = self.0.iter().enumerate().find(|(_, a)| a.0 >= task.num_actions()) {
            return Err(TaskError::Policy(format!(
                "state {} maps to unknown action index {}",
                task.state_name(StateId(i)),
                a.0
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TaskError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: undeclared state `{name}`")]
    UndeclaredState { line: usize, name: String },
    #[error("line {line}: undeclared action `{name}`")]
    UndeclaredAction { line: usize, name: String },
    #[error("line {line}: duplicate delta for ({state},{action})")]
    DuplicateDelta { line: usize, state: String, action: String },
    #[error("missing delta for ({state},{action})")]
    MissingDelta { state: String, action: String },
    #[error("invalid task: {0}")]
    Invalid(ValidationReport),
    #[error("invalid policy: {0}")]
    Policy(String),
}

/// Violations of the task invariants; empty means the task is well formed.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, msg: impl Into<String>) {
        self.violations.push(msg.into());
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.violations.join("; "))
    }
}

/// A navigation task.
///
/// Successor sets are stored sorted in canonical state order, so option
/// enumeration (action order, then successor order) is deterministic.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Task {
    states: Vec<String>,
    start_states: Vec<StateId>,
    actions: Vec<String>,
    rewards: Vec<(StateId, ActionId)>,
    delta: Vec<Vec<StateId>>,
    reward_table: Vec<bool>,
}

impl Task {
    /// Builds a task and rejects it if any invariant fails.
    pub fn new(
        states: Vec<String>,
        start_states: Vec<StateId>,
        actions: Vec<String>,
        rewards: Vec<(StateId, ActionId)>,
        delta: Vec<Vec<StateId>>,
    ) -> Result<Task, TaskError> {
        let task = Task::new_unchecked(states, start_states, actions, rewards, delta);
        let report = task.validate();
        if report.is_empty() {
            Ok(task)
        } else {
            Err(TaskError::Invalid(report))
        }
    }

    /// Builds a task without checking invariants. `delta` is indexed by
    /// `state * num_actions + action`. Use [`Task::validate`] afterwards.
    pub fn new_unchecked(
        states: Vec<String>,
        mut start_states: Vec<StateId>,
        actions: Vec<String>,
        mut rewards: Vec<(StateId, ActionId)>,
        mut delta: Vec<Vec<StateId>>,
    ) -> Task {
        start_states.sort();
        rewards.sort();
        for image in &mut delta {
            image.sort();
        }
        let n_actions = actions.len();
        let mut reward_table = vec![false; states.len() * n_actions];
        for &(q, a) in &rewards {
            if q.0 < states.len() && a.0 < n_actions {
                reward_table[q.0 * n_actions + a.0] = true;
            }
        }
        Task {
            states,
            start_states,
            actions,
            rewards,
            delta,
            reward_table,
        }
    }

    /// Lists every violated invariant.
    pub fn validate(&self) -> ValidationReport {
        let mut report = ValidationReport::default();
        let nq = self.states.len();
        let na = self.actions.len();
        if nq == 0 {
            report.push("states must be nonempty");
        }
        if na == 0 {
            report.push("actions must be nonempty");
        }
        if self.start_states.is_empty() {
            report.push("start states must be nonempty");
        }
        if self.rewards.is_empty() {
            report.push("rewards must be nonempty");
        }
        check_unique_names(&self.states, "state", &mut report);
        check_unique_names(&self.actions, "action", &mut report);
        for (i, q) in self.start_states.iter().enumerate() {
            if q.0 >= nq {
                report.push(format!("start state index {} out of range", q.0));
            } else if i > 0 && self.start_states[i - 1] == *q {
                report.push(format!("duplicate start state {}", self.states[q.0]));
            }
        }
        for (i, &(q, a)) in self.rewards.iter().enumerate() {
            if q.0 >= nq || a.0 >= na {
                report.push(format!("reward ({},{}) out of range", q.0, a.0));
            } else if i > 0 && self.rewards[i - 1] == (q, a) {
                report.push(format!("duplicate reward ({},{})", self.states[q.0], self.actions[a.0]));
            }
        }
        if self.delta.len() != nq * na {
            report.push(format!(
                "delta must be defined on all {} state-action pairs, found {}",
                nq * na,
                self.delta.len()
            ));
            return report;
        }
        for q in 0..nq {
            for a in 0..na {
                let image = &self.delta[q * na + a];
                let pair = format!("({},{})", self.states[q], self.actions[a]);
                if image.is_empty() {
                    report.push(format!("delta image must be nonempty for {pair}"));
                }
                if image.iter().any(|s| s.0 >= nq) {
                    report.push(format!("delta image for {pair} names an unknown state"));
                }
                if image.windows(2).any(|w| w[0] == w[1]) {
                    report.push(format!("delta image for {pair} repeats a state"));
                }
            }
        }
        report
    }

    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn num_actions(&self) -> usize {
        self.actions.len()
    }

    pub fn states(&self) -> impl Iterator<Item = StateId> {
        (0..self.states.len()).map(StateId)
    }

    pub fn actions(&self) -> impl Iterator<Item = ActionId> {
        (0..self.actions.len()).map(ActionId)
    }

    pub fn start_states(&self) -> &[StateId] {
        &self.start_states
    }

    pub fn start_set(&self) -> StateSet {
        StateSet::from_states(self.num_states(), self.start_states.iter().copied())
    }

    pub fn rewards(&self) -> &[(StateId, ActionId)] {
        &self.rewards
    }

    pub fn is_reward(&self, q: StateId, a: ActionId) -> bool {
        self.reward_table[q.0 * self.actions.len() + a.0]
    }

    /// Successors of `(q, a)` in canonical order.
    pub fn delta(&self, q: StateId, a: ActionId) -> &[StateId] {
        &self.delta[q.0 * self.actions.len() + a.0]
    }

    pub fn state_name(&self, q: StateId) -> &str {
        &self.states[q.0]
    }

    pub fn action_name(&self, a: ActionId) -> &str {
        &self.actions[a.0]
    }

    pub fn state_id(&self, name: &str) -> Option<StateId> {
        self.states.iter().position(|s| s == name).map(StateId)
    }

    pub fn action_id(&self, name: &str) -> Option<ActionId> {
        self.actions.iter().position(|s| s == name).map(ActionId)
    }

    pub fn empty_set(&self) -> StateSet {
        StateSet::empty(self.num_states())
    }

    pub fn all_states(&self) -> StateSet {
        StateSet::full(self.num_states())
    }

    /// States with at least one immediately rewarding action.
    pub fn goal_states(&self) -> StateSet {
        StateSet::from_states(self.num_states(), self.rewards.iter().map(|&(q, _)| q))
    }

    /// Set built from state names; `None` if a name is unknown.
    pub fn set_of(&self, names: &[&str]) -> Option<StateSet> {
        let mut set = self.empty_set();
        for name in names {
            set.insert(self.state_id(name)?);
        }
        Some(set)
    }

    /// Renders a set as `{a,b,c}` using state names.
    /// `{a,b}`; names that contain a comma (grid cells) are separated by spaces.
    pub fn format_set(&self, set: &StateSet) -> String {
        let names: Vec<&str> = set.iter().map(|q| self.state_name(q)).collect();
        let sep = if names.iter().any(|n| n.contains(',')) {
            " "
        } else {
            ","
        };
        format!("{{{}}}", names.join(sep))
    }

    /// Serializes in the task file format. Parsing the result yields an equal task.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("states: {}\n", self.states.join(" ")));
        let starts: Vec<&str> = self.start_states.iter().map(|&q| self.state_name(q)).collect();
        out.push_str(&format!("start: {}\n", starts.join(" ")));
        out.push_str(&format!("actions: {}\n", self.actions.join(" ")));
        for &(q, a) in &self.rewards {
            out.push_str(&format!("reward: {} {}\n", self.state_name(q), self.action_name(a)));
        }
        for q in self.states() {
            for a in self.actions() {
                let succ: Vec<&str> = self.delta(q, a).iter().map(|&s| self.state_name(s)).collect();
                out.push_str(&format!(
                    "delta: {} {} -> {}\n",
                    self.state_name(q),
                    self.action_name(a),
                    succ.join(" ")
                ));
            }
        }
        out
    }

    /// Renders a policy in the policy file format (`state action` per line).
    pub fn policy_to_text(&self, policy: &Policy) -> String {
        self.states()
            .map(|q| format!("{} {}\n", self.state_name(q), self.action_name(policy.action(q))))
            .collect()
    }

    /// Parses a policy file: one `state action` pair per line, total over states.
    pub fn parse_policy(&self, text: &str) -> Result<Policy, TaskError> {
        let mut assignment: Vec<Option<ActionId>> = vec![None; self.num_states()];
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = strip_comment(raw);
            if content.is_empty() {
                continue;
            }
            let toks: Vec<&str> = content.split_whitespace().collect();
            if toks.len() != 2 {
                return Err(TaskError::Syntax {
                    line,
                    message: "expected `state action`".into(),
                });
            }
            let q = self.state_id(toks[0]).ok_or_else(|| TaskError::UndeclaredState {
                line,
                name: toks[0].into(),
            })?;
            let a = self.action_id(toks[1]).ok_or_else(|| TaskError::UndeclaredAction {
                line,
                name: toks[1].into(),
            })?;
            if assignment[q.0].replace(a).is_some() {
                return Err(TaskError::Syntax {
                    line,
                    message: format!("state `{}` assigned twice", toks[0]),
                });
            }
        }
        let mut actions = Vec::with_capacity(assignment.len());
        for (i, a) in assignment.into_iter().enumerate() {
            match a {
                Some(a) => actions.push(a),
                None => return Err(TaskError::Policy(format!("no action for state `{}`", self.states[i]))),
            }
        }
        Ok(Policy(actions))
    }
}

impl std::str::FromStr for Task {
    type Err = TaskError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_task(s)
    }
}

fn check_unique_names(names: &[String], kind: &str, report: &mut ValidationReport) {
    let mut seen = HashMap::new();
    for name in names {
        if seen.insert(name.as_str(), ()).is_some() {
            report.push(format!("duplicate {kind} `{name}`"));
        }
    }
}

fn strip_comment(line: &str) -> &str {
    match line.find('#') {
        Some(i) => line[..i].trim(),
        None => line.trim(),
    }
}

/// Parses the task file format:
///
/// ```text
/// states: <tok> ...
/// start: <tok> ...
/// actions: <tok> ...
/// reward: <state> <action>
/// delta: <state> <action> -> <state> ...
/// ```
///
/// `#` starts a comment and blank lines are ignored. Declaration lines may
/// appear anywhere; references are resolved after the whole file is read.
pub fn parse_task(text: &str) -> Result<Task, TaskError> {
    let mut states: Option<(usize, Vec<String>)> = None;
    let mut starts: Option<(usize, Vec<String>)> = None;
    let mut actions: Option<(usize, Vec<String>)> = None;
    let mut rewards: Vec<(usize, String, String)> = Vec::new();
    let mut deltas: Vec<(usize, String, String, Vec<String>)> = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = strip_comment(raw);
        if content.is_empty() {
            continue;
        }
        let (key, rest) = content.split_once(':').ok_or_else(|| TaskError::Syntax {
            line,
            message: format!("expected `<keyword>: ...`, found `{content}`"),
        })?;
        let toks: Vec<String> = rest.split_whitespace().map(str::to_owned).collect();
        let declare = |slot: &mut Option<(usize, Vec<String>)>, what: &str| {
            if slot.is_some() {
                return Err(TaskError::Syntax {
                    line,
                    message: format!("`{what}` declared twice"),
                });
            }
            if toks.is_empty() {
                return Err(TaskError::Syntax {
                    line,
                    message: format!("`{what}` needs at least one identifier"),
                });
            }
            *slot = Some((line, toks.clone()));
            Ok(())
        };
        match key.trim() {
            "states" => declare(&mut states, "states")?,
            "start" => declare(&mut starts, "start")?,
            "actions" => declare(&mut actions, "actions")?,
            "reward" => {
                if toks.len() != 2 {
                    return Err(TaskError::Syntax {
                        line,
                        message: "expected `reward: <state> <action>`".into(),
                    });
                }
                rewards.push((line, toks[0].clone(), toks[1].clone()));
            }
            "delta" => {
                let arrow = toks.iter().position(|t| t == "->");
                match arrow {
                    Some(2) if toks.len() > 3 => {
                        deltas.push((line, toks[0].clone(), toks[1].clone(), toks[3..].to_vec()));
                    }
                    _ => {
                        return Err(TaskError::Syntax {
                            line,
                            message: "expected `delta: <state> <action> -> <state> ...`".into(),
                        })
                    }
                }
            }
            other => {
                return Err(TaskError::Syntax {
                    line,
                    message: format!("unknown keyword `{other}`"),
                })
            }
        }
    }

    let missing = |what: &str| TaskError::Syntax {
        line: text.lines().count().max(1),
        message: format!("missing `{what}` declaration"),
    };
    let (states_line, state_names) = states.ok_or_else(|| missing("states"))?;
    let (start_line, start_names) = starts.ok_or_else(|| missing("start"))?;
    let (actions_line, action_names) = actions.ok_or_else(|| missing("actions"))?;
    if rewards.is_empty() {
        return Err(missing("reward"));
    }

    let state_index = index_names(&state_names, states_line, "state")?;
    let action_index = index_names(&action_names, actions_line, "action")?;
    let lookup_state = |line: usize, name: &str| {
        state_index
            .get(name)
            .copied()
            .map(StateId)
            .ok_or_else(|| TaskError::UndeclaredState {
                line,
                name: name.to_owned(),
            })
    };
    let lookup_action = |line: usize, name: &str| {
        action_index
            .get(name)
            .copied()
            .map(ActionId)
            .ok_or_else(|| TaskError::UndeclaredAction {
                line,
                name: name.to_owned(),
            })
    };

    let mut start_ids = Vec::new();
    for name in &start_names {
        let q = lookup_state(start_line, name)?;
        if start_ids.contains(&q) {
            return Err(TaskError::Syntax {
                line: start_line,
                message: format!("start state `{name}` listed twice"),
            });
        }
        start_ids.push(q);
    }

    let mut reward_ids = Vec::new();
    for (line, s, a) in &rewards {
        let pair = (lookup_state(*line, s)?, lookup_action(*line, a)?);
        if reward_ids.contains(&pair) {
            return Err(TaskError::Syntax {
                line: *line,
                message: format!("reward ({s},{a}) listed twice"),
            });
        }
        reward_ids.push(pair);
    }

    let na = action_names.len();
    let mut delta: Vec<Option<Vec<StateId>>> = vec![None; state_names.len() * na];
    for (line, s, a, succ) in &deltas {
        let q = lookup_state(*line, s)?;
        let act = lookup_action(*line, a)?;
        let mut image = Vec::with_capacity(succ.len());
        for name in succ {
            let t = lookup_state(*line, name)?;
            if image.contains(&t) {
                return Err(TaskError::Syntax {
                    line: *line,
                    message: format!("successor `{name}` repeated"),
                });
            }
            image.push(t);
        }
        let slot = &mut delta[q.0 * na + act.0];
        if slot.is_some() {
            return Err(TaskError::DuplicateDelta {
                line: *line,
                state: s.clone(),
                action: a.clone(),
            });
        }
        *slot = Some(image);
    }
    let mut full_delta = Vec::with_capacity(delta.len());
    for (i, image) in delta.into_iter().enumerate() {
        match image {
            Some(image) => full_delta.push(image),
            None => {
                return Err(TaskError::MissingDelta {
                    state: state_names[i / na].clone(),
                    action: action_names[i % na].clone(),
                })
            }
        }
    }

    Task::new(state_names, start_ids, action_names, reward_ids, full_delta)
}

fn index_names(names: &[String], line: usize, kind: &str) -> Result<HashMap<String, usize>, TaskError> {
    let mut index = HashMap::with_capacity(names.len());
    for (i, name) in names.iter().enumerate() {
        if index.insert(name.clone(), i).is_some() {
            return Err(TaskError::Syntax {
                line,
                message: format!("{kind} `{name}` declared twice"),
            });
        }
    }
    Ok(index)
}
