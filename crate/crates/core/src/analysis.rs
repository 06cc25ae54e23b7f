//! Static analyses of tasks: reducibility layers, unstable and border sets,
//! simple paths, and the necessary conditions for learnability.

use std::collections::VecDeque;

use crate::task::{StateId, StateSet, Task};

/// A monotone sequence of state sets, cut at its first fixpoint.
///
/// `layers[0]` is the seed; the last layer is the fixpoint, so the sequence
/// index of the fixpoint (1-based) equals `layers.len()`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerSequence {
    layers: Vec<StateSet>,
}

impl LayerSequence {
    /// Iterates `next = prev ∪ grow(prev)` from `seed` until nothing changes.
    pub(crate) fn iterate(seed: StateSet, mut grow: impl FnMut(&StateSet) -> StateSet) -> Self {
        let mut layers = vec![seed];
        loop {
            let prev = layers.last().expect("nonempty");
            let mut next = grow(prev);
            next.union_with(prev);
            if &next == prev {
                return LayerSequence { layers };
            }
            layers.push(next);
        }
    }

    pub fn layers(&self) -> &[StateSet] {
        &self.layers
    }

    /// 1-based index `n` of the first layer with `layer n == layer n+1`.
    pub fn fixpoint_index(&self) -> usize {
        self.layers.len()
    }

    pub fn fixpoint(&self) -> &StateSet {
        self.layers.last().expect("nonempty")
    }

    /// 1-based index of the first layer containing `q`.
    pub fn layer_of(&self, q: StateId) -> Option<usize> {
        self.layers.iter().position(|l| l.contains(q)).map(|i| i + 1)
    }
}

/// Reducibility layers grown from `seed`: each step adds every state that has
/// some action whose whole successor set lies in the previous layer.
pub fn reducibility_layers(task: &Task, seed: &StateSet) -> LayerSequence {
    LayerSequence::iterate(seed.clone(), |prev| {
        let mut next = task.empty_set();
        for q in task.states() {
            if task
                .actions()
                .any(|a| task.delta(q, a).iter().all(|&s| prev.contains(s)))
            {
                next.insert(q);
            }
        }
        next
    })
}

/// States reducible to the goal states.
pub fn reduce(task: &Task) -> StateSet {
    reducibility_layers(task, &task.goal_states()).fixpoint().clone()
}

pub fn is_reducible(task: &Task) -> bool {
    reduce(task).len() == task.num_states()
}

/// Returns `(unstable, border)`: the states outside the reducible set, and the
/// reducible states with some action that may enter the unstable set.
pub fn unstable_and_border(task: &Task) -> (StateSet, StateSet) {
    let reducible = reduce(task);
    let unstable = reducible.complement();
    let mut border = task.empty_set();
    for q in reducible.iter() {
        if task
            .actions()
            .any(|a| task.delta(q, a).iter().any(|&s| unstable.contains(s)))
        {
            border.insert(q);
        }
    }
    (unstable, border)
}

/// States reachable from `sources` through non-reward steps (sources included).
fn non_reward_closure(task: &Task, sources: impl IntoIterator<Item = StateId>) -> StateSet {
    let mut seen = task.empty_set();
    let mut queue = VecDeque::new();
    for q in sources {
        if !seen.contains(q) {
            seen.insert(q);
            queue.push_back(q);
        }
    }
    while let Some(q) = queue.pop_front() {
        for a in task.actions() {
            if task.is_reward(q, a) {
                continue;
            }
            for &s in task.delta(q, a) {
                if !seen.contains(s) {
                    seen.insert(s);
                    queue.push_back(s);
                }
            }
        }
    }
    seen
}

/// Whether a simple path without reward steps leads from `from` into `targets`.
///
/// A shortest walk never repeats a state, so plain reachability in the
/// non-reward step graph decides simple-path existence.
pub fn path_exists(task: &Task, from: StateId, targets: &StateSet) -> bool {
    non_reward_closure(task, [from]).intersects(targets)
}

/// States reachable by a simple non-reward path from some start state.
pub fn reachable_states(task: &Task) -> StateSet {
    non_reward_closure(task, task.start_states().iter().copied())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NecessaryConditionsReport {
    pub reachable_states: StateSet,
    pub states_without_path_to_goals: StateSet,
    pub start_states_reducible: bool,
    pub property_a_holds: bool,
}

impl NecessaryConditionsReport {
    /// Both conditions hold. They are necessary for learnability, not sufficient.
    pub fn all_hold(&self) -> bool {
        self.property_a_holds && self.start_states_reducible
    }
}

/// Checks that reachable states have a path to the goals and that the start
/// states are reducible to the goals.
pub fn check_necessary_conditions(task: &Task) -> NecessaryConditionsReport {
    let goals = task.goal_states();
    let reachable = reachable_states(task);
    let mut without_path = task.empty_set();
    for q in task.states() {
        if !path_exists(task, q, &goals) {
            without_path.insert(q);
        }
    }
    let reducible = reduce(task);
    NecessaryConditionsReport {
        property_a_holds: !without_path.intersects(&reachable),
        start_states_reducible: task.start_set().is_subset(&reducible),
        reachable_states: reachable,
        states_without_path_to_goals: without_path,
    }
}

/// Per-state summary used by the `analyze` report.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateClassification {
    pub state: StateId,
    pub in_reduce: bool,
    pub in_unstable: bool,
    pub in_border: bool,
    pub layer_index: Option<usize>,
}

pub fn classify_states(task: &Task) -> Vec<StateClassification> {
    let layers = reducibility_layers(task, &task.goal_states());
    let (unstable, border) = unstable_and_border(task);
    task.states()
        .map(|q| StateClassification {
            state: q,
            in_reduce: layers.fixpoint().contains(q),
            in_unstable: unstable.contains(q),
            in_border: border.contains(q),
            layer_index: layers.layer_of(q),
        })
        .collect()
}
