//! Ground, forward and backward sets of a policy, and the final-policy test
//! `forward ⊆ backward` used to detect the convergence trial of a run.

use crate::analysis::LayerSequence;
use crate::task::{Policy, StateSet, Task};

/// Goal states whose policy action is rewarding.
pub fn ground(task: &Task, policy: &Policy) -> StateSet {
    let mut set = task.empty_set();
    for &(q, _) in task.rewards() {
        if task.is_reward(q, policy.action(q)) {
            set.insert(q);
        }
    }
    set
}

/// States reachable from the start states by following the policy, where
/// ground states are never expanded.
pub fn forward_set(task: &Task, policy: &Policy) -> LayerSequence {
    let grounded = ground(task, policy);
    LayerSequence::iterate(task.start_set(), |prev| {
        let mut next = task.empty_set();
        for q in prev.iter().filter(|&q| !grounded.contains(q)) {
            for &s in task.delta(q, policy.action(q)) {
                next.insert(s);
            }
        }
        next
    })
}

/// Policy-restricted reducibility: starts at the ground set and adds states
/// whose policy action's successors all lie in the previous layer.
pub fn backward_set(task: &Task, policy: &Policy) -> LayerSequence {
    LayerSequence::iterate(ground(task, policy), |prev| {
        let mut next = task.empty_set();
        for q in task.states() {
            if task.delta(q, policy.action(q)).iter().all(|&s| prev.contains(s)) {
                next.insert(q);
            }
        }
        next
    })
}

/// `forward ⊆ backward`.
pub fn is_final_policy(task: &Task, policy: &Policy) -> bool {
    forward_set(task, policy)
        .fixpoint()
        .is_subset(backward_set(task, policy).fixpoint())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolicyAnalysis {
    pub ground: StateSet,
    pub forward: StateSet,
    pub backward: StateSet,
    pub forward_layers: LayerSequence,
    pub backward_layers: LayerSequence,
    pub is_final: bool,
}

impl PolicyAnalysis {
    /// Forward states not covered by backward; empty iff the policy passes.
    pub fn uncovered(&self) -> StateSet {
        self.forward.difference(&self.backward)
    }
}

pub fn analyze_policy(task: &Task, policy: &Policy) -> PolicyAnalysis {
    let forward_layers = forward_set(task, policy);
    let backward_layers = backward_set(task, policy);
    let forward = forward_layers.fixpoint().clone();
    let backward = backward_layers.fixpoint().clone();
    PolicyAnalysis {
        ground: ground(task, policy),
        is_final: forward.is_subset(&backward),
        forward,
        backward,
        forward_layers,
        backward_layers,
    }
}
