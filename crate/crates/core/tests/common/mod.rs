#![allow(dead_code)]

use navlearn::{ActionId, Policy, StateId, Task};
use proptest::prelude::*;

/// Raw pieces of a small random task; every delta image is a nonempty bitmask.
#[derive(Debug, Clone)]
pub struct RawTask {
    pub n: usize,
    pub m: usize,
    pub starts: u32,
    pub rewards: Vec<bool>,
    pub delta: Vec<u32>,
}

impl RawTask {
    pub fn build(&self) -> Task {
        let states = (0..self.n).map(|i| format!("s{i}")).collect();
        let actions = (0..self.m).map(|i| format!("x{i}")).collect();
        let starts = bits(self.starts, self.n).into_iter().map(StateId).collect();
        let mut rewards: Vec<_> = (0..self.n * self.m)
            .filter(|&i| self.rewards[i])
            .map(|i| (StateId(i / self.m), ActionId(i % self.m)))
            .collect();
        if rewards.is_empty() {
            rewards.push((StateId(self.n - 1), ActionId(0)));
        }
        let delta = self
            .delta
            .iter()
            .map(|&mask| bits(mask, self.n).into_iter().map(StateId).collect())
            .collect();
        Task::new(states, starts, actions, rewards, delta).expect("generated task is valid")
    }
}

fn bits(mask: u32, n: usize) -> Vec<usize> {
    (0..n).filter(|i| mask >> i & 1 == 1).collect()
}

/// Tasks with 1..=max_states states and 1..=3 actions. Rewards are sparse so
/// that most tasks have interesting non-reward structure.
pub fn raw_task(max_states: usize) -> impl Strategy<Value = RawTask> {
    (1..=max_states, 1..=3usize).prop_flat_map(|(n, m)| {
        let full = (1u32 << n) - 1;
        (
            1..=full,
            prop::collection::vec(prop::bool::weighted(0.15), n * m),
            prop::collection::vec(1..=full, n * m),
        )
            .prop_map(move |(starts, rewards, delta)| RawTask {
                n,
                m,
                starts,
                rewards,
                delta,
            })
    })
}

pub fn task_strategy(max_states: usize) -> impl Strategy<Value = Task> {
    raw_task(max_states).prop_map(|r| r.build())
}

/// A task together with an arbitrary policy for it.
pub fn task_and_policy(max_states: usize) -> impl Strategy<Value = (Task, Policy)> {
    task_strategy(max_states).prop_flat_map(|t| {
        let n = t.num_states();
        let m = t.num_actions();
        (Just(t), prop::collection::vec(0..m, n))
            .prop_map(|(t, acts)| (t, Policy::new(acts.into_iter().map(ActionId).collect())))
    })
}

// ---- brute-force oracles, written against plain vectors ----

pub fn members(task: &Task, set: &navlearn::StateSet) -> Vec<bool> {
    task.states().map(|q| set.contains(q)).collect()
}

pub fn is_goal(task: &Task, q: StateId) -> bool {
    task.actions().any(|a| task.is_reward(q, a))
}

/// Least set closed under "some action leads only into the set", starting from goals.
pub fn naive_reduce(task: &Task) -> Vec<bool> {
    let mut inside: Vec<bool> = task.states().map(|q| is_goal(task, q)).collect();
    loop {
        let mut changed = false;
        for q in task.states() {
            if !inside[q.0] && task.actions().any(|a| task.delta(q, a).iter().all(|s| inside[s.0])) {
                inside[q.0] = true;
                changed = true;
            }
        }
        if !changed {
            return inside;
        }
    }
}

/// Depth-first enumeration of every simple path that uses only non-reward steps.
pub fn simple_path_oracle(task: &Task, from: StateId, targets: &[bool]) -> bool {
    fn go(task: &Task, q: StateId, targets: &[bool], on_path: &mut Vec<bool>) -> bool {
        if targets[q.0] {
            return true;
        }
        on_path[q.0] = true;
        for a in task.actions() {
            if task.is_reward(q, a) {
                continue;
            }
            for &s in task.delta(q, a) {
                if !on_path[s.0] && go(task, s, targets, on_path) {
                    return true;
                }
            }
        }
        on_path[q.0] = false;
        false
    }
    go(task, from, targets, &mut vec![false; task.num_states()])
}

pub fn naive_ground(task: &Task, policy: &Policy) -> Vec<bool> {
    task.states().map(|q| task.is_reward(q, policy.action(q))).collect()
}

pub fn naive_forward(task: &Task, policy: &Policy) -> Vec<bool> {
    let ground = naive_ground(task, policy);
    let mut seen = vec![false; task.num_states()];
    let mut stack: Vec<StateId> = task.start_states().to_vec();
    while let Some(q) = stack.pop() {
        if seen[q.0] {
            continue;
        }
        seen[q.0] = true;
        if !ground[q.0] {
            stack.extend(task.delta(q, policy.action(q)).iter().copied());
        }
    }
    seen
}

pub fn naive_backward(task: &Task, policy: &Policy) -> Vec<bool> {
    let mut inside = naive_ground(task, policy);
    loop {
        let grown: Vec<bool> = task
            .states()
            .map(|q| inside[q.0] || task.delta(q, policy.action(q)).iter().all(|s| inside[s.0]))
            .collect();
        if grown == inside {
            return inside;
        }
        inside = grown;
    }
}

pub fn naive_is_final(task: &Task, policy: &Policy) -> bool {
    let f = naive_forward(task, policy);
    let b = naive_backward(task, policy);
    f.iter().zip(&b).all(|(&f, &b)| !f || b)
}

/// Every policy of the task, in lexicographic order.
pub fn all_policies(task: &Task) -> impl Iterator<Item = Policy> + '_ {
    let n = task.num_states();
    let m = task.num_actions();
    let total = m.pow(n as u32);
    (0..total).map(move |mut code| {
        let mut acts = Vec::with_capacity(n);
        for _ in 0..n {
            acts.push(ActionId(code % m));
            code /= m;
        }
        Policy::new(acts)
    })
}
