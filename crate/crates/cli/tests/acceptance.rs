//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use navlearn::engine::seeded_run_setup;
use navlearn::fixtures::{EXAMPLE1, EXAMPLE3};
use navlearn::{
    chain_task, check_necessary_conditions, corridor_task, derive_seed, is_final_policy, parse_task, quantile,
    reducibility_layers, run_trial, unstable_and_border, ActionId, Choice, Policy, Scheduler, Simulation, StateSet,
    Task,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;
/// Name, time limit, check.
type Criterion = (&'static str, Duration, Box<dyn Fn() -> Check>);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn set(task: &Task, names: &[&str]) -> StateSet {
    task.set_of(names).expect("known state names")
}

// ---- 1 ----

fn example1_layers() -> Check {
    let task = parse_task(EXAMPLE1).map_err(|e| e.to_string())?;
    let layers = reducibility_layers(&task, &task.goal_states());
    let want = [
        set(&task, &["3"]),
        set(&task, &["3", "2"]),
        set(&task, &["3", "2", "1"]),
    ];
    let got: Vec<String> = layers.layers().iter().map(|l| task.format_set(l)).collect();
    ensure(layers.layers() == want, || format!("layers {got:?}"))?;
    Ok(format!("layers {}", got.join(" ")))
}

// ---- 2 ----

fn example3_unstable_border() -> Check {
    let task = parse_task(EXAMPLE3).map_err(|e| e.to_string())?;
    let (unstable, border) = unstable_and_border(&task);
    let report = check_necessary_conditions(&task);
    ensure(unstable == set(&task, &["2"]), || {
        format!("unstable {}", task.format_set(&unstable))
    })?;
    ensure(border == set(&task, &["1"]), || {
        format!("border {}", task.format_set(&border))
    })?;
    ensure(report.property_a_holds && report.start_states_reducible, || {
        format!("{report:?}")
    })?;
    Ok(format!(
        "unstable {} border {} necessary conditions hold",
        task.format_set(&unstable),
        task.format_set(&border)
    ))
}

// ---- 3 ----

/// A configuration as (state, action of state 1, visited states); every other state maps to `a`.
type Triple<'a> = (&'a str, &'a str, &'a [&'a str]);

fn replay(task: &Task, first_action: &str, script: &[(&str, &str)], want: &[Triple]) -> Result<(), String> {
    let a = task.action_id("a").unwrap();
    let one = task.state_id("1").unwrap();
    let mut policy = Policy::constant(task, a);
    policy.set(one, task.action_id(first_action).unwrap());
    let choices = script
        .iter()
        .map(|(act, q)| Choice::new(task.action_id(act).unwrap(), task.state_id(q).unwrap()))
        .collect();
    let mut sched = Scheduler::scripted(choices).map_err(|e| e.to_string())?;
    let trial = run_trial(task, one, policy, &mut sched, 100).map_err(|e| e.to_string())?;
    let mut configs = vec![&trial.transitions[0].source];
    configs.extend(trial.transitions.iter().map(|t| &t.target));
    ensure(trial.terminated_with_reward && configs.len() == want.len(), || {
        format!("{} configurations", configs.len())
    })?;
    for (i, (cfg, &(q, pi1, visited))) in configs.iter().zip(want).enumerate() {
        let others_a = task.states().filter(|&s| s != one).all(|s| cfg.policy.action(s) == a);
        let ok = task.state_name(cfg.state) == q
            && task.action_name(cfg.policy.action(one)) == pi1
            && cfg.memory == set(task, visited)
            && others_a;
        ensure(ok, || {
            format!(
                "configuration {i}: ({}, {}, {})",
                task.state_name(cfg.state),
                task.action_name(cfg.policy.action(one)),
                task.format_set(&cfg.memory)
            )
        })?;
    }
    Ok(())
}

fn revisit_transcripts() -> Check {
    let task = parse_task(EXAMPLE1).map_err(|e| e.to_string())?;
    replay(
        &task,
        "a",
        &[("a", "1"), ("b", "2"), ("a", "3"), ("a", "3")],
        &[
            ("1", "a", &[]),
            ("1", "a", &["1"]),
            ("2", "b", &["1"]),
            ("3", "b", &["1", "2"]),
            ("3", "b", &["1", "2", "3"]),
        ],
    )
    .map_err(|e| format!("trial A: {e}"))?;
    replay(
        &task,
        "b",
        &[("b", "2"), ("a", "1"), ("a", "3"), ("a", "3")],
        &[
            ("1", "b", &[]),
            ("2", "b", &["1"]),
            ("1", "b", &["1", "2"]),
            ("3", "a", &["1", "2"]),
            ("3", "a", &["1", "2", "3"]),
        ],
    )
    .map_err(|e| format!("trial B: {e}"))?;
    Ok("trial A ends with pi(1)=b, trial B with pi(1)=a; all 10 configurations match".into())
}

// ---- 4 ----

const GENEROUS_TRIAL_CAP: usize = 20_000_000;
const STEP_CAP: usize = 1_000_000;

fn learnability_suite() -> Check {
    let mut worst = 0;
    type Make = fn(u32) -> Result<Task, navlearn::GenError>;
    for (family, make) in [("corridor", corridor_task as Make), ("chain", chain_task as Make)] {
        for size in 1..=6u32 {
            let task = make(size).map_err(|e| e.to_string())?;
            for run in 0..100u64 {
                let seed = derive_seed(0, u64::from(size), run);
                let (sched, policy) = seeded_run_setup(&task, seed);
                let mut sim = Simulation::new(&task, sched, policy, STEP_CAP);
                let summary = sim.run_with(GENEROUS_TRIAL_CAP, drop).map_err(|e| e.to_string())?;
                let index = summary
                    .convergence_trial_index
                    .ok_or_else(|| format!("{family} {size} run {run}: {:?}", summary.outcome))?;
                worst = worst.max(index);
                for k in 0..200 {
                    let trial = sim.next_trial().map_err(|e| e.to_string())?;
                    ensure(trial.branching_steps == 0 && trial.length <= task.num_states(), || {
                        format!(
                            "{family} {size} run {run}, replayed trial {k}: {} branching, length {}",
                            trial.branching_steps, trial.length
                        )
                    })?;
                }
            }
        }
    }
    Ok(format!(
        "1200/1200 runs converged (largest index {worst}); 240000 replayed trials clean"
    ))
}

// ---- 5 ----

fn naive_is_final(task: &Task, policy: &Policy) -> bool {
    let n = task.num_states();
    let act = |q: usize| policy.action(navlearn::StateId(q));
    let succ = |q: usize| {
        task.delta(navlearn::StateId(q), act(q))
            .iter()
            .map(|s| s.0)
            .collect::<Vec<_>>()
    };
    let ground: Vec<bool> = (0..n).map(|q| task.is_reward(navlearn::StateId(q), act(q))).collect();
    let mut forward = vec![false; n];
    for s in task.start_states() {
        forward[s.0] = true;
    }
    loop {
        let mut next = forward.clone();
        for q in (0..n).filter(|&q| forward[q] && !ground[q]) {
            for s in succ(q) {
                next[s] = true;
            }
        }
        if next == forward {
            break;
        }
        forward = next;
    }
    let mut backward = ground.clone();
    loop {
        let next: Vec<bool> = (0..n)
            .map(|q| backward[q] || succ(q).iter().all(|&s| backward[s]))
            .collect();
        if next == backward {
            break;
        }
        backward = next;
    }
    (0..n).all(|q| !forward[q] || backward[q])
}

fn every_policy(task: &Task) -> Vec<Policy> {
    let n = task.num_states();
    let m = task.num_actions();
    (0..m.pow(n as u32))
        .map(|mut code| {
            Policy::new(
                (0..n)
                    .map(|_| {
                        let a = ActionId(code % m);
                        code /= m;
                        a
                    })
                    .collect(),
            )
        })
        .collect()
}

fn final_policy_oracle() -> Check {
    let mut tasks = vec![(
        "example1.task".to_string(),
        parse_task(EXAMPLE1).map_err(|e| e.to_string())?,
    )];
    for n in 1..=4 {
        tasks.push((format!("chain {n}"), chain_task(n).map_err(|e| e.to_string())?));
    }
    let mut compared = 0;
    for (name, task) in &tasks {
        for policy in every_policy(task) {
            let fast = is_final_policy(task, &policy);
            ensure(fast == naive_is_final(task, &policy), || format!("{name}: {policy:?}"))?;
            compared += 1;
        }
    }
    for (name, task) in &tasks[1..] {
        let n = task.num_states() - 1;
        for policy in every_policy(task) {
            if policy.action(navlearn::StateId(0)) != ActionId(0) {
                continue;
            }
            let diagonal = (0..n).all(|i| policy.action(navlearn::StateId(i)) == ActionId(i));
            ensure(is_final_policy(task, &policy) == diagonal, || {
                format!("{name}: {policy:?}")
            })?;
        }
    }
    Ok(format!(
        "{compared} policies agree with the naive fixpoints; chain finals are pi(i)=a_i"
    ))
}

// ---- 6 ----

fn order_statistic(values: &[u32], k: u64) -> u32 {
    // smallest x in the list with #{v <= x} >= (k/1000) n
    let n = values.len() as u64;
    *values
        .iter()
        .filter(|&&x| values.iter().filter(|&&v| v <= x).count() as u64 * 1000 >= k * n)
        .min()
        .expect("maximum qualifies")
}

fn quantile_oracle() -> Check {
    let worked = [
        (vec![5u32, 1, 3, 2, 4], 0.9, 5),
        ((1..=10).collect::<Vec<u32>>(), 0.9, 9),
        (vec![3, 1, 2, 4], 0.5, 2),
    ];
    for (values, p, want) in &worked {
        let got = quantile(values, *p).map_err(|e| e.to_string())?;
        ensure(got == *want, || format!("quantile({values:?}, {p}) = {got}"))?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for i in 0..1000 {
        let len = rng.gen_range(1..=60);
        let values: Vec<u32> = (0..len).map(|_| rng.gen_range(0..100)).collect();
        let k = rng.gen_range(1..1000u64);
        let got = quantile(&values, k as f64 / 1000.0).map_err(|e| e.to_string())?;
        let want = order_statistic(&values, k);
        ensure(got == want, || format!("list {i}: p={k}/1000 got {got} want {want}"))?;
    }
    Ok("3 worked examples and 1000 random lists match".into())
}

// ---- 7, 8, 9: through the command-line tool ----

fn navlearn(args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_navlearn"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    ensure(out.status.success(), || {
        format!(
            "navlearn {} exited {:?}: {}",
            args.join(" "),
            out.status.code(),
            String::from_utf8_lossy(&out.stderr)
        )
    })
}

fn read_column(path: &Path, column: usize) -> Result<Vec<(usize, f64)>, String> {
    let text = std::fs::read_to_string(path).map_err(|e| e.to_string())?;
    text.lines()
        .skip(1)
        .map(|line| {
            let fields: Vec<&str> = line.split(',').collect();
            let key = fields[0].parse().map_err(|_| format!("bad row {line}"))?;
            let value = fields[column].parse().map_err(|_| format!("bad row {line}"))?;
            Ok((key, value))
        })
        .collect()
}

/// Ranks starting at 1; ties share the average rank.
fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut r = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    let (rx, ry) = (ranks(xs), ranks(ys));
    let n = rx.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

const TRIAL_CAP_ARG: &str = "20000000";

fn convergence_args<'a>(family: &'a str, out: &'a str, jobs: &'a str) -> Vec<&'a str> {
    vec![
        "experiment",
        "convergence",
        "--family",
        family,
        "--sizes",
        "2..8",
        "--runs",
        "100",
        "--p",
        "0.9",
        "--seed",
        "0",
        "--trial-cap",
        TRIAL_CAP_ARG,
        "--jobs",
        jobs,
        "--out",
        out,
    ]
}

fn convergence_shape(dir: &Path) -> Check {
    let corridor = dir.join("corridor.csv");
    let chain = dir.join("chain.csv");
    navlearn(&convergence_args("corridor", corridor.to_str().unwrap(), "1"))?;
    navlearn(&convergence_args("chain", chain.to_str().unwrap(), "1"))?;
    let rows = read_column(&corridor, 1)?;
    let sizes: Vec<f64> = rows.iter().map(|r| r.0 as f64).collect();
    let qs: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let rho = spearman(&sizes, &qs);
    let chain_rows = read_column(&chain, 1)?;
    let q = |size| chain_rows.iter().find(|r| r.0 == size).map(|r| r.1).unwrap_or(f64::NAN);
    let (q4, q8) = (q(4), q(8));
    ensure(rho >= 0.8, || {
        format!("corridor Spearman {rho:.3} < 0.8, quantiles {qs:?}")
    })?;
    ensure(q8 > 4.0 * q4, || format!("chain q(8) = {q8} not above 4 x q(4) = {q4}"))?;
    Ok(format!(
        "corridor quantiles {qs:?} Spearman {rho:.3}; chain q(4) = {q4}, q(8) = {q8}"
    ))
}

fn trial_length_shape(dir: &Path) -> Check {
    let task = dir.join("corridor10.task");
    let csv = dir.join("lengths.csv");
    navlearn(&["gen", "corridor", "--length", "10", "--out", task.to_str().unwrap()])?;
    navlearn(&[
        "experiment",
        "trial-length",
        "--task",
        task.to_str().unwrap(),
        "--runs",
        "200",
        "--trials",
        "500",
        "--p",
        "0.9",
        "--seed",
        "0",
        "--out",
        csv.to_str().unwrap(),
    ])?;
    let rows = read_column(&csv, 1)?;
    let mean = |lo: usize, hi: usize| {
        let xs: Vec<f64> = rows.iter().filter(|r| (lo..=hi).contains(&r.0)).map(|r| r.1).collect();
        xs.iter().sum::<f64>() / xs.len() as f64
    };
    let (early, late) = (mean(3, 102), mean(401, 500));
    ensure(late < early, || {
        format!("mean over 401..500 = {late:.2} not below 3..102 = {early:.2}")
    })?;
    Ok(format!(
        "mean 0.9-quantile length: trials 3..102 = {early:.2}, trials 401..500 = {late:.2}"
    ))
}

fn determinism(dir: &Path) -> Check {
    let reference = std::fs::read(dir.join("corridor.csv")).map_err(|e| e.to_string())?;
    for jobs in ["1", "4"] {
        let again = dir.join(format!("corridor-{jobs}.csv"));
        navlearn(&convergence_args("corridor", again.to_str().unwrap(), jobs))?;
        let bytes = std::fs::read(&again).map_err(|e| e.to_string())?;
        ensure(bytes == reference, || format!("--jobs {jobs} output differs"))?;
    }
    Ok("repeat run and --jobs 4 run are byte-identical".into())
}

fn main() {
    let dir = tempfile::tempdir().expect("temp dir");
    let dir = dir.path().to_path_buf();
    let criteria: Vec<Criterion> = vec![
        (
            "1 reducibility layers (example1.task)",
            Duration::from_secs(1),
            Box::new(example1_layers),
        ),
        (
            "2 unstable and border sets (example3.task)",
            Duration::from_secs(1),
            Box::new(example3_unstable_border),
        ),
        (
            "3 scripted revisit trials (example1.task)",
            Duration::from_secs(1),
            Box::new(revisit_transcripts),
        ),
        (
            "4 convergence and stability suite",
            Duration::from_secs(300),
            Box::new(learnability_suite),
        ),
        (
            "5 final-policy oracle",
            Duration::from_secs(30),
            Box::new(final_policy_oracle),
        ),
        ("6 quantile oracle", Duration::from_secs(1), Box::new(quantile_oracle)),
        ("7 convergence index vs size", Duration::from_secs(600), {
            let dir = dir.clone();
            Box::new(move || convergence_shape(&dir))
        }),
        ("8 trial length decreases", Duration::from_secs(600), {
            let dir = dir.clone();
            Box::new(move || trial_length_shape(&dir))
        }),
        ("9 deterministic output", Duration::from_secs(1200), {
            let dir = dir.clone();
            Box::new(move || determinism(&dir))
        }),
    ];
    let mut failed = 0;
    for (name, limit, check) in &criteria {
        let start = Instant::now();
        let result = check();
        let elapsed = start.elapsed();
        let result = result.and_then(|detail| {
            ensure(elapsed <= *limit, || format!("took {elapsed:.1?}, limit {limit:?}")).map(|_| detail)
        });
        match result {
            Ok(detail) => println!("PASS criterion {name} [{elapsed:.2?}]: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL criterion {name} [{elapsed:.2?}]: {why}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
