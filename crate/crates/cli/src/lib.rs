//! The `navlearn` command line: argument parsing, dispatch and exit codes.
//!
//! Exit codes: 0 success, 1 usage error, 2 task-file or invariant error,
//! 3 simulation stopped by a cap without convergence. Diagnostics go to
//! stderr; data goes to stdout or the `--out` file, which is written to a
//! temporary file first and renamed into place only on success.

use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use navlearn::analysis::classify_states;
use navlearn::engine::{seeded_run_setup, Simulation};
use navlearn::experiments::{convergence_index_experiment, trial_length_experiment, ExperimentSettings, Family};
use navlearn::generators::{chain_task, corridor_task, grid_task, GridSpec};
use navlearn::{
    analyze_policy, check_necessary_conditions, is_reducible, reducibility_layers, unstable_and_border, Caps, Choice,
    Policy, RunOutcome, Scheduler, Task,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NOT_CONVERGED: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "navlearn",
    version,
    about = "Cycle-detection learning on nondeterministic navigation tasks"
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Static analysis: reducibility layers, unstable and border sets, necessary conditions
    Analyze(AnalyzeArgs),
    /// Simulate one run until the final policy is detected
    Run(RunArgs),
    /// Ground, forward and backward sets of a policy and the final-policy test
    PolicyAnalyze(PolicyAnalyzeArgs),
    /// Generate task files
    #[command(subcommand)]
    Gen(GenCommand),
    /// Reproduce the convergence-index and trial-length experiments
    #[command(subcommand)]
    Experiment(ExperimentCommand),
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    /// Task file
    #[arg(long)]
    task: PathBuf,
    /// Per-state CSV: state,in_reduce,in_unstable,in_border,reducibility_layer_index
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SchedulerArg {
    Rotating,
    Random,
    Scripted,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long)]
    task: PathBuf,
    #[arg(long, value_enum, default_value = "random")]
    scheduler: SchedulerArg,
    /// Seed for the random scheduler and the random initial policy
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1_000_000)]
    step_cap: usize,
    #[arg(long, default_value_t = 100_000)]
    trial_cap: usize,
    /// Initial policy file (`state action` per line); random from --seed if absent
    #[arg(long)]
    policy: Option<PathBuf>,
    /// Option script for --scheduler scripted (`action state` per line, replayed cyclically)
    #[arg(long)]
    script: Option<PathBuf>,
    /// Write the final policy here when the run converges
    #[arg(long)]
    final_policy: Option<PathBuf>,
    /// Per-trial CSV output; stdout if absent
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct PolicyAnalyzeArgs {
    #[arg(long)]
    task: PathBuf,
    #[arg(long)]
    policy: PathBuf,
    /// CSV: state,policy_action,in_ground,in_forward,in_backward; stdout if absent
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum GenCommand {
    /// Corridor grid task with the given start-to-goal distance
    Corridor {
        #[arg(long)]
        length: u32,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Chain task with n states before the goal
    Chain {
        #[arg(long)]
        n: u32,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Grid task from a sketch ('.' cell, '#' absent, 'S' start, 'G' goal; top line is the highest row)
    Grid {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FamilyArg {
    Corridor,
    Chain,
}

#[derive(Debug, Args)]
struct CommonExperimentArgs {
    #[arg(long, default_value_t = 0.9)]
    p: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads; output does not depend on this
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[arg(long, default_value_t = 1_000_000)]
    step_cap: usize,
    #[arg(long, default_value_t = 100_000)]
    trial_cap: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum ExperimentCommand {
    /// Quantile of the convergence-trial index per task size
    Convergence {
        #[arg(long, value_enum)]
        family: FamilyArg,
        /// Inclusive range `a..b` or comma-separated list
        #[arg(long, value_parser = parse_sizes)]
        sizes: Sizes,
        #[arg(long, default_value_t = 400)]
        runs: usize,
        #[command(flatten)]
        common: CommonExperimentArgs,
    },
    /// Quantile of the trial length per trial index on a fixed task
    TrialLength {
        #[arg(long)]
        task: PathBuf,
        #[arg(long, default_value_t = 1000)]
        runs: usize,
        #[arg(long, default_value_t = 2000)]
        trials: usize,
        /// Leave out the first N trials from the CSV
        #[arg(long, default_value_t = 0)]
        skip_first: usize,
        #[command(flatten)]
        common: CommonExperimentArgs,
    },
}

#[derive(Debug, Clone)]
struct Sizes(Vec<u32>);

/// Parses `a..b` (inclusive) or `a,b,c`.
fn parse_sizes(s: &str) -> Result<Sizes, String> {
    let sizes: Vec<u32> = if let Some((a, b)) = s.split_once("..") {
        let a: u32 = a.trim().parse().map_err(|e| format!("bad range start: {e}"))?;
        let b: u32 = b.trim().parse().map_err(|e| format!("bad range end: {e}"))?;
        if a > b {
            return Err(format!("empty range {a}..{b}"));
        }
        (a..=b).collect()
    } else {
        s.split(',')
            .map(|t| t.trim().parse::<u32>().map_err(|e| format!("bad size `{t}`: {e}")))
            .collect::<Result<_, _>>()?
    };
    if sizes.contains(&0) {
        return Err("sizes must be at least 1".into());
    }
    Ok(Sizes(sizes))
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Input(String),
    NotConverged(String),
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Input(_) => EXIT_INPUT,
            CliError::NotConverged(_) => EXIT_NOT_CONVERGED,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Input(m) | CliError::NotConverged(m) => f.write_str(m),
        }
    }
}

fn input_err(e: impl fmt::Display) -> CliError {
    CliError::Input(e.to_string())
}

/// Parses `args` (including the program name) and runs the command.
pub fn dispatch<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = write!(stdout, "{}", e.render());
                    return EXIT_OK;
                }
                _ => EXIT_USAGE,
            };
            let _ = write!(stderr, "{}", e.render());
            return code;
        }
    };
    match execute(cli.command, stdout, stderr) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.code()
        }
    }
}

fn execute(command: Command, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    match command {
        Command::Analyze(args) => analyze(args, out),
        Command::Run(args) => run(args, out, err),
        Command::PolicyAnalyze(args) => policy_analyze(args, out, err),
        Command::Gen(cmd) => generate(cmd, out),
        Command::Experiment(cmd) => experiment(cmd, out, err),
    }
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn load_task(path: &Path) -> Result<Task, CliError> {
    read_text(path)?
        .parse::<Task>()
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn load_policy(task: &Task, path: &Path) -> Result<Policy, CliError> {
    task.parse_policy(&read_text(path)?)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

/// Writes `content` to `path` via a temporary file in the same directory, or to `stdout`.
fn emit(path: Option<&Path>, content: &str, stdout: &mut dyn Write) -> Result<(), CliError> {
    let io_err = |e: io::Error| CliError::Input(format!("writing output: {e}"));
    match path {
        None => stdout.write_all(content.as_bytes()).map_err(io_err),
        Some(path) => {
            let dir = match path.parent() {
                Some(d) if !d.as_os_str().is_empty() => d,
                _ => Path::new("."),
            };
            let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err)?;
            tmp.write_all(content.as_bytes()).map_err(io_err)?;
            tmp.persist(path).map_err(|e| io_err(e.error))?;
            Ok(())
        }
    }
}

fn flag(b: bool) -> &'static str {
    if b {
        "true"
    } else {
        "false"
    }
}

fn analyze(args: AnalyzeArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let task = load_task(&args.task)?;
    let layers = reducibility_layers(&task, &task.goal_states());
    let (unstable, border) = unstable_and_border(&task);
    let necessary = check_necessary_conditions(&task);
    let reducible = layers.fixpoint();

    let mut report = String::new();
    report.push_str(&format!(
        "states: {}  actions: {}  start: {}  goals: {}\n",
        task.num_states(),
        task.num_actions(),
        task.format_set(&task.start_set()),
        task.format_set(&task.goal_states())
    ));
    report.push_str("reducibility layers:\n");
    for (i, layer) in layers.layers().iter().enumerate() {
        report.push_str(&format!("  R{} = {}\n", i + 1, task.format_set(layer)));
    }
    if reducible.len() == task.num_states() {
        report.push_str("reducible: all\n");
    } else {
        report.push_str(&format!(
            "reducible: {} of {} states\n",
            reducible.len(),
            task.num_states()
        ));
    }
    report.push_str(&format!("unstable: {}\n", task.format_set(&unstable)));
    report.push_str(&format!("border: {}\n", task.format_set(&border)));
    report.push_str("necessary conditions for learnability (not sufficient):\n");
    report.push_str(&format!(
        "  (a) reachable states have a path to the goals: {}\n",
        flag(necessary.property_a_holds)
    ));
    report.push_str(&format!(
        "  (b) start states reducible to the goals: {}\n",
        flag(necessary.start_states_reducible)
    ));
    if !necessary.property_a_holds {
        let stuck = necessary
            .states_without_path_to_goals
            .intersection(&necessary.reachable_states);
        report.push_str(&format!(
            "  reachable states without a path: {}\n",
            task.format_set(&stuck)
        ));
    }
    out.write_all(report.as_bytes()).map_err(input_err)?;

    if let Some(csv_path) = args.csv {
        let mut csv = String::from("state,in_reduce,in_unstable,in_border,reducibility_layer_index\n");
        for row in classify_states(&task) {
            csv.push_str(&format!(
                "{},{},{},{},{}\n",
                task.state_name(row.state),
                flag(row.in_reduce),
                flag(row.in_unstable),
                flag(row.in_border),
                row.layer_index.map(|i| i.to_string()).unwrap_or_default()
            ));
        }
        emit(Some(&csv_path), &csv, out)?;
    }
    Ok(())
}

fn load_script(task: &Task, path: &Path) -> Result<Vec<Choice>, CliError> {
    let text = read_text(path)?;
    let mut script = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let toks: Vec<&str> = content.split_whitespace().collect();
        let bad = |m: String| CliError::Input(format!("{}:{line_no}: {m}", path.display()));
        if toks.len() != 2 {
            return Err(bad("expected `action state`".into()));
        }
        let action = task
            .action_id(toks[0])
            .ok_or_else(|| bad(format!("unknown action `{}`", toks[0])))?;
        let next = task
            .state_id(toks[1])
            .ok_or_else(|| bad(format!("unknown state `{}`", toks[1])))?;
        script.push(Choice::new(action, next));
    }
    Ok(script)
}

fn run(args: RunArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    if args.step_cap == 0 || args.trial_cap == 0 {
        return Err(CliError::Usage("--step-cap and --trial-cap must be at least 1".into()));
    }
    let task = load_task(&args.task)?;
    let (scheduler, seeded_policy) = match args.scheduler {
        SchedulerArg::Random => seeded_run_setup(&task, args.seed),
        SchedulerArg::Rotating => (Scheduler::rotating(), seeded_run_setup(&task, args.seed).1),
        SchedulerArg::Scripted => {
            let path = args
                .script
                .as_deref()
                .ok_or_else(|| CliError::Usage("--scheduler scripted needs --script FILE".into()))?;
            let script = load_script(&task, path)?;
            let scheduler = Scheduler::scripted(script).map_err(input_err)?;
            (scheduler, seeded_run_setup(&task, args.seed).1)
        }
    };
    let initial = match &args.policy {
        Some(path) => load_policy(&task, path)?,
        None => seeded_policy,
    };
    let mut csv = String::from("trial_index,start_state,length,terminated_with_reward,policy_changed,converged_here\n");
    let mut index = 0;
    let record = Simulation::new(&task, scheduler, initial, args.step_cap)
        .run_with(args.trial_cap, |trial| {
            index += 1;
            // the converged flag is patched in below; it can only be the last row
            csv.push_str(&format!(
                "{},{},{},{},{},false\n",
                index,
                task.state_name(trial.start_state),
                trial.length,
                flag(trial.terminated_with_reward),
                flag(trial.policy_changed),
            ));
        })
        .map_err(input_err)?;
    if record.outcome == RunOutcome::Converged {
        csv.truncate(csv.len() - "false\n".len());
        csv.push_str("true\n");
    }
    emit(args.out.as_deref(), &csv, out)?;

    let label = if is_reducible(&task) {
        "final policy"
    } else {
        "final-policy form test passed (task not reducible)"
    };
    match record.outcome {
        RunOutcome::Converged => {
            let index = record.convergence_trial_index.expect("converged");
            let _ = writeln!(err, "converged at trial {index}; {label}:");
            let policy = record.final_policy.expect("converged");
            let text = task.policy_to_text(&policy);
            let _ = err.write_all(text.as_bytes());
            if let Some(path) = &args.final_policy {
                emit(Some(path), &text, out)?;
            }
            Ok(())
        }
        RunOutcome::TrialCapReached => Err(CliError::NotConverged(format!(
            "no convergence within {} trials",
            record.trials_run
        ))),
        RunOutcome::TrialTruncated => Err(CliError::NotConverged(format!(
            "trial {} hit the step cap of {} without reward",
            record.trials_run, args.step_cap
        ))),
    }
}

fn policy_analyze(args: PolicyAnalyzeArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    let task = load_task(&args.task)?;
    let policy = load_policy(&task, &args.policy)?;
    let analysis = analyze_policy(&task, &policy);
    let mut csv = String::from("state,policy_action,in_ground,in_forward,in_backward\n");
    for q in task.states() {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            task.state_name(q),
            task.action_name(policy.action(q)),
            flag(analysis.ground.contains(q)),
            flag(analysis.forward.contains(q)),
            flag(analysis.backward.contains(q))
        ));
    }
    let label = if is_reducible(&task) {
        "final-policy test"
    } else {
        "final-policy form test (task not reducible; learnability not established)"
    };
    let summary = format!(
        "ground: {}\nforward: {}\nbackward: {}\nforward not in backward: {}\n{label}: {}\n",
        task.format_set(&analysis.ground),
        task.format_set(&analysis.forward),
        task.format_set(&analysis.backward),
        task.format_set(&analysis.uncovered()),
        if analysis.is_final { "pass" } else { "fail" }
    );
    match &args.out {
        Some(path) => {
            emit(Some(path), &csv, out)?;
            out.write_all(summary.as_bytes()).map_err(input_err)
        }
        None => {
            emit(None, &csv, out)?;
            let _ = err.write_all(summary.as_bytes());
            Ok(())
        }
    }
}

fn generate(cmd: GenCommand, out: &mut dyn Write) -> Result<(), CliError> {
    let (task, path) = match cmd {
        GenCommand::Corridor { length, out } => (corridor_task(length).map_err(input_err)?, out),
        GenCommand::Chain { n, out } => (chain_task(n).map_err(input_err)?, out),
        GenCommand::Grid { spec, out } => {
            let sketch = GridSpec::from_sketch(&read_text(&spec)?).map_err(input_err)?;
            (grid_task(&sketch).map_err(input_err)?, out)
        }
    };
    emit(path.as_deref(), &task.to_text(), out)
}

fn settings(common: &CommonExperimentArgs, runs: usize) -> Result<ExperimentSettings, CliError> {
    if !(common.p > 0.0 && common.p < 1.0) {
        return Err(CliError::Usage(format!(
            "--p must lie strictly between 0 and 1, got {}",
            common.p
        )));
    }
    if runs == 0 || common.jobs == 0 || common.step_cap == 0 || common.trial_cap == 0 {
        return Err(CliError::Usage(
            "--runs, --jobs, --step-cap and --trial-cap must be at least 1".into(),
        ));
    }
    Ok(ExperimentSettings {
        runs,
        p: common.p,
        master_seed: common.seed,
        caps: Caps {
            step_cap: common.step_cap,
            trial_cap: common.trial_cap,
        },
        jobs: common.jobs,
    })
}

fn experiment(cmd: ExperimentCommand, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    match cmd {
        ExperimentCommand::Convergence {
            family,
            sizes,
            runs,
            common,
        } => {
            let family = match family {
                FamilyArg::Corridor => Family::Corridor,
                FamilyArg::Chain => Family::Chain,
            };
            let settings = settings(&common, runs)?;
            let table = convergence_index_experiment(family, &sizes.0, settings).map_err(input_err)?;
            emit(common.out.as_deref(), &table.to_csv(), out)?;
            let failures = table.total_failures();
            if failures > 0 {
                for row in table.rows.iter().filter(|r| r.failures > 0) {
                    let _ = writeln!(
                        err,
                        "warning: {} size {}: {} of {} runs hit a cap and were excluded",
                        family.name(),
                        row.size,
                        row.failures,
                        row.runs
                    );
                }
                return Err(CliError::NotConverged(format!("{failures} runs did not converge")));
            }
            Ok(())
        }
        ExperimentCommand::TrialLength {
            task,
            runs,
            trials,
            skip_first,
            common,
        } => {
            if trials == 0 {
                return Err(CliError::Usage("--trials must be at least 1".into()));
            }
            let task = load_task(&task)?;
            let settings = settings(&common, runs)?;
            let table = trial_length_experiment(&task, trials, settings).map_err(input_err)?;
            emit(common.out.as_deref(), &table.to_csv(skip_first), out)?;
            if table.failures > 0 {
                let _ = writeln!(
                    err,
                    "warning: {} of {} runs had a truncated trial and were excluded",
                    table.failures, runs
                );
                return Err(CliError::NotConverged(format!("{} runs truncated", table.failures)));
            }
            Ok(())
        }
    }
}
