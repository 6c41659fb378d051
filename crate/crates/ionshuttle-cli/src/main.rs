//! Command-line interface: training, compilation, benchmarking, circuit
//! generation, the exact oracle, and schedule animation dumps.
//!
//! Exit codes: 0 success, 2 invalid input, 3 compile budget exhausted
//! without a valid schedule.

use std::io::Write;
use std::path::PathBuf;
use std::sync::Arc;

use clap::{Parser, Subcommand};

use ionshuttle::baselines::{
    exact_compile, heuristic_compile, replay_schedule, Schedule, SearchBudget, DEFAULT_CANDIDATES,
    DEFAULT_WINDOW,
};
use ionshuttle::bench::{bench, make_suite, BenchConfig, Method, SuiteSpec};
use ionshuttle::chip::ChipSpec;
use ionshuttle::circuit::{generate_qv_circuit, Circuit};
use ionshuttle::env::{RewardConfig, ShuttleEnv};
use ionshuttle::inference::{rl_compile, InferenceConfig};
use ionshuttle::ppo::{train, Checkpoint, PpoConfig};
use ionshuttle::Error;

#[derive(Parser)]
#[command(name = "ionshuttle", version, about = "Ion-shuttling schedule synthesis for QCCD chips")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a shuttling policy on randomly generated circuits.
    Train {
        /// Chip: builtin:x50, builtin:q50, builtin:q50-spam3, builtin:x<N>,
        /// builtin:q<N>, or a chip JSON file.
        #[arg(long, default_value = "builtin:x50")]
        chip: String,
        /// Training config JSON (partial; missing keys use defaults).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory for checkpoints and metrics.
        #[arg(long)]
        out: PathBuf,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Save a checkpoint every N learning steps.
        #[arg(long, default_value_t = 50)]
        checkpoint_every: usize,
    },
    /// Compile a circuit to a shuttling schedule.
    Compile {
        #[arg(long, default_value = "builtin:x50")]
        chip: String,
        /// Circuit file: one "x y" gate per line, '#' comments.
        #[arg(long)]
        circuit: PathBuf,
        /// rl, heuristic, or exact.
        #[arg(long, default_value = "heuristic")]
        method: String,
        /// Checkpoint JSON (required for --method rl).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Wall-clock budget in seconds for rl rollouts.
        #[arg(long)]
        budget: Option<f64>,
        /// Budget rl compilation by max(heuristic compile time, 1 s).
        #[arg(long)]
        budget_from_heuristic: bool,
        #[arg(long, default_value_t = 64)]
        max_rollouts: usize,
        /// Argmax rollout instead of sampling (debugging).
        #[arg(long)]
        greedy: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Node limit for --method exact.
        #[arg(long, default_value_t = 2_000_000)]
        max_nodes: usize,
        /// Time limit in seconds for --method exact.
        #[arg(long, default_value_t = 120.0)]
        max_seconds: f64,
        /// Schedule JSON output path (stdout if omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run compiler suites and report aggregates with bootstrap intervals.
    Bench {
        #[arg(long, default_value = "builtin:x50")]
        chip: String,
        /// Suite: qv:<n>:<count> or random:<qubits>:<gates>:<count>.
        #[arg(long)]
        suite: String,
        /// Comma-separated: rl,heuristic,exact.
        #[arg(long, default_value = "heuristic")]
        methods: String,
        /// Comma-separated rl time budgets in seconds.
        #[arg(long, default_value = "")]
        budgets: String,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 20_000)]
        bootstrap_draws: usize,
        #[arg(long, default_value_t = 64)]
        max_rollouts: usize,
        #[arg(long, default_value_t = 2_000_000)]
        max_nodes: usize,
        #[arg(long, default_value_t = 120.0)]
        max_seconds: f64,
        /// Output directory (bench.csv + bench.json).
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a quantum-volume circuit (n layers of ⌊n/2⌋ gates).
    GenQv {
        #[arg(long)]
        n: u16,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a uniform random interaction circuit.
    GenRandom {
        #[arg(long)]
        qubits: u16,
        #[arg(long)]
        gates: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Prove a shortest schedule with uniform-cost search.
    Oracle {
        #[arg(long, default_value = "builtin:x50")]
        chip: String,
        #[arg(long)]
        circuit: PathBuf,
        #[arg(long, default_value_t = 2_000_000)]
        max_nodes: usize,
        #[arg(long, default_value_t = 120.0)]
        max_seconds: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Dump per-step cell occupancy frames for a schedule.
    Animate {
        #[arg(long, default_value = "builtin:x50")]
        chip: String,
        #[arg(long)]
        circuit: PathBuf,
        /// Schedule JSON produced by `compile` or `oracle`.
        #[arg(long)]
        schedule: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => {}
        Err(e) => {
            eprintln!("error: {e}");
            let code = match e.downcast_ref::<Error>() {
                Some(Error::BudgetExhausted(_)) => 3,
                _ => 2,
            };
            std::process::exit(code);
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Train { chip, config, out, seed, checkpoint_every } => {
            cmd_train(&chip, config, &out, seed, checkpoint_every)
        }
        Command::Compile {
            chip,
            circuit,
            method,
            checkpoint,
            budget,
            budget_from_heuristic,
            max_rollouts,
            greedy,
            seed,
            max_nodes,
            max_seconds,
            out,
        } => cmd_compile(
            &chip,
            &circuit,
            &method,
            checkpoint,
            budget,
            budget_from_heuristic,
            max_rollouts,
            greedy,
            seed,
            SearchBudget { max_expanded: max_nodes, max_seconds },
            out,
        ),
        Command::Bench {
            chip,
            suite,
            methods,
            budgets,
            checkpoint,
            seed,
            bootstrap_draws,
            max_rollouts,
            max_nodes,
            max_seconds,
            out,
        } => cmd_bench(
            &chip,
            &suite,
            &methods,
            &budgets,
            checkpoint,
            seed,
            bootstrap_draws,
            max_rollouts,
            SearchBudget { max_expanded: max_nodes, max_seconds },
            &out,
        ),
        Command::GenQv { n, seed, out } => {
            use rand::SeedableRng;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let circuit = generate_qv_circuit(n, &mut rng)?;
            emit_text(&circuit.to_text(), out)
        }
        Command::GenRandom { qubits, gates, seed, out } => {
            use rand::SeedableRng;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            // chip irrelevant for the circuit itself; use a wide builtin
            let spec = ChipSpec::x_chip(qubits.max(2) as usize)?;
            let (circuit, _) = ionshuttle::bench::fixed_size_problem(&spec, qubits, gates, &mut rng)?;
            emit_text(&circuit.to_text(), out)
        }
        Command::Oracle { chip, circuit, max_nodes, max_seconds, out } => {
            let spec = Arc::new(ChipSpec::from_flag(&chip)?);
            let circuit = Circuit::parse(&std::fs::read_to_string(circuit)?)?;
            let placement = spec.default_placement(circuit.num_qubits() as usize)?;
            let budget = SearchBudget { max_expanded: max_nodes, max_seconds };
            let result = exact_compile(&spec, &circuit, &placement, budget)?;
            eprintln!(
                "oracle: duration {} in {} actions, proven_optimal={}, expanded {} states",
                result.schedule.total_duration,
                result.schedule.steps(),
                result.proven_optimal,
                result.expanded_states
            );
            emit_text(&serde_json::to_string_pretty(&result)?, out)
        }
        Command::Animate { chip, circuit, schedule, out } => {
            cmd_animate(&chip, &circuit, &schedule, out)
        }
    }
}

fn emit_text(text: &str, out: Option<PathBuf>) -> anyhow::Result<()> {
    match out {
        Some(path) => std::fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn cmd_train(
    chip: &str,
    config: Option<PathBuf>,
    out: &std::path::Path,
    seed: Option<u64>,
    checkpoint_every: usize,
) -> anyhow::Result<()> {
    let spec = Arc::new(ChipSpec::from_flag(chip)?);
    let mut cfg: PpoConfig = match config {
        Some(path) => serde_json::from_str(&std::fs::read_to_string(path)?)?,
        None => PpoConfig::default(),
    };
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("config.json"), serde_json::to_string_pretty(&cfg)?)?;
    let metrics_path = out.join("metrics.ndjson");
    let mut metrics_file = std::io::BufWriter::new(std::fs::File::create(&metrics_path)?);
    let ckpt_path = out.join("checkpoint.json");

    let total = cfg.total_iters;
    let cfg_for_ckpt = cfg.clone();
    let result = train(&spec, &cfg, |metrics, policy, value| {
        serde_json::to_writer(&mut metrics_file, metrics)
            .map_err(ionshuttle::Error::from)?;
        metrics_file.write_all(b"\n").map_err(ionshuttle::Error::from)?;
        if metrics.iter % 20 == 0 {
            eprintln!(
                "iter {}/{} loss {:.4} entropy {:.3} solve {:.2} mean-dur {:.1}",
                metrics.iter,
                total,
                metrics.loss,
                metrics.entropy,
                metrics.solve_rate,
                metrics.mean_episode_duration
            );
        }
        if checkpoint_every > 0 && (metrics.iter + 1) % checkpoint_every == 0 {
            save_checkpoint(&ckpt_path, &cfg_for_ckpt, metrics.iter + 1, policy, value)?;
        }
        Ok(())
    });
    metrics_file.flush()?;
    match result {
        Ok(output) => {
            save_checkpoint(&ckpt_path, &cfg, cfg.total_iters, &output.policy, &output.value)?;
            eprintln!("training done; checkpoint at {}", ckpt_path.display());
            Ok(())
        }
        Err(e) => {
            eprintln!(
                "training aborted ({e}); last good checkpoint (if any) retained at {}",
                ckpt_path.display()
            );
            Err(e.into())
        }
    }
}

fn save_checkpoint(
    path: &std::path::Path,
    cfg: &PpoConfig,
    train_step: usize,
    policy: &ionshuttle::nn::ResidualNet<f32>,
    value: &ionshuttle::nn::ResidualNet<f32>,
) -> ionshuttle::Result<()> {
    Checkpoint {
        version: Checkpoint::VERSION,
        train_step,
        config: cfg.clone(),
        obs_dim: policy.in_dim(),
        n_act: policy.out_dim(),
        policy: policy.clone(),
        value: value.clone(),
    }
    .save(path)
}

#[allow(clippy::too_many_arguments)]
fn cmd_compile(
    chip: &str,
    circuit_path: &std::path::Path,
    method: &str,
    checkpoint: Option<PathBuf>,
    budget: Option<f64>,
    budget_from_heuristic: bool,
    max_rollouts: usize,
    greedy: bool,
    seed: u64,
    search_budget: SearchBudget,
    out: Option<PathBuf>,
) -> anyhow::Result<()> {
    let spec = Arc::new(ChipSpec::from_flag(chip)?);
    let circuit = Circuit::parse(&std::fs::read_to_string(circuit_path)?)?;
    let placement = spec.default_placement(circuit.num_qubits() as usize)?;
    let schedule: Schedule = match method {
        "heuristic" => heuristic_compile(&spec, &circuit, &placement, DEFAULT_WINDOW, DEFAULT_CANDIDATES)?,
        "exact" => {
            let r = exact_compile(&spec, &circuit, &placement, search_budget)?;
            if !r.proven_optimal {
                eprintln!("warning: budget exhausted, returning unproven incumbent");
            }
            r.schedule
        }
        "rl" => {
            let ckpt_path = checkpoint
                .ok_or_else(|| Error::Checkpoint("--method rl requires --checkpoint".into()))?;
            let ckpt = Checkpoint::load(ckpt_path)?;
            ckpt.check_compatible(&spec)?;
            let time_budget = if budget_from_heuristic {
                let h = heuristic_compile(&spec, &circuit, &placement, DEFAULT_WINDOW, DEFAULT_CANDIDATES)?;
                Some(h.compile_seconds.max(1.0))
            } else {
                budget
            };
            let icfg = InferenceConfig {
                time_budget,
                max_rollouts,
                step_cap: None,
                seed,
                greedy,
            };
            rl_compile(&ckpt.policy, &ckpt.config.observer(), &spec, &circuit, &placement, &icfg)?
        }
        other => return Err(Error::Parse(format!("unknown method '{other}'")).into()),
    };
    replay_schedule(&spec, &circuit, &placement, &schedule)?;
    eprintln!(
        "{}: duration {} in {} actions ({:.3} s compile)",
        schedule.method,
        schedule.total_duration,
        schedule.steps(),
        schedule.compile_seconds
    );
    emit_text(&serde_json::to_string_pretty(&schedule)?, out)
}

#[allow(clippy::too_many_arguments)]
fn cmd_bench(
    chip: &str,
    suite: &str,
    methods: &str,
    budgets: &str,
    checkpoint: Option<PathBuf>,
    seed: u64,
    bootstrap_draws: usize,
    max_rollouts: usize,
    oracle_budget: SearchBudget,
    out: &std::path::Path,
) -> anyhow::Result<()> {
    let spec = Arc::new(ChipSpec::from_flag(chip)?);
    let suite: SuiteSpec = suite.parse()?;
    let methods: Vec<Method> = methods
        .split(',')
        .filter(|s| !s.is_empty())
        .map(|s| s.trim().parse())
        .collect::<Result<_, _>>()?;
    let budgets: Vec<f64> = budgets
        .split(',')
        .filter(|s| !s.is_empty())
        .map(|s| s.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| Error::Parse(format!("bad budget list: {e}")))?;
    let instances = make_suite(&spec, suite, seed)?;
    let ckpt = match checkpoint {
        Some(path) => {
            let c = Checkpoint::load(path)?;
            c.check_compatible(&spec)?;
            Some(c)
        }
        None => None,
    };
    let policy = ckpt.as_ref().map(|c| (&c.policy, c.config.observer()));
    let cfg = BenchConfig {
        methods,
        budgets,
        bootstrap_draws,
        seed,
        oracle_budget,
        max_rollouts,
    };
    let observer_holder;
    let policy_ref = match &policy {
        Some((net, obs)) => {
            observer_holder = *obs;
            Some((*net, &observer_holder))
        }
        None => None,
    };
    let report = bench(&spec, &instances, policy_ref, &cfg)?;
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("bench.csv"), report.to_csv())?;
    std::fs::write(out.join("bench.json"), serde_json::to_string_pretty(&report)?)?;
    for agg in &report.aggregates {
        let budget = agg.budget.map_or(String::new(), |b| format!(" @ {b}s"));
        let gap = agg
            .mean_gap
            .map_or(String::new(), |g| format!(", mean gap {g:.3}"));
        println!(
            "{}{}: mean duration {:.3} [{:.3}, {:.3}] over {} instances{}",
            agg.method, budget, agg.mean_duration, agg.duration_ci.0, agg.duration_ci.1,
            agg.instances, gap
        );
    }
    Ok(())
}

#[derive(serde::Serialize)]
struct Frame {
    step: usize,
    action: Option<String>,
    duration: f64,
    elapsed: f64,
    gates_executed: u32,
    remaining_gates: usize,
    cells: Vec<Option<u16>>,
}

fn cmd_animate(
    chip: &str,
    circuit_path: &std::path::Path,
    schedule_path: &std::path::Path,
    out: Option<PathBuf>,
) -> anyhow::Result<()> {
    let spec = Arc::new(ChipSpec::from_flag(chip)?);
    let circuit = Circuit::parse(&std::fs::read_to_string(circuit_path)?)?;
    let schedule: Schedule = serde_json::from_str(&std::fs::read_to_string(schedule_path)?)?;
    let placement = spec.default_placement(circuit.num_qubits() as usize)?;
    let mut env = ShuttleEnv::new(spec.clone(), RewardConfig::default(), &circuit, placement)?;
    let mut frames = vec![Frame {
        step: 0,
        action: None,
        duration: 0.0,
        elapsed: 0.0,
        gates_executed: 0,
        remaining_gates: env.dag().remaining(),
        cells: env.state().cells().to_vec(),
    }];
    for (i, entry) in schedule.entries.iter().enumerate() {
        let r = env.step(entry.action)?;
        frames.push(Frame {
            step: i + 1,
            action: Some(entry.label.clone()),
            duration: r.duration,
            elapsed: env.elapsed(),
            gates_executed: r.gates_executed,
            remaining_gates: env.dag().remaining(),
            cells: env.state().cells().to_vec(),
        });
    }
    emit_text(&serde_json::to_string_pretty(&frames)?, out)
}
