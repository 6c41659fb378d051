//! Benchmark harness: runs compilers over instance suites, computes
//! optimality gaps against proven-optimal oracle runs, and bootstraps
//! confidence intervals for the aggregates.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::{exact_compile, heuristic_compile, SearchBudget, DEFAULT_CANDIDATES, DEFAULT_WINDOW};
use crate::chip::{ChipSpec, ChipState};
use crate::circuit::{generate_qv_circuit, Circuit};
use crate::error::{Error, Result};
use crate::inference::{rl_compile, InferenceConfig};
use crate::nn::ResidualNet;
use crate::repr::Observer;

/// One benchmark problem: a circuit and its fixed initial placement.
#[derive(Debug, Clone)]
pub struct BenchInstance {
    pub name: String,
    pub circuit: Circuit,
    pub placement: ChipState,
}

/// Instance suite descriptions, parseable from `qv:<n>:<count>` or
/// `random:<qubits>:<gates>:<count>`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SuiteSpec {
    Qv { n: u16, count: usize },
    Random { qubits: u16, gates: usize, count: usize },
}

impl std::str::FromStr for SuiteSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let bad = || Error::Parse(format!("suite '{s}' (want qv:<n>:<count> or random:<qubits>:<gates>:<count>)"));
        match parts.as_slice() {
            ["qv", n, count] => Ok(SuiteSpec::Qv {
                n: n.parse().map_err(|_| bad())?,
                count: count.parse().map_err(|_| bad())?,
            }),
            ["random", qubits, gates, count] => Ok(SuiteSpec::Random {
                qubits: qubits.parse().map_err(|_| bad())?,
                gates: gates.parse().map_err(|_| bad())?,
                count: count.parse().map_err(|_| bad())?,
            }),
            _ => Err(bad()),
        }
    }
}

/// Generates the suite deterministically from `seed`: instance `i` uses
/// RNG stream `i`, and the placement starts from a seeded random storage.
pub fn make_suite(spec: &ChipSpec, suite: SuiteSpec, seed: u64) -> Result<Vec<BenchInstance>> {
    let mut out = Vec::new();
    match suite {
        SuiteSpec::Qv { n, count } => {
            for i in 0..count {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(i as u64);
                let circuit = generate_qv_circuit(n, &mut rng)?;
                let storages = spec.storage_zones();
                let zone = storages[rng.random_range(0..storages.len())];
                let placement = spec.place_qubits(n as usize, zone)?;
                out.push(BenchInstance { name: format!("qv{n}-{i:03}"), circuit, placement });
            }
        }
        SuiteSpec::Random { qubits, gates, count } => {
            for i in 0..count {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(i as u64);
                let (circuit, placement) = fixed_size_problem(spec, qubits, gates, &mut rng)?;
                out.push(BenchInstance {
                    name: format!("rand{qubits}q{gates}g-{i:03}"),
                    circuit,
                    placement,
                });
            }
        }
    }
    Ok(out)
}

/// A random interaction circuit with exact qubit and gate counts (the
/// training generator draws both; benchmarks pin them).
pub fn fixed_size_problem<R: Rng>(
    spec: &ChipSpec,
    qubits: u16,
    gates: usize,
    rng: &mut R,
) -> Result<(Circuit, ChipState)> {
    let mut pairs = Vec::with_capacity(gates);
    for _ in 0..gates {
        let x = rng.random_range(1..=qubits);
        let mut y = rng.random_range(1..=qubits - 1);
        if y >= x {
            y += 1;
        }
        pairs.push((x, y));
    }
    let circuit = Circuit::new(&pairs, qubits)?;
    let storages = spec.storage_zones();
    let zone = storages[rng.random_range(0..storages.len())];
    let placement = spec.place_qubits(qubits as usize, zone)?;
    Ok((circuit, placement))
}

/// Methods the harness can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Rl,
    Heuristic,
    Exact,
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rl" => Ok(Method::Rl),
            "heuristic" => Ok(Method::Heuristic),
            "exact" => Ok(Method::Exact),
            _ => Err(Error::Parse(format!("unknown method '{s}'"))),
        }
    }
}

/// Harness settings.
#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub methods: Vec<Method>,
    /// Time budgets (seconds) for the learned compiler; one row group per
    /// budget. Empty means a single unbudgeted best-of-N run.
    pub budgets: Vec<f64>,
    pub bootstrap_draws: usize,
    pub seed: u64,
    pub oracle_budget: SearchBudget,
    pub max_rollouts: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            methods: vec![Method::Heuristic],
            budgets: Vec::new(),
            bootstrap_draws: 20_000,
            seed: 0,
            oracle_budget: SearchBudget::default(),
            max_rollouts: 64,
        }
    }
}

/// One (instance, method, budget) measurement.
#[derive(Debug, Clone, Serialize)]
pub struct InstanceRow {
    pub instance: String,
    pub method: String,
    pub budget: Option<f64>,
    pub duration: f64,
    pub steps: usize,
    pub compile_seconds: f64,
    /// Duration minus the proven optimum, when the oracle proved one.
    pub gap: Option<f64>,
    pub proven_optimal: Option<bool>,
    pub steps_per_gate: f64,
}

/// Gap distribution over instances with a proven optimum, bucketed in
/// whole steps.
#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct GapHistogram {
    pub zero: usize,
    pub one: usize,
    pub two: usize,
    pub more: usize,
}

impl GapHistogram {
    fn add(&mut self, gap: f64) {
        if gap < 0.5 {
            self.zero += 1;
        } else if gap < 1.5 {
            self.one += 1;
        } else if gap < 2.5 {
            self.two += 1;
        } else {
            self.more += 1;
        }
    }
}

/// Per-(method, budget) aggregate with bootstrapped 95% intervals.
#[derive(Debug, Clone, Serialize)]
pub struct Aggregate {
    pub method: String,
    pub budget: Option<f64>,
    pub instances: usize,
    pub mean_duration: f64,
    pub duration_ci: (f64, f64),
    pub mean_steps_per_gate: f64,
    pub mean_compile_seconds: f64,
    pub mean_gap: Option<f64>,
    pub gap_ci: Option<(f64, f64)>,
    pub gap_histogram: Option<GapHistogram>,
}

/// Full harness output.
#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub rows: Vec<InstanceRow>,
    pub aggregates: Vec<Aggregate>,
}

impl BenchReport {
    /// Stable CSV rendering of the per-instance rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "instance,method,budget,duration,steps,compile_seconds,gap,proven_optimal,steps_per_gate\n",
        );
        for r in &self.rows {
            let opt = |v: &Option<f64>| v.map_or(String::new(), |x| format!("{x}"));
            out.push_str(&format!(
                "{},{},{},{},{},{:.6},{},{},{:.6}\n",
                r.instance,
                r.method,
                opt(&r.budget),
                r.duration,
                r.steps,
                r.compile_seconds,
                opt(&r.gap),
                r.proven_optimal.map_or(String::new(), |b| b.to_string()),
                r.steps_per_gate
            ));
        }
        out
    }
}

/// Bootstrap mean and 95% percentile interval (deterministic per seed).
pub fn bootstrap_ci(values: &[f64], draws: usize, rng: &mut ChaCha8Rng) -> (f64, (f64, f64)) {
    assert!(!values.is_empty());
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let mut means = Vec::with_capacity(draws);
    for _ in 0..draws {
        let mut acc = 0.0;
        for _ in 0..values.len() {
            acc += values[rng.random_range(0..values.len())];
        }
        means.push(acc / values.len() as f64);
    }
    means.sort_by(f64::total_cmp);
    let pick = |q: f64| means[((means.len() - 1) as f64 * q).round() as usize];
    (mean, (pick(0.025), pick(0.975)))
}

/// Runs every requested method over the suite.
///
/// The oracle (when requested) runs first so its proven optima define the
/// gaps of the other methods. The learned compiler needs `policy`.
pub fn bench(
    spec: &Arc<ChipSpec>,
    instances: &[BenchInstance],
    policy: Option<(&ResidualNet<f32>, &Observer)>,
    cfg: &BenchConfig,
) -> Result<BenchReport> {
    let mut rows: Vec<InstanceRow> = Vec::new();
    let mut optima: Vec<Option<f64>> = vec![None; instances.len()];

    if cfg.methods.contains(&Method::Exact) {
        for (i, inst) in instances.iter().enumerate() {
            let r = exact_compile(spec, &inst.circuit, &inst.placement, cfg.oracle_budget)?;
            if r.proven_optimal {
                optima[i] = Some(r.schedule.total_duration);
            }
            rows.push(row_from(
                inst,
                "exact",
                None,
                r.schedule.total_duration,
                r.schedule.steps(),
                r.schedule.compile_seconds,
                optima[i].map(|o| r.schedule.total_duration - o),
                Some(r.proven_optimal),
            ));
        }
    }
    if cfg.methods.contains(&Method::Heuristic) {
        for (i, inst) in instances.iter().enumerate() {
            let s = heuristic_compile(spec, &inst.circuit, &inst.placement, DEFAULT_WINDOW, DEFAULT_CANDIDATES)?;
            rows.push(row_from(
                inst,
                "heuristic",
                None,
                s.total_duration,
                s.steps(),
                s.compile_seconds,
                optima[i].map(|o| s.total_duration - o),
                None,
            ));
        }
    }
    if cfg.methods.contains(&Method::Rl) {
        let (policy, observer) = policy.ok_or_else(|| {
            Error::Checkpoint("benchmarking the learned compiler requires a checkpoint".into())
        })?;
        let budgets: Vec<Option<f64>> = if cfg.budgets.is_empty() {
            vec![None]
        } else {
            cfg.budgets.iter().map(|b| Some(*b)).collect()
        };
        for budget in budgets {
            for (i, inst) in instances.iter().enumerate() {
                let icfg = InferenceConfig {
                    time_budget: budget,
                    max_rollouts: cfg.max_rollouts,
                    seed: cfg.seed,
                    ..Default::default()
                };
                let s = rl_compile(policy, observer, spec, &inst.circuit, &inst.placement, &icfg)?;
                rows.push(row_from(
                    inst,
                    "rl",
                    budget,
                    s.total_duration,
                    s.steps(),
                    s.compile_seconds,
                    optima[i].map(|o| s.total_duration - o),
                    None,
                ));
            }
        }
    }

    let mut aggregates = Vec::new();
    let mut groups: Vec<(String, Option<f64>)> = Vec::new();
    for r in &rows {
        let key = (r.method.clone(), r.budget);
        if !groups.contains(&key) {
            groups.push(key);
        }
    }
    let mut boot_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    boot_rng.set_stream(u64::MAX);
    for (method, budget) in groups {
        let members: Vec<&InstanceRow> = rows
            .iter()
            .filter(|r| r.method == method && r.budget == budget)
            .collect();
        let durations: Vec<f64> = members.iter().map(|r| r.duration).collect();
        let (mean_duration, duration_ci) = bootstrap_ci(&durations, cfg.bootstrap_draws, &mut boot_rng);
        let gaps: Vec<f64> = members.iter().filter_map(|r| r.gap).collect();
        let (mean_gap, gap_ci, gap_histogram) = if gaps.is_empty() {
            (None, None, None)
        } else {
            let (m, ci) = bootstrap_ci(&gaps, cfg.bootstrap_draws, &mut boot_rng);
            let mut hist = GapHistogram::default();
            for g in &gaps {
                hist.add(*g);
            }
            (Some(m), Some(ci), Some(hist))
        };
        aggregates.push(Aggregate {
            method,
            budget,
            instances: members.len(),
            mean_duration,
            duration_ci,
            mean_steps_per_gate: members.iter().map(|r| r.steps_per_gate).sum::<f64>()
                / members.len() as f64,
            mean_compile_seconds: members.iter().map(|r| r.compile_seconds).sum::<f64>()
                / members.len() as f64,
            mean_gap,
            gap_ci,
            gap_histogram,
        });
    }
    Ok(BenchReport { rows, aggregates })
}

#[allow(clippy::too_many_arguments)]
fn row_from(
    inst: &BenchInstance,
    method: &str,
    budget: Option<f64>,
    duration: f64,
    steps: usize,
    compile_seconds: f64,
    gap: Option<f64>,
    proven_optimal: Option<bool>,
) -> InstanceRow {
    InstanceRow {
        instance: inst.name.clone(),
        method: method.into(),
        budget,
        duration,
        steps,
        compile_seconds,
        gap,
        proven_optimal,
        steps_per_gate: duration / inst.circuit.len().max(1) as f64,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_specs_parse() {
        assert_eq!("qv:6:100".parse::<SuiteSpec>().unwrap(), SuiteSpec::Qv { n: 6, count: 100 });
        assert_eq!(
            "random:4:6:50".parse::<SuiteSpec>().unwrap(),
            SuiteSpec::Random { qubits: 4, gates: 6, count: 50 }
        );
        assert!("qv:6".parse::<SuiteSpec>().is_err());
        assert!("qv:x:1".parse::<SuiteSpec>().is_err());
    }

    #[test]
    fn suites_are_seed_deterministic() {
        let spec = ChipSpec::x_chip(3).unwrap();
        let a = make_suite(&spec, SuiteSpec::Qv { n: 4, count: 5 }, 9).unwrap();
        let b = make_suite(&spec, SuiteSpec::Qv { n: 4, count: 5 }, 9).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.circuit, y.circuit);
            assert_eq!(x.placement, y.placement);
        }
        let c = make_suite(&spec, SuiteSpec::Qv { n: 4, count: 5 }, 10).unwrap();
        assert!(a.iter().zip(&c).any(|(x, y)| x.circuit != y.circuit));
    }

    #[test]
    fn identical_instances_give_zero_width_intervals() {
        let spec = Arc::new(ChipSpec::x_chip(2).unwrap());
        let circuit = Circuit::from_pairs(&[(1, 2)]).unwrap();
        let placement = spec.default_placement(2).unwrap();
        let instances: Vec<BenchInstance> = (0..6)
            .map(|i| BenchInstance {
                name: format!("same-{i}"),
                circuit: circuit.clone(),
                placement: placement.clone(),
            })
            .collect();
        let cfg = BenchConfig {
            methods: vec![Method::Heuristic, Method::Exact],
            bootstrap_draws: 500,
            ..Default::default()
        };
        let report = bench(&spec, &instances, None, &cfg).unwrap();
        for agg in &report.aggregates {
            assert_eq!(agg.duration_ci.0, agg.duration_ci.1);
            assert_eq!(agg.duration_ci.0, agg.mean_duration);
        }
        // exact rows have zero gap against themselves
        let exact = report.aggregates.iter().find(|a| a.method == "exact").unwrap();
        assert_eq!(exact.mean_gap, Some(0.0));
        let hist = exact.gap_histogram.unwrap();
        assert_eq!(hist.zero, 6);
    }

    #[test]
    fn report_is_byte_reproducible() {
        let spec = Arc::new(ChipSpec::x_chip(2).unwrap());
        let instances = make_suite(&spec, SuiteSpec::Random { qubits: 3, gates: 3, count: 4 }, 3).unwrap();
        let cfg = BenchConfig {
            methods: vec![Method::Heuristic, Method::Exact],
            bootstrap_draws: 200,
            ..Default::default()
        };
        let a = bench(&spec, &instances, None, &cfg).unwrap();
        let b = bench(&spec, &instances, None, &cfg).unwrap();
        // compile_seconds are wall-clock and excluded from the comparison
        let strip = |r: &BenchReport| {
            r.rows
                .iter()
                .map(|x| (x.instance.clone(), x.method.clone(), x.duration, x.steps, x.gap))
                .collect::<Vec<_>>()
        };
        assert_eq!(strip(&a), strip(&b));
        assert_eq!(
            a.aggregates.iter().map(|x| x.duration_ci).collect::<Vec<_>>(),
            b.aggregates.iter().map(|x| x.duration_ci).collect::<Vec<_>>()
        );
        assert!(a.to_csv().starts_with("instance,method"));
    }

    #[test]
    fn heuristic_rows_carry_gaps_when_oracle_proves() {
        let spec = Arc::new(ChipSpec::x_chip(2).unwrap());
        let instances = make_suite(&spec, SuiteSpec::Random { qubits: 3, gates: 3, count: 5 }, 5).unwrap();
        let cfg = BenchConfig {
            methods: vec![Method::Exact, Method::Heuristic],
            bootstrap_draws: 100,
            ..Default::default()
        };
        let report = bench(&spec, &instances, None, &cfg).unwrap();
        for row in report.rows.iter().filter(|r| r.method == "heuristic") {
            let g = row.gap.expect("oracle proved all tiny instances");
            assert!(g >= 0.0);
        }
    }
}
