//! Two-qubit interaction circuits and their dependency DAG.
//!
//! A circuit is an ordered gate sequence; gates commute exactly when they
//! act on disjoint qubit pairs. The DAG links each gate to the previous
//! gate touching either of its operands, and a gate's depth is the length
//! of its longest chain of unexecuted predecessors. Depth-0 gates form the
//! front layer and become executable once both operands sit in the compute
//! zone; execution itself is free bookkeeping — only shuttling costs time.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::chip::{ChipSpec, ChipState, Qubit};
use crate::error::{Error, Result};

/// One two-qubit gate acting on distinct qubits `x` and `y`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Gate {
    pub x: Qubit,
    pub y: Qubit,
}

impl Gate {
    pub fn new(x: Qubit, y: Qubit) -> Result<Self> {
        if x == y {
            return Err(Error::InvalidCircuit(format!("gate ({x}, {y}) acts twice on one qubit")));
        }
        if x == 0 || y == 0 {
            return Err(Error::InvalidCircuit("qubit labels are 1-based".into()));
        }
        Ok(Gate { x, y })
    }

    pub fn touches(&self, q: Qubit) -> bool {
        self.x == q || self.y == q
    }

    /// The other operand, if `q` is one of the two.
    pub fn partner(&self, q: Qubit) -> Option<Qubit> {
        if self.x == q {
            Some(self.y)
        } else if self.y == q {
            Some(self.x)
        } else {
            None
        }
    }

    /// True when the two gates share no operand (they commute).
    pub fn disjoint(&self, other: &Gate) -> bool {
        !other.touches(self.x) && !other.touches(self.y)
    }
}

/// An ordered sequence of two-qubit gates over qubits `1..=num_qubits`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Circuit {
    gates: Vec<Gate>,
    num_qubits: u16,
}

impl Circuit {
    pub fn new(pairs: &[(Qubit, Qubit)], num_qubits: u16) -> Result<Self> {
        let mut gates = Vec::with_capacity(pairs.len());
        for &(x, y) in pairs {
            let g = Gate::new(x, y)?;
            if g.x > num_qubits || g.y > num_qubits {
                return Err(Error::InvalidCircuit(format!(
                    "gate ({}, {}) references a qubit above {num_qubits}",
                    g.x, g.y
                )));
            }
            gates.push(g);
        }
        Ok(Circuit { gates, num_qubits })
    }

    /// Builds a circuit inferring `num_qubits` from the largest label.
    pub fn from_pairs(pairs: &[(Qubit, Qubit)]) -> Result<Self> {
        let n = pairs.iter().map(|&(x, y)| x.max(y)).max().unwrap_or(0);
        Self::new(pairs, n)
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    pub fn num_qubits(&self) -> u16 {
        self.num_qubits
    }

    pub fn len(&self) -> usize {
        self.gates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gates.is_empty()
    }

    /// Parses the text format: one `x y` gate per line, `#` comments.
    pub fn parse(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut fields = line.split_whitespace();
            let parse_field = |f: Option<&str>| -> Result<Qubit> {
                f.and_then(|s| s.parse().ok()).ok_or_else(|| {
                    Error::Parse(format!("line {}: expected 'x y' integers", lineno + 1))
                })
            };
            let x = parse_field(fields.next())?;
            let y = parse_field(fields.next())?;
            if fields.next().is_some() {
                return Err(Error::Parse(format!("line {}: trailing fields", lineno + 1)));
            }
            pairs.push((x, y));
        }
        Self::from_pairs(&pairs)
    }

    /// Renders the text format.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for g in &self.gates {
            out.push_str(&format!("{} {}\n", g.x, g.y));
        }
        out
    }

    /// Builds the dependency DAG for this circuit.
    pub fn dag(&self) -> GateDag {
        GateDag::build(self)
    }
}

/// Dependency DAG with per-gate depth and execution bookkeeping.
///
/// Edges follow the per-qubit chain: each gate depends on the previous
/// gate touching either operand. Depths are maintained over the
/// *unexecuted* gates only, so the front layer is exactly `depth == 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateDag {
    gates: Vec<Gate>,
    num_qubits: u16,
    preds: Vec<Vec<usize>>,
    succs: Vec<Vec<usize>>,
    depth: Vec<u32>,
    executed: Vec<bool>,
    remaining: usize,
}

impl GateDag {
    fn build(circuit: &Circuit) -> Self {
        let n = circuit.gates.len();
        let mut preds = vec![Vec::new(); n];
        let mut succs = vec![Vec::new(); n];
        let mut last: Vec<Option<usize>> = vec![None; circuit.num_qubits as usize + 1];
        for (i, g) in circuit.gates.iter().enumerate() {
            for q in [g.x, g.y] {
                if let Some(p) = last[q as usize] {
                    if !preds[i].contains(&p) {
                        preds[i].push(p);
                        succs[p].push(i);
                    }
                }
                last[q as usize] = Some(i);
            }
        }
        let mut dag = GateDag {
            gates: circuit.gates.clone(),
            num_qubits: circuit.num_qubits,
            preds,
            succs,
            depth: vec![0; n],
            executed: vec![false; n],
            remaining: n,
        };
        dag.recompute_depths();
        dag
    }

    fn recompute_depths(&mut self) {
        // Gate indices are already a topological order.
        for i in 0..self.gates.len() {
            if self.executed[i] {
                continue;
            }
            self.depth[i] = self.preds[i]
                .iter()
                .filter(|&&p| !self.executed[p])
                .map(|&p| self.depth[p] + 1)
                .max()
                .unwrap_or(0);
        }
    }

    pub fn num_gates(&self) -> usize {
        self.gates.len()
    }

    pub fn num_qubits(&self) -> u16 {
        self.num_qubits
    }

    pub fn gate(&self, id: usize) -> Gate {
        self.gates[id]
    }

    /// Number of unexecuted gates.
    pub fn remaining(&self) -> usize {
        self.remaining
    }

    pub fn is_done(&self) -> bool {
        self.remaining == 0
    }

    pub fn is_executed(&self, id: usize) -> bool {
        self.executed[id]
    }

    /// Depth of an unexecuted gate (0 = front layer).
    pub fn depth_of(&self, id: usize) -> u32 {
        self.depth[id]
    }

    pub fn predecessors(&self, id: usize) -> &[usize] {
        &self.preds[id]
    }

    /// Unexecuted gates in sequence order.
    pub fn remaining_gates(&self) -> impl Iterator<Item = (usize, Gate)> + '_ {
        self.gates
            .iter()
            .enumerate()
            .filter(|(i, _)| !self.executed[*i])
            .map(|(i, g)| (i, *g))
    }

    /// Front layer: unexecuted gates whose predecessors are all executed.
    pub fn front_layer(&self) -> Vec<usize> {
        (0..self.gates.len())
            .filter(|&i| !self.executed[i] && self.depth[i] == 0)
            .collect()
    }

    /// Front-layer gates whose both operands currently occupy compute cells.
    pub fn executable_gates(&self, spec: &ChipSpec, state: &ChipState) -> Vec<usize> {
        let compute = state.zone_qubits(spec, spec.compute_zone());
        self.front_layer()
            .into_iter()
            .filter(|&i| compute.contains(&self.gates[i].x) && compute.contains(&self.gates[i].y))
            .collect()
    }

    /// Marks a front-layer gate as executed and recomputes depths.
    pub fn execute_gate(&mut self, id: usize) -> Result<()> {
        if id >= self.gates.len() || self.executed[id] || self.depth[id] != 0 {
            return Err(Error::DependencyViolation { gate: id });
        }
        self.executed[id] = true;
        self.remaining -= 1;
        self.recompute_depths();
        Ok(())
    }
}

/// Builds the dependency DAG (free-function form of [`Circuit::dag`]).
pub fn build_dag(circuit: &Circuit) -> GateDag {
    circuit.dag()
}

/// Samples a training problem: ion count `z ~ Uniform{2..n_max}`, a
/// binomially drawn gate count with mean `(z/n_max)·n_gates_budget`,
/// uniform random gates over the live qubits, and the qubits compacted
/// onto a random storage element in label order from the junction out.
pub fn generate_random_problem<R: Rng>(
    spec: &ChipSpec,
    n_gates_budget: usize,
    rng: &mut R,
) -> Result<(Circuit, ChipState)> {
    let n_max = spec.n_max() as u16;
    debug_assert!(n_max >= 2);
    let z = rng.random_range(2..=n_max);
    let binom = Binomial::new(n_gates_budget as u64, f64::from(z) / f64::from(n_max))
        .expect("probability in [0, 1]");
    let count = binom.sample(rng) as usize;
    let mut pairs = Vec::with_capacity(count);
    for _ in 0..count {
        let x = rng.random_range(1..=z);
        let mut y = rng.random_range(1..=z - 1);
        if y >= x {
            y += 1;
        }
        pairs.push((x, y));
    }
    let circuit = Circuit::new(&pairs, z)?;
    let storages = spec.storage_zones();
    let zone = storages[rng.random_range(0..storages.len())];
    let placement = spec.place_qubits(z as usize, zone)?;
    Ok((circuit, placement))
}

/// Generates a quantum-volume circuit: `n` layers, each pairing a fresh
/// uniform permutation of `1..=n` into `⌊n/2⌋` gates.
pub fn generate_qv_circuit<R: Rng>(n: u16, rng: &mut R) -> Result<Circuit> {
    if n < 2 {
        return Err(Error::InvalidCircuit("QV circuits need at least 2 qubits".into()));
    }
    let mut pairs = Vec::with_capacity(usize::from(n) * usize::from(n / 2));
    let mut perm: Vec<Qubit> = (1..=n).collect();
    for _ in 0..n {
        perm.shuffle(rng);
        for pair in perm.chunks_exact(2) {
            pairs.push((pair[0], pair[1]));
        }
    }
    Circuit::new(&pairs, n)
}
