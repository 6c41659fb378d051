//! Reference compilers: a greedy windowed heuristic and an exact
//! shortest-schedule search.
//!
//! Both emit the same [`Schedule`] type as the learned compiler, and every
//! schedule replays exactly through the simulator: same durations, same
//! gate executions, terminal at the end.
//!
//! The heuristic serializes the dependency graph into candidate orderings
//! of the next few gates, greedily orchestrates ions for each ordering,
//! and commits the cheapest window. The exact compiler runs uniform-cost
//! search over canonicalized states; unlike fixed-horizon encodings it
//! supports non-uniform step durations out of the box.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap, VecDeque};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::chip::{ActionDef, ChipFamily, ChipSpec, ChipState, Direction, Qubit, X_STORAGE_A, X_STORAGE_B};
use crate::circuit::Circuit;
use crate::env::{RewardConfig, ShuttleEnv};
use crate::error::{Error, Result};

/// Default window length (gates per serialization step).
pub const DEFAULT_WINDOW: usize = 4;
/// Default number of candidate orderings per window.
pub const DEFAULT_CANDIDATES: usize = 8;

/// One executed action within a schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleEntry {
    pub action: usize,
    pub label: String,
    pub duration: f64,
    /// Gates that executed right after this action.
    pub gates_executed: u32,
}

/// An ordered shuttling schedule with bookkeeping totals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub method: String,
    pub entries: Vec<ScheduleEntry>,
    pub total_duration: f64,
    pub compile_seconds: f64,
}

impl Schedule {
    pub fn steps(&self) -> usize {
        self.entries.len()
    }
}

/// Result of the exact search.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OracleResult {
    pub schedule: Schedule,
    /// True when the search proved no shorter schedule exists.
    pub proven_optimal: bool,
    pub expanded_states: usize,
}

/// Node/time limits for [`exact_compile`].
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SearchBudget {
    pub max_expanded: usize,
    pub max_seconds: f64,
}

impl Default for SearchBudget {
    fn default() -> Self {
        SearchBudget { max_expanded: 2_000_000, max_seconds: 120.0 }
    }
}

fn fresh_env(spec: &Arc<ChipSpec>, circuit: &Circuit, placement: &ChipState) -> Result<ShuttleEnv> {
    // Shaping plays no role here; only durations and terminality matter.
    ShuttleEnv::new(spec.clone(), RewardConfig::default(), circuit, placement.clone())
}

/// Replays `actions` from the initial placement and records the schedule.
pub fn replay_into_schedule(
    spec: &Arc<ChipSpec>,
    circuit: &Circuit,
    placement: &ChipState,
    actions: &[usize],
    method: &str,
) -> Result<Schedule> {
    let mut env = fresh_env(spec, circuit, placement)?;
    let mut entries = Vec::with_capacity(actions.len());
    for &action in actions {
        let r = env.step(action)?;
        entries.push(ScheduleEntry {
            action,
            label: spec.action_label(action),
            duration: r.duration,
            gates_executed: r.gates_executed,
        });
    }
    if !env.is_terminal() {
        return Err(Error::InvalidState(
            "recorded action sequence does not finish the circuit".into(),
        ));
    }
    Ok(Schedule {
        method: method.into(),
        entries,
        total_duration: env.elapsed(),
        compile_seconds: 0.0,
    })
}

/// Checks the replay invariant: the recorded actions reproduce exactly
/// the recorded durations and gate executions and end terminal.
pub fn replay_schedule(
    spec: &Arc<ChipSpec>,
    circuit: &Circuit,
    placement: &ChipState,
    schedule: &Schedule,
) -> Result<()> {
    let mut env = fresh_env(spec, circuit, placement)?;
    for (i, entry) in schedule.entries.iter().enumerate() {
        let r = env.step(entry.action)?;
        if r.duration != entry.duration || r.gates_executed != entry.gates_executed {
            return Err(Error::InvalidState(format!(
                "schedule entry {i} does not replay (duration {} vs {}, gates {} vs {})",
                r.duration, entry.duration, r.gates_executed, entry.gates_executed
            )));
        }
    }
    if !env.is_terminal() {
        return Err(Error::InvalidState("schedule replay ends before the circuit is done".into()));
    }
    if env.elapsed() != schedule.total_duration {
        return Err(Error::InvalidState(format!(
            "total duration {} does not replay to {}",
            schedule.total_duration,
            env.elapsed()
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Greedy heuristic
// ---------------------------------------------------------------------------

/// Windowed greedy compiler.
///
/// Repeatedly serializes up to `window` front-reachable gates into at most
/// `candidates` orderings respecting the partial order, orchestrates ions
/// greedily for each ordering, and commits the cheapest window.
pub fn heuristic_compile(
    spec: &Arc<ChipSpec>,
    circuit: &Circuit,
    placement: &ChipState,
    window: usize,
    candidates: usize,
) -> Result<Schedule> {
    let started = std::time::Instant::now();
    let mut env = fresh_env(spec, circuit, placement)?;
    let mut committed: Vec<usize> = Vec::new();
    while !env.is_terminal() {
        let orderings = candidate_orderings(&env, window, candidates);
        debug_assert!(!orderings.is_empty());
        let mut best: Option<(f64, Vec<usize>)> = None;
        for ordering in orderings {
            let mut probe = env.clone();
            let actions = orchestrate_window(&mut probe, &ordering)?;
            let cost = actions.iter().map(|&(_, d)| d).sum::<f64>();
            // strict less-than keeps the first (lexicographic) ordering on ties
            if best.as_ref().is_none_or(|(c, _)| cost < *c) {
                best = Some((cost, actions.into_iter().map(|(a, _)| a).collect()));
            }
        }
        let (_, actions) = best.expect("at least one candidate ordering");
        for action in actions {
            env.step(action)?;
            committed.push(action);
        }
    }
    let mut schedule = replay_into_schedule(spec, circuit, placement, &committed, "heuristic")?;
    schedule.compile_seconds = started.elapsed().as_secs_f64();
    Ok(schedule)
}

/// Up to `limit` orderings of the next `window` gates, each a linear
/// extension prefix of the dependency DAG. The first two positions vary
/// over the front layer (ascending gate id); the rest follow the smallest
/// available id, so candidates are generated in lexicographic order.
fn candidate_orderings(env: &ShuttleEnv, window: usize, limit: usize) -> Vec<Vec<usize>> {
    let take = window.min(env.dag().remaining()).max(1);
    let mut out: Vec<Vec<usize>> = Vec::new();
    let front = env.dag().front_layer();
    for &first in &front {
        if out.len() >= limit {
            break;
        }
        let mut dag2 = env.dag().clone();
        dag2.execute_gate(first).expect("front gate");
        let mut seconds: Vec<Option<usize>> = dag2.front_layer().into_iter().map(Some).collect();
        if seconds.is_empty() || take == 1 {
            seconds = vec![None];
        }
        for second in seconds {
            if out.len() >= limit {
                break;
            }
            let mut ordering = vec![first];
            let mut dag3 = dag2.clone();
            if let Some(s) = second {
                ordering.push(s);
                dag3.execute_gate(s).expect("front gate");
            }
            while ordering.len() < take {
                match dag3.front_layer().first().copied() {
                    Some(g) => {
                        dag3.execute_gate(g).expect("front gate");
                        ordering.push(g);
                    }
                    None => break,
                }
            }
            if !out.contains(&ordering) {
                out.push(ordering);
            }
        }
    }
    out
}

/// Orchestrates the given gate ordering on a probe env, returning the
/// emitted `(action, duration)` list. Gates may execute out of order when
/// the simulator's automatic execution fires opportunistically.
fn orchestrate_window(env: &mut ShuttleEnv, ordering: &[usize]) -> Result<Vec<(usize, f64)>> {
    let mut actions = Vec::new();
    for &gate in ordering {
        if env.dag().is_executed(gate) {
            continue;
        }
        orchestrate_gate(env, gate, &mut actions)?;
    }
    Ok(actions)
}

/// Emits actions until `gate` has executed.
fn orchestrate_gate(env: &mut ShuttleEnv, gate: usize, actions: &mut Vec<(usize, f64)>) -> Result<()> {
    let limit = 16 * env.spec().n_cells() + 64;
    let mut taken = 0;
    while !env.dag().is_executed(gate) {
        if taken >= limit {
            return Err(Error::InvalidState(format!(
                "ion orchestration for gate {gate} did not converge"
            )));
        }
        let action = match env.spec().family() {
            ChipFamily::X => next_x_action(env, gate),
            ChipFamily::Q => next_q_action(env, gate),
        };
        let r = env.step(action)?;
        actions.push((action, r.duration));
        taken += 1;
    }
    Ok(())
}

fn x_action(spec: &ChipSpec, from: usize, to: usize) -> usize {
    spec.actions()
        .iter()
        .position(|a| matches!(a, ActionDef::MoveAcrossJunction { from: f, to: t } if *f == from && *t == to))
        .expect("X-chip action table")
}

/// Storage zone with the most free slots (tie: storage A), excluding
/// `avoid`; falls back to SPAM, then to any non-compute zone with space.
fn roomiest_parking(env: &ShuttleEnv, avoid: Option<usize>) -> usize {
    let spec = env.spec();
    let compute = spec.compute_zone();
    let free = |z: usize| spec.zones()[z].capacity - env.state().zone_occupancy(spec, z);
    let mut storages: Vec<usize> = [X_STORAGE_A, X_STORAGE_B]
        .into_iter()
        .filter(|z| Some(*z) != avoid && free(*z) > 0)
        .collect();
    storages.sort_by_key(|&z| (std::cmp::Reverse(free(z)), z));
    if let Some(&z) = storages.first() {
        return z;
    }
    let spam = crate::chip::X_SPAM;
    if Some(spam) != avoid && free(spam) > 0 {
        return spam;
    }
    // Exhausted parking means enough free cells only exist in `avoid` or
    // compute; the caller handles the compute fallback.
    (0..spec.zones().len())
        .find(|&z| z != compute && Some(z) != avoid && free(z) > 0)
        .unwrap_or(compute)
}

/// One greedy step toward executing `gate` on the X-chip.
///
/// Order of business: clear the compute zone of ions the gate does not
/// need (parking the needed head ion first when it blocks the way), then
/// dig the needed ion closest to its junction out of its register and move
/// it across.
fn next_x_action(env: &ShuttleEnv, gate: usize) -> usize {
    let spec = env.spec();
    let state = env.state();
    let g = env.dag().gate(gate);
    let compute = spec.compute_zone();
    let compute_ions = state.zone_qubits(spec, compute);
    let needs = |q: Qubit| g.touches(q);

    if compute_ions.iter().any(|q| !needs(*q)) {
        let head = compute_ions[0];
        if !needs(head) {
            // evict toward the roomiest storage (tie: storage A)
            return x_action(spec, compute, roomiest_parking(env, None));
        }
        // park the needed head so the evictee surfaces
        let spam = crate::chip::X_SPAM;
        let spam_free = env.state().zone_occupancy(spec, spam) < spec.zones()[spam].capacity;
        let to = if spam_free { spam } else { roomiest_parking(env, None) };
        return x_action(spec, compute, to);
    }

    // compute now holds only needed ions; fetch the missing one(s)
    let mut outside: Vec<(usize, usize, Qubit)> = [g.x, g.y]
        .into_iter()
        .filter(|q| !compute_ions.contains(q))
        .map(|q| {
            let cell = state.cell_of(q).expect("operand on chip");
            let zone = spec.zone_of_cell(cell);
            let depth = cell - spec.zone_cells(zone).start;
            (depth, zone, q)
        })
        .collect();
    outside.sort_by_key(|(depth, _, q)| (*depth, *q));
    let (depth, zone, _) = outside[0];
    if depth == 0 {
        return x_action(spec, zone, compute);
    }
    // dig: the register head blocks; needed heads go straight to compute
    let head = state.zone_qubits(spec, zone)[0];
    if needs(head) {
        return x_action(spec, zone, compute);
    }
    let parking = roomiest_parking(env, Some(zone));
    x_action(spec, zone, parking)
}

/// One greedy step toward executing `gate` on the Q-chip.
///
/// All traffic routes through the junction ring slot: strangers in compute
/// are popped into the ring (rotating first when the slot is taken), then
/// the cheaper-to-reach missing operand is rotated to the junction and
/// transferred in; operands stuck in SPAM detour through the ring.
fn next_q_action(env: &ShuttleEnv, gate: usize) -> usize {
    use crate::chip::{Q_RING, Q_SPAM};
    let spec = env.spec();
    let state = env.state();
    let g = env.dag().gate(gate);
    let compute = spec.compute_zone();
    let needs = |q: Qubit| g.touches(q);
    let action_idx = |def: ActionDef| {
        spec.actions()
            .iter()
            .position(|a| *a == def)
            .expect("Q-chip action table")
    };
    let rotate_cw = action_idx(ActionDef::RotateRing { dir: Direction::Cw });
    let junction = spec.ring_junction_cell();
    let junction_free = state.qubit_at(junction).is_none();

    let compute_ions = state.zone_qubits(spec, compute);
    if compute_ions.iter().any(|q| !needs(*q)) {
        if junction_free {
            return action_idx(ActionDef::MoveZoneToRing { from: compute });
        }
        return rotate_cw;
    }

    // fetch the cheaper missing operand; ring ions cost their rotation
    // distance, SPAM ions pay the detour through the junction slot
    let ring = spec.zone_cells(Q_RING);
    let rotation_cost = |cell: usize| {
        let idx = cell - ring.start;
        idx.min(ring.len() - idx)
    };
    let mut outside: Vec<(usize, Qubit, usize)> = [g.x, g.y]
        .into_iter()
        .filter(|q| !compute_ions.contains(q))
        .map(|q| {
            let cell = state.cell_of(q).expect("operand on chip");
            let cost = if spec.zone_of_cell(cell) == Q_RING {
                rotation_cost(cell) + 1
            } else {
                ring.len() + 2
            };
            (cost, q, cell)
        })
        .collect();
    outside.sort();
    let (_, _, cell) = outside[0];
    if spec.zone_of_cell(cell) == Q_SPAM {
        if junction_free {
            return action_idx(ActionDef::MoveZoneToRing { from: Q_SPAM });
        }
        if needs(state.qubit_at(junction).unwrap()) {
            return action_idx(ActionDef::MoveRingToZone { to: compute });
        }
        return rotate_cw;
    }
    if cell == junction {
        return action_idx(ActionDef::MoveRingToZone { to: compute });
    }
    // rotate the shorter way round (tie: counter-clockwise brings lower
    // indices to the junction)
    let idx = cell - ring.start;
    if idx <= ring.len() - idx {
        action_idx(ActionDef::RotateRing { dir: Direction::Ccw })
    } else {
        rotate_cw
    }
}

// ---------------------------------------------------------------------------
// Exact search
// ---------------------------------------------------------------------------

/// Search key: the cell table with qubits renamed by first use in the
/// remaining circuit (spectators collapse to one marker), plus the
/// executed-gate bitmask. Relabeling-equivalent states collide on purpose.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CanonicalKey {
    cells: Vec<u16>,
    executed: u64,
}

const SPECTATOR: u16 = u16::MAX;

/// Canonicalizes a search state for `circuit` under `executed`.
pub fn canonical_key(
    spec: &ChipSpec,
    circuit: &Circuit,
    state: &ChipState,
    executed: u64,
) -> CanonicalKey {
    let mut rename: HashMap<Qubit, u16> = HashMap::new();
    let mut next = 1u16;
    for (i, gate) in circuit.gates().iter().enumerate() {
        if executed & (1 << i) != 0 {
            continue;
        }
        for q in [gate.x, gate.y] {
            rename.entry(q).or_insert_with(|| {
                let r = next;
                next += 1;
                r
            });
        }
    }
    let cells = (0..spec.n_cells())
        .map(|c| match state.qubit_at(c) {
            None => 0,
            Some(q) => *rename.get(&q).unwrap_or(&SPECTATOR),
        })
        .collect();
    CanonicalKey { cells, executed }
}

/// Front-layer test on the raw bitmask: no earlier unexecuted gate shares
/// an operand.
fn is_front(circuit: &Circuit, executed: u64, i: usize) -> bool {
    let g = circuit.gates()[i];
    for j in 0..i {
        if executed & (1 << j) != 0 {
            continue;
        }
        let h = circuit.gates()[j];
        if h.touches(g.x) || h.touches(g.y) {
            return false;
        }
    }
    true
}

/// Executes every executable front gate to a fixpoint on the bitmask.
fn auto_execute_mask(spec: &ChipSpec, circuit: &Circuit, state: &ChipState, executed: u64) -> u64 {
    let compute = state.zone_qubits(spec, spec.compute_zone());
    let mut mask = executed;
    loop {
        let mut progressed = false;
        for i in 0..circuit.len() {
            if mask & (1 << i) != 0 {
                continue;
            }
            let g = circuit.gates()[i];
            if compute.contains(&g.x) && compute.contains(&g.y) && is_front(circuit, mask, i) {
                mask |= 1 << i;
                progressed = true;
            }
        }
        if !progressed {
            return mask;
        }
    }
}

#[derive(PartialEq)]
struct QueueEntry {
    cost: f64,
    seq: u64,
    node: usize,
}

impl Eq for QueueEntry {}

impl Ord for QueueEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on (cost, insertion order)
        other
            .cost
            .total_cmp(&self.cost)
            .then(other.seq.cmp(&self.seq))
    }
}

impl PartialOrd for QueueEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

struct SearchNode {
    state: ChipState,
    executed: u64,
    parent: Option<(usize, usize)>,
}

/// Uniform-cost search for a provably shortest schedule.
///
/// Supports non-uniform durations (Q-chip fast rotations). States are
/// deduplicated under qubit relabeling via [`canonical_key`]. When the
/// budget runs out before the goal is popped, the greedy heuristic's
/// schedule is returned as the incumbent with `proven_optimal = false`.
pub fn exact_compile(
    spec: &Arc<ChipSpec>,
    circuit: &Circuit,
    placement: &ChipState,
    budget: SearchBudget,
) -> Result<OracleResult> {
    if circuit.len() > 63 {
        return Err(Error::InvalidCircuit(
            "exact search supports at most 63 gates".into(),
        ));
    }
    let started = std::time::Instant::now();
    // run the start state through the env so pre-executable gates clear
    let env = fresh_env(spec, circuit, placement)?;
    let goal = (1u64 << circuit.len()) - 1;
    let start_mask = {
        let mut m = 0u64;
        for i in 0..circuit.len() {
            if env.dag().is_executed(i) {
                m |= 1 << i;
            }
        }
        m
    };

    let mut nodes = vec![SearchNode {
        state: env.state().clone(),
        executed: start_mask,
        parent: None,
    }];
    let mut best: HashMap<CanonicalKey, f64> = HashMap::new();
    best.insert(canonical_key(spec, circuit, env.state(), start_mask), 0.0);
    let mut heap = BinaryHeap::new();
    heap.push(QueueEntry { cost: 0.0, seq: 0, node: 0 });
    let mut seq = 0u64;
    let mut expanded = 0usize;

    while let Some(QueueEntry { cost, node, .. }) = heap.pop() {
        let (state, executed) = (nodes[node].state.clone(), nodes[node].executed);
        let key = canonical_key(spec, circuit, &state, executed);
        if best.get(&key).is_some_and(|c| cost > *c) {
            continue;
        }
        if executed == goal {
            let mut actions = VecDeque::new();
            let mut cur = node;
            while let Some((parent, action)) = nodes[cur].parent {
                actions.push_front(action);
                cur = parent;
            }
            let actions: Vec<usize> = actions.into();
            let mut schedule = replay_into_schedule(spec, circuit, placement, &actions, "exact")?;
            schedule.compile_seconds = started.elapsed().as_secs_f64();
            return Ok(OracleResult { schedule, proven_optimal: true, expanded_states: expanded });
        }
        expanded += 1;
        if expanded > budget.max_expanded || started.elapsed().as_secs_f64() > budget.max_seconds {
            let mut incumbent =
                heuristic_compile(spec, circuit, placement, DEFAULT_WINDOW, DEFAULT_CANDIDATES)?;
            incumbent.method = "exact-budget-incumbent".into();
            incumbent.compile_seconds = started.elapsed().as_secs_f64();
            return Ok(OracleResult {
                schedule: incumbent,
                proven_optimal: false,
                expanded_states: expanded,
            });
        }
        for action in spec.legal_actions(&state) {
            let (next_state, duration) = spec.apply(&state, action)?;
            let next_mask = auto_execute_mask(spec, circuit, &next_state, executed);
            let next_cost = cost + duration;
            let next_key = canonical_key(spec, circuit, &next_state, next_mask);
            if best.get(&next_key).is_none_or(|c| next_cost < *c) {
                best.insert(next_key, next_cost);
                nodes.push(SearchNode {
                    state: next_state,
                    executed: next_mask,
                    parent: Some((node, action)),
                });
                seq += 1;
                heap.push(QueueEntry { cost: next_cost, seq, node: nodes.len() - 1 });
            }
        }
    }
    // legal actions always exist, so an empty heap means the start was terminal
    let schedule = Schedule {
        method: "exact".into(),
        entries: Vec::new(),
        total_duration: 0.0,
        compile_seconds: started.elapsed().as_secs_f64(),
    };
    Ok(OracleResult { schedule, proven_optimal: true, expanded_states: expanded })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circuit::generate_random_problem;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashSet;

    fn x2() -> Arc<ChipSpec> {
        Arc::new(ChipSpec::x_chip(2).unwrap()) // 7 cells, 4 qubits max
    }

    /// Breadth-first search over raw (cells, mask) states; valid as an
    /// optimality oracle because X-chip durations are uniformly 1.0.
    fn bfs_optimum(spec: &Arc<ChipSpec>, circuit: &Circuit, placement: &ChipState) -> f64 {
        let env = fresh_env(spec, circuit, placement).unwrap();
        let start_mask = (0..circuit.len())
            .filter(|&i| env.dag().is_executed(i))
            .fold(0u64, |m, i| m | 1 << i);
        let goal = (1u64 << circuit.len()) - 1;
        if start_mask == goal {
            return 0.0;
        }
        let mut seen: HashSet<(Vec<Option<Qubit>>, u64)> = HashSet::new();
        seen.insert((env.state().cells().to_vec(), start_mask));
        let mut queue = VecDeque::new();
        queue.push_back((env.state().clone(), start_mask, 0usize));
        while let Some((state, mask, depth)) = queue.pop_front() {
            for action in spec.legal_actions(&state) {
                let (next, d) = spec.apply(&state, action).unwrap();
                assert_eq!(d, 1.0);
                let next_mask = auto_execute_mask(spec, circuit, &next, mask);
                if next_mask == goal {
                    return (depth + 1) as f64;
                }
                let key = (next.cells().to_vec(), next_mask);
                if seen.insert(key) {
                    queue.push_back((next, next_mask, depth + 1));
                }
            }
        }
        unreachable!("every instance is solvable");
    }

    /// Plain depth-first enumeration of every action sequence up to
    /// `max_len`, no deduplication at all.
    fn dfs_all_sequences(
        spec: &Arc<ChipSpec>,
        circuit: &Circuit,
        state: &ChipState,
        mask: u64,
        max_len: usize,
    ) -> Option<usize> {
        let goal = (1u64 << circuit.len()) - 1;
        if mask == goal {
            return Some(0);
        }
        if max_len == 0 {
            return None;
        }
        let mut best = None;
        for action in spec.legal_actions(state) {
            let (next, _) = spec.apply(state, action).unwrap();
            let next_mask = auto_execute_mask(spec, circuit, &next, mask);
            if let Some(rest) = dfs_all_sequences(spec, circuit, &next, next_mask, max_len - 1) {
                let total = rest + 1;
                if best.is_none_or(|b| total < b) {
                    best = Some(total);
                }
            }
        }
        best
    }

    #[test]
    fn zero_gates_yield_empty_optimal_schedule() {
        let spec = x2();
        let circuit = Circuit::new(&[], 2).unwrap();
        let placement = spec.default_placement(2).unwrap();
        let r = exact_compile(&spec, &circuit, &placement, SearchBudget::default()).unwrap();
        assert!(r.proven_optimal);
        assert!(r.schedule.entries.is_empty());
        assert_eq!(r.schedule.total_duration, 0.0);
    }

    #[test]
    fn two_ions_one_gate_needs_two_junction_crossings() {
        let spec = x2();
        let circuit = Circuit::from_pairs(&[(1, 2)]).unwrap();
        let placement = spec.default_placement(2).unwrap(); // both in storage A
        let r = exact_compile(&spec, &circuit, &placement, SearchBudget::default()).unwrap();
        assert!(r.proven_optimal);
        assert_eq!(r.schedule.total_duration, 2.0);
        // exhaustive enumeration of all schedules up to length 4 agrees
        let env = fresh_env(&spec, &circuit, &placement).unwrap();
        let brute = dfs_all_sequences(&spec, &circuit, env.state(), 0, 4).unwrap();
        assert_eq!(brute, 2);
        replay_schedule(&spec, &circuit, &placement, &r.schedule).unwrap();
    }

    #[test]
    fn exact_matches_bfs_on_random_small_instances() {
        let spec = x2();
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let mut done = 0;
        while done < 60 {
            let z = rng.random_range(2..=3u16);
            let n_gates = rng.random_range(1..=4usize);
            let mut pairs = Vec::new();
            for _ in 0..n_gates {
                let x = rng.random_range(1..=z);
                let mut y = rng.random_range(1..=z - 1);
                if y >= x {
                    y += 1;
                }
                pairs.push((x, y));
            }
            let circuit = Circuit::new(&pairs, z).unwrap();
            let placement = spec.place_qubits(z as usize, X_STORAGE_A).unwrap();
            let exact = exact_compile(&spec, &circuit, &placement, SearchBudget::default()).unwrap();
            assert!(exact.proven_optimal);
            let brute = bfs_optimum(&spec, &circuit, &placement);
            assert_eq!(exact.schedule.total_duration, brute);
            replay_schedule(&spec, &circuit, &placement, &exact.schedule).unwrap();
            done += 1;
        }
    }

    #[test]
    fn canonical_key_collapses_relabelings() {
        let spec = ChipSpec::x_chip(2).unwrap();
        let circuit = Circuit::from_pairs(&[(1, 2), (2, 3)]).unwrap();
        // qubits 1,2,3 in storage A vs the relabeled circuit/state under 1<->3
        let mut m1 = vec![None; 7];
        m1[3] = Some(1);
        m1[4] = Some(2);
        m1[5] = Some(3);
        let s1 = ChipState::from_mapping(&spec, &m1).unwrap();
        let relabeled = Circuit::from_pairs(&[(3, 2), (2, 1)]).unwrap();
        let mut m2 = vec![None; 7];
        m2[3] = Some(3);
        m2[4] = Some(2);
        m2[5] = Some(1);
        let s2 = ChipState::from_mapping(&spec, &m2).unwrap();
        assert_eq!(
            canonical_key(&spec, &circuit, &s1, 0),
            canonical_key(&spec, &relabeled, &s2, 0)
        );
        // distinct occupancy patterns stay distinct
        let mut m3 = m1.clone();
        m3[4] = m3[5].take();
        let s3 = ChipState::from_mapping(&spec, &m3).unwrap();
        assert_ne!(
            canonical_key(&spec, &circuit, &s1, 0),
            canonical_key(&spec, &circuit, &s3, 0)
        );
        // spectators collapse: swapping two ions unused by the circuit
        let pair_circuit = Circuit::new(&[(1, 2)], 4).unwrap();
        let mut m4 = vec![None; 7];
        m4[3] = Some(1);
        m4[4] = Some(2);
        m4[5] = Some(3);
        m4[6] = Some(4);
        let s4 = ChipState::from_mapping(&spec, &m4).unwrap();
        let mut m5 = m4.clone();
        m5.swap(5, 6);
        let s5 = ChipState::from_mapping(&spec, &m5).unwrap();
        assert_eq!(
            canonical_key(&spec, &pair_circuit, &s4, 0),
            canonical_key(&spec, &pair_circuit, &s5, 0)
        );
    }

    #[test]
    fn heuristic_trivial_cases() {
        let spec = Arc::new(ChipSpec::x_chip(4).unwrap());
        let circuit = Circuit::from_pairs(&[(1, 2)]).unwrap();
        // both operands already in compute: zero shuttling steps
        let mut m = vec![None; 11];
        m[0] = Some(1);
        m[1] = Some(2);
        let placement = ChipState::from_mapping(&spec, &m).unwrap();
        let s = heuristic_compile(&spec, &circuit, &placement, DEFAULT_WINDOW, DEFAULT_CANDIDATES).unwrap();
        assert_eq!(s.steps(), 0);
        assert_eq!(s.total_duration, 0.0);
        // one operand in compute, the other at a storage junction slot
        let mut m = vec![None; 11];
        m[0] = Some(1);
        m[3] = Some(2);
        let placement = ChipState::from_mapping(&spec, &m).unwrap();
        let s = heuristic_compile(&spec, &circuit, &placement, DEFAULT_WINDOW, DEFAULT_CANDIDATES).unwrap();
        assert_eq!(s.steps(), 1);
        replay_schedule(&spec, &circuit, &placement, &s).unwrap();
    }

    #[test]
    fn heuristic_handles_random_instances_on_both_chips() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for spec in [
            Arc::new(ChipSpec::x_chip(3).unwrap()),
            Arc::new(ChipSpec::q_chip(6, 1, 0.25).unwrap()),
        ] {
            for _ in 0..60 {
                let (circuit, placement) = generate_random_problem(&spec, 12, &mut rng).unwrap();
                let s = heuristic_compile(&spec, &circuit, &placement, DEFAULT_WINDOW, DEFAULT_CANDIDATES).unwrap();
                replay_schedule(&spec, &circuit, &placement, &s).unwrap();
            }
        }
    }

    #[test]
    fn heuristic_fills_chip_to_capacity() {
        // every qubit in play, storages saturated
        let spec = Arc::new(ChipSpec::x_chip(3).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let z = spec.n_max() as u16;
            let mut pairs = Vec::new();
            for _ in 0..10 {
                let x = rng.random_range(1..=z);
                let mut y = rng.random_range(1..=z - 1);
                if y >= x {
                    y += 1;
                }
                pairs.push((x, y));
            }
            let circuit = Circuit::new(&pairs, z).unwrap();
            let placement = spec.place_qubits(z as usize, X_STORAGE_B).unwrap();
            let s = heuristic_compile(&spec, &circuit, &placement, DEFAULT_WINDOW, DEFAULT_CANDIDATES).unwrap();
            replay_schedule(&spec, &circuit, &placement, &s).unwrap();
        }
    }

    #[test]
    fn heuristic_is_deterministic() {
        let spec = Arc::new(ChipSpec::x_chip(3).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let (circuit, placement) = generate_random_problem(&spec, 15, &mut rng).unwrap();
        let a = heuristic_compile(&spec, &circuit, &placement, DEFAULT_WINDOW, DEFAULT_CANDIDATES).unwrap();
        let b = heuristic_compile(&spec, &circuit, &placement, DEFAULT_WINDOW, DEFAULT_CANDIDATES).unwrap();
        assert_eq!(a.entries, b.entries);
    }

    #[test]
    fn oracle_never_exceeds_heuristic() {
        let spec = x2();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..30 {
            let z = rng.random_range(2..=3u16);
            let n_gates = rng.random_range(1..=4usize);
            let mut pairs = Vec::new();
            for _ in 0..n_gates {
                let x = rng.random_range(1..=z);
                let mut y = rng.random_range(1..=z - 1);
                if y >= x {
                    y += 1;
                }
                pairs.push((x, y));
            }
            let circuit = Circuit::new(&pairs, z).unwrap();
            let placement = spec.place_qubits(z as usize, X_STORAGE_A).unwrap();
            let exact = exact_compile(&spec, &circuit, &placement, SearchBudget::default()).unwrap();
            let greedy = heuristic_compile(&spec, &circuit, &placement, DEFAULT_WINDOW, DEFAULT_CANDIDATES).unwrap();
            assert!(exact.schedule.total_duration <= greedy.total_duration + 1e-9);
        }
    }

    #[test]
    fn replay_rejects_tampered_schedules() {
        let spec = x2();
        let circuit = Circuit::from_pairs(&[(1, 2)]).unwrap();
        let placement = spec.default_placement(2).unwrap();
        let mut s = heuristic_compile(&spec, &circuit, &placement, DEFAULT_WINDOW, DEFAULT_CANDIDATES).unwrap();
        replay_schedule(&spec, &circuit, &placement, &s).unwrap();
        s.entries[0].duration += 1.0;
        assert!(replay_schedule(&spec, &circuit, &placement, &s).is_err());
        let mut t = heuristic_compile(&spec, &circuit, &placement, DEFAULT_WINDOW, DEFAULT_CANDIDATES).unwrap();
        t.entries.pop();
        assert!(replay_schedule(&spec, &circuit, &placement, &t).is_err());
    }

    #[test]
    fn exact_handles_fast_rotations() {
        // single gate on a Q-chip: the optimum uses fast rotations where
        // no ion crosses the junction
        let spec = Arc::new(ChipSpec::q_chip(5, 1, 0.25).unwrap());
        let circuit = Circuit::from_pairs(&[(1, 2)]).unwrap();
        let placement = spec.default_placement(2).unwrap();
        let r = exact_compile(&spec, &circuit, &placement, SearchBudget::default()).unwrap();
        assert!(r.proven_optimal);
        for e in &r.schedule.entries {
            assert!(e.duration == 0.25 || e.duration == 1.0);
        }
        // two transfers plus one rotation; the rotation carries an ion
        // into the junction slot, so it is charged the full step
        assert_eq!(r.schedule.total_duration, 3.0);
        replay_schedule(&spec, &circuit, &placement, &r.schedule).unwrap();
    }
}
