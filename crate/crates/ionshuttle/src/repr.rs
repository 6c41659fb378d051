//! Observation encodings for the policy and value networks.
//!
//! The proposed encoding abstracts away qubit labels and gate sequence
//! positions: per cell it records occupancy and, for each lookahead depth,
//! the cell of the other operand of the gate (if any) the resident qubit
//! has at that depth. Two states that differ only by a relabeling of the
//! qubits, or by reordering commuting gates, produce identical matrices.
//!
//! Numeric entries (cell numbers, remaining gate count) pass through a
//! sinusoidal embedding; a plain linear scaling and a label-exposing
//! "naive" encoding are available as ablations.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::chip::{ChipSpec, ChipState, Qubit};
use crate::circuit::GateDag;

/// One row of the encoding matrix, describing a single cell.
///
/// `partners[d]` is the 1-based cell of the other operand of the resident
/// qubit's depth-`d` gate, or `None` (the empty token) if the cell is
/// vacant or no such gate exists within the lookahead.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellRow {
    pub occupied: bool,
    pub partners: Vec<Option<usize>>,
}

/// The per-cell encoding matrix `M`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodingMatrix {
    pub rows: Vec<CellRow>,
    pub k_lookahead: usize,
}

/// Builds the encoding matrix for a chip state and gate DAG.
///
/// Gates at depth `k_lookahead` or larger are not represented. If a qubit
/// had several gates at one depth the earliest in sequence order would
/// win; per-qubit dependency chains make such ties impossible.
pub fn encode(spec: &ChipSpec, state: &ChipState, dag: &GateDag, k_lookahead: usize) -> EncodingMatrix {
    let mut partner_cell: HashMap<(Qubit, u32), usize> = HashMap::new();
    for (id, gate) in dag.remaining_gates() {
        let d = dag.depth_of(id);
        if d as usize >= k_lookahead {
            continue;
        }
        for (q, other) in [(gate.x, gate.y), (gate.y, gate.x)] {
            if let Some(cell) = state.cell_of(other) {
                partner_cell.entry((q, d)).or_insert(cell + 1);
            }
        }
    }
    let rows = (0..spec.n_cells())
        .map(|cell| match state.qubit_at(cell) {
            None => CellRow {
                occupied: false,
                partners: vec![None; k_lookahead],
            },
            Some(q) => CellRow {
                occupied: true,
                partners: (0..k_lookahead as u32)
                    .map(|d| partner_cell.get(&(q, d)).copied())
                    .collect(),
            },
        })
        .collect();
    EncodingMatrix { rows, k_lookahead }
}

/// How numeric fields are embedded into the observation vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NumericEncoding {
    /// Sinusoidal embedding with the configured band counts.
    Sinusoidal,
    /// A single linearly scaled entry per field (ablation).
    Linear,
}

/// Parameters of the observation transform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ObsConfig {
    pub k_lookahead: usize,
    /// Bands for cell-number fields.
    pub bands_cell: usize,
    /// Bands for the remaining-gate-count field.
    pub bands_total: usize,
    /// Largest value the remaining-gate field attains; its embedding max.
    pub n_gates_budget: usize,
    pub numeric: NumericEncoding,
}

impl Default for ObsConfig {
    fn default() -> Self {
        ObsConfig {
            k_lookahead: 4,
            bands_cell: 6,
            bands_total: 7,
            n_gates_budget: 1275,
            numeric: NumericEncoding::Sinusoidal,
        }
    }
}

impl ObsConfig {
    fn cell_field_width(&self) -> usize {
        match self.numeric {
            NumericEncoding::Sinusoidal => 2 * self.bands_cell + 1,
            NumericEncoding::Linear => 1,
        }
    }

    fn total_field_width(&self) -> usize {
        match self.numeric {
            NumericEncoding::Sinusoidal => 2 * self.bands_total + 1,
            NumericEncoding::Linear => 1,
        }
    }
}

/// Sinusoidal embedding of a numeric value into `2·bands + 1` entries:
/// `(x_norm, cos(x_norm·π·2⁰‥2^{b-1}), sin(…))` with `x_norm` clipped to
/// `[0, 1]`. The empty token embeds as the zero vector.
pub fn sinusoidal(x: Option<f64>, x_max: f64, bands: usize, out: &mut Vec<f32>) {
    debug_assert!(x_max > 0.0);
    match x {
        None => out.extend(std::iter::repeat_n(0.0, 2 * bands + 1)),
        Some(v) => {
            let xn = (v / x_max).clamp(0.0, 1.0);
            out.push(xn as f32);
            for b in 0..bands {
                out.push((xn * std::f64::consts::PI * f64::powi(2.0, b as i32)).cos() as f32);
            }
            for b in 0..bands {
                out.push((xn * std::f64::consts::PI * f64::powi(2.0, b as i32)).sin() as f32);
            }
        }
    }
}

fn embed(x: Option<f64>, x_max: f64, bands: usize, numeric: NumericEncoding, out: &mut Vec<f32>) {
    match numeric {
        NumericEncoding::Sinusoidal => sinusoidal(x, x_max, bands, out),
        NumericEncoding::Linear => match x {
            None => out.push(0.0),
            Some(v) => out.push((v / x_max).clamp(0.0, 1.0) as f32),
        },
    }
}

/// Length of the observation vector produced by [`observe`].
pub fn obs_len(spec: &ChipSpec, cfg: &ObsConfig) -> usize {
    spec.n_cells() * (1 + cfg.k_lookahead * cfg.cell_field_width()) + cfg.total_field_width()
}

/// Flattens the encoding matrix and appends the remaining gate count,
/// embedding numeric fields per `cfg`. The occupancy flag stays raw.
pub fn observe(spec: &ChipSpec, state: &ChipState, dag: &GateDag, cfg: &ObsConfig, out: &mut Vec<f32>) {
    out.clear();
    let matrix = encode(spec, state, dag, cfg.k_lookahead);
    let n_cells = spec.n_cells() as f64;
    for row in &matrix.rows {
        out.push(if row.occupied { 1.0 } else { 0.0 });
        for partner in &row.partners {
            embed(
                partner.map(|c| c as f64),
                n_cells,
                cfg.bands_cell,
                cfg.numeric,
                out,
            );
        }
    }
    embed(
        Some(dag.remaining() as f64),
        cfg.n_gates_budget as f64,
        cfg.bands_total,
        cfg.numeric,
        out,
    );
    debug_assert_eq!(out.len(), obs_len(spec, cfg));
}

/// Length of the naive observation: one entry per cell plus two per gate
/// of the padded gate list.
pub fn naive_len(spec: &ChipSpec, n_gates_budget: usize) -> usize {
    spec.n_cells() + 2 * n_gates_budget
}

/// Naive ablation encoding: raw qubit label per cell (`v_q`, 0 if empty)
/// concatenated with the remaining gates as operand-label pairs in
/// sequence order, zero-padded to a fixed size (`v_g`).
pub fn observe_naive(
    spec: &ChipSpec,
    state: &ChipState,
    dag: &GateDag,
    n_gates_budget: usize,
    out: &mut Vec<f32>,
) {
    out.clear();
    for cell in 0..spec.n_cells() {
        out.push(state.qubit_at(cell).map_or(0.0, f32::from));
    }
    let mut slots = n_gates_budget;
    for (_, gate) in dag.remaining_gates() {
        if slots == 0 {
            break;
        }
        out.push(f32::from(gate.x));
        out.push(f32::from(gate.y));
        slots -= 1;
    }
    out.extend(std::iter::repeat_n(0.0, 2 * slots));
    debug_assert_eq!(out.len(), naive_len(spec, n_gates_budget));
}

/// Which observation family the agent sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Representation {
    /// The invariant cell/depth encoding with numeric embedding.
    Proposed,
    /// Raw labels and gate list (ablation).
    Naive,
}

/// Bundles a representation choice with its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observer {
    pub representation: Representation,
    pub cfg: ObsConfig,
}

impl Observer {
    pub fn proposed(cfg: ObsConfig) -> Self {
        Observer { representation: Representation::Proposed, cfg }
    }

    /// Observation vector length on `spec` (fixed per chip and config).
    pub fn dim(&self, spec: &ChipSpec) -> usize {
        match self.representation {
            Representation::Proposed => obs_len(spec, &self.cfg),
            Representation::Naive => naive_len(spec, self.cfg.n_gates_budget),
        }
    }

    pub fn write(&self, spec: &ChipSpec, state: &ChipState, dag: &GateDag, out: &mut Vec<f32>) {
        match self.representation {
            Representation::Proposed => observe(spec, state, dag, &self.cfg, out),
            Representation::Naive => observe_naive(spec, state, dag, self.cfg.n_gates_budget, out),
        }
    }
}
