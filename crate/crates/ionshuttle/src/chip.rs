//! Chip topologies, cells, shuttling actions and deterministic movement.
//!
//! Two chip families are modeled. The X-chip has four stack-like registers
//! (compute, SPAM, two storages) joined by a single X-junction; moving an ion
//! across the junction pops it from the source register and the ions behind
//! it close ranks toward the junction. The Q-chip replaces the two storages
//! with a carousel ring: the ring only rotates as a whole, and a rotation
//! that moves no ion through the junction is cheaper than the default step.
//!
//! Every ion position is a *cell*. Cells are numbered per zone starting with
//! the slot next to the junction, in zone order compute, SPAM, then storage
//! (or ring). The numbering is a fixed constant of a spec; all encodings and
//! schedules refer to it.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Qubit label, 1-based. Labels are interchangeable with "ion" throughout.
pub type Qubit = u16;

/// Role of a zone on the chip.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZoneKind {
    /// Gate-execution zone, capacity 2.
    Compute,
    /// State preparation and measurement zone.
    Spam,
    /// Stack-like storage register (X-chip).
    Storage,
    /// Carousel storage ring (Q-chip).
    Ring,
}

/// A zone together with its ion capacity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ZoneDef {
    pub kind: ZoneKind,
    pub capacity: usize,
}

/// Chip family discriminator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChipFamily {
    X,
    Q,
}

/// Ring rotation direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Cw,
    Ccw,
}

/// One raw shuttling action. Indices refer to `ChipSpec::zones`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ActionDef {
    /// X-chip: pop the junction-adjacent ion of `from` and push it into `to`.
    MoveAcrossJunction { from: usize, to: usize },
    /// Q-chip: rotate the whole ring by one slot.
    RotateRing { dir: Direction },
    /// Q-chip: move the ion in the junction-adjacent ring slot into a zone.
    MoveRingToZone { to: usize },
    /// Q-chip: pop the junction-adjacent ion of a zone into the ring slot.
    MoveZoneToRing { from: usize },
}

/// Immutable chip description: zones, cell layout, action set, durations.
///
/// Shareable across workers; all mutation happens on [`ChipState`] values.
#[derive(Debug, Clone, PartialEq)]
pub struct ChipSpec {
    family: ChipFamily,
    zones: Vec<ZoneDef>,
    actions: Vec<ActionDef>,
    default_duration: f64,
    fast_rotation_duration: f64,
    /// First cell (0-based) of each zone; cells of zone `z` are
    /// `cell_start[z] .. cell_start[z] + zones[z].capacity`.
    cell_start: Vec<usize>,
    n_cells: usize,
    n_max: usize,
}

/// The mutable part of a chip: which qubit (if any) sits in each cell.
///
/// Cells are indexed 0-based internally; the 1-based numbering used by
/// observation encodings is `cell + 1`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChipState {
    cells: Vec<Option<Qubit>>,
}

/// X-chip zone indices in spec order.
pub const X_COMPUTE: usize = 0;
pub const X_SPAM: usize = 1;
pub const X_STORAGE_A: usize = 2;
pub const X_STORAGE_B: usize = 3;

/// Q-chip zone indices in spec order.
pub const Q_COMPUTE: usize = 0;
pub const Q_SPAM: usize = 1;
pub const Q_RING: usize = 2;

impl ChipSpec {
    /// Builds the four-register X-chip: compute(2), SPAM(1) and two storage
    /// stacks of `storage_capacity_each` cells. All 12 junction crossings
    /// take one step. The usable qubit count is twice the storage capacity.
    pub fn x_chip(storage_capacity_each: usize) -> Result<Self> {
        if storage_capacity_each == 0 {
            return Err(Error::InvalidSpec(
                "storage capacity must be at least 1".into(),
            ));
        }
        let zones = vec![
            ZoneDef { kind: ZoneKind::Compute, capacity: 2 },
            ZoneDef { kind: ZoneKind::Spam, capacity: 1 },
            ZoneDef { kind: ZoneKind::Storage, capacity: storage_capacity_each },
            ZoneDef { kind: ZoneKind::Storage, capacity: storage_capacity_each },
        ];
        let mut actions = Vec::with_capacity(12);
        for from in 0..zones.len() {
            for to in 0..zones.len() {
                if from != to {
                    actions.push(ActionDef::MoveAcrossJunction { from, to });
                }
            }
        }
        Self::assemble(ChipFamily::X, zones, actions, 1.0, 1.0, 2 * storage_capacity_each)
    }

    /// Builds the Q-chip: compute(2), SPAM zone, and a carousel ring.
    ///
    /// Rotations are charged `fast_rotation_duration` when no ion passes
    /// the junction slot (it is empty both before and after the rotation),
    /// and the default one-step duration otherwise. Zone transfers always
    /// take one step.
    pub fn q_chip(
        ring_capacity: usize,
        spam_capacity: usize,
        fast_rotation_duration: f64,
    ) -> Result<Self> {
        if ring_capacity < 2 {
            return Err(Error::InvalidSpec("ring capacity must be at least 2".into()));
        }
        if spam_capacity != 1 && spam_capacity != 3 {
            return Err(Error::InvalidSpec(
                "SPAM capacity must be 1 or 3 for the Q-chip variants".into(),
            ));
        }
        if !(fast_rotation_duration > 0.0 && fast_rotation_duration <= 1.0) {
            return Err(Error::InvalidSpec(
                "fast rotation duration must lie in (0, default]".into(),
            ));
        }
        let zones = vec![
            ZoneDef { kind: ZoneKind::Compute, capacity: 2 },
            ZoneDef { kind: ZoneKind::Spam, capacity: spam_capacity },
            ZoneDef { kind: ZoneKind::Ring, capacity: ring_capacity },
        ];
        let actions = vec![
            ActionDef::RotateRing { dir: Direction::Cw },
            ActionDef::RotateRing { dir: Direction::Ccw },
            ActionDef::MoveRingToZone { to: Q_COMPUTE },
            ActionDef::MoveRingToZone { to: Q_SPAM },
            ActionDef::MoveZoneToRing { from: Q_COMPUTE },
            ActionDef::MoveZoneToRing { from: Q_SPAM },
        ];
        Self::assemble(ChipFamily::Q, zones, actions, 1.0, fast_rotation_duration, ring_capacity)
    }

    fn assemble(
        family: ChipFamily,
        zones: Vec<ZoneDef>,
        actions: Vec<ActionDef>,
        default_duration: f64,
        fast_rotation_duration: f64,
        n_max: usize,
    ) -> Result<Self> {
        if !(default_duration > 0.0) || !(fast_rotation_duration > 0.0) {
            return Err(Error::InvalidSpec("durations must be strictly positive".into()));
        }
        let mut cell_start = Vec::with_capacity(zones.len());
        let mut n_cells = 0;
        for z in &zones {
            cell_start.push(n_cells);
            n_cells += z.capacity;
        }
        Ok(Self {
            family,
            zones,
            actions,
            default_duration,
            fast_rotation_duration,
            cell_start,
            n_cells,
            n_max,
        })
    }

    /// Resolves a `--chip` argument: `builtin:<name>` or a JSON file path.
    ///
    /// Builtins: `x50`, `q50`, `q50-spam3`, and more generally `x<N>` /
    /// `q<N>` for a chip sized to `N` qubits.
    pub fn from_flag(flag: &str) -> Result<Self> {
        if let Some(name) = flag.strip_prefix("builtin:") {
            return Self::builtin(name);
        }
        Self::from_file(flag)
    }

    fn builtin(name: &str) -> Result<Self> {
        if name == "q50-spam3" {
            return Self::q_chip(50, 3, 0.25);
        }
        if let Some(n) = name.strip_prefix('x').and_then(|s| s.parse::<usize>().ok()) {
            if n >= 2 && n % 2 == 0 {
                return Self::x_chip(n / 2);
            }
        }
        if let Some(n) = name.strip_prefix('q').and_then(|s| s.parse::<usize>().ok()) {
            if n >= 2 {
                return Self::q_chip(n, 1, 0.25);
            }
        }
        Err(Error::InvalidSpec(format!("unknown builtin chip '{name}'")))
    }

    pub fn family(&self) -> ChipFamily {
        self.family
    }

    pub fn zones(&self) -> &[ZoneDef] {
        &self.zones
    }

    /// Total number of cells.
    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    /// Maximum number of qubits a problem may use on this chip.
    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn actions(&self) -> &[ActionDef] {
        &self.actions
    }

    pub fn num_actions(&self) -> usize {
        self.actions.len()
    }

    pub fn default_duration(&self) -> f64 {
        self.default_duration
    }

    pub fn fast_rotation_duration(&self) -> f64 {
        self.fast_rotation_duration
    }

    /// Cells of zone `z`, junction-adjacent slot first.
    pub fn zone_cells(&self, z: usize) -> std::ops::Range<usize> {
        let start = self.cell_start[z];
        start..start + self.zones[z].capacity
    }

    /// Zone that cell `cell` belongs to.
    pub fn zone_of_cell(&self, cell: usize) -> usize {
        debug_assert!(cell < self.n_cells);
        match self.cell_start.binary_search(&cell) {
            Ok(z) => z,
            Err(z) => z - 1,
        }
    }

    /// Index of the compute zone (always present, capacity 2).
    pub fn compute_zone(&self) -> usize {
        0
    }

    /// Human-readable zone name, stable across runs.
    pub fn zone_name(&self, z: usize) -> &'static str {
        match (self.family, z) {
            (ChipFamily::X, X_COMPUTE) | (ChipFamily::Q, Q_COMPUTE) => "compute",
            (ChipFamily::X, X_SPAM) | (ChipFamily::Q, Q_SPAM) => "spam",
            (ChipFamily::X, X_STORAGE_A) => "storage_a",
            (ChipFamily::X, X_STORAGE_B) => "storage_b",
            (ChipFamily::Q, Q_RING) => "ring",
            _ => "zone",
        }
    }

    /// Display label for an action index.
    pub fn action_label(&self, action: usize) -> String {
        match self.actions[action] {
            ActionDef::MoveAcrossJunction { from, to } => {
                format!("{}->{}", self.zone_name(from), self.zone_name(to))
            }
            ActionDef::RotateRing { dir: Direction::Cw } => "rotate(cw)".into(),
            ActionDef::RotateRing { dir: Direction::Ccw } => "rotate(ccw)".into(),
            ActionDef::MoveRingToZone { to } => format!("ring->{}", self.zone_name(to)),
            ActionDef::MoveZoneToRing { from } => format!("{}->ring", self.zone_name(from)),
        }
    }

    /// An empty mapping (every cell vacant).
    pub fn empty_state(&self) -> ChipState {
        ChipState { cells: vec![None; self.n_cells] }
    }

    fn ring_zone(&self) -> usize {
        debug_assert_eq!(self.family, ChipFamily::Q);
        Q_RING
    }

    /// Junction-adjacent ring slot (fixed cell; rotations move ions, not
    /// the reference slot).
    pub fn ring_junction_cell(&self) -> usize {
        self.cell_start[self.ring_zone()]
    }

    /// Per-action legality mask for `state`. Never all-false on a state
    /// holding at least one ion.
    pub fn legal_mask(&self, state: &ChipState) -> Vec<bool> {
        self.actions
            .iter()
            .map(|a| self.action_is_legal(state, *a))
            .collect()
    }

    /// Indices of the legal actions in `state`.
    pub fn legal_actions(&self, state: &ChipState) -> Vec<usize> {
        (0..self.actions.len())
            .filter(|&i| self.action_is_legal(state, self.actions[i]))
            .collect()
    }

    fn action_is_legal(&self, state: &ChipState, action: ActionDef) -> bool {
        match action {
            ActionDef::MoveAcrossJunction { from, to } => {
                state.zone_occupancy(self, from) > 0 && !self.zone_full(state, to)
            }
            ActionDef::RotateRing { .. } => true,
            ActionDef::MoveRingToZone { to } => {
                state.cells[self.ring_junction_cell()].is_some() && !self.zone_full(state, to)
            }
            ActionDef::MoveZoneToRing { from } => {
                state.zone_occupancy(self, from) > 0
                    && state.cells[self.ring_junction_cell()].is_none()
            }
        }
    }

    fn zone_full(&self, state: &ChipState, z: usize) -> bool {
        state.zone_occupancy(self, z) == self.zones[z].capacity
    }

    /// Duration the action would take from `state` (legal or not).
    pub fn action_duration(&self, state: &ChipState, action: usize) -> f64 {
        match self.actions[action] {
            ActionDef::RotateRing { dir } => {
                if self.rotation_is_fast(state, dir) {
                    self.fast_rotation_duration
                } else {
                    self.default_duration
                }
            }
            _ => self.default_duration,
        }
    }

    /// A rotation is fast exactly when the junction slot is empty both
    /// before and after it, i.e. no ion passes the junction.
    fn rotation_is_fast(&self, state: &ChipState, dir: Direction) -> bool {
        let ring = self.zone_cells(self.ring_zone());
        let first = ring.start;
        let last = ring.end - 1;
        let before_empty = state.cells[first].is_none();
        let after_empty = match dir {
            Direction::Cw => state.cells[last].is_none(),
            Direction::Ccw => state.cells[first + 1].is_none(),
        };
        before_empty && after_empty
    }

    /// Applies `action` in place and returns its duration.
    ///
    /// Identical inputs always yield identical outputs; an action outside
    /// [`legal_mask`](Self::legal_mask) fails with [`Error::MaskedAction`]
    /// and leaves the state untouched.
    pub fn apply_in_place(&self, state: &mut ChipState, action: usize) -> Result<f64> {
        let def = *self
            .actions
            .get(action)
            .ok_or(Error::MaskedAction { action })?;
        if !self.action_is_legal(state, def) {
            return Err(Error::MaskedAction { action });
        }
        let duration = self.action_duration(state, action);
        match def {
            ActionDef::MoveAcrossJunction { from, to } => {
                let ion = self.pop_zone(state, from);
                self.push_zone(state, to, ion);
            }
            ActionDef::RotateRing { dir } => self.rotate_ring(state, dir),
            ActionDef::MoveRingToZone { to } => {
                let slot = self.ring_junction_cell();
                let ion = state.cells[slot].take().expect("checked occupied");
                self.push_zone(state, to, ion);
            }
            ActionDef::MoveZoneToRing { from } => {
                let ion = self.pop_zone(state, from);
                let slot = self.ring_junction_cell();
                debug_assert!(state.cells[slot].is_none());
                state.cells[slot] = Some(ion);
            }
        }
        Ok(duration)
    }

    /// Pure variant of [`apply_in_place`](Self::apply_in_place).
    pub fn apply(&self, state: &ChipState, action: usize) -> Result<(ChipState, f64)> {
        let mut next = state.clone();
        let duration = self.apply_in_place(&mut next, action)?;
        Ok((next, duration))
    }

    /// Removes the junction-adjacent ion of a stack zone; the ions behind
    /// it shift one slot toward the junction.
    fn pop_zone(&self, state: &mut ChipState, z: usize) -> Qubit {
        let range = self.zone_cells(z);
        let ion = state.cells[range.start].take().expect("pop from empty zone");
        for i in range.start..range.end - 1 {
            state.cells[i] = state.cells[i + 1].take();
        }
        ion
    }

    /// Inserts an ion at the junction-adjacent free slot of a stack zone.
    fn push_zone(&self, state: &mut ChipState, z: usize, ion: Qubit) {
        let occ = state.zone_occupancy(self, z);
        let range = self.zone_cells(z);
        debug_assert!(range.start + occ < range.end + 1);
        state.cells[range.start + occ] = Some(ion);
    }

    fn rotate_ring(&self, state: &mut ChipState, dir: Direction) {
        let range = self.zone_cells(self.ring_zone());
        let slots = &mut state.cells[range];
        match dir {
            // Each ion moves one slot clockwise: slot i feeds slot i+1.
            Direction::Cw => slots.rotate_right(1),
            Direction::Ccw => slots.rotate_left(1),
        }
    }

    /// Checks every structural invariant of `state` against this spec.
    pub fn validate_state(&self, state: &ChipState) -> Result<()> {
        if state.cells.len() != self.n_cells {
            return Err(Error::InvalidState(format!(
                "state has {} cells, spec has {}",
                state.cells.len(),
                self.n_cells
            )));
        }
        let mut seen = std::collections::HashSet::new();
        for q in state.cells.iter().flatten() {
            if *q == 0 {
                return Err(Error::InvalidState("qubit labels are 1-based".into()));
            }
            if !seen.insert(*q) {
                return Err(Error::InvalidState(format!("duplicate qubit label {q}")));
            }
        }
        for (z, def) in self.zones.iter().enumerate() {
            if def.kind == ZoneKind::Ring {
                continue; // ring slots may be occupied in any pattern
            }
            let mut gap = false;
            for c in self.zone_cells(z) {
                match (state.cells[c].is_some(), gap) {
                    (true, true) => {
                        return Err(Error::InvalidState(format!(
                            "zone {} is not compacted toward the junction",
                            self.zone_name(z)
                        )))
                    }
                    (false, _) => gap = true,
                    _ => {}
                }
            }
        }
        Ok(())
    }

    /// Places qubits `1..=num_qubits` onto storage, starting with
    /// `preferred` (a storage/ring zone) and overflowing into the other
    /// storage in label order from the junction outward.
    pub fn place_qubits(&self, num_qubits: usize, preferred: usize) -> Result<ChipState> {
        if num_qubits > self.n_max {
            return Err(Error::Capacity(format!(
                "{} qubits exceed chip maximum {}",
                num_qubits, self.n_max
            )));
        }
        let order: Vec<usize> = match self.family {
            ChipFamily::X => {
                debug_assert!(preferred == X_STORAGE_A || preferred == X_STORAGE_B);
                let other = if preferred == X_STORAGE_A { X_STORAGE_B } else { X_STORAGE_A };
                vec![preferred, other]
            }
            ChipFamily::Q => vec![Q_RING],
        };
        let mut state = self.empty_state();
        let mut next: Qubit = 1;
        for z in order {
            for c in self.zone_cells(z) {
                if usize::from(next) > num_qubits {
                    break;
                }
                state.cells[c] = Some(next);
                next += 1;
            }
        }
        if usize::from(next) <= num_qubits {
            return Err(Error::Capacity("storage too small for placement".into()));
        }
        Ok(state)
    }

    /// Deterministic default placement (first storage zone / ring).
    pub fn default_placement(&self, num_qubits: usize) -> Result<ChipState> {
        let preferred = match self.family {
            ChipFamily::X => X_STORAGE_A,
            ChipFamily::Q => Q_RING,
        };
        self.place_qubits(num_qubits, preferred)
    }

    /// Storage zones an initial placement may start from.
    pub fn storage_zones(&self) -> Vec<usize> {
        match self.family {
            ChipFamily::X => vec![X_STORAGE_A, X_STORAGE_B],
            ChipFamily::Q => vec![Q_RING],
        }
    }

    /// Reads a chip spec from its JSON file form.
    pub fn from_file<P: AsRef<Path>>(path: P) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let file: ChipFile = serde_json::from_str(&text)?;
        Self::try_from(file)
    }

    /// Writes the JSON file form.
    pub fn to_file<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let file = ChipFile::from(self);
        std::fs::write(path, serde_json::to_string_pretty(&file)?)?;
        Ok(())
    }
}

/// On-disk chip format: `{family, zones, durations}`.
#[derive(Debug, Serialize, Deserialize)]
struct ChipFile {
    family: ChipFamily,
    zones: Vec<ZoneDef>,
    durations: Durations,
}

#[derive(Debug, Serialize, Deserialize)]
struct Durations {
    default: f64,
    fast_rotation: f64,
}

impl From<&ChipSpec> for ChipFile {
    fn from(spec: &ChipSpec) -> Self {
        ChipFile {
            family: spec.family,
            zones: spec.zones.clone(),
            durations: Durations {
                default: spec.default_duration,
                fast_rotation: spec.fast_rotation_duration,
            },
        }
    }
}

impl TryFrom<ChipFile> for ChipSpec {
    type Error = Error;

    fn try_from(file: ChipFile) -> Result<Self> {
        let kinds: Vec<ZoneKind> = file.zones.iter().map(|z| z.kind).collect();
        match file.family {
            ChipFamily::X => {
                let expect = [ZoneKind::Compute, ZoneKind::Spam, ZoneKind::Storage, ZoneKind::Storage];
                if kinds != expect {
                    return Err(Error::InvalidSpec(
                        "X-chip zones must be [compute, spam, storage, storage]".into(),
                    ));
                }
                if file.zones[0].capacity != 2 || file.zones[1].capacity != 1 {
                    return Err(Error::InvalidSpec(
                        "X-chip compute capacity must be 2 and SPAM capacity 1".into(),
                    ));
                }
                if file.zones[2].capacity != file.zones[3].capacity {
                    return Err(Error::InvalidSpec("X-chip storages must have equal capacity".into()));
                }
                if file.durations.default != 1.0 {
                    return Err(Error::InvalidSpec("X-chip default duration must be 1.0".into()));
                }
                ChipSpec::x_chip(file.zones[2].capacity)
            }
            ChipFamily::Q => {
                let expect = [ZoneKind::Compute, ZoneKind::Spam, ZoneKind::Ring];
                if kinds != expect {
                    return Err(Error::InvalidSpec(
                        "Q-chip zones must be [compute, spam, ring]".into(),
                    ));
                }
                if file.zones[0].capacity != 2 {
                    return Err(Error::InvalidSpec("Q-chip compute capacity must be 2".into()));
                }
                ChipSpec::q_chip(
                    file.zones[2].capacity,
                    file.zones[1].capacity,
                    file.durations.fast_rotation,
                )
            }
        }
    }
}

impl ChipState {
    /// Builds a state from a 1-based cell→qubit table (`None` = empty) and
    /// validates it against the spec.
    pub fn from_mapping(spec: &ChipSpec, mapping: &[Option<Qubit>]) -> Result<Self> {
        let state = ChipState { cells: mapping.to_vec() };
        spec.validate_state(&state)?;
        Ok(state)
    }

    /// Qubit in 0-based cell `cell`, if any.
    pub fn qubit_at(&self, cell: usize) -> Option<Qubit> {
        self.cells[cell]
    }

    /// The raw cell table, junction-first per zone.
    pub fn cells(&self) -> &[Option<Qubit>] {
        &self.cells
    }

    /// 0-based cell currently holding `qubit`.
    pub fn cell_of(&self, qubit: Qubit) -> Option<usize> {
        self.cells.iter().position(|c| *c == Some(qubit))
    }

    /// Number of ions in zone `z`.
    pub fn zone_occupancy(&self, spec: &ChipSpec, z: usize) -> usize {
        spec.zone_cells(z).filter(|&c| self.cells[c].is_some()).count()
    }

    /// Qubits in zone `z`, junction-adjacent first.
    pub fn zone_qubits(&self, spec: &ChipSpec, z: usize) -> Vec<Qubit> {
        spec.zone_cells(z).filter_map(|c| self.cells[c]).collect()
    }

    /// Total ion count.
    pub fn num_ions(&self) -> usize {
        self.cells.iter().filter(|c| c.is_some()).count()
    }

    /// True if `qubit` currently sits in the compute zone.
    pub fn in_compute(&self, spec: &ChipSpec, qubit: Qubit) -> bool {
        spec.zone_cells(spec.compute_zone())
            .any(|c| self.cells[c] == Some(qubit))
    }
}

impl fmt::Display for ChipState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let entries: Vec<String> = self
            .cells
            .iter()
            .map(|c| match c {
                Some(q) => q.to_string(),
                None => "-".into(),
            })
            .collect();
        write!(f, "[{}]", entries.join(" "))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn x4() -> ChipSpec {
        ChipSpec::x_chip(4).unwrap()
    }

    #[test]
    fn x_chip_cell_counts() {
        assert_eq!(x4().n_cells(), 11);
        let tiny = ChipSpec::x_chip(1).unwrap();
        assert_eq!(tiny.n_cells(), 5);
        assert_eq!(tiny.num_actions(), 12);
        let big = ChipSpec::x_chip(25).unwrap();
        assert_eq!(big.n_max(), 50);
        assert_eq!(big.n_cells(), 53);
    }

    #[test]
    fn x_chip_rejects_zero_capacity() {
        assert!(matches!(ChipSpec::x_chip(0), Err(Error::InvalidSpec(_))));
    }

    #[test]
    fn q_chip_variants() {
        let q = ChipSpec::q_chip(5, 1, 0.25).unwrap();
        assert_eq!(q.n_cells(), 8);
        assert_eq!(q.num_actions(), 6);
        // uniform-duration chip when fast == default
        let uniform = ChipSpec::q_chip(2, 1, 1.0).unwrap();
        assert_eq!(uniform.fast_rotation_duration(), 1.0);
        // the enlarged-SPAM variant
        let spam3 = ChipSpec::q_chip(50, 3, 0.25).unwrap();
        assert_eq!(spam3.n_cells(), 55);
        assert!(ChipSpec::q_chip(1, 1, 0.25).is_err());
        assert!(ChipSpec::q_chip(5, 2, 0.25).is_err());
        assert!(ChipSpec::q_chip(5, 1, 1.5).is_err());
    }

    #[test]
    fn x_move_pops_and_compacts() {
        let spec = x4();
        // compute (4,1), spam 2, storage A holds 3 then 5 from the junction.
        let mut state = spec.empty_state();
        for (cell, q) in [(0, 4), (1, 1), (2, 2), (3, 3), (4, 5)] {
            state.cells[cell] = Some(q);
        }
        spec.validate_state(&state).unwrap();
        // Moving storage A into compute is masked: compute is full.
        let a_to_compute = spec
            .actions()
            .iter()
            .position(|a| matches!(a, ActionDef::MoveAcrossJunction { from: X_STORAGE_A, to: X_COMPUTE }))
            .unwrap();
        assert!(matches!(
            spec.apply(&state, a_to_compute),
            Err(Error::MaskedAction { .. })
        ));
        // Free one compute slot, then the junction-adjacent storage ion (3)
        // enters compute and 5 closes ranks toward the junction.
        let compute_to_b = spec
            .actions()
            .iter()
            .position(|a| matches!(a, ActionDef::MoveAcrossJunction { from: X_COMPUTE, to: X_STORAGE_B }))
            .unwrap();
        let (state, d) = spec.apply(&state, compute_to_b).unwrap();
        assert_eq!(d, 1.0);
        assert_eq!(state.qubit_at(0), Some(1)); // 1 shifted to the junction slot
        assert_eq!(state.qubit_at(7), Some(4)); // 4 now heads storage B
        let (state, _) = spec.apply(&state, a_to_compute).unwrap();
        assert_eq!(state.qubit_at(1), Some(3)); // 3 joined compute
        assert_eq!(state.qubit_at(3), Some(5)); // 5 moved next to the junction
        assert_eq!(state.qubit_at(4), None);
        spec.validate_state(&state).unwrap();
    }

    #[test]
    fn x_masks_match_manual_enumeration() {
        let spec = x4();
        // All ions in storage A, everything else empty.
        let state = spec.place_qubits(4, X_STORAGE_A).unwrap();
        for (i, legal) in spec.legal_mask(&state).iter().enumerate() {
            match spec.actions()[i] {
                ActionDef::MoveAcrossJunction { from, .. } => {
                    assert_eq!(*legal, from == X_STORAGE_A, "action {i}");
                }
                _ => unreachable!(),
            }
        }
        // Two ions in compute, both storages full: the empty SPAM zone is
        // the only destination with space, so exactly the moves into it
        // remain legal (brute-force enumeration of the 12 actions).
        let mut state = spec.empty_state();
        state.cells[0] = Some(9);
        state.cells[1] = Some(10);
        for (i, c) in spec.zone_cells(X_STORAGE_A).enumerate() {
            state.cells[c] = Some(1 + i as Qubit);
        }
        for (i, c) in spec.zone_cells(X_STORAGE_B).enumerate() {
            state.cells[c] = Some(5 + i as Qubit);
        }
        spec.validate_state(&state).unwrap();
        let legal = spec.legal_actions(&state);
        for &i in &legal {
            match spec.actions()[i] {
                ActionDef::MoveAcrossJunction { to, .. } => assert_eq!(to, X_SPAM),
                _ => unreachable!(),
            }
        }
        assert_eq!(legal.len(), 3);
        for action in legal {
            assert!(spec.apply(&state, action).is_ok());
        }
    }

    #[test]
    fn q_rotation_durations() {
        let spec = ChipSpec::q_chip(5, 1, 0.25).unwrap();
        // Ring slots are cells 3..8; slot 3 is junction-adjacent.
        let mut state = spec.empty_state();
        state.cells[4] = Some(1);
        state.cells[5] = Some(2);
        spec.validate_state(&state).unwrap();
        // Clockwise: slot 7 feeds the junction slot; both are empty -> fast.
        let cw = 0;
        let ccw = 1;
        assert_eq!(spec.action_duration(&state, cw), 0.25);
        // Counter-clockwise: the ion in slot 4 would enter the junction slot.
        assert_eq!(spec.action_duration(&state, ccw), 1.0);
        let (next, d) = spec.apply(&state, cw).unwrap();
        assert_eq!(d, 0.25);
        assert_eq!(next.qubit_at(5), Some(1));
        assert_eq!(next.qubit_at(6), Some(2));
        // Empty ring: rotation is a fast no-op on occupancy.
        let empty = spec.empty_state();
        let (rotated, d) = spec.apply(&empty, cw).unwrap();
        assert_eq!(d, 0.25);
        assert_eq!(rotated, empty);
    }

    #[test]
    fn q_rotations_are_inverse() {
        let spec = ChipSpec::q_chip(5, 1, 0.25).unwrap();
        let mut state = spec.empty_state();
        state.cells[3] = Some(1);
        state.cells[6] = Some(2);
        let (once, _) = spec.apply(&state, 0).unwrap();
        let (back, _) = spec.apply(&once, 1).unwrap();
        assert_eq!(back, state);
    }

    #[test]
    fn q_transfer_masks() {
        let spec = ChipSpec::q_chip(3, 1, 0.25).unwrap();
        // Ring full, one ion in compute.
        let mut state = spec.empty_state();
        state.cells[0] = Some(4);
        for (i, c) in spec.zone_cells(Q_RING).enumerate() {
            state.cells[c] = Some(1 + i as Qubit);
        }
        let mask = spec.legal_mask(&state);
        // compute->ring is illegal: the junction slot is occupied.
        assert!(!mask[4]);
        // ring->compute is legal (compute has one free slot), rotations always.
        assert!(mask[0] && mask[1] && mask[2]);
    }

    #[test]
    fn qubit_conservation_and_determinism() {
        let spec = x4();
        let state = spec.place_qubits(6, X_STORAGE_B).unwrap();
        let mut ions_before: Vec<_> = state.cells().iter().flatten().copied().collect();
        ions_before.sort_unstable();
        for action in spec.legal_actions(&state) {
            let (a, da) = spec.apply(&state, action).unwrap();
            let (b, db) = spec.apply(&state, action).unwrap();
            assert_eq!(a, b);
            assert_eq!(da, db);
            assert!(da > 0.0);
            let mut ions_after: Vec<_> = a.cells().iter().flatten().copied().collect();
            ions_after.sort_unstable();
            assert_eq!(ions_before, ions_after);
            spec.validate_state(&a).unwrap();
        }
    }

    #[test]
    fn chip_file_round_trip() {
        let dir = std::env::temp_dir().join("ionshuttle-chip-test");
        std::fs::create_dir_all(&dir).unwrap();
        for spec in [x4(), ChipSpec::q_chip(7, 3, 0.5).unwrap()] {
            let path = dir.join("chip.json");
            spec.to_file(&path).unwrap();
            let loaded = ChipSpec::from_file(&path).unwrap();
            assert_eq!(spec, loaded);
        }
    }

    #[test]
    fn builtin_flags() {
        assert_eq!(ChipSpec::from_flag("builtin:x50").unwrap().n_max(), 50);
        assert_eq!(ChipSpec::from_flag("builtin:q50").unwrap().n_cells(), 53);
        assert_eq!(ChipSpec::from_flag("builtin:q50-spam3").unwrap().n_cells(), 55);
        assert_eq!(ChipSpec::from_flag("builtin:x6").unwrap().n_cells(), 9);
        assert!(ChipSpec::from_flag("builtin:zzz").is_err());
    }

    #[test]
    fn validate_rejects_gapped_stack() {
        let spec = x4();
        let mut mapping = vec![None; 11];
        mapping[4] = Some(3); // second slot of storage A occupied, first empty
        assert!(ChipState::from_mapping(&spec, &mapping).is_err());
        let mut dup = vec![None; 11];
        dup[0] = Some(1);
        dup[3] = Some(1);
        assert!(ChipState::from_mapping(&spec, &dup).is_err());
    }
}
