//! Classical Turing machines, their lift to quantum Turing machines over
//! a d-dimensional tape, sparse unitary step evolution, local-unitarity
//! verification on finite windows, and halting outcome probabilities.
//!
//! Conventions fixed here and exercised by the shift-machine tests:
//! the step operator maps a source configuration (i, q, F) to targets
//! (i + sigma, q', F with cell i rewritten); head moves are axis-aligned
//! offsets of sup-norm at most 1 (2d + 1 of them including no-move).

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap, HashSet};
use thiserror::Error;

use crate::linalg::{operator_norm, ComplexMatrix};

pub type StateId = usize;
pub type SymbolId = usize;
pub type Cell = Vec<i64>;

#[derive(Debug, Error)]
pub enum TuringError {
    #[error("transition function is not total: missing delta({state}, {symbol})")]
    MissingTransition { state: String, symbol: String },
    #[error("index out of range: {0}")]
    IndexOutOfRange(String),
    #[error("step applied to a halted configuration")]
    SteppedWhenHalted,
    #[error("step limit {0} exceeded without halting")]
    StepLimitExceeded(usize),
    #[error("head move {0:?} is not an axis offset of sup-norm <= 1")]
    BadMove(Vec<i64>),
    #[error("shift-machine matrices violate unitarity conditions (residuals {0:.3e}, {1:.3e}, {2:.3e})")]
    ShiftConditionsViolated(f64, f64, f64),
    #[error("window has no interior configuration")]
    EmptyInterior,
    #[error("window truncation enumerates {0} configurations, above the limit {1}")]
    WindowTooLarge(u128, usize),
    #[error(transparent)]
    Linalg(#[from] crate::linalg::LinalgError),
    #[error("invalid machine description: {0}")]
    BadDescription(String),
}

/// Head move: R -> +1, L -> -1, N -> 0 on the single tape axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Move {
    L,
    N,
    R,
}

impl Move {
    pub fn offset(self) -> i64 {
        match self {
            Move::L => -1,
            Move::N => 0,
            Move::R => 1,
        }
    }
}

/// Classical deterministic Turing machine over a one-dimensional tape.
#[derive(Debug, Clone)]
pub struct ClassicalTM {
    pub states: Vec<String>,
    pub alphabet: Vec<String>,
    pub initial: StateId,
    pub final_state: StateId,
    pub blank: SymbolId,
    transitions: HashMap<(StateId, SymbolId), (StateId, SymbolId, Move)>,
}

impl ClassicalTM {
    /// The transition function must be total on (Q \ {final}) x Sigma.
    pub fn new(
        states: Vec<String>,
        alphabet: Vec<String>,
        initial: StateId,
        final_state: StateId,
        blank: SymbolId,
        transitions: HashMap<(StateId, SymbolId), (StateId, SymbolId, Move)>,
    ) -> Result<Self, TuringError> {
        if initial >= states.len() || final_state >= states.len() {
            return Err(TuringError::IndexOutOfRange("initial/final state".into()));
        }
        if blank >= alphabet.len() {
            return Err(TuringError::IndexOutOfRange("blank symbol".into()));
        }
        for (&(q, a), &(q2, a2, _)) in &transitions {
            if q >= states.len() || a >= alphabet.len() || q2 >= states.len() || a2 >= alphabet.len()
            {
                return Err(TuringError::IndexOutOfRange(format!("transition ({q}, {a})")));
            }
        }
        for q in 0..states.len() {
            if q == final_state {
                continue;
            }
            for a in 0..alphabet.len() {
                if !transitions.contains_key(&(q, a)) {
                    return Err(TuringError::MissingTransition {
                        state: states[q].clone(),
                        symbol: alphabet[a].clone(),
                    });
                }
            }
        }
        Ok(Self { states, alphabet, initial, final_state, blank, transitions })
    }

    pub fn delta(&self, q: StateId, a: SymbolId) -> Option<(StateId, SymbolId, Move)> {
        self.transitions.get(&(q, a)).copied()
    }

    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn num_symbols(&self) -> usize {
        self.alphabet.len()
    }
}

/// Head position, control state, and finite-support tape. Blank cells
/// are never stored, so equality and ordering are canonical.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Configuration {
    pub head: Cell,
    pub state: StateId,
    pub tape: BTreeMap<Cell, SymbolId>,
}

impl Configuration {
    pub fn new(dim: usize, state: StateId) -> Self {
        Self { head: vec![0; dim], state, tape: BTreeMap::new() }
    }

    pub fn dim(&self) -> usize {
        self.head.len()
    }

    pub fn read(&self, cell: &Cell, blank: SymbolId) -> SymbolId {
        self.tape.get(cell).copied().unwrap_or(blank)
    }

    pub fn write(&mut self, cell: Cell, symbol: SymbolId, blank: SymbolId) {
        if symbol == blank {
            self.tape.remove(&cell);
        } else {
            self.tape.insert(cell, symbol);
        }
    }

    /// 1-D input placed in cells 0..n-1.
    pub fn with_input(state: StateId, input: &[SymbolId], blank: SymbolId) -> Self {
        let mut c = Self::new(1, state);
        for (i, &s) in input.iter().enumerate() {
            c.write(vec![i as i64], s, blank);
        }
        c
    }
}

/// Applies one classical step. Errors on a halted configuration.
pub fn classical_step(tm: &ClassicalTM, c: &Configuration) -> Result<Configuration, TuringError> {
    if c.state == tm.final_state {
        return Err(TuringError::SteppedWhenHalted);
    }
    let a = c.read(&c.head, tm.blank);
    let (q2, a2, mv) = tm
        .delta(c.state, a)
        .ok_or_else(|| TuringError::MissingTransition {
            state: tm.states[c.state].clone(),
            symbol: tm.alphabet[a].clone(),
        })?;
    let mut out = c.clone();
    out.write(c.head.clone(), a2, tm.blank);
    out.head[0] += mv.offset();
    out.state = q2;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassicalRun {
    pub output: Vec<SymbolId>,
    /// Steps until the final state was entered.
    pub time: usize,
    /// Number of distinct cells scanned by the head.
    pub space: usize,
}

/// Runs to the final state or errors when the step budget runs out. The
/// output is read from cell 0 rightward until the first blank.
pub fn run_classical(
    tm: &ClassicalTM,
    input: &[SymbolId],
    step_limit: usize,
) -> Result<ClassicalRun, TuringError> {
    let mut c = Configuration::with_input(tm.initial, input, tm.blank);
    let mut scanned: HashSet<Cell> = HashSet::new();
    scanned.insert(c.head.clone());
    let mut t = 0usize;
    while c.state != tm.final_state {
        if t >= step_limit {
            return Err(TuringError::StepLimitExceeded(step_limit));
        }
        c = classical_step(tm, &c)?;
        scanned.insert(c.head.clone());
        t += 1;
    }
    let mut output = Vec::new();
    let mut i = 0i64;
    loop {
        let s = c.read(&vec![i], tm.blank);
        if s == tm.blank {
            break;
        }
        output.push(s);
        i += 1;
    }
    Ok(ClassicalRun { output, time: t, space: scanned.len() })
}

/// The local transition amplitudes u_sigma(q, a, q', a') of a QTM. The
/// admissible sigma are the 2d + 1 axis offsets of sup-norm at most 1.
#[derive(Debug, Clone)]
pub struct TransitionAmplitudes {
    dim: usize,
    num_states: usize,
    num_symbols: usize,
    blank: SymbolId,
    /// (q, a) -> sorted (sigma, q', a', amplitude).
    rules: HashMap<(StateId, SymbolId), Vec<(Cell, StateId, SymbolId, Complex64)>>,
}

#[derive(Debug, Clone)]
pub struct AmplitudeEntry {
    pub state: StateId,
    pub symbol: SymbolId,
    pub new_state: StateId,
    pub new_symbol: SymbolId,
    pub sigma: Cell,
    pub amplitude: Complex64,
}

fn is_axis_move(sigma: &[i64]) -> bool {
    let nonzero: Vec<_> = sigma.iter().filter(|&&x| x != 0).collect();
    nonzero.len() <= 1 && nonzero.iter().all(|&&x| x.abs() <= 1)
}

impl TransitionAmplitudes {
    pub fn new(
        dim: usize,
        num_states: usize,
        num_symbols: usize,
        blank: SymbolId,
        entries: Vec<AmplitudeEntry>,
    ) -> Result<Self, TuringError> {
        let mut rules: HashMap<(StateId, SymbolId), Vec<(Cell, StateId, SymbolId, Complex64)>> =
            HashMap::new();
        for e in entries {
            if e.sigma.len() != dim || !is_axis_move(&e.sigma) {
                return Err(TuringError::BadMove(e.sigma));
            }
            if e.state >= num_states
                || e.new_state >= num_states
                || e.symbol >= num_symbols
                || e.new_symbol >= num_symbols
            {
                return Err(TuringError::IndexOutOfRange(format!(
                    "amplitude entry ({}, {})",
                    e.state, e.symbol
                )));
            }
            if !e.amplitude.re.is_finite() || !e.amplitude.im.is_finite() {
                return Err(TuringError::BadDescription("non-finite amplitude".into()));
            }
            rules
                .entry((e.state, e.symbol))
                .or_default()
                .push((e.sigma, e.new_state, e.new_symbol, e.amplitude));
        }
        for v in rules.values_mut() {
            v.sort_by(|a, b| (&a.0, a.1, a.2).cmp(&(&b.0, b.1, b.2)));
        }
        Ok(Self { dim, num_states, num_symbols, blank, rules })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_symbols(&self) -> usize {
        self.num_symbols
    }

    pub fn blank(&self) -> SymbolId {
        self.blank
    }

    pub fn rule(&self, q: StateId, a: SymbolId) -> &[(Cell, StateId, SymbolId, Complex64)] {
        self.rules.get(&(q, a)).map_or(&[], |v| v.as_slice())
    }
}

/// Lifts a classical TM: u_sigma(q, a, q', a') = 1 exactly when
/// delta(q, a) = (q', a', sigma).
pub fn lift_classical(tm: &ClassicalTM) -> TransitionAmplitudes {
    let mut entries = Vec::new();
    for q in 0..tm.num_states() {
        for a in 0..tm.num_symbols() {
            if let Some((q2, a2, mv)) = tm.delta(q, a) {
                entries.push(AmplitudeEntry {
                    state: q,
                    symbol: a,
                    new_state: q2,
                    new_symbol: a2,
                    sigma: vec![mv.offset()],
                    amplitude: Complex64::new(1.0, 0.0),
                });
            }
        }
    }
    TransitionAmplitudes::new(1, tm.num_states(), tm.num_symbols(), tm.blank, entries)
        .expect("lifted entries are well-formed by construction")
}

/// Shift-machine rule over `dim`-dimensional tape moving along axis 0:
/// matrix A carries the amplitude of the move toward -1, B toward +1
/// (source at i' maps to i' - 1 with A, to i' + 1 with B). The
/// constructor verifies AA* + BB* = I, A*A + B*B = I, AB* = 0.
pub fn shift_machine(
    a: &ComplexMatrix,
    b: &ComplexMatrix,
    dim: usize,
) -> Result<TransitionAmplitudes, TuringError> {
    let n = a.rows();
    if !a.is_square() || !b.is_square() || b.rows() != n {
        return Err(TuringError::BadDescription("A and B must be square of equal size".into()));
    }
    let id = ComplexMatrix::identity(n);
    let r1 = operator_norm(&a.mul(&a.adjoint()).sub(&id.sub(&b.mul(&b.adjoint()))));
    let r2 = operator_norm(&a.adjoint().mul(a).sub(&id.sub(&b.adjoint().mul(b))));
    let r3 = operator_norm(&a.mul(&b.adjoint()));
    if r1 > 1e-12 || r2 > 1e-12 || r3 > 1e-12 {
        return Err(TuringError::ShiftConditionsViolated(r1, r2, r3));
    }
    let mut entries = Vec::new();
    let mut minus = vec![0i64; dim];
    minus[0] = -1;
    let mut plus = vec![0i64; dim];
    plus[0] = 1;
    for src in 0..n {
        for dst in 0..n {
            for (mat, sigma) in [(a, &minus), (b, &plus)] {
                let amp = mat[(dst, src)];
                if amp != Complex64::new(0.0, 0.0) {
                    entries.push(AmplitudeEntry {
                        state: src,
                        symbol: 0,
                        new_state: dst,
                        new_symbol: 0,
                        sigma: sigma.clone(),
                        amplitude: amp,
                    });
                }
            }
        }
    }
    TransitionAmplitudes::new(dim, n, 1, 0, entries)
}

/// Sparse amplitude vector over configurations.
#[derive(Debug, Clone, PartialEq)]
pub struct QTMState {
    pub amps: BTreeMap<Configuration, Complex64>,
}

impl QTMState {
    pub fn basis(config: Configuration) -> Self {
        let mut amps = BTreeMap::new();
        amps.insert(config, Complex64::new(1.0, 0.0));
        Self { amps }
    }

    pub fn from_amplitudes(amps: BTreeMap<Configuration, Complex64>) -> Self {
        Self { amps }
    }

    pub fn norm(&self) -> f64 {
        self.amps.values().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn support(&self) -> usize {
        self.amps.len()
    }
}

/// One application of the local step operator. Summation order is the
/// sorted configuration order, so results are reproducible.
pub fn qtm_step(rule: &TransitionAmplitudes, psi: &QTMState) -> QTMState {
    let mut out: BTreeMap<Configuration, Complex64> = BTreeMap::new();
    for (cfg, &c) in &psi.amps {
        let a = cfg.read(&cfg.head, rule.blank());
        for (sigma, q2, a2, u) in rule.rule(cfg.state, a) {
            let mut t = cfg.clone();
            t.write(cfg.head.clone(), *a2, rule.blank());
            for (x, dx) in t.head.iter_mut().zip(sigma) {
                *x += dx;
            }
            t.state = *q2;
            let entry = out.entry(t).or_insert(Complex64::new(0.0, 0.0));
            *entry += c * u;
        }
    }
    out.retain(|_, v| *v != Complex64::new(0.0, 0.0));
    QTMState { amps: out }
}

/// Rectangular tape window, inclusive bounds per axis.
#[derive(Debug, Clone)]
pub struct Window {
    pub bounds: Vec<(i64, i64)>,
}

impl Window {
    pub fn new(bounds: Vec<(i64, i64)>) -> Self {
        Self { bounds }
    }

    pub fn symmetric(dim: usize, radius: i64) -> Self {
        Self { bounds: vec![(-radius, radius); dim] }
    }

    fn cells(&self) -> Vec<Cell> {
        let mut cells = vec![Vec::new()];
        for &(lo, hi) in &self.bounds {
            let mut next = Vec::new();
            for c in &cells {
                for x in lo..=hi {
                    let mut c2 = c.clone();
                    c2.push(x);
                    next.push(c2);
                }
            }
            cells = next;
        }
        cells
    }

    pub fn contains_interior(&self, cell: &Cell) -> bool {
        cell.iter().zip(&self.bounds).all(|(&x, &(lo, hi))| x > lo && x < hi)
    }

    pub fn contains(&self, cell: &Cell) -> bool {
        cell.iter().zip(&self.bounds).all(|(&x, &(lo, hi))| x >= lo && x <= hi)
    }
}

const MAX_WINDOW_CONFIGS: usize = 20_000;

/// Enumerates every configuration with head in the window and tape
/// support inside the window.
pub fn enumerate_configurations(
    rule: &TransitionAmplitudes,
    window: &Window,
) -> Result<Vec<Configuration>, TuringError> {
    let cells = window.cells();
    let ncells = cells.len() as u128;
    let tapes = (rule.num_symbols() as u128)
        .checked_pow(ncells.min(u32::MAX as u128) as u32)
        .unwrap_or(u128::MAX);
    let total = tapes
        .saturating_mul(ncells)
        .saturating_mul(rule.num_states() as u128);
    if total > MAX_WINDOW_CONFIGS as u128 {
        return Err(TuringError::WindowTooLarge(total, MAX_WINDOW_CONFIGS));
    }
    let mut configs = Vec::with_capacity(total as usize);
    for head in &cells {
        for q in 0..rule.num_states() {
            for code in 0..tapes {
                let mut tape = BTreeMap::new();
                let mut rem = code;
                for cell in &cells {
                    let s = (rem % rule.num_symbols() as u128) as SymbolId;
                    rem /= rule.num_symbols() as u128;
                    if s != rule.blank() {
                        tape.insert(cell.clone(), s);
                    }
                }
                configs.push(Configuration { head: head.clone(), state: q, tape });
            }
        }
    }
    configs.sort();
    Ok(configs)
}

/// Verifies unitarity of the step operator on a finite truncation:
/// assembles the step columns for every configuration in the window and
/// returns the operator norm of (M*M - I) restricted to interior
/// configurations (those whose images cannot leave the window).
///
/// Sources with no outgoing amplitude at all (the halting sector of a
/// lifted classical machine) are skipped: the check verifies that the
/// defined part of the step map is an isometry with orthonormal columns.
pub fn check_local_unitarity(
    rule: &TransitionAmplitudes,
    window: &Window,
) -> Result<f64, TuringError> {
    let configs = enumerate_configurations(rule, window)?;
    let interior: Vec<usize> = configs
        .iter()
        .enumerate()
        .filter(|(_, c)| {
            window.contains_interior(&c.head)
                && !rule.rule(c.state, c.read(&c.head, rule.blank())).is_empty()
        })
        .map(|(i, _)| i)
        .collect();
    if interior.is_empty() {
        return Err(TuringError::EmptyInterior);
    }
    let columns: Vec<BTreeMap<Configuration, Complex64>> = interior
        .iter()
        .map(|&i| qtm_step(rule, &QTMState::basis(configs[i].clone())).amps)
        .collect();
    let n = interior.len();
    let mut gram = ComplexMatrix::zeros(n, n);
    for r in 0..n {
        for c in 0..n {
            let mut dot = Complex64::new(0.0, 0.0);
            for (k, v) in &columns[r] {
                if let Some(w) = columns[c].get(k) {
                    dot += v.conj() * w;
                }
            }
            if r == c {
                dot -= 1.0;
            }
            gram[(r, c)] = dot;
        }
    }
    Ok(operator_norm(&gram))
}

/// Dense step matrix on the enumerated window, row/column order matching
/// `enumerate_configurations`. Targets outside the window are dropped.
pub fn assemble_dense_step(
    rule: &TransitionAmplitudes,
    window: &Window,
) -> Result<(Vec<Configuration>, ComplexMatrix), TuringError> {
    let configs = enumerate_configurations(rule, window)?;
    let index: HashMap<&Configuration, usize> =
        configs.iter().enumerate().map(|(i, c)| (c, i)).collect();
    let n = configs.len();
    let mut m = ComplexMatrix::zeros(n, n);
    for (col, cfg) in configs.iter().enumerate() {
        let stepped = qtm_step(rule, &QTMState::basis(cfg.clone()));
        for (target, amp) in &stepped.amps {
            if window.contains(&target.head) {
                if let Some(&row) = index.get(target) {
                    m[(row, col)] = *amp;
                }
            }
        }
    }
    Ok((configs, m))
}

/// Result of running a QTM to the halting condition.
#[derive(Debug, Clone)]
pub struct HaltingOutcome {
    pub halted: bool,
    pub time: usize,
    /// Probability per tape content, populated when halted.
    pub distribution: BTreeMap<BTreeMap<Cell, SymbolId>, f64>,
}

/// Squared-amplitude mass outside span{e(0, q_final, .)} below this
/// bound counts as halted; exact membership is unavailable in floats.
pub const HALT_LEAK_TOL: f64 = 1e-9;

/// Iterates the step operator from `initial`, testing the halting
/// condition before every step; a budget overrun is reported in the
/// outcome, not as an error.
pub fn run_qtm(
    rule: &TransitionAmplitudes,
    initial: &QTMState,
    final_state: StateId,
    t_max: usize,
) -> HaltingOutcome {
    let origin = vec![0i64; rule.dim()];
    let mut psi = initial.clone();
    for t in 0..=t_max {
        let total: f64 = psi.amps.values().map(|c| c.norm_sqr()).sum();
        let inside: f64 = psi
            .amps
            .iter()
            .filter(|(cfg, _)| cfg.state == final_state && cfg.head == origin)
            .map(|(_, c)| c.norm_sqr())
            .sum();
        if total > 0.0 && total - inside < HALT_LEAK_TOL {
            let mut distribution = BTreeMap::new();
            for (cfg, c) in &psi.amps {
                if cfg.state == final_state && cfg.head == origin {
                    *distribution.entry(cfg.tape.clone()).or_insert(0.0) += c.norm_sqr() / inside;
                }
            }
            return HaltingOutcome { halted: true, time: t, distribution };
        }
        if t == t_max {
            break;
        }
        psi = qtm_step(rule, &psi);
    }
    HaltingOutcome { halted: false, time: t_max, distribution: BTreeMap::new() }
}

// -- machine description file (JSON) ---------------------------------------

/// On-disk QTM/TM description. Classical machines use re = 1, im = 0.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MachineFile {
    pub states: Vec<String>,
    pub initial: String,
    #[serde(rename = "final")]
    pub final_state: String,
    pub alphabet: Vec<String>,
    pub blank: String,
    #[serde(default = "default_dimension")]
    pub dimension: usize,
    #[serde(default)]
    pub transitions: Vec<TransitionRecord>,
    /// Alternative: a content-independent shift rule given by matrices
    /// A (move -1) and B (move +1) as [re, im] pair arrays.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shift: Option<ShiftRecord>,
}

fn default_dimension() -> usize {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransitionRecord {
    pub q: String,
    pub a: String,
    #[serde(rename = "q'")]
    pub q_next: String,
    #[serde(rename = "a'")]
    pub a_next: String,
    pub sigma: SigmaRecord,
    #[serde(default = "one")]
    pub re: f64,
    #[serde(default)]
    pub im: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SigmaRecord {
    Letter(String),
    Offset(i64),
    Vector(Vec<i64>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ShiftRecord {
    pub a: Vec<Vec<[f64; 2]>>,
    pub b: Vec<Vec<[f64; 2]>>,
}

impl SigmaRecord {
    fn to_cell(&self, dim: usize) -> Result<Cell, TuringError> {
        let cell = match self {
            SigmaRecord::Letter(s) => {
                let off = match s.as_str() {
                    "R" => 1,
                    "L" => -1,
                    "N" => 0,
                    other => {
                        return Err(TuringError::BadDescription(format!(
                            "sigma letter must be R, L, or N, got {other:?}"
                        )))
                    }
                };
                let mut c = vec![0; dim];
                if dim > 0 {
                    c[0] = off;
                }
                c
            }
            SigmaRecord::Offset(off) => {
                let mut c = vec![0; dim];
                if dim > 0 {
                    c[0] = *off;
                }
                c
            }
            SigmaRecord::Vector(v) => v.clone(),
        };
        if cell.len() != dim || !is_axis_move(&cell) {
            return Err(TuringError::BadMove(cell));
        }
        Ok(cell)
    }
}

/// Machine loaded from a description file, with name lookup retained for
/// input/output translation.
#[derive(Debug, Clone)]
pub struct LoadedMachine {
    pub rule: TransitionAmplitudes,
    pub states: Vec<String>,
    pub alphabet: Vec<String>,
    pub initial: StateId,
    pub final_state: StateId,
    pub blank: SymbolId,
}

impl LoadedMachine {
    pub fn symbol_id(&self, name: &str) -> Option<SymbolId> {
        self.alphabet.iter().position(|s| s == name)
    }
}

impl MachineFile {
    pub fn build(&self) -> Result<LoadedMachine, TuringError> {
        if let Some(shift) = &self.shift {
            let a = ComplexMatrix::from_real_pairs(&shift.a)?;
            let b = ComplexMatrix::from_real_pairs(&shift.b)?;
            let rule = shift_machine(&a, &b, self.dimension)?;
            let n = rule.num_states();
            return Ok(LoadedMachine {
                rule,
                states: (0..n).map(|i| i.to_string()).collect(),
                alphabet: vec!["_".into()],
                initial: 0,
                final_state: n.saturating_sub(1),
                blank: 0,
            });
        }
        let state_id = |name: &str| -> Result<StateId, TuringError> {
            self.states
                .iter()
                .position(|s| s == name)
                .ok_or_else(|| TuringError::BadDescription(format!("unknown state {name:?}")))
        };
        let symbol_id = |name: &str| -> Result<SymbolId, TuringError> {
            self.alphabet
                .iter()
                .position(|s| s == name)
                .ok_or_else(|| TuringError::BadDescription(format!("unknown symbol {name:?}")))
        };
        let initial = state_id(&self.initial)?;
        let final_state = state_id(&self.final_state)?;
        let blank = symbol_id(&self.blank)?;
        let mut entries = Vec::new();
        for t in &self.transitions {
            entries.push(AmplitudeEntry {
                state: state_id(&t.q)?,
                symbol: symbol_id(&t.a)?,
                new_state: state_id(&t.q_next)?,
                new_symbol: symbol_id(&t.a_next)?,
                sigma: t.sigma.to_cell(self.dimension)?,
                amplitude: Complex64::new(t.re, t.im),
            });
        }
        let rule = TransitionAmplitudes::new(
            self.dimension,
            self.states.len(),
            self.alphabet.len(),
            blank,
            entries,
        )?;
        Ok(LoadedMachine {
            rule,
            states: self.states.clone(),
            alphabet: self.alphabet.clone(),
            initial,
            final_state,
            blank,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// delta(q0, blank) = (q1, mark, N): writes one mark and halts.
    fn one_step_writer() -> ClassicalTM {
        let mut tr = HashMap::new();
        tr.insert((0, 0), (1, 1, Move::N));
        tr.insert((0, 1), (1, 1, Move::N));
        ClassicalTM::new(
            vec!["q0".into(), "q1".into()],
            vec!["_".into(), "1".into()],
            0,
            1,
            0,
            tr,
        )
        .unwrap()
    }

    /// Appends one mark to a unary string and brings the head back to
    /// the origin: scan right over 1s, write a 1 on the first blank,
    /// sweep left, and halt stepping back onto cell 0.
    fn unary_increment() -> ClassicalTM {
        let mut tr = HashMap::new();
        tr.insert((0, 1), (0, 1, Move::R)); // scan right
        tr.insert((0, 0), (1, 1, Move::L)); // append mark, turn around
        tr.insert((1, 1), (1, 1, Move::L)); // sweep back
        tr.insert((1, 0), (2, 0, Move::R)); // blank left of 0: halt at 0
        ClassicalTM::new(
            vec!["scan".into(), "back".into(), "done".into()],
            vec!["_".into(), "1".into()],
            0,
            2,
            0,
            tr,
        )
        .unwrap()
    }

    fn diverging_scanner() -> ClassicalTM {
        let mut tr = HashMap::new();
        tr.insert((0, 0), (0, 0, Move::R));
        tr.insert((0, 1), (0, 1, Move::R));
        ClassicalTM::new(
            vec!["q0".into(), "q1".into()],
            vec!["_".into(), "1".into()],
            0,
            1,
            0,
            tr,
        )
        .unwrap()
    }

    #[test]
    fn classical_step_writer() {
        let tm = one_step_writer();
        let c = Configuration::new(1, 0);
        let c2 = classical_step(&tm, &c).unwrap();
        assert_eq!(c2.state, 1);
        assert_eq!(c2.head, vec![0]);
        assert_eq!(c2.read(&vec![0], tm.blank), 1);
    }

    #[test]
    fn classical_step_scanner_moves_right() {
        let mut tr = HashMap::new();
        tr.insert((0, 1), (0, 1, Move::R));
        tr.insert((0, 0), (1, 0, Move::N));
        let tm = ClassicalTM::new(
            vec!["q0".into(), "q1".into()],
            vec!["_".into(), "1".into()],
            0,
            1,
            0,
            tr,
        )
        .unwrap();
        let mut c = Configuration::new(1, 0);
        c.head = vec![3];
        c.write(vec![3], 1, 0);
        c.write(vec![4], 1, 0);
        let c2 = classical_step(&tm, &c).unwrap();
        assert_eq!(c2.head, vec![4]);
        assert_eq!(c2.tape, c.tape);
    }

    #[test]
    fn classical_step_rejects_halted() {
        let tm = one_step_writer();
        let c = Configuration::new(1, 1);
        assert!(matches!(classical_step(&tm, &c), Err(TuringError::SteppedWhenHalted)));
    }

    #[test]
    fn run_classical_writer() {
        let tm = one_step_writer();
        let r = run_classical(&tm, &[], 10).unwrap();
        assert_eq!(r.output, vec![1]);
        assert_eq!(r.time, 1);
        assert_eq!(r.space, 1);
    }

    #[test]
    fn run_classical_unary_increment() {
        let tm = unary_increment();
        let r = run_classical(&tm, &[1, 1], 100).unwrap();
        assert_eq!(r.output, vec![1, 1, 1]);
        // Hand trace: right over 11, write at 2, sweep back to -1, halt at 0.
        assert_eq!(r.time, 6);
        assert_eq!(r.space, 4);
    }

    #[test]
    fn run_classical_step_limit() {
        let tm = diverging_scanner();
        assert!(matches!(
            run_classical(&tm, &[], 100),
            Err(TuringError::StepLimitExceeded(100))
        ));
    }

    #[test]
    fn missing_transition_rejected() {
        let mut tr = HashMap::new();
        tr.insert((0, 0), (1, 0, Move::N));
        let r = ClassicalTM::new(
            vec!["q0".into(), "q1".into()],
            vec!["_".into(), "1".into()],
            0,
            1,
            0,
            tr,
        );
        assert!(matches!(r, Err(TuringError::MissingTransition { .. })));
    }

    #[test]
    fn lift_writer_amplitudes() {
        let tm = one_step_writer();
        let rule = lift_classical(&tm);
        let entries = rule.rule(0, 0);
        assert_eq!(entries.len(), 1);
        let (sigma, q2, a2, amp) = &entries[0];
        assert_eq!((sigma.as_slice(), *q2, *a2), ([0i64].as_slice(), 1, 1));
        assert_eq!(*amp, Complex64::new(1.0, 0.0));
    }

    #[test]
    fn lifted_matches_classical_trajectory() {
        let tm = unary_increment();
        let rule = lift_classical(&tm);
        let mut c = Configuration::with_input(tm.initial, &[1, 1, 1], tm.blank);
        let mut psi = QTMState::basis(c.clone());
        while c.state != tm.final_state {
            c = classical_step(&tm, &c).unwrap();
            psi = qtm_step(&rule, &psi);
            assert_eq!(psi.support(), 1);
            let (cfg, amp) = psi.amps.iter().next().unwrap();
            assert_eq!(cfg, &c);
            assert_eq!(*amp, Complex64::new(1.0, 0.0));
        }
    }

    #[test]
    fn shift_machine_pure_left_shift() {
        let rule = shift_machine(&ComplexMatrix::identity(2), &ComplexMatrix::zeros(2, 2), 1)
            .unwrap();
        let mut cfg = Configuration::new(1, 0);
        cfg.head = vec![3];
        let psi = qtm_step(&rule, &QTMState::basis(cfg));
        assert_eq!(psi.support(), 1);
        let (target, amp) = psi.amps.iter().next().unwrap();
        assert_eq!(target.head, vec![2]);
        assert_eq!(*amp, Complex64::new(1.0, 0.0));
    }

    #[test]
    fn shift_machine_pure_right_is_valid() {
        assert!(shift_machine(&ComplexMatrix::zeros(2, 2), &ComplexMatrix::identity(2), 1).is_ok());
    }

    #[test]
    fn shift_machine_rejects_equal_split() {
        let mut h = ComplexMatrix::identity(2);
        for i in 0..2 {
            h[(i, i)] = Complex64::new(1.0 / 2f64.sqrt(), 0.0);
        }
        // AB* = I/2 != 0.
        assert!(matches!(
            shift_machine(&h, &h, 1),
            Err(TuringError::ShiftConditionsViolated(..))
        ));
    }

    #[test]
    fn qtm_step_superposition_preserves_norm() {
        let tm = unary_increment();
        let rule = lift_classical(&tm);
        let c1 = Configuration::with_input(0, &[1], 0);
        let c2 = Configuration::with_input(0, &[1, 1], 0);
        let mut amps = BTreeMap::new();
        let w = Complex64::new(1.0 / 2f64.sqrt(), 0.0);
        amps.insert(c1, w);
        amps.insert(c2, w);
        let psi = QTMState::from_amplitudes(amps);
        let out = qtm_step(&rule, &psi);
        assert_eq!(out.support(), 2);
        assert!((out.norm() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn locality_of_step() {
        let tm = unary_increment();
        let rule = lift_classical(&tm);
        let cfg = Configuration::with_input(0, &[1, 1], 0);
        let out = qtm_step(&rule, &QTMState::basis(cfg.clone()));
        for target in out.amps.keys() {
            let d: i64 = target
                .head
                .iter()
                .zip(&cfg.head)
                .map(|(a, b)| (a - b).abs())
                .max()
                .unwrap();
            assert!(d <= 1);
            for (cell, _) in target.tape.iter().chain(cfg.tape.iter()) {
                if cell != &cfg.head {
                    assert_eq!(
                        target.tape.get(cell).copied().unwrap_or(0),
                        cfg.tape.get(cell).copied().unwrap_or(0)
                    );
                }
            }
        }
    }

    #[test]
    fn local_unitarity_shift() {
        let rule = shift_machine(&ComplexMatrix::identity(2), &ComplexMatrix::zeros(2, 2), 1)
            .unwrap();
        let res = check_local_unitarity(&rule, &Window::symmetric(1, 5)).unwrap();
        assert!(res < 1e-14, "residual {res}");
    }

    /// Flips every symbol while moving right; the induced configuration
    /// map is a bijection, so the lifted step is unitary.
    fn reversible_flipper() -> ClassicalTM {
        let mut tr = HashMap::new();
        tr.insert((0, 0), (0, 1, Move::R));
        tr.insert((0, 1), (0, 0, Move::R));
        ClassicalTM::new(
            vec!["q0".into(), "q1".into()],
            vec!["_".into(), "1".into()],
            0,
            1,
            0,
            tr,
        )
        .unwrap()
    }

    #[test]
    fn local_unitarity_lifted_reversible() {
        let rule = lift_classical(&reversible_flipper());
        let res = check_local_unitarity(&rule, &Window::symmetric(1, 2)).unwrap();
        assert!(res < 1e-14, "residual {res}");
    }

    #[test]
    fn local_unitarity_catches_non_isometry() {
        // Two distinct targets with amplitude 1 from the same source.
        let entries = vec![
            AmplitudeEntry {
                state: 0,
                symbol: 0,
                new_state: 0,
                new_symbol: 0,
                sigma: vec![0],
                amplitude: Complex64::new(1.0, 0.0),
            },
            AmplitudeEntry {
                state: 0,
                symbol: 0,
                new_state: 1,
                new_symbol: 0,
                sigma: vec![0],
                amplitude: Complex64::new(1.0, 0.0),
            },
        ];
        let rule = TransitionAmplitudes::new(1, 2, 1, 0, entries).unwrap();
        let res = check_local_unitarity(&rule, &Window::symmetric(1, 2)).unwrap();
        assert!(res > 0.5, "residual {res}");
    }

    #[test]
    fn empty_interior_rejected() {
        let rule = shift_machine(&ComplexMatrix::identity(1), &ComplexMatrix::zeros(1, 1), 1)
            .unwrap();
        let r = check_local_unitarity(&rule, &Window::new(vec![(0, 0)]));
        assert!(matches!(r, Err(TuringError::EmptyInterior)));
    }

    #[test]
    fn run_qtm_probability_rule() {
        // Handcrafted superposition already in the halting span.
        let tm = one_step_writer();
        let rule = lift_classical(&tm);
        let mut f1 = Configuration::new(1, 1);
        f1.write(vec![0], 1, 0);
        let mut f2 = Configuration::new(1, 1);
        f2.write(vec![0], 1, 0);
        f2.write(vec![1], 1, 0);
        let mut amps = BTreeMap::new();
        amps.insert(f1.clone(), Complex64::new(0.6, 0.0));
        amps.insert(f2.clone(), Complex64::new(0.8, 0.0));
        let outcome = run_qtm(&rule, &QTMState::from_amplitudes(amps), 1, 10);
        assert!(outcome.halted);
        assert_eq!(outcome.time, 0);
        assert!((outcome.distribution[&f1.tape] - 0.36).abs() < 1e-12);
        assert!((outcome.distribution[&f2.tape] - 0.64).abs() < 1e-12);
    }

    #[test]
    fn run_qtm_one_step_writer() {
        let tm = one_step_writer();
        let rule = lift_classical(&tm);
        let init = QTMState::basis(Configuration::new(1, 0));
        let outcome = run_qtm(&rule, &init, tm.final_state, 10);
        assert!(outcome.halted);
        assert_eq!(outcome.time, 1);
        let mut expected = BTreeMap::new();
        expected.insert(vec![0i64], 1usize);
        assert!((outcome.distribution[&expected] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn run_qtm_unary_increment_matches_classical() {
        let tm = unary_increment();
        let classical = run_classical(&tm, &[1, 1], 100).unwrap();
        let rule = lift_classical(&tm);
        let init = QTMState::basis(Configuration::with_input(tm.initial, &[1, 1], tm.blank));
        let outcome = run_qtm(&rule, &init, tm.final_state, 100);
        assert!(outcome.halted);
        assert_eq!(outcome.time, classical.time);
        assert_eq!(outcome.distribution.len(), 1);
        let (tape, p) = outcome.distribution.iter().next().unwrap();
        assert!((p - 1.0).abs() < 1e-12);
        let written: Vec<usize> = (0..3).map(|i| *tape.get(&vec![i]).unwrap()).collect();
        assert_eq!(written, vec![1, 1, 1]);
    }

    #[test]
    fn run_qtm_budget_exhaustion_is_an_outcome() {
        let tm = diverging_scanner();
        let rule = lift_classical(&tm);
        let init = QTMState::basis(Configuration::new(1, 0));
        let outcome = run_qtm(&rule, &init, tm.final_state, 5);
        assert!(!outcome.halted);
        assert_eq!(outcome.time, 5);
    }

    #[test]
    fn machine_file_round_trip() {
        let json = r#"{
            "states": ["q0", "q1"],
            "initial": "q0",
            "final": "q1",
            "alphabet": ["_", "1"],
            "blank": "_",
            "dimension": 1,
            "transitions": [
                {"q": "q0", "a": "_", "q'": "q1", "a'": "1", "sigma": "N", "re": 1.0, "im": 0.0},
                {"q": "q0", "a": "1", "q'": "q1", "a'": "1", "sigma": 0}
            ]
        }"#;
        let file: MachineFile = serde_json::from_str(json).unwrap();
        let machine = file.build().unwrap();
        let outcome = run_qtm(
            &machine.rule,
            &QTMState::basis(Configuration::new(1, machine.initial)),
            machine.final_state,
            10,
        );
        assert!(outcome.halted);
        assert_eq!(outcome.time, 1);
    }

    #[test]
    fn bad_move_rejected() {
        let entries = vec![AmplitudeEntry {
            state: 0,
            symbol: 0,
            new_state: 0,
            new_symbol: 0,
            sigma: vec![1, 1],
            amplitude: Complex64::new(1.0, 0.0),
        }];
        assert!(matches!(
            TransitionAmplitudes::new(2, 1, 1, 0, entries),
            Err(TuringError::BadMove(_))
        ));
    }
}
