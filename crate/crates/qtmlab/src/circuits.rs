//! Hypergraph quantum circuits over an l-qubit register: gate embedding
//! by tensoring with the identity, right-to-left circuit application,
//! standard gates, computational-basis bookkeeping, and measurement.
//!
//! Bit-order convention, fixed globally: site 1 is the least significant
//! bit, so a basis index decomposes as a = sum 2^(i-1) a_i over sites i.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

use crate::linalg::{check_unitary, decompose_simple_form, ComplexMatrix};

#[derive(Debug, Error)]
pub enum CircuitError {
    #[error("site index {site} out of range 1..={l}")]
    SiteOutOfRange { site: usize, l: usize },
    #[error("repeated site index {0} in edge")]
    RepeatedSite(usize),
    #[error("gate dimension {dim} does not match 2^{arity} for its edge")]
    DimensionMismatch { dim: usize, arity: usize },
    #[error("edge {edge} has {edge_arity} sites but gate {gate:?} has arity {gate_arity}")]
    InconsistentEdge { edge: usize, edge_arity: usize, gate: String, gate_arity: usize },
    #[error("unknown gate {0:?}")]
    UnknownGate(String),
    #[error("gate {name:?} is not unitary (residual {residual:.3e})")]
    GateNotUnitary { name: String, residual: f64 },
    #[error("gate dimension {0} is not a power of two")]
    NotPowerOfTwo(usize),
    #[error("bit value {0} is not 0 or 1")]
    NotABit(u8),
    #[error("register too large for compilation: l = {0} (limit 5)")]
    RegisterTooLarge(usize),
    #[error(transparent)]
    Linalg(#[from] crate::linalg::LinalgError),
    #[error("invalid circuit description: {0}")]
    BadDescription(String),
}

const DENSE_LIMIT: usize = 24;

/// Amplitudes over computational basis indices; dense up to 24 qubits.
#[derive(Debug, Clone, PartialEq)]
pub struct RegisterState {
    l: usize,
    amps: Amplitudes,
}

#[derive(Debug, Clone, PartialEq)]
enum Amplitudes {
    Dense(Vec<Complex64>),
    Sparse(BTreeMap<u64, Complex64>),
}

impl RegisterState {
    pub fn basis(l: usize, index: u64) -> Self {
        assert!(index < (1u64 << l.min(63)));
        if l <= DENSE_LIMIT {
            let mut v = vec![Complex64::new(0.0, 0.0); 1 << l];
            v[index as usize] = Complex64::new(1.0, 0.0);
            Self { l, amps: Amplitudes::Dense(v) }
        } else {
            let mut m = BTreeMap::new();
            m.insert(index, Complex64::new(1.0, 0.0));
            Self { l, amps: Amplitudes::Sparse(m) }
        }
    }

    pub fn from_bits(bits: &[u8]) -> Result<Self, CircuitError> {
        Ok(Self::basis(bits.len(), basis_index(bits)?))
    }

    pub fn from_dense(l: usize, amps: Vec<Complex64>) -> Self {
        assert_eq!(amps.len(), 1 << l);
        Self { l, amps: Amplitudes::Dense(amps) }
    }

    pub fn num_qubits(&self) -> usize {
        self.l
    }

    pub fn amplitude(&self, index: u64) -> Complex64 {
        match &self.amps {
            Amplitudes::Dense(v) => v[index as usize],
            Amplitudes::Sparse(m) => m.get(&index).copied().unwrap_or(Complex64::new(0.0, 0.0)),
        }
    }

    pub fn norm(&self) -> f64 {
        let s: f64 = match &self.amps {
            Amplitudes::Dense(v) => v.iter().map(|c| c.norm_sqr()).sum(),
            Amplitudes::Sparse(m) => m.values().map(|c| c.norm_sqr()).sum(),
        };
        s.sqrt()
    }

    pub fn dense_amplitudes(&self) -> Vec<Complex64> {
        match &self.amps {
            Amplitudes::Dense(v) => v.clone(),
            Amplitudes::Sparse(m) => {
                let mut v = vec![Complex64::new(0.0, 0.0); 1usize << self.l];
                for (&i, &c) in m {
                    v[i as usize] = c;
                }
                v
            }
        }
    }
}

/// a = sum 2^(i-1) a_i: the first bit carries weight 2^0.
pub fn basis_index(bits: &[u8]) -> Result<u64, CircuitError> {
    let mut a = 0u64;
    for (i, &b) in bits.iter().enumerate() {
        if b > 1 {
            return Err(CircuitError::NotABit(b));
        }
        a |= (b as u64) << i;
    }
    Ok(a)
}

pub fn index_bits(a: u64, l: usize) -> Vec<u8> {
    (0..l).map(|i| ((a >> i) & 1) as u8).collect()
}

fn validate_sites(sites: &[usize], l: usize) -> Result<(), CircuitError> {
    for (k, &s) in sites.iter().enumerate() {
        if s < 1 || s > l {
            return Err(CircuitError::SiteOutOfRange { site: s, l });
        }
        if sites[..k].contains(&s) {
            return Err(CircuitError::RepeatedSite(s));
        }
    }
    Ok(())
}

/// Applies U on the ordered site tuple g, identity elsewhere, without
/// materializing the full register operator. The first site in g is the
/// least significant local bit of U's index space.
pub fn embed_apply(
    u: &ComplexMatrix,
    sites: &[usize],
    psi: &RegisterState,
) -> Result<RegisterState, CircuitError> {
    let l = psi.l;
    validate_sites(sites, l)?;
    let k = sites.len();
    if !u.is_square() || u.rows() != 1usize << k {
        return Err(CircuitError::DimensionMismatch { dim: u.rows(), arity: k });
    }
    let bit_pos: Vec<u64> = sites.iter().map(|&s| (s - 1) as u64).collect();
    let local_index = |global: u64| -> usize {
        bit_pos
            .iter()
            .enumerate()
            .map(|(t, &p)| (((global >> p) & 1) << t) as usize)
            .sum()
    };
    let with_local = |global: u64, local: usize| -> u64 {
        let mut g = global;
        for (t, &p) in bit_pos.iter().enumerate() {
            g = (g & !(1u64 << p)) | ((((local >> t) & 1) as u64) << p);
        }
        g
    };
    match &psi.amps {
        Amplitudes::Dense(v) => {
            let mut out = vec![Complex64::new(0.0, 0.0); v.len()];
            let dim = 1usize << k;
            let mask: u64 = bit_pos.iter().map(|&p| 1u64 << p).sum();
            for base in 0..v.len() as u64 {
                if base & mask != 0 {
                    continue;
                }
                // Gather the 2^k amplitudes over the g coordinates.
                let idx: Vec<u64> = (0..dim).map(|loc| with_local(base, loc)).collect();
                for (row, &target) in idx.iter().enumerate() {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for (col, &source) in idx.iter().enumerate() {
                        acc += u[(row, col)] * v[source as usize];
                    }
                    out[target as usize] = acc;
                }
            }
            Ok(RegisterState { l, amps: Amplitudes::Dense(out) })
        }
        Amplitudes::Sparse(m) => {
            let mut out: BTreeMap<u64, Complex64> = BTreeMap::new();
            for (&idx, &amp) in m {
                let col = local_index(idx);
                for row in 0..1usize << k {
                    let coef = u[(row, col)];
                    if coef == Complex64::new(0.0, 0.0) {
                        continue;
                    }
                    *out.entry(with_local(idx, row)).or_insert(Complex64::new(0.0, 0.0)) +=
                        coef * amp;
                }
            }
            out.retain(|_, v| *v != Complex64::new(0.0, 0.0));
            Ok(RegisterState { l, amps: Amplitudes::Sparse(out) })
        }
    }
}

/// Ordered hyperedges over sites 1..=l.
#[derive(Debug, Clone)]
pub struct Hypergraph {
    pub l: usize,
    pub edges: Vec<Vec<usize>>,
}

impl Hypergraph {
    pub fn new(l: usize, edges: Vec<Vec<usize>>) -> Result<Self, CircuitError> {
        for e in &edges {
            validate_sites(e, l)?;
        }
        Ok(Self { l, edges })
    }
}

/// Named unitary gates; each must be unitary to 1e-12 with power-of-two
/// dimension.
#[derive(Debug, Clone)]
pub struct GateBasis {
    gates: Vec<(String, ComplexMatrix)>,
}

impl GateBasis {
    pub fn new(gates: Vec<(String, ComplexMatrix)>) -> Result<Self, CircuitError> {
        for (name, m) in &gates {
            if !m.rows().is_power_of_two() {
                return Err(CircuitError::NotPowerOfTwo(m.rows()));
            }
            let (ok, residual) = check_unitary(m, 1e-12)?;
            if !ok {
                return Err(CircuitError::GateNotUnitary { name: name.clone(), residual });
            }
        }
        Ok(Self { gates })
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.gates.iter().position(|(n, _)| n == name)
    }

    pub fn gate(&self, index: usize) -> &ComplexMatrix {
        &self.gates[index].1
    }

    pub fn name(&self, index: usize) -> &str {
        &self.gates[index].0
    }

    pub fn arity(&self, index: usize) -> usize {
        self.gates[index].1.rows().trailing_zeros() as usize
    }
}

/// The 5-tuple: hypergraph, gate basis, and edge-to-gate assignment.
#[derive(Debug, Clone)]
pub struct QuantumCircuit {
    pub hypergraph: Hypergraph,
    pub basis: GateBasis,
    pub assignment: Vec<usize>,
}

impl QuantumCircuit {
    pub fn new(
        hypergraph: Hypergraph,
        basis: GateBasis,
        assignment: Vec<usize>,
    ) -> Result<Self, CircuitError> {
        if assignment.len() != hypergraph.edges.len() {
            return Err(CircuitError::BadDescription(format!(
                "{} edges but {} gate assignments",
                hypergraph.edges.len(),
                assignment.len()
            )));
        }
        for (i, (&g, edge)) in assignment.iter().zip(&hypergraph.edges).enumerate() {
            let arity = basis.arity(g);
            if edge.len() != arity {
                return Err(CircuitError::InconsistentEdge {
                    edge: i,
                    edge_arity: edge.len(),
                    gate: basis.name(g).to_string(),
                    gate_arity: arity,
                });
            }
        }
        Ok(Self { hypergraph, basis, assignment })
    }

    pub fn num_qubits(&self) -> usize {
        self.hypergraph.l
    }
}

/// U_Gamma applied edge by edge in order, first edge acting first.
pub fn apply_circuit(
    circuit: &QuantumCircuit,
    psi: &RegisterState,
) -> Result<RegisterState, CircuitError> {
    let mut state = psi.clone();
    for (edge, &g) in circuit.hypergraph.edges.iter().zip(&circuit.assignment) {
        state = embed_apply(circuit.basis.gate(g), edge, &state)?;
    }
    Ok(state)
}

/// Born-rule distribution over basis indices, zero entries omitted.
pub fn measure_distribution(psi: &RegisterState) -> BTreeMap<u64, f64> {
    let mut out = BTreeMap::new();
    match &psi.amps {
        Amplitudes::Dense(v) => {
            for (i, c) in v.iter().enumerate() {
                let p = c.norm_sqr();
                if p > 0.0 {
                    out.insert(i as u64, p);
                }
            }
        }
        Amplitudes::Sparse(m) => {
            for (&i, c) in m {
                let p = c.norm_sqr();
                if p > 0.0 {
                    out.insert(i, p);
                }
            }
        }
    }
    out
}

// -- standard gates --------------------------------------------------------

fn c64(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Controlled NOT on |a, b> -> |a, a XOR b>; the first (least
/// significant) site is the control.
pub fn cnot() -> ComplexMatrix {
    let z = c64(0.0, 0.0);
    let o = c64(1.0, 0.0);
    // Index n = a + 2b.
    ComplexMatrix::new(
        4,
        4,
        vec![
            o, z, z, z, //
            z, z, z, o, //
            z, z, o, z, //
            z, o, z, z,
        ],
    )
    .unwrap()
}

pub fn pauli_x() -> ComplexMatrix {
    let z = c64(0.0, 0.0);
    let o = c64(1.0, 0.0);
    ComplexMatrix::new(2, 2, vec![z, o, o, z]).unwrap()
}

/// Real 2x2 rotation by theta.
pub fn rotation_gate(theta: f64) -> ComplexMatrix {
    let (s, c) = theta.sin_cos();
    ComplexMatrix::new(2, 2, vec![c64(c, 0.0), c64(-s, 0.0), c64(s, 0.0), c64(c, 0.0)]).unwrap()
}

/// diag(1, e^{i theta}).
pub fn phase_gate(theta: f64) -> ComplexMatrix {
    let z = c64(0.0, 0.0);
    ComplexMatrix::new(2, 2, vec![c64(1.0, 0.0), z, z, Complex64::from_polar(1.0, theta)]).unwrap()
}

/// Compiles a register unitary into a circuit of two-level gates, each
/// acting nontrivially on a two-dimensional subspace of the register.
/// Gate count is bounded by 2 d^2 - d with d = 2^l.
pub fn compile_two_level(u: &ComplexMatrix, l: usize) -> Result<QuantumCircuit, CircuitError> {
    if l > 5 {
        return Err(CircuitError::RegisterTooLarge(l));
    }
    if u.rows() != 1usize << l {
        return Err(CircuitError::DimensionMismatch { dim: u.rows(), arity: l });
    }
    let decomposition = decompose_simple_form(u)?;
    let all_sites: Vec<usize> = (1..=l).collect();
    let mut gates = Vec::new();
    let mut edges = Vec::new();
    let mut assignment = Vec::new();
    // The factor list has factors[0] leftmost (applied last to a state),
    // while circuits apply their first edge first: reverse the order.
    for (k, factor) in decomposition.factors.iter().rev().enumerate() {
        gates.push((format!("tl{k}"), factor.realize()));
        edges.push(all_sites.clone());
        assignment.push(k);
    }
    QuantumCircuit::new(Hypergraph::new(l, edges)?, GateBasis::new(gates)?, assignment)
}

// -- circuit description file (JSON) ---------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CircuitFile {
    pub l: usize,
    #[serde(default)]
    pub gates: Vec<GateRecord>,
    pub edges: Vec<EdgeRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GateRecord {
    pub name: String,
    /// Rows of [re, im] pairs; omitted for built-ins.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<Vec<Vec<[f64; 2]>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arity: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EdgeRecord {
    pub sites: Vec<usize>,
    pub gate: String,
}

/// Resolves a gate name: a declared custom gate or one of the built-ins
/// CNOT, X, ROT(theta), PHASE(theta).
fn builtin_gate(name: &str) -> Result<Option<ComplexMatrix>, CircuitError> {
    let parse_angle = |inner: &str| -> Result<f64, CircuitError> {
        inner
            .trim()
            .parse::<f64>()
            .map_err(|_| CircuitError::BadDescription(format!("bad gate angle in {name:?}")))
    };
    if name == "CNOT" {
        return Ok(Some(cnot()));
    }
    if name == "X" {
        return Ok(Some(pauli_x()));
    }
    if let Some(inner) = name.strip_prefix("ROT(").and_then(|s| s.strip_suffix(')')) {
        return Ok(Some(rotation_gate(parse_angle(inner)?)));
    }
    if let Some(inner) = name.strip_prefix("PHASE(").and_then(|s| s.strip_suffix(')')) {
        return Ok(Some(phase_gate(parse_angle(inner)?)));
    }
    Ok(None)
}

impl CircuitFile {
    pub fn build(&self) -> Result<QuantumCircuit, CircuitError> {
        let mut gates: Vec<(String, ComplexMatrix)> = Vec::new();
        for g in &self.gates {
            let matrix = match &g.matrix {
                Some(rows) => ComplexMatrix::from_real_pairs(rows)?,
                None => builtin_gate(&g.name)?
                    .ok_or_else(|| CircuitError::UnknownGate(g.name.clone()))?,
            };
            if let Some(arity) = g.arity {
                if matrix.rows() != 1usize << arity {
                    return Err(CircuitError::DimensionMismatch { dim: matrix.rows(), arity });
                }
            }
            gates.push((g.name.clone(), matrix));
        }
        let mut edges = Vec::new();
        let mut assignment = Vec::new();
        for e in &self.edges {
            let idx = match gates.iter().position(|(n, _)| n == &e.gate) {
                Some(i) => i,
                None => {
                    let m = builtin_gate(&e.gate)?
                        .ok_or_else(|| CircuitError::UnknownGate(e.gate.clone()))?;
                    gates.push((e.gate.clone(), m));
                    gates.len() - 1
                }
            };
            edges.push(e.sites.clone());
            assignment.push(idx);
        }
        QuantumCircuit::new(Hypergraph::new(self.l, edges)?, GateBasis::new(gates)?, assignment)
    }
}
