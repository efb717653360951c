//! qtmlab: simulation primitives for idealized quantum computation and
//! its decoherence. Four parts:
//!
//! * [`linalg`] — complex matrices, unitarity checks, simple-form
//!   (two-level rotation + phase) decomposition, and rational-angle
//!   gate approximation.
//! * [`turing`] — classical and quantum Turing machines on 1-D and
//!   d-dimensional tapes with a local unitary step rule, halting
//!   statistics, and a windowed unitarity checker.
//! * [`circuits`] — hypergraph circuits over qubit registers with
//!   tensor-embedded gates and measurement.
//! * [`spinboson`] — the spin-boson model in the stochastic-limit
//!   approximation: damping/shift coefficients from the spectral
//!   density, closed-form coherence decay, a master-equation oracle,
//!   and a decoherence-free parameter tuner.

pub mod circuits;
pub mod linalg;
pub mod spinboson;
pub mod turing;
