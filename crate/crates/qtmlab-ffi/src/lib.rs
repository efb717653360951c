//! C ABI for the qtmlab library.
//!
//! Conventions:
//! * Every function returns a status code: 0 success, 1 validation
//!   error, 2 simulation budget exhausted, 3 decoherence-free point
//!   unreachable, 4 null pointer or invalid UTF-8.
//! * Handles are opaque and freed with the matching `_free` function.
//! * Strings returned through out-parameters are NUL-terminated,
//!   heap-allocated, and must be released with `qtmlab_string_free`.

use std::ffi::{c_char, CStr, CString};
use std::ptr;

use num_complex::Complex64;
use qtmlab::circuits::{apply_circuit, index_bits, measure_distribution, CircuitFile, RegisterState};
use qtmlab::linalg::{approx_unitary, decompose_simple_form, ComplexMatrix, DecompositionResult, FactorKind};
use qtmlab::spinboson::{coefficients, p_expectation, tune_parameters, ModelFile, SpinBosonModel};
use qtmlab::turing::{run_qtm, Configuration, MachineFile, QTMState};

pub const QTMLAB_OK: i32 = 0;
pub const QTMLAB_ERR_VALIDATION: i32 = 1;
pub const QTMLAB_ERR_BUDGET: i32 = 2;
pub const QTMLAB_ERR_UNREACHABLE: i32 = 3;
pub const QTMLAB_ERR_ARGUMENT: i32 = 4;

/// Opaque spin-boson model handle.
pub struct QtmlabModel {
    inner: SpinBosonModel,
}

/// Opaque unitary-decomposition handle.
pub struct QtmlabDecomposition {
    inner: DecompositionResult,
}

/// Factor descriptor: `kind` 0 = two-level rotation on (i, j),
/// 1 = phase on coordinate i (j unused). `n` is the angle multiple in
/// rational-angle mode, or -1 in exact mode.
#[repr(C)]
pub struct QtmlabFactor {
    pub kind: i32,
    pub i: usize,
    pub j: usize,
    pub angle: f64,
    pub n: i64,
}

unsafe fn cstr<'a>(p: *const c_char) -> Result<&'a str, i32> {
    if p.is_null() {
        return Err(QTMLAB_ERR_ARGUMENT);
    }
    CStr::from_ptr(p).to_str().map_err(|_| QTMLAB_ERR_ARGUMENT)
}

unsafe fn out_string(target: *mut *mut c_char, text: String) -> i32 {
    if target.is_null() {
        return QTMLAB_ERR_ARGUMENT;
    }
    match CString::new(text) {
        Ok(s) => {
            *target = s.into_raw();
            QTMLAB_OK
        }
        Err(_) => QTMLAB_ERR_VALIDATION,
    }
}

/// Releases a string returned by this library.
#[no_mangle]
pub unsafe extern "C" fn qtmlab_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses a spin-boson model description (JSON) into a handle.
#[no_mangle]
pub unsafe extern "C" fn qtmlab_model_from_json(
    json: *const c_char,
    out: *mut *mut QtmlabModel,
) -> i32 {
    if out.is_null() {
        return QTMLAB_ERR_ARGUMENT;
    }
    *out = ptr::null_mut();
    let text = match cstr(json) {
        Ok(t) => t,
        Err(code) => return code,
    };
    let file: ModelFile = match serde_json::from_str(text) {
        Ok(f) => f,
        Err(_) => return QTMLAB_ERR_VALIDATION,
    };
    match file.build() {
        Ok(model) => {
            *out = Box::into_raw(Box::new(QtmlabModel { inner: model }));
            QTMLAB_OK
        }
        Err(_) => QTMLAB_ERR_VALIDATION,
    }
}

#[no_mangle]
pub unsafe extern "C" fn qtmlab_model_free(model: *mut QtmlabModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Computes nu, gamma, sigma, and (at zero temperature) phi.
/// `has_phi` receives 0 or 1.
#[no_mangle]
pub unsafe extern "C" fn qtmlab_model_coefficients(
    model: *const QtmlabModel,
    nu: *mut f64,
    gamma: *mut f64,
    sigma: *mut f64,
    phi: *mut f64,
    has_phi: *mut i32,
) -> i32 {
    if model.is_null() || nu.is_null() || gamma.is_null() || sigma.is_null() || phi.is_null()
        || has_phi.is_null()
    {
        return QTMLAB_ERR_ARGUMENT;
    }
    let m = &(*model).inner;
    let es = m.eigensystem();
    match coefficients(m) {
        Ok(c) => {
            *nu = es.nu;
            *gamma = c.gamma;
            *sigma = c.sigma;
            *phi = c.phi.unwrap_or(0.0);
            *has_phi = c.phi.is_some() as i32;
            QTMLAB_OK
        }
        Err(_) => QTMLAB_ERR_VALIDATION,
    }
}

/// <psi0|P(t)|psi0> for psi0 = (re0 + i im0, re1 + i im1) in the
/// sigma_z basis.
#[no_mangle]
pub unsafe extern "C" fn qtmlab_p_expectation(
    model: *const QtmlabModel,
    t: f64,
    re0: f64,
    im0: f64,
    re1: f64,
    im1: f64,
    out_re: *mut f64,
    out_im: *mut f64,
) -> i32 {
    if model.is_null() || out_re.is_null() || out_im.is_null() {
        return QTMLAB_ERR_ARGUMENT;
    }
    let m = &(*model).inner;
    let es = m.eigensystem();
    let c = match coefficients(m) {
        Ok(c) => c,
        Err(_) => return QTMLAB_ERR_VALIDATION,
    };
    let v = p_expectation(
        &es,
        &c,
        [Complex64::new(re0, im0), Complex64::new(re1, im1)],
        t,
    );
    *out_re = v.re;
    *out_im = v.im;
    QTMLAB_OK
}

/// Searches epsilon in [0, eps_max] (eps_max <= 0 selects the default
/// range) for J(nu*delta) = 0 with the model's delta and density.
/// Returns 3 when no decoherence-free point is reachable; the best
/// parameters found are still written.
#[no_mangle]
pub unsafe extern "C" fn qtmlab_tune(
    model: *const QtmlabModel,
    eps_max: f64,
    out_epsilon: *mut f64,
    out_nu: *mut f64,
    out_gamma: *mut f64,
    out_free: *mut i32,
) -> i32 {
    if model.is_null() || out_epsilon.is_null() || out_nu.is_null() || out_gamma.is_null()
        || out_free.is_null()
    {
        return QTMLAB_ERR_ARGUMENT;
    }
    let m = &(*model).inner;
    match tune_parameters(&m.sd, m.delta, eps_max) {
        Ok(r) => {
            *out_epsilon = r.epsilon;
            *out_nu = r.nu;
            *out_gamma = r.gamma;
            *out_free = r.decoherence_free as i32;
            if r.decoherence_free {
                QTMLAB_OK
            } else {
                QTMLAB_ERR_UNREACHABLE
            }
        }
        Err(_) => QTMLAB_ERR_VALIDATION,
    }
}

/// Decomposes a unitary given as JSON {"matrix": [[[re, im], ...], ...]}.
/// epsilon > 0 selects rational-angle mode with base angle theta0
/// (theta0 <= 0 selects acos(3/5)) and search bound n_max.
#[no_mangle]
pub unsafe extern "C" fn qtmlab_decompose(
    matrix_json: *const c_char,
    epsilon: f64,
    theta0: f64,
    n_max: u64,
    out: *mut *mut QtmlabDecomposition,
) -> i32 {
    if out.is_null() {
        return QTMLAB_ERR_ARGUMENT;
    }
    *out = ptr::null_mut();
    let text = match cstr(matrix_json) {
        Ok(t) => t,
        Err(code) => return code,
    };
    #[derive(serde::Deserialize)]
    struct MatrixFile {
        matrix: Vec<Vec<[f64; 2]>>,
    }
    let file: MatrixFile = match serde_json::from_str(text) {
        Ok(f) => f,
        Err(_) => return QTMLAB_ERR_VALIDATION,
    };
    let u = match ComplexMatrix::from_real_pairs(&file.matrix) {
        Ok(u) => u,
        Err(_) => return QTMLAB_ERR_VALIDATION,
    };
    let result = if epsilon > 0.0 {
        let theta0 = if theta0 > 0.0 { theta0 } else { (3.0f64 / 5.0).acos() };
        approx_unitary(&u, epsilon, theta0, n_max)
    } else {
        decompose_simple_form(&u)
    };
    match result {
        Ok(r) => {
            *out = Box::into_raw(Box::new(QtmlabDecomposition { inner: r }));
            QTMLAB_OK
        }
        Err(_) => QTMLAB_ERR_VALIDATION,
    }
}

#[no_mangle]
pub unsafe extern "C" fn qtmlab_decomposition_free(d: *mut QtmlabDecomposition) {
    if !d.is_null() {
        drop(Box::from_raw(d));
    }
}

#[no_mangle]
pub unsafe extern "C" fn qtmlab_decomposition_count(d: *const QtmlabDecomposition) -> usize {
    if d.is_null() {
        return 0;
    }
    (*d).inner.factor_count()
}

#[no_mangle]
pub unsafe extern "C" fn qtmlab_decomposition_residual(d: *const QtmlabDecomposition) -> f64 {
    if d.is_null() {
        return f64::NAN;
    }
    (*d).inner.residual
}

/// Copies factor `k` into `out`.
#[no_mangle]
pub unsafe extern "C" fn qtmlab_decomposition_factor(
    d: *const QtmlabDecomposition,
    k: usize,
    out: *mut QtmlabFactor,
) -> i32 {
    if d.is_null() || out.is_null() {
        return QTMLAB_ERR_ARGUMENT;
    }
    let r = &(*d).inner;
    if k >= r.factor_count() {
        return QTMLAB_ERR_VALIDATION;
    }
    let f = &r.factors[k];
    let n = r.angle_multiples.as_ref().map(|m| m[k] as i64).unwrap_or(-1);
    *out = match f.kind {
        FactorKind::Rotation { i, j, angle } => QtmlabFactor { kind: 0, i, j, angle, n },
        FactorKind::Phase { i, angle } => QtmlabFactor { kind: 1, i, j: 0, angle, n },
    };
    QTMLAB_OK
}

/// Runs a circuit description (JSON) on a basis state given as a bit
/// string ("" selects all zeros) and returns the measurement
/// distribution as a JSON object keyed by bit strings.
#[no_mangle]
pub unsafe extern "C" fn qtmlab_circuit_run_json(
    circuit_json: *const c_char,
    input_bits: *const c_char,
    out_json: *mut *mut c_char,
) -> i32 {
    let text = match cstr(circuit_json) {
        Ok(t) => t,
        Err(code) => return code,
    };
    let input = match cstr(input_bits) {
        Ok(t) => t,
        Err(code) => return code,
    };
    let file: CircuitFile = match serde_json::from_str(text) {
        Ok(f) => f,
        Err(_) => return QTMLAB_ERR_VALIDATION,
    };
    let circuit = match file.build() {
        Ok(c) => c,
        Err(_) => return QTMLAB_ERR_VALIDATION,
    };
    let l = circuit.num_qubits();
    let bits: Vec<u8> = if input.is_empty() {
        vec![0; l]
    } else {
        match input
            .chars()
            .map(|c| match c {
                '0' => Ok(0u8),
                '1' => Ok(1u8),
                _ => Err(()),
            })
            .collect()
        {
            Ok(b) => b,
            Err(()) => return QTMLAB_ERR_VALIDATION,
        }
    };
    if bits.len() != l {
        return QTMLAB_ERR_VALIDATION;
    }
    let psi = match RegisterState::from_bits(&bits) {
        Ok(p) => p,
        Err(_) => return QTMLAB_ERR_VALIDATION,
    };
    let outcome = match apply_circuit(&circuit, &psi) {
        Ok(o) => o,
        Err(_) => return QTMLAB_ERR_VALIDATION,
    };
    let mut doc = serde_json::Map::new();
    for (index, p) in measure_distribution(&outcome) {
        let rounded = (p * 1e12).round() / 1e12;
        if rounded == 0.0 {
            continue;
        }
        let key: String = index_bits(index, l).iter().map(|b| char::from(b'0' + b)).collect();
        doc.insert(key, serde_json::json!(rounded));
    }
    out_string(out_json, serde_json::Value::Object(doc).to_string())
}

/// Runs a machine description (JSON) on an input word (single-character
/// or comma-separated symbols) for at most t_max steps. Returns 0 when
/// halted, 2 when the budget ran out; the outcome JSON
/// {"halted", "t", "distribution"} is written either way.
#[no_mangle]
pub unsafe extern "C" fn qtmlab_qtm_run_json(
    machine_json: *const c_char,
    input_word: *const c_char,
    t_max: usize,
    out_json: *mut *mut c_char,
) -> i32 {
    let text = match cstr(machine_json) {
        Ok(t) => t,
        Err(code) => return code,
    };
    let input = match cstr(input_word) {
        Ok(t) => t,
        Err(code) => return code,
    };
    let file: MachineFile = match serde_json::from_str(text) {
        Ok(f) => f,
        Err(_) => return QTMLAB_ERR_VALIDATION,
    };
    let machine = match file.build() {
        Ok(m) => m,
        Err(_) => return QTMLAB_ERR_VALIDATION,
    };
    let mut word = Vec::new();
    if !input.is_empty() {
        let parts: Vec<&str> = if input.contains(',') {
            input.split(',').collect()
        } else {
            // Single characters; fall through to whole-word lookup below.
            Vec::new()
        };
        if parts.is_empty() {
            for ch in input.chars() {
                match machine.symbol_id(&ch.to_string()) {
                    Some(id) => word.push(id),
                    None => return QTMLAB_ERR_VALIDATION,
                }
            }
        } else {
            for p in parts {
                match machine.symbol_id(p) {
                    Some(id) => word.push(id),
                    None => return QTMLAB_ERR_VALIDATION,
                }
            }
        }
    }
    let initial =
        QTMState::basis(Configuration::with_input(machine.initial, &word, machine.blank));
    let outcome = run_qtm(&machine.rule, &initial, machine.final_state, t_max);
    let mut distribution = serde_json::Map::new();
    for (tape, p) in &outcome.distribution {
        let key = if tape.is_empty() {
            machine.alphabet[machine.blank].clone()
        } else {
            let lo = tape.keys().map(|c| c[0]).min().unwrap();
            let hi = tape.keys().map(|c| c[0]).max().unwrap();
            (lo..=hi)
                .map(|x| {
                    let sym = tape.get(&vec![x]).copied().unwrap_or(machine.blank);
                    machine.alphabet[sym].as_str()
                })
                .collect()
        };
        distribution.insert(key, serde_json::json!(p));
    }
    let doc = serde_json::json!({
        "halted": outcome.halted,
        "t": outcome.time,
        "distribution": distribution,
    });
    let code = out_string(out_json, doc.to_string());
    if code != QTMLAB_OK {
        return code;
    }
    if outcome.halted {
        QTMLAB_OK
    } else {
        QTMLAB_ERR_BUDGET
    }
}
