//! Command-line front door for the qtmlab library. Thin argument
//! handling plus serialization; all physics lives in the library.
//!
//! Exit codes: 0 success, 1 validation error, 2 simulation budget
//! exhausted, 3 tuner could not reach a decoherence-free point.

use clap::{Args, Parser, Subcommand};
use num_complex::Complex64;
use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use qtmlab::circuits::{apply_circuit, index_bits, measure_distribution, CircuitFile, RegisterState};
use qtmlab::linalg::{
    approx_unitary, decompose_simple_form, ComplexMatrix, DecompositionResult, FactorKind,
    DEFAULT_ANGLE_SEARCH_MAX,
};
use qtmlab::spinboson::{
    coefficients, default_time_grid, master_equation_evolve, p_expectation, tune_parameters,
    ModelFile,
};
use qtmlab::turing::{run_qtm, Cell, Configuration, MachineFile, QTMState, SymbolId};

const EXIT_VALIDATION: u8 = 1;
const EXIT_BUDGET: u8 = 2;
const EXIT_UNREACHABLE: u8 = 3;

#[derive(Parser)]
#[command(name = "qtmlab", version, about = "Quantum Turing machines, hypergraph circuits, and spin-boson decoherence")]
struct Cli {
    /// Cap worker threads (also via the QTMLAB_THREADS env var).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Quantum Turing machine simulations.
    Qtm {
        #[command(subcommand)]
        command: QtmCommand,
    },
    /// Hypergraph circuit simulations.
    Circuit {
        #[command(subcommand)]
        command: CircuitCommand,
    },
    /// Spin-boson decoherence analysis.
    Decohere {
        #[command(subcommand)]
        command: DecohereCommand,
    },
    /// Factor a unitary into two-level rotations and phases.
    Decompose(DecomposeArgs),
}

#[derive(Subcommand)]
enum QtmCommand {
    /// Run a machine file until it halts or the step budget runs out.
    Run {
        /// Machine description (JSON).
        machine: PathBuf,
        /// Input word, written with single-character symbols or
        /// comma-separated symbol names.
        #[arg(long, default_value = "")]
        input: String,
        /// Step budget.
        #[arg(long, default_value_t = 1000)]
        t_max: usize,
        /// Output path (stdout when omitted).
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum CircuitCommand {
    /// Apply a circuit file to a basis state and print the measurement
    /// distribution.
    Run {
        /// Circuit description (JSON).
        circuit: PathBuf,
        /// Initial basis state as a bit string, site 1 first.
        #[arg(long, default_value = "")]
        input: String,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum DecohereCommand {
    /// Print nu, gamma, sigma (and phi at zero temperature).
    Coefficients {
        /// Model description (JSON).
        model: PathBuf,
    },
    /// Write the coherence trace as CSV: t, Re<P>, Im<P>, offdiag_abs,
    /// gamma, sigma.
    Curve {
        model: PathBuf,
        #[arg(long, default_value_t = 2000)]
        points: usize,
        /// Time horizon; defaults to 50/(nu*delta).
        #[arg(long)]
        t_max: Option<f64>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Search epsilon for the decoherence-free condition J(nu*delta)=0.
    Tune {
        /// Model description supplying delta and the spectral density.
        model: PathBuf,
        /// Upper end of the epsilon search range (default 10*|delta|).
        #[arg(long)]
        eps_max: Option<f64>,
    },
}

#[derive(Args)]
struct DecomposeArgs {
    /// JSON file {"matrix": [[[re, im], ...], ...]}.
    matrix: PathBuf,
    /// Enables rational-angle mode with this accuracy target.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Base angle for rational-angle mode (default acos(3/5)).
    #[arg(long)]
    theta0: Option<f64>,
    /// Search bound for angle multiples.
    #[arg(long, default_value_t = DEFAULT_ANGLE_SEARCH_MAX)]
    n_max: u64,
    #[arg(long)]
    output: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = cli.threads.or_else(|| {
        std::env::var("QTMLAB_THREADS").ok().and_then(|v| v.parse().ok())
    });
    if let Some(n) = threads {
        // Ignore failure when a pool already exists (tests, repeat calls).
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    match run(cli.command) {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_VALIDATION)
        }
    }
}

fn run(command: Command) -> Result<ExitCode, String> {
    match command {
        Command::Qtm { command: QtmCommand::Run { machine, input, t_max, output } } => {
            cmd_qtm_run(&machine, &input, t_max, output.as_deref())
        }
        Command::Circuit { command: CircuitCommand::Run { circuit, input, output } } => {
            cmd_circuit_run(&circuit, &input, output.as_deref())
        }
        Command::Decohere { command } => match command {
            DecohereCommand::Coefficients { model } => cmd_coefficients(&model),
            DecohereCommand::Curve { model, points, t_max, output } => {
                cmd_curve(&model, points, t_max, output.as_deref())
            }
            DecohereCommand::Tune { model, eps_max } => cmd_tune(&model, eps_max),
        },
        Command::Decompose(args) => cmd_decompose(&args),
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &std::path::Path) -> Result<T, String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("cannot parse {}: {e}", path.display()))
}

fn emit(output: Option<&std::path::Path>, text: &str) -> Result<(), String> {
    match output {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| format!("cannot write {}: {e}", path.display())),
        None => {
            println!("{}", text.trim_end());
            Ok(())
        }
    }
}

// -- qtm run ---------------------------------------------------------------

fn parse_word(alphabet: &[String], input: &str) -> Result<Vec<SymbolId>, String> {
    if input.is_empty() {
        return Ok(Vec::new());
    }
    let lookup = |name: &str| {
        alphabet
            .iter()
            .position(|s| s == name)
            .ok_or_else(|| format!("unknown input symbol {name:?}"))
    };
    if input.contains(',') {
        return input.split(',').map(lookup).collect();
    }
    // Prefer per-character symbols; fall back to one multi-char symbol.
    let per_char: Result<Vec<_>, _> =
        input.chars().map(|c| lookup(&c.to_string())).collect();
    per_char.or_else(|_| Ok(vec![lookup(input)?]))
}

fn render_tape(tape: &BTreeMap<Cell, SymbolId>, alphabet: &[String], blank: SymbolId) -> String {
    if tape.is_empty() {
        return alphabet[blank].clone();
    }
    let dim = tape.keys().next().unwrap().len();
    if dim == 1 {
        let lo = tape.keys().map(|c| c[0]).min().unwrap();
        let hi = tape.keys().map(|c| c[0]).max().unwrap();
        (lo..=hi)
            .map(|x| {
                let sym = tape.get(&vec![x]).copied().unwrap_or(blank);
                alphabet[sym].as_str()
            })
            .collect()
    } else {
        tape.iter()
            .map(|(cell, &sym)| {
                let coords: Vec<String> = cell.iter().map(|v| v.to_string()).collect();
                format!("({}):{}", coords.join(","), alphabet[sym])
            })
            .collect::<Vec<_>>()
            .join(";")
    }
}

fn cmd_qtm_run(
    machine_path: &std::path::Path,
    input: &str,
    t_max: usize,
    output: Option<&std::path::Path>,
) -> Result<ExitCode, String> {
    let file: MachineFile = read_json(machine_path)?;
    let machine = file.build().map_err(|e| e.to_string())?;
    let word = parse_word(&machine.alphabet, input)?;
    let initial = QTMState::basis(Configuration::with_input(
        machine.initial,
        &word,
        machine.blank,
    ));
    let outcome = run_qtm(&machine.rule, &initial, machine.final_state, t_max);
    let mut distribution = serde_json::Map::new();
    for (tape, p) in &outcome.distribution {
        let key = render_tape(tape, &machine.alphabet, machine.blank);
        distribution.insert(key, serde_json::json!(round12(*p)));
    }
    let doc = serde_json::json!({
        "halted": outcome.halted,
        "t": outcome.time,
        "distribution": distribution,
    });
    emit(output, &serde_json::to_string_pretty(&doc).unwrap())?;
    Ok(if outcome.halted { ExitCode::SUCCESS } else { ExitCode::from(EXIT_BUDGET) })
}

// -- circuit run -----------------------------------------------------------

fn round12(p: f64) -> f64 {
    (p * 1e12).round() / 1e12
}

fn cmd_circuit_run(
    circuit_path: &std::path::Path,
    input: &str,
    output: Option<&std::path::Path>,
) -> Result<ExitCode, String> {
    let file: CircuitFile = read_json(circuit_path)?;
    let circuit = file.build().map_err(|e| e.to_string())?;
    let l = circuit.num_qubits();
    let bits: Vec<u8> = if input.is_empty() {
        vec![0; l]
    } else {
        input
            .chars()
            .map(|c| match c {
                '0' => Ok(0u8),
                '1' => Ok(1u8),
                other => Err(format!("input must be a bit string, got {other:?}")),
            })
            .collect::<Result<_, _>>()?
    };
    if bits.len() != l {
        return Err(format!("input has {} bits but the circuit has {l} sites", bits.len()));
    }
    let psi = RegisterState::from_bits(&bits).map_err(|e| e.to_string())?;
    let out = apply_circuit(&circuit, &psi).map_err(|e| e.to_string())?;
    let mut doc = serde_json::Map::new();
    for (index, p) in measure_distribution(&out) {
        let rounded = round12(p);
        if rounded == 0.0 {
            continue;
        }
        let key: String = index_bits(index, l).iter().map(|b| char::from(b'0' + b)).collect();
        doc.insert(key, serde_json::json!(rounded));
    }
    emit(output, &serde_json::to_string_pretty(&serde_json::Value::Object(doc)).unwrap())?;
    Ok(ExitCode::SUCCESS)
}

// -- decohere --------------------------------------------------------------

fn cmd_coefficients(model_path: &std::path::Path) -> Result<ExitCode, String> {
    let file: ModelFile = read_json(model_path)?;
    let model = file.build().map_err(|e| e.to_string())?;
    let es = model.eigensystem();
    let c = coefficients(&model).map_err(|e| e.to_string())?;
    let mut doc = serde_json::Map::new();
    doc.insert("nu".into(), serde_json::json!(es.nu));
    doc.insert("gamma".into(), serde_json::json!(c.gamma));
    doc.insert("sigma".into(), serde_json::json!(c.sigma));
    if let Some(phi) = c.phi {
        doc.insert("phi".into(), serde_json::json!(phi));
    }
    println!("{}", serde_json::to_string_pretty(&serde_json::Value::Object(doc)).unwrap());
    Ok(ExitCode::SUCCESS)
}

fn cmd_curve(
    model_path: &std::path::Path,
    points: usize,
    t_max: Option<f64>,
    output: Option<&std::path::Path>,
) -> Result<ExitCode, String> {
    let file: ModelFile = read_json(model_path)?;
    let model = file.build().map_err(|e| e.to_string())?;
    let es = model.eigensystem();
    let c = coefficients(&model).map_err(|e| e.to_string())?;
    let times = default_time_grid(&es, points.max(2), t_max);
    let up = [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)];
    let mut rho0 = ComplexMatrix::zeros(2, 2);
    rho0[(0, 0)] = Complex64::new(1.0, 0.0);
    let trace = master_equation_evolve(&es, &c, &rho0, &times).map_err(|e| e.to_string())?;
    let mut csv = String::from("t,re_p,im_p,offdiag_abs,gamma,sigma\n");
    for (k, &t) in times.iter().enumerate() {
        let p = p_expectation(&es, &c, up, t);
        csv.push_str(&format!(
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}\n",
            t, p.re, p.im, trace.offdiag_abs[k], c.gamma, c.sigma
        ));
    }
    emit(output, &csv)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_tune(model_path: &std::path::Path, eps_max: Option<f64>) -> Result<ExitCode, String> {
    let file: ModelFile = read_json(model_path)?;
    let model = file.build().map_err(|e| e.to_string())?;
    let result = tune_parameters(&model.sd, model.delta, eps_max.unwrap_or(0.0))
        .map_err(|e| e.to_string())?;
    println!("{}", serde_json::to_string_pretty(&result).unwrap());
    if result.decoherence_free {
        Ok(ExitCode::SUCCESS)
    } else {
        Ok(ExitCode::from(EXIT_UNREACHABLE))
    }
}

// -- decompose -------------------------------------------------------------

#[derive(serde::Deserialize)]
struct MatrixFile {
    matrix: Vec<Vec<[f64; 2]>>,
}

fn factor_json(result: &DecompositionResult) -> serde_json::Value {
    let factors: Vec<serde_json::Value> = result
        .factors
        .iter()
        .enumerate()
        .map(|(k, f)| {
            let mut obj = match f.kind {
                FactorKind::Rotation { i, j, angle } => serde_json::json!({
                    "kind": "rotation", "i": i, "j": j, "angle": angle,
                }),
                FactorKind::Phase { i, angle } => serde_json::json!({
                    "kind": "phase", "i": i, "angle": angle,
                }),
            };
            if let Some(multiples) = &result.angle_multiples {
                obj["n"] = serde_json::json!(multiples[k]);
            }
            obj
        })
        .collect();
    serde_json::json!({
        "count": result.factor_count(),
        "residual": result.residual,
        "factors": factors,
    })
}

fn cmd_decompose(args: &DecomposeArgs) -> Result<ExitCode, String> {
    let file: MatrixFile = read_json(&args.matrix)?;
    let u = ComplexMatrix::from_real_pairs(&file.matrix).map_err(|e| e.to_string())?;
    let result = match args.epsilon {
        None => decompose_simple_form(&u).map_err(|e| e.to_string())?,
        Some(eps) => {
            let theta0 = args.theta0.unwrap_or_else(|| (3.0f64 / 5.0).acos());
            approx_unitary(&u, eps, theta0, args.n_max).map_err(|e| e.to_string())?
        }
    };
    emit(
        args.output.as_deref(),
        &serde_json::to_string_pretty(&factor_json(&result)).unwrap(),
    )?;
    Ok(ExitCode::SUCCESS)
}
