//! Subcommand implementations. Each writes its human-readable report to
//! `out` and returns a structured result for the caller.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use swapsim_core::classical::{generate_rows, label_row, random_interpretations, table1_fixture};
use swapsim_core::contexts::{context_outcomes, pair_projector, ContextName, EVE_PAIR};
use swapsim_core::protocol::{PartitionKey, SimulationPlan, TrialRecord};
use swapsim_core::qcore::{
    bell_state, expand_in_pair_bases, gram_residual, partial_trace, product_state, raw_norm_sqr,
    BellKind, DensityMatrix, Expansion, StateVector, TOLERANCE,
};
use swapsim_core::stats::{chsh, ChshResult, ChshSettings};

use crate::config::{Format, RunConfig};
use crate::io::{read_classical, read_trials, write_classical, write_trials, ClassicalRecord};
use crate::render;
use crate::CliError;

/// One exact-algebra check and its residual.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub residual: f64,
    pub tolerance: f64,
}

impl Check {
    fn new(name: impl Into<String>, residual: f64) -> Self {
        Self {
            name: name.into(),
            residual,
            tolerance: TOLERANCE,
        }
    }

    pub fn passed(&self) -> bool {
        self.residual <= self.tolerance
    }
}

#[derive(Debug, Clone)]
pub struct AlgebraReport {
    pub checks: Vec<Check>,
    pub bell_expansion: Expansion,
    pub product_expansion: Expansion,
    pub reduced: Vec<DensityMatrix>,
}

impl AlgebraReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(Check::passed)
    }
}

/// Bell⊗Bell coefficients of the two-singlet state, rows (1,4) and columns
/// (2,3) in the order Ψ⁻, Ψ⁺, Φ⁻, Φ⁺. Frozen from a brute-force expansion.
pub const EXPECTED_BELL_DIAGONAL: [f64; 4] = [-0.5, 0.5, 0.5, -0.5];

/// Nonzero product⊗product coefficients as `((b₁,b₄), (b₂,b₃), value)`.
pub const EXPECTED_PRODUCT_TERMS: [((u8, u8), (u8, u8), f64); 4] = [
    ((0, 1), (1, 0), 0.5),
    ((0, 0), (1, 1), -0.5),
    ((1, 1), (0, 0), -0.5),
    ((1, 0), (0, 1), 0.5),
];

fn max_diff(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

/// Runs the exact-algebra suite.
pub fn verify_algebra(out: &mut dyn Write) -> Result<AlgebraReport, CliError> {
    let psi = StateVector::two_singlets();
    let bell = BellKind::ALL.map(bell_state);
    let prod = [(0, 0), (0, 1), (1, 0), (1, 1)].map(|(a, b)| product_state(a, b));

    let mut checks = vec![
        Check::new("Bell basis orthonormal", gram_residual(&bell)),
        Check::new("product basis orthonormal", gram_residual(&prod)),
        Check::new("two-singlet state normalized", (psi.norm_sqr() - 1.0).abs()),
    ];

    let bell_expansion =
        expand_in_pair_bases(&psi, &bell, &bell).map_err(|e| CliError::check(e.to_string()))?;
    let product_expansion =
        expand_in_pair_bases(&psi, &prod, &prod).map_err(|e| CliError::check(e.to_string()))?;

    let mut bell_residual = 0.0f64;
    for m in 0..4 {
        for n in 0..4 {
            let want = if m == n { EXPECTED_BELL_DIAGONAL[m] } else { 0.0 };
            bell_residual = bell_residual.max((bell_expansion.get(m, n) - want).norm());
        }
    }
    let mut product_residual = 0.0f64;
    for m in 0..4 {
        for n in 0..4 {
            let want = EXPECTED_PRODUCT_TERMS
                .iter()
                .find(|((a, b), (c, d), _)| usize::from(2 * a + b) == m && usize::from(2 * c + d) == n)
                .map_or(0.0, |t| t.2);
            product_residual = product_residual.max((product_expansion.get(m, n) - want).norm());
        }
    }
    checks.push(Check::new("Bell⊗Bell coefficients", bell_residual));
    checks.push(Check::new("product⊗product coefficients", product_residual));
    checks.push(Check::new("Parseval (Bell⊗Bell)", (bell_expansion.weight() - 1.0).abs()));
    checks.push(Check::new("Parseval (product⊗product)", (product_expansion.weight() - 1.0).abs()));
    checks.push(Check::new(
        "round trip (Bell⊗Bell)",
        max_diff(&bell_expansion.reconstruct(), psi.amplitudes()),
    ));
    checks.push(Check::new(
        "round trip (product⊗product)",
        max_diff(&product_expansion.reconstruct(), psi.amplitudes()),
    ));

    let mut reduced = Vec::new();
    for k in 1..=4u8 {
        let rho = partial_trace(&psi, &[k]).map_err(|e| CliError::check(e.to_string()))?;
        let residual = rho
            .max_abs_diff(&DensityMatrix::maximally_mixed(k))
            .unwrap_or(f64::INFINITY);
        checks.push(Check::new(format!("particle {k} reduces to (1/2)I"), residual));
        reduced.push(rho);
    }

    for name in ContextName::ALL {
        let ctx = context_outcomes(name);
        let mut residual = 0.0f64;
        for i in 0..4 {
            let p = pair_projector(&ctx, i, EVE_PAIR).map_err(|e| CliError::check(e.to_string()))?;
            residual = residual.max((raw_norm_sqr(&p.apply(psi.amplitudes())) - 0.25).abs());
        }
        checks.push(Check::new(format!("{name} outcomes have probability 1/4"), residual));
    }

    writeln!(out, "Bell⊗Bell coefficients (rows: pair 1,4; columns: pair 2,3)")?;
    writeln!(out, "{:>6} {:>9} {:>9} {:>9} {:>9}", "", "Ψ⁻", "Ψ⁺", "Φ⁻", "Φ⁺")?;
    for (m, kind) in BellKind::ALL.iter().enumerate() {
        write!(out, "{:>6}", kind.symbol())?;
        for n in 0..4 {
            write!(out, " {:>+9.4}", bell_expansion.get(m, n).re + 0.0)?;
        }
        writeln!(out)?;
    }
    writeln!(out, "\nproduct⊗product nonzero coefficients")?;
    for (m, n, c) in product_expansion.support() {
        writeln!(out, "  |{}{}⟩₁₄|{}{}⟩₂₃  {:+.4}", m >> 1, m & 1, n >> 1, n & 1, c.re)?;
    }
    let rho1 = &reduced[0];
    writeln!(
        out,
        "\nreduced density matrix of particle 1: diag({:.4}, {:.4})",
        rho1.entry(0, 0).re,
        rho1.entry(1, 1).re
    )?;
    write!(out, "{rho1}")?;
    writeln!(out)?;
    for c in &checks {
        writeln!(
            out,
            "[{}] {:<40} residual {:.3e} (tol {:.0e})",
            if c.passed() { "PASS" } else { "FAIL" },
            c.name,
            c.residual,
            c.tolerance
        )?;
    }
    Ok(AlgebraReport {
        checks,
        bell_expansion,
        product_expansion,
        reduced,
    })
}

fn create_output(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

fn open_input(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))
}

pub fn quantum_plan(config: &RunConfig) -> Result<SimulationPlan, CliError> {
    config.validate()?;
    Ok(SimulationPlan {
        master_seed: config.master_seed,
        trials_per_setting: config.trials,
        settings: config.setting_pairs(),
        ordering: config.ordering,
        policy: config.eve_policy,
    })
}

/// Runs the configured trials and writes the log to the output path, or to
/// `out` if none is set.
pub fn simulate_quantum(config: &RunConfig, out: &mut dyn Write) -> Result<Vec<TrialRecord>, CliError> {
    let plan = quantum_plan(config)?;
    let records = plan.run().map_err(|e| CliError::check(e.to_string()))?;
    match &config.output_path {
        Some(path) => {
            let mut w = create_output(path)?;
            write_trials(&records, config.format, &mut w)?;
            w.flush()?;
        }
        None => write_trials(&records, config.format, &mut *out)?,
    }
    Ok(records)
}

/// The 30-row reference fixture with its three printed views.
pub fn fixture_records() -> Vec<ClassicalRecord> {
    let table = table1_fixture();
    table
        .rows
        .iter()
        .enumerate()
        .map(|(i, row)| ClassicalRecord {
            row: *row,
            views: table
                .views
                .iter()
                .map(|v| (v.interpretations[i], v.labels[i]))
                .collect(),
        })
        .collect()
}

/// Rows from stream 0 of the master seed; view `k` draws its per-row
/// choices from stream `k`.
pub fn generate_classical(config: &RunConfig) -> Result<Vec<ClassicalRecord>, CliError> {
    config.validate()?;
    let n = usize::try_from(config.trials).map_err(|_| CliError::usage("too many rows"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.master_seed);
    let rows = generate_rows(n, &mut rng);
    let views: Vec<Vec<_>> = (1..=config.views as u64)
        .map(|k| {
            let mut vrng = ChaCha8Rng::seed_from_u64(config.master_seed);
            vrng.set_stream(k);
            random_interpretations(n, config.coincidence_q, &mut vrng)
        })
        .collect();
    rows.iter()
        .enumerate()
        .map(|(i, row)| {
            let labels = views
                .iter()
                .map(|v| {
                    let cp = v[i];
                    label_row(row, cp)
                        .map(|label| (cp, label))
                        .map_err(|e| CliError::check(e.to_string()))
                })
                .collect::<Result<_, _>>()?;
            Ok(ClassicalRecord { row: *row, views: labels })
        })
        .collect()
}

pub fn simulate_classical(
    config: &RunConfig,
    fixture: bool,
    out: &mut dyn Write,
) -> Result<Vec<ClassicalRecord>, CliError> {
    let (records, views) = if fixture {
        (fixture_records(), 3)
    } else {
        (generate_classical(config)?, config.views)
    };
    match &config.output_path {
        Some(path) => {
            let mut w = create_output(path)?;
            write_classical(&records, views, config.format, &mut w)?;
            w.flush()?;
        }
        None => write_classical(&records, views, config.format, &mut *out)?,
    }
    Ok(records)
}

pub fn load_trials(path: &Path, format: Option<Format>) -> Result<Vec<TrialRecord>, CliError> {
    let format = format.unwrap_or_else(|| Format::from_path(path));
    read_trials(open_input(path)?, format)
}

/// Prints the four correlators, S and the violation verdict at `sigmas`.
pub fn chsh_report(
    records: &[TrialRecord],
    key: Option<PartitionKey>,
    settings: ChshSettings,
    sigmas: f64,
    out: &mut dyn Write,
) -> Result<ChshResult, CliError> {
    let result = chsh(records, key, settings).map_err(|e| CliError::check(e.to_string()))?;
    let cond = key.map_or_else(|| "unconditioned".to_string(), |k| k.to_string());
    writeln!(out, "CHSH on {} records, conditioning {cond}", records.len())?;
    let names = ["E(a,b)", "E(a,b')", "E(a',b)", "E(a',b')"];
    for ((name, (alice, bob)), e) in names.iter().zip(settings.cells()).zip(&result.correlators) {
        writeln!(
            out,
            "  {name:<9} alice {alice:+.6} bob {bob:+.6}  {:+.5} ± {:.5}  (n = {})",
            e.value, e.std_error, e.n
        )?;
    }
    writeln!(out, "  S = {:+.5} ± {:.5}", result.s_value, result.std_error)?;
    writeln!(out, "  |S| - 2 = {:+.2} σ", result.violation_sigmas())?;
    let verdict = if result.violated(sigmas) { "violated" } else { "not violated" };
    writeln!(out, "  verdict: {verdict} (threshold {sigmas} σ)")?;
    Ok(result)
}

pub fn render_file(path: &Path, format: Option<Format>, views: Option<&[usize]>) -> Result<String, CliError> {
    let format = format.unwrap_or_else(|| Format::from_path(path));
    let (records, available) = read_classical(open_input(path)?, format)?;
    let selected: Vec<usize> = match views {
        Some(v) => v
            .iter()
            .map(|&k| {
                if k == 0 || k > available {
                    Err(CliError::usage(format!("view {k} outside 1..={available}")))
                } else {
                    Ok(k - 1)
                }
            })
            .collect::<Result<_, _>>()?,
        None => (0..available).collect(),
    };
    Ok(render::render_table(&records, &selected))
}
