use std::fs;
use std::path::Path;

use nsgate::bound::{numeric_search, sample_region, scan_curve, SearchConfig, SEARCH_FEASIBLE_RESIDUAL};
use nsgate::conditional::{completeness_defect, ConditionalScheme, DensityMatrix};
use nsgate::fock::{LopCircuit, OccupationVector};
use nsgate::ns_gate::{compare_ancilla_reduction, klm_optimum, ns_scheme, verify_ns, NsReport};
use nsgate::random::{haar_unitary, random_state, stream_rng};
use nsgate::CMatrix;
use num_complex::Complex64;
use serde::Serialize;

use crate::args::{Cli, Command, Format};
use crate::output::{csv, emit, json, sig12};

/// Probabilities above this, at residual below the search threshold, would
/// contradict the one-photon bound.
const BOUND_SLACK: f64 = 1e-6;

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Io(String),
    Verification(String),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Verification(_) => 1,
            Failure::Io(_) => 2,
            Failure::Usage(_) => 64,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Io(m) | Failure::Verification(m) => m,
        }
    }
}

impl From<nsgate::Error> for Failure {
    fn from(e: nsgate::Error) -> Self {
        match e {
            nsgate::Error::NotUnitary { .. } | nsgate::Error::Infeasible(_) => Failure::Verification(e.to_string()),
            _ => Failure::Usage(e.to_string()),
        }
    }
}

/// What a command produced: text for stdout/`--output`, a one-line status
/// for stderr, and whether its check passed.
struct Outcome {
    text: String,
    status: String,
    passed: bool,
}

pub fn run(cli: &Cli) -> Result<String, Failure> {
    let outcome = match &cli.command {
        Command::VerifyKlm => verify_klm(cli)?,
        Command::ScanCurve => scan(cli)?,
        Command::Region => region(cli)?,
        Command::Optimize => optimize(cli)?,
        Command::KrausCheck { unitary } => kraus_check(cli, unitary.as_deref())?,
        Command::ReduceDemo => reduce_demo(cli)?,
    };
    emit(&outcome.text, cli.output.as_deref()).map_err(|e| {
        let target = cli
            .output
            .as_ref()
            .map_or_else(|| "stdout".to_string(), |p| p.display().to_string());
        Failure::Io(format!("cannot write {target}: {e}"))
    })?;
    if outcome.passed {
        Ok(outcome.status)
    } else {
        Err(Failure::Verification(outcome.status))
    }
}

fn format_or(cli: &Cli, default: Format) -> Format {
    cli.format.unwrap_or(default)
}

fn check_tol(cli: &Cli) -> Result<f64, Failure> {
    if cli.tol > 0.0 && cli.tol.is_finite() {
        Ok(cli.tol)
    } else {
        Err(Failure::Usage(format!("--tol must be positive, got {}", cli.tol)))
    }
}

fn pair(z: Complex64) -> [f64; 2] {
    [z.re, z.im]
}

#[derive(Serialize)]
struct OutcomeRow {
    outcome: String,
    m0: [f64; 2],
    m1: [f64; 2],
    m2: [f64; 2],
    residual: f64,
    probability: f64,
}

#[derive(Serialize)]
struct ReportDoc {
    outcomes: Vec<OutcomeRow>,
    condition_residual: f64,
    success_probability: f64,
}

fn report_doc(report: &NsReport) -> ReportDoc {
    ReportDoc {
        outcomes: report
            .outcomes
            .iter()
            .map(|o| OutcomeRow {
                outcome: o.outcome.to_string(),
                m0: pair(o.m0),
                m1: pair(o.m1),
                m2: pair(o.m2),
                residual: o.residual,
                probability: o.probability,
            })
            .collect(),
        condition_residual: report.condition_residual,
        success_probability: report.success_probability,
    }
}

fn verify_klm(cli: &Cli) -> Result<Outcome, Failure> {
    let tol = check_tol(cli)?;
    let design = klm_optimum();
    let report = verify_ns(&design.lop, &design.scheme())?;
    let text = match format_or(cli, Format::Csv) {
        Format::Json => json(&report_doc(&report)),
        Format::Csv => csv(
            &[
                "outcome",
                "m0_re",
                "m0_im",
                "m1_re",
                "m1_im",
                "m2_re",
                "m2_im",
                "residual",
                "probability",
            ],
            report.outcomes.iter().map(|o| {
                let mut row = vec![o.outcome.to_string()];
                for z in [o.m0, o.m1, o.m2] {
                    row.push(sig12(z.re));
                    row.push(sig12(z.im));
                }
                row.push(sig12(o.residual));
                row.push(sig12(o.probability));
                row
            }),
        ),
    };
    let p = report.success_probability;
    let r = report.condition_residual;
    let passed = r <= tol && (p - 0.25).abs() <= tol;
    Ok(Outcome {
        text,
        status: format!("p = {} residual = {:e}", sig12(p), r),
        passed,
    })
}

#[derive(Serialize)]
struct CurveRow {
    x2: f64,
    y2: f64,
    p: f64,
}

fn scan(cli: &Cli) -> Result<Outcome, Failure> {
    let samples = scan_curve(cli.grid_n)?;
    let text = match format_or(cli, Format::Csv) {
        Format::Csv => csv(
            &["x2", "y2", "p"],
            samples.iter().map(|s| vec![sig12(s.x2), sig12(s.y2), sig12(s.p)]),
        ),
        Format::Json => json(
            &samples
                .iter()
                .map(|s| CurveRow {
                    x2: s.x2,
                    y2: s.y2,
                    p: s.p,
                })
                .collect::<Vec<_>>(),
        ),
    };
    let peak = samples.iter().map(|s| s.p).fold(0.0, f64::max);
    Ok(Outcome {
        text,
        status: format!("{} boundary samples, largest p = {}", samples.len(), sig12(peak)),
        passed: true,
    })
}

fn region(cli: &Cli) -> Result<Outcome, Failure> {
    let samples = sample_region(cli.grid_n)?;
    let text = match format_or(cli, Format::Csv) {
        Format::Csv => csv(
            &["x2", "y2", "feasible", "p"],
            samples
                .iter()
                .map(|s| vec![sig12(s.x2), sig12(s.y2), u8::from(s.feasible).to_string(), sig12(s.p)]),
        ),
        Format::Json => json(&samples),
    };
    let feasible: Vec<_> = samples.iter().filter(|s| s.feasible).collect();
    let peak = feasible.iter().map(|s| s.p).fold(0.0, f64::max);
    Ok(Outcome {
        text,
        status: format!(
            "{} of {} points feasible, largest p = {}",
            feasible.len(),
            samples.len(),
            sig12(peak)
        ),
        passed: true,
    })
}

#[derive(Serialize)]
struct OptimizeDoc {
    best_probability: f64,
    residual: f64,
    restarts: usize,
    seed: u64,
    evaluations: usize,
    matrix: Vec<[f64; 2]>,
}

fn row_major(m: &CMatrix) -> Vec<[f64; 2]> {
    (0..m.nrows())
        .flat_map(|i| (0..m.ncols()).map(move |j| (i, j)))
        .map(|(i, j)| pair(m[(i, j)]))
        .collect()
}

fn optimize(cli: &Cli) -> Result<Outcome, Failure> {
    if format_or(cli, Format::Json) != Format::Json {
        return Err(Failure::Usage("optimize writes JSON only".into()));
    }
    let config = SearchConfig::new(cli.modes, cli.rank, cli.restarts, cli.seed);
    let result = numeric_search(&config)?;
    let doc = OptimizeDoc {
        best_probability: result.best_probability,
        residual: result.residual,
        restarts: result.restarts,
        seed: result.seed,
        evaluations: result.evaluations,
        matrix: row_major(result.best_matrix.matrix()),
    };
    let within = result.max_feasible_probability <= 0.25 + BOUND_SLACK;
    Ok(Outcome {
        text: json(&doc),
        status: format!(
            "best p = {} residual = {:e}, largest p with residual <= {:e}: {}",
            sig12(result.best_probability),
            result.residual,
            SEARCH_FEASIBLE_RESIDUAL,
            sig12(result.max_feasible_probability)
        ),
        passed: within,
    })
}

fn check_ancilla_modes(cli: &Cli) -> Result<(), Failure> {
    if cli.modes < 2 {
        return Err(Failure::Usage(format!("--modes must be at least 2, got {}", cli.modes)));
    }
    Ok(())
}

fn read_unitary(path: &Path) -> Result<LopCircuit, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Io(format!("cannot read {}: {e}", path.display())))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    let list = value.get("matrix").unwrap_or(&value);
    let entries: Vec<[f64; 2]> = serde_json::from_value(list.clone())
        .map_err(|e| Failure::Usage(format!("{}: expected a list of [re, im] pairs: {e}", path.display())))?;
    let n = (entries.len() as f64).sqrt().round() as usize;
    if n == 0 || n * n != entries.len() {
        return Err(Failure::Usage(format!(
            "{}: {} entries do not form a square matrix",
            path.display(),
            entries.len()
        )));
    }
    let m = CMatrix::from_row_iterator(n, n, entries.iter().map(|&[re, im]| Complex64::new(re, im)));
    Ok(LopCircuit::new(m)?)
}

#[derive(Serialize)]
struct KrausDoc {
    modes: usize,
    outcomes: usize,
    defect: f64,
}

fn kraus_check(cli: &Cli, unitary: Option<&Path>) -> Result<Outcome, Failure> {
    let tol = check_tol(cli)?;
    let lop = match unitary {
        Some(path) => read_unitary(path)?,
        None => {
            check_ancilla_modes(cli)?;
            haar_unitary(cli.modes, &mut stream_rng(cli.seed, 0))
        }
    };
    if lop.dim() < 2 {
        return Err(Failure::Usage("the unitary needs at least one ancilla mode".into()));
    }
    let ancilla = OccupationVector::single(lop.dim() - 1, 0);
    let scheme = ConditionalScheme::with_all_outcomes(1, ancilla, vec![0, 1, 2])?;
    let defect = completeness_defect(&scheme, &lop)?;
    let doc = KrausDoc {
        modes: lop.dim(),
        outcomes: scheme.rank(),
        defect,
    };
    let text = match format_or(cli, Format::Csv) {
        Format::Csv => csv(
            &["modes", "outcomes", "defect"],
            [vec![doc.modes.to_string(), doc.outcomes.to_string(), sig12(defect)]],
        ),
        Format::Json => json(&doc),
    };
    Ok(Outcome {
        text,
        status: format!("completeness defect {defect:e} over {} outcomes", doc.outcomes),
        passed: defect <= tol,
    })
}

#[derive(Serialize)]
struct ReduceDoc {
    chi: Vec<[f64; 2]>,
    direct: f64,
    reduced: f64,
    difference: f64,
}

fn reduce_demo(cli: &Cli) -> Result<Outcome, Failure> {
    let tol = check_tol(cli)?;
    check_ancilla_modes(cli)?;
    let mut rng = stream_rng(cli.seed, 0);
    let ancilla_modes = cli.modes - 1;
    let chi: Vec<Complex64> = random_state(ancilla_modes, &mut rng).iter().copied().collect();
    let upstream = haar_unitary(cli.modes, &mut rng);
    let scheme = ns_scheme(cli.modes, 1, &[1])?;
    let basis = scheme.input_basis()?;
    let rho = DensityMatrix::pure(basis.clone(), &random_state(basis.dim(), &mut rng))?;
    let cmp = compare_ancilla_reduction(&scheme, &upstream, &chi, &rho)?;
    let doc = ReduceDoc {
        chi: chi.iter().map(|&z| pair(z)).collect(),
        direct: cmp.direct,
        reduced: cmp.reduced,
        difference: (cmp.direct - cmp.reduced).abs(),
    };
    let text = match format_or(cli, Format::Csv) {
        Format::Csv => csv(
            &["direct", "reduced", "difference"],
            [vec![sig12(doc.direct), sig12(doc.reduced), sig12(doc.difference)]],
        ),
        Format::Json => json(&doc),
    };
    Ok(Outcome {
        text,
        status: format!(
            "superposed ancilla p = {}, reduced single-mode ancilla p = {}",
            sig12(cmp.direct),
            sig12(cmp.reduced)
        ),
        passed: doc.difference <= tol,
    })
}
