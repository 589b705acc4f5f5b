//! Acceptance suite: one line per criterion, non-zero exit if any fails.

use std::f64::consts::FRAC_1_SQRT_2;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use nsgate::bound::{boundary_y2, feasible, maximize_boundary, numeric_search, SearchConfig, ROW_ONE_CAP};
use nsgate::conditional::{apply_conditional, completeness_defect, ConditionalScheme, DensityMatrix, GlobalState};
use nsgate::fock::{enumerate_sector, fock_amplitude, LopCircuit, OccupationVector};
use nsgate::ns_gate::{compare_ancilla_reduction, generalized_design, ns_scheme, DesignPhases};
use nsgate::random::{haar_unitary, random_state, stream_rng};
use nsgate::Error;
use num_complex::Complex64;

const SEED: u64 = 7;

/// Name, time limit and body of one criterion.
type Criterion = (&'static str, Duration, fn() -> Check);

struct Check {
    ok: bool,
    detail: String,
}

fn check(ok: bool, detail: impl Into<String>) -> Check {
    Check {
        ok,
        detail: detail.into(),
    }
}

fn klm_command() -> Check {
    let out = Command::new(env!("CARGO_BIN_EXE_nsgate"))
        .arg("verify-klm")
        .output()
        .expect("binary runs");
    let stdout = String::from_utf8_lossy(&out.stdout);
    let row: Vec<&str> = stdout.lines().nth(1).unwrap_or_default().split(',').collect();
    let field = |i: usize| row.get(i).and_then(|s| s.parse::<f64>().ok()).unwrap_or(f64::NAN);
    let (residual, p) = (field(7), field(8));
    check(
        out.status.code() == Some(0) && (p - 0.25).abs() <= 1e-10 && residual <= 1e-10,
        format!("exit {:?}, p = {p}, residual = {residual:e}", out.status.code()),
    )
}

fn analytic_bound() -> Check {
    match maximize_boundary(1e-10) {
        Ok((x, p)) => check(
            (p - 0.25).abs() <= 1e-9 && (x - FRAC_1_SQRT_2).abs() <= 1e-5,
            format!("x2* = {x:.10}, p* = {p:.12}"),
        ),
        Err(e) => check(false, e.to_string()),
    }
}

fn closed_forms() -> Check {
    let mut rng = stream_rng(SEED, 3);
    let occ = |c: [usize; 3]| OccupationVector::new(c.to_vec());
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let lop = haar_unitary(3, &mut rng);
        let u = |i, j| lop.entry(i, j);
        let forms = [
            ([0, 1, 0], u(1, 1)),
            ([1, 1, 0], u(0, 0) * u(1, 1) + u(0, 1) * u(1, 0)),
            ([2, 1, 0], u(0, 0) * (u(0, 0) * u(1, 1) + u(0, 1) * u(1, 0) * 2.0)),
        ];
        for (state, value) in forms {
            let amp = fock_amplitude(&lop, &occ(state), &occ(state)).expect("valid occupations");
            worst = worst.max((amp - value).norm());
        }
    }
    check(worst <= 1e-12, format!("max deviation {worst:e} over 100 unitaries"))
}

fn completeness() -> Check {
    let mut rng = stream_rng(SEED, 4);
    let mut worst: f64 = 0.0;
    for case in 0..50 {
        let modes = 2 + case % 3;
        let system_modes = if modes == 4 && case % 2 == 0 { 2 } else { 1 };
        let ancilla = OccupationVector::single(modes - system_modes, 0);
        let scheme = ConditionalScheme::with_all_outcomes(system_modes, ancilla, vec![0, 1, 2]).expect("within cap");
        let lop = haar_unitary(modes, &mut rng);
        worst = worst.max(completeness_defect(&scheme, &lop).expect("matching modes"));
    }
    check(worst <= 1e-10, format!("max defect {worst:e} over 50 unitaries"))
}

fn search(modes: usize, rank: usize) -> Check {
    match numeric_search(&SearchConfig::new(modes, rank, 50, SEED)) {
        Ok(r) => check(
            (0.2490..=0.250001).contains(&r.best_probability)
                && r.residual <= 1e-6
                && r.max_feasible_probability <= 0.250001,
            format!(
                "best p = {:.10}, residual = {:e}, largest feasible p = {:.10}, {} evaluations",
                r.best_probability, r.residual, r.max_feasible_probability, r.evaluations
            ),
        ),
        Err(e) => check(false, e.to_string()),
    }
}

fn reduction() -> Check {
    let mut rng = stream_rng(SEED, 7);
    let mut worst: f64 = 0.0;
    for case in 0..50 {
        let modes = 3 + case % 2;
        let chi: Vec<Complex64> = random_state(modes - 1, &mut rng).iter().copied().collect();
        let upstream = haar_unitary(modes, &mut rng);
        let scheme = ns_scheme(modes, 1, &[1]).expect("valid scheme");
        let basis = scheme.input_basis().expect("valid basis");
        let rho = DensityMatrix::pure(basis.clone(), &random_state(basis.dim(), &mut rng)).expect("pure state");
        let cmp = compare_ancilla_reduction(&scheme, &upstream, &chi, &rho).expect("one-photon ancilla");
        worst = worst.max((cmp.direct - cmp.reduced).abs());
    }
    check(worst <= 1e-10, format!("max difference {worst:e} over 50 chi"))
}

fn region_curve() -> Check {
    let mut rng = stream_rng(SEED, 8);
    let mut worst: f64 = 0.0;
    let mut failures = Vec::new();
    let mut rejected = 0;
    for k in 0..200 {
        let x2 = ROW_ONE_CAP * (k as f64 + 0.5) / 200.0;
        let y2 = boundary_y2(x2).expect("in domain");
        match generalized_design(x2.sqrt(), &[y2.sqrt()], &DesignPhases::default(), 3).and_then(|c| c.complete()) {
            Ok(design) => {
                let scheme = design.scheme();
                let basis = scheme.input_basis().expect("valid basis");
                let rho = DensityMatrix::pure(basis.clone(), &random_state(basis.dim(), &mut rng)).expect("pure");
                let p = apply_conditional(&scheme, &design.lop, &rho)
                    .expect("valid")
                    .probability;
                worst = worst.max((p - x2 * y2 / 2.0).abs());
            }
            Err(e) => failures.push(format!("x2 = {x2}: {e}")),
        }
        let beyond = y2 + 1e-3;
        if !feasible(x2, beyond).expect("non-negative") {
            let attempt = generalized_design(x2.sqrt(), &[beyond.min(1.0).sqrt()], &DesignPhases::default(), 4)
                .and_then(|c| c.complete());
            match attempt {
                Err(Error::Infeasible(_)) => rejected += 1,
                _ => failures.push(format!("x2 = {x2}: point beyond the boundary was accepted")),
            }
        }
    }
    check(
        failures.is_empty() && worst <= 1e-10,
        format!(
            "max probability error {worst:e}, {rejected} outside points rejected{}",
            failures
                .first()
                .map(|f| format!(", first failure {f}"))
                .unwrap_or_default()
        ),
    )
}

fn sector_invariance() -> Check {
    let mut rng = stream_rng(SEED, 9);
    let mut worst: f64 = 0.0;
    for case in 0..20 {
        let ancilla_modes = 2 + case % 2;
        let sector = enumerate_sector(1 + ancilla_modes, 3).expect("valid sector");
        let state = GlobalState::new(1, sector.clone(), random_state(sector.dim(), &mut rng)).expect("state");
        let weights = |s: &GlobalState| -> [f64; 4] {
            let parts = s.decompose_by_ancilla_count();
            std::array::from_fn(|count| parts.get(&count).map_or(0.0, |c| c.norm_squared()))
        };
        let v = LopCircuit::embed(1, &haar_unitary(ancilla_modes, &mut rng));
        let before = weights(&state);
        let after = weights(&state.evolve(&v).expect("matching modes"));
        for (b, a) in before.iter().zip(&after) {
            worst = worst.max((b - a).abs());
        }
    }
    check(worst <= 1e-12, format!("max weight change {worst:e} over 20 cases"))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("verify-klm optimum", Duration::from_secs(1), klm_command),
        ("analytic boundary maximum", Duration::from_secs(1), analytic_bound),
        (
            "three-mode amplitude closed forms",
            Duration::from_secs(5),
            closed_forms,
        ),
        ("measurement completeness", Duration::from_secs(30), completeness),
        ("numeric search, rank 1", Duration::from_secs(120), || search(3, 1)),
        ("numeric search, rank 2", Duration::from_secs(300), || search(4, 2)),
        ("ancilla reduction", Duration::from_secs(30), reduction),
        ("region and completion agree", Duration::from_secs(60), region_curve),
        (
            "ancilla-only sector invariance",
            Duration::from_secs(10),
            sector_invariance,
        ),
    ];
    let mut failed = 0;
    for (i, (name, limit, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = run();
        let elapsed = start.elapsed();
        let ok = result.ok && elapsed < *limit;
        failed += usize::from(!ok);
        println!(
            "criterion {} {name}: {} ({}; {:.3} s, limit {} s)",
            i + 1,
            if ok { "PASS" } else { "FAIL" },
            result.detail,
            elapsed.as_secs_f64(),
            limit.as_secs()
        );
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
