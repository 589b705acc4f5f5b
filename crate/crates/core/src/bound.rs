//! Success-probability bound for NS gates with one ancillary photon.
//!
//! With `x2 = |U[0, i]|^2` and `y2 = |U[j, 0]|^2`, the two constrained rows of
//! an NS design can be completed to a unitary iff their fixed parts fit
//! (row and column norms) and the free parts can realise the inner product
//! orthogonality demands. In terms of
//!
//! ```text
//! A = |(1 - sqrt2) + x2 / sqrt2|,   B = 2(sqrt2 - 1) - x2,   C = 1 + x2 / 2
//! ```
//!
//! the Cauchy-Schwarz requirement reads `y2 * A^2 <= B * (1 - y2 * C)`, whose
//! boundary is `y2 = B / (A^2 + B C)`. The success probability `x2 * y2 / 2`
//! is largest on that boundary and peaks at `x2 = y2 = 1/sqrt2` with value
//! `1/4`.
//!
//! [`numeric_search`] tests the bound without using any of this algebra: it
//! maximises the post-selected probability over the whole unitary group with
//! a penalty on the functioning conditions. Each start first follows a few
//! smooth augmented-Lagrangian stages (the bare exact penalty traps the
//! simplex on the trivial gate `m0 = m1 = m2 = 0`), then polishes the exact
//! objective `probability - penalty_weight * residual`, which also ranks the
//! starts.

use std::f64::consts::SQRT_2;

use num_complex::Complex64;
use rand::Rng;
use serde::Serialize;

use crate::conditional::ConditionalScheme;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::fock::{CMatrix, LopCircuit};
use crate::ns_gate::{ns_scheme, verify_ns, NsReport};
use crate::optim::{golden_section_max, NelderMead};
use crate::random::stream_rng;

/// Largest `|U[0, i]|^2` the first row can hold next to `U[0, 0] = 1 - sqrt2`.
pub const ROW_ONE_CAP: f64 = 2.0 * (SQRT_2 - 1.0);
/// Slack on the Schwarz cosine in [`feasible`].
pub const COSINE_TOL: f64 = 1e-12;
/// Residual below which a searched unitary counts as a working NS gate.
pub const SEARCH_FEASIBLE_RESIDUAL: f64 = 1e-6;
/// Points in the pre-scan that brackets the golden-section search.
const PRESCAN_POINTS: usize = 101;

/// The substitutions `(A, B, C)` at `x2`.
pub fn substitutions(x2: f64) -> (f64, f64, f64) {
    let a = ((1.0 - SQRT_2) + x2 / SQRT_2).abs();
    let b = ROW_ONE_CAP - x2;
    let c = 1.0 + x2 / 2.0;
    (a, b, c)
}

/// A point of the `(x2, y2)` plane with its substitutions and success
/// probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundCurveSample {
    pub x2: f64,
    pub y2: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub p: f64,
}

impl BoundCurveSample {
    pub fn at(x2: f64, y2: f64) -> Self {
        let (a, b, c) = substitutions(x2);
        BoundCurveSample {
            x2,
            y2,
            a,
            b,
            c,
            p: x2 * y2 / 2.0,
        }
    }

    /// The boundary point above `x2`.
    pub fn on_boundary(x2: f64) -> Result<Self> {
        Ok(Self::at(x2, boundary_y2(x2)?))
    }

    /// `y2 (A^2 + B C) - B`; zero on the boundary.
    pub fn boundary_residual(&self) -> f64 {
        self.y2 * (self.a * self.a + self.b * self.c) - self.b
    }
}

/// `|cos|` of the angle the free row parts would need. Infinite when the
/// required inner product is non-zero but a free part has no norm left.
pub fn schwarz_cosine(x2: f64, y2: f64) -> f64 {
    let (a, b, c) = substitutions(x2);
    let numerator = y2.sqrt() * a;
    let denominator = (b * (1.0 - y2 * c)).max(0.0).sqrt();
    if denominator > 0.0 {
        numerator / denominator
    } else if numerator == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

fn check_non_negative(v: f64) -> Result<()> {
    if v < 0.0 || v.is_nan() {
        return Err(Error::invalid(format!("squared modulus {v} must be non-negative")));
    }
    Ok(())
}

/// Whether `(x2, y2)` admits a unitary completion: row and column norm
/// bounds for both constrained rows/columns, plus the Schwarz bound.
pub fn feasible(x2: f64, y2: f64) -> Result<bool> {
    check_non_negative(x2)?;
    check_non_negative(y2)?;
    let eps = COSINE_TOL;
    let norms_ok = x2 <= ROW_ONE_CAP + eps
        && y2 <= 1.0 / (1.0 + x2 / 2.0) + eps
        && y2 <= ROW_ONE_CAP + eps
        && x2 <= 1.0 / (1.0 + y2 / 2.0) + eps;
    let (_, b, c) = substitutions(x2);
    // A negative remaining norm makes the cosine meaningless.
    let free_ok = b >= -eps && 1.0 - y2 * c >= -eps;
    Ok(norms_ok && free_ok && schwarz_cosine(x2, y2) <= 1.0 + eps)
}

fn check_domain(x2: f64) -> Result<()> {
    if !(0.0..=ROW_ONE_CAP).contains(&x2) {
        return Err(Error::Domain {
            value: x2,
            lo: 0.0,
            hi: ROW_ONE_CAP,
        });
    }
    Ok(())
}

/// `y2 = B / (A^2 + B C)`, the Schwarz-saturating `y2` above `x2`.
pub fn boundary_y2(x2: f64) -> Result<f64> {
    check_domain(x2)?;
    let (a, b, c) = substitutions(x2);
    Ok(b / (a * a + b * c))
}

/// `x2 / 2 * boundary_y2(x2)`.
pub fn probability_on_boundary(x2: f64) -> Result<f64> {
    Ok(x2 / 2.0 * boundary_y2(x2)?)
}

/// Maximum of [`probability_on_boundary`] over the whole domain.
pub fn maximize_boundary(tol: f64) -> Result<(f64, f64)> {
    maximize_boundary_on(0.0, ROW_ONE_CAP, tol)
}

/// Maximum of [`probability_on_boundary`] over `[lo, hi]`: a 101-point scan
/// locates the bracket, golden-section search narrows it to `tol`.
pub fn maximize_boundary_on(lo: f64, hi: f64, tol: f64) -> Result<(f64, f64)> {
    if tol.is_nan() || tol <= 0.0 {
        return Err(Error::invalid(format!("tolerance {tol} must be positive")));
    }
    check_domain(lo)?;
    check_domain(hi)?;
    if lo > hi {
        return Err(Error::invalid("empty search interval"));
    }
    let p = |x2: f64| probability_on_boundary(x2.clamp(lo, hi)).expect("clamped to domain");
    let step = (hi - lo) / (PRESCAN_POINTS - 1) as f64;
    let grid = |k: usize| {
        if k == PRESCAN_POINTS - 1 {
            hi
        } else {
            lo + step * k as f64
        }
    };
    let best = (0..PRESCAN_POINTS)
        .max_by(|&a, &b| p(grid(a)).total_cmp(&p(grid(b))).then(b.cmp(&a)))
        .expect("non-empty scan");
    let left = grid(best.saturating_sub(1));
    let right = grid((best + 1).min(PRESCAN_POINTS - 1));
    Ok(golden_section_max(p, left, right, tol))
}

/// One cell of the feasibility-region grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RegionSample {
    pub x2: f64,
    pub y2: f64,
    pub feasible: bool,
    pub p: f64,
}

fn axis(grid_n: usize) -> Vec<f64> {
    (0..grid_n)
        .map(|k| {
            if k + 1 == grid_n {
                ROW_ONE_CAP
            } else {
                ROW_ONE_CAP * k as f64 / (grid_n - 1) as f64
            }
        })
        .collect()
}

/// `grid_n x grid_n` samples of `[0, 2(sqrt2 - 1)]^2`, ordered by `x2` then
/// `y2`.
pub fn sample_region(grid_n: usize) -> Result<Vec<RegionSample>> {
    sample_region_with(grid_n, Execution::default())
}

pub fn sample_region_with(grid_n: usize, exec: Execution) -> Result<Vec<RegionSample>> {
    if grid_n < 2 {
        return Err(Error::invalid("region grid needs at least 2 points per axis"));
    }
    let xs = axis(grid_n);
    let rows = exec.map_indexed(grid_n, |i| {
        xs.iter()
            .map(|&y2| {
                let x2 = xs[i];
                RegionSample {
                    x2,
                    y2,
                    feasible: feasible(x2, y2).expect("grid is non-negative"),
                    p: x2 * y2 / 2.0,
                }
            })
            .collect::<Vec<_>>()
    });
    Ok(rows.into_iter().flatten().collect())
}

/// `grid_n` boundary samples with `x2` evenly spaced over the domain.
pub fn scan_curve(grid_n: usize) -> Result<Vec<BoundCurveSample>> {
    if grid_n < 2 {
        return Err(Error::invalid("curve scan needs at least 2 points"));
    }
    axis(grid_n).into_iter().map(BoundCurveSample::on_boundary).collect()
}

/// Mode-matrix parameterisation: `n(n-1)/2` beam-splitter rotations
/// `(theta, phi)` on neighbouring modes in the triangular (Reck) order
/// `T0, T1 T0, T2 T1 T0, ...`, followed by `n` output phases. Takes `n^2`
/// parameters and reaches every unitary.
pub fn unitary_from_params(n: usize, params: &[f64]) -> CMatrix {
    assert_eq!(params.len(), n * n, "expected n^2 parameters");
    let mut u = CMatrix::identity(n, n);
    let mut k = 0;
    for diagonal in 1..n {
        for m in (0..diagonal).rev() {
            let (theta, phi) = (params[k], params[k + 1]);
            k += 2;
            let e = Complex64::from_polar(1.0, phi);
            let (s, c) = theta.sin_cos();
            // rows m, m+1 of u <- T * rows
            for col in 0..n {
                let a = u[(m, col)];
                let b = u[(m + 1, col)];
                u[(m, col)] = e * c * a - b * s;
                u[(m + 1, col)] = e * s * a + b * c;
            }
        }
    }
    for row in 0..n {
        let e = Complex64::from_polar(1.0, params[k + row]);
        for col in 0..n {
            u[(row, col)] *= e;
        }
    }
    u
}

/// Schedule of the smooth augmented-Lagrangian stages that precede the
/// exact-penalty polish.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedSchedule {
    pub rounds: usize,
    pub initial_penalty: f64,
    /// Factor applied to the quadratic penalty every second round.
    pub growth: f64,
    pub max_penalty: f64,
    /// Simplex step used after the first round.
    pub refine_step: f64,
}

impl Default for AugmentedSchedule {
    fn default() -> Self {
        AugmentedSchedule {
            rounds: 12,
            initial_penalty: 1.0,
            growth: 4.0,
            max_penalty: 1000.0,
            refine_step: 0.05,
        }
    }
}

/// Settings for [`numeric_search`].
#[derive(Debug, Clone, PartialEq)]
pub struct SearchConfig {
    pub total_modes: usize,
    pub rank_s: usize,
    /// Additional random starts after the first one.
    pub restarts: usize,
    pub seed: u64,
    /// Weight of the residual in the final objective
    /// `probability - penalty_weight * residual`.
    pub penalty_weight: f64,
    pub augmented: AugmentedSchedule,
    pub local: NelderMead,
    /// Simplex re-initialisations on the final objective, each with a
    /// tenfold smaller step.
    pub polish_rounds: usize,
}

impl SearchConfig {
    pub fn new(total_modes: usize, rank_s: usize, restarts: usize, seed: u64) -> Self {
        SearchConfig {
            total_modes,
            rank_s,
            restarts,
            seed,
            penalty_weight: 100.0,
            augmented: AugmentedSchedule::default(),
            local: NelderMead {
                initial_step: 0.5,
                ftol: 1e-16,
                xtol: 1e-13,
                max_evals: 20_000,
            },
            polish_rounds: 4,
        }
    }
}

/// Outcome of [`numeric_search`].
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationResult {
    /// Success probability at the best penalised objective.
    pub best_probability: f64,
    pub best_matrix: LopCircuit,
    /// Functioning-condition residual at the best point.
    pub residual: f64,
    pub restarts: usize,
    pub seed: u64,
    pub evaluations: usize,
    /// Largest probability among all evaluated unitaries whose residual is
    /// at most [`SEARCH_FEASIBLE_RESIDUAL`].
    pub max_feasible_probability: f64,
    /// Index of the start that produced the best point.
    pub best_start: usize,
}

struct StartResult {
    objective: f64,
    params: Vec<f64>,
    probability: f64,
    residual: f64,
    evaluations: usize,
    max_feasible: f64,
}

/// Searches for the largest post-selected NS probability over
/// `total_modes x total_modes` unitaries: one photon enters mode 1 and the
/// gate succeeds when it leaves in any of modes `1..=rank_s`.
pub fn numeric_search(config: &SearchConfig) -> Result<OptimizationResult> {
    numeric_search_with(config, Execution::default())
}

pub fn numeric_search_with(config: &SearchConfig, exec: Execution) -> Result<OptimizationResult> {
    let n = config.total_modes;
    if n < 3 {
        return Err(Error::invalid("numeric search needs at least 3 modes"));
    }
    if config.rank_s < 1 || config.rank_s > n - 1 {
        return Err(Error::invalid(format!(
            "rank {} must lie in 1..={}",
            config.rank_s,
            n - 1
        )));
    }
    let accept: Vec<usize> = (1..=config.rank_s).collect();
    let scheme = ns_scheme(n, 1, &accept)?;

    let starts = config.restarts + 1;
    let results = exec.map_indexed(starts, |start| run_start(config, &scheme, start as u64));

    let mut best_index = 0;
    for (i, r) in results.iter().enumerate() {
        if r.objective < results[best_index].objective {
            best_index = i;
        }
    }
    let best = &results[best_index];
    let best_matrix = LopCircuit::new(unitary_from_params(n, &best.params))?;
    Ok(OptimizationResult {
        best_probability: best.probability,
        best_matrix,
        residual: best.residual,
        restarts: config.restarts,
        seed: config.seed,
        evaluations: results.iter().map(|r| r.evaluations).sum(),
        max_feasible_probability: results.iter().map(|r| r.max_feasible).fold(0.0, f64::max),
        best_start: best_index,
    })
}

/// Real and imaginary parts of `m1 - m0` and `m2 + m0` for every outcome.
fn condition_components(report: &NsReport) -> Vec<f64> {
    report
        .outcomes
        .iter()
        .flat_map(|o| {
            let first = o.m1 - o.m0;
            let second = o.m2 + o.m0;
            [first.re, first.im, second.re, second.im]
        })
        .collect()
}

fn run_start(config: &SearchConfig, scheme: &ConditionalScheme, start: u64) -> StartResult {
    let n = config.total_modes;
    let mut rng = stream_rng(config.seed, start);
    let mut x: Vec<f64> = (0..n * n)
        .map(|_| rng.random_range(0.0..std::f64::consts::TAU))
        .collect();

    let mut max_feasible: f64 = 0.0;
    let mut evaluations = 0;
    let mut evaluate = |params: &[f64]| -> NsReport {
        let lop = LopCircuit::new(unitary_from_params(n, params)).expect("rotations are unitary");
        let report = verify_ns(&lop, scheme).expect("scheme matches circuit");
        if report.condition_residual <= SEARCH_FEASIBLE_RESIDUAL {
            max_feasible = max_feasible.max(report.success_probability);
        }
        report
    };

    // Smooth stages: augmented Lagrangian on the condition components.
    let mut multipliers = vec![0.0; 4 * config.rank_s];
    let mut mu = config.augmented.initial_penalty;
    for round in 0..config.augmented.rounds {
        let nm = NelderMead {
            initial_step: if round == 0 {
                config.local.initial_step
            } else {
                config.augmented.refine_step
            },
            ..config.local
        };
        let m = nm.minimize(
            |params| {
                let report = evaluate(params);
                let penalty: f64 = condition_components(&report)
                    .iter()
                    .zip(&multipliers)
                    .map(|(c, l)| l * c + 0.5 * mu * c * c)
                    .sum();
                penalty - report.success_probability
            },
            &x,
        );
        evaluations += m.evals;
        x = m.x;
        let components = condition_components(&evaluate(&x));
        for (l, c) in multipliers.iter_mut().zip(&components) {
            *l += mu * c;
        }
        if round % 2 == 1 {
            mu = (mu * config.augmented.growth).min(config.augmented.max_penalty);
        }
    }

    // Exact penalty with the configured weight.
    let exact = |report: &NsReport| config.penalty_weight * report.condition_residual - report.success_probability;
    let mut objective = exact(&evaluate(&x));
    let mut step = config.augmented.refine_step;
    for _ in 0..config.polish_rounds {
        let nm = NelderMead {
            initial_step: step,
            ..config.local
        };
        let m = nm.minimize(|params| exact(&evaluate(params)), &x);
        evaluations += m.evals;
        if m.value < objective {
            objective = m.value;
            x = m.x;
        }
        step /= 10.0;
    }
    let report = evaluate(&x);
    StartResult {
        objective,
        params: x,
        probability: report.success_probability,
        residual: report.condition_residual,
        evaluations,
        max_feasible,
    }
}
