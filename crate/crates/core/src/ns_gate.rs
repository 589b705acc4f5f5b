//! Nonlinear sign-shift (NS) gate designs.
//!
//! The NS gate maps `a|0> + b|1> + c|2>` to `a|0> + b|1> - c|2>` on one mode.
//! It is realised by coupling the mode (index 0) to ancilla modes holding a
//! single photon in mode `i` and accepting runs where that photon leaves in
//! one of the accepted modes `j`. The diagonal measurement-operator entries
//! `m0, m1, m2` must satisfy `m0 = m1 = -m2`, which forces
//!
//! ```text
//! U[0, 0] = 1 - sqrt(2)
//! U[j, i] = U[0, i] * U[j, 0] / sqrt(2)     for every accepted j
//! ```
//!
//! and gives success probability `|U[0, i]|^2 / 2 * sum_j |U[j, 0]|^2`. The
//! remaining entries only have to make the matrix unitary; see
//! [`complete_to_unitary`].

use std::f64::consts::SQRT_2;

use nalgebra::{DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::conditional::{
    apply_conditional, apply_operators, superposed_kraus_operator, ConditionalScheme, DensityMatrix,
};
use crate::error::{Error, Result, Violation};
use crate::fock::{CMatrix, LopCircuit, OccupationVector};

/// Tolerance on functioning-condition residuals.
pub const CONDITION_TOL: f64 = 1e-10;
/// The diagonal entry `U[0, 0]` every NS design must have.
pub const NS_DIAGONAL: f64 = 1.0 - SQRT_2;

/// Slack on squared-norm and Schwarz tests during completion.
const FEAS_TOL: f64 = 1e-12;
/// Gram eigenvalues below this are treated as zero when counting the free
/// columns a completion needs.
const RANK_TOL: f64 = 1e-12;

/// Square matrix with some entries fixed and the rest free.
#[derive(Clone, Debug, PartialEq)]
pub struct PartialMatrix {
    dim: usize,
    entries: Vec<Option<Complex64>>,
}

impl PartialMatrix {
    pub fn new(dim: usize) -> Self {
        PartialMatrix {
            dim,
            entries: vec![None; dim * dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn fix(&mut self, row: usize, col: usize, value: Complex64) {
        self.entries[row * self.dim + col] = Some(value);
    }

    pub fn get(&self, row: usize, col: usize) -> Option<Complex64> {
        self.entries[row * self.dim + col]
    }

    fn fixed_rows(&self) -> Vec<usize> {
        (0..self.dim)
            .filter(|&r| (0..self.dim).any(|c| self.get(r, c).is_some()))
            .collect()
    }
}

/// Extends a partially fixed matrix to a unitary.
///
/// The fixed entries must form a block: every row holding a fixed entry
/// fixes exactly the same set of columns. Writing `P` for that block, the
/// free parts `W` of those rows must satisfy `W W^dag = I - P P^dag`, which
/// is possible iff the right-hand side is positive semidefinite with rank no
/// larger than the number of free columns. `W` is taken from the
/// eigendecomposition of that Gram matrix and the remaining rows are filled
/// by Gram-Schmidt on the standard basis.
pub fn complete_to_unitary(partial: &PartialMatrix) -> Result<LopCircuit> {
    let n = partial.dim();
    if n == 0 {
        return Err(Error::invalid("cannot complete an empty matrix"));
    }
    let rows = partial.fixed_rows();
    if rows.is_empty() {
        return Ok(LopCircuit::identity(n));
    }
    let cols: Vec<usize> = (0..n).filter(|&c| partial.get(rows[0], c).is_some()).collect();
    for &r in &rows {
        let these: Vec<usize> = (0..n).filter(|&c| partial.get(r, c).is_some()).collect();
        if these != cols {
            return Err(Error::invalid(
                "fixed entries must occupy the same columns in every constrained row",
            ));
        }
    }
    let free_cols: Vec<usize> = (0..n).filter(|c| !cols.contains(c)).collect();
    let block = CMatrix::from_fn(rows.len(), cols.len(), |a, b| {
        partial.get(rows[a], cols[b]).expect("block entry fixed")
    });
    let gram = CMatrix::identity(rows.len(), rows.len()) - &block * block.adjoint();

    let mut violations = Vec::new();
    for (a, &r) in rows.iter().enumerate() {
        let norm_sq = 1.0 - gram[(a, a)].re;
        if norm_sq > 1.0 + FEAS_TOL {
            violations.push(Violation::RowNorm { row: r, norm_sq });
        }
    }
    for (b, &c) in cols.iter().enumerate() {
        let norm_sq: f64 = block.column(b).iter().map(|z| z.norm_sqr()).sum();
        if norm_sq > 1.0 + FEAS_TOL {
            violations.push(Violation::ColumnNorm { col: c, norm_sq });
        }
    }
    for a in 0..rows.len() {
        for b in (a + 1)..rows.len() {
            let left = gram[(a, a)].re.max(0.0) * gram[(b, b)].re.max(0.0);
            let inner = gram[(a, b)].norm_sqr();
            if inner > left + FEAS_TOL {
                let cosine = if left > 0.0 {
                    (inner / left).sqrt()
                } else {
                    f64::INFINITY
                };
                violations.push(Violation::Schwarz {
                    rows: (rows[a], rows[b]),
                    cosine,
                });
            }
        }
    }
    let eigen = SymmetricEigen::new(gram.clone());
    let min_eigenvalue = eigen.eigenvalues.min();
    if violations.is_empty() && min_eigenvalue < -FEAS_TOL {
        violations.push(Violation::Gram { min_eigenvalue });
    }
    let mut kept: Vec<usize> = (0..rows.len()).filter(|&k| eigen.eigenvalues[k] > RANK_TOL).collect();
    if violations.is_empty() && kept.len() > free_cols.len() {
        violations.push(Violation::Rank {
            required: kept.len(),
            available: free_cols.len(),
        });
    }
    if !violations.is_empty() {
        return Err(Error::Infeasible(violations));
    }

    kept.sort_by(|&a, &b| eigen.eigenvalues[b].total_cmp(&eigen.eigenvalues[a]));
    let mut matrix = CMatrix::zeros(n, n);
    for (a, &r) in rows.iter().enumerate() {
        for (b, &c) in cols.iter().enumerate() {
            matrix[(r, c)] = block[(a, b)];
        }
        for (slot, &k) in kept.iter().enumerate() {
            let scale = eigen.eigenvalues[k].sqrt();
            matrix[(r, free_cols[slot])] = eigen.eigenvectors[(a, k)] * scale;
        }
    }

    let mut basis: Vec<DVector<Complex64>> = rows.iter().map(|&r| matrix.row(r).transpose()).collect();
    let others: Vec<usize> = (0..n).filter(|r| !rows.contains(r)).collect();
    for &r in &others {
        let next = next_orthonormal(&basis, n);
        matrix.set_row(r, &next.transpose());
        basis.push(next);
    }
    LopCircuit::new(matrix)
}

/// Standard basis vector with the largest component outside `span(basis)`,
/// orthogonalised (twice) against `basis` and normalised. Ties go to the
/// lowest index.
fn next_orthonormal(basis: &[DVector<Complex64>], n: usize) -> DVector<Complex64> {
    let project_out = |mut v: DVector<Complex64>| {
        for _ in 0..2 {
            for b in basis {
                let coeff = b.dotc(&v);
                v -= b * coeff;
            }
        }
        v
    };
    let mut best: Option<(f64, DVector<Complex64>)> = None;
    for k in 0..n {
        let mut e = DVector::zeros(n);
        e[k] = Complex64::new(1.0, 0.0);
        let v = project_out(e);
        let norm = v.norm();
        if best.as_ref().is_none_or(|(b, _)| norm > *b + 1e-12) {
            best = Some((norm, v));
        }
    }
    let (norm, v) = best.expect("n > 0");
    v / Complex64::new(norm, 0.0)
}

/// Post-selection scheme for an NS gate on mode 0: one ancilla photon
/// injected in global mode `photon_mode`, accepted when it exits in any of
/// `accept_modes`. The system input spans `{|0>, |1>, |2>}`.
pub fn ns_scheme(total_modes: usize, photon_mode: usize, accept_modes: &[usize]) -> Result<ConditionalScheme> {
    if total_modes < 2 {
        return Err(Error::invalid("an NS scheme needs at least one ancilla mode"));
    }
    let ancilla_modes = total_modes - 1;
    let in_range = |m: usize| (1..total_modes).contains(&m);
    if !in_range(photon_mode) || accept_modes.iter().any(|&m| !in_range(m)) {
        return Err(Error::invalid(format!(
            "ancilla mode indices must lie in 1..{total_modes}"
        )));
    }
    let outcomes = accept_modes
        .iter()
        .map(|&m| OccupationVector::single(ancilla_modes, m - 1))
        .collect();
    ConditionalScheme::new(
        1,
        OccupationVector::single(ancilla_modes, photon_mode - 1),
        outcomes,
        vec![0, 1, 2],
    )
}

/// Diagonal measurement-operator entries for one accepted outcome.
#[derive(Clone, Debug, PartialEq)]
pub struct NsOutcomeReport {
    pub outcome: OccupationVector,
    pub m0: Complex64,
    pub m1: Complex64,
    pub m2: Complex64,
    /// `max(|m1 - m0|, |m2 + m0|)`.
    pub residual: f64,
    /// `|m0|^2`, the success probability on any input once the gate works.
    pub probability: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NsReport {
    pub outcomes: Vec<NsOutcomeReport>,
    /// Largest per-outcome residual.
    pub condition_residual: f64,
    /// Sum of per-outcome probabilities.
    pub success_probability: f64,
}

impl NsReport {
    pub fn is_functioning(&self) -> bool {
        self.condition_residual <= CONDITION_TOL
    }
}

/// Extracts `m0, m1, m2` for every accepted outcome and measures how far
/// they are from `m0 = m1 = -m2`.
pub fn verify_ns(lop: &LopCircuit, scheme: &ConditionalScheme) -> Result<NsReport> {
    if scheme.system_modes() != 1 {
        return Err(Error::invalid("NS verification needs a single system mode"));
    }
    let input = scheme.input_basis()?;
    if input.photon_numbers() != [0, 1, 2] {
        return Err(Error::invalid("NS verification needs system sectors {0, 1, 2}"));
    }
    let mut outcomes = Vec::with_capacity(scheme.rank());
    for outcome in scheme.outcomes() {
        let op = crate::conditional::kraus_operator(scheme, lop, outcome)?;
        let entry = |n: usize| {
            let occ = OccupationVector::new(vec![n]);
            let row = op.output_basis.index_of(&occ).expect("output basis contains inputs");
            let col = op.input_basis.index_of(&occ).expect("input sector present");
            op.entries[(row, col)]
        };
        let (m0, m1, m2) = (entry(0), entry(1), entry(2));
        outcomes.push(NsOutcomeReport {
            outcome: outcome.clone(),
            m0,
            m1,
            m2,
            residual: (m1 - m0).norm().max((m2 + m0).norm()),
            probability: m0.norm_sqr(),
        });
    }
    Ok(NsReport {
        condition_residual: outcomes.iter().map(|o| o.residual).fold(0.0, f64::max),
        success_probability: outcomes.iter().map(|o| o.probability).sum(),
        outcomes,
    })
}

/// Phases of the coupling entries `U[0, i]` and `U[j, 0]`, in radians.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DesignPhases {
    pub coupling_in: f64,
    pub coupling_out: Vec<f64>,
}

/// The entries an NS design fixes, before completion.
#[derive(Clone, Debug, PartialEq)]
pub struct NsConstraints {
    pub partial: PartialMatrix,
    pub photon_mode: usize,
    pub accept_modes: Vec<usize>,
    pub coupling_in: Complex64,
    pub coupling_out: Vec<Complex64>,
}

impl NsConstraints {
    /// `|U[0, i]|^2 / 2 * sum_j |U[j, 0]|^2`.
    pub fn predicted_probability(&self) -> f64 {
        predicted_probability(self.coupling_in, &self.coupling_out)
    }

    pub fn complete(&self) -> Result<NsDesign> {
        let lop = complete_to_unitary(&self.partial)?;
        Ok(NsDesign {
            photon_mode: self.photon_mode,
            accept_modes: self.accept_modes.clone(),
            coupling_in: self.coupling_in,
            coupling_out: self.coupling_out.clone(),
            lop,
        })
    }
}

fn predicted_probability(coupling_in: Complex64, coupling_out: &[Complex64]) -> f64 {
    coupling_in.norm_sqr() / 2.0 * coupling_out.iter().map(|y| y.norm_sqr()).sum::<f64>()
}

/// Fixed entries of an NS design with `s = ys.len()` accepted modes on
/// `total_modes` modes. The photon enters mode 1 and the accepted modes are
/// `1..=s`.
pub fn generalized_design(x: f64, ys: &[f64], phases: &DesignPhases, total_modes: usize) -> Result<NsConstraints> {
    if ys.is_empty() {
        return Err(Error::invalid("at least one accepted mode is required"));
    }
    for &m in std::iter::once(&x).chain(ys) {
        if !(0.0..=1.0).contains(&m) {
            return Err(Error::invalid(format!("coupling modulus {m} outside [0, 1]")));
        }
    }
    let s = ys.len();
    if total_modes < s + 1 {
        return Err(Error::invalid(format!(
            "{s} accepted modes need at least {} modes",
            s + 1
        )));
    }
    if !phases.coupling_out.is_empty() && phases.coupling_out.len() != s {
        return Err(Error::invalid("one output phase per accepted mode is required"));
    }
    let photon_mode = 1;
    let accept_modes: Vec<usize> = (1..=s).collect();
    let coupling_in = Complex64::from_polar(x, phases.coupling_in);
    let coupling_out: Vec<Complex64> = ys
        .iter()
        .enumerate()
        .map(|(k, &y)| Complex64::from_polar(y, phases.coupling_out.get(k).copied().unwrap_or(0.0)))
        .collect();
    let mut partial = PartialMatrix::new(total_modes);
    partial.fix(0, 0, Complex64::new(NS_DIAGONAL, 0.0));
    partial.fix(0, photon_mode, coupling_in);
    for (&j, &y) in accept_modes.iter().zip(&coupling_out) {
        partial.fix(j, 0, y);
        partial.fix(j, photon_mode, coupling_in * y / SQRT_2);
    }
    Ok(NsConstraints {
        partial,
        photon_mode,
        accept_modes,
        coupling_in,
        coupling_out,
    })
}

/// A completed NS design.
#[derive(Clone, Debug, PartialEq)]
pub struct NsDesign {
    pub photon_mode: usize,
    pub accept_modes: Vec<usize>,
    pub coupling_in: Complex64,
    pub coupling_out: Vec<Complex64>,
    pub lop: LopCircuit,
}

impl NsDesign {
    /// Builds the design on the fewest modes that admit a unitary
    /// completion: `s + 2`, `s + 3` or `s + 4` for `s` accepted modes.
    pub fn with_min_modes(x: f64, ys: &[f64], phases: &DesignPhases) -> Result<NsDesign> {
        let s = ys.len();
        let mut last = None;
        for total_modes in (s + 2)..=(s + 4) {
            match generalized_design(x, ys, phases, total_modes)?.complete() {
                Ok(design) => return Ok(design),
                Err(e @ Error::Infeasible(_)) => last = Some(e),
                Err(e) => return Err(e),
            }
        }
        Err(last.expect("at least one attempt"))
    }

    pub fn total_modes(&self) -> usize {
        self.lop.dim()
    }

    pub fn scheme(&self) -> ConditionalScheme {
        ns_scheme(self.total_modes(), self.photon_mode, &self.accept_modes).expect("design modes are valid")
    }

    pub fn predicted_probability(&self) -> f64 {
        predicted_probability(self.coupling_in, &self.coupling_out)
    }
}

/// The single-accepted-mode design from the two couplings
/// `u12 = U[0, 1]` and `u21 = U[1, 0]`, completed on three modes when the
/// couplings lie on the feasibility boundary and on more modes otherwise.
pub fn klm_design(u12: Complex64, u21: Complex64) -> Result<NsDesign> {
    let phases = DesignPhases {
        coupling_in: u12.arg(),
        coupling_out: vec![u21.arg()],
    };
    NsDesign::with_min_modes(u12.norm(), &[u21.norm()], &phases)
}

/// The three-mode design at the optimum `u12 = u21 = 2^(-1/4)`.
pub fn klm_optimum() -> NsDesign {
    let u = Complex64::new(2f64.powf(-0.25), 0.0);
    klm_design(u, u).expect("optimum lies on the feasibility boundary")
}

/// Ancilla-only unitary `V` whose column `target` is `chi`, so that it turns a
/// photon in ancilla mode `target` into the one-photon state
/// `sum_l chi[l] |l>`.
pub fn reduce_general_ancilla(chi: &[Complex64], target: usize) -> Result<LopCircuit> {
    let k = chi.len();
    if target >= k {
        return Err(Error::invalid(format!(
            "target mode {target} outside {k} ancilla modes"
        )));
    }
    let norm_sq: f64 = chi.iter().map(|z| z.norm_sqr()).sum();
    if (norm_sq - 1.0).abs() > 1e-10 {
        return Err(Error::invalid(format!(
            "ancilla state has squared norm {norm_sq}, expected 1"
        )));
    }
    let first = DVector::from_column_slice(chi);
    let mut basis = vec![first.clone()];
    let mut matrix = CMatrix::zeros(k, k);
    matrix.set_column(target, &first);
    for col in (0..k).filter(|&c| c != target) {
        let next = next_orthonormal(&basis, k);
        matrix.set_column(col, &next);
        basis.push(next);
    }
    LopCircuit::new(matrix)
}

/// Success probabilities of the two equivalent pipelines for a one-photon
/// ancilla superposition `chi`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReductionComparison {
    /// `upstream` fed directly with `chi`.
    pub direct: f64,
    /// `upstream · (I ⊕ V)` fed with a photon in the scheme's input mode.
    pub reduced: f64,
}

/// Runs `scheme` with its single-photon ancilla input replaced by `chi`,
/// once directly and once through [`reduce_general_ancilla`].
pub fn compare_ancilla_reduction(
    scheme: &ConditionalScheme,
    upstream: &LopCircuit,
    chi: &[Complex64],
    rho: &DensityMatrix,
) -> Result<ReductionComparison> {
    let input = scheme.ancilla_input();
    let target = match input.counts().iter().position(|&c| c == 1) {
        Some(t) if input.total() == 1 => t,
        _ => return Err(Error::invalid("reduction needs a single-photon ancilla input")),
    };
    if chi.len() != scheme.ancilla_modes() {
        return Err(Error::invalid("chi must have one amplitude per ancilla mode"));
    }
    let superposition: Vec<(Complex64, OccupationVector)> = chi
        .iter()
        .enumerate()
        .filter(|(_, a)| a.norm() > 0.0)
        .map(|(l, &a)| (a, OccupationVector::single(scheme.ancilla_modes(), l)))
        .collect();
    let direct_ops = scheme
        .outcomes()
        .iter()
        .map(|o| superposed_kraus_operator(scheme, upstream, &superposition, o))
        .collect::<Result<Vec<_>>>()?;
    let direct = apply_operators(&direct_ops, rho)?.probability;

    let v = reduce_general_ancilla(chi, target)?;
    let reduced_lop = upstream.compose(&LopCircuit::embed(scheme.system_modes(), &v))?;
    let reduced = apply_conditional(scheme, &reduced_lop, rho)?.probability;
    Ok(ReductionComparison { direct, reduced })
}
