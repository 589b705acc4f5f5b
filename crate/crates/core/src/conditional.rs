//! Post-selected (conditional) operations.
//!
//! The system modes are coupled to ancilla modes prepared in a Fock state,
//! the joint modes pass through a passive circuit, and the ancillae are
//! measured in the occupation basis. Accepting a set of outcomes implements
//! a trace-decreasing completely positive map on the system with one
//! measurement operator per accepted outcome:
//!
//! ```text
//! M_mu[gamma, alpha] = (<gamma| ⊗ <mu|) U (|alpha> ⊗ |nu>)
//! ```
//!
//! Outputs are indexed by the system sectors reachable from the configured
//! input sectors, so measurement operators may be rectangular when an
//! outcome carries a different photon number than the ancilla input.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fock::{
    enumerate_sector, fock_amplitude, lift_to_sector, max_abs_deviation_from_identity, CMatrix, FockSector, LopCircuit,
    OccupationVector,
};

/// Probability below which the normalized conditional state is not formed.
pub const NORM_EPS: f64 = 1e-14;
/// Largest total photon number used when enumerating every ancilla outcome.
pub const OUTCOME_ENUMERATION_CAP: usize = 4;

const HERMITIAN_TOL: f64 = 1e-12;
const PSD_TOL: f64 = 1e-10;

/// Direct sum of photon-number sectors on the system modes, in ascending
/// photon number.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SystemBasis {
    modes: usize,
    sectors: Vec<FockSector>,
}

impl SystemBasis {
    pub fn new(modes: usize, photons: &[usize]) -> Result<Self> {
        let distinct: BTreeSet<usize> = photons.iter().copied().collect();
        if distinct.is_empty() {
            return Err(Error::invalid("system basis needs at least one photon-number sector"));
        }
        let sectors = distinct
            .into_iter()
            .map(|n| enumerate_sector(modes, n))
            .collect::<Result<Vec<_>>>()?;
        Ok(SystemBasis { modes, sectors })
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn photon_numbers(&self) -> Vec<usize> {
        self.sectors.iter().map(FockSector::photons).collect()
    }

    pub fn dim(&self) -> usize {
        self.sectors.iter().map(FockSector::dim).sum()
    }

    pub fn states(&self) -> impl Iterator<Item = &OccupationVector> {
        self.sectors.iter().flat_map(|s| s.basis().iter())
    }

    pub fn index_of(&self, occ: &OccupationVector) -> Option<usize> {
        let mut offset = 0;
        for s in &self.sectors {
            if s.photons() == occ.total() {
                return s.index(occ).ok().map(|i| offset + i);
            }
            offset += s.dim();
        }
        None
    }
}

/// System/ancilla split, ancilla preparation and the accepted outcomes.
#[derive(Clone, Debug, PartialEq)]
pub struct ConditionalScheme {
    system_modes: usize,
    ancilla_modes: usize,
    ancilla_input: OccupationVector,
    outcomes: Vec<OccupationVector>,
    system_photons: Vec<usize>,
}

impl ConditionalScheme {
    pub fn new(
        system_modes: usize,
        ancilla_input: OccupationVector,
        outcomes: Vec<OccupationVector>,
        system_photons: Vec<usize>,
    ) -> Result<Self> {
        if system_modes == 0 {
            return Err(Error::invalid("scheme needs at least one system mode"));
        }
        let ancilla_modes = ancilla_input.modes();
        if outcomes.is_empty() {
            return Err(Error::invalid("post-selection needs at least one accepted outcome"));
        }
        let mut seen = BTreeSet::new();
        for o in &outcomes {
            if o.modes() != ancilla_modes {
                return Err(Error::invalid(format!(
                    "outcome {o} is not defined on the {ancilla_modes} ancilla modes"
                )));
            }
            if !seen.insert(o.clone()) {
                return Err(Error::invalid(format!("outcome {o} listed twice")));
            }
        }
        if system_photons.is_empty() {
            return Err(Error::invalid("scheme needs at least one system photon sector"));
        }
        Ok(ConditionalScheme {
            system_modes,
            ancilla_modes,
            ancilla_input,
            outcomes,
            system_photons,
        })
    }

    /// Scheme accepting every ancilla occupation reachable by photon
    /// conservation, i.e. the full measurement.
    pub fn with_all_outcomes(
        system_modes: usize,
        ancilla_input: OccupationVector,
        system_photons: Vec<usize>,
    ) -> Result<Self> {
        let max_total = system_photons.iter().max().copied().unwrap_or(0) + ancilla_input.total();
        if max_total > OUTCOME_ENUMERATION_CAP {
            return Err(Error::Capacity {
                photons: max_total,
                cap: OUTCOME_ENUMERATION_CAP,
            });
        }
        let ancilla_modes = ancilla_input.modes();
        let outcomes = if ancilla_modes == 0 {
            vec![OccupationVector::vacuum(0)]
        } else {
            let mut all = Vec::new();
            for n in 0..=max_total {
                all.extend_from_slice(enumerate_sector(ancilla_modes, n)?.basis());
            }
            all
        };
        Self::new(system_modes, ancilla_input, outcomes, system_photons)
    }

    pub fn system_modes(&self) -> usize {
        self.system_modes
    }

    pub fn ancilla_modes(&self) -> usize {
        self.ancilla_modes
    }

    pub fn total_modes(&self) -> usize {
        self.system_modes + self.ancilla_modes
    }

    pub fn ancilla_input(&self) -> &OccupationVector {
        &self.ancilla_input
    }

    pub fn outcomes(&self) -> &[OccupationVector] {
        &self.outcomes
    }

    pub fn system_photons(&self) -> &[usize] {
        &self.system_photons
    }

    /// Rank of the post-selection projector.
    pub fn rank(&self) -> usize {
        self.outcomes.len()
    }

    /// Same scheme with a different ancilla preparation.
    pub fn with_ancilla_input(&self, ancilla_input: OccupationVector) -> Result<Self> {
        Self::new(
            self.system_modes,
            ancilla_input,
            self.outcomes.clone(),
            self.system_photons.clone(),
        )
    }

    /// Same scheme accepting a different outcome set.
    pub fn with_outcomes(&self, outcomes: Vec<OccupationVector>) -> Result<Self> {
        Self::new(
            self.system_modes,
            self.ancilla_input.clone(),
            outcomes,
            self.system_photons.clone(),
        )
    }

    pub fn input_basis(&self) -> Result<SystemBasis> {
        SystemBasis::new(self.system_modes, &self.system_photons)
    }

    /// Input sectors plus every sector an accepted outcome can leave behind.
    pub fn output_basis(&self) -> Result<SystemBasis> {
        let mut photons: BTreeSet<usize> = self.system_photons.iter().copied().collect();
        let budget = self.ancilla_input.total();
        for &n in &self.system_photons {
            for o in &self.outcomes {
                if let Some(out) = (n + budget).checked_sub(o.total()) {
                    photons.insert(out);
                }
            }
        }
        SystemBasis::new(self.system_modes, &photons.into_iter().collect::<Vec<_>>())
    }

    fn check_circuit(&self, lop: &LopCircuit) -> Result<()> {
        if lop.dim() != self.total_modes() {
            return Err(Error::invalid(format!(
                "circuit acts on {} modes, scheme needs {} system + {} ancilla",
                lop.dim(),
                self.system_modes,
                self.ancilla_modes
            )));
        }
        Ok(())
    }
}

/// System-space operator implementing one accepted outcome.
/// Rows index the output basis, columns the input basis.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementOperator {
    pub outcome: OccupationVector,
    pub input_basis: SystemBasis,
    pub output_basis: SystemBasis,
    pub entries: CMatrix,
}

/// Measurement operator of `lop` under `scheme` for a single outcome.
pub fn kraus_operator(
    scheme: &ConditionalScheme,
    lop: &LopCircuit,
    outcome: &OccupationVector,
) -> Result<MeasurementOperator> {
    scheme.check_circuit(lop)?;
    if outcome.modes() != scheme.ancilla_modes {
        return Err(Error::invalid(format!(
            "outcome {outcome} is not defined on the {} ancilla modes",
            scheme.ancilla_modes
        )));
    }
    let input_basis = scheme.input_basis()?;
    let output_basis = scheme.output_basis()?;
    let mut entries = CMatrix::zeros(output_basis.dim(), input_basis.dim());
    let nu = scheme.ancilla_input();
    for (col, alpha) in input_basis.states().enumerate() {
        let global_in = alpha.concat(nu);
        for (row, gamma) in output_basis.states().enumerate() {
            if gamma.total() + outcome.total() != global_in.total() {
                continue;
            }
            entries[(row, col)] = fock_amplitude(lop, &global_in, &gamma.concat(outcome))?;
        }
    }
    Ok(MeasurementOperator {
        outcome: outcome.clone(),
        input_basis,
        output_basis,
        entries,
    })
}

/// One operator per accepted outcome of `scheme`.
pub fn kraus_operators(scheme: &ConditionalScheme, lop: &LopCircuit) -> Result<Vec<MeasurementOperator>> {
    scheme
        .outcomes()
        .iter()
        .map(|o| kraus_operator(scheme, lop, o))
        .collect()
}

/// Measurement operator when the ancillae start in the superposition
/// `sum_l amp_l |occ_l>` of equal-photon-number Fock states. The scheme's
/// own ancilla input is ignored.
pub fn superposed_kraus_operator(
    scheme: &ConditionalScheme,
    lop: &LopCircuit,
    ancilla_state: &[(Complex64, OccupationVector)],
    outcome: &OccupationVector,
) -> Result<MeasurementOperator> {
    let (_, first) = ancilla_state
        .first()
        .ok_or_else(|| Error::invalid("ancilla superposition is empty"))?;
    if ancilla_state.iter().any(|(_, o)| o.total() != first.total()) {
        return Err(Error::invalid("ancilla superposition must have a fixed photon number"));
    }
    let mut acc: Option<MeasurementOperator> = None;
    for (amp, occ) in ancilla_state {
        let part = kraus_operator(&scheme.with_ancilla_input(occ.clone())?, lop, outcome)?;
        acc = Some(match acc {
            None => MeasurementOperator {
                entries: part.entries * *amp,
                ..part
            },
            Some(mut m) => {
                m.entries += part.entries * *amp;
                m
            }
        });
    }
    Ok(acc.expect("non-empty superposition"))
}

/// Density matrix on a system basis. Conditional outputs are unnormalized.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    pub basis: SystemBasis,
    pub entries: CMatrix,
}

impl DensityMatrix {
    pub fn pure(basis: SystemBasis, psi: &DVector<Complex64>) -> Result<Self> {
        if psi.len() != basis.dim() {
            return Err(Error::invalid(format!(
                "state has {} amplitudes, basis has {}",
                psi.len(),
                basis.dim()
            )));
        }
        Ok(DensityMatrix {
            entries: psi * psi.adjoint(),
            basis,
        })
    }

    /// `|occ><occ|`.
    pub fn fock(basis: SystemBasis, occ: &OccupationVector) -> Result<Self> {
        let idx = basis
            .index_of(occ)
            .ok_or_else(|| Error::invalid(format!("{occ} is not in the system basis")))?;
        let mut psi = DVector::zeros(basis.dim());
        psi[idx] = Complex64::new(1.0, 0.0);
        Self::pure(basis, &psi)
    }

    pub fn trace(&self) -> f64 {
        self.entries.diagonal().iter().map(|z| z.re).sum()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        if self.entries.nrows() == 0 {
            return 0.0;
        }
        let herm = (&self.entries + self.entries.adjoint()) * Complex64::new(0.5, 0.0);
        SymmetricEigen::new(herm).eigenvalues.min()
    }

    pub fn hermiticity_defect(&self) -> f64 {
        (&self.entries - self.entries.adjoint())
            .iter()
            .fold(0.0, |acc, z| acc.max(z.norm()))
    }

    /// Checks Hermiticity, positivity and `0 < trace <= 1`.
    pub fn validate(&self) -> Result<()> {
        let herm = self.hermiticity_defect();
        if herm > HERMITIAN_TOL {
            return Err(Error::invalid(format!("density matrix not Hermitian ({herm:.3e})")));
        }
        let min = self.min_eigenvalue();
        if min < -PSD_TOL {
            return Err(Error::invalid(format!("density matrix has eigenvalue {min:.3e}")));
        }
        let tr = self.trace();
        if !(tr > 0.0 && tr <= 1.0 + HERMITIAN_TOL) {
            return Err(Error::invalid(format!("density matrix trace {tr} outside (0, 1]")));
        }
        Ok(())
    }
}

/// Result of a post-selected run.
#[derive(Clone, Debug, PartialEq)]
pub struct ConditionalOutput {
    /// Unnormalized conditional state `sum_mu M_mu rho M_mu^dag`.
    pub rho_bar: DensityMatrix,
    /// Success probability, clamped to `[0, 1]`.
    pub probability: f64,
    /// `rho_bar / probability`, absent when the probability is below [`NORM_EPS`].
    pub normalized: Option<DensityMatrix>,
}

/// Applies a set of measurement operators sharing input and output bases.
pub fn apply_operators(ops: &[MeasurementOperator], rho: &DensityMatrix) -> Result<ConditionalOutput> {
    let first = ops
        .first()
        .ok_or_else(|| Error::invalid("no measurement operators to apply"))?;
    if rho.basis != first.input_basis {
        return Err(Error::invalid("input state is not on the scheme's system sectors"));
    }
    let out_basis = first.output_basis.clone();
    let d = out_basis.dim();
    let mut acc = CMatrix::zeros(d, d);
    for m in ops {
        if m.output_basis != out_basis || m.input_basis != first.input_basis {
            return Err(Error::invalid("measurement operators act on different bases"));
        }
        acc += &m.entries * &rho.entries * m.entries.adjoint();
    }
    let rho_bar = DensityMatrix {
        basis: out_basis,
        entries: acc,
    };
    let probability = rho_bar.trace().clamp(0.0, 1.0);
    let normalized = (probability > NORM_EPS).then(|| DensityMatrix {
        basis: rho_bar.basis.clone(),
        entries: &rho_bar.entries / Complex64::new(probability, 0.0),
    });
    Ok(ConditionalOutput {
        rho_bar,
        probability,
        normalized,
    })
}

/// Conditional output state and success probability of `scheme` run on `lop`.
pub fn apply_conditional(
    scheme: &ConditionalScheme,
    lop: &LopCircuit,
    rho: &DensityMatrix,
) -> Result<ConditionalOutput> {
    apply_operators(&kraus_operators(scheme, lop)?, rho)
}

/// `max |sum_mu M_mu^dag M_mu - I|` over the scheme's outcomes. Close to zero
/// for a unitary circuit when the scheme lists every outcome.
pub fn completeness_defect(scheme: &ConditionalScheme, lop: &LopCircuit) -> Result<f64> {
    let ops = kraus_operators(scheme, lop)?;
    let d = scheme.input_basis()?.dim();
    let mut sum = CMatrix::zeros(d, d);
    for m in &ops {
        sum += m.entries.adjoint() * &m.entries;
    }
    Ok(max_abs_deviation_from_identity(&sum))
}

/// Pure state of the joint system + ancilla modes at fixed photon number.
#[derive(Clone, Debug, PartialEq)]
pub struct GlobalState {
    system_modes: usize,
    sector: FockSector,
    amplitudes: DVector<Complex64>,
}

impl GlobalState {
    pub fn new(system_modes: usize, sector: FockSector, amplitudes: DVector<Complex64>) -> Result<Self> {
        if amplitudes.len() != sector.dim() {
            return Err(Error::invalid("amplitude count does not match the sector"));
        }
        if system_modes > sector.modes() {
            return Err(Error::invalid("more system modes than sector modes"));
        }
        Ok(GlobalState {
            system_modes,
            sector,
            amplitudes,
        })
    }

    /// `|system> ⊗ |ancilla>`.
    pub fn product(system: &OccupationVector, ancilla: &OccupationVector) -> Result<Self> {
        let joint = system.concat(ancilla);
        let sector = enumerate_sector(joint.modes(), joint.total())?;
        let mut amplitudes = DVector::zeros(sector.dim());
        amplitudes[sector.index(&joint)?] = Complex64::new(1.0, 0.0);
        Self::new(system.modes(), sector, amplitudes)
    }

    pub fn sector(&self) -> &FockSector {
        &self.sector
    }

    pub fn amplitudes(&self) -> &DVector<Complex64> {
        &self.amplitudes
    }

    pub fn system_modes(&self) -> usize {
        self.system_modes
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.norm_squared()
    }

    /// State after the joint modes pass through `lop`.
    pub fn evolve(&self, lop: &LopCircuit) -> Result<GlobalState> {
        if lop.dim() != self.sector.modes() {
            return Err(Error::invalid("circuit and state act on different mode counts"));
        }
        let lifted = lift_to_sector(lop, self.sector.photons())?;
        Ok(GlobalState {
            system_modes: self.system_modes,
            sector: self.sector.clone(),
            amplitudes: lifted.entries * &self.amplitudes,
        })
    }

    /// Splits the state by the number of photons found in the ancilla modes.
    /// Components are full-length vectors that sum back to the state; counts
    /// whose component vanishes identically are omitted.
    pub fn decompose_by_ancilla_count(&self) -> BTreeMap<usize, DVector<Complex64>> {
        let mut parts: BTreeMap<usize, DVector<Complex64>> = BTreeMap::new();
        let dim = self.sector.dim();
        for (i, occ) in self.sector.basis().iter().enumerate() {
            let anc: usize = occ.counts()[self.system_modes..].iter().sum();
            let amp = self.amplitudes[i];
            if amp != Complex64::new(0.0, 0.0) {
                parts.entry(anc).or_insert_with(|| DVector::zeros(dim))[i] = amp;
            }
        }
        parts
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::{haar_unitary, random_state, stream_rng};

    fn klm_scheme() -> ConditionalScheme {
        ConditionalScheme::new(
            1,
            OccupationVector::new(vec![1, 0]),
            vec![OccupationVector::new(vec![1, 0])],
            vec![0, 1, 2],
        )
        .unwrap()
    }

    #[test]
    fn identity_circuit_passes_state_through() {
        let scheme = klm_scheme();
        let lop = LopCircuit::identity(3);
        let m = kraus_operator(&scheme, &lop, &scheme.outcomes()[0]).unwrap();
        assert!((m.entries.clone() - CMatrix::identity(3, 3)).norm() < 1e-15);
        let psi = random_state(3, &mut stream_rng(5, 0));
        let rho = DensityMatrix::pure(scheme.input_basis().unwrap(), &psi).unwrap();
        let out = apply_conditional(&scheme, &lop, &rho).unwrap();
        assert!((out.probability - 1.0).abs() < 1e-14);
        assert!((out.rho_bar.entries - rho.entries).norm() < 1e-14);
    }

    #[test]
    fn unreachable_outcome_gives_zero_columns() {
        // Outcome with 4 ancilla photons: only reachable from no input sector
        // since inputs carry at most 2 + 1 photons.
        let scheme = klm_scheme()
            .with_outcomes(vec![OccupationVector::new(vec![2, 2])])
            .unwrap();
        let lop = haar_unitary(3, &mut stream_rng(1, 0));
        let m = kraus_operator(&scheme, &lop, &scheme.outcomes()[0]).unwrap();
        assert!(m.entries.iter().all(|z| *z == Complex64::new(0.0, 0.0)));

        // Two ancilla photons: only the |1>, |2> inputs can supply them.
        let scheme = klm_scheme()
            .with_outcomes(vec![OccupationVector::new(vec![1, 1])])
            .unwrap();
        let m = kraus_operator(&scheme, &lop, &scheme.outcomes()[0]).unwrap();
        let col_vac = m.entries.column(0);
        assert!(col_vac.iter().all(|z| *z == Complex64::new(0.0, 0.0)));
        assert!(m.entries.column(2).iter().any(|z| z.norm() > 0.0));
    }

    #[test]
    fn same_total_outcome_is_diagonal() {
        let scheme = ConditionalScheme::new(
            1,
            OccupationVector::new(vec![1, 0, 0]),
            vec![OccupationVector::new(vec![0, 0, 1])],
            vec![0, 1, 2],
        )
        .unwrap();
        let lop = haar_unitary(4, &mut stream_rng(9, 0));
        let m = kraus_operator(&scheme, &lop, &scheme.outcomes()[0]).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                if i != j {
                    assert_eq!(m.entries[(i, j)], Complex64::new(0.0, 0.0));
                }
            }
        }
    }

    #[test]
    fn scheme_validation() {
        let input = OccupationVector::new(vec![1, 0]);
        assert!(ConditionalScheme::new(1, input.clone(), vec![], vec![0]).is_err());
        assert!(ConditionalScheme::new(
            1,
            input.clone(),
            vec![OccupationVector::new(vec![1, 0]), OccupationVector::new(vec![1, 0])],
            vec![0]
        )
        .is_err());
        assert!(ConditionalScheme::new(1, input.clone(), vec![OccupationVector::new(vec![1])], vec![0]).is_err());
        let scheme = klm_scheme();
        assert!(kraus_operator(&scheme, &LopCircuit::identity(4), &scheme.outcomes()[0]).is_err());
        assert!(ConditionalScheme::with_all_outcomes(1, OccupationVector::new(vec![2, 1]), vec![0, 1, 2]).is_err());
    }

    #[test]
    fn completeness_for_identity() {
        let scheme = ConditionalScheme::with_all_outcomes(1, OccupationVector::new(vec![1, 0]), vec![0, 1, 2]).unwrap();
        let defect = completeness_defect(&scheme, &LopCircuit::identity(3)).unwrap();
        assert!(defect < 1e-14);
    }

    #[test]
    fn zero_probability_has_no_normalized_state() {
        let scheme = klm_scheme()
            .with_outcomes(vec![OccupationVector::new(vec![0, 1])])
            .unwrap();
        let rho = DensityMatrix::fock(scheme.input_basis().unwrap(), &OccupationVector::new(vec![0])).unwrap();
        let out = apply_conditional(&scheme, &LopCircuit::identity(3), &rho).unwrap();
        assert_eq!(out.probability, 0.0);
        assert!(out.normalized.is_none());
    }

    #[test]
    fn decomposition_of_product_state() {
        let state = GlobalState::product(&OccupationVector::new(vec![2]), &OccupationVector::new(vec![1, 0])).unwrap();
        let parts = state.decompose_by_ancilla_count();
        assert_eq!(parts.keys().copied().collect::<Vec<_>>(), vec![1]);
    }

    #[test]
    fn validate_rejects_bad_states() {
        let basis = SystemBasis::new(1, &[0, 1]).unwrap();
        let bad = DensityMatrix {
            basis: basis.clone(),
            entries: CMatrix::from_row_slice(
                2,
                2,
                &[
                    Complex64::new(0.5, 0.0),
                    Complex64::new(0.0, 0.3),
                    Complex64::new(0.0, 0.3),
                    Complex64::new(0.5, 0.0),
                ],
            ),
        };
        assert!(bad.validate().is_err());
        let neg = DensityMatrix {
            basis,
            entries: CMatrix::from_diagonal(&DVector::from_vec(vec![
                Complex64::new(1.2, 0.0),
                Complex64::new(-0.2, 0.0),
            ])),
        };
        assert!(neg.validate().is_err());
    }
}
