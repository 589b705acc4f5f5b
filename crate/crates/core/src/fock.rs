//! Bosonic Fock bookkeeping: occupation vectors, fixed-photon-number sectors,
//! matrix permanents and the lift of a mode unitary to a sector unitary.
//!
//! A passive linear-optical circuit acting on `N` modes is described by an
//! `N x N` unitary `U` with `a_j^dag -> sum_i U[i, j] a_i^dag`. It conserves
//! the total photon number, so its Fock-space representation is block
//! diagonal and each block is computed exactly from permanents of
//! row/column-repeated submatrices of `U`.

use std::fmt;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;

/// Maximum mode-matrix unitarity defect accepted by [`LopCircuit::new`].
pub const UNITARITY_TOL: f64 = 1e-10;
/// Unitarity tolerance for lifted sector matrices.
pub const LIFT_TOL: f64 = 1e-9;
/// Largest total photon number for which amplitudes are evaluated.
pub const MAX_PHOTONS: usize = 8;

const FACTORIALS: [f64; MAX_PHOTONS + 1] = {
    let mut table = [1.0; MAX_PHOTONS + 1];
    let mut i = 1;
    while i <= MAX_PHOTONS {
        table[i] = table[i - 1] * i as f64;
        i += 1;
    }
    table
};

/// Photon counts per optical mode.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct OccupationVector(Vec<usize>);

impl OccupationVector {
    pub fn new(counts: impl Into<Vec<usize>>) -> Self {
        OccupationVector(counts.into())
    }

    pub fn vacuum(modes: usize) -> Self {
        OccupationVector(vec![0; modes])
    }

    /// One photon in `mode`, vacuum elsewhere.
    pub fn single(modes: usize, mode: usize) -> Self {
        let mut counts = vec![0; modes];
        counts[mode] = 1;
        OccupationVector(counts)
    }

    pub fn counts(&self) -> &[usize] {
        &self.0
    }

    pub fn modes(&self) -> usize {
        self.0.len()
    }

    pub fn total(&self) -> usize {
        self.0.iter().sum()
    }

    /// `self ⊕ other`: the occupation of the joint mode set.
    pub fn concat(&self, other: &OccupationVector) -> OccupationVector {
        let mut counts = self.0.clone();
        counts.extend_from_slice(&other.0);
        OccupationVector(counts)
    }

    /// Splits into the first `at` modes and the rest.
    pub fn split(&self, at: usize) -> (OccupationVector, OccupationVector) {
        let (a, b) = self.0.split_at(at);
        (OccupationVector(a.to_vec()), OccupationVector(b.to_vec()))
    }

    /// Mode relabelling: photon count of mode `m` moves to `perm[m]`.
    pub fn permuted(&self, perm: &[usize]) -> OccupationVector {
        let mut counts = vec![0; self.0.len()];
        for (m, &c) in self.0.iter().enumerate() {
            counts[perm[m]] = c;
        }
        OccupationVector(counts)
    }

    fn factorial_product(&self) -> f64 {
        self.0.iter().map(|&c| FACTORIALS[c]).product()
    }
}

impl fmt::Display for OccupationVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "|")?;
        for c in &self.0 {
            write!(f, "{c}")?;
        }
        write!(f, ">")
    }
}

/// Binomial coefficient `C(n, k)`.
pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
}

/// Number of ways to put `photons` photons into `modes` modes.
pub fn sector_dimension(modes: usize, photons: usize) -> usize {
    if modes == 0 {
        return usize::from(photons == 0);
    }
    binomial(photons + modes - 1, modes - 1)
}

/// The span of all `photons`-photon states on `modes` modes, with its basis
/// in lexicographically decreasing order (`(n, 0, .., 0)` first).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FockSector {
    modes: usize,
    photons: usize,
    basis: Vec<OccupationVector>,
}

impl FockSector {
    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn photons(&self) -> usize {
        self.photons
    }

    pub fn basis(&self) -> &[OccupationVector] {
        &self.basis
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    /// Position of `occ` in the canonical basis order.
    pub fn index(&self, occ: &OccupationVector) -> Result<usize> {
        if occ.modes() != self.modes {
            return Err(Error::invalid(format!(
                "occupation has {} modes, sector has {}",
                occ.modes(),
                self.modes
            )));
        }
        if occ.total() != self.photons {
            return Err(Error::invalid(format!(
                "occupation holds {} photons, sector holds {}",
                occ.total(),
                self.photons
            )));
        }
        // Count the basis states that precede `occ`: same prefix, larger
        // count at the first differing mode.
        let mut index = 0;
        let mut remaining = self.photons;
        for (pos, &c) in occ.counts().iter().enumerate().take(self.modes - 1) {
            let rest_modes = self.modes - pos - 1;
            for larger in (c + 1)..=remaining {
                index += sector_dimension(rest_modes, remaining - larger);
            }
            remaining -= c;
        }
        Ok(index)
    }
}

/// Enumerates the `photons`-photon sector on `modes` modes.
pub fn enumerate_sector(modes: usize, photons: usize) -> Result<FockSector> {
    if modes == 0 {
        return Err(Error::invalid("a Fock sector needs at least one mode"));
    }
    let mut basis = Vec::with_capacity(sector_dimension(modes, photons));
    let mut current = vec![0; modes];
    fill_decreasing(&mut current, 0, photons, &mut basis);
    Ok(FockSector { modes, photons, basis })
}

fn fill_decreasing(current: &mut [usize], pos: usize, remaining: usize, out: &mut Vec<OccupationVector>) {
    if pos + 1 == current.len() {
        current[pos] = remaining;
        out.push(OccupationVector(current.to_vec()));
        return;
    }
    for c in (0..=remaining).rev() {
        current[pos] = c;
        fill_decreasing(current, pos + 1, remaining - c, out);
    }
    current[pos] = 0;
}

/// Permanent of a square complex matrix.
///
/// Sizes up to 3 are expanded directly; larger matrices use Glynn's formula
/// with a Gray-code walk over the sign vectors, `O(2^(n-1) n)`.
pub fn permanent(m: &CMatrix) -> Result<Complex64> {
    if m.nrows() != m.ncols() {
        return Err(Error::invalid(format!(
            "permanent needs a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(match m.nrows() {
        0 => Complex64::new(1.0, 0.0),
        1 => m[(0, 0)],
        2 => m[(0, 0)] * m[(1, 1)] + m[(0, 1)] * m[(1, 0)],
        3 => {
            m[(0, 0)] * (m[(1, 1)] * m[(2, 2)] + m[(1, 2)] * m[(2, 1)])
                + m[(0, 1)] * (m[(1, 0)] * m[(2, 2)] + m[(1, 2)] * m[(2, 0)])
                + m[(0, 2)] * (m[(1, 0)] * m[(2, 1)] + m[(1, 1)] * m[(2, 0)])
        }
        _ => glynn(m),
    })
}

fn glynn(m: &CMatrix) -> Complex64 {
    let n = m.nrows();
    // Column sums for the all-plus sign vector; row 0 keeps delta = +1.
    let mut sums: Vec<Complex64> = (0..n).map(|j| m.column(j).sum()).collect();
    let mut delta = vec![1.0f64; n];
    let mut sign = 1.0;
    let mut total: Complex64 = sums.iter().product();
    for k in 1u64..(1u64 << (n - 1)) {
        let row = k.trailing_zeros() as usize + 1;
        let step = -2.0 * delta[row];
        for (j, s) in sums.iter_mut().enumerate() {
            *s += m[(row, j)] * step;
        }
        delta[row] = -delta[row];
        sign = -sign;
        total += sums.iter().product::<Complex64>() * sign;
    }
    total / (1u64 << (n - 1)) as f64
}

/// Max-entry deviation of `m^dag m` from the identity.
pub fn unitarity_defect(m: &CMatrix) -> f64 {
    if m.nrows() != m.ncols() {
        return f64::INFINITY;
    }
    let gram = m.adjoint() * m;
    max_abs_deviation_from_identity(&gram)
}

pub(crate) fn max_abs_deviation_from_identity(m: &CMatrix) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((m[(i, j)] - target).norm());
        }
    }
    worst
}

/// A passive linear-optical circuit: a unitary on the mode operators.
#[derive(Clone, Debug, PartialEq)]
pub struct LopCircuit {
    matrix: CMatrix,
}

impl LopCircuit {
    /// Wraps `matrix` after checking it is unitary within [`UNITARITY_TOL`].
    pub fn new(matrix: CMatrix) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() || matrix.nrows() == 0 {
            return Err(Error::invalid(format!(
                "mode matrix must be square and non-empty, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        let defect = unitarity_defect(&matrix);
        if defect > UNITARITY_TOL {
            return Err(Error::NotUnitary { defect });
        }
        Ok(LopCircuit { matrix })
    }

    pub fn identity(dim: usize) -> Self {
        LopCircuit {
            matrix: CMatrix::identity(dim, dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn entry(&self, row: usize, col: usize) -> Complex64 {
        self.matrix[(row, col)]
    }

    /// Circuit applying `other` first, then `self`.
    pub fn compose(&self, other: &LopCircuit) -> Result<LopCircuit> {
        if self.dim() != other.dim() {
            return Err(Error::invalid("composed circuits must act on the same modes"));
        }
        Ok(LopCircuit {
            matrix: &self.matrix * &other.matrix,
        })
    }

    /// `identity(leading) ⊕ block`: a circuit acting only on the trailing modes.
    pub fn embed(leading: usize, block: &LopCircuit) -> LopCircuit {
        let dim = leading + block.dim();
        let mut matrix = CMatrix::identity(dim, dim);
        matrix
            .view_mut((leading, leading), (block.dim(), block.dim()))
            .copy_from(&block.matrix);
        LopCircuit { matrix }
    }

    /// The same circuit with mode `m` relabelled as `perm[m]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<LopCircuit> {
        let n = self.dim();
        let mut seen = vec![false; n];
        if perm.len() != n || perm.iter().any(|&p| p >= n || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::invalid("mode relabelling must be a permutation"));
        }
        let mut matrix = CMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                matrix[(perm[i], perm[j])] = self.matrix[(i, j)];
            }
        }
        Ok(LopCircuit { matrix })
    }
}

/// `<out| U |in>` for the Fock representation of `lop`.
///
/// Zero whenever the photon totals differ.
pub fn fock_amplitude(lop: &LopCircuit, input: &OccupationVector, output: &OccupationVector) -> Result<Complex64> {
    let n = lop.dim();
    if input.modes() != n || output.modes() != n {
        return Err(Error::invalid(format!(
            "occupations must span the circuit's {n} modes (got {} and {})",
            input.modes(),
            output.modes()
        )));
    }
    let photons = input.total();
    if photons != output.total() {
        return Ok(Complex64::new(0.0, 0.0));
    }
    if photons > MAX_PHOTONS {
        return Err(Error::Capacity {
            photons,
            cap: MAX_PHOTONS,
        });
    }
    let cols = repeated_indices(input);
    let rows = repeated_indices(output);
    let sub = CMatrix::from_fn(photons, photons, |r, c| lop.matrix[(rows[r], cols[c])]);
    let norm = (input.factorial_product() * output.factorial_product()).sqrt();
    Ok(permanent(&sub)? / norm)
}

fn repeated_indices(occ: &OccupationVector) -> Vec<usize> {
    occ.counts()
        .iter()
        .enumerate()
        .flat_map(|(mode, &c)| std::iter::repeat_n(mode, c))
        .collect()
}

/// The lift of a circuit to one photon-number sector, indexed
/// `(output basis, input basis)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SectorMatrix {
    pub sector: FockSector,
    pub entries: CMatrix,
}

/// Restriction of the Fock representation of `lop` to the `photons` sector.
pub fn lift_to_sector(lop: &LopCircuit, photons: usize) -> Result<SectorMatrix> {
    if photons > MAX_PHOTONS {
        return Err(Error::Capacity {
            photons,
            cap: MAX_PHOTONS,
        });
    }
    let sector = enumerate_sector(lop.dim(), photons)?;
    let basis = sector.basis();
    let d = basis.len();
    let mut entries = CMatrix::zeros(d, d);
    for (col, input) in basis.iter().enumerate() {
        for (row, output) in basis.iter().enumerate() {
            entries[(row, col)] = fock_amplitude(lop, input, output)?;
        }
    }
    Ok(SectorMatrix { sector, entries })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn vacuum_sector() {
        let s = enumerate_sector(2, 0).unwrap();
        assert_eq!(s.basis(), &[OccupationVector::new(vec![0, 0])]);
    }

    #[test]
    fn single_photon_sector_order() {
        let s = enumerate_sector(3, 1).unwrap();
        let expected: Vec<_> = [[1, 0, 0], [0, 1, 0], [0, 0, 1]]
            .iter()
            .map(|v| OccupationVector::new(v.to_vec()))
            .collect();
        assert_eq!(s.basis(), expected.as_slice());
        assert_eq!(s.index(&OccupationVector::new(vec![0, 1, 0])).unwrap(), 1);
        assert_eq!(s.index(&s.basis()[0]).unwrap(), 0);
    }

    #[test]
    fn zero_modes_rejected() {
        assert!(matches!(enumerate_sector(0, 1), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn index_rejects_wrong_total_or_length() {
        let s = enumerate_sector(3, 2).unwrap();
        assert!(s.index(&OccupationVector::new(vec![1, 0, 0])).is_err());
        assert!(s.index(&OccupationVector::new(vec![1, 1])).is_err());
    }

    #[test]
    fn permanent_small_cases() {
        let m = CMatrix::from_row_slice(2, 2, &[c(1.0, 2.0), c(3.0, 0.0), c(0.0, -1.0), c(4.0, 1.0)]);
        let expected = m[(0, 0)] * m[(1, 1)] + m[(0, 1)] * m[(1, 0)];
        assert_eq!(permanent(&m).unwrap(), expected);
        for n in 0..7 {
            let id = CMatrix::identity(n, n);
            assert!((permanent(&id).unwrap() - c(1.0, 0.0)).norm() < 1e-15);
        }
        assert!(permanent(&CMatrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn permanent_of_all_ones_is_factorial() {
        for n in 1..=7usize {
            let ones = CMatrix::from_element(n, n, c(1.0, 0.0));
            let fact: f64 = (1..=n).map(|k| k as f64).product();
            assert!((permanent(&ones).unwrap().re - fact).abs() < 1e-9);
        }
    }

    #[test]
    fn identity_amplitudes() {
        let lop = LopCircuit::identity(3);
        let sector = enumerate_sector(3, 3).unwrap();
        for occ in sector.basis() {
            let a = fock_amplitude(&lop, occ, occ).unwrap();
            assert!((a - c(1.0, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn totals_must_match() {
        let lop = LopCircuit::identity(2);
        let a = fock_amplitude(
            &lop,
            &OccupationVector::new(vec![1, 0]),
            &OccupationVector::new(vec![1, 1]),
        )
        .unwrap();
        assert_eq!(a, c(0.0, 0.0));
        assert!(fock_amplitude(
            &lop,
            &OccupationVector::new(vec![1, 0, 0]),
            &OccupationVector::new(vec![1, 0]),
        )
        .is_err());
    }

    #[test]
    fn capacity_is_enforced() {
        let lop = LopCircuit::identity(2);
        let big = OccupationVector::new(vec![MAX_PHOTONS, 1]);
        assert!(matches!(fock_amplitude(&lop, &big, &big), Err(Error::Capacity { .. })));
        assert!(lift_to_sector(&lop, MAX_PHOTONS + 1).is_err());
    }

    #[test]
    fn hong_ou_mandel_null() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let lop = LopCircuit::new(CMatrix::from_row_slice(
            2,
            2,
            &[c(h, 0.0), c(h, 0.0), c(h, 0.0), c(-h, 0.0)],
        ))
        .unwrap();
        let both = OccupationVector::new(vec![1, 1]);
        // direct sum over the two permutations: h*(-h) + h*h
        let oracle = lop.entry(0, 0) * lop.entry(1, 1) + lop.entry(0, 1) * lop.entry(1, 0);
        let a = fock_amplitude(&lop, &both, &both).unwrap();
        assert!(oracle.norm() < 1e-16);
        assert!(a.norm() < 1e-15);
    }

    #[test]
    fn lift_of_low_sectors() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let lop = LopCircuit::new(CMatrix::from_row_slice(
            2,
            2,
            &[c(h, 0.0), c(0.0, h), c(0.0, h), c(h, 0.0)],
        ))
        .unwrap();
        let vac = lift_to_sector(&lop, 0).unwrap();
        assert_eq!(vac.entries.shape(), (1, 1));
        assert!((vac.entries[(0, 0)] - c(1.0, 0.0)).norm() < 1e-15);
        let one = lift_to_sector(&lop, 1).unwrap();
        assert!((&one.entries - lop.matrix()).norm() < 1e-15);
    }

    #[test]
    fn non_unitary_rejected() {
        let m = CMatrix::from_element(2, 2, c(1.0, 0.0));
        assert!(matches!(LopCircuit::new(m), Err(Error::NotUnitary { .. })));
    }

    #[test]
    fn embed_and_permute() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let block = LopCircuit::new(CMatrix::from_row_slice(
            2,
            2,
            &[c(h, 0.0), c(h, 0.0), c(h, 0.0), c(-h, 0.0)],
        ))
        .unwrap();
        let big = LopCircuit::embed(1, &block);
        assert_eq!(big.dim(), 3);
        assert_eq!(big.entry(0, 0), c(1.0, 0.0));
        assert_eq!(big.entry(2, 2), c(-h, 0.0));
        let swapped = big.permuted(&[0, 2, 1]).unwrap();
        assert_eq!(swapped.entry(1, 1), c(-h, 0.0));
        assert!(big.permuted(&[0, 0, 1]).is_err());
    }
}
