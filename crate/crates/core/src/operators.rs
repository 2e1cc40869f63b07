// SPDX-License-Identifier: Apache-2.0

//! Dense spin-1/2 operators on the 2^N Hilbert space.
//!
//! Basis convention: site 0 is the most significant qubit of the basis index,
//! and bit value 0 is spin up (`I_z = +1/2`). The all-zero index is the
//! fully polarized ground state used throughout the protocols.

use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use nalgebra::{Complex, ComplexField, DMatrix};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{c, ci, Real, C};
use crate::spin_system::CouplingMatrix;
use crate::MAX_SPINS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    /// 2×2 spin-1/2 matrix, half the Pauli matrix.
    pub fn spin_half<T: Real>(self) -> DMatrix<C<T>> {
        let h = T::lit(0.5);
        let z = C::<T>::new(T::zero(), T::zero());
        match self {
            Axis::X => DMatrix::from_row_slice(2, 2, &[z, c(h), c(h), z]),
            Axis::Y => DMatrix::from_row_slice(2, 2, &[z, ci(-h), ci(h), z]),
            Axis::Z => DMatrix::from_row_slice(2, 2, &[c(h), z, z, c(-h)]),
        }
    }
}

/// Which axis carries the factor 2 in `2 I_α I_α − I_β I_β − I_γ I_γ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HamiltonianKind {
    Dz,
    Dy,
    Dx,
}

impl HamiltonianKind {
    pub fn distinguished(self) -> Axis {
        match self {
            HamiltonianKind::Dz => Axis::Z,
            HamiltonianKind::Dy => Axis::Y,
            HamiltonianKind::Dx => Axis::X,
        }
    }
}

pub(crate) fn check_spin_count(n_spins: usize) -> Result<()> {
    if n_spins > MAX_SPINS {
        return Err(Error::TooManySpins(n_spins));
    }
    Ok(())
}

/// Tolerance used when accepting a matrix as Hermitian, relative to its size.
fn hermitian_tolerance<T: Real>(m: &DMatrix<C<T>>) -> T {
    let scale = m.iter().map(|z| z.modulus()).fold(T::one(), |a, b| a.max(b));
    T::lit(1e-12) * scale
}

/// Complex product assembled from four real products, which nalgebra hands
/// to its blocked kernels; small matrices multiply directly.
pub(crate) fn matmul<T: Real>(a: &DMatrix<C<T>>, b: &DMatrix<C<T>>) -> DMatrix<C<T>> {
    if a.nrows() < 32 {
        return a * b;
    }
    let (ar, ai) = (a.map(|z| z.re), a.map(|z| z.im));
    let (br, bi) = (b.map(|z| z.re), b.map(|z| z.im));
    let re = &ar * &br - &ai * &bi;
    let im = &ar * &bi + &ai * &br;
    re.zip_map(&im, C::new)
}

pub(crate) fn max_abs<T: Real>(m: &DMatrix<C<T>>) -> T {
    m.iter().map(|z| z.modulus()).fold(T::zero(), |a, b| a.max(b))
}

/// Dense Hermitian operator on `n_spins` spin-1/2 sites.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianOperator<T: Real> {
    n_spins: usize,
    matrix: DMatrix<C<T>>,
}

impl<T: Real> HermitianOperator<T> {
    /// Accepts `matrix` if it is Hermitian to round-off, then symmetrizes it
    /// exactly so downstream eigensolvers see a perfectly Hermitian input.
    pub fn from_matrix(n_spins: usize, matrix: DMatrix<C<T>>) -> Result<Self> {
        check_spin_count(n_spins)?;
        let dim = 1usize << n_spins;
        if matrix.nrows() != dim || matrix.ncols() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: matrix.nrows(),
            });
        }
        let deviation = max_abs(&(&matrix - matrix.adjoint()));
        if deviation > hermitian_tolerance(&matrix) {
            return Err(Error::NotHermitian(deviation.as_f64()));
        }
        Ok(Self::symmetrized(n_spins, matrix))
    }

    pub(crate) fn symmetrized(n_spins: usize, matrix: DMatrix<C<T>>) -> Self {
        let half = c(T::lit(0.5));
        let matrix = (&matrix + matrix.adjoint()) * half;
        Self { n_spins, matrix }
    }

    pub fn zeros(n_spins: usize) -> Self {
        let dim = 1usize << n_spins;
        Self {
            n_spins,
            matrix: DMatrix::zeros(dim, dim),
        }
    }

    pub fn identity(n_spins: usize) -> Self {
        let dim = 1usize << n_spins;
        Self {
            n_spins,
            matrix: DMatrix::identity(dim, dim),
        }
    }

    pub fn n_spins(&self) -> usize {
        self.n_spins
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<C<T>> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<C<T>> {
        self.matrix
    }

    pub fn trace(&self) -> C<T> {
        self.matrix.trace()
    }

    pub fn scaled(&self, factor: T) -> Self {
        Self {
            n_spins: self.n_spins,
            matrix: &self.matrix * c(factor),
        }
    }

    /// Largest elementwise modulus of `self − other`.
    pub fn max_abs_diff(&self, other: &Self) -> T {
        max_abs(&(&self.matrix - &other.matrix))
    }

    pub fn max_abs(&self) -> T {
        max_abs(&self.matrix)
    }

    pub fn hermiticity_error(&self) -> T {
        max_abs(&(&self.matrix - self.matrix.adjoint()))
    }

    /// `[self, other]`, which is anti-Hermitian.
    pub fn commutator(&self, other: &Self) -> DMatrix<C<T>> {
        matmul(&self.matrix, &other.matrix) - matmul(&other.matrix, &self.matrix)
    }

    /// `−i[self, other]`, the Hermitian form of the commutator.
    pub fn i_commutator(&self, other: &Self) -> Self {
        let m = self.commutator(other) * ci(-T::one());
        Self::symmetrized(self.n_spins, m)
    }

    /// Adds `coeff · Π_k I_{axis_k, site_k}` for distinct sites.
    pub(crate) fn add_product(&mut self, factors: &[(usize, Axis)], coeff: C<T>) {
        add_spin_product(&mut self.matrix, self.n_spins, factors, coeff);
    }
}

fn assert_same_space<T: Real>(a: &HermitianOperator<T>, b: &HermitianOperator<T>) {
    assert_eq!(a.n_spins, b.n_spins, "operators act on different spin counts");
}

impl<T: Real> Add for &HermitianOperator<T> {
    type Output = HermitianOperator<T>;
    fn add(self, rhs: Self) -> HermitianOperator<T> {
        assert_same_space(self, rhs);
        HermitianOperator {
            n_spins: self.n_spins,
            matrix: &self.matrix + &rhs.matrix,
        }
    }
}

impl<T: Real> Add for HermitianOperator<T> {
    type Output = HermitianOperator<T>;
    fn add(self, rhs: Self) -> HermitianOperator<T> {
        &self + &rhs
    }
}

impl<T: Real> AddAssign<&HermitianOperator<T>> for HermitianOperator<T> {
    fn add_assign(&mut self, rhs: &HermitianOperator<T>) {
        assert_same_space(self, rhs);
        self.matrix += &rhs.matrix;
    }
}

impl<T: Real> Sub for &HermitianOperator<T> {
    type Output = HermitianOperator<T>;
    fn sub(self, rhs: Self) -> HermitianOperator<T> {
        assert_same_space(self, rhs);
        HermitianOperator {
            n_spins: self.n_spins,
            matrix: &self.matrix - &rhs.matrix,
        }
    }
}

impl<T: Real> Sub for HermitianOperator<T> {
    type Output = HermitianOperator<T>;
    fn sub(self, rhs: Self) -> HermitianOperator<T> {
        &self - &rhs
    }
}

impl<T: Real> Neg for &HermitianOperator<T> {
    type Output = HermitianOperator<T>;
    fn neg(self) -> HermitianOperator<T> {
        HermitianOperator {
            n_spins: self.n_spins,
            matrix: -&self.matrix,
        }
    }
}

impl<T: Real> Neg for HermitianOperator<T> {
    type Output = HermitianOperator<T>;
    fn neg(self) -> HermitianOperator<T> {
        -&self
    }
}

impl<T: Real> Mul<T> for &HermitianOperator<T> {
    type Output = HermitianOperator<T>;
    fn mul(self, rhs: T) -> HermitianOperator<T> {
        self.scaled(rhs)
    }
}

impl<T: Real> Mul<T> for HermitianOperator<T> {
    type Output = HermitianOperator<T>;
    fn mul(self, rhs: T) -> HermitianOperator<T> {
        self.scaled(rhs)
    }
}

/// Action of a single spin-1/2 operator on a basis bit: (flips?, amplitude).
fn single_action<T: Real>(axis: Axis, bit: usize) -> (bool, C<T>) {
    let h = T::lit(0.5);
    match (axis, bit) {
        (Axis::X, _) => (true, c(h)),
        (Axis::Y, 0) => (true, ci(h)),
        (Axis::Y, _) => (true, ci(-h)),
        (Axis::Z, 0) => (false, c(h)),
        (Axis::Z, _) => (false, c(-h)),
    }
}

#[inline]
pub(crate) fn bit_of(n_spins: usize, site: usize) -> usize {
    n_spins - 1 - site
}

/// Accumulates `coeff · Π_k I_{axis_k, site_k}` into `m` column by column.
fn add_spin_product<T: Real>(m: &mut DMatrix<C<T>>, n_spins: usize, factors: &[(usize, Axis)], coeff: C<T>) {
    let dim = 1usize << n_spins;
    for col in 0..dim {
        let mut row = col;
        let mut amp = coeff;
        for &(site, axis) in factors {
            let shift = bit_of(n_spins, site);
            let (flip, a) = single_action::<T>(axis, (row >> shift) & 1);
            amp *= a;
            if flip {
                row ^= 1 << shift;
            }
        }
        m[(row, col)] += amp;
    }
}

/// Kronecker product `a ⊗ b`.
pub fn kron<T: Real>(a: &DMatrix<C<T>>, b: &DMatrix<C<T>>) -> DMatrix<C<T>> {
    a.kronecker(b)
}

/// `I_{axis}` of one site embedded by tensor products with identities.
pub fn single_spin_op<T: Real>(n_spins: usize, site: usize, axis: Axis) -> Result<HermitianOperator<T>> {
    check_spin_count(n_spins)?;
    if site >= n_spins {
        return Err(Error::InvalidArgument(format!(
            "site {site} out of range for {n_spins} spins"
        )));
    }
    let left = DMatrix::<C<T>>::identity(1 << site, 1 << site);
    let right_bits = n_spins - 1 - site;
    let right = DMatrix::<C<T>>::identity(1 << right_bits, 1 << right_bits);
    let matrix = kron(&kron(&left, &axis.spin_half()), &right);
    Ok(HermitianOperator { n_spins, matrix })
}

/// `Σ_k I_{axis, k}` over all sites.
pub fn total_spin<T: Real>(n_spins: usize, axis: Axis) -> HermitianOperator<T> {
    let mut op = HermitianOperator::zeros(n_spins);
    for site in 0..n_spins {
        op.add_product(&[(site, axis)], c(T::one()));
    }
    op
}

/// Adds `d·(2 I_αi I_αj − I_βi I_βj − I_γi I_γj)` (or only the `2 I_αi I_αj`
/// part when `secular` is set).
fn add_dipolar_pair<T: Real>(
    op: &mut HermitianOperator<T>,
    i: usize,
    j: usize,
    d: T,
    kind: HamiltonianKind,
    secular: bool,
) {
    let alpha = kind.distinguished();
    op.add_product(&[(i, alpha), (j, alpha)], c(T::lit(2.0) * d));
    if secular {
        return;
    }
    for axis in Axis::ALL.into_iter().filter(|&a| a != alpha) {
        op.add_product(&[(i, axis), (j, axis)], c(-d));
    }
}

fn dipolar_filtered<T: Real>(
    couplings: &CouplingMatrix<T>,
    kind: HamiltonianKind,
    secular_only_for_hetero: bool,
    mut include: impl FnMut(usize, usize) -> bool,
) -> Result<HermitianOperator<T>> {
    let n = couplings.n();
    check_spin_count(n)?;
    let mut op = HermitianOperator::zeros(n);
    for (i, j, d) in couplings.pairs() {
        if include(i, j) {
            let secular = secular_only_for_hetero && couplings.is_heteronuclear(i, j);
            add_dipolar_pair(&mut op, i, j, d, kind, secular);
        }
    }
    Ok(op)
}

/// `Σ_{j>i} D_ij (2 I_αi I_αj − I_βi I_βj − I_γi I_γj)` with `α` set by `kind`.
///
/// With `secular_only_for_hetero`, heteronuclear pairs keep only the
/// `2 D_ij I_αi I_αj` term (flip-flop terms dropped).
pub fn dipolar_hamiltonian<T: Real>(
    couplings: &CouplingMatrix<T>,
    kind: HamiltonianKind,
    secular_only_for_hetero: bool,
) -> Result<HermitianOperator<T>> {
    dipolar_filtered(couplings, kind, secular_only_for_hetero, |_, _| true)
}

/// Two disjoint site sets covering the whole system.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    a: Vec<usize>,
    b: Vec<usize>,
}

impl Partition {
    pub fn new(n_sites: usize, a: Vec<usize>, b: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; n_sites];
        for &s in a.iter().chain(&b) {
            if s >= n_sites {
                return Err(Error::InvalidPartition(format!(
                    "site {s} out of range for {n_sites} sites"
                )));
            }
            if seen[s] {
                return Err(Error::InvalidPartition(format!("site {s} appears twice")));
            }
            seen[s] = true;
        }
        if let Some(missing) = seen.iter().position(|&x| !x) {
            return Err(Error::InvalidPartition(format!(
                "site {missing} belongs to neither subsystem"
            )));
        }
        let (mut a, mut b) = (a, b);
        a.sort_unstable();
        b.sort_unstable();
        Ok(Self { a, b })
    }

    /// `A = {0..k}`, `B = {k..n}`.
    pub fn split_at(n_sites: usize, k: usize) -> Result<Self> {
        if k > n_sites {
            return Err(Error::InvalidPartition(format!(
                "split point {k} beyond {n_sites} sites"
            )));
        }
        Self::new(n_sites, (0..k).collect(), (k..n_sites).collect())
    }

    pub fn a(&self) -> &[usize] {
        &self.a
    }

    pub fn b(&self) -> &[usize] {
        &self.b
    }

    pub fn n_sites(&self) -> usize {
        self.a.len() + self.b.len()
    }

    pub fn in_a(&self, site: usize) -> bool {
        self.a.binary_search(&site).is_ok()
    }

    pub fn in_b(&self, site: usize) -> bool {
        self.b.binary_search(&site).is_ok()
    }
}

/// Dipolar Hamiltonian split as `H = H_A + H_B + H_AB`.
#[derive(Debug, Clone)]
pub struct PartitionedHamiltonian<T: Real> {
    pub a: HermitianOperator<T>,
    pub b: HermitianOperator<T>,
    pub ab: HermitianOperator<T>,
}

impl<T: Real> PartitionedHamiltonian<T> {
    pub fn total(&self) -> HermitianOperator<T> {
        &(&self.a + &self.b) + &self.ab
    }

    /// `H_A + H_B`, the Hamiltonian with the interaction switched off.
    pub fn decoupled(&self) -> HermitianOperator<T> {
        &self.a + &self.b
    }
}

pub fn partition_hamiltonian<T: Real>(
    couplings: &CouplingMatrix<T>,
    partition: &Partition,
    kind: HamiltonianKind,
) -> Result<PartitionedHamiltonian<T>> {
    if partition.n_sites() != couplings.n() {
        return Err(Error::InvalidPartition(format!(
            "partition covers {} sites, couplings have {}",
            partition.n_sites(),
            couplings.n()
        )));
    }
    Ok(PartitionedHamiltonian {
        a: dipolar_filtered(couplings, kind, false, |i, j| partition.in_a(i) && partition.in_a(j))?,
        b: dipolar_filtered(couplings, kind, false, |i, j| partition.in_b(i) && partition.in_b(j))?,
        ab: dipolar_filtered(couplings, kind, false, |i, j| partition.in_a(i) != partition.in_a(j))?,
    })
}

/// Nearest-neighbour couplings `J_i = λ·√(i(n−i))`, `i = 1..n−1`.
pub fn pst_couplings<T: Real>(n: usize, lambda: T) -> Result<Vec<T>> {
    if n < 2 {
        return Err(Error::InvalidArgument("transfer chain needs at least two sites".into()));
    }
    if !(lambda > T::zero()) {
        return Err(Error::InvalidArgument(
            "transfer coupling scale must be positive".into(),
        ));
    }
    Ok((1..n).map(|i| lambda * T::lit((i * (n - i)) as f64).sqrt()).collect())
}

/// `Σ_i J_i (I_{x,i} I_{x,i+1} + I_{y,i} I_{y,i+1})` for bonds where
/// `include(bond)` holds. Bond `i` joins sites `i` and `i + 1`.
pub fn xy_chain_hamiltonian<T: Real>(
    bonds: &[T],
    mut include: impl FnMut(usize) -> bool,
) -> Result<HermitianOperator<T>> {
    let n = bonds.len() + 1;
    check_spin_count(n)?;
    let mut op = HermitianOperator::zeros(n);
    for (bond, &j) in bonds.iter().enumerate() {
        if include(bond) {
            op.add_product(&[(bond, Axis::X), (bond + 1, Axis::X)], c(j));
            op.add_product(&[(bond, Axis::Y), (bond + 1, Axis::Y)], c(j));
        }
    }
    Ok(op)
}

/// XY chain engineered for perfect state transfer at `t₀ = π/λ`.
pub fn pst_chain_hamiltonian<T: Real>(n: usize, lambda: T) -> Result<HermitianOperator<T>> {
    xy_chain_hamiltonian(&pst_couplings(n, lambda)?, |_| true)
}

/// Index with the qubit order reversed (site k ↔ site n−1−k).
pub fn reverse_bits(index: usize, n_spins: usize) -> usize {
    (0..n_spins).fold(0, |acc, k| acc | (((index >> k) & 1) << (n_spins - 1 - k)))
}

/// Permutation matrix reversing the qubit order.
pub fn mirror_permutation<T: Real>(n_spins: usize) -> DMatrix<C<T>> {
    let dim = 1usize << n_spins;
    let mut p = DMatrix::zeros(dim, dim);
    for i in 0..dim {
        p[(reverse_bits(i, n_spins), i)] = Complex::new(T::one(), T::zero());
    }
    p
}

/// Number of spin-down (excited) sites in a basis index.
pub fn excitation_count(index: usize) -> u32 {
    index.count_ones()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spin_system::{build_chain, dipolar_couplings, FieldOrientation};
    use approx::assert_abs_diff_eq;

    #[test]
    fn split_product_matches_direct() {
        for dim in [8, 64] {
            let a = DMatrix::from_fn(dim, dim, |i, j| {
                C::new((i * 7 + j) as f64 % 1.3, (i as f64 - 2.0 * j as f64) * 0.01)
            });
            let b = DMatrix::from_fn(dim, dim, |i, j| C::new((i + 3 * j) as f64 % 0.7, (j as f64).sin()));
            assert!(max_abs(&(matmul(&a, &b) - &a * &b)) < 1e-11);
        }
    }

    fn sorted_eigenvalues(op: &HermitianOperator<f64>) -> Vec<f64> {
        let mut ev: Vec<f64> = op
            .matrix()
            .clone()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .copied()
            .collect();
        ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
        ev
    }

    #[test]
    fn single_spin_z() {
        let z = single_spin_op::<f64>(1, 0, Axis::Z).unwrap();
        assert_eq!(z.matrix()[(0, 0)], c(0.5));
        assert_eq!(z.matrix()[(1, 1)], c(-0.5));
        assert_eq!(z.matrix()[(0, 1)], c(0.0));
    }

    #[test]
    fn zz_product_spectrum() {
        let a = single_spin_op::<f64>(2, 0, Axis::Z).unwrap();
        let b = single_spin_op::<f64>(2, 1, Axis::Z).unwrap();
        let prod = HermitianOperator::from_matrix(2, a.matrix() * b.matrix()).unwrap();
        let diag: Vec<f64> = (0..4).map(|k| prod.matrix()[(k, k)].re).collect();
        assert_eq!(diag, vec![0.25, -0.25, -0.25, 0.25]);
    }

    #[test]
    fn spin_half_squares_to_quarter_identity() {
        for n in 1..=3 {
            for site in 0..n {
                for axis in Axis::ALL {
                    let op = single_spin_op::<f64>(n, site, axis).unwrap();
                    let sq = op.matrix() * op.matrix() * c(4.0);
                    let id = DMatrix::<C<f64>>::identity(1 << n, 1 << n);
                    assert!(max_abs(&(sq - id)) < 1e-15);
                }
            }
        }
    }

    #[test]
    fn kron_route_matches_bit_route() {
        for n in 1..=4 {
            for site in 0..n {
                for axis in Axis::ALL {
                    let kron_op = single_spin_op::<f64>(n, site, axis).unwrap();
                    let mut bit_op = HermitianOperator::zeros(n);
                    bit_op.add_product(&[(site, axis)], c(1.0));
                    assert_eq!(kron_op.max_abs_diff(&bit_op), 0.0);
                }
            }
        }
    }

    #[test]
    fn single_spin_out_of_range() {
        assert!(matches!(
            single_spin_op::<f64>(2, 2, Axis::X),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn one_spin_hamiltonian_is_zero() {
        let couplings = CouplingMatrix::<f64>::from_values(DMatrix::zeros(1, 1)).unwrap();
        let h = dipolar_hamiltonian(&couplings, HamiltonianKind::Dz, false).unwrap();
        assert_eq!(h.max_abs(), 0.0);
    }

    #[test]
    fn two_spin_spectrum() {
        let d = 1.7;
        let couplings = CouplingMatrix::from_pairs(2, &[(0, 1, d)]).unwrap();
        for kind in [HamiltonianKind::Dz, HamiltonianKind::Dy, HamiltonianKind::Dx] {
            let h = dipolar_hamiltonian(&couplings, kind, false).unwrap();
            let ev = sorted_eigenvalues(&h);
            for (x, y) in ev.iter().zip([-d, 0.0, d / 2.0, d / 2.0]) {
                assert_abs_diff_eq!(*x, y, epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn three_kinds_sum_to_zero() {
        let chain = build_chain::<f64>(4, 1.0).unwrap();
        let couplings = dipolar_couplings(&chain, &FieldOrientation::from_angles(0.4, 1.1), 1.0).unwrap();
        let sum = [HamiltonianKind::Dx, HamiltonianKind::Dy, HamiltonianKind::Dz]
            .into_iter()
            .map(|k| dipolar_hamiltonian(&couplings, k, false).unwrap())
            .reduce(|a, b| a + b)
            .unwrap();
        assert!(sum.max_abs() < 1e-12);
    }

    #[test]
    fn secular_heteronuclear_keeps_only_zz() {
        let couplings = CouplingMatrix::new(
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]),
            1.0,
            vec![1.0, 2.0],
        )
        .unwrap();
        let full = dipolar_hamiltonian(&couplings, HamiltonianKind::Dz, false).unwrap();
        let secular = dipolar_hamiltonian(&couplings, HamiltonianKind::Dz, true).unwrap();
        // flip-flop element between |↑↓⟩ and |↓↑⟩
        assert!(full.matrix()[(1, 2)].norm() > 0.1);
        assert_eq!(secular.matrix()[(1, 2)].norm(), 0.0);
        assert_abs_diff_eq!(secular.matrix()[(0, 0)].re, 0.5, epsilon = 1e-15);
    }

    #[test]
    fn hamiltonian_is_traceless_and_conserves_magnetization() {
        let chain = build_chain::<f64>(4, 1.0).unwrap();
        let couplings = dipolar_couplings(&chain, &FieldOrientation::along_z(), 1.0).unwrap();
        let h = dipolar_hamiltonian(&couplings, HamiltonianKind::Dz, false).unwrap();
        assert!(h.trace().norm() < 1e-14);
        let iz = total_spin::<f64>(4, Axis::Z);
        assert!(max_abs(&h.commutator(&iz)) < 1e-14);
    }

    #[test]
    fn partition_examples() {
        let chain = build_chain::<f64>(3, 1.0).unwrap();
        let couplings = dipolar_couplings(&chain, &FieldOrientation::along_z(), 1.0).unwrap();
        let all = Partition::new(3, vec![0, 1, 2], vec![]).unwrap();
        let parts = partition_hamiltonian(&couplings, &all, HamiltonianKind::Dz).unwrap();
        assert_eq!(parts.b.max_abs(), 0.0);
        assert_eq!(parts.ab.max_abs(), 0.0);

        let split = Partition::new(3, vec![0], vec![1, 2]).unwrap();
        let parts = partition_hamiltonian(&couplings, &split, HamiltonianKind::Dz).unwrap();
        let only = |pairs: &[(usize, usize)]| {
            let c = couplings.retain_pairs(|i, j| pairs.contains(&(i, j)));
            dipolar_hamiltonian(&c, HamiltonianKind::Dz, false).unwrap()
        };
        assert!(parts.ab.max_abs_diff(&only(&[(0, 1), (0, 2)])) < 1e-15);
        assert!(parts.b.max_abs_diff(&only(&[(1, 2)])) < 1e-15);
        assert_eq!(parts.a.max_abs(), 0.0);
    }

    #[test]
    fn partition_validation() {
        assert!(matches!(
            Partition::new(3, vec![0, 1], vec![1, 2]),
            Err(Error::InvalidPartition(_))
        ));
        assert!(matches!(
            Partition::new(3, vec![0], vec![1]),
            Err(Error::InvalidPartition(_))
        ));
        assert!(matches!(
            Partition::new(3, vec![0, 1], vec![3]),
            Err(Error::InvalidPartition(_))
        ));
        let couplings = CouplingMatrix::<f64>::from_values(DMatrix::zeros(4, 4)).unwrap();
        let p = Partition::split_at(3, 1).unwrap();
        assert!(partition_hamiltonian(&couplings, &p, HamiltonianKind::Dz).is_err());
    }

    #[test]
    fn pst_profile() {
        assert_eq!(pst_couplings(2, 0.7).unwrap(), vec![0.7]);
        let j3 = pst_couplings(3, 1.0).unwrap();
        assert_abs_diff_eq!(j3[0], 2f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(j3[1], 2f64.sqrt(), epsilon = 1e-15);
        let j6 = pst_couplings(6, 1.3).unwrap();
        for i in 0..j6.len() {
            assert_eq!(j6[i], j6[j6.len() - 1 - i]);
        }
        assert!(pst_chain_hamiltonian::<f64>(1, 1.0).is_err());
        assert!(pst_couplings::<f64>(4, 0.0).is_err());
    }

    #[test]
    fn mirror_reverses_sites() {
        assert_eq!(reverse_bits(0b001, 3), 0b100);
        assert_eq!(reverse_bits(0b110, 3), 0b011);
        let p = mirror_permutation::<f64>(3);
        let z0 = single_spin_op::<f64>(3, 0, Axis::Z).unwrap();
        let z2 = single_spin_op::<f64>(3, 2, Axis::Z).unwrap();
        let mapped = &p * z0.matrix() * p.adjoint();
        assert!(max_abs(&(mapped - z2.matrix())) < 1e-15);
    }

    #[test]
    fn too_many_spins_rejected() {
        assert!(matches!(
            single_spin_op::<f64>(MAX_SPINS + 1, 0, Axis::Z),
            Err(Error::TooManySpins(_))
        ));
    }
}
