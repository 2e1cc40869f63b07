// SPDX-License-Identifier: Apache-2.0

use nalgebra::{ComplexField, DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use super::Unitary;
use crate::error::{Error, Result};
use crate::operators::{check_spin_count, matmul, max_abs, reverse_bits};
use crate::scalar::{c, Real, C};

/// Density matrix on `n_spins` spin-1/2 sites.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix<T: Real> {
    n_spins: usize,
    matrix: DMatrix<C<T>>,
}

impl<T: Real> DensityMatrix<T> {
    /// Validates Hermiticity, unit trace and positivity (all within 1e-10).
    pub fn new(n_spins: usize, matrix: DMatrix<C<T>>) -> Result<Self> {
        check_spin_count(n_spins)?;
        let dim = 1usize << n_spins;
        if matrix.nrows() != dim || matrix.ncols() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: matrix.nrows(),
            });
        }
        let tol = T::lit(1e-10);
        let herm = max_abs(&(&matrix - matrix.adjoint()));
        if herm > tol {
            return Err(Error::InvalidState(format!(
                "not Hermitian (deviation {:e})",
                herm.as_f64()
            )));
        }
        let rho = Self::hermitian_part(n_spins, matrix);
        let trace_err = rho.trace_error();
        if trace_err > tol {
            return Err(Error::InvalidState(format!(
                "trace differs from 1 by {:e}",
                trace_err.as_f64()
            )));
        }
        let min_eig = rho.min_eigenvalue();
        if min_eig < -tol {
            return Err(Error::InvalidState(format!(
                "negative eigenvalue {:e}",
                min_eig.as_f64()
            )));
        }
        Ok(rho)
    }

    fn hermitian_part(n_spins: usize, matrix: DMatrix<C<T>>) -> Self {
        let matrix = (&matrix + matrix.adjoint()) * c(T::lit(0.5));
        Self { n_spins, matrix }
    }

    /// Projector onto the normalized state vector `psi`.
    pub fn pure(n_spins: usize, psi: &DVector<C<T>>) -> Result<Self> {
        check_spin_count(n_spins)?;
        let dim = 1usize << n_spins;
        if psi.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: psi.len(),
            });
        }
        let norm = psi.norm();
        if !(norm > T::zero()) {
            return Err(Error::InvalidState("zero state vector".into()));
        }
        let psi = psi / c(norm);
        Ok(Self::hermitian_part(n_spins, &psi * psi.adjoint()))
    }

    /// Computational basis state `|index⟩`.
    pub fn basis(n_spins: usize, index: usize) -> Result<Self> {
        let dim = 1usize << n_spins;
        if index >= dim {
            return Err(Error::InvalidArgument(format!("basis index {index} out of range")));
        }
        let mut psi = DVector::zeros(dim);
        psi[index] = c(T::one());
        Self::pure(n_spins, &psi)
    }

    /// All spins up, `|0…0⟩`.
    pub fn ground(n_spins: usize) -> Self {
        Self::basis(n_spins, 0).expect("ground state index is always valid")
    }

    pub fn maximally_mixed(n_spins: usize) -> Self {
        let dim = 1usize << n_spins;
        Self {
            n_spins,
            matrix: DMatrix::identity(dim, dim) * c(T::one() / T::lit(dim as f64)),
        }
    }

    /// Random full-rank mixed state `G G† / Tr(G G†)` with Gaussian `G`.
    pub fn random_mixed<R: Rng + ?Sized>(n_spins: usize, rng: &mut R) -> Self {
        let dim = 1usize << n_spins;
        let g = DMatrix::from_fn(dim, dim, |_, _| gaussian_complex::<T, R>(rng));
        let m = &g * g.adjoint();
        let tr = m.trace().re;
        Self::hermitian_part(n_spins, m * c(T::one() / tr))
    }

    /// Random pure state with Gaussian amplitudes.
    pub fn random_pure<R: Rng + ?Sized>(n_spins: usize, rng: &mut R) -> Self {
        let dim = 1usize << n_spins;
        let psi = DVector::from_fn(dim, |_, _| gaussian_complex::<T, R>(rng));
        Self::pure(n_spins, &psi).expect("gaussian vector is nonzero")
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

    pub fn trace_error(&self) -> T {
        (self.matrix.trace() - c(T::one())).modulus()
    }

    /// `Tr ρ²`, summed elementwise as `Σ |ρ_ij|²`.
    pub fn purity(&self) -> T {
        self.matrix.iter().fold(T::zero(), |acc, z| acc + z.modulus_squared())
    }

    pub fn eigenvalues(&self) -> DVector<T> {
        self.matrix.clone().symmetric_eigen().eigenvalues
    }

    pub fn min_eigenvalue(&self) -> T {
        self.eigenvalues()
            .iter()
            .copied()
            .fold(T::max_value().unwrap_or(T::one()), |a, b| a.min(b))
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        max_abs(&(&self.matrix - &other.matrix))
    }

    /// `U ρ U†`.
    pub fn evolve(&self, u: &Unitary<T>) -> Result<Self> {
        if u.n_spins() != self.n_spins {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: u.dim(),
            });
        }
        let m = matmul(&matmul(u.matrix(), &self.matrix), &u.matrix().adjoint());
        Ok(Self::hermitian_part(self.n_spins, m))
    }

    /// `self ⊗ other`; `other`'s sites follow this state's sites.
    pub fn tensor(&self, other: &Self) -> Result<Self> {
        check_spin_count(self.n_spins + other.n_spins)?;
        Ok(Self {
            n_spins: self.n_spins + other.n_spins,
            matrix: self.matrix.kronecker(&other.matrix),
        })
    }

    /// Reduced state on `keep` (ascending site order in the output).
    pub fn partial_trace(&self, keep: &[usize]) -> Result<Self> {
        partial_trace(self, keep)
    }

    /// Same state with the site order reversed.
    pub fn reversed_sites(&self) -> Self {
        let n = self.n_spins;
        let dim = self.dim();
        let m = DMatrix::from_fn(dim, dim, |i, j| self.matrix[(reverse_bits(i, n), reverse_bits(j, n))]);
        Self { n_spins: n, matrix: m }
    }

    /// Projectively resets `sites` to spin up: `|0⟩⟨0|_sites ⊗ Tr_sites ρ`,
    /// with every other site keeping its position.
    pub fn reset_to_ground(&self, sites: &[usize]) -> Result<Self> {
        let n = self.n_spins;
        let mask = site_mask(n, sites)?;
        let keep: Vec<usize> = (0..n).filter(|s| !sites.contains(s)).collect();
        let reduced = self.partial_trace(&keep)?;
        let kept_bits: Vec<usize> = keep.iter().map(|&s| n - 1 - s).collect();
        let compress = |full: usize| -> usize { kept_bits.iter().fold(0, |acc, &b| (acc << 1) | ((full >> b) & 1)) };
        let dim = self.dim();
        let m = DMatrix::from_fn(dim, dim, |i, j| {
            if i & mask != 0 || j & mask != 0 {
                c(T::zero())
            } else {
                reduced.matrix[(compress(i), compress(j))]
            }
        });
        Ok(Self { n_spins: n, matrix: m })
    }

    /// Probability weight of basis states with at least `k` spins down.
    pub fn weight_at_least_excitations(&self, k: u32) -> T {
        (0..self.dim())
            .filter(|&i| i.count_ones() >= k)
            .fold(T::zero(), |acc, i| acc + self.matrix[(i, i)].re)
    }
}

fn gaussian_complex<T: Real, R: Rng + ?Sized>(rng: &mut R) -> C<T> {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C::new(T::lit(re), T::lit(im))
}

fn site_mask(n_spins: usize, sites: &[usize]) -> Result<usize> {
    sites.iter().try_fold(0usize, |mask, &s| {
        if s >= n_spins {
            Err(Error::InvalidArgument(format!(
                "site {s} out of range for {n_spins} spins"
            )))
        } else {
            Ok(mask | (1 << (n_spins - 1 - s)))
        }
    })
}

/// `U ρ U†`, preserving trace and spectrum.
pub fn evolve_density<T: Real>(rho: &DensityMatrix<T>, u: &Unitary<T>) -> Result<DensityMatrix<T>> {
    rho.evolve(u)
}

/// Traces out every site not in `keep`. Site 0 is the most significant qubit;
/// the kept sites appear in ascending order in the reduced state.
pub fn partial_trace<T: Real>(rho: &DensityMatrix<T>, keep: &[usize]) -> Result<DensityMatrix<T>> {
    let n = rho.n_spins;
    let keep_mask = site_mask(n, keep)?;
    let mut kept: Vec<usize> = keep.to_vec();
    kept.sort_unstable();
    kept.dedup();
    if kept.len() != keep.len() {
        return Err(Error::InvalidArgument("duplicate site in partial trace".into()));
    }
    let traced: Vec<usize> = (0..n).filter(|s| !kept.contains(s)).collect();
    let scatter = |sites: &[usize], value: usize| -> usize {
        let k = sites.len();
        sites.iter().enumerate().fold(0, |acc, (pos, &s)| {
            acc | (((value >> (k - 1 - pos)) & 1) << (n - 1 - s))
        })
    };
    let kdim = 1usize << kept.len();
    let tdim = 1usize << traced.len();
    let kept_index: Vec<usize> = (0..kdim).map(|v| scatter(&kept, v)).collect();
    let traced_index: Vec<usize> = (0..tdim).map(|v| scatter(&traced, v)).collect();
    debug_assert!(kept_index.iter().all(|&i| i & !keep_mask == 0));
    let mut out = DMatrix::zeros(kdim, kdim);
    for &t in &traced_index {
        for (r, &ri) in kept_index.iter().enumerate() {
            for (col, &ci_) in kept_index.iter().enumerate() {
                out[(r, col)] += rho.matrix[(ri | t, ci_ | t)];
            }
        }
    }
    Ok(DensityMatrix {
        n_spins: kept.len(),
        matrix: out,
    })
}

/// Uhlmann fidelity `(Tr √(√ρ σ √ρ))²`, clamped to `[0, 1]`.
///
/// With `ρ = V Λ V†` and `σ = W M W†` this is `‖√Λ V†W √M‖_tr²`, the squared
/// sum of singular values; no square root of a near-zero eigenvalue of
/// `√ρ σ √ρ` is taken, so nearly equal states of low rank stay accurate.
/// When either argument is pure to round-off this reduces to `Tr(ρσ)`.
pub fn fidelity<T: Real>(rho: &DensityMatrix<T>, sigma: &DensityMatrix<T>) -> Result<T> {
    if rho.n_spins != sigma.n_spins {
        return Err(Error::DimensionMismatch {
            expected: rho.dim(),
            found: sigma.dim(),
        });
    }
    let pure_tol = T::lit(1e-12);
    let clamp = |f: T| f.max(T::zero()).min(T::one());
    if (T::one() - rho.purity()).abs() < pure_tol || (T::one() - sigma.purity()).abs() < pure_tol {
        let overlap = rho
            .matrix
            .iter()
            .zip(sigma.matrix.iter())
            .fold(T::zero(), |acc, (a, b)| acc + (a.conj() * b).re);
        return Ok(clamp(overlap));
    }
    let ea = rho.matrix.clone().symmetric_eigen();
    let eb = sigma.matrix.clone().symmetric_eigen();
    let mut m = matmul(&ea.eigenvectors.adjoint(), &eb.eigenvectors);
    for (i, &l) in ea.eigenvalues.iter().enumerate() {
        m.row_mut(i).scale_mut(l.max(T::zero()).sqrt());
    }
    for (j, &l) in eb.eigenvalues.iter().enumerate() {
        m.column_mut(j).scale_mut(l.max(T::zero()).sqrt());
    }
    let root_trace = m.singular_values().iter().fold(T::zero(), |acc, &s| acc + s);
    Ok(clamp(root_trace * root_trace))
}
