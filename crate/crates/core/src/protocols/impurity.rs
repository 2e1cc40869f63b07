// SPDX-License-Identifier: Apache-2.0

//! Breaking the A–B interaction by driving an impurity spin between them.
//!
//! Pairs of spins with different gyromagnetic ratios keep only their secular
//! `2D·I_z I_z` coupling. A transverse drive `Ω·I_x` on the impurity makes its
//! `I_z` precess, so for `Ω ≫ ω_loc` the impurity's couplings average out.

use rayon::prelude::*;
use serde::Serialize;

use super::Hygiene;
use crate::avg_hamiltonian::local_field;
use crate::error::{Error, Result};
use crate::evolution::{expm_hermitian, fidelity, DensityMatrix};
use crate::operators::{dipolar_hamiltonian, single_spin_op, Axis, HamiltonianKind, HermitianOperator};
use crate::scalar::Real;
use crate::spin_system::CouplingMatrix;

/// Relative ripple allowed between successive points of a drive sweep.
pub const RIPPLE_TOLERANCE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ImpuritySwitch<T: Real> {
    /// Drive amplitude `Ω` (angular frequency).
    pub drive_amplitude: T,
    /// Gyromagnetic ratio of the impurity.
    pub gamma3: T,
    /// Observation window.
    pub window: T,
}

impl<T: Real> ImpuritySwitch<T> {
    pub fn new(drive_amplitude: T, gamma3: T, window: T) -> Result<Self> {
        if !(drive_amplitude >= T::zero()) || !drive_amplitude.is_finite() {
            return Err(Error::InvalidProtocol("drive amplitude must be nonnegative".into()));
        }
        if !(gamma3 > T::zero()) {
            return Err(Error::InvalidProtocol("impurity gamma must be positive".into()));
        }
        if !(window > T::zero()) || !window.is_finite() {
            return Err(Error::InvalidProtocol("window must be positive".into()));
        }
        Ok(Self {
            drive_amplitude,
            gamma3,
            window,
        })
    }

    pub fn with_drive(&self, drive_amplitude: T) -> Result<Self> {
        Self::new(drive_amplitude, self.gamma3, self.window)
    }
}

/// Sites of A, the impurity and B.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ImpurityLayout {
    a: Vec<usize>,
    impurity: usize,
    b: Vec<usize>,
}

impl ImpurityLayout {
    pub fn new(n_sites: usize, a: Vec<usize>, impurity: Option<usize>, b: Vec<usize>) -> Result<Self> {
        let impurity = impurity.ok_or_else(|| Error::InvalidProtocol("no impurity designated".into()))?;
        if a.is_empty() || b.is_empty() {
            return Err(Error::InvalidPartition("A and B must both be nonempty".into()));
        }
        let mut seen = vec![false; n_sites];
        for &s in a.iter().chain(&b).chain(std::iter::once(&impurity)) {
            if s >= n_sites {
                return Err(Error::InvalidPartition(format!(
                    "site {s} out of range for {n_sites} sites"
                )));
            }
            if seen[s] {
                return Err(Error::InvalidPartition(format!("site {s} assigned twice")));
            }
            seen[s] = true;
        }
        let (mut a, mut b) = (a, b);
        a.sort_unstable();
        b.sort_unstable();
        Ok(Self { a, impurity, b })
    }

    /// `A = {0}`, impurity `1`, `B = {2}`.
    pub fn three_site() -> Self {
        Self {
            a: vec![0],
            impurity: 1,
            b: vec![2],
        }
    }

    pub fn a(&self) -> &[usize] {
        &self.a
    }

    pub fn impurity(&self) -> usize {
        self.impurity
    }

    pub fn b(&self) -> &[usize] {
        &self.b
    }
}

fn check_system<T: Real>(
    couplings: &CouplingMatrix<T>,
    layout: &ImpurityLayout,
    switch: &ImpuritySwitch<T>,
) -> Result<()> {
    let n = couplings.n();
    let imp = layout.impurity;
    if imp >= n || layout.a.iter().chain(&layout.b).any(|&s| s >= n) {
        return Err(Error::InvalidPartition(
            "layout does not fit the coupling matrix".into(),
        ));
    }
    let gammas = couplings.gammas();
    let g3 = gammas[imp];
    if (g3 - switch.gamma3).abs() > T::lit(1e-12) * g3 {
        return Err(Error::InvalidProtocol(format!(
            "switch gamma {} does not match the impurity site gamma {}",
            switch.gamma3.as_f64(),
            g3.as_f64()
        )));
    }
    if gammas.iter().enumerate().any(|(s, &g)| s != imp && !(g < g3)) {
        return Err(Error::InvalidProtocol(
            "the impurity gamma must exceed every other gamma".into(),
        ));
    }
    Ok(())
}

/// Secular dipolar Hamiltonian plus `Ω·I_x` on the impurity.
pub fn impurity_hamiltonian<T: Real>(
    couplings: &CouplingMatrix<T>,
    layout: &ImpurityLayout,
    drive_amplitude: T,
) -> Result<HermitianOperator<T>> {
    let h = dipolar_hamiltonian(couplings, HamiltonianKind::Dz, true)?;
    let drive = single_spin_op(couplings.n(), layout.impurity, Axis::X)?;
    Ok(&h + &drive.scaled(drive_amplitude))
}

fn leakage_observed<T: Real>(
    couplings: &CouplingMatrix<T>,
    layout: &ImpurityLayout,
    switch: &ImpuritySwitch<T>,
    rho0: &DensityMatrix<T>,
    hygiene: &mut Hygiene<T>,
) -> Result<T> {
    let h = impurity_hamiltonian(couplings, layout, switch.drive_amplitude)?;
    let u = expm_hermitian(&h, switch.window);
    hygiene.observe_unitary(&u);
    let rho = rho0.evolve(&u)?;
    hygiene.observe_state(&rho);
    let before = rho0.partial_trace(&layout.b)?;
    let after = rho.partial_trace(&layout.b)?;
    Ok(T::one() - fidelity(&after, &before)?)
}

/// `1 − F(ρ^B(window), ρ^B(0))` under the driven Hamiltonian.
pub fn impurity_leakage<T: Real>(
    couplings: &CouplingMatrix<T>,
    layout: &ImpurityLayout,
    switch: &ImpuritySwitch<T>,
    rho0: &DensityMatrix<T>,
) -> Result<T> {
    check_system(couplings, layout, switch)?;
    if rho0.n_spins() != couplings.n() {
        return Err(Error::DimensionMismatch {
            expected: couplings.n(),
            found: rho0.n_spins(),
        });
    }
    leakage_observed(couplings, layout, switch, rho0, &mut Hygiene::default())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImpurityReport<T: Real> {
    pub omegas: Vec<T>,
    pub leakages: Vec<T>,
    /// Leakage of the undriven system over the same window.
    pub baseline: T,
    pub omega_loc: T,
    /// Each leakage exceeds its predecessor by at most
    /// [`RIPPLE_TOLERANCE`] times the baseline.
    pub non_increasing_within_ripple: bool,
    pub hygiene: Hygiene<T>,
}

impl<T: Real> ImpurityReport<T> {
    /// Leakages relative to the baseline.
    pub fn suppression(&self) -> Vec<T> {
        self.leakages.iter().map(|&l| l / self.baseline).collect()
    }
}

/// Whether `values` never rises by more than `allowance` from one entry to the next.
pub fn non_increasing_within<T: Real>(values: &[T], allowance: T) -> bool {
    values.windows(2).all(|w| w[1] <= w[0] + allowance)
}

/// Leakage for each drive amplitude in `omegas` (in the given order) and for
/// the undriven baseline. The switch supplies `gamma3` and the window.
pub fn run_impurity_switch<T: Real>(
    couplings: &CouplingMatrix<T>,
    layout: &ImpurityLayout,
    switch: &ImpuritySwitch<T>,
    omegas: &[T],
    rho0: &DensityMatrix<T>,
) -> Result<ImpurityReport<T>> {
    check_system(couplings, layout, switch)?;
    if rho0.n_spins() != couplings.n() {
        return Err(Error::DimensionMismatch {
            expected: couplings.n(),
            found: rho0.n_spins(),
        });
    }
    let mut hygiene = Hygiene::default();
    hygiene.observe_state(rho0);
    let baseline = leakage_observed(couplings, layout, &switch.with_drive(T::zero())?, rho0, &mut hygiene)?;
    let results = omegas
        .par_iter()
        .map(|&omega| {
            let mut h = Hygiene::default();
            let l = leakage_observed(couplings, layout, &switch.with_drive(omega)?, rho0, &mut h)?;
            Ok((l, h))
        })
        .collect::<Result<Vec<_>>>()?;
    let leakages: Vec<T> = results.iter().map(|r| r.0).collect();
    for (_, h) in &results {
        hygiene.merge(h);
    }
    Ok(ImpurityReport {
        non_increasing_within_ripple: non_increasing_within(&leakages, T::lit(RIPPLE_TOLERANCE) * baseline),
        omegas: omegas.to_vec(),
        leakages,
        baseline,
        omega_loc: local_field(couplings).omega_loc,
        hygiene,
    })
}
