// SPDX-License-Identifier: Apache-2.0

//! Frozen-subsystem storage and the transfer-and-store delay line.

use nalgebra::DMatrix;
use serde::Serialize;

use super::{Hygiene, ReversalScheme, StorageCycle, StorageReport};
use crate::error::{Error, Result};
use crate::evolution::{distance_to_identity, expm_hermitian, fidelity, DensityMatrix, Unitary};
use crate::operators::{
    excitation_count, partition_hamiltonian, pst_couplings, xy_chain_hamiltonian, HamiltonianKind, Partition,
};
use crate::scalar::{Real, C};
use crate::spin_system::{build_chain, dipolar_couplings, CouplingMatrix, FieldOrientation, Geometry};

fn evolve_observed<T: Real>(
    rho: &DensityMatrix<T>,
    u: &Unitary<T>,
    hygiene: &mut Hygiene<T>,
) -> Result<DensityMatrix<T>> {
    hygiene.observe_unitary(u);
    let out = rho.evolve(u)?;
    hygiene.observe_state(&out);
    Ok(out)
}

/// Evolves `rho0` under the full dipolar Hamiltonian for `t0`, switches the
/// A–B interaction off and stores B for `cycles` cycles of `scheme` while A
/// keeps evolving under `H_A`, then reconnects and evolves for another `t0`.
///
/// Per-cycle fidelities compare `ρ^B(t0 + kT)` with `ρ^B(t0)`;
/// `complement_fidelity` compares `ρ^A(t0 + nT)` with `ρ^A(t0)`;
/// `resumed_fidelity` compares the resumed evolution with the same evolution
/// started from an ideally frozen B. The planar scheme needs `geometry`.
pub fn run_frozen_subsystem<T: Real>(
    couplings: &CouplingMatrix<T>,
    partition: &Partition,
    rho0: &DensityMatrix<T>,
    t0: T,
    scheme: &ReversalScheme<T>,
    cycles: usize,
    geometry: Option<&Geometry<T>>,
) -> Result<StorageReport<T>> {
    let n = couplings.n();
    if partition.n_sites() != n || rho0.n_spins() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: if partition.n_sites() != n {
                partition.n_sites()
            } else {
                rho0.n_spins()
            },
        });
    }
    if !(t0 >= T::zero()) || !t0.is_finite() {
        return Err(Error::InvalidArgument("t0 must be nonnegative".into()));
    }
    let parts = partition_hamiltonian(couplings, partition, HamiltonianKind::Dz)?;
    let full = parts.total();
    let period = scheme.period();
    let mut hygiene = Hygiene::default();
    hygiene.observe_state(rho0);

    let u_t0 = expm_hermitian(&full, t0);
    let rho_t0 = evolve_observed(rho0, &u_t0, &mut hygiene)?;
    let b_t0 = rho_t0.partial_trace(partition.b())?;
    let a_t0 = rho_t0.partial_trace(partition.a())?;

    let storage = StorageCycle::for_scheme(scheme.kind, scheme.pulse_model, couplings, geometry, |i, j| {
        partition.in_b(i) && partition.in_b(j)
    })?;
    let v_b = storage.unitary(scheme.tau)?;
    let u_a = expm_hermitian(&parts.a, period);
    // H_A and the B-only cycle act on disjoint sites and commute.
    let step = u_a.then(&v_b);
    hygiene.observe_unitary(&step);

    let mut rho = rho_t0.clone();
    let mut v_power = Unitary::identity(n);
    let mut fidelities = Vec::with_capacity(cycles);
    let mut distances = Vec::with_capacity(cycles);
    for _ in 0..cycles {
        rho = evolve_observed(&rho, &step, &mut hygiene)?;
        v_power = v_power.then(&v_b);
        fidelities.push(fidelity(&rho.partial_trace(partition.b())?, &b_t0)?);
        distances.push(distance_to_identity(&v_power));
    }
    let complement = fidelity(&rho.partial_trace(partition.a())?, &a_t0)?;

    let frozen_reference = evolve_observed(&rho_t0, &u_a.pow(cycles), &mut hygiene)?;
    let resumed = evolve_observed(&rho, &u_t0, &mut hygiene)?;
    let reference = evolve_observed(&frozen_reference, &u_t0, &mut hygiene)?;

    Ok(StorageReport {
        exact_flag: StorageReport::exact_from(&distances),
        per_cycle_fidelity: fidelities,
        per_cycle_identity_distance: distances,
        cycle_period: period,
        total_period: period * T::lit(cycles as f64),
        initial_fidelity: fidelity(&b_t0, &b_t0)?,
        complement_fidelity: Some(complement),
        resumed_fidelity: Some(fidelity(&resumed, &reference)?),
        hygiene,
    })
}

/// Sender S, transmission line TL and receiver B laid out along one
/// perfect-transfer chain of `sender_size + line_size + receiver_size` sites.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TransferPlan<T: Real> {
    pub sender_size: usize,
    pub line_size: usize,
    pub receiver_size: usize,
    /// Coupling scale `λ` of the chain `J_i = λ√(i(N−i))`.
    pub lambda: T,
    /// Transfer time `π/λ`.
    pub t0: T,
    pub storage_cycles: usize,
}

impl<T: Real> TransferPlan<T> {
    pub fn new(
        sender_size: usize,
        line_size: usize,
        receiver_size: usize,
        lambda: T,
        storage_cycles: usize,
    ) -> Result<Self> {
        if sender_size == 0 {
            return Err(Error::InvalidProtocol("sender must hold at least one site".into()));
        }
        if sender_size != receiver_size {
            return Err(Error::InvalidProtocol(format!(
                "sender has {sender_size} sites but receiver has {receiver_size}"
            )));
        }
        if !(lambda > T::zero()) || !lambda.is_finite() {
            return Err(Error::InvalidProtocol("lambda must be positive".into()));
        }
        Ok(Self {
            sender_size,
            line_size,
            receiver_size,
            lambda,
            t0: T::pi() / lambda,
            storage_cycles,
        })
    }

    pub fn n_sites(&self) -> usize {
        self.sender_size + self.line_size + self.receiver_size
    }

    pub fn sender(&self) -> Vec<usize> {
        (0..self.sender_size).collect()
    }

    pub fn sender_and_line(&self) -> Vec<usize> {
        (0..self.sender_size + self.line_size).collect()
    }

    pub fn receiver(&self) -> Vec<usize> {
        (self.sender_size + self.line_size..self.n_sites()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransferReport<T: Real> {
    /// Fidelity of `ρ^B(t0)` with the mirror-reordered sender state.
    pub transfer_fidelity: T,
    pub storage: StorageReport<T>,
    /// Fidelity of `ρ^S(2t0 + nT)` with the initial sender state.
    pub round_trip_fidelity: T,
    /// The sender state has weight outside the zero- and one-excitation
    /// sectors, where the chain does not transfer perfectly.
    pub multi_excitation_input: bool,
}

/// `diag(φ^{−k})`, `k` the excitation number: undoes the phase `φ` picked up
/// per excitation during one transfer.
fn excitation_phase_correction<T: Real>(n_spins: usize, phase_per_excitation: C<T>) -> Result<Unitary<T>> {
    let dim = 1usize << n_spins;
    let inverse = phase_per_excitation.conj();
    let mut m = DMatrix::zeros(dim, dim);
    for i in 0..dim {
        m[(i, i)] = inverse.powu(excitation_count(i));
    }
    Unitary::from_matrix(n_spins, m)
}

/// Storage cycle of the receiver, embedded in the full chain: the receiver's
/// internal coupling is taken as that of a uniform dipolar chain with the
/// field perpendicular to it.
pub fn receiver_storage_cycle<T: Real>(plan: &TransferPlan<T>, scheme: &ReversalScheme<T>) -> Result<StorageCycle<T>> {
    let n = plan.n_sites();
    let chain = build_chain(n, T::one())?;
    let couplings = dipolar_couplings(&chain, &FieldOrientation::along_y(), T::one())?;
    let first = n - plan.receiver_size;
    StorageCycle::for_scheme(scheme.kind, scheme.pulse_model, &couplings, Some(&chain), |i, j| {
        i >= first && j >= first
    })
}

/// Sends `rho_s` from S to B along the chain, stores it in B for
/// `plan.storage_cycles` cycles while S–TL idles, resets S–TL to ground,
/// reconnects and sends it back.
/// The TL–B bond is switched off during storage; see [`receiver_storage_cycle`].
pub fn run_transfer_and_store<T: Real>(
    plan: &TransferPlan<T>,
    rho_s: &DensityMatrix<T>,
    scheme: &ReversalScheme<T>,
) -> Result<TransferReport<T>> {
    if rho_s.n_spins() != plan.sender_size {
        return Err(Error::DimensionMismatch {
            expected: plan.sender_size,
            found: rho_s.n_spins(),
        });
    }
    let n = plan.n_sites();
    let bonds = pst_couplings(n, plan.lambda)?;
    let h = xy_chain_hamiltonian(&bonds, |_| true)?;
    let cut = plan.sender_size + plan.line_size - 1;
    let h_sender_line = xy_chain_hamiltonian(&bonds, |b| b < cut)?;
    let receiver = plan.receiver();
    let sender = plan.sender();

    // Each excitation picks up (−i)^(N−1) during one transfer.
    let phase = C::new(T::zero(), -T::one()).powu((n - 1) as u32);
    let one_way = excitation_phase_correction(plan.sender_size, phase)?;
    let round_trip = excitation_phase_correction(plan.sender_size, phase * phase)?;

    let mut hygiene = Hygiene::default();
    let rho0 = rho_s.tensor(&DensityMatrix::ground(n - plan.sender_size))?;
    hygiene.observe_state(&rho0);
    let u_t0 = expm_hermitian(&h, plan.t0);
    let rho_t0 = evolve_observed(&rho0, &u_t0, &mut hygiene)?;
    let b_t0 = rho_t0.partial_trace(&receiver)?;
    let received = b_t0.evolve(&one_way)?;
    let transfer_fidelity = fidelity(&received, &rho_s.reversed_sites())?;

    let v_b = receiver_storage_cycle(plan, scheme)?.unitary(scheme.tau)?;
    let period = scheme.period();
    let step = expm_hermitian(&h_sender_line, period).then(&v_b);
    hygiene.observe_unitary(&step);

    let cycles = plan.storage_cycles;
    let mut rho = rho_t0;
    let mut v_power = Unitary::identity(n);
    let mut fidelities = Vec::with_capacity(cycles);
    let mut distances = Vec::with_capacity(cycles);
    for _ in 0..cycles {
        rho = evolve_observed(&rho, &step, &mut hygiene)?;
        v_power = v_power.then(&v_b);
        fidelities.push(fidelity(&rho.partial_trace(&receiver)?, &b_t0)?);
        distances.push(distance_to_identity(&v_power));
    }
    let rho = rho.reset_to_ground(&plan.sender_and_line())?;
    hygiene.observe_state(&rho);
    let rho_back = evolve_observed(&rho, &u_t0, &mut hygiene)?;
    let returned = rho_back.partial_trace(&sender)?.evolve(&round_trip)?;
    let round_trip_fidelity = fidelity(&returned, rho_s)?;

    let storage_report = StorageReport {
        exact_flag: StorageReport::exact_from(&distances),
        per_cycle_fidelity: fidelities,
        per_cycle_identity_distance: distances,
        cycle_period: period,
        total_period: period * T::lit(cycles as f64),
        initial_fidelity: fidelity(&b_t0, &b_t0)?,
        complement_fidelity: None,
        resumed_fidelity: Some(round_trip_fidelity),
        hygiene,
    };
    Ok(TransferReport {
        transfer_fidelity,
        storage: storage_report,
        round_trip_fidelity,
        multi_excitation_input: rho_s.weight_at_least_excitations(2) > T::lit(1e-12),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocols::SchemeKind;
    use nalgebra::DVector;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn perp_chain(n: usize) -> CouplingMatrix<f64> {
        dipolar_couplings(&build_chain(n, 1.0).unwrap(), &FieldOrientation::along_y(), 1.0).unwrap()
    }

    #[test]
    fn frozen_subsystem_with_chain_reversal() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rho = DensityMatrix::random_pure(5, &mut rng);
        let partition = Partition::split_at(5, 2).unwrap();
        let scheme = ReversalScheme::new(SchemeKind::ChainReversal, 0.3, 1).unwrap();
        let r = run_frozen_subsystem(&perp_chain(5), &partition, &rho, 0.7, &scheme, 5, None).unwrap();
        assert_eq!(r.cycles(), 5);
        assert!(r.exact_flag);
        assert!(
            r.per_cycle_fidelity.iter().all(|&f| f > 1.0 - 1e-9),
            "{:?}",
            r.per_cycle_fidelity
        );
        assert!(r.complement_fidelity.unwrap() < 0.999);
        assert!(r.resumed_fidelity.unwrap() > 1.0 - 1e-9);
        assert!(r.hygiene.is_clean());
    }

    #[test]
    fn frozen_subsystem_zero_cycles() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let rho = DensityMatrix::random_mixed(4, &mut rng);
        let partition = Partition::split_at(4, 2).unwrap();
        let scheme = ReversalScheme::new(SchemeKind::ChainReversal, 0.3, 1).unwrap();
        let r = run_frozen_subsystem(&perp_chain(4), &partition, &rho, 0.4, &scheme, 0, None).unwrap();
        assert!(r.per_cycle_fidelity.is_empty());
        assert!((r.initial_fidelity - 1.0).abs() < 1e-9);
        assert!((r.complement_fidelity.unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn frozen_subsystem_rejects_mismatch() {
        let rho = DensityMatrix::ground(4);
        let partition = Partition::split_at(5, 2).unwrap();
        let scheme = ReversalScheme::new(SchemeKind::ChainReversal, 0.3, 1).unwrap();
        assert!(run_frozen_subsystem(&perp_chain(4), &partition, &rho, 0.4, &scheme, 1, None).is_err());
    }

    fn plus_state() -> DensityMatrix<f64> {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let psi = DVector::from_vec(vec![C::new(s, 0.0), C::new(0.0, s)]);
        DensityMatrix::pure(1, &psi).unwrap()
    }

    #[test]
    fn transfer_round_trip() {
        let scheme = ReversalScheme::new(SchemeKind::ChainReversal, 0.2, 1).unwrap();
        for cycles in [0, 4] {
            let plan = TransferPlan::new(1, 3, 1, 1.0, cycles).unwrap();
            let r = run_transfer_and_store(&plan, &plus_state(), &scheme).unwrap();
            assert!(r.transfer_fidelity > 1.0 - 1e-8, "{}", r.transfer_fidelity);
            assert!(r.round_trip_fidelity > 1.0 - 1e-8, "{}", r.round_trip_fidelity);
            assert_eq!(r.storage.cycles(), cycles);
            assert!(!r.multi_excitation_input);
        }
    }

    #[test]
    fn even_chain_phase_is_corrected() {
        let scheme = ReversalScheme::new(SchemeKind::ChainReversal, 0.2, 1).unwrap();
        let plan = TransferPlan::new(1, 2, 1, 2.0, 2).unwrap();
        let r = run_transfer_and_store(&plan, &plus_state(), &scheme).unwrap();
        assert!(r.transfer_fidelity > 1.0 - 1e-8);
        assert!(r.round_trip_fidelity > 1.0 - 1e-8);
    }

    #[test]
    fn two_qubit_sender_is_mirrored() {
        let scheme = ReversalScheme::new(SchemeKind::ChainReversal, 0.2, 1).unwrap();
        let plan = TransferPlan::new(2, 1, 2, 1.0, 1).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        // (|00⟩ + |01⟩)/√2: sector ≤ 1, asymmetric under the mirror.
        let psi = DVector::from_vec(vec![C::new(s, 0.0), C::new(s, 0.0), C::new(0.0, 0.0), C::new(0.0, 0.0)]);
        let rho = DensityMatrix::pure(2, &psi).unwrap();
        let r = run_transfer_and_store(&plan, &rho, &scheme).unwrap();
        assert!(r.transfer_fidelity > 1.0 - 1e-8);
        assert!(r.round_trip_fidelity > 1.0 - 1e-8);
        let both = DensityMatrix::basis(2, 3).unwrap();
        assert!(
            run_transfer_and_store(&plan, &both, &scheme)
                .unwrap()
                .multi_excitation_input
        );
    }

    #[test]
    fn plan_validation() {
        assert!(TransferPlan::new(1, 3, 2, 1.0, 0).is_err());
        assert!(TransferPlan::new(0, 3, 0, 1.0, 0).is_err());
        assert!(TransferPlan::new(1, 3, 1, 0.0, 0).is_err());
        let p = TransferPlan::new(1, 3, 1, 2.0, 0).unwrap();
        assert!((p.t0 - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
        assert_eq!(p.receiver(), vec![4]);
    }
}
