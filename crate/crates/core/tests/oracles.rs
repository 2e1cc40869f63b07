// SPDX-License-Identifier: Apache-2.0

//! Two-spin computations checked against hand-built 4×4 references.

mod common;

use std::f64::consts::{FRAC_PI_2, PI};
use std::sync::Arc;

use common::{Ax, Step, M};
use spinstore::avg_hamiltonian::{first_order, magnus_terms, zeroth_order};
use spinstore::evolution::{
    compose_schedule, distance_to_identity, expm_hermitian, fidelity, pulse_rotation, DensityMatrix, PulseAxis,
    PulseEvent, Schedule, Sign,
};
use spinstore::operators::{dipolar_hamiltonian, single_spin_op, total_spin, Axis, HamiltonianKind, HermitianOperator};
use spinstore::protocols::{
    chain_reversal_unitary, planar_reversal_unitary, pulse_storage_schedule, pulse_storage_unitary, PulseModel,
};
use spinstore::spin_system::{build_chain, dipolar_couplings, three_orientation_couplings, FieldOrientation};

const TOL: f64 = 1e-10;

fn op(m: M) -> Arc<HermitianOperator<f64>> {
    Arc::new(HermitianOperator::from_matrix(2, m).unwrap())
}

fn assert_close(lib: &M, oracle: &M) {
    let d = common::max_diff(lib, oracle);
    assert!(d < TOL, "deviation {d:e}");
}

#[test]
fn pair_couplings_follow_the_angular_law() {
    for (theta, phi, r) in [
        (0.0, 0.0, 1.0),
        (FRAC_PI_2, 0.0, 2.0),
        (0.3, 1.2, 0.7),
        (0.9553166181245093, 0.0, 1.0),
    ] {
        let field = FieldOrientation::from_angles(theta, phi);
        let c = dipolar_couplings(&build_chain(2, r).unwrap(), &field, 1.7).unwrap();
        let cos = field.direction().x;
        let expected = common::coupling(1.7, r, cos);
        assert!(
            (c.get(0, 1) - expected).abs() < 1e-14,
            "{theta} {phi}: {} vs {expected}",
            c.get(0, 1)
        );
    }
}

#[test]
fn spin_operators_match_pauli_halves() {
    let id = M::identity(2, 2);
    for (axis, ax) in [(Axis::X, Ax::X), (Axis::Y, Ax::Y), (Axis::Z, Ax::Z)] {
        let half = common::pauli(ax) * common::c(0.5);
        assert_close(
            single_spin_op::<f64>(2, 0, axis).unwrap().matrix(),
            &common::kron(&half, &id),
        );
        assert_close(
            single_spin_op::<f64>(2, 1, axis).unwrap().matrix(),
            &common::kron(&id, &half),
        );
    }
    assert_close(total_spin::<f64>(2, Axis::X).matrix(), &common::zeeman_x());
}

#[test]
fn pair_hamiltonians() {
    let c = dipolar_couplings(&build_chain(2, 1.0).unwrap(), &FieldOrientation::along_z(), 1.0).unwrap();
    for (kind, ax) in [
        (HamiltonianKind::Dx, Ax::X),
        (HamiltonianKind::Dy, Ax::Y),
        (HamiltonianKind::Dz, Ax::Z),
    ] {
        assert_close(
            dipolar_hamiltonian(&c, kind, false).unwrap().matrix(),
            &common::dipolar_pair(1.0, ax),
        );
    }
}

#[test]
fn propagators_match_direct_diagonalization() {
    let h = common::dipolar_pair(0.8, Ax::Z) + common::zeeman_x() * common::c(0.3);
    for t in [0.0, 0.1, 1.7, 12.0] {
        let u = expm_hermitian(&op(h.clone()), t);
        assert_close(u.matrix(), &common::expm_real(&h, t));
    }
}

#[test]
fn pulses_match_explicit_rotations() {
    for axis in [PulseAxis::X, PulseAxis::Y] {
        let ax = if axis == PulseAxis::X { Ax::X } else { Ax::Y };
        for (sign, s) in [(Sign::Plus, 1.0), (Sign::Minus, -1.0)] {
            for angle in [FRAC_PI_2, PI, 0.37] {
                let p = PulseEvent::new(axis, angle, sign, 0).unwrap();
                assert_close(pulse_rotation::<f64>(2, &p).matrix(), &common::rotation(ax, s * angle));
            }
        }
    }
}

fn mixed_schedule() -> (Schedule<f64>, Vec<Step>) {
    let (a, b, z) = (
        common::dipolar_pair(1.3, Ax::Z),
        common::dipolar_pair(-0.4, Ax::X),
        common::zeeman_x() * common::c(0.9),
    );
    let steps = vec![
        Step::Free(a.clone(), 0.25),
        Step::Free(z.clone(), 0.1),
        Step::Pulse(Ax::Y, 0.6),
        Step::Free(b.clone(), 0.35),
        Step::Pulse(Ax::X, -FRAC_PI_2),
        Step::Free(a.clone(), 0.2),
    ];
    let a = op(a);
    let schedule = Schedule::new(2)
        .segment(Arc::clone(&a), 0.25)
        .unwrap()
        .segment(op(z), 0.1)
        .unwrap()
        .pulse(PulseAxis::Y, 0.6, Sign::Plus)
        .unwrap()
        .segment(op(b), 0.35)
        .unwrap()
        .pulse(PulseAxis::X, FRAC_PI_2, Sign::Minus)
        .unwrap()
        .segment(a, 0.2)
        .unwrap();
    (schedule, steps)
}

#[test]
fn composed_schedule_matches_step_product() {
    let (schedule, steps) = mixed_schedule();
    assert_close(
        compose_schedule(&schedule).unwrap().matrix(),
        &common::propagate(&steps),
    );
}

#[test]
fn magnus_terms_match_commutator_sums() {
    let (schedule, steps) = mixed_schedule();
    let toggled = common::toggled(&steps);
    let terms = magnus_terms(&schedule).unwrap();
    assert_close(terms.zeroth.matrix(), &common::zeroth(&toggled));
    assert_close(terms.first.matrix(), &common::first(&toggled));
    assert!(
        common::max_abs(&common::first(&toggled)) > 1e-3,
        "reference first order should be nontrivial"
    );
}

#[test]
fn pulse_cycle_matches_reference_in_both_models() {
    let c = dipolar_couplings(
        &build_chain(2, 1.0).unwrap(),
        &FieldOrientation::from_angles(0.5, 0.0),
        1.0,
    )
    .unwrap();
    let d = c.get(0, 1);
    for tau in [0.02, 0.3, 1.1] {
        let steps = common::pulse_cycle_steps(d, tau);
        let oracle = common::propagate(&steps);
        let toggled = common::toggled(&steps);
        for model in [PulseModel::IdealToggling, PulseModel::ExplicitPulses] {
            assert_close(pulse_storage_unitary(&c, tau, model).unwrap().matrix(), &oracle);
            let s = pulse_storage_schedule(&c, tau, model).unwrap();
            assert_close(zeroth_order(&s).unwrap().matrix(), &common::zeroth(&toggled));
            assert_close(first_order(&s).unwrap().matrix(), &common::first(&toggled));
        }
        assert!(common::max_abs(&common::zeroth(&toggled)) < 1e-14);
    }
}

#[test]
fn reversal_cycles_on_a_pair() {
    let chain = build_chain(2, 1.0).unwrap();
    let perp = dipolar_couplings(&chain, &FieldOrientation::along_z(), 1.0).unwrap();
    let (d1, d2, d3) = three_orientation_couplings(&chain, 1.0).unwrap();
    for tau in [0.1, 0.8] {
        let oracle = common::propagate(&[
            Step::Free(common::dipolar_pair(common::coupling(1.0, 1.0, 0.0), Ax::Z), 2.0 * tau),
            Step::Free(common::dipolar_pair(common::coupling(1.0, 1.0, 1.0), Ax::Z), tau),
        ]);
        assert!(common::identity_distance(&oracle) < 1e-14);
        assert_close(chain_reversal_unitary(&perp, tau).unwrap().matrix(), &oracle);

        let planar = common::propagate(&[
            Step::Free(common::dipolar_pair(d3.get(0, 1), Ax::Z), tau),
            Step::Free(common::dipolar_pair(d2.get(0, 1), Ax::Z), tau),
            Step::Free(common::dipolar_pair(d1.get(0, 1), Ax::Z), tau),
        ]);
        let u = planar_reversal_unitary(&d1, &d2, &d3, tau).unwrap();
        assert_close(u.matrix(), &planar);
        assert!((distance_to_identity(&u) - common::identity_distance(&planar)).abs() < TOL);
    }
}

#[test]
fn fidelity_of_pure_pair_states() {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let singlet = nalgebra::DVector::from_vec(vec![common::c(0.0), common::c(s), common::c(-s), common::c(0.0)]);
    let up = nalgebra::DVector::from_vec(vec![common::c(0.0), common::c(1.0), common::c(0.0), common::c(0.0)]);
    let a = DensityMatrix::pure(2, &singlet).unwrap();
    let b = DensityMatrix::pure(2, &up).unwrap();
    let overlap = singlet.dotc(&up).norm_sqr();
    assert!((fidelity(&a, &b).unwrap() - overlap).abs() < 1e-14);
    assert!((fidelity(&a, &DensityMatrix::maximally_mixed(2)).unwrap() - 0.25).abs() < 1e-12);
}
