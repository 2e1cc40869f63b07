// SPDX-License-Identifier: Apache-2.0

//! Executes a parsed experiment configuration.

use std::f64::consts::PI;
use std::time::Instant;

use nalgebra::{DVector, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::config::{ExperimentConfig, GeometrySpec, ProtocolSpec, StateSpec, StorageParams, SweepParameter};
use super::CliError;
use crate::avg_hamiltonian::{error_scaling_probe, local_field, ScalingFit};
use crate::evolution::{pulse_rotation, DensityMatrix, PulseAxis, PulseEvent, Sign};
use crate::operators::{dipolar_hamiltonian, partition_hamiltonian, HamiltonianKind, Partition};
use crate::protocols::impurity::{non_increasing_within, RIPPLE_TOLERANCE};
use crate::protocols::{
    impurity_leakage, pulse_storage_unitary, receiver_storage_cycle, run_frozen_subsystem, run_storage,
    run_transfer_and_store, ImpurityLayout, ImpuritySwitch, ReversalScheme, StorageCycle, StorageReport, TransferPlan,
    TransferReport,
};
use crate::scalar::C;
use crate::spin_system::{
    build_chain, build_lattice, dipolar_couplings, three_orientation_couplings, CouplingMatrix, Dimensionality,
    FieldOrientation, Geometry, SpinSite,
};
use crate::MAX_SPINS;

/// Geometry and couplings of the configured system.
#[derive(Debug, Clone)]
pub struct System {
    pub geometry: Geometry<f64>,
    pub couplings: CouplingMatrix<f64>,
}

/// Builds the configured geometry and its dipolar couplings.
pub fn build_system(config: &ExperimentConfig) -> Result<System, CliError> {
    let g = &config.geometry;
    let n = g.spec.n_sites();
    if n > MAX_SPINS {
        return Err(CliError::TooManySpins(n));
    }
    let mut geometry = match &g.spec {
        GeometrySpec::Chain { n, spacing } => build_chain(*n, *spacing)?,
        GeometrySpec::Lattice { rows, cols, spacing } => build_lattice(*rows, *cols, *spacing)?,
        GeometrySpec::Sites { positions } => {
            let sites = positions
                .iter()
                .map(|p| SpinSite::new(Vector3::new(p[0], p[1], p[2]), 1.0))
                .collect::<crate::Result<Vec<_>>>()?;
            let general = Geometry::new(sites.clone(), Dimensionality::General)?;
            if general.is_collinear() {
                Geometry::new(sites, Dimensionality::Chain)?
            } else if general.is_coplanar() {
                Geometry::new(sites, Dimensionality::Planar)?
            } else {
                general
            }
        }
    };
    if let Some(gammas) = &g.gammas {
        geometry = geometry.with_gammas(gammas)?;
    }
    let field = FieldOrientation::new(Vector3::new(g.field[0], g.field[1], g.field[2]))?;
    let mut couplings = dipolar_couplings(&geometry, &field, g.coupling)?;
    if g.nearest_neighbour {
        couplings = couplings.retain_pairs(|i, j| j == i + 1);
    }
    Ok(System { geometry, couplings })
}

fn plus_x(n: usize) -> DensityMatrix<f64> {
    let dim = 1usize << n;
    let amp = C::new((dim as f64).sqrt().recip(), 0.0);
    DensityMatrix::pure(n, &DVector::from_element(dim, amp)).expect("uniform superposition is normalized")
}

/// Initial state on `n` sites; random states are drawn from `seed`.
pub fn build_state(spec: StateSpec, n: usize, seed: u64) -> Result<DensityMatrix<f64>, CliError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(match spec {
        StateSpec::Ground => DensityMatrix::ground(n),
        StateSpec::Excited => DensityMatrix::basis(n, (1usize << n) - 1)?,
        StateSpec::PlusX => plus_x(n),
        StateSpec::RandomPure => DensityMatrix::random_pure(n, &mut rng),
        StateSpec::RandomMixed => DensityMatrix::random_mixed(n, &mut rng),
    })
}

/// A down, impurity up, B along `+x`.
pub fn impurity_probe_state(n: usize, layout: &ImpurityLayout) -> Result<DensityMatrix<f64>, CliError> {
    let dim = 1usize << n;
    let bit = |s: usize| 1usize << (n - 1 - s);
    let a_mask = layout.a().iter().fold(0, |m, &s| m | bit(s));
    let b_sites = layout.b();
    let amp = C::new((2f64).powi(b_sites.len() as i32).sqrt().recip(), 0.0);
    let mut psi = DVector::zeros(dim);
    for sub in 0..1usize << b_sites.len() {
        let b_mask = b_sites
            .iter()
            .enumerate()
            .filter(|(k, _)| sub >> k & 1 == 1)
            .fold(0, |m, (_, &s)| m | bit(s));
        psi[a_mask | b_mask] = amp;
    }
    Ok(DensityMatrix::pure(n, &psi)?)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImpurityPoint {
    pub leakage: f64,
    pub baseline: f64,
    /// Absolute drive amplitude `Ω`.
    pub drive_amplitude: f64,
    pub window: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "procedure", rename_all = "snake_case")]
pub enum PointDetail {
    Storage(StorageReport<f64>),
    FrozenSubsystem(StorageReport<f64>),
    TransferAndStore(TransferReport<f64>),
    ImpuritySwitch(ImpurityPoint),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointResult {
    pub point_index: usize,
    pub param_value: Option<f64>,
    #[serde(rename = "period_T")]
    pub period_t: Option<f64>,
    pub identity_distance: Option<f64>,
    pub fidelity: Option<f64>,
    pub detail: PointDetail,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyCheck {
    pub name: String,
    pub error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub checks: Vec<VerifyCheck>,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImpuritySummary {
    pub baseline: f64,
    pub non_increasing_within_ripple: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Timings {
    pub total_seconds: f64,
    pub per_point_seconds: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub config: ExperimentConfig,
    pub config_text: String,
    pub seed: u64,
    pub n_sites: usize,
    pub omega_loc: f64,
    pub points: Vec<PointResult>,
    /// All storage points refocus to the identity within tolerance.
    pub exact: Option<bool>,
    pub scaling: Option<ScalingFit<f64>>,
    /// Why no scaling fit is attached to a `tau` sweep.
    pub scaling_note: Option<String>,
    pub impurity: Option<ImpuritySummary>,
    pub verification: Option<VerifyReport>,
    pub timings: Option<Timings>,
}

fn scheme_of(storage: &StorageParams) -> Result<ReversalScheme<f64>, CliError> {
    Ok(ReversalScheme::new(storage.scheme, storage.tau, storage.cycles.max(1))?.with_pulse_model(storage.pulse_model))
}

/// Distance after the final cycle; none when no cycle ran.
fn final_distance(values: &[f64]) -> Option<f64> {
    values.last().copied()
}

fn impurity_parts(
    system: &System,
    a: &[usize],
    impurity: usize,
    b: &[usize],
) -> Result<(ImpurityLayout, DensityMatrix<f64>, f64), CliError> {
    let n = system.couplings.n();
    let layout = ImpurityLayout::new(n, a.to_vec(), Some(impurity), b.to_vec())?;
    let rho = impurity_probe_state(n, &layout)?;
    Ok((layout, rho, local_field(&system.couplings).omega_loc))
}

fn run_point(
    system: &System,
    protocol: &ProtocolSpec,
    seed: u64,
    index: usize,
    param: Option<f64>,
) -> Result<PointResult, CliError> {
    let n = system.couplings.n();
    let (period_t, identity_distance, fidelity, detail) = match protocol {
        ProtocolSpec::Storage { storage, state } => {
            let scheme = scheme_of(storage)?;
            let rho = build_state(*state, n, seed)?;
            let r = run_storage(&system.couplings, &scheme, &rho, Some(&system.geometry))?;
            (
                Some(r.cycle_period),
                final_distance(&r.per_cycle_identity_distance),
                Some(r.min_fidelity()),
                PointDetail::Storage(r),
            )
        }
        ProtocolSpec::FrozenSubsystem {
            storage,
            t0,
            split,
            state,
        } => {
            let scheme = scheme_of(storage)?;
            let partition = Partition::split_at(n, *split)?;
            let rho = build_state(*state, n, seed)?;
            let r = run_frozen_subsystem(
                &system.couplings,
                &partition,
                &rho,
                *t0,
                &scheme,
                storage.cycles,
                Some(&system.geometry),
            )?;
            (
                Some(r.cycle_period),
                final_distance(&r.per_cycle_identity_distance),
                Some(r.min_fidelity()),
                PointDetail::FrozenSubsystem(r),
            )
        }
        ProtocolSpec::TransferAndStore {
            storage,
            sender,
            line,
            receiver,
            lambda,
            state,
        } => {
            let scheme = scheme_of(storage)?;
            let plan = TransferPlan::new(*sender, *line, *receiver, *lambda, storage.cycles)?;
            let rho = build_state(*state, *sender, seed)?;
            let r = run_transfer_and_store(&plan, &rho, &scheme)?;
            (
                Some(r.storage.cycle_period),
                final_distance(&r.storage.per_cycle_identity_distance),
                Some(r.round_trip_fidelity),
                PointDetail::TransferAndStore(r),
            )
        }
        ProtocolSpec::ImpuritySwitch {
            a,
            impurity,
            b,
            omega,
            window,
        } => {
            let (layout, rho, omega_loc) = impurity_parts(system, a, *impurity, b)?;
            let window = window.unwrap_or(PI / omega_loc);
            let gamma3 = system.couplings.gammas()[*impurity];
            let switch = ImpuritySwitch::new(omega * omega_loc, gamma3, window)?;
            let leakage = impurity_leakage(&system.couplings, &layout, &switch, &rho)?;
            let baseline = impurity_leakage(&system.couplings, &layout, &switch.with_drive(0.0)?, &rho)?;
            (
                Some(window),
                None,
                Some(1.0 - leakage),
                PointDetail::ImpuritySwitch(ImpurityPoint {
                    leakage,
                    baseline,
                    drive_amplitude: switch.drive_amplitude,
                    window,
                }),
            )
        }
    };
    Ok(PointResult {
        point_index: index,
        param_value: param,
        period_t,
        identity_distance,
        fidelity,
        detail,
    })
}

/// The storage cycle a `tau` sweep probes, embedded in the full system.
fn probe_cycle(system: &System, protocol: &ProtocolSpec) -> Result<Option<StorageCycle<f64>>, CliError> {
    let n = system.couplings.n();
    let cycle = match protocol {
        ProtocolSpec::Storage { storage, .. } => Some(StorageCycle::for_scheme(
            storage.scheme,
            storage.pulse_model,
            &system.couplings,
            Some(&system.geometry),
            |_, _| true,
        )?),
        ProtocolSpec::FrozenSubsystem { storage, split, .. } => {
            let partition = Partition::split_at(n, *split)?;
            Some(StorageCycle::for_scheme(
                storage.scheme,
                storage.pulse_model,
                &system.couplings,
                Some(&system.geometry),
                |i, j| partition.in_b(i) && partition.in_b(j),
            )?)
        }
        ProtocolSpec::TransferAndStore {
            storage,
            sender,
            line,
            receiver,
            lambda,
            ..
        } => {
            let plan = TransferPlan::new(*sender, *line, *receiver, *lambda, storage.cycles)?;
            Some(receiver_storage_cycle(&plan, &scheme_of(storage)?)?)
        }
        ProtocolSpec::ImpuritySwitch { .. } => None,
    };
    Ok(cycle)
}

fn check(name: &str, error: f64, scale: f64) -> VerifyCheck {
    let tolerance = 1e-12 * scale.max(1.0);
    VerifyCheck {
        name: name.to_string(),
        error,
        tolerance,
        passed: error <= tolerance,
    }
}

/// Invariant checks on the configured system.
pub fn verify_system(config: &ExperimentConfig) -> Result<VerifyReport, CliError> {
    let system = build_system(config)?;
    let c = &system.couplings;
    let n = c.n();
    let dz = dipolar_hamiltonian(c, HamiltonianKind::Dz, false)?;
    let dy = dipolar_hamiltonian(c, HamiltonianKind::Dy, false)?;
    let dx = dipolar_hamiltonian(c, HamiltonianKind::Dx, false)?;
    let scale = dz.max_abs();
    let mut checks = vec![
        check("hamiltonian_hermitian", dz.hermiticity_error(), scale),
        check("kind_sum_zero", (&(&dx + &dy) + &dz).max_abs(), scale),
    ];
    for (name, axis, target) in [
        ("rotation_x_maps_dz_to_dy", PulseAxis::X, &dy),
        ("rotation_y_maps_dz_to_dx", PulseAxis::Y, &dx),
    ] {
        let r = pulse_rotation(n, &PulseEvent::quarter(axis, Sign::Plus, 0));
        checks.push(check(name, r.conjugate(&dz).max_abs_diff(target), scale));
    }
    if let Some(frame) = system.geometry.frame() {
        let g = config.geometry.coupling;
        let (d1, d2, d3) = three_orientation_couplings(&system.geometry, g)?;
        let sum = d1.values() + d2.values() + d3.values();
        checks.push(check("orientation_sum_zero", sum.amax(), d1.values().amax()));
        if system.geometry.is_collinear() {
            let par = dipolar_couplings(&system.geometry, &FieldOrientation::new(frame.first)?, g)?;
            let perp = dipolar_couplings(&system.geometry, &FieldOrientation::new(frame.normal)?, g)?;
            let h_par = dipolar_hamiltonian(&par, HamiltonianKind::Dz, false)?;
            let h_perp = dipolar_hamiltonian(&perp, HamiltonianKind::Dz, false)?;
            checks.push(check(
                "chain_parallel_is_minus_two_perpendicular",
                h_par.max_abs_diff(&h_perp.scaled(-2.0)),
                h_par.max_abs(),
            ));
        }
    }
    if let ProtocolSpec::FrozenSubsystem { split, .. } = &config.protocol {
        let parts = partition_hamiltonian(c, &Partition::split_at(n, *split)?, HamiltonianKind::Dz)?;
        checks.push(check("partition_sum", parts.total().max_abs_diff(&dz), scale));
    }
    if let Some(storage) = config.protocol.storage() {
        if storage.scheme == crate::protocols::SchemeKind::PulseSequence
            && config.protocol.procedure() == super::config::ProcedureKind::Storage
        {
            let ideal = pulse_storage_unitary(c, storage.tau, crate::protocols::PulseModel::IdealToggling)?;
            let explicit = pulse_storage_unitary(c, storage.tau, crate::protocols::PulseModel::ExplicitPulses)?;
            checks.push(check("pulse_models_agree", ideal.max_abs_diff(&explicit), 1.0));
        }
    }
    if let Some(cycle) = probe_cycle(&system, &config.protocol)? {
        if let Some(storage) = config.protocol.storage() {
            let u = cycle.unitary(storage.tau)?;
            let err = u.unitarity_error();
            checks.push(VerifyCheck {
                name: "cycle_unitary".into(),
                error: err,
                tolerance: 1e-10,
                passed: err < 1e-10,
            });
        }
    }
    let passed = checks.iter().all(|c| c.passed);
    Ok(VerifyReport { checks, passed })
}

/// Runs every sweep point (concurrently) and assembles the report.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunReport, CliError> {
    let started = Instant::now();
    let system = build_system(config)?;
    let points = config.sweep_points();
    let results = points
        .par_iter()
        .enumerate()
        .map(|(i, (param, protocol))| {
            let t = Instant::now();
            let r = run_point(&system, protocol, config.seed, i, *param)?;
            Ok((r, t.elapsed().as_secs_f64()))
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let per_point_seconds = results.iter().map(|r| r.1).collect();
    let points: Vec<PointResult> = results.into_iter().map(|r| r.0).collect();

    let exact = match config.protocol {
        ProtocolSpec::ImpuritySwitch { .. } => None,
        _ => Some(points.iter().all(|p| match &p.detail {
            PointDetail::Storage(r) | PointDetail::FrozenSubsystem(r) => r.exact_flag,
            PointDetail::TransferAndStore(r) => r.storage.exact_flag,
            PointDetail::ImpuritySwitch(_) => false,
        })),
    };

    let (mut scaling, mut scaling_note) = (None, None);
    if let Some(sweep) = config.sweep.as_ref().filter(|s| s.parameter == SweepParameter::Tau) {
        if let Some(cycle) = probe_cycle(&system, &config.protocol)? {
            match error_scaling_probe(&cycle, &sweep.values, cycle.local_field()) {
                Ok(fit) => scaling = Some(fit),
                Err(e) => scaling_note = Some(e.to_string()),
            }
        }
    }

    let impurity = match (&config.protocol, &config.sweep) {
        (ProtocolSpec::ImpuritySwitch { .. }, Some(s))
            if s.parameter == SweepParameter::Omega && !points.is_empty() =>
        {
            let leak: Vec<f64> = points
                .iter()
                .map(|p| match &p.detail {
                    PointDetail::ImpuritySwitch(d) => d.leakage,
                    _ => unreachable!("impurity sweep yields impurity points"),
                })
                .collect();
            let baseline = match &points[0].detail {
                PointDetail::ImpuritySwitch(d) => d.baseline,
                _ => unreachable!("impurity sweep yields impurity points"),
            };
            Some(ImpuritySummary {
                baseline,
                non_increasing_within_ripple: non_increasing_within(&leak, RIPPLE_TOLERANCE * baseline),
            })
        }
        _ => None,
    };

    let timings = config.output.timings.then(|| Timings {
        total_seconds: started.elapsed().as_secs_f64(),
        per_point_seconds,
    });
    Ok(RunReport {
        config: config.clone(),
        config_text: config.to_string(),
        seed: config.seed,
        n_sites: system.couplings.n(),
        omega_loc: local_field(&system.couplings).omega_loc,
        points,
        exact,
        scaling,
        scaling_note,
        impurity,
        verification: None,
        timings,
    })
}
