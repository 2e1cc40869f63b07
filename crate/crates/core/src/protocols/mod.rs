// SPDX-License-Identifier: Apache-2.0

//! Storage cycles that refocus dipolar evolution, and the bipartite
//! procedures built on them.
//!
//! Three cycles are provided:
//!
//! - chain reversal: `H` for `2τ`, then `−2H` for `τ` (period `3τ`), exact;
//! - planar three-orientation: `H₃`, `H₂`, `H₁` for `τ` each (period `3τ`),
//!   identity up to `O((Tω_loc)²)`;
//! - pulse sequence: `H_dz`, `H_dy`, `H_dx`, `H_dy`, `H_dz` for `τ, τ, 2τ, τ, τ`
//!   (period `6τ`), either composed directly or as free `H_dz` evolution
//!   interleaved with global π/2 pulses.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::avg_hamiltonian::{local_field, CycleBuilder, LocalField};
use crate::error::{Error, Result};
use crate::evolution::{
    compose_schedule, distance_to_identity, fidelity, pulse_rotation, DensityMatrix, PulseAxis, PulseEvent, Schedule,
    Sign, Spectrum, Unitary,
};
use crate::operators::{dipolar_hamiltonian, HamiltonianKind, HermitianOperator};
use crate::scalar::Real;
use crate::spin_system::{three_orientation_couplings, CouplingMatrix, Geometry};

pub mod bipartite;
pub mod impurity;

pub use bipartite::{
    receiver_storage_cycle, run_frozen_subsystem, run_transfer_and_store, TransferPlan, TransferReport,
};
pub use impurity::{
    impurity_hamiltonian, impurity_leakage, run_impurity_switch, ImpurityLayout, ImpurityReport, ImpuritySwitch,
};

/// Identity distances below this count as exact storage.
pub const EXACT_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeKind {
    ChainReversal,
    PlanarThreeOrientation,
    PulseSequence,
}

impl SchemeKind {
    pub const ALL: [SchemeKind; 3] = [
        SchemeKind::ChainReversal,
        SchemeKind::PlanarThreeOrientation,
        SchemeKind::PulseSequence,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            SchemeKind::ChainReversal => "chain_reversal",
            SchemeKind::PlanarThreeOrientation => "planar_three_orientation",
            SchemeKind::PulseSequence => "pulse_sequence",
        }
    }

    /// Period in units of the scheme's base interval.
    pub fn period_factor(self) -> f64 {
        match self {
            SchemeKind::ChainReversal | SchemeKind::PlanarThreeOrientation => 3.0,
            SchemeKind::PulseSequence => 6.0,
        }
    }
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for SchemeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.tag() == s)
            .ok_or_else(|| Error::InvalidProtocol(format!("unknown scheme `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PulseModel {
    #[default]
    IdealToggling,
    ExplicitPulses,
}

impl PulseModel {
    pub fn tag(self) -> &'static str {
        match self {
            PulseModel::IdealToggling => "ideal_toggling",
            PulseModel::ExplicitPulses => "explicit_pulses",
        }
    }
}

impl fmt::Display for PulseModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for PulseModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [PulseModel::IdealToggling, PulseModel::ExplicitPulses]
            .into_iter()
            .find(|m| m.tag() == s)
            .ok_or_else(|| Error::InvalidProtocol(format!("unknown pulse model `{s}`")))
    }
}

/// A storage scheme with its base interval and cycle count.
///
/// For chain reversal `tau` is the short interval `τ₂`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReversalScheme<T: Real> {
    pub kind: SchemeKind,
    pub tau: T,
    pub cycles: usize,
    pub pulse_model: PulseModel,
}

impl<T: Real> ReversalScheme<T> {
    pub fn new(kind: SchemeKind, tau: T, cycles: usize) -> Result<Self> {
        if !(tau > T::zero()) || !tau.is_finite() {
            return Err(Error::InvalidProtocol("tau must be positive".into()));
        }
        if cycles == 0 {
            return Err(Error::InvalidProtocol("a scheme needs at least one cycle".into()));
        }
        Ok(Self {
            kind,
            tau,
            cycles,
            pulse_model: PulseModel::default(),
        })
    }

    pub fn with_pulse_model(mut self, model: PulseModel) -> Self {
        self.pulse_model = model;
        self
    }

    pub fn period(&self) -> T {
        T::lit(self.kind.period_factor()) * self.tau
    }
}

fn check_tau<T: Real>(tau: T) -> Result<()> {
    if !(tau > T::zero()) || !tau.is_finite() {
        return Err(Error::InvalidProtocol("tau must be positive".into()));
    }
    Ok(())
}

fn hdz<T: Real>(couplings: &CouplingMatrix<T>) -> Result<HermitianOperator<T>> {
    dipolar_hamiltonian(couplings, HamiltonianKind::Dz, false)
}

/// `H` for `τ₁`, then `−α·H` for `τ₂`.
pub fn switching_reversal_schedule<T: Real>(
    couplings: &CouplingMatrix<T>,
    alpha: T,
    tau1: T,
    tau2: T,
) -> Result<Schedule<T>> {
    check_tau(tau1)?;
    check_tau(tau2)?;
    let first = Arc::new(hdz(couplings)?);
    let second = Arc::new(hdz(&couplings.scaled(-alpha))?);
    Schedule::new(couplings.n()).segment(first, tau1)?.segment(second, tau2)
}

pub fn switching_reversal_unitary<T: Real>(
    couplings: &CouplingMatrix<T>,
    alpha: T,
    tau1: T,
    tau2: T,
) -> Result<Unitary<T>> {
    compose_schedule(&switching_reversal_schedule(couplings, alpha, tau1, tau2)?)
}

/// Chain reversal: evolution with the field perpendicular to the chain for
/// `2τ₂`, then parallel (couplings `−2×`) for `τ₂`.
pub fn chain_reversal_schedule<T: Real>(couplings_perp: &CouplingMatrix<T>, tau2: T) -> Result<Schedule<T>> {
    check_tau(tau2)?;
    switching_reversal_schedule(couplings_perp, T::lit(2.0), T::lit(2.0) * tau2, tau2)
}

pub fn chain_reversal_unitary<T: Real>(couplings_perp: &CouplingMatrix<T>, tau2: T) -> Result<Unitary<T>> {
    compose_schedule(&chain_reversal_schedule(couplings_perp, tau2)?)
}

fn check_planar_triple<T: Real>(d1: &CouplingMatrix<T>, d2: &CouplingMatrix<T>, d3: &CouplingMatrix<T>) -> Result<()> {
    let n = d1.n();
    if d2.n() != n || d3.n() != n {
        return Err(Error::InvalidProtocol("orientation couplings differ in size".into()));
    }
    let scale = [d1, d2, d3]
        .iter()
        .map(|d| d.values().amax())
        .fold(T::one(), |a, b| a.max(b));
    let sum = d1.values() + d2.values() + d3.values();
    let err = sum.amax();
    if err > T::lit(1e-12) * scale {
        return Err(Error::InvalidProtocol(format!(
            "orientation couplings do not sum to zero (max {:e})",
            err.as_f64()
        )));
    }
    Ok(())
}

/// Chronological segments `H₃, H₂, H₁`, each lasting `τ`, so the cycle is
/// `e^{−iH₁τ} e^{−iH₂τ} e^{−iH₃τ}`.
pub fn planar_reversal_schedule<T: Real>(
    d1: &CouplingMatrix<T>,
    d2: &CouplingMatrix<T>,
    d3: &CouplingMatrix<T>,
    tau: T,
) -> Result<Schedule<T>> {
    check_tau(tau)?;
    check_planar_triple(d1, d2, d3)?;
    let mut s = Schedule::new(d1.n());
    for d in [d3, d2, d1] {
        s.push_segment(Arc::new(hdz(d)?), tau)?;
    }
    Ok(s)
}

pub fn planar_reversal_unitary<T: Real>(
    d1: &CouplingMatrix<T>,
    d2: &CouplingMatrix<T>,
    d3: &CouplingMatrix<T>,
    tau: T,
) -> Result<Unitary<T>> {
    compose_schedule(&planar_reversal_schedule(d1, d2, d3, tau)?)
}

/// Pulses of the explicit model, in order: `−x`, `−y`, `+y`, `+x`, preceding
/// free-evolution intervals 2 to 5.
const EXPLICIT_PULSES: [(PulseAxis, Sign); 4] = [
    (PulseAxis::X, Sign::Minus),
    (PulseAxis::Y, Sign::Minus),
    (PulseAxis::Y, Sign::Plus),
    (PulseAxis::X, Sign::Plus),
];

/// Interval multiples of `τ` of the five pulse-sequence windows.
const PULSE_WINDOWS: [f64; 5] = [1.0, 1.0, 2.0, 1.0, 1.0];

pub fn pulse_storage_schedule<T: Real>(
    couplings: &CouplingMatrix<T>,
    tau: T,
    model: PulseModel,
) -> Result<Schedule<T>> {
    check_tau(tau)?;
    let n = couplings.n();
    let mut s = Schedule::new(n);
    match model {
        PulseModel::IdealToggling => {
            let dz = Arc::new(hdz(couplings)?);
            let dy = Arc::new(dipolar_hamiltonian(couplings, HamiltonianKind::Dy, false)?);
            let dx = Arc::new(dipolar_hamiltonian(couplings, HamiltonianKind::Dx, false)?);
            for (h, w) in [dz.clone(), dy.clone(), dx, dy, dz].into_iter().zip(PULSE_WINDOWS) {
                s.push_segment(h, T::lit(w) * tau)?;
            }
        }
        PulseModel::ExplicitPulses => {
            let dz = Arc::new(hdz(couplings)?);
            for (k, w) in PULSE_WINDOWS.into_iter().enumerate() {
                if k > 0 {
                    let (axis, sign) = EXPLICIT_PULSES[k - 1];
                    s.push_pulse(PulseEvent::quarter(axis, sign, k))?;
                }
                s.push_segment(Arc::clone(&dz), T::lit(w) * tau)?;
            }
        }
    }
    Ok(s)
}

pub fn pulse_storage_unitary<T: Real>(couplings: &CouplingMatrix<T>, tau: T, model: PulseModel) -> Result<Unitary<T>> {
    compose_schedule(&pulse_storage_schedule(couplings, tau, model)?)
}

#[derive(Debug, Clone)]
enum CycleShape<T: Real> {
    /// Spectra of `H` and `−2H`.
    Chain(Spectrum<T>, Spectrum<T>),
    /// Spectra of `H₁, H₂, H₃`.
    Planar([Spectrum<T>; 3]),
    /// Spectra of `H_dz, H_dy, H_dx`.
    PulseIdeal([Spectrum<T>; 3]),
    /// Spectrum of `H_dz` plus the four pulse rotations.
    PulseExplicit(Spectrum<T>, Vec<Unitary<T>>),
}

/// A storage cycle with its Hamiltonians diagonalized once, so that
/// propagators for many `τ` (or many repetitions) are cheap.
#[derive(Debug, Clone)]
pub struct StorageCycle<T: Real> {
    kind: SchemeKind,
    n_spins: usize,
    shape: CycleShape<T>,
    local_field: LocalField<T>,
}

impl<T: Real> StorageCycle<T> {
    pub fn chain_reversal(couplings_perp: &CouplingMatrix<T>) -> Result<Self> {
        let par = couplings_perp.scaled(T::lit(-2.0));
        Ok(Self {
            kind: SchemeKind::ChainReversal,
            n_spins: couplings_perp.n(),
            shape: CycleShape::Chain(Spectrum::new(&hdz(couplings_perp)?), Spectrum::new(&hdz(&par)?)),
            local_field: local_field(&par),
        })
    }

    pub fn planar(d1: &CouplingMatrix<T>, d2: &CouplingMatrix<T>, d3: &CouplingMatrix<T>) -> Result<Self> {
        check_planar_triple(d1, d2, d3)?;
        let omega = [d1, d2, d3]
            .iter()
            .map(|d| local_field(d).omega_loc)
            .fold(T::zero(), |a, b| a.max(b));
        Ok(Self {
            kind: SchemeKind::PlanarThreeOrientation,
            n_spins: d1.n(),
            shape: CycleShape::Planar([
                Spectrum::new(&hdz(d1)?),
                Spectrum::new(&hdz(d2)?),
                Spectrum::new(&hdz(d3)?),
            ]),
            local_field: LocalField { omega_loc: omega },
        })
    }

    pub fn pulse_sequence(couplings: &CouplingMatrix<T>, model: PulseModel) -> Result<Self> {
        let n = couplings.n();
        let shape = match model {
            PulseModel::IdealToggling => CycleShape::PulseIdeal([
                Spectrum::new(&hdz(couplings)?),
                Spectrum::new(&dipolar_hamiltonian(couplings, HamiltonianKind::Dy, false)?),
                Spectrum::new(&dipolar_hamiltonian(couplings, HamiltonianKind::Dx, false)?),
            ]),
            PulseModel::ExplicitPulses => CycleShape::PulseExplicit(
                Spectrum::new(&hdz(couplings)?),
                EXPLICIT_PULSES
                    .iter()
                    .map(|&(axis, sign)| pulse_rotation(n, &PulseEvent::quarter(axis, sign, 0)))
                    .collect(),
            ),
        };
        Ok(Self {
            kind: SchemeKind::PulseSequence,
            n_spins: n,
            shape,
            local_field: local_field(couplings),
        })
    }

    /// Cycle for `kind` driven by `couplings`. The planar scheme derives its
    /// three orientations from `geometry` with the couplings' prefactor,
    /// keeping only pairs accepted by `keep`.
    pub fn for_scheme(
        kind: SchemeKind,
        model: PulseModel,
        couplings: &CouplingMatrix<T>,
        geometry: Option<&Geometry<T>>,
        mut keep: impl FnMut(usize, usize) -> bool,
    ) -> Result<Self> {
        match kind {
            SchemeKind::ChainReversal => Self::chain_reversal(&couplings.retain_pairs(&mut keep)),
            SchemeKind::PulseSequence => Self::pulse_sequence(&couplings.retain_pairs(&mut keep), model),
            SchemeKind::PlanarThreeOrientation => {
                let geometry = geometry
                    .ok_or_else(|| Error::InvalidProtocol("the planar scheme needs the system geometry".into()))?;
                if geometry.len() != couplings.n() {
                    return Err(Error::DimensionMismatch {
                        expected: couplings.n(),
                        found: geometry.len(),
                    });
                }
                let (d1, d2, d3) = three_orientation_couplings(geometry, couplings.prefactor())?;
                Self::planar(
                    &d1.retain_pairs(&mut keep),
                    &d2.retain_pairs(&mut keep),
                    &d3.retain_pairs(&mut keep),
                )
            }
        }
    }

    pub fn kind(&self) -> SchemeKind {
        self.kind
    }

    pub fn n_spins(&self) -> usize {
        self.n_spins
    }

    /// Largest local field among the Hamiltonians the cycle switches between.
    pub fn local_field(&self) -> LocalField<T> {
        self.local_field
    }

    pub fn unitary(&self, tau: T) -> Result<Unitary<T>> {
        check_tau(tau)?;
        let two = T::lit(2.0);
        let u = match &self.shape {
            CycleShape::Chain(perp, par) => perp.propagator(two * tau).then(&par.propagator(tau)),
            CycleShape::Planar([h1, h2, h3]) => h3.propagator(tau).then(&h2.propagator(tau)).then(&h1.propagator(tau)),
            CycleShape::PulseIdeal([dz, dy, dx]) => {
                let z = dz.propagator(tau);
                let y = dy.propagator(tau);
                z.then(&y).then(&dx.propagator(two * tau)).then(&y).then(&z)
            }
            CycleShape::PulseExplicit(dz, pulses) => {
                let z = dz.propagator(tau);
                let zz = dz.propagator(two * tau);
                z.then(&pulses[0])
                    .then(&z)
                    .then(&pulses[1])
                    .then(&zz)
                    .then(&pulses[2])
                    .then(&z)
                    .then(&pulses[3])
                    .then(&z)
            }
        };
        Ok(u)
    }
}

impl<T: Real> CycleBuilder<T> for StorageCycle<T> {
    fn period(&self, tau: T) -> T {
        T::lit(self.kind.period_factor()) * tau
    }

    fn cycle(&self, tau: T) -> Result<Unitary<T>> {
        self.unitary(tau)
    }
}

/// Worst-case numerical health of the unitaries and states seen by a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Hygiene<T: Real> {
    pub max_unitarity_error: T,
    pub max_trace_error: T,
    pub min_eigenvalue: T,
}

impl<T: Real> Default for Hygiene<T> {
    fn default() -> Self {
        Self {
            max_unitarity_error: T::zero(),
            max_trace_error: T::zero(),
            min_eigenvalue: T::one(),
        }
    }
}

impl<T: Real> Hygiene<T> {
    pub fn observe_unitary(&mut self, u: &Unitary<T>) {
        self.max_unitarity_error = self.max_unitarity_error.max(u.unitarity_error());
    }

    pub fn observe_state(&mut self, rho: &DensityMatrix<T>) {
        self.max_trace_error = self.max_trace_error.max(rho.trace_error());
        self.min_eigenvalue = self.min_eigenvalue.min(rho.min_eigenvalue());
    }

    pub fn merge(&mut self, other: &Self) {
        self.max_unitarity_error = self.max_unitarity_error.max(other.max_unitarity_error);
        self.max_trace_error = self.max_trace_error.max(other.max_trace_error);
        self.min_eigenvalue = self.min_eigenvalue.min(other.min_eigenvalue);
    }

    /// All bounds within `1e-10`.
    pub fn is_clean(&self) -> bool {
        let tol = T::lit(1e-10);
        self.max_unitarity_error < tol && self.max_trace_error < tol && self.min_eigenvalue > -tol
    }
}

/// Per-cycle record of a storage run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StorageReport<T: Real> {
    /// Fidelity of the stored state after `k = 1..n` cycles with the state at
    /// the start of storage.
    pub per_cycle_fidelity: Vec<T>,
    /// `distance_to_identity(Vᵏ)` for `k = 1..n`.
    pub per_cycle_identity_distance: Vec<T>,
    pub cycle_period: T,
    pub total_period: T,
    /// Every per-cycle distance is below [`EXACT_TOLERANCE`].
    pub exact_flag: bool,
    /// Comparison before any cycle has run; always 1 up to round-off.
    pub initial_fidelity: T,
    /// Fidelity of the unstored complement before and after storage.
    pub complement_fidelity: Option<T>,
    /// Fidelity of the resumed joint evolution with its ideal counterpart.
    pub resumed_fidelity: Option<T>,
    pub hygiene: Hygiene<T>,
}

impl<T: Real> StorageReport<T> {
    pub fn cycles(&self) -> usize {
        self.per_cycle_fidelity.len()
    }

    pub fn min_fidelity(&self) -> T {
        self.per_cycle_fidelity
            .iter()
            .fold(self.initial_fidelity, |a, &f| a.min(f))
    }

    pub(crate) fn exact_from(distances: &[T]) -> bool {
        distances.iter().all(|&d| d < T::lit(EXACT_TOLERANCE))
    }
}

/// Runs `scheme.cycles` storage cycles on the whole system and compares each
/// stored state with `rho0`. The planar scheme needs `geometry`.
pub fn run_storage<T: Real>(
    couplings: &CouplingMatrix<T>,
    scheme: &ReversalScheme<T>,
    rho0: &DensityMatrix<T>,
    geometry: Option<&Geometry<T>>,
) -> Result<StorageReport<T>> {
    if rho0.n_spins() != couplings.n() {
        return Err(Error::DimensionMismatch {
            expected: couplings.n(),
            found: rho0.n_spins(),
        });
    }
    let cycle = StorageCycle::for_scheme(scheme.kind, scheme.pulse_model, couplings, geometry, |_, _| true)?;
    let v = cycle.unitary(scheme.tau)?;
    let mut hygiene = Hygiene::default();
    hygiene.observe_unitary(&v);
    hygiene.observe_state(rho0);
    let mut power = Unitary::identity(couplings.n());
    let mut rho = rho0.clone();
    let mut fidelities = Vec::with_capacity(scheme.cycles);
    let mut distances = Vec::with_capacity(scheme.cycles);
    for _ in 0..scheme.cycles {
        power = power.then(&v);
        rho = rho.evolve(&v)?;
        hygiene.observe_state(&rho);
        fidelities.push(fidelity(&rho, rho0)?);
        distances.push(distance_to_identity(&power));
    }
    hygiene.observe_unitary(&power);
    let period = scheme.period();
    Ok(StorageReport {
        exact_flag: StorageReport::exact_from(&distances),
        per_cycle_fidelity: fidelities,
        per_cycle_identity_distance: distances,
        cycle_period: period,
        total_period: period * T::lit(scheme.cycles as f64),
        initial_fidelity: fidelity(rho0, rho0)?,
        complement_fidelity: None,
        resumed_fidelity: None,
        hygiene,
    })
}
