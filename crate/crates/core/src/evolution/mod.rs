// SPDX-License-Identifier: Apache-2.0

//! Exact propagation under piecewise-constant Hamiltonian schedules.
//!
//! Exponentials are taken through the spectral decomposition of the
//! Hermitian generator, so every propagator is unitary to round-off. A
//! [`Schedule`] lists segments in chronological order; the composed unitary
//! has the earliest factor rightmost.

mod state;

use std::sync::Arc;

use nalgebra::{ComplexField, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operators::{check_spin_count, matmul, max_abs, Axis, HermitianOperator};
use crate::scalar::{c, ci, Real, C};

pub use state::{evolve_density, fidelity, partial_trace, DensityMatrix};

/// Dense unitary on `n_spins` spin-1/2 sites.
#[derive(Debug, Clone, PartialEq)]
pub struct Unitary<T: Real> {
    n_spins: usize,
    matrix: DMatrix<C<T>>,
}

impl<T: Real> Unitary<T> {
    pub fn identity(n_spins: usize) -> Self {
        let dim = 1usize << n_spins;
        Self {
            n_spins,
            matrix: DMatrix::identity(dim, dim),
        }
    }

    /// Accepts `matrix` if `‖U U† − I‖_max < 1e-10`.
    pub fn from_matrix(n_spins: usize, matrix: DMatrix<C<T>>) -> Result<Self> {
        check_spin_count(n_spins)?;
        let dim = 1usize << n_spins;
        if matrix.nrows() != dim || matrix.ncols() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: matrix.nrows(),
            });
        }
        let u = Self { n_spins, matrix };
        let err = u.unitarity_error();
        if !(err < T::lit(1e-10)) {
            return Err(Error::NotUnitary(err.as_f64()));
        }
        Ok(u)
    }

    pub(crate) fn from_matrix_unchecked(n_spins: usize, matrix: DMatrix<C<T>>) -> Self {
        Self { n_spins, matrix }
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

    pub fn adjoint(&self) -> Self {
        Self {
            n_spins: self.n_spins,
            matrix: self.matrix.adjoint(),
        }
    }

    /// `later · self`: apply `self` first, then `later`.
    pub fn then(&self, later: &Self) -> Self {
        assert_eq!(self.n_spins, later.n_spins, "unitaries act on different spin counts");
        Self {
            n_spins: self.n_spins,
            matrix: matmul(&later.matrix, &self.matrix),
        }
    }

    /// `self^k` by repeated squaring.
    pub fn pow(&self, mut k: usize) -> Self {
        let mut result = Self::identity(self.n_spins);
        let mut base = self.clone();
        while k > 0 {
            if k & 1 == 1 {
                result.matrix = matmul(&result.matrix, &base.matrix);
            }
            k >>= 1;
            if k > 0 {
                base.matrix = matmul(&base.matrix, &base.matrix);
            }
        }
        result
    }

    /// `‖U U† − I‖_max`.
    pub fn unitarity_error(&self) -> T {
        let dim = self.dim();
        max_abs(&(matmul(&self.matrix, &self.matrix.adjoint()) - DMatrix::identity(dim, dim)))
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        max_abs(&(&self.matrix - &other.matrix))
    }

    /// `U H U†`.
    pub fn conjugate(&self, h: &HermitianOperator<T>) -> HermitianOperator<T> {
        let m = matmul(&matmul(&self.matrix, h.matrix()), &self.matrix.adjoint());
        HermitianOperator::symmetrized(self.n_spins, m)
    }
}

impl<T: Real> std::ops::Mul for &Unitary<T> {
    type Output = Unitary<T>;
    fn mul(self, rhs: Self) -> Unitary<T> {
        rhs.then(self)
    }
}

/// Eigendecomposition `H = V diag(λ) V†` of a Hermitian operator.
#[derive(Debug, Clone)]
pub struct Spectrum<T: Real> {
    n_spins: usize,
    eigenvalues: DVector<T>,
    eigenvectors: DMatrix<C<T>>,
}

impl<T: Real> Spectrum<T> {
    pub fn new(h: &HermitianOperator<T>) -> Self {
        let eig = h.matrix().clone().symmetric_eigen();
        Self {
            n_spins: h.n_spins(),
            eigenvalues: eig.eigenvalues,
            eigenvectors: eig.eigenvectors,
        }
    }

    pub fn eigenvalues(&self) -> &DVector<T> {
        &self.eigenvalues
    }

    /// `exp(−i H t)`.
    pub fn propagator(&self, t: T) -> Unitary<T> {
        let v = &self.eigenvectors;
        let mut scaled = v.clone();
        for (k, &lambda) in self.eigenvalues.iter().enumerate() {
            let (s, co) = (lambda * t).sin_cos();
            let phase = C::new(co, -s);
            for x in scaled.column_mut(k).iter_mut() {
                *x *= phase;
            }
        }
        Unitary::from_matrix_unchecked(self.n_spins, matmul(&scaled, &v.adjoint()))
    }
}

/// `exp(−i H t)` via spectral decomposition.
pub fn expm_hermitian<T: Real>(h: &HermitianOperator<T>, t: T) -> Unitary<T> {
    if t == T::zero() {
        return Unitary::identity(h.n_spins());
    }
    Spectrum::new(h).propagator(t)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PulseAxis {
    X,
    Y,
}

impl PulseAxis {
    pub fn axis(self) -> Axis {
        match self {
            PulseAxis::X => Axis::X,
            PulseAxis::Y => Axis::Y,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn value<T: Real>(self) -> T {
        match self {
            Sign::Plus => T::one(),
            Sign::Minus => -T::one(),
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Sign::Plus => Sign::Minus,
            Sign::Minus => Sign::Plus,
        }
    }
}

/// Instantaneous global rotation `exp(−i·sign·angle·Σ_k I_{axis,k})`.
///
/// `placement` is the index of the segment the pulse precedes; a placement
/// equal to the segment count puts the pulse after the last segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PulseEvent<T: Real> {
    pub axis: PulseAxis,
    pub angle: T,
    pub sign: Sign,
    pub placement: usize,
}

impl<T: Real> PulseEvent<T> {
    pub fn new(axis: PulseAxis, angle: T, sign: Sign, placement: usize) -> Result<Self> {
        if !angle.is_finite() {
            return Err(Error::InvalidArgument("pulse angle must be finite".into()));
        }
        Ok(Self {
            axis,
            angle,
            sign,
            placement,
        })
    }

    /// `(π/2)` pulse about `±axis`.
    pub fn quarter(axis: PulseAxis, sign: Sign, placement: usize) -> Self {
        Self {
            axis,
            angle: T::frac_pi_2(),
            sign,
            placement,
        }
    }
}

/// Single-spin `exp(−i θ I_axis) = cos(θ/2)·1 − i·sin(θ/2)·σ_axis`.
fn single_rotation<T: Real>(axis: PulseAxis, theta: T) -> DMatrix<C<T>> {
    let (s, co) = (theta * T::lit(0.5)).sin_cos();
    match axis {
        PulseAxis::X => DMatrix::from_row_slice(2, 2, &[c(co), ci(-s), ci(-s), c(co)]),
        PulseAxis::Y => DMatrix::from_row_slice(2, 2, &[c(co), c(-s), c(s), c(co)]),
    }
}

/// Global rotation as a tensor power of the single-spin rotation.
pub fn pulse_rotation<T: Real>(n_spins: usize, pulse: &PulseEvent<T>) -> Unitary<T> {
    let single = single_rotation(pulse.axis, pulse.sign.value::<T>() * pulse.angle);
    let mut m = DMatrix::<C<T>>::identity(1, 1);
    for _ in 0..n_spins {
        m = m.kronecker(&single);
    }
    Unitary::from_matrix_unchecked(n_spins, m)
}

/// `R H R†` with `R` the pulse rotation.
pub fn toggle_conjugate<T: Real>(h: &HermitianOperator<T>, pulse: &PulseEvent<T>) -> HermitianOperator<T> {
    pulse_rotation(h.n_spins(), pulse).conjugate(h)
}

#[derive(Debug, Clone)]
pub struct ScheduleSegment<T: Real> {
    pub hamiltonian: Arc<HermitianOperator<T>>,
    pub duration: T,
}

/// Ordered piecewise-constant segments plus instantaneous pulses.
#[derive(Debug, Clone)]
pub struct Schedule<T: Real> {
    n_spins: usize,
    segments: Vec<ScheduleSegment<T>>,
    pulses: Vec<PulseEvent<T>>,
}

impl<T: Real> Schedule<T> {
    pub fn new(n_spins: usize) -> Self {
        Self {
            n_spins,
            segments: Vec::new(),
            pulses: Vec::new(),
        }
    }

    pub fn segment(mut self, hamiltonian: Arc<HermitianOperator<T>>, duration: T) -> Result<Self> {
        self.push_segment(hamiltonian, duration)?;
        Ok(self)
    }

    pub fn push_segment(&mut self, hamiltonian: Arc<HermitianOperator<T>>, duration: T) -> Result<()> {
        if hamiltonian.n_spins() != self.n_spins {
            return Err(Error::InvalidSchedule(format!(
                "segment acts on {} spins, schedule on {}",
                hamiltonian.n_spins(),
                self.n_spins
            )));
        }
        if !(duration >= T::zero()) || !duration.is_finite() {
            return Err(Error::InvalidSchedule("segment duration must be nonnegative".into()));
        }
        self.segments.push(ScheduleSegment { hamiltonian, duration });
        Ok(())
    }

    /// Appends a pulse right after the segments pushed so far.
    pub fn pulse(mut self, axis: PulseAxis, angle: T, sign: Sign) -> Result<Self> {
        let event = PulseEvent::new(axis, angle, sign, self.segments.len())?;
        self.pulses.push(event);
        Ok(self)
    }

    pub fn push_pulse(&mut self, pulse: PulseEvent<T>) -> Result<()> {
        if pulse.placement > self.segments.len() {
            return Err(Error::InvalidSchedule(format!(
                "pulse placement {} beyond {} segments",
                pulse.placement,
                self.segments.len()
            )));
        }
        self.pulses.push(pulse);
        Ok(())
    }

    pub fn n_spins(&self) -> usize {
        self.n_spins
    }

    pub fn segments(&self) -> &[ScheduleSegment<T>] {
        &self.segments
    }

    pub fn pulses(&self) -> &[PulseEvent<T>] {
        &self.pulses
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty() && self.pulses.is_empty()
    }

    /// Period `T`, the sum of segment durations.
    pub fn period(&self) -> T {
        self.segments.iter().fold(T::zero(), |acc, s| acc + s.duration)
    }

    fn pulses_at(&self, placement: usize) -> impl Iterator<Item = &PulseEvent<T>> {
        self.pulses.iter().filter(move |p| p.placement == placement)
    }

    /// Segments run backwards in time with negated Hamiltonians; composes to
    /// the adjoint of this schedule. Pulses are reversed with flipped sign.
    pub fn reversed_negated(&self) -> Self {
        let k = self.segments.len();
        let segments = self
            .segments
            .iter()
            .rev()
            .map(|s| ScheduleSegment {
                hamiltonian: Arc::new(-s.hamiltonian.as_ref()),
                duration: s.duration,
            })
            .collect();
        let mut pulses: Vec<_> = self
            .pulses
            .iter()
            .rev()
            .map(|p| PulseEvent {
                sign: p.sign.flipped(),
                placement: k - p.placement,
                ..*p
            })
            .collect();
        pulses.sort_by_key(|p| p.placement);
        Self {
            n_spins: self.n_spins,
            segments,
            pulses,
        }
    }

    /// Segments in reverse chronological order, Hamiltonians unchanged.
    pub fn time_reversed(&self) -> Self {
        Self {
            n_spins: self.n_spins,
            segments: self.segments.iter().rev().cloned().collect(),
            pulses: Vec::new(),
        }
    }

    /// `self` followed by `other`.
    pub fn concat(&self, other: &Self) -> Result<Self> {
        if self.n_spins != other.n_spins {
            return Err(Error::InvalidSchedule(
                "cannot concatenate schedules of different sizes".into(),
            ));
        }
        let k = self.segments.len();
        let mut out = self.clone();
        out.segments.extend(other.segments.iter().cloned());
        out.pulses.extend(other.pulses.iter().map(|p| PulseEvent {
            placement: p.placement + k,
            ..*p
        }));
        Ok(out)
    }

    /// Pulse-free schedule in the toggling frame plus the net pulse rotation.
    ///
    /// With `Q_k` the product of all pulses preceding segment `k`, segment `k`
    /// becomes `Q_k† H_k Q_k`, and the lab-frame propagator equals
    /// `Q_final · compose(toggled)`.
    pub fn toggling_frame(&self) -> (Self, Unitary<T>) {
        let mut frame = Unitary::identity(self.n_spins);
        let mut toggled = Self::new(self.n_spins);
        for (k, seg) in self.segments.iter().enumerate() {
            for p in self.pulses_at(k) {
                frame = frame.then(&pulse_rotation(self.n_spins, p));
            }
            let h = if self.pulses.iter().any(|p| p.placement <= k) {
                Arc::new(frame.adjoint().conjugate(&seg.hamiltonian))
            } else {
                Arc::clone(&seg.hamiltonian)
            };
            toggled.segments.push(ScheduleSegment {
                hamiltonian: h,
                duration: seg.duration,
            });
        }
        for p in self.pulses_at(self.segments.len()) {
            frame = frame.then(&pulse_rotation(self.n_spins, p));
        }
        (toggled, frame)
    }
}

/// Chronological product of segment exponentials and pulse rotations.
///
/// Spectra are cached per distinct Hamiltonian (by `Arc` identity), so
/// repeated segments cost one eigendecomposition.
pub fn compose_schedule<T: Real>(schedule: &Schedule<T>) -> Result<Unitary<T>> {
    if schedule.is_empty() {
        return Err(Error::InvalidSchedule("schedule has no segments".into()));
    }
    let n = schedule.n_spins;
    let mut cache: Vec<(Arc<HermitianOperator<T>>, Spectrum<T>)> = Vec::new();
    let mut u = Unitary::identity(n);
    for (k, seg) in schedule.segments.iter().enumerate() {
        for p in schedule.pulses_at(k) {
            u = u.then(&pulse_rotation(n, p));
        }
        if seg.duration == T::zero() {
            continue;
        }
        let idx = match cache.iter().position(|(h, _)| Arc::ptr_eq(h, &seg.hamiltonian)) {
            Some(i) => i,
            None => {
                cache.push((Arc::clone(&seg.hamiltonian), Spectrum::new(&seg.hamiltonian)));
                cache.len() - 1
            }
        };
        u = u.then(&cache[idx].1.propagator(seg.duration));
    }
    for p in schedule.pulses_at(schedule.segments.len()) {
        u = u.then(&pulse_rotation(n, p));
    }
    Ok(u)
}

/// Global-phase-invariant distance `1 − |Tr U| / dim`, in `[0, 1]`.
pub fn distance_to_identity<T: Real>(u: &Unitary<T>) -> T {
    let overlap = u.matrix().trace().modulus() / T::lit(u.dim() as f64);
    (T::one() - overlap).max(T::zero())
}

/// `min_φ ‖U − e^{iφ} I‖_F / √dim = √(2·d(U))`.
///
/// Unlike [`distance_to_identity`], which is quadratic in a small residual
/// generator, this distance is linear in it.
pub fn frobenius_distance_to_identity<T: Real>(u: &Unitary<T>) -> T {
    (T::lit(2.0) * distance_to_identity(u)).sqrt()
}
