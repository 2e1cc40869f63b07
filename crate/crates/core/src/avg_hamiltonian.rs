// SPDX-License-Identifier: Apache-2.0

//! Average-Hamiltonian (Magnus) terms of periodic schedules and empirical
//! error-scaling fits of storage cycles.
//!
//! Conventions, with segment 1 earliest and `T = Σ τ_k`:
//!
//! - zeroth order: `H̄⁰ = (1/T) Σ_k H_k τ_k`
//! - first order: `H̄¹ = (−i/2T) Σ_{k>l} [H_k τ_k, H_l τ_l]`
//!
//! so that one period propagates as `exp(−iT(H̄⁰ + H̄¹ + …))`. Schedules with
//! pulses are first mapped to their toggling frame.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::evolution::{distance_to_identity, frobenius_distance_to_identity, Schedule, Unitary};
use crate::operators::HermitianOperator;
use crate::scalar::{ci, Real};
use crate::spin_system::CouplingMatrix;

/// Distances below this are treated as round-off and left out of slope fits.
pub const FIT_FLOOR: f64 = 1e-13;

#[derive(Debug, Clone)]
pub struct MagnusTerms<T: Real> {
    pub zeroth: HermitianOperator<T>,
    pub first: HermitianOperator<T>,
}

fn toggled_segments<T: Real>(schedule: &Schedule<T>) -> Result<(Schedule<T>, T)> {
    if schedule.segments().is_empty() {
        return Err(Error::InvalidArgument(
            "average Hamiltonian of an empty schedule".into(),
        ));
    }
    let period = schedule.period();
    if !(period > T::zero()) {
        return Err(Error::InvalidArgument("schedule period must be positive".into()));
    }
    let toggled = if schedule.pulses().is_empty() {
        schedule.clone()
    } else {
        schedule.toggling_frame().0
    };
    Ok((toggled, period))
}

/// `(1/T) Σ_k H_k τ_k`.
pub fn zeroth_order<T: Real>(schedule: &Schedule<T>) -> Result<HermitianOperator<T>> {
    let (toggled, period) = toggled_segments(schedule)?;
    let mut sum = HermitianOperator::zeros(schedule.n_spins());
    for seg in toggled.segments() {
        sum += &seg.hamiltonian.scaled(seg.duration);
    }
    Ok(sum.scaled(T::one() / period))
}

/// `(−i/2T) Σ_{k>l} [H_k τ_k, H_l τ_l]`, accumulated against the running
/// prefix sum so the cost is linear in the number of segments.
pub fn first_order<T: Real>(schedule: &Schedule<T>) -> Result<HermitianOperator<T>> {
    let (toggled, period) = toggled_segments(schedule)?;
    let n = schedule.n_spins();
    let dim = 1usize << n;
    let mut prefix = HermitianOperator::zeros(n);
    let mut acc = nalgebra::DMatrix::zeros(dim, dim);
    for seg in toggled.segments() {
        let weighted = seg.hamiltonian.scaled(seg.duration);
        acc += weighted.commutator(&prefix);
        prefix += &weighted;
    }
    let scale = ci(-T::one() / (T::lit(2.0) * period));
    HermitianOperator::from_matrix(n, acc * scale)
}

pub fn magnus_terms<T: Real>(schedule: &Schedule<T>) -> Result<MagnusTerms<T>> {
    Ok(MagnusTerms {
        zeroth: zeroth_order(schedule)?,
        first: first_order(schedule)?,
    })
}

/// Characteristic dipolar frequency `ω_loc`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LocalField<T: Real> {
    pub omega_loc: T,
}

/// Root-mean-square coupling per site, `√((1/n) Σ_i Σ_{j≠i} D_ij²)`.
pub fn local_field<T: Real>(couplings: &CouplingMatrix<T>) -> LocalField<T> {
    let n = couplings.n();
    let sum_sq = couplings.values().iter().fold(T::zero(), |acc, &d| acc + d * d);
    LocalField {
        omega_loc: (sum_sq / T::lit(n.max(1) as f64)).sqrt(),
    }
}

/// A periodic protocol parametrized by its base interval `τ`.
pub trait CycleBuilder<T: Real>: Sync {
    /// Period `T(τ)` of one cycle.
    fn period(&self, tau: T) -> T;

    /// Propagator of one cycle.
    fn cycle(&self, tau: T) -> Result<Unitary<T>>;
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingPoint<T: Real> {
    pub tau: T,
    pub period: T,
    /// `1 − |Tr V|/dim`.
    pub distance: T,
    /// `√(2·distance)`, the phase-minimized Frobenius distance; this is the
    /// fitted quantity since it is linear in the residual generator.
    pub frobenius: T,
    /// `T·ω_loc`.
    pub small_parameter: T,
}

/// Least-squares fit of `log(frobenius distance)` against `log τ`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingFit<T: Real> {
    pub points: Vec<ScalingPoint<T>>,
    pub slope: Option<T>,
    pub intercept: Option<T>,
    pub r_squared: Option<T>,
    /// All distances sit below the round-off floor: the cycle is the identity.
    pub exact: bool,
    /// Indices of points with `T·ω_loc ≥ 1`.
    pub regime_violations: Vec<usize>,
    pub omega_loc: T,
}

impl<T: Real> ScalingFit<T> {
    pub fn taus(&self) -> Vec<T> {
        self.points.iter().map(|p| p.tau).collect()
    }

    pub fn distances(&self) -> Vec<T> {
        self.points.iter().map(|p| p.distance).collect()
    }

    pub fn max_distance(&self) -> T {
        self.points.iter().fold(T::zero(), |a, p| a.max(p.distance))
    }

    pub fn in_regime(&self) -> bool {
        self.regime_violations.is_empty()
    }
}

/// Unweighted least squares `y = slope·x + intercept`; also returns R².
pub fn linear_fit<T: Real>(xs: &[T], ys: &[T]) -> Option<(T, T, T)> {
    let n = xs.len();
    if n < 2 || ys.len() != n {
        return None;
    }
    let nf = T::lit(n as f64);
    let mx = xs.iter().fold(T::zero(), |a, &x| a + x) / nf;
    let my = ys.iter().fold(T::zero(), |a, &y| a + y) / nf;
    let (mut sxx, mut sxy, mut syy) = (T::zero(), T::zero(), T::zero());
    for (&x, &y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    if !(sxx > T::zero()) {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy > T::zero() {
        sxy * sxy / (sxx * syy)
    } else {
        T::one()
    };
    Some((slope, intercept, r2))
}

/// Sweeps `taus`, measures the identity distance of each cycle and fits the
/// log-log slope. Requires at least three strictly increasing `τ` spanning a
/// decade; points outside `T·ω_loc < 1` are reported in `regime_violations`.
pub fn error_scaling_probe<T: Real, B: CycleBuilder<T> + ?Sized>(
    builder: &B,
    taus: &[T],
    omega_loc: LocalField<T>,
) -> Result<ScalingFit<T>> {
    if taus.len() < 3 {
        return Err(Error::InvalidArgument(
            "scaling probe needs at least three tau values".into(),
        ));
    }
    if taus.iter().any(|&t| !(t > T::zero())) {
        return Err(Error::InvalidArgument("tau values must be positive".into()));
    }
    if taus.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgument("tau values must be strictly increasing".into()));
    }
    if taus[taus.len() - 1] < taus[0] * T::lit(10.0) {
        return Err(Error::InvalidArgument("tau sweep must span at least one decade".into()));
    }
    let points = taus
        .par_iter()
        .map(|&tau| {
            let u = builder.cycle(tau)?;
            let period = builder.period(tau);
            Ok(ScalingPoint {
                tau,
                period,
                distance: distance_to_identity(&u),
                frobenius: frobenius_distance_to_identity(&u),
                small_parameter: period * omega_loc.omega_loc,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let regime_violations = points
        .iter()
        .enumerate()
        .filter(|(_, p)| !(p.small_parameter < T::one()))
        .map(|(i, _)| i)
        .collect();
    let usable: Vec<&ScalingPoint<T>> = points.iter().filter(|p| p.distance >= T::lit(FIT_FLOOR)).collect();
    let xs: Vec<T> = usable.iter().map(|p| p.tau.ln()).collect();
    let ys: Vec<T> = usable.iter().map(|p| p.frobenius.ln()).collect();
    let fit = linear_fit(&xs, &ys);
    Ok(ScalingFit {
        exact: usable.is_empty(),
        slope: fit.map(|f| f.0),
        intercept: fit.map(|f| f.1),
        r_squared: fit.map(|f| f.2),
        points,
        regime_violations,
        omega_loc: omega_loc.omega_loc,
    })
}

/// `τ` values geometrically spaced from `lo` to `hi` inclusive.
pub fn geometric_taus<T: Real>(lo: T, hi: T, count: usize) -> Vec<T> {
    if count < 2 {
        return vec![lo];
    }
    let ratio = (hi / lo).ln() / T::lit((count - 1) as f64);
    (0..count).map(|k| lo * (ratio * T::lit(k as f64)).exp()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evolution::{compose_schedule, expm_hermitian};
    use crate::operators::{dipolar_hamiltonian, HamiltonianKind};
    use crate::spin_system::{build_lattice, dipolar_couplings, FieldOrientation};
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;
    use std::sync::Arc;

    fn hdz(couplings: &CouplingMatrix<f64>) -> HermitianOperator<f64> {
        dipolar_hamiltonian(couplings, HamiltonianKind::Dz, false).unwrap()
    }

    fn lattice_couplings(field: FieldOrientation<f64>) -> CouplingMatrix<f64> {
        dipolar_couplings(&build_lattice(2, 2, 1.0).unwrap(), &field, 1.0).unwrap()
    }

    #[test]
    fn zeroth_order_examples() {
        let h = Arc::new(hdz(&lattice_couplings(FieldOrientation::along_x())));
        let single = Schedule::new(4).segment(Arc::clone(&h), 0.3).unwrap();
        assert!(zeroth_order(&single).unwrap().max_abs_diff(&h) < 1e-14);
        let pair = single.segment(Arc::new(-h.as_ref()), 0.3).unwrap();
        assert!(zeroth_order(&pair).unwrap().max_abs() < 1e-14);
        assert!(zeroth_order(&Schedule::<f64>::new(2)).is_err());
    }

    #[test]
    fn zeroth_order_is_time_weighted() {
        let a = Arc::new(hdz(&lattice_couplings(FieldOrientation::along_x())));
        let b = Arc::new(hdz(&lattice_couplings(FieldOrientation::along_y())));
        let s1 = Schedule::new(4).segment(Arc::clone(&a), 0.2).unwrap();
        let s2 = Schedule::new(4).segment(Arc::clone(&b), 0.6).unwrap();
        let joined = zeroth_order(&s1.concat(&s2).unwrap()).unwrap();
        let expected = &(a.as_ref() * 0.25) + &(b.as_ref() * 0.75);
        assert!(joined.max_abs_diff(&expected) < 1e-14);
    }

    #[test]
    fn commuting_segments_have_no_first_order() {
        let h = hdz(&lattice_couplings(FieldOrientation::along_z()));
        let s = Schedule::new(4)
            .segment(Arc::new(h.clone()), 0.3)
            .unwrap()
            .segment(Arc::new(h.scaled(-0.4)), 0.7)
            .unwrap();
        assert!(first_order(&s).unwrap().max_abs() < 1e-14);
    }

    #[test]
    fn first_order_flips_under_time_reversal() {
        let a = Arc::new(hdz(&lattice_couplings(FieldOrientation::along_x())));
        let b = Arc::new(hdz(&lattice_couplings(FieldOrientation::along_y())));
        let c = Arc::new(hdz(&lattice_couplings(FieldOrientation::from_angles(0.3, 0.2))));
        let s = Schedule::new(4)
            .segment(a, 0.1)
            .unwrap()
            .segment(b, 0.25)
            .unwrap()
            .segment(c, 0.15)
            .unwrap();
        let fwd = first_order(&s).unwrap();
        let back = first_order(&s.time_reversed()).unwrap();
        assert!(fwd.max_abs() > 1e-3);
        assert!((&fwd + &back).max_abs() < 1e-14);
    }

    #[test]
    fn first_order_tracks_composed_unitary() {
        // two segments: compose ≈ exp(−iT(H̄⁰+H̄¹)) with a residual O(τ³)
        let h1 = Arc::new(hdz(&lattice_couplings(FieldOrientation::along_x())));
        let h2 = Arc::new(hdz(&lattice_couplings(FieldOrientation::from_angles(0.4, 1.1))));
        let residual = |tau: f64| {
            let s = Schedule::new(4)
                .segment(Arc::clone(&h1), tau)
                .unwrap()
                .segment(Arc::clone(&h2), tau)
                .unwrap();
            let terms = magnus_terms(&s).unwrap();
            let approx_u = expm_hermitian(&(&terms.zeroth + &terms.first), s.period());
            compose_schedule(&s).unwrap().max_abs_diff(&approx_u)
        };
        let (big, small) = (residual(0.02), residual(0.01));
        let order = (big / small).log2();
        assert!((order - 3.0).abs() < 0.15, "observed order {order}");
    }

    #[test]
    fn local_field_examples() {
        let one = CouplingMatrix::<f64>::from_values(DMatrix::zeros(1, 1)).unwrap();
        assert_eq!(local_field(&one).omega_loc, 0.0);
        let pair = CouplingMatrix::from_pairs(2, &[(0, 1, -1.7)]).unwrap();
        assert_abs_diff_eq!(local_field(&pair).omega_loc, 1.7, epsilon = 1e-15);
        let lattice = lattice_couplings(FieldOrientation::along_x());
        let base = local_field(&lattice).omega_loc;
        assert_abs_diff_eq!(
            local_field(&lattice.scaled(-3.0)).omega_loc,
            3.0 * base,
            epsilon = 1e-14
        );
    }

    #[test]
    fn linear_fit_recovers_line() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys = [1.0, 3.0, 5.0, 7.0];
        let (m, b, r2) = linear_fit(&xs, &ys).unwrap();
        assert_abs_diff_eq!(m, 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(b, 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(r2, 1.0, epsilon = 1e-14);
        assert!(linear_fit(&[1.0], &[1.0]).is_none());
    }

    struct Scaled(f64);
    impl CycleBuilder<f64> for Scaled {
        fn period(&self, tau: f64) -> f64 {
            tau
        }
        fn cycle(&self, tau: f64) -> Result<Unitary<f64>> {
            let h = hdz(&CouplingMatrix::from_pairs(2, &[(0, 1, 1.0)]).unwrap());
            Ok(expm_hermitian(&h, self.0 * tau * tau))
        }
    }

    #[test]
    fn probe_validates_and_fits() {
        let lf = LocalField { omega_loc: 1.0 };
        let b = Scaled(1.0);
        assert!(error_scaling_probe(&b, &[0.1, 0.2], lf).is_err());
        assert!(error_scaling_probe(&b, &[0.1, 0.3, 0.2], lf).is_err());
        assert!(error_scaling_probe(&b, &[0.1, 0.2, 0.5], lf).is_err());
        let fit = error_scaling_probe(&b, &geometric_taus(0.01, 0.1, 5), lf).unwrap();
        assert_abs_diff_eq!(fit.slope.unwrap(), 2.0, epsilon = 1e-4);
        assert!(fit.in_regime());
        let exact = error_scaling_probe(&Scaled(0.0), &[0.01, 0.05, 0.1], lf).unwrap();
        assert!(exact.exact && exact.slope.is_none());
        let wide = error_scaling_probe(&b, &[0.1, 1.0, 2.0], lf).unwrap();
        assert_eq!(wide.regime_violations, vec![1, 2]);
    }
}
