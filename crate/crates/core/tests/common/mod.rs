// SPDX-License-Identifier: Apache-2.0

//! Brute-force two-spin references written out by hand, sharing no code with
//! the library beyond nalgebra's dense types.

#![allow(dead_code)]

use nalgebra::{DMatrix, SymmetricEigen};
pub type Complex64 = nalgebra::Complex<f64>;

pub type M = DMatrix<Complex64>;

pub fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

pub fn ci(im: f64) -> Complex64 {
    Complex64::new(0.0, im)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Ax {
    X,
    Y,
    Z,
}

pub fn pauli(a: Ax) -> M {
    let z = c(0.0);
    match a {
        Ax::X => M::from_row_slice(2, 2, &[z, c(1.0), c(1.0), z]),
        Ax::Y => M::from_row_slice(2, 2, &[z, ci(-1.0), ci(1.0), z]),
        Ax::Z => M::from_row_slice(2, 2, &[c(1.0), z, z, c(-1.0)]),
    }
}

pub fn kron(a: &M, b: &M) -> M {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    M::from_fn(ar * br, ac * bc, |i, j| a[(i / br, j / bc)] * b[(i % br, j % bc)])
}

/// `I_a ⊗ I_a` for two spins, with `I = σ/2`.
pub fn pair(a: Ax) -> M {
    kron(&pauli(a), &pauli(a)) * c(0.25)
}

/// `d (2 I_a I_a − I_b I_b − I_c I_c)` for two spins.
pub fn dipolar_pair(d: f64, a: Ax) -> M {
    let all = [Ax::X, Ax::Y, Ax::Z];
    let mut h = pair(a) * c(3.0);
    for b in all {
        h -= pair(b);
    }
    h * c(d)
}

/// Total `I_x` of two spins.
pub fn zeeman_x() -> M {
    let id = M::identity(2, 2);
    (kron(&pauli(Ax::X), &id) + kron(&id, &pauli(Ax::X))) * c(0.5)
}

/// `g (1 − 3cos²θ) / r³` for unit gyromagnetic ratios.
pub fn coupling(g: f64, r: f64, cos_theta: f64) -> f64 {
    g * (1.0 - 3.0 * cos_theta * cos_theta) / (r * r * r)
}

/// `exp(−i h t)` for real symmetric `h`, by diagonalizing it directly.
pub fn expm_real(h: &M, t: f64) -> M {
    let im = h.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
    assert!(im < 1e-15, "oracle exponential expects a real matrix");
    let eig = SymmetricEigen::new(h.map(|z| z.re));
    let v = eig.eigenvectors.map(c);
    let phases = M::from_diagonal(&eig.eigenvalues.map(|e| Complex64::from_polar(1.0, -e * t)));
    &v * phases * v.transpose()
}

/// Global rotation `exp(−i θ (I_a¹ + I_a²))` for two spins.
pub fn rotation(a: Ax, theta: f64) -> M {
    let (s, co) = (theta / 2.0).sin_cos();
    let single = M::identity(2, 2) * c(co) - pauli(a) * ci(s);
    kron(&single, &single)
}

pub fn adjoint(m: &M) -> M {
    m.adjoint()
}

pub fn max_abs(m: &M) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn max_diff(a: &M, b: &M) -> f64 {
    max_abs(&(a - b))
}

pub fn commutator(a: &M, b: &M) -> M {
    a * b - b * a
}

/// One step of a lab-frame schedule.
#[derive(Clone, Debug)]
pub enum Step {
    Free(M, f64),
    Pulse(Ax, f64),
}

/// Chronological product, later steps multiplied on the left.
pub fn propagate(steps: &[Step]) -> M {
    let mut u = M::identity(4, 4);
    for s in steps {
        let step = match s {
            Step::Free(h, t) => expm_real(h, *t),
            Step::Pulse(a, theta) => rotation(*a, *theta),
        };
        u = step * u;
    }
    u
}

/// Free segments seen from the frame of the pulses applied so far:
/// `Q† H Q` with `Q` the running pulse product.
pub fn toggled(steps: &[Step]) -> Vec<(M, f64)> {
    let mut q = M::identity(4, 4);
    let mut out = Vec::new();
    for s in steps {
        match s {
            Step::Pulse(a, theta) => q = rotation(*a, *theta) * q,
            Step::Free(h, t) => out.push((adjoint(&q) * h * &q, *t)),
        }
    }
    out
}

/// `(1/T) Σ H_k τ_k` over the toggled segments.
pub fn zeroth(segments: &[(M, f64)]) -> M {
    let period: f64 = segments.iter().map(|s| s.1).sum();
    let mut sum = M::zeros(4, 4);
    for (h, t) in segments {
        sum += h * c(*t);
    }
    sum * c(1.0 / period)
}

/// `(−i/2T) Σ_{k>l} [H_k τ_k, H_l τ_l]`, summed pair by pair.
pub fn first(segments: &[(M, f64)]) -> M {
    let period: f64 = segments.iter().map(|s| s.1).sum();
    let mut sum = M::zeros(4, 4);
    for k in 0..segments.len() {
        for l in 0..k {
            let hk = &segments[k].0 * c(segments[k].1);
            let hl = &segments[l].0 * c(segments[l].1);
            sum += commutator(&hk, &hl);
        }
    }
    sum * ci(-1.0 / (2.0 * period))
}

/// Pulse storage cycle with explicit π/2 pulses: free `H_dz` windows
/// `τ, τ, 2τ, τ, τ` with pulses `−x, −y, +y, +x` before windows 2 to 5.
pub fn pulse_cycle_steps(d: f64, tau: f64) -> Vec<Step> {
    let h = dipolar_pair(d, Ax::Z);
    let q = std::f64::consts::FRAC_PI_2;
    vec![
        Step::Free(h.clone(), tau),
        Step::Pulse(Ax::X, -q),
        Step::Free(h.clone(), tau),
        Step::Pulse(Ax::Y, -q),
        Step::Free(h.clone(), 2.0 * tau),
        Step::Pulse(Ax::Y, q),
        Step::Free(h.clone(), tau),
        Step::Pulse(Ax::X, q),
        Step::Free(h, tau),
    ]
}

/// `1 − |Tr U| / 4`.
pub fn identity_distance(u: &M) -> f64 {
    (1.0 - u.trace().norm() / 4.0).max(0.0)
}
