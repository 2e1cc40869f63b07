// SPDX-License-Identifier: Apache-2.0

//! Spin geometries and orientation-dependent dipolar coupling constants.
//!
//! Units are natural: distances in lattice spacings, couplings in angular
//! frequency with ħ = 1. The overall prefactor `g` stands for γ²ħ/2 of the
//! reference species; each site carries its gyromagnetic ratio as a
//! dimensionless multiple of that reference, so a pair couples with
//! `g·γ_i·γ_j·(1 − 3cos²θ_ij)/r_ij³`.

use nalgebra::{DMatrix, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpinSite<T: Real> {
    pub position: Vector3<T>,
    pub gamma: T,
}

impl<T: Real> SpinSite<T> {
    pub fn new(position: Vector3<T>, gamma: T) -> Result<Self> {
        if !position.iter().all(|x| x.is_finite()) {
            return Err(Error::InvalidArgument("site position must be finite".into()));
        }
        if !(gamma > T::zero()) || !gamma.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "gyromagnetic ratio must be positive, got {}",
                gamma.as_f64()
            )));
        }
        Ok(Self { position, gamma })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dimensionality {
    Chain,
    Planar,
    General,
}

/// Orthonormal frame of a chain or planar geometry.
///
/// `first` is the in-plane direction used as field orientation 1 of the
/// three-orientation protocol, `second` the perpendicular in-plane direction
/// and `normal` the plane normal. For the built-in chain and lattice these are
/// the x axis (first lattice axis), the y axis and the z axis.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlaneFrame<T: Real> {
    pub first: Vector3<T>,
    pub second: Vector3<T>,
    pub normal: Vector3<T>,
}

impl<T: Real> PlaneFrame<T> {
    fn canonical() -> Self {
        Self {
            first: Vector3::x(),
            second: Vector3::y(),
            normal: Vector3::z(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Geometry<T: Real> {
    sites: Vec<SpinSite<T>>,
    dimensionality: Dimensionality,
    frame: Option<PlaneFrame<T>>,
}

fn relative_tolerance<T: Real>(scale: T) -> T {
    T::lit(1e-9) * (scale + T::one())
}

impl<T: Real> Geometry<T> {
    /// Validates the site list against the dimensionality tag.
    ///
    /// For chain and planar geometries the plane frame is inferred from the
    /// sites: `first` points from site 0 to the first distinct site, `normal`
    /// is taken from the first non-collinear site (or chosen perpendicular to
    /// `first`, preferring the z axis, when all sites are collinear).
    pub fn new(sites: Vec<SpinSite<T>>, dimensionality: Dimensionality) -> Result<Self> {
        let mut geometry = Self {
            sites,
            dimensionality,
            frame: None,
        };
        geometry.validate()?;
        if dimensionality != Dimensionality::General {
            geometry.frame = Some(geometry.infer_frame());
        }
        Ok(geometry)
    }

    fn with_frame(sites: Vec<SpinSite<T>>, dimensionality: Dimensionality, frame: PlaneFrame<T>) -> Result<Self> {
        let geometry = Self {
            sites,
            dimensionality,
            frame: Some(frame),
        };
        geometry.validate()?;
        Ok(geometry)
    }

    fn validate(&self) -> Result<()> {
        if self.sites.is_empty() {
            return Err(Error::InvalidGeometry("geometry needs at least one site".into()));
        }
        for (i, a) in self.sites.iter().enumerate() {
            for (j, b) in self.sites.iter().enumerate().skip(i + 1) {
                if (a.position - b.position).norm() <= T::zero() {
                    return Err(Error::DegenerateGeometry(i, j));
                }
            }
        }
        match self.dimensionality {
            Dimensionality::Chain if !self.is_collinear() => {
                Err(Error::InvalidGeometry("chain geometry has non-collinear sites".into()))
            }
            Dimensionality::Planar if !self.is_coplanar() => {
                Err(Error::InvalidGeometry("planar geometry has non-coplanar sites".into()))
            }
            _ => Ok(()),
        }
    }

    fn extent(&self) -> T {
        let origin = self.sites[0].position;
        self.sites
            .iter()
            .map(|s| (s.position - origin).norm())
            .fold(T::zero(), |a, b| a.max(b))
    }

    fn first_direction(&self) -> Option<Vector3<T>> {
        let origin = self.sites[0].position;
        self.sites
            .iter()
            .map(|s| s.position - origin)
            .find(|d| d.norm() > T::zero())
            .map(|d| d.normalize())
    }

    fn first_normal(&self) -> Option<Vector3<T>> {
        let origin = self.sites[0].position;
        let first = self.first_direction()?;
        let tol = relative_tolerance(self.extent());
        self.sites
            .iter()
            .map(|s| first.cross(&(s.position - origin)))
            .find(|n| n.norm() > tol)
            .map(|n| n.normalize())
    }

    pub fn is_collinear(&self) -> bool {
        self.first_normal().is_none()
    }

    pub fn is_coplanar(&self) -> bool {
        let Some(normal) = self.first_normal() else {
            return true;
        };
        let origin = self.sites[0].position;
        let tol = relative_tolerance(self.extent());
        self.sites
            .iter()
            .all(|s| normal.dot(&(s.position - origin)).abs() <= tol)
    }

    fn infer_frame(&self) -> PlaneFrame<T> {
        let Some(first) = self.first_direction() else {
            return PlaneFrame::canonical();
        };
        let normal = self.first_normal().unwrap_or_else(|| {
            let candidates = [Vector3::z(), Vector3::y(), Vector3::x()];
            let pick = candidates
                .iter()
                .find(|c| first.dot(c).abs() < T::lit(0.9))
                .copied()
                .unwrap_or_else(Vector3::z);
            (pick - first * first.dot(&pick)).normalize()
        });
        PlaneFrame {
            first,
            second: normal.cross(&first),
            normal,
        }
    }

    pub fn sites(&self) -> &[SpinSite<T>] {
        &self.sites
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn dimensionality(&self) -> Dimensionality {
        self.dimensionality
    }

    /// Plane frame for chain and planar geometries, `None` for general ones.
    pub fn frame(&self) -> Option<&PlaneFrame<T>> {
        self.frame.as_ref()
    }

    pub fn gammas(&self) -> Vec<T> {
        self.sites.iter().map(|s| s.gamma).collect()
    }

    pub fn with_gammas(mut self, gammas: &[T]) -> Result<Self> {
        if gammas.len() != self.sites.len() {
            return Err(Error::DimensionMismatch {
                expected: self.sites.len(),
                found: gammas.len(),
            });
        }
        for (site, &gamma) in self.sites.iter_mut().zip(gammas) {
            *site = SpinSite::new(site.position, gamma)?;
        }
        Ok(self)
    }

    /// Multiplies every position by `factor`.
    pub fn scaled(&self, factor: T) -> Result<Self> {
        if !(factor > T::zero()) {
            return Err(Error::InvalidArgument("scale factor must be positive".into()));
        }
        let mut out = self.clone();
        for site in &mut out.sites {
            site.position *= factor;
        }
        Ok(out)
    }

    /// Sub-geometry made of the listed sites, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let sites = indices
            .iter()
            .map(|&i| {
                self.sites
                    .get(i)
                    .cloned()
                    .ok_or_else(|| Error::InvalidArgument(format!("site {i} out of range for {} sites", self.len())))
            })
            .collect::<Result<Vec<_>>>()?;
        match &self.frame {
            Some(frame) => Self::with_frame(sites, self.dimensionality, frame.clone()),
            None => Self::new(sites, self.dimensionality),
        }
    }

    pub fn distance(&self, i: usize, j: usize) -> T {
        (self.sites[i].position - self.sites[j].position).norm()
    }

    /// All pairwise distances `r_ij`, `i < j`, in row-major pair order.
    pub fn pair_distances(&self) -> Vec<T> {
        let n = self.len();
        (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .map(|(i, j)| self.distance(i, j))
            .collect()
    }
}

/// `n` sites along the x axis at positions `k·spacing`, unit gyromagnetic ratio.
pub fn build_chain<T: Real>(n: usize, spacing: T) -> Result<Geometry<T>> {
    if n == 0 {
        return Err(Error::InvalidArgument("chain needs at least one site".into()));
    }
    if !(spacing > T::zero()) || !spacing.is_finite() {
        return Err(Error::InvalidArgument("chain spacing must be positive".into()));
    }
    let sites = (0..n)
        .map(|k| SpinSite::new(Vector3::new(T::lit(k as f64) * spacing, T::zero(), T::zero()), T::one()))
        .collect::<Result<Vec<_>>>()?;
    Geometry::with_frame(sites, Dimensionality::Chain, PlaneFrame::canonical())
}

/// `rows × cols` rectangular grid in the xy plane; columns run along x, which
/// is the first lattice axis. Sites are ordered row by row.
pub fn build_lattice<T: Real>(rows: usize, cols: usize, spacing: T) -> Result<Geometry<T>> {
    if rows == 0 || cols == 0 {
        return Err(Error::InvalidArgument("lattice dimensions must be nonzero".into()));
    }
    if !(spacing > T::zero()) || !spacing.is_finite() {
        return Err(Error::InvalidArgument("lattice spacing must be positive".into()));
    }
    let mut sites = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            sites.push(SpinSite::new(
                Vector3::new(T::lit(c as f64) * spacing, T::lit(r as f64) * spacing, T::zero()),
                T::one(),
            )?);
        }
    }
    Geometry::with_frame(sites, Dimensionality::Planar, PlaneFrame::canonical())
}

/// Unit vector along the static magnetic field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FieldOrientation<T: Real> {
    direction: Vector3<T>,
}

impl<T: Real> FieldOrientation<T> {
    /// Normalizes `direction`; zero or non-finite vectors are rejected.
    pub fn new(direction: Vector3<T>) -> Result<Self> {
        let norm = direction.norm();
        if !(norm > T::zero()) || !norm.is_finite() {
            return Err(Error::InvalidArgument(
                "field direction must be a nonzero finite vector".into(),
            ));
        }
        Ok(Self {
            direction: direction / norm,
        })
    }

    pub fn along_x() -> Self {
        Self {
            direction: Vector3::x(),
        }
    }

    pub fn along_y() -> Self {
        Self {
            direction: Vector3::y(),
        }
    }

    pub fn along_z() -> Self {
        Self {
            direction: Vector3::z(),
        }
    }

    /// Polar angle `theta` from +z and azimuth `phi` from +x.
    pub fn from_angles(theta: T, phi: T) -> Self {
        let (st, ct) = theta.sin_cos();
        let (sp, cp) = phi.sin_cos();
        Self {
            direction: Vector3::new(st * cp, st * sp, ct),
        }
    }

    pub fn direction(&self) -> &Vector3<T> {
        &self.direction
    }
}

/// Symmetric matrix of pairwise dipolar constants `D_ij`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CouplingMatrix<T: Real> {
    values: DMatrix<T>,
    prefactor: T,
    gammas: Vec<T>,
}

impl<T: Real> CouplingMatrix<T> {
    pub fn new(values: DMatrix<T>, prefactor: T, gammas: Vec<T>) -> Result<Self> {
        let n = values.nrows();
        if values.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: values.ncols(),
            });
        }
        if gammas.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: gammas.len(),
            });
        }
        if !(prefactor > T::zero()) {
            return Err(Error::InvalidArgument("coupling prefactor must be positive".into()));
        }
        if gammas.iter().any(|&g| !(g > T::zero())) {
            return Err(Error::InvalidArgument("gyromagnetic ratios must be positive".into()));
        }
        for i in 0..n {
            if values[(i, i)] != T::zero() {
                return Err(Error::InvalidArgument(format!("nonzero diagonal coupling at site {i}")));
            }
            for j in 0..n {
                let v = values[(i, j)];
                if !v.is_finite() {
                    return Err(Error::InvalidArgument(format!("coupling ({i}, {j}) is not finite")));
                }
                if v != values[(j, i)] {
                    return Err(Error::InvalidArgument(format!(
                        "coupling matrix not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(Self {
            values,
            prefactor,
            gammas,
        })
    }

    /// Homonuclear couplings with unit prefactor.
    pub fn from_values(values: DMatrix<T>) -> Result<Self> {
        let n = values.nrows();
        Self::new(values, T::one(), vec![T::one(); n])
    }

    /// Builds a matrix from `(i, j, D)` pair entries on `n` sites.
    pub fn from_pairs(n: usize, pairs: &[(usize, usize, T)]) -> Result<Self> {
        let mut values = DMatrix::zeros(n, n);
        for &(i, j, d) in pairs {
            if i >= n || j >= n || i == j {
                return Err(Error::InvalidArgument(format!("invalid pair ({i}, {j}) for {n} sites")));
            }
            values[(i, j)] = d;
            values[(j, i)] = d;
        }
        Self::from_values(values)
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.values[(i, j)]
    }

    pub fn values(&self) -> &DMatrix<T> {
        &self.values
    }

    pub fn prefactor(&self) -> T {
        self.prefactor
    }

    pub fn gammas(&self) -> &[T] {
        &self.gammas
    }

    pub fn is_heteronuclear(&self, i: usize, j: usize) -> bool {
        self.gammas[i] != self.gammas[j]
    }

    /// Pairs `(i, j, D_ij)` with `i < j` and nonzero coupling.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize, T)> + '_ {
        let n = self.n();
        (0..n)
            .flat_map(move |i| (i + 1..n).map(move |j| (i, j)))
            .map(|(i, j)| (i, j, self.values[(i, j)]))
            .filter(|&(_, _, d)| d != T::zero())
    }

    pub fn scaled(&self, factor: T) -> Self {
        Self {
            values: &self.values * factor,
            ..self.clone()
        }
    }

    /// Zeroes every pair for which `keep(i, j)` is false.
    pub fn retain_pairs(&self, mut keep: impl FnMut(usize, usize) -> bool) -> Self {
        let mut out = self.clone();
        let n = self.n();
        for i in 0..n {
            for j in 0..n {
                if i != j && !keep(i.min(j), i.max(j)) {
                    out.values[(i, j)] = T::zero();
                }
            }
        }
        out
    }

    /// Couplings restricted to the listed sites, renumbered in the given order.
    pub fn restricted(&self, sites: &[usize]) -> Result<Self> {
        if let Some(&bad) = sites.iter().find(|&&s| s >= self.n()) {
            return Err(Error::InvalidArgument(format!("site {bad} out of range")));
        }
        let m = sites.len();
        let values = DMatrix::from_fn(m, m, |a, b| self.values[(sites[a], sites[b])]);
        let gammas = sites.iter().map(|&s| self.gammas[s]).collect();
        Self::new(values, self.prefactor, gammas)
    }

    /// Largest elementwise absolute difference.
    pub fn max_abs_diff(&self, other: &Self) -> T {
        (&self.values - &other.values).amax()
    }
}

/// `D_ij = g·γ_i·γ_j·(1 − 3cos²θ_ij)/r_ij³` for every pair of `geometry`.
pub fn dipolar_couplings<T: Real>(
    geometry: &Geometry<T>,
    field: &FieldOrientation<T>,
    g: T,
) -> Result<CouplingMatrix<T>> {
    if !(g > T::zero()) {
        return Err(Error::InvalidArgument("coupling prefactor g must be positive".into()));
    }
    let n = geometry.len();
    let sites = geometry.sites();
    let three = T::lit(3.0);
    let mut values = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            let r = sites[j].position - sites[i].position;
            let dist = r.norm();
            if !(dist > T::zero()) {
                return Err(Error::DegenerateGeometry(i, j));
            }
            let cos = r.dot(field.direction()) / dist;
            let d = g * sites[i].gamma * sites[j].gamma * (T::one() - three * cos * cos) / (dist * dist * dist);
            values[(i, j)] = d;
            values[(j, i)] = d;
        }
    }
    CouplingMatrix::new(values, g, geometry.gammas())
}

/// Couplings for the three field orientations of the planar reversal
/// protocol: field along the first in-plane axis, along the second in-plane
/// axis, and along the plane normal. Elementwise they sum to zero.
pub fn three_orientation_couplings<T: Real>(
    geometry: &Geometry<T>,
    g: T,
) -> Result<(CouplingMatrix<T>, CouplingMatrix<T>, CouplingMatrix<T>)> {
    let frame = match (geometry.dimensionality(), geometry.frame()) {
        (Dimensionality::Chain | Dimensionality::Planar, Some(frame)) => frame,
        _ => {
            return Err(Error::InvalidGeometry(
                "three-orientation couplings need a chain or planar geometry".into(),
            ))
        }
    };
    let d1 = dipolar_couplings(geometry, &FieldOrientation::new(frame.first)?, g)?;
    let d2 = dipolar_couplings(geometry, &FieldOrientation::new(frame.second)?, g)?;
    let d3 = dipolar_couplings(geometry, &FieldOrientation::new(frame.normal)?, g)?;
    Ok((d1, d2, d3))
}
