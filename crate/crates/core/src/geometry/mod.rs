//! Base manifolds, their cotangent bundles and the quadrature measure on the
//! unit cosphere bundle of the reference metric.
//!
//! Tori use periodic Euclidean coordinates. The round sphere uses ambient unit
//! vectors in R³ with momenta stored as tangent 3-vectors (covectors identified
//! with vectors through the round metric). The projective plane reuses the
//! sphere with `(x, p) ~ (-x, -p)`.

mod grid;
mod icosphere;
mod lift;

pub use grid::{build_grid, BaseCell, CosphereGrid, GridNode, Resolution};
pub use lift::{alpha_pullback_defect, cotangent_lift, cotangent_lift_inverse, Diffeo};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{cross, dot, norm};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelKind {
    FlatTorus,
    RoundSphere2,
    ProjectivePlane2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifoldModel {
    kind: ModelKind,
    dim: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    periods: Vec<f64>,
}

impl ManifoldModel {
    pub fn flat_torus(periods: Vec<f64>) -> Result<Self> {
        if periods.len() < 2 {
            return Err(Error::Unsupported(format!(
                "flat torus needs dimension >= 2, got {}",
                periods.len()
            )));
        }
        if periods.iter().any(|p| !(p.is_finite() && *p > 0.0)) {
            return Err(Error::InvalidArgument("torus periods must be positive".into()));
        }
        Ok(Self {
            kind: ModelKind::FlatTorus,
            dim: periods.len(),
            periods,
        })
    }

    /// The unit-period torus of dimension `n`.
    pub fn unit_torus(n: usize) -> Result<Self> {
        Self::flat_torus(vec![1.0; n])
    }

    pub fn round_sphere() -> Self {
        Self {
            kind: ModelKind::RoundSphere2,
            dim: 2,
            periods: Vec::new(),
        }
    }

    pub fn projective_plane() -> Self {
        Self {
            kind: ModelKind::ProjectivePlane2,
            dim: 2,
            periods: Vec::new(),
        }
    }

    /// Rebuilds a model from its parts, checking the dimension rules.
    pub fn new(kind: ModelKind, dim: usize, periods: Option<Vec<f64>>) -> Result<Self> {
        match kind {
            ModelKind::FlatTorus => Self::flat_torus(periods.unwrap_or_else(|| vec![1.0; dim])),
            _ if dim != 2 => Err(Error::Unsupported(format!(
                "{kind:?} is only implemented in dimension 2"
            ))),
            ModelKind::RoundSphere2 => Ok(Self::round_sphere()),
            ModelKind::ProjectivePlane2 => Ok(Self::projective_plane()),
        }
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn periods(&self) -> &[f64] {
        &self.periods
    }

    pub fn is_spherical(&self) -> bool {
        self.kind != ModelKind::FlatTorus
    }

    /// Number of coordinates used for base points and momenta.
    pub fn ambient_dim(&self) -> usize {
        if self.is_spherical() {
            3
        } else {
            self.dim
        }
    }

    /// Riemannian volume of the reference metric.
    pub fn volume(&self) -> f64 {
        match self.kind {
            ModelKind::FlatTorus => self.periods.iter().product(),
            ModelKind::RoundSphere2 => 4.0 * std::f64::consts::PI,
            ModelKind::ProjectivePlane2 => 2.0 * std::f64::consts::PI,
        }
    }

    /// V(U) = vol(M) * eps_n, the symplectic volume of the unit codisc bundle.
    pub fn model_body_volume(&self) -> f64 {
        self.volume() * euclidean_ball_volume(self.dim)
    }

    /// Period of the unit-speed geodesic flow of the round metric.
    pub fn round_flow_period(&self) -> Option<f64> {
        match self.kind {
            ModelKind::FlatTorus => None,
            ModelKind::RoundSphere2 => Some(2.0 * std::f64::consts::PI),
            ModelKind::ProjectivePlane2 => Some(std::f64::consts::PI),
        }
    }

    /// Canonical representative: reduced mod periods on tori, a unit vector on the
    /// sphere, and additionally the sign-normalised vector on the projective plane.
    pub fn canonical_base(&self, x: &[f64]) -> Vec<f64> {
        match self.kind {
            ModelKind::FlatTorus => x
                .iter()
                .zip(&self.periods)
                .map(|(v, p)| v.rem_euclid(*p))
                .collect(),
            ModelKind::RoundSphere2 => {
                let n = norm(x);
                x.iter().map(|v| v / n).collect()
            }
            ModelKind::ProjectivePlane2 => {
                let n = norm(x);
                let sign = x
                    .iter()
                    .find(|v| **v != 0.0)
                    .map(|v| v.signum())
                    .unwrap_or(1.0);
                x.iter().map(|v| sign * v / n).collect()
            }
        }
    }

    /// A random base point: uniform on tori, uniform on the sphere (canonical on RP²).
    pub fn sample_base(&self, rng: &mut impl Rng) -> Vec<f64> {
        if self.is_spherical() {
            let v: Vec<f64> = (0..3).map(|_| rng.sample(StandardNormal)).collect();
            self.canonical_base(&v)
        } else {
            self.periods.iter().map(|p| rng.gen::<f64>() * p).collect()
        }
    }

    /// A random unit tangent vector at `x`.
    pub fn sample_unit_tangent(&self, x: &[f64], rng: &mut impl Rng) -> Vec<f64> {
        let v: Vec<f64> = (0..self.ambient_dim()).map(|_| rng.sample(StandardNormal)).collect();
        crate::numerics::normalize(&self.project_tangent(x, &v))
    }

    /// Canonical representative of a phase point; on RP² a flipped base flips the momentum too.
    pub fn canonical_point(&self, z: &CotangentPoint) -> CotangentPoint {
        let base = self.canonical_base(&z.base);
        let flipped = self.kind == ModelKind::ProjectivePlane2 && dot(&base, &z.base) < 0.0;
        CotangentPoint {
            base,
            momentum: if flipped {
                z.momentum.iter().map(|v| -v).collect()
            } else {
                z.momentum.clone()
            },
        }
    }

    /// Orthonormal basis of the tangent space at `x`, in ambient coordinates.
    pub fn tangent_basis(&self, x: &[f64]) -> Vec<Vec<f64>> {
        if !self.is_spherical() {
            return (0..self.dim)
                .map(|i| (0..self.dim).map(|j| f64::from(u8::from(i == j))).collect())
                .collect();
        }
        let xs = crate::numerics::normalize(x);
        let axis = (0..3)
            .min_by(|&a, &b| xs[a].abs().total_cmp(&xs[b].abs()))
            .unwrap();
        let mut e = [0.0; 3];
        e[axis] = 1.0;
        let d = dot(&e, &xs);
        let e1: Vec<f64> = (0..3).map(|i| e[i] - d * xs[i]).collect();
        let e1 = crate::numerics::normalize(&e1);
        let e2 = cross(&xs, &e1).to_vec();
        vec![e1, e2]
    }

    /// Removes the normal component of a vector at `x` (identity on tori).
    pub fn project_tangent(&self, x: &[f64], v: &[f64]) -> Vec<f64> {
        if !self.is_spherical() {
            return v.to_vec();
        }
        let xx = dot(x, x);
        let d = dot(x, v) / xx;
        v.iter().zip(x).map(|(vi, xi)| vi - d * xi).collect()
    }

    /// Reference (flat or round) norm of a momentum.
    pub fn momentum_norm(&self, p: &[f64]) -> f64 {
        norm(p)
    }

    /// Validated cotangent point.
    pub fn point(&self, base: Vec<f64>, momentum: Vec<f64>) -> Result<CotangentPoint> {
        let n = self.ambient_dim();
        if base.len() != n || momentum.len() != n {
            return Err(Error::InvalidArgument(format!(
                "expected {n} base and momentum coordinates"
            )));
        }
        if base.iter().chain(&momentum).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite coordinate".into()));
        }
        if self.is_spherical() {
            if (norm(&base) - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidArgument("sphere point must be a unit vector".into()));
            }
            if dot(&base, &momentum).abs() > 1e-10 {
                return Err(Error::InvalidArgument(
                    "sphere momentum must be tangent to the base point".into(),
                ));
            }
            Ok(CotangentPoint { base, momentum })
        } else {
            Ok(CotangentPoint {
                base: self.canonical_base(&base),
                momentum,
            })
        }
    }

    /// Distance between two phase points modulo the model's identifications.
    pub fn phase_gap(&self, a: &CotangentPoint, b: &CotangentPoint) -> f64 {
        let plain = |sign: f64| -> f64 {
            let mut s = 0.0;
            for (i, (u, v)) in a.base.iter().zip(&b.base).enumerate() {
                let mut d = u - sign * v;
                if let Some(p) = self.periods.get(i) {
                    d -= p * (d / p).round();
                }
                s += d * d;
            }
            for (u, v) in a.momentum.iter().zip(&b.momentum) {
                s += (u - sign * v).powi(2);
            }
            s.sqrt()
        };
        match self.kind {
            ModelKind::ProjectivePlane2 => plain(1.0).min(plain(-1.0)),
            _ => plain(1.0),
        }
    }
}

/// A covector over a base point, in the model's ambient coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CotangentPoint {
    pub base: Vec<f64>,
    pub momentum: Vec<f64>,
}

impl CotangentPoint {
    /// Fibre dilation `p -> t p`.
    pub fn scaled(&self, t: f64) -> Self {
        Self {
            base: self.base.clone(),
            momentum: self.momentum.iter().map(|v| t * v).collect(),
        }
    }

    pub fn antipode(&self) -> Self {
        Self {
            base: self.base.iter().map(|v| -v).collect(),
            momentum: self.momentum.iter().map(|v| -v).collect(),
        }
    }
}

/// Volume of the Euclidean unit ball of dimension `k` (eps_0 = 1).
pub fn euclidean_ball_volume(k: usize) -> f64 {
    let mut even = 1.0;
    let mut odd = 2.0;
    for j in 2..=k {
        let next = 2.0 * std::f64::consts::PI / j as f64;
        if j % 2 == 0 {
            even *= next;
        } else {
            odd *= next;
        }
    }
    if k.is_multiple_of(2) {
        even
    } else {
        odd
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn ball_volumes() {
        assert_eq!(euclidean_ball_volume(1), 2.0);
        assert!((euclidean_ball_volume(2) - PI).abs() < 1e-15);
        assert!((euclidean_ball_volume(3) - 4.0 * PI / 3.0).abs() < 1e-15);
        assert!((euclidean_ball_volume(4) - PI * PI / 2.0).abs() < 1e-14);
        assert!((euclidean_ball_volume(5) - 8.0 * PI * PI / 15.0).abs() < 1e-14);
        assert_eq!(euclidean_ball_volume(0), 1.0);
    }

    #[test]
    fn model_rules() {
        assert!(ManifoldModel::unit_torus(1).is_err());
        assert!(ManifoldModel::flat_torus(vec![1.0, -1.0]).is_err());
        assert!(ManifoldModel::new(ModelKind::RoundSphere2, 3, None).is_err());
        let t = ManifoldModel::flat_torus(vec![2.0, 3.0]).unwrap();
        assert_eq!(t.volume(), 6.0);
        assert_eq!(t.canonical_base(&[2.5, -1.0]), vec![0.5, 2.0]);
        let rp2 = ManifoldModel::projective_plane();
        assert_eq!(rp2.canonical_base(&[0.0, -2.0, 0.0]), vec![0.0, 1.0, 0.0]);
        assert_eq!(rp2.canonical_base(&[-3.0, 0.0, 4.0]), vec![0.6, -0.0, -0.8]);
    }

    #[test]
    fn sphere_points_are_validated() {
        let s = ManifoldModel::round_sphere();
        assert!(s.point(vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]).is_ok());
        assert!(s.point(vec![1.1, 0.0, 0.0], vec![0.0, 1.0, 0.0]).is_err());
        assert!(s.point(vec![1.0, 0.0, 0.0], vec![1e-6, 1.0, 0.0]).is_err());
    }

    #[test]
    fn tangent_basis_is_orthonormal() {
        let s = ManifoldModel::round_sphere();
        for x in [[1.0, 0.0, 0.0], [0.0, 0.6, 0.8], [0.48, -0.6, 0.64]] {
            let b = s.tangent_basis(&x);
            assert!(dot(&b[0], &x).abs() < 1e-14 && dot(&b[1], &x).abs() < 1e-14);
            assert!(dot(&b[0], &b[1]).abs() < 1e-14);
            assert!((norm(&b[0]) - 1.0).abs() < 1e-14 && (norm(&b[1]) - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn projective_gap_identifies_antipodes() {
        let rp2 = ManifoldModel::projective_plane();
        let z = rp2.point(vec![0.0, 0.0, 1.0], vec![1.0, 0.0, 0.0]).unwrap();
        assert!(rp2.phase_gap(&z, &z.antipode()) < 1e-15);
        let s2 = ManifoldModel::round_sphere();
        assert!((s2.phase_gap(&z, &z.antipode()) - 8f64.sqrt()).abs() < 1e-14);
        let t = ManifoldModel::unit_torus(2).unwrap();
        let a = CotangentPoint { base: vec![0.01, 0.5], momentum: vec![1.0, 0.0] };
        let b = CotangentPoint { base: vec![0.99, 0.5], momentum: vec![1.0, 0.0] };
        assert!((t.phase_gap(&a, &b) - 0.02).abs() < 1e-14);
    }
}
