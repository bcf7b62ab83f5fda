use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use super::{CotangentPoint, ManifoldModel};
use crate::error::{Error, Result};
use crate::numerics::dot;

type PointMap = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
type JacobianFn = Arc<dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync>;

const SINGULAR_DET: f64 = 1e-10;

/// A diffeomorphism of the base, given by its forward and inverse maps and an
/// optional closed-form Jacobian (central differences otherwise).
///
/// On the sphere the maps act on ambient unit vectors and the Jacobian is the
/// ambient 3×3 derivative of any extension; only its action on tangent planes is used.
#[derive(Clone)]
pub struct Diffeo {
    model: ManifoldModel,
    forward: PointMap,
    inverse: PointMap,
    jacobian: Option<JacobianFn>,
}

impl std::fmt::Debug for Diffeo {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Diffeo")
            .field("model", &self.model)
            .field("closed_form_jacobian", &self.jacobian.is_some())
            .finish()
    }
}

impl Diffeo {
    pub fn new(
        model: ManifoldModel,
        forward: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
        inverse: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            model,
            forward: Arc::new(forward),
            inverse: Arc::new(inverse),
            jacobian: None,
        }
    }

    pub fn with_jacobian(
        mut self,
        jacobian: impl Fn(&[f64]) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        self.jacobian = Some(Arc::new(jacobian));
        self
    }

    pub fn identity(model: &ManifoldModel) -> Self {
        let n = model.ambient_dim();
        Self::new(model.clone(), |x| x.to_vec(), |x| x.to_vec())
            .with_jacobian(move |_| DMatrix::identity(n, n))
    }

    /// Torus translation `x -> x + shift`.
    pub fn translation(model: &ManifoldModel, shift: Vec<f64>) -> Result<Self> {
        if model.is_spherical() || shift.len() != model.dim() {
            return Err(Error::Unsupported("translations act on flat tori only".into()));
        }
        let n = shift.len();
        let back = shift.clone();
        Ok(Self::new(
            model.clone(),
            move |x| x.iter().zip(&shift).map(|(a, b)| a + b).collect(),
            move |x| x.iter().zip(&back).map(|(a, b)| a - b).collect(),
        )
        .with_jacobian(move |_| DMatrix::identity(n, n)))
    }

    /// Torus shear `x₁ -> x₁ + amplitude * sin(2π x₂ / T₂)`.
    pub fn shear(model: &ManifoldModel, amplitude: f64) -> Result<Self> {
        if model.is_spherical() {
            return Err(Error::Unsupported("shears act on flat tori only".into()));
        }
        let n = model.dim();
        let k = 2.0 * std::f64::consts::PI / model.periods()[1];
        Ok(Self::new(
            model.clone(),
            move |x| {
                let mut y = x.to_vec();
                y[0] += amplitude * (k * x[1]).sin();
                y
            },
            move |x| {
                let mut y = x.to_vec();
                y[0] -= amplitude * (k * x[1]).sin();
                y
            },
        )
        .with_jacobian(move |x| {
            let mut j = DMatrix::identity(n, n);
            j[(0, 1)] = amplitude * k * (k * x[1]).cos();
            j
        }))
    }

    /// Rotation of the sphere (or projective plane) by an orthogonal matrix.
    pub fn rotation(model: &ManifoldModel, r: [[f64; 3]; 3]) -> Result<Self> {
        if !model.is_spherical() {
            return Err(Error::Unsupported("rotations act on the sphere models only".into()));
        }
        let m = DMatrix::from_fn(3, 3, |i, j| r[i][j]);
        let mt = m.transpose();
        let (mf, mi, mj) = (m.clone(), mt.clone(), m);
        Ok(Self::new(
            model.clone(),
            move |x| (&mf * DVector::from_column_slice(x)).as_slice().to_vec(),
            move |x| (&mi * DVector::from_column_slice(x)).as_slice().to_vec(),
        )
        .with_jacobian(move |_| mj.clone()))
    }

    pub fn model(&self) -> &ManifoldModel {
        &self.model
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        (self.forward)(x)
    }

    pub fn inverse(&self, x: &[f64]) -> Vec<f64> {
        (self.inverse)(x)
    }

    /// Ambient Jacobian of the forward map.
    pub fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        if let Some(j) = &self.jacobian {
            return j(x);
        }
        let n = x.len();
        let h = 1e-6;
        let mut jac = DMatrix::zeros(n, n);
        let mut xp = x.to_vec();
        for c in 0..n {
            xp[c] = x[c] + h;
            let fp = self.forward(&xp);
            xp[c] = x[c] - h;
            let fm = self.forward(&xp);
            xp[c] = x[c];
            for r in 0..n {
                jac[(r, c)] = (fp[r] - fm[r]) / (2.0 * h);
            }
        }
        jac
    }

    /// Tangent-plane restriction of the Jacobian in the models' orthonormal frames:
    /// entry (i, j) is f_i · J e_j with e at `x` and f at `phi(x)`.
    fn frame_jacobian(&self, x: &[f64], y: &[f64]) -> (DMatrix<f64>, Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let jac = self.jacobian(x);
        let e = self.model.tangent_basis(x);
        let f = self.model.tangent_basis(y);
        let n = e.len();
        let a = DMatrix::from_fn(n, n, |i, j| {
            let je = &jac * DVector::from_column_slice(&e[j]);
            dot(&f[i], je.as_slice())
        });
        (a, e, f)
    }
}

fn check_det(a: &DMatrix<f64>) -> Result<()> {
    let det = a.determinant();
    if det.abs() < SINGULAR_DET || !det.is_finite() {
        return Err(Error::SingularJacobian { det });
    }
    Ok(())
}

/// The canonical lift `(x, p) -> (phi(x), p ∘ Dphi(x)^{-1})`.
pub fn cotangent_lift(phi: &Diffeo, z: &CotangentPoint) -> Result<CotangentPoint> {
    let model = phi.model();
    let y_raw = phi.forward(&z.base);
    let y = model.canonical_base(&y_raw);
    let (a, e, f) = phi.frame_jacobian(&z.base, &y_raw);
    check_det(&a)?;
    // q = Σ cᵢ fᵢ with Σᵢ cᵢ A_ij = p · e_j
    let pe = DVector::from_iterator(e.len(), e.iter().map(|ej| dot(&z.momentum, ej)));
    let c = a
        .transpose()
        .lu()
        .solve(&pe)
        .ok_or(Error::SingularJacobian { det: 0.0 })?;
    let mut q = vec![0.0; model.ambient_dim()];
    for (ci, fi) in c.iter().zip(&f) {
        for (qk, fk) in q.iter_mut().zip(fi) {
            *qk += ci * fk;
        }
    }
    if model.is_spherical() && y != y_raw {
        // projective sign normalisation flips the covector with the base
        let s = if dot(&y, &y_raw) < 0.0 { -1.0 } else { 1.0 };
        q.iter_mut().for_each(|v| *v *= s);
    }
    Ok(CotangentPoint { base: y, momentum: q })
}

/// Inverse of [`cotangent_lift`]: `(y, q) -> (x, q ∘ Dphi(x))` with `x = phi^{-1}(y)`.
pub fn cotangent_lift_inverse(phi: &Diffeo, w: &CotangentPoint) -> Result<CotangentPoint> {
    let model = phi.model();
    let x_raw = phi.inverse(&w.base);
    let y_image = phi.forward(&x_raw);
    let (a, e, f) = phi.frame_jacobian(&x_raw, &y_image);
    check_det(&a)?;
    // the frame at phi(x) may differ from w.base by a period (tori) or a sign (RP²)
    let sign = if model.is_spherical() && dot(&y_image, &w.base) < 0.0 { -1.0 } else { 1.0 };
    let qf: Vec<f64> = f.iter().map(|fi| sign * dot(&w.momentum, fi)).collect();
    let mut p = vec![0.0; model.ambient_dim()];
    for (j, ej) in e.iter().enumerate() {
        let pj: f64 = (0..qf.len()).map(|i| qf[i] * a[(i, j)]).sum();
        for (pk, ek) in p.iter_mut().zip(ej) {
            *pk += pj * ek;
        }
    }
    let x = model.canonical_base(&x_raw);
    if model.is_spherical() && x != x_raw {
        let s = if dot(&x, &x_raw) < 0.0 { -1.0 } else { 1.0 };
        p.iter_mut().for_each(|v| *v *= s);
    }
    Ok(CotangentPoint { base: x, momentum: p })
}

/// |α(Dφ̂ ξ) − α(ξ)| for a tangent vector ξ with base part `dx`, where the
/// push-forward of `dx` is taken by central differences of the forward map.
/// The momentum part of ξ is irrelevant because α only sees base directions.
pub fn alpha_pullback_defect(phi: &Diffeo, z: &CotangentPoint, dx: &[f64], h: f64) -> Result<f64> {
    let model = phi.model();
    let lifted = cotangent_lift(phi, z)?;
    let plus: Vec<f64> = z.base.iter().zip(dx).map(|(x, d)| x + h * d).collect();
    let minus: Vec<f64> = z.base.iter().zip(dx).map(|(x, d)| x - h * d).collect();
    let (fp, fm) = (phi.forward(&plus), phi.forward(&minus));
    let mut push: Vec<f64> = fp.iter().zip(&fm).map(|(a, b)| (a - b) / (2.0 * h)).collect();
    if model.is_spherical() {
        let y = phi.forward(&z.base);
        if dot(&y, &lifted.base) < 0.0 {
            push.iter_mut().for_each(|v| *v = -*v);
        }
    }
    let before = dot(&z.momentum, dx);
    let after = dot(&lifted.momentum, &push);
    Ok((after - before).abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn torus() -> ManifoldModel {
        ManifoldModel::unit_torus(2).unwrap()
    }

    #[test]
    fn identity_and_translation() {
        let t = torus();
        let z = CotangentPoint { base: vec![0.2, 0.7], momentum: vec![0.3, -1.1] };
        assert_eq!(cotangent_lift(&Diffeo::identity(&t), &z).unwrap(), z);
        let tr = Diffeo::translation(&t, vec![0.5, 0.6]).unwrap();
        let w = cotangent_lift(&tr, &z).unwrap();
        assert_eq!(w.momentum, z.momentum);
        assert!((w.base[0] - 0.7).abs() < 1e-15 && (w.base[1] - 0.3).abs() < 1e-15);
    }

    #[test]
    fn shear_preserves_the_canonical_form() {
        let t = torus();
        let shear = Diffeo::shear(&t, 0.1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let z = CotangentPoint {
                base: vec![rng.gen(), rng.gen()],
                momentum: vec![rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)],
            };
            let dx = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            assert!(alpha_pullback_defect(&shear, &z, &dx, 1e-5).unwrap() < 1e-8);
            let back = cotangent_lift_inverse(&shear, &cotangent_lift(&shear, &z).unwrap()).unwrap();
            assert!(t.phase_gap(&back, &z) < 1e-12);
        }
    }

    #[test]
    fn finite_difference_jacobian_matches_closed_form() {
        let t = torus();
        let closed = Diffeo::shear(&t, 0.1).unwrap();
        let fd = Diffeo::new(
            t.clone(),
            |x| vec![x[0] + 0.1 * (2.0 * std::f64::consts::PI * x[1]).sin(), x[1]],
            |x| vec![x[0] - 0.1 * (2.0 * std::f64::consts::PI * x[1]).sin(), x[1]],
        );
        let z = CotangentPoint { base: vec![0.4, 0.9], momentum: vec![1.0, 2.0] };
        let a = cotangent_lift(&closed, &z).unwrap();
        let b = cotangent_lift(&fd, &z).unwrap();
        assert!(t.phase_gap(&a, &b) < 1e-8);
    }

    #[test]
    fn singular_jacobian_is_rejected() {
        let t = torus();
        let squash = Diffeo::new(t, |x| vec![x[0], 0.0], |x| x.to_vec());
        let z = CotangentPoint { base: vec![0.1, 0.2], momentum: vec![1.0, 0.0] };
        assert!(matches!(cotangent_lift(&squash, &z), Err(Error::SingularJacobian { .. })));
    }

    #[test]
    fn rotations_on_the_sphere() {
        let s = ManifoldModel::round_sphere();
        let r = [[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]];
        let rot = Diffeo::rotation(&s, r).unwrap();
        let z = s.point(vec![1.0, 0.0, 0.0], vec![0.0, 0.3, 0.4]).unwrap();
        let w = cotangent_lift(&rot, &z).unwrap();
        assert!(s.phase_gap(&w, &CotangentPoint { base: vec![0.0, 1.0, 0.0], momentum: vec![-0.3, 0.0, 0.4] }) < 1e-14);
        let back = cotangent_lift_inverse(&rot, &w).unwrap();
        assert!(s.phase_gap(&back, &z) < 1e-14);
        assert!(alpha_pullback_defect(&rot, &z, &[0.0, 0.5, -0.2], 1e-6).unwrap() < 1e-9);
    }
}
