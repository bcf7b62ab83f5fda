//! Scalar fields on the cotangent bundle (Hamiltonians, radial extensions,
//! perturbations) and on the base (conformal factors).

use std::fmt;
use std::sync::Arc;

use crate::error::Result;
use crate::exprlang::{parse, Expr, VarSet};
use crate::geometry::{cotangent_lift_inverse, CotangentPoint, Diffeo, ManifoldModel};
use crate::numerics::{dot, norm};

/// A function on T*M \ 0.
pub trait PhaseFunction: Send + Sync {
    fn eval(&self, z: &CotangentPoint) -> Result<f64>;

    /// Closed-form ambient gradient `(∂/∂x, ∂/∂p)`. On the sphere models this must be
    /// the gradient of the scale-invariant extension used by [`crate::dynamics`].
    fn gradient(&self, _z: &CotangentPoint) -> Option<(Vec<f64>, Vec<f64>)> {
        None
    }

    fn describe(&self) -> String {
        "field".to_string()
    }
}

/// Shared handle to a phase-space function.
#[derive(Clone)]
pub struct Field(Arc<dyn PhaseFunction>);

impl Field {
    pub fn new(f: impl PhaseFunction + 'static) -> Self {
        Self(Arc::new(f))
    }

    pub fn from_fn(
        label: impl Into<String>,
        f: impl Fn(&CotangentPoint) -> Result<f64> + Send + Sync + 'static,
    ) -> Self {
        Self::new(FnField {
            label: label.into(),
            f: Box::new(f),
        })
    }

    /// The reference norm |p| of the model (flat or round), i.e. H₀.
    pub fn model_norm(model: &ManifoldModel) -> Self {
        Self::new(ModelNorm {
            spherical: model.is_spherical(),
        })
    }

    /// A Hamiltonian or other phase function written in the expression language,
    /// over the base coordinates and momenta of `model` (see [`phase_vars`]).
    pub fn from_expr(model: &ManifoldModel, text: &str) -> Result<Self> {
        let expr = parse(text, &phase_vars(model))?;
        Ok(Self::new(ExprField {
            expr,
            ambient: model.ambient_dim(),
        }))
    }

    /// ρ(x) · H₀ for a base function ρ.
    pub fn conformal(model: &ManifoldModel, factor: BaseField) -> Self {
        let h0 = Self::model_norm(model);
        Self::from_fn(format!("({}) * |p|", factor.describe()), move |z| {
            Ok(factor.eval(&z.base)? * h0.eval(z)?)
        })
    }

    pub fn eval(&self, z: &CotangentPoint) -> Result<f64> {
        self.0.eval(z)
    }

    pub fn gradient(&self, z: &CotangentPoint) -> Option<(Vec<f64>, Vec<f64>)> {
        self.0.gradient(z)
    }

    pub fn describe(&self) -> String {
        self.0.describe()
    }

    /// `c * H`.
    pub fn scaled(&self, c: f64) -> Self {
        let inner = self.clone();
        Self::from_fn(format!("{c} * {}", self.describe()), move |z| Ok(c * inner.eval(z)?))
    }

    /// The Hamiltonian whose unit ball is the radial sum: `1 / (1/H_a + 1/H_b)`.
    pub fn radial_sum(&self, other: &Field) -> Self {
        let (a, b) = (self.clone(), other.clone());
        Self::from_fn(format!("{} (+) {}", self.describe(), other.describe()), move |z| {
            Ok(1.0 / (1.0 / a.eval(z)? + 1.0 / b.eval(z)?))
        })
    }

    pub fn pointwise_min(&self, other: &Field) -> Self {
        let (a, b) = (self.clone(), other.clone());
        Self::from_fn("min", move |z| Ok(a.eval(z)?.min(b.eval(z)?)))
    }

    pub fn pointwise_max(&self, other: &Field) -> Self {
        let (a, b) = (self.clone(), other.clone());
        Self::from_fn("max", move |z| Ok(a.eval(z)?.max(b.eval(z)?)))
    }

    /// `H ∘ φ̂⁻¹`, the Hamiltonian of the image of `{H <= 1}` under the lift of φ.
    pub fn pushed_forward(&self, phi: &Diffeo) -> Self {
        let (inner, phi) = (self.clone(), phi.clone());
        Self::from_fn(format!("lift_*({})", self.describe()), move |z| {
            inner.eval(&cotangent_lift_inverse(&phi, z)?)
        })
    }
}

impl fmt::Debug for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Field({})", self.describe())
    }
}

struct FnField {
    label: String,
    f: Box<dyn Fn(&CotangentPoint) -> Result<f64> + Send + Sync>,
}

impl PhaseFunction for FnField {
    fn eval(&self, z: &CotangentPoint) -> Result<f64> {
        (self.f)(z)
    }

    fn describe(&self) -> String {
        self.label.clone()
    }
}

struct ModelNorm {
    spherical: bool,
}

impl PhaseFunction for ModelNorm {
    fn eval(&self, z: &CotangentPoint) -> Result<f64> {
        Ok(norm(&z.momentum))
    }

    fn gradient(&self, z: &CotangentPoint) -> Option<(Vec<f64>, Vec<f64>)> {
        if !self.spherical {
            let r = norm(&z.momentum);
            let dp = z.momentum.iter().map(|v| v / r).collect();
            return Some((vec![0.0; z.base.len()], dp));
        }
        // extension |x| · |q| with q = p - (p·x̂)x̂, valid off the constraint set too
        let r = norm(&z.base);
        let xh: Vec<f64> = z.base.iter().map(|v| v / r).collect();
        let px = dot(&z.momentum, &xh);
        let q: Vec<f64> = z.momentum.iter().zip(&xh).map(|(p, x)| p - px * x).collect();
        let qn = norm(&q);
        let qh: Vec<f64> = q.iter().map(|v| v / qn).collect();
        let dx = xh.iter().zip(&qh).map(|(x, qv)| x * qn - px * qv).collect();
        let dp = qh.iter().map(|v| r * v).collect();
        Some((dx, dp))
    }

    fn describe(&self) -> String {
        "|p|".to_string()
    }
}

struct ExprField {
    expr: Expr,
    ambient: usize,
}

impl PhaseFunction for ExprField {
    fn eval(&self, z: &CotangentPoint) -> Result<f64> {
        let n = self.ambient;
        if n <= 4 {
            let mut slots = [0.0f64; 8];
            slots[..n].copy_from_slice(&z.base);
            slots[n..2 * n].copy_from_slice(&z.momentum);
            return Ok(self.expr.eval_slots(&slots[..2 * n])?);
        }
        let slots: Vec<f64> = z.base.iter().chain(&z.momentum).copied().collect();
        Ok(self.expr.eval_slots(&slots)?)
    }

    fn describe(&self) -> String {
        self.expr.source().to_string()
    }
}

/// Base coordinate names: `x1..xn` plus `x, y, z` aliases for the first three.
pub fn base_vars(model: &ManifoldModel) -> VarSet {
    let mut v = VarSet::new();
    declare_coords(&mut v, model.ambient_dim(), "x", 0);
    v
}

/// Base coordinates followed by momenta `p1..pn`.
pub fn phase_vars(model: &ManifoldModel) -> VarSet {
    let n = model.ambient_dim();
    let mut v = base_vars(model);
    for i in 0..n {
        v.declare(&format!("p{}", i + 1), n + i);
    }
    v
}

/// Base coordinates followed by velocities `v1..vn`.
pub fn lagrangian_vars(model: &ManifoldModel) -> VarSet {
    let n = model.ambient_dim();
    let mut v = base_vars(model);
    for i in 0..n {
        v.declare(&format!("v{}", i + 1), n + i);
    }
    v
}

fn declare_coords(v: &mut VarSet, n: usize, prefix: &str, offset: usize) {
    for i in 0..n {
        v.declare(&format!("{prefix}{}", i + 1), offset + i);
    }
    for (i, alias) in ["x", "y", "z"].iter().enumerate().take(n.min(3)) {
        v.declare(alias, offset + i);
    }
}

/// A scalar function on the base manifold (e.g. a conformal factor).
#[derive(Clone)]
pub struct BaseField {
    label: String,
    f: Arc<dyn Fn(&[f64]) -> Result<f64> + Send + Sync>,
}

impl BaseField {
    pub fn from_fn(label: impl Into<String>, f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            label: label.into(),
            f: Arc::new(move |x| Ok(f(x))),
        }
    }

    pub fn from_expr(model: &ManifoldModel, text: &str) -> Result<Self> {
        let expr = parse(text, &base_vars(model))?;
        Ok(Self {
            label: text.to_string(),
            f: Arc::new(move |x| Ok(expr.eval_slots(x)?)),
        })
    }

    /// `1 / f`, failing where f vanishes.
    pub fn reciprocal(&self) -> Self {
        let f = self.f.clone();
        Self {
            label: format!("1 / ({})", self.label),
            f: Arc::new(move |x| {
                let v = f(x)?;
                if v == 0.0 {
                    return Err(crate::error::Error::Numerical("reciprocal of zero".into()));
                }
                Ok(1.0 / v)
            }),
        }
    }

    pub fn constant(c: f64) -> Self {
        Self::from_fn(format!("{c}"), move |_| c)
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        (self.f)(x)
    }

    pub fn describe(&self) -> &str {
        &self.label
    }
}

impl fmt::Debug for BaseField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BaseField({})", self.label)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn expression_hamiltonians_read_base_and_momentum() {
        let t = ManifoldModel::unit_torus(2).unwrap();
        let h = Field::from_expr(&t, "(1 + 0.3*sin(2*pi*y)) * sqrt(p1^2 + p2^2)").unwrap();
        let z = CotangentPoint { base: vec![0.1, 0.25], momentum: vec![0.6, 0.8] };
        assert!((h.eval(&z).unwrap() - 1.3).abs() < 1e-15);
        let s = ManifoldModel::round_sphere();
        let h = Field::from_expr(&s, "x3 * p1 + z").unwrap();
        let z = CotangentPoint { base: vec![0.0, 0.6, 0.8], momentum: vec![2.0, 0.0, 0.0] };
        assert!((h.eval(&z).unwrap() - 2.4).abs() < 1e-15);
        assert!(Field::from_expr(&t, "p3").is_err());
    }

    #[test]
    fn radial_sum_hamiltonian_adds_reciprocals() {
        let t = ManifoldModel::unit_torus(2).unwrap();
        let h0 = Field::model_norm(&t);
        let two = h0.scaled(2.0);
        let sum = h0.radial_sum(&two);
        let z = CotangentPoint { base: vec![0.0, 0.0], momentum: vec![1.0, 0.0] };
        // ρ = 1 + 1/2
        assert!((1.0 / sum.eval(&z).unwrap() - 1.5).abs() < 1e-15);
    }
}
