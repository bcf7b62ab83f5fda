//! Star Hamiltonians and star bodies, represented by their radial functions
//! sampled on a cosphere grid.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::Field;
use crate::geometry::{CosphereGrid, ManifoldModel, ModelKind};

pub const HOMOGENEITY_TOL: f64 = 1e-8;
pub const HOMOGENEITY_PROBES: usize = 64;

/// A fibrewise degree-one homogeneous function, positive off the zero section.
#[derive(Debug, Clone)]
pub struct StarHamiltonian {
    field: Field,
    model: ManifoldModel,
    smooth: bool,
    reversible: bool,
}

impl StarHamiltonian {
    pub fn new(model: &ManifoldModel, field: Field) -> Self {
        Self {
            field,
            model: model.clone(),
            smooth: true,
            reversible: false,
        }
    }

    /// H₀, the reference norm; its unit body is the model body U.
    pub fn model_norm(model: &ManifoldModel) -> Self {
        Self::new(model, Field::model_norm(model)).reversible(true)
    }

    pub fn from_expr(model: &ManifoldModel, text: &str) -> Result<Self> {
        Ok(Self::new(model, Field::from_expr(model, text)?))
    }

    pub fn smooth(mut self, smooth: bool) -> Self {
        self.smooth = smooth;
        self
    }

    pub fn reversible(mut self, reversible: bool) -> Self {
        self.reversible = reversible;
        self
    }

    pub fn is_smooth(&self) -> bool {
        self.smooth
    }

    pub fn is_reversible(&self) -> bool {
        self.reversible
    }

    pub fn field(&self) -> &Field {
        &self.field
    }

    pub fn model(&self) -> &ManifoldModel {
        &self.model
    }

    /// Checks `H(t z) = t H(z)` for t in {1/2, 2} at random grid nodes.
    pub fn audit_homogeneity(&self, grid: &CosphereGrid, seed: u64) -> Result<()> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let nodes = grid.nodes();
        for _ in 0..HOMOGENEITY_PROBES.min(nodes.len()) {
            let z = &nodes[rng.gen_range(0..nodes.len())].point;
            let h = self.field.eval(z)?;
            for t in [0.5, 2.0] {
                let ht = self.field.eval(&z.scaled(t))?;
                let defect = (ht - t * h).abs() / (t * h).abs().max(f64::MIN_POSITIVE);
                if !(defect <= HOMOGENEITY_TOL) {
                    return Err(Error::NotHomogeneous { defect, scale: t });
                }
            }
        }
        Ok(())
    }
}

/// A star body, stored as its radial function ρ = 1/H on the nodes of a grid.
///
/// Bodies built from a Hamiltonian keep it, so they can be resampled on other
/// grids (used for refinement-based error estimates).
#[derive(Debug, Clone)]
pub struct StarBody {
    grid: Arc<CosphereGrid>,
    rho: Vec<f64>,
    hamiltonian: Option<Field>,
    label: String,
}

/// Samples ρ = 1/H at every node after auditing homogeneity.
pub fn body_from_hamiltonian(h: &StarHamiltonian, grid: &Arc<CosphereGrid>) -> Result<StarBody> {
    h.audit_homogeneity(grid, 0x00b0_d1e5)?;
    sample_field(h.field(), grid, h.field().describe())
}

fn sample_field(field: &Field, grid: &Arc<CosphereGrid>, label: String) -> Result<StarBody> {
    let rho = grid
        .nodes()
        .par_iter()
        .enumerate()
        .map(|(i, node)| {
            let v = field.eval(&node.point)?;
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::NonPositive { node: i, value: v });
            }
            Ok(1.0 / v)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(StarBody {
        grid: grid.clone(),
        rho,
        hamiltonian: Some(field.clone()),
        label,
    })
}

impl StarBody {
    /// The model body U (ρ ≡ 1).
    pub fn model_body(grid: &Arc<CosphereGrid>) -> Self {
        Self {
            grid: grid.clone(),
            rho: vec![1.0; grid.len()],
            hamiltonian: Some(Field::model_norm(grid.model())),
            label: "U".to_string(),
        }
    }

    /// A body given only by samples of its radial function.
    pub fn from_samples(grid: &Arc<CosphereGrid>, rho: Vec<f64>) -> Result<Self> {
        if rho.len() != grid.len() {
            return Err(Error::InvalidArgument(format!(
                "{} samples for a grid of {} nodes",
                rho.len(),
                grid.len()
            )));
        }
        if let Some((i, v)) = rho.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::NonPositive { node: i, value: *v });
        }
        Ok(Self {
            grid: grid.clone(),
            rho,
            hamiltonian: None,
            label: "sampled".to_string(),
        })
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn grid(&self) -> &Arc<CosphereGrid> {
        &self.grid
    }

    pub fn rho(&self) -> &[f64] {
        &self.rho
    }

    pub fn hamiltonian(&self) -> Option<&Field> {
        self.hamiltonian.as_ref()
    }

    /// The same body sampled on another grid; needs the closed form.
    pub fn resample(&self, grid: &Arc<CosphereGrid>) -> Result<StarBody> {
        let h = self.hamiltonian.as_ref().ok_or_else(|| {
            Error::InvalidArgument(format!("body `{}` has no closed form to resample", self.label))
        })?;
        sample_field(h, grid, self.label.clone())
    }

    fn same_grid(&self, other: &StarBody) -> Result<()> {
        if Arc::ptr_eq(&self.grid, &other.grid) {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    fn combine(
        &self,
        other: &StarBody,
        op: impl Fn(f64, f64) -> f64,
        field: impl Fn(&Field, &Field) -> Field,
        label: String,
    ) -> Result<StarBody> {
        self.same_grid(other)?;
        let rho = self.rho.iter().zip(&other.rho).map(|(a, b)| op(*a, *b)).collect();
        let hamiltonian = match (&self.hamiltonian, &other.hamiltonian) {
            (Some(a), Some(b)) => Some(field(a, b)),
            _ => None,
        };
        Ok(StarBody {
            grid: self.grid.clone(),
            rho,
            hamiltonian,
            label,
        })
    }
}

/// A ⊕ B, with radial function ρ_A + ρ_B.
pub fn radial_sum(a: &StarBody, b: &StarBody) -> Result<StarBody> {
    a.combine(b, |x, y| x + y, Field::radial_sum, format!("({} (+) {})", a.label, b.label))
}

/// λA, with radial function λρ_A.
pub fn dilate(a: &StarBody, lambda: f64) -> Result<StarBody> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::InvalidArgument(format!("dilation factor must be positive, got {lambda}")));
    }
    Ok(StarBody {
        grid: a.grid.clone(),
        rho: a.rho.iter().map(|r| lambda * r).collect(),
        hamiltonian: a.hamiltonian.as_ref().map(|h| h.scaled(1.0 / lambda)),
        label: format!("{lambda}*{}", a.label),
    })
}

/// A ∪ B: pointwise max of the radial functions.
pub fn union(a: &StarBody, b: &StarBody) -> Result<StarBody> {
    a.combine(b, f64::max, Field::pointwise_min, format!("({} u {})", a.label, b.label))
}

/// A ∩ B: pointwise min of the radial functions.
pub fn intersection(a: &StarBody, b: &StarBody) -> Result<StarBody> {
    a.combine(b, f64::min, Field::pointwise_max, format!("({} n {})", a.label, b.label))
}

/// Radial Hausdorff distance max |ρ_A − ρ_B| over the nodes.
pub fn radial_distance(a: &StarBody, b: &StarBody) -> Result<f64> {
    a.same_grid(b)?;
    Ok(a.rho
        .iter()
        .zip(&b.rho)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max))
}

/// A random smooth star Hamiltonian `|p| exp(f(x) + g(p/|p|))` with `f` and `g`
/// of size about `amplitude`.
///
/// On tori `f` is a short trigonometric series and `g` a linear plus quadratic form
/// in the unit momentum. On the sphere `f` and `g` are quadratic forms in the
/// ambient coordinates, plus linear terms unless the model is the projective plane
/// (where only terms even under `(x, p) -> (-x, -p)` are allowed).
pub fn random_star_hamiltonian(model: &ManifoldModel, amplitude: f64, rng: &mut impl Rng) -> StarHamiltonian {
    let d = model.ambient_dim();
    let coef = |rng: &mut dyn rand::RngCore| amplitude * (2.0 * rng.gen::<f64>() - 1.0);
    let linear_allowed = model.kind() != ModelKind::ProjectivePlane2;
    let fiber_linear: Vec<f64> = (0..d)
        .map(|_| if linear_allowed { coef(rng) } else { 0.0 })
        .collect();
    let fiber_quad: Vec<f64> = (0..d * d).map(|_| 0.5 * coef(rng)).collect();
    let base: BaseShape = if model.is_spherical() {
        BaseShape::Sphere {
            linear: (0..d).map(|_| if linear_allowed { coef(rng) } else { 0.0 }).collect(),
            quad: (0..d * d).map(|_| 0.5 * coef(rng)).collect(),
        }
    } else {
        let modes = (0..3)
            .map(|_| {
                let k: Vec<f64> = model
                    .periods()
                    .iter()
                    .map(|t| rng.gen_range(-2i32..=2) as f64 * 2.0 * std::f64::consts::PI / t)
                    .collect();
                (k, coef(rng), coef(rng))
            })
            .collect();
        BaseShape::Torus { modes }
    };
    let field = Field::from_fn("random", move |z| {
        let r = crate::numerics::norm(&z.momentum);
        let u: Vec<f64> = z.momentum.iter().map(|c| c / r).collect();
        let mut g = crate::numerics::dot(&fiber_linear, &u);
        for i in 0..d {
            for j in 0..d {
                g += fiber_quad[i * d + j] * u[i] * u[j];
            }
        }
        Ok(r * (base.eval(&z.base) + g).exp())
    });
    StarHamiltonian::new(model, field)
}

enum BaseShape {
    Torus { modes: Vec<(Vec<f64>, f64, f64)> },
    Sphere { linear: Vec<f64>, quad: Vec<f64> },
}

impl BaseShape {
    fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Self::Torus { modes } => modes
                .iter()
                .map(|(k, a, b)| {
                    let t = crate::numerics::dot(k, x);
                    a * t.cos() + b * t.sin()
                })
                .sum(),
            Self::Sphere { linear, quad } => {
                let d = x.len();
                let mut f = crate::numerics::dot(linear, x);
                for i in 0..d {
                    for j in 0..d {
                        f += quad[i * d + j] * x[i] * x[j];
                    }
                }
                f
            }
        }
    }
}
