//! Finsler metrics on the base models, their Legendre-dual optical Hamiltonians,
//! convexity audits, and the Holmes–Thompson and Busemann volumes.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dualvol::{dmv_k, volume, w_tilde_k};
use crate::error::{Error, Result};
use crate::exprlang::{parse, Expr};
use crate::field::{lagrangian_vars, BaseField, Field};
use crate::geometry::{euclidean_ball_volume, CosphereGrid, CotangentPoint, ManifoldModel};
use crate::numerics::{dot, golden_max, lbfgs, norm, LbfgsOptions};
use crate::starbody::{body_from_hamiltonian, StarBody, StarHamiltonian, HOMOGENEITY_PROBES, HOMOGENEITY_TOL};

/// Angles scanned before the golden-section refinement in two-dimensional fibres.
const SUPPORT_SCAN: usize = 256;
const SUPPORT_STARTS: usize = 8;
const SUPPORT_MAX_ITER: usize = 200;
/// Curvature floor for the quadratic-convexity certificate.
pub const CURVATURE_FLOOR: f64 = 1e-6;
const CURVATURE_SAMPLES: usize = 256;
const BUSEMANN_ANGLES: usize = 512;
const REVERSIBILITY_TOL: f64 = 1e-9;

type TangentFn = dyn Fn(&[f64], &[f64]) -> Result<f64> + Send + Sync;

/// A fibrewise degree-one function L(x, v) on the tangent bundle.
#[derive(Clone)]
pub struct FinslerMetric {
    model: ManifoldModel,
    label: String,
    eval: Arc<TangentFn>,
    dual: Option<Field>,
    conformal_factor: Option<BaseField>,
    reversible: bool,
    smooth: bool,
}

impl fmt::Debug for FinslerMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "FinslerMetric({})", self.label)
    }
}

fn torus_only(model: &ManifoldModel, family: &str) -> Result<()> {
    if model.is_spherical() {
        return Err(Error::Unsupported(format!("{family} metrics are only defined on tori")));
    }
    Ok(())
}

impl FinslerMetric {
    /// General constructor; no closed-form dual, so duality is numerical.
    pub fn new(
        model: &ManifoldModel,
        label: impl Into<String>,
        eval: impl Fn(&[f64], &[f64]) -> Result<f64> + Send + Sync + 'static,
        reversible: bool,
    ) -> Self {
        Self {
            model: model.clone(),
            label: label.into(),
            eval: Arc::new(eval),
            dual: None,
            conformal_factor: None,
            reversible,
            smooth: true,
        }
    }

    /// The model metric L₀ (flat or round).
    pub fn euclidean(model: &ManifoldModel) -> Self {
        let mut m = Self::new(model, "|v|", |_, v| Ok(norm(v)), true);
        m.dual = Some(Field::model_norm(model));
        m.conformal_factor = Some(BaseField::constant(1.0));
        m
    }

    /// `sqrt(Σ (vᵢ/aᵢ)²)`: unit ball is the ellipsoid with semi-axes `aᵢ`.
    pub fn quadratic(model: &ManifoldModel, axes: Vec<f64>) -> Result<Self> {
        torus_only(model, "quadratic")?;
        if axes.len() != model.dim() || axes.iter().any(|a| !(*a > 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "quadratic metric needs {} positive semi-axes",
                model.dim()
            )));
        }
        let a = axes.clone();
        let mut m = Self::new(
            model,
            format!("quadratic{axes:?}"),
            move |_, v| Ok(v.iter().zip(&a).map(|(vi, ai)| (vi / ai).powi(2)).sum::<f64>().sqrt()),
            true,
        );
        m.dual = Some(Field::from_fn(format!("quadratic_dual{axes:?}"), move |z| {
            Ok(z.momentum
                .iter()
                .zip(&axes)
                .map(|(pi, ai)| (pi * ai).powi(2))
                .sum::<f64>()
                .sqrt())
        }));
        Ok(m)
    }

    /// `ρ(x) L₀`; dual `H₀ / ρ`.
    pub fn conformal(model: &ManifoldModel, factor: BaseField) -> Self {
        let f = factor.clone();
        let mut m = Self::new(
            model,
            format!("({}) * |v|", factor.describe()),
            move |x, v| Ok(f.eval(x)? * norm(v)),
            true,
        );
        m.dual = Some(Field::conformal(model, factor.reciprocal()));
        m.conformal_factor = Some(factor);
        m
    }

    /// Randers metric `|v| + ⟨b, v⟩` with `|b| < 1`.
    pub fn randers(model: &ManifoldModel, b: Vec<f64>) -> Result<Self> {
        torus_only(model, "Randers")?;
        let nb2 = dot(&b, &b);
        if b.len() != model.dim() || !(nb2 < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "Randers drift must have {} components and norm < 1",
                model.dim()
            )));
        }
        let bb = b.clone();
        let mut m = Self::new(model, format!("randers{b:?}"), move |_, v| Ok(norm(v) + dot(&bb, v)), false);
        let s = 1.0 - nb2;
        m.dual = Some(Field::from_fn(format!("randers_dual{b:?}"), move |z| {
            let p = &z.momentum;
            let bp = dot(&b, p);
            Ok(((s * dot(p, p) + bp * bp).sqrt() - bp) / s)
        }));
        Ok(m)
    }

    /// `(Σ |vᵢ|^q)^{1/q}` for `q > 1`, or the sup norm for `q = ∞`.
    pub fn lp_norm(model: &ManifoldModel, q: f64) -> Result<Self> {
        torus_only(model, "l^q")?;
        if !(q > 1.0) {
            return Err(Error::InvalidArgument("l^q norm needs q > 1".into()));
        }
        let mut m = Self::new(model, format!("l{q}"), move |_, v| Ok(lp(v, q)), true);
        let conj = if q.is_infinite() { 1.0 } else { q / (q - 1.0) };
        m.dual = Some(Field::from_fn(format!("l{conj}"), move |z| Ok(lp(&z.momentum, conj))));
        m.smooth = q.is_finite();
        Ok(m)
    }

    /// A metric written in the expression language over `x1..xn, v1..vn`.
    /// Homogeneity and (if claimed) reversibility are audited at random probes.
    pub fn from_expr(model: &ManifoldModel, text: &str, reversible: bool) -> Result<Self> {
        let expr: Expr = parse(text, &lagrangian_vars(model))?;
        let m = Self::new(
            model,
            text,
            move |x, v| {
                let slots: Vec<f64> = x.iter().chain(v).copied().collect();
                Ok(expr.eval_slots(&slots)?)
            },
            reversible,
        );
        m.audit(0x005e_edf1)?;
        Ok(m)
    }

    /// Replaces the closed-form dual, e.g. to force numerical duality.
    pub fn with_dual(mut self, dual: Option<Field>) -> Self {
        self.dual = dual;
        self
    }

    pub fn with_smooth(mut self, smooth: bool) -> Self {
        self.smooth = smooth;
        self
    }

    /// `c L`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        if !(c > 0.0) {
            return Err(Error::InvalidArgument("metric scale must be positive".into()));
        }
        let inner = self.eval.clone();
        let mut m = Self::new(
            &self.model,
            format!("{c} * ({})", self.label),
            move |x, v| Ok(c * inner(x, v)?),
            self.reversible,
        );
        m.dual = self.dual.as_ref().map(|h| h.scaled(1.0 / c));
        m.conformal_factor = self.conformal_factor.as_ref().map(|f| {
            let f = f.clone();
            BaseField::from_fn(format!("{c} * ({})", f.describe()), move |x| c * f.eval(x).unwrap_or(f64::NAN))
        });
        m.smooth = self.smooth;
        Ok(m)
    }

    pub fn eval(&self, x: &[f64], v: &[f64]) -> Result<f64> {
        (self.eval)(x, v)
    }

    pub fn model(&self) -> &ManifoldModel {
        &self.model
    }

    pub fn describe(&self) -> &str {
        &self.label
    }

    pub fn is_reversible(&self) -> bool {
        self.reversible
    }

    pub fn is_smooth(&self) -> bool {
        self.smooth
    }

    /// ρ when the metric is known to be conformal to the model metric.
    pub fn conformal_factor(&self) -> Option<&BaseField> {
        self.conformal_factor.as_ref()
    }

    pub fn closed_form_dual(&self) -> Option<&Field> {
        self.dual.as_ref()
    }

    /// The dual optical Hamiltonian; closed form when known, numerical otherwise.
    pub fn dual_hamiltonian(&self) -> StarHamiltonian {
        let field = self.dual.clone().unwrap_or_else(|| {
            let metric = self.clone();
            Field::from_fn(format!("dual({})", self.label), move |z| {
                legendre_dual(&metric, &z.base, &z.momentum)
            })
        });
        StarHamiltonian::new(&self.model, field)
            .smooth(self.smooth)
            .reversible(self.reversible)
    }

    /// The numerically computed double dual `(L*)*`.
    pub fn double_dual(&self) -> Self {
        let h = self.clone().with_dual(None).dual_hamiltonian();
        let model = self.model.clone();
        Self::new(
            &self.model,
            format!("dual(dual({}))", self.label),
            move |x, v| legendre_inverse(&model, h.field(), x, v),
            self.reversible,
        )
    }

    /// Checks positivity, degree-one homogeneity and claimed reversibility at random probes.
    pub fn audit(&self, seed: u64) -> Result<()> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..HOMOGENEITY_PROBES {
            let x = self.model.sample_base(&mut rng);
            let v = self.model.sample_unit_tangent(&x, &mut rng);
            let l = self.eval(&x, &v)?;
            if !(l > 0.0 && l.is_finite()) {
                return Err(Error::NonPositive { node: 0, value: l });
            }
            for t in [0.5, 2.0] {
                let tv: Vec<f64> = v.iter().map(|c| t * c).collect();
                let defect = (self.eval(&x, &tv)? - t * l).abs() / (t * l);
                if !(defect <= HOMOGENEITY_TOL) {
                    return Err(Error::NotHomogeneous { defect, scale: t });
                }
            }
            if self.reversible {
                let mv: Vec<f64> = v.iter().map(|c| -c).collect();
                let gap = (self.eval(&x, &mv)? - l).abs();
                if gap >= REVERSIBILITY_TOL * l {
                    return Err(Error::InvalidArgument(format!(
                        "metric flagged reversible but |L(v) - L(-v)| = {gap:e}"
                    )));
                }
            }
        }
        Ok(())
    }
}

fn lp(v: &[f64], q: f64) -> f64 {
    if q.is_infinite() {
        return v.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    }
    let m = v.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    if m == 0.0 {
        return 0.0;
    }
    m * v.iter().map(|c| (c.abs() / m).powf(q)).sum::<f64>().powf(1.0 / q)
}

/// max ⟨p, u⟩ / N(u) over tangent directions u at `x`.
fn support(
    model: &ManifoldModel,
    x: &[f64],
    gauge: &dyn Fn(&[f64]) -> Result<f64>,
    p: &[f64],
) -> Result<f64> {
    let frame = model.tangent_basis(x);
    let d = frame.len();
    let pc: Vec<f64> = frame.iter().map(|e| dot(p, e)).collect();
    let ambient = |c: &[f64]| -> Vec<f64> {
        (0..x.len()).map(|k| frame.iter().zip(c).map(|(e, ci)| ci * e[k]).sum()).collect()
    };
    let ratio = |c: &[f64]| -> Result<f64> {
        let g = gauge(&ambient(c))?;
        if !(g > 0.0 && g.is_finite()) {
            return Err(Error::NonPositive { node: 0, value: g });
        }
        Ok(dot(&pc, c) / g)
    };
    if d == 2 {
        let angle = |t: f64| ratio(&[t.cos(), t.sin()]);
        let step = std::f64::consts::TAU / SUPPORT_SCAN as f64;
        let mut best = (0.0, f64::NEG_INFINITY);
        for k in 0..SUPPORT_SCAN {
            let t = k as f64 * step;
            let r = angle(t)?;
            if r > best.1 {
                best = (t, r);
            }
        }
        let (mut t, golden) = golden_max(
            |t| angle(t).unwrap_or(f64::NEG_INFINITY),
            best.0 - step,
            best.0 + step,
            1e-12,
        );
        let mut value = golden.max(best.1);
        if best.1 > golden {
            t = best.0;
        }
        let h = 1e-5;
        for _ in 0..3 {
            let (fm, f0, fp) = (angle(t - h)?, angle(t)?, angle(t + h)?);
            let curv = (fp - 2.0 * f0 + fm) / (h * h);
            if !(curv < 0.0) {
                break;
            }
            let tn = t - (fp - fm) / (2.0 * h) / curv;
            let vn = angle(tn)?;
            if vn <= value {
                break;
            }
            t = tn;
            value = vn;
        }
        return Ok(value);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x01e6_ed4e);
    let mut starts = vec![pc.clone()];
    while starts.len() < SUPPORT_STARTS {
        starts.push((0..d).map(|_| rng.sample(StandardNormal)).collect());
    }
    let opts = LbfgsOptions {
        max_iter: SUPPORT_MAX_ITER,
        ..LbfgsOptions::default()
    };
    let mut best: Option<(f64, bool)> = None;
    for s in starts {
        if norm(&s) == 0.0 {
            continue;
        }
        let m = lbfgs(
            |y, g| {
                let f = -ratio(y).ok()?;
                for i in 0..d {
                    let h = 1e-6 * norm(y);
                    let mut yp = y.to_vec();
                    let mut ym = y.to_vec();
                    yp[i] += h;
                    ym[i] -= h;
                    g[i] = (ratio(&ym).ok()? - ratio(&yp).ok()?) / (2.0 * h);
                }
                Some(f)
            },
            s,
            opts,
        );
        let v = -m.value;
        if best.is_none_or(|(b, _)| v > b) {
            best = Some((v, m.converged));
        }
    }
    match best {
        Some((v, true)) => Ok(v),
        Some((v, false)) => Err(Error::NonConvergence {
            what: "legendre duality",
            iterations: SUPPORT_MAX_ITER,
            best: v,
        }),
        None => Ok(0.0),
    }
}

/// H(x, p) = max{ p(v) : L(x, v) ≤ 1 }, computed numerically.
pub fn legendre_dual(metric: &FinslerMetric, x: &[f64], p: &[f64]) -> Result<f64> {
    let p = metric.model.project_tangent(x, p);
    support(&metric.model, x, &|v| metric.eval(x, v), &p)
}

/// L(x, v) = max{ q(v) : H(x, q) ≤ 1 }, computed numerically.
pub fn legendre_inverse(model: &ManifoldModel, h: &Field, x: &[f64], v: &[f64]) -> Result<f64> {
    let v = model.project_tangent(x, v);
    support(
        model,
        x,
        &|q| {
            h.eval(&CotangentPoint {
                base: x.to_vec(),
                momentum: q.to_vec(),
            })
        },
        &v,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexityCertificate {
    pub min_curvature: f64,
    pub max_curvature: f64,
    pub samples: usize,
    pub quadratically_convex: bool,
}

/// Samples the curvature of the unit sphere of L in T_xM (in an orthonormal frame).
pub fn check_quadratic_convexity(metric: &FinslerMetric, x: &[f64]) -> Result<ConvexityCertificate> {
    let model = &metric.model;
    let frame = model.tangent_basis(x);
    let d = frame.len();
    let ambient = |c: &[f64]| -> Vec<f64> {
        (0..x.len()).map(|k| frame.iter().zip(c).map(|(e, ci)| ci * e[k]).sum()).collect()
    };
    let gauge = |c: &[f64]| metric.eval(x, &ambient(c));
    let curvatures: Vec<f64> = if d == 2 {
        let n = CURVATURE_SAMPLES;
        let h = std::f64::consts::TAU / n as f64;
        let pts: Vec<[f64; 2]> = (0..n)
            .map(|k| {
                let t = k as f64 * h;
                let c = [t.cos(), t.sin()];
                let l = gauge(&c)?;
                Ok([c[0] / l, c[1] / l])
            })
            .collect::<Result<_>>()?;
        let at = |k: isize| pts[k.rem_euclid(n as isize) as usize];
        (0..n as isize)
            .map(|k| {
                let (m2, m1, p0, p1, p2) = (at(k - 2), at(k - 1), at(k), at(k + 1), at(k + 2));
                let d1 = |i: usize| (-p2[i] + 8.0 * p1[i] - 8.0 * m1[i] + m2[i]) / (12.0 * h);
                let d2 = |i: usize| (-p2[i] + 16.0 * p1[i] - 30.0 * p0[i] + 16.0 * m1[i] - m2[i]) / (12.0 * h * h);
                let (xd, yd, xdd, ydd) = (d1(0), d1(1), d2(0), d2(1));
                (xd * ydd - yd * xdd) / (xd * xd + yd * yd).powf(1.5)
            })
            .collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(0xc0_4e7);
        (0..CURVATURE_SAMPLES)
            .map(|_| {
                let c: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
                let l = gauge(&c)?;
                let q: Vec<f64> = c.iter().map(|v| v / l).collect();
                level_set_min_curvature(&gauge, &q)
            })
            .collect::<Result<_>>()?
    };
    if curvatures.iter().any(|k| !k.is_finite()) {
        return Err(Error::Numerical("curvature finite differences blew up".into()));
    }
    let min_curvature = curvatures.iter().copied().fold(f64::INFINITY, f64::min);
    let max_curvature = curvatures.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(ConvexityCertificate {
        min_curvature,
        max_curvature,
        samples: curvatures.len(),
        quadratically_convex: min_curvature > CURVATURE_FLOOR,
    })
}

/// Smallest principal curvature of {L = 1} at q, from the Hessian of L restricted
/// to the tangent space and divided by |∇L|.
fn level_set_min_curvature(gauge: &dyn Fn(&[f64]) -> Result<f64>, q: &[f64]) -> Result<f64> {
    let d = q.len();
    let h = 1e-4;
    let shifted = |i: usize, a: f64, j: usize, b: f64| -> Result<f64> {
        let mut y = q.to_vec();
        y[i] += a;
        y[j] += b;
        gauge(&y)
    };
    let f0 = gauge(q)?;
    let mut grad = vec![0.0; d];
    let mut hess = DMatrix::zeros(d, d);
    for i in 0..d {
        grad[i] = (shifted(i, h, i, 0.0)? - shifted(i, -h, i, 0.0)?) / (2.0 * h);
        hess[(i, i)] = (shifted(i, h, i, 0.0)? - 2.0 * f0 + shifted(i, -h, i, 0.0)?) / (h * h);
        for j in 0..i {
            let v = (shifted(i, h, j, h)? - shifted(i, h, j, -h)? - shifted(i, -h, j, h)? + shifted(i, -h, j, -h)?)
                / (4.0 * h * h);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    let gn = norm(&grad);
    let normal: Vec<f64> = grad.iter().map(|g| g / gn).collect();
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for k in 0..d {
        let mut e: Vec<f64> = (0..d).map(|i| f64::from(u8::from(i == k))).collect();
        for b in std::iter::once(&normal).chain(basis.iter()) {
            let c = dot(&e, b);
            e.iter_mut().zip(b).for_each(|(ei, bi)| *ei -= c * bi);
        }
        let en = norm(&e);
        if en > 1e-8 && basis.len() < d - 1 {
            basis.push(e.iter().map(|v| v / en).collect());
        }
    }
    let t = DMatrix::from_fn(d, d - 1, |i, j| basis[j][i]);
    let restricted = t.transpose() * hess * &t;
    let eig = SymmetricEigen::new(restricted);
    Ok(eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min) / gn)
}

fn check_model(metric: &FinslerMetric, grid: &CosphereGrid) -> Result<()> {
    if metric.model() != grid.model() {
        return Err(Error::GridMismatch);
    }
    Ok(())
}

/// The unit co-disc bundle {H ≤ 1} of the dual Hamiltonian, sampled on `grid`.
pub fn dual_body(metric: &FinslerMetric, grid: &Arc<CosphereGrid>) -> Result<StarBody> {
    check_model(metric, grid)?;
    Ok(body_from_hamiltonian(&metric.dual_hamiltonian(), grid)?.with_label(format!("D*({})", metric.label)))
}

/// Symplectic volume of the unit co-disc bundle divided by ε_n.
pub fn holmes_thompson_volume(metric: &FinslerMetric, grid: &Arc<CosphereGrid>) -> Result<f64> {
    let n = grid.model().dim();
    Ok(volume(&dual_body(metric, grid)?) / euclidean_ball_volume(n))
}

/// ∫ ε₂ / area{v : L(x, v) ≤ 1} dx over the base cells of `grid`.
pub fn busemann_volume(metric: &FinslerMetric, grid: &CosphereGrid) -> Result<f64> {
    check_model(metric, grid)?;
    if grid.model().dim() != 2 {
        return Err(Error::Unsupported("Busemann volume is implemented for surfaces only".into()));
    }
    if !metric.is_reversible() {
        return Err(Error::Unsupported("Busemann volume needs a reversible metric".into()));
    }
    let h = std::f64::consts::TAU / BUSEMANN_ANGLES as f64;
    let mut terms = Vec::with_capacity(grid.cells().len());
    for cell in grid.cells() {
        let frame = grid.model().tangent_basis(&cell.point);
        let mut area = 0.0;
        for k in 0..BUSEMANN_ANGLES {
            let t = k as f64 * h;
            let u: Vec<f64> = (0..cell.point.len())
                .map(|i| t.cos() * frame[0][i] + t.sin() * frame[1][i])
                .collect();
            let l = metric.eval(&cell.point, &u)?;
            area += 0.5 * h / (l * l);
        }
        terms.push(cell.volume * std::f64::consts::PI / area);
    }
    Ok(crate::numerics::pairwise_sum(&terms))
}

/// Ṽ_k of the unit co-disc bundles of two metrics.
pub fn dmv_metrics(a: &FinslerMetric, b: &FinslerMetric, k: usize, grid: &Arc<CosphereGrid>) -> Result<f64> {
    dmv_k(&dual_body(a, grid)?, &dual_body(b, grid)?, k)
}

/// W̃_k of the unit co-disc bundle of a metric, relative to the grid's model metric.
pub fn emv_metric(metric: &FinslerMetric, k: usize, grid: &Arc<CosphereGrid>) -> Result<f64> {
    w_tilde_k(&dual_body(metric, grid)?, k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_grid, Resolution};
    use std::f64::consts::PI;

    fn t2() -> ManifoldModel {
        ManifoldModel::unit_torus(2).unwrap()
    }

    #[test]
    fn closed_form_duals_match_numerical_duality() {
        let m = t2();
        let x = [0.3, 0.6];
        let e = FinslerMetric::euclidean(&m);
        assert!((legendre_dual(&e, &x, &[3.0, 4.0]).unwrap() - 5.0).abs() < 1e-12);
        let q = FinslerMetric::quadratic(&m, vec![2.0, 0.5]).unwrap();
        let p = [0.7f64, -1.1];
        let exact = ((2.0f64 * p[0]).powi(2) + (0.5f64 * p[1]).powi(2)).sqrt();
        assert!((legendre_dual(&q, &x, &p).unwrap() - exact).abs() < 1e-10);
        let r = FinslerMetric::randers(&m, vec![0.3, 0.0]).unwrap();
        for p in [[1.0, 0.0], [-1.0, 0.0], [0.4, 0.9]] {
            let z = CotangentPoint { base: x.to_vec(), momentum: p.to_vec() };
            let closed = r.closed_form_dual().unwrap().eval(&z).unwrap();
            assert!((legendre_dual(&r, &x, &p).unwrap() - closed).abs() < 1e-10);
        }
    }

    #[test]
    fn randers_dual_matches_brute_force_search() {
        let r = FinslerMetric::randers(&t2(), vec![0.3, 0.0]).unwrap();
        let brute = (0..4096)
            .map(|k| {
                let t = k as f64 * std::f64::consts::TAU / 4096.0;
                let v = [t.cos(), t.sin()];
                v[0] / r.eval(&[0.0, 0.0], &v).unwrap()
            })
            .fold(f64::NEG_INFINITY, f64::max);
        let h = legendre_dual(&r, &[0.0, 0.0], &[1.0, 0.0]).unwrap();
        assert!((h - brute).abs() < 1e-6);
        assert!((h - 1.0 / 1.3).abs() < 1e-10);
    }

    #[test]
    fn double_dual_recovers_quadratic_axes() {
        let q = FinslerMetric::quadratic(&t2(), vec![2.0, 0.5]).unwrap().double_dual();
        assert!((q.eval(&[0.0, 0.0], &[2.0, 0.0]).unwrap() - 1.0).abs() < 1e-8);
        assert!((q.eval(&[0.0, 0.0], &[0.0, 0.5]).unwrap() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn three_dimensional_duality_uses_multistart() {
        let m = ManifoldModel::unit_torus(3).unwrap();
        let q = FinslerMetric::quadratic(&m, vec![2.0, 1.0, 0.5]).unwrap().with_dual(None);
        let p = [0.3, -0.4, 1.2];
        let exact = ((0.6f64).powi(2) + 0.16 + 0.36).sqrt();
        assert!((legendre_dual(&q, &[0.1, 0.2, 0.3], &p).unwrap() - exact).abs() < 1e-8);
    }

    #[test]
    fn convexity_certificates() {
        let m = t2();
        let c = check_quadratic_convexity(&FinslerMetric::euclidean(&m), &[0.0, 0.0]).unwrap();
        assert!((c.min_curvature - 1.0).abs() < 1e-6 && c.quadratically_convex);
        let q = FinslerMetric::quadratic(&m, vec![2.0, 0.5]).unwrap();
        let c = check_quadratic_convexity(&q, &[0.0, 0.0]).unwrap();
        assert!((c.min_curvature - 0.125).abs() < 1e-3);
        let sup = FinslerMetric::lp_norm(&m, f64::INFINITY).unwrap();
        assert!(!check_quadratic_convexity(&sup, &[0.0, 0.0]).unwrap().quadratically_convex);
        let m3 = ManifoldModel::unit_torus(3).unwrap();
        let c = check_quadratic_convexity(&FinslerMetric::euclidean(&m3), &[0.0; 3]).unwrap();
        assert!((c.min_curvature - 1.0).abs() < 1e-4);
    }

    #[test]
    fn holmes_thompson_and_busemann() {
        let m = t2();
        let g = build_grid(&m, &Resolution::new(16, vec![64])).unwrap();
        let e = FinslerMetric::euclidean(&m);
        assert!((holmes_thompson_volume(&e, &g).unwrap() - 1.0).abs() < 1e-12);
        let two = e.scaled(2.0).unwrap();
        assert!((holmes_thompson_volume(&two, &g).unwrap() - 4.0).abs() < 1e-12);
        assert!((busemann_volume(&two, &g).unwrap() - 4.0).abs() < 1e-9);
        let rho = BaseField::from_expr(&m, "1 + 0.3*sin(2*pi*y)").unwrap();
        let c = FinslerMetric::conformal(&m, rho);
        let ht = holmes_thompson_volume(&c, &g).unwrap();
        assert!((ht - 1.045).abs() < 1e-10);
        assert!((busemann_volume(&c, &g).unwrap() - ht).abs() < 1e-6 * ht);
        let quartic = FinslerMetric::lp_norm(&m, 4.0).unwrap();
        let gap = busemann_volume(&quartic, &g).unwrap() - holmes_thompson_volume(&quartic, &g).unwrap();
        assert!(gap > 1e-3, "gap {gap}");
        let rp2 = ManifoldModel::projective_plane();
        let g = build_grid(&rp2, &Resolution::new(3, vec![64])).unwrap();
        let ht = holmes_thompson_volume(&FinslerMetric::euclidean(&rp2), &g).unwrap();
        assert!((ht / (2.0 * PI) - 1.0).abs() < 1e-3);
        assert!(busemann_volume(&FinslerMetric::randers(&m, vec![0.1, 0.0]).unwrap(), &build_grid(&m, &Resolution::new(4, vec![8])).unwrap()).is_err());
    }

    #[test]
    fn relative_invariants_of_metric_pairs() {
        let m = t2();
        let g = build_grid(&m, &Resolution::new(16, vec![32])).unwrap();
        let e = FinslerMetric::euclidean(&m);
        assert!((dmv_metrics(&e, &e, 1, &g).unwrap() - PI).abs() < 1e-12);
        assert!((emv_metric(&e, 1, &g).unwrap() - 1.0).abs() < 1e-12);
        // L = 2 L₀: dual body 2U, so W̃₁ = 2
        assert!((emv_metric(&e.scaled(2.0).unwrap(), 1, &g).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn expression_metrics_are_audited() {
        let m = t2();
        assert!(FinslerMetric::from_expr(&m, "sqrt(v1^2 + v2^2) * (1 + 0.1*cos(2*pi*x))", true).is_ok());
        assert!(FinslerMetric::from_expr(&m, "v1^2 + v2^2", true).is_err());
        assert!(FinslerMetric::from_expr(&m, "sqrt(v1^2 + v2^2) + 0.2*v1", true).is_err());
        assert!(FinslerMetric::from_expr(&m, "sqrt(v1^2 + v2^2) + 0.2*v1", false).is_ok());
    }
}
