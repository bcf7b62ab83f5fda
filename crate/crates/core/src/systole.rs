//! Shortest non-contractible loops: polygon length minimisation per homotopy class
//! on flat tori, antipodal paths on the sphere cover of RP², and the chain
//! systole ratio ≤ W̃ ≤ volume-ratio root for conformal metrics.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dualvol::InequalityVerdict;
use crate::error::{Error, Result};
use crate::field::BaseField;
use crate::finsler::{emv_metric, holmes_thompson_volume, FinslerMetric};
use crate::geometry::{CosphereGrid, ManifoldModel, ModelKind};
use crate::numerics::{cross, dot, lbfgs, norm, normalize, LbfgsOptions};

pub const MIN_VERTICES: usize = 8;
const COARSE_VERTICES: usize = 16;
const FD_STEP: f64 = 1e-6;
pub const RP2_STARTS: usize = 32;
/// Largest change of the estimate under doubling m for it to count as converged.
pub const REFINEMENT_TOL: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum LoopClass {
    Torus(Vec<i64>),
    ProjectiveNontrivial,
}

impl LoopClass {
    pub fn torus(z: Vec<i64>) -> Result<Self> {
        if z.iter().all(|c| *c == 0) {
            return Err(Error::InvalidArgument("the zero class is contractible".into()));
        }
        Ok(Self::Torus(z))
    }

    pub fn reversed(&self) -> Self {
        match self {
            Self::Torus(z) => Self::Torus(z.iter().map(|c| -c).collect()),
            Self::ProjectiveNontrivial => Self::ProjectiveNontrivial,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystoleEstimate {
    pub length: f64,
    pub class: LoopClass,
    /// Vertices of the minimising polygon (lifted coordinates on tori, unit vectors on RP²).
    pub polygon: Vec<Vec<f64>>,
    pub converged: bool,
    /// (min ρ) × reference systole of the class, for conformal metrics.
    pub lower_bound: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystoleOptions {
    pub vertices: usize,
    pub restarts: usize,
    pub seed: u64,
    /// Torus classes are enumerated with ‖z‖∞ ≤ this bound.
    pub max_class: i64,
}

impl Default for SystoleOptions {
    fn default() -> Self {
        Self {
            vertices: 64,
            restarts: 8,
            seed: 0x5151,
            max_class: 3,
        }
    }
}

fn class_shift(model: &ManifoldModel, z: &[i64]) -> Result<Vec<f64>> {
    if z.len() != model.dim() {
        return Err(Error::InvalidArgument(format!(
            "class needs {} components, got {}",
            model.dim(),
            z.len()
        )));
    }
    Ok(z.iter().zip(model.periods()).map(|(c, p)| *c as f64 * p).collect())
}

/// Three-point Gauss–Legendre rule on [0, 1].
const SEGMENT_NODES: [f64; 3] = [0.112_701_665_379_258_3, 0.5, 0.887_298_334_620_741_7];
const SEGMENT_WEIGHTS: [f64; 3] = [5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0];
/// Longer edges are split into pieces of at most this angle (or fraction of the
/// shortest torus period) before quadrature.
const MAX_PIECE: f64 = 0.1;

/// Length of the straight segment from `a` to `b`.
fn torus_segment(metric: &FinslerMetric, a: &[f64], b: &[f64]) -> Result<f64> {
    let d: Vec<f64> = b.iter().zip(a).map(|(u, v)| u - v).collect();
    if norm(&d) == 0.0 {
        return Err(Error::InvalidArgument("degenerate segment".into()));
    }
    let shortest = metric.model().periods().iter().copied().fold(f64::INFINITY, f64::min);
    let pieces = (norm(&d) / (MAX_PIECE * shortest)).ceil().max(1.0);
    let mut total = 0.0;
    for k in 0..pieces as usize {
        for (t, w) in SEGMENT_NODES.iter().zip(SEGMENT_WEIGHTS) {
            let f = (k as f64 + t) / pieces;
            let x: Vec<f64> = a.iter().zip(&d).map(|(ai, di)| ai + f * di).collect();
            total += w * metric.eval(&metric.model().canonical_base(&x), &d)?;
        }
    }
    Ok(total / pieces)
}

/// Length of the shorter great-circle arc from unit vector `a` to unit vector `b`.
fn sphere_segment(metric: &FinslerMetric, a: &[f64], b: &[f64]) -> Result<f64> {
    let axis = cross(a, b);
    let angle = norm(&axis).atan2(dot(a, b));
    if angle == 0.0 {
        return Err(Error::InvalidArgument("degenerate segment".into()));
    }
    // unit tangent at a pointing towards b
    let e = normalize(&b.iter().zip(a).map(|(bi, ai)| bi - dot(a, b) * ai).collect::<Vec<f64>>());
    let pieces = (angle / MAX_PIECE).ceil().max(1.0);
    let mut total = 0.0;
    for k in 0..pieces as usize {
        for (t, w) in SEGMENT_NODES.iter().zip(SEGMENT_WEIGHTS) {
            let (s, c) = ((k as f64 + t) / pieces * angle).sin_cos();
            let x: Vec<f64> = (0..3).map(|k| c * a[k] + s * e[k]).collect();
            let v: Vec<f64> = (0..3).map(|k| angle * (c * e[k] - s * a[k])).collect();
            total += w * metric.eval(&x, &v)?;
        }
    }
    Ok(total / pieces)
}

/// Length of a closed polygon whose edges are straight segments (great-circle arcs
/// on RP²), each integrated by three-point Gauss–Legendre.
///
/// On tori the last vertex joins the first translated by the class vector; on RP²
/// the vertices are unit vectors and the last joins the antipode of the first.
pub fn loop_length(metric: &FinslerMetric, polygon: &[Vec<f64>], class: &LoopClass) -> Result<f64> {
    let m = polygon.len();
    if m < MIN_VERTICES {
        return Err(Error::InvalidArgument(format!("need at least {MIN_VERTICES} vertices, got {m}")));
    }
    let model = metric.model();
    let mut total = 0.0;
    match (class, model.kind()) {
        (LoopClass::Torus(z), ModelKind::FlatTorus) => {
            let shift = class_shift(model, z)?;
            for i in 0..m {
                let b: Vec<f64> = if i + 1 < m {
                    polygon[i + 1].clone()
                } else {
                    polygon[0].iter().zip(&shift).map(|(p, s)| p + s).collect()
                };
                total += torus_segment(metric, &polygon[i], &b)?;
            }
        }
        (LoopClass::ProjectiveNontrivial, ModelKind::ProjectivePlane2) => {
            let pts: Vec<Vec<f64>> = polygon.iter().map(|p| normalize(p)).collect();
            for i in 0..m {
                let b: Vec<f64> = if i + 1 < m {
                    pts[i + 1].clone()
                } else {
                    pts[0].iter().map(|v| -v).collect()
                };
                total += sphere_segment(metric, &pts[i], &b)?;
            }
        }
        _ => return Err(Error::Unsupported("loop class does not match the model".into())),
    }
    Ok(total)
}

/// Torus loops as graphs over the class direction: vertex i sits at
/// (i/m) S + Σₖ wᵢₖ Nₖ with S the class translation and Nₖ an orthonormal basis of S⊥.
struct TorusLoop<'a> {
    metric: &'a FinslerMetric,
    shift: Vec<f64>,
    normals: Vec<Vec<f64>>,
    m: usize,
}

impl<'a> TorusLoop<'a> {
    fn new(metric: &'a FinslerMetric, z: &[i64], m: usize) -> Result<Self> {
        let shift = class_shift(metric.model(), z)?;
        let n = shift.len();
        let dir = normalize(&shift);
        let mut normals: Vec<Vec<f64>> = Vec::new();
        for k in 0..n {
            let mut e: Vec<f64> = (0..n).map(|i| f64::from(u8::from(i == k))).collect();
            for b in std::iter::once(&dir).chain(normals.iter()) {
                let c = dot(&e, b);
                e.iter_mut().zip(b).for_each(|(ei, bi)| *ei -= c * bi);
            }
            let en = norm(&e);
            if en > 1e-8 && normals.len() + 1 < n {
                normals.push(e.iter().map(|v| v / en).collect());
            }
        }
        Ok(Self { metric, shift, normals, m })
    }

    fn width(&self) -> usize {
        self.normals.len()
    }

    fn vertex(&self, w: &[f64], i: usize) -> Vec<f64> {
        let k = self.width();
        let (i, wrap) = (i % self.m, (i / self.m) as f64);
        let t = i as f64 / self.m as f64 + wrap;
        let mut v: Vec<f64> = self.shift.iter().map(|s| t * s).collect();
        for (j, nj) in self.normals.iter().enumerate() {
            let c = w[i * k + j];
            v.iter_mut().zip(nj).for_each(|(vi, ni)| *vi += c * ni);
        }
        v
    }

    fn segment(&self, w: &[f64], i: usize) -> Result<f64> {
        torus_segment(self.metric, &self.vertex(w, i), &self.vertex(w, i + 1))
    }

    fn length(&self, w: &[f64]) -> Result<f64> {
        (0..self.m).map(|i| self.segment(w, i)).sum()
    }

    fn polygon(&self, w: &[f64]) -> Vec<Vec<f64>> {
        (0..self.m).map(|i| self.vertex(w, i)).collect()
    }

    fn minimise(&self, w0: Vec<f64>, opts: LbfgsOptions) -> (Vec<f64>, f64, bool) {
        let k = self.width();
        let m = self.m;
        let res = lbfgs(
            |w, g| {
                let total = self.length(w).ok()?;
                let mut probe = w.to_vec();
                for idx in 0..w.len() {
                    let i = idx / k;
                    let prev = (i + m - 1) % m;
                    let local = |p: &[f64]| -> Option<f64> {
                        Some(self.segment(p, prev).ok()? + self.segment(p, i).ok()?)
                    };
                    let h = FD_STEP * w[idx].abs().max(1.0);
                    probe[idx] = w[idx] + h;
                    let fp = local(&probe)?;
                    probe[idx] = w[idx] - h;
                    let fm = local(&probe)?;
                    probe[idx] = w[idx];
                    g[idx] = (fp - fm) / (2.0 * h);
                }
                Some(total)
            },
            w0,
            opts,
        );
        (res.x, res.value, res.converged)
    }
}

/// Linear upsampling of periodic per-vertex coordinates from `m0` to `m` vertices.
fn upsample(w: &[f64], width: usize, m0: usize, m: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * width];
    for i in 0..m {
        let s = i as f64 * m0 as f64 / m as f64;
        let j = s.floor() as usize;
        let f = s - j as f64;
        for k in 0..width {
            out[i * width + k] = (1.0 - f) * w[(j % m0) * width + k] + f * w[((j + 1) % m0) * width + k];
        }
    }
    out
}

fn optimiser_options() -> LbfgsOptions {
    LbfgsOptions {
        max_iter: 2000,
        history: 8,
        grad_tol: 1e-7,
    }
}

/// Minimum of a conformal factor over the base, by dense sampling and local refinement.
pub fn conformal_minimum(model: &ManifoldModel, factor: &BaseField) -> Result<f64> {
    let mut samples: Vec<Vec<f64>> = Vec::new();
    if model.is_spherical() {
        let mut rng = ChaCha8Rng::seed_from_u64(0x3141);
        for _ in 0..4096 {
            samples.push(model.sample_base(&mut rng));
        }
    } else {
        let n = model.dim();
        let per_axis: usize = match n {
            2 => 128,
            3 => 32,
            _ => 8,
        };
        let total = per_axis.pow(n as u32);
        for idx in 0..total {
            let mut rem = idx;
            let x: Vec<f64> = model
                .periods()
                .iter()
                .map(|p| {
                    let c = rem % per_axis;
                    rem /= per_axis;
                    (c as f64 + 0.5) / per_axis as f64 * p
                })
                .collect();
            samples.push(x);
        }
    }
    let mut values: Vec<(f64, usize)> = samples
        .iter()
        .enumerate()
        .map(|(i, x)| Ok((factor.eval(x)?, i)))
        .collect::<Result<_>>()?;
    values.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut best = values[0].0;
    for &(_, i) in values.iter().take(4) {
        let eval = |y: &[f64]| -> Option<f64> {
            let x = if model.is_spherical() { normalize(y) } else { y.to_vec() };
            factor.eval(&x).ok()
        };
        let res = lbfgs(
            |y, g| {
                let f = eval(y)?;
                let mut probe = y.to_vec();
                for k in 0..y.len() {
                    let h = 1e-7 * y[k].abs().max(1.0);
                    probe[k] = y[k] + h;
                    let fp = eval(&probe)?;
                    probe[k] = y[k] - h;
                    let fm = eval(&probe)?;
                    probe[k] = y[k];
                    g[k] = (fp - fm) / (2.0 * h);
                }
                Some(f)
            },
            samples[i].clone(),
            LbfgsOptions {
                max_iter: 200,
                ..LbfgsOptions::default()
            },
        );
        best = best.min(res.value);
    }
    Ok(best)
}

fn flat_class_length(model: &ManifoldModel, z: &[i64]) -> Result<f64> {
    Ok(norm(&class_shift(model, z)?))
}

/// Shortest oriented loop in class `z` on a flat torus.
pub fn systole_torus(metric: &FinslerMetric, z: &[i64], opts: &SystoleOptions) -> Result<SystoleEstimate> {
    let class = LoopClass::torus(z.to_vec())?;
    let model = metric.model();
    if model.kind() != ModelKind::FlatTorus {
        return Err(Error::Unsupported("systole_torus needs a flat torus".into()));
    }
    let m = opts.vertices.max(MIN_VERTICES);
    let coarse = TorusLoop::new(metric, z, COARSE_VERTICES.min(m))?;
    let fine = TorusLoop::new(metric, z, m)?;
    let k = coarse.width();
    let span = model.periods().iter().copied().fold(0.0, f64::max);
    let runs: Vec<(Vec<f64>, f64, bool)> = (0..opts.restarts.max(1))
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ (r as u64).wrapping_mul(0x9e37_79b9));
            let offsets: Vec<f64> = (0..k).map(|_| rng.gen::<f64>() * span).collect();
            let w0: Vec<f64> = (0..coarse.m * k)
                .map(|idx| offsets[idx % k] + 0.02 * span * (rng.gen::<f64>() - 0.5))
                .collect();
            let (w, _, _) = coarse.minimise(w0, optimiser_options());
            let start = if fine.m == coarse.m { w } else { upsample(&w, k, coarse.m, fine.m) };
            fine.minimise(start, optimiser_options())
        })
        .collect();
    let (w, length, converged) = runs
        .into_iter()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("at least one restart");
    let lower_bound = match metric.conformal_factor() {
        Some(f) => Some(conformal_minimum(model, f)? * flat_class_length(model, z)?),
        None => None,
    };
    Ok(SystoleEstimate {
        length,
        class,
        polygon: fine.polygon(&w),
        converged,
        lower_bound,
    })
}

/// Systole over all classes with ‖z‖∞ ≤ `opts.max_class`, both orientations for
/// non-reversible metrics. Classes whose lower bound already exceeds the best
/// length are skipped.
pub fn systole_torus_all(metric: &FinslerMetric, opts: &SystoleOptions) -> Result<SystoleEstimate> {
    let model = metric.model();
    let n = model.dim();
    let zmax = opts.max_class.max(1);
    let mut classes: Vec<Vec<i64>> = Vec::new();
    let side = (2 * zmax + 1) as usize;
    for idx in 0..side.pow(n as u32) {
        let mut rem = idx;
        let z: Vec<i64> = (0..n)
            .map(|_| {
                let c = (rem % side) as i64 - zmax;
                rem /= side;
                c
            })
            .collect();
        let leading = z.iter().find(|c| **c != 0).copied();
        match leading {
            None => continue,
            Some(c) if c < 0 && metric.is_reversible() => continue,
            _ => classes.push(z),
        }
    }
    let lengths: Vec<f64> = classes
        .iter()
        .map(|z| flat_class_length(model, z))
        .collect::<Result<_>>()?;
    let mut order: Vec<usize> = (0..classes.len()).collect();
    order.sort_by(|a, b| lengths[*a].total_cmp(&lengths[*b]));
    let scale = match metric.conformal_factor() {
        Some(f) => conformal_minimum(model, f)?,
        None => sampled_metric_floor(metric)?,
    };
    let mut best: Option<SystoleEstimate> = None;
    for i in order {
        if let Some(b) = &best {
            if scale * lengths[i] >= b.length {
                continue;
            }
        }
        let est = systole_torus(metric, &classes[i], opts)?;
        if best.as_ref().is_none_or(|b| est.length < b.length) {
            best = Some(est);
        }
    }
    best.ok_or_else(|| Error::InvalidArgument("no classes to search".into()))
}

/// min L(x, v) over sampled unit vectors; a pruning scale for non-conformal metrics.
fn sampled_metric_floor(metric: &FinslerMetric) -> Result<f64> {
    let model = metric.model();
    let mut rng = ChaCha8Rng::seed_from_u64(0xf100);
    let mut best = f64::INFINITY;
    for _ in 0..4096 {
        let x = model.sample_base(&mut rng);
        let v = model.sample_unit_tangent(&x, &mut rng);
        best = best.min(metric.eval(&x, &v)?);
    }
    Ok(best)
}

fn fibonacci_hemisphere(count: usize) -> Vec<Vec<f64>> {
    let golden = PI * (3.0 - 5f64.sqrt());
    (0..count)
        .map(|i| {
            let z = 1.0 - (i as f64 + 0.5) / count as f64;
            let r = (1.0 - z * z).sqrt();
            let phi = golden * i as f64;
            vec![r * phi.cos(), r * phi.sin(), z]
        })
        .collect()
}

fn half_circle(x: &[f64], u: &[f64], m: usize) -> Vec<Vec<f64>> {
    (0..m)
        .map(|i| {
            let t = PI * i as f64 / m as f64;
            (0..3).map(|k| t.cos() * x[k] + t.sin() * u[k]).collect()
        })
        .collect()
}

/// RP² loops as graphs over a great half circle: vertex i sits at longitude tᵢ = πi/m
/// and latitude wᵢ, i.e. cos(wᵢ)(cos(tᵢ) x + sin(tᵢ) u) + sin(wᵢ) n with n = x × u.
/// The closing segment runs to the antipode of vertex 0, so w_m = -w_0.
struct ProjectiveLoop<'a> {
    metric: &'a FinslerMetric,
    x: Vec<f64>,
    u: Vec<f64>,
    n: Vec<f64>,
    m: usize,
}

impl<'a> ProjectiveLoop<'a> {
    fn new(metric: &'a FinslerMetric, x: &[f64], u: &[f64], m: usize) -> Self {
        let n = cross(x, u).to_vec();
        Self { metric, x: x.to_vec(), u: u.to_vec(), n, m }
    }

    fn vertex(&self, w: &[f64], i: usize) -> Vec<f64> {
        if i == self.m {
            return self.vertex(w, 0).iter().map(|v| -v).collect();
        }
        let t = PI * i as f64 / self.m as f64;
        let (s, c) = w[i].sin_cos();
        (0..3)
            .map(|k| c * (t.cos() * self.x[k] + t.sin() * self.u[k]) + s * self.n[k])
            .collect()
    }

    fn segment(&self, w: &[f64], i: usize) -> Result<f64> {
        sphere_segment(self.metric, &self.vertex(w, i), &self.vertex(w, i + 1))
    }

    fn length(&self, w: &[f64]) -> Result<f64> {
        (0..self.m).map(|i| self.segment(w, i)).sum()
    }

    fn polygon(&self, w: &[f64]) -> Vec<Vec<f64>> {
        (0..self.m).map(|i| self.vertex(w, i)).collect()
    }

    fn minimise(&self, w0: Vec<f64>, opts: LbfgsOptions) -> (Vec<f64>, f64, bool) {
        let m = self.m;
        let res = lbfgs(
            |w, g| {
                let total = self.length(w).ok()?;
                let mut probe = w.to_vec();
                for i in 0..m {
                    let prev = (i + m - 1) % m;
                    let local = |p: &[f64]| -> Option<f64> {
                        Some(self.segment(p, prev).ok()? + self.segment(p, i).ok()?)
                    };
                    let h = FD_STEP * w[i].abs().max(1.0);
                    probe[i] = w[i] + h;
                    let fp = local(&probe)?;
                    probe[i] = w[i] - h;
                    let fm = local(&probe)?;
                    probe[i] = w[i];
                    g[i] = (fp - fm) / (2.0 * h);
                }
                Some(total)
            },
            w0,
            opts,
        );
        (res.x, res.value, res.converged)
    }
}

/// Linear upsampling of twisted-periodic offsets (w_m = -w_0) from `m0` to `m` vertices.
fn upsample_twisted(w: &[f64], m0: usize, m: usize) -> Vec<f64> {
    (0..m)
        .map(|i| {
            let s = i as f64 * m0 as f64 / m as f64;
            let j = s.floor() as usize;
            let f = s - j as f64;
            let next = if j + 1 < m0 { w[j + 1] } else { -w[0] };
            (1.0 - f) * w[j] + f * next
        })
        .collect()
}

/// Shortest loop in the non-trivial class of RP², as a path from x to -x on the
/// sphere, deformed from `starts` great half circles with normals spread over a hemisphere.
pub fn systole_rp2(metric: &FinslerMetric, opts: &SystoleOptions, starts: usize) -> Result<SystoleEstimate> {
    let model = metric.model();
    if model.kind() != ModelKind::ProjectivePlane2 {
        return Err(Error::Unsupported("systole_rp2 needs the projective plane".into()));
    }
    let m = opts.vertices.max(MIN_VERTICES);
    let m0 = COARSE_VERTICES.min(m);
    let points = fibonacci_hemisphere(starts.max(1));
    let runs: Vec<(Vec<Vec<f64>>, f64, bool)> = points
        .into_par_iter()
        .enumerate()
        .map(|(r, normal)| {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ (r as u64).wrapping_mul(0x9e37_79b9));
            let x = model.sample_unit_tangent(&normal, &mut rng);
            let u = cross(&normal, &x).to_vec();
            let coarse = ProjectiveLoop::new(metric, &x, &u, m0);
            let (w, _, _) = coarse.minimise(vec![0.0; m0], optimiser_options());
            let fine = ProjectiveLoop::new(metric, &x, &u, m);
            let start = if m == m0 { w } else { upsample_twisted(&w, m0, m) };
            let (w, length, converged) = fine.minimise(start, optimiser_options());
            (fine.polygon(&w), length, converged)
        })
        .collect();
    let (polygon, length, converged) = runs
        .into_iter()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("at least one start");
    let lower_bound = match metric.conformal_factor() {
        Some(f) => Some(conformal_minimum(model, f)? * PI),
        None => None,
    };
    Ok(SystoleEstimate {
        length,
        class: LoopClass::ProjectiveNontrivial,
        polygon,
        converged,
        lower_bound,
    })
}

/// Shortest half great circle among `count` start points × 16 directions: an upper
/// bound for the RP² systole.
pub fn half_great_circle_bound(metric: &FinslerMetric, count: usize, m: usize) -> Result<f64> {
    let mut best = f64::INFINITY;
    for x in fibonacci_hemisphere(count) {
        let frame = metric.model().tangent_basis(&x);
        for k in 0..16 {
            let t = PI * k as f64 / 16.0;
            let u: Vec<f64> = (0..3).map(|i| t.cos() * frame[0][i] + t.sin() * frame[1][i]).collect();
            best = best.min(loop_length(metric, &half_circle(&x, &u, m), &LoopClass::ProjectiveNontrivial)?);
        }
    }
    Ok(best)
}

/// Systole of the model's reference metric: shortest period vector on tori, π on RP².
pub fn reference_systole(model: &ManifoldModel) -> Result<f64> {
    match model.kind() {
        ModelKind::FlatTorus => Ok(model.periods().iter().copied().fold(f64::INFINITY, f64::min)),
        ModelKind::ProjectivePlane2 => Ok(PI),
        ModelKind::RoundSphere2 => Err(Error::Unsupported("the sphere is simply connected".into())),
    }
}

/// Systole with the model-appropriate search.
pub fn systole(metric: &FinslerMetric, opts: &SystoleOptions) -> Result<SystoleEstimate> {
    match metric.model().kind() {
        ModelKind::FlatTorus => systole_torus_all(metric, opts),
        ModelKind::ProjectivePlane2 => systole_rp2(metric, opts, RP2_STARTS),
        ModelKind::RoundSphere2 => Err(Error::Unsupported("the sphere is simply connected".into())),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsosystolicReport {
    pub systole: SystoleEstimate,
    pub reference_systole: f64,
    pub sys_ratio: f64,
    pub w_tilde: f64,
    pub vol_ratio_root: f64,
    /// sys_ratio ≤ W̃_{n-1} and W̃_{n-1} ≤ (vol ratio)^{1/n}.
    pub chain: [InequalityVerdict; 2],
    pub chain_holds: bool,
    /// Change of the systole estimate when the polygon is refined from m/2 vertices.
    pub refinement_change: f64,
    pub converged: bool,
    /// (2/π) sys² / area on RP².
    pub pu_ratio: Option<f64>,
}

/// Runs the chain sys(L)/sys(L₀) ≤ W̃_{n-1}(L) ≤ (vol(L)/vol(L₀))^{1/n} for a metric
/// conformal to the model metric.
pub fn isosystolic_report(
    metric: &FinslerMetric,
    grid: &Arc<CosphereGrid>,
    opts: &SystoleOptions,
    tol: f64,
) -> Result<IsosystolicReport> {
    let model = metric.model();
    if metric.conformal_factor().is_none() {
        return Err(Error::Unsupported(
            "the isosystolic chain is implemented for conformal metrics".into(),
        ));
    }
    let n = model.dim();
    let fine = systole(metric, opts)?;
    let coarse_opts = SystoleOptions {
        vertices: (opts.vertices / 2).max(MIN_VERTICES),
        ..*opts
    };
    let coarse = systole(metric, &coarse_opts)?;
    let refinement_change = (fine.length - coarse.length).abs();
    let reference = reference_systole(model)?;
    let sys_ratio = fine.length / reference;
    let w_tilde = emv_metric(metric, n - 1, grid)?;
    let vol = holmes_thompson_volume(metric, grid)?;
    let vol0 = holmes_thompson_volume(&FinslerMetric::euclidean(model), grid)?;
    let vol_ratio_root = (vol / vol0).powf(1.0 / n as f64);
    let chain = [
        chain_verdict("systole_ratio_vs_w_tilde", sys_ratio, w_tilde, tol),
        chain_verdict("w_tilde_vs_volume_root", w_tilde, vol_ratio_root, tol),
    ];
    let chain_holds = chain.iter().all(|v| v.holds);
    let pu_ratio = (model.kind() == ModelKind::ProjectivePlane2).then(|| 2.0 / PI * fine.length.powi(2) / vol);
    Ok(IsosystolicReport {
        converged: fine.converged && refinement_change < REFINEMENT_TOL,
        systole: fine,
        reference_systole: reference,
        sys_ratio,
        w_tilde,
        vol_ratio_root,
        chain,
        chain_holds,
        refinement_change,
        pu_ratio,
    })
}

fn chain_verdict(name: &str, lhs: f64, rhs: f64, tol: f64) -> InequalityVerdict {
    let mut v = InequalityVerdict::inequality(name, lhs, rhs, tol, false);
    v.equality_case_detected = v.slack.abs() <= tol * lhs.abs().max(rhs.abs());
    v
}
