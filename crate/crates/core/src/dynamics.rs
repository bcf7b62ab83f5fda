//! Hamiltonian flows on the level H = 1, Poisson brackets, orbit averages, the
//! averaging normal form, and closed characteristics of Hamiltonians commuting
//! with a periodic model flow.
//!
//! Conventions: `{x, p} = +1`, `X_H = (∂H/∂p, -∂H/∂x)`, so `d/dt f(φ_t z) = {f, H}`.
//! Sphere models are integrated in ambient coordinates of R³ × R³ using the
//! extension `H̃(x, p) = H(x/|x|, |x| (p - (p·x̂) x̂))`, whose flow preserves the
//! constraints `|x| = 1`, `x·p = 0`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::Field;
use crate::geometry::{CosphereGrid, CotangentPoint, ManifoldModel};
use crate::numerics::{dot, norm, simpson};
use crate::starbody::{body_from_hamiltonian, StarHamiltonian};

/// Relative central-difference step for phase-space gradients.
pub const FD_STEP: f64 = 1e-5;
/// Largest tolerated per-step energy error before renormalisation.
pub const DRIFT_LIMIT: f64 = 1e-6;
/// Required accuracy of `H(z₀) = 1` at the start of a trajectory.
pub const LEVEL_TOL: f64 = 1e-9;
/// Phase-space gap below which an orbit counts as closed.
pub const CLOSURE_TOL: f64 = 1e-6;
pub const NORMAL_FORM_TOL: f64 = 1e-3;
pub const CHARACTERISTIC_TOL: f64 = 1e-4;
pub const INVARIANCE_TOL: f64 = 1e-5;
const MAX_STEPS: usize = 100_000_000;
const DESCENT_STEPS: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub point: CotangentPoint,
    pub energy: f64,
    pub action: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    pub action: f64,
    pub dt: f64,
    /// Largest |H - 1| seen after any step, before renormalisation.
    pub h_drift: f64,
}

impl Trajectory {
    pub fn start(&self) -> &CotangentPoint {
        &self.samples[0].point
    }

    pub fn end(&self) -> &CotangentPoint {
        &self.samples[self.samples.len() - 1].point
    }

    pub fn duration(&self) -> f64 {
        self.samples[self.samples.len() - 1].t - self.samples[0].t
    }
}

fn split(model: &ManifoldModel, state: &[f64]) -> CotangentPoint {
    let n = model.ambient_dim();
    CotangentPoint {
        base: state[..n].to_vec(),
        momentum: state[n..].to_vec(),
    }
}

fn join(z: &CotangentPoint) -> Vec<f64> {
    z.base.iter().chain(&z.momentum).copied().collect()
}

/// The scale-invariant extension point `(x/|x|, |x| P_x p)`; identity on tori.
fn extension_point(model: &ManifoldModel, state: &[f64]) -> CotangentPoint {
    if !model.is_spherical() {
        return split(model, state);
    }
    let (x, p) = state.split_at(3);
    let r = norm(x);
    let xh: Vec<f64> = x.iter().map(|v| v / r).collect();
    let px = dot(p, &xh);
    CotangentPoint {
        momentum: p.iter().zip(&xh).map(|(pi, xi)| r * (pi - px * xi)).collect(),
        base: xh,
    }
}

/// Ambient gradient `(∂f/∂x, ∂f/∂p)` of the (extended) phase function.
pub fn phase_gradient(model: &ManifoldModel, f: &Field, z: &CotangentPoint) -> Result<(Vec<f64>, Vec<f64>)> {
    if let Some(g) = f.gradient(z) {
        return Ok(g);
    }
    let state = join(z);
    let n = model.ambient_dim();
    let mut grad = vec![0.0; 2 * n];
    let mut probe = state.clone();
    for i in 0..2 * n {
        let h = FD_STEP * state[i].abs().max(1.0);
        probe[i] = state[i] + h;
        let fp = f.eval(&extension_point(model, &probe))?;
        probe[i] = state[i] - h;
        let fm = f.eval(&extension_point(model, &probe))?;
        probe[i] = state[i];
        grad[i] = (fp - fm) / (2.0 * h);
    }
    let dp = grad.split_off(n);
    Ok((grad, dp))
}

/// `X_H(z) = (∂H/∂p, -∂H/∂x)` in ambient components.
pub fn hamiltonian_vector_field(model: &ManifoldModel, h: &Field, z: &CotangentPoint) -> Result<(Vec<f64>, Vec<f64>)> {
    let (dx, dp) = phase_gradient(model, h, z)?;
    Ok((dp, dx.into_iter().map(|v| -v).collect()))
}

/// Rates of change of the sphere constraints `|x|²` and `x·p` along a vector; zero on tori.
pub fn constraint_residual(model: &ManifoldModel, z: &CotangentPoint, xdot: &[f64], pdot: &[f64]) -> f64 {
    if !model.is_spherical() {
        return 0.0;
    }
    let radial = 2.0 * dot(&z.base, xdot);
    let pairing = dot(xdot, &z.momentum) + dot(&z.base, pdot);
    radial.abs().max(pairing.abs())
}

/// `{f, g} = Σ ∂f/∂xᵢ ∂g/∂pᵢ - ∂f/∂pᵢ ∂g/∂xᵢ`.
pub fn poisson_bracket(model: &ManifoldModel, f: &Field, g: &Field, z: &CotangentPoint) -> Result<f64> {
    let (fx, fp) = phase_gradient(model, f, z)?;
    let (gx, gp) = phase_gradient(model, g, z)?;
    Ok(dot(&fx, &gp) - dot(&fp, &gx))
}

fn vector_field_state(model: &ManifoldModel, h: &Field, state: &[f64], out: &mut [f64]) -> Result<()> {
    let n = model.ambient_dim();
    let (xdot, pdot) = hamiltonian_vector_field(model, h, &split(model, state))?;
    out[..n].copy_from_slice(&xdot);
    out[n..].copy_from_slice(&pdot);
    Ok(())
}

/// Puts the state back on the constraint set and on the level H = 1;
/// returns |H - 1| before rescaling.
fn renormalise(model: &ManifoldModel, h: &Field, state: &mut [f64]) -> Result<f64> {
    let n = model.ambient_dim();
    if model.is_spherical() {
        let z = extension_point(model, state);
        state[..n].copy_from_slice(&z.base);
        state[n..].copy_from_slice(&z.momentum);
    }
    let e = h.eval(&split(model, state))?;
    if !(e > 0.0 && e.is_finite()) {
        return Err(Error::Numerical(format!("Hamiltonian left the positive range: {e}")));
    }
    state[n..].iter_mut().for_each(|p| *p /= e);
    Ok((e - 1.0).abs())
}

/// Fixed-step RK4 with renormalisation, calling `visit(step, state, drift)` on the
/// initial state and after every step.
fn run_orbit(
    model: &ManifoldModel,
    h: &Field,
    start: &CotangentPoint,
    steps: usize,
    dt: f64,
    mut visit: impl FnMut(usize, &[f64], f64) -> Result<()>,
) -> Result<()> {
    let d = 2 * model.ambient_dim();
    let mut y = join(start);
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; d], vec![0.0; d], vec![0.0; d], vec![0.0; d]);
    let mut tmp = vec![0.0; d];
    visit(0, &y, 0.0)?;
    for step in 1..=steps {
        vector_field_state(model, h, &y, &mut k1)?;
        for i in 0..d {
            tmp[i] = y[i] + 0.5 * dt * k1[i];
        }
        vector_field_state(model, h, &tmp, &mut k2)?;
        for i in 0..d {
            tmp[i] = y[i] + 0.5 * dt * k2[i];
        }
        vector_field_state(model, h, &tmp, &mut k3)?;
        for i in 0..d {
            tmp[i] = y[i] + dt * k3[i];
        }
        vector_field_state(model, h, &tmp, &mut k4)?;
        for i in 0..d {
            y[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        let drift = renormalise(model, h, &mut y)?;
        if drift > DRIFT_LIMIT {
            return Err(Error::Numerical(format!(
                "energy drift {drift:e} after step {step} exceeds {DRIFT_LIMIT:e}; reduce dt"
            )));
        }
        visit(step, &y, drift)?;
    }
    Ok(())
}

fn step_count(duration: f64, dt: f64) -> Result<(usize, f64)> {
    if !(duration > 0.0 && dt > 0.0 && duration.is_finite()) {
        return Err(Error::InvalidArgument("duration and dt must be positive".into()));
    }
    let steps = (duration / dt - 1e-9).ceil().max(1.0);
    if steps > MAX_STEPS as f64 {
        return Err(Error::InvalidArgument(format!("step underflow: {steps} steps requested")));
    }
    let steps = steps as usize;
    Ok((steps, duration / steps as f64))
}

fn check_level(h: &Field, z: &CotangentPoint) -> Result<()> {
    let e = h.eval(z)?;
    if (e - 1.0).abs() > LEVEL_TOL {
        return Err(Error::InvalidArgument(format!(
            "initial point must lie on H = 1 (H = {e})"
        )));
    }
    Ok(())
}

/// Integrates the flow of `h` from `z0` (on H = 1) for `duration`; the step is
/// shortened so that a whole number of steps lands on `duration`.
pub fn integrate_flow(
    model: &ManifoldModel,
    h: &Field,
    z0: &CotangentPoint,
    duration: f64,
    dt: f64,
) -> Result<Trajectory> {
    check_level(h, z0)?;
    let (steps, dt) = step_count(duration, dt)?;
    let n = model.ambient_dim();
    let mut samples = Vec::with_capacity(steps + 1);
    let mut pairing = Vec::with_capacity(steps + 1);
    let mut drift_max = 0.0f64;
    run_orbit(model, h, z0, steps, dt, |step, y, drift| {
        drift_max = drift_max.max(drift);
        let z = split(model, y);
        let (xdot, _) = hamiltonian_vector_field(model, h, &z)?;
        pairing.push(dot(&y[n..], &xdot));
        let action = if step == 0 { 0.0 } else { simpson(&pairing, dt) };
        let energy = h.eval(&z)?;
        samples.push(Sample {
            t: step as f64 * dt,
            point: model.canonical_point(&z),
            energy,
            action,
        });
        Ok(())
    })?;
    let action = samples.last().map(|s| s.action).unwrap_or(0.0);
    Ok(Trajectory {
        samples,
        action,
        dt,
        h_drift: drift_max,
    })
}

/// Orbit of `h0` through `z / h0(z)` for one period, as raw states.
fn period_orbit(model: &ManifoldModel, h0: &Field, z: &CotangentPoint, period: f64, steps: usize) -> Result<(f64, Vec<Vec<f64>>)> {
    let scale = h0.eval(z)?;
    if !(scale > 0.0) {
        return Err(Error::NonPositive { node: 0, value: scale });
    }
    let start = z.scaled(1.0 / scale);
    let dt = period / steps as f64;
    let mut states = Vec::with_capacity(steps + 1);
    run_orbit(model, h0, &start, steps, dt, |_, y, _| {
        states.push(y.to_vec());
        Ok(())
    })?;
    let gap = model.phase_gap(&start, &split(model, &states[steps]));
    if gap > CLOSURE_TOL {
        return Err(Error::OrbitNotClosed { gap });
    }
    Ok((scale, states))
}

/// Mean of `g` along the closed `h0`-orbit through `z`, by composite Simpson.
///
/// Off the unit level the orbit of `z / h0(z)` is used and rescaled, since
/// degree-one flows commute with fibre dilation.
pub fn flow_average(
    model: &ManifoldModel,
    h0: &Field,
    g: &Field,
    z: &CotangentPoint,
    period: f64,
    steps: usize,
) -> Result<f64> {
    let steps = steps + steps % 2;
    let (scale, states) = period_orbit(model, h0, z, period, steps)?;
    let values: Vec<f64> = states
        .iter()
        .map(|y| g.eval(&split(model, y).scaled(scale)))
        .collect::<Result<_>>()?;
    Ok(simpson(&values, period / steps as f64) / period)
}

/// `-(1/T) ∫₀ᵀ t g(φ_t z) dt`.
fn weighted_orbit_integral(
    model: &ManifoldModel,
    h0: &Field,
    g: &Field,
    z: &CotangentPoint,
    period: f64,
    steps: usize,
) -> Result<(f64, f64)> {
    let steps = steps + steps % 2;
    let (scale, states) = period_orbit(model, h0, z, period, steps)?;
    let dt = period / steps as f64;
    let mut plain = Vec::with_capacity(states.len());
    let mut weighted = Vec::with_capacity(states.len());
    for (i, y) in states.iter().enumerate() {
        let v = g.eval(&split(model, y).scaled(scale))?;
        plain.push(v);
        weighted.push(i as f64 * dt * v);
    }
    Ok((simpson(&plain, dt) / period, -simpson(&weighted, dt) / period))
}

/// `H₁ = E + {H₀, F}` with E invariant under the periodic `H₀`-flow.
#[derive(Debug, Clone)]
pub struct NormalFormPair {
    pub invariant: Field,
    pub generator: Field,
    pub diagnostics: NormalFormDiagnostics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalFormDiagnostics {
    /// max over probes of |H₁ - E - {H₀, F}|.
    pub residual: f64,
    /// max over probes of |{H₀, E}|.
    pub invariance_defect: f64,
    pub probes: usize,
    pub period: f64,
    pub steps: usize,
}

/// Orbit-average decomposition of a perturbation `h1` of the periodic `h0`.
///
/// E is the orbit average of `h1`; F = -(1/T) ∫₀ᵀ t (H₁ - E)(φ_t z) dt, which solves
/// `{H₀, F} = H₁ - E` under the bracket convention of this module.
pub fn normal_form_decompose(
    model: &ManifoldModel,
    h0: &Field,
    h1: &Field,
    period: f64,
    probes: &[CotangentPoint],
    steps: usize,
) -> Result<NormalFormPair> {
    let invariant = {
        let (m, h0, h1) = (model.clone(), h0.clone(), h1.clone());
        Field::from_fn(format!("avg({})", h1.describe()), move |z| {
            flow_average(&m, &h0, &h1, z, period, steps)
        })
    };
    let generator = {
        let (m, h0, h1) = (model.clone(), h0.clone(), h1.clone());
        Field::from_fn(format!("gen({})", h1.describe()), move |z| {
            let (mean, tail) = weighted_orbit_integral(&m, &h0, &h1, z, period, steps)?;
            Ok(tail + 0.5 * period * mean)
        })
    };
    let per_probe: Vec<(f64, f64)> = probes
        .par_iter()
        .map(|z| {
            let e = invariant.eval(z)?;
            let lhs = h1.eval(z)? - e - poisson_bracket(model, h0, &generator, z)?;
            let inv = poisson_bracket(model, h0, &invariant, z)?;
            Ok((lhs.abs(), inv.abs()))
        })
        .collect::<Result<_>>()?;
    let residual = per_probe.iter().map(|r| r.0).fold(0.0, f64::max);
    let invariance_defect = per_probe.iter().map(|r| r.1).fold(0.0, f64::max);
    let diagnostics = NormalFormDiagnostics {
        residual,
        invariance_defect,
        probes: probes.len(),
        period,
        steps,
    };
    if residual > NORMAL_FORM_TOL {
        return Err(Error::Numerical(format!(
            "normal form residual {residual:e} exceeds {NORMAL_FORM_TOL:e} ({diagnostics:?})"
        )));
    }
    Ok(NormalFormPair {
        invariant,
        generator,
        diagnostics,
    })
}

/// Random probe points on the unit cosphere bundle of the model.
pub fn cosphere_probes(model: &ManifoldModel, count: usize, seed: u64) -> Vec<CotangentPoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let x = model.sample_base(&mut rng);
            let p = model.sample_unit_tangent(&x, &mut rng);
            CotangentPoint { base: x, momentum: p }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClosedCharacteristic {
    /// Samples of γ in its own time, on the level H = 1.
    pub trajectory: Trajectory,
    /// λ = min ρ.
    pub scale: f64,
    /// Period of the model flow.
    pub model_period: f64,
    /// max |X_H(γ) - γ'/λ| at the checked samples.
    pub residual: f64,
}

fn max_rho_variation(model: &ManifoldModel, h0: &Field, h: &Field, z: &CotangentPoint, period: f64) -> Result<f64> {
    let (_, states) = period_orbit(model, h0, z, period, 256)?;
    let rho: Vec<f64> = states
        .iter()
        .step_by(4)
        .map(|y| h.eval(&split(model, y)).map(|v| 1.0 / v))
        .collect::<Result<_>>()?;
    let hi = rho.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = rho.iter().copied().fold(f64::INFINITY, f64::min);
    Ok((hi - lo) / hi)
}

/// Tangent projection onto the unit cosphere bundle of the sphere.
fn project_cosphere(state: &[f64], g: &mut [f64]) {
    let (x, p) = state.split_at(3);
    let normals = [
        [x[0], x[1], x[2], 0.0, 0.0, 0.0],
        [p[0], p[1], p[2], x[0], x[1], x[2]],
        [0.0, 0.0, 0.0, p[0], p[1], p[2]],
    ];
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for nv in normals {
        let mut v = nv.to_vec();
        for b in &basis {
            let c = dot(&v, b);
            v.iter_mut().zip(b).for_each(|(vi, bi)| *vi -= c * bi);
        }
        let vn = norm(&v);
        if vn > 1e-12 {
            basis.push(v.iter().map(|c| c / vn).collect());
        }
    }
    for b in &basis {
        let c = dot(g, b);
        g.iter_mut().zip(b).for_each(|(gi, bi)| *gi -= c * bi);
    }
}

fn retract_cosphere(state: &mut [f64]) {
    let xn = norm(&state[..3]);
    state[..3].iter_mut().for_each(|v| *v /= xn);
    let px = dot(&state[..3], &state[3..]);
    for i in 0..3 {
        state[3 + i] -= px * state[i];
    }
    let pn = norm(&state[3..]);
    state[3..].iter_mut().for_each(|v| *v /= pn);
}

/// Closed characteristic of a Hamiltonian whose radial function is invariant
/// under the periodic model flow: γ = λσ with λ = min ρ and σ the model orbit
/// through a minimiser of ρ.
pub fn find_closed_characteristic(h: &StarHamiltonian, grid: &std::sync::Arc<CosphereGrid>) -> Result<ClosedCharacteristic> {
    let model = h.model();
    let period = model.round_flow_period().ok_or_else(|| {
        Error::Unsupported("closed characteristics need a model with periodic reference flow".into())
    })?;
    let h0 = Field::model_norm(model);
    let field = h.field();
    let body = body_from_hamiltonian(h, grid)?;
    let (imin, _) = body
        .rho()
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .ok_or_else(|| Error::InvalidArgument("empty grid".into()))?;

    let mut rng = ChaCha8Rng::seed_from_u64(0xc1_05ed);
    let mut checks = vec![imin];
    checks.extend((0..8).map(|_| rng.gen_range(0..grid.len())));
    for i in checks {
        let variation = max_rho_variation(model, &h0, field, &grid.nodes()[i].point, period)?;
        if variation > INVARIANCE_TOL {
            return Err(Error::NotFlowInvariant { variation });
        }
    }

    let rho_at = |s: &[f64]| -> Result<f64> { Ok(1.0 / field.eval(&extension_point(model, s))?) };
    let mut state = join(&grid.nodes()[imin].point);
    let mut value = rho_at(&state)?;
    for _ in 0..DESCENT_STEPS {
        let (dx, dp) = phase_gradient(model, field, &split(model, &state))?;
        let hv = 1.0 / value;
        let mut g: Vec<f64> = dx.iter().chain(&dp).map(|v| -v / (hv * hv)).collect();
        project_cosphere(&state, &mut g);
        let gg = dot(&g, &g);
        if gg.sqrt() < 1e-12 {
            break;
        }
        let mut s = 1.0;
        let mut improved = false;
        while s > 1e-12 {
            let mut trial: Vec<f64> = state.iter().zip(&g).map(|(y, gi)| y - s * gi).collect();
            retract_cosphere(&mut trial);
            let tv = rho_at(&trial)?;
            if tv <= value - 1e-4 * s * gg {
                state = trial;
                value = tv;
                improved = true;
                break;
            }
            s *= 0.5;
        }
        if !improved {
            break;
        }
    }
    let lambda = value;

    let steps = 2000;
    let (_, sigma) = period_orbit(model, &h0, &split(model, &state), period, steps)?;
    let dt = period / steps as f64;
    let n = model.ambient_dim();
    let gamma = |y: &[f64]| -> CotangentPoint {
        let mut z = split(model, y);
        z.momentum.iter_mut().for_each(|p| *p *= lambda);
        z
    };
    let mut residual = 0.0f64;
    for i in (2..steps - 1).step_by(10) {
        let d: Vec<f64> = (0..2 * n)
            .map(|k| {
                let scale = if k < n { 1.0 } else { lambda };
                scale * (-sigma[i + 2][k] + 8.0 * sigma[i + 1][k] - 8.0 * sigma[i - 1][k] + sigma[i - 2][k])
                    / (12.0 * dt)
            })
            .collect();
        let (xdot, pdot) = hamiltonian_vector_field(model, field, &gamma(&sigma[i]))?;
        for (k, v) in xdot.iter().chain(&pdot).enumerate() {
            residual = residual.max((v - d[k] / lambda).abs());
        }
    }
    if residual > CHARACTERISTIC_TOL {
        return Err(Error::Numerical(format!(
            "Hamilton residual {residual:e} of the constructed characteristic exceeds {CHARACTERISTIC_TOL:e}"
        )));
    }

    let mut pairing = Vec::with_capacity(sigma.len());
    let mut samples = Vec::with_capacity(sigma.len());
    let mut drift = 0.0f64;
    for (i, y) in sigma.iter().enumerate() {
        let z = split(model, y);
        let (xdot, _) = hamiltonian_vector_field(model, &h0, &z)?;
        pairing.push(dot(&z.momentum, &xdot));
        let g = gamma(y);
        let energy = field.eval(&g)?;
        drift = drift.max((energy - 1.0).abs());
        samples.push(Sample {
            t: lambda * i as f64 * dt,
            point: g,
            energy,
            action: if i == 0 { 0.0 } else { lambda * simpson(&pairing, dt) },
        });
    }
    let action = samples.last().map(|s| s.action).unwrap_or(0.0);
    Ok(ClosedCharacteristic {
        trajectory: Trajectory {
            samples,
            action,
            dt: lambda * dt,
            h_drift: drift,
        },
        scale: lambda,
        model_period: period,
        residual,
    })
}

/// `|m̂ · axis|²`-type building block: the normalised angular momentum
/// `m̂ = x × p / |x × p|` of a sphere phase point, conserved by the round flow.
pub fn angular_momentum_direction(z: &CotangentPoint) -> [f64; 3] {
    let m = crate::numerics::cross(&z.base, &z.momentum);
    let r = norm(&m);
    [m[0] / r, m[1] / r, m[2] / r]
}
