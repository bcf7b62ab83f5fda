//! Volumes and dual mixed volumes of star bodies, and checks of the inequalities
//! and identities they satisfy.
//!
//! Everything reduces to weighted sums over the nodes of one grid:
//! `V(A) = Σ w ρ_Aⁿ` and `Ṽ(A₁,…,Aₙ) = Σ w ρ₁⋯ρₙ`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Diffeo, Resolution};
use crate::starbody::{body_from_hamiltonian, radial_sum, dilate, StarBody, StarHamiltonian};

/// Pointwise proportionality threshold used to detect equality cases.
pub const PROPORTIONALITY_TOL: f64 = 1e-8;
/// Floor for relative tolerances: below this the comparison is pure rounding.
pub const ROUNDING_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DmvReport {
    pub value: f64,
    pub bodies: Vec<String>,
    pub resolution: Resolution,
    /// |Ṽ_h − Ṽ_2h| from one coarsening step, when every body has a closed form.
    pub estimated_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InequalityVerdict {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    /// Relative tolerance the verdict was judged at.
    pub tolerance: f64,
    pub holds: bool,
    pub equality_case_detected: bool,
}

impl InequalityVerdict {
    /// Verdict for `lhs <= rhs`.
    pub fn inequality(name: impl Into<String>, lhs: f64, rhs: f64, tol: f64, equality: bool) -> Self {
        let slack = rhs - lhs;
        Self {
            name: name.into(),
            lhs,
            rhs,
            slack,
            tolerance: tol,
            holds: slack >= -tol * lhs.abs().max(rhs.abs()),
            equality_case_detected: equality,
        }
    }

    /// Verdict for `lhs == rhs`; slack is `-|rhs - lhs|` so the same rule decides `holds`.
    pub fn identity(name: impl Into<String>, lhs: f64, rhs: f64, tol: f64) -> Self {
        let slack = -(rhs - lhs).abs();
        let holds = slack >= -tol * lhs.abs().max(rhs.abs());
        Self {
            name: name.into(),
            lhs,
            rhs,
            slack,
            tolerance: tol,
            holds,
            equality_case_detected: holds,
        }
    }

    /// Relative slack `(rhs - lhs) / max(|lhs|, |rhs|)`.
    pub fn relative_slack(&self) -> f64 {
        self.slack / self.lhs.abs().max(self.rhs.abs())
    }
}

fn check_same_grid(bodies: &[&StarBody]) -> Result<()> {
    let first = bodies
        .first()
        .ok_or_else(|| Error::InvalidArgument("no bodies given".into()))?;
    if bodies.iter().any(|b| !std::sync::Arc::ptr_eq(b.grid(), first.grid())) {
        return Err(Error::GridMismatch);
    }
    Ok(())
}

/// V(A) = ∫ ρ_Aⁿ Ω.
pub fn volume(a: &StarBody) -> f64 {
    let n = a.grid().model().dim() as i32;
    let rho = a.rho();
    a.grid().integrate(|i| rho[i].powi(n))
}

/// Ṽ(A₁,…,Aₙ) without an error estimate.
pub fn dmv_value(bodies: &[&StarBody]) -> Result<f64> {
    check_same_grid(bodies)?;
    let n = bodies[0].grid().model().dim();
    if bodies.len() != n {
        return Err(Error::InvalidArgument(format!(
            "dual mixed volume needs {n} bodies, got {}",
            bodies.len()
        )));
    }
    Ok(bodies[0]
        .grid()
        .integrate(|i| bodies.iter().map(|b| b.rho()[i]).product()))
}

/// Ṽ(A₁,…,Aₙ) with a one-step coarsening error estimate when possible.
pub fn dual_mixed_volume(bodies: &[&StarBody]) -> Result<DmvReport> {
    let value = dmv_value(bodies)?;
    let grid = bodies[0].grid();
    let estimated_error = grid.coarsened().and_then(|coarse| {
        let resampled: Option<Vec<StarBody>> = bodies.iter().map(|b| b.resample(&coarse).ok()).collect();
        let resampled = resampled?;
        let refs: Vec<&StarBody> = resampled.iter().collect();
        dmv_value(&refs).ok().map(|c| (c - value).abs())
    });
    Ok(DmvReport {
        value,
        bodies: bodies.iter().map(|b| b.label().to_string()).collect(),
        resolution: grid.resolution().clone(),
        estimated_error,
    })
}

/// Ṽ_k(A, B) = Ṽ(A,…,A, B,…,B) with n−k copies of A and k copies of B.
pub fn dmv_k(a: &StarBody, b: &StarBody, k: usize) -> Result<f64> {
    let n = a.grid().model().dim();
    if k > n {
        return Err(Error::InvalidArgument(format!("k = {k} exceeds dimension {n}")));
    }
    let mut slots = vec![a; n - k];
    slots.extend(std::iter::repeat_n(b, k));
    dmv_value(&slots)
}

/// W̃_k(A): the average of ρ_A^{n−k} against Ω.
pub fn w_tilde_k(a: &StarBody, k: usize) -> Result<f64> {
    let n = a.grid().model().dim();
    if k == 0 || k >= n {
        return Err(Error::InvalidArgument(format!("k must lie in 1..={}, got {k}", n - 1)));
    }
    let e = (n - k) as i32;
    let rho = a.rho();
    Ok(a.grid().integrate(|i| rho[i].powi(e)) / a.grid().total_weight())
}

/// Largest pointwise relative variation of ρ_i / ρ_first over all bodies.
pub fn proportionality_defect(bodies: &[&StarBody]) -> f64 {
    let first = bodies[0].rho();
    bodies[1..]
        .iter()
        .map(|b| {
            let (lo, hi) = b
                .rho()
                .iter()
                .zip(first)
                .map(|(x, y)| x / y)
                .fold((f64::INFINITY, 0.0f64), |(lo, hi), r| (lo.min(r), hi.max(r)));
            (hi - lo) / hi
        })
        .fold(0.0, f64::max)
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// V(λA ⊕ μB) against Σₖ C(n,k) λ^{n−k} μᵏ Ṽ_k(A,B).
pub fn check_polynomial_expansion(
    a: &StarBody,
    b: &StarBody,
    lambda: f64,
    mu: f64,
    tol: f64,
) -> Result<InequalityVerdict> {
    let n = a.grid().model().dim();
    if !(lambda > 0.0 && mu >= 0.0) {
        return Err(Error::InvalidArgument("need lambda > 0 and mu >= 0".into()));
    }
    let la = dilate(a, lambda)?;
    let lhs = if mu == 0.0 {
        volume(&la)
    } else {
        volume(&radial_sum(&la, &dilate(b, mu)?)?)
    };
    let mut rhs = 0.0;
    for k in 0..=n {
        rhs += binomial(n, k) * lambda.powi((n - k) as i32) * mu.powi(k as i32) * dmv_k(a, b, k)?;
    }
    Ok(InequalityVerdict::identity("polynomial_expansion", lhs, rhs, tol))
}

/// Ṽ(A₁,…,Aₙ)ⁿ ≤ V(A₁)⋯V(Aₙ), equality iff the bodies are dilations of each other.
pub fn check_main_inequality(bodies: &[&StarBody], tol: f64) -> Result<InequalityVerdict> {
    let n = bodies.len() as i32;
    let lhs = dmv_value(bodies)?.powi(n);
    let rhs: f64 = bodies.iter().map(|b| volume(b)).product();
    let equal = proportionality_defect(bodies) < PROPORTIONALITY_TOL;
    Ok(InequalityVerdict::inequality("main_inequality", lhs, rhs, tol, equal))
}

/// Ṽ₁(A,B)ⁿ ≤ V(A)^{n−1} V(B) and Ṽ_{n−1}(A,B)ⁿ ≤ V(A) V(B)^{n−1}.
pub fn check_dual_minkowski(a: &StarBody, b: &StarBody, tol: f64) -> Result<[InequalityVerdict; 2]> {
    let n = a.grid().model().dim();
    let ni = n as i32;
    let (va, vb) = (volume(a), volume(b));
    let equal = proportionality_defect(&[a, b]) < PROPORTIONALITY_TOL;
    Ok([
        InequalityVerdict::inequality(
            "dual_minkowski_first",
            dmv_k(a, b, 1)?.powi(ni),
            va.powi(ni - 1) * vb,
            tol,
            equal,
        ),
        InequalityVerdict::inequality(
            "dual_minkowski_last",
            dmv_k(a, b, n - 1)?.powi(ni),
            va * vb.powi(ni - 1),
            tol,
            equal,
        ),
    ])
}

/// V(A ⊕ B)^{1/n} ≤ V(A)^{1/n} + V(B)^{1/n}.
pub fn check_dual_bm(a: &StarBody, b: &StarBody, tol: f64) -> Result<InequalityVerdict> {
    let n = a.grid().model().dim() as f64;
    let lhs = volume(&radial_sum(a, b)?).powf(1.0 / n);
    let rhs = volume(a).powf(1.0 / n) + volume(b).powf(1.0 / n);
    let equal = proportionality_defect(&[a, b]) < PROPORTIONALITY_TOL;
    Ok(InequalityVerdict::inequality("dual_brunn_minkowski", lhs, rhs, tol, equal))
}

/// Relative change of a grid functional under one coarsening step, or `None`
/// if some body has no closed form or the grid cannot be coarsened.
pub fn relative_quadrature_error(
    bodies: &[&StarBody],
    functional: impl Fn(&[&StarBody]) -> Result<f64>,
) -> Option<f64> {
    let fine = functional(bodies).ok()?;
    let coarse_grid = bodies[0].grid().coarsened()?;
    let resampled: Vec<StarBody> = bodies
        .iter()
        .map(|b| b.resample(&coarse_grid).ok())
        .collect::<Option<_>>()?;
    let refs: Vec<&StarBody> = resampled.iter().collect();
    let coarse = functional(&refs).ok()?;
    Some((fine - coarse).abs() / fine.abs().max(f64::MIN_POSITIVE))
}

/// Suite tolerance: `scale` times the estimated relative quadrature error, never
/// below the rounding floor.
pub fn suite_tolerance(estimated_relative_error: Option<f64>, scale: f64) -> f64 {
    (scale * estimated_relative_error.unwrap_or(0.0)).max(ROUNDING_FLOOR)
}

/// Ṽ(A₁,…,Aₙ) against Ṽ(φ̂A₁,…,φ̂Aₙ) for the cotangent lift φ̂ of a base diffeomorphism.
///
/// The images are sampled on the original grid through ρ(q) = 1/H(φ̂⁻¹ q). Tolerance is
/// `tol_scale` times the coarsening error estimate of the transformed value.
pub fn check_invariance(bodies: &[&StarBody], phi: &Diffeo, tol_scale: f64) -> Result<InequalityVerdict> {
    check_same_grid(bodies)?;
    let grid = bodies[0].grid();
    let model = grid.model();
    let moved: Vec<StarBody> = bodies
        .iter()
        .map(|b| {
            let h = b.hamiltonian().ok_or_else(|| {
                Error::InvalidArgument(format!("body `{}` has no closed form to transform", b.label()))
            })?;
            let pushed = StarHamiltonian::new(model, h.pushed_forward(phi));
            Ok(body_from_hamiltonian(&pushed, grid)?.with_label(format!("phi({})", b.label())))
        })
        .collect::<Result<_>>()?;
    let moved_refs: Vec<&StarBody> = moved.iter().collect();
    let before = dmv_value(bodies)?;
    let after = dmv_value(&moved_refs)?;
    let err = relative_quadrature_error(&moved_refs, dmv_value);
    let tol = suite_tolerance(err, tol_scale);
    Ok(InequalityVerdict::identity("lift_invariance", before, after, tol))
}
