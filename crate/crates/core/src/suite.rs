//! The acceptance suite: twelve criteria, each a list of numeric checks with a
//! pinned tolerance and a wall-clock budget.
//!
//! Every criterion is deterministic given [`SuiteOptions::seed`].

use std::f64::consts::PI;
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dualvol::{
    check_dual_bm, check_dual_minkowski, check_invariance, check_main_inequality, check_polynomial_expansion,
    dmv_value, relative_quadrature_error, suite_tolerance, volume, InequalityVerdict,
};
use crate::dynamics::{
    angular_momentum_direction, cosphere_probes, find_closed_characteristic, flow_average, integrate_flow,
    normal_form_decompose,
};
use crate::error::Result;
use crate::field::{BaseField, Field};
use crate::finsler::{busemann_volume, emv_metric, holmes_thompson_volume, legendre_inverse, FinslerMetric};
use crate::geometry::{build_grid, euclidean_ball_volume, CosphereGrid, CotangentPoint, Diffeo, ManifoldModel, Resolution};
use crate::numerics::gauss_legendre;
use crate::starbody::{body_from_hamiltonian, dilate, random_star_hamiltonian, StarBody, StarHamiltonian};
use crate::systole::{isosystolic_report, systole_rp2, SystoleOptions};

pub const CRITERIA: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SuiteOptions {
    pub seed: u64,
    /// Multiplier on estimated quadrature errors wherever a tolerance is derived from one.
    pub tolerance_scale: f64,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self {
            seed: 20_240_601,
            tolerance_scale: 3.0,
        }
    }
}

/// One measured quantity against its limit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub limit: f64,
    pub passed: bool,
}

impl Check {
    pub fn at_most(name: impl Into<String>, value: f64, limit: f64) -> Self {
        Self {
            name: name.into(),
            value,
            limit,
            passed: value <= limit,
        }
    }

    pub fn at_least(name: impl Into<String>, value: f64, limit: f64) -> Self {
        Self {
            name: name.into(),
            value,
            limit,
            passed: value >= limit,
        }
    }

    /// Relative violation `-(slack)/scale` against the verdict's tolerance.
    pub fn verdict(prefix: &str, v: &InequalityVerdict) -> Self {
        Self {
            name: format!("{prefix}{}", v.name),
            value: -v.relative_slack(),
            limit: v.tolerance,
            passed: v.holds,
        }
    }

    pub fn flag(name: impl Into<String>, ok: bool) -> Self {
        Self {
            name: name.into(),
            value: if ok { 1.0 } else { 0.0 },
            limit: 1.0,
            passed: ok,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub id: usize,
    pub title: String,
    pub passed: bool,
    pub checks: Vec<Check>,
    pub error: Option<String>,
    /// Seconds.
    pub elapsed: f64,
    pub budget: f64,
}

impl Outcome {
    /// Worst check, by how far its value sits from the limit (failures first).
    pub fn worst(&self) -> Option<&Check> {
        self.checks.iter().find(|c| !c.passed).or_else(|| self.checks.last())
    }

    pub fn summary_line(&self) -> String {
        let status = if self.passed { "PASS" } else { "FAIL" };
        let failed = self.checks.iter().filter(|c| !c.passed).count();
        let mut line = format!(
            "[{status}] criterion {:>2}: {} ({} checks, {failed} failed, {:.2}s of {:.0}s)",
            self.id,
            self.title,
            self.checks.len(),
            self.elapsed,
            self.budget
        );
        if let Some(e) = &self.error {
            line.push_str(&format!(" error: {e}"));
        } else if let Some(c) = self.checks.iter().find(|c| !c.passed) {
            line.push_str(&format!(" first failure: {} = {:e} (limit {:e})", c.name, c.value, c.limit));
        }
        line
    }
}

/// Title and time budget in seconds.
pub fn criterion_info(id: usize) -> Option<(&'static str, f64)> {
    Some(match id {
        1 => ("model body volumes", 20.0),
        2 => ("polynomial expansion of radial sums", 10.0),
        3 => ("dual mixed volume inequalities", 60.0),
        4 => ("invariance under cotangent lifts", 30.0),
        5 => ("Legendre involution", 10.0),
        6 => ("Holmes-Thompson versus Busemann volume", 10.0),
        7 => ("averaging identity for conformal metrics", 10.0),
        8 => ("conformal isosystolic chain", 300.0),
        9 => ("periodic-flow systolic constant", 30.0),
        10 => ("closed characteristics of commuting perturbations", 60.0),
        11 => ("normal form decomposition", 120.0),
        12 => ("Reeb flow integration quality", 30.0),
        _ => return None,
    })
}

/// Runs one criterion; errors are reported inside the outcome.
pub fn run_criterion(id: usize, opts: &SuiteOptions) -> Outcome {
    let (title, budget) = criterion_info(id).unwrap_or(("unknown criterion", 0.0));
    let start = Instant::now();
    let result = match id {
        1 => model_volumes(),
        2 => polynomial_identity(opts),
        3 => inequality_suite(opts),
        4 => invariance(opts),
        5 => involution(opts),
        6 => duran(),
        7 => averaging_identity(),
        8 => conformal_chain(opts),
        9 => periodic_constant(),
        10 => commuting_construction(),
        11 => normal_form(opts),
        12 => flow_quality(),
        _ => Err(crate::error::Error::InvalidArgument(format!("no criterion {id}"))),
    };
    let elapsed = start.elapsed().as_secs_f64();
    let (checks, error) = match result {
        Ok(c) => (c, None),
        Err(e) => (Vec::new(), Some(e.to_string())),
    };
    Outcome {
        id,
        title: title.to_string(),
        passed: error.is_none() && !checks.is_empty() && checks.iter().all(|c| c.passed) && elapsed <= budget,
        checks,
        error,
        elapsed,
        budget,
    }
}

pub fn run_all(opts: &SuiteOptions) -> Vec<Outcome> {
    (1..=CRITERIA).map(|id| run_criterion(id, opts)).collect()
}

fn grid(model: &ManifoldModel, base: usize, fiber: Vec<usize>) -> Result<Arc<CosphereGrid>> {
    build_grid(model, &Resolution::new(base, fiber))
}

fn t2() -> ManifoldModel {
    ManifoldModel::unit_torus(2).expect("unit torus")
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn model_volumes() -> Result<Vec<Check>> {
    let cases: [(&str, ManifoldModel, Resolution, f64); 4] = [
        ("T2", t2(), Resolution::new(16, vec![64]), 1e-12),
        ("T3", ManifoldModel::unit_torus(3)?, Resolution::new(6, vec![12, 8]), 1e-10),
        ("S2", ManifoldModel::round_sphere(), Resolution::new(3, vec![64]), 1e-3),
        ("RP2", ManifoldModel::projective_plane(), Resolution::new(3, vec![64]), 1e-3),
    ];
    let mut checks = Vec::new();
    for (name, model, res, tol) in cases {
        let start = Instant::now();
        let g = build_grid(&model, &res)?;
        let v = volume(&StarBody::model_body(&g));
        let exact = model.volume() * euclidean_ball_volume(model.dim());
        checks.push(Check::at_most(format!("{name} relative error"), rel(v, exact), tol));
        checks.push(Check::at_most(format!("{name} seconds"), start.elapsed().as_secs_f64(), 5.0));
    }
    Ok(checks)
}

fn random_bodies(g: &Arc<CosphereGrid>, count: usize, amplitude: f64, rng: &mut ChaCha8Rng) -> Result<Vec<StarBody>> {
    (0..count)
        .map(|i| {
            let h = random_star_hamiltonian(g.model(), amplitude, rng);
            Ok(body_from_hamiltonian(&h, g)?.with_label(format!("random{i}")))
        })
        .collect()
}

fn polynomial_identity(opts: &SuiteOptions) -> Result<Vec<Check>> {
    let g = grid(&t2(), 16, vec![32])?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 2);
    let mut checks = Vec::new();
    for i in 0..20 {
        let bodies = random_bodies(&g, 2, 0.3, &mut rng)?;
        let lambda = rng.gen_range(0.2..3.0);
        let mu = rng.gen_range(0.2..3.0);
        let v = check_polynomial_expansion(&bodies[0], &bodies[1], lambda, mu, 1e-12)?;
        checks.push(Check::verdict(&format!("pair {i} "), &v));
    }
    Ok(checks)
}

fn inequality_suite(opts: &SuiteOptions) -> Result<Vec<Check>> {
    let g = grid(&t2(), 16, vec![32])?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 3);
    let mut checks = Vec::new();
    let mut worst_random = Check::at_most("random tuples: worst violation over tolerance", f64::NEG_INFINITY, 1.0);
    for i in 0..100 {
        let bodies = random_bodies(&g, 2, 0.4, &mut rng)?;
        let refs: Vec<&StarBody> = bodies.iter().collect();
        let err = relative_quadrature_error(&refs, dmv_value);
        let tol = suite_tolerance(err, opts.tolerance_scale);
        let mut verdicts = vec![check_main_inequality(&refs, tol)?];
        verdicts.extend(check_dual_minkowski(&bodies[0], &bodies[1], tol)?);
        verdicts.push(check_dual_bm(&bodies[0], &bodies[1], tol)?);
        for v in &verdicts {
            if !v.holds || v.equality_case_detected {
                checks.push(Check::verdict(&format!("tuple {i} "), v));
                checks.push(Check::flag(format!("tuple {i} {} strict", v.name), !v.equality_case_detected));
            }
            let violation = -v.relative_slack() / v.tolerance;
            if violation > worst_random.value {
                worst_random = Check::at_most(worst_random.name.clone(), violation, 1.0);
            }
        }
    }
    checks.push(worst_random);

    let mut worst_equality = 0.0f64;
    let mut all_detected = true;
    for _ in 0..10 {
        let a = random_bodies(&g, 1, 0.4, &mut rng)?.remove(0);
        let b = dilate(&a, rng.gen_range(0.3..3.0))?;
        let mut verdicts = vec![check_main_inequality(&[&a, &b], 1e-10)?];
        verdicts.extend(check_dual_minkowski(&a, &b, 1e-10)?);
        verdicts.push(check_dual_bm(&a, &b, 1e-10)?);
        for v in verdicts {
            worst_equality = worst_equality.max(v.slack.abs() / v.lhs.abs().max(v.rhs.abs()));
            all_detected &= v.equality_case_detected;
        }
    }
    checks.push(Check::at_most("dilation tuples: relative gap", worst_equality, 1e-10));
    checks.push(Check::flag("dilation tuples: equality detected", all_detected));
    Ok(checks)
}

fn invariance(opts: &SuiteOptions) -> Result<Vec<Check>> {
    let model = t2();
    let g = grid(&model, 32, vec![32])?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 4);
    let bodies = random_bodies(&g, 10, 0.3, &mut rng)?;
    let shear = Diffeo::shear(&model, 0.1)?;
    let shift = Diffeo::translation(&model, vec![3.0 / 32.0, 5.0 / 32.0])?;
    let mut checks = Vec::new();
    for i in 0..bodies.len() {
        let pair = [&bodies[i], &bodies[(i + 1) % bodies.len()]];
        checks.push(Check::verdict(&format!("pair {i} shear "), &check_invariance(&pair, &shear, opts.tolerance_scale)?));
        checks.push(Check::verdict(&format!("pair {i} translation "), &check_invariance(&pair, &shift, 0.0)?));
    }
    Ok(checks)
}

fn involution(opts: &SuiteOptions) -> Result<Vec<Check>> {
    let model = t2();
    let metrics = [
        FinslerMetric::euclidean(&model),
        FinslerMetric::quadratic(&model, vec![2.0, 0.5])?,
        FinslerMetric::randers(&model, vec![0.3, 0.0])?,
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 5);
    let mut checks = Vec::new();
    for metric in &metrics {
        let twice = metric.double_dual();
        let mut worst = 0.0f64;
        for _ in 0..64 {
            let x = model.sample_base(&mut rng);
            let scale = rng.gen_range(0.5..2.0);
            let v: Vec<f64> = model.sample_unit_tangent(&x, &mut rng).iter().map(|c| scale * c).collect();
            worst = worst.max((twice.eval(&x, &v)? - metric.eval(&x, &v)?).abs());
        }
        checks.push(Check::at_most(format!("{} sup error", metric.describe()), worst, 1e-5));
    }
    Ok(checks)
}

fn duran() -> Result<Vec<Check>> {
    let model = t2();
    let g = grid(&model, 16, vec![64])?;
    let tol = 1e-6;
    let riemannian = [
        FinslerMetric::euclidean(&model),
        FinslerMetric::quadratic(&model, vec![1.5, 0.75])?,
        FinslerMetric::conformal(&model, BaseField::from_expr(&model, "1 + 0.3*sin(2*pi*y)")?),
    ];
    let mut checks = Vec::new();
    for m in &riemannian {
        let ht = holmes_thompson_volume(m, &g)?;
        let bu = busemann_volume(m, &g)?;
        checks.push(Check::at_most(format!("{} relative difference", m.describe()), rel(ht, bu), tol));
    }
    let quartic = FinslerMetric::lp_norm(&model, 4.0)?;
    let ht = holmes_thompson_volume(&quartic, &g)?;
    let bu = busemann_volume(&quartic, &g)?;
    checks.push(Check::at_least("quartic relative gap", (bu - ht) / bu, 10.0 * tol));
    Ok(checks)
}

const TORUS_FACTORS: [&str; 5] = [
    "1 + 0.3*sin(2*pi*y)",
    "1 + 0.2*cos(2*pi*x)*cos(2*pi*y)",
    "exp(0.3*sin(2*pi*(x + y)))",
    "1.5 + 0.4*sin(2*pi*x) + 0.2*cos(4*pi*y)",
    "2 + 0.5*sin(2*pi*x)*sin(4*pi*y)",
];

const PROJECTIVE_FACTORS: [&str; 5] = [
    "1 + 0.2*x1^2",
    "1 + 0.3*x3^2 - 0.1*x1*x2",
    "exp(0.2*(x1^2 - x2^2))",
    "1.5 - 0.4*x2^2",
    "1 + 0.1*x1*x3 + 0.2*x2^2",
];

/// Mean of a base function over the unit torus by tensor Gauss–Legendre.
fn torus_mean(f: &BaseField, nodes: usize) -> Result<f64> {
    let (t, w) = gauss_legendre(nodes);
    let mut sum = 0.0;
    for (ti, wi) in t.iter().zip(&w) {
        for (tj, wj) in t.iter().zip(&w) {
            sum += wi * wj * f.eval(&[0.5 * (ti + 1.0), 0.5 * (tj + 1.0)])?;
        }
    }
    Ok(sum / 4.0)
}

fn averaging_identity() -> Result<Vec<Check>> {
    let model = t2();
    let g = grid(&model, 32, vec![16])?;
    let mut checks = Vec::new();
    for text in TORUS_FACTORS {
        let factor = BaseField::from_expr(&model, text)?;
        let w = emv_metric(&FinslerMetric::conformal(&model, factor.clone()), 1, &g)?;
        checks.push(Check::at_most(format!("{text}: W1 vs mean"), (w - torus_mean(&factor, 48)?).abs(), 1e-6));
    }
    Ok(checks)
}

/// Relative tolerance on the isosystolic chain comparisons.
pub const CHAIN_TOL: f64 = 1e-4;

fn conformal_chain(opts: &SuiteOptions) -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    let cases = [
        (t2(), grid(&t2(), 32, vec![8])?, TORUS_FACTORS, 128),
        (
            ManifoldModel::projective_plane(),
            grid(&ManifoldModel::projective_plane(), 5, vec![8])?,
            PROJECTIVE_FACTORS,
            64,
        ),
    ];
    for (model, g, factors, vertices) in cases {
        let tag = if model.is_spherical() { "RP2" } else { "T2" };
        let sys_opts = SystoleOptions {
            vertices,
            restarts: 4,
            seed: opts.seed,
            max_class: 2,
        };
        for text in factors {
            let metric = FinslerMetric::conformal(&model, BaseField::from_expr(&model, text)?);
            let r = isosystolic_report(&metric, &g, &sys_opts, CHAIN_TOL)?;
            for v in &r.chain {
                checks.push(Check::verdict(&format!("{tag} {text}: "), v));
            }
            checks.push(Check::at_most(format!("{tag} {text}: refinement change"), r.refinement_change, 1e-4));
            checks.push(Check::flag(format!("{tag} {text}: optimiser converged"), r.systole.converged));
            if let Some(pu) = r.pu_ratio {
                checks.push(Check::at_most(format!("{tag} {text}: Pu ratio"), pu, 1.0 + 1e-3));
            }
        }
    }
    Ok(checks)
}

fn periodic_constant() -> Result<Vec<Check>> {
    let model = ManifoldModel::projective_plane();
    let g = grid(&model, 3, vec![16])?;
    let round = FinslerMetric::euclidean(&model);
    let opts = SystoleOptions {
        vertices: 32,
        ..Default::default()
    };
    let sys = systole_rp2(&round, &opts, 4)?.length;
    let area = holmes_thompson_volume(&round, &g)?;
    let n = 2;
    let constant = 2.0 * PI.powi(n) / ((n as f64 + 1.0) * euclidean_ball_volume(n as usize + 1));
    let action = find_closed_characteristic(&StarHamiltonian::model_norm(&model), &g)?.trajectory.action;
    Ok(vec![
        Check::at_most("closed form equals pi/2", rel(constant, PI / 2.0), 1e-12),
        Check::at_most("loop systole^2 / area vs constant", rel(sys * sys / area, constant), 1e-3),
        Check::at_most("characteristic action^2 / area vs constant", rel(action * action / area, constant), 1e-3),
    ])
}

/// `u = (1 - m₃²)/2` with m the unit angular momentum: the average of x₃² over the
/// great circle through (x, p), hence invariant under the round flow.
fn orbit_invariant_bump() -> Field {
    Field::from_fn("(1 - m3^2)/2", |z: &CotangentPoint| {
        let m = angular_momentum_direction(z);
        Ok(0.5 * (1.0 - m[2] * m[2]))
    })
}

fn commuting_construction() -> Result<Vec<Check>> {
    let model = ManifoldModel::projective_plane();
    let h0 = Field::model_norm(&model);
    let bump = orbit_invariant_bump();
    let field = {
        let (h0, bump) = (h0.clone(), bump.clone());
        Field::from_fn("|p| (1 + 0.2 u)", move |z| Ok(h0.eval(z)? * (1.0 + 0.2 * bump.eval(z)?)))
    };
    let h = StarHamiltonian::new(&model, field.clone()).reversible(true);
    let g = grid(&model, 2, vec![32])?;
    let c = find_closed_characteristic(&h, &g)?;
    let lambda = c.scale;
    let mut checks = vec![
        Check::at_most("Hamilton residual", c.residual, 1e-4),
        Check::at_most("min rho vs 1/1.1", (lambda - 1.0 / 1.1).abs(), 1e-6),
        Check::at_most("action vs (min rho) pi", (c.trajectory.action - lambda * PI).abs(), 1e-3),
    ];

    let direct = integrate_flow(&model, &field, c.trajectory.start(), lambda * PI, 1e-3)?;
    checks.push(Check::at_most(
        "direct flow closes",
        model.phase_gap(direct.start(), direct.end()),
        1e-6,
    ));
    checks.push(Check::at_most("direct flow action", (direct.action - lambda * PI).abs(), 1e-6));

    let inverse = {
        let (m, f) = (model.clone(), field.clone());
        FinslerMetric::new(&model, "legendre inverse", move |x, v| legendre_inverse(&m, &f, x, v), true)
    };
    let opts = SystoleOptions {
        vertices: 24,
        ..Default::default()
    };
    let sys = systole_rp2(&inverse, &opts, 4)?.length;
    checks.push(Check::at_least("min rho - sys(H)/sys(H0)", lambda - sys / PI, -1e-3));
    Ok(checks)
}

fn normal_form(opts: &SuiteOptions) -> Result<Vec<Check>> {
    let model = ManifoldModel::projective_plane();
    let h0 = Field::model_norm(&model);
    let period = PI;
    let probes = cosphere_probes(&model, 64, opts.seed ^ 11);
    let perturbations = [
        "(1 + 0.2*x1^2 + 0.1*x1*x2) * sqrt(p1^2 + p2^2 + p3^2)",
        "(p1^2 + 0.5*p2*p3) / sqrt(p1^2 + p2^2 + p3^2)",
        "0.3*x3*p1 + 0.2*x1*x2*sqrt(p1^2 + p2^2 + p3^2)",
    ];
    let mut checks = Vec::new();
    for text in perturbations {
        let h1 = Field::from_expr(&model, text)?;
        let pair = normal_form_decompose(&model, &h0, &h1, period, &probes, 256)?;
        checks.push(Check::at_most(format!("{text}: residual"), pair.diagnostics.residual, 1e-3));
        checks.push(Check::at_most(
            format!("{text}: bracket with H0"),
            pair.diagnostics.invariance_defect,
            1e-4,
        ));
        let mut idempotence = 0.0f64;
        for z in probes.iter().take(16) {
            let twice = flow_average(&model, &h0, &pair.invariant, z, period, 256)?;
            idempotence = idempotence.max((twice - pair.invariant.eval(z)?).abs());
        }
        checks.push(Check::at_most(format!("{text}: averaging idempotence"), idempotence, 1e-5));
    }
    Ok(checks)
}

fn flow_quality() -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    let torus = t2();
    let conformal = Field::from_expr(&torus, "sqrt(p1^2 + p2^2) / (1 + 0.3*sin(2*pi*y))")?;
    let sphere = ManifoldModel::round_sphere();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let smooth = random_star_hamiltonian(&sphere, 0.2, &mut rng);
    let cases: [(&str, &ManifoldModel, Field, Vec<f64>, Vec<f64>); 2] = [
        ("conformal T2", &torus, conformal, vec![0.1, 0.2], vec![0.6, 0.8]),
        ("random S2", &sphere, smooth.field().clone(), vec![0.0, 0.6, 0.8], vec![1.0, 0.0, 0.0]),
    ];
    let duration = 20.0;
    for (name, model, h, x, p) in cases {
        let z = CotangentPoint { base: x, momentum: p };
        let z0 = z.scaled(1.0 / h.eval(&z)?);
        let tr = integrate_flow(model, &h, &z0, duration, 1e-3)?;
        checks.push(Check::at_most(format!("{name}: |action - T| / T"), (tr.action - duration).abs() / duration, 1e-6));
        checks.push(Check::at_most(format!("{name}: energy drift"), tr.h_drift, 1e-6));
    }

    let h0 = Field::model_norm(&sphere);
    let z = CotangentPoint {
        base: vec![0.8, 0.0, 0.6],
        momentum: vec![-0.6, 0.0, 0.8],
    };
    let gap = |steps: usize| -> Result<f64> {
        let tr = integrate_flow(&sphere, &h0, &z, 2.0 * PI, 2.0 * PI / steps as f64)?;
        Ok(sphere.phase_gap(tr.start(), tr.end()))
    };
    let order = (gap(64)? / gap(128)?).log2();
    checks.push(Check::at_least("RK4 observed order on a great circle", order, 3.8));
    Ok(checks)
}
