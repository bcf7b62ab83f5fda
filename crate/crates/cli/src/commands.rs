//! One function per subcommand. Each returns the `results` value of the report and
//! whether every verdict in it holds.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use starvol::dualvol::{
    check_dual_bm, check_dual_minkowski, check_main_inequality, check_polynomial_expansion, dmv_value,
    dual_mixed_volume, relative_quadrature_error, suite_tolerance, volume, ROUNDING_FLOOR,
};
use starvol::dynamics::{cosphere_probes, integrate_flow, normal_form_decompose};
use starvol::field::Field;
use starvol::finsler::{busemann_volume, check_quadratic_convexity, holmes_thompson_volume, legendre_dual};
use starvol::geometry::CotangentPoint;
use starvol::starbody::{body_from_hamiltonian, random_star_hamiltonian, StarBody, StarHamiltonian};
use starvol::suite::{run_all, SuiteOptions, CHAIN_TOL};
use starvol::systole::{isosystolic_report, systole, systole_torus, SystoleOptions};

use crate::config::RunConfig;
use crate::{CliError, Notion, SystoleFlags};

pub struct Output {
    pub results: Value,
    pub all_hold: bool,
}

impl Output {
    fn info(results: Value) -> Self {
        Self { results, all_hold: true }
    }
}

fn to_value(v: impl Serialize) -> Result<Value, CliError> {
    Ok(serde_json::to_value(v)?)
}

fn bodies(config: &RunConfig, names: &[String], grid: &std::sync::Arc<starvol::geometry::CosphereGrid>) -> Result<Vec<StarBody>, CliError> {
    names
        .iter()
        .map(|n| Ok(body_from_hamiltonian(&config.hamiltonian(n)?, grid)?.with_label(n.clone())))
        .collect()
}

pub fn volume_cmd(config: &RunConfig, notion: Option<Notion>) -> Result<Output, CliError> {
    let grid = config.grid()?;
    if notion.is_some() || (config.metric.is_some() && config.volume.is_none()) {
        let metric = config.finsler_metric()?;
        let notion = notion.unwrap_or(Notion::Ht);
        let measure = |g: &std::sync::Arc<starvol::geometry::CosphereGrid>| match notion {
            Notion::Ht => holmes_thompson_volume(&metric, g),
            Notion::Busemann => busemann_volume(&metric, g),
        };
        let value = measure(&grid)?;
        let estimated_error = match grid.coarsened() {
            Some(c) => Some((measure(&c)? - value).abs() / value),
            None => None,
        };
        return Ok(Output::info(json!({
            "metric": metric.describe(),
            "notion": notion,
            "value": value,
            "estimated_error": estimated_error,
        })));
    }
    let mut names: Vec<String> = config.volume.as_ref().map(|v| v.bodies.clone()).unwrap_or_default();
    if names.is_empty() {
        names = config.bodies.keys().cloned().collect();
    }
    let list = if names.is_empty() {
        vec![StarBody::model_body(&grid)]
    } else {
        bodies(config, &names, &grid)?
    };
    let results: Vec<Value> = list
        .iter()
        .map(|b| {
            json!({
                "body": b.label(),
                "value": volume(b),
                "estimated_error": relative_quadrature_error(&[b], |bs| Ok(volume(bs[0]))),
            })
        })
        .collect();
    Ok(Output::info(Value::Array(results)))
}

pub fn dmv_cmd(config: &RunConfig) -> Result<Output, CliError> {
    let grid = config.grid()?;
    let spec = config.dmv.as_ref().ok_or_else(|| CliError::Config {
        pointer: "/dmv".into(),
        message: "the dmv command needs a `dmv` section".into(),
    })?;
    let list = bodies(config, &spec.bodies, &grid)?;
    let refs: Vec<&StarBody> = list.iter().collect();
    let report = dual_mixed_volume(&refs)?;
    Ok(Output::info(to_value(report)?))
}

pub fn legendre_cmd(config: &RunConfig, seed: u64) -> Result<Output, CliError> {
    let metric = config.finsler_metric()?;
    let model = metric.model().clone();
    let points: Vec<CotangentPoint> = match &config.legendre {
        Some(spec) => spec.points.iter().map(CotangentPoint::from).collect(),
        None => cosphere_probes(&model, 8, seed),
    };
    let mut rows = Vec::with_capacity(points.len());
    for z in &points {
        let numeric = legendre_dual(&metric, &z.base, &z.momentum)?;
        let closed = match metric.closed_form_dual() {
            Some(h) => Some(h.eval(z)?),
            None => None,
        };
        rows.push(json!({
            "base": z.base,
            "momentum": z.momentum,
            "dual": numeric,
            "closed_form": closed,
            "difference": closed.map(|c| (c - numeric).abs()),
            "convexity": check_quadratic_convexity(&metric, &z.base)?,
        }));
    }
    let all_convex = rows
        .iter()
        .all(|r| r["convexity"]["quadratically_convex"].as_bool().unwrap_or(false));
    Ok(Output {
        results: json!({ "metric": metric.describe(), "points": rows }),
        all_hold: all_convex || !metric.is_smooth(),
    })
}

/// Flow of a named body or an expression, as CSV rows `t, base…, momentum…, H, action`.
pub fn flow_cmd(config: &RunConfig, out: &mut dyn Write) -> Result<(), CliError> {
    let spec = config.flow.as_ref().ok_or_else(|| CliError::Config {
        pointer: "/flow".into(),
        message: "the flow command needs a `flow` section".into(),
    })?;
    let model = config.manifold()?;
    let h = if config.bodies.contains_key(&spec.hamiltonian) {
        config.hamiltonian(&spec.hamiltonian)?
    } else {
        StarHamiltonian::from_expr(&model, &spec.hamiltonian).map_err(|e| CliError::Config {
            pointer: "/flow/hamiltonian".into(),
            message: e.to_string(),
        })?
    };
    let start = CotangentPoint::from(&spec.start);
    let level = h.field().eval(&start)?;
    let traj = integrate_flow(&model, h.field(), &start.scaled(1.0 / level), spec.duration, spec.dt)?;
    let d = model.ambient_dim();
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["t".to_string()];
    header.extend((1..=d).map(|i| format!("x{i}")));
    header.extend((1..=d).map(|i| format!("p{i}")));
    header.extend(["H".to_string(), "action".to_string()]);
    w.write_record(&header)?;
    for s in &traj.samples {
        let mut row = vec![s.t];
        row.extend(&s.point.base);
        row.extend(&s.point.momentum);
        row.extend([s.energy, s.action]);
        w.write_record(row.iter().map(|v| format!("{v:.17e}")))?;
    }
    w.flush().map_err(|source| CliError::Io {
        path: "flow output".into(),
        source,
    })?;
    Ok(())
}

pub fn systole_cmd(config: &RunConfig, flags: &SystoleFlags, seed: u64) -> Result<Output, CliError> {
    let metric = config.finsler_metric()?;
    let spec = config.systole.clone().unwrap_or_default();
    let defaults = SystoleOptions::default();
    let opts = SystoleOptions {
        vertices: flags.m.or(spec.m).unwrap_or(defaults.vertices),
        restarts: flags.restarts.or(spec.restarts).unwrap_or(defaults.restarts),
        seed,
        max_class: spec.max_class.unwrap_or(defaults.max_class),
    };
    let class = flags.class.clone().or(spec.class);
    if let Some(z) = class {
        let mut best = systole_torus(&metric, &z, &opts)?;
        if !metric.is_reversible() {
            let reversed: Vec<i64> = z.iter().map(|c| -c).collect();
            let back = systole_torus(&metric, &reversed, &opts)?;
            if back.length < best.length {
                best = back;
            }
        }
        return Ok(Output::info(to_value(best)?));
    }
    if metric.conformal_factor().is_some() {
        let grid = config.grid()?;
        let report = isosystolic_report(&metric, &grid, &opts, CHAIN_TOL)?;
        return Ok(Output {
            all_hold: report.chain_holds,
            results: to_value(report)?,
        });
    }
    Ok(Output::info(to_value(systole(&metric, &opts)?)?))
}

pub fn normalform_cmd(config: &RunConfig, seed: u64) -> Result<Output, CliError> {
    let spec = config.normalform.as_ref().ok_or_else(|| CliError::Config {
        pointer: "/normalform".into(),
        message: "the normalform command needs a `normalform` section".into(),
    })?;
    let model = config.manifold()?;
    let period = model.round_flow_period().ok_or_else(|| CliError::Config {
        pointer: "/model".into(),
        message: "normal forms need a model with periodic reference flow".into(),
    })?;
    let h1 = Field::from_expr(&model, &spec.hamiltonian).map_err(|e| CliError::Config {
        pointer: "/normalform/hamiltonian".into(),
        message: e.to_string(),
    })?;
    let probes = cosphere_probes(&model, spec.probes, seed);
    let pair = normal_form_decompose(&model, &Field::model_norm(&model), &h1, period, &probes, spec.steps)?;
    Ok(Output::info(to_value(pair.diagnostics)?))
}

pub fn check_cmd(config: &RunConfig, seed: u64, scale: f64) -> Result<Output, CliError> {
    let grid = config.grid()?;
    let pair: Vec<StarBody> = if config.bodies.len() >= 2 {
        let names: Vec<String> = config.bodies.keys().take(2).cloned().collect();
        bodies(config, &names, &grid)?
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..2)
            .map(|i| {
                let h = random_star_hamiltonian(grid.model(), 0.3, &mut rng);
                Ok(body_from_hamiltonian(&h, &grid)?.with_label(format!("random{i}")))
            })
            .collect::<Result<_, CliError>>()?
    };
    let (a, b) = (&pair[0], &pair[1]);
    let n = grid.model().dim();
    let tuple: Vec<&StarBody> = (0..n).map(|i| if i == 0 { a } else { b }).collect();
    let tol = suite_tolerance(relative_quadrature_error(&[a, b], |bs| {
        let t: Vec<&StarBody> = (0..n).map(|i| if i == 0 { bs[0] } else { bs[1] }).collect();
        dmv_value(&t)
    }), scale);
    let mut verdicts = vec![check_main_inequality(&tuple, tol)?];
    verdicts.extend(check_dual_minkowski(a, b, tol)?);
    verdicts.push(check_dual_bm(a, b, tol)?);
    verdicts.push(check_polynomial_expansion(a, b, 1.0, 1.0, ROUNDING_FLOOR)?);
    Ok(Output {
        all_hold: verdicts.iter().all(|v| v.holds),
        results: to_value(verdicts)?,
    })
}

pub fn report_cmd(seed: u64, scale: f64, timing: bool) -> Result<Output, CliError> {
    let outcomes = run_all(&SuiteOptions {
        seed,
        tolerance_scale: scale,
    });
    let all_hold = outcomes.iter().all(|o| o.passed);
    let mut value = to_value(&outcomes)?;
    if !timing {
        if let Value::Array(items) = &mut value {
            for item in items {
                if let Value::Object(map) = item {
                    map.remove("elapsed");
                }
            }
        }
    }
    Ok(Output { results: value, all_hold })
}
