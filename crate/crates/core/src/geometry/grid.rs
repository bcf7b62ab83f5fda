use std::f64::consts::PI;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::icosphere::icosphere_cells;
use super::{euclidean_ball_volume, CotangentPoint, ManifoldModel, ModelKind};
use crate::error::{Error, Result};
use crate::numerics::{gauss_legendre, pairwise_sum};

/// Node counts. On tori `base` is the number of cells per axis; on the sphere and
/// projective plane it is the icosahedral refinement level. `fiber` holds the
/// fibre counts: `[angles]` for surfaces, `[azimuth, polar]` for T³, and
/// `[samples]` for the Monte Carlo fibre rule in dimension ≥ 4.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Resolution {
    pub base: usize,
    pub fiber: Vec<usize>,
}

impl Resolution {
    pub fn new(base: usize, fiber: Vec<usize>) -> Self {
        Self { base, fiber }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaseCell {
    pub point: Vec<f64>,
    pub volume: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridNode {
    pub point: CotangentPoint,
    pub weight: f64,
    pub cell: usize,
}

/// Quadrature nodes on the unit cosphere bundle with weights realising Ω.
#[derive(Debug, Clone)]
pub struct CosphereGrid {
    model: ManifoldModel,
    resolution: Resolution,
    cells: Vec<BaseCell>,
    nodes: Vec<GridNode>,
    tolerance: f64,
}

/// Builds the product rule (base cells) × (unit fibre sphere), with node weight
/// `cell volume * fibre weight / n` so that the weights add up to `vol(M) * eps_n`.
pub fn build_grid(model: &ManifoldModel, resolution: &Resolution) -> Result<Arc<CosphereGrid>> {
    let n = model.dim();
    let cells = base_cells(model, resolution)?;
    let fiber = fiber_rule(model, resolution)?;
    let mut nodes = Vec::with_capacity(cells.len() * fiber.len());
    for (ci, cell) in cells.iter().enumerate() {
        let frame = model.tangent_basis(&cell.point);
        for (dir, fw) in &fiber {
            let mut momentum = vec![0.0; model.ambient_dim()];
            for (c, e) in dir.iter().zip(&frame) {
                for (m, ei) in momentum.iter_mut().zip(e) {
                    *m += c * ei;
                }
            }
            nodes.push(GridNode {
                point: CotangentPoint {
                    base: cell.point.clone(),
                    momentum,
                },
                weight: cell.volume * fw / n as f64,
                cell: ci,
            });
        }
    }
    Ok(Arc::new(CosphereGrid {
        model: model.clone(),
        resolution: resolution.clone(),
        cells,
        nodes,
        tolerance: 1e-10,
    }))
}

fn base_cells(model: &ManifoldModel, res: &Resolution) -> Result<Vec<BaseCell>> {
    match model.kind() {
        ModelKind::FlatTorus => {
            let k = res.base;
            if k < 4 {
                return Err(Error::InvalidArgument(format!(
                    "torus base resolution must be >= 4, got {k}"
                )));
            }
            let n = model.dim();
            let total = k.checked_pow(n as u32).filter(|t| *t <= 50_000_000).ok_or_else(|| {
                Error::InvalidArgument(format!("{k}^{n} base cells is too many"))
            })?;
            let vol = model.volume() / total as f64;
            Ok((0..total)
                .map(|mut idx| {
                    let mut point = vec![0.0; n];
                    for (axis, coord) in point.iter_mut().enumerate() {
                        let i = idx % k;
                        idx /= k;
                        *coord = (i as f64 + 0.5) * model.periods()[axis] / k as f64;
                    }
                    BaseCell { point, volume: vol }
                })
                .collect())
        }
        ModelKind::RoundSphere2 | ModelKind::ProjectivePlane2 => {
            if res.base > 7 {
                return Err(Error::InvalidArgument(format!(
                    "icosahedral level {} is too fine",
                    res.base
                )));
            }
            // The projective plane integrates over its double cover with half weights.
            let scale = if model.kind() == ModelKind::ProjectivePlane2 { 0.5 } else { 1.0 };
            Ok(icosphere_cells(res.base)
                .into_iter()
                .map(|(point, area)| BaseCell {
                    point,
                    volume: scale * area,
                })
                .collect())
        }
    }
}

/// Unit directions (in tangent-frame coordinates) and weights summing to |S^{n-1}|.
fn fiber_rule(model: &ManifoldModel, res: &Resolution) -> Result<Vec<(Vec<f64>, f64)>> {
    let n = model.dim();
    let bad = || {
        Error::InvalidArgument(format!(
            "fibre resolution {:?} does not fit dimension {n}",
            res.fiber
        ))
    };
    if res.fiber.iter().any(|&c| c < 4) {
        return Err(Error::InvalidArgument("fibre counts must be >= 4".into()));
    }
    match n {
        2 => {
            let &[k] = res.fiber.as_slice() else { return Err(bad()) };
            Ok((0..k)
                .map(|j| {
                    let t = 2.0 * PI * j as f64 / k as f64;
                    (vec![t.cos(), t.sin()], 2.0 * PI / k as f64)
                })
                .collect())
        }
        3 => {
            let &[az, polar] = res.fiber.as_slice() else { return Err(bad()) };
            let (z, w) = gauss_legendre(polar);
            let mut out = Vec::with_capacity(az * polar);
            for (zi, wi) in z.iter().zip(&w) {
                let s = (1.0 - zi * zi).sqrt();
                for j in 0..az {
                    let phi = 2.0 * PI * j as f64 / az as f64;
                    out.push((vec![s * phi.cos(), s * phi.sin(), *zi], wi * 2.0 * PI / az as f64));
                }
            }
            Ok(out)
        }
        _ => {
            let &[k] = res.fiber.as_slice() else { return Err(bad()) };
            let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0000 + (n * 1_000_003 + k) as u64);
            let area = n as f64 * euclidean_ball_volume(n);
            Ok((0..k)
                .map(|_| {
                    let v: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
                    (crate::numerics::normalize(&v), area / k as f64)
                })
                .collect())
        }
    }
}

impl CosphereGrid {
    pub fn model(&self) -> &ManifoldModel {
        &self.model
    }

    pub fn resolution(&self) -> &Resolution {
        &self.resolution
    }

    pub fn nodes(&self) -> &[GridNode] {
        &self.nodes
    }

    pub fn cells(&self) -> &[BaseCell] {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Declared relative tolerance of the weight-sum invariant.
    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    pub fn total_weight(&self) -> f64 {
        let w: Vec<f64> = self.nodes.iter().map(|n| n.weight).collect();
        pairwise_sum(&w)
    }

    /// Σ wᵢ f(i), summed pairwise.
    pub fn integrate(&self, f: impl Fn(usize) -> f64) -> f64 {
        let terms: Vec<f64> = self.nodes.iter().enumerate().map(|(i, n)| n.weight * f(i)).collect();
        pairwise_sum(&terms)
    }

    /// Base-only integral Σ vol(cell) g(x_cell).
    pub fn integrate_base(&self, g: impl Fn(&[f64]) -> f64) -> f64 {
        let terms: Vec<f64> = self.cells.iter().map(|c| c.volume * g(&c.point)).collect();
        pairwise_sum(&terms)
    }

    /// Same rule with every count doubled (one more icosahedral level on spheres).
    pub fn refined(&self) -> Result<Arc<CosphereGrid>> {
        let base = if self.model.is_spherical() {
            self.resolution.base + 1
        } else {
            self.resolution.base * 2
        };
        let fiber = self.resolution.fiber.iter().map(|c| c * 2).collect();
        build_grid(&self.model, &Resolution::new(base, fiber))
    }

    /// Same rule with every count halved, if that keeps the counts admissible.
    pub fn coarsened(&self) -> Option<Arc<CosphereGrid>> {
        let base = if self.model.is_spherical() {
            self.resolution.base.checked_sub(1)?
        } else {
            self.resolution.base / 2
        };
        let fiber: Vec<usize> = self.resolution.fiber.iter().map(|c| c / 2).collect();
        build_grid(&self.model, &Resolution::new(base, fiber)).ok()
    }

    /// JSON form `{model, resolution, nodes: [[base], [momentum], weight], checksum}`.
    pub fn to_json(&self) -> serde_json::Value {
        let nodes: Vec<serde_json::Value> = self
            .nodes
            .iter()
            .map(|n| json!([n.point.base, n.point.momentum, n.weight]))
            .collect();
        json!({
            "model": self.model,
            "resolution": self.resolution,
            "nodes": nodes,
            "checksum": self.total_weight(),
        })
    }

    /// Reads the JSON form back, checking the checksum and the node invariants.
    pub fn from_json(value: &serde_json::Value) -> Result<Arc<CosphereGrid>> {
        #[derive(Deserialize)]
        struct Raw {
            model: ManifoldModel,
            resolution: Resolution,
            nodes: Vec<(Vec<f64>, Vec<f64>, f64)>,
            checksum: f64,
        }
        let raw: Raw = serde_json::from_value(value.clone())?;
        let model = ManifoldModel::new(
            raw.model.kind(),
            raw.model.dim(),
            (!raw.model.periods().is_empty()).then(|| raw.model.periods().to_vec()),
        )?;
        let per_cell = fiber_rule(&model, &raw.resolution)?.len();
        if raw.nodes.is_empty() || !raw.nodes.len().is_multiple_of(per_cell) {
            return Err(Error::InvalidArgument("node count does not match resolution".into()));
        }
        let fibre_area = model.dim() as f64 * euclidean_ball_volume(model.dim());
        let mut cells = Vec::new();
        let mut nodes = Vec::with_capacity(raw.nodes.len());
        for (ci, chunk) in raw.nodes.chunks(per_cell).enumerate() {
            let mut wsum = 0.0;
            for (base, momentum, weight) in chunk {
                if !(*weight > 0.0) {
                    return Err(Error::InvalidArgument("grid weights must be positive".into()));
                }
                if (model.momentum_norm(momentum) - 1.0).abs() > 1e-9 {
                    return Err(Error::InvalidArgument("grid momenta must have unit norm".into()));
                }
                wsum += weight;
                nodes.push(GridNode {
                    point: CotangentPoint {
                        base: base.clone(),
                        momentum: momentum.clone(),
                    },
                    weight: *weight,
                    cell: ci,
                });
            }
            cells.push(BaseCell {
                point: chunk[0].0.clone(),
                volume: wsum * model.dim() as f64 / fibre_area,
            });
        }
        let grid = CosphereGrid {
            model,
            resolution: raw.resolution,
            cells,
            nodes,
            tolerance: 1e-10,
        };
        let total = grid.total_weight();
        if (total - raw.checksum).abs() > 1e-9 * raw.checksum.abs() {
            return Err(Error::InvalidArgument(format!(
                "checksum mismatch: weights sum to {total}, header says {}",
                raw.checksum
            )));
        }
        Ok(Arc::new(grid))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::norm;

    #[test]
    fn torus_total_weight_is_exact() {
        let t2 = ManifoldModel::unit_torus(2).unwrap();
        let g = build_grid(&t2, &Resolution::new(16, vec![64])).unwrap();
        assert!((g.total_weight() - PI).abs() < 1e-12);
        let t3 = ManifoldModel::flat_torus(vec![1.0, 2.0, 0.5]).unwrap();
        let g = build_grid(&t3, &Resolution::new(6, vec![12, 8])).unwrap();
        assert!((g.total_weight() - 4.0 * PI / 3.0).abs() < 1e-12);
        let t4 = ManifoldModel::unit_torus(4).unwrap();
        let g = build_grid(&t4, &Resolution::new(4, vec![64])).unwrap();
        assert!((g.total_weight() - PI * PI / 2.0).abs() < 1e-12);
    }

    #[test]
    fn sphere_and_projective_totals() {
        let g = build_grid(&ManifoldModel::round_sphere(), &Resolution::new(3, vec![64])).unwrap();
        assert!((g.total_weight() / (4.0 * PI * PI) - 1.0).abs() < 1e-3);
        let g = build_grid(&ManifoldModel::projective_plane(), &Resolution::new(3, vec![64])).unwrap();
        assert!((g.total_weight() / (2.0 * PI * PI) - 1.0).abs() < 1e-3);
    }

    #[test]
    fn nodes_lie_on_the_unit_cosphere() {
        let g = build_grid(&ManifoldModel::round_sphere(), &Resolution::new(1, vec![8])).unwrap();
        for node in g.nodes() {
            let z = &node.point;
            assert!((norm(&z.momentum) - 1.0).abs() < 1e-14);
            assert!(crate::numerics::dot(&z.base, &z.momentum).abs() < 1e-14);
            assert!(node.weight > 0.0);
        }
    }

    #[test]
    fn rejects_bad_resolutions() {
        let t2 = ManifoldModel::unit_torus(2).unwrap();
        assert!(build_grid(&t2, &Resolution::new(3, vec![64])).is_err());
        assert!(build_grid(&t2, &Resolution::new(8, vec![2])).is_err());
        assert!(build_grid(&t2, &Resolution::new(8, vec![8, 8])).is_err());
        let t3 = ManifoldModel::unit_torus(3).unwrap();
        assert!(build_grid(&t3, &Resolution::new(4, vec![8])).is_err());
    }

    #[test]
    fn json_round_trip_preserves_nodes() {
        let g = build_grid(&ManifoldModel::projective_plane(), &Resolution::new(1, vec![4])).unwrap();
        let back = CosphereGrid::from_json(&g.to_json()).unwrap();
        assert_eq!(back.nodes(), g.nodes());
        for (a, b) in back.cells().iter().zip(g.cells()) {
            assert!((a.volume - b.volume).abs() < 1e-14);
        }
        let mut tampered = g.to_json();
        tampered["checksum"] = json!(1.0);
        assert!(CosphereGrid::from_json(&tampered).is_err());
    }

    #[test]
    fn smooth_integrands_converge_at_second_order_on_the_sphere() {
        // ∫_{S²} exp(x₁) dA = 4π sinh(1); low-degree polynomials are integrated
        // exactly thanks to icosahedral symmetry, so use a transcendental integrand
        let exact = 4.0 * PI * 1f64.sinh();
        let err = |level| {
            let g = build_grid(&ManifoldModel::round_sphere(), &Resolution::new(level, vec![4])).unwrap();
            (g.integrate_base(|x| x[0].exp()) - exact).abs()
        };
        let (e2, e3, e4) = (err(2), err(3), err(4));
        assert!((e2 / e3).log2() >= 1.9 && (e3 / e4).log2() >= 1.9, "{e2} {e3} {e4}");
    }
}
