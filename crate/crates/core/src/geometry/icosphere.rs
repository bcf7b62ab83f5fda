use std::collections::HashMap;

use crate::numerics::{cross, dot, normalize};

/// Spherical triangles of a refined icosahedron, as `(centroid, area)` pairs.
///
/// Areas are exact spherical excesses, so they tile S² and sum to 4π up to rounding.
/// The icosahedron and midpoint refinement are both centrally symmetric.
pub(crate) fn icosphere_cells(level: usize) -> Vec<(Vec<f64>, f64)> {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut verts: Vec<[f64; 3]> = [
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ]
    .iter()
    .map(unit)
    .collect();
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..level {
        let mut cache: HashMap<(usize, usize), usize> = HashMap::new();
        let mut midpoint = |a: usize, b: usize, verts: &mut Vec<[f64; 3]>| -> usize {
            let key = (a.min(b), a.max(b));
            *cache.entry(key).or_insert_with(|| {
                let m = [
                    verts[a][0] + verts[b][0],
                    verts[a][1] + verts[b][1],
                    verts[a][2] + verts[b][2],
                ];
                verts.push(unit(&m));
                verts.len() - 1
            })
        };
        let mut next = Vec::with_capacity(faces.len() * 4);
        for &[a, b, c] in &faces {
            let ab = midpoint(a, b, &mut verts);
            let bc = midpoint(b, c, &mut verts);
            let ca = midpoint(c, a, &mut verts);
            next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        faces = next;
    }
    faces
        .iter()
        .map(|&[a, b, c]| {
            let (va, vb, vc) = (&verts[a], &verts[b], &verts[c]);
            let centroid = normalize(&[
                va[0] + vb[0] + vc[0],
                va[1] + vb[1] + vc[1],
                va[2] + vb[2] + vc[2],
            ]);
            (centroid, spherical_area(va, vb, vc))
        })
        .collect()
}

fn unit(v: &[f64; 3]) -> [f64; 3] {
    let n = dot(v, v).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

/// Van Oosterom–Strackee solid angle of the triangle (a, b, c).
fn spherical_area(a: &[f64; 3], b: &[f64; 3], c: &[f64; 3]) -> f64 {
    let triple = dot(a, &cross(b, c)).abs();
    let denom = 1.0 + dot(a, b) + dot(b, c) + dot(c, a);
    2.0 * triple.atan2(denom)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn areas_tile_the_sphere() {
        for level in 0..4 {
            let cells = icosphere_cells(level);
            assert_eq!(cells.len(), 20 * 4usize.pow(level as u32));
            let total: f64 = cells.iter().map(|c| c.1).sum();
            assert!((total - 4.0 * std::f64::consts::PI).abs() < 1e-12);
        }
    }

    #[test]
    fn centrally_symmetric() {
        let cells = icosphere_cells(2);
        for (c, a) in &cells {
            let anti = cells
                .iter()
                .find(|(d, _)| (0..3).all(|i| (d[i] + c[i]).abs() < 1e-12))
                .expect("antipodal cell");
            assert!((anti.1 - a).abs() < 1e-14);
        }
    }
}
