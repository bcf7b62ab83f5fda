//! Quadrature and optimisation helpers shared by the geometric modules.

use std::collections::VecDeque;

/// Pairwise (cascade) summation. The reduction tree depends only on the length,
/// so sums are reproducible however the terms were produced.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const BLOCK: usize = 32;
    if xs.len() <= BLOCK {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// Gauss–Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        dp = if d != 0.0 { d } else { dp };
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Composite Simpson rule over equally spaced samples; an odd number of intervals
/// closes with a trapezoid on the last one.
pub fn simpson(samples: &[f64], h: f64) -> f64 {
    let n = samples.len();
    if n < 2 {
        return 0.0;
    }
    let intervals = n - 1;
    let even = intervals - intervals % 2;
    let mut s = 0.0;
    let mut i = 0;
    while i < even {
        s += samples[i] + 4.0 * samples[i + 1] + samples[i + 2];
        i += 2;
    }
    let mut total = s * h / 3.0;
    if even < intervals {
        total += 0.5 * h * (samples[n - 2] + samples[n - 1]);
    }
    total
}

/// Golden-section maximisation of a unimodal function on [a, b].
pub fn golden_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    let mut iters = 0;
    while (b - a).abs() > tol && iters < 200 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
        iters += 1;
    }
    if fc > fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LbfgsOptions {
    pub max_iter: usize,
    pub history: usize,
    /// Stop once the infinity norm of the gradient drops below `grad_tol * max(1, |f|)`.
    pub grad_tol: f64,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        Self {
            max_iter: 2000,
            history: 8,
            grad_tol: 1e-7,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Limited-memory BFGS with Armijo backtracking.
///
/// `fg` returns the objective and writes the gradient into its second argument;
/// returning `None` marks the point as infeasible and shortens the step.
pub fn lbfgs(
    mut fg: impl FnMut(&[f64], &mut [f64]) -> Option<f64>,
    x0: Vec<f64>,
    opts: LbfgsOptions,
) -> Minimum {
    let n = x0.len();
    let mut x = x0;
    let mut g = vec![0.0; n];
    let mut f = match fg(&x, &mut g) {
        Some(f) => f,
        None => {
            return Minimum {
                x,
                value: f64::INFINITY,
                iterations: 0,
                converged: false,
            }
        }
    };
    let mut hist: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut xn = vec![0.0; n];
    let mut gn = vec![0.0; n];
    let mut stalls = 0;
    for it in 0..opts.max_iter {
        let gmax = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if gmax < opts.grad_tol * f.abs().max(1.0) {
            return Minimum {
                x,
                value: f,
                iterations: it,
                converged: true,
            };
        }
        // two-loop recursion
        let mut d: Vec<f64> = g.iter().map(|v| -v).collect();
        let mut alphas = Vec::with_capacity(hist.len());
        for (s, y, rho) in hist.iter().rev() {
            let a = rho * dot(s, &d);
            axpy(-a, y, &mut d);
            alphas.push(a);
        }
        if let Some((s, y, _)) = hist.back() {
            let gamma = dot(s, y) / dot(y, y);
            d.iter_mut().for_each(|v| *v *= gamma);
        } else {
            let scale = 1.0 / gmax.max(1e-300);
            d.iter_mut().for_each(|v| *v *= scale.min(1.0));
        }
        for ((s, y, rho), a) in hist.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &d);
            axpy(a - b, s, &mut d);
        }
        let mut slope = dot(&g, &d);
        if slope >= 0.0 {
            hist.clear();
            d = g.iter().map(|v| -v).collect();
            slope = dot(&g, &d);
        }
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            for i in 0..n {
                xn[i] = x[i] + t * d[i];
            }
            if let Some(fnew) = fg(&xn, &mut gn) {
                if fnew <= f + 1e-4 * t * slope {
                    accepted = Some(fnew);
                    break;
                }
            }
            t *= 0.5;
        }
        let Some(fnew) = accepted else {
            // No descent along d even at tiny steps: treat as a numerical optimum.
            return Minimum {
                x,
                value: f,
                iterations: it,
                converged: gmax < 1e3 * opts.grad_tol * f.abs().max(1.0),
            };
        };
        let s: Vec<f64> = (0..n).map(|i| xn[i] - x[i]).collect();
        let y: Vec<f64> = (0..n).map(|i| gn[i] - g[i]).collect();
        let sy = dot(&s, &y);
        if sy > 1e-300 {
            if hist.len() == opts.history {
                hist.pop_front();
            }
            hist.push_back((s, y, 1.0 / sy));
        }
        if (f - fnew).abs() <= 1e-16 * f.abs() {
            stalls += 1;
        } else {
            stalls = 0;
        }
        std::mem::swap(&mut x, &mut xn);
        std::mem::swap(&mut g, &mut gn);
        f = fnew;
        if stalls >= 5 {
            let gmax = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            return Minimum {
                x,
                value: f,
                iterations: it + 1,
                converged: gmax < 1e3 * opts.grad_tol * f.abs().max(1.0),
            };
        }
    }
    Minimum {
        x,
        value: f,
        iterations: opts.max_iter,
        converged: false,
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

pub fn cross(a: &[f64], b: &[f64]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub fn normalize(a: &[f64]) -> Vec<f64> {
    let n = norm(a);
    a.iter().map(|v| v / n).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        for n in [1usize, 2, 5, 8, 13] {
            let (x, w) = gauss_legendre(n);
            assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
            for deg in 0..2 * n {
                let q: f64 = x.iter().zip(&w).map(|(xi, wi)| wi * xi.powi(deg as i32)).sum();
                let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
                assert!((q - exact).abs() < 1e-13, "n={n} deg={deg}");
            }
        }
    }

    #[test]
    fn pairwise_matches_naive_on_benign_input() {
        let xs: Vec<f64> = (0..1000).map(|i| (i as f64).sin()).collect();
        let naive: f64 = xs.iter().sum();
        assert!((pairwise_sum(&xs) - naive).abs() < 1e-12);
        assert_eq!(pairwise_sum(&[]), 0.0);
    }

    #[test]
    fn simpson_is_exact_for_cubics() {
        let h = 0.1;
        let s: Vec<f64> = (0..=10).map(|i| (i as f64 * h).powi(3)).collect();
        assert!((simpson(&s, h) - 0.25).abs() < 1e-14);
    }

    #[test]
    fn golden_finds_peak() {
        let (x, fx) = golden_max(|t| -(t - 0.3).powi(2) + 2.0, -1.0, 1.0, 1e-10);
        assert!((x - 0.3).abs() < 1e-7);
        assert!((fx - 2.0).abs() < 1e-15);
    }

    #[test]
    fn lbfgs_on_rosenbrock() {
        let m = lbfgs(
            |x, g| {
                let (a, b) = (x[0], x[1]);
                g[0] = -2.0 * (1.0 - a) - 400.0 * a * (b - a * a);
                g[1] = 200.0 * (b - a * a);
                Some((1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2))
            },
            vec![-1.2, 1.0],
            LbfgsOptions::default(),
        );
        assert!(m.converged);
        assert!((m.x[0] - 1.0).abs() < 1e-5 && (m.x[1] - 1.0).abs() < 1e-5);
    }
}
