//! Gauss-Legendre rules and the graded panel scheme used for the weakly
//! singular Volterra kernels on segments [0, b] of the real line.
//!
//! Every integral over a complex segment [0, tau^k] in this crate is first
//! reduced to the real interval [0, |tau|^k] by factoring out the phase, so
//! only real abscissas are needed here. Endpoint singularities of the form
//! u^(1/k - 1) (and mirrored at the right endpoint) become analytic after the
//! substitution u = w^k, which is what `graded_nodes` implements.

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

/// Nodes and weights of the n-point Gauss-Legendre rule on [-1, 1].
/// Computed by Newton iteration on the Legendre recurrence and cached.
pub fn gauss_legendre(n: usize) -> &'static (Vec<f64>, Vec<f64>) {
    static CACHE: OnceLock<Mutex<HashMap<usize, &'static (Vec<f64>, Vec<f64>)>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().unwrap();
    if let Some(&r) = guard.get(&n) {
        return r;
    }
    let rule = Box::leak(Box::new(compute_gl(n)));
    guard.insert(n, rule);
    rule
}

fn compute_gl(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 2);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Tricomi-style initial guess
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // Legendre P_n(x) and derivative by upward recurrence
            let mut p0 = 1.0;
            let mut p1 = x;
            for j in 2..=n {
                let jf = j as f64;
                let p2 = ((2.0 * jf - 1.0) * x * p1 - (jf - 1.0) * p0) / jf;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Nodes and weights for an affine image [a, b] of the n-point rule.
pub fn panel_nodes(a: f64, b: f64, n: usize) -> Vec<(f64, f64)> {
    let (xs, ws) = gauss_legendre(n);
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    xs.iter()
        .zip(ws)
        .map(|(&x, &w)| (mid + half * x, half * w))
        .collect()
}

/// Quadrature nodes for ∫_0^b f(u) du where f may behave like
/// u^(1/grade - 1) * smooth(u^(1/grade)) near 0 and similarly at b.
///
/// The interval is split at b/2 and each half is graded toward its endpoint
/// via u = w^grade (resp. b - w^grade); weights absorb the Jacobian, so the
/// caller just sums w_i * f(u_i).
pub fn graded_nodes(b: f64, grade: u32, n_per_panel: usize) -> Vec<(f64, f64)> {
    assert!(grade >= 1);
    if b <= 0.0 {
        return Vec::new();
    }
    let g = grade as f64;
    let half = 0.5 * b;
    let wmax = half.powf(1.0 / g);
    let mut out = Vec::with_capacity(2 * n_per_panel);
    for &(w, wt) in &panel_nodes(0.0, wmax, n_per_panel) {
        let u = w.powi(grade as i32);
        out.push((u, wt * g * w.powf(g - 1.0)));
    }
    for &(w, wt) in &panel_nodes(0.0, wmax, n_per_panel) {
        let u = b - w.powi(grade as i32);
        out.push((u, wt * g * w.powf(g - 1.0)));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gl_integrates_polynomials_exactly() {
        // degree 2n-1 exactness
        let nodes = panel_nodes(-1.0, 1.0, 8);
        let val: f64 = nodes.iter().map(|&(x, w)| w * x.powi(14)).sum();
        assert!((val - 2.0 / 15.0).abs() < 1e-14);
    }

    #[test]
    fn graded_handles_endpoint_singularity() {
        // ∫_0^1 u^(-1/2) du = 2, singular at the left endpoint
        let nodes = graded_nodes(1.0, 2, 32);
        let val: f64 = nodes.iter().map(|&(u, w)| w / u.sqrt()).sum();
        assert!((val - 2.0).abs() < 1e-12, "got {val}");
    }

    #[test]
    fn graded_beta_integral() {
        // ∫_0^1 u^(-1/2) (1-u)^(-1/2) du = π, singular at both endpoints
        let nodes = graded_nodes(1.0, 2, 48);
        let val: f64 = nodes
            .iter()
            .map(|&(u, w)| w / (u.sqrt() * (1.0 - u).sqrt()))
            .sum();
        assert!((val - std::f64::consts::PI).abs() < 1e-11, "got {val}");
    }

    #[test]
    fn graded_plain_smooth_function() {
        let nodes = graded_nodes(2.0, 3, 32);
        let val: f64 = nodes.iter().map(|&(u, w)| w * (u).exp()).sum();
        assert!((val - (2.0f64.exp() - 1.0)).abs() < 1e-12);
    }
}
