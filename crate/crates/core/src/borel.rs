//! The m_k-Borel transform at coefficient level, the commutation identities
//! for differentiation, monomial multiplication and the weighted product,
//! and their numerical embodiments as integral kernels on the Borel plane.
//!
//! Every segment integral over [0, tau^k] is reduced to the real interval
//! [0, |tau|^k] by factoring the phase of tau^k out analytically; the
//! remaining endpoint singularities are handled by the graded quadrature in
//! `quad` (substitution u = w^k, 64 Gauss-Legendre nodes per panel).

use crate::error::{Error, Result};
use crate::grid::{GridFunction, MGrid, TauMField};
use crate::problem::{angle_dist, PolynomialSpec};
use crate::quad::graded_nodes;
use crate::series::FormalSeriesT;
use crate::special::gamma;
use num_complex::Complex64;

/// Gauss-Legendre nodes per graded panel.
pub const PANEL_NODES: usize = 64;

/// Coefficients U_n / Gamma(n/k), convergent on a disc of radius `rho`.
#[derive(Debug, Clone)]
pub struct BorelSeries {
    pub coeffs: Vec<GridFunction>,
    pub k: u32,
    pub rho: f64,
    pub grid: MGrid,
}

impl BorelSeries {
    pub fn grid(&self) -> MGrid {
        self.grid
    }

    /// Evaluate the truncated series at a complex point.
    pub fn eval_at(&self, tau: Complex64) -> GridFunction {
        let mut out = GridFunction::zero(self.grid);
        let mut tp = tau;
        for c in &self.coeffs {
            for (o, v) in out.values.iter_mut().zip(&c.values) {
                *o += v * tp;
            }
            tp *= tau;
        }
        out
    }
}

/// Coefficientwise Borel transform of order k: divide U_n by Gamma(n/k).
pub fn mk_borel(series: &FormalSeriesT, k: u32, rho: f64) -> BorelSeries {
    let grid = series.coeffs[0].grid;
    let coeffs = series
        .coeffs
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let n = i + 1;
            c.scale(Complex64::new(1.0 / gamma(n as f64 / k as f64), 0.0))
        })
        .collect();
    BorelSeries { coeffs, k, rho, grid }
}

#[derive(Debug, Clone, Copy)]
pub struct BorelDiffCheck {
    pub discrepancy: f64,
    pub scale: f64,
}

/// Check the differentiation identity: the Borel transform of
/// T^{k+1} dS/dT must equal k tau^k times the Borel transform of S,
/// coefficient by coefficient.
pub fn check_borel_diff(series: &FormalSeriesT, k: u32) -> Result<BorelDiffCheck> {
    let n_orders = series.order();
    if n_orders < (k + 2) as usize {
        return Err(Error::domain("truncation too small for the diff identity"));
    }
    let mut discrepancy = 0.0f64;
    let mut scale = 0.0f64;
    // order n of both sides, for n = k+1 .. n_orders + k
    for n in (k + 1) as usize..=(n_orders + k as usize) {
        let j = n - k as usize; // source coefficient index (power of T)
        let s_j = &series.coeffs[j - 1];
        let a = s_j.scale(Complex64::new(
            (n as f64 - k as f64) / gamma(n as f64 / k as f64),
            0.0,
        ));
        let b = s_j.scale(Complex64::new(
            k as f64 / gamma(j as f64 / k as f64),
            0.0,
        ));
        discrepancy = discrepancy.max(a.sub(&b)?.max_abs());
        scale = scale.max(a.max_abs()).max(b.max_abs());
    }
    Ok(BorelDiffCheck { discrepancy, scale })
}

/// Anything evaluable on the m-grid along a fixed ray in the Borel plane.
pub trait RayFunction {
    fn grid(&self) -> MGrid;
    /// Write the m-grid values at radius r along direction gamma into `out`.
    fn eval_ray(&self, r: f64, gamma: f64, out: &mut [Complex64]) -> Result<()>;
}

impl RayFunction for BorelSeries {
    fn grid(&self) -> MGrid {
        self.grid
    }

    fn eval_ray(&self, r: f64, gamma: f64, out: &mut [Complex64]) -> Result<()> {
        let tau = Complex64::from_polar(r, gamma);
        let v = self.eval_at(tau);
        out.copy_from_slice(&v.values);
        Ok(())
    }
}

impl RayFunction for TauMField {
    fn grid(&self) -> MGrid {
        self.grid
    }

    fn eval_ray(&self, r: f64, gamma: f64, out: &mut [Complex64]) -> Result<()> {
        if angle_dist(gamma, self.ray.direction) > 1e-9 {
            return Err(Error::domain(
                "field stored on a different ray; re-solve instead of rotating",
            ));
        }
        if r > self.ray.r_max() * (1.0 + 1e-12) {
            return Err(Error::domain("radius beyond the stored ray"));
        }
        self.interp_row(r, out);
        Ok(())
    }
}

/// Numerical Borel image of multiplication by T^{m_power}:
/// tau^k / Gamma(m/k) * ∫_0^{tau^k} (tau^k - s)^{m/k - 1} w(s^{1/k}) ds / s,
/// evaluated on the m-grid at one point tau.
pub fn borel_monomial_mult(
    w: &dyn RayFunction,
    m_power: u32,
    k: u32,
    tau: Complex64,
) -> Result<Vec<Complex64>> {
    if m_power < 1 {
        return Err(Error::domain("monomial power must be >= 1"));
    }
    let grid = w.grid();
    let r = tau.norm();
    let gamma_dir = tau.arg();
    let b = r.powi(k as i32);
    let mk = m_power as f64 / k as f64;
    let mut acc = vec![Complex64::new(0.0, 0.0); grid.points];
    let mut row = vec![Complex64::new(0.0, 0.0); grid.points];
    for (u, wt) in graded_nodes(b, k, PANEL_NODES) {
        w.eval_ray(u.powf(1.0 / k as f64), gamma_dir, &mut row)?;
        let kernel = (b - u).powf(mk - 1.0) / u * wt;
        for (a, v) in acc.iter_mut().zip(&row) {
            *a += v * kernel;
        }
    }
    // phases: (tau^k - s)^{m/k - 1} contributes e^{i(m-k)gamma}, prefactor tau^k
    let phase = Complex64::from_polar(1.0, (m_power as f64 - k as f64) * gamma_dir);
    let pre = tau.powi(k as i32) * phase / gamma(mk);
    Ok(acc.into_iter().map(|a| a * pre).collect())
}

/// Numerical Borel image of the weighted product:
/// tau^k ∫_0^{tau^k} f((tau^k - s)^{1/k}) ⋆ g(s^{1/k}) ds / ((tau^k - s) s)
/// with the ⋆ product taken in the m variable.
pub fn borel_convolution(
    f: &dyn RayFunction,
    g: &dyn RayFunction,
    q1: &PolynomialSpec,
    q2: &PolynomialSpec,
    r_poly: &PolynomialSpec,
    tau: Complex64,
    k: u32,
) -> Result<GridFunction> {
    let grid = f.grid();
    if g.grid() != grid {
        return Err(Error::domain("mismatched m-grids in Borel convolution"));
    }
    let r = tau.norm();
    let gamma_dir = tau.arg();
    let b = r.powi(k as i32);
    // O(tau) vanishing guard: compare the smallest-radius magnitude to scale
    {
        let probe = (b * 1e-6).powf(1.0 / k as f64);
        let mut row = vec![Complex64::new(0.0, 0.0); grid.points];
        g.eval_ray(probe, gamma_dir, &mut row)?;
        let small = row.iter().map(|v| v.norm()).fold(0.0, f64::max);
        g.eval_ray((b * 0.5).powf(1.0 / k as f64), gamma_dir, &mut row)?;
        let mid = row.iter().map(|v| v.norm()).fold(0.0, f64::max);
        if mid > 0.0 && small > 0.5 * mid {
            return Err(Error::numerical("inputs violate O(tau) vanishing"));
        }
    }
    let q1w: Vec<Complex64> = grid.nodes().map(|m| q1.eval_im(m)).collect();
    let q2w: Vec<Complex64> = grid.nodes().map(|m| q2.eval_im(m)).collect();
    let rinv: Vec<Complex64> = grid
        .nodes()
        .map(|m| {
            let v = r_poly.eval_im(m);
            Complex64::new(1.0, 0.0) / v
        })
        .collect();
    let h = grid.spacing();
    let n = grid.points;
    let center = (n - 1) / 2;
    let mut acc = vec![Complex64::new(0.0, 0.0); n];
    let mut fr = vec![Complex64::new(0.0, 0.0); n];
    let mut gr = vec![Complex64::new(0.0, 0.0); n];
    let inv_k = 1.0 / k as f64;
    for (u, wt) in graded_nodes(b, k, PANEL_NODES) {
        f.eval_ray((b - u).powf(inv_k), gamma_dir, &mut fr)?;
        g.eval_ray(u.powf(inv_k), gamma_dir, &mut gr)?;
        for (v, q) in fr.iter_mut().zip(&q1w) {
            *v *= q;
        }
        for (v, q) in gr.iter_mut().zip(&q2w) {
            *v *= q;
        }
        let kernel = wt / ((b - u) * u);
        // m-convolution of the two weighted rows
        for i in 0..n {
            let mut c = Complex64::new(0.0, 0.0);
            let j_lo = i.saturating_sub(center);
            let j_hi = (i + center).min(n - 1);
            for j in j_lo..=j_hi {
                c += fr[i + center - j] * gr[j];
            }
            acc[i] += c * (h * kernel);
        }
    }
    // phase bookkeeping: ds/((tau^k - s)s) contributes e^{-i k gamma}, which
    // cancels against the prefactor tau^k = r^k e^{i k gamma}
    let pre = b;
    let values = acc
        .into_iter()
        .zip(&rinv)
        .map(|(a, ri)| a * ri * pre)
        .collect();
    GridFunction::new(grid, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{m_convolution, TauRay};
    use crate::util::SplitMix64;

    fn grid() -> MGrid {
        MGrid::new(6.0, 49).unwrap()
    }

    fn const_profile(g: MGrid, a: f64) -> GridFunction {
        GridFunction::from_fn(g, |_| Complex64::new(a, 0.0))
    }

    /// Formal series with the given monomial coefficients (power -> profile).
    fn monomial_series(g: MGrid, powers: &[(usize, GridFunction)], n_max: usize) -> FormalSeriesT {
        let mut coeffs = vec![GridFunction::zero(g); n_max];
        for (p, f) in powers {
            coeffs[*p - 1] = f.clone();
        }
        FormalSeriesT { coeffs, eps: Complex64::new(0.1, 0.0) }
    }

    #[test]
    fn mk_borel_known_gammas() {
        let g = grid();
        let f = const_profile(g, 2.0);
        let s = monomial_series(g, &[(1, f.clone())], 4);
        let b = mk_borel(&s, 2, 1.0);
        // T^1 coefficient divided by Gamma(1/2) = sqrt(pi)
        let expect = 2.0 / std::f64::consts::PI.sqrt();
        assert!((b.coeffs[0].values[0].re - expect).abs() < 1e-14);
        // T^k coefficient divided by Gamma(1) = 1
        let s2 = monomial_series(g, &[(2, f)], 4);
        let b2 = mk_borel(&s2, 2, 1.0);
        assert!((b2.coeffs[1].values[0].re - 2.0).abs() < 1e-14);
    }

    #[test]
    fn mk_borel_is_linear() {
        let g = grid();
        let mut rng = SplitMix64::new(3);
        let mk_rand = |rng: &mut SplitMix64| {
            let coeffs: Vec<GridFunction> = (0..6)
                .map(|_| {
                    let a = rng.range(-1.0, 1.0);
                    let w = rng.range(0.5, 2.0);
                    GridFunction::gaussian(g, a, w, 0.0)
                })
                .collect();
            FormalSeriesT { coeffs, eps: Complex64::new(0.1, 0.0) }
        };
        let s1 = mk_rand(&mut rng);
        let s2 = mk_rand(&mut rng);
        let a = Complex64::new(1.5, -0.25);
        let combo = FormalSeriesT {
            coeffs: s1
                .coeffs
                .iter()
                .zip(&s2.coeffs)
                .map(|(x, y)| x.scale(a).add(y).unwrap())
                .collect(),
            eps: s1.eps,
        };
        let lhs = mk_borel(&combo, 3, 1.0);
        let b1 = mk_borel(&s1, 3, 1.0);
        let b2 = mk_borel(&s2, 3, 1.0);
        for i in 0..6 {
            let rhs = b1.coeffs[i].scale(a).add(&b2.coeffs[i]).unwrap();
            assert!(lhs.coeffs[i].sub(&rhs).unwrap().max_abs() < 1e-14);
        }
    }

    #[test]
    fn diff_identity_single_monomial() {
        // S = T^3, k = 2: both sides agree through the Gamma recurrence
        let g = grid();
        let s = monomial_series(g, &[(3, const_profile(g, 1.0))], 5);
        let chk = check_borel_diff(&s, 2).unwrap();
        assert!(chk.discrepancy < 1e-14 * chk.scale.max(1.0));
    }

    #[test]
    fn diff_identity_random_series_all_k() {
        let g = grid();
        let mut rng = SplitMix64::new(11);
        for k in 1..=3u32 {
            for _ in 0..5 {
                let coeffs: Vec<GridFunction> = (0..10)
                    .map(|_| {
                        GridFunction::gaussian(g, rng.range(-2.0, 2.0), rng.range(0.5, 2.0), rng.range(-1.0, 1.0))
                    })
                    .collect();
                let s = FormalSeriesT { coeffs, eps: Complex64::new(0.1, 0.0) };
                let chk = check_borel_diff(&s, k).unwrap();
                assert!(
                    chk.discrepancy < 1e-12 * chk.scale,
                    "k={k}: {} vs scale {}",
                    chk.discrepancy,
                    chk.scale
                );
            }
        }
    }

    #[test]
    fn diff_identity_zero_series() {
        let g = grid();
        let s = monomial_series(g, &[], 6);
        let chk = check_borel_diff(&s, 2).unwrap();
        assert_eq!(chk.discrepancy, 0.0);
    }

    #[test]
    fn monomial_mult_matches_coefficient_shift() {
        // w = Borel of T^1, multiply by T^2, k = 2, tau = 0.5:
        // exact answer tau^3 / Gamma(3/2)
        let g = grid();
        let s = monomial_series(g, &[(1, const_profile(g, 1.0))], 3);
        let w = mk_borel(&s, 2, 1.0);
        let tau = Complex64::new(0.5, 0.0);
        let vals = borel_monomial_mult(&w, 2, 2, tau).unwrap();
        let expect = 0.5f64.powi(3) / gamma(1.5);
        assert!((expect - 0.141_047).abs() < 1e-5);
        for v in &vals {
            assert!((v - expect).norm() < 1e-10, "{v} vs {expect}");
        }
    }

    #[test]
    fn monomial_mult_exponent_zero_case() {
        // m_power = k: kernel exponent vanishes
        let g = grid();
        let s = monomial_series(g, &[(2, const_profile(g, 1.0))], 4);
        let w = mk_borel(&s, 2, 1.0);
        let tau = Complex64::from_polar(0.4, 0.3);
        let vals = borel_monomial_mult(&w, 2, 2, tau).unwrap();
        // exact: Borel of T^4 at tau = tau^4 / Gamma(2)
        let expect = tau.powi(4) / gamma(2.0);
        for v in &vals {
            assert!((v - expect).norm() < 1e-10 * expect.norm(), "{v} vs {expect}");
        }
    }

    #[test]
    fn monomial_mult_zero_input() {
        let g = grid();
        let s = monomial_series(g, &[], 3);
        let w = mk_borel(&s, 2, 1.0);
        let vals = borel_monomial_mult(&w, 3, 2, Complex64::new(0.3, 0.1)).unwrap();
        assert!(vals.iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn monomial_mult_random_truncated_series_identity() {
        // against the coefficient-level shift, relative 1e-8 (spec invariant)
        let g = grid();
        let mut rng = SplitMix64::new(5);
        for k in [1u32, 2, 3] {
            let coeffs: Vec<GridFunction> = (0..5)
                .map(|_| GridFunction::gaussian(g, rng.range(-1.0, 1.0), rng.range(0.8, 1.6), 0.0))
                .collect();
            let s = FormalSeriesT { coeffs: coeffs.clone(), eps: Complex64::new(0.1, 0.0) };
            let w = mk_borel(&s, k, 1.0);
            let m_power = 1 + (k % 3);
            let tau = Complex64::from_polar(0.6, 0.2);
            let got = borel_monomial_mult(&w, m_power, k, tau).unwrap();
            // coefficient shift: T^{m} S has coefficients S_{n-m}
            let shifted_coeffs: Vec<GridFunction> = (0..coeffs.len() + m_power as usize)
                .map(|i| {
                    let n = i + 1;
                    if n > m_power as usize && n - m_power as usize <= coeffs.len() {
                        coeffs[n - m_power as usize - 1].clone()
                    } else {
                        GridFunction::zero(g)
                    }
                })
                .collect();
            let shifted = FormalSeriesT { coeffs: shifted_coeffs, eps: s.eps };
            let exact = mk_borel(&shifted, k, 1.0).eval_at(tau);
            let scale = exact.max_abs().max(1e-30);
            for (a, b) in got.iter().zip(&exact.values) {
                assert!((a - b).norm() < 1e-8 * scale, "k={k}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn convolution_beta_integral_case() {
        // k = 1, f = g = Borel of T^1 with constant profiles: the tau^2
        // coefficient is the plain m-convolution of the profiles
        let g = grid();
        let one = PolynomialSpec::constant(1.0);
        let p = const_profile(g, 1.0);
        let s = monomial_series(g, &[(1, p.clone())], 2);
        let w = mk_borel(&s, 1, 1.0);
        let tau = Complex64::new(0.3, 0.0);
        let got = borel_convolution(&w, &w, &one, &one, &one, tau, 1).unwrap();
        let pp = m_convolution(&p, &p).unwrap();
        // expected: tau^2 * (p * p) / Gamma(2) with Gamma factors 1
        for (a, b) in got.values.iter().zip(&pp.values) {
            let expect = b * tau.powi(2);
            assert!((a - expect).norm() < 1e-9 * expect.norm().max(1e-12));
        }
    }

    #[test]
    fn convolution_zero_and_symmetry() {
        let g = grid();
        let one = PolynomialSpec::constant(1.0);
        let p = GridFunction::gaussian(g, 1.0, 1.0, 0.0);
        let s = monomial_series(g, &[(1, p.clone()), (2, p.scale(Complex64::new(0.5, 0.0)))], 3);
        let w = mk_borel(&s, 2, 1.0);
        let z = mk_borel(&monomial_series(g, &[], 3), 2, 1.0);
        let tau = Complex64::from_polar(0.5, 0.4);
        let zero = borel_convolution(&w, &z, &one, &one, &one, tau, 2).unwrap();
        assert!(zero.max_abs() < 1e-14);
        let ab = borel_convolution(&w, &w, &one, &one, &one, tau, 2).unwrap();
        // swap is trivially equal here; use two different fields for substance
        let s2 = monomial_series(g, &[(1, GridFunction::gaussian(g, 0.7, 1.3, 0.2))], 3);
        let w2 = mk_borel(&s2, 2, 1.0);
        let fg = borel_convolution(&w, &w2, &one, &one, &one, tau, 2).unwrap();
        let gf = borel_convolution(&w2, &w, &one, &one, &one, tau, 2).unwrap();
        assert!(fg.sub(&gf).unwrap().max_abs() < 1e-10 * fg.max_abs().max(1e-20));
        let _ = ab;
    }

    #[test]
    fn convolution_matches_coefficient_level_product() {
        let g = grid();
        let one = PolynomialSpec::constant(1.0);
        let mut rng = SplitMix64::new(21);
        let k = 2u32;
        let mk_rand = |rng: &mut SplitMix64| {
            let coeffs: Vec<GridFunction> = (0..4)
                .map(|_| GridFunction::gaussian(g, rng.range(-1.0, 1.0), rng.range(0.8, 1.5), 0.0))
                .collect();
            FormalSeriesT { coeffs, eps: Complex64::new(0.1, 0.0) }
        };
        let sf = mk_rand(&mut rng);
        let sg = mk_rand(&mut rng);
        let wf = mk_borel(&sf, k, 1.0);
        let wg = mk_borel(&sg, k, 1.0);
        let tau = Complex64::from_polar(0.45, -0.3);
        let got = borel_convolution(&wf, &wg, &one, &one, &one, tau, k).unwrap();
        // coefficient level: (f star g)_n = sum_{p+q=n} conv(f_p, g_q), then Borel
        let n_max = 8;
        let mut prod = vec![GridFunction::zero(g); n_max];
        for (i, a) in sf.coeffs.iter().enumerate() {
            for (j, b) in sg.coeffs.iter().enumerate() {
                let n = i + j + 2;
                if n <= n_max {
                    prod[n - 1] = prod[n - 1].add(&m_convolution(a, b).unwrap()).unwrap();
                }
            }
        }
        let prod_series = FormalSeriesT { coeffs: prod, eps: sf.eps };
        let exact = mk_borel(&prod_series, k, 1.0).eval_at(tau);
        let scale = exact.max_abs().max(1e-30);
        assert!(
            got.sub(&exact).unwrap().max_abs() < 1e-8 * scale,
            "mismatch {} at scale {scale}",
            got.sub(&exact).unwrap().max_abs()
        );
    }

    #[test]
    fn convolution_rejects_inputs_without_vanishing() {
        // a constant-in-tau field violates the O(tau) vanishing the
        // convolution kernel requires at the origin
        let g = grid();
        let one = PolynomialSpec::constant(1.0);
        let ray = TauRay::geometric(0.1, 1e-4, 1.0, 48).unwrap();
        let flat = TauMField::from_fn(ray.clone(), g, |_, _| Complex64::new(1.0, 0.0));
        let good = TauMField::from_fn(ray, g, |tau, _| tau);
        let tau = Complex64::from_polar(0.5, 0.1);
        let err = borel_convolution(&good, &flat, &one, &one, &one, tau, 2).unwrap_err();
        assert!(err.to_string().contains("vanishing"), "{err}");
    }

    #[test]
    fn field_on_wrong_ray_is_rejected() {
        let g = grid();
        let ray = TauRay::geometric(0.0, 1e-3, 1.0, 32).unwrap();
        let f = TauMField::from_fn(ray, g, |tau, _| tau);
        let mut out = vec![Complex64::new(0.0, 0.0); g.points];
        assert!(f.eval_ray(0.5, 1.0, &mut out).is_err());
        assert!(f.eval_ray(0.5, 0.0, &mut out).is_ok());
    }
}
