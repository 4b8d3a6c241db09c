//! Laplace transform of order k along admissible rays and Fourier
//! inversion: assembling actual sectorial solutions out of Borel-plane
//! fields.

use crate::error::{Error, Result};
use crate::geometry::CoveringPlan;
use crate::grid::{fourier_inverse, GridFunction, MGrid};
use crate::problem::{angle_dist, EquationSpec, SectorSpec};
use crate::quad::panel_nodes;
use crate::solver::BorelSolution;
use num_complex::Complex64;

/// Pick the integration ray inside the sector maximizing the kernel margin
/// cos(k(gamma - arg T)); errors when the margin cannot reach delta1.
pub fn choose_direction(
    t_pt: Complex64,
    sector: &SectorSpec,
    delta1: f64,
    k: u32,
) -> Result<f64> {
    if delta1 <= 0.0 || delta1 >= 1.0 {
        return Err(Error::domain("delta1 must lie in (0, 1)"));
    }
    let arg_t = t_pt.arg();
    let half = sector.aperture / 2.0;
    // wrap arg_t near the sector direction before clamping
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut a = arg_t;
    while a - sector.direction > std::f64::consts::PI {
        a -= two_pi;
    }
    while sector.direction - a > std::f64::consts::PI {
        a += two_pi;
    }
    let gamma = a.clamp(sector.direction - half, sector.direction + half);
    let margin = (k as f64 * (gamma - a)).cos();
    if margin < delta1 {
        return Err(Error::domain(format!(
            "T outside summable sector: best cos(k(gamma - arg T)) = {margin:.4} < {delta1}"
        )));
    }
    Ok(gamma)
}

/// Shared quadrature core: k ∫_0^{r_max} g(r) e^{-(r e^{i gamma}/T)^k} dr/r
/// with g supplied per radius as a row of m-values. Panels resolve the
/// kernel scale |T|; returns the values and the last-panel fraction as a
/// truncation diagnostic.
fn laplace_rows(
    mut g: impl FnMut(f64, &mut [Complex64]),
    width: usize,
    r_max: f64,
    t_pt: Complex64,
    gamma: f64,
    k: u32,
) -> Result<(Vec<Complex64>, f64)> {
    if t_pt.norm() == 0.0 {
        return Ok((vec![Complex64::new(0.0, 0.0); width], 0.0));
    }
    let at = t_pt.norm();
    let phase = Complex64::from_polar(1.0, gamma);
    let decay = (k as f64 * (gamma - t_pt.arg())).cos();
    if decay <= 0.0 {
        return Err(Error::domain(
            "Laplace kernel does not decay along the chosen ray",
        ));
    }
    // kernel negligible beyond (40/decay)^{1/k} |T|
    let r_cut = (40.0 / decay).powf(1.0 / k as f64) * at;
    let r_end = r_cut.min(r_max);
    if r_max < r_cut {
        // the field truncation bites before the kernel has decayed
        let expo = decay * (r_max / at).powi(k as i32);
        if expo < 27.0 {
            return Err(Error::numerical(format!(
                "Laplace tail not suppressed: kernel exponent {expo:.1} at R_max = {r_max:.3e}; \
                 increase R_max"
            )));
        }
    }
    let mut acc = vec![Complex64::new(0.0, 0.0); width];
    let mut row = vec![Complex64::new(0.0, 0.0); width];
    let mut tail_frac = 0.0f64;
    let mut total_mag = 0.0f64;
    let mut b0 = 0.0;
    let mut b1 = at.min(r_end);
    loop {
        let mut panel_mag = 0.0f64;
        for (r, wt) in panel_nodes(b0, b1, 40) {
            g(r, &mut row);
            let kern = (-(phase * r / t_pt).powi(k as i32)).exp() * (k as f64 * wt / r);
            let mut mag = 0.0f64;
            for (a, v) in acc.iter_mut().zip(&row) {
                let c = v * kern;
                *a += c;
                mag = mag.max(c.norm());
            }
            panel_mag = panel_mag.max(mag);
        }
        total_mag = total_mag.max(panel_mag);
        if total_mag > 0.0 {
            tail_frac = panel_mag / total_mag;
        }
        if b1 >= r_end {
            break;
        }
        b0 = b1;
        b1 = (b1 * 1.8).min(r_end);
    }
    Ok((acc, tail_frac))
}

/// Laplace transform of order k of a stored Borel-plane field along its ray.
pub fn laplace_mk(
    solution: &BorelSolution,
    t_pt: Complex64,
    gamma: f64,
    k: u32,
) -> Result<GridFunction> {
    let field = &solution.field;
    if angle_dist(gamma, field.ray.direction) > 1e-9 {
        return Err(Error::domain(
            "field stored on a different ray; re-solve for this direction",
        ));
    }
    let width = field.grid.points;
    let radii = &field.ray.radii;
    let (values, tail) = laplace_rows(
        |r, out| field.interp_row(r, out),
        width,
        *radii.last().unwrap(),
        t_pt,
        gamma,
        k,
    )?;
    if tail > 1e-6 {
        return Err(Error::numerical(format!(
            "Laplace truncation tail fraction {tail:.2e}; increase R_max"
        )));
    }
    GridFunction::new(field.grid, values)
}

/// Laplace transform of an exactly evaluable radial function (used by the
/// monomial round-trip checks, where no field truncation exists).
pub fn laplace_mk_fn(
    g: impl FnMut(f64, &mut [Complex64]),
    grid: MGrid,
    t_pt: Complex64,
    gamma: f64,
    k: u32,
) -> Result<GridFunction> {
    let (values, _) = laplace_rows(g, grid.points, f64::INFINITY, t_pt, gamma, k)?;
    GridFunction::new(grid, values)
}

/// An actual solution on (T intersect D(0,h')) x H_{beta'} for one sector of
/// the covering, evaluated through Laplace and Fourier transforms of
/// Borel-plane fields solved along admissible rays.
pub struct SectorSolution {
    pub p: usize,
    pub plan: CoveringPlan,
    pub spec: EquationSpec,
    pub eps: Complex64,
    /// Fields solved along rays inside S_{d_p}; eval picks by direction.
    pub solutions: Vec<BorelSolution>,
    pub h_prime: f64,
    pub beta_prime: f64,
}

/// h' = min((delta1/(delta2 + nu))^{1/k}, r_T) with the free decay split
/// taken as delta2 = nu/8 and a 0.9 safety margin. A small delta2
/// maximizes the time domain, which is what makes the neighbor-difference
/// decay measurable at all.
pub fn h_prime(plan: &CoveringPlan, spec: &EquationSpec) -> f64 {
    let v = (plan.delta1 / (1.125 * spec.nu)).powf(1.0 / spec.k as f64);
    0.9 * v.min(plan.r_t)
}

/// Largest |t| the Laplace integral supports for an achieved kernel margin
/// cos(k(gamma - arg T)): the growth reserve (margin/|t|^k - nu) must stay
/// at least nu/8, with the same 0.9 safety as h'.
pub fn t_allowance(margin: f64, nu: f64, k: u32) -> f64 {
    0.9 * (margin / (1.125 * nu)).powf(1.0 / k as f64)
}

pub fn build_solution(
    plan: &CoveringPlan,
    p: usize,
    spec: &EquationSpec,
    eps: Complex64,
    solutions: Vec<BorelSolution>,
) -> Result<SectorSolution> {
    if p >= plan.sector_count() {
        return Err(Error::domain("sector index out of range"));
    }
    if !plan.sectors[p].contains(eps) {
        return Err(Error::domain(format!(
            "eps = {eps} outside the covering sector {p}"
        )));
    }
    for s in &solutions {
        if (s.eps - eps).norm() > 1e-12 * eps.norm() {
            return Err(Error::domain("solution solved at a different eps"));
        }
        if angle_dist(s.direction, plan.directions[p]) > plan.unbounded[p].aperture / 2.0 + 1e-9 {
            return Err(Error::domain(
                "solution ray outside the sector's certified unbounded sector",
            ));
        }
    }
    Ok(SectorSolution {
        p,
        plan: plan.clone(),
        spec: spec.clone(),
        eps,
        solutions,
        h_prime: h_prime(plan, spec),
        beta_prime: spec.beta / 2.0,
    })
}

impl SectorSolution {
    /// Domain guard for the time variable. |t| is limited by the kernel
    /// margin actually achieved at arg(eps t), which is never smaller than
    /// the conservative global radius h'.
    pub fn check_t(&self, t: Complex64) -> Result<()> {
        if !self.plan.t_sector.contains(t) {
            return Err(Error::domain(format!("t = {t} outside the time sector")));
        }
        let gamma = self.direction_at(t)?;
        let margin = (self.spec.k as f64 * (gamma - (self.eps * t).arg())).cos();
        let allow = t_allowance(margin, self.spec.nu, self.spec.k);
        if t.norm() >= allow {
            return Err(Error::domain(format!(
                "t = {t} outside the summable domain (|t| limit {allow:.4})"
            )));
        }
        let big_t = self.eps * t;
        if !self.plan.theta_sector(self.p).contains(big_t) {
            return Err(Error::domain(format!(
                "eps t = {big_t} escapes the associated sector of p = {}",
                self.p
            )));
        }
        Ok(())
    }

    fn field_for(&self, gamma: f64) -> Result<&BorelSolution> {
        self.solutions
            .iter()
            .find(|s| angle_dist(s.direction, gamma) < 1e-9)
            .ok_or_else(|| {
                Error::domain(format!(
                    "no Borel-plane solve stored for direction {gamma:.6}; \
                     re-solve on that ray instead of rotating"
                ))
            })
    }

    /// The Laplace direction this solution uses at time t.
    pub fn direction_at(&self, t: Complex64) -> Result<f64> {
        choose_direction(
            self.eps * t,
            &self.plan.unbounded[self.p],
            self.plan.delta1,
            self.spec.k,
        )
    }

    /// U(eps t, m) on the m-grid.
    pub fn u_fourier_side(&self, t: Complex64) -> Result<GridFunction> {
        self.check_t(t)?;
        let gamma = self.direction_at(t)?;
        let sol = self.field_for(gamma)?;
        laplace_mk(sol, self.eps * t, gamma, self.spec.k)
    }

    /// u_p(t, z) for a batch of z sharing one Laplace evaluation.
    pub fn eval_row(&self, t: Complex64, zs: &[Complex64]) -> Result<Vec<Complex64>> {
        for z in zs {
            if z.im.abs() > self.beta_prime {
                return Err(Error::domain(format!(
                    "z = {z} outside the strip |Im z| <= beta' = {}",
                    self.beta_prime
                )));
            }
        }
        let u = self.u_fourier_side(t)?;
        fourier_inverse(&u, zs, self.spec.beta)
    }

    pub fn eval(&self, t: Complex64, z: Complex64) -> Result<Complex64> {
        Ok(self.eval_row(t, &[z])?[0])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::gamma as gamma_fn;
    use crate::util::fit_line;

    fn test_grid() -> MGrid {
        MGrid::new(4.0, 9).unwrap()
    }

    #[test]
    fn choose_direction_aligned_and_boundary() {
        let sector = SectorSpec {
            direction: 0.7,
            aperture: 0.4,
            inner_radius: 0.0,
            outer_radius: None,
        };
        let t = Complex64::from_polar(0.1, 0.7);
        let g = choose_direction(t, &sector, 0.5, 2).unwrap();
        assert!((g - 0.7).abs() < 1e-12);
        // arg T at d + pi/(2k) with vanishing aperture: cosine ~ 0 < delta1
        let narrow = SectorSpec {
            direction: 0.0,
            aperture: 1e-9,
            inner_radius: 0.0,
            outer_radius: None,
        };
        let t2 = Complex64::from_polar(0.1, std::f64::consts::FRAC_PI_4);
        assert!(choose_direction(t2, &narrow, 0.5, 2).is_err());
    }

    #[test]
    fn choose_direction_clamps_to_edge() {
        // k=2, d=0, aperture 0.2, arg T = 0.3, delta1 = 0.5:
        // gamma = 0.1, cos(0.4) = 0.921
        let sector = SectorSpec {
            direction: 0.0,
            aperture: 0.2,
            inner_radius: 0.0,
            outer_radius: None,
        };
        let t = Complex64::from_polar(0.05, 0.3);
        let g = choose_direction(t, &sector, 0.5, 2).unwrap();
        assert!((g - 0.1).abs() < 1e-12);
        assert!((2.0f64 * (g - 0.3)).cos() > 0.92);
    }

    #[test]
    fn laplace_borel_round_trip_monomials() {
        // Laplace of u^n / Gamma(n/k) along an admissible ray returns T^n
        let grid = test_grid();
        for k in [1u32, 2, 3] {
            for n in 1..=6 {
                let gn = gamma_fn(n as f64 / k as f64);
                for (i, &argt) in [-0.2f64, 0.0, 0.13].iter().enumerate() {
                    let t_pt = Complex64::from_polar(0.08 + 0.02 * i as f64, argt);
                    let gamma = choose_direction(
                        t_pt,
                        &SectorSpec {
                            direction: 0.0,
                            aperture: 0.6,
                            inner_radius: 0.0,
                            outer_radius: None,
                        },
                        0.5,
                        k,
                    )
                    .unwrap();
                    let phase = Complex64::from_polar(1.0, gamma);
                    let u = laplace_mk_fn(
                        |r, out| {
                            let tau = phase * r;
                            let v = tau.powi(n) / gn;
                            out.fill(v);
                        },
                        grid,
                        t_pt,
                        gamma,
                        k,
                    )
                    .unwrap();
                    let expect = t_pt.powi(n);
                    for v in &u.values {
                        assert!(
                            (v - expect).norm() < 1e-8 * expect.norm(),
                            "k={k} n={n}: {v} vs {expect}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn laplace_zero_is_zero() {
        let grid = test_grid();
        let u = laplace_mk_fn(
            |_, out| out.fill(Complex64::new(0.0, 0.0)),
            grid,
            Complex64::new(0.05, 0.01),
            0.0,
            2,
        )
        .unwrap();
        assert!(u.max_abs() == 0.0);
    }

    #[test]
    fn laplace_direction_independence() {
        // two admissible rays give the same value (holomorphy in the sector)
        let grid = test_grid();
        let k = 2u32;
        let n = 3;
        let gn = gamma_fn(n as f64 / k as f64);
        let t_pt = Complex64::from_polar(0.07, 0.05);
        let mut vals = Vec::new();
        for gamma in [-0.1f64, 0.12] {
            let phase = Complex64::from_polar(1.0, gamma);
            let u = laplace_mk_fn(
                |r, out| out.fill((phase * r).powi(n) / gn),
                grid,
                t_pt,
                gamma,
                k,
            )
            .unwrap();
            vals.push(u.values[0]);
        }
        assert!(
            (vals[0] - vals[1]).norm() < 1e-8 * vals[0].norm(),
            "{} vs {}",
            vals[0],
            vals[1]
        );
    }

    #[test]
    fn laplace_gevrey_remainder_slopes() {
        // |U(T) - sum_{p<n} c_p T^p| behaves like |T|^n for the first orders
        let grid = MGrid::new(1.0, 3).unwrap();
        let k = 2u32;
        let coeffs = [0.8, -0.5, 0.3, 0.2, -0.1, 0.05];
        let eval_u = |t_pt: Complex64| -> Complex64 {
            let u = laplace_mk_fn(
                |r, out| {
                    let mut acc = Complex64::new(0.0, 0.0);
                    let mut tp = Complex64::new(r, 0.0);
                    for (i, &c) in coeffs.iter().enumerate() {
                        acc += c * tp / gamma_fn((i + 1) as f64 / k as f64);
                        tp *= r;
                    }
                    out.fill(acc);
                },
                grid,
                t_pt,
                0.0,
                k,
            )
            .unwrap();
            u.values[0]
        };
        for n in 1..=3usize {
            let mut xs = Vec::new();
            let mut ys = Vec::new();
            for i in 0..6 {
                let at = 0.02 * 1.4f64.powi(i);
                let t_pt = Complex64::new(at, 0.0);
                let mut partial = Complex64::new(0.0, 0.0);
                for (p, &c) in coeffs.iter().enumerate().take(n - 1) {
                    partial += c * t_pt.powi(p as i32 + 1);
                }
                let rem = (eval_u(t_pt) - partial).norm();
                xs.push(at.ln());
                ys.push(rem.ln());
            }
            let fit = fit_line(&xs, &ys);
            assert!(
                (fit.slope - n as f64).abs() < 0.1,
                "order {n}: slope {}",
                fit.slope
            );
        }
    }
}
