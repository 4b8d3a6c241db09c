//! Desk-scale verification of the construction: residual of the original
//! equation for each sectorial solution, exponential flatness of
//! neighbor differences, boundedness plus flatness for the Ramis-Sibuya
//! hypotheses, and low-order estimates of the common parameter expansion.

use crate::error::{Error, Result};
use crate::geometry::{direction_admissibility, CoveringPlan, DirectionReport};
use crate::grid::{fourier_inverse, GridFunction};
use crate::problem::EquationSpec;
use crate::solver::{fixed_point_solve, BorelSolution, SolveConfig};
use crate::transforms::{build_solution, h_prime, SectorSolution};
use crate::util::{fit_line, LineFit};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::sync::Mutex;

/// Orchestrates Borel-plane solves for one problem and covering, caching
/// them by (direction, eps).
pub struct Pipeline {
    pub spec: EquationSpec,
    pub plan: CoveringPlan,
    pub solve_tol: f64,
    pub radii: usize,
    pub panel_nodes: usize,
    reports: Vec<DirectionReport>,
    cache: Mutex<HashMap<(u64, u64, u64), BorelSolution>>,
}

impl Pipeline {
    pub fn new(spec: &EquationSpec, plan: &CoveringPlan) -> Self {
        let cfg = SolveConfig::new(0.0);
        Self {
            spec: spec.clone(),
            plan: plan.clone(),
            solve_tol: cfg.tol,
            radii: cfg.radii,
            panel_nodes: cfg.panel_nodes,
            reports: plan.reports.clone(),
            cache: Mutex::new(HashMap::new()),
        }
    }

    fn report_for(&self, p: usize, gamma: f64) -> Result<DirectionReport> {
        let rep = &self.reports[p];
        if crate::problem::angle_dist(gamma, rep.direction) <= rep.aperture / 2.0 + 1e-9 {
            return Ok(rep.clone());
        }
        // ray outside the certified sector: certify it directly
        direction_admissibility(&self.spec, gamma, 0.05, self.spec.rho, &self.spec.grid, 24)
    }

    /// Solve (or fetch) the Borel-plane field along gamma at eps.
    pub fn solution(&self, p: usize, eps: Complex64, gamma: f64) -> Result<BorelSolution> {
        self.solution_with(p, eps, gamma, None)
    }

    /// Same, with an explicit ray truncation (long rays are needed when the
    /// neighbor-difference measurement must see past the symbol roots).
    pub fn solution_with(
        &self,
        p: usize,
        eps: Complex64,
        gamma: f64,
        r_max: Option<f64>,
    ) -> Result<BorelSolution> {
        let key = (
            gamma.to_bits(),
            eps.re.to_bits(),
            eps.im.to_bits() ^ r_max.map(|r| r.to_bits()).unwrap_or(0),
        );
        if let Some(s) = self.cache.lock().unwrap().get(&key) {
            return Ok(s.clone());
        }
        let rep = self.report_for(p, gamma)?;
        let cfg = SolveConfig {
            gamma,
            tol: self.solve_tol,
            max_iter: 60,
            radii: self.radii,
            panel_nodes: self.panel_nodes,
            r_max,
        };
        let sol = fixed_point_solve(&self.spec, eps, &rep, &cfg)?;
        self.cache.lock().unwrap().insert(key, sol.clone());
        Ok(sol)
    }

    /// Assemble a sectorial solution able to evaluate on the given t values.
    pub fn sector_solution(
        &self,
        p: usize,
        eps: Complex64,
        t_list: &[Complex64],
    ) -> Result<SectorSolution> {
        self.sector_solution_with(p, eps, t_list, None)
    }

    pub fn sector_solution_with(
        &self,
        p: usize,
        eps: Complex64,
        t_list: &[Complex64],
        r_max: Option<f64>,
    ) -> Result<SectorSolution> {
        let mut gammas: Vec<f64> = Vec::new();
        for &t in t_list {
            let gamma = crate::transforms::choose_direction(
                eps * t,
                &self.plan.unbounded[p],
                self.plan.delta1,
                self.spec.k,
            )?;
            if !gammas.iter().any(|g| (g - gamma).abs() < 1e-12) {
                gammas.push(gamma);
            }
        }
        let mut sols = Vec::with_capacity(gammas.len());
        for g in gammas {
            sols.push(self.solution_with(p, eps, g, r_max)?);
        }
        build_solution(&self.plan, p, &self.spec, eps, sols)
    }

    /// Flatness variant: finer rays and tighter tolerance, so the
    /// interpolation noise sits well below the differences being measured.
    fn sector_solution_flat(
        &self,
        p: usize,
        eps: Complex64,
        t_list: &[Complex64],
        r_max: f64,
    ) -> Result<SectorSolution> {
        let mut gammas: Vec<f64> = Vec::new();
        for &t in t_list {
            let gamma = crate::transforms::choose_direction(
                eps * t,
                &self.plan.unbounded[p],
                self.plan.delta1,
                self.spec.k,
            )?;
            if !gammas.iter().any(|g| (g - gamma).abs() < 1e-12) {
                gammas.push(gamma);
            }
        }
        let mut sols = Vec::with_capacity(gammas.len());
        for gamma in gammas {
            let key = (
                gamma.to_bits() ^ 0x1,
                eps.re.to_bits(),
                eps.im.to_bits() ^ r_max.to_bits(),
            );
            if let Some(s) = self.cache.lock().unwrap().get(&key) {
                sols.push(s.clone());
                continue;
            }
            let rep = self.report_for(p, gamma)?;
            let cfg = SolveConfig {
                gamma,
                tol: self.solve_tol.min(3e-11),
                max_iter: 90,
                radii: self.radii + self.radii / 4,
                panel_nodes: self.panel_nodes,
                r_max: Some(r_max),
            };
            let sol = fixed_point_solve(&self.spec, eps, &rep, &cfg)?;
            self.cache.lock().unwrap().insert(key, sol.clone());
            sols.push(sol);
        }
        build_solution(&self.plan, p, &self.spec, eps, sols)
    }

    /// Five real t samples inside T intersect D(0, h').
    pub fn t_grid(&self) -> Vec<Complex64> {
        let top = 0.95 * h_prime(&self.plan, &self.spec);
        (1..=5)
            .map(|i| Complex64::new(top * i as f64 / 5.0, 0.0))
            .collect()
    }

    /// Five real z samples inside the strip of width beta' = beta/2.
    pub fn z_grid(&self) -> Vec<Complex64> {
        let zmax = 0.75 * self.spec.beta / 2.0;
        (0..5)
            .map(|i| Complex64::new(-zmax + 2.0 * zmax * i as f64 / 4.0, 0.0))
            .collect()
    }
}

// ---------------------------------------------------------------------------
// Residual of the original equation.

/// Coefficients of d_t^j e^{-c t^{-k}} = e^{-c t^{-k}} sum_i P_{j,i} c^i t^{-ik-j}.
fn dt_kernel_table(j: usize, k: u32) -> Vec<f64> {
    let mut p = vec![1.0f64]; // j = 0: P_{0,0} = 1
    for jj in 0..j {
        let mut next = vec![0.0f64; p.len() + 1];
        for (i, &c) in p.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            // d/dt of c^i t^{-ik-j} e^{-c t^{-k}}:
            //   (+ c k t^{-k-1}) term raises i by one
            next[i + 1] += c * k as f64;
            //   power rule brings down -(ik + j)
            next[i] += c * -((i as f64) * k as f64 + jj as f64);
        }
        p = next;
    }
    p
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PdeResidual {
    pub max_residual: f64,
    pub forcing_scale: f64,
    pub samples: usize,
}

/// Evaluate every term of the original equation at the samples and return
/// the worst mismatch. Spatial derivatives act as polynomial factors in m
/// inside the Fourier integral; time derivatives differentiate the Laplace
/// kernel analytically.
pub fn pde_residual(
    sol: &SectorSolution,
    spec: &EquationSpec,
    samples: &[(Complex64, Complex64)],
) -> Result<PdeResidual> {
    let k = spec.k;
    let eps = sol.eps;
    let mut max_residual = 0.0f64;
    let mut forcing_scale = 0.0f64;

    // group samples by t so each Laplace pass serves all z
    let mut by_t: Vec<(Complex64, Vec<Complex64>)> = Vec::new();
    for &(t, z) in samples {
        if let Some(entry) = by_t.iter_mut().find(|(tt, _)| (*tt - t).norm() == 0.0) {
            entry.1.push(z);
        } else {
            by_t.push((t, vec![z]));
        }
    }

    for (t, zs) in by_t {
        sol.check_t(t)?;
        let gamma = sol.direction_at(t)?;
        let field = sol
            .solutions
            .iter()
            .find(|s| crate::problem::angle_dist(s.direction, gamma) < 1e-9)
            .ok_or_else(|| Error::domain("missing solve for the required ray"))?;
        let big_t = eps * t;
        let phase = Complex64::from_polar(1.0, gamma);
        let radii_max = field.field.ray.r_max();

        // weighted Laplace transforms: dt_j applied to the kernel
        let mut u_dt: Vec<GridFunction> = Vec::new();
        let max_delta = spec.terms.iter().map(|q| q.delta).max().unwrap() as usize;
        for j in 0..=max_delta {
            let table = dt_kernel_table(j, k);
            let values = laplace_weighted(
                field,
                big_t,
                gamma,
                k,
                |r| {
                    let c = (phase * r / eps).powi(k as i32);
                    let mut acc = Complex64::new(0.0, 0.0);
                    let mut cpow = Complex64::new(1.0, 0.0);
                    for (i, &coef) in table.iter().enumerate() {
                        if coef != 0.0 {
                            acc += coef * cpow * t.powi(-((i as i32) * k as i32 + j as i32));
                        }
                        cpow *= c;
                    }
                    acc
                },
                radii_max,
            )?;
            u_dt.push(GridFunction::new(spec.grid, values)?);
        }

        // Fourier evaluations
        let q_dt1 = fourier_inverse(&u_dt[1].mul_fn(|m| spec.q.eval_im(m)), &zs, spec.beta)?;
        let q1u = fourier_inverse(&u_dt[0].mul_fn(|m| spec.q1.eval_im(m)), &zs, spec.beta)?;
        let q2u = fourier_inverse(&u_dt[0].mul_fn(|m| spec.q2.eval_im(m)), &zs, spec.beta)?;
        let r0u = fourier_inverse(&u_dt[0].mul_fn(|m| spec.r0.eval_im(m)), &zs, spec.beta)?;
        let mut linear: Vec<Vec<Complex64>> = Vec::new();
        for term in &spec.terms {
            let w = fourier_inverse(
                &u_dt[term.delta as usize].mul_fn(|m| term.r.eval_im(m)),
                &zs,
                spec.beta,
            )?;
            linear.push(w);
        }

        // coefficient and forcing series at (t, z)
        let mut c0_vals = vec![Complex64::new(0.0, 0.0); zs.len()];
        for (n, c) in spec.coeff_series.iter().enumerate() {
            if c.is_zero() {
                continue;
            }
            let f = fourier_inverse(c, &zs, spec.beta)?;
            for (o, v) in c0_vals.iter_mut().zip(&f) {
                *o += v * big_t.powi(n as i32);
            }
        }
        let mut f_vals = vec![Complex64::new(0.0, 0.0); zs.len()];
        for n in 1..=spec.forcing_series.len() {
            let fc = spec.forcing_n(n).unwrap();
            if fc.is_zero() {
                continue;
            }
            let f = fourier_inverse(fc, &zs, spec.beta)?;
            for (o, v) in f_vals.iter_mut().zip(&f) {
                *o += v * big_t.powi(n as i32);
            }
        }

        for (iz, _) in zs.iter().enumerate() {
            let mut rhs = q1u[iz] * q2u[iz] + c0_vals[iz] * r0u[iz] + f_vals[iz];
            for (term, lv) in spec.terms.iter().zip(&linear) {
                rhs += eps.powi(term.cap_delta as i32) * t.powi(term.d as i32) * lv[iz];
            }
            let res = (q_dt1[iz] - rhs).norm();
            max_residual = max_residual.max(res);
            forcing_scale = forcing_scale.max(f_vals[iz].norm());
        }
    }
    Ok(PdeResidual { max_residual, forcing_scale, samples: samples.len() })
}

/// Laplace transform with an extra per-radius kernel weight.
fn laplace_weighted(
    sol: &BorelSolution,
    t_pt: Complex64,
    gamma: f64,
    k: u32,
    weight: impl Fn(f64) -> Complex64,
    r_max: f64,
) -> Result<Vec<Complex64>> {
    let field = &sol.field;
    let width = field.grid.points;
    let at = t_pt.norm();
    let phase = Complex64::from_polar(1.0, gamma);
    let decay = (k as f64 * (gamma - t_pt.arg())).cos();
    if decay <= 0.0 {
        return Err(Error::domain("kernel does not decay along the ray"));
    }
    let r_cut = (40.0 / decay).powf(1.0 / k as f64) * at;
    let r_end = r_cut.min(r_max);
    let mut acc = vec![Complex64::new(0.0, 0.0); width];
    let mut row = vec![Complex64::new(0.0, 0.0); width];
    let mut b0 = 0.0;
    let mut b1 = at.min(r_end);
    loop {
        for (r, wt) in crate::quad::panel_nodes(b0, b1, 40) {
            field.interp_row(r, &mut row);
            let kern = (-(phase * r / t_pt).powi(k as i32)).exp()
                * weight(r)
                * (k as f64 * wt / r);
            for (a, v) in acc.iter_mut().zip(&row) {
                *a += v * kern;
            }
        }
        if b1 >= r_end {
            break;
        }
        b0 = b1;
        b1 = (b1 * 1.8).min(r_end);
    }
    Ok(acc)
}

// ---------------------------------------------------------------------------
// Exponential flatness of neighbor differences.

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FlatnessReport {
    pub p: usize,
    /// Order of the fitted exponential: diff ~ K exp(-M / eps^k).
    pub k: u32,
    pub eps_abs: Vec<f64>,
    pub diffs: Vec<f64>,
    pub log_k: f64,
    pub m_p: f64,
    pub r2: f64,
    /// r-squared of the same data regressed on |eps|^{-(k-1)} (or log eps
    /// for k = 1); the true order should win.
    pub r2_wrong_power: f64,
    pub flat_beyond_measurement: bool,
    pub pass: bool,
}

/// Sample |u_{p+1} - u_p| along the overlap bisector at geometrically
/// decreasing |eps| and fit log diff = log K - M |eps|^{-k}.
///
/// The t grid reaches for the pair's own kernel-margin allowance (larger
/// than the conservative global h'), and the solve rays are extended past
/// the symbol roots: the measurable part of the difference is carried by
/// the analytic continuation around those roots, so rays that stop short
/// of them only see quadrature noise.
pub fn flatness_probe(pipe: &Pipeline, p: usize, n_eps: usize) -> Result<FlatnessReport> {
    if n_eps < 6 {
        return Err(Error::domain("need at least 6 eps samples"));
    }
    let plan = &pipe.plan;
    let spec = &pipe.spec;
    let k = spec.k;
    let n = plan.sector_count();
    let q = (p + 1) % n;
    let angle = plan.overlap_bisector(p);
    let z_list = pipe.z_grid();

    // achievable |t| for this pair at the bisector direction
    let mut margin_min = f64::INFINITY;
    for sector in [p, q] {
        let gamma = crate::transforms::choose_direction(
            Complex64::from_polar(1.0, angle),
            &plan.unbounded[sector],
            plan.delta1,
            k,
        )?;
        margin_min = margin_min.min((k as f64 * (gamma - angle)).cos());
    }
    let t_top = (0.95 * crate::transforms::t_allowance(margin_min, spec.nu, k))
        .min(0.98 * plan.r_t);
    let t_list: Vec<Complex64> = (1..=5)
        .map(|i| Complex64::new(t_top * i as f64 / 5.0, 0.0))
        .collect();
    let reserve = margin_min / t_top.powi(k as i32) - spec.nu;

    // ray truncation: past the roots, and long enough for the kernel tail
    let rs = crate::geometry::root_set(spec, &spec.grid)?;
    let q_min = rs
        .roots
        .iter()
        .flat_map(|row| row.iter().map(|z| z.norm()))
        .fold(f64::INFINITY, f64::min);

    let ratio = 0.92f64;
    let mut eps_abs = Vec::with_capacity(n_eps);
    let mut diffs = Vec::with_capacity(n_eps);
    let mut u_scale = 0.0f64;
    for j in 0..n_eps {
        let ae = plan.eps0 / 2.0 * ratio.powi(j as i32);
        let eps = Complex64::from_polar(ae, angle);
        let r_max = (ae * (32.0 / reserve).powf(1.0 / k as f64)).max(1.5 * q_min);
        let sp = pipe.sector_solution_flat(p, eps, &t_list, r_max)?;
        let sq = pipe.sector_solution_flat(q, eps, &t_list, r_max)?;
        let mut worst = 0.0f64;
        for &t in &t_list {
            let up = sp.eval_row(t, &z_list)?;
            let uq = sq.eval_row(t, &z_list)?;
            for (a, b) in up.iter().zip(&uq) {
                worst = worst.max((b - a).norm());
                u_scale = u_scale.max(a.norm()).max(b.norm());
            }
        }
        eps_abs.push(ae);
        diffs.push(worst);
    }
    // noise floor: the smallest observed difference bounds the composed
    // solve/interpolation noise from below; genuine decay spans decades
    // while noise scatters within about one
    let floor = diffs
        .iter()
        .fold(f64::INFINITY, |a, &b| a.min(b))
        .max(3e-12 * u_scale)
        .max(1e-300);
    let max_diff = diffs.iter().fold(0.0f64, |a, &b| a.max(b));
    let usable: Vec<(f64, f64)> = eps_abs
        .iter()
        .zip(&diffs)
        .filter(|(_, &d)| d > 5.0 * floor)
        .map(|(&e, &d)| (e, d))
        .collect();
    // a certified fit needs at least two decades of dynamic range
    if usable.len() < 4 || max_diff < 100.0 * floor {
        // the differences never rise meaningfully above the numerical
        // noise budget: flat beyond measurement
        return Ok(FlatnessReport {
            p,
            k,
            eps_abs,
            diffs,
            log_k: 0.0,
            m_p: 0.0,
            r2: 1.0,
            r2_wrong_power: 0.0,
            flat_beyond_measurement: true,
            pass: true,
        });
    }
    let xs: Vec<f64> = usable.iter().map(|(e, _)| e.powi(-(k as i32))).collect();
    let ys: Vec<f64> = usable.iter().map(|(_, d)| d.ln()).collect();
    let fit = fit_line(&xs, &ys);
    let wrong: LineFit = if k >= 2 {
        let xw: Vec<f64> = usable.iter().map(|(e, _)| e.powi(-(k as i32 - 1))).collect();
        fit_line(&xw, &ys)
    } else {
        let xw: Vec<f64> = usable.iter().map(|(e, _)| e.ln()).collect();
        fit_line(&xw, &ys)
    };
    let m_p = -fit.slope;
    let pass = m_p > 0.0 && fit.r2 >= 0.98;
    Ok(FlatnessReport {
        p,
        k,
        eps_abs,
        diffs,
        log_k: fit.intercept,
        m_p,
        r2: fit.r2,
        r2_wrong_power: wrong.r2,
        flat_beyond_measurement: false,
        pass,
    })
}

// ---------------------------------------------------------------------------
// Ramis-Sibuya hypotheses.

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundednessReport {
    pub p: usize,
    pub eps_abs: Vec<f64>,
    pub sup_norms: Vec<f64>,
    /// Slope of log sup against log |eps|; negative slopes mean growth as
    /// eps tends to 0.
    pub slope: f64,
    pub bounded: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RsReport {
    pub boundedness: Vec<BoundednessReport>,
    pub flatness: Vec<FlatnessReport>,
    pub pass: bool,
}

/// Hypothesis 1: sup norms stay bounded as |eps| -> 0 in each sector.
/// Hypothesis 2: every cyclic neighbor pair is exponentially flat.
pub fn rs_check(pipe: &Pipeline, n_eps: usize) -> Result<RsReport> {
    let n = pipe.plan.sector_count();
    let t_list = pipe.t_grid();
    let z_list = pipe.z_grid();
    let mut boundedness = Vec::with_capacity(n);
    for p in 0..n {
        let angle = pipe.plan.center(p);
        let mut eps_abs = Vec::new();
        let mut sups = Vec::new();
        for j in 0..5 {
            let ae = 0.05 * 0.5f64.powi(j);
            let eps = Complex64::from_polar(ae, angle);
            let sp = pipe.sector_solution(p, eps, &t_list)?;
            let mut sup = 0.0f64;
            for &t in &t_list {
                for v in sp.eval_row(t, &z_list)? {
                    sup = sup.max(v.norm());
                }
            }
            eps_abs.push(ae);
            sups.push(sup);
        }
        let xs: Vec<f64> = eps_abs.iter().map(|e| e.ln()).collect();
        let ys: Vec<f64> = sups.iter().map(|s| s.max(1e-300).ln()).collect();
        let fit = fit_line(&xs, &ys);
        // positive slope: decays toward 0; mild negative tolerated as noise
        let bounded = fit.slope > -0.1;
        boundedness.push(BoundednessReport {
            p,
            eps_abs,
            sup_norms: sups,
            slope: fit.slope,
            bounded,
        });
    }
    let mut flatness = Vec::with_capacity(n);
    for p in 0..n {
        flatness.push(flatness_probe(pipe, p, n_eps)?);
    }
    let pass = boundedness.iter().all(|b| b.bounded) && flatness.iter().all(|f| f.pass);
    Ok(RsReport { boundedness, flatness, pass })
}

// ---------------------------------------------------------------------------
// Low-order common expansion in the parameter.

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GevreyRemainderRow {
    pub sector: usize,
    pub eps: f64,
    /// sup |u - h_0| over the sample grid.
    pub rem_n1: f64,
    /// sup |u - h_0 - eps h_1|.
    pub rem_n2: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GevreyReport {
    /// Cross-sector disagreement of h_0 and h_1, relative to scale.
    pub h0_disagreement: f64,
    pub h1_disagreement: f64,
    pub h0_scale: f64,
    pub h1_scale: f64,
    /// Remainder slopes per sector for n = 1 and n = 2.
    pub slopes_n1: Vec<f64>,
    pub slopes_n2: Vec<f64>,
    /// Raw remainder magnitudes behind the slope fits.
    pub remainders: Vec<GevreyRemainderRow>,
    /// Residual of the order-zero recursion instance, relative to the
    /// first-order forcing scale.
    pub rec_h0_residual: f64,
    pub pass: bool,
}

/// Estimate h_0 and h_1 on the Fourier side per sector by Richardson
/// extrapolation of a halving eps ladder, check cross-sector agreement,
/// remainder slopes, and the order-zero instance of the recursion.
pub fn gevrey_expansion(pipe: &Pipeline, eps_base: f64, levels: usize) -> Result<GevreyReport> {
    if levels < 4 {
        return Err(Error::domain("need at least 4 ladder levels"));
    }
    let spec = &pipe.spec;
    let n = pipe.plan.sector_count();
    let t_list = pipe.t_grid();
    let z_list = pipe.z_grid();
    let nm = spec.grid.points;
    let nt = t_list.len();

    // Fourier-side U(eps_j t, m) per sector and ladder level
    let mut u_side: Vec<Vec<Vec<Complex64>>> = Vec::with_capacity(n); // [p][j][t*m]
    let mut u_zside: Vec<Vec<Vec<Complex64>>> = Vec::with_capacity(n); // [p][j][t*z]
    let mut eps_ladder: Vec<f64> = (0..levels).map(|j| eps_base * 0.5f64.powi(j as i32)).collect();
    eps_ladder.truncate(levels);
    for p in 0..n {
        let angle = pipe.plan.center(p);
        let mut per_level = Vec::with_capacity(levels);
        let mut per_level_z = Vec::with_capacity(levels);
        for &ae in &eps_ladder {
            let eps = Complex64::from_polar(ae, angle);
            let sp = pipe.sector_solution(p, eps, &t_list)?;
            let mut rows = Vec::with_capacity(nt * nm);
            let mut zrows = Vec::with_capacity(nt * z_list.len());
            for &t in &t_list {
                let u = sp.u_fourier_side(t)?;
                zrows.extend(fourier_inverse(&u, &z_list, spec.beta)?);
                rows.extend(u.values);
            }
            per_level.push(rows);
            per_level_z.push(zrows);
        }
        u_side.push(per_level);
        u_zside.push(per_level_z);
    }

    // Newton divided differences through the ladder nodes (complex, on the
    // sector's ray); the interpolating polynomial and its derivative at 0
    // estimate h_0 and h_1 without feeding h_0 noise back into h_1.
    let extrapolate = |angle: f64, seq: &[Vec<Complex64>]| -> (Vec<Complex64>, Vec<Complex64>) {
        let nodes: Vec<Complex64> = eps_ladder
            .iter()
            .map(|&a| Complex64::from_polar(a, angle))
            .collect();
        let width = seq[0].len();
        let mut h0 = vec![Complex64::new(0.0, 0.0); width];
        let mut h1 = vec![Complex64::new(0.0, 0.0); width];
        let l = nodes.len();
        let mut table = vec![Complex64::new(0.0, 0.0); l];
        for idx in 0..width {
            for (j, t) in table.iter_mut().enumerate() {
                *t = seq[j][idx];
            }
            // divided differences in place: table[j] = f[z_0..z_j]
            for order in 1..l {
                for j in (order..l).rev() {
                    table[j] = (table[j] - table[j - 1]) / (nodes[j] - nodes[j - order]);
                }
            }
            // Newton basis value/derivative at 0
            let mut b = Complex64::new(1.0, 0.0);
            let mut db = Complex64::new(0.0, 0.0);
            let mut p0 = table[0];
            let mut dp0 = Complex64::new(0.0, 0.0);
            for j in 1..l {
                let z = nodes[j - 1];
                db = db * (-z) + b;
                b *= -z;
                p0 += table[j] * b;
                dp0 += table[j] * db;
            }
            h0[idx] = p0;
            h1[idx] = dp0;
        }
        (h0, h1)
    };

    let mut h0_m: Vec<Vec<Complex64>> = Vec::with_capacity(n);
    let mut h1_m: Vec<Vec<Complex64>> = Vec::with_capacity(n);
    for p in 0..n {
        let (h0, h1) = extrapolate(pipe.plan.center(p), &u_side[p]);
        h0_m.push(h0);
        h1_m.push(h1);
    }

    // cross-sector agreement measured after Fourier inversion
    let to_z = |rows: &[Complex64]| -> Result<Vec<Complex64>> {
        let mut out = Vec::with_capacity(nt * z_list.len());
        for it in 0..nt {
            let g = GridFunction::new(spec.grid, rows[it * nm..(it + 1) * nm].to_vec())?;
            out.extend(fourier_inverse(&g, &z_list, spec.beta)?);
        }
        Ok(out)
    };
    let h0_z: Vec<Vec<Complex64>> = h0_m.iter().map(|r| to_z(r)).collect::<Result<_>>()?;
    let h1_z: Vec<Vec<Complex64>> = h1_m.iter().map(|r| to_z(r)).collect::<Result<_>>()?;

    let u_scale = u_zside
        .iter()
        .flat_map(|per| per.iter().flat_map(|r| r.iter().map(|v| v.norm())))
        .fold(0.0f64, f64::max);
    let scale_of = |rows: &[Vec<Complex64>]| {
        rows.iter()
            .flat_map(|r| r.iter().map(|v| v.norm()))
            .fold(0.0f64, f64::max)
    };
    let h0_scale = scale_of(&h0_z).max(u_scale);
    let h1_scale = scale_of(&h1_z).max(u_scale / eps_base);
    let disagreement = |rows: &[Vec<Complex64>]| {
        let mut worst = 0.0f64;
        for a in 0..rows.len() {
            for b in a + 1..rows.len() {
                for (x, y) in rows[a].iter().zip(&rows[b]) {
                    worst = worst.max((x - y).norm());
                }
            }
        }
        worst
    };
    let h0_dis = disagreement(&h0_z) / h0_scale.max(1e-300);
    let h1_dis = disagreement(&h1_z) / h1_scale.max(1e-300);

    // remainder slopes: |u - h0| ~ eps and |u - h0 - eps h1| ~ eps^2
    let mut slopes_n1 = Vec::with_capacity(n);
    let mut slopes_n2 = Vec::with_capacity(n);
    let mut remainders = Vec::with_capacity(n * levels);
    for p in 0..n {
        let xs: Vec<f64> = eps_ladder.iter().map(|e| e.ln()).collect();
        let r1: Vec<f64> = (0..levels)
            .map(|j| {
                u_zside[p][j]
                    .iter()
                    .zip(&h0_z[p])
                    .map(|(u, h)| (u - h).norm())
                    .fold(0.0f64, f64::max)
                    .max(1e-300)
            })
            .collect();
        let r2: Vec<f64> = (0..levels)
            .map(|j| {
                let eps_j = Complex64::from_polar(eps_ladder[j], pipe.plan.center(p));
                u_zside[p][j]
                    .iter()
                    .zip(h0_z[p].iter().zip(&h1_z[p]))
                    .map(|(u, (h0, h1))| (u - h0 - eps_j * h1).norm())
                    .fold(0.0f64, f64::max)
                    .max(1e-300)
            })
            .collect();
        for j in 0..levels {
            remainders.push(GevreyRemainderRow {
                sector: p,
                eps: eps_ladder[j],
                rem_n1: r1[j],
                rem_n2: r2[j],
            });
        }
        let y1: Vec<f64> = r1.iter().map(|v| v.ln()).collect();
        let y2: Vec<f64> = r2.iter().map(|v| v.ln()).collect();
        // fit over the upper levels where the leading term dominates noise
        let take = levels.min(4);
        slopes_n1.push(fit_line(&xs[..take], &y1[..take]).slope);
        slopes_n2.push(fit_line(&xs[..take], &y2[..take]).slope);
    }

    // order-zero recursion instance on the Fourier side:
    // Q(im) d_t H0 = conv-quadratic + [Delta_l = 0 terms] + C_00-type + F(.,0)
    // evaluated at interior t nodes with 4th-order differences in t.
    let dt = (t_list[1] - t_list[0]).re;
    let mut rec_res = 0.0f64;
    for p in 0..n {
        for it in 2..nt - 2 {
            let row = |i: usize| &h0_m[p][i * nm..(i + 1) * nm];
            // 4th order central difference
            let dt_h0: Vec<Complex64> = (0..nm)
                .map(|j| {
                    (row(it - 2)[j] - 8.0 * row(it - 1)[j] + 8.0 * row(it + 1)[j]
                        - row(it + 2)[j])
                        / (12.0 * dt)
                })
                .collect();
            let h0_here = GridFunction::new(spec.grid, row(it).to_vec())?;
            let q1h = h0_here.mul_fn(|m| spec.q1.eval_im(m));
            let q2h = h0_here.mul_fn(|m| spec.q2.eval_im(m));
            let quad = crate::grid::m_convolution(&q1h, &q2h)?
                .scale(Complex64::new(1.0 / (2.0 * std::f64::consts::PI).sqrt(), 0.0));
            let r0h = h0_here.mul_fn(|m| spec.r0.eval_im(m));
            let c00_term = if spec.c00().is_zero() {
                GridFunction::zero(spec.grid)
            } else {
                crate::grid::m_convolution(&spec.c00(), &r0h)?
                    .scale(Complex64::new(1.0 / (2.0 * std::f64::consts::PI).sqrt(), 0.0))
            };
            let t = t_list[it];
            for j in 0..nm {
                let m = spec.grid.node(j);
                let mut lhs = spec.q.eval_im(m) * dt_h0[j];
                // Delta_l = 0 linear terms act on h_0 directly (none when all
                // Delta_l >= 1); higher delta would need wider stencils, so
                // restrict to delta = 1 terms, which is all the zero-Delta
                // case admits at this order for the specs we accept
                for term in &spec.terms {
                    if term.cap_delta == 0 && term.delta == 1 {
                        let dvals = (row(it - 2)[j] - 8.0 * row(it - 1)[j]
                            + 8.0 * row(it + 1)[j]
                            - row(it + 2)[j])
                            / (12.0 * dt);
                        lhs -= t.powi(term.d as i32) * term.r.eval_im(m) * dvals;
                    }
                }
                let rhs = quad.values[j] + c00_term.values[j];
                rec_res = rec_res.max((lhs - rhs).norm());
            }
        }
    }
    // yardstick: the first-order forcing magnitude |F^{-1}(F_1) t|
    let f1_scale = spec
        .forcing_n(1)
        .map(|f| {
            let z0 = [Complex64::new(0.0, 0.0)];
            fourier_inverse(f, &z0, spec.beta).map(|v| v[0].norm())
        })
        .transpose()?
        .unwrap_or(0.0)
        * t_list.last().unwrap().norm();
    let rec_scale = f1_scale.max(u_scale / eps_base);
    let rec_rel = rec_res / rec_scale.max(1e-300);

    let slope_ok = slopes_n1.iter().all(|s| (s - 1.0).abs() < 0.1)
        && slopes_n2.iter().all(|s| (s - 2.0).abs() < 0.1);
    let pass = h0_dis < 1e-4 && h1_dis < 1e-4 && slope_ok && rec_rel < 1e-4;
    Ok(GevreyReport {
        h0_disagreement: h0_dis,
        h1_disagreement: h1_dis,
        h0_scale,
        h1_scale,
        slopes_n1,
        slopes_n2,
        remainders,
        rec_h0_residual: rec_rel,
        pass,
    })
}
