//! Geometry in the Borel plane: roots of the symbol polynomial P_m(tau),
//! admissibility certificates for unbounded sectors that stay away from
//! those roots, and construction of good coverings in the parameter plane
//! with their associated sector families.

use crate::error::{Error, Result};
use crate::grid::MGrid;
use crate::problem::{angle_dist, quotient_sector, EquationSpec, SectorSpec};
use serde::{Deserialize, Serialize};

use num_complex::Complex64;

/// Roots q_l(m) of P_m(tau) = Q(im) k - R_D(im) k^{delta_D} tau^{(delta_D-1)k}.
pub fn roots_qlm(spec: &EquationSpec, m: f64) -> Result<Vec<Complex64>> {
    let q = spec.q.eval_im(m);
    let rd = spec.r_d().eval_im(m);
    if q.norm() == 0.0 {
        return Err(Error::numerical(format!("Q(im) = 0 at m = {m}")));
    }
    if rd.norm() == 0.0 {
        return Err(Error::numerical(format!("R_D(im) = 0 at m = {m}")));
    }
    let k = spec.k;
    let dd = spec.delta_d();
    let count = ((dd - 1) * k) as usize;
    if count == 0 {
        return Err(Error::hypothesis("root set empty: requires delta_D >= 2"));
    }
    let kpow = (k as f64).powi(dd as i32 - 1);
    let ratio = q / (rd * kpow);
    let modulus = ratio.norm().powf(1.0 / count as f64);
    let base = ratio.arg() / count as f64;
    Ok((0..count)
        .map(|l| {
            Complex64::from_polar(
                modulus,
                base + 2.0 * std::f64::consts::PI * l as f64 / count as f64,
            )
        })
        .collect())
}

/// Roots over a whole m-grid with residual and continuity diagnostics.
#[derive(Debug, Clone)]
pub struct RootSet {
    pub m_values: Vec<f64>,
    /// roots[i] holds the (delta_D - 1) k roots at m_values[i].
    pub roots: Vec<Vec<Complex64>>,
    /// Max over all roots of |P_m(q)| / (|leading| max(1, |q|)^{(delta_D-1)k}).
    pub max_relative_residual: f64,
    /// Max over adjacent grid nodes of the matched root displacement.
    pub max_step: f64,
}

pub fn root_set(spec: &EquationSpec, m_grid: &MGrid) -> Result<RootSet> {
    let dd = spec.delta_d();
    let k = spec.k;
    let pw = ((dd - 1) * k) as i32;
    let mut m_values = Vec::with_capacity(m_grid.points);
    let mut roots = Vec::with_capacity(m_grid.points);
    let mut max_rel = 0.0f64;
    for m in m_grid.nodes() {
        let qs = roots_qlm(spec, m)?;
        let lead = (spec.r_d().eval_im(m) * (spec.k as f64).powi(dd as i32)).norm();
        for &q in &qs {
            let res = spec.p_m(m, q).norm() / (lead * q.norm().max(1.0).powi(pw));
            max_rel = max_rel.max(res);
        }
        m_values.push(m);
        roots.push(qs);
    }
    let mut max_step = 0.0f64;
    for w in roots.windows(2) {
        for (a, b) in w[0].iter().zip(&w[1]) {
            max_step = max_step.max((a - b).norm());
        }
    }
    Ok(RootSet { m_values, roots, max_relative_residual: max_rel, max_step })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DirectionReport {
    pub direction: f64,
    /// Full aperture of the unbounded sector the certificate covers.
    pub aperture: f64,
    pub rho: f64,
    pub m1: f64,
    pub m2: f64,
    pub l0: usize,
    pub c_p: f64,
    pub admissible: bool,
    pub reason: String,
}

/// Admissibility threshold on the distance certificates.
pub const ADMISSIBILITY_FLOOR: f64 = 1e-3;

/// Certify a direction: sample tau over the closed disc and the sector,
/// handle |tau| -> infinity by angular-separation limits, and compute the
/// distance constants and the lower-bound constant for |P_m(tau)|.
pub fn direction_admissibility(
    spec: &EquationSpec,
    d: f64,
    aperture: f64,
    rho: f64,
    m_grid: &MGrid,
    tau_samples: usize,
) -> Result<DirectionReport> {
    let k = spec.k;
    let dd = spec.delta_d();
    let root_count = ((dd - 1) * k) as usize;
    let rs = root_set(spec, m_grid)?;
    let mut min_root_mod = f64::INFINITY;
    let mut max_root_mod: f64 = 0.0;
    for row in &rs.roots {
        for q in row {
            min_root_mod = min_root_mod.min(q.norm());
            max_root_mod = max_root_mod.max(q.norm());
        }
    }
    if min_root_mod <= 2.0 * rho {
        return Ok(DirectionReport {
            direction: d,
            aperture,
            rho,
            m1: 0.0,
            m2: 0.0,
            l0: 0,
            c_p: 0.0,
            admissible: false,
            reason: format!(
                "roots enter 2rho disc: min |q| = {min_root_mod:.4e} <= {:.4e}",
                2.0 * rho
            ),
        });
    }

    // tau sample set: full disc + sector out to a radius dominating the roots
    let mut taus: Vec<Complex64> = Vec::new();
    let n_rad = tau_samples.max(16);
    let n_ang = 24;
    for i in 1..=n_rad / 2 {
        let r = rho * i as f64 / (n_rad / 2) as f64;
        for j in 0..n_ang {
            let a = 2.0 * std::f64::consts::PI * j as f64 / n_ang as f64;
            taus.push(Complex64::from_polar(r, a));
        }
    }
    let r_big = (4.0 * max_root_mod).max(8.0 * rho);
    for i in 0..n_rad {
        let r = rho * (r_big / rho).powf(i as f64 / (n_rad - 1) as f64);
        for j in 0..=8 {
            let a = d - aperture / 2.0 + aperture * j as f64 / 8.0;
            taus.push(Complex64::from_polar(r, a));
        }
    }

    // finite-sample minima
    let mut m1: f64 = f64::INFINITY;
    let mut m2_per_l = vec![f64::INFINITY; root_count];
    for tau in &taus {
        for row in &rs.roots {
            for (l, q) in row.iter().enumerate() {
                let dist = (tau - q).norm();
                m1 = m1.min(dist / (1.0 + tau.norm()));
                m2_per_l[l] = m2_per_l[l].min(dist / q.norm());
            }
        }
    }

    // asymptotic regime: sector angles against root angle tracks as both
    // grow. |t e^{i psi} - r e^{i phi}| / (1 + t) stays above
    // sin(min(gap, pi/2))/2 in the joint blow-up and tends to 1 when only
    // tau grows, so the angular term is the binding one.
    let mut root_angles: Vec<Vec<f64>> = vec![Vec::new(); root_count];
    for row in &rs.roots {
        for (l, q) in row.iter().enumerate() {
            root_angles[l].push(q.arg());
        }
    }
    let sector_angles: Vec<f64> = (0..=8)
        .map(|j| d - aperture / 2.0 + aperture * j as f64 / 8.0)
        .collect();
    for (l, angles) in root_angles.iter().enumerate() {
        for &phi in angles {
            for &psi in &sector_angles {
                let gap = angle_dist(psi, phi).min(std::f64::consts::FRAC_PI_2);
                m1 = m1.min(gap.sin() / 2.0);
                m2_per_l[l] = m2_per_l[l].min(gap.sin());
            }
        }
    }

    // l0 maximizes the per-root minimum
    let (l0, &m2) = m2_per_l
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .unwrap();

    // C_P from the actual polynomial values
    let r_qrd = quotient_sector(spec, m_grid)?.inner_radius;
    let gamma1 = (dd - 1) as f64 - 1.0 / k as f64;
    let rpow = r_qrd.powf(1.0 / root_count as f64);
    let mut c_p = f64::INFINITY;
    for tau in &taus {
        let tk = tau.norm().powi(k as i32);
        for &m in &rs.m_values {
            let denom = spec.r_d().eval_im(m).norm() * (1.0 + tk).powf(gamma1) * rpow;
            c_p = c_p.min(spec.p_m(m, *tau).norm() / denom);
        }
    }

    let admissible = m1 > ADMISSIBILITY_FLOOR && m2 > ADMISSIBILITY_FLOOR;
    Ok(DirectionReport {
        direction: d,
        aperture,
        rho,
        m1,
        m2,
        l0,
        c_p,
        admissible,
        reason: if admissible {
            String::new()
        } else {
            format!("distance certificates too small: M1 = {m1:.3e}, M2 = {m2:.3e}")
        },
    })
}

/// A good covering of the punctured parameter disc together with the
/// associated unbounded sectors, time sector and Laplace-kernel margin.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoveringPlan {
    pub k: u32,
    pub eps0: f64,
    pub r_t: f64,
    pub kappa: f64,
    /// E_p, full aperture pi/k + kappa, radius eps0.
    pub sectors: Vec<SectorSpec>,
    /// Bisecting directions d_p of the unbounded Borel-plane sectors.
    pub directions: Vec<f64>,
    /// S_{d_p}: unbounded, small aperture.
    pub unbounded: Vec<SectorSpec>,
    pub reports: Vec<DirectionReport>,
    /// Time sector T.
    pub t_sector: SectorSpec,
    /// Aperture of the sectors S_{d_p, theta, eps0 r_T} that must contain eps*t.
    pub theta: f64,
    /// Achieved lower bound for cos(k(gamma - arg(eps t))).
    pub delta1: f64,
}

impl CoveringPlan {
    pub fn sector_count(&self) -> usize {
        self.sectors.len()
    }

    /// Center angle of E_p; sectors are laid out at equal spacing.
    pub fn center(&self, p: usize) -> f64 {
        self.sectors[p].direction
    }

    /// Bisector angle of the overlap of E_p and E_{p+1} (cyclic).
    pub fn overlap_bisector(&self, p: usize) -> f64 {
        let n = self.sector_count();
        let spacing = 2.0 * std::f64::consts::PI / n as f64;
        self.sectors[p].direction + spacing / 2.0
    }

    /// The sector S_{d_p, theta, eps0 r_T} where eps*t must land.
    pub fn theta_sector(&self, p: usize) -> SectorSpec {
        SectorSpec {
            direction: self.directions[p],
            aperture: self.theta,
            inner_radius: 0.0,
            outer_radius: Some(self.eps0 * self.r_t),
        }
    }
}

/// Floor for the achieved Laplace-kernel margin delta1.
const DELTA1_FLOOR: f64 = 0.05;

/// Direction search budget around each sector center, radians.
const SHIFT_BUDGET: f64 = 0.18;

/// Full aperture of the time sector.
const T_APERTURE: f64 = 0.07;

/// Build equally rotated parameter sectors with admissible Borel-plane
/// directions, certify every covering invariant by sampling, and compute
/// the achieved kernel margin delta1.
pub fn build_good_covering(spec: &EquationSpec, sigma: usize, r_t: f64) -> Result<CoveringPlan> {
    let k = spec.k;
    if sigma < 2 {
        return Err(Error::domain("need at least two covering sectors"));
    }
    let pi = std::f64::consts::PI;
    let spacing = 2.0 * pi / sigma as f64;
    let base_aperture = pi / k as f64;
    // kappa interval: overlaps nonempty above `lower`, triple intersections
    // appear at `upper`; kappa itself must stay small so the sectors keep
    // aperture only slightly larger than pi/k
    let lower = (spacing - base_aperture).max(0.0);
    let upper = 2.0 * spacing - base_aperture;
    let kappa_cap = 0.15;
    if lower >= upper.min(kappa_cap) {
        return Err(Error::domain(format!(
            "aperture constraint unsatisfiable: sigma = {sigma} sectors of \
             aperture near pi/k cannot cover the circle (needed kappa >= {lower:.3})"
        )));
    }
    let kappa = (lower + 0.25 * (upper - lower)).min(lower + 0.12).min(kappa_cap);

    // Sector half-aperture for S_{d_p} sized so the Laplace direction can
    // always track arg(eps t) with margin acos(DELTA1_FLOOR)/k.
    let theta_budget = base_aperture + kappa + T_APERTURE + 2.0 * SHIFT_BUDGET + 0.02;
    let delta_half =
        (theta_budget / 2.0 - DELTA1_FLOOR.acos() / k as f64).max(base_aperture / 8.0);

    let mut directions = Vec::with_capacity(sigma);
    let mut reports = Vec::with_capacity(sigma);
    let mut blocked: Vec<String> = Vec::new();
    for p in 0..sigma {
        let center = spacing * p as f64;
        let mut best: Option<DirectionReport> = None;
        // coarse scan, then golden-section refinement of M1 over the budget
        let n_scan = 25;
        for i in 0..=n_scan {
            let d = center - SHIFT_BUDGET + 2.0 * SHIFT_BUDGET * i as f64 / n_scan as f64;
            let rep =
                direction_admissibility(spec, d, 2.0 * delta_half, spec.rho, &spec.grid, 24)?;
            if best.as_ref().map(|b| rep.m1 > b.m1).unwrap_or(true) {
                best = Some(rep);
            }
        }
        let coarse = best.unwrap();
        let step = 2.0 * SHIFT_BUDGET / n_scan as f64;
        let refined = golden_refine(
            |d| {
                direction_admissibility(spec, d, 2.0 * delta_half, spec.rho, &spec.grid, 24)
                    .map(|r| r.m1)
                    .unwrap_or(0.0)
            },
            (coarse.direction - step).max(center - SHIFT_BUDGET),
            (coarse.direction + step).min(center + SHIFT_BUDGET),
            1e-3,
        );
        let fine =
            direction_admissibility(spec, refined, 2.0 * delta_half, spec.rho, &spec.grid, 32)?;
        let rep = if fine.m1 >= coarse.m1 { fine } else { coarse };
        if !rep.admissible {
            blocked.push(format!(
                "sector {p}: arc [{:.4}, {:.4}] blocked ({})",
                center - SHIFT_BUDGET,
                center + SHIFT_BUDGET,
                rep.reason
            ));
        }
        directions.push(rep.direction);
        reports.push(rep);
    }
    if !blocked.is_empty() {
        return Err(Error::numerical(format!(
            "no admissible direction within the angular budget:\n{}",
            blocked.join("\n")
        )));
    }

    let max_shift = directions
        .iter()
        .enumerate()
        .map(|(p, d)| angle_dist(*d, spacing * p as f64))
        .fold(0.0f64, f64::max);
    let theta = base_aperture + kappa + T_APERTURE + 2.0 * max_shift + 0.02;
    if theta >= base_aperture + 2.0 * delta_half + 1e-9 {
        return Err(Error::numerical(format!(
            "theta = {theta:.4} exceeds pi/k + sector aperture {:.4}",
            base_aperture + 2.0 * delta_half
        )));
    }

    let sectors: Vec<SectorSpec> = (0..sigma)
        .map(|p| SectorSpec {
            direction: spacing * p as f64,
            aperture: base_aperture + kappa,
            inner_radius: 0.0,
            outer_radius: Some(spec.eps0),
        })
        .collect();
    let unbounded: Vec<SectorSpec> = directions
        .iter()
        .map(|&d| SectorSpec {
            direction: d,
            aperture: 2.0 * delta_half,
            inner_radius: 0.0,
            outer_radius: None,
        })
        .collect();
    let t_sector = SectorSpec {
        direction: 0.0,
        aperture: T_APERTURE,
        inner_radius: 0.0,
        outer_radius: Some(r_t),
    };

    // achieved delta1: worst over sectors and samples of the best in-sector ray
    let mut delta1 = f64::INFINITY;
    for p in 0..sigma {
        let e_half = (base_aperture + kappa) / 2.0;
        for i in 0..=20 {
            let ae = spacing * p as f64 - e_half + 2.0 * e_half * i as f64 / 20.0;
            for j in 0..=4 {
                let at = -T_APERTURE / 2.0 + T_APERTURE * j as f64 / 4.0;
                let arg_t = ae + at;
                let lo = directions[p] - delta_half;
                let hi = directions[p] + delta_half;
                let gamma = arg_t.clamp(lo, hi);
                delta1 = delta1.min((k as f64 * (gamma - arg_t)).cos());
            }
        }
    }
    if delta1 < DELTA1_FLOOR * (1.0 - 1e-9) {
        return Err(Error::numerical(format!(
            "achieved delta1 = {delta1:.4} below floor {DELTA1_FLOOR}"
        )));
    }

    let plan = CoveringPlan {
        k,
        eps0: spec.eps0,
        r_t,
        kappa,
        sectors,
        directions,
        unbounded,
        reports,
        t_sector,
        theta,
        delta1,
    };
    verify_covering(&plan)?;
    Ok(plan)
}

fn golden_refine(mut f: impl FnMut(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let phi = (5.0f64.sqrt() - 1.0) / 2.0;
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > tol {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Independent sampling pass over every covering invariant.
pub fn verify_covering(plan: &CoveringPlan) -> Result<()> {
    let n = plan.sector_count();
    let two_pi = 2.0 * std::f64::consts::PI;
    // coverage and intersection multiplicity on a dense angular sample
    let samples = 10_000;
    for i in 0..samples {
        let a = two_pi * i as f64 / samples as f64;
        let z = Complex64::from_polar(plan.eps0 * 0.5, a);
        let hits = plan.sectors.iter().filter(|s| s.contains(z)).count();
        if hits == 0 {
            return Err(Error::numerical(format!("covering gap at angle {a:.5}")));
        }
        if hits > 2 {
            return Err(Error::numerical(format!(
                "triple sector intersection at angle {a:.5}"
            )));
        }
    }
    // consecutive overlaps nonempty, including the wrap-around pair
    for p in 0..n {
        let bis = plan.overlap_bisector(p);
        let z = Complex64::from_polar(plan.eps0 * 0.5, bis);
        let q = (p + 1) % n;
        if !(plan.sectors[p].contains(z) && plan.sectors[q].contains(z)) {
            return Err(Error::numerical(format!(
                "sectors {p} and {q} do not overlap at their bisector"
            )));
        }
    }
    // eps * t containment in the associated sectors
    for p in 0..n {
        let s = plan.theta_sector(p);
        let e_half = plan.sectors[p].aperture / 2.0;
        for i in 0..=16 {
            let ae = plan.center(p) - e_half + 2.0 * e_half * i as f64 / 16.0;
            for j in 0..=4 {
                let at = plan.t_sector.direction - plan.t_sector.aperture / 2.0
                    + plan.t_sector.aperture * j as f64 / 4.0;
                for &re in &[0.25f64, 0.75, 0.999] {
                    for &rt in &[0.25f64, 0.75, 0.999] {
                        let et =
                            Complex64::from_polar(re * plan.eps0 * rt * plan.r_t, ae + at);
                        if !s.contains(et) {
                            return Err(Error::numerical(format!(
                                "eps*t = {et} escapes the theta-sector of p = {p}"
                            )));
                        }
                    }
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets::canonical_spec;

    #[test]
    fn canonical_roots_at_m_zero() {
        let spec = canonical_spec();
        let roots = roots_qlm(&spec, 0.0).unwrap();
        assert_eq!(roots.len(), 2);
        let expect = 0.5f64.sqrt();
        for q in &roots {
            assert!((q.norm() - expect).abs() < 1e-12);
            assert!(q.re.abs() < 1e-12, "{q}");
        }
    }

    #[test]
    fn canonical_roots_at_m_one() {
        let spec = canonical_spec();
        let roots = roots_qlm(&spec, 1.0).unwrap();
        // Q(i) = -2: solve 2(-2) - 4 tau^2 = 0 -> tau = +/- i
        for q in &roots {
            assert!((q.norm() - 1.0).abs() < 1e-12);
            assert!(q.re.abs() < 1e-12);
        }
    }

    #[test]
    fn roots_satisfy_polynomial() {
        let spec = canonical_spec();
        let rs = root_set(&spec, &spec.grid).unwrap();
        assert!(
            rs.max_relative_residual < 1e-10,
            "residual {}",
            rs.max_relative_residual
        );
    }

    #[test]
    fn roots_vary_continuously() {
        let spec = canonical_spec();
        let rs = root_set(&spec, &spec.grid).unwrap();
        // |q(m)| = sqrt((1+m^2)/2): |dq/dm| < 1 everywhere
        let bound = 10.0 * spec.grid.spacing();
        assert!(rs.max_step < bound, "step {} vs {bound}", rs.max_step);
    }

    #[test]
    fn real_axis_direction_is_admissible() {
        let spec = canonical_spec();
        let rep = direction_admissibility(&spec, 0.0, 0.3, spec.rho, &spec.grid, 24).unwrap();
        assert!(rep.admissible, "reason: {}", rep.reason);
        assert!(rep.m1 > 0.2, "M1 = {}", rep.m1);
        assert!(rep.m2 > 0.2, "M2 = {}", rep.m2);
        assert!(rep.c_p > 0.0);
    }

    #[test]
    fn root_ray_direction_is_inadmissible() {
        let spec = canonical_spec();
        let rep = direction_admissibility(
            &spec,
            std::f64::consts::FRAC_PI_2,
            0.1,
            spec.rho,
            &spec.grid,
            24,
        )
        .unwrap();
        assert!(!rep.admissible);
        assert!(rep.m1 < 1e-2, "M1 = {}", rep.m1);
    }

    #[test]
    fn large_rho_rejected_for_root_proximity() {
        let spec = canonical_spec();
        let rep = direction_admissibility(&spec, 0.0, 0.3, 1.0, &spec.grid, 24).unwrap();
        assert!(!rep.admissible);
        assert!(rep.reason.contains("2rho"), "{}", rep.reason);
    }

    #[test]
    fn covering_sigma_5_builds_and_verifies() {
        let spec = canonical_spec();
        let plan = build_good_covering(&spec, 5, 0.25).unwrap();
        assert_eq!(plan.sector_count(), 5);
        for rep in &plan.reports {
            assert!(rep.admissible);
            assert!(rep.m1 >= ADMISSIBILITY_FLOOR);
            assert!(rep.m2 >= ADMISSIBILITY_FLOOR);
        }
        assert!(plan.delta1 >= 0.05);
        assert!(plan.theta > std::f64::consts::PI / 2.0);
        verify_covering(&plan).unwrap();
    }

    #[test]
    fn covering_sigma_6_builds() {
        let spec = canonical_spec();
        let plan = build_good_covering(&spec, 6, 0.25).unwrap();
        assert_eq!(plan.sector_count(), 6);
        verify_covering(&plan).unwrap();
    }

    #[test]
    fn covering_small_sigma_rejected() {
        let spec = canonical_spec();
        // 3 * (pi/2) = 1.5 pi < 2 pi: cannot cover with small kappa
        let err = build_good_covering(&spec, 3, 0.25).unwrap_err();
        assert!(err.to_string().contains("unsatisfiable"), "{err}");
    }

    #[test]
    fn covering_sigma_equal_2k_feasible_when_roots_clear_centers() {
        // sigma = 2k sectors tile exactly; any small kappa > 0 overlaps them.
        // Rotate Q so the roots sit at 45 and 225 degrees, clear of the
        // four sector centers.
        let mut spec = canonical_spec();
        // Q = i(2 - X^2) evaluates to i(2 + m^2) at im: never zero, arg pi/2
        spec.q = crate::problem::PolynomialSpec::new(vec![
            Complex64::new(0.0, 2.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(0.0, -1.0),
        ])
        .unwrap();
        let plan = build_good_covering(&spec, 4, 0.25).unwrap();
        assert_eq!(plan.sector_count(), 4);
        // overlap width is positive
        verify_covering(&plan).unwrap();
    }
}
