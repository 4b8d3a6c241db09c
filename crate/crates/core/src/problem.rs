//! Equation data and the structural hypotheses imposed on it before any
//! computation runs: index inequalities, degree orderings, nonvanishing of
//! Q(im) and R_D(im), and containment of Q/R_D in an unbounded sector.

use crate::error::{Error, Result};
use crate::grid::{e_beta_mu_norm, GridFunction, MGrid};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Polynomial with complex coefficients in ascending degree order.
#[derive(Debug, Clone, PartialEq)]
pub struct PolynomialSpec {
    coeffs: Vec<Complex64>,
}

impl PolynomialSpec {
    pub fn new(coeffs: Vec<Complex64>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::domain("polynomial needs at least one coefficient"));
        }
        if coeffs.last().unwrap().norm() == 0.0 && coeffs.len() > 1 {
            return Err(Error::domain("leading polynomial coefficient is zero"));
        }
        Ok(Self { coeffs })
    }

    pub fn constant(c: f64) -> Self {
        Self { coeffs: vec![Complex64::new(c, 0.0)] }
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn leading(&self) -> Complex64 {
        *self.coeffs.last().unwrap()
    }

    pub fn eval(&self, x: Complex64) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for &c in self.coeffs.iter().rev() {
            acc = acc * x + c;
        }
        acc
    }

    /// Evaluate at the Fourier symbol i*m.
    pub fn eval_im(&self, m: f64) -> Complex64 {
        self.eval(Complex64::new(0.0, m))
    }

    /// Cauchy bound: every root of the polynomial has modulus below this.
    pub fn root_bound(&self) -> f64 {
        let lead = self.leading().norm();
        1.0 + self
            .coeffs
            .iter()
            .take(self.coeffs.len() - 1)
            .map(|c| c.norm() / lead)
            .fold(0.0, f64::max)
    }
}

/// One linear term eps^Delta t^d d_t^delta R(d_z) of the equation.
#[derive(Debug, Clone)]
pub struct OperatorTerm {
    pub d: u32,
    pub delta: u32,
    pub cap_delta: u32,
    pub r: PolynomialSpec,
}

/// Full problem data. `coeff_series[n]` holds C_{0,n} (n >= 0);
/// `forcing_series[n-1]` holds F_n (n >= 1).
#[derive(Debug, Clone)]
pub struct EquationSpec {
    pub k: u32,
    pub terms: Vec<OperatorTerm>,
    pub q: PolynomialSpec,
    pub q1: PolynomialSpec,
    pub q2: PolynomialSpec,
    pub r0: PolynomialSpec,
    pub coeff_series: Vec<GridFunction>,
    pub forcing_series: Vec<GridFunction>,
    pub beta: f64,
    pub mu: f64,
    pub nu: f64,
    pub rho: f64,
    pub eps0: f64,
    pub t0: f64,
    pub k0: f64,
    pub grid: MGrid,
}

impl EquationSpec {
    pub fn big_d(&self) -> usize {
        self.terms.len()
    }

    pub fn last_term(&self) -> &OperatorTerm {
        self.terms.last().expect("spec has at least one term")
    }

    pub fn r_d(&self) -> &PolynomialSpec {
        &self.last_term().r
    }

    pub fn delta_d(&self) -> u32 {
        self.last_term().delta
    }

    /// C_{0,0}, the constant Fourier coefficient of the series c_0.
    pub fn c00(&self) -> GridFunction {
        self.coeff_series
            .first()
            .cloned()
            .unwrap_or_else(|| GridFunction::zero(self.grid))
    }

    /// C_{0,n} for n >= 1.
    pub fn coeff_n(&self, n: usize) -> Option<&GridFunction> {
        self.coeff_series.get(n).filter(|_| n >= 1)
    }

    /// F_n for n >= 1.
    pub fn forcing_n(&self, n: usize) -> Option<&GridFunction> {
        if n >= 1 {
            self.forcing_series.get(n - 1)
        } else {
            None
        }
    }

    /// P_m(tau) = Q(im) k - R_D(im) k^{delta_D} tau^{(delta_D - 1) k}.
    pub fn p_m(&self, m: f64, tau: Complex64) -> Complex64 {
        let k = self.k as f64;
        let dd = self.delta_d();
        let pw = ((dd - 1) * self.k) as i32;
        self.q.eval_im(m) * k - self.r_d().eval_im(m) * k.powi(dd as i32) * tau.powi(pw)
    }
}

/// One named hypothesis with its outcome and a witness for failures.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HypothesisCheck {
    pub name: String,
    pub pass: bool,
    pub witness: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HypothesisReport {
    pub checks: Vec<HypothesisCheck>,
    pub overall: bool,
}

impl HypothesisReport {
    fn push(&mut self, name: &str, pass: bool, witness: String) {
        self.checks.push(HypothesisCheck { name: name.to_string(), pass, witness });
        self.overall &= pass;
    }

    pub fn failing(&self) -> Vec<&HypothesisCheck> {
        self.checks.iter().filter(|c| !c.pass).collect()
    }
}

/// Sector {inner_radius <= |z| (< outer_radius), |arg z - direction| <= aperture/2}.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SectorSpec {
    pub direction: f64,
    /// Full opening angle.
    pub aperture: f64,
    pub inner_radius: f64,
    /// None marks an unbounded sector.
    pub outer_radius: Option<f64>,
}

impl SectorSpec {
    pub fn contains(&self, z: Complex64) -> bool {
        let r = z.norm();
        if r < self.inner_radius {
            return false;
        }
        if let Some(out) = self.outer_radius {
            if r >= out {
                return false;
            }
        }
        angle_dist(z.arg(), self.direction) <= self.aperture / 2.0 + 1e-12
    }
}

/// Distance between two angles on the circle.
pub fn angle_dist(a: f64, b: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut d = (a - b) % two_pi;
    if d < -std::f64::consts::PI {
        d += two_pi;
    }
    if d > std::f64::consts::PI {
        d -= two_pi;
    }
    d.abs()
}

/// Check every structural hypothesis. Failures come back as flags; only a
/// malformed spec (empty term list etc.) is a hard error.
pub fn validate_structure(spec: &EquationSpec, m_grid: &MGrid) -> Result<HypothesisReport> {
    if spec.terms.len() < 2 {
        return Err(Error::hypothesis("need D >= 2 operator terms"));
    }
    if spec.k < 1 {
        return Err(Error::hypothesis("k must be >= 1"));
    }
    let mut rep = HypothesisReport { checks: Vec::new(), overall: true };
    let d_cap = spec.big_d();
    let k = spec.k as i64;

    // delta_1 = 1 and strictly increasing delta_l
    let deltas: Vec<i64> = spec.terms.iter().map(|t| t.delta as i64).collect();
    let mut ok = deltas[0] == 1;
    let mut wit = if ok { String::new() } else { format!("delta_1 = {}", deltas[0]) };
    for l in 0..d_cap - 1 {
        if deltas[l] >= deltas[l + 1] {
            ok = false;
            wit = format!("delta_{} = {} !< delta_{} = {}", l + 1, deltas[l], l + 2, deltas[l + 1]);
            break;
        }
    }
    rep.push("delta_1 = 1 and delta_l < delta_{l+1}", ok, wit);

    // delta_D >= 2 (the root set must be nonempty; recorded artifact assumption)
    let dd = deltas[d_cap - 1];
    rep.push("delta_D >= 2", dd >= 2, format!("delta_D = {dd}"));

    // d_D = (delta_D - 1)(k + 1)
    let d_last = spec.terms[d_cap - 1].d as i64;
    let expect = (dd - 1) * (k + 1);
    rep.push(
        "d_D = (delta_D - 1)(k + 1)",
        d_last == expect,
        format!("d_D = {d_last}, (delta_D-1)(k+1) = {expect}"),
    );

    // d_l > (delta_l - 1)(k + 1) for l < D
    let mut ok = true;
    let mut wit = String::new();
    for l in 0..d_cap - 1 {
        let dl = spec.terms[l].d as i64;
        let bound = (deltas[l] - 1) * (k + 1);
        if dl <= bound {
            ok = false;
            wit = format!("l = {}: d_l = {dl} <= {bound}", l + 1);
            break;
        }
    }
    rep.push("d_l > (delta_l - 1)(k + 1) for l < D", ok, wit);

    // Delta_D = d_D - delta_D + 1
    let cap_d = spec.terms[d_cap - 1].cap_delta as i64;
    rep.push(
        "Delta_D = d_D - delta_D + 1",
        cap_d == d_last - dd + 1,
        format!("Delta_D = {cap_d}, d_D - delta_D + 1 = {}", d_last - dd + 1),
    );

    // degree ordering
    let deg_q = spec.q.degree();
    let deg_rd = spec.r_d().degree();
    let mut ok = deg_q >= deg_rd
        && deg_rd >= spec.q1.degree()
        && deg_rd >= spec.q2.degree()
        && deg_rd >= spec.r0.degree();
    let mut wit = String::new();
    for (l, t) in spec.terms.iter().enumerate() {
        if t.r.degree() > deg_rd {
            ok = false;
            wit = format!("deg R_{} = {} > deg R_D = {}", l + 1, t.r.degree(), deg_rd);
        }
    }
    if !ok && wit.is_empty() {
        wit = format!(
            "deg Q = {deg_q}, deg R_D = {deg_rd}, deg Q1 = {}, deg Q2 = {}, deg R0 = {}",
            spec.q1.degree(),
            spec.q2.degree(),
            spec.r0.degree()
        );
    }
    rep.push("deg Q >= deg R_D >= deg R_l, Q1, Q2", ok, wit);

    // nonvanishing on the line: grid check plus a Cauchy bound covering |m| > L
    for (name, p) in [("Q", &spec.q), ("R_D", spec.r_d())] {
        let mut min_abs = f64::INFINITY;
        let mut min_at = 0.0;
        for m in m_grid.nodes() {
            let v = p.eval_im(m).norm();
            if v < min_abs {
                min_abs = v;
                min_at = m;
            }
        }
        let covered = m_grid.half_width >= p.root_bound();
        let ok = min_abs > 1e-12 && covered;
        rep.push(
            &format!("{name}(im) != 0 on the line"),
            ok,
            if !covered {
                format!("grid half-width {} below root bound {}", m_grid.half_width, p.root_bound())
            } else {
                format!("min |{name}(im)| = {min_abs:.3e} at m = {min_at}")
            },
        );
    }

    // mu > max(deg Q1, deg Q2) + 1
    let need = spec.q1.degree().max(spec.q2.degree()) as f64 + 1.0;
    rep.push(
        "mu > max(deg Q1, deg Q2) + 1",
        spec.mu > need,
        format!("mu = {}, bound = {need}", spec.mu),
    );

    // delta_D >= delta_l + 2/k, exact integer arithmetic: k delta_D >= k delta_l + 2
    let mut ok = true;
    let mut wit = String::new();
    for l in 0..d_cap - 1 {
        if k * dd < k * deltas[l] + 2 {
            ok = false;
            wit = format!("l = {}: k delta_D = {} < k delta_l + 2 = {}", l + 1, k * dd, k * deltas[l] + 2);
            break;
        }
    }
    rep.push("delta_D >= delta_l + 2/k for l < D", ok, wit);

    // Delta_l - d_l + delta_l + k(delta_l - delta_D) + d_{l,k} >= 0
    let mut ok = true;
    let mut wit = String::new();
    for l in 0..d_cap - 1 {
        let t = &spec.terms[l];
        let dlk = t.d as i64 + k + 1 - deltas[l] * (k + 1);
        let val = t.cap_delta as i64 - t.d as i64 + deltas[l] + k * (deltas[l] - dd) + dlk;
        if val < 0 {
            ok = false;
            wit = format!("l = {}: value {val}", l + 1);
            break;
        }
    }
    rep.push("Delta_l - d_l + delta_l + k(delta_l - delta_D) + d_{l,k} >= 0", ok, wit);

    // stored series respect the K0 T0^{-n} bounds
    let mut ok = true;
    let mut wit = String::new();
    for (n, c) in spec.coeff_series.iter().enumerate() {
        let norm = e_beta_mu_norm(c, spec.beta, spec.mu)?;
        let bound = spec.k0 * spec.t0.powi(-(n as i32));
        if n >= 1 && norm > bound {
            ok = false;
            wit = format!("||C_0,{n}|| = {norm:.3e} > {bound:.3e}");
            break;
        }
    }
    for (i, f) in spec.forcing_series.iter().enumerate() {
        let n = i + 1;
        let norm = e_beta_mu_norm(f, spec.beta, spec.mu)?;
        let bound = spec.k0 * spec.t0.powi(-(n as i32));
        if norm > bound {
            ok = false;
            wit = format!("||F_{n}|| = {norm:.3e} > {bound:.3e}");
            break;
        }
    }
    rep.push("||C_0,n||, ||F_n|| <= K0 T0^{-n}", ok, wit);

    // Q/R_D containable in an unbounded sector away from 0
    match quotient_sector(spec, m_grid) {
        Ok(s) => rep.push(
            "Q(im)/R_D(im) in an unbounded sector",
            true,
            format!(
                "direction {:.4}, aperture {:.4}, radius {:.4e}",
                s.direction, s.aperture, s.inner_radius
            ),
        ),
        Err(e) => rep.push("Q(im)/R_D(im) in an unbounded sector", false, e.to_string()),
    }

    Ok(rep)
}

/// d_{l,k} = d_l + k + 1 - delta_l (k + 1), one entry per term.
pub fn derived_indices(spec: &EquationSpec) -> Result<Vec<u32>> {
    let k = spec.k as i64;
    let mut out = Vec::with_capacity(spec.terms.len());
    for (l, t) in spec.terms.iter().enumerate() {
        let v = t.d as i64 + k + 1 - t.delta as i64 * (k + 1);
        if v < 0 {
            return Err(Error::hypothesis(format!(
                "d_{{l,k}} negative for l = {}: {v}",
                l + 1
            )));
        }
        out.push(v as u32);
    }
    Ok(out)
}

/// Smallest sector {|z| >= r, |arg z - d| <= eta} containing Q(im)/R_D(im)
/// over the grid and in both |m| -> infinity limits.
pub fn quotient_sector(spec: &EquationSpec, m_grid: &MGrid) -> Result<SectorSpec> {
    let mut args = Vec::with_capacity(m_grid.points + 2);
    let mut min_mod = f64::INFINITY;
    for m in m_grid.nodes() {
        let den = spec.r_d().eval_im(m);
        if den.norm() == 0.0 {
            return Err(Error::numerical(format!("R_D(im) = 0 at m = {m}")));
        }
        let q = spec.q.eval_im(m) / den;
        let r = q.norm();
        if r < 1e-12 {
            return Err(Error::numerical(format!(
                "quotient Q/R_D approaches 0 at m = {m}"
            )));
        }
        min_mod = min_mod.min(r);
        args.push(q.arg());
    }
    // asymptotic directions from leading coefficients: Q(im)/R_D(im) ~
    // (lcQ/lcRD) (im)^{degQ - degRD} as m -> +/- infinity
    let degdiff = spec.q.degree() as i32 - spec.r_d().degree() as i32;
    let lead = spec.q.leading() / spec.r_d().leading();
    for sign in [1.0f64, -1.0] {
        let dir = Complex64::new(0.0, sign).powi(degdiff) * lead;
        args.push(dir.arg());
    }
    // smallest covering arc: sort angles, biggest gap determines the complement
    args.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let two_pi = 2.0 * std::f64::consts::PI;
    let n = args.len();
    let mut best_gap = args[0] + two_pi - args[n - 1];
    let mut gap_at = n - 1;
    for i in 0..n - 1 {
        let g = args[i + 1] - args[i];
        if g > best_gap {
            best_gap = g;
            gap_at = i;
        }
    }
    let arc = two_pi - best_gap;
    if arc >= std::f64::consts::PI {
        return Err(Error::numerical(format!(
            "quotient argument range {arc:.4} >= pi: no valid sector"
        )));
    }
    // arc runs from args[gap_at + 1] (mod n) spanning `arc`
    let start = args[(gap_at + 1) % n];
    let mut direction = start + arc / 2.0;
    if direction > std::f64::consts::PI {
        direction -= two_pi;
    }
    Ok(SectorSpec {
        direction,
        aperture: arc,
        inner_radius: min_mod,
        outer_radius: None,
    })
}
