//! The divergent formal series solution in powers of T: explicit recursion
//! for the coefficients, an independent re-expansion check of the equation,
//! and a regression estimate of the Gevrey divergence rate.

use crate::error::{Error, Result};
use crate::grid::{e_beta_mu_norm, m_convolution, GridFunction};
use crate::problem::EquationSpec;
use crate::special::gamma;
use crate::util::fit_line;
use num_complex::Complex64;

/// Truncated series sum_{n>=1} U_n(m) T^n; `coeffs[i]` is U_{i+1}.
#[derive(Debug, Clone)]
pub struct FormalSeriesT {
    pub coeffs: Vec<GridFunction>,
    pub eps: Complex64,
}

impl FormalSeriesT {
    pub fn order(&self) -> usize {
        self.coeffs.len()
    }

    /// U_n, treating n <= 0 and n beyond the truncation as zero.
    pub fn u(&self, n: i64) -> Option<&GridFunction> {
        if n >= 1 && (n as usize) <= self.coeffs.len() {
            Some(&self.coeffs[n as usize - 1])
        } else {
            None
        }
    }
}

fn inv_q(spec: &EquationSpec) -> Result<Vec<Complex64>> {
    let mut out = Vec::with_capacity(spec.grid.points);
    for m in spec.grid.nodes() {
        let q = spec.q.eval_im(m);
        if q.norm() < 1e-300 {
            return Err(Error::numerical(format!("Q(im) = 0 at m = {m}")));
        }
        out.push(Complex64::new(1.0, 0.0) / q);
    }
    Ok(out)
}

fn apply_values(f: &GridFunction, w: &[Complex64]) -> GridFunction {
    GridFunction {
        grid: f.grid,
        values: f.values.iter().zip(w).map(|(a, b)| a * b).collect(),
    }
}

/// Falling product prod_{j=0}^{delta-1} (n + delta - d - j), in integers.
fn falling_factor(n: i64, d: i64, delta: i64) -> i64 {
    let mut acc = 1i64;
    for j in 0..delta {
        acc *= n + delta - d - j;
    }
    acc
}

/// Compute U_1..U_N by matching powers of T in the transformed equation.
/// References to U_j with j <= 0 contribute zero.
pub fn solve_recursion(spec: &EquationSpec, eps: Complex64, n_orders: usize) -> Result<FormalSeriesT> {
    if n_orders < 2 {
        return Err(Error::domain("need at least two series orders"));
    }
    if eps.norm() == 0.0 || eps.norm() > spec.eps0 {
        return Err(Error::domain(format!(
            "eps must satisfy 0 < |eps| <= eps0 = {}",
            spec.eps0
        )));
    }
    let grid = spec.grid;
    let qinv = inv_q(spec)?;
    let inv_sqrt2pi = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
    let eps_inv = Complex64::new(1.0, 0.0) / eps;
    let q1w: Vec<Complex64> = grid.nodes().map(|m| spec.q1.eval_im(m)).collect();
    let q2w: Vec<Complex64> = grid.nodes().map(|m| spec.q2.eval_im(m)).collect();
    let r0w: Vec<Complex64> = grid.nodes().map(|m| spec.r0.eval_im(m)).collect();
    let rlw: Vec<Vec<Complex64>> = spec
        .terms
        .iter()
        .map(|t| grid.nodes().map(|m| t.r.eval_im(m)).collect())
        .collect();
    let c00 = spec.c00();

    let mut u: Vec<GridFunction> = Vec::with_capacity(n_orders);
    let mut q1u: Vec<GridFunction> = Vec::new();
    let mut q2u: Vec<GridFunction> = Vec::new();
    let mut r0u: Vec<GridFunction> = Vec::new();

    // produce U_{n+1} from the coefficient of T^n, n = 0..n_orders-1
    for n in 0..n_orders as i64 {
        let mut rhs = GridFunction::zero(grid);
        // quadratic double sum over n1 + n2 = n, both >= 1
        for n1 in 1..n {
            let n2 = n - n1;
            let conv = m_convolution(&q1u[n1 as usize - 1], &q2u[n2 as usize - 1])?;
            rhs = rhs.add(&conv)?;
        }
        rhs = rhs.scale(eps_inv * inv_sqrt2pi);
        // linear operator terms R_l
        for (l, t) in spec.terms.iter().enumerate() {
            let j = n + t.delta as i64 - t.d as i64;
            if j >= 1 && j <= u.len() as i64 {
                let fall = falling_factor(n, t.d as i64, t.delta as i64) as f64;
                if fall != 0.0 {
                    let pw = t.cap_delta as i64 - t.d as i64 + t.delta as i64 - 1;
                    let coef = eps.powi(pw as i32) * fall;
                    let term = apply_values(&u[j as usize - 1], &rlw[l]).scale(coef);
                    rhs = rhs.add(&term)?;
                }
            }
        }
        // coefficient convolutions sum_{n1+n2=n, n1,n2>=1} conv(C_{0,n1}, R0 U_{n2})
        for n1 in 1..n {
            if let Some(c) = spec.coeff_n(n1 as usize) {
                let n2 = n - n1;
                let conv = m_convolution(c, &r0u[n2 as usize - 1])?;
                rhs = rhs.add(&conv.scale(eps_inv * inv_sqrt2pi))?;
            }
        }
        // constant coefficient term conv(C_{0,0}, R0 U_n)
        if n >= 1 && !c00.is_zero() {
            let conv = m_convolution(&c00, &r0u[n as usize - 1])?;
            rhs = rhs.add(&conv.scale(eps_inv * inv_sqrt2pi))?;
        }
        // forcing
        if let Some(f) = spec.forcing_n(n as usize) {
            rhs = rhs.add(&f.scale(eps_inv))?;
        }
        // U_{n+1} = rhs / ((n+1) Q(im))
        let scale = 1.0 / (n + 1) as f64;
        let next = GridFunction {
            grid,
            values: rhs
                .values
                .iter()
                .zip(&qinv)
                .map(|(v, qi)| v * qi * scale)
                .collect(),
        };
        q1u.push(apply_values(&next, &q1w));
        q2u.push(apply_values(&next, &q2w));
        r0u.push(apply_values(&next, &r0w));
        u.push(next);
    }
    Ok(FormalSeriesT { coeffs: u, eps })
}

// ---------------------------------------------------------------------------
// Independent truncated series arithmetic, used only by the residual check.

/// Coefficient lists indexed by the power of T, slot 0 = T^0.
type TSeries = Vec<GridFunction>;

fn ts_zero(spec: &EquationSpec, len: usize) -> TSeries {
    (0..len).map(|_| GridFunction::zero(spec.grid)).collect()
}

fn ts_derivative(s: &[GridFunction]) -> TSeries {
    (1..s.len())
        .map(|j| s[j].scale(Complex64::new(j as f64, 0.0)))
        .collect()
}

fn ts_shift(s: &[GridFunction], d: usize, spec: &EquationSpec, len: usize) -> TSeries {
    let mut out = ts_zero(spec, len);
    for (j, c) in s.iter().enumerate() {
        if j + d < len {
            out[j + d] = c.clone();
        }
    }
    out
}

fn ts_product(
    a: &[GridFunction],
    b: &[GridFunction],
    len: usize,
    spec: &EquationSpec,
    op: impl Fn(&GridFunction, &GridFunction) -> Result<GridFunction>,
) -> Result<TSeries> {
    let mut out = ts_zero(spec, len);
    for (i, ai) in a.iter().enumerate() {
        if ai.is_zero() {
            continue;
        }
        for (j, bj) in b.iter().enumerate() {
            if i + j >= len {
                break;
            }
            if bj.is_zero() {
                continue;
            }
            out[i + j] = out[i + j].add(&op(ai, bj)?)?;
        }
    }
    Ok(out)
}

/// Norm of the per-order mismatch when the series is substituted back into
/// the equation, together with the scale of the matched terms at that order.
#[derive(Debug, Clone, Copy)]
pub struct OrderResidual {
    pub order: usize,
    pub residual: f64,
    pub scale: f64,
}

/// Re-expand both sides of the transformed equation through order N-1 with
/// series arithmetic that does not share code with `solve_recursion`.
pub fn formal_residual(
    spec: &EquationSpec,
    series: &FormalSeriesT,
    eps: Complex64,
) -> Result<Vec<OrderResidual>> {
    if eps != series.eps {
        return Err(Error::domain("series was built for a different eps"));
    }
    let n_orders = series.order();
    let len = n_orders; // orders of T we compare: 0..n_orders-1
    let inv_sqrt2pi = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
    let eps_inv = Complex64::new(1.0, 0.0) / eps;

    // U as a T-series with slot 0 empty
    let mut u_series = ts_zero(spec, len + 1);
    for (i, c) in series.coeffs.iter().enumerate() {
        if i + 1 <= len {
            u_series[i + 1] = c.clone();
        }
    }

    // LHS: Q(im) dU/dT
    let du = ts_derivative(&u_series);
    let lhs: TSeries = du
        .iter()
        .map(|c| c.mul_fn(|m| spec.q.eval_im(m)))
        .collect();

    // RHS pieces
    let q1u: TSeries = u_series.iter().map(|c| c.mul_fn(|m| spec.q1.eval_im(m))).collect();
    let q2u: TSeries = u_series.iter().map(|c| c.mul_fn(|m| spec.q2.eval_im(m))).collect();
    let r0u: TSeries = u_series.iter().map(|c| c.mul_fn(|m| spec.r0.eval_im(m))).collect();

    let quad = ts_product(&q1u, &q2u, len, spec, |a, b| m_convolution(a, b))?;

    let mut linear = ts_zero(spec, len);
    for t in &spec.terms {
        // T^{d} d_T^{delta} U via repeated derivative then monomial shift
        let mut s = u_series.clone();
        for _ in 0..t.delta {
            s = ts_derivative(&s);
        }
        let shifted = ts_shift(&s, t.d as usize, spec, len);
        let pw = t.cap_delta as i64 - t.d as i64 + t.delta as i64 - 1;
        let coef = eps.powi(pw as i32);
        for (j, c) in shifted.iter().enumerate() {
            if !c.is_zero() {
                let weighted = c.mul_fn(|m| t.r.eval_im(m)).scale(coef);
                linear[j] = linear[j].add(&weighted)?;
            }
        }
    }

    // C_0(T) (n >= 1 part) star U
    let mut c_series = ts_zero(spec, len);
    for n in 1..len {
        if let Some(c) = spec.coeff_n(n) {
            c_series[n] = c.clone();
        }
    }
    let coeff_conv = ts_product(&c_series, &r0u, len, spec, |a, b| m_convolution(a, b))?;

    // C_{0,0} term
    let c00 = spec.c00();
    let mut c00_term = ts_zero(spec, len);
    if !c00.is_zero() {
        for (j, c) in r0u.iter().enumerate().take(len) {
            if !c.is_zero() {
                c00_term[j] = m_convolution(&c00, c)?;
            }
        }
    }

    let mut forcing = ts_zero(spec, len);
    for n in 1..len {
        if let Some(f) = spec.forcing_n(n) {
            forcing[n] = f.clone();
        }
    }

    let mut out = Vec::with_capacity(len);
    for n in 0..len {
        let rhs_n = quad[n]
            .scale(eps_inv * inv_sqrt2pi)
            .add(&linear[n])?
            .add(&coeff_conv[n].scale(eps_inv * inv_sqrt2pi))?
            .add(&c00_term[n].scale(eps_inv * inv_sqrt2pi))?
            .add(&forcing[n].scale(eps_inv))?;
        let diff = lhs[n].sub(&rhs_n)?;
        let residual = e_beta_mu_norm(&diff, spec.beta, spec.mu)?;
        let scale = e_beta_mu_norm(&lhs[n], spec.beta, spec.mu)?
            .max(e_beta_mu_norm(&rhs_n, spec.beta, spec.mu)?);
        out.push(OrderResidual { order: n, residual, scale });
    }
    Ok(out)
}

// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy)]
pub struct GevreyRate {
    pub rho_est: f64,
    pub fit_r2: f64,
    /// False when the Borel-transformed norms decay super-geometrically,
    /// i.e. the series does not actually diverge at Gevrey level 1/k.
    pub divergence_detected: bool,
}

/// Fit log(||U_n|| / Gamma(n/k)) against n over the upper half of the
/// available orders; the negated slope exponentiates to the radius estimate.
pub fn gevrey_rate(series: &FormalSeriesT, k: u32, beta: f64, mu: f64) -> Result<GevreyRate> {
    let n_orders = series.order();
    if n_orders < 8 {
        return Err(Error::domain("need at least 8 orders for a Gevrey fit"));
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let lo = n_orders / 2;
    for n in lo..=n_orders {
        let norm = e_beta_mu_norm(&series.coeffs[n - 1], beta, mu)?;
        if norm > 0.0 {
            xs.push(n as f64);
            ys.push((norm / gamma(n as f64 / k as f64)).ln());
        }
    }
    if xs.len() < 4 {
        return Err(Error::numerical(
            "series terminates; Gevrey rate undefined",
        ));
    }
    let fit = fit_line(&xs, &ys);
    let rho_est = (-fit.slope).exp();
    // drift check: compare window halves; super-geometric decay of the
    // Borel coefficients pushes the upper-window estimate up
    let mid = xs.len() / 2;
    let divergence_detected = if mid >= 2 && xs.len() - mid >= 2 {
        let f1 = fit_line(&xs[..mid], &ys[..mid]);
        let f2 = fit_line(&xs[mid..], &ys[mid..]);
        let r1 = (-f1.slope).exp();
        let r2 = (-f2.slope).exp();
        r2 <= r1 * 1.15
    } else {
        true
    };
    Ok(GevreyRate { rho_est, fit_r2: fit.r2, divergence_detected })
}
