//! Finite representations of the weighted function spaces: functions of the
//! Fourier variable m on a symmetric uniform grid, and functions of (tau, m)
//! on a ray-times-grid product, together with their norms and the
//! convolution / product operators acting on them.

use crate::error::{Error, Result};
use crate::problem::PolynomialSpec;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Uniform symmetric grid on [-L, L] with an odd number of nodes (0 is a node).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MGrid {
    pub half_width: f64,
    pub points: usize,
}

impl MGrid {
    pub fn new(half_width: f64, points: usize) -> Result<Self> {
        if half_width <= 0.0 {
            return Err(Error::domain("m-grid half width must be positive"));
        }
        if points < 3 || points % 2 == 0 {
            return Err(Error::domain("m-grid needs an odd node count >= 3"));
        }
        Ok(Self { half_width, points })
    }

    /// Default grid for decay rate beta: L = 16/beta, 513 nodes.
    pub fn default_for_beta(beta: f64) -> Self {
        Self { half_width: 16.0 / beta, points: 513 }
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / (self.points - 1) as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        -self.half_width + self.spacing() * i as f64
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.points).map(move |i| self.node(i))
    }

    /// Grid with the same half width and doubled resolution.
    pub fn refined(&self) -> Self {
        Self { half_width: self.half_width, points: 2 * self.points - 1 }
    }
}

/// Complex values of a function of m on an `MGrid`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    pub grid: MGrid,
    pub values: Vec<Complex64>,
}

impl GridFunction {
    pub fn new(grid: MGrid, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.points {
            return Err(Error::domain("grid/value length mismatch"));
        }
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::domain("grid function contains non-finite values"));
        }
        Ok(Self { grid, values })
    }

    pub fn zero(grid: MGrid) -> Self {
        Self { grid, values: vec![Complex64::new(0.0, 0.0); grid.points] }
    }

    pub fn from_fn(grid: MGrid, mut f: impl FnMut(f64) -> Complex64) -> Self {
        let values = grid.nodes().map(&mut f).collect();
        Self { grid, values }
    }

    pub fn gaussian(grid: MGrid, amplitude: f64, width: f64, center: f64) -> Self {
        Self::from_fn(grid, |m| {
            Complex64::new(amplitude * (-((m - center) / width).powi(2)).exp(), 0.0)
        })
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| v.norm() == 0.0)
    }

    pub fn scale(&self, c: Complex64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|v| v * c).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.grid != other.grid {
            return Err(Error::domain("mismatched m-grids"));
        }
        Ok(Self {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + b)
                .collect(),
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.add(&other.scale(Complex64::new(-1.0, 0.0)))
    }

    /// Pointwise multiplication by a function of m.
    pub fn mul_fn(&self, f: impl Fn(f64) -> Complex64) -> Self {
        let mut values = self.values.clone();
        for (i, v) in values.iter_mut().enumerate() {
            *v *= f(self.grid.node(i));
        }
        Self { grid: self.grid, values }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }
}

/// Weighted sup norm: max over nodes of (1+|m|)^mu e^{beta|m|} |f(m)|.
pub fn e_beta_mu_norm(f: &GridFunction, beta: f64, mu: f64) -> Result<f64> {
    if beta <= 0.0 {
        return Err(Error::domain("beta must be positive"));
    }
    let mut best = 0.0f64;
    for (i, v) in f.values.iter().enumerate() {
        let m = f.grid.node(i).abs();
        let w = (1.0 + m).powf(mu) * (beta * m).exp() * v.norm();
        if !w.is_finite() {
            return Err(Error::numerical("non-finite weighted value in E-norm"));
        }
        best = best.max(w);
    }
    Ok(best)
}

/// Trapezoid quadrature of f over the grid, zero extension outside [-L, L].
/// On the full line this reduces to uniform weights h.
pub fn integrate(f: &GridFunction) -> Complex64 {
    let h = f.grid.spacing();
    f.values.iter().sum::<Complex64>() * h
}

/// Classical convolution (f * g)(m) = ∫ f(m - m1) g(m1) dm1 with both
/// factors extended by zero outside the grid. Uniform trapezoid weights on
/// the zero-extended line keep the discrete operation exactly commutative.
pub fn m_convolution(f: &GridFunction, g: &GridFunction) -> Result<GridFunction> {
    if f.grid != g.grid {
        return Err(Error::domain("mismatched m-grids in convolution"));
    }
    let n = f.grid.points;
    let h = f.grid.spacing();
    let center = (n - 1) / 2;
    let mut out = vec![Complex64::new(0.0, 0.0); n];
    // (f*g)(m_i) = h * sum_j f(m_i - m_j) g(m_j); m_i - m_j = node(i - j + center)
    for (i, o) in out.iter_mut().enumerate() {
        let mut acc = Complex64::new(0.0, 0.0);
        let j_lo = i.saturating_sub(center);
        let j_hi = (i + center).min(n - 1);
        for j in j_lo..=j_hi {
            acc += f.values[i + center - j] * g.values[j];
        }
        *o = acc * h;
    }
    GridFunction::new(f.grid, out)
}

/// Weighted product (f ⋆ g)(m) = R(im)^{-1} ∫ Q1(i(m-m1)) f(m-m1) Q2(i m1) g(m1) dm1.
pub fn star_product(
    f: &GridFunction,
    g: &GridFunction,
    q1: &PolynomialSpec,
    q2: &PolynomialSpec,
    r: &PolynomialSpec,
) -> Result<GridFunction> {
    if f.grid != g.grid {
        return Err(Error::domain("mismatched m-grids in star product"));
    }
    for m in f.grid.nodes() {
        if r.eval_im(m).norm() == 0.0 {
            return Err(Error::numerical(format!("R(im) vanishes at m = {m}")));
        }
    }
    let q1f = f.mul_fn(|m| q1.eval_im(m));
    let q2g = g.mul_fn(|m| q2.eval_im(m));
    let conv = m_convolution(&q1f, &q2g)?;
    Ok(conv.mul_fn(|m| Complex64::new(1.0, 0.0) / r.eval_im(m)))
}

/// Inverse Fourier transform (2π)^(-1/2) ∫ f(m) e^{izm} dm at the given
/// points of the strip |Im z| < beta.
pub fn fourier_inverse(f: &GridFunction, z_points: &[Complex64], beta: f64) -> Result<Vec<Complex64>> {
    for z in z_points {
        if z.im.abs() >= beta {
            return Err(Error::domain(format!(
                "z = {z} outside the strip |Im z| < beta = {beta}"
            )));
        }
    }
    let h = f.grid.spacing();
    let norm = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
    Ok(z_points
        .iter()
        .map(|&z| {
            let mut acc = Complex64::new(0.0, 0.0);
            for (i, v) in f.values.iter().enumerate() {
                let m = f.grid.node(i);
                acc += v * (Complex64::new(0.0, 1.0) * z * m).exp();
            }
            acc * h * norm
        })
        .collect())
}

/// Discretized ray in the Borel plane: direction gamma and strictly
/// increasing positive radii, reaching from inside the disc out to R_max.
#[derive(Debug, Clone, PartialEq)]
pub struct TauRay {
    pub direction: f64,
    pub radii: Vec<f64>,
}

impl TauRay {
    pub fn new(direction: f64, radii: Vec<f64>) -> Result<Self> {
        if radii.is_empty() || radii[0] <= 0.0 {
            return Err(Error::domain("ray radii must start above 0"));
        }
        if radii.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::domain("ray radii must be strictly increasing"));
        }
        Ok(Self { direction, radii })
    }

    /// Geometric radii from r_min to r_max.
    pub fn geometric(direction: f64, r_min: f64, r_max: f64, count: usize) -> Result<Self> {
        if r_min <= 0.0 || r_max <= r_min || count < 4 {
            return Err(Error::domain("invalid geometric ray parameters"));
        }
        let ratio = (r_max / r_min).powf(1.0 / (count - 1) as f64);
        let radii = (0..count)
            .map(|i| r_min * ratio.powi(i as i32))
            .collect();
        Self::new(direction, radii)
    }

    pub fn r_max(&self) -> f64 {
        *self.radii.last().unwrap()
    }

    pub fn point(&self, i: usize) -> Complex64 {
        Complex64::from_polar(self.radii[i], self.direction)
    }
}

/// Values of a function of (tau, m) on a `TauRay` x `MGrid` product.
#[derive(Debug, Clone, PartialEq)]
pub struct TauMField {
    pub ray: TauRay,
    pub grid: MGrid,
    /// Row-major: values[radius_index * grid.points + m_index].
    pub values: Vec<Complex64>,
}

impl TauMField {
    pub fn new(ray: TauRay, grid: MGrid, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != ray.radii.len() * grid.points {
            return Err(Error::domain("field shape mismatch"));
        }
        Ok(Self { ray, grid, values })
    }

    pub fn zero(ray: TauRay, grid: MGrid) -> Self {
        let n = ray.radii.len() * grid.points;
        Self { ray, grid, values: vec![Complex64::new(0.0, 0.0); n] }
    }

    pub fn from_fn(ray: TauRay, grid: MGrid, f: impl Fn(Complex64, f64) -> Complex64) -> Self {
        let mut values = Vec::with_capacity(ray.radii.len() * grid.points);
        for i in 0..ray.radii.len() {
            let tau = ray.point(i);
            for m in grid.nodes() {
                values.push(f(tau, m));
            }
        }
        Self { ray, grid, values }
    }

    pub fn row(&self, i: usize) -> &[Complex64] {
        &self.values[i * self.grid.points..(i + 1) * self.grid.points]
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        if self.ray != other.ray || self.grid != other.grid {
            return Err(Error::domain("field layout mismatch"));
        }
        Ok(Self {
            ray: self.ray.clone(),
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a - b)
                .collect(),
        })
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Cubic Lagrange interpolation in radius along the ray. The field is
    /// treated as vanishing at r = 0 (all fields here are O(tau)), which
    /// supplies the virtual node used below the first stored radius.
    pub fn interp_row(&self, r: f64, out: &mut [Complex64]) {
        debug_assert_eq!(out.len(), self.grid.points);
        let radii = &self.ray.radii;
        let n = radii.len();
        if r <= 0.0 {
            out.fill(Complex64::new(0.0, 0.0));
            return;
        }
        // locate bracketing index: first radius >= r
        let pos = radii.partition_point(|&x| x < r);
        // choose a 4-node stencil [lo, lo+3] over virtual node 0 and stored radii
        // virtual node: r=0, value 0
        let use_virtual = pos < 2;
        if use_virtual {
            // stencil: 0, radii[0], radii[1], radii[2]
            let r0 = 0.0;
            let (r1, r2, r3) = (radii[0], radii[1], radii[2.min(n - 1)]);
            let l1 = lagrange4(r, r0, r1, r2, r3);
            for (j, o) in out.iter_mut().enumerate() {
                let v1 = self.values[j];
                let v2 = self.values[self.grid.points + j];
                let v3 = self.values[2.min(n - 1) * self.grid.points + j];
                *o = v1 * l1.1 + v2 * l1.2 + v3 * l1.3; // value at r0 is 0
            }
            return;
        }
        let lo = (pos - 2).min(n.saturating_sub(4));
        let (r0, r1, r2, r3) = (radii[lo], radii[lo + 1], radii[lo + 2], radii[lo + 3]);
        let l = lagrange4(r, r0, r1, r2, r3);
        let s = self.grid.points;
        for (j, o) in out.iter_mut().enumerate() {
            *o = self.values[lo * s + j] * l.0
                + self.values[(lo + 1) * s + j] * l.1
                + self.values[(lo + 2) * s + j] * l.2
                + self.values[(lo + 3) * s + j] * l.3;
        }
    }
}

fn lagrange4(x: f64, x0: f64, x1: f64, x2: f64, x3: f64) -> (f64, f64, f64, f64) {
    let l0 = (x - x1) * (x - x2) * (x - x3) / ((x0 - x1) * (x0 - x2) * (x0 - x3));
    let l1 = (x - x0) * (x - x2) * (x - x3) / ((x1 - x0) * (x1 - x2) * (x1 - x3));
    let l2 = (x - x0) * (x - x1) * (x - x3) / ((x2 - x0) * (x2 - x1) * (x2 - x3));
    let l3 = (x - x0) * (x - x1) * (x - x2) / ((x3 - x0) * (x3 - x1) * (x3 - x2));
    (l0, l1, l2, l3)
}

/// Weighted sup norm on the (tau, m) product:
/// max of (1+|m|)^mu (1+|tau/eps|^{2k})/|tau/eps| e^{beta|m| - nu|tau/eps|^k} |w|.
pub fn f_d_norm(
    w: &TauMField,
    nu: f64,
    beta: f64,
    mu: f64,
    k: u32,
    eps: Complex64,
) -> Result<f64> {
    if eps.norm() == 0.0 {
        return Err(Error::domain("eps must be nonzero in the F-norm"));
    }
    if nu <= 0.0 || beta <= 0.0 {
        return Err(Error::domain("nu and beta must be positive"));
    }
    let ae = eps.norm();
    let mut best = 0.0f64;
    for (i, &r) in w.ray.radii.iter().enumerate() {
        let x = r / ae;
        let xk = x.powi(k as i32);
        let tau_weight = (1.0 + xk * xk) / x * (-nu * xk).exp();
        for (j, v) in w.row(i).iter().enumerate() {
            let m = w.grid.node(j).abs();
            let val = (1.0 + m).powf(mu) * (beta * m).exp() * tau_weight * v.norm();
            if !val.is_finite() {
                return Err(Error::numerical("non-finite weighted value in F-norm"));
            }
            best = best.max(val);
        }
    }
    Ok(best)
}
