//! Equation specification file format (TOML).
//!
//! See `docs/spec-format.md` in the repository root for the documented
//! schema. Parse errors carry the offending field and, where the TOML parser
//! provides it, the line/column span.

use crate::error::{Error, Result};
use crate::grid::{GridFunction, MGrid};
use crate::problem::{EquationSpec, OperatorTerm, PolynomialSpec};
use crate::util::fnv1a64;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpecFile {
    pub structure: Structure,
    #[serde(rename = "term")]
    pub terms: Vec<TermEntry>,
    pub polynomials: Polynomials,
    pub norms: Norms,
    #[serde(default)]
    pub grid: Option<GridEntry>,
    #[serde(default, rename = "coeff")]
    pub coeff: Vec<SeriesEntry>,
    #[serde(default, rename = "forcing")]
    pub forcing: Vec<SeriesEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Structure {
    pub k: u32,
    #[serde(rename = "D")]
    pub big_d: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TermEntry {
    pub d: u32,
    pub delta: u32,
    #[serde(rename = "Delta")]
    pub cap_delta: u32,
    /// Complex coefficients as [re, im] pairs, ascending degree.
    #[serde(rename = "R")]
    pub r: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Polynomials {
    #[serde(rename = "Q")]
    pub q: Vec<[f64; 2]>,
    #[serde(rename = "Q1")]
    pub q1: Vec<[f64; 2]>,
    #[serde(rename = "Q2")]
    pub q2: Vec<[f64; 2]>,
    #[serde(rename = "R0")]
    pub r0: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Norms {
    pub beta: f64,
    pub mu: f64,
    pub nu: f64,
    pub rho: f64,
    pub eps0: f64,
    #[serde(rename = "T0")]
    pub t0: f64,
    #[serde(rename = "K0")]
    pub k0: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridEntry {
    pub half_width: f64,
    pub points: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeriesEntry {
    pub n: usize,
    pub profile: Profile,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Profile {
    /// amplitude * exp(-((m - center)/width)^2)
    Gaussian {
        amplitude: f64,
        width: f64,
        #[serde(default)]
        center: f64,
    },
    /// Explicit values at the grid nodes: rows of [m, re, im]; the m column
    /// must match the grid nodes.
    Table { values: Vec<[f64; 3]> },
    Zero,
}

impl Profile {
    pub fn realize(&self, grid: MGrid) -> Result<GridFunction> {
        match self {
            Profile::Gaussian { amplitude, width, center } => {
                if *width <= 0.0 {
                    return Err(Error::config("profile: gaussian width must be positive"));
                }
                Ok(GridFunction::gaussian(grid, *amplitude, *width, *center))
            }
            Profile::Zero => Ok(GridFunction::zero(grid)),
            Profile::Table { values } => {
                if values.len() != grid.points {
                    return Err(Error::config(format!(
                        "profile table has {} rows, grid has {} nodes",
                        values.len(),
                        grid.points
                    )));
                }
                let mut out = Vec::with_capacity(values.len());
                for (i, row) in values.iter().enumerate() {
                    let m = grid.node(i);
                    if (row[0] - m).abs() > 1e-9 * grid.half_width.max(1.0) {
                        return Err(Error::config(format!(
                            "profile table row {i}: m = {} does not match grid node {m}",
                            row[0]
                        )));
                    }
                    out.push(Complex64::new(row[1], row[2]));
                }
                GridFunction::new(grid, out)
            }
        }
    }
}

fn poly(field: &str, entries: &[[f64; 2]]) -> Result<PolynomialSpec> {
    PolynomialSpec::new(
        entries
            .iter()
            .map(|&[re, im]| Complex64::new(re, im))
            .collect(),
    )
    .map_err(|e| Error::config(format!("polynomial {field}: {e}")))
}

/// Parse a spec file into validated problem data plus a reproducibility hash
/// of the raw text.
pub fn parse_spec_str(text: &str) -> Result<(EquationSpec, u64)> {
    let file: SpecFile =
        toml::from_str(text).map_err(|e| Error::config(format!("spec file: {e}")))?;
    let spec = build_spec(&file)?;
    Ok((spec, fnv1a64(text.as_bytes())))
}

pub fn parse_spec_file(path: &std::path::Path) -> Result<(EquationSpec, u64)> {
    let text = std::fs::read_to_string(path)?;
    parse_spec_str(&text)
}

fn build_spec(file: &SpecFile) -> Result<EquationSpec> {
    if file.terms.len() != file.structure.big_d {
        return Err(Error::config(format!(
            "structure.D = {} but {} [[term]] blocks given",
            file.structure.big_d,
            file.terms.len()
        )));
    }
    let norms = &file.norms;
    for (name, v) in [
        ("norms.beta", norms.beta),
        ("norms.nu", norms.nu),
        ("norms.rho", norms.rho),
        ("norms.eps0", norms.eps0),
        ("norms.T0", norms.t0),
        ("norms.K0", norms.k0),
    ] {
        if v <= 0.0 {
            return Err(Error::config(format!("{name} must be positive, got {v}")));
        }
    }
    let grid = match &file.grid {
        Some(g) => MGrid::new(g.half_width, g.points)
            .map_err(|e| Error::config(format!("grid: {e}")))?,
        None => MGrid::default_for_beta(norms.beta),
    };
    let mut terms = Vec::with_capacity(file.terms.len());
    for (i, t) in file.terms.iter().enumerate() {
        if t.delta < 1 {
            return Err(Error::config(format!("term {}: delta must be >= 1", i + 1)));
        }
        terms.push(OperatorTerm {
            d: t.d,
            delta: t.delta,
            cap_delta: t.cap_delta,
            r: poly(&format!("term {}.R", i + 1), &t.r)?,
        });
    }
    let mut coeff_series: Vec<GridFunction> = Vec::new();
    for entry in &file.coeff {
        while coeff_series.len() <= entry.n {
            coeff_series.push(GridFunction::zero(grid));
        }
        coeff_series[entry.n] = entry.profile.realize(grid)?;
    }
    let mut forcing_series: Vec<GridFunction> = Vec::new();
    for entry in &file.forcing {
        if entry.n < 1 {
            return Err(Error::config("forcing entries start at n = 1"));
        }
        while forcing_series.len() < entry.n {
            forcing_series.push(GridFunction::zero(grid));
        }
        forcing_series[entry.n - 1] = entry.profile.realize(grid)?;
    }
    Ok(EquationSpec {
        k: file.structure.k,
        terms,
        q: poly("Q", &file.polynomials.q)?,
        q1: poly("Q1", &file.polynomials.q1)?,
        q2: poly("Q2", &file.polynomials.q2)?,
        r0: poly("R0", &file.polynomials.r0)?,
        coeff_series,
        forcing_series,
        beta: norms.beta,
        mu: norms.mu,
        nu: norms.nu,
        rho: norms.rho,
        eps0: norms.eps0,
        t0: norms.t0,
        k0: norms.k0,
        grid,
    })
}
