//! CSV and JSON emission. Every file starts with a comment header carrying
//! the config hash, so any output can be traced to the exact input text.

use crate::error::{Error, Result};
use crate::grid::{GridFunction, MGrid, TauMField};
use crate::series::FormalSeriesT;
use crate::special::gamma;
use num_complex::Complex64;
use std::fmt::Write as _;
use std::path::Path;

pub fn hash_header(config_hash: u64) -> String {
    format!("# config-hash: {config_hash:016x}\n")
}

/// CSV with columns m, Re, Im.
pub fn grid_function_csv(f: &GridFunction, config_hash: u64) -> String {
    let mut out = hash_header(config_hash);
    out.push_str("m,re,im\n");
    for (i, v) in f.values.iter().enumerate() {
        let _ = writeln!(out, "{:.17e},{:.17e},{:.17e}", f.grid.node(i), v.re, v.im);
    }
    out
}

/// Parse the grid-function CSV back; the grid is reconstructed from the
/// m column and must be uniform and symmetric.
pub fn grid_function_from_csv(text: &str) -> Result<GridFunction> {
    let mut ms = Vec::new();
    let mut values = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with('m') {
            continue;
        }
        let mut parts = line.split(',');
        let mut next = |what: &str| -> Result<f64> {
            parts
                .next()
                .ok_or_else(|| {
                    Error::config(format!("line {}: missing {what} column", lineno + 1))
                })?
                .trim()
                .parse::<f64>()
                .map_err(|e| Error::config(format!("line {}: {what}: {e}", lineno + 1)))
        };
        ms.push(next("m")?);
        let re = next("re")?;
        let im = next("im")?;
        values.push(Complex64::new(re, im));
    }
    if ms.len() < 3 {
        return Err(Error::config("need at least 3 rows"));
    }
    let half_width = -ms[0];
    let grid = MGrid::new(half_width, ms.len())?;
    for (i, &m) in ms.iter().enumerate() {
        if (m - grid.node(i)).abs() > 1e-9 * half_width.max(1.0) {
            return Err(Error::config(format!(
                "row {i}: m = {m} does not lie on a uniform symmetric grid"
            )));
        }
    }
    GridFunction::new(grid, values)
}

/// Series export: columns n, m, Re U_n, Im U_n.
pub fn series_csv(series: &FormalSeriesT, config_hash: u64) -> String {
    let mut out = hash_header(config_hash);
    out.push_str("n,m,re,im\n");
    for (i, c) in series.coeffs.iter().enumerate() {
        let n = i + 1;
        for (j, v) in c.values.iter().enumerate() {
            let _ = writeln!(out, "{n},{:.17e},{:.17e},{:.17e}", c.grid.node(j), v.re, v.im);
        }
    }
    out
}

/// Norm table: n, ||U_n||, ||U_n|| / Gamma(n/k).
pub fn norm_table_csv(
    series: &FormalSeriesT,
    k: u32,
    beta: f64,
    mu: f64,
    config_hash: u64,
) -> Result<String> {
    let mut out = hash_header(config_hash);
    out.push_str("n,norm,norm_over_gamma\n");
    for (i, c) in series.coeffs.iter().enumerate() {
        let n = i + 1;
        let norm = crate::grid::e_beta_mu_norm(c, beta, mu)?;
        let _ = writeln!(
            out,
            "{n},{:.17e},{:.17e}",
            norm,
            norm / gamma(n as f64 / k as f64)
        );
    }
    Ok(out)
}

/// Borel-plane field dump: radius, m, Re, Im.
pub fn field_csv(field: &TauMField, config_hash: u64) -> String {
    let mut out = hash_header(config_hash);
    out.push_str("radius,m,re,im\n");
    for (i, &r) in field.ray.radii.iter().enumerate() {
        for (j, v) in field.row(i).iter().enumerate() {
            let _ = writeln!(out, "{r:.17e},{:.17e},{:.17e},{:.17e}", field.grid.node(j), v.re, v.im);
        }
    }
    out
}

/// Root locus: m, l, Re q, Im q.
pub fn roots_csv(rs: &crate::geometry::RootSet, config_hash: u64) -> String {
    let mut out = hash_header(config_hash);
    out.push_str("m,l,re,im\n");
    for (m, row) in rs.m_values.iter().zip(&rs.roots) {
        for (l, q) in row.iter().enumerate() {
            let _ = writeln!(out, "{m:.17e},{l},{:.17e},{:.17e}", q.re, q.im);
        }
    }
    out
}

/// Solution samples over a (t, z) product grid.
pub fn solution_samples_csv(
    rows: &[(Complex64, Complex64, Complex64)],
    config_hash: u64,
) -> String {
    let mut out = hash_header(config_hash);
    out.push_str("re_t,im_t,re_z,im_z,re_u,im_u\n");
    for (t, z, u) in rows {
        let _ = writeln!(
            out,
            "{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}",
            t.re, t.im, z.re, z.im, u.re, u.im
        );
    }
    out
}

/// Flat table of the flatness measurements: eps, diff, fitted value.
pub fn flatness_csv(reports: &[crate::verifier::FlatnessReport], config_hash: u64) -> String {
    let mut out = hash_header(config_hash);
    out.push_str("pair,eps,diff,fit\n");
    for rep in reports {
        for (e, d) in rep.eps_abs.iter().zip(&rep.diffs) {
            let fit = if rep.flat_beyond_measurement {
                f64::NAN
            } else {
                (rep.log_k - rep.m_p * e.powi(-(rep.k as i32))).exp()
            };
            let _ = writeln!(out, "{},{e:.17e},{d:.17e},{fit:.17e}", rep.p);
        }
    }
    out
}

/// Remainder magnitudes behind the expansion slope fits.
pub fn gevrey_remainders_csv(
    rows: &[crate::verifier::GevreyRemainderRow],
    config_hash: u64,
) -> String {
    let mut out = hash_header(config_hash);
    out.push_str("sector,eps,rem_n1,rem_n2\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{:.17e},{:.17e},{:.17e}",
            r.sector, r.eps, r.rem_n1, r.rem_n2
        );
    }
    out
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, text)?;
    Ok(())
}

/// JSON report with the config hash embedded.
pub fn write_json<T: serde::Serialize>(path: &Path, value: &T, config_hash: u64) -> Result<()> {
    let body = serde_json::json!({
        "config_hash": format!("{config_hash:016x}"),
        "report": value,
    });
    let text = serde_json::to_string_pretty(&body)
        .map_err(|e| Error::config(format!("serialize: {e}")))?;
    write_text(path, &text)
}
