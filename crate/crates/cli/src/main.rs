//! Pipeline driver: validate a problem file, build the formal series, map
//! the Borel-plane geometry, solve along admissible directions, sample the
//! reconstructed solutions and run the verification reports.
//!
//! Exit codes: 0 success, 1 hypothesis failure, 2 numerical failure,
//! 3 configuration or I/O error.

use clap::{Parser, Subcommand};
use gevrey_core::borel::mk_borel;
use gevrey_core::config::parse_spec_file;
use gevrey_core::error::Error;
use gevrey_core::geometry::{build_good_covering, direction_admissibility, root_set};
use gevrey_core::io;
use gevrey_core::problem::validate_structure;
use gevrey_core::series::{formal_residual, gevrey_rate, solve_recursion};
use gevrey_core::solver::{disc_consistency, fixed_point_solve, SolveConfig};
use gevrey_core::transforms::h_prime;
use gevrey_core::verifier::{flatness_probe, gevrey_expansion, pde_residual, rs_check, Pipeline};
use num_complex::Complex64;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "gevrey", about = "Borel-Laplace summation engine", version)]
struct Cli {
    /// Problem description file (TOML; see docs/spec-format.md)
    #[arg(long, global = true, default_value = "configs/canonical.toml")]
    spec: PathBuf,

    /// Output directory for reports and CSV tables
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Truncation order of the formal series
    #[arg(long, global = true, default_value_t = 16)]
    orders: usize,

    /// Number of covering sectors
    #[arg(long, global = true, default_value_t = 5)]
    sectors: usize,

    /// Comma-separated |eps| values
    #[arg(long, global = true, default_value = "0.05")]
    eps: String,

    /// Fixed-point tolerance (relative to the first iterate)
    #[arg(long, global = true, default_value_t = 1e-10)]
    tol: f64,

    /// Worker thread cap (0 = all cores)
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    /// Time-sector radius used when building coverings
    #[arg(long, global = true, default_value_t = 0.9)]
    r_t: f64,

    /// Provenance seed folded into the output hash (the pipeline itself is
    /// deterministic)
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check every structural hypothesis and report pass/fail per item
    Validate,
    /// Build the formal series; emit coefficients, norms, residuals, rate
    Formal,
    /// Root locus of the symbol polynomial plus a direction report
    Roots {
        /// Direction to certify (radians)
        #[arg(long, default_value_t = 0.0)]
        direction: f64,
    },
    /// Construct and certify a good covering
    Cover,
    /// Solve the Borel-plane equation along each covering direction
    Solve,
    /// Sample the reconstructed sectorial solution over a (t, z) grid
    Sum {
        /// Sector index
        #[arg(long, default_value_t = 0)]
        sector: usize,
    },
    /// Full verification: residual, flatness, Ramis-Sibuya, expansion
    Verify {
        /// Geometric eps samples per neighbor pair
        #[arg(long, default_value_t = 7)]
        eps_count: usize,
    },
}

fn parse_eps_list(s: &str) -> Result<Vec<f64>, Error> {
    s.split(',')
        .map(|x| {
            x.trim()
                .parse::<f64>()
                .map_err(|e| Error::config(format!("--eps entry {x:?}: {e}")))
        })
        .collect()
}

fn run(cli: &Cli) -> Result<(), Error> {
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .map_err(|e| Error::config(format!("thread pool: {e}")))?;
    }
    let (spec, file_hash) = parse_spec_file(&cli.spec)?;
    let hash = file_hash ^ cli.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    let eps_list = parse_eps_list(&cli.eps)?;
    if eps_list.is_empty() {
        return Err(Error::config("--eps list is empty"));
    }
    let out = &cli.out;
    std::fs::create_dir_all(out)?;

    match &cli.command {
        Command::Validate => {
            let report = validate_structure(&spec, &spec.grid)?;
            io::write_json(&out.join("validate.json"), &report, hash)?;
            for c in &report.checks {
                println!(
                    "{} {}{}",
                    if c.pass { "pass" } else { "FAIL" },
                    c.name,
                    if c.witness.is_empty() || c.pass {
                        String::new()
                    } else {
                        format!(" ({})", c.witness)
                    }
                );
            }
            if !report.overall {
                return Err(Error::hypothesis("validation failed; see validate.json"));
            }
            println!("all hypotheses hold");
        }
        Command::Formal => {
            let rep = validate_structure(&spec, &spec.grid)?;
            if !rep.overall {
                return Err(Error::hypothesis("spec fails validation; run `validate`"));
            }
            let eps = Complex64::new(eps_list[0], 0.0);
            let series = solve_recursion(&spec, eps, cli.orders)?;
            io::write_text(&out.join("series.csv"), &io::series_csv(&series, hash))?;
            io::write_text(
                &out.join("norms.csv"),
                &io::norm_table_csv(&series, spec.k, spec.beta, spec.mu, hash)?,
            )?;
            let residuals = formal_residual(&spec, &series, eps)?;
            let mut worst = 0.0f64;
            for r in &residuals {
                if r.scale > 0.0 {
                    worst = worst.max(r.residual / r.scale);
                }
            }
            println!("residual (relative, worst order): {worst:.3e}");
            let rate = gevrey_rate(&series, spec.k, spec.beta, spec.mu)?;
            println!(
                "divergence rate: rho_est = {:.4}, r2 = {:.5}, divergent = {}",
                rate.rho_est, rate.fit_r2, rate.divergence_detected
            );
            io::write_json(
                &out.join("formal.json"),
                &serde_json::json!({
                    "orders": cli.orders,
                    "eps": eps_list[0],
                    "max_relative_residual": worst,
                    "rho_est": rate.rho_est,
                    "fit_r2": rate.fit_r2,
                    "divergence_detected": rate.divergence_detected,
                }),
                hash,
            )?;
        }
        Command::Roots { direction } => {
            let rs = root_set(&spec, &spec.grid)?;
            io::write_text(&out.join("roots.csv"), &io::roots_csv(&rs, hash))?;
            let rep =
                direction_admissibility(&spec, *direction, 0.3, spec.rho, &spec.grid, 32)?;
            io::write_json(&out.join("direction.json"), &rep, hash)?;
            println!(
                "roots: max residual {:.3e}; direction {:.4}: admissible = {}, M1 = {:.4e}, M2 = {:.4e}, C_P = {:.4e}",
                rs.max_relative_residual, direction, rep.admissible, rep.m1, rep.m2, rep.c_p
            );
            if !rep.admissible {
                return Err(Error::numerical(format!(
                    "direction {direction} inadmissible: {}",
                    rep.reason
                )));
            }
        }
        Command::Cover => {
            let plan = build_good_covering(&spec, cli.sectors, cli.r_t)?;
            io::write_json(&out.join("covering.json"), &plan, hash)?;
            println!(
                "covering: {} sectors, kappa = {:.4}, theta = {:.4}, delta1 = {:.4}, h' = {:.4}",
                plan.sector_count(),
                plan.kappa,
                plan.theta,
                plan.delta1,
                h_prime(&plan, &spec)
            );
            for (p, rep) in plan.reports.iter().enumerate() {
                println!(
                    "  sector {p}: direction {:.4}, M1 = {:.3e}, M2 = {:.3e}, C_P = {:.3e}",
                    rep.direction, rep.m1, rep.m2, rep.c_p
                );
            }
        }
        Command::Solve => {
            let plan = build_good_covering(&spec, cli.sectors, cli.r_t)?;
            let series = solve_recursion(&spec, Complex64::new(eps_list[0], 0.0), cli.orders)?;
            let bs = mk_borel(&series, spec.k, spec.rho);
            let mut summaries = Vec::new();
            for (p, rep) in plan.reports.iter().enumerate() {
                for &ae in &eps_list {
                    let eps = Complex64::from_polar(ae, plan.center(p));
                    let mut cfg = SolveConfig::new(rep.direction);
                    cfg.tol = cli.tol;
                    let sol = fixed_point_solve(&spec, eps, rep, &cfg)?;
                    let dump = io::field_csv(&sol.field, hash);
                    io::write_text(&out.join(format!("omega_p{p}_eps{ae}.csv")), &dump)?;
                    let disc = if p == 0 && eps.im == 0.0 {
                        Some(disc_consistency(&sol, &bs, spec.rho)?)
                    } else {
                        None
                    };
                    println!(
                        "sector {p}, |eps| = {ae}: iters = {}, factor = {:.3}, ||omega|| = {:.3e}, residual = {:.3e}",
                        sol.iterations, sol.contraction_factor, sol.norm_f, sol.residual
                    );
                    summaries.push(serde_json::json!({
                        "sector": p,
                        "eps_abs": ae,
                        "direction": sol.direction,
                        "varpi_d": sol.norm_f,
                        "iterations": sol.iterations,
                        "contraction_factor": sol.contraction_factor,
                        "residual": sol.residual,
                        "zeta": sol.zeta,
                        "disc_consistency": disc,
                    }));
                }
            }
            io::write_json(&out.join("solve.json"), &summaries, hash)?;
        }
        Command::Sum { sector } => {
            let plan = build_good_covering(&spec, cli.sectors, cli.r_t)?;
            let pipe = Pipeline::new(&spec, &plan);
            let eps = Complex64::from_polar(eps_list[0], plan.center(*sector));
            let t_list = pipe.t_grid();
            let z_list = pipe.z_grid();
            let sol = pipe.sector_solution(*sector, eps, &t_list)?;
            let mut rows = Vec::new();
            for &t in &t_list {
                let us = sol.eval_row(t, &z_list)?;
                for (z, u) in z_list.iter().zip(us) {
                    rows.push((t, *z, u));
                }
            }
            io::write_text(
                &out.join(format!("solution_p{sector}.csv")),
                &io::solution_samples_csv(&rows, hash),
            )?;
            println!("sampled {} points for sector {sector}", rows.len());
        }
        Command::Verify { eps_count } => {
            let rep = validate_structure(&spec, &spec.grid)?;
            if !rep.overall {
                return Err(Error::hypothesis("spec fails validation; run `validate`"));
            }
            let plan = build_good_covering(&spec, cli.sectors, cli.r_t)?;
            let pipe = Pipeline::new(&spec, &plan);

            // residual of the original equation per sector
            let t_list = pipe.t_grid();
            let z_list = pipe.z_grid();
            let mut samples = Vec::new();
            for &t in &t_list {
                for &z in &z_list {
                    samples.push((t, z));
                }
            }
            let mut residuals = Vec::new();
            for p in 0..plan.sector_count() {
                let eps = Complex64::from_polar(eps_list[0], plan.center(p));
                let sol = pipe.sector_solution(p, eps, &t_list)?;
                let res = pde_residual(&sol, &spec, &samples)?;
                println!(
                    "sector {p}: residual = {:.3e} (forcing scale {:.3e})",
                    res.max_residual, res.forcing_scale
                );
                residuals.push(res);
            }
            io::write_json(&out.join("residual.json"), &residuals, hash)?;

            // flatness per cyclic pair
            let mut flats = Vec::new();
            for p in 0..plan.sector_count() {
                let f = flatness_probe(&pipe, p, *eps_count)?;
                println!(
                    "pair ({p},{}): {}",
                    (p + 1) % plan.sector_count(),
                    if f.flat_beyond_measurement {
                        "flat beyond measurement".to_string()
                    } else {
                        format!("M_p = {:.4e}, r2 = {:.5}", f.m_p, f.r2)
                    }
                );
                flats.push(f);
            }
            io::write_json(&out.join("flatness.json"), &flats, hash)?;
            io::write_text(&out.join("flatness.csv"), &io::flatness_csv(&flats, hash))?;

            let rs = rs_check(&pipe, *eps_count)?;
            println!("sectorial-family hypotheses: {}", if rs.pass { "pass" } else { "FAIL" });
            io::write_json(&out.join("rs.json"), &rs, hash)?;

            let gev = gevrey_expansion(&pipe, eps_list[0].min(0.05), 5)?;
            println!(
                "expansion: h0 agreement {:.3e}, h1 agreement {:.3e}, slopes {:?} / {:?}, rec {:.3e} -> {}",
                gev.h0_disagreement,
                gev.h1_disagreement,
                gev.slopes_n1.iter().map(|s| format!("{s:.2}")).collect::<Vec<_>>(),
                gev.slopes_n2.iter().map(|s| format!("{s:.2}")).collect::<Vec<_>>(),
                gev.rec_h0_residual,
                if gev.pass { "pass" } else { "FAIL" }
            );
            io::write_json(&out.join("gevrey.json"), &gev, hash)?;
            io::write_text(
                &out.join("gevrey_remainders.csv"),
                &io::gevrey_remainders_csv(&gev.remainders, hash),
            )?;

            if !rs.pass || !gev.pass {
                return Err(Error::numerical("verification reports contain failures"));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Hypothesis(_) => ExitCode::from(1),
                Error::Numerical(_) | Error::Domain(_) => ExitCode::from(2),
                Error::Config(_) | Error::Io(_) => ExitCode::from(3),
            }
        }
    }
}
