//! Batch front-end: wires the library modules into reproducible
//! experiments with config files and machine-readable outputs.
//!
//! Exit codes: 0 success, 1 invariant violation, 2 configuration error,
//! 3 numerical failure.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use blowlab::compact::{build_compactified, identity_residuals, CompactOptions};
use blowlab::fuchsian::{self, SweepSpec};
use blowlab::geometry;
use blowlab::manifest::{ensure_dir, fmt, write_csv, write_json, RunManifest};
use blowlab::ode::{self, Mode, OdeOptions};
use blowlab::params::{blowup_condition, derive_constants, validate, ParameterSet};
use blowlab::wave::{self, PerturbationProfile, WaveOptions};
use blowlab::Error;

#[derive(Parser)]
#[command(name = "blowlab", version, about = "blow-up laboratory for quasilinear waves")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Clone)]
struct Common {
    /// Parameter file (TOML or JSON); CLI flags override file keys
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Output format for tables
    #[arg(long, global = true, default_value = "csv", value_parser = ["csv", "json"])]
    format: String,

    #[arg(long, global = true)]
    a: Option<f64>,
    #[arg(long, global = true)]
    b: Option<f64>,
    #[arg(long, global = true)]
    c: Option<f64>,
    #[arg(long, global = true)]
    k: Option<f64>,
    #[arg(long, global = true)]
    m2: Option<f64>,
    #[arg(long, global = true)]
    beta: Option<f64>,
    #[arg(long, global = true)]
    beta0: Option<f64>,
    #[arg(long, global = true)]
    t0: Option<f64>,
    /// Compactification exponent
    #[arg(long = "A", global = true)]
    comp_a: Option<f64>,
    #[arg(long, global = true)]
    delta0: Option<f64>,
    #[arg(long, global = true)]
    sigma0: Option<f64>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Validate parameters and print every closed-form constant
    Constants {
        /// Print the built-in default parameter file and exit
        #[arg(long)]
        show_defaults: bool,
    },
    /// Integrate the reference profile (blow-up mode unless --t-end)
    Ode {
        #[arg(long)]
        t_end: Option<f64>,
        #[arg(long, default_value_t = 2048)]
        samples: usize,
        #[arg(long, default_value_t = 1e8)]
        cap: f64,
    },
    /// Build the compactified trace and check the identity lattice
    Compactify {
        #[arg(long, default_value_t = 1e-8)]
        tau_floor: f64,
    },
    /// Characteristic cone in both time parametrizations
    Cone,
    /// Lens boundary, spacelike minors and the decay inequality
    Lens {
        #[arg(long, default_value_t = 64)]
        samples: usize,
    },
    /// Positivity certification sweep of the singular-system matrices
    Fuchsian {
        /// Sweep preset; "default" is the 16x16x8 admissible box
        #[arg(long, default_value = "default")]
        sweep: String,
        /// Also search for sandwich constants over the extended range
        #[arg(long)]
        extended: bool,
        /// Spatial dimension of the state (1..=3)
        #[arg(long, default_value_t = 1)]
        dim: usize,
    },
    /// Desk-scale 1-D wave run with envelope verification
    Sim {
        #[arg(long, default_value_t = 1e-6)]
        epsilon: f64,
        #[arg(long, default_value_t = 2048)]
        cells: usize,
        #[arg(long, default_value_t = 2e-3)]
        horizon: f64,
        #[arg(long, default_value_t = 2.5)]
        half_width: f64,
    },
    /// Run the constants pipeline over a list of values of one parameter
    Sweep {
        /// Parameter key to sweep (one of the ParameterSet fields)
        #[arg(long)]
        param: String,
        /// Comma-separated values
        #[arg(long, value_delimiter = ',')]
        values: Vec<f64>,
    },
}

fn resolve_params(common: &Common) -> Result<ParameterSet, Error> {
    let mut p = if let Some(path) = &common.config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("read {}: {e}", path.display())))?;
        if path.extension().and_then(|s| s.to_str()) == Some("json") {
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("parse json: {e}")))?
        } else {
            toml::from_str(&text).map_err(|e| Error::Config(format!("parse toml: {e}")))?
        }
    } else {
        ParameterSet::default()
    };
    if let Some(v) = common.a {
        p.a = v;
    }
    if let Some(v) = common.b {
        p.b = v;
    }
    if let Some(v) = common.c {
        p.c = v;
    }
    if let Some(v) = common.k {
        p.k = v;
    }
    if let Some(v) = common.m2 {
        p.m2 = v;
    }
    if let Some(v) = common.beta {
        p.beta = v;
    }
    if let Some(v) = common.beta0 {
        p.beta0 = v;
    }
    if let Some(v) = common.t0 {
        p.t0 = v;
    }
    if let Some(v) = common.comp_a {
        p.comp_a = v;
    }
    if let Some(v) = common.delta0 {
        p.delta0 = v;
    }
    if let Some(v) = common.sigma0 {
        p.sigma0 = v;
    }
    Ok(p)
}

fn main() -> ExitCode {
    if let Ok(threads) = std::env::var("BLOWLAB_THREADS") {
        if let Ok(n) = threads.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) => ExitCode::from(2),
                Error::CertificationFailure { .. }
                | Error::MinorNegative { .. }
                | Error::InequalityViolated { .. }
                | Error::UnsupportedParameters(_)
                | Error::DegenerateLens { .. } => ExitCode::from(1),
                _ => ExitCode::from(3),
            }
        }
    }
}

fn run(cli: &Cli) -> Result<ExitCode, Error> {
    let started = Instant::now();
    let p = resolve_params(&cli.common)?;
    let out = ensure_dir(&cli.common.out)?;
    let json_tables = cli.common.format == "json";

    match &cli.command {
        Cmd::Constants { show_defaults } => {
            if *show_defaults {
                println!(
                    "{}",
                    toml::to_string_pretty(&ParameterSet::default())
                        .map_err(|e| Error::Config(e.to_string()))?
                );
                return Ok(ExitCode::SUCCESS);
            }
            let report = validate(&p);
            let derived = derive_constants(&p)?;
            println!("validation:");
            for c in &report.checks {
                println!("  [{}] {:12} {}", if c.passed { "ok" } else { "NO" }, c.name, c.detail);
            }
            println!("derived constants:");
            println!("  triangle   = {}", fmt(derived.triangle));
            println!("  a_bar      = {}", fmt(derived.a_bar));
            println!("  c_bar      = {}", fmt(derived.c_bar));
            println!("  B          = {}", fmt(derived.b_coef));
            println!("  A_const    = {}", fmt(derived.c_a));
            println!("  B_const    = {}", fmt(derived.c_b));
            println!("  C_const    = {}", fmt(derived.c_c));
            println!("  D_const    = {}", fmt(derived.c_d));
            println!("  E_const    = {}", derived.c_e.map(fmt).unwrap_or_else(|| "n/a".into()));
            println!("  t_star     = {}", fmt(derived.t_star));
            println!("  t_upper    = {}", derived.t_upper.map(fmt).unwrap_or_else(|| "n/a".into()));
            println!(
                "  beta_breve = {}",
                derived.beta_breve.map(fmt).unwrap_or_else(|| "n/a".into())
            );
            println!("  b_geom     = {}", fmt(derived.b_geom));
            println!("  q_mag      = {}", fmt(derived.q_mag));
            println!("  blow-up criterion: {}", blowup_condition(&p));
            let mut man = RunManifest::new("constants", &p);
            man.extra = serde_json::json!({"validation": report, "derived": derived});
            man.outputs.push("constants.json".into());
            man.wall_ms = started.elapsed().as_millis();
            write_json(out.join("constants.json"), &man.extra)?;
            write_json(out.join("manifest.json"), &man)?;
            if report.all_passed() {
                Ok(ExitCode::SUCCESS)
            } else {
                Ok(ExitCode::from(1))
            }
        }

        Cmd::Ode { t_end, samples, cap } => {
            let derived = derive_constants(&p)?;
            let opts = OdeOptions {
                mode: t_end.map(Mode::Horizon).unwrap_or(Mode::BlowUp),
                samples: *samples,
                cap: *cap,
                ..Default::default()
            };
            let tr = ode::integrate(&p, &derived, &opts)?;
            let env = ode::envelope_check(&tr, &p, &derived);
            let rows: Vec<Vec<String>> = (0..tr.len())
                .map(|i| {
                    let t = tr.times[i];
                    vec![
                        fmt(t),
                        fmt(tr.f[i]),
                        fmt(tr.f0[i]),
                        fmt(tr.g_comp[i]),
                        fmt(derived.lower_envelope(t)),
                        fmt(if t < derived.t_star { derived.upper_envelope(t) } else { f64::NAN }),
                    ]
                })
                .collect();
            if json_tables {
                write_json(out.join("ode_trace.json"), &rows)?;
            } else {
                write_csv(out.join("ode_trace.csv"), "t,f,f0,g_comp,lower_env,upper_env", &rows)?;
            }
            let estimate = ode::estimate_blowup_time(&tr).ok();
            let summary = serde_json::json!({
                "blowup_bracket": tr.blowup_bracket,
                "blowup_estimate": estimate,
                "envelopes": env,
                "slope_identity_residual": ode::slope_identity_residual(&tr, &p, &derived),
                "quadrature_consistency": ode::quadrature_consistency(&tr, &p, &derived),
            });
            write_json(out.join("ode_summary.json"), &summary)?;
            let mut man = RunManifest::new("ode", &p);
            man.outputs = vec!["ode_trace.csv".into(), "ode_summary.json".into()];
            man.wall_ms = started.elapsed().as_millis();
            write_json(out.join("manifest.json"), &man)?;
            let healthy = env.lower_margin >= -1e-9 && env.upper_margin >= -1e-9;
            Ok(if healthy { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }

        Cmd::Compactify { tau_floor } => {
            let derived = derive_constants(&p)?;
            let tr = ode::integrate(&p, &derived, &OdeOptions::default())?;
            let copts = CompactOptions { tau_floor: *tau_floor, ..Default::default() };
            let ct = build_compactified(&tr, &p, &derived, &copts)?;
            let rows: Vec<Vec<String>> = (0..ct.len())
                .map(|i| {
                    vec![
                        fmt(ct.tau[i]),
                        fmt(ct.h_up[i]),
                        fmt(ct.f[i]),
                        fmt(ct.f0[i]),
                        fmt(ct.chi_up[i]),
                        fmt(ct.g_frak[i]),
                        fmt(ct.xi[i]),
                        fmt(ct.xi_cap[i]),
                        fmt(ct.s_val[i]),
                    ]
                })
                .collect();
            if json_tables {
                write_json(out.join("compact_trace.json"), &rows)?;
            } else {
                write_csv(out.join("compact_trace.csv"), "tau,h_up,f,f0,chi_up,G,xi,Xi,S", &rows)?;
            }
            let idr = identity_residuals(&ct, &p);
            let summary = serde_json::json!({
                "identities": idr,
                "dtchi_residual_interior": blowlab::compact::dtchi_residual_range(&ct, &p, 1, 0.75),
                "dtchi_residual_full": blowlab::compact::dtchi_residual(&ct, &p, 1),
                "g_frak_sqrt_envelope": blowlab::compact::g_frak_sqrt_envelope(&ct),
                "chi_over_b_final": ct.chi_up.last().unwrap() / ct.b_coef(),
            });
            write_json(out.join("compact_summary.json"), &summary)?;
            let mut man = RunManifest::new("compactify", &p);
            man.outputs = vec!["compact_trace.csv".into(), "compact_summary.json".into()];
            man.wall_ms = started.elapsed().as_millis();
            write_json(out.join("manifest.json"), &man)?;
            Ok(if idr.max() < 1e-6 { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }

        Cmd::Cone => {
            let derived = derive_constants(&p)?;
            let tr = ode::integrate(&p, &derived, &OdeOptions::default())?;
            let ct = build_compactified(&tr, &p, &derived, &CompactOptions::default())?;
            let cn = geometry::cone(&tr, &ct, &p, &derived)?;
            let rows: Vec<Vec<String>> = (0..cn.t.len())
                .map(|i| vec![fmt(cn.t[i]), fmt(cn.radius[i]), fmt(tr.g_comp[i])])
                .collect();
            if json_tables {
                write_json(out.join("cone.json"), &rows)?;
            } else {
                write_csv(out.join("cone.csv"), "t,radius,tau", &rows)?;
            }
            let summary = serde_json::json!({
                "theta": cn.theta,
                "xi_integral_final": cn.xi_integral_final,
                "cross_check": geometry::cone_cross_check(&cn, &tr),
                "sqrt_g_identity_residual": geometry::sqrt_g_identity_residual(&tr, &ct, &p),
            });
            write_json(out.join("cone_summary.json"), &summary)?;
            let mut man = RunManifest::new("cone", &p);
            man.outputs = vec!["cone.csv".into(), "cone_summary.json".into()];
            man.wall_ms = started.elapsed().as_millis();
            write_json(out.join("manifest.json"), &man)?;
            Ok(ExitCode::SUCCESS)
        }

        Cmd::Lens { samples } => {
            let derived = derive_constants(&p)?;
            let tr = ode::integrate(&p, &derived, &OdeOptions::default())?;
            let ct = build_compactified(&tr, &p, &derived, &CompactOptions::default())?;
            let lens = geometry::lens_surface(&p, &ct)?;
            let rows_data = geometry::spacelike_check(&p, &ct, &lens, *samples)?;
            let rows: Vec<Vec<String>> = rows_data
                .iter()
                .map(|r| {
                    vec![
                        fmt(r.zeta1),
                        fmt(r.tau),
                        match r.branch {
                            geometry::Branch::Left => "left".to_string(),
                            geometry::Branch::Right => "right".to_string(),
                        },
                        fmt(r.d2),
                        fmt(r.min_minor),
                        fmt(r.decay_margin_log),
                    ]
                })
                .collect();
            if json_tables {
                write_json(out.join("lens.json"), &rows)?;
            } else {
                write_csv(
                    out.join("lens.csv"),
                    "zeta1,tau_Gamma,branch,D2,min_minor,decay_margin",
                    &rows,
                )?;
            }
            let decay_min = geometry::decay_factor_check(&p, &lens, 40, 25)?;
            write_json(
                out.join("lens_summary.json"),
                &serde_json::json!({
                    "surface": lens,
                    "decay_margin_min_log": decay_min,
                }),
            )?;
            let mut man = RunManifest::new("lens", &p);
            man.outputs = vec!["lens.csv".into(), "lens_summary.json".into()];
            man.wall_ms = started.elapsed().as_millis();
            write_json(out.join("manifest.json"), &man)?;
            Ok(ExitCode::SUCCESS)
        }

        Cmd::Fuchsian { sweep, extended, dim } => {
            let spec = match sweep.as_str() {
                "default" => SweepSpec::default(),
                "headline" => SweepSpec::single(p.a, p.b, p.m2),
                other => {
                    return Err(Error::Config(format!("unknown sweep preset: {other}")));
                }
            };
            let rows_data = fuchsian::certify_h5(&p, &spec, *dim);
            let rows: Vec<Vec<String>> = rows_data
                .iter()
                .map(|r| {
                    vec![
                        fmt(r.a),
                        fmt(r.b),
                        fmt(r.m2),
                        fmt(r.lam_min_asym),
                        fmt(r.lam_max_asym),
                        fmt(r.lam_min_a0),
                        fmt(r.lam_max_a0),
                        fmt(r.sandwich_margin),
                        r.pass.to_string(),
                    ]
                })
                .collect();
            if json_tables {
                write_json(out.join("fuchsian_cert.json"), &rows)?;
            } else {
                write_csv(
                    out.join("fuchsian_cert.csv"),
                    "a,b,m2,lam_min_Asym,lam_max_Asym,lam_min_A0,lam_max_A0,sandwich_margin,pass",
                    &rows,
                )?;
            }
            let n_pass = rows_data.iter().filter(|r| r.pass).count();
            let n_adj = rows_data.iter().filter(|r| r.pass_adjusted).count();
            let mut extra = serde_json::json!({
                "cells": rows_data.len(),
                "pass_stated_caps": n_pass,
                "pass_measured_caps": n_adj,
                "lam_max_worst": rows_data.iter().map(|r| r.lam_max_asym).fold(f64::MIN, f64::max),
            });
            if *extended {
                let ext = fuchsian::certify_h5_extended(
                    &p,
                    &SweepSpec { a_lo: 16.0 / 9.0, a_hi: 30.0, na: 16, ..SweepSpec::default() },
                    *dim,
                );
                let found = ext.iter().filter(|r| r.found).count();
                extra["extended_found"] = serde_json::json!(found);
                extra["extended_cells"] = serde_json::json!(ext.len());
                write_json(out.join("fuchsian_extended.json"), &ext)?;
            }
            write_json(out.join("fuchsian_summary.json"), &extra)?;
            let mut man = RunManifest::new("fuchsian", &p);
            man.outputs = vec!["fuchsian_cert.csv".into(), "fuchsian_summary.json".into()];
            man.wall_ms = started.elapsed().as_millis();
            write_json(out.join("manifest.json"), &man)?;
            // nonzero exit if any cell misses the stated caps (the
            // eigenvalue-cap overshoot makes this the expected outcome;
            // fuchsian_summary.json carries the measured-cap tally)
            Ok(if n_pass == rows_data.len() { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }

        Cmd::Sim { epsilon, cells, horizon, half_width } => {
            let derived = derive_constants(&p)?;
            let tr = ode::integrate(&p, &derived, &OdeOptions::default())?;
            let ct = build_compactified(&tr, &p, &derived, &CompactOptions::default())?;
            let cn = geometry::cone(&tr, &ct, &p, &derived)?;
            let lens = geometry::lens_surface(&p, &ct)?;
            let reference = wave::Reference::new(&tr)?;
            let profile = PerturbationProfile::new(*epsilon);
            let opts = WaveOptions {
                cells: *cells,
                horizon: *horizon,
                half_width: *half_width,
                ..Default::default()
            };
            let run = wave::simulate(&p, &derived, &tr, &profile, &opts)?;
            let st = run.last();
            let rows: Vec<Vec<String>> = run
                .x
                .iter()
                .enumerate()
                .map(|(j, &xj)| {
                    let tag = geometry::classify(st.t, xj, &cn, &ct, &lens)
                        .map(|t| t.as_str())
                        .unwrap_or("?");
                    vec![
                        fmt(st.t),
                        fmt(xj),
                        fmt(st.rho[j]),
                        fmt(st.rho_t[j]),
                        fmt(st.g_field[j]),
                        tag.to_string(),
                    ]
                })
                .collect();
            if json_tables {
                write_json(out.join("sim_final.json"), &rows)?;
            } else {
                write_csv(out.join("sim_final.csv"), "t,x,rho,rho_t,g,region_tag", &rows)?;
            }
            let h_err =
                wave::region_error(&run, &reference, &cn, &ct, &lens, geometry::RegionTag::H, 2)?;
            let fit = wave::envelope_verify(&run, &reference, &ct, &cn, &lens, &p)?;
            let comps = wave::substitution_diagnostics(&run, &reference, &ct, &cn, &lens, &p)?;
            let summary = serde_json::json!({
                "steps": run.steps,
                "dt": run.dt,
                "h": run.h,
                "h_region_error": h_err,
                "envelope_fit": fit,
                "composites": comps,
                "smallness_regime": profile.smallness_regime(&p),
            });
            write_json(out.join("sim_summary.json"), &summary)?;
            let mut man = RunManifest::new("sim", &p);
            man.extra = serde_json::json!({
                "epsilon": epsilon, "cells": cells, "horizon": horizon,
                "half_width": half_width, "dt": run.dt, "steps": run.steps,
            });
            man.outputs = vec!["sim_final.csv".into(), "sim_summary.json".into()];
            man.wall_ms = started.elapsed().as_millis();
            write_json(out.join("manifest.json"), &man)?;
            let healthy = h_err < 1e-7 && fit.drift < 2.0;
            Ok(if healthy { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }

        Cmd::Sweep { param, values } => {
            if values.is_empty() {
                return Err(Error::Config("sweep needs at least one value".into()));
            }
            let mut worst = ExitCode::SUCCESS;
            for (i, v) in values.iter().enumerate() {
                let mut cell = p;
                match param.as_str() {
                    "a" => cell.a = *v,
                    "b" => cell.b = *v,
                    "c" => cell.c = *v,
                    "k" => cell.k = *v,
                    "m2" => cell.m2 = *v,
                    "beta" => cell.beta = *v,
                    "beta0" => cell.beta0 = *v,
                    "t0" => cell.t0 = *v,
                    "A" => cell.comp_a = *v,
                    "delta0" => cell.delta0 = *v,
                    "sigma0" => cell.sigma0 = *v,
                    other => {
                        return Err(Error::Config(format!("unknown sweep key: {other}")));
                    }
                }
                let cell_dir = ensure_dir(out.join(format!("cell_{i:03}")))?;
                let report = validate(&cell);
                let derived = derive_constants(&cell)?;
                let mut man = RunManifest::new("sweep", &cell);
                man.extra = serde_json::json!({
                    "index": i, "param": param, "value": v,
                    "validation": report, "derived": derived,
                });
                man.wall_ms = started.elapsed().as_millis();
                write_json(cell_dir.join("manifest.json"), &man)?;
                if !report.all_passed() {
                    worst = ExitCode::from(1);
                }
            }
            Ok(worst)
        }
    }
}
