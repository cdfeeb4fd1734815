use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use rayon::prelude::*;
use serde::Serialize;

use sdym_core::frobenius::kappa_series;
use sdym_core::io::{fmt17, opt17, F17};
use sdym_core::mapping::{coefficient_diagnostics, eval_mapped, mapping_coefficients, write_coefficients_csv, CoefficientDiagnostics};
use sdym_core::profile::write_profile_csv;
use sdym_core::properties::{run_suite, summary_table, SuiteConfig};
use sdym_core::{eval_series, integrate_phi, observe, ClassTag, ObservableReport};

use crate::config::RunConfig;

pub const EXIT_OK: u8 = 0;
pub const EXIT_DIVERGENT: u8 = 2;
pub const EXIT_ALPHA_IMAGINARY: u8 = 3;
pub const EXIT_PROPERTY: u8 = 4;

fn write_file(dir: &Path, name: &str, bytes: &[u8]) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn csv_with_header(cfg: &RunConfig, body: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> Result<Vec<u8>> {
    let mut buf = cfg.csv_header().into_bytes();
    body(&mut buf)?;
    Ok(buf)
}

fn exit_for(class: ClassTag) -> u8 {
    match class {
        ClassTag::Divergent => EXIT_DIVERGENT,
        ClassTag::AlphaImaginary => EXIT_ALPHA_IMAGINARY,
        ClassTag::FiniteAction | ClassTag::Abelian => EXIT_OK,
    }
}

pub fn solve(cfg: &RunConfig) -> Result<u8> {
    let profile = if cfg.p == -1 {
        let kappa = cfg.kappa.expect("validated");
        integrate_phi(cfg.m, kappa, cfg.epsilon, cfg.r_max, cfg.tol)?
    } else {
        cfg.integrator().integrate_family(cfg.p, cfg.free_coeff.expect("validated"))?
    };
    let report = observe(&profile)?;
    let csv = csv_with_header(cfg, |buf| write_profile_csv(buf, &profile, true))?;
    write_file(&cfg.out, "profile.csv", &csv)?;
    let json = report.to_json() + "\n";
    write_file(&cfg.out, "summary.json", json.as_bytes())?;
    print!("{json}");
    Ok(exit_for(report.class.tag()))
}

fn scan_row(kappa: f64, report: Option<&ObservableReport>) -> String {
    let f = |x: Option<f64>| x.map(fmt17).unwrap_or_default();
    match report {
        None => format!("{},Error,,,,,", fmt17(kappa)),
        Some(r) => format!(
            "{},{},{},{},{},{},{}",
            fmt17(kappa),
            r.class.tag(),
            f(r.action),
            f(r.action_lo),
            f(r.action_hi),
            f(r.c_kappa),
            f(r.q_electric)
        ),
    }
}

pub fn scan(cfg: &RunConfig) -> Result<u8> {
    let kappas = cfg.scan_kappas();
    let rows: Vec<(f64, std::result::Result<ObservableReport, String>)> = kappas
        .par_iter()
        .map(|&k| {
            let report = integrate_phi(cfg.m, k, cfg.epsilon, cfg.r_max, cfg.tol)
                .and_then(|p| observe(&p))
                .map_err(|e| e.to_string());
            (k, report)
        })
        .collect();
    let csv = csv_with_header(cfg, |buf| {
        writeln!(buf, "kappa,class,S,S_lo,S_hi,C,q_e")?;
        for (k, r) in &rows {
            writeln!(buf, "{}", scan_row(*k, r.as_ref().ok()))?;
        }
        Ok(())
    })?;
    write_file(&cfg.out, "scan.csv", &csv)?;
    println!("{:>10} {:<15} {:>22}", "kappa", "class", "S");
    for (k, r) in &rows {
        match r {
            Ok(r) => {
                let s = r.action.map(|s| format!("{s:.15}")).unwrap_or_else(|| "-".into());
                println!("{:>10} {:<15} {:>22}", format!("{k:.6}"), r.class.tag().as_str(), s);
            }
            Err(e) => println!("{:>10} {:<15} {e}", format!("{k:.6}"), "Error"),
        }
    }
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct MapSummary {
    m: F17,
    kappa: F17,
    order: usize,
    r_min: F17,
    r_max: F17,
    max_dev_mapped_numeric: Option<F17>,
    max_dev_series_numeric: Option<F17>,
    numeric_class: ClassTag,
    diagnostics: Option<DiagnosticsWire>,
}

#[derive(Serialize)]
struct DiagnosticsWire {
    leading_max: F17,
    trailing_max: F17,
    decay_trend: Option<F17>,
    tail_bound_at_r_max: F17,
    unreliable: bool,
}

impl DiagnosticsWire {
    fn new(d: &CoefficientDiagnostics, omega: f64) -> Self {
        DiagnosticsWire {
            leading_max: F17(d.leading_max),
            trailing_max: F17(d.trailing_max),
            decay_trend: opt17(d.decay_trend),
            tail_bound_at_r_max: F17(d.tail_bound(omega)),
            unreliable: d.unreliable,
        }
    }
}

const COMPARISON_POINTS: usize = 1000;

pub fn map(cfg: &RunConfig) -> Result<u8> {
    let m = cfg.m;
    let kappa = cfg.kappa.expect("validated");
    let mapped = mapping_coefficients(m, kappa, cfg.map_order)?;
    let series = kappa_series(m, kappa, cfg.series_order)?;
    let profile = integrate_phi(m, kappa, cfg.epsilon, cfg.r_max, cfg.tol)?;
    let r_end = cfg.r_max.min(20.0 * m);
    let radii: Vec<f64> = (0..=COMPARISON_POINTS)
        .map(|j| 2.0 * m + (r_end - 2.0 * m) * j as f64 / COMPARISON_POINTS as f64)
        .collect();
    let rows: Vec<(f64, f64, f64, Option<f64>)> = radii
        .par_iter()
        .map(|&r| {
            let horizon = eval_series(&series, r - 2.0 * m).0;
            let mapped_phi = eval_mapped(&mapped, r).map(|v| v.0).unwrap_or(f64::NAN);
            let numeric = profile.eval(r).ok().map(|st| st.phi);
            (r, horizon, mapped_phi, numeric)
        })
        .collect();
    let max_dev = |pick: fn(&(f64, f64, f64, Option<f64>)) -> f64| {
        rows.iter()
            .filter_map(|row| row.3.map(|n| (pick(row) - n).abs()))
            .reduce(f64::max)
    };
    let dev_mapped = max_dev(|row| row.2);
    let dev_series = max_dev(|row| row.1);

    let coeffs = csv_with_header(cfg, |buf| write_coefficients_csv(buf, &mapped))?;
    write_file(&cfg.out, "coefficients.csv", &coeffs)?;
    let comparison = csv_with_header(cfg, |buf| {
        writeln!(buf, "r,phi_horizon_series,phi_mapped,phi_numeric")?;
        for (r, h, mp, n) in &rows {
            writeln!(buf, "{},{},{},{}", fmt17(*r), fmt17(*h), fmt17(*mp), n.map(fmt17).unwrap_or_default())?;
        }
        Ok(())
    })?;
    write_file(&cfg.out, "comparison.csv", &comparison)?;

    let diagnostics = if cfg.map_order >= 100 {
        Some(coefficient_diagnostics(&mapped)?)
    } else {
        None
    };
    let summary = MapSummary {
        m: F17(m),
        kappa: F17(kappa),
        order: cfg.map_order,
        r_min: F17(2.0 * m),
        r_max: F17(r_end),
        max_dev_mapped_numeric: opt17(dev_mapped),
        max_dev_series_numeric: opt17(dev_series),
        numeric_class: profile.class().tag(),
        diagnostics: diagnostics.as_ref().map(|d| DiagnosticsWire::new(d, 1.0 - 2.0 * m / r_end)),
    };
    let json = serde_json::to_string_pretty(&summary)? + "\n";
    write_file(&cfg.out, "map_summary.json", json.as_bytes())?;
    print!("{json}");
    let unreliable = diagnostics.map(|d| d.unreliable).unwrap_or(false);
    if unreliable {
        eprintln!("warning: series coefficients grow; the compactified series is unreliable for kappa = {kappa}");
        return Ok(EXIT_PROPERTY);
    }
    Ok(EXIT_OK)
}

pub fn check(cfg: &RunConfig) -> Result<u8> {
    let suite = SuiteConfig {
        pairs: cfg.pairs.clone(),
        dphi_shift: cfg.inject_dphi,
        integrator: cfg.integrator(),
        ..SuiteConfig::new(cfg.m)
    };
    let reports = run_suite(&suite)?;
    let json = serde_json::to_string_pretty(&reports)? + "\n";
    write_file(&cfg.out, "properties.json", json.as_bytes())?;
    print!("{}", summary_table(&reports));
    Ok(if reports.iter().all(|r| r.passed) { EXIT_OK } else { EXIT_PROPERTY })
}
