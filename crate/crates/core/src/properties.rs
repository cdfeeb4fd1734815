//! Executable checks of the global properties of the `p = -1` family and
//! of the family scans for other windings.
//!
//! For `-3 <= kappa_1 < kappa_2 <= -2` the solutions are ordered,
//! `phi_1 < phi_2` and `phi_1' < phi_2'`, and every member with
//! `kappa < -2` keeps `alpha^2 = 1 - r^2 phi' > 0`.

use rayon::prelude::*;
use serde::ser::SerializeMap;
use serde::{Serialize, Serializer};

use crate::error::{Result, SolverError};
use crate::frobenius::{abelian_free_coeff, eval_series, forced_index, kappa_series, ClosedForm, ClosedFormKind};
use crate::io::{ser_f17, ser_opt_f17, ser_vec_f17, F17};
use crate::params::{ClassTag, SolutionClass};
use crate::profile::{fit_asymptotics, PhiIntegrator, RadialProfile};

/// Grid for the ordering checks, log-spaced in `s = r - 2m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridSpec {
    #[serde(serialize_with = "ser_f17")]
    pub r_min: f64,
    #[serde(serialize_with = "ser_f17")]
    pub r_max: f64,
    pub points: usize,
}

impl GridSpec {
    pub fn new(m: f64, epsilon: f64, r_max: f64, points: usize) -> Self {
        GridSpec {
            r_min: 2.0 * m + epsilon,
            r_max,
            points,
        }
    }

    pub fn radii(&self, m: f64) -> Vec<f64> {
        log_grid(m, self.r_min - 2.0 * m, self.r_max, self.points)
    }
}

/// `n` radii from `2m + epsilon` to `r_max`, log-spaced in `r - 2m`.
pub fn log_grid(m: f64, epsilon: f64, r_max: f64, n: usize) -> Vec<f64> {
    let s_max = r_max - 2.0 * m;
    if n < 2 {
        return vec![r_max];
    }
    let ratio = (s_max / epsilon).ln();
    (0..n)
        .map(|j| {
            if j == n - 1 {
                r_max
            } else {
                2.0 * m + epsilon * (ratio * j as f64 / (n - 1) as f64).exp()
            }
        })
        .collect()
}

/// Where and how a property failed.
#[derive(Debug, Clone, PartialEq)]
pub struct Witness {
    pub r: Option<f64>,
    pub values: Vec<(String, f64)>,
}

impl Serialize for Witness {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(self.values.len() + 1))?;
        map.serialize_entry("r", &self.r.map(F17))?;
        for (k, v) in &self.values {
            map.serialize_entry(k, &F17(*v))?;
        }
        map.end()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropertyReport {
    pub property_id: String,
    #[serde(serialize_with = "ser_vec_f17")]
    pub kappas: Vec<f64>,
    pub p: Option<i32>,
    pub grid: Option<GridSpec>,
    pub passed: bool,
    /// Only part of the grid lay inside both profiles.
    pub partial: bool,
    #[serde(serialize_with = "ser_opt_f17")]
    pub worst_margin: Option<f64>,
    #[serde(serialize_with = "ser_opt_f17")]
    pub worst_location: Option<f64>,
    pub witness: Option<Witness>,
    pub note: Option<String>,
}

impl PropertyReport {
    fn new(property_id: &str, kappas: Vec<f64>) -> Self {
        PropertyReport {
            property_id: property_id.to_string(),
            kappas,
            p: None,
            grid: None,
            passed: true,
            partial: false,
            worst_margin: None,
            worst_location: None,
            witness: None,
            note: None,
        }
    }

    fn failed(property_id: &str, kappas: Vec<f64>, note: String) -> Self {
        let mut r = Self::new(property_id, kappas);
        r.passed = false;
        r.witness = Some(Witness { r: None, values: Vec::new() });
        r.note = Some(note);
        r
    }
}

/// Tracks the point with the least relative slack `margin / threshold` and
/// the first violation.
struct Margins {
    report: PropertyReport,
    worst_ratio: f64,
}

impl Margins {
    fn new(report: PropertyReport) -> Self {
        Margins {
            report,
            worst_ratio: f64::INFINITY,
        }
    }

    fn record(&mut self, r: f64, margin: f64, threshold: f64, values: impl FnOnce() -> Vec<(String, f64)>) {
        let ok = margin > threshold;
        let ratio = if margin.is_nan() { f64::NEG_INFINITY } else { margin / threshold };
        if ratio < self.worst_ratio || self.report.worst_margin.is_none() {
            self.worst_ratio = ratio;
            self.report.worst_margin = Some(margin);
            self.report.worst_location = Some(r);
        }
        if !ok && self.report.passed {
            self.report.passed = false;
            self.report.witness = Some(Witness { r: Some(r), values: values() });
        }
    }

    fn finish(self) -> PropertyReport {
        self.report
    }
}

/// Threshold for a strict inequality between quantities that agree to
/// order `(s/m)^power` at the horizon.
fn strict_threshold(tol: f64, s: f64, m: f64, power: i32) -> f64 {
    1e2 * tol * (s / m).min(1.0).powi(power)
}

/// `(sign, ln|alpha^2|)`, with `phi'` optionally shifted by `shift`.
fn signed_ln_alpha_sq(profile: &RadialProfile, r: f64, shift: f64) -> Result<(f64, f64)> {
    let (sign, ln) = match profile.ln_abs_alpha_sq(r)? {
        Some(l) => (profile.alpha_sign(), l),
        None => (0.0, f64::NEG_INFINITY),
    };
    if shift == 0.0 {
        return Ok((sign, ln));
    }
    let w = sign * ln.exp() - r * r * shift;
    Ok((w.signum() * (w != 0.0) as i32 as f64, w.abs().ln()))
}

/// How far `alpha_1^2` exceeds `alpha_2^2`: infinite when the signs
/// differ, otherwise the gap in `ln|alpha^2|`.
fn alpha_sq_gap(a: (f64, f64), b: (f64, f64)) -> f64 {
    if a.0 != b.0 {
        (a.0 - b.0) * f64::INFINITY
    } else if a.0 > 0.0 {
        a.1 - b.1
    } else if a.0 < 0.0 {
        b.1 - a.1
    } else {
        0.0
    }
}

fn ordering_from_profiles(
    p1: &RadialProfile,
    p2: &RadialProfile,
    grid: GridSpec,
    dphi_shift: f64,
) -> Result<PropertyReport> {
    let m = p1.m();
    let tol = p1.tol().max(p2.tol());
    let mut report = PropertyReport::new("ordering", vec![p1.kappa().unwrap_or(f64::NAN), p2.kappa().unwrap_or(f64::NAN)]);
    report.p = Some(-1);
    report.grid = Some(grid);
    let end = p1.r_max().min(p2.r_max());
    let mut margins = Margins::new(report);
    for r in grid.radii(m) {
        if r > end * (1.0 + 1e-12) {
            margins.report.partial = true;
            continue;
        }
        let s = r - 2.0 * m;
        let (a, b) = (p1.eval(r)?, p2.eval(r)?);
        let la = signed_ln_alpha_sq(p1, r, dphi_shift)?;
        let lb = signed_ln_alpha_sq(p2, r, 0.0)?;
        let values = || {
            vec![
                ("phi_1".to_string(), a.phi),
                ("phi_2".to_string(), b.phi),
                ("dphi_1".to_string(), a.dphi + dphi_shift),
                ("dphi_2".to_string(), b.dphi),
            ]
        };
        margins.record(r, b.phi - a.phi, strict_threshold(tol, s, m, 2) / m, values);
        margins.record(r, alpha_sq_gap(la, lb), strict_threshold(tol, s, m, 1), values);
    }
    let mut report = margins.finish();
    if report.partial {
        report.note = Some(format!("grid truncated at r = {end}"));
    }
    Ok(report)
}

fn ordering_preconditions(kappa_1: f64, kappa_2: f64) -> Result<()> {
    if !(kappa_1 < kappa_2) {
        return Err(SolverError::Precondition(format!(
            "ordering needs kappa_1 < kappa_2, got {kappa_1} and {kappa_2}"
        )));
    }
    if kappa_2 > -2.0 {
        return Err(SolverError::Precondition(format!("ordering needs kappa_2 <= -2, got {kappa_2}")));
    }
    Ok(())
}

/// Checks `phi_1 < phi_2` and `phi_1' < phi_2'` on the grid.
pub fn check_ordering(integrator: &PhiIntegrator, kappa_1: f64, kappa_2: f64, grid: GridSpec) -> Result<PropertyReport> {
    check_ordering_shifted(integrator, kappa_1, kappa_2, grid, 0.0)
}

/// [`check_ordering`] with `phi_1'` shifted by `dphi_shift`, to exercise
/// the failure path.
pub fn check_ordering_shifted(
    integrator: &PhiIntegrator,
    kappa_1: f64,
    kappa_2: f64,
    grid: GridSpec,
    dphi_shift: f64,
) -> Result<PropertyReport> {
    ordering_preconditions(kappa_1, kappa_2)?;
    let p1 = integrator.integrate_kappa(kappa_1)?;
    let p2 = integrator.integrate_kappa(kappa_2)?;
    ordering_from_profiles(&p1, &p2, grid, dphi_shift)
}

fn alpha_reality_from_profile(profile: &RadialProfile, grid: GridSpec) -> Result<PropertyReport> {
    let m = profile.m();
    let mut report = PropertyReport::new("alpha_reality", vec![profile.kappa().unwrap_or(f64::NAN)]);
    report.p = Some(profile.p());
    report.grid = Some(grid);
    if let SolutionClass::AlphaImaginary { witness_r, alpha_sq } = profile.class() {
        report.passed = false;
        report.worst_margin = Some(alpha_sq);
        report.worst_location = Some(witness_r);
        report.witness = Some(Witness {
            r: Some(witness_r),
            values: vec![("alpha_sq".to_string(), alpha_sq)],
        });
        return Ok(report);
    }
    let mut margins = Margins::new(report);
    for r in grid.radii(m) {
        if r > profile.r_max() * (1.0 + 1e-12) {
            margins.report.partial = true;
            continue;
        }
        let s = r - 2.0 * m;
        // Beyond s = m alpha^2 carries a relative error of order tol, so
        // its sign alone decides.
        let thr = if s <= m { strict_threshold(profile.tol(), s, m, 1) } else { 0.0 };
        let (sign, ln) = signed_ln_alpha_sq(profile, r, 0.0)?;
        let margin = if sign > 0.0 && ln.is_finite() { ln - thr.ln() } else { sign * ln.exp() - thr };
        let w = sign * ln.exp();
        margins.record(r, margin, 0.0, || vec![("alpha_sq".to_string(), w)]);
    }
    Ok(margins.finish())
}

/// Checks `1 - r^2 phi' > 0` on the grid.
pub fn check_alpha_reality(integrator: &PhiIntegrator, kappa: f64, grid: GridSpec) -> Result<PropertyReport> {
    let profile = integrator.integrate_kappa(kappa)?;
    alpha_reality_from_profile(&profile, grid)
}

/// Integrates `kappa in {-3, -2}` and compares with the closed form on
/// `[2m + epsilon, 100m]`; the deviation must stay below `1e-8`.
pub fn check_closed_form_reduction(integrator: &PhiIntegrator, kappa: f64) -> Result<PropertyReport> {
    let m = integrator.m;
    let cf = if kappa == -3.0 {
        ClosedForm::new(ClosedFormKind::Monopole, m, 0.0)?
    } else if kappa == -2.0 {
        ClosedForm::regular_dyon(m)?
    } else {
        return Err(SolverError::Precondition(format!(
            "closed forms exist only for kappa = -3 and -2, got {kappa}"
        )));
    };
    let integ = PhiIntegrator {
        r_max: 100.0 * m,
        ..*integrator
    };
    let profile = integ.integrate_kappa(kappa)?;
    let grid = GridSpec::new(m, integ.epsilon, integ.r_max, 400);
    let mut report = PropertyReport::new("closed_form_reduction", vec![kappa]);
    report.p = Some(-1);
    report.grid = Some(grid);
    let mut worst = (0.0f64, grid.r_min);
    let radii = grid.radii(m).into_iter().chain(profile.nodes().iter().map(|n| n.r));
    for r in radii {
        let st = profile.eval(r)?;
        let err = (st.phi - cf.eval(r).phi).abs();
        if !(err <= worst.0) {
            worst = (err, r);
        }
    }
    report.worst_margin = Some(1e-8 - worst.0);
    report.worst_location = Some(worst.1);
    if !(worst.0 <= 1e-8) {
        report.passed = false;
        report.witness = Some(Witness {
            r: Some(worst.1),
            values: vec![("deviation".to_string(), worst.0)],
        });
    }
    Ok(report)
}

/// Ordering of the horizon series for arbitrary real `kappa` pairs at
/// `s <= 0.01 m`.
pub fn check_local_ordering(m: f64, kappas: &[f64], series_order: usize) -> Result<PropertyReport> {
    let mut sorted = kappas.to_vec();
    sorted.sort_by(f64::total_cmp);
    let series = sorted
        .iter()
        .map(|&k| kappa_series(m, k, series_order))
        .collect::<Result<Vec<_>>>()?;
    let mut report = PropertyReport::new("local_ordering", sorted.clone());
    report.p = Some(-1);
    report.grid = Some(GridSpec::new(m, 1e-6 * m, 2.0 * m + 0.01 * m, 16));
    let radii = report.grid.unwrap().radii(m);
    let mut margins = Margins::new(report);
    for i in 0..series.len() {
        for j in i + 1..series.len() {
            for &r in &radii {
                let s = r - 2.0 * m;
                let (p1, d1) = eval_series(&series[i], s);
                let (p2, d2) = eval_series(&series[j], s);
                let (k1, k2) = (sorted[i], sorted[j]);
                let values = || {
                    vec![
                        ("kappa_1".to_string(), k1),
                        ("kappa_2".to_string(), k2),
                        ("phi_1".to_string(), p1),
                        ("phi_2".to_string(), p2),
                        ("dphi_1".to_string(), d1),
                        ("dphi_2".to_string(), d2),
                    ]
                };
                margins.record(r, p2 - p1, 0.0, values);
                margins.record(r, d2 - d1, 0.0, values);
            }
        }
    }
    Ok(margins.finish())
}

/// The fitted exponential decay rate of `phi - phi(inf) + 1/r` must match
/// `2 C` within 5%.
pub fn check_decay_rate(integrator: &PhiIntegrator, kappa: f64) -> Result<PropertyReport> {
    let profile = integrator.integrate_kappa(kappa)?;
    let mut report = PropertyReport::new("decay_rate", vec![kappa]);
    report.p = Some(-1);
    let fit = fit_asymptotics(&profile)?;
    let Some(k) = fit.decay_rate else {
        return Ok(PropertyReport::failed("decay_rate", vec![kappa], "no exponential tail could be fitted".into()));
    };
    let rel = (k / (2.0 * fit.c_kappa) - 1.0).abs();
    report.worst_margin = Some(0.05 - rel);
    if !(rel <= 0.05) {
        report.passed = false;
        report.witness = Some(Witness {
            r: Some(profile.r_max()),
            values: vec![("decay_rate".to_string(), k), ("two_c".to_string(), 2.0 * fit.c_kappa)],
        });
    }
    Ok(report)
}

/// One cell of a family scan.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FamilyCell {
    #[serde(serialize_with = "ser_f17")]
    pub free_coeff: f64,
    /// `free_coeff` minus its Abelian value, in units of `m^-(k+1)`.
    #[serde(serialize_with = "ser_f17")]
    pub deviation: f64,
    pub class: Option<ClassTag>,
    #[serde(serialize_with = "ser_opt_f17")]
    pub witness_r: Option<f64>,
    /// Series or integration failure, recorded instead of a class.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FamilyTable {
    pub p: i32,
    #[serde(serialize_with = "ser_f17")]
    pub m: f64,
    pub cells: Vec<FamilyCell>,
}

impl FamilyTable {
    pub fn count(&self, tag: ClassTag) -> usize {
        self.cells.iter().filter(|c| c.class == Some(tag)).count()
    }

    pub fn errors(&self) -> usize {
        self.cells.iter().filter(|c| c.error.is_some()).count()
    }
}

/// Abelian value plus and minus `n` deviations log-spaced over
/// `[1e-3, 1e3]` in units of `m^-(k+1)`, with the Abelian value itself in
/// the middle.
pub fn default_family_grid(m: f64, p: i32, n: usize) -> Vec<f64> {
    let base = abelian_free_coeff(m, p);
    let unit = m.powi(-(forced_index(p) as i32 + 1));
    let devs: Vec<f64> = (0..n)
        .map(|j| 1e-3 * 1e6f64.powf(j as f64 / (n.max(2) - 1) as f64) * unit)
        .collect();
    let mut grid: Vec<f64> = devs.iter().rev().map(|d| base - d).collect();
    grid.push(base);
    grid.extend(devs.iter().map(|d| base + d));
    grid
}

/// Integrates and classifies every free-coefficient value of the winding
/// `p` family. Cells run in parallel; the table keeps grid order.
pub fn classify_family(integrator: &PhiIntegrator, p: i32, grid: Option<&[f64]>) -> Result<FamilyTable> {
    if !(-4..=2).contains(&p) {
        return Err(SolverError::param("p", format!("must lie in [-4, 2], got {p}")));
    }
    integrator.validate()?;
    let m = integrator.m;
    let owned;
    let grid = match grid {
        Some(g) => g,
        None => {
            owned = default_family_grid(m, p, 25);
            &owned
        }
    };
    let base = abelian_free_coeff(m, p);
    let unit = m.powi(-(forced_index(p) as i32 + 1));
    let cells = grid
        .par_iter()
        .map(|&a| {
            let deviation = (a - base) / unit;
            match integrator.integrate_family(p, a) {
                Ok(profile) => FamilyCell {
                    free_coeff: a,
                    deviation,
                    class: Some(profile.class().tag()),
                    witness_r: profile.class().witness_r(),
                    error: None,
                },
                Err(e) => FamilyCell {
                    free_coeff: a,
                    deviation,
                    class: None,
                    witness_r: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();
    Ok(FamilyTable { p, m, cells })
}

/// Passes when no cell of the table has finite action with a non-Abelian
/// profile.
pub fn family_report(table: &FamilyTable) -> PropertyReport {
    let mut report = PropertyReport::new("family_without_finite_action", Vec::new());
    report.p = Some(table.p);
    report.note = Some(format!(
        "{} cells: {} FiniteAction, {} Abelian, {} Divergent, {} AlphaImaginary, {} errors",
        table.cells.len(),
        table.count(ClassTag::FiniteAction),
        table.count(ClassTag::Abelian),
        table.count(ClassTag::Divergent),
        table.count(ClassTag::AlphaImaginary),
        table.errors()
    ));
    if let Some(cell) = table.cells.iter().find(|c| c.class == Some(ClassTag::FiniteAction)) {
        report.passed = false;
        report.witness = Some(Witness {
            r: None,
            values: vec![("free_coeff".to_string(), cell.free_coeff), ("deviation".to_string(), cell.deviation)],
        });
    }
    report
}

/// Inputs of the full property suite.
#[derive(Debug, Clone, PartialEq)]
pub struct SuiteConfig {
    pub integrator: PhiIntegrator,
    pub grid_points: usize,
    pub kappas: Vec<f64>,
    /// Restricts the suite to ordering checks of these pairs.
    pub pairs: Option<Vec<(f64, f64)>>,
    /// Shift added to `phi_1'` in ordering checks.
    pub dphi_shift: f64,
}

impl SuiteConfig {
    pub fn new(m: f64) -> Self {
        SuiteConfig {
            integrator: PhiIntegrator::new(m),
            grid_points: 64,
            kappas: (0..=10).map(|j| (j - 30) as f64 / 10.0).collect(),
            pairs: None,
            dphi_shift: 0.0,
        }
    }

    pub fn grid(&self) -> GridSpec {
        let i = &self.integrator;
        GridSpec::new(i.m, i.epsilon, i.r_max, self.grid_points)
    }
}

fn or_failed(id: &str, kappas: Vec<f64>, r: Result<PropertyReport>) -> PropertyReport {
    r.unwrap_or_else(|e| PropertyReport::failed(id, kappas, e.to_string()))
}

/// Runs every check and returns the reports in a fixed order.
pub fn run_suite(config: &SuiteConfig) -> Result<Vec<PropertyReport>> {
    config.integrator.validate()?;
    let integ = &config.integrator;
    let grid = config.grid();
    let pairs: Vec<(f64, f64)> = match &config.pairs {
        Some(p) => p.clone(),
        None => {
            let k = &config.kappas;
            (0..k.len()).flat_map(|i| (i + 1..k.len()).map(move |j| (k[i], k[j]))).collect()
        }
    };
    for &(a, b) in &pairs {
        ordering_preconditions(a, b)?;
    }
    let mut kappas: Vec<f64> = pairs.iter().flat_map(|&(a, b)| [a, b]).collect();
    if config.pairs.is_none() {
        kappas.extend(&config.kappas);
    }
    kappas.sort_by(f64::total_cmp);
    kappas.dedup();
    let profiles: Vec<Result<RadialProfile>> = kappas.par_iter().map(|&k| integ.integrate_kappa(k)).collect();
    let lookup = |k: f64| -> std::result::Result<&RadialProfile, String> {
        let i = kappas.iter().position(|&x| x == k).expect("profile computed");
        profiles[i].as_ref().map_err(|e| e.to_string())
    };

    let mut reports: Vec<PropertyReport> = pairs
        .par_iter()
        .map(|&(a, b)| match (lookup(a), lookup(b)) {
            (Ok(pa), Ok(pb)) => or_failed("ordering", vec![a, b], ordering_from_profiles(pa, pb, grid, config.dphi_shift)),
            (Err(e), _) | (_, Err(e)) => PropertyReport::failed("ordering", vec![a, b], e),
        })
        .collect();
    if config.pairs.is_some() {
        return Ok(reports);
    }

    for &k in config.kappas.iter().filter(|&&k| k < -2.0) {
        reports.push(match lookup(k) {
            Ok(p) => or_failed("alpha_reality", vec![k], alpha_reality_from_profile(p, grid)),
            Err(e) => PropertyReport::failed("alpha_reality", vec![k], e),
        });
    }
    for k in [-3.0, -2.0] {
        reports.push(or_failed("closed_form_reduction", vec![k], check_closed_form_reduction(integ, k)));
    }
    let local = [-5.0, -4.0, -3.0, -2.5, -2.0, -1.0, 0.0, 1.0];
    reports.push(or_failed(
        "local_ordering",
        local.to_vec(),
        check_local_ordering(integ.m, &local, integ.series_order),
    ));
    let decays: Vec<PropertyReport> = [-2.75, -2.5, -2.25]
        .par_iter()
        .map(|&k| or_failed("decay_rate", vec![k], check_decay_rate(integ, k)))
        .collect();
    reports.extend(decays);
    for p in [1, 2, -2] {
        reports.push(match classify_family(integ, p, None) {
            Ok(table) => family_report(&table),
            Err(e) => {
                let mut r = PropertyReport::failed("family_without_finite_action", Vec::new(), e.to_string());
                r.p = Some(p);
                r
            }
        });
    }
    Ok(reports)
}

/// Human-readable table, one line per report.
pub fn summary_table(reports: &[PropertyReport]) -> String {
    let mut out = format!("{:<30} {:<24} {:<6} {:>24} {:>24}\n", "property", "inputs", "result", "worst_margin", "at_r");
    for r in reports {
        let inputs = match (r.p, r.kappas.is_empty()) {
            (Some(p), true) => format!("p={p}"),
            _ => r.kappas.iter().map(|k| format!("{k}")).collect::<Vec<_>>().join(","),
        };
        let inputs = if inputs.len() > 24 { format!("{}...", &inputs[..21]) } else { inputs };
        let fmt = |x: Option<f64>| x.map(|v| format!("{v:.6e}")).unwrap_or_else(|| "-".into());
        let result = match (r.passed, r.partial) {
            (true, false) => "PASS",
            (true, true) => "PART",
            _ => "FAIL",
        };
        out.push_str(&format!(
            "{:<30} {:<24} {:<6} {:>24} {:>24}\n",
            r.property_id,
            inputs,
            result,
            fmt(r.worst_margin),
            fmt(r.worst_location)
        ));
    }
    let failed = reports.iter().filter(|r| !r.passed).count();
    out.push_str(&format!("{} checks, {} failed\n", reports.len(), failed));
    out
}
