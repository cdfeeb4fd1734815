//! Action, Abelian charges and Lagrangian density of a radial solution.
//!
//! The action is a total derivative,
//!
//! ```text
//! S = 4m [ (1 - alpha^2) phi ]_{r = 2m}^{r = inf},
//! ```
//!
//! normalized so the monopole has `S = 1` and the regular dyon `S = 2`.

use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{Result, SolverError};
use crate::io::{opt17, F17};
use crate::params::{check_mass, SolutionClass};
use crate::profile::{fit_asymptotics, flux_derivative, RadialProfile};

/// `1 + 4 m C` for the `p = -1` family.
pub fn action_boundary(c_kappa: f64, m: f64) -> Result<f64> {
    check_mass("m", m)?;
    if !c_kappa.is_finite() {
        return Err(SolverError::param("c_kappa", "must be finite"));
    }
    Ok(1.0 + 4.0 * m * c_kappa)
}

fn require_finite_action(profile: &RadialProfile) -> Result<()> {
    if profile.class().has_finite_action() {
        Ok(())
    } else {
        Err(SolverError::NotFiniteAction(profile.class().tag().to_string()))
    }
}

/// Certified bracket on the action from `phi(R)`, using
/// `phi(R) + m/R^2 <= phi(inf) <= phi(R) + 1/R`.
pub fn action_bracket(profile: &RadialProfile, big_r: f64) -> Result<(f64, f64)> {
    require_finite_action(profile)?;
    let m = profile.m();
    match profile.kappa() {
        Some(k) if (-3.0 - 1e-12..=-2.0 + 1e-12).contains(&k) => {}
        Some(k) => {
            return Err(SolverError::Precondition(format!(
                "action bracket needs -3 <= kappa <= -2, got {k}"
            )))
        }
        None => return Err(SolverError::Precondition("action bracket needs a p = -1 profile".into())),
    }
    if !(big_r > 2.0 * m && big_r <= profile.r_max() * (1.0 + 1e-12)) {
        return Err(SolverError::param(
            "R",
            format!("must lie in (2m, {}], got {big_r}", profile.r_max()),
        ));
    }
    let big_r = big_r.min(profile.r_max());
    let phi = profile.eval(big_r)?.phi;
    let lo = 1.0 + 4.0 * m * (phi + m / (big_r * big_r));
    let hi = 1.0 + 4.0 * m * (phi + 1.0 / big_r);
    Ok((lo, hi))
}

/// Action from the integrated density, plus the tail `u(R)^2 / R` beyond
/// the last node, where `u = 1 - alpha^2`.
pub fn action_volume(profile: &RadialProfile) -> Result<f64> {
    require_finite_action(profile)?;
    let m = profile.m();
    let big_r = profile.r_max();
    let inner = profile.flux_integral(big_r)?;
    let end = profile.eval(big_r)?;
    let u_end = 1.0 - end.alpha_sq;
    let outer = u_end * u_end / big_r;
    let total = profile.seed_flux() - profile.horizon_flux() + inner + outer;
    let residual = (profile.seed_flux() + inner - u_end * end.phi).abs();
    if !total.is_finite() || residual > 1e-6 {
        return Err(SolverError::Quadrature(format!(
            "density integral {inner:e} disagrees with the boundary flux by {residual:e}"
        )));
    }
    Ok(4.0 * m * total)
}

/// Magnetic charge (always one) and electric charge `lim r^2 phi'`,
/// estimated at the outer end. Values below the monopole falloff `20m/R`
/// are reported as zero.
pub fn charges(profile: &RadialProfile) -> Result<(i32, f64)> {
    require_finite_action(profile)?;
    let big_r = profile.r_max();
    let end = profile.eval(big_r)?;
    let q = big_r * big_r * end.dphi;
    let q = if q.abs() < 10.0 * 2.0 * profile.m() / big_r { 0.0 } else { q };
    Ok((1, q))
}

/// `-d/dr[(1 - alpha^2) phi] / (8 pi^2)`, evaluated from the field
/// equations rather than by differencing. Integrating over `tau`, the
/// sphere and `r` gives `-S`.
pub fn lagrangian_density(profile: &RadialProfile, r: f64) -> Result<f64> {
    let st = profile.eval(r)?;
    Ok(-flux_derivative(&st) / (8.0 * PI * PI))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObservableReport {
    pub m: f64,
    pub kappa: Option<f64>,
    pub p: i32,
    pub class: SolutionClass,
    pub action: Option<f64>,
    pub action_lo: Option<f64>,
    pub action_hi: Option<f64>,
    pub c_kappa: Option<f64>,
    pub lambda: Option<f64>,
    pub q_magnetic: i32,
    pub q_electric: Option<f64>,
}

impl ObservableReport {
    pub fn witness_r(&self) -> Option<f64> {
        self.class.witness_r()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

impl Serialize for ObservableReport {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Wire<'a> {
            m: F17,
            kappa: Option<F17>,
            p: i32,
            class: &'a SolutionClass,
            witness_r: Option<F17>,
            #[serde(rename = "S")]
            s: Option<F17>,
            #[serde(rename = "S_lo")]
            s_lo: Option<F17>,
            #[serde(rename = "S_hi")]
            s_hi: Option<F17>,
            #[serde(rename = "C_kappa")]
            c_kappa: Option<F17>,
            lambda: Option<F17>,
            q_magnetic: i32,
            q_electric: Option<F17>,
        }
        Wire {
            m: F17(self.m),
            kappa: opt17(self.kappa),
            p: self.p,
            class: &self.class,
            witness_r: opt17(self.witness_r()),
            s: opt17(self.action),
            s_lo: opt17(self.action_lo),
            s_hi: opt17(self.action_hi),
            c_kappa: opt17(self.c_kappa),
            lambda: opt17(self.lambda),
            q_magnetic: self.q_magnetic,
            q_electric: opt17(self.q_electric),
        }
        .serialize(serializer)
    }
}

/// Everything the CLI reports for one solution. Solutions without finite
/// action carry only their class and witness.
pub fn observe(profile: &RadialProfile) -> Result<ObservableReport> {
    let m = profile.m();
    let mut report = ObservableReport {
        m,
        kappa: profile.kappa(),
        p: profile.p(),
        class: profile.class(),
        action: None,
        action_lo: None,
        action_hi: None,
        c_kappa: None,
        lambda: None,
        q_magnetic: 1,
        q_electric: None,
    };
    if !profile.class().has_finite_action() {
        return Ok(report);
    }
    report.q_electric = Some(charges(profile)?.1);
    let in_bracket_range = matches!(profile.kappa(), Some(k) if (-3.0 - 1e-12..=-2.0 + 1e-12).contains(&k));
    let fit = if profile.r_max() >= 50.0 * m {
        Some(fit_asymptotics(profile)?)
    } else {
        None
    };
    if let Some(fit) = &fit {
        report.c_kappa = Some(fit.c_kappa);
        report.lambda = fit.lambda;
    }
    report.action = Some(match (profile.exact(), profile.p(), &fit) {
        (Some(cf), _, _) => cf.action(),
        (None, -1, Some(fit)) => action_boundary(fit.c_kappa, m)?,
        _ => action_volume(profile)?,
    });
    if in_bracket_range {
        let (lo, hi) = action_bracket(profile, profile.r_max())?;
        let s = report.action.unwrap_or(lo);
        report.action_lo = Some(lo.min(s));
        report.action_hi = Some(hi.max(s));
    }
    Ok(report)
}
