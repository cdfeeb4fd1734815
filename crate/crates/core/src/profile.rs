//! Outward integration of the profile equation from just above the horizon.
//!
//! The equation is integrated in `s = r - 2m` with the state
//! `(phi, h, Q)`, where
//!
//! * `alpha^2 = sigma * (s/r)^(-p) * exp(h)` with a sign `sigma` fixed by the
//!   seed (the sign of `alpha^2` is conserved, since
//!   `(alpha^2)' = -2 r phi alpha^2 / s`),
//! * `phi' = (1 - alpha^2) / r^2`,
//! * `Q' = d/dr[(1 - alpha^2) phi]`, the action density.
//!
//! Removing the horizon power `(s/r)^(-p)` makes `h` analytic at `s = 0`,
//! and carrying `alpha^2` in logarithmic form keeps its relative accuracy
//! both at the horizon and in the exponentially small tail.

use std::io::Write;
use std::ops::ControlFlow;

use crate::error::{Result, SolverError};
use crate::frobenius::{derive_horizon_series, kappa_series, ClosedForm, ClosedFormKind, HorizonSeries, DEFAULT_SERIES_ORDER};
use crate::io::fmt17;
use crate::params::{check_mass, FamilyParams, SolutionClass, DIVERGENCE_DPHI, DIVERGENCE_PHI, TOL_ALPHA};
use crate::rk::{DenseSegment, Dop853, OdeSystem, Termination, Tolerances};
use crate::stats::{gauss_legendre8, least_squares};

pub const DEFAULT_EPSILON: f64 = 1e-6;
pub const DEFAULT_TOL: f64 = 1e-12;
pub const DEFAULT_R_MAX: f64 = 1e4;
/// Outer radius for high-precision action runs.
pub const PRECISION_R_MAX: f64 = 4e6;
/// Tolerance for high-precision action runs. Errors at the `kappa = -3`
/// end grow linearly in `r`.
pub const PRECISION_TOL: f64 = 1e-14;

/// Allowed undershoot of `phi` below the monopole curve `-m/r^2`, in units
/// of `tol / m` per unit `r/m`.
const SQUEEZE_SLACK: f64 = 1e3;

/// `(phi, phi', alpha^2)` at one radius.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointState {
    pub s: f64,
    pub r: f64,
    pub phi: f64,
    pub dphi: f64,
    pub alpha_sq: f64,
}

/// Accepted integrator step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Node {
    pub s: f64,
    pub r: f64,
    pub phi: f64,
    pub dphi: f64,
    pub d2phi: f64,
    pub alpha_sq: f64,
    pub h: f64,
    pub dh: f64,
    /// Integral of the action density from the first node.
    pub q: f64,
    pub dq: f64,
}

struct Field {
    m: f64,
    p: f64,
    sigma: f64,
}

struct Derivs {
    w: f64,
    w_over_s: f64,
    dphi: f64,
    dh: f64,
    dq: f64,
}

impl Field {
    fn ln_alpha_sq(&self, s: f64, r: f64, h: f64) -> f64 {
        h - self.p * (s / r).ln()
    }

    fn derivs(&self, s: f64, y: &[f64; 3]) -> Derivs {
        let m = self.m;
        let r = 2.0 * m + s;
        let phi = y[0];
        let (w, w_over_s, dh) = if self.sigma == 0.0 {
            (0.0, 0.0, 0.0)
        } else {
            let lw = self.ln_alpha_sq(s, r, y[1]);
            let w = self.sigma * lw.exp();
            let w_over_s = self.sigma * (lw - s.ln()).exp();
            let dh = -2.0 * (r * r * phi - m * self.p) / (s * r);
            (w, w_over_s, dh)
        };
        let u = 1.0 - w;
        Derivs {
            w,
            w_over_s,
            dphi: u / (r * r),
            dh,
            dq: 2.0 * r * phi * phi * w_over_s + u * u / (r * r),
        }
    }

    fn node(&self, s: f64, y: &[f64; 3]) -> Node {
        let m = self.m;
        let r = 2.0 * m + s;
        let phi = y[0];
        let d = self.derivs(s, y);
        let dw = -2.0 * r * phi * d.w_over_s;
        let d2phi = -dw / (r * r) - 2.0 * (1.0 - d.w) / (r * r * r);
        Node {
            s,
            r,
            phi,
            dphi: d.dphi,
            d2phi,
            alpha_sq: d.w,
            h: y[1],
            dh: d.dh,
            q: y[2],
            dq: d.dq,
        }
    }
}

impl OdeSystem<3> for Field {
    fn rhs(&self, s: f64, y: &[f64; 3]) -> [f64; 3] {
        let d = self.derivs(s, y);
        [d.dphi, d.dh, d.dq]
    }
}

/// Initial data at `r0 = 2m + epsilon`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Seed {
    pub r0: f64,
    pub s0: f64,
    pub phi: f64,
    pub dphi: f64,
    /// From the series of `alpha^2` itself, free of cancellation.
    pub alpha_sq: f64,
}

pub fn seed_initial_conditions(series: &HorizonSeries, epsilon: f64) -> Result<Seed> {
    let m = series.m();
    if !(epsilon > 0.0 && epsilon <= 0.01 * m) {
        return Err(SolverError::param(
            "epsilon",
            format!("must lie in (0, 0.01 m] = (0, {}], got {epsilon}", 0.01 * m),
        ));
    }
    if series.order() < 8 {
        return Err(SolverError::param(
            "series_order",
            format!("seeding needs order >= 8, got {}", series.order()),
        ));
    }
    let (phi, dphi) = series.eval(epsilon);
    Ok(Seed {
        r0: 2.0 * m + epsilon,
        s0: epsilon,
        phi,
        dphi,
        alpha_sq: series.eval_alpha_sq(epsilon),
    })
}

/// Configured outward integration at a given mass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhiIntegrator {
    pub m: f64,
    pub epsilon: f64,
    pub r_max: f64,
    pub tol: f64,
    pub series_order: usize,
}

impl PhiIntegrator {
    /// Defaults scaled to mass `m`.
    pub fn new(m: f64) -> Self {
        PhiIntegrator {
            m,
            epsilon: DEFAULT_EPSILON * m,
            r_max: DEFAULT_R_MAX * m,
            tol: DEFAULT_TOL,
            series_order: DEFAULT_SERIES_ORDER,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_mass("m", self.m)?;
        if !(self.tol >= 1e-14 && self.tol <= 1e-6) {
            return Err(SolverError::param("tol", format!("must lie in [1e-14, 1e-6], got {}", self.tol)));
        }
        if !(self.epsilon > 0.0 && self.epsilon <= 0.01 * self.m) {
            return Err(SolverError::param(
                "epsilon",
                format!("must lie in (0, 0.01 m], got {}", self.epsilon),
            ));
        }
        if !(self.r_max.is_finite() && self.r_max > 2.0 * self.m + self.epsilon) {
            return Err(SolverError::param(
                "r_max",
                format!("must exceed 2m + epsilon = {}, got {}", 2.0 * self.m + self.epsilon, self.r_max),
            ));
        }
        if self.series_order < 8 {
            return Err(SolverError::param("series_order", "must be at least 8"));
        }
        Ok(())
    }

    pub fn integrate_kappa(&self, kappa: f64) -> Result<RadialProfile> {
        if !kappa.is_finite() {
            return Err(SolverError::param("kappa", "must be finite"));
        }
        self.validate()?;
        let series = kappa_series(self.m, kappa, self.series_order)?;
        self.integrate_series(&series)
    }

    pub fn integrate_family(&self, p: i32, free_coeff: f64) -> Result<RadialProfile> {
        self.validate()?;
        let series = derive_horizon_series(self.m, p, free_coeff, self.series_order)?;
        self.integrate_series(&series)
    }

    pub fn integrate_series(&self, series: &HorizonSeries) -> Result<RadialProfile> {
        self.validate()?;
        if (series.m() - self.m).abs() > 1e-14 * self.m {
            return Err(SolverError::param("series", "series mass differs from the integrator mass"));
        }
        let m = self.m;
        let seed = seed_initial_conditions(series, self.epsilon)?;
        let w0 = seed.alpha_sq;
        let sigma = if w0 > 0.0 {
            1.0
        } else if w0 < 0.0 {
            -1.0
        } else {
            0.0
        };
        let p = series.p();
        let field = Field {
            m,
            p: p as f64,
            sigma,
        };
        let h0 = if sigma == 0.0 {
            0.0
        } else {
            w0.abs().ln() + field.p * (seed.s0 / seed.r0).ln()
        };
        let y0 = [seed.phi, h0, 0.0];
        let first = field.node(seed.s0, &y0);
        let c0 = series.alpha_sq_coeffs()[0];
        let monitor = Monitor {
            m,
            tol: self.tol,
            squeeze: p == -1,
        };

        let mut nodes = vec![first];
        let mut segments = Vec::new();
        let mut class = monitor.check(&first);
        if class.is_none() {
            let tolerances = Tolerances {
                atol: [self.tol; 3],
                rtol: [self.tol, 4.0 * f64::EPSILON, self.tol],
            };
            let mut solver = Dop853::new(tolerances);
            solver.dense_output = true;
            let s_end = self.r_max - 2.0 * m;
            let outcome = solver.integrate(&field, seed.s0, y0, s_end, |step| {
                let node = field.node(step.t, &step.y);
                let event = monitor.check(&node);
                if event.is_none() || node_is_finite(&node) {
                    nodes.push(node);
                    segments.push(step.dense.expect("dense output requested"));
                }
                match event {
                    Some(c) => {
                        class = Some(c);
                        ControlFlow::Break(())
                    }
                    None => ControlFlow::Continue(()),
                }
            });
            if class.is_none() {
                class = match outcome.termination {
                    Termination::Finished => monitor.squeeze_violation(&nodes),
                    Termination::Stopped => None,
                    Termination::StepUnderflow { t } | Termination::NonFinite { t } | Termination::MaxSteps { t } => {
                        let last = nodes.last().expect("seed node present");
                        Some(SolutionClass::Divergent {
                            witness_r: 2.0 * m + t,
                            phi: last.phi,
                            dphi: last.dphi,
                        })
                    }
                };
            }
        }
        let class = class.unwrap_or(if sigma == 0.0 && p != -1 {
            SolutionClass::Abelian
        } else {
            SolutionClass::FiniteAction
        });

        Ok(RadialProfile {
            m,
            p,
            family: Some(FamilyParams::general(m, p, series.free_coeff())),
            class,
            nodes,
            segments,
            sigma,
            series: Some(series.clone()),
            exact: None,
            tol: self.tol,
            epsilon: self.epsilon,
            horizon_flux: (1.0 - c0) * series.coeffs()[0],
        })
    }
}

fn node_is_finite(n: &Node) -> bool {
    n.phi.is_finite() && n.dphi.is_finite() && n.h.is_finite() && n.q.is_finite() && n.alpha_sq.is_finite()
}

struct Monitor {
    m: f64,
    tol: f64,
    squeeze: bool,
}

impl Monitor {
    fn check(&self, n: &Node) -> Option<SolutionClass> {
        let m = self.m;
        let divergent = SolutionClass::Divergent {
            witness_r: n.r,
            phi: n.phi,
            dphi: n.dphi,
        };
        if !node_is_finite(n) || n.phi.abs() > DIVERGENCE_PHI / m || n.dphi.abs() > DIVERGENCE_DPHI / (m * m) {
            return Some(divergent);
        }
        if n.alpha_sq < -TOL_ALPHA {
            return Some(SolutionClass::AlphaImaginary {
                witness_r: n.r,
                alpha_sq: n.alpha_sq,
            });
        }
        None
    }

    /// A `p = -1` solution that ends below the monopole curve is on its
    /// way to divergence; reports the first node where that shows.
    fn squeeze_violation(&self, nodes: &[Node]) -> Option<SolutionClass> {
        if !self.squeeze {
            return None;
        }
        let m = self.m;
        let below = |n: &Node| n.phi < -m / (n.r * n.r) - SQUEEZE_SLACK * self.tol * (n.r / m) / m;
        if !below(nodes.last()?) {
            return None;
        }
        let n = nodes.iter().find(|n| below(n))?;
        Some(SolutionClass::Divergent {
            witness_r: n.r,
            phi: n.phi,
            dphi: n.dphi,
        })
    }
}

/// Integrates the `p = -1` member with parameter `kappa` at mass one and
/// rescales the result to mass `m`. `epsilon` and `r_max` are lengths in
/// the same units as `m`.
pub fn integrate_phi(m: f64, kappa: f64, epsilon: f64, r_max: f64, tol: f64) -> Result<RadialProfile> {
    check_mass("m", m)?;
    let unit = PhiIntegrator {
        m: 1.0,
        epsilon: epsilon / m,
        r_max: r_max / m,
        tol,
        series_order: DEFAULT_SERIES_ORDER,
    };
    let profile = unit.integrate_kappa(kappa)?;
    Ok(if m == 1.0 { profile } else { profile.scaled(m) })
}

/// A solution sampled at the accepted integrator steps, interpolated by the
/// integrator's dense output in between.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialProfile {
    m: f64,
    p: i32,
    family: Option<FamilyParams>,
    class: SolutionClass,
    nodes: Vec<Node>,
    /// Continuous extension of `(phi, h, Q)` between consecutive nodes.
    segments: Vec<DenseSegment<3>>,
    sigma: f64,
    series: Option<HorizonSeries>,
    exact: Option<ClosedForm>,
    tol: f64,
    epsilon: f64,
    /// `(1 - alpha^2) phi` at the horizon.
    horizon_flux: f64,
}

impl RadialProfile {
    pub(crate) fn from_closed_form(cf: ClosedForm, r_max: f64, samples: usize) -> RadialProfile {
        let m = cf.m;
        let epsilon = DEFAULT_EPSILON * m;
        let (p, sigma, class, family) = match cf.kind {
            ClosedFormKind::TrivialAbelian => (0, 1.0, SolutionClass::Abelian, FamilyParams::general(m, 0, 0.0)),
            ClosedFormKind::Monopole => (-1, 1.0, SolutionClass::FiniteAction, FamilyParams::from_kappa(m, -3.0)),
            ClosedFormKind::AbelianDyon => {
                let p = (4.0 * m * cf.c - 2.0).round() as i32;
                (p, 0.0, SolutionClass::FiniteAction, FamilyParams::general(m, p, 0.0))
            }
        };
        let family = match cf.kind {
            ClosedFormKind::AbelianDyon if p == -1 => FamilyParams::from_kappa(m, -2.0),
            ClosedFormKind::AbelianDyon => FamilyParams {
                free_coeff: cf.horizon_taylor(crate::frobenius::forced_index(p))[crate::frobenius::forced_index(p)],
                ..family
            },
            _ => family,
        };
        let s_end = r_max - 2.0 * m;
        let flux = |st: &PointState| (1.0 - st.alpha_sq) * st.phi;
        let first = cf.eval_s(epsilon);
        let nodes = (0..samples)
            .map(|i| {
                let t = i as f64 / (samples - 1) as f64;
                let s = if i + 1 == samples {
                    s_end
                } else {
                    epsilon * (s_end / epsilon).powf(t)
                };
                let st = cf.eval_s(s);
                let w = st.alpha_sq;
                let r = st.r;
                let dw = -2.0 * r * st.phi * w / s;
                Node {
                    s,
                    r,
                    phi: st.phi,
                    dphi: st.dphi,
                    d2phi: -dw / (r * r) - 2.0 * (1.0 - w) / (r * r * r),
                    alpha_sq: w,
                    h: 0.0,
                    dh: 0.0,
                    q: flux(&st) - flux(&first),
                    dq: 2.0 * r * st.phi * st.phi * w / s + (1.0 - w) * (1.0 - w) / (r * r),
                }
            })
            .collect();
        let at_horizon = cf.eval_s(0.0);
        RadialProfile {
            m,
            p,
            family: Some(family),
            class,
            nodes,
            segments: Vec::new(),
            sigma,
            series: None,
            exact: Some(cf),
            tol: 0.0,
            epsilon,
            horizon_flux: flux(&at_horizon),
        }
    }

    pub fn m(&self) -> f64 {
        self.m
    }

    pub fn p(&self) -> i32 {
        self.p
    }

    pub fn family(&self) -> Option<&FamilyParams> {
        self.family.as_ref()
    }

    pub fn kappa(&self) -> Option<f64> {
        self.family.and_then(|f| f.kappa)
    }

    pub fn class(&self) -> SolutionClass {
        self.class
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn grid(&self) -> Vec<f64> {
        self.nodes.iter().map(|n| n.r).collect()
    }

    pub fn series(&self) -> Option<&HorizonSeries> {
        self.series.as_ref()
    }

    pub fn exact(&self) -> Option<&ClosedForm> {
        self.exact.as_ref()
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Sign of `alpha^2`, constant along the solution; zero when
    /// `alpha^2` vanishes identically.
    pub fn alpha_sign(&self) -> f64 {
        self.sigma
    }

    pub fn r_min(&self) -> f64 {
        self.nodes[0].r
    }

    pub fn r_max(&self) -> f64 {
        self.nodes[self.nodes.len() - 1].r
    }

    pub fn last(&self) -> &Node {
        &self.nodes[self.nodes.len() - 1]
    }

    /// `(1 - alpha^2) phi` at the horizon.
    pub fn horizon_flux(&self) -> f64 {
        self.horizon_flux
    }

    /// `(1 - alpha^2) phi` at the first node.
    pub fn seed_flux(&self) -> f64 {
        let n = &self.nodes[0];
        (1.0 - n.alpha_sq) * n.phi
    }

    pub fn eval(&self, r: f64) -> Result<PointState> {
        self.eval_s(r - 2.0 * self.m)
    }

    /// State at `s = r - 2m`. Below the first node the horizon series is
    /// used; beyond the last node is an error.
    pub fn eval_s(&self, s: f64) -> Result<PointState> {
        if let Some(cf) = &self.exact {
            if s >= 0.0 && s <= self.last().s * (1.0 + 1e-12) {
                return Ok(cf.eval_s(s));
            }
        }
        let Some(i) = self.locate(s)? else {
            let series = self.series.as_ref().expect("checked in locate");
            let (phi, dphi) = series.eval(s);
            return Ok(PointState {
                s,
                r: 2.0 * self.m + s,
                phi,
                dphi,
                alpha_sq: series.eval_alpha_sq(s),
            });
        };
        let y = self.segments[i].eval(s);
        let phi = y[0];
        let r = 2.0 * self.m + s;
        let alpha_sq = if self.sigma == 0.0 {
            0.0
        } else {
            self.sigma * (y[1] - self.p as f64 * (s / r).ln()).exp()
        };
        Ok(PointState {
            s,
            r,
            phi,
            dphi: (1.0 - alpha_sq) / (r * r),
            alpha_sq,
        })
    }

    /// `ln|alpha^2|` at `r`, which stays finite where `alpha^2` underflows.
    /// `None` when `alpha^2` vanishes identically.
    pub fn ln_abs_alpha_sq(&self, r: f64) -> Result<Option<f64>> {
        if self.sigma == 0.0 {
            return Ok(None);
        }
        let s = r - 2.0 * self.m;
        if self.exact.is_some() {
            let w = self.eval_s(s)?.alpha_sq;
            return Ok(Some(w.abs().ln()));
        }
        match self.locate(s)? {
            Some(i) => {
                let h = self.segments[i].eval(s)[1];
                Ok(Some(h - self.p as f64 * (s / r).ln()))
            }
            None => Ok(Some(self.eval_s(s)?.alpha_sq.abs().ln())),
        }
    }

    /// Cumulative action-density integral from the first node to `r`.
    pub fn flux_integral(&self, r: f64) -> Result<f64> {
        let s = r - 2.0 * self.m;
        if self.exact.is_some() {
            let flux = |st: PointState| (1.0 - st.alpha_sq) * st.phi;
            return Ok(flux(self.eval_s(s)?) - flux(self.eval_s(self.nodes[0].s)?));
        }
        match self.locate(s)? {
            Some(i) => Ok(self.segments[i].eval(s)[2]),
            None => Err(SolverError::param("r", "below the first node")),
        }
    }

    /// Index of the interval containing `s`. `None` means `s` lies at or
    /// below the first node and is served by the horizon series.
    fn locate(&self, s: f64) -> Result<Option<usize>> {
        let first = self.nodes[0].s;
        let last = self.last().s;
        if !(s <= last + 1e-12 * (last + 2.0 * self.m)) || !s.is_finite() {
            return Err(SolverError::param(
                "r",
                format!("r = {} outside the profile range (2m, {}]", s + 2.0 * self.m, self.r_max()),
            ));
        }
        let at_seed = s <= first * (1.0 + 1e-6);
        if s < first || (at_seed && self.nodes.len() == 1) {
            if s >= 0.0 && self.series.is_some() {
                return Ok(None);
            }
            return Err(SolverError::param(
                "r",
                format!("r = {} below the first node {}", s + 2.0 * self.m, self.r_min()),
            ));
        }
        if self.nodes.len() == 1 {
            return Err(SolverError::param("r", "profile holds a single node"));
        }
        let s = s.min(last);
        let idx = self.nodes.partition_point(|n| n.s <= s);
        Ok(Some(idx.saturating_sub(1).min(self.nodes.len() - 2)))
    }

    /// The same solution for mass `f * m`.
    pub fn scaled(&self, f: f64) -> RadialProfile {
        let class = match self.class {
            SolutionClass::Divergent { witness_r, phi, dphi } => SolutionClass::Divergent {
                witness_r: witness_r * f,
                phi: phi / f,
                dphi: dphi / (f * f),
            },
            SolutionClass::AlphaImaginary { witness_r, alpha_sq } => SolutionClass::AlphaImaginary {
                witness_r: witness_r * f,
                alpha_sq,
            },
            c => c,
        };
        let nodes = self
            .nodes
            .iter()
            .map(|n| Node {
                s: n.s * f,
                r: n.r * f,
                phi: n.phi / f,
                dphi: n.dphi / (f * f),
                d2phi: n.d2phi / (f * f * f),
                alpha_sq: n.alpha_sq,
                h: n.h,
                dh: n.dh / f,
                q: n.q / f,
                dq: n.dq / (f * f),
            })
            .collect();
        let m = self.m * f;
        let family = self.family.map(|fam| {
            let k = crate::frobenius::forced_index(fam.p) as i32;
            FamilyParams {
                free_coeff: fam.free_coeff / f.powi(k + 1),
                ..fam
            }
        });
        RadialProfile {
            m,
            p: self.p,
            family,
            class,
            nodes,
            segments: self.segments.iter().map(|g| g.scaled(f, &[1.0 / f, 1.0, 1.0 / f])).collect(),
            sigma: self.sigma,
            series: self.series.as_ref().map(|s| s.scaled(f)),
            exact: self.exact.map(|cf| ClosedForm {
                m,
                c: cf.c / f,
                ..cf
            }),
            tol: self.tol,
            epsilon: self.epsilon * f,
            horizon_flux: self.horizon_flux / f,
        }
    }
}

/// `alpha = sqrt(1 - r^2 phi')`, nonnegative.
pub fn alpha_of(profile: &RadialProfile, r: f64) -> Result<f64> {
    let st = profile.eval(r)?;
    if st.alpha_sq < -TOL_ALPHA {
        return Err(SolverError::AlphaImaginary {
            witness_r: r,
            alpha_sq: st.alpha_sq,
        });
    }
    Ok(st.alpha_sq.max(0.0).sqrt())
}

/// Large-`r` behaviour `phi ~ C - 1/r + (lambda / 2C) r^b exp(-k r)`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct AsymptoticFit {
    /// Midpoint of a certified bracket for `phi(infinity)`.
    pub c_kappa: f64,
    /// Half-width of that bracket.
    pub c_error: f64,
    /// `phi(R) + 1/R`, exact up to exponentially small terms for dyons.
    pub c_asymptotic: f64,
    pub lambda: Option<f64>,
    /// Fitted `k`, expected to equal `2 C`.
    pub decay_rate: Option<f64>,
    /// Power `b` of the prefactor.
    pub power: Option<f64>,
    /// Set when the tail falls off like a monopole (`r^2 phi' -> 0`); then
    /// `c_kappa = 0` and no exponential tail is fitted.
    pub monopole: bool,
}

/// Window on `rho` used for the exponential fit.
pub const FIT_WINDOW: (f64, f64) = (1e-12, 1e-3);

pub fn fit_asymptotics(profile: &RadialProfile) -> Result<AsymptoticFit> {
    if !profile.class().has_finite_action() {
        return Err(SolverError::NotFiniteAction(profile.class().tag().to_string()));
    }
    let m = profile.m();
    let big_r = profile.r_max();
    if big_r < 50.0 * m {
        return Err(SolverError::param("r_max", format!("asymptotic fit needs r_max >= 50 m, got {big_r}")));
    }
    let end = profile.eval(big_r)?;
    let c_error = 0.5 * (1.0 / big_r - m / (big_r * big_r));
    let c_asymptotic = end.phi + 1.0 / big_r;
    let u_end = 1.0 - end.alpha_sq;
    if u_end < 10.0 * 2.0 * m / big_r {
        return Ok(AsymptoticFit {
            c_kappa: 0.0,
            c_error,
            c_asymptotic,
            lambda: None,
            decay_rate: None,
            power: None,
            monopole: true,
        });
    }
    let mut c_kappa = end.phi + 0.5 * (1.0 / big_r + m / (big_r * big_r));
    let mut c_error = c_error;
    // Once phi > 0, alpha^2 decreases, so the tail beyond R is at most
    // alpha^2(R) / R.
    if end.phi > 0.0 && end.alpha_sq >= 0.0 {
        let half = 0.5 * end.alpha_sq / big_r;
        if half < c_error {
            c_kappa = c_asymptotic - half;
            c_error = half;
        }
    }
    let mut fit = AsymptoticFit {
        c_kappa,
        c_error,
        c_asymptotic,
        lambda: None,
        decay_rate: None,
        power: None,
        monopole: false,
    };
    if profile.alpha_sign() <= 0.0 || profile.exact().is_some() {
        return Ok(fit);
    }
    let rho = tail_residuals(profile)?;
    let nodes = profile.nodes();
    let Some(lo) = rho.iter().position(|&x| x <= FIT_WINDOW.1) else {
        return Ok(fit);
    };
    let Some(hi) = rho.iter().rposition(|&x| x >= FIT_WINDOW.0) else {
        return Ok(fit);
    };
    if hi <= lo || nodes[hi].r - nodes[lo].r < 4.0 * m {
        return Ok(fit);
    }
    let (r_a, r_b) = (nodes[lo].r, nodes[hi].r);
    let samples = 160;
    let mut rows = Vec::with_capacity(samples);
    let mut ys = Vec::with_capacity(samples);
    for j in 0..samples {
        let r = r_a + (r_b - r_a) * j as f64 / (samples - 1) as f64;
        let value = residual_at(profile, &rho, r)?;
        if value > 0.0 {
            rows.push([1.0, -r, r.ln()]);
            ys.push(value.ln());
        }
    }
    if rows.len() < 8 {
        return Ok(fit);
    }
    if let Some([a, k, b]) = least_squares(&rows, &ys) {
        fit.decay_rate = Some(k);
        fit.power = Some(b);
        fit.lambda = Some(2.0 * c_asymptotic * a.exp());
    }
    Ok(fit)
}

/// `rho(r) = phi(r) - phi(inf) + 1/r = int_r^inf alpha^2 / r'^2 dr'` at
/// every node, accumulated from the outer end.
fn tail_residuals(profile: &RadialProfile) -> Result<Vec<f64>> {
    let nodes = profile.nodes();
    let mut rho = vec![0.0; nodes.len()];
    for i in (0..nodes.len() - 1).rev() {
        rho[i] = rho[i + 1] + interval_tail(profile, nodes[i].r, nodes[i + 1].r)?;
    }
    Ok(rho)
}

fn interval_tail(profile: &RadialProfile, a: f64, b: f64) -> Result<f64> {
    let mut err = None;
    let v = gauss_legendre8(a, b, |r| match profile.eval(r) {
        Ok(st) => st.alpha_sq / (r * r),
        Err(e) => {
            err = Some(e);
            0.0
        }
    });
    match err {
        Some(e) => Err(e),
        None => Ok(v),
    }
}

fn residual_at(profile: &RadialProfile, rho: &[f64], r: f64) -> Result<f64> {
    let nodes = profile.nodes();
    let idx = nodes.partition_point(|n| n.r <= r).min(nodes.len() - 1).max(1);
    Ok(rho[idx] + interval_tail(profile, r, nodes[idx].r)?)
}

/// `d/dr[(1 - alpha^2) phi] = 2 r phi^2 alpha^2 / s + (1 - alpha^2)^2 / r^2`.
pub fn flux_derivative(st: &PointState) -> f64 {
    let u = 1.0 - st.alpha_sq;
    let cross = if st.alpha_sq == 0.0 {
        0.0
    } else {
        2.0 * st.r * st.phi * st.phi * st.alpha_sq / st.s
    };
    cross + u * u / (st.r * st.r)
}

/// Writes `r,phi,dphi,alpha` (plus `lagrangian_density` when requested) at
/// every node. `alpha` is `NaN` where `alpha^2 < -TOL_ALPHA`.
pub fn write_profile_csv<W: Write>(mut out: W, profile: &RadialProfile, with_density: bool) -> std::io::Result<()> {
    if with_density {
        writeln!(out, "r,phi,dphi,alpha,lagrangian_density")?;
    } else {
        writeln!(out, "r,phi,dphi,alpha")?;
    }
    for n in profile.nodes() {
        let alpha = if n.alpha_sq < -TOL_ALPHA {
            f64::NAN
        } else {
            n.alpha_sq.max(0.0).sqrt()
        };
        write!(out, "{},{},{},{}", fmt17(n.r), fmt17(n.phi), fmt17(n.dphi), fmt17(alpha))?;
        if with_density {
            write!(out, ",{}", fmt17(-n.dq / (8.0 * std::f64::consts::PI * std::f64::consts::PI)))?;
        }
        writeln!(out)?;
    }
    Ok(())
}
