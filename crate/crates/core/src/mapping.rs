//! Series of `phi` in the compactified variable
//! `omega = ((1 + s/R)^(1/a) - 1) / ((1 + s/R)^(1/a) + 1)`.
//!
//! For the default map `(R, a) = (m, 1)`, `omega = 1 - 2m/r` sends the
//! horizon to `0` and infinity to `1`, and `phi = (1/m) sum b_n omega^n`
//! with `psi = sum b_n omega^n` solving
//!
//! ```text
//! (omega - 1)^2 omega psi'' + 4 psi psi' - 2 psi = 0.
//! ```

use std::io::Write;

use crate::error::{Result, SolverError};
use crate::frobenius::SeriesScalar;
use crate::io::fmt17;
use crate::params::check_mass;
use crate::stats::linear_fit;

/// Order for interactive use.
pub const DEFAULT_MAP_ORDER: usize = 2000;
/// Order that resolves the solution up to `r = 20 m` to plotting accuracy.
pub const FIGURE_MAP_ORDER: usize = 30000;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct MapParams {
    /// Length scale of the map.
    pub big_r: f64,
    /// Exponent, `a > 0`.
    pub a: f64,
}

impl MapParams {
    pub fn new(big_r: f64, a: f64) -> Result<Self> {
        if !(big_r.is_finite() && big_r > 0.0) {
            return Err(SolverError::param("R", format!("must be positive, got {big_r}")));
        }
        if !(a.is_finite() && a > 0.0) {
            return Err(SolverError::param("a", format!("must be positive, got {a}")));
        }
        Ok(MapParams { big_r, a })
    }

    /// `(R, a) = (m, 1)`.
    pub fn for_mass(m: f64) -> Self {
        MapParams { big_r: m, a: 1.0 }
    }
}

pub fn omega_of_s(s: f64, params: &MapParams) -> Result<f64> {
    if !(s >= 0.0) {
        return Err(SolverError::param("s", format!("must be nonnegative, got {s}")));
    }
    if s == f64::INFINITY {
        return Ok(1.0);
    }
    let x = s / params.big_r;
    if params.a == 1.0 {
        return Ok(x / (x + 2.0));
    }
    // t = (1 + x)^(1/a) - 1
    let t = (x.ln_1p() / params.a).exp_m1();
    if t.is_infinite() {
        return Ok(1.0);
    }
    Ok(t / (t + 2.0))
}

pub fn s_of_omega(omega: f64, params: &MapParams) -> Result<f64> {
    if omega >= 1.0 {
        return Err(SolverError::Domain(omega));
    }
    if !(omega >= 0.0) {
        return Err(SolverError::param("omega", format!("must lie in [0, 1), got {omega}")));
    }
    if params.a == 1.0 {
        return Ok(params.big_r * 2.0 * omega / (1.0 - omega));
    }
    // ((1 + w)/(1 - w))^a - 1
    let log_ratio = omega.ln_1p() - (-omega).ln_1p();
    Ok(params.big_r * (params.a * log_ratio).exp_m1())
}

/// Coefficients `b_0..=b_N` of `psi`.
#[derive(Debug, Clone, PartialEq)]
pub struct MappedSeries {
    m: f64,
    kappa: f64,
    b: Vec<f64>,
}

impl MappedSeries {
    pub fn m(&self) -> f64 {
        self.m
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.b
    }

    pub fn order(&self) -> usize {
        self.b.len() - 1
    }
}

/// Coefficients in any exact or floating scalar type.
///
/// `b_0..b_3` are fixed by regularity and `kappa`; the rest follow from
///
/// ```text
/// (n^2 - 1) b_{n+1} = 2 b_n (n(n-1) + 1) - b_{n-1} (n-1)(n-2)
///                     - 4 sum_{q=0}^{n-1} (q+1) b_{n-q} b_{q+1},   n >= 3.
/// ```
pub fn map_recurrence<T: SeriesScalar>(kappa: &T, order: usize) -> Vec<T> {
    let int = |v: i64| T::from_i64(v).expect("small integer");
    let mut b = Vec::with_capacity(order + 1);
    b.push(int(-1) / int(4));
    b.push(int(1) / int(2));
    b.push((kappa.clone() + int(2)) / int(4));
    b.push(T::zero());
    b.truncate(order + 1);
    for n in 3..order {
        let mut conv = T::zero();
        for q in 0..n {
            conv = conv + T::from_usize(q + 1).expect("index") * b[n - q].clone() * b[q + 1].clone();
        }
        let nn = n as i64;
        let num = int(2) * b[n].clone() * int(nn * (nn - 1) + 1) - b[n - 1].clone() * int((nn - 1) * (nn - 2)) - int(4) * conv;
        b.push(num / int(nn * nn - 1));
    }
    b
}

fn map_recurrence_f64(kappa: f64, order: usize) -> Vec<f64> {
    let mut b = vec![-0.25, 0.5, (kappa + 2.0) / 4.0, 0.0];
    b.truncate(order + 1);
    for n in 3..order {
        // sum_{q=0}^{n-1} (q+1) b_{n-q} b_{q+1}
        let head = &b[1..=n];
        let conv: f64 = head
            .iter()
            .rev()
            .zip(head)
            .enumerate()
            .map(|(q, (x, y))| (q + 1) as f64 * x * y)
            .sum();
        let nf = n as f64;
        let num = 2.0 * b[n] * (nf * (nf - 1.0) + 1.0) - b[n - 1] * (nf - 1.0) * (nf - 2.0) - 4.0 * conv;
        b.push(num / (nf * nf - 1.0));
    }
    b
}

pub fn mapping_coefficients(m: f64, kappa: f64, order: usize) -> Result<MappedSeries> {
    check_mass("m", m)?;
    if !kappa.is_finite() {
        return Err(SolverError::param("kappa", "must be finite"));
    }
    if order < 5 {
        return Err(SolverError::param("order", format!("must be at least 5, got {order}")));
    }
    Ok(MappedSeries {
        m,
        kappa,
        b: map_recurrence_f64(kappa, order),
    })
}

/// `(phi, phi')` at `r >= 2m` by Horner's rule in `omega = 1 - 2m/r`.
pub fn eval_mapped(series: &MappedSeries, r: f64) -> Result<(f64, f64)> {
    let m = series.m;
    let s = r - 2.0 * m;
    if !(s >= 0.0) {
        return Err(SolverError::param("r", format!("must be at least 2m = {}, got {r}", 2.0 * m)));
    }
    let omega = s / r;
    let mut psi = 0.0;
    let mut dpsi = 0.0;
    for &b in series.b.iter().rev() {
        dpsi = dpsi * omega + psi;
        psi = psi * omega + b;
    }
    // d omega / dr = 2m / r^2
    Ok((psi / m, dpsi * 2.0 / (r * r)))
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct CoefficientDiagnostics {
    pub order: usize,
    /// `max |b_n|` over `n < N/2`.
    pub leading_max: f64,
    /// `max |b_n|` over `N/2 <= n <= N`.
    pub trailing_max: f64,
    /// Slope of `log10 |b_n|` against `n` over the trailing half; `None`
    /// when all trailing coefficients vanish.
    pub decay_trend: Option<f64>,
    /// Trailing coefficients do not stay below the leading ones.
    pub unreliable: bool,
}

impl CoefficientDiagnostics {
    /// Geometric estimate of the truncation error at `omega`, treating
    /// `trailing_max` as a bound on every dropped coefficient.
    pub fn tail_bound(&self, omega: f64) -> f64 {
        if self.trailing_max == 0.0 {
            return 0.0;
        }
        if !(omega < 1.0) {
            return f64::INFINITY;
        }
        self.trailing_max * omega.powi(self.order as i32 + 1) / (1.0 - omega)
    }
}

pub fn coefficient_diagnostics(series: &MappedSeries) -> Result<CoefficientDiagnostics> {
    let n = series.order();
    if n < 100 {
        return Err(SolverError::param("order", format!("diagnostics need N >= 100, got {n}")));
    }
    let half = n / 2;
    let b = &series.b;
    let leading_max = b[..half].iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
    let trailing_max = b[half..].iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
    let finite = b.iter().all(|x| x.is_finite());
    let points: Vec<(f64, f64)> = b[half..]
        .iter()
        .enumerate()
        .filter(|(_, x)| **x != 0.0 && x.is_finite())
        .map(|(i, x)| ((half + i) as f64, x.abs().log10()))
        .collect();
    let decay_trend = (points.len() >= 2).then(|| linear_fit(&points).slope);
    Ok(CoefficientDiagnostics {
        order: n,
        leading_max,
        trailing_max,
        decay_trend,
        unreliable: !finite || trailing_max.is_nan() || trailing_max >= leading_max,
    })
}

/// Writes `n,b_n` rows.
pub fn write_coefficients_csv<W: Write>(mut out: W, series: &MappedSeries) -> std::io::Result<()> {
    writeln!(out, "n,b_n")?;
    for (n, b) in series.b.iter().enumerate() {
        writeln!(out, "{n},{}", fmt17(*b))?;
    }
    Ok(())
}
