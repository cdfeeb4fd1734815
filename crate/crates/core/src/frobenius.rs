//! Power series of `phi` about the horizon, `phi = sum a_k s^k` with
//! `s = r - 2m`, and the three classic closed-form solutions.
//!
//! In the shifted variable the field equation reads
//!
//! ```text
//! ((s + 2m)/2) s phi'' + s phi' - phi + (s + 2m)^2 phi' phi = 0.
//! ```
//!
//! Collecting `s^k` gives one equation per order in which `a_{k+1}` enters
//! linearly with coefficient `(k+1) m (k+p)`, where `a_0 = p/(4m)`. For
//! `p <= 0` that coefficient vanishes at `k = -p`: the order-`k` equation
//! then only constrains lower coefficients (compatibility) and `a_{1-p}`
//! is free. For `p >= 1` the series is unique.

use std::io::Write;
use std::ops::Neg;

use num_traits::{FromPrimitive, Num};

use crate::error::{Result, SolverError};
use crate::io::fmt17;
use crate::params::{check_mass, free_coeff_to_kappa, kappa_to_free_coeff};
use crate::profile::{PointState, RadialProfile};

/// Default truncation order for seeding the integrator.
pub const DEFAULT_SERIES_ORDER: usize = 12;

/// Field used by the coefficient recurrence. Implemented for `f64`; tests
/// also run the recurrence in exact rational arithmetic.
pub trait SeriesScalar: Clone + Num + FromPrimitive + Neg<Output = Self> {
    fn magnitude(&self) -> Self;
    /// Whether `residual` is zero up to the rounding of terms of size `scale`.
    fn negligible(residual: &Self, scale: &Self) -> bool;
    fn to_f64_lossy(&self) -> f64;
}

impl SeriesScalar for f64 {
    fn magnitude(&self) -> Self {
        self.abs()
    }

    fn negligible(residual: &Self, scale: &Self) -> bool {
        residual.abs() <= 1e-11 * scale.max(f64::MIN_POSITIVE)
    }

    fn to_f64_lossy(&self) -> f64 {
        *self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Incompatible<T> {
    pub order: usize,
    pub residual: T,
}

fn from_i64<T: FromPrimitive>(v: i64) -> T {
    T::from_i64(v).expect("small integer is representable")
}

/// Index of the coefficient fixed by the caller: the resonant index `1 - p`
/// for `p <= 0`, and `a_1` (which is then over-determined) for `p >= 1`.
pub fn forced_index(p: i32) -> usize {
    if p <= 0 {
        (1 - p) as usize
    } else {
        1
    }
}

/// Order-by-order elimination. Returns `a_0..=a_order`.
pub(crate) fn horizon_coefficients<T: SeriesScalar>(
    m: &T,
    p: i32,
    free: &T,
    order: usize,
) -> std::result::Result<Vec<T>, Incompatible<T>> {
    let four = from_i64::<T>(4);
    let mut a: Vec<T> = Vec::with_capacity(order + 1);
    a.push(from_i64::<T>(p as i64) / (four.clone() * m.clone()));
    let forced = forced_index(p);

    // P_j = sum_{i=0}^{j} (i+1) a_{i+1} a_{j-i}; `skip_top` leaves out i = j,
    // the only term that involves a_{j+1}.
    let cauchy = |a: &[T], j: i64, skip_top: bool| -> (T, T) {
        let mut sum = T::zero();
        let mut scale = T::zero();
        if j < 0 {
            return (sum, scale);
        }
        let j = j as usize;
        let top = if skip_top { j } else { j + 1 };
        for i in 0..top {
            let term = from_i64::<T>(i as i64 + 1) * a[i + 1].clone() * a[j - i].clone();
            scale = scale + term.magnitude();
            sum = sum + term;
        }
        (sum, scale)
    };

    for k in 0..order {
        let ki = k as i64;
        let lin_int = (ki + 1) * (ki + p as i64);
        let lin = from_i64::<T>(lin_int) * m.clone();

        let diag = from_i64::<T>((ki + 2) * (ki - 1) / 2) * a[k].clone();
        let (p2, s2) = cauchy(&a, ki - 2, false);
        let (p1, s1) = cauchy(&a, ki - 1, false);
        let (p0, s0) = cauchy(&a, ki, true);
        let four_m = four.clone() * m.clone();
        let four_m2 = four_m.clone() * m.clone();
        let rest = diag.clone() + p2 + four_m.clone() * p1 + four_m2.clone() * p0;
        let scale = diag.magnitude() + s2 + four_m * s1 + four_m2 * s0;

        if k + 1 == forced {
            let residual = lin * free.clone() + rest;
            let scale = scale + residual.magnitude();
            if !T::negligible(&residual, &scale) {
                return Err(Incompatible { order: k, residual });
            }
            a.push(free.clone());
        } else {
            if lin_int == 0 || lin.is_zero() {
                // Only the forced order may have a vanishing linear coefficient.
                return Err(Incompatible {
                    order: k,
                    residual: rest,
                });
            }
            a.push(-rest / lin);
        }
    }
    Ok(a)
}

/// Truncated horizon series of `phi` together with its resonance data.
#[derive(Debug, Clone, PartialEq)]
pub struct HorizonSeries {
    m: f64,
    p: i32,
    coeffs: Vec<f64>,
    resonance_index: Option<usize>,
    free_coeff: f64,
}

impl HorizonSeries {
    pub fn m(&self) -> f64 {
        self.m
    }

    pub fn p(&self) -> i32 {
        self.p
    }

    /// `a_0..=a_N`; `a_k` carries units `m^-(k+1)`.
    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    /// `1 - p` when `p <= 0`, absent otherwise.
    pub fn resonance_index(&self) -> Option<usize> {
        self.resonance_index
    }

    pub fn free_coeff(&self) -> f64 {
        self.free_coeff
    }

    pub fn kappa(&self) -> Option<f64> {
        (self.p == -1).then(|| free_coeff_to_kappa(self.m, self.free_coeff))
    }

    /// `(phi, phi')` at `s` by Horner's rule.
    pub fn eval(&self, s: f64) -> (f64, f64) {
        eval_series(self, s)
    }

    /// Coefficients of `alpha^2 = 1 - (s + 2m)^2 phi'` as a series in `s`.
    ///
    /// Evaluating this series directly avoids the cancellation in
    /// `1 - r^2 phi'` close to the horizon.
    pub fn alpha_sq_coeffs(&self) -> Vec<f64> {
        let n = self.coeffs.len();
        let d: Vec<f64> = (0..n - 1)
            .map(|k| (k as f64 + 1.0) * self.coeffs[k + 1])
            .collect();
        let m = self.m;
        let mut w = vec![0.0; d.len() + 2];
        for (k, &dk) in d.iter().enumerate() {
            w[k] -= 4.0 * m * m * dk;
            w[k + 1] -= 4.0 * m * dk;
            w[k + 2] -= dk;
        }
        w[0] += 1.0;
        // Orders above N-1 are incomplete; drop them.
        w.truncate(n - 1);
        w
    }

    pub fn eval_alpha_sq(&self, s: f64) -> f64 {
        self.alpha_sq_coeffs()
            .iter()
            .rev()
            .fold(0.0, |acc, &c| acc * s + c)
    }

    /// Series of the solution mapped by `(r, phi) -> (f r, phi / f)`.
    pub(crate) fn scaled(&self, f: f64) -> HorizonSeries {
        let mut pow = f;
        let coeffs = self
            .coeffs
            .iter()
            .map(|c| {
                let out = c / pow;
                pow *= f;
                out
            })
            .collect();
        let k = forced_index(self.p) as i32;
        HorizonSeries {
            m: self.m * f,
            p: self.p,
            coeffs,
            resonance_index: self.resonance_index,
            free_coeff: self.free_coeff / f.powi(k + 1),
        }
    }
}

/// Builds the horizon series of order `order` for winding `p`. The value
/// `free_coeff` is assigned to `a_{1-p}` for `p <= 0`. For `p >= 1` no
/// coefficient is free and `free_coeff` is imposed on `a_1`; anything but
/// the determined value `1/(4m^2)` fails the compatibility check.
pub fn derive_horizon_series(m: f64, p: i32, free_coeff: f64, order: usize) -> Result<HorizonSeries> {
    check_mass("m", m)?;
    if !free_coeff.is_finite() {
        return Err(SolverError::param("free_coeff", "must be finite"));
    }
    let forced = forced_index(p);
    if order < forced + 2 {
        return Err(SolverError::param(
            "order",
            format!("order {order} too small for p = {p}; need at least {}", forced + 2),
        ));
    }
    let coeffs = horizon_coefficients(&m, p, &free_coeff, order).map_err(|inc| {
        if inc.order + 1 == forced {
            SolverError::NoSeriesSolution {
                p,
                order: inc.order,
                residual: inc.residual,
            }
        } else {
            SolverError::Internal(format!(
                "linear coefficient vanished at order {} for p = {p}",
                inc.order
            ))
        }
    })?;
    Ok(HorizonSeries {
        m,
        p,
        coeffs,
        resonance_index: (p <= 0).then_some(forced),
        free_coeff,
    })
}

/// The `p = -1` member labelled by `kappa = 16 m^3 a_2`.
pub fn kappa_series(m: f64, kappa: f64, order: usize) -> Result<HorizonSeries> {
    derive_horizon_series(m, -1, kappa_to_free_coeff(m, kappa), order)
}

/// `(phi, phi')` of the truncated series. Only meaningful well inside the
/// radius of convergence, which does not exceed `2m` in general.
pub fn eval_series(series: &HorizonSeries, s: f64) -> (f64, f64) {
    let mut phi = 0.0;
    let mut dphi = 0.0;
    for &c in series.coeffs.iter().rev() {
        dphi = dphi * s + phi;
        phi = phi * s + c;
    }
    (phi, dphi)
}

/// Value of the coefficient at the forced index for the Abelian solution
/// `phi = (p+2)/(4m) - 1/r`, which is regular for every `p`.
pub fn abelian_free_coeff(m: f64, p: i32) -> f64 {
    let k = forced_index(p) as i32;
    -(1.0 / (2.0 * m)) * (-1.0 / (2.0 * m)).powi(k)
}

/// Writes `k,a_k` rows.
pub fn write_coefficients_csv<W: Write>(mut out: W, series: &HorizonSeries) -> std::io::Result<()> {
    writeln!(out, "k,a_k")?;
    for (k, c) in series.coeffs.iter().enumerate() {
        writeln!(out, "{k},{}", fmt17(*c))?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum ClosedFormKind {
    /// `phi = 0`, `alpha = 1`.
    TrivialAbelian,
    /// `phi = -m/r^2`, `alpha^2 = 1 - 2m/r`.
    Monopole,
    /// `phi = c - 1/r`, `alpha = 0`.
    AbelianDyon,
}

/// One of the three classic explicit solutions.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct ClosedForm {
    pub kind: ClosedFormKind,
    pub m: f64,
    /// Only used by `AbelianDyon`.
    pub c: f64,
}

impl ClosedForm {
    pub fn new(kind: ClosedFormKind, m: f64, c: f64) -> Result<Self> {
        check_mass("m", m)?;
        Ok(ClosedForm { kind, m, c })
    }

    /// The regular dyon, `c = 1/(4m)`, which is the `kappa = -2` member.
    pub fn regular_dyon(m: f64) -> Result<Self> {
        Self::new(ClosedFormKind::AbelianDyon, m, 0.25 / m)
    }

    pub fn eval(&self, r: f64) -> PointState {
        self.eval_s(r - 2.0 * self.m)
    }

    pub fn eval_s(&self, s: f64) -> PointState {
        let m = self.m;
        let r = 2.0 * m + s;
        let (phi, dphi, alpha_sq) = match self.kind {
            ClosedFormKind::TrivialAbelian => (0.0, 0.0, 1.0),
            ClosedFormKind::Monopole => (-m / (r * r), 2.0 * m / (r * r * r), s / r),
            ClosedFormKind::AbelianDyon => (self.c - 1.0 / r, 1.0 / (r * r), 0.0),
        };
        PointState {
            s,
            r,
            phi,
            dphi,
            alpha_sq,
        }
    }

    /// Action in units where the monopole has action one.
    pub fn action(&self) -> f64 {
        match self.kind {
            ClosedFormKind::TrivialAbelian => 0.0,
            ClosedFormKind::Monopole => 1.0,
            ClosedFormKind::AbelianDyon => 2.0,
        }
    }

    /// `phi(infinity)`.
    pub fn phi_infinity(&self) -> f64 {
        match self.kind {
            ClosedFormKind::AbelianDyon => self.c,
            _ => 0.0,
        }
    }

    /// Taylor coefficients of `phi` about the horizon.
    pub fn horizon_taylor(&self, order: usize) -> Vec<f64> {
        let m = self.m;
        let x = -1.0 / (2.0 * m);
        (0..=order)
            .map(|k| match self.kind {
                ClosedFormKind::TrivialAbelian => 0.0,
                ClosedFormKind::Monopole => -((k + 1) as f64) / (4.0 * m) * x.powi(k as i32),
                ClosedFormKind::AbelianDyon => {
                    let base = -(1.0 / (2.0 * m)) * x.powi(k as i32);
                    if k == 0 {
                        self.c + base
                    } else {
                        base
                    }
                }
            })
            .collect()
    }
}

/// Exact, evaluable profile of a closed-form solution, sampled on a
/// log-spaced grid out to `r = 10^4 m`.
pub fn closed_form(kind: ClosedFormKind, m: f64, c: f64) -> Result<RadialProfile> {
    let cf = ClosedForm::new(kind, m, c)?;
    Ok(RadialProfile::from_closed_form(cf, 1e4 * m, 512))
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigInt;
    use num_rational::BigRational;
    use num_traits::{Signed, ToPrimitive, Zero};

    impl SeriesScalar for BigRational {
        fn magnitude(&self) -> Self {
            self.abs()
        }
        fn negligible(residual: &Self, _scale: &Self) -> bool {
            residual.is_zero()
        }
        fn to_f64_lossy(&self) -> f64 {
            self.to_f64().unwrap()
        }
    }

    fn q(n: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(n), BigInt::from(d))
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1e-300)
    }

    #[test]
    fn low_order_coefficients_match_closed_expression() {
        for &kappa in &[-3.0, -2.5, -2.0, -1.0, 0.0, 1.7] {
            let s = kappa_series(1.0, kappa, 4).unwrap();
            let a = s.coeffs();
            assert_eq!(a[0], -0.25);
            assert_eq!(a[1], 0.25);
            assert_eq!(a[2], kappa / 16.0);
            assert!(close(a[3], -(kappa + 1.0) / 16.0, 1e-14) || a[3] == 0.0);
            let a4 = -(kappa * kappa - 7.0 * kappa - 10.0) / 256.0;
            assert!((a[4] - a4).abs() <= 1e-15 * a4.abs().max(1e-3), "kappa {kappa}");
        }
    }

    #[test]
    fn exact_rational_recurrence_matches_closed_expression() {
        // kappa = -5/2 at m = 1 and m = 3.
        for m in [1i64, 3] {
            let mq = q(m, 1);
            let kappa = q(-5, 2);
            let a2 = kappa.clone() / (q(16, 1) * mq.clone() * mq.clone() * mq.clone());
            let a = horizon_coefficients(&mq, -1, &a2, 6).unwrap();
            let m3 = mq.clone() * mq.clone() * mq.clone();
            assert_eq!(a[3], -(kappa.clone() + q(1, 1)) / (q(16, 1) * m3.clone() * mq.clone()));
            let num = kappa.clone() * kappa.clone() - q(7, 1) * kappa.clone() - q(10, 1);
            assert_eq!(a[4], -num / (q(256, 1) * m3.clone() * mq.clone() * mq.clone()));
        }
    }

    #[test]
    fn closed_forms_are_reproduced() {
        let mono = ClosedForm::new(ClosedFormKind::Monopole, 1.0, 0.0).unwrap();
        let dyon = ClosedForm::regular_dyon(1.0).unwrap();
        for (kappa, cf) in [(-3.0, mono), (-2.0, dyon)] {
            let s = kappa_series(1.0, kappa, 24).unwrap();
            let taylor = cf.horizon_taylor(24);
            for (k, (a, t)) in s.coeffs().iter().zip(&taylor).enumerate() {
                assert!((a - t).abs() <= 1e-15 * t.abs(), "kappa {kappa} k {k}: {a} vs {t}");
            }
        }
        let a = kappa_series(1.0, -3.0, 4).unwrap();
        assert_eq!(a.coeffs(), &[-0.25, 0.25, -3.0 / 16.0, 0.125, -5.0 / 64.0]);
        let a = kappa_series(1.0, -2.0, 4).unwrap();
        assert_eq!(a.coeffs(), &[-0.25, 0.25, -0.125, 0.0625, -0.03125]);
    }

    #[test]
    fn resonance_sits_at_one_minus_p() {
        for (p, idx) in [(-2, 3usize), (-1, 2), (0, 1)] {
            let s = derive_horizon_series(1.0, p, 0.123, idx + 4).unwrap();
            assert_eq!(s.resonance_index(), Some(idx));
            assert_eq!(s.coeffs()[idx], 0.123);
        }
        for p in [-4, -3] {
            let s = derive_horizon_series(1.0, p, 0.5, 10).unwrap();
            assert_eq!(s.resonance_index(), Some((1 - p) as usize));
        }
    }

    #[test]
    fn positive_p_admits_only_the_abelian_series() {
        for p in [1, 2, 3] {
            let ab = abelian_free_coeff(1.0, p);
            assert_eq!(ab, 0.25);
            let s = derive_horizon_series(1.0, p, ab, 10).unwrap();
            assert_eq!(s.resonance_index(), None);
            let cf = ClosedForm::new(ClosedFormKind::AbelianDyon, 1.0, (p as f64 + 2.0) / 4.0).unwrap();
            for (a, t) in s.coeffs().iter().zip(cf.horizon_taylor(10)) {
                assert!((a - t).abs() <= 1e-15 * t.abs().max(1.0));
            }
            for dev in [1e-3, -1e-3, 1.0, -50.0] {
                let err = derive_horizon_series(1.0, p, ab + dev, 10).unwrap_err();
                assert!(matches!(err, SolverError::NoSeriesSolution { p: pp, order: 0, .. } if pp == p));
            }
        }
    }

    #[test]
    fn order_precondition() {
        assert!(kappa_series(1.0, -2.5, 3).is_err());
        assert!(kappa_series(1.0, -2.5, 4).is_ok());
        assert!(derive_horizon_series(0.0, -1, 0.1, 8).is_err());
    }

    #[test]
    fn eval_at_origin_returns_leading_terms() {
        let s = kappa_series(2.0, -2.5, 12).unwrap();
        let (phi, dphi) = s.eval(0.0);
        assert_eq!(phi, -1.0 / 8.0);
        assert_eq!(dphi, 1.0 / 16.0);
    }

    #[test]
    fn eval_matches_monopole() {
        let s = kappa_series(1.0, -3.0, 20).unwrap();
        let (phi, dphi) = s.eval(0.5);
        assert!((phi + 1.0 / 6.25).abs() <= 1e-8);
        assert!((dphi - 2.0 / 2.5f64.powi(3)).abs() <= 1e-8);
    }

    #[test]
    fn eval_small_s_is_converged() {
        let lo = kappa_series(1.0, -2.5, 12).unwrap();
        let hi = kappa_series(1.0, -2.5, 24).unwrap();
        let (a, da) = lo.eval(1e-6);
        let (b, db) = hi.eval(1e-6);
        assert!((a - b).abs() <= 1e-15);
        assert!((da - db).abs() <= 1e-15);
    }

    #[test]
    fn alpha_sq_series_is_exact_for_closed_forms() {
        let dyon = kappa_series(1.0, -2.0, 12).unwrap();
        assert!(dyon.alpha_sq_coeffs().iter().all(|&c| c == 0.0));
        let mono = kappa_series(1.0, -3.0, 12).unwrap();
        let s = 1e-3;
        let expect = s / (2.0 + s);
        assert!((mono.eval_alpha_sq(s) - expect).abs() <= 1e-17);
        // leading behaviour -(kappa+2) s / 2
        let gen = kappa_series(1.0, -2.6, 12).unwrap();
        assert!((gen.alpha_sq_coeffs()[1] - 0.3).abs() < 1e-15);
    }

    /// Field-equation residual of a polynomial in exact arithmetic.
    fn ode_residual_rational(a: &[BigRational], m: &BigRational, s: &BigRational) -> BigRational {
        let mut phi = BigRational::zero();
        let mut d1 = BigRational::zero();
        let mut d2 = BigRational::zero();
        for (k, c) in a.iter().enumerate() {
            let k = k as i64;
            phi += c.clone() * pow(s, k);
            if k >= 1 {
                d1 += c.clone() * q(k, 1) * pow(s, k - 1);
            }
            if k >= 2 {
                d2 += c.clone() * q(k * (k - 1), 1) * pow(s, k - 2);
            }
        }
        let two_m = q(2, 1) * m.clone();
        let r = s.clone() + two_m.clone();
        (r.clone() / q(2, 1)) * s.clone() * d2 + s.clone() * d1.clone() - phi.clone() + r.clone() * r * d1 * phi
    }

    fn pow(x: &BigRational, k: i64) -> BigRational {
        let mut out = q(1, 1);
        for _ in 0..k {
            out *= x.clone();
        }
        out
    }

    #[test]
    fn truncation_residual_scales_like_s_to_the_order() {
        let m = q(1, 1);
        for kappa in [q(-3, 1), q(-5, 2), q(-2, 1)] {
            let a2 = kappa.clone() / q(16, 1);
            let a = horizon_coefficients(&m, -1, &a2, 12).unwrap();
            let pts: Vec<(f64, f64)> = [q(1, 10), q(1, 20), q(1, 40), q(1, 80), q(1, 160)]
                .iter()
                .map(|s| {
                    let res = ode_residual_rational(&a, &m, s).abs();
                    (s.to_f64().unwrap().ln(), res.to_f64().unwrap().ln())
                })
                .collect();
            let slope = crate::stats::linear_fit(&pts).slope;
            assert!(slope >= 11.5, "kappa {kappa}: fitted exponent {slope}");
            // and the bound |res| <= C s^12 holds with the C seen at s = 0.1
            let c = pts[0].1 - 12.0 * pts[0].0;
            for (ls, lr) in &pts {
                assert!(*lr <= c + 12.0 * ls + 1e-9);
            }
        }
    }

    #[test]
    fn float_recurrence_tracks_rational_one() {
        let m = q(1, 1);
        let kappa = -2.3f64;
        let a2f = kappa / 16.0;
        let a2q = BigRational::from_float(a2f).unwrap();
        let exact = horizon_coefficients(&m, -1, &a2q, 20).unwrap();
        let float = kappa_series(1.0, kappa, 20).unwrap();
        for (k, (e, f)) in exact.iter().zip(float.coeffs()).enumerate() {
            let e = e.to_f64().unwrap();
            assert!((e - f).abs() <= 1e-13 * e.abs().max(1e-6), "k {k}: {e} vs {f}");
        }
    }

    #[test]
    fn coefficient_csv_has_header() {
        let s = kappa_series(1.0, -3.0, 4).unwrap();
        let mut buf = Vec::new();
        write_coefficients_csv(&mut buf, &s).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "k,a_k");
        assert_eq!(lines.len(), 6);
        assert_eq!(lines[1], "0,-2.5000000000000000e-1");
    }

    #[test]
    fn closed_form_values() {
        let mono = ClosedForm::new(ClosedFormKind::Monopole, 2.0, 0.0).unwrap();
        let h = mono.eval(4.0);
        assert_eq!(h.phi, -1.0 / 8.0);
        assert_eq!(h.alpha_sq, 0.0);
        let dyon = ClosedForm::regular_dyon(2.0).unwrap();
        assert!((dyon.eval(1e12).phi - 0.125).abs() < 1e-11);
        let triv = ClosedForm::new(ClosedFormKind::TrivialAbelian, 1.0, 0.0).unwrap();
        let st = triv.eval(7.0);
        assert_eq!((st.phi, st.alpha_sq, triv.action()), (0.0, 1.0, 0.0));
    }
}
