//! Adaptive explicit Runge–Kutta integration with the Dormand–Prince 8(5,3)
//! embedded pair.
//!
//! The integrator is deliberately small: it advances a fixed-size state,
//! hands every accepted step to an observer (which may stop the run), and
//! reports how the run ended. On request every accepted step also carries
//! the seventh-order continuous extension of the pair.

use std::ops::ControlFlow;

/// Right-hand side of `y' = f(t, y)`.
pub trait OdeSystem<const N: usize> {
    fn rhs(&self, t: f64, y: &[f64; N]) -> [f64; N];
}

/// Per-component error weights: the local error of component `i` is
/// measured against `atol[i] + rtol[i] * |y_i|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances<const N: usize> {
    pub atol: [f64; N],
    pub rtol: [f64; N],
}

impl<const N: usize> Tolerances<N> {
    pub fn uniform(tol: f64) -> Self {
        Tolerances {
            atol: [tol; N],
            rtol: [tol; N],
        }
    }
}

/// An accepted step.
#[derive(Debug, Clone, Copy)]
pub struct Step<const N: usize> {
    pub t: f64,
    pub y: [f64; N],
    pub dy: [f64; N],
    pub h: f64,
    pub dense: Option<DenseSegment<N>>,
}

/// Continuous extension over one accepted step `[t_old, t_old + h]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DenseSegment<const N: usize> {
    pub t_old: f64,
    pub h: f64,
    pub y_old: [f64; N],
    pub coeffs: [[f64; N]; 7],
}

impl<const N: usize> DenseSegment<N> {
    pub fn eval(&self, t: f64) -> [f64; N] {
        let x = (t - self.t_old) / self.h;
        let mut y = [0.0; N];
        for (i, c) in self.coeffs.iter().rev().enumerate() {
            let w = if i % 2 == 0 { x } else { 1.0 - x };
            for j in 0..N {
                y[j] = (y[j] + c[j]) * w;
            }
        }
        for j in 0..N {
            y[j] += self.y_old[j];
        }
        y
    }

    /// Same segment with time scaled by `ft` and component `j` by `fy[j]`.
    pub fn scaled(&self, ft: f64, fy: &[f64; N]) -> Self {
        let mut out = *self;
        out.t_old *= ft;
        out.h *= ft;
        for j in 0..N {
            out.y_old[j] *= fy[j];
            for c in out.coeffs.iter_mut() {
                c[j] *= fy[j];
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Termination {
    /// `t_end` was reached.
    Finished,
    /// The observer asked to stop.
    Stopped,
    /// The step size collapsed below the floating-point resolution of `t`.
    StepUnderflow { t: f64 },
    /// The right-hand side or the state became non-finite.
    NonFinite { t: f64 },
    MaxSteps { t: f64 },
}

#[derive(Debug, Clone, Copy)]
pub struct Outcome<const N: usize> {
    pub termination: Termination,
    pub last: Step<N>,
    pub accepted: usize,
    pub rejected: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct Dop853<const N: usize> {
    pub tolerances: Tolerances<N>,
    pub max_steps: usize,
    /// Optional first step; chosen automatically when `None`.
    pub first_step: Option<f64>,
    /// Attach a [`DenseSegment`] to every accepted step (three extra
    /// right-hand side evaluations per step).
    pub dense_output: bool,
}

const SAFETY: f64 = 0.9;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 10.0;
const ERROR_EXPONENT: f64 = -1.0 / 8.0;

impl<const N: usize> Dop853<N> {
    pub fn new(tolerances: Tolerances<N>) -> Self {
        Dop853 {
            tolerances,
            max_steps: 2_000_000,
            first_step: None,
            dense_output: false,
        }
    }

    fn scale(&self, y: &[f64; N], y_new: &[f64; N]) -> [f64; N] {
        let mut sc = [0.0; N];
        for i in 0..N {
            sc[i] = self.tolerances.atol[i]
                + self.tolerances.rtol[i] * y[i].abs().max(y_new[i].abs());
        }
        sc
    }

    fn rms(v: &[f64; N], sc: &[f64; N]) -> f64 {
        let sum: f64 = v.iter().zip(sc).map(|(x, s)| (x / s) * (x / s)).sum();
        (sum / N as f64).sqrt()
    }

    /// Hairer's starting step heuristic for an eighth-order method.
    fn initial_step<S: OdeSystem<N>>(
        &self,
        sys: &S,
        t0: f64,
        y0: &[f64; N],
        f0: &[f64; N],
        span: f64,
    ) -> f64 {
        let sc = self.scale(y0, y0);
        let d0 = Self::rms(y0, &sc);
        let d1 = Self::rms(f0, &sc);
        let h0 = if d0 < 1e-5 || d1 < 1e-5 {
            1e-6
        } else {
            0.01 * d0 / d1
        }
        .min(span);
        let mut y1 = [0.0; N];
        for i in 0..N {
            y1[i] = y0[i] + h0 * f0[i];
        }
        let f1 = sys.rhs(t0 + h0, &y1);
        let mut diff = [0.0; N];
        for i in 0..N {
            diff[i] = f1[i] - f0[i];
        }
        let d2 = Self::rms(&diff, &sc) / h0;
        let h1 = if d1 <= 1e-15 && d2 <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / d1.max(d2)).powf(1.0 / 8.0)
        };
        (100.0 * h0).min(h1).min(span)
    }

    /// Integrates from `t0` to `t_end > t0`, calling `observer` after every
    /// accepted step.
    pub fn integrate<S, F>(
        &self,
        sys: &S,
        t0: f64,
        y0: [f64; N],
        t_end: f64,
        mut observer: F,
    ) -> Outcome<N>
    where
        S: OdeSystem<N>,
        F: FnMut(&Step<N>) -> ControlFlow<()>,
    {
        let mut t = t0;
        let mut y = y0;
        let mut f = sys.rhs(t, &y);
        let mut last = Step {
            t,
            y,
            dy: f,
            h: 0.0,
            dense: None,
        };
        let mut accepted = 0;
        let mut rejected = 0;
        let finish = |termination, last, accepted, rejected| Outcome {
            termination,
            last,
            accepted,
            rejected,
        };

        if !all_finite(&y) || !all_finite(&f) {
            return finish(Termination::NonFinite { t }, last, 0, 0);
        }
        let mut h_abs = self
            .first_step
            .unwrap_or_else(|| self.initial_step(sys, t, &y, &f, t_end - t0));

        let mut k = [[0.0; N]; 13];
        while t < t_end {
            if accepted >= self.max_steps {
                return finish(Termination::MaxSteps { t }, last, accepted, rejected);
            }
            let min_step = 10.0 * (next_up(t) - t);
            let mut step_rejected = false;
            let (t_new, y_new, f_new) = loop {
                if h_abs < min_step {
                    return finish(Termination::StepUnderflow { t }, last, accepted, rejected);
                }
                let mut t_new = t + h_abs;
                if t_new > t_end {
                    t_new = t_end;
                }
                let h = t_new - t;
                let y_new = stages(sys, t, &y, &f, h, &mut k);
                let f_new = sys.rhs(t_new, &y_new);
                k[12] = f_new;
                if !all_finite(&y_new) || !all_finite(&f_new) {
                    // Shrink and retry; a genuine blow-up ends in underflow.
                    h_abs *= MIN_FACTOR;
                    rejected += 1;
                    step_rejected = true;
                    continue;
                }
                let sc = self.scale(&y, &y_new);
                let err = error_norm(&k, h, &sc);
                if err < 1.0 {
                    let mut factor = if err == 0.0 {
                        MAX_FACTOR
                    } else {
                        (SAFETY * err.powf(ERROR_EXPONENT)).min(MAX_FACTOR)
                    };
                    if step_rejected {
                        factor = factor.min(1.0);
                    }
                    h_abs = h * factor;
                    break (t_new, y_new, f_new);
                }
                h_abs = h * (SAFETY * err.powf(ERROR_EXPONENT)).max(MIN_FACTOR);
                rejected += 1;
                step_rejected = true;
            };
            let h = t_new - t;
            let dense = self.dense_output.then(|| dense_segment(sys, t, &y, &y_new, h, &mut k));
            t = t_new;
            y = y_new;
            f = f_new;
            accepted += 1;
            last = Step { t, y, dy: f, h, dense };
            if observer(&last).is_break() {
                return finish(Termination::Stopped, last, accepted, rejected);
            }
        }
        finish(Termination::Finished, last, accepted, rejected)
    }
}

fn all_finite<const N: usize>(v: &[f64; N]) -> bool {
    v.iter().all(|x| x.is_finite())
}

fn next_up(t: f64) -> f64 {
    if t.is_nan() || t == f64::INFINITY {
        return t;
    }
    if t == 0.0 {
        return f64::from_bits(1);
    }
    let bits = t.to_bits();
    if t > 0.0 {
        f64::from_bits(bits + 1)
    } else {
        f64::from_bits(bits - 1)
    }
}

/// Evaluates the twelve stages and returns the eighth-order solution.
/// `k[0]` must hold `f(t, y)` on entry.
fn stages<S: OdeSystem<N>, const N: usize>(
    sys: &S,
    t: f64,
    y: &[f64; N],
    f: &[f64; N],
    h: f64,
    k: &mut [[f64; N]; 13],
) -> [f64; N] {
    k[0] = *f;
    for s in 1..12 {
        let mut ys = *y;
        for (j, &a) in A[s].iter().enumerate().take(s) {
            if a != 0.0 {
                for i in 0..N {
                    ys[i] += h * a * k[j][i];
                }
            }
        }
        k[s] = sys.rhs(t + C[s] * h, &ys);
    }
    let mut y_new = *y;
    for (j, &b) in B.iter().enumerate() {
        if b != 0.0 {
            for i in 0..N {
                y_new[i] += h * b * k[j][i];
            }
        }
    }
    y_new
}

/// Builds the continuous extension from the stages of an accepted step.
/// `k[0..13]` must hold the stages including `f(t + h, y_new)`.
fn dense_segment<S: OdeSystem<N>, const N: usize>(
    sys: &S,
    t: f64,
    y: &[f64; N],
    y_new: &[f64; N],
    h: f64,
    k: &mut [[f64; N]; 13],
) -> DenseSegment<N> {
    let mut kx = [[0.0; N]; 16];
    kx[..13].copy_from_slice(&k[..]);
    for (e, (row, c)) in A_EXTRA.iter().zip(C_EXTRA).enumerate() {
        let s = 13 + e;
        let mut ys = *y;
        for (j, &a) in row.iter().enumerate().take(s) {
            if a != 0.0 {
                for i in 0..N {
                    ys[i] += h * a * kx[j][i];
                }
            }
        }
        kx[s] = sys.rhs(t + c * h, &ys);
    }
    let mut coeffs = [[0.0; N]; 7];
    for i in 0..N {
        let dy = y_new[i] - y[i];
        coeffs[0][i] = dy;
        coeffs[1][i] = h * kx[0][i] - dy;
        coeffs[2][i] = 2.0 * dy - h * (kx[12][i] + kx[0][i]);
        for (r, drow) in D.iter().enumerate() {
            let mut acc = 0.0;
            for (j, &d) in drow.iter().enumerate() {
                acc += d * kx[j][i];
            }
            coeffs[3 + r][i] = h * acc;
        }
    }
    DenseSegment {
        t_old: t,
        h,
        y_old: *y,
        coeffs,
    }
}

fn error_norm<const N: usize>(k: &[[f64; N]; 13], h: f64, sc: &[f64; N]) -> f64 {
    let mut e5 = 0.0;
    let mut e3 = 0.0;
    for i in 0..N {
        let mut err5 = 0.0;
        let mut err3 = 0.0;
        for j in 0..13 {
            err5 += E5[j] * k[j][i];
            err3 += E3[j] * k[j][i];
        }
        e5 += (err5 / sc[i]).powi(2);
        e3 += (err3 / sc[i]).powi(2);
    }
    if e5 == 0.0 && e3 == 0.0 {
        return 0.0;
    }
    let denom = e5 + 0.01 * e3;
    h.abs() * e5 / (denom * N as f64).sqrt()
}

// Dormand–Prince 8(5,3) tableau (Hairer, Nørsett & Wanner).
const C: [f64; 12] = [
    0.0,
    0.526001519587677318785587544488e-01,
    0.789002279381515978178381316732e-01,
    0.118350341907227396726757197510,
    0.281649658092772603273242802490,
    0.333333333333333333333333333333,
    0.25,
    0.307692307692307692307692307692,
    0.651282051282051282051282051282,
    0.6,
    0.857142857142857142857142857142,
    1.0,
];

const A: [[f64; 12]; 12] = {
    let mut a = [[0.0; 12]; 12];
    a[1][0] = 5.26001519587677318785587544488e-2;

    a[2][0] = 1.97250569845378994544595329183e-2;
    a[2][1] = 5.91751709536136983633785987549e-2;

    a[3][0] = 2.95875854768068491816892993775e-2;
    a[3][2] = 8.87627564304205475450678981324e-2;

    a[4][0] = 2.41365134159266685502369798665e-1;
    a[4][2] = -8.84549479328286085344864962717e-1;
    a[4][3] = 9.24834003261792003115737966543e-1;

    a[5][0] = 3.7037037037037037037037037037e-2;
    a[5][3] = 1.70828608729473871279604482173e-1;
    a[5][4] = 1.25467687566822425016691814123e-1;

    a[6][0] = 3.7109375e-2;
    a[6][3] = 1.70252211019544039314978060272e-1;
    a[6][4] = 6.02165389804559606850219397283e-2;
    a[6][5] = -1.7578125e-2;

    a[7][0] = 3.70920001185047927108779319836e-2;
    a[7][3] = 1.70383925712239993810214054705e-1;
    a[7][4] = 1.07262030446373284651809199168e-1;
    a[7][5] = -1.53194377486244017527936158236e-2;
    a[7][6] = 8.27378916381402288758473766002e-3;

    a[8][0] = 6.24110958716075717114429577812e-1;
    a[8][3] = -3.36089262944694129406857109825;
    a[8][4] = -8.68219346841726006818189891453e-1;
    a[8][5] = 2.75920996994467083049415600797e1;
    a[8][6] = 2.01540675504778934086186788979e1;
    a[8][7] = -4.34898841810699588477366255144e1;

    a[9][0] = 4.77662536438264365890433908527e-1;
    a[9][3] = -2.48811461997166764192642586468;
    a[9][4] = -5.90290826836842996371446475743e-1;
    a[9][5] = 2.12300514481811942347288949897e1;
    a[9][6] = 1.52792336328824235832596922938e1;
    a[9][7] = -3.32882109689848629194453265587e1;
    a[9][8] = -2.03312017085086261358222928593e-2;

    a[10][0] = -9.3714243008598732571704021658e-1;
    a[10][3] = 5.18637242884406370830023853209;
    a[10][4] = 1.09143734899672957818500254654;
    a[10][5] = -8.14978701074692612513997267357;
    a[10][6] = -1.85200656599969598641566180701e1;
    a[10][7] = 2.27394870993505042818970056734e1;
    a[10][8] = 2.49360555267965238987089396762;
    a[10][9] = -3.0467644718982195003823669022;

    a[11][0] = 2.27331014751653820792359768449;
    a[11][3] = -1.05344954667372501984066689879e1;
    a[11][4] = -2.00087205822486249909675718444;
    a[11][5] = -1.79589318631187989172765950534e1;
    a[11][6] = 2.79488845294199600508499808837e1;
    a[11][7] = -2.85899827713502369474065508674;
    a[11][8] = -8.87285693353062954433549289258;
    a[11][9] = 1.23605671757943030647266201528e1;
    a[11][10] = 6.43392746015763530355970484046e-1;
    a
};

const B: [f64; 12] = [
    5.42937341165687622380535766363e-2,
    0.0,
    0.0,
    0.0,
    0.0,
    4.45031289275240888144113950566,
    1.89151789931450038304281599044,
    -5.8012039600105847814672114227,
    3.1116436695781989440891606237e-1,
    -1.52160949662516078556178806805e-1,
    2.01365400804030348374776537501e-1,
    4.47106157277725905176885569043e-2,
];

const E3: [f64; 13] = [
    B[0] - 0.244094488188976377952755905512,
    0.0,
    0.0,
    0.0,
    0.0,
    B[5],
    B[6],
    B[7],
    B[8] - 0.733846688281611857341361741547,
    B[9],
    B[10],
    B[11] - 0.220588235294117647058823529412e-1,
    0.0,
];

const E5: [f64; 13] = [
    0.1312004499419488073250102996e-1,
    0.0,
    0.0,
    0.0,
    0.0,
    -0.1225156446376204440720569753e+1,
    -0.4957589496572501915214079952,
    0.1664377182454986536961530415e+1,
    -0.3503288487499736816886487290,
    0.3341791187130174790297318841,
    0.8192320648511571246570742613e-1,
    -0.2235530786388629525884427845e-1,
    0.0,
];

const C_EXTRA: [f64; 3] = [0.1, 0.2, 0.777_777_777_777_777_8];

const A_EXTRA: [[f64; 16]; 3] = {
    let mut a = [[0.0; 16]; 3];
    a[0][0] = 0.056167502283047954;
    a[0][6] = 0.25350021021662483;
    a[0][7] = -0.2462390374708025;
    a[0][8] = -0.12419142326381637;
    a[0][9] = 0.15329179827876568;
    a[0][10] = 0.00820105229563469;
    a[0][11] = 0.007567897660545699;
    a[0][12] = -0.008298;

    a[1][0] = 0.03183464816350214;
    a[1][5] = 0.028300909672366776;
    a[1][6] = 0.053541988307438566;
    a[1][7] = -0.05492374857139099;
    a[1][10] = -0.00010834732869724932;
    a[1][11] = 0.0003825710908356584;
    a[1][12] = -0.00034046500868740456;
    a[1][13] = 0.1413124436746325;

    a[2][0] = -0.42889630158379194;
    a[2][5] = -4.697621415361164;
    a[2][6] = 7.683421196062599;
    a[2][7] = 4.06898981839711;
    a[2][8] = 0.3567271874552811;
    a[2][12] = -0.0013990241651590145;
    a[2][13] = 2.9475147891527724;
    a[2][14] = -9.15095847217987;
    a
};

const D: [[f64; 16]; 4] = [
    [
        -8.428938276109013, 0.0, 0.0, 0.0, 0.0, 0.5667149535193777, -3.0689499459498917, 2.38466765651207,
        2.117034582445028, -0.871391583777973, 2.2404374302607883, 0.6315787787694688, -0.08899033645133331,
        18.148505520854727, -9.194632392478356, -4.436036387594894,
    ],
    [
        10.427508642579134, 0.0, 0.0, 0.0, 0.0, 242.28349177525817, 165.20045171727028, -374.5467547226902,
        -22.113666853125306, 7.733432668472264, -30.674084731089398, -9.332130526430229, 15.697238121770845,
        -31.139403219565178, -9.35292435884448, 35.81684148639408,
    ],
    [
        19.985053242002433, 0.0, 0.0, 0.0, 0.0, -387.0373087493518, -189.17813819516758, 527.8081592054236,
        -11.57390253995963, 6.8812326946963, -1.0006050966910838, 0.7777137798053443, -2.778205752353508,
        -60.19669523126412, 84.32040550667716, 11.99229113618279,
    ],
    [
        -25.69393346270375, 0.0, 0.0, 0.0, 0.0, -154.18974869023643, -231.5293791760455, 357.6391179106141,
        93.40532418362432, -37.45832313645163, 104.0996495089623, 29.8402934266605, -43.53345659001114,
        96.32455395918828, -39.17726167561544, -149.72683625798564,
    ],
];
