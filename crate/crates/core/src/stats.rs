//! Small least-squares and quadrature helpers.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
}

/// Ordinary least squares `y = intercept + slope * x`.
pub fn linear_fit(points: &[(f64, f64)]) -> LineFit {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for &(x, y) in points {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    let slope = sxy / sxx;
    LineFit {
        slope,
        intercept: my - slope * mx,
    }
}

/// Least squares for `y ~ sum_j c_j f_j(x)` with `K` basis values per row.
/// Solves the normal equations by Gaussian elimination with partial
/// pivoting after column scaling. Returns `None` for a singular system.
pub fn least_squares<const K: usize>(rows: &[[f64; K]], y: &[f64]) -> Option<[f64; K]> {
    let mut scale = [0.0f64; K];
    for row in rows {
        for j in 0..K {
            scale[j] = scale[j].max(row[j].abs());
        }
    }
    if scale.contains(&0.0) {
        return None;
    }
    let mut a = [[0.0f64; K]; K];
    let mut b = [0.0f64; K];
    for (row, &yi) in rows.iter().zip(y) {
        for i in 0..K {
            let ri = row[i] / scale[i];
            b[i] += ri * yi;
            for j in 0..K {
                a[i][j] += ri * row[j] / scale[j];
            }
        }
    }
    for col in 0..K {
        let piv = (col..K).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-14 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for i in col + 1..K {
            let f = a[i][col] / a[col][col];
            for j in col..K {
                a[i][j] -= f * a[col][j];
            }
            b[i] -= f * b[col];
        }
    }
    let mut x = [0.0f64; K];
    for i in (0..K).rev() {
        let mut acc = b[i];
        for j in i + 1..K {
            acc -= a[i][j] * x[j];
        }
        x[i] = acc / a[i][i];
    }
    for j in 0..K {
        x[j] /= scale[j];
    }
    Some(x)
}

const GL8_X: [f64; 4] = [
    0.183_434_642_495_649_8,
    0.525_532_409_916_329_0,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];
const GL8_W: [f64; 4] = [
    0.362_683_783_378_362_0,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_5,
    0.101_228_536_290_376_3,
];

/// Eight-point Gauss-Legendre rule on `[a, b]`.
pub fn gauss_legendre8(a: f64, b: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut acc = 0.0;
    for (x, w) in GL8_X.iter().zip(GL8_W) {
        acc += w * (f(c - h * x) + f(c + h * x));
    }
    acc * h
}
