//! Third-order polynomial transforms of a standard Gaussian that hit target
//! skewness and kurtosis, and the intermediate-correlation adjustment that
//! makes post-transform correlations approximate their targets.
//!
//! `Y = a + bZ + cZ^2 + dZ^3` with `a = -c` has zero mean; the remaining
//! coefficients solve the classic moment system for unit variance, target
//! skew and target excess kurtosis.

use crate::error::{Error, Result};

/// Coefficients of one cubic transform (`a = -c`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coefficients {
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl Coefficients {
    /// The identity transform (Gaussian target).
    pub fn gaussian() -> Self {
        Self {
            b: 1.0,
            c: 0.0,
            d: 0.0,
        }
    }

    pub fn apply(&self, z: f64) -> f64 {
        -self.c + z * (self.b + z * (self.c + z * self.d))
    }
}

/// (variance, skewness, excess kurtosis) implied by a coefficient triple.
fn implied_moments(b: f64, c: f64, d: f64) -> (f64, f64, f64) {
    let var = b * b + 6.0 * b * d + 2.0 * c * c + 15.0 * d * d;
    let skew = 2.0 * c * (b * b + 24.0 * b * d + 105.0 * d * d + 2.0);
    let kurt = 24.0
        * (b * d
            + c * c * (1.0 + b * b + 28.0 * b * d)
            + d * d * (12.0 + 48.0 * b * d + 141.0 * c * c + 225.0 * d * d));
    (var, skew, kurt)
}

fn residual(b: f64, c: f64, d: f64, skew: f64, ex_kurt: f64) -> [f64; 3] {
    let (var, s, k) = implied_moments(b, c, d);
    [var - 1.0, s - skew, k - ex_kurt]
}

fn newton_from(
    mut b: f64,
    mut c: f64,
    mut d: f64,
    skew: f64,
    ex_kurt: f64,
) -> Option<Coefficients> {
    let h = 1e-7;
    for _ in 0..200 {
        let r = residual(b, c, d, skew, ex_kurt);
        let err = r.iter().map(|v| v.abs()).fold(0.0, f64::max);
        if err < 1e-12 {
            return Some(Coefficients { b, c, d });
        }
        // numeric Jacobian, column per unknown
        let mut jac = [[0.0; 3]; 3];
        for (col, delta) in [(0, [h, 0.0, 0.0]), (1, [0.0, h, 0.0]), (2, [0.0, 0.0, h])] {
            let up = residual(b + delta[0], c + delta[1], d + delta[2], skew, ex_kurt);
            let dn = residual(b - delta[0], c - delta[1], d - delta[2], skew, ex_kurt);
            for row in 0..3 {
                jac[row][col] = (up[row] - dn[row]) / (2.0 * h);
            }
        }
        let step = solve3(&jac, &r)?;
        // damped update
        let mut t = 1.0;
        let mut improved = false;
        for _ in 0..30 {
            let nb = b - t * step[0];
            let nc = c - t * step[1];
            let nd = d - t * step[2];
            let nr = residual(nb, nc, nd, skew, ex_kurt);
            let nerr = nr.iter().map(|v| v.abs()).fold(0.0, f64::max);
            if nerr < err {
                b = nb;
                c = nc;
                d = nd;
                improved = true;
                break;
            }
            t *= 0.5;
        }
        if !improved {
            return None;
        }
    }
    let r = residual(b, c, d, skew, ex_kurt);
    if r.iter().map(|v| v.abs()).fold(0.0, f64::max) < 1e-9 {
        Some(Coefficients { b, c, d })
    } else {
        None
    }
}

fn solve3(a: &[[f64; 3]; 3], rhs: &[f64; 3]) -> Option<[f64; 3]> {
    let mut m = *a;
    let mut r = *rhs;
    for col in 0..3 {
        let pivot = (col..3).max_by(|&i, &j| {
            m[i][col].abs().partial_cmp(&m[j][col].abs()).unwrap()
        })?;
        if m[pivot][col].abs() < 1e-14 {
            return None;
        }
        m.swap(col, pivot);
        r.swap(col, pivot);
        for row in (col + 1)..3 {
            let f = m[row][col] / m[col][col];
            #[allow(clippy::needless_range_loop)]
            for k in col..3 {
                m[row][k] -= f * m[col][k];
            }
            r[row] -= f * r[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..3).rev() {
        let mut sum = r[row];
        for k in (row + 1)..3 {
            sum -= m[row][k] * x[k];
        }
        x[row] = sum / m[row][row];
    }
    Some(x)
}

/// Solve for the cubic-transform coefficients hitting the target skewness
/// and plain kurtosis (3 = Gaussian). Errors when the pair is infeasible
/// (`kurtosis < skewness^2 + 1`) or outside the representable region.
pub fn solve_coefficients(skew: f64, kurtosis: f64) -> Result<Coefficients> {
    if kurtosis < skew * skew + 1.0 {
        return Err(Error::Simulation(format!(
            "infeasible moment pair: kurtosis {kurtosis} < skewness^2 + 1 = {}",
            skew * skew + 1.0
        )));
    }
    let ex_kurt = kurtosis - 3.0;
    if skew == 0.0 && ex_kurt == 0.0 {
        return Ok(Coefficients::gaussian());
    }
    // fixed start ladder keeps the solve deterministic
    let starts = [
        (1.0, 0.15 * skew, 0.0),
        (0.9, 0.2 * skew, 0.05),
        (0.8, 0.3 * skew, 0.1),
        (1.0, 0.0, 0.1),
        (0.7, 0.1 * skew, -0.05),
    ];
    for (b, c, d) in starts {
        if let Some(sol) = newton_from(b, c, d, skew, ex_kurt) {
            // take the branch with positive linear coefficient so the
            // transform is increasing around the origin
            if sol.b > 0.0 {
                return Ok(sol);
            }
        }
    }
    Err(Error::Simulation(format!(
        "no cubic transform found for skewness {skew}, kurtosis {kurtosis}"
    )))
}

/// Intermediate Gaussian correlation so two cubic transforms reproduce the
/// target post-transform correlation:
/// `r = rho (b_i b_j + 3 b_i d_j + 3 d_i b_j + 9 d_i d_j) + rho^2 (2 c_i c_j) + rho^3 (6 d_i d_j)`.
pub fn intermediate_correlation(
    target: f64,
    ci: &Coefficients,
    cj: &Coefficients,
) -> Result<f64> {
    if !(-1.0..=1.0).contains(&target) {
        return Err(Error::Simulation(format!(
            "correlation {target} outside [-1, 1]"
        )));
    }
    let lin = ci.b * cj.b + 3.0 * ci.b * cj.d + 3.0 * ci.d * cj.b + 9.0 * ci.d * cj.d;
    let quad = 2.0 * ci.c * cj.c;
    let cubic = 6.0 * ci.d * cj.d;
    let f = |rho: f64| rho * lin + rho * rho * quad + rho * rho * rho * cubic - target;
    let (mut lo, mut hi) = (-1.0, 1.0);
    let (flo, fhi) = (f(lo), f(hi));
    if flo * fhi > 0.0 {
        // target beyond the attainable post-transform range: clamp to the
        // nearer boundary; the PSD repair and the fidelity gate keep the
        // discrepancy visible
        return Ok(if f(1.0) < 0.0 { 0.9999 } else { -0.9999 });
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm.abs() < 1e-14 {
            return Ok(mid);
        }
        if flo * fm <= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
