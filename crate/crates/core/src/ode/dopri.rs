//! Dormand-Prince 5(4) with the standard fourth-order dense output.

use crate::error::{Error, Result};

pub type Vec3 = [f64; 3];


const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub rtol: f64,
    pub atol: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self {
            rtol: 1e-9,
            atol: 1e-12,
        }
    }
}

impl Tolerance {
    pub fn relative(rtol: f64) -> Self {
        Self {
            rtol,
            ..Self::default()
        }
    }
}

/// One accepted step with its interpolation coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DenseStep {
    pub t0: f64,
    pub h: f64,
    coeffs: [Vec3; 5],
}

impl DenseStep {
    pub fn t1(&self) -> f64 {
        self.t0 + self.h
    }

    pub fn start(&self) -> Vec3 {
        self.coeffs[0]
    }

    pub fn end(&self) -> Vec3 {
        let mut out = [0.0; 3];
        for i in 0..3 {
            out[i] = self.coeffs[0][i] + self.coeffs[1][i];
        }
        out
    }

    pub fn eval(&self, t: f64) -> Vec3 {
        let th = (t - self.t0) / self.h;
        let th1 = 1.0 - th;
        let [r1, r2, r3, r4, r5] = self.coeffs;
        let mut out = [0.0; 3];
        for i in 0..3 {
            out[i] = r1[i] + th * (r2[i] + th1 * (r3[i] + th * (r4[i] + th1 * r5[i])));
        }
        out
    }
}

fn axpy(y: &Vec3, terms: &[(f64, &Vec3)], h: f64) -> Vec3 {
    let mut out = *y;
    for (a, k) in terms {
        for i in 0..3 {
            out[i] += h * a * k[i];
        }
    }
    out
}

/// Integrates `rhs` from `(t0, y0)` to `t_end`, or until `stop` holds at the end
/// of an accepted step. `post` is applied to every accepted state.
pub fn integrate<F, P, S>(
    rhs: F,
    post: P,
    t0: f64,
    y0: Vec3,
    t_end: f64,
    tol: Tolerance,
    mut stop: S,
) -> Result<Vec<DenseStep>>
where
    F: Fn(&Vec3) -> Vec3,
    P: Fn(Vec3) -> Vec3,
    S: FnMut(f64, &Vec3) -> bool,
{
    let mut steps = Vec::new();
    let mut t = t0;
    let mut y = y0;
    let mut k1 = rhs(&y);
    let span = t_end - t0;
    if span <= 0.0 {
        return Ok(steps);
    }
    let mut h = initial_step(&y, &k1, tol, span);
    while t < t_end {
        if t + h > t_end {
            h = t_end - t;
        }
        if h <= 1e-13 * t.abs().max(1.0) {
            return Err(Error::StepUnderflow { t });
        }
        let k2 = rhs(&axpy(&y, &[(A21, &k1)], h));
        let k3 = rhs(&axpy(&y, &[(A31, &k1), (A32, &k2)], h));
        let k4 = rhs(&axpy(&y, &[(A41, &k1), (A42, &k2), (A43, &k3)], h));
        let k5 = rhs(&axpy(&y, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)], h));
        let k6 = rhs(&axpy(
            &y,
            &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)],
            h,
        ));
        let y1 = axpy(
            &y,
            &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)],
            h,
        );
        let k7 = rhs(&y1);

        let mut err = 0.0;
        for i in 0..3 {
            let e = h
                * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let sc = tol.atol + tol.rtol * y[i].abs().max(y1[i].abs());
            err += (e / sc) * (e / sc);
        }
        let err = (err / 3.0).sqrt();
        if !err.is_finite() {
            h *= 0.2;
            continue;
        }
        if err <= 1.0 {
            let mut coeffs = [[0.0; 3]; 5];
            for i in 0..3 {
                let dy = y1[i] - y[i];
                let bspl = h * k1[i] - dy;
                coeffs[0][i] = y[i];
                coeffs[1][i] = dy;
                coeffs[2][i] = bspl;
                coeffs[3][i] = dy - h * k7[i] - bspl;
                coeffs[4][i] = h
                    * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
            }
            steps.push(DenseStep { t0: t, h, coeffs });
            t += h;
            let clamped = post(y1);
            k1 = if clamped == y1 { k7 } else { rhs(&clamped) };
            y = clamped;
            if stop(t, &y) {
                break;
            }
            let fac = (0.9 * err.max(1e-10).powf(-0.2)).clamp(0.2, 10.0);
            h *= fac;
        } else {
            let fac = (0.9 * err.powf(-0.2)).clamp(0.2, 1.0);
            h *= fac;
        }
    }
    Ok(steps)
}

fn initial_step(y: &Vec3, dy: &Vec3, tol: Tolerance, span: f64) -> f64 {
    let mut d0 = 0.0;
    let mut d1 = 0.0;
    for i in 0..3 {
        let sc = tol.atol + tol.rtol * y[i].abs();
        d0 += (y[i] / sc).powi(2);
        d1 += (dy[i] / sc).powi(2);
    }
    let (d0, d1) = ((d0 / 3.0).sqrt(), (d1 / 3.0).sqrt());
    let h = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    h.min(span)
}
