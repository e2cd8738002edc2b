//! Eigenvalues of 3x3 real matrices from the characteristic polynomial.

pub type Mat3 = [[f64; 3]; 3];

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Spectrum {
    /// Three real eigenvalues, ascending.
    Real([f64; 3]),
    /// One real eigenvalue and a complex-conjugate pair `re ± i·im`.
    Complex { real: f64, re: f64, im: f64 },
}

impl Spectrum {
    pub fn real(&self) -> Option<[f64; 3]> {
        match self {
            Spectrum::Real(v) => Some(*v),
            Spectrum::Complex { .. } => None,
        }
    }
}

pub fn trace(m: &Mat3) -> f64 {
    m[0][0] + m[1][1] + m[2][2]
}

pub fn det(m: &Mat3) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

fn minor_sum(m: &Mat3) -> f64 {
    m[0][0] * m[1][1] - m[0][1] * m[1][0] + m[0][0] * m[2][2] - m[0][2] * m[2][0]
        + m[1][1] * m[2][2]
        - m[1][2] * m[2][1]
}

/// Roots of `λ³ + a λ² + b λ + c` by Cardano's method, each real root
/// polished with Newton's method.
pub fn cubic_roots(a: f64, b: f64, c: f64) -> Spectrum {
    let p = b - a * a / 3.0;
    let q = 2.0 * a * a * a / 27.0 - a * b / 3.0 + c;
    let shift = -a / 3.0;
    let scale = 1.0 + a.abs() + b.abs().sqrt() + c.abs().cbrt();
    let disc = (q / 2.0).powi(2) + (p / 3.0).powi(3);
    let poly = |x: f64| ((x + a) * x + b) * x + c;
    let dpoly = |x: f64| (3.0 * x + 2.0 * a) * x + b;
    let polish = |mut x: f64| {
        for _ in 0..4 {
            let d = dpoly(x);
            if d.abs() < 1e-300 {
                break;
            }
            let nx = x - poly(x) / d;
            if !nx.is_finite() {
                break;
            }
            x = nx;
        }
        x
    };

    if disc > 1e-14 * scale.powi(6) {
        let sq = disc.sqrt();
        let t = (-q / 2.0 + sq).cbrt() + (-q / 2.0 - sq).cbrt();
        let real = polish(t + shift);
        // deflate: λ² + (a + r) λ + (b + r(a + r))
        let bb = a + real;
        let cc = b + real * bb;
        let re = -bb / 2.0;
        let im = (cc - re * re).max(0.0).sqrt();
        return Spectrum::Complex { real, re, im };
    }
    let mut roots = if p.abs() <= 1e-300 {
        [shift; 3]
    } else {
        let r = 2.0 * (-p / 3.0).max(0.0).sqrt();
        let arg = (3.0 * q / (p * r)).clamp(-1.0, 1.0);
        let phi = arg.acos() / 3.0;
        let tau = 2.0 * std::f64::consts::PI / 3.0;
        [
            r * phi.cos() + shift,
            r * (phi - tau).cos() + shift,
            r * (phi - 2.0 * tau).cos() + shift,
        ]
    };
    for x in roots.iter_mut() {
        *x = polish(*x);
    }
    roots.sort_by(|x, y| x.total_cmp(y));
    Spectrum::Real(roots)
}

pub fn eigenvalues(m: &Mat3) -> Spectrum {
    cubic_roots(-trace(m), minor_sum(m), -det(m))
}
