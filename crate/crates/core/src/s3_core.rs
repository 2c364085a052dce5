//! Quaternionic group structure of the unit sphere, its left-invariant frame,
//! the contact form and the hyperspherical chart.

use std::f64::consts::PI;

use crate::error::{Error, Result};

pub type Vec4 = [f64; 4];

/// Points are accepted as unit quaternions when `| |x| - 1 | <= NORM_TOL`.
pub const NORM_TOL: f64 = 1e-10;
/// Inputs within this distance of the sphere are projected onto it.
pub const RENORM_TOL: f64 = 1e-6;
/// Half-width of the excluded band at the edges of the hyperspherical chart.
pub const CHART_EPS: f64 = 1e-8;
/// Default step of the numerical Lie bracket.
pub const BRACKET_STEP: f64 = 1e-4;

#[inline]
pub fn dot(a: &Vec4, b: &Vec4) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2] + a[3] * b[3]
}

#[inline]
pub fn norm(a: &Vec4) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
pub fn axpy(alpha: f64, x: &Vec4, y: &Vec4) -> Vec4 {
    [
        alpha * x[0] + y[0],
        alpha * x[1] + y[1],
        alpha * x[2] + y[2],
        alpha * x[3] + y[3],
    ]
}

#[inline]
pub fn scale(alpha: f64, x: &Vec4) -> Vec4 {
    [alpha * x[0], alpha * x[1], alpha * x[2], alpha * x[3]]
}

pub fn max_abs_diff(a: &Vec4, b: &Vec4) -> f64 {
    (0..4).map(|i| (a[i] - b[i]).abs()).fold(0.0, f64::max)
}

/// `I1 v`; at a point `x` on the sphere `I1 x = X(x)`.
#[inline]
pub fn i1(v: &Vec4) -> Vec4 {
    [-v[2], -v[3], v[0], v[1]]
}

/// `I2 v`; `I2 x = Y(x)`.
#[inline]
pub fn i2(v: &Vec4) -> Vec4 {
    [-v[3], v[2], -v[1], v[0]]
}

/// `I3 v`; `I3 x = Z(x)`.
#[inline]
pub fn i3(v: &Vec4) -> Vec4 {
    [-v[1], v[0], v[3], -v[2]]
}

/// Wraps an angle into `[-pi, pi)`.
pub fn wrap_angle(a: f64) -> f64 {
    let r = (a + PI).rem_euclid(2.0 * PI) - PI;
    if r >= PI {
        r - 2.0 * PI
    } else {
        r
    }
}

/// Signed distance between two angles taken modulo `2 pi`.
pub fn angle_diff(a: f64, b: f64) -> f64 {
    wrap_angle(a - b)
}

/// A unit quaternion `(x1, x2, x3, x4)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct S3Point(Vec4);

impl S3Point {
    pub const IDENTITY: S3Point = S3Point([1.0, 0.0, 0.0, 0.0]);

    /// Projects onto the sphere when within `RENORM_TOL`, rejects otherwise.
    pub fn new(x: Vec4) -> Result<Self> {
        let n = norm(&x);
        if !n.is_finite() || (n - 1.0).abs() > RENORM_TOL {
            return Err(Error::NonUnitInput { norm: n });
        }
        Ok(S3Point(scale(1.0 / n, &x)))
    }

    /// Normalizes an arbitrary non-zero vector.
    pub fn normalized(x: Vec4) -> Result<Self> {
        let n = norm(&x);
        if !n.is_finite() || n == 0.0 {
            return Err(Error::NonUnitInput { norm: n });
        }
        Ok(S3Point(scale(1.0 / n, &x)))
    }

    /// Builds the point with `z = x1 + i x2`, `w = x3 + i x4`.
    pub fn from_complex(z: num_complex::Complex64, w: num_complex::Complex64) -> Result<Self> {
        Self::new([z.re, z.im, w.re, w.im])
    }

    pub fn coords(&self) -> Vec4 {
        self.0
    }

    pub fn z(&self) -> num_complex::Complex64 {
        num_complex::Complex64::new(self.0[0], self.0[1])
    }

    pub fn w(&self) -> num_complex::Complex64 {
        num_complex::Complex64::new(self.0[2], self.0[3])
    }
}

/// An ambient vector, tangent when `<v, x> = 0` at its base point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TangentVector(pub Vec4);

/// Coefficients of a velocity along `X`, `Y`, `Z`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VelocityDecomposition {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

/// Hyperspherical coordinates: `x1 + i x2 = e^{i zeta1} cos eta`, `x3 + i x4 = e^{i zeta2} sin eta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HyperPoint {
    pub zeta1: f64,
    pub zeta2: f64,
    pub eta: f64,
}

/// The left-invariant frame `N = x`, `Z`, `X`, `Y` at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frame {
    pub n: TangentVector,
    pub z: TangentVector,
    pub x: TangentVector,
    pub y: TangentVector,
}

fn quat_product(x: &Vec4, y: &Vec4) -> Vec4 {
    [
        x[0] * y[0] - x[1] * y[1] - x[2] * y[2] - x[3] * y[3],
        x[1] * y[0] + x[0] * y[1] - x[3] * y[2] + x[2] * y[3],
        x[2] * y[0] + x[3] * y[1] + x[0] * y[2] - x[1] * y[3],
        x[3] * y[0] - x[2] * y[1] + x[1] * y[2] + x[0] * y[3],
    ]
}

/// Quaternion product `x ∘ y`.
pub fn quat_mul(x: &S3Point, y: &S3Point) -> S3Point {
    let p = quat_product(&x.0, &y.0);
    let n = norm(&p);
    if (n - 1.0).abs() > 1e-14 {
        S3Point(scale(1.0 / n, &p))
    } else {
        S3Point(p)
    }
}

/// Product of raw coordinate vectors, both of which must be unit within `NORM_TOL`.
pub fn quat_mul_checked(x: &Vec4, y: &Vec4) -> Result<S3Point> {
    for v in [x, y] {
        let n = norm(v);
        if !n.is_finite() || (n - 1.0).abs() > NORM_TOL {
            return Err(Error::NonUnitInput { norm: n });
        }
    }
    Ok(quat_mul(&S3Point(*x), &S3Point(*y)))
}

pub fn frame_fields(x: &S3Point) -> Frame {
    let p = &x.0;
    Frame {
        n: TangentVector(*p),
        z: TangentVector(i3(p)),
        x: TangentVector(i1(p)),
        y: TangentVector(i2(p)),
    }
}

/// `omega(v) = -x2 v1 + x1 v2 + x4 v3 - x3 v4`.
#[inline]
pub fn one_form_eval(x: &S3Point, v: &TangentVector) -> f64 {
    let (p, v) = (&x.0, &v.0);
    -p[1] * v[0] + p[0] * v[1] + p[3] * v[2] - p[2] * v[3]
}

pub fn velocity_decompose(x: &S3Point, v: &TangentVector) -> VelocityDecomposition {
    let (p, w) = (&x.0, &v.0);
    VelocityDecomposition {
        a: -p[2] * w[0] - p[3] * w[1] + p[0] * w[2] + p[1] * w[3],
        b: -p[3] * w[0] + p[2] * w[1] - p[1] * w[2] + p[0] * w[3],
        c: one_form_eval(x, v),
    }
}

/// Returns whether every sample has `|c| <= tol`, together with the largest `|c|`.
pub fn is_horizontal_curve(samples: &[(S3Point, TangentVector)], tol: f64) -> Result<(bool, f64)> {
    if samples.is_empty() {
        return Err(Error::EmptyInput);
    }
    let defect = samples
        .iter()
        .map(|(x, v)| one_form_eval(x, v).abs())
        .fold(0.0, f64::max);
    Ok((defect <= tol, defect))
}

fn shoelace(samples: &[S3Point], i: usize, j: usize, closed: bool) -> f64 {
    let m = samples.len();
    let mut s = 0.0;
    for k in 0..m - 1 {
        let (p, q) = (&samples[k].0, &samples[k + 1].0);
        s += p[i] * q[j] - q[i] * p[j];
    }
    if closed {
        let (p, q) = (&samples[m - 1].0, &samples[0].0);
        s += p[i] * q[j] - q[i] * p[j];
    }
    0.5 * s
}

/// Signed areas of the `(x1, x2)` and `(x3, x4)` projections, each closed by the chord
/// joining the ends of the curve.
pub fn projected_areas(samples: &[S3Point]) -> Result<(f64, f64)> {
    if samples.len() < 3 {
        return Err(Error::EmptyInput);
    }
    Ok((shoelace(samples, 0, 1, true), shoelace(samples, 2, 3, true)))
}

/// Areas swept by the radius vector of each projection, `1/2 ∫ (x1 dx2 - x2 dx1)` and
/// `1/2 ∫ (x3 dx4 - x4 dx3)`, with an error estimate from the half-resolution polygon.
pub fn swept_areas(samples: &[S3Point]) -> Result<(f64, f64, f64)> {
    if samples.len() < 3 {
        return Err(Error::EmptyInput);
    }
    let a = shoelace(samples, 0, 1, false);
    let b = shoelace(samples, 2, 3, false);
    let mut coarse: Vec<S3Point> = samples.iter().step_by(2).copied().collect();
    if (samples.len() - 1) % 2 == 1 {
        coarse.push(*samples.last().unwrap());
    }
    let ac = shoelace(&coarse, 0, 1, false);
    let bc = shoelace(&coarse, 2, 3, false);
    let err = (a - ac).abs().max((b - bc).abs());
    Ok((a, b, err))
}

pub fn to_hyper(x: &S3Point) -> Result<HyperPoint> {
    let p = &x.0;
    let r = p[0].hypot(p[1]);
    let rho = p[2].hypot(p[3]);
    let eta = rho.atan2(r);
    if !(eta > CHART_EPS && eta < 0.5 * PI - CHART_EPS) {
        return Err(Error::ChartBoundary { eta });
    }
    Ok(HyperPoint {
        zeta1: wrap_angle(p[1].atan2(p[0])),
        zeta2: wrap_angle(p[3].atan2(p[2])),
        eta,
    })
}

pub fn from_hyper(h: &HyperPoint) -> S3Point {
    let (c, s) = (h.eta.cos(), h.eta.sin());
    S3Point([
        h.zeta1.cos() * c,
        h.zeta1.sin() * c,
        h.zeta2.cos() * s,
        h.zeta2.sin() * s,
    ])
}

/// Rotation by `phi` in the `(x1, x2)` plane.
pub fn rotate_r1(x: &S3Point, phi: f64) -> S3Point {
    S3Point(rot_r1(&x.0, phi))
}

/// Rotation by `phi` in the `(x3, x4)` plane.
pub fn rotate_r2(x: &S3Point, phi: f64) -> S3Point {
    S3Point(rot_r2(&x.0, phi))
}

pub fn rot_r1(v: &Vec4, phi: f64) -> Vec4 {
    let (s, c) = phi.sin_cos();
    [v[0] * c - v[1] * s, v[0] * s + v[1] * c, v[2], v[3]]
}

pub fn rot_r2(v: &Vec4, phi: f64) -> Vec4 {
    let (s, c) = phi.sin_cos();
    [v[0], v[1], v[2] * c - v[3] * s, v[2] * s + v[3] * c]
}

/// Exact flow of `X` for time `h`; `I1^2 = -Id` makes it a rotation.
pub fn flow_x(x: &Vec4, h: f64) -> Vec4 {
    let (s, c) = h.sin_cos();
    axpy(s, &i1(x), &scale(c, x))
}

/// Exact flow of `Y` for time `h`.
pub fn flow_y(x: &Vec4, h: f64) -> Vec4 {
    let (s, c) = h.sin_cos();
    axpy(s, &i2(x), &scale(c, x))
}

fn commutator_loop(x: &Vec4, h: f64) -> Vec4 {
    let p = flow_x(x, h);
    let p = flow_y(&p, h);
    let p = flow_x(&p, -h);
    flow_y(&p, -h)
}

/// Symmetrized group-commutator estimate of `[X, Y](x)`; the error is `O(h^2)`.
pub fn lie_bracket_central(x: &S3Point, h: f64) -> Vec4 {
    let p = &x.0;
    let a = commutator_loop(p, h);
    let b = commutator_loop(p, -h);
    let mut out = [0.0; 4];
    for i in 0..4 {
        out[i] = ((a[i] - p[i]) + (b[i] - p[i])) / (2.0 * h * h);
    }
    out
}

/// `[X, Y](x)` from central estimates at `h` and `h/2` combined by one Richardson step.
pub fn lie_bracket_xy(x: &S3Point, h: f64) -> Vec4 {
    let coarse = lie_bracket_central(x, h);
    let fine = lie_bracket_central(x, 0.5 * h);
    let mut out = [0.0; 4];
    for i in 0..4 {
        out[i] = (4.0 * fine[i] - coarse[i]) / 3.0;
    }
    out
}
