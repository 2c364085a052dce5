//! The Hamiltonian `H = 1/2 (<I1 x, xi>^2 + <I2 x, xi>^2)` on the cotangent bundle of the
//! sphere, its flow, first integrals and the control-theoretic form of the same system.

use nalgebra::Matrix4;

use crate::error::Result;
use crate::ode::{self, OdeOptions};
use crate::s3_core::{axpy, dot, i1, i2, i3, norm, scale, S3Point, Vec4};

/// A point `(x, xi)` of `T*R^4` over the sphere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CotangentState {
    pub x: Vec4,
    pub xi: Vec4,
}

impl CotangentState {
    pub fn new(x: S3Point, xi: Vec4) -> Self {
        CotangentState { x: x.coords(), xi }
    }

    pub fn to_array(&self) -> [f64; 8] {
        let (x, p) = (&self.x, &self.xi);
        [x[0], x[1], x[2], x[3], p[0], p[1], p[2], p[3]]
    }

    pub fn from_array(y: &[f64; 8]) -> Self {
        CotangentState { x: [y[0], y[1], y[2], y[3]], xi: [y[4], y[5], y[6], y[7]] }
    }

    /// `phi = xi1 + i xi2`.
    pub fn phi(&self) -> num_complex::Complex64 {
        num_complex::Complex64::new(self.xi[0], self.xi[1])
    }

    /// `psi = xi3 + i xi4`.
    pub fn psi(&self) -> num_complex::Complex64 {
        num_complex::Complex64::new(self.xi[2], self.xi[3])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FirstIntegrals {
    pub j1: f64,
    pub j2: f64,
    pub j3: f64,
    pub j4: f64,
}

impl FirstIntegrals {
    pub fn as_array(&self) -> [f64; 4] {
        [self.j1, self.j2, self.j3, self.j4]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Control {
    pub u: f64,
    pub v: f64,
}

/// `(<I1 x, xi>, <I2 x, xi>)`, the optimal control.
#[inline]
pub fn momenta_xy(s: &CotangentState) -> (f64, f64) {
    (dot(&i1(&s.x), &s.xi), dot(&i2(&s.x), &s.xi))
}

pub fn hamiltonian_value(s: &CotangentState) -> f64 {
    let (u, v) = momenta_xy(s);
    0.5 * (u * u + v * v)
}

/// `(xdot, xidot)` of Hamilton's equations.
pub fn hamiltonian_rhs(s: &CotangentState) -> CotangentState {
    let (u, v) = momenta_xy(s);
    control_rhs(s, &Control { u, v })
}

fn rhs_array(y: &[f64; 8]) -> [f64; 8] {
    hamiltonian_rhs(&CotangentState::from_array(y)).to_array()
}

pub fn first_integrals(s: &CotangentState) -> FirstIntegrals {
    let (x, p) = (&s.x, &s.xi);
    FirstIntegrals {
        j1: dot(x, p),
        j2: -x[1] * p[0] + x[0] * p[1] + x[3] * p[2] - x[2] * p[3],
        j3: -x[2] * p[0] + x[3] * p[1] + x[0] * p[2] - x[1] * p[3],
        j4: -x[3] * p[0] - x[2] * p[1] + x[1] * p[2] + x[0] * p[3],
    }
}

/// Canonical bracket `sum_k (dF/dx_k dG/dxi_k - dG/dx_k dF/dxi_k)` by central differences
/// with step `cbrt(eps) * max(1, |coordinate|)`.
pub fn poisson_bracket<F, G>(f: F, g: G, s: &CotangentState) -> f64
where
    F: Fn(&CotangentState) -> f64,
    G: Fn(&CotangentState) -> f64,
{
    let y = s.to_array();
    let grad = |h: &dyn Fn(&CotangentState) -> f64| {
        let mut out = [0.0; 8];
        for k in 0..8 {
            let step = f64::EPSILON.cbrt() * y[k].abs().max(1.0);
            let (mut a, mut b) = (y, y);
            a[k] += step;
            b[k] -= step;
            out[k] = (h(&CotangentState::from_array(&a)) - h(&CotangentState::from_array(&b)))
                / (2.0 * step);
        }
        out
    };
    let df = grad(&f);
    let dg = grad(&g);
    (0..4).map(|k| df[k] * dg[k + 4] - dg[k] * df[k + 4]).sum()
}

pub fn optimal_control(s: &CotangentState) -> Control {
    let (u, v) = momenta_xy(s);
    Control { u, v }
}

/// `-1/2 (u^2 + v^2) + u <I1 x, xi> + v <I2 x, xi>`.
pub fn pseudo_hamiltonian(s: &CotangentState, c: &Control) -> f64 {
    let (us, vs) = momenta_xy(s);
    -0.5 * (c.u * c.u + c.v * c.v) + c.u * us + c.v * vs
}

/// `xdot = u I1 x + v I2 x`, `xidot = u I1 xi + v I2 xi`.
pub fn control_rhs(s: &CotangentState, c: &Control) -> CotangentState {
    CotangentState {
        x: axpy(c.u, &i1(&s.x), &scale(c.v, &i2(&s.x))),
        xi: axpy(c.u, &i1(&s.xi), &scale(c.v, &i2(&s.xi))),
    }
}

/// Recovers `(u, v)` from a velocity: the `X` and `Y` coefficients of `xdot`.
pub fn control_from_velocity(x: &Vec4, xdot: &Vec4) -> Control {
    Control { u: dot(&i1(x), xdot), v: dot(&i2(x), xdot) }
}

/// Determinant of the linear map `xi -> (J1, J2, J3, J4)`; the rows are orthonormal on the
/// sphere and the determinant is homogeneous of degree four in `x`.
pub fn abnormal_system_determinant(x: &Vec4) -> f64 {
    let m = Matrix4::new(
        x[0], x[1], x[2], x[3],
        -x[1], x[0], -x[3], x[2],
        -x[2], x[3], x[0], -x[1],
        -x[3], -x[2], x[1], x[0],
    );
    m.determinant()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegrateOptions {
    pub ode: OdeOptions,
    /// Number of output intervals.
    pub samples: usize,
    /// Projects `x` back onto the sphere at every output time.
    pub renormalize: bool,
}

impl Default for IntegrateOptions {
    fn default() -> Self {
        IntegrateOptions { ode: OdeOptions::default(), samples: 100, renormalize: false }
    }
}

/// Largest deviations from the initial values, each divided by `max(1, |initial|)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Drift {
    pub h: f64,
    pub j: [f64; 4],
    pub norm: f64,
    /// Largest `|<xdot, I3 x>|`.
    pub horizontality: f64,
    /// Largest `| |xdot|^2 - 2H |`.
    pub speed: f64,
}

impl Drift {
    pub fn max_conserved(&self) -> f64 {
        self.j.iter().copied().fold(self.h.max(self.norm), f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub samples: Vec<(f64, CotangentState)>,
    pub drift: Drift,
}

/// Integrates the Hamiltonian flow over `[0, t]`.
pub fn integrate(s0: &CotangentState, t: f64, opts: &IntegrateOptions) -> Result<Trajectory> {
    let times = ode::linspace(0.0, t, opts.samples);
    let samples: Vec<(f64, CotangentState)> = if opts.renormalize {
        let mut out = vec![(0.0, *s0)];
        let mut y = s0.to_array();
        for w in times.windows(2) {
            let sol = ode::integrate(|_, y: &[f64; 8]| rhs_array(y), w[0], y, &[w[1]], &opts.ode)?;
            y = sol.samples[0].1;
            let n = (y[0] * y[0] + y[1] * y[1] + y[2] * y[2] + y[3] * y[3]).sqrt();
            for v in y.iter_mut().take(4) {
                *v /= n;
            }
            out.push((w[1], CotangentState::from_array(&y)));
        }
        out
    } else {
        let sol = ode::integrate(|_, y: &[f64; 8]| rhs_array(y), 0.0, s0.to_array(), &times, &opts.ode)?;
        sol.samples.iter().map(|(t, y)| (*t, CotangentState::from_array(y))).collect()
    };
    let h0 = hamiltonian_value(s0);
    let j0 = first_integrals(s0).as_array();
    let n0 = norm(&s0.x);
    let mut d = Drift::default();
    for (_, s) in &samples {
        d.h = d.h.max((hamiltonian_value(s) - h0).abs() / h0.abs().max(1.0));
        let j = first_integrals(s).as_array();
        for k in 0..4 {
            d.j[k] = d.j[k].max((j[k] - j0[k]).abs() / j0[k].abs().max(1.0));
        }
        d.norm = d.norm.max((norm(&s.x) - n0).abs() / n0.max(1.0));
        let v = hamiltonian_rhs(s);
        d.horizontality = d.horizontality.max(dot(&v.x, &i3(&s.x)).abs());
        d.speed = d.speed.max((dot(&v.x, &v.x) - 2.0 * hamiltonian_value(s)).abs());
    }
    Ok(Trajectory { samples, drift: d })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(x: Vec4, xi: Vec4) -> CotangentState {
        CotangentState::new(S3Point::normalized(x).unwrap(), xi)
    }

    #[test]
    fn energy_at_identity() {
        let s = state([1.0, 0.0, 0.0, 0.0], [0.0, 0.0, 0.6, -1.3]);
        assert!((hamiltonian_value(&s) - 0.5 * (0.36 + 1.69)).abs() < 1e-15);
        assert_eq!(hamiltonian_value(&state([1.0, 0.0, 0.0, 0.0], [0.0; 4])), 0.0);
    }

    #[test]
    fn vertical_covector_has_zero_energy() {
        let x = S3Point::normalized([0.3, 0.1, -0.8, 0.5]).unwrap();
        let s = CotangentState::new(x, scale(2.5, &i3(&x.coords())));
        assert!(hamiltonian_value(&s).abs() < 1e-30);
    }

    #[test]
    fn integrals_at_identity() {
        let s = state([1.0, 0.0, 0.0, 0.0], [0.1, 0.2, 0.3, 0.4]);
        assert_eq!(first_integrals(&s).as_array(), [0.1, 0.2, 0.3, 0.4]);
    }

    #[test]
    fn bracket_of_a_function_with_itself() {
        let s = state([0.2, 0.4, 0.1, -0.3], [1.0, -0.5, 0.2, 0.7]);
        assert_eq!(poisson_bracket(hamiltonian_value, hamiltonian_value, &s), 0.0);
    }

    #[test]
    fn hamiltonian_brackets_vanish() {
        let s = state([0.2, 0.4, 0.1, -0.3], [1.0, -0.5, 0.2, 0.7]);
        let js: [fn(&CotangentState) -> f64; 4] = [
            |s| first_integrals(s).j1,
            |s| first_integrals(s).j2,
            |s| first_integrals(s).j3,
            |s| first_integrals(s).j4,
        ];
        for j in js {
            assert!(poisson_bracket(j, hamiltonian_value, &s).abs() < 1e-7);
        }
    }

    #[test]
    fn control_form_matches_hamiltonian_form() {
        let s = state([0.5, -0.1, 0.4, 0.3], [0.3, 0.9, -1.1, 0.2]);
        let c = optimal_control(&s);
        assert!((pseudo_hamiltonian(&s, &c) - hamiltonian_value(&s)).abs() < 1e-15);
        let a = control_rhs(&s, &c);
        let b = hamiltonian_rhs(&s);
        assert_eq!(a, b);
        let zero = control_rhs(&s, &Control { u: 0.0, v: 0.0 });
        assert_eq!(zero.to_array(), [0.0; 8]);
        let rec = control_from_velocity(&s.x, &b.x);
        assert!((rec.u - c.u).abs() < 1e-15 && (rec.v - c.v).abs() < 1e-15);
    }

    #[test]
    fn determinant_homogeneity() {
        assert!((abnormal_system_determinant(&[1.0, 0.0, 0.0, 0.0]).abs() - 1.0).abs() < 1e-15);
        let x = S3Point::normalized([0.3, -0.2, 0.9, 0.1]).unwrap().coords();
        assert!((abnormal_system_determinant(&x).abs() - 1.0).abs() < 1e-12);
        let d = abnormal_system_determinant(&scale(1.7, &x));
        assert!((d.abs() - 1.7f64.powi(4)).abs() < 1e-11);
    }

    #[test]
    fn stationary_without_momentum() {
        let s = state([0.5, 0.5, 0.5, 0.5], [0.0; 4]);
        let tr = integrate(&s, 3.0, &IntegrateOptions::default()).unwrap();
        assert!(tr.samples.iter().all(|(_, q)| *q == s));
    }

    #[test]
    fn renormalized_integration_stays_on_sphere() {
        let s = state([0.5, 0.5, 0.5, 0.5], [0.3, -0.2, 0.8, 0.1]);
        let opts = IntegrateOptions { renormalize: true, samples: 20, ..Default::default() };
        let tr = integrate(&s, 5.0, &opts).unwrap();
        assert!(tr.drift.norm < 1e-15);
        assert!(tr.drift.h < 1e-8);
    }
}
