//! Geodesics in the chart `x = (cos z1 cos eta, sin z1 cos eta, cos z2 sin eta, sin z2 sin eta)`.
//!
//! The Hamiltonian is `H = ½(ψ1² tan²η + ψ2² cot²η + κθ² + 2ψ1ψ2)`. With `κ = 1` it is the
//! pullback of the cartesian Hamiltonian through the chart; the default `κ = 4` rescales the
//! `η` direction of the metric. Both share the horizontal distribution.
//!
//! Closed forms use `A = ψ1²/cos²η0 + ψ2²/sin²η0 + κθ0²`, `q = ψ/√A`,
//! `m = ½(1 + q2² − q1²)`, `D0 = √(m² − q2²)` and the phase `x(s) = σΩs + D1` with
//! `Ω = 2√(κA)`, so that `sin²η(s) = m + D0 sin x(s)`.

use std::f64::consts::{FRAC_PI_2, PI};

use crate::error::{Error, Result};
use crate::hamiltonian::CotangentState;
use crate::numeric::{bisect, scan_brackets};
use crate::ode::{integrate, OdeOptions};
use crate::s3_core::{angle_diff, dot, from_hyper, to_hyper, HyperPoint, S3Point, Vec4, CHART_EPS};

/// Normalization of the `η` momentum used by default.
pub const DEFAULT_KAPPA: f64 = 4.0;
/// The value of `κ` for which the chart system is the pullback of the cartesian one.
pub const PULLBACK_KAPPA: f64 = 1.0;
/// `D0` below this is treated as a stationary `η`.
pub const D0_EPS: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HyperModel {
    pub kappa: f64,
}

impl Default for HyperModel {
    fn default() -> Self {
        HyperModel { kappa: DEFAULT_KAPPA }
    }
}

/// Chart point together with the momenta `(ψ1, ψ2, θ)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct HyperState {
    pub zeta1: f64,
    pub zeta2: f64,
    pub eta: f64,
    pub psi1: f64,
    pub psi2: f64,
    pub theta: f64,
}

impl HyperState {
    pub fn to_array(&self) -> [f64; 6] {
        [self.zeta1, self.zeta2, self.eta, self.psi1, self.psi2, self.theta]
    }

    pub fn from_array(y: &[f64; 6]) -> Self {
        HyperState { zeta1: y[0], zeta2: y[1], eta: y[2], psi1: y[3], psi2: y[4], theta: y[5] }
    }

    pub fn point(&self) -> HyperPoint {
        HyperPoint { zeta1: self.zeta1, zeta2: self.zeta2, eta: self.eta }
    }
}

pub fn check_chart(eta: f64) -> Result<()> {
    if eta > CHART_EPS && eta < FRAC_PI_2 - CHART_EPS {
        Ok(())
    } else {
        Err(Error::ChartBoundary { eta })
    }
}

impl HyperModel {
    pub fn new(kappa: f64) -> Result<Self> {
        if !(kappa > 0.0) || !kappa.is_finite() {
            return Err(Error::InvalidConfig(format!("kappa = {kappa} must be positive")));
        }
        Ok(HyperModel { kappa })
    }

    pub fn hamiltonian(&self, s: &HyperState) -> Result<f64> {
        check_chart(s.eta)?;
        let t = s.eta.tan();
        Ok(0.5
            * (s.psi1 * s.psi1 * t * t + s.psi2 * s.psi2 / (t * t) + self.kappa * s.theta * s.theta
                + 2.0 * s.psi1 * s.psi2))
    }

    /// Symmetric bilinear form of the co-metric, `H(p) = ½ cometric(p, p)`.
    /// Covectors are `(∂ζ1, ∂ζ2, ∂η)` components.
    pub fn cometric(&self, eta: f64, a: [f64; 3], b: [f64; 3]) -> f64 {
        let t2 = eta.tan().powi(2);
        a[0] * b[0] * t2 + a[1] * b[1] / t2 + a[0] * b[1] + a[1] * b[0] + self.kappa * a[2] * b[2]
    }

    pub fn rhs(&self, s: &HyperState) -> Result<HyperState> {
        check_chart(s.eta)?;
        Ok(self.rhs_unchecked(s))
    }

    fn rhs_unchecked(&self, s: &HyperState) -> HyperState {
        let (sn, cs) = s.eta.sin_cos();
        let t = sn / cs;
        HyperState {
            zeta1: s.psi1 * t * t + s.psi2,
            zeta2: s.psi2 / (t * t) + s.psi1,
            eta: self.kappa * s.theta,
            psi1: 0.0,
            psi2: 0.0,
            theta: -s.psi1 * s.psi1 * t / (cs * cs) + s.psi2 * s.psi2 / (t * sn * sn),
        }
    }

    /// Numerical flow sampled at `times` (ascending, starting at or after 0).
    pub fn flow(&self, s0: &HyperState, times: &[f64], opts: &OdeOptions) -> Result<Vec<HyperState>> {
        check_chart(s0.eta)?;
        let f = |_: f64, y: &[f64; 6]| {
            let st = HyperState::from_array(y);
            if check_chart(st.eta).is_err() {
                return [f64::NAN; 6];
            }
            self.rhs_unchecked(&st).to_array()
        };
        let sol = integrate(f, 0.0, s0.to_array(), times, opts)?;
        let out: Vec<HyperState> = sol.samples.iter().map(|(_, y)| HyperState::from_array(y)).collect();
        for s in &out {
            check_chart(s.eta)?;
        }
        Ok(out)
    }
}

fn chart_jacobian(p: &HyperPoint) -> [Vec4; 3] {
    let (s1, c1) = p.zeta1.sin_cos();
    let (s2, c2) = p.zeta2.sin_cos();
    let (se, ce) = p.eta.sin_cos();
    [
        [-s1 * ce, c1 * ce, 0.0, 0.0],
        [0.0, 0.0, -s2 * se, c2 * se],
        [-c1 * se, -s1 * se, c2 * ce, s2 * ce],
    ]
}

/// Covector on the sphere whose pairings with the chart partials are `(ψ1, ψ2, θ)`
/// and which annihilates the normal direction.
pub fn lift_covector(s: &HyperState) -> Result<CotangentState> {
    check_chart(s.eta)?;
    let p = s.point();
    let [d1, d2, de] = chart_jacobian(&p);
    let (c2, s2) = (s.eta.cos().powi(2), s.eta.sin().powi(2));
    let mut xi = [0.0; 4];
    for i in 0..4 {
        xi[i] = s.psi1 * d1[i] / c2 + s.psi2 * d2[i] / s2 + s.theta * de[i];
    }
    Ok(CotangentState { x: from_hyper(&p).coords(), xi })
}

/// Chart coordinates and momenta `(⟨ξ, ∂ζ1⟩, ⟨ξ, ∂ζ2⟩, ⟨ξ, ∂η⟩)` of a cotangent state.
pub fn project_covector(c: &CotangentState) -> Result<HyperState> {
    let p = to_hyper(&S3Point::new(c.x)?)?;
    let [d1, d2, de] = chart_jacobian(&p);
    Ok(HyperState {
        zeta1: p.zeta1,
        zeta2: p.zeta2,
        eta: p.eta,
        psi1: dot(&c.xi, &d1),
        psi2: dot(&c.xi, &d2),
        theta: dot(&c.xi, &de),
    })
}

/// Antiderivative of `1/(a − b sin x)` with `k = √(a² − b²) > 0`, continuous in `x`.
pub fn periodic_antiderivative(x: f64, a: f64, b: f64, k: f64) -> f64 {
    let j = ((x + PI) / (2.0 * PI)).floor();
    let y = x - 2.0 * PI * j;
    (2.0 / k) * (((a * (0.5 * y).tan() - b) / k).atan() + PI * j)
}

/// Representation of the terminal phase as `arcsin v + 2πn` or, when `reflected`,
/// `π − arcsin v + 2πn`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PhaseBranch {
    pub n: i32,
    pub reflected: bool,
}

impl PhaseBranch {
    pub fn phase(&self, v: f64) -> f64 {
        let base = if self.reflected { PI - v.asin() } else { v.asin() };
        base + 2.0 * PI * self.n as f64
    }

    pub fn of_phase(x: f64) -> Self {
        let (s, c) = x.sin_cos();
        let reflected = c < 0.0;
        let base = if reflected { PI - s.asin() } else { s.asin() };
        PhaseBranch { n: ((x - base) / (2.0 * PI)).round() as i32, reflected }
    }
}

fn shape(q1: f64, q2: f64) -> (f64, f64) {
    let m = 0.5 * (1.0 + q2 * q2 - q1 * q1);
    (m, (m * m - q2 * q2).max(0.0).sqrt())
}

/// Closed-form geodesic from `(ζ1⁰, ζ2⁰, η0)` in normalized constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HyperGeodesicSolution {
    pub kappa: f64,
    pub a: f64,
    pub psi1_t: f64,
    pub psi2_t: f64,
    /// Branch of the terminal phase `x(t)`.
    pub n: i32,
    pub reflected: bool,
    /// Sign of `θ0`; the phase runs as `σΩs`.
    pub sign: f64,
    pub d0: f64,
    pub d1: f64,
    pub eta0: f64,
    pub t: f64,
    pub zeta0: (f64, f64),
}

impl HyperGeodesicSolution {
    /// Solution with normalized momenta `ψ̃`, energy constant `A` and sign `σ` of `θ0`.
    pub fn from_normalized(
        model: &HyperModel,
        eta0: f64,
        psi1_t: f64,
        psi2_t: f64,
        a: f64,
        sign: f64,
        t: f64,
    ) -> Result<Self> {
        check_chart(eta0)?;
        if !(a > 0.0) || !a.is_finite() {
            return Err(Error::DomainError(format!("A = {a} must be positive")));
        }
        let ell = (psi1_t / eta0.cos()).powi(2) + (psi2_t / eta0.sin()).powi(2);
        if ell > 1.0 + 1e-12 {
            return Err(Error::NegativeRadicand { value: 1.0 - ell });
        }
        let (m, d0) = shape(psi1_t, psi2_t);
        let d1 = if d0 < D0_EPS { 0.0 } else { ((eta0.sin().powi(2) - m) / d0).clamp(-1.0, 1.0).asin() };
        let sign = if sign < 0.0 { -1.0 } else { 1.0 };
        let mut s = HyperGeodesicSolution {
            kappa: model.kappa,
            a,
            psi1_t,
            psi2_t,
            n: 0,
            reflected: false,
            sign,
            d0,
            d1,
            eta0,
            t,
            zeta0: (0.0, 0.0),
        };
        let b = PhaseBranch::of_phase(s.phase(t));
        s.n = b.n;
        s.reflected = b.reflected;
        Ok(s)
    }

    /// Solution through the initial state `s0` (the `ψ1 = ψ2 = θ0 = 0` state is rejected).
    pub fn from_initial(model: &HyperModel, s0: &HyperState, t: f64) -> Result<Self> {
        check_chart(s0.eta)?;
        let a = (s0.psi1 / s0.eta.cos()).powi(2) + (s0.psi2 / s0.eta.sin()).powi(2) + model.kappa * s0.theta.powi(2);
        if !(a > 0.0) {
            return Err(Error::DomainError("zero covector has no geodesic".into()));
        }
        let r = a.sqrt();
        let mut sol = Self::from_normalized(model, s0.eta, s0.psi1 / r, s0.psi2 / r, a, s0.theta, t)?;
        if s0.theta == 0.0 {
            sol.sign = 1.0;
        }
        sol.zeta0 = (s0.zeta1, s0.zeta2);
        let b = PhaseBranch::of_phase(sol.phase(t));
        sol.n = b.n;
        sol.reflected = b.reflected;
        Ok(sol)
    }

    pub fn psi1(&self) -> f64 {
        self.psi1_t * self.a.sqrt()
    }

    pub fn psi2(&self) -> f64 {
        self.psi2_t * self.a.sqrt()
    }

    pub fn m(&self) -> f64 {
        0.5 * (1.0 + self.psi2_t * self.psi2_t - self.psi1_t * self.psi1_t)
    }

    pub fn omega(&self) -> f64 {
        2.0 * (self.kappa * self.a).sqrt()
    }

    pub fn phase(&self, s: f64) -> f64 {
        self.sign * self.omega() * s + self.d1
    }

    pub fn theta0(&self) -> f64 {
        let e = self.eta0;
        let rad = 1.0 - (self.psi1_t / e.cos()).powi(2) - (self.psi2_t / e.sin()).powi(2);
        self.sign * (self.a * rad.max(0.0) / self.kappa).sqrt()
    }

    /// `½A(1 − (ψ̃1 − ψ̃2)²)`.
    pub fn hamiltonian(&self) -> f64 {
        0.5 * self.a * (1.0 - (self.psi1_t - self.psi2_t).powi(2))
    }

    pub fn sin2_eta(&self, s: f64) -> f64 {
        if self.d0 < D0_EPS {
            return self.eta0.sin().powi(2);
        }
        self.m() + self.d0 * self.phase(s).sin()
    }

    pub fn eta_of_s(&self, s: f64) -> f64 {
        self.sin2_eta(s).clamp(0.0, 1.0).sqrt().asin()
    }

    /// Signed `θ(s) = η̇(s)/κ`.
    pub fn theta_of_s(&self, s: f64) -> f64 {
        if self.d0 < D0_EPS {
            return 0.0;
        }
        let eta = self.eta_of_s(s);
        self.d0 * self.sign * self.omega() * self.phase(s).cos() / (self.kappa * (2.0 * eta).sin())
    }

    /// `θ` at a given `η` from conservation of `H`, carrying the solution's sign flag.
    pub fn theta_at_eta(&self, eta: f64) -> Result<f64> {
        check_chart(eta)?;
        let (p1, p2) = (self.psi1(), self.psi2());
        let g = |e: f64| p1 * p1 * e.tan().powi(2) + p2 * p2 / e.tan().powi(2);
        let rad = self.kappa * self.theta0().powi(2) + g(self.eta0) - g(eta);
        if rad < -1e-12 * self.a.max(1.0) {
            return Err(Error::NegativeRadicand { value: rad });
        }
        Ok(self.sign * (rad.max(0.0) / self.kappa).sqrt())
    }

    /// `(∫0^s ds/cos²η, ∫0^s ds/sin²η)`, with a component set to 0 when its momentum vanishes.
    pub fn inverse_square_integrals(&self, s: f64) -> Result<(f64, f64)> {
        if self.d0 < D0_EPS {
            let (sn, cs) = self.eta0.sin_cos();
            return Ok((s / (cs * cs), s / (sn * sn)));
        }
        let m = self.m();
        let so = self.sign * self.omega();
        let (x0, x1) = (self.d1, self.phase(s));
        let term = |a: f64, b: f64, k: f64, psi: f64| -> Result<f64> {
            if psi == 0.0 {
                return Ok(0.0);
            }
            if k < 1e-300 {
                return Err(Error::PoleCrossing { s });
            }
            Ok((periodic_antiderivative(x1, a, b, k) - periodic_antiderivative(x0, a, b, k)) / so)
        };
        Ok((term(1.0 - m, self.d0, self.psi1_t.abs(), self.psi1_t)?, term(m, -self.d0, self.psi2_t.abs(), self.psi2_t)?))
    }

    /// `(ζ1(s), ζ2(s))`, continuous in `s`.
    pub fn zeta_of_s(&self, s: f64) -> Result<(f64, f64)> {
        let (i1, i2) = self.inverse_square_integrals(s)?;
        let (p1, p2) = (self.psi1(), self.psi2());
        Ok((self.zeta0.0 + s * (p2 - p1) + p1 * i1, self.zeta0.1 + s * (p1 - p2) + p2 * i2))
    }

    pub fn state_at(&self, s: f64) -> Result<HyperState> {
        let (zeta1, zeta2) = self.zeta_of_s(s)?;
        Ok(HyperState {
            zeta1,
            zeta2,
            eta: self.eta_of_s(s),
            psi1: self.psi1(),
            psi2: self.psi2(),
            theta: self.theta_of_s(s),
        })
    }

    pub fn endpoint(&self) -> Result<HyperPoint> {
        Ok(self.state_at(self.t)?.point())
    }
}

/// `(sin²η − m)/D0`, the argument of the arcsin in the branch equation.
pub fn branch_argument(eta: f64, psi1_t: f64, psi2_t: f64) -> Result<f64> {
    let (m, d0) = shape(psi1_t, psi2_t);
    if d0 < D0_EPS {
        return Err(Error::DegenerateOscillation);
    }
    let v = (eta.sin().powi(2) - m) / d0;
    if v.abs() > 1.0 + 1e-12 {
        return Err(Error::ArgumentOutOfRange { value: v });
    }
    Ok(v.clamp(-1.0, 1.0))
}

/// `A` for the terminal phase on `branch`, signed by the direction of the phase.
pub fn branch_phase_constant(
    model: &HyperModel,
    eta0: f64,
    eta: f64,
    psi1_t: f64,
    psi2_t: f64,
    t: f64,
    branch: PhaseBranch,
) -> Result<(f64, f64)> {
    let v1 = branch_argument(eta, psi1_t, psi2_t)?;
    let v0 = branch_argument(eta0, psi1_t, psi2_t)?;
    let dx = branch.phase(v1) - v0.asin();
    let a = (dx / (2.0 * t)).powi(2) / model.kappa;
    Ok((a, if dx < 0.0 { -1.0 } else { 1.0 }))
}

/// `A⁽ⁿ⁾ = (arcsin v(η) − arcsin v(η0) + 2πn)² / (4κt²)`.
pub fn branch_constant_a(
    model: &HyperModel,
    eta0: f64,
    eta: f64,
    psi1_t: f64,
    psi2_t: f64,
    t: f64,
    n: i32,
) -> Result<f64> {
    Ok(branch_phase_constant(model, eta0, eta, psi1_t, psi2_t, t, PhaseBranch { n, reflected: false })?.0)
}

/// Point at time `s` on the horizontal great circle through `(1/√2, 0, 1/√2, 0)` with
/// direction angle `sigma`.
pub fn horizontal_circle_point(sigma: f64, s: f64) -> Result<HyperPoint> {
    let (ss, cs) = s.sin_cos();
    let (sg, cg) = sigma.sin_cos();
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let x = [r * (cs - cg * ss), r * sg * ss, r * (cs + cg * ss), r * sg * ss];
    to_hyper(&S3Point::new(x)?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BvpOptions {
    pub n_min: i32,
    pub n_max: i32,
    /// Seeds per axis of the grid over the admissible ellipse.
    pub grid: usize,
    /// Maximum endpoint residual of an accepted solution.
    pub tol: f64,
}

impl Default for BvpOptions {
    fn default() -> Self {
        BvpOptions { n_min: -8, n_max: 8, grid: 64, tol: 1e-9 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BvpSolution {
    pub solution: HyperGeodesicSolution,
    pub residual: f64,
    /// Set on the solution of least energy.
    pub minimizer: bool,
}

struct BvpProblem<'a> {
    model: &'a HyperModel,
    target: HyperPoint,
    eta0: f64,
    t: f64,
    branch: PhaseBranch,
}

impl BvpProblem<'_> {
    fn solution(&self, q: [f64; 2]) -> Result<HyperGeodesicSolution> {
        let (a, sign) =
            branch_phase_constant(self.model, self.eta0, self.target.eta, q[0], q[1], self.t, self.branch)?;
        HyperGeodesicSolution::from_normalized(self.model, self.eta0, q[0], q[1], a, sign, self.t)
    }

    fn residual(&self, q: [f64; 2]) -> Option<[f64; 2]> {
        let sol = self.solution(q).ok()?;
        let (z1, z2) = sol.zeta_of_s(self.t).ok()?;
        let r = [angle_diff(z1, self.target.zeta1), angle_diff(z2, self.target.zeta2)];
        r.iter().all(|v| v.is_finite()).then_some(r)
    }

    fn newton(&self, mut q: [f64; 2]) -> Option<[f64; 2]> {
        let nrm = |r: [f64; 2]| r[0].hypot(r[1]);
        let mut r = self.residual(q)?;
        for _ in 0..60 {
            if nrm(r) < 1e-13 {
                break;
            }
            let h = 1e-7;
            let mut jac = [[0.0; 2]; 2];
            for j in 0..2 {
                let (mut qp, mut qm) = (q, q);
                qp[j] += h;
                qm[j] -= h;
                let (rp, rm) = (self.residual(qp)?, self.residual(qm)?);
                for i in 0..2 {
                    jac[i][j] = (rp[i] - rm[i]) / (2.0 * h);
                }
            }
            let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
            if det == 0.0 || !det.is_finite() {
                return None;
            }
            let dq = [
                (jac[1][1] * r[0] - jac[0][1] * r[1]) / det,
                (-jac[1][0] * r[0] + jac[0][0] * r[1]) / det,
            ];
            let mut lambda = 1.0;
            let mut moved = false;
            for _ in 0..30 {
                let qn = [q[0] - lambda * dq[0], q[1] - lambda * dq[1]];
                if let Some(rn) = self.residual(qn) {
                    if nrm(rn) < nrm(r) {
                        q = qn;
                        r = rn;
                        moved = true;
                        break;
                    }
                }
                lambda *= 0.5;
            }
            if !moved {
                break;
            }
        }
        Some(q)
    }

    fn solve(&self, grid: usize, tol: f64) -> Vec<(HyperGeodesicSolution, f64)> {
        let (c0, s0) = (self.eta0.cos(), self.eta0.sin());
        let cell = |i: usize| -1.0 + 2.0 * (i as f64 + 0.5) / grid as f64;
        let norms: Vec<f64> = (0..grid * grid)
            .map(|ij| {
                let (u, v) = (cell(ij / grid), cell(ij % grid));
                if u * u + v * v >= 1.0 {
                    return f64::INFINITY;
                }
                self.residual([c0 * u, s0 * v]).map_or(f64::INFINITY, |r| r[0].hypot(r[1]))
            })
            .collect();
        // Newton starts from cells whose residual is a local minimum of the 8-neighbourhood, and
        // from the rim `|q| -> 1`, where small vertical momenta put roots in thin basins.
        let is_seed = |i: usize, j: usize| -> bool {
            let here = norms[i * grid + j];
            if !here.is_finite() {
                return false;
            }
            let lo = |k: usize| k.saturating_sub(1);
            let hi = |k: usize| (k + 1).min(grid - 1);
            let rim = (lo(i)..=hi(i)).any(|a| (lo(j)..=hi(j)).any(|b| cell(a).hypot(cell(b)) >= 1.0));
            rim || (lo(i)..=hi(i)).all(|a| (lo(j)..=hi(j)).all(|b| norms[a * grid + b] >= here))
        };
        let mut found: Vec<(HyperGeodesicSolution, f64)> = Vec::new();
        for i in 0..grid {
            for j in 0..grid {
                if !is_seed(i, j) {
                    continue;
                }
                let Some(q) = self.newton([c0 * cell(i), s0 * cell(j)]) else { continue };
                let Ok(sol) = self.solution(q) else { continue };
                let Ok(end) = sol.endpoint() else { continue };
                let res = angle_diff(end.zeta1, self.target.zeta1)
                    .abs()
                    .max(angle_diff(end.zeta2, self.target.zeta2).abs())
                    .max((end.eta - self.target.eta).abs());
                if res > tol {
                    continue;
                }
                let dup = found.iter().any(|(s, _)| {
                    (s.psi1_t - sol.psi1_t).abs() < 1e-7
                        && (s.psi2_t - sol.psi2_t).abs() < 1e-7
                        && (s.a - sol.a).abs() < 1e-7 * s.a.max(1.0)
                });
                if !dup {
                    found.push((sol, res));
                }
            }
        }
        found
    }
}

/// All geodesics from `(0, 0, η0)` reaching `target` at time `t` on the phase branches
/// `n_min..=n_max`, both arcsin reflections. Endpoint angles are matched modulo `2π`.
pub fn solve_bvp(
    model: &HyperModel,
    target: &HyperPoint,
    eta0: f64,
    t: f64,
    opts: &BvpOptions,
) -> Result<Vec<BvpSolution>> {
    check_chart(eta0)?;
    check_chart(target.eta)?;
    if !(t > 0.0) || opts.n_min > opts.n_max || opts.grid == 0 {
        return Err(Error::InvalidConfig("need t > 0, n_min <= n_max and grid > 0".into()));
    }
    let branches: Vec<PhaseBranch> = (opts.n_min..=opts.n_max)
        .flat_map(|n| [false, true].map(|reflected| PhaseBranch { n, reflected }))
        .collect();
    let workers = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1).min(branches.len());
    let mut per_branch: Vec<Vec<(HyperGeodesicSolution, f64)>> = vec![Vec::new(); branches.len()];
    std::thread::scope(|scope| {
        let chunks: Vec<_> = per_branch.chunks_mut(branches.len().div_ceil(workers)).collect();
        let mut start = 0;
        for chunk in chunks {
            let len = chunk.len();
            let bs = &branches[start..start + len];
            start += len;
            scope.spawn(move || {
                for (slot, &branch) in chunk.iter_mut().zip(bs) {
                    let p = BvpProblem { model, target: *target, eta0, t, branch };
                    *slot = p.solve(opts.grid, opts.tol);
                }
            });
        }
    });
    let mut all: Vec<BvpSolution> = Vec::new();
    for (sol, residual) in per_branch.into_iter().flatten() {
        let dup = all.iter().any(|b| {
            (b.solution.psi1_t - sol.psi1_t).abs() < 1e-7
                && (b.solution.psi2_t - sol.psi2_t).abs() < 1e-7
                && (b.solution.a - sol.a).abs() < 1e-7 * sol.a.max(1.0)
        });
        if !dup {
            all.push(BvpSolution { solution: sol, residual, minimizer: false });
        }
    }
    if all.is_empty() {
        return Err(Error::NoSolutionInBranchRange { n_min: opts.n_min, n_max: opts.n_max });
    }
    all.sort_by(|a, b| {
        let (x, y) = (&a.solution, &b.solution);
        (x.n, x.reflected)
            .cmp(&(y.n, y.reflected))
            .then(x.sign.total_cmp(&y.sign))
            .then(x.psi1_t.total_cmp(&y.psi1_t))
    });
    let best = all
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.solution.hamiltonian().total_cmp(&b.1.solution.hamiltonian()))
        .map(|(i, _)| i)
        .unwrap();
    all[best].minimizer = true;
    Ok(all)
}

/// `√A` values (ascending) of geodesics from `η0` with momenta `(ψ1, ψ2)`, phase direction
/// `sign`, that reach `η` at time `t`; at most `count` roots are returned.
pub fn radius_roots(
    model: &HyperModel,
    eta0: f64,
    eta: f64,
    psi1: f64,
    psi2: f64,
    t: f64,
    sign: f64,
    count: usize,
) -> Result<Vec<f64>> {
    check_chart(eta0)?;
    check_chart(eta)?;
    if !(t > 0.0) {
        return Err(Error::DomainError(format!("t = {t} must be positive")));
    }
    let rmin = ((psi1 / eta0.cos()).powi(2) + (psi2 / eta0.sin()).powi(2)).sqrt();
    let target = eta.sin().powi(2);
    let g = |r: f64| -> f64 {
        if r <= 0.0 {
            return f64::NAN;
        }
        let (q1, q2) = (psi1 / r, psi2 / r);
        let (m, d0) = shape(q1, q2);
        if d0 < D0_EPS {
            return eta0.sin().powi(2) - target;
        }
        let d1 = ((eta0.sin().powi(2) - m) / d0).clamp(-1.0, 1.0).asin();
        m + d0 * (d1 + sign * 2.0 * model.kappa.sqrt() * r * t).sin() - target
    };
    let period = PI / (model.kappa.sqrt() * t);
    let cells = 256;
    let mut roots: Vec<f64> = Vec::new();
    let lo0 = rmin.max(1e-12) * (1.0 + 1e-12);
    let mut lo = lo0;
    for _ in 0..(count + 4) * 4 {
        let hi = lo + period;
        for (a, b) in scan_brackets(g, lo, hi, cells) {
            let r = bisect(g, a, b, 1e-15 * b.max(1.0));
            if roots.last().is_none_or(|&p| r - p > 1e-12 * r.max(1.0)) {
                roots.push(r);
            }
        }
        if roots.len() >= count {
            break;
        }
        lo = hi;
    }
    roots.truncate(count);
    Ok(roots)
}

#[cfg(test)]
mod tests {
    use std::f64::consts::FRAC_PI_4;
    use super::*;
    use crate::hamiltonian::hamiltonian_value;
    use crate::numeric::diff1;

    fn sample_state(k: u64) -> HyperState {
        let r = |i: u64| ((k * 7919 + i * 104729) % 1000) as f64 / 1000.0;
        HyperState {
            zeta1: 2.0 * r(1) - 1.0,
            zeta2: 2.0 * r(2) - 1.0,
            eta: 0.3 + 0.9 * r(3),
            psi1: 2.0 * r(4) - 1.0,
            psi2: 2.0 * r(5) - 1.0,
            theta: 2.0 * r(6) - 1.0,
        }
    }

    #[test]
    fn pullback_hamiltonian_matches_cartesian() {
        let model = HyperModel::new(PULLBACK_KAPPA).unwrap();
        for k in 0..50 {
            let s = sample_state(k);
            let h = model.hamiltonian(&s).unwrap();
            let c = hamiltonian_value(&lift_covector(&s).unwrap());
            assert!((h - c).abs() < 1e-12 * h.abs().max(1.0));
        }
    }

    #[test]
    fn lift_and_project_are_inverse() {
        for k in 0..20 {
            let s = sample_state(k);
            let back = project_covector(&lift_covector(&s).unwrap()).unwrap();
            for (a, b) in s.to_array().iter().zip(back.to_array()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn characteristic_variety_at_quarter_pi() {
        let model = HyperModel::default();
        let s = HyperState { eta: FRAC_PI_4, psi1: 0.7, psi2: -0.7, ..Default::default() };
        assert!(model.hamiltonian(&s).unwrap().abs() < 1e-15);
        assert_eq!(model.hamiltonian(&HyperState { eta: 0.5, ..Default::default() }).unwrap(), 0.0);
    }

    #[test]
    fn balanced_state_has_no_theta_force() {
        let model = HyperModel::default();
        let s = HyperState { eta: FRAC_PI_4, psi1: 0.4, psi2: 0.4, theta: 0.3, ..Default::default() };
        let d = model.rhs(&s).unwrap();
        assert!(d.theta.abs() < 1e-15);
        assert_eq!(d.eta, 4.0 * 0.3);
    }

    #[test]
    fn chart_boundary_rejected() {
        let model = HyperModel::default();
        let s = HyperState { eta: 0.0, ..Default::default() };
        assert!(matches!(model.hamiltonian(&s), Err(Error::ChartBoundary { .. })));
    }

    #[test]
    fn closed_form_matches_flow() {
        for kappa in [1.0, 4.0] {
            let model = HyperModel::new(kappa).unwrap();
            for k in 0..6 {
                let s0 = sample_state(k + 100);
                let sol = HyperGeodesicSolution::from_initial(&model, &s0, 1.0).unwrap();
                let times: Vec<f64> = (0..=8).map(|i| 0.05 * i as f64).collect();
                let Ok(flow) = model.flow(&s0, &times, &OdeOptions::default()) else { continue };
                for (s, f) in times.iter().zip(flow) {
                    let c = sol.state_at(*s).unwrap();
                    for (a, b) in c.to_array().iter().zip(f.to_array()) {
                        assert!((a - b).abs() < 1e-8, "kappa {kappa} s {s}: {a} vs {b}");
                    }
                }
            }
        }
    }

    #[test]
    fn energy_identity() {
        let model = HyperModel::default();
        let s0 = sample_state(7);
        let sol = HyperGeodesicSolution::from_initial(&model, &s0, 1.0).unwrap();
        let h0 = model.hamiltonian(&s0).unwrap();
        for i in 0..10 {
            let st = sol.state_at(0.1 * i as f64).unwrap();
            assert!((model.hamiltonian(&st).unwrap() - h0).abs() < 1e-9);
        }
        assert!((sol.hamiltonian() - h0).abs() < 1e-12);
    }

    #[test]
    fn theta_from_conservation() {
        let model = HyperModel::default();
        let s0 = sample_state(11);
        let sol = HyperGeodesicSolution::from_initial(&model, &s0, 1.0).unwrap();
        assert!((sol.theta_at_eta(s0.eta).unwrap().abs() - s0.theta.abs()).abs() < 1e-12);
        let lhs = 4.0 * sol.theta0().powi(2);
        let rhs = sol.a - (s0.psi1 / s0.eta.cos()).powi(2) - (s0.psi2 / s0.eta.sin()).powi(2);
        assert!((lhs - rhs).abs() < 1e-12);
        for i in 1..10 {
            let s = 0.1 * i as f64;
            let th = sol.theta_at_eta(sol.eta_of_s(s)).unwrap();
            assert!((th.abs() - sol.theta_of_s(s).abs()).abs() < 1e-7);
        }
    }

    #[test]
    fn eta_derivative_matches_theta() {
        let model = HyperModel::default();
        let sol = HyperGeodesicSolution::from_initial(&model, &sample_state(3), 1.0).unwrap();
        for i in 1..10 {
            let s = 0.1 * i as f64;
            let d = diff1(|x| sol.eta_of_s(x), s, 1e-4);
            assert!((d - 4.0 * sol.theta_of_s(s)).abs() < 1e-6);
        }
    }

    #[test]
    fn zeta1_linear_when_first_momentum_vanishes() {
        let model = HyperModel::default();
        let s0 = HyperState { eta: 0.7, psi1: 0.0, psi2: 0.5, theta: 0.2, ..Default::default() };
        let sol = HyperGeodesicSolution::from_initial(&model, &s0, 1.0).unwrap();
        for i in 0..10 {
            let s = 0.13 * i as f64;
            let (z1, _) = sol.zeta_of_s(s).unwrap();
            assert!((z1 - s * sol.psi2_t * sol.a.sqrt()).abs() < 1e-14);
        }
    }

    #[test]
    fn branch_constant_vertical_family() {
        let model = HyperModel::default();
        for n in 1..4 {
            let a = branch_constant_a(&model, FRAC_PI_4, FRAC_PI_4, 0.3, -0.3, 1.0, n).unwrap();
            assert!((a - (PI * n as f64 / 2.0).powi(2)).abs() < 1e-12);
        }
        assert_eq!(branch_constant_a(&model, 0.6, 0.6, 0.1, 0.2, 1.0, 0).unwrap(), 0.0);
    }

    #[test]
    fn branch_constant_round_trip() {
        let model = HyperModel::default();
        let (q1, q2, eta0, eta, t) = (0.3, -0.2, FRAC_PI_4, 0.9, 0.8);
        for n in 0..3 {
            let (a, sign) =
                branch_phase_constant(&model, eta0, eta, q1, q2, t, PhaseBranch { n, reflected: false }).unwrap();
            let sol = HyperGeodesicSolution::from_normalized(&model, eta0, q1, q2, a, sign, t).unwrap();
            assert!((sol.eta_of_s(t) - eta).abs() < 1e-12);
        }
    }

    #[test]
    fn vertical_target_momentum_relation() {
        // Full periods of the phase add a half turn of the chart angles per period.
        let model = HyperModel::default();
        for n in 1..4 {
            let q = 0.2;
            let a = branch_constant_a(&model, FRAC_PI_4, FRAC_PI_4, q, -q, 1.0, n).unwrap();
            let sol = HyperGeodesicSolution::from_normalized(&model, FRAC_PI_4, q, -q, a, 1.0, 1.0).unwrap();
            let (z1, z2) = sol.zeta_of_s(1.0).unwrap();
            let nn = n as f64;
            assert!((z1 + z2).abs() < 1e-12);
            assert!((z1 - (-PI * nn * q + 0.5 * PI * nn)).abs() < 1e-12);
        }
    }

    #[test]
    fn bvp_recovers_forward_target() {
        let model = HyperModel::default();
        let (q1, q2) = (0.25, -0.1);
        let (a, sign) =
            branch_phase_constant(&model, FRAC_PI_4, 0.9, q1, q2, 1.0, PhaseBranch { n: 0, reflected: false })
                .unwrap();
        let truth = HyperGeodesicSolution::from_normalized(&model, FRAC_PI_4, q1, q2, a, sign, 1.0).unwrap();
        let target = truth.endpoint().unwrap();
        let opts = BvpOptions { n_min: -1, n_max: 1, grid: 24, ..Default::default() };
        let sols = solve_bvp(&model, &target, FRAC_PI_4, 1.0, &opts).unwrap();
        assert!(sols
            .iter()
            .any(|s| (s.solution.psi1_t - q1).abs() < 1e-8 && (s.solution.psi2_t - q2).abs() < 1e-8));
        assert_eq!(sols.iter().filter(|s| s.minimizer).count(), 1);
    }

    #[test]
    fn trivial_target_is_linear_in_eta() {
        let model = HyperModel::default();
        let target = HyperPoint { zeta1: 0.0, zeta2: 0.0, eta: 1.0 };
        let opts = BvpOptions { n_min: 0, n_max: 0, grid: 17, ..Default::default() };
        let sols = solve_bvp(&model, &target, FRAC_PI_4, 1.0, &opts).unwrap();
        let triv = sols
            .iter()
            .find(|s| s.solution.psi1_t.abs() < 1e-9 && s.solution.psi2_t.abs() < 1e-9)
            .expect("trivial solution");
        let e = |s: f64| triv.solution.eta_of_s(s);
        for i in 1..10 {
            let s = 0.1 * i as f64;
            assert!((e(s) - (FRAC_PI_4 + s * (1.0 - FRAC_PI_4))).abs() < 1e-9);
        }
    }

    #[test]
    fn horizontal_circle_surface() {
        for k in 0..10 {
            let sigma = 0.3 * k as f64;
            for i in 1..8 {
                let p = horizontal_circle_point(sigma, 0.1 * i as f64).unwrap();
                assert!((p.zeta1.sin() - p.zeta2.sin() * p.eta.tan()).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn radius_roots_reproduce_eta() {
        let model = HyperModel::default();
        let (p1, p2, eta0, eta, t) = (0.3, -0.4, 0.7, 1.0, 1.0);
        for sign in [1.0, -1.0] {
            let roots = radius_roots(&model, eta0, eta, p1, p2, t, sign, 4).unwrap();
            assert_eq!(roots.len(), 4);
            for r in roots {
                let a = r * r;
                let sol = HyperGeodesicSolution::from_normalized(&model, eta0, p1 / r, p2 / r, a, sign, t).unwrap();
                assert!((sol.eta_of_s(t) - eta).abs() < 1e-10);
            }
        }
    }
}
