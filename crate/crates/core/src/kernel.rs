//! Heat-kernel and Green-function machinery on the characteristic line `ψ1 = −ψ2 = τ`
//! at the base `(0, 0, π/4)`: the `θ0` equation, the `η`-curvature of the action, transport
//! residuals for volume elements, quadrature of the kernel ansatz and a collocation fit.
//!
//! Closed-form expressions in `θ0` use the `κ = 4` normalization. Horizontal derivatives
//! are differences along the flows of the frame fields written in the chart,
//! `X = sin δ (tan η ∂ζ1 + cot η ∂ζ2) + √κ cos δ ∂η`, `Y = cos δ (tan η ∂ζ1 + cot η ∂ζ2) − √κ sin δ ∂η`,
//! `δ = ζ1 − ζ2`.

use std::f64::consts::{FRAC_PI_4, PI};

use nalgebra::{DMatrix, DVector};

use crate::action::{
    f_action, restricted_action, restricted_action_unwrapped, restricted_poles, restricted_radius,
    restricted_tail_threshold, ActionBranch, ActionOptions,
};
use crate::error::{Error, Result};
use crate::geodesics_hyperspherical::{check_chart, HyperModel};
use crate::numeric::{bisect, integrate_adaptive, scan_brackets, try_diff1};
use crate::s3_core::HyperPoint;

/// Flow step for horizontal differences.
pub const FLOW_STEP: f64 = 1e-4;
/// Step for differences in `τ` or `t`.
pub const TAU_STEP: f64 = 1e-4;
/// Base step for the extrapolated derivatives of the action itself.
pub const COEFFICIENT_STEP: f64 = 2e-3;

/// `θ0 ≥ 0` on branch `m` of `cos 2η = √(θ0²/(τ² + θ0²)) sin 8√(τ² + θ0²)`; branch `m`
/// confines `8√(τ² + θ0²)` to `[(m − ½)π, (m + ½)π]`.
pub fn theta0_solve(tau: f64, eta: f64, m: u32) -> Result<f64> {
    check_chart(eta)?;
    let c = (2.0 * eta).cos();
    let g = |r: f64| (1.0 - tau * tau / (r * r)).max(0.0).sqrt() * (8.0 * r).sin() - c;
    let lo = (tau.abs()).max((m as f64 - 0.5) * PI / 8.0).max(1e-300);
    let hi = (m as f64 + 0.5) * PI / 8.0;
    if lo >= hi {
        return Err(Error::NoRootInBranch { branch: m as i32 });
    }
    let r = scan_brackets(g, lo, hi, 512)
        .first()
        .map(|&(a, b)| bisect(g, a, b, 1e-16))
        .ok_or(Error::NoRootInBranch { branch: m as i32 })?;
    let theta0 = (r * r - tau * tau).max(0.0).sqrt();
    if theta0_residual(tau, eta, theta0).abs() > 1e-10 {
        return Err(Error::NoRootInBranch { branch: m as i32 });
    }
    Ok(theta0)
}

/// `√(θ0²/(τ² + θ0²)) sin 8√(τ² + θ0²) − cos 2η`.
pub fn theta0_residual(tau: f64, eta: f64, theta0: f64) -> f64 {
    let r = (tau * tau + theta0 * theta0).sqrt();
    (theta0.abs() / r) * (8.0 * r).sin() - (2.0 * eta).cos()
}

/// Signed `θ(η) = ∂f/∂η` with `θ² = θ0² − τ² cot² 2η`; the sign is `−sign cos 8√(τ² + θ0²)`.
pub fn theta_of_eta(tau: f64, eta: f64, theta0: f64) -> Result<f64> {
    let rad = theta0 * theta0 - (tau / (2.0 * eta).tan()).powi(2);
    if rad <= 0.0 {
        return Err(Error::TurningPoint { theta: rad.max(0.0).sqrt() });
    }
    let om = 8.0 * (tau * tau + theta0 * theta0).sqrt();
    Ok(-om.cos().signum() * rad.sqrt())
}

/// `(1/θ)(4τ² cos 2η / sin³ 2η + 4(τ² + θ0²) tan 2η / (±8√(θ0² tan² 2η − τ²) − τ²/θ0²))`
/// with `± = −sign(cos 8√(τ² + θ0²) cos 2η)`; evaluated in a form that is regular at `η = π/4`.
pub fn delta_x_f(tau: f64, eta: f64, theta0: f64) -> Result<f64> {
    check_chart(eta)?;
    let th = theta_of_eta(tau, eta, theta0)?;
    if th.abs() < 1e-9 {
        return Err(Error::TurningPoint { theta: th });
    }
    let (s2, c2) = (2.0 * eta).sin_cos();
    let om = 8.0 * (tau * tau + theta0 * theta0).sqrt();
    let root = (theta0 * theta0 * s2 * s2 - tau * tau * c2 * c2).max(0.0).sqrt();
    let den = -om.cos().signum() * 8.0 * root - tau * tau * c2 / (theta0 * theta0);
    let second = 4.0 * (tau * tau + theta0 * theta0) * s2 / den;
    Ok((4.0 * tau * tau * c2 / s2.powi(3) + second) / th)
}

/// Branch of the modified action on which the `θ0` of [`theta0_solve`] is realized.
pub fn branch_for_theta0(model: &HyperModel, tau: f64, eta: f64, theta0: f64) -> Result<ActionBranch> {
    let r = 2.0 * (tau * tau + theta0 * theta0).sqrt();
    let roots = crate::geodesics_hyperspherical::radius_roots(model, FRAC_PI_4, eta, tau, -tau, 1.0, -1.0, 64)?;
    roots
        .iter()
        .position(|x| (x - r).abs() < 1e-8 * r.max(1.0))
        .map(|index| ActionBranch { sign: -1, index })
        .ok_or(Error::NoRootInBranch { branch: -1 })
}

/// `2 ∂²f/∂η²` by central differences of the modified action at `ψ = (τ, −τ)`.
pub fn action_eta_curvature(model: &HyperModel, p: &HyperPoint, tau: f64, branch: ActionBranch, h: f64) -> Result<f64> {
    let f = |e: f64| -> Result<f64> {
        Ok(f_action(model, p.zeta1, p.zeta2, FRAC_PI_4, e, tau, -tau, branch, &ActionOptions::fast())?.value)
    };
    Ok(2.0 * crate::numeric::try_diff2(f, p.eta, h)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Frame {
    X,
    Y,
}

fn frame_field(model: &HyperModel, p: &HyperPoint, which: Frame) -> [f64; 3] {
    let (sd, cd) = (p.zeta1 - p.zeta2).sin_cos();
    let (t, k) = (p.eta.tan(), model.kappa.sqrt());
    let (a, b) = match which {
        Frame::X => (sd, k * cd),
        Frame::Y => (cd, -k * sd),
    };
    [a * t, a / t, b]
}

/// Chart point after time `h` along `X` or `Y` (four RK4 substeps).
pub fn frame_flow(model: &HyperModel, p: &HyperPoint, which: Frame, h: f64) -> HyperPoint {
    let n = 4;
    let dt = h / n as f64;
    let add = |p: &HyperPoint, v: [f64; 3], s: f64| HyperPoint {
        zeta1: p.zeta1 + s * v[0],
        zeta2: p.zeta2 + s * v[1],
        eta: p.eta + s * v[2],
    };
    let mut q = *p;
    for _ in 0..n {
        let k1 = frame_field(model, &q, which);
        let k2 = frame_field(model, &add(&q, k1, 0.5 * dt), which);
        let k3 = frame_field(model, &add(&q, k2, 0.5 * dt), which);
        let k4 = frame_field(model, &add(&q, k3, dt), which);
        let mut v = [0.0; 3];
        for i in 0..3 {
            v[i] = (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) / 6.0;
        }
        q = add(&q, v, dt);
    }
    q
}

/// Points `(p, X±h, Y±h)` used by horizontal differences.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowStencil {
    pub center: HyperPoint,
    pub x: [HyperPoint; 2],
    pub y: [HyperPoint; 2],
    pub h: f64,
}

impl FlowStencil {
    pub fn new(model: &HyperModel, p: &HyperPoint, h: f64) -> Self {
        FlowStencil {
            center: *p,
            x: [frame_flow(model, p, Frame::X, h), frame_flow(model, p, Frame::X, -h)],
            y: [frame_flow(model, p, Frame::Y, h), frame_flow(model, p, Frame::Y, -h)],
            h,
        }
    }

    /// `(Xu, Yu, X²u + Y²u)` extrapolated from steps `h` and `h/2`.
    pub fn extrapolated<F: Fn(&HyperPoint) -> Result<f64>>(
        model: &HyperModel,
        p: &HyperPoint,
        h: f64,
        u: F,
    ) -> Result<(f64, f64, f64)> {
        let a = FlowStencil::new(model, p, h).apply(&u)?;
        let b = FlowStencil::new(model, p, 0.5 * h).apply(&u)?;
        let r = |x: f64, y: f64| (4.0 * y - x) / 3.0;
        Ok((r(a.0, b.0), r(a.1, b.1), r(a.2, b.2)))
    }

    /// `(Xu, Yu, X²u + Y²u)`.
    pub fn apply<F: Fn(&HyperPoint) -> Result<f64>>(&self, u: F) -> Result<(f64, f64, f64)> {
        let c = u(&self.center)?;
        let (xp, xm, yp, ym) = (u(&self.x[0])?, u(&self.x[1])?, u(&self.y[0])?, u(&self.y[1])?);
        let h = self.h;
        Ok(((xp - xm) / (2.0 * h), (yp - ym) / (2.0 * h), (xp + xm + yp + ym - 4.0 * c) / (h * h)))
    }
}

/// A volume element `V(ζ1, ζ2, η, τ)` (or `W(ζ1, ζ2, η, t)`).
pub trait VolumeCandidate: Sync {
    fn eval(&self, p: &HyperPoint, tau: f64) -> f64;
}

impl<F: Fn(&HyperPoint, f64) -> f64 + Sync> VolumeCandidate for F {
    fn eval(&self, p: &HyperPoint, tau: f64) -> f64 {
        self(p, tau)
    }
}

pub struct ConstantVolume(pub f64);

impl VolumeCandidate for ConstantVolume {
    fn eval(&self, _: &HyperPoint, _: f64) -> f64 {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelConfig {
    pub u: f64,
    pub q: f64,
    pub c_norm: f64,
    /// Half-width of the `τ` window; `12√u max(1, sin 2η)` when `None`.
    pub tau_truncation: Option<f64>,
    pub pole_exclusion: f64,
    pub rtol: f64,
    pub kappa: f64,
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig { u: 1.0, q: 2.0, c_norm: 1.0, tau_truncation: None, pole_exclusion: 1e-6, rtol: 1e-8, kappa: 4.0 }
    }
}

impl KernelConfig {
    pub fn validate(&self) -> Result<HyperModel> {
        if !(self.u > 0.0) || self.tau_truncation.is_some_and(|t| !(t > 0.0)) || !(self.pole_exclusion > 0.0) {
            return Err(Error::InvalidConfig("need u > 0, tau_truncation > 0, pole_exclusion > 0".into()));
        }
        HyperModel::new(self.kappa)
    }

    pub fn truncation(&self, eta: f64) -> f64 {
        self.tau_truncation.unwrap_or(12.0 * self.u.sqrt() * (2.0 * eta).sin().max(1.0))
    }
}

/// `f(τ)` on the first branch with the arctan continued (the action used by transport).
fn transport_action(model: &HyperModel, p: &HyperPoint, tau: f64) -> Result<f64> {
    Ok(f_action(model, p.zeta1, p.zeta2, FRAC_PI_4, p.eta, tau, -tau, ActionBranch::default(), &ActionOptions::fast())?
        .value)
}

/// Coefficients of the heat transport equation at `(p, τ)`, with `h = f/τ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeatCoefficients {
    pub tau: f64,
    pub f_tau: f64,
    pub grad_h: [f64; 2],
    pub delta_x_f: f64,
    pub stencil: FlowStencil,
    pub q: f64,
}

impl HeatCoefficients {
    pub fn new(model: &HyperModel, p: &HyperPoint, tau: f64, q: f64) -> Result<Self> {
        if tau == 0.0 {
            return Err(Error::DomainError("tau = 0 has no h = f/tau".into()));
        }
        let stencil = FlowStencil::new(model, p, FLOW_STEP);
        let f_tau = try_diff1(|x| transport_action(model, p, x), tau, COEFFICIENT_STEP.min(0.5 * tau.abs()))?;
        let (xf, yf, lap) = FlowStencil::extrapolated(model, p, COEFFICIENT_STEP, |q| transport_action(model, q, tau))?;
        let (xh, yh) = (xf / tau, yf / tau);
        Ok(HeatCoefficients { tau, f_tau, grad_h: [xh, yh], delta_x_f: lap, stencil, q })
    }

    /// `((q − 2) − (τT_h + Δ_X f)) ∂V/∂τ + f_τ Δ_X V`, `T_h = ∂τ + ∇0h·∇0`.
    pub fn residual<V: VolumeCandidate + ?Sized>(&self, v: &V) -> f64 {
        apply_weights(&self.weights(), v)
    }

    /// The residual as `Σ w V(p, τ')` over the difference stencil.
    pub fn weights(&self) -> Vec<(HyperPoint, f64, f64)> {
        let t = self.tau;
        transport_weights(
            &self.stencil,
            t,
            self.q - 2.0 - self.delta_x_f,
            -t,
            [-t * self.grad_h[0], -t * self.grad_h[1]],
            self.f_tau,
        )
    }
}

/// The weights sum to zero, so differences from the center value are summed; constants
/// then give exactly zero instead of the round-off of `O(1/h²)` weights.
fn apply_weights<V: VolumeCandidate + ?Sized>(w: &[(HyperPoint, f64, f64)], v: &V) -> f64 {
    let (p0, t0, _) = w[2];
    let v0 = v.eval(&p0, t0);
    w.iter().map(|(p, t, c)| c * (v.eval(p, *t) - v0)).sum()
}

/// Weights of `a V_t + b V_tt + g·∇0 V_t + c Δ_X V` at the stencil center, with central
/// differences of step `TAU_STEP` in time and the stencil step along the flows. Entry 2 is
/// the center at `t`.
fn transport_weights(st: &FlowStencil, t: f64, a: f64, b: f64, g: [f64; 2], c: f64) -> Vec<(HyperPoint, f64, f64)> {
    let (k, h) = (TAU_STEP, st.h);
    let mut w = vec![
        (st.center, t + k, a / (2.0 * k) + b / (k * k)),
        (st.center, t - k, -a / (2.0 * k) + b / (k * k)),
        (st.center, t, -2.0 * b / (k * k) - 4.0 * c / (h * h)),
    ];
    for (pts, gi) in [(st.x, g[0]), (st.y, g[1])] {
        for (p, sgn) in [(pts[0], 1.0), (pts[1], -1.0)] {
            let d = sgn * gi / (4.0 * h * k);
            w.push((p, t + k, d));
            w.push((p, t - k, -d));
            w.push((p, t, c / (h * h)));
        }
    }
    w
}

pub fn heat_transport_residual<V: VolumeCandidate + ?Sized>(
    model: &HyperModel,
    cfg: &KernelConfig,
    v: &V,
    p: &HyperPoint,
    tau: f64,
) -> Result<f64> {
    Ok(HeatCoefficients::new(model, p, tau, cfg.q)?.residual(v))
}

/// `g(t) = f(τ = t)/t`, the action on the characteristic line with `ψ = ±(1, −1)`.
pub fn green_action(model: &HyperModel, p: &HyperPoint, t: f64) -> Result<f64> {
    if t == 0.0 {
        return Err(Error::DomainError("t = 0".into()));
    }
    Ok(transport_action(model, p, t)? / t)
}

/// Coefficients of the Green transport equation `ℰΔ_X W + (T_g + Δ_X g) ∂W/∂t = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GreenCoefficients {
    pub t: f64,
    /// `ℰ = −∂g/∂t`.
    pub energy: f64,
    /// `H(∇g)`.
    pub hamiltonian: f64,
    pub grad_g: [f64; 2],
    pub delta_x_g: f64,
    pub stencil: FlowStencil,
}

impl GreenCoefficients {
    pub fn new(model: &HyperModel, p: &HyperPoint, t: f64) -> Result<Self> {
        let stencil = FlowStencil::new(model, p, FLOW_STEP);
        let energy = -try_diff1(|x| green_action(model, p, x), t, COEFFICIENT_STEP.min(0.5 * t.abs()))?;
        let (xg, yg, lap) = FlowStencil::extrapolated(model, p, COEFFICIENT_STEP, |q| green_action(model, q, t))?;
        Ok(GreenCoefficients {
            t,
            energy,
            hamiltonian: 0.5 * (xg * xg + yg * yg),
            grad_g: [xg, yg],
            delta_x_g: lap,
            stencil,
        })
    }

    /// `ℰ Δ_X W + ∂²W/∂t² + ∇0g·∇0 ∂W/∂t + Δ_X g ∂W/∂t`.
    pub fn residual<W: VolumeCandidate + ?Sized>(&self, w: &W) -> f64 {
        apply_weights(&transport_weights(&self.stencil, self.t, self.delta_x_g, 1.0, self.grad_g, self.energy), w)
    }
}

pub fn green_transport_residual<W: VolumeCandidate + ?Sized>(
    model: &HyperModel,
    w: &W,
    p: &HyperPoint,
    t: f64,
) -> Result<f64> {
    Ok(GreenCoefficients::new(model, p, t)?.residual(w))
}

/// Values of `τ > 0` in `(0, tau_max]` where the first root `√A(τ)` jumps between humps.
pub fn radius_jumps(model: &HyperModel, eta: f64, tau_max: f64) -> Result<Vec<f64>> {
    let step = 2e-3;
    let n = (tau_max / step).ceil() as usize;
    let mut out = Vec::new();
    let r = |t: f64| restricted_radius(model, t, eta);
    let mut t0 = 0.0;
    let mut r0 = r(t0)?;
    for i in 1..=n {
        let t1 = (i as f64 * step).min(tau_max);
        let r1 = r(t1)?;
        if (r1 - r0).abs() > 0.05 {
            let (mut a, mut b) = (t0, t1);
            for _ in 0..60 {
                let m = 0.5 * (a + b);
                let rm = r(m)?;
                if (rm - r0).abs() < (rm - r1).abs() {
                    a = m;
                } else {
                    b = m;
                }
            }
            out.push(0.5 * (a + b));
        }
        t0 = t1;
        r0 = r1;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelResult {
    pub value: f64,
    pub error_estimate: f64,
    /// `∫|integrand|`, the scale for relative comparisons.
    pub abs_integral: f64,
    pub truncation: f64,
    pub pole_count: usize,
    pub breakpoints: Vec<f64>,
    /// Change when the window is doubled.
    pub window_change: f64,
    /// Change when the exclusion around breakpoints is halved.
    pub exclusion_change: f64,
}

fn integrate_segments<F: Fn(f64, f64, f64) -> f64>(
    integrand: F,
    a: f64,
    b: f64,
    breaks: &[f64],
    eps: f64,
    rtol: f64,
) -> (f64, f64, f64) {
    let mut edges = vec![a];
    edges.extend(breaks.iter().copied().filter(|x| *x > a && *x < b));
    edges.push(b);
    let segments: Vec<(f64, f64)> = edges
        .windows(2)
        .map(|w| (if w[0] == a { w[0] } else { w[0] + eps }, if w[1] == b { w[1] } else { w[1] - eps }))
        .filter(|(lo, hi)| hi > lo)
        .collect();
    let abs: Vec<f64> = segments
        .iter()
        .map(|&(lo, hi)| integrate_adaptive(|x| integrand(x, lo, hi).abs(), lo, hi, 0.0, 1e-6, 200).value)
        .collect();
    let total: f64 = abs.iter().sum();
    let tol = rtol * total.max(f64::MIN_POSITIVE) / segments.len().max(1) as f64;
    let (mut val, mut err) = (0.0, 0.0);
    for &(lo, hi) in &segments {
        let q = integrate_adaptive(|x| integrand(x, lo, hi), lo, hi, tol, 0.0, 2000);
        val += q.value;
        err += q.error;
    }
    (val, err, total)
}

/// Second-order difference that stays inside `[lo, hi]`.
fn segment_derivative<F: Fn(f64) -> f64>(f: F, t: f64, lo: f64, hi: f64) -> f64 {
    let h = 1e-6 * t.abs().max(1.0);
    if t - h >= lo && t + h <= hi {
        (f(t + h) - f(t - h)) / (2.0 * h)
    } else if t - lo > hi - t {
        let h = h.min(0.5 * (t - lo));
        (3.0 * f(t) - 4.0 * f(t - h) + f(t - 2.0 * h)) / (2.0 * h)
    } else {
        let h = h.min(0.5 * (hi - t));
        (-3.0 * f(t) + 4.0 * f(t + h) - f(t + 2.0 * h)) / (2.0 * h)
    }
}

fn kernel_once<V: VolumeCandidate + ?Sized>(
    model: &HyperModel,
    cfg: &KernelConfig,
    p: &HyperPoint,
    v: &V,
    window: f64,
    eps: f64,
) -> Result<(f64, f64, f64, usize, Vec<f64>)> {
    let scale = cfg.c_norm / cfg.u.powf(cfg.q);
    let tail = restricted_tail_threshold(model, p.zeta1, p.zeta2);
    let cutoff = tail.max((800.0 * cfg.u / 1.9).sqrt());
    let live = window.min(cutoff);
    let poles = restricted_poles(model, p.eta, live)?;
    let jumps = radius_jumps(model, p.eta, live)?;
    let mut breaks: Vec<f64> = poles.iter().chain(jumps.iter()).flat_map(|&x| [x, -x]).collect();
    breaks.push(0.0);
    breaks.sort_by(f64::total_cmp);
    let f = |t: f64| restricted_action(model, t, p.zeta1, p.zeta2, p.eta).unwrap_or(f64::NAN);
    let integrand = |t: f64, lo: f64, hi: f64| {
        let fv = f(t);
        let e = (-fv / cfg.u).exp();
        if e == 0.0 {
            return 0.0;
        }
        let d = segment_derivative(f, t, lo, hi);
        scale * e * v.eval(p, t) * d
    };
    let (val, err, abs) = integrate_segments(integrand, -live, live, &breaks, eps, 1e-2 * cfg.rtol);
    Ok((val, err, abs, 2 * poles.len(), breaks))
}

/// `(C/u^q) ∫ e^{−f(τ)/u} V E dτ` with `E = df/dτ` and `f` the principal restricted action,
/// over `|τ| ≤ truncation` with intervals of half-width `pole_exclusion` removed around
/// poles and branch jumps of `f`.
pub fn kernel_quadrature<V: VolumeCandidate + ?Sized>(
    cfg: &KernelConfig,
    p: &HyperPoint,
    v: &V,
) -> Result<KernelResult> {
    let model = cfg.validate()?;
    check_chart(p.eta)?;
    let window = cfg.truncation(p.eta);
    let (value, error, abs, poles, breaks) = kernel_once(&model, cfg, p, v, window, cfg.pole_exclusion)?;
    let (doubled, ..) = kernel_once(&model, cfg, p, v, 2.0 * window, cfg.pole_exclusion)?;
    let (halved, ..) = kernel_once(&model, cfg, p, v, window, 0.5 * cfg.pole_exclusion)?;
    let window_change = (doubled - value).abs();
    if window_change > cfg.rtol * abs.max(f64::MIN_POSITIVE) {
        return Err(Error::NonConvergent { change: window_change });
    }
    Ok(KernelResult {
        value,
        error_estimate: error,
        abs_integral: abs,
        truncation: window,
        pole_count: poles,
        breakpoints: breaks,
        window_change,
        exclusion_change: (halved - value).abs(),
    })
}

/// Sign changes of `g` on `[−window, window]` away from `jumps`, refined by bisection.
fn green_zeros<G: Fn(f64) -> f64>(g: &G, window: f64, jumps: &[f64]) -> Vec<f64> {
    let step = 1e-3;
    let n = (2.0 * window / step).ceil() as usize;
    let mut out = Vec::new();
    for i in 0..n {
        let (a, b) = (-window + i as f64 * step, (-window + (i + 1) as f64 * step).min(window));
        if jumps.iter().any(|j| *j >= a && *j <= b) {
            continue;
        }
        let (ga, gb) = (g(a), g(b));
        if ga.is_finite() && gb.is_finite() && (ga < 0.0) != (gb < 0.0) {
            out.push(bisect(g, a, b, 1e-15));
        }
    }
    out
}

/// Principal-value `∫ W ℰ / g dt` over `|t| ≤ window`, `ℰ = −∂g/∂t`, `g = green_action`, with
/// symmetric exclusions of half-width `eps` around `t = 0`, the zeros of `g` and its branch jumps.
pub fn green_quadrature<W: VolumeCandidate + ?Sized>(
    model: &HyperModel,
    p: &HyperPoint,
    w: &W,
    window: f64,
    eps: f64,
) -> Result<(f64, f64)> {
    check_chart(p.eta)?;
    let jumps = radius_jumps(model, p.eta, window)?;
    let mut breaks: Vec<f64> = jumps.iter().flat_map(|&x| [x, -x]).collect();
    breaks.push(0.0);
    breaks.sort_by(f64::total_cmp);
    let g = |t: f64| {
        restricted_action_unwrapped(model, t, p.zeta1, p.zeta2, p.eta).map(|f| f / t).unwrap_or(f64::NAN)
    };
    let zeros = green_zeros(&g, window, &breaks);
    breaks.extend(zeros);
    breaks.sort_by(f64::total_cmp);
    let integrand = |t: f64, lo: f64, hi: f64| {
        let e = -segment_derivative(g, t, lo, hi);
        w.eval(p, t) * e / g(t)
    };
    let (v, _, abs) = integrate_segments(integrand, -window, window, &breaks, eps, 1e-10);
    Ok((v, abs))
}

/// Box in `(δ = ζ1 − ζ2, η, τ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Patch {
    pub delta: (f64, f64),
    pub eta: (f64, f64),
    pub tau: (f64, f64),
}

/// Dirichlet data on the face `τ = τ_min`, imposed with weight `weight`.
#[derive(Debug, Clone, Copy)]
pub struct BoundaryPolicy {
    pub data: fn(f64, f64) -> f64,
    pub weight: f64,
}

/// Uniform cubic B-spline basis with `cells` intervals on `[a, b]`, `cells + 3` functions.
#[derive(Debug, Clone, Copy, PartialEq)]
struct SplineAxis {
    a: f64,
    step: f64,
    cells: usize,
}

impl SplineAxis {
    fn len(&self) -> usize {
        self.cells + 3
    }

    fn basis(&self, k: usize, x: f64) -> f64 {
        let u = (x - self.a) / self.step - k as f64 + 3.0;
        if !(0.0..4.0).contains(&u) {
            return 0.0;
        }
        if u < 1.0 {
            u * u * u / 6.0
        } else if u < 2.0 {
            let v = u - 1.0;
            (1.0 + 3.0 * v + 3.0 * v * v - 3.0 * v * v * v) / 6.0
        } else if u < 3.0 {
            let v = 3.0 - u;
            (1.0 + 3.0 * v + 3.0 * v * v - 3.0 * v * v * v) / 6.0
        } else {
            let v = 4.0 - u;
            v * v * v / 6.0
        }
    }
}

/// Tensor-product cubic spline `V(δ, η, τ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedVolume {
    axes: [SplineAxis; 3],
    pub coefficients: Vec<f64>,
}

impl FittedVolume {
    fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.axes[1].len() + j) * self.axes[2].len() + k
    }

    fn value(&self, d: f64, e: f64, t: f64) -> f64 {
        let mut s = 0.0;
        for (i, j, k, w) in self.nonzero(d, e, t) {
            s += self.coefficients[self.index(i, j, k)] * w;
        }
        s
    }

    fn nonzero(&self, d: f64, e: f64, t: f64) -> Vec<(usize, usize, usize, f64)> {
        let span = |ax: &SplineAxis, x: f64| -> Vec<(usize, f64)> {
            (0..ax.len()).map(|k| (k, ax.basis(k, x))).filter(|(_, w)| *w != 0.0).collect()
        };
        let (bd, be, bt) = (span(&self.axes[0], d), span(&self.axes[1], e), span(&self.axes[2], t));
        let mut out = Vec::with_capacity(64);
        for &(i, wi) in &bd {
            for &(j, wj) in &be {
                for &(k, wk) in &bt {
                    out.push((i, j, k, wi * wj * wk));
                }
            }
        }
        out
    }
}

impl VolumeCandidate for FittedVolume {
    fn eval(&self, p: &HyperPoint, tau: f64) -> f64 {
        self.value(p.zeta1 - p.zeta2, p.eta, tau)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub volume: FittedVolume,
    /// Score of the fit on the staggered grid.
    pub score: PatchScore,
    /// Same score for `V ≡ 1`.
    pub baseline: PatchScore,
    pub rank: usize,
    pub cols: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatchScore {
    /// RMS of the transport residual.
    pub transport_rms: f64,
    pub transport_max: f64,
    /// RMS of the weighted boundary mismatch.
    pub boundary_rms: f64,
}

impl PatchScore {
    /// RMS of the two parts combined with equal weight.
    pub fn total(&self) -> f64 {
        (0.5 * (self.transport_rms.powi(2) + self.boundary_rms.powi(2))).sqrt()
    }
}

fn grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    shifted_grid(lo, hi, n, 0.5)
}

fn shifted_grid(lo: f64, hi: f64, n: usize, shift: f64) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * (i as f64 + shift) / n as f64).collect()
}

/// Points per axis of the staggered grid on which fits are scored.
pub const SCORE_POINTS: usize = 7;

/// Scores `v` on a staggered grid with `points` per axis, off the collocation points.
pub fn patch_residual<V: VolumeCandidate + ?Sized>(
    model: &HyperModel,
    patch: &Patch,
    boundary: &BoundaryPolicy,
    q: f64,
    v: &V,
    points: usize,
) -> Result<PatchScore> {
    let (mut sum, mut bsum, mut worst) = (0.0, 0.0, 0.0f64);
    let (mut n, mut nb) = (0usize, 0usize);
    for &d in &shifted_grid(patch.delta.0, patch.delta.1, points, 0.31) {
        for &e in &shifted_grid(patch.eta.0, patch.eta.1, points, 0.67) {
            let p = HyperPoint { zeta1: 0.5 * d, zeta2: -0.5 * d, eta: e };
            for &t in &shifted_grid(patch.tau.0, patch.tau.1, points, 0.43) {
                let r = HeatCoefficients::new(model, &p, t, q)?.residual(v);
                worst = worst.max(r.abs());
                sum += r * r;
                n += 1;
            }
            let b = boundary.weight * (v.eval(&p, patch.tau.0) - (boundary.data)(d, e));
            bsum += b * b;
            nb += 1;
        }
    }
    Ok(PatchScore { transport_rms: (sum / n as f64).sqrt(), transport_max: worst, boundary_rms: (bsum / nb as f64).sqrt() })
}

/// Least-squares collocation for the heat transport equation with `cells` spline intervals
/// per axis; collocation on `2(cells + 3)` interior points per axis plus boundary rows on
/// the face `τ = τ_min`. The patch must not meet `η = π/4`, where the first-branch action
/// switches humps, nor a turning point or a pole.
pub fn fit_volume_element(
    model: &HyperModel,
    patch: &Patch,
    boundary: &BoundaryPolicy,
    q: f64,
    cells: usize,
) -> Result<FitReport> {
    let axes = [patch.delta, patch.eta, patch.tau].map(|(a, b)| SplineAxis { a, step: (b - a) / cells as f64, cells });
    let n = cells + 3;
    let cols = n * n * n;
    let mut vol = FittedVolume { axes, coefficients: vec![0.0; cols] };
    let m = 2 * n;
    let (ds, es, ts) = (grid(patch.delta.0, patch.delta.1, m), grid(patch.eta.0, patch.eta.1, m), grid(patch.tau.0, patch.tau.1, m));
    let mut rows: Vec<(Vec<(usize, f64)>, f64)> = Vec::new();
    for &d in &ds {
        for &e in &es {
            let p = HyperPoint { zeta1: 0.5 * d, zeta2: -0.5 * d, eta: e };
            for &t in &ts {
                let coef = HeatCoefficients::new(model, &p, t, q)?;
                let mut dense = vec![0.0; cols];
                for (sp, st, w) in coef.weights() {
                    for (i, j, k, b) in vol.nonzero(sp.zeta1 - sp.zeta2, sp.eta, st) {
                        dense[vol.index(i, j, k)] += w * b;
                    }
                }
                let row: Vec<(usize, f64)> = dense.into_iter().enumerate().filter(|(_, x)| *x != 0.0).collect();
                rows.push((row, 0.0));
            }
            vol.coefficients.iter_mut().for_each(|x| *x = 0.0);
            let row: Vec<(usize, f64)> = vol
                .nonzero(d, e, patch.tau.0)
                .into_iter()
                .map(|(i, j, k, w)| (vol.index(i, j, k), boundary.weight * w))
                .collect();
            rows.push((row, boundary.weight * (boundary.data)(d, e)));
        }
    }
    let mut a = DMatrix::<f64>::zeros(rows.len(), cols);
    let mut b = DVector::<f64>::zeros(rows.len());
    for (i, (row, rhs)) in rows.iter().enumerate() {
        for &(c, v) in row {
            a[(i, c)] = v;
        }
        b[i] = *rhs;
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let cut = 1e-10 * smax;
    let rank = svd.singular_values.iter().filter(|s| **s > cut).count();
    let x = svd.solve(&b, cut).map_err(|_| Error::IllConditioned { rank, cols })?;
    if rank < cols {
        return Err(Error::IllConditioned { rank, cols });
    }
    vol.coefficients = x.iter().copied().collect();
    let score = patch_residual(model, patch, boundary, q, &vol, SCORE_POINTS)?;
    let baseline = patch_residual(model, patch, boundary, q, &ConstantVolume(1.0), SCORE_POINTS)?;
    Ok(FitReport { volume: vol, score, baseline, rank, cols })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::s3_core::{flow_x, flow_y, from_hyper, to_hyper};

    #[test]
    fn theta0_at_quarter_pi() {
        for m in 1..4u32 {
            let tau = 0.1;
            let th = theta0_solve(tau, FRAC_PI_4, m).unwrap();
            let expect = ((PI * m as f64 / 8.0).powi(2) - tau * tau).sqrt();
            assert!((th - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn theta0_back_substitution() {
        for (tau, eta, m) in [(0.2, 0.6, 1), (0.3, 1.0, 2), (0.05, 0.9, 1), (0.0, 0.7, 1)] {
            let th = theta0_solve(tau, eta, m).unwrap();
            assert!(theta0_residual(tau, eta, th).abs() < 1e-10);
        }
    }

    #[test]
    fn frame_flows_match_cartesian_when_pullback() {
        let model = HyperModel::new(1.0).unwrap();
        let p = HyperPoint { zeta1: 0.3, zeta2: -0.5, eta: 0.9 };
        let x = from_hyper(&p).coords();
        let qx = to_hyper(&crate::s3_core::S3Point::new(flow_x(&x, 1e-2)).unwrap()).unwrap();
        let qy = to_hyper(&crate::s3_core::S3Point::new(flow_y(&x, 1e-2)).unwrap()).unwrap();
        let fx = frame_flow(&model, &p, Frame::X, 1e-2);
        let fy = frame_flow(&model, &p, Frame::Y, 1e-2);
        for (a, b) in [(qx, fx), (qy, fy)] {
            assert!((a.zeta1 - b.zeta1).abs() < 1e-11 && (a.zeta2 - b.zeta2).abs() < 1e-11 && (a.eta - b.eta).abs() < 1e-11);
        }
    }

    #[test]
    fn delta_x_f_matches_action_curvature() {
        let model = HyperModel::default();
        for (tau, eta, m) in [(0.1, 0.6, 1), (0.1, 1.0, 1), (0.2, 0.9, 2)] {
            let th = theta0_solve(tau, eta, m).unwrap();
            let br = branch_for_theta0(&model, tau, eta, th).unwrap();
            let p = HyperPoint { zeta1: 0.1, zeta2: -0.2, eta };
            let fd = action_eta_curvature(&model, &p, tau, br, 1e-3).unwrap();
            let d = delta_x_f(tau, eta, th).unwrap();
            assert!((fd - d).abs() < 1e-4, "{fd} vs {d}");
        }
    }

    #[test]
    fn constant_volume_has_zero_residual() {
        let model = HyperModel::default();
        let p = HyperPoint { zeta1: 0.1, zeta2: -0.1, eta: 0.9 };
        let r = heat_transport_residual(&model, &KernelConfig::default(), &ConstantVolume(3.0), &p, 0.1).unwrap();
        assert!(r.abs() < 1e-6);
        assert!(green_transport_residual(&model, &ConstantVolume(2.0), &p, 0.3).unwrap().abs() < 1e-6);
    }

    #[test]
    fn tau_only_volume_is_not_a_solution() {
        let model = HyperModel::default();
        let v = |_: &HyperPoint, t: f64| (-t * t).exp();
        let p = HyperPoint { zeta1: 0.1, zeta2: -0.1, eta: 0.9 };
        let r = heat_transport_residual(&model, &KernelConfig::default(), &v, &p, 0.1).unwrap();
        assert!(r.abs() > 1e-3);
    }

    #[test]
    fn residual_invariant_along_diagonal_shift() {
        let model = HyperModel::default();
        let v = |p: &HyperPoint, t: f64| (p.zeta1 - p.zeta2).cos() * p.eta * (1.0 + t);
        let cfg = KernelConfig::default();
        let p = HyperPoint { zeta1: 0.2, zeta2: -0.1, eta: 0.95 };
        let s = HyperPoint { zeta1: 0.5, zeta2: 0.2, eta: 0.95 };
        let (a, b) = (
            heat_transport_residual(&model, &cfg, &v, &p, 0.1).unwrap(),
            heat_transport_residual(&model, &cfg, &v, &s, 0.1).unwrap(),
        );
        assert!((a - b).abs() < 1e-6 * a.abs().max(1.0));
    }

    #[test]
    fn green_energy_is_hamiltonian() {
        let model = HyperModel::default();
        let p = HyperPoint { zeta1: 0.2, zeta2: -0.1, eta: 0.9 };
        let c = GreenCoefficients::new(&model, &p, 0.1).unwrap();
        assert!((c.energy - c.hamiltonian).abs() < 1e-6 * c.energy.abs().max(1.0), "{c:?}");
    }

    #[test]
    fn kernel_quadrature_converges() {
        let cfg = KernelConfig::default();
        let p = HyperPoint { zeta1: 0.3, zeta2: -0.2, eta: 0.9 };
        let r = kernel_quadrature(&cfg, &p, &ConstantVolume(1.0)).unwrap();
        eprintln!("{r:?}");
        assert!(r.value.is_finite() && r.abs_integral > 0.0);
        assert!(r.exclusion_change <= 1e-3 * r.abs_integral);
    }

    #[test]
    fn green_quadrature_converges_for_decaying_weight() {
        let model = HyperModel::default();
        let p = HyperPoint { zeta1: 0.3, zeta2: -0.2, eta: 0.9 };
        let w = |_: &HyperPoint, t: f64| (-t * t).exp();
        let (a, _) = green_quadrature(&model, &p, &w, 6.0, 1e-6).unwrap();
        let (b, _) = green_quadrature(&model, &p, &w, 12.0, 1e-6).unwrap();
        eprintln!("{a} {b}");
        assert!(a.is_finite() && (a - b).abs() < 1e-8 * a.abs().max(1.0));
    }

    #[test]
    fn fit_improves_on_constant() {
        let model = HyperModel::default();
        let patch = Patch { delta: (0.3, 0.6), eta: (0.85, 1.0), tau: (0.05, 0.15) };
        let bc = BoundaryPolicy { data: |d, e| 1.0 + 0.3 * d.sin() * (2.0 * e).cos(), weight: 1.0 };
        let r = fit_volume_element(&model, &patch, &bc, 2.0, 1).unwrap();
        assert_eq!(r.rank, r.cols);
        assert!(10.0 * r.score.total() < r.baseline.total(), "{:?} {:?}", r.score, r.baseline);
    }
}
