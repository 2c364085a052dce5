//! Modified action `g(ζ1, ζ2, η, ψ1, ψ2, t)` with the momenta prescribed and the endpoint
//! `η` fixed, its Hamilton–Jacobi identities, critical points (the distance) and its
//! restriction to the characteristic line `ψ1 = −ψ2 = τ` at `η0 = π/4`.
//!
//! For given momenta the geodesic reaching `η` at time `t` is labelled by the sign of `θ0`
//! and the index of `√A` among the roots of the endpoint equation.

use std::f64::consts::{FRAC_PI_4, PI};

use crate::error::{Error, Result};
use crate::geodesics_hyperspherical::{
    check_chart, radius_roots, solve_bvp, BvpOptions, HyperGeodesicSolution, HyperModel, HyperState,
};
use crate::numeric::{bisect, integrate_adaptive, try_diff1};
use crate::s3_core::{angle_diff, from_hyper, quat_mul, to_hyper, HyperPoint, S3Point};

/// Base step of the finite-difference checks, scaled by `max(1, |x|)`.
pub const FD_STEP: f64 = 1e-5;

fn fd_step(x: f64) -> f64 {
    FD_STEP * x.abs().max(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ActionBranch {
    /// Sign of `θ0`, `±1`.
    pub sign: i8,
    /// Position of `√A` among the ascending roots.
    pub index: usize,
}

impl Default for ActionBranch {
    fn default() -> Self {
        ActionBranch { sign: 1, index: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionOptions {
    /// Compare the closed form with quadrature of the action integrand.
    pub cross_check: bool,
    /// Return the quadrature value instead of failing when the comparison fails.
    pub fallback: bool,
    pub tol: f64,
}

impl Default for ActionOptions {
    fn default() -> Self {
        ActionOptions { cross_check: true, fallback: false, tol: 1e-7 }
    }
}

impl ActionOptions {
    pub fn fast() -> Self {
        ActionOptions { cross_check: false, ..Self::default() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActionMethod {
    ClosedForm,
    Quadrature,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionEval {
    pub value: f64,
    pub psi1: f64,
    pub psi2: f64,
    pub t: f64,
    pub a_branch: f64,
    pub branch: ActionBranch,
    pub method: ActionMethod,
    /// `(∂ζ1, ∂ζ2, ∂η, ∂t)` from the identities `(ψ1, ψ2, θ(t), −H)`.
    pub grad: Option<[f64; 4]>,
    /// Difference between closed form and quadrature, when compared.
    pub cross_check_error: Option<f64>,
    pub solution: HyperGeodesicSolution,
}

/// Geodesic from `(0, 0, η0)` with momenta `(ψ1, ψ2)` reaching `η` at time `t` on `branch`.
pub fn action_trajectory(
    model: &HyperModel,
    eta0: f64,
    eta: f64,
    psi1: f64,
    psi2: f64,
    t: f64,
    branch: ActionBranch,
) -> Result<HyperGeodesicSolution> {
    let sign = if branch.sign < 0 { -1.0 } else { 1.0 };
    let roots = radius_roots(model, eta0, eta, psi1, psi2, t, sign, branch.index + 1)?;
    let r = *roots.get(branch.index).ok_or(Error::NoRootInBranch { branch: branch.index as i32 })?;
    HyperGeodesicSolution::from_normalized(model, eta0, psi1 / r, psi2 / r, r * r, sign, t)
}

/// `ψ1ζ1 + ψ2ζ2 + ∫0^t (θη̇ − H) ds` by adaptive quadrature along the closed-form trajectory.
pub fn action_by_quadrature(sol: &HyperGeodesicSolution, zeta1: f64, zeta2: f64) -> f64 {
    let h = sol.hamiltonian();
    let k = sol.kappa;
    let q = integrate_adaptive(|s| k * sol.theta_of_s(s).powi(2) - h, 0.0, sol.t, 1e-13, 1e-13, 4000);
    sol.psi1() * zeta1 + sol.psi2() * zeta2 + q.value
}

/// Closed form `ψ1ζ1 + ψ2ζ2 + tA/2 + (t/2)(ψ1 − ψ2)² − ψ1² ∫ds/cos²η − ψ2² ∫ds/sin²η`.
pub fn action_closed_form(sol: &HyperGeodesicSolution, zeta1: f64, zeta2: f64) -> Result<f64> {
    let (p1, p2, t) = (sol.psi1(), sol.psi2(), sol.t);
    let (i1, i2) = sol.inverse_square_integrals(t)?;
    Ok(p1 * zeta1 + p2 * zeta2 + 0.5 * t * sol.a + 0.5 * t * (p1 - p2).powi(2) - p1 * p1 * i1 - p2 * p2 * i2)
}

#[allow(clippy::too_many_arguments)]
pub fn modified_action(
    model: &HyperModel,
    zeta1: f64,
    zeta2: f64,
    eta0: f64,
    eta: f64,
    psi1: f64,
    psi2: f64,
    t: f64,
    branch: ActionBranch,
    opts: &ActionOptions,
) -> Result<ActionEval> {
    let sol = action_trajectory(model, eta0, eta, psi1, psi2, t, branch)?;
    let closed = action_closed_form(&sol, zeta1, zeta2)?;
    let mut value = closed;
    let mut method = ActionMethod::ClosedForm;
    let mut cross_check_error = None;
    if opts.cross_check {
        let quad = action_by_quadrature(&sol, zeta1, zeta2);
        let err = (closed - quad).abs();
        cross_check_error = Some(err);
        if err > opts.tol * quad.abs().max(1.0) {
            if !opts.fallback {
                return Err(Error::BranchMismatch { closed, quadrature: quad });
            }
            value = quad;
            method = ActionMethod::Quadrature;
        }
    }
    Ok(ActionEval {
        value,
        psi1,
        psi2,
        t,
        a_branch: sol.a,
        branch,
        method,
        grad: Some([psi1, psi2, sol.theta_of_s(t), -sol.hamiltonian()]),
        cross_check_error,
        solution: sol,
    })
}

/// `g` at `t = 1`.
#[allow(clippy::too_many_arguments)]
pub fn f_action(
    model: &HyperModel,
    zeta1: f64,
    zeta2: f64,
    eta0: f64,
    eta: f64,
    psi1: f64,
    psi2: f64,
    branch: ActionBranch,
    opts: &ActionOptions,
) -> Result<ActionEval> {
    modified_action(model, zeta1, zeta2, eta0, eta, psi1, psi2, 1.0, branch, opts)
}

/// `arctan(c tan p)` continued through the poles of `tan`.
pub fn unwrapped_arctan_tan(c: f64, p: f64) -> f64 {
    (c * p.tan()).atan() + PI * (p / PI + 0.5).floor() * c.signum()
}

/// Action for `ψ2 = −ψ1`, `η0 = π/4`:
/// `ψ1(ζ1 − ζ2) + At/2 + 2tψ1² − (ψ1/√κ) arctan((2ψ1/√A) tan(σΩt))`, arctan continued.
pub fn symmetric_action(sol: &HyperGeodesicSolution, zeta1: f64, zeta2: f64) -> f64 {
    let p1 = sol.psi1();
    let t = sol.t;
    let c = 2.0 * p1 / sol.a.sqrt();
    p1 * (zeta1 - zeta2) + 0.5 * sol.a * t + 2.0 * t * p1 * p1
        - p1 / sol.kappa.sqrt() * unwrapped_arctan_tan(c, sol.sign * sol.omega() * t)
}

/// Hamilton–Jacobi residual report for a function `g(ζ1, ζ2, η, t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HjReport {
    /// `∂g/∂t + H(ζ, η, ∇g)`.
    pub residual: f64,
    /// Finite-difference `(∂ζ1, ∂ζ2, ∂η, ∂t)`.
    pub grad: [f64; 4],
    pub hamiltonian: f64,
}

fn stencil<T>(r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::ChartBoundary { .. } | Error::NoRootInBranch { .. } | Error::NegativeRadicand { .. } => {
            Error::StencilOutOfDomain
        }
        other => other,
    })
}

/// Central differences with one Richardson step of `g` at `(p, t)`.
pub fn fd_gradient<G>(g: &G, p: &HyperPoint, t: f64) -> Result<[f64; 4]>
where
    G: Fn(&HyperPoint, f64) -> Result<f64>,
{
    let dz1 = try_diff1(|x| g(&HyperPoint { zeta1: x, ..*p }, t), p.zeta1, fd_step(p.zeta1));
    let dz2 = try_diff1(|x| g(&HyperPoint { zeta2: x, ..*p }, t), p.zeta2, fd_step(p.zeta2));
    let de = try_diff1(|x| g(&HyperPoint { eta: x, ..*p }, t), p.eta, fd_step(p.eta));
    let dt = try_diff1(|x| g(p, x), t, fd_step(t));
    Ok([stencil(dz1)?, stencil(dz2)?, stencil(de)?, stencil(dt)?])
}

pub fn check_hamilton_jacobi<G>(model: &HyperModel, g: G, p: &HyperPoint, t: f64) -> Result<HjReport>
where
    G: Fn(&HyperPoint, f64) -> Result<f64>,
{
    let grad = fd_gradient(&g, p, t)?;
    let s = HyperState { zeta1: p.zeta1, zeta2: p.zeta2, eta: p.eta, psi1: grad[0], psi2: grad[1], theta: grad[2] };
    let h = model.hamiltonian(&s)?;
    Ok(HjReport { residual: grad[3] + h, grad, hamiltonian: h })
}

/// The modified action as a function of `(ζ1, ζ2, η, t)` at fixed momenta and branch.
pub fn action_fn(
    model: HyperModel,
    eta0: f64,
    psi: (f64, f64),
    branch: ActionBranch,
) -> impl Fn(&HyperPoint, f64) -> Result<f64> {
    move |p: &HyperPoint, t: f64| {
        Ok(modified_action(&model, p.zeta1, p.zeta2, eta0, p.eta, psi.0, psi.1, t, branch, &ActionOptions::fast())?
            .value)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneralizedHjReport {
    /// `ψ1∂f/∂ψ1 + ψ2∂f/∂ψ2 + H(∇f) − f`.
    pub residual: f64,
    pub f: f64,
    pub d_psi: [f64; 2],
    pub grad: [f64; 3],
}

pub fn check_generalized_hj(
    model: &HyperModel,
    p: &HyperPoint,
    eta0: f64,
    psi: (f64, f64),
    branch: ActionBranch,
) -> Result<GeneralizedHjReport> {
    let f = |z1: f64, z2: f64, e: f64, p1: f64, p2: f64| -> Result<f64> {
        Ok(f_action(model, z1, z2, eta0, e, p1, p2, branch, &ActionOptions::fast())?.value)
    };
    let v = stencil(f(p.zeta1, p.zeta2, p.eta, psi.0, psi.1))?;
    let d1 = stencil(try_diff1(|x| f(p.zeta1, p.zeta2, p.eta, x, psi.1), psi.0, fd_step(psi.0)))?;
    let d2 = stencil(try_diff1(|x| f(p.zeta1, p.zeta2, p.eta, psi.0, x), psi.1, fd_step(psi.1)))?;
    let gz1 = stencil(try_diff1(|x| f(x, p.zeta2, p.eta, psi.0, psi.1), p.zeta1, fd_step(p.zeta1)))?;
    let gz2 = stencil(try_diff1(|x| f(p.zeta1, x, p.eta, psi.0, psi.1), p.zeta2, fd_step(p.zeta2)))?;
    let ge = stencil(try_diff1(|x| f(p.zeta1, p.zeta2, x, psi.0, psi.1), p.eta, fd_step(p.eta)))?;
    let s = HyperState { zeta1: p.zeta1, zeta2: p.zeta2, eta: p.eta, psi1: gz1, psi2: gz2, theta: ge };
    let h = model.hamiltonian(&s)?;
    Ok(GeneralizedHjReport {
        residual: psi.0 * d1 + psi.1 * d2 + h - v,
        f: v,
        d_psi: [d1, d2],
        grad: [gz1, gz2, ge],
    })
}

/// Residuals of `T_h(h_t) = 0` and `T_h(h) = −h_t`, `T_h = ∂t + ∇0h·∇0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TOperatorReport {
    pub t_of_ht: f64,
    pub t_of_h_plus_ht: f64,
}

fn spatial_gradient<G: Fn(&HyperPoint) -> Result<f64>>(g: &G, p: &HyperPoint, h: f64) -> Result<[f64; 3]> {
    Ok([
        stencil(try_diff1(|x| g(&HyperPoint { zeta1: x, ..*p }), p.zeta1, h))?,
        stencil(try_diff1(|x| g(&HyperPoint { zeta2: x, ..*p }), p.zeta2, h))?,
        stencil(try_diff1(|x| g(&HyperPoint { eta: x, ..*p }), p.eta, h))?,
    ])
}

pub fn check_t_operator<G>(model: &HyperModel, h: G, p: &HyperPoint, t: f64) -> Result<TOperatorReport>
where
    G: Fn(&HyperPoint, f64) -> Result<f64>,
{
    let (outer, inner) = (1e-3, 1e-4);
    let ht = |q: &HyperPoint, s: f64| stencil(try_diff1(|x| h(q, x), s, inner));
    let grad_h = spatial_gradient(&|q: &HyperPoint| h(q, t), p, inner)?;
    let grad_ht = spatial_gradient(&|q: &HyperPoint| ht(q, t), p, outer)?;
    let htt = stencil(try_diff1(|x| ht(p, x), t, outer))?;
    let ht0 = ht(p, t)?;
    let t_ht = htt + model.cometric(p.eta, grad_h, grad_ht);
    let t_h = ht0 + model.cometric(p.eta, grad_h, grad_h);
    Ok(TOperatorReport { t_of_ht: t_ht, t_of_h_plus_ht: t_h + ht0 })
}

/// Residuals of the identities for `f(τ) = τ h(τ)` on the characteristic line, with
/// `h(τ) = g(ψ = (1, −1), t = τ)` and `f(τ) = g(ψ = (τ, −τ), t = 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CharacteristicReport {
    /// `f − τh` (stretching).
    pub stretching: f64,
    /// `h_τ + H(∇h)`.
    pub hj_for_h: f64,
    /// `f_τ + τH(∇h) − h`.
    pub f_tau_hamiltonian: f64,
    /// `f_τ − (τh_τ + h)`.
    pub f_tau_product: f64,
    /// `T_h(f_τ)`.
    pub t_of_f_tau: f64,
    /// `T_h(f) − (h − τh_τ)`.
    pub t_of_f: f64,
}

impl CharacteristicReport {
    pub fn max_abs(&self) -> f64 {
        [self.stretching, self.hj_for_h, self.f_tau_hamiltonian, self.f_tau_product, self.t_of_f_tau, self.t_of_f]
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

pub fn check_characteristic_identities(
    model: &HyperModel,
    p: &HyperPoint,
    tau: f64,
    branch: ActionBranch,
) -> Result<CharacteristicReport> {
    if !(tau > 0.0) {
        return Err(Error::DomainError("tau must be positive".into()));
    }
    let fast = ActionOptions::fast();
    let h = |q: &HyperPoint, s: f64| -> Result<f64> {
        Ok(modified_action(model, q.zeta1, q.zeta2, FRAC_PI_4, q.eta, 1.0, -1.0, s, branch, &fast)?.value)
    };
    let f = |q: &HyperPoint, s: f64| -> Result<f64> {
        Ok(f_action(model, q.zeta1, q.zeta2, FRAC_PI_4, q.eta, s, -s, branch, &fast)?.value)
    };
    let (outer, inner) = (1e-3, 1e-4);
    let hv = stencil(h(p, tau))?;
    let fv = stencil(f(p, tau))?;
    let h_tau = stencil(try_diff1(|x| h(p, x), tau, inner))?;
    let f_tau_at = |q: &HyperPoint, s: f64| stencil(try_diff1(|x| f(q, x), s, inner));
    let f_tau = f_tau_at(p, tau)?;
    let grad_h = spatial_gradient(&|q: &HyperPoint| h(q, tau), p, inner)?;
    let grad_f = spatial_gradient(&|q: &HyperPoint| f(q, tau), p, inner)?;
    let grad_ft = spatial_gradient(&|q: &HyperPoint| f_tau_at(q, tau), p, outer)?;
    let f_tautau = stencil(try_diff1(|x| f_tau_at(p, x), tau, outer))?;
    let ham_h = 0.5 * model.cometric(p.eta, grad_h, grad_h);
    Ok(CharacteristicReport {
        stretching: fv - tau * hv,
        hj_for_h: h_tau + ham_h,
        f_tau_hamiltonian: f_tau + tau * ham_h - hv,
        f_tau_product: f_tau - (tau * h_tau + hv),
        t_of_f_tau: f_tautau + model.cometric(p.eta, grad_h, grad_ft),
        t_of_f: f_tau + model.cometric(p.eta, grad_h, grad_f) - (hv - tau * h_tau),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistanceOptions {
    pub bvp: BvpOptions,
    pub newton_tol: f64,
}

impl Default for DistanceOptions {
    fn default() -> Self {
        DistanceOptions { bvp: BvpOptions::default(), newton_tol: 1e-12 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistanceResult {
    /// `f` at the critical point of least energy.
    pub distance: f64,
    /// `√(2f)`.
    pub length: f64,
    pub psi1: f64,
    pub psi2: f64,
    pub hamiltonian: f64,
    pub branch: ActionBranch,
    /// Finite-difference `(∂f/∂ψ1, ∂f/∂ψ2)` at the critical point.
    pub critical_residual: [f64; 2],
    /// `f − H`.
    pub hj_residual: f64,
    /// Unwrapped endpoint angles of the selected geodesic.
    pub endpoint: HyperPoint,
    pub solution: HyperGeodesicSolution,
    pub candidates: usize,
}

fn branch_of(model: &HyperModel, sol: &HyperGeodesicSolution, eta: f64) -> Option<ActionBranch> {
    let count = 4 * sol.n.unsigned_abs() as usize + 12;
    let roots = radius_roots(model, sol.eta0, eta, sol.psi1(), sol.psi2(), 1.0, sol.sign, count).ok()?;
    let r = sol.a.sqrt();
    roots
        .iter()
        .position(|x| (x - r).abs() < 1e-7 * r.max(1.0))
        .map(|index| ActionBranch { sign: sol.sign as i8, index })
}

/// Newton on `Δζ(ψ) = ζ` at fixed branch, Jacobian by central differences.
fn polish(
    model: &HyperModel,
    eta0: f64,
    target: &HyperPoint,
    mut psi: [f64; 2],
    branch: ActionBranch,
    tol: f64,
) -> Option<[f64; 2]> {
    let res = |q: [f64; 2]| -> Option<[f64; 2]> {
        let sol = action_trajectory(model, eta0, target.eta, q[0], q[1], 1.0, branch).ok()?;
        let (z1, z2) = sol.zeta_of_s(1.0).ok()?;
        Some([z1 - target.zeta1, z2 - target.zeta2])
    };
    let mut r = res(psi)?;
    for _ in 0..20 {
        if r[0].hypot(r[1]) < tol {
            break;
        }
        let h = 1e-7;
        let mut j = [[0.0; 2]; 2];
        for c in 0..2 {
            let (mut a, mut b) = (psi, psi);
            a[c] += h;
            b[c] -= h;
            let (ra, rb) = (res(a)?, res(b)?);
            for i in 0..2 {
                j[i][c] = (ra[i] - rb[i]) / (2.0 * h);
            }
        }
        let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
        if det == 0.0 {
            break;
        }
        let next = [
            psi[0] - (j[1][1] * r[0] - j[0][1] * r[1]) / det,
            psi[1] - (-j[1][0] * r[0] + j[0][0] * r[1]) / det,
        ];
        let rn = res(next)?;
        if rn[0].hypot(rn[1]) >= r[0].hypot(r[1]) {
            break;
        }
        psi = next;
        r = rn;
    }
    Some(psi)
}

/// Whether `p` lies on the integral curve of `Z` through `(0, 0, η0)`.
pub fn on_vertical_line(p: &HyperPoint, eta0: f64) -> bool {
    (p.eta - eta0).abs() < 1e-12 && angle_diff(p.zeta1, -p.zeta2).abs() < 1e-12
}

/// Critical value of `f` over the momenta for the target `p`, seeded by the boundary value
/// problem on the phase branches of `opts.bvp` and selected by least energy.
pub fn distance(model: &HyperModel, p: &HyperPoint, eta0: f64, opts: &DistanceOptions) -> Result<DistanceResult> {
    check_chart(eta0)?;
    check_chart(p.eta)?;
    if on_vertical_line(p, eta0) {
        return Err(Error::VerticalLineTarget);
    }
    let sols = match solve_bvp(model, p, eta0, 1.0, &opts.bvp) {
        Ok(s) => s,
        Err(Error::NoSolutionInBranchRange { .. }) => return Err(Error::NoCriticalPointFound),
        Err(e) => return Err(e),
    };
    let mut best: Option<DistanceResult> = None;
    let mut candidates = 0;
    for b in &sols {
        let sol = b.solution;
        let Ok((z1, z2)) = sol.zeta_of_s(1.0) else { continue };
        let end = HyperPoint { zeta1: z1, zeta2: z2, eta: p.eta };
        let Some(branch) = branch_of(model, &sol, p.eta) else { continue };
        let Some(psi) = polish(model, eta0, &end, [sol.psi1(), sol.psi2()], branch, opts.newton_tol) else {
            continue;
        };
        let fast = ActionOptions::fast();
        let f = |a: f64, b: f64| -> Result<f64> {
            Ok(f_action(model, end.zeta1, end.zeta2, eta0, end.eta, a, b, branch, &fast)?.value)
        };
        let Ok(ev) = f_action(model, end.zeta1, end.zeta2, eta0, end.eta, psi[0], psi[1], branch, &ActionOptions::default())
        else {
            continue;
        };
        let d1 = try_diff1(|x| f(x, psi[1]), psi[0], fd_step(psi[0])).unwrap_or(f64::NAN);
        let d2 = try_diff1(|x| f(psi[0], x), psi[1], fd_step(psi[1])).unwrap_or(f64::NAN);
        candidates += 1;
        let h = ev.solution.hamiltonian();
        let cand = DistanceResult {
            distance: ev.value,
            length: (2.0 * ev.value.max(0.0)).sqrt(),
            psi1: psi[0],
            psi2: psi[1],
            hamiltonian: h,
            branch,
            critical_residual: [d1, d2],
            hj_residual: ev.value - h,
            endpoint: end,
            solution: ev.solution,
            candidates: 0,
        };
        if best.as_ref().is_none_or(|b| h < b.hamiltonian) {
            best = Some(cand);
        }
    }
    let mut out = best.ok_or(Error::NoCriticalPointFound)?;
    out.candidates = candidates;
    Ok(out)
}

/// Target seen from the chart base `(0, 0, η0)` after left translation taking `from` to the
/// base, so that `distance` of the result is the distance between `from` and `to`.
pub fn relative_target(from: &HyperPoint, to: &HyperPoint, eta0: f64) -> Result<HyperPoint> {
    let base = from_hyper(&HyperPoint { zeta1: 0.0, zeta2: 0.0, eta: eta0 });
    let a = from_hyper(from).coords();
    let inv = S3Point::new([a[0], -a[1], -a[2], -a[3]])?;
    to_hyper(&quat_mul(&quat_mul(&base, &inv), &from_hyper(to)))
}

/// First `√A > 2|τ|` solving `sin²η = ½ + sin(2√κ √A) √(¼ − τ²/A)`.
///
/// On each half-period of the sine the right side is log-concave in `√A`, hence unimodal;
/// each hump of the right sign is tested at its maximum and the root bisected on the rising side.
pub fn restricted_radius(model: &HyperModel, tau: f64, eta: f64) -> Result<f64> {
    check_chart(eta)?;
    let k = 2.0 * model.kappa.sqrt();
    let level = eta.sin().powi(2) - 0.5;
    let rmin = 2.0 * tau.abs();
    let amp = |r: f64| (0.25 - tau * tau / (r * r)).max(0.0).sqrt();
    let first = (rmin * k / PI).floor() as i64;
    if level.abs() < 1e-14 {
        // The curve staying on the torus `η = π/4`.
        return Ok(if rmin > 0.0 { rmin } else { PI / k });
    }
    let want = if level > 0.0 { 0 } else { 1 };
    let target = level.abs();
    for j in first..first + 64 {
        if j.rem_euclid(2) != want {
            continue;
        }
        let a = (j as f64 * PI / k).max(rmin);
        let b = (j + 1) as f64 * PI / k;
        if a >= b {
            continue;
        }
        let phi = |r: f64| (k * r).sin().abs() * amp(r);
        let (mut lo, mut hi) = (a, b);
        let g = 0.5 * (5f64.sqrt() - 1.0);
        let mut x1 = hi - g * (hi - lo);
        let mut x2 = lo + g * (hi - lo);
        let (mut f1, mut f2) = (phi(x1), phi(x2));
        while hi - lo > 1e-13 * b {
            if f1 < f2 {
                lo = x1;
                x1 = x2;
                f1 = f2;
                x2 = lo + g * (hi - lo);
                f2 = phi(x2);
            } else {
                hi = x2;
                x2 = x1;
                f2 = f1;
                x1 = hi - g * (hi - lo);
                f1 = phi(x1);
            }
        }
        let peak = 0.5 * (lo + hi);
        if phi(peak) < target {
            continue;
        }
        return Ok(bisect(|r| phi(r) - target, a, peak, 1e-15 * b));
    }
    Err(Error::NoRootInBranch { branch: 0 })
}

/// Candidate singular values `±(π + 2πn) sin 2η / (8√κ)`, `n = 0..=n_max`, positive ones.
pub fn restricted_pole_candidates(model: &HyperModel, eta: f64, n_max: u32) -> Vec<f64> {
    (0..=n_max).map(|n| (PI + 2.0 * PI * n as f64) * (2.0 * eta).sin() / (8.0 * model.kappa.sqrt())).collect()
}

/// Locates a pole of the restricted action near the `n`-th candidate as the zero of
/// `cos(2√κ √A(τ))` within `±window`; `None` if the first root does not pass a pole there.
pub fn locate_restricted_pole(model: &HyperModel, eta: f64, n: u32, window: f64) -> Result<Option<f64>> {
    let c = restricted_pole_candidates(model, eta, n)[n as usize];
    let g = |tau: f64| -> f64 {
        match restricted_radius(model, tau, eta) {
            Ok(r) => (2.0 * model.kappa.sqrt() * r).cos(),
            Err(_) => f64::NAN,
        }
    };
    let (a, b) = (c - window, c + window);
    let (ga, gb) = (g(a), g(b));
    if !(ga.is_finite() && gb.is_finite()) || (ga < 0.0) == (gb < 0.0) {
        return Ok(None);
    }
    Ok(Some(bisect(g, a, b, 1e-14)))
}

/// Poles `τ > 0` of the restricted action up to `tau_max` (located numerically).
pub fn restricted_poles(model: &HyperModel, eta: f64, tau_max: f64) -> Result<Vec<f64>> {
    let s = (2.0 * eta).sin() / (8.0 * model.kappa.sqrt());
    let n_max = ((tau_max / s / PI - 1.0) / 2.0).ceil().max(0.0) as u32;
    let mut out = Vec::new();
    for n in 0..=n_max {
        if let Some(p) = locate_restricted_pole(model, eta, n, 1e-3)? {
            if p <= tau_max {
                out.push(p);
            }
        }
    }
    Ok(out)
}

/// Restricted action with the principal arctan:
/// `τ(ζ1 − ζ2) + A/2 + 2τ² − (τ/√κ) arctan((2τ/√A) tan(2√κ √A))`.
pub fn restricted_action(model: &HyperModel, tau: f64, zeta1: f64, zeta2: f64, eta: f64) -> Result<f64> {
    let r = restricted_radius(model, tau, eta)?;
    let phase = 2.0 * model.kappa.sqrt() * r;
    if phase.cos().abs() < 1e-9 {
        return Err(Error::SingularTau { tau, pole: tau });
    }
    let c = 2.0 * tau / r;
    Ok(tau * (zeta1 - zeta2) + 0.5 * r * r + 2.0 * tau * tau - tau / model.kappa.sqrt() * (c * phase.tan()).atan())
}

/// Restricted action with the arctan continued through the poles; equals the modified
/// action on the first branch.
pub fn restricted_action_unwrapped(model: &HyperModel, tau: f64, zeta1: f64, zeta2: f64, eta: f64) -> Result<f64> {
    let r = restricted_radius(model, tau, eta)?;
    let phase = 2.0 * model.kappa.sqrt() * r;
    let c = 2.0 * tau / r;
    Ok(tau * (zeta1 - zeta2) + 0.5 * r * r + 2.0 * tau * tau - tau / model.kappa.sqrt() * unwrapped_arctan_tan(c, phase))
}

/// `|τ|` beyond which the principal restricted action satisfies `f ≥ 1.9 τ²`.
pub fn restricted_tail_threshold(model: &HyperModel, zeta1: f64, zeta2: f64) -> f64 {
    (PI / (2.0 * model.kappa.sqrt()) + (zeta1 - zeta2).abs()) / 2.1
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> HyperModel {
        HyperModel::default()
    }

    #[test]
    fn closed_form_matches_quadrature() {
        let m = model();
        for (p1, p2, eta, t) in [(0.3, -0.2, 0.9, 1.0), (0.1, 0.5, 0.6, 0.7), (-0.4, -0.3, 1.1, 1.3)] {
            for index in 0..3 {
                for sign in [1, -1] {
                    let ev = modified_action(&m, 0.2, -0.1, FRAC_PI_4, eta, p1, p2, t, ActionBranch { sign, index },
                        &ActionOptions::default())
                    .unwrap();
                    assert!(ev.cross_check_error.unwrap() < 1e-9);
                    assert_eq!(ev.method, ActionMethod::ClosedForm);
                }
            }
        }
    }

    #[test]
    fn symmetric_formula() {
        let m = model();
        for tau in [0.05, 0.2, 0.7, 1.5] {
            for index in 0..3 {
                let ev = modified_action(&m, 0.3, 0.1, FRAC_PI_4, 0.9, tau, -tau, 1.0,
                    ActionBranch { sign: 1, index }, &ActionOptions::fast()).unwrap();
                let s = symmetric_action(&ev.solution, 0.3, 0.1);
                assert!((s - ev.value).abs() < 1e-9, "{s} vs {}", ev.value);
            }
        }
    }

    #[test]
    fn zero_momenta_give_half_a() {
        let m = model();
        let ev = f_action(&m, 0.4, 0.2, FRAC_PI_4, 1.0, 0.0, 0.0, ActionBranch::default(), &ActionOptions::default())
            .unwrap();
        assert!((ev.value - 0.5 * ev.a_branch).abs() < 1e-14);
    }

    #[test]
    fn stretching() {
        let m = model();
        let b = ActionBranch { sign: -1, index: 1 };
        let g = |p1: f64, p2: f64, t: f64| {
            modified_action(&m, 0.3, -0.5, FRAC_PI_4, 0.8, p1, p2, t, b, &ActionOptions::fast()).unwrap().value
        };
        for lambda in [2.0, 1.0 / 3.0] {
            let (p1, p2, t) = (0.4, 0.15, 0.9);
            assert!((g(p1, p2, t) - lambda * g(p1 / lambda, p2 / lambda, lambda * t)).abs() < 1e-9);
        }
    }

    #[test]
    fn hamilton_jacobi() {
        let m = model();
        let p = HyperPoint { zeta1: 0.3, zeta2: -0.2, eta: 0.95 };
        let g = action_fn(m, FRAC_PI_4, (0.3, 0.1), ActionBranch::default());
        let rep = check_hamilton_jacobi(&m, &g, &p, 0.8).unwrap();
        assert!(rep.residual.abs() < 1e-6, "{rep:?}");
        assert!((rep.grad[0] - 0.3).abs() < 1e-7 && (rep.grad[1] - 0.1).abs() < 1e-7);
        let ev = modified_action(&m, p.zeta1, p.zeta2, FRAC_PI_4, p.eta, 0.3, 0.1, 0.8, ActionBranch::default(),
            &ActionOptions::fast()).unwrap();
        assert!((rep.grad[2] - ev.solution.theta_of_s(0.8)).abs() < 1e-6);
    }

    #[test]
    fn generalized_hj() {
        let m = model();
        let p = HyperPoint { zeta1: 0.5, zeta2: 0.1, eta: 0.7 };
        let rep = check_generalized_hj(&m, &p, FRAC_PI_4, (0.25, -0.35), ActionBranch { sign: 1, index: 1 }).unwrap();
        assert!(rep.residual.abs() < 1e-6, "{rep:?}");
    }

    #[test]
    fn t_operator() {
        let m = model();
        let p = HyperPoint { zeta1: 0.2, zeta2: 0.4, eta: 0.9 };
        let g = action_fn(m, FRAC_PI_4, (0.2, -0.3), ActionBranch::default());
        let rep = check_t_operator(&m, g, &p, 1.1).unwrap();
        assert!(rep.t_of_ht.abs() < 1e-5 && rep.t_of_h_plus_ht.abs() < 1e-5, "{rep:?}");
    }

    #[test]
    fn characteristic_identities() {
        let m = model();
        let p = HyperPoint { zeta1: 0.2, zeta2: -0.1, eta: 0.9 };
        let rep = check_characteristic_identities(&m, &p, 0.3, ActionBranch::default()).unwrap();
        assert!(rep.max_abs() < 1e-5, "{rep:?}");
    }

    #[test]
    fn restricted_action_agrees_with_general_form() {
        let m = model();
        for eta in [0.6, 0.9, 1.1] {
            for k in 1..30 {
                let tau = 0.05 * k as f64;
                let u = restricted_action_unwrapped(&m, tau, 0.2, -0.3, eta).unwrap();
                let ev = f_action(&m, 0.2, -0.3, FRAC_PI_4, eta, tau, -tau, ActionBranch::default(),
                    &ActionOptions::fast()).unwrap();
                assert!((u - ev.value).abs() < 1e-8);
                let r = restricted_radius(&m, tau, eta).unwrap();
                if 4.0 * r < 0.5 * PI {
                    assert!((restricted_action(&m, tau, 0.2, -0.3, eta).unwrap() - u).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn pole_parity() {
        let m = model();
        for n in 0..3u32 {
            let above = locate_restricted_pole(&m, 1.0, n, 1e-3).unwrap();
            let below = locate_restricted_pole(&m, 0.6, n, 1e-3).unwrap();
            assert_eq!(above.is_some(), n % 2 == 0);
            assert_eq!(below.is_some(), n % 2 == 1);
        }
        let torus = restricted_poles(&m, FRAC_PI_4, 1.0).unwrap();
        assert_eq!(torus.len(), restricted_pole_candidates(&m, FRAC_PI_4, 5).iter().filter(|c| **c <= 1.0).count());
    }

    #[test]
    fn distance_recovers_short_geodesic() {
        let m = model();
        let s0 = HyperState { eta: FRAC_PI_4, psi1: 0.12, psi2: -0.05, theta: 0.08, ..Default::default() };
        let gen = HyperGeodesicSolution::from_initial(&m, &s0, 1.0).unwrap();
        let target = gen.endpoint().unwrap();
        let opts = DistanceOptions { bvp: BvpOptions { n_min: -1, n_max: 1, grid: 24, ..Default::default() }, ..Default::default() };
        let d = distance(&m, &target, FRAC_PI_4, &opts).unwrap();
        assert!((d.distance - gen.hamiltonian()).abs() < 1e-6, "{d:?}");
        assert!((d.psi1 - 0.12).abs() < 1e-6 && (d.psi2 + 0.05).abs() < 1e-6);
        assert!(d.critical_residual.iter().all(|r| r.abs() < 1e-6));
    }

    #[test]
    fn vertical_target_rejected() {
        let m = model();
        let p = HyperPoint { zeta1: 0.4, zeta2: -0.4, eta: FRAC_PI_4 };
        assert_eq!(distance(&m, &p, FRAC_PI_4, &DistanceOptions::default()).unwrap_err(), Error::VerticalLineTarget);
    }

    #[test]
    fn relative_target_of_self_is_base() {
        let p = HyperPoint { zeta1: 0.3, zeta2: -1.0, eta: 0.7 };
        let b = relative_target(&p, &p, FRAC_PI_4).unwrap();
        assert!(b.zeta1.abs() < 1e-12 && b.zeta2.abs() < 1e-12 && (b.eta - FRAC_PI_4).abs() < 1e-12);
    }

    #[test]
    fn restricted_radius_matches_generic_scan() {
        let model = HyperModel::default();
        for &eta in &[0.5, 0.7, 0.9, 1.1] {
            for i in 1..60 {
                let tau = 0.037 * i as f64;
                let a = restricted_radius(&model, tau, eta).unwrap();
                let b = radius_roots(&model, FRAC_PI_4, eta, tau, -tau, 1.0, 1.0, 1).unwrap()[0];
                assert!((a - b).abs() < 1e-9, "{eta} {tau}: {a} vs {b}");
            }
        }
    }
}
