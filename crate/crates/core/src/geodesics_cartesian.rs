//! Closed-form geodesics from the identity in the complex coordinates `z = x1 + i x2`,
//! `w = x3 + i x4`, and the enumeration of geodesics reaching a given endpoint.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::hamiltonian::{hamiltonian_rhs, CotangentState};
use crate::numeric::{bisect, integrate_adaptive, scan_brackets, touching_roots};
use crate::s3_core::{max_abs_diff, velocity_decompose, wrap_angle, S3Point, TangentVector};

/// Default number of grid cells used to bracket roots of the curvature equation.
pub const CURVATURE_GRID: usize = 4096;

/// Geodesic from the identity with initial covector `(0, B, C, D)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeodesicParams {
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub t: f64,
}

impl GeodesicParams {
    /// Horizontal speed `sqrt(C^2 + D^2)`.
    pub fn speed(&self) -> f64 {
        self.c.hypot(self.d)
    }

    /// Curvature `k = B / sqrt(C^2 + D^2)`.
    pub fn curvature(&self) -> f64 {
        self.b / self.speed()
    }

    /// `W = sqrt(B^2 + C^2 + D^2)`.
    pub fn frequency(&self) -> f64 {
        (self.b * self.b + self.c * self.c + self.d * self.d).sqrt()
    }

    pub fn energy(&self) -> f64 {
        0.5 * (self.c * self.c + self.d * self.d)
    }

    fn check(&self) -> Result<()> {
        if !(self.speed() > 0.0) || !self.b.is_finite() {
            return Err(Error::DomainError("C^2 + D^2 must be positive".into()));
        }
        Ok(())
    }
}

/// Polar form `z = r e^{i arg_z}`, `w = rho e^{i arg_w}` of an endpoint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EndpointPolar {
    pub r: f64,
    pub arg_z: f64,
    pub rho: f64,
    pub arg_w: f64,
}

impl EndpointPolar {
    pub fn from_point(p: &S3Point) -> Self {
        let (z, w) = (p.z(), p.w());
        EndpointPolar { r: z.norm(), arg_z: z.arg(), rho: w.norm(), arg_w: w.arg() }
    }

    pub fn to_point(&self) -> Result<S3Point> {
        S3Point::from_complex(
            Complex64::from_polar(self.r, self.arg_z),
            Complex64::from_polar(self.rho, self.arg_w),
        )
    }

    fn conj(&self) -> Self {
        EndpointPolar { arg_z: -self.arg_z, arg_w: -self.arg_w, ..*self }
    }
}

fn zw(p: &GeodesicParams, s: f64) -> (Complex64, Complex64) {
    let w0 = p.frequency();
    let (sn, cs) = (s * w0).sin_cos();
    let z = Complex64::new(cs, p.b / w0 * sn) * Complex64::from_polar(1.0, -p.b * s);
    let w = Complex64::new(p.c, p.d) / w0 * sn * Complex64::from_polar(1.0, p.b * s);
    (z, w)
}

pub fn geodesic_point(p: &GeodesicParams, s: f64) -> Result<S3Point> {
    p.check()?;
    let (z, w) = zw(p, s);
    S3Point::from_complex(z, w)
}

/// Covector along the geodesic: `phi = z (A + iB) - conj(w) (C + iD)`,
/// `psi = conj(z) (C + iD) + w (A + iB)` with `A = 0`.
pub fn geodesic_cotangent_lift(p: &GeodesicParams, s: f64) -> Result<CotangentState> {
    p.check()?;
    let (z, w) = zw(p, s);
    let ab = Complex64::new(0.0, p.b);
    let cd = Complex64::new(p.c, p.d);
    let phi = z * ab - w.conj() * cd;
    let psi = z.conj() * cd + w * ab;
    Ok(CotangentState { x: [z.re, z.im, w.re, w.im], xi: [phi.re, phi.im, psi.re, psi.im] })
}

pub fn geodesic_velocity(p: &GeodesicParams, s: f64) -> Result<TangentVector> {
    Ok(TangentVector(hamiltonian_rhs(&geodesic_cotangent_lift(p, s)?).x))
}

/// `int_0^t sqrt(a^2 + b^2) ds` by adaptive quadrature.
pub fn arc_length(p: &GeodesicParams) -> Result<f64> {
    p.check()?;
    let speed = |s: f64| {
        let lift = geodesic_cotangent_lift(p, s).expect("checked");
        let x = S3Point::normalized(lift.x).expect("unit");
        let d = velocity_decompose(&x, &TangentVector(hamiltonian_rhs(&lift).x));
        d.a.hypot(d.b)
    };
    Ok(integrate_adaptive(speed, 0.0, p.t, 1e-13, 1e-13, 4000).value)
}

/// A member of the countable family reaching `(cos omega, sin omega, 0, 0)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerticalGeodesic {
    pub n: i32,
    pub params: GeodesicParams,
    /// `omega - pi n` reduced to `[-pi, pi)`; the endpoint is reached with `B t = -omega_hat`.
    pub omega_hat: f64,
    /// `t sqrt(C^2 + D^2)`, the arc length in the ambient metric.
    pub length: f64,
    /// `sqrt((pi n)^2 - omega^2) / sqrt(2)`.
    pub nominal_length: f64,
}

/// The `n`-th geodesic to the point at angle `omega` on the vertical line, with
/// `C + iD` real (the phase of `C + iD` is a free parameter of the family).
pub fn enumerate_vertical(omega: f64, t: f64, n: i32) -> Result<VerticalGeodesic> {
    if omega == 0.0 || !omega.is_finite() || omega.abs() >= PI {
        return Err(Error::DomainError(format!("omega = {omega} must lie in (-pi, 0) or (0, pi)")));
    }
    if !(t > 0.0) || n == 0 {
        return Err(Error::DomainError("need t > 0 and n != 0".into()));
    }
    let pn = PI * n as f64;
    let omega_hat = wrap_angle(omega - pn);
    let rad = pn * pn - omega_hat * omega_hat;
    if rad <= 0.0 {
        return Err(Error::DomainError(format!("(pi n)^2 <= omega_hat^2 for n = {n}")));
    }
    let params = GeodesicParams { b: -omega_hat / t, c: rad.sqrt() / t, d: 0.0, t };
    Ok(VerticalGeodesic {
        n,
        params,
        omega_hat,
        length: rad.sqrt(),
        nominal_length: ((pn * pn - omega * omega).max(0.0)).sqrt() / 2f64.sqrt(),
    })
}

/// `X(k) = (sqrt(1+k^2)/k) (arctan(k rho / sqrt(1 - (1+k^2) rho^2)) - arg_z)`, the phase
/// `t W` of a unit-speed geodesic with curvature `k`.
pub fn curvature_phase(k: f64, arg_z: f64, rho: f64) -> f64 {
    let w = (1.0 + k * k).sqrt();
    let rad = (1.0 - w * w * rho * rho).max(0.0);
    (w / k) * ((k * rho).atan2(rad.sqrt()) - arg_z)
}

/// Left side of the curvature equation, `sin X(k) - rho sqrt(1 + k^2)`.
pub fn curvature_residual(k: f64, arg_z: f64, rho: f64) -> f64 {
    curvature_phase(k, arg_z, rho).sin() - rho * (1.0 + k * k).sqrt()
}

/// Lower bound for positive roots of the curvature equation.
pub fn curvature_lower_bound(arg_z: f64, rho: f64) -> f64 {
    let q = (1.0 - rho * rho).sqrt();
    let a = arg_z * q / (rho * (2f64.sqrt() - q));
    let b = (0.5 * (1.0 / (rho * rho) - 1.0)).sqrt();
    a.min(b)
}

fn check_generic(e: &EndpointPolar) -> Result<()> {
    const EDGE: f64 = 1e-12;
    if e.rho <= EDGE {
        return Err(Error::ExcludedEndpoint("endpoint lies on the vertical line".into()));
    }
    if e.rho >= 1.0 - EDGE || e.arg_z.abs() <= EDGE || (e.arg_z.abs() - PI).abs() <= EDGE {
        return Err(Error::ExcludedEndpoint("endpoint lies on the horizontal sphere".into()));
    }
    Ok(())
}

/// Roots `k` of the curvature equation with positive phase `X(k)`, found by bracketing on
/// a uniform grid of `grid` cells over `|k| <= sqrt(1/rho^2 - 1)` and bisection to 1e-12.
/// Endpoints with `arg_z < 0` are reduced by complex conjugation, which flips the sign of `k`.
pub fn solve_curvature_equation(e: &EndpointPolar, grid: usize) -> Result<Vec<f64>> {
    check_generic(e)?;
    let (sign, arg_z) = if e.arg_z < 0.0 { (-1.0, -e.arg_z) } else { (1.0, e.arg_z) };
    let rho = e.rho;
    let kmax = (1.0 / (rho * rho) - 1.0).sqrt();
    let g = |k: f64| if k == 0.0 { f64::NAN } else { curvature_residual(k, arg_z, rho) };
    let mut roots: Vec<f64> = Vec::new();
    for (a, b) in scan_brackets(g, -kmax, kmax, grid.max(2)) {
        if a < 0.0 && b > 0.0 {
            continue;
        }
        let k = bisect(g, a, b, 1e-12);
        if curvature_phase(k, arg_z, rho) > 0.0 && g(k).abs() < 1e-6 {
            roots.push(sign * k);
        }
    }
    // Near `t W = pi/2` the root is tangential and has no sign change; the first phase sheet
    // finds it transversally.
    let red = EndpointPolar { arg_z, ..*e };
    for negative in [false, true] {
        for (k, _) in sheet_roots(&red, PhaseSheet { m: 0, negative }, grid.max(2)) {
            if curvature_phase(k, arg_z, rho) > 0.0 && g(k).abs() < 1e-6 {
                roots.push(sign * k);
            }
        }
    }
    roots.sort_by(|a, b| a.partial_cmp(b).unwrap());
    roots.dedup_by(|a, b| (*a - *b).abs() < 1e-10);
    Ok(roots)
}

/// Unit-speed data `(B, C, D, t)` for a root `k`: `t W = X(k)`, `B = k` and
/// `arg(C + iD) = arg_w - B t`. Fails unless shooting reproduces the endpoint to 1e-8.
pub fn recover_initial_data(e: &EndpointPolar, k: f64) -> Result<GeodesicParams> {
    check_generic(e)?;
    let (red, kk) = if e.arg_z < 0.0 { (e.conj(), -k) } else { (*e, k) };
    let w = (1.0 + kk * kk).sqrt();
    let phase = curvature_phase(kk, red.arg_z, red.rho);
    if !(phase > 0.0) || red.rho * w > 1.0 + 1e-12 {
        return Err(Error::BranchInconsistency { error: f64::INFINITY });
    }
    let t = phase / w;
    let theta = red.arg_w - kk * t;
    let mut p = GeodesicParams { b: kk, c: theta.cos(), d: theta.sin(), t };
    if e.arg_z < 0.0 {
        p.b = -p.b;
        p.d = -p.d;
    }
    let err = endpoint_error(&p, e)?;
    if err > 1e-8 {
        return Err(Error::BranchInconsistency { error: err });
    }
    Ok(p)
}

/// Half-turn `φ = t W ∈ [πm, π(m + 1)]` of the phase of a unit-speed geodesic, with the
/// sign of its curvature. Reaching `ρ = |w| = |sin φ| / W` fixes `k = ±sqrt(sin²φ/ρ² − 1)`,
/// so `φ` parametrizes the sheet smoothly through `|k| = sqrt(1/ρ² − 1)`, where the
/// curvature equation has a fold.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PhaseSheet {
    pub m: u32,
    pub negative: bool,
}

impl PhaseSheet {
    /// Phases of the sheet with `|sin φ| >= ρ`.
    pub fn range(&self, rho: f64) -> (f64, f64) {
        let a = rho.min(1.0).asin();
        (PI * self.m as f64 + a, PI * (self.m + 1) as f64 - a)
    }

    pub fn curvature(&self, phi: f64, rho: f64) -> f64 {
        let k = ((phi.sin() / rho).powi(2) - 1.0).max(0.0).sqrt();
        if self.negative {
            -k
        } else {
            k
        }
    }
}

/// Mismatch in `arg z` at the end of the unit-speed geodesic with phase `φ` on `sheet`:
/// `arg(cos φ + i (k/W) sin φ) − k φ / W − arg_z`, reduced to `[−π, π)`.
pub fn phase_residual(phi: f64, e: &EndpointPolar, sheet: PhaseSheet) -> f64 {
    let k = sheet.curvature(phi, e.rho);
    let w = (1.0 + k * k).sqrt();
    let (sn, cs) = phi.sin_cos();
    wrap_angle(Complex64::new(cs, k / w * sn).arg() - k * phi / w - e.arg_z)
}

/// Roots `(k, φ)` of `phase_residual` on one sheet, from `grid` cells in `φ`.
/// Brackets across the `±π` seam of the reduced angle are discarded by the residual test.
fn sheet_roots(e: &EndpointPolar, sheet: PhaseSheet, grid: usize) -> Vec<(f64, f64)> {
    let (lo, hi) = sheet.range(e.rho);
    let f = |phi: f64| phase_residual(phi.clamp(lo, hi), e, sheet);
    // Conjugate endpoints give double roots, which only `touching_roots` sees.
    scan_brackets(f, lo, hi, grid)
        .into_iter()
        .map(|(a, b)| bisect(f, a, b, 1e-14))
        .chain(touching_roots(f, lo, hi, grid, 1e-12))
        .filter(|phi| f(*phi).abs() < 1e-9)
        .map(|phi| (sheet.curvature(phi, e.rho), phi))
        .filter(|(k, _)| *k != 0.0)
        .collect()
}

/// Curvatures and phases `(k, φ)` of all unit-speed geodesics to a generic endpoint with
/// phase below `π sheets`, each re-verified by the closed form to 1e-8.
pub fn solve_phase_sheets(e: &EndpointPolar, sheets: u32, grid: usize) -> Result<Vec<(f64, f64)>> {
    check_generic(e)?;
    let mut out: Vec<(f64, f64)> = Vec::new();
    for m in 0..sheets {
        for negative in [false, true] {
            for (k, phi) in sheet_roots(e, PhaseSheet { m, negative }, grid.max(2)) {
                if recover_on_sheet(e, k, phi).is_ok() {
                    out.push((k, phi));
                }
            }
        }
    }
    out.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.partial_cmp(&b.0).unwrap()));
    out.dedup_by(|a, b| (a.0 - b.0).abs() < 1e-9 && (a.1 - b.1).abs() < 1e-9);
    Ok(out)
}

/// Unit-speed data for curvature `k` and phase `φ`: `t = φ/W`, `B = k` and
/// `arg(C + iD) = arg_w − B t`, shifted by `π` where `sin φ < 0`.
pub fn recover_on_sheet(e: &EndpointPolar, k: f64, phi: f64) -> Result<GeodesicParams> {
    let w = (1.0 + k * k).sqrt();
    let t = phi / w;
    let flip = if phi.sin() < 0.0 { PI } else { 0.0 };
    let theta = e.arg_w - k * t - flip;
    let p = GeodesicParams { b: k, c: theta.cos(), d: theta.sin(), t };
    let err = endpoint_error(&p, e)?;
    if err > 1e-8 {
        return Err(Error::BranchInconsistency { error: err });
    }
    Ok(p)
}

/// Largest coordinate difference between the geodesic endpoint and `e`.
pub fn endpoint_error(p: &GeodesicParams, e: &EndpointPolar) -> Result<f64> {
    let x = geodesic_point(p, p.t)?;
    Ok(max_abs_diff(&x.coords(), &e.to_point()?.coords()))
}

/// The unique unit-speed geodesic with `B = 0` to an endpoint with real `z`
/// (`x2 = 0`), lying on the horizontal sphere through the identity.
pub fn horizontal_sphere_geodesic(p: &S3Point) -> Result<GeodesicParams> {
    let x = p.coords();
    if x[1].abs() > 1e-12 {
        return Err(Error::DomainError("endpoint is off the horizontal sphere".into()));
    }
    let rho = x[2].hypot(x[3]);
    if rho == 0.0 {
        return Err(Error::ExcludedEndpoint("endpoint lies on the vertical line".into()));
    }
    let theta = x[3].atan2(x[2]);
    Ok(GeodesicParams { b: 0.0, c: theta.cos(), d: theta.sin(), t: rho.atan2(x[0]) })
}

/// One entry of an endpoint enumeration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConnectingGeodesic {
    /// Branch `n` for vertical-line targets, curvature root otherwise.
    pub label: f64,
    pub params: GeodesicParams,
    pub length: f64,
    pub endpoint_error: f64,
}

/// All geodesics from the identity to `p` found by the curvature equation (generic
/// endpoints), the horizontal sphere (`x2 = 0`) or the vertical family with
/// `n_min <= n <= n_max` (`w = 0`), sorted by length.
pub fn connect(p: &S3Point, n_min: i32, n_max: i32, grid: usize) -> Result<Vec<ConnectingGeodesic>> {
    let e = EndpointPolar::from_point(p);
    let mut out = Vec::new();
    if e.rho <= 1e-12 {
        for n in n_min..=n_max {
            if n == 0 {
                continue;
            }
            if let Ok(v) = enumerate_vertical(e.arg_z, 1.0, n) {
                let err = endpoint_error(&v.params, &e)?;
                out.push(ConnectingGeodesic { label: n as f64, params: v.params, length: v.length, endpoint_error: err });
            }
        }
    } else if p.coords()[1].abs() <= 1e-12 {
        let g = horizontal_sphere_geodesic(p)?;
        let err = endpoint_error(&g, &e)?;
        out.push(ConnectingGeodesic { label: 0.0, params: g, length: g.t * g.speed(), endpoint_error: err });
    } else {
        let sheets = 2 * n_min.unsigned_abs().max(n_max.unsigned_abs()).max(1);
        for (k, phi) in solve_phase_sheets(&e, sheets, grid)? {
            let g = recover_on_sheet(&e, k, phi)?;
            let err = endpoint_error(&g, &e)?;
            out.push(ConnectingGeodesic { label: k, params: g, length: g.t * g.speed(), endpoint_error: err });
        }
    }
    out.sort_by(|a, b| a.length.partial_cmp(&b.length).unwrap().then(a.label.partial_cmp(&b.label).unwrap()));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::s3_core::one_form_eval;

    #[test]
    fn great_circle_when_b_vanishes() {
        let p = GeodesicParams { b: 0.0, c: 1.0, d: 0.0, t: 3.0 };
        for k in 0..10 {
            let s = 0.3 * k as f64;
            let x = geodesic_point(&p, s).unwrap().coords();
            assert!(max_abs_diff(&x, &[s.cos(), 0.0, s.sin(), 0.0]) < 1e-15);
        }
    }

    #[test]
    fn starts_at_identity() {
        let p = GeodesicParams { b: 0.7, c: -0.3, d: 1.1, t: 1.0 };
        assert_eq!(geodesic_point(&p, 0.0).unwrap(), S3Point::IDENTITY);
        let l = geodesic_cotangent_lift(&p, 0.0).unwrap();
        assert_eq!(l.xi, [0.0, 0.7, -0.3, 1.1]);
    }

    #[test]
    fn curve_is_horizontal() {
        let p = GeodesicParams { b: -1.3, c: 0.4, d: 0.9, t: 2.0 };
        for k in 0..=20 {
            let s = 0.1 * k as f64;
            let x = geodesic_point(&p, s).unwrap();
            let v = geodesic_velocity(&p, s).unwrap();
            assert!(one_form_eval(&x, &v).abs() < 1e-14);
        }
    }

    #[test]
    fn rejects_zero_speed() {
        let p = GeodesicParams { b: 1.0, c: 0.0, d: 0.0, t: 1.0 };
        assert!(geodesic_point(&p, 0.5).is_err());
    }

    #[test]
    fn vertical_quarter_turn() {
        let v = enumerate_vertical(0.5 * PI, 1.0, 1).unwrap();
        let x = geodesic_point(&v.params, 1.0).unwrap().coords();
        assert!(max_abs_diff(&x, &[0.0, 1.0, 0.0, 0.0]) < 1e-9);
        let l1 = (PI * PI - PI * PI / 4.0).sqrt() / 2f64.sqrt();
        assert!((v.nominal_length - l1).abs() < 1e-15);
        assert!((arc_length(&v.params).unwrap() - v.length).abs() < 1e-8);
    }

    #[test]
    fn opposite_branches_share_the_endpoint() {
        for n in 1..4 {
            let a = enumerate_vertical(-1.0, 2.0, n).unwrap();
            let b = enumerate_vertical(-1.0, 2.0, -n).unwrap();
            for g in [a, b] {
                let x = geodesic_point(&g.params, 2.0).unwrap().coords();
                assert!(max_abs_diff(&x, &[1f64.cos(), -1f64.sin(), 0.0, 0.0]) < 1e-9);
            }
        }
    }

    #[test]
    fn vertical_domain_errors() {
        assert!(enumerate_vertical(0.0, 1.0, 1).is_err());
        assert!(enumerate_vertical(1.0, 1.0, 0).is_err());
        assert!(enumerate_vertical(1.0, -1.0, 1).is_err());
    }

    #[test]
    fn curvature_round_trip() {
        let truth = GeodesicParams { b: 0.8, c: 0.6, d: -0.8, t: 1.1 / (1.64f64).sqrt() };
        let e = EndpointPolar::from_point(&geodesic_point(&truth, truth.t).unwrap());
        let roots = solve_curvature_equation(&e, CURVATURE_GRID).unwrap();
        let k = roots.iter().copied().find(|k| (k - 0.8).abs() < 1e-8).expect("true root");
        let rec = recover_initial_data(&e, k).unwrap();
        assert!((rec.b - truth.b).abs() < 1e-8);
        assert!((rec.t - truth.t).abs() < 1e-8);
        assert!((wrap_angle(e.arg_w - rec.b * rec.t) - rec.d.atan2(rec.c)).abs() < 1e-12);
        let b = curvature_lower_bound(e.arg_z, e.rho);
        assert!(roots.iter().filter(|k| **k > 0.0).all(|k| *k > b));
    }

    #[test]
    fn excluded_endpoints() {
        let vert = EndpointPolar { r: 1.0, arg_z: 0.4, rho: 0.0, arg_w: 0.0 };
        assert!(matches!(solve_curvature_equation(&vert, 64), Err(Error::ExcludedEndpoint(_))));
        let horiz = EndpointPolar { r: 0.8, arg_z: 0.0, rho: 0.6, arg_w: 0.3 };
        assert!(matches!(solve_curvature_equation(&horiz, 64), Err(Error::ExcludedEndpoint(_))));
    }

    #[test]
    fn horizontal_sphere_target_is_unique() {
        let p = S3Point::normalized([0.3, 0.0, 0.5, -0.2]).unwrap();
        let all = connect(&p, -3, 3, CURVATURE_GRID).unwrap();
        assert_eq!(all.len(), 1);
        assert!(all[0].endpoint_error < 1e-12);
        assert_eq!(all[0].params.b, 0.0);
    }

    #[test]
    fn phase_sheets_recover_long_geodesics() {
        for (b, th, phase) in [(0.8, 0.4, 2.0), (-1.5, 2.0, 3.0), (0.3, -1.0, 4.5), (2.2, 0.1, 6.0)] {
            let w = (1.0f64 + b * b).sqrt();
            let truth = GeodesicParams { b, c: f64::cos(th), d: f64::sin(th), t: phase / w };
            let e = EndpointPolar::from_point(&geodesic_point(&truth, truth.t).unwrap());
            let sols = solve_phase_sheets(&e, 2, CURVATURE_GRID).unwrap();
            let (k, phi) = sols
                .iter()
                .copied()
                .find(|(k, phi)| (k - b).abs() < 1e-8 && (phi - phase).abs() < 1e-8)
                .expect("true sheet root");
            let rec = recover_on_sheet(&e, k, phi).unwrap();
            assert!((rec.t - truth.t).abs() < 1e-8);
            assert!((rec.c - truth.c).abs().max((rec.d - truth.d).abs()) < 1e-8);
        }
    }

    #[test]
    fn connect_finds_near_vertical_minimizer() {
        let p = S3Point::new([0.5, 0.5, 0.5, 0.5]).unwrap();
        let all = connect(&p, -2, 2, CURVATURE_GRID).unwrap();
        assert!(all.iter().all(|g| g.endpoint_error < 1e-8));
        assert!(all[0].length < PI);
    }
}
