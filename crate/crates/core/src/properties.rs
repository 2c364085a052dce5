//! Randomized invariants of the public API.

use std::f64::consts::{FRAC_PI_2, PI};

use proptest::prelude::*;

use crate::Error;

use crate::geodesics_cartesian::{
    geodesic_point, geodesic_velocity, recover_on_sheet, solve_phase_sheets, EndpointPolar, GeodesicParams,
    CURVATURE_GRID,
};
use crate::geodesics_hyperspherical::{HyperModel, HyperState};
use crate::hamiltonian::{hamiltonian_value, CotangentState};
use crate::s3_core::{
    angle_diff, dot, frame_fields, from_hyper, norm, one_form_eval, quat_mul, rot_r1, to_hyper, velocity_decompose,
    wrap_angle, HyperPoint, S3Point, TangentVector,
};

fn vec4() -> impl Strategy<Value = [f64; 4]> {
    prop::array::uniform4(-1.0..1.0f64)
}

fn unit() -> impl Strategy<Value = S3Point> {
    vec4().prop_filter("away from the origin", |v| norm(v) > 0.1).prop_map(|v| S3Point::normalized(v).unwrap())
}

fn params() -> impl Strategy<Value = GeodesicParams> {
    (-3.0..3.0f64, -2.0..2.0f64, -2.0..2.0f64, 0.1..PI)
        .prop_filter("nonzero speed", |(_, c, d, _)| c.hypot(*d) > 0.05)
        .prop_map(|(b, c, d, t)| GeodesicParams { b, c, d, t })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn frame_is_orthonormal_and_normal_to_x(x in unit()) {
        let f = frame_fields(&x);
        let vs = [f.n.0, f.z.0, f.x.0, f.y.0];
        for i in 0..4 {
            for j in 0..4 {
                let expect = if i == j { 1.0 } else { 0.0 };
                prop_assert!((dot(&vs[i], &vs[j]) - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn one_form_is_the_vertical_component(x in unit(), v in vec4()) {
        let v = TangentVector(v);
        prop_assert_eq!(one_form_eval(&x, &v), velocity_decompose(&x, &v).c);
    }

    #[test]
    fn chart_round_trip(z1 in -PI..PI, z2 in -PI..PI, eta in 0.01..FRAC_PI_2 - 0.01) {
        let back = to_hyper(&from_hyper(&HyperPoint { zeta1: z1, zeta2: z2, eta })).unwrap();
        prop_assert!(angle_diff(back.zeta1, z1).abs() < 1e-12);
        prop_assert!(angle_diff(back.zeta2, z2).abs() < 1e-12);
        prop_assert!((back.eta - eta).abs() < 1e-12);
    }

    #[test]
    fn group_law_is_associative_and_isometric(a in unit(), b in unit(), c in unit()) {
        let ab_c = quat_mul(&quat_mul(&a, &b), &c).coords();
        let a_bc = quat_mul(&a, &quat_mul(&b, &c)).coords();
        for i in 0..4 {
            prop_assert!((ab_c[i] - a_bc[i]).abs() < 1e-12);
        }
        prop_assert!((norm(&ab_c) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn wrapped_angles_lie_in_the_half_open_range(a in -100.0..100.0f64) {
        let w = wrap_angle(a);
        prop_assert!((-PI..PI).contains(&w));
        prop_assert!(((a - w) / (2.0 * PI) - ((a - w) / (2.0 * PI)).round()).abs() < 1e-9);
    }

    #[test]
    fn closed_form_stays_on_sphere_horizontal_at_constant_speed(p in params(), frac in 0.0..1.0f64) {
        let s = frac * p.t;
        let x = geodesic_point(&p, s).unwrap();
        let v = geodesic_velocity(&p, s).unwrap();
        prop_assert!((norm(&x.coords()) - 1.0).abs() < 1e-10);
        prop_assert!(one_form_eval(&x, &v).abs() < 1e-10);
        prop_assert!((dot(&v.0, &v.0) - (p.c * p.c + p.d * p.d)).abs() < 1e-10);
    }

    #[test]
    fn hamiltonian_is_invariant_under_the_first_rotation(x in unit(), xi in vec4(), phi in -PI..PI) {
        let s = CotangentState::new(x, xi);
        let r = CotangentState { x: rot_r1(&s.x, phi), xi: rot_r1(&s.xi, phi) };
        prop_assert!((hamiltonian_value(&s) - hamiltonian_value(&r)).abs() < 1e-12);
    }

    #[test]
    fn characteristic_covectors_have_zero_energy(tau in -3.0..3.0f64, eta in 0.05..FRAC_PI_2 - 0.05) {
        let s = HyperState { eta, psi1: tau / eta.tan(), psi2: -tau * eta.tan(), theta: 0.0, ..HyperState::default() };
        prop_assert!(HyperModel::default().hamiltonian(&s).unwrap().abs() < 1e-14 * (1.0 + tau * tau));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn phase_sheets_recover_the_shooting_curvature(
        b in -2.5..2.5f64,
        th in -PI..PI,
        phase in 0.05..2.0 * PI - 0.05,
    ) {
        let w = (1.0 + b * b).sqrt();
        let truth = GeodesicParams { b, c: th.cos(), d: th.sin(), t: phase / w };
        let e = EndpointPolar::from_point(&geodesic_point(&truth, truth.t).unwrap());
        prop_assume!(e.rho > 1e-6 && e.rho < 1.0 - 1e-6);
        let sols = solve_phase_sheets(&e, 2, CURVATURE_GRID);
        // Horizontal-sphere and vertical endpoints have their own solvers.
        prop_assume!(!matches!(sols, Err(Error::ExcludedEndpoint(_))));
        let sols = sols.unwrap();
        let hit = sols.iter().find(|(k, phi)| (k - b).abs() < 1e-7 && (phi - phase).abs() < 1e-7);
        prop_assert!(hit.is_some(), "no root near k = {b}, phase = {phase}: {sols:?}");
        let (k, phi) = *hit.unwrap();
        let rec = recover_on_sheet(&e, k, phi).unwrap();
        prop_assert!((rec.c - truth.c).abs() < 1e-7 && (rec.d - truth.d).abs() < 1e-7);
    }
}
