//! Quadrature, bracketing root finders and finite differences.

/// Gauss–Kronrod 7/15 nodes on `[0, 1]` (positive half) with weights.
const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

/// One G7/K15 panel: `(kronrod, |kronrod - gauss|)`.
pub fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let hl = 0.5 * (b - a);
    let fc = f(c);
    let mut rk = fc * WGK[7];
    let mut rg = fc * WG[3];
    for j in 0..7 {
        let dx = hl * XGK[j];
        let s = f(c - dx) + f(c + dx);
        rk += WGK[j] * s;
        if j % 2 == 1 {
            rg += WG[j / 2] * s;
        }
    }
    (rk * hl, ((rk - rg) * hl).abs())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature {
    pub value: f64,
    pub error: f64,
    pub panels: usize,
}

/// Globally adaptive G7/K15 quadrature: bisects the worst panel until the summed error
/// estimate is below `max(abs_tol, rel_tol |I|)` or `max_panels` is reached.
pub fn integrate_adaptive<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
    max_panels: usize,
) -> Quadrature {
    if a == b {
        return Quadrature { value: 0.0, error: 0.0, panels: 0 };
    }
    let (v, e) = gk15(&mut f, a, b);
    let mut panels = vec![(a, b, v, e)];
    loop {
        let value: f64 = panels.iter().map(|p| p.2).sum();
        let error: f64 = panels.iter().map(|p| p.3).sum();
        if error <= abs_tol.max(rel_tol * value.abs()) || panels.len() >= max_panels {
            return Quadrature { value, error, panels: panels.len() };
        }
        let (idx, _) = panels
            .iter()
            .enumerate()
            .fold((0, -1.0), |acc, (i, p)| if p.3 > acc.1 { (i, p.3) } else { acc });
        let (pa, pb, pv, pe) = panels.swap_remove(idx);
        let m = 0.5 * (pa + pb);
        if m <= pa || m >= pb {
            panels.push((pa, pb, pv, pe));
            let value: f64 = panels.iter().map(|p| p.2).sum::<f64>();
            return Quadrature { value, error, panels: panels.len() + 1 };
        }
        let (v1, e1) = gk15(&mut f, pa, m);
        let (v2, e2) = gk15(&mut f, m, pb);
        panels.push((pa, m, v1, e1));
        panels.push((m, pb, v2, e2));
    }
}

/// Fixed composite G7/K15 rule over `n` equal panels.
pub fn integrate_composite<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    (0..n).map(|k| gk15(&mut f, a + k as f64 * h, a + (k + 1) as f64 * h).0).sum()
}

/// Bisection on a sign-changing bracket, to absolute width `tol`.
pub fn bisect<F: FnMut(f64) -> f64>(mut f: F, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let mut fa = f(a);
    if fa == 0.0 {
        return a;
    }
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if (b - a).abs() <= tol || m == a || m == b {
            break;
        }
        let fm = f(m);
        if fm == 0.0 {
            return m;
        }
        if (fm < 0.0) == (fa < 0.0) {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// Brent's method on a sign-changing bracket.
pub fn brent<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, tol: f64) -> f64 {
    let (mut a, mut b) = (a, b);
    let (mut fa, mut fb) = (f(a), f(b));
    if fa == 0.0 {
        return a;
    }
    if fb == 0.0 {
        return b;
    }
    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut e = d;
    for _ in 0..200 {
        if (fb > 0.0) == (fc > 0.0) {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol1 = 2.0 * f64::EPSILON * b.abs() + 0.5 * tol;
        let xm = 0.5 * (c - b);
        if xm.abs() <= tol1 || fb == 0.0 {
            return b;
        }
        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * xm * s;
                q = 1.0 - s;
            } else {
                let qq = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * xm * qq * (qq - r) - (b - a) * (r - 1.0));
                q = (qq - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            }
            p = p.abs();
            if 2.0 * p < (3.0 * xm * q - (tol1 * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol1 { d } else { tol1.copysign(xm) };
        fb = f(b);
    }
    b
}

/// Sign-change brackets of `f` on a uniform grid of `n` cells over `[a, b]`;
/// non-finite samples break brackets.
pub fn scan_brackets<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let mut x0 = a;
    let mut f0 = f(a);
    for k in 1..=n {
        let x1 = a + (b - a) * k as f64 / n as f64;
        let f1 = f(x1);
        if f0.is_finite() && f1.is_finite() && ((f0 < 0.0) != (f1 < 0.0) || f0 == 0.0) {
            out.push((x0, x1));
        }
        x0 = x1;
        f0 = f1;
    }
    out
}

/// Roots of `f` on `[a, b]` that a sign-change scan of `n` cells misses: at each sample
/// where `|f|` is a strict local minimum without a sign change, the extremum is located as
/// a root of the central-difference derivative. A sign flip there splits into two bisected
/// roots; otherwise the extremum is a double root when `|f| < tol`.
pub fn touching_roots<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, n: usize, tol: f64) -> Vec<f64> {
    let xs: Vec<f64> = (0..=n).map(|k| a + (b - a) * k as f64 / n as f64).collect();
    let fs: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
    let mut out = Vec::new();
    for k in 1..n {
        let (l, m, r) = (fs[k - 1], fs[k], fs[k + 1]);
        if !(l.is_finite() && m.is_finite() && r.is_finite()) || m == 0.0 {
            continue;
        }
        let same = (l > 0.0) == (m > 0.0) && (r > 0.0) == (m > 0.0);
        if !(same && m.abs() < l.abs() && m.abs() <= r.abs()) {
            continue;
        }
        let h = 1e-4 * (xs[1] - xs[0]);
        let mut df = |x: f64| (f(x + h) - f(x - h)) / (2.0 * h);
        let (lo, hi) = (xs[k - 1] + h, xs[k + 1] - h);
        let (dl, dr) = (df(lo), df(hi));
        if !(dl.is_finite() && dr.is_finite()) || (dl < 0.0) == (dr < 0.0) {
            continue;
        }
        let x = brent(&mut df, lo, hi, 1e-15 * (1.0 + a.abs().max(b.abs())));
        let fx = f(x);
        if (fx > 0.0) != (m > 0.0) && fx != 0.0 {
            out.push(bisect(&mut f, xs[k - 1], x, 1e-15));
            out.push(bisect(&mut f, x, xs[k + 1], 1e-15));
        } else if fx.abs() < tol {
            out.push(x);
        }
    }
    out
}

/// Central first derivative with one Richardson step (`h` and `h/2`).
pub fn diff1<F: FnMut(f64) -> f64>(mut f: F, x: f64, h: f64) -> f64 {
    let d = |f: &mut F, h: f64| (f(x + h) - f(x - h)) / (2.0 * h);
    let coarse = d(&mut f, h);
    let fine = d(&mut f, 0.5 * h);
    (4.0 * fine - coarse) / 3.0
}

/// Central second derivative with one Richardson step.
pub fn diff2<F: FnMut(f64) -> f64>(mut f: F, x: f64, h: f64) -> f64 {
    let f0 = f(x);
    let d = |f: &mut F, h: f64| (f(x + h) - 2.0 * f0 + f(x - h)) / (h * h);
    let coarse = d(&mut f, h);
    let fine = d(&mut f, 0.5 * h);
    (4.0 * fine - coarse) / 3.0
}

/// Fallible variant of [`diff1`]; the first error aborts.
pub fn try_diff1<E, F: FnMut(f64) -> Result<f64, E>>(mut f: F, x: f64, h: f64) -> Result<f64, E> {
    let c = (f(x + h)? - f(x - h)?) / (2.0 * h);
    let fi = (f(x + 0.5 * h)? - f(x - 0.5 * h)?) / h;
    Ok((4.0 * fi - c) / 3.0)
}

/// Fallible variant of [`diff2`].
pub fn try_diff2<E, F: FnMut(f64) -> Result<f64, E>>(mut f: F, x: f64, h: f64) -> Result<f64, E> {
    let f0 = f(x)?;
    let c = (f(x + h)? - 2.0 * f0 + f(x - h)?) / (h * h);
    let q = 0.5 * h;
    let fi = (f(x + q)? - 2.0 * f0 + f(x - q)?) / (q * q);
    Ok((4.0 * fi - c) / 3.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadrature_of_smooth_functions() {
        let q = integrate_adaptive(|x: f64| x.sin(), 0.0, std::f64::consts::PI, 1e-14, 1e-14, 1000);
        assert!((q.value - 2.0).abs() < 1e-13);
        let c = integrate_composite(|x: f64| x.exp(), 0.0, 1.0, 4);
        assert!((c - (1f64.exp() - 1.0)).abs() < 1e-14);
    }

    #[test]
    fn adaptive_handles_kinks() {
        let q = integrate_adaptive(|x: f64| x.abs().sqrt(), -1.0, 1.0, 1e-12, 1e-12, 2000);
        assert!((q.value - 4.0 / 3.0).abs() < 1e-10);
    }

    #[test]
    fn root_finders() {
        let r = bisect(|x| x * x - 2.0, 0.0, 2.0, 1e-14);
        assert!((r - 2f64.sqrt()).abs() < 1e-13);
        let r = brent(|x: f64| x.cos() - x, 0.0, 1.0, 1e-15);
        assert!((r.cos() - r).abs() < 1e-14);
        let b = scan_brackets(|x: f64| x.sin(), 0.5, 10.0, 100);
        assert_eq!(b.len(), 3);
    }

    #[test]
    fn finite_differences() {
        assert!((diff1(|x: f64| x.exp(), 0.3, 1e-3) - 0.3f64.exp()).abs() < 1e-11);
        assert!((diff2(|x: f64| x.sin(), 0.4, 1e-3) + 0.4f64.sin()).abs() < 1e-8);
    }

    #[test]
    fn double_and_close_roots_are_found() {
        let double = touching_roots(|x: f64| (x - 0.3).powi(2), -1.0, 1.0, 64, 1e-12);
        assert_eq!(double.len(), 1);
        assert!((double[0] - 0.3).abs() < 1e-7);
        // Two roots inside one cell: `(x - 0.3)^2 - 1e-6` at 0.299 and 0.301.
        let pair = touching_roots(|x: f64| (x - 0.3).powi(2) - 1e-6, -1.0, 1.0, 64, 1e-12);
        assert_eq!(pair.len(), 2);
        assert!((pair[0] - 0.299).abs() < 1e-12 && (pair[1] - 0.301).abs() < 1e-12);
        assert!(touching_roots(|x: f64| (x - 0.3).powi(2) + 1e-6, -1.0, 1.0, 64, 1e-12).is_empty());
    }
}
