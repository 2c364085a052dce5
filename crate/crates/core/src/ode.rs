//! Dormand–Prince 5(4) integrator with embedded error control.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Initial step; chosen from the right-hand side when `None`.
    pub h_init: Option<f64>,
    pub h_min: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions {
            rtol: 1e-10,
            atol: 1e-12,
            h_init: None,
            h_min: 1e-14,
            max_steps: 10_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OdeSolution<const N: usize> {
    /// States at the requested output times, in order.
    pub samples: Vec<(f64, [f64; N])>,
    pub accepted: usize,
    pub rejected: usize,
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
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

fn lin<const N: usize>(y: &[f64; N], h: f64, terms: &[(f64, &[f64; N])]) -> [f64; N] {
    let mut out = *y;
    for (c, k) in terms {
        for i in 0..N {
            out[i] += h * c * k[i];
        }
    }
    out
}

struct Stepper<const N: usize, F> {
    f: F,
    opts: OdeOptions,
    t: f64,
    y: [f64; N],
    k1: [f64; N],
    h: f64,
    accepted: usize,
    rejected: usize,
}

impl<const N: usize, F: FnMut(f64, &[f64; N]) -> [f64; N]> Stepper<N, F> {
    fn err_norm(&self, y0: &[f64; N], y1: &[f64; N], e: &[f64; N]) -> f64 {
        let mut s = 0.0;
        for i in 0..N {
            let sc = self.opts.atol + self.opts.rtol * y0[i].abs().max(y1[i].abs());
            let r = e[i] / sc;
            s += r * r;
        }
        (s / N as f64).sqrt()
    }

    fn initial_step(&mut self, span: f64) -> f64 {
        if let Some(h) = self.opts.h_init {
            return h.min(span);
        }
        let d0 = self.y.iter().map(|v| v * v).sum::<f64>().sqrt();
        let d1 = self.k1.iter().map(|v| v * v).sum::<f64>().sqrt();
        let h = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        let h = h.max(1e-6) * self.opts.rtol.powf(0.2).max(1e-3) * 10.0;
        h.min(span)
    }

    /// Advances exactly to `t_end`.
    fn advance_to(&mut self, t_end: f64) -> Result<()> {
        while self.t < t_end {
            if self.accepted + self.rejected >= self.opts.max_steps {
                return Err(Error::StepSizeUnderflow { t: self.t, h: self.h });
            }
            let remaining = t_end - self.t;
            let last = self.h >= remaining;
            let h = if last { remaining } else { self.h };
            let (t, y, k1) = (self.t, self.y, self.k1);
            let k2 = (self.f)(t + C2 * h, &lin(&y, h, &[(A21, &k1)]));
            let k3 = (self.f)(t + C3 * h, &lin(&y, h, &[(A31, &k1), (A32, &k2)]));
            let k4 = (self.f)(t + C4 * h, &lin(&y, h, &[(A41, &k1), (A42, &k2), (A43, &k3)]));
            let k5 = (self.f)(
                t + C5 * h,
                &lin(&y, h, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]),
            );
            let k6 = (self.f)(
                t + h,
                &lin(&y, h, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]),
            );
            let y1 = lin(&y, h, &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)]);
            let k7 = (self.f)(t + h, &y1);
            let mut e = [0.0; N];
            for i in 0..N {
                e[i] = h
                    * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            }
            let err = self.err_norm(&y, &y1, &e);
            let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            if err <= 1.0 && err.is_finite() {
                self.t = if last { t_end } else { t + h };
                self.y = y1;
                self.k1 = k7;
                self.accepted += 1;
                if !last || fac < 1.0 {
                    self.h = h * fac;
                }
            } else {
                self.rejected += 1;
                self.h = h * if err.is_finite() { fac.min(1.0) } else { 0.2 };
                if self.h < self.opts.h_min {
                    return Err(Error::StepSizeUnderflow { t: self.t, h: self.h });
                }
            }
        }
        Ok(())
    }
}

/// Integrates `y' = f(t, y)` from `(t0, y0)` and returns the state at each of `times`
/// (ascending, all `>= t0`); the step sequence is clipped to land on every output time.
pub fn integrate<const N: usize, F>(
    f: F,
    t0: f64,
    y0: [f64; N],
    times: &[f64],
    opts: &OdeOptions,
) -> Result<OdeSolution<N>>
where
    F: FnMut(f64, &[f64; N]) -> [f64; N],
{
    let mut f = f;
    let k1 = f(t0, &y0);
    let mut st = Stepper { f, opts: *opts, t: t0, y: y0, k1, h: 0.0, accepted: 0, rejected: 0 };
    let span = times.last().map(|t| t - t0).unwrap_or(0.0).max(f64::MIN_POSITIVE);
    st.h = st.initial_step(span);
    let mut samples = Vec::with_capacity(times.len());
    for &t in times {
        if t < st.t {
            return Err(Error::DomainError(format!("output time {t} precedes {}", st.t)));
        }
        st.advance_to(t)?;
        samples.push((t, st.y));
    }
    Ok(OdeSolution { samples, accepted: st.accepted, rejected: st.rejected })
}

/// `n + 1` equally spaced times covering `[t0, t1]`.
pub fn linspace(t0: f64, t1: f64, n: usize) -> Vec<f64> {
    let n = n.max(1);
    (0..=n).map(|k| t0 + (t1 - t0) * k as f64 / n as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_oscillator() {
        let opts = OdeOptions::default();
        let sol = integrate(|_, y: &[f64; 2]| [y[1], -y[0]], 0.0, [1.0, 0.0], &[10.0], &opts).unwrap();
        let (_, y) = sol.samples[0];
        assert!((y[0] - 10f64.cos()).abs() < 1e-9);
        assert!((y[1] + 10f64.sin()).abs() < 1e-9);
    }

    #[test]
    fn hits_requested_times() {
        let times = linspace(0.0, 1.0, 7);
        let sol = integrate(|_, y: &[f64; 1]| [y[0]], 0.0, [1.0], &times, &OdeOptions::default()).unwrap();
        for (t, y) in &sol.samples {
            assert!((y[0] - t.exp()).abs() < 1e-10);
        }
        assert_eq!(sol.samples.len(), 8);
    }

    #[test]
    fn stationary_system() {
        let sol = integrate(|_, _: &[f64; 3]| [0.0; 3], 0.0, [1.0, 2.0, 3.0], &[5.0], &OdeOptions::default())
            .unwrap();
        assert_eq!(sol.samples[0].1, [1.0, 2.0, 3.0]);
    }

    #[test]
    fn blow_up_underflows() {
        let opts = OdeOptions { max_steps: 100_000, ..OdeOptions::default() };
        let r = integrate(|_, y: &[f64; 1]| [y[0] * y[0]], 0.0, [1.0], &[2.0], &opts);
        assert!(matches!(r, Err(Error::StepSizeUnderflow { .. })));
    }
}
