//! Embedded Dormand-Prince 5(4) stepper for the small systems used here.
//!
//! Fixed-dimension state via const generics; forced output points (every
//! requested sample time is an integration node, so sampled values carry
//! the integrator's own accuracy rather than dense-output accuracy).

use crate::error::{Error, Result};

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
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = B1 - 5179.0 / 57600.0;
const E3: f64 = B3 - 7571.0 / 16695.0;
const E4: f64 = B4 - 393.0 / 640.0;
const E5: f64 = B5 + 92097.0 / 339200.0;
const E6: f64 = B6 - 187.0 / 2100.0;
const E7: f64 = -1.0 / 40.0;

const SAFETY: f64 = 0.9;
const MIN_SHRINK: f64 = 0.2;
const MAX_GROW: f64 = 5.0;
const MAX_STEPS: usize = 40_000_000;

#[derive(Debug, Clone, Copy)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            rtol: 1e-10,
            atol: 1e-12,
        }
    }
}

/// What the driver should do after an accepted step.
pub enum Control {
    Continue,
    Stop,
}

fn axpyn<const N: usize>(y: &[f64; N], h: f64, terms: &[(f64, &[f64; N])]) -> [f64; N] {
    let mut out = *y;
    for i in 0..N {
        let mut acc = 0.0;
        for (c, k) in terms {
            acc += c * k[i];
        }
        out[i] += h * acc;
    }
    out
}

/// Integrate `rhs` from `(t0, y0)` to `t_end`, forcing a node at every
/// entry of `samples` (must be increasing, within (t0, t_end]).
///
/// `observe` runs on every accepted step and may stop the run early;
/// `valid` rejects trial states (the step is retried smaller). Returns
/// the final `(t, y)`; sampled states are pushed into `out`.
#[allow(clippy::too_many_arguments)]
pub fn integrate<const N: usize>(
    mut rhs: impl FnMut(f64, &[f64; N]) -> [f64; N],
    t0: f64,
    y0: [f64; N],
    t_end: f64,
    tol: Tolerances,
    samples: &[f64],
    mut valid: impl FnMut(f64, &[f64; N]) -> bool,
    mut observe: impl FnMut(f64, &[f64; N], f64) -> Control,
    out: &mut Vec<(f64, [f64; N])>,
) -> Result<(f64, [f64; N])> {
    let mut t = t0;
    let mut y = y0;
    let mut k1 = rhs(t, &y);

    // Initial step: conservative scale from the first derivative.
    let mut dt = {
        let mut scale: f64 = 1e-6;
        for i in 0..N {
            let d = k1[i].abs() / (tol.atol + tol.rtol * y[i].abs());
            if d > scale {
                scale = d;
            }
        }
        ((t_end - t0) * 1e-6).max(1e-8 / scale).min(t_end - t0)
    };

    let mut next_sample = 0usize;
    while next_sample < samples.len() && samples[next_sample] <= t {
        next_sample += 1;
    }

    for _ in 0..MAX_STEPS {
        if t >= t_end {
            return Ok((t, y));
        }
        let mut hit_sample = false;
        let mut h = dt.min(t_end - t);
        if next_sample < samples.len() && t + h >= samples[next_sample] {
            h = samples[next_sample] - t;
            hit_sample = true;
        }
        if h <= f64::EPSILON * t.abs() {
            return Err(Error::StepUnderflow { t });
        }

        let y2 = axpyn(&y, h, &[(A21, &k1)]);
        let k2 = rhs(t + h / 5.0, &y2);
        let y3 = axpyn(&y, h, &[(A31, &k1), (A32, &k2)]);
        let k3 = rhs(t + 3.0 * h / 10.0, &y3);
        let y4 = axpyn(&y, h, &[(A41, &k1), (A42, &k2), (A43, &k3)]);
        let k4 = rhs(t + 4.0 * h / 5.0, &y4);
        let y5 = axpyn(&y, h, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]);
        let k5 = rhs(t + 8.0 * h / 9.0, &y5);
        let y6 = axpyn(&y, h, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]);
        let k6 = rhs(t + h, &y6);
        let ynew = axpyn(&y, h, &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)]);
        let k7 = rhs(t + h, &ynew);

        let mut err: f64 = 0.0;
        let mut finite = true;
        for i in 0..N {
            let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let sc = tol.atol + tol.rtol * y[i].abs().max(ynew[i].abs());
            let r = e / sc;
            err += r * r;
            finite &= ynew[i].is_finite();
        }
        err = (err / N as f64).sqrt();

        if err <= 1.0 && finite && valid(t + h, &ynew) {
            t += h;
            y = ynew;
            k1 = k7; // FSAL
            if hit_sample {
                out.push((t, y));
                next_sample += 1;
            }
            let grow = if err == 0.0 {
                MAX_GROW
            } else {
                (SAFETY * err.powf(-0.2)).clamp(MIN_SHRINK, MAX_GROW)
            };
            let dt_next = (h * grow).min((t_end - t0) * 0.25);
            if let Control::Stop = observe(t, &y, dt_next) {
                return Ok((t, y));
            }
            dt = dt_next;
        } else {
            let shrink = if finite && err.is_finite() {
                (SAFETY * err.powf(-0.2)).clamp(MIN_SHRINK, 0.7)
            } else {
                MIN_SHRINK
            };
            dt = h * shrink;
            if dt <= f64::EPSILON * t.abs().max(1e-300) {
                return Err(Error::StepUnderflow { t });
            }
        }
    }
    Err(Error::StepUnderflow { t })
}
