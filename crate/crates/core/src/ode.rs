//! Reference profile: integrates f'' + (a/t) f' - (b/t^2) f(1+f) - c f'^2/(1+f) = 0
//! with the time-compactification variable carried along, detects finite-time
//! blow-up, and checks the closed-form growth envelopes.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::params::{blowup_condition, DerivedConstants, ParameterSet};
use crate::rk::{self, Control, Tolerances};

#[derive(Debug, Clone, Copy)]
pub enum Mode {
    /// Integrate to a fixed end time (must stay below blow-up).
    Horizon(f64),
    /// Integrate until f exceeds the cap and report a blow-up bracket.
    BlowUp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridKind {
    /// Geometric clustering toward both ends of the run (default): the
    /// start needs resolution for the inverse-map tables, the end for
    /// the approach to blow-up.
    GeometricBoth,
    /// Geometric clustering toward the end only.
    GeometricTail,
    /// Equispaced output nodes.
    Uniform,
}

#[derive(Debug, Clone, Copy)]
pub struct OdeOptions {
    pub tol: Tolerances,
    pub mode: Mode,
    /// Stop once f exceeds this value (blow-up mode).
    pub cap: f64,
    /// Switch to the reciprocal variable w = 1/(1+f) beyond this f.
    pub w_switch: f64,
    /// Number of output samples.
    pub samples: usize,
    pub grid: GridKind,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self {
            tol: Tolerances::default(),
            mode: Mode::BlowUp,
            cap: 1e8,
            w_switch: 1e4,
            samples: 2048,
            grid: GridKind::GeometricBoth,
        }
    }
}

/// Sampled homogeneous trajectory.
///
/// `g_comp` is the compactified time tau = g(t) in [-1, 0); `quad_i2`
/// carries the independently accumulated integral of the quadrature form
/// of the same map (consistency diagnostic).
#[derive(Debug, Clone, Serialize)]
pub struct OdeTrace {
    pub times: Vec<f64>,
    pub f: Vec<f64>,
    pub f0: Vec<f64>,
    pub g_comp: Vec<f64>,
    pub quad_i2: Vec<f64>,
    pub blowup_bracket: Option<(f64, f64)>,
}

impl OdeTrace {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

struct Coef {
    a: f64,
    b: f64,
    c: f64,
    comp_a: f64,
    b_coef: f64,
}

impl Coef {
    // y = [f, f0, g, i2]
    fn rhs_f(&self, t: f64, y: &[f64; 4]) -> [f64; 4] {
        let (f, f0, g) = (y[0], y[1], y[2]);
        let s = 1.0 + f;
        let growth = t.powf(self.a - 2.0) * f * s.powf(1.0 - self.c);
        [
            f0,
            -(self.a / t) * f0 + (self.b / (t * t)) * f * s + self.c * f0 * f0 / s,
            self.comp_a * self.b_coef * (-g).powf(self.b / self.comp_a + 1.0) * growth,
            growth,
        ]
    }

    // y = [w, f0, g, i2], w = 1/(1+f)
    fn rhs_w(&self, t: f64, y: &[f64; 4]) -> [f64; 4] {
        let (w, f0, g) = (y[0], y[1], y[2]);
        let growth = t.powf(self.a - 2.0) * (1.0 - w) * w.powf(self.c - 2.0);
        [
            -w * w * f0,
            -(self.a / t) * f0 + (self.b / (t * t)) * (1.0 - w) / (w * w) + self.c * f0 * f0 * w,
            self.comp_a * self.b_coef * (-g).powf(self.b / self.comp_a + 1.0) * growth,
            growth,
        ]
    }
}

fn sample_grid(t0: f64, t_end: f64, n: usize, kind: GridKind) -> Vec<f64> {
    // The first node sits at t0 and is emitted from the initial condition.
    let span = t_end - t0;
    match kind {
        GridKind::GeometricBoth => {
            let half = (n / 2).max(2);
            let q: f64 = 1e-10f64.powf(1.0 / (half - 1) as f64);
            let mut grid: Vec<f64> = (0..half)
                .map(|i| t0 + 0.5 * span * q.powi((half - 1 - i) as i32))
                .collect();
            grid.extend((1..half).map(|i| t_end - 0.5 * span * q.powi(i as i32)));
            grid
        }
        GridKind::GeometricTail => {
            let q: f64 = 1e-10f64.powf(1.0 / (n.max(2) - 1) as f64);
            (1..n).map(|i| t_end - span * q.powi(i as i32)).collect()
        }
        GridKind::Uniform => (1..n)
            .map(|i| t0 + span * i as f64 / (n.max(2) - 1) as f64)
            .collect(),
    }
}

struct RawRun {
    points: Vec<(f64, [f64; 4])>,
    t_stop: f64,
    y_stop: [f64; 4],
    hit_cap: bool,
}

fn run_through(
    p: &ParameterSet,
    d: &DerivedConstants,
    opts: &OdeOptions,
    t_end: f64,
    samples: &[f64],
) -> Result<RawRun> {
    let coef = Coef {
        a: p.a,
        b: p.b,
        c: p.c,
        comp_a: p.comp_a,
        b_coef: d.b_coef,
    };
    let cap = match opts.mode {
        Mode::BlowUp => opts.cap,
        Mode::Horizon(_) => f64::INFINITY,
    };
    let switch_at = opts.w_switch.min(cap);
    let mut out: Vec<(f64, [f64; 4])> = Vec::with_capacity(samples.len() + 2);

    // Phase 1: direct variables until f reaches the switch level.
    let y0 = [p.beta, p.beta0, -1.0, 0.0];
    let mut switched = false;
    let (t1, y1) = rk::integrate(
        |t, y| coef.rhs_f(t, y),
        p.t0,
        y0,
        t_end,
        opts.tol,
        samples,
        |t, y| {
            if 1.0 + y[0] <= 0.0 {
                return false;
            }
            let _ = t;
            y[2] < 0.0 && y[1] > 0.0
        },
        |_t, y, _dt| {
            if y[0] >= switch_at {
                switched = true;
                Control::Stop
            } else {
                Control::Continue
            }
        },
        &mut out,
    )?;

    if !switched {
        return Ok(RawRun {
            points: out,
            t_stop: t1,
            y_stop: y1,
            hit_cap: false,
        });
    }

    // Phase 2: reciprocal variable w = 1/(1+f) keeps steps finite near
    // blow-up; stop at the cap.
    let w_cap = 1.0 / (1.0 + cap);
    let mut hit_cap = false;
    let z0 = [1.0 / (1.0 + y1[0]), y1[1], y1[2], y1[3]];
    let mut wout: Vec<(f64, [f64; 4])> = Vec::new();
    let (t2, z2) = rk::integrate(
        |t, y| coef.rhs_w(t, y),
        t1,
        z0,
        t_end,
        opts.tol,
        samples,
        |_t, y| y[0] > 0.0 && y[0] < 1.0 && y[1] > 0.0 && y[2] < 0.0,
        |_t, y, _dt| {
            if y[0] <= w_cap {
                hit_cap = true;
                Control::Stop
            } else {
                Control::Continue
            }
        },
        &mut wout,
    )?;
    for (t, z) in wout {
        out.push((t, [(1.0 - z[0]) / z[0], z[1], z[2], z[3]]));
    }
    let y_stop = [(1.0 - z2[0]) / z2[0], z2[1], z2[2], z2[3]];
    if y_stop[0] <= 0.0 {
        return Err(Error::NonPositiveDenominator { t: t2 });
    }
    Ok(RawRun {
        points: out,
        t_stop: t2,
        y_stop,
        hit_cap,
    })
}

/// Integrate the reference problem.
///
/// In blow-up mode the run halts at `opts.cap` and the returned bracket is
/// `[t_stop, t_stop + 2 sqrt(K w)]` with K = 2 t_stop^2 / (3b), the
/// leading-order remaining time to the singularity.
pub fn integrate(p: &ParameterSet, d: &DerivedConstants, opts: &OdeOptions) -> Result<OdeTrace> {
    let t_probe_end = match opts.mode {
        Mode::Horizon(t_end) => t_end,
        Mode::BlowUp => p.t0 * 1e6,
    };
    // Pass 1 locates the end of the run; pass 2 re-integrates with the
    // output grid forced onto integration nodes.
    let probe = run_through(p, d, opts, t_probe_end, &[])?;
    if matches!(opts.mode, Mode::BlowUp) && !probe.hit_cap {
        return Err(Error::InsufficientTail { got: 0, need: 1 });
    }
    let t_last = probe.t_stop;
    let grid = sample_grid(p.t0, t_last, opts.samples, opts.grid);
    let run = run_through(p, d, opts, t_last, &grid)?;

    let mut times = vec![p.t0];
    let mut f = vec![p.beta];
    let mut f0 = vec![p.beta0];
    let mut g_comp = vec![-1.0];
    let mut quad_i2 = vec![0.0];
    for (t, y) in &run.points {
        if *t > *times.last().unwrap() {
            times.push(*t);
            f.push(y[0]);
            f0.push(y[1]);
            g_comp.push(y[2]);
            quad_i2.push(y[3]);
        }
    }
    // Terminal state (cap point or horizon end).
    if run.t_stop > *times.last().unwrap() {
        times.push(run.t_stop);
        f.push(run.y_stop[0]);
        f0.push(run.y_stop[1]);
        g_comp.push(run.y_stop[2]);
        quad_i2.push(run.y_stop[3]);
    }

    let blowup_bracket = if run.hit_cap {
        let t_lo = run.t_stop;
        let w_end = 1.0 / (1.0 + run.y_stop[0]);
        let k_hat = 2.0 * t_lo * t_lo / (3.0 * p.b);
        Some((t_lo, t_lo + 2.0 * (k_hat * w_end).sqrt()))
    } else {
        None
    };

    Ok(OdeTrace {
        times,
        f,
        f0,
        g_comp,
        quad_i2,
        blowup_bracket,
    })
}

/// Signed relative margins of the growth envelopes (min over the grid).
///
/// Margins are normalized by (1+f); all must be >= -1e-9 for a healthy
/// trace. The improved lower bounds are present only when the blow-up
/// criterion applies (upper) resp. beta_breve > 0.
#[derive(Debug, Clone, Serialize)]
pub struct EnvelopeReport {
    pub lower_margin: f64,
    pub upper_margin: f64,
    pub improved_lower_margin: Option<f64>,
    pub breve_lower_margin: Option<f64>,
    pub points_checked: usize,
}

pub fn envelope_check(
    trace: &OdeTrace,
    p: &ParameterSet,
    d: &DerivedConstants,
) -> EnvelopeReport {
    let mut lower = f64::INFINITY;
    let mut upper = f64::INFINITY;
    let improved_active = blowup_condition(p) && d.c_e.is_some();
    let breve_active = d.beta_breve.map(|bb| bb > 0.0).unwrap_or(false);
    let mut improved = improved_active.then_some(f64::INFINITY);
    let mut breve = breve_active.then_some(f64::INFINITY);
    let mut n = 0usize;

    for i in 0..trace.len() {
        let t = trace.times[i];
        // Both envelope statements are open at t0.
        if t <= p.t0 * (1.0 + 1e-12) {
            continue;
        }
        n += 1;
        let s = 1.0 + trace.f[i];
        lower = lower.min((s - d.lower_envelope(t)) / s);
        if t < d.t_star {
            upper = upper.min((d.upper_envelope(t) - s) / s);
        }
        if let Some(m) = improved.as_mut() {
            if let Some(bound) = d.improved_lower_envelope(p.t0, p.beta, t) {
                *m = m.min((s - bound) / s);
            }
        }
        if let Some(m) = breve.as_mut() {
            // Independent route to the improved bound via beta_breve.
            let bb = d.beta_breve.unwrap();
            let den = p.beta0 * p.t0.powf(p.a) / (3.0 * (p.a - 1.0) * (1.0 + p.beta))
                * t.powf(1.0 - p.a)
                - bb;
            if den > 0.0 {
                let bound = (1.0 + p.beta) / (den * den * den);
                *m = m.min((s - bound) / s);
            }
        }
    }

    EnvelopeReport {
        lower_margin: lower,
        upper_margin: upper,
        improved_lower_margin: improved,
        breve_lower_margin: breve,
        points_checked: n,
    }
}

/// Max relative residual of the closed-form slope identity
/// f0 = B^-1 t^-a (-g)^(-b/A) (1+f)^c over the trace.
pub fn slope_identity_residual(trace: &OdeTrace, p: &ParameterSet, d: &DerivedConstants) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..trace.len() {
        let t = trace.times[i];
        let closed = t.powf(-p.a) * (-trace.g_comp[i]).powf(-p.b / p.comp_a)
            * (1.0 + trace.f[i]).powf(p.c)
            / d.b_coef;
        worst = worst.max((trace.f0[i] - closed).abs() / closed);
    }
    worst
}

/// Max relative mismatch between the accumulated map g and its quadrature
/// form -(1 + b B I)^(-A/b) built from the independently accumulated I.
pub fn quadrature_consistency(trace: &OdeTrace, p: &ParameterSet, d: &DerivedConstants) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..trace.len() {
        let quad = -(1.0 + p.b * d.b_coef * trace.quad_i2[i]).powf(-p.comp_a / p.b);
        worst = worst.max((trace.g_comp[i] - quad).abs() / quad.abs());
    }
    worst
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct BlowupEstimate {
    pub t_m: f64,
    pub error_bar: f64,
}

const TAIL_MIN_POINTS: usize = 6;
const TAIL_F_THRESHOLD: f64 = 1e3;

/// Refine the blow-up time by a linear fit of sqrt(1/(1+f)) against t on
/// the trace tail (the reciprocal vanishes like (t_m - t) near blow-up).
pub fn estimate_blowup_time(trace: &OdeTrace) -> Result<BlowupEstimate> {
    let bracket = trace
        .blowup_bracket
        .ok_or(Error::InsufficientTail { got: 0, need: TAIL_MIN_POINTS })?;
    // Tail window spanning two decades of f below the cap keeps the
    // linear fit well conditioned (points hugging the cap are nearly
    // coincident in time).
    let f_max = trace.f[trace.len() - 1];
    let idx: Vec<usize> = (0..trace.len())
        .filter(|&i| trace.f[i] > TAIL_F_THRESHOLD.max(f_max * 1e-2))
        .collect();
    if idx.len() < TAIL_MIN_POINTS {
        return Err(Error::InsufficientTail { got: idx.len(), need: TAIL_MIN_POINTS });
    }
    let t_ref = trace.times[idx[0]];
    let n = idx.len() as f64;
    let (mut st, mut sy, mut stt, mut sty) = (0.0, 0.0, 0.0, 0.0);
    for &i in &idx {
        let x = trace.times[i] - t_ref;
        let y = (1.0 / (1.0 + trace.f[i])).sqrt();
        st += x;
        sy += y;
        stt += x * x;
        sty += x * y;
    }
    let slope = (n * sty - st * sy) / (n * stt - st * st);
    let icept = (sy - slope * st) / n;
    // NaN-safe rejection of non-decreasing tails
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    if !(slope < 0.0) {
        return Err(Error::InsufficientTail { got: idx.len(), need: TAIL_MIN_POINTS });
    }
    let t_m = t_ref - icept / slope;
    let mut rms = 0.0;
    for &i in &idx {
        let r = icept + slope * (trace.times[i] - t_ref) - (1.0 / (1.0 + trace.f[i])).sqrt();
        rms += r * r;
    }
    let rms = (rms / n).sqrt();
    let error_bar = (2.0 * rms / slope.abs()).max(bracket.1 - bracket.0);
    Ok(BlowupEstimate { t_m, error_bar })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::derive_constants;

    fn setup() -> (ParameterSet, DerivedConstants) {
        let p = ParameterSet::default();
        let d = derive_constants(&p).unwrap();
        (p, d)
    }

    #[test]
    fn initial_conditions_reproduced() {
        let (p, d) = setup();
        let tr = integrate(&p, &d, &OdeOptions { mode: Mode::Horizon(1.5), ..Default::default() }).unwrap();
        assert_eq!(tr.times[0], 1.0);
        assert_eq!(tr.f[0], 1.0);
        assert_eq!(tr.f0[0], 4.0);
        assert_eq!(tr.g_comp[0], -1.0);
    }

    #[test]
    fn matches_frozen_oracle_checkpoints() {
        // Frozen from an independent rtol = 1e-12 integration.
        let (p, d) = setup();
        let opts = OdeOptions { mode: Mode::Horizon(1.6), ..Default::default() };
        let tr = integrate(&p, &d, &opts).unwrap();
        let interp = |tq: f64| {
            let j = tr.times.partition_point(|&t| t < tq);
            // grid is dense; nearest-node lookup then linear correction
            let (t0, t1) = (tr.times[j - 1], tr.times[j]);
            let w = (tq - t0) / (t1 - t0);
            (
                tr.f[j - 1] * (1.0 - w) + tr.f[j] * w,
                tr.g_comp[j - 1] * (1.0 - w) + tr.g_comp[j] * w,
            )
        };
        let (f12, g12) = interp(1.2);
        assert!((f12 - 1.958423226088).abs() < 5e-6, "f(1.2) = {f12}");
        assert!((g12 + 0.885906898923).abs() < 5e-6, "g(1.2) = {g12}");
        let (f16, _) = interp(1.6);
        assert!((f16 - 5.624049878453).abs() < 5e-5, "f(1.6) = {f16}");
    }

    #[test]
    fn trace_monotonicity_invariants() {
        let (p, d) = setup();
        let tr = integrate(&p, &d, &OdeOptions::default()).unwrap();
        for i in 1..tr.len() {
            assert!(tr.times[i] > tr.times[i - 1]);
            assert!(tr.f[i] > tr.f[i - 1]);
            assert!(tr.g_comp[i] > tr.g_comp[i - 1]);
            assert!(tr.g_comp[i] < 0.0);
            assert!(tr.f0[i] > 0.0);
        }
    }

    #[test]
    fn blowup_bracket_inside_critical_window() {
        let (p, d) = setup();
        let tr = integrate(&p, &d, &OdeOptions::default()).unwrap();
        let (lo, hi) = tr.blowup_bracket.unwrap();
        assert!(lo >= d.t_star, "lo = {lo} vs t_star = {}", d.t_star);
        assert!(hi < d.t_upper.unwrap());
        assert!(hi > lo);
        // Independent oracle: t_m ~ 2.66608 for the headline point.
        let est = estimate_blowup_time(&tr).unwrap();
        assert!((est.t_m - 2.66608).abs() < 2e-3, "t_m = {}", est.t_m);
        assert!(est.t_m >= lo && est.t_m <= hi + est.error_bar);
    }

    #[test]
    fn bracket_nesting_across_caps() {
        let (p, d) = setup();
        let mut widths = Vec::new();
        let mut estimates = Vec::new();
        for cap in [1e6, 1e8, 1e10] {
            let tr = integrate(&p, &d, &OdeOptions { cap, ..Default::default() }).unwrap();
            let (lo, hi) = tr.blowup_bracket.unwrap();
            widths.push(hi - lo);
            estimates.push(estimate_blowup_time(&tr).unwrap());
        }
        assert!(widths[1] <= widths[0]);
        assert!(widths[2] <= widths[1]);
        for w in &estimates {
            assert!((w.t_m - estimates[2].t_m).abs() <= w.error_bar + estimates[2].error_bar);
        }
    }

    #[test]
    fn envelopes_hold_with_tolerance() {
        let (p, d) = setup();
        let tr = integrate(&p, &d, &OdeOptions::default()).unwrap();
        let rep = envelope_check(&tr, &p, &d);
        assert!(rep.points_checked > 1000);
        assert!(rep.lower_margin >= -1e-9, "lower {}", rep.lower_margin);
        assert!(rep.upper_margin >= -1e-9, "upper {}", rep.upper_margin);
        assert!(rep.improved_lower_margin.unwrap() >= -1e-9);
        assert!(rep.breve_lower_margin.unwrap() >= -1e-9);
    }

    #[test]
    fn slope_and_quadrature_identities() {
        let (p, d) = setup();
        let tr = integrate(&p, &d, &OdeOptions::default()).unwrap();
        assert!(slope_identity_residual(&tr, &p, &d) < 1e-8);
        assert!(quadrature_consistency(&tr, &p, &d) < 1e-8);
    }

    #[test]
    fn tolerance_refinement_self_consistency() {
        let (p, d) = setup();
        let run = |rtol: f64| {
            let opts = OdeOptions {
                mode: Mode::Horizon(1.6),
                tol: crate::rk::Tolerances { rtol, atol: rtol * 1e-2 },
                samples: 16,
                ..Default::default()
            };
            *integrate(&p, &d, &opts).unwrap().f.last().unwrap()
        };
        let f6 = run(1e-6);
        let f7 = run(1e-7);
        let f8 = run(1e-8);
        let f10 = run(1e-10);
        // each 10x refinement shrinks the distance to the tight run
        assert!((f7 - f10).abs() < 0.5 * (f6 - f10).abs());
        assert!((f8 - f10).abs() < 0.5 * (f7 - f10).abs());
        // and the refinement step is far below the coarse error estimate
        assert!((f8 - f10).abs() < 1e-2 * (1e-4 * (1.0 + f10)));
    }

    #[test]
    fn non_blowup_trace_has_no_tail() {
        let (p, d) = setup();
        let tr = integrate(&p, &d, &OdeOptions { mode: Mode::Horizon(1.2), ..Default::default() }).unwrap();
        assert!(tr.blowup_bracket.is_none());
        assert!(matches!(
            estimate_blowup_time(&tr),
            Err(Error::InsufficientTail { .. })
        ));
    }
}
