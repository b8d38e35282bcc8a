//! Compactified-time view of the reference trajectory.
//!
//! The map tau = g(t) sends [t0, t_m) onto [-1, 0). Its numeric inverse
//! h_up comes from monotone interpolation of the trajectory samples; past
//! the sampled range the trace is extended by integrating the pulled-back
//! equations in sigma = -ln(-tau) with logarithmic state, which stays
//! smooth and bounded all the way down to the configured tau floor.
//!
//! All auxiliary scalars live here: chi_up, its deviation g_frak from the
//! limit 2bB/(3-2c), the vanishing factor xi, the speed defect Xi
//! (`xi_cap`), and the coefficient S with its singular part.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::interp::Pchip;
use crate::ode::OdeTrace;
use crate::params::{b_geom, DerivedConstants, ParameterSet};
use crate::rk::{self, Control, Tolerances};

#[derive(Debug, Clone, Copy)]
pub struct CompactOptions {
    /// Magnitude of the last grid point: the grid ends at tau = -tau_floor.
    pub tau_floor: f64,
    /// Sample count for the extension past the trajectory samples.
    pub ext_samples: usize,
    pub tol: Tolerances,
}

impl Default for CompactOptions {
    fn default() -> Self {
        Self {
            tau_floor: 1e-8,
            ext_samples: 1024,
            tol: Tolerances::default(),
        }
    }
}

/// One state point of the compactified trace.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct CtracePoint {
    pub tau: f64,
    pub h_up: f64,
    pub f: f64,
    pub f0: f64,
    pub chi_over_b: f64,
    pub g_over_b: f64,
    pub xi: f64,
    pub xi_cap: f64,
    pub s_val: f64,
}

#[derive(Debug, Clone)]
pub struct CompactifiedTrace {
    pub tau: Vec<f64>,
    pub h_up: Vec<f64>,
    pub f: Vec<f64>,
    pub f0: Vec<f64>,
    pub chi_up: Vec<f64>,
    pub g_frak: Vec<f64>,
    pub xi: Vec<f64>,
    pub xi_cap: Vec<f64>,
    pub s_val: Vec<f64>,
    pub s_script: Vec<f64>,
    /// Number of leading points taken directly from the trajectory samples.
    pub n_direct: usize,
    pub under_resolved: bool,
    params: ParameterSet,
    b_coef: f64,
    b_geo: f64,
    h_interp: Pchip,
    // interpolants in sigma = -ln(-tau)
    ln1pf_interp: Pchip,
    chi_b_interp: Pchip,
    s_interp: Pchip,
    xi_cap_interp: Pchip,
}

fn sigma_of(tau: f64) -> f64 {
    -(-tau).ln()
}

impl CompactifiedTrace {
    pub fn len(&self) -> usize {
        self.tau.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tau.is_empty()
    }

    pub fn params(&self) -> &ParameterSet {
        &self.params
    }

    pub fn b_coef(&self) -> f64 {
        self.b_coef
    }

    pub fn b_geom(&self) -> f64 {
        self.b_geo
    }

    /// Inverse compactification: t = h_up(tau); clamps past the grid end
    /// (h_up is flat to machine precision there).
    pub fn h_up_at(&self, tau: f64) -> f64 {
        self.h_interp.eval_clamped(tau)
    }

    pub fn chi_over_b_at(&self, tau: f64) -> f64 {
        self.chi_b_interp.eval_clamped(sigma_of(tau))
    }

    pub fn s_at(&self, tau: f64) -> f64 {
        self.s_interp.eval_clamped(sigma_of(tau))
    }

    pub fn xi_cap_at(&self, tau: f64) -> f64 {
        self.xi_cap_interp.eval_clamped(sigma_of(tau))
    }

    pub fn f_at(&self, tau: f64) -> f64 {
        self.ln1pf_interp.eval_clamped(sigma_of(tau)).exp() - 1.0
    }

    pub fn point_at(&self, tau: f64) -> CtracePoint {
        let chi_over_b = self.chi_over_b_at(tau);
        let f = self.f_at(tau);
        let p = &self.params;
        let g_over_b = chi_over_b - 2.0 * p.b / (3.0 - 2.0 * p.c);
        CtracePoint {
            tau,
            h_up: self.h_up_at(tau),
            f,
            // slope from the closed form (exact along the trajectory)
            f0: (chi_over_b * f).sqrt() * (1.0 + f) / self.h_up_at(tau),
            chi_over_b,
            g_over_b,
            xi: 1.0 / ((-tau) * (1.0 + f)),
            xi_cap: self.xi_cap_at(tau),
            s_val: self.s_at(tau),
        }
    }

    pub fn point_idx(&self, i: usize) -> CtracePoint {
        CtracePoint {
            tau: self.tau[i],
            h_up: self.h_up[i],
            f: self.f[i],
            f0: self.f0[i],
            chi_over_b: self.chi_up[i] / self.b_coef,
            g_over_b: self.g_frak[i] / self.b_coef,
            xi: self.xi[i],
            xi_cap: self.xi_cap[i],
            s_val: self.s_val[i],
        }
    }
}

fn xi_cap_of(p: &ParameterSet, chi_over_b: f64, g_over_b: f64, f: f64, s_val: f64) -> f64 {
    let bg = b_geom(p.b, p.m2);
    let main_c = (p.c - 4.0 / 3.0).abs() <= 1e-12 && p.k == 1.0;
    if main_c {
        // explicit radical (requires c = 4/3, k = 1)
        let inner = (1.0 + g_over_b / (6.0 * p.b))
            * (bg * bg + 1.5 * p.b * p.m2 * g_over_b + 6.0 * p.b * (1.0 - p.m2) / f);
        2.0 * inner.max(0.0).sqrt() - 2.0 * bg
    } else {
        s_val.max(0.0).sqrt() * chi_over_b - 2.0 * bg
    }
}

fn s_parts(p: &ParameterSet, tau: f64, chi_over_b: f64, g_over_b: f64, f: f64) -> (f64, f64) {
    // S = k + (k - m2)(12 - 2b - 8c)/(2b + (3-2c) G/B) + tau * script_S,
    // tau * script_S = (k - m2) (B/chi)(4/f - G/B).
    let const_part = (p.k - p.m2) * (12.0 - 2.0 * p.b - 8.0 * p.c)
        / (2.0 * p.b + (3.0 - 2.0 * p.c) * g_over_b);
    let tau_s = (p.k - p.m2) / chi_over_b * (4.0 / f - g_over_b);
    (p.k + const_part + tau_s, tau_s / tau)
}

/// Build the compactified trace from a trajectory covering [t0, near t_m).
pub fn build_compactified(
    trace: &OdeTrace,
    p: &ParameterSet,
    d: &DerivedConstants,
    opts: &CompactOptions,
) -> Result<CompactifiedTrace> {
    for i in 1..trace.len() {
        if trace.g_comp[i] <= trace.g_comp[i - 1] {
            return Err(Error::NonMonotoneInput { index: i });
        }
    }

    let mut tau = trace.g_comp.clone();
    let mut h_up = trace.times.clone();
    let mut f = trace.f.clone();
    let mut f0 = trace.f0.clone();
    let n_direct = tau.len();

    // Extension toward tau = 0 in sigma = -ln(-tau) with log state.
    let tau_end = *tau.last().unwrap();
    if -tau_end > opts.tau_floor * (1.0 + 1e-9) && n_direct >= 2 {
        let (a, b, c, ca) = (p.a, p.b, p.c, p.comp_a);
        let ln_ab = (ca * d.b_coef).ln();
        let sig0 = sigma_of(tau_end);
        let sig1 = sigma_of(-opts.tau_floor);
        let y0 = [
            (1.0 + f[n_direct - 1]).ln(),
            f0[n_direct - 1].ln(),
            h_up[n_direct - 1],
        ];
        let rhs = move |sig: f64, y: &[f64; 3]| -> [f64; 3] {
            let (x, yy, h) = (y[0], y[1], y[2]);
            let lh = h.ln();
            let lnf = x + (-(-x).exp()).ln_1p(); // ln(e^x - 1)
            let lc = -ln_ab + (b / ca) * sig;
            let dx = (lc + (2.0 - a) * lh + (c - 2.0) * x + yy - lnf).exp();
            let dh = (lc + (2.0 - a) * lh + (c - 1.0) * x - lnf).exp();
            let t1 = (lc + (1.0 - a) * lh + (c - 1.0) * x - lnf).exp();
            let t2 = (lc - a * lh + c * x - yy).exp();
            let t3 = (lc + (2.0 - a) * lh + yy + (c - 2.0) * x - lnf).exp();
            [dx, -a * t1 + b * t2 + c * t3, dh]
        };
        let n_ext = opts.ext_samples.max(8);
        let samples: Vec<f64> = (1..=n_ext)
            .map(|i| sig0 + (sig1 - sig0) * i as f64 / n_ext as f64)
            .collect();
        let mut out = Vec::with_capacity(n_ext);
        rk::integrate(
            rhs,
            sig0,
            y0,
            sig1,
            opts.tol,
            &samples,
            |_s, y| y[0].is_finite() && y[2] > 0.0,
            |_, _, _| Control::Continue,
            &mut out,
        )?;
        for (sig, y) in out {
            let t = -(-sig).exp();
            if t > *tau.last().unwrap() {
                tau.push(t);
                h_up.push(y[2]);
                f.push(y[0].exp_m1());
                f0.push(y[1].exp());
            }
        }
    }

    let n = tau.len();
    let mut chi_up = Vec::with_capacity(n);
    let mut g_frak = Vec::with_capacity(n);
    let mut xi = Vec::with_capacity(n);
    let mut xi_cap = Vec::with_capacity(n);
    let mut s_val = Vec::with_capacity(n);
    let mut s_script = Vec::with_capacity(n);
    let lim = 2.0 * p.b / (3.0 - 2.0 * p.c);
    for i in 0..n {
        // chi/B = h^2 f0^2 / ((1+f)^2 f), via logs for the huge tail
        let ln_chi_b = 2.0 * h_up[i].ln() + 2.0 * f0[i].ln()
            - 2.0 * (1.0 + f[i]).ln()
            - f[i].ln();
        let chi_b = ln_chi_b.exp();
        chi_up.push(chi_b * d.b_coef);
        g_frak.push((chi_b - lim) * d.b_coef);
        xi.push(1.0 / ((-tau[i]) * (1.0 + f[i])));
        let (s, ss) = s_parts(p, tau[i], chi_b, chi_b - lim, f[i]);
        s_val.push(s);
        s_script.push(ss);
        xi_cap.push(xi_cap_of(p, chi_b, chi_b - lim, f[i], s));
    }

    // interpolation tables; a degenerate single-point grid gets a padded
    // flat table so the evaluators stay usable (and is flagged below)
    let mut tau_tab = tau.clone();
    let mut h_tab = h_up.clone();
    let mut ln1pf: Vec<f64> = f.iter().map(|v| v.ln_1p()).collect();
    let mut chi_b_tab: Vec<f64> = chi_up.iter().map(|v| v / d.b_coef).collect();
    let mut s_tab = s_val.clone();
    let mut xi_cap_tab = xi_cap.clone();
    if n == 1 {
        tau_tab.push(tau[0] + tau[0].abs() * 1e-9);
        h_tab.push(h_up[0]);
        ln1pf.push(ln1pf[0]);
        chi_b_tab.push(chi_b_tab[0]);
        s_tab.push(s_tab[0]);
        xi_cap_tab.push(xi_cap_tab[0]);
    }
    let sig: Vec<f64> = tau_tab.iter().map(|&t| sigma_of(t)).collect();

    Ok(CompactifiedTrace {
        under_resolved: n < 8,
        h_interp: Pchip::new(tau_tab, h_tab)?,
        ln1pf_interp: Pchip::new(sig.clone(), ln1pf)?,
        chi_b_interp: Pchip::new(sig.clone(), chi_b_tab)?,
        s_interp: Pchip::new(sig.clone(), s_tab)?,
        xi_cap_interp: Pchip::new(sig, xi_cap_tab)?,
        tau,
        h_up,
        f,
        f0,
        chi_up,
        g_frak,
        xi,
        xi_cap,
        s_val,
        s_script,
        n_direct,
        params: *p,
        b_coef: d.b_coef,
        b_geo: b_geom(p.b, p.m2),
    })
}

/// Max normalized residuals |LHS - RHS| / (1 + |RHS|) of the identity
/// lattice, evaluated over the whole grid in log space.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct IdentityResiduals {
    /// gradient-factor identity (iden3)
    pub iden3: f64,
    /// slope-weight identity (iden1)
    pub iden1: f64,
    /// chi-weight identity (iden2)
    pub iden2: f64,
    /// key product identity h f0/(1+f) = sqrt(chi f / B)
    pub keyid3: f64,
    /// closed-form slope f0 = B^-1 h^-a (-tau)^(-b/A) (1+f)^c
    pub slope_form: f64,
    pub under_resolved: bool,
}

impl IdentityResiduals {
    pub fn max(&self) -> f64 {
        self.iden3
            .max(self.iden1)
            .max(self.iden2)
            .max(self.keyid3)
            .max(self.slope_form)
    }
}

fn log_residual(ln_lhs: f64, ln_rhs: f64, rhs_abs: f64) -> f64 {
    // |LHS - RHS| / (1 + |RHS|) = |expm1(ln LHS - ln RHS)| * |RHS|/(1+|RHS|)
    (ln_lhs - ln_rhs).exp_m1().abs() * (rhs_abs / (1.0 + rhs_abs)).min(1.0)
}

pub fn identity_residuals(ct: &CompactifiedTrace, p: &ParameterSet) -> IdentityResiduals {
    let b_coef = ct.b_coef;
    let ln_b = b_coef.ln();
    let ln_ab = (p.comp_a * b_coef).ln();
    let mut r = IdentityResiduals {
        iden3: 0.0,
        iden1: 0.0,
        iden2: 0.0,
        keyid3: 0.0,
        slope_form: 0.0,
        under_resolved: ct.under_resolved,
    };
    for i in 0..ct.len() {
        let tau = ct.tau[i];
        let lt = (-tau).ln();
        let lh = ct.h_up[i].ln();
        let lf = ct.f[i].ln();
        let l1pf = ct.f[i].ln_1p();
        let lf0 = ct.f0[i].ln();
        let lchi = ct.chi_up[i].ln();

        // iden3: h^(1-a)(1+f)^(c-1) / (A B f (-tau)^(b/A+1))
        //      = chi^(1/2) / (A (-tau) B^(1/2) f^(1/2))
        let lhs = (1.0 - p.a) * lh + (p.c - 1.0) * l1pf - ln_ab - lf - (p.b / p.comp_a + 1.0) * lt;
        let rhs = 0.5 * lchi - p.comp_a.ln() - lt - 0.5 * ln_b - 0.5 * lf;
        r.iden3 = r.iden3.max(log_residual(lhs, rhs, rhs.exp()));

        // iden1: (1/f0) h^-a (1+f)^c / (A B (-tau)^(b/A+1)) = 1/(A(-tau))
        let lhs = -lf0 - p.a * lh + p.c * l1pf - ln_ab - (p.b / p.comp_a + 1.0) * lt;
        let rhs = -p.comp_a.ln() - lt;
        r.iden1 = r.iden1.max(log_residual(lhs, rhs, rhs.exp()));

        // iden2: h^(2-a)(1+f)^(c-2) f0 / (A B f (-tau)^(b/A+1)) = chi/(A B (-tau))
        let lhs = (2.0 - p.a) * lh + (p.c - 2.0) * l1pf + lf0 - ln_ab - lf
            - (p.b / p.comp_a + 1.0) * lt;
        let rhs = lchi - ln_ab - lt;
        r.iden2 = r.iden2.max(log_residual(lhs, rhs, rhs.exp()));

        // keyid3: h f0/(1+f) = sqrt(chi f / B)
        let lhs = lh + lf0 - l1pf;
        let rhs = 0.5 * (lchi + lf - ln_b);
        r.keyid3 = r.keyid3.max(log_residual(lhs, rhs, rhs.exp()));

        // slope form: f0 = B^-1 h^-a (-tau)^(-b/A) (1+f)^c
        let rhs = -ln_b - p.a * lh - (p.b / p.comp_a) * lt + p.c * l1pf;
        r.slope_form = r.slope_form.max(log_residual(lf0, rhs, rhs.exp()));
    }
    r
}

/// Residual of the closed-form time derivative of chi against a
/// non-uniform central difference on the directly sampled range.
///
/// `stride` widens the difference stencil (stride s multiplies the grid
/// spacing by ~s, for order checks).
pub fn dtchi_residual(ct: &CompactifiedTrace, p: &ParameterSet, stride: usize) -> f64 {
    dtchi_residual_range(ct, p, stride, 1.0)
}

/// Same check restricted to the leading `t_frac` of the time range;
/// near the singular endpoint the third derivative is unbounded and a
/// central difference there measures its own truncation, so interior
/// reporting uses t_frac < 1.
pub fn dtchi_residual_range(
    ct: &CompactifiedTrace,
    p: &ParameterSet,
    stride: usize,
    t_frac: f64,
) -> f64 {
    let b_coef = ct.b_coef;
    let n = ct.n_direct;
    if n < 3 {
        return 0.0;
    }
    // Subsample to a near-uniform grid: stencils much finer than this are
    // round-off dominated, much coarser truncation dominated.
    let span = ct.h_up[n - 1] - ct.h_up[0];
    let t_hi = ct.h_up[0] + span * t_frac.clamp(0.05, 1.0);
    let step = span / 4096.0 * stride.max(1) as f64;
    let mut picked = vec![0usize];
    for i in 1..n {
        if ct.h_up[i] > t_hi {
            break;
        }
        if ct.h_up[i] >= ct.h_up[*picked.last().unwrap()] + step {
            picked.push(i);
        }
    }
    let mut worst: f64 = 0.0;
    for w in picked.windows(3) {
        let (im, i0, ip) = (w[0], w[1], w[2]);
        let t = ct.h_up[i0];
        let hm = t - ct.h_up[im];
        let hp = ct.h_up[ip] - t;
        let fd = -ct.chi_up[im] * hp / (hm * (hm + hp)) + ct.chi_up[i0] * (hp - hm) / (hm * hp)
            + ct.chi_up[ip] * hm / (hp * (hm + hp));
        let chi = ct.chi_up[i0];
        let g = ct.g_frak[i0];
        let f = ct.f[i0];
        let closed = -(3.0 - 2.0 * p.c) * g * f.sqrt() * chi.sqrt() / (b_coef.sqrt() * t)
            - chi.powf(1.5) / (b_coef.sqrt() * t * f.sqrt())
            + 2.0 * (1.0 - p.a) * chi / t;
        worst = worst.max((fd - closed).abs() / (1.0 + closed.abs()));
    }
    worst
}

/// Sign pattern of the three closed-form derivative terms along the grid:
/// returns the largest index (exclusive) up to which all three are <= 0,
/// i.e. up to which chi is certainly non-increasing.
pub fn dtchi_nonpositive_prefix(ct: &CompactifiedTrace, p: &ParameterSet) -> usize {
    for i in 0..ct.len() {
        let term1 = -(3.0 - 2.0 * p.c) * ct.g_frak[i];
        if term1 > 0.0 {
            return i;
        }
    }
    ct.len()
}

/// Right-hand side of the per-cell compactification map used by the wave
/// simulator: dg/dt with the local density in place of the profile.
pub fn g_field_rhs(p: &ParameterSet, d: &DerivedConstants, t: f64, rho: f64, g: f64) -> f64 {
    p.comp_a * d.b_coef * rho * (-g).powf(p.b / p.comp_a + 1.0)
        / (t.powf(2.0 - p.a) * (1.0 + rho).powf(p.c - 1.0))
}

/// Fit the envelope constant in |g_frak| <= C (-tau)^(1/2) (max ratio).
pub fn g_frak_sqrt_envelope(ct: &CompactifiedTrace) -> f64 {
    let mut c: f64 = 0.0;
    for i in 0..ct.len() {
        c = c.max(ct.g_frak[i].abs() / (-ct.tau[i]).sqrt());
    }
    c
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ode::{integrate, GridKind, Mode, OdeOptions};
    use crate::params::derive_constants;

    fn strict_point() -> ParameterSet {
        // strict A1 margin: 25 > 16
        ParameterSet {
            beta0: 5.0,
            ..ParameterSet::default()
        }
    }

    fn build(p: &ParameterSet) -> (DerivedConstants, CompactifiedTrace) {
        let d = derive_constants(p).unwrap();
        let tr = integrate(p, &d, &OdeOptions::default()).unwrap();
        let ct = build_compactified(&tr, p, &d, &CompactOptions::default()).unwrap();
        (d, ct)
    }

    #[test]
    fn initial_point_values() {
        let p = strict_point();
        let (_, ct) = build(&p);
        assert_eq!(ct.tau[0], -1.0);
        assert_eq!(ct.h_up[0], 1.0);
        assert_eq!(ct.f[0], 1.0);
        assert_eq!(ct.f0[0], 5.0);
        // chi/B at the start = t0^2 beta0^2 / ((1+beta)^2 beta) = 25/4
        assert!((ct.chi_up[0] / ct.b_coef() - 6.25).abs() < 1e-12);
        // Xi at start: m2 = 1 so Xi = G/B = 25/4 - 4
        assert!((ct.xi_cap[0] - 2.25).abs() < 1e-10);
    }

    #[test]
    fn grid_reaches_tau_floor_and_limits() {
        let p = strict_point();
        let (_, ct) = build(&p);
        let tau_last = *ct.tau.last().unwrap();
        assert!(-tau_last <= 1.1e-8, "tau_last = {tau_last}");
        // chi/B -> 6b = 4 at the floor
        let chi_b_last = ct.chi_up.last().unwrap() / ct.b_coef();
        assert!((chi_b_last - 4.0).abs() < 1e-4, "chi/B end = {chi_b_last}");
        // xi -> 0 hard
        assert!(*ct.xi.last().unwrap() < 1e-2 * ct.xi[0] * 1e-6);
        // sqrt(S) chi/B >= 2 everywhere and -> 2 b_geom
        for i in 0..ct.len() {
            let prod = ct.s_val[i].sqrt() * ct.chi_up[i] / ct.b_coef();
            assert!(prod >= 2.0 - 1e-9, "prod = {prod} at {}", ct.tau[i]);
        }
        let prod_last = ct.s_val.last().unwrap().sqrt() * chi_b_last;
        assert!((prod_last - 2.0 * ct.b_geom()).abs() / (2.0 * ct.b_geom()) < 0.01);
    }

    #[test]
    fn monotone_inversion_at_nodes() {
        let p = strict_point();
        let (_, ct) = build(&p);
        for i in (0..ct.n_direct).step_by(97) {
            let t = ct.h_up_at(ct.tau[i]);
            assert!((t - ct.h_up[i]).abs() / ct.h_up[i] < 1e-9);
        }
        // between nodes: h_up must stay strictly increasing
        let mut prev = 0.0;
        for i in 0..4000 {
            let tau = -1.0 + 0.9999 * i as f64 / 3999.0;
            let t = ct.h_up_at(tau);
            assert!(t >= prev);
            prev = t;
        }
    }

    #[test]
    fn identity_lattice_tight() {
        let p = strict_point();
        let (_, ct) = build(&p);
        let r = identity_residuals(&ct, &p);
        assert!(!r.under_resolved);
        assert!(r.max() < 1e-8, "residuals {r:?}");
    }

    #[test]
    fn identity_lattice_at_initial_point_closed_form() {
        // keyid3 at tau = -1: h f0/(1+f) = t0 beta0/(1+beta) and
        // sqrt(chi/B) sqrt(f) = sqrt(t0^2 beta0^2/((1+beta)^2 beta)) sqrt(beta).
        let p = strict_point();
        let (_, ct) = build(&p);
        let lhs = ct.h_up[0] * ct.f0[0] / (1.0 + ct.f[0]);
        let rhs = (ct.chi_up[0] / ct.b_coef() * ct.f[0]).sqrt();
        assert!((lhs - 2.5).abs() < 1e-12);
        assert!((rhs - 2.5).abs() < 1e-12);
    }

    #[test]
    fn dtchi_residual_fd_limited_and_order() {
        // dense grid: the check is truncation-limited, so give it a fine
        // sampling over a moderate horizon
        let p = strict_point();
        let d = derive_constants(&p).unwrap();
        let tr = integrate(
            &p,
            &d,
            &OdeOptions {
                mode: Mode::Horizon(1.8),
                samples: 16384,
                grid: GridKind::Uniform,
                ..Default::default()
            },
        )
        .unwrap();
        let ct = build_compactified(&tr, &p, &d, &CompactOptions::default()).unwrap();
        let r1 = dtchi_residual(&ct, &p, 1);
        let r4 = dtchi_residual(&ct, &p, 4);
        assert!(r1 < 1e-6, "r1 = {r1}");
        // coarser stencil grows roughly like stride^2
        assert!(r4 > 4.0 * r1, "r1 = {r1}, r4 = {r4}");
        assert!(r4 < 64.0 * r1, "r1 = {r1}, r4 = {r4}");
    }

    #[test]
    fn g_frak_behavior_matches_dynamics() {
        // The deviation g_frak starts at its supremum under strict A1,
        // decreases, crosses zero exactly once, dips, and returns to 0
        // from below; |g_frak| stays under C sqrt(-tau) with stable C.
        let p = strict_point();
        let (_, ct) = build(&p);
        assert!(ct.g_frak[0] > 0.0);
        let crossings = ct
            .g_frak
            .windows(2)
            .filter(|w| w[0].signum() != w[1].signum())
            .count();
        assert_eq!(crossings, 1, "crossings = {crossings}");
        assert!(*ct.g_frak.last().unwrap() <= 0.0);
        assert!(ct.g_frak.last().unwrap().abs() < 1e-6);
        let c = g_frak_sqrt_envelope(&ct);
        assert!(c.is_finite() && c > 0.0);
        // refinement stability of the fitted constant (< 5%)
        let d = derive_constants(&p).unwrap();
        let tr = integrate(&p, &d, &OdeOptions { samples: 4096, ..Default::default() }).unwrap();
        let ct2 = build_compactified(
            &tr,
            &p,
            &d,
            &CompactOptions { ext_samples: 2048, ..Default::default() },
        )
        .unwrap();
        let c2 = g_frak_sqrt_envelope(&ct2);
        assert!((c - c2).abs() / c < 0.05, "c = {c}, c2 = {c2}");
        // Xi sup sits at the initial slice even though Xi is not monotone
        let ximax = ct.xi_cap.iter().cloned().fold(f64::MIN, f64::max);
        assert!((ximax - ct.xi_cap[0]).abs() < 1e-12);
    }

    #[test]
    fn degenerate_single_point_grid_is_flagged() {
        let p = strict_point();
        let d = derive_constants(&p).unwrap();
        let tr = OdeTrace {
            times: vec![p.t0],
            f: vec![p.beta],
            f0: vec![p.beta0],
            g_comp: vec![-1.0],
            quad_i2: vec![0.0],
            blowup_bracket: None,
        };
        let ct = build_compactified(
            &tr,
            &p,
            &d,
            &CompactOptions { tau_floor: 1.0, ..Default::default() },
        )
        .unwrap();
        assert!(ct.under_resolved);
        let r = identity_residuals(&ct, &p);
        assert!(r.under_resolved);
        assert!(r.max() < 1e-12, "residuals {r:?}");
        assert_eq!(dtchi_residual(&ct, &p, 1), 0.0);
    }

    #[test]
    fn equality_point_sends_g_frak_negative() {
        // A1 with equality: g_frak(t0) = 0 and the drift is negative, so
        // the deviation leaves 0 downward immediately.
        let p = ParameterSet::default();
        let (_, ct) = build(&p);
        assert!(ct.g_frak[0].abs() < 1e-12);
        assert!(ct.g_frak[ct.len() / 4] < 0.0);
    }

    #[test]
    fn s_stays_in_claimed_interval() {
        // weaker upper bound k(3 + 1/beta) checked; the tighter variant
        // k(1 + 1/beta) + 2(k - m2) is reported by the same loop
        for m2 in [1.0, 0.5, 0.25] {
            let p = ParameterSet { m2, ..strict_point() };
            let (_, ct) = build(&p);
            let mut tight_ok = true;
            for i in 0..ct.len() {
                // strict lower bound degenerates to equality at m2 = k
                if p.m2 < p.k {
                    assert!(ct.s_val[i] > p.m2, "S = {} at {}", ct.s_val[i], ct.tau[i]);
                } else {
                    assert!((ct.s_val[i] - p.m2).abs() < 1e-12);
                }
                assert!(ct.s_val[i] <= p.k * (3.0 + 1.0 / p.beta) + 1e-12);
                tight_ok &= ct.s_val[i] <= p.k * (1.0 + 1.0 / p.beta) + 2.0 * (p.k - p.m2) + 1e-12;
            }
            eprintln!("m2 = {m2}: tighter S bound held = {tight_ok}");
        }
    }

    #[test]
    fn s_two_routes_agree() {
        // e:S1-style assembled S vs the closed product route
        // S = m2 + 4(k - m2)(1 + 1/f) / (chi/B) for k = 1, c = 4/3.
        let p = strict_point();
        let (_, ct) = build(&p);
        for i in (0..ct.len()).step_by(53) {
            let chi_b = ct.chi_up[i] / ct.b_coef();
            let alt = p.m2 + 4.0 * (p.k - p.m2) * (1.0 + 1.0 / ct.f[i]) / chi_b;
            assert!((ct.s_val[i] - alt).abs() < 1e-10 * (1.0 + alt.abs()));
        }
    }

    #[test]
    fn homogeneous_g_field_coincides() {
        // with rho == f the per-cell map equals the reference map
        let p = strict_point();
        let d = derive_constants(&p).unwrap();
        let tr = integrate(&p, &d, &OdeOptions { mode: Mode::Horizon(1.4), ..Default::default() })
            .unwrap();
        // integrate dg/dt = g_field_rhs(t, f(t), g) along the trace times
        let mut g = -1.0;
        for i in 1..tr.len() {
            let h = tr.times[i] - tr.times[i - 1];
            // RK4 with f interpolated linearly inside the step
            let fmid = 0.5 * (tr.f[i - 1] + tr.f[i]);
            let t0 = tr.times[i - 1];
            let k1 = g_field_rhs(&p, &d, t0, tr.f[i - 1], g);
            let k2 = g_field_rhs(&p, &d, t0 + 0.5 * h, fmid, g + 0.5 * h * k1);
            let k3 = g_field_rhs(&p, &d, t0 + 0.5 * h, fmid, g + 0.5 * h * k2);
            let k4 = g_field_rhs(&p, &d, t0 + h, tr.f[i], g + h * k3);
            g += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        assert!((g - tr.g_comp.last().unwrap()).abs() < 1e-6);
    }
}
