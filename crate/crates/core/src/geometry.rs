//! Characteristic cone, region split, and the lens-shaped domain with its
//! weakly-spacelike upper boundary.
//!
//! The cone is carried in two equivalent forms: the physical-time radius
//! 1 + int sqrt(g) dy and the compactified form
//! 1 - (2b/A) ln(-tau) + (1/A) int Xi/(-s) ds; composing the second with
//! the time map must reproduce the first. The lens boundary is a
//! two-branch graph over the first spatial coordinate, given in closed
//! form in the zoomed, compactified and physical coordinate systems.

use serde::Serialize;

use crate::compact::CompactifiedTrace;
use crate::error::{Error, Result};
use crate::fuchsian::{self, zoom, StateU};
use crate::interp::Pchip;
use crate::linalg::{leading_minors, Mat};
use crate::ode::OdeTrace;
use crate::params::{DerivedConstants, ParameterSet};
use crate::quad;

/// Region label for a spacetime point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RegionTag {
    /// outside the cone: homogeneous region
    H,
    /// inside the cone, below the lens boundary
    KI,
    /// inside the cone, above the lens boundary (undetermined region)
    IK,
    /// on the cone within tolerance
    C,
}

impl RegionTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            RegionTag::H => "H",
            RegionTag::KI => "KI",
            RegionTag::IK => "IK",
            RegionTag::C => "C",
        }
    }
}

/// The characteristic cone in both time parametrizations.
#[derive(Debug, Clone)]
pub struct ConeTrace {
    pub t: Vec<f64>,
    pub radius: Vec<f64>,
    pub tau: Vec<f64>,
    pub zeta_abs: Vec<f64>,
    /// sup over tau of the Xi-integral divided by A
    pub theta: f64,
    /// final value of the Xi-integral (ends below zero on the generic
    /// trajectory: the speed defect changes sign mid-course)
    pub xi_integral_final: f64,
    radius_of_sigma: Pchip,
    g_of_t: Pchip,
}

impl ConeTrace {
    /// Cone radius at physical time t (clamped to the trace range).
    pub fn radius_at(&self, t: f64) -> f64 {
        self.radius_of_sigma
            .eval_clamped(-(-self.g_of_t.eval_clamped(t)).ln())
    }

    /// Homogeneous compactified time at physical time t.
    pub fn g_at(&self, t: f64) -> f64 {
        self.g_of_t.eval_clamped(t)
    }

    /// Cone radius at compactified time tau.
    pub fn radius_at_tau(&self, tau: f64) -> f64 {
        self.radius_of_sigma.eval_clamped(-(-tau).ln())
    }
}

/// Build both cone forms.
pub fn cone(
    trace: &OdeTrace,
    ct: &CompactifiedTrace,
    p: &ParameterSet,
    d: &DerivedConstants,
) -> Result<ConeTrace> {
    let _ = d;
    let bg = ct.b_geom();
    // Xi-integral over sigma = -ln(-tau), interval-wise adaptive
    let n = ct.len();
    let mut xi_int = vec![0.0; n];
    for i in 1..n {
        let s0 = -(-ct.tau[i - 1]).ln();
        let s1 = -(-ct.tau[i]).ln();
        let seg = quad::integrate(|s| ct.xi_cap_at(-(-s).exp()), s0, s1, 1e-12, 1e-14);
        xi_int[i] = xi_int[i - 1] + seg;
    }
    let theta = xi_int.iter().cloned().fold(f64::MIN, f64::max) / p.comp_a;
    let zeta_abs: Vec<f64> = (0..n)
        .map(|i| 1.0 - (2.0 * bg / p.comp_a) * (-ct.tau[i]).ln() + xi_int[i] / p.comp_a)
        .collect();

    // physical-time radius: re-integrate the profile together with the
    // running integral of sqrt(g), so this route shares no values with
    // the compactified one
    let radius = radius_by_reintegration(trace, p)?;

    let sigma: Vec<f64> = ct.tau.iter().map(|&t| -(-t).ln()).collect();
    let radius_of_sigma = Pchip::new(sigma, zeta_abs.clone())?;
    let g_of_t = Pchip::new(trace.times.clone(), trace.g_comp.clone())?;
    Ok(ConeTrace {
        t: trace.times.clone(),
        radius,
        tau: ct.tau.clone(),
        zeta_abs,
        theta,
        xi_integral_final: xi_int[n - 1],
        radius_of_sigma,
        g_of_t,
    })
}

fn radius_by_reintegration(trace: &OdeTrace, p: &ParameterSet) -> Result<Vec<f64>> {
    use crate::rk::{self, Control, Tolerances};
    let (a, b, c, m2, k) = (p.a, p.b, p.c, p.m2, p.k);
    let rhs = move |t: f64, y: &[f64; 3]| -> [f64; 3] {
        let (f, f0) = (y[0], y[1]);
        let s = 1.0 + f;
        [
            f0,
            -(a / t) * f0 + (b / (t * t)) * f * s + c * f0 * f0 / s,
            (m2 * f0 * f0 / (s * s) + 4.0 * (k - m2) * s / (t * t)).sqrt(),
        ]
    };
    let mut out = Vec::with_capacity(trace.len());
    let t_end = *trace.times.last().unwrap();
    rk::integrate(
        rhs,
        p.t0,
        [p.beta, p.beta0, 1.0],
        t_end,
        Tolerances::default(),
        &trace.times[1..],
        |_t, y| 1.0 + y[0] > 0.0,
        |_, _, _| Control::Continue,
        &mut out,
    )?;
    let mut radius = vec![1.0];
    radius.extend(out.iter().map(|(_, y)| y[2]));
    if radius.len() != trace.len() {
        // terminal node coincided with the last sample; pad from the end
        while radius.len() < trace.len() {
            radius.push(radius[radius.len() - 1]);
        }
    }
    Ok(radius)
}

/// Max mismatch between the physical radius and the compactified cone
/// composed with the time map, over the trajectory nodes.
pub fn cone_cross_check(cone: &ConeTrace, trace: &OdeTrace) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..trace.len() {
        let via_tau = cone.radius_at_tau(trace.g_comp[i]);
        worst = worst.max((via_tau - cone.radius[i]).abs());
    }
    worst
}

/// Max residual of sqrt(g) = (f0/(1+f)) sqrt(S) along the trajectory
/// (the identity behind the cone-speed factorization).
pub fn sqrt_g_identity_residual(
    trace: &OdeTrace,
    ct: &CompactifiedTrace,
    p: &ParameterSet,
) -> f64 {
    let mut worst: f64 = 0.0;
    let n = trace.len().min(ct.n_direct);
    for i in 0..n {
        let t = trace.times[i];
        let s = 1.0 + trace.f[i];
        let f0 = trace.f0[i];
        let lhs = (p.m2 * f0 * f0 / (s * s) + 4.0 * (p.k - p.m2) * s / (t * t)).sqrt();
        let rhs = f0 / s * ct.s_val[i].sqrt();
        worst = worst.max((lhs - rhs).abs() / rhs);
    }
    worst
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Branch {
    Left,
    Right,
}

/// Closed-form lens boundary in all coordinate systems.
#[derive(Debug, Clone, Serialize)]
pub struct LensSurface {
    pub xi0: f64,
    /// steepness weight of the left branch, in (0, 1)
    pub c_lens: f64,
    pub b_geo: f64,
    pub a_comp: f64,
    pub delta0: f64,
    /// branch split position in the zoomed coordinate
    pub split_tilde: f64,
    /// branch split position in the compactified coordinate
    pub split_zeta: f64,
    /// time level of the split (branch selector for the inverses)
    pub tau_threshold: f64,
    /// derived bracket for the left-branch normal slope
    pub q_left_bracket: (f64, f64),
    /// derived bracket for the right-branch normal slope
    pub q_right_bracket: (f64, f64),
}

/// Threshold on delta0 under which the minor estimates apply.
pub fn delta0_threshold(a_comp: f64, b_geo: f64) -> f64 {
    (303.0 * a_comp / (32.0 * (101.0 * b_geo - 100.0))).min(909.0 / 8.0)
}

pub fn lens_surface(p: &ParameterSet, ct: &CompactifiedTrace) -> Result<LensSurface> {
    let xi0 = ct.xi_cap[0];
    // NaN-safe: a degenerate or invalid initial defect must be rejected
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    if !(xi0 > 1e-10) {
        return Err(Error::DegenerateLens { xi0 });
    }
    let b = ct.b_geom();
    if p.delta0 >= delta0_threshold(p.comp_a, b) {
        return Err(Error::UnsupportedParameters(format!(
            "delta0 = {} exceeds the lens threshold {}",
            p.delta0,
            delta0_threshold(p.comp_a, b)
        )));
    }
    let a = p.comp_a;
    let d0 = p.delta0;
    let c_lens = 1.0 / (1.0 + 101.0 * xi0 / (202.0 * b - 200.0));
    let split_tilde = (202.0 * b - 200.0 - 101.0 * xi0) / (202.0 * xi0 * d0);
    let split_zeta = (-303.0 * xi0 * xi0 + 404.0 * b * xi0 + 404.0 * b * b - 400.0 * b)
        / (d0 * xi0 * (606.0 * xi0 + 404.0 * b - 400.0));
    let tau_threshold = -(-a * (101.0 * xi0 + 101.0 * b - 100.0)
        / (d0 * xi0 * (303.0 * xi0 + 202.0 * b - 200.0)))
        .exp();

    let kl = c_lens * 101.0 / (202.0 * b - 200.0);
    let kr = 101.0 / (202.0 * b - 200.0);
    let u_split = d0 * split_tilde + 2.0;
    Ok(LensSurface {
        xi0,
        c_lens,
        b_geo: b,
        a_comp: a,
        delta0: d0,
        split_tilde,
        split_zeta,
        tau_threshold,
        q_left_bracket: (0.5 * kl, kl * (1.0 - 0.5 / (u_split * u_split))),
        q_right_bracket: (kr * (1.0 - 0.75 / (u_split * u_split)), kr),
    })
}

impl LensSurface {
    /// Boundary time over the zoomed coordinate.
    pub fn tau_at_tilde(&self, zt: f64) -> Result<(f64, Branch)> {
        let (a, d0, b) = (self.a_comp, self.delta0, self.b_geo);
        if zt < -1.0 / d0 {
            return Err(Error::BranchMismatch { zeta1: zt });
        }
        let shape = 1.0 - 1.0 / (2.0 * d0 * zt + 4.0);
        if zt <= self.split_tilde {
            let expo = self.c_lens * 101.0 * a / (202.0 * b - 200.0) * shape * (zt + 1.0 / d0);
            Ok((-(-expo).exp(), Branch::Left))
        } else {
            let expo = 101.0 * a / (202.0 * b - 200.0) * shape * (zt + 0.5 / d0);
            Ok((-(-expo).exp(), Branch::Right))
        }
    }

    /// Inverse of `tau_at_tilde`.
    pub fn tilde_at_tau(&self, tau: f64) -> Result<f64> {
        if !((-1.0..0.0).contains(&tau)) {
            return Err(Error::BranchMismatch { zeta1: f64::NAN });
        }
        let (a, d0, b, xi0) = (self.a_comp, self.delta0, self.b_geo, self.xi0);
        let l = (-tau).ln();
        if tau <= self.tau_threshold {
            let w = 101.0 * xi0 + 202.0 * b - 200.0;
            let tri =
                4.0 * w * w * l * l / (a * a) - 1212.0 * w * l / (a * d0) + 10201.0 / (d0 * d0);
            Ok(tri.sqrt() / 404.0 - w * l / (202.0 * a) - 5.0 / (4.0 * d0))
        } else {
            let w = 101.0 * b - 100.0;
            let tri =
                4.0 * w * w * l * l / (a * a) - 808.0 * w * l / (a * d0) + 10201.0 / (d0 * d0);
            Ok(tri.sqrt() / 202.0 - w * l / (101.0 * a) - 1.0 / d0)
        }
    }

    /// Boundary time over the compactified spatial coordinate.
    pub fn tau_at_zeta(&self, z1: f64) -> Result<(f64, Branch)> {
        let (a, d0, b, xi0) = (self.a_comp, self.delta0, self.b_geo, self.xi0);
        if z1 < -1.0 / d0 {
            return Err(Error::BranchMismatch { zeta1: z1 });
        }
        if z1 <= self.split_zeta {
            let w = 101.0 * xi0 + 202.0 * b - 200.0;
            let dia = d0 * z1 * w * (d0 * z1 * w + 4.0 * (101.0 * xi0 + 202.0 * b - 50.0))
                + 4.0
                    * (101.0 * xi0 * (101.0 * xi0 + 404.0 * b - 200.0)
                        + 4.0 * (10201.0 * b * b - 10100.0 * b + 625.0));
            let expo = a * dia.sqrt() / (400.0 * d0 * (xi0 + 2.0 * b))
                - a * (101.0 * xi0 + 202.0 * b + 50.0) / (200.0 * d0 * (xi0 + 2.0 * b))
                - a * z1 * (101.0 * xi0 + 202.0 * b + 200.0) / (400.0 * (xi0 + 2.0 * b));
            Ok((-expo.exp(), Branch::Left))
        } else {
            let dia =
                d0 * z1 * (101.0 * b - 100.0) * (101.0 * b * (4.0 + d0 * z1) - 100.0 * d0 * z1)
                    + (40804.0 * b - 30300.0) * b;
            let expo = a * dia.sqrt() / (400.0 * b * d0) - 101.0 * a / (200.0 * d0)
                - (100.0 + 101.0 * b) * a * z1 / (400.0 * b);
            Ok((-expo.exp(), Branch::Right))
        }
    }

    /// Inverse of `tau_at_zeta`.
    pub fn zeta_at_tau(&self, tau: f64) -> Result<f64> {
        if !((-1.0..0.0).contains(&tau)) {
            return Err(Error::BranchMismatch { zeta1: f64::NAN });
        }
        let (a, d0, b, xi0) = (self.a_comp, self.delta0, self.b_geo, self.xi0);
        let l = (-tau).ln();
        if tau <= self.tau_threshold {
            let w = 101.0 * xi0 + 202.0 * b - 200.0;
            let tri =
                4.0 * w * w * l * l / (a * a) - 1212.0 * w * l / (a * d0) + 10201.0 / (d0 * d0);
            Ok(tri.sqrt() / 404.0
                - (101.0 * xi0 + 202.0 * b + 200.0) * l / (202.0 * a)
                - 5.0 / (4.0 * d0))
        } else {
            let w = 101.0 * b - 100.0;
            let tri =
                4.0 * w * w * l * l / (a * a) - 808.0 * w * l / (a * d0) + 10201.0 / (d0 * d0);
            Ok(tri.sqrt() / 202.0 - (101.0 * b + 100.0) * l / (101.0 * a) - 1.0 / d0)
        }
    }

    /// Boundary in physical coordinates: t = h_up(tau_Gamma(x1)).
    pub fn t_at_x(&self, ct: &CompactifiedTrace, x1: f64) -> Result<f64> {
        if x1 < -1.0 / self.delta0 {
            // below the left edge the lens has zero height
            return Ok(ct.h_up_at(-1.0));
        }
        let (tau, _) = self.tau_at_zeta(x1)?;
        Ok(ct.h_up_at(tau))
    }

    /// Normal slope factor along the boundary in the zoomed coordinate.
    pub fn q_normal(&self, zt: f64) -> Result<(f64, Branch)> {
        let (d0, b) = (self.delta0, self.b_geo);
        if zt < -1.0 / d0 {
            return Err(Error::BranchMismatch { zeta1: zt });
        }
        let u = d0 * zt + 2.0;
        if zt <= self.split_tilde {
            Ok((
                self.c_lens * 101.0 / (202.0 * b - 200.0) * (1.0 - 0.5 / (u * u)),
                Branch::Left,
            ))
        } else {
            Ok((
                101.0 / (202.0 * b - 200.0) * (1.0 - 0.75 / (u * u)),
                Branch::Right,
            ))
        }
    }

    /// Decreasing majorant (delta0 zt + 2)^2 exp(-101A/(4(202b-200)) *
    /// (zt - split)) controlling the right-branch tail estimate.
    pub fn q_decay_majorant(&self, zt: f64) -> f64 {
        let (a, d0, b) = (self.a_comp, self.delta0, self.b_geo);
        let u = d0 * zt + 2.0;
        u * u * (-(101.0 * a / (4.0 * (202.0 * b - 200.0))) * (zt - self.split_tilde)).exp()
    }

    /// Closed-form value of the majorant at the split point.
    pub fn q_majorant_at_split(&self) -> f64 {
        let (b, xi0) = (self.b_geo, self.xi0);
        (303.0 * xi0 + 202.0 * b - 200.0).powi(2) / (40804.0 * xi0 * xi0)
    }
}

/// One sample of the weakly-spacelike boundary check.
#[derive(Debug, Clone, Serialize)]
pub struct MinorRow {
    pub zeta_tilde: f64,
    pub zeta1: f64,
    pub tau: f64,
    pub branch: Branch,
    pub q: f64,
    pub d2: f64,
    pub min_minor: f64,
    /// log-margin of the decay-factor inequality at (tau, zeta1)
    pub decay_margin_log: f64,
}

/// Evaluate the boundary-matrix minors along the surface.
///
/// The solution-envelope remainder terms carry exp(-303/delta0) and sit
/// below the f64 floor at any usable delta0, so they cannot flip any
/// reported sign; minors are evaluated at the base state.
pub fn spacelike_check(
    p: &ParameterSet,
    ct: &CompactifiedTrace,
    lens: &LensSurface,
    samples_per_branch: usize,
) -> Result<Vec<MinorRow>> {
    let n_dim = 1usize;
    let mut rows = Vec::new();
    let lo = -1.0 / lens.delta0 + 1e-6;
    let left_span = lens.split_tilde - lo;
    for i in 0..samples_per_branch {
        let zt = lo + left_span * (i as f64 + 0.5) / samples_per_branch as f64;
        rows.push(minor_row(p, ct, lens, zt, n_dim)?);
    }
    // geometric march into the right branch, capped so the boundary time
    // stays representable
    let right_span: f64 = 400.0;
    let ratio = (right_span / 0.25).powf(1.0 / (samples_per_branch.max(2) - 1) as f64);
    for i in 0..samples_per_branch {
        let zt = lens.split_tilde.max(lo) + 0.25 * ratio.powi(i as i32);
        rows.push(minor_row(p, ct, lens, zt, n_dim)?);
    }
    for r in &rows {
        if r.min_minor < -1e-10 {
            return Err(Error::MinorNegative {
                index: 0,
                zeta1: r.zeta1,
                value: r.min_minor,
            });
        }
    }
    Ok(rows)
}

fn minor_row(
    p: &ParameterSet,
    ct: &CompactifiedTrace,
    lens: &LensSurface,
    zt: f64,
    n_dim: usize,
) -> Result<MinorRow> {
    let (tau, branch) = lens.tau_at_tilde(zt)?;
    let (q, _) = lens.q_normal(zt)?;
    let pt = ct.point_at(tau);
    let ev = fuchsian::assemble(p, &pt, &StateU::zero(n_dim), zt, None)?;
    let dim = ev.a0.n;
    let mut m = Mat::zeros(dim);
    for i in 0..dim {
        for j in 0..dim {
            m[(i, j)] = ev.a0[(i, j)] + q * ev.ai[0][(i, j)];
        }
    }
    let minors = leading_minors(&m);
    let d2 = minors[1];
    let min_minor = minors.iter().cloned().fold(f64::INFINITY, f64::min);
    let zeta1 = zt - zoom::PC1 / p.comp_a * (-tau).ln();
    Ok(MinorRow {
        zeta_tilde: zt,
        zeta1,
        tau,
        branch,
        q,
        d2,
        min_minor,
        decay_margin_log: decay_margin_log(p, tau, zeta1),
    })
}

/// ln(bound) - ln(weight): positive iff the decay-factor inequality
/// holds at (tau, zeta1). Both sides underflow f64, so margins live in
/// log space.
pub fn decay_margin_log(p: &ParameterSet, tau: f64, zeta1: f64) -> f64 {
    203.0 / p.delta0 + (zoom::TAU_POW / p.comp_a) * (-tau).ln() + 603.0 / 4.0 * zeta1
}

/// Check the decay inequality over a lens-interior sample set; errors on
/// the first violation. Returns the minimum margin.
pub fn decay_factor_check(
    p: &ParameterSet,
    lens: &LensSurface,
    n_zeta: usize,
    n_tau: usize,
) -> Result<f64> {
    let mut min_margin = f64::INFINITY;
    let z_lo = -1.0 / p.delta0 + 1e-6;
    for i in 0..n_zeta {
        // denser near the left edge, geometric toward large zeta1
        let z1 = z_lo + 0.05 * ((1.3f64).powi(i as i32) - 1.0);
        let (tau_g, _) = lens.tau_at_zeta(z1)?;
        for j in 0..n_tau {
            let frac = (j as f64 + 1.0) / n_tau as f64;
            // slide from the initial slice to the boundary in log scale
            let tau = -(-tau_g).powf(frac);
            let m = decay_margin_log(p, tau, z1);
            if m < 0.0 {
                return Err(Error::InequalityViolated { tau, zeta1: z1, margin: m });
            }
            min_margin = min_margin.min(m);
        }
    }
    Ok(min_margin)
}

/// Tolerance band (relative to the radius) for the cone tag.
const CONE_BAND: f64 = 1e-9;

/// Classify a physical point against cone and lens.
pub fn classify(
    t: f64,
    x1: f64,
    cone: &ConeTrace,
    ct: &CompactifiedTrace,
    lens: &LensSurface,
) -> Result<RegionTag> {
    let r = cone.radius_at(t);
    let ax = x1.abs();
    if (ax - r).abs() <= CONE_BAND * r {
        return Ok(RegionTag::C);
    }
    if ax > r {
        return Ok(RegionTag::H);
    }
    let t_surface = lens.t_at_x(ct, x1)?;
    if t < t_surface {
        Ok(RegionTag::KI)
    } else {
        Ok(RegionTag::IK)
    }
}

/// Coordinate chain (t, x) -> compactified -> zoomed -> torus, along the
/// homogeneous time map.
pub struct CoordMaps<'a> {
    pub ct: &'a CompactifiedTrace,
    pub cone: &'a ConeTrace,
    pub gamma: f64,
    pub a_comp: f64,
}

impl CoordMaps<'_> {
    pub fn to_compactified(&self, t: f64, x1: f64) -> (f64, f64) {
        (self.cone.g_at(t), x1)
    }

    pub fn to_zoomed(&self, tau: f64, zeta1: f64) -> (f64, f64) {
        (tau, zeta1 + zoom::PC1 / self.a_comp * (-tau).ln())
    }

    pub fn to_torus(&self, tau: f64, zt: f64) -> (f64, f64) {
        (tau, (self.gamma * zt).atan())
    }

    pub fn from_torus(&self, tau: f64, zh: f64) -> (f64, f64) {
        (tau, zh.tan() / self.gamma)
    }

    pub fn from_zoomed(&self, tau: f64, zt: f64) -> (f64, f64) {
        (tau, zt - zoom::PC1 / self.a_comp * (-tau).ln())
    }

    pub fn from_compactified(&self, tau: f64, zeta1: f64) -> (f64, f64) {
        (self.ct.h_up_at(tau), zeta1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compact::{build_compactified, CompactOptions};
    use crate::ode::{integrate, OdeOptions};
    use crate::params::derive_constants;

    fn setup() -> (ParameterSet, DerivedConstants, OdeTrace, CompactifiedTrace) {
        let p = ParameterSet { beta0: 5.0, ..ParameterSet::default() };
        let d = derive_constants(&p).unwrap();
        let tr = integrate(&p, &d, &OdeOptions::default()).unwrap();
        let ct = build_compactified(&tr, &p, &d, &CompactOptions::default()).unwrap();
        (p, d, tr, ct)
    }

    #[test]
    fn cone_starts_at_unit_radius_and_grows() {
        let (p, d, tr, ct) = setup();
        let c = cone(&tr, &ct, &p, &d).unwrap();
        assert_eq!(c.radius[0], 1.0);
        for i in 1..c.radius.len() {
            assert!(c.radius[i] > c.radius[i - 1]);
        }
        for i in 1..c.zeta_abs.len() {
            assert!(c.zeta_abs[i] > c.zeta_abs[i - 1]);
        }
        assert!(c.theta.is_finite() && c.theta >= 0.0);
    }

    #[test]
    fn cone_two_forms_agree() {
        let (p, d, tr, ct) = setup();
        let c = cone(&tr, &ct, &p, &d).unwrap();
        let worst = cone_cross_check(&c, &tr);
        assert!(worst < 1e-6, "worst = {worst}");
    }

    #[test]
    fn sqrt_g_factorization_identity() {
        let (p, _, tr, ct) = setup();
        let r = sqrt_g_identity_residual(&tr, &ct, &p);
        assert!(r < 1e-8, "residual = {r}");
    }

    #[test]
    fn cone_slope_approaches_asymptote() {
        let (p, d, tr, ct) = setup();
        let c = cone(&tr, &ct, &p, &d).unwrap();
        // d|zeta|/d ln(-tau) -> -(2 b_geom + Xi)/A with Xi -> 0
        let t1 = -2e-6;
        let t2 = -1e-6;
        let slope = (c.radius_at_tau(t2) - c.radius_at_tau(t1)) / ((-t2).ln() - (-t1).ln());
        let want = -2.0 * ct.b_geom() / p.comp_a;
        assert!((slope - want).abs() / want.abs() < 0.01, "slope = {slope}");
    }

    #[test]
    fn lens_branch_continuity_and_edges() {
        let (p, _, _, ct) = setup();
        let lens = lens_surface(&p, &ct).unwrap();
        // left edge value is exactly -1
        let (tau_edge, _) = lens.tau_at_tilde(-1.0 / p.delta0).unwrap();
        assert!((tau_edge + 1.0).abs() < 1e-14);
        // continuity at the split point: both closed forms agree there
        let s = lens.split_tilde;
        let shape = 1.0 - 1.0 / (2.0 * p.delta0 * s + 4.0);
        let left = -(-(lens.c_lens * 101.0 * p.comp_a / (202.0 * lens.b_geo - 200.0)
            * shape
            * (s + 1.0 / p.delta0)))
            .exp();
        let right = -(-(101.0 * p.comp_a / (202.0 * lens.b_geo - 200.0)
            * shape
            * (s + 0.5 / p.delta0)))
            .exp();
        assert!((left - right).abs() < 1e-12, "gap {}", left - right);
        // monotone toward 0 at +infinity
        let (t1, _) = lens.tau_at_tilde(10.0).unwrap();
        let (t2, _) = lens.tau_at_tilde(40.0).unwrap();
        assert!(t2 > t1 && t2 < 0.0);
        assert!((lens.tau_at_tilde(200.0).unwrap().0).abs() < 1e-40);
        // outside the domain
        assert!(lens.tau_at_tilde(-1.0 / p.delta0 - 1.0).is_err());
    }

    #[test]
    fn lens_inverse_round_trips() {
        let (p, _, _, ct) = setup();
        let lens = lens_surface(&p, &ct).unwrap();
        for i in 0..200 {
            let zt = -1.0 / p.delta0 + 1e-3 + 0.4 * i as f64;
            let (tau, _) = lens.tau_at_tilde(zt).unwrap();
            if tau >= -1e-300 || tau <= -1.0 {
                continue;
            }
            let back = lens.tilde_at_tau(tau).unwrap();
            assert!((back - zt).abs() < 1e-9, "zt = {zt}, back = {back}");
            // compactified-form consistency through the coordinate shift
            let z1 = zt - zoom::PC1 / p.comp_a * (-tau).ln();
            let (tau2, _) = lens.tau_at_zeta(z1).unwrap();
            assert!(
                (tau2 - tau).abs() / (-tau) < 1e-12,
                "zt = {zt}: tau = {tau}, tau2 = {tau2}"
            );
            let z1_back = lens.zeta_at_tau(tau).unwrap();
            assert!((z1_back - z1).abs() < 1e-9, "z1 = {z1}, back = {z1_back}");
        }
    }

    #[test]
    fn q_brackets_hold_along_branches() {
        let (p, _, _, ct) = setup();
        let lens = lens_surface(&p, &ct).unwrap();
        for i in 0..400 {
            let zt = -1.0 / p.delta0 + 1e-3 + 0.3 * i as f64;
            let (q, branch) = lens.q_normal(zt).unwrap();
            match branch {
                Branch::Left => {
                    assert!(q > lens.q_left_bracket.0 - 1e-12);
                    assert!(q <= lens.q_left_bracket.1 + 1e-12);
                }
                Branch::Right => {
                    assert!(q >= lens.q_right_bracket.0 - 1e-12);
                    assert!(q < lens.q_right_bracket.1);
                }
            }
        }
        // right-branch infimum >= 101/(3(101b-100)), the hinge of the
        // minor positivity estimate
        let hinge = 101.0 / (3.0 * (101.0 * lens.b_geo - 100.0));
        assert!(lens.q_right_bracket.0 >= hinge - 1e-12);
    }

    #[test]
    fn q_majorant_decreasing_with_closed_split_value() {
        let (p, _, _, ct) = setup();
        let lens = lens_surface(&p, &ct).unwrap();
        let u = p.delta0 * lens.split_tilde + 2.0;
        assert!((lens.q_decay_majorant(lens.split_tilde) - u * u).abs() < 1e-9);
        assert!((u * u - lens.q_majorant_at_split()).abs() < 1e-9);
        let mut prev = f64::INFINITY;
        for i in 0..50 {
            let zt = lens.split_tilde + 0.5 * i as f64;
            let v = lens.q_decay_majorant(zt);
            assert!(v <= prev + 1e-12);
            prev = v;
        }
    }

    #[test]
    fn spacelike_minors_nonnegative() {
        let (p, _, _, ct) = setup();
        let lens = lens_surface(&p, &ct).unwrap();
        let rows = spacelike_check(&p, &ct, &lens, 64).unwrap();
        assert_eq!(rows.len(), 128);
        for r in &rows {
            assert!(r.d2 >= -1e-10, "D2 = {} at {}", r.d2, r.zeta_tilde);
            assert!(r.min_minor >= -1e-10);
            assert!(r.decay_margin_log >= 0.0);
        }
    }

    #[test]
    fn d2_matches_factorized_form_without_remainders() {
        let (p, _, _, ct) = setup();
        let lens = lens_surface(&p, &ct).unwrap();
        for zt in [-15.0, -5.0, 0.0, 4.0, 12.0] {
            let (tau, _) = lens.tau_at_tilde(zt).unwrap();
            let (q, _) = lens.q_normal(zt).unwrap();
            let pt = ct.point_at(tau);
            let s = pt.s_val;
            let chi_b = pt.chi_over_b;
            let direct = (1.0 + q * 200.0 / 101.0).powi(2) * s - (q * s * chi_b).powi(2);
            let bg2 = 2.0 * ct.b_geom() + pt.xi_cap;
            let fact = bg2 * bg2 / (chi_b * chi_b)
                * ((1.0 + q * 200.0 / 101.0).powi(2) - q * q * bg2 * bg2);
            assert!(
                (direct - fact).abs() < 1e-10 * (1.0 + direct.abs()),
                "zt = {zt}: {direct} vs {fact}"
            );
        }
    }

    #[test]
    fn decay_check_over_lens_samples() {
        let (p, _, _, ct) = setup();
        let lens = lens_surface(&p, &ct).unwrap();
        let min_margin = decay_factor_check(&p, &lens, 40, 25).unwrap();
        assert!(min_margin >= 0.0);
        // initial slice, zeta1 = 0: margin is 203/delta0 exactly
        assert!((decay_margin_log(&p, -1.0, 0.0) - 203.0 / p.delta0).abs() < 1e-9);
    }

    #[test]
    fn classification_cases() {
        let (p, d, tr, ct) = setup();
        let c = cone(&tr, &ct, &p, &d).unwrap();
        let lens = lens_surface(&p, &ct).unwrap();
        // at t0 the radius is 1
        assert_eq!(classify(1.0, 1.5, &c, &ct, &lens).unwrap(), RegionTag::H);
        assert_eq!(classify(1.0, -3.0, &c, &ct, &lens).unwrap(), RegionTag::H);
        assert_eq!(classify(1.0, 0.0, &c, &ct, &lens).unwrap(), RegionTag::KI);
        let r = c.radius_at(1.0);
        assert_eq!(
            classify(1.0, r * (1.0 + 1e-12), &c, &ct, &lens).unwrap(),
            RegionTag::C
        );
    }

    #[test]
    fn lens_points_on_axis_stay_inside_cone() {
        // boundary samples (t, a e_1), a >= 0 classify as interior
        let (p, d, tr, ct) = setup();
        let c = cone(&tr, &ct, &p, &d).unwrap();
        let lens = lens_surface(&p, &ct).unwrap();
        for i in 0..32 {
            let a = i as f64;
            let (tau_g, _) = lens.tau_at_zeta(a).unwrap();
            let r = c.radius_at_tau(tau_g);
            assert!(a < r, "a = {a}, tau = {tau_g}, radius = {r}");
        }
        // far along the axis the boundary time approaches the blow-up time
        let t_far = lens.t_at_x(&ct, 60.0).unwrap();
        let t_m = ct.h_up_at(-1e-9);
        assert!((t_far - t_m).abs() < 1e-5, "t_far = {t_far}, t_m = {t_m}");
    }

    #[test]
    fn degenerate_lens_is_rejected() {
        // equality point with m2 = 1 has Xi0 = 0
        let p = ParameterSet::default();
        let d = derive_constants(&p).unwrap();
        let tr = integrate(&p, &d, &OdeOptions::default()).unwrap();
        let ct = build_compactified(&tr, &p, &d, &CompactOptions::default()).unwrap();
        assert!(matches!(
            lens_surface(&p, &ct),
            Err(Error::DegenerateLens { .. })
        ));
    }

    #[test]
    fn coordinate_round_trips() {
        let (p, d, tr, ct) = setup();
        let c = cone(&tr, &ct, &p, &d).unwrap();
        let maps = CoordMaps { ct: &ct, cone: &c, gamma: 1.0, a_comp: p.comp_a };
        for (t, x) in [(1.05, 0.3), (1.4, -0.8), (1.9, 2.0)] {
            let (tau, z) = maps.to_compactified(t, x);
            let (tau2, zt) = maps.to_zoomed(tau, z);
            let (tau3, zh) = maps.to_torus(tau2, zt);
            let (tau4, zt_b) = maps.from_torus(tau3, zh);
            let (tau5, z_b) = maps.from_zoomed(tau4, zt_b);
            let (t_b, x_b) = maps.from_compactified(tau5, z_b);
            assert!((x_b - x).abs() < 1e-9);
            assert!((t_b - t).abs() / t < 1e-7, "t = {t}, back = {t_b}");
        }
    }
}
