//! Model parameters, standing-assumption checks, and closed-form constants.
//!
//! Everything downstream (reference integration, compactified time, the
//! singular-system certification, cone/lens geometry, the 1-D simulator)
//! consumes a validated [`ParameterSet`] plus its [`DerivedConstants`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Full parameter point for one experiment.
///
/// Field names double as the config-file keys (TOML/JSON) and as CLI flag
/// names, so `a` here is `--a` on the command line and `a = 4/3` in TOML.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParameterSet {
    /// Damping exponent, 1 < a <= 30.
    pub a: f64,
    /// Self-growth coefficient, 1/3 <= b <= 2/3.
    pub b: f64,
    /// Riccati exponent; 4/3 for the main pipelines, (1, 3/2) for
    /// reference-only runs.
    pub c: f64,
    /// Wave-speed scale, k > 0 (main pipelines fix k = 1).
    pub k: f64,
    /// Velocity-coupling weight, 0 <= m2 <= k.
    pub m2: f64,
    /// Initial value of the homogeneous profile, beta > 0.
    pub beta: f64,
    /// Initial slope of the homogeneous profile, beta0 > 0.
    pub beta0: f64,
    /// Initial time, t0 > 0.
    pub t0: f64,
    /// Compactification exponent, 0 < A < 2b/(3-2c).
    #[serde(rename = "A")]
    pub comp_a: f64,
    /// Hypersurface steepness parameter, delta0 in (0, 1).
    pub delta0: f64,
    /// Smallness scale for the rescaled variables, sigma0 in (0, 1).
    pub sigma0: f64,
}

impl Default for ParameterSet {
    fn default() -> Self {
        Self {
            a: 4.0 / 3.0,
            b: 2.0 / 3.0,
            c: 4.0 / 3.0,
            k: 1.0,
            m2: 1.0,
            beta: 1.0,
            beta0: 4.0,
            t0: 1.0,
            comp_a: 1.0,
            delta0: 0.05,
            sigma0: 1e-3,
        }
    }
}

/// One validation finding; violations are reported, never thrown.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Outcome of [`validate`]: assumption and range findings.
#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failed(&self) -> Vec<&Check> {
        self.checks.iter().filter(|c| !c.passed).collect()
    }

    fn push(&mut self, name: &'static str, passed: bool, detail: String) {
        self.checks.push(Check {
            name,
            passed,
            detail,
        });
    }
}

/// Check parameter ranges and the standing assumptions A1/A3/A4.
///
/// Pure function of the inputs: nothing is thrown, every finding lands in
/// the report. A1 is accepted with equality.
pub fn validate(p: &ParameterSet) -> ValidationReport {
    let mut r = ValidationReport { checks: Vec::new() };

    r.push(
        "range_a",
        p.a > 1.0 && p.a <= 30.0,
        format!("a = {} (need 1 < a <= 30)", p.a),
    );
    r.push(
        "range_b",
        p.b >= 1.0 / 3.0 && p.b <= 2.0 / 3.0,
        format!("b = {} (need 1/3 <= b <= 2/3)", p.b),
    );
    let c_main = (p.c - 4.0 / 3.0).abs() <= 1e-14;
    let c_ref = p.c > 1.0 && p.c < 1.5;
    r.push(
        "range_c",
        c_main || c_ref,
        if c_main {
            format!("c = {} (main-pipeline value 4/3)", p.c)
        } else {
            format!("c = {} (reference-only range: need 1 < c < 3/2)", p.c)
        },
    );
    r.push("range_k", p.k > 0.0, format!("k = {} (need k > 0)", p.k));
    r.push(
        "range_m2",
        p.m2 >= 0.0 && p.m2 <= p.k,
        format!("m2 = {} (need 0 <= m2 <= k = {})", p.m2, p.k),
    );
    r.push(
        "range_beta",
        p.beta > 0.0,
        format!("beta = {} (need beta > 0)", p.beta),
    );
    r.push(
        "range_beta0",
        p.beta0 > 0.0,
        format!("beta0 = {} (need beta0 > 0)", p.beta0),
    );
    r.push(
        "range_t0",
        p.t0 > 0.0,
        format!("t0 = {} (need t0 > 0)", p.t0),
    );
    let a_lim = 2.0 * p.b / (3.0 - 2.0 * p.c);
    r.push(
        "range_A",
        p.comp_a > 0.0 && p.comp_a < a_lim,
        format!("A = {} (need 0 < A < 2b/(3-2c) = {})", p.comp_a, a_lim),
    );
    r.push(
        "range_delta0",
        p.delta0 > 0.0 && p.delta0 < 1.0,
        format!("delta0 = {} (need delta0 in (0,1))", p.delta0),
    );
    r.push(
        "range_sigma0",
        p.sigma0 > 0.0 && p.sigma0 < 1.0,
        format!("sigma0 = {} (need sigma0 in (0,1))", p.sigma0),
    );

    // A1: beta0^2 >= 6 b beta (1+beta)^2 / t0^2 (equality accepted).
    let a1_rhs = 6.0 * p.b * p.beta * (1.0 + p.beta).powi(2) / (p.t0 * p.t0);
    r.push(
        "A1",
        p.beta0 * p.beta0 >= a1_rhs,
        format!("beta0^2 = {} vs 6 b beta (1+beta)^2/t0^2 = {}", p.beta0 * p.beta0, a1_rhs),
    );
    // A3 fixes the convection magnitude; we report the value and the
    // stated bracket for information (the formula is authoritative).
    let q = q_magnitude(p.b, p.m2);
    let bracket_hi = 606.0 / (2.0 - p.m2);
    r.push(
        "A3",
        q.is_finite() && q > 0.0,
        format!("|q| = {} (informational bracket [303, {}])", q, bracket_hi),
    );
    r.push("A4", p.k == 1.0, format!("k = {} (need k = 1)", p.k));

    r
}

/// Convection magnitude |q| = 606 / (2 - (2 - 3b) m2).
pub fn q_magnitude(b: f64, m2: f64) -> f64 {
    606.0 / (2.0 - (2.0 - 3.0 * b) * m2)
}

/// Characteristic-speed scale b = sqrt(9 b^2 m2 - 6 b m2 + 6 b); lies in
/// [1, 2] for b in [1/3, 2/3] and m2 in [0, 1].
pub fn b_geom(b: f64, m2: f64) -> f64 {
    (9.0 * b * b * m2 - 6.0 * b * m2 + 6.0 * b).sqrt()
}

/// Closed-form constants of the reference problem.
#[derive(Debug, Clone, Serialize)]
pub struct DerivedConstants {
    /// sqrt((1-a)^2 + 4b).
    pub triangle: f64,
    /// 1 - a (negative).
    pub a_bar: f64,
    /// 1 - c (negative).
    pub c_bar: f64,
    /// Normalization (1+beta)^c / (t0^a beta0).
    pub b_coef: f64,
    pub c_a: f64,
    pub c_b: f64,
    pub c_c: f64,
    pub c_d: f64,
    /// Defined only for a != 1.
    pub c_e: Option<f64>,
    /// First root of the critical-time polynomial past t0.
    pub t_star: f64,
    /// Upper critical time, present when t0^(1-a) > 1/E.
    pub t_upper: Option<f64>,
    /// Slope-margin constant t0 beta0 / (3(a-1)(1+beta)) - 1; None at a = 1.
    pub beta_breve: Option<f64>,
    /// Characteristic-speed scale from `b` and `m2`.
    pub b_geom: f64,
    /// Convection magnitude fixed by A3.
    pub q_mag: f64,
    /// All sign-change brackets of the critical polynomial found by the scan.
    pub root_brackets: Vec<(f64, f64)>,
}

impl DerivedConstants {
    /// Critical-time polynomial A t^((abar-tri)/2) + B t^((abar+tri)/2) + 1.
    pub fn critical_poly(&self, t: f64) -> f64 {
        self.c_a * t.powf(0.5 * (self.a_bar - self.triangle))
            + self.c_b * t.powf(0.5 * (self.a_bar + self.triangle))
            + 1.0
    }

    /// Lower growth envelope exp(C t^((abar+tri)/2) + D/t) for 1 + f.
    pub fn lower_envelope(&self, t: f64) -> f64 {
        (self.c_c * t.powf(0.5 * (self.a_bar + self.triangle)) + self.c_d / t).exp()
    }

    /// Upper growth envelope 1/critical_poly(t), valid on (t0, t_star).
    pub fn upper_envelope(&self, t: f64) -> f64 {
        1.0 / self.critical_poly(t)
    }

    /// Improved lower envelope (1+beta)(1 - E t0^abar + E t^abar)^(1/cbar),
    /// available when E exists.
    pub fn improved_lower_envelope(&self, t0: f64, beta: f64, t: f64) -> Option<f64> {
        let e = self.c_e?;
        let base = 1.0 - e * t0.powf(self.a_bar) + e * t.powf(self.a_bar);
        if base <= 0.0 {
            return None;
        }
        Some((1.0 + beta) * base.powf(1.0 / self.c_bar))
    }
}

const ROOT_SCAN_POINTS: usize = 4096;
const ROOT_HORIZON_FACTOR: f64 = 1.0e6;
const BISECT_REL_TOL: f64 = 1e-12;

/// Compute every closed-form constant; the critical time is located by a
/// doubling bracket plus bisection, and all sign changes found on a log
/// scan up to the horizon are reported alongside.
pub fn derive_constants(p: &ParameterSet) -> Result<DerivedConstants> {
    let a_bar = 1.0 - p.a;
    let c_bar = 1.0 - p.c;
    let triangle = (a_bar * a_bar + 4.0 * p.b).sqrt();
    let b_coef = (1.0 + p.beta).powf(p.c) / (p.t0.powf(p.a) * p.beta0);

    let s = 1.0 + p.beta;
    let lam_p = 0.5 * (a_bar + triangle);
    let lam_m = 0.5 * (a_bar - triangle);
    let c_a = p.t0.powf(-lam_m) / triangle * (p.t0 * p.beta0 / (s * s) - lam_p * p.beta / s);
    let c_b = p.t0.powf(-lam_p) / triangle * (lam_m * p.beta / s - p.t0 * p.beta0 / (s * s));
    let c_c = 2.0 / (2.0 + a_bar + triangle) * (lam_p / p.b).max(1.0).recip()
        * (s.ln() + lam_p / p.b * p.t0 * p.beta0 / s)
        * p.t0.powf(-lam_p);
    let c_d = (a_bar + triangle) / (2.0 + a_bar + triangle) * (s.ln() - p.t0 * p.beta0 / (p.b * s)) * p.t0;
    let c_e = if p.a == 1.0 {
        None
    } else {
        Some(c_bar * p.beta0 * p.t0.powf(1.0 - a_bar) / (a_bar * s))
    };

    let t_upper = c_e.and_then(|e| {
        let base = p.t0.powf(a_bar) - 1.0 / e;
        (base > 0.0 && a_bar != 0.0).then(|| base.powf(1.0 / a_bar))
    });

    let poly = |t: f64| c_a * t.powf(lam_m) + c_b * t.powf(lam_p) + 1.0;

    // Doubling bracket from t0, then bisection to relative 1e-12.
    let horizon = p.t0 * ROOT_HORIZON_FACTOR;
    let mut lo = p.t0;
    let mut hi = 2.0 * p.t0;
    while poly(hi) > 0.0 {
        lo = hi;
        hi *= 2.0;
        if hi > horizon {
            return Err(Error::NoRootFound { lo: p.t0, hi: horizon });
        }
    }
    let (mut lo, mut hi) = (lo, hi);
    while (hi - lo) > BISECT_REL_TOL * hi {
        let mid = 0.5 * (lo + hi);
        if poly(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let t_star = 0.5 * (lo + hi);

    // Log-spaced scan: record every sign change up to 4x past the root.
    let scan_hi = 4.0 * t_star;
    let mut root_brackets = Vec::new();
    let mut prev_t = p.t0;
    let mut prev_v = poly(prev_t);
    for i in 1..=ROOT_SCAN_POINTS {
        let t = p.t0 * (scan_hi / p.t0).powf(i as f64 / ROOT_SCAN_POINTS as f64);
        let v = poly(t);
        if prev_v.signum() != v.signum() {
            root_brackets.push((prev_t, t));
        }
        prev_t = t;
        prev_v = v;
    }

    let beta_breve = (p.a != 1.0).then(|| p.t0 * p.beta0 / (3.0 * (p.a - 1.0) * s) - 1.0);

    Ok(DerivedConstants {
        triangle,
        a_bar,
        c_bar,
        b_coef,
        c_a,
        c_b,
        c_c,
        c_d,
        c_e,
        t_star,
        t_upper,
        beta_breve,
        b_geom: b_geom(p.b, p.m2),
        q_mag: q_magnitude(p.b, p.m2),
        root_brackets,
    })
}

/// Finite-time blow-up criterion beta0 > abar (1+beta) / (cbar t0), strict.
pub fn blowup_condition(p: &ParameterSet) -> bool {
    p.beta0 > blowup_threshold(p)
}

/// Threshold abar(1+beta)/(cbar t0) of the blow-up criterion.
pub fn blowup_threshold(p: &ParameterSet) -> f64 {
    (1.0 - p.a) * (1.0 + p.beta) / ((1.0 - p.c) * p.t0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn headline() -> ParameterSet {
        ParameterSet::default()
    }

    #[test]
    fn a1_equality_and_violation() {
        // beta0^2 = 16 = 6*(2/3)*1*4: equality accepted
        let p = headline();
        let rep = validate(&p);
        assert!(rep.checks.iter().find(|c| c.name == "A1").unwrap().passed);
        // beta0 = 1: 1 < 16
        let p2 = ParameterSet { beta0: 1.0, ..p };
        let rep2 = validate(&p2);
        assert!(!rep2.checks.iter().find(|c| c.name == "A1").unwrap().passed);
    }

    #[test]
    fn headline_ranges_pass() {
        let rep = validate(&headline());
        assert!(rep.all_passed(), "failed: {:?}", rep.failed());
    }

    #[test]
    fn derived_constants_headline() {
        // Expected values frozen from an exact/high-precision computation:
        // triangle = 5/3, A = 2/5, B = -9/10, C = (3/5)(ln 2 + 2),
        // D = (2/5)(ln 2 - 3), E = 2, t_upper = 8,
        // t_star = root of 0.4/t - 0.9 t^(2/3) + 1.
        let d = derive_constants(&headline()).unwrap();
        assert!((d.triangle - 5.0 / 3.0).abs() <= 4e-16);
        assert!((d.c_a - 0.4).abs() <= 4e-16);
        assert!((d.c_b + 0.9).abs() <= 4e-16);
        assert!((d.c_c - 1.6158883083359672).abs() < 1e-12);
        assert!((d.c_d + 0.9227411277760219).abs() < 1e-12);
        assert_eq!(d.c_e, Some(2.0));
        let tu = d.t_upper.unwrap();
        assert!((tu - 8.0).abs() < 1e-12);
        assert!((d.t_star - 1.6282955575923203).abs() < 1e-9);
        assert!((d.beta_breve.unwrap() - 1.0).abs() < 1e-14);
        assert_eq!(d.root_brackets.len(), 1);
    }

    #[test]
    fn b_geom_endpoints() {
        assert!((b_geom(1.0 / 3.0, 1.0) - 1.0).abs() < 1e-15);
        assert!((b_geom(2.0 / 3.0, 1.0) - 2.0).abs() < 1e-15);
        assert!((b_geom(2.0 / 3.0, 0.3) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn blowup_condition_cases() {
        let p = headline();
        assert!((blowup_threshold(&p) - 2.0).abs() < 1e-14);
        assert!(blowup_condition(&p)); // beta0 = 4 > 2
        let boundary = ParameterSet { beta0: 2.0, ..p };
        assert!(!blowup_condition(&boundary)); // strict inequality
        let huge = ParameterSet { beta0: 1e12, ..p };
        assert!(blowup_condition(&huge));
    }

    #[test]
    fn derive_is_bitwise_reproducible() {
        let p = headline();
        let d1 = derive_constants(&p).unwrap();
        let d2 = derive_constants(&p).unwrap();
        assert_eq!(d1.t_star.to_bits(), d2.t_star.to_bits());
        assert_eq!(d1.c_c.to_bits(), d2.c_c.to_bits());
    }

    #[test]
    fn toml_keys_match_field_names() {
        let p: ParameterSet =
            toml::from_str("a = 1.5\nb = 0.5\nA = 0.9\nm2 = 0.25\n").unwrap();
        assert_eq!(p.a, 1.5);
        assert_eq!(p.comp_a, 0.9);
        assert_eq!(p.m2, 0.25);
    }

    proptest! {
        #[test]
        fn q_identity_and_signs(
            a in 1.01f64..16.0/9.0,
            b in 1.0f64/3.0..2.0/3.0,
            m2 in 0.01f64..1.0,
            beta in 0.1f64..4.0,
            beta0 in 0.5f64..20.0,
            t0 in 0.5f64..2.0,
        ) {
            let p = ParameterSet { a, b, m2, beta, beta0, t0, ..ParameterSet::default() };
            // A3 algebraic identity
            let q = q_magnitude(b, m2);
            prop_assert!((q * (2.0 - (2.0 - 3.0 * b) * m2) - 606.0).abs() < 1e-9);
            let d = derive_constants(&p).unwrap();
            prop_assert!(d.c_b < 0.0);
            prop_assert!(d.c_c > 0.0);
            if let Some(e) = d.c_e { prop_assert!(e > 0.0); }
            // critical polynomial positive at t0, so t_star > t0 strictly
            prop_assert!(d.critical_poly(t0) > 0.0);
            prop_assert!(d.t_star > t0);
        }

        #[test]
        fn q_mag_303_at_b_two_thirds(m2 in 0.0f64..1.0) {
            let q = q_magnitude(2.0 / 3.0, m2);
            prop_assert!((q - 303.0).abs() / 303.0 < 1e-13);
        }
    }
}
