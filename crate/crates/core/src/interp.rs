//! Piecewise monotone cubic interpolation (Fritsch-Carlson slopes).
//!
//! Used to invert the strictly monotone compactification samples; the
//! interpolant never overshoots, so a monotone table stays monotone.

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct Pchip {
    x: Vec<f64>,
    y: Vec<f64>,
    d: Vec<f64>,
}

impl Pchip {
    /// Build from strictly increasing abscissae.
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        assert_eq!(x.len(), y.len());
        if x.len() < 2 {
            return Err(Error::NonMonotoneInput { index: 0 });
        }
        for i in 1..x.len() {
            if x[i] <= x[i - 1] {
                return Err(Error::NonMonotoneInput { index: i });
            }
        }
        let n = x.len();
        let h: Vec<f64> = (0..n - 1).map(|i| x[i + 1] - x[i]).collect();
        let delta: Vec<f64> = (0..n - 1).map(|i| (y[i + 1] - y[i]) / h[i]).collect();
        let mut d = vec![0.0; n];
        for i in 1..n - 1 {
            if delta[i - 1] * delta[i] > 0.0 {
                let w1 = 2.0 * h[i] + h[i - 1];
                let w2 = h[i] + 2.0 * h[i - 1];
                d[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
            }
        }
        d[0] = end_slope(h[0], h.get(1).copied().unwrap_or(h[0]), delta[0], delta.get(1).copied().unwrap_or(delta[0]));
        d[n - 1] = end_slope(
            h[n - 2],
            if n >= 3 { h[n - 3] } else { h[n - 2] },
            delta[n - 2],
            if n >= 3 { delta[n - 3] } else { delta[n - 2] },
        );
        Ok(Self { x, y, d })
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.x[0], *self.x.last().unwrap())
    }

    fn segment(&self, xq: f64) -> usize {
        let n = self.x.len();
        let j = self.x.partition_point(|&v| v < xq);
        j.clamp(1, n - 1) - 1
    }

    /// Evaluate inside the domain (clamps the query to the table range).
    pub fn eval_clamped(&self, xq: f64) -> f64 {
        let (lo, hi) = self.domain();
        self.eval_inner(xq.clamp(lo, hi))
    }

    /// Evaluate; queries outside the table range are a caller bug here.
    pub fn eval(&self, xq: f64) -> f64 {
        debug_assert!(xq >= self.domain().0 && xq <= self.domain().1);
        self.eval_inner(xq)
    }

    fn eval_inner(&self, xq: f64) -> f64 {
        let i = self.segment(xq);
        let h = self.x[i + 1] - self.x[i];
        let s = (xq - self.x[i]) / h;
        let (s2, s3) = (s * s, s * s * s);
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        h00 * self.y[i] + h * h10 * self.d[i] + h01 * self.y[i + 1] + h * h11 * self.d[i + 1]
    }

    pub fn deriv(&self, xq: f64) -> f64 {
        let i = self.segment(xq.clamp(self.domain().0, self.domain().1));
        let h = self.x[i + 1] - self.x[i];
        let s = (xq - self.x[i]) / h;
        let dh00 = (6.0 * s * s - 6.0 * s) / h;
        let dh10 = 3.0 * s * s - 4.0 * s + 1.0;
        let dh01 = (-6.0 * s * s + 6.0 * s) / h;
        let dh11 = 3.0 * s * s - 2.0 * s;
        dh00 * self.y[i] + dh10 * self.d[i] + dh01 * self.y[i + 1] + dh11 * self.d[i + 1]
    }
}

fn end_slope(h0: f64, h1: f64, d0: f64, d1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if d * d0 <= 0.0 {
        0.0
    } else if d1 * d0 <= 0.0 && d.abs() > 3.0 * d0.abs() {
        3.0 * d0
    } else {
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reproduces_nodes_exactly() {
        let x: Vec<f64> = (0..20).map(|i| i as f64 * 0.3).collect();
        let y: Vec<f64> = x.iter().map(|v| (v * 0.7).tanh()).collect();
        let p = Pchip::new(x.clone(), y.clone()).unwrap();
        for (xi, yi) in x.iter().zip(&y) {
            assert!((p.eval(*xi) - yi).abs() < 1e-15);
        }
    }

    #[test]
    fn monotone_data_gives_monotone_interpolant() {
        let x: Vec<f64> = (0..40).map(|i| -1.0 + 0.9 * (i as f64 / 39.0)).collect();
        let y: Vec<f64> = x.iter().map(|v| v.exp() + 2.0 * v).collect();
        let p = Pchip::new(x, y).unwrap();
        let mut prev = f64::NEG_INFINITY;
        for i in 0..400 {
            let v = p.eval_clamped(-1.0 + 0.9 * (i as f64 / 399.0));
            assert!(v >= prev - 1e-14);
            prev = v;
        }
    }

    #[test]
    fn rejects_non_monotone_abscissae() {
        assert!(Pchip::new(vec![0.0, 1.0, 1.0], vec![0.0, 1.0, 2.0]).is_err());
    }

    #[test]
    fn interpolation_accuracy_on_smooth_data() {
        let n = 400;
        let x: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| (3.0 * v).sin()).collect();
        let p = Pchip::new(x, y).unwrap();
        let mut worst: f64 = 0.0;
        for i in 0..2000 {
            let xq = i as f64 / 1999.0;
            worst = worst.max((p.eval_clamped(xq) - (3.0 * xq).sin()).abs());
        }
        // second order at the interior extremum, where the limiter engages
        assert!(worst < 1e-5, "worst = {worst}");
    }
}
