//! Gauss-Legendre rules and log-space integration of log-concave
//! integrands on the line.

use std::sync::OnceLock;

use crate::error::{Error, Result};

/// Nodes and weights of the n-point Gauss-Legendre rule on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 {
                1.0
            } else if n == 1 {
                x
            } else {
                p1
            };
            let pnm1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * pn - pnm1) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn gl16() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(16))
}

/// Composite 16-point Gauss-Legendre with `panels` equal panels on [a, b].
pub fn composite_gl(f: &impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let (nodes, weights) = gl16();
    let h = (b - a) / panels as f64;
    let mut total = 0.0;
    for j in 0..panels {
        let mid = a + (j as f64 + 0.5) * h;
        let mut s = 0.0;
        for (x, w) in nodes.iter().zip(weights) {
            s += w * f(mid + 0.5 * h * x);
        }
        total += 0.5 * h * s;
    }
    total
}

/// Location of the maximum of a concave function on [lo, hi] by bisection
/// on the sign of a centered finite-difference slope.
fn concave_argmax(h: &impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    let (mut a, mut b) = (lo, hi);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        let eps = 1e-7 * (1.0 + m.abs());
        if h(m + eps) > h(m - eps) {
            a = m;
        } else {
            b = m;
        }
        if b - a < 1e-13 * (1.0 + m.abs()) {
            break;
        }
    }
    0.5 * (a + b)
}

/// Window `[a, b]` around the mode of a concave `h` outside which
/// `h < peak - 80`, together with the peak value. `None` for an empty range.
pub fn concave_window(h: &impl Fn(f64) -> f64, lo: f64, hi: f64) -> Result<Option<(f64, f64, f64)>> {
    const SEARCH: f64 = 200.0;
    const DROP: f64 = 80.0;
    let lo_c = lo.max(-SEARCH);
    let hi_c = hi.min(SEARCH);
    if !(lo_c < hi_c) {
        return Ok(None);
    }
    let s0 = concave_argmax(h, lo_c, hi_c);
    let peak = h(s0);
    if !peak.is_finite() {
        return Err(Error::Numeric(format!(
            "log-integrand is not finite at its mode s = {s0} (value {peak})"
        )));
    }
    // curvature sets the first outward step
    let e = 1e-4;
    let curv = -(h(s0 + e) - 2.0 * peak + h(s0 - e)) / (e * e);
    let width = if curv.is_finite() && curv > 0.0 {
        1.0 / curv.sqrt()
    } else {
        1.0
    };

    let edge = |dir: f64, limit: f64| -> f64 {
        let mut step = width;
        let mut s = s0;
        loop {
            let next = s + dir * step;
            if (dir > 0.0 && next >= limit) || (dir < 0.0 && next <= limit) {
                return limit;
            }
            let v = h(next);
            if !(v - peak > -DROP) {
                return next;
            }
            s = next;
            step *= 1.5;
        }
    };
    Ok(Some((edge(-1.0, lo_c), edge(1.0, hi_c), peak)))
}

/// Composite Gauss-Legendre on `[a, b]`, doubling panels from 32 until
/// successive values agree to `rtol` relative or `atol` absolute (capped at
/// 2^14 panels).
pub fn integrate_refined(g: impl Fn(f64) -> f64, a: f64, b: f64, rtol: f64, atol: f64) -> Result<f64> {
    let mut panels = 32usize;
    let mut prev = composite_gl(&g, a, b, panels);
    loop {
        panels *= 2;
        let cur = composite_gl(&g, a, b, panels);
        let change = (cur - prev).abs();
        if change <= (rtol * cur.abs()).max(atol) || panels >= 1 << 14 {
            if change > (1e-9 * cur.abs()).max(atol) {
                return Err(Error::Numeric(format!(
                    "quadrature did not converge: {prev} vs {cur} with {panels} panels"
                )));
            }
            return Ok(cur);
        }
        prev = cur;
    }
}

/// Integral of `exp(h(s))` over `[lo, hi]` for concave `h`, returned as a
/// logarithm. Infinite bounds are allowed; the range is truncated where
/// the integrand drops below `exp(-80)` relative to its peak.
pub fn log_integral_concave(h: impl Fn(f64) -> f64, lo: f64, hi: f64) -> Result<f64> {
    let Some((a, b, peak)) = concave_window(&h, lo, hi)? else {
        return Ok(f64::NEG_INFINITY);
    };
    let g = |s: f64| {
        let v = h(s) - peak;
        if v.is_finite() {
            v.exp()
        } else {
            0.0
        }
    };
    let cur = integrate_refined(g, a, b, 1e-14, 0.0)?;
    if !(cur > 0.0) {
        return Err(Error::Numeric("integral of positive function is not positive".into()));
    }
    Ok(peak + cur.ln())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        let (x, w) = gauss_legendre(16);
        let s: f64 = w.iter().sum();
        assert!((s - 2.0).abs() < 1e-14);
        // degree 30 monomial: integral 2/31
        let v: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(30)).sum();
        assert!((v - 2.0 / 31.0).abs() < 1e-14);
    }

    #[test]
    fn log_integral_of_gaussian() {
        // exp(-s^2/2) integrates to sqrt(2 pi)
        let v = log_integral_concave(|s| -0.5 * s * s, f64::NEG_INFINITY, f64::INFINITY).unwrap();
        assert!((v - (2.0 * std::f64::consts::PI).sqrt().ln()).abs() < 1e-13);
        // half line
        let v = log_integral_concave(|s| -0.5 * s * s, 0.0, f64::INFINITY).unwrap();
        assert!((v - (0.5 * (2.0 * std::f64::consts::PI).sqrt()).ln()).abs() < 1e-13);
    }

    #[test]
    fn log_integral_of_sharp_peak_far_from_origin() {
        // exp(1e4 - 1e6 (s-3)^2)
        let v = log_integral_concave(|s| 1e4 - 1e6 * (s - 3.0).powi(2), -50.0, 50.0).unwrap();
        let exact = 1e4 + (std::f64::consts::PI / 1e6).sqrt().ln();
        assert!((v - exact).abs() < 1e-10);
    }
}
