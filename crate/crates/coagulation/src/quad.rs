//! Quadrature primitives: Gauss panels in log coordinates, compensated
//! summation, closed-form exponential tail integrals, and small polynomial
//! fits used to accelerate repeated evaluation of cumulative integrals.

use crate::error::{Error, Result};
use once_cell::sync::Lazy;
use statrs::function::gamma::gamma_ui;

/// 4-point Gauss-Legendre rule on [0, 1].
pub(crate) const GAUSS4: [(f64, f64); 4] = [
    (0.069431844202973712, 0.173927422568726929),
    (0.330009478207571868, 0.326072577431273071),
    (0.669990521792428132, 0.326072577431273071),
    (0.930568155797026288, 0.173927422568726929),
];

/// 8-point Gauss-Legendre rule on [0, 1].
pub(crate) const GAUSS8: [(f64, f64); 8] = [
    (0.019855071751231884, 0.050614268145188130),
    (0.101666761293186630, 0.111190517226687235),
    (0.237233795041835507, 0.156853322938943644),
    (0.408282678752175098, 0.181341891689180991),
    (0.591717321247824902, 0.181341891689180991),
    (0.762766204958164493, 0.156853322938943644),
    (0.898333238706813370, 0.111190517226687235),
    (0.980144928248768116, 0.050614268145188130),
];

/// Panels are subdivided until `width * slope <= PANEL_RESOLUTION`, where
/// `slope` bounds |d ln(integrand)/du| on the panel.
pub(crate) const PANEL_RESOLUTION: f64 = 0.4;

/// Exponential factors below exp(-TAIL_CUTOFF) are dropped from numerical
/// tail sweeps; 4e-18 relative is far below every tolerance in the crate.
pub(crate) const TAIL_CUTOFF: f64 = 40.0;

/// Neumaier compensated accumulator. Deterministic given a fixed order of
/// `add` calls, which every integration routine in this crate guarantees.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct Kahan {
    sum: f64,
    comp: f64,
}

impl Kahan {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Number of Gauss-4 panels needed so that `width_u * slope` per panel stays
/// below the resolution target.
#[inline]
pub(crate) fn panels_for(width_u: f64, slope: f64) -> usize {
    let n = (width_u * slope.abs() / PANEL_RESOLUTION).ceil();
    (n as usize).clamp(1, 512)
}

/// ∫_a^b g(x) dx by `n_panels` Gauss-4 panels uniform in u = ln x.
/// Requires 0 < a < b.
pub(crate) fn gauss_log_panels(a: f64, b: f64, n_panels: usize, mut g: impl FnMut(f64) -> f64) -> f64 {
    debug_assert!(a > 0.0 && b > a);
    let ua = a.ln();
    let ub = b.ln();
    let h = (ub - ua) / n_panels as f64;
    let mut acc = Kahan::new();
    for p in 0..n_panels {
        let u0 = ua + h * p as f64;
        for &(t, w) in &GAUSS4 {
            let x = (u0 + t * h).exp();
            acc.add(w * h * g(x) * x);
        }
    }
    acc.value()
}

/// ∫_a^b g(x) dx by Gauss-8 on a linear panel. Used for short intervals.
pub(crate) fn gauss_linear(a: f64, b: f64, mut g: impl FnMut(f64) -> f64) -> f64 {
    let len = b - a;
    let mut acc = Kahan::new();
    for &(t, w) in &GAUSS8 {
        acc.add(w * len * g(a + t * len));
    }
    acc.value()
}

/// ∫_X^∞ x^p e^(-b x) dx.
///
/// Elementary for integer p in {0, 1, 2}; upper incomplete gamma otherwise.
/// `b == 0` is accepted when p < -1 (pure power tail). Returns the log-free
/// value; callers needing huge prefactors should use `scaled_power_exp_tail`.
pub(crate) fn power_exp_tail(p: f64, b: f64, x_from: f64) -> Result<f64> {
    scaled_power_exp_tail(0.0, p, b, x_from)
}

/// exp(ln_scale) * ∫_X^∞ x^p e^(-b x) dx, with the scale folded into the
/// exponent for the elementary cases so that huge amplitudes and tiny tails
/// cannot overflow separately.
pub(crate) fn scaled_power_exp_tail(ln_scale: f64, p: f64, b: f64, x_from: f64) -> Result<f64> {
    debug_assert!(x_from > 0.0);
    if b < 0.0 {
        return Err(Error::DivergentTail {
            growth: -b,
            tail_rate: 0.0,
        });
    }
    if b == 0.0 {
        if p < -1.0 {
            return Ok((ln_scale + (p + 1.0) * x_from.ln()).exp() / (-p - 1.0));
        }
        return Err(Error::DivergentTail {
            growth: 0.0,
            tail_rate: 0.0,
        });
    }
    let z = b * x_from;
    if p == 0.0 {
        return Ok((ln_scale - z).exp() / b);
    }
    if p == 1.0 {
        return Ok((ln_scale - z).exp() * (1.0 + z) / (b * b));
    }
    if p == 2.0 {
        return Ok((ln_scale - z).exp() * (2.0 + z * (2.0 + z)) / (b * b * b));
    }
    if p > -1.0 {
        // gamma_ui(a, z) = Γ(a, z); underflows to zero harmlessly for large z.
        let g = gamma_ui(p + 1.0, z);
        return Ok(ln_scale.exp() * g / b.powf(p + 1.0));
    }
    // Rarely used branch (p <= -1 with b > 0): numeric sweep in log panels.
    let scale = ln_scale.exp();
    let mut acc = Kahan::new();
    let mut lo = x_from;
    while b * lo < TAIL_CUTOFF {
        let hi = lo * 10.0;
        let n = panels_for(std::f64::consts::LN_10, p.abs() + b * hi);
        acc.add(gauss_log_panels(lo, hi, n, |x| x.powf(p) * (-b * x).exp()));
        lo = hi;
    }
    Ok(scale * acc.value())
}

/// Degree-4 polynomial c0 + c1 t + ... + c4 t^4 fitted through values at the
/// five Chebyshev-Lobatto points of [0, 1]. Used to cache cumulative
/// integrals for O(1) evaluation inside hot loops.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Quartic {
    pub coeffs: [f64; 5],
}

pub(crate) const CHEB5_NODES: [f64; 5] = [
    0.0,
    0.146446609406726238,
    0.5,
    0.853553390593273762,
    1.0,
];

static CHEB5_INVERSE: Lazy<[[f64; 5]; 5]> = Lazy::new(|| {
    // Invert the Vandermonde matrix V[k][j] = t_k^j by Gauss-Jordan.
    let mut a = [[0.0f64; 10]; 5];
    for (k, row) in a.iter_mut().enumerate() {
        let t = CHEB5_NODES[k];
        let mut p = 1.0;
        for j in 0..5 {
            row[j] = p;
            p *= t;
        }
        row[5 + k] = 1.0;
    }
    for col in 0..5 {
        let pivot = (col..5)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, pivot);
        let d = a[col][col];
        for v in a[col].iter_mut() {
            *v /= d;
        }
        for row in 0..5 {
            if row != col {
                let f = a[row][col];
                for j in 0..10 {
                    a[row][j] -= f * a[col][j];
                }
            }
        }
    }
    let mut inv = [[0.0f64; 5]; 5];
    for i in 0..5 {
        for j in 0..5 {
            inv[i][j] = a[i][5 + j];
        }
    }
    inv
});

impl Quartic {
    /// Fit from values at the five Chebyshev-Lobatto nodes of [0, 1].
    pub fn fit(values: [f64; 5]) -> Self {
        let inv = &*CHEB5_INVERSE;
        let mut coeffs = [0.0f64; 5];
        for (i, c) in coeffs.iter_mut().enumerate() {
            let mut s = 0.0;
            for j in 0..5 {
                s += inv[i][j] * values[j];
            }
            *c = s;
        }
        Self { coeffs }
    }

    #[inline]
    pub fn eval(&self, t: f64) -> f64 {
        let c = &self.coeffs;
        (((c[4] * t + c[3]) * t + c[2]) * t + c[1]) * t + c[0]
    }
}

/// Adaptive Simpson integration of a smooth function on [a, b].
pub(crate) fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        ((b - a) / 6.0 * (fa + 4.0 * fm + fb), m, fm)
    }
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        whole: f64,
        m: f64,
        fm: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let (left, lm, flm) = simpson(f, a, fa, m, fm);
        let (right, rm, frm) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            recurse(f, a, fa, m, fm, left, lm, flm, 0.5 * tol, depth - 1)
                + recurse(f, m, fm, b, fb, right, rm, frm, 0.5 * tol, depth - 1)
        }
    }
    let fa = f(a);
    let fb = f(b);
    let (whole, m, fm) = simpson(f, a, fa, b, fb);
    recurse(f, a, fa, b, fb, whole, m, fm, tol, 48)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn gauss_log_panels_polynomial() {
        // ∫_1^4 x^2 dx = 21; the integrand is e^{3u} in panel coordinates,
        // so the rule converges at order 8 in the panel count.
        let coarse = (gauss_log_panels(1.0, 4.0, 4, |x| x * x) - 21.0).abs();
        let fine = (gauss_log_panels(1.0, 4.0, 16, |x| x * x) - 21.0).abs();
        assert!(fine < 1e-12 * 21.0, "fine-panel error {fine}");
        assert!(fine < coarse / 1e4);
    }

    #[test]
    fn tail_integral_elementary() {
        // ∫_2^∞ e^{-3x} dx
        let v = power_exp_tail(0.0, 3.0, 2.0).unwrap();
        assert_relative_eq!(v, (-6.0f64).exp() / 3.0, max_relative = 1e-14);
        // ∫_1^∞ x e^{-x} dx = 2/e
        let v = power_exp_tail(1.0, 1.0, 1.0).unwrap();
        assert_relative_eq!(v, 2.0 * (-1.0f64).exp(), max_relative = 1e-14);
        // ∫_2^∞ x^{-2.5} dx = 2^{-1.5}/1.5
        let v = power_exp_tail(-2.5, 0.0, 2.0).unwrap();
        assert_relative_eq!(v, 2.0f64.powf(-1.5) / 1.5, max_relative = 1e-14);
    }

    #[test]
    fn tail_integral_fractional_matches_simpson() {
        // ∫_0.5^∞ x^{1/3} e^{-2x} dx
        let v = power_exp_tail(1.0 / 3.0, 2.0, 0.5).unwrap();
        let oracle = adaptive_simpson(&|x: f64| x.powf(1.0 / 3.0) * (-2.0 * x).exp(), 0.5, 30.0, 1e-13);
        assert_relative_eq!(v, oracle, max_relative = 1e-9);
    }

    #[test]
    fn tail_integral_rejects_growth() {
        assert!(power_exp_tail(1.0, -0.5, 1.0).is_err());
        assert!(power_exp_tail(0.5, 0.0, 1.0).is_err());
    }

    #[test]
    fn scaled_tail_handles_huge_scales() {
        // exp(300) * ∫_100^∞ e^{-3x} dx would overflow if materialized naively.
        let v = scaled_power_exp_tail(300.0, 0.0, 3.0, 100.0).unwrap();
        assert_relative_eq!(v, (300.0f64 - 300.0).exp() / 3.0, max_relative = 1e-12);
    }

    #[test]
    fn quartic_fit_reproduces_polynomials() {
        let poly = |t: f64| 1.0 + t * (2.0 - t * (3.0 - t * (0.5 + t)));
        let vals = [
            poly(CHEB5_NODES[0]),
            poly(CHEB5_NODES[1]),
            poly(CHEB5_NODES[2]),
            poly(CHEB5_NODES[3]),
            poly(CHEB5_NODES[4]),
        ];
        let q = Quartic::fit(vals);
        for k in 0..=10 {
            let t = k as f64 / 10.0;
            assert_relative_eq!(q.eval(t), poly(t), max_relative = 1e-12, epsilon = 1e-13);
        }
    }

    #[test]
    fn kahan_sums_small_into_large() {
        let mut acc = Kahan::new();
        acc.add(1e16);
        for _ in 0..1000 {
            acc.add(1.0);
        }
        acc.add(-1e16);
        assert_eq!(acc.value(), 1000.0);
    }
}
