//! Weighted integration of profiles over [0, ∞).
//!
//! The grid region is integrated by Gauss panels in u = ln x against the
//! profile interpolant, with panels subdivided wherever the integrand varies
//! quickly on the log scale. Below the first node the profile is a power law
//! and the weight is split into a power factor and a bounded smooth factor,
//! so the head reduces to a Gauss rule after a power substitution. Beyond the
//! last node the exponential tail extension integrates in closed form against
//! x^p e^(-qx) weights.

use crate::error::{Error, Result};
use crate::profile::Profile;
use crate::quad::{self, Kahan, TAIL_CUTOFF};

/// Integration weight w(x).
pub(crate) enum Weight<'a> {
    /// x^p e^(-q x)
    PowExp { p: f64, q: f64 },
    /// 1 - e^(-q x)
    OneMinusExp { q: f64 },
    /// x^p (1 - e^(-q x))
    PowOneMinusExp { p: f64, q: f64 },
    /// Arbitrary weight; `growth` bounds its exponential growth rate so the
    /// tail sweep knows whether the integral exists.
    Func {
        eval: &'a dyn Fn(f64) -> f64,
        growth: f64,
    },
}

#[inline]
fn exp_neg(qx: f64) -> f64 {
    if qx > 745.0 {
        0.0
    } else {
        (-qx).exp()
    }
}

#[inline]
fn one_minus_exp(qx: f64) -> f64 {
    // 1 - e^(-qx), accurate for small |qx| and safe for large negative qx.
    -(-qx).exp_m1()
}

impl Weight<'_> {
    #[inline]
    pub(crate) fn eval(&self, x: f64) -> f64 {
        match self {
            Weight::PowExp { p, q } => pow_fast(x, *p) * exp_neg(q * x),
            Weight::OneMinusExp { q } => one_minus_exp(q * x),
            Weight::PowOneMinusExp { p, q } => pow_fast(x, *p) * one_minus_exp(q * x),
            Weight::Func { eval, .. } => eval(x),
        }
    }

    /// Power-law factor exponent near x = 0.
    fn power_at_zero(&self) -> f64 {
        match self {
            Weight::PowExp { p, .. } | Weight::PowOneMinusExp { p, .. } => *p,
            _ => 0.0,
        }
    }

    /// Weight divided by its power factor; bounded and smooth near 0.
    fn smooth_at(&self, x: f64) -> f64 {
        match self {
            Weight::PowExp { q, .. } => exp_neg(q * x),
            Weight::OneMinusExp { q } | Weight::PowOneMinusExp { q, .. } => one_minus_exp(q * x),
            Weight::Func { eval, .. } => eval(x),
        }
    }

    /// Bound on |d ln w / du| over a cell [x_lo, x_hi].
    fn slope_hint(&self, x_lo: f64, x_hi: f64) -> f64 {
        match self {
            Weight::PowExp { p, q } => p.abs() + effective_exp_slope(*q, x_lo, x_hi),
            Weight::OneMinusExp { q } => effective_exp_slope(*q, x_lo, x_hi),
            Weight::PowOneMinusExp { p, q } => p.abs() + effective_exp_slope(*q, x_lo, x_hi),
            Weight::Func { growth, .. } => growth.abs() * x_hi + 3.0,
        }
    }

    /// True when a pure decaying exponential weight has already died out.
    fn suppressed(&self, x_lo: f64) -> bool {
        match self {
            Weight::PowExp { q, .. } => *q > 0.0 && q * x_lo > TAIL_CUTOFF + 10.0,
            _ => false,
        }
    }
}

#[inline]
pub(crate) fn pow_fast(x: f64, p: f64) -> f64 {
    if p == 0.0 {
        1.0
    } else if p == 1.0 {
        x
    } else {
        x.powf(p)
    }
}

fn effective_exp_slope(q: f64, x_lo: f64, x_hi: f64) -> f64 {
    if q > 0.0 && q * x_lo > 45.0 {
        // e^{-qx} is gone; for 1 - e^{-qx} the weight is flat here.
        0.0
    } else {
        q.abs() * x_hi
    }
}

/// ∫_0^∞ w(x) f(x) dx.
pub(crate) fn integral(profile: &Profile, w: &Weight) -> Result<f64> {
    integral_range(profile, w, 0.0, f64::INFINITY)
}

/// ∫_lo^hi w(x) f(x) dx with 0 <= lo < hi <= ∞.
pub(crate) fn integral_range(profile: &Profile, w: &Weight, lo: f64, hi: f64) -> Result<f64> {
    if !(lo >= 0.0) || !(hi > lo) {
        return Err(Error::InvalidParameter(format!(
            "integration range [{lo}, {hi}] invalid"
        )));
    }
    let grid = profile.grid();
    let x_min = grid.x_min();
    let x_max = grid.x_max();
    let mut acc = Kahan::new();

    if lo < x_min {
        let head_hi = hi.min(x_min);
        acc.add(head_cumulative(profile, w, head_hi)? - head_cumulative(profile, w, lo)?);
    }

    let glo = lo.max(x_min);
    let ghi = hi.min(x_max);
    if ghi > glo * (1.0 + 1e-15) {
        grid_part(profile, w, glo, ghi, &mut acc);
    }

    if hi > x_max {
        let from = lo.max(x_max);
        acc.add(tail_part(profile, w, from, hi)?);
    }
    Ok(acc.value())
}

/// ∫_0^X w(x) f(x) dx for X <= x_min, using the power-law head extrapolation.
fn head_cumulative(profile: &Profile, w: &Weight, x_to: f64) -> Result<f64> {
    if x_to <= 0.0 {
        return Ok(0.0);
    }
    let f0 = profile.values()[0];
    if f0 == 0.0 {
        return Ok(0.0);
    }
    let s0 = profile.head_exponent();
    let m = s0 + w.power_at_zero();
    if m <= -1.0 {
        return Err(Error::DivergentHead { exponent: m });
    }
    let x0 = profile.grid().x_min();
    // f(x) = f0 (x/x0)^{s0};  substitute v = (x/X)^{m+1}.
    let pref = f0 * (x0.powf(-s0)) * x_to.powf(m + 1.0) / (m + 1.0);
    let mut acc = Kahan::new();
    for &(v, wt) in &quad::GAUSS8 {
        let x = x_to * v.powf(1.0 / (m + 1.0));
        acc.add(wt * w.smooth_at(x));
    }
    Ok(pref * acc.value())
}

fn grid_part(profile: &Profile, w: &Weight, lo: f64, hi: f64, acc: &mut Kahan) {
    let grid = profile.grid();
    let first = grid.cell_of(lo);
    let last = grid.cell_of(hi * (1.0 - 1e-15));
    for cell in first..=last {
        let a = grid.node(cell).max(lo);
        let b = grid.node(cell + 1).min(hi);
        if b <= a * (1.0 + 1e-15) {
            continue;
        }
        if w.suppressed(a) {
            continue;
        }
        let slope = profile.cell_slope(cell) + w.slope_hint(a, b);
        let n = quad::panels_for((b / a).ln(), slope);
        acc.add(quad::gauss_log_panels(a, b, n, |x| {
            w.eval(x) * profile.value_at(x)
        }));
    }
}

fn tail_part(profile: &Profile, w: &Weight, from: f64, hi: f64) -> Result<f64> {
    let tail = profile.tail();
    if tail.amplitude_is_zero() {
        return Ok(0.0);
    }
    let rate = tail.rate();
    if hi.is_finite() {
        // Bounded window in the tail region: integrate numerically; any
        // weight is admissible on a finite interval.
        let slope = match w {
            Weight::PowExp { p, q } => p.abs() + (rate + q).abs() * hi,
            Weight::OneMinusExp { q } | Weight::PowOneMinusExp { q, .. } => {
                1.0 + (rate + q.min(0.0)).abs() * hi
            }
            Weight::Func { growth, .. } => 1.0 + (rate + growth.abs()) * hi,
        };
        let n = quad::panels_for((hi / from).ln(), slope);
        return Ok(quad::gauss_log_panels(from, hi, n, |x| {
            w.eval(x) * profile.value_at(x)
        }));
    }
    let ln_scale = tail.ln_anchor_f() + rate * tail.anchor_x();
    let closed = |p: f64, q: f64| -> Result<f64> {
        quad::scaled_power_exp_tail(ln_scale, p, rate + q, from).map_err(|_| {
            Error::DivergentTail {
                growth: -q,
                tail_rate: rate,
            }
        })
    };
    match w {
        Weight::PowExp { p, q } => closed(*p, *q),
        Weight::OneMinusExp { q } => Ok(closed(0.0, 0.0)? - closed(0.0, *q)?),
        Weight::PowOneMinusExp { p, q } => Ok(closed(*p, 0.0)? - closed(*p, *q)?),
        Weight::Func { eval, growth } => {
            // No closed form: decade-wise sweep, requiring the contributions
            // to keep shrinking when the weight eats the exponential margin.
            numeric_tail_sweep(profile, eval, from, hi, *growth >= rate)
        }
    }
}

fn numeric_tail_sweep(
    profile: &Profile,
    eval: &dyn Fn(f64) -> f64,
    from: f64,
    hi: f64,
    require_decay: bool,
) -> Result<f64> {
    let tail = profile.tail();
    let rate = tail.rate();
    let mut acc = Kahan::new();
    let mut lo = from;
    let mut prev = f64::INFINITY;
    for _ in 0..14 {
        if lo >= hi {
            break;
        }
        let up = (lo * 10.0).min(hi);
        let n = quad::panels_for((up / lo).ln(), 1.0 + rate * up.min(3.0 * TAIL_CUTOFF / rate));
        let seg = quad::gauss_log_panels(lo, up, n, |x| eval(x) * profile.value_at(x));
        acc.add(seg);
        let total = acc.value().abs().max(1e-300);
        if seg.abs() < 1e-13 * total {
            return Ok(acc.value());
        }
        if require_decay && seg.abs() > prev {
            return Err(Error::DivergentTail {
                growth: f64::NAN,
                tail_rate: rate,
            });
        }
        prev = seg.abs();
        lo = up;
    }
    Ok(acc.value())
}

/// Cumulative upper integral S(w) = ∫_w^∞ z^β f(z) dz, cached as panel-wise
/// quartic polynomials for O(1) evaluation at arbitrary w > 0.
pub(crate) struct CumulativeUpper {
    beta: f64,
    breaks_u: Vec<f64>,
    polys: Vec<quad::Quartic>,
    s_at_min: f64,
    head_pref: f64,
    head_pow: f64,
    tail_ln_scale: f64,
    tail_rate: f64,
    tail_zero: bool,
    x_min: f64,
    x_max: f64,
}

impl CumulativeUpper {
    pub(crate) fn build(profile: &Profile, beta: f64) -> Result<Self> {
        let grid = profile.grid();
        let x_min = grid.x_min();
        let x_max = grid.x_max();
        let tail = profile.tail();
        let tail_zero = tail.amplitude_is_zero();
        let (tail_ln_scale, tail_rate) = if tail_zero {
            (f64::NEG_INFINITY, 1.0)
        } else {
            (tail.ln_anchor_f() + tail.rate() * tail.anchor_x(), tail.rate())
        };
        let s_at_max = if tail_zero {
            0.0
        } else {
            quad::scaled_power_exp_tail(tail_ln_scale, beta, tail_rate, x_max)?
        };

        // Head exponent check: S must stay finite as w -> 0.
        let f0 = profile.values()[0];
        let s0 = profile.head_exponent();
        let head_pow = beta + s0 + 1.0;
        if f0 > 0.0 && head_pow <= 0.0 {
            return Err(Error::DivergentHead {
                exponent: beta + s0,
            });
        }
        let head_pref = if f0 > 0.0 {
            f0 * x_min.powf(-s0) / head_pow
        } else {
            0.0
        };

        // Panel layout: per grid cell, subdivided by integrand slope.
        let mut breaks_u = Vec::with_capacity(grid.len() * 2);
        breaks_u.push(grid.log_nodes()[0]);
        for cell in 0..grid.len() - 1 {
            let ua = grid.log_nodes()[cell];
            let ub = grid.log_nodes()[cell + 1];
            let slope = profile.cell_slope(cell) + beta.abs();
            let n = quad::panels_for(ub - ua, slope);
            for k in 1..=n {
                breaks_u.push(ua + (ub - ua) * k as f64 / n as f64);
            }
        }
        let n_panels = breaks_u.len() - 1;

        // Panel-wise values of S at the five Chebyshev points, accumulated
        // from the right so the backward recursion is exact.
        let mut polys = vec![
            quad::Quartic {
                coeffs: [0.0; 5]
            };
            n_panels
        ];
        let mut s_right = s_at_max;
        for p in (0..n_panels).rev() {
            let ua = breaks_u[p];
            let ub = breaks_u[p + 1];
            let len = ub - ua;
            // Segment integrals between consecutive Chebyshev nodes.
            let mut seg = [0.0f64; 4];
            for (k, s) in seg.iter_mut().enumerate() {
                let ta = quad::CHEB5_NODES[k];
                let tb = quad::CHEB5_NODES[k + 1];
                let mut acc = Kahan::new();
                for &(g, wt) in &quad::GAUSS4 {
                    let u = ua + (ta + g * (tb - ta)) * len;
                    let x = u.exp();
                    acc.add(wt * (tb - ta) * len * pow_fast(x, beta) * profile.value_at(x) * x);
                }
                *s = acc.value();
            }
            // S at the Chebyshev nodes, rightmost first.
            let mut vals = [0.0f64; 5];
            vals[4] = s_right;
            for k in (0..4).rev() {
                vals[k] = vals[k + 1] + seg[k];
            }
            polys[p] = quad::Quartic::fit(vals);
            s_right = vals[0];
        }

        Ok(Self {
            beta,
            breaks_u,
            polys,
            s_at_min: s_right,
            head_pref,
            head_pow,
            tail_ln_scale,
            tail_rate,
            tail_zero,
            x_min,
            x_max,
        })
    }

    /// S(w); exact limits at w = 0 and closed form beyond the grid.
    #[inline]
    pub(crate) fn eval(&self, w: f64) -> f64 {
        if w <= self.x_min {
            let head = if self.head_pref == 0.0 {
                0.0
            } else if w <= 0.0 {
                self.head_pref * self.x_min.powf(self.head_pow)
            } else {
                self.head_pref * (self.x_min.powf(self.head_pow) - w.powf(self.head_pow))
            };
            return self.s_at_min + head;
        }
        if w >= self.x_max {
            if self.tail_zero {
                return 0.0;
            }
            return quad::scaled_power_exp_tail(self.tail_ln_scale, self.beta, self.tail_rate, w)
                .unwrap_or(0.0);
        }
        let u = w.ln();
        let idx = match self
            .breaks_u
            .binary_search_by(|b| b.total_cmp(&u))
        {
            Ok(i) => i.min(self.polys.len() - 1),
            Err(i) => i.saturating_sub(1).min(self.polys.len() - 1),
        };
        let t = (u - self.breaks_u[idx]) / (self.breaks_u[idx + 1] - self.breaks_u[idx]);
        self.polys[idx].eval(t.clamp(0.0, 1.0))
    }

    /// S(0) = full integral.
    pub(crate) fn total(&self) -> f64 {
        self.eval(0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use approx::assert_relative_eq;
    use std::sync::Arc;

    fn exp_profile() -> Profile {
        let grid = Arc::new(Grid::default_profile());
        Profile::sample(grid, |x| (-x).exp(), Some((1.0, 1.0))).unwrap()
    }

    #[test]
    fn plain_moments_of_exponential() {
        let p = exp_profile();
        let m1 = integral(&p, &Weight::PowExp { p: 1.0, q: 0.0 }).unwrap();
        assert_relative_eq!(m1, 1.0, max_relative = 1e-8);
        let m2 = integral(&p, &Weight::PowExp { p: 2.0, q: 0.0 }).unwrap();
        assert_relative_eq!(m2, 2.0, max_relative = 1e-8);
    }

    #[test]
    fn laplace_weight_matches_closed_form() {
        let p = exp_profile();
        for &q in &[-0.9, -0.5, 0.1, 1.0, 10.0, 100.0] {
            let v = integral(&p, &Weight::OneMinusExp { q }).unwrap();
            assert_relative_eq!(v, q / (1.0 + q), max_relative = 1e-7, epsilon = 1e-9);
        }
    }

    #[test]
    fn growing_weight_needs_tail_margin() {
        let p = exp_profile();
        let ok = integral(&p, &Weight::PowExp { p: 1.0, q: -0.999 });
        assert!(ok.is_ok());
        let err = integral(&p, &Weight::PowExp { p: 1.0, q: -1.5 });
        assert!(matches!(err, Err(Error::DivergentTail { .. })));
    }

    #[test]
    fn window_integrals() {
        let p = exp_profile();
        // ∫_4^8 e^x e^{-x} dx = 4
        let w = Weight::PowExp { p: 0.0, q: -1.0 };
        let v = integral_range(&p, &w, 4.0, 8.0).unwrap();
        assert_relative_eq!(v, 4.0, max_relative = 1e-7);
        // window reaching into the analytic tail: ∫_70^90 dx (weight e^x)
        let v = integral_range(&p, &w, 70.0, 90.0).unwrap();
        assert_relative_eq!(v, 20.0, max_relative = 1e-7);
    }

    #[test]
    fn cumulative_upper_matches_incomplete_gamma() {
        let p = exp_profile();
        let s = CumulativeUpper::build(&p, 0.0).unwrap();
        for &w in &[0.0f64, 1e-7, 1e-3, 0.1, 1.0, 3.0, 10.0, 50.0, 79.0, 100.0] {
            let expect = (-w).exp();
            assert_relative_eq!(s.eval(w), expect, max_relative = 2e-7, epsilon = 1e-300);
        }
        // ∫_w^∞ z e^{-z} dz = (1+w) e^{-w}
        let s1 = CumulativeUpper::build(&p, 1.0).unwrap();
        for &w in &[0.0, 0.5, 2.0, 20.0] {
            assert_relative_eq!(s1.eval(w), (1.0 + w) * (-w).exp(), max_relative = 2e-7);
        }
    }
}
