//! Candidate self-similar profiles: nonnegative densities on a geometric
//! grid with an analytic exponential tail extension.
//!
//! Between nodes the profile is interpolated in (ln x, ln f) by a sliding
//! degree-5 stencil, which keeps weighted integrals accurate to ~1e-8 on the
//! default grid. Cells touching zero values fall back to linear
//! interpolation. Below the first node the profile continues as the power law
//! fitted to the first cell; above the last node it continues as
//! f(x) = C e^(-a x) anchored at the last node.

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::integrate::{self, Weight};
use crate::quad::{self, Kahan};
use std::sync::Arc;

/// Exponential tail extension, anchored at (anchor_x, anchor_f) so that huge
/// amplitudes C = anchor_f e^(rate * anchor_x) never have to be materialized.
#[derive(Debug, Clone, Copy)]
pub struct Tail {
    rate: f64,
    anchor_x: f64,
    anchor_f: f64,
}

impl Tail {
    fn zero(anchor_x: f64) -> Self {
        Self {
            rate: 1.0,
            anchor_x,
            anchor_f: 0.0,
        }
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    /// Amplitude C in f(x) = C e^(-rate x). May overflow for extreme rates;
    /// internal evaluation never goes through this value.
    pub fn amplitude(&self) -> f64 {
        self.anchor_f * (self.rate * self.anchor_x).exp()
    }

    pub(crate) fn anchor_x(&self) -> f64 {
        self.anchor_x
    }

    pub(crate) fn ln_anchor_f(&self) -> f64 {
        self.anchor_f.ln()
    }

    pub(crate) fn amplitude_is_zero(&self) -> bool {
        self.anchor_f == 0.0
    }

    #[inline]
    pub(crate) fn eval(&self, x: f64) -> f64 {
        if self.anchor_f == 0.0 {
            0.0
        } else {
            self.anchor_f * (-self.rate * (x - self.anchor_x)).exp()
        }
    }
}

/// Result of a free least-squares exponential fit, see [`Profile::fit_tail`].
#[derive(Debug, Clone, Copy)]
pub struct TailFit {
    pub rate: f64,
    pub amplitude: f64,
    /// Root-mean-square deviation of ln f from the fitted line.
    pub residual: f64,
}

/// A nonnegative density on a geometric grid with exponential tail extension.
#[derive(Debug, Clone)]
pub struct Profile {
    grid: Arc<Grid>,
    values: Vec<f64>,
    ln_values: Vec<f64>,
    cell_slopes: Vec<f64>,
    head_exp: f64,
    tail: Tail,
}

impl Profile {
    /// Build from node values; the tail is fitted on the last decade of nodes
    /// and anchored at the last node (or disabled if the window touches zero
    /// or the data does not decay).
    pub fn from_values(grid: Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        let tail = auto_tail(&grid, &values)?;
        Self::assemble(grid, values, tail)
    }

    /// Build with an explicit tail f(x) = amplitude * e^(-rate x) for x beyond
    /// the grid. `amplitude = 0` disables the tail extension.
    pub fn from_values_with_tail(
        grid: Arc<Grid>,
        values: Vec<f64>,
        rate: f64,
        amplitude: f64,
    ) -> Result<Self> {
        if !(rate > 0.0) || !rate.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "tail rate must be positive and finite, got {rate}"
            )));
        }
        if !(amplitude >= 0.0) || !amplitude.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "tail amplitude must be nonnegative, got {amplitude}"
            )));
        }
        let anchor_x = grid.x_max();
        let tail = if amplitude == 0.0 {
            Tail::zero(anchor_x)
        } else {
            Tail {
                rate,
                anchor_x,
                anchor_f: amplitude * (-rate * anchor_x).exp(),
            }
        };
        Self::assemble(grid, values, tail)
    }

    /// Sample a function on the grid. With `tail: None` the tail is fitted
    /// from the sampled values.
    pub fn sample(
        grid: Arc<Grid>,
        f: impl Fn(f64) -> f64,
        tail: Option<(f64, f64)>,
    ) -> Result<Self> {
        let values: Vec<f64> = grid.nodes().iter().map(|&x| f(x)).collect();
        match tail {
            Some((rate, amplitude)) => Self::from_values_with_tail(grid, values, rate, amplitude),
            None => Self::from_values(grid, values),
        }
    }

    fn assemble(grid: Arc<Grid>, values: Vec<f64>, tail: Tail) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidParameter(format!(
                "value count {} does not match grid size {}",
                values.len(),
                grid.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidParameter(format!(
                "profile values must be finite and nonnegative, found {v}"
            )));
        }
        let ln_values: Vec<f64> = values.iter().map(|&v| v.ln()).collect();
        let h = grid.log_step();
        let cell_slopes: Vec<f64> = (0..values.len() - 1)
            .map(|i| {
                let d = (ln_values[i + 1] - ln_values[i]) / h;
                if d.is_finite() {
                    d.abs()
                } else {
                    4.0
                }
            })
            .collect();
        let head_exp = {
            let d = (ln_values[1] - ln_values[0]) / h;
            if d.is_finite() {
                d
            } else {
                0.0
            }
        };
        Ok(Self {
            grid,
            values,
            ln_values,
            cell_slopes,
            head_exp,
            tail,
        })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn tail(&self) -> &Tail {
        &self.tail
    }

    /// Local power-law exponent of the extrapolation below the first node.
    pub fn head_exponent(&self) -> f64 {
        self.head_exp
    }

    /// Decay rate governing which e^(|q| x) weights are integrable:
    /// the tail rate, or +inf for profiles with no tail mass.
    pub fn integrability_rate(&self) -> f64 {
        if self.tail.amplitude_is_zero() {
            f64::INFINITY
        } else {
            self.tail.rate
        }
    }

    pub(crate) fn cell_slope(&self, cell: usize) -> f64 {
        self.cell_slopes[cell]
    }

    /// Profile value at any x > 0 (head extrapolation, grid interpolation,
    /// or tail extension).
    pub fn value_at(&self, x: f64) -> f64 {
        debug_assert!(x > 0.0 && x.is_finite());
        if x < self.grid.x_min() {
            let f0 = self.values[0];
            if f0 == 0.0 {
                return 0.0;
            }
            return f0 * (x / self.grid.x_min()).powf(self.head_exp);
        }
        if x > self.grid.x_max() {
            return self.tail.eval(x);
        }
        self.interp_grid(x)
    }

    fn interp_grid(&self, x: f64) -> f64 {
        let g = &self.grid;
        let n = g.len();
        let u = x.ln();
        let h = g.log_step();
        let cell = g.cell_of(x);
        let s = cell.saturating_sub(2).min(n - 6);
        let lnf = &self.ln_values[s..s + 6];
        if lnf.iter().all(|v| v.is_finite()) {
            // Barycentric Lagrange on the uniform 6-node stencil.
            const BW: [f64; 6] = [1.0, -5.0, 10.0, -10.0, 5.0, -1.0];
            let t = (u - g.log_nodes()[s]) / h;
            let mut num = 0.0;
            let mut den = 0.0;
            for (j, (&w, &v)) in BW.iter().zip(lnf).enumerate() {
                let d = t - j as f64;
                if d.abs() < 1e-9 {
                    return self.values[s + j];
                }
                let c = w / d;
                num += c * v;
                den += c;
            }
            (num / den).exp()
        } else {
            let t = ((u - g.log_nodes()[cell]) / h).clamp(0.0, 1.0);
            self.values[cell] * (1.0 - t) + self.values[cell + 1] * t
        }
    }

    /// ∫_0^∞ x^p e^(-q x) f(x) dx.
    pub fn integrate_power_exp(&self, p: f64, q: f64) -> Result<f64> {
        integrate::integral(self, &Weight::PowExp { p, q })
    }

    pub(crate) fn integral(&self, w: &Weight) -> Result<f64> {
        integrate::integral(self, w)
    }

    pub(crate) fn integral_range(&self, w: &Weight, lo: f64, hi: f64) -> Result<f64> {
        integrate::integral_range(self, w, lo, hi)
    }

    /// First moment ∫ x f dx.
    pub fn mass(&self) -> Result<f64> {
        self.integrate_power_exp(1.0, 0.0)
    }

    /// Moment M(γ) = ∫ x^γ f dx for γ >= 0.
    pub fn moment(&self, gamma: f64) -> Result<f64> {
        if !(gamma >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "moment order must be >= 0, got {gamma}"
            )));
        }
        self.integrate_power_exp(gamma, 0.0)
    }

    /// ∫_0^1 x^(-α) f dx for α in [0, 1), by closed-form integration of the
    /// piecewise power-law interpolant (exact against the singular weight).
    pub fn negative_moment(&self, alpha: f64) -> Result<f64> {
        if !(0.0..1.0).contains(&alpha) {
            return Err(Error::InvalidParameter(format!(
                "negative moment order must be in [0,1), got {alpha}"
            )));
        }
        let g = &self.grid;
        let h = g.log_step();
        let mut acc = Kahan::new();
        // Head [0, x_min] from the power-law extrapolation.
        let f0 = self.values[0];
        if f0 > 0.0 {
            let m = self.head_exp - alpha;
            if m <= -1.0 {
                return Err(Error::DivergentHead { exponent: m });
            }
            acc.add(f0 * g.x_min().powf(1.0 - alpha) / (m + 1.0));
        }
        let upper = 1.0f64.min(g.x_max());
        let mut cell = 0;
        while cell + 1 < g.len() && g.node(cell) < upper {
            let a = g.node(cell);
            let b = g.node(cell + 1).min(upper);
            if b <= a {
                break;
            }
            let fa = self.values[cell];
            let fb = self.values[cell + 1];
            if fa > 0.0 && fb > 0.0 {
                let s = (self.ln_values[cell + 1] - self.ln_values[cell]) / h;
                let m = s - alpha;
                let pref = fa * a.powf(-s);
                let v = if (m + 1.0).abs() < 1e-12 {
                    pref * (b / a).ln()
                } else {
                    pref * (b.powf(m + 1.0) - a.powf(m + 1.0)) / (m + 1.0)
                };
                acc.add(v);
            } else {
                // Linear chord; integrates exactly against x^(-α).
                let c1 = (fb - fa) / (g.node(cell + 1) - a);
                let c0 = fa - c1 * a;
                let v = c0 * (b.powf(1.0 - alpha) - a.powf(1.0 - alpha)) / (1.0 - alpha)
                    + c1 * (b.powf(2.0 - alpha) - a.powf(2.0 - alpha)) / (2.0 - alpha);
                acc.add(v);
            }
            cell += 1;
        }
        if upper < 1.0 {
            // Grid ends below 1: finish with the tail extension.
            acc.add(self.integral_range(
                &Weight::PowExp { p: -alpha, q: 0.0 },
                upper,
                1.0,
            )?);
        }
        Ok(acc.value())
    }

    /// Rescale to g(x) = a f(a x), resampled on the same grid. The tail
    /// transforms exactly: rate -> a * rate, anchored at a * f(a x_max).
    pub fn rescale(&self, a: f64) -> Result<Profile> {
        if !(a > 0.0) || !a.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "rescale factor must be positive, got {a}"
            )));
        }
        let values: Vec<f64> = self
            .grid
            .nodes()
            .iter()
            .map(|&x| a * self.value_at(a * x))
            .collect();
        let anchor_x = self.grid.x_max();
        let anchor_f = a * self.value_at(a * anchor_x);
        let tail = if self.tail.amplitude_is_zero() || anchor_f == 0.0 {
            Tail::zero(anchor_x)
        } else {
            Tail {
                rate: a * self.tail.rate,
                anchor_x,
                anchor_f,
            }
        };
        Self::assemble(self.grid.clone(), values, tail)
    }

    /// Move along the scaling family: b² f(b x), which preserves the first
    /// moment while shifting the decay rate by the factor b.
    pub fn mass_preserving_rescale(&self, b: f64) -> Result<Profile> {
        if !(b > 0.0) || !b.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "family move factor must be positive, got {b}"
            )));
        }
        let values: Vec<f64> = self
            .grid
            .nodes()
            .iter()
            .map(|&x| b * b * self.value_at(b * x))
            .collect();
        let anchor_x = self.grid.x_max();
        let anchor_f = b * b * self.value_at(b * anchor_x);
        let tail = if self.tail.amplitude_is_zero() || anchor_f == 0.0 {
            Tail::zero(anchor_x)
        } else {
            Tail {
                rate: b * self.tail.rate,
                anchor_x,
                anchor_f,
            }
        };
        Self::assemble(self.grid.clone(), values, tail)
    }

    /// Rescale values so that ∫ x f dx = 1.
    pub fn normalize_mass(&self) -> Result<Profile> {
        let m = self.mass()?;
        if !(m > 0.0) || !m.is_finite() {
            return Err(Error::ZeroMass);
        }
        self.scale_values(1.0 / m)
    }

    /// Pointwise scalar multiple c f.
    pub fn scale_values(&self, c: f64) -> Result<Profile> {
        if !(c > 0.0) || !c.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "scale factor must be positive, got {c}"
            )));
        }
        let values: Vec<f64> = self.values.iter().map(|v| v * c).collect();
        let tail = Tail {
            anchor_f: self.tail.anchor_f * c,
            ..self.tail
        };
        Self::assemble(self.grid.clone(), values, tail)
    }

    /// Free least-squares fit of ln f against x on the nodes inside
    /// [lo, hi]: f ≈ amplitude * e^(-rate x).
    pub fn fit_tail(&self, lo: f64, hi: f64) -> Result<TailFit> {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for (i, &x) in self.grid.nodes().iter().enumerate() {
            if x >= lo && x <= hi {
                if self.values[i] <= 0.0 {
                    return Err(Error::NonpositiveTailWindow { lo, hi });
                }
                xs.push(x);
                ys.push(self.ln_values[i]);
            }
        }
        if xs.len() < 3 {
            return Err(Error::InvalidParameter(format!(
                "tail fit window [{lo}, {hi}] contains fewer than 3 nodes"
            )));
        }
        let (slope, intercept) = least_squares_line(&xs, &ys);
        let mut ss = 0.0;
        for (x, y) in xs.iter().zip(&ys) {
            let r = y - (intercept + slope * x);
            ss += r * r;
        }
        Ok(TailFit {
            rate: -slope,
            amplitude: intercept.exp(),
            residual: (ss / xs.len() as f64).sqrt(),
        })
    }

    /// L1(x dx) distance ∫ x |f - g| dx between profiles on the same grid.
    pub fn l1_mass_distance(&self, other: &Profile) -> Result<f64> {
        if self.grid.as_ref() != other.grid.as_ref() {
            return Err(Error::InvalidParameter(
                "profiles live on different grids".into(),
            ));
        }
        let g = &self.grid;
        let mut acc = Kahan::new();
        for cell in 0..g.len() - 1 {
            let a = g.node(cell);
            let b = g.node(cell + 1);
            let slope = self.cell_slope(cell).max(other.cell_slope(cell)) + 1.0;
            let n = quad::panels_for((b / a).ln(), slope).max(2);
            acc.add(quad::gauss_log_panels(a, b, n, |x| {
                x * (self.value_at(x) - other.value_at(x)).abs()
            }));
        }
        // Tail sweep until both extensions are negligible.
        let mut lo = g.x_max();
        for _ in 0..14 {
            let hi = lo * 4.0;
            let n = quad::panels_for((hi / lo).ln(), 1.0 + self.tail.rate.max(other.tail.rate) * hi);
            let seg = quad::gauss_log_panels(lo, hi, n.min(64), |x| {
                x * (self.value_at(x) - other.value_at(x)).abs()
            });
            acc.add(seg);
            if seg.abs() <= 1e-14 * acc.value().abs().max(1e-300) {
                break;
            }
            lo = hi;
        }
        Ok(acc.value())
    }
}

fn auto_tail(grid: &Grid, values: &[f64]) -> Result<Tail> {
    let x_max = grid.x_max();
    let lo = x_max / 10.0;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (i, &x) in grid.nodes().iter().enumerate() {
        if x >= lo {
            if values.get(i).copied().unwrap_or(0.0) <= 0.0 {
                return Ok(Tail::zero(x_max));
            }
            xs.push(x);
            ys.push(values[i].ln());
        }
    }
    if xs.len() < 3 {
        return Ok(Tail::zero(x_max));
    }
    let (slope, _) = least_squares_line(&xs, &ys);
    let rate = -slope;
    if !(rate > 0.0) || !rate.is_finite() {
        return Ok(Tail::zero(x_max));
    }
    Ok(Tail {
        rate,
        anchor_x: x_max,
        anchor_f: *values.last().unwrap(),
    })
}

fn least_squares_line(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn grid() -> Arc<Grid> {
        Arc::new(Grid::default_profile())
    }

    fn exp_profile() -> Profile {
        Profile::sample(grid(), |x| (-x).exp(), Some((1.0, 1.0))).unwrap()
    }

    #[test]
    fn mass_of_exponential() {
        let p = exp_profile();
        assert_relative_eq!(p.mass().unwrap(), 1.0, max_relative = 1e-8);
        let double = Profile::sample(grid(), |x| 2.0 * (-x).exp(), Some((1.0, 2.0))).unwrap();
        assert_relative_eq!(double.mass().unwrap(), 2.0, max_relative = 1e-8);
        let n = double.normalize_mass().unwrap();
        assert_relative_eq!(n.mass().unwrap(), 1.0, max_relative = 1e-12);
    }

    #[test]
    fn mass_of_rescaled_exponential() {
        // a f(a x) with a = 2 has mass 1/2.
        let p = exp_profile().rescale(2.0).unwrap();
        assert_relative_eq!(p.mass().unwrap(), 0.5, max_relative = 1e-8);
        // count ∫ f is invariant under rescaling.
        let p3 = exp_profile().rescale(3.0).unwrap();
        assert_relative_eq!(p3.moment(0.0).unwrap(), 1.0, max_relative = 1e-7);
        // a = 1 is the identity.
        let p1 = exp_profile().rescale(1.0).unwrap();
        for (a, b) in p1.values().iter().zip(exp_profile().values()) {
            assert_relative_eq!(a, b, max_relative = 1e-12, epsilon = 1e-300);
        }
    }

    #[test]
    fn moments_against_gamma_function() {
        let p = exp_profile();
        assert_relative_eq!(p.moment(0.0).unwrap(), 1.0, max_relative = 1e-8);
        assert_relative_eq!(p.moment(5.0).unwrap(), 120.0, max_relative = 1e-8);
        // Γ(4/3), frozen from a 30-digit evaluation.
        assert_relative_eq!(
            p.moment(1.0 / 3.0).unwrap(),
            0.892979511569249211,
            max_relative = 1e-8
        );
    }

    #[test]
    fn negative_moment_values() {
        let p = exp_profile();
        // ∫_0^1 e^{-x} dx
        let v0 = p.negative_moment(0.0).unwrap();
        assert_relative_eq!(v0, 1.0 - (-1.0f64).exp(), max_relative = 2e-4);
        // ∫_0^1 x^{-1/3} e^{-x} dx, frozen from a 30-digit evaluation.
        let v = p.negative_moment(1.0 / 3.0).unwrap();
        assert_relative_eq!(v, 1.049688491642242, max_relative = 2e-4);
    }

    #[test]
    fn negative_moment_divergence() {
        // f ~ 1/x near zero: ∫ x^{-α} f diverges for α > 0.
        let p = Profile::sample(grid(), |x| (-x).exp() / x, None).unwrap();
        assert!(matches!(
            p.negative_moment(1.0 / 3.0),
            Err(Error::DivergentHead { .. })
        ));
        // but the plain mass is still finite
        assert!(p.mass().is_ok());
    }

    #[test]
    fn integrate_respects_tail_rate() {
        let p = exp_profile();
        let v = p.integrate_power_exp(1.0, -0.999).unwrap();
        assert!(v.is_finite() && v > 0.0);
        assert!(matches!(
            p.integrate_power_exp(1.0, -1.5),
            Err(Error::DivergentTail { .. })
        ));
    }

    #[test]
    fn fit_tail_recovers_exponentials() {
        let p = exp_profile();
        let fit = p.fit_tail(5.0, 20.0).unwrap();
        assert_relative_eq!(fit.rate, 1.0, max_relative = 1e-10);
        assert!(fit.residual < 1e-10);

        let p2 = Profile::sample(grid(), |x| 3.0 * (-2.0 * x).exp(), Some((2.0, 3.0))).unwrap();
        let fit2 = p2.fit_tail(5.0, 20.0).unwrap();
        assert_relative_eq!(fit2.rate, 2.0, max_relative = 1e-10);
        assert_relative_eq!(fit2.amplitude, 3.0, max_relative = 1e-8);
    }

    #[test]
    fn fit_tail_rejects_zeros() {
        let p = Profile::sample(grid(), |x| if x > 10.0 { 0.0 } else { 1.0 }, None).unwrap();
        assert!(matches!(
            p.fit_tail(5.0, 20.0),
            Err(Error::NonpositiveTailWindow { .. })
        ));
    }

    #[test]
    fn normalize_is_idempotent() {
        let p = Profile::sample(grid(), |x| 3.7 * (-1.3 * x).exp(), None).unwrap();
        let once = p.normalize_mass().unwrap();
        let twice = once.normalize_mass().unwrap();
        for (a, b) in once.values().iter().zip(twice.values()) {
            assert!((a - b).abs() <= 1e-14 * a.abs().max(1e-300));
        }
    }

    #[test]
    fn rescale_round_trip() {
        let p = exp_profile();
        let back = p.rescale(2.0).unwrap().rescale(0.5).unwrap();
        let g = p.grid();
        for (i, &x) in g.nodes().iter().enumerate() {
            if x > 1e-4 && x < 40.0 {
                let a = p.values()[i];
                let b = back.values()[i];
                assert!(
                    (a - b).abs() <= 1e-8 * a.abs(),
                    "round trip at x={x}: {a} vs {b}"
                );
            }
        }
    }

    #[test]
    fn rescale_moves_tail_rate() {
        let p = exp_profile().rescale(2.0).unwrap();
        assert_relative_eq!(p.tail().rate(), 2.0, max_relative = 1e-9);
    }

    #[test]
    fn l1_distance_of_rescale() {
        let a = exp_profile();
        let b = exp_profile();
        assert!(a.l1_mass_distance(&b).unwrap() < 1e-12);
    }

    #[test]
    fn zero_tail_profiles_integrate_any_growth() {
        let p = Profile::sample(grid(), |x| if x > 11.0 { 0.0 } else { 1.0 }, None).unwrap();
        assert_eq!(p.integrability_rate(), f64::INFINITY);
        let v = p.integrate_power_exp(0.0, -5.0);
        assert!(v.is_ok());
    }

    #[test]
    fn rejects_negative_values() {
        let mut vals: Vec<f64> = grid().nodes().iter().map(|&x| (-x).exp()).collect();
        vals[10] = -1.0;
        assert!(Profile::from_values(grid(), vals).is_err());
    }
}
