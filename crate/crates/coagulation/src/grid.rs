//! Geometric size grids.

use crate::error::{Error, Result};

/// A geometric grid of particle sizes: `nodes[i] = x_min * ratio^i`.
///
/// The grid carries the node positions and their logarithms; all quadrature
/// routines work in u = ln x where the spacing is uniform.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    nodes: Vec<f64>,
    log_nodes: Vec<f64>,
    step: f64,
}

impl Grid {
    /// Geometric grid with `count` nodes from `x_min` to `x_max` inclusive.
    pub fn geometric(x_min: f64, x_max: f64, count: usize) -> Result<Self> {
        if !(x_min > 0.0) || !(x_max > x_min) {
            return Err(Error::InvalidParameter(format!(
                "grid bounds must satisfy 0 < x_min < x_max, got [{x_min}, {x_max}]"
            )));
        }
        if count < 8 {
            return Err(Error::InvalidParameter(format!(
                "grid needs at least 8 nodes, got {count}"
            )));
        }
        let u0 = x_min.ln();
        let u1 = x_max.ln();
        let step = (u1 - u0) / (count - 1) as f64;
        let log_nodes: Vec<f64> = (0..count)
            .map(|i| {
                let t = i as f64 / (count - 1) as f64;
                u0 + (u1 - u0) * t
            })
            .collect();
        let nodes = log_nodes.iter().map(|u| u.exp()).collect();
        Ok(Self {
            nodes,
            log_nodes,
            step,
        })
    }

    /// Default grid for self-similar profiles: 512 nodes on [1e-6, 80].
    ///
    /// Resolves both the power-law behaviour near zero and the exponential
    /// tail out to where mass-one profiles are below 1e-34.
    pub fn default_profile() -> Self {
        Self::geometric(1e-6, 80.0, 512).expect("default grid parameters are valid")
    }

    /// Default grid for the time-dependent solver: wider and finer, since the
    /// bulk of the distribution travels to sizes ~ t.
    pub fn default_dynamics() -> Self {
        Self::geometric(1e-5, 2e4, 1024).expect("default grid parameters are valid")
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn log_nodes(&self) -> &[f64] {
        &self.log_nodes
    }

    pub fn node(&self, i: usize) -> f64 {
        self.nodes[i]
    }

    pub fn x_min(&self) -> f64 {
        self.nodes[0]
    }

    pub fn x_max(&self) -> f64 {
        *self.nodes.last().unwrap()
    }

    /// Uniform spacing in u = ln x.
    pub fn log_step(&self) -> f64 {
        self.step
    }

    /// Index of the cell [x_i, x_{i+1}] containing x, clamped to valid cells.
    pub fn cell_of(&self, x: f64) -> usize {
        let u = x.ln();
        let raw = ((u - self.log_nodes[0]) / self.step).floor() as isize;
        raw.clamp(0, self.nodes.len() as isize - 2) as usize
    }

    /// Largest node index with node <= x (None if x < x_min).
    pub fn node_at_or_below(&self, x: f64) -> Option<usize> {
        if x < self.nodes[0] {
            return None;
        }
        let mut i = self.cell_of(x);
        while i + 1 < self.nodes.len() && self.nodes[i + 1] <= x {
            i += 1;
        }
        Some(i)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn geometric_spacing_is_uniform_in_log() {
        let g = Grid::geometric(1e-6, 80.0, 512).unwrap();
        assert_eq!(g.len(), 512);
        assert_eq!(g.x_min(), 1e-6);
        assert_eq!(g.x_max(), 80.0);
        let r0 = g.node(1) / g.node(0);
        for i in 0..g.len() - 1 {
            let r = g.node(i + 1) / g.node(i);
            assert!(
                (r / r0 - 1.0).abs() < 1e-12,
                "ratio drift at {i}: {r} vs {r0}"
            );
        }
    }

    #[test]
    fn cell_lookup() {
        let g = Grid::geometric(1.0, 16.0, 9).unwrap();
        assert_eq!(g.cell_of(1.0), 0);
        assert_eq!(g.cell_of(1.5), 1);
        assert_eq!(g.cell_of(100.0), 7);
        assert_eq!(g.node_at_or_below(0.5), None);
        assert_eq!(g.node_at_or_below(2.0), Some(2));
    }

    #[test]
    fn rejects_bad_bounds() {
        assert!(Grid::geometric(-1.0, 2.0, 32).is_err());
        assert!(Grid::geometric(2.0, 1.0, 32).is_err());
        assert!(Grid::geometric(1.0, 2.0, 3).is_err());
    }
}
