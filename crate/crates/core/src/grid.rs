use crate::error::{Error, Result};

/// Uniform time grid `t_i = t0 + i * dt`, `i = 0..=n_steps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    t0: f64,
    horizon: f64,
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, horizon: f64, n_steps: usize) -> Result<Self> {
        if !(t0.is_finite() && horizon.is_finite()) {
            return Err(Error::Grid("endpoints must be finite".into()));
        }
        if t0 < 0.0 {
            return Err(Error::Grid(format!("t0 = {t0} must be >= 0")));
        }
        if horizon <= t0 {
            return Err(Error::Grid(format!("horizon {horizon} must exceed t0 = {t0}")));
        }
        if n_steps == 0 {
            return Err(Error::Grid("n_steps must be >= 1".into()));
        }
        Ok(Self { t0, horizon, n_steps })
    }

    /// Grid on `[0, horizon]`.
    pub fn unit(horizon: f64, n_steps: usize) -> Result<Self> {
        Self::new(0.0, horizon, n_steps)
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    /// Number of nodes, `n_steps + 1`.
    pub fn len(&self) -> usize {
        self.n_steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dt(&self) -> f64 {
        (self.horizon - self.t0) / self.n_steps as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        debug_assert!(i <= self.n_steps);
        if i == self.n_steps {
            self.horizon
        } else {
            self.t0 + (self.horizon - self.t0) * (i as f64 / self.n_steps as f64)
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.n_steps).map(move |i| self.node(i))
    }

    /// Index of the node equal to `t` (within a relative 1e-9 of a step), if any.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let u = (t - self.t0) / self.dt();
        let r = u.round();
        if (u - r).abs() <= 1e-9 && r >= 0.0 && r <= self.n_steps as f64 {
            Some(r as usize)
        } else {
            None
        }
    }

    pub fn contains(&self, t: f64) -> bool {
        let tol = 1e-12 * self.horizon.abs().max(1.0);
        t >= self.t0 - tol && t <= self.horizon + tol
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nodes_are_increasing_and_hit_the_horizon() {
        let g = TimeGrid::new(0.5, 2.0, 7).unwrap();
        let nodes: Vec<f64> = g.nodes().collect();
        assert_eq!(nodes.len(), 8);
        assert_eq!(nodes[0], 0.5);
        assert_eq!(nodes[7], 2.0);
        assert!(nodes.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(g.index_of(g.node(3)), Some(3));
        assert_eq!(g.index_of(0.5 + 0.5 * g.dt()), None);
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(TimeGrid::new(0.0, 1.0, 0).is_err());
        assert!(TimeGrid::new(1.0, 1.0, 4).is_err());
        assert!(TimeGrid::new(-0.1, 1.0, 4).is_err());
    }
}
