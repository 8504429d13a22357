//! α-fractal functions as fixed points of the Read-Bajraktarević operator
//!
//! `(Tg)(x) = f(x) + α_i(u_i⁻¹(x))·(g − b)(u_i⁻¹(x))` for `x ∈ u_i(I)`,
//!
//! sampled on a uniform grid that contains every partition node.

mod scaling;
mod solve;

pub use scaling::{ScalingFunction, ScalingVector};
pub use solve::{
    graph_points, lp_contraction_factor, rb_apply, solve_fixed_point, solve_lp_fixed_point,
    solve_with_base, RbOperator, Solution,
};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::germ::Germ;
use crate::grid::{GridFunction, IntervalSpec};
use crate::mkz::{quantum_mkz_grid, IntegralMkz, MkzConfig};
use crate::qcore::QParam;

/// Nodes `x_1 < x_2 < … < x_N`, `N >= 3`.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    nodes: Vec<f64>,
}

impl Partition {
    pub fn new(nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() < 3 {
            return Err(Error::InvalidPartition(format!(
                "need at least 3 nodes, got {}",
                nodes.len()
            )));
        }
        if nodes.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidPartition("nodes must be finite".into()));
        }
        if let Some(i) = nodes.windows(2).position(|w| w[0] >= w[1]) {
            return Err(Error::InvalidPartition(format!(
                "nodes must be strictly increasing: x_{} = {} >= x_{} = {}",
                i + 1,
                nodes[i],
                i + 2,
                nodes[i + 1]
            )));
        }
        Ok(Partition { nodes })
    }

    /// `intervals` equal subintervals of `[x1, xn]`.
    pub fn uniform(x1: f64, xn: f64, intervals: usize) -> Result<Self> {
        let interval = IntervalSpec::new(x1, xn)?;
        let nodes = (0..=intervals)
            .map(|i| crate::grid::node_of(&interval, intervals + 1, i))
            .collect();
        Partition::new(nodes)
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Number of subintervals `N - 1`.
    #[inline]
    pub fn intervals(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn interval(&self) -> IntervalSpec {
        IntervalSpec::new(self.nodes[0], self.nodes[self.nodes.len() - 1])
            .expect("validated partition")
    }

    pub fn is_uniform(&self) -> bool {
        let h = self.interval().length() / self.intervals() as f64;
        self.nodes
            .windows(2)
            .all(|w| ((w[1] - w[0]) - h).abs() <= 1e-12 * h)
    }

    /// Index `i` of the subinterval `[x_i, x_{i+1})` holding `x`; the last
    /// subinterval is closed.
    pub fn locate(&self, x: f64) -> usize {
        let last = self.intervals() - 1;
        // partition_point counts nodes <= x.
        let k = self.nodes.partition_point(|&node| node <= x);
        k.saturating_sub(1).min(last)
    }
}

/// Affine maps `u_i(x) = a_i x + b_i` with `u_i(x1) = x_i`, `u_i(xN) = x_{i+1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineMaps {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    interval: IntervalSpec,
    nodes: Vec<f64>,
}

impl AffineMaps {
    pub fn len(&self) -> usize {
        self.a.len()
    }

    pub fn is_empty(&self) -> bool {
        self.a.is_empty()
    }

    /// `u_i(x)`; the endpoints of `I` land exactly on the partition nodes.
    #[inline]
    pub fn map(&self, i: usize, x: f64) -> f64 {
        if x == self.interval.x1() {
            self.nodes[i]
        } else if x == self.interval.xn() {
            self.nodes[i + 1]
        } else {
            self.a[i] * x + self.b[i]
        }
    }

    /// `u_i⁻¹(x)`, clamped to `I`.
    #[inline]
    pub fn inverse(&self, i: usize, x: f64) -> f64 {
        if x == self.nodes[i] {
            self.interval.x1()
        } else if x == self.nodes[i + 1] {
            self.interval.xn()
        } else {
            let t = (x - self.nodes[i]) / (self.nodes[i + 1] - self.nodes[i]);
            (self.interval.x1() + t * self.interval.length()).clamp(self.interval.x1(), self.interval.xn())
        }
    }
}

pub fn build_maps(partition: &Partition) -> AffineMaps {
    let interval = partition.interval();
    let (x1, xn) = (interval.x1(), interval.xn());
    let len = interval.length();
    let nodes = partition.nodes();
    let (a, b) = nodes
        .windows(2)
        .map(|w| ((w[1] - w[0]) / len, (xn * w[0] - x1 * w[1]) / len))
        .unzip();
    AffineMaps {
        a,
        b,
        interval,
        nodes: nodes.to_vec(),
    }
}

/// The base function `b` subtracted inside the RB operator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BaseOperator {
    Quantum { n: u32, q: QParam },
    Classical { n: u32 },
    /// Integral MKZ operator, for the L^p setting.
    Integral { n: u32 },
}

impl BaseOperator {
    pub fn order(&self) -> u32 {
        match *self {
            BaseOperator::Quantum { n, .. } | BaseOperator::Classical { n } | BaseOperator::Integral { n } => n,
        }
    }

    pub fn q(&self) -> QParam {
        match *self {
            BaseOperator::Quantum { q, .. } => q,
            _ => QParam::ONE,
        }
    }

    pub fn with_order(self, n: u32) -> Self {
        match self {
            BaseOperator::Quantum { q, .. } => BaseOperator::Quantum { n, q },
            BaseOperator::Classical { .. } => BaseOperator::Classical { n },
            BaseOperator::Integral { .. } => BaseOperator::Integral { n },
        }
    }
}

impl std::fmt::Display for BaseOperator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BaseOperator::Quantum { n, q } => write!(f, "quantum(n={n}, q={q})"),
            BaseOperator::Classical { n } => write!(f, "classical(n={n})"),
            BaseOperator::Integral { n } => write!(f, "integral(n={n})"),
        }
    }
}

/// Smallest sample count `M` with `M - 1 >= 4374` that puts every partition
/// node on the grid.
pub fn default_grid_size(partition: &Partition) -> Result<usize> {
    grid_size_at_least(partition, 4375)
}

/// Smallest `M >= min` whose uniform grid contains every partition node.
pub fn grid_size_at_least(partition: &Partition, min: usize) -> Result<usize> {
    let cells = partition.intervals();
    let min_steps = min.max(2) - 1;
    if partition.is_uniform() {
        return Ok(min_steps.div_ceil(cells) * cells + 1);
    }
    (min_steps..min_steps.saturating_mul(64).max(min_steps + 1))
        .find(|&steps| nodes_on_grid(partition, steps + 1))
        .map(|steps| steps + 1)
        .ok_or_else(|| {
            Error::InvalidGrid(format!(
                "no grid of at least {min} samples contains every partition node"
            ))
        })
}

fn nodes_on_grid(partition: &Partition, m: usize) -> bool {
    let interval = partition.interval();
    let steps = (m - 1) as f64;
    partition.nodes().iter().all(|&x| {
        let s = interval.normalize(x) * steps;
        (s - s.round()).abs() <= 1e-9
    })
}

/// Everything that defines one α-fractal function.
#[derive(Debug, Clone)]
pub struct FractalSpec {
    pub germ: Germ,
    pub partition: Partition,
    pub alpha: ScalingVector,
    pub base: BaseOperator,
    pub grid_size: usize,
    pub tol: f64,
    pub max_iter: usize,
    /// Series truncation; `None` sizes the term cap from the grid.
    pub mkz: Option<MkzConfig>,
}

impl FractalSpec {
    pub const DEFAULT_TOL: f64 = 1e-10;
    pub const DEFAULT_MAX_ITER: usize = 10_000;

    pub fn new(
        germ: Germ,
        partition: Partition,
        alpha: ScalingVector,
        base: BaseOperator,
        grid_size: usize,
    ) -> Result<Self> {
        let spec = FractalSpec {
            germ,
            partition,
            alpha,
            base,
            grid_size,
            tol: Self::DEFAULT_TOL,
            max_iter: Self::DEFAULT_MAX_ITER,
            mkz: None,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }

    pub fn with_mkz(mut self, cfg: MkzConfig) -> Self {
        self.mkz = Some(cfg);
        self
    }

    pub fn with_germ(&self, germ: Germ) -> Self {
        FractalSpec { germ, ..self.clone() }
    }

    pub fn with_base(&self, base: BaseOperator) -> Self {
        FractalSpec { base, ..self.clone() }
    }

    pub fn with_alpha(&self, alpha: ScalingVector) -> Self {
        FractalSpec { alpha, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        let interval = self.partition.interval();
        if self.alpha.len() != self.partition.intervals() {
            return Err(Error::InvalidScaling(format!(
                "{} scaling functions for {} subintervals",
                self.alpha.len(),
                self.partition.intervals()
            )));
        }
        if self.alpha.interval() != interval {
            return Err(Error::InvalidScaling("scaling vector defined on a different interval".into()));
        }
        if let Germ::Tabulated(g) = &self.germ {
            if g.interval() != interval {
                return Err(Error::InvalidGrid("tabulated germ defined on a different interval".into()));
            }
        }
        if self.base.order() == 0 {
            return Err(Error::Domain("operator order n must be positive".into()));
        }
        if self.grid_size < 2 {
            return Err(Error::InvalidGrid(format!("grid size {} < 2", self.grid_size)));
        }
        if !nodes_on_grid(&self.partition, self.grid_size) {
            return Err(Error::InvalidGrid(format!(
                "grid of {} samples misses partition nodes; try {}",
                self.grid_size,
                grid_size_at_least(&self.partition, self.grid_size)
                    .map(|m| m.to_string())
                    .unwrap_or_else(|_| "a different size".into())
            )));
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::Domain(format!("tolerance {} must be positive", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::Domain("max_iter must be positive".into()));
        }
        Ok(())
    }

    #[inline]
    pub fn interval(&self) -> IntervalSpec {
        self.partition.interval()
    }

    pub fn mkz_config(&self) -> MkzConfig {
        self.mkz
            .unwrap_or_else(|| MkzConfig::for_grid(self.base.order(), self.grid_size))
    }

    /// The germ sampled on the solver grid.
    pub fn germ_grid(&self) -> Result<GridFunction> {
        self.germ.sample(self.interval(), self.grid_size)
    }

    /// The base function on the solver grid.
    pub fn compute_base(&self, germ_grid: &GridFunction) -> Result<GridFunction> {
        let cfg = self.mkz_config();
        let interval = self.interval();
        match self.base {
            BaseOperator::Quantum { n, q } => {
                quantum_mkz_grid(&self.germ, n, q, interval, self.grid_size, &cfg)
            }
            BaseOperator::Classical { n } => {
                quantum_mkz_grid(&self.germ, n, QParam::ONE, interval, self.grid_size, &cfg)
            }
            BaseOperator::Integral { n } => IntegralMkz::new(germ_grid).on_grid(n, &cfg),
        }
    }

    /// Base operator applied to an arbitrary grid function on the solver grid.
    pub fn apply_base(&self, g: &GridFunction) -> Result<GridFunction> {
        let cfg = self.mkz_config();
        match self.base {
            BaseOperator::Integral { n } => IntegralMkz::new(g).on_grid(n, &cfg),
            _ => {
                let interval = g.interval();
                let probe = g.clone();
                let values = (0..g.len())
                    .into_par_iter()
                    .map(|j| {
                        crate::mkz::eval_quantum_mkz(
                            &probe,
                            self.base.order(),
                            self.base.q(),
                            probe.node(j),
                            &interval,
                            &cfg,
                        )
                    })
                    .collect::<Result<Vec<f64>>>()?;
                GridFunction::new(interval, values)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn maps_for_thirds() {
        let p = Partition::new(vec![0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0]).unwrap();
        let m = build_maps(&p);
        for i in 0..3 {
            assert!((m.a[i] - 1.0 / 3.0).abs() < 1e-15);
            assert!((m.b[i] - i as f64 / 3.0).abs() < 1e-15);
            assert_eq!(m.map(i, 0.0), p.nodes()[i]);
            assert_eq!(m.map(i, 1.0), p.nodes()[i + 1]);
        }
    }

    #[test]
    fn maps_for_sevenths_and_general_interval() {
        let p = Partition::uniform(0.0, 1.0, 7).unwrap();
        let m = build_maps(&p);
        assert!(m.a.iter().all(|a| (a - 1.0 / 7.0).abs() < 1e-15));
        let p = Partition::new(vec![-1.0, 0.5, 1.0, 3.0]).unwrap();
        let m = build_maps(&p);
        for i in 0..3 {
            let lo = m.b[i] - m.a[i];
            let hi = m.a[i] * 3.0 + m.b[i];
            assert!((lo - p.nodes()[i]).abs() <= f64::EPSILON * 4.0);
            assert!((hi - p.nodes()[i + 1]).abs() <= f64::EPSILON * 4.0);
            let x = 0.3 * p.nodes()[i] + 0.7 * p.nodes()[i + 1];
            assert!((m.map(i, m.inverse(i, x)) - x).abs() < 1e-14);
        }
    }

    #[test]
    fn rejects_degenerate_partitions() {
        assert!(Partition::new(vec![0.0, 1.0]).is_err());
        assert!(Partition::new(vec![0.0, 0.6, 0.4, 1.0]).is_err());
        assert!(Partition::new(vec![0.0, 0.5, 0.5, 1.0]).is_err());
    }

    #[test]
    fn locate_is_left_closed() {
        let p = Partition::uniform(0.0, 1.0, 4).unwrap();
        assert_eq!(p.locate(0.0), 0);
        assert_eq!(p.locate(0.25), 1);
        assert_eq!(p.locate(0.2499), 0);
        assert_eq!(p.locate(0.75), 3);
        assert_eq!(p.locate(1.0), 3);
    }

    #[test]
    fn grid_sizes_contain_nodes() {
        let p8 = Partition::uniform(0.0, 1.0, 7).unwrap();
        assert_eq!(default_grid_size(&p8).unwrap(), 4376);
        let p4 = Partition::uniform(0.0, 1.0, 3).unwrap();
        assert_eq!(default_grid_size(&p4).unwrap(), 4375);
        let odd = Partition::new(vec![0.0, 0.25, 0.6, 1.0]).unwrap();
        let m = default_grid_size(&odd).unwrap();
        assert!(nodes_on_grid(&odd, m));
        assert_eq!((m - 1) % 20, 0);
    }

    #[test]
    fn spec_rejects_grid_missing_nodes() {
        let p = Partition::uniform(0.0, 1.0, 3).unwrap();
        let alpha = ScalingVector::zeros(3, p.interval()).unwrap();
        let base = BaseOperator::Classical { n: 3 };
        assert!(FractalSpec::new(Germ::power(1.0), p.clone(), alpha.clone(), base, 101).is_err());
        assert!(FractalSpec::new(Germ::power(1.0), p, alpha, base, 100).is_ok());
    }
}
