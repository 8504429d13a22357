//! Uniformly sampled real functions with piecewise-linear evaluation.

use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Anything that can be evaluated at a real abscissa.
pub trait RealFunction {
    fn value(&self, x: f64) -> f64;
}

impl<F: Fn(f64) -> f64> RealFunction for F {
    fn value(&self, x: f64) -> f64 {
        self(x)
    }
}

/// A closed interval `[x1, xN]` with `x1 < xN`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntervalSpec {
    x1: f64,
    xn: f64,
}

impl IntervalSpec {
    pub fn new(x1: f64, xn: f64) -> Result<Self> {
        if x1.is_finite() && xn.is_finite() && x1 < xn {
            Ok(IntervalSpec { x1, xn })
        } else {
            Err(Error::InvalidInterval { x1, xn })
        }
    }

    pub fn unit() -> Self {
        IntervalSpec { x1: 0.0, xn: 1.0 }
    }

    #[inline]
    pub fn x1(&self) -> f64 {
        self.x1
    }

    #[inline]
    pub fn xn(&self) -> f64 {
        self.xn
    }

    #[inline]
    pub fn length(&self) -> f64 {
        self.xn - self.x1
    }

    /// Maps `x` to `(x - x1)/(xN - x1)`.
    #[inline]
    pub fn normalize(&self, x: f64) -> f64 {
        (x - self.x1) / self.length()
    }

    #[inline]
    pub fn contains(&self, x: f64) -> bool {
        x >= self.x1 && x <= self.xn
    }
}

/// Samples of a function at `M >= 2` equally spaced nodes of an interval.
///
/// Evaluation between nodes is linear; evaluation at a node returns the
/// stored sample exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    interval: IntervalSpec,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(interval: IntervalSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::InvalidGrid(format!(
                "need at least 2 samples, got {}",
                values.len()
            )));
        }
        if let Some(j) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidGrid(format!("sample {j} is not finite")));
        }
        Ok(GridFunction { interval, values })
    }

    /// Samples `f` at `m` uniform nodes of `interval`.
    pub fn sample(interval: IntervalSpec, m: usize, f: impl RealFunction) -> Result<Self> {
        if m < 2 {
            return Err(Error::InvalidGrid(format!("need at least 2 samples, got {m}")));
        }
        let values = (0..m).map(|j| f.value(node_of(&interval, m, j))).collect();
        GridFunction::new(interval, values)
    }

    pub fn constant(interval: IntervalSpec, m: usize, c: f64) -> Result<Self> {
        GridFunction::new(interval, vec![c; m])
    }

    #[inline]
    pub fn interval(&self) -> IntervalSpec {
        self.interval
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.values.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn step(&self) -> f64 {
        self.interval.length() / (self.values.len() - 1) as f64
    }

    /// Abscissa of node `j`; the last node is exactly `xN`.
    #[inline]
    pub fn node(&self, j: usize) -> f64 {
        node_of(&self.interval, self.values.len(), j)
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.values.len()).map(move |j| self.node(j))
    }

    /// Fractional node position of `x`, snapped to an integer when within
    /// 1e-9 of one.
    pub fn position(&self, x: f64) -> f64 {
        let s = (x - self.interval.x1) / self.interval.length() * (self.values.len() - 1) as f64;
        let r = s.round();
        if (s - r).abs() <= 1e-9 {
            r
        } else {
            s
        }
    }

    /// Node index and fraction `(j, θ)` with `x = node(j) + θ·h`, `θ ∈ [0, 1)`
    /// except at the right end.
    #[inline]
    pub fn locate(&self, x: f64) -> (usize, f64) {
        let last = self.values.len() - 1;
        let s = self.position(x).clamp(0.0, last as f64);
        let j = (s.floor() as usize).min(last - 1);
        (j, s - j as f64)
    }

    /// Linear interpolation; arguments outside the interval are clamped.
    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        let (j, theta) = self.locate(x);
        self.eval_located(j, theta)
    }

    #[inline]
    pub fn eval_located(&self, j: usize, theta: f64) -> f64 {
        if theta == 0.0 {
            self.values[j]
        } else if theta == 1.0 {
            self.values[j + 1]
        } else {
            let a = self.values[j];
            a + theta * (self.values[j + 1] - a)
        }
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Grid L^p norm by the composite trapezoid rule applied to `|g|^p`.
    pub fn lp_norm(&self, p: f64) -> f64 {
        trapezoid(self.step(), self.values.iter().map(|v| v.abs().powf(p))).powf(1.0 / p)
    }

    /// Integral of the piecewise-linear interpolant over the whole interval.
    pub fn integral(&self) -> f64 {
        trapezoid(self.step(), self.values.iter().copied())
    }

    pub fn same_grid(&self, other: &GridFunction) -> bool {
        self.interval == other.interval && self.values.len() == other.values.len()
    }

    fn check_same_grid(&self, other: &GridFunction) -> Result<()> {
        if self.same_grid(other) {
            Ok(())
        } else {
            Err(Error::InvalidGrid(format!(
                "grid mismatch: {} samples on [{}, {}] vs {} samples on [{}, {}]",
                self.len(),
                self.interval.x1,
                self.interval.xn,
                other.len(),
                other.interval.x1,
                other.interval.xn
            )))
        }
    }

    /// Pointwise `a·self + b·other` on a shared grid.
    pub fn combine(&self, a: f64, other: &GridFunction, b: f64) -> Result<GridFunction> {
        self.check_same_grid(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(u, v)| a * u + b * v)
            .collect();
        GridFunction::new(self.interval, values)
    }

    pub fn sub(&self, other: &GridFunction) -> Result<GridFunction> {
        self.combine(1.0, other, -1.0)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<GridFunction> {
        GridFunction::new(self.interval, self.values.iter().map(|&v| f(v)).collect())
    }

    /// `max_j |self_j - other_j|`.
    pub fn sup_distance(&self, other: &GridFunction) -> Result<f64> {
        self.check_same_grid(other)?;
        Ok(sup_distance(&self.values, &other.values))
    }

    /// Resamples onto `m` uniform nodes of the same interval.
    pub fn resample(&self, m: usize) -> Result<GridFunction> {
        if m == self.len() {
            return Ok(self.clone());
        }
        GridFunction::sample(self.interval, m, |x| self.eval(x))
    }

    /// Two-column `x,value` CSV with a header line.
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.values.len() * 40);
        out.push_str("x,value\n");
        for (j, v) in self.values.iter().enumerate() {
            let _ = writeln!(out, "{},{}", self.node(j), v);
        }
        out
    }

    /// Parses the output of [`GridFunction::to_csv`]. The first and last `x`
    /// define the interval; the remaining abscissae must be uniform.
    pub fn from_csv(text: &str) -> Result<GridFunction> {
        let mut lines = text.lines();
        match lines.next().map(str::trim) {
            Some("x,value") => {}
            other => return Err(Error::Csv(format!("expected header `x,value`, got {other:?}"))),
        }
        let mut xs = Vec::new();
        let mut values = Vec::new();
        for (ln, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let mut cols = line.split(',');
            let (Some(x), Some(v), None) = (cols.next(), cols.next(), cols.next()) else {
                return Err(Error::Csv(format!("line {}: expected two columns", ln + 2)));
            };
            let parse = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Csv(format!("line {}: {e}", ln + 2)))
            };
            xs.push(parse(x)?);
            values.push(parse(v)?);
        }
        if xs.len() < 2 {
            return Err(Error::Csv("need at least two data rows".into()));
        }
        let interval = IntervalSpec::new(xs[0], xs[xs.len() - 1])?;
        let m = xs.len();
        let h = interval.length() / (m - 1) as f64;
        for (j, &x) in xs.iter().enumerate() {
            if (x - node_of(&interval, m, j)).abs() > 1e-9 * h.max(1e-300) {
                return Err(Error::Csv(format!("abscissa {x} at row {j} is not on a uniform grid")));
            }
        }
        GridFunction::new(interval, values)
    }
}

impl RealFunction for GridFunction {
    fn value(&self, x: f64) -> f64 {
        self.eval(x)
    }
}

#[inline]
pub(crate) fn node_of(interval: &IntervalSpec, m: usize, j: usize) -> f64 {
    if j + 1 == m {
        interval.xn
    } else {
        interval.x1 + interval.length() * (j as f64 / (m - 1) as f64)
    }
}

pub(crate) fn trapezoid(h: f64, samples: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut first = None;
    let mut last = 0.0;
    for v in samples {
        if first.is_none() {
            first = Some(v);
        }
        sum += v;
        last = v;
    }
    match first {
        Some(f) => h * (sum - 0.5 * (f + last)),
        None => 0.0,
    }
}

pub(crate) fn sup_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (u, v)| m.max((u - v).abs()))
}

/// Exact integrals of the piecewise-linear interpolant of a grid function.
#[derive(Debug, Clone)]
pub struct Antiderivative {
    grid: GridFunction,
    prefix: Vec<f64>,
}

impl Antiderivative {
    pub fn new(grid: &GridFunction) -> Self {
        let h = grid.step();
        let mut prefix = Vec::with_capacity(grid.len());
        let mut acc = 0.0;
        prefix.push(0.0);
        for w in grid.values().windows(2) {
            acc += 0.5 * h * (w[0] + w[1]);
            prefix.push(acc);
        }
        Antiderivative {
            grid: grid.clone(),
            prefix,
        }
    }

    /// `∫_{x1}^{x} g`.
    pub fn at(&self, x: f64) -> f64 {
        let (j, theta) = self.grid.locate(x);
        let h = self.grid.step();
        let a = self.grid.values()[j];
        let b = self.grid.values()[j + 1];
        self.prefix[j] + h * theta * (a + 0.5 * theta * (b - a))
    }

    /// `∫_{lo}^{hi} g`; both limits are clamped to the interval.
    ///
    /// Spans inside one or two cells are integrated locally, so narrow spans
    /// keep their relative accuracy.
    pub fn between(&self, lo: f64, hi: f64) -> f64 {
        let (ja, ta) = self.grid.locate(lo);
        let (jb, tb) = self.grid.locate(hi);
        if ja == jb {
            self.partial(ja, ta, tb)
        } else if ja < jb {
            let head = self.partial(ja, ta, 1.0);
            let tail = self.partial(jb, 0.0, tb);
            head + (self.prefix[jb] - self.prefix[ja + 1]) + tail
        } else {
            -self.between(hi, lo)
        }
    }

    fn partial(&self, j: usize, t0: f64, t1: f64) -> f64 {
        let v = self.grid.values();
        let (a, b) = (v[j], v[j + 1]);
        self.grid.step() * (t1 - t0) * (a + 0.5 * (t0 + t1) * (b - a))
    }

    pub fn grid(&self) -> &GridFunction {
        &self.grid
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn interval_validation() {
        assert!(IntervalSpec::new(1.0, 1.0).is_err());
        assert!(IntervalSpec::new(2.0, 1.0).is_err());
        assert!(IntervalSpec::new(0.0, f64::INFINITY).is_err());
    }

    #[test]
    fn rejects_short_or_nonfinite() {
        let i = IntervalSpec::unit();
        assert!(GridFunction::new(i, vec![1.0]).is_err());
        assert!(GridFunction::new(i, vec![1.0, f64::NAN]).is_err());
    }

    #[test]
    fn nodes_return_stored_values() {
        let i = IntervalSpec::new(0.1, 0.7).unwrap();
        let g = GridFunction::sample(i, 37, |x: f64| (13.0 * x).sin()).unwrap();
        assert_eq!(g.node(36), 0.7);
        for j in 0..g.len() {
            assert_eq!(g.eval(g.node(j)), g.values()[j]);
        }
    }

    #[test]
    fn linear_interpolation_between_nodes() {
        let g = GridFunction::new(IntervalSpec::unit(), vec![0.0, 2.0, 0.0]).unwrap();
        assert!((g.eval(0.25) - 1.0).abs() < 1e-15);
        assert!((g.eval(0.75) - 1.0).abs() < 1e-15);
        assert_eq!(g.eval(-1.0), 0.0);
    }

    #[test]
    fn lp_norm_of_identity() {
        let g = GridFunction::sample(IntervalSpec::unit(), 2001, |x: f64| x).unwrap();
        assert!((g.lp_norm(1.0) - 0.5).abs() < 1e-12);
        assert!((g.lp_norm(2.0) - (1.0f64 / 3.0).sqrt()).abs() < 1e-6);
    }

    #[test]
    fn antiderivative_matches_partial_trapezoid() {
        let g = GridFunction::sample(IntervalSpec::unit(), 11, |x: f64| x * x).unwrap();
        let anti = Antiderivative::new(&g);
        assert!((anti.at(1.0) - g.integral()).abs() < 1e-15);
        // Brute force: dense midpoint sum of the interpolant on [0.13, 0.58].
        let (lo, hi) = (0.13, 0.58);
        let k = 200_000;
        let dx = (hi - lo) / k as f64;
        let brute: f64 = (0..k).map(|i| g.eval(lo + (i as f64 + 0.5) * dx) * dx).sum();
        assert!((anti.between(lo, hi) - brute).abs() < 1e-9);
    }

    #[test]
    fn csv_rejects_bad_input() {
        assert!(GridFunction::from_csv("a,b\n0,1\n1,2\n").is_err());
        assert!(GridFunction::from_csv("x,value\n0,1\n").is_err());
        assert!(GridFunction::from_csv("x,value\n0,1\n0.3,1\n1,2\n").is_err());
    }

    proptest! {
        #[test]
        fn csv_round_trip_is_bit_exact(
            x1 in -10.0f64..10.0,
            len in 0.001f64..50.0,
            values in proptest::collection::vec(-1e6f64..1e6, 2..200),
        ) {
            let g = GridFunction::new(IntervalSpec::new(x1, x1 + len).unwrap(), values).unwrap();
            let back = GridFunction::from_csv(&g.to_csv()).unwrap();
            prop_assert_eq!(back.len(), g.len());
            for (a, b) in back.values().iter().zip(g.values()) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}
