//! Quantitative checks: moduli of continuity, convergence-bound tables,
//! monotone sequences, L^p error tables and box-counting dimension.

use std::collections::VecDeque;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fractal::{
    graph_points, lp_contraction_factor, solve_fixed_point, solve_lp_fixed_point, BaseOperator,
    FractalSpec,
};
use crate::germ::Germ;
use crate::grid::{trapezoid, GridFunction, IntervalSpec};
use crate::qcore::{q_integer, QRule};
use crate::table::Table;

/// Slack added to every asserted right-hand side.
pub const ROW_SLACK: f64 = 1e-9;

/// Refinement factor of the grid on which ω of an analytic germ is taken.
pub const OMEGA_REFINE: usize = 10;

/// `ω(f, δ) = max |f(x) − f(y)|` over grid pairs with `|x − y| <= δ`.
pub fn modulus_of_continuity(f: &GridFunction, delta: f64) -> f64 {
    if delta.is_nan() || delta <= 0.0 || f.len() < 2 {
        return 0.0;
    }
    let span = ((delta / f.step()) + 1e-9).floor();
    let w = if span.is_finite() { (span as usize).min(f.len() - 1) } else { f.len() - 1 };
    if w == 0 {
        return 0.0;
    }
    let v = f.values();
    let mut hi: VecDeque<usize> = VecDeque::new();
    let mut lo: VecDeque<usize> = VecDeque::new();
    let mut best = 0.0f64;
    for j in 0..v.len() {
        while hi.back().is_some_and(|&k| v[k] <= v[j]) {
            hi.pop_back();
        }
        hi.push_back(j);
        while lo.back().is_some_and(|&k| v[k] >= v[j]) {
            lo.pop_back();
        }
        lo.push_back(j);
        let start = j.saturating_sub(w);
        while hi[0] < start {
            hi.pop_front();
        }
        while lo[0] < start {
            lo.pop_front();
        }
        best = best.max(v[hi[0]] - v[lo[0]]);
    }
    best
}

/// ω of an analytic germ, taken on a grid `OMEGA_REFINE` times finer than `m`.
pub fn germ_modulus(germ: &Germ, interval: IntervalSpec, m: usize, delta: f64) -> Result<f64> {
    let fine = germ.sample(interval, refined(m))?;
    Ok(modulus_of_continuity(&fine, delta))
}

/// ω of the germ's derivative on the refined grid.
pub fn derivative_modulus(germ: &Germ, interval: IntervalSpec, m: usize, delta: f64) -> Result<f64> {
    let fine = germ.sample_derivative(interval, refined(m))?;
    Ok(modulus_of_continuity(&fine, delta))
}

fn refined(m: usize) -> usize {
    (m.max(2) - 1) * OMEGA_REFINE + 1
}

/// `ω_{1,p}(f, t) = sup_{0<h<=t} ‖f(·+h) − f‖_{p,[x1, xN−h]}` over grid shifts.
pub fn lp_modulus(f: &GridFunction, p: f64, t: f64) -> Result<f64> {
    if !(p.is_finite() && p >= 1.0) {
        return Err(Error::InvalidExponent(p));
    }
    let h = f.step();
    let shifts = ((t / h) + 1e-9).floor();
    if shifts.is_nan() || shifts < 1.0 {
        return Ok(0.0);
    }
    let shifts = (shifts as usize).min(f.len() - 1);
    let v = f.values();
    Ok((1..=shifts)
        .into_par_iter()
        .map(|k| trapezoid(h, (0..v.len() - k).map(|j| (v[j + k] - v[j]).abs().powf(p))).powf(1.0 / p))
        .reduce(|| 0.0, f64::max))
}

/// Least-squares slope of `y` against `x`.
pub fn least_squares_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let (sx, sy) = points.iter().fold((0.0, 0.0), |(a, b), &(x, y)| (a + x, b + y));
    let (mx, my) = (sx / n, sy / n);
    let (sxy, sxx) = points
        .iter()
        .fold((0.0, 0.0), |(a, b), &(x, y)| (a + (x - mx) * (y - my), b + (x - mx) * (x - mx)));
    sxy / sxx
}

/// One line of a convergence table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceRow {
    pub n: u32,
    pub q_n: f64,
    pub sup_error: f64,
    pub bound: f64,
    pub satisfied: bool,
}

impl ConvergenceRow {
    fn new(n: u32, q_n: f64, sup_error: f64, bound: f64) -> Self {
        ConvergenceRow {
            n,
            q_n,
            sup_error,
            bound,
            satisfied: sup_error <= bound + ROW_SLACK,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub rows: Vec<ConvergenceRow>,
}

impl ConvergenceReport {
    pub fn all_satisfied(&self) -> bool {
        self.rows.iter().all(|r| r.satisfied)
    }

    pub fn failures(&self) -> Vec<u32> {
        self.rows.iter().filter(|r| !r.satisfied).map(|r| r.n).collect()
    }

    /// Whether the last row's error is below the first row's.
    pub fn decreasing_trend(&self) -> bool {
        match (self.rows.first(), self.rows.last()) {
            (Some(a), Some(b)) => self.rows.len() > 1 && b.sup_error < a.sup_error,
            _ => false,
        }
    }

    /// Slope of `log sup_error` against `log n`.
    pub fn rate_exponent(&self) -> f64 {
        let pts: Vec<(f64, f64)> = self
            .rows
            .iter()
            .filter(|r| r.sup_error > 0.0)
            .map(|r| (f64::from(r.n).ln(), r.sup_error.ln()))
            .collect();
        if pts.len() < 2 {
            return f64::NAN;
        }
        least_squares_slope(&pts)
    }

    pub fn to_csv(&self) -> String {
        let mut t = Table::new(&["n", "q_n", "sup_error", "bound", "satisfied"]);
        for r in &self.rows {
            t.push([
                r.n.to_string(),
                r.q_n.to_string(),
                r.sup_error.to_string(),
                r.bound.to_string(),
                r.satisfied.to_string(),
            ]);
        }
        t.to_csv()
    }
}

/// Which uniform-error theorem a table is checked against.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UniformBound {
    /// Quantum base with `q = q_n`: `(5/2) ω(f, 1/√[n]_{q_n}) r`, `n >= 3`.
    Quantum(QRule),
    /// Classical base: `(31/27) ω(f, 1/√n) r`.
    Classical,
}

/// `r = ‖α‖/(1 − ‖α‖)`.
fn amplification(spec: &FractalSpec) -> Result<f64> {
    let a = spec.alpha.norm();
    if a >= 1.0 {
        return Err(Error::NonContraction(a));
    }
    Ok(a / (1.0 - a))
}

fn solve_rows(
    spec: &FractalSpec,
    ns: &[u32],
    row: impl Fn(u32) -> Result<(BaseOperator, f64)> + Sync,
) -> Result<ConvergenceReport> {
    let rows = ns
        .par_iter()
        .map(|&n| {
            let (base, bound) = row(n)?;
            let s = solve_fixed_point(&spec.with_base(base))?;
            Ok(ConvergenceRow::new(n, base.q().get(), s.sup_error(), bound))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ConvergenceReport { rows })
}

/// Solves `f^α_n` for every `n` and checks the uniform error bound.
pub fn check_uniform_bound(spec: &FractalSpec, family: UniformBound, ns: &[u32]) -> Result<ConvergenceReport> {
    let r = amplification(spec)?;
    let interval = spec.interval();
    let m = spec.grid_size;
    solve_rows(spec, ns, |n| match family {
        UniformBound::Quantum(rule) => {
            if n < 3 {
                return Err(Error::Domain(format!("the quantum bound needs n >= 3, got {n}")));
            }
            let q = rule.at(n);
            let delta = 1.0 / q_integer(u64::from(n), q).sqrt();
            let w = germ_modulus(&spec.germ, interval, m, delta)?;
            Ok((BaseOperator::Quantum { n, q }, 2.5 * w * r))
        }
        UniformBound::Classical => {
            check_order(n)?;
            let w = germ_modulus(&spec.germ, interval, m, 1.0 / f64::from(n).sqrt())?;
            Ok((BaseOperator::Classical { n }, 31.0 / 27.0 * w * r))
        }
    })
}

fn check_order(n: u32) -> Result<()> {
    if n == 0 {
        Err(Error::Domain("operator order n must be positive".into()))
    } else {
        Ok(())
    }
}

/// Smoothness assumption behind a derivative-based bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DerivativeBound {
    /// `(2(2+3√3)/(27√n)) ω(f′, 1/√n) r`.
    Modulus,
    /// `f′ ∈ Lip_A β`: `(2(2+3√3)/(27√n)) A n^{−(β+1)/2} r`.
    Holder { beta: f64, a: f64 },
}

/// `2(2 + 3√3)/27`.
pub fn c1_constant() -> f64 {
    2.0 * (2.0 + 3.0 * 3f64.sqrt()) / 27.0
}

/// Derivative-based bounds for classical-base fractal functions of an analytic germ.
pub fn check_c1_bounds(spec: &FractalSpec, variant: DerivativeBound, ns: &[u32]) -> Result<ConvergenceReport> {
    if !spec.germ.has_derivative() {
        return Err(Error::MissingDerivative(spec.germ.name()));
    }
    if let DerivativeBound::Holder { beta, a } = variant {
        if !(beta > 0.0 && beta <= 1.0) || a.is_nan() || a < 0.0 {
            return Err(Error::Domain(format!("need 0 < beta <= 1 and A >= 0, got beta = {beta}, A = {a}")));
        }
    }
    let r = amplification(spec)?;
    let interval = spec.interval();
    let m = spec.grid_size;
    solve_rows(spec, ns, |n| {
        check_order(n)?;
        let root = f64::from(n).sqrt();
        let factor = match variant {
            DerivativeBound::Modulus => derivative_modulus(&spec.germ, interval, m, 1.0 / root)?,
            DerivativeBound::Holder { beta, a } => a * f64::from(n).powf(-(beta + 1.0) / 2.0),
        };
        Ok((BaseOperator::Classical { n }, c1_constant() / root * factor * r))
    })
}

/// Consecutive-order comparison in a monotone-sequence check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonotoneStep {
    pub n: u32,
    /// `max_x (f_{n+1} − f_n)(x)`.
    pub max_increase: f64,
    /// `max_x (f_n − f_{n+1})(x)`.
    pub max_decrease: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonotoneReport {
    pub steps: Vec<MonotoneStep>,
    /// `max_{n,x} (f^α_n − f)(x)`.
    pub envelope_max: f64,
    /// `min_{n,x} (f^α_n − f)(x)`.
    pub envelope_min: f64,
}

impl MonotoneReport {
    /// `f_{n+1} <= f_n + 1e-9` everywhere.
    pub fn non_increasing(&self) -> bool {
        self.steps.iter().all(|s| s.max_increase <= ROW_SLACK)
    }

    pub fn non_decreasing(&self) -> bool {
        self.steps.iter().all(|s| s.max_decrease <= ROW_SLACK)
    }

    /// `f^α_n <= f` everywhere, the direction that holds when `M_n f >= f`.
    pub fn envelope_below_germ(&self) -> bool {
        self.envelope_max <= ROW_SLACK
    }

    pub fn to_csv(&self) -> String {
        let mut t = Table::new(&["n", "max_increase", "max_decrease", "non_increasing"]);
        for s in &self.steps {
            t.push([
                s.n.to_string(),
                s.max_increase.to_string(),
                s.max_decrease.to_string(),
                (s.max_increase <= ROW_SLACK).to_string(),
            ]);
        }
        t.note("envelope_max", self.envelope_max);
        t.note("envelope_min", self.envelope_min);
        t.note("envelope_below_germ", self.envelope_below_germ());
        t.to_csv()
    }
}

/// Solves `f^α_n` over consecutive `n` for a convex germ and non-negative `α`
/// and compares neighbouring orders and the envelope against `f`.
pub fn monotone_sequence_check(spec: &FractalSpec, ns: &[u32]) -> Result<MonotoneReport> {
    let f = spec.germ_grid()?;
    let v = f.values();
    if let Some(j) = (1..v.len().saturating_sub(1)).find(|&j| v[j - 1] - 2.0 * v[j] + v[j + 1] < -ROW_SLACK) {
        return Err(Error::Precondition(format!("germ is not convex near x = {}", f.node(j))));
    }
    for i in 0..spec.alpha.len() {
        if let Some(x) = f.nodes().find(|&x| spec.alpha.eval(i, x) < 0.0) {
            return Err(Error::Precondition(format!("alpha_{} is negative at x = {x}", i + 1)));
        }
    }
    if ns.windows(2).any(|w| w[1] != w[0] + 1) {
        return Err(Error::Domain("orders must be consecutive".into()));
    }
    let sols = ns
        .par_iter()
        .map(|&n| {
            check_order(n)?;
            solve_fixed_point(&spec.with_base(spec.base.with_order(n))).map(|s| s.values)
        })
        .collect::<Result<Vec<_>>>()?;
    let steps = ns
        .iter()
        .zip(sols.windows(2))
        .map(|(&n, w)| {
            let (inc, dec) = w[1]
                .values()
                .iter()
                .zip(w[0].values())
                .fold((f64::NEG_INFINITY, f64::NEG_INFINITY), |(i, d), (b, a)| (i.max(b - a), d.max(a - b)));
            MonotoneStep {
                n,
                max_increase: inc,
                max_decrease: dec,
            }
        })
        .collect();
    let (envelope_min, envelope_max) = sols.iter().flat_map(|g| g.values().iter().zip(v)).fold(
        (f64::INFINITY, f64::NEG_INFINITY),
        |(lo, hi), (g, f)| (lo.min(g - f), hi.max(g - f)),
    );
    Ok(MonotoneReport {
        steps,
        envelope_max,
        envelope_min,
    })
}

/// Box counts over a dyadic mesh and the fitted slope.
#[derive(Debug, Clone, PartialEq)]
pub struct DimensionEstimate {
    /// Decreasing box sizes.
    pub scales: Vec<f64>,
    pub counts: Vec<usize>,
    pub slope: f64,
    /// `(lower, upper)` from the dimension theorem when its hypotheses hold.
    pub theorem_bounds: Option<(f64, f64)>,
}

impl DimensionEstimate {
    /// Whether the slope lands within `[lower − slack, upper + slack]`.
    pub fn within_bounds(&self, slack: f64) -> Option<bool> {
        self.theorem_bounds
            .map(|(lo, hi)| self.slope >= lo - slack && self.slope <= hi + slack)
    }

    pub fn to_csv(&self) -> String {
        let mut t = Table::new(&["epsilon", "count"]);
        for (e, c) in self.scales.iter().zip(&self.counts) {
            t.push([e.to_string(), c.to_string()]);
        }
        t.note("slope", self.slope);
        if let Some((lo, hi)) = self.theorem_bounds {
            t.note("theorem_lower", lo);
            t.note("theorem_upper", hi);
        }
        t.to_csv()
    }
}

/// `ε_j = 2^{−j}(xN − x1)`, `j = 3..=13`.
pub fn default_scales(interval: IntervalSpec) -> Vec<f64> {
    (3..=13).map(|j| interval.length() * 0.5f64.powi(j)).collect()
}

/// Number of `ε`-boxes of the mesh anchored at `(x1, min y)` met by the graph.
///
/// Each mesh column contributes the full range of rows between its lowest
/// and highest point, which is exact for the graph of a continuous function.
pub fn box_count(points: &[(f64, f64)], interval: IntervalSpec, eps: f64) -> usize {
    let y0 = points.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let cols = ((interval.length() / eps) - 1e-9).ceil().max(1.0) as usize;
    let mut lo = vec![i64::MAX; cols];
    let mut hi = vec![i64::MIN; cols];
    for &(x, y) in points {
        let c = (((x - interval.x1()) / eps).floor().max(0.0) as usize).min(cols - 1);
        let r = ((y - y0) / eps).floor() as i64;
        lo[c] = lo[c].min(r);
        hi[c] = hi[c].max(r);
    }
    lo.iter()
        .zip(&hi)
        .filter(|(l, _)| **l != i64::MAX)
        .map(|(l, h)| (h - l + 1) as usize)
        .sum()
}

/// Box-counting estimate over the given scales, without theorem bounds.
pub fn box_dimension(points: &[(f64, f64)], interval: IntervalSpec, scales: &[f64]) -> Result<DimensionEstimate> {
    if scales.len() < 5 {
        return Err(Error::Precondition(format!("need at least 5 scales, got {}", scales.len())));
    }
    if scales.iter().any(|&e| !(e > 0.0 && e.is_finite())) || scales.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Precondition("scales must be positive and strictly decreasing".into()));
    }
    if points.is_empty() || points.iter().any(|p| !p.0.is_finite() || !p.1.is_finite()) {
        return Err(Error::Precondition("graph points must be finite and non-empty".into()));
    }
    let counts: Vec<usize> = scales.par_iter().map(|&e| box_count(points, interval, e)).collect();
    let pts: Vec<(f64, f64)> = scales
        .iter()
        .zip(&counts)
        .map(|(e, &c)| ((1.0 / e).ln(), (c as f64).ln()))
        .collect();
    Ok(DimensionEstimate {
        scales: scales.to_vec(),
        counts,
        slope: least_squares_slope(&pts),
        theorem_bounds: None,
    })
}

/// Dimension bounds for constant `α` on a uniform partition and a germ in
/// `Lip β`, with logarithms taken in base "number of maps".
///
/// `Ok(None)` when `α` is not constant or the partition is not uniform.
pub fn theorem_dimension_bounds(spec: &FractalSpec, beta: f64) -> Result<Option<(f64, f64)>> {
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::Domain(format!("Hölder exponent must lie in (0, 1], got {beta}")));
    }
    let nodes = spec.partition.nodes();
    let pts: Vec<(f64, f64)> = nodes.iter().map(|&x| (x, spec.germ.eval(x))).collect();
    let (x0, y0) = pts[0];
    let (x1, y1) = pts[pts.len() - 1];
    let scale = (x1 - x0).abs().max((y1 - y0).abs()).max(1.0);
    let collinear = pts
        .iter()
        .all(|&(x, y)| ((x1 - x0) * (y - y0) - (y1 - y0) * (x - x0)).abs() <= 1e-12 * scale * scale);
    if collinear {
        return Err(Error::Collinear);
    }
    let Some(alpha) = spec.alpha.as_constants() else {
        return Ok(None);
    };
    if !spec.partition.is_uniform() {
        return Ok(None);
    }
    let maps = alpha.len() as f64;
    let gamma: f64 = alpha.iter().map(|a| a.abs()).sum();
    if gamma <= 1.0 {
        return Ok(Some((1.0, 2.0 - beta)));
    }
    let log = gamma.ln() / maps.ln();
    Ok(Some(if beta == 1.0 {
        (1.0 + log, 1.0 + log)
    } else if gamma * maps.powf(beta - 1.0) <= 1.0 {
        (1.0, 2.0 - beta + log)
    } else {
        (1.0, 1.0 + log)
    }))
}

/// Solves `spec`, exports at least `min_points` graph points and estimates
/// the box dimension over [`default_scales`].
pub fn dimension_experiment(spec: &FractalSpec, beta: f64, min_points: usize) -> Result<DimensionEstimate> {
    let bounds = theorem_dimension_bounds(spec, beta)?;
    let s = solve_fixed_point(spec)?;
    let pts = graph_points(&s, spec, min_points)?;
    let mut est = box_dimension(&pts, spec.interval(), &default_scales(spec.interval()))?;
    est.theorem_bounds = bounds;
    Ok(est)
}

/// One line of an L^p error table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LpRow {
    pub n: u32,
    pub p: f64,
    pub lp_error: f64,
    /// `Λ/(1 − Λ) ‖f − M̂_n f‖_p`.
    pub rhs_bound: f64,
    pub satisfied: bool,
    /// `ω_{1,p}(f, 1/√n)`, reported only.
    pub omega_1p: f64,
}

pub fn lp_table_csv(rows: &[LpRow]) -> String {
    let mut t = Table::new(&["n", "p", "lp_error", "rhs_bound", "satisfied", "omega_1p"]);
    for r in rows {
        t.push([
            r.n.to_string(),
            r.p.to_string(),
            r.lp_error.to_string(),
            r.rhs_bound.to_string(),
            r.satisfied.to_string(),
            r.omega_1p.to_string(),
        ]);
    }
    t.to_csv()
}

/// L^p fixed points with the integral base for every `n`, checked against
/// `‖f^α_n − f‖_p <= Λ/(1 − Λ) ‖f − M̂_n f‖_p`.
pub fn lp_error_check(spec: &FractalSpec, p: f64, ns: &[u32]) -> Result<Vec<LpRow>> {
    let lambda = lp_contraction_factor(spec, p)?;
    if lambda >= 1.0 {
        return Err(Error::NonContraction(lambda));
    }
    let f = spec.germ_grid()?;
    ns.par_iter()
        .map(|&n| {
            check_order(n)?;
            let s = solve_lp_fixed_point(&spec.with_base(BaseOperator::Integral { n }), p)?;
            let lp_error = s.values.sub(&s.germ)?.lp_norm(p);
            let rhs_bound = lambda / (1.0 - lambda) * s.germ.sub(&s.base)?.lp_norm(p);
            Ok(LpRow {
                n,
                p,
                lp_error,
                rhs_bound,
                satisfied: lp_error <= rhs_bound + ROW_SLACK,
                omega_1p: lp_modulus(&f, p, 1.0 / f64::from(n).sqrt())?,
            })
        })
        .collect()
}
