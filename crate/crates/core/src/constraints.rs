//! Scaling-function brackets that make α-fractal functions respect shape
//! constraints: positivity, one-sided bounds `f^α >= g` and the ordering
//! `f^α >= g^α`.
//!
//! All extrema come from an exhaustive scan of the solver grid, so they are
//! exact for the grid representation and may miss true extrema by
//! `O(h)` (first order) between nodes.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::fractal::{build_maps, AffineMaps, FractalSpec, ScalingVector};
use crate::grid::GridFunction;

/// Brackets are intersected with `(-1 + CLAMP, 1 - CLAMP)`.
pub const CLAMP: f64 = 1e-6;

/// Grid extrema entering the bracket formulas.
#[derive(Debug, Clone, PartialEq)]
pub struct Extrema {
    /// `min f∘u_i` per subinterval.
    pub phi: Vec<f64>,
    /// `max f∘u_i` per subinterval.
    pub big_phi: Vec<f64>,
    /// `min b` over the grid.
    pub base_min: f64,
    /// `max b` over the grid.
    pub base_max: f64,
    /// Grid step; true extrema may differ from the grid ones between nodes.
    pub resolution: f64,
}

pub fn extrema(f: &GridFunction, maps: &AffineMaps, base: &GridFunction) -> Result<Extrema> {
    if !f.same_grid(base) {
        return Err(Error::InvalidGrid("germ and base grids differ".into()));
    }
    let interval = f.interval();
    let mut phi = Vec::with_capacity(maps.len());
    let mut big_phi = Vec::with_capacity(maps.len());
    for i in 0..maps.len() {
        let lo = f.position(maps.map(i, interval.x1()));
        let hi = f.position(maps.map(i, interval.xn()));
        let (mut mn, mut mx) = (f64::INFINITY, f64::NEG_INFINITY);
        let first = lo.ceil() as usize;
        let last = (hi.floor() as usize).min(f.len() - 1);
        for &v in &f.values()[first..=last] {
            mn = mn.min(v);
            mx = mx.max(v);
        }
        // Subinterval ends that fall between nodes.
        for x in [maps.map(i, interval.x1()), maps.map(i, interval.xn())] {
            let v = f.eval(x);
            mn = mn.min(v);
            mx = mx.max(v);
        }
        phi.push(mn);
        big_phi.push(mx);
    }
    Ok(Extrema {
        phi,
        big_phi,
        base_min: base.min(),
        base_max: base.max(),
        resolution: f.step(),
    })
}

/// Per-subinterval admissible range `lo_i <= α_i(x) <= hi_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalBounds {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    /// `(k, n)` for brackets from a double sequence.
    pub tag: Option<(u32, u32)>,
}

impl IntervalBounds {
    fn clamped(lo: Vec<f64>, hi: Vec<f64>) -> Self {
        let c = |v: f64| v.clamp(-1.0 + CLAMP, 1.0 - CLAMP);
        IntervalBounds {
            lo: lo.into_iter().map(c).collect(),
            hi: hi.into_iter().map(c).collect(),
            tag: None,
        }
    }

    pub fn len(&self) -> usize {
        self.lo.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lo.is_empty()
    }

    pub fn feasible(&self, i: usize) -> bool {
        self.lo[i] <= self.hi[i]
    }

    pub fn all_feasible(&self) -> bool {
        (0..self.len()).all(|i| self.feasible(i))
    }

    /// Brackets shrunk by `margin` on both sides.
    pub fn shrink(&self, margin: f64) -> IntervalBounds {
        IntervalBounds {
            lo: self.lo.iter().map(|v| v + margin).collect(),
            hi: self.hi.iter().map(|v| v - margin).collect(),
            tag: self.tag,
        }
    }

    /// Whether every bracket of `other` lies inside the matching one here.
    pub fn contains(&self, other: &IntervalBounds) -> bool {
        self.lo.iter().zip(&other.lo).all(|(a, b)| a <= b)
            && self.hi.iter().zip(&other.hi).all(|(a, b)| a >= b)
    }

    /// `interval,lo,hi,feasible` with 1-based interval numbers.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("interval,lo,hi,feasible\n");
        for i in 0..self.len() {
            let _ = writeln!(out, "{},{},{},{}", i + 1, self.lo[i], self.hi[i], self.feasible(i));
        }
        out
    }
}

/// `max{φ_n, ‖f‖_∞, Φ_n}·1.25 + 0.1`.
pub fn default_upper_level(f: &GridFunction, ext: &Extrema) -> f64 {
    ext.base_min.max(f.sup_norm()).max(ext.base_max) * 1.25 + 0.1
}

fn context(f: &GridFunction, spec: &FractalSpec) -> Result<(AffineMaps, GridFunction)> {
    if f.len() != spec.grid_size || f.interval() != spec.interval() {
        return Err(Error::InvalidGrid("function is not on the spec grid".into()));
    }
    Ok((build_maps(&spec.partition), spec.apply_base(f)?))
}

fn positivity_from(f: &GridFunction, ext: &Extrema, upper: Option<f64>) -> Result<IntervalBounds> {
    if f.min() < 0.0 {
        return Err(Error::Precondition(format!(
            "function takes the negative grid value {}",
            f.min()
        )));
    }
    let c = upper.unwrap_or_else(|| default_upper_level(f, ext));
    let floor = ext.base_min.max(f.sup_norm()).max(ext.base_max);
    if c.is_nan() || c <= floor {
        return Err(Error::Precondition(format!(
            "upper level {c} must exceed max(base min, sup norm, base max) = {floor}"
        )));
    }
    if ext.base_max <= 0.0 {
        return Err(Error::DegenerateDenominator(format!(
            "base maximum is {}",
            ext.base_max
        )));
    }
    let (lo, hi) = (0..ext.phi.len())
        .map(|i| {
            let lo = (-ext.phi[i] / (c - ext.base_min)).max(-(c - ext.big_phi[i]) / ext.base_max);
            let hi = (ext.phi[i] / ext.base_max).min((c - ext.big_phi[i]) / (c - ext.base_min));
            (lo, hi)
        })
        .unzip();
    Ok(IntervalBounds::clamped(lo, hi))
}

/// Brackets under which the fractal function stays non-negative.
/// `upper` is the level `C_n`; `None` uses [`default_upper_level`].
pub fn positivity_bounds(f: &GridFunction, spec: &FractalSpec, upper: Option<f64>) -> Result<IntervalBounds> {
    let (maps, base) = context(f, spec)?;
    let ext = extrema(f, &maps, &base)?;
    positivity_from(f, &ext, upper)
}

/// Positivity brackets for one member `f_k` of a sequence, tagged `(k, n)`
/// with `n` the base operator order of `spec`.
pub fn double_sequence_bounds(
    f_k: &GridFunction,
    k: u32,
    spec: &FractalSpec,
    upper: Option<f64>,
) -> Result<IntervalBounds> {
    let (maps, base) = context(f_k, spec)?;
    let ext = extrema(f_k, &maps, &base)?;
    let mut b = positivity_from(f_k, &ext, upper)?;
    b.tag = Some((k, spec.base.order()));
    Ok(b)
}

fn check_above(f: &GridFunction, g: &GridFunction) -> Result<GridFunction> {
    let d = f.sub(g)?;
    if d.min() < 0.0 {
        let j = d.values().iter().position(|&v| v < 0.0).unwrap_or(0);
        return Err(Error::Precondition(format!(
            "f < g at x = {} (difference {})",
            d.node(j),
            d.values()[j]
        )));
    }
    Ok(d)
}

fn ratio_bound(numer: f64, denom: f64) -> Result<f64> {
    if numer == 0.0 {
        return Ok(0.0);
    }
    if denom == 0.0 {
        return Err(Error::DegenerateDenominator(format!(
            "zero denominator with numerator {numer}"
        )));
    }
    // A negative denominator leaves the sufficient condition vacuous.
    Ok(if denom < 0.0 { 1.0 } else { (numer / denom).min(1.0) })
}

/// Brackets `[0, hi_i]` under which `f^α >= g`.
pub fn one_sided_bounds(f: &GridFunction, g: &GridFunction, spec: &FractalSpec) -> Result<IntervalBounds> {
    let diff = check_above(f, g)?;
    let (maps, base_f) = context(f, spec)?;
    let ext = extrema(&diff, &maps, &base_f)?;
    let denom = base_f.max() - g.min();
    if denom == 0.0 {
        return Err(Error::DegenerateDenominator(
            "base maximum of f equals the minimum of g".into(),
        ));
    }
    let hi = ext
        .phi
        .iter()
        .map(|&p| ratio_bound(p, denom))
        .collect::<Result<Vec<_>>>()?;
    Ok(IntervalBounds::clamped(vec![0.0; hi.len()], hi))
}

/// Brackets `[0, hi_i]` under which `f^α >= g^α` for a shared α.
pub fn dominance_bounds(f: &GridFunction, g: &GridFunction, spec: &FractalSpec) -> Result<IntervalBounds> {
    let diff = check_above(f, g)?;
    let (maps, base_diff) = context(&diff, spec)?;
    let ext = extrema(&diff, &maps, &base_diff)?;
    let hi = ext
        .phi
        .iter()
        .map(|&p| ratio_bound(p, ext.base_max))
        .collect::<Result<Vec<_>>>()?;
    Ok(IntervalBounds::clamped(vec![0.0; hi.len()], hi))
}

/// Outcome of checking one scaling function against its bracket.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalCheck {
    pub interval: usize,
    pub min: f64,
    pub max: f64,
    /// Largest distance outside the bracket; zero when admissible.
    pub violation: f64,
}

impl IntervalCheck {
    pub fn passed(&self) -> bool {
        self.violation == 0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlphaReport {
    pub checks: Vec<IntervalCheck>,
    pub norm: f64,
}

impl AlphaReport {
    pub fn norm_below_one(&self) -> bool {
        self.norm < 1.0
    }

    pub fn admissible(&self) -> bool {
        self.norm_below_one() && self.checks.iter().all(IntervalCheck::passed)
    }

    pub fn failed_intervals(&self) -> Vec<usize> {
        self.checks.iter().filter(|c| !c.passed()).map(|c| c.interval).collect()
    }

    pub fn worst_violation(&self) -> f64 {
        self.checks.iter().map(|c| c.violation).fold(0.0, f64::max)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("interval,min,max,violation,passed\n");
        for c in &self.checks {
            let _ = writeln!(out, "{},{},{},{},{}", c.interval, c.min, c.max, c.violation, c.passed());
        }
        let _ = writeln!(out, "# norm,{},{}", self.norm, self.norm_below_one());
        out
    }
}

/// Samples each `α_i` at `samples` uniform points of `I`.
pub fn validate_alpha(alpha: &ScalingVector, bounds: &IntervalBounds, samples: usize) -> Result<AlphaReport> {
    if alpha.len() != bounds.len() {
        return Err(Error::InvalidScaling(format!(
            "{} scaling functions for {} brackets",
            alpha.len(),
            bounds.len()
        )));
    }
    let interval = alpha.interval();
    let samples = samples.max(2);
    let checks = (0..alpha.len())
        .map(|i| {
            let (mut mn, mut mx) = (f64::INFINITY, f64::NEG_INFINITY);
            for j in 0..samples {
                let v = alpha.eval(i, crate::grid::node_of(&interval, samples, j));
                mn = mn.min(v);
                mx = mx.max(v);
            }
            let violation = (bounds.lo[i] - mn).max(mx - bounds.hi[i]).max(0.0);
            IntervalCheck {
                interval: i + 1,
                min: mn,
                max: mx,
                violation,
            }
        })
        .collect();
    Ok(AlphaReport {
        checks,
        norm: alpha.norm(),
    })
}
