//! Meyer-König-Zeller operators: quantum `M_{n,q}`, classical `M_n` (`q = 1`)
//! and the integral operator `M̂_n`.
//!
//! All three are positive series whose weights sum to one. The series are
//! summed in ascending `k` with compensated summation and truncated once the
//! accumulated weight reaches `1 - eps`, or once the geometric bound on the
//! remaining tail drops below `eps` (the weight ratios are non-increasing in
//! `k`, so the first ratio below one bounds the whole tail).

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{Antiderivative, GridFunction, IntervalSpec, RealFunction};
use crate::qcore::{q_integer, QParam};

/// Truncation controls shared by every MKZ series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MkzConfig {
    pub eps: f64,
    pub max_terms: usize,
}

impl Default for MkzConfig {
    fn default() -> Self {
        MkzConfig {
            eps: 1e-10,
            max_terms: 100_000,
        }
    }
}

impl MkzConfig {
    /// Config for evaluating an operator of order `n` at every node of an
    /// `m`-point grid. The node next to `xN` has `1 - t = 1/(m-1)`, where the
    /// weights spread over roughly `(n+1)(m-1)` terms, so the cap grows with
    /// the grid.
    pub fn for_grid(n: u32, m: usize) -> Self {
        let spread = f64::from(n) + 1.0;
        let needed = 4.0 * (spread + 10.0 * spread.sqrt() + 40.0) * m.saturating_sub(1) as f64;
        MkzConfig {
            max_terms: (needed as usize).max(MkzConfig::default().max_terms),
            ..MkzConfig::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.eps > 0.0 && self.eps < 1.0 && self.max_terms > 0 {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "series config needs 0 < eps < 1 and max_terms > 0, got eps = {}, max_terms = {}",
                self.eps, self.max_terms
            )))
        }
    }
}

#[derive(Debug, Default)]
struct Kahan {
    sum: f64,
    c: f64,
}

impl Kahan {
    #[inline]
    fn add(&mut self, v: f64) {
        let y = v - self.c;
        let t = self.sum + y;
        self.c = (t - self.sum) - y;
        self.sum = t;
    }
}

const RESCALE_BITS: i32 = 512;

/// Walks `w_0 = Π factors`, `w_{k+1} = w_k · ratio(k)` until truncation.
///
/// Weights are carried as `scaled · 2^{-shift}` so a leading weight below the
/// smallest normal never collapses the whole sequence to zero.
/// Returns `(terms, mass, tail_bound)`.
fn walk_series(
    factors: impl Iterator<Item = f64>,
    mut ratio: impl FnMut(usize) -> f64,
    t: f64,
    cfg: &MkzConfig,
    mut visit: impl FnMut(usize, f64),
) -> Result<(usize, f64, f64)> {
    let lo = 2f64.powi(-RESCALE_BITS);
    let up = 2f64.powi(RESCALE_BITS);
    let mut scaled = 1.0;
    let mut shift = 0i32;
    for f in factors {
        scaled *= f;
        while scaled > 0.0 && scaled < lo {
            scaled *= up;
            shift += RESCALE_BITS;
        }
    }
    let mut mass = Kahan::default();
    let mut k = 0usize;
    loop {
        let w = if shift == 0 {
            scaled
        } else {
            scaled * 2f64.powi(-shift)
        };
        visit(k, w);
        mass.add(w);
        let rho = ratio(k);
        let geometric = if rho < 1.0 {
            w * rho / (1.0 - rho)
        } else {
            f64::INFINITY
        };
        if mass.sum >= 1.0 - cfg.eps || geometric <= cfg.eps {
            let residual = (1.0 - mass.sum).max(0.0);
            let tail = if geometric.is_finite() {
                geometric.max(residual)
            } else {
                residual
            };
            return Ok((k + 1, mass.sum, tail));
        }
        k += 1;
        if k >= cfg.max_terms {
            return Err(Error::Truncation {
                t,
                terms: k,
                mass: mass.sum,
            });
        }
        scaled *= rho;
        if shift > 0 && scaled > 1.0 {
            scaled *= lo;
            shift -= RESCALE_BITS;
        }
    }
}

/// Walks the quantum MKZ weights `w_k = P_{n,q}(t) [n+k choose k]_q t^k`
/// together with the normalized nodes `[k]_q / [k+n]_q`.
fn walk_quantum(
    n: u32,
    q: QParam,
    t: f64,
    cfg: &MkzConfig,
    mut visit: impl FnMut(usize, f64, f64),
) -> Result<(usize, f64, f64)> {
    let qv = q.get();
    let factors = (0..=n).map(|j| 1.0 - qv.powi(j as i32) * t);
    // [k]_q and [k+n]_q for the node, [k+1]_q and [k+n+1]_q for the ratio.
    let mut k_int = 0.0;
    let mut kn_int = q_integer(u64::from(n), q);
    let mut ratio_den = 1.0;
    let mut ratio_num = q_integer(u64::from(n) + 1, q);
    walk_series(
        factors,
        |_| {
            let r = t * ratio_num / ratio_den;
            ratio_den = 1.0 + qv * ratio_den;
            ratio_num = 1.0 + qv * ratio_num;
            r
        },
        t,
        cfg,
        |k, w| {
            let node = if k == 0 { 0.0 } else { k_int / kn_int };
            visit(k, w, node);
            k_int = 1.0 + qv * k_int;
            kn_int = 1.0 + qv * kn_int;
        },
    )
}

fn check_order(n: u32) -> Result<()> {
    if n == 0 {
        Err(Error::Domain("operator order n must be positive".into()))
    } else {
        Ok(())
    }
}

fn check_t(t: f64) -> Result<()> {
    if (0.0..=1.0).contains(&t) {
        Ok(())
    } else {
        Err(Error::Domain(format!("normalized abscissa t = {t} outside [0, 1]")))
    }
}

/// Normalized abscissa of `x`, tolerating rounding just outside the interval.
fn normalized(x: f64, interval: &IntervalSpec) -> Result<f64> {
    let t = interval.normalize(x);
    if !(-1e-12..=1.0 + 1e-12).contains(&t) {
        return Err(Error::Domain(format!(
            "x = {x} outside [{}, {}]",
            interval.x1(),
            interval.xn()
        )));
    }
    Ok(t.clamp(0.0, 1.0))
}

/// Truncated quantum MKZ weights at normalized abscissa `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct MkzWeights {
    pub t: f64,
    pub n: u32,
    pub q: QParam,
    /// `w_0 … w_K`; empty at the endpoint `t = 1`.
    pub weights: Vec<f64>,
    /// Upper bound on the omitted mass `Σ_{k>K} w_k`.
    pub tail_bound: f64,
}

impl MkzWeights {
    /// At `t = 1` the operator is defined by assignment and no series exists.
    pub fn is_endpoint(&self) -> bool {
        self.t == 1.0
    }

    pub fn total(&self) -> f64 {
        let mut s = Kahan::default();
        self.weights.iter().for_each(|&w| s.add(w));
        s.sum
    }

    /// Normalized node `[k]_q / [k+n]_q` carrying weight `w_k`.
    pub fn node(&self, k: usize) -> f64 {
        if k == 0 {
            0.0
        } else {
            let k = k as u64;
            q_integer(k, self.q) / q_integer(k + u64::from(self.n), self.q)
        }
    }
}

pub fn mkz_weights(n: u32, q: QParam, t: f64, cfg: &MkzConfig) -> Result<MkzWeights> {
    check_order(n)?;
    check_t(t)?;
    cfg.validate()?;
    if t == 1.0 {
        return Ok(MkzWeights {
            t,
            n,
            q,
            weights: Vec::new(),
            tail_bound: 0.0,
        });
    }
    let mut weights = Vec::new();
    let (_, _, tail_bound) = walk_quantum(n, q, t, cfg, |_, w, _| weights.push(w))?;
    Ok(MkzWeights {
        t,
        n,
        q,
        weights,
        tail_bound,
    })
}

/// `M_{n,q} f(x)` on `interval`; exact assignment `f(xN)` at the right end.
pub fn eval_quantum_mkz<F: RealFunction + ?Sized>(
    f: &F,
    n: u32,
    q: QParam,
    x: f64,
    interval: &IntervalSpec,
    cfg: &MkzConfig,
) -> Result<f64> {
    check_order(n)?;
    cfg.validate()?;
    let t = normalized(x, interval)?;
    if t == 1.0 {
        return Ok(f.value(interval.xn()));
    }
    let (x1, len) = (interval.x1(), interval.length());
    let mut acc = Kahan::default();
    walk_quantum(n, q, t, cfg, |_, w, node| {
        if w != 0.0 {
            acc.add(w * f.value(x1 + len * node));
        }
    })?;
    Ok(acc.sum)
}

/// Classical MKZ series `M_n f(x)`, the `q = 1` member of the family.
pub fn eval_classical_mkz<F: RealFunction + ?Sized>(
    f: &F,
    n: u32,
    x: f64,
    interval: &IntervalSpec,
    cfg: &MkzConfig,
) -> Result<f64> {
    eval_quantum_mkz(f, n, QParam::ONE, x, interval, cfg)
}

/// `M_{n,q} f` at every node of an `m`-point grid on `interval`.
pub fn quantum_mkz_grid<F: RealFunction + Sync + ?Sized>(
    f: &F,
    n: u32,
    q: QParam,
    interval: IntervalSpec,
    m: usize,
    cfg: &MkzConfig,
) -> Result<GridFunction> {
    let probe = GridFunction::constant(interval, m, 0.0)?;
    let values = (0..m)
        .into_par_iter()
        .map(|j| eval_quantum_mkz(f, n, q, probe.node(j), &interval, cfg))
        .collect::<Result<Vec<f64>>>()?;
    GridFunction::new(interval, values)
}

/// One row of the integral MKZ kernel `H_n(x, ·) = Σ_k m̂_{nk}(x) χ_{I_k}`.
#[derive(Debug, Clone, PartialEq)]
pub struct IntegralKernelRow {
    pub n: u32,
    pub x: f64,
    /// `(m̂_{nk}(x), I_k)` with `I_k = [k/(k+n), (k+1)/(k+n+1)]` in `[0, 1]`.
    pub entries: Vec<(f64, (f64, f64))>,
    pub tail_bound: f64,
}

impl IntegralKernelRow {
    /// `Σ_k m̂_{nk}(x)·|I_k|`.
    pub fn mass(&self) -> f64 {
        let mut s = Kahan::default();
        for (m, (lo, hi)) in &self.entries {
            s.add(m * (hi - lo));
        }
        s.sum
    }
}

#[inline]
fn kernel_interval(n: u32, k: usize) -> (f64, f64) {
    let (n, k) = (f64::from(n), k as f64);
    (k / (k + n), (k + 1.0) / (k + n + 1.0))
}

/// Walks `m̂_{nk}(x) = (n+1) C(k+n+1, k) x^k (1-x)^n` through its kernel mass
/// `μ_k = m̂_{nk}(x)·|I_k|`, with `|I_k| = n/((k+n)(k+n+1))`.
///
/// The masses reduce to `C(k+n-1, k) x^k (1-x)^n` (ratio `x(k+n)/(k+1)`), a
/// negative binomial distribution, so the printed kernel has unit mass.
fn walk_integral(
    n: u32,
    x: f64,
    cfg: &MkzConfig,
    mut visit: impl FnMut(usize, f64, (f64, f64)),
) -> Result<(usize, f64, f64)> {
    let nf = f64::from(n);
    walk_series(
        (0..n).map(|_| 1.0 - x),
        |k| x * (k as f64 + nf) / (k as f64 + 1.0),
        x,
        cfg,
        |k, mass| {
            let (lo, hi) = kernel_interval(n, k);
            let width = nf / ((k as f64 + nf) * (k as f64 + nf + 1.0));
            visit(k, mass / width, (lo, hi));
        },
    )
}

pub fn integral_kernel_row(n: u32, x: f64, cfg: &MkzConfig) -> Result<IntegralKernelRow> {
    check_order(n)?;
    check_t(x)?;
    cfg.validate()?;
    if x == 1.0 {
        return Ok(IntegralKernelRow {
            n,
            x,
            entries: Vec::new(),
            tail_bound: 0.0,
        });
    }
    let mut entries = Vec::new();
    let (_, _, tail_bound) = walk_integral(n, x, cfg, |_, m, iv| entries.push((m, iv)))?;
    Ok(IntegralKernelRow {
        n,
        x,
        entries,
        tail_bound,
    })
}

/// Integral MKZ operator bound to one integrand.
///
/// `∫_{I_k} f` is the exact integral of the grid interpolant, i.e. the
/// composite trapezoid rule with the endpoints of `I_k` inserted as nodes.
#[derive(Debug, Clone)]
pub struct IntegralMkz {
    anti: Antiderivative,
}

impl IntegralMkz {
    pub fn new(f: &GridFunction) -> Self {
        IntegralMkz {
            anti: Antiderivative::new(f),
        }
    }

    /// `M̂_n f(x)`. The interval of `f` is mapped affinely onto `[0, 1]`. At
    /// the right end every `m̂_{nk}` vanishes; the one-sided limit `f(xN)` is
    /// returned there.
    pub fn eval(&self, n: u32, x: f64, cfg: &MkzConfig) -> Result<f64> {
        check_order(n)?;
        cfg.validate()?;
        let grid = self.anti.grid();
        let interval = grid.interval();
        let t = normalized(x, &interval)?;
        if t == 1.0 {
            return Ok(grid.eval(interval.xn()));
        }
        let (x1, len) = (interval.x1(), interval.length());
        let mut acc = Kahan::default();
        walk_integral(n, t, cfg, |_, m, (lo, hi)| {
            if m != 0.0 {
                let integral = self.anti.between(x1 + len * lo, x1 + len * hi) / len;
                acc.add(m * integral);
            }
        })?;
        Ok(acc.sum)
    }

    /// `M̂_n f` at every node of the integrand's grid.
    pub fn on_grid(&self, n: u32, cfg: &MkzConfig) -> Result<GridFunction> {
        let grid = self.anti.grid();
        let values = (0..grid.len())
            .into_par_iter()
            .map(|j| self.eval(n, grid.node(j), cfg))
            .collect::<Result<Vec<f64>>>()?;
        GridFunction::new(grid.interval(), values)
    }
}

pub fn eval_integral_mkz(f: &GridFunction, n: u32, x: f64, cfg: &MkzConfig) -> Result<f64> {
    IntegralMkz::new(f).eval(n, x, cfg)
}
