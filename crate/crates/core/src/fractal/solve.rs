use rayon::prelude::*;

use super::{build_maps, BaseOperator, FractalSpec};
use crate::error::{Error, Result};
use crate::grid::{sup_distance, trapezoid, GridFunction};

#[derive(Debug, Clone, Copy)]
struct PlanEntry {
    alpha: f64,
    j: usize,
    theta: f64,
    base_at_xi: f64,
}

/// The RB operator on a fixed grid, with every `u_i⁻¹(x)` located in advance.
#[derive(Debug, Clone)]
pub struct RbOperator {
    germ: GridFunction,
    base: GridFunction,
    plan: Vec<PlanEntry>,
}

impl RbOperator {
    pub fn new(spec: &FractalSpec) -> Result<Self> {
        spec.validate()?;
        let germ = spec.germ_grid()?;
        let base = spec.compute_base(&germ)?;
        RbOperator::with_base(spec, germ, base)
    }

    pub fn with_base(spec: &FractalSpec, germ: GridFunction, base: GridFunction) -> Result<Self> {
        spec.validate()?;
        if germ.len() != spec.grid_size || !germ.same_grid(&base) {
            return Err(Error::InvalidGrid(format!(
                "germ ({}) and base ({}) must both have {} samples",
                germ.len(),
                base.len(),
                spec.grid_size
            )));
        }
        let maps = build_maps(&spec.partition);
        let plan = (0..germ.len())
            .into_par_iter()
            .map(|j| {
                let x = germ.node(j);
                let i = spec.partition.locate(x);
                let xi = maps.inverse(i, x);
                let (j, theta) = germ.locate(xi);
                PlanEntry {
                    alpha: spec.alpha.eval(i, xi),
                    j,
                    theta,
                    base_at_xi: base.eval_located(j, theta),
                }
            })
            .collect();
        Ok(RbOperator { germ, base, plan })
    }

    pub fn germ(&self) -> &GridFunction {
        &self.germ
    }

    pub fn base(&self) -> &GridFunction {
        &self.base
    }

    pub fn apply(&self, g: &GridFunction) -> Result<GridFunction> {
        if !g.same_grid(&self.germ) {
            return Err(Error::InvalidGrid("iterate is not on the solver grid".into()));
        }
        GridFunction::new(self.germ.interval(), self.apply_values(g))
    }

    fn apply_values(&self, g: &GridFunction) -> Vec<f64> {
        let f = self.germ.values();
        self.plan
            .par_iter()
            .enumerate()
            .map(|(k, e)| {
                if e.alpha == 0.0 {
                    f[k]
                } else {
                    f[k] + e.alpha * (g.eval_located(e.j, e.theta) - e.base_at_xi)
                }
            })
            .collect()
    }
}

/// One RB step `T g` with a precomputed base function.
pub fn rb_apply(g: &GridFunction, spec: &FractalSpec, base: &GridFunction) -> Result<GridFunction> {
    RbOperator::with_base(spec, spec.germ_grid()?, base.clone())?.apply(g)
}

/// A solved fixed point together with its inputs and convergence record.
#[derive(Debug, Clone)]
pub struct Solution {
    pub values: GridFunction,
    pub germ: GridFunction,
    pub base: GridFunction,
    /// Applications of `T` performed.
    pub iterations: usize,
    /// `‖T g − g‖` for the returned `g`, in the solving norm.
    pub residual: f64,
    /// `‖T g_k − g_k‖` for `k = 0, 1, …`.
    pub history: Vec<f64>,
}

impl Solution {
    pub fn eval(&self, x: f64) -> f64 {
        self.values.eval(x)
    }

    /// `‖f^α − f‖_∞` on the grid.
    pub fn sup_error(&self) -> f64 {
        sup_distance(self.values.values(), self.germ.values())
    }
}

fn iterate(
    op: RbOperator,
    tol: f64,
    limit: impl Fn(f64) -> usize,
    dist: impl Fn(&[f64], &[f64]) -> f64,
) -> Result<Solution> {
    let mut g = op.germ.clone();
    let mut next = op.apply_values(&g);
    let mut residual = dist(&next, g.values());
    let mut history = vec![residual];
    let limit = limit(residual);
    while residual > tol {
        if history.len() > limit {
            return Err(Error::NonConvergence {
                iterations: history.len(),
                residual,
                tol,
            });
        }
        g = GridFunction::new(g.interval(), next)?;
        next = op.apply_values(&g);
        residual = dist(&next, g.values());
        history.push(residual);
    }
    Ok(Solution {
        values: g,
        iterations: history.len(),
        residual,
        history,
        germ: op.germ,
        base: op.base,
    })
}

/// Steps after which `ratio^k · r0 <= tol`, plus rounding headroom.
fn contraction_steps(ratio: f64, r0: f64, tol: f64) -> usize {
    if r0 <= tol || ratio == 0.0 {
        return 1;
    }
    let k = ((tol / r0).ln() / ratio.ln()).ceil();
    if k.is_finite() && k < 1e9 {
        k as usize + 2
    } else {
        usize::MAX
    }
}

/// Uniform-norm fixed point `f^α` from `g_0 = f`.
pub fn solve_fixed_point(spec: &FractalSpec) -> Result<Solution> {
    spec.validate()?;
    let norm = spec.alpha.norm();
    if norm >= 1.0 {
        return Err(Error::NonContraction(norm));
    }
    let op = RbOperator::new(spec)?;
    solve_with(op, spec)
}

/// As [`solve_fixed_point`] with a caller-supplied base function.
pub fn solve_with_base(spec: &FractalSpec, base: GridFunction) -> Result<Solution> {
    spec.validate()?;
    let norm = spec.alpha.norm();
    if norm >= 1.0 {
        return Err(Error::NonContraction(norm));
    }
    let op = RbOperator::with_base(spec, spec.germ_grid()?, base)?;
    solve_with(op, spec)
}

fn solve_with(op: RbOperator, spec: &FractalSpec) -> Result<Solution> {
    let norm = spec.alpha.norm();
    let max_iter = spec.max_iter;
    iterate(
        op,
        spec.tol,
        |r0| contraction_steps(norm, r0, spec.tol).min(max_iter),
        sup_distance,
    )
}

fn check_exponent(p: f64) -> Result<()> {
    if p.is_finite() && p >= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidExponent(p))
    }
}

/// `Λ = (Σ_i a_i ‖α_i‖_∞^p)^{1/p}`.
pub fn lp_contraction_factor(spec: &FractalSpec, p: f64) -> Result<f64> {
    check_exponent(p)?;
    let maps = build_maps(&spec.partition);
    let sum: f64 = maps
        .a
        .iter()
        .zip(spec.alpha.component_norms())
        .map(|(a, n)| a * n.powf(p))
        .sum();
    Ok(sum.powf(1.0 / p))
}

/// L^p fixed point with the integral MKZ base, converged in the grid L^p norm.
pub fn solve_lp_fixed_point(spec: &FractalSpec, p: f64) -> Result<Solution> {
    check_exponent(p)?;
    spec.validate()?;
    if !matches!(spec.base, BaseOperator::Integral { .. }) {
        return Err(Error::Precondition(format!(
            "the L^p solver needs an integral base, got {}",
            spec.base
        )));
    }
    let lambda = lp_contraction_factor(spec, p)?;
    if lambda >= 1.0 {
        return Err(Error::NonContraction(lambda));
    }
    let op = RbOperator::new(spec)?;
    let h = op.germ.step();
    iterate(op, spec.tol, |_| spec.max_iter, |a, b| lp_distance(h, p, a, b))
}

pub(crate) fn lp_distance(h: f64, p: f64, a: &[f64], b: &[f64]) -> f64 {
    trapezoid(h, a.iter().zip(b).map(|(u, v)| (u - v).abs().powf(p))).powf(1.0 / p)
}

/// Points on the graph of a solved fractal function, refined by applying the
/// maps `w_i(x, y) = (u_i(x), f(u_i(x)) + α_i(x)(y − b(x)))` to the sampled
/// graph until at least `min_points` points exist.
pub fn graph_points(solution: &Solution, spec: &FractalSpec, min_points: usize) -> Result<Vec<(f64, f64)>> {
    if !solution.values.same_grid(&solution.base) || solution.values.len() != spec.grid_size {
        return Err(Error::InvalidGrid("solution does not match the spec grid".into()));
    }
    let maps = &build_maps(&spec.partition);
    let mut pts: Vec<(f64, f64)> = solution
        .values
        .nodes()
        .zip(solution.values.values().iter().copied())
        .collect();
    while pts.len() < min_points {
        let prev = &pts;
        pts = (0..maps.len())
            .into_par_iter()
            .flat_map_iter(|i| {
                prev.iter().map(move |&(x, y)| {
                    let ux = maps.map(i, x);
                    let v = spec.germ.eval(ux) + spec.alpha.eval(i, x) * (y - solution.base.eval(x));
                    (ux, v)
                })
            })
            .collect();
    }
    Ok(pts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fractal::{Partition, ScalingVector};
    use crate::germ::Germ;
    use crate::qcore::QParam;

    fn thirds_spec(alpha: &[f64], m: usize) -> FractalSpec {
        let p = Partition::uniform(0.0, 1.0, 3).unwrap();
        let a = ScalingVector::constants(alpha, p.interval()).unwrap();
        let base = BaseOperator::Quantum {
            n: 3,
            q: QParam::new(0.8).unwrap(),
        };
        FractalSpec::new(Germ::sine(1.0, std::f64::consts::PI, 1.0), p, a, base, m).unwrap()
    }

    #[test]
    fn zero_alpha_returns_germ_bitwise() {
        let spec = thirds_spec(&[0.0; 3], 301);
        let s = solve_fixed_point(&spec).unwrap();
        assert_eq!(s.values, spec.germ_grid().unwrap());
        assert_eq!(s.residual, 0.0);
    }

    #[test]
    fn base_as_iterate_yields_germ() {
        let spec = thirds_spec(&[0.3, -0.4, 0.5], 301);
        let f = spec.germ_grid().unwrap();
        let b = spec.compute_base(&f).unwrap();
        let tb = rb_apply(&b, &spec, &b).unwrap();
        assert_eq!(tb, f);
    }

    #[test]
    fn solution_interpolates_and_is_fixed() {
        let spec = thirds_spec(&[0.3, -0.4, 0.5], 301);
        let s = solve_fixed_point(&spec).unwrap();
        assert!(s.residual <= 1e-10);
        for &x in spec.partition.nodes() {
            assert_eq!(s.eval(x), spec.germ.eval(x));
        }
        let bound = 0.5 / 0.5 * s.germ.sup_distance(&s.base).unwrap();
        assert!(s.sup_error() <= bound + 1e-12);
    }

    #[test]
    fn residual_history_contracts() {
        let spec = thirds_spec(&[0.6, -0.7, 0.5], 301);
        let s = solve_fixed_point(&spec).unwrap();
        for w in s.history.windows(2) {
            assert!(w[1] <= 0.7 * w[0] + 1e-15);
        }
    }

    #[test]
    fn non_contraction_rejected() {
        let spec = thirds_spec(&[0.3, 1.0, 0.5], 301);
        assert!(matches!(solve_fixed_point(&spec), Err(Error::NonContraction(_))));
    }

    #[test]
    fn iteration_cap_reports_non_convergence() {
        let spec = thirds_spec(&[0.9, 0.9, 0.9], 301).with_max_iter(3);
        assert!(matches!(solve_fixed_point(&spec), Err(Error::NonConvergence { .. })));
    }

    #[test]
    fn lp_factor_hand_values() {
        let spec = thirds_spec(&[0.5, -0.5, 0.5], 301);
        assert!((lp_contraction_factor(&spec, 2.0).unwrap() - 0.5).abs() < 1e-15);
        let zero = thirds_spec(&[0.0; 3], 301);
        assert_eq!(lp_contraction_factor(&zero, 3.0).unwrap(), 0.0);
        let one = thirds_spec(&[1.0, -1.0, 1.0], 301);
        assert!((lp_contraction_factor(&one, 1.5).unwrap() - 1.0).abs() < 1e-15);
        assert!(matches!(lp_contraction_factor(&spec, 0.5), Err(Error::InvalidExponent(_))));
    }

    #[test]
    fn lp_solver_requires_integral_base() {
        let spec = thirds_spec(&[0.5; 3], 301);
        assert!(matches!(solve_lp_fixed_point(&spec, 2.0), Err(Error::Precondition(_))));
        let spec = spec.with_base(BaseOperator::Integral { n: 5 });
        let s = solve_lp_fixed_point(&spec, 2.0).unwrap();
        assert!(s.residual <= 1e-10);
    }

    #[test]
    fn graph_points_lie_on_the_graph() {
        let spec = thirds_spec(&[0.3, -0.2, 0.25], 301);
        let s = solve_fixed_point(&spec).unwrap();
        let pts = graph_points(&s, &spec, 2000).unwrap();
        assert!(pts.len() >= 2000);
        // Images of grid points land on grid points for a uniform partition.
        for &(x, y) in pts.iter().step_by(7) {
            let pos = s.values.position(x);
            if pos.fract() == 0.0 {
                assert!((s.eval(x) - y).abs() < 1e-9, "x={x}");
            }
        }
    }
}
