//! Fractal Müntz monomials `(x^λ)^{(q,α)}_n` and least-squares density
//! experiments over growing Müntz bases.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fractal::{solve_fixed_point, BaseOperator, FractalSpec};
use crate::germ::Germ;
use crate::grid::{GridFunction, IntervalSpec};
use crate::qcore::QRule;
use crate::table::Table;

/// Largest basis accepted by [`least_squares_fit`].
pub const MAX_BASIS: usize = 40;

/// Condition number above which the fit falls back to the least-norm solution.
pub const MAX_CONDITION: f64 = 1e12;

/// Closed-form description of an exponent sequence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LambdaTag {
    /// `λ_i` comparable to `i`.
    HarmonicLike,
    /// `λ_i = r^i` with `r > 1`.
    Geometric { ratio: f64 },
    Custom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LambdaClass {
    DivergentSum,
    ConvergentSum,
    Undetermined,
}

impl LambdaClass {
    pub fn as_str(self) -> &'static str {
        match self {
            LambdaClass::DivergentSum => "divergent-sum",
            LambdaClass::ConvergentSum => "convergent-sum",
            LambdaClass::Undetermined => "undetermined",
        }
    }
}

impl std::fmt::Display for LambdaClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Strictly increasing positive exponents `λ_1 < λ_2 < …`; `λ_0 = 0` is implicit.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaSequence {
    exponents: Vec<f64>,
    tag: Option<LambdaTag>,
}

impl LambdaSequence {
    pub fn new(exponents: Vec<f64>, tag: Option<LambdaTag>) -> Result<Self> {
        if exponents.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
            return Err(Error::Domain("Müntz exponents must be positive and finite".into()));
        }
        if exponents.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Domain("Müntz exponents must be strictly increasing".into()));
        }
        Ok(LambdaSequence { exponents, tag })
    }

    /// `λ_i = i`, `i = 1..=len`.
    pub fn harmonic(len: usize) -> Self {
        LambdaSequence {
            exponents: (1..=len).map(|i| i as f64).collect(),
            tag: Some(LambdaTag::HarmonicLike),
        }
    }

    /// `λ_i = r^i`, `i = 1..=len`.
    pub fn geometric(ratio: f64, len: usize) -> Result<Self> {
        if !(ratio > 1.0 && ratio.is_finite()) {
            return Err(Error::Domain(format!("geometric ratio must exceed 1, got {ratio}")));
        }
        Ok(LambdaSequence {
            exponents: (1..=len).map(|i| ratio.powi(i as i32)).collect(),
            tag: Some(LambdaTag::Geometric { ratio }),
        })
    }

    pub fn exponents(&self) -> &[f64] {
        &self.exponents
    }

    pub fn tag(&self) -> Option<LambdaTag> {
        self.tag
    }

    pub fn len(&self) -> usize {
        self.exponents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exponents.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    pub class: LambdaClass,
    /// Partial sums of the density series over the given prefix.
    pub partial_sums: Vec<f64>,
}

/// Classifies the sequence by `Σ λ_i/(λ_i² + 1)`, or by
/// `Σ (λ_i + 1/p)/((λ_i + 1/p)² + 1)` when `p` is given.
pub fn classify_lambda(lambdas: &LambdaSequence, p: Option<f64>) -> Result<Classification> {
    let shift = match p {
        Some(p) if !(p.is_finite() && p >= 1.0) => return Err(Error::InvalidExponent(p)),
        Some(p) => 1.0 / p,
        None => 0.0,
    };
    let partial_sums = lambdas
        .exponents
        .iter()
        .scan(0.0, |acc, &l| {
            let s = l + shift;
            *acc += s / (s * s + 1.0);
            Some(*acc)
        })
        .collect();
    let class = match lambdas.tag {
        Some(LambdaTag::HarmonicLike) => LambdaClass::DivergentSum,
        Some(LambdaTag::Geometric { ratio }) if ratio > 1.0 => LambdaClass::ConvergentSum,
        _ => LambdaClass::Undetermined,
    };
    Ok(Classification { class, partial_sums })
}

/// `(x^λ)^{(q,α)}_n` for the base and scaling of `spec` on `[0, 1]`.
pub fn fractal_monomial(lambda: f64, spec: &FractalSpec) -> Result<GridFunction> {
    if spec.interval() != IntervalSpec::unit() {
        return Err(Error::Precondition("Müntz monomials live on [0, 1]".into()));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::Domain(format!("exponent must be non-negative, got {lambda}")));
    }
    Ok(solve_fixed_point(&spec.with_germ(Germ::power(lambda)))?.values)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MuntzFit {
    pub coefficients: Vec<f64>,
    pub residual: GridFunction,
    pub residual_sup: f64,
    /// Grid L² norm of the residual.
    pub residual_lp: f64,
    /// `σ_max/σ_min` of the column-normalized design matrix.
    pub condition: f64,
    pub warning: Option<String>,
}

/// Minimizes the grid L² residual `‖target − Σ c_s basis_s‖_2` (trapezoid
/// weights) by QR of the column-normalized design matrix.
pub fn least_squares_fit(target: &GridFunction, basis: &[GridFunction]) -> Result<MuntzFit> {
    if basis.len() > MAX_BASIS {
        return Err(Error::Precondition(format!("basis of {} exceeds {MAX_BASIS}", basis.len())));
    }
    if let Some(i) = basis.iter().position(|b| !b.same_grid(target)) {
        return Err(Error::InvalidGrid(format!("basis function {i} is not on the target grid")));
    }
    let m = target.len();
    let k = basis.len();
    if k == 0 {
        return finish(target, basis, Vec::new(), 1.0, None);
    }
    let w: Vec<f64> = (0..m)
        .map(|j| if j == 0 || j == m - 1 { 0.5f64.sqrt() } else { 1.0 })
        .collect();
    let mut a = DMatrix::from_fn(m, k, |j, s| w[j] * basis[s].values()[j]);
    let scale: Vec<f64> = a.column_iter().map(|c| c.norm()).collect();
    if let Some(s) = scale.iter().position(|&n| n == 0.0) {
        return Err(Error::Precondition(format!("basis function {s} vanishes on the grid")));
    }
    for (mut c, &n) in a.column_iter_mut().zip(&scale) {
        c /= n;
    }
    let b = DVector::from_fn(m, |j, _| w[j] * target.values()[j]);
    let qr = a.qr();
    let rhs = qr.q().transpose() * &b;
    let r = qr.r();
    let svd = small_svd(&r)?;
    let (smax, smin) = (svd.1.max(), svd.1.min());
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    let (y, warning) = if condition > MAX_CONDITION {
        let (u, sigma, v_t) = svd;
        let mut ub = u.transpose() * rhs;
        for (c, &s) in ub.iter_mut().zip(sigma.iter()) {
            *c = if s > smax / MAX_CONDITION { *c / s } else { 0.0 };
        }
        let msg = format!("design matrix is near rank-deficient (condition {condition:e}); least-norm solution used");
        (v_t.transpose() * ub, Some(msg))
    } else {
        let y = r
            .solve_upper_triangular(&rhs)
            .ok_or_else(|| Error::Precondition("singular triangular factor".into()))?;
        (y, None)
    };
    let coefficients = y.iter().zip(&scale).map(|(c, n)| c / n).collect();
    finish(target, basis, coefficients, condition, warning)
}

type Svd = (DMatrix<f64>, DVector<f64>, DMatrix<f64>);

/// SVD of the square factor `R`, checked by reconstruction; the transpose
/// is tried when the direct decomposition does not reproduce `R`.
fn small_svd(r: &DMatrix<f64>) -> Result<Svd> {
    let tol = 1e-10 * r.norm().max(f64::MIN_POSITIVE);
    let attempt = |m: &DMatrix<f64>| -> Option<Svd> {
        let svd = m.clone().svd(true, true);
        let (u, v_t) = (svd.u?, svd.v_t?);
        let rebuilt = &u * DMatrix::from_diagonal(&svd.singular_values) * &v_t;
        ((rebuilt - m).norm() <= tol).then_some((u, svd.singular_values, v_t))
    };
    attempt(r)
        .or_else(|| attempt(&r.transpose()).map(|(u, s, v_t)| (v_t.transpose(), s, u.transpose())))
        .ok_or_else(|| Error::Precondition("singular value decomposition did not converge".into()))
}

fn finish(
    target: &GridFunction,
    basis: &[GridFunction],
    coefficients: Vec<f64>,
    condition: f64,
    warning: Option<String>,
) -> Result<MuntzFit> {
    let mut residual = target.clone();
    for (b, c) in basis.iter().zip(&coefficients) {
        residual = residual.combine(1.0, b, -c)?;
    }
    Ok(MuntzFit {
        residual_sup: residual.sup_norm(),
        residual_lp: residual.lp_norm(2.0),
        coefficients,
        residual,
        condition,
        warning,
    })
}

/// `m ↦ n ↦ q` coupling of the three indices of a density run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Schedule {
    /// `n = n_per_m · m`.
    pub n_per_m: u32,
    pub q_rule: QRule,
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule {
            n_per_m: 5,
            q_rule: QRule::Arctan,
        }
    }
}

impl Schedule {
    pub fn base(&self, template: BaseOperator, m: usize) -> BaseOperator {
        let n = self.n_per_m.saturating_mul(m.max(1) as u32);
        match template {
            BaseOperator::Quantum { .. } => BaseOperator::Quantum {
                n,
                q: self.q_rule.at(n),
            },
            other => other.with_order(n),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityRow {
    pub m: usize,
    pub n: u32,
    pub q: f64,
    pub class: LambdaClass,
    pub residual_sup: f64,
    pub residual_lp: f64,
}

pub fn density_csv(rows: &[DensityRow]) -> String {
    let mut t = Table::new(&["m", "n", "q", "lambda_class", "residual_sup", "residual_lp"]);
    for r in rows {
        t.push([
            r.m.to_string(),
            r.n.to_string(),
            r.q.to_string(),
            r.class.to_string(),
            r.residual_sup.to_string(),
            r.residual_lp.to_string(),
        ]);
    }
    t.to_csv()
}

/// Fits `target` by `{1, (x^{λ_1})_n, …, (x^{λ_m})_n}` for every `m`, with
/// `n` and `q` from `schedule` and partition, scaling and grid from
/// `template`. `residual_lp` is the residual's grid L^p norm.
pub fn density_experiment(
    target: &GridFunction,
    lambdas: &LambdaSequence,
    ms: &[usize],
    schedule: Schedule,
    template: &FractalSpec,
    p: f64,
) -> Result<Vec<DensityRow>> {
    if !(p.is_finite() && p >= 1.0) {
        return Err(Error::InvalidExponent(p));
    }
    let class = classify_lambda(lambdas, None)?.class;
    if let Some(&m) = ms.iter().find(|&&m| m > lambdas.len()) {
        return Err(Error::Domain(format!("m = {m} exceeds the {} exponents given", lambdas.len())));
    }
    ms.par_iter()
        .map(|&m| {
            let base = schedule.base(template.base, m);
            let spec = template.with_base(base);
            let exps: Vec<f64> = std::iter::once(0.0).chain(lambdas.exponents[..m].iter().copied()).collect();
            let basis = exps
                .par_iter()
                .map(|&l| fractal_monomial(l, &spec))
                .collect::<Result<Vec<_>>>()?;
            let fit = least_squares_fit(target, &basis)?;
            Ok(DensityRow {
                m,
                n: base.order(),
                q: base.q().get(),
                class,
                residual_sup: fit.residual_sup,
                residual_lp: fit.residual.lp_norm(p),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fractal::{Partition, ScalingVector};
    use crate::qcore::QParam;

    fn template(alpha: f64, n: u32, m: usize) -> FractalSpec {
        let p = Partition::uniform(0.0, 1.0, 3).unwrap();
        let a = ScalingVector::constants(&[alpha; 3], p.interval()).unwrap();
        let base = BaseOperator::Quantum {
            n,
            q: QParam::arctan_rule(n),
        };
        FractalSpec::new(Germ::power(1.0), p, a, base, m).unwrap()
    }

    #[test]
    fn classification_by_tag() {
        let h = classify_lambda(&LambdaSequence::harmonic(20), None).unwrap();
        assert_eq!(h.class, LambdaClass::DivergentSum);
        assert_eq!(h.partial_sums.len(), 20);
        let g = LambdaSequence::geometric(2.0, 20).unwrap();
        assert_eq!(classify_lambda(&g, Some(2.0)).unwrap().class, LambdaClass::ConvergentSum);
        let raw = LambdaSequence::new((1..=20).map(|i| (i as f64).sqrt()).collect(), None).unwrap();
        assert_eq!(classify_lambda(&raw, None).unwrap().class, LambdaClass::Undetermined);
        assert!(classify_lambda(&raw, Some(0.5)).is_err());
    }

    #[test]
    fn partial_sums_match_hand_values() {
        let s = classify_lambda(&LambdaSequence::harmonic(2), Some(2.0)).unwrap();
        let t = |l: f64| l / (l * l + 1.0);
        assert!((s.partial_sums[1] - (t(1.5) + t(2.5))).abs() < 1e-15);
    }

    #[test]
    fn rejects_malformed_sequences() {
        assert!(LambdaSequence::new(vec![1.0, 1.0], None).is_err());
        assert!(LambdaSequence::new(vec![0.0, 1.0], None).is_err());
        assert!(LambdaSequence::geometric(1.0, 3).is_err());
    }

    #[test]
    fn constant_monomial_is_fixed() {
        let spec = template(0.4, 5, 301);
        let one = fractal_monomial(0.0, &spec).unwrap();
        assert!(one.values().iter().all(|&v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn zero_alpha_monomial_is_plain() {
        let spec = template(0.0, 5, 301);
        let g = fractal_monomial(2.5, &spec).unwrap();
        let plain = Germ::power(2.5).sample(IntervalSpec::unit(), 301).unwrap();
        assert_eq!(g, plain);
    }

    #[test]
    fn monomial_interpolates_at_nodes() {
        let spec = template(0.5, 4, 301);
        let g = fractal_monomial(1.5, &spec).unwrap();
        for &x in spec.partition.nodes() {
            assert!((g.eval(x) - x.powf(1.5)).abs() < 1e-9);
        }
    }

    #[test]
    fn monomial_requires_unit_interval() {
        let p = Partition::uniform(0.0, 2.0, 2).unwrap();
        let a = ScalingVector::constants(&[0.1; 2], p.interval()).unwrap();
        let spec = FractalSpec::new(Germ::power(1.0), p, a, BaseOperator::Classical { n: 2 }, 101).unwrap();
        assert!(fractal_monomial(1.0, &spec).is_err());
    }

    #[test]
    fn fit_recovers_a_basis_member() {
        let i = IntervalSpec::unit();
        let basis: Vec<_> = (0..4)
            .map(|k| GridFunction::sample(i, 201, |x: f64| x.powi(k)).unwrap())
            .collect();
        let fit = least_squares_fit(&basis[2], &basis).unwrap();
        assert!(fit.residual_sup <= 1e-8);
        for (k, c) in fit.coefficients.iter().enumerate() {
            let want = if k == 2 { 1.0 } else { 0.0 };
            assert!((c - want).abs() < 1e-8);
        }
        assert!(fit.warning.is_none());
    }

    #[test]
    fn empty_basis_leaves_the_target() {
        let t = GridFunction::sample(IntervalSpec::unit(), 101, |x: f64| (3.0 * x).sin()).unwrap();
        let fit = least_squares_fit(&t, &[]).unwrap();
        assert_eq!(fit.residual_sup, t.sup_norm());
        assert_eq!(fit.residual_lp, t.lp_norm(2.0));
    }

    #[test]
    fn near_collinear_basis_warns_and_still_fits() {
        let i = IntervalSpec::unit();
        let a = GridFunction::sample(i, 101, |x: f64| x).unwrap();
        let b = GridFunction::sample(i, 101, |x: f64| x * (1.0 + 1e-15)).unwrap();
        let fit = least_squares_fit(&a, &[a.clone(), b]).unwrap();
        assert!(fit.warning.is_some());
        assert!(fit.residual_sup < 1e-8, "{fit:?}");
        assert!(fit.coefficients.iter().all(|c| c.is_finite()));
    }

    #[test]
    fn fit_rejects_foreign_grids_and_large_bases() {
        let t = GridFunction::constant(IntervalSpec::unit(), 11, 1.0).unwrap();
        let other = GridFunction::constant(IntervalSpec::unit(), 21, 1.0).unwrap();
        assert!(least_squares_fit(&t, &[other]).is_err());
        assert!(least_squares_fit(&t, &vec![t.clone(); 41]).is_err());
    }

    #[test]
    fn residual_shrinks_as_the_basis_grows() {
        let spec = template(0.2, 10, 301);
        let target = GridFunction::sample(IntervalSpec::unit(), 301, |x: f64| (std::f64::consts::PI * x).sin()).unwrap();
        let basis: Vec<_> = (0..7).map(|l| fractal_monomial(l as f64, &spec).unwrap()).collect();
        let res: Vec<f64> = (0..=basis.len())
            .map(|k| least_squares_fit(&target, &basis[..k]).unwrap().residual_lp)
            .collect();
        assert!(res.windows(2).all(|w| w[1] <= w[0] + 1e-9), "{res:?}");
    }
}
