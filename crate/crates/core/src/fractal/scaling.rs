use crate::error::{Error, Result};
use crate::grid::{GridFunction, IntervalSpec};

/// One scaling function `α_i : I → ℝ`.
#[derive(Debug, Clone, PartialEq)]
pub enum ScalingFunction {
    Constant(f64),
    /// `c / (1 + e^{-a x})`.
    Sigmoid { c: f64, a: f64 },
    /// `c / (1 + x²)`.
    InverseQuadratic { c: f64 },
    Tabulated(GridFunction),
}

impl ScalingFunction {
    pub fn sigmoid(c: f64, a: f64) -> Self {
        ScalingFunction::Sigmoid { c, a }
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            ScalingFunction::Constant(c) => *c,
            ScalingFunction::Sigmoid { c, a } => c / (1.0 + (-a * x).exp()),
            ScalingFunction::InverseQuadratic { c } => c / (1.0 + x * x),
            ScalingFunction::Tabulated(g) => g.eval(x),
        }
    }

    /// `sup_{x ∈ I} |α(x)|`, in closed form for the analytic families.
    pub fn sup_norm(&self, interval: &IntervalSpec) -> f64 {
        let (x1, xn) = (interval.x1(), interval.xn());
        match self {
            ScalingFunction::Constant(c) => c.abs(),
            // Monotone in x.
            ScalingFunction::Sigmoid { .. } => self.eval(x1).abs().max(self.eval(xn).abs()),
            ScalingFunction::InverseQuadratic { .. } => {
                let nearest = 0f64.clamp(x1, xn);
                self.eval(nearest).abs()
            }
            // Linear interpolation attains its extrema at the samples.
            ScalingFunction::Tabulated(g) => g.sup_norm(),
        }
    }

    pub fn as_constant(&self) -> Option<f64> {
        match self {
            ScalingFunction::Constant(c) => Some(*c),
            _ => None,
        }
    }

    fn is_finite(&self) -> bool {
        match self {
            ScalingFunction::Constant(c) | ScalingFunction::InverseQuadratic { c } => c.is_finite(),
            ScalingFunction::Sigmoid { c, a } => c.is_finite() && a.is_finite(),
            ScalingFunction::Tabulated(_) => true,
        }
    }
}

/// The scaling vector `α = (α_1, …, α_{N-1})` with cached sup norms over `I`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingVector {
    funcs: Vec<ScalingFunction>,
    norms: Vec<f64>,
    interval: IntervalSpec,
}

impl ScalingVector {
    pub fn new(funcs: Vec<ScalingFunction>, interval: IntervalSpec) -> Result<Self> {
        if funcs.is_empty() {
            return Err(Error::InvalidScaling("no scaling functions".into()));
        }
        if let Some(i) = funcs.iter().position(|f| !f.is_finite()) {
            return Err(Error::InvalidScaling(format!("alpha_{} has non-finite parameters", i + 1)));
        }
        for (i, f) in funcs.iter().enumerate() {
            if let ScalingFunction::Tabulated(g) = f {
                if g.interval() != interval {
                    return Err(Error::InvalidScaling(format!(
                        "alpha_{} is tabulated on [{}, {}], expected [{}, {}]",
                        i + 1,
                        g.interval().x1(),
                        g.interval().xn(),
                        interval.x1(),
                        interval.xn()
                    )));
                }
            }
        }
        let norms = funcs.iter().map(|f| f.sup_norm(&interval)).collect();
        Ok(ScalingVector {
            funcs,
            norms,
            interval,
        })
    }

    pub fn zeros(count: usize, interval: IntervalSpec) -> Result<Self> {
        ScalingVector::new(vec![ScalingFunction::Constant(0.0); count], interval)
    }

    pub fn constants(values: &[f64], interval: IntervalSpec) -> Result<Self> {
        ScalingVector::new(values.iter().map(|&c| ScalingFunction::Constant(c)).collect(), interval)
    }

    pub fn sigmoids(coeffs: &[f64], a: f64, interval: IntervalSpec) -> Result<Self> {
        ScalingVector::new(coeffs.iter().map(|&c| ScalingFunction::sigmoid(c, a)).collect(), interval)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.funcs.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.funcs.is_empty()
    }

    pub fn interval(&self) -> IntervalSpec {
        self.interval
    }

    pub fn functions(&self) -> &[ScalingFunction] {
        &self.funcs
    }

    #[inline]
    pub fn eval(&self, i: usize, x: f64) -> f64 {
        self.funcs[i].eval(x)
    }

    pub fn component_norms(&self) -> &[f64] {
        &self.norms
    }

    /// `‖α‖_∞ = max_i ‖α_i‖_∞`.
    pub fn norm(&self) -> f64 {
        self.norms.iter().copied().fold(0.0, f64::max)
    }

    pub fn is_zero(&self) -> bool {
        self.norm() == 0.0
    }

    /// The constant values when every component is constant.
    pub fn as_constants(&self) -> Option<Vec<f64>> {
        self.funcs.iter().map(ScalingFunction::as_constant).collect()
    }
}
