//! Germ functions: the continuous functions being fractalized.
//!
//! The closed-form families cover every function used by the worked
//! examples; `Tabulated` wraps arbitrary samples (without a derivative).

use crate::error::{Error, Result};
use crate::grid::{GridFunction, IntervalSpec, RealFunction};

#[derive(Debug, Clone, PartialEq)]
pub enum Germ {
    /// `amp·sin(freq·x) + offset`.
    Sine { amp: f64, freq: f64, offset: f64 },
    /// `Σ c_k x^k`, coefficients in ascending order.
    Polynomial { coeffs: Vec<f64> },
    /// `scale·(slope·x − shift)²`.
    Square { scale: f64, slope: f64, shift: f64 },
    /// `x^λ` for `λ >= 0` on a subset of `[0, ∞)`.
    Power { exponent: f64 },
    Tabulated(GridFunction),
}

impl Germ {
    pub fn sine(amp: f64, freq: f64, offset: f64) -> Germ {
        Germ::Sine { amp, freq, offset }
    }

    pub fn polynomial(coeffs: Vec<f64>) -> Germ {
        Germ::Polynomial { coeffs }
    }

    pub fn square(scale: f64, slope: f64, shift: f64) -> Germ {
        Germ::Square { scale, slope, shift }
    }

    pub fn power(exponent: f64) -> Germ {
        Germ::Power { exponent }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Germ::Sine { amp, freq, offset } => amp * (freq * x).sin() + offset,
            Germ::Polynomial { coeffs } => coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c),
            Germ::Square { scale, slope, shift } => {
                let u = slope * x - shift;
                scale * u * u
            }
            Germ::Power { exponent } => {
                if *exponent == 0.0 {
                    1.0
                } else {
                    x.max(0.0).powf(*exponent)
                }
            }
            Germ::Tabulated(g) => g.eval(x),
        }
    }

    /// Closed-form derivative, if the family has one.
    pub fn derivative(&self, x: f64) -> Option<f64> {
        match self {
            Germ::Sine { amp, freq, .. } => Some(amp * freq * (freq * x).cos()),
            Germ::Polynomial { coeffs } => Some(
                coeffs
                    .iter()
                    .enumerate()
                    .skip(1)
                    .rev()
                    .fold(0.0, |acc, (k, c)| acc * x + k as f64 * c),
            ),
            Germ::Square { scale, slope, shift } => Some(2.0 * scale * slope * (slope * x - shift)),
            Germ::Power { exponent } => Some(if *exponent == 0.0 {
                0.0
            } else {
                exponent * x.max(0.0).powf(exponent - 1.0)
            }),
            Germ::Tabulated(_) => None,
        }
    }

    pub fn has_derivative(&self) -> bool {
        !matches!(self, Germ::Tabulated(_))
    }

    pub fn sample(&self, interval: IntervalSpec, m: usize) -> Result<GridFunction> {
        match self {
            Germ::Tabulated(g) if g.interval() == interval => g.resample(m),
            _ => GridFunction::sample(interval, m, |x| self.eval(x)),
        }
    }

    pub fn sample_derivative(&self, interval: IntervalSpec, m: usize) -> Result<GridFunction> {
        if !self.has_derivative() {
            return Err(Error::MissingDerivative(self.name()));
        }
        GridFunction::sample(interval, m, |x| self.derivative(x).unwrap_or(f64::NAN))
    }

    /// Human-readable formula, used in report headers.
    pub fn name(&self) -> String {
        match self {
            Germ::Sine { amp, freq, offset } => format!("{amp}*sin({freq}*x)+{offset}"),
            Germ::Polynomial { coeffs } => {
                let terms: Vec<String> = coeffs
                    .iter()
                    .enumerate()
                    .map(|(k, c)| format!("{c}*x^{k}"))
                    .collect();
                terms.join("+")
            }
            Germ::Square { scale, slope, shift } => format!("{scale}*({slope}*x-{shift})^2"),
            Germ::Power { exponent } => format!("x^{exponent}"),
            Germ::Tabulated(g) => format!("tabulated[{}]", g.len()),
        }
    }
}

impl RealFunction for Germ {
    fn value(&self, x: f64) -> f64 {
        self.eval(x)
    }
}
