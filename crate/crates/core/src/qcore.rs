//! q-integers, q-factorials and q-binomial coefficients in floating point.

use crate::error::{Error, Result};

/// The quantum parameter `q`, restricted to `(0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct QParam(f64);

impl QParam {
    pub const ONE: QParam = QParam(1.0);

    pub fn new(q: f64) -> Result<Self> {
        if q.is_finite() && q > 0.0 && q <= 1.0 {
            Ok(QParam(q))
        } else {
            Err(Error::InvalidQ(q))
        }
    }

    /// The schedule `q_n = (2/π) arctan n` used throughout the worked examples.
    pub fn arctan_rule(n: u32) -> QParam {
        let q = std::f64::consts::FRAC_2_PI * f64::from(n).atan();
        // arctan n < π/2 for finite n, so q < 1; n = 0 would give q = 0.
        QParam(q.clamp(f64::MIN_POSITIVE, 1.0))
    }

    #[inline]
    pub fn get(self) -> f64 {
        self.0
    }

    #[inline]
    pub fn is_classical(self) -> bool {
        self.0 == 1.0
    }
}

impl std::fmt::Display for QParam {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// How `q` is chosen for operator order `n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum QRule {
    Fixed(QParam),
    /// `q_n = (2/π) arctan n`.
    Arctan,
}

impl QRule {
    pub fn at(self, n: u32) -> QParam {
        match self {
            QRule::Fixed(q) => q,
            QRule::Arctan => QParam::arctan_rule(n),
        }
    }
}

/// `[k]_q = (1 - q^k)/(1 - q)`, and `k` when `q = 1`.
pub fn q_integer(k: u64, q: QParam) -> f64 {
    if q.is_classical() {
        return k as f64;
    }
    if k == 0 {
        return 0.0;
    }
    // expm1 keeps full relative accuracy when q^k is close to 1.
    let ln_q = q.0.ln();
    (k as f64 * ln_q).exp_m1() / ln_q.exp_m1()
}

/// `[k]_q! = [k]_q [k-1]_q ... [1]_q`, with `[0]_q! = 1`.
pub fn q_factorial(k: u64, q: QParam) -> f64 {
    (1..=k).fold(1.0, |acc, j| acc * q_integer(j, q))
}

/// Gaussian binomial coefficient `[n choose k]_q`.
///
/// Evaluated as the product `Π_{i=1}^{k} [n-k+i]_q / [i]_q` over the smaller
/// of `k` and `n - k`, so no factorial is ever formed.
pub fn q_binomial(n: i64, k: i64, q: QParam) -> Result<f64> {
    if k < 0 || n < k {
        return Err(Error::BinomialDomain { n, k });
    }
    let k = k.min(n - k) as u64;
    let n = n as u64;
    let mut acc = 1.0;
    for i in 1..=k {
        // Each factor pairs a large numerator with a small denominator.
        acc = acc * q_integer(n - k + i, q) / q_integer(i, q);
    }
    Ok(acc)
}
