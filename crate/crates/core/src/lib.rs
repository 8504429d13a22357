//! Quantum Meyer-König-Zeller (MKZ) α-fractal functions.
//!
//! The crate evaluates the MKZ operator families (quantum, classical and
//! integral), computes α-fractal functions as fixed points of the
//! Read-Bajraktarević operator on a uniform sample grid, derives scaling
//! bounds for shape-constrained approximation, and runs the verification
//! experiments (convergence bounds, monotonicity, box dimension, L^p error,
//! Müntz density).
//!
//! ```
//! use qmkz::{BaseOperator, FractalSpec, Germ, Partition, QParam, ScalingFunction, ScalingVector};
//!
//! let partition = Partition::uniform(0.0, 1.0, 3).unwrap();
//! let alpha = ScalingVector::new(
//!     vec![ScalingFunction::Constant(0.3); 3],
//!     partition.interval(),
//! )
//! .unwrap();
//! let base = BaseOperator::Quantum { n: 4, q: QParam::new(0.8).unwrap() };
//! let spec = FractalSpec::new(Germ::sine(1.0, 1.0, 0.0), partition, alpha, base, 301).unwrap();
//! let solution = qmkz::solve_fixed_point(&spec).unwrap();
//! assert!(solution.residual <= 1e-10);
//! ```

pub mod analysis;
pub mod constraints;
pub mod error;
pub mod fractal;
pub mod germ;
pub mod grid;
pub mod mkz;
pub mod muntz;
pub mod qcore;
pub mod table;

pub use error::{Error, Result};
pub use fractal::{
    build_maps, lp_contraction_factor, rb_apply, solve_fixed_point, solve_lp_fixed_point,
    AffineMaps, BaseOperator, FractalSpec, Partition, ScalingFunction, ScalingVector, Solution,
};
pub use germ::Germ;
pub use grid::{GridFunction, IntervalSpec, RealFunction};
pub use mkz::MkzConfig;
pub use qcore::QParam;
