//! TOML experiment configuration. One file describes one experiment; unknown
//! keys are rejected so typos surface as config errors.

use std::path::{Path, PathBuf};

use qmkz::fractal::{default_grid_size, grid_size_at_least};
use qmkz::qcore::QRule;
use qmkz::{BaseOperator, FractalSpec, Germ, GridFunction, IntervalSpec, Partition, QParam, ScalingFunction, ScalingVector};
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub germ: GermConfig,
    /// Second function for the ordering modes of `constrain`.
    pub g: Option<GermConfig>,
    #[serde(default = "unit_interval")]
    pub interval: [f64; 2],
    pub partition: PartitionConfig,
    pub alpha: Vec<AlphaConfig>,
    pub base: BaseConfig,
    pub q_rule: Option<QRuleConfig>,
    pub n_range: Option<[u32; 2]>,
    #[serde(default = "default_p")]
    pub p: f64,
    pub grid_size: Option<usize>,
    pub tol: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub constrain: ConstrainConfig,
    #[serde(default)]
    pub converge: ConvergeConfig,
    #[serde(default)]
    pub dimension: DimensionConfig,
    #[serde(default)]
    pub muntz: MuntzConfig,
}

fn unit_interval() -> [f64; 2] {
    [0.0, 1.0]
}

fn default_p() -> f64 {
    2.0
}

/// The named example functions, plus generic families and sample files.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum GermConfig {
    /// `sin(k x)`.
    Sin { k: f64 },
    /// `sin(πx) + c`.
    SinPiPlus { c: f64 },
    /// `Σ c_k x^k`, ascending.
    Polynomial { coeffs: Vec<f64> },
    /// `x^λ`.
    Power { lambda: f64 },
    /// `0.5 sin(4πx) + 1`.
    Wave,
    /// `−0.5 (2x − 1.1)²`.
    ShiftedParabola,
    /// `−(2x − 1)²`.
    Parabola,
    /// Samples in `x,value` CSV form.
    Samples { path: PathBuf },
}

impl GermConfig {
    pub fn to_germ(&self, base_dir: &Path) -> Result<Germ, CliError> {
        use std::f64::consts::PI;
        Ok(match self {
            GermConfig::Sin { k } => Germ::sine(1.0, *k, 0.0),
            GermConfig::SinPiPlus { c } => Germ::sine(1.0, PI, *c),
            GermConfig::Polynomial { coeffs } => Germ::polynomial(coeffs.clone()),
            GermConfig::Power { lambda } => Germ::power(*lambda),
            GermConfig::Wave => Germ::sine(0.5, 4.0 * PI, 1.0),
            GermConfig::ShiftedParabola => Germ::square(-0.5, 2.0, 1.1),
            GermConfig::Parabola => Germ::square(-1.0, 2.0, 1.0),
            GermConfig::Samples { path } => {
                let path = base_dir.join(path);
                let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
                let g = GridFunction::from_csv(&text).map_err(|e| CliError::config("germ.path", e))?;
                Germ::Tabulated(g)
            }
        })
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum PartitionConfig {
    Intervals(usize),
    Nodes(Vec<f64>),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AlphaConfig {
    Constant { c: f64 },
    /// `c / (1 + e^{−a x})`.
    Sigmoid { c: f64, a: f64 },
    /// `c / (1 + x²)`.
    InverseQuadratic { c: f64 },
}

impl AlphaConfig {
    fn to_scaling(&self) -> ScalingFunction {
        match *self {
            AlphaConfig::Constant { c } => ScalingFunction::Constant(c),
            AlphaConfig::Sigmoid { c, a } => ScalingFunction::sigmoid(c, a),
            AlphaConfig::InverseQuadratic { c } => ScalingFunction::InverseQuadratic { c },
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BaseConfig {
    /// `q` omitted means "take it from `q_rule`".
    Quantum { n: u32, q: Option<f64> },
    Classical { n: u32 },
    Integral { n: u32 },
}

/// Either `"arctan"` for `q_n = (2/π) arctan n` or a fixed `q`.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(untagged)]
pub enum QRuleConfig {
    Named(QRuleName),
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QRuleName {
    Arctan,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstrainMode {
    #[default]
    Positivity,
    OneSided,
    Dominance,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstrainConfig {
    #[serde(default)]
    pub mode: ConstrainMode,
    /// Constant scaling vectors drawn inside the shrunken brackets.
    #[serde(default)]
    pub random_samples: usize,
    #[serde(default = "default_margin")]
    pub margin: f64,
}

fn default_margin() -> f64 {
    1e-3
}

impl Default for ConstrainConfig {
    fn default() -> Self {
        ConstrainConfig {
            mode: ConstrainMode::default(),
            random_samples: 0,
            margin: default_margin(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BoundConfig {
    /// `(5/2) ω(f, 1/√[n]_q) r` with `q` from `q_rule`.
    #[default]
    Quantum,
    /// `(31/27) ω(f, 1/√n) r`.
    Classical,
    /// Derivative-modulus bound.
    C1,
    /// Hölder-rate bound for `|f'(x) − f'(y)| ≤ a |x − y|^β`.
    Holder { beta: f64, a: f64 },
    /// Pointwise ordering of consecutive orders.
    Monotone,
}

#[derive(Debug, Clone, Copy, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergeConfig {
    #[serde(default)]
    pub bound: BoundConfig,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DimensionConfig {
    #[serde(default = "one")]
    pub beta: f64,
    #[serde(default = "default_points")]
    pub min_points: usize,
    #[serde(default = "default_slack")]
    pub slack: f64,
}

fn one() -> f64 {
    1.0
}

fn default_points() -> usize {
    1_000_000
}

fn default_slack() -> f64 {
    0.1
}

impl Default for DimensionConfig {
    fn default() -> Self {
        DimensionConfig {
            beta: 1.0,
            min_points: default_points(),
            slack: default_slack(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LambdaConfig {
    /// `λ_i = i`.
    Harmonic,
    /// `λ_i = ratio^i`.
    Geometric { ratio: f64 },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MuntzConfig {
    pub lambdas: Vec<LambdaConfig>,
    #[serde(default = "default_m_max")]
    pub m_max: usize,
    #[serde(default = "default_n_per_m")]
    pub n_per_m: u32,
}

fn default_m_max() -> usize {
    12
}

fn default_n_per_m() -> u32 {
    5
}

impl Default for MuntzConfig {
    fn default() -> Self {
        MuntzConfig {
            lambdas: vec![LambdaConfig::Harmonic, LambdaConfig::Geometric { ratio: 2.0 }],
            m_max: default_m_max(),
            n_per_m: default_n_per_m(),
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub grid: Option<usize>,
    pub tol: Option<f64>,
    pub seed: Option<u64>,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(format!("config: {}", e.message().trim())))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if o.grid.is_some() {
            self.grid_size = o.grid;
        }
        if o.tol.is_some() {
            self.tol = o.tol;
        }
        if let Some(s) = o.seed {
            self.seed = s;
        }
    }

    pub fn interval(&self) -> Result<IntervalSpec, CliError> {
        IntervalSpec::new(self.interval[0], self.interval[1]).map_err(|e| CliError::config("interval", e))
    }

    pub fn partition(&self) -> Result<Partition, CliError> {
        let p = match &self.partition {
            PartitionConfig::Intervals(k) => Partition::uniform(self.interval[0], self.interval[1], *k),
            PartitionConfig::Nodes(nodes) => Partition::new(nodes.clone()),
        };
        let p = p.map_err(|e| CliError::config("partition", e))?;
        if p.interval() != self.interval()? {
            return Err(CliError::Config(format!(
                "partition: nodes span [{}, {}] but interval is [{}, {}]",
                p.interval().x1(),
                p.interval().xn(),
                self.interval[0],
                self.interval[1]
            )));
        }
        Ok(p)
    }

    pub fn q_rule(&self) -> Result<QRule, CliError> {
        match self.q_rule {
            None | Some(QRuleConfig::Named(QRuleName::Arctan)) => Ok(QRule::Arctan),
            Some(QRuleConfig::Fixed(q)) => QParam::new(q)
                .map(QRule::Fixed)
                .map_err(|e| CliError::config("q_rule", e)),
        }
    }

    pub fn base(&self) -> Result<BaseOperator, CliError> {
        Ok(match self.base {
            BaseConfig::Quantum { n, q } => {
                let q = match q {
                    Some(q) => QParam::new(q).map_err(|e| CliError::config("base.q", e))?,
                    None => self.q_rule()?.at(n),
                };
                BaseOperator::Quantum { n, q }
            }
            BaseConfig::Classical { n } => BaseOperator::Classical { n },
            BaseConfig::Integral { n } => BaseOperator::Integral { n },
        })
    }

    pub fn n_values(&self, min: u32) -> Result<Vec<u32>, CliError> {
        let [lo, hi] = self.n_range.ok_or_else(|| CliError::Config("n_range: required for this command".into()))?;
        if lo < min || hi < lo {
            return Err(CliError::Config(format!("n_range: need {min} <= lo <= hi, got [{lo}, {hi}]")));
        }
        Ok((lo..=hi).collect())
    }

    /// Builds the fractal specification for `germ` (the primary germ or `g`).
    pub fn spec_for(&self, germ: Germ) -> Result<FractalSpec, CliError> {
        let partition = self.partition()?;
        let funcs: Vec<ScalingFunction> = self.alpha.iter().map(AlphaConfig::to_scaling).collect();
        let alpha = ScalingVector::new(funcs, partition.interval()).map_err(|e| CliError::config("alpha", e))?;
        let m = match self.grid_size {
            Some(m) => grid_size_at_least(&partition, m),
            None => default_grid_size(&partition),
        }
        .map_err(|e| CliError::config("grid_size", e))?;
        let mut spec =
            FractalSpec::new(germ, partition, alpha, self.base()?, m).map_err(|e| CliError::config("alpha", e))?;
        if let Some(tol) = self.tol {
            if !(tol.is_finite() && tol > 0.0) {
                return Err(CliError::Config(format!("tol: must be positive, got {tol}")));
            }
            spec = spec.with_tol(tol);
        }
        Ok(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_configs_build_specs() {
        let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
        let mut seen = 0;
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.extension().and_then(|e| e.to_str()) != Some("toml") {
                continue;
            }
            let cfg = ExperimentConfig::load(&path).unwrap();
            let germ = cfg.germ.to_germ(&dir).unwrap();
            cfg.spec_for(germ).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            seen += 1;
        }
        assert!(seen >= 8);
    }

    #[test]
    fn q_rule_accepts_name_or_number() {
        let base = "germ = { name = \"wave\" }\npartition = 3\nalpha = []\nbase = { kind = \"quantum\", n = 4 }\n";
        let named = ExperimentConfig::parse(&format!("{base}q_rule = \"arctan\"")).unwrap();
        assert_eq!(named.base().unwrap().q(), QParam::arctan_rule(4));
        let fixed = ExperimentConfig::parse(&format!("{base}q_rule = 0.5")).unwrap();
        assert_eq!(fixed.base().unwrap().q().get(), 0.5);
        assert!(ExperimentConfig::parse(&format!("{base}q_rule = \"linear\"")).is_err());
        let bad = ExperimentConfig::parse(&format!("{base}q_rule = 1.5")).unwrap();
        assert!(matches!(bad.base(), Err(CliError::Config(m)) if m.starts_with("q_rule")));
    }
}
