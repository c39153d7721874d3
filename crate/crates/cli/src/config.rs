//! Run configuration: a TOML file with `[model]`, `[ansatz]`, `[sweep]`,
//! `[compare]`, `[montecarlo]`, `[output]` and `[quadrature]` sections.
//!
//! ```toml
//! [model]
//! ensemble = "mp"            # mp | projector | empirical
//! rate = 2.0                 # n/k; for empirical give `eigenvalues = "file"`
//! prior = "sparse-gaussian"  # sparse-gaussian | sparse-alphabet (alpha, a, kappa)
//! alpha = 0.1
//! utility = "l1"             # half-square | l1 | l0
//! alphabet = "prior"         # optional: "prior" or a list of points
//! lambda = 0.1               # or lambda_grid = [...] to minimize MSE over λ
//! snr_db = 10.0              # or lambda0 = 0.01
//!
//! [ansatz]
//! b = 0
//!
//! [sweep]
//! variable = "lambda"        # lambda | rate | snr
//! start = 0.05
//! stop = 0.5
//! points = 10
//! ```
//!
//! Quantities are linear internally; `snr_db` and the `snr` sweep are the
//! only places decibels enter.

use std::path::PathBuf;

use anyhow::{anyhow, bail, Context, Result};
use map_replica::montecarlo::MatrixKind;
use map_replica::{ModelConfig, Quadrature, SolverConfig, SourcePrior, SpectralEnsemble, Utility};
use serde::Deserialize;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSection,
    #[serde(default)]
    pub ansatz: AnsatzSection,
    pub sweep: Option<SweepSection>,
    pub compare: Option<CompareSection>,
    #[serde(default)]
    pub montecarlo: MonteCarloSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub quadrature: QuadratureSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnsembleName {
    Mp,
    Projector,
    Empirical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PriorName {
    SparseGaussian,
    SparseAlphabet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UtilityName {
    HalfSquare,
    L1,
    L0,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum AlphabetSpec {
    /// `"prior"`: the support of the source prior.
    Named(String),
    Points(Vec<f64>),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub ensemble: EnsembleName,
    pub rate: Option<f64>,
    pub eigenvalues: Option<PathBuf>,
    pub prior: PriorName,
    pub alpha: f64,
    pub a: Option<f64>,
    pub kappa: Option<usize>,
    pub utility: UtilityName,
    pub alphabet: Option<AlphabetSpec>,
    pub lambda: Option<f64>,
    pub lambda_grid: Option<Vec<f64>>,
    pub lambda0: Option<f64>,
    pub snr_db: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnsatzSection {
    pub b: usize,
    pub damping: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub mu_min: f64,
    pub mu_max: f64,
}

impl Default for AnsatzSection {
    fn default() -> Self {
        Self { b: 0, damping: 0.5, tol: 1e-10, max_iter: 5000, mu_min: 1e-4, mu_max: 50.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepVariable {
    Lambda,
    Rate,
    Snr,
}

impl SweepVariable {
    pub fn column(self) -> &'static str {
        match self {
            Self::Lambda => "lambda",
            Self::Rate => "rate",
            Self::Snr => "snr_db",
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub variable: SweepVariable,
    pub values: Option<Vec<f64>>,
    pub start: Option<f64>,
    pub stop: Option<f64>,
    pub points: Option<usize>,
    #[serde(default)]
    pub log: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CompareSection {
    pub levels: [usize; 2],
    pub epsilon: f64,
}

impl Default for CompareSection {
    fn default() -> Self {
        Self { levels: [0, 1], epsilon: 1e-3 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MonteCarloSection {
    pub enabled: bool,
    pub n: usize,
    pub instances: usize,
    pub seed: u64,
}

impl Default for MonteCarloSection {
    fn default() -> Self {
        Self { enabled: false, n: 500, instances: 20, seed: 1 }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuadratureSection {
    pub gh_order: usize,
    pub legendre_order: usize,
}

impl Default for QuadratureSection {
    fn default() -> Self {
        Self { gh_order: 61, legendre_order: 64 }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).context("invalid configuration")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let m = &self.model;
        match m.ensemble {
            EnsembleName::Empirical => {
                if m.eigenvalues.is_none() {
                    bail!("model.eigenvalues: required for the empirical ensemble");
                }
                if self.sweep_var() == Some(SweepVariable::Rate) {
                    bail!("sweep.variable: an empirical spectrum has no rate to sweep");
                }
            }
            _ => {
                if m.rate.is_none() && self.sweep_var() != Some(SweepVariable::Rate) {
                    bail!("model.rate: required unless the sweep runs over the rate");
                }
            }
        }
        if !(m.alpha > 0.0 && m.alpha <= 1.0) {
            bail!("model.alpha: must lie in (0, 1], got {}", m.alpha);
        }
        if m.prior == PriorName::SparseAlphabet && (m.a.is_none() || m.kappa.is_none()) {
            bail!("model.a, model.kappa: required for the sparse-alphabet prior");
        }
        match (m.lambda0, m.snr_db) {
            (Some(_), Some(_)) => bail!("model.lambda0, model.snr_db: give one, not both"),
            (None, None) if self.sweep_var() != Some(SweepVariable::Snr) => {
                bail!("model.lambda0 or model.snr_db: noise level missing")
            }
            _ => {}
        }
        if m.lambda.is_some() && m.lambda_grid.is_some() {
            bail!("model.lambda, model.lambda_grid: give one, not both");
        }
        if m.lambda.is_none() && m.lambda_grid.is_none() && self.sweep_var() != Some(SweepVariable::Lambda) {
            bail!("model.lambda: required unless λ is swept or optimized over model.lambda_grid");
        }
        if let Some(g) = &m.lambda_grid {
            if g.is_empty() || g.iter().any(|l| !(*l > 0.0)) {
                bail!("model.lambda_grid: needs positive entries");
            }
            if self.sweep_var() == Some(SweepVariable::Lambda) {
                bail!("model.lambda_grid: cannot optimize λ while sweeping it");
            }
        }
        if let Some(AlphabetSpec::Named(s)) = &m.alphabet {
            if s != "prior" {
                bail!("model.alphabet: expected \"prior\" or a list of points, got {s:?}");
            }
            if m.prior != PriorName::SparseAlphabet {
                bail!("model.alphabet: \"prior\" needs a discrete prior");
            }
        }
        if self.ansatz.b > 2 {
            bail!("ansatz.b: at most 2 breaking levels are supported, got {}", self.ansatz.b);
        }
        if let Some(s) = &self.sweep {
            self.grid().with_context(|| format!("sweep: {:?}", s.variable))?;
        }
        if let Some(c) = &self.compare {
            if c.levels.iter().any(|&b| b > 2) || c.levels[0] == c.levels[1] {
                bail!("compare.levels: need two distinct levels in 0..=2");
            }
            if !(c.epsilon > 0.0) {
                bail!("compare.epsilon: must be positive");
            }
        }
        let mc = &self.montecarlo;
        if mc.enabled {
            if m.ensemble == EnsembleName::Empirical {
                bail!("montecarlo.enabled: no matrix generator for an empirical spectrum");
            }
            if mc.n == 0 || mc.instances == 0 {
                bail!("montecarlo.n, montecarlo.instances: must be positive");
            }
            if m.utility == UtilityName::L0 && m.alphabet.is_none() {
                bail!("montecarlo.enabled: ℓ0 reconstruction is only simulated on a finite alphabet");
            }
            if m.alphabet.is_some() && mc.n > map_replica::montecarlo::MAX_EXHAUSTIVE_DIM {
                bail!(
                    "montecarlo.n: exhaustive alphabet search is limited to n <= {}",
                    map_replica::montecarlo::MAX_EXHAUSTIVE_DIM
                );
            }
        }
        if self.quadrature.gh_order < 2 || self.quadrature.legendre_order < 2 {
            bail!("quadrature: orders must be at least 2");
        }
        let d = &self.ansatz;
        if !(d.damping > 0.0 && d.damping <= 1.0) {
            bail!("ansatz.damping: must lie in (0, 1]");
        }
        if !(d.tol > 0.0) || d.max_iter == 0 {
            bail!("ansatz.tol, ansatz.max_iter: must be positive");
        }
        if !(d.mu_min > 0.0 && d.mu_min < d.mu_max) {
            bail!("ansatz.mu_min, ansatz.mu_max: need 0 < mu_min < mu_max");
        }
        Ok(())
    }

    pub fn sweep_var(&self) -> Option<SweepVariable> {
        self.sweep.as_ref().map(|s| s.variable)
    }

    /// Grid values of the sweep variable in file units (dB for snr).
    pub fn grid(&self) -> Result<Vec<f64>> {
        let s = self.sweep.as_ref().ok_or_else(|| anyhow!("sweep: section missing"))?;
        let values = match (&s.values, s.start, s.stop, s.points) {
            (Some(v), None, None, None) => v.clone(),
            (None, Some(a), Some(b), Some(n)) => {
                if n == 0 {
                    bail!("sweep.points: must be positive");
                }
                if s.log && !(a > 0.0 && b > 0.0) {
                    bail!("sweep.start, sweep.stop: log spacing needs positive ends");
                }
                (0..n)
                    .map(|i| {
                        let t = if n == 1 { 0.0 } else { i as f64 / (n - 1) as f64 };
                        if s.log {
                            (a.ln() + t * (b.ln() - a.ln())).exp()
                        } else {
                            a + t * (b - a)
                        }
                    })
                    .collect()
            }
            _ => bail!("sweep: give either values or start/stop/points"),
        };
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            bail!("sweep.values: need finite entries");
        }
        if s.variable != SweepVariable::Snr && values.iter().any(|v| *v <= 0.0) {
            bail!("sweep.values: {} must be positive", s.variable.column());
        }
        Ok(values)
    }

    pub fn quadrature(&self) -> Result<Quadrature> {
        Quadrature::new(self.quadrature.gh_order, self.quadrature.legendre_order).map_err(|e| anyhow!("quadrature: {e}"))
    }

    pub fn prior(&self) -> Result<SourcePrior> {
        let m = &self.model;
        match m.prior {
            PriorName::SparseGaussian => SourcePrior::sparse_gaussian(m.alpha),
            PriorName::SparseAlphabet => SourcePrior::sparse_alphabet(m.alpha, m.a.unwrap_or(1.0), m.kappa.unwrap_or(1)),
        }
        .map_err(|e| anyhow!("model.prior: {e}"))
    }

    pub fn utility(&self) -> Result<Utility> {
        let m = &self.model;
        let u = match m.utility {
            UtilityName::HalfSquare => Utility::half_square(),
            UtilityName::L1 => Utility::l1(),
            UtilityName::L0 => Utility::l0(),
        };
        match &m.alphabet {
            None => Ok(u),
            Some(AlphabetSpec::Points(p)) => u.on_alphabet(p.clone()).map_err(|e| anyhow!("model.alphabet: {e}")),
            Some(AlphabetSpec::Named(_)) => {
                let prior = self.prior()?;
                let support = prior.support().ok_or_else(|| anyhow!("model.alphabet: prior has no finite support"))?;
                u.on_alphabet(support.to_vec()).map_err(|e| anyhow!("model.alphabet: {e}"))
            }
        }
    }

    pub fn ensemble(&self, rate: Option<f64>) -> Result<SpectralEnsemble> {
        let m = &self.model;
        let r = rate.or(m.rate);
        match m.ensemble {
            EnsembleName::Mp => SpectralEnsemble::marcenko_pastur(r.ok_or_else(|| anyhow!("model.rate: missing"))?),
            EnsembleName::Projector => SpectralEnsemble::projector(r.ok_or_else(|| anyhow!("model.rate: missing"))?),
            EnsembleName::Empirical => {
                let path = m.eigenvalues.as_ref().ok_or_else(|| anyhow!("model.eigenvalues: missing"))?;
                SpectralEnsemble::from_file(path)
            }
        }
        .map_err(|e| anyhow!("model.ensemble: {e}"))
    }

    pub fn matrix_kind(&self) -> Option<MatrixKind> {
        match self.model.ensemble {
            EnsembleName::Mp => Some(MatrixKind::Iid),
            EnsembleName::Projector => Some(MatrixKind::Projector),
            EnsembleName::Empirical => None,
        }
    }

    /// The model at one sweep point. `value` is in file units; `lambda`
    /// overrides the configured estimation parameter.
    pub fn model_at(&self, value: Option<f64>, lambda: Option<f64>) -> Result<ModelConfig> {
        let var = self.sweep_var();
        let pick = |v: SweepVariable| if var == Some(v) { value } else { None };
        let prior = self.prior()?;
        let ensemble = self.ensemble(pick(SweepVariable::Rate))?;
        let lambda = lambda
            .or(pick(SweepVariable::Lambda))
            .or(self.model.lambda)
            .ok_or_else(|| anyhow!("model.lambda: missing"))?;
        let lambda0 = match (pick(SweepVariable::Snr), self.model.lambda0, self.model.snr_db) {
            (Some(db), _, _) => prior.lambda0_for_snr_db(db),
            (None, Some(l0), _) => l0,
            (None, None, Some(db)) => prior.lambda0_for_snr_db(db),
            (None, None, None) => bail!("model.lambda0: missing"),
        };
        ModelConfig::new(ensemble, prior, self.utility()?, lambda, lambda0).map_err(|e| anyhow!("model: {e}"))
    }

    pub fn rate_at(&self, value: Option<f64>) -> Option<f64> {
        if self.sweep_var() == Some(SweepVariable::Rate) {
            value
        } else {
            self.model.rate
        }
    }

    pub fn solver(&self, cfg: &ModelConfig, b: usize) -> SolverConfig {
        let a = &self.ansatz;
        let mut s = SolverConfig::for_model(cfg, b);
        s.damping = a.damping;
        s.tol = a.tol;
        s.max_iter = a.max_iter;
        s.mu_bracket = (a.mu_min, a.mu_max);
        s
    }
}
