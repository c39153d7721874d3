//! Predicted performance of a solved ansatz.

use std::fmt;
use std::sync::Arc;

use crate::quadrature::{std_normal_cdf, Quadrature};
use crate::replica::{Decoupled, ModelConfig, ReplicaState};
use crate::solver::FixedPointSolution;
use crate::{Error, Real, Result};

#[derive(Clone)]
pub enum Distortion<T> {
    /// `(x̂ - x)²`
    SquaredError,
    /// `1{x̂ ≠ x}`
    SymbolError,
    /// `x̂ᵏ xˡ`
    JointMoment(u32, u32),
    Custom(Arc<dyn Fn(T, T) -> T + Send + Sync>),
}

impl<T> fmt::Debug for Distortion<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::SquaredError => f.write_str("SquaredError"),
            Self::SymbolError => f.write_str("SymbolError"),
            Self::JointMoment(k, l) => write!(f, "JointMoment({k}, {l})"),
            Self::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

/// Joint moments above this total order are refused.
pub const MAX_MOMENT_ORDER: u32 = 8;

impl<T: Real> Distortion<T> {
    /// `d(x̂; x)`.
    pub fn eval(&self, x_hat: T, x: T) -> T {
        match self {
            Self::SquaredError => (x_hat - x).powi(2),
            Self::SymbolError => {
                if x_hat != x {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Self::JointMoment(k, l) => x_hat.powi(*k as i32) * x.powi(*l as i32),
            Self::Custom(d) => d(x_hat, x),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Self::JointMoment(k, l) if k + l > MAX_MOMENT_ORDER => {
                Err(Error::Argument(format!("joint moment order {} exceeds {MAX_MOMENT_ORDER}", k + l)))
            }
            _ => Ok(()),
        }
    }
}

/// `E d(g, x)` under the decoupled system of the solution's state.
pub fn predict<T: Real>(
    sol: &FixedPointSolution<T>,
    cfg: &ModelConfig<T>,
    d: &Distortion<T>,
    quad: &Quadrature<T>,
) -> Result<T> {
    predict_state(&sol.state, cfg, d, quad)
}

pub fn predict_state<T: Real>(
    state: &ReplicaState<T>,
    cfg: &ModelConfig<T>,
    d: &Distortion<T>,
    quad: &Quadrature<T>,
) -> Result<T> {
    d.validate()?;
    let f = |g: T, x: T| d.eval(g, x);
    Ok(Decoupled::new(state, cfg, quad)?.stats(Some(&f))?.distortion)
}

/// `MSE / E x²`.
pub fn normalized_mse<T: Real>(sol: &FixedPointSolution<T>, cfg: &ModelConfig<T>, quad: &Quadrature<T>) -> Result<T> {
    let p = cfg.prior.second_moment();
    if !(p > T::zero()) {
        return Err(Error::Argument("normalized MSE needs a prior with positive power".into()));
    }
    Ok(predict(sol, cfg, &Distortion::SquaredError, quad)? / p)
}

/// `P(x̂ = outputs[j] | x = inputs[i])`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalPmf<T> {
    pub inputs: Vec<T>,
    pub outputs: Vec<T>,
    pub probs: Vec<Vec<T>>,
}

impl<T: Real> ConditionalPmf<T> {
    pub fn get(&self, x: T, x_hat: T) -> T {
        match (self.inputs.iter().position(|v| *v == x), self.outputs.iter().position(|v| *v == x_hat)) {
            (Some(i), Some(j)) => self.probs[i][j],
            _ => T::zero(),
        }
    }
}

/// Conditional law of the quantizer output given the source symbol.
///
/// For b = 0 the cell masses are Gaussian CDF differences; for b ≥ 1 they are
/// tilted expectations of cell indicators.
pub fn conditional_pmf<T: Real>(
    sol: &FixedPointSolution<T>,
    cfg: &ModelConfig<T>,
    quad: &Quadrature<T>,
) -> Result<ConditionalPmf<T>> {
    conditional_pmf_state(&sol.state, cfg, quad)
}

pub fn conditional_pmf_state<T: Real>(
    state: &ReplicaState<T>,
    cfg: &ModelConfig<T>,
    quad: &Quadrature<T>,
) -> Result<ConditionalPmf<T>> {
    let outputs = cfg
        .utility
        .alphabet()
        .ok_or_else(|| Error::Unsupported("conditional pmf needs an alphabet support".into()))?
        .to_vec();
    let inputs = cfg
        .prior
        .support()
        .ok_or_else(|| Error::Unsupported("conditional pmf needs a discrete prior".into()))?
        .to_vec();
    let sys = Decoupled::new(state, cfg, quad)?;
    let cells = sys.denoiser.cells();
    let mut probs = vec![vec![T::zero(); outputs.len()]; inputs.len()];
    for (i, &x) in inputs.iter().enumerate() {
        if state.b() == 0 {
            let sd = sys.channel.lambda0_s.sqrt();
            let cdf = |edge: T| {
                if edge == T::infinity() {
                    T::one()
                } else if edge == T::neg_infinity() {
                    T::zero()
                } else if sd == T::zero() {
                    // Cells are closed on the right.
                    if x <= edge {
                        T::one()
                    } else {
                        T::zero()
                    }
                } else {
                    std_normal_cdf((edge - x) / sd)
                }
            };
            let mut lower = T::neg_infinity();
            for &(sym, upper) in cells {
                let j = outputs.iter().position(|v| *v == sym).expect("cell symbol from alphabet");
                probs[i][j] = cdf(upper) - cdf(lower);
                lower = upper;
            }
        } else {
            for &(sym, _) in cells {
                let j = outputs.iter().position(|v| *v == sym).expect("cell symbol from alphabet");
                let ind = |g: T, _x: T| if g == sym { T::one() } else { T::zero() };
                probs[i][j] = sys.stats_over(&[(x, T::one())], Some(&ind))?.distortion;
            }
        }
    }
    Ok(ConditionalPmf { inputs, outputs, probs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::denoisers::Utility;
    use crate::ensembles::SpectralEnsemble;
    use crate::sources::SourcePrior;
    use approx::assert_abs_diff_eq;

    fn binary_cfg() -> ModelConfig<f64> {
        ModelConfig::new(
            SpectralEnsemble::marcenko_pastur(2.0).unwrap(),
            SourcePrior::sparse_alphabet(0.1, 1.0, 1).unwrap(),
            Utility::l0().on_alphabet(vec![-1.0, 0.0, 1.0]).unwrap(),
            0.1,
            0.01,
        )
        .unwrap()
    }

    #[test]
    fn pmf_cell_mass() {
        let cfg = binary_cfg();
        let q = Quadrature::default();
        let s = ReplicaState::rs(0.05, 0.01);
        let pmf = conditional_pmf_state(&s, &cfg, &q).unwrap();
        let ch = crate::replica::effective_channel(&s, &cfg).unwrap();
        let v = 0.5 + ch.lambda_s;
        let sd = ch.lambda0_s.sqrt();
        let want = std_normal_cdf(v / sd) - std_normal_cdf(-v / sd);
        assert_abs_diff_eq!(pmf.get(0.0, 0.0), want, epsilon = 1e-14);
        for row in &pmf.probs {
            assert_abs_diff_eq!(row.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        }
        // Sign-flip symmetry.
        assert_abs_diff_eq!(pmf.get(1.0, -1.0), pmf.get(-1.0, 1.0), epsilon = 1e-15);
    }

    #[test]
    fn moments_and_bilinearity() {
        let cfg = binary_cfg();
        let q = Quadrature::default();
        let s = ReplicaState::rs(0.05, 0.01);
        let jm = |k, l| predict_state(&s, &cfg, &Distortion::JointMoment(k, l), &q).unwrap();
        assert_abs_diff_eq!(jm(0, 2), 0.1, epsilon = 1e-14);
        let mse = predict_state(&s, &cfg, &Distortion::SquaredError, &q).unwrap();
        assert_abs_diff_eq!(mse, jm(2, 0) - 2.0 * jm(1, 1) + jm(0, 2), epsilon = 1e-12);
        let pmf = conditional_pmf_state(&s, &cfg, &q).unwrap();
        let masses = cfg.prior.masses().unwrap();
        let mut via_pmf = 0.0;
        for (i, &x) in pmf.inputs.iter().enumerate() {
            for (j, &xh) in pmf.outputs.iter().enumerate() {
                via_pmf += x * xh * masses[i] * pmf.probs[i][j];
            }
        }
        assert_abs_diff_eq!(jm(1, 1), via_pmf, epsilon = 1e-12);
        assert!(predict_state(&s, &cfg, &Distortion::JointMoment(5, 4), &q).is_err());
    }

    #[test]
    fn tilted_pmf_is_stochastic() {
        let cfg = binary_cfg();
        let q = Quadrature::default();
        let s = ReplicaState::rsb(0.05, 0.01, vec![0.005], vec![2.0]).unwrap();
        let pmf = conditional_pmf_state(&s, &cfg, &q).unwrap();
        for row in &pmf.probs {
            assert_abs_diff_eq!(row.iter().sum::<f64>(), 1.0, epsilon = 1e-10);
        }
    }
}
