//! Priors of a single source entry.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::quadrature::GaussHermiteRule;
use crate::{Error, Real, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum PriorKind<T> {
    /// `(1-α) δ₀ + α N(0, 1)`.
    SparseGaussian { alpha: T },
    /// `{0} ∪ {±a, ..., ±κa}`, zero with probability `1-α`.
    SparseFiniteAlphabet { alpha: T, a: T, kappa: usize },
    PointMasses,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SourcePrior<T> {
    kind: PriorKind<T>,
    // Discrete part: sorted distinct values with their masses.  For the
    // sparse Gaussian this is just the atom at zero.
    values: Vec<T>,
    probs: Vec<T>,
}

impl<T: Real> SourcePrior<T> {
    pub fn sparse_gaussian(alpha: T) -> Result<Self> {
        check_prob(alpha, "alpha")?;
        Ok(Self { kind: PriorKind::SparseGaussian { alpha }, values: vec![T::zero()], probs: vec![T::one() - alpha] })
    }

    pub fn sparse_alphabet(alpha: T, a: T, kappa: usize) -> Result<Self> {
        check_prob(alpha, "alpha")?;
        if !(a > T::zero() && a.is_finite()) {
            return Err(Error::Argument(format!("alphabet spacing a must be positive, got {a}")));
        }
        if kappa == 0 {
            return Err(Error::Argument("kappa must be a positive integer".into()));
        }
        let each = alpha / T::of_usize(2 * kappa);
        let mut values = Vec::with_capacity(2 * kappa + 1);
        let mut probs = Vec::with_capacity(2 * kappa + 1);
        for k in (1..=kappa).rev() {
            values.push(-a * T::of_usize(k));
            probs.push(each);
        }
        values.push(T::zero());
        probs.push(T::one() - alpha);
        for k in 1..=kappa {
            values.push(a * T::of_usize(k));
            probs.push(each);
        }
        Ok(Self { kind: PriorKind::SparseFiniteAlphabet { alpha, a, kappa }, values, probs })
    }

    pub fn point_masses(values: Vec<T>, probs: Vec<T>) -> Result<Self> {
        if values.len() != probs.len() || values.is_empty() {
            return Err(Error::Argument("point masses need equally many values and probabilities".into()));
        }
        for &p in &probs {
            check_prob(p, "probability")?;
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Argument(format!("point mass at non-finite value {v}")));
        }
        let total: T = probs.iter().copied().sum();
        if (total - T::one()).abs() > T::lit(1e-12) {
            return Err(Error::Argument(format!("probabilities sum to {total}, not 1")));
        }
        let mut pairs: Vec<(T, T)> = values.into_iter().zip(probs).collect();
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let mut merged: Vec<(T, T)> = Vec::with_capacity(pairs.len());
        for (v, p) in pairs {
            match merged.last_mut() {
                Some(last) if last.0 == v => last.1 = last.1 + p,
                _ => merged.push((v, p)),
            }
        }
        let (values, probs) = merged.into_iter().unzip();
        Ok(Self { kind: PriorKind::PointMasses, values, probs })
    }

    pub fn kind(&self) -> &PriorKind<T> {
        &self.kind
    }

    /// Sorted support for purely discrete priors.
    pub fn support(&self) -> Option<&[T]> {
        self.is_discrete().then_some(&self.values[..])
    }

    /// Masses aligned with [`SourcePrior::support`].
    pub fn masses(&self) -> Option<&[T]> {
        self.is_discrete().then_some(&self.probs[..])
    }

    pub fn is_discrete(&self) -> bool {
        !matches!(self.kind, PriorKind::SparseGaussian { .. })
    }

    pub fn is_symmetric(&self) -> bool {
        let n = self.values.len();
        (0..n).all(|i| self.values[i] == -self.values[n - 1 - i] && self.probs[i] == self.probs[n - 1 - i])
    }

    pub fn second_moment(&self) -> T {
        let disc: T = self.values.iter().zip(&self.probs).map(|(&v, &p)| p * v * v).sum();
        match self.kind {
            PriorKind::SparseGaussian { alpha } => alpha,
            _ => disc,
        }
    }

    /// Quadrature atoms `(x, weight)` representing the prior: exact masses
    /// for the discrete part, Gauss-Hermite nodes for the Gaussian part.
    pub fn atoms(&self, rule: &GaussHermiteRule<T>) -> Vec<(T, T)> {
        let mut out: Vec<(T, T)> =
            self.values.iter().copied().zip(self.probs.iter().copied()).filter(|a| a.1 > T::zero()).collect();
        if let PriorKind::SparseGaussian { alpha } = self.kind {
            if alpha > T::zero() {
                out.extend(rule.iter().map(|(z, w)| (z, alpha * w)));
            }
        }
        out
    }

    /// `E f(x)`.
    pub fn expect_source(&self, mut f: impl FnMut(T) -> T, rule: &GaussHermiteRule<T>) -> Result<T> {
        let mut acc = T::zero();
        for (x, w) in self.atoms(rule) {
            let v = f(x);
            if !v.is_finite() {
                return Err(Error::Evaluation { node: x.as_f64(), value: v.as_f64() });
            }
            acc = acc + w * v;
        }
        Ok(acc)
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<T> {
        (0..n).map(|_| self.draw(rng)).collect()
    }

    /// `n` i.i.d. draws from a ChaCha generator seeded with `seed`.
    pub fn sample_source(&self, n: usize, seed: u64) -> Vec<T> {
        self.sample(n, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> T {
        let u: f64 = rng.gen();
        if let PriorKind::SparseGaussian { alpha } = self.kind {
            return if u < alpha.as_f64() {
                let g: f64 = StandardNormal.sample(rng);
                T::lit(g)
            } else {
                T::zero()
            };
        }
        let mut acc = 0.0;
        for (v, p) in self.values.iter().zip(&self.probs) {
            acc += p.as_f64();
            if u < acc {
                return *v;
            }
        }
        // Rounding left the cumulative sum just below 1.
        let last = self.probs.iter().rposition(|p| *p > T::zero()).unwrap_or(0);
        self.values[last]
    }

    /// `E x² / λ₀` on a linear scale.
    pub fn snr(&self, lambda0: T) -> Result<T> {
        if !(lambda0 > T::zero()) {
            return Err(Error::Argument(format!("noise variance must be positive, got {lambda0}")));
        }
        Ok(self.second_moment() / lambda0)
    }

    /// Noise variance giving the requested snr in dB.
    pub fn lambda0_for_snr_db(&self, snr_db: T) -> T {
        self.second_moment() / T::lit(10.0).powf(snr_db / T::lit(10.0))
    }
}

fn check_prob<T: Real>(p: T, name: &str) -> Result<()> {
    if p >= T::zero() && p <= T::one() {
        Ok(())
    } else {
        Err(Error::Argument(format!("{name} must lie in [0, 1], got {p}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn gh() -> GaussHermiteRule<f64> {
        GaussHermiteRule::new(61).unwrap()
    }

    #[test]
    fn moments() {
        let sg = SourcePrior::sparse_gaussian(0.1).unwrap();
        assert_abs_diff_eq!(sg.expect_source(|x| x * x, &gh()).unwrap(), 0.1, epsilon = 1e-13);
        let sb = SourcePrior::sparse_alphabet(0.1, 1.0, 1).unwrap();
        assert_abs_diff_eq!(sb.expect_source(|x| x * x, &gh()).unwrap(), 0.1, epsilon = 1e-15);
        assert_abs_diff_eq!(sb.expect_source(|_| 1.0, &gh()).unwrap(), 1.0, epsilon = 1e-15);
        let s2 = SourcePrior::sparse_alphabet(0.1, 1.0, 2).unwrap();
        // α a² (κ+1)(2κ+1)/6 with κ = 2
        assert_abs_diff_eq!(s2.second_moment(), 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(s2.snr(0.05).unwrap(), 5.0, epsilon = 1e-12);
        assert_abs_diff_eq!(sg.snr(0.01).unwrap(), 10.0, epsilon = 1e-12);
        assert!(sg.snr(0.0).is_err());
    }

    #[test]
    fn sampling() {
        let z = SourcePrior::sparse_gaussian(0.0).unwrap();
        assert_eq!(z.sample_source(5, 1), vec![0.0; 5]);
        let pm = SourcePrior::sparse_alphabet(1.0, 1.0, 1).unwrap();
        let xs = pm.sample_source(100_000, 7);
        let mean_abs = xs.iter().map(|x: &f64| x.abs()).sum::<f64>() / xs.len() as f64;
        assert_abs_diff_eq!(mean_abs, 1.0, epsilon = 0.01);
        assert_eq!(pm.sample_source(10, 3), pm.sample_source(10, 3));
    }

    #[test]
    fn point_masses_validation() {
        assert!(SourcePrior::point_masses(vec![0.0, 1.0], vec![0.5, 0.4]).is_err());
        let p = SourcePrior::point_masses(vec![1.0, 0.0, 1.0], vec![0.25, 0.5, 0.25]).unwrap();
        assert_eq!(p.support().unwrap(), &[0.0, 1.0]);
        assert_eq!(p.masses().unwrap(), &[0.5, 0.5]);
        assert!(!p.is_symmetric());
    }
}
