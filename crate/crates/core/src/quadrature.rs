//! Gaussian expectations `∫ f(z) Dz`, tilted expectations and 1-D integrals.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::{Error, Real, Result};

pub const DEFAULT_GH_ORDER: usize = 61;
pub const DEFAULT_LEGENDRE_ORDER: usize = 64;
/// Nodes per piece of the breakpoint-split Gaussian rule.
pub const DEFAULT_PIECE_ORDER: usize = 24;

/// Gauss-Hermite rule normalized to the standard normal measure Dz.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussHermiteRule<T> {
    nodes: Vec<T>,
    weights: Vec<T>,
}

impl<T: Real> GaussHermiteRule<T> {
    pub fn new(order: usize) -> Result<Self> {
        if order == 0 {
            return Err(Error::Argument("Gauss-Hermite order must be positive".into()));
        }
        let n = order;
        // Golub-Welsch on the probabilists' Hermite Jacobi matrix for starting
        // values, then Newton on the orthonormal recurrence and Christoffel
        // weights so that tiny tail weights keep full relative accuracy.
        let mut jac = DMatrix::<f64>::zeros(n, n);
        for k in 1..n {
            let b = (k as f64).sqrt();
            jac[(k, k - 1)] = b;
            jac[(k - 1, k)] = b;
        }
        let mut guess: Vec<f64> = SymmetricEigen::new(jac).eigenvalues.iter().copied().collect();
        guess.sort_by(f64::total_cmp);
        let mut nodes = Vec::with_capacity(n);
        let mut weights = Vec::with_capacity(n);
        for mut x in guess {
            for _ in 0..8 {
                let (hn, hn1, _) = hermite_orthonormal(n, x);
                let dx = hn / ((n as f64).sqrt() * hn1);
                x -= dx;
                if dx.abs() < 1e-15 * x.abs().max(1.0) {
                    break;
                }
            }
            let (_, _, s) = hermite_orthonormal(n, x);
            nodes.push(x);
            weights.push(1.0 / s);
        }
        // Enforce exact symmetry.
        for i in 0..n / 2 {
            let j = n - 1 - i;
            let x = 0.5 * (nodes[j] - nodes[i]);
            let w = 0.5 * (weights[i] + weights[j]);
            nodes[i] = -x;
            nodes[j] = x;
            weights[i] = w;
            weights[j] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        let total: f64 = weights.iter().sum();
        Ok(Self {
            nodes: nodes.into_iter().map(T::lit).collect(),
            weights: weights.into_iter().map(|w| T::lit(w / total)).collect(),
        })
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[T] {
        &self.nodes
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn iter(&self) -> impl Iterator<Item = (T, T)> + '_ {
        self.nodes.iter().copied().zip(self.weights.iter().copied())
    }
}

// (h_n(x), h_{n-1}(x), Σ_{k<n} h_k(x)²) for orthonormal probabilists' Hermite.
fn hermite_orthonormal(n: usize, x: f64) -> (f64, f64, f64) {
    let mut prev = 0.0;
    let mut cur = 1.0;
    let mut sum = 0.0;
    for k in 0..n {
        sum += cur * cur;
        let next = (x * cur - (k as f64).sqrt() * prev) / ((k + 1) as f64).sqrt();
        prev = cur;
        cur = next;
    }
    (cur, prev, sum)
}

/// Gauss-Legendre rule on [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct LegendreRule<T> {
    nodes: Vec<T>,
    weights: Vec<T>,
}

impl<T: Real> LegendreRule<T> {
    pub fn new(order: usize) -> Result<Self> {
        if order == 0 {
            return Err(Error::Argument("Legendre order must be positive".into()));
        }
        let n = order;
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..(n + 1) / 2 {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 1.0;
            for _ in 0..100 {
                let (p, q) = legendre(n, x);
                dp = n as f64 * (x * p - q) / (x * x - 1.0);
                let dx = p / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (p, q) = legendre(n, x);
            if p != 0.0 || dp == 0.0 {
                dp = n as f64 * (x * p - q) / (x * x - 1.0);
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Ok(Self {
            nodes: nodes.into_iter().map(T::lit).collect(),
            weights: weights.into_iter().map(T::lit).collect(),
        })
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[T] {
        &self.nodes
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn iter(&self) -> impl Iterator<Item = (T, T)> + '_ {
        self.nodes.iter().copied().zip(self.weights.iter().copied())
    }
}

// (P_n(x), P_{n-1}(x))
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut prev = 1.0;
    let mut cur = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 1..n {
        let next = ((2 * k + 1) as f64 * x * cur - k as f64 * prev) / (k + 1) as f64;
        prev = cur;
        cur = next;
    }
    (cur, prev)
}

fn check<T: Real>(z: T, v: T) -> Result<T> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Evaluation { node: z.as_f64(), value: v.as_f64() })
    }
}

/// `Σ wᵢ f(zᵢ)`.
pub fn expect_gaussian<T: Real>(mut f: impl FnMut(T) -> T, rule: &GaussHermiteRule<T>) -> Result<T> {
    let mut acc = T::zero();
    for (z, w) in rule.iter() {
        acc = acc + w * check(z, f(z))?;
    }
    Ok(acc)
}

/// `Σ wᵢ tilt(zᵢ) f(zᵢ) / Σ wᵢ tilt(zᵢ)` for a nonnegative tilt.
pub fn expect_tilted<T: Real>(
    mut f: impl FnMut(T) -> T,
    mut tilt: impl FnMut(T) -> T,
    rule: &GaussHermiteRule<T>,
) -> Result<T> {
    let mut num = T::zero();
    let mut den = T::zero();
    for (z, w) in rule.iter() {
        let t = check(z, tilt(z))?;
        if t < T::zero() {
            return Err(Error::Argument(format!("negative tilt {t} at node {z}")));
        }
        num = num + w * t * check(z, f(z))?;
        den = den + w * t;
    }
    if den.as_f64() < 1e-300 {
        return Err(Error::DegenerateTilt(den.as_f64()));
    }
    Ok(num / den)
}

/// Same as [`expect_tilted`] with the tilt given by its logarithm, so that
/// tilts far outside the floating-point range are still normalized.
pub fn expect_log_tilted<T: Real>(
    mut f: impl FnMut(T) -> T,
    mut log_tilt: impl FnMut(T) -> T,
    rule: &GaussHermiteRule<T>,
) -> Result<T> {
    let logs: Vec<T> = rule.nodes().iter().map(|&z| log_tilt(z)).collect();
    let m = logs.iter().copied().fold(T::neg_infinity(), T::max);
    if !m.is_finite() {
        return Err(Error::DegenerateTilt(0.0));
    }
    let mut num = T::zero();
    let mut den = T::zero();
    for ((z, w), l) in rule.iter().zip(logs) {
        let t = w * (l - m).exp();
        num = num + t * check(z, f(z))?;
        den = den + t;
    }
    Ok(num / den)
}

/// Gauss-Legendre approximation of `∫_lo^hi f`.
pub fn integrate<T: Real>(mut f: impl FnMut(T) -> T, lo: T, hi: T, rule: &LegendreRule<T>) -> Result<T> {
    if !(lo <= hi) {
        return Err(Error::Argument(format!("integration bounds reversed: {lo} > {hi}")));
    }
    let half = (hi - lo) / T::lit(2.0);
    let mid = (hi + lo) / T::lit(2.0);
    let mut acc = T::zero();
    for (t, w) in rule.iter() {
        let x = mid + half * t;
        acc = acc + w * check(x, f(x))?;
    }
    Ok(acc * half)
}

/// Numerically safe `ln Σ exp(aᵢ + ln wᵢ)` over `(a, w)` pairs.
pub fn log_sum_exp<T: Real>(terms: impl Iterator<Item = T> + Clone) -> T {
    let m = terms.clone().fold(T::neg_infinity(), T::max);
    if !m.is_finite() {
        return m;
    }
    let s: T = terms.map(|a| (a - m).exp()).sum();
    m + s.ln()
}

pub fn std_normal_pdf<T: Real>(z: T) -> T {
    (-z * z / T::lit(2.0)).exp() / (T::lit(2.0) * T::PI()).sqrt()
}

pub fn std_normal_cdf<T: Real>(z: T) -> T {
    T::lit(0.5 * libm::erfc(-z.as_f64() / std::f64::consts::SQRT_2))
}

/// Bundle of rules used by the replica expectations.
///
/// Smooth integrands use plain Gauss-Hermite.  When the denoiser has jumps or
/// kinks their positions are passed to [`Quadrature::gaussian_nodes`], which
/// then integrates the Gaussian piecewise with Gauss-Legendre so that the
/// result stays smooth in the channel parameters.
#[derive(Debug, Clone)]
pub struct Quadrature<T> {
    pub gh: GaussHermiteRule<T>,
    pub legendre: LegendreRule<T>,
    pub piece: LegendreRule<T>,
    /// Integration range `[-cutoff, cutoff]` of the split rule.
    pub cutoff: T,
    /// Longest piece of the split rule.
    pub max_piece: T,
}

impl<T: Real> Quadrature<T> {
    pub fn new(gh_order: usize, legendre_order: usize) -> Result<Self> {
        Ok(Self {
            gh: GaussHermiteRule::new(gh_order)?,
            legendre: LegendreRule::new(legendre_order)?,
            piece: LegendreRule::new(DEFAULT_PIECE_ORDER)?,
            cutoff: T::lit(10.0),
            max_piece: T::lit(4.0),
        })
    }

    /// Standard-normal nodes and weights, split at `breaks` if any lie inside
    /// the cutoff range.  Output replaces the contents of `out`.
    pub fn gaussian_nodes(&self, breaks: &[T], out: &mut Vec<(T, T)>) {
        out.clear();
        let c = self.cutoff;
        let mut cuts: Vec<T> = breaks.iter().copied().filter(|b| b.is_finite() && b.abs() < c).collect();
        if cuts.is_empty() {
            out.extend(self.gh.iter());
            return;
        }
        cuts.push(-c);
        cuts.push(c);
        cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        cuts.dedup();
        for pair in cuts.windows(2) {
            let (lo, hi) = (pair[0], pair[1]);
            let len = hi - lo;
            if len <= T::zero() {
                continue;
            }
            let pieces = (len / self.max_piece).ceil().to_usize().unwrap_or(1).max(1);
            let step = len / T::of_usize(pieces);
            for j in 0..pieces {
                let a = lo + step * T::of_usize(j);
                let half = step / T::lit(2.0);
                let mid = a + half;
                for (t, w) in self.piece.iter() {
                    let z = mid + half * t;
                    out.push((z, w * half * std_normal_pdf(z)));
                }
            }
        }
    }
}

impl<T: Real> Default for Quadrature<T> {
    fn default() -> Self {
        Self::new(DEFAULT_GH_ORDER, DEFAULT_LEGENDRE_ORDER).expect("default orders are valid")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn hermite_moments() {
        let rule = GaussHermiteRule::<f64>::new(61).unwrap();
        assert_abs_diff_eq!(expect_gaussian(|_| 1.0, &rule).unwrap(), 1.0, epsilon = 1e-13);
        assert_abs_diff_eq!(expect_gaussian(|z| z * z, &rule).unwrap(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(expect_gaussian(|z| z.powi(4), &rule).unwrap(), 3.0, epsilon = 1e-11);
        assert_abs_diff_eq!(expect_gaussian(|z| z.powi(6), &rule).unwrap(), 15.0, epsilon = 1e-10);
        assert!(rule.nodes().windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn small_hermite_rule_is_exact() {
        // Two-point rule: nodes ±1 with weight 1/2.
        let rule = GaussHermiteRule::<f64>::new(2).unwrap();
        assert_abs_diff_eq!(rule.nodes()[1], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(rule.weights()[0], 0.5, epsilon = 1e-15);
        let rule3 = GaussHermiteRule::<f64>::new(3).unwrap();
        assert_abs_diff_eq!(rule3.nodes()[2], 3f64.sqrt(), epsilon = 1e-14);
        assert_abs_diff_eq!(rule3.weights()[1], 2.0 / 3.0, epsilon = 1e-14);
    }

    #[test]
    fn tilted_shift() {
        let rule = GaussHermiteRule::<f64>::new(61).unwrap();
        let m = expect_tilted(|z| z, |z| (z - 0.5).exp(), &rule).unwrap();
        assert_abs_diff_eq!(m, 1.0, epsilon = 1e-10);
        let m = expect_log_tilted(|z| z, |z| 900.0 * z, &rule).unwrap();
        assert!(m.is_finite());
        assert!(matches!(expect_tilted(|z| z, |_| 0.0, &rule), Err(Error::DegenerateTilt(_))));
    }

    #[test]
    fn legendre_integrals() {
        let rule = LegendreRule::<f64>::new(64).unwrap();
        assert_abs_diff_eq!(integrate(|_| 1.0, 0.0, 1.0, &rule).unwrap(), 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(integrate(|w| w, 0.0, 1.0, &rule).unwrap(), 0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(
            integrate(|w| 1.0 / (1.0 + 10.0 * w), 0.0, 1.0, &rule).unwrap(),
            11f64.ln() / 10.0,
            epsilon = 1e-12
        );
        assert!(integrate(|w| w, 1.0, 0.0, &rule).is_err());
        let rule5 = LegendreRule::<f64>::new(5).unwrap();
        assert_abs_diff_eq!(integrate(|w| w.powi(9), 0.0, 2.0, &rule5).unwrap(), 102.4, epsilon = 1e-11);
    }

    #[test]
    fn non_finite_integrand_names_node() {
        let rule = GaussHermiteRule::<f64>::new(5).unwrap();
        match expect_gaussian(|z| if z == 0.0 { f64::NAN } else { z }, &rule) {
            Err(Error::Evaluation { node, .. }) => assert_eq!(node, 0.0),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn split_rule_matches_gaussian_moments() {
        let q = Quadrature::<f64>::default();
        let mut nodes = Vec::new();
        q.gaussian_nodes(&[-0.3, 1.7], &mut nodes);
        let m = |k: i32| nodes.iter().map(|&(z, w)| w * z.powi(k)).sum::<f64>();
        assert_abs_diff_eq!(m(0), 1.0, epsilon = 1e-13);
        assert_abs_diff_eq!(m(2), 1.0, epsilon = 1e-13);
        assert_abs_diff_eq!(m(4), 3.0, epsilon = 1e-12);
        // Half-line mass is exact once split at the origin.
        q.gaussian_nodes(&[0.0], &mut nodes);
        let pos: f64 = nodes.iter().filter(|p| p.0 > 0.0).map(|p| p.1).sum();
        assert_abs_diff_eq!(pos, 0.5, epsilon = 1e-14);
    }

    #[test]
    fn normal_cdf() {
        assert_abs_diff_eq!(std_normal_cdf(0.0f64), 0.5, epsilon = 1e-16);
        assert_abs_diff_eq!(std_normal_cdf(1.959963984540054f64), 0.975, epsilon = 1e-14);
    }

    #[test]
    fn single_precision_rules() {
        let rule = GaussHermiteRule::<f32>::new(21).unwrap();
        assert!((expect_gaussian(|z| z * z, &rule).unwrap() - 1.0).abs() < 1e-5);
    }
}
