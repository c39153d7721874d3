//! Spectral ensembles of the Gramian `J = AᵀA`: Stieltjes and R-transforms.

use std::path::Path;

use crate::quadrature::{integrate, LegendreRule};
use crate::{Error, Real, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum EnsembleKind<T> {
    /// i.i.d. Gaussian `A` with compression rate `r = n/k`.
    MarcenkoPastur { rate: T },
    /// Row-orthogonal `A` with `AAᵀ = (n/k) I`.
    Projector { rate: T },
    Empirical { eigenvalues: Vec<T> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralEnsemble<T> {
    kind: EnsembleKind<T>,
    // Empirical summary: min, max, mean, variance, third central moment.
    min: T,
    max: T,
    mean: T,
    var: T,
    skew: T,
    legendre: LegendreRule<T>,
}

impl<T: Real> SpectralEnsemble<T> {
    pub fn marcenko_pastur(rate: T) -> Result<Self> {
        if !(rate > T::zero() && rate.is_finite()) {
            return Err(Error::Argument(format!("Marcenko-Pastur rate must be positive, got {rate}")));
        }
        let (lo, hi) = mp_edges(rate);
        Ok(Self::with_summary(EnsembleKind::MarcenkoPastur { rate }, lo, hi, T::one(), rate, rate * rate))
    }

    pub fn projector(rate: T) -> Result<Self> {
        if !(rate >= T::one() && rate.is_finite()) {
            return Err(Error::Argument(format!("projector rate must be >= 1, got {rate}")));
        }
        let lo = if rate > T::one() { T::zero() } else { T::one() };
        let var = rate - T::one();
        // Third central moment of the two-point law {0 w.p. 1-1/r, r w.p. 1/r}.
        let skew = (rate - T::one()) * (rate - T::lit(2.0));
        Ok(Self::with_summary(EnsembleKind::Projector { rate }, lo, rate, T::one(), var, skew))
    }

    pub fn empirical(eigenvalues: Vec<T>) -> Result<Self> {
        if eigenvalues.is_empty() {
            return Err(Error::Argument("empirical spectrum is empty".into()));
        }
        if let Some(bad) = eigenvalues.iter().find(|t| !(**t >= T::zero() && t.is_finite())) {
            return Err(Error::Argument(format!("eigenvalue {bad} is not a finite nonnegative number")));
        }
        let n = T::of_usize(eigenvalues.len());
        let mean = eigenvalues.iter().copied().sum::<T>() / n;
        let var = eigenvalues.iter().map(|&t| (t - mean).powi(2)).sum::<T>() / n;
        let skew = eigenvalues.iter().map(|&t| (t - mean).powi(3)).sum::<T>() / n;
        let min = eigenvalues.iter().copied().fold(T::infinity(), T::min);
        let max = eigenvalues.iter().copied().fold(T::neg_infinity(), T::max);
        Ok(Self::with_summary(EnsembleKind::Empirical { eigenvalues }, min, max, mean, var, skew))
    }

    /// One nonnegative eigenvalue per line; blank lines and `#` comments skipped.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        let mut values = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let v: f64 = line
                .parse()
                .map_err(|_| Error::Argument(format!("{}:{}: not a number: {line:?}", path.display(), i + 1)))?;
            values.push(T::lit(v));
        }
        Self::empirical(values)
    }

    fn with_summary(kind: EnsembleKind<T>, min: T, max: T, mean: T, var: T, skew: T) -> Self {
        Self { kind, min, max, mean, var, skew, legendre: LegendreRule::new(64).expect("order 64") }
    }

    pub fn kind(&self) -> &EnsembleKind<T> {
        &self.kind
    }

    /// Compression rate for the parametric ensembles.
    pub fn rate(&self) -> Option<T> {
        match self.kind {
            EnsembleKind::MarcenkoPastur { rate } | EnsembleKind::Projector { rate } => Some(rate),
            EnsembleKind::Empirical { .. } => None,
        }
    }

    pub fn mean_eigenvalue(&self) -> T {
        self.mean
    }

    pub fn eigenvalue_variance(&self) -> T {
        self.var
    }

    /// Lower edge of the support (including atoms).
    pub fn support_min(&self) -> T {
        self.min
    }

    pub fn support_max(&self) -> T {
        self.max
    }

    /// `G(s) = E (t - s)⁻¹` for real `s` left of the spectrum.
    pub fn stieltjes(&self, s: T) -> Result<T> {
        self.check_left(s)?;
        let one = T::one();
        Ok(match &self.kind {
            EnsembleKind::MarcenkoPastur { rate: r } => {
                let r = *r;
                let disc = (s - one + r).powi(2) - T::lit(4.0) * s * r;
                T::lit(2.0) / ((one - r - s) + disc.max(T::zero()).sqrt())
            }
            EnsembleKind::Projector { rate: r } => {
                let r = *r;
                let nz = one / r / (r - s);
                if r > one {
                    nz + (one - one / r) / (-s)
                } else {
                    nz
                }
            }
            EnsembleKind::Empirical { eigenvalues } => {
                eigenvalues.iter().map(|&t| one / (t - s)).sum::<T>() / T::of_usize(eigenvalues.len())
            }
        })
    }

    /// `G′(s) = E (t - s)⁻²`.
    pub fn stieltjes_deriv(&self, s: T) -> Result<T> {
        self.check_left(s)?;
        let one = T::one();
        Ok(match &self.kind {
            EnsembleKind::MarcenkoPastur { .. } => {
                let g = self.stieltjes(s)?;
                // s = R(-g) - 1/g  ⇒  ds/dg = 1/g² - R′(-g)
                one / (one / (g * g) - self.r_transform_deriv(-g)?)
            }
            EnsembleKind::Projector { rate: r } => {
                let r = *r;
                let nz = one / r / (r - s).powi(2);
                if r > one {
                    nz + (one - one / r) / (s * s)
                } else {
                    nz
                }
            }
            EnsembleKind::Empirical { eigenvalues } => {
                eigenvalues.iter().map(|&t| one / (t - s).powi(2)).sum::<T>() / T::of_usize(eigenvalues.len())
            }
        })
    }

    fn check_left(&self, s: T) -> Result<()> {
        let edge = match &self.kind {
            EnsembleKind::MarcenkoPastur { rate } if *rate >= T::one() => T::zero(),
            _ => self.min,
        };
        if s < edge {
            Ok(())
        } else {
            Err(Error::Domain(s.as_f64()))
        }
    }

    /// `R(ω) = G⁻¹(-ω) - 1/ω`.
    pub fn r_transform(&self, omega: T) -> Result<T> {
        let one = T::one();
        match &self.kind {
            EnsembleKind::MarcenkoPastur { rate } => {
                let d = one - *rate * omega;
                if d <= T::zero() {
                    return Err(Error::Pole(omega.as_f64()));
                }
                Ok(one / d)
            }
            EnsembleKind::Projector { rate } => {
                let r = *rate;
                if r == one {
                    return Ok(one);
                }
                // Rationalized form of (rω - 1 + D)/(2ω); finite at ω = 0.
                let d = projector_disc(r, omega);
                Ok(T::lit(2.0) / (one - r * omega + d))
            }
            EnsembleKind::Empirical { eigenvalues } => self.empirical_r(eigenvalues, omega).map(|(rho, _)| rho),
        }
    }

    pub fn r_transform_deriv(&self, omega: T) -> Result<T> {
        let one = T::one();
        match &self.kind {
            EnsembleKind::MarcenkoPastur { rate } => {
                let d = one - *rate * omega;
                if d <= T::zero() {
                    return Err(Error::Pole(omega.as_f64()));
                }
                Ok(*rate / (d * d))
            }
            EnsembleKind::Projector { rate } => {
                let r = *rate;
                if r == one {
                    return Ok(T::zero());
                }
                let d = projector_disc(r, omega);
                let dd = (r * (r * omega - one) + T::lit(2.0)) / d;
                let den = one - r * omega + d;
                Ok(T::lit(2.0) * (r - dd) / (den * den))
            }
            EnsembleKind::Empirical { eigenvalues } => self.empirical_r(eigenvalues, omega).map(|(_, d)| d),
        }
    }

    /// `∫_lo^hi R(ω) dω`.
    pub fn r_integral(&self, lo: T, hi: T) -> Result<T> {
        if !(lo <= hi) {
            return Err(Error::Argument(format!("r_integral bounds reversed: {lo} > {hi}")));
        }
        if lo == hi {
            return Ok(T::zero());
        }
        match &self.kind {
            EnsembleKind::MarcenkoPastur { rate } => {
                let r = *rate;
                let (a, b) = (T::one() - r * lo, T::one() - r * hi);
                if a <= T::zero() || b <= T::zero() {
                    return Err(Error::Pole(if b <= T::zero() { hi } else { lo }.as_f64()));
                }
                Ok((a / b).ln() / r)
            }
            EnsembleKind::Projector { rate } if *rate == T::one() => Ok(hi - lo),
            _ => {
                // Grade the pieces toward ω = 0, where R has its curvature.
                let mut cuts = vec![lo, hi];
                for j in -4..=4 {
                    let m = T::lit(10f64.powi(j));
                    for c in [m, -m] {
                        if c > lo && c < hi {
                            cuts.push(c);
                        }
                    }
                }
                if lo < T::zero() && hi > T::zero() {
                    cuts.push(T::zero());
                }
                cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
                let mut total = T::zero();
                let mut err = None;
                for w in cuts.windows(2) {
                    total = total
                        + integrate(
                            |om| match self.r_transform(om) {
                                Ok(v) => v,
                                Err(e) => {
                                    err.get_or_insert(e);
                                    T::nan()
                                }
                            },
                            w[0],
                            w[1],
                            &self.legendre,
                        )
                        .map_err(|e| err.clone().unwrap_or(e))?;
                }
                Ok(total)
            }
        }
    }

    // Solves Σ wᵢ / (1 - ω(tᵢ - ρ)) = 1 for ρ = R(ω) by bisection and returns
    // (ρ, dρ/dω) with the derivative from implicit differentiation.
    fn empirical_r(&self, eig: &[T], omega: T) -> Result<(T, T)> {
        let one = T::one();
        let spread = (self.max - self.min).max(self.mean.abs()).max(one);
        if omega.abs() * spread < T::lit(1e-7) {
            let two = T::lit(2.0);
            return Ok((self.mean + self.var * omega + self.skew * omega * omega, self.var + two * self.skew * omega));
        }
        let n = T::of_usize(eig.len());
        let h = |rho: T| -> Option<T> {
            let mut acc = T::zero();
            for &t in eig {
                let d = one - omega * (t - rho);
                if d <= T::zero() {
                    return None;
                }
                acc = acc + one / d;
            }
            Some(acc / n - one)
        };
        let (mut a, mut b) = if omega < T::zero() {
            // h has a pole at ρ = t_min + 1/|ω| and is +∞ just below it.
            let pole = self.min - one / omega;
            (self.min, self.mean.min(pole - (pole - self.min) * T::lit(1e-9)))
        } else {
            let floor = self.max - one / omega;
            let lo = self.mean.max(floor + (self.max - floor).abs() * T::lit(1e-12) + T::epsilon());
            (lo, self.max)
        };
        if a > b {
            return Err(Error::Inversion(omega.as_f64()));
        }
        // h is monotone on [a, b]: increasing for ω < 0, decreasing for ω > 0.
        let sign = if omega < T::zero() { one } else { -one };
        let ha = h(a).ok_or(Error::Inversion(omega.as_f64()))? * sign;
        let hb = h(b).ok_or(Error::Inversion(omega.as_f64()))? * sign;
        if ha > T::zero() || hb < T::zero() {
            return Err(Error::Inversion(omega.as_f64()));
        }
        for _ in 0..200 {
            let m = (a + b) / T::lit(2.0);
            if m <= a || m >= b {
                break;
            }
            match h(m) {
                Some(v) if v * sign <= T::zero() => a = m,
                Some(_) => b = m,
                None => return Err(Error::Inversion(omega.as_f64())),
            }
            if (b - a) <= T::lit(1e-15) * spread {
                break;
            }
        }
        let rho = (a + b) / T::lit(2.0);
        let (mut num, mut den) = (T::zero(), T::zero());
        for &t in eig {
            let d = one - omega * (t - rho);
            num = num + (t - rho) / (d * d);
            den = den + one / (d * d);
        }
        Ok((rho, num / (omega * den)))
    }
}

fn mp_edges<T: Real>(r: T) -> (T, T) {
    let s = r.sqrt();
    let lo = if r > T::one() { T::zero() } else { (T::one() - s).powi(2) };
    (lo, (T::one() + s).powi(2))
}

fn projector_disc<T: Real>(r: T, omega: T) -> T {
    ((r * omega - T::one()).powi(2) + T::lit(4.0) * omega).max(T::zero()).sqrt()
}
