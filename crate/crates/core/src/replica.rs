//! Replica state, effective decoupled channel, tilted expectations and the
//! transition map of the replica simulator.

use crate::denoisers::{DenoiserSpec, Utility};
use crate::ensembles::SpectralEnsemble;
use crate::quadrature::Quadrature;
use crate::sources::SourcePrior;
use crate::{Error, Real, Result};

/// Deepest hierarchy the tilted integrator accepts.
pub const MAX_LEVELS: usize = 4;

#[derive(Debug, Clone)]
pub struct ModelConfig<T> {
    pub ensemble: SpectralEnsemble<T>,
    pub prior: SourcePrior<T>,
    pub utility: Utility<T>,
    /// Estimation parameter λ of the MAP objective.
    pub lambda: T,
    /// True noise variance λ₀.
    pub lambda0: T,
}

impl<T: Real> ModelConfig<T> {
    pub fn new(
        ensemble: SpectralEnsemble<T>,
        prior: SourcePrior<T>,
        utility: Utility<T>,
        lambda: T,
        lambda0: T,
    ) -> Result<Self> {
        if !(lambda > T::zero() && lambda.is_finite()) {
            return Err(Error::Argument(format!("lambda must be positive, got {lambda}")));
        }
        if !(lambda0 >= T::zero() && lambda0.is_finite()) {
            return Err(Error::Argument(format!("lambda0 must be nonnegative, got {lambda0}")));
        }
        Ok(Self { ensemble, prior, utility, lambda, lambda0 })
    }

    fn r(&self, chi_t: T) -> Result<T> {
        self.ensemble.r_transform(-chi_t / self.lambda)
    }

    fn dr(&self, chi_t: T) -> Result<T> {
        self.ensemble.r_transform_deriv(-chi_t / self.lambda)
    }
}

/// `[χ, μ₁..μ_b, p₁..p_b, q]`; `b = p.len()`, zero for replica symmetry.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicaState<T> {
    pub chi: T,
    pub q: T,
    pub p: Vec<T>,
    pub mu: Vec<T>,
}

impl<T: Real> ReplicaState<T> {
    pub fn rs(chi: T, q: T) -> Self {
        Self { chi, q, p: Vec::new(), mu: Vec::new() }
    }

    pub fn rsb(chi: T, q: T, p: Vec<T>, mu: Vec<T>) -> Result<Self> {
        if p.len() != mu.len() {
            return Err(Error::Argument(format!("{} p values but {} mu values", p.len(), mu.len())));
        }
        if let Some(m) = mu.iter().find(|m| !(**m > T::zero())) {
            return Err(Error::Argument(format!("mu must be positive, got {m}")));
        }
        Ok(Self { chi, q, p, mu })
    }

    pub fn b(&self) -> usize {
        self.p.len()
    }

    /// `χ̃_κ = χ + Σ_{ς≤κ} μ_ς p_ς` for κ = 0..b.
    pub fn chi_tilde(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.b() + 1);
        let mut acc = self.chi;
        out.push(acc);
        for (m, p) in self.mu.iter().zip(&self.p) {
            acc = acc + *m * *p;
            out.push(acc);
        }
        out
    }

    /// Max-norm distance over (χ, p, q, μ).
    pub fn distance(&self, other: &Self) -> T {
        let mut d = (self.chi - other.chi).abs().max((self.q - other.q).abs());
        for (a, b) in self.p.iter().zip(&other.p).chain(self.mu.iter().zip(&other.mu)) {
            d = d.max((*a - *b).abs());
        }
        d
    }

    /// Components iterated by the transition: `[χ, p₁..p_b, q]`.
    pub fn coords(&self) -> Vec<T> {
        let mut v = vec![self.chi];
        v.extend(self.p.iter().copied());
        v.push(self.q);
        v
    }

    pub fn with_coords(&self, c: &[T]) -> Self {
        let b = self.b();
        Self { chi: c[0], p: c[1..=b].to_vec(), q: c[b + 1], mu: self.mu.clone() }
    }

    pub fn is_finite(&self) -> bool {
        self.coords().iter().chain(&self.mu).all(|v| v.is_finite())
    }
}

/// Parameters of the decoupled scalar channel `y = x + Σ √λ_κˢ z_κ`.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveChannel<T> {
    pub lambda_s: T,
    pub lambda0_s: T,
    /// `λ₁ˢ..λ_bˢ`.
    pub lambda_k: Vec<T>,
    /// Set when λ₀ˢ or some λ_κˢ came out negative (clamped to zero).
    pub unphysical: bool,
}

impl<T: Real> EffectiveChannel<T> {
    /// `[√λ₀ˢ, √λ₁ˢ, ..]`.
    pub fn std_devs(&self) -> Vec<T> {
        std::iter::once(self.lambda0_s).chain(self.lambda_k.iter().copied()).map(|v| v.max(T::zero()).sqrt()).collect()
    }
}

pub fn effective_channel<T: Real>(state: &ReplicaState<T>, cfg: &ModelConfig<T>) -> Result<EffectiveChannel<T>> {
    let ct = state.chi_tilde();
    let b = state.b();
    let lam = cfg.lambda;
    let rs: Vec<T> = ct.iter().map(|&c| cfg.r(c)).collect::<Result<_>>()?;
    let r0 = rs[0];
    if !(r0 > T::zero()) {
        return Err(Error::Domain((-ct[0] / lam).as_f64()));
    }
    let lambda_s = lam / r0;
    let mut unphysical = false;
    let mut lambda_k = Vec::with_capacity(b);
    for k in 1..=b {
        let v = if state.p[k - 1] == T::zero() { T::zero() } else { (rs[k - 1] - rs[k]) * lam / (state.mu[k - 1] * r0 * r0) };
        if v < T::zero() {
            unphysical = true;
        }
        lambda_k.push(v.max(T::zero()));
    }
    let rb = rs[b];
    let drb = cfg.dr(ct[b])?;
    let l0 = (cfg.lambda0 * rb - (cfg.lambda0 * ct[b] - lam * state.q) * drb / lam) / (r0 * r0);
    if l0 < T::zero() {
        unphysical = true;
    }
    Ok(EffectiveChannel { lambda_s, lambda0_s: l0.max(T::zero()), lambda_k, unphysical })
}

/// Expectations under the (tilted) decoupled system.
#[derive(Debug, Clone, PartialEq)]
pub struct Stats<T> {
    /// `E (g - x)²`.
    pub mse: T,
    /// `E (g - x) z_κ` for κ = 0..b.
    pub err_noise: Vec<T>,
    /// `C_κ = E (g - x) z_κ / √λ_κˢ`; for a vanishing level the Stein limit
    /// `E g′(y)` (κ = 0) or 0 (κ ≥ 1).
    pub corr: Vec<T>,
    /// `E g′(y)`.
    pub mean_slope: T,
    /// `E ∫ Λ̃₁ log Λ̃₁ Dz₁` (b ≥ 1).
    pub kl: T,
    /// `E log ∫ Λ_b Dz_b` (b ≥ 1).
    pub log_partition: T,
    /// `E [(y-g)² - (y-x)²]/(2λˢ) + u(g)` (b = 0).
    pub utility_term: T,
    /// `E d(g, x)` if a distortion was supplied.
    pub distortion: T,
}

const NS: usize = 8;
const S_SQ: usize = 0;
const S_SLOPE: usize = 1;
const S_DIST: usize = 2;
const S_Z: usize = 3;

type Acc<T> = [T; NS];

/// The decoupled system at a fixed state, ready to be integrated.
pub struct Decoupled<'a, T> {
    pub channel: EffectiveChannel<T>,
    pub denoiser: DenoiserSpec<T>,
    cfg: &'a ModelConfig<T>,
    quad: &'a Quadrature<T>,
    mu: Vec<T>,
    sd: Vec<T>,
    breaks: Vec<T>,
}

impl<'a, T: Real> Decoupled<'a, T> {
    pub fn new(state: &ReplicaState<T>, cfg: &'a ModelConfig<T>, quad: &'a Quadrature<T>) -> Result<Self> {
        if state.b() > MAX_LEVELS {
            return Err(Error::Unsupported(format!("b = {} exceeds {MAX_LEVELS}", state.b())));
        }
        let channel = effective_channel(state, cfg)?;
        let denoiser = DenoiserSpec::new(cfg.utility.clone(), channel.lambda_s)?;
        let sd = channel.std_devs();
        let breaks = denoiser.breakpoints();
        Ok(Self { channel, denoiser, cfg, quad, mu: state.mu.clone(), sd, breaks })
    }

    fn b(&self) -> usize {
        self.mu.len()
    }

    // Leaf integrand at fully specified noise: returns (B, stats) where B is
    // the bracket whose negative multiple is log Λ₁.
    fn leaf(&self, x: T, zs: &[T], dist: Option<&dyn Fn(T, T) -> T>) -> Result<(T, Acc<T>)> {
        let mut noise = T::zero();
        for (s, z) in self.sd.iter().zip(zs) {
            noise = noise + *s * *z;
        }
        let y = x + noise;
        let g = self.denoiser.denoise(y)?;
        let e = g - x;
        let two = T::lit(2.0);
        let bracket = ((y - g).powi(2) - noise * noise) / (two * self.channel.lambda_s) + self.cfg.utility.penalty(g);
        let mut s = [T::zero(); NS];
        s[S_SQ] = e * e;
        s[S_SLOPE] = self.denoiser.slope(y)?;
        if let Some(d) = dist {
            s[S_DIST] = d(g, x);
        }
        for (k, z) in zs.iter().enumerate() {
            s[S_Z + k] = e * *z;
        }
        Ok((bracket, s))
    }

    // Nodes for level `k` given the outer coordinates already in `zs`
    // (coordinates of inner levels are taken as zero for the split points).
    fn nodes(&self, k: usize, x: T, zs: &[T], out: &mut Vec<(T, T)>) {
        out.clear();
        let s = self.sd[k];
        if s == T::zero() {
            out.push((T::zero(), T::one()));
            return;
        }
        if self.breaks.is_empty() {
            out.extend(self.quad.gh.iter());
            return;
        }
        let mut shift = x;
        for j in 0..zs.len() {
            if j != k && (j == 0 || j > k) {
                shift = shift + self.sd[j] * zs[j];
            }
        }
        let cuts: Vec<T> = self.breaks.iter().map(|&b| (b - shift) / s).collect();
        self.quad.gaussian_nodes(&cuts, out);
    }

    // Integrates level k ≥ 1 with its tilt; returns (log ∫Λ_k Dz_k, tilted
    // stats, tilted KL of level 1).
    fn level(&self, k: usize, x: T, zs: &mut [T], dist: Option<&dyn Fn(T, T) -> T>) -> Result<(T, Acc<T>, T)> {
        let mut nodes = Vec::new();
        self.nodes(k, x, zs, &mut nodes);
        let mut m = T::neg_infinity();
        let mut sum = T::zero();
        let mut acc = [T::zero(); NS];
        let mut acc_log = T::zero();
        let mut acc_kl = T::zero();
        for &(z, w) in &nodes {
            if w <= T::zero() {
                continue;
            }
            zs[k] = z;
            let (log_tilt, s, kl) = if k == 1 {
                let (bracket, s) = self.leaf(x, zs, dist)?;
                (-self.mu[0] * bracket, s, T::zero())
            } else {
                let (lz, s, kl) = self.level(k - 1, x, zs, dist)?;
                (self.mu[k - 1] / self.mu[k - 2] * lz, s, kl)
            };
            let a = w.ln() + log_tilt;
            if !a.is_finite() {
                if a == T::neg_infinity() {
                    continue;
                }
                return Err(Error::Evaluation { node: z.as_f64(), value: a.as_f64() });
            }
            // Streaming log-sum-exp.
            if a > m {
                let scale = (m - a).exp();
                sum = sum * scale;
                for v in acc.iter_mut() {
                    *v = *v * scale;
                }
                acc_log = acc_log * scale;
                acc_kl = acc_kl * scale;
                m = a;
            }
            let e = (a - m).exp();
            sum = sum + e;
            for (v, sv) in acc.iter_mut().zip(s) {
                *v = *v + e * sv;
            }
            acc_log = acc_log + e * log_tilt;
            acc_kl = acc_kl + e * kl;
        }
        zs[k] = T::zero();
        if !(sum > T::zero()) {
            return Err(Error::DegenerateTilt(0.0));
        }
        let log_z = m + sum.ln();
        for v in acc.iter_mut() {
            *v = *v / sum;
        }
        let kl = if k == 1 { acc_log / sum - log_z } else { acc_kl / sum };
        Ok((log_z, acc, kl))
    }

    /// Full expectation over x, z₀ and the tilted levels.
    pub fn stats(&self, dist: Option<&dyn Fn(T, T) -> T>) -> Result<Stats<T>> {
        self.stats_over(&self.cfg.prior.atoms(&self.quad.gh), dist)
    }

    /// As [`Decoupled::stats`] with the source law replaced by weighted atoms.
    pub fn stats_over(&self, atoms: &[(T, T)], dist: Option<&dyn Fn(T, T) -> T>) -> Result<Stats<T>> {
        let b = self.b();
        let mut acc = [T::zero(); NS];
        let (mut e_log, mut e_kl, mut e_bracket) = (T::zero(), T::zero(), T::zero());
        let mut zs = vec![T::zero(); b + 1];
        let mut z0_nodes = Vec::new();
        for &(x, wx) in atoms {
            self.nodes(0, x, &zs, &mut z0_nodes);
            for &(z0, w0) in &z0_nodes {
                zs[0] = z0;
                let w = wx * w0;
                if b == 0 {
                    let (bracket, s) = self.leaf(x, &zs, dist)?;
                    for (v, sv) in acc.iter_mut().zip(s) {
                        *v = *v + w * sv;
                    }
                    e_bracket = e_bracket + w * bracket;
                } else {
                    let (lz, s, kl) = self.level(b, x, &mut zs, dist)?;
                    for (v, sv) in acc.iter_mut().zip(s) {
                        *v = *v + w * sv;
                    }
                    e_log = e_log + w * lz;
                    e_kl = e_kl + w * kl;
                }
            }
        }
        let err_noise: Vec<T> = (0..=b).map(|k| acc[S_Z + k]).collect();
        let corr = (0..=b)
            .map(|k| {
                if self.sd[k] > T::zero() {
                    err_noise[k] / self.sd[k]
                } else if k == 0 {
                    acc[S_SLOPE]
                } else {
                    T::zero()
                }
            })
            .collect();
        Ok(Stats {
            mse: acc[S_SQ],
            err_noise,
            corr,
            mean_slope: acc[S_SLOPE],
            kl: e_kl,
            log_partition: e_log,
            utility_term: e_bracket,
            distortion: acc[S_DIST],
        })
    }

    /// `[log Λ₁, .., log Λ_b]` at a given source value and noise vector
    /// `z = (z₀, .., z_b)`; level κ ≥ 2 integrates out z₁..z_{κ-1}.
    pub fn tilt_stack(&self, x: T, z: &[T]) -> Result<Vec<T>> {
        let b = self.b();
        if b == 0 {
            return Err(Error::Argument("tilts need b >= 1".into()));
        }
        if z.len() != b + 1 {
            return Err(Error::Argument(format!("expected {} noise coordinates, got {}", b + 1, z.len())));
        }
        let mut out = Vec::with_capacity(b);
        let (bracket, _) = self.leaf(x, z, None)?;
        out.push(-self.mu[0] * bracket);
        for k in 2..=b {
            let mut zs = z.to_vec();
            for v in zs.iter_mut().take(k).skip(1) {
                *v = T::zero();
            }
            let (lz, _, _) = self.level(k - 1, x, &mut zs, None)?;
            out.push(self.mu[k - 1] / self.mu[k - 2] * lz);
        }
        Ok(out)
    }
}

/// Convenience wrapper around [`Decoupled::tilt_stack`].
pub fn tilt_stack<T: Real>(
    state: &ReplicaState<T>,
    cfg: &ModelConfig<T>,
    quad: &Quadrature<T>,
    x: T,
    z: &[T],
) -> Result<Vec<T>> {
    Decoupled::new(state, cfg, quad)?.tilt_stack(x, z)
}

/// One step of the replica simulator with μ held fixed.
pub fn transition<T: Real>(
    state: &ReplicaState<T>,
    cfg: &ModelConfig<T>,
    quad: &Quadrature<T>,
) -> Result<(ReplicaState<T>, Stats<T>)> {
    let sys = Decoupled::new(state, cfg, quad)?;
    let stats = sys.stats(None)?;
    let next = invert(state, &sys.channel, &stats)?;
    Ok((next, stats))
}

// Solves Σp + q = MSE, χ̃_{κ-1} + μ_κ(Σ_{ς≥κ} p_ς + q) = λˢ C_κ, χ̃_b = λˢ C₀
// for [χ, p₁..p_b, q].  Levels with λ_κˢ = 0 pin p_κ = 0.
fn invert<T: Real>(state: &ReplicaState<T>, chan: &EffectiveChannel<T>, st: &Stats<T>) -> Result<ReplicaState<T>> {
    let b = state.b();
    let n = b + 2;
    let ls = chan.lambda_s;
    let mut a = vec![vec![T::zero(); n + 1]; n];
    for j in 1..n {
        a[0][j] = T::one();
    }
    a[0][n] = st.mse;
    for k in 1..=b {
        let row = &mut a[k];
        if chan.lambda_k[k - 1] == T::zero() {
            row[k] = T::one();
            continue;
        }
        let mk = state.mu[k - 1];
        row[0] = T::one();
        for s in 1..k {
            row[s] = state.mu[s - 1];
        }
        for cell in row.iter_mut().take(b + 2).skip(k) {
            *cell = mk;
        }
        row[n] = ls * st.corr[k];
    }
    let last = &mut a[b + 1];
    last[0] = T::one();
    for s in 1..=b {
        last[s] = state.mu[s - 1];
    }
    last[n] = ls * st.corr[0];
    let sol = solve_dense(a)?;
    Ok(state.with_coords(&sol))
}

fn solve_dense<T: Real>(mut a: Vec<Vec<T>>) -> Result<Vec<T>> {
    let n = a.len();
    let scale = a.iter().flat_map(|r| r[..n].iter()).fold(T::zero(), |m, v| m.max(v.abs())).max(T::min_positive_value());
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap()).unwrap();
        if a[piv][col].abs() <= T::lit(1e-13) * scale {
            return Err(Error::Singular);
        }
        a.swap(col, piv);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            if f != T::zero() {
                for c in col..=n {
                    let v = a[col][c];
                    a[r][c] = a[r][c] - f * v;
                }
            }
        }
    }
    let mut x = vec![T::zero(); n];
    for r in (0..n).rev() {
        let mut v = a[r][n];
        for c in r + 1..n {
            v = v - a[r][c] * x[c];
        }
        x[r] = v / a[r][r];
    }
    Ok(x)
}

/// Signed residual of the b = 1 μ equation: left-hand side minus the
/// tilted KL term `E ∫ Λ̃ log Λ̃ Dz₁`.
pub fn mu_residual<T: Real>(state: &ReplicaState<T>, cfg: &ModelConfig<T>, quad: &Quadrature<T>) -> Result<T> {
    if state.b() != 1 {
        return Err(Error::Argument(format!("mu_residual is defined for b = 1, got b = {}", state.b())));
    }
    let (mu, p) = (state.mu[0], state.p[0]);
    if p == T::zero() {
        return Ok(T::zero());
    }
    let sys = Decoupled::new(state, cfg, quad)?;
    let st = sys.stats(None)?;
    let ch = &sys.channel;
    let two = T::lit(2.0);
    let lam = cfg.lambda;
    let lhs = mu / (two * ch.lambda_s) * (mu * ch.lambda_k[0] / ch.lambda_s * state.q + p)
        - cfg.ensemble.r_integral(-(state.chi + mu * p) / lam, -state.chi / lam)? / two;
    Ok(lhs - st.kl)
}

/// The bracket minimized over μ for general b:
/// `(1/2λ)∫₀¹F − (1/μ_b) E log ∫Λ_b Dz_b − Δ/(2λˢ)`.
pub fn mu_objective<T: Real>(state: &ReplicaState<T>, cfg: &ModelConfig<T>, quad: &Quadrature<T>) -> Result<T> {
    let b = state.b();
    if b == 0 {
        return Err(Error::Argument("mu_objective needs b >= 1".into()));
    }
    let sys = Decoupled::new(state, cfg, quad)?;
    let st = sys.stats(None)?;
    let ch = &sys.channel;
    let ct = state.chi_tilde();
    let ls = ch.lambda_s;
    let mut zeta = vec![T::one()];
    for k in 1..=b {
        let prev = zeta[k - 1];
        zeta.push(prev - state.mu[k - 1] * ch.lambda_k[k - 1] / ls);
    }
    let mut delta = T::zero();
    for k in 1..=b {
        delta = delta + (zeta[k] * ct[k] - zeta[k - 1] * ct[k - 1]) / state.mu[k - 1];
    }
    delta = delta + zeta[b] * state.q - ch.lambda0_s / ls * ct[b];
    let two = T::lit(2.0);
    Ok(f_integral(state, cfg)? / (two * cfg.lambda) - st.log_partition / state.mu[b - 1] - delta / (two * ls))
}

/// `F(ω)` of the free energy.
pub fn f_omega<T: Real>(state: &ReplicaState<T>, cfg: &ModelConfig<T>, omega: T) -> Result<T> {
    let ct = state.chi_tilde();
    let b = state.b();
    let lam = cfg.lambda;
    let r = |c: T| cfg.ensemble.r_transform(-c * omega / lam);
    let mut f = T::zero();
    for k in 1..=b {
        if ct[k] != ct[k - 1] {
            f = f + (ct[k] * r(ct[k])? - ct[k - 1] * r(ct[k - 1])?) / state.mu[k - 1];
        }
    }
    let cb = ct[b];
    let arg = -cb * omega / lam;
    let coef = state.q - cfg.lambda0 * cb / lam;
    Ok(f + coef * (cfg.ensemble.r_transform(arg)? + arg * cfg.ensemble.r_transform_deriv(arg)?))
}

/// `∫₀¹ F(ω) dω` in closed form through the R-transform antiderivative.
pub fn f_integral<T: Real>(state: &ReplicaState<T>, cfg: &ModelConfig<T>) -> Result<T> {
    let ct = state.chi_tilde();
    let b = state.b();
    let lam = cfg.lambda;
    let mut f = T::zero();
    for k in 1..=b {
        if ct[k] != ct[k - 1] {
            f = f + lam * cfg.ensemble.r_integral(-ct[k] / lam, -ct[k - 1] / lam)? / state.mu[k - 1];
        }
    }
    let cb = ct[b];
    Ok(f + (state.q - cfg.lambda0 * cb / lam) * cfg.r(cb)?)
}
