//! Damped multi-start fixed-point iteration, μ selection, free energy,
//! entropy and ansatz selection.

use nalgebra::DMatrix;

use crate::quadrature::Quadrature;
use crate::replica::{
    effective_channel, f_integral, f_omega, mu_objective, mu_residual, transition, Decoupled, EffectiveChannel,
    ModelConfig, ReplicaState,
};
use crate::{Error, Real, Result};

#[derive(Debug, Clone)]
pub struct SolverConfig<T> {
    /// η in s ← (1-η)s + η T(s).
    pub damping: T,
    /// Max-norm bound on `T(s) - s` (and on the μ update) for convergence.
    pub tol: T,
    pub max_iter: usize,
    pub starts: Vec<ReplicaState<T>>,
    pub mu_bracket: (T, T),
}

impl<T: Real> SolverConfig<T> {
    /// Default parameters with the standard start grid for `b` levels.
    pub fn for_model(cfg: &ModelConfig<T>, b: usize) -> Self {
        Self {
            damping: T::lit(0.5),
            tol: T::lit(1e-10),
            max_iter: 5000,
            starts: default_starts(cfg, b),
            mu_bracket: (T::lit(1e-4), T::lit(50.0)),
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.damping > T::zero() && self.damping <= T::one()) {
            return Err(Error::Argument(format!("damping must lie in (0, 1], got {}", self.damping)));
        }
        if !(self.tol > T::zero()) {
            return Err(Error::Argument("tol must be positive".into()));
        }
        if self.starts.is_empty() {
            return Err(Error::Argument("no start states".into()));
        }
        let (lo, hi) = self.mu_bracket;
        if !(lo > T::zero() && lo < hi) {
            return Err(Error::Argument(format!("invalid mu bracket ({lo}, {hi})")));
        }
        Ok(())
    }
}

/// χ ∈ {0.01, 0.1, 1, 10}·λ, q ∈ {0.01, 0.3, 1}·E x², p ∈ {0, q/2}, μ ∈ {0.5, 2}.
pub fn default_starts<T: Real>(cfg: &ModelConfig<T>, b: usize) -> Vec<ReplicaState<T>> {
    let ex2 = cfg.prior.second_moment();
    let mut out = Vec::new();
    for c in [0.01, 0.1, 1.0, 10.0] {
        for qf in [0.01, 0.3, 1.0] {
            let chi = T::lit(c) * cfg.lambda;
            let q = T::lit(qf) * ex2;
            if b == 0 {
                out.push(ReplicaState::rs(chi, q));
                continue;
            }
            for pf in [0.0, 0.5] {
                for m in [0.5, 2.0] {
                    let p = vec![T::lit(pf) * q; b];
                    let mu: Vec<T> = (0..b).map(|k| T::lit(m) * T::lit(4f64.powi(k as i32))).collect();
                    out.push(ReplicaState { chi, q, p, mu });
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct FixedPointSolution<T> {
    pub state: ReplicaState<T>,
    pub channel: EffectiveChannel<T>,
    pub free_energy: T,
    pub entropy: T,
    pub mse: T,
    pub converged: bool,
    pub iterations: usize,
    pub residual: T,
    /// Spectral radius of the undamped transition Jacobian (μ fixed).
    pub spectral_radius: f64,
    pub stable: bool,
}

/// Outcome of one start of the iteration.
#[derive(Debug, Clone)]
pub struct StartDiagnostic<T> {
    pub start: ReplicaState<T>,
    pub last: ReplicaState<T>,
    pub converged: bool,
    pub iterations: usize,
    pub residual: T,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct SolveReport<T> {
    /// Distinct converged solutions in start order.
    pub solutions: Vec<FixedPointSolution<T>>,
    pub diagnostics: Vec<StartDiagnostic<T>>,
}

impl<T: Real> SolveReport<T> {
    pub fn selected(&self) -> Option<&FixedPointSolution<T>> {
        select_ansatz(&self.solutions).ok()
    }
}

pub fn solve<T: Real>(
    cfg: &ModelConfig<T>,
    b: usize,
    scfg: &SolverConfig<T>,
    quad: &Quadrature<T>,
) -> Result<SolveReport<T>> {
    if b > 2 {
        return Err(Error::Unsupported(format!("b = {b}; only b <= 2 is solved")));
    }
    scfg.validate()?;
    let dedup = (T::lit(10.0) * scfg.tol).max(T::lit(1e-7));
    let mut solutions: Vec<FixedPointSolution<T>> = Vec::new();
    let mut diagnostics = Vec::new();
    for start in &scfg.starts {
        if start.b() != b {
            return Err(Error::Argument(format!("start has b = {}, expected {b}", start.b())));
        }
        let diag = iterate(cfg, start, scfg, quad);
        if diag.converged && !solutions.iter().any(|s| s.state.distance(&diag.last) < dedup) {
            match annotate(cfg, &diag, quad) {
                Ok(sol) => solutions.push(sol),
                Err(e) => {
                    diagnostics.push(StartDiagnostic { error: Some(e.to_string()), converged: false, ..diag });
                    continue;
                }
            }
        }
        diagnostics.push(diag);
    }
    Ok(SolveReport { solutions, diagnostics })
}

fn iterate<T: Real>(
    cfg: &ModelConfig<T>,
    start: &ReplicaState<T>,
    scfg: &SolverConfig<T>,
    quad: &Quadrature<T>,
) -> StartDiagnostic<T> {
    let eta = scfg.damping;
    // The maps are asymptotically homogeneous, so runaway growth never turns back.
    let blow_up = T::lit(1e6) * (T::one() + cfg.lambda + cfg.prior.second_moment() + start.chi + start.q);
    let mut s = start.clone();
    let mut residual = T::infinity();
    let mut mu_step = T::one();
    let diag = |last: ReplicaState<T>, converged, iterations, residual, error: Option<Error>| StartDiagnostic {
        start: start.clone(),
        last,
        converged,
        iterations,
        residual,
        error: error.map(|e| e.to_string()),
    };
    for it in 1..=scfg.max_iter {
        let (t, _) = match transition(&s, cfg, quad) {
            Ok(v) => v,
            Err(e) => return diag(s, false, it, residual, Some(e)),
        };
        if !t.is_finite() || t.coords().iter().any(|v| *v > blow_up) {
            return diag(s, false, it, residual, Some(Error::Argument("state diverged".into())));
        }
        let (sc, tc) = (s.coords(), t.coords());
        residual = sc.iter().zip(&tc).fold(T::zero(), |m, (a, b)| m.max((*a - *b).abs()));
        let mut next_c: Vec<T> = sc.iter().zip(&tc).map(|(a, b)| (T::one() - eta) * *a + eta * *b).collect();
        for v in next_c.iter_mut() {
            *v = v.max(T::zero());
        }
        let mut next = s.with_coords(&next_c);
        if s.b() > 0 {
            // Loose μ solves while the state is still moving, tight ones near the end.
            let xtol = residual * T::lit(1e-2);
            match update_mu(cfg, &next, scfg, quad, mu_step, xtol) {
                Ok(mu) => {
                    let dmu = mu.iter().zip(&next.mu).fold(T::zero(), |m, (a, b)| m.max((*a - *b).abs()));
                    mu_step = mu.iter().zip(&next.mu).fold(T::zero(), |m, (a, b)| m.max((*a - *b).abs() / *b));
                    residual = residual.max(dmu);
                    next.mu = mu;
                }
                Err(e) => return diag(s, false, it, residual, Some(e)),
            }
        }
        if residual <= scfg.tol {
            return diag(s, true, it, residual, None);
        }
        s = next;
    }
    diag(s, false, scfg.max_iter, residual, None)
}

fn update_mu<T: Real>(
    cfg: &ModelConfig<T>,
    state: &ReplicaState<T>,
    scfg: &SolverConfig<T>,
    quad: &Quadrature<T>,
    step: T,
    xtol: T,
) -> Result<Vec<T>> {
    // λ_κˢ scales with p, so below tol the μ equation carries no information
    // and a root search only chases rounding noise.
    if state.p.iter().all(|p| *p <= scfg.tol) {
        return Ok(state.mu.clone());
    }
    let (lo, hi) = scfg.mu_bracket;
    match state.b() {
        1 => {
            let f = |m: T| {
                let mut s = state.clone();
                s.mu[0] = m;
                mu_residual(&s, cfg, quad)
            };
            Ok(vec![mu_root(f, state.mu[0].max(lo).min(hi), lo, hi, step, xtol)?])
        }
        _ => {
            let mut mu = state.mu.clone();
            let obj = |m: &[T]| {
                let mut s = state.clone();
                s.mu = m.to_vec();
                mu_objective(&s, cfg, quad)
            };
            for _ in 0..3 {
                let before = mu.clone();
                for k in 0..mu.len() {
                    let a = if k == 0 { lo } else { mu[k - 1] };
                    let b = if k + 1 < mu.len() { mu[k + 1] } else { hi };
                    let best = golden(
                        |m| {
                            let mut v = mu.clone();
                            v[k] = m;
                            obj(&v)
                        },
                        a,
                        b,
                    )?;
                    mu[k] = best;
                }
                if mu.iter().zip(&before).all(|(a, b)| (*a - *b).abs() <= scfg.tol) {
                    break;
                }
            }
            Ok(mu)
        }
    }
}

// Root of f nearest to `mu0` within [lo, hi], found by a geometric scan
// outward from it; keeps mu0 when no sign change turns up. The scan's first
// ratio is 1 + 2·`step` (the last relative μ move), growing to 2.
fn mu_root<T: Real>(f: impl Fn(T) -> Result<T>, mu0: T, lo: T, hi: T, step: T, xtol: T) -> Result<T> {
    let f0 = f(mu0)?;
    if f0 == T::zero() {
        return Ok(mu0);
    }
    // Same sign at both bracket ends as at mu0: no bracketed root, skip the scan.
    let same = |v: T| v != T::zero() && v.signum() == f0.signum();
    if (mu0 <= lo || same(f(lo)?)) && (mu0 >= hi || same(f(hi)?)) {
        return Ok(mu0);
    }
    let two = T::lit(2.0);
    let mut fac = (T::one() + two * step).max(T::one() + T::lit(1e-6)).min(two);
    let (mut dn, mut up) = (mu0, mu0);
    let (mut fdn, mut fup) = (f0, f0);
    let mut bracket = None;
    while bracket.is_none() && (dn > lo || up < hi) {
        if up < hi {
            let nu = (up * fac).min(hi);
            let fnu = f(nu)?;
            if fnu.signum() != fup.signum() || fnu == T::zero() {
                bracket = Some((up, fup, nu, fnu));
                break;
            }
            up = nu;
            fup = fnu;
        }
        if dn > lo {
            let nd = (dn / fac).max(lo);
            let fnd = f(nd)?;
            if fnd.signum() != fdn.signum() || fnd == T::zero() {
                bracket = Some((nd, fnd, dn, fdn));
                break;
            }
            dn = nd;
            fdn = fnd;
        }
        fac = (fac * fac).min(two);
    }
    let Some((mut a, mut fa, mut b, mut fb)) = bracket else {
        return Ok(mu0);
    };
    // Illinois regula falsi.
    let mut side = 0;
    for _ in 0..100 {
        if fb == T::zero() {
            return Ok(b);
        }
        let c = (a * fb - b * fa) / (fb - fa);
        let c = if c > a && c < b { c } else { (a + b) / two };
        let fc = f(c)?;
        if fc.signum() == fb.signum() {
            b = c;
            fb = fc;
            if side == -1 {
                fa = fa / two;
            }
            side = -1;
        } else {
            a = c;
            fa = fc;
            if side == 1 {
                fb = fb / two;
            }
            side = 1;
        }
        if (b - a) <= (T::lit(1e-13) * b).max(xtol) {
            break;
        }
    }
    Ok((a + b) / two)
}

fn golden<T: Real>(f: impl Fn(T) -> Result<T>, mut a: T, mut b: T) -> Result<T> {
    let g = T::lit((5f64.sqrt() - 1.0) / 2.0);
    let mut c = b - (b - a) * g;
    let mut d = a + (b - a) * g;
    let (mut fc, mut fd) = (f(c)?, f(d)?);
    for _ in 0..80 {
        if (b - a) <= T::lit(1e-9) * (a.abs() + b.abs()) {
            break;
        }
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - (b - a) * g;
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + (b - a) * g;
            fd = f(d)?;
        }
    }
    Ok((a + b) / T::lit(2.0))
}

fn annotate<T: Real>(
    cfg: &ModelConfig<T>,
    diag: &StartDiagnostic<T>,
    quad: &Quadrature<T>,
) -> Result<FixedPointSolution<T>> {
    let state = diag.last.clone();
    let channel = effective_channel(&state, cfg)?;
    let sys = Decoupled::new(&state, cfg, quad)?;
    let stats = sys.stats(None)?;
    let free_energy = free_energy_from_stats(&state, cfg, stats.utility_term, stats.log_partition)?;
    let entropy = entropy_zero_t(state.chi, cfg)?;
    let rho = spectral_radius(&state, cfg, quad)?;
    Ok(FixedPointSolution {
        converged: diag.converged && !channel.unphysical,
        state,
        channel,
        free_energy,
        entropy,
        mse: stats.mse,
        iterations: diag.iterations,
        residual: diag.residual,
        spectral_radius: rho,
        stable: rho < 1.0,
    })
}

/// Zero-temperature free energy of a state.
pub fn free_energy_zero_t<T: Real>(state: &ReplicaState<T>, cfg: &ModelConfig<T>, quad: &Quadrature<T>) -> Result<T> {
    let stats = Decoupled::new(state, cfg, quad)?.stats(None)?;
    free_energy_from_stats(state, cfg, stats.utility_term, stats.log_partition)
}

fn free_energy_from_stats<T: Real>(state: &ReplicaState<T>, cfg: &ModelConfig<T>, utility_term: T, log_z: T) -> Result<T> {
    let b = state.b();
    let bracket = f_integral(state, cfg)? - f_omega(state, cfg, T::one())?;
    let second = if b == 0 { utility_term } else { -log_z / state.mu[b - 1] };
    Ok(bracket / (T::lit(2.0) * cfg.lambda) + second)
}

/// `H⁰ = (χ/2λ)[R(-χ/λ) - ∫₀¹ R(-χω/λ) dω]`; a function of χ alone.
pub fn entropy_zero_t<T: Real>(chi: T, cfg: &ModelConfig<T>) -> Result<T> {
    if chi == T::zero() {
        return Ok(T::zero());
    }
    let lam = cfg.lambda;
    let two = T::lit(2.0);
    let r = cfg.ensemble.r_transform(-chi / lam)?;
    // ∫₀¹ R(-χω/λ) dω = (λ/χ) ∫_{-χ/λ}^0 R.
    let avg = cfg.ensemble.r_integral(-chi / lam, T::zero())? * lam / chi;
    Ok(chi / (two * lam) * (r - avg))
}

/// The converged solution of least free energy, ties to smaller q.
pub fn select_ansatz<T: Real>(solutions: &[FixedPointSolution<T>]) -> Result<&FixedPointSolution<T>> {
    solutions
        .iter()
        .filter(|s| s.converged)
        .min_by(|a, b| {
            let tie = T::lit(1e-12) * (T::one() + a.free_energy.abs());
            if (a.free_energy - b.free_energy).abs() <= tie {
                a.state.q.partial_cmp(&b.state.q).unwrap()
            } else {
                a.free_energy.partial_cmp(&b.free_energy).unwrap()
            }
        })
        .ok_or(Error::NoSolution)
}

/// Spectral radius of the finite-difference Jacobian of the undamped
/// transition over `[χ, p, q]` at fixed μ.
pub fn spectral_radius<T: Real>(state: &ReplicaState<T>, cfg: &ModelConfig<T>, quad: &Quadrature<T>) -> Result<f64> {
    let c0 = state.coords();
    let n = c0.len();
    let map = |c: &[T]| -> Result<Vec<T>> { Ok(transition(&state.with_coords(c), cfg, quad)?.0.coords()) };
    let mut jac = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let h = T::lit(1e-6) * c0[j].abs().max(T::lit(1e-3));
        let mut up = c0.clone();
        up[j] = up[j] + h;
        let fu = map(&up)?;
        let (fd, span) = if c0[j] - h >= T::zero() {
            let mut dn = c0.clone();
            dn[j] = dn[j] - h;
            (map(&dn)?, h + h)
        } else {
            (map(&c0)?, h)
        };
        for i in 0..n {
            jac[(i, j)] = ((fu[i] - fd[i]) / span).as_f64();
        }
    }
    if jac.iter().any(|v| !v.is_finite()) {
        return Ok(f64::INFINITY);
    }
    Ok(jac.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max))
}
