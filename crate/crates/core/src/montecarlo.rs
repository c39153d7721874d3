//! Finite-size simulation of `y = Ax + z` and its MAP reconstruction.
//!
//! Everything here is `f64`: the simulator is an oracle for the analytic
//! predictions, not something to run at reduced precision.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::denoisers::{map_objective, UtilityKind};
use crate::ensembles::SpectralEnsemble;
use crate::observables::Distortion;
use crate::sources::SourcePrior;
use crate::{Error, Result, Utility};

/// Largest dimension the exhaustive alphabet search accepts.
pub const MAX_EXHAUSTIVE_DIM: usize = 18;

const FISTA_MAX_ITER: usize = 20_000;
const CD_MAX_SWEEPS: usize = 100_000;
const CD_INNER_SWEEPS: usize = 25;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MatrixKind {
    /// i.i.d. `N(0, 1/k)` entries.
    Iid,
    /// First `k` rows of a Haar orthogonal matrix, scaled so `AAᵀ = (n/k) I`.
    Projector,
}

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of instance `index` in a run with base seed `base`. Depends on nothing
/// else, so results do not change with thread count or scheduling order.
pub fn instance_seed(base: u64, index: u64) -> u64 {
    mix(base ^ mix(index.wrapping_add(0x9e37_79b9_7f4a_7c15)))
}

/// Number of measurements for `n` unknowns at compression rate `n/k`.
pub fn measurements(n: usize, rate: f64) -> Result<usize> {
    if !(rate > 0.0) || !rate.is_finite() {
        return Err(Error::Argument(format!("rate must be positive, got {rate}")));
    }
    let k = (n as f64 / rate).round() as usize;
    if k == 0 {
        return Err(Error::Argument(format!("n = {n} at rate {rate} leaves no measurements")));
    }
    Ok(k)
}

pub fn gen_matrix(kind: MatrixKind, k: usize, n: usize, seed: u64) -> Result<DMatrix<f64>> {
    if k == 0 || n == 0 {
        return Err(Error::Argument(format!("matrix dimensions must be positive, got {k}x{n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match kind {
        MatrixKind::Iid => {
            let normal = Normal::new(0.0, (1.0 / k as f64).sqrt()).expect("positive variance");
            Ok(DMatrix::from_fn(k, n, |_, _| normal.sample(&mut rng)))
        }
        MatrixKind::Projector => {
            if k > n {
                return Err(Error::Argument(format!("projector needs k <= n, got k = {k}, n = {n}")));
            }
            let g = DMatrix::from_fn(k, n, |_, _| StandardNormal.sample(&mut rng));
            // Gᵀ = Q R with R = Lᵀ and diag(L) > 0, i.e. the sign-fixed QR,
            // so the rows L⁻¹G are a Haar frame. The second pass only mops up
            // rounding.
            let mut q = orthonormalize_rows(g)?;
            q = orthonormalize_rows(q)?;
            q *= (n as f64 / k as f64).sqrt();
            Ok(q)
        }
    }
}

fn orthonormalize_rows(g: DMatrix<f64>) -> Result<DMatrix<f64>> {
    let k = g.nrows();
    let gram = &g * g.transpose();
    let l = gram.cholesky().ok_or(Error::Singular)?.unpack();
    let l_inv = l.solve_lower_triangular(&DMatrix::identity(k, k)).ok_or(Error::Singular)?;
    Ok(l_inv * g)
}

#[derive(Clone, Debug)]
pub struct SystemInstance {
    pub x: DVector<f64>,
    pub a: DMatrix<f64>,
    pub y: DVector<f64>,
    pub seed: u64,
}

impl SystemInstance {
    /// Draws `x` from the prior, `A` of the given kind with `k = round(n/r)`
    /// rows, and `z ~ N(0, λ₀)`, each from its own stream derived from `seed`.
    pub fn generate(
        kind: MatrixKind,
        prior: &SourcePrior<f64>,
        rate: f64,
        n: usize,
        lambda0: f64,
        seed: u64,
    ) -> Result<Self> {
        if !(lambda0 >= 0.0) {
            return Err(Error::Argument(format!("noise variance must be non-negative, got {lambda0}")));
        }
        let k = measurements(n, rate)?;
        let x = DVector::from_vec(prior.sample_source(n, mix(seed ^ 1)));
        let a = gen_matrix(kind, k, n, mix(seed ^ 2))?;
        let mut rng = ChaCha8Rng::seed_from_u64(mix(seed ^ 3));
        let sd = lambda0.sqrt();
        let z = DVector::from_fn(k, |_, _| {
            let g: f64 = StandardNormal.sample(&mut rng);
            sd * g
        });
        let y = &a * &x + z;
        Ok(Self { x, a, y, seed })
    }

    /// An instance with a given matrix and observation (no source attached).
    pub fn from_parts(a: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        if a.nrows() != y.len() {
            return Err(Error::Argument(format!("A has {} rows but y has {} entries", a.nrows(), y.len())));
        }
        Ok(Self { x: DVector::zeros(a.ncols()), a, y, seed: 0 })
    }

    pub fn n(&self) -> usize {
        self.a.ncols()
    }

    pub fn k(&self) -> usize {
        self.a.nrows()
    }
}

#[derive(Clone, Debug)]
pub struct ReconstructionReport {
    pub x_hat: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn report(inst: &SystemInstance, u: &Utility, lambda: f64, x_hat: Vec<f64>, iterations: usize, converged: bool) -> Result<ReconstructionReport> {
    let objective = map_objective(u, lambda, inst.y.as_slice(), &inst.a, &x_hat)?;
    Ok(ReconstructionReport { x_hat, objective, iterations, converged })
}

/// MAP estimate `argmin (1/2λ)‖y - Av‖² + Σ u(vᵢ)`.
///
/// Alphabet-supported utilities are searched exhaustively; on the reals only
/// the half-square (ridge) and ℓ1 (accelerated proximal gradient) utilities
/// are supported.
pub fn reconstruct(inst: &SystemInstance, utility: &Utility, lambda: f64) -> Result<ReconstructionReport> {
    reconstruct_from(inst, utility, lambda, None)
}

/// As [`reconstruct`], with an optional warm start for the iterative ℓ1 solver.
pub fn reconstruct_from(
    inst: &SystemInstance,
    utility: &Utility,
    lambda: f64,
    warm: Option<&[f64]>,
) -> Result<ReconstructionReport> {
    if !(lambda > 0.0) {
        return Err(Error::Argument(format!("lambda must be positive, got {lambda}")));
    }
    if let Some(alphabet) = utility.alphabet() {
        return exhaustive(inst, utility, lambda, alphabet);
    }
    match utility.kind {
        UtilityKind::HalfSquare => {
            let x_hat = ridge(inst, &[lambda])?.pop().expect("one lambda");
            report(inst, utility, lambda, x_hat, 1, true)
        }
        UtilityKind::L1 => {
            let (x_hat, it, ok) = fista(inst, lambda, warm)?;
            report(inst, utility, lambda, x_hat, it, ok)
        }
        _ => Err(Error::Unsupported(format!(
            "{} reconstruction over the reals is not available; put the utility on a finite alphabet",
            utility.name()
        ))),
    }
}

/// Ridge solutions `(AᵀA + λI)⁻¹Aᵀy` for several `λ`, factoring the smaller
/// Gram matrix once per `λ`.
fn ridge(inst: &SystemInstance, lambdas: &[f64]) -> Result<Vec<Vec<f64>>> {
    let (a, y) = (&inst.a, &inst.y);
    let wide = a.nrows() < a.ncols();
    let gram = if wide { a * a.transpose() } else { a.transpose() * a };
    let aty = a.transpose() * y;
    lambdas
        .iter()
        .map(|&l| {
            let mut m = gram.clone();
            for i in 0..m.nrows() {
                m[(i, i)] += l;
            }
            let c = m.cholesky().ok_or(Error::Singular)?;
            // Aᵀ(AAᵀ + λI)⁻¹y = (AᵀA + λI)⁻¹Aᵀy
            let x = if wide { a.transpose() * c.solve(y) } else { c.solve(&aty) };
            Ok(x.as_slice().to_vec())
        })
        .collect()
}

fn soft(v: f64, t: f64) -> f64 {
    v.signum() * (v.abs() - t).max(0.0)
}

/// Largest eigenvalue of `AᵀA` by power iteration, padded slightly upward.
fn gram_norm(a: &DMatrix<f64>) -> f64 {
    let n = a.ncols();
    let mut v = DVector::from_fn(n, |i, _| 1.0 + (i % 7) as f64 / 7.0);
    v /= v.norm();
    let mut est = 0.0;
    for _ in 0..200 {
        let w = a.transpose() * (a * &v);
        let next = w.norm();
        if next == 0.0 {
            return 0.0;
        }
        v = w / next;
        let done = (next - est).abs() <= 1e-9 * next;
        est = next;
        if done {
            break;
        }
    }
    est * 1.01
}

/// FISTA with backtracking and function-value restart on
/// `(1/2λ)‖y - Av‖² + ‖v‖₁`.
fn fista(inst: &SystemInstance, lambda: f64, warm: Option<&[f64]>) -> Result<(Vec<f64>, usize, bool)> {
    let (a, y) = (&inst.a, &inst.y);
    let n = a.ncols();
    let mut x = match warm {
        Some(w) if w.len() == n => DVector::from_column_slice(w),
        Some(w) => return Err(Error::Argument(format!("warm start has {} entries, expected {n}", w.len()))),
        None => DVector::zeros(n),
    };
    let mut lip = (gram_norm(a) / lambda).max(f64::MIN_POSITIVE);
    let mut ax = a * &x;
    let smooth = |r: &DVector<f64>| r.norm_squared() / (2.0 * lambda);
    let mut f_x = smooth(&(&ax - y)) + x.lp_norm(1);
    let (mut z, mut az, mut t) = (x.clone(), ax.clone(), 1.0f64);

    for it in 1..=FISTA_MAX_ITER {
        let rz = &az - y;
        let fz = smooth(&rz);
        let grad = a.transpose() * &rz / lambda;
        let (x_new, ax_new, f_smooth) = loop {
            let step = 1.0 / lip;
            let cand = DVector::from_fn(n, |i, _| soft(z[i] - step * grad[i], step));
            let a_cand = a * &cand;
            let f_cand = smooth(&(&a_cand - y));
            let d = &cand - &z;
            let bound = fz + grad.dot(&d) + 0.5 * lip * d.norm_squared();
            if f_cand <= bound + 1e-12 * bound.abs().max(1.0) {
                break (cand, a_cand, f_cand);
            }
            lip *= 2.0;
        };
        let f_new = f_smooth + x_new.lp_norm(1);
        // gradient mapping: bounds the subgradient optimality gap at x_new
        let gmap = lip * (&z - &x_new).amax();

        if f_new > f_x && t > 1.0 {
            // momentum overshot; restart from the last iterate
            t = 1.0;
            z.copy_from(&x);
            az.copy_from(&ax);
            continue;
        }
        let decrease = f_x - f_new;
        let t_new = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let beta = (t - 1.0) / t_new;
        z = &x_new + (&x_new - &x) * beta;
        az = &ax_new + (&ax_new - &ax) * beta;
        x = x_new;
        ax = ax_new;
        f_x = f_new;
        t = t_new;
        if decrease < 1e-12 * f_x.abs().max(1.0) && gmap < 1e-7 {
            return Ok((x.as_slice().to_vec(), it, true));
        }
    }
    Ok((x.as_slice().to_vec(), FISTA_MAX_ITER, false))
}

/// Exhaustive search over `alphabetⁿ`, walking a reflected Gray code so each
/// step changes one coordinate to a neighbouring symbol.
fn exhaustive(inst: &SystemInstance, u: &Utility, lambda: f64, alphabet: &[f64]) -> Result<ReconstructionReport> {
    let (a, y) = (&inst.a, &inst.y);
    let n = a.ncols();
    if n > MAX_EXHAUSTIVE_DIM {
        return Err(Error::Argument(format!(
            "exhaustive search refused for n = {n} > {MAX_EXHAUSTIVE_DIM}"
        )));
    }
    let m = alphabet.len();
    let pen: Vec<f64> = alphabet.iter().map(|&s| u.penalty(s)).collect();
    let mut digit = vec![0usize; n];
    let mut dir = vec![1isize; n];
    let mut resid = y - a * DVector::from_element(n, alphabet[0]);
    let mut penalty = pen[0] * n as f64;
    let obj = |r: &DVector<f64>, p: f64| r.norm_squared() / (2.0 * lambda) + p;
    let mut best = obj(&resid, penalty);
    let mut best_digits = digit.clone();
    let mut visited = 1usize;

    if m > 1 {
        loop {
            let Some(j) = (0..n).find(|&j| {
                let next = digit[j] as isize + dir[j];
                next >= 0 && next < m as isize
            }) else {
                break;
            };
            for d in dir.iter_mut().take(j) {
                *d = -*d;
            }
            let old = digit[j];
            let new = (old as isize + dir[j]) as usize;
            digit[j] = new;
            let delta = alphabet[new] - alphabet[old];
            resid.axpy(-delta, &a.column(j), 1.0);
            penalty += pen[new] - pen[old];
            visited += 1;
            let f = obj(&resid, penalty);
            if f < best {
                best = f;
                best_digits.copy_from_slice(&digit);
            }
        }
    }
    let x_hat = best_digits.iter().map(|&d| alphabet[d]).collect();
    report(inst, u, lambda, x_hat, visited, true)
}

/// Ridge estimates for a grid of `λ` on one instance.
pub fn ridge_path(inst: &SystemInstance, lambdas: &[f64]) -> Result<Vec<ReconstructionReport>> {
    if let Some(l) = lambdas.iter().find(|l| !(**l > 0.0)) {
        return Err(Error::Argument(format!("lambda must be positive, got {l}")));
    }
    let u = Utility::half_square();
    ridge(inst, lambdas)?
        .into_iter()
        .zip(lambdas)
        .map(|(x, &l)| report(inst, &u, l, x, 1, true))
        .collect()
}

/// ℓ1 estimates for a grid of `λ` on one instance by cyclic coordinate descent
/// on the Gram matrix, warm-started from large to small `λ`. Produces the same
/// minimizers as [`reconstruct`] with the ℓ1 utility at a fraction of the cost
/// when the grid is long and `n` is large.
pub fn lasso_path(inst: &SystemInstance, lambdas: &[f64]) -> Result<Vec<ReconstructionReport>> {
    if let Some(l) = lambdas.iter().find(|l| !(**l > 0.0)) {
        return Err(Error::Argument(format!("lambda must be positive, got {l}")));
    }
    let (a, y) = (&inst.a, &inst.y);
    let n = a.ncols();
    let gram = a.transpose() * a;
    let c = a.transpose() * y;
    let mut order: Vec<usize> = (0..lambdas.len()).collect();
    order.sort_by(|&i, &j| lambdas[j].total_cmp(&lambdas[i]));

    let u = Utility::l1();
    let mut v = DVector::<f64>::zeros(n);
    let mut jv = DVector::<f64>::zeros(n);
    let mut out: Vec<Option<ReconstructionReport>> = vec![None; lambdas.len()];
    for idx in order {
        let l = lambdas[idx];
        let (sweeps, ok) = cd_lasso(&gram, &c, l, &mut v, &mut jv);
        out[idx] = Some(report(inst, &u, l, v.as_slice().to_vec(), sweeps, ok)?);
    }
    Ok(out.into_iter().map(|r| r.expect("every index visited")).collect())
}

/// Cyclic coordinate descent for `(1/2λ)(vᵀJv - 2cᵀv) + ‖v‖₁`, keeping
/// `jv = J v` current. Alternates full sweeps with sweeps over the support.
fn cd_lasso(gram: &DMatrix<f64>, c: &DVector<f64>, lambda: f64, v: &mut DVector<f64>, jv: &mut DVector<f64>) -> (usize, bool) {
    let n = v.len();
    let tol = 1e-13;
    let update = |i: usize, v: &mut DVector<f64>, jv: &mut DVector<f64>| -> f64 {
        let jii = gram[(i, i)];
        if jii <= 0.0 {
            return 0.0;
        }
        let old = v[i];
        let new = soft(c[i] - jv[i] + jii * old, lambda) / jii;
        let delta = new - old;
        if delta != 0.0 {
            v[i] = new;
            jv.axpy(delta, &gram.column(i), 1.0);
        }
        (delta * delta * jii).sqrt()
    };
    let scale = |v: &DVector<f64>| v.amax().max(1.0);
    for sweep in 1..=CD_MAX_SWEEPS {
        let mut change = 0.0f64;
        for i in 0..n {
            change = change.max(update(i, v, jv));
        }
        if change <= tol * scale(v) {
            return (sweep, true);
        }
        let active: Vec<usize> = (0..n).filter(|&i| v[i] != 0.0).collect();
        if support_solve(gram, c, lambda, &active, v, jv) {
            return (sweep, true);
        }
        for _ in 0..CD_INNER_SWEEPS {
            let mut inner = 0.0f64;
            for &i in &active {
                inner = inner.max(update(i, v, jv));
            }
            if inner <= tol * scale(v) {
                break;
            }
        }
    }
    (CD_MAX_SWEEPS, false)
}

/// Once the support and signs have settled, the minimizer solves
/// `J_SS x = c_S - λ sign(x_S)`. Adopts that solution if it keeps the signs
/// and satisfies the KKT bound off the support; otherwise leaves `v` alone.
fn support_solve(gram: &DMatrix<f64>, c: &DVector<f64>, lambda: f64, active: &[usize], v: &mut DVector<f64>, jv: &mut DVector<f64>) -> bool {
    if active.is_empty() {
        return false;
    }
    let m = active.len();
    let sub = DMatrix::from_fn(m, m, |i, j| gram[(active[i], active[j])]);
    let rhs = DVector::from_fn(m, |i, _| c[active[i]] - lambda * v[active[i]].signum());
    let Some(chol) = sub.cholesky() else {
        return false;
    };
    let xs = chol.solve(&rhs);
    if active.iter().zip(xs.iter()).any(|(&i, &x)| x * v[i].signum() <= 0.0) {
        return false;
    }
    let mut cand = DVector::zeros(v.len());
    for (&i, &x) in active.iter().zip(xs.iter()) {
        cand[i] = x;
    }
    let jc = gram * &cand;
    let kkt = (0..v.len()).all(|i| cand[i] != 0.0 || (c[i] - jc[i]).abs() <= lambda * (1.0 + 1e-9));
    if kkt {
        *v = cand;
        *jv = jc;
    }
    kkt
}

/// `(1/n) Σ d(x̂ᵢ; xᵢ)`.
pub fn empirical_distortion(x: &[f64], x_hat: &[f64], d: &Distortion<f64>) -> Result<f64> {
    if x.len() != x_hat.len() {
        return Err(Error::Argument(format!("length mismatch: {} vs {}", x.len(), x_hat.len())));
    }
    if x.is_empty() {
        return Err(Error::Argument("empty vectors".into()));
    }
    Ok(x.iter().zip(x_hat).map(|(&xi, &hi)| d.eval(hi, xi)).sum::<f64>() / x.len() as f64)
}

/// Per-dimension ridge MSE `∫ [λ² E x² + λ₀ t] / (t + λ)² dF(t)` over the
/// Gram spectrum, computed as `λ² E x² G'(-λ) + λ₀ [G(-λ) - λ G'(-λ)]`.
pub fn ridge_oracle_mse(ens: &SpectralEnsemble<f64>, lambda: f64, lambda0: f64, ex2: f64) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(Error::Argument(format!("lambda must be positive, got {lambda}")));
    }
    let g = ens.stieltjes(-lambda)?;
    let dg = ens.stieltjes_deriv(-lambda)?;
    Ok(lambda * lambda * ex2 * dg + lambda0 * (g - lambda * dg))
}

#[derive(Clone, Debug, PartialEq)]
pub enum Binning {
    /// Exact symbols; values must sit on one of them.
    Alphabet(Vec<f64>),
    /// Increasing edges; bin `i` is `[eᵢ, eᵢ₊₁)`, the last bin is closed.
    Edges(Vec<f64>),
}

impl Binning {
    fn validate(&self) -> Result<()> {
        let v = match self {
            Self::Alphabet(s) if s.is_empty() => return Err(Error::Argument("empty alphabet".into())),
            Self::Alphabet(s) => s,
            Self::Edges(e) if e.len() < 2 => return Err(Error::Argument("binning needs at least two edges".into())),
            Self::Edges(e) => e,
        };
        if v.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Argument("bins must be strictly increasing".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        match self {
            Self::Alphabet(s) => s.len(),
            Self::Edges(e) => e.len() - 1,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, v: f64) -> Option<usize> {
        match self {
            Self::Alphabet(s) => s.iter().position(|&c| (c - v).abs() <= 1e-9 * c.abs().max(1.0)),
            Self::Edges(e) => {
                let last = e.len() - 1;
                if v < e[0] || v > e[last] || v.is_nan() {
                    None
                } else if v == e[last] {
                    Some(last - 1)
                } else {
                    Some(e.partition_point(|&b| b <= v) - 1)
                }
            }
        }
    }
}

/// Joint counts of `(xᵢ, x̂ᵢ)` pooled over any number of instances.
#[derive(Clone, Debug)]
pub struct JointHistogram {
    pub x_bins: Binning,
    pub x_hat_bins: Binning,
    counts: DMatrix<f64>,
    total: u64,
}

impl JointHistogram {
    pub fn new(x_bins: Binning, x_hat_bins: Binning) -> Result<Self> {
        x_bins.validate()?;
        x_hat_bins.validate()?;
        let counts = DMatrix::zeros(x_bins.len(), x_hat_bins.len());
        Ok(Self { x_bins, x_hat_bins, counts, total: 0 })
    }

    pub fn add(&mut self, x: &[f64], x_hat: &[f64]) -> Result<()> {
        if x.len() != x_hat.len() {
            return Err(Error::Argument(format!("length mismatch: {} vs {}", x.len(), x_hat.len())));
        }
        for (&a, &b) in x.iter().zip(x_hat) {
            let i = self.x_bins.index(a).ok_or_else(|| Error::Argument(format!("x = {a} falls outside the binning")))?;
            let j = self.x_hat_bins.index(b).ok_or_else(|| Error::Argument(format!("x̂ = {b} falls outside the binning")))?;
            self.counts[(i, j)] += 1.0;
        }
        self.total += x.len() as u64;
        Ok(())
    }

    pub fn merge(&mut self, other: &Self) -> Result<()> {
        if self.x_bins != other.x_bins || self.x_hat_bins != other.x_hat_bins {
            return Err(Error::Argument("cannot merge histograms with different binning".into()));
        }
        self.counts += &other.counts;
        self.total += other.total;
        Ok(())
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// Joint frequencies summing to one.
    pub fn joint(&self) -> DMatrix<f64> {
        if self.total == 0 {
            return self.counts.clone();
        }
        &self.counts / self.total as f64
    }

    /// Rows normalized to conditional frequencies of `x̂` given `x`; rows with
    /// no samples stay zero.
    pub fn conditional(&self) -> DMatrix<f64> {
        let mut m = self.counts.clone();
        for mut row in m.row_iter_mut() {
            let s = row.sum();
            if s > 0.0 {
                row /= s;
            }
        }
        m
    }
}

/// Normalized joint table of `(xᵢ, x̂ᵢ)` with the same binning on both axes.
pub fn empirical_joint(x: &[f64], x_hat: &[f64], bins: &Binning) -> Result<DMatrix<f64>> {
    let mut h = JointHistogram::new(bins.clone(), bins.clone())?;
    h.add(x, x_hat)?;
    Ok(h.joint())
}

/// Largest row-wise total-variation distance between two conditional tables.
pub fn max_row_total_variation(p: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<f64> {
    if p.shape() != q.shape() {
        return Err(Error::Argument(format!("shape mismatch: {:?} vs {:?}", p.shape(), q.shape())));
    }
    Ok((0..p.nrows())
        .map(|i| 0.5 * p.row(i).iter().zip(q.row(i).iter()).map(|(a, b)| (a - b).abs()).sum::<f64>())
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn identity_instance(y: &[f64]) -> SystemInstance {
        SystemInstance::from_parts(DMatrix::identity(y.len(), y.len()), DVector::from_column_slice(y)).unwrap()
    }

    #[test]
    fn projector_rows_orthogonal() {
        for (k, n) in [(7, 7), (50, 100)] {
            let a = gen_matrix(MatrixKind::Projector, k, n, 11).unwrap();
            let d = &a * a.transpose() - DMatrix::identity(k, k) * (n as f64 / k as f64);
            assert!(d.amax() < 1e-10, "{}", d.amax());
        }
        assert!(gen_matrix(MatrixKind::Projector, 5, 4, 0).is_err());
    }

    #[test]
    fn iid_mean_eigenvalue() {
        let a = gen_matrix(MatrixKind::Iid, 500, 1000, 3).unwrap();
        let tr: f64 = (0..1000).map(|j| a.column(j).norm_squared()).sum();
        assert!((tr / 1000.0 - 1.0).abs() < 0.05);
    }

    #[test]
    fn trivial_reconstructions() {
        let r = reconstruct(&identity_instance(&[2.0, 4.0]), &Utility::half_square(), 1.0).unwrap();
        assert_abs_diff_eq!(r.x_hat[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.x_hat[1], 2.0, epsilon = 1e-12);
        let r = reconstruct(&identity_instance(&[2.0, 0.5]), &Utility::l1(), 1.0).unwrap();
        assert!(r.converged);
        assert_abs_diff_eq!(r.x_hat[0], 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(r.x_hat[1], 0.0, epsilon = 1e-9);
        let p = lasso_path(&identity_instance(&[2.0, 0.5]), &[1.0]).unwrap();
        assert_eq!(p[0].x_hat, vec![1.0, 0.0]);
    }

    #[test]
    fn refuses_large_exhaustive_and_real_l0() {
        let inst = SystemInstance::from_parts(DMatrix::identity(19, 19), DVector::zeros(19)).unwrap();
        let u = Utility::l0().on_alphabet(vec![0.0, 1.0]).unwrap();
        assert!(matches!(reconstruct(&inst, &u, 1.0), Err(Error::Argument(_))));
        assert!(matches!(reconstruct(&inst, &Utility::l0(), 1.0), Err(Error::Unsupported(_))));
    }

    #[test]
    fn gray_walk_visits_everything() {
        let a = DMatrix::from_fn(3, 4, |i, j| (i as f64 + 1.0) * 0.3 - j as f64 * 0.2);
        let inst = SystemInstance::from_parts(a, DVector::from_column_slice(&[0.1, -0.4, 0.7])).unwrap();
        let u = Utility::l0().on_alphabet(vec![-1.0, 0.0, 1.0]).unwrap();
        let r = reconstruct(&inst, &u, 0.3).unwrap();
        assert_eq!(r.iterations, 81);
    }

    #[test]
    fn distortion_and_joint() {
        let d = empirical_distortion(&[1.0, 0.0], &[0.0, 0.0], &Distortion::SymbolError).unwrap();
        assert_eq!(d, 0.5);
        assert!(empirical_distortion(&[1.0], &[1.0, 2.0], &Distortion::SquaredError).is_err());
        let x = [0.0, 1.0, -1.0, 0.0];
        let j = empirical_joint(&x, &x, &Binning::Alphabet(vec![-1.0, 0.0, 1.0])).unwrap();
        assert_eq!(j, DMatrix::from_diagonal(&DVector::from_column_slice(&[0.25, 0.5, 0.25])));
        let e = Binning::Edges(vec![0.0, 1.0, 2.0]);
        assert_eq!(e.index(1.0), Some(1));
        assert_eq!(e.index(2.0), Some(1));
        assert_eq!(e.index(2.5), None);
    }

    #[test]
    fn ridge_oracle_single_mass() {
        let ens = SpectralEnsemble::projector(1.0).unwrap();
        let (l, l0, e) = (0.3, 0.02, 0.1);
        let want = l * l * e / (1.3f64 * 1.3) + l0 / (1.3f64 * 1.3);
        assert_abs_diff_eq!(ridge_oracle_mse(&ens, l, l0, e).unwrap(), want, epsilon = 1e-14);
        let mp = SpectralEnsemble::marcenko_pastur(0.5).unwrap();
        assert!(ridge_oracle_mse(&mp, 1e-9, 0.0, 1.0).unwrap() < 1e-6);
    }

    #[test]
    fn seeds_are_counter_based() {
        assert_eq!(instance_seed(5, 17), instance_seed(5, 17));
        assert_ne!(instance_seed(5, 17), instance_seed(5, 18));
        assert_ne!(instance_seed(5, 17), instance_seed(6, 17));
    }
}
