//! Scalar MAP denoisers `argmin_v (y - v)²/(2λˢ) + u(v)` and the vector MAP
//! objective.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::{Error, Real, Result};

/// User-supplied penalty `u(v) >= 0`.
#[derive(Clone)]
pub struct CustomFn<T>(pub Arc<dyn Fn(T) -> T + Send + Sync>);

impl<T> fmt::Debug for CustomFn<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("CustomFn(..)")
    }
}

#[derive(Debug, Clone)]
pub enum UtilityKind<T> {
    /// `v²/2`
    HalfSquare,
    /// `|v|`
    L1,
    /// `1{v ≠ 0}`
    L0,
    Custom(CustomFn<T>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Support<T> {
    Reals,
    /// Strictly increasing, finite points.
    Alphabet(Vec<T>),
}

#[derive(Debug, Clone)]
pub struct Utility<T> {
    pub kind: UtilityKind<T>,
    pub support: Support<T>,
}

impl<T: Real> Utility<T> {
    pub fn half_square() -> Self {
        Self { kind: UtilityKind::HalfSquare, support: Support::Reals }
    }

    pub fn l1() -> Self {
        Self { kind: UtilityKind::L1, support: Support::Reals }
    }

    pub fn l0() -> Self {
        Self { kind: UtilityKind::L0, support: Support::Reals }
    }

    pub fn custom(u: impl Fn(T) -> T + Send + Sync + 'static) -> Self {
        Self { kind: UtilityKind::Custom(CustomFn(Arc::new(u))), support: Support::Reals }
    }

    /// Restricts the estimate to the given points; they are sorted here.
    pub fn on_alphabet(mut self, mut points: Vec<T>) -> Result<Self> {
        if points.is_empty() || points.iter().any(|p| !p.is_finite()) {
            return Err(Error::Argument("alphabet must be a nonempty list of finite points".into()));
        }
        points.sort_by(|a, b| a.partial_cmp(b).unwrap());
        if points.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Argument("alphabet points must be distinct".into()));
        }
        self.support = Support::Alphabet(points);
        Ok(self)
    }

    pub fn alphabet(&self) -> Option<&[T]> {
        match &self.support {
            Support::Alphabet(p) => Some(p),
            Support::Reals => None,
        }
    }

    /// `u(v)`, ignoring the support restriction.
    pub fn penalty(&self, v: T) -> T {
        match &self.kind {
            UtilityKind::HalfSquare => v * v / T::lit(2.0),
            UtilityKind::L1 => v.abs(),
            UtilityKind::L0 => {
                if v != T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            UtilityKind::Custom(f) => (f.0)(v),
        }
    }

    /// `u(v)`, with `+∞` off the alphabet.
    pub fn eval(&self, v: T) -> T {
        match &self.support {
            Support::Alphabet(p) if !p.contains(&v) => T::infinity(),
            _ => self.penalty(v),
        }
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            UtilityKind::HalfSquare => "l2",
            UtilityKind::L1 => "l1",
            UtilityKind::L0 => "l0",
            UtilityKind::Custom(_) => "custom",
        }
    }
}

/// Scalar denoiser at a fixed effective noise level `λˢ`.
#[derive(Debug, Clone)]
pub struct DenoiserSpec<T> {
    pub utility: Utility<T>,
    pub lambda_s: T,
    // Alphabet quantizer: surviving symbols and the upper edges of their
    // cells (last edge +∞).
    cells: Vec<(T, T)>,
}

impl<T: Real> DenoiserSpec<T> {
    pub fn new(utility: Utility<T>, lambda_s: T) -> Result<Self> {
        if !(lambda_s >= T::zero() && lambda_s.is_finite()) {
            return Err(Error::Argument(format!("lambda_s must be finite and nonnegative, got {lambda_s}")));
        }
        let cells = match &utility.support {
            Support::Alphabet(points) => quantizer_cells(points, |v| utility.penalty(v), lambda_s),
            Support::Reals => Vec::new(),
        };
        Ok(Self { utility, lambda_s, cells })
    }

    pub fn denoise(&self, y: T) -> Result<T> {
        let lam = self.lambda_s;
        if !self.cells.is_empty() {
            // Cells are half-open (v_k, v_{k+1}].
            let i = self.cells.partition_point(|c| c.1 < y);
            return Ok(self.cells[i.min(self.cells.len() - 1)].0);
        }
        Ok(match &self.utility.kind {
            UtilityKind::HalfSquare => y / (T::one() + lam),
            UtilityKind::L1 => {
                if y.abs() <= lam {
                    T::zero()
                } else {
                    y.signum() * (y.abs() - lam)
                }
            }
            UtilityKind::L0 => {
                if y.abs() <= (T::lit(2.0) * lam).sqrt() {
                    T::zero()
                } else {
                    y
                }
            }
            UtilityKind::Custom(f) => golden_argmin(|v| (y - v).powi(2) / (T::lit(2.0) * lam) + (f.0)(v), y, lam)?,
        })
    }

    /// `∂g/∂y` (zero on quantizer plateaus; jumps are ignored).
    pub fn slope(&self, y: T) -> Result<T> {
        let lam = self.lambda_s;
        if !self.cells.is_empty() {
            return Ok(T::zero());
        }
        let ind = |b: bool| if b { T::one() } else { T::zero() };
        Ok(match &self.utility.kind {
            UtilityKind::HalfSquare => T::one() / (T::one() + lam),
            UtilityKind::L1 => ind(y.abs() > lam),
            UtilityKind::L0 => ind(y.abs() > (T::lit(2.0) * lam).sqrt()),
            UtilityKind::Custom(_) => {
                let h = T::lit(1e-5) * y.abs().max(T::one());
                (self.denoise(y + h)? - self.denoise(y - h)?) / (T::lit(2.0) * h)
            }
        })
    }

    /// Pairwise quantizer boundaries between consecutive alphabet points,
    /// `(c_{k-1}+c_k)/2 + λˢ (u(c_k) - u(c_{k-1}))/(c_k - c_{k-1})`.
    pub fn boundary_points(&self) -> Result<Vec<T>> {
        let points = self
            .utility
            .alphabet()
            .ok_or_else(|| Error::Unsupported("boundary points need an alphabet support".into()))?;
        let two = T::lit(2.0);
        Ok(points
            .windows(2)
            .map(|w| {
                let (a, b) = (w[0], w[1]);
                (a + b) / two + self.lambda_s * (self.utility.penalty(b) - self.utility.penalty(a)) / (b - a)
            })
            .collect())
    }

    /// Alphabet symbols that own a nonempty cell, with their upper edges.
    pub fn cells(&self) -> &[(T, T)] {
        &self.cells
    }

    /// Inputs `y` where the denoiser jumps or has a kink.
    pub fn breakpoints(&self) -> Vec<T> {
        if !self.cells.is_empty() {
            return self.cells[..self.cells.len() - 1].iter().map(|c| c.1).collect();
        }
        let lam = self.lambda_s;
        match self.utility.kind {
            UtilityKind::L1 if lam > T::zero() => vec![-lam, lam],
            UtilityKind::L0 if lam > T::zero() => {
                let t = (T::lit(2.0) * lam).sqrt();
                vec![-t, t]
            }
            _ => Vec::new(),
        }
    }
}

// Lower envelope of v ↦ (y - c)²/(2λ) + u(c) over the alphabet, as cells of y.
fn quantizer_cells<T: Real>(points: &[T], u: impl Fn(T) -> T, lam: T) -> Vec<(T, T)> {
    let two = T::lit(2.0);
    // Comparing candidates c reduces to minimizing -y c + (c²/2 + λ u(c)),
    // whose pairwise crossings are the usual boundary formula.
    let cross = |i: T, j: T| (i + j) / two + lam * (u(j) - u(i)) / (j - i);
    let mut hull: Vec<T> = Vec::with_capacity(points.len());
    for &c in points {
        while hull.len() >= 2 {
            let (i1, i2) = (hull[hull.len() - 2], hull[hull.len() - 1]);
            if cross(i1, c) <= cross(i1, i2) {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(c);
    }
    let mut cells = Vec::with_capacity(hull.len());
    for k in 0..hull.len() {
        let upper = if k + 1 < hull.len() { cross(hull[k], hull[k + 1]) } else { T::infinity() };
        cells.push((hull[k], upper));
    }
    cells
}

fn golden_argmin<T: Real>(f: impl Fn(T) -> T, y: T, lam: T) -> Result<T> {
    let delta = T::lit(5.0) * lam.sqrt().max(T::one());
    let n = 64;
    let step = T::lit(2.0) * delta / T::of_usize(n - 1);
    let grid = |i: usize| y - delta + step * T::of_usize(i);
    let mut best = None;
    for i in 0..n {
        let v = f(grid(i));
        if v.is_finite() && best.map_or(true, |(_, b)| v < b) {
            best = Some((i, v));
        }
    }
    let (i, _) = best.ok_or_else(|| Error::Optimization(format!("objective not finite near y = {y}")))?;
    if i == 0 || i == n - 1 {
        return Err(Error::Optimization(format!("minimizer not bracketed within ±{delta} of y = {y}")));
    }
    let (mut a, mut b) = (grid(i - 1), grid(i + 1));
    let inv_phi = T::lit((5f64.sqrt() - 1.0) / 2.0);
    let mut c = b - (b - a) * inv_phi;
    let mut d = a + (b - a) * inv_phi;
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > T::lit(1e-10) {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - (b - a) * inv_phi;
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + (b - a) * inv_phi;
            fd = f(d);
        }
    }
    Ok((a + b) / T::lit(2.0))
}

/// `(1/2λ)‖y - Av‖² + Σ u(vᵢ)`.
pub fn map_objective<T: Real>(utility: &Utility<T>, lambda: T, y: &[T], a: &DMatrix<T>, v: &[T]) -> Result<T> {
    if a.nrows() != y.len() || a.ncols() != v.len() {
        return Err(Error::Argument(format!(
            "dimension mismatch: A is {}x{}, y has {}, v has {}",
            a.nrows(),
            a.ncols(),
            y.len(),
            v.len()
        )));
    }
    if !(lambda > T::zero()) {
        return Err(Error::Argument(format!("lambda must be positive, got {lambda}")));
    }
    let mut rss = T::zero();
    for i in 0..y.len() {
        let mut r = y[i];
        for (j, &vj) in v.iter().enumerate() {
            r = r - a[(i, j)] * vj;
        }
        rss = rss + r * r;
    }
    let pen: T = v.iter().map(|&x| utility.eval(x)).sum();
    Ok(rss / (T::lit(2.0) * lambda) + pen)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn spec(u: Utility<f64>, l: f64) -> DenoiserSpec<f64> {
        DenoiserSpec::new(u, l).unwrap()
    }

    fn sym_alphabet(a: f64, kappa: i32) -> Vec<f64> {
        (-kappa..=kappa).map(|k| a * k as f64).collect()
    }

    #[test]
    fn closed_forms() {
        let s = spec(Utility::l1(), 0.5);
        assert_eq!(s.denoise(0.3).unwrap(), 0.0);
        assert_eq!(s.denoise(1.0).unwrap(), 0.5);
        assert_eq!(s.denoise(-1.0).unwrap(), -0.5);
        assert_eq!(s.denoise(0.5).unwrap(), 0.0);
        let h = spec(Utility::l0(), 0.32);
        assert_eq!(h.denoise(1.0).unwrap(), 1.0);
        assert_eq!(h.denoise(0.7).unwrap(), 0.0);
        assert_eq!(spec(Utility::half_square(), 1.0).denoise(2.0).unwrap(), 1.0);
    }

    #[test]
    fn boundaries() {
        let l0 = spec(Utility::l0().on_alphabet(sym_alphabet(1.0, 1)).unwrap(), 0.1);
        let b = l0.boundary_points().unwrap();
        assert_abs_diff_eq!(b[0], -0.6, epsilon = 1e-15);
        assert_abs_diff_eq!(b[1], 0.6, epsilon = 1e-15);
        let l2 = spec(Utility::half_square().on_alphabet(sym_alphabet(1.0, 1)).unwrap(), 0.0);
        assert_eq!(l2.boundary_points().unwrap(), vec![-0.5, 0.5]);
        let l1 = spec(Utility::l1().on_alphabet(sym_alphabet(1.0, 2)).unwrap(), 0.2);
        let b = l1.boundary_points().unwrap();
        for (got, want) in b.iter().zip([-1.7, -0.7, 0.7, 1.7]) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-14);
        }
        assert!(spec(Utility::l1(), 0.2).boundary_points().is_err());
    }

    #[test]
    fn boundary_ties_go_to_lower_cell() {
        let q = spec(Utility::l0().on_alphabet(sym_alphabet(1.0, 1)).unwrap(), 0.1);
        let v = q.boundary_points().unwrap()[1];
        assert_eq!(q.denoise(v).unwrap(), 0.0);
        assert_eq!(q.denoise(v + 1e-12).unwrap(), 1.0);
        let v0 = q.boundary_points().unwrap()[0];
        assert_eq!(q.denoise(v0).unwrap(), -1.0);
    }

    #[test]
    fn empty_cells_are_dropped() {
        // Large λˢ makes the ±1 cells of the ℓ0 quantizer on {0, ±1, ±2} vanish.
        let q = spec(Utility::l0().on_alphabet(sym_alphabet(1.0, 2)).unwrap(), 2.0);
        let syms: Vec<f64> = q.cells().iter().map(|c| c.0).collect();
        assert_eq!(syms, vec![-2.0, 0.0, 2.0]);
        for y in [-3.1, -1.2, 0.4, 1.9, 2.6] {
            let brute = sym_alphabet(1.0, 2)
                .into_iter()
                .min_by(|a, b| {
                    let fa = (y - a).powi(2) / 4.0 + if *a != 0.0 { 1.0 } else { 0.0 };
                    let fb = (y - b).powi(2) / 4.0 + if *b != 0.0 { 1.0 } else { 0.0 };
                    fa.partial_cmp(&fb).unwrap()
                })
                .unwrap();
            assert_eq!(q.denoise(y).unwrap(), brute, "y = {y}");
        }
    }

    #[test]
    fn custom_utility_matches_closed_form() {
        let c = spec(Utility::custom(|v: f64| v.abs()), 0.5);
        assert_abs_diff_eq!(c.denoise(1.3).unwrap(), 0.8, epsilon = 1e-8);
        assert_abs_diff_eq!(c.denoise(0.2).unwrap(), 0.0, epsilon = 1e-8);
    }

    #[test]
    fn objective_examples() {
        let a = DMatrix::<f64>::identity(2, 2);
        let v = map_objective(&Utility::l1(), 1.0, &[1.0, 0.0], &a, &[1.0, 0.0]).unwrap();
        assert_abs_diff_eq!(v, 1.0);
        let v = map_objective(&Utility::l0(), 0.5, &[1.0, 2.0], &a, &[0.0, 0.0]).unwrap();
        assert_abs_diff_eq!(v, 5.0);
        assert!(map_objective(&Utility::l0(), 0.5, &[1.0], &a, &[0.0, 0.0]).is_err());
    }
}
