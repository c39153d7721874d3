#![allow(dead_code)]

use map_replica::{DenoiserSpec, Utility};

pub const GRID_STEP: f64 = 1e-4;

/// The utilities the brute-force comparison runs over, with names for messages.
pub fn brute_force_utilities() -> Vec<(&'static str, Utility)> {
    let tern = vec![-1.0, 0.0, 1.0];
    vec![
        ("l2", Utility::half_square()),
        ("l1", Utility::l1()),
        ("l0", Utility::l0()),
        ("custom", Utility::custom(|v: f64| v.abs() + 0.25 * v * v * v * v)),
        ("l0 on {0, ±1}", Utility::l0().on_alphabet(tern.clone()).unwrap()),
        ("l1 on {0, ±1}", Utility::l1().on_alphabet(tern).unwrap()),
        ("l2 on {0, ±1, ±2}", Utility::half_square().on_alphabet(vec![-2.0, -1.0, 0.0, 1.0, 2.0]).unwrap()),
        ("l0 on {-0.5, 0, 1, 3}", Utility::l0().on_alphabet(vec![-0.5, 0.0, 1.0, 3.0]).unwrap()),
    ]
}

fn cost(u: &Utility, ls: f64, y: f64, v: f64) -> f64 {
    (y - v) * (y - v) / (2.0 * ls) + u.penalty(v)
}

/// Compares `denoise(y)` with the argmin of the scalar objective over a
/// uniform grid of step 1e-4 on `[y - 5, y + 5]` (plus 0, where ℓ0 drops its
/// cost), or over the alphabet.  A mismatch is tolerated only when the
/// denoiser's objective is no worse than the grid winner's, i.e. on a tie.
pub fn check_against_grid(u: &Utility, ls: f64, y: f64) -> Result<(), String> {
    let d = DenoiserSpec::new(u.clone(), ls)
        .and_then(|s| s.denoise(y))
        .map_err(|e| format!("denoise failed: {e}"))?;
    let (best, tol) = match u.alphabet() {
        Some(points) => {
            let mut best = points[0];
            for &p in points {
                if cost(u, ls, y, p) < cost(u, ls, y, best) {
                    best = p;
                }
            }
            (best, 0.0)
        }
        None => {
            let steps = (10.0 / GRID_STEP).round() as usize;
            let mut best = 0.0;
            let mut fbest = cost(u, ls, y, 0.0);
            for i in 0..=steps {
                let v = y - 5.0 + i as f64 * GRID_STEP;
                let f = cost(u, ls, y, v);
                if f < fbest {
                    best = v;
                    fbest = f;
                }
            }
            (best, GRID_STEP * (1.0 + 1e-9))
        }
    };
    if (d - best).abs() <= tol {
        return Ok(());
    }
    let (fd, fb) = (cost(u, ls, y, d), cost(u, ls, y, best));
    if fd <= fb + 1e-12 * (1.0 + fb.abs()) {
        return Ok(());
    }
    Err(format!("y = {y}, λˢ = {ls}: denoise = {d} (cost {fd}), grid argmin = {best} (cost {fb})"))
}
