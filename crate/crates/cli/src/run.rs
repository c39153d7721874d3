use anyhow::{anyhow, Context, Result};
use map_replica::montecarlo::{
    empirical_distortion, instance_seed, lasso_path, reconstruct, ridge_path, SystemInstance,
};
use map_replica::observables::predict;
use map_replica::ModelConfig;
use map_replica::solver::{solve, SolveReport};
use map_replica::{Distortion, Quadrature};
use map_replica::denoisers::UtilityKind;
use rayon::prelude::*;

use crate::config::RunConfig;
use crate::table::{Cell, Table};

type Report = SolveReport<f64>;

pub fn db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// One grid point solved at `b` levels, with λ either fixed or chosen to
/// minimize the selected solution's MSE over `model.lambda_grid`.
pub struct Point {
    pub value: Option<f64>,
    pub cfg: ModelConfig,
    pub report: Report,
}

impl Point {
    pub fn lambda(&self) -> f64 {
        self.cfg.lambda
    }

    pub fn selected_mse(&self) -> Option<f64> {
        self.report.selected().map(|s| s.mse)
    }
}

pub fn solve_point(rc: &RunConfig, value: Option<f64>, b: usize, quad: &Quadrature) -> Result<Point> {
    let one = |lambda: Option<f64>| -> Result<Point> {
        let cfg = rc.model_at(value, lambda)?;
        let report = solve(&cfg, b, &rc.solver(&cfg, b), quad).map_err(|e| anyhow!("solver: {e}"))?;
        Ok(Point { value, cfg, report })
    };
    let Some(grid) = &rc.model.lambda_grid else {
        return one(None);
    };
    let mut best: Option<Point> = None;
    for &l in grid {
        let p = one(Some(l))?;
        let better = match (&best, p.selected_mse()) {
            (None, _) => true,
            (Some(cur), Some(m)) => cur.selected_mse().map_or(true, |c| m < c),
            (Some(_), None) => false,
        };
        if better {
            best = Some(p);
        }
    }
    Ok(best.expect("validated non-empty lambda grid"))
}

fn has_alphabet(rc: &RunConfig) -> bool {
    rc.model.alphabet.is_some()
}

/// Empirical MSE and (on an alphabet) symbol error rate averaged over the
/// configured instances. Instance `i` uses the same seed at every grid point.
pub fn simulate_point(rc: &RunConfig, cfg: &ModelConfig, rate: f64) -> Result<(f64, Option<f64>)> {
    let mc = &rc.montecarlo;
    let kind = rc.matrix_kind().ok_or_else(|| anyhow!("montecarlo: no matrix generator for this ensemble"))?;
    let alphabet = cfg.utility.alphabet().is_some();
    let per: Vec<Result<(f64, f64)>> = (0..mc.instances)
        .into_par_iter()
        .map(|i| {
            let inst = SystemInstance::generate(kind, &cfg.prior, rate, mc.n, cfg.lambda0, instance_seed(mc.seed, i as u64))?;
            let rep = if alphabet {
                reconstruct(&inst, &cfg.utility, cfg.lambda)?
            } else {
                match cfg.utility.kind {
                    UtilityKind::HalfSquare => ridge_path(&inst, &[cfg.lambda])?.remove(0),
                    UtilityKind::L1 => lasso_path(&inst, &[cfg.lambda])?.remove(0),
                    _ => reconstruct(&inst, &cfg.utility, cfg.lambda)?,
                }
            };
            let x = inst.x.as_slice();
            let mse = empirical_distortion(x, &rep.x_hat, &Distortion::SquaredError)?;
            let ser = empirical_distortion(x, &rep.x_hat, &Distortion::SymbolError)?;
            Ok((mse, ser))
        })
        .collect();
    let (mut mse, mut ser) = (0.0, 0.0);
    for r in per {
        let (m, s) = r.context("montecarlo")?;
        mse += m;
        ser += s;
    }
    let k = mc.instances as f64;
    Ok((mse / k, alphabet.then_some(ser / k)))
}

fn solution_header(rc: &RunConfig, with_value: bool, b: usize) -> Vec<String> {
    let mut h: Vec<String> = Vec::new();
    if with_value {
        if let Some(v) = rc.sweep_var() {
            if v.column() != "lambda" {
                h.push(v.column().into());
            }
        }
    }
    h.push("lambda".into());
    h.extend(["b", "chi", "q"].map(String::from));
    h.extend((1..=b).map(|k| format!("p{k}")));
    h.extend((1..=b).map(|k| format!("mu{k}")));
    h.extend(["lambda_s", "lambda0_s"].map(String::from));
    h.extend((1..=b).map(|k| format!("lambda{k}_s")));
    h.extend(["mse", "mse0_db"].map(String::from));
    if has_alphabet(rc) {
        h.push("ser".into());
    }
    h.extend(["free_energy", "entropy", "spectral_radius", "converged", "stable", "selected"].map(String::from));
    if rc.montecarlo.enabled {
        h.push("mc_mse".into());
        h.push("mc_mse0_db".into());
        if has_alphabet(rc) {
            h.push("mc_ser".into());
        }
    }
    h
}

fn solution_rows(rc: &RunConfig, p: &Point, with_value: bool, b: usize, quad: &Quadrature) -> Result<Vec<Vec<Cell>>> {
    let ex2 = p.cfg.prior.second_moment();
    let alphabet = has_alphabet(rc);
    let mc = if rc.montecarlo.enabled && !p.report.solutions.is_empty() {
        let rate = rc.rate_at(p.value).ok_or_else(|| anyhow!("montecarlo: no rate"))?;
        Some(simulate_point(rc, &p.cfg, rate)?)
    } else {
        None
    };
    let lead = |row: &mut Vec<Cell>, lambda: Option<f64>| {
        if with_value && rc.sweep_var().is_some_and(|v| v.column() != "lambda") {
            row.push(Cell::opt(p.value));
        }
        row.push(Cell::opt(lambda));
    };
    if p.report.solutions.is_empty() {
        let fixed = rc.model.lambda_grid.is_none();
        let mut row = Vec::new();
        lead(&mut row, fixed.then_some(p.lambda()));
        row.push(Cell::Int(b as i64));
        let width = solution_header(rc, with_value, b).len();
        while row.len() < width {
            row.push(Cell::Empty);
        }
        let conv = solution_header(rc, with_value, b).iter().position(|h| h == "converged").expect("column");
        row[conv] = Cell::Bool(false);
        row[conv + 1] = Cell::Bool(false);
        row[conv + 2] = Cell::Bool(false);
        return Ok(vec![row]);
    }
    let sel = p.report.selected().map(|s| s.state.coords());
    let mut rows = Vec::new();
    for s in &p.report.solutions {
        let mut row = Vec::new();
        lead(&mut row, Some(p.lambda()));
        row.push(Cell::Int(b as i64));
        row.push(Cell::Num(s.state.chi));
        row.push(Cell::Num(s.state.q));
        row.extend(s.state.p.iter().map(|v| Cell::Num(*v)));
        row.extend(s.state.mu.iter().map(|v| Cell::Num(*v)));
        row.push(Cell::Num(s.channel.lambda_s));
        row.push(Cell::Num(s.channel.lambda0_s));
        row.extend(s.channel.lambda_k.iter().map(|v| Cell::Num(*v)));
        row.push(Cell::Num(s.mse));
        row.push(Cell::Num(db(s.mse / ex2)));
        if alphabet {
            let ser = predict(s, &p.cfg, &Distortion::SymbolError, quad).map_err(|e| anyhow!("ser: {e}"))?;
            row.push(Cell::Num(ser));
        }
        row.push(Cell::Num(s.free_energy));
        row.push(Cell::Num(s.entropy));
        row.push(Cell::Num(s.spectral_radius));
        row.push(Cell::Bool(s.converged));
        row.push(Cell::Bool(s.stable));
        row.push(Cell::Bool(sel.as_ref() == Some(&s.state.coords())));
        if let Some((m, ser)) = mc {
            row.push(Cell::Num(m));
            row.push(Cell::Num(db(m / ex2)));
            if alphabet {
                row.push(Cell::opt(ser));
            }
        }
        rows.push(row);
    }
    Ok(rows)
}

/// All solutions at the configured single point.
pub fn run_solve(rc: &RunConfig, quad: &Quadrature) -> Result<Table> {
    let b = rc.ansatz.b;
    let p = solve_point(rc, None, b, quad)?;
    let mut t = Table::new(solution_header(rc, false, b));
    t.rows = solution_rows(rc, &p, false, b, quad)?;
    Ok(t)
}

/// One row per converged solution per grid point, in grid order.
pub fn run_sweep(rc: &RunConfig, quad: &Quadrature) -> Result<Table> {
    let b = rc.ansatz.b;
    let grid = rc.grid()?;
    let blocks: Vec<Result<Vec<Vec<Cell>>>> = grid
        .par_iter()
        .map(|&v| {
            let p = solve_point(rc, Some(v), b, quad)?;
            solution_rows(rc, &p, true, b, quad)
        })
        .collect();
    let mut t = Table::new(solution_header(rc, true, b));
    for (v, block) in grid.iter().zip(blocks) {
        t.rows.extend(block.with_context(|| format!("grid point {v}"))?);
    }
    Ok(t)
}

fn level_name(b: usize) -> String {
    if b == 0 {
        "rs".into()
    } else {
        format!("{b}rsb")
    }
}

/// Selected MSE⁰ at two ansatz levels, their gap, and the largest grid value
/// up to which the gap stays below ε.
pub fn run_compare(rc: &RunConfig, quad: &Quadrature) -> Result<(Table, Option<f64>)> {
    let c = rc.compare.clone().unwrap_or_default();
    let grid = rc.grid()?;
    let var = rc.sweep_var().expect("grid implies a sweep").column();
    let rows: Vec<Result<(Option<f64>, Option<f64>, f64)>> = grid
        .par_iter()
        .map(|&v| {
            let a = solve_point(rc, Some(v), c.levels[0], quad)?;
            let b = solve_point(rc, Some(v), c.levels[1], quad)?;
            let ex2 = a.cfg.prior.second_moment();
            Ok((a.selected_mse().map(|m| db(m / ex2)), b.selected_mse().map(|m| db(m / ex2)), a.lambda()))
        })
        .collect();
    let mut header = vec![var.to_string()];
    if var != "lambda" {
        header.push("lambda".into());
    }
    header.push(format!("mse0_{}", level_name(c.levels[0])));
    header.push(format!("mse0_{}", level_name(c.levels[1])));
    header.extend(["gap", "valid"].map(String::from));
    let mut t = Table::new(header);
    let mut break_value = None;
    let mut intact = true;
    for (v, r) in grid.iter().zip(rows) {
        let (m0, m1, lambda) = r.with_context(|| format!("grid point {v}"))?;
        let gap = m0.zip(m1).map(|(a, b)| (a - b).abs());
        let valid = gap.is_some_and(|g| g < c.epsilon);
        intact &= valid;
        if intact {
            break_value = Some(*v);
        }
        let mut row = vec![Cell::Num(*v)];
        if var != "lambda" {
            row.push(Cell::Num(lambda));
        }
        row.extend([Cell::opt(m0), Cell::opt(m1), Cell::opt(gap), Cell::Bool(valid)]);
        t.rows.push(row);
    }
    Ok((t, break_value))
}

/// Zero-temperature entropy of the selected solution along the grid.
pub fn run_entropy(rc: &RunConfig, quad: &Quadrature) -> Result<Table> {
    let b = rc.ansatz.b;
    let grid = rc.grid()?;
    let var = rc.sweep_var().expect("grid implies a sweep").column();
    let rows: Vec<Result<Vec<Cell>>> = grid
        .par_iter()
        .map(|&v| {
            let p = solve_point(rc, Some(v), b, quad)?;
            let ex2 = p.cfg.prior.second_moment();
            let mut row = vec![Cell::Num(v)];
            if var != "lambda" {
                row.push(Cell::Num(p.lambda()));
            }
            match p.report.selected() {
                Some(s) => row.extend([
                    Cell::Num(s.state.chi),
                    Cell::Num(s.entropy),
                    Cell::Num(s.free_energy),
                    Cell::Num(db(s.mse / ex2)),
                    Cell::Bool(true),
                ]),
                None => row.extend([Cell::Empty, Cell::Empty, Cell::Empty, Cell::Empty, Cell::Bool(false)]),
            }
            Ok(row)
        })
        .collect();
    let mut header = vec![var.to_string()];
    if var != "lambda" {
        header.push("lambda".into());
    }
    header.extend(["chi", "entropy", "free_energy", "mse0_db", "converged"].map(String::from));
    let mut t = Table::new(header);
    for (v, r) in grid.iter().zip(rows) {
        t.rows.push(r.with_context(|| format!("grid point {v}"))?);
    }
    Ok(t)
}

/// Monte Carlo only: empirical MSE (and SER on an alphabet) along the grid, or
/// at the single configured point when there is no sweep.
pub fn run_simulate(rc: &RunConfig) -> Result<Table> {
    let values: Vec<Option<f64>> = match rc.sweep {
        Some(_) => rc.grid()?.into_iter().map(Some).collect(),
        None => vec![None],
    };
    let var = rc.sweep_var().map(|v| v.column());
    let mut header = Vec::new();
    if let Some(v) = var.filter(|v| *v != "lambda") {
        header.push(v.to_string());
    }
    header.extend(["lambda", "n", "instances", "mc_mse", "mc_mse0_db"].map(String::from));
    if has_alphabet(rc) {
        header.push("mc_ser".into());
    }
    let lambda_fixed = |v: Option<f64>| -> Result<ModelConfig> {
        let lambda = rc.model.lambda_grid.as_ref().map(|g| g[0]);
        if rc.model.lambda_grid.as_ref().is_some_and(|g| g.len() > 1) {
            anyhow::bail!("model.lambda_grid: simulate needs a fixed λ");
        }
        rc.model_at(v, lambda)
    };
    let mut t = Table::new(header);
    for v in values {
        let cfg = lambda_fixed(v)?;
        let rate = rc.rate_at(v).ok_or_else(|| anyhow!("model.rate: missing"))?;
        let (m, ser) = simulate_point(rc, &cfg, rate)?;
        let mut row = Vec::new();
        if var.is_some_and(|v| v != "lambda") {
            row.push(Cell::opt(v));
        }
        row.extend([
            Cell::Num(cfg.lambda),
            Cell::Int(rc.montecarlo.n as i64),
            Cell::Int(rc.montecarlo.instances as i64),
            Cell::Num(m),
            Cell::Num(db(m / cfg.prior.second_moment())),
        ]);
        if has_alphabet(rc) {
            row.push(Cell::opt(ser));
        }
        t.rows.push(row);
    }
    Ok(t)
}
