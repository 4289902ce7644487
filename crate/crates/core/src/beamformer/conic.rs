//! A small conic modeling layer and its Clarabel backend.
//!
//! Programs minimize a linear objective `c^T x` over free variables `x`. Each
//! constraint lists affine expressions whose values must lie in one cone:
//!
//! - `Zero`: every expression equals zero;
//! - `Nonnegative`: every expression is `>= 0`;
//! - `SecondOrder`: `(t, z)` with `|z| <= t`, `t` being the first expression;
//! - `Psd(n)`: a symmetric `n x n` matrix of expressions is positive semidefinite;
//! - `Exponential`: `(x, y, z)` with `y e^{x / y} <= z`, `y > 0`.
//!
//! Solvers report `Optimal`, `Infeasible` or `NumericalFailure`.

use std::time::Instant;

use clarabel::algebra::CscMatrix;
use clarabel::solver::{DefaultSettings, DefaultSolver, IPSolver, SolverStatus, SupportedConeT};
use serde::{Deserialize, Serialize};

/// Affine expression `sum_i a_i x_i + b`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinExpr {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl LinExpr {
    pub fn constant(c: f64) -> Self {
        Self {
            terms: Vec::new(),
            constant: c,
        }
    }

    pub fn var(i: usize) -> Self {
        Self::term(i, 1.0)
    }

    pub fn term(i: usize, a: f64) -> Self {
        Self {
            terms: vec![(i, a)],
            constant: 0.0,
        }
    }

    pub fn add_term(&mut self, i: usize, a: f64) -> &mut Self {
        if a != 0.0 {
            self.terms.push((i, a));
        }
        self
    }

    pub fn add_expr(&mut self, other: &LinExpr, scale: f64) -> &mut Self {
        for &(i, a) in &other.terms {
            self.add_term(i, a * scale);
        }
        self.constant += other.constant * scale;
        self
    }

    pub fn plus(mut self, other: &LinExpr, scale: f64) -> Self {
        self.add_expr(other, scale);
        self
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            terms: self.terms.iter().map(|&(i, a)| (i, a * s)).collect(),
            constant: self.constant * s,
        }
    }

    pub fn offset(mut self, c: f64) -> Self {
        self.constant += c;
        self
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.constant + self.terms.iter().map(|&(i, a)| a * x[i]).sum::<f64>()
    }
}

/// Cone families supported by the modeling layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConeKind {
    Zero,
    Nonnegative,
    SecondOrder,
    Psd(usize),
    Exponential,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConeConstraint {
    pub kind: ConeKind,
    /// For `Psd(n)`: the upper triangle, column by column, unscaled.
    pub rows: Vec<LinExpr>,
}

/// `minimize c^T x` subject to cone constraints.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConicProgram {
    pub num_vars: usize,
    pub objective: Vec<f64>,
    pub constraints: Vec<ConeConstraint>,
}

impl ConicProgram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn new_var(&mut self) -> usize {
        self.num_vars += 1;
        self.objective.push(0.0);
        self.num_vars - 1
    }

    pub fn new_vars(&mut self, n: usize) -> std::ops::Range<usize> {
        let start = self.num_vars;
        for _ in 0..n {
            self.new_var();
        }
        start..self.num_vars
    }

    pub fn set_objective(&mut self, var: usize, coef: f64) {
        self.objective[var] = coef;
    }

    pub fn add_objective(&mut self, expr: &LinExpr) {
        for &(i, a) in &expr.terms {
            self.objective[i] += a;
        }
    }

    pub fn add_zero(&mut self, rows: Vec<LinExpr>) {
        self.push(ConeKind::Zero, rows);
    }

    pub fn add_nonneg(&mut self, rows: Vec<LinExpr>) {
        self.push(ConeKind::Nonnegative, rows);
    }

    /// `|rest| <= t` where `rows = [t, rest...]`.
    pub fn add_soc(&mut self, rows: Vec<LinExpr>) {
        self.push(ConeKind::SecondOrder, rows);
    }

    /// `|z|^2 <= y` for `y >= 0`, encoded as `|((y - 1)/2, z)| <= (y + 1)/2`.
    pub fn add_squared_norm_bound(&mut self, z: Vec<LinExpr>, y: LinExpr) {
        let mut rows = Vec::with_capacity(z.len() + 2);
        rows.push(y.scaled(0.5).offset(0.5));
        rows.push(y.scaled(0.5).offset(-0.5));
        rows.extend(z);
        self.add_soc(rows);
    }

    /// `y e^{x/y} <= z`.
    pub fn add_exp(&mut self, x: LinExpr, y: LinExpr, z: LinExpr) {
        self.push(ConeKind::Exponential, vec![x, y, z]);
    }

    /// Symmetric matrix of expressions is PSD. Only the upper triangle is read.
    pub fn add_psd(&mut self, m: &[Vec<LinExpr>]) {
        let n = m.len();
        let mut rows = Vec::with_capacity(n * (n + 1) / 2);
        for j in 0..n {
            for i in 0..=j {
                rows.push(m[i][j].clone());
            }
        }
        self.push(ConeKind::Psd(n), rows);
    }

    fn push(&mut self, kind: ConeKind, rows: Vec<LinExpr>) {
        if !rows.is_empty() {
            self.constraints.push(ConeConstraint { kind, rows });
        }
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().zip(x).map(|(c, v)| c * v).sum()
    }
}

/// Solver outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    /// The solver met only its reduced tolerances, or stalled with residuals
    /// below [`INACCURATE_RESIDUAL`]; callers must verify the point themselves.
    Inaccurate,
    NumericalFailure,
}

/// Clarabel settings tried in order until one solves the program.
struct Attempt {
    step: f64,
    regularization: f64,
    chordal: bool,
    refine_tol: f64,
    refine_iters: u32,
}

const ATTEMPTS: [Attempt; 3] = [
    Attempt {
        step: 0.99,
        regularization: 1e-8,
        chordal: true,
        refine_tol: 1e-13,
        refine_iters: 10,
    },
    Attempt {
        step: 0.95,
        regularization: 1e-7,
        chordal: true,
        refine_tol: 1e-15,
        refine_iters: 50,
    },
    Attempt {
        step: 0.95,
        regularization: 1e-7,
        chordal: false,
        refine_tol: 1e-15,
        refine_iters: 50,
    },
];

/// Largest primal and dual residual of a stalled solve reported as
/// [`SolveStatus::Inaccurate`] rather than a failure.
pub const INACCURATE_RESIDUAL: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct ConicSolution {
    pub status: SolveStatus,
    pub x: Vec<f64>,
    pub objective: f64,
    pub iterations: u32,
    pub solve_seconds: f64,
}

/// Backend capable of solving a [`ConicProgram`]. Implementations hold no
/// shared mutable state, so one instance may serve many threads.
pub trait ConicSolver: Send + Sync {
    fn solve(&self, program: &ConicProgram) -> ConicSolution;
}

/// Interior-point backend built on Clarabel.
#[derive(Debug, Clone, Copy)]
pub struct ClarabelSolver {
    pub max_iter: u32,
    pub tol_gap: f64,
    pub tol_feas: f64,
    pub verbose: bool,
}

impl Default for ClarabelSolver {
    fn default() -> Self {
        Self {
            max_iter: 200,
            tol_gap: 1e-9,
            tol_feas: 1e-9,
            verbose: false,
        }
    }
}

impl ConicSolver for ClarabelSolver {
    fn solve(&self, program: &ConicProgram) -> ConicSolution {
        let start = Instant::now();
        let n = program.num_vars;
        let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        let mut b = Vec::new();
        let mut cones = Vec::with_capacity(program.constraints.len());
        let sqrt2 = std::f64::consts::SQRT_2;
        for con in &program.constraints {
            let (cone, psd_n) = match con.kind {
                ConeKind::Zero => (SupportedConeT::ZeroConeT(con.rows.len()), None),
                ConeKind::Nonnegative => (SupportedConeT::NonnegativeConeT(con.rows.len()), None),
                ConeKind::SecondOrder => (SupportedConeT::SecondOrderConeT(con.rows.len()), None),
                ConeKind::Exponential => (SupportedConeT::ExponentialConeT(), None),
                ConeKind::Psd(d) => (SupportedConeT::PSDTriangleConeT(d), Some(d)),
            };
            cones.push(cone);
            let mut idx = 0;
            let mut diag_next = 0;
            let mut col = 0;
            for expr in &con.rows {
                // Off-diagonal entries of the packed triangle carry a sqrt(2) factor.
                let scale = match psd_n {
                    Some(_) => {
                        let on_diag = idx == diag_next;
                        if on_diag {
                            col += 1;
                            diag_next += col + 1;
                            1.0
                        } else {
                            sqrt2
                        }
                    }
                    None => 1.0,
                };
                idx += 1;
                let row = b.len();
                let mut merged: Vec<(usize, f64)> = expr.terms.clone();
                merged.sort_by_key(|t| t.0);
                let mut last: Option<(usize, f64)> = None;
                for (v, a) in merged {
                    match last {
                        Some((lv, la)) if lv == v => last = Some((v, la + a)),
                        Some((lv, la)) => {
                            cols[lv].push((row, -la * scale));
                            last = Some((v, a));
                        }
                        None => last = Some((v, a)),
                    }
                }
                if let Some((lv, la)) = last {
                    cols[lv].push((row, -la * scale));
                }
                b.push(expr.constant * scale);
            }
        }
        let m = b.len();
        let mut colptr = Vec::with_capacity(n + 1);
        let mut rowval = Vec::new();
        let mut nzval = Vec::new();
        colptr.push(0);
        for c in &cols {
            for &(r, v) in c {
                if v != 0.0 {
                    rowval.push(r);
                    nzval.push(v);
                }
            }
            colptr.push(rowval.len());
        }
        let a = CscMatrix::new(m, n, colptr, rowval, nzval);
        let p = CscMatrix::<f64>::zeros((n, n));
        let failure = |secs: f64| ConicSolution {
            status: SolveStatus::NumericalFailure,
            x: vec![0.0; n],
            objective: f64::NAN,
            iterations: 0,
            solve_seconds: secs,
        };
        let finite = b
            .iter()
            .chain(&a.nzval)
            .chain(&program.objective)
            .all(|x| x.is_finite());
        if !finite {
            return failure(start.elapsed().as_secs_f64());
        }
        let mut iterations = 0;
        // Best result so far: a solved or infeasible status ends the ladder,
        // otherwise the stalled attempt with the smallest duality gap is kept.
        let mut result: Option<(SolveStatus, Vec<f64>, f64)> = None;
        for attempt in &ATTEMPTS {
            let settings = DefaultSettings {
                verbose: self.verbose,
                max_iter: self.max_iter,
                tol_gap_abs: self.tol_gap,
                tol_gap_rel: self.tol_gap,
                tol_feas: self.tol_feas,
                static_regularization_constant: attempt.regularization,
                max_step_fraction: attempt.step,
                chordal_decomposition_enable: attempt.chordal,
                iterative_refinement_reltol: attempt.refine_tol,
                iterative_refinement_max_iter: attempt.refine_iters,
                ..DefaultSettings::default()
            };
            let mut solver =
                match DefaultSolver::new(&p, &program.objective, &a, &b, &cones, settings) {
                    Ok(s) => s,
                    Err(_) => return failure(start.elapsed().as_secs_f64()),
                };
            // Clarabel panics when its LAPACK eigendecomposition fails on a
            // numerically broken PSD iterate; report that as a numerical failure.
            let solved = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| solver.solve()));
            if solved.is_err() {
                continue;
            }
            let sol = &solver.solution;
            iterations += sol.iterations;
            let status = match sol.status {
                SolverStatus::Solved => SolveStatus::Optimal,
                SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
                    SolveStatus::Infeasible
                }
                SolverStatus::AlmostSolved => SolveStatus::Inaccurate,
                SolverStatus::InsufficientProgress | SolverStatus::MaxIterations
                    if sol.r_prim < INACCURATE_RESIDUAL
                        && sol.r_dual < INACCURATE_RESIDUAL
                        && sol.x.iter().all(|v| v.is_finite()) =>
                {
                    SolveStatus::Inaccurate
                }
                _ => SolveStatus::NumericalFailure,
            };
            let gap = (sol.obj_val - sol.obj_val_dual).abs();
            let keep = match (&result, status) {
                (_, SolveStatus::Optimal | SolveStatus::Infeasible) | (None, _) => true,
                (Some((SolveStatus::Inaccurate, _, best)), SolveStatus::Inaccurate) => gap < *best,
                (Some((SolveStatus::Inaccurate, _, _)), _) => false,
                (Some(_), _) => true,
            };
            if keep {
                result = Some((status, sol.x.clone(), gap));
            }
            if matches!(status, SolveStatus::Optimal | SolveStatus::Infeasible) {
                break;
            }
        }
        match result {
            Some((status, x, _)) => ConicSolution {
                status,
                objective: program.objective_value(&x),
                x,
                iterations,
                solve_seconds: start.elapsed().as_secs_f64(),
            },
            None => failure(start.elapsed().as_secs_f64()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn psd_two_by_two() {
        // maximize t subject to [[1, t], [t, 1]] PSD
        let mut p = ConicProgram::new();
        let t = p.new_var();
        p.set_objective(t, -1.0);
        p.add_psd(&[
            vec![LinExpr::constant(1.0), LinExpr::var(t)],
            vec![LinExpr::var(t), LinExpr::constant(1.0)],
        ]);
        let s = ClarabelSolver::default().solve(&p);
        assert_eq!(s.status, SolveStatus::Optimal);
        assert!((s.x[t] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn psd_three_by_three_entry_order() {
        // maximize x12 + x23 with diag fixed to 1: optimum is the all-ones matrix.
        let mut p = ConicProgram::new();
        let v = p.new_vars(3);
        let (a, b, c) = (v.start, v.start + 1, v.start + 2);
        p.set_objective(a, -1.0);
        p.set_objective(c, -1.0);
        let one = LinExpr::constant(1.0);
        p.add_psd(&[
            vec![one.clone(), LinExpr::var(a), LinExpr::var(b)],
            vec![LinExpr::var(a), one.clone(), LinExpr::var(c)],
            vec![LinExpr::var(b), LinExpr::var(c), one],
        ]);
        let s = ClarabelSolver::default().solve(&p);
        assert_eq!(s.status, SolveStatus::Optimal);
        for i in [a, b, c] {
            assert!((s.x[i] - 1.0).abs() < 1e-5, "{:?}", s.x);
        }
    }

    #[test]
    fn exponential_cone_log_epigraph() {
        // maximize t subject to t <= ln(5)
        let mut p = ConicProgram::new();
        let t = p.new_var();
        p.set_objective(t, -1.0);
        p.add_exp(
            LinExpr::var(t),
            LinExpr::constant(1.0),
            LinExpr::constant(5.0),
        );
        let s = ClarabelSolver::default().solve(&p);
        assert_eq!(s.status, SolveStatus::Optimal);
        assert!((s.x[t] - 5f64.ln()).abs() < 1e-7);
    }

    #[test]
    fn second_order_and_squared_norm() {
        // minimize y subject to |(3, 4)|^2 <= y
        let mut p = ConicProgram::new();
        let y = p.new_var();
        p.set_objective(y, 1.0);
        p.add_squared_norm_bound(
            vec![LinExpr::constant(3.0), LinExpr::constant(4.0)],
            LinExpr::var(y),
        );
        let s = ClarabelSolver::default().solve(&p);
        assert!((s.x[y] - 25.0).abs() < 1e-6);
        // minimize t subject to |(x - 1, x + 1)| <= t: optimum x = 0, t = sqrt(2)
        let mut p = ConicProgram::new();
        let x = p.new_var();
        let t = p.new_var();
        p.set_objective(t, 1.0);
        p.add_soc(vec![
            LinExpr::var(t),
            LinExpr::var(x).offset(-1.0),
            LinExpr::var(x).offset(1.0),
        ]);
        let s = ClarabelSolver::default().solve(&p);
        assert!((s.x[t] - 2f64.sqrt()).abs() < 1e-7 && s.x[x].abs() < 1e-6);
    }

    #[test]
    fn infeasible_is_reported() {
        let mut p = ConicProgram::new();
        let x = p.new_var();
        p.add_nonneg(vec![
            LinExpr::var(x).offset(-2.0),
            LinExpr::term(x, -1.0).offset(1.0),
        ]);
        let s = ClarabelSolver::default().solve(&p);
        assert_eq!(s.status, SolveStatus::Infeasible);
    }

    #[test]
    fn duplicate_terms_are_merged() {
        let mut p = ConicProgram::new();
        let x = p.new_var();
        p.set_objective(x, -1.0);
        let mut e = LinExpr::constant(3.0);
        e.add_term(x, -1.0).add_term(x, -2.0);
        p.add_nonneg(vec![e]);
        let s = ClarabelSolver::default().solve(&p);
        assert!((s.x[x] - 1.0).abs() < 1e-7);
    }
}
