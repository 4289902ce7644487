//! Semidefinite relaxation of the beam design with rank-one recovery.
//!
//! Every `w_{m,k} w_{m,k}^H` is lifted to a Hermitian PSD matrix
//! `W_{m,k} = P_m (X + jY)`, stored as `N^2` real unknowns and constrained through
//! the real embedding `[[X, -Y], [Y, X]] >= 0`. The program is
//!
//! ```text
//! maximize   sum_k t_k
//! subject to (t_k, 1, 1 + Tr(H_k W_{u,k}) / sigma_c^2) in K_exp
//!            [[J_pp(W) - Omega, J_pv], [J_pv^T, J_vv]] >= 0
//!            [[Omega, I], [I, Psi]] >= 0,  tr(Psi) <= eta
//!            sum_k Tr(W_{m,k}) <= P_m,  W_{m,k} >= 0
//! ```
//!
//! with diagonal congruence scalings so that the LMI entries are of order one.
//! The bound is dropped when the prior alone already meets `eta`.
//!
//! A non-serving BS affects the PC-CRLB only through `sum_k Tr(G_m W_{m,k})`,
//! where `G_m` is its position information Gram matrix, and not the rate. With
//! refinement enabled its blocks are replaced by the full budget spread over the
//! subcarriers along the predicted steering vector projected onto the top
//! eigenspace of `G_m`. This maximizes that trace, so the bound can only
//! tighten, and yields rank-one blocks where the solver returns a mixture.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::conic::{ConicProgram, ConicSolver, LinExpr, SolveStatus};
use super::{BeamProblem, DesignStatus, SolveDiagnostics};
use crate::error::{Error, Result};
use crate::linalg::{hermitian_eig, CMatrix, CVector, C64};
use crate::waveform::{complex_gaussian, steer, BeamformerSet};

/// Relative gap below the largest eigenvalue that still counts as the top eigenspace.
const TOP_EIGEN_REL: f64 = 1e-9;

/// Variable layout of one lifted block.
#[derive(Debug, Clone)]
struct Block {
    n: usize,
    /// `x[i][j]` for `i <= j` (symmetric part).
    x: Vec<Vec<usize>>,
    /// `y[i][j]` for `i < j` (antisymmetric part).
    y: Vec<Vec<usize>>,
}

impl Block {
    fn new(p: &mut ConicProgram, n: usize) -> Self {
        let mut x = vec![vec![usize::MAX; n]; n];
        let mut y = vec![vec![usize::MAX; n]; n];
        for j in 0..n {
            for i in 0..=j {
                x[i][j] = p.new_var();
                x[j][i] = x[i][j];
            }
        }
        for j in 0..n {
            for i in 0..j {
                y[i][j] = p.new_var();
            }
        }
        Self { n, x, y }
    }

    fn re(&self, i: usize, j: usize) -> LinExpr {
        LinExpr::var(self.x[i][j])
    }

    fn im(&self, i: usize, j: usize) -> LinExpr {
        match i.cmp(&j) {
            std::cmp::Ordering::Less => LinExpr::var(self.y[i][j]),
            std::cmp::Ordering::Greater => LinExpr::term(self.y[j][i], -1.0),
            std::cmp::Ordering::Equal => LinExpr::default(),
        }
    }

    /// `[[X, -Y], [Y, X]]`.
    fn embedding(&self) -> Vec<Vec<LinExpr>> {
        let n = self.n;
        let mut m = vec![vec![LinExpr::default(); 2 * n]; 2 * n];
        for i in 0..n {
            for j in 0..n {
                m[i][j] = self.re(i, j);
                m[i + n][j + n] = self.re(i, j);
                m[i][j + n] = self.im(i, j).scaled(-1.0);
                m[i + n][j] = self.im(i, j);
            }
        }
        m
    }

    /// `Re Tr(A W)` for Hermitian `A`, scaled by `s`.
    fn trace_with(&self, a: &CMatrix, s: f64) -> LinExpr {
        let mut e = LinExpr::default();
        for i in 0..self.n {
            e.add_term(self.x[i][i], s * a[(i, i)].re);
            for j in i + 1..self.n {
                e.add_term(self.x[i][j], 2.0 * s * a[(i, j)].re);
                e.add_term(self.y[i][j], 2.0 * s * a[(i, j)].im);
            }
        }
        e
    }

    fn trace(&self) -> LinExpr {
        let mut e = LinExpr::default();
        for i in 0..self.n {
            e.add_term(self.x[i][i], 1.0);
        }
        e
    }

    fn value(&self, x: &[f64]) -> CMatrix {
        CMatrix::from_fn(self.n, self.n, |i, j| {
            let re = x[self.x[i][j]];
            let im = match i.cmp(&j) {
                std::cmp::Ordering::Less => x[self.y[i][j]],
                std::cmp::Ordering::Greater => -x[self.y[j][i]],
                std::cmp::Ordering::Equal => 0.0,
            };
            C64::new(re, im)
        })
    }
}

struct Lifted {
    program: ConicProgram,
    blocks: Vec<Vec<Block>>,
    rate_vars: Vec<usize>,
}

/// Build the relaxation. Blocks are normalized by the power budget.
fn lift(problem: &BeamProblem) -> Lifted {
    let mut p = ConicProgram::new();
    let (nb, kk, n) = (problem.num_bs(), problem.subcarriers, problem.n_tx);
    let blocks: Vec<Vec<Block>> = (0..nb)
        .map(|_| (0..kk).map(|_| Block::new(&mut p, n)).collect())
        .collect();
    for row in &blocks {
        for b in row {
            p.add_psd(&b.embedding());
        }
    }
    for (m, row) in blocks.iter().enumerate() {
        if problem.power[m] <= 0.0 {
            for b in row {
                p.add_zero(vec![b.trace()]);
            }
            continue;
        }
        let mut used = LinExpr::constant(1.0);
        for b in row {
            used.add_expr(&b.trace(), -1.0);
        }
        p.add_nonneg(vec![used]);
    }

    let u = problem.serving;
    let pu = problem.power[u];
    let rate_vars: Vec<usize> = (0..kk).map(|_| p.new_var()).collect();
    for k in 0..kk {
        // t <= ln(1 + c X) written as t - ln c <= ln(1/c + X) with X = Tr(H W') / |h|^2.
        let h = problem.rate_matrix(k);
        let hn = problem.channels[k].norm_squared();
        let gain = pu * hn / problem.sigma_c2;
        let arg = blocks[u][k].trace_with(&h, 1.0 / hn).offset(1.0 / gain);
        p.add_exp(
            LinExpr::var(rate_vars[k]).offset(-gain.ln()),
            LinExpr::constant(1.0),
            arg,
        );
    }
    if !problem.crlb_constrained() {
        return Lifted {
            program: p,
            blocks,
            rate_vars,
        };
    }

    // Fisher LMI, congruence-scaled by diag(1/sqrt(sp) I, 1/sqrt(sv) I).
    let coeffs = &problem.coeffs;
    let sp = problem.information_scale();
    let sv = 0.5 * coeffs.j_vv.trace().abs().max(f64::MIN_POSITIVE);
    let mut jpp = [
        LinExpr::constant(coeffs.upsilon[0] / sp),
        LinExpr::constant(coeffs.upsilon[1] / sp),
        LinExpr::constant(coeffs.upsilon[2] / sp),
    ];
    for (m, row) in blocks.iter().enumerate() {
        for (i, e) in jpp.iter_mut().enumerate() {
            let w = coeffs.weight(m, i);
            for b in row {
                e.add_expr(&b.trace_with(&w, problem.power[m] / sp), 1.0);
            }
        }
    }
    let sp = problem.information_scale();
    let omega: Vec<usize> = (0..3).map(|_| p.new_var()).collect();
    let psi: Vec<usize> = (0..3).map(|_| p.new_var()).collect();
    let om = |i: usize| LinExpr::var(omega[i]);
    let pv = coeffs.j_pv / (sp * sv).sqrt();
    let vv = coeffs.j_vv / sv;
    let c = LinExpr::constant;
    let e00 = jpp[0].clone().plus(&om(0), -1.0);
    let e01 = jpp[1].clone().plus(&om(1), -1.0);
    let e11 = jpp[2].clone().plus(&om(2), -1.0);
    p.add_psd(&[
        vec![e00, e01.clone(), c(pv[(0, 0)]), c(pv[(0, 1)])],
        vec![e01, e11, c(pv[(1, 0)]), c(pv[(1, 1)])],
        vec![c(pv[(0, 0)]), c(pv[(1, 0)]), c(vv[(0, 0)]), c(vv[(0, 1)])],
        vec![c(pv[(0, 1)]), c(pv[(1, 1)]), c(vv[(1, 0)]), c(vv[(1, 1)])],
    ]);
    // [[Omega, I], [I, Psi]] with Omega = sp Omega', Psi = Psi' / sp, which
    // leaves an identity coupling and tr(Psi') <= sp eta.
    let ps = |i: usize| LinExpr::var(psi[i]);
    p.add_psd(&[
        vec![om(0), om(1), c(1.0), c(0.0)],
        vec![om(1), om(2), c(0.0), c(1.0)],
        vec![c(1.0), c(0.0), ps(0), ps(1)],
        vec![c(0.0), c(1.0), ps(1), ps(2)],
    ]);
    p.add_nonneg(vec![
        LinExpr::constant(sp * problem.eta).plus(&ps(0).plus(&ps(2), 1.0), -1.0)
    ]);
    Lifted {
        program: p,
        blocks,
        rate_vars,
    }
}

/// Principal eigenpair of one block and its `lambda_2 / lambda_1` ratio.
fn principal(w: &CMatrix) -> (CVector, f64, f64) {
    let (vals, vecs) = hermitian_eig(w);
    let l1 = vals[0].max(0.0);
    let l2 = vals.get(1).copied().unwrap_or(0.0).max(0.0);
    let v = vecs.column(0).into_owned() * C64::from(l1.sqrt());
    (v, l1, if l1 > 0.0 { l2 / l1 } else { 0.0 })
}

/// Solve the relaxation and recover rank-one beams.
///
/// Returns [`Error::Infeasible`] when no power-feasible beams meet `eta`, and
/// [`Error::RankRecoveryFailure`] when neither the principal eigenvectors nor any
/// randomized candidate passes the independent feasibility check.
pub fn solve_sdr(
    problem: &BeamProblem,
    solver: &dyn ConicSolver,
) -> Result<(BeamformerSet, SolveDiagnostics)> {
    let start = Instant::now();
    problem.ensure_feasible()?;
    let mut lifted = lift(problem);
    for &t in &lifted.rate_vars {
        lifted.program.set_objective(t, -1.0);
    }
    let first = solver.solve(&lifted.program);
    let iterations = first.iterations as usize;
    match first.status {
        SolveStatus::Optimal => {}
        SolveStatus::Infeasible => return Err(Error::Infeasible { eta: problem.eta }),
        // Recovered beams are checked independently below.
        SolveStatus::Inaccurate => {}
        SolveStatus::NumericalFailure => {
            return Err(Error::Solver("relaxation: numerical failure".into()))
        }
    }
    let relaxed_nats: f64 = lifted.rate_vars.iter().map(|&t| first.x[t]).sum();
    let x = first.x;
    let nb = problem.num_bs();
    let kk = problem.subcarriers;
    let mut values: Vec<Vec<CMatrix>> = lifted
        .blocks
        .iter()
        .map(|row| row.iter().map(|b| b.value(&x)).collect())
        .collect();
    if problem.sdr.crlb_refinement {
        for (m, row) in values.iter_mut().enumerate() {
            if m == problem.serving {
                for (k, b) in row.iter_mut().enumerate() {
                    *b = serving_rank_one(problem, k, b);
                }
            } else if problem.power[m] > 0.0 {
                let v = top_direction(problem, m);
                let w = &v * v.adjoint() * C64::from(1.0 / kk as f64);
                row.iter_mut().for_each(|b| *b = w.clone());
            }
        }
    }

    // Per-block eigen-analysis on the power-normalized matrices.
    let mut mats = Vec::with_capacity(nb);
    let mut principal_set = BeamformerSet::zeros(nb, kk, problem.n_tx);
    let mut offending = Vec::new();
    let mut rank_ratio: f64 = 0.0;
    for m in 0..nb {
        let mut row = Vec::with_capacity(kk);
        let share = 1.0 / kk as f64;
        for k in 0..kk {
            let w = values[m][k].clone();
            let (v, l1, ratio) = principal(&w);
            // Blocks carrying a negligible share of the budget are numerically zero.
            if l1 > 1e-8 * share {
                rank_ratio = rank_ratio.max(ratio);
                if ratio > problem.sdr.rank_tol {
                    offending.push((m, k));
                }
                principal_set.weights[m][k] = v * C64::from(problem.power[m].sqrt());
            }
            row.push(w);
        }
        mats.push(row);
    }

    let principal_set = problem.fill_power(&principal_set);
    let mut status = DesignStatus::Optimal;
    let beams = if offending.is_empty() && problem.check(&principal_set).ok() {
        principal_set
    } else {
        status = DesignStatus::Randomized;
        randomize(problem, &mats, &offending, principal_set)?
    };
    let mut diag = SolveDiagnostics::measure(problem, &beams, status);
    diag.iterations = iterations;
    diag.rank_ratio = Some(rank_ratio);
    diag.relaxation_rate = Some(relaxed_nats / std::f64::consts::LN_2);
    diag.wall_time = start.elapsed();
    Ok((beams, diag))
}

/// Unit vector in the top eigenspace of the position information Gram matrix of
/// BS `m`, closest to the predicted steering vector.
fn top_direction(problem: &BeamProblem, m: usize) -> CVector {
    let g = problem.coeffs.weight(m, 0) + problem.coeffs.weight(m, 2);
    let (vals, vecs) = hermitian_eig(&g);
    let top = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let a = steer(problem.angles[m], problem.n_tx);
    let mut proj = CVector::zeros(problem.n_tx);
    let mut principal = None;
    for (i, &l) in vals.iter().enumerate() {
        if l >= top - TOP_EIGEN_REL * top.abs().max(f64::MIN_POSITIVE) {
            let u = vecs.column(i);
            proj += u * u.dotc(&a);
            principal.get_or_insert_with(|| u.into_owned());
        }
    }
    let norm = proj.norm();
    if norm > 1e-9 * a.norm() {
        proj / C64::from(norm)
    } else {
        principal.expect("nonempty spectrum")
    }
}

/// Rank-one serving block with the same trace, at least the same rate argument
/// `h^H W h` and at least the same information `Tr(G W)` as `w`.
///
/// Maximizing `v^H G v` over unit `v` with `|h^H v|^2 >= r` is solved by the
/// principal eigenvector of `G + mu h h^H` for the smallest feasible `mu >= 0`,
/// found by bisection. The block `w` is feasible for the same problem, so the
/// result carries at least its information.
fn serving_rank_one(problem: &BeamProblem, k: usize, w: &CMatrix) -> CMatrix {
    let p: f64 = (0..w.nrows()).map(|i| w[(i, i)].re).sum();
    if p <= 0.0 {
        return w.clone();
    }
    let h = &problem.channels[k];
    let hh = h * h.adjoint();
    let u = problem.serving;
    let g = problem.coeffs.weight(u, 0) + problem.coeffs.weight(u, 2);
    let target = (h.adjoint() * w * h)[(0, 0)].re / p;
    let direction = |mu: f64| -> CVector {
        let (_, vecs) = hermitian_eig(&(&g + &hh * C64::from(mu)));
        vecs.column(0).into_owned()
    };
    let reach = |v: &CVector| v.dotc(h).norm_sqr();
    let mut hi = g.norm() / h.norm_squared().max(f64::MIN_POSITIVE);
    let mut v = direction(0.0);
    if reach(&v) < target {
        while reach(&direction(hi)) < target && hi < 1e12 * g.norm().max(1.0) {
            hi *= 4.0;
        }
        let mut lo = 0.0;
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if reach(&direction(mid)) >= target {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        v = direction(hi);
        if reach(&v) < target {
            v = h.normalize();
        }
    }
    &v * v.adjoint() * C64::from(p)
}

/// Gaussian randomization over the offending blocks (all blocks if none are
/// flagged). The principal candidate competes with the random draws.
fn randomize(
    problem: &BeamProblem,
    mats: &[Vec<CMatrix>],
    offending: &[(usize, usize)],
    principal: BeamformerSet,
) -> Result<BeamformerSet> {
    let targets: Vec<(usize, usize)> = if offending.is_empty() {
        (0..problem.num_bs())
            .flat_map(|m| (0..problem.subcarriers).map(move |k| (m, k)))
            .collect()
    } else {
        offending.to_vec()
    };
    // Square roots of the offending blocks.
    let roots: Vec<CMatrix> = targets
        .iter()
        .map(|&(m, k)| {
            let (vals, vecs) = hermitian_eig(&mats[m][k]);
            let d = CMatrix::from_diagonal(&CVector::from_iterator(
                vals.len(),
                vals.iter().map(|&l| C64::from(l.max(0.0).sqrt())),
            ));
            &vecs * d
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(problem.seed);
    let mut best: Option<(f64, BeamformerSet)> = None;
    let consider = |cand: BeamformerSet, best: &mut Option<(f64, BeamformerSet)>| {
        if problem.check(&cand).ok() {
            let r = problem.sum_rate(&cand);
            if best.as_ref().map_or(true, |(b, _)| r > *b) {
                *best = Some((r, cand));
            }
        }
    };
    consider(principal.clone(), &mut best);
    let n = problem.n_tx;
    for _ in 0..problem.sdr.randomization_trials {
        let mut cand = principal.clone();
        for (&(m, k), root) in targets.iter().zip(&roots) {
            let xi = CVector::from_fn(n, |_, _| complex_gaussian(&mut rng, 1.0));
            let w = root * xi;
            let tr: f64 = (0..n).map(|i| mats[m][k][(i, i)].re).sum();
            let norm = w.norm();
            if norm > 0.0 {
                cand.weights[m][k] = w * C64::from((problem.power[m] * tr.max(0.0)).sqrt() / norm);
            }
        }
        consider(problem.fill_power(&cand), &mut best);
    }
    best.map(|(_, b)| b).ok_or(Error::RankRecoveryFailure)
}
