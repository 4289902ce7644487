//! Penalty/SCA beam design.
//!
//! The PC-CRLB constraint is moved onto auxiliary values `q = (q^1, q^2, q^3)` that
//! play the role of `J_pp` entries, and the coupling `f^i(w) = q^i` is penalized:
//!
//! ```text
//! minimize  -sum_k R_k(w) + 1/(2 rho) sum_i (f^i(w) - q^i)^2
//! s.t.      power budgets on w;  [[Q - Omega, J_pv], [J_pv^T, J_vv]] >= 0,  tr(Omega^-1) <= eta
//! ```
//!
//! Blocks alternate: the `(Omega, q)` step is a projection of `f(w)` onto the set of
//! information matrices meeting the bound, and the `w` step minimizes a convex
//! surrogate built at the current iterate. The rate is replaced by its
//! minorizer `log2(1 + (2 Re(w0^H H w) - w0^H H w0) / sigma^2)`. For the penalty,
//! each `B^i_m` is split into PSD parts `B+ - B-`; with `e = f - q`,
//! `x+-(w) = sum w^H B+- w` and their tangent planes `L+-`,
//!
//! ```text
//! e_hi = (upsilon - q) + x+(w) - L-(w) >= e,    e_lo = (upsilon - q) + L+(w) - x-(w) <= e,
//! e^2 <= max(max(e_hi, 0)^2, max(-e_lo, 0)^2),
//! ```
//!
//! a convex majorizer that touches `e^2` at the anchor. It is affine in `q`, so the
//! `w` step also moves `q` inside the LMIs; alternating the two blocks alone makes
//! `kappa` decay very slowly once `rho` is small. The outer loop shrinks
//! `rho` by `xi` until `kappa = max_i (f^i - q^i)^2` drops below `kappa_tol`.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::conic::{ConicProgram, ConicSolver, LinExpr, SolveStatus};
use super::{BeamProblem, DesignStatus, SolveDiagnostics};
use crate::error::{Error, Result};
use crate::fim::{blocks_from_f, pc_crlb_position, QuadraticCoefficients};
use crate::linalg::{hermitian_eig, quad_form, CMatrix, C64};
use crate::waveform::BeamformerSet;

/// `f^i(w)` and `kappa = max_i (f^i - q^i)^2`.
pub fn penalty_terms(
    beams: &BeamformerSet,
    q: &[f64; 3],
    coeffs: &QuadraticCoefficients,
) -> ([f64; 3], f64) {
    let f = coeffs.f_values(beams);
    let kappa = (0..3).map(|i| (f[i] - q[i]).powi(2)).fold(0.0, f64::max);
    (f, kappa)
}

/// True penalized objective at `(w, q)` for weight `rho`.
pub fn penalty_objective(
    problem: &BeamProblem,
    beams: &BeamformerSet,
    q: &[f64; 3],
    rho: f64,
) -> f64 {
    let f = problem.coeffs.f_values(beams);
    let pen: f64 = (0..3).map(|i| (f[i] - q[i]).powi(2)).sum();
    -problem.sum_rate(beams) + pen / (2.0 * rho)
}

/// PSD split `B = B+ - B-` with `B+- = R+-^H R+-`.
#[derive(Debug, Clone)]
struct Split {
    plus: CMatrix,
    minus: CMatrix,
    /// Rows of `R+` and `R-`.
    plus_rows: Vec<Vec<C64>>,
    minus_rows: Vec<Vec<C64>>,
}

fn split(b: &CMatrix) -> Split {
    let n = b.nrows();
    let (vals, vecs) = hermitian_eig(b);
    let scale = vals.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let mut plus = CMatrix::zeros(n, n);
    let mut minus = CMatrix::zeros(n, n);
    let mut plus_rows = Vec::new();
    let mut minus_rows = Vec::new();
    for (j, &l) in vals.iter().enumerate() {
        if l.abs() <= 1e-13 * scale {
            continue;
        }
        let v = vecs.column(j).into_owned();
        let row: Vec<C64> = v.iter().map(|z| z.conj() * l.abs().sqrt()).collect();
        let part = &v * v.adjoint() * C64::from(l.abs());
        if l > 0.0 {
            plus += part;
            plus_rows.push(row);
        } else {
            minus += part;
            minus_rows.push(row);
        }
    }
    Split {
        plus,
        minus,
        plus_rows,
        minus_rows,
    }
}

/// Convex surrogate of the penalized objective around an anchor.
#[derive(Debug, Clone)]
pub struct SurrogateModel {
    pub anchor: BeamformerSet,
    pub q: [f64; 3],
    pub rho: f64,
    /// `splits[m][i]`.
    splits: Vec<[Split; 3]>,
    /// `h_k^H w0_{u,k}`.
    anchor_gain: Vec<C64>,
}

/// Build the surrogate model at `anchor`.
pub fn sca_surrogates(
    anchor: &BeamformerSet,
    problem: &BeamProblem,
    q: &[f64; 3],
    rho: f64,
) -> SurrogateModel {
    let splits = (0..problem.num_bs())
        .map(|m| {
            [
                split(&problem.coeffs.weight(m, 0)),
                split(&problem.coeffs.weight(m, 1)),
                split(&problem.coeffs.weight(m, 2)),
            ]
        })
        .collect();
    let anchor_gain = problem
        .channels
        .iter()
        .zip(&anchor.weights[problem.serving])
        .map(|(h, w)| h.dotc(w))
        .collect();
    SurrogateModel {
        anchor: anchor.clone(),
        q: *q,
        rho,
        splits,
        anchor_gain,
    }
}

impl SurrogateModel {
    fn quad(&self, beams: &BeamformerSet, i: usize, plus: bool) -> f64 {
        let mut s = 0.0;
        for (m, sp) in self.splits.iter().enumerate() {
            let b = if plus { &sp[i].plus } else { &sp[i].minus };
            for w in &beams.weights[m] {
                s += quad_form(b, w);
            }
        }
        s
    }

    /// Tangent plane of `x+-` at the anchor, evaluated at `beams`.
    fn tangent(&self, beams: &BeamformerSet, i: usize, plus: bool) -> f64 {
        let mut s = -self.quad(&self.anchor, i, plus);
        for (m, sp) in self.splits.iter().enumerate() {
            let b = if plus { &sp[i].plus } else { &sp[i].minus };
            for (w0, w) in self.anchor.weights[m].iter().zip(&beams.weights[m]) {
                s += 2.0 * (w0.adjoint() * b * w)[(0, 0)].re;
            }
        }
        s
    }

    /// Linearized rate argument `2 Re(w0^H H w) - w0^H H w0` per subcarrier.
    fn rate_arguments(&self, problem: &BeamProblem, beams: &BeamformerSet) -> Vec<f64> {
        problem
            .channels
            .iter()
            .zip(&beams.weights[problem.serving])
            .zip(&self.anchor_gain)
            .map(|((h, w), g0)| 2.0 * (g0.conj() * h.dotc(w)).re - g0.norm_sqr())
            .collect()
    }

    /// Rate minorizer `sum_k log2(1 + l_k(w) / sigma^2)`; `-inf` where the argument is not positive.
    pub fn rate_surrogate(&self, problem: &BeamProblem, beams: &BeamformerSet) -> f64 {
        self.rate_arguments(problem, beams)
            .iter()
            .map(|&l| {
                let a = 1.0 + l / problem.sigma_c2;
                if a > 0.0 {
                    a.log2()
                } else {
                    f64::NEG_INFINITY
                }
            })
            .sum()
    }

    /// Majorizer of each `(f^i(w) - q^i)^2`.
    pub fn penalty_surrogate(&self, problem: &BeamProblem, beams: &BeamformerSet) -> [f64; 3] {
        let mut out = [0.0; 3];
        for (i, o) in out.iter_mut().enumerate() {
            let base = problem.coeffs.upsilon[i] - self.q[i];
            let hi = base + self.quad(beams, i, true) - self.tangent(beams, i, false);
            let lo = base + self.tangent(beams, i, true) - self.quad(beams, i, false);
            *o = hi.max(0.0).powi(2).max((-lo).max(0.0).powi(2));
        }
        out
    }

    /// Surrogate of the penalized objective.
    pub fn objective(&self, problem: &BeamProblem, beams: &BeamformerSet) -> f64 {
        let pen: f64 = self.penalty_surrogate(problem, beams).iter().sum();
        -self.rate_surrogate(problem, beams) + pen / (2.0 * self.rho)
    }

    /// Conic program minimizing the surrogate under the power budgets. With
    /// `joint`, `q` is a variable held to the PC-CRLB LMIs instead of fixed at `self.q`.
    fn program(
        &self,
        problem: &BeamProblem,
        joint: bool,
    ) -> (
        ConicProgram,
        Vec<Vec<Vec<(usize, usize)>>>,
        Option<[usize; 3]>,
    ) {
        let (nb, kk, n) = (problem.num_bs(), problem.subcarriers, problem.n_tx);
        let mut p = ConicProgram::new();
        // vars[m][k][i] = (re, im) of the power-normalized weight.
        let vars: Vec<Vec<Vec<(usize, usize)>>> = (0..nb)
            .map(|_| {
                (0..kk)
                    .map(|_| (0..n).map(|_| (p.new_var(), p.new_var())).collect())
                    .collect()
            })
            .collect();
        let root_p: Vec<f64> = problem.power.iter().map(|p| p.max(0.0).sqrt()).collect();

        for m in 0..nb {
            let mut rows = vec![LinExpr::constant(1.0)];
            for k in 0..kk {
                for &(re, im) in &vars[m][k] {
                    rows.push(LinExpr::var(re));
                    rows.push(LinExpr::var(im));
                }
            }
            p.add_soc(rows);
        }

        // Re(c^T w) and Im(c^T w) for a complex row `c` acting on the scaled weight.
        let dot = |c: &[C64], m: usize, k: usize, scale: f64| -> (LinExpr, LinExpr) {
            let mut re = LinExpr::default();
            let mut im = LinExpr::default();
            for (ci, &(a, b)) in c.iter().zip(&vars[m][k]) {
                let z = ci * (scale * root_p[m]);
                re.add_term(a, z.re).add_term(b, -z.im);
                im.add_term(a, z.im).add_term(b, z.re);
            }
            (re, im)
        };

        let u = problem.serving;
        for k in 0..kk {
            let t = p.new_var();
            p.set_objective(t, -1.0 / std::f64::consts::LN_2);
            // t <= ln(1 + l/sigma^2) written as t - ln c <= ln(1/c + l/(c sigma^2)).
            let g0 = self.anchor_gain[k];
            let gain = problem.power[u] * problem.channels[k].norm_squared() / problem.sigma_c2;
            let c: Vec<C64> = problem.channels[k]
                .iter()
                .map(|h| g0.conj() * h.conj())
                .collect();
            let (re, _) = dot(&c, u, k, 2.0 / (problem.sigma_c2 * gain));
            let arg = re.offset((1.0 - g0.norm_sqr() / problem.sigma_c2) / gain);
            p.add_exp(
                LinExpr::var(t).offset(-gain.ln()),
                LinExpr::constant(1.0),
                arg,
            );
        }

        let s = problem.coeffs.typical_upsilon().max(f64::MIN_POSITIVE);
        let qv = joint.then(|| {
            let qv = [p.new_var(), p.new_var(), p.new_var()];
            add_crlb_constraints(&mut p, problem, &qv, s, q_eta(problem));
            qv
        });
        for i in 0..3 {
            // base = (upsilon - q) / s
            let base = match qv {
                Some(qv) => LinExpr::term(qv[i], -1.0).offset(problem.coeffs.upsilon[i] / s),
                None => LinExpr::constant((problem.coeffs.upsilon[i] - self.q[i]) / s),
            };
            let uv = p.new_var();
            let vv = p.new_var();
            let zv = p.new_var();
            p.set_objective(zv, s * s / (2.0 * self.rho));
            p.add_nonneg(vec![LinExpr::var(uv), LinExpr::var(vv)]);
            for plus in [true, false] {
                // norm side: x_{+|-}(w)/s; tangent side uses the other part.
                let mut norm_rows = Vec::new();
                let mut bound = if plus {
                    LinExpr::var(uv).plus(&base, -1.0)
                } else {
                    LinExpr::var(vv).plus(&base, 1.0)
                };
                let own_scale = 1.0 / s.sqrt();
                for m in 0..nb {
                    let sp = &self.splits[m][i];
                    let (rows, other) = if plus {
                        (&sp.plus_rows, &sp.minus)
                    } else {
                        (&sp.minus_rows, &sp.plus)
                    };
                    for k in 0..kk {
                        for r in rows {
                            let (re, im) = dot(r, m, k, own_scale);
                            norm_rows.push(re);
                            norm_rows.push(im);
                        }
                        let w0 = &self.anchor.weights[m][k];
                        let c: Vec<C64> = (w0.adjoint() * other).iter().copied().collect();
                        let (re, _) = dot(&c, m, k, 2.0 / s);
                        bound.add_expr(&re, 1.0);
                        bound.constant -= quad_form(other, w0) / s;
                    }
                }
                p.add_squared_norm_bound(norm_rows, bound);
            }
            p.add_squared_norm_bound(vec![LinExpr::var(uv)], LinExpr::var(zv));
            p.add_squared_norm_bound(vec![LinExpr::var(vv)], LinExpr::var(zv));
        }
        (p, vars, qv)
    }

    /// Minimize the surrogate over `w`, and over `q` as well when `joint`.
    /// Returns `None` on solver failure.
    fn minimize(
        &self,
        problem: &BeamProblem,
        solver: &dyn ConicSolver,
        joint: bool,
    ) -> Option<(BeamformerSet, [f64; 3])> {
        let (p, vars, qv) = self.program(problem, joint);
        let sol = solver.solve(&p);
        // Stalled points are acceptable: the caller keeps a candidate only if it
        // lowers the exact penalty objective and meets the bound.
        if !matches!(sol.status, SolveStatus::Optimal | SolveStatus::Inaccurate) {
            return None;
        }
        let weights = vars
            .iter()
            .enumerate()
            .map(|(m, row)| {
                let rp = problem.power[m].max(0.0).sqrt();
                row.iter()
                    .map(|w| {
                        crate::linalg::CVector::from_iterator(
                            w.len(),
                            w.iter().map(|&(a, b)| C64::new(sol.x[a], sol.x[b]) * rp),
                        )
                    })
                    .collect()
            })
            .collect();
        let s = problem.coeffs.typical_upsilon().max(f64::MIN_POSITIVE);
        let q = qv.map_or(self.q, |qv| {
            [sol.x[qv[0]] * s, sol.x[qv[1]] * s, sol.x[qv[2]] * s]
        });
        Some((clip_power(problem, BeamformerSet { weights }), q))
    }
}

/// Scale down any BS whose power exceeds its budget (solver tolerance).
fn clip_power(problem: &BeamProblem, beams: BeamformerSet) -> BeamformerSet {
    let mut out = beams;
    for m in 0..out.num_bs() {
        let used = out.power(m);
        if used > problem.power[m] {
            let s = C64::from((problem.power[m] / used).sqrt());
            for w in &mut out.weights[m] {
                *w *= s;
            }
        }
    }
    out
}

/// `tr(C)` when `J_pp = [[q1, q2], [q2, q3]]`.
fn crlb_of(coeffs: &QuadraticCoefficients, q: &[f64; 3]) -> f64 {
    pc_crlb_position(&blocks_from_f(coeffs, *q)).map_or(f64::INFINITY, |(_, t)| t)
}

/// Append the Schur-complement LMIs that force `J_pp = [[q1, q2], [q2, q3]]`
/// (given as `q[i] * qs` for program variables `q`) to meet `tr(C) <= eta`.
fn add_crlb_constraints(
    p: &mut ConicProgram,
    problem: &BeamProblem,
    q: &[usize; 3],
    qs: f64,
    eta: f64,
) {
    let coeffs = &problem.coeffs;
    let sp = problem.information_scale();
    let sv = 0.5 * coeffs.j_vv.trace().abs().max(f64::MIN_POSITIVE);
    let om: Vec<usize> = (0..3).map(|_| p.new_var()).collect();
    let ps: Vec<usize> = (0..3).map(|_| p.new_var()).collect();
    let c = LinExpr::constant;
    let e = |i: usize| LinExpr::term(q[i], qs / sp).plus(&LinExpr::var(om[i]), -1.0);
    let pv = coeffs.j_pv / (sp * sv).sqrt();
    let vv = coeffs.j_vv / sv;
    p.add_psd(&[
        vec![e(0), e(1), c(pv[(0, 0)]), c(pv[(0, 1)])],
        vec![e(1), e(2), c(pv[(1, 0)]), c(pv[(1, 1)])],
        vec![c(pv[(0, 0)]), c(pv[(1, 0)]), c(vv[(0, 0)]), c(vv[(0, 1)])],
        vec![c(pv[(0, 1)]), c(pv[(1, 1)]), c(vv[(1, 0)]), c(vv[(1, 1)])],
    ]);
    let o = |i: usize| LinExpr::var(om[i]);
    let y = |i: usize| LinExpr::var(ps[i]);
    p.add_psd(&[
        vec![o(0), o(1), c(1.0), c(0.0)],
        vec![o(1), o(2), c(0.0), c(1.0)],
        vec![c(1.0), c(0.0), y(0), y(1)],
        vec![c(0.0), c(1.0), y(1), y(2)],
    ]);
    p.add_nonneg(vec![c(sp * eta).plus(&y(0), -1.0).plus(&y(2), -1.0)]);
}

/// Target bound used for `q`: `eta (1 - margin)`.
fn q_eta(problem: &BeamProblem) -> f64 {
    problem.eta * (1.0 - problem.penalty.eta_margin)
}

/// The `(Omega, q)` step: the point `q` closest to `f` whose information matrix
/// meets `tr(C) <= eta (1 - margin)`. Returns `f` itself when `f` already meets `eta`.
fn q_step(problem: &BeamProblem, f: &[f64; 3], solver: &dyn ConicSolver) -> Option<[f64; 3]> {
    if crlb_of(&problem.coeffs, f) <= problem.eta {
        return Some(*f);
    }
    let s = problem.coeffs.typical_upsilon().max(f64::MIN_POSITIVE);
    let mut p = ConicProgram::new();
    let q = [p.new_var(), p.new_var(), p.new_var()];
    let t = p.new_var();
    p.set_objective(t, 1.0);
    let mut rows = vec![LinExpr::var(t)];
    for i in 0..3 {
        rows.push(LinExpr::var(q[i]).offset(-f[i] / s));
    }
    p.add_soc(rows);
    add_crlb_constraints(&mut p, problem, &q, s, q_eta(problem));
    let sol = solver.solve(&p);
    (sol.status == SolveStatus::Optimal)
        .then(|| [sol.x[q[0]] * s, sol.x[q[1]] * s, sol.x[q[2]] * s])
}

/// Per outer iteration: weight, objective after each inner iteration, final `kappa`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OuterRecord {
    pub rho: f64,
    pub objectives: Vec<f64>,
    pub kappa: f64,
}

/// Iteration history of [`solve_penalty_traced`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PenaltyTrace {
    pub outer: Vec<OuterRecord>,
}

/// Run the penalty algorithm from `init`.
pub fn solve_penalty(
    problem: &BeamProblem,
    init: &BeamformerSet,
    solver: &dyn ConicSolver,
) -> Result<(BeamformerSet, SolveDiagnostics)> {
    solve_penalty_traced(problem, init, solver).map(|(b, d, _)| (b, d))
}

/// [`solve_penalty`] that also returns the objective history.
pub fn solve_penalty_traced(
    problem: &BeamProblem,
    init: &BeamformerSet,
    solver: &dyn ConicSolver,
) -> Result<(BeamformerSet, SolveDiagnostics, PenaltyTrace)> {
    let start = Instant::now();
    problem.ensure_feasible()?;
    let params = problem.penalty;
    let mut rho = params
        .rho0
        .unwrap_or_else(|| 1e3 * problem.coeffs.typical_upsilon().max(f64::MIN_POSITIVE));
    let mut w = clip_power(problem, init.clone());
    // q must start inside the feasible set for the monotone q-update guard below.
    let mut q = q_step(problem, &problem.coeffs.f_values(&w), solver)
        .ok_or_else(|| Error::Solver("penalty: initial q-step failed".into()))?;
    let mut trace = PenaltyTrace::default();
    let mut iterations = 0;
    let mut kappa = f64::INFINITY;
    let mut converged = false;
    for outer in 0..params.max_outer {
        let mut objectives = vec![penalty_objective(problem, &w, &q, rho)];
        let mut inner_converged = false;
        for inner in 0..params.max_inner {
            iterations += 1;
            let f = problem.coeffs.f_values(&w);
            let q_new = q_step(problem, &f, solver).ok_or_else(|| {
                Error::Solver(format!(
                    "penalty outer {outer} inner {inner}: q-step failed"
                ))
            })?;
            if penalty_objective(problem, &w, &q_new, rho)
                <= penalty_objective(problem, &w, &q, rho)
            {
                q = q_new;
            }
            let model = sca_surrogates(&w, problem, &q, rho);
            // The joint step can stall when the per-BS information scales differ by
            // many orders of magnitude; the w-only step with q fixed still descends.
            let step = model
                .minimize(problem, solver, true)
                .or_else(|| model.minimize(problem, solver, false));
            let (cand, q_cand) = step.ok_or_else(|| {
                Error::Solver(format!(
                    "penalty outer {outer} inner {inner}: w-step failed"
                ))
            })?;
            if crlb_of(&problem.coeffs, &q_cand) <= problem.eta
                && penalty_objective(problem, &cand, &q_cand, rho)
                    <= penalty_objective(problem, &w, &q, rho)
            {
                w = cand;
                q = q_cand;
            }
            let obj = penalty_objective(problem, &w, &q, rho);
            let prev = *objectives.last().expect("nonempty");
            objectives.push(obj);
            if (prev - obj).abs() <= params.inner_tol * prev.abs().max(1.0) {
                inner_converged = true;
                break;
            }
        }
        let f = problem.coeffs.f_values(&w);
        if let Some(q_new) = q_step(problem, &f, solver) {
            if penalty_objective(problem, &w, &q_new, rho)
                <= penalty_objective(problem, &w, &q, rho)
            {
                q = q_new;
            }
        }
        kappa = penalty_terms(&w, &q, &problem.coeffs).1;
        trace.outer.push(OuterRecord {
            rho,
            objectives,
            kappa,
        });
        if inner_converged && kappa < params.kappa_tol {
            converged = true;
            break;
        }
        rho *= params.xi;
    }
    let status = if converged {
        DesignStatus::Optimal
    } else {
        DesignStatus::NonConverged
    };
    let mut diag = SolveDiagnostics::measure(problem, &w, status);
    diag.iterations = iterations;
    diag.kappa = Some(kappa);
    diag.wall_time = start.elapsed();
    Ok((w, diag, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::beamformer::{build_problem, ClarabelSolver};
    use crate::scenario::ScenarioConfig;
    use nalgebra::{Matrix4, Vector4};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn problem() -> BeamProblem {
        let cfg = ScenarioConfig::desk();
        let d = Vector4::new(30.0, 5.0, -20.0, 1.0);
        let m = Matrix4::from_diagonal(&Vector4::new(0.02, 0.02, 0.1, 0.1));
        build_problem(&d, &m, &cfg).unwrap()
    }

    fn perturbed(b: &BeamformerSet, rng: &mut ChaCha8Rng, size: f64) -> BeamformerSet {
        let mut out = b.clone();
        for ws in &mut out.weights {
            for w in ws {
                let n = w.norm().max(1e-3);
                for z in w.iter_mut() {
                    *z += crate::waveform::complex_gaussian(rng, (size * n).powi(2));
                }
            }
        }
        out
    }

    #[test]
    fn kappa_definition() {
        let p = problem();
        let w = p.default_init();
        let f = p.coeffs.f_values(&w);
        assert_eq!(penalty_terms(&w, &f, &p.coeffs).1, 0.0);
        let mut q = f;
        q[1] += 0.1;
        assert!((penalty_terms(&w, &q, &p.coeffs).1 - 0.01).abs() < 1e-9);
    }

    #[test]
    fn split_reconstructs() {
        let p = problem();
        for m in 0..3 {
            for i in 0..3 {
                let b = p.coeffs.weight(m, i);
                let s = split(&b);
                assert!((&s.plus - &s.minus - &b).norm() <= 1e-10 * b.norm());
            }
        }
    }

    #[test]
    fn surrogate_tangent_and_majorizing() {
        let p = problem();
        let anchor = p.default_init();
        let f = p.coeffs.f_values(&anchor);
        let q = [f[0] * 1.3, f[1] - 0.2 * f[0], f[2] * 0.7];
        let rho = 10.0;
        let model = sca_surrogates(&anchor, &p, &q, rho);
        let truth = penalty_objective(&p, &anchor, &q, rho);
        let sur = model.objective(&p, &anchor);
        assert!(
            (truth - sur).abs() <= 1e-9 * truth.abs().max(1.0),
            "{truth} {sur}"
        );
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let w = perturbed(&anchor, &mut rng, 0.3);
            let fw = p.coeffs.f_values(&w);
            let pen = model.penalty_surrogate(&p, &w);
            for i in 0..3 {
                let e2 = (fw[i] - q[i]).powi(2);
                assert!(pen[i] >= e2 - 1e-9 * e2.max(1.0));
            }
            assert!(model.rate_surrogate(&p, &w) <= p.sum_rate(&w) + 1e-9);
        }
    }

    #[test]
    fn zero_anchor_rate_surrogate() {
        let p = problem();
        let z = BeamformerSet::zeros(3, p.subcarriers, p.n_tx);
        let model = sca_surrogates(&z, &p, &[0.0; 3], 1.0);
        assert_eq!(model.rate_surrogate(&p, &p.default_init()), 0.0);
    }

    #[test]
    fn program_matches_surrogate_at_optimum() {
        let p = problem();
        let anchor = p.default_init();
        let f = p.coeffs.f_values(&anchor);
        let q = [f[0] * 1.1, f[1], f[2] * 1.1];
        let rho = 1e3 * p.coeffs.typical_upsilon();
        let model = sca_surrogates(&anchor, &p, &q, rho);
        let (w, _) = model
            .minimize(&p, &ClarabelSolver::default(), false)
            .unwrap();
        assert!(model.objective(&p, &w) <= model.objective(&p, &anchor) + 1e-7);
        assert!(w.within_budget(&p.power, 1e-8));
    }

    #[test]
    fn q_step_projects_onto_bound() {
        let p = problem();
        let f = p
            .coeffs
            .f_values(&BeamformerSet::zeros(3, p.subcarriers, p.n_tx));
        let mut tight = p.clone();
        tight.eta = 0.5 * crlb_of(&p.coeffs, &f);
        let q = q_step(&tight, &f, &ClarabelSolver::default()).unwrap();
        let t = crlb_of(&p.coeffs, &q);
        let target = tight.eta * (1.0 - tight.penalty.eta_margin);
        assert!((t - target).abs() < 1e-6 * target, "{t} {target}");
        let loose_q = q_step(&p, &f, &ClarabelSolver::default());
        if crlb_of(&p.coeffs, &f) <= p.eta {
            assert_eq!(loose_q.unwrap(), f);
        }
    }

    #[test]
    fn converges_and_matches_sdr() {
        let mut p = problem();
        p.eta = 1.02 * p.ensure_feasible().unwrap();
        let solver = ClarabelSolver::default();
        let (w, diag, trace) = solve_penalty_traced(&p, &p.default_init(), &solver).unwrap();
        for rec in &trace.outer {
            for pair in rec.objectives.windows(2) {
                assert!(
                    pair[1] <= pair[0] + 1e-12 * pair[0].abs().max(1.0),
                    "{:?}",
                    rec.objectives
                );
            }
        }
        assert_eq!(
            diag.status,
            crate::beamformer::DesignStatus::Optimal,
            "{diag:?} {:?}",
            trace
                .outer
                .iter()
                .map(|r| (r.rho, r.kappa, r.objectives.len()))
                .collect::<Vec<_>>()
        );
        assert!(diag.kappa.unwrap() < 1e-6);
        assert!(p.check(&w).ok(), "{:?}", p.check(&w));
        let (_, sdr) = crate::beamformer::solve_sdr(&p, &solver).unwrap();
        assert!(
            diag.sum_rate <= sdr.sum_rate + 1e-4,
            "{} {}",
            diag.sum_rate,
            sdr.sum_rate
        );
    }
}
