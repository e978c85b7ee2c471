//! Newton's method with goal-oriented stopping, and linear adjoint solves.

use std::sync::Arc;

use crate::assembly::{assemble_jacobian, assemble_residual, condense_vector, LinearFunctional, Problem};
use crate::error::{Error, Result};
use crate::fespace::{FeFunction, FeSpace};
use crate::sparse::{solve, LinearSolver};

/// Maps an iterate to the goal derivative `J'(u)` used for the iteration error.
pub type GoalDerivative<'a> = &'a dyn Fn(&FeFunction) -> Result<LinearFunctional>;

#[derive(Debug, Clone, PartialEq)]
pub struct StoppingRule {
    /// Stop once the Euclidean norm of the condensed residual is below this.
    pub atol: f64,
    pub max_iters: usize,
    /// Stop once `|eta_k| <= fraction * |target|`, with `target` an estimate of
    /// the discretization error.
    pub balance: Option<(f64, f64)>,
    pub solver: LinearSolver,
    /// Also solve the discrete adjoint at every iterate and record both sides of
    /// the iteration-error identity.
    pub check_identity: bool,
}

impl Default for StoppingRule {
    fn default() -> Self {
        StoppingRule { atol: 1e-10, max_iters: 50, balance: None, solver: LinearSolver::SparseLu, check_identity: false }
    }
}

#[derive(Debug, Clone)]
pub struct NewtonReport {
    /// Number of updates applied to the initial guess.
    pub iterations: usize,
    pub residual_norm: f64,
    pub residual_history: Vec<f64>,
    /// The Newton update at the returned iterate (not applied).
    pub delta: FeFunction,
    /// `J'(u_n)(delta_n)` for every iterate.
    pub eta_k_history: Vec<f64>,
    /// `(J'(u)(delta), -A(u)(z))` per iterate when the identity check is on.
    pub identity: Vec<(f64, f64)>,
    pub converged: bool,
    pub stopped_by_balance: bool,
}

impl NewtonReport {
    pub fn eta_k(&self) -> f64 {
        self.eta_k_history.last().copied().unwrap_or(0.0)
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solves `A(u)(v) = 0` for all test functions of `space`.
pub fn newton_solve(
    p: &Problem,
    space: &Arc<FeSpace>,
    u0: &FeFunction,
    rule: &StoppingRule,
    goal: Option<GoalDerivative<'_>>,
) -> Result<(FeFunction, NewtonReport)> {
    if !Arc::ptr_eq(space, &u0.space) {
        return Err(Error::SpaceMismatch);
    }
    let mut u = u0.clone();
    for d in 0..space.n_dofs() {
        if space.is_dirichlet(d) {
            u.coeffs[d] = 0.0;
        }
    }
    space.distribute(&mut u.coeffs);
    let mut report = NewtonReport {
        iterations: 0,
        residual_norm: f64::INFINITY,
        residual_history: Vec::new(),
        delta: FeFunction::zeros(space),
        eta_k_history: Vec::new(),
        identity: Vec::new(),
        converged: false,
        stopped_by_balance: false,
    };
    let mut r = assemble_residual(p, space, &u)?;
    for it in 0..=rule.max_iters {
        let rn = norm(&r);
        report.residual_norm = rn;
        report.residual_history.push(rn);
        let jac = assemble_jacobian(p, space, &u)?;
        let rhs: Vec<f64> = r.iter().map(|x| -x).collect();
        let mut delta = solve(&jac, &rhs, rule.solver)?;
        space.distribute(&mut delta);
        let delta = FeFunction::from_coeffs(space, delta)?;
        let mut eta_k = 0.0;
        if let Some(gd) = goal {
            let l = gd(&u)?;
            eta_k = l.apply(&delta);
            if rule.check_identity {
                let mut j = l.assemble(space);
                condense_vector(space, &mut j);
                let mut z = solve(&jac, &j, rule.solver)?;
                space.distribute(&mut z);
                report.identity.push((eta_k, -dot(&r, &z)));
            }
        }
        report.eta_k_history.push(eta_k);
        report.delta = delta.clone();
        if rn <= rule.atol {
            report.converged = true;
            break;
        }
        if let Some((frac, target)) = rule.balance {
            if goal.is_some() && it > 0 && eta_k.abs() <= frac * target.abs() {
                report.converged = true;
                report.stopped_by_balance = true;
                break;
            }
        }
        if it == rule.max_iters {
            break;
        }
        // halving damping, only when the full step increases the residual
        let mut step = 1.0;
        let mut trial = u.clone();
        let mut r_new;
        loop {
            trial.coeffs.copy_from_slice(&u.coeffs);
            trial.axpy(step, &delta)?;
            r_new = assemble_residual(p, space, &trial)?;
            if norm(&r_new) <= rn || step < 1e-3 {
                break;
            }
            step *= 0.5;
            log::debug!("Newton step {it}: damping to {step}");
        }
        u = trial;
        r = r_new;
        report.iterations += 1;
    }
    if !report.converged {
        return Err(Error::NonConvergence { iterations: report.iterations, residual: report.residual_norm });
    }
    Ok((u, report))
}

/// Solves `A'(u)(v, z) = l(v)` for all test functions `v` of `space`.
pub fn solve_adjoint(
    p: &Problem,
    space: &Arc<FeSpace>,
    u: &FeFunction,
    rhs: &LinearFunctional,
    solver: LinearSolver,
) -> Result<FeFunction> {
    let jac = assemble_jacobian(p, space, u)?;
    let b = rhs.assemble(space);
    let mut z = solve(&jac, &b, solver)?;
    space.distribute(&mut z);
    FeFunction::from_coeffs(space, z)
}

/// `J'(u)(delta)`, the iteration error of the last Newton step.
pub fn eta_k_via_update(goal_deriv: &LinearFunctional, delta: &FeFunction) -> f64 {
    goal_deriv.apply(delta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{goal_derivative, GoalSpec};
    use crate::mesh::{build_grid, Boundary, DomainSpec};

    fn space(spec: &DomainSpec, k: usize) -> Arc<FeSpace> {
        let m = build_grid(spec).unwrap().refine_uniform();
        Arc::new(FeSpace::new(Arc::new(m), k, &Boundary::ALL).unwrap())
    }

    #[test]
    fn poisson_converges_in_one_iteration() {
        let s = space(&DomainSpec::unit_square(2), 2);
        let p = Problem::poisson(-1.0);
        let (u, rep) = newton_solve(&p, &s, &FeFunction::zeros(&s), &StoppingRule::default(), None).unwrap();
        assert_eq!(rep.iterations, 1);
        assert!(rep.residual_norm <= 1e-10);
        assert!(u.evaluate([0.5, 0.5]).unwrap() < 0.0);
    }

    #[test]
    fn arctan_problem_converges_quadratically() {
        let s = space(&DomainSpec::two_holes(), 1);
        let p = Problem::nonlinear_arctan(10.0);
        let (_, rep) = newton_solve(&p, &s, &FeFunction::zeros(&s), &StoppingRule::default(), None).unwrap();
        assert!(rep.iterations <= 15, "{} iterations", rep.iterations);
        let h = &rep.residual_history;
        for w in h.windows(2) {
            if w[0] < 1e-2 && w[1] > 1e-13 {
                assert!(w[1] / (w[0] * w[0]) < 1e3);
            }
        }
    }

    #[test]
    fn iteration_error_identity_holds_on_every_step() {
        let s = space(&DomainSpec::two_holes(), 1);
        let p = Problem::nonlinear_arctan(10.0);
        let g = GoalSpec::PointValue { point: [0.2, 0.2] };
        let gd = |u: &FeFunction| goal_derivative(&g, u);
        let rule = StoppingRule { check_identity: true, ..Default::default() };
        let (_, rep) = newton_solve(&p, &s, &FeFunction::zeros(&s), &rule, Some(&gd)).unwrap();
        assert!(rep.identity.len() >= 3);
        for (a, b) in &rep.identity {
            assert!((a - b).abs() <= 1e-8 * (1.0 + a.abs()), "{a} vs {b}");
        }
        // converged: the final update is negligible
        assert!(rep.eta_k().abs() <= 1e-10);
    }

    #[test]
    fn balancing_stops_earlier() {
        let s = space(&DomainSpec::two_holes(), 1);
        let p = Problem::nonlinear_arctan(10.0);
        let g = GoalSpec::PointValue { point: [0.2, 0.2] };
        let gd = |u: &FeFunction| goal_derivative(&g, u);
        let tight = StoppingRule { atol: 1e-12, ..Default::default() };
        let (_, full) = newton_solve(&p, &s, &FeFunction::zeros(&s), &tight, Some(&gd)).unwrap();
        let bal = StoppingRule { atol: 1e-12, balance: Some((0.1, 1e-3)), ..Default::default() };
        let (_, early) = newton_solve(&p, &s, &FeFunction::zeros(&s), &bal, Some(&gd)).unwrap();
        assert!(early.stopped_by_balance);
        assert!(early.iterations < full.iterations);
        assert!(early.eta_k().abs() <= 1e-4);
    }

    #[test]
    fn nonconvergence_is_reported() {
        let s = space(&DomainSpec::two_holes(), 1);
        let p = Problem::nonlinear_arctan(10.0);
        let rule = StoppingRule { max_iters: 1, atol: 1e-14, ..Default::default() };
        assert!(matches!(
            newton_solve(&p, &s, &FeFunction::zeros(&s), &rule, None),
            Err(Error::NonConvergence { .. })
        ));
    }
}
