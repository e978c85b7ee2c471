//! Dörfler marking, the adaptive loops for one and several goals, and the
//! quality metrics reported per refinement step.

use std::fmt::Write as _;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::assembly::{goal_derivative, goal_eval, GoalSpec, LinearFunctional, Problem};
use crate::dwr::{estimate_enriched, estimate_interpolation, ErrorBreakdown};
use crate::error::{Error, Result};
use crate::fespace::{interpolate_patch, pu_basis, FeFunction, FeSpace};
use crate::mesh::Mesh;
use crate::multigoal::{default_m, eval_weighting, CombinedGoal, WeightingSpec};
use crate::solvers::{newton_solve, solve_adjoint, NewtonReport, StoppingRule};
use crate::sparse::LinearSolver;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    #[default]
    Enriched,
    Interpolation,
    /// Solve only; no adjoint and no estimate.
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RefinementKind {
    #[default]
    Adaptive,
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoopConfig {
    pub primal_degree: usize,
    /// Degree of `u2`, `z2`. For the interpolation estimator it must be twice the primal degree.
    pub enriched_degree: usize,
    pub pu_degree: usize,
    pub estimator: EstimatorKind,
    pub refinement: RefinementKind,
    pub theta: f64,
    pub tol: f64,
    pub max_dofs: usize,
    pub max_steps: usize,
    /// Uniform refinements applied to the initial mesh before the loop starts.
    pub initial_refinements: usize,
    /// Refine siblings together so patch interpolation stays available.
    pub patch_mode: Option<bool>,
    pub newton_atol: f64,
    pub newton_max_iters: usize,
    /// Stop Newton once `|eta_k| <= fraction * |eta_h|`, with `eta_h` predicted from the previous step.
    pub balance_fraction: Option<f64>,
    /// Solve the discrete adjoint at every Newton iterate to record the iteration-error identity.
    pub check_identity: bool,
    pub linear_solver: LinearSolver,
    /// Allow an enriched degree not above the primal degree.
    pub galerkin_demo: bool,
    /// Multigoal only: keep the weights `m` from the first step.
    pub frozen_m: bool,
}

impl Default for LoopConfig {
    fn default() -> Self {
        LoopConfig {
            primal_degree: 1,
            enriched_degree: 2,
            pu_degree: 1,
            estimator: EstimatorKind::Enriched,
            refinement: RefinementKind::Adaptive,
            theta: 0.5,
            tol: 1e-8,
            max_dofs: 20_000,
            max_steps: 30,
            initial_refinements: 0,
            patch_mode: None,
            newton_atol: 1e-10,
            newton_max_iters: 50,
            balance_fraction: None,
            check_identity: false,
            linear_solver: LinearSolver::SparseLu,
            galerkin_demo: false,
            frozen_m: false,
        }
    }
}

impl LoopConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(1..=4).contains(&self.primal_degree) {
            return bad(format!("primal_degree {} outside 1..=4", self.primal_degree));
        }
        if self.estimator != EstimatorKind::None {
            if !(1..=4).contains(&self.enriched_degree) && self.estimator == EstimatorKind::Enriched {
                return bad(format!("enriched_degree {} outside 1..=4", self.enriched_degree));
            }
            if self.enriched_degree <= self.primal_degree && !self.galerkin_demo {
                return bad("enriched_degree must exceed primal_degree unless galerkin_demo is set".into());
            }
            if self.estimator == EstimatorKind::Interpolation
                && (self.enriched_degree != 2 * self.primal_degree || self.primal_degree > 2)
            {
                return bad("interpolation needs primal_degree 1 or 2 and enriched_degree = 2 * primal_degree".into());
            }
            if !(1..=3).contains(&self.pu_degree) {
                return bad(format!("pu_degree {} outside 1..=3", self.pu_degree));
            }
        }
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            return bad(format!("theta {} outside (0, 1]", self.theta));
        }
        if self.max_steps == 0 {
            return bad("max_steps must be positive".into());
        }
        if let Some(f) = self.balance_fraction {
            if !(f > 0.0) {
                return bad(format!("balance_fraction {f} must be positive"));
            }
        }
        Ok(())
    }

    fn patches(&self) -> bool {
        self.patch_mode.unwrap_or(self.estimator == EstimatorKind::Interpolation)
    }

    fn stopping(&self, balance: Option<(f64, f64)>) -> StoppingRule {
        StoppingRule {
            atol: self.newton_atol,
            max_iters: self.newton_max_iters,
            balance,
            solver: self.linear_solver,
            check_identity: self.check_identity,
        }
    }
}

/// Minimal set of positions, greedy by descending indicator with ties broken
/// by position, whose indicators sum to at least `theta` times the total.
/// Returns an empty set when all indicators vanish.
pub fn doerfler_mark(indicators: &[f64], theta: f64) -> Vec<usize> {
    debug_assert!(indicators.iter().all(|x| *x >= 0.0));
    let total: f64 = indicators.iter().sum();
    if !(total > 0.0) {
        return Vec::new();
    }
    let mut order: Vec<usize> = (0..indicators.len()).collect();
    order.sort_by(|&a, &b| indicators[b].total_cmp(&indicators[a]).then(a.cmp(&b)));
    let goal = theta * total;
    let mut acc = 0.0;
    let mut out = Vec::new();
    for i in order {
        if acc >= goal || indicators[i] == 0.0 {
            break;
        }
        acc += indicators[i];
        out.push(i);
    }
    out
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct MetricsRecord {
    pub step: usize,
    pub dofs: usize,
    pub cells: usize,
    /// Goal value(s) at `u~`.
    pub goal_values: Vec<f64>,
    /// `J(u) - J(u~)` for one goal, or `E(|J(u) - J(u~)|, m)` for several.
    pub exact_error: Option<f64>,
    pub eta_p: f64,
    pub eta_a: f64,
    pub eta_h: f64,
    pub eta_k: f64,
    pub eta_iu: f64,
    pub eta_iz: f64,
    pub eta_total: f64,
    pub indicator_sum: f64,
    pub i_eff: Option<f64>,
    pub i_eff_plus: Option<f64>,
    pub i_eff_p: Option<f64>,
    pub i_eff_a: Option<f64>,
    pub i_ind: Option<f64>,
    /// `J_i(u) - J_i(u~)` per goal.
    pub goal_errors: Vec<Option<f64>>,
    /// `|sum_i eta_i - eta_h|`
    pub pu_defect: f64,
    /// `|sum_K eta_K - sum_i |eta_i||`
    pub element_defect: f64,
    pub newton_iterations: usize,
    /// `(J'(u)(delta), -A(u)(z))` per Newton iterate, when recorded.
    pub newton_identity: Vec<(f64, f64)>,
    /// Set when the interpolation estimator had to fall back to enrichment.
    pub fallback: bool,
}

fn ratio(a: f64, b: Option<f64>) -> Option<f64> {
    match b {
        Some(b) if b != 0.0 && b.is_finite() => Some(a / b),
        _ => None,
    }
}

/// Fills the effectivity and indicator indices of `rec` from its estimator
/// parts and `exact_error`. A zero or unknown error leaves them undefined.
pub fn metrics(rec: &mut MetricsRecord) {
    let e = rec.exact_error;
    rec.i_eff = ratio(rec.eta_h, e);
    rec.i_eff_plus = ratio(rec.eta_total, e);
    rec.i_eff_p = ratio(rec.eta_p, e);
    rec.i_eff_a = ratio(rec.eta_a, e);
    rec.i_ind = ratio(rec.indicator_sum, e.map(f64::abs));
}

fn fill_from(rec: &mut MetricsRecord, b: &ErrorBreakdown) {
    rec.eta_p = b.eta_p;
    rec.eta_a = b.eta_a;
    rec.eta_h = b.eta_h;
    rec.eta_k = b.eta_k;
    rec.eta_iu = b.eta_iu;
    rec.eta_iz = b.eta_iz;
    rec.eta_total = b.eta_total;
    rec.indicator_sum = b.indicator_sum();
    rec.pu_defect = (b.nodal.iter().sum::<f64>() - b.eta_h).abs();
    rec.element_defect = (b.element.iter().sum::<f64>() - rec.indicator_sum).abs();
}

/// Per-step view handed to observers (VTK output, logging).
pub struct StepView<'a> {
    pub record: &'a MetricsRecord,
    pub mesh: &'a Arc<Mesh>,
    pub u: &'a FeFunction,
    pub z: Option<&'a FeFunction>,
    pub element: &'a [f64],
}

pub type Observer<'a> = &'a mut dyn FnMut(&StepView<'_>) -> Result<()>;

/// Outcome of an adaptive run. On a numerical failure the records computed
/// so far are kept alongside the error.
#[derive(Debug)]
pub struct RunOutput {
    pub records: Vec<MetricsRecord>,
    pub failure: Option<Error>,
}

fn warm_start(space: &Arc<FeSpace>, prev: Option<&FeFunction>) -> FeFunction {
    match prev {
        Some(f) if f.space.same_mesh(space) && f.space.degree() <= space.degree() => {
            f.embed(space).unwrap_or_else(|_| FeFunction::zeros(space))
        }
        Some(f) => FeFunction::interpolate(space, |p| f.evaluate(p).unwrap_or(0.0)),
        None => FeFunction::zeros(space),
    }
}

fn initial_mesh(mesh: &Mesh, cfg: &LoopConfig) -> Arc<Mesh> {
    let mut m = mesh.clone();
    for _ in 0..cfg.initial_refinements {
        m = m.refine_uniform();
    }
    Arc::new(m)
}

fn next_mesh(mesh: &Mesh, element: &[f64], space: &FeSpace, cfg: &LoopConfig) -> Result<Option<Mesh>> {
    match cfg.refinement {
        RefinementKind::Uniform => Ok(Some(mesh.refine_uniform())),
        RefinementKind::Adaptive => {
            let marked: Vec<usize> = doerfler_mark(element, cfg.theta).into_iter().map(|p| space.cell_id(p)).collect();
            if marked.is_empty() {
                return Ok(None);
            }
            mesh.refine_with(&marked, cfg.patches()).map(Some)
        }
    }
}

fn dofs_of(mesh: &Arc<Mesh>, p: &Problem, k: usize) -> Result<usize> {
    Ok(FeSpace::new(mesh.clone(), k, &p.dirichlet)?.n_dofs())
}

/// Balancing target for the next Newton solve: the previous `eta_h` scaled
/// down with the expected `O(DoFs^-1)` decay.
fn balance_for(cfg: &LoopConfig, prev: Option<&MetricsRecord>, dofs: usize) -> Option<(f64, f64)> {
    let frac = cfg.balance_fraction?;
    let r = prev?;
    Some((frac, r.eta_h.abs() * r.dofs as f64 / dofs as f64))
}

struct Estimated {
    breakdown: ErrorBreakdown,
    z: FeFunction,
    fallback: bool,
}

/// Solves the adjoints and evaluates the estimator for fixed goal derivative.
#[allow(clippy::too_many_arguments)]
fn estimate_step(
    p: &Problem,
    cfg: &LoopConfig,
    mesh: &Arc<Mesh>,
    u: &FeFunction,
    u2: Option<&FeFunction>,
    jprime: &dyn Fn(&FeFunction) -> Result<LinearFunctional>,
    eta_k: f64,
) -> Result<Estimated> {
    let space = &u.space;
    let z = solve_adjoint(p, space, u, &jprime(u)?, cfg.linear_solver)?;
    let pu = pu_basis(mesh.clone(), cfg.pu_degree)?;
    if cfg.estimator == EstimatorKind::Interpolation && u2.is_none() {
        match (interpolate_patch(u), interpolate_patch(&z)) {
            (Ok(iu), Ok(iz)) => {
                let b = estimate_interpolation(p, jprime, (u, &z), (&iu, &iz), &pu, Some(eta_k))?;
                return Ok(Estimated { breakdown: b, z, fallback: false });
            }
            (Err(Error::PatchStructureMissing), _) | (_, Err(Error::PatchStructureMissing)) => {
                log::warn!("mesh lacks patch structure; using the enriched estimator for this step");
            }
            (Err(e), _) | (_, Err(e)) => return Err(e),
        }
    }
    let owned;
    let u2 = match u2 {
        Some(f) => f,
        None => {
            let s2 = Arc::new(FeSpace::new(mesh.clone(), cfg.enriched_degree, &p.dirichlet)?);
            owned = newton_solve(p, &s2, &warm_start(&s2, Some(u)), &cfg.stopping(None), None)?.0;
            &owned
        }
    };
    let z2 = solve_adjoint(p, &u2.space, u2, &jprime(u2)?, cfg.linear_solver)?;
    let b = estimate_enriched(p, jprime, (u, &z), (u2, &z2), &pu, Some(eta_k))?;
    Ok(Estimated { breakdown: b, z, fallback: cfg.estimator == EstimatorKind::Interpolation })
}

fn record_newton(rec: &mut MetricsRecord, rep: &NewtonReport) {
    rec.newton_iterations = rep.iterations;
    rec.newton_identity = rep.identity.clone();
}

/// The single-goal adaptive loop, with enriched or interpolated weights.
pub fn run_single_goal(
    p: &Problem,
    goal: &GoalSpec,
    mesh: &Mesh,
    cfg: &LoopConfig,
    reference: Option<f64>,
    observer: Option<Observer<'_>>,
) -> Result<RunOutput> {
    cfg.validate()?;
    let mut mesh = initial_mesh(mesh, cfg);
    goal.validate(&FeSpace::new(mesh.clone(), 1, &[])?)?;
    let mut observer = observer;
    let mut records: Vec<MetricsRecord> = Vec::new();
    let mut prev_u: Option<FeFunction> = None;
    let jprime = |v: &FeFunction| goal_derivative(goal, v);
    for step in 0..cfg.max_steps {
        let res = (|| -> Result<Option<Mesh>> {
            let space = Arc::new(FeSpace::new(mesh.clone(), cfg.primal_degree, &p.dirichlet)?);
            let dofs = space.n_dofs();
            let rule = cfg.stopping(balance_for(cfg, records.last(), dofs));
            let (u, rep) = newton_solve(p, &space, &warm_start(&space, prev_u.as_ref()), &rule, Some(&jprime))?;
            let mut rec = MetricsRecord { step, dofs, cells: mesh.n_active(), ..Default::default() };
            record_newton(&mut rec, &rep);
            let j = goal_eval(goal, &u)?;
            rec.goal_values = vec![j];
            rec.exact_error = reference.map(|r| r - j);
            rec.goal_errors = vec![rec.exact_error];
            let eta_k = jprime(&u)?.apply(&rep.delta);
            let (element, z) = if cfg.estimator == EstimatorKind::None {
                rec.eta_k = eta_k;
                rec.eta_total = eta_k;
                (vec![0.0; space.n_cells()], None)
            } else {
                let est = estimate_step(p, cfg, &mesh, &u, None, &jprime, eta_k)?;
                fill_from(&mut rec, &est.breakdown);
                rec.fallback = est.fallback;
                (est.breakdown.element, Some(est.z))
            };
            metrics(&mut rec);
            if cfg.estimator == EstimatorKind::None {
                (rec.i_eff, rec.i_eff_p, rec.i_eff_a, rec.i_ind) = (None, None, None, None);
            }
            log::info!(
                "step {step}: dofs {dofs} J {j:.10e} eta_h {:.3e} err {:?}",
                rec.eta_h,
                rec.exact_error
            );
            if let Some(obs) = observer.as_mut() {
                obs(&StepView { record: &rec, mesh: &mesh, u: &u, z: z.as_ref(), element: &element })?;
            }
            let converged = cfg.estimator != EstimatorKind::None && rec.eta_h.abs() <= 1e-2 * cfg.tol;
            records.push(rec);
            prev_u = Some(u);
            if converged {
                return Ok(None);
            }
            let next = next_mesh(&mesh, &element, &space, cfg)?;
            Ok(next)
        })();
        match res {
            Ok(Some(m)) => {
                let m = Arc::new(m);
                if dofs_of(&m, p, cfg.primal_degree)? > cfg.max_dofs {
                    break;
                }
                mesh = m;
            }
            Ok(None) => break,
            Err(e) if e.is_config() => return Err(e),
            Err(e) => return Ok(RunOutput { records, failure: Some(e) }),
        }
    }
    Ok(RunOutput { records, failure: None })
}

/// Multigoal loop: the enriched primal comes first so that the signs of the
/// combined functional are available when the low-order primal is solved.
#[allow(clippy::too_many_arguments)]
pub fn run_multigoal(
    p: &Problem,
    goals: &[GoalSpec],
    weighting: &WeightingSpec,
    mesh: &Mesh,
    cfg: &LoopConfig,
    references: Option<&[f64]>,
    observer: Option<Observer<'_>>,
) -> Result<RunOutput> {
    cfg.validate()?;
    if cfg.estimator != EstimatorKind::Enriched {
        return Err(Error::Config("the multigoal loop needs the enriched estimator".into()));
    }
    if goals.is_empty() {
        return Err(Error::Config("no goals given".into()));
    }
    if weighting.omega.len() != goals.len() {
        return Err(Error::Config(format!("{} weights for {} goals", weighting.omega.len(), goals.len())));
    }
    if let Some(r) = references {
        if r.len() != goals.len() {
            return Err(Error::Config(format!("{} references for {} goals", r.len(), goals.len())));
        }
    }
    let mut mesh = initial_mesh(mesh, cfg);
    let probe = FeSpace::new(mesh.clone(), 1, &[])?;
    for g in goals {
        g.validate(&probe)?;
    }
    let mut observer = observer;
    let mut records: Vec<MetricsRecord> = Vec::new();
    let mut prev_u: Option<FeFunction> = None;
    let mut frozen: Option<Vec<f64>> = None;
    for step in 0..cfg.max_steps {
        let res = (|| -> Result<Option<Mesh>> {
            let s2 = Arc::new(FeSpace::new(mesh.clone(), cfg.enriched_degree, &p.dirichlet)?);
            let (u2, _) = newton_solve(p, &s2, &warm_start(&s2, prev_u.as_ref()), &cfg.stopping(None), None)?;
            let j2: Vec<f64> = goals.iter().map(|g| goal_eval(g, &u2)).collect::<Result<_>>()?;

            let space = Arc::new(FeSpace::new(mesh.clone(), cfg.primal_degree, &p.dirichlet)?);
            let dofs = space.n_dofs();
            // weights during the Newton phase: J(u2) stands in for J(u~)
            let mut w_newton = weighting.clone();
            if weighting.kind.uses_m() {
                w_newton.m = frozen.clone().unwrap_or_else(|| default_m(&j2));
            }
            let newton_goal = |v: &FeFunction| -> Result<LinearFunctional> {
                let cg = CombinedGoal::new(goals.to_vec(), w_newton.clone(), &u2, v)?;
                let w = cg.weights(v)?;
                cg.weighted_derivative(&w, v)
            };
            let rule = cfg.stopping(balance_for(cfg, records.last(), dofs));
            let (u, rep) = newton_solve(p, &space, &warm_start(&space, prev_u.as_ref()), &rule, Some(&newton_goal))?;

            let values: Vec<f64> = goals.iter().map(|g| goal_eval(g, &u)).collect::<Result<_>>()?;
            let mut w = weighting.clone();
            if weighting.kind.uses_m() {
                w.m = match &frozen {
                    Some(m) => m.clone(),
                    None => default_m(&values),
                };
                if cfg.frozen_m && frozen.is_none() {
                    frozen = Some(w.m.clone());
                }
            }
            let cg = CombinedGoal::new(goals.to_vec(), w.clone(), &u2, &u)?;
            let weights = cg.weights(&u)?;
            let jprime = |v: &FeFunction| cg.weighted_derivative(&weights, v);
            let eta_k = jprime(&u)?.apply(&rep.delta);
            let est = estimate_step(p, cfg, &mesh, &u, Some(&u2), &jprime, eta_k)?;

            let mut rec = MetricsRecord { step, dofs, cells: mesh.n_active(), ..Default::default() };
            record_newton(&mut rec, &rep);
            fill_from(&mut rec, &est.breakdown);
            rec.goal_values = values.clone();
            if let Some(r) = references {
                let errs: Vec<f64> = r.iter().zip(&values).map(|(r, v)| r - v).collect();
                let abs: Vec<f64> = errs.iter().map(|e| e.abs()).collect();
                rec.exact_error = Some(eval_weighting(&w, &abs)?);
                rec.goal_errors = errs.into_iter().map(Some).collect();
            } else {
                rec.goal_errors = vec![None; goals.len()];
            }
            metrics(&mut rec);
            log::info!("step {step}: dofs {dofs} eta_h {:.3e} err {:?}", rec.eta_h, rec.exact_error);
            if let Some(obs) = observer.as_mut() {
                obs(&StepView { record: &rec, mesh: &mesh, u: &u, z: Some(&est.z), element: &est.breakdown.element })?;
            }
            let converged = rec.eta_h.abs() <= 1e-2 * cfg.tol;
            records.push(rec);
            prev_u = Some(u);
            if converged {
                return Ok(None);
            }
            next_mesh(&mesh, &est.breakdown.element, &space, cfg)
        })();
        match res {
            Ok(Some(m)) => {
                let m = Arc::new(m);
                if dofs_of(&m, p, cfg.primal_degree)? > cfg.max_dofs {
                    break;
                }
                mesh = m;
            }
            Ok(None) => break,
            Err(e) if e.is_config() => return Err(e),
            Err(e) => return Ok(RunOutput { records, failure: Some(e) }),
        }
    }
    Ok(RunOutput { records, failure: None })
}

/// Least-squares slope of `log(y)` against `log(x)` over the pairs with positive `y`.
pub fn fit_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = x.iter().zip(y).filter(|(a, b)| **a > 0.0 && **b > 0.0).map(|(a, b)| (a.ln(), b.ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "nan".to_string(), |x| format!("{x:.16e}"))
}

/// CSV with one row per step. Columns: `step,dofs,exact_err,eta_h,eta_k,
/// indicator_sum,I_eff,I_eff_p,I_eff_a,I_ind`, then `err_<label>` per goal.
/// Undefined values are written as `nan`.
pub fn to_csv(records: &[MetricsRecord], labels: &[String]) -> String {
    let mut s = String::from("step,dofs,exact_err,eta_h,eta_k,indicator_sum,I_eff,I_eff_p,I_eff_a,I_ind");
    for l in labels {
        let _ = write!(s, ",err_{l}");
    }
    s.push('\n');
    for r in records {
        let _ = write!(
            s,
            "{},{},{},{:.16e},{:.16e},{:.16e},{},{},{},{}",
            r.step,
            r.dofs,
            opt(r.exact_error),
            r.eta_h,
            r.eta_k,
            r.indicator_sum,
            opt(r.i_eff),
            opt(r.i_eff_p),
            opt(r.i_eff_a),
            opt(r.i_ind)
        );
        for i in 0..labels.len() {
            let _ = write!(s, ",{}", opt(r.goal_errors.get(i).copied().flatten()));
        }
        s.push('\n');
    }
    s
}

/// `printf("%.2e")`: two mantissa decimals, signed exponent of at least two digits.
pub fn e2(v: f64) -> String {
    if !v.is_finite() {
        return format!("{v}");
    }
    let s = format!("{v:.2e}");
    let (mant, exp) = s.split_once('e').expect("exponent");
    let e: i32 = exp.parse().expect("integer exponent");
    format!("{mant}e{}{:02}", if e < 0 { '-' } else { '+' }, e.abs())
}

fn e2o(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), e2)
}

/// Fixed-width table with the columns `Dofs | Exact err | Est err | Est ind | Eff | Ind`.
pub fn to_table(records: &[MetricsRecord], title: &str) -> String {
    let width = 8 + 5 * 12;
    let mut s = String::new();
    let _ = writeln!(s, "{title}");
    let _ = writeln!(s, "{}", "=".repeat(width));
    let _ = writeln!(s, "{:>8}{:>12}{:>12}{:>12}{:>12}{:>12}", "Dofs", "Exact err", "Est err", "Est ind", "Eff", "Ind");
    let _ = writeln!(s, "{}", "-".repeat(width));
    for r in records {
        let _ = writeln!(
            s,
            "{:>8}{:>12}{:>12}{:>12}{:>12}{:>12}",
            r.dofs,
            e2o(r.exact_error),
            e2(r.eta_h),
            e2(r.indicator_sum),
            e2o(r.i_eff),
            e2o(r.i_ind)
        );
    }
    let _ = writeln!(s, "{}", "=".repeat(width));
    s
}
