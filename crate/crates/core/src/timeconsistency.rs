//! Backward Euler for scalar ODEs `u' = f(t, u)` seen as an inconsistent
//! dG(0) Galerkin method, with a goal-oriented estimate for `J(u) = u(T)`
//! that tracks the consistency error `S_h = A_h - A`.
//!
//! The dG(0) form on a piecewise smooth `u`, tested with `z`, is
//! `A(u)(z) = (u(t0) - u0) z(t0) + sum_n [u]_{n-1} z(t_{n-1}^+) + int (u' - f(t,u)) z dt`,
//! where `[u]_{n-1}` is the jump at `t_{n-1}` and `u(t0^-) = u(t0)`. Backward
//! Euler replaces `int_{I_n} f(t, u^n) z^n dt` by the box rule `dt f(t_n, u^n) z^n`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fespace::quadrature::gauss_1d;

pub type Rhs = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub struct OdeProblem {
    pub f: Rhs,
    /// `df/du`
    pub f_u: Rhs,
    pub u0: f64,
    pub t_end: f64,
    pub n_steps: usize,
}

impl std::fmt::Debug for OdeProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OdeProblem")
            .field("u0", &self.u0)
            .field("t_end", &self.t_end)
            .field("n_steps", &self.n_steps)
            .finish_non_exhaustive()
    }
}

/// The bundled model equations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OdeModel {
    /// `u' = rate * u`
    Decay { rate: f64 },
    /// `u' = -(1 + t) u`
    TimeDependentDecay,
}

impl OdeModel {
    pub fn problem(&self, u0: f64, t_end: f64, n_steps: usize) -> OdeProblem {
        let (f, f_u): (Rhs, Rhs) = match *self {
            OdeModel::Decay { rate } => (Arc::new(move |_, u| rate * u), Arc::new(move |_, _| rate)),
            OdeModel::TimeDependentDecay => (Arc::new(|t, u| -(1.0 + t) * u), Arc::new(|t, _| -(1.0 + t))),
        };
        OdeProblem { f, f_u, u0, t_end, n_steps }
    }

    pub fn exact(&self, u0: f64, t: f64) -> f64 {
        match *self {
            OdeModel::Decay { rate } => u0 * (rate * t).exp(),
            OdeModel::TimeDependentDecay => u0 * (-(t + 0.5 * t * t)).exp(),
        }
    }
}

impl OdeProblem {
    fn validate(&self) -> Result<()> {
        if self.n_steps == 0 || !(self.t_end > 0.0) {
            return Err(Error::Config(format!("need n_steps >= 1 and T > 0, got {} and {}", self.n_steps, self.t_end)));
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        self.t_end / self.n_steps as f64
    }

    pub fn time(&self, n: usize) -> f64 {
        self.t_end * n as f64 / self.n_steps as f64
    }

    fn refined(&self) -> OdeProblem {
        OdeProblem { n_steps: 2 * self.n_steps, ..self.clone() }
    }
}

/// A function that is linear on every interval of its grid, possibly
/// discontinuous at the knots, with a separate value at `t0`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeFunction {
    pub knots: Vec<f64>,
    pub initial: f64,
    /// `(value at t_{k-1}^+, value at t_k^-)` per interval.
    pub pieces: Vec<(f64, f64)>,
}

impl TimeFunction {
    /// Piecewise constant: `values[0]` at `t0`, `values[n]` on `(t_{n-1}, t_n]`.
    pub fn dg0(knots: Vec<f64>, values: &[f64]) -> Self {
        assert_eq!(knots.len(), values.len());
        let pieces = values[1..].iter().map(|&v| (v, v)).collect();
        TimeFunction { knots, initial: values[0], pieces }
    }

    /// Continuous and piecewise linear through `(knots[k], values[k])`.
    pub fn linear(knots: Vec<f64>, values: &[f64]) -> Self {
        assert_eq!(knots.len(), values.len());
        let pieces = values.windows(2).map(|w| (w[0], w[1])).collect();
        TimeFunction { knots, initial: values[0], pieces }
    }

    fn interval(&self, t: f64, right: bool) -> usize {
        let n = self.pieces.len();
        let k = self.knots.partition_point(|&x| if right { x <= t } else { x < t });
        k.clamp(1, n)
    }

    fn on(&self, k: usize, t: f64) -> f64 {
        let (a, b) = self.pieces[k - 1];
        let (t0, t1) = (self.knots[k - 1], self.knots[k]);
        a + (b - a) * (t - t0) / (t1 - t0)
    }

    /// Value at `t^+` (the right limit).
    pub fn right(&self, t: f64) -> f64 {
        self.on(self.interval(t, true), t)
    }

    /// Value at `t^-`; at the first knot this is the initial value.
    pub fn left(&self, t: f64) -> f64 {
        if t <= self.knots[0] {
            return self.initial;
        }
        self.on(self.interval(t, false), t)
    }

    /// Derivative inside the interval containing `t`.
    pub fn slope(&self, t: f64) -> f64 {
        let k = self.interval(t, true);
        let (a, b) = self.pieces[k - 1];
        (b - a) / (self.knots[k] - self.knots[k - 1])
    }

    pub fn sub<'a>(&'a self, other: &'a TimeFunction) -> Difference<'a> {
        Difference { a: self, b: other }
    }
}

/// Lazy difference of two time functions on possibly different grids.
pub struct Difference<'a> {
    a: &'a TimeFunction,
    b: &'a TimeFunction,
}

trait Eval {
    fn initial(&self) -> f64;
    fn right(&self, t: f64) -> f64;
    fn left(&self, t: f64) -> f64;
    fn slope(&self, t: f64) -> f64;
    fn knots(&self) -> Vec<f64>;
}

impl Eval for TimeFunction {
    fn initial(&self) -> f64 {
        self.initial
    }
    fn right(&self, t: f64) -> f64 {
        TimeFunction::right(self, t)
    }
    fn left(&self, t: f64) -> f64 {
        TimeFunction::left(self, t)
    }
    fn slope(&self, t: f64) -> f64 {
        TimeFunction::slope(self, t)
    }
    fn knots(&self) -> Vec<f64> {
        self.knots.clone()
    }
}

impl Eval for Difference<'_> {
    fn initial(&self) -> f64 {
        self.a.initial - self.b.initial
    }
    fn right(&self, t: f64) -> f64 {
        self.a.right(t) - self.b.right(t)
    }
    fn left(&self, t: f64) -> f64 {
        self.a.left(t) - self.b.left(t)
    }
    fn slope(&self, t: f64) -> f64 {
        self.a.slope(t) - self.b.slope(t)
    }
    fn knots(&self) -> Vec<f64> {
        merge(&self.a.knots, &self.b.knots)
    }
}

fn merge(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut k: Vec<f64> = a.iter().chain(b).copied().collect();
    k.sort_by(f64::total_cmp);
    let scale = k.last().map_or(1.0, |x| x.abs().max(1.0));
    k.dedup_by(|x, y| (*x - *y).abs() <= 1e-14 * scale);
    k
}

const GAUSS_POINTS: usize = 4;

/// Piecewise-constant discrete solution: `values[0] = u(t0)`, `values[n]` on `(t_{n-1}, t_n]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DgZeroFunction {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
}

impl DgZeroFunction {
    pub fn at_end(&self) -> f64 {
        *self.values.last().expect("nonempty")
    }

    pub fn as_time_function(&self) -> TimeFunction {
        TimeFunction::dg0(self.times.clone(), &self.values)
    }
}

/// `u^n - dt f(t_n, u^n) = u^{n-1}`, each step solved by scalar Newton to `1e-13`.
pub fn backward_euler(p: &OdeProblem) -> Result<DgZeroFunction> {
    p.validate()?;
    let dt = p.dt();
    let mut values = Vec::with_capacity(p.n_steps + 1);
    values.push(p.u0);
    for n in 1..=p.n_steps {
        let (t, prev) = (p.time(n), values[n - 1]);
        let mut x = prev;
        let mut converged = false;
        for it in 0..50 {
            let g = x - dt * (p.f)(t, x) - prev;
            if g.abs() <= 1e-13 * (1.0 + prev.abs()) {
                converged = true;
                break;
            }
            let dg = 1.0 - dt * (p.f_u)(t, x);
            if dg == 0.0 || !dg.is_finite() {
                return Err(Error::NonConvergence { iterations: it, residual: g.abs() });
            }
            x -= g / dg;
        }
        if !converged {
            let g = x - dt * (p.f)(t, x) - prev;
            return Err(Error::NonConvergence { iterations: 50, residual: g.abs() });
        }
        values.push(x);
    }
    let times = (0..=p.n_steps).map(|n| p.time(n)).collect();
    Ok(DgZeroFunction { times, values })
}

/// Discrete adjoint of the backward Euler form for `J(u) = u(T)`:
/// `z^n (1 - dt f_u(t_n, u^n)) = z^{n+1}` with `z^{N+1} = 1`, and `z^0 = z^1`.
pub fn adjoint(p: &OdeProblem, u: &DgZeroFunction) -> DgZeroFunction {
    let dt = p.dt();
    let n = p.n_steps;
    let mut z = vec![0.0; n + 1];
    let mut next = 1.0;
    for k in (1..=n).rev() {
        z[k] = next / (1.0 - dt * (p.f_u)(p.time(k), u.values[k]));
        next = z[k];
    }
    z[0] = z[1];
    DgZeroFunction { times: u.times.clone(), values: z }
}

fn integrate(knots: &[f64], mut g: impl FnMut(f64) -> f64) -> f64 {
    let (pts, wts) = gauss_1d(GAUSS_POINTS);
    let mut s = 0.0;
    for w in knots.windows(2) {
        let h = w[1] - w[0];
        for (x, c) in pts.iter().zip(&wts) {
            s += c * h * g(w[0] + x * h);
        }
    }
    s
}

fn dg_form(p: &OdeProblem, u: &TimeFunction, z: &dyn Eval) -> f64 {
    let knots = merge(&u.knots, &z.knots());
    let mut s = (u.initial - p.u0) * z.initial();
    for &t in &knots[..knots.len() - 1] {
        let jump = u.right(t) - u.left(t);
        s += jump * z.right(t);
    }
    s + integrate(&knots, |t| (u.slope(t) - (p.f)(t, u.right(t))) * z.right(t))
}

fn dg_derivative(p: &OdeProblem, u: &TimeFunction, v: &dyn Eval, z: &TimeFunction) -> f64 {
    let knots = merge(&merge(&u.knots, &v.knots()), &z.knots);
    let mut s = v.initial() * z.initial;
    for &t in &knots[..knots.len() - 1] {
        s += (v.right(t) - v.left(t)) * z.right(t);
    }
    s + integrate(&knots, |t| (v.slope(t) - (p.f_u)(t, u.right(t)) * v.right(t)) * z.right(t))
}

/// `A(u)(z)` with exact (Gauss) time integration.
pub fn dg_residual(p: &OdeProblem, u: &DgZeroFunction, z: &TimeFunction) -> f64 {
    dg_form(p, &u.as_time_function(), z)
}

/// `A_h(u)(z)` with the box rule, for `z` on the same grid.
pub fn be_residual(p: &OdeProblem, u: &DgZeroFunction, z: &DgZeroFunction) -> f64 {
    let dt = p.dt();
    let mut s = (u.values[0] - p.u0) * z.values[0];
    for n in 1..=p.n_steps {
        s += (u.values[n] - u.values[n - 1] - dt * (p.f)(p.time(n), u.values[n])) * z.values[n];
    }
    s
}

/// Per-interval `S_h(u)(z)` contributions `z^n (int_{I_n} f(t, u^n) dt - dt f(t_n, u^n))`.
pub fn consistency_terms(p: &OdeProblem, u: &DgZeroFunction, z: &DgZeroFunction) -> Vec<f64> {
    let dt = p.dt();
    (1..=p.n_steps)
        .map(|n| {
            let (a, b) = (p.time(n - 1), p.time(n));
            let exact = integrate(&[a, b], |t| (p.f)(t, u.values[n]));
            z.values[n] * (exact - dt * (p.f)(b, u.values[n]))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OdeEstimate {
    pub estimate: f64,
    /// `1/2 (rho(u_h)(z - z_h) + rho*(u_h, z_h)(u - u_h))` with half-step reconstructions.
    pub weighted_residual: f64,
    /// `rho_h(u_h)(z_h) = -A_h(u_h)(z_h)`, zero up to the step tolerance.
    pub iteration: f64,
    /// `S_h(u_h)(z_h)`.
    pub consistency: f64,
    /// `sum_n |S_h|` over the intervals.
    pub consistency_abs: f64,
}

/// Reconstructions from the half-step solutions: the adjoint value `z^m`
/// sits at the left end of its interval and `z(T) = 1`; the primal value
/// `u^m` sits at the right end and `u(t0) = u0`.
fn reconstruct(p: &OdeProblem) -> Result<(TimeFunction, TimeFunction)> {
    let fine = p.refined();
    let uf = backward_euler(&fine)?;
    let zf = adjoint(&fine, &uf);
    let u_rec = TimeFunction::linear(uf.times.clone(), &uf.values);
    let mut zv: Vec<f64> = zf.values[1..].to_vec();
    zv.push(1.0);
    let z_rec = TimeFunction::linear(zf.times.clone(), &zv);
    Ok((u_rec, z_rec))
}

/// Error estimate for `J(u) = u(T)` at the backward Euler solution `u`:
/// `J(u) - J(u_h) ~ weighted_residual + rho_h(u_h)(z_h) + S_h(u_h)(z_h)`,
/// from `rho(u_h)(z_h) = rho_h(u_h)(z_h) + S_h(u_h)(z_h)`.
pub fn estimate_ode_error(p: &OdeProblem, u: &DgZeroFunction) -> Result<OdeEstimate> {
    p.validate()?;
    if u.values.len() != p.n_steps + 1 {
        return Err(Error::SpaceMismatch);
    }
    let z = adjoint(p, u);
    let (u_rec, z_rec) = reconstruct(p)?;
    let ut = u.as_time_function();
    let zt = z.as_time_function();
    // rho(u_h)(z_rec - z_h) = -A(u_h)(z_rec - z_h)
    let primal = -dg_form(p, &ut, &z_rec.sub(&zt));
    // rho*(u_h, z_h)(u_rec - u_h) = J'(v) - A'(u_h)(v, z_h)
    let v = u_rec.sub(&ut);
    let adjoint_part = v.left(p.t_end) - dg_derivative(p, &ut, &v, &zt);
    let weighted_residual = 0.5 * (primal + adjoint_part);
    let iteration = -be_residual(p, u, &z);
    let terms = consistency_terms(p, u, &z);
    let consistency = terms.iter().sum::<f64>();
    let consistency_abs = terms.iter().map(|x| x.abs()).sum();
    Ok(OdeEstimate {
        estimate: weighted_residual + iteration + consistency,
        weighted_residual,
        iteration,
        consistency,
        consistency_abs,
    })
}

/// One row of the step-halving study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OdeRow {
    pub n: usize,
    pub true_error: f64,
    pub parts: OdeEstimate,
    pub i_eff: Option<f64>,
    /// Effectivity without the consistency term.
    pub i_eff_without_consistency: Option<f64>,
}

pub fn study(model: OdeModel, u0: f64, t_end: f64, steps: &[usize]) -> Result<Vec<OdeRow>> {
    steps
        .iter()
        .map(|&n| {
            let p = model.problem(u0, t_end, n);
            let u = backward_euler(&p)?;
            let parts = estimate_ode_error(&p, &u)?;
            let true_error = model.exact(u0, t_end) - u.at_end();
            let ratio = |x: f64| (true_error != 0.0).then(|| x / true_error);
            Ok(OdeRow {
                n,
                true_error,
                parts,
                i_eff: ratio(parts.estimate),
                i_eff_without_consistency: ratio(parts.estimate - parts.consistency),
            })
        })
        .collect()
}

pub fn to_csv(rows: &[OdeRow]) -> String {
    let opt = |v: Option<f64>| v.map_or_else(|| "nan".to_string(), |x| format!("{x:.16e}"));
    let mut s = String::from("N,true_error,estimate,weighted_residual,consistency,I_eff\n");
    for r in rows {
        s.push_str(&format!(
            "{},{:.16e},{:.16e},{:.16e},{:.16e},{}\n",
            r.n,
            r.true_error,
            r.parts.estimate,
            r.parts.weighted_residual,
            r.parts.consistency,
            opt(r.i_eff)
        ));
    }
    s
}
