//! Error-weighting functions and the combined functional for several goals.
//!
//! For goals `J_1..J_N` and an error-weighting function `E(x, m)` the combined
//! functional is `J_E(v) = E(|J(u2) - J(v)|, m)`. Its linearization at `u~`,
//! with the signs approximated from the enriched solution, is the weighted sum
//! `J_c = sum_i w_i J_i` with `w_i = sign_i dE/dx_i`.

use serde::{Deserialize, Serialize};

use crate::assembly::{goal_derivative, goal_eval, GoalSpec, LinearFunctional};
use crate::error::{Error, Result};
use crate::fespace::FeFunction;

/// Floor applied to `|J_i(u~)|` when it is used as a weight.
pub const WEIGHT_FLOOR: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WeightingKind {
    /// `sum w_i x_i / |m_i|`
    RelativeSum,
    /// `sum w_i x_i`
    AbsoluteSum,
    /// `sum w_i x_i^p / |m_i|^p`
    RelativePower { p: f64 },
    /// `sum w_i sqrt(x_i)`
    SqrtSum,
}

impl WeightingKind {
    pub fn uses_m(&self) -> bool {
        matches!(self, WeightingKind::RelativeSum | WeightingKind::RelativePower { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightingSpec {
    pub kind: WeightingKind,
    /// Normalization weights `m`.
    pub m: Vec<f64>,
    /// User weights, all one by default.
    pub omega: Vec<f64>,
}

impl WeightingSpec {
    pub fn new(kind: WeightingKind, m: Vec<f64>) -> Self {
        let omega = vec![1.0; m.len()];
        WeightingSpec { kind, m, omega }
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.m.len() || self.omega.len() != self.m.len() {
            return Err(Error::Config(format!("weighting expects {} components, got {}", self.m.len(), x.len())));
        }
        if let WeightingKind::RelativePower { p } = self.kind {
            if !(p > 1.0 && p.is_finite()) {
                return Err(Error::Config(format!("relative_power needs p > 1, got {p}")));
            }
        }
        if self.kind.uses_m() {
            if let Some(i) = self.m.iter().position(|m| *m == 0.0) {
                return Err(Error::ZeroWeight(i));
            }
        }
        Ok(())
    }
}

/// `E(x, m)` for nonnegative `x`.
pub fn eval_weighting(w: &WeightingSpec, x: &[f64]) -> Result<f64> {
    w.check(x)?;
    let terms = x.iter().zip(&w.m).zip(&w.omega).map(|((&x, &m), &o)| {
        o * match w.kind {
            WeightingKind::RelativeSum => x / m.abs(),
            WeightingKind::AbsoluteSum => x,
            WeightingKind::RelativePower { p } => (x / m.abs()).powf(p),
            WeightingKind::SqrtSum => x.sqrt(),
        }
    });
    Ok(terms.sum())
}

/// `dE/dx_i (x, m)`. The square-root kind is evaluated at `max(x_i, 1e-30)`.
pub fn weighting_gradient(w: &WeightingSpec, x: &[f64]) -> Result<Vec<f64>> {
    w.check(x)?;
    Ok(x.iter()
        .zip(&w.m)
        .zip(&w.omega)
        .map(|((&x, &m), &o)| {
            o * match w.kind {
                WeightingKind::RelativeSum => 1.0 / m.abs(),
                WeightingKind::AbsoluteSum => 1.0,
                WeightingKind::RelativePower { p } => p * x.powf(p - 1.0) / m.abs().powf(p),
                WeightingKind::SqrtSum => 0.5 / x.max(1e-30).sqrt(),
            }
        })
        .collect())
}

/// `sign(J_i(u2) - J_i(u~))`, with ties mapped to `+1`.
pub fn compute_signs(goals: &[GoalSpec], u_enriched: &FeFunction, u_low: &FeFunction) -> Result<Vec<f64>> {
    goals
        .iter()
        .map(|g| {
            let d = goal_eval(g, u_enriched)? - goal_eval(g, u_low)?;
            Ok(if d < 0.0 { -1.0 } else { 1.0 })
        })
        .collect()
}

/// Weights `m_i = max(|J_i(u~)|, floor)`, warning when the floor is hit.
pub fn default_m(values: &[f64]) -> Vec<f64> {
    values
        .iter()
        .enumerate()
        .map(|(i, v)| {
            if v.abs() < WEIGHT_FLOOR {
                log::warn!("goal {i}: |J(u)| = {:e} below {WEIGHT_FLOOR:e}, using the floor as weight", v.abs());
                WEIGHT_FLOOR
            } else {
                v.abs()
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CombinedGoal {
    pub goals: Vec<GoalSpec>,
    pub weighting: WeightingSpec,
    pub signs: Vec<f64>,
    /// `J_i(u2)`
    pub reference: Vec<f64>,
}

impl CombinedGoal {
    /// Evaluates signs and reference values; the enriched primal must be known.
    pub fn new(goals: Vec<GoalSpec>, weighting: WeightingSpec, u_enriched: &FeFunction, u_low: &FeFunction) -> Result<Self> {
        let signs = compute_signs(&goals, u_enriched, u_low)?;
        let reference = goals.iter().map(|g| goal_eval(g, u_enriched)).collect::<Result<_>>()?;
        Ok(CombinedGoal { goals, weighting, signs, reference })
    }

    /// `|J_i(u2) - J_i(v)|`
    pub fn gaps(&self, v: &FeFunction) -> Result<Vec<f64>> {
        self.goals.iter().zip(&self.reference).map(|(g, r)| Ok((r - goal_eval(g, v)?).abs())).collect()
    }

    /// `J_E(v)`
    pub fn value(&self, v: &FeFunction) -> Result<f64> {
        eval_weighting(&self.weighting, &self.gaps(v)?)
    }

    /// `w_i = sign_i dE/dx_i` at `x = |J(u2) - J(u~)|`.
    pub fn weights(&self, u_low: &FeFunction) -> Result<Vec<f64>> {
        let grad = weighting_gradient(&self.weighting, &self.gaps(u_low)?)?;
        Ok(grad.iter().zip(&self.signs).map(|(g, s)| g * s).collect())
    }

    /// `J_c'(v)` for fixed weights.
    pub fn weighted_derivative(&self, weights: &[f64], v: &FeFunction) -> Result<LinearFunctional> {
        let mut out = LinearFunctional::default();
        for (g, w) in self.goals.iter().zip(weights) {
            out.extend(goal_derivative(g, v)?.scaled(*w));
        }
        Ok(out)
    }

    /// `J_c(v)` for fixed weights.
    pub fn weighted_value(&self, weights: &[f64], v: &FeFunction) -> Result<f64> {
        self.goals.iter().zip(weights).map(|(g, w)| Ok(w * goal_eval(g, v)?)).sum()
    }
}

/// Adjoint right-hand side `sum_i sign_i dE/dx_i J_i'(u~)`. This is the negative
/// of the derivative of `J_E` at `u~`, so that the estimate approximates the
/// positive quantity `J_E(u~)`.
pub fn combined_derivative(cg: &CombinedGoal, u: &FeFunction) -> Result<LinearFunctional> {
    let w = cg.weights(u)?;
    cg.weighted_derivative(&w, u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fespace::FeSpace;
    use crate::mesh::{build_grid, Boundary, DomainSpec};
    use proptest::prelude::*;
    use std::sync::Arc;

    fn kinds() -> Vec<WeightingKind> {
        vec![
            WeightingKind::RelativeSum,
            WeightingKind::AbsoluteSum,
            WeightingKind::RelativePower { p: 2.0 },
            WeightingKind::SqrtSum,
        ]
    }

    #[test]
    fn examples() {
        let w = WeightingSpec::new(WeightingKind::RelativeSum, vec![2.0, 4.0]);
        assert_eq!(eval_weighting(&w, &[1.0, 2.0]).unwrap(), 1.0);
        for k in kinds() {
            let w = WeightingSpec::new(k, vec![0.3, -2.0, 5.0]);
            assert_eq!(eval_weighting(&w, &[0.0; 3]).unwrap(), 0.0);
        }
        // errors (1, 1, -2) cancel in a plain sum but not here
        let errs: [f64; 3] = [1.0, 1.0, -2.0];
        let w = WeightingSpec::new(WeightingKind::AbsoluteSum, vec![1.0; 3]);
        assert_eq!(errs.iter().sum::<f64>(), 0.0);
        assert_eq!(eval_weighting(&w, &errs.map(f64::abs)).unwrap(), 4.0);
    }

    #[test]
    fn zero_weight_rejected() {
        let w = WeightingSpec::new(WeightingKind::RelativeSum, vec![1.0, 0.0]);
        assert!(matches!(eval_weighting(&w, &[1.0, 1.0]), Err(Error::ZeroWeight(1))));
        let w = WeightingSpec::new(WeightingKind::AbsoluteSum, vec![1.0, 0.0]);
        assert!(eval_weighting(&w, &[1.0, 1.0]).is_ok());
        let w = WeightingSpec::new(WeightingKind::RelativePower { p: 1.0 }, vec![1.0]);
        assert!(eval_weighting(&w, &[1.0]).is_err());
    }

    #[test]
    fn power_gradient_matches_closed_form_and_fd() {
        let w = WeightingSpec::new(WeightingKind::RelativePower { p: 2.0 }, vec![0.5, -3.0]);
        let x = [0.2, 0.7];
        let g = weighting_gradient(&w, &x).unwrap();
        assert!((g[0] - 2.0 * 0.2 / 0.25).abs() < 1e-14);
        assert!((g[1] - 2.0 * 0.7 / 9.0).abs() < 1e-14);
        for k in kinds() {
            let w = WeightingSpec::new(k, vec![0.5, -3.0]);
            let g = weighting_gradient(&w, &x).unwrap();
            for i in 0..2 {
                let h = 1e-6;
                let (mut a, mut b) = (x, x);
                a[i] += h;
                b[i] -= h;
                let fd = (eval_weighting(&w, &a).unwrap() - eval_weighting(&w, &b).unwrap()) / (2.0 * h);
                assert!((fd - g[i]).abs() <= 1e-6 * g[i].abs(), "{k:?}");
            }
        }
    }

    fn setup() -> (Arc<FeSpace>, FeFunction, FeFunction, Vec<GoalSpec>) {
        let m = Arc::new(build_grid(&DomainSpec::two_holes()).unwrap().refine_uniform());
        let s = Arc::new(FeSpace::new(m, 2, &Boundary::ALL).unwrap());
        let mut u = FeFunction::interpolate(&s, |p| p[0] * (5.0 - p[0]) * p[1] * (3.0 - p[1]) * 0.1);
        let u2 = FeFunction::interpolate(&s, |p| p[0] * (5.0 - p[0]) * p[1] * (3.0 - p[1]) * 0.11 + 0.01 * p[0] * p[1]);
        for d in 0..s.n_dofs() {
            if s.is_dirichlet(d) {
                u.coeffs[d] = 0.0;
            }
        }
        let goals = vec![
            GoalSpec::Flux { boundary: Boundary::Left },
            GoalSpec::PointValue { point: [0.2, 0.2] },
            GoalSpec::PointValue { point: [0.9, 0.1] },
        ];
        (s, u, u2, goals)
    }

    #[test]
    fn signs_and_ties() {
        let (_, u, u2, goals) = setup();
        let s = compute_signs(&goals, &u2, &u).unwrap();
        assert!(s.iter().all(|x| x.abs() == 1.0));
        assert_eq!(compute_signs(&goals, &u, &u).unwrap(), vec![1.0; 3]);
    }

    #[test]
    fn combined_derivative_is_minus_fd_of_combined_functional() {
        let (s, u, u2, goals) = setup();
        for k in kinds() {
            let vals: Vec<f64> = goals.iter().map(|g| goal_eval(g, &u).unwrap()).collect();
            let w = WeightingSpec::new(k, default_m(&vals));
            let cg = CombinedGoal::new(goals.clone(), w, &u2, &u).unwrap();
            let d = combined_derivative(&cg, &u).unwrap();
            let v = FeFunction::interpolate(&s, |p| (p[0] * 0.7).sin() * p[1]);
            let h = 1e-7;
            let mut up = u.clone();
            up.axpy(h, &v).unwrap();
            let mut um = u.clone();
            um.axpy(-h, &v).unwrap();
            let fd = (cg.value(&up).unwrap() - cg.value(&um).unwrap()) / (2.0 * h);
            let an = d.apply(&v);
            assert!((fd + an).abs() <= 1e-6 * an.abs(), "{k:?}: fd {fd} analytic {an}");
        }
    }

    #[test]
    fn relative_sum_equals_weighted_sum_form() {
        let (s, u, u2, goals) = setup();
        let vals: Vec<f64> = goals.iter().map(|g| goal_eval(g, &u).unwrap()).collect();
        let m = default_m(&vals);
        let cg = CombinedGoal::new(goals.clone(), WeightingSpec::new(WeightingKind::RelativeSum, m.clone()), &u2, &u).unwrap();
        let a = combined_derivative(&cg, &u).unwrap().assemble(&s);
        let mut b = vec![0.0; s.n_dofs()];
        for (i, g) in goals.iter().enumerate() {
            let wi = cg.signs[i] / m[i];
            for (x, y) in b.iter_mut().zip(goal_derivative(g, &u).unwrap().assemble(&s)) {
                *x += wi * y;
            }
        }
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() <= 1e-13 * (1.0 + y.abs()));
        }
    }

    proptest! {
        #[test]
        fn monotone_and_no_cancellation(x in proptest::collection::vec(0.0f64..10.0, 3), i in 0usize..3, bump in 1e-3f64..1.0,
                                         m in proptest::collection::vec(0.1f64..5.0, 3)) {
            for k in kinds() {
                let w = WeightingSpec::new(k, m.clone());
                let base = eval_weighting(&w, &x).unwrap();
                let mut y = x.clone();
                y[i] += bump;
                prop_assert!(eval_weighting(&w, &y).unwrap() > base);
                prop_assert!(base >= 0.0);
                let single: Vec<f64> = (0..3).map(|j| {
                    let mut e = vec![0.0; 3];
                    e[j] = x[j];
                    eval_weighting(&w, &e).unwrap()
                }).collect();
                prop_assert!(base + 1e-12 >= single.iter().cloned().fold(0.0, f64::max));
            }
        }
    }
}
