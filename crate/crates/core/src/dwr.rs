//! Dual-weighted residual estimators and their partition-of-unity localization.
//!
//! With the primal residual `rho(u)(v) = -A(u)(v)` and the adjoint residual
//! `rho*(u, z)(v) = J'(u)(v) - A'(u)(v, z)`, the enriched estimator reads
//! `eta_h = 1/2 rho(u~)(z2 - z~) + 1/2 rho*(u~, z~)(u2 - u~)` and the iteration
//! error `eta_k = rho(u~)(z~)`.

use std::sync::Arc;

use crate::assembly::{apply_form, apply_jacobian_form, LinearFunctional, Problem};
use crate::error::{Error, Result};
use crate::fespace::quadrature::QuadRule;
use crate::fespace::{values_at, FeFunction, PuSpace, ShapeTable};
use crate::solvers::GoalDerivative;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ErrorBreakdown {
    /// `1/2 rho(u~)(z2 - z~)`
    pub eta_p: f64,
    /// `1/2 rho*(u~, z~)(u2 - u~)`
    pub eta_a: f64,
    /// `eta_p + eta_a`, evaluated without the partition of unity.
    pub eta_h: f64,
    pub eta_k: f64,
    pub eta_iu: f64,
    pub eta_iz: f64,
    /// Higher-order remainder, neglected.
    pub remainder: f64,
    pub eta_total: f64,
    /// Nodal indicators over the PU DoFs, hanging contributions folded into their masters.
    pub nodal: Vec<f64>,
    /// Indicators over the active cells (by position).
    pub element: Vec<f64>,
}

impl ErrorBreakdown {
    /// `sum_i |eta_i|`
    pub fn indicator_sum(&self) -> f64 {
        self.nodal.iter().map(|x| x.abs()).sum()
    }
}

fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

/// `rho(u)(v) = -A(u)(v)`
pub fn rho(p: &Problem, u: &FeFunction, v: &FeFunction) -> f64 {
    -apply_form(p, u, v)
}

/// `rho*(u, z)(v) = J'(u)(v) - A'(u)(v, z)`
pub fn rho_star(p: &Problem, u: &FeFunction, z: &FeFunction, jprime: &LinearFunctional, v: &FeFunction) -> f64 {
    jprime.apply(v) - apply_jacobian_form(p, u, v, z)
}

/// Primal and adjoint residuals tested with `(u2 - u~) chi_i`, `(z2 - z~) chi_i`
/// for every unconstrained-basis PU function `chi_i`, plus the direct sums.
struct Localized {
    primal: Vec<f64>,
    adjoint: Vec<f64>,
    primal_direct: f64,
    adjoint_direct: f64,
}

#[allow(clippy::too_many_arguments)]
fn localize(
    p: &Problem,
    u: &FeFunction,
    z: &FeFunction,
    u2: &FeFunction,
    z2: &FeFunction,
    jprime: &LinearFunctional,
    pu: &PuSpace,
) -> Localized {
    let ps = &pu.space;
    let kp = ps.degree();
    let deg = [u, z, u2, z2].iter().map(|f| f.space.degree()).max().unwrap();
    let rule = QuadRule::gauss((deg + kp + 2).min(12));
    let tabs: Vec<ShapeTable> = [u, z, u2, z2].iter().map(|f| ShapeTable::new(f.space.degree(), &rule.points)).collect();
    let tp = ShapeTable::new(kp, &rule.points);
    let nl = (kp + 1) * (kp + 1);
    let mut primal = vec![0.0; ps.n_dofs()];
    let mut adjoint = vec![0.0; ps.n_dofs()];
    let (mut primal_direct, mut adjoint_direct) = (0.0, 0.0);
    let mut lr = vec![0.0; nl];
    let mut la = vec![0.0; nl];
    for pos in 0..ps.n_cells() {
        let (o, h) = ps.cell_box(pos);
        let area = h[0] * h[1];
        let (_, gu) = values_at(u, pos, &tabs[0]);
        let (_, gz) = values_at(z, pos, &tabs[1]);
        let (vu2, gu2) = values_at(u2, pos, &tabs[2]);
        let (vz2, gz2) = values_at(z2, pos, &tabs[3]);
        let (vu, _) = values_at(u, pos, &tabs[0]);
        let (vz, _) = values_at(z, pos, &tabs[1]);
        lr.iter_mut().for_each(|x| *x = 0.0);
        la.iter_mut().for_each(|x| *x = 0.0);
        for q in 0..rule.len() {
            let wq = rule.weights[q] * area;
            let g = gu[q];
            let s = dot(g, g).sqrt();
            let (nu, c) = (p.nu(s), p.dnu_over_s(s));
            let xq = [o[0] + rule.points[q][0] * h[0], o[1] + rule.points[q][1] * h[1]];
            let f = p.source_at(xq);
            let ez = vz2[q] - vz[q];
            let gez = [gz2[q][0] - gz[q][0], gz2[q][1] - gz[q][1]];
            let eu = vu2[q] - vu[q];
            let geu = [gu2[q][0] - gu[q][0], gu2[q][1] - gu[q][1]];
            let gzq = gz[q];
            let ggz = dot(g, gzq);
            primal_direct += wq * (f * ez - nu * dot(g, gez));
            adjoint_direct -= wq * (nu * dot(geu, gzq) + c * dot(g, geu) * ggz);
            for a in 0..nl {
                let chi = tp.vals[q][a];
                let gr = tp.grads[q][a];
                let gchi = [gr[0] / h[0], gr[1] / h[1]];
                let gw = [gez[0] * chi + ez * gchi[0], gez[1] * chi + ez * gchi[1]];
                lr[a] += wq * (f * ez * chi - nu * dot(g, gw));
                let gv = [geu[0] * chi + eu * gchi[0], geu[1] * chi + eu * gchi[1]];
                la[a] -= wq * (nu * dot(gv, gzq) + c * dot(g, gv) * ggz);
            }
        }
        for (a, &d) in ps.cell_dofs(pos).iter().enumerate() {
            primal[d] += lr[a];
            adjoint[d] += la[a];
        }
    }
    for smp in &jprime.samples {
        let (v2, g2) = u2.eval_cell(smp.pos, smp.xi);
        let (v1, g1) = u.eval_cell(smp.pos, smp.xi);
        let eu = v2 - v1;
        let geu = [g2[0] - g1[0], g2[1] - g1[1]];
        adjoint_direct += smp.a * eu + dot(smp.b, geu);
        let (cv, cg) = ps.shape_at(smp.pos, smp.xi);
        for (a, &d) in ps.cell_dofs(smp.pos).iter().enumerate() {
            let gv = [geu[0] * cv[a] + eu * cg[a][0], geu[1] * cv[a] + eu * cg[a][1]];
            adjoint[d] += smp.a * eu * cv[a] + dot(smp.b, gv);
        }
    }
    Localized { primal, adjoint, primal_direct, adjoint_direct }
}

/// Adds the contribution of every hanging PU node to its masters with the
/// constraint weights (one half each for `Q_1`) and zeroes the hanging entry.
pub fn fold_hanging(pu: &PuSpace, raw: &[f64]) -> Vec<f64> {
    let s = &pu.space;
    let mut out = raw.to_vec();
    for d in 0..s.n_dofs() {
        if let Some(m) = s.constraint(d) {
            for &(j, w) in m {
                out[j] += w * raw[d];
            }
            out[d] = 0.0;
        }
    }
    out
}

/// Splits `|nodal_i|` equally among the active cells having PU node `i` as a
/// local node. Hanging entries must already be folded.
pub fn localize_to_elements(nodal: &[f64], pu: &PuSpace) -> Vec<f64> {
    let s = &pu.space;
    let mut count = vec![0usize; s.n_dofs()];
    for pos in 0..s.n_cells() {
        for &d in s.cell_dofs(pos) {
            count[d] += 1;
        }
    }
    let mut out = vec![0.0; s.n_cells()];
    for pos in 0..s.n_cells() {
        for &d in s.cell_dofs(pos) {
            if s.constraint(d).is_none() {
                out[pos] += nodal[d].abs() / count[d] as f64;
            }
        }
    }
    out
}

fn check_mesh(fs: &[&FeFunction], pu: &PuSpace) -> Result<()> {
    if fs.iter().all(|f| Arc::ptr_eq(f.space.mesh(), pu.space.mesh())) {
        Ok(())
    } else {
        Err(Error::SpaceMismatch)
    }
}

fn breakdown(p: &Problem, u: &FeFunction, z: &FeFunction, u2: &FeFunction, z2: &FeFunction, jprime: &LinearFunctional, pu: &PuSpace) -> ErrorBreakdown {
    let loc = localize(p, u, z, u2, z2, jprime, pu);
    let raw: Vec<f64> = loc.primal.iter().zip(&loc.adjoint).map(|(a, b)| 0.5 * (a + b)).collect();
    let nodal = fold_hanging(pu, &raw);
    let element = localize_to_elements(&nodal, pu);
    let eta_p = 0.5 * loc.primal_direct;
    let eta_a = 0.5 * loc.adjoint_direct;
    ErrorBreakdown {
        eta_p,
        eta_a,
        eta_h: eta_p + eta_a,
        nodal,
        element,
        ..Default::default()
    }
}

/// Enriched-space estimator. `eta_k` is the iteration error from the Newton
/// update; when absent it is evaluated directly as `rho(u~)(z~)`.
#[allow(clippy::too_many_arguments)]
pub fn estimate_enriched(
    p: &Problem,
    goal: GoalDerivative<'_>,
    low: (&FeFunction, &FeFunction),
    high: (&FeFunction, &FeFunction),
    pu: &PuSpace,
    eta_k: Option<f64>,
) -> Result<ErrorBreakdown> {
    let (u, z) = low;
    let (u2, z2) = high;
    check_mesh(&[u, z, u2, z2], pu)?;
    let jprime = goal(u)?;
    let mut b = breakdown(p, u, z, u2, z2, &jprime, pu);
    b.eta_k = eta_k.unwrap_or_else(|| rho(p, u, z));
    b.eta_total = b.eta_h + b.eta_k;
    Ok(b)
}

/// Interpolation estimator: the enriched weights are replaced by the patch
/// interpolants `I_u u~`, `I_z z~`, and the two interpolation parts are added.
#[allow(clippy::too_many_arguments)]
pub fn estimate_interpolation(
    p: &Problem,
    goal: GoalDerivative<'_>,
    low: (&FeFunction, &FeFunction),
    interp: (&FeFunction, &FeFunction),
    pu: &PuSpace,
    eta_k: Option<f64>,
) -> Result<ErrorBreakdown> {
    let (u, z) = low;
    let (iu, iz) = interp;
    check_mesh(&[u, z, iu, iz], pu)?;
    let jprime = goal(u)?;
    let mut b = breakdown(p, u, z, iu, iz, &jprime, pu);
    b.eta_k = eta_k.unwrap_or_else(|| rho(p, u, z));
    // -rho(I_u u~)((I_z z~ + z~)/2)
    b.eta_iu = -0.5 * (rho(p, iu, iz) + rho(p, iu, z));
    // 1/2 rho*(I_u u~, I_z z~)(I_u u~ - u~)
    let jprime_i = goal(iu)?;
    b.eta_iz = 0.5 * (rho_star(p, iu, iz, &jprime_i, iu) - rho_star(p, iu, iz, &jprime_i, u));
    b.eta_total = b.eta_h + b.eta_k + b.eta_iu + b.eta_iz;
    Ok(b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::{goal_derivative, GoalSpec};
    use crate::fespace::{pu_basis, FeSpace};
    use crate::mesh::{build_grid, Boundary, DomainSpec, Mesh};
    use crate::solvers::{newton_solve, solve_adjoint, StoppingRule};
    use proptest::prelude::*;

    fn mesh_with_hanging() -> Arc<Mesh> {
        let m = build_grid(&DomainSpec::unit_square(2)).unwrap().refine_uniform();
        let first = m.active_cells()[0];
        Arc::new(m.refine(&[first]).unwrap())
    }

    struct Solved {
        u: FeFunction,
        z: FeFunction,
    }

    fn solve_pair(p: &Problem, g: &GoalSpec, s: &Arc<FeSpace>) -> Solved {
        let (u, _) = newton_solve(p, s, &FeFunction::zeros(s), &StoppingRule { atol: 1e-12, ..Default::default() }, None).unwrap();
        let jp = goal_derivative(g, &u).unwrap();
        let z = solve_adjoint(p, s, &u, &jp, Default::default()).unwrap();
        Solved { u, z }
    }

    #[test]
    fn equal_degrees_give_zero() {
        let m = mesh_with_hanging();
        let p = Problem::poisson(-1.0);
        let g = GoalSpec::PointValue { point: [0.5, 0.5] };
        let s = Arc::new(FeSpace::new(m.clone(), 1, &Boundary::ALL).unwrap());
        let a = solve_pair(&p, &g, &s);
        let pu = pu_basis(m, 1).unwrap();
        let gd = |u: &FeFunction| goal_derivative(&g, u);
        let b = estimate_enriched(&p, &gd, (&a.u, &a.z), (&a.u, &a.z), &pu, None).unwrap();
        assert_eq!(b.eta_h, 0.0);
        assert!(b.nodal.iter().all(|x| *x == 0.0));
        assert!(b.eta_k.abs() < 1e-14);
    }

    #[test]
    fn linear_problem_parts_coincide_and_pu_sums() {
        let m = mesh_with_hanging();
        let p = Problem::poisson(-1.0);
        let g = GoalSpec::PointValue { point: [0.5, 0.5] };
        let s1 = Arc::new(FeSpace::new(m.clone(), 1, &Boundary::ALL).unwrap());
        let s2 = Arc::new(FeSpace::new(m.clone(), 2, &Boundary::ALL).unwrap());
        let lo = solve_pair(&p, &g, &s1);
        let hi = solve_pair(&p, &g, &s2);
        let gd = |u: &FeFunction| goal_derivative(&g, u);
        for deg in 1..=3 {
            let pu = pu_basis(m.clone(), deg).unwrap();
            let b = estimate_enriched(&p, &gd, (&lo.u, &lo.z), (&hi.u, &hi.z), &pu, None).unwrap();
            assert!((b.eta_p - b.eta_a).abs() <= 1e-10 * b.eta_p.abs());
            let sum: f64 = b.nodal.iter().sum();
            assert!((sum - b.eta_h).abs() <= 1e-12 * (1.0 + b.eta_h.abs()));
            let esum: f64 = b.element.iter().sum();
            assert!((esum - b.indicator_sum()).abs() <= 1e-14 * b.indicator_sum());
            // for a linear goal on a linear problem the true error is J(u2)-J(u~) up to saturation
            let true_gap = hi.u.evaluate([0.5, 0.5]).unwrap() - lo.u.evaluate([0.5, 0.5]).unwrap();
            assert!((b.eta_h - true_gap).abs() <= 1e-10 * true_gap.abs());
        }
    }

    #[test]
    fn interpolation_parts_vanish_for_enriched_inputs() {
        let m = mesh_with_hanging();
        let p = Problem::nonlinear_arctan(10.0);
        let g = GoalSpec::L2NormSquared;
        let s1 = Arc::new(FeSpace::new(m.clone(), 1, &Boundary::ALL).unwrap());
        let s2 = Arc::new(FeSpace::new(m.clone(), 2, &Boundary::ALL).unwrap());
        let lo = solve_pair(&p, &g, &s1);
        let hi = solve_pair(&p, &g, &s2);
        let pu = pu_basis(m, 1).unwrap();
        let gd = |u: &FeFunction| goal_derivative(&g, u);
        let e = estimate_enriched(&p, &gd, (&lo.u, &lo.z), (&hi.u, &hi.z), &pu, None).unwrap();
        let i = estimate_interpolation(&p, &gd, (&lo.u, &lo.z), (&hi.u, &hi.z), &pu, None).unwrap();
        assert!(i.eta_iu.abs() <= 1e-10 * e.eta_h.abs().max(1.0));
        assert!(i.eta_iz.abs() <= 1e-10 * e.eta_h.abs().max(1.0));
        assert!((i.eta_h - e.eta_h).abs() <= 1e-10 * e.eta_h.abs());
    }

    #[test]
    fn element_distribution_examples() {
        let single = Arc::new(build_grid(&DomainSpec::unit_square(1)).unwrap());
        let pu = pu_basis(single, 1).unwrap();
        let e = localize_to_elements(&[1.0, -2.0, 0.5, 0.25], &pu);
        assert_eq!(e, vec![3.75]);

        let grid = Arc::new(build_grid(&DomainSpec::unit_square(2)).unwrap());
        let pu = pu_basis(grid, 1).unwrap();
        let c = pu.space.dof_coords().iter().position(|q| *q == [0.5, 0.5]).unwrap();
        let mut nodal = vec![0.0; 9];
        nodal[c] = 2.0;
        assert_eq!(localize_to_elements(&nodal, &pu), vec![0.5; 4]);

        let m = Arc::new(build_grid(&DomainSpec::unit_square(2)).unwrap().refine(&[0]).unwrap());
        let (hang, ends) = m.hanging_nodes()[0];
        let pu = pu_basis(m.clone(), 1).unwrap();
        let at = |v: usize| pu.space.dof_coords().iter().position(|q| *q == m.vertices()[v]).unwrap();
        let mut raw = vec![0.0; pu.n_functions()];
        raw[at(hang)] = 1.0;
        let folded = fold_hanging(&pu, &raw);
        assert_eq!(folded[at(ends[0])], 0.5);
        assert_eq!(folded[at(ends[1])], 0.5);
        assert_eq!(folded[at(hang)], 0.0);
        let el = localize_to_elements(&folded, &pu);
        assert!((el.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn pu_identity_for_arbitrary_weights(seed in 0u64..10_000, deg in 1usize..=3) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let m = mesh_with_hanging();
            let s1 = Arc::new(FeSpace::new(m.clone(), 1, &Boundary::ALL).unwrap());
            let s3 = Arc::new(FeSpace::new(m.clone(), 3, &Boundary::ALL).unwrap());
            let mut rand_fn = |s: &Arc<FeSpace>| {
                let mut c: Vec<f64> = (0..s.n_dofs()).map(|_| rng.random_range(-1.0..1.0)).collect();
                s.distribute(&mut c);
                FeFunction::from_coeffs(s, c).unwrap()
            };
            let (u, z, u2, z2) = (rand_fn(&s1), rand_fn(&s1), rand_fn(&s3), rand_fn(&s3));
            let g = GoalSpec::Flux { boundary: Boundary::Left };
            let gd = |u: &FeFunction| goal_derivative(&g, u);
            let pu = pu_basis(m, deg).unwrap();
            for p in [Problem::nonlinear_arctan(10.0), Problem::poisson(1.0)] {
                let b = estimate_enriched(&p, &gd, (&u, &z), (&u2, &z2), &pu, None).unwrap();
                let sum: f64 = b.nodal.iter().sum();
                prop_assert!((sum - b.eta_h).abs() <= 1e-12 * (1.0 + b.eta_h.abs()));
                if p.is_linear() {
                    // against the unlocalized global forms, both exact for polynomial data
                    let jp = gd(&u).unwrap();
                    let direct = 0.5 * (rho(&p, &u, &z2) - rho(&p, &u, &z))
                        + 0.5 * (rho_star(&p, &u, &z, &jp, &u2) - rho_star(&p, &u, &z, &jp, &u));
                    prop_assert!((direct - b.eta_h).abs() <= 1e-11 * (1.0 + direct.abs()));
                }
            }
        }
    }
}
