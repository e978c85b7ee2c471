//! Weak forms, Jacobians and goal functionals for the two model problems.
//!
//! `A(u)(v) = (nu(|grad u|) grad u, grad v) - (f, v)`, with `nu = 1` for the
//! Poisson problem and `nu(s) = 2 + atan(s^2)` for the quasilinear problem.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fespace::quadrature::{gauss_1d, QuadRule};
use crate::fespace::{side_nodes, values_at, FeFunction, FeSpace, ShapeTable};
use crate::mesh::{Boundary, Side};
use crate::sparse::CsrMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    Poisson,
    NonlinearArctan,
}

#[derive(Clone)]
pub enum Source {
    Constant(f64),
    Field(Arc<dyn Fn([f64; 2]) -> f64 + Send + Sync>),
}

impl fmt::Debug for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Source::Constant(c) => write!(f, "Constant({c})"),
            Source::Field(_) => write!(f, "Field(..)"),
        }
    }
}

/// A scalar elliptic problem with homogeneous Dirichlet data on `dirichlet`.
#[derive(Debug, Clone)]
pub struct Problem {
    pub kind: ProblemKind,
    pub source: Source,
    pub dirichlet: Vec<Boundary>,
}

impl Problem {
    pub fn poisson(f: f64) -> Self {
        Problem { kind: ProblemKind::Poisson, source: Source::Constant(f), dirichlet: Boundary::ALL.to_vec() }
    }

    pub fn nonlinear_arctan(f: f64) -> Self {
        Problem { kind: ProblemKind::NonlinearArctan, source: Source::Constant(f), dirichlet: Boundary::ALL.to_vec() }
    }

    pub fn is_linear(&self) -> bool {
        self.kind == ProblemKind::Poisson
    }

    pub fn nu(&self, s: f64) -> f64 {
        match self.kind {
            ProblemKind::Poisson => 1.0,
            ProblemKind::NonlinearArctan => 2.0 + (s * s).atan(),
        }
    }

    /// `nu'(s) / s`, finite at `s = 0`.
    pub fn dnu_over_s(&self, s: f64) -> f64 {
        match self.kind {
            ProblemKind::Poisson => 0.0,
            ProblemKind::NonlinearArctan => 2.0 / (1.0 + s.powi(4)),
        }
    }

    pub fn source_at(&self, x: [f64; 2]) -> f64 {
        match &self.source {
            Source::Constant(c) => *c,
            Source::Field(f) => f(x),
        }
    }
}

/// Gauss points per direction used for a degree-`k` space.
pub fn quad_points(k: usize) -> usize {
    k + 2
}

fn physical(o: [f64; 2], h: [f64; 2], xi: [f64; 2]) -> [f64; 2] {
    [o[0] + xi[0] * h[0], o[1] + xi[1] * h[1]]
}

fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

/// Zeroes Dirichlet and constrained entries of a condensed vector.
pub fn condense_vector(space: &FeSpace, v: &mut [f64]) {
    for (d, x) in v.iter_mut().enumerate() {
        if space.is_dirichlet(d) || space.constraint(d).is_some() {
            *x = 0.0;
        }
    }
}

fn scatter(space: &FeSpace, dofs: &[usize], local: &[f64], out: &mut [f64], buf: &mut Vec<(usize, f64)>) {
    for (i, &d) in dofs.iter().enumerate() {
        buf.clear();
        space.expand(d, buf);
        for &(m, w) in buf.iter() {
            out[m] += w * local[i];
        }
    }
}

/// Entry `j` is `A(u)(phi_j)`, condensed: rows of Dirichlet and constrained DoFs are zero.
pub fn assemble_residual(p: &Problem, space: &Arc<FeSpace>, u: &FeFunction) -> Result<Vec<f64>> {
    if !Arc::ptr_eq(space, &u.space) {
        return Err(Error::SpaceMismatch);
    }
    let k = space.degree();
    let rule = QuadRule::gauss(quad_points(k));
    let table = ShapeTable::new(k, &rule.points);
    let mut out = vec![0.0; space.n_dofs()];
    let mut local = vec![0.0; (k + 1) * (k + 1)];
    let mut buf = Vec::new();
    for pos in 0..space.n_cells() {
        let (o, h) = space.cell_box(pos);
        let area = h[0] * h[1];
        let (_, gu) = values_at(u, pos, &table);
        local.iter_mut().for_each(|x| *x = 0.0);
        for q in 0..rule.len() {
            let w = rule.weights[q] * area;
            let g = gu[q];
            let nu = p.nu(dot(g, g).sqrt());
            let f = p.source_at(physical(o, h, rule.points[q]));
            for (i, li) in local.iter_mut().enumerate() {
                let gr = table.grads[q][i];
                let gphi = [gr[0] / h[0], gr[1] / h[1]];
                *li += w * (nu * dot(g, gphi) - f * table.vals[q][i]);
            }
        }
        scatter(space, space.cell_dofs(pos), &local, &mut out, &mut buf);
    }
    condense_vector(space, &mut out);
    Ok(out)
}

/// Condensed matrix with entry `(i, j) = A'(u)(phi_j, phi_i)`; Dirichlet and
/// constrained DoFs get identity rows and columns.
pub fn assemble_jacobian(p: &Problem, space: &Arc<FeSpace>, u: &FeFunction) -> Result<CsrMatrix> {
    if !Arc::ptr_eq(space, &u.space) {
        return Err(Error::SpaceMismatch);
    }
    let k = space.degree();
    let nl = (k + 1) * (k + 1);
    let rule = QuadRule::gauss(quad_points(k));
    let table = ShapeTable::new(k, &rule.points);
    let mut trip = Vec::with_capacity(space.n_cells() * nl * nl);
    let mut local = vec![0.0; nl * nl];
    let mut gphi = vec![[0.0; 2]; nl];
    let (mut bi, mut bj) = (Vec::new(), Vec::new());
    for pos in 0..space.n_cells() {
        let (_, h) = space.cell_box(pos);
        let area = h[0] * h[1];
        let (_, gu) = values_at(u, pos, &table);
        local.iter_mut().for_each(|x| *x = 0.0);
        for q in 0..rule.len() {
            let w = rule.weights[q] * area;
            let g = gu[q];
            let s = dot(g, g).sqrt();
            let (nu, c) = (p.nu(s), p.dnu_over_s(s));
            for (i, gp) in gphi.iter_mut().enumerate() {
                let gr = table.grads[q][i];
                *gp = [gr[0] / h[0], gr[1] / h[1]];
            }
            for i in 0..nl {
                let gi = dot(g, gphi[i]);
                for j in 0..nl {
                    local[i * nl + j] += w * (nu * dot(gphi[i], gphi[j]) + c * gi * dot(g, gphi[j]));
                }
            }
        }
        let dofs = space.cell_dofs(pos);
        for i in 0..nl {
            bi.clear();
            space.expand(dofs[i], &mut bi);
            for j in 0..nl {
                bj.clear();
                space.expand(dofs[j], &mut bj);
                let v = local[i * nl + j];
                for &(mi, wi) in &bi {
                    if space.is_dirichlet(mi) {
                        continue;
                    }
                    for &(mj, wj) in &bj {
                        if !space.is_dirichlet(mj) {
                            trip.push((mi, mj, wi * wj * v));
                        }
                    }
                }
            }
        }
    }
    for d in 0..space.n_dofs() {
        if space.is_dirichlet(d) || space.constraint(d).is_some() {
            trip.push((d, d, 1.0));
        }
    }
    Ok(CsrMatrix::from_triplets(space.n_dofs(), trip))
}

/// Goal functionals of the model problems.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GoalSpec {
    /// `u(point)`
    PointValue { point: [f64; 2] },
    /// `int_boundary grad u . n ds` over every edge of the named boundary segment.
    Flux { boundary: Boundary },
    /// `int u^2 dx`
    L2NormSquared,
}

impl GoalSpec {
    pub fn label(&self) -> String {
        match self {
            GoalSpec::PointValue { point } => format!("u_{}_{}", point[0], point[1]),
            GoalSpec::Flux { boundary } => format!("flux_{boundary:?}").to_lowercase(),
            GoalSpec::L2NormSquared => "l2_norm_squared".into(),
        }
    }

    pub fn is_linear(&self) -> bool {
        !matches!(self, GoalSpec::L2NormSquared)
    }

    pub fn validate(&self, space: &FeSpace) -> Result<()> {
        match self {
            GoalSpec::PointValue { point } => {
                space.mesh().locate(*point).ok_or(Error::OutsideDomain(point[0], point[1]))?;
            }
            GoalSpec::Flux { boundary } => {
                if !space.mesh().boundary_edges().iter().any(|e| e.2 == *boundary) {
                    return Err(Error::Config(format!("no boundary edges marked {boundary:?}")));
                }
            }
            GoalSpec::L2NormSquared => {}
        }
        Ok(())
    }
}

/// A point sample `a v(x) + b . grad v(x)` at reference point `xi` of active cell `pos`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub pos: usize,
    pub xi: [f64; 2],
    pub a: f64,
    pub b: [f64; 2],
}

/// A linear functional written as a weighted sum of point samples. Works on any
/// function defined on the same mesh, whatever its degree.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinearFunctional {
    pub samples: Vec<Sample>,
}

impl LinearFunctional {
    pub fn apply(&self, f: &FeFunction) -> f64 {
        self.samples
            .iter()
            .map(|s| {
                let (v, g) = f.eval_cell(s.pos, s.xi);
                s.a * v + dot(s.b, g)
            })
            .sum()
    }

    pub fn scaled(mut self, c: f64) -> Self {
        for s in &mut self.samples {
            s.a *= c;
            s.b = [c * s.b[0], c * s.b[1]];
        }
        self
    }

    pub fn extend(&mut self, other: LinearFunctional) {
        self.samples.extend(other.samples);
    }

    /// Condensed vector `l(phi_j)`.
    pub fn assemble(&self, space: &FeSpace) -> Vec<f64> {
        let mut out = vec![0.0; space.n_dofs()];
        let mut buf = Vec::new();
        for s in &self.samples {
            let (v, g) = space.shape_at(s.pos, s.xi);
            let local: Vec<f64> = v.iter().zip(&g).map(|(v, g)| s.a * v + dot(s.b, *g)).collect();
            scatter(space, space.cell_dofs(s.pos), &local, &mut out, &mut buf);
        }
        condense_vector(space, &mut out);
        out
    }
}

fn edge_xi(side: Side, t: f64) -> [f64; 2] {
    match side {
        Side::Left => [0.0, t],
        Side::Right => [1.0, t],
        Side::Bottom => [t, 0.0],
        Side::Top => [t, 1.0],
    }
}

const EDGE_POINTS: usize = 8;
const VOLUME_POINTS: usize = 7;

/// `J(u)`
pub fn goal_eval(g: &GoalSpec, u: &FeFunction) -> Result<f64> {
    match g {
        GoalSpec::PointValue { point } => u.evaluate(*point),
        GoalSpec::Flux { .. } => Ok(goal_derivative(g, u)?.apply(u)),
        GoalSpec::L2NormSquared => {
            let rule = QuadRule::gauss(VOLUME_POINTS);
            let table = ShapeTable::new(u.space.degree(), &rule.points);
            let mut s = 0.0;
            for pos in 0..u.space.n_cells() {
                let (_, h) = u.space.cell_box(pos);
                let (v, _) = values_at(u, pos, &table);
                s += h[0] * h[1] * v.iter().zip(&rule.weights).map(|(v, w)| w * v * v).sum::<f64>();
            }
            Ok(s)
        }
    }
}

/// `J'(u)(.)` as a sampled linear functional.
pub fn goal_derivative(g: &GoalSpec, u: &FeFunction) -> Result<LinearFunctional> {
    let space = &u.space;
    let mut samples = Vec::new();
    match g {
        GoalSpec::PointValue { point } => {
            let (c, xi) = space.mesh().locate(*point).ok_or(Error::OutsideDomain(point[0], point[1]))?;
            samples.push(Sample { pos: space.cell_pos(c), xi, a: 1.0, b: [0.0; 2] });
        }
        GoalSpec::Flux { boundary } => {
            let (t, w) = gauss_1d(EDGE_POINTS);
            for (c, side, marker) in space.mesh().boundary_edges() {
                if marker != *boundary {
                    continue;
                }
                let (_, h) = space.mesh().cell_box(c);
                let len = if matches!(side, Side::Left | Side::Right) { h[1] } else { h[0] };
                let n = side.normal();
                for (t, w) in t.iter().zip(&w) {
                    let s = w * len;
                    samples.push(Sample { pos: space.cell_pos(c), xi: edge_xi(side, *t), a: 0.0, b: [s * n[0], s * n[1]] });
                }
            }
        }
        GoalSpec::L2NormSquared => {
            let rule = QuadRule::gauss(VOLUME_POINTS);
            let table = ShapeTable::new(space.degree(), &rule.points);
            for pos in 0..space.n_cells() {
                let (_, h) = space.cell_box(pos);
                let (v, _) = values_at(u, pos, &table);
                for q in 0..rule.len() {
                    let a = 2.0 * v[q] * rule.weights[q] * h[0] * h[1];
                    samples.push(Sample { pos, xi: rule.points[q], a, b: [0.0; 2] });
                }
            }
        }
    }
    Ok(LinearFunctional { samples })
}

/// Condensed vector `J'(u)(phi_j)` on `space`.
pub fn goal_derivative_vector(g: &GoalSpec, u: &FeFunction, space: &FeSpace) -> Result<Vec<f64>> {
    Ok(goal_derivative(g, u)?.assemble(space))
}

/// `A(u)(v)` for `v` on the same mesh, any degree.
pub fn apply_form(p: &Problem, u: &FeFunction, v: &FeFunction) -> f64 {
    let nq = quad_points(u.space.degree().max(v.space.degree()));
    let rule = QuadRule::gauss(nq);
    let tu = ShapeTable::new(u.space.degree(), &rule.points);
    let tv = ShapeTable::new(v.space.degree(), &rule.points);
    let mut s = 0.0;
    for pos in 0..u.space.n_cells() {
        let (o, h) = u.space.cell_box(pos);
        let (_, gu) = values_at(u, pos, &tu);
        let (vv, gv) = values_at(v, pos, &tv);
        for q in 0..rule.len() {
            let g = gu[q];
            let nu = p.nu(dot(g, g).sqrt());
            let f = p.source_at(physical(o, h, rule.points[q]));
            s += rule.weights[q] * h[0] * h[1] * (nu * dot(g, gv[q]) - f * vv[q]);
        }
    }
    s
}

/// `A'(u)(v, w)` for functions on the same mesh.
pub fn apply_jacobian_form(p: &Problem, u: &FeFunction, v: &FeFunction, w: &FeFunction) -> f64 {
    let deg = u.space.degree().max(v.space.degree()).max(w.space.degree());
    let rule = QuadRule::gauss(quad_points(deg));
    let tu = ShapeTable::new(u.space.degree(), &rule.points);
    let tv = ShapeTable::new(v.space.degree(), &rule.points);
    let tw = ShapeTable::new(w.space.degree(), &rule.points);
    let mut s = 0.0;
    for pos in 0..u.space.n_cells() {
        let (_, h) = u.space.cell_box(pos);
        let (_, gu) = values_at(u, pos, &tu);
        let (_, gv) = values_at(v, pos, &tv);
        let (_, gw) = values_at(w, pos, &tw);
        for q in 0..rule.len() {
            let g = gu[q];
            let sn = dot(g, g).sqrt();
            let val = p.nu(sn) * dot(gv[q], gw[q]) + p.dnu_over_s(sn) * dot(g, gv[q]) * dot(g, gw[q]);
            s += rule.weights[q] * h[0] * h[1] * val;
        }
    }
    s
}

/// Boundary DoFs of `marker` on `space`, ordered along the boundary.
pub fn boundary_side_dofs(space: &FeSpace, marker: Boundary) -> Vec<usize> {
    let mut out = Vec::new();
    for (c, side, m) in space.mesh().boundary_edges() {
        if m == marker {
            let pos = space.cell_pos(c);
            out.extend(side_nodes(space.degree(), side).iter().map(|&l| space.cell_dofs(pos)[l]));
        }
    }
    out.sort_unstable();
    out.dedup();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_grid, DomainSpec};
    use crate::sparse::solve_lu;
    use rand::{Rng, SeedableRng};

    fn space_on(spec: &DomainSpec, k: usize, dir: &[Boundary], refine: bool) -> Arc<FeSpace> {
        let mut m = build_grid(spec).unwrap();
        if refine {
            m = m.refine(&[0]).unwrap();
        }
        Arc::new(FeSpace::new(Arc::new(m), k, dir).unwrap())
    }

    #[test]
    fn one_interior_dof_hand_solution() {
        let s = space_on(&DomainSpec::unit_square(2), 1, &Boundary::ALL, false);
        let p = Problem::poisson(-1.0);
        let u0 = FeFunction::zeros(&s);
        let k = assemble_jacobian(&p, &s, &u0).unwrap();
        let r = assemble_residual(&p, &s, &u0).unwrap();
        let c = s.dof_coords().iter().position(|q| *q == [0.5, 0.5]).unwrap();
        assert!((k.get(c, c) - 8.0 / 3.0).abs() < 1e-14);
        // load of f = -1 against the hat function of area 1/4 (volume 1/12 per cell)
        assert!((r[c] - 0.25).abs() < 1e-14);
        let du = solve_lu(&k, &r.iter().map(|x| -x).collect::<Vec<_>>()).unwrap();
        assert!((du[c] + 0.25 / (8.0 / 3.0)).abs() < 1e-14);
    }

    #[test]
    fn poisson_jacobian_is_independent_of_u_and_symmetric() {
        let s = space_on(&DomainSpec::unit_square(3), 2, &Boundary::ALL, true);
        let p = Problem::poisson(1.0);
        let a = assemble_jacobian(&p, &s, &FeFunction::zeros(&s)).unwrap();
        let u = FeFunction::interpolate(&s, |x| x[0] * x[1].sin());
        let b = assemble_jacobian(&p, &s, &u).unwrap();
        assert_eq!(a, b);
        assert!(a.asymmetry() < 1e-13);
    }

    #[test]
    fn nonlinear_jacobian_at_zero_is_twice_stiffness() {
        let s = space_on(&DomainSpec::two_holes(), 1, &Boundary::ALL, true);
        let z = FeFunction::zeros(&s);
        let k = assemble_jacobian(&Problem::poisson(10.0), &s, &z).unwrap();
        let j = assemble_jacobian(&Problem::nonlinear_arctan(10.0), &s, &z).unwrap();
        for i in 0..s.n_dofs() {
            let diag = s.is_dirichlet(i) || s.constraint(i).is_some();
            for (c, v) in j.row(i) {
                let expect = if diag && c == i { 1.0 } else { 2.0 * k.get(i, c) };
                assert!((v - expect).abs() < 1e-13);
            }
        }
        // residual at zero is minus the load; without Dirichlet rows the entries sum to -f |Omega|
        let free = space_on(&DomainSpec::two_holes(), 1, &[], true);
        let r = assemble_residual(&Problem::nonlinear_arctan(10.0), &free, &FeFunction::zeros(&free)).unwrap();
        assert!((r.iter().sum::<f64>() + 130.0).abs() < 1e-11);
    }

    #[test]
    fn nonlinear_jacobian_matches_finite_differences() {
        let s = space_on(&DomainSpec::two_holes(), 2, &Boundary::ALL, true);
        let p = Problem::nonlinear_arctan(10.0);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let mut u = FeFunction::interpolate(&s, |x| x[0] * (3.0 - x[1]) * 0.3);
        condense_vector(&s, &mut u.coeffs);
        s.distribute(&mut u.coeffs);
        let jac = assemble_jacobian(&p, &s, &u).unwrap();
        let mut v: Vec<f64> = (0..s.n_dofs()).map(|_| rng.random_range(-1.0..1.0)).collect();
        condense_vector(&s, &mut v);
        s.distribute(&mut v);
        let eps = 1e-6;
        let shifted = |e: f64| {
            let mut w = u.clone();
            for (x, d) in w.coeffs.iter_mut().zip(&v) {
                *x += e * d;
            }
            assemble_residual(&p, &s, &w).unwrap()
        };
        let (rp, rm) = (shifted(eps), shifted(-eps));
        let jv = jac.matvec(&v);
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..s.n_dofs() {
            if s.is_dirichlet(i) || s.constraint(i).is_some() {
                continue;
            }
            num += ((rp[i] - rm[i]) / (2.0 * eps) - jv[i]).powi(2);
            den += jv[i].powi(2);
        }
        assert!((num / den).sqrt() < 1e-6);
    }

    #[test]
    fn residual_matches_high_order_oracle_on_one_cell() {
        let m = Arc::new(build_grid(&DomainSpec::rectangle([0.0, 0.0, 2.0, 1.0], 1, 1)).unwrap());
        let s = Arc::new(FeSpace::new(m, 2, &[]).unwrap());
        let p = Problem::nonlinear_arctan(3.0);
        let ufn = |x: [f64; 2]| 0.4 * x[0] * x[0] - 0.7 * x[0] * x[1] + x[1];
        let u = FeFunction::interpolate(&s, ufn);
        let r = assemble_residual(&p, &s, &u).unwrap();
        // oracle: 40-point Gauss on the exact polynomial gradient
        let (t, w) = gauss_1d(40);
        for d in 0..s.n_dofs() {
            let mut phi = vec![0.0; s.n_dofs()];
            phi[d] = 1.0;
            let ph = FeFunction::from_coeffs(&s, phi).unwrap();
            let mut acc = 0.0;
            for (tx, wx) in t.iter().zip(&w) {
                for (ty, wy) in t.iter().zip(&w) {
                    let x = [2.0 * tx, *ty];
                    let g = [0.8 * x[0] - 0.7 * x[1], -0.7 * x[0] + 1.0];
                    let (pv, pg) = ph.eval_cell(0, [*tx, *ty]);
                    let nu = 2.0 + (g[0] * g[0] + g[1] * g[1]).atan();
                    acc += 2.0 * wx * wy * (nu * (g[0] * pg[0] + g[1] * pg[1]) - 3.0 * pv);
                }
            }
            // k+2 Gauss points is not exact for the atan law; the oracle bounds the quadrature error
            assert!((acc - r[d]).abs() < 1e-3, "dof {d}: {acc} vs {}", r[d]);
        }
    }

    #[test]
    fn goal_values() {
        let spec = DomainSpec::rectangle([0.0, 0.0, 1.0, 3.0], 1, 3);
        let s = space_on(&spec, 1, &[], false);
        let u = FeFunction::interpolate(&s, |p| p[0] + p[1]);
        assert!((goal_eval(&GoalSpec::PointValue { point: [0.5, 0.5] }, &u).unwrap() - 1.0).abs() < 1e-14);
        let gx = FeFunction::interpolate(&s, |p| p[0]);
        let flux = goal_eval(&GoalSpec::Flux { boundary: Boundary::Left }, &gx).unwrap();
        assert!((flux + 3.0).abs() < 1e-13);
        let s2 = space_on(&DomainSpec::unit_square(2), 1, &[], false);
        let c = FeFunction::interpolate(&s2, |_| 1.7);
        assert!((goal_eval(&GoalSpec::L2NormSquared, &c).unwrap() - 1.7 * 1.7).abs() < 1e-13);
    }

    #[test]
    fn point_goal_derivative_is_shape_values() {
        let s = space_on(&DomainSpec::unit_square(2), 1, &[], false);
        let u = FeFunction::zeros(&s);
        let d = goal_derivative_vector(&GoalSpec::PointValue { point: [0.3, 0.6] }, &u, &s).unwrap();
        assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        assert_eq!(d.iter().filter(|x| **x != 0.0).count(), 4);
        let l2 = goal_derivative_vector(&GoalSpec::L2NormSquared, &u, &s).unwrap();
        assert!(l2.iter().all(|x| *x == 0.0));
    }

    #[test]
    fn l2_goal_derivative_matches_finite_differences() {
        let s = space_on(&DomainSpec::unit_square(2), 2, &[], true);
        let g = GoalSpec::L2NormSquared;
        let u = FeFunction::interpolate(&s, |p| (p[0] * 2.0).sin() + p[1]);
        let v = FeFunction::interpolate(&s, |p| p[0] * p[1] - 0.3);
        let eps = 1e-6;
        let mut up = u.clone();
        up.axpy(eps, &v).unwrap();
        let mut um = u.clone();
        um.axpy(-eps, &v).unwrap();
        let fd = (goal_eval(&g, &up).unwrap() - goal_eval(&g, &um).unwrap()) / (2.0 * eps);
        let an = goal_derivative(&g, &u).unwrap().apply(&v);
        assert!((fd - an).abs() <= 1e-6 * an.abs());
    }

    #[test]
    fn galerkin_rows_of_constrained_dofs_are_zero() {
        let s = space_on(&DomainSpec::unit_square(2), 2, &Boundary::ALL, true);
        let u = FeFunction::interpolate(&s, |p| p[0] * p[1]);
        let r = assemble_residual(&Problem::poisson(1.0), &s, &u).unwrap();
        for d in 0..s.n_dofs() {
            if s.constraint(d).is_some() {
                assert_eq!(r[d], 0.0);
            }
        }
    }

    #[test]
    fn apply_form_agrees_with_residual_vector() {
        let s = space_on(&DomainSpec::two_holes(), 2, &[], true);
        let p = Problem::poisson(10.0);
        let u = FeFunction::interpolate(&s, |x| 0.1 * x[0] * x[1]);
        let v = FeFunction::interpolate(&s, |x| (x[0] - 2.5) * x[1]);
        let r = assemble_residual(&p, &s, &u).unwrap();
        let direct: f64 = (0..s.n_dofs()).filter(|&d| s.constraint(d).is_none()).map(|d| r[d] * v.coeffs[d]).sum();
        let via = apply_form(&p, &u, &v);
        assert!((direct - via).abs() < 1e-12 * via.abs().max(1.0));
    }
}
