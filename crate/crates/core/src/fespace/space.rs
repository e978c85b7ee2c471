use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::mesh::{Boundary, Mesh, Neighbor, Side, MAX_LEVEL};

use super::lagrange;

/// Continuous tensor-product Lagrange space `Q_k` on an active mesh.
#[derive(Debug)]
pub struct FeSpace {
    mesh: Arc<Mesh>,
    degree: usize,
    /// Position of each mesh cell in the active list, `usize::MAX` if inactive.
    cell_pos: Vec<usize>,
    cell_dofs: Vec<Vec<usize>>,
    coords: Vec<[f64; 2]>,
    constraints: Vec<Option<Vec<(usize, f64)>>>,
    boundary: BTreeMap<Boundary, BTreeSet<usize>>,
    dirichlet: Vec<bool>,
}

/// Integer lattice key of local node `(a, b)` of a cell, in units of `1/(k 2^MAX_LEVEL)` base cells.
fn node_key(level: u32, index: (i64, i64), k: usize, a: usize, b: usize) -> (i64, i64) {
    let sh = MAX_LEVEL - level;
    let k = k as i64;
    ((index.0 * k + a as i64) << sh, (index.1 * k + b as i64) << sh)
}

/// Local node indices on a side, in increasing coordinate order.
pub(crate) fn side_nodes(k: usize, side: Side) -> Vec<usize> {
    let n = k + 1;
    (0..n)
        .map(|t| match side {
            Side::Left => t * n,
            Side::Right => t * n + k,
            Side::Bottom => t,
            Side::Top => k * n + t,
        })
        .collect()
}

impl FeSpace {
    /// Builds `Q_degree` on the active cells of `mesh`, with homogeneous Dirichlet
    /// conditions on the listed boundary segments.
    pub fn new(mesh: Arc<Mesh>, degree: usize, dirichlet: &[Boundary]) -> Result<Self> {
        if !(1..=4).contains(&degree) {
            return Err(Error::Degree(degree));
        }
        Self::build(mesh, degree, dirichlet)
    }

    /// Same as [`FeSpace::new`] but accepts degrees up to 8 (patch interpolants of `Q_4`).
    pub(crate) fn build(mesh: Arc<Mesh>, degree: usize, dirichlet: &[Boundary]) -> Result<Self> {
        if !(1..=8).contains(&degree) {
            return Err(Error::Degree(degree));
        }
        let k = degree;
        let n_loc = (k + 1) * (k + 1);
        let active = mesh.active_cells().to_vec();
        let mut cell_pos = vec![usize::MAX; mesh.cells().len()];
        for (p, &c) in active.iter().enumerate() {
            cell_pos[c] = p;
        }
        let mut keys: HashMap<(i64, i64), usize> = HashMap::new();
        let mut key_list = Vec::new();
        let mut cell_dofs = Vec::with_capacity(active.len());
        for &c in &active {
            let cell = mesh.cell(c);
            let mut dofs = Vec::with_capacity(n_loc);
            for b in 0..=k {
                for a in 0..=k {
                    let key = node_key(cell.level, cell.index, k, a, b);
                    let id = *keys.entry(key).or_insert_with(|| {
                        key_list.push(key);
                        key_list.len() - 1
                    });
                    dofs.push(id);
                }
            }
            cell_dofs.push(dofs);
        }
        let n = key_list.len();
        let (hx, hy) = mesh.base_size();
        let scale = k as f64 * (1i64 << MAX_LEVEL) as f64;
        let [x0, y0, ..] = mesh.spec().bbox;
        let coords = key_list
            .iter()
            .map(|&(a, b)| [x0 + a as f64 / scale * hx, y0 + b as f64 / scale * hy])
            .collect();

        // direct constraints from each coarse side facing two finer cells
        let mut direct: Vec<Option<Vec<(usize, f64)>>> = vec![None; n];
        for (p, &c) in active.iter().enumerate() {
            for s in Side::ALL {
                let Neighbor::Finer(kids) = mesh.neighbor(c, s) else { continue };
                let coarse: Vec<usize> = side_nodes(k, s).iter().map(|&l| cell_dofs[p][l]).collect();
                let along = |key: (i64, i64)| if matches!(s, Side::Left | Side::Right) { key.1 } else { key.0 };
                let (c0, c1) = (along(key_list[coarse[0]]), along(key_list[coarse[k]]));
                for kid in kids {
                    let kp = cell_pos[kid];
                    for &l in &side_nodes(k, s.opposite()) {
                        let d = cell_dofs[kp][l];
                        if coarse.contains(&d) || direct[d].is_some() {
                            continue;
                        }
                        let t = (along(key_list[d]) - c0) as f64 / (c1 - c0) as f64;
                        let w = lagrange::basis_1d(k, t);
                        let masters = coarse
                            .iter()
                            .zip(w)
                            .filter(|(_, w)| w.abs() > 1e-15)
                            .map(|(&m, w)| (m, w))
                            .collect();
                        direct[d] = Some(masters);
                    }
                }
            }
        }
        let constraints = resolve_chains(&direct);

        let mut boundary: BTreeMap<Boundary, BTreeSet<usize>> = BTreeMap::new();
        for (c, s, marker) in mesh.boundary_edges() {
            let p = cell_pos[c];
            let set = boundary.entry(marker).or_default();
            set.extend(side_nodes(k, s).iter().map(|&l| cell_dofs[p][l]));
        }
        let mut is_dir = vec![false; n];
        for m in dirichlet {
            if let Some(set) = boundary.get(m) {
                for &d in set {
                    is_dir[d] = true;
                }
            }
        }
        Ok(FeSpace { mesh, degree, cell_pos, cell_dofs, coords, constraints, boundary, dirichlet: is_dir })
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn n_dofs(&self) -> usize {
        self.coords.len()
    }

    pub fn n_cells(&self) -> usize {
        self.cell_dofs.len()
    }

    /// Mesh cell id of the active cell at position `pos`.
    pub fn cell_id(&self, pos: usize) -> usize {
        self.mesh.active_cells()[pos]
    }

    /// Position of an active mesh cell in this space's cell list.
    pub fn cell_pos(&self, cell: usize) -> usize {
        self.cell_pos[cell]
    }

    pub fn cell_dofs(&self, pos: usize) -> &[usize] {
        &self.cell_dofs[pos]
    }

    pub fn dof_coords(&self) -> &[[f64; 2]] {
        &self.coords
    }

    pub fn constraint(&self, dof: usize) -> Option<&[(usize, f64)]> {
        self.constraints[dof].as_deref()
    }

    pub fn n_constraints(&self) -> usize {
        self.constraints.iter().filter(|c| c.is_some()).count()
    }

    pub fn is_dirichlet(&self, dof: usize) -> bool {
        self.dirichlet[dof]
    }

    pub fn boundary_dofs(&self, marker: Boundary) -> impl Iterator<Item = usize> + '_ {
        self.boundary.get(&marker).into_iter().flatten().copied()
    }

    /// DoFs that are neither constrained nor Dirichlet.
    pub fn n_free(&self) -> usize {
        (0..self.n_dofs()).filter(|&d| self.constraints[d].is_none() && !self.dirichlet[d]).count()
    }

    /// Expands a DoF into unconstrained masters and weights.
    pub fn expand(&self, dof: usize, out: &mut Vec<(usize, f64)>) {
        match &self.constraints[dof] {
            Some(m) => out.extend_from_slice(m),
            None => out.push((dof, 1.0)),
        }
    }

    /// Overwrites constrained coefficients with their master combination.
    pub fn distribute(&self, coeffs: &mut [f64]) {
        for d in 0..coeffs.len() {
            if let Some(m) = &self.constraints[d] {
                coeffs[d] = m.iter().map(|&(j, w)| w * coeffs[j]).sum();
            }
        }
    }

    /// Geometry of the cell at `pos`: lower-left corner and edge lengths.
    pub fn cell_box(&self, pos: usize) -> ([f64; 2], [f64; 2]) {
        self.mesh.cell_box(self.cell_id(pos))
    }

    /// Shape values and physical gradients on the cell at `pos`, reference point `xi`.
    pub fn shape_at(&self, pos: usize, xi: [f64; 2]) -> (Vec<f64>, Vec<[f64; 2]>) {
        let (_, h) = self.cell_box(pos);
        let (v, mut g) = lagrange::tensor(self.degree, xi);
        for gi in &mut g {
            gi[0] /= h[0];
            gi[1] /= h[1];
        }
        (v, g)
    }

    /// True when both spaces live on the same mesh object.
    pub fn same_mesh(&self, other: &FeSpace) -> bool {
        Arc::ptr_eq(&self.mesh, &other.mesh)
    }
}

fn resolve_chains(direct: &[Option<Vec<(usize, f64)>>]) -> Vec<Option<Vec<(usize, f64)>>> {
    fn flatten(
        d: usize,
        direct: &[Option<Vec<(usize, f64)>>],
        memo: &mut Vec<Option<Vec<(usize, f64)>>>,
        depth: usize,
    ) -> Vec<(usize, f64)> {
        assert!(depth < 64, "cyclic hanging-node constraints");
        if let Some(m) = &memo[d] {
            return m.clone();
        }
        let Some(masters) = &direct[d] else { return vec![(d, 1.0)] };
        let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
        for &(m, w) in masters {
            for (mm, ww) in flatten(m, direct, memo, depth + 1) {
                *acc.entry(mm).or_default() += w * ww;
            }
        }
        let out: Vec<(usize, f64)> = acc.into_iter().filter(|(_, w)| w.abs() > 1e-15).collect();
        memo[d] = Some(out.clone());
        out
    }
    let mut memo = vec![None; direct.len()];
    for d in 0..direct.len() {
        if direct[d].is_some() {
            flatten(d, direct, &mut memo, 0);
        }
    }
    memo
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_grid, DomainSpec};

    fn square(n: usize) -> Arc<Mesh> {
        Arc::new(build_grid(&DomainSpec::unit_square(n)).unwrap())
    }

    #[test]
    fn dof_counts_on_uniform_grid() {
        let all = Boundary::ALL;
        let s = FeSpace::new(square(2), 1, &all).unwrap();
        assert_eq!(s.n_dofs(), 9);
        assert_eq!(s.n_free(), 1);
        let s = FeSpace::new(square(2), 2, &all).unwrap();
        assert_eq!(s.n_dofs(), 25);
        assert_eq!(s.n_free(), 9);
        for n in 1..5 {
            for k in 1..=4 {
                let s = FeSpace::new(square(n), k, &all).unwrap();
                assert_eq!(s.n_free(), (n * k - 1).pow(2));
            }
        }
    }

    #[test]
    fn degree_out_of_range() {
        assert!(matches!(FeSpace::new(square(1), 0, &[]), Err(Error::Degree(0))));
        assert!(matches!(FeSpace::new(square(1), 5, &[]), Err(Error::Degree(5))));
    }

    #[test]
    fn q1_hanging_constraints_are_midpoints() {
        let m = Arc::new(build_grid(&DomainSpec::unit_square(2)).unwrap().refine(&[0]).unwrap());
        let s = FeSpace::new(m, 1, &Boundary::ALL).unwrap();
        assert_eq!(s.n_constraints(), 2);
        for d in 0..s.n_dofs() {
            if let Some(c) = s.constraint(d) {
                assert_eq!(c.len(), 2);
                assert!(c.iter().all(|&(_, w)| (w - 0.5).abs() < 1e-15));
            }
        }
    }

    #[test]
    fn higher_degree_constraint_weights_sum_to_one() {
        let m = build_grid(&DomainSpec::unit_square(2)).unwrap().refine(&[0]).unwrap();
        let kid = m.cell(0).children.unwrap()[1];
        let m = Arc::new(m.refine(&[kid]).unwrap());
        for k in 1..=4 {
            let s = FeSpace::new(m.clone(), k, &[]).unwrap();
            assert!(s.n_constraints() > 0);
            for d in 0..s.n_dofs() {
                if let Some(c) = s.constraint(d) {
                    let sum: f64 = c.iter().map(|x| x.1).sum();
                    assert!((sum - 1.0).abs() < 1e-13);
                    assert!(c.iter().all(|&(j, _)| s.constraint(j).is_none()));
                }
            }
        }
    }
}
