//! Hierarchical quadrilateral meshes on axis-aligned rectangles.
//!
//! Cells live on a dyadic lattice: a cell of refinement level `l` with grid
//! index `(ix, iy)` covers `[x0 + ix*hx/2^l, x0 + (ix+1)*hx/2^l] x [...]`,
//! where `hx, hy` are the sizes of the initial grid cells. All vertex and node
//! identities are computed on an integer lattice, so there is no floating
//! point tolerance anywhere in the topology.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Deepest refinement level supported by the integer lattice.
pub const MAX_LEVEL: u32 = 30;

/// Named boundary segments. The four sides of the bounding box get their
/// own names; every edge bordering a removed box is a `Hole` edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    Left,
    Right,
    Bottom,
    Top,
    Hole,
}

impl Boundary {
    pub const ALL: [Boundary; 5] = [
        Boundary::Left,
        Boundary::Right,
        Boundary::Bottom,
        Boundary::Top,
        Boundary::Hole,
    ];
}

/// Rectangular domain with an initial tensor grid and optional rectangular holes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    /// `[x0, y0, x1, y1]`
    pub bbox: [f64; 4],
    pub nx: usize,
    pub ny: usize,
    /// Boxes `[x0, y0, x1, y1]` removed from the grid; must align with grid lines.
    #[serde(default)]
    pub removed_boxes: Vec<[f64; 4]>,
}

impl DomainSpec {
    pub fn rectangle(bbox: [f64; 4], nx: usize, ny: usize) -> Self {
        DomainSpec { bbox, nx, ny, removed_boxes: Vec::new() }
    }

    pub fn unit_square(n: usize) -> Self {
        Self::rectangle([0.0, 0.0, 1.0, 1.0], n, n)
    }

    /// `(0,5)x(0,3)` with the squares `(1,2)^2` and `(3,4)x(1,2)` removed, on unit cells.
    pub fn two_holes() -> Self {
        DomainSpec {
            bbox: [0.0, 0.0, 5.0, 3.0],
            nx: 5,
            ny: 3,
            removed_boxes: vec![[1.0, 1.0, 2.0, 2.0], [3.0, 1.0, 4.0, 2.0]],
        }
    }
}

/// Sides of a cell, in the order left, right, bottom, top.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Left = 0,
    Right = 1,
    Bottom = 2,
    Top = 3,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::Left, Side::Right, Side::Bottom, Side::Top];

    pub fn offset(self) -> (i64, i64) {
        match self {
            Side::Left => (-1, 0),
            Side::Right => (1, 0),
            Side::Bottom => (0, -1),
            Side::Top => (0, 1),
        }
    }

    pub fn opposite(self) -> Side {
        match self {
            Side::Left => Side::Right,
            Side::Right => Side::Left,
            Side::Bottom => Side::Top,
            Side::Top => Side::Bottom,
        }
    }

    /// Outward unit normal.
    pub fn normal(self) -> [f64; 2] {
        let (dx, dy) = self.offset();
        [dx as f64, dy as f64]
    }

    /// Child positions `(cx, cy)` touching this side.
    fn children(self) -> [(i64, i64); 2] {
        match self {
            Side::Left => [(0, 0), (0, 1)],
            Side::Right => [(1, 0), (1, 1)],
            Side::Bottom => [(0, 0), (1, 0)],
            Side::Top => [(0, 1), (1, 1)],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    /// Vertex ids, counter-clockwise starting at the lower-left corner.
    pub vertices: [usize; 4],
    pub level: u32,
    /// Grid index on the level-`level` lattice.
    pub index: (i64, i64),
    pub parent: Option<usize>,
    /// Children ordered `(0,0), (1,0), (0,1), (1,1)`.
    pub children: Option<[usize; 4]>,
}

impl Cell {
    pub fn is_active(&self) -> bool {
        self.children.is_none()
    }
}

/// What lies across one side of an active cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Neighbor {
    Boundary,
    /// An active cell of the same level.
    Same(usize),
    /// The same-level neighbor is refined; these are its two children touching the side.
    Finer([usize; 2]),
    /// An active cell of lower level whose side contains this side.
    Coarser(usize),
}

#[derive(Debug, Clone)]
pub struct Mesh {
    spec: DomainSpec,
    hx: f64,
    hy: f64,
    vertices: Vec<[f64; 2]>,
    vertex_keys: HashMap<(i64, i64), usize>,
    cells: Vec<Cell>,
    lookup: HashMap<(u32, i64, i64), usize>,
    active: Vec<usize>,
}

fn grid_aligned(v: f64, origin: f64, h: f64) -> Option<i64> {
    let t = (v - origin) / h;
    let r = t.round();
    ((t - r).abs() <= 1e-9).then_some(r as i64)
}

/// Builds the level-0 mesh described by `spec`.
pub fn build_grid(spec: &DomainSpec) -> Result<Mesh> {
    let [x0, y0, x1, y1] = spec.bbox;
    if spec.nx == 0 || spec.ny == 0 {
        return Err(Error::Config("grid needs nx, ny >= 1".into()));
    }
    if !(x1 > x0 && y1 > y0) {
        return Err(Error::Config(format!("degenerate bounding box {:?}", spec.bbox)));
    }
    let hx = (x1 - x0) / spec.nx as f64;
    let hy = (y1 - y0) / spec.ny as f64;
    let mut holes = Vec::new();
    for b in &spec.removed_boxes {
        let idx = [
            grid_aligned(b[0], x0, hx),
            grid_aligned(b[1], y0, hy),
            grid_aligned(b[2], x0, hx),
            grid_aligned(b[3], y0, hy),
        ];
        match idx {
            [Some(a), Some(c), Some(d), Some(e)]
                if 0 <= a && a < d && d <= spec.nx as i64 && 0 <= c && c < e && e <= spec.ny as i64 =>
            {
                holes.push([a, c, d, e])
            }
            _ => {
                return Err(Error::Config(format!(
                    "removed box {b:?} is not aligned with the initial grid or lies outside it"
                )))
            }
        }
    }
    let mut mesh = Mesh {
        spec: spec.clone(),
        hx,
        hy,
        vertices: Vec::new(),
        vertex_keys: HashMap::new(),
        cells: Vec::new(),
        lookup: HashMap::new(),
        active: Vec::new(),
    };
    for iy in 0..spec.ny as i64 {
        for ix in 0..spec.nx as i64 {
            let removed = holes.iter().any(|h| h[0] <= ix && ix < h[2] && h[1] <= iy && iy < h[3]);
            if !removed {
                mesh.push_cell(0, (ix, iy), None);
            }
        }
    }
    if mesh.cells.is_empty() {
        return Err(Error::Config("all cells removed".into()));
    }
    mesh.rebuild_active();
    Ok(mesh)
}

impl Mesh {
    fn vertex_at(&mut self, key: (i64, i64)) -> usize {
        if let Some(&v) = self.vertex_keys.get(&key) {
            return v;
        }
        let s = (1i64 << MAX_LEVEL) as f64;
        let p = [
            self.spec.bbox[0] + key.0 as f64 / s * self.hx,
            self.spec.bbox[1] + key.1 as f64 / s * self.hy,
        ];
        let id = self.vertices.len();
        self.vertices.push(p);
        self.vertex_keys.insert(key, id);
        id
    }

    fn push_cell(&mut self, level: u32, index: (i64, i64), parent: Option<usize>) -> usize {
        let sh = MAX_LEVEL - level;
        let (ix, iy) = index;
        let corners = [(ix, iy), (ix + 1, iy), (ix + 1, iy + 1), (ix, iy + 1)];
        let vertices = corners.map(|(a, b)| self.vertex_at((a << sh, b << sh)));
        let id = self.cells.len();
        self.cells.push(Cell { vertices, level, index, parent, children: None });
        self.lookup.insert((level, ix, iy), id);
        id
    }

    fn rebuild_active(&mut self) {
        self.active = (0..self.cells.len()).filter(|&c| self.cells[c].is_active()).collect();
    }

    fn split(&mut self, c: usize) {
        let level = self.cells[c].level + 1;
        assert!(level <= MAX_LEVEL, "refinement deeper than {MAX_LEVEL} levels");
        let (ix, iy) = self.cells[c].index;
        let mut kids = [0; 4];
        for (k, (cx, cy)) in [(0, 0), (1, 0), (0, 1), (1, 1)].into_iter().enumerate() {
            kids[k] = self.push_cell(level, (2 * ix + cx, 2 * iy + cy), Some(c));
        }
        self.cells[c].children = Some(kids);
    }

    pub fn spec(&self) -> &DomainSpec {
        &self.spec
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn cell(&self, id: usize) -> &Cell {
        &self.cells[id]
    }

    /// Ids of active cells, ascending.
    pub fn active_cells(&self) -> &[usize] {
        &self.active
    }

    pub fn n_active(&self) -> usize {
        self.active.len()
    }

    /// Base cell size `(hx, hy)` of the initial grid.
    pub fn base_size(&self) -> (f64, f64) {
        (self.hx, self.hy)
    }

    /// Lower-left corner and edge lengths of a cell.
    pub fn cell_box(&self, id: usize) -> ([f64; 2], [f64; 2]) {
        let c = &self.cells[id];
        let s = (1u64 << c.level) as f64;
        let h = [self.hx / s, self.hy / s];
        let o = [
            self.spec.bbox[0] + c.index.0 as f64 * h[0],
            self.spec.bbox[1] + c.index.1 as f64 * h[1],
        ];
        (o, h)
    }

    pub fn cell_area(&self, id: usize) -> f64 {
        let (_, h) = self.cell_box(id);
        h[0] * h[1]
    }

    pub fn domain_area(&self) -> f64 {
        let [x0, y0, x1, y1] = self.spec.bbox;
        let holes: f64 = self.spec.removed_boxes.iter().map(|b| (b[2] - b[0]) * (b[3] - b[1])).sum();
        (x1 - x0) * (y1 - y0) - holes
    }

    /// Smallest existing cell at position `(ix, iy)` on level `level` or above it.
    fn find_covering(&self, level: u32, ix: i64, iy: i64) -> Option<usize> {
        let mut l = level as i64;
        let (mut a, mut b) = (ix, iy);
        while l >= 0 {
            if let Some(&c) = self.lookup.get(&(l as u32, a, b)) {
                return Some(c);
            }
            a = a.div_euclid(2);
            b = b.div_euclid(2);
            l -= 1;
        }
        None
    }

    pub fn neighbor(&self, cell: usize, side: Side) -> Neighbor {
        let c = &self.cells[cell];
        let (dx, dy) = side.offset();
        let (ix, iy) = (c.index.0 + dx, c.index.1 + dy);
        match self.find_covering(c.level, ix, iy) {
            None => Neighbor::Boundary,
            Some(n) if self.cells[n].level == c.level => match self.cells[n].children {
                None => Neighbor::Same(n),
                Some(kids) => {
                    let opp = side.opposite().children();
                    let pick = |(cx, cy): (i64, i64)| kids[(cy * 2 + cx) as usize];
                    Neighbor::Finer([pick(opp[0]), pick(opp[1])])
                }
            },
            Some(n) => Neighbor::Coarser(n),
        }
    }

    /// Boundary segment of a side of an active cell, if that side is on the boundary.
    pub fn boundary_of(&self, cell: usize, side: Side) -> Option<Boundary> {
        if self.neighbor(cell, side) != Neighbor::Boundary {
            return None;
        }
        let c = &self.cells[cell];
        let n = 1i64 << c.level;
        let (ix, iy) = c.index;
        let b = match side {
            Side::Left if ix == 0 => Boundary::Left,
            Side::Right if ix + 1 == self.spec.nx as i64 * n => Boundary::Right,
            Side::Bottom if iy == 0 => Boundary::Bottom,
            Side::Top if iy + 1 == self.spec.ny as i64 * n => Boundary::Top,
            _ => Boundary::Hole,
        };
        Some(b)
    }

    /// All boundary sides `(cell, side, marker)` of active cells.
    pub fn boundary_edges(&self) -> Vec<(usize, Side, Boundary)> {
        let mut out = Vec::new();
        for &c in &self.active {
            for s in Side::ALL {
                if let Some(b) = self.boundary_of(c, s) {
                    out.push((c, s, b));
                }
            }
        }
        out
    }

    /// Active cell containing `p` and the reference coordinates of `p` in it.
    /// Points on shared edges resolve to the cell with the larger index.
    pub fn locate(&self, p: [f64; 2]) -> Option<(usize, [f64; 2])> {
        let [x0, y0, x1, y1] = self.spec.bbox;
        let tol = 1e-12 * (x1 - x0).max(y1 - y0);
        if p[0] < x0 - tol || p[0] > x1 + tol || p[1] < y0 - tol || p[1] > y1 + tol {
            return None;
        }
        let u = ((p[0] - x0) / self.hx).clamp(0.0, self.spec.nx as f64);
        let v = ((p[1] - y0) / self.hy).clamp(0.0, self.spec.ny as f64);
        // try the containing root cell, then the ones sharing an edge/vertex with it
        let ix = (u.floor() as i64).min(self.spec.nx as i64 - 1);
        let iy = (v.floor() as i64).min(self.spec.ny as i64 - 1);
        for (dx, dy) in [(0, 0), (-1, 0), (0, -1), (-1, -1)] {
            let Some(&root) = self.lookup.get(&(0, ix + dx, iy + dy)) else { continue };
            let (ru, rv) = (u - (ix + dx) as f64, v - (iy + dy) as f64);
            if !(-1e-12..=1.0 + 1e-12).contains(&ru) || !(-1e-12..=1.0 + 1e-12).contains(&rv) {
                continue;
            }
            let (mut c, mut ru, mut rv) = (root, ru.clamp(0.0, 1.0), rv.clamp(0.0, 1.0));
            while let Some(kids) = self.cells[c].children {
                let cx = usize::from(ru >= 0.5);
                let cy = usize::from(rv >= 0.5);
                c = kids[cy * 2 + cx];
                ru = (2.0 * ru - cx as f64).clamp(0.0, 1.0);
                rv = (2.0 * rv - cy as f64).clamp(0.0, 1.0);
            }
            return Some((c, [ru, rv]));
        }
        None
    }

    /// Refines the marked cells and as many others as needed to keep the mesh
    /// one-irregular.
    pub fn refine(&self, marked: &[usize]) -> Result<Mesh> {
        self.refine_with(marked, false)
    }

    /// Like [`Mesh::refine`]; with `patches` set, siblings of every refined cell
    /// are refined as well, so that every active cell keeps a parent whose four
    /// children are all active.
    pub fn refine_with(&self, marked: &[usize], patches: bool) -> Result<Mesh> {
        for &c in marked {
            if c >= self.cells.len() || !self.cells[c].is_active() {
                return Err(Error::Mesh(format!("cell {c} is not an active cell")));
            }
        }
        let mut mesh = self.clone();
        let mut stack: Vec<usize> = marked.iter().copied().collect::<BTreeSet<_>>().into_iter().rev().collect();
        while let Some(c) = stack.pop() {
            if !mesh.cells[c].is_active() {
                continue;
            }
            let mut needs: Vec<usize> = Side::ALL
                .iter()
                .filter_map(|&s| match mesh.neighbor(c, s) {
                    Neighbor::Coarser(n) => Some(n),
                    _ => None,
                })
                .collect();
            if patches {
                if let Some(p) = mesh.cells[c].parent {
                    let kids = mesh.cells[p].children.expect("parent has children");
                    needs.extend(kids.iter().copied().filter(|&k| k != c && mesh.cells[k].is_active()));
                }
            }
            // siblings can be refined after this cell; coarser neighbors must go first
            let coarser: Vec<usize> = needs.iter().copied().filter(|&n| mesh.cells[n].level < mesh.cells[c].level).collect();
            if coarser.is_empty() {
                mesh.split(c);
                stack.extend(needs);
            } else {
                stack.push(c);
                stack.extend(coarser);
            }
        }
        mesh.rebuild_active();
        debug_assert!(mesh.is_one_irregular());
        Ok(mesh)
    }

    /// Refines every active cell once.
    pub fn refine_uniform(&self) -> Mesh {
        self.refine(&self.active.clone()).expect("active cells")
    }

    /// True when no active cell side borders more than two active sub-edges.
    pub fn is_one_irregular(&self) -> bool {
        self.active.iter().all(|&c| {
            Side::ALL.iter().all(|&s| match self.neighbor(c, s) {
                Neighbor::Finer(kids) => kids.iter().all(|&k| self.cells[k].is_active()),
                _ => true,
            })
        })
    }

    /// True when every active cell has a parent whose four children are all active.
    pub fn has_patch_structure(&self) -> bool {
        self.active.iter().all(|&c| match self.cells[c].parent {
            None => false,
            Some(p) => self.cells[p].children.unwrap().iter().all(|&k| self.cells[k].is_active()),
        })
    }

    /// Vertices lying strictly inside a side of an active cell, with the two
    /// endpoints of that coarse side.
    pub fn hanging_nodes(&self) -> Vec<(usize, [usize; 2])> {
        let mut out = BTreeSet::new();
        for &c in &self.active {
            for s in Side::ALL {
                if let Neighbor::Finer(kids) = self.neighbor(c, s) {
                    let ends = self.side_vertices(c, s);
                    // the shared corner of the two fine cells is the midpoint
                    let a = self.side_vertices(kids[0], s.opposite());
                    let b = self.side_vertices(kids[1], s.opposite());
                    let mid = a.iter().copied().find(|v| b.contains(v)).expect("fine cells share a vertex");
                    out.insert((mid, ends));
                }
            }
        }
        out.into_iter().collect()
    }

    /// Endpoints of a cell side, ordered by increasing coordinate.
    pub fn side_vertices(&self, cell: usize, side: Side) -> [usize; 2] {
        let v = self.cells[cell].vertices;
        match side {
            Side::Left => [v[0], v[3]],
            Side::Right => [v[1], v[2]],
            Side::Bottom => [v[0], v[1]],
            Side::Top => [v[3], v[2]],
        }
    }

    /// Active cells having `vertex` as one of their corners.
    pub fn vertex_cells(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.vertices.len()];
        for &c in &self.active {
            for &v in &self.cells[c].vertices {
                out[v].push(c);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn total_area(m: &Mesh) -> f64 {
        m.active_cells().iter().map(|&c| m.cell_area(c)).sum()
    }

    /// Independent irregularity check on vertex geometry: count vertices lying
    /// strictly inside each active cell side.
    fn max_hanging_per_side(m: &Mesh) -> usize {
        let used: BTreeSet<usize> = m.active_cells().iter().flat_map(|&c| m.cell(c).vertices).collect();
        let mut worst = 0;
        for &c in m.active_cells() {
            for s in Side::ALL {
                let [a, b] = m.side_vertices(c, s);
                let (pa, pb) = (m.vertices()[a], m.vertices()[b]);
                let n = used
                    .iter()
                    .filter(|&&v| v != a && v != b)
                    .filter(|&&v| {
                        let p = m.vertices()[v];
                        let cross = (pb[0] - pa[0]) * (p[1] - pa[1]) - (pb[1] - pa[1]) * (p[0] - pa[0]);
                        let dot = (p[0] - pa[0]) * (pb[0] - pa[0]) + (p[1] - pa[1]) * (pb[1] - pa[1]);
                        let len2 = (pb[0] - pa[0]).powi(2) + (pb[1] - pa[1]).powi(2);
                        cross.abs() < 1e-14 && dot > 0.0 && dot < len2
                    })
                    .count();
                worst = worst.max(n);
            }
        }
        worst
    }

    #[test]
    fn unit_square_grid_counts() {
        let m = build_grid(&DomainSpec::unit_square(2)).unwrap();
        assert_eq!(m.n_active(), 4);
        assert_eq!(m.vertices().len(), 9);
        let m = build_grid(&DomainSpec::unit_square(1)).unwrap();
        assert_eq!(m.n_active(), 1);
        assert_eq!(m.vertices().len(), 4);
    }

    #[test]
    fn two_hole_domain_has_thirteen_cells() {
        let m = build_grid(&DomainSpec::two_holes()).unwrap();
        assert_eq!(m.n_active(), 13);
        assert!((total_area(&m) - 13.0).abs() < 1e-12);
        // hole sides are labelled as such
        let holes = m.boundary_edges().iter().filter(|e| e.2 == Boundary::Hole).count();
        assert_eq!(holes, 8);
        let left = m.boundary_edges().iter().filter(|e| e.2 == Boundary::Left).count();
        assert_eq!(left, 3);
    }

    #[test]
    fn misaligned_hole_is_rejected() {
        let mut spec = DomainSpec::two_holes();
        spec.removed_boxes[0] = [1.5, 1.0, 2.0, 2.0];
        assert!(matches!(build_grid(&spec), Err(Error::Config(_))));
        spec.removed_boxes[0] = [4.0, 1.0, 6.0, 2.0];
        assert!(build_grid(&spec).is_err());
    }

    #[test]
    fn one_corner_refinement_gives_two_hanging_nodes() {
        let m = build_grid(&DomainSpec::unit_square(2)).unwrap();
        let r = m.refine(&[0]).unwrap();
        assert_eq!(r.n_active(), 7);
        let h = r.hanging_nodes();
        assert_eq!(h.len(), 2);
        for (v, [a, b]) in h {
            let (p, pa, pb) = (r.vertices()[v], r.vertices()[a], r.vertices()[b]);
            assert!((p[0] - 0.5 * (pa[0] + pb[0])).abs() < 1e-15);
            assert!((p[1] - 0.5 * (pa[1] + pb[1])).abs() < 1e-15);
        }
    }

    #[test]
    fn uniform_refinement_has_no_hanging_nodes() {
        let m = build_grid(&DomainSpec::unit_square(3)).unwrap();
        let all: Vec<usize> = m.active_cells().to_vec();
        let r = m.refine(&all).unwrap();
        assert_eq!(r.n_active(), 36);
        assert!(r.hanging_nodes().is_empty());
    }

    #[test]
    fn repeated_corner_refinement_triggers_closure() {
        let m = build_grid(&DomainSpec::unit_square(2)).unwrap();
        let r1 = m.refine(&[0]).unwrap();
        // the child of cell 0 touching cell 1 (the right neighbor) is (1,0)
        let kid = r1.cell(0).children.unwrap()[1];
        let r2 = r1.refine(&[kid]).unwrap();
        assert!(r2.is_one_irregular());
        assert!(max_hanging_per_side(&r2) <= 1);
        // the coarse right neighbour had to be refined
        assert!(!r2.cell(1).is_active());
        // closure is idempotent: an empty refinement leaves the mesh unchanged
        let r3 = r2.refine(&[]).unwrap();
        assert_eq!(r3.n_active(), r2.n_active());
    }

    #[test]
    fn locate_descends_to_active_cell() {
        let m = build_grid(&DomainSpec::two_holes()).unwrap().refine_uniform();
        let (c, r) = m.locate([0.2, 0.2]).unwrap();
        assert!(m.cell(c).is_active());
        let (o, h) = m.cell_box(c);
        assert!((o[0] + r[0] * h[0] - 0.2).abs() < 1e-14);
        assert!((o[1] + r[1] * h[1] - 0.2).abs() < 1e-14);
        assert!(m.locate([1.5, 1.5]).is_none());
        assert!(m.locate([6.0, 0.0]).is_none());
        assert!(m.locate([5.0, 3.0]).is_some());
    }

    #[test]
    fn patch_mode_keeps_sibling_groups_complete() {
        let m = build_grid(&DomainSpec::unit_square(2)).unwrap().refine_uniform();
        assert!(m.has_patch_structure());
        let first = m.active_cells()[0];
        let r = m.refine_with(&[first], true).unwrap();
        assert!(r.has_patch_structure());
        assert!(r.is_one_irregular());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(48))]
            #[test]
            fn random_refinement_keeps_invariants(picks in proptest::collection::vec((0usize..1000, 1usize..4), 1..6)) {
                let mut m = build_grid(&DomainSpec::two_holes()).unwrap();
                let area = m.domain_area();
                for (seed, count) in picks {
                    let before = m.n_active();
                    let act = m.active_cells().to_vec();
                    let marked: Vec<usize> = (0..count).map(|i| act[(seed * 7 + i * 13) % act.len()]).collect();
                    m = m.refine(&marked).unwrap();
                    prop_assert!(m.n_active() > before);
                    prop_assert!(m.is_one_irregular());
                    prop_assert!(max_hanging_per_side(&m) <= 1);
                    prop_assert!((total_area(&m) - area).abs() <= 1e-12 * area);
                    for (id, c) in m.cells().iter().enumerate() {
                        if let Some(kids) = c.children {
                            for k in kids { prop_assert_eq!(m.cell(k).parent, Some(id)); }
                        }
                    }
                }
                let again = m.refine(&[]).unwrap();
                prop_assert_eq!(again.n_active(), m.n_active());
            }
        }
    }
}
