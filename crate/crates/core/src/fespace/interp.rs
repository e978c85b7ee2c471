//! Higher-order interpolation on patches of four sibling cells.

use std::sync::Arc;

use crate::error::{Error, Result};

use super::function::FeFunction;
use super::lagrange;
use super::space::FeSpace;

/// Interpolates `f` (degree `k`) into `Q_{2k}` patch-wise: on every parent cell
/// whose four children are active, the degree-`2k` tensor interpolant through
/// the `(2k+1)^2` nodal values of `f` on the patch. The result is represented on
/// the same mesh as `f` and is continuous.
pub fn interpolate_patch(f: &FeFunction) -> Result<FeFunction> {
    let src = &f.space;
    let mesh = src.mesh().clone();
    if !mesh.has_patch_structure() {
        return Err(Error::PatchStructureMissing);
    }
    let k = src.degree();
    let kk = 2 * k;
    let target = Arc::new(FeSpace::build(mesh.clone(), kk, &[])?);
    let mut coeffs = vec![f64::NAN; target.n_dofs()];

    let mut order: Vec<usize> = (0..target.n_cells()).collect();
    order.sort_by_key(|&p| (mesh.cell(target.cell_id(p)).level, p));
    for pos in order {
        let parent = mesh.cell(target.cell_id(pos)).parent.expect("patch structure");
        let kids = mesh.cell(parent).children.expect("parent has children");
        // nodal values of f on the patch lattice
        let n = kk + 1;
        let mut vals = vec![0.0; n * n];
        for bb in 0..n {
            for aa in 0..n {
                let (cx, a) = if aa < k { (0, aa) } else { (1, aa - k) };
                let (cy, b) = if bb < k { (0, bb) } else { (1, bb - k) };
                let kid = kids[cy * 2 + cx];
                let d = src.cell_dofs(src.cell_pos(kid))[b * (k + 1) + a];
                vals[bb * n + aa] = f.coeffs[d];
            }
        }
        let (po, ph) = mesh.cell_box(parent);
        for &d in target.cell_dofs(pos) {
            if !coeffs[d].is_nan() || target.constraint(d).is_some() {
                continue;
            }
            let p = target.dof_coords()[d];
            let xi = [(p[0] - po[0]) / ph[0], (p[1] - po[1]) / ph[1]];
            let (bx, by) = (lagrange::basis_1d(kk, xi[0]), lagrange::basis_1d(kk, xi[1]));
            let mut s = 0.0;
            for bb in 0..n {
                for aa in 0..n {
                    s += vals[bb * n + aa] * bx[aa] * by[bb];
                }
            }
            coeffs[d] = s;
        }
    }
    for c in coeffs.iter_mut() {
        if c.is_nan() {
            *c = 0.0;
        }
    }
    target.distribute(&mut coeffs);
    FeFunction::from_coeffs(&target, coeffs)
}
