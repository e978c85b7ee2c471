//! Partition-of-unity spaces used to localize error estimators.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::mesh::Mesh;

use super::space::FeSpace;

/// A continuous `Q_k` space (`k` in 1..=3) without Dirichlet elimination. Its
/// constrained basis functions sum to one everywhere.
#[derive(Debug, Clone)]
pub struct PuSpace {
    pub space: Arc<FeSpace>,
}

pub fn pu_basis(mesh: Arc<Mesh>, degree: usize) -> Result<PuSpace> {
    if !(1..=3).contains(&degree) {
        return Err(Error::Degree(degree));
    }
    Ok(PuSpace { space: Arc::new(FeSpace::new(mesh, degree, &[])?) })
}

impl PuSpace {
    pub fn n_functions(&self) -> usize {
        self.space.n_dofs()
    }

    /// Value at `p` of every global PU function, after expanding constraints.
    pub fn values_at(&self, p: [f64; 2]) -> Result<Vec<f64>> {
        let s = &self.space;
        let (c, xi) = s.mesh().locate(p).ok_or(Error::OutsideDomain(p[0], p[1]))?;
        let pos = s.cell_pos(c);
        let (v, _) = s.shape_at(pos, xi);
        let mut out = vec![0.0; s.n_dofs()];
        let mut buf = Vec::new();
        for (i, &d) in s.cell_dofs(pos).iter().enumerate() {
            buf.clear();
            s.expand(d, &mut buf);
            for &(m, w) in &buf {
                out[m] += w * v[i];
            }
        }
        Ok(out)
    }
}
