use std::sync::Arc;

use crate::error::{Error, Result};

use super::lagrange;
use super::space::FeSpace;

/// Coefficient vector bound to a space.
#[derive(Debug, Clone)]
pub struct FeFunction {
    pub space: Arc<FeSpace>,
    pub coeffs: Vec<f64>,
}

impl FeFunction {
    pub fn zeros(space: &Arc<FeSpace>) -> Self {
        FeFunction { space: space.clone(), coeffs: vec![0.0; space.n_dofs()] }
    }

    pub fn from_coeffs(space: &Arc<FeSpace>, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != space.n_dofs() {
            return Err(Error::SpaceMismatch);
        }
        Ok(FeFunction { space: space.clone(), coeffs })
    }

    /// Nodal interpolant of `g`, with hanging values taken from their masters.
    pub fn interpolate(space: &Arc<FeSpace>, g: impl Fn([f64; 2]) -> f64) -> Self {
        let mut coeffs: Vec<f64> = space.dof_coords().iter().map(|&p| g(p)).collect();
        space.distribute(&mut coeffs);
        FeFunction { space: space.clone(), coeffs }
    }

    /// Value and gradient at reference point `xi` of the cell at position `pos`.
    pub fn eval_cell(&self, pos: usize, xi: [f64; 2]) -> (f64, [f64; 2]) {
        let (v, g) = self.space.shape_at(pos, xi);
        let dofs = self.space.cell_dofs(pos);
        let mut val = 0.0;
        let mut grad = [0.0; 2];
        for (i, &d) in dofs.iter().enumerate() {
            let c = self.coeffs[d];
            val += c * v[i];
            grad[0] += c * g[i][0];
            grad[1] += c * g[i][1];
        }
        (val, grad)
    }

    pub fn evaluate(&self, p: [f64; 2]) -> Result<f64> {
        let (pos, xi) = self.locate(p)?;
        Ok(self.eval_cell(pos, xi).0)
    }

    pub fn evaluate_gradient(&self, p: [f64; 2]) -> Result<[f64; 2]> {
        let (pos, xi) = self.locate(p)?;
        Ok(self.eval_cell(pos, xi).1)
    }

    fn locate(&self, p: [f64; 2]) -> Result<(usize, [f64; 2])> {
        let (c, xi) = self.space.mesh().locate(p).ok_or(Error::OutsideDomain(p[0], p[1]))?;
        Ok((self.space.cell_pos(c), xi))
    }

    pub fn axpy(&mut self, a: f64, other: &FeFunction) -> Result<()> {
        if !Arc::ptr_eq(&self.space, &other.space) {
            return Err(Error::SpaceMismatch);
        }
        for (x, y) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *x += a * y;
        }
        Ok(())
    }

    /// Re-expresses this function in `target`, a space of equal or higher degree
    /// on the same mesh. Exact whenever the target contains this space.
    pub fn embed(&self, target: &Arc<FeSpace>) -> Result<FeFunction> {
        if !self.space.same_mesh(target) {
            return Err(Error::SpaceMismatch);
        }
        let k = target.degree();
        let mut coeffs = vec![0.0; target.n_dofs()];
        for pos in 0..target.n_cells() {
            for b in 0..=k {
                for a in 0..=k {
                    let xi = [a as f64 / k as f64, b as f64 / k as f64];
                    let d = target.cell_dofs(pos)[b * (k + 1) + a];
                    coeffs[d] = self.eval_cell(pos, xi).0;
                }
            }
        }
        target.distribute(&mut coeffs);
        Ok(FeFunction { space: target.clone(), coeffs })
    }
}

/// Values and physical gradients of a function at a fixed list of reference points, per cell.
pub(crate) fn values_at(f: &FeFunction, pos: usize, table: &ShapeTable) -> (Vec<f64>, Vec<[f64; 2]>) {
    let (_, h) = f.space.cell_box(pos);
    let dofs = f.space.cell_dofs(pos);
    let nq = table.vals.len();
    let mut val = vec![0.0; nq];
    let mut grad = vec![[0.0; 2]; nq];
    for q in 0..nq {
        let (v, g) = (&table.vals[q], &table.grads[q]);
        let (mut s, mut gx, mut gy) = (0.0, 0.0, 0.0);
        for (i, &d) in dofs.iter().enumerate() {
            let c = f.coeffs[d];
            s += c * v[i];
            gx += c * g[i][0];
            gy += c * g[i][1];
        }
        val[q] = s;
        grad[q] = [gx / h[0], gy / h[1]];
    }
    (val, grad)
}

/// Reference shape values and gradients of a `Q_k` element at fixed points.
#[derive(Debug, Clone)]
pub struct ShapeTable {
    pub vals: Vec<Vec<f64>>,
    pub grads: Vec<Vec<[f64; 2]>>,
}

impl ShapeTable {
    pub fn new(k: usize, points: &[[f64; 2]]) -> Self {
        let (vals, grads) = points.iter().map(|&xi| lagrange::tensor(k, xi)).unzip();
        ShapeTable { vals, grads }
    }
}
