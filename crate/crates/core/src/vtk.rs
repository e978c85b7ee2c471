//! Legacy ASCII VTK output: unstructured grid of quads (cell type 9).

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use crate::fespace::FeFunction;
use crate::mesh::Mesh;

/// A mesh with named point and cell fields.
#[derive(Debug, Clone)]
pub struct VtkWriter<'a> {
    mesh: &'a Mesh,
    point: Vec<(String, Vec<f64>)>,
    cell: Vec<(String, Vec<f64>)>,
}

impl<'a> VtkWriter<'a> {
    pub fn new(mesh: &'a Mesh) -> Self {
        VtkWriter { mesh, point: Vec::new(), cell: Vec::new() }
    }

    /// Adds `f` sampled at the mesh vertices.
    pub fn point_field(&mut self, name: &str, f: &FeFunction) -> &mut Self {
        let vals = self
            .mesh
            .vertices()
            .iter()
            .map(|&p| f.evaluate(p).unwrap_or(f64::NAN))
            .collect();
        self.point.push((sanitize(name), vals));
        self
    }

    /// Adds one value per active cell, in active-cell order.
    pub fn cell_field(&mut self, name: &str, vals: &[f64]) -> &mut Self {
        assert_eq!(vals.len(), self.mesh.n_active());
        self.cell.push((sanitize(name), vals.to_vec()));
        self
    }

    pub fn render(&self, title: &str) -> String {
        let m = self.mesh;
        let mut s = String::new();
        let _ = writeln!(s, "# vtk DataFile Version 3.0\n{}\nASCII\nDATASET UNSTRUCTURED_GRID", title.replace('\n', " "));
        let _ = writeln!(s, "POINTS {} double", m.vertices().len());
        for v in m.vertices() {
            let _ = writeln!(s, "{:.16e} {:.16e} 0", v[0], v[1]);
        }
        let nc = m.n_active();
        let _ = writeln!(s, "CELLS {} {}", nc, 5 * nc);
        for &c in m.active_cells() {
            let v = m.cell(c).vertices;
            let _ = writeln!(s, "4 {} {} {} {}", v[0], v[1], v[2], v[3]);
        }
        let _ = writeln!(s, "CELL_TYPES {nc}");
        for _ in 0..nc {
            s.push_str("9\n");
        }
        if !self.point.is_empty() {
            let _ = writeln!(s, "POINT_DATA {}", m.vertices().len());
            for (name, vals) in &self.point {
                scalars(&mut s, name, vals);
            }
        }
        if !self.cell.is_empty() {
            let _ = writeln!(s, "CELL_DATA {nc}");
            for (name, vals) in &self.cell {
                scalars(&mut s, name, vals);
            }
        }
        s
    }

    pub fn write(&self, path: &Path, title: &str) -> std::io::Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(self.render(title).as_bytes())
    }
}

fn scalars(s: &mut String, name: &str, vals: &[f64]) {
    let _ = writeln!(s, "SCALARS {name} double 1\nLOOKUP_TABLE default");
    for v in vals {
        let _ = writeln!(s, "{v:.16e}");
    }
}

fn sanitize(name: &str) -> String {
    name.chars().map(|c| if c.is_ascii_alphanumeric() || c == '_' { c } else { '_' }).collect()
}
