//! Legacy ASCII VTK output of vertex fields and boundary facet data.

use std::fmt::Write as _;
use std::path::Path;

use super::Mesh;
use crate::error::{Error, Result};

pub enum VtkField<'a> {
    Scalar(&'a str, &'a [f64]),
    Vector(&'a str, &'a [[f64; 2]]),
}

impl VtkField<'_> {
    fn len(&self) -> usize {
        match self {
            VtkField::Scalar(_, v) => v.len(),
            VtkField::Vector(_, v) => v.len(),
        }
    }
    fn write(&self, s: &mut String) {
        match self {
            VtkField::Scalar(name, v) => {
                let _ = writeln!(s, "SCALARS {name} double 1\nLOOKUP_TABLE default");
                for x in v.iter() {
                    let _ = writeln!(s, "{x:e}");
                }
            }
            VtkField::Vector(name, v) => {
                let _ = writeln!(s, "VECTORS {name} double");
                for x in v.iter() {
                    let _ = writeln!(s, "{:e} {:e} 0", x[0], x[1]);
                }
            }
        }
    }
}

/// Unstructured grid of the cells with vertex data.
pub fn volume_string(mesh: &Mesh, point_data: &[VtkField]) -> Result<String> {
    let mut s = String::from("# vtk DataFile Version 3.0\neroopt volume\nASCII\nDATASET UNSTRUCTURED_GRID\n");
    write_points(mesh, &mut s);
    let _ = writeln!(s, "CELLS {} {}", mesh.n_cells(), 4 * mesh.n_cells());
    for c in mesh.cells() {
        let _ = writeln!(s, "3 {} {} {}", c[0], c[1], c[2]);
    }
    let _ = writeln!(s, "CELL_TYPES {}", mesh.n_cells());
    for _ in 0..mesh.n_cells() {
        s.push_str("5\n");
    }
    write_data(&mut s, "POINT_DATA", mesh.n_vertices(), point_data)?;
    Ok(s)
}

/// Boundary facets as line cells with per-facet data.
pub fn boundary_string(mesh: &Mesh, facet_data: &[VtkField]) -> Result<String> {
    let mut s = String::from("# vtk DataFile Version 3.0\neroopt boundary\nASCII\nDATASET UNSTRUCTURED_GRID\n");
    write_points(mesh, &mut s);
    let _ = writeln!(s, "CELLS {} {}", mesh.n_facets(), 3 * mesh.n_facets());
    for f in mesh.facets() {
        let _ = writeln!(s, "2 {} {}", f.v[0], f.v[1]);
    }
    let _ = writeln!(s, "CELL_TYPES {}", mesh.n_facets());
    for _ in 0..mesh.n_facets() {
        s.push_str("3\n");
    }
    write_data(&mut s, "CELL_DATA", mesh.n_facets(), facet_data)?;
    Ok(s)
}

pub fn write_volume(mesh: &Mesh, point_data: &[VtkField], path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, volume_string(mesh, point_data)?)?;
    Ok(())
}

pub fn write_boundary(mesh: &Mesh, facet_data: &[VtkField], path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, boundary_string(mesh, facet_data)?)?;
    Ok(())
}

fn write_points(mesh: &Mesh, s: &mut String) {
    let _ = writeln!(s, "POINTS {} double", mesh.n_vertices());
    for p in mesh.vertices() {
        let _ = writeln!(s, "{:e} {:e} 0", p[0], p[1]);
    }
}

fn write_data(s: &mut String, section: &str, n: usize, data: &[VtkField]) -> Result<()> {
    if data.is_empty() {
        return Ok(());
    }
    let _ = writeln!(s, "{section} {n}");
    for f in data {
        if f.len() != n {
            return Err(Error::Dimension(format!("VTK field has {} values, expected {n}", f.len())));
        }
        f.write(s);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::generate;

    #[test]
    fn volume_file_has_expected_sections() {
        let m = generate::channel(1.0, 1.0, 2, 2).unwrap();
        let a = vec![1.0; m.n_vertices()];
        let s = volume_string(&m, &[VtkField::Scalar("alpha", &a)]).unwrap();
        assert!(s.contains("CELLS 8 32"));
        assert!(s.contains("POINT_DATA 9"));
        let bad = vec![1.0; 3];
        assert!(volume_string(&m, &[VtkField::Scalar("x", &bad)]).is_err());
    }
}
