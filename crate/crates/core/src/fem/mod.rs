//! P1 finite element infrastructure: element geometry, assembly, forms and
//! linear solvers.

pub mod forms;
pub mod quadrature;
pub mod solvers;
pub mod sparse;

use crate::ad::Real;
use crate::exec::{map_range, Execution};
use crate::mesh::Mesh;
pub use sparse::{CsrMatrix, Dirichlet};

/// Barycentric gradients and area of a triangle.
#[derive(Clone, Copy, Debug)]
pub struct Geometry<T> {
    pub grads: [[T; 2]; 3],
    pub area: T,
}

pub fn geometry<T: Real>(x: &[[T; 2]; 3]) -> Geometry<T> {
    let j00 = x[1][0] - x[0][0];
    let j01 = x[2][0] - x[0][0];
    let j10 = x[1][1] - x[0][1];
    let j11 = x[2][1] - x[0][1];
    let det = j00 * j11 - j01 * j10;
    let inv = det.recip();
    let g1 = [j11 * inv, -j01 * inv];
    let g2 = [-j10 * inv, j00 * inv];
    let g0 = [-g1[0] - g2[0], -g1[1] - g2[1]];
    Geometry { grads: [g0, g1, g2], area: det * 0.5 }
}

/// Cell vertex coordinates lifted to `T`.
pub fn cell_coords<T: Real>(mesh: &Mesh, c: usize) -> [[T; 2]; 3] {
    mesh.cell_coords(c).map(|p| p.map(T::cst))
}

/// Global dof indices of a cell, vertex-major with `block` components.
pub fn cell_dofs(cell: &[usize; 3], block: usize) -> Vec<usize> {
    let mut d = Vec::with_capacity(3 * block);
    for &v in cell {
        for k in 0..block {
            d.push(v * block + k);
        }
    }
    d
}

/// Rectangular P1 coupling pattern with `rb` row and `cb` column components per vertex.
pub fn coupling_pattern(mesh: &Mesh, rb: usize, cb: usize) -> CsrMatrix {
    if rb == cb {
        return CsrMatrix::fem_pattern(mesh, rb);
    }
    let nv = mesh.n_vertices();
    let mut adj: Vec<Vec<usize>> = (0..nv).map(|v| vec![v]).collect();
    for c in mesh.cells() {
        for &a in c {
            adj[a].extend_from_slice(c);
        }
    }
    let mut rows = Vec::with_capacity(nv * rb);
    for a in adj.iter_mut() {
        a.sort_unstable();
        a.dedup();
        let cols: Vec<usize> = a.iter().flat_map(|&b| (0..cb).map(move |k| b * cb + k)).collect();
        for _ in 0..rb {
            rows.push(cols.clone());
        }
    }
    CsrMatrix::from_pattern(nv * cb, rows)
}

/// Sum per-cell vectors into a global vector of `block` components per vertex.
pub fn assemble_vector<F>(mesh: &Mesh, block: usize, exec: Execution, local: F) -> Vec<f64>
where
    F: Fn(usize) -> Vec<f64> + Sync + Send,
{
    let parts = map_range(exec, mesh.n_cells(), local);
    let mut out = vec![0.0; mesh.n_vertices() * block];
    for (c, r) in parts.into_iter().enumerate() {
        for (k, d) in cell_dofs(&mesh.cells()[c], block).into_iter().enumerate() {
            out[d] += r[k];
        }
    }
    out
}

/// Sum per-cell residuals and row-major local matrices (`3 rb x 3 cb`).
pub fn assemble_system<F>(mesh: &Mesh, rb: usize, cb: usize, exec: Execution, local: F) -> (Vec<f64>, CsrMatrix)
where
    F: Fn(usize) -> (Vec<f64>, Vec<f64>) + Sync + Send,
{
    let parts = map_range(exec, mesh.n_cells(), local);
    let mut mat = coupling_pattern(mesh, rb, cb);
    let mut res = vec![0.0; mesh.n_vertices() * rb];
    let nc = 3 * cb;
    for (c, (r, m)) in parts.into_iter().enumerate() {
        let cell = &mesh.cells()[c];
        let rows = cell_dofs(cell, rb);
        let cols = cell_dofs(cell, cb);
        for (i, &gi) in rows.iter().enumerate() {
            if !r.is_empty() {
                res[gi] += r[i];
            }
            for (j, &gj) in cols.iter().enumerate() {
                let v = m[i * nc + j];
                if v != 0.0 {
                    mat.add(gi, gj, v);
                }
            }
        }
    }
    (res, mat)
}

/// Sum per-cell gradients with respect to vertex coordinates into a nodal field.
pub fn assemble_coordinate_vector<F>(mesh: &Mesh, exec: Execution, local: F) -> Vec<[f64; 2]>
where
    F: Fn(usize) -> [f64; 6] + Sync + Send,
{
    let parts = map_range(exec, mesh.n_cells(), local);
    let mut out = vec![[0.0; 2]; mesh.n_vertices()];
    for (c, g) in parts.into_iter().enumerate() {
        for (a, &v) in mesh.cells()[c].iter().enumerate() {
            out[v][0] += g[2 * a];
            out[v][1] += g[2 * a + 1];
        }
    }
    out
}

/// Value of a P1 field at barycentric point `l`.
#[inline]
pub fn interp<T: Real>(l: &[f64; 3], v: &[T; 3]) -> T {
    v[0] * l[0] + v[1] * l[1] + v[2] * l[2]
}

#[inline]
pub fn interp_vec<T: Real>(l: &[f64; 3], v: &[[T; 2]; 3]) -> [T; 2] {
    [
        v[0][0] * l[0] + v[1][0] * l[1] + v[2][0] * l[2],
        v[0][1] * l[0] + v[1][1] * l[1] + v[2][1] * l[2],
    ]
}

/// Gradient of a scalar P1 field.
#[inline]
pub fn grad_scalar<T: Real>(g: &[[T; 2]; 3], v: &[T; 3]) -> [T; 2] {
    [
        v[0] * g[0][0] + v[1] * g[1][0] + v[2] * g[2][0],
        v[0] * g[0][1] + v[1] * g[1][1] + v[2] * g[2][1],
    ]
}

/// Jacobian `D[i][j] = d_j v_i` of a vector P1 field.
#[inline]
pub fn grad_vector<T: Real>(g: &[[T; 2]; 3], v: &[[T; 2]; 3]) -> [[T; 2]; 2] {
    let mut d = [[T::zero(); 2]; 2];
    for a in 0..3 {
        for i in 0..2 {
            for j in 0..2 {
                d[i][j] += v[a][i] * g[a][j];
            }
        }
    }
    d
}

/// Gather a scalar field on a cell.
pub fn gather<T: Real>(cell: &[usize; 3], f: &[f64]) -> [T; 3] {
    cell.map(|v| T::cst(f[v]))
}

pub fn gather_vec<T: Real>(cell: &[usize; 3], f: &[[f64; 2]]) -> [[T; 2]; 3] {
    cell.map(|v| f[v].map(T::cst))
}

/// `L2` norm of `f_h - f` with the seven-point rule.
pub fn l2_error_vec(mesh: &Mesh, fh: &[[f64; 2]], exact: impl Fn([f64; 2]) -> [f64; 2]) -> f64 {
    let rule = &quadrature::TRI7;
    let mut s = 0.0;
    for c in 0..mesh.n_cells() {
        let x = mesh.cell_coords(c);
        let area = mesh.cell_area(c);
        let v = gather_vec::<f64>(&mesh.cells()[c], fh);
        for q in 0..7 {
            let l = &rule.points[q];
            let p = interp_vec(l, &x);
            let uh = interp_vec(l, &v);
            let ue = exact(p);
            s += rule.weights[q] * area * ((uh[0] - ue[0]).powi(2) + (uh[1] - ue[1]).powi(2));
        }
    }
    s.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ad::Dual;

    #[test]
    fn reference_triangle_geometry() {
        let g = geometry::<f64>(&[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]);
        assert_eq!(g.area, 0.5);
        assert_eq!(g.grads, [[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]]);
    }

    #[test]
    fn geometry_derivative_matches_finite_difference() {
        let x = [[0.1, 0.2], [1.3, 0.1], [0.4, 0.9]];
        let mut xd = [[Dual::<6>::constant(0.0); 2]; 3];
        for a in 0..3 {
            for i in 0..2 {
                xd[a][i] = Dual::var(x[a][i], 2 * a + i);
            }
        }
        let g = geometry(&xd);
        let h = 1e-7;
        for k in 0..6 {
            let mut xp = x;
            let mut xm = x;
            xp[k / 2][k % 2] += h;
            xm[k / 2][k % 2] -= h;
            let (gp, gm) = (geometry::<f64>(&xp), geometry::<f64>(&xm));
            assert!(((gp.area - gm.area) / (2.0 * h) - g.area.d[k]).abs() < 1e-7);
            let fd = (gp.grads[1][0] - gm.grads[1][0]) / (2.0 * h);
            assert!((fd - g.grads[1][0].d[k]).abs() < 1e-6);
        }
    }
}
