//! Standard P1 weak forms assembled from descriptors.
//!
//! Symbols: `a` stiffness, `b` divergence pairing, `c` convection, `d`
//! conservative transport, `f` drag load, `g` gravity load, `h` boundary trace.

use super::quadrature::{LINE2, TRI4};
use super::{assemble_system, assemble_vector, geometry, CsrMatrix};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::mesh::{FacetTag, Mesh};

/// Bilinear form descriptors. Rows index test functions, columns trial functions.
pub enum Form<'a> {
    /// `a(k, l) = int grad k . grad l` on scalars.
    Stiffness,
    /// `a` on vector fields (componentwise).
    VectorStiffness,
    /// `int k l` on scalars.
    Mass,
    /// `b(k, l) = int l div k`: scalar test rows, vector trial columns.
    Divergence,
    /// `c(w, k, l) = int (Dk w) . l` for a given advecting field `w`.
    Convection(&'a [[f64; 2]]),
    /// `d(k, w, l) = int div(k w) l` for scalar `k` and given `w`.
    Transport(&'a [[f64; 2]]),
    /// `h(k, l) = int_G k . l` on the facets carrying the tag (vector fields).
    BoundaryMass(FacetTag),
}

/// Linear form descriptors.
pub enum LinearForm<'a> {
    /// `g(m) = int e . m` for a constant vector `e`.
    Gravity([f64; 2]),
    /// `int f l` for a P1 scalar `f`.
    Source(&'a [f64]),
    /// `f(k, l, m) = int s(|l - k|) (l - k) . m` with fluid `k`, particle `l`.
    Drag { fluid: &'a [[f64; 2]], particle: &'a [[f64; 2]], coefficient: &'a (dyn Fn(f64) -> f64 + Sync) },
}

impl Form<'_> {
    /// Name of a form symbol, rejecting unknown ones.
    pub fn check_symbol(s: &str) -> Result<&'static str> {
        Ok(match s {
            "a" => "stiffness",
            "b" => "divergence",
            "c" => "convection",
            "d" => "transport",
            "f" => "drag",
            "g" => "gravity",
            "h1" | "h2" | "h3" => "boundary trace",
            other => return Err(Error::Invalid(format!("unknown form symbol {other:?}"))),
        })
    }
}

fn check_len(mesh: &Mesh, n: usize) -> Result<()> {
    if n != mesh.n_vertices() {
        return Err(Error::Dimension(format!("coefficient has {n} values, mesh has {} vertices", mesh.n_vertices())));
    }
    Ok(())
}

pub fn assemble_form(mesh: &Mesh, form: &Form) -> Result<CsrMatrix> {
    let exec = Execution::default();
    let (rb, cb) = match form {
        Form::Stiffness | Form::Mass => (1, 1),
        Form::Transport(w) => {
            check_len(mesh, w.len())?;
            (1, 1)
        }
        Form::VectorStiffness | Form::BoundaryMass(_) => (2, 2),
        Form::Convection(w) => {
            check_len(mesh, w.len())?;
            (2, 2)
        }
        Form::Divergence => (1, 2),
    };
    if let Form::BoundaryMass(tag) = form {
        let mut m = CsrMatrix::fem_pattern(mesh, 2);
        for f in mesh.facets_with_tag(*tag) {
            let l = mesh.facet_length(f);
            let v = mesh.facets()[f].v;
            for (a, &va) in v.iter().enumerate() {
                for (b, &vb) in v.iter().enumerate() {
                    let w = if a == b { l / 3.0 } else { l / 6.0 };
                    for k in 0..2 {
                        m.add(2 * va + k, 2 * vb + k, w);
                    }
                }
            }
        }
        return Ok(m);
    }
    let (_, m) = assemble_system(mesh, rb, cb, exec, |c| {
        let cell = mesh.cells()[c];
        let geo = geometry::<f64>(&mesh.cell_coords(c).map(|p| p));
        let g = geo.grads;
        let nr = 3 * rb;
        let nc = 3 * cb;
        let mut k = vec![0.0; nr * nc];
        for q in 0..4 {
            let l = TRI4.points[q];
            let wq = TRI4.weights[q] * geo.area;
            match form {
                Form::Stiffness => {
                    for a in 0..3 {
                        for b in 0..3 {
                            k[a * nc + b] += wq * (g[a][0] * g[b][0] + g[a][1] * g[b][1]);
                        }
                    }
                }
                Form::Mass => {
                    for a in 0..3 {
                        for b in 0..3 {
                            k[a * nc + b] += wq * l[a] * l[b];
                        }
                    }
                }
                Form::VectorStiffness => {
                    for a in 0..3 {
                        for b in 0..3 {
                            let s = wq * (g[a][0] * g[b][0] + g[a][1] * g[b][1]);
                            for i in 0..2 {
                                k[(2 * a + i) * nc + 2 * b + i] += s;
                            }
                        }
                    }
                }
                Form::Divergence => {
                    for a in 0..3 {
                        for b in 0..3 {
                            for j in 0..2 {
                                k[a * nc + 2 * b + j] += wq * l[a] * g[b][j];
                            }
                        }
                    }
                }
                Form::Convection(w) => {
                    let wq_vec = interp_w(&cell, w, &l);
                    for a in 0..3 {
                        for b in 0..3 {
                            let adv = wq_vec[0] * g[b][0] + wq_vec[1] * g[b][1];
                            for i in 0..2 {
                                k[(2 * a + i) * nc + 2 * b + i] += wq * adv * l[a];
                            }
                        }
                    }
                }
                Form::Transport(w) => {
                    let wv = interp_w(&cell, w, &l);
                    let dw = super::grad_vector(&g, &cell.map(|v| w[v]));
                    let divw = dw[0][0] + dw[1][1];
                    for a in 0..3 {
                        for b in 0..3 {
                            let val = wv[0] * g[b][0] + wv[1] * g[b][1] + l[b] * divw;
                            k[a * nc + b] += wq * val * l[a];
                        }
                    }
                }
                Form::BoundaryMass(_) => unreachable!(),
            }
        }
        (Vec::new(), k)
    });
    Ok(m)
}

fn interp_w(cell: &[usize; 3], w: &[[f64; 2]], l: &[f64; 3]) -> [f64; 2] {
    let mut o = [0.0; 2];
    for a in 0..3 {
        o[0] += l[a] * w[cell[a]][0];
        o[1] += l[a] * w[cell[a]][1];
    }
    o
}

/// Assemble a load vector (`block` 2 for vector tests, 1 for scalar).
pub fn assemble_linear_form(mesh: &Mesh, form: &LinearForm) -> Result<Vec<f64>> {
    let exec = Execution::default();
    match form {
        LinearForm::Source(f) => check_len(mesh, f.len())?,
        LinearForm::Drag { fluid, particle, .. } => {
            check_len(mesh, fluid.len())?;
            check_len(mesh, particle.len())?;
        }
        LinearForm::Gravity(_) => {}
    }
    let block = if matches!(form, LinearForm::Source(_)) { 1 } else { 2 };
    Ok(assemble_vector(mesh, block, exec, |c| {
        let cell = mesh.cells()[c];
        let area = mesh.cell_area(c);
        let mut r = vec![0.0; 3 * block];
        for q in 0..4 {
            let l = TRI4.points[q];
            let wq = TRI4.weights[q] * area;
            match form {
                LinearForm::Gravity(e) => {
                    for a in 0..3 {
                        r[2 * a] += wq * e[0] * l[a];
                        r[2 * a + 1] += wq * e[1] * l[a];
                    }
                }
                LinearForm::Source(f) => {
                    let fq: f64 = (0..3).map(|a| l[a] * f[cell[a]]).sum();
                    for a in 0..3 {
                        r[a] += wq * fq * l[a];
                    }
                }
                LinearForm::Drag { fluid, particle, coefficient } => {
                    let uf = interp_w(&cell, fluid, &l);
                    let up = interp_w(&cell, particle, &l);
                    let d = [up[0] - uf[0], up[1] - uf[1]];
                    let s = coefficient(d[0].hypot(d[1]));
                    for a in 0..3 {
                        r[2 * a] += wq * s * d[0] * l[a];
                        r[2 * a + 1] += wq * s * d[1] * l[a];
                    }
                }
            }
        }
        r
    }))
}

/// Integral of a P1 scalar over facets with a tag (two-point Gauss).
pub fn boundary_integral(mesh: &Mesh, tag: FacetTag, f: impl Fn(usize, [f64; 2]) -> f64) -> f64 {
    let (s, w) = LINE2;
    let mut total = 0.0;
    for fi in mesh.facets_with_tag(tag) {
        let [a, b] = mesh.facet_coords(fi);
        let len = mesh.facet_length(fi);
        for q in 0..2 {
            let p = [a[0] + s[q] * (b[0] - a[0]), a[1] + s[q] * (b[1] - a[1])];
            total += w[q] * len * f(fi, p);
        }
    }
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::generate;

    fn single_triangle() -> Mesh {
        Mesh::new(
            vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
            vec![[0, 1, 2]],
            vec![
                ([0, 1], FacetTag::Wall, false),
                ([1, 2], FacetTag::Outflow, false),
                ([2, 0], FacetTag::Inflow, false),
            ],
        )
        .unwrap()
    }

    #[test]
    fn reference_stiffness_matrix() {
        let k = assemble_form(&single_triangle(), &Form::Stiffness).unwrap().to_dense();
        let expect = [[1.0, -0.5, -0.5], [-0.5, 0.5, 0.0], [-0.5, 0.0, 0.5]];
        for i in 0..3 {
            for j in 0..3 {
                assert!((k[i][j] - expect[i][j]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn divergence_of_linear_field() {
        // b(u, 1) with u = (x, 0) over the unit square equals |Omega|
        let m = generate::rectangle(1.0, 1.0, 3, 3, generate::RectangleTags::channel()).unwrap();
        let b = assemble_form(&m, &Form::Divergence).unwrap();
        let mut u = vec![0.0; 2 * m.n_vertices()];
        for (v, p) in m.vertices().iter().enumerate() {
            u[2 * v] = p[0];
        }
        let s: f64 = b.mul(&u).iter().sum();
        assert!((s - 1.0).abs() < 1e-13);
    }

    #[test]
    fn gravity_load_integrates_area() {
        let m = generate::rectangle(2.0, 1.0, 4, 2, generate::RectangleTags::channel()).unwrap();
        let g = assemble_linear_form(&m, &LinearForm::Gravity([0.0, -1.0])).unwrap();
        let sy: f64 = g.iter().skip(1).step_by(2).sum();
        assert!((sy + 2.0).abs() < 1e-13);
    }

    #[test]
    fn convection_matches_naive_loop() {
        let m = generate::rectangle(1.0, 1.0, 3, 2, generate::RectangleTags::channel()).unwrap();
        let w: Vec<[f64; 2]> = m.vertices().iter().map(|p| [1.0 + p[1], p[0] * p[1]]).collect();
        let c = assemble_form(&m, &Form::Convection(&w)).unwrap();
        let k: Vec<[f64; 2]> = m.vertices().iter().map(|p| [p[0] * p[0], p[1] - p[0]]).collect();
        let l: Vec<[f64; 2]> = m.vertices().iter().map(|p| [p[1], 1.0 + p[0]]).collect();
        let kf: Vec<f64> = k.iter().flat_map(|x| *x).collect();
        let lf: Vec<f64> = l.iter().flat_map(|x| *x).collect();
        let via_matrix: f64 = c.mul(&kf).iter().zip(&lf).map(|(a, b)| a * b).sum();
        // naive: per cell, per quadrature point, (Dk w) . l
        let mut naive = 0.0;
        for ci in 0..m.n_cells() {
            let cell = m.cells()[ci];
            let geo = geometry::<f64>(&m.cell_coords(ci));
            let dk = super::super::grad_vector(&geo.grads, &cell.map(|v| k[v]));
            for q in 0..4 {
                let p = TRI4.points[q];
                let wv = interp_w(&cell, &w, &p);
                let lv = interp_w(&cell, &l, &p);
                let adv = [dk[0][0] * wv[0] + dk[0][1] * wv[1], dk[1][0] * wv[0] + dk[1][1] * wv[1]];
                naive += TRI4.weights[q] * geo.area * (adv[0] * lv[0] + adv[1] * lv[1]);
            }
        }
        assert!((via_matrix - naive).abs() < 1e-12);
    }

    #[test]
    fn unknown_symbol_and_mismatch_rejected() {
        assert!(Form::check_symbol("z").is_err());
        assert!(Form::check_symbol("h2").is_ok());
        let m = single_triangle();
        let w = vec![[0.0; 2]; 5];
        assert!(assemble_form(&m, &Form::Convection(&w)).is_err());
    }

    #[test]
    fn poisson_1d_midpoint() {
        // -u'' = 1 on a thin strip with u = 0 at x = 0 and x = 2: u(1) = 0.5
        let m = generate::rectangle(2.0, 0.1, 40, 1, generate::RectangleTags::channel()).unwrap();
        let mut a = assemble_form(&m, &Form::Stiffness).unwrap();
        let ones = vec![1.0; m.n_vertices()];
        let mut b = assemble_linear_form(&m, &LinearForm::Source(&ones)).unwrap();
        let fixed: Vec<(usize, f64)> = (0..m.n_vertices())
            .filter(|&v| m.vertices()[v][0] == 0.0 || m.vertices()[v][0] == 2.0)
            .map(|v| (v, 0.0))
            .collect();
        super::super::Dirichlet::new(fixed).apply(&mut a, &mut b, true);
        let (u, _) = super::super::solvers::solve(&a, &b, None, &super::super::solvers::LinearSolverConfig::cg().with_rtol(1e-12)).unwrap();
        let mid = (0..m.n_vertices()).find(|&v| (m.vertices()[v][0] - 1.0).abs() < 1e-12).unwrap();
        assert!((u[mid] - 0.5).abs() < 1e-10);
    }
}
