//! From shape derivative to deformation field: Lamé extension, elasticity
//! projection, tangential correction and the boundary gradient norm.

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::fem::assemble_system;
use crate::fem::solvers::{ConvergenceRecord, LinearSolverConfig, Method, Precond};
use crate::fem::sparse::{CsrMatrix, Dirichlet};
use crate::mesh::{p1_gradients, Mesh, VertexKind};
use crate::newton::solve_with_fallback;
use crate::shape::VertexField;

#[derive(Clone, Debug, PartialEq)]
pub struct LameField {
    pub mu_star: Vec<f64>,
    pub mu: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SaddleSolver {
    /// MINRES with a block-diagonal preconditioner.
    #[default]
    Minres,
    /// Unpreconditioned CG on the indefinite system.
    Cg,
    Direct,
}

#[derive(Clone, Debug)]
pub struct GradientConfig {
    pub mu_min: f64,
    pub mu_max: f64,
    pub projection: LinearSolverConfig,
    pub saddle: SaddleSolver,
    pub saddle_rtol: f64,
    pub saddle_max_iter: usize,
    pub exec: Execution,
}

impl Default for GradientConfig {
    fn default() -> Self {
        let mut projection = LinearSolverConfig::cg().with_rtol(1e-12);
        projection.max_iter = 20_000;
        GradientConfig {
            mu_min: 1.0,
            mu_max: 100.0,
            projection,
            saddle: SaddleSolver::Minres,
            saddle_rtol: 1e-13,
            saddle_max_iter: 50_000,
            exec: Execution::default(),
        }
    }
}

impl GradientConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu_min > 0.0 && self.mu_max >= self.mu_min && self.mu_max.is_finite()) {
            return Err(Error::param("mu_min/mu_max", format!("need 0 < mu_min <= mu_max, got {} and {}", self.mu_min, self.mu_max)));
        }
        Ok(())
    }
}

/// Discrete harmonic extension of boundary values given per boundary vertex.
pub fn harmonic_extension(mesh: &Mesh, boundary: impl Fn(usize) -> f64, cfg: &LinearSolverConfig, exec: Execution) -> Result<Vec<f64>> {
    let (_, mut a) = assemble_system(mesh, 1, 1, exec, |c| {
        let g = p1_gradients(mesh.cell_coords(c));
        let area = mesh.cell_area(c);
        let mut k = vec![0.0; 9];
        for i in 0..3 {
            for j in 0..3 {
                k[3 * i + j] = area * (g[i][0] * g[j][0] + g[i][1] * g[j][1]);
            }
        }
        (Vec::new(), k)
    });
    let bc = Dirichlet::new(mesh.boundary_vertices().into_iter().map(|v| (v, boundary(v))).collect());
    let mut b = vec![0.0; mesh.n_vertices()];
    bc.apply(&mut a, &mut b, true);
    let (x, rec) = solve_with_fallback(&a, &b, cfg)?;
    if !rec.converged {
        return Err(Error::Solver("harmonic extension did not converge".into()));
    }
    Ok(x)
}

/// Harmonic `mu*` with `mu_max` on deformable boundary vertices and `mu_min`
/// on the rest of the boundary; `mu = sqrt(mu*)`.
pub fn solve_lame_extension(mesh: &Mesh, mu_min: f64, mu_max: f64, cfg: &LinearSolverConfig, exec: Execution) -> Result<LameField> {
    if !(mu_min > 0.0 && mu_max >= mu_min) {
        return Err(Error::param("mu_min/mu_max", format!("need 0 < mu_min <= mu_max, got {mu_min} and {mu_max}")));
    }
    let kinds: Vec<VertexKind> = (0..mesh.n_vertices()).map(|v| mesh.vertex_kind(v)).collect();
    let mu_star = harmonic_extension(mesh, |v| if kinds[v] == VertexKind::Deformable { mu_max } else { mu_min }, cfg, exec)?;
    let mu = mu_star.iter().map(|m| m.max(0.0).sqrt()).collect();
    Ok(LameField { mu_star, mu })
}

fn strain(i: usize, g: [f64; 2]) -> [[f64; 2]; 2] {
    // sym(e_i g^T)
    let mut e = [[0.0; 2]; 2];
    e[i][0] += 0.5 * g[0];
    e[i][1] += 0.5 * g[1];
    e[0][i] += 0.5 * g[0];
    e[1][i] += 0.5 * g[1];
    e
}

/// `A(G, T) = int 2 mu eps(G) : eps(T)` on vertex-major dofs `2 v + i`.
pub fn elasticity_matrix(mesh: &Mesh, lame: &LameField, exec: Execution) -> CsrMatrix {
    let (_, a) = assemble_system(mesh, 2, 2, exec, |c| {
        let cell = mesh.cells()[c];
        let g = p1_gradients(mesh.cell_coords(c));
        // mu is linear on the cell and the strains are constant
        let mu = cell.iter().map(|&v| lame.mu[v]).sum::<f64>() / 3.0;
        let w = 2.0 * mu * mesh.cell_area(c);
        let mut k = vec![0.0; 36];
        for a in 0..3 {
            for i in 0..2 {
                let ea = strain(i, g[a]);
                for b in 0..3 {
                    for j in 0..2 {
                        let eb = strain(j, g[b]);
                        let s: f64 = (0..2).flat_map(|r| (0..2).map(move |s| (r, s))).map(|(r, s)| ea[r][s] * eb[r][s]).sum();
                        k[(2 * a + i) * 6 + 2 * b + j] = w * s;
                    }
                }
            }
        }
        (Vec::new(), k)
    });
    a
}

fn fixed_dirichlet(mesh: &Mesh) -> Result<Dirichlet> {
    let fixed = mesh.fixed_vertices();
    if fixed.is_empty() {
        return Err(Error::Invalid("no fixed boundary: the elasticity projection has a rigid-body null space".into()));
    }
    Ok(Dirichlet::new(fixed.iter().flat_map(|&v| [(2 * v, 0.0), (2 * v + 1, 0.0)]).collect()))
}

fn flatten(v: &[[f64; 2]]) -> Vec<f64> {
    v.iter().flat_map(|w| w.iter().copied()).collect()
}

fn unflatten(x: &[f64]) -> VertexField {
    x.chunks_exact(2).map(|c| [c[0], c[1]]).collect()
}

/// `A(v, w)` for two vertex fields.
pub fn energy_pairing(a: &CsrMatrix, v: &[[f64; 2]], w: &[[f64; 2]]) -> f64 {
    let av = a.mul(&flatten(v));
    av.iter().zip(flatten(w)).map(|(x, y)| x * y).sum()
}

/// Solve `A(G, T) = dJ(T)` for all admissible `T`.
pub fn project_gradient(mesh: &Mesh, dj: &[[f64; 2]], lame: &LameField, cfg: &GradientConfig) -> Result<(VertexField, ConvergenceRecord)> {
    if dj.len() != mesh.n_vertices() {
        return Err(Error::Dimension("shape derivative does not match the mesh".into()));
    }
    let mut a = elasticity_matrix(mesh, lame, cfg.exec);
    let mut b = flatten(dj);
    fixed_dirichlet(mesh)?.apply(&mut a, &mut b, true);
    let (x, rec) = solve_with_fallback(&a, &b, &cfg.projection)?;
    if !rec.converged {
        return Err(Error::Solver("elasticity projection did not converge".into()));
    }
    Ok((unflatten(&x), rec))
}

/// Boundary weights and normals used by the normal-force multiplier:
/// trapezoidal lumping over every boundary facet, restricted to vertices
/// that may move.
pub fn multiplier_nodes(mesh: &Mesh) -> Vec<(usize, f64, [f64; 2])> {
    mesh.lumped_normals(|_| true).into_iter().filter(|(v, _, _)| !mesh.is_fixed(*v)).collect()
}

#[derive(Clone, Debug)]
pub struct ShapeGradient {
    pub g: VertexField,
    /// Multiplier per vertex; zero off the moving boundary.
    pub f: Vec<f64>,
    pub pi: VertexField,
    pub restricted: VertexField,
    pub projection: ConvergenceRecord,
    pub saddle: ConvergenceRecord,
}

/// Solve `N(E, Pi) = 0`, `N(F, T) + A(Pi, T) = dJ(T)` with
/// `N(F, T) = int_G F T.n` lumped onto vertices.
pub fn correct_gradient(mesh: &Mesh, dj: &[[f64; 2]], lame: &LameField, cfg: &GradientConfig) -> Result<(Vec<f64>, VertexField, ConvergenceRecord)> {
    if dj.len() != mesh.n_vertices() {
        return Err(Error::Dimension("shape derivative does not match the mesh".into()));
    }
    let a = elasticity_matrix(mesh, lame, cfg.exec);
    let nodes = multiplier_nodes(mesh);
    let n = 2 * mesh.n_vertices();
    let m = nodes.len();
    let mut t: Vec<(usize, usize, f64)> = Vec::with_capacity(a.nnz() + 4 * m);
    for i in 0..n {
        let (cols, vals) = a.row(i);
        for (c, v) in cols.iter().zip(vals) {
            t.push((i, *c, *v));
        }
    }
    for (k, (v, w, nv)) in nodes.iter().enumerate() {
        for i in 0..2 {
            t.push((2 * v + i, n + k, w * nv[i]));
            t.push((n + k, 2 * v + i, w * nv[i]));
        }
        // keeps the multiplier block in the sparsity pattern
        t.push((n + k, n + k, 0.0));
    }
    let mut s = CsrMatrix::from_triplets(n + m, n + m, &t)?;
    let mut b = flatten(dj);
    b.resize(n + m, 0.0);
    fixed_dirichlet(mesh)?.apply(&mut s, &mut b, true);

    let mut lin = match cfg.saddle {
        SaddleSolver::Minres => {
            // diag(A) on displacements, a Schur-complement diagonal on multipliers
            let d = s.diagonal();
            let mut p = d[..n].to_vec();
            for (v, w, nv) in &nodes {
                let sc = (w * nv[0]).powi(2) / d[2 * v] + (w * nv[1]).powi(2) / d[2 * v + 1];
                p.push(sc);
            }
            LinearSolverConfig { method: Method::Minres, precond: Precond::Diagonal(p), ..LinearSolverConfig::default() }
        }
        SaddleSolver::Cg => LinearSolverConfig { method: Method::Cg, precond: Precond::None, ..LinearSolverConfig::default() },
        SaddleSolver::Direct => LinearSolverConfig::direct(),
    };
    lin.rtol = cfg.saddle_rtol;
    lin.max_iter = cfg.saddle_max_iter;
    let (x, rec) = solve_with_fallback(&s, &b, &lin)?;
    if !rec.converged {
        return Err(Error::Solver("gradient correction did not converge".into()));
    }
    let pi = unflatten(&x[..n]);
    let mut f = vec![0.0; mesh.n_vertices()];
    for (k, (v, _, _)) in nodes.iter().enumerate() {
        f[*v] = x[n + k];
    }
    Ok((f, pi, rec))
}

pub fn restricted_gradient(g: &[[f64; 2]], pi: &[[f64; 2]]) -> VertexField {
    g.iter().zip(pi).map(|(a, b)| [a[0] - b[0], a[1] - b[1]]).collect()
}

/// Projection, correction and restriction with the Lamé field of this mesh.
pub fn shape_gradient(mesh: &Mesh, dj: &[[f64; 2]], cfg: &GradientConfig) -> Result<ShapeGradient> {
    cfg.validate()?;
    let lame = solve_lame_extension(mesh, cfg.mu_min, cfg.mu_max, &cfg.projection, cfg.exec)?;
    let (g, projection) = project_gradient(mesh, dj, &lame, cfg)?;
    let (f, pi, saddle) = correct_gradient(mesh, dj, &lame, cfg)?;
    let restricted = restricted_gradient(&g, &pi);
    Ok(ShapeGradient { g, f, pi, restricted, projection, saddle })
}

/// Trapezoidal `int (G.n)^2` over the deformable boundary.
pub fn normal_energy(mesh: &Mesh, g: &[[f64; 2]]) -> f64 {
    mesh.lumped_normals(|f| f.deformable).into_iter().map(|(v, w, n)| w * (g[v][0] * n[0] + g[v][1] * n[1]).powi(2)).sum()
}

/// `sqrt(int_{G_d} (G.n)^2)` by the trapezoidal rule.
pub fn gradient_norm(mesh: &Mesh, g: &[[f64; 2]]) -> f64 {
    normal_energy(mesh, g).sqrt()
}

/// `int (Pi.n)^2 / int (G.n)^2` over the deformable boundary.
pub fn tangentiality(mesh: &Mesh, g: &[[f64; 2]], pi: &[[f64; 2]]) -> f64 {
    let den = normal_energy(mesh, g);
    if den == 0.0 {
        0.0
    } else {
        normal_energy(mesh, pi) / den
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::generate::{self, BendSpec, RectangleTags};
    use crate::shape::{pair, random_deformation};
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn bend() -> Mesh {
        generate::bend(BendSpec { n_across: 4, n_inlet: 2, n_arc: 5, n_outlet: 3, ..BendSpec::reference(4) }).unwrap()
    }

    fn random_dual(mesh: &Mesh, seed: u64) -> VertexField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut b: VertexField = (0..mesh.n_vertices()).map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect();
        crate::shape::restrict(mesh, &mut b);
        b
    }

    fn cfg() -> GradientConfig {
        GradientConfig::default()
    }

    #[test]
    fn constant_lame() {
        let m = bend();
        let l = solve_lame_extension(&m, 4.0, 4.0, &cfg().projection, Execution::default()).unwrap();
        assert!(l.mu_star.iter().all(|x| (x - 4.0).abs() < 1e-10));
        assert!(l.mu.iter().all(|x| (x - 2.0).abs() < 1e-10));
    }

    #[test]
    fn lame_bounds() {
        let m = bend();
        let l = solve_lame_extension(&m, 1.0, 100.0, &cfg().projection, Execution::default()).unwrap();
        assert!(l.mu_star.iter().all(|x| *x >= 1.0 - 1e-10 && *x <= 100.0 + 1e-10));
        assert!(l.mu.iter().all(|x| *x >= 1.0 - 1e-10 && *x <= 10.0 + 1e-10));
    }

    #[test]
    fn harmonic_reproduces_linear_data() {
        let m = generate::rectangle(4.0, 1.0, 16, 4, RectangleTags::channel()).unwrap();
        let x = m.vertices().to_vec();
        let h = harmonic_extension(&m, |v| 1.0 + 2.0 * x[v][1] - 0.5 * x[v][0], &cfg().projection, Execution::default()).unwrap();
        for (v, p) in x.iter().enumerate() {
            assert!((h[v] - (1.0 + 2.0 * p[1] - 0.5 * p[0])).abs() < 1e-8);
        }
    }

    #[test]
    fn projection_reproduces_the_functional() {
        let m = bend();
        let c = cfg();
        let l = solve_lame_extension(&m, c.mu_min, c.mu_max, &c.projection, c.exec).unwrap();
        let dj = random_dual(&m, 1);
        let (g, _) = project_gradient(&m, &dj, &l, &c).unwrap();
        assert!(m.fixed_vertices().iter().all(|&v| g[v] == [0.0, 0.0]));
        let a = elasticity_matrix(&m, &l, c.exec);
        for s in 0..10 {
            let t = random_deformation(&m, 100 + s, 1.0);
            let lhs = energy_pairing(&a, &g, &t);
            let rhs = pair(&dj, &t);
            assert!((lhs - rhs).abs() <= 1e-8 * rhs.abs().max(1e-12), "{lhs} {rhs}");
        }
        // descent: dJ(-G) = -A(G, G) < 0
        assert!(pair(&dj, &g) > 0.0);
        // scaling mu by 4 (mu* by 16) scales G by 1/4
        let l4 = LameField { mu_star: l.mu_star.iter().map(|x| 16.0 * x).collect(), mu: l.mu.iter().map(|x| 4.0 * x).collect() };
        let (g4, _) = project_gradient(&m, &dj, &l4, &c).unwrap();
        for (a, b) in g.iter().zip(&g4) {
            assert!((a[0] - 4.0 * b[0]).abs() < 1e-8 && (a[1] - 4.0 * b[1]).abs() < 1e-8);
        }
    }

    #[test]
    fn zero_derivative_gives_zero_fields() {
        let m = bend();
        let g = shape_gradient(&m, &vec![[0.0; 2]; m.n_vertices()], &cfg()).unwrap();
        assert!(g.g.iter().chain(&g.pi).all(|x| *x == [0.0, 0.0]));
        assert!(g.f.iter().all(|x| *x == 0.0));
    }

    #[test]
    fn correction_is_tangential_and_consistent() {
        let m = bend();
        let c = cfg();
        let dj = random_dual(&m, 2);
        let sg = shape_gradient(&m, &dj, &c).unwrap();
        let nodes = multiplier_nodes(&m);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pin: f64 = sg.pi.iter().map(|p| p[0] * p[0] + p[1] * p[1]).sum::<f64>().sqrt();
        for _ in 0..10 {
            let e: Vec<f64> = (0..nodes.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let en = e.iter().map(|x| x * x).sum::<f64>().sqrt();
            let np: f64 = nodes.iter().zip(&e).map(|((v, w, n), e)| e * w * (sg.pi[*v][0] * n[0] + sg.pi[*v][1] * n[1])).sum();
            assert!(np.abs() <= 1e-8 * en * pin);
        }
        let l = solve_lame_extension(&m, c.mu_min, c.mu_max, &c.projection, c.exec).unwrap();
        let a = elasticity_matrix(&m, &l, c.exec);
        for s in 0..10 {
            let t = random_deformation(&m, 200 + s, 1.0);
            let nft: f64 = nodes.iter().map(|(v, w, n)| sg.f[*v] * w * (t[*v][0] * n[0] + t[*v][1] * n[1])).sum();
            let lhs = nft + energy_pairing(&a, &sg.pi, &t);
            let rhs = pair(&dj, &t);
            assert!((lhs - rhs).abs() <= 1e-6 * rhs.abs(), "{lhs} {rhs}");
        }
        assert!(tangentiality(&m, &sg.g, &sg.pi) <= 1e-10);
        // G and the restricted gradient share their normal trace
        let diff = restricted_gradient(&sg.g, &sg.restricted);
        assert!(normal_energy(&m, &diff) <= 1e-10 * normal_energy(&m, &sg.g));
    }

    #[test]
    fn saddle_solvers_agree() {
        let m = bend();
        let dj = random_dual(&m, 4);
        let mut c = cfg();
        let l = solve_lame_extension(&m, c.mu_min, c.mu_max, &c.projection, c.exec).unwrap();
        let (f1, p1, _) = correct_gradient(&m, &dj, &l, &c).unwrap();
        c.saddle = SaddleSolver::Direct;
        let (f2, p2, _) = correct_gradient(&m, &dj, &l, &c).unwrap();
        let scale = p2.iter().map(|p| p[0].abs().max(p[1].abs())).fold(0.0, f64::max);
        for (a, b) in p1.iter().zip(&p2) {
            assert!((a[0] - b[0]).abs() < 1e-7 * scale && (a[1] - b[1]).abs() < 1e-7 * scale);
        }
        let fs = f2.iter().map(|x| x.abs()).fold(0.0, f64::max);
        assert!(f1.iter().zip(&f2).all(|(a, b)| (a - b).abs() < 1e-6 * fs));
    }

    #[test]
    fn norm_of_normal_field() {
        let m = generate::disk(1.0, 64, 4).unwrap();
        let mut g = vec![[0.0; 2]; m.n_vertices()];
        for (v, _, n) in m.lumped_normals(|f| f.deformable) {
            g[v] = n;
        }
        let len: f64 = (0..m.n_facets()).filter(|&f| m.facets()[f].deformable).map(|f| m.facet_length(f)).sum();
        assert!((gradient_norm(&m, &g) - len.sqrt()).abs() < 1e-12);
        let g3: VertexField = g.iter().map(|x| [-3.0 * x[0], -3.0 * x[1]]).collect();
        assert!((gradient_norm(&m, &g3) - 3.0 * len.sqrt()).abs() < 1e-12);
        let tang: VertexField = g.iter().map(|x| [-x[1], x[0]]).collect();
        assert!(gradient_norm(&m, &tang) < 1e-12);
    }

    #[test]
    fn needs_a_fixed_boundary() {
        let m = generate::disk(1.0, 16, 2).unwrap();
        let dj = vec![[1.0, 0.0]; m.n_vertices()];
        assert!(shape_gradient(&m, &dj, &cfg()).is_err());
    }
}
