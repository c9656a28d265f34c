//! Discrete adjoint of the stabilised forward system, solved in the order
//! volume fraction, particle velocity, flow.
//!
//! Galerkin parts are assembled from the integrated-by-parts adjoint forms;
//! stabilisation parts are transposed element Jacobians of the forward
//! kernels, so every adjoint operator is the exact transpose of the forward
//! linearisation on the free dofs.

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::fem::quadrature::{LINE2, TRI4};
use crate::fem::solvers::{ConvergenceRecord, LinearSolverConfig};
use crate::fem::{assemble_system, assemble_vector, cell_coords, geometry, grad_scalar, grad_vector, interp, interp_vec, CsrMatrix};
use crate::flow::{fluid_dirichlet, fluid_system, FlowState};
use crate::forward::ForwardState;
use crate::kernels::{fluid_local, jacobian, lift_vec, particle_local, transport_local, FluidCoeffs, ParticleCoeffs, Part, TransportCoeffs};
use crate::mesh::{FacetTag, Mesh};
use crate::newton::solve_with_fallback;
use crate::params::PhysicalParams;
use crate::particle::{drag_terms, particle_dirichlet, particle_fluid_coupling, particle_system, transport_dirichlet, transport_particle_coupling, transport_system, Partition};
use crate::erosion::{erosion_state_gradient, ErosionParams};
use crate::ad::Dual;

#[derive(Clone, Debug, PartialEq)]
pub struct AdjointState {
    pub z_uf: Vec<[f64; 2]>,
    pub z_p: Vec<f64>,
    pub z_up: Vec<[f64; 2]>,
    pub z_alpha: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct AdjointOptions {
    pub linear: LinearSolverConfig,
    pub exec: Execution,
}

impl Default for AdjointOptions {
    fn default() -> Self {
        AdjointOptions { linear: LinearSolverConfig::default().with_rtol(1e-12), exec: Execution::default() }
    }
}

fn cell_vec(f: &[[f64; 2]], cell: &[usize; 3]) -> [[f64; 2]; 3] {
    cell.map(|v| f[v])
}

fn flat6(v: &[[f64; 2]; 3]) -> [f64; 6] {
    [v[0][0], v[0][1], v[1][0], v[1][1], v[2][0], v[2][1]]
}

/// Add `(u.n) N_a N_b` facet mass terms (two-point Gauss, exact for P1 cubics)
/// on the selected facets to a matrix with `block` identical components.
fn add_outflow_mass(a: &mut CsrMatrix, mesh: &Mesh, u: &[[f64; 2]], block: usize, comps: usize, select: impl Fn(usize) -> bool) {
    let (s, w) = LINE2;
    for f in 0..mesh.n_facets() {
        if !select(f) {
            continue;
        }
        let v = mesh.facets()[f].v;
        let n = mesh.facet_normal(f);
        let l = mesh.facet_length(f);
        let mut m = [[0.0; 2]; 2];
        for q in 0..2 {
            let phi = [1.0 - s[q], s[q]];
            let uq = [phi[0] * u[v[0]][0] + phi[1] * u[v[1]][0], phi[0] * u[v[0]][1] + phi[1] * u[v[1]][1]];
            let un = uq[0] * n[0] + uq[1] * n[1];
            for i in 0..2 {
                for j in 0..2 {
                    m[i][j] += w[q] * l * un * phi[i] * phi[j];
                }
            }
        }
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..comps {
                    a.add(block * v[i] + k, block * v[j] + k, m[i][j]);
                }
            }
        }
    }
}

/// Adjoint volume-fraction operator: `-(u_p . grad z) phi + eps grad z . grad phi`
/// plus `(u_p . n) z phi` on `Gamma+`, plus transposed SUPG.
pub fn transport_adjoint_matrix(mesh: &Mesh, up: &[[f64; 2]], partition: &Partition, c: &TransportCoeffs, exec: Execution) -> CsrMatrix {
    let (_, mut a) = assemble_system(mesh, 1, 1, exec, |ci| {
        let cell = mesh.cells()[ci];
        let x = mesh.cell_coords(ci);
        let u = cell_vec(up, &cell);
        let geo = geometry(&x);
        let g = geo.grads;
        let mut m = vec![0.0; 9];
        for q in 0..4 {
            let l = &TRI4.points[q];
            let w = geo.area * TRI4.weights[q];
            let uq = interp_vec(l, &u);
            for a in 0..3 {
                for b in 0..3 {
                    let adv = uq[0] * g[b][0] + uq[1] * g[b][1];
                    let dif = g[a][0] * g[b][0] + g[a][1] * g[b][1];
                    m[3 * a + b] += w * (-adv * l[a] + c.eps * dif);
                }
            }
        }
        let xc = cell_coords(mesh, ci);
        let upc = lift_vec(&u);
        let (_, js) = jacobian(&[0.0; 3], |ad| transport_local(&xc, ad, &upc, c, Part::Stabilization));
        for a in 0..3 {
            for b in 0..3 {
                m[3 * a + b] += js[3 * b + a];
            }
        }
        (Vec::new(), m)
    });
    add_outflow_mass(&mut a, mesh, up, 1, 1, |f| !partition.is_minus(f));
    a
}

/// Local `d/du_p [d (u_p - u_f)_j]_i` at a point.
fn drag_jacobian(uf: [f64; 2], up: [f64; 2], re_scale: f64) -> ([[f64; 2]; 2], [[f64; 2]; 2]) {
    // (wrt u_p, wrt u_f), indexed [i][j]
    let mut dp = [[0.0; 2]; 2];
    let mut df = [[0.0; 2]; 2];
    for j in 0..2 {
        let mut z = [0.0; 2];
        z[j] = 1.0;
        let (f, p) = drag_terms(uf, up, z, re_scale);
        for i in 0..2 {
            dp[i][j] = p[i];
            df[i][j] = f[i];
        }
    }
    (dp, df)
}

/// Adjoint particle-momentum operator.
pub fn particle_adjoint_matrix(mesh: &Mesh, up: &[[f64; 2]], uf: &[[f64; 2]], c: &ParticleCoeffs, exec: Execution) -> CsrMatrix {
    let (_, mut a) = assemble_system(mesh, 2, 2, exec, |ci| {
        let cell = mesh.cells()[ci];
        let x = mesh.cell_coords(ci);
        let u = cell_vec(up, &cell);
        let f = cell_vec(uf, &cell);
        let geo = geometry(&x);
        let g = geo.grads;
        let du = grad_vector(&g, &u);
        let div = du[0][0] + du[1][1];
        let mut m = vec![0.0; 36];
        for q in 0..4 {
            let l = &TRI4.points[q];
            let w = geo.area * TRI4.weights[q];
            let uq = interp_vec(l, &u);
            let fq = interp_vec(l, &f);
            let (dp, _) = drag_jacobian(fq, uq, c.drag_re_scale);
            for a in 0..3 {
                for b in 0..3 {
                    let nn = l[a] * l[b];
                    let adv = uq[0] * g[b][0] + uq[1] * g[b][1];
                    let dif = g[a][0] * g[b][0] + g[a][1] * g[b][1];
                    for i in 0..2 {
                        for j in 0..2 {
                            let mut v = nn * du[j][i] + c.two_over_stk * dp[i][j] * nn;
                            if i == j {
                                v += -l[a] * adv - div * nn + c.kinv * dif;
                            }
                            m[(2 * a + i) * 6 + 2 * b + j] += w * v;
                        }
                    }
                }
            }
        }
        let xc = cell_coords(mesh, ci);
        let ufc = lift_vec(&f);
        let (_, js) = jacobian(&flat6(&u), |sd| particle_local(&xc, sd, &ufc, c, Part::Stabilization));
        for r in 0..6 {
            for k in 0..6 {
                m[r * 6 + k] += js[k * 6 + r];
            }
        }
        (Vec::new(), m)
    });
    add_outflow_mass(&mut a, mesh, up, 2, 2, |f| mesh.facets()[f].tag != FacetTag::Inflow);
    a
}

/// Adjoint flow operator (velocity and pressure interleaved per vertex).
pub fn fluid_adjoint_matrix(mesh: &Mesh, flow: &FlowState, c: &FluidCoeffs, exec: Execution) -> CsrMatrix {
    let (_, mut a) = assemble_system(mesh, 3, 3, exec, |ci| {
        let cell = mesh.cells()[ci];
        let x = mesh.cell_coords(ci);
        let u = cell_vec(&flow.u, &cell);
        let geo = geometry(&x);
        let g = geo.grads;
        let du = grad_vector(&g, &u);
        let div = du[0][0] + du[1][1];
        let mut m = vec![0.0; 81];
        for q in 0..4 {
            let l = &TRI4.points[q];
            let w = geo.area * TRI4.weights[q];
            let uq = interp_vec(l, &u);
            for a in 0..3 {
                for b in 0..3 {
                    let nn = l[a] * l[b];
                    let adv = uq[0] * g[b][0] + uq[1] * g[b][1];
                    let dif = g[a][0] * g[b][0] + g[a][1] * g[b][1];
                    for i in 0..2 {
                        for j in 0..2 {
                            let mut v = c.conv * nn * du[j][i];
                            if i == j {
                                v += c.conv * (-l[a] * adv - div * nn) + c.nu * dif;
                            }
                            m[(3 * a + i) * 9 + 3 * b + j] += w * v;
                        }
                        // z_p div phi and -phi_p div z
                        m[(3 * a + i) * 9 + 3 * b + 2] += w * l[b] * g[a][i];
                        m[(3 * a + 2) * 9 + 3 * b + i] -= w * l[a] * g[b][i];
                    }
                }
            }
        }
        let xc = cell_coords(mesh, ci);
        let mut s = [0.0; 9];
        for a in 0..3 {
            s[3 * a] = u[a][0];
            s[3 * a + 1] = u[a][1];
            s[3 * a + 2] = flow.p[cell[a]];
        }
        let (_, js) = jacobian(&s, |sd| fluid_local(&xc, sd, c, Part::Stabilization));
        for r in 0..9 {
            for k in 0..9 {
                m[r * 9 + k] += js[k * 9 + r];
            }
        }
        (Vec::new(), m)
    });
    if c.conv != 0.0 {
        let scaled: Vec<[f64; 2]> = flow.u.iter().map(|v| [c.conv * v[0], c.conv * v[1]]).collect();
        add_outflow_mass(&mut a, mesh, &scaled, 3, 2, |f| mesh.facets()[f].tag == FacetTag::Outflow);
    }
    a
}

/// `(dR_alpha / du_p)^T z_alpha`: Galerkin part `int div(alpha phi) z_alpha`
/// plus transposed SUPG coupling.
pub fn transport_to_particle(mesh: &Mesh, alpha: &[f64], up: &[[f64; 2]], z_alpha: &[f64], c: &TransportCoeffs, exec: Execution, part: Part) -> Vec<f64> {
    assemble_vector(mesh, 2, exec, |ci| {
        let cell = mesh.cells()[ci];
        let x = mesh.cell_coords(ci);
        let al = cell.map(|v| alpha[v]);
        let z = cell.map(|v| z_alpha[v]);
        let mut r = vec![0.0; 6];
        if part != Part::Stabilization {
            let geo = geometry(&x);
            let g = geo.grads;
            let ga = grad_scalar(&g, &al);
            for q in 0..4 {
                let l = &TRI4.points[q];
                let w = geo.area * TRI4.weights[q];
                let aq = interp(l, &al);
                let zq = interp(l, &z);
                for b in 0..3 {
                    for j in 0..2 {
                        r[2 * b + j] += w * (l[b] * ga[j] + aq * g[b][j]) * zq;
                    }
                }
            }
        }
        if part != Part::Galerkin {
            let xc = cell_coords(mesh, ci);
            let ald = al.map(Dual::<6>::constant);
            let s = flat6(&cell_vec(up, &cell));
            let upd = [0, 1, 2].map(|a| [Dual::var(s[2 * a], 2 * a), Dual::var(s[2 * a + 1], 2 * a + 1)]);
            let res = transport_local(&xc, &ald, &upd, c, Part::Stabilization);
            for (a, ra) in res.iter().enumerate() {
                for k in 0..6 {
                    r[k] += ra.d[k] * z[a];
                }
            }
        }
        r
    })
}

/// `(dR_p / du_f)^T z_up`: Galerkin drag part `2/Stk int (dd/du_f) . phi`
/// plus transposed SUPG coupling.
pub fn particle_to_fluid(mesh: &Mesh, up: &[[f64; 2]], uf: &[[f64; 2]], z_up: &[[f64; 2]], c: &ParticleCoeffs, exec: Execution, part: Part) -> Vec<f64> {
    assemble_vector(mesh, 2, exec, |ci| {
        let cell = mesh.cells()[ci];
        let x = mesh.cell_coords(ci);
        let u = cell_vec(up, &cell);
        let f = cell_vec(uf, &cell);
        let z = cell_vec(z_up, &cell);
        let mut r = vec![0.0; 6];
        if part != Part::Stabilization {
            let geo = geometry(&x);
            for q in 0..4 {
                let l = &TRI4.points[q];
                let w = geo.area * TRI4.weights[q];
                let (df, _) = drag_terms(interp_vec(l, &f), interp_vec(l, &u), interp_vec(l, &z), c.drag_re_scale);
                for b in 0..3 {
                    for j in 0..2 {
                        r[2 * b + j] += w * c.two_over_stk * df[j] * l[b];
                    }
                }
            }
        }
        if part != Part::Galerkin {
            let xc = cell_coords(mesh, ci);
            let sp = flat6(&u).map(Dual::<6>::constant);
            let fd = [0, 1, 2].map(|a| [Dual::var(f[a][0], 2 * a), Dual::var(f[a][1], 2 * a + 1)]);
            let res = particle_local(&xc, &sp, &fd, c, Part::Stabilization);
            let zf = flat6(&z);
            for (rr, ra) in res.iter().enumerate() {
                for k in 0..6 {
                    r[k] += ra.d[k] * zf[rr];
                }
            }
        }
        r
    })
}

#[derive(Clone, Debug, Default)]
pub struct AdjointReport {
    pub transport: Option<ConvergenceRecord>,
    pub particle: Option<ConvergenceRecord>,
    pub flow: Option<ConvergenceRecord>,
}

/// Staged adjoint solver; each stage needs the previous one.
pub struct AdjointSolver<'a> {
    mesh: &'a Mesh,
    state: &'a ForwardState,
    params: &'a PhysicalParams,
    eparams: &'a ErosionParams,
    opts: AdjointOptions,
    z_alpha: Option<Vec<f64>>,
    z_up: Option<Vec<[f64; 2]>>,
    pub report: AdjointReport,
}

fn solve_system(mut a: CsrMatrix, mut rhs: Vec<f64>, bc: &crate::fem::Dirichlet, cfg: &LinearSolverConfig) -> Result<(Vec<f64>, ConvergenceRecord)> {
    bc.apply_homogeneous(&mut a, &mut rhs);
    if rhs.iter().all(|v| *v == 0.0) {
        return Ok((rhs, ConvergenceRecord { converged: true, ..Default::default() }));
    }
    let (x, rec) = solve_with_fallback(&a, &rhs, cfg)?;
    if !x.iter().all(|v| v.is_finite()) {
        return Err(Error::Solver("adjoint solve produced non-finite values".into()));
    }
    Ok((x, rec))
}

impl<'a> AdjointSolver<'a> {
    pub fn new(mesh: &'a Mesh, state: &'a ForwardState, params: &'a PhysicalParams, eparams: &'a ErosionParams, opts: AdjointOptions) -> Result<Self> {
        let n = mesh.n_vertices();
        if state.up.len() != n || state.alpha.len() != n || state.flow.u.len() != n || state.partition.minus.len() != mesh.n_facets() {
            return Err(Error::Dimension("forward state does not match the mesh".into()));
        }
        Ok(AdjointSolver { mesh, state, params, eparams, opts, z_alpha: None, z_up: None, report: AdjointReport::default() })
    }

    pub fn solve_transport(&mut self) -> Result<&[f64]> {
        let (ga, _) = erosion_state_gradient(self.mesh, &self.state.up, &self.state.alpha, self.eparams);
        let c = TransportCoeffs::new(self.params);
        let a = transport_adjoint_matrix(self.mesh, &self.state.up, &self.state.partition, &c, self.opts.exec);
        let rhs: Vec<f64> = ga.iter().map(|v| -v).collect();
        let bc = transport_dirichlet(self.mesh, &self.state.partition, 0.0);
        let (z, rec) = solve_system(a, rhs, &bc, &self.opts.linear)?;
        self.report.transport = Some(rec);
        self.z_up = None;
        Ok(self.z_alpha.insert(z))
    }

    pub fn solve_particle(&mut self) -> Result<&[[f64; 2]]> {
        let z_alpha = self
            .z_alpha
            .as_ref()
            .ok_or_else(|| Error::Invalid("adjoint particle velocity requested before the adjoint volume fraction".into()))?;
        let (_, gu) = erosion_state_gradient(self.mesh, &self.state.up, &self.state.alpha, self.eparams);
        let tc = TransportCoeffs::new(self.params);
        let cross = transport_to_particle(self.mesh, &self.state.alpha, &self.state.up, z_alpha, &tc, self.opts.exec, Part::Full);
        let rhs: Vec<f64> = gu.iter().flat_map(|g| *g).zip(&cross).map(|(g, x)| -g - x).collect();
        let c = ParticleCoeffs::new(self.params);
        let a = particle_adjoint_matrix(self.mesh, &self.state.up, &self.state.flow.u, &c, self.opts.exec);
        let bc = particle_dirichlet(self.mesh, self.params)?;
        let (z, rec) = solve_system(a, rhs, &bc, &self.opts.linear)?;
        self.report.particle = Some(rec);
        Ok(self.z_up.insert(z.chunks(2).map(|c| [c[0], c[1]]).collect()))
    }

    pub fn solve_flow(&mut self) -> Result<AdjointState> {
        let z_up = self
            .z_up
            .as_ref()
            .ok_or_else(|| Error::Invalid("adjoint flow requested before the adjoint particle velocity".into()))?;
        let pc = ParticleCoeffs::new(self.params);
        let cross = particle_to_fluid(self.mesh, &self.state.up, &self.state.flow.u, z_up, &pc, self.opts.exec, Part::Full);
        let n = self.mesh.n_vertices();
        let mut rhs = vec![0.0; 3 * n];
        for v in 0..n {
            rhs[3 * v] = -cross[2 * v];
            rhs[3 * v + 1] = -cross[2 * v + 1];
        }
        let c = FluidCoeffs::new(self.params);
        let a = fluid_adjoint_matrix(self.mesh, &self.state.flow, &c, self.opts.exec);
        let bc = fluid_dirichlet(self.mesh, self.params)?;
        let (z, rec) = solve_system(a, rhs, &bc, &self.opts.linear)?;
        self.report.flow = Some(rec);
        let zf = FlowState::unpack(&z);
        Ok(AdjointState {
            z_uf: zf.u,
            z_p: zf.p,
            z_up: z_up.clone(),
            z_alpha: self.z_alpha.clone().unwrap_or_default(),
        })
    }
}

/// All three adjoint stages in order.
pub fn solve_adjoint(
    mesh: &Mesh,
    state: &ForwardState,
    params: &PhysicalParams,
    eparams: &ErosionParams,
    opts: &AdjointOptions,
) -> Result<(AdjointState, AdjointReport)> {
    let mut s = AdjointSolver::new(mesh, state, params, eparams, opts.clone())?;
    s.solve_transport()?;
    s.solve_particle()?;
    let z = s.solve_flow()?;
    Ok((z, s.report))
}

/// Largest entrywise differences between each adjoint operator and the
/// transposed forward linearisation, on the free dofs. The coupling entries
/// compare the matrix-free products against explicit transposes applied to
/// a fixed test vector.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TransposeDefects {
    pub transport: f64,
    pub particle: f64,
    pub fluid: f64,
    pub transport_coupling: f64,
    pub particle_coupling: f64,
    /// Largest entry of the forward matrices, for scale.
    pub scale: f64,
    pub max_dofs: usize,
}

impl TransposeDefects {
    pub fn max(&self) -> f64 {
        [self.transport, self.particle, self.fluid, self.transport_coupling, self.particle_coupling].into_iter().fold(0.0, f64::max)
    }
}

pub fn transpose_defects(mesh: &Mesh, state: &ForwardState, params: &PhysicalParams, exec: Execution) -> Result<TransposeDefects> {
    let n = mesh.n_vertices();
    let s = state;
    let tc = TransportCoeffs::new(params);
    let fwd_t = transport_system(mesh, &tc, &s.alpha, &s.up, exec, Part::Full).1.transpose();
    let adj = transport_adjoint_matrix(mesh, &s.up, &s.partition, &tc, exec);
    let free = transport_dirichlet(mesh, &s.partition, 0.0).free_dofs(n);
    let transport = adj.submatrix(&free, &free).max_abs_diff(&fwd_t.submatrix(&free, &free));

    let pc = ParticleCoeffs::new(params);
    let x: Vec<f64> = s.up.iter().flat_map(|v| *v).collect();
    let fwd_p = particle_system(mesh, &pc, &x, &s.flow.u, exec, Part::Full).1.transpose();
    let adj = particle_adjoint_matrix(mesh, &s.up, &s.flow.u, &pc, exec);
    let free = particle_dirichlet(mesh, params)?.free_dofs(2 * n);
    let particle = adj.submatrix(&free, &free).max_abs_diff(&fwd_p.submatrix(&free, &free));

    let fc = FluidCoeffs::new(params);
    let fwd_f = fluid_system(mesh, &fc, &s.flow.pack(), exec, Part::Full).1.transpose();
    let adj = fluid_adjoint_matrix(mesh, &s.flow, &fc, exec);
    let free = fluid_dirichlet(mesh, params)?.free_dofs(3 * n);
    let fluid = adj.submatrix(&free, &free).max_abs_diff(&fwd_f.submatrix(&free, &free));

    let diff = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let z: Vec<f64> = (0..n).map(|v| (v as f64 * 0.37).sin()).collect();
    let jac = transport_particle_coupling(mesh, &tc, &s.alpha, &s.up, exec, Part::Full);
    let transport_coupling = diff(&jac.transpose().mul(&z), &transport_to_particle(mesh, &s.alpha, &s.up, &z, &tc, exec, Part::Full));
    let zu: Vec<[f64; 2]> = (0..n).map(|v| [(v as f64).cos(), (v as f64 * 0.5).sin()]).collect();
    let jac = particle_fluid_coupling(mesh, &pc, &s.up, &s.flow.u, exec, Part::Full);
    let want = jac.transpose().mul(&zu.iter().flat_map(|v| *v).collect::<Vec<_>>());
    let particle_coupling = diff(&want, &particle_to_fluid(mesh, &s.up, &s.flow.u, &zu, &pc, exec, Part::Full));

    Ok(TransposeDefects {
        transport,
        particle,
        fluid,
        transport_coupling,
        particle_coupling,
        scale: [fwd_t.max_abs(), fwd_p.max_abs(), fwd_f.max_abs()].into_iter().fold(0.0, f64::max),
        max_dofs: 3 * n,
    })
}
