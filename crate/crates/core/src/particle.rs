//! Eulerian particle phase: momentum with Schiller-Naumann drag and the
//! volume-fraction transport equation.

use crate::ad::Dual;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::fem::quadrature::LINE2;
use crate::fem::{assemble_system, assemble_vector, cell_coords, CsrMatrix, Dirichlet};
use crate::flow::{inflow_profile, tagged_vertices, FlowState};
use crate::kernels::{jacobian, lift_vec, particle_local, transport_local, ParticleCoeffs, Part, TransportCoeffs, MIN_SLIP};
use crate::mesh::{FacetTag, Mesh};
use crate::newton::{newton, NewtonOptions, NewtonReport};
use crate::params::PhysicalParams;

/// Particle Reynolds number of the slip `u_p - u_f`.
pub fn particle_reynolds(u_p: [f64; 2], u_f: [f64; 2], params: &PhysicalParams) -> f64 {
    params.drag_re_scale * (u_p[0] - u_f[0]).hypot(u_p[1] - u_f[1])
}

/// Schiller-Naumann correction `1 + 0.15 Re_p^0.687`.
pub fn drag_coefficient(re_p: f64) -> Result<f64> {
    if !(re_p >= 0.0) || !re_p.is_finite() {
        return Err(Error::Invalid(format!("particle Reynolds number must be finite and nonnegative, got {re_p}")));
    }
    Ok(1.0 + 0.15 * re_p.powf(0.687))
}

/// Partial derivatives of `d(u_f, u_p) (u_p - u_f) . z` with respect to `u_f`
/// and `u_p`; the second is the negative of the first.
pub fn drag_sensitivity_terms(u_f: [f64; 2], u_p: [f64; 2], z: [f64; 2], params: &PhysicalParams) -> ([f64; 2], [f64; 2]) {
    drag_terms(u_f, u_p, z, params.drag_re_scale)
}

pub(crate) fn drag_terms(u_f: [f64; 2], u_p: [f64; 2], z: [f64; 2], c: f64) -> ([f64; 2], [f64; 2]) {
    let slip = [u_p[0] - u_f[0], u_p[1] - u_f[1]];
    let s = (slip[0] * slip[0] + slip[1] * slip[1]).sqrt();
    let (d, dd_duf) = if s < MIN_SLIP {
        (1.0 + 0.15 * (c * MIN_SLIP).powf(0.687), [0.0; 2])
    } else {
        let k = 0.10305 * c.powf(0.687) / s.powf(1.313);
        (1.0 + 0.15 * (c * s).powf(0.687), [-k * slip[0], -k * slip[1]])
    };
    let sz = slip[0] * z[0] + slip[1] * z[1];
    let df = [sz * dd_duf[0] - d * z[0], sz * dd_duf[1] - d * z[1]];
    (df, [-df[0], -df[1]])
}

#[derive(Clone, Debug)]
pub struct ParticleOptions {
    pub newton: NewtonOptions,
    pub exec: Execution,
    /// First artificial viscosity of the continuation.
    pub ramp_start: f64,
    pub ramp_factor: f64,
}

impl Default for ParticleOptions {
    fn default() -> Self {
        ParticleOptions { newton: NewtonOptions::default(), exec: Execution::default(), ramp_start: 1e-2, ramp_factor: 10.0 }
    }
}

/// Decreasing viscosity levels ending at `1/K`.
pub fn viscosity_ramp(params: &PhysicalParams, opts: &ParticleOptions) -> Vec<f64> {
    let target = 1.0 / params.k;
    let mut levels = Vec::new();
    let mut k = opts.ramp_start;
    while k > target * (1.0 + 1e-12) {
        levels.push(k);
        k /= opts.ramp_factor.max(1.0 + 1e-9);
    }
    levels.push(target);
    levels
}

/// Inflow profile imposed on the inflow vertices (walls are natural).
pub fn particle_dirichlet(mesh: &Mesh, params: &PhysicalParams) -> Result<Dirichlet> {
    let uin = inflow_profile(mesh, params.inflow_mean)?;
    let mut pairs = Vec::new();
    for v in tagged_vertices(mesh, FacetTag::Inflow) {
        pairs.push((2 * v, uin[v][0]));
        pairs.push((2 * v + 1, uin[v][1]));
    }
    Ok(Dirichlet::new(pairs))
}

fn local2(x: &[f64], cell: &[usize; 3]) -> [f64; 6] {
    let mut s = [0.0; 6];
    for (a, &v) in cell.iter().enumerate() {
        s[2 * a] = x[2 * v];
        s[2 * a + 1] = x[2 * v + 1];
    }
    s
}

fn cell_vec(f: &[[f64; 2]], cell: &[usize; 3]) -> [[f64; 2]; 3] {
    cell.map(|v| f[v])
}

pub fn flatten(v: &[[f64; 2]]) -> Vec<f64> {
    v.iter().flat_map(|x| *x).collect()
}

pub fn unflatten(x: &[f64]) -> Vec<[f64; 2]> {
    x.chunks(2).map(|c| [c[0], c[1]]).collect()
}

pub fn particle_residual(mesh: &Mesh, c: &ParticleCoeffs, x: &[f64], uf: &[[f64; 2]], exec: Execution, part: Part) -> Vec<f64> {
    assemble_vector(mesh, 2, exec, |ci| {
        let cell = mesh.cells()[ci];
        particle_local(&mesh.cell_coords(ci), &local2(x, &cell), &cell_vec(uf, &cell), c, part).to_vec()
    })
}

pub fn particle_system(mesh: &Mesh, c: &ParticleCoeffs, x: &[f64], uf: &[[f64; 2]], exec: Execution, part: Part) -> (Vec<f64>, CsrMatrix) {
    assemble_system(mesh, 2, 2, exec, |ci| {
        let cell = mesh.cells()[ci];
        let xc = cell_coords(mesh, ci);
        let ufc = lift_vec(&cell_vec(uf, &cell));
        jacobian(&local2(x, &cell), |sd| particle_local(&xc, sd, &ufc, c, part))
    })
}

/// Jacobian of the particle residual with respect to the fluid velocity
/// (rows: particle dofs, columns: fluid velocity dofs in blocks of two).
pub fn particle_fluid_coupling(mesh: &Mesh, c: &ParticleCoeffs, up: &[[f64; 2]], uf: &[[f64; 2]], exec: Execution, part: Part) -> CsrMatrix {
    assemble_system(mesh, 2, 2, exec, |ci| {
        let cell = mesh.cells()[ci];
        let xc = cell_coords(mesh, ci);
        let upc: [[Dual<6>; 2]; 3] = lift_vec(&cell_vec(up, &cell));
        let s = [0, 1, 2].map(|a| uf[cell[a]]);
        let ufd = [0, 1, 2].map(|a| [Dual::var(s[a][0], 2 * a), Dual::var(s[a][1], 2 * a + 1)]);
        let sp = [upc[0][0], upc[0][1], upc[1][0], upc[1][1], upc[2][0], upc[2][1]];
        let r = particle_local(&xc, &sp, &ufd, c, part);
        (r.iter().map(|x| x.v).collect(), r.iter().flat_map(|x| x.d).collect())
    })
    .1
}

/// Continuation in the artificial viscosity with Newton solves at each level.
pub fn solve_particle_velocity(
    mesh: &Mesh,
    flow: &FlowState,
    params: &PhysicalParams,
    opts: &ParticleOptions,
) -> Result<(Vec<[f64; 2]>, NewtonReport)> {
    params.validate()?;
    if flow.u.len() != mesh.n_vertices() {
        return Err(Error::Dimension("fluid field does not match the mesh".into()));
    }
    let bc = particle_dirichlet(mesh, params)?;
    let mut x = flatten(&flow.u);
    for (&d, &v) in bc.dofs.iter().zip(&bc.values) {
        x[d] = v;
    }
    let mut last = NewtonReport::default();
    for kinv in viscosity_ramp(params, opts) {
        let c = ParticleCoeffs { kinv, ..ParticleCoeffs::new(params) };
        let (xn, rep) = newton(
            x,
            &bc,
            |s| particle_system(mesh, &c, s, &flow.u, opts.exec, Part::Full),
            |s| particle_residual(mesh, &c, s, &flow.u, opts.exec, Part::Full),
            &opts.newton,
            "particle velocity",
        )?;
        x = xn;
        last = rep;
    }
    Ok((unflatten(&x), last))
}

/// Facet-wise split into `Gamma-` (`u_p . n <= 0` at the midpoint) and `Gamma+`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Partition {
    pub minus: Vec<bool>,
}

impl Partition {
    pub fn is_minus(&self, f: usize) -> bool {
        self.minus[f]
    }
    pub fn count_changes(&self, other: &Partition) -> usize {
        self.minus.iter().zip(&other.minus).filter(|(a, b)| a != b).count()
    }
}

pub fn classify_boundary(mesh: &Mesh, up: &[[f64; 2]]) -> Result<Partition> {
    if up.len() != mesh.n_vertices() {
        return Err(Error::Dimension("particle velocity does not match the mesh".into()));
    }
    let minus = (0..mesh.n_facets())
        .map(|f| {
            let [a, b] = mesh.facets()[f].v;
            let n = mesh.facet_normal(f);
            let um = [0.5 * (up[a][0] + up[b][0]), 0.5 * (up[a][1] + up[b][1])];
            um[0] * n[0] + um[1] * n[1] <= 0.0
        })
        .collect();
    Ok(Partition { minus })
}

/// `alpha_in` on inflow vertices, zero on other vertices of `Gamma-` facets.
pub fn transport_dirichlet(mesh: &Mesh, partition: &Partition, alpha_in: f64) -> Dirichlet {
    let inflow = tagged_vertices(mesh, FacetTag::Inflow);
    let mut pairs: Vec<(usize, f64)> = inflow.iter().map(|&v| (v, alpha_in)).collect();
    for f in 0..mesh.n_facets() {
        if partition.is_minus(f) {
            for v in mesh.facets()[f].v {
                if !inflow.contains(&v) {
                    pairs.push((v, 0.0));
                }
            }
        }
    }
    Dirichlet::new(pairs)
}

pub fn transport_residual(mesh: &Mesh, c: &TransportCoeffs, alpha: &[f64], up: &[[f64; 2]], exec: Execution, part: Part) -> Vec<f64> {
    assemble_vector(mesh, 1, exec, |ci| {
        let cell = mesh.cells()[ci];
        transport_local(&mesh.cell_coords(ci), &cell.map(|v| alpha[v]), &cell_vec(up, &cell), c, part).to_vec()
    })
}

pub fn transport_system(mesh: &Mesh, c: &TransportCoeffs, alpha: &[f64], up: &[[f64; 2]], exec: Execution, part: Part) -> (Vec<f64>, CsrMatrix) {
    assemble_system(mesh, 1, 1, exec, |ci| {
        let cell = mesh.cells()[ci];
        let xc = cell_coords(mesh, ci);
        let upc = lift_vec(&cell_vec(up, &cell));
        jacobian(&cell.map(|v| alpha[v]), |ad| transport_local(&xc, ad, &upc, c, part))
    })
}

/// Jacobian of the transport residual with respect to the particle velocity.
pub fn transport_particle_coupling(mesh: &Mesh, c: &TransportCoeffs, alpha: &[f64], up: &[[f64; 2]], exec: Execution, part: Part) -> CsrMatrix {
    assemble_system(mesh, 1, 2, exec, |ci| {
        let cell = mesh.cells()[ci];
        let xc = cell_coords(mesh, ci);
        let al = cell.map(|v| Dual::<6>::constant(alpha[v]));
        let upd = [0, 1, 2].map(|a| [Dual::var(up[cell[a]][0], 2 * a), Dual::var(up[cell[a]][1], 2 * a + 1)]);
        let r = transport_local(&xc, &al, &upd, c, part);
        (r.iter().map(|x| x.v).collect(), r.iter().flat_map(|x| x.d).collect())
    })
    .1
}

pub fn solve_volume_fraction(
    mesh: &Mesh,
    up: &[[f64; 2]],
    partition: &Partition,
    params: &PhysicalParams,
    opts: &ParticleOptions,
) -> Result<(Vec<f64>, NewtonReport)> {
    if up.len() != mesh.n_vertices() || partition.minus.len() != mesh.n_facets() {
        return Err(Error::Dimension("particle velocity or partition does not match the mesh".into()));
    }
    let bc = transport_dirichlet(mesh, partition, params.alpha_in);
    let mut x = vec![0.0; mesh.n_vertices()];
    for (&d, &v) in bc.dofs.iter().zip(&bc.values) {
        x[d] = v;
    }
    let c = TransportCoeffs::new(params);
    newton(
        x,
        &bc,
        |s| transport_system(mesh, &c, s, up, opts.exec, Part::Full),
        |s| transport_residual(mesh, &c, s, up, opts.exec, Part::Full),
        &opts.newton,
        "volume fraction",
    )
}

/// `int alpha u_p . n` over facets with a tag (two-point Gauss, exact for P1 products).
pub fn particle_flux(mesh: &Mesh, alpha: &[f64], up: &[[f64; 2]], tag: FacetTag) -> f64 {
    let (s, w) = LINE2;
    mesh.facets_with_tag(tag)
        .map(|f| {
            let [a, b] = mesh.facets()[f].v;
            let n = mesh.facet_normal(f);
            let l = mesh.facet_length(f);
            (0..2)
                .map(|q| {
                    let t = s[q];
                    let al = (1.0 - t) * alpha[a] + t * alpha[b];
                    let u = [(1.0 - t) * up[a][0] + t * up[b][0], (1.0 - t) * up[a][1] + t * up[b][1]];
                    w[q] * l * al * (u[0] * n[0] + u[1] * n[1])
                })
                .sum::<f64>()
        })
        .sum()
}
