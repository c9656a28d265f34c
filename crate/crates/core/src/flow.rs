//! Steady incompressible Navier-Stokes with P1/P1 elements and SUPG/PSPG/LSIC
//! stabilisation.
//!
//! Boundary conditions: parabolic velocity on the inflow, no-slip on walls,
//! do-nothing on the outflow.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::fem::{assemble_system, assemble_vector, cell_coords, CsrMatrix, Dirichlet};
use crate::kernels::{fluid_local, jacobian, FluidCoeffs, Part};
use crate::mesh::{FacetTag, Mesh};
use crate::newton::{newton, NewtonOptions, NewtonReport};
use crate::params::PhysicalParams;

#[derive(Clone, Debug, PartialEq)]
pub struct FlowState {
    pub u: Vec<[f64; 2]>,
    pub p: Vec<f64>,
}

impl FlowState {
    pub fn zeros(n: usize) -> Self {
        FlowState { u: vec![[0.0; 2]; n], p: vec![0.0; n] }
    }

    /// Interleaved `[u, v, p]` per vertex.
    pub fn pack(&self) -> Vec<f64> {
        self.u.iter().zip(&self.p).flat_map(|(u, p)| [u[0], u[1], *p]).collect()
    }

    pub fn unpack(x: &[f64]) -> Self {
        let n = x.len() / 3;
        FlowState {
            u: (0..n).map(|v| [x[3 * v], x[3 * v + 1]]).collect(),
            p: (0..n).map(|v| x[3 * v + 2]).collect(),
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct FlowOptions {
    pub newton: NewtonOptions,
    pub exec: Execution,
}

/// Vertices of facets carrying a tag.
pub fn tagged_vertices(mesh: &Mesh, tag: FacetTag) -> BTreeSet<usize> {
    mesh.facets_with_tag(tag).flat_map(|f| mesh.facets()[f].v).collect()
}

/// Parabolic inflow `6 m s (1 - s)` along the inward normal of the (straight)
/// inflow segment, zero elsewhere.
pub fn inflow_profile(mesh: &Mesh, mean_speed: f64) -> Result<Vec<[f64; 2]>> {
    let facets: Vec<usize> = mesh.facets_with_tag(FacetTag::Inflow).collect();
    if facets.is_empty() {
        return Err(Error::Mesh("mesh has no inflow facets".into()));
    }
    let mut count = std::collections::HashMap::new();
    let mut normal = [0.0; 2];
    for &f in &facets {
        for v in mesh.facets()[f].v {
            *count.entry(v).or_insert(0) += 1;
        }
        let n = mesh.facet_normal(f);
        let l = mesh.facet_length(f);
        normal[0] += l * n[0];
        normal[1] += l * n[1];
    }
    let ends: Vec<usize> = count.iter().filter(|(_, &c)| c == 1).map(|(&v, _)| v).collect();
    if ends.len() != 2 {
        return Err(Error::Mesh("inflow boundary must be a single open segment".into()));
    }
    let nn = normal[0].hypot(normal[1]);
    let n = [normal[0] / nn, normal[1] / nn];
    let (a, b) = (mesh.vertices()[ends[0].min(ends[1])], mesh.vertices()[ends[0].max(ends[1])]);
    let d = [b[0] - a[0], b[1] - a[1]];
    let dd = d[0] * d[0] + d[1] * d[1];
    let mut u = vec![[0.0; 2]; mesh.n_vertices()];
    for &v in count.keys() {
        let x = mesh.vertices()[v];
        let s = ((x[0] - a[0]) * d[0] + (x[1] - a[1]) * d[1]) / dd;
        let s = s.clamp(0.0, 1.0);
        let mag = 6.0 * mean_speed * s * (1.0 - s);
        u[v] = [-mag * n[0], -mag * n[1]];
    }
    Ok(u)
}

/// No-slip on walls (taking precedence at corners) and the inflow profile.
pub fn fluid_dirichlet(mesh: &Mesh, params: &PhysicalParams) -> Result<Dirichlet> {
    let uin = inflow_profile(mesh, params.inflow_mean)?;
    let wall = tagged_vertices(mesh, FacetTag::Wall);
    let mut pairs = Vec::new();
    for &v in &wall {
        pairs.push((3 * v, 0.0));
        pairs.push((3 * v + 1, 0.0));
    }
    for v in tagged_vertices(mesh, FacetTag::Inflow) {
        if !wall.contains(&v) {
            pairs.push((3 * v, uin[v][0]));
            pairs.push((3 * v + 1, uin[v][1]));
        }
    }
    Ok(Dirichlet::new(pairs))
}

fn local_state(x: &[f64], cell: &[usize; 3]) -> [f64; 9] {
    let mut s = [0.0; 9];
    for (a, &v) in cell.iter().enumerate() {
        s[3 * a..3 * a + 3].copy_from_slice(&x[3 * v..3 * v + 3]);
    }
    s
}

pub fn fluid_residual(mesh: &Mesh, c: &FluidCoeffs, x: &[f64], exec: Execution, part: Part) -> Vec<f64> {
    assemble_vector(mesh, 3, exec, |ci| {
        let s = local_state(x, &mesh.cells()[ci]);
        fluid_local(&mesh.cell_coords(ci), &s, c, part).to_vec()
    })
}

/// Residual and exact Jacobian of the selected part.
pub fn fluid_system(mesh: &Mesh, c: &FluidCoeffs, x: &[f64], exec: Execution, part: Part) -> (Vec<f64>, CsrMatrix) {
    assemble_system(mesh, 3, 3, exec, |ci| {
        let s = local_state(x, &mesh.cells()[ci]);
        let xc = cell_coords(mesh, ci);
        jacobian(&s, |sd| fluid_local(&xc, sd, c, part))
    })
}

/// Stokes initial guess followed by Newton's method on the full problem.
pub fn solve_flow(mesh: &Mesh, params: &PhysicalParams, opts: &FlowOptions) -> Result<(FlowState, NewtonReport)> {
    params.validate()?;
    let bc = fluid_dirichlet(mesh, params)?;
    let mut x = vec![0.0; 3 * mesh.n_vertices()];
    for (&d, &v) in bc.dofs.iter().zip(&bc.values) {
        x[d] = v;
    }
    let exec = opts.exec;
    let stokes = FluidCoeffs { conv: 0.0, ..FluidCoeffs::new(params) };
    let (x, _) = newton(
        x,
        &bc,
        |s| fluid_system(mesh, &stokes, s, exec, Part::Full),
        |s| fluid_residual(mesh, &stokes, s, exec, Part::Full),
        &opts.newton,
        "Stokes",
    )?;
    let full = FluidCoeffs::new(params);
    let (x, rep) = newton(
        x,
        &bc,
        |s| fluid_system(mesh, &full, s, exec, Part::Full),
        |s| fluid_residual(mesh, &full, s, exec, Part::Full),
        &opts.newton,
        "Navier-Stokes",
    )?;
    Ok((FlowState::unpack(&x), rep))
}

/// Flux `int u . n` over facets with a tag (exact for P1).
pub fn boundary_flux(mesh: &Mesh, u: &[[f64; 2]], tag: FacetTag) -> f64 {
    mesh.facets_with_tag(tag)
        .map(|f| {
            let n = mesh.facet_normal(f);
            let [a, b] = mesh.facets()[f].v;
            let um = [0.5 * (u[a][0] + u[b][0]), 0.5 * (u[a][1] + u[b][1])];
            mesh.facet_length(f) * (um[0] * n[0] + um[1] * n[1])
        })
        .sum()
}

/// `|| u_h - u ||_L2` with a degree-5 rule.
pub fn l2_velocity_error(mesh: &Mesh, u: &[[f64; 2]], exact: impl Fn([f64; 2]) -> [f64; 2]) -> f64 {
    let rule = &crate::fem::quadrature::TRI7;
    let mut sum = 0.0;
    for c in 0..mesh.n_cells() {
        let x = mesh.cell_coords(c);
        let cell = mesh.cells()[c];
        let area = mesh.cell_area(c);
        for (l, w) in rule.points.iter().zip(rule.weights) {
            let mut p = [0.0; 2];
            let mut uh = [0.0; 2];
            for k in 0..3 {
                for i in 0..2 {
                    p[i] += l[k] * x[k][i];
                    uh[i] += l[k] * u[cell[k]][i];
                }
            }
            let ue = exact(p);
            sum += w * area * ((uh[0] - ue[0]).powi(2) + (uh[1] - ue[1]).powi(2));
        }
    }
    sum.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::generate;

    fn no_gravity(re: f64) -> PhysicalParams {
        PhysicalParams { re, fr: f64::INFINITY, ..Default::default() }
    }

    #[test]
    fn inflow_profile_peak_and_flux() {
        let m = generate::channel(2.0, 1.0, 4, 20).unwrap();
        let u = inflow_profile(&m, 4.0 / 3.0).unwrap();
        let peak = u.iter().map(|v| v[0]).fold(0.0, f64::max);
        assert!((peak - 2.0).abs() < 1e-12);
        // trapezoidal flux of the parabola on n segments underestimates by 1/n^2
        let q = -boundary_flux(&m, &u, FacetTag::Inflow);
        assert!((q - 4.0 / 3.0 * (1.0 - 1.0 / 400.0)).abs() < 1e-12);
    }

    #[test]
    fn low_reynolds_channel_is_symmetric() {
        let m = generate::channel(3.0, 1.0, 12, 8).unwrap();
        let (s, rep) = solve_flow(&m, &no_gravity(1.0), &FlowOptions::default()).unwrap();
        assert!(rep.converged);
        for (v, p) in m.vertices().iter().enumerate() {
            let mirror = m.vertices().iter().position(|q| (q[0] - p[0]).abs() < 1e-12 && (q[1] - (1.0 - p[1])).abs() < 1e-12).unwrap();
            assert!((s.u[v][0] - s.u[mirror][0]).abs() < 1e-6);
            assert!((s.u[v][1] + s.u[mirror][1]).abs() < 1e-6);
        }
    }

    #[test]
    fn l2_error_of_the_interpolant() {
        // P1 interpolation error of a quadratic is O(h^2)
        let e = |n: usize| {
            let m = generate::channel(1.0, 1.0, n, n).unwrap();
            let u: Vec<[f64; 2]> = m.vertices().iter().map(|p| [p[1] * p[1], 0.0]).collect();
            l2_velocity_error(&m, &u, |p| [p[1] * p[1], 0.0])
        };
        let r = e(8) / e(16);
        assert!((r - 4.0).abs() < 0.05, "{r}");
        let m = generate::channel(1.0, 1.0, 2, 2).unwrap();
        let u: Vec<[f64; 2]> = m.vertices().iter().map(|p| [2.0 * p[0] - p[1], 1.0]).collect();
        assert!(l2_velocity_error(&m, &u, |p| [2.0 * p[0] - p[1], 1.0]) < 1e-14);
    }

    #[test]
    fn mass_is_balanced() {
        let m = generate::channel(3.0, 1.0, 24, 8).unwrap();
        let (s, _) = solve_flow(&m, &no_gravity(100.0), &FlowOptions::default()).unwrap();
        let qin = boundary_flux(&m, &s.u, FacetTag::Inflow);
        let qout = boundary_flux(&m, &s.u, FacetTag::Outflow);
        assert!(((qin + qout) / qin).abs() < 1e-2);
    }
}
