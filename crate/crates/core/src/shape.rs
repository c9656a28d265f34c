//! Shape calculus: transformation derivatives, the volume form of the shape
//! derivative, and the Taylor test.
//!
//! Deformation fields and shape derivatives live on vertices. A shape
//! derivative is returned as a dual vector `b` with `dJ(V) = sum_v b_v . V_v`.
//! With `B = grad V` (so `B_ij = d_j V_i`), the Galerkin volume terms are
//! collected as `int C : B` and distributed to vertices through `C grad N_a`.

use crate::ad::Dual;
use crate::error::{Error, Result};
use crate::exec::{map_range, Execution};
use crate::fem::quadrature::TRI4;
use crate::fem::{geometry, grad_scalar, grad_vector, interp, interp_vec};
use crate::forward::ForwardState;
use crate::adjoint::AdjointState;
use crate::erosion::{erosion_shape_gradient, willmore_shape_gradient, ErosionParams, WillmoreDerivative};
use crate::kernels::{drag_factor, fluid_local, lift_vec, particle_local, seeded_coords, transport_local, FluidCoeffs, ParticleCoeffs, Part, TransportCoeffs};
use crate::mesh::{p1_gradients, Mesh, Point, QualityBounds};
use crate::params::PhysicalParams;
use crate::particle::Partition;

pub type VertexField = Vec<[f64; 2]>;

/// Pairing `sum_v b_v . V_v`.
pub fn pair(b: &[[f64; 2]], v: &[[f64; 2]]) -> f64 {
    b.iter().zip(v).map(|(b, v)| b[0] * v[0] + b[1] * v[1]).sum()
}

/// Derivatives at `t = 0` of the transformation quantities of `x -> x + t V`.
#[derive(Clone, Debug, PartialEq)]
pub struct TransformationDerivatives {
    /// `div V` per cell.
    pub det_j: Vec<f64>,
    /// `-(grad V)^T` per cell.
    pub m: Vec<[[f64; 2]; 2]>,
    /// `div_G V = div V - n.(grad V) n` per boundary facet.
    pub det_j_surface: Vec<f64>,
    /// `-(D_G V)^T n` per boundary facet, `D_G V = grad V (I - n n^T)`.
    pub normal: Vec<[f64; 2]>,
}

pub fn transformation_derivatives(mesh: &Mesh, v: &[[f64; 2]]) -> Result<TransformationDerivatives> {
    if v.len() != mesh.n_vertices() {
        return Err(Error::Dimension("deformation field does not match the mesh".into()));
    }
    let grads: Vec<[[f64; 2]; 2]> = (0..mesh.n_cells()).map(|c| mesh.cell_gradient(v, c)).collect();
    let det_j = grads.iter().map(|b| b[0][0] + b[1][1]).collect();
    let m = grads.iter().map(|b| [[-b[0][0], -b[1][0]], [-b[0][1], -b[1][1]]]).collect();
    let mut det_j_surface = Vec::with_capacity(mesh.n_facets());
    let mut normal = Vec::with_capacity(mesh.n_facets());
    for f in 0..mesh.n_facets() {
        let b = grads[mesh.facets()[f].cell];
        let n = mesh.facet_normal(f);
        let bn = [b[0][0] * n[0] + b[0][1] * n[1], b[1][0] * n[0] + b[1][1] * n[1]];
        det_j_surface.push(b[0][0] + b[1][1] - (n[0] * bn[0] + n[1] * bn[1]));
        // D = B - (B n) n^T; -(D^T n)
        let d = [[b[0][0] - bn[0] * n[0], b[0][1] - bn[0] * n[1]], [b[1][0] - bn[1] * n[0], b[1][1] - bn[1] * n[1]]];
        normal.push([-(d[0][0] * n[0] + d[1][0] * n[1]), -(d[0][1] * n[0] + d[1][1] * n[1])]);
    }
    Ok(TransformationDerivatives { det_j, m, det_j_surface, normal })
}

/// The transformation quantities themselves on the deformed mesh
/// `x + t V`: `det(I + t B)`, `(I + t B)^-T`, facet length ratio and the
/// deformed facet normal.
pub fn transformation_at(mesh: &Mesh, v: &[[f64; 2]], t: f64) -> Result<TransformationDerivatives> {
    let x: Vec<Point> = mesh.vertices().iter().zip(v).map(|(p, w)| [p[0] + t * w[0], p[1] + t * w[1]]).collect();
    let moved = mesh.with_vertices(x)?;
    let det_j = (0..mesh.n_cells()).map(|c| moved.cell_area(c) / mesh.cell_area(c)).collect();
    let m = (0..mesh.n_cells())
        .map(|c| {
            let b = mesh.cell_gradient(v, c);
            let a = [[1.0 + t * b[0][0], t * b[0][1]], [t * b[1][0], 1.0 + t * b[1][1]]];
            let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
            // inverse transpose
            [[a[1][1] / det, -a[1][0] / det], [-a[0][1] / det, a[0][0] / det]]
        })
        .collect();
    let det_j_surface = (0..mesh.n_facets()).map(|f| moved.facet_length(f) / mesh.facet_length(f)).collect();
    let normal = (0..mesh.n_facets()).map(|f| moved.facet_normal(f)).collect();
    Ok(TransformationDerivatives { det_j, m, det_j_surface, normal })
}

/// Volume blocks of the shape derivative.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Block {
    /// All flow terms times `div V`.
    FluidDiv,
    /// Convection and viscous `grad V` corrections.
    FluidGrad,
    /// Pressure and continuity `grad V` corrections.
    PressureGrad,
    /// Particle convection, drag and gravity times `div V`.
    ParticleDiv,
    /// Artificial particle viscosity times `div V`.
    DiffusionDiv,
    /// Particle convection and viscous `grad V` corrections.
    ParticleGrad,
    /// Volume-fraction terms times `div V`.
    TransportDiv,
    /// Volume-fraction `grad V` corrections.
    TransportGrad,
}

pub const BLOCKS: [Block; 8] = [
    Block::FluidDiv,
    Block::FluidGrad,
    Block::PressureGrad,
    Block::ParticleDiv,
    Block::DiffusionDiv,
    Block::ParticleGrad,
    Block::TransportDiv,
    Block::TransportGrad,
];

impl Block {
    pub fn index(self) -> usize {
        BLOCKS.iter().position(|b| *b == self).unwrap_or(0)
    }
    pub fn name(self) -> &'static str {
        match self {
            Block::FluidDiv => "fluid_div",
            Block::FluidGrad => "fluid_grad",
            Block::PressureGrad => "pressure_grad",
            Block::ParticleDiv => "particle_div",
            Block::DiffusionDiv => "diffusion_div",
            Block::ParticleGrad => "particle_grad",
            Block::TransportDiv => "transport_div",
            Block::TransportGrad => "transport_grad",
        }
    }
}

/// The shape derivative split into its contributions.
#[derive(Clone, Debug)]
pub struct ShapeDerivative {
    pub blocks: [VertexField; 8],
    /// Mesh dependence of the stabilisation terms.
    pub stabilization: VertexField,
    /// Wall term of the erosion cost.
    pub erosion: VertexField,
    pub willmore: VertexField,
}

/// Multipliers applied to each volume block; all ones is the true derivative.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlockSigns(pub [f64; 8]);

impl Default for BlockSigns {
    fn default() -> Self {
        BlockSigns([1.0; 8])
    }
}

impl BlockSigns {
    pub fn negate(block: Block) -> Self {
        let mut s = [1.0; 8];
        s[block.index()] = -1.0;
        BlockSigns(s)
    }
}

impl ShapeDerivative {
    pub fn total(&self) -> VertexField {
        self.total_with(BlockSigns::default())
    }

    pub fn total_with(&self, signs: BlockSigns) -> VertexField {
        let n = self.erosion.len();
        let mut out = vec![[0.0; 2]; n];
        for v in 0..n {
            for i in 0..2 {
                let mut s = self.stabilization[v][i] + self.erosion[v][i] + self.willmore[v][i];
                for (k, b) in self.blocks.iter().enumerate() {
                    s += signs.0[k] * b[v][i];
                }
                out[v][i] = s;
            }
        }
        out
    }

    /// Sum of the Galerkin volume blocks.
    pub fn galerkin(&self) -> VertexField {
        let n = self.erosion.len();
        (0..n)
            .map(|v| {
                let mut s = [0.0; 2];
                for b in &self.blocks {
                    s[0] += b[v][0];
                    s[1] += b[v][1];
                }
                s
            })
            .collect()
    }
}

/// Zero the entries of fixed boundary vertices.
pub fn restrict(mesh: &Mesh, b: &mut [[f64; 2]]) {
    for v in mesh.fixed_vertices() {
        b[v] = [0.0; 2];
    }
}

type Mat = [[f64; 2]; 2];

fn outer(a: [f64; 2], b: [f64; 2]) -> Mat {
    [[a[0] * b[0], a[0] * b[1]], [a[1] * b[0], a[1] * b[1]]]
}

fn tmul(a: &Mat, b: &Mat) -> Mat {
    // a^T b
    let mut r = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            r[i][j] = a[0][i] * b[0][j] + a[1][i] * b[1][j];
        }
    }
    r
}

fn tr(a: &Mat) -> Mat {
    [[a[0][0], a[1][0]], [a[0][1], a[1][1]]]
}

fn axpy(c: &mut Mat, s: f64, a: &Mat) {
    for i in 0..2 {
        for j in 0..2 {
            c[i][j] += s * a[i][j];
        }
    }
}

fn ddot(a: &Mat, b: &Mat) -> f64 {
    a[0][0] * b[0][0] + a[0][1] * b[0][1] + a[1][0] * b[1][0] + a[1][1] * b[1][1]
}

fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

fn matvec(a: &Mat, x: [f64; 2]) -> [f64; 2] {
    [a[0][0] * x[0] + a[0][1] * x[1], a[1][0] * x[0] + a[1][1] * x[1]]
}

const ID: Mat = [[1.0, 0.0], [0.0, 1.0]];

struct CellData {
    uf: [[f64; 2]; 3],
    p: [f64; 3],
    up: [[f64; 2]; 3],
    alpha: [f64; 3],
    zf: [[f64; 2]; 3],
    zp: [f64; 3],
    zu: [[f64; 2]; 3],
    za: [f64; 3],
}

fn cell_data(mesh: &Mesh, c: usize, s: &ForwardState, z: &AdjointState) -> CellData {
    let cell = mesh.cells()[c];
    CellData {
        uf: cell.map(|v| s.flow.u[v]),
        p: cell.map(|v| s.flow.p[v]),
        up: cell.map(|v| s.up[v]),
        alpha: cell.map(|v| s.alpha[v]),
        zf: cell.map(|v| z.z_uf[v]),
        zp: cell.map(|v| z.z_p[v]),
        zu: cell.map(|v| z.z_up[v]),
        za: cell.map(|v| z.z_alpha[v]),
    }
}

struct Coeffs {
    fluid: FluidCoeffs,
    particle: ParticleCoeffs,
    transport: TransportCoeffs,
}

/// Per-cell `C` of each block (already integrated).
fn cell_blocks(x: &[Point; 3], d: &CellData, k: &Coeffs) -> [Mat; 8] {
    let geo = geometry(x);
    let g = geo.grads;
    let du = grad_vector(&g, &d.uf);
    let dz = grad_vector(&g, &d.zf);
    let dp = grad_vector(&g, &d.up);
    let dzu = grad_vector(&g, &d.zu);
    let ga = grad_scalar(&g, &d.alpha);
    let gza = grad_scalar(&g, &d.za);
    let div_u = du[0][0] + du[1][1];
    let div_z = dz[0][0] + dz[1][1];
    let div_p = dp[0][0] + dp[1][1];
    let (nu, conv, body) = (k.fluid.nu, k.fluid.conv, k.fluid.body);
    let pc = &k.particle;
    let eps = k.transport.eps;
    let mut c = [[[0.0; 2]; 2]; 8];
    for q in 0..4 {
        let l = &TRI4.points[q];
        let w = geo.area * TRI4.weights[q];
        let u = interp_vec(l, &d.uf);
        let pq = interp(l, &d.p);
        let z = interp_vec(l, &d.zf);
        let zp = interp(l, &d.zp);
        let up = interp_vec(l, &d.up);
        let zu = interp_vec(l, &d.zu);
        let a = interp(l, &d.alpha);
        let za = interp(l, &d.za);

        let adv_f = matvec(&du, u);
        let lf = conv * dot(adv_f, z) + nu * ddot(&du, &dz) - pq * div_z - dot(body, z) + zp * div_u;
        axpy(&mut c[0], w * lf, &ID);
        let mut fg = [[0.0; 2]; 2];
        axpy(&mut fg, -conv, &outer(matvec(&tr(&du), z), u));
        axpy(&mut fg, -nu, &tmul(&du, &dz));
        axpy(&mut fg, -nu, &tmul(&dz, &du));
        axpy(&mut c[1], w, &fg);
        let mut pg = [[0.0; 2]; 2];
        axpy(&mut pg, pq, &tr(&dz));
        axpy(&mut pg, -zp, &tr(&du));
        axpy(&mut c[2], w, &pg);

        let adv_p = matvec(&dp, up);
        let slip = [up[0] - u[0], up[1] - u[1]];
        let dsn = drag_factor(dot(slip, slip).sqrt(), pc.drag_re_scale);
        let lp = dot(adv_p, zu) + pc.two_over_stk * dsn * dot(slip, zu) - dot(pc.body, zu);
        axpy(&mut c[3], w * lp, &ID);
        axpy(&mut c[4], w * pc.kinv * ddot(&dp, &dzu), &ID);
        let mut ppg = [[0.0; 2]; 2];
        axpy(&mut ppg, -1.0, &outer(matvec(&tr(&dp), zu), up));
        axpy(&mut ppg, -pc.kinv, &tmul(&dp, &dzu));
        axpy(&mut ppg, -pc.kinv, &tmul(&dzu, &dp));
        axpy(&mut c[5], w, &ppg);

        let lt = (dot(up, ga) + a * div_p) * za + eps * dot(ga, gza);
        axpy(&mut c[6], w * lt, &ID);
        let mut tg = [[0.0; 2]; 2];
        axpy(&mut tg, -za, &outer(ga, up));
        axpy(&mut tg, -za * a, &tr(&dp));
        axpy(&mut tg, -eps, &outer(ga, gza));
        axpy(&mut tg, -eps, &outer(gza, ga));
        axpy(&mut c[7], w, &tg);
    }
    c
}

/// Mesh sensitivity of `z . R` for one part of all three kernels, by
/// forward differentiation in the six vertex coordinates.
fn cell_lagrangian_ad(x: &[Point; 3], d: &CellData, k: &Coeffs, part: Part) -> [f64; 6] {
    let xd = seeded_coords(*x);
    let mut s9 = [Dual::<6>::constant(0.0); 9];
    for a in 0..3 {
        s9[3 * a] = Dual::constant(d.uf[a][0]);
        s9[3 * a + 1] = Dual::constant(d.uf[a][1]);
        s9[3 * a + 2] = Dual::constant(d.p[a]);
    }
    let rf = fluid_local(&xd, &s9, &k.fluid, part);
    let s6 = [d.up[0][0], d.up[0][1], d.up[1][0], d.up[1][1], d.up[2][0], d.up[2][1]].map(Dual::<6>::constant);
    let ufd = lift_vec(&d.uf);
    let rp = particle_local(&xd, &s6, &ufd, &k.particle, part);
    let upd = lift_vec(&d.up);
    let rt = transport_local(&xd, &d.alpha.map(Dual::<6>::constant), &upd, &k.transport, part);
    let mut out = [0.0; 6];
    for a in 0..3 {
        for m in 0..6 {
            out[m] += rf[3 * a].d[m] * d.zf[a][0] + rf[3 * a + 1].d[m] * d.zf[a][1] + rf[3 * a + 2].d[m] * d.zp[a];
            out[m] += rp[2 * a].d[m] * d.zu[a][0] + rp[2 * a + 1].d[m] * d.zu[a][1];
            out[m] += rt[a].d[m] * d.za[a];
        }
    }
    out
}

fn check_sizes(mesh: &Mesh, s: &ForwardState, z: &AdjointState) -> Result<()> {
    let n = mesh.n_vertices();
    let ok = [s.up.len(), s.alpha.len(), s.flow.u.len(), s.flow.p.len(), z.z_uf.len(), z.z_p.len(), z.z_up.len(), z.z_alpha.len()]
        .iter()
        .all(|&k| k == n);
    if ok {
        Ok(())
    } else {
        Err(Error::Dimension("state or adjoint does not match the mesh".into()))
    }
}

fn coeffs(params: &PhysicalParams) -> Coeffs {
    Coeffs { fluid: FluidCoeffs::new(params), particle: ParticleCoeffs::new(params), transport: TransportCoeffs::new(params) }
}

/// Volume part of the shape derivative: the eight Galerkin blocks and the
/// stabilisation sensitivity.
pub fn volume_shape_derivative(
    mesh: &Mesh,
    state: &ForwardState,
    adjoint: &AdjointState,
    params: &PhysicalParams,
    exec: Execution,
) -> Result<([VertexField; 8], VertexField)> {
    check_sizes(mesh, state, adjoint)?;
    let k = coeffs(params);
    let parts = map_range(exec, mesh.n_cells(), |c| {
        let x = mesh.cell_coords(c);
        let d = cell_data(mesh, c, state, adjoint);
        (cell_blocks(&x, &d, &k), cell_lagrangian_ad(&x, &d, &k, Part::Stabilization))
    });
    let n = mesh.n_vertices();
    let mut blocks: [VertexField; 8] = std::array::from_fn(|_| vec![[0.0; 2]; n]);
    let mut stab = vec![[0.0; 2]; n];
    for (c, (cb, st)) in parts.into_iter().enumerate() {
        let cell = mesh.cells()[c];
        let g = p1_gradients(mesh.cell_coords(c));
        for (a, &v) in cell.iter().enumerate() {
            for (k, cm) in cb.iter().enumerate() {
                let r = matvec(cm, g[a]);
                blocks[k][v][0] += r[0];
                blocks[k][v][1] += r[1];
            }
            stab[v][0] += st[2 * a];
            stab[v][1] += st[2 * a + 1];
        }
    }
    Ok((blocks, stab))
}

/// The full shape derivative as a dual vector. `eparams.c1` must be set.
pub fn shape_derivative_functional(
    mesh: &Mesh,
    state: &ForwardState,
    adjoint: &AdjointState,
    params: &PhysicalParams,
    eparams: &ErosionParams,
    willmore: WillmoreDerivative,
    exec: Execution,
) -> Result<ShapeDerivative> {
    let c1 = eparams.c1.ok_or_else(|| Error::Invalid("c1 must be resolved before differentiating".into()))?;
    let (blocks, stabilization) = volume_shape_derivative(mesh, state, adjoint, params, exec)?;
    let erosion = erosion_shape_gradient(mesh, &state.up, &state.alpha, eparams);
    let willmore = willmore_shape_gradient(mesh, c1, willmore)?;
    Ok(ShapeDerivative { blocks, stabilization, erosion, willmore })
}

/// `dJ(V)` for a single deformation field.
#[allow(clippy::too_many_arguments)]
pub fn shape_derivative(
    mesh: &Mesh,
    state: &ForwardState,
    adjoint: &AdjointState,
    v: &[[f64; 2]],
    params: &PhysicalParams,
    eparams: &ErosionParams,
    willmore: WillmoreDerivative,
    exec: Execution,
) -> Result<f64> {
    if v.len() != mesh.n_vertices() {
        return Err(Error::Dimension("deformation field does not match the mesh".into()));
    }
    let d = shape_derivative_functional(mesh, state, adjoint, params, eparams, willmore, exec)?;
    Ok(pair(&d.total(), v))
}

/// Coordinate derivative of `z . R` for one kernel part by automatic
/// differentiation; the Galerkin blocks must sum to the `Galerkin` result.
pub fn lagrangian_coordinate_gradient(
    mesh: &Mesh,
    state: &ForwardState,
    adjoint: &AdjointState,
    params: &PhysicalParams,
    part: Part,
    exec: Execution,
) -> Result<VertexField> {
    check_sizes(mesh, state, adjoint)?;
    let k = coeffs(params);
    let parts = map_range(exec, mesh.n_cells(), |c| {
        cell_lagrangian_ad(&mesh.cell_coords(c), &cell_data(mesh, c, state, adjoint), &k, part)
    });
    let mut out = vec![[0.0; 2]; mesh.n_vertices()];
    for (c, g) in parts.into_iter().enumerate() {
        for (a, &v) in mesh.cells()[c].iter().enumerate() {
            out[v][0] += g[2 * a];
            out[v][1] += g[2 * a + 1];
        }
    }
    Ok(out)
}

/// `z . R` on the current mesh with frozen nodal states (free rows only,
/// since the adjoint vanishes on Dirichlet dofs).
pub fn lagrangian_residual_pairing(mesh: &Mesh, state: &ForwardState, adjoint: &AdjointState, params: &PhysicalParams) -> Result<f64> {
    check_sizes(mesh, state, adjoint)?;
    let k = coeffs(params);
    let mut total = 0.0;
    for c in 0..mesh.n_cells() {
        let x = mesh.cell_coords(c);
        let d = cell_data(mesh, c, state, adjoint);
        let mut s9 = [0.0; 9];
        for a in 0..3 {
            s9[3 * a] = d.uf[a][0];
            s9[3 * a + 1] = d.uf[a][1];
            s9[3 * a + 2] = d.p[a];
        }
        let rf = fluid_local(&x, &s9, &k.fluid, Part::Full);
        let s6 = [d.up[0][0], d.up[0][1], d.up[1][0], d.up[1][1], d.up[2][0], d.up[2][1]];
        let rp = particle_local(&x, &s6, &d.uf, &k.particle, Part::Full);
        let rt = transport_local(&x, &d.alpha, &d.up, &k.transport, Part::Full);
        for a in 0..3 {
            total += rf[3 * a] * d.zf[a][0] + rf[3 * a + 1] * d.zf[a][1] + rf[3 * a + 2] * d.zp[a];
            total += rp[2 * a] * d.zu[a][0] + rp[2 * a + 1] * d.zu[a][1];
            total += rt[a] * d.za[a];
        }
    }
    Ok(total)
}

/// Shape derivative of `|Omega|`: `int div V`.
pub fn volume_gradient(mesh: &Mesh) -> VertexField {
    let mut out = vec![[0.0; 2]; mesh.n_vertices()];
    for c in 0..mesh.n_cells() {
        let g = p1_gradients(mesh.cell_coords(c));
        let area = mesh.cell_area(c);
        for (a, &v) in mesh.cells()[c].iter().enumerate() {
            out[v][0] += area * g[a][0];
            out[v][1] += area * g[a][1];
        }
    }
    out
}

/// Shape derivative of the boundary length: `int_G div_G V`.
pub fn perimeter_gradient(mesh: &Mesh) -> VertexField {
    let mut out = vec![[0.0; 2]; mesh.n_vertices()];
    for f in 0..mesh.n_facets() {
        let [a, b] = mesh.facets()[f].v;
        let n = mesh.facet_normal(f);
        let t = [-n[1], n[0]];
        for i in 0..2 {
            out[b][i] += t[i];
            out[a][i] -= t[i];
        }
    }
    out
}

pub fn perimeter(mesh: &Mesh) -> f64 {
    (0..mesh.n_facets()).map(|f| mesh.facet_length(f)).sum()
}

/// Result of a Taylor test.
#[derive(Clone, Debug, PartialEq)]
pub struct TaylorReport {
    /// `J` on the undeformed mesh.
    pub base: f64,
    pub steps: Vec<f64>,
    pub values: Vec<f64>,
    pub remainders: Vec<f64>,
    /// Least-squares slope of `log remainder` against `log t`.
    pub slope: f64,
    /// Whether the boundary partition differed from the reference at a step.
    pub partition_changed: Vec<bool>,
    pub pass: bool,
}

impl TaylorReport {
    pub fn any_partition_change(&self) -> bool {
        self.partition_changed.iter().any(|c| *c)
    }

    /// The same test scored against another derivative value; the
    /// functional values are reused.
    pub fn rescore(&self, dj: f64) -> TaylorReport {
        let remainders: Vec<f64> = self.steps.iter().zip(&self.values).map(|(t, j)| (j - self.base - t * dj).abs()).collect();
        let slope = remainder_slope(&self.steps, &remainders);
        TaylorReport { remainders, slope, pass: (1.8..=2.2).contains(&slope), ..self.clone() }
    }
}

fn remainder_slope(steps: &[f64], remainders: &[f64]) -> f64 {
    let positive: Vec<(f64, f64)> = steps.iter().zip(remainders).filter(|(_, r)| **r > 0.0).map(|(t, r)| (*t, *r)).collect();
    if positive.len() >= 2 {
        let (x, y): (Vec<f64>, Vec<f64>) = positive.into_iter().unzip();
        loglog_slope(&x, &y)
    } else {
        f64::INFINITY
    }
}

pub const DEFAULT_TAYLOR_STEPS: [f64; 4] = [1e-2, 5e-3, 2.5e-3, 1.25e-3];

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Remainders `|J(x + t V) - J - t dJ|` over decreasing steps. The
/// functional returns the value and, when it has one, the boundary
/// partition of the deformed state.
pub fn taylor_test(
    mut functional: impl FnMut(&Mesh) -> Result<(f64, Option<Partition>)>,
    mesh: &Mesh,
    v: &[[f64; 2]],
    dj: f64,
    steps: &[f64],
) -> Result<TaylorReport> {
    if steps.len() < 2 || steps.windows(2).any(|w| !(w[1] < w[0])) || steps.iter().any(|t| !(*t > 0.0)) {
        return Err(Error::Invalid("Taylor steps must be positive and strictly decreasing".into()));
    }
    let (j0, p0) = functional(mesh)?;
    let bounds = QualityBounds::default();
    let mut values = Vec::new();
    let mut remainders = Vec::new();
    let mut changed = Vec::new();
    for &t in steps {
        let q = mesh.quality(v, t, bounds)?;
        if !q.ok() {
            return Err(Error::Quality(format!("Taylor step {t} violates the deformation bounds: {q:?}")));
        }
        let moved = mesh.deform(v, t, bounds)?;
        let (j, p) = functional(&moved)?;
        values.push(j);
        remainders.push((j - j0 - t * dj).abs());
        changed.push(match (&p0, &p) {
            (Some(a), Some(b)) => a != b,
            _ => false,
        });
    }
    if remainders.iter().any(|r| !r.is_finite()) {
        return Err(Error::Solver("non-finite Taylor remainder".into()));
    }
    let slope = remainder_slope(steps, &remainders);
    Ok(TaylorReport {
        base: j0,
        steps: steps.to_vec(),
        values,
        remainders,
        slope,
        partition_changed: changed,
        pass: (1.8..=2.2).contains(&slope),
    })
}

/// Smooth pseudo-random deformation that vanishes on fixed boundary
/// vertices, scaled to maximum length `amplitude`.
pub fn random_deformation(mesh: &Mesh, seed: u64, amplitude: f64) -> VertexField {
    use rand::{RngExt, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let modes: Vec<([f64; 2], f64, [f64; 2])> = (0..4)
        .map(|_| {
            let k = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
            let ph = rng.random_range(0.0..std::f64::consts::TAU);
            let a = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            (k, ph, a)
        })
        .collect();
    let mut v: VertexField = mesh
        .vertices()
        .iter()
        .map(|x| {
            let mut w = [0.0; 2];
            for (k, ph, a) in &modes {
                let s = (k[0] * x[0] + k[1] * x[1] + ph).sin();
                w[0] += a[0] * s;
                w[1] += a[1] * s;
            }
            w
        })
        .collect();
    restrict(mesh, &mut v);
    let m = v.iter().map(|w| w[0].hypot(w[1])).fold(0.0, f64::max);
    if m > 0.0 {
        v.iter_mut().for_each(|w| *w = [amplitude * w[0] / m, amplitude * w[1] / m]);
    }
    v
}
