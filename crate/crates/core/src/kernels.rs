//! Element residuals of the three state equations.
//!
//! Each kernel returns the local residual of one triangle with the Galerkin
//! part, the residual-based stabilisation part, or both. Kernels are generic
//! over [`Real`] so that the same code yields residuals, exact Jacobians
//! with respect to states, and sensitivities with respect to vertex
//! coordinates.

use crate::ad::{Dual, Real};
use crate::fem::quadrature::TRI4;
use crate::fem::{geometry, grad_scalar, grad_vector, interp, interp_vec};
use crate::params::PhysicalParams;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Part {
    Galerkin,
    Stabilization,
    Full,
}

impl Part {
    fn gal(self) -> bool {
        self != Part::Stabilization
    }
    fn stab(self) -> bool {
        self != Part::Galerkin
    }
}

/// Below this slip speed the drag factor is frozen at its value there.
pub const MIN_SLIP: f64 = 1e-10;
const TINY: f64 = 1e-30;

#[derive(Clone, Copy, Debug)]
pub struct FluidCoeffs {
    pub nu: f64,
    pub body: [f64; 2],
    /// Scales convection; zero gives the Stokes problem.
    pub conv: f64,
}

impl FluidCoeffs {
    pub fn new(p: &PhysicalParams) -> Self {
        FluidCoeffs { nu: 1.0 / p.re, body: p.gravity(), conv: 1.0 }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct ParticleCoeffs {
    pub kinv: f64,
    pub two_over_stk: f64,
    pub body: [f64; 2],
    pub drag_re_scale: f64,
}

impl ParticleCoeffs {
    pub fn new(p: &PhysicalParams) -> Self {
        ParticleCoeffs { kinv: 1.0 / p.k, two_over_stk: 2.0 / p.stk, body: p.gravity(), drag_re_scale: p.drag_re_scale }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct TransportCoeffs {
    pub eps: f64,
}

impl TransportCoeffs {
    pub fn new(p: &PhysicalParams) -> Self {
        TransportCoeffs { eps: 1.0 / p.pe }
    }
}

/// Schiller-Naumann factor `1 + 0.15 Re_p^0.687` as a function of slip speed.
pub fn drag_factor<T: Real>(slip: T, re_scale: f64) -> T {
    if slip.value() < MIN_SLIP {
        T::cst(1.0 + 0.15 * (re_scale * MIN_SLIP).powf(0.687))
    } else {
        (slip * re_scale).powf(0.687) * 0.15 + 1.0
    }
}

fn norm2<T: Real>(v: [T; 2]) -> T {
    (v[0] * v[0] + v[1] * v[1] + TINY).sqrt()
}

fn centroid<T: Real>(v: &[[T; 2]; 3]) -> [T; 2] {
    let third = 1.0 / 3.0;
    [(v[0][0] + v[1][0] + v[2][0]) * third, (v[0][1] + v[1][1] + v[2][1]) * third]
}

/// Element length scale `sqrt(2 |K|)` and its square.
fn size<T: Real>(area: T) -> (T, T) {
    let h2 = area * 2.0;
    (h2.sqrt(), h2)
}

/// Stabilisation parameters `(tau_M, tau_C)` of the flow equations.
pub fn fluid_tau<T: Real>(area: T, u: &[[T; 2]; 3], c: &FluidCoeffs) -> (T, T) {
    let (h, h2) = size(area);
    let un = norm2(centroid(u)) * c.conv;
    let inv = T::cst(4.0 * c.nu) / h2 + un * 2.0 / h;
    let tau = inv.recip();
    (tau, h2 / (tau * 4.0))
}

/// Fluid residual, local dofs `[u0, v0, p0, u1, v1, p1, u2, v2, p2]`.
pub fn fluid_local<T: Real>(x: &[[T; 2]; 3], s: &[T; 9], c: &FluidCoeffs, part: Part) -> [T; 9] {
    let u = [[s[0], s[1]], [s[3], s[4]], [s[6], s[7]]];
    let p = [s[2], s[5], s[8]];
    let geo = geometry(x);
    let g = geo.grads;
    let du = grad_vector(&g, &u);
    let gp = grad_scalar(&g, &p);
    let div = du[0][0] + du[1][1];
    let (tau, tau_c) = fluid_tau(geo.area, &u, c);
    let mut r = [T::zero(); 9];
    for q in 0..4 {
        let l = &TRI4.points[q];
        let w = geo.area * TRI4.weights[q];
        let uq = interp_vec(l, &u);
        let pq = interp(l, &p);
        let adv = [du[0][0] * uq[0] + du[0][1] * uq[1], du[1][0] * uq[0] + du[1][1] * uq[1]];
        let rm = [adv[0] * c.conv + gp[0] - c.body[0], adv[1] * c.conv + gp[1] - c.body[1]];
        for a in 0..3 {
            let na = l[a];
            let ga = g[a];
            if part.gal() {
                for i in 0..2 {
                    let v = adv[i] * (c.conv * na) + (du[i][0] * ga[0] + du[i][1] * ga[1]) * c.nu - pq * ga[i]
                        - T::cst(c.body[i] * na);
                    r[3 * a + i] += v * w;
                }
                r[3 * a + 2] += div * na * w;
            }
            if part.stab() {
                let sup = (uq[0] * ga[0] + uq[1] * ga[1]) * c.conv;
                for i in 0..2 {
                    r[3 * a + i] += (tau * sup * rm[i] + tau_c * div * ga[i]) * w;
                }
                r[3 * a + 2] += tau * (ga[0] * rm[0] + ga[1] * rm[1]) * w;
            }
        }
    }
    r
}

pub fn particle_tau<T: Real>(area: T, up: &[[T; 2]; 3], uf: &[[T; 2]; 3], c: &ParticleCoeffs) -> T {
    let (h, h2) = size(area);
    let upc = centroid(up);
    let ufc = centroid(uf);
    let slip = norm2([upc[0] - ufc[0], upc[1] - ufc[1]]);
    let d = drag_factor(slip, c.drag_re_scale);
    let inv = norm2(upc) * 2.0 / h + T::cst(4.0 * c.kinv) / h2 + d * c.two_over_stk;
    inv.recip()
}

/// Particle momentum residual, local dofs `[u0, v0, u1, v1, u2, v2]`.
pub fn particle_local<T: Real>(x: &[[T; 2]; 3], s: &[T; 6], uf: &[[T; 2]; 3], c: &ParticleCoeffs, part: Part) -> [T; 6] {
    let up = [[s[0], s[1]], [s[2], s[3]], [s[4], s[5]]];
    let geo = geometry(x);
    let g = geo.grads;
    let du = grad_vector(&g, &up);
    let tau = if part.stab() { particle_tau(geo.area, &up, uf, c) } else { T::zero() };
    let mut r = [T::zero(); 6];
    for q in 0..4 {
        let l = &TRI4.points[q];
        let w = geo.area * TRI4.weights[q];
        let uq = interp_vec(l, &up);
        let fq = interp_vec(l, uf);
        let slip = [uq[0] - fq[0], uq[1] - fq[1]];
        let d = drag_factor((slip[0] * slip[0] + slip[1] * slip[1]).sqrt(), c.drag_re_scale);
        let adv = [du[0][0] * uq[0] + du[0][1] * uq[1], du[1][0] * uq[0] + du[1][1] * uq[1]];
        let drag = [d * slip[0] * c.two_over_stk, d * slip[1] * c.two_over_stk];
        let res = [adv[0] + drag[0] - c.body[0], adv[1] + drag[1] - c.body[1]];
        for a in 0..3 {
            let na = l[a];
            let ga = g[a];
            for i in 0..2 {
                let mut v = T::zero();
                if part.gal() {
                    v += res[i] * na + (du[i][0] * ga[0] + du[i][1] * ga[1]) * c.kinv;
                }
                if part.stab() {
                    v += tau * (uq[0] * ga[0] + uq[1] * ga[1]) * res[i];
                }
                r[2 * a + i] += v * w;
            }
        }
    }
    r
}

pub fn transport_tau<T: Real>(area: T, up: &[[T; 2]; 3], c: &TransportCoeffs) -> T {
    let (h, h2) = size(area);
    let inv = norm2(centroid(up)) * 2.0 / h + T::cst(4.0 * c.eps) / h2;
    inv.recip()
}

/// Volume-fraction residual, local dofs `[a0, a1, a2]`.
pub fn transport_local<T: Real>(x: &[[T; 2]; 3], alpha: &[T; 3], up: &[[T; 2]; 3], c: &TransportCoeffs, part: Part) -> [T; 3] {
    let geo = geometry(x);
    let g = geo.grads;
    let ga = grad_scalar(&g, alpha);
    let du = grad_vector(&g, up);
    let div = du[0][0] + du[1][1];
    let tau = if part.stab() { transport_tau(geo.area, up, c) } else { T::zero() };
    let mut r = [T::zero(); 3];
    for q in 0..4 {
        let l = &TRI4.points[q];
        let w = geo.area * TRI4.weights[q];
        let aq = interp(l, alpha);
        let uq = interp_vec(l, up);
        let res = uq[0] * ga[0] + uq[1] * ga[1] + aq * div;
        for a in 0..3 {
            let gb = g[a];
            let mut v = T::zero();
            if part.gal() {
                v += res * l[a] + (ga[0] * gb[0] + ga[1] * gb[1]) * c.eps;
            }
            if part.stab() {
                v += tau * (uq[0] * gb[0] + uq[1] * gb[1]) * res;
            }
            r[a] += v * w;
        }
    }
    r
}

/// Residual and row-major Jacobian of a local kernel with `N` dofs.
pub fn jacobian<const N: usize>(s: &[f64; N], f: impl Fn(&[Dual<N>; N]) -> [Dual<N>; N]) -> (Vec<f64>, Vec<f64>) {
    let mut sd = [Dual::<N>::constant(0.0); N];
    for k in 0..N {
        sd[k] = Dual::var(s[k], k);
    }
    let r = f(&sd);
    let mut jac = Vec::with_capacity(N * N);
    for row in r.iter() {
        jac.extend_from_slice(&row.d);
    }
    (r.iter().map(|x| x.v).collect(), jac)
}

/// Vertex coordinates as duals seeded on all six coordinates.
pub fn seeded_coords(x: [[f64; 2]; 3]) -> [[Dual<6>; 2]; 3] {
    let mut out = [[Dual::constant(0.0); 2]; 3];
    for a in 0..3 {
        for i in 0..2 {
            out[a][i] = Dual::var(x[a][i], 2 * a + i);
        }
    }
    out
}

/// Lift values to constants of `T`.
pub fn lift_vec<T: Real, const N: usize>(v: &[[f64; 2]; N]) -> [[T; 2]; N] {
    v.map(|p| p.map(T::cst))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tri() -> [[f64; 2]; 3] {
        [[0.1, 0.0], [1.0, 0.2], [0.3, 0.8]]
    }

    fn fd_check<const N: usize>(s: [f64; N], f: impl Fn(&[f64; N]) -> [f64; N], jac: &[f64]) {
        let h = 1e-6;
        for k in 0..N {
            let mut sp = s;
            let mut sm = s;
            sp[k] += h;
            sm[k] -= h;
            let (rp, rm) = (f(&sp), f(&sm));
            for i in 0..N {
                let fd = (rp[i] - rm[i]) / (2.0 * h);
                let ad = jac[i * N + k];
                assert!((fd - ad).abs() <= 1e-6 * (1.0 + ad.abs()), "entry ({i}, {k}): fd {fd} ad {ad}");
            }
        }
    }

    #[test]
    fn fluid_jacobian_matches_differences() {
        let c = FluidCoeffs { nu: 1.0 / 50.0, body: [0.0, -0.01], conv: 1.0 };
        let s = [0.3, -0.2, 0.5, 1.1, 0.4, -0.3, 0.7, 0.1, 0.2];
        let x = tri();
        let (_, jac) = jacobian(&s, |sd| fluid_local(&lift_vec(&x), sd, &c, Part::Full));
        fd_check(s, |sv| fluid_local(&x, sv, &c, Part::Full), &jac);
    }

    #[test]
    fn particle_jacobian_matches_differences() {
        let c = ParticleCoeffs { kinv: 1e-3, two_over_stk: 6.0, body: [0.0, -0.01], drag_re_scale: 2.0 };
        let uf = [[1.0, 0.0], [0.8, 0.1], [0.9, -0.2]];
        let s = [0.7, 0.1, 1.2, -0.3, 0.5, 0.4];
        let x = tri();
        let (_, jac) = jacobian(&s, |sd| particle_local(&lift_vec(&x), sd, &lift_vec(&uf), &c, Part::Full));
        fd_check(s, |sv| particle_local(&x, sv, &uf, &c, Part::Full), &jac);
    }

    #[test]
    fn transport_is_linear_in_alpha() {
        let c = TransportCoeffs { eps: 1e-4 };
        let up = [[1.0, 0.1], [0.8, 0.2], [0.9, -0.1]];
        let x = tri();
        let a1 = transport_local(&x, &[0.2, 0.5, 0.9], &up, &c, Part::Full);
        let a2 = transport_local(&x, &[0.4, 1.0, 1.8], &up, &c, Part::Full);
        for i in 0..3 {
            assert!((a2[i] - 2.0 * a1[i]).abs() < 1e-14);
        }
    }

    #[test]
    fn constant_volume_fraction_in_uniform_flow_has_zero_residual() {
        let c = TransportCoeffs { eps: 1e-8 };
        let up = [[1.0, 0.0]; 3];
        let r = transport_local(&tri(), &[1.0; 3], &up, &c, Part::Full);
        assert!(r.iter().all(|v| v.abs() < 1e-15));
    }
}
