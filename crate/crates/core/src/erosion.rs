//! OKA erosion rate, the erosion cost with Willmore regularisation, and the
//! derivatives the adjoint and shape calculus need.
//!
//! With `x = u.n`, `r = |u|` and `s = x / r = sin(gamma)`,
//! `e = chi(x) alpha r^(m+1) s^(1+n1) (1 + Hv (1 - s))^n2` for `s > 0`, which is
//! `alpha (u.n) |u|^m zeta(gamma)` written without the singular `arcsin`.

use serde::Deserialize;

use crate::ad::Dual;
use crate::error::{Error, Result};
use crate::fem::quadrature::LINE3;
use crate::mesh::{willmore_vertex, FacetTag, Mesh};
use crate::particle::particle_flux;

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ErosionParams {
    pub m: f64,
    pub n1: f64,
    pub n2: f64,
    pub hv: f64,
    /// Willmore weight; `None` selects the automatic rule on first use.
    pub c1: Option<f64>,
    /// Half width of the smoothed impact indicator.
    pub eps_n: f64,
}

impl Default for ErosionParams {
    fn default() -> Self {
        ErosionParams { m: 2.36, n1: 0.78, n2: 1.25, hv: 2.0, c1: None, eps_n: 1e-3 }
    }
}

impl ErosionParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("m", self.m), ("n1", self.n1), ("n2", self.n2), ("hv", self.hv)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::param(name, format!("must be positive, got {v}")));
            }
        }
        if let Some(c1) = self.c1 {
            if !(c1 >= 0.0 && c1.is_finite()) {
                return Err(Error::param("c1", format!("must be nonnegative, got {c1}")));
            }
        }
        if !(self.eps_n >= 0.0 && self.eps_n.is_finite()) {
            return Err(Error::param("eps_n", format!("must be nonnegative, got {}", self.eps_n)));
        }
        Ok(())
    }
}

/// `gamma = arcsin(u.n / |u|)` with the argument clamped to `[-1, 1]`.
pub fn impact_angle(u: [f64; 2], n: [f64; 2]) -> Result<f64> {
    let r = u[0].hypot(u[1]);
    if r == 0.0 {
        return Err(Error::Invalid("impact angle of a zero particle velocity".into()));
    }
    Ok(((u[0] * n[0] + u[1] * n[1]) / r).clamp(-1.0, 1.0).asin())
}

/// `zeta(gamma) = sin(gamma)^n1 (1 + Hv (1 - sin gamma))^n2`.
pub fn angle_factor(gamma: f64, p: &ErosionParams) -> f64 {
    let s = gamma.sin().max(0.0);
    s.powf(p.n1) * (1.0 + p.hv * (1.0 - s)).powf(p.n2)
}

/// Smoothstep indicator on `[-eps, eps]` and its derivative.
fn indicator(x: f64, eps: f64) -> (f64, f64) {
    if eps == 0.0 {
        return (if x >= 0.0 { 1.0 } else { 0.0 }, 0.0);
    }
    let t = (x + eps) / (2.0 * eps);
    if t <= 0.0 {
        (0.0, 0.0)
    } else if t >= 1.0 {
        (1.0, 0.0)
    } else {
        (t * t * (3.0 - 2.0 * t), 6.0 * t * (1.0 - t) / (2.0 * eps))
    }
}

/// `S(s) = s^(1+n1) (1 + Hv (1 - s))^n2` and `S'(s)`, zero for `s <= 0`.
fn shape_factor(s: f64, p: &ErosionParams) -> (f64, f64) {
    if s <= 0.0 {
        return (0.0, 0.0);
    }
    let b = 1.0 + p.hv * (1.0 - s);
    let sn = s.powf(p.n1);
    let bn = b.powf(p.n2);
    let v = s * sn * bn;
    let d = (1.0 + p.n1) * sn * bn - s * sn * p.n2 * p.hv * b.powf(p.n2 - 1.0);
    (v, d)
}

/// Erosion rate and its partial derivatives.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RateDerivatives {
    pub e: f64,
    pub de_dalpha: f64,
    pub de_du: [f64; 2],
    pub de_dn: [f64; 2],
}

/// Rate and derivatives; a vanishing velocity gives all zeros.
pub fn rate_with_derivatives(alpha: f64, u: [f64; 2], n: [f64; 2], p: &ErosionParams) -> RateDerivatives {
    let r = u[0].hypot(u[1]);
    if r == 0.0 {
        return RateDerivatives::default();
    }
    let x = u[0] * n[0] + u[1] * n[1];
    let s = x / r;
    let (chi, dchi) = indicator(x, p.eps_n);
    let (sv, ds) = shape_factor(s, p);
    if sv == 0.0 && ds == 0.0 {
        return RateDerivatives::default();
    }
    let rm = r.powf(p.m);
    let base = rm * r * sv;
    let e = chi * alpha * base;
    let cn = alpha * (dchi * base + chi * rm * ds);
    let cu = alpha * chi * (rm / r * ((p.m + 1.0) * sv - s * ds));
    RateDerivatives {
        e,
        de_dalpha: chi * base,
        de_du: [cn * n[0] + cu * u[0], cn * n[1] + cu * u[1]],
        de_dn: [cn * u[0], cn * u[1]],
    }
}

pub fn erosion_rate(alpha: f64, u: [f64; 2], n: [f64; 2], p: &ErosionParams) -> f64 {
    rate_with_derivatives(alpha, u, n, p).e
}

/// Derivatives of `g = e^2 / 2`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sensitivities {
    pub g: f64,
    pub dg_dalpha: f64,
    pub dg_du: [f64; 2],
    pub dg_dn: [f64; 2],
}

fn sens_of(d: RateDerivatives) -> Sensitivities {
    let e = d.e;
    Sensitivities {
        g: 0.5 * e * e,
        dg_dalpha: e * d.de_dalpha,
        dg_du: [e * d.de_du[0], e * d.de_du[1]],
        dg_dn: [e * d.de_dn[0], e * d.de_dn[1]],
    }
}

pub fn erosion_sensitivities(alpha: f64, u: [f64; 2], n: [f64; 2], p: &ErosionParams) -> Result<Sensitivities> {
    if u[0] == 0.0 && u[1] == 0.0 {
        return Err(Error::Invalid("erosion sensitivities of a zero particle velocity".into()));
    }
    Ok(sens_of(rate_with_derivatives(alpha, u, n, p)))
}

/// Quadrature points on a wall facet: `(weight * length, s)`.
fn facet_points(mesh: &Mesh, f: usize) -> impl Iterator<Item = (f64, f64)> {
    let l = mesh.facet_length(f);
    let (s, w) = LINE3;
    (0..3).map(move |q| (w[q] * l, s[q]))
}

fn at(f: &[[f64; 2]], a: usize, b: usize, s: f64) -> [f64; 2] {
    [(1.0 - s) * f[a][0] + s * f[b][0], (1.0 - s) * f[a][1] + s * f[b][1]]
}

/// Integrate a quantity of the rate over the wall.
fn integrate_wall(mesh: &Mesh, up: &[[f64; 2]], alpha: &[f64], p: &ErosionParams, k: impl Fn(RateDerivatives) -> f64) -> f64 {
    let mut total = 0.0;
    for f in mesh.facets_with_tag(FacetTag::Wall) {
        let [a, b] = mesh.facets()[f].v;
        let n = mesh.facet_normal(f);
        for (w, s) in facet_points(mesh, f) {
            let al = (1.0 - s) * alpha[a] + s * alpha[b];
            total += w * k(rate_with_derivatives(al, at(up, a, b, s), n, p));
        }
    }
    total
}

/// `int_wall g`.
pub fn erosion_term(mesh: &Mesh, up: &[[f64; 2]], alpha: &[f64], p: &ErosionParams) -> f64 {
    integrate_wall(mesh, up, alpha, p, |d| 0.5 * d.e * d.e)
}

/// `E = int_wall e`.
pub fn integrated_erosion(mesh: &Mesh, up: &[[f64; 2]], alpha: &[f64], p: &ErosionParams) -> f64 {
    integrate_wall(mesh, up, alpha, p, |d| d.e)
}

/// Mean erosion rate of every boundary facet (zero off the wall).
pub fn facet_erosion(mesh: &Mesh, up: &[[f64; 2]], alpha: &[f64], p: &ErosionParams) -> Vec<f64> {
    let mut out = vec![0.0; mesh.n_facets()];
    for f in mesh.facets_with_tag(FacetTag::Wall) {
        let [a, b] = mesh.facets()[f].v;
        let n = mesh.facet_normal(f);
        let l = mesh.facet_length(f);
        out[f] = facet_points(mesh, f)
            .map(|(w, s)| {
                let al = (1.0 - s) * alpha[a] + s * alpha[b];
                w * erosion_rate(al, at(up, a, b, s), n, p)
            })
            .sum::<f64>()
            / l;
    }
    out
}

/// Derivatives of the discrete `int_wall g` with respect to nodal `alpha`
/// and `u_p`.
pub fn erosion_state_gradient(mesh: &Mesh, up: &[[f64; 2]], alpha: &[f64], p: &ErosionParams) -> (Vec<f64>, Vec<[f64; 2]>) {
    let mut ga = vec![0.0; mesh.n_vertices()];
    let mut gu = vec![[0.0; 2]; mesh.n_vertices()];
    for f in mesh.facets_with_tag(FacetTag::Wall) {
        let [a, b] = mesh.facets()[f].v;
        let n = mesh.facet_normal(f);
        for (w, s) in facet_points(mesh, f) {
            let al = (1.0 - s) * alpha[a] + s * alpha[b];
            let d = sens_of(rate_with_derivatives(al, at(up, a, b, s), n, p));
            for (v, phi) in [(a, 1.0 - s), (b, s)] {
                ga[v] += w * phi * d.dg_dalpha;
                gu[v][0] += w * phi * d.dg_du[0];
                gu[v][1] += w * phi * d.dg_du[1];
            }
        }
    }
    (ga, gu)
}

/// Shape derivative of `int_wall g` as a vertex dual vector: facet length
/// change `g div_G V` and normal change `-(dg/dn).(D_G V)^T n`.
pub fn erosion_shape_gradient(mesh: &Mesh, up: &[[f64; 2]], alpha: &[f64], p: &ErosionParams) -> Vec<[f64; 2]> {
    let mut out = vec![[0.0; 2]; mesh.n_vertices()];
    for f in mesh.facets_with_tag(FacetTag::Wall) {
        let [a, b] = mesh.facets()[f].v;
        let n = mesh.facet_normal(f);
        let t = [-n[1], n[0]];
        let mut c = [0.0; 2];
        for (w, s) in facet_points(mesh, f) {
            let al = (1.0 - s) * alpha[a] + s * alpha[b];
            let d = sens_of(rate_with_derivatives(al, at(up, a, b, s), n, p));
            let gt = d.dg_dn[0] * t[0] + d.dg_dn[1] * t[1];
            // per unit length, paired with (V_b - V_a)
            let l = mesh.facet_length(f);
            c[0] += w / l * (d.g * t[0] - gt * n[0]);
            c[1] += w / l * (d.g * t[1] - gt * n[1]);
        }
        for i in 0..2 {
            out[b][i] += c[i];
            out[a][i] -= c[i];
        }
    }
    out
}

/// Discrete Willmore energy `c1 sum 1/2 theta^2 / l` over deformable vertices.
pub fn willmore_energy(mesh: &Mesh, c1: f64) -> Result<f64> {
    Ok(c1 * mesh.curvature_integral()?)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WillmoreDerivative {
    /// Exact derivative of the discrete energy.
    #[default]
    Discrete,
    /// Tangential-calculus formula with P1 arc-length derivatives.
    Tangential,
}

/// Shape derivative of the Willmore energy as a vertex dual vector.
pub fn willmore_shape_gradient(mesh: &Mesh, c1: f64, kind: WillmoreDerivative) -> Result<Vec<[f64; 2]>> {
    let mut out = vec![[0.0; 2]; mesh.n_vertices()];
    if c1 == 0.0 {
        return Ok(out);
    }
    match kind {
        WillmoreDerivative::Discrete => {
            for v in mesh.deformable_vertices() {
                let (pv, nv) = mesh
                    .boundary_neighbour_ids(v)
                    .ok_or_else(|| Error::Mesh(format!("deformable vertex {v} is isolated")))?;
                let ids = [pv, v, nv];
                let mut x = [[Dual::<6>::constant(0.0); 2]; 3];
                for k in 0..3 {
                    for i in 0..2 {
                        x[k][i] = Dual::var(mesh.vertices()[ids[k]][i], 2 * k + i);
                    }
                }
                let w = willmore_vertex(x);
                for k in 0..3 {
                    for i in 0..2 {
                        out[ids[k]][i] += c1 * w.d[2 * k + i];
                    }
                }
            }
        }
        WillmoreDerivative::Tangential => {
            let curv: std::collections::HashMap<usize, f64> = mesh.curvature()?.into_iter().collect();
            let normals: std::collections::HashMap<usize, [f64; 2]> =
                mesh.lumped_normals(|f| f.deformable).into_iter().map(|(v, _, n)| (v, n)).collect();
            let hn = |v: usize| -> [f64; 2] {
                match (curv.get(&v), normals.get(&v)) {
                    (Some(h), Some(n)) => [h * n[0], h * n[1]],
                    _ => [0.0; 2],
                }
            };
            for f in 0..mesh.n_facets() {
                if !mesh.facets()[f].deformable {
                    continue;
                }
                let [a, b] = mesh.facets()[f].v;
                let l = mesh.facet_length(f);
                let n = mesh.facet_normal(f);
                let t = [-n[1], n[0]];
                let (ha, hb) = (hn(a), hn(b));
                let dh = [(hb[0] - ha[0]) / l, (hb[1] - ha[1]) / l];
                let dhn = dh[0] * n[0] + dh[1] * n[1];
                let dht = dh[0] * t[0] + dh[1] * t[1];
                // l [ (dV.n)(dhn) - 1/2 (dV.t)(dht) ] with dV = (V_b - V_a) / l
                let c = [c1 * (dhn * n[0] - 0.5 * dht * t[0]), c1 * (dhn * n[1] - 0.5 * dht * t[1])];
                for i in 0..2 {
                    out[b][i] += c[i];
                    out[a][i] -= c[i];
                }
            }
        }
    }
    Ok(out)
}

/// Automatic Willmore weight: one percent of the erosion term relative to
/// the curvature integral; zero on a straight boundary.
pub fn auto_c1(erosion_term: f64, curvature_integral: f64) -> f64 {
    if curvature_integral > 0.0 {
        0.01 * erosion_term / curvature_integral
    } else {
        0.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CostTerms {
    pub total: f64,
    pub erosion: f64,
    pub willmore: f64,
    pub c1: f64,
}

/// `J = int_wall g + W`; an unset `c1` is resolved with [`auto_c1`] on this mesh.
pub fn cost_functional(mesh: &Mesh, up: &[[f64; 2]], alpha: &[f64], p: &ErosionParams) -> Result<CostTerms> {
    p.validate()?;
    if up.len() != mesh.n_vertices() || alpha.len() != mesh.n_vertices() {
        return Err(Error::Dimension("state does not match the mesh".into()));
    }
    let erosion = erosion_term(mesh, up, alpha, p);
    let curv = mesh.curvature_integral()?;
    let c1 = p.c1.unwrap_or_else(|| auto_c1(erosion, curv));
    let willmore = c1 * curv;
    Ok(CostTerms { total: erosion + willmore, erosion, willmore, c1 })
}

/// `eta = 1 - int_out alpha u_p.n / int_in alpha u_p.(-n)`.
pub fn impact_rate(mesh: &Mesh, alpha: &[f64], up: &[[f64; 2]]) -> Result<f64> {
    let qin = -particle_flux(mesh, alpha, up, FacetTag::Inflow);
    if !(qin > 0.0) {
        return Err(Error::Invalid("inflow particle flux must be positive".into()));
    }
    Ok(1.0 - particle_flux(mesh, alpha, up, FacetTag::Outflow) / qin)
}

/// Whether `eta` lies outside the plausible band `[-0.05, 1.05]`.
pub fn impact_rate_suspicious(eta: f64) -> bool {
    !(-0.05..=1.05).contains(&eta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::generate;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn oka() -> ErosionParams {
        ErosionParams::default()
    }

    #[test]
    fn angles() {
        assert!((impact_angle([1.0, 0.0], [1.0, 0.0]).unwrap() - PI / 2.0).abs() < 1e-15);
        assert_eq!(impact_angle([1.0, 0.0], [0.0, 1.0]).unwrap(), 0.0);
        let r = 0.5f64.sqrt();
        assert!((impact_angle([r, r], [0.0, 1.0]).unwrap() - PI / 4.0).abs() < 1e-12);
        assert!(impact_angle([0.0, 0.0], [0.0, 1.0]).is_err());
        assert_eq!(angle_factor(PI / 2.0, &oka()), 1.0);
        assert_eq!(angle_factor(0.0, &oka()), 0.0);
        // 0.5^0.78 * 2^1.25
        assert!((angle_factor(PI / 6.0, &oka()) - 0.5f64.powf(0.78) * 2f64.powf(1.25)).abs() < 1e-14);
        assert!((angle_factor(PI / 6.0, &oka()) - 1.385109).abs() < 1e-6);
    }

    #[test]
    fn rate_values() {
        let p = oka();
        assert_eq!(erosion_rate(0.0, [1.0, 0.3], [1.0, 0.0], &p), 0.0);
        assert_eq!(erosion_rate(1.0, [-1.0, 0.0], [1.0, 0.0], &p), 0.0);
        assert!((erosion_rate(1.0, [1.0, 0.0], [1.0, 0.0], &p) - 1.0).abs() < 1e-15);
        // matches the angle form away from the indicator ramp
        let u = [0.8, -1.3];
        let n = [0.6, -0.8];
        let g = impact_angle(u, n).unwrap();
        let x = u[0] * n[0] + u[1] * n[1];
        let r = u[0].hypot(u[1]);
        let e = x * r.powf(p.m) * angle_factor(g, &p) * 0.7;
        assert!((erosion_rate(0.7, u, n, &p) - e).abs() < 1e-12 * e);
    }

    #[test]
    fn scale_covariance() {
        let p = oka();
        let u = [0.4, 1.1];
        let n = [0.0, 1.0];
        let s = 1.7;
        let e1 = erosion_rate(0.9, u, n, &p);
        let e2 = erosion_rate(0.9, [s * u[0], s * u[1]], n, &p);
        assert!((e2 - s.powf(p.m + 1.0) * e1).abs() < 1e-12 * e2);
    }

    #[test]
    fn sensitivities_match_differences() {
        let p = oka();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let h = 1e-6;
        for _ in 0..100 {
            let alpha = rng.random_range(0.1..2.0);
            let th: f64 = rng.random_range(0.0..2.0 * PI);
            let n = [th.cos(), th.sin()];
            let phi: f64 = rng.random_range(0.15..PI - 0.15);
            let sp = rng.random_range(0.3..2.5);
            // impact direction with u.n > 0 well outside the indicator ramp
            let t = [-n[1], n[0]];
            let u = [sp * (phi.sin() * n[0] + phi.cos() * t[0]), sp * (phi.sin() * n[1] + phi.cos() * t[1])];
            let g = |a: f64, u: [f64; 2], n: [f64; 2]| 0.5 * erosion_rate(a, u, n, &p).powi(2);
            let s = erosion_sensitivities(alpha, u, n, &p).unwrap();
            let rel = |fd: f64, an: f64| (fd - an).abs() / an.abs().max(1e-3 * s.g.max(1e-12));
            let fd = (g(alpha + h, u, n) - g(alpha - h, u, n)) / (2.0 * h);
            assert!(rel(fd, s.dg_dalpha) < 1e-5);
            for i in 0..2 {
                let (mut a, mut b) = (u, u);
                a[i] += h;
                b[i] -= h;
                let fd = (g(alpha, a, n) - g(alpha, b, n)) / (2.0 * h);
                assert!(rel(fd, s.dg_du[i]) < 1e-5, "{fd} {}", s.dg_du[i]);
                let (mut a, mut b) = (n, n);
                a[i] += h;
                b[i] -= h;
                let fd = (g(alpha, u, a) - g(alpha, u, b)) / (2.0 * h);
                assert!(rel(fd, s.dg_dn[i]) < 1e-5, "{fd} {}", s.dg_dn[i]);
            }
            assert!((s.dg_dalpha - 2.0 * s.g / alpha).abs() < 1e-12 * s.dg_dalpha.abs().max(1e-300));
        }
    }

    #[test]
    fn indicator_ramp_is_differentiated() {
        let p = ErosionParams { eps_n: 0.1, ..oka() };
        let n = [0.0, 1.0];
        let u = [1.0, 0.05];
        let s = erosion_sensitivities(1.0, u, n, &p).unwrap();
        let h = 1e-7;
        let g = |u: [f64; 2]| 0.5 * erosion_rate(1.0, u, n, &p).powi(2);
        let fd = (g([1.0, 0.05 + h]) - g([1.0, 0.05 - h])) / (2.0 * h);
        assert!((fd - s.dg_du[1]).abs() < 1e-6 * fd.abs());
    }

    #[test]
    fn circle_willmore() {
        let m = generate::disk(1.0, 256, 8).unwrap();
        let w = willmore_energy(&m, 2.0).unwrap();
        assert!((w - 2.0 * PI).abs() < 0.02 * 2.0 * PI);
        let zero = vec![0.0; m.n_vertices()];
        let up = vec![[0.0; 2]; m.n_vertices()];
        let c = cost_functional(&m, &up, &zero, &ErosionParams { c1: Some(2.0), ..oka() }).unwrap();
        assert_eq!(c.erosion, 0.0);
        assert!((c.total - w).abs() < 1e-14);
        // radial scaling V = x shrinks the energy at rate -c1 pi
        for kind in [WillmoreDerivative::Discrete, WillmoreDerivative::Tangential] {
            let g = willmore_shape_gradient(&m, 1.0, kind).unwrap();
            let d: f64 = g.iter().zip(m.vertices()).map(|(g, x)| g[0] * x[0] + g[1] * x[1]).sum();
            assert!((d + PI).abs() < 0.02 * PI, "{kind:?} {d}");
        }
    }

    #[test]
    fn discrete_willmore_gradient_matches_differences() {
        let m = generate::disk(1.0, 24, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let v: Vec<[f64; 2]> = (0..m.n_vertices()).map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect();
        let g = willmore_shape_gradient(&m, 1.0, WillmoreDerivative::Discrete).unwrap();
        let d: f64 = g.iter().zip(&v).map(|(g, x)| g[0] * x[0] + g[1] * x[1]).sum();
        let h = 1e-6;
        let e = |t: f64| {
            let x: Vec<[f64; 2]> = m.vertices().iter().zip(&v).map(|(p, w)| [p[0] + t * w[0], p[1] + t * w[1]]).collect();
            m.with_vertices(x).unwrap().curvature_integral().unwrap()
        };
        let fd = (e(h) - e(-h)) / (2.0 * h);
        assert!((fd - d).abs() < 1e-6 * d.abs().max(1.0));
    }

    #[test]
    fn straight_boundary_without_particles_costs_nothing() {
        let m = generate::rectangle(2.0, 1.0, 6, 3, generate::RectangleTags::all_deformable_wall()).unwrap();
        let n = m.n_vertices();
        let c = cost_functional(&m, &vec![[1.0, 0.0]; n], &vec![0.0; n], &oka()).unwrap();
        assert_eq!(c.total, 0.0);
    }

    #[test]
    fn auto_rule() {
        assert!((auto_c1(3.0, 2.0) - 0.015).abs() < 1e-15);
        assert_eq!(auto_c1(3.0, 0.0), 0.0);
    }

    #[test]
    fn erosion_term_is_additive_in_g() {
        let m = generate::rectangle(1.0, 1.0, 4, 4, generate::RectangleTags::all_deformable_wall()).unwrap();
        let up: Vec<[f64; 2]> = m.vertices().iter().map(|x| [x[0] - 0.5 + 0.1, x[1] - 0.4]).collect();
        let a1 = vec![1.0; m.n_vertices()];
        let a2 = vec![2f64.sqrt(); m.n_vertices()];
        let p = oka();
        let e1 = erosion_term(&m, &up, &a1, &p);
        let e2 = erosion_term(&m, &up, &a2, &p);
        assert!(e1 > 0.0);
        assert!((e2 - 2.0 * e1).abs() < 1e-12 * e1);
    }

    #[test]
    fn state_gradient_matches_differences() {
        let m = generate::rectangle(1.0, 1.0, 3, 3, generate::RectangleTags::all_deformable_wall()).unwrap();
        let up: Vec<[f64; 2]> = m.vertices().iter().map(|x| [x[0] - 0.45, x[1] - 0.4]).collect();
        let alpha: Vec<f64> = m.vertices().iter().map(|x| 1.0 + x[0] * x[1]).collect();
        let p = oka();
        let (ga, gu) = erosion_state_gradient(&m, &up, &alpha, &p);
        let h = 1e-6;
        for v in 0..m.n_vertices() {
            let (mut a, mut b) = (alpha.clone(), alpha.clone());
            a[v] += h;
            b[v] -= h;
            let fd = (erosion_term(&m, &up, &a, &p) - erosion_term(&m, &up, &b, &p)) / (2.0 * h);
            assert!((fd - ga[v]).abs() < 1e-7);
            for i in 0..2 {
                let (mut a, mut b) = (up.clone(), up.clone());
                a[v][i] += h;
                b[v][i] -= h;
                let fd = (erosion_term(&m, &a, &alpha, &p) - erosion_term(&m, &b, &alpha, &p)) / (2.0 * h);
                assert!((fd - gu[v][i]).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn shape_gradient_matches_differences() {
        let m = generate::rectangle(1.0, 1.0, 3, 3, generate::RectangleTags::all_deformable_wall()).unwrap();
        let up: Vec<[f64; 2]> = m.vertices().iter().map(|x| [x[0] - 0.45, x[1] - 0.4]).collect();
        let alpha: Vec<f64> = m.vertices().iter().map(|x| 1.0 + x[0] * x[1]).collect();
        let p = oka();
        let g = erosion_shape_gradient(&m, &up, &alpha, &p);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let v: Vec<[f64; 2]> = (0..m.n_vertices()).map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect();
        let d: f64 = g.iter().zip(&v).map(|(g, x)| g[0] * x[0] + g[1] * x[1]).sum();
        let h = 1e-6;
        let e = |t: f64| {
            let x: Vec<[f64; 2]> = m.vertices().iter().zip(&v).map(|(p, w)| [p[0] + t * w[0], p[1] + t * w[1]]).collect();
            erosion_term(&m.with_vertices(x).unwrap(), &up, &alpha, &p)
        };
        let fd = (e(h) - e(-h)) / (2.0 * h);
        assert!((fd - d).abs() < 1e-7 * d.abs().max(1.0), "{fd} {d}");
    }
}
