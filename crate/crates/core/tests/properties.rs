use eroopt::erosion::{erosion_rate, ErosionParams};
use eroopt::exec::Execution;
use eroopt::gradient::{elasticity_matrix, energy_pairing, LameField};
use eroopt::mesh::generate::{self, BendSpec};
use eroopt::mesh::{Mesh, QualityBounds};
use eroopt::params::PhysicalParams;
use eroopt::particle::{classify_boundary, drag_coefficient, drag_sensitivity_terms};
use eroopt::shape::{loglog_slope, random_deformation, transformation_derivatives, TaylorReport};
use proptest::prelude::*;
use std::sync::OnceLock;

fn mesh() -> &'static Mesh {
    static M: OnceLock<Mesh> = OnceLock::new();
    M.get_or_init(|| generate::bend(BendSpec { n_across: 4, n_inlet: 2, n_arc: 5, n_outlet: 3, ..BendSpec::reference(4) }).unwrap())
}

fn vec2() -> impl Strategy<Value = [f64; 2]> {
    [-3.0..3.0f64, -3.0..3.0f64]
}

fn close(a: f64, b: f64, scale: f64) -> bool {
    (a - b).abs() <= 1e-12 * scale.max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn drag_correction_is_at_least_one_and_monotone(a in 0.0..1e4f64, b in 0.0..1e4f64) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let (dl, dh) = (drag_coefficient(lo).unwrap(), drag_coefficient(hi).unwrap());
        prop_assert!(dl >= 1.0);
        prop_assert!(dh >= dl);
    }

    #[test]
    fn drag_correction_rejects_negative(re in -1e4..-1e-12f64) {
        prop_assert!(drag_coefficient(re).is_err());
    }

    #[test]
    fn drag_terms_are_antisymmetric(uf in vec2(), up in vec2(), z in vec2(), scale in 0.1..10.0f64) {
        let p = PhysicalParams { drag_re_scale: scale, ..Default::default() };
        let (df, dp) = drag_sensitivity_terms(uf, up, z, &p);
        prop_assert_eq!(dp, [-df[0], -df[1]]);
    }

    #[test]
    fn erosion_rate_is_nonnegative(alpha in 0.0..2.0f64, u in vec2(), theta in 0.0..std::f64::consts::TAU) {
        let n = [theta.cos(), theta.sin()];
        let e = erosion_rate(alpha, u, n, &ErosionParams::default());
        prop_assert!(e >= 0.0 && e.is_finite(), "{e}");
    }

    #[test]
    fn transformation_derivatives_are_linear(s1 in 0u64..1000, s2 in 0u64..1000, a in -2.0..2.0f64, b in -2.0..2.0f64) {
        let m = mesh();
        let (v, w) = (random_deformation(m, s1, 1.0), random_deformation(m, s2, 1.0));
        let vw: Vec<[f64; 2]> = v.iter().zip(&w).map(|(x, y)| [a * x[0] + b * y[0], a * x[1] + b * y[1]]).collect();
        let (tv, tw, t) = (transformation_derivatives(m, &v).unwrap(), transformation_derivatives(m, &w).unwrap(), transformation_derivatives(m, &vw).unwrap());
        for c in 0..m.n_cells() {
            prop_assert!(close(t.det_j[c], a * tv.det_j[c] + b * tw.det_j[c], 10.0));
            for i in 0..2 {
                for j in 0..2 {
                    prop_assert!(close(t.m[c][i][j], a * tv.m[c][i][j] + b * tw.m[c][i][j], 10.0));
                }
            }
        }
        for f in 0..m.n_facets() {
            prop_assert!(close(t.det_j_surface[f], a * tv.det_j_surface[f] + b * tw.det_j_surface[f], 10.0));
            for i in 0..2 {
                prop_assert!(close(t.normal[f][i], a * tv.normal[f][i] + b * tw.normal[f][i], 10.0));
            }
        }
    }

    #[test]
    fn random_deformation_respects_fixed_vertices(seed in 0u64..10_000, amp in 1e-3..10.0f64) {
        let m = mesh();
        let v = random_deformation(m, seed, amp);
        for f in m.fixed_vertices() {
            prop_assert_eq!(v[f], [0.0, 0.0]);
        }
        let longest = v.iter().map(|w| w[0].hypot(w[1])).fold(0.0, f64::max);
        prop_assert!((longest - amp).abs() <= 1e-12 * amp);
        prop_assert_eq!(v, random_deformation(m, seed, amp));
    }

    #[test]
    fn zero_deformation_is_bitwise_identity(t in -1.0..1.0f64) {
        let m = mesh();
        let zero = vec![[0.0; 2]; m.n_vertices()];
        let d = m.deform(&zero, t, QualityBounds::default()).unwrap();
        for (a, b) in m.vertices().iter().zip(d.vertices()) {
            prop_assert!(a[0].to_bits() == b[0].to_bits() && a[1].to_bits() == b[1].to_bits());
        }
    }

    #[test]
    fn classification_flips_with_the_velocity(seed in 0u64..10_000) {
        let m = mesh();
        let up = random_deformation(m, seed, 1.0);
        let p = classify_boundary(m, &up).unwrap();
        prop_assert_eq!(&p, &classify_boundary(m, &up).unwrap());
        let neg: Vec<[f64; 2]> = up.iter().map(|w| [-w[0], -w[1]]).collect();
        let q = classify_boundary(m, &neg).unwrap();
        for f in 0..m.n_facets() {
            let [a, b] = m.facets()[f].v;
            let n = m.facet_normal(f);
            let un = 0.5 * ((up[a][0] + up[b][0]) * n[0] + (up[a][1] + up[b][1]) * n[1]);
            if un == 0.0 {
                prop_assert!(p.is_minus(f) && q.is_minus(f));
            } else {
                prop_assert_ne!(p.is_minus(f), q.is_minus(f));
            }
        }
    }

    #[test]
    fn rescore_reproduces_the_report(base in -1.0..1.0f64, dj in -5.0..5.0f64, c in 0.1..10.0f64) {
        let steps = vec![1e-2, 5e-3, 2.5e-3, 1.25e-3];
        let values: Vec<f64> = steps.iter().map(|t| base + t * dj + c * t * t).collect();
        let remainders: Vec<f64> = steps.iter().zip(&values).map(|(t, j)| (j - base - t * dj).abs()).collect();
        let slope = loglog_slope(&steps, &remainders);
        let r = TaylorReport { base, steps: steps.clone(), values, remainders, slope, partition_changed: vec![false; 4], pass: (1.8..=2.2).contains(&slope) };
        let again = r.rescore(dj);
        prop_assert_eq!(&again, &r);
        prop_assert!(again.pass);
        // a wrong derivative leaves a first-order remainder
        prop_assert!(r.rescore(dj + 1.0).slope < 1.2);
    }

    #[test]
    fn energy_pairing_is_symmetric_and_nonnegative(s1 in 0u64..1000, s2 in 0u64..1000, mu0 in 0.1..10.0f64) {
        let m = mesh();
        let mu: Vec<f64> = m.vertices().iter().map(|x| mu0 * (1.0 + 0.5 * x[0].sin().abs())).collect();
        let lame = LameField { mu_star: mu.iter().map(|x| x * x).collect(), mu };
        let a = elasticity_matrix(m, &lame, Execution::Sequential);
        let (v, w) = (random_deformation(m, s1, 1.0), random_deformation(m, s2, 1.0));
        let (vw, wv) = (energy_pairing(&a, &v, &w), energy_pairing(&a, &w, &v));
        prop_assert!((vw - wv).abs() <= 1e-12 * (vw.abs() + 1.0));
        prop_assert!(energy_pairing(&a, &v, &v) >= 0.0);
    }

    #[test]
    fn admissible_step_satisfies_the_bounds(seed in 0u64..10_000, amp in 0.01..5.0f64, cap in 0.01..10.0f64) {
        let m = mesh();
        let v = random_deformation(m, seed, amp);
        let bounds = QualityBounds::default();
        let t = m.max_admissible_step(&v, bounds, cap).unwrap();
        prop_assert!(t > 0.0 && t <= cap);
        for k in 1..=8 {
            let q = m.quality(&v, t * k as f64 / 8.0 * (1.0 - 1e-9), bounds).unwrap();
            prop_assert!(q.ok(), "step {t}: {q:?}");
        }
    }
}
