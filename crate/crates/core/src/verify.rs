//! Verification suite: finite-difference oracles for the transformation
//! derivatives and pointwise sensitivities, the adjoint transpose check,
//! Taylor tests of the reduced gradient and block mutation.

use std::f64::consts::PI;
use std::time::Instant;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::adjoint::transpose_defects;
use crate::erosion::{erosion_rate, erosion_sensitivities, ErosionParams};
use crate::error::Result;
use crate::exec::Execution;
use crate::forward::solve_forward;
use crate::mesh::generate::{self, BendSpec};
use crate::mesh::Mesh;
use crate::params::PhysicalParams;
use crate::particle::{drag_coefficient, drag_sensitivity_terms, particle_reynolds};
use crate::problem::Problem;
use crate::shape::{pair, random_deformation, taylor_test, transformation_at, transformation_derivatives, BlockSigns, TaylorReport, BLOCKS, DEFAULT_TAYLOR_STEPS};

pub const CHECKS: [&str; 5] = ["lemma1", "sensitivities", "adjoint_transpose", "taylor", "mutation"];

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    /// The measured quantity compared against `tolerance`.
    pub value: f64,
    pub tolerance: f64,
    pub detail: String,
    pub seconds: f64,
}

impl CheckResult {
    fn new(name: impl Into<String>, passed: bool, value: f64, tolerance: f64, detail: String, start: Instant) -> Self {
        CheckResult { name: name.into(), passed, value, tolerance, detail, seconds: start.elapsed().as_secs_f64() }
    }

    fn failed(name: &str, e: crate::Error, start: Instant) -> Self {
        CheckResult::new(name, false, f64::NAN, f64::NAN, format!("error: {e}"), start)
    }
}

/// Max-norm relative error of centred differences against the analytic
/// derivatives of `det J`, `M`, `det J_Gamma` and the transported normal.
pub fn lemma1_error(mesh: &Mesh, v: &[[f64; 2]], h: f64) -> Result<[f64; 4]> {
    let d = transformation_derivatives(mesh, v)?;
    let p = transformation_at(mesh, v, h)?;
    let q = transformation_at(mesh, v, -h)?;
    let rel = |fd: Vec<f64>, an: Vec<f64>| {
        let scale = an.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        let err = fd.iter().zip(&an).fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
        if scale > 0.0 {
            err / scale
        } else {
            err
        }
    };
    let fd = |a: f64, b: f64| (a - b) / (2.0 * h);
    let flat_m = |m: &[[[f64; 2]; 2]]| m.iter().flat_map(|x| [x[0][0], x[0][1], x[1][0], x[1][1]]).collect::<Vec<_>>();
    let flat_n = |n: &[[f64; 2]]| n.iter().flat_map(|x| *x).collect::<Vec<_>>();
    Ok([
        rel(p.det_j.iter().zip(&q.det_j).map(|(a, b)| fd(*a, *b)).collect(), d.det_j.clone()),
        rel(flat_m(&p.m).iter().zip(flat_m(&q.m)).map(|(a, b)| fd(*a, b)).collect(), flat_m(&d.m)),
        rel(p.det_j_surface.iter().zip(&q.det_j_surface).map(|(a, b)| fd(*a, *b)).collect(), d.det_j_surface.clone()),
        rel(flat_n(&p.normal).iter().zip(flat_n(&q.normal)).map(|(a, b)| fd(*a, b)).collect(), flat_n(&d.normal)),
    ])
}

pub fn check_lemma1(fields: usize, n_across: usize, seed: u64) -> CheckResult {
    let start = Instant::now();
    let name = "lemma1";
    let mesh = match generate::bend(BendSpec::reference(n_across)) {
        Ok(m) => m,
        Err(e) => return CheckResult::failed(name, e, start),
    };
    let mut worst = 0.0f64;
    for k in 0..fields {
        let v = random_deformation(&mesh, seed + k as u64, 1.0);
        match lemma1_error(&mesh, &v, 1e-6) {
            Ok(e) => worst = e.iter().fold(worst, |a, b| a.max(*b)),
            Err(e) => return CheckResult::failed(name, e, start),
        }
    }
    let tol = 1e-6;
    CheckResult::new(name, worst <= tol, worst, tol, format!("{fields} fields on {} cells, h = 1e-6", mesh.n_cells()), start)
}

/// Worst relative errors of the erosion and drag sensitivities against
/// centred differences, and the worst drag antisymmetry defect.
pub fn sensitivity_errors(samples: usize, seed: u64) -> Result<(f64, f64, f64)> {
    let ep = ErosionParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = 1e-6;
    let (mut erosion, mut drag, mut anti) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..samples {
        // impact direction with u.n well above the indicator ramp
        let alpha = rng.random_range(0.1..2.0);
        let th: f64 = rng.random_range(0.0..2.0 * PI);
        let n = [th.cos(), th.sin()];
        let phi: f64 = rng.random_range(0.15..PI - 0.15);
        let sp = rng.random_range(0.3..2.5);
        let t = [-n[1], n[0]];
        let u = [sp * (phi.sin() * n[0] + phi.cos() * t[0]), sp * (phi.sin() * n[1] + phi.cos() * t[1])];
        let g = |a: f64, u: [f64; 2], n: [f64; 2]| 0.5 * erosion_rate(a, u, n, &ep).powi(2);
        let s = erosion_sensitivities(alpha, u, n, &ep)?;
        let rel = |fd: f64, an: f64, scale: f64| (fd - an).abs() / an.abs().max(scale);
        let grad = [s.dg_du[0].abs(), s.dg_du[1].abs(), s.dg_dn[0].abs(), s.dg_dn[1].abs(), s.dg_dalpha.abs()];
        let scale = 1e-3 * grad.iter().fold(0.0f64, |a, b| a.max(*b));
        erosion = erosion.max(rel((g(alpha + h, u, n) - g(alpha - h, u, n)) / (2.0 * h), s.dg_dalpha, scale));
        for i in 0..2 {
            let (mut a, mut b) = (u, u);
            a[i] += h;
            b[i] -= h;
            erosion = erosion.max(rel((g(alpha, a, n) - g(alpha, b, n)) / (2.0 * h), s.dg_du[i], scale));
            let (mut a, mut b) = (n, n);
            a[i] += h;
            b[i] -= h;
            erosion = erosion.max(rel((g(alpha, u, a) - g(alpha, u, b)) / (2.0 * h), s.dg_dn[i], scale));
        }

        let params = PhysicalParams { drag_re_scale: rng.random_range(0.5..20.0), ..Default::default() };
        let uf = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
        let slip_dir: f64 = rng.random_range(0.0..2.0 * PI);
        let slip = rng.random_range(0.05..1.0);
        let up = [uf[0] + slip * slip_dir.cos(), uf[1] + slip * slip_dir.sin()];
        let z = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let dt = |uf: [f64; 2], up: [f64; 2]| {
            let c = drag_coefficient(particle_reynolds(up, uf, &params)).unwrap_or(f64::NAN);
            c * ((up[0] - uf[0]) * z[0] + (up[1] - uf[1]) * z[1])
        };
        let (df, dp) = drag_sensitivity_terms(uf, up, z, &params);
        let scale = 1e-3 * df[0].abs().max(df[1].abs());
        for i in 0..2 {
            let (mut a, mut b) = (uf, uf);
            a[i] += h;
            b[i] -= h;
            drag = drag.max(rel((dt(a, up) - dt(b, up)) / (2.0 * h), df[i], scale));
            let (mut a, mut b) = (up, up);
            a[i] += h;
            b[i] -= h;
            drag = drag.max(rel((dt(uf, a) - dt(uf, b)) / (2.0 * h), dp[i], scale));
            anti = anti.max((df[i] + dp[i]).abs());
        }
    }
    Ok((erosion, drag, anti))
}

pub fn check_sensitivities(samples: usize, seed: u64) -> CheckResult {
    let start = Instant::now();
    let name = "sensitivities";
    match sensitivity_errors(samples, seed) {
        Ok((e, d, a)) => {
            let tol = 1e-4;
            let worst = e.max(d);
            CheckResult::new(
                name,
                worst <= tol && a <= 1e-12,
                worst,
                tol,
                format!("{samples} states: erosion {e:.2e}, drag {d:.2e}, antisymmetry {a:.1e} (tol 1e-12)"),
                start,
            )
        }
        Err(e) => CheckResult::failed(name, e, start),
    }
}

/// The small bend used for the transpose check: 55 vertices, 165 fluid dofs.
pub fn small_bend() -> Result<Mesh> {
    generate::bend(BendSpec { n_across: 4, n_inlet: 2, n_arc: 5, n_outlet: 3, ..BendSpec::reference(4) })
}

pub fn check_adjoint_transpose(params: &PhysicalParams) -> CheckResult {
    let start = Instant::now();
    let name = "adjoint_transpose";
    let run = || -> Result<_> {
        let mesh = small_bend()?;
        let (state, _) = solve_forward(&mesh, params, &Default::default())?;
        transpose_defects(&mesh, &state, params, Execution::Sequential)
    };
    match run() {
        Ok(d) => {
            let tol = 1e-10;
            CheckResult::new(
                name,
                d.max() <= tol && d.max_dofs <= 200,
                d.max(),
                tol,
                format!(
                    "{} dofs; transport {:.1e}, particle {:.1e}, fluid {:.1e}, couplings {:.1e}/{:.1e}; largest entry {:.2e}",
                    d.max_dofs, d.transport, d.particle, d.fluid, d.transport_coupling, d.particle_coupling, d.scale
                ),
                start,
            )
        }
        Err(e) => CheckResult::failed(name, e, start),
    }
}

/// Taylor tests of the reduced cost along random fields, keeping the
/// adjoint derivative so that mutated assemblies can be rescored.
#[derive(Clone, Debug)]
pub struct TaylorStudy {
    pub reports: Vec<TaylorReport>,
    /// Per field, the derivative with each single block negated.
    pub mutated: Vec<[f64; 8]>,
}

pub fn taylor_study(mesh: &Mesh, problem: &mut Problem, fields: usize, amplitude: f64, seed: u64) -> Result<TaylorStudy> {
    let eval = problem.initialize(mesh)?;
    let grad = problem.gradient(mesh, &eval)?;
    let b = grad.derivative.total();
    let mut reports = Vec::with_capacity(fields);
    let mut mutated = Vec::with_capacity(fields);
    for k in 0..fields {
        let v = random_deformation(mesh, seed + k as u64, amplitude);
        let r = taylor_test(
            |m| {
                let e = problem.evaluate(m)?;
                Ok((e.cost.total, Some(e.state.partition)))
            },
            mesh,
            &v,
            pair(&b, &v),
            &DEFAULT_TAYLOR_STEPS,
        )?;
        let mut dm = [0.0; 8];
        for blk in BLOCKS {
            dm[blk.index()] = pair(&grad.derivative.total_with(BlockSigns::negate(blk)), &v);
        }
        reports.push(r);
        mutated.push(dm);
    }
    Ok(TaylorStudy { reports, mutated })
}

impl TaylorStudy {
    /// Per block, the largest slope over the fields after negating it.
    pub fn mutation_slopes(&self) -> [f64; 8] {
        let mut s = [f64::NEG_INFINITY; 8];
        for (r, dm) in self.reports.iter().zip(&self.mutated) {
            for (i, d) in dm.iter().enumerate() {
                s[i] = s[i].max(r.rescore(*d).slope);
            }
        }
        s
    }

    pub fn taylor_check(&self, start: Instant) -> CheckResult {
        let slopes: Vec<f64> = self.reports.iter().map(|r| r.slope).collect();
        let flips = self.reports.iter().filter(|r| r.any_partition_change()).count();
        let worst = slopes.iter().fold(0.0f64, |a, s| a.max((s - 2.0).abs()));
        CheckResult::new(
            "taylor",
            self.reports.iter().all(|r| r.pass),
            worst,
            0.2,
            format!("slopes {slopes:.3?}; {flips} field(s) with a partition change"),
            start,
        )
    }

    pub fn mutation_check(&self, start: Instant) -> CheckResult {
        let s = self.mutation_slopes();
        let worst = s.iter().fold(f64::NEG_INFINITY, |a, b| a.max(*b));
        let detail = BLOCKS.iter().map(|b| format!("{} {:.2}", b.name(), s[b.index()])).collect::<Vec<_>>().join(", ");
        CheckResult::new("mutation", worst < 1.5, worst, 1.5, detail, start)
    }
}

/// Everything needed to run the suite.
#[derive(Clone, Debug)]
pub struct Suite<'a> {
    pub checks: Vec<String>,
    pub mesh: &'a Mesh,
    pub problem: Problem,
    pub taylor_fields: usize,
    pub amplitude: f64,
    pub seed: u64,
    pub lemma_fields: usize,
    pub lemma_n_across: usize,
    pub sensitivity_samples: usize,
}

pub struct SuiteOutcome {
    pub results: Vec<CheckResult>,
    pub taylor: Option<TaylorStudy>,
}

/// Run the selected checks in a fixed order. Unknown names are reported as
/// failed checks.
pub fn run_suite(mut s: Suite) -> SuiteOutcome {
    let want = |n: &str| s.checks.iter().any(|c| c == n);
    let mut results = Vec::new();
    for c in &s.checks {
        if !CHECKS.contains(&c.as_str()) {
            results.push(CheckResult { name: c.clone(), passed: false, value: f64::NAN, tolerance: f64::NAN, detail: "unknown check".into(), seconds: 0.0 });
        }
    }
    if want("lemma1") {
        results.push(check_lemma1(s.lemma_fields, s.lemma_n_across, s.seed));
    }
    if want("sensitivities") {
        results.push(check_sensitivities(s.sensitivity_samples, s.seed));
    }
    if want("adjoint_transpose") {
        results.push(check_adjoint_transpose(&s.problem.params));
    }
    let mut taylor = None;
    if want("taylor") || want("mutation") {
        let start = Instant::now();
        match taylor_study(s.mesh, &mut s.problem, s.taylor_fields, s.amplitude, s.seed) {
            Ok(t) => {
                if want("taylor") {
                    results.push(t.taylor_check(start));
                }
                if want("mutation") {
                    results.push(t.mutation_check(start));
                }
                taylor = Some(t);
            }
            Err(e) => {
                for n in ["taylor", "mutation"].into_iter().filter(|n| want(n)) {
                    results.push(CheckResult::failed(n, crate::Error::Solver(e.to_string()), start));
                }
            }
        }
    }
    SuiteOutcome { results, taylor }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::erosion::ErosionParams;

    fn suite<'a>(mesh: &'a Mesh, checks: &[&str]) -> Suite<'a> {
        Suite {
            checks: checks.iter().map(|s| s.to_string()).collect(),
            mesh,
            problem: Problem::new(PhysicalParams { stk: 1.34, ..Default::default() }, ErosionParams::default()).unwrap(),
            taylor_fields: 1,
            amplitude: 1.0,
            seed: 11,
            lemma_fields: 3,
            lemma_n_across: 4,
            sensitivity_samples: 20,
        }
    }

    #[test]
    fn empty_selection_runs_nothing() {
        let m = small_bend().unwrap();
        let out = run_suite(suite(&m, &[]));
        assert!(out.results.is_empty() && out.taylor.is_none());
    }

    #[test]
    fn unknown_check_fails() {
        let m = small_bend().unwrap();
        let out = run_suite(suite(&m, &["nope"]));
        assert_eq!(out.results.len(), 1);
        assert!(!out.results[0].passed);
    }

    #[test]
    fn cheap_checks_pass() {
        let m = small_bend().unwrap();
        let out = run_suite(suite(&m, &["lemma1", "sensitivities", "adjoint_transpose"]));
        assert_eq!(out.results.len(), 3);
        for r in &out.results {
            assert!(r.passed, "{r:?}");
        }
    }

    #[test]
    fn mutated_fluid_divergence_fails_the_taylor_test() {
        let m = small_bend().unwrap();
        let out = run_suite(suite(&m, &["taylor", "mutation"]));
        assert!(out.results[0].passed, "{:?}", out.results[0]);
        let t = out.taylor.unwrap();
        let s = t.mutation_slopes();
        assert!(s[crate::shape::Block::FluidDiv.index()] < 1.5, "{s:?}");
    }
}
