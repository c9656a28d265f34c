//! Acceptance criteria, one line per criterion. Failures are reported but
//! only fail the run with `EROOPT_ACCEPTANCE_STRICT=1`.

use std::time::{Duration, Instant};

use eroopt::erosion::{integrated_erosion, ErosionParams};
use eroopt::exec::Execution;
use eroopt::flow::{boundary_flux, l2_velocity_error, solve_flow, FlowOptions};
use eroopt::forward::ForwardOptions;
use eroopt::gradient::GradientConfig;
use eroopt::mesh::generate::{self, BendSpec};
use eroopt::mesh::{FacetTag, Mesh};
use eroopt::optimizer::{run, OptimizerConfig};
use eroopt::params::{derive_dimensionless, PhysicalParams, SiParameters};
use eroopt::problem::Problem;
use eroopt::shape::BLOCKS;
use eroopt::study::sweep;
use eroopt::verify::{check_adjoint_transpose, check_lemma1, check_sensitivities, taylor_study, TaylorStudy};

struct Line {
    id: u32,
    passed: bool,
    blocking: bool,
    text: String,
}

struct Report(Vec<Line>);

impl Report {
    fn add(&mut self, id: u32, passed: bool, limit: Duration, start: Instant, text: String) {
        let took = start.elapsed();
        let in_time = took <= limit;
        let text = if in_time { text } else { format!("{text}; runtime over the {:.0} s limit", limit.as_secs_f64()) };
        let line = Line { id, passed: passed && in_time, blocking: true, text: format!("{text} [{:.1} s]", took.as_secs_f64()) };
        println!("{} criterion {:>2}: {}", if line.passed { "PASS" } else { "FAIL" }, line.id, line.text);
        self.0.push(line);
    }

    fn note(&mut self, id: u32, met: bool, text: String) {
        println!("{} criterion {:>2}: {}", if met { "MET " } else { "MISS" }, id, text);
        self.0.push(Line { id, passed: met, blocking: false, text });
    }
}

fn secs(s: u64) -> Duration {
    Duration::from_secs(s)
}

/// Reference bend, 2100 cells, run at Re 200.
fn bend() -> Mesh {
    generate::bend(BendSpec::reference(14)).unwrap()
}

fn physics(stk: f64) -> PhysicalParams {
    PhysicalParams { re: 200.0, stk, ..Default::default() }
}

fn poiseuille(r: &mut Report) {
    let start = Instant::now();
    let p = PhysicalParams { re: 1.0, fr: f64::INFINITY, ..Default::default() };
    let exact = |x: [f64; 2]| [8.0 * x[1] * (1.0 - x[1]), 0.0];
    let mut errors = Vec::new();
    let mut mass = f64::NAN;
    for n in [8, 16, 32] {
        let m = generate::channel(2.0, 1.0, 2 * n, n).unwrap();
        match solve_flow(&m, &p, &FlowOptions::default()) {
            Ok((s, _)) => {
                errors.push(l2_velocity_error(&m, &s.u, exact));
                if n == 8 {
                    let qin = boundary_flux(&m, &s.u, FacetTag::Inflow);
                    mass = ((qin + boundary_flux(&m, &s.u, FacetTag::Outflow)) / qin).abs();
                }
            }
            Err(e) => {
                r.add(5, false, secs(120), start, format!("Poiseuille solve failed: {e}"));
                return;
            }
        }
    }
    let orders: Vec<f64> = errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    let order = orders.iter().fold(f64::INFINITY, |a, b| a.min(*b));
    r.add(
        5,
        order >= 1.8 && mass <= 1e-2,
        secs(120),
        start,
        format!("Poiseuille L2 errors {errors:.3?}, orders {orders:.3?} (min {order:.3} >= 1.8); mass defect {:.2e} <= 1e-2", mass),
    );
}

fn dimensionless(r: &mut Report) {
    let start = Instant::now();
    let d = derive_dimensionless(&SiParameters::reference(16e-6)).unwrap();
    let de = (d.de / 419.0 - 1.0).abs();
    let stk = (d.stk / 1.34 - 1.0).abs();
    let re = (d.re / 1000.0 - 1.0).abs();
    r.add(
        6,
        de <= 0.01 && stk <= 0.02 && re <= 0.05,
        secs(1),
        start,
        format!("De {:.1} vs 419 ({:.2}% <= 1%), Stk {:.4} vs 1.34 ({:.2}% <= 2%), Re {:.1} vs 1000 ({:.2}% <= 5%)", d.de, 100.0 * de, d.stk, 100.0 * stk, d.re, 100.0 * re),
    );
}

/// Diameter giving a Stokes number with the reference SI values.
fn diameter_for(stk: f64) -> f64 {
    let s = SiParameters::reference(1.0);
    (stk * 0.5 * s.d_t * 18.0 * s.mu_f / (s.rho_p * s.u_ref)).sqrt()
}

fn impact_trend(r: &mut Report, mesh: &Mesh) {
    let start = Instant::now();
    let si: Vec<SiParameters> = [0.13, 0.33, 0.6, 1.0, 1.34].iter().map(|s| SiParameters::reference(diameter_for(*s))).collect();
    let rows = sweep(mesh, &physics(1.34), &ErosionParams::default(), &ForwardOptions::default(), &si, Execution::default());
    let ok = rows.iter().all(|x| x.ok());
    let nondecreasing = rows.windows(2).all(|w| w[1].eta >= w[0].eta);
    let bounded = rows.iter().all(|x| (-0.02..=1.02).contains(&x.eta));
    let table: Vec<String> = rows.iter().map(|x| format!("d_p {:.2} um Stk {:.3} eta {:.4}", 1e6 * x.d_p, x.stk, x.eta)).collect();
    r.add(7, ok && nondecreasing && bounded && rows.len() >= 5, secs(600), start, format!("{}; nondecreasing {nondecreasing}, within [-0.02, 1.02] {bounded}", table.join(", ")));
}

fn optimization(r: &mut Report, mesh: &Mesh) {
    let start = Instant::now();
    let mut problem = Problem::new(physics(1.34), ErosionParams::default()).unwrap();
    let cfg = OptimizerConfig { max_iter: 15, ..Default::default() };
    let (out, h) = match run(mesh, &mut problem, &GradientConfig::default(), &cfg, |_, _, _| {}) {
        Ok(x) => x,
        Err(e) => {
            r.add(8, false, secs(3600), start, format!("optimisation failed: {e}"));
            r.add(9, false, secs(3600), start, "no iterations".into());
            return;
        }
    };
    let accepted = h.accepted();
    let decreasing = h.strictly_decreasing();
    let safe = h.records[1..].iter().all(|x| x.min_det >= cfg.det_min && x.max_det <= cfg.det_max && x.max_frob <= cfg.frob_max);
    let fixed = mesh.fixed_vertices().into_iter().all(|v| {
        let (a, b) = (mesh.vertices()[v], out.vertices()[v]);
        a[0].to_bits() == b[0].to_bits() && a[1].to_bits() == b[1].to_bits()
    });
    let j0 = h.records[0].j;
    let j1 = h.records.last().unwrap().j;
    r.add(
        8,
        accepted >= 10 && decreasing && safe && fixed,
        secs(3600),
        start,
        format!("{accepted} accepted steps (>= 10), J {j0:.4e} -> {j1:.4e} strictly decreasing {decreasing}, step safeguards {safe}, fixed vertices bitwise {fixed}; {:?}", h.termination),
    );

    let worst = h.records.iter().map(|x| x.tangentiality).fold(0.0f64, |a, b| if b.is_nan() { f64::INFINITY } else { a.max(b) });
    r.add(9, worst <= 1e-10, secs(3600), start, format!("max over {} iterations of int (Pi.n)^2 / int (G.n)^2 = {worst:.2e} <= 1e-10", h.records.len()));

    let erosion = |m: &Mesh| problem.evaluate(m).map(|e| integrated_erosion(m, &e.state.up, &e.state.alpha, &problem.erosion));
    match (erosion(mesh), erosion(&out)) {
        (Ok(e0), Ok(e1)) => {
            let reduction = 1.0 - e1 / e0;
            r.note(8, reduction >= 0.2, format!("target: integrated erosion {e0:.4e} -> {e1:.4e}, reduction {:.1}% (target >= 20%, non-blocking)", 100.0 * reduction));
        }
        (a, b) => r.note(8, false, format!("target: erosion evaluation failed: {:?} {:?}", a.err(), b.err())),
    }
}

fn taylor(r: &mut Report, mesh: &Mesh) -> Option<TaylorStudy> {
    let start = Instant::now();
    let mut problem = Problem::new(physics(1.34), ErosionParams::default()).unwrap();
    match taylor_study(mesh, &mut problem, 3, 0.1, 1) {
        Ok(t) => {
            let slopes: Vec<f64> = t.reports.iter().map(|x| x.slope).collect();
            let flips = t.reports.iter().filter(|x| x.any_partition_change()).count();
            r.add(
                4,
                t.reports.iter().all(|x| x.pass),
                secs(900),
                start,
                format!("{} cells, Re 200, Stk 1.34: slopes {slopes:.3?} in [1.8, 2.2]; {flips} field(s) with a boundary partition change", mesh.n_cells()),
            );
            Some(t)
        }
        Err(e) => {
            r.add(4, false, secs(900), start, format!("Taylor test failed: {e}"));
            None
        }
    }
}

fn mutation(r: &mut Report, t: Option<&TaylorStudy>) {
    let start = Instant::now();
    let Some(t) = t else {
        r.add(10, false, secs(1200), start, "no Taylor study".into());
        return;
    };
    let s = t.mutation_slopes();
    let detail: Vec<String> = BLOCKS.iter().map(|b| format!("{} {:.2}", b.name(), s[b.index()])).collect();
    let weak: Vec<&str> = BLOCKS.iter().filter(|b| s[b.index()] >= 1.5).map(|b| b.name()).collect();
    r.add(
        10,
        weak.is_empty(),
        secs(1200),
        start,
        format!("largest slope per negated block over 3 fields: {} (all < 1.5; not degraded: {weak:?})", detail.join(", ")),
    );
}

fn main() {
    let mut r = Report(Vec::new());
    let c1 = check_lemma1(20, 7, 1);
    let start = Instant::now() - Duration::from_secs_f64(c1.seconds);
    r.add(1, c1.passed, secs(10), start, format!("transformation derivatives: max relative error {:.2e} <= {:.0e}; {}", c1.value, c1.tolerance, c1.detail));
    let c2 = check_sensitivities(100, 1);
    let start = Instant::now() - Duration::from_secs_f64(c2.seconds);
    r.add(2, c2.passed, secs(5), start, format!("max relative error {:.2e} <= {:.0e}; {}", c2.value, c2.tolerance, c2.detail));
    let c3 = check_adjoint_transpose(&physics(1.34));
    let start = Instant::now() - Duration::from_secs_f64(c3.seconds);
    r.add(3, c3.passed, secs(30), start, format!("max entrywise difference {:.2e} <= {:.0e}; {}", c3.value, c3.tolerance, c3.detail));

    let mesh = bend();
    let study = taylor(&mut r, &mesh);
    poiseuille(&mut r);
    dimensionless(&mut r);
    impact_trend(&mut r, &mesh);
    optimization(&mut r, &mesh);
    mutation(&mut r, study.as_ref());

    let failed: Vec<u32> = r.0.iter().filter(|l| l.blocking && !l.passed).map(|l| l.id).collect();
    println!("acceptance: {} of {} blocking criteria pass", r.0.iter().filter(|l| l.blocking && l.passed).count(), r.0.iter().filter(|l| l.blocking).count());
    if !failed.is_empty() {
        println!("failing criteria: {failed:?}");
        if std::env::var("EROOPT_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
            std::process::exit(1);
        }
    }
}
