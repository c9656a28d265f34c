//! Gradient descent on the shape with Armijo backtracking.

use serde::{Deserialize, Serialize};

use crate::erosion::impact_rate;
use crate::error::{Error, Result};
use crate::gradient::{gradient_norm, shape_gradient, tangentiality, GradientConfig};
use crate::mesh::{Mesh, QualityBounds};
use crate::problem::{Evaluation, Problem};
use crate::shape::{pair, restrict};

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    /// Upper bound on the first trial step; the quality bounds usually cap it first.
    pub t0: f64,
    pub c_armijo: f64,
    pub backtrack: f64,
    pub max_iter: usize,
    pub max_backtracks: usize,
    /// Stop when `|G_j| / |G_1|` falls below this; zero disables the test.
    pub grad_rtol: f64,
    pub det_min: f64,
    pub det_max: f64,
    pub frob_max: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        let q = QualityBounds::default();
        OptimizerConfig {
            t0: 1e6,
            c_armijo: 1e-4,
            backtrack: 0.5,
            max_iter: 20,
            max_backtracks: 30,
            grad_rtol: 0.0,
            det_min: q.det_min,
            det_max: q.det_max,
            frob_max: q.frob_max,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.t0 > 0.0) {
            return Err(Error::param("t0", "must be positive"));
        }
        if !(self.c_armijo > 0.0 && self.c_armijo < 1.0) {
            return Err(Error::param("c_armijo", "must lie in (0, 1)"));
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return Err(Error::param("backtrack", "must lie in (0, 1)"));
        }
        if !(self.grad_rtol >= 0.0) {
            return Err(Error::param("grad_rtol", "must be nonnegative"));
        }
        if !(self.det_min > 0.0 && self.det_min < 1.0 && self.det_max > 1.0 && self.frob_max > 0.0) {
            return Err(Error::param("det_min/det_max/frob_max", "need 0 < det_min < 1 < det_max and frob_max > 0"));
        }
        Ok(())
    }

    pub fn bounds(&self) -> QualityBounds {
        QualityBounds { det_min: self.det_min, det_max: self.det_max, frob_max: self.frob_max }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LineSearch<T> {
    pub t: f64,
    pub value: f64,
    pub backtracks: usize,
    pub data: T,
}

/// Backtracking from `t_start` until `J(t) <= J0 + c t slope`. Trials for
/// which `eval` returns `Ok(None)` or an error count as rejections. `None`
/// when no trial is accepted.
pub fn armijo<T>(
    j0: f64,
    slope: f64,
    t_start: f64,
    cfg: &OptimizerConfig,
    mut eval: impl FnMut(f64) -> Result<Option<(f64, T)>>,
) -> Option<LineSearch<T>> {
    if !(slope < 0.0) || !(t_start > 0.0) {
        return None;
    }
    let mut t = t_start;
    for k in 0..=cfg.max_backtracks {
        if let Ok(Some((j, data))) = eval(t) {
            if j.is_finite() && j < j0 && j <= j0 + cfg.c_armijo * t * slope {
                return Some(LineSearch { t, value: j, backtracks: k, data });
            }
        }
        t *= cfg.backtrack;
    }
    None
}

/// One row of the history: the state on mesh `iter` and the step that led to it.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iter: usize,
    #[serde(rename = "J")]
    pub j: f64,
    #[serde(rename = "J_erosion")]
    pub j_erosion: f64,
    #[serde(rename = "J_willmore")]
    pub j_willmore: f64,
    /// `|G_restricted|` on the deformable boundary of this mesh.
    pub grad_norm: f64,
    pub step: f64,
    pub min_det: f64,
    pub max_det: f64,
    pub max_frob: f64,
    pub eta: f64,
    pub backtracks: usize,
    /// `int (Pi.n)^2 / int (G.n)^2` on this mesh.
    pub tangentiality: f64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Termination {
    MaxIterations,
    /// No trial step gave sufficient decrease.
    NoDecrease,
    /// `dJ(-G_restricted)` is not negative.
    NoDescent,
    GradientTolerance,
    /// A stage failed; the history holds everything before it.
    Failure(String),
}

#[derive(Clone, Debug)]
pub struct OptHistory {
    pub records: Vec<IterationRecord>,
    pub termination: Termination,
}

impl OptHistory {
    pub fn accepted(&self) -> usize {
        self.records.len().saturating_sub(1)
    }

    pub fn strictly_decreasing(&self) -> bool {
        self.records.windows(2).all(|w| w[1].j < w[0].j)
    }
}

fn record(iter: usize, mesh: &Mesh, e: &Evaluation) -> IterationRecord {
    IterationRecord {
        iter,
        j: e.cost.total,
        j_erosion: e.cost.erosion,
        j_willmore: e.cost.willmore,
        grad_norm: f64::NAN,
        step: 0.0,
        min_det: 1.0,
        max_det: 1.0,
        max_frob: 0.0,
        eta: impact_rate(mesh, &e.state.alpha, &e.state.up).unwrap_or(f64::NAN),
        backtracks: 0,
        tangentiality: f64::NAN,
    }
}

/// Run the descent loop from `mesh0`. `c1` is resolved on the initial mesh
/// and then held fixed. `observer` sees every accepted mesh, the initial one
/// included.
pub fn run(
    mesh0: &Mesh,
    problem: &mut Problem,
    gcfg: &GradientConfig,
    cfg: &OptimizerConfig,
    mut observer: impl FnMut(usize, &Mesh, &Evaluation),
) -> Result<(Mesh, OptHistory)> {
    cfg.validate()?;
    gcfg.validate()?;
    let bounds = cfg.bounds();
    let mut mesh = mesh0.clone();
    let mut eval = problem.initialize(&mesh)?;
    observer(0, &mesh, &eval);
    let mut records = vec![record(0, &mesh, &eval)];
    let mut first_norm = None;
    let termination = loop {
        let k = records.len() - 1;
        let grad = match problem.gradient(&mesh, &eval) {
            Ok(g) => g,
            Err(e) => break Termination::Failure(format!("adjoint at iteration {k}: {e}")),
        };
        let mut dj = grad.derivative.total();
        restrict(&mesh, &mut dj);
        let sg = match shape_gradient(&mesh, &dj, gcfg) {
            Ok(g) => g,
            Err(e) => break Termination::Failure(format!("shape gradient at iteration {k}: {e}")),
        };
        let norm = gradient_norm(&mesh, &sg.restricted);
        let last = records.last_mut().expect("history starts with the initial record");
        last.grad_norm = norm;
        last.tangentiality = tangentiality(&mesh, &sg.g, &sg.pi);
        let n1 = *first_norm.get_or_insert(norm);
        if k >= cfg.max_iter {
            break Termination::MaxIterations;
        }
        if cfg.grad_rtol > 0.0 && norm <= cfg.grad_rtol * n1 {
            break Termination::GradientTolerance;
        }
        let w: Vec<[f64; 2]> = sg.restricted.iter().map(|g| [-g[0], -g[1]]).collect();
        let slope = pair(&dj, &w);
        if !(slope < 0.0) {
            break Termination::NoDescent;
        }
        let t_start = match mesh.max_admissible_step(&w, bounds, cfg.t0) {
            Ok(t) => t,
            Err(e) => break Termination::Failure(format!("step bound at iteration {k}: {e}")),
        };
        let found = armijo(eval.cost.total, slope, t_start, cfg, |t| {
            let moved = match mesh.deform(&w, t, bounds) {
                Ok(m) => m,
                Err(Error::Quality(_)) => return Ok(None),
                Err(e) => return Err(e),
            };
            let q = mesh.quality(&w, t, bounds)?;
            let e = problem.evaluate(&moved)?;
            Ok(Some((e.cost.total, (moved, e, q))))
        });
        let Some(ls) = found else {
            break Termination::NoDecrease;
        };
        let (moved, e, q) = ls.data;
        mesh = moved;
        eval = e;
        let mut r = record(k + 1, &mesh, &eval);
        r.step = ls.t;
        r.min_det = q.min_det;
        r.max_det = q.max_det;
        r.max_frob = q.max_frob;
        r.backtracks = ls.backtracks;
        observer(k + 1, &mesh, &eval);
        records.push(r);
    };
    Ok((mesh, OptHistory { records, termination }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::erosion::ErosionParams;
    use crate::mesh::generate::{self, BendSpec};
    use crate::params::PhysicalParams;

    #[test]
    fn quadratic_line_search() {
        let cfg = OptimizerConfig::default();
        // J(t) = (t - 1)^2, slope -2, capped at 0.212
        let r = armijo(1.0, -2.0, 0.212, &cfg, |t| Ok(Some(((t - 1.0f64).powi(2), ())))).unwrap();
        assert_eq!(r.t, 0.212);
        assert_eq!(r.backtracks, 0);
        // uncapped start backtracks to a decrease
        let r = armijo(1.0, -2.0, 8.0, &cfg, |t| Ok(Some(((t - 1.0f64).powi(2), ())))).unwrap();
        assert!(r.t <= 1.0 && r.value < 1.0);
    }

    #[test]
    fn no_direction_no_step() {
        let cfg = OptimizerConfig::default();
        assert!(armijo(1.0, 0.0, 1.0, &cfg, |_| Ok(Some((0.0, ())))).is_none());
        assert!(armijo(1.0, -1.0, 1.0, &cfg, |_| Ok(None::<(f64, ())>)).is_none());
    }

    #[test]
    fn identity_field_cap() {
        let m = generate::rectangle(1.0, 1.0, 4, 4, generate::RectangleTags::all_deformable_wall()).unwrap();
        let w: Vec<[f64; 2]> = m.vertices().to_vec();
        let t = m.max_admissible_step(&w, OptimizerConfig::default().bounds(), 1e6).unwrap();
        assert!((t - 0.3 / 2f64.sqrt()).abs() < 1e-12);
    }

    fn small_bend() -> Mesh {
        generate::bend(BendSpec { n_across: 4, n_inlet: 2, n_arc: 5, n_outlet: 3, ..BendSpec::reference(4) }).unwrap()
    }

    #[test]
    fn zero_iterations() {
        let m = small_bend();
        let mut p = Problem::new(PhysicalParams { stk: 1.34, ..Default::default() }, ErosionParams::default()).unwrap();
        let cfg = OptimizerConfig { max_iter: 0, ..Default::default() };
        let (out, h) = run(&m, &mut p, &GradientConfig::default(), &cfg, |_, _, _| {}).unwrap();
        assert_eq!(h.records.len(), 1);
        assert_eq!(h.termination, Termination::MaxIterations);
        assert_eq!(out.vertices(), m.vertices());
        assert!(h.records[0].grad_norm > 0.0);
    }

    #[test]
    fn descent_on_a_small_bend() {
        let m = small_bend();
        let mut p = Problem::new(PhysicalParams { stk: 1.34, ..Default::default() }, ErosionParams::default()).unwrap();
        let cfg = OptimizerConfig { max_iter: 3, ..Default::default() };
        let (out, h) = run(&m, &mut p, &GradientConfig::default(), &cfg, |_, _, _| {}).unwrap();
        assert!(h.accepted() >= 1, "{:?}", h.termination);
        assert!(h.strictly_decreasing());
        for v in m.fixed_vertices() {
            assert_eq!(out.vertices()[v][0].to_bits(), m.vertices()[v][0].to_bits());
            assert_eq!(out.vertices()[v][1].to_bits(), m.vertices()[v][1].to_bits());
        }
        for r in &h.records[1..] {
            assert!(r.min_det >= cfg.det_min && r.max_det <= cfg.det_max && r.max_frob <= cfg.frob_max);
            assert!(r.tangentiality <= 1e-10 || r.tangentiality.is_nan());
        }
    }
}
