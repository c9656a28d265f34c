//! Particle-size sweeps and CSV export.
//!
//! Every CSV starts with a `# eroopt-<kind> v<N>` line naming the schema,
//! followed by a header row:
//!
//! | kind    | columns |
//! |---------|---------|
//! | sweep   | `d_p, stk, eta, erosion, error` |
//! | history | `iter, J, J_erosion, J_willmore, grad_norm, step, min_det, max_frob, eta` |
//! | taylor  | `field, t, value, remainder, partition_changed` |
//! | verify  | `name, passed, value, tolerance, detail, seconds` |

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::erosion::{facet_erosion, impact_rate, integrated_erosion, ErosionParams};
use crate::error::{Error, Result};
use crate::exec::{map_range, Execution};
use crate::forward::{solve_forward, ForwardOptions, ForwardState};
use crate::mesh::vtk::{write_boundary, write_volume, VtkField};
use crate::mesh::Mesh;
use crate::optimizer::IterationRecord;
use crate::params::{derive_dimensionless, PhysicalParams, SiParameters};
use crate::shape::TaylorReport;
use crate::verify::CheckResult;

pub const SWEEP_SCHEMA: &str = "# eroopt-sweep v1";
pub const HISTORY_SCHEMA: &str = "# eroopt-history v1";
pub const TAYLOR_SCHEMA: &str = "# eroopt-taylor v1";
pub const VERIFY_SCHEMA: &str = "# eroopt-verify v1";

/// One species of a sweep. A failed pipeline leaves `eta` and `erosion`
/// as NaN and records the reason.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpeciesResult {
    pub d_p: f64,
    pub stk: f64,
    pub eta: f64,
    pub erosion: f64,
    pub error: String,
}

impl SpeciesResult {
    pub fn ok(&self) -> bool {
        self.error.is_empty()
    }
}

fn species(mesh: &Mesh, base: &PhysicalParams, erosion: &ErosionParams, opts: &ForwardOptions, si: &SiParameters) -> SpeciesResult {
    let mut row = SpeciesResult { d_p: si.d_p, stk: f64::NAN, eta: f64::NAN, erosion: f64::NAN, error: String::new() };
    let run = |row: &mut SpeciesResult| -> Result<()> {
        let d = derive_dimensionless(si)?;
        row.stk = d.stk;
        let params = base.with_species(&d);
        params.validate()?;
        let (state, _) = solve_forward(mesh, &params, opts)?;
        row.eta = impact_rate(mesh, &state.alpha, &state.up)?;
        row.erosion = integrated_erosion(mesh, &state.up, &state.alpha, erosion);
        Ok(())
    };
    if let Err(e) = run(&mut row) {
        row.error = e.to_string();
    }
    row
}

/// Forward pipeline per species; the Reynolds and Froude numbers of `base`
/// are kept, the Stokes number and drag scaling come from each `si`.
/// Species run concurrently under `exec`.
pub fn sweep(mesh: &Mesh, base: &PhysicalParams, erosion: &ErosionParams, opts: &ForwardOptions, species_si: &[SiParameters], exec: Execution) -> Vec<SpeciesResult> {
    map_range(exec, species_si.len(), |i| species(mesh, base, erosion, opts, &species_si[i]))
}

fn csv_writer<W: Write>(mut out: W, schema: &str) -> Result<csv::Writer<W>> {
    writeln!(out, "{schema}")?;
    Ok(csv::Writer::from_writer(out))
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

pub fn write_sweep_csv<W: Write>(out: W, rows: &[SpeciesResult]) -> Result<()> {
    let mut w = csv_writer(out, SWEEP_SCHEMA)?;
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct HistoryRow {
    iter: usize,
    #[serde(rename = "J")]
    j: f64,
    #[serde(rename = "J_erosion")]
    j_erosion: f64,
    #[serde(rename = "J_willmore")]
    j_willmore: f64,
    grad_norm: f64,
    step: f64,
    min_det: f64,
    max_frob: f64,
    eta: f64,
}

pub fn write_history_csv<W: Write>(out: W, records: &[IterationRecord]) -> Result<()> {
    let mut w = csv_writer(out, HISTORY_SCHEMA)?;
    for r in records {
        let row = HistoryRow {
            iter: r.iter,
            j: r.j,
            j_erosion: r.j_erosion,
            j_willmore: r.j_willmore,
            grad_norm: r.grad_norm,
            step: r.step,
            min_det: r.min_det,
            max_frob: r.max_frob,
            eta: r.eta,
        };
        w.serialize(row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct TaylorRow {
    field: usize,
    t: f64,
    value: f64,
    remainder: f64,
    partition_changed: bool,
}

pub fn write_taylor_csv<W: Write>(out: W, reports: &[TaylorReport]) -> Result<()> {
    let mut w = csv_writer(out, TAYLOR_SCHEMA)?;
    for (field, r) in reports.iter().enumerate() {
        for k in 0..r.steps.len() {
            let row = TaylorRow { field, t: r.steps[k], value: r.values[k], remainder: r.remainders[k], partition_changed: r.partition_changed[k] };
            w.serialize(row).map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_checks_csv<W: Write>(out: W, results: &[CheckResult]) -> Result<()> {
    let mut w = csv_writer(out, VERIFY_SCHEMA)?;
    for r in results {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// `<stem>_volume.vtk` with the flow, particle and volume fraction fields and
/// `<stem>_boundary.vtk` with the erosion rate per facet.
pub fn write_state_vtk(dir: &Path, stem: &str, mesh: &Mesh, state: &ForwardState, erosion: &ErosionParams) -> Result<()> {
    let e = facet_erosion(mesh, &state.up, &state.alpha, erosion);
    let minus: Vec<f64> = (0..mesh.n_facets()).map(|f| if state.partition.is_minus(f) { 1.0 } else { 0.0 }).collect();
    write_volume(
        mesh,
        &[
            VtkField::Vector("u", &state.flow.u),
            VtkField::Scalar("p", &state.flow.p),
            VtkField::Vector("u_p", &state.up),
            VtkField::Scalar("alpha", &state.alpha),
        ],
        dir.join(format!("{stem}_volume.vtk")),
    )?;
    write_boundary(mesh, &[VtkField::Scalar("erosion", &e), VtkField::Scalar("gamma_minus", &minus)], dir.join(format!("{stem}_boundary.vtk")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::generate;

    fn text(f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> String {
        let mut buf = Vec::new();
        f(&mut buf).unwrap();
        String::from_utf8(buf).unwrap()
    }

    #[test]
    fn sweep_schema() {
        let rows = vec![SpeciesResult { d_p: 8e-6, stk: 0.336, eta: 0.5, erosion: 1e-3, error: String::new() }];
        let s = text(|b| write_sweep_csv(b, &rows));
        let mut lines = s.lines();
        assert_eq!(lines.next(), Some(SWEEP_SCHEMA));
        assert_eq!(lines.next(), Some("d_p,stk,eta,erosion,error"));
        assert_eq!(lines.count(), 1);
    }

    #[test]
    fn history_schema() {
        let r = IterationRecord {
            iter: 0,
            j: 1.0,
            j_erosion: 0.9,
            j_willmore: 0.1,
            grad_norm: 2.0,
            step: 0.0,
            min_det: 1.0,
            max_det: 1.0,
            max_frob: 0.0,
            eta: 0.3,
            backtracks: 0,
            tangentiality: 0.0,
        };
        let s = text(|b| write_history_csv(b, &[r]));
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines[0], HISTORY_SCHEMA);
        assert_eq!(lines[1], "iter,J,J_erosion,J_willmore,grad_norm,step,min_det,max_frob,eta");
        assert_eq!(lines.len(), 3);
    }

    #[test]
    fn verify_schema() {
        let r = CheckResult { name: "x".into(), passed: true, value: 1e-12, tolerance: 1e-10, detail: "a, b".into(), seconds: 0.5 };
        let s = text(|b| write_checks_csv(b, &[r]));
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines[0], VERIFY_SCHEMA);
        assert_eq!(lines[1], "name,passed,value,tolerance,detail,seconds");
        assert_eq!(lines[2], "x,true,1e-12,1e-10,\"a, b\",0.5");
    }

    #[test]
    fn vtk_files() {
        let m = generate::channel(2.0, 1.0, 8, 3).unwrap();
        let p = PhysicalParams { re: 20.0, fr: f64::INFINITY, ..Default::default() };
        let (state, _) = solve_forward(&m, &p, &ForwardOptions::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_state_vtk(dir.path(), "s", &m, &state, &ErosionParams::default()).unwrap();
        let v = std::fs::read_to_string(dir.path().join("s_volume.vtk")).unwrap();
        assert!(v.contains("VECTORS u_p double") && v.contains("SCALARS alpha double 1"));
        let b = std::fs::read_to_string(dir.path().join("s_boundary.vtk")).unwrap();
        assert!(b.contains(&format!("CELL_DATA {}", m.n_facets())));
    }

    #[test]
    fn straight_channel_species() {
        // nothing deposits in a straight channel; the residual is the
        // alpha = 0 wall row, which shrinks with the mesh
        let m = generate::channel(3.0, 1.0, 48, 16).unwrap();
        let base = PhysicalParams { re: 50.0, fr: f64::INFINITY, ..Default::default() };
        let si = [SiParameters::reference(8e-6), SiParameters::reference(8e-6)];
        let rows = sweep(&m, &base, &ErosionParams::default(), &ForwardOptions::default(), &si, Execution::default());
        assert_eq!(rows.len(), 2);
        assert!(rows[0].ok(), "{}", rows[0].error);
        assert!(rows[0].eta.abs() <= 0.02, "{rows:?}");
        assert!((rows[0].stk - 0.336).abs() < 1e-3);
        // duplicates are identical
        assert!((rows[0].eta - rows[1].eta).abs() <= 1e-10);
        assert!((rows[0].erosion - rows[1].erosion).abs() <= 1e-10);
    }

    #[test]
    fn failed_species_is_recorded() {
        let m = generate::channel(3.0, 1.0, 6, 2).unwrap();
        let mut bad = SiParameters::reference(8e-6);
        bad.d_p = -1.0;
        let rows = sweep(&m, &PhysicalParams::default(), &ErosionParams::default(), &ForwardOptions::default(), &[bad, SiParameters::reference(8e-6)], Execution::Sequential);
        assert!(!rows[0].ok() && rows[0].eta.is_nan());
        assert!(rows[1].ok());
    }
}
