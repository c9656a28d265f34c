//! TOML run configuration.
//!
//! One table per section, scalar or flat-list keys only:
//!
//! ```toml
//! [mesh]
//! path = "bend.msh"        # relative to the config file; or
//! generator = "bend"       # built-in bend or channel
//! n_across = 14
//! inflow = [1]
//! wall = [2]
//! outflow = [3]
//! deformable = [4]
//!
//! [physics]
//! stk = 1.34
//!
//! [sweep]
//! diameters = [4e-6, 8e-6, 16e-6]
//! ```

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::erosion::ErosionParams;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::forward::ForwardOptions;
use crate::gradient::{GradientConfig, SaddleSolver};
use crate::mesh::generate::{self, BendSpec};
use crate::mesh::gmsh::{line_physical_ids, parse_mesh, TagMap};
use crate::mesh::Mesh;
use crate::optimizer::OptimizerConfig;
use crate::params::{PhysicalParams, SiParameters};
use crate::problem::Problem;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Generator {
    #[default]
    Bend,
    Channel,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MeshSection {
    pub path: Option<PathBuf>,
    pub generator: Generator,
    /// Cells across the channel for the built-in generators.
    pub n_across: usize,
    pub inflow: Vec<i64>,
    pub wall: Vec<i64>,
    pub outflow: Vec<i64>,
    pub deformable: Vec<i64>,
}

impl Default for MeshSection {
    fn default() -> Self {
        let t = TagMap::standard();
        MeshSection {
            path: None,
            generator: Generator::Bend,
            n_across: 14,
            inflow: t.inflow,
            wall: t.wall,
            outflow: t.outflow,
            deformable: t.deformable,
        }
    }
}

impl MeshSection {
    pub fn tags(&self) -> TagMap {
        TagMap { inflow: self.inflow.clone(), wall: self.wall.clone(), outflow: self.outflow.clone(), deformable: self.deformable.clone() }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub newton_rtol: f64,
    pub newton_atol: f64,
    pub newton_max_iter: usize,
    pub linear_rtol: f64,
    /// First artificial particle viscosity of the continuation.
    pub ramp_start: f64,
    pub ramp_factor: f64,
    pub mu_min: f64,
    pub mu_max: f64,
    pub saddle: SaddleSolver,
    pub parallel: bool,
}

impl Default for SolverSection {
    fn default() -> Self {
        let f = ForwardOptions::default();
        let g = GradientConfig::default();
        SolverSection {
            newton_rtol: f.newton.rtol,
            newton_atol: f.newton.atol,
            newton_max_iter: f.newton.max_iter,
            linear_rtol: f.newton.linear.rtol,
            ramp_start: f.ramp_start,
            ramp_factor: f.ramp_factor,
            mu_min: g.mu_min,
            mu_max: g.mu_max,
            saddle: g.saddle,
            parallel: true,
        }
    }
}

impl SolverSection {
    pub fn exec(&self) -> Execution {
        if self.parallel {
            Execution::default()
        } else {
            Execution::Sequential
        }
    }

    pub fn forward(&self) -> ForwardOptions {
        let mut f = ForwardOptions::default();
        f.newton.rtol = self.newton_rtol;
        f.newton.atol = self.newton_atol;
        f.newton.max_iter = self.newton_max_iter;
        f.newton.linear.rtol = self.linear_rtol;
        f.ramp_start = self.ramp_start;
        f.ramp_factor = self.ramp_factor;
        f.exec = self.exec();
        f
    }

    pub fn gradient(&self) -> GradientConfig {
        GradientConfig { mu_min: self.mu_min, mu_max: self.mu_max, saddle: self.saddle, exec: self.exec(), ..GradientConfig::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.newton_rtol > 0.0 && self.newton_atol > 0.0 && self.linear_rtol > 0.0) {
            return Err(Error::param("newton_rtol/newton_atol/linear_rtol", "must be positive"));
        }
        if self.newton_max_iter == 0 {
            return Err(Error::param("newton_max_iter", "must be at least 1"));
        }
        if !(self.ramp_start > 0.0 && self.ramp_factor > 1.0) {
            return Err(Error::param("ramp_start/ramp_factor", "need ramp_start > 0 and ramp_factor > 1"));
        }
        self.gradient().validate()
    }
}

/// Particle diameters of a sweep plus optional overrides of the SI
/// reference values.
#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub diameters: Vec<f64>,
    pub rho_f: Option<f64>,
    pub mu_f: Option<f64>,
    pub u_ref: Option<f64>,
    pub d_t: Option<f64>,
    pub r_b: Option<f64>,
    pub rho_p: Option<f64>,
    pub g: Option<f64>,
}

impl SweepSection {
    pub fn si(&self, d_p: f64) -> SiParameters {
        let r = SiParameters::reference(d_p);
        SiParameters {
            rho_f: self.rho_f.unwrap_or(r.rho_f),
            mu_f: self.mu_f.unwrap_or(r.mu_f),
            u_ref: self.u_ref.unwrap_or(r.u_ref),
            d_t: self.d_t.unwrap_or(r.d_t),
            r_b: self.r_b.unwrap_or(r.r_b),
            rho_p: self.rho_p.unwrap_or(r.rho_p),
            d_p,
            g: self.g.unwrap_or(r.g),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifySection {
    /// Checks to run, by name; see `verify::CHECKS`.
    pub checks: Vec<String>,
    /// Stokes number of the Taylor and mutation checks.
    pub stk: f64,
    pub taylor_fields: usize,
    pub amplitude: f64,
    pub seed: u64,
    pub lemma_fields: usize,
    /// Resolution of the bend used by the transformation check.
    pub lemma_n_across: usize,
    pub sensitivity_samples: usize,
}

impl Default for VerifySection {
    fn default() -> Self {
        VerifySection {
            checks: crate::verify::CHECKS.iter().map(|s| s.to_string()).collect(),
            stk: 1.34,
            taylor_fields: 3,
            amplitude: 0.1,
            seed: 1,
            lemma_fields: 20,
            lemma_n_across: 7,
            sensitivity_samples: 100,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
    pub vtk: bool,
    /// Write a VTK snapshot every this many accepted iterations; zero writes
    /// only the initial and final shapes.
    pub snapshot_every: usize,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: PathBuf::from("out"), vtk: false, snapshot_every: 0 }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub mesh: MeshSection,
    pub physics: PhysicalParams,
    pub erosion: ErosionParams,
    pub solver: SolverSection,
    pub optimizer: OptimizerConfig,
    pub sweep: SweepSection,
    pub verify: VerifySection,
    pub output: OutputSection,
    /// Directory that relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let c: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut c = Self::parse(&text)?;
        c.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        self.physics.validate()?;
        self.erosion.validate()?;
        self.solver.validate()?;
        self.optimizer.validate()?;
        if self.sweep.diameters.iter().any(|d| !(*d > 0.0 && d.is_finite())) {
            return Err(Error::param("diameters", "must be positive"));
        }
        if self.mesh.path.is_none() && self.mesh.n_across == 0 {
            return Err(Error::param("n_across", "must be at least 1"));
        }
        if !(self.verify.amplitude > 0.0) {
            return Err(Error::param("amplitude", "must be positive"));
        }
        Ok(())
    }

    pub fn mesh_path(&self) -> Option<PathBuf> {
        self.mesh.path.as_ref().map(|p| if p.is_absolute() { p.clone() } else { self.base_dir.join(p) })
    }

    /// Read or generate the mesh. Every physical id named in `[mesh]` must
    /// occur on a line element of the file.
    pub fn load_mesh(&self) -> Result<Mesh> {
        match self.mesh_path() {
            Some(path) => {
                let text = std::fs::read_to_string(&path).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
                let present = line_physical_ids(&text);
                let s = &self.mesh;
                for id in s.inflow.iter().chain(&s.wall).chain(&s.outflow).chain(&s.deformable) {
                    if !present.contains(id) {
                        return Err(Error::Mesh(format!("physical id {id} does not occur in {}", path.display())));
                    }
                }
                parse_mesh(&text, &s.tags())
            }
            None => match self.mesh.generator {
                Generator::Bend => generate::bend(BendSpec::reference(self.mesh.n_across)),
                Generator::Channel => {
                    let n = self.mesh.n_across;
                    generate::channel(4.0, 1.0, 4 * n, n)
                }
            },
        }
    }

    pub fn problem(&self) -> Result<Problem> {
        let mut p = Problem::new(self.physics.clone(), self.erosion.clone())?;
        p.forward = self.solver.forward();
        p.adjoint.exec = self.solver.exec();
        Ok(p)
    }

    pub fn output_dir(&self) -> PathBuf {
        if self.output.dir.is_absolute() {
            self.output.dir.clone()
        } else {
            self.base_dir.join(&self.output.dir)
        }
    }
}
