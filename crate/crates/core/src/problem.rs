//! Reduced cost `J(Omega)` with its shape derivative.

use crate::adjoint::{solve_adjoint, AdjointOptions, AdjointReport, AdjointState};
use crate::erosion::{cost_functional, CostTerms, ErosionParams, WillmoreDerivative};
use crate::error::{Error, Result};
use crate::forward::{solve_forward, ForwardOptions, ForwardReport, ForwardState};
use crate::mesh::Mesh;
use crate::params::PhysicalParams;
use crate::shape::{shape_derivative_functional, ShapeDerivative};

#[derive(Clone, Debug)]
pub struct Problem {
    pub params: PhysicalParams,
    pub erosion: ErosionParams,
    pub forward: ForwardOptions,
    pub adjoint: AdjointOptions,
    pub willmore: WillmoreDerivative,
}

#[derive(Clone, Debug)]
pub struct Evaluation {
    pub state: ForwardState,
    pub cost: CostTerms,
    pub report: ForwardReport,
}

#[derive(Clone, Debug)]
pub struct Gradient {
    pub derivative: ShapeDerivative,
    pub adjoint: AdjointState,
    pub report: AdjointReport,
}

impl Problem {
    pub fn new(params: PhysicalParams, erosion: ErosionParams) -> Result<Self> {
        params.validate()?;
        erosion.validate()?;
        Ok(Problem {
            params,
            erosion,
            forward: ForwardOptions::default(),
            adjoint: AdjointOptions::default(),
            willmore: WillmoreDerivative::default(),
        })
    }

    /// Forward solve and cost. An unset `c1` is resolved on this mesh.
    pub fn evaluate(&self, mesh: &Mesh) -> Result<Evaluation> {
        let (state, report) = solve_forward(mesh, &self.params, &self.forward)?;
        let cost = cost_functional(mesh, &state.up, &state.alpha, &self.erosion)?;
        if !cost.total.is_finite() {
            return Err(Error::Solver("non-finite cost".into()));
        }
        Ok(Evaluation { state, cost, report })
    }

    /// Evaluate on the initial mesh and freeze the resolved `c1`.
    pub fn initialize(&mut self, mesh: &Mesh) -> Result<Evaluation> {
        let e = self.evaluate(mesh)?;
        self.erosion.c1 = Some(e.cost.c1);
        Ok(e)
    }

    /// Adjoint solve and shape derivative at an evaluated state, with `c1`
    /// held at the value used for the cost.
    pub fn gradient(&self, mesh: &Mesh, eval: &Evaluation) -> Result<Gradient> {
        let mut ep = self.erosion.clone();
        ep.c1 = Some(eval.cost.c1);
        let (adjoint, report) = solve_adjoint(mesh, &eval.state, &self.params, &ep, &self.adjoint)?;
        let derivative = shape_derivative_functional(mesh, &eval.state, &adjoint, &self.params, &ep, self.willmore, self.adjoint.exec)?;
        Ok(Gradient { derivative, adjoint, report })
    }
}
