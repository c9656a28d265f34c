//! The complete forward pipeline: flow, particle velocity, boundary
//! classification and volume fraction.

use crate::error::Result;
use crate::exec::Execution;
use crate::flow::{solve_flow, FlowOptions, FlowState};
use crate::mesh::Mesh;
use crate::newton::{NewtonOptions, NewtonReport};
use crate::params::PhysicalParams;
use crate::particle::{classify_boundary, solve_particle_velocity, solve_volume_fraction, ParticleOptions, Partition};

#[derive(Clone, Debug)]
pub struct ForwardOptions {
    pub newton: NewtonOptions,
    pub exec: Execution,
    pub ramp_start: f64,
    pub ramp_factor: f64,
}

impl Default for ForwardOptions {
    fn default() -> Self {
        let p = ParticleOptions::default();
        ForwardOptions { newton: p.newton, exec: p.exec, ramp_start: p.ramp_start, ramp_factor: p.ramp_factor }
    }
}

impl ForwardOptions {
    pub fn flow(&self) -> FlowOptions {
        FlowOptions { newton: self.newton.clone(), exec: self.exec }
    }
    pub fn particle(&self) -> ParticleOptions {
        ParticleOptions { newton: self.newton.clone(), exec: self.exec, ramp_start: self.ramp_start, ramp_factor: self.ramp_factor }
    }
}

#[derive(Clone, Debug)]
pub struct ForwardState {
    pub flow: FlowState,
    pub up: Vec<[f64; 2]>,
    pub alpha: Vec<f64>,
    pub partition: Partition,
}

#[derive(Clone, Debug, Default)]
pub struct ForwardReport {
    pub flow: NewtonReport,
    pub particle: NewtonReport,
    pub transport: NewtonReport,
}

pub fn solve_forward(mesh: &Mesh, params: &PhysicalParams, opts: &ForwardOptions) -> Result<(ForwardState, ForwardReport)> {
    let (flow, rf) = solve_flow(mesh, params, &opts.flow())?;
    let popts = opts.particle();
    let (up, rp) = solve_particle_velocity(mesh, &flow, params, &popts)?;
    let partition = classify_boundary(mesh, &up)?;
    let (alpha, rt) = solve_volume_fraction(mesh, &up, &partition, params, &popts)?;
    Ok((ForwardState { flow, up, alpha, partition }, ForwardReport { flow: rf, particle: rp, transport: rt }))
}
