//! Physical and dimensionless parameters.

use serde::Deserialize;

use crate::error::{Error, Result};

/// Dimensionless parameters of the coupled model.
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhysicalParams {
    /// Reynolds number.
    pub re: f64,
    /// Froude number; `inf` disables gravity.
    pub fr: f64,
    /// Stokes number.
    pub stk: f64,
    /// Inverse artificial particle viscosity `K`.
    pub k: f64,
    /// Peclet number of the volume fraction.
    pub pe: f64,
    pub gravity_dir: [f64; 2],
    /// Inlet volume fraction.
    pub alpha_in: f64,
    /// Mean inflow speed; `4/3` gives a centreline speed of 2.
    pub inflow_mean: f64,
    /// `rho_f u_ref d_p / mu_f`: particle Reynolds number per unit slip speed.
    pub drag_re_scale: f64,
}

impl Default for PhysicalParams {
    fn default() -> Self {
        PhysicalParams {
            re: 200.0,
            fr: 27.7,
            stk: 0.33,
            k: 1e4,
            pe: 1e8,
            gravity_dir: [0.0, -1.0],
            alpha_in: 1.0,
            inflow_mean: 4.0 / 3.0,
            drag_re_scale: 1.18 * 3.86 * 8e-6 / 1.85e-5,
        }
    }
}

impl PhysicalParams {
    pub fn validate(&self) -> Result<()> {
        let pos = |name: &'static str, v: f64| {
            if v > 0.0 && !v.is_nan() {
                Ok(())
            } else {
                Err(Error::param(name, format!("must be positive, got {v}")))
            }
        };
        pos("re", self.re)?;
        pos("fr", self.fr)?;
        pos("stk", self.stk)?;
        pos("k", self.k)?;
        pos("pe", self.pe)?;
        pos("inflow_mean", self.inflow_mean)?;
        if !(self.drag_re_scale >= 0.0 && self.drag_re_scale.is_finite()) {
            return Err(Error::param("drag_re_scale", "must be finite and nonnegative"));
        }
        if !(self.alpha_in >= 0.0 && self.alpha_in.is_finite()) {
            return Err(Error::param("alpha_in", "must be finite and nonnegative"));
        }
        let gn = self.gravity_dir[0].hypot(self.gravity_dir[1]);
        if !((gn - 1.0).abs() < 1e-9) {
            return Err(Error::param("gravity_dir", "must be a unit vector"));
        }
        Ok(())
    }

    /// Copy with the particle numbers of one species.
    pub fn with_species(&self, d: &Dimensionless) -> Self {
        PhysicalParams { stk: d.stk, drag_re_scale: d.drag_re_scale, ..self.clone() }
    }

    /// Body force `Fr^-2 g`.
    pub fn gravity(&self) -> [f64; 2] {
        let s = if self.fr.is_finite() { 1.0 / (self.fr * self.fr) } else { 0.0 };
        [s * self.gravity_dir[0], s * self.gravity_dir[1]]
    }
}

/// Dimensional inputs in SI units.
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SiParameters {
    pub rho_f: f64,
    pub mu_f: f64,
    /// Reference velocity, the mean inlet velocity of the pipe.
    pub u_ref: f64,
    /// Pipe diameter, the reference length.
    pub d_t: f64,
    /// Bend radius.
    pub r_b: f64,
    pub rho_p: f64,
    pub d_p: f64,
    #[serde(default = "standard_gravity")]
    pub g: f64,
}

fn standard_gravity() -> f64 {
    9.81
}

impl SiParameters {
    /// Air with polyethylene-like particles in a 90 degree pipe bend.
    pub fn reference(d_p: f64) -> Self {
        SiParameters {
            rho_f: 1.18,
            mu_f: 1.85e-5,
            u_ref: 3.86,
            d_t: 3.95e-3,
            r_b: 1.13e-2,
            rho_p: 895.0,
            d_p,
            g: 9.81,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dimensionless {
    pub re: f64,
    pub fr: f64,
    pub stk: f64,
    pub de: f64,
    /// Curvature ratio `2 r_b / d_t`.
    pub r0: f64,
    /// Particle relaxation time in seconds.
    pub tau_p: f64,
    pub drag_re_scale: f64,
}

pub fn derive_dimensionless(si: &SiParameters) -> Result<Dimensionless> {
    let fields: [(&'static str, f64); 8] = [
        ("rho_f", si.rho_f),
        ("mu_f", si.mu_f),
        ("u_ref", si.u_ref),
        ("d_t", si.d_t),
        ("r_b", si.r_b),
        ("rho_p", si.rho_p),
        ("d_p", si.d_p),
        ("g", si.g),
    ];
    for (name, v) in fields {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::param(name, format!("must be positive and finite, got {v}")));
        }
    }
    let re = si.rho_f * si.u_ref * si.d_t / si.mu_f;
    let fr = si.u_ref / (si.d_t * si.g).sqrt();
    let tau_p = si.rho_p * si.d_p * si.d_p / (18.0 * si.mu_f);
    let stk = tau_p * si.u_ref / (0.5 * si.d_t);
    let r0 = 2.0 * si.r_b / si.d_t;
    Ok(Dimensionless {
        re,
        fr,
        stk,
        de: re / r0.sqrt(),
        r0,
        tau_p,
        drag_re_scale: si.rho_f * si.u_ref * si.d_p / si.mu_f,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_numbers() {
        let d = derive_dimensionless(&SiParameters::reference(16e-6)).unwrap();
        // hand arithmetic: 1.18 * 3.86 * 3.95e-3 / 1.85e-5
        assert!((d.re - 972.5).abs() < 0.1);
        assert!((d.stk - 1.3447).abs() < 1e-3);
        assert!((d.r0 - 5.7215).abs() < 1e-3);
    }

    #[test]
    fn scaling_laws() {
        let a = derive_dimensionless(&SiParameters::reference(8e-6)).unwrap();
        let mut si = SiParameters::reference(16e-6);
        let b = derive_dimensionless(&si).unwrap();
        assert!((b.stk / a.stk - 4.0).abs() < 1e-12);
        si.u_ref *= 2.0;
        let c = derive_dimensionless(&si).unwrap();
        assert!((c.re / b.re - 2.0).abs() < 1e-12);
        assert!((c.fr / b.fr - 2.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_nonpositive_viscosity() {
        let mut si = SiParameters::reference(8e-6);
        si.mu_f = 0.0;
        assert!(matches!(derive_dimensionless(&si), Err(Error::Parameter { name: "mu_f", .. })));
    }
}
