//! Physical constants and nondimensional scaling.
//!
//! Lengths are scaled by the lunar radius, speeds by the circular speed at
//! the surface, time by `sqrt(R0^3 / mu)`, mass by the initial mass and force
//! by `m0 * mu / R0^2`. With these references the gravitational parameter is
//! exactly one.

use serde::{Deserialize, Serialize};

use crate::dynamics::LanderState;
use crate::error::{Error, Result};
use crate::math;

/// Physical description of the Moon and the lander, SI units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalParams {
    /// Lunar radius [m].
    pub r0: f64,
    /// Gravitational parameter [m^3/s^2].
    pub mu: f64,
    /// Specific impulse [s].
    pub isp: f64,
    /// Standard gravity used with `isp` [m/s^2].
    pub ge: f64,
    /// Maximum thrust [N].
    pub thrust_max: f64,
    /// Initial (reference) mass [kg].
    pub m0: f64,
    /// Dry mass [kg].
    pub m_dry: f64,
}

impl Default for PhysicalParams {
    fn default() -> Self {
        Self {
            r0: 1.738e6,
            mu: 4.90275e12,
            isp: 300.0,
            ge: 9.81,
            thrust_max: 1500.0,
            m0: 600.0,
            m_dry: 250.0,
        }
    }
}

impl PhysicalParams {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("R0", self.r0),
            ("mu", self.mu),
            ("Isp", self.isp),
            ("ge", self.ge),
            ("Tm", self.thrust_max),
            ("m0", self.m0),
            ("m_dry", self.m_dry),
        ];
        for (name, value) in fields {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::InvalidParameter { name, value });
            }
        }
        if self.m_dry >= self.m0 {
            return Err(Error::InvalidParameter {
                name: "m_dry",
                value: self.m_dry,
            });
        }
        Ok(())
    }

    pub fn scaling(&self) -> Result<Scaling> {
        self.validate()?;
        let length = self.r0;
        let velocity = math::sqrt(self.mu / self.r0);
        let time = math::sqrt(self.r0 * self.r0 * self.r0 / self.mu);
        let mass = self.m0;
        let force = self.m0 * self.mu / (self.r0 * self.r0);
        Ok(Scaling {
            length,
            velocity,
            time,
            mass,
            force,
        })
    }

    pub fn dimensionless(&self) -> Result<DimensionlessParams> {
        let s = self.scaling()?;
        Ok(DimensionlessParams {
            thrust: self.thrust_max / s.force,
            exhaust_velocity: self.isp * self.ge / s.velocity,
            dry_mass: self.m_dry / s.mass,
        })
    }

    /// Mass flow at full thrust [kg/s].
    pub fn mass_flow(&self) -> f64 {
        self.thrust_max / (self.isp * self.ge)
    }
}

/// Reference quantities for the five scaled variables.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scaling {
    pub length: f64,
    pub velocity: f64,
    pub time: f64,
    pub mass: f64,
    pub force: f64,
}

/// Lander state in SI units (angle in radians, angular rate in rad/s).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SiState {
    pub r_m: f64,
    pub v_mps: f64,
    pub theta_rad: f64,
    pub omega_radps: f64,
    pub m_kg: f64,
}

impl Scaling {
    pub fn state_to_dimensionless(&self, x: &SiState) -> LanderState {
        LanderState {
            r: x.r_m / self.length,
            v: x.v_mps / self.velocity,
            theta: x.theta_rad,
            omega: x.omega_radps * self.time,
            m: x.m_kg / self.mass,
        }
    }

    pub fn state_to_si(&self, x: &LanderState) -> SiState {
        SiState {
            r_m: x.r * self.length,
            v_mps: x.v * self.velocity,
            theta_rad: x.theta,
            omega_radps: x.omega / self.time,
            m_kg: x.m * self.mass,
        }
    }

    pub fn time_to_dimensionless(&self, t_s: f64) -> f64 {
        t_s / self.time
    }

    pub fn time_to_si(&self, t: f64) -> f64 {
        t * self.time
    }

    pub fn thrust_to_dimensionless(&self, thrust_n: f64) -> f64 {
        thrust_n / self.force
    }

    pub fn thrust_to_si(&self, thrust: f64) -> f64 {
        thrust * self.force
    }
}

/// Constants entering the scaled equations of motion (`mu = 1`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DimensionlessParams {
    /// Maximum thrust over the reference force.
    pub thrust: f64,
    /// `Isp * ge` over the reference speed.
    pub exhaust_velocity: f64,
    /// Dry mass over the reference mass.
    pub dry_mass: f64,
}

impl DimensionlessParams {
    /// Scaled mass flow at full thrust.
    pub fn mass_flow(&self) -> f64 {
        self.thrust / self.exhaust_velocity
    }
}

impl Default for DimensionlessParams {
    fn default() -> Self {
        PhysicalParams::default()
            .dimensionless()
            .expect("default physical parameters are valid")
    }
}
