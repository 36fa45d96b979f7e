//! Point-mass dynamics, Hamiltonian and the pointwise optimal control laws.
//!
//! All functions take scaled quantities (see [`crate::params`]) and treat the
//! gravitational parameter as one. Any non-finite intermediate is reported as
//! an error instead of being propagated.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math;
use crate::params::DimensionlessParams;

/// Scaled flight state `(r, v, theta, omega, m)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LanderState {
    pub r: f64,
    pub v: f64,
    pub theta: f64,
    pub omega: f64,
    pub m: f64,
}

impl LanderState {
    pub const fn new(r: f64, v: f64, theta: f64, omega: f64, m: f64) -> Self {
        Self {
            r,
            v,
            theta,
            omega,
            m,
        }
    }

    pub fn to_array(&self) -> [f64; 5] {
        [self.r, self.v, self.theta, self.omega, self.m]
    }

    pub fn from_array(a: [f64; 5]) -> Self {
        Self::new(a[0], a[1], a[2], a[3], a[4])
    }

    pub fn check(&self) -> Result<()> {
        if !self.to_array().iter().all(|c| c.is_finite()) {
            return Err(Error::NonFinite("state"));
        }
        if self.r <= 0.0 {
            return Err(Error::Domain("radius must be positive"));
        }
        if self.m <= 0.0 {
            return Err(Error::Domain("mass must be positive"));
        }
        Ok(())
    }
}

/// Costates paired with [`LanderState`].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Costate {
    pub p_r: f64,
    pub p_v: f64,
    pub p_theta: f64,
    pub p_omega: f64,
    pub p_m: f64,
}

impl Costate {
    pub const fn new(p_r: f64, p_v: f64, p_theta: f64, p_omega: f64, p_m: f64) -> Self {
        Self {
            p_r,
            p_v,
            p_theta,
            p_omega,
            p_m,
        }
    }

    pub fn to_array(&self) -> [f64; 5] {
        [self.p_r, self.p_v, self.p_theta, self.p_omega, self.p_m]
    }

    pub fn from_array(a: [f64; 5]) -> Self {
        Self::new(a[0], a[1], a[2], a[3], a[4])
    }

    fn check(&self) -> Result<()> {
        if self.to_array().iter().all(|c| c.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite("costate"))
        }
    }
}

/// Throttle ratio and steering angle (from local horizontal to thrust).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ThrustCommand {
    pub u: f64,
    pub psi: f64,
}

impl ThrustCommand {
    pub const fn new(u: f64, psi: f64) -> Self {
        Self { u, psi }
    }
}

/// Time derivative of the state.
pub fn dynamics_rhs(
    x: &LanderState,
    cmd: &ThrustCommand,
    params: &DimensionlessParams,
) -> Result<[f64; 5]> {
    x.check()?;
    let accel = cmd.u * params.thrust / x.m;
    let (s, c) = (math::sin(cmd.psi), math::cos(cmd.psi));
    let out = [
        x.v,
        accel * s - 1.0 / (x.r * x.r) + x.r * x.omega * x.omega,
        -x.omega,
        -(accel * c + 2.0 * x.v * x.omega) / x.r,
        -cmd.u * params.mass_flow(),
    ];
    finite5(out, "state derivative")
}

/// `H = f . p + u`.
pub fn hamiltonian(
    x: &LanderState,
    p: &Costate,
    cmd: &ThrustCommand,
    params: &DimensionlessParams,
) -> Result<f64> {
    p.check()?;
    let f = dynamics_rhs(x, cmd, params)?;
    let h = f
        .iter()
        .zip(p.to_array().iter())
        .fold(cmd.u, |acc, (fi, pi)| acc + fi * pi);
    Error::check_finite(h, "hamiltonian")
}

/// Costate derivative `-dH/dx` at fixed control.
pub fn costate_rhs(
    x: &LanderState,
    p: &Costate,
    cmd: &ThrustCommand,
    params: &DimensionlessParams,
) -> Result<[f64; 5]> {
    x.check()?;
    p.check()?;
    let accel = cmd.u * params.thrust / x.m;
    let (s, c) = (math::sin(cmd.psi), math::cos(cmd.psi));
    let r = x.r;
    let out = [
        -2.0 * p.p_v / (r * r * r)
            - p.p_v * x.omega * x.omega
            - p.p_omega * (accel * c + 2.0 * x.v * x.omega) / (r * r),
        -p.p_r + 2.0 * p.p_omega * x.omega / r,
        0.0,
        -2.0 * p.p_v * r * x.omega + p.p_theta + 2.0 * p.p_omega * x.v / r,
        (p.p_v * s - p.p_omega * c / r) * accel / x.m,
    ];
    finite5(out, "costate derivative")
}

/// Steering angle minimizing the Hamiltonian: `sin = -p_v / N`,
/// `cos = (p_omega / r) / N`.
pub fn optimal_steering(x: &LanderState, p: &Costate) -> Result<f64> {
    // adding zero maps -0.0 to +0.0 so the range is (-pi, pi]
    let a = -p.p_v + 0.0;
    let b = p.p_omega / x.r;
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::NonFinite("steering"));
    }
    if a == 0.0 && b == 0.0 {
        return Err(Error::SingularSteering);
    }
    Ok(math::atan2(a, b))
}

/// `S = 1 - (Tm / m) * sqrt(p_v^2 + (p_omega / r)^2) - p_m * Tm / (Isp ge)`.
pub fn switching_function(
    x: &LanderState,
    p: &Costate,
    params: &DimensionlessParams,
) -> Result<f64> {
    x.check()?;
    p.check()?;
    let n = math::hypot(p.p_v, p.p_omega / x.r);
    let s = 1.0 - params.thrust / x.m * n - p.p_m * params.mass_flow();
    Error::check_finite(s, "switching function")
}

/// Bang-bang throttle. A switching function of exactly zero maps to full
/// thrust.
pub fn bang_bang_u(s: f64) -> Result<f64> {
    if s.is_nan() {
        return Err(Error::NonFinite("switching function"));
    }
    Ok(if s > 0.0 { 0.0 } else { 1.0 })
}

/// Smooth throttle `0.5 * (1 - S / sqrt(delta + S^2))`.
pub fn smoothed_u(s: f64, delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "delta",
            value: delta,
        });
    }
    if s.is_nan() {
        return Err(Error::NonFinite("switching function"));
    }
    if s.is_infinite() {
        return Ok(if s > 0.0 { 0.0 } else { 1.0 });
    }
    Ok(0.5 * (1.0 - s / math::sqrt(delta + s * s)))
}

/// How the throttle is chosen along a state/costate flow.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Throttle {
    /// Held at a constant value (a bang-bang arc when 0 or 1).
    Fixed(f64),
    /// Smoothed law with the given smoothing constant.
    Smoothed(f64),
}

/// Forward-time canonical system `(f, -dH/dx)` with optimal steering and the
/// given throttle law. The layout is `[x; p]`.
pub fn canonical_rhs(
    y: &[f64; 10],
    throttle: Throttle,
    params: &DimensionlessParams,
) -> Result<[f64; 10]> {
    let (x, p) = split(y);
    let psi = optimal_steering(&x, &p)?;
    let u = match throttle {
        Throttle::Fixed(u) => u,
        Throttle::Smoothed(delta) => smoothed_u(switching_function(&x, &p, params)?, delta)?,
    };
    let cmd = ThrustCommand::new(u, psi);
    let fx = dynamics_rhs(&x, &cmd, params)?;
    let fp = costate_rhs(&x, &p, &cmd, params)?;
    let mut out = [0.0; 10];
    out[..5].copy_from_slice(&fx);
    out[5..].copy_from_slice(&fp);
    Ok(out)
}

pub fn split(y: &[f64; 10]) -> (LanderState, Costate) {
    (
        LanderState::new(y[0], y[1], y[2], y[3], y[4]),
        Costate::new(y[5], y[6], y[7], y[8], y[9]),
    )
}

pub fn join(x: &LanderState, p: &Costate) -> [f64; 10] {
    let mut y = [0.0; 10];
    y[..5].copy_from_slice(&x.to_array());
    y[5..].copy_from_slice(&p.to_array());
    y
}

fn finite5(v: [f64; 5], what: &'static str) -> Result<[f64; 5]> {
    if v.iter().all(|c| c.is_finite()) {
        Ok(v)
    } else {
        Err(Error::NonFinite(what))
    }
}
