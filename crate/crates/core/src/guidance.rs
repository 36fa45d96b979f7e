//! Closed-loop guidance simulation and Monte-Carlo aggregation.
//!
//! Commands are recomputed from the current state every command period and
//! held constant in between. The flight ends when the altitude drops below
//! the stop altitude, when the propellant is gone, or at a time horizon.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::dynamics::{dynamics_rhs, LanderState, ThrustCommand};
use crate::error::{Error, Result};
use crate::math;
use crate::mlp::MlpModel;
use crate::ode::{locate_crossing, Dopri5, Dopri5Options};
use crate::params::{PhysicalParams, Scaling, SiState};

/// Throttle from the sign of the predicted switching function: full thrust
/// while it is negative, off otherwise. With a positive `deadband` the
/// previous throttle is kept while `|prediction| < deadband`.
pub fn throttle_from_prediction(pred: f64, previous: f64, deadband: f64) -> f64 {
    if deadband > 0.0 && math::abs(pred) < deadband {
        previous
    } else if pred < 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Maps a scaled state to a thrust command.
pub trait GuidancePolicy {
    fn command(&self, x: &LanderState, previous_u: f64) -> Result<ThrustCommand>;

    /// Predicted scaled time to go, if the policy has one.
    fn time_to_go(&self, _x: &LanderState) -> Option<Result<f64>> {
        None
    }
}

/// Guidance from trained steering and switching-function networks.
#[derive(Debug, Clone, Copy)]
pub struct NeuralGuidance<'a> {
    pub psi: &'a MlpModel,
    pub s_reg: &'a MlpModel,
    pub tau: Option<&'a MlpModel>,
    pub deadband: f64,
}

/// One command from the two networks (no deadband).
pub fn guidance_step(x: &LanderState, psi: &MlpModel, s_reg: &MlpModel) -> Result<ThrustCommand> {
    NeuralGuidance {
        psi,
        s_reg,
        tau: None,
        deadband: 0.0,
    }
    .command(x, 1.0)
}

impl GuidancePolicy for NeuralGuidance<'_> {
    fn command(&self, x: &LanderState, previous_u: f64) -> Result<ThrustCommand> {
        let psi = self.psi.predict(x)?;
        let s = self.s_reg.predict(x)?;
        Ok(ThrustCommand::new(throttle_from_prediction(s, previous_u, self.deadband), psi))
    }

    fn time_to_go(&self, x: &LanderState) -> Option<Result<f64>> {
        self.tau.map(|m| m.predict(x))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub command_period_s: f64,
    pub stop_altitude_m: f64,
    pub success_vf_mps: f64,
    /// Time limit; `None` uses twice the policy's time-to-go prediction at
    /// the start, or twice the sampling horizon without one.
    pub horizon_s: Option<f64>,
    pub ode: Dopri5Options,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            command_period_s: 0.2,
            stop_altitude_m: 0.2,
            success_vf_mps: 5.0,
            horizon_s: None,
            ode: Dopri5Options::default(),
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("command_period", self.command_period_s),
            ("stop_altitude", self.stop_altitude_m),
            ("success_vf", self.success_vf_mps),
            ("horizon", self.horizon_s.unwrap_or(1.0)),
            ("rtol", self.ode.rtol),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter { name, value: v });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    /// Reached the stop altitude.
    Landed,
    FuelExhausted,
    Horizon,
    GuidanceFault,
    IntegratorFailure,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t_s: f64,
    pub state: SiState,
    pub u: f64,
    pub psi_rad: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandingReport {
    pub vf_mps: f64,
    pub theta_f_deg: f64,
    pub e_p_m: f64,
    pub fuel_kg: f64,
    pub flight_time_s: f64,
    pub success: bool,
    pub outcome: Outcome,
    pub message: Option<String>,
    pub final_state: SiState,
    /// Predicted time of flight at the start, if the policy has one.
    pub predicted_flight_time_s: Option<f64>,
    /// Command trace: one row per command update plus the final state.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub trace: Vec<TraceRow>,
}

/// Terminal speed: norm of radial and tangential velocity.
pub fn terminal_speed(v_mps: f64, omega_radps: f64, r_m: f64) -> f64 {
    math::hypot(v_mps, omega_radps * r_m)
}

/// Arc length along the surface for a central angle in degrees.
pub fn position_error(theta_deg: f64, r0_m: f64) -> f64 {
    2.0 * core::f64::consts::PI * r0_m * math::abs(theta_deg) / 360.0
}

fn check_initial(x0: &SiState, phys: &PhysicalParams) -> Result<()> {
    let fields = [x0.r_m, x0.v_mps, x0.theta_rad, x0.omega_radps, x0.m_kg];
    if !fields.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("initial state"));
    }
    if x0.m_kg <= phys.m_dry || x0.m_kg > phys.m0 * (1.0 + 1e-12) {
        return Err(Error::InvalidParameter {
            name: "m0",
            value: x0.m_kg,
        });
    }
    if x0.r_m < phys.r0 {
        return Err(Error::InvalidParameter {
            name: "r0",
            value: x0.r_m,
        });
    }
    Ok(())
}

/// Fly one descent from `x0` (SI) under `policy`.
pub fn simulate<P: GuidancePolicy + ?Sized>(
    x0: &SiState,
    policy: &P,
    phys: &PhysicalParams,
    cfg: &SimConfig,
) -> Result<LandingReport> {
    cfg.validate()?;
    let scale = phys.scaling()?;
    let params = phys.dimensionless()?;
    check_initial(x0, phys)?;
    let x_start = scale.state_to_dimensionless(x0);

    let predicted = match policy.time_to_go(&x_start) {
        Some(Ok(t)) if t.is_finite() => Some(scale.time_to_si(t)),
        _ => None,
    };
    let horizon_s = cfg
        .horizon_s
        .or(predicted.filter(|t| *t > 0.0).map(|t| 2.0 * t))
        .unwrap_or_else(|| 2.0 * scale.time_to_si(0.9));
    let period = scale.time_to_dimensionless(cfg.command_period_s);
    let horizon = scale.time_to_dimensionless(horizon_s);
    let r_stop = 1.0 + cfg.stop_altitude_m / scale.length;

    let mut x = x_start.to_array();
    let mut t = 0.0;
    let mut u_prev = 1.0;
    let mut trace = Vec::new();
    let mut message = None;
    let mut last_cmd = ThrustCommand::new(0.0, 0.0);

    let outcome = 'flight: loop {
        if t >= horizon {
            break Outcome::Horizon;
        }
        let state = LanderState::from_array(x);
        let cmd = match policy.command(&state, u_prev) {
            Ok(c) if c.u.is_finite() && c.psi.is_finite() => c,
            Ok(_) => {
                message = Some("non-finite command".into());
                break Outcome::GuidanceFault;
            }
            Err(e) => {
                message = Some(alloc::format!("{e}"));
                break Outcome::GuidanceFault;
            }
        };
        u_prev = cmd.u;
        last_cmd = cmd;
        trace.push(trace_row(&scale, t, &state, &cmd));

        let mut f = |_t: f64, y: &[f64; 5]| dynamics_rhs(&LanderState::from_array(*y), &cmd, &params);
        let events = |_t: f64, y: &[f64; 5]| [y[0] - r_stop, y[4] - params.dry_mass];
        let t_end = math::min(t + period, horizon);
        let mut ode = Dopri5::new(cfg.ode, t, x);
        while ode.t() < t_end {
            let step = match ode.step(&mut f, t_end) {
                Ok(s) => s,
                Err(e) => {
                    message = Some(alloc::format!("{e}"));
                    break 'flight Outcome::IntegratorFailure;
                }
            };
            // first event inside the step, checked on sub-samples
            let mut hit: Option<(usize, f64, f64)> = None;
            let mut ta = step.t0;
            let mut ga = events(ta, &step.y0);
            for k in 1..=4 {
                let tb = if k == 4 { step.t1() } else { step.t0 + step.h * k as f64 / 4.0 };
                let yb = if k == 4 { step.y1 } else { step.eval(tb) };
                let gb = events(tb, &yb);
                if let Some(i) = (0..2).find(|&i| ga[i] > 0.0 && gb[i] <= 0.0) {
                    hit = Some((i, ta, tb));
                    break;
                }
                ta = tb;
                ga = gb;
            }
            if let Some((i, ta, tb)) = hit {
                let g = |tt: f64, y: &[f64; 5]| events(tt, y)[i];
                match locate_crossing(&mut f, &step, &g, ta, tb) {
                    Ok((te, ye)) => {
                        t = te;
                        x = ye;
                    }
                    Err(e) => {
                        message = Some(alloc::format!("{e}"));
                        break 'flight Outcome::IntegratorFailure;
                    }
                }
                break 'flight if i == 0 { Outcome::Landed } else { Outcome::FuelExhausted };
            }
        }
        t = ode.t();
        x = *ode.y();
    };

    let final_x = LanderState::from_array(x);
    trace.push(trace_row(&scale, t, &final_x, &last_cmd));
    let fin = scale.state_to_si(&final_x);
    let vf = terminal_speed(fin.v_mps, fin.omega_radps, fin.r_m);
    let theta_f_deg = fin.theta_rad.to_degrees();
    let success = outcome == Outcome::Landed && vf < cfg.success_vf_mps;
    Ok(LandingReport {
        vf_mps: vf,
        theta_f_deg,
        e_p_m: position_error(theta_f_deg, phys.r0),
        fuel_kg: x0.m_kg - fin.m_kg,
        flight_time_s: scale.time_to_si(t),
        success,
        outcome,
        message,
        final_state: fin,
        predicted_flight_time_s: predicted,
        trace,
    })
}

fn trace_row(scale: &Scaling, t: f64, x: &LanderState, cmd: &ThrustCommand) -> TraceRow {
    TraceRow {
        t_s: scale.time_to_si(t),
        state: scale.state_to_si(x),
        u: cmd.u,
        psi_rad: cmd.psi,
    }
}

/// Equal-width histogram over `[lo, hi]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u64>,
}

impl Histogram {
    /// Range spans the data; a degenerate range is widened to unit width.
    pub fn from_values(values: &[f64], bins: usize) -> Self {
        let bins = bins.max(1);
        let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
        if finite.is_empty() {
            return Self {
                lo: 0.0,
                hi: 1.0,
                counts: alloc::vec![0; bins],
            };
        }
        let mut lo = finite.iter().copied().fold(f64::INFINITY, math::min);
        let mut hi = finite.iter().copied().fold(f64::NEG_INFINITY, math::max);
        if hi <= lo {
            lo -= 0.5;
            hi += 0.5;
        }
        let mut counts = alloc::vec![0u64; bins];
        for v in finite {
            let k = (((v - lo) / (hi - lo)) * bins as f64) as usize;
            counts[k.min(bins - 1)] += 1;
        }
        Self { lo, hi, counts }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn edges(&self, k: usize) -> (f64, f64) {
        let w = (self.hi - self.lo) / self.counts.len() as f64;
        (self.lo + w * k as f64, self.lo + w * (k + 1) as f64)
    }
}

/// Oracle result for one Monte-Carlo case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleCase {
    pub converged: bool,
    pub fuel_kg: Option<f64>,
    pub flight_time_s: Option<f64>,
    pub residual: f64,
    pub max_abs_hamiltonian: Option<f64>,
    pub final_p_m: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub index: usize,
    pub x0: SiState,
    pub in_distribution: bool,
    pub report: LandingReport,
    pub oracle: Option<OracleCase>,
}

impl RunRecord {
    /// Neural fuel minus oracle fuel, when both are available.
    pub fn fuel_penalty_kg(&self) -> Option<f64> {
        let o = self.oracle.as_ref()?;
        if !o.converged || !self.report.success {
            return None;
        }
        Some(self.report.fuel_kg - o.fuel_kg?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloReport {
    pub n: usize,
    pub success_count: usize,
    pub success_rate: f64,
    pub in_distribution: usize,
    pub in_distribution_success: usize,
    pub max_vf_mps: Option<f64>,
    pub max_e_p_m: Option<f64>,
    pub total_fuel_kg: f64,
    pub mean_fuel_kg: Option<f64>,
    pub vf_histogram: Histogram,
    pub theta_histogram: Histogram,
    pub e_p_histogram: Histogram,
    pub oracle_attempted: usize,
    pub oracle_converged: usize,
    pub fuel_penalties_kg: Vec<f64>,
    pub max_fuel_penalty_kg: Option<f64>,
    pub runs: Vec<RunRecord>,
}

pub const HISTOGRAM_BINS: usize = 40;

/// Summarize independent runs; the result does not depend on input order.
pub fn aggregate(mut runs: Vec<RunRecord>) -> MonteCarloReport {
    runs.sort_by_key(|r| r.index);
    let n = runs.len();
    let success_count = runs.iter().filter(|r| r.report.success).count();
    let vf: Vec<f64> = runs.iter().map(|r| r.report.vf_mps).collect();
    let th: Vec<f64> = runs.iter().map(|r| r.report.theta_f_deg).collect();
    let ep: Vec<f64> = runs.iter().map(|r| r.report.e_p_m).collect();
    let total_fuel_kg: f64 = runs.iter().map(|r| r.report.fuel_kg).sum();
    let max_of = |v: &[f64]| v.iter().copied().fold(None, |m: Option<f64>, x| Some(m.map_or(x, |m| math::max(m, x))));
    let fuel_penalties_kg: Vec<f64> = runs.iter().filter_map(RunRecord::fuel_penalty_kg).collect();
    let in_distribution = runs.iter().filter(|r| r.in_distribution).count();
    MonteCarloReport {
        n,
        success_count,
        success_rate: if n == 0 { 0.0 } else { success_count as f64 / n as f64 },
        in_distribution,
        in_distribution_success: runs.iter().filter(|r| r.in_distribution && r.report.success).count(),
        max_vf_mps: max_of(&vf),
        max_e_p_m: max_of(&ep),
        total_fuel_kg,
        mean_fuel_kg: (n > 0).then(|| total_fuel_kg / n as f64),
        vf_histogram: Histogram::from_values(&vf, HISTOGRAM_BINS),
        theta_histogram: Histogram::from_values(&th, HISTOGRAM_BINS),
        e_p_histogram: Histogram::from_values(&ep, HISTOGRAM_BINS),
        oracle_attempted: runs.iter().filter(|r| r.oracle.is_some()).count(),
        oracle_converged: runs.iter().filter(|r| r.oracle.as_ref().is_some_and(|o| o.converged)).count(),
        max_fuel_penalty_kg: max_of(&fuel_penalties_kg),
        fuel_penalties_kg,
        runs,
    }
}
