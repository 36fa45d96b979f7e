//! Extremals generated by backward propagation from touchdown.
//!
//! With `tau = t_f - t`, the state runs backward under `-f` and the costate
//! under `+dH/dx`. Starting from the touchdown state `(1, 0, 0, 0, m0)` and
//! an arbitrary costate quadruple, the initial mass `m0` is fixed
//! analytically so that the Hamiltonian vanishes, and every propagated arc
//! satisfies the necessary conditions of a fuel-optimal landing. No
//! boundary-value problem is solved.
//!
//! Throttle switches are handled as events: each zero of the switching
//! function is located to integrator accuracy and the integration restarts
//! with the other throttle value.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    bang_bang_u, canonical_rhs, join, optimal_steering, split, switching_function, Costate,
    LanderState, Throttle,
};
use crate::error::{Error, Result};
use crate::math;
use crate::ode::{locate_crossing, DenseStep, Dopri5, Dopri5Options};
use crate::params::DimensionlessParams;

/// Costate values at touchdown (`tau = 0`); `p_m` is zero there.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quadruple {
    pub p_r0: f64,
    pub p_v0: f64,
    pub p_theta0: f64,
    pub p_omega0: f64,
}

impl Quadruple {
    pub const fn new(p_r0: f64, p_v0: f64, p_theta0: f64, p_omega0: f64) -> Self {
        Self {
            p_r0,
            p_v0,
            p_theta0,
            p_omega0,
        }
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.p_r0, self.p_v0, self.p_theta0, self.p_omega0]
    }

    pub fn from_array(a: [f64; 4]) -> Self {
        Self::new(a[0], a[1], a[2], a[3])
    }

    pub fn validate(&self) -> Result<()> {
        if !self.to_array().iter().all(|c| c.is_finite()) {
            return Err(Error::NonFinite("quadruple"));
        }
        if self.p_v0 >= 0.0 {
            // S(0) = p_v0 must be negative for full thrust at touchdown
            return Err(Error::InvalidParameter {
                name: "p_v0",
                value: self.p_v0,
            });
        }
        Ok(())
    }
}

/// Touchdown mass that zeroes the Hamiltonian at full thrust:
/// `m0 = Tm * sqrt(p_v0^2 + p_omega0^2) / (1 - p_v0)`.
pub fn m_bar0_from(p_v0: f64, p_omega0: f64, thrust: f64) -> Result<f64> {
    if !(p_v0.is_finite() && p_omega0.is_finite()) {
        return Err(Error::NonFinite("touchdown costates"));
    }
    if p_v0 >= 1.0 {
        return Err(Error::SingularDenominator(p_v0));
    }
    if p_v0 == 0.0 && p_omega0 == 0.0 {
        return Err(Error::SingularSteering);
    }
    Ok(thrust * math::hypot(p_v0, p_omega0) / (1.0 - p_v0))
}

/// Inverse of [`m_bar0_from`] for the angular costate: the non-negative
/// `p_omega0` giving touchdown mass `m0` for the given `p_v0`.
pub fn p_omega0_for_mass(m0: f64, p_v0: f64, thrust: f64) -> Result<f64> {
    let a = m0 * (1.0 - p_v0) / thrust;
    let sq = a * a - p_v0 * p_v0;
    if !(sq >= 0.0) {
        return Err(Error::InvalidParameter {
            name: "p_v0",
            value: p_v0,
        });
    }
    Ok(math::sqrt(sq))
}

/// State and costate at `tau = 0`.
pub fn touchdown_conditions(q: &Quadruple, params: &DimensionlessParams) -> Result<(LanderState, Costate)> {
    let m0 = m_bar0_from(q.p_v0, q.p_omega0, params.thrust)?;
    Ok((
        LanderState::new(1.0, 0.0, 0.0, 0.0, m0),
        Costate::new(q.p_r0, q.p_v0, q.p_theta0, q.p_omega0, 0.0),
    ))
}

/// Backward-time right-hand side with the throttle recomputed from the
/// switching function.
pub fn backward_rhs(x: &LanderState, p: &Costate, params: &DimensionlessParams) -> Result<[f64; 10]> {
    let u = bang_bang_u(switching_function(x, p, params)?)?;
    backward_rhs_with(&join(x, p), u, params)
}

/// Backward-time right-hand side on a fixed throttle arc.
pub fn backward_rhs_with(y: &[f64; 10], u: f64, params: &DimensionlessParams) -> Result<[f64; 10]> {
    let mut d = canonical_rhs(y, Throttle::Fixed(u), params)?;
    for v in d.iter_mut() {
        *v = -*v;
    }
    Ok(d)
}

/// `tanh(S / alpha)`: bounded, sign- and zero-preserving.
pub fn regularize(s: f64, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "alpha",
            value: alpha,
        });
    }
    if s.is_nan() {
        return Err(Error::NonFinite("switching function"));
    }
    Ok(math::tanh(s / alpha))
}

/// Where records are emitted along a propagated extremal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RecordGrid {
    /// Uniform spacing in `tau`, plus switches and the final point.
    Uniform(f64),
    /// Every accepted integrator step.
    Steps,
    /// Only the end points and the switches.
    EndsOnly,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropagationOptions {
    pub tau_max: f64,
    /// Stop (successfully) once `r` exceeds this radius.
    pub stop_radius: Option<f64>,
    /// Stop (successfully) once the mass reaches this value.
    pub mass_cap: Option<f64>,
    /// Reject the extremal if the mass rises above this bound without a
    /// cap being hit first.
    pub mass_upper: Option<f64>,
    /// Reject arcs that dip below the surface.
    pub reject_subsurface: bool,
    pub grid: RecordGrid,
    pub alpha: f64,
    pub ode: Dopri5Options,
}

impl Default for PropagationOptions {
    fn default() -> Self {
        Self {
            tau_max: 0.9,
            stop_radius: Some(1.1),
            mass_cap: Some(1.0),
            mass_upper: None,
            reject_subsurface: true,
            grid: RecordGrid::Uniform(0.002),
            alpha: 0.01,
            ode: Dopri5Options::default(),
        }
    }
}

impl PropagationOptions {
    /// Options for propagating exactly to `tau` with no stopping surfaces.
    pub fn exact_to(tau: f64) -> Self {
        Self {
            tau_max: tau,
            stop_radius: None,
            mass_cap: None,
            mass_upper: None,
            reject_subsurface: false,
            grid: RecordGrid::EndsOnly,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Horizon,
    RadiusLimit,
    MassLimit,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Rejection {
    /// `r < 1` somewhere along the arc.
    Subsurface { tau: f64 },
    /// Mass outside `[m_dry, upper]`.
    MassBound { tau: f64 },
    Integrator(Error),
    InvalidQuadruple(Error),
}

impl Rejection {
    pub fn reason(&self) -> &'static str {
        match self {
            Rejection::Subsurface { .. } => "subsurface",
            Rejection::MassBound { .. } => "mass_bound",
            Rejection::Integrator(_) => "integrator_failure",
            Rejection::InvalidQuadruple(_) => "invalid_quadruple",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtremalRecord {
    pub tau: f64,
    pub state: LanderState,
    pub costate: Costate,
    /// Throttle on the arc that starts here (in increasing `tau`).
    pub u: f64,
    pub psi: f64,
    pub s: f64,
    pub s_reg: f64,
    pub is_switch: bool,
}

/// Throttle sequence in forward time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SwitchStructure {
    AlwaysOn,
    OnOffOn,
    OffOn,
    Other,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtremalTrajectory {
    pub quadruple: Quadruple,
    pub m_bar0: f64,
    pub records: Vec<ExtremalRecord>,
    pub switch_times: Vec<f64>,
    pub termination: Termination,
}

impl ExtremalTrajectory {
    pub fn tau_end(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.tau)
    }

    pub fn last(&self) -> &ExtremalRecord {
        self.records.last().expect("an extremal always has its touchdown record")
    }

    /// Switch structure read in forward time. Backward propagation always
    /// starts on a full-thrust arc, so `n` switches give `n + 1` arcs
    /// alternating from on.
    pub fn structure(&self) -> SwitchStructure {
        match self.switch_times.len() {
            0 => SwitchStructure::AlwaysOn,
            1 => SwitchStructure::OffOn,
            2 => SwitchStructure::OnOffOn,
            _ => SwitchStructure::Other,
        }
    }
}

fn record(
    tau: f64,
    y: &[f64; 10],
    u: f64,
    is_switch: bool,
    params: &DimensionlessParams,
    alpha: f64,
) -> Result<ExtremalRecord> {
    let (x, p) = split(y);
    let s = switching_function(&x, &p, params)?;
    Ok(ExtremalRecord {
        tau,
        state: x,
        costate: p,
        u,
        psi: optimal_steering(&x, &p)?,
        s,
        s_reg: regularize(s, alpha)?,
        is_switch,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Event {
    Switch,
    Radius,
    MassCap,
}

const INTERIOR_SAMPLES: usize = 4;

fn event_value<S: Fn(&[f64; 10]) -> f64>(ev: Event, y: &[f64; 10], opts: &PropagationOptions, sfun: &S) -> f64 {
    match ev {
        Event::Switch => sfun(y),
        Event::Radius => y[0] - opts.stop_radius.unwrap_or(f64::INFINITY),
        Event::MassCap => y[4] - opts.mass_cap.unwrap_or(f64::INFINITY),
    }
}

/// Propagate the parameterized system from touchdown.
pub fn propagate_extremal(
    q: &Quadruple,
    params: &DimensionlessParams,
    opts: &PropagationOptions,
) -> core::result::Result<ExtremalTrajectory, Rejection> {
    q.validate().map_err(Rejection::InvalidQuadruple)?;
    if let Err(e) = regularize(0.0, opts.alpha) {
        return Err(Rejection::InvalidQuadruple(e));
    }
    let (x0, p0) = touchdown_conditions(q, params).map_err(Rejection::InvalidQuadruple)?;
    let m_bar0 = x0.m;
    if m_bar0 < params.dry_mass || opts.mass_upper.is_some_and(|m| m_bar0 > m) {
        return Err(Rejection::MassBound { tau: 0.0 });
    }
    let alpha = opts.alpha;
    let int_err = Rejection::Integrator;

    let mut u = 1.0;
    let y0 = join(&x0, &p0);
    let mut records = Vec::new();
    records.push(record(0.0, &y0, u, false, params, alpha).map_err(int_err)?);
    let mut switch_times = Vec::new();
    let mut ode = Dopri5::new(opts.ode, 0.0, y0);
    let mut next_grid = 1usize;

    let sfun = |y: &[f64; 10]| -> f64 {
        let (x, p) = split(y);
        switching_function(&x, &p, params).unwrap_or(f64::NAN)
    };

    let emit_grid = |records: &mut Vec<ExtremalRecord>,
                     next_grid: &mut usize,
                     step: &DenseStep<10>,
                     upto: f64,
                     u: f64|
     -> Result<()> {
        if let RecordGrid::Uniform(dt) = opts.grid {
            loop {
                let tau = *next_grid as f64 * dt;
                if tau > upto || tau >= opts.tau_max {
                    break;
                }
                let y = step.eval(tau);
                records.push(record(tau, &y, u, false, params, alpha)?);
                *next_grid += 1;
            }
        }
        Ok(())
    };

    while ode.t() < opts.tau_max {
        let mut rhs = |_t: f64, y: &[f64; 10]| backward_rhs_with(y, u, params);
        let step = ode.step(&mut rhs, opts.tau_max).map_err(int_err)?;

        // scan the step for the first sub-interval where something happens
        let mut prev_t = step.t0;
        let mut prev_s = sfun(&step.y0);
        let mut found: Option<(f64, [f64; 10], Event)> = None;
        let mut rejection: Option<Rejection> = None;
        for k in 1..=INTERIOR_SAMPLES {
            let last = k == INTERIOR_SAMPLES;
            let t = if last {
                step.t1()
            } else {
                step.t0 + step.h * k as f64 / INTERIOR_SAMPLES as f64
            };
            let y = if last { step.y1 } else { step.eval(t) };
            let (x, _) = split(&y);
            let s = sfun(&y);
            if s.is_nan() {
                return Err(Rejection::Integrator(Error::NonFinite("switching function")));
            }
            let triggered = [
                // right after a restart S sits at round-off on either side of
                // zero, so require an actual change of sign
                (if u == 1.0 { s > 0.0 && prev_s < 0.0 } else { s < 0.0 && prev_s > 0.0 }, Event::Switch),
                (opts.stop_radius.is_some_and(|rs| x.r > rs), Event::Radius),
                (opts.mass_cap.is_some_and(|mc| x.m > mc), Event::MassCap),
            ];
            if opts.reject_subsurface && x.r < 1.0 {
                rejection = Some(Rejection::Subsurface { tau: t });
            } else if opts.mass_upper.is_some_and(|mu| x.m > mu) && !triggered[2].0 {
                rejection = Some(Rejection::MassBound { tau: t });
            }
            if rejection.is_none() && !triggered.iter().any(|e| e.0) {
                prev_t = t;
                prev_s = s;
                continue;
            }
            // among simultaneous triggers, keep the earliest crossing
            for &(hit, ev) in triggered.iter() {
                if !hit {
                    continue;
                }
                let g = |_t: f64, y: &[f64; 10]| event_value(ev, y, opts, &sfun);
                let (te, ye) = locate_crossing(&mut rhs, &step, &g, prev_t, t).map_err(int_err)?;
                if found.is_none_or(|(tb, _, _)| te < tb) {
                    found = Some((te, ye, ev));
                }
            }
            // a surface reached before the arc went subsurface takes precedence
            if let (Some(_), Some((_, ye, _))) = (&rejection, &found) {
                if split(ye).0.r >= 1.0 {
                    rejection = None;
                } else {
                    found = None;
                }
            }
            break;
        }
        if let Some(rej) = rejection {
            return Err(rej);
        }

        match found {
            None => {
                emit_grid(&mut records, &mut next_grid, &step, step.t1(), u).map_err(int_err)?;
                if matches!(opts.grid, RecordGrid::Steps) && step.t1() < opts.tau_max {
                    records.push(record(step.t1(), &step.y1, u, false, params, alpha).map_err(int_err)?);
                }
            }
            Some((te, ye, ev)) => {
                emit_grid(&mut records, &mut next_grid, &step, te, u).map_err(int_err)?;
                if records.last().is_some_and(|r| r.tau == te) {
                    records.pop();
                }
                match ev {
                    Event::Switch => {
                        u = 1.0 - u;
                        switch_times.push(te);
                        records.push(record(te, &ye, u, true, params, alpha).map_err(int_err)?);
                        ode.restart(te, ye);
                    }
                    Event::Radius | Event::MassCap => {
                        records.push(record(te, &ye, u, false, params, alpha).map_err(int_err)?);
                        return Ok(ExtremalTrajectory {
                            quadruple: *q,
                            m_bar0,
                            records,
                            switch_times,
                            termination: if ev == Event::Radius {
                                Termination::RadiusLimit
                            } else {
                                Termination::MassLimit
                            },
                        });
                    }
                }
            }
        }
    }

    let y_end = *ode.y();
    let tau_end = ode.t();
    if records.last().is_some_and(|r| r.tau == tau_end) {
        records.pop();
    }
    records.push(record(tau_end, &y_end, u, false, params, alpha).map_err(int_err)?);
    Ok(ExtremalTrajectory {
        quadruple: *q,
        m_bar0,
        records,
        switch_times,
        termination: Termination::Horizon,
    })
}

/// State and costate at exactly `tau` along the extremal of `q`, ignoring
/// all stopping surfaces.
pub fn extremal_point(
    q: &Quadruple,
    tau: f64,
    params: &DimensionlessParams,
) -> core::result::Result<ExtremalRecord, Rejection> {
    if tau == 0.0 {
        let (x, p) = touchdown_conditions(q, params).map_err(Rejection::InvalidQuadruple)?;
        return record(0.0, &join(&x, &p), 1.0, false, params, 0.01).map_err(Rejection::Integrator);
    }
    let mut opts = PropagationOptions::exact_to(tau);
    opts.mass_cap = None;
    let traj = propagate_extremal(q, params, &opts)?;
    Ok(*traj.last())
}

/// Sampling box for the touchdown costates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingIntervals {
    pub p_r: (f64, f64),
    pub p_v: (f64, f64),
    pub p_theta: (f64, f64),
    pub p_omega: (f64, f64),
}

impl Default for SamplingIntervals {
    fn default() -> Self {
        Self {
            p_r: (0.489, 0.839),
            p_v: (-0.317, -0.107),
            p_theta: (-0.1, 0.1),
            p_omega: (0.297, 0.427),
        }
    }
}

impl SamplingIntervals {
    pub fn validate(&self) -> Result<()> {
        for (name, (lo, hi)) in [
            ("p_r interval", self.p_r),
            ("p_v interval", self.p_v),
            ("p_theta interval", self.p_theta),
            ("p_omega interval", self.p_omega),
        ] {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::InvalidParameter { name, value: lo });
            }
        }
        if self.p_v.1 >= 0.0 {
            return Err(Error::InvalidParameter {
                name: "p_v interval",
                value: self.p_v.1,
            });
        }
        Ok(())
    }

    pub fn contains(&self, q: &Quadruple) -> bool {
        let inside = |v: f64, (lo, hi): (f64, f64)| v >= lo && v <= hi;
        inside(q.p_r0, self.p_r)
            && inside(q.p_v0, self.p_v)
            && inside(q.p_theta0, self.p_theta)
            && inside(q.p_omega0, self.p_omega)
    }
}

/// Deterministic stream of quadruples drawn uniformly from the box.
pub struct QuadrupleSampler {
    rng: ChaCha8Rng,
    intervals: SamplingIntervals,
    draws: u64,
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

impl QuadrupleSampler {
    pub fn new(intervals: SamplingIntervals, seed: u64) -> Result<Self> {
        intervals.validate()?;
        Ok(Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            intervals,
            draws: 0,
        })
    }

    pub fn draws(&self) -> u64 {
        self.draws
    }

    /// Next raw draw, before any mass filtering.
    pub fn draw(&mut self) -> Quadruple {
        self.draws += 1;
        let iv = self.intervals;
        Quadruple::new(
            uniform(&mut self.rng, iv.p_r),
            uniform(&mut self.rng, iv.p_v),
            uniform(&mut self.rng, iv.p_theta),
            uniform(&mut self.rng, iv.p_omega),
        )
    }
}

/// Whether the touchdown mass lies in `[m_dry, 1]`.
pub fn mass_admissible(q: &Quadruple, params: &DimensionlessParams) -> bool {
    m_bar0_from(q.p_v0, q.p_omega0, params.thrust).is_ok_and(|m| m >= params.dry_mass && m <= 1.0)
}

/// `n` quadruples whose touchdown mass is admissible.
pub fn sample_quadruples(
    n: usize,
    intervals: &SamplingIntervals,
    seed: u64,
    params: &DimensionlessParams,
) -> Result<Vec<Quadruple>> {
    let mut sampler = QuadrupleSampler::new(*intervals, seed)?;
    let mut out = Vec::with_capacity(n);
    let mut since_hit = 0u64;
    while out.len() < n {
        let q = sampler.draw();
        if mass_admissible(&q, params) {
            out.push(q);
            since_hit = 0;
        } else {
            since_hit += 1;
            if since_hit >= 10_000 {
                return Err(Error::Config("no admissible touchdown mass in 10000 draws".into()));
            }
        }
    }
    Ok(out)
}

/// One training row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetSample {
    pub state: LanderState,
    pub tau: f64,
    pub psi: f64,
    pub s: f64,
    pub s_reg: f64,
    pub u: f64,
    pub traj_id: u64,
    pub is_switch: bool,
}

/// Rows for one extremal: every record, with both one-sided throttle values
/// at each switch.
pub fn trajectory_samples(traj: &ExtremalTrajectory, traj_id: u64) -> Vec<DatasetSample> {
    let mut out = Vec::with_capacity(traj.records.len() + traj.switch_times.len());
    for rec in &traj.records {
        let row = |u: f64| DatasetSample {
            state: rec.state,
            tau: rec.tau,
            psi: rec.psi,
            s: rec.s,
            s_reg: rec.s_reg,
            u,
            traj_id,
            is_switch: rec.is_switch,
        };
        if rec.is_switch {
            out.push(row(1.0 - rec.u));
        }
        out.push(row(rec.u));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub intervals: SamplingIntervals,
    pub grid_step: f64,
    pub tau_max: f64,
    pub stop_radius: f64,
    pub alpha: f64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            intervals: SamplingIntervals::default(),
            grid_step: 0.002,
            tau_max: 0.9,
            stop_radius: 1.1,
            alpha: 0.01,
        }
    }
}

impl DatasetConfig {
    pub fn propagation(&self) -> PropagationOptions {
        PropagationOptions {
            tau_max: self.tau_max,
            stop_radius: Some(self.stop_radius),
            mass_cap: Some(1.0),
            mass_upper: None,
            reject_subsurface: true,
            grid: RecordGrid::Uniform(self.grid_step),
            alpha: self.alpha,
            ode: Dopri5Options::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SwitchCensus {
    pub always_on: u64,
    pub on_off_on: u64,
    pub off_on: u64,
    pub other: u64,
}

impl SwitchCensus {
    pub fn add(&mut self, s: SwitchStructure) {
        match s {
            SwitchStructure::AlwaysOn => self.always_on += 1,
            SwitchStructure::OnOffOn => self.on_off_on += 1,
            SwitchStructure::OffOn => self.off_on += 1,
            SwitchStructure::Other => self.other += 1,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RejectionCounts {
    pub mass_filter: u64,
    pub subsurface: u64,
    pub mass_bound: u64,
    pub integrator_failure: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub seed: u64,
    pub draws: u64,
    pub accepted: u64,
    pub rows: u64,
    pub acceptance_rate: f64,
    pub rejections: RejectionCounts,
    pub census: SwitchCensus,
}

/// Per-trajectory bookkeeping kept next to the rows, enough to
/// re-propagate any extremal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySummary {
    pub traj_id: u64,
    pub draw_index: u64,
    pub quadruple: Quadruple,
    pub m_bar0: f64,
    pub tau_end: f64,
    pub switches: usize,
    pub structure: SwitchStructure,
    pub termination: Termination,
}

/// Generate `n_traj` accepted extremals, handing each one and its rows to
/// `sink` in draw order.
pub fn build_dataset<F>(
    n_traj: usize,
    cfg: &DatasetConfig,
    seed: u64,
    params: &DimensionlessParams,
    mut sink: F,
) -> Result<DatasetStats>
where
    F: FnMut(&TrajectorySummary, &ExtremalTrajectory, &[DatasetSample]) -> Result<()>,
{
    if !(cfg.grid_step > 0.0 && cfg.tau_max > 0.0) {
        return Err(Error::Config("grid step and horizon must be positive".into()));
    }
    let mut sampler = QuadrupleSampler::new(cfg.intervals, seed)?;
    let opts = cfg.propagation();
    let mut stats = DatasetStats {
        seed,
        ..Default::default()
    };
    let mut window_draws = 0u64;
    let mut window_accepted = 0u64;
    while (stats.accepted as usize) < n_traj {
        let q = sampler.draw();
        let draw_index = sampler.draws() - 1;
        window_draws += 1;
        if !mass_admissible(&q, params) {
            stats.rejections.mass_filter += 1;
        } else {
            match propagate_extremal(&q, params, &opts) {
                Ok(traj) => {
                    let id = stats.accepted;
                    let rows = trajectory_samples(&traj, id);
                    let summary = TrajectorySummary {
                        traj_id: id,
                        draw_index,
                        quadruple: q,
                        m_bar0: traj.m_bar0,
                        tau_end: traj.tau_end(),
                        switches: traj.switch_times.len(),
                        structure: traj.structure(),
                        termination: traj.termination,
                    };
                    sink(&summary, &traj, &rows)?;
                    stats.census.add(traj.structure());
                    stats.rows += rows.len() as u64;
                    stats.accepted += 1;
                    window_accepted += 1;
                }
                Err(Rejection::Subsurface { .. }) => stats.rejections.subsurface += 1,
                Err(Rejection::MassBound { .. }) => stats.rejections.mass_bound += 1,
                Err(Rejection::Integrator(_)) | Err(Rejection::InvalidQuadruple(_)) => {
                    stats.rejections.integrator_failure += 1
                }
            }
        }
        if window_draws == 10_000 {
            if window_accepted * 100 < window_draws {
                return Err(Error::Config(alloc::format!(
                    "acceptance rate {:.4} over 10000 consecutive draws; sampling box is inconsistent with the physical parameters",
                    window_accepted as f64 / window_draws as f64
                )));
            }
            window_draws = 0;
            window_accepted = 0;
        }
    }
    stats.draws = sampler.draws();
    stats.acceptance_rate = if stats.draws == 0 {
        0.0
    } else {
        stats.accepted as f64 / stats.draws as f64
    };
    Ok(stats)
}

/// In-memory variant of [`build_dataset`].
pub fn build_dataset_in_memory(
    n_traj: usize,
    cfg: &DatasetConfig,
    seed: u64,
    params: &DimensionlessParams,
) -> Result<(Vec<DatasetSample>, Vec<TrajectorySummary>, DatasetStats)> {
    let mut rows = Vec::new();
    let mut summaries = Vec::new();
    let stats = build_dataset(n_traj, cfg, seed, params, |s, _, r| {
        summaries.push(*s);
        rows.extend_from_slice(r);
        Ok(())
    })?;
    Ok((rows, summaries, stats))
}
