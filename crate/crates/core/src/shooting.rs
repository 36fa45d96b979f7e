//! Indirect shooting on the full boundary-value problem.
//!
//! Unknowns are the initial costates and the final time. The forward flow
//! uses the smoothed throttle `0.5 * (1 - S / sqrt(delta + S^2))`; the
//! smoothing constant is continued geometrically down to its final value,
//! each stage warm-started from the previous one. Roots are found with a
//! damped Gauss–Newton (Levenberg) iteration on a finite-difference
//! Jacobian.
//!
//! Non-convergence is an ordinary outcome ([`ShootingOutcome::Failed`]):
//! shooting is sensitive to its initial guess and callers are expected to
//! collect statistics over failures.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::dynamics::{
    canonical_rhs, hamiltonian, join, optimal_steering, smoothed_u, split, switching_function,
    Costate, LanderState, Throttle, ThrustCommand,
};
use crate::error::{Error, Result};
use crate::extremal::{
    extremal_point, propagate_extremal, ExtremalTrajectory, PropagationOptions, Quadruple,
    SamplingIntervals,
};
use crate::linalg;
use crate::math;
use crate::ode::{Dopri5, Dopri5Options};
use crate::params::DimensionlessParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShootingUnknowns {
    pub p0: Costate,
    pub tf: f64,
}

impl ShootingUnknowns {
    pub fn to_array(&self) -> [f64; 6] {
        let p = self.p0.to_array();
        [p[0], p[1], p[2], p[3], p[4], self.tf]
    }

    pub fn from_array(a: [f64; 6]) -> Self {
        Self {
            p0: Costate::new(a[0], a[1], a[2], a[3], a[4]),
            tf: a[5],
        }
    }
}

/// Boundary defects `(r - 1, v, theta, omega, p_m, H)` at the final time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShootingResidual(pub [f64; 6]);

impl ShootingResidual {
    pub fn norm_inf(&self) -> f64 {
        self.0.iter().fold(0.0, |m, v| math::max(m, math::abs(*v)))
    }
}

fn flow_rhs<'a>(
    delta: f64,
    params: &'a DimensionlessParams,
) -> impl FnMut(f64, &[f64; 10]) -> Result<[f64; 10]> + 'a {
    move |_t, y| canonical_rhs(y, Throttle::Smoothed(delta), params)
}

/// Hamiltonian of the smoothed problem with its throttle, steering angle.
///
/// The smoothed throttle is the pointwise minimizer of
/// `S u - sqrt(delta) * sqrt(u (1 - u))`, so that penalty belongs in the
/// Hamiltonian; without it `H` drifts by up to `sqrt(delta) / 2` across
/// each switch and only returns to zero afterwards.
fn smoothed_hamiltonian(y: &[f64; 10], delta: f64, params: &DimensionlessParams) -> Result<(f64, f64, f64)> {
    let (x, p) = split(y);
    let s = switching_function(&x, &p, params)?;
    let u = smoothed_u(s, delta)?;
    let psi = optimal_steering(&x, &p)?;
    let h = hamiltonian(&x, &p, &ThrustCommand::new(u, psi), params)?;
    let barrier = math::sqrt(delta) * math::sqrt(math::max(u * (1.0 - u), 0.0));
    Ok((h - barrier, u, psi))
}

fn integrate(
    x0: &LanderState,
    z: &ShootingUnknowns,
    delta: f64,
    params: &DimensionlessParams,
    ode: &Dopri5Options,
) -> Result<[f64; 10]> {
    if !(z.tf > 0.0 && z.tf.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "tf",
            value: z.tf,
        });
    }
    let mut f = flow_rhs(delta, params);
    let mut solver = Dopri5::new(*ode, 0.0, join(x0, &z.p0));
    solver.integrate_to(&mut f, z.tf).map_err(|e| match e {
        Error::StepUnderflow { t } => Error::StepUnderflow { t },
        _ => Error::BlowUp { t: solver.t() },
    })
}

/// Forward shooting function at smoothing `delta`.
pub fn residual(
    x0: &LanderState,
    z: &ShootingUnknowns,
    delta: f64,
    params: &DimensionlessParams,
) -> Result<ShootingResidual> {
    residual_with(x0, z, delta, params, &Dopri5Options::default())
}

pub fn residual_with(
    x0: &LanderState,
    z: &ShootingUnknowns,
    delta: f64,
    params: &DimensionlessParams,
    ode: &Dopri5Options,
) -> Result<ShootingResidual> {
    if !(delta > 0.0) {
        return Err(Error::InvalidParameter {
            name: "delta",
            value: delta,
        });
    }
    x0.check()?;
    let y = integrate(x0, z, delta, params, ode)?;
    let (h, _, _) = smoothed_hamiltonian(&y, delta, params)?;
    let out = ShootingResidual([y[0] - 1.0, y[1], y[2], y[3], y[9], h]);
    if out.0.iter().all(|v| v.is_finite()) {
        Ok(out)
    } else {
        Err(Error::BlowUp { t: z.tf })
    }
}

/// Geometric continuation of the smoothing constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HomotopySchedule {
    pub start: f64,
    pub end: f64,
    pub factor: f64,
}

impl Default for HomotopySchedule {
    fn default() -> Self {
        Self {
            start: 1e-2,
            end: 1e-10,
            factor: 10.0,
        }
    }
}

impl HomotopySchedule {
    pub fn deltas(&self) -> Result<Vec<f64>> {
        if !(self.start > 0.0 && self.end > 0.0 && self.start >= self.end && self.factor > 1.0) {
            return Err(Error::Config("homotopy schedule must decrease from start to end".into()));
        }
        let mut out = Vec::new();
        let mut d = self.start;
        while d > self.end * (1.0 + 1e-9) {
            out.push(d);
            d /= self.factor;
        }
        out.push(self.end);
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub fd_step: f64,
    pub ode: Dopri5Options,
    /// Points on the reported trajectory.
    pub output_points: usize,
    /// Largest warm-start residual accepted when entering a new stage.
    pub entry_threshold: f64,
    /// Bound on how many times one continuation step may be shortened.
    pub max_refinements: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iter: 40,
            fd_step: 1e-7,
            ode: Dopri5Options::default(),
            output_points: 400,
            entry_threshold: 1e-2,
            max_refinements: 8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageLog {
    pub delta: f64,
    /// Residual of the warm start, evaluated at this stage's `delta`.
    pub entry_residual: f64,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleRecord {
    pub t: f64,
    pub state: LanderState,
    pub costate: Costate,
    pub u: f64,
    pub psi: f64,
    pub s: f64,
    pub hamiltonian: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShootingSolution {
    pub unknowns: ShootingUnknowns,
    pub residual: ShootingResidual,
    pub delta: f64,
    pub stages: Vec<StageLog>,
    pub trajectory: Vec<OracleRecord>,
    /// Scaled propellant used, `m(0) - m(tf)`.
    pub fuel: f64,
    /// Zeros of the switching function along the trajectory.
    pub switch_times: Vec<f64>,
    pub max_abs_hamiltonian: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShootingFailure {
    pub stages: Vec<StageLog>,
    /// Smoothing constant of the stage that failed.
    pub failed_delta: f64,
    pub last_unknowns: ShootingUnknowns,
    pub residual: f64,
    pub message: alloc::string::String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ShootingOutcome {
    Converged(ShootingSolution),
    Failed(ShootingFailure),
}

impl ShootingOutcome {
    pub fn converged(&self) -> Option<&ShootingSolution> {
        match self {
            ShootingOutcome::Converged(s) => Some(s),
            ShootingOutcome::Failed(_) => None,
        }
    }
}

struct NewtonResult {
    z: [f64; 6],
    r: ShootingResidual,
    iterations: usize,
    converged: bool,
}

fn residual_array(
    x0: &LanderState,
    z: &[f64; 6],
    delta: f64,
    params: &DimensionlessParams,
    ode: &Dopri5Options,
) -> Result<ShootingResidual> {
    residual_with(x0, &ShootingUnknowns::from_array(*z), delta, params, ode)
}

/// Damped Gauss-Newton on a square system with a forward-difference
/// Jacobian. `eval` returns `None` on failure, which counts as a rejected
/// trial point.
fn levenberg<const N: usize, F>(z0: [f64; N], mut eval: F, tol: f64, max_iter: usize, fd_step: f64) -> Option<(
    [f64; N],
    [f64; N],
    usize,
    bool,
)>
where
    F: FnMut(&[f64; N]) -> Option<[f64; N]>,
{
    let norm_inf = |r: &[f64; N]| r.iter().fold(0.0, |m, v| math::max(m, math::abs(*v)));
    let norm2 = |r: &[f64; N]| r.iter().map(|v| v * v).sum::<f64>();
    let mut z = z0;
    let mut r = eval(&z)?;
    let mut lambda = 1e-8;
    let mut iterations = 0;
    while norm_inf(&r) >= tol {
        if iterations >= max_iter {
            return Some((z, r, iterations, false));
        }
        iterations += 1;
        let mut jac = [[0.0; N]; N];
        for j in 0..N {
            let h = fd_step * math::max(1.0, math::abs(z[j]));
            let mut zp = z;
            zp[j] += h;
            let rp = eval(&zp)?;
            for i in 0..N {
                jac[i][j] = (rp[i] - r[i]) / h;
            }
        }
        let mut jtj = [[0.0; N]; N];
        let mut jtr = [0.0; N];
        for a in 0..N {
            for b in 0..N {
                jtj[a][b] = (0..N).map(|i| jac[i][a] * jac[i][b]).sum();
            }
            jtr[a] = (0..N).map(|i| jac[i][a] * r[i]).sum();
        }
        let mut improved = false;
        for _ in 0..30 {
            let mut m = jtj;
            for a in 0..N {
                m[a][a] += lambda * math::max(jtj[a][a], 1e-12);
            }
            let Some(dz) = linalg::solve_small(m, jtr) else {
                lambda *= 10.0;
                continue;
            };
            let mut zt = z;
            for a in 0..N {
                zt[a] -= dz[a];
            }
            if let Some(rt) = eval(&zt) {
                if norm2(&rt) < norm2(&r) {
                    z = zt;
                    r = rt;
                    lambda = math::max(lambda / 10.0, 1e-12);
                    improved = true;
                    break;
                }
            }
            lambda *= 10.0;
        }
        if !improved {
            return Some((z, r, iterations, false));
        }
    }
    Some((z, r, iterations, true))
}

fn evaluate_entry(
    x0: &LanderState,
    z: &[f64; 6],
    delta: f64,
    params: &DimensionlessParams,
    opts: &SolverOptions,
) -> Result<f64> {
    residual_array(x0, z, delta, params, &opts.ode).map(|r| r.norm_inf())
}

fn newton(
    x0: &LanderState,
    z0: [f64; 6],
    delta: f64,
    params: &DimensionlessParams,
    opts: &SolverOptions,
) -> Result<NewtonResult> {
    let mut eval = |z: &[f64; 6]| residual_array(x0, z, delta, params, &opts.ode).ok().map(|r| r.0);
    let r0 = residual_array(x0, &z0, delta, params, &opts.ode)?;
    if r0.norm_inf() < opts.tol {
        return Ok(NewtonResult {
            z: z0,
            r: r0,
            iterations: 0,
            converged: true,
        });
    }
    match levenberg(z0, &mut eval, opts.tol, opts.max_iter, opts.fd_step) {
        Some((z, r, iterations, converged)) => Ok(NewtonResult {
            z,
            r: ShootingResidual(r),
            iterations,
            converged,
        }),
        None => Err(Error::BlowUp { t: z0[5] }),
    }
}

/// Solve the boundary-value problem from `x0`, continuing the smoothing
/// constant along `schedule`.
pub fn solve(
    x0: &LanderState,
    z0: &ShootingUnknowns,
    schedule: &HomotopySchedule,
    params: &DimensionlessParams,
    opts: &SolverOptions,
) -> Result<ShootingOutcome> {
    x0.check()?;
    if !z0.to_array().iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("shooting initial guess"));
    }
    let deltas = schedule.deltas()?;
    let mut z = z0.to_array();
    let mut stages: Vec<StageLog> = Vec::with_capacity(deltas.len());
    let mut prev: Option<f64> = None;
    for &target in &deltas {
        loop {
            // Shorten the continuation step until the warm start is close
            // enough to the next stage's root.
            let mut delta = target;
            let mut entry = evaluate_entry(x0, &z, delta, params, opts);
            if let Some(p) = prev {
                let mut halvings = 0;
                while entry.as_ref().map_or(true, |e| *e >= opts.entry_threshold) && halvings < opts.max_refinements {
                    delta = math::sqrt(p * delta);
                    entry = evaluate_entry(x0, &z, delta, params, opts);
                    halvings += 1;
                }
            }
            let fail = |stages: Vec<StageLog>, z: [f64; 6], residual: f64, message: alloc::string::String| {
                ShootingOutcome::Failed(ShootingFailure {
                    stages,
                    failed_delta: delta,
                    last_unknowns: ShootingUnknowns::from_array(z),
                    residual,
                    message,
                })
            };
            let entry = match entry {
                Ok(e) => e,
                Err(e) => return Ok(fail(stages, z, f64::INFINITY, alloc::format!("{e}"))),
            };
            let res = match newton(x0, z, delta, params, opts) {
                Ok(r) => r,
                Err(e) => return Ok(fail(stages, z, entry, alloc::format!("{e}"))),
            };
            stages.push(StageLog {
                delta,
                entry_residual: entry,
                iterations: res.iterations,
                residual: res.r.norm_inf(),
                converged: res.converged,
            });
            if !res.converged {
                let norm = res.r.norm_inf();
                return Ok(fail(stages, res.z, norm, "residual did not reach tolerance".into()));
            }
            z = res.z;
            prev = Some(delta);
            if delta == target {
                break;
            }
        }
    }
    let delta = *deltas.last().expect("schedule has at least one stage");
    let unknowns = ShootingUnknowns::from_array(z);
    let residual = residual_with(x0, &unknowns, delta, params, &opts.ode)?;
    let trajectory = sample_trajectory(x0, &unknowns, delta, params, opts)?;
    let fuel = x0.m - trajectory.last().map_or(x0.m, |r| r.state.m);
    let mut switch_times = Vec::new();
    for w in trajectory.windows(2) {
        if (w[0].s < 0.0) != (w[1].s < 0.0) {
            // linear interpolation on the output grid
            let f = w[0].s / (w[0].s - w[1].s);
            switch_times.push(w[0].t + f * (w[1].t - w[0].t));
        }
    }
    let max_abs_hamiltonian = trajectory
        .iter()
        .fold(0.0, |m, r| math::max(m, math::abs(r.hamiltonian)));
    Ok(ShootingOutcome::Converged(ShootingSolution {
        unknowns,
        residual,
        delta,
        stages,
        trajectory,
        fuel,
        switch_times,
        max_abs_hamiltonian,
    }))
}

/// Uniformly sampled forward trajectory for given unknowns.
pub fn sample_trajectory(
    x0: &LanderState,
    z: &ShootingUnknowns,
    delta: f64,
    params: &DimensionlessParams,
    opts: &SolverOptions,
) -> Result<Vec<OracleRecord>> {
    let n = opts.output_points.max(2);
    let mut f = flow_rhs(delta, params);
    let mut solver = Dopri5::new(opts.ode, 0.0, join(x0, &z.p0));
    let mut out = Vec::with_capacity(n);
    let push = |out: &mut Vec<OracleRecord>, t: f64, y: &[f64; 10]| -> Result<()> {
        let (x, p) = split(y);
        let (h, u, psi) = smoothed_hamiltonian(y, delta, params)?;
        out.push(OracleRecord {
            t,
            state: x,
            costate: p,
            u,
            psi,
            s: switching_function(&x, &p, params)?,
            hamiltonian: h,
        });
        Ok(())
    };
    push(&mut out, 0.0, solver.y())?;
    for k in 1..n {
        let t = z.tf * k as f64 / (n - 1) as f64;
        let y = solver.integrate_to(&mut f, t)?;
        push(&mut out, t, &y)?;
    }
    Ok(out)
}

/// Exact warm start from a point of a known extremal: the remainder of the
/// extremal from `tau` to touchdown is itself optimal.
pub fn seed_from_extremal(
    q: &Quadruple,
    tau: f64,
    params: &DimensionlessParams,
) -> Result<(LanderState, ShootingUnknowns)> {
    let rec = extremal_point(q, tau, params).map_err(|r| match r {
        crate::extremal::Rejection::Integrator(e) | crate::extremal::Rejection::InvalidQuadruple(e) => e,
        _ => Error::Domain("extremal rejected"),
    })?;
    Ok((
        rec.state,
        ShootingUnknowns {
            p0: rec.costate,
            tf: tau,
        },
    ))
}

/// Fit the parameterized system to a given flight state: find the
/// touchdown quadruple and time-to-go whose backward extremal passes
/// through `target`. Returns the quadruple, `tau`, and the final defect.
pub fn fit_extremal(
    target: &LanderState,
    q_guess: &Quadruple,
    tau_guess: f64,
    params: &DimensionlessParams,
    max_iter: usize,
) -> Result<(Quadruple, f64, f64)> {
    target.check()?;
    let tgt = target.to_array();
    let eval = |z: &[f64; 5]| -> Option<[f64; 5]> {
        if !(z[4] > 0.0) {
            return None;
        }
        let q = Quadruple::new(z[0], z[1], z[2], z[3]);
        let traj = propagate_extremal(&q, params, &PropagationOptions::exact_to(z[4])).ok()?;
        let x = traj.last().state.to_array();
        let mut d = [0.0; 5];
        for i in 0..5 {
            d[i] = x[i] - tgt[i];
        }
        Some(d)
    };
    let z0 = [q_guess.p_r0, q_guess.p_v0, q_guess.p_theta0, q_guess.p_omega0, tau_guess];
    let (z, r, _, _) = levenberg(z0, eval, 1e-11, max_iter, 1e-7).ok_or(Error::BlowUp { t: tau_guess })?;
    let defect = r.iter().fold(0.0, |m, v| math::max(m, math::abs(*v)));
    Ok((Quadruple::new(z[0], z[1], z[2], z[3]), z[4], defect))
}

/// Unknowns from a fitted extremal.
pub fn seed_from_fit(
    target: &LanderState,
    q_guess: &Quadruple,
    tau_guess: f64,
    params: &DimensionlessParams,
) -> Result<(ShootingUnknowns, f64)> {
    let (q, tau, defect) = fit_extremal(target, q_guess, tau_guess, params, 60)?;
    let (_, z) = seed_from_extremal(&q, tau, params)?;
    Ok((z, defect))
}

/// Closest point (in scaled state space) among `(state, quadruple, tau)`
/// candidates, returned as a quadruple and time-to-go guess.
pub fn nearest_in_bank<I>(target: &LanderState, bank: I) -> Option<(Quadruple, f64)>
where
    I: IntoIterator<Item = (LanderState, Quadruple, f64)>,
{
    // rough spreads of each component over the data
    const SCALE: [f64; 5] = [0.02, 0.05, 0.2, 0.5, 0.2];
    let t = target.to_array();
    let mut best: Option<(f64, Quadruple, f64)> = None;
    for (state, q, tau) in bank {
        let x = state.to_array();
        let d: f64 = (0..5).map(|i| ((x[i] - t[i]) / SCALE[i]) * ((x[i] - t[i]) / SCALE[i])).sum();
        if best.is_none_or(|(bd, _, _)| d < bd) {
            best = Some((d, q, tau));
        }
    }
    best.map(|(_, q, tau)| (q, tau))
}

/// Bank candidates from propagated extremals.
pub fn bank_points(trajs: &[ExtremalTrajectory]) -> impl Iterator<Item = (LanderState, Quadruple, f64)> + '_ {
    trajs
        .iter()
        .flat_map(|traj| traj.records.iter().map(move |rec| (rec.state, traj.quadruple, rec.tau)))
}

/// Warm start that uses no data: fit from the centre of the sampling box.
pub fn cold_seed(
    target: &LanderState,
    tau_guess: f64,
    params: &DimensionlessParams,
) -> Result<(ShootingUnknowns, f64)> {
    let iv = SamplingIntervals::default();
    let mid = |(a, b): (f64, f64)| 0.5 * (a + b);
    let q = Quadruple::new(mid(iv.p_r), mid(iv.p_v), mid(iv.p_theta), mid(iv.p_omega));
    seed_from_fit(target, &q, tau_guess, params)
}
