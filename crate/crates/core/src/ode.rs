//! Dormand–Prince 5(4) with dense output and zero-crossing location.
//!
//! The integrator works on fixed-size arrays so that the hot path never
//! allocates. Callers drive it one accepted step at a time with
//! [`Dopri5::step`]; each step comes back as a [`DenseStep`] that can be
//! evaluated anywhere inside the step. Discontinuous right-hand sides are
//! handled by the caller: locate the crossing with [`locate_crossing`],
//! then [`Dopri5::restart`] at the event.

use crate::error::{Error, Result};
use crate::math;

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dopri5Options {
    pub rtol: f64,
    pub atol: f64,
    pub h_max: f64,
    pub h_min: f64,
    pub max_steps: usize,
}

impl Default for Dopri5Options {
    fn default() -> Self {
        Self {
            rtol: 1e-12,
            atol: 1e-12,
            h_max: f64::INFINITY,
            h_min: 1e-14,
            max_steps: 200_000,
        }
    }
}

/// One accepted step with its continuous extension.
#[derive(Debug, Clone, Copy)]
pub struct DenseStep<const N: usize> {
    pub t0: f64,
    pub h: f64,
    pub y0: [f64; N],
    pub y1: [f64; N],
    rcont: [[f64; N]; 5],
}

impl<const N: usize> DenseStep<N> {
    pub fn t1(&self) -> f64 {
        self.t0 + self.h
    }

    /// Fourth-order interpolant, valid for `t` in `[t0, t0 + h]`.
    pub fn eval(&self, t: f64) -> [f64; N] {
        let s = (t - self.t0) / self.h;
        let s1 = 1.0 - s;
        let r = &self.rcont;
        let mut out = [0.0; N];
        for i in 0..N {
            out[i] = r[0][i] + s * (r[1][i] + s1 * (r[2][i] + s * (r[3][i] + s1 * r[4][i])));
        }
        out
    }
}

/// Adaptive integrator state. Integration always runs toward increasing `t`.
#[derive(Debug, Clone)]
pub struct Dopri5<const N: usize> {
    opts: Dopri5Options,
    t: f64,
    y: [f64; N],
    k1: Option<[f64; N]>,
    h: Option<f64>,
    facold: f64,
    steps: usize,
}

struct Stages<const N: usize> {
    k: [[f64; N]; 7],
    y1: [f64; N],
    err: [f64; N],
}

fn stages<const N: usize, F>(f: &mut F, t: f64, y: &[f64; N], k1: [f64; N], h: f64) -> Result<Stages<N>>
where
    F: FnMut(f64, &[f64; N]) -> Result<[f64; N]>,
{
    let mut tmp = [0.0; N];
    for i in 0..N {
        tmp[i] = y[i] + h * A21 * k1[i];
    }
    let k2 = f(t + C2 * h, &tmp)?;
    for i in 0..N {
        tmp[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
    }
    let k3 = f(t + C3 * h, &tmp)?;
    for i in 0..N {
        tmp[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
    }
    let k4 = f(t + C4 * h, &tmp)?;
    for i in 0..N {
        tmp[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
    }
    let k5 = f(t + C5 * h, &tmp)?;
    for i in 0..N {
        tmp[i] = y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
    }
    let k6 = f(t + h, &tmp)?;
    let mut y1 = [0.0; N];
    for i in 0..N {
        y1[i] = y[i] + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
    }
    let k7 = f(t + h, &y1)?;
    let mut err = [0.0; N];
    for i in 0..N {
        err[i] = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
    }
    Ok(Stages {
        k: [k1, k2, k3, k4, k5, k6, k7],
        y1,
        err,
    })
}

/// A single fifth-order step of length `h` without error control.
pub fn rk_step<const N: usize, F>(f: &mut F, t: f64, y: &[f64; N], h: f64) -> Result<[f64; N]>
where
    F: FnMut(f64, &[f64; N]) -> Result<[f64; N]>,
{
    if h == 0.0 {
        return Ok(*y);
    }
    let k1 = f(t, y)?;
    Ok(stages(f, t, y, k1, h)?.y1)
}

impl<const N: usize> Dopri5<N> {
    pub fn new(opts: Dopri5Options, t0: f64, y0: [f64; N]) -> Self {
        Self {
            opts,
            t: t0,
            y: y0,
            k1: None,
            h: None,
            facold: 1e-4,
            steps: 0,
        }
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn y(&self) -> &[f64; N] {
        &self.y
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Continue from a new point, e.g. after a discontinuity. The last step
    /// size is kept as the first trial.
    pub fn restart(&mut self, t: f64, y: [f64; N]) {
        self.t = t;
        self.y = y;
        self.k1 = None;
        self.facold = 1e-4;
    }

    fn scale(&self, a: f64, b: f64) -> f64 {
        self.opts.atol + self.opts.rtol * math::max(math::abs(a), math::abs(b))
    }

    fn initial_step<F>(&self, f: &mut F, k1: &[f64; N], t_end: f64) -> Result<f64>
    where
        F: FnMut(f64, &[f64; N]) -> Result<[f64; N]>,
    {
        let mut d0 = 0.0;
        let mut d1 = 0.0;
        for i in 0..N {
            let sc = self.scale(self.y[i], self.y[i]);
            d0 += (self.y[i] / sc) * (self.y[i] / sc);
            d1 += (k1[i] / sc) * (k1[i] / sc);
        }
        let (d0, d1) = (math::sqrt(d0 / N as f64), math::sqrt(d1 / N as f64));
        let mut h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        h0 = math::min(h0, t_end - self.t);
        let mut y1 = [0.0; N];
        for i in 0..N {
            y1[i] = self.y[i] + h0 * k1[i];
        }
        let f1 = f(self.t + h0, &y1)?;
        let mut d2 = 0.0;
        for i in 0..N {
            let sc = self.scale(self.y[i], self.y[i]);
            d2 += ((f1[i] - k1[i]) / sc) * ((f1[i] - k1[i]) / sc);
        }
        let d2 = math::sqrt(d2 / N as f64) / h0;
        let dm = math::max(d1, d2);
        let h1 = if dm <= 1e-15 {
            math::max(1e-6, h0 * 1e-3)
        } else {
            math::powf(0.01 / dm, 0.2)
        };
        Ok(math::min(math::min(100.0 * h0, h1), self.opts.h_max))
    }

    /// Take one accepted step, never stepping past `t_end`.
    pub fn step<F>(&mut self, f: &mut F, t_end: f64) -> Result<DenseStep<N>>
    where
        F: FnMut(f64, &[f64; N]) -> Result<[f64; N]>,
    {
        const SAFE: f64 = 0.9;
        const FAC1: f64 = 0.2;
        const FAC2: f64 = 10.0;
        const BETA: f64 = 0.04;
        let expo1 = 0.2 - BETA * 0.75;

        let k1 = match self.k1 {
            Some(k) => k,
            None => f(self.t, &self.y)?,
        };
        let mut h = match self.h {
            Some(h) => h,
            None => self.initial_step(f, &k1, t_end)?,
        };
        let mut last_rejected = false;
        loop {
            if self.steps >= self.opts.max_steps {
                return Err(Error::TooManySteps(self.opts.max_steps));
            }
            let remaining = t_end - self.t;
            let hit_end = h >= remaining;
            let h_try = if hit_end { remaining } else { h };
            if h_try < self.opts.h_min && !hit_end {
                return Err(Error::StepUnderflow { t: self.t });
            }
            self.steps += 1;
            let st = match stages(f, self.t, &self.y, k1, h_try) {
                Ok(st) => st,
                // a failing stage evaluation (e.g. mass through zero) is
                // treated like a rejected step
                Err(e) => {
                    h = h_try * 0.25;
                    if h < self.opts.h_min {
                        return Err(e);
                    }
                    last_rejected = true;
                    continue;
                }
            };
            let mut err = 0.0;
            for i in 0..N {
                let sc = self.scale(self.y[i], st.y1[i]);
                err += (st.err[i] / sc) * (st.err[i] / sc);
            }
            let err = math::sqrt(err / N as f64);
            if !err.is_finite() {
                h = h_try * 0.25;
                last_rejected = true;
                continue;
            }
            let fac11 = math::powf(err, expo1);
            if err <= 1.0 {
                let mut fac = fac11 / math::powf(self.facold, BETA);
                fac = math::max(1.0 / FAC2, math::min(1.0 / FAC1, fac / SAFE));
                let mut h_new = h_try / fac;
                if last_rejected {
                    h_new = math::min(h_new, h_try);
                }
                self.facold = math::max(err, 1e-4);
                let k = &st.k;
                let mut rcont = [[0.0; N]; 5];
                for i in 0..N {
                    let ydiff = st.y1[i] - self.y[i];
                    let bspl = h_try * k[0][i] - ydiff;
                    rcont[0][i] = self.y[i];
                    rcont[1][i] = ydiff;
                    rcont[2][i] = bspl;
                    rcont[3][i] = ydiff - h_try * k[6][i] - bspl;
                    rcont[4][i] = h_try
                        * (D1 * k[0][i] + D3 * k[2][i] + D4 * k[3][i] + D5 * k[4][i] + D6 * k[5][i] + D7 * k[6][i]);
                }
                let out = DenseStep {
                    t0: self.t,
                    h: h_try,
                    y0: self.y,
                    y1: st.y1,
                    rcont,
                };
                self.t = if hit_end { t_end } else { self.t + h_try };
                self.y = st.y1;
                self.k1 = Some(k[6]);
                // keep the controller's proposal rather than the truncated step
                self.h = Some(math::min(if hit_end { math::max(h_new, h) } else { h_new }, self.opts.h_max));
                return Ok(out);
            }
            h = h_try / math::min(1.0 / FAC1, fac11 / SAFE);
            last_rejected = true;
        }
    }

    /// Integrate to `t_end` and return the final state.
    pub fn integrate_to<F>(&mut self, f: &mut F, t_end: f64) -> Result<[f64; N]>
    where
        F: FnMut(f64, &[f64; N]) -> Result<[f64; N]>,
    {
        while self.t < t_end {
            self.step(f, t_end)?;
        }
        Ok(self.y)
    }
}

/// Locate the first zero of `g` inside `[ta, tb]` of an accepted step, given
/// that `g` changes sign across the bracket on the dense output. The root is
/// first found on the interpolant and then polished with exact
/// single steps from the step start, so the returned state carries the
/// integrator's own accuracy rather than the interpolant's.
pub fn locate_crossing<const N: usize, F, G>(
    f: &mut F,
    step: &DenseStep<N>,
    g: &G,
    ta: f64,
    tb: f64,
) -> Result<(f64, [f64; N])>
where
    F: FnMut(f64, &[f64; N]) -> Result<[f64; N]>,
    G: Fn(f64, &[f64; N]) -> f64,
{
    let gd = |t: f64| g(t, &step.eval(t));
    let t_star = illinois(&gd, ta, tb, 1e-15 * math::max(1.0, math::abs(tb)))?;

    let eps = math::max(1e-7 * step.h, 1e-12);
    let lo = math::max(step.t0, t_star - eps);
    let hi = math::min(step.t1(), t_star + eps);
    let slope = (gd(hi) - gd(lo)) / (hi - lo);

    let mut t = t_star;
    let mut y = rk_step(f, step.t0, &step.y0, t - step.t0)?;
    if slope.is_finite() && slope != 0.0 {
        for _ in 0..4 {
            let gv = g(t, &y);
            let dt = -gv / slope;
            let t_new = math::min(math::max(t + dt, step.t0), step.t1());
            if math::abs(t_new - t) < 1e-16 * math::max(1.0, math::abs(t)) {
                break;
            }
            t = t_new;
            y = rk_step(f, step.t0, &step.y0, t - step.t0)?;
            if math::abs(dt) < 1e-15 {
                break;
            }
        }
    }
    Ok((t, y))
}

/// Modified regula falsi. `g(a)` and `g(b)` must have opposite signs (or one
/// of them is zero).
fn illinois<G: Fn(f64) -> f64>(g: &G, mut a: f64, mut b: f64, tol: f64) -> Result<f64> {
    let mut fa = g(a);
    let mut fb = g(b);
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if !(fa.is_finite() && fb.is_finite()) || fa * fb > 0.0 {
        return Err(Error::NonFinite("event bracket"));
    }
    let mut side = 0i8;
    let mut c = b;
    for _ in 0..200 {
        c = (a * fb - b * fa) / (fb - fa);
        if !(c > math::min(a, b) && c < math::max(a, b)) {
            c = 0.5 * (a + b);
        }
        let fc = g(c);
        if fc == 0.0 || math::abs(b - a) < tol {
            return Ok(c);
        }
        if fc * fb > 0.0 {
            b = c;
            fb = fc;
            if side == -1 {
                fa *= 0.5;
            }
            side = -1;
        } else {
            a = c;
            fa = fc;
            if side == 1 {
                fb *= 0.5;
            }
            side = 1;
        }
        if math::abs(b - a) < tol {
            return Ok(c);
        }
    }
    Ok(c)
}
