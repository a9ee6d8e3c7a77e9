//! Characteristic flow `phi_t` transporting `H(0, .)`, with the variational
//! derivatives `v = d phi_t / dz` and `u = d/dz [H(t, phi_t)]`, exit-time detection,
//! and identity diagnostics.

use alloc::vec::Vec;

use num_complex::Complex64;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::measures::InitialData;
use crate::ode::{attempt, factor, Vector};
use crate::transforms::{h_infinity, h_infinity_sq, phi_weight, TraceParams};

const ONE: Complex64 = Complex64::new(1.0, 0.0);
const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const POLE_GUARD: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlowState {
    pub t: f64,
    pub phi: Complex64,
    pub w: Complex64,
    pub v: Complex64,
    pub u: Complex64,
}

/// Running integrals `int_0^t w ds` and `int_0^t s G(phi_s) ds`, integrated as extra
/// components of the same system.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlowIntegrals {
    pub int_w: Complex64,
    pub int_sg: Complex64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Status {
    Alive,
    Exited,
    Failed(Error),
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub z0: Complex64,
    pub horizon: f64,
    pub states: Vec<FlowState>,
    pub integrals: Vec<FlowIntegrals>,
    /// `Some(T_z)` if the trajectory left the disc before the horizon.
    pub exit_time: Option<f64>,
    pub status: Status,
    pub steps: usize,
}

impl Trajectory {
    pub fn last(&self) -> &FlowState {
        self.states.last().expect("trajectory has an initial state")
    }

    /// True if the trajectory reached the horizon without leaving the disc.
    pub fn survived(&self) -> bool {
        self.status == Status::Alive
    }

    /// States up to and including the exit point.
    pub fn inside(&self) -> impl Iterator<Item = (&FlowState, &FlowIntegrals)> {
        let cut = self.exit_time.unwrap_or(f64::INFINITY);
        self.states
            .iter()
            .zip(self.integrals.iter())
            .filter(move |(s, _)| s.t <= cut)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlowOptions {
    pub rtol: f64,
    pub atol: f64,
    /// Exit when `|phi| >= 1 - exit_eps`.
    pub exit_eps: f64,
    pub max_steps: usize,
    /// Keep every accepted step (otherwise only the endpoints).
    pub record: bool,
    /// Keep integrating the analytic continuation after the exit.
    pub continue_past_exit: bool,
}

impl Default for FlowOptions {
    fn default() -> Self {
        FlowOptions {
            rtol: 1e-10,
            atol: 1e-10,
            exit_eps: 1e-9,
            max_steps: 1_000_000,
            record: true,
            continue_past_exit: false,
        }
    }
}

impl FlowOptions {
    pub fn with_tol(tol: f64) -> Self {
        FlowOptions { rtol: tol, atol: tol, ..FlowOptions::default() }
    }

    pub fn endpoints_only(mut self) -> Self {
        self.record = false;
        self
    }
}

fn pole_check(phi: Complex64) -> Result<Complex64> {
    let d = ONE - phi * phi;
    if d.norm() < POLE_GUARD {
        return Err(Error::Pole { z: phi });
    }
    Ok(d)
}

fn guarded(m: Complex64, phi: Complex64) -> Result<Complex64> {
    if m.norm() < POLE_GUARD {
        return Err(Error::Pole { z: phi });
    }
    Ok(m)
}

// G and G' when a = 0 or b = 0: only the surviving pole is guarded.
fn g_single(phi: Complex64, p: TraceParams, deriv: bool) -> Result<Complex64> {
    let (a2, b2) = (p.a() * p.a(), p.b() * p.b());
    let mut out = ZERO;
    if b2 != 0.0 {
        let m = guarded(ONE - phi, phi)?;
        out += if deriv {
            (ONE + phi * 4.0 + phi * phi) / (m * m * m * m) * (2.0 * b2)
        } else {
            phi * (ONE + phi) / (m * m * m) * (2.0 * b2)
        };
    }
    if a2 != 0.0 {
        let m = guarded(ONE + phi, phi)?;
        out -= if deriv {
            (ONE - phi * 4.0 + phi * phi) / (m * m * m * m) * (2.0 * a2)
        } else {
            phi * (ONE - phi) / (m * m * m) * (2.0 * a2)
        };
    }
    Ok(out)
}

/// `G(phi)`, the right-hand side of `d/dt H(t, phi_t)`, evaluated as
/// `2 phi [b^2 (1+phi)^4 - a^2 (1-phi)^4] / (1-phi^2)^3`. The numerator is the factored
/// form of `4(alpha^2+beta^2) phi^2 (1+phi^2) + 2 alpha beta phi (1 + 6 phi^2 + phi^4)`.
/// When `a` or `b` vanishes the cancelled factor is divided out, so `-1` or `+1` is
/// not treated as a pole.
pub fn g_rhs(phi: Complex64, p: TraceParams) -> Result<Complex64> {
    if p.a() == 0.0 || p.b() == 0.0 {
        return g_single(phi, p, false);
    }
    let d = pole_check(phi)?;
    let (a2, b2) = (p.a() * p.a(), p.b() * p.b());
    let (pp, pm) = (ONE + phi, ONE - phi);
    let m = pp * pp * pp * pp * b2 - pm * pm * pm * pm * a2;
    Ok(phi * m * 2.0 / (d * d * d))
}

/// `G'(phi)` in closed form.
pub fn g_rhs_deriv(phi: Complex64, p: TraceParams) -> Result<Complex64> {
    if p.a() == 0.0 || p.b() == 0.0 {
        return g_single(phi, p, true);
    }
    let d = pole_check(phi)?;
    let (a2, b2) = (p.a() * p.a(), p.b() * p.b());
    let (pp, pm) = (ONE + phi, ONE - phi);
    let m = pp * pp * pp * pp * b2 - pm * pm * pm * pm * a2;
    let dm = pp * pp * pp * (4.0 * b2) + pm * pm * pm * (4.0 * a2);
    let n = phi * m * 2.0;
    let dn = m * 2.0 + phi * dm * 2.0;
    Ok((dn * d + phi * n * 6.0) / (d * d * d * d))
}

/// The expanded polynomial form of `G` exactly as the governing equation prints it.
pub fn g_rhs_expanded(phi: Complex64, p: TraceParams) -> Result<Complex64> {
    let d = pole_check(phi)?;
    let (al, be) = (p.alpha(), p.beta());
    let p2 = phi * phi;
    let num = p2 * (ONE + p2) * (4.0 * (al * al + be * be))
        + phi * (ONE + p2 * 6.0 + p2 * p2) * (2.0 * al * be);
    Ok(num / (d * d * d))
}

/// The integrand of the integration-by-parts identity without the factor `s`:
/// `2 phi (b^2 (1+phi)/(1-phi)^3 - a^2 (1-phi)/(1+phi)^3)`, zero-coefficient terms skipped.
pub fn g_tilde(phi: Complex64, p: TraceParams) -> Result<Complex64> {
    let (a, b) = (p.a(), p.b());
    let mut out = ZERO;
    if b != 0.0 {
        let m = guarded(ONE - phi, phi)?;
        out += (ONE + phi) / (m * m * m) * (b * b);
    }
    if a != 0.0 {
        let m = guarded(ONE + phi, phi)?;
        out -= (ONE - phi) / (m * m * m) * (a * a);
    }
    Ok(out * phi * 2.0)
}

/// Time derivative of `(phi, w, v, u)`.
pub fn flow_rhs(s: &FlowState, p: TraceParams) -> Result<[Complex64; 4]> {
    let g = g_rhs(s.phi, p)?;
    let gp = g_rhs_deriv(s.phi, p)?;
    Ok([s.phi * s.w, g, s.v * s.w + s.phi * s.u, gp * s.v])
}

fn rhs(t: f64, y: &Vector<6>, p: TraceParams) -> Result<Vector<6>> {
    let s = FlowState { t, phi: y[0], w: y[1], v: y[2], u: y[3] };
    let [dphi, dw, dv, du] = flow_rhs(&s, p)?;
    let gt = g_tilde(y[0], p)?;
    Ok([dphi, dw, dv, du, y[1], gt * t])
}

fn unpack(t: f64, y: &Vector<6>) -> (FlowState, FlowIntegrals) {
    (
        FlowState { t, phi: y[0], w: y[1], v: y[2], u: y[3] },
        FlowIntegrals { int_w: y[4], int_sg: y[5] },
    )
}

fn pole_distance(phi: Complex64, p: TraceParams) -> f64 {
    let mut d = f64::INFINITY;
    if p.b() != 0.0 {
        d = d.min((ONE - phi).norm());
    }
    if p.a() != 0.0 {
        d = d.min((ONE + phi).norm());
    }
    d
}

/// Integrate the characteristic system from `z0` up to `horizon`.
///
/// Input errors are returned as `Err`; numerical trouble during the integration
/// ends the trajectory with `Status::Failed`.
pub fn integrate(z0: Complex64, init: &InitialData, horizon: f64, opts: &FlowOptions) -> Result<Trajectory> {
    if !(z0.norm() < 1.0) {
        return Err(Error::OutsideDisc { z: z0 });
    }
    if !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidParameter { name: "horizon", value: horizon });
    }
    let p = init.params();
    let mut y: Vector<6> = [z0, init.herglotz0(z0)?, ONE, init.herglotz0_deriv(z0)?, ZERO, ZERO];
    let mut t = 0.0;
    let (s0, i0) = unpack(0.0, &y);
    let mut traj = Trajectory {
        z0,
        horizon,
        states: alloc::vec![s0],
        integrals: alloc::vec![i0],
        exit_time: None,
        status: Status::Alive,
        steps: 0,
    };
    if horizon == 0.0 {
        return Ok(traj);
    }
    let mut f = |t: f64, y: &Vector<6>| rhs(t, y, p);
    let mut f0 = match f(0.0, &y) {
        Ok(v) => v,
        Err(e) => {
            traj.status = Status::Failed(e);
            return Ok(traj);
        }
    };
    let limit = 1.0 - opts.exit_eps;
    let mut alive = true;
    let mut h = horizon.min(1e-2);
    while t < horizon {
        if traj.steps >= opts.max_steps {
            traj.status = Status::Failed(Error::TooManySteps { t });
            return Ok(traj);
        }
        traj.steps += 1;
        let phi = y[0];
        let r = phi.norm();
        h = h.min(horizon - t);
        if alive && r > 0.0 && y[1].re > 0.0 {
            let rate = r * y[1].re;
            h = h.min(0.5 * (1.0 - r) / rate);
        }
        let speed = (phi * y[1]).norm();
        if speed > 0.0 {
            h = h.min(0.5 * pole_distance(phi, p) / speed);
        }
        let h_min = 1e-14 * t.max(1.0);
        if h < h_min {
            // within time resolution of the exit: report it here
            if alive && r > 0.0 && y[1].re > 0.0 {
                let remaining = (limit - r).max(0.0) / (r * y[1].re);
                if remaining < 1e-10 {
                    let te = (t + remaining).min(horizon);
                    traj.exit_time = Some(te);
                    traj.status = Status::Exited;
                    let (s, i) = unpack(te, &y);
                    traj.states.push(s);
                    traj.integrals.push(i);
                    return Ok(traj);
                }
            }
            traj.status = Status::Failed(Error::StepUnderflow { t });
            return Ok(traj);
        }
        let a = match attempt(&mut f, t, &y, &f0, h, opts.rtol, opts.atol) {
            Ok(a) => a,
            Err(_) => {
                h *= 0.5;
                continue;
            }
        };
        let finite = a.y1.iter().all(|c| c.is_finite());
        if !finite || pole_distance(a.y1[0], p) < POLE_GUARD {
            h *= 0.5;
            continue;
        }
        if a.err > 1.0 {
            h *= factor(a.err).min(0.9);
            continue;
        }
        let t1 = if horizon - (t + h) < 1e-15 * horizon.max(1.0) { horizon } else { t + h };
        if alive && a.y1[1].re < -1e-8 * (1.0 + a.y1[1].norm()) && a.y1[0].norm() < limit {
            traj.status = Status::Failed(Error::Positivity { t: t1, re_w: a.y1[1].re });
            return Ok(traj);
        }
        if alive && a.y1[0].norm() >= limit {
            // localize |phi| = 1 - exit_eps on the dense output
            let (mut lo, mut hi) = (t, t1);
            while hi - lo > 1e-10 * hi.max(1.0) * 0.5 {
                let mid = 0.5 * (lo + hi);
                if a.dense.eval(mid)[0].norm() >= limit {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            let ye = a.dense.eval(hi);
            let (s, i) = unpack(hi, &ye);
            traj.exit_time = Some(hi);
            traj.status = Status::Exited;
            alive = false;
            if !opts.continue_past_exit {
                traj.states.push(s);
                traj.integrals.push(i);
                return Ok(traj);
            }
            if opts.record {
                traj.states.push(s);
                traj.integrals.push(i);
            }
        }
        t = t1;
        y = a.y1;
        f0 = a.f1;
        if opts.record || t >= horizon {
            let (s, i) = unpack(t, &y);
            traj.states.push(s);
            traj.integrals.push(i);
        }
        h *= factor(a.err);
    }
    Ok(traj)
}

fn scale(values: &[Complex64]) -> f64 {
    values.iter().fold(1.0f64, |m, v| m.max(v.norm()))
}

/// Max over samples of `|w^2 - H(inf, phi)^2 - (H(0, z0)^2 - H(inf, z0)^2)|`, each
/// sample divided by `max(1, |w^2|, |H(inf, phi)^2|)`.
pub fn residual_char_eq(traj: &Trajectory, init: &InitialData) -> Result<f64> {
    let p = init.params();
    let h0 = init.herglotz0(traj.z0)?;
    let c0 = h0 * h0 - h_infinity_sq(traj.z0, p);
    let mut worst = 0.0f64;
    for (s, _) in traj.inside() {
        let w2 = s.w * s.w;
        let hi2 = h_infinity_sq(s.phi, p);
        let r = (w2 - hi2 - c0).norm() / scale(&[w2, hi2, c0]);
        worst = worst.max(r);
    }
    Ok(worst)
}

/// Max over samples of `|(w^2 - Phi(phi)^2) - (H(0, z0)^2 - Phi(z0)^2)|`, normalized
/// like [`residual_char_eq`].
pub fn residual_k_subordination(traj: &Trajectory, init: &InitialData) -> Result<f64> {
    let p = init.params();
    let h0 = init.herglotz0(traj.z0)?;
    let ph0 = phi_weight(traj.z0, p)?;
    let k0 = h0 * h0 - ph0 * ph0;
    let mut worst = 0.0f64;
    for (s, _) in traj.inside() {
        let w2 = s.w * s.w;
        let ph = phi_weight(s.phi, p)?;
        let r = (w2 - ph * ph - k0).norm() / scale(&[w2, ph * ph, k0]);
        worst = worst.max(r);
    }
    Ok(worst)
}

/// Max over samples of `|phi_t - z0 exp(int_0^t w ds)|`.
pub fn residual_exp_form(traj: &Trajectory) -> f64 {
    traj.inside()
        .map(|(s, i)| (s.phi - traj.z0 * i.int_w.exp()).norm())
        .fold(0.0, f64::max)
}

/// Max over samples of `|Im int_0^t w ds| - (-2 |phi_t| ln|z0| / (1 - |phi_t|^2))`;
/// non-positive when the bound holds.
pub fn exp_form_bound_excess(traj: &Trajectory) -> f64 {
    let lz = traj.z0.norm().ln();
    if traj.z0.norm() == 0.0 {
        return 0.0;
    }
    traj.inside()
        .filter(|(s, _)| s.t > 0.0)
        .map(|(s, i)| {
            let r = s.phi.norm();
            i.int_w.im.abs() - (-2.0 * r * lz / (1.0 - r * r))
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Max over samples of `|t w - int_0^t w ds - int_0^t s G~(phi_s) ds|`, divided by
/// `max(1, t |w|)`.
pub fn ibp_check(traj: &Trajectory) -> f64 {
    traj.inside()
        .map(|(s, i)| {
            let tw = s.w * s.t;
            (tw - i.int_w - i.int_sg).norm() / tw.norm().max(1.0)
        })
        .fold(0.0, f64::max)
}

/// Max over samples of `|w - H(inf, phi)| / max(1, |w|)`; small for the free preset.
pub fn stationarity_residual(traj: &Trajectory, p: TraceParams) -> Result<f64> {
    let mut worst = 0.0f64;
    for (s, _) in traj.inside() {
        if s.phi.norm() >= 1.0 {
            continue;
        }
        let h = h_infinity(s.phi, p)?;
        worst = worst.max((s.w - h).norm() / s.w.norm().max(1.0));
    }
    Ok(worst)
}
