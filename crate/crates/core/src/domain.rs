//! The domain `Omega_t = {z : t < T_z}` of the flow: membership, the function
//! `h_t`, boundary tracing along rays, the boundary derivative limit on the circle
//! part, and the endpoints of the real interval.

use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64;
#[allow(unused_imports)]
use num_traits::Float;

use crate::closedform::phi_real;
use crate::error::{Error, Result};
use crate::flow::{integrate, FlowOptions, Status};
use crate::measures::{unit, InitialData};

/// Reported in place of `h_t` when the continuation past the exit breaks down.
pub const H_SENTINEL: f64 = -1.0e6;

/// Flow options used by the convenience entry points.
pub fn default_flow() -> FlowOptions {
    FlowOptions::with_tol(1e-10).endpoints_only()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoundaryKind {
    Interior,
    Circle,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundaryPoint {
    pub theta: f64,
    /// Boundary radius; exactly 1 for circle points.
    pub r: f64,
    pub kind: BoundaryKind,
}

impl BoundaryPoint {
    pub fn z(&self) -> Complex64 {
        unit(self.theta) * self.r
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Endpoints {
    pub x_minus: f64,
    pub x_plus: f64,
    /// The endpoint could not be separated from `-1` / `+1`.
    pub touching: (bool, bool),
}

#[derive(Clone, Debug, PartialEq)]
pub struct DomainSnapshot {
    pub t: f64,
    pub tol: f64,
    /// Ordered by angle in `(-pi, pi]`.
    pub boundary: Vec<BoundaryPoint>,
    pub x_minus: f64,
    pub x_plus: f64,
    pub touching: (bool, bool),
}

/// `z` is in `Omega_t`.
pub fn contains(z: Complex64, t: f64, init: &InitialData) -> Result<bool> {
    contains_with(z, t, init, &default_flow())
}

pub fn contains_with(z: Complex64, t: f64, init: &InitialData, opts: &FlowOptions) -> Result<bool> {
    if !(z.norm() < 1.0) {
        return Err(Error::OutsideDisc { z });
    }
    if z.norm() == 0.0 || t == 0.0 {
        return Ok(true);
    }
    let opts = FlowOptions { continue_past_exit: false, ..*opts };
    let tr = integrate(z, init, t, &opts)?;
    match tr.status {
        Status::Alive => Ok(true),
        Status::Exited => Ok(false),
        Status::Failed(e) => Err(e),
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HValue {
    pub value: f64,
    /// The continuation past the exit failed and `value` is [`H_SENTINEL`].
    pub diverged: bool,
}

/// `h_t(r, e^{i theta}) = ln|phi_t(r e^{i theta})| / ln r`.
pub fn h_t_value(r: f64, theta: f64, t: f64, init: &InitialData) -> Result<HValue> {
    h_t_value_with(r, theta, t, init, &default_flow())
}

pub fn h_t_value_with(r: f64, theta: f64, t: f64, init: &InitialData, opts: &FlowOptions) -> Result<HValue> {
    if !(r > 0.0 && r < 1.0) {
        return Err(Error::InvalidParameter { name: "r", value: r });
    }
    let opts = FlowOptions { continue_past_exit: true, record: false, ..*opts };
    let tr = integrate(unit(theta) * r, init, t, &opts)?;
    match tr.status {
        Status::Failed(e) => {
            if tr.exit_time.is_some() {
                Ok(HValue { value: H_SENTINEL, diverged: true })
            } else {
                Err(e)
            }
        }
        _ => Ok(HValue { value: tr.last().phi.norm().ln() / r.ln(), diverged: false }),
    }
}

/// `n` ray angles in `(-pi, pi]`, symmetric under `theta -> -theta` and clustered
/// near `0` and `pi` (Chebyshev-Lobatto in the half angle). `n` must be even and at
/// least 4.
pub fn ray_angles(n: usize) -> Result<Vec<f64>> {
    if n < 4 || n % 2 == 1 {
        return Err(Error::InvalidParameter { name: "n_theta", value: n as f64 });
    }
    let m = n / 2 + 1;
    let half: Vec<f64> = (0..m)
        .map(|k| {
            if k == m - 1 {
                PI
            } else {
                0.5 * PI * (1.0 - (PI * k as f64 / (m - 1) as f64).cos())
            }
        })
        .collect();
    let mut out: Vec<f64> = half[1..m - 1].iter().rev().map(|&x| -x).collect();
    out.extend_from_slice(&half);
    Ok(out)
}

/// Boundary point on the ray at `theta`: bisection in `r` on [`contains_with`] to
/// width `tol`.
pub fn ray_boundary(theta: f64, t: f64, tol: f64, init: &InitialData, opts: &FlowOptions) -> Result<BoundaryPoint> {
    if !(t > 0.0) {
        return Err(Error::InvalidParameter { name: "t", value: t });
    }
    if !(tol > 0.0 && tol < 0.1) {
        return Err(Error::InvalidParameter { name: "tol", value: tol });
    }
    let dir = unit(theta);
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if contains_with(dir * mid, t, init, opts)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    for k in 1..4 {
        if !contains_with(dir * (lo * k as f64 / 4.0), t, init, opts)? {
            return Err(Error::NonMonotoneRay { theta });
        }
    }
    let r = 0.5 * (lo + hi);
    if r > 1.0 - 10.0 * tol {
        Ok(BoundaryPoint { theta, r: 1.0, kind: BoundaryKind::Circle })
    } else {
        Ok(BoundaryPoint { theta, r, kind: BoundaryKind::Interior })
    }
}

fn real_bisect(sign: f64, t: f64, tol: f64, init: &InitialData, opts: &FlowOptions) -> Result<(f64, bool)> {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if contains_with(Complex64::new(sign * mid, 0.0), t, init, opts)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if hi > 1.0 - 10.0 * tol {
        return Ok((sign, true));
    }
    // refine with the closed form, which is defined exactly up to the exit
    let inside = |x: f64| phi_real(t, sign * x, init).is_ok();
    let (mut a, mut b) = ((lo - tol).max(0.0), (hi + tol).min(1.0 - 1e-15));
    if inside(a) && !inside(b) {
        while b - a > 1e-14 {
            let mid = 0.5 * (a + b);
            if inside(mid) {
                a = mid;
            } else {
                b = mid;
            }
        }
        return Ok((sign * 0.5 * (a + b), false));
    }
    Ok((sign * 0.5 * (lo + hi), false))
}

/// `x(t)_-` and `x(t)_+`, the ends of `Omega_t` on the real diameter.
pub fn x_endpoints(t: f64, init: &InitialData) -> Result<Endpoints> {
    x_endpoints_with(t, 1e-6, init, &default_flow())
}

pub fn x_endpoints_with(t: f64, tol: f64, init: &InitialData, opts: &FlowOptions) -> Result<Endpoints> {
    if !(t > 0.0) {
        return Err(Error::InvalidParameter { name: "t", value: t });
    }
    let (x_minus, tm) = real_bisect(-1.0, t, tol, init, opts)?;
    let (x_plus, tp) = real_bisect(1.0, t, tol, init, opts)?;
    Ok(Endpoints { x_minus, x_plus, touching: (tm, tp) })
}

/// Collect per-ray results into a snapshot, sorted by angle.
pub fn assemble(t: f64, tol: f64, mut boundary: Vec<BoundaryPoint>, ends: Endpoints) -> DomainSnapshot {
    boundary.sort_by(|a, b| a.theta.total_cmp(&b.theta));
    DomainSnapshot {
        t,
        tol,
        boundary,
        x_minus: ends.x_minus,
        x_plus: ends.x_plus,
        touching: ends.touching,
    }
}

pub fn trace_boundary(t: f64, n_theta: usize, tol: f64, init: &InitialData) -> Result<DomainSnapshot> {
    trace_boundary_with(t, n_theta, tol, init, &default_flow())
}

/// Sequential boundary trace; see [`ray_boundary`] and [`assemble`] for the pieces.
pub fn trace_boundary_with(
    t: f64,
    n_theta: usize,
    tol: f64,
    init: &InitialData,
    opts: &FlowOptions,
) -> Result<DomainSnapshot> {
    let rays = ray_angles(n_theta)?
        .into_iter()
        .map(|th| ray_boundary(th, t, tol, init, opts))
        .collect::<Result<Vec<_>>>()?;
    let ends = x_endpoints_with(t, tol, init, opts)?;
    Ok(assemble(t, tol, rays, ends))
}

fn cross(a: Complex64, b: Complex64) -> f64 {
    a.re * b.im - a.im * b.re
}

fn segments_cross(p1: Complex64, p2: Complex64, q1: Complex64, q2: Complex64) -> bool {
    let d1 = cross(p2 - p1, q1 - p1);
    let d2 = cross(p2 - p1, q2 - p1);
    let d3 = cross(q2 - q1, p1 - q1);
    let d4 = cross(q2 - q1, p2 - q1);
    d1 * d2 < 0.0 && d3 * d4 < 0.0
}

impl DomainSnapshot {
    pub fn points(&self) -> Vec<Complex64> {
        self.boundary.iter().map(BoundaryPoint::z).collect()
    }

    /// No two non-adjacent edges of the closed polyline cross.
    pub fn is_simple(&self) -> bool {
        let p = self.points();
        let n = p.len();
        if n < 4 {
            return true;
        }
        for i in 0..n {
            let (a1, a2) = (p[i], p[(i + 1) % n]);
            for j in i + 2..n {
                if i == 0 && j == n - 1 {
                    continue;
                }
                if segments_cross(a1, a2, p[j], p[(j + 1) % n]) {
                    return false;
                }
            }
        }
        true
    }

    /// Largest `|r(theta) - r(-theta)|` over mirrored pairs of rays.
    pub fn asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for a in &self.boundary {
            if a.theta <= 0.0 || a.theta >= PI {
                continue;
            }
            let m = self.boundary.iter().find(|b| b.theta == -a.theta);
            worst = match m {
                Some(b) => worst.max((a.r - b.r).abs()),
                None => f64::INFINITY,
            };
        }
        worst
    }

    /// Kind agrees with `r == 1` at every point.
    pub fn kinds_consistent(&self) -> bool {
        self.boundary
            .iter()
            .all(|b| (b.kind == BoundaryKind::Circle) == (b.r == 1.0))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundaryLimit {
    /// Extrapolated limit of `(1 - |phi_t(r e^{i theta})|^2) / (-ln r)` as `r -> 1`.
    pub value: f64,
    /// `2 Re[e^{i theta} v / phi]` at `r = 1 - 1e-6`.
    pub variational: f64,
    /// Some sample radius left `Omega_t`, so `theta` is not on the circle part.
    pub diverged: bool,
}

const LIMIT_EPS: f64 = 1e-3;
const LIMIT_LEVELS: usize = 6;

pub fn boundary_derivative_limit(theta: f64, t: f64, init: &InitialData) -> Result<BoundaryLimit> {
    boundary_derivative_limit_with(theta, t, init, &FlowOptions::with_tol(1e-12).endpoints_only())
}

pub fn boundary_derivative_limit_with(
    theta: f64,
    t: f64,
    init: &InitialData,
    opts: &FlowOptions,
) -> Result<BoundaryLimit> {
    let opts = FlowOptions { continue_past_exit: false, record: false, ..*opts };
    let dir = unit(theta);
    let mut table = [0.0f64; LIMIT_LEVELS];
    for (k, slot) in table.iter_mut().enumerate() {
        let r = 1.0 - LIMIT_EPS / (1u64 << k) as f64;
        let tr = integrate(dir * r, init, t, &opts)?;
        match tr.status {
            Status::Alive => {}
            Status::Exited => {
                return Ok(BoundaryLimit { value: f64::NAN, variational: f64::NAN, diverged: true });
            }
            Status::Failed(e) => return Err(e),
        }
        let m = tr.last().phi.norm();
        *slot = (1.0 - m * m) / -r.ln();
    }
    // Richardson in the step 1 - r, halved at each level
    for level in 1..LIMIT_LEVELS {
        let f = (1u64 << level) as f64;
        for k in (level..LIMIT_LEVELS).rev() {
            table[k] = (f * table[k] - table[k - 1]) / (f - 1.0);
        }
    }
    let value = table[LIMIT_LEVELS - 1];
    let r = 1.0 - 1e-6;
    let tr = integrate(dir * r, init, t, &opts)?;
    let variational = match tr.status {
        Status::Alive => {
            let s = tr.last();
            2.0 * (dir * s.v / s.phi).re
        }
        Status::Exited => {
            return Ok(BoundaryLimit { value, variational: f64::NAN, diverged: true });
        }
        Status::Failed(e) => return Err(e),
    };
    Ok(BoundaryLimit { value, variational, diverged: false })
}
