//! Inverse of the flow `eta_t = phi_t^{-1}`, evaluation of `H(t, .)` inside the disc,
//! and recovery of the densities and atoms of `nu_t` and `mu_t`.

use alloc::vec::Vec;
use core::f64::consts::{PI, TAU};

use num_complex::Complex64;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::flow::{integrate, FlowOptions, FlowState, Status};
use crate::measures::{grid_angle, unit, InitialData};
use crate::transforms::nu_to_mu_herglotz;

const ONE: Complex64 = Complex64::new(1.0, 0.0);
const ZERO: Complex64 = Complex64::new(0.0, 0.0);

pub const DEFAULT_SEED_GRID: usize = 64;
/// `epsilon * Re H` above this marks an atom candidate.
pub const ATOM_THRESHOLD: f64 = 0.05;
pub const NEWTON_STEPS: usize = 50;
/// Target for `|phi_t(eta) - omega|`.
pub const ETA_TOL: f64 = 1e-10;
/// Largest admissible `|omega|` is `1 - OMEGA_MARGIN`.
pub const OMEGA_MARGIN: f64 = 1e-8;
/// Interior offset of the `mu` grid from `0` and `1`.
pub const MU_DELTA: f64 = 1e-3;
/// Negative samples above `-CLIP_TOL` are roundoff.
pub const CLIP_TOL: f64 = 1e-9;
/// Atoms lighter than this are dropped.
pub const ATOM_FLOOR: f64 = 1e-6;
const LEVELS: usize = 6;
const ARMIJO: f64 = 0.3;
/// Newton corrections below this fraction of `|z|` are at machine resolution.
const RESOLUTION: f64 = 4.0 * f64::EPSILON;
const CONTOUR_NODES: usize = 128;
const CONTOUR_RADIUS: f64 = 0.75;
const HOMOTOPY: [usize; 2] = [16, 128];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProfileKind {
    Nu,
    Mu,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DensityProfile {
    pub kind: ProfileKind,
    pub t: f64,
    /// Angles in `(-pi, pi]` for `nu`, abscissae in `(0, 1)` for `mu`.
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    /// `(location, mass)`
    pub atoms: Vec<(f64, f64)>,
    pub epsilon: f64,
    pub threshold: f64,
    /// Quadrature of `values` plus atom masses, minus one.
    pub mass_defect: f64,
    /// `int e^{i theta} d nu_t` or `int x d mu_t`.
    pub first_moment: Complex64,
    /// Grid points where the inversion failed and the value was interpolated.
    pub failures: usize,
    /// Most negative sample before clipping.
    pub min_value: f64,
    /// Mass of the `mu` density found outside `[0, 1]`; zero for `nu`.
    pub leakage: f64,
}

/// Solver for `phi_t(z) = omega`, seeded from a forward grid computed once.
#[derive(Clone, Debug)]
pub struct Inverter {
    t: f64,
    init: InitialData,
    opts: FlowOptions,
    /// `(phi_t(z), z)` for seeds that stay in the disc up to `t`.
    nodes: Vec<(Complex64, Complex64)>,
}

#[derive(Clone, Copy, Debug)]
struct Solved {
    z0: Complex64,
    state: FlowState,
}

fn seed_radius(i: usize, n: usize) -> f64 {
    let s = 1.0 - (i as f64 + 1.0) / (n as f64 + 0.5);
    1.0 - s * s
}

impl Inverter {
    pub fn new(t: f64, init: &InitialData) -> Result<Self> {
        Self::with_grid(t, init, DEFAULT_SEED_GRID, DEFAULT_SEED_GRID, FlowOptions::with_tol(1e-12))
    }

    /// Forward grid of `n_r x n_theta` polar seeds, radii clustered toward the circle.
    pub fn with_grid(t: f64, init: &InitialData, n_r: usize, n_theta: usize, opts: FlowOptions) -> Result<Self> {
        if !(t >= 0.0 && t.is_finite()) {
            return Err(Error::InvalidParameter { name: "t", value: t });
        }
        let opts = FlowOptions { record: false, continue_past_exit: false, ..opts };
        let mut inv = Inverter { t, init: init.clone(), opts, nodes: Vec::new() };
        for j in 0..n_theta {
            let dir = unit(-PI + TAU * (j as f64 + 0.5) / n_theta as f64);
            for i in 0..n_r {
                let z = dir * seed_radius(i, n_r);
                if let Some(s) = inv.forward(z)? {
                    inv.nodes.push((s.phi, z));
                }
            }
        }
        Ok(inv)
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn init(&self) -> &InitialData {
        &self.init
    }

    pub fn seed_count(&self) -> usize {
        self.nodes.len()
    }

    fn forward(&self, z: Complex64) -> Result<Option<FlowState>> {
        if !(z.norm() < 1.0) {
            return Ok(None);
        }
        let tr = integrate(z, &self.init, self.t, &self.opts)?;
        Ok(match tr.status {
            Status::Alive => Some(*tr.last()),
            _ => None,
        })
    }

    fn newton(&self, omega: Complex64, start: Complex64, budget: &mut usize) -> core::result::Result<Solved, (Complex64, f64)> {
        let mut z = start;
        let mut s = match self.forward(z) {
            Ok(Some(s)) => s,
            _ => return Err((z, f64::INFINITY)),
        };
        let mut res = (s.phi - omega).norm();
        while res >= ETA_TOL {
            if *budget == 0 {
                return Err((z, res));
            }
            *budget -= 1;
            let dz = (s.phi - omega) / s.v;
            if dz.norm() <= RESOLUTION * z.norm() {
                // no representable point is closer
                break;
            }
            let mut lam = 1.0;
            loop {
                let zn = z - dz * lam;
                if let Ok(Some(sn)) = self.forward(zn) {
                    let rn = (sn.phi - omega).norm();
                    // sufficient decrease; a plain decrease lets Newton bounce across
                    // square-root branch points of phi_t at the boundary
                    if rn <= (1.0 - ARMIJO * lam) * res {
                        z = zn;
                        s = sn;
                        res = rn;
                        break;
                    }
                }
                lam *= 0.5;
                if lam < 1e-6 {
                    return Err((z, res));
                }
            }
        }
        Ok(Solved { z0: z, state: s })
    }

    fn nearest(&self, omega: Complex64, k: usize) -> Vec<(Complex64, Complex64)> {
        let mut best: Vec<(f64, usize)> = Vec::with_capacity(k + 1);
        for (i, (img, _)) in self.nodes.iter().enumerate() {
            let d = (img - omega).norm();
            if best.len() < k || d < best[best.len() - 1].0 {
                let pos = best.partition_point(|b| b.0 <= d);
                best.insert(pos, (d, i));
                best.truncate(k);
            }
        }
        best.into_iter().map(|(_, i)| self.nodes[i]).collect()
    }

    fn solve(&self, omega: Complex64) -> Result<Solved> {
        if !(omega.norm() <= 1.0 - OMEGA_MARGIN) {
            return Err(Error::OutsideDisc { z: omega });
        }
        let mut last = (ZERO, f64::INFINITY);
        if omega == ZERO {
            if let Some(state) = self.forward(ZERO)? {
                return Ok(Solved { z0: ZERO, state });
            }
        }
        let near = self.nearest(omega, 3);
        if near.is_empty() {
            return Err(Error::NonConvergence { last: ZERO, residual: f64::INFINITY });
        }
        for &(_, z) in &near {
            let mut budget = NEWTON_STEPS;
            match self.newton(omega, z, &mut budget) {
                Ok(s) => return Ok(s),
                Err(e) if e.1 < last.1 => last = e,
                Err(_) => {}
            }
        }
        // continuation along the segment from the nearest seed image
        let (img, z) = near[0];
        'outer: for &k in &HOMOTOPY {
            let mut cur = z;
            for i in 1..=k {
                let target = img + (omega - img) * (i as f64 / k as f64);
                let mut budget = NEWTON_STEPS;
                match self.newton(target, cur, &mut budget) {
                    Ok(s) => {
                        if i == k {
                            return Ok(s);
                        }
                        cur = s.z0;
                    }
                    Err(e) => {
                        if e.1 < last.1 {
                            last = e;
                        }
                        continue 'outer;
                    }
                }
            }
        }
        Err(Error::NonConvergence { last: last.0, residual: last.1 })
    }

    /// `eta_t(omega)`, the point with `phi_t(eta) = omega`.
    pub fn eta(&self, omega: Complex64) -> Result<Complex64> {
        Ok(self.solve(omega)?.z0)
    }

    /// `H(t, z)`, the `w` component at the end of the trajectory from `eta_t(z)`.
    pub fn h_eval(&self, z: Complex64) -> Result<Complex64> {
        Ok(self.solve(z)?.state.w)
    }

    /// Mass of `nu_t` at `e^{i theta0}`: extrapolated limit of
    /// `(1 - r)/(1 + r) Re H(t, r e^{i theta0})` over `r = 1 - 2^{-k} eps`.
    pub fn atom_mass(&self, theta0: f64, eps: f64) -> Result<f64> {
        let dir = unit(theta0);
        let mut f = [0.0; LEVELS];
        for (k, slot) in f.iter_mut().enumerate() {
            let h = eps / (1u64 << k) as f64;
            let r = 1.0 - h;
            *slot = h / (1.0 + r) * self.h_eval(dir * r)?.re;
        }
        Ok(clean_mass(richardson(f)))
    }

    /// Cauchy transform `G(zeta) = int 1/(zeta - x) d mu_t(x)` for `zeta` off `[0, 1]`.
    pub fn mu_cauchy(&self, zeta: Complex64) -> Result<Complex64> {
        let p = self.init.params();
        let hm = nu_to_mu_herglotz(|z| self.h_eval(z), p, ONE / zeta)?;
        Ok((ONE + hm) / (zeta * 2.0))
    }

    /// Mass of `mu_t` at `x0`: extrapolated limit of `Re[i h G(x0 + i h)]`.
    pub fn mu_atom_mass(&self, x0: f64, eps: f64) -> Result<f64> {
        let mut f = [0.0; LEVELS];
        for (k, slot) in f.iter_mut().enumerate() {
            let h = eps / (1u64 << k) as f64;
            let g = self.mu_cauchy(Complex64::new(x0, h))?;
            *slot = (Complex64::new(0.0, h) * g).re;
        }
        Ok(clean_mass(richardson(f)))
    }

    /// `(int d mu_t, int x d mu_t)` from the contour integrals of `G` and `zeta G`
    /// over the circle `|zeta - 1/2| = 3/4`.
    pub fn mu_contour_moments(&self) -> Result<(f64, f64)> {
        let (mut m0, mut m1) = (ZERO, ZERO);
        for k in 0..CONTOUR_NODES {
            let e = unit(TAU * (k as f64 + 0.5) / CONTOUR_NODES as f64);
            let zeta = Complex64::new(0.5, 0.0) + e * CONTOUR_RADIUS;
            let g = self.mu_cauchy(zeta)?;
            let dz = e * CONTOUR_RADIUS;
            m0 += g * dz;
            m1 += g * zeta * dz;
        }
        let n = CONTOUR_NODES as f64;
        Ok((m0.re / n, m1.re / n))
    }
}

// Richardson table for f(h) = L + c1 h^(1/2) + c2 h + ..., h halved per level.
fn richardson(mut f: [f64; LEVELS]) -> f64 {
    for level in 1..LEVELS {
        let q = 2f64.powf(0.5 * level as f64);
        for k in (level..LEVELS).rev() {
            f[k] = (q * f[k] - f[k - 1]) / (q - 1.0);
        }
    }
    f[LEVELS - 1]
}

fn clean_mass(m: f64) -> f64 {
    if m.abs() < 1e-12 {
        0.0
    } else {
        m
    }
}

/// `eta_t(omega)` with a fresh inverter.
pub fn eta(t: f64, omega: Complex64, init: &InitialData) -> Result<Complex64> {
    Inverter::new(t, init)?.eta(omega)
}

/// `H(t, z)` with a fresh inverter.
pub fn h_eval(t: f64, z: Complex64, init: &InitialData) -> Result<Complex64> {
    Inverter::new(t, init)?.h_eval(z)
}

/// Atom mass of `nu_t` at `theta0` with offset `1e-4`.
pub fn atom_mass(t: f64, theta0: f64, init: &InitialData) -> Result<f64> {
    Inverter::new(t, init)?.atom_mass(theta0, 1e-4)
}

fn fill_failures(values: &mut [f64], ok: &[bool], periodic: bool) {
    let n = values.len() as isize;
    let good: Vec<isize> = (0..n).filter(|&i| ok[i as usize]).collect();
    if good.is_empty() {
        return;
    }
    for i in (0..n).filter(|&i| !ok[i as usize]) {
        let next = good.iter().copied().find(|&g| g > i);
        let prev = good.iter().rev().copied().find(|&g| g < i);
        let (l, r) = match (prev, next, periodic) {
            (Some(l), Some(r), _) => (l, r),
            (Some(l), None, true) => (l, good[0] + n),
            (None, Some(r), true) => (good[good.len() - 1] - n, r),
            (Some(l), None, false) => (l, l),
            (None, Some(r), false) => (r, r),
            (None, None, _) => unreachable!(),
        };
        let vl = values[l.rem_euclid(n) as usize];
        let vr = values[r.rem_euclid(n) as usize];
        values[i as usize] = if r == l { vl } else { vl + (vr - vl) * (i - l) as f64 / (r - l) as f64 };
    }
}

fn peak_angle(inv: &Inverter, lo: f64, hi: f64, eps: f64) -> Result<f64> {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let f = |th: f64| -> Result<f64> { Ok(inv.h_eval(unit(th) * (1.0 - eps))?.re) };
    let (mut a, mut b) = (lo, hi);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c)?, f(d)?);
    while b - a > 1e-6 * eps {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d)?;
        }
    }
    Ok(0.5 * (a + b))
}

fn ang_dist(a: f64, b: f64) -> f64 {
    let d = ((a - b) % TAU).abs();
    d.min(TAU - d)
}

fn check_positive(values: &[f64]) -> Result<()> {
    for (index, &value) in values.iter().enumerate() {
        if value < -CLIP_TOL {
            return Err(Error::NegativeDensity { index, value });
        }
    }
    Ok(())
}

fn check_failures(failed: usize, total: usize) -> Result<()> {
    if failed * 20 > total {
        return Err(Error::InversionFailures { failed, total });
    }
    Ok(())
}

fn check_eps(eps: f64) -> Result<()> {
    if !(1e-6..=1e-2).contains(&eps) {
        return Err(Error::InvalidParameter { name: "epsilon", value: eps });
    }
    Ok(())
}

/// Angle grid of a `nu` profile.
pub fn nu_grid(n: usize) -> Vec<f64> {
    (0..n).map(|j| grid_angle(j, n)).collect()
}

/// `H(t, (1 - eps) e^{i theta})` at one grid angle.
pub fn nu_sample(inv: &Inverter, theta: f64, eps: f64) -> Result<Complex64> {
    inv.h_eval(unit(theta) * (1.0 - eps))
}

/// Assemble a `nu` profile from samples at [`nu_grid`] angles.
///
/// The smoothed density `Re H / 2 pi` is checked for positivity, atoms are located
/// where `eps Re H` peaks above the threshold and extracted with
/// [`Inverter::atom_mass`], their Poisson kernels are subtracted and the two nodes on
/// either side of each atom are interpolated over.
pub fn nu_profile(inv: &Inverter, eps: f64, samples: &[Result<Complex64>]) -> Result<DensityProfile> {
    check_eps(eps)?;
    let n = samples.len();
    let grid = nu_grid(n);
    let ok: Vec<bool> = samples.iter().map(|s| s.is_ok()).collect();
    let failures = ok.iter().filter(|&&b| !b).count();
    check_failures(failures, n)?;
    let mut raw: Vec<f64> = samples
        .iter()
        .map(|s| s.as_ref().map(|h| h.re / TAU).unwrap_or(0.0))
        .collect();
    fill_failures(&mut raw, &ok, true);
    check_positive(&raw)?;
    let r = 1.0 - eps;
    let dth = TAU / n as f64;
    let first_moment = grid
        .iter()
        .zip(&raw)
        .map(|(&th, &v)| unit(th) * (v * dth))
        .sum::<Complex64>()
        / r;

    let mut atoms = Vec::new();
    for j in 0..n {
        let (l, rr) = ((j + n - 1) % n, (j + 1) % n);
        let v = raw[j] * TAU;
        if eps * v > ATOM_THRESHOLD && raw[j] >= raw[l] && raw[j] > raw[rr] {
            let mut th = peak_angle(inv, grid[j] - dth, grid[j] + dth, eps)?;
            // the peak of a kernel of width eps is located only to ~1e-5 eps
            if (th - grid[j]).abs() < 1e-3 * eps {
                th = grid[j];
            }
            if th > PI {
                th -= TAU;
            } else if th <= -PI {
                th += TAU;
            }
            let m = inv.atom_mass(th, eps)?;
            if m > ATOM_FLOOR {
                atoms.push((th, m));
            }
        }
    }

    let mut values = raw.clone();
    let mut near = alloc::vec![false; n];
    for (j, th) in grid.iter().enumerate() {
        for &(a, m) in &atoms {
            let kernel = (1.0 - r * r) / (1.0 - 2.0 * r * (th - a).cos() + r * r);
            values[j] -= m * kernel / TAU;
            if ang_dist(*th, a) <= 2.0 * dth {
                near[j] = true;
            }
        }
    }
    let keep: Vec<bool> = near.iter().map(|&b| !b).collect();
    fill_failures(&mut values, &keep, true);
    let min_value = values.iter().copied().fold(f64::INFINITY, f64::min);
    for v in values.iter_mut() {
        *v = v.max(0.0);
    }
    let mass = values.iter().sum::<f64>() * dth + atoms.iter().map(|a| a.1).sum::<f64>();
    Ok(DensityProfile {
        kind: ProfileKind::Nu,
        t: inv.t(),
        grid,
        values,
        atoms,
        epsilon: eps,
        threshold: ATOM_THRESHOLD,
        mass_defect: mass - 1.0,
        first_moment,
        failures,
        min_value,
        leakage: 0.0,
    })
}

/// Density of `nu_t` on an `n`-point uniform angle grid at offset `eps`.
pub fn nu_density(t: f64, n: usize, eps: f64, init: &InitialData) -> Result<DensityProfile> {
    check_eps(eps)?;
    let inv = Inverter::new(t, init)?;
    let samples: Vec<_> = nu_grid(n).into_iter().map(|th| nu_sample(&inv, th, eps)).collect();
    nu_profile(&inv, eps, &samples)
}

/// Interior abscissae of a `mu` profile in `(MU_DELTA, 1 - MU_DELTA)`.
pub fn mu_grid(n: usize) -> Vec<f64> {
    (0..n)
        .map(|j| MU_DELTA + (1.0 - 2.0 * MU_DELTA) * (j as f64 + 0.5) / n as f64)
        .collect()
}

/// Abscissae outside `[0, 1]` where leakage is measured.
pub fn mu_exterior_grid(n: usize) -> Vec<f64> {
    let side = (n / 2).max(1);
    let step = 0.5 / side as f64;
    let mut out: Vec<f64> = (0..side).map(|j| -0.5 + step * (j as f64 + 0.5)).collect();
    out.extend((0..side).map(|j| 1.0 + step * (j as f64 + 0.5)));
    out
}

/// `G(x + i eps)` at one abscissa.
pub fn mu_sample(inv: &Inverter, x: f64, eps: f64) -> Result<Complex64> {
    inv.mu_cauchy(Complex64::new(x, eps))
}

fn mu_values(
    samples: &[Result<Complex64>],
    grid: &[f64],
    atoms: &[(f64, f64)],
    eps: f64,
) -> Result<(Vec<f64>, usize)> {
    let ok: Vec<bool> = samples.iter().map(|s| s.is_ok()).collect();
    let failures = ok.iter().filter(|&&b| !b).count();
    let raw: Vec<f64> = samples
        .iter()
        .map(|s| s.as_ref().map(|g| -g.im / PI).unwrap_or(0.0))
        .collect();
    check_positive(&raw)?;
    let mut values: Vec<f64> = raw
        .iter()
        .zip(grid)
        .map(|(v, &x)| {
            let cauchy: f64 = atoms
                .iter()
                .map(|&(x0, m)| m * eps / ((x - x0) * (x - x0) + eps * eps))
                .sum();
            v - cauchy / PI
        })
        .collect();
    fill_failures(&mut values, &ok, false);
    Ok((values, failures))
}

/// Assemble a `mu` profile from samples at [`mu_grid`] and [`mu_exterior_grid`].
///
/// Endpoint atoms come from [`Inverter::mu_atom_mass`], their Cauchy kernels are
/// subtracted, and the first moment is the contour integral of `zeta G`.
pub fn mu_profile(
    inv: &Inverter,
    eps: f64,
    samples: &[Result<Complex64>],
    exterior: &[Result<Complex64>],
) -> Result<DensityProfile> {
    check_eps(eps)?;
    let n = samples.len();
    let grid = mu_grid(n);
    let mut atoms = Vec::new();
    for x0 in [0.0, 1.0] {
        let m = inv.mu_atom_mass(x0, eps)?;
        if m > ATOM_FLOOR {
            atoms.push((x0, m));
        }
    }
    let (mut values, failures) = mu_values(samples, &grid, &atoms, eps)?;
    check_failures(failures, n)?;
    let min_value = values.iter().copied().fold(f64::INFINITY, f64::min);
    for v in values.iter_mut() {
        *v = v.max(0.0);
    }
    let dx = (1.0 - 2.0 * MU_DELTA) / n as f64;
    let mass = values.iter().sum::<f64>() * dx + atoms.iter().map(|a| a.1).sum::<f64>();
    let egrid = mu_exterior_grid(exterior.len());
    let (outside, _) = mu_values(exterior, &egrid, &atoms, eps)?;
    let de = if egrid.len() >= 2 { 1.0 / egrid.len() as f64 } else { 0.0 };
    let leakage = outside.iter().map(|v| v.max(0.0)).sum::<f64>() * de;
    let (_, m1) = inv.mu_contour_moments()?;
    Ok(DensityProfile {
        kind: ProfileKind::Mu,
        t: inv.t(),
        grid,
        values,
        atoms,
        epsilon: eps,
        threshold: ATOM_FLOOR,
        mass_defect: mass - 1.0,
        first_moment: Complex64::new(m1, 0.0),
        failures,
        min_value,
        leakage,
    })
}

/// Density of `mu_t` on `n` interior abscissae at offset `eps`, with endpoint atoms.
pub fn mu_density(t: f64, n: usize, eps: f64, init: &InitialData) -> Result<DensityProfile> {
    check_eps(eps)?;
    let inv = Inverter::new(t, init)?;
    let samples: Vec<_> = mu_grid(n).into_iter().map(|x| mu_sample(&inv, x, eps)).collect();
    let exterior: Vec<_> = mu_exterior_grid(n / 4).into_iter().map(|x| mu_sample(&inv, x, eps)).collect();
    mu_profile(&inv, eps, &samples, &exterior)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::{Atom, CircleMeasure};
    use crate::transforms::{h_infinity, k_eval_along, phi_weight};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn two_atom() -> InitialData {
        let m = CircleMeasure::new(
            alloc::vec![Atom { theta: 0.0, mass: 0.6 }, Atom { theta: PI, mass: 0.4 }],
            Vec::new(),
        );
        InitialData::custom(m, 0.2, 0.6).unwrap()
    }

    fn interior(n: usize, rmax: f64) -> Vec<Complex64> {
        (0..n)
            .map(|k| {
                let r = rmax * ((k as f64 + 0.5) / n as f64).sqrt();
                unit(2.399963 * k as f64 - PI) * r
            })
            .collect()
    }

    #[test]
    fn trivial_points() {
        let init = InitialData::free(0.2, 0.6).unwrap();
        let inv = Inverter::new(0.7, &init).unwrap();
        assert_eq!(inv.eta(ZERO).unwrap(), ZERO);
        assert!((inv.h_eval(ZERO).unwrap() - ONE).norm() < 1e-12);
        let id = Inverter::new(0.0, &init).unwrap();
        let w = c(0.3, -0.55);
        assert!((id.eta(w).unwrap() - w).norm() < 1e-12);
        assert!(inv.eta(c(1.0, 0.0)).is_err());
    }

    #[test]
    fn round_trips() {
        let opts = FlowOptions::with_tol(1e-12).endpoints_only();
        for init in [InitialData::equal(0.4).unwrap(), two_atom()] {
            for t in [0.5, 1.0] {
                let inv = Inverter::new(t, &init).unwrap();
                let mut images = Vec::new();
                for z in interior(40, 0.95) {
                    let tr = integrate(z, &init, t, &opts).unwrap();
                    if !tr.survived() {
                        continue;
                    }
                    let w = tr.last().phi;
                    let back = inv.eta(w).unwrap();
                    assert!((back - z).norm() < 1e-8, "{z} {back}");
                    images.push(back);
                }
                assert!(images.len() > 10);
                for i in 0..images.len() {
                    for j in 0..i {
                        assert!((images[i] - images[j]).norm() > 1e-10);
                    }
                }
                // phi_t(eta(omega)) = omega
                for w in interior(20, 0.99) {
                    let z = inv.eta(w).unwrap();
                    let tr = integrate(z, &init, t, &opts).unwrap();
                    assert!((tr.last().phi - w).norm() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn free_preset_is_stationary() {
        let init = InitialData::free(0.2, 0.6).unwrap();
        let inv = Inverter::new(0.8, &init).unwrap();
        for z in interior(30, 0.97) {
            let h = inv.h_eval(z).unwrap();
            let want = h_infinity(z, init.params()).unwrap();
            assert!((h - want).norm() < 1e-7 * want.norm().max(1.0), "{z}");
            assert!(h.re > 0.0);
        }
    }

    #[test]
    fn haar_is_constant() {
        let init = InitialData::haar().unwrap();
        let inv = Inverter::new(0.6, &init).unwrap();
        for z in interior(20, 0.99) {
            assert!((inv.h_eval(z).unwrap() - ONE).norm() < 1e-10);
        }
    }

    #[test]
    fn k_subordination_holds() {
        let init = two_atom();
        let p = init.params();
        let t = 0.5;
        let inv = Inverter::new(t, &init).unwrap();
        for z in interior(30, 0.9) {
            let h = inv.h_eval(z).unwrap();
            let e = inv.eta(z).unwrap();
            let h0 = init.herglotz0(e).unwrap();
            let lhs = h * h - phi_weight(z, p).unwrap().powi(2);
            let rhs = h0 * h0 - phi_weight(e, p).unwrap().powi(2);
            assert!((lhs - rhs).norm() < 1e-7 * lhs.norm().max(1.0), "{z}");
        }
        // the stationary K is the constant sqrt(1 - (a+b)^2) along a path from 0
        let f = InitialData::free(0.2, 0.6).unwrap();
        let fi = Inverter::new(t, &f).unwrap();
        let k = k_eval_along(|z| fi.h_eval(z), c(0.5, 0.4), f.params(), 16).unwrap();
        let ab = f.params().a() + f.params().b();
        assert!((k - c((1.0 - ab * ab).sqrt(), 0.0)).norm() < 1e-7);
    }

    #[test]
    fn atoms_of_delta_one_and_haar() {
        let d = InitialData::equal(0.3).unwrap();
        let inv = Inverter::new(0.0, &d).unwrap();
        assert!((inv.atom_mass(0.0, 1e-4).unwrap() - 1.0).abs() < 1e-3);
        assert!(inv.atom_mass(PI, 1e-4).unwrap().abs() < 1e-3);
        let inv = Inverter::new(0.05, &d).unwrap();
        assert!(inv.atom_mass(PI, 1e-4).unwrap().abs() < 1e-3);
        let h = InitialData::haar().unwrap();
        let inv = Inverter::new(0.4, &h).unwrap();
        for th in [0.0, 1.0, PI, -2.5] {
            assert!(inv.atom_mass(th, 1e-4).unwrap().abs() < 1e-6);
        }
    }

    // For t > 0 the kernel projections P ^ UQU* and its relatives have traces
    // max(0, p+q-1) + max(0, 1-p-q) = b at +1 and |p-q| = a at -1.
    #[test]
    fn atoms_at_positive_time_are_a_and_b() {
        for init in [InitialData::equal(0.4).unwrap(), two_atom()] {
            let p = init.params();
            let inv = Inverter::new(0.5, &init).unwrap();
            let plus = inv.atom_mass(0.0, 1e-4).unwrap();
            let minus = inv.atom_mass(PI, 1e-4).unwrap();
            assert!((plus - p.b()).abs() < 1e-3, "{plus} {}", p.b());
            assert!((minus - p.a()).abs() < 1e-3, "{minus} {}", p.a());
        }
    }

    #[test]
    fn haar_density_is_flat() {
        let init = InitialData::haar().unwrap();
        let prof = nu_density(0.7, 256, 1e-3, &init).unwrap();
        for v in &prof.values {
            assert!((v - 1.0 / TAU).abs() < 1e-6);
        }
        assert!(prof.atoms.is_empty());
        assert!(prof.mass_defect.abs() < 1e-9);
    }

    #[test]
    fn delta_one_at_time_zero() {
        let init = InitialData::equal(0.0).unwrap();
        let prof = nu_density(0.0, 256, 1e-4, &init).unwrap();
        assert_eq!(prof.atoms.len(), 1);
        assert_eq!(prof.atoms[0].0, 0.0);
        assert!((prof.atoms[0].1 - 1.0).abs() < 1e-3);
        assert!(prof.values.iter().all(|v| v.abs() < 1e-3));
    }

    #[test]
    fn moment_decays_like_exp_minus_t() {
        for init in [InitialData::equal(0.4).unwrap(), two_atom()] {
            let p = init.params();
            let ab = p.alpha() * p.beta();
            let m0 = init.first_moment0().unwrap();
            for t in [0.3, 1.0] {
                let prof = nu_density(t, 1024, 1e-2, &init).unwrap();
                let want = ab + (m0 - ab) * (-t).exp();
                assert!((prof.first_moment.re - want).abs() < 1e-4, "{t} {} {want}", prof.first_moment);
                assert!(prof.first_moment.im.abs() < 1e-9);
            }
        }
    }

    #[test]
    fn density_profile_invariants() {
        let init = two_atom();
        let prof = nu_density(0.5, 512, 1e-3, &init).unwrap();
        assert!(prof.mass_defect.abs() < 2e-3, "{}", prof.mass_defect);
        assert!(prof.values.iter().all(|&v| v >= 0.0));
        assert_eq!(prof.failures, 0);
        // conjugation symmetry: node j mirrors to (2n - j - 2) mod n
        let n = prof.values.len();
        for j in 0..n {
            let m = (2 * n - j - 2) % n;
            assert!((prof.values[j] - prof.values[m]).abs() < 1e-6, "{j} {m} {} {} {} {:?}", prof.values[j], prof.values[m], prof.grid[j], prof.atoms);
        }
        let p = init.params();
        let mut seen: Vec<(f64, f64)> = prof.atoms.clone();
        seen.sort_by(|a, b| a.0.total_cmp(&b.0));
        assert_eq!(seen.len(), 2);
        assert!((seen[0].1 - p.b()).abs() < 1e-3 && seen[0].0 == 0.0);
        assert!((seen[1].1 - p.a()).abs() < 1e-3 && seen[1].0 == PI);
    }

    #[test]
    fn epsilon_range_is_checked() {
        let init = InitialData::haar().unwrap();
        assert!(nu_density(0.2, 16, 0.5, &init).is_err());
        assert!(nu_density(0.2, 16, 1e-7, &init).is_err());
    }

    #[test]
    fn mu_at_time_zero_for_equal_preset() {
        // P = Q: mu_0 = (1 - p) delta_0 + p delta_1 with p = (1 + alpha)/2
        let init = InitialData::equal(0.4).unwrap();
        let prof = mu_density(0.0, 200, 1e-3, &init).unwrap();
        let p = 0.7;
        assert!(prof.values.iter().all(|v| v.abs() < 2e-3));
        let mut atoms = prof.atoms.clone();
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        assert!((atoms[0].1 - (1.0 - p)).abs() < 1e-3 && atoms[0].0 == 0.0);
        assert!((atoms[1].1 - p).abs() < 1e-3 && atoms[1].0 == 1.0);
    }

    #[test]
    fn mu_moment_links_to_nu_moment() {
        for init in [InitialData::equal(0.4).unwrap(), InitialData::free(0.2, 0.6).unwrap(), two_atom()] {
            let p = init.params();
            let t = 0.5;
            let inv = Inverter::new(t, &init).unwrap();
            let (m0, m1) = inv.mu_contour_moments().unwrap();
            assert!((m0 - 1.0).abs() < 1e-8, "{m0}");
            let nu = nu_density(t, 1024, 1e-2, &init).unwrap();
            let want = (1.0 + p.alpha() + p.beta() + nu.first_moment.re) / 4.0;
            assert!((m1 - want).abs() < 1e-4, "{m1} {want}");
        }
    }

    #[test]
    fn mu_free_preset_mass_and_support() {
        let init = InitialData::free(0.2, 0.6).unwrap();
        let prof = mu_density(0.5, 400, 1e-3, &init).unwrap();
        assert!(prof.mass_defect.abs() < 2e-3, "{}", prof.mass_defect);
        assert!(prof.leakage < 2e-3, "{}", prof.leakage);
        assert!(prof.min_value > -CLIP_TOL);
    }
}
