//! Rayon maps over rays, grid nodes and seed points. Each node calls the same per-node core
//! function as the sequential drivers, so results do not depend on the worker count.

use liberation_core::domain::{assemble, default_flow, ray_angles, ray_boundary, x_endpoints_with, DomainSnapshot};
use liberation_core::flow::{integrate, FlowOptions, Trajectory};
use liberation_core::inversion::{
    mu_exterior_grid, mu_grid, mu_profile, mu_sample, nu_grid, nu_profile, nu_sample, DensityProfile, Inverter,
};
use liberation_core::measures::InitialData;
use liberation_core::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Ray failures tolerated by [`trace_boundary`], as a fraction of the rays.
pub const MAX_RAY_FAILURES: f64 = 0.01;

/// Runs `f` on a pool of `workers` threads (`None`: one per hardware thread).
pub fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers {
        if w == 0 {
            return Err(Error::Usage("--workers must be positive".into()));
        }
        b = b.num_threads(w);
    }
    let pool = b.build().map_err(|e| Error::Usage(e.to_string()))?;
    Ok(pool.install(f))
}

pub fn integrate_many(
    seeds: &[Complex64],
    init: &InitialData,
    horizon: f64,
    opts: &FlowOptions,
) -> Vec<liberation_core::Result<Trajectory>> {
    seeds.par_iter().map(|&z| integrate(z, init, horizon, opts)).collect()
}

#[derive(Clone, Debug)]
pub struct TracedBoundary {
    pub snapshot: DomainSnapshot,
    /// Angles whose ray bisection failed; these rays are left out of the snapshot.
    pub failed: Vec<f64>,
}

/// Boundary of `Omega_t` on `n_theta` rays. Fails if more than 1% of the rays fail.
pub fn trace_boundary(t: f64, n_theta: usize, tol: f64, init: &InitialData) -> Result<TracedBoundary> {
    let opts = default_flow();
    let angles = ray_angles(n_theta)?;
    let rays: Vec<_> = angles.par_iter().map(|&th| (th, ray_boundary(th, t, tol, init, &opts))).collect();
    let mut points = Vec::with_capacity(rays.len());
    let mut failed = Vec::new();
    for (th, r) in rays {
        match r {
            Ok(p) => points.push(p),
            Err(_) => failed.push(th),
        }
    }
    if failed.len() as f64 > MAX_RAY_FAILURES * angles.len() as f64 {
        return Err(Error::Numerical(format!("{} of {} rays failed at t = {t}", failed.len(), angles.len())));
    }
    let ends = x_endpoints_with(t, tol, init, &opts)?;
    Ok(TracedBoundary { snapshot: assemble(t, tol, points, ends), failed })
}

pub fn nu_density(t: f64, n: usize, eps: f64, init: &InitialData) -> Result<DensityProfile> {
    let inv = Inverter::new(t, init)?;
    let samples: Vec<_> = nu_grid(n).par_iter().map(|&th| nu_sample(&inv, th, eps)).collect();
    Ok(nu_profile(&inv, eps, &samples)?)
}

pub fn mu_density(t: f64, n: usize, eps: f64, init: &InitialData) -> Result<DensityProfile> {
    let inv = Inverter::new(t, init)?;
    let samples: Vec<_> = mu_grid(n).par_iter().map(|&x| mu_sample(&inv, x, eps)).collect();
    let exterior: Vec<_> = mu_exterior_grid(n / 4).par_iter().map(|&x| mu_sample(&inv, x, eps)).collect();
    Ok(mu_profile(&inv, eps, &samples, &exterior)?)
}
