//! Verification suites. Measurement functions return raw numbers; [`run_suite`] applies the
//! pass thresholds.

use std::f64::consts::{PI, TAU};
use std::str::FromStr;

use liberation_core::closedform::phi_real;
use liberation_core::domain::{boundary_derivative_limit, BoundaryKind, DomainSnapshot};
use liberation_core::flow::{
    integrate, residual_char_eq, residual_k_subordination, stationarity_residual, FlowOptions, Status,
};
use liberation_core::inversion::{atom_mass, Inverter};
use liberation_core::measures::InitialData;
use liberation_core::transforms::{h_infinity_sq, k_infinity_constant, phi_weight, TraceParams};
use liberation_core::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::PresetConfig;
use crate::error::{Error, Result};
use crate::parallel;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    Subordination,
    Closedform,
    Moments,
    Stationary,
    Domain,
    Inversion,
}

impl Suite {
    pub const ALL: [Suite; 6] =
        [Suite::Subordination, Suite::Closedform, Suite::Moments, Suite::Stationary, Suite::Domain, Suite::Inversion];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Subordination => "subordination",
            Suite::Closedform => "closedform",
            Suite::Moments => "moments",
            Suite::Stationary => "stationary",
            Suite::Domain => "domain",
            Suite::Inversion => "inversion",
        }
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::Usage(format!("unknown suite '{s}'")))
    }
}

/// `equal(0.4)`, `free(0.2, 0.6)` and the two-atom custom preset.
pub fn sweep_presets() -> Vec<(String, InitialData)> {
    let two = PresetConfig::two_atom();
    vec![
        ("equal(0.4)".into(), InitialData::equal(0.4).expect("valid preset")),
        ("free(0.2,0.6)".into(), InitialData::free(0.2, 0.6).expect("valid preset")),
        ("custom two-atom".into(), two.initial().expect("valid preset")),
    ]
}

/// Points `sqrt(u) r_max e^{i 2 pi v}` from a fixed-seed generator.
pub fn disc_seeds(n: usize, r_max: f64, seed: u64) -> Vec<Complex64> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let r = r_max * rng.random::<f64>().sqrt();
            Complex64::from_polar(r, TAU * rng.random::<f64>())
        })
        .collect()
}

/// `max |v_t(0) - e^t|` over `t in {0.5, 1, 2}` and the sweep presets.
pub fn derivative_normalization() -> Result<f64> {
    let opts = FlowOptions::with_tol(1e-10).endpoints_only();
    let mut worst: f64 = 0.0;
    for (_, init) in sweep_presets() {
        for t in [0.5, 1.0, 2.0] {
            let tr = integrate(Complex64::new(0.0, 0.0), &init, t, &opts)?;
            worst = worst.max((tr.last().v - Complex64::new(t.exp(), 0.0)).norm());
        }
    }
    Ok(worst)
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct SweepStats {
    pub char_eq: f64,
    pub k_subordination: f64,
    pub trajectories: usize,
    pub exited: usize,
    pub failures: usize,
}

/// Characteristic-equation and K-subordination residuals along recorded trajectories.
pub fn flow_sweep(seeds: usize, horizon: f64, tol: f64) -> Result<SweepStats> {
    let opts = FlowOptions::with_tol(tol);
    let pts = disc_seeds(seeds, 0.95, 1);
    let mut s = SweepStats::default();
    for (_, init) in sweep_presets() {
        for r in parallel::integrate_many(&pts, &init, horizon, &opts) {
            s.trajectories += 1;
            let tr = match r {
                Ok(tr) => tr,
                Err(_) => {
                    s.failures += 1;
                    continue;
                }
            };
            match tr.status {
                Status::Failed(_) => {
                    s.failures += 1;
                    continue;
                }
                Status::Exited => s.exited += 1,
                Status::Alive => {}
            }
            s.char_eq = s.char_eq.max(residual_char_eq(&tr, &init)?);
            s.k_subordination = s.k_subordination.max(residual_k_subordination(&tr, &init)?);
        }
    }
    Ok(s)
}

/// `sup |H_inf^2 - Phi^2 - (1 - (a + b)^2)|` on 20 radii up to 0.9 times 25 angles, for `pairs`
/// random trace pairs.
pub fn constant_identity(pairs: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..pairs {
        let p = TraceParams::new(rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0))?;
        let k = k_infinity_constant(p);
        for i in 0..20 {
            for j in 0..25 {
                let z = Complex64::from_polar(0.9 * (i + 1) as f64 / 20.0, TAU * (j as f64 + 0.5) / 25.0);
                let ph = phi_weight(z, p)?;
                worst = worst.max((h_infinity_sq(z, p) - ph * ph - k).norm());
            }
        }
    }
    Ok(worst)
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct ClosedFormStats {
    pub max_relative_error: f64,
    pub compared: usize,
    /// Seeds where exactly one of the two routes reports an exit.
    pub mismatched: usize,
    pub exited: usize,
}

/// Closed form against the ODE on 50 real seeds in `[-0.95, 0.95]`, `t in {0.25, 1}`.
pub fn closed_form_vs_ode() -> Result<ClosedFormStats> {
    let opts = FlowOptions::with_tol(1e-12).endpoints_only();
    let mut s = ClosedFormStats::default();
    for (_, init) in sweep_presets() {
        for t in [0.25, 1.0] {
            for i in 0..50 {
                let x = -0.95 + 1.9 * (i as f64 + 0.5) / 50.0;
                let tr = integrate(Complex64::new(x, 0.0), &init, t, &opts)?;
                let cf = phi_real(t, x, &init);
                match (&tr.status, cf) {
                    (Status::Alive, Ok(c)) => {
                        let ode = tr.last().phi;
                        s.compared += 1;
                        s.max_relative_error = s.max_relative_error.max((c - ode).norm() / ode.norm().max(1e-300));
                    }
                    (Status::Exited, Err(_)) => s.exited += 1,
                    _ => s.mismatched += 1,
                }
            }
        }
    }
    Ok(s)
}

/// `sup_{t <= 2} |w_t - H_inf(phi_t)|` for the free preset, and the failure count.
pub fn free_stationarity() -> Result<(f64, usize)> {
    let init = InitialData::free(0.2, 0.6)?;
    let pts = disc_seeds(100, 0.95, 2);
    let mut worst: f64 = 0.0;
    let mut failures = 0;
    for r in parallel::integrate_many(&pts, &init, 2.0, &FlowOptions::with_tol(1e-10)) {
        match r {
            Ok(tr) if !matches!(tr.status, Status::Failed(_)) => {
                worst = worst.max(stationarity_residual(&tr, init.params())?);
            }
            _ => failures += 1,
        }
    }
    Ok((worst, failures))
}

/// `max |rho - 1/(2 pi)|` of the recovered density for the Haar preset at `t = 0.5`.
pub fn haar_flatness() -> Result<f64> {
    let p = parallel::nu_density(0.5, 512, 1e-3, &InitialData::haar()?)?;
    Ok(p.values.iter().map(|v| (v - 1.0 / TAU).abs()).fold(0.0, f64::max) + p.atoms.iter().map(|a| a.1).sum::<f64>())
}

#[derive(Clone, Debug, Serialize)]
pub struct MomentRow {
    pub preset: String,
    pub t: f64,
    pub m1: f64,
    /// `alpha beta + (m1(0) - alpha beta) e^{-t}`
    pub predicted: f64,
    /// The same law with `e^{-2t}`.
    pub predicted_2t: f64,
    /// `int x d mu_t` from the contour integral.
    pub mu_m1: f64,
    /// `(1 + alpha + beta + m1) / 4`
    pub mu_predicted: f64,
}

/// First moments of `nu_t` and `mu_t` at `t in {0.3, 1}` for the sweep presets.
pub fn moments() -> Result<Vec<MomentRow>> {
    let mut rows = Vec::new();
    for (name, init) in sweep_presets() {
        let p = init.params();
        let ab = p.alpha() * p.beta();
        let m0 = init.first_moment0()?;
        for t in [0.3, 1.0] {
            let nu = parallel::nu_density(t, 2048, 1e-2, &init)?;
            let (_, mu_m1) = Inverter::new(t, &init)?.mu_contour_moments()?;
            let m1 = nu.first_moment.re;
            rows.push(MomentRow {
                preset: name.clone(),
                t,
                m1,
                predicted: ab + (m0 - ab) * (-t).exp(),
                predicted_2t: ab + (m0 - ab) * (-2.0 * t).exp(),
                mu_m1,
                mu_predicted: (1.0 + p.alpha() + p.beta() + m1) / 4.0,
            });
        }
    }
    Ok(rows)
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct RoundTripStats {
    pub max_error: f64,
    pub count: usize,
    pub failures: usize,
}

/// `|eta_t(phi_t(z)) - z|` on 100 seeds inside `Omega_t`, `t in {0.5, 1}`, sweep presets.
pub fn round_trip() -> Result<RoundTripStats> {
    let opts = FlowOptions::with_tol(1e-12).endpoints_only();
    let mut s = RoundTripStats::default();
    for (_, init) in sweep_presets() {
        for t in [0.5, 1.0] {
            let inv = Inverter::new(t, &init)?;
            let mut pts = Vec::new();
            for z in disc_seeds(1000, 0.98, 3) {
                if pts.len() == 100 {
                    break;
                }
                let tr = integrate(z, &init, t, &opts)?;
                if tr.survived() {
                    pts.push((z, tr.last().phi));
                }
            }
            let errs: Vec<_> = pts.par_iter().map(|&(z, w)| inv.eta(w).map(|e| (e - z).norm())).collect();
            for e in errs {
                s.count += 1;
                match e {
                    Ok(e) => s.max_error = s.max_error.max(e),
                    Err(_) => s.failures += 1,
                }
            }
        }
    }
    Ok(s)
}

#[derive(Clone, Debug, Serialize)]
pub struct AtomStats {
    /// Mass found at `theta = 0` for `nu_0 = delta_1`.
    pub delta_mass: f64,
    /// Largest mass extracted at 64 angles for the Haar preset at `t = 0.5`.
    pub haar_max_mass: f64,
    pub haar_profile_atoms: usize,
}

pub fn atom_recovery() -> Result<AtomStats> {
    let delta_mass = atom_mass(0.0, 0.0, &InitialData::equal(0.0)?)?;
    let haar = InitialData::haar()?;
    let inv = Inverter::new(0.5, &haar)?;
    let masses: Vec<f64> = (0..64)
        .into_par_iter()
        .map(|j| inv.atom_mass(-PI + TAU * (j + 1) as f64 / 64.0, 1e-4))
        .collect::<liberation_core::Result<_>>()?;
    let prof = parallel::nu_density(0.5, 512, 1e-3, &haar)?;
    Ok(AtomStats {
        delta_mass,
        haar_max_mass: masses.iter().map(|m| m.abs()).fold(0.0, f64::max),
        haar_profile_atoms: prof.atoms.len(),
    })
}

pub const DOMAIN_TIMES: [f64; 3] = [0.2, 0.5, 1.0];
pub const DOMAIN_RAYS: usize = 64;
pub const DOMAIN_TOL: f64 = 1e-6;

#[derive(Clone, Debug, Default, Serialize)]
pub struct DomainStats {
    /// `max (r_{later}(theta) - r_{earlier}(theta))`, nonpositive for nested domains.
    pub nesting_excess: f64,
    pub asymmetry: f64,
    /// Smallest distance from the boundary to `+-1` over presets with `a, b != 0`.
    pub min_distance_to_pm1: f64,
    pub failed_rays: usize,
    pub simple: bool,
}

pub fn domain_snapshots(init: &InitialData) -> Result<Vec<DomainSnapshot>> {
    DOMAIN_TIMES
        .iter()
        .map(|&t| {
            let tb = parallel::trace_boundary(t, DOMAIN_RAYS, DOMAIN_TOL, init)?;
            if !tb.failed.is_empty() {
                return Err(Error::Numerical(format!("{} rays failed at t = {t}", tb.failed.len())));
            }
            Ok(tb.snapshot)
        })
        .collect()
}

fn distance_to_pm1(s: &DomainSnapshot) -> f64 {
    s.points()
        .iter()
        .chain([Complex64::new(s.x_minus, 0.0), Complex64::new(s.x_plus, 0.0)].iter())
        .map(|z| (z - 1.0).norm().min((z + 1.0).norm()))
        .fold(f64::INFINITY, f64::min)
}

pub fn domain_geometry(snapshots: &[(String, InitialData, Vec<DomainSnapshot>)]) -> DomainStats {
    let mut s = DomainStats { nesting_excess: f64::NEG_INFINITY, min_distance_to_pm1: f64::INFINITY, simple: true, ..Default::default() };
    for (_, init, snaps) in snapshots {
        let p = init.params();
        for w in snaps.windows(2) {
            for (a, b) in w[0].boundary.iter().zip(&w[1].boundary) {
                s.nesting_excess = s.nesting_excess.max(b.r - a.r);
            }
        }
        for snap in snaps {
            s.asymmetry = s.asymmetry.max(snap.asymmetry());
            s.simple &= snap.is_simple();
            if p.a() > 0.0 && p.b() > 0.0 {
                s.min_distance_to_pm1 = s.min_distance_to_pm1.min(distance_to_pm1(snap));
            }
        }
    }
    s
}

#[derive(Clone, Debug, Serialize)]
pub struct LimitStats {
    pub min_value: f64,
    pub max_value: f64,
    pub max_route_gap: f64,
    pub count: usize,
    pub diverged: usize,
}

/// Boundary-derivative limits at up to 6 circle points per snapshot.
pub fn boundary_limits(snapshots: &[(String, InitialData, Vec<DomainSnapshot>)]) -> Result<LimitStats> {
    let mut jobs = Vec::new();
    for (_, init, snaps) in snapshots {
        for snap in snaps {
            let circle: Vec<f64> =
                snap.boundary.iter().filter(|b| b.kind == BoundaryKind::Circle).map(|b| b.theta).collect();
            let stride = circle.len().div_ceil(6).max(1);
            jobs.extend(circle.iter().step_by(stride).map(|&th| (init.clone(), snap.t, th)));
        }
    }
    let res: Vec<_> = jobs
        .par_iter()
        .map(|(init, t, th)| boundary_derivative_limit(*th, *t, init))
        .collect::<liberation_core::Result<_>>()?;
    let mut s =
        LimitStats { min_value: f64::INFINITY, max_value: f64::NEG_INFINITY, max_route_gap: 0.0, count: 0, diverged: 0 };
    for l in res {
        if l.diverged {
            s.diverged += 1;
            continue;
        }
        s.count += 1;
        s.min_value = s.min_value.min(l.value);
        s.max_value = s.max_value.max(l.value);
        s.max_route_gap = s.max_route_gap.max((l.value - l.variational).abs());
    }
    Ok(s)
}

pub fn all_snapshots() -> Result<Vec<(String, InitialData, Vec<DomainSnapshot>)>> {
    sweep_presets()
        .into_iter()
        .map(|(n, init)| {
            let s = domain_snapshots(&init)?;
            Ok((n, init, s))
        })
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    pub threshold: f64,
    pub passed: bool,
    pub detail: serde_json::Value,
}

impl Check {
    fn below(name: &str, measured: f64, threshold: f64, detail: serde_json::Value) -> Check {
        Check { name: name.into(), measured, threshold, passed: measured < threshold, detail }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub passed: bool,
    pub checks: Vec<Check>,
}

pub fn run_suite(suite: Suite) -> Result<SuiteReport> {
    use serde_json::json;
    let mut checks = Vec::new();
    match suite {
        Suite::Subordination => {
            checks.push(Check::below("v_t(0) = e^t", derivative_normalization()?, 1e-8, json!({})));
            let s = flow_sweep(200, 1.5, 1e-10)?;
            let d = serde_json::to_value(&s)?;
            let fail = if s.failures > 0 { f64::INFINITY } else { 0.0 };
            checks.push(Check::below("characteristic equation residual", s.char_eq + fail, 1e-7, d.clone()));
            checks.push(Check::below("K-subordination residual", s.k_subordination + fail, 1e-7, d));
            checks.push(Check::below("H_inf^2 - Phi^2 constant", constant_identity(10, 4)?, 1e-10, json!({})));
        }
        Suite::Closedform => {
            let s = closed_form_vs_ode()?;
            let m = if s.mismatched > 0 { f64::INFINITY } else { s.max_relative_error };
            checks.push(Check::below("closed form vs ODE (relative)", m, 1e-6, serde_json::to_value(&s)?));
        }
        Suite::Stationary => {
            let (w, f) = free_stationarity()?;
            checks.push(Check::below(
                "free preset |w - H_inf(phi)|",
                if f > 0 { f64::INFINITY } else { w },
                1e-6,
                json!({ "failures": f }),
            ));
            checks.push(Check::below("Haar density - 1/(2 pi)", haar_flatness()?, 1e-6, json!({})));
        }
        Suite::Moments => {
            let rows = moments()?;
            let nu = rows.iter().map(|r| (r.m1 - r.predicted).abs()).fold(0.0, f64::max);
            let mu = rows.iter().map(|r| (r.mu_m1 - r.mu_predicted).abs()).fold(0.0, f64::max);
            let d = serde_json::to_value(&rows)?;
            checks.push(Check::below("m1(t) vs alpha beta + (m1(0) - alpha beta) e^{-t}", nu, 1e-4, d.clone()));
            checks.push(Check::below("mu-nu first-moment link", mu, 1e-4, d));
        }
        Suite::Inversion => {
            let r = round_trip()?;
            let m = if r.failures > 0 { f64::INFINITY } else { r.max_error };
            checks.push(Check::below("|eta_t(phi_t(z)) - z|", m, 1e-8, serde_json::to_value(&r)?));
            let a = atom_recovery()?;
            let d = serde_json::to_value(&a)?;
            checks.push(Check::below("delta_1 atom mass at t = 0", (a.delta_mass - 1.0).abs(), 1e-3, d.clone()));
            let extra = if a.haar_profile_atoms > 0 { f64::INFINITY } else { 0.0 };
            checks.push(Check::below("Haar atoms", a.haar_max_mass + extra, 1e-6, d));
        }
        Suite::Domain => {
            let snaps = all_snapshots()?;
            let g = domain_geometry(&snaps);
            let d = serde_json::to_value(&g)?;
            checks.push(Check::below("nesting excess", g.nesting_excess, DOMAIN_TOL, d.clone()));
            checks.push(Check::below("reflection asymmetry", g.asymmetry, 1e-9, d.clone()));
            checks.push(Check {
                name: "distance to +-1 (a, b != 0)".into(),
                measured: g.min_distance_to_pm1,
                threshold: 1e-3,
                passed: g.min_distance_to_pm1 > 1e-3,
                detail: d,
            });
            let l = boundary_limits(&snaps)?;
            let d = serde_json::to_value(&l)?;
            checks.push(Check {
                name: "boundary-derivative limit in [0, 2)".into(),
                measured: l.max_value,
                threshold: 2.0,
                passed: l.count > 0 && l.min_value >= 0.0 && l.max_value < 2.0,
                detail: d.clone(),
            });
            checks.push(Check::below("limit vs variational estimate", l.max_route_gap, 1e-3, d));
        }
    }
    let passed = checks.iter().all(|c| c.passed);
    Ok(SuiteReport { suite, passed, checks })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_names_parse() {
        for s in Suite::ALL {
            assert_eq!(s.name().parse::<Suite>().unwrap(), s);
        }
        assert_eq!("nope".parse::<Suite>().unwrap_err().exit_code(), 1);
    }

    #[test]
    fn seeds_are_reproducible_and_inside() {
        let a = disc_seeds(50, 0.9, 5);
        assert_eq!(a, disc_seeds(50, 0.9, 5));
        assert!(a.iter().all(|z| z.norm() <= 0.9));
    }

    #[test]
    fn constant_identity_is_tight() {
        assert!(constant_identity(3, 9).unwrap() < 1e-10);
    }

    #[test]
    fn closed_form_suite_passes() {
        let r = run_suite(Suite::Closedform).unwrap();
        assert!(r.passed, "{r:?}");
    }
}
