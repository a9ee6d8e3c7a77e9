//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.

use std::process::ExitCode;
use std::time::Instant;

use liberation::mc::{self, Coupling, MatrixModelSpec};
use liberation::verify;

struct Line {
    id: usize,
    name: &'static str,
    passed: bool,
    detail: String,
}

fn below(x: f64, limit: f64) -> bool {
    x.is_finite() && x < limit
}

fn run(id: usize, name: &'static str, f: impl FnOnce() -> liberation::Result<(bool, String)>) -> Line {
    let start = Instant::now();
    let (passed, detail) = match f() {
        Ok(r) => r,
        Err(e) => (false, format!("error: {e}")),
    };
    let line = Line { id, name, passed, detail: format!("{} [{:.1} s]", detail, start.elapsed().as_secs_f64()) };
    println!("{} {:>2} {}: {}", if line.passed { "PASS" } else { "FAIL" }, line.id, line.name, line.detail);
    line
}

fn c1() -> liberation::Result<(bool, String)> {
    let e = verify::derivative_normalization()?;
    Ok((below(e, 1e-8), format!("max |v_t(0) - e^t| = {e:.3e} (< 1e-8)")))
}

fn c2_c3() -> liberation::Result<verify::SweepStats> {
    verify::flow_sweep(200, 1.5, 1e-10)
}

fn c4() -> liberation::Result<(bool, String)> {
    let e = verify::constant_identity(10, 4)?;
    Ok((below(e, 1e-10), format!("sup |H_inf^2 - Phi^2 - (1 - (a+b)^2)| = {e:.3e} (< 1e-10)")))
}

fn c5() -> liberation::Result<(bool, String)> {
    let s = verify::closed_form_vs_ode()?;
    Ok((
        s.mismatched == 0 && below(s.max_relative_error, 1e-6),
        format!(
            "max relative error {:.3e} (< 1e-6) over {} comparisons, {} mismatched exits",
            s.max_relative_error, s.compared, s.mismatched
        ),
    ))
}

fn c6() -> liberation::Result<(bool, String)> {
    let (w, fails) = verify::free_stationarity()?;
    let flat = verify::haar_flatness()?;
    Ok((
        fails == 0 && below(w, 1e-6) && below(flat, 1e-6),
        format!("free sup |w - H_inf(phi)| = {w:.3e}, Haar |density - 1/2pi| = {flat:.3e} (< 1e-6)"),
    ))
}

fn c7_c10(rows: &[verify::MomentRow]) -> ((bool, String), (bool, String)) {
    let nu = rows.iter().map(|r| (r.m1 - r.predicted).abs()).fold(0.0, f64::max);
    let nu_2t = rows.iter().map(|r| (r.m1 - r.predicted_2t).abs()).fold(0.0, f64::max);
    let mu = rows.iter().map(|r| (r.mu_m1 - r.mu_predicted).abs()).fold(0.0, f64::max);
    (
        (
            below(nu, 1e-4),
            format!(
                "max |m1(t) - ab - (m1(0) - ab) e^-t| = {nu:.3e} (< 1e-4) at t in {{0.3, 1}}; \
                 the e^-2t form misses by {nu_2t:.3e}"
            ),
        ),
        (below(mu, 1e-4), format!("max |int x dmu_t - (1 + alpha + beta + m1)/4| = {mu:.3e} (< 1e-4)")),
    )
}

fn c8() -> liberation::Result<(bool, String)> {
    let r = verify::round_trip()?;
    Ok((
        r.failures == 0 && r.count > 0 && below(r.max_error, 1e-8),
        format!("max |eta_t(phi_t(z)) - z| = {:.3e} (< 1e-8) over {} seeds, {} failures", r.max_error, r.count, r.failures),
    ))
}

fn c9_c13() -> liberation::Result<((bool, String), (bool, String))> {
    let snaps = verify::all_snapshots()?;
    let g = verify::domain_geometry(&snaps);
    let l = verify::boundary_limits(&snaps)?;
    let geom = g.nesting_excess <= verify::DOMAIN_TOL
        && g.asymmetry <= 1e-9
        && g.min_distance_to_pm1 > 1e-3
        && g.failed_rays == 0;
    let lim = l.count > 0 && l.min_value >= 0.0 && l.max_value < 2.0 && below(l.max_route_gap, 1e-3);
    Ok((
        (
            geom,
            format!(
                "nesting excess {:.3e} (<= 1e-6), asymmetry {:.3e} (<= 1e-9), distance to +-1 {:.3e} (> 1e-3), {} failed rays",
                g.nesting_excess, g.asymmetry, g.min_distance_to_pm1, g.failed_rays
            ),
        ),
        (
            lim,
            format!(
                "{} circle points, limits in [{:.4}, {:.4}] (within [0, 2)), max gap to variational estimate {:.3e} (< 1e-3)",
                l.count, l.min_value, l.max_value, l.max_route_gap
            ),
        ),
    ))
}

fn c11() -> liberation::Result<(bool, String)> {
    let a = verify::atom_recovery()?;
    Ok((
        (a.delta_mass - 1.0).abs() < 1e-3 && a.haar_profile_atoms == 0 && a.haar_max_mass < 1e-6,
        format!(
            "delta_1 mass {:.9} (|. - 1| < 1e-3), Haar: {} atoms, max mass {:.3e} (< 1e-6)",
            a.delta_mass, a.haar_profile_atoms, a.haar_max_mass
        ),
    ))
}

const MC_SEED: u64 = 20240501;

fn c12() -> liberation::Result<(bool, String)> {
    let start = Instant::now();
    let equal = MatrixModelSpec::new(512, 0.5, 0.5, Coupling::Equal, 0.5, 20, MC_SEED)?;
    let free = MatrixModelSpec::new(512, 0.6, 0.7, Coupling::HaarFree, 0.5, 20, MC_SEED + 1)?;
    let ce = mc::compare_samples(&mc::sample_eigenphases(&equal)?, &mc::analytic_profile(&equal, 4096, 1e-3)?)?;
    let cf = mc::compare_samples(&mc::sample_eigenphases(&free)?, &mc::analytic_profile(&free, 4096, 1e-3)?)?;
    let secs = start.elapsed().as_secs_f64();
    let big = MatrixModelSpec::new(1024, 0.5, 0.5, Coupling::Equal, 0.5, 4, MC_SEED + 2)?;
    let cb = mc::compare_samples(&mc::sample_eigenphases(&big)?, &mc::analytic_profile(&big, 4096, 1e-3)?)?;
    let passed = below(ce.ks, 0.03) && below(cf.ks, 0.05) && secs < 300.0 && cb.mean_trial_ks < ce.mean_trial_ks;
    Ok((
        passed,
        format!(
            "KS equal {:.4} (< 0.03), haar-free {:.4} (< 0.05), N=512 runtime {:.0} s (< 300); \
             mean per-trial KS N=512 {:.4} -> N=1024 {:.4}",
            ce.ks, cf.ks, secs, ce.mean_trial_ks, cb.mean_trial_ks
        ),
    ))
}

fn main() -> ExitCode {
    let mut lines = Vec::new();
    let missing = || liberation::Error::Numerical("shared computation failed".into());
    lines.push(run(1, "derivative normalization", c1));
    let mut sweep = None;
    lines.push(run(2, "characteristic equation residual", || {
        let s = sweep.insert(c2_c3()?);
        Ok((
            s.failures == 0 && below(s.char_eq, 1e-7),
            format!("max residual {:.3e} (< 1e-7) over {} trajectories, {} failures", s.char_eq, s.trajectories, s.failures),
        ))
    }));
    lines.push(run(3, "K-subordination residual", || {
        let s = sweep.as_ref().ok_or_else(missing)?;
        Ok((
            s.failures == 0 && below(s.k_subordination, 1e-7),
            format!("max residual {:.3e} (< 1e-7) over {} trajectories", s.k_subordination, s.trajectories),
        ))
    }));
    lines.push(run(4, "constant identity", c4));
    lines.push(run(5, "closed form vs ODE", c5));
    lines.push(run(6, "stationarity", c6));
    let mut m10 = None;
    lines.push(run(7, "moment decay", || {
        let (a, b) = c7_c10(&verify::moments()?);
        m10 = Some(b);
        Ok(a)
    }));
    lines.push(run(8, "inversion round trip", c8));
    let mut d13 = None;
    lines.push(run(9, "domain geometry", || {
        let (a, b) = c9_c13()?;
        d13 = Some(b);
        Ok(a)
    }));
    lines.push(run(10, "mu-nu first-moment link", || m10.ok_or_else(missing)));
    lines.push(run(11, "atom recovery", c11));
    lines.push(run(12, "Monte Carlo agreement", c12));
    lines.push(run(13, "boundary-derivative range", || d13.ok_or_else(missing)));
    let failed: Vec<_> = lines.iter().filter(|l| !l.passed).map(|l| l.id).collect();
    println!("{} of {} criteria passed", lines.len() - failed.len(), lines.len());
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("failed: {failed:?}");
        ExitCode::FAILURE
    }
}
