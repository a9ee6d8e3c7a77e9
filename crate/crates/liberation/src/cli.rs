//! Command-line front end. [`run`] returns the process exit code so the binary stays trivial
//! and the commands can be tested in-process.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use liberation_core::flow::{residual_char_eq, residual_k_subordination, FlowOptions, Status};
use liberation_core::inversion::DensityProfile;
use liberation_core::measures::InitialData;
use liberation_core::transforms::h_infinity;
use liberation_core::Complex64;
use serde_json::{json, Value};

use crate::config::{MeasureSource, PresetConfig, RunConfig};
use crate::error::{Error, Result};
use crate::io::{self, num, time_tag, Bundle};
use crate::mc;
use crate::parallel;
use crate::verify::{self, Suite};

#[derive(Debug, Parser)]
#[command(name = "liberation", version, about = "Characteristic flow, domains and spectral densities of the liberation process")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct Common {
    /// JSON run configuration; flags override its keys.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// equal | free | haar | custom
    #[arg(long, global = true)]
    pub preset: Option<String>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub alpha: Option<f64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub beta: Option<f64>,
    /// Measure JSON for the custom preset.
    #[arg(long, global = true)]
    pub measure: Option<PathBuf>,
    /// Time points, comma separated.
    #[arg(long = "t", global = true, value_delimiter = ',')]
    pub t: Option<Vec<f64>>,
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    #[arg(long, global = true)]
    pub grid: Option<usize>,
    #[arg(long, global = true)]
    pub eps: Option<f64>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: hardware parallelism).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Matrix dimension for mc.
    #[arg(long, global = true)]
    pub n: Option<usize>,
    /// Independent trials for mc.
    #[arg(long, global = true)]
    pub trials: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate the characteristic flow from seed points.
    Flow,
    /// Trace the boundary of Omega_t.
    Boundary,
    /// Density of nu_t on the circle.
    Density,
    /// Density of mu_t on [0, 1].
    MuDensity,
    /// Atoms of nu_t.
    Atoms,
    /// Run a verification suite.
    Verify {
        /// subordination | closedform | moments | stationary | domain | inversion
        suite: String,
    },
    /// Random-matrix simulation compared with the analytic nu_t.
    Mc,
    /// Compare a sample CSV (column `value`) with the analytic nu_t.
    Compare {
        #[arg(long)]
        samples: PathBuf,
    },
}

/// Parses `args`, runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let mut out_dir = None;
    let result = resolve(&cli.common).and_then(|cfg| {
        out_dir = Some(cfg.out.clone());
        let workers = cli.common.workers;
        parallel::with_workers(workers, || execute(&cli.command, &cfg))?
    });
    match result {
        Ok(report) => {
            let passed = report.get("passed").and_then(Value::as_bool).unwrap_or(true);
            println!("{}", serde_json::to_string_pretty(&report).unwrap_or_default());
            if passed {
                0
            } else {
                3
            }
        }
        Err(e) => {
            let code = e.exit_code();
            let err = json!({ "error": e.to_string(), "exit_code": code });
            eprintln!("{}", serde_json::to_string_pretty(&err).unwrap_or_default());
            if code == 2 {
                if let Some(dir) = out_dir {
                    let mut b = Bundle::new();
                    if b.json("error.json", &err).is_ok() {
                        let _ = b.commit(&dir);
                    }
                }
            }
            code
        }
    }
}

/// Config file (or defaults) with the flags applied, validated.
pub fn resolve(c: &Common) -> Result<RunConfig> {
    let mut cfg = match &c.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let (a0, b0) = cfg.preset.traces();
    let alpha = c.alpha.unwrap_or(a0);
    let beta = c.beta.unwrap_or(b0);
    let name = c.preset.clone().unwrap_or_else(|| cfg.preset.name().to_string());
    if c.preset.is_some() || c.alpha.is_some() || c.beta.is_some() || c.measure.is_some() {
        cfg.preset = match name.as_str() {
            "equal" => {
                if c.beta.is_some() && beta != alpha {
                    return Err(Error::Config("the equal preset has beta = alpha".into()));
                }
                PresetConfig::Equal { alpha: c.alpha.unwrap_or(if c.beta.is_some() { beta } else { alpha }) }
            }
            "free" => PresetConfig::Free { alpha, beta },
            "haar" => {
                if c.alpha.is_some() || c.beta.is_some() {
                    return Err(Error::Config("the haar preset has alpha = beta = 0".into()));
                }
                PresetConfig::Haar
            }
            "custom" => {
                let measure = match (&c.measure, &cfg.preset) {
                    (Some(p), _) => MeasureSource::Path(p.clone()),
                    (None, PresetConfig::Custom { measure, .. }) => measure.clone(),
                    _ => return Err(Error::Config("the custom preset needs --measure".into())),
                };
                PresetConfig::Custom { alpha, beta, measure }.resolve(Path::new("."))?
            }
            other => return Err(Error::Config(format!("unknown preset '{other}'"))),
        };
    }
    if let Some(t) = &c.t {
        cfg.times = t.clone();
    }
    if let Some(v) = c.tol {
        cfg.tol = v;
    }
    if let Some(v) = c.grid {
        cfg.grid = v;
    }
    if let Some(v) = c.eps {
        cfg.eps = v;
    }
    if let Some(v) = &c.out {
        cfg.out = v.clone();
    }
    if let Some(v) = c.seed {
        cfg.seed = v;
    }
    if let Some(v) = c.n {
        cfg.mc.n = v;
    }
    if let Some(v) = c.trials {
        cfg.mc.trials = v;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Runs one command; files are written only if every step succeeds.
pub fn execute(cmd: &Command, cfg: &RunConfig) -> Result<Value> {
    let mut bundle = Bundle::new();
    let mut report = match cmd {
        Command::Flow => cmd_flow(cfg, &mut bundle)?,
        Command::Boundary => cmd_boundary(cfg, &mut bundle)?,
        Command::Density => cmd_density(cfg, &mut bundle, false)?,
        Command::MuDensity => cmd_density(cfg, &mut bundle, true)?,
        Command::Atoms => cmd_atoms(cfg, &mut bundle)?,
        Command::Verify { suite } => cmd_verify(suite.parse()?, &mut bundle)?,
        Command::Mc => cmd_mc(cfg, &mut bundle)?,
        Command::Compare { samples } => cmd_compare(cfg, samples, &mut bundle)?,
    };
    report["config"] = serde_json::to_value(cfg)?;
    report["files"] = json!(bundle.names().iter().map(|p| p.display().to_string()).collect::<Vec<_>>());
    bundle.json("report.json", &report)?;
    bundle.commit(&cfg.out)?;
    Ok(report)
}

/// `0` and eight points on `|z| = 1/2` unless the config lists seed points.
pub fn flow_seeds(cfg: &RunConfig) -> Vec<Complex64> {
    match &cfg.points {
        Some(p) => p.iter().map(|p| Complex64::new(p[0], p[1])).collect(),
        None => std::iter::once(Complex64::new(0.0, 0.0))
            .chain((0..8).map(|k| Complex64::from_polar(0.5, std::f64::consts::TAU * k as f64 / 8.0)))
            .collect(),
    }
}

fn cmd_flow(cfg: &RunConfig, b: &mut Bundle) -> Result<Value> {
    let init = cfg.initial()?;
    let p = init.params();
    let horizon = *cfg.times.last().expect("validated");
    let seeds = flow_seeds(cfg);
    let trajs = parallel::integrate_many(&seeds, &init, horizon, &FlowOptions::with_tol(cfg.tol));
    let mut rows_out = Vec::new();
    let mut worst_stat: f64 = 0.0;
    for (i, (z0, tr)) in seeds.iter().zip(trajs).enumerate() {
        let tr = tr?;
        if let Status::Failed(e) = &tr.status {
            return Err(Error::Numerical(format!("integration from {z0} failed: {e}")));
        }
        let mut rows = Vec::with_capacity(tr.states.len());
        let mut stat_max: f64 = 0.0;
        for (s, _) in tr.inside() {
            let stat = h_infinity(s.phi, p).map(|h| (s.w - h).norm()).unwrap_or(f64::NAN);
            stat_max = stat_max.max(stat);
            rows.push(
                [s.t, s.phi.re, s.phi.im, s.w.re, s.w.im, s.v.re, s.v.im, s.u.re, s.u.im, stat].map(num).to_vec(),
            );
        }
        b.csv(
            &format!("flow_{i}.csv"),
            &["t", "phi_re", "phi_im", "w_re", "w_im", "v_re", "v_im", "u_re", "u_im", "stationarity"],
            rows,
        )?;
        worst_stat = worst_stat.max(stat_max);
        rows_out.push(json!({
            "index": i,
            "z0": [z0.re, z0.im],
            "status": if tr.survived() { "alive" } else { "exited" },
            "exit_time": tr.exit_time,
            "steps": tr.steps,
            "char_eq_residual": residual_char_eq(&tr, &init)?,
            "k_subordination_residual": residual_k_subordination(&tr, &init)?,
            "stationarity_max": stat_max,
        }));
    }
    Ok(json!({
        "command": "flow",
        "stationary_preset": init.is_stationary(),
        "stationarity_max": worst_stat,
        "trajectories": rows_out,
    }))
}

fn cmd_boundary(cfg: &RunConfig, b: &mut Bundle) -> Result<Value> {
    cfg.require_positive_times()?;
    let init = cfg.initial()?;
    let bis_tol = cfg.tol.max(1e-12);
    let mut snaps = Vec::new();
    let mut headers = Vec::new();
    for &t in &cfg.times {
        let tb = parallel::trace_boundary(t, cfg.grid, bis_tol, &init)?;
        let s = &tb.snapshot;
        let header = json!({
            "t": t,
            "tol": s.tol,
            "x_minus": s.x_minus,
            "x_plus": s.x_plus,
            "touching": [s.touching.0, s.touching.1],
            "rays": s.boundary.len(),
            "failed_rays": tb.failed,
            "simple": s.is_simple(),
            "asymmetry": s.asymmetry(),
        });
        b.csv(&format!("boundary_{}.csv", time_tag(t)), &["theta", "r", "re", "im", "kind"], io::boundary_rows(s))?;
        b.json(&format!("boundary_{}.json", time_tag(t)), &header)?;
        headers.push(header);
        snaps.push(tb.snapshot);
    }
    let mut nesting_excess = f64::NEG_INFINITY;
    for w in snaps.windows(2) {
        for p in &w[1].boundary {
            if let Some(q) = w[0].boundary.iter().find(|q| q.theta == p.theta) {
                nesting_excess = nesting_excess.max(p.r - q.r);
            }
        }
    }
    b.text("boundary.svg", io::boundary_svg(&snaps));
    Ok(json!({
        "command": "boundary",
        "snapshots": headers,
        "nested": snaps.len() < 2 || nesting_excess <= bis_tol,
        "nesting_excess": if snaps.len() < 2 { Value::Null } else { json!(nesting_excess) },
    }))
}

fn moment_prediction(init: &InitialData, t: f64) -> Result<(f64, f64)> {
    let p = init.params();
    let ab = p.alpha() * p.beta();
    let m0 = init.first_moment0()?;
    Ok((ab + (m0 - ab) * (-t).exp(), ab + (m0 - ab) * (-2.0 * t).exp()))
}

fn profile_header(p: &DensityProfile, init: &InitialData) -> Result<Value> {
    let (pred, pred_2t) = moment_prediction(init, p.t)?;
    let pr = init.params();
    let m1_pred = match p.kind {
        liberation_core::inversion::ProfileKind::Nu => pred,
        liberation_core::inversion::ProfileKind::Mu => (1.0 + pr.alpha() + pr.beta() + pred) / 4.0,
    };
    Ok(json!({
        "kind": format!("{:?}", p.kind).to_lowercase(),
        "t": p.t,
        "grid": p.grid.len(),
        "epsilon": p.epsilon,
        "threshold": p.threshold,
        "atoms": p.atoms,
        "mass_defect": p.mass_defect,
        "first_moment": [p.first_moment.re, p.first_moment.im],
        "first_moment_predicted": m1_pred,
        "nu_moment_predicted_exp_minus_2t": pred_2t,
        "failures": p.failures,
        "min_value": p.min_value,
        "leakage": p.leakage,
    }))
}

fn cmd_density(cfg: &RunConfig, b: &mut Bundle, mu: bool) -> Result<Value> {
    let init = cfg.initial()?;
    let prefix = if mu { "mu" } else { "nu" };
    let mut headers = Vec::new();
    for &t in &cfg.times {
        let p = if mu {
            parallel::mu_density(t, cfg.grid, cfg.eps, &init)?
        } else {
            parallel::nu_density(t, cfg.grid, cfg.eps, &init)?
        };
        let tag = format!("{prefix}_{}", time_tag(t));
        b.csv(&format!("{tag}.csv"), &io::profile_header(&p), io::profile_rows(&p))?;
        let h = profile_header(&p, &init)?;
        b.json(&format!("{tag}.json"), &h)?;
        b.text(&format!("{tag}.svg"), io::profile_svg(&p));
        headers.push(h);
    }
    Ok(json!({ "command": if mu { "mu-density" } else { "density" }, "profiles": headers }))
}

fn cmd_atoms(cfg: &RunConfig, b: &mut Bundle) -> Result<Value> {
    let init = cfg.initial()?;
    let mut out = Vec::new();
    for &t in &cfg.times {
        let p = parallel::nu_density(t, cfg.grid, cfg.eps, &init)?;
        b.csv(
            &format!("atoms_{}.csv", time_tag(t)),
            &["theta", "mass"],
            p.atoms.iter().map(|(x, m)| [num(*x), num(*m)]),
        )?;
        out.push(json!({ "t": t, "atoms": p.atoms, "mass_defect": p.mass_defect }));
    }
    Ok(json!({ "command": "atoms", "times": out }))
}

fn cmd_verify(suite: Suite, b: &mut Bundle) -> Result<Value> {
    let r = verify::run_suite(suite)?;
    b.json(&format!("verify_{}.json", suite.name()), &r)?;
    let mut v = serde_json::to_value(&r)?;
    v["command"] = json!("verify");
    Ok(v)
}

fn cmd_mc(cfg: &RunConfig, b: &mut Bundle) -> Result<Value> {
    let mut runs = Vec::new();
    for &t in &cfg.times {
        let spec = cfg.matrix_spec(t)?;
        let (phases, pq) = mc::sample_spectra(&spec)?;
        let init = spec.analytic_initial()?;
        let profile = parallel::nu_density(t, cfg.grid, cfg.eps, &init)?;
        let cmp = mc::compare_samples(&phases, &profile)?;
        let rows = |s: &mc::Samples| -> Vec<[String; 2]> {
            s.per_trial.iter().enumerate().flat_map(|(i, v)| v.iter().map(move |x| [i.to_string(), num(*x)])).collect()
        };
        b.csv(&format!("mc_phases_{}.csv", time_tag(t)), &["trial", "value"], rows(&phases))?;
        b.csv(&format!("mc_pq_{}.csv", time_tag(t)), &["trial", "value"], rows(&pq))?;
        let pq_means: Vec<f64> =
            pq.per_trial.iter().map(|v| v.iter().sum::<f64>() / v.len() as f64).collect();
        let (pq_mean, pq_se) = mc::mean_se(&pq_means);
        let (a, be) = spec.realized();
        let c = json!({
            "t": t,
            "ks": cmp.ks,
            "l1": cmp.l1,
            "n_samples": cmp.n_samples,
            "realized_alpha": a,
            "realized_beta": be,
            "mean_trial_ks": cmp.mean_trial_ks,
            "steps": spec.steps,
            "pq_mean": pq_mean,
            "pq_mean_se": pq_se,
            "pq_mean_predicted": (1.0 + a + be + profile.first_moment.re) / 4.0,
        });
        b.json(&format!("mc_report_{}.json", time_tag(t)), &c)?;
        runs.push(c);
    }
    Ok(json!({ "command": "mc", "runs": runs }))
}

fn cmd_compare(cfg: &RunConfig, samples: &Path, b: &mut Bundle) -> Result<Value> {
    let x = io::read_samples(samples)?;
    let t = cfg.times[0];
    let init = cfg.initial()?;
    let p = parallel::nu_density(t, cfg.grid, cfg.eps, &init)?;
    let (ks, l1) = mc::compare(&x, &p)?;
    let pr = init.params();
    let r = json!({
        "t": t,
        "ks": ks,
        "l1": l1,
        "n_samples": x.len(),
        "realized_alpha": pr.alpha(),
        "realized_beta": pr.beta(),
    });
    b.json("compare.json", &r)?;
    let mut v = r;
    v["command"] = json!("compare");
    Ok(v)
}
