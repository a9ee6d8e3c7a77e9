//! Run configuration. JSON on disk; command-line flags override individual keys.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use liberation_core::measures::{Atom, CircleMeasure, InitialData};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mc::{Coupling, MatrixModelSpec};

pub const TOL_RANGE: (f64, f64) = (1e-14, 1e-2);

/// Atoms plus an optional density `d nu / d theta` on the grid `-pi + 2 pi (j + 1) / n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasureSpec {
    #[serde(default)]
    pub atoms: Vec<AtomSpec>,
    #[serde(default)]
    pub density: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomSpec {
    pub theta: f64,
    pub mass: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MeasureSource {
    Path(PathBuf),
    Inline(MeasureSpec),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PresetConfig {
    Equal { alpha: f64 },
    Free { alpha: f64, beta: f64 },
    Haar,
    Custom { alpha: f64, beta: f64, measure: MeasureSource },
}

impl PresetConfig {
    pub fn name(&self) -> &'static str {
        match self {
            PresetConfig::Equal { .. } => "equal",
            PresetConfig::Free { .. } => "free",
            PresetConfig::Haar => "haar",
            PresetConfig::Custom { .. } => "custom",
        }
    }

    pub fn traces(&self) -> (f64, f64) {
        match *self {
            PresetConfig::Equal { alpha } => (alpha, alpha),
            PresetConfig::Free { alpha, beta } | PresetConfig::Custom { alpha, beta, .. } => (alpha, beta),
            PresetConfig::Haar => (0.0, 0.0),
        }
    }

    /// Atoms `{(0, 0.6), (pi, 0.4)}` with `alpha = 0.2`, `beta = 0.6`.
    pub fn two_atom() -> Self {
        PresetConfig::Custom {
            alpha: 0.2,
            beta: 0.6,
            measure: MeasureSource::Inline(MeasureSpec {
                atoms: vec![AtomSpec { theta: 0.0, mass: 0.6 }, AtomSpec { theta: PI, mass: 0.4 }],
                density: vec![],
            }),
        }
    }

    /// The measure itself, reading it from disk if it is given by path.
    pub fn resolve(&self, base: &Path) -> Result<PresetConfig> {
        match self {
            PresetConfig::Custom { alpha, beta, measure: MeasureSource::Path(p) } => {
                let path = if p.is_absolute() { p.clone() } else { base.join(p) };
                let text = fs::read_to_string(&path)
                    .map_err(|e| Error::Config(format!("cannot read measure {}: {e}", path.display())))?;
                let m: MeasureSpec = serde_json::from_str(&text)
                    .map_err(|e| Error::Config(format!("measure {}: {e}", path.display())))?;
                Ok(PresetConfig::Custom { alpha: *alpha, beta: *beta, measure: MeasureSource::Inline(m) })
            }
            other => Ok(other.clone()),
        }
    }

    /// Initial data; a custom measure must already be resolved.
    pub fn initial(&self) -> Result<InitialData> {
        Ok(match self {
            PresetConfig::Equal { alpha } => InitialData::equal(*alpha)?,
            PresetConfig::Free { alpha, beta } => InitialData::free(*alpha, *beta)?,
            PresetConfig::Haar => InitialData::haar()?,
            PresetConfig::Custom { alpha, beta, measure: MeasureSource::Inline(m) } => {
                let atoms = m.atoms.iter().map(|a| Atom { theta: a.theta, mass: a.mass }).collect();
                InitialData::custom(CircleMeasure::new(atoms, m.density.clone()), *alpha, *beta)?
            }
            PresetConfig::Custom { .. } => return Err(Error::Config("custom measure not resolved".into())),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McConfig {
    /// Matrix dimension.
    pub n: usize,
    pub trials: usize,
    /// Principal angles for custom presets; blocks are assigned to them in turn.
    pub angles: Option<Vec<f64>>,
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig { n: 512, trials: 20, angles: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub preset: PresetConfig,
    /// Time points, increasing.
    pub times: Vec<f64>,
    /// Integrator and bisection tolerance.
    pub tol: f64,
    /// Grid nodes of density profiles; rays of boundary traces.
    pub grid: usize,
    /// Distance from the circle (or real axis) at which transforms are evaluated.
    pub eps: f64,
    pub out: PathBuf,
    pub seed: u64,
    /// Seed points `[re, im]` of the flow command; default: `0` and `grid` points on `|z| = 1/2`.
    pub points: Option<Vec<[f64; 2]>>,
    pub mc: McConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            preset: PresetConfig::Equal { alpha: 0.0 },
            times: vec![0.5],
            tol: 1e-10,
            grid: 512,
            eps: 1e-3,
            out: PathBuf::from("out"),
            seed: 0,
            points: None,
            mc: McConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg: RunConfig =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.preset = cfg.preset.resolve(base)?;
        Ok(cfg)
    }

    /// Checks every key; commands call this before writing anything.
    ///
    /// Time points must be non-negative and strictly increasing; commands that need `t > 0`
    /// check that separately.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.times.is_empty() {
            return bad("no time points".into());
        }
        if self.times.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
            return bad(format!("time points must be finite and non-negative: {:?}", self.times));
        }
        if self.times.windows(2).any(|w| w[1] <= w[0]) {
            return bad(format!("time points must be strictly increasing: {:?}", self.times));
        }
        for (name, v) in [("tol", self.tol), ("eps", self.eps)] {
            if !(TOL_RANGE.0..=TOL_RANGE.1).contains(&v) {
                return bad(format!("{name} = {v} outside [{:e}, {:e}]", TOL_RANGE.0, TOL_RANGE.1));
            }
        }
        if self.grid < 4 {
            return bad(format!("grid = {} too small", self.grid));
        }
        if let Some(pts) = &self.points {
            if pts.iter().any(|p| !(p[0].hypot(p[1]) < 1.0)) {
                return bad("flow seed points must lie in the open unit disc".into());
            }
        }
        self.preset.initial()?;
        Ok(())
    }

    pub fn initial(&self) -> Result<InitialData> {
        self.preset.initial()
    }

    pub fn require_positive_times(&self) -> Result<()> {
        if self.times.iter().any(|t| *t <= 0.0) {
            return Err(Error::Config("this command needs t > 0".into()));
        }
        Ok(())
    }

    /// Matrix model for one time point: equal -> equal coupling, free and haar -> haar-free,
    /// custom -> principal angles (from `mc.angles`).
    pub fn matrix_spec(&self, t: f64) -> Result<MatrixModelSpec> {
        let (alpha, beta) = self.preset.traces();
        let coupling = match &self.preset {
            PresetConfig::Equal { .. } => Coupling::Equal,
            PresetConfig::Free { .. } | PresetConfig::Haar => Coupling::HaarFree,
            PresetConfig::Custom { .. } => match &self.mc.angles {
                Some(a) => Coupling::PrincipalAngles(a.clone()),
                None => return Err(Error::Config("custom preset in mc needs mc.angles".into())),
            },
        };
        MatrixModelSpec::new(self.mc.n, (1.0 + alpha) / 2.0, (1.0 + beta) / 2.0, coupling, t, self.mc.trials, self.seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_through_json() {
        let mut cfg = RunConfig::default();
        cfg.preset = PresetConfig::two_atom();
        cfg.times = vec![0.2, 1.0];
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        let back: RunConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, cfg);
        back.validate().unwrap();
    }

    #[test]
    fn partial_json_uses_defaults() {
        let cfg: RunConfig = serde_json::from_str(r#"{"preset": {"name": "free", "alpha": 0.2, "beta": 0.6}}"#).unwrap();
        assert_eq!(cfg.grid, 512);
        assert_eq!(cfg.preset.traces(), (0.2, 0.6));
        assert!(serde_json::from_str::<RunConfig>(r#"{"gird": 3}"#).is_err());
    }

    #[test]
    fn rejects_bad_values() {
        let ok = RunConfig::default();
        ok.validate().unwrap();
        let cases: Vec<Box<dyn Fn(&mut RunConfig)>> = vec![
            Box::new(|c| c.times = vec![]),
            Box::new(|c| c.times = vec![1.0, 0.5]),
            Box::new(|c| c.times = vec![0.5, 0.5]),
            Box::new(|c| c.times = vec![-0.1]),
            Box::new(|c| c.tol = 1e-15),
            Box::new(|c| c.eps = 0.1),
            Box::new(|c| c.preset = PresetConfig::Equal { alpha: 1.5 }),
            Box::new(|c| c.points = Some(vec![[1.0, 0.0]])),
        ];
        for f in cases {
            let mut c = ok.clone();
            f(&mut c);
            assert_eq!(c.validate().unwrap_err().exit_code(), 1);
        }
    }

    #[test]
    fn measure_from_file() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("m.json"), r#"{"atoms": [{"theta": 0.0, "mass": 1.0}]}"#).unwrap();
        fs::write(
            dir.path().join("cfg.json"),
            r#"{"preset": {"name": "custom", "alpha": 0.0, "beta": 0.0, "measure": "m.json"}}"#,
        )
        .unwrap();
        let cfg = RunConfig::load(&dir.path().join("cfg.json")).unwrap();
        cfg.validate().unwrap();
        assert!((cfg.initial().unwrap().first_moment0().unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn matrix_specs_follow_presets() {
        let mut cfg = RunConfig::default();
        cfg.preset = PresetConfig::Free { alpha: 0.2, beta: 0.4 };
        let s = cfg.matrix_spec(0.5).unwrap();
        assert_eq!(s.coupling, Coupling::HaarFree);
        assert_eq!(s.steps, 50);
        cfg.preset = PresetConfig::two_atom();
        assert!(cfg.matrix_spec(0.5).is_err());
        cfg.mc.angles = Some(vec![0.0, PI]);
        assert!(matches!(cfg.matrix_spec(0.5).unwrap().coupling, Coupling::PrincipalAngles(_)));
    }
}
