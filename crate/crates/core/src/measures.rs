//! Probability measures on the unit circle, their Herglotz transforms, and the
//! initial-data presets.

use alloc::vec::Vec;
use core::f64::consts::{PI, TAU};

use num_complex::Complex64;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};
use crate::transforms::{h_infinity, h_infinity_deriv, TraceParams};

const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Default size of the density grid.
pub const DEFAULT_GRID: usize = 2048;

const MASS_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Atom {
    pub theta: f64,
    pub mass: f64,
}

/// Atoms plus a density `d nu / d theta` sampled on the grid
/// `theta_j = -pi + 2 pi (j + 1) / n`, `j = 0..n`, integrated by the periodic
/// trapezoid rule.
#[derive(Clone, Debug, PartialEq)]
pub struct CircleMeasure {
    atoms: Vec<Atom>,
    density: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    AngleOutOfRange { theta: f64 },
    NegativeMass { theta: f64, mass: f64 },
    NegativeDensity { index: usize, value: f64 },
    AsymmetricAtom { theta: f64 },
    AsymmetricDensity { index: usize },
    MassNotOne { total: f64 },
}

/// `e^{i theta}`, exactly real at `theta = pi` so conjugation symmetry is exact.
pub fn unit(theta: f64) -> Complex64 {
    if theta == PI {
        Complex64::new(-1.0, 0.0)
    } else {
        Complex64::from_polar(1.0, theta)
    }
}

/// Angle of node `j` of an `n`-point density grid.
pub fn grid_angle(j: usize, n: usize) -> f64 {
    -PI + TAU * (j + 1) as f64 / n as f64
}

impl CircleMeasure {
    pub fn new(atoms: Vec<Atom>, density: Vec<f64>) -> Self {
        CircleMeasure { atoms, density }
    }

    pub fn dirac(theta: f64) -> Self {
        CircleMeasure::new(alloc::vec![Atom { theta, mass: 1.0 }], Vec::new())
    }

    /// `delta_1`
    pub fn delta_one() -> Self {
        CircleMeasure::dirac(0.0)
    }

    /// Uniform (Haar) measure on an `n`-point grid.
    pub fn haar(n: usize) -> Self {
        CircleMeasure::new(Vec::new(), alloc::vec![1.0 / TAU; n])
    }

    /// Density sampled from `f` on an `n`-point grid, no atoms.
    pub fn from_density_fn<F: Fn(f64) -> f64>(n: usize, f: F) -> Self {
        let density = (0..n).map(|j| f(grid_angle(j, n))).collect();
        CircleMeasure::new(Vec::new(), density)
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn density(&self) -> &[f64] {
        &self.density
    }

    pub fn total_mass(&self) -> f64 {
        let n = self.density.len();
        let dens: f64 = if n == 0 {
            0.0
        } else {
            self.density.iter().sum::<f64>() * TAU / n as f64
        };
        self.atoms.iter().map(|a| a.mass).sum::<f64>() + dens
    }

    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        for a in &self.atoms {
            if !(a.theta > -PI && a.theta <= PI) {
                out.push(Violation::AngleOutOfRange { theta: a.theta });
            }
            if !(0.0..=1.0).contains(&a.mass) {
                out.push(Violation::NegativeMass { theta: a.theta, mass: a.mass });
            }
        }
        for (index, &value) in self.density.iter().enumerate() {
            if !(value >= 0.0) {
                out.push(Violation::NegativeDensity { index, value });
            }
        }
        for a in &self.atoms {
            let mirror = if a.theta == PI { PI } else { -a.theta };
            let matched: f64 = self
                .atoms
                .iter()
                .filter(|b| (b.theta - mirror).abs() < 1e-12)
                .map(|b| b.mass)
                .sum();
            let own: f64 = self
                .atoms
                .iter()
                .filter(|b| (b.theta - a.theta).abs() < 1e-12)
                .map(|b| b.mass)
                .sum();
            if (matched - own).abs() > MASS_TOL {
                out.push(Violation::AsymmetricAtom { theta: a.theta });
            }
        }
        let n = self.density.len();
        let scale = self.density.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for j in 0..n {
            let mirror = (2 * n - j - 2) % n;
            if (self.density[j] - self.density[mirror]).abs() > 1e-9 * scale {
                out.push(Violation::AsymmetricDensity { index: j });
            }
        }
        let total = self.total_mass();
        if (total - 1.0).abs() > MASS_TOL {
            out.push(Violation::MassNotOne { total });
        }
        out
    }

    fn nodes(&self) -> impl Iterator<Item = (Complex64, f64)> + '_ {
        let n = self.density.len();
        let w = if n == 0 { 0.0 } else { TAU / n as f64 };
        let atoms = self
            .atoms
            .iter()
            .map(|a| (unit(a.theta), a.mass));
        let dens = self
            .density
            .iter()
            .enumerate()
            .map(move |(j, &d)| (unit(grid_angle(j, n)), d * w));
        atoms.chain(dens)
    }

    /// `H(z) = int (xi + z)/(xi - z) d nu(xi)`
    pub fn herglotz(&self, z: Complex64) -> Result<Complex64> {
        if z.norm() >= 1.0 {
            return Err(Error::OutsideDisc { z });
        }
        Ok(self.nodes().map(|(xi, m)| (xi + z) / (xi - z) * m).sum())
    }

    /// `H'(z) = int 2 xi / (xi - z)^2 d nu(xi)`
    pub fn herglotz_deriv(&self, z: Complex64) -> Result<Complex64> {
        if z.norm() >= 1.0 {
            return Err(Error::OutsideDisc { z });
        }
        Ok(self
            .nodes()
            .map(|(xi, m)| xi * 2.0 / ((xi - z) * (xi - z)) * m)
            .sum())
    }

    /// `int xi d nu(xi)`
    pub fn first_moment(&self) -> Complex64 {
        self.nodes().map(|(xi, m)| xi * m).sum()
    }

    /// Copy rescaled to unit total mass.
    pub fn normalized(&self) -> Self {
        let s = self.total_mass();
        CircleMeasure {
            atoms: self
                .atoms
                .iter()
                .map(|a| Atom { theta: a.theta, mass: a.mass / s })
                .collect(),
            density: self.density.iter().map(|d| d / s).collect(),
        }
    }
}

/// Named initial data.
#[derive(Clone, Debug, PartialEq)]
pub enum Preset {
    /// `P = Q`, so `nu_0 = delta_1` and `alpha = beta`.
    Equal { alpha: f64 },
    /// Freely independent start: `H(0, .) = H(inf, .)`.
    Free { alpha: f64, beta: f64 },
    /// User-supplied `nu_0` with user-supplied traces.
    Custom { measure: CircleMeasure, alpha: f64, beta: f64 },
    /// Uniform `nu_0` with `alpha = beta = 0`.
    Haar,
}

#[derive(Clone, Debug, PartialEq)]
enum Source {
    Delta1,
    Stationary,
    Measure,
}

/// Initial Herglotz transform together with the traces.
#[derive(Clone, Debug, PartialEq)]
pub struct InitialData {
    source: Source,
    params: TraceParams,
    measure0: Option<CircleMeasure>,
}

impl InitialData {
    pub fn from_preset(preset: Preset) -> Result<Self> {
        match preset {
            Preset::Equal { alpha } => Ok(InitialData {
                source: Source::Delta1,
                params: TraceParams::new(alpha, alpha)?,
                measure0: Some(CircleMeasure::delta_one()),
            }),
            Preset::Free { alpha, beta } => Ok(InitialData {
                source: Source::Stationary,
                params: TraceParams::new(alpha, beta)?,
                measure0: None,
            }),
            Preset::Custom { measure, alpha, beta } => {
                let params = TraceParams::new(alpha, beta)?;
                let bad = measure.validate();
                if !bad.is_empty() {
                    return Err(Error::InvalidMeasure { count: bad.len() });
                }
                Ok(InitialData {
                    source: Source::Measure,
                    params,
                    measure0: Some(measure.normalized()),
                })
            }
            Preset::Haar => Ok(InitialData {
                source: Source::Measure,
                params: TraceParams::new(0.0, 0.0)?,
                measure0: Some(CircleMeasure::haar(DEFAULT_GRID)),
            }),
        }
    }

    pub fn equal(alpha: f64) -> Result<Self> {
        InitialData::from_preset(Preset::Equal { alpha })
    }

    pub fn free(alpha: f64, beta: f64) -> Result<Self> {
        InitialData::from_preset(Preset::Free { alpha, beta })
    }

    pub fn custom(measure: CircleMeasure, alpha: f64, beta: f64) -> Result<Self> {
        InitialData::from_preset(Preset::Custom { measure, alpha, beta })
    }

    pub fn haar() -> Result<Self> {
        InitialData::from_preset(Preset::Haar)
    }

    pub fn params(&self) -> TraceParams {
        self.params
    }

    pub fn measure0(&self) -> Option<&CircleMeasure> {
        self.measure0.as_ref()
    }

    /// True for the free preset, where `H(t, .) = H(inf, .)` for all `t`.
    pub fn is_stationary(&self) -> bool {
        self.source == Source::Stationary
    }

    /// `H(0, z)`
    pub fn herglotz0(&self, z: Complex64) -> Result<Complex64> {
        if z.norm() >= 1.0 {
            return Err(Error::OutsideDisc { z });
        }
        match (&self.source, &self.measure0) {
            (Source::Delta1, _) => Ok((ONE + z) / (ONE - z)),
            (Source::Stationary, _) => h_infinity(z, self.params),
            (Source::Measure, Some(m)) => m.herglotz(z),
            (Source::Measure, None) => unreachable!("measure-backed data without a measure"),
        }
    }

    /// `d/dz H(0, z)`
    pub fn herglotz0_deriv(&self, z: Complex64) -> Result<Complex64> {
        if z.norm() >= 1.0 {
            return Err(Error::OutsideDisc { z });
        }
        match (&self.source, &self.measure0) {
            (Source::Delta1, _) => Ok(Complex64::new(2.0, 0.0) / ((ONE - z) * (ONE - z))),
            (Source::Stationary, _) => h_infinity_deriv(z, self.params),
            (Source::Measure, Some(m)) => m.herglotz_deriv(z),
            (Source::Measure, None) => unreachable!("measure-backed data without a measure"),
        }
    }

    /// First moment of `nu_0`, read off the Taylor coefficient `H(0, z) = 1 + 2 m_1 z + ...`.
    pub fn first_moment0(&self) -> Result<f64> {
        Ok(self.herglotz0_deriv(Complex64::new(0.0, 0.0))?.re / 2.0)
    }
}
