//! Random-matrix model of the liberation process.
//!
//! `U_t` is a product of increments `W D W*` with `W` Haar and `D = exp(i sqrt(delta) Lambda)`,
//! `Lambda` the spectrum of a GUE matrix with `E|G_ij|^2 = 1/N`. This is the law of
//! `exp(i sqrt(delta) G)` and gives `E tr U_t = e^{-t/2}` up to `O(delta)`.

use std::f64::consts::PI;
use std::sync::Once;

use faer::dyn_stack::{MemBuffer, MemStack, StackReq};
use faer::linalg::evd::{self, ComputeEigenvectors};
use faer::linalg::householder;
use faer::linalg::matmul::matmul;
use faer::linalg::qr::no_pivoting::factor as qr;
use faer::diag::{DiagMut, DiagRef};
use faer::reborrow::ReborrowMut;
use faer::{c64, Accum, Conj, Mat, MatMut, MatRef, Par, Side};
use liberation_core::inversion::{nu_density, DensityProfile, ProfileKind};
use liberation_core::measures::{Atom, CircleMeasure, InitialData};
use liberation_core::transforms::TraceParams;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_SUBSTEP: f64 = 0.01;
pub const MAX_DIM: usize = 2048;
/// Gram eigenvalues this close to 0 or 1 are counted as intersections of the ranges.
pub const RANK_TOL: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "angles")]
pub enum Coupling {
    /// `Q = P`
    Equal,
    /// `Q = V diag V*` with `V` Haar.
    HaarFree,
    /// Two-dimensional blocks between `P` and `Q`; each listed angle `theta` in `[0, pi]` puts
    /// `nu_0` mass at `e^{+-i theta}`. Blocks are assigned to the angles in turn.
    PrincipalAngles(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatrixModelSpec {
    pub n: usize,
    pub p: f64,
    pub q: f64,
    pub coupling: Coupling,
    pub t: f64,
    pub steps: usize,
    pub trials: usize,
    pub seed: u64,
}

impl MatrixModelSpec {
    /// Uses the fewest substeps with `t / steps <= 0.01`.
    pub fn new(n: usize, p: f64, q: f64, coupling: Coupling, t: f64, trials: usize, seed: u64) -> Result<Self> {
        let steps = if t > 0.0 { (t / MAX_SUBSTEP - 1e-9).ceil().max(1.0) as usize } else { 0 };
        let spec = MatrixModelSpec { n, p, q, coupling, t, steps, trials, seed };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n < 2 || self.n > MAX_DIM {
            return bad(format!("matrix dimension {} outside [2, {MAX_DIM}]", self.n));
        }
        for (name, v) in [("p", self.p), ("q", self.q)] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} = {v} outside [0, 1]"));
            }
        }
        if !(self.t >= 0.0 && self.t.is_finite()) {
            return bad(format!("time {} must be finite and non-negative", self.t));
        }
        if self.t > 0.0 && (self.steps == 0 || self.t / self.steps as f64 > MAX_SUBSTEP * (1.0 + 1e-9)) {
            return bad(format!("substep t/steps must be at most {MAX_SUBSTEP}"));
        }
        if self.t == 0.0 && self.steps != 0 {
            return bad("steps must be 0 at t = 0".into());
        }
        if self.trials == 0 {
            return bad("trials must be positive".into());
        }
        let (k, m) = self.ranks();
        match &self.coupling {
            Coupling::Equal if k != m => bad(format!("equal coupling needs rank P = rank Q, got {k} and {m}")),
            Coupling::PrincipalAngles(a) if a.is_empty() => bad("principal-angle list is empty".into()),
            Coupling::PrincipalAngles(a) if a.iter().any(|x| !(0.0..=PI).contains(x)) => {
                bad("principal angles must lie in [0, pi]".into())
            }
            _ => Ok(()),
        }
    }

    /// `(rank P, rank Q)`
    pub fn ranks(&self) -> (usize, usize) {
        let r = |x: f64| (x * self.n as f64).round() as usize;
        (r(self.p), r(self.q))
    }

    /// `(alpha, beta)` of the matrices actually simulated.
    pub fn realized(&self) -> (f64, f64) {
        let (k, m) = self.ranks();
        let n = self.n as f64;
        (2.0 * k as f64 / n - 1.0, 2.0 * m as f64 / n - 1.0)
    }

    pub fn realized_params(&self) -> Result<TraceParams> {
        let (a, b) = self.realized();
        Ok(TraceParams::new(a, b)?)
    }

    pub fn substep(&self) -> f64 {
        if self.steps == 0 {
            0.0
        } else {
            self.t / self.steps as f64
        }
    }

    fn blocks(&self) -> usize {
        let (k, m) = self.ranks();
        k.min(m).min(self.n - k).min(self.n - m)
    }

    /// `nu_0` of the simulated pair; `None` for the haar-free coupling, whose initial law is
    /// only known in the limit.
    pub fn initial_measure(&self) -> Option<CircleMeasure> {
        let (k, m) = self.ranks();
        let n = self.n as f64;
        let both = (k + m).saturating_sub(self.n) + (self.n - k.max(m)).saturating_sub(k.min(m));
        let mut atoms: Vec<(f64, f64)> = Vec::new();
        let mut add = |theta: f64, mass: f64| {
            if mass <= 0.0 {
                return;
            }
            match atoms.iter_mut().find(|(x, _)| (*x - theta).abs() < 1e-15) {
                Some(a) => a.1 += mass,
                None => atoms.push((theta, mass)),
            }
        };
        match &self.coupling {
            Coupling::Equal => add(0.0, 1.0),
            Coupling::HaarFree => return None,
            Coupling::PrincipalAngles(list) => {
                add(0.0, both as f64 / n);
                add(PI, k.abs_diff(m) as f64 / n);
                for (i, theta) in list.iter().enumerate() {
                    let c = (self.blocks() + list.len() - 1 - i) / list.len();
                    if *theta == 0.0 || *theta == PI {
                        add(*theta, 2.0 * c as f64 / n);
                    } else {
                        add(*theta, c as f64 / n);
                        add(-*theta, c as f64 / n);
                    }
                }
            }
        }
        Some(CircleMeasure::new(atoms.into_iter().map(|(theta, mass)| Atom { theta, mass }).collect(), vec![]))
    }

    /// Initial data of the limit object, built from the realized traces.
    pub fn analytic_initial(&self) -> Result<InitialData> {
        let (a, b) = self.realized();
        Ok(match self.coupling {
            Coupling::Equal => InitialData::equal(a)?,
            Coupling::HaarFree => InitialData::free(a, b)?,
            Coupling::PrincipalAngles(_) => {
                InitialData::custom(self.initial_measure().expect("principal angles fix nu_0"), a, b)?
            }
        })
    }
}

fn sequential() {
    static INIT: Once = Once::new();
    INIT.call_once(|| faer::set_global_parallelism(Par::Seq));
}

/// Generator for one trial: the seed picks the key, the trial index the stream.
pub fn trial_rng(seed: u64, trial: usize) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    rng
}

/// Standard complex Gaussian entries, `E|g|^2 = 1`, filled column by column.
pub fn fill_ginibre<R: Rng>(mut a: MatMut<'_, c64>, rng: &mut R) {
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            a[(i, j)] = c64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2;
        }
    }
}

pub fn ginibre<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Mat<c64> {
    let mut a = Mat::zeros(rows, cols);
    fill_ginibre(a.as_mut(), rng);
    a
}

/// Haar unitary from the QR factorization of a Ginibre matrix, columns rephased by `r_ii/|r_ii|`.
pub fn haar_unitary<R: Rng>(n: usize, rng: &mut R) -> Mat<c64> {
    sequential();
    let g = ginibre(n, n, rng);
    let f = g.qr();
    let r = f.R();
    let mut q = f.compute_Q();
    for j in 0..n {
        let d = r[(j, j)];
        let ph = if d.norm() > 0.0 { d / d.norm() } else { c64::new(1.0, 0.0) };
        for i in 0..n {
            q[(i, j)] *= ph;
        }
    }
    q
}

/// Eigenvalues of an `n x n` GUE matrix with `E|G_ij|^2 = 1/n`, from the tridiagonal model of
/// Dumitriu and Edelman (`beta = 2`).
pub fn gue_eigenvalues<R: Rng>(n: usize, rng: &mut R) -> Result<Vec<f64>> {
    let mut buf = MemBuffer::new(tridiag_scratch(n));
    let mut out = vec![0.0; n];
    gue_eigenvalues_into(n, rng, &mut out, MemStack::new(&mut buf))?;
    Ok(out)
}

fn tridiag_scratch(n: usize) -> StackReq {
    evd::self_adjoint_evd_scratch::<f64>(n, ComputeEigenvectors::No, Par::Seq, Default::default())
}

fn gue_eigenvalues_into<R: Rng>(n: usize, rng: &mut R, out: &mut [f64], stack: &mut MemStack) -> Result<()> {
    let scale = 1.0 / (n as f64).sqrt();
    let diag: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal) * scale).collect();
    let mut sub = Vec::with_capacity(n.saturating_sub(1));
    for k in 1..n {
        let chi = ChiSquared::new(2.0 * (n - k) as f64).map_err(|e| Error::Numerical(e.to_string()))?;
        sub.push((chi.sample(rng) / 2.0).sqrt() * scale);
    }
    evd::tridiagonal_self_adjoint_evd(
        DiagRef::from_slice(&diag),
        DiagRef::from_slice(&sub),
        DiagMut::from_slice_mut(out),
        None,
        Par::Seq,
        stack,
        Default::default(),
    )
    .map_err(|e| Error::Eigen(format!("{e:?}")))
}

/// Reusable workspace for the multiplicative increments.
struct Stepper {
    n: usize,
    root_delta: f64,
    qr: Mat<c64>,
    coeff: Mat<c64>,
    lambda: Vec<f64>,
    buf: MemBuffer,
}

impl Stepper {
    fn new(n: usize, cols: usize, delta: f64) -> Self {
        let bs = qr::recommended_block_size::<c64>(n, n);
        let req = StackReq::any_of(&[
            qr::qr_in_place_scratch::<c64>(n, n, bs, Par::Seq, Default::default()),
            householder::apply_block_householder_sequence_on_the_left_in_place_scratch::<c64>(n, bs, cols),
            householder::apply_block_householder_sequence_transpose_on_the_left_in_place_scratch::<c64>(n, bs, cols),
            tridiag_scratch(n),
        ]);
        Stepper {
            n,
            root_delta: delta.sqrt(),
            qr: Mat::zeros(n, n),
            coeff: Mat::zeros(bs, n),
            lambda: vec![0.0; n],
            buf: MemBuffer::new(req),
        }
    }

    /// `x <- W D W* x`. With `W = Q Lambda` (Lambda the diagonal phase fix) one has
    /// `W D W* = Q D Q*`, so the Householder factors are applied directly.
    fn step<R: Rng>(&mut self, rng: &mut R, mut x: MatMut<'_, c64>) -> Result<()> {
        let n = self.n;
        fill_ginibre(self.qr.as_mut(), rng);
        let stack = MemStack::new(&mut self.buf);
        qr::qr_in_place(self.qr.as_mut(), self.coeff.as_mut(), Par::Seq, stack, Default::default());
        gue_eigenvalues_into(n, rng, &mut self.lambda, MemStack::new(&mut self.buf))?;
        householder::apply_block_householder_sequence_transpose_on_the_left_in_place_with_conj(
            self.qr.as_ref(),
            self.coeff.as_ref(),
            Conj::Yes,
            x.rb_mut(),
            Par::Seq,
            MemStack::new(&mut self.buf),
        );
        for (i, l) in self.lambda.iter().enumerate() {
            let d = c64::from_polar(1.0, self.root_delta * l);
            for j in 0..x.ncols() {
                x[(i, j)] *= d;
            }
        }
        householder::apply_block_householder_sequence_on_the_left_in_place_with_conj(
            self.qr.as_ref(),
            self.coeff.as_ref(),
            Conj::No,
            x.rb_mut(),
            Par::Seq,
            MemStack::new(&mut self.buf),
        );
        Ok(())
    }
}

fn evolve<R: Rng>(spec: &MatrixModelSpec, rng: &mut R, mut x: Mat<c64>) -> Result<Mat<c64>> {
    if spec.steps == 0 {
        return Ok(x);
    }
    let mut stepper = Stepper::new(spec.n, x.ncols(), spec.substep());
    for _ in 0..spec.steps {
        stepper.step(rng, x.as_mut())?;
    }
    Ok(x)
}

/// Orthonormal basis of the range of `Q` (N x rank Q); `P` is the span of the first `rank P`
/// coordinate vectors.
fn initial_basis<R: Rng>(spec: &MatrixModelSpec, rng: &mut R) -> Mat<c64> {
    let (k, m) = spec.ranks();
    let n = spec.n;
    match &spec.coupling {
        Coupling::Equal => Mat::from_fn(n, m, |i, j| if i == j { c64::new(1.0, 0.0) } else { c64::new(0.0, 0.0) }),
        Coupling::HaarFree => {
            if m == 0 {
                return Mat::zeros(n, 0);
            }
            ginibre(n, m, rng).qr().compute_thin_Q()
        }
        Coupling::PrincipalAngles(list) => {
            let g = spec.blocks();
            let both = (k + m).saturating_sub(n);
            let mut x = Mat::zeros(n, m);
            for b in 0..g {
                let gamma = list[b % list.len()] / 2.0;
                x[(b, b)] = c64::new(gamma.cos(), 0.0);
                x[(k + b, b)] = c64::new(gamma.sin(), 0.0);
            }
            for j in 0..both {
                x[(g + j, g + j)] = c64::new(1.0, 0.0);
            }
            for j in 0..m - g - both {
                x[(k + g + j, g + both + j)] = c64::new(1.0, 0.0);
            }
            x
        }
    }
}

/// `U_t` for one trial.
pub fn sample_unitary_bm(spec: &MatrixModelSpec, trial: usize) -> Result<Mat<c64>> {
    spec.validate()?;
    sequential();
    let mut rng = trial_rng(spec.seed, trial);
    evolve(spec, &mut rng, Mat::identity(spec.n, spec.n))
}

/// Basis of `U_t Q U_t*` for one trial.
pub fn evolved_basis(spec: &MatrixModelSpec, trial: usize) -> Result<Mat<c64>> {
    spec.validate()?;
    sequential();
    let mut rng = trial_rng(spec.seed, trial);
    let x0 = initial_basis(spec, &mut rng);
    evolve(spec, &mut rng, x0)
}

/// Samples pooled over trials, kept per trial.
#[derive(Clone, Debug, PartialEq)]
pub struct Samples {
    pub per_trial: Vec<Vec<f64>>,
    pub realized_alpha: f64,
    pub realized_beta: f64,
}

impl Samples {
    pub fn pooled(&self) -> Vec<f64> {
        self.per_trial.iter().flatten().copied().collect()
    }

    pub fn len(&self) -> usize {
        self.per_trial.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn gram_eigenvalues(x: MatRef<'_, c64>, k: usize) -> Result<Vec<f64>> {
    let m = x.ncols();
    if m == 0 {
        return Ok(vec![]);
    }
    let xp = x.subrows(0, k);
    let mut g = Mat::<c64>::zeros(m, m);
    matmul(g.as_mut(), Accum::Replace, xp.adjoint(), xp, c64::new(1.0, 0.0), Par::Seq);
    g.self_adjoint_eigenvalues(Side::Lower).map_err(|e| Error::Eigen(format!("{e:?}")))
}

/// Eigenphases of `R S_t` from the principal angles between `P` and `U_t Q U_t*`: a Gram
/// eigenvalue `cos^2 gamma` strictly inside `(0, 1)` gives the pair `+-2 gamma`; the
/// intersections of the ranges give the phases `0` and `pi`.
pub fn phases_from_basis(x: MatRef<'_, c64>, k: usize) -> Result<Vec<f64>> {
    let n = x.nrows();
    let m = x.ncols();
    let ev = gram_eigenvalues(x, k)?;
    let ones = ev.iter().filter(|&&v| v > 1.0 - RANK_TOL).count();
    let zeros = ev.iter().filter(|&&v| v < RANK_TOL).count();
    let generic = m - ones - zeros;
    let (p_only, neither) = match (k.checked_sub(ones + generic), (n + ones).checked_sub(k + m)) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(Error::Numerical("inconsistent principal-angle dimensions".into())),
    };
    let mut out = Vec::with_capacity(n);
    for &v in &ev {
        if v >= RANK_TOL && v <= 1.0 - RANK_TOL {
            let two_gamma = 2.0 * v.sqrt().min(1.0).acos();
            out.push(two_gamma);
            out.push(-two_gamma);
        }
    }
    out.extend(std::iter::repeat_n(0.0, ones + neither));
    out.extend(std::iter::repeat_n(PI, zeros + p_only));
    debug_assert_eq!(out.len(), n);
    Ok(out)
}

/// Eigenphases of `R (2 X X* - 1)` from a dense eigensolver; used to cross-check
/// [`phases_from_basis`].
pub fn phases_direct(x: MatRef<'_, c64>, k: usize) -> Result<Vec<f64>> {
    let n = x.nrows();
    let mut s = Mat::<c64>::zeros(n, n);
    matmul(s.as_mut(), Accum::Replace, x, x.adjoint(), c64::new(2.0, 0.0), Par::Seq);
    for i in 0..n {
        s[(i, i)] -= c64::new(1.0, 0.0);
    }
    for i in k..n {
        for j in 0..n {
            s[(i, j)] = -s[(i, j)];
        }
    }
    let ev = s.eigenvalues().map_err(|e| Error::Eigen(format!("{e:?}")))?;
    Ok(ev.iter().map(|z| fold(z.arg())).collect())
}

fn fold(theta: f64) -> f64 {
    if theta <= -PI {
        theta + 2.0 * PI
    } else {
        theta
    }
}

fn per_trial<F>(spec: &MatrixModelSpec, f: F) -> Result<Samples>
where
    F: Fn(MatRef<'_, c64>, usize) -> Result<Vec<f64>> + Sync,
{
    spec.validate()?;
    let (k, _) = spec.ranks();
    let per_trial = (0..spec.trials)
        .into_par_iter()
        .map(|i| evolved_basis(spec, i).and_then(|x| f(x.as_ref(), k)))
        .collect::<Result<Vec<_>>>()?;
    let (realized_alpha, realized_beta) = spec.realized();
    Ok(Samples { per_trial, realized_alpha, realized_beta })
}

/// Eigenphases of `R U_t S U_t*` in `(-pi, pi]`.
pub fn sample_eigenphases(spec: &MatrixModelSpec) -> Result<Samples> {
    per_trial(spec, phases_from_basis)
}

fn pq_from_basis(x: MatRef<'_, c64>, k: usize) -> Result<Vec<f64>> {
    let n = x.nrows();
    let xp = x.subrows(0, k);
    let mut out = if k == 0 {
        vec![]
    } else {
        let mut c = Mat::<c64>::zeros(k, k);
        matmul(c.as_mut(), Accum::Replace, xp, xp.adjoint(), c64::new(1.0, 0.0), Par::Seq);
        c.self_adjoint_eigenvalues(Side::Lower).map_err(|e| Error::Eigen(format!("{e:?}")))?
    };
    out.resize(n, 0.0);
    Ok(out)
}

/// Eigenvalues of `P U_t Q U_t* P` on the range of `P`, padded with zeros to length N.
pub fn sample_pq_spectrum(spec: &MatrixModelSpec) -> Result<Samples> {
    per_trial(spec, pq_from_basis)
}

/// Eigenphases and `PQP` spectrum from the same simulated trials.
pub fn sample_spectra(spec: &MatrixModelSpec) -> Result<(Samples, Samples)> {
    let both = per_trial(spec, |x, k| {
        let mut v = phases_from_basis(x, k)?;
        v.extend(pq_from_basis(x, k)?);
        Ok(v)
    })?;
    let n = spec.n;
    let split = |first: bool| Samples {
        per_trial: both
            .per_trial
            .iter()
            .map(|v| if first { v[..n].to_vec() } else { v[n..].to_vec() })
            .collect(),
        realized_alpha: both.realized_alpha,
        realized_beta: both.realized_beta,
    };
    Ok((split(true), split(false)))
}

/// Mean of `(1/N) tr U_t` over trials with its standard error.
pub fn trace_mean(spec: &MatrixModelSpec) -> Result<(f64, f64)> {
    spec.validate()?;
    let tr = (0..spec.trials)
        .into_par_iter()
        .map(|i| {
            let u = sample_unitary_bm(spec, i)?;
            let s: c64 = (0..spec.n).map(|j| u[(j, j)]).sum();
            Ok(s.re / spec.n as f64)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(mean_se(&tr))
}

pub fn mean_se(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    if x.len() < 2 {
        return (mean, f64::INFINITY);
    }
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Distribution function on `(-pi, pi]` with possible atoms.
pub trait CircleCdf {
    /// `F(x) = nu((-pi, x])`
    fn cdf(&self, x: f64) -> f64;
    /// `F(x-) = nu((-pi, x))`
    fn cdf_left(&self, x: f64) -> f64;
    fn atom_locations(&self) -> Vec<f64>;
}

/// Continuous part from a `nu` profile (piecewise linear, periodic) plus its atoms.
#[derive(Clone, Debug)]
pub struct AnalyticCdf {
    grid: Vec<f64>,
    values: Vec<f64>,
    cumulative: Vec<f64>,
    atoms: Vec<(f64, f64)>,
    scale: f64,
}

impl AnalyticCdf {
    /// The continuous part is rescaled so that the total mass is one.
    pub fn from_profile(profile: &DensityProfile) -> Result<Self> {
        if profile.kind != ProfileKind::Nu || profile.grid.len() < 2 {
            return Err(Error::Config("comparison needs a nu profile on the circle".into()));
        }
        let n = profile.grid.len();
        let mut cumulative = Vec::with_capacity(n);
        let mut acc = 0.0;
        let mut prev = (-PI, profile.values[n - 1]);
        for (x, v) in profile.grid.iter().zip(&profile.values) {
            acc += 0.5 * (x - prev.0) * (v + prev.1);
            cumulative.push(acc);
            prev = (*x, *v);
        }
        let atom_mass: f64 = profile.atoms.iter().map(|a| a.1).sum();
        let scale = if acc > 0.0 { (1.0 - atom_mass).max(0.0) / acc } else { 0.0 };
        let mut atoms = profile.atoms.clone();
        for a in &mut atoms {
            a.0 = fold(a.0);
        }
        Ok(AnalyticCdf { grid: profile.grid.clone(), values: profile.values.clone(), cumulative, atoms, scale })
    }

    fn continuous(&self, x: f64) -> f64 {
        let n = self.grid.len();
        let j = self.grid.partition_point(|g| *g < x);
        if j >= n {
            return self.cumulative[n - 1] * self.scale;
        }
        let (x0, v0, c0) = if j == 0 { (-PI, self.values[n - 1], 0.0) } else { (self.grid[j - 1], self.values[j - 1], self.cumulative[j - 1]) };
        let h = self.grid[j] - x0;
        let s = ((x - x0) / h).clamp(0.0, 1.0);
        let v1 = self.values[j];
        (c0 + h * s * (v0 + 0.5 * (v1 - v0) * s)) * self.scale
    }
}

impl CircleCdf for AnalyticCdf {
    fn cdf(&self, x: f64) -> f64 {
        self.continuous(x) + self.atoms.iter().filter(|a| a.0 <= x).map(|a| a.1).sum::<f64>()
    }

    fn cdf_left(&self, x: f64) -> f64 {
        self.continuous(x) + self.atoms.iter().filter(|a| a.0 < x).map(|a| a.1).sum::<f64>()
    }

    fn atom_locations(&self) -> Vec<f64> {
        self.atoms.iter().map(|a| a.0).collect()
    }
}

#[derive(Clone, Debug)]
pub struct EmpiricalCdf {
    sorted: Vec<f64>,
}

impl EmpiricalCdf {
    pub fn new(samples: &[f64]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Numerical("empty sample".into()));
        }
        let mut sorted: Vec<f64> = samples.iter().map(|&x| fold(x)).collect();
        sorted.sort_by(f64::total_cmp);
        Ok(EmpiricalCdf { sorted })
    }
}

impl CircleCdf for EmpiricalCdf {
    fn cdf(&self, x: f64) -> f64 {
        self.sorted.partition_point(|v| *v <= x) as f64 / self.sorted.len() as f64
    }

    fn cdf_left(&self, x: f64) -> f64 {
        self.sorted.partition_point(|v| *v < x) as f64 / self.sorted.len() as f64
    }

    fn atom_locations(&self) -> Vec<f64> {
        let mut v = self.sorted.clone();
        v.dedup();
        v
    }
}

/// Kolmogorov-Smirnov distance `sup |F_n - F|`, checked on both sides of every jump of either
/// function.
pub fn ks_distance(samples: &[f64], reference: &impl CircleCdf) -> Result<f64> {
    let emp = EmpiricalCdf::new(samples)?;
    let mut points = emp.atom_locations();
    points.extend(reference.atom_locations());
    let mut d: f64 = 0.0;
    for x in points {
        d = d.max((emp.cdf(x) - reference.cdf(x)).abs());
        d = d.max((emp.cdf_left(x) - reference.cdf_left(x)).abs());
    }
    Ok(d)
}

/// Number of Freedman-Diaconis bins on `(-pi, pi]`; Sturges when the interquartile range is 0.
pub fn fd_bins(sorted: &[f64]) -> usize {
    let n = sorted.len();
    let q = |p: f64| sorted[((p * (n - 1) as f64).round() as usize).min(n - 1)];
    let iqr = q(0.75) - q(0.25);
    if iqr <= 0.0 {
        return ((n as f64).log2().ceil() as usize + 1).max(1);
    }
    let h = 2.0 * iqr / (n as f64).cbrt();
    ((2.0 * PI / h).ceil() as usize).clamp(1, 4096)
}

/// L1 distance between the histogram density and the bin average of the analytic law, i.e.
/// `sum |P_n(bin) - P(bin)|` over Freedman-Diaconis bins; atoms count in their bin.
pub fn l1_distance(samples: &[f64], reference: &impl CircleCdf) -> Result<f64> {
    let emp = EmpiricalCdf::new(samples)?;
    let bins = fd_bins(&emp.sorted);
    let edge = |i: usize| -PI + 2.0 * PI * i as f64 / bins as f64;
    Ok((0..bins)
        .map(|i| {
            let (lo, hi) = (edge(i), if i + 1 == bins { PI } else { edge(i + 1) });
            let pe = emp.cdf(hi) - emp.cdf(lo);
            let pa = reference.cdf(hi) - reference.cdf(lo);
            (pe - pa).abs()
        })
        .sum())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub ks: f64,
    pub l1: f64,
    pub n_samples: usize,
    pub realized_alpha: f64,
    pub realized_beta: f64,
    /// Mean of the KS distances of the individual trials.
    pub mean_trial_ks: f64,
}

pub fn compare(empirical: &[f64], analytic: &DensityProfile) -> Result<(f64, f64)> {
    let cdf = AnalyticCdf::from_profile(analytic)?;
    Ok((ks_distance(empirical, &cdf)?, l1_distance(empirical, &cdf)?))
}

pub fn compare_samples(samples: &Samples, analytic: &DensityProfile) -> Result<Comparison> {
    let cdf = AnalyticCdf::from_profile(analytic)?;
    let pooled = samples.pooled();
    let per: Vec<f64> = samples.per_trial.iter().map(|s| ks_distance(s, &cdf)).collect::<Result<_>>()?;
    Ok(Comparison {
        ks: ks_distance(&pooled, &cdf)?,
        l1: l1_distance(&pooled, &cdf)?,
        n_samples: pooled.len(),
        realized_alpha: samples.realized_alpha,
        realized_beta: samples.realized_beta,
        mean_trial_ks: per.iter().sum::<f64>() / per.len() as f64,
    })
}

/// Analytic `nu_t` for the realized traces of `spec`.
pub fn analytic_profile(spec: &MatrixModelSpec, grid: usize, eps: f64) -> Result<DensityProfile> {
    Ok(nu_density(spec.t, grid, eps, &spec.analytic_initial()?)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(n: usize, p: f64, q: f64, c: Coupling, t: f64, trials: usize) -> MatrixModelSpec {
        MatrixModelSpec::new(n, p, q, c, t, trials, 7).unwrap()
    }

    fn unitarity_defect(u: MatRef<'_, c64>) -> f64 {
        let n = u.nrows();
        let mut g = Mat::<c64>::zeros(n, n);
        matmul(g.as_mut(), Accum::Replace, u.adjoint(), u, c64::new(1.0, 0.0), Par::Seq);
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let e = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((g[(i, j)] - c64::new(e, 0.0)).norm());
            }
        }
        worst
    }

    #[test]
    fn time_zero_is_identity() {
        let u = sample_unitary_bm(&spec(16, 0.5, 0.5, Coupling::Equal, 0.0, 1), 0).unwrap();
        assert_eq!(u, Mat::<c64>::identity(16, 16));
    }

    #[test]
    fn increments_are_unitary() {
        let u = sample_unitary_bm(&spec(64, 0.5, 0.5, Coupling::Equal, 0.3, 1), 0).unwrap();
        assert!(unitarity_defect(u.as_ref()) < 1e-10);
        let mut rng = trial_rng(1, 0);
        assert!(unitarity_defect(haar_unitary(32, &mut rng).as_ref()) < 1e-12);
    }

    #[test]
    fn householder_conjugation_matches_dense_product() {
        let n = 12;
        let mut rng = trial_rng(3, 0);
        let mut st = Stepper::new(n, n, 0.01);
        let mut x = Mat::<c64>::identity(n, n);
        let mut rng2 = rng.clone();
        st.step(&mut rng, x.as_mut()).unwrap();
        // rebuild the same increment densely
        let g = ginibre(n, n, &mut rng2);
        let q = g.qr().compute_Q();
        let lam = gue_eigenvalues(n, &mut rng2).unwrap();
        let dq = Mat::from_fn(n, n, |i, j| c64::from_polar(1.0, 0.1 * lam[i]) * q[(j, i)].conj());
        let mut w = Mat::<c64>::zeros(n, n);
        matmul(w.as_mut(), Accum::Replace, q.as_ref(), dq.as_ref(), c64::new(1.0, 0.0), Par::Seq);
        for i in 0..n {
            for j in 0..n {
                assert!((w[(i, j)] - x[(i, j)]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn gue_spectrum_has_unit_second_moment() {
        let mut rng = trial_rng(11, 0);
        let n = 400;
        let mut m2 = 0.0;
        for _ in 0..20 {
            let ev = gue_eigenvalues(n, &mut rng).unwrap();
            m2 += ev.iter().map(|x| x * x).sum::<f64>() / n as f64;
        }
        assert!((m2 / 20.0 - 1.0).abs() < 0.01);
    }

    #[test]
    fn deterministic_given_seed() {
        let s = spec(24, 0.5, 0.25, Coupling::HaarFree, 0.1, 3);
        assert_eq!(sample_eigenphases(&s).unwrap(), sample_eigenphases(&s).unwrap());
        let mut other = s.clone();
        other.seed += 1;
        assert_ne!(sample_eigenphases(&s).unwrap(), sample_eigenphases(&other).unwrap());
    }

    #[test]
    fn principal_angles_match_dense_eigensolver() {
        for c in [Coupling::HaarFree, Coupling::Equal, Coupling::PrincipalAngles(vec![0.7, 2.0])] {
            for (p, q) in [(0.5, 0.5), (0.25, 0.75), (0.75, 0.375)] {
                let q = if c == Coupling::Equal { p } else { q };
                let s = spec(32, p, q, c.clone(), 0.2, 1);
                let x = evolved_basis(&s, 0).unwrap();
                let mut a = phases_from_basis(x.as_ref(), s.ranks().0).unwrap();
                let mut b = phases_direct(x.as_ref(), s.ranks().0).unwrap();
                a.sort_by(f64::total_cmp);
                b.sort_by(f64::total_cmp);
                for (u, v) in a.iter().zip(&b) {
                    // atoms at pi may come out of the dense solver as -pi + tiny
                    let d = (u - v).abs().min(2.0 * PI - (u - v).abs());
                    assert!(d < 1e-6, "{c:?} {p} {q}: {u} vs {v}");
                }
            }
        }
    }

    #[test]
    fn equal_coupling_at_time_zero() {
        let s = spec(20, 0.5, 0.5, Coupling::Equal, 0.0, 2);
        assert!(sample_eigenphases(&s).unwrap().pooled().iter().all(|&x| x == 0.0));
        let pq = sample_pq_spectrum(&s).unwrap();
        for t in &pq.per_trial {
            assert_eq!(t.iter().filter(|&&x| (x - 1.0).abs() < 1e-12).count(), 10);
            assert_eq!(t.iter().filter(|&&x| x.abs() < 1e-12).count(), 10);
        }
    }

    #[test]
    fn initial_measure_of_principal_angles() {
        let s = spec(40, 0.6, 0.8, Coupling::PrincipalAngles(vec![0.0, PI]), 0.0, 1);
        let m = s.initial_measure().unwrap();
        let at = |th: f64| m.atoms().iter().filter(|a| a.theta == th).map(|a| a.mass).sum::<f64>();
        assert!((at(0.0) - 0.6).abs() < 1e-12);
        assert!((at(PI) - 0.4).abs() < 1e-12);
        let x = evolved_basis(&s, 0).unwrap();
        let ph = phases_from_basis(x.as_ref(), 24).unwrap();
        assert_eq!(ph.iter().filter(|&&x| x == 0.0).count(), 24);
        assert_eq!(ph.iter().filter(|&&x| x == PI).count(), 16);
    }

    #[test]
    fn phases_are_conjugation_symmetric() {
        let s = spec(48, 0.5, 0.625, Coupling::HaarFree, 0.3, 2);
        for t in sample_eigenphases(&s).unwrap().per_trial {
            let mut pos: Vec<f64> = t.iter().filter(|&&x| x > 0.0 && x < PI).copied().collect();
            let mut neg: Vec<f64> = t.iter().filter(|&&x| x < 0.0).map(|x| -x).collect();
            pos.sort_by(f64::total_cmp);
            neg.sort_by(f64::total_cmp);
            assert_eq!(pos, neg);
        }
    }

    #[test]
    fn combined_sampler_matches_separate_ones() {
        let s = spec(24, 0.5, 0.75, Coupling::HaarFree, 0.05, 2);
        let (ph, pq) = sample_spectra(&s).unwrap();
        assert_eq!(ph, sample_eigenphases(&s).unwrap());
        assert_eq!(pq, sample_pq_spectrum(&s).unwrap());
    }

    #[test]
    fn normalized_trace_decays_like_exp_minus_half_t() {
        let s = spec(64, 0.5, 0.5, Coupling::Equal, 1.0, 8);
        let (m, se) = trace_mean(&s).unwrap();
        assert!((m - (-0.5f64).exp()).abs() < 4.0 * se + 5e-3, "{m} +- {se}");
    }

    #[test]
    fn first_moment_decays_like_exp_minus_t() {
        // equal(0): m1(0) = 1 and alpha beta = 0, so m1(t) = e^{-t}; the e^{-2t} law is rejected.
        let s = spec(128, 0.5, 0.5, Coupling::Equal, 1.0, 4);
        let per_trial: Vec<f64> = sample_eigenphases(&s)
            .unwrap()
            .per_trial
            .iter()
            .map(|v| v.iter().map(|x| x.cos()).sum::<f64>() / v.len() as f64)
            .collect();
        let (m, se) = mean_se(&per_trial);
        assert!((m - (-1.0f64).exp()).abs() < 4.0 * se + 5e-3, "{m} +- {se}");
        assert!((m - (-2.0f64).exp()).abs() > 0.2, "{m}");
    }

    #[test]
    fn pq_spectrum_is_a_contraction() {
        let s = spec(40, 0.4, 0.7, Coupling::HaarFree, 0.2, 2);
        for x in sample_pq_spectrum(&s).unwrap().pooled() {
            assert!((-1e-10..=1.0 + 1e-10).contains(&x));
        }
    }

    #[test]
    fn ks_of_sample_against_itself_is_zero() {
        let x = vec![0.3, -1.0, 0.0, 0.0, PI, 2.0];
        let e = EmpiricalCdf::new(&x).unwrap();
        assert_eq!(ks_distance(&x, &e).unwrap(), 0.0);
        assert!(ks_distance(&[], &e).is_err());
    }

    #[test]
    fn ks_sees_missing_atoms() {
        let profile = DensityProfile {
            kind: ProfileKind::Nu,
            t: 0.0,
            grid: (0..64).map(|j| liberation_core::measures::grid_angle(j, 64)).collect(),
            values: vec![0.5 / (2.0 * PI); 64],
            atoms: vec![(0.0, 0.5)],
            epsilon: 1e-3,
            threshold: 0.05,
            mass_defect: 0.0,
            first_moment: Default::default(),
            failures: 0,
            min_value: 0.0,
            leakage: 0.0,
        };
        let cdf = AnalyticCdf::from_profile(&profile).unwrap();
        assert!((cdf.cdf(0.0) - cdf.cdf_left(0.0) - 0.5).abs() < 1e-12);
        assert!((cdf.cdf(PI) - 1.0).abs() < 1e-12);
        let uniform: Vec<f64> = (0..1000).map(|i| -PI + 2.0 * PI * (i as f64 + 0.5) / 1000.0).collect();
        let d = ks_distance(&uniform, &cdf).unwrap();
        assert!((d - 0.25).abs() < 2e-3, "{d}");
    }
}
