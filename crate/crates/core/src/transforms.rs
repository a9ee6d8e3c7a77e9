//! Closed-form transforms: `H(inf, z)`, the weight `Phi`, `K`, and the relation
//! between the Herglotz transforms of `nu_t` and `mu_t`.

use num_complex::Complex64;
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::{Error, Result};

const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Traces `alpha = tau(R)` and `beta = tau(S)` of the two symmetries.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceParams {
    alpha: f64,
    beta: f64,
}

impl TraceParams {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        for (name, value) in [("alpha", alpha), ("beta", beta)] {
            if !(-1.0..=1.0).contains(&value) {
                return Err(Error::InvalidTrace { name, value });
            }
        }
        Ok(TraceParams { alpha, beta })
    }

    /// Traces derived from the projection traces `p = tau(P)`, `q = tau(Q)`.
    pub fn from_projections(p: f64, q: f64) -> Result<Self> {
        TraceParams::new(2.0 * p - 1.0, 2.0 * q - 1.0)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// `|alpha - beta| / 2`
    pub fn a(&self) -> f64 {
        (self.alpha - self.beta).abs() / 2.0
    }

    /// `|alpha + beta| / 2`
    pub fn b(&self) -> f64 {
        (self.alpha + self.beta).abs() / 2.0
    }
}

fn check_disc(z: Complex64) -> Result<()> {
    if z.norm() < 1.0 {
        Ok(())
    } else {
        Err(Error::OutsideDisc { z })
    }
}

/// The radicand of `H(inf, z)`, a rational function with no branch ambiguity.
pub fn h_infinity_sq(z: Complex64, p: TraceParams) -> Complex64 {
    let (al, be) = (p.alpha, p.beta);
    let d = ONE - z * z;
    let num = (ONE + z) * (ONE + z) * (al * be) + z * ((al - be) * (al - be));
    ONE + z * num * 4.0 / (d * d)
}

/// `H(inf, z)`, the Herglotz transform of the free (stationary) law.
///
/// Its real part is positive on the disc, so the principal square root is the
/// branch continuous from `H(inf, 0) = 1`.
pub fn h_infinity(z: Complex64, p: TraceParams) -> Result<Complex64> {
    check_disc(z)?;
    Ok(h_infinity_sq(z, p).sqrt())
}

/// Derivative of `H(inf, z)^2` in `z`.
pub fn h_infinity_sq_deriv(z: Complex64, p: TraceParams) -> Complex64 {
    let (al, be) = (p.alpha, p.beta);
    let d = ONE - z * z;
    let n = (ONE + z) * (ONE + z) * (al * be) + z * ((al - be) * (al - be));
    let dn = (ONE + z) * (2.0 * al * be) + (al - be) * (al - be);
    (n + z * dn) * 4.0 / (d * d) + z * z * n * 16.0 / (d * d * d)
}

/// Derivative of `H(inf, z)` in `z`.
pub fn h_infinity_deriv(z: Complex64, p: TraceParams) -> Result<Complex64> {
    let h = h_infinity(z, p)?;
    Ok(h_infinity_sq_deriv(z, p) / (h * 2.0))
}

/// `Phi(z) = a (1 - z)/(1 + z) + b (1 + z)/(1 - z)`, skipping zero-coefficient terms.
pub fn phi_weight(z: Complex64, p: TraceParams) -> Result<Complex64> {
    let (a, b) = (p.a(), p.b());
    let mut out = Complex64::new(0.0, 0.0);
    if a != 0.0 {
        if (ONE + z).norm() < 1e-14 {
            return Err(Error::Pole { z });
        }
        out += (ONE - z) / (ONE + z) * a;
    }
    if b != 0.0 {
        if (ONE - z).norm() < 1e-14 {
            return Err(Error::Pole { z });
        }
        out += (ONE + z) / (ONE - z) * b;
    }
    Ok(out)
}

/// `K = sqrt(H^2 - Phi^2)` with the principal branch.
///
/// Use [`k_eval_along`] when the value must be continued from `z = 0`.
pub fn k_eval(hval: Complex64, z: Complex64, p: TraceParams) -> Result<Complex64> {
    let ph = phi_weight(z, p)?;
    Ok((hval * hval - ph * ph).sqrt())
}

/// `K(z)` continued along the segment `[0, z]` in `steps` increments, starting from
/// `K(0) = sqrt(1 - (a + b)^2)`. `h` evaluates the Herglotz transform.
pub fn k_eval_along<F>(h: F, z: Complex64, p: TraceParams, steps: usize) -> Result<Complex64>
where
    F: Fn(Complex64) -> Result<Complex64>,
{
    let ab = p.a() + p.b();
    let mut prev = Complex64::new((1.0 - ab * ab).max(0.0).sqrt(), 0.0);
    let steps = steps.max(1);
    for k in 1..=steps {
        let zk = z * (k as f64 / steps as f64);
        let hv = h(zk)?;
        let ph = phi_weight(zk, p)?;
        prev = sqrt_near(hv * hv - ph * ph, prev);
    }
    Ok(prev)
}

/// The constant value `1 - (a + b)^2` of `H(inf, z)^2 - Phi(z)^2`.
pub fn k_infinity_constant(p: TraceParams) -> f64 {
    let ab = p.a() + p.b();
    1.0 - ab * ab
}

/// Square root of `sq` on the branch closest to `near`.
pub fn sqrt_near(sq: Complex64, near: Complex64) -> Complex64 {
    let r = sq.sqrt();
    if (r - near).norm() <= (r + near).norm() {
        r
    } else {
        -r
    }
}

/// The root `z` of `4z/(1+z)^2 = w` with `|z| < 1`.
pub fn disc_root(w: Complex64) -> Result<Complex64> {
    if w.norm() < 1e-300 {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let s = (ONE - w).sqrt() * 2.0;
    let base = Complex64::new(2.0, 0.0) - w;
    let z1 = (base + s) / w;
    let z2 = (base - s) / w;
    let z = if z1.norm() <= z2.norm() { z1 } else { z2 };
    if z.norm() < 1.0 && z.is_finite() {
        Ok(z)
    } else {
        Err(Error::BranchFailure { w })
    }
}

/// `w = 4z/(1+z)^2`, the map from the disc onto the slit plane.
pub fn slit_map(z: Complex64) -> Complex64 {
    z * 4.0 / ((ONE + z) * (ONE + z))
}

/// Herglotz transform of `mu_t` at `w` from the Herglotz transform of `nu_t`.
///
/// Uses the sign-corrected relation
/// `H(t, z) = (1 - z)/(1 + z) H_mu(4z/(1+z)^2) - 2 (alpha + beta) z / (1 - z^2)`,
/// which satisfies `H(t, 0) = 1`.
pub fn nu_to_mu_herglotz<F>(h_nu: F, p: TraceParams, w: Complex64) -> Result<Complex64>
where
    F: Fn(Complex64) -> Result<Complex64>,
{
    let z = disc_root(w)?;
    let hv = h_nu(z)?;
    Ok(mu_from_nu_value(hv, z, p))
}

/// `H_mu(4z/(1+z)^2)` from the value `H(t, z)`.
pub fn mu_from_nu_value(h_nu: Complex64, z: Complex64, p: TraceParams) -> Complex64 {
    let corr = z * (2.0 * (p.alpha + p.beta)) / (ONE - z * z);
    (h_nu + corr) * (ONE + z) / (ONE - z)
}

/// Herglotz transform of `nu_t` at `z` from the Herglotz transform of `mu_t`.
pub fn mu_to_nu_herglotz<F>(h_mu: F, p: TraceParams, z: Complex64) -> Result<Complex64>
where
    F: Fn(Complex64) -> Result<Complex64>,
{
    check_disc(z)?;
    let hm = h_mu(slit_map(z))?;
    let corr = z * (2.0 * (p.alpha + p.beta)) / (ONE - z * z);
    Ok(hm * (ONE - z) / (ONE + z) - corr)
}
